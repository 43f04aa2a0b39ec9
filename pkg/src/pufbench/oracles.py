"""Brute-force reference implementations used to cross-check the fast code paths.

Nothing here imports the feature transform, the batched evaluation or the
correlation code it is meant to check; everything is plain Python loops.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import InvalidParameterError, UndefinedCorrelationError
from .puf import OaxPuf

MAX_ORACLE_STAGES = 12


def reference_features(challenge: Sequence[int]) -> list[int]:
    """Parity vector computed stage by stage from the right."""
    n = len(challenge)
    out = [1] * (n + 1)
    acc = 1
    for i in range(n - 1, -1, -1):
        acc *= -1 if challenge[i] else 1
        out[i] = acc
    return out


def reference_member_bit(weights: Sequence[float], challenge: Sequence[int]) -> int:
    total = 0.0
    for wi, fi in zip(weights, reference_features(challenge)):
        total += float(wi) * fi
    return 1 if total < 0 else 0


def reference_oax_bit(p: OaxPuf, challenge: Sequence[int]) -> int:
    x, y, z = p.topology
    bits = [reference_member_bit(m.weights.tolist(), challenge) for m in p.members]
    or_bit = 0
    for b in bits[:x]:
        or_bit = or_bit or b
    and_bit = 0
    if y:
        and_bit = 1
        for b in bits[x:x + y]:
            and_bit = and_bit and b
    xor_bit = 0
    for b in bits[x + y:]:
        xor_bit ^= b
    return int(or_bit) ^ int(and_bit) ^ xor_bit


@dataclass(frozen=True)
class ExhaustiveTruthTable:
    stage_count: int
    challenges: tuple[tuple[int, ...], ...]
    responses: tuple[int, ...]
    member_responses: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.responses)


def exhaustive_responses(p: OaxPuf) -> ExhaustiveTruthTable:
    """Noiseless responses of ``p`` (and of each member) for all 2^n challenges."""
    n = p.stage_count
    if n > MAX_ORACLE_STAGES:
        raise InvalidParameterError(f"exhaustive evaluation is limited to n <= {MAX_ORACLE_STAGES}, got {n}")
    challenges = tuple(itertools.product((0, 1), repeat=n))
    weights = [m.weights.tolist() for m in p.members]
    members = tuple(tuple(reference_member_bit(w, c) for w in weights) for c in challenges)
    responses = tuple(reference_oax_bit(p, c) for c in challenges)
    return ExhaustiveTruthTable(n, challenges, responses, members)


def reference_pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Textbook sample correlation from running sums, accumulated with math.fsum."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if len(a) != len(b):
        raise InvalidParameterError("length mismatch")
    n = len(a)
    if n < 2:
        raise InvalidParameterError("correlation needs at least two samples")
    ma = math.fsum(a) / n
    mb = math.fsum(b) / n
    sab = math.fsum((x - ma) * (y - mb) for x, y in zip(a, b))
    saa = math.fsum((x - ma) ** 2 for x in a)
    sbb = math.fsum((y - mb) ** 2 for y in b)
    if saa == 0 or sbb == 0:
        raise UndefinedCorrelationError("correlation of a constant sequence is undefined")
    return max(-1.0, min(1.0, sab / math.sqrt(saa * sbb)))
