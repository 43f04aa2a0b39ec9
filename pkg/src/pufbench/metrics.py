"""Closed-form reliability and uniformity of OAX-PUFs, plus Monte-Carlo estimators.

The analytic block BERs assume every member flips independently with the
same probability ``beta`` and has uniform responses.  :func:`exact_flip_oracle`
enumerates the same model exactly, which exposes the gap between the
averaged OR/AND flip factor and the true block flip probability.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb, sqrt

import numpy as np

from .errors import InvalidParameterError
from .puf import OaxPuf, parse_topology, transform_challenge
from .rng import RngLike, as_rng_seed

SINGULARITY_TOL = 1e-9
DEFAULT_CHUNK = 20_000


def _check_beta(beta: float) -> float:
    if not 0.0 <= beta <= 1.0:
        raise InvalidParameterError(f"beta must lie in [0, 1], got {beta}")
    return float(beta)


def _check_size(size: int, name: str) -> int:
    if int(size) != size or size < 1:
        raise InvalidParameterError(f"{name} must be a positive integer, got {size}")
    return int(size)


def or_and_summation(size: int, beta: float) -> float:
    """Summation form: sum_i (C(s,i)+1)/((s+1) C(s,i)) * C(s,i) beta^i (1-beta)^(s-i)."""
    size = _check_size(size, "block size")
    beta = _check_beta(beta)
    total = 0.0
    for i in range(1, size + 1):
        c = comb(size, i)
        total += (c + 1) / ((size + 1) * c) * c * beta**i * (1 - beta) ** (size - i)
    return total


def beta_or(x: int, beta: float) -> float:
    """BER of an x-input OR block under the averaged flip model."""
    x = _check_size(x, "x")
    beta = _check_beta(beta)
    if abs(2 * beta - 1) < SINGULARITY_TOL:
        # removable singularity of the closed form
        return or_and_summation(x, beta)
    q = 1.0 - beta
    return (1.0 - q**x + beta * (beta**x - q**x) / (2 * beta - 1)) / (x + 1)


def beta_and(y: int, beta: float) -> float:
    """BER of a y-input AND block; identical to the OR block by 0/1 relabeling."""
    return beta_or(y, beta)


def beta_xor(z: int, beta: float) -> float:
    z = _check_size(z, "z")
    beta = _check_beta(beta)
    return (1.0 - (1.0 - 2.0 * beta) ** z) / 2.0


def combine_flip_probabilities(a: float, b: float, c: float) -> float:
    """Output flips iff an odd number of the three block outputs flip."""
    return a * b * c + a * (1 - b) * (1 - c) + b * (1 - a) * (1 - c) + c * (1 - a) * (1 - b)


def beta_oax(x: int, y: int, z: int, beta: float) -> float:
    x, y, z = parse_topology((x, y, z))
    beta = _check_beta(beta)
    a = beta_or(x, beta) if x else 0.0
    b = beta_and(y, beta) if y else 0.0
    c = beta_xor(z, beta) if z else 0.0
    return combine_flip_probabilities(a, b, c)


@dataclass(frozen=True)
class BlockBer:
    beta: float
    x: int
    y: int
    z: int
    beta_or: float
    beta_and: float
    beta_xor: float
    beta_oax: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def block_ber(x: int, y: int, z: int, beta: float) -> BlockBer:
    x, y, z = parse_topology((x, y, z))
    return BlockBer(
        beta=float(beta), x=x, y=y, z=z,
        beta_or=beta_or(x, beta) if x else 0.0,
        beta_and=beta_and(y, beta) if y else 0.0,
        beta_xor=beta_xor(z, beta) if z else 0.0,
        beta_oax=beta_oax(x, y, z, beta),
    )


@dataclass(frozen=True)
class UniformityProfile:
    u_or0: float
    u_or1: float
    u_and0: float
    u_and1: float
    u_xor0: float
    u_xor1: float
    u0: float
    u1: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def uniformity_profile(x: int, y: int, z: int) -> UniformityProfile:
    """Probability of 0/1 per block and overall, for members with uniformity 1/2.

    An empty block outputs constant 0, i.e. probability of 0 equal to one.
    ``u1`` is the explicit four-term expansion (odd number of block outputs
    equal to 1), not a hard-coded 1/2.
    """
    x, y, z = parse_topology((x, y, z))
    u_or0 = 0.5**x if x else 1.0
    u_and1 = 0.5**y if y else 0.0
    u_xor0 = 0.5 if z else 1.0
    u_or1, u_and0, u_xor1 = 1.0 - u_or0, 1.0 - u_and1, 1.0 - u_xor0
    u1 = (u_or1 * u_and1 * u_xor1
          + u_or1 * u_and0 * u_xor0
          + u_and1 * u_or0 * u_xor0
          + u_xor1 * u_and0 * u_or0)
    return UniformityProfile(u_or0, u_or1, u_and0, u_and1, u_xor0, u_xor1, 1.0 - u1, u1)


_BLOCK_FUNCS = {
    "or": lambda s: int(any(s)),
    "and": lambda s: int(all(s)),
    "xor": lambda s: sum(s) % 2,
}


def exact_flip_oracle(block_kind: str, size: int, beta: float) -> float:
    """Exact block BER by enumerating all response states and flip patterns.

    Response states are equiprobable; each member flips independently with
    probability ``beta``.
    """
    kind = str(block_kind).lower()
    if kind not in _BLOCK_FUNCS:
        raise InvalidParameterError(f"block kind must be OR, AND or XOR, got {block_kind!r}")
    if int(size) != size or not 1 <= size <= 6:
        raise InvalidParameterError(f"oracle block size must be in [1, 6], got {size}")
    beta = _check_beta(beta)
    f = _BLOCK_FUNCS[kind]
    size = int(size)
    total = 0.0
    patterns = list(itertools.product((0, 1), repeat=size))
    for state in patterns:
        before = f(state)
        for flips in patterns:
            weight = 1.0
            for bit in flips:
                weight *= beta if bit else 1.0 - beta
            after = f(tuple(s ^ t for s, t in zip(state, flips)))
            if after != before:
                total += weight
    return total / len(patterns)


def exact_beta_oax(x: int, y: int, z: int, beta: float) -> float:
    """OAX BER with each block's flip probability taken from exact enumeration."""
    x, y, z = parse_topology((x, y, z))
    a = exact_flip_oracle("or", x, beta) if x else 0.0
    b = exact_flip_oracle("and", y, beta) if y else 0.0
    c = exact_flip_oracle("xor", z, beta) if z else 0.0
    return combine_flip_probabilities(a, b, c)


@dataclass(frozen=True)
class EmpiricalEstimate:
    """Proportion estimate with the counts behind it."""

    value: float
    sample_count: int
    repeats: int = 1

    @property
    def trials(self) -> int:
        return self.sample_count * self.repeats

    @property
    def standard_error(self) -> float:
        """Binomial standard error over all (challenge, repeat) trials."""
        p = self.value
        return sqrt(max(p * (1 - p), 0.0) / self.trials)

    def interval(self, z: float = 1.96) -> tuple[float, float]:
        """Wilson score interval."""
        n = self.trials
        p = self.value
        denom = 1 + z * z / n
        centre = (p + z * z / (2 * n)) / denom
        half = z * sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
        return max(0.0, centre - half), min(1.0, centre + half)

    def as_dict(self) -> dict:
        lo, hi = self.interval()
        return {"value": self.value, "sample_count": self.sample_count, "repeats": self.repeats,
                "stderr": self.standard_error, "ci95": [lo, hi]}


def _chunks(total: int, chunk: int):
    start = 0
    index = 0
    while start < total:
        size = min(chunk, total - start)
        yield index, size
        start += size
        index += 1


def _random_phi(gen: np.random.Generator, count: int, n: int) -> np.ndarray:
    return transform_challenge(gen.integers(0, 2, size=(count, n), dtype=np.int8))


def measure_ber(p: OaxPuf, num_challenges: int, repeats: int = 1, rng: RngLike = None,
                chunk: int = DEFAULT_CHUNK) -> EmpiricalEstimate:
    """Fraction of noisy (challenge, repeat) evaluations that differ from the noiseless response."""
    num_challenges = _check_size(num_challenges, "num_challenges")
    repeats = _check_size(repeats, "repeats")
    root = as_rng_seed(rng)
    flips = 0
    for index, size in _chunks(num_challenges, chunk):
        gen = root.substream("ber", index).generator()
        phi = _random_phi(gen, size, p.stage_count)
        reference = p.evaluate(phi)
        for _ in range(repeats):
            flips += int(np.count_nonzero(p.evaluate(phi, noisy=True, rng=gen) != reference))
    return EmpiricalEstimate(flips / (num_challenges * repeats), num_challenges, repeats)


def measure_member_ber(p: OaxPuf, num_challenges: int, repeats: int = 1, rng: RngLike = None,
                       chunk: int = DEFAULT_CHUNK) -> list[EmpiricalEstimate]:
    """Per-member flip rate against the noiseless member response."""
    num_challenges = _check_size(num_challenges, "num_challenges")
    repeats = _check_size(repeats, "repeats")
    root = as_rng_seed(rng)
    flips = np.zeros(len(p.members), dtype=np.int64)
    for index, size in _chunks(num_challenges, chunk):
        gen = root.substream("member-ber", index).generator()
        phi = _random_phi(gen, size, p.stage_count)
        reference = p.member_responses(phi)
        for _ in range(repeats):
            flips += np.count_nonzero(p.member_responses(phi, noisy=True, rng=gen) != reference, axis=0)
    total = num_challenges * repeats
    return [EmpiricalEstimate(int(f) / total, num_challenges, repeats) for f in flips]


def measure_instability(p: OaxPuf, num_challenges: int, repeats: int = 11, rng: RngLike = None,
                        chunk: int = DEFAULT_CHUNK, members: bool = False):
    """Fraction of challenges whose ``repeats`` noisy responses are not all equal.

    With ``members=True`` a list with one estimate per member APUF is returned.
    """
    num_challenges = _check_size(num_challenges, "num_challenges")
    repeats = _check_size(repeats, "repeats")
    root = as_rng_seed(rng)
    k = len(p.members)
    unstable = np.zeros(k if members else 1, dtype=np.int64)
    for index, size in _chunks(num_challenges, chunk):
        gen = root.substream("instability", index).generator()
        phi = _random_phi(gen, size, p.stage_count)
        ones = np.zeros((size, k) if members else (size,), dtype=np.int64)
        for _ in range(repeats):
            if members:
                ones += p.member_responses(phi, noisy=True, rng=gen)
            else:
                ones += p.evaluate(phi, noisy=True, rng=gen)
        counts = np.count_nonzero((ones > 0) & (ones < repeats), axis=0)
        unstable += np.atleast_1d(counts)
    estimates = [EmpiricalEstimate(int(u) / num_challenges, num_challenges, 1) for u in unstable]
    return estimates if members else estimates[0]


def measure_uniformity(p: OaxPuf, num_challenges: int, rng: RngLike = None,
                       chunk: int = DEFAULT_CHUNK) -> EmpiricalEstimate:
    """Fraction of noiseless responses equal to 0 over uniform random challenges."""
    num_challenges = _check_size(num_challenges, "num_challenges")
    root = as_rng_seed(rng)
    zeros = 0
    for index, size in _chunks(num_challenges, chunk):
        gen = root.substream("uniformity", index).generator()
        phi = _random_phi(gen, size, p.stage_count)
        zeros += int(np.count_nonzero(p.evaluate(phi) == 0))
    return EmpiricalEstimate(zeros / num_challenges, num_challenges, 1)


def measure_block_uniformity(p: OaxPuf, num_challenges: int, rng: RngLike = None) -> UniformityProfile:
    """Empirical counterpart of :func:`uniformity_profile` on noiseless responses."""
    num_challenges = _check_size(num_challenges, "num_challenges")
    gen = as_rng_seed(rng).substream("block-uniformity").generator()
    phi = _random_phi(gen, num_challenges, p.stage_count)
    bits = p.member_responses(phi)
    x, y, _ = p.topology
    r_or = np.bitwise_or.reduce(bits[:, :x], axis=1) if x else np.zeros(num_challenges, np.uint8)
    r_and = np.bitwise_and.reduce(bits[:, x:x + y], axis=1) if y else np.zeros(num_challenges, np.uint8)
    r_xor = np.bitwise_xor.reduce(bits[:, x + y:], axis=1) if p.topology[2] else np.zeros(num_challenges, np.uint8)
    r = r_or ^ r_and ^ r_xor
    u_or0, u_and0, u_xor0, u0 = (float(np.mean(v == 0)) for v in (r_or, r_and, r_xor, r))
    return UniformityProfile(u_or0, 1 - u_or0, u_and0, 1 - u_and0, u_xor0, 1 - u_xor0, u0, 1 - u0)


def measure_reliability(p: OaxPuf, c, M: int = 11, rng: RngLike = None) -> float:
    """Short-term reliability N/M: share of '1' among M noisy evaluations of one challenge."""
    M = _check_size(M, "M")
    phi = transform_challenge(c)
    if phi.ndim != 1:
        raise InvalidParameterError("measure_reliability takes a single challenge")
    gen = as_rng_seed(rng).substream("reliability").generator()
    batch = np.broadcast_to(phi, (M, phi.size))
    return reliability_ratio(int(np.sum(p.evaluate(batch, noisy=True, rng=gen))), M)


def reliability_ratio(ones: int, M: int) -> float:
    if not 0 <= ones <= M:
        raise InvalidParameterError(f"one-count {ones} outside [0, {M}]")
    return ones / M
