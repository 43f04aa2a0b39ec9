"""Deterministic random streams.

Every random draw in pufbench comes from a :class:`RngSeed`, a root seed plus
a stream id.  Substreams are derived by hashing labels into the numpy
``SeedSequence`` spawn key, so the draws of a given substream never depend on
how many other streams were consumed first, or on which worker consumed them.
"""
from __future__ import annotations

import os
import zlib
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidParameterError

SEED_ENV_VAR = "PUFBENCH_SEED"
_U64 = 2**64


def _label_key(label) -> int:
    if isinstance(label, (bool, np.bool_)):
        raise InvalidParameterError("boolean is not a valid stream label")
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise InvalidParameterError(f"stream label must be non-negative, got {label}")
        return int(label)
    if isinstance(label, str):
        # crc32 is stable across interpreter runs, unlike hash()
        return zlib.crc32(label.encode("utf-8"))
    raise InvalidParameterError(f"unsupported stream label {label!r}")


@dataclass(frozen=True)
class RngSeed:
    """A root seed and a stream id; identical pairs reproduce identical draws."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < _U64:
            raise InvalidParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.stream_id) < 0:
            raise InvalidParameterError(f"stream_id must be non-negative, got {self.stream_id}")

    def substream(self, *labels) -> "RngSeed":
        """Derive a child stream. ``labels`` may be non-negative ints or strings."""
        keys = tuple(_label_key(label) for label in labels)
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),) + keys)
        child = int(seq.generate_state(1, dtype=np.uint64)[0])
        return RngSeed(self.seed, child)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(seq))


RngLike = Union[RngSeed, int, np.random.Generator, None]


def as_rng_seed(rng: RngLike) -> RngSeed:
    if isinstance(rng, RngSeed):
        return rng
    if rng is None:
        return RngSeed(resolve_seed(None))
    if isinstance(rng, (int, np.integer)):
        return RngSeed(int(rng))
    raise InvalidParameterError(f"cannot derive a seeded stream from {type(rng).__name__}")


def as_generator(rng: RngLike) -> np.random.Generator:
    """Accept a seed, an :class:`RngSeed` or an existing generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return as_rng_seed(rng).generator()


def resolve_seed(explicit: int | None, default: int = 0) -> int:
    """Explicit seed wins; otherwise ``PUFBENCH_SEED``; otherwise ``default``."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get(SEED_ENV_VAR)
    if env not in (None, ""):
        try:
            return int(env, 0)
        except ValueError as exc:
            raise InvalidParameterError(f"{SEED_ENV_VAR}={env!r} is not an integer") from exc
    return int(default)
