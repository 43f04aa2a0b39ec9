"""Arbiter PUF simulation under the linear additive delay model.

An n-stage arbiter PUF is a weight vector ``w`` of length n+1.  A challenge
``c`` is mapped to the parity vector ``phi`` and the response is 1 iff the
delay difference ``w . phi`` is negative.  An (x, y, z)-OAX-PUF ORs x
members, ANDs y members, XORs z members and XORs the three block outputs.

All evaluation functions accept a single feature vector of shape ``(n+1,)``
or a batch of shape ``(N, n+1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from .errors import InvalidParameterError
from .rng import RngLike, as_generator, as_rng_seed

Topology = Tuple[int, int, int]


def parse_topology(value) -> Topology:
    """Accept ``"x,y,z"`` or a 3-sequence; reject negative and empty topologies."""
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",")]
    else:
        parts = list(value)
    if len(parts) != 3:
        raise InvalidParameterError(f"topology must have three entries x,y,z, got {value!r}")
    try:
        x, y, z = (int(p) for p in parts)
    except (TypeError, ValueError) as exc:
        raise InvalidParameterError(f"topology entries must be integers, got {value!r}") from exc
    if min(x, y, z) < 0:
        raise InvalidParameterError(f"topology entries must be non-negative, got {value!r}")
    if x + y + z < 1:
        raise InvalidParameterError("empty topology: x + y + z must be at least 1")
    return x, y, z


def format_topology(topology: Topology) -> str:
    return ",".join(str(int(v)) for v in topology)


def _as_challenges(c) -> np.ndarray:
    arr = np.asarray(c)
    if arr.ndim not in (1, 2) or arr.shape[-1] < 1:
        raise InvalidParameterError(f"challenge array must be 1-D or 2-D and non-empty, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise InvalidParameterError("challenge bits must be 0 or 1")
    return arr.astype(np.int8, copy=False)


def transform_challenge(c) -> np.ndarray:
    """Parity vector: ``phi[n] = 1`` and ``phi[i] = prod_{j>=i} (1 - 2 c[j])``."""
    bits = _as_challenges(c)
    signs = 1 - 2 * bits
    # suffix products along the stage axis
    phi = np.cumprod(signs[..., ::-1], axis=-1, dtype=np.int8)[..., ::-1]
    ones = np.ones(bits.shape[:-1] + (1,), dtype=np.int8)
    return np.concatenate([phi, ones], axis=-1)


@dataclass(frozen=True, eq=False)
class ApufInstance:
    """One simulated arbiter PUF; immutable after construction."""

    weights: np.ndarray
    sigma_noise: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 2:
            raise InvalidParameterError(f"weights must be a vector of length n+1 >= 2, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise InvalidParameterError("weights must be finite")
        if not (self.sigma_noise >= 0 and np.isfinite(self.sigma_noise)):
            raise InvalidParameterError(f"sigma_noise must be a non-negative real, got {self.sigma_noise}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "sigma_noise", float(self.sigma_noise))

    @property
    def stage_count(self) -> int:
        return self.weights.size - 1

    def with_noise(self, sigma_noise: float) -> "ApufInstance":
        return ApufInstance(self.weights, sigma_noise)


def sample_apuf(n: int, sigma_noise: float = 0.05, rng: RngLike = None) -> ApufInstance:
    """Draw n+1 i.i.d. standard normal weights."""
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"stage count must be a positive integer, got {n}")
    gen = as_generator(rng)
    return ApufInstance(gen.standard_normal(int(n) + 1), sigma_noise)


def _check_phi(phi, stage_count: int) -> np.ndarray:
    arr = np.asarray(phi)
    if arr.ndim not in (1, 2) or arr.shape[-1] != stage_count + 1:
        raise InvalidParameterError(
            f"feature vectors must have length {stage_count + 1}, got shape {arr.shape}")
    return arr


def _noise(sigma: float, n_plus_1: int, shape, gen: np.random.Generator) -> np.ndarray:
    # eta . phi with eta ~ N(0, sigma^2 I) and phi in {-1,1}^(n+1) is exactly
    # N(0, sigma^2 (n+1)); drawing the scalar avoids an (N, n+1) noise matrix.
    return gen.normal(0.0, sigma * np.sqrt(n_plus_1), size=shape)


def delay_delta(a: ApufInstance, phi, noisy: bool = False, rng: RngLike = None):
    """Delay difference ``(w + eta) . phi``; eta is fresh per evaluation when noisy."""
    arr = _check_phi(phi, a.stage_count)
    delta = arr @ a.weights
    if noisy and a.sigma_noise > 0:
        delta = delta + _noise(a.sigma_noise, a.weights.size, np.shape(delta), as_generator(rng))
    return delta if np.ndim(delta) else float(delta)


def response_from_delta(delta):
    """1 if delta < 0 else 0 (delta == 0 maps to 0)."""
    out = (np.asarray(delta) < 0).astype(np.uint8)
    return out if out.ndim else int(out)


def eval_apuf(a: ApufInstance, phi, noisy: bool = False, rng: RngLike = None):
    return response_from_delta(delay_delta(a, phi, noisy, rng))


def combine_blocks(bits: np.ndarray, topology: Topology) -> np.ndarray:
    """Fold member bits ``(..., k)`` into OAX output bits ``(...)``.

    Empty OR and AND blocks contribute 0, so (0, 0, l) is the plain l-XOR.
    """
    x, y, z = topology
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] != x + y + z:
        raise InvalidParameterError(f"expected {x + y + z} member bits, got {bits.shape[-1]}")
    out = np.zeros(bits.shape[:-1], dtype=np.uint8)
    if x:
        out ^= np.bitwise_or.reduce(bits[..., :x], axis=-1)
    if y:
        out ^= np.bitwise_and.reduce(bits[..., x:x + y], axis=-1)
    if z:
        out ^= np.bitwise_xor.reduce(bits[..., x + y:], axis=-1)
    return out


@dataclass(frozen=True, eq=False)
class OaxPuf:
    """(x, y, z)-OAX-PUF: members are ordered OR block, AND block, XOR block."""

    or_block: Tuple[ApufInstance, ...] = ()
    and_block: Tuple[ApufInstance, ...] = ()
    xor_block: Tuple[ApufInstance, ...] = ()
    _weights: np.ndarray = field(init=False, repr=False)
    _sigmas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        blocks = tuple(tuple(b) for b in (self.or_block, self.and_block, self.xor_block))
        members = blocks[0] + blocks[1] + blocks[2]
        if not members:
            raise InvalidParameterError("empty topology: at least one member APUF is required")
        stages = {m.stage_count for m in members}
        if len(stages) != 1:
            raise InvalidParameterError(f"all members must share one stage count, got {sorted(stages)}")
        object.__setattr__(self, "or_block", blocks[0])
        object.__setattr__(self, "and_block", blocks[1])
        object.__setattr__(self, "xor_block", blocks[2])
        weights = np.stack([m.weights for m in members])
        weights.setflags(write=False)
        sigmas = np.array([m.sigma_noise for m in members])
        sigmas.setflags(write=False)
        object.__setattr__(self, "_weights", weights)
        object.__setattr__(self, "_sigmas", sigmas)

    @classmethod
    def from_members(cls, members: Sequence[ApufInstance], topology) -> "OaxPuf":
        x, y, z = parse_topology(topology)
        members = list(members)
        if len(members) != x + y + z:
            raise InvalidParameterError(f"topology {x},{y},{z} needs {x + y + z} members, got {len(members)}")
        return cls(tuple(members[:x]), tuple(members[x:x + y]), tuple(members[x + y:]))

    @classmethod
    def sample(cls, topology, n: int = 64, sigma_noise: float = 0.05, rng: RngLike = None) -> "OaxPuf":
        """Sample every member; member i uses its own substream when ``rng`` is an RngSeed."""
        x, y, z = parse_topology(topology)
        if isinstance(rng, np.random.Generator):
            members = [sample_apuf(n, sigma_noise, rng) for _ in range(x + y + z)]
        else:
            root = as_rng_seed(rng)
            members = [sample_apuf(n, sigma_noise, root.substream("member", i)) for i in range(x + y + z)]
        return cls.from_members(members, (x, y, z))

    @property
    def topology(self) -> Topology:
        return len(self.or_block), len(self.and_block), len(self.xor_block)

    @property
    def members(self) -> Tuple[ApufInstance, ...]:
        return self.or_block + self.and_block + self.xor_block

    @property
    def stage_count(self) -> int:
        return self._weights.shape[1] - 1

    @property
    def weight_matrix(self) -> np.ndarray:
        return self._weights

    @property
    def sigma_noise(self) -> np.ndarray:
        return self._sigmas

    def block_of(self, index: int) -> str:
        x, y, _ = self.topology
        if index < x:
            return "or"
        if index < x + y:
            return "and"
        return "xor"

    def with_noise(self, sigma_noise) -> "OaxPuf":
        sig = np.broadcast_to(np.asarray(sigma_noise, dtype=float), (len(self.members),))
        return OaxPuf.from_members([m.with_noise(s) for m, s in zip(self.members, sig)], self.topology)

    def member_deltas(self, phi, noisy: bool = False, rng: RngLike = None) -> np.ndarray:
        """Delay differences of every member, shape ``(..., k)``; noise independent per member."""
        arr = _check_phi(phi, self.stage_count)
        deltas = arr @ self._weights.T
        if noisy and np.any(self._sigmas > 0):
            gen = as_generator(rng)
            deltas = deltas + gen.standard_normal(deltas.shape) * (self._sigmas * np.sqrt(self._weights.shape[1]))
        return deltas

    def member_responses(self, phi, noisy: bool = False, rng: RngLike = None) -> np.ndarray:
        return (self.member_deltas(phi, noisy, rng) < 0).astype(np.uint8)

    def evaluate(self, phi, noisy: bool = False, rng: RngLike = None):
        out = combine_blocks(self.member_responses(phi, noisy, rng), self.topology)
        return out if out.ndim else int(out)


def eval_oax(p: OaxPuf, phi, noisy: bool = False, rng: RngLike = None):
    return p.evaluate(phi, noisy, rng)


def sigma_for_ber(target_ber: float, weights=None, n: int | None = None) -> float:
    """Per-weight noise sigma giving an expected flip rate ``target_ber``.

    Over uniform challenges ``w . phi`` is close to N(0, |w|^2) and the noise
    term is N(0, sigma^2 (n+1)), so the flip probability against the
    noiseless response is ``atan(sigma sqrt(n+1) / |w|) / pi``.
    """
    if not 0 <= target_ber < 0.5:
        raise InvalidParameterError(f"target BER must be in [0, 0.5), got {target_ber}")
    if weights is None:
        if n is None:
            raise InvalidParameterError("either weights or n is required")
        # E|w|^2 = n+1 for standard normal weights
        scale = 1.0
    else:
        w = np.asarray(weights, dtype=float)
        scale = float(np.linalg.norm(w) / np.sqrt(w.size))
    return float(np.tan(np.pi * target_ber) * scale)


def calibrate_noise(p: OaxPuf, target_ber: float) -> OaxPuf:
    """Return a copy of ``p`` whose every member has expected flip rate ``target_ber``."""
    return p.with_noise([sigma_for_ber(target_ber, m.weights) for m in p.members])



def expected_instability(weights, phi, sigma: float, repeats: int) -> float:
    """Expected share of the challenges ``phi`` whose ``repeats`` noisy reads disagree.

    A read flips against the noiseless response with probability
    ``Phi(-|w . phi| / (sigma sqrt(n+1)))``; a challenge is stable only if all
    reads agree.
    """
    w = np.asarray(weights, dtype=np.float64)
    if sigma == 0:
        return 0.0
    z = np.abs(np.asarray(phi, dtype=np.float64) @ w) / (sigma * np.sqrt(w.size) * np.sqrt(2.0))
    flip = 0.5 * _erfc(z)
    return float(np.mean(1.0 - (1.0 - flip) ** repeats - flip ** repeats))


_erfc = np.frompyfunc(math.erfc, 1, 1)


def sigma_for_instability(weights, target: float, repeats: int = 11, num_challenges: int = 20_000,
                          rng: RngLike = None) -> float:
    """Noise sigma at which one APUF's expected ``repeats``-read instability equals ``target``.

    Solved by bisection on a fixed challenge sample, so the result is
    deterministic for a given ``rng``.
    """
    if not 0 < target < 1:
        raise InvalidParameterError(f"target instability must be in (0, 1), got {target}")
    if repeats < 2:
        raise InvalidParameterError("instability needs at least two repeats")
    w = np.asarray(weights, dtype=np.float64)
    gen = as_generator(rng)
    phi = transform_challenge(gen.integers(0, 2, size=(num_challenges, w.size - 1), dtype=np.uint8))
    lo, hi = 1e-8, 1e3
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        if expected_instability(w, phi, mid, repeats) < target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def calibrate_instability(p: OaxPuf, target: float, repeats: int = 11, rng: RngLike = None) -> OaxPuf:
    """Copy of ``p`` with each member's noise tuned to ``repeats``-read instability ``target``."""
    root = as_rng_seed(rng)
    return p.with_noise([sigma_for_instability(m.weights, target, repeats, rng=root.substream("calibrate", j))
                         for j, m in enumerate(p.members)])
