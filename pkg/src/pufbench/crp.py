"""Challenge generation, CRP / reliability collection and the CRPB1 file format.

CRPB1 layout (ASCII, LF line endings)::

    CRPB1 {"n": 64, "count": 2, "repeats": 11, "topology": "2,2,1", ...}
    8f3a...e1<TAB>1<TAB>9
    04bc...77<TAB>0<TAB>0

The header is the version tag, one space and a JSON object.  Each record is
the challenge packed as hex (``c[0]`` is the most significant bit of the
first hex digit, zero padded on the right to a multiple of four bits), the
response digit and, when ``repeats > 0``, the count of '1' among the
repeated measurements.  ``sha256`` in the header covers the record lines.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (ChecksumMismatchError, InvalidParameterError, MalformedHeaderError,
                     MalformedRecordError, TruncatedDatasetError, UnsupportedVersionError)
from .puf import OaxPuf, Topology, format_topology, parse_topology, transform_challenge
from .rng import RngLike, as_generator

FORMAT_VERSION = "CRPB1"
TIE_RULE = "majority, ties to 0"


@dataclass(frozen=True, eq=False)
class CrpDataset:
    stage_count: int
    challenges: np.ndarray
    responses: np.ndarray
    repeats: int = 0
    one_counts: Optional[np.ndarray] = None
    topology: Optional[Topology] = None
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ch = np.array(self.challenges, dtype=np.uint8)
        if ch.ndim != 2 or ch.shape[1] != self.stage_count:
            raise InvalidParameterError(
                f"challenges must have shape (count, {self.stage_count}), got {ch.shape}")
        if ch.size and ch.max() > 1:
            raise InvalidParameterError("challenge bits must be 0 or 1")
        resp = np.array(self.responses, dtype=np.uint8).reshape(-1)
        if resp.size != ch.shape[0]:
            raise InvalidParameterError("challenges and responses differ in length")
        if resp.size and resp.max() > 1:
            raise InvalidParameterError("responses must be bits")
        counts = None
        if self.one_counts is not None:
            counts = np.array(self.one_counts, dtype=np.int64).reshape(-1)
            if counts.size != resp.size:
                raise InvalidParameterError("one_counts and responses differ in length")
            if self.repeats < 1:
                raise InvalidParameterError("one_counts require repeats >= 1")
            if counts.size and (counts.min() < 0 or counts.max() > self.repeats):
                raise InvalidParameterError(f"one_counts must lie in [0, {self.repeats}]")
            counts.setflags(write=False)
        elif self.repeats:
            raise InvalidParameterError("repeats > 0 requires one_counts")
        for arr in (ch, resp):
            arr.setflags(write=False)
        object.__setattr__(self, "challenges", ch)
        object.__setattr__(self, "responses", resp)
        object.__setattr__(self, "one_counts", counts)
        object.__setattr__(self, "repeats", int(self.repeats))
        object.__setattr__(self, "stage_count", int(self.stage_count))
        if self.topology is not None:
            object.__setattr__(self, "topology", parse_topology(self.topology))

    def __len__(self) -> int:
        return int(self.responses.size)

    @cached_property
    def features(self) -> np.ndarray:
        return transform_challenge(self.challenges).astype(np.float64)

    def reliability(self) -> "ReliabilityVector":
        if self.one_counts is None:
            raise InvalidParameterError("dataset carries no repeated measurements")
        return ReliabilityVector.from_counts(self.one_counts, self.repeats)

    def subset(self, index) -> "CrpDataset":
        return CrpDataset(
            self.stage_count, self.challenges[index], self.responses[index], self.repeats,
            None if self.one_counts is None else self.one_counts[index],
            self.topology, self.seed, dict(self.meta))

    def equals(self, other: "CrpDataset") -> bool:
        """Field-for-field equality, including provenance."""
        same_counts = (self.one_counts is None and other.one_counts is None) or (
            self.one_counts is not None and other.one_counts is not None
            and np.array_equal(self.one_counts, other.one_counts))
        return (self.stage_count == other.stage_count
                and np.array_equal(self.challenges, other.challenges)
                and np.array_equal(self.responses, other.responses)
                and self.repeats == other.repeats and same_counts
                and self.topology == other.topology and self.seed == other.seed
                and self.meta == other.meta)


@dataclass(frozen=True, eq=False)
class ReliabilityVector:
    """h_i = |m/2 - N_i| for every challenge."""

    h: np.ndarray
    m: int

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64).reshape(-1)
        if h.size and (h.min() < 0 or h.max() > self.m / 2):
            raise InvalidParameterError(f"reliability values must lie in [0, {self.m / 2}]")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @classmethod
    def from_counts(cls, one_counts, m: int) -> "ReliabilityVector":
        counts = np.asarray(one_counts, dtype=np.float64)
        return cls(np.abs(m / 2 - counts), int(m))

    def __len__(self) -> int:
        return int(self.h.size)


def generate_challenges(count: int, n: int, rng: RngLike = None) -> np.ndarray:
    """``count`` i.i.d. uniform n-bit challenges as a uint8 matrix; duplicates allowed."""
    if int(count) != count or count < 0:
        raise InvalidParameterError(f"challenge count must be a non-negative integer, got {count}")
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"stage count must be a positive integer, got {n}")
    return as_generator(rng).integers(0, 2, size=(int(count), int(n)), dtype=np.uint8)


def _check_stage(p: OaxPuf, cs: np.ndarray) -> np.ndarray:
    cs = np.asarray(cs, dtype=np.uint8)
    if cs.ndim != 2 or cs.shape[1] != p.stage_count:
        raise InvalidParameterError(
            f"challenges have {cs.shape[-1] if cs.ndim else 0} stages, PUF expects {p.stage_count}")
    return cs


def collect_crps(p: OaxPuf, cs, noisy: bool = False, rng: RngLike = None,
                 seed: Optional[int] = None) -> CrpDataset:
    cs = _check_stage(p, cs)
    responses = p.evaluate(transform_challenge(cs), noisy=noisy, rng=rng if noisy else None)
    meta = {"sigma_noise": [float(s) for s in p.sigma_noise], "noisy": bool(noisy)}
    return CrpDataset(p.stage_count, cs, np.atleast_1d(responses), topology=p.topology, seed=seed, meta=meta)


def collect_reliability(p: OaxPuf, cs, m: int = 11, rng: RngLike = None,
                        seed: Optional[int] = None) -> tuple[CrpDataset, ReliabilityVector]:
    """Query every challenge ``m`` times; the stored response is the majority bit."""
    if int(m) != m or m < 1:
        raise InvalidParameterError(f"repeat count m must be a positive integer, got {m}")
    cs = _check_stage(p, cs)
    phi = transform_challenge(cs)
    gen = as_generator(rng)
    ones = np.zeros(cs.shape[0], dtype=np.int64)
    for _ in range(int(m)):
        ones += p.evaluate(phi, noisy=True, rng=gen)
    majority = (2 * ones > m).astype(np.uint8)
    meta = {"sigma_noise": [float(s) for s in p.sigma_noise], "noisy": True, "response_rule": TIE_RULE}
    data = CrpDataset(p.stage_count, cs, majority, int(m), ones, p.topology, seed, meta)
    return data, ReliabilityVector.from_counts(ones, int(m))


def pack_challenge(bits: np.ndarray) -> str:
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-bits.size) % 4
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    nibbles = bits.reshape(-1, 4) @ np.array([8, 4, 2, 1], dtype=np.uint8)
    return "".join("0123456789abcdef"[v] for v in nibbles)


def unpack_challenge(text: str, n: int) -> np.ndarray:
    width = -(-n // 4)
    if len(text) != width:
        raise MalformedRecordError(f"challenge field has {len(text)} hex digits, expected {width}")
    try:
        value = np.array([int(ch, 16) for ch in text], dtype=np.uint8)
    except ValueError as exc:
        raise MalformedRecordError(f"challenge field {text!r} is not hex") from exc
    bits = ((value[:, None] >> np.array([3, 2, 1, 0], dtype=np.uint8)) & 1).reshape(-1)
    if bits[n:].any():
        raise MalformedRecordError(f"challenge field {text!r} has non-zero padding bits")
    return bits[:n]


def _records(d: CrpDataset) -> list[str]:
    lines = []
    for i in range(len(d)):
        fields = [pack_challenge(d.challenges[i]), str(int(d.responses[i]))]
        if d.repeats:
            fields.append(str(int(d.one_counts[i])))
        lines.append("\t".join(fields))
    return lines


def _checksum(lines: list[str]) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("ascii"))
        h.update(b"\n")
    return h.hexdigest()


def save_dataset(d: CrpDataset, path) -> Path:
    path = Path(path)
    records = _records(d)
    header = {
        "n": d.stage_count,
        "count": len(d),
        "repeats": d.repeats,
        "topology": None if d.topology is None else format_topology(d.topology),
        "seed": d.seed,
        "response_rule": d.meta.get("response_rule", TIE_RULE if d.repeats else "single evaluation"),
        "meta": d.meta,
        "sha256": _checksum(records),
    }
    text = FORMAT_VERSION + " " + json.dumps(header, sort_keys=True) + "\n"
    text += "".join(line + "\n" for line in records)
    path.write_bytes(text.encode("ascii"))
    return path


def _parse_header(line: str) -> dict:
    tag, _, payload = line.partition(" ")
    if not tag.startswith("CRPB"):
        raise MalformedHeaderError(f"not a CRPB file (header starts with {tag[:16]!r})")
    if tag != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported dataset version {tag!r}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise MalformedHeaderError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeaderError("header payload must be a JSON object")
    for key in ("n", "count", "repeats", "sha256"):
        if key not in header:
            raise MalformedHeaderError(f"header lacks required key {key!r}")
    if not (isinstance(header["n"], int) and header["n"] >= 1):
        raise MalformedHeaderError(f"invalid stage count {header['n']!r}")
    if not (isinstance(header["count"], int) and header["count"] >= 0):
        raise MalformedHeaderError(f"invalid record count {header['count']!r}")
    if not (isinstance(header["repeats"], int) and header["repeats"] >= 0):
        raise MalformedHeaderError(f"invalid repeat count {header['repeats']!r}")
    return header


def load_dataset(path) -> CrpDataset:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeaderError("dataset is not ASCII") from exc
    lines = text.split("\n")
    if not lines or not lines[0]:
        raise MalformedHeaderError("missing header line")
    header = _parse_header(lines[0])
    body = lines[1:]
    if body and body[-1] == "":
        body = body[:-1]
    n, count, repeats = header["n"], header["count"], header["repeats"]
    if len(body) < count:
        raise TruncatedDatasetError(f"header declares {count} records, body has {len(body)}")
    if len(body) > count:
        raise MalformedRecordError(f"header declares {count} records, body has {len(body)}")
    if _checksum(body) != header["sha256"]:
        raise ChecksumMismatchError("record checksum does not match header")
    expected_fields = 3 if repeats else 2
    challenges = np.zeros((count, n), dtype=np.uint8)
    responses = np.zeros(count, dtype=np.uint8)
    counts = np.zeros(count, dtype=np.int64) if repeats else None
    for i, line in enumerate(body):
        fields = line.split("\t")
        if len(fields) != expected_fields:
            raise MalformedRecordError(f"record {i} has {len(fields)} fields, expected {expected_fields}")
        challenges[i] = unpack_challenge(fields[0], n)
        if fields[1] not in ("0", "1"):
            raise MalformedRecordError(f"record {i} response {fields[1]!r} is not a bit")
        responses[i] = int(fields[1])
        if repeats:
            if not fields[2].isdigit():
                raise MalformedRecordError(f"record {i} one-count {fields[2]!r} is not an integer")
            counts[i] = int(fields[2])
    topology = header.get("topology")
    try:
        return CrpDataset(n, challenges, responses, repeats, counts,
                          None if topology is None else parse_topology(topology),
                          header.get("seed"), header.get("meta") or {})
    except InvalidParameterError as exc:
        raise MalformedRecordError(str(exc)) from exc
