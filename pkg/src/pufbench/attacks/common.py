"""Shared pieces of the modeling attacks: Pearson correlation, reports, accuracy."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..crp import CrpDataset
from ..errors import InvalidParameterError, UndefinedCorrelationError

CONVERGED_HIGH = 0.9
CONVERGED_LOW = 0.1


def pearson(a, b) -> float:
    """Sample Pearson correlation of two equal-length, non-constant sequences."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise InvalidParameterError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise InvalidParameterError("correlation needs at least two samples")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(da @ da)
    nb = np.sqrt(db @ db)
    if na == 0 or nb == 0:
        raise UndefinedCorrelationError("correlation of a constant sequence is undefined")
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def pearson_rows(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Correlation of every row of ``A`` with ``b``; constant rows give 0."""
    A = np.asarray(A, dtype=np.float64)
    db = np.asarray(b, dtype=np.float64) - np.mean(b)
    nb = np.sqrt(db @ db)
    if nb == 0:
        raise UndefinedCorrelationError("correlation target is constant")
    dA = A - A.mean(axis=1, keepdims=True)
    nA = np.sqrt(np.einsum("ij,ij->i", dA, dA))
    cov = dA @ db
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(nA > 0, cov / (nA * nb), 0.0)
    return np.clip(r, -1.0, 1.0)


def is_converged(accuracy: float) -> bool:
    return accuracy > CONVERGED_HIGH or accuracy < CONVERGED_LOW


@dataclass
class AttackReport:
    accuracy: float
    wall_time: float
    trial_accuracies: list = field(default_factory=list)
    attributed_member: Optional[int] = None
    details: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return is_converged(self.accuracy)

    def as_dict(self) -> dict:
        return {
            "accuracy": float(self.accuracy),
            "converged": self.converged,
            "wall_time": float(self.wall_time),
            "attributed_member": self.attributed_member,
            "trial_accuracies": [float(a) for a in self.trial_accuracies],
            "details": self.details,
        }


def _phi_of(data) -> np.ndarray:
    if isinstance(data, CrpDataset):
        return data.features
    return np.asarray(data, dtype=np.float64)


def evaluate_accuracy(model, test: CrpDataset) -> float:
    """Share of test responses matched by thresholding ``model.predict_proba`` at 0.5."""
    if len(test) == 0:
        raise InvalidParameterError("empty test set")
    predicted = (model.predict_proba(test.features) > 0.5).astype(np.uint8)
    return float(np.mean(predicted == test.responses))


def agreement(a, b) -> float:
    return float(np.mean(np.asarray(a) == np.asarray(b)))
