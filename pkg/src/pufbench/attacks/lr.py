"""Logistic-regression modeling attack trained with iRPROP-."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..crp import CrpDataset
from ..errors import DivergedError, InvalidParameterError
from ..puf import parse_topology
from ..rng import RngLike, as_rng_seed
from .common import AttackReport, evaluate_accuracy
from .soft import SoftOaxModel, lr_loss


@dataclass
class LrConfig:
    restarts: int = 4
    max_iterations: int = 1000
    tolerance: float = 1e-7
    patience: int = 20
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    step_init: float = 0.01
    step_min: float = 1e-6
    step_max: float = 50.0
    stop_at_accuracy: Optional[float] = None
    holdout: int = 1000
    workers: int = 1

    def __post_init__(self):
        if self.restarts < 1 or self.max_iterations < 1:
            raise InvalidParameterError("restarts and max_iterations must be positive")
        if not (self.eta_plus > 1 and 0 < self.eta_minus < 1):
            raise InvalidParameterError("RPROP needs eta_plus > 1 and 0 < eta_minus < 1")
        if not 0 < self.step_min <= self.step_init <= self.step_max:
            raise InvalidParameterError("RPROP steps must satisfy 0 < step_min <= step_init <= step_max")


class Rprop:
    """iRPROP-: sign-based steps; a gradient sign change shrinks the step and skips the update."""

    def __init__(self, shape, config: LrConfig):
        self.cfg = config
        self.step = np.full(shape, config.step_init)
        self.prev = np.zeros(shape)

    def update(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        sign = grad * self.prev
        self.step = np.where(sign > 0, np.minimum(self.step * cfg.eta_plus, cfg.step_max), self.step)
        self.step = np.where(sign < 0, np.maximum(self.step * cfg.eta_minus, cfg.step_min), self.step)
        grad = np.where(sign < 0, 0.0, grad)
        self.prev = grad
        return params - np.sign(grad) * self.step


def fit_soft_model(phi, r, topology, config: LrConfig, rng: RngLike, restart: int = 0):
    """One RPROP run from a standard-normal start; returns (weights, final loss, iterations)."""
    gen = as_rng_seed(rng).generator()
    k = sum(topology)
    W = gen.standard_normal((k, phi.shape[1]))
    opt = Rprop(W.shape, config)
    best = np.inf
    stall = 0
    loss = np.nan
    it = 0
    for it in range(1, config.max_iterations + 1):
        loss, grad = lr_loss(W, phi, r, topology)
        if not (np.isfinite(loss) and np.isfinite(grad).all()):
            raise DivergedError(
                f"non-finite loss in restart {restart} at iteration {it}",
                {"restart": restart, "iteration": it, "loss": float(loss),
                 "max_step": float(opt.step.max()), "max_weight": float(np.abs(W).max())})
        if best - loss > config.tolerance:
            best, stall = loss, 0
        else:
            stall += 1
            if stall >= config.patience:
                break
        W = opt.update(W, grad)
    return W, float(loss), it


def _split(train: CrpDataset, test: Optional[CrpDataset], holdout: int):
    if test is not None:
        return train, test
    m = min(holdout, len(train) // 5)
    if m < 1:
        return train, train
    idx = np.arange(len(train))
    return train.subset(idx[:-m]), train.subset(idx[-m:])


def _check_train(train: CrpDataset):
    if len(train) == 0:
        raise InvalidParameterError("empty training set")


def lr_attack(train: CrpDataset, topology, config: Optional[LrConfig] = None,
              test: Optional[CrpDataset] = None, rng: RngLike = None):
    """Fit a soft OAX model by BCE minimization; keep the restart with the best test accuracy.

    Without ``test`` the last ``config.holdout`` training CRPs are held out.
    """
    cfg = config or LrConfig()
    topology = parse_topology(topology)
    _check_train(train)
    fit, held = _split(train, test, cfg.holdout)
    phi, r = fit.features, fit.responses.astype(np.float64)
    root = as_rng_seed(rng)
    start = time.perf_counter()

    def run(i):
        W, loss, iters = fit_soft_model(phi, r, topology, cfg, root.substream("lr-restart", i), i)
        model = SoftOaxModel(W, topology)
        return model, evaluate_accuracy(model, held), loss, iters

    results = []
    if cfg.workers > 1 and cfg.stop_at_accuracy is None:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(run, range(cfg.restarts)))
    else:
        for i in range(cfg.restarts):
            results.append(run(i))
            if cfg.stop_at_accuracy is not None and results[-1][1] >= cfg.stop_at_accuracy:
                break
    best = max(range(len(results)), key=lambda i: results[i][1])
    model = results[best][0]
    report = AttackReport(
        accuracy=results[best][1],
        wall_time=time.perf_counter() - start,
        trial_accuracies=[res[1] for res in results],
        details={"method": "lr", "loss": "binary cross-entropy", "optimizer": "iRPROP-",
                 "config": asdict(cfg), "topology": list(topology), "training_crps": len(fit),
                 "test_crps": len(held), "final_losses": [res[2] for res in results],
                 "iterations": [res[3] for res in results], "best_trial": best})
    return model, report
