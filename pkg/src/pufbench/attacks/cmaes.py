"""Reliability-based CMA-ES attack.

Each run searches over ``(w, eps)`` for the model whose hypothetical
stability ``|w . phi| >= eps`` best correlates with the measured
reliability ``h``.  Reliability only leaks the magnitude of the delay
difference, so every run converges to one member APUF (divide and conquer)
up to the sign of ``w``.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..crp import CrpDataset, ReliabilityVector
from ..errors import InvalidParameterError, UndefinedCorrelationError
from ..puf import OaxPuf, transform_challenge
from ..rng import RngLike, as_rng_seed
from .common import AttackReport, agreement, is_converged, pearson

ATTRIBUTION_CRPS = 10_000
ATTRIBUTION_THRESHOLD = 0.9


class Cmaes:
    """Minimizing (mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu covariance updates."""

    def __init__(self, mean, sigma: float, rng: np.random.Generator, popsize: Optional[int] = None):
        self.mean = np.array(mean, dtype=np.float64)
        self.sigma = float(sigma)
        self.rng = rng
        N = self.dim = self.mean.size
        self.lam = popsize or 4 + int(3 * math.log(N))
        self.mu = self.lam // 2
        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)
        self.cc = (4 + self.mueff / N) / (N + 4 + 2 * self.mueff / N)
        self.cs = (self.mueff + 2) / (N + self.mueff + 5)
        self.c1 = 2 / ((N + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((N + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (N + 1)) - 1) + self.cs
        self.chiN = math.sqrt(N) * (1 - 1 / (4 * N) + 1 / (21 * N * N))
        self.pc = np.zeros(N)
        self.ps = np.zeros(N)
        self.C = np.eye(N)
        self.B = np.eye(N)
        self.D = np.ones(N)
        self.invsqrtC = np.eye(N)
        self.eigen_at = 0
        self.counteval = 0
        self.iteration = 0

    def ask(self) -> np.ndarray:
        z = self.rng.standard_normal((self.lam, self.dim))
        return self.mean + self.sigma * (z * self.D) @ self.B.T

    def tell(self, candidates: np.ndarray, values: np.ndarray) -> None:
        N = self.dim
        self.iteration += 1
        self.counteval += len(values)
        order = np.argsort(values, kind="stable")
        best = candidates[order[:self.mu]]
        old = self.mean
        self.mean = self.weights @ best
        y = (self.mean - old) / self.sigma
        self.ps = (1 - self.cs) * self.ps + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * (self.invsqrtC @ y)
        ps_norm = np.linalg.norm(self.ps)
        hsig = ps_norm / math.sqrt(1 - (1 - self.cs) ** (2 * self.iteration)) / self.chiN < 1.4 + 2 / (N + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * y
        artmp = (best - old) / self.sigma
        c1a = self.c1 * (1 - (1 - hsig ** 2) * self.cc * (2 - self.cc))
        self.C = ((1 - c1a - self.cmu) * self.C + self.c1 * np.outer(self.pc, self.pc)
                  + self.cmu * (artmp.T * self.weights) @ artmp)
        self.sigma *= math.exp(min(1.0, (self.cs / self.damps) * (ps_norm / self.chiN - 1)))
        if self.counteval - self.eigen_at > self.lam / (self.c1 + self.cmu) / N / 10:
            self.eigen_at = self.counteval
            self.C = np.triu(self.C) + np.triu(self.C, 1).T
            evals, self.B = np.linalg.eigh(self.C)
            self.D = np.sqrt(np.maximum(evals, 1e-300))
            self.invsqrtC = (self.B / self.D) @ self.B.T

    @property
    def condition(self) -> float:
        return float((self.D.max() / self.D.min()) ** 2)


@dataclass(frozen=True)
class EsCandidate:
    """A reliability model ``(w, epsilon)`` scaled so that ``|w| = 1``."""

    w: np.ndarray
    epsilon: float
    fitness: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise InvalidParameterError(f"epsilon must be non-negative, got {self.epsilon}")

    @classmethod
    def normalized(cls, w, epsilon: float, fitness: float) -> "EsCandidate":
        w = np.asarray(w, dtype=np.float64)
        norm = float(np.linalg.norm(w))
        if norm == 0:
            return cls(w.copy(), abs(float(epsilon)), fitness)
        # fitness depends on |w . phi| >= eps only, so (w, eps) may be rescaled jointly
        return cls(w / norm, abs(float(epsilon)) / norm, fitness)

    def predict_proba(self, phi) -> np.ndarray:
        return (np.asarray(phi, dtype=np.float64) @ self.w < 0).astype(np.float64)

    def predict(self, phi) -> np.ndarray:
        return (np.asarray(phi, dtype=np.float64) @ self.w < 0).astype(np.uint8)


@dataclass
class CmaesConfig:
    max_iterations: int = 30_000
    tol_fun: float = 1e-10
    sigma0: float = 1.0
    popsize: Optional[int] = None
    stagnation_window: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidParameterError("max_iterations must be positive")
        if not self.sigma0 > 0:
            raise InvalidParameterError("sigma0 must be positive")


def reliability_fitness(X: np.ndarray, phi: np.ndarray, h_centered: np.ndarray, h_norm: float) -> np.ndarray:
    """|Pearson(h~, h)| for each row of ``X = [w | eps]``; a constant h~ scores 0."""
    W, eps = X[:, :-1], X[:, -1]
    stable = (np.abs(phi @ W.T) >= np.abs(eps)).astype(np.float64)  # (N, lambda)
    s_mean = stable.mean(axis=0)
    s_norm = np.sqrt(np.maximum(stable.sum(axis=0) * (1 - s_mean), 0.0))  # ||stable - mean|| for 0/1 data
    cov = h_centered @ stable
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(s_norm > 0, cov / (s_norm * h_norm), 0.0)
    return np.abs(r)


def _run(phi, h, seed, cfg: CmaesConfig):
    gen = seed.generator()
    dim = phi.shape[1] + 1
    w0 = gen.standard_normal(phi.shape[1])
    mean = np.append(w0, np.mean(np.abs(phi @ w0)))
    es = Cmaes(mean, cfg.sigma0, gen, cfg.popsize)
    hc = h - h.mean()
    hn = float(np.sqrt(hc @ hc))
    window = cfg.stagnation_window or 10 + int(math.ceil(30 * dim / es.lam))
    history: list[float] = []
    best_x, best_f = mean.copy(), -1.0
    reason = "max_iterations"
    for _ in range(cfg.max_iterations):
        X = es.ask()
        f = reliability_fitness(X, phi, hc, hn)
        es.tell(X, -f)
        i = int(np.argmax(f))
        if f[i] > best_f:
            best_f, best_x = float(f[i]), X[i].copy()
        history.append(float(f[i]))
        if len(history) >= window:
            recent = history[-window:]
            if max(max(recent), f.max()) - min(min(recent), f.min()) < cfg.tol_fun:
                reason = "tol_fun"
                break
        if es.sigma * np.sqrt(es.C.diagonal().max()) < 1e-12 * max(1.0, np.abs(es.mean).max()):
            reason = "tol_x"
            break
    cand = EsCandidate.normalized(best_x[:-1], best_x[-1], best_f)
    return cand, {"iterations": es.iteration, "evaluations": es.counteval, "stop": reason,
                  "final_sigma": es.sigma, "popsize": es.lam}


def attribute(candidate: EsCandidate, truth: OaxPuf, rng: RngLike = None,
              count: int = ATTRIBUTION_CRPS) -> tuple[Optional[int], list[float]]:
    """Index of the member whose noiseless responses the candidate matches best (up to polarity).

    Returns ``(None, scores)`` when no member reaches the 0.9 match threshold.
    """
    gen = as_rng_seed(rng).generator()
    phi = transform_challenge(gen.integers(0, 2, size=(count, truth.stage_count), dtype=np.uint8))
    mine = candidate.predict(phi)
    members = truth.member_responses(phi)
    scores = []
    for j in range(members.shape[1]):
        a = agreement(mine, members[:, j])
        scores.append(max(a, 1 - a))
    best = int(np.argmax(scores))
    return (best if scores[best] >= ATTRIBUTION_THRESHOLD else None), scores


def cmaes_reliability_attack(train: CrpDataset, h: Optional[ReliabilityVector] = None, runs: int = 1,
                             config: Optional[CmaesConfig] = None, truth: Optional[OaxPuf] = None,
                             test: Optional[CrpDataset] = None, rng: RngLike = None):
    """Run ``runs`` independent CMA-ES searches; returns one (candidate, report) per run.

    Accuracy is measured against the best-matching member of ``truth`` when given,
    else against ``test`` responses.
    """
    cfg = config or CmaesConfig()
    if int(runs) != runs or runs < 1:
        raise InvalidParameterError(f"runs must be a positive integer, got {runs}")
    if h is None:
        h = train.reliability()
    if len(h) != len(train):
        raise InvalidParameterError("reliability vector and dataset differ in length")
    hv = np.asarray(h.h, dtype=np.float64)
    if hv.size < 2 or np.all(hv == hv[0]):
        raise UndefinedCorrelationError("reliability vector is constant; correlation is undefined")
    if truth is None and test is None:
        raise InvalidParameterError("either the true PUF or a test set is required for evaluation")
    phi = train.features
    root = as_rng_seed(rng)

    def one(run):
        start = time.perf_counter()
        cand, info = _run(phi, hv, root.substream("cmaes-run", run), cfg)
        member = None
        details = {"method": "cmaes", "run": run, "fitness": cand.fitness, "epsilon": cand.epsilon, **info}
        if truth is not None:
            member, scores = attribute(cand, truth, root.substream("attribution", run))
            details["member_agreement"] = scores
            target = member if member is not None else int(np.argmax(scores))
            gen = root.substream("cmaes-test", run).generator()
            tphi = transform_challenge(gen.integers(0, 2, size=(ATTRIBUTION_CRPS, truth.stage_count), dtype=np.uint8))
            acc = agreement(cand.predict(tphi), truth.member_responses(tphi)[:, target])
            details["weight_pearson"] = pearson(cand.w, truth.weight_matrix[target])
            details["evaluated_member"] = target
            details["block"] = truth.block_of(target)
        else:
            acc = agreement(cand.predict(test.features), test.responses)
        if not is_converged(acc):
            member = None
        details["config"] = asdict(cfg)
        return cand, AttackReport(acc, time.perf_counter() - start, [acc], member, details)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            return list(pool.map(one, range(runs)))
    return [one(r) for r in range(runs)]


def converged_members(results: Sequence[tuple[EsCandidate, AttackReport]]) -> list[int]:
    return sorted({rep.attributed_member for _, rep in results
                   if rep.converged and rep.attributed_member is not None})
