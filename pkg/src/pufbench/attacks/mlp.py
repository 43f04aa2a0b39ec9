"""Multilayer perceptron attack, written directly in numpy."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np

from ..crp import CrpDataset
from ..errors import DivergedError, InvalidParameterError
from ..puf import parse_topology
from ..rng import RngLike, as_rng_seed
from .common import AttackReport, evaluate_accuracy

MAX_MLP_APUFS = 10


def hidden_widths(k: int) -> tuple[int, int, int]:
    if int(k) != k or k < 1:
        raise InvalidParameterError(f"APUF count must be a positive integer, got {k}")
    if k > MAX_MLP_APUFS:
        raise InvalidParameterError(f"MLP width 2^{k} is too large; at most {MAX_MLP_APUFS} APUFs supported")
    return 2 ** k // 2, 2 ** k, 2 ** k // 2


class MlpModel:
    """Dense net: tanh hidden layers, logistic output. ``layers`` is a list of (W, b)."""

    def __init__(self, layers: List[tuple[np.ndarray, np.ndarray]]):
        self.layers = [(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64)) for W, b in layers]

    @classmethod
    def initialize(cls, input_width: int, k: int, rng: RngLike = None) -> "MlpModel":
        gen = as_rng_seed(rng).generator() if not isinstance(rng, np.random.Generator) else rng
        widths = [input_width, *hidden_widths(k), 1]
        layers = []
        for a, b in zip(widths[:-1], widths[1:]):
            # Glorot uniform
            lim = np.sqrt(6.0 / (a + b))
            layers.append((gen.uniform(-lim, lim, size=(a, b)), np.zeros(b)))
        return cls(layers)

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.layers[0][0].shape[0],) + tuple(W.shape[1] for W, _ in self.layers)

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return self.widths[1:-1]

    def parameters(self) -> list[np.ndarray]:
        return [arr for pair in self.layers for arr in pair]

    def set_parameters(self, params: list[np.ndarray]) -> None:
        self.layers = [(params[2 * i], params[2 * i + 1]) for i in range(len(params) // 2)]

    def _forward(self, x):
        acts = [x]
        for i, (W, b) in enumerate(self.layers):
            z = acts[-1] @ W + b
            if i < len(self.layers) - 1:
                acts.append(np.tanh(z))
            else:
                acts.append(z[:, 0])  # output logit
        return acts

    def logit(self, phi) -> np.ndarray:
        return self._forward(np.atleast_2d(np.asarray(phi, dtype=np.float64)))[-1]

    def predict_proba(self, phi) -> np.ndarray:
        z = self.logit(phi)
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    def loss_and_grad(self, phi, r):
        """Mean BCE and its gradient for every parameter, in ``parameters()`` order."""
        x = np.asarray(phi, dtype=np.float64)
        r = np.asarray(r, dtype=np.float64)
        acts = self._forward(x)
        z = acts[-1]
        # BCE from logits: softplus(z) - r z, stable for any sign
        loss = float(np.mean(np.logaddexp(0.0, z) - r * z))
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        delta = ((p - r) / x.shape[0])[:, None]
        grads = []
        for i in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[i]
            gW = acts[i].T @ delta
            gb = delta.sum(axis=0)
            grads.append((gW, gb))
            if i:
                delta = (delta @ W.T) * (1.0 - acts[i] ** 2)
        grads.reverse()
        return loss, [g for pair in grads for g in pair]

    def summary(self) -> dict:
        return {"widths": list(self.widths), "hidden_widths": list(self.hidden_widths), "hidden_activation": "tanh", "output_activation": "logistic",
                "parameters": int(sum(a.size for a in self.parameters()))}


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            out.append(p - scale * self.m[i] / (np.sqrt(self.v[i]) + self.eps))
        return out


@dataclass
class MlpConfig:
    epochs: int = 200
    batch_size: int = 1000
    learning_rate: float = 1e-3
    trials: int = 1
    patience: Optional[int] = None
    stop_at_accuracy: Optional[float] = None
    holdout: int = 1000

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.trials < 1:
            raise InvalidParameterError("epochs, batch_size and trials must be positive")
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be positive")


def _train_one(phi, r, k, cfg: MlpConfig, seed, held: CrpDataset):
    gen = seed.generator()
    model = MlpModel.initialize(phi.shape[1], k, gen)
    opt = Adam(model.parameters(), cfg.learning_rate)
    best_acc, best_params, stall, epochs = -1.0, model.parameters(), 0, 0
    for epoch in range(cfg.epochs):
        epochs = epoch + 1
        order = gen.permutation(phi.shape[0])
        for lo in range(0, phi.shape[0], cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = model.loss_and_grad(phi[idx], r[idx])
            if not np.isfinite(loss):
                raise DivergedError(f"non-finite MLP loss at epoch {epoch}", {"epoch": epoch, "loss": loss})
            model.set_parameters(opt.step(model.parameters(), grads))
        acc = evaluate_accuracy(model, held)
        if acc > best_acc:
            best_acc, best_params, stall = acc, [p.copy() for p in model.parameters()], 0
        else:
            stall += 1
        if cfg.stop_at_accuracy is not None and best_acc >= cfg.stop_at_accuracy:
            break
        if cfg.patience is not None and stall >= cfg.patience:
            break
    model.set_parameters(best_params)
    return model, best_acc, epochs


def mlp_attack(train: CrpDataset, topology, config: Optional[MlpConfig] = None,
               test: Optional[CrpDataset] = None, rng: RngLike = None):
    """Train the MLP; the parameters with the best held-out accuracy are kept."""
    cfg = config or MlpConfig()
    topology = parse_topology(topology)
    k = sum(topology)
    hidden_widths(k)
    if len(train) == 0:
        raise InvalidParameterError("empty training set")
    if test is None:
        m = min(cfg.holdout, len(train) // 5)
        idx = np.arange(len(train))
        fit, held = (train.subset(idx[:-m]), train.subset(idx[-m:])) if m else (train, train)
    else:
        fit, held = train, test
    phi, r = fit.features, fit.responses.astype(np.float64)
    root = as_rng_seed(rng)
    start = time.perf_counter()
    results = [_train_one(phi, r, k, cfg, root.substream("mlp-trial", t), held) for t in range(cfg.trials)]
    best = max(range(len(results)), key=lambda i: results[i][1])
    model = results[best][0]
    report = AttackReport(
        accuracy=results[best][1], wall_time=time.perf_counter() - start,
        trial_accuracies=[res[1] for res in results],
        details={"method": "mlp", "optimizer": "adam", "config": asdict(cfg), "topology": list(topology),
                 "training_crps": len(fit), "test_crps": len(held), "model": model.summary(),
                 "epochs_run": [res[2] for res in results], "best_trial": best})
    return model, report

