"""Differentiable relaxation of an OAX-PUF used by the LR and hybrid attacks.

Row i has delay ``u_i = w_i . phi`` and ``p_i = P(r_i = 1) = sigmoid(-u_i)``.
Blocks combine as independent Bernoulli variables:

* OR:  ``q = 1 - prod(1 - p_i)``
* AND: ``q = prod(p_i)``
* XOR: ``q = (1 - prod(1 - 2 p_i)) / 2``

and the output probability is ``(1 - prod_blocks(1 - 2 q)) / 2``.  Everything
is carried in the "parity" domain ``T = 1 - 2 P`` where XOR is a product and
``1 - 2 p_i = tanh(u_i / 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameterError
from ..puf import Topology, parse_topology

PROB_EPS = 1e-12


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def _prod_except(a: np.ndarray) -> np.ndarray:
    """``out[:, i] = prod_{j != i} a[:, j]`` without division."""
    n, k = a.shape
    left = np.ones((n, k))
    right = np.ones((n, k))
    if k > 1:
        left[:, 1:] = np.cumprod(a[:, :-1], axis=1)
        right[:, :-1] = np.cumprod(a[:, :0:-1], axis=1)[:, ::-1]
    return left * right


def parity_forward(U: np.ndarray, topology: Topology, want_grad: bool = False):
    """Return ``T = 1 - 2 P`` for delays ``U`` of shape (N, k); optionally dT/dU."""
    x, y, z = topology
    N, k = U.shape
    if k != x + y + z:
        raise InvalidParameterError(f"{k} model rows for topology {topology}")
    factors = []
    grads = []
    if x:
        s = _sigmoid(U[:, :x])  # P(r_i = 0)
        S = np.prod(s, axis=1)
        factors.append(2.0 * S - 1.0)
        if want_grad:
            # dS/du_i = S * (1 - s_i)
            grads.append(2.0 * _prod_except(s) * s * (1.0 - s))
    if y:
        p = _sigmoid(-U[:, x:x + y])  # P(r_i = 1)
        Pp = np.prod(p, axis=1)
        factors.append(1.0 - 2.0 * Pp)
        if want_grad:
            # dPp/du_i = -Pp * (1 - p_i)
            grads.append(2.0 * _prod_except(p) * p * (1.0 - p))
    if z:
        t = np.tanh(0.5 * U[:, x + y:])
        factors.append(np.prod(t, axis=1))
        if want_grad:
            grads.append(_prod_except(t) * 0.5 * (1.0 - t * t))
    F = np.stack(factors, axis=1)
    T = np.prod(F, axis=1)
    if not want_grad:
        return T
    others = _prod_except(F)
    dT = np.empty((N, k))
    col = 0
    for b, (size, g) in enumerate(zip([s for s in (x, y, z) if s], grads)):
        dT[:, col:col + size] = g * others[:, b:b + 1]
        col += size
    return T, dT


def bce_from_parity(T: np.ndarray, r: np.ndarray, want_grad: bool = False):
    """Mean binary cross-entropy of P = (1 - T)/2 against bits ``r``."""
    s = 1.0 - 2.0 * np.asarray(r, dtype=np.float64)  # +1 for r = 0, -1 for r = 1
    arg = np.maximum(1.0 + s * T, 2.0 * PROB_EPS)
    loss = -np.mean(np.log(0.5 * arg))
    if not want_grad:
        return loss
    dT = -s / arg / T.size
    return loss, dT


@dataclass
class SoftOaxModel:
    weight_matrix: np.ndarray
    topology: Topology

    def __post_init__(self):
        self.topology = parse_topology(self.topology)
        W = np.array(self.weight_matrix, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != sum(self.topology):
            raise InvalidParameterError(
                f"weight matrix needs {sum(self.topology)} rows for topology {self.topology}, got shape {W.shape}")
        self.weight_matrix = W

    @property
    def stage_count(self) -> int:
        return self.weight_matrix.shape[1] - 1

    def predict_proba(self, phi) -> np.ndarray:
        return soft_response_probability(self, phi)

    def predict(self, phi) -> np.ndarray:
        return (self.predict_proba(phi) > 0.5).astype(np.uint8)


def soft_response_probability(m: SoftOaxModel, phi):
    """P(response = 1) under the soft-logic relaxation."""
    arr = np.asarray(phi, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != m.weight_matrix.shape[1]:
        raise InvalidParameterError(
            f"feature length {arr.shape[1]} does not match model width {m.weight_matrix.shape[1]}")
    T = parity_forward(arr @ m.weight_matrix.T, m.topology)
    P = 0.5 * (1.0 - T)
    return float(P[0]) if single else P


def lr_loss(W: np.ndarray, phi: np.ndarray, r: np.ndarray, topology: Topology, want_grad: bool = True):
    """Mean BCE of the soft model and its gradient with respect to ``W`` (k, n+1)."""
    U = phi @ W.T
    if not want_grad:
        return bce_from_parity(parity_forward(U, topology), r)
    T, dTdU = parity_forward(U, topology, want_grad=True)
    loss, dLdT = bce_from_parity(T, r, want_grad=True)
    grad = (dLdT[:, None] * dTdU).T @ phi
    return loss, grad
