import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pufbench.attacks import (AttackReport, CmaesConfig, EsCandidate, HybridConfig, LrConfig, MlpConfig, MlpModel,
                              SoftOaxModel, cmaes_reliability_attack, evaluate_accuracy, hybrid_attack, hybrid_loss,
                              is_converged, lr_attack, lr_loss, mlp_attack, pearson, soft_response_probability)
from pufbench.attacks.cmaes import Cmaes, reliability_fitness
from pufbench.attacks.lr import Rprop
from pufbench.attacks.mlp import hidden_widths
from pufbench.crp import CrpDataset, ReliabilityVector, collect_crps, collect_reliability, generate_challenges
from pufbench.errors import DivergedError, InvalidParameterError, UndefinedCorrelationError
from pufbench.puf import OaxPuf, transform_challenge
from pufbench.rng import RngSeed


def _phi(count, n, seed=0):
    return transform_challenge(np.random.default_rng(seed).integers(0, 2, (count, n))).astype(float)


def numeric_grad(f, W, h=1e-5):
    g = np.zeros_like(W)
    for i in range(W.size):
        a, b = W.copy(), W.copy()
        a.flat[i] += h
        b.flat[i] -= h
        g.flat[i] = (f(a) - f(b)) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


# soft model

def test_soft_zero_rows_give_half():
    m = SoftOaxModel(np.zeros((5, 9)), (2, 2, 1))
    assert np.allclose(soft_response_probability(m, _phi(20, 8)), 0.5)


def test_soft_certain_xor_of_ones():
    # large negative delays: both rows output 1 with certainty, their XOR is 0
    m = SoftOaxModel(np.array([[0, 0, -60.0], [0, 0, -60.0]]), (0, 0, 2))
    assert soft_response_probability(m, np.array([1.0, 1.0, 1.0])) == pytest.approx(0.0, abs=1e-12)


def test_soft_xor_sign_matches_product_boundary():
    g = np.random.default_rng(1)
    for k in range(1, 6):
        W = g.standard_normal((k, 17))
        phi = _phi(500, 16, k)
        p = SoftOaxModel(W, (0, 0, k)).predict_proba(phi)
        prod = np.prod(phi @ W.T, axis=1)
        assert np.array_equal(np.sign(0.5 - p), np.sign(prod))


def test_soft_xor_threshold_equals_hard_xor_exhaustive():
    W = np.random.default_rng(3).standard_normal((3, 7))
    phi = transform_challenge(np.array(list(itertools.product((0, 1), repeat=6)))).astype(float)
    soft = SoftOaxModel(W, (0, 0, 3)).predict(phi)
    hard = np.bitwise_xor.reduce((phi @ W.T < 0).astype(np.uint8), axis=1)
    assert np.array_equal(soft, hard)


def test_soft_limits_match_hard_oax():
    p = OaxPuf.sample((2, 2, 2), 16, 0.0, RngSeed(1))
    phi = _phi(2000, 16)
    m = SoftOaxModel(p.weight_matrix * 1e3, (2, 2, 2))
    assert np.array_equal(m.predict(phi), p.evaluate(phi))


def test_soft_row_count_and_width_checks():
    with pytest.raises(InvalidParameterError):
        SoftOaxModel(np.zeros((2, 5)), (1, 1, 1))
    with pytest.raises(InvalidParameterError):
        soft_response_probability(SoftOaxModel(np.zeros((1, 5)), (0, 0, 1)), np.ones(4))


@pytest.mark.parametrize("top", [(0, 0, 1), (1, 1, 1), (2, 0, 1), (0, 3, 0), (2, 2, 2)])
def test_lr_gradient_finite_difference(top):
    g = np.random.default_rng(sum(top))
    W = g.standard_normal((sum(top), 9))
    phi, r = _phi(80, 8, 1), g.integers(0, 2, 80).astype(float)
    _, grad = lr_loss(W, phi, r, top)
    assert rel_err(grad, numeric_grad(lambda w: lr_loss(w, phi, r, top, want_grad=False), W)) < 1e-4


def test_block_relabeling_keeps_soft_output():
    g = np.random.default_rng(5)
    W = g.standard_normal((6, 9))
    phi = _phi(100, 8)
    a = SoftOaxModel(W, (2, 2, 2)).predict_proba(phi)
    b = SoftOaxModel(W[[1, 0, 3, 2, 5, 4]], (2, 2, 2)).predict_proba(phi)
    assert np.allclose(a, b, atol=1e-14)


# rprop and lr

def test_rprop_sign_change_shrinks_step():
    opt = Rprop((1,), LrConfig())
    w = opt.update(np.zeros(1), np.array([1.0]))
    assert w[0] == pytest.approx(-0.01)
    opt.update(w, np.array([1.0]))
    assert opt.step[0] == pytest.approx(0.012)
    opt.update(w, np.array([-1.0]))
    assert opt.step[0] == pytest.approx(0.006) and opt.prev[0] == 0.0


def _crps(top, n, count, seed, noisy=False):
    p = OaxPuf.sample(top, n, 0.05, RngSeed(seed))
    cs = generate_challenges(count, n, RngSeed(seed + 1))
    return p, collect_crps(p, cs, noisy=noisy, rng=RngSeed(seed + 2))


def test_lr_single_apuf_small():
    p, train = _crps((0, 0, 1), 32, 2000, 10, noisy=True)
    _, test = _crps((0, 0, 1), 32, 1, 10)
    test = collect_crps(p, generate_challenges(2000, 32, RngSeed(99)))
    model, rep = lr_attack(train, (0, 0, 1), LrConfig(restarts=1), test, RngSeed(1))
    assert rep.accuracy >= 0.95 and rep.converged
    # learned weights agree with ground truth on held-out challenges
    assert np.mean(model.predict(test.features) == p.evaluate(test.features)) >= 0.95


def test_lr_empty_dataset():
    empty = CrpDataset(8, np.zeros((0, 8)), np.zeros(0))
    with pytest.raises(InvalidParameterError):
        lr_attack(empty, (0, 0, 1))


def test_lr_divergence_reports_diagnostics():
    _, train = _crps((0, 0, 1), 8, 100, 3)
    bad = CrpDataset(8, train.challenges, train.responses)
    bad.__dict__["features"] = np.full((100, 9), np.nan)
    with pytest.raises(DivergedError) as info:
        lr_attack(bad, (0, 0, 1), LrConfig(restarts=1), bad, RngSeed(1))
    assert "iteration" in info.value.diagnostics


def test_lr_deterministic():
    _, train = _crps((0, 0, 2), 16, 1000, 4)
    a = lr_attack(train, (0, 0, 2), LrConfig(restarts=2, max_iterations=50), rng=RngSeed(3))
    b = lr_attack(train, (0, 0, 2), LrConfig(restarts=2, max_iterations=50), rng=RngSeed(3))
    assert np.array_equal(a[0].weight_matrix, b[0].weight_matrix)
    assert a[1].trial_accuracies == b[1].trial_accuracies


# mlp

def test_hidden_widths():
    assert hidden_widths(5) == (16, 32, 16)
    assert hidden_widths(4) == (8, 16, 8)
    assert MlpModel.initialize(65, 4, RngSeed(1)).hidden_widths == (8, 16, 8)
    with pytest.raises(InvalidParameterError):
        hidden_widths(11)


def test_mlp_gradient_finite_difference():
    m = MlpModel.initialize(9, 2, RngSeed(2))
    phi, r = _phi(60, 8, 2), np.random.default_rng(2).integers(0, 2, 60)
    _, grads = m.loss_and_grad(phi, r)
    params = m.parameters()
    for i, p in enumerate(params):
        def f(v, i=i):
            q = [a.copy() for a in params]
            q[i] = v
            m2 = MlpModel([(q[2 * j], q[2 * j + 1]) for j in range(len(q) // 2)])
            return m2.loss_and_grad(phi, r)[0]
        assert rel_err(grads[i], numeric_grad(f, p.copy())) < 1e-4


def test_mlp_rejects_large_k():
    _, train = _crps((0, 0, 1), 8, 50, 1)
    with pytest.raises(InvalidParameterError):
        mlp_attack(train, (4, 4, 3))


def test_mlp_learns_single_apuf():
    p, train = _crps((0, 0, 1), 16, 3000, 5)
    test = collect_crps(p, generate_challenges(1000, 16, RngSeed(50)))
    model, rep = mlp_attack(train, (0, 0, 1), MlpConfig(epochs=30, batch_size=100, learning_rate=1e-2), test, RngSeed(1))
    assert rep.accuracy >= 0.9
    assert rep.details["model"]["widths"] == [17, 1, 2, 1, 1]


# cmaes

def test_es_candidate_normalization():
    c = EsCandidate.normalized(np.array([3.0, 4.0]), 10.0, 0.5)
    assert np.linalg.norm(c.w) == pytest.approx(1.0) and c.epsilon == pytest.approx(2.0)
    with pytest.raises(InvalidParameterError):
        EsCandidate(np.ones(2), -1.0, 0.0)


@given(st.floats(0.1, 50.0))
@settings(max_examples=20, deadline=None)
def test_fitness_scale_invariant(scale):
    g = np.random.default_rng(0)
    phi = _phi(300, 8)
    h = g.integers(0, 6, 300).astype(float)
    hc = h - h.mean()
    X = np.append(g.standard_normal(9), 1.3)[None]
    f1 = reliability_fitness(X, phi, hc, np.linalg.norm(hc))
    f2 = reliability_fitness(X * scale, phi, hc, np.linalg.norm(hc))
    assert f1[0] == pytest.approx(f2[0], abs=1e-12)


def test_fitness_matches_pearson():
    g = np.random.default_rng(1)
    phi = _phi(400, 8)
    h = g.integers(0, 6, 400).astype(float)
    X = np.append(g.standard_normal(9), 1.0)[None]
    stable = (np.abs(phi @ X[0, :-1]) >= 1.0).astype(float)
    hc = h - h.mean()
    assert reliability_fitness(X, phi, hc, np.linalg.norm(hc))[0] == pytest.approx(abs(pearson(stable, h)), abs=1e-12)


def test_cmaes_minimizes_sphere():
    es = Cmaes(np.full(6, 3.0), 1.0, np.random.default_rng(0))
    for _ in range(300):
        X = es.ask()
        es.tell(X, np.sum(X ** 2, axis=1))
    assert np.linalg.norm(es.mean) < 1e-6
    # popsize from the dimension: 4 + floor(3 ln 6)
    assert es.lam == 9 and es.mu == 4


def test_cmaes_constant_reliability():
    p = OaxPuf.sample((0, 0, 1), 8, 0.0, RngSeed(1))
    d, h = collect_reliability(p, generate_challenges(100, 8, RngSeed(2)), 11, RngSeed(3))
    with pytest.raises(UndefinedCorrelationError):
        cmaes_reliability_attack(d, h, 1, truth=p)


def test_cmaes_single_small_apuf():
    # |Pearson| fitness has weak local optima, so only some runs find the member
    p = OaxPuf.sample((0, 0, 1), 16, 0.05, RngSeed(4))
    d, h = collect_reliability(p, generate_challenges(20_000, 16, RngSeed(5)), 11, RngSeed(6))
    res = cmaes_reliability_attack(d, h, 3, CmaesConfig(max_iterations=3000), truth=p, rng=RngSeed(7))
    best = max(res, key=lambda cr: abs(cr[1].details["weight_pearson"]))
    assert best[1].converged and abs(best[1].details["weight_pearson"]) > 0.9
    assert best[1].attributed_member == 0


# hybrid

def test_hybrid_reduces_to_lr():
    g = np.random.default_rng(0)
    W = g.standard_normal((3, 9))
    phi, r, h = _phi(64, 8), g.integers(0, 2, 64).astype(float), g.integers(0, 6, 64).astype(float)
    loss, grad, _ = hybrid_loss(W, phi, r, h, (1, 1, 1), 12.0, 0.0, 0.0)
    l_lr, g_lr = lr_loss(W, phi, r, (1, 1, 1))
    assert abs(loss - 12 * l_lr) <= 1e-12
    assert np.max(np.abs(grad - 12 * g_lr)) <= 1e-12


@pytest.mark.parametrize("top", [(0, 0, 3), (1, 2, 2)])
def test_hybrid_gradient_finite_difference(top):
    g = np.random.default_rng(sum(top))
    W = g.standard_normal((sum(top), 9))
    phi, r, h = _phi(64, 8, 3), g.integers(0, 2, 64).astype(float), g.integers(0, 6, 64).astype(float)
    _, grad, _ = hybrid_loss(W, phi, r, h, top)
    num = numeric_grad(lambda w: hybrid_loss(w, phi, r, h, top, want_grad=False)[0], W)
    assert rel_err(grad, num) < 1e-4


def test_hybrid_reliability_term_even_in_rows():
    g = np.random.default_rng(2)
    W = g.standard_normal((4, 9))
    phi, r, h = _phi(64, 8), g.integers(0, 2, 64).astype(float), g.integers(0, 6, 64).astype(float)
    base = hybrid_loss(W, phi, r, h, (0, 0, 4), want_grad=False)[1]["reliability"]
    for j in range(4):
        V = W.copy()
        V[j] = -V[j]
        assert hybrid_loss(V, phi, r, h, (0, 0, 4), want_grad=False)[1]["reliability"] == base


def test_hybrid_config_defaults_and_checks():
    c = HybridConfig()
    assert (c.eps1, c.eps2, c.eps3, c.trials, c.epochs, c.batch_size) == (12.0, 1.0, 0.2, 6, 25, 256)
    with pytest.raises(InvalidParameterError):
        HybridConfig(eps2=-1)


def test_hybrid_small_run_deterministic():
    p = OaxPuf.sample((0, 0, 1), 16, 0.1, RngSeed(8))
    d, h = collect_reliability(p, generate_challenges(3000, 16, RngSeed(9)), 10, RngSeed(10))
    cfg = HybridConfig(trials=2, epochs=60)
    a = hybrid_attack(d, h, (0, 0, 1), cfg, rng=RngSeed(1))
    b = hybrid_attack(d, h, (0, 0, 1), cfg, rng=RngSeed(1))
    assert a[1].accuracy == b[1].accuracy and a[1].accuracy > 0.9


# common

def test_pearson_examples():
    v = np.array([1.0, 2.0, 5.0, 3.0])
    assert pearson(v, v) == pytest.approx(1.0)
    assert pearson(v, -v) == pytest.approx(-1.0)
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)
    with pytest.raises(UndefinedCorrelationError):
        pearson(v, np.ones(4))
    with pytest.raises(InvalidParameterError):
        pearson([1.0], [2.0])


def test_convergence_rule():
    assert is_converged(0.08) and is_converged(0.95)
    assert not is_converged(0.5) and not is_converged(0.9) and not is_converged(0.1)
    assert AttackReport(0.08, 0.0).converged


def test_accuracy_of_true_model_is_one():
    p, test = _crps((2, 2, 2), 32, 2000, 20)
    assert evaluate_accuracy(SoftOaxModel(p.weight_matrix * 1e4, (2, 2, 2)), test) == 1.0


def test_random_model_is_chance():
    _, test = _crps((0, 0, 1), 64, 1000, 21)
    acc = evaluate_accuracy(SoftOaxModel(np.random.default_rng(5).standard_normal((1, 65)), (0, 0, 1)), test)
    assert abs(acc - 0.5) <= 0.05


def test_accuracy_empty_test():
    with pytest.raises(InvalidParameterError):
        evaluate_accuracy(SoftOaxModel(np.zeros((1, 3)), (0, 0, 1)), CrpDataset(2, np.zeros((0, 2)), np.zeros(0)))
