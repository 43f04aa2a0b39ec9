import numpy as np
import pytest

from pufbench.attacks import pearson
from pufbench.errors import InvalidParameterError, UndefinedCorrelationError
from pufbench.oracles import (exhaustive_responses, reference_features, reference_oax_bit, reference_pearson)
from pufbench.puf import OaxPuf, transform_challenge
from pufbench.rng import RngSeed


def test_three_stage_table_has_eight_rows():
    t = exhaustive_responses(OaxPuf.sample((0, 0, 1), 3, 0.0, RngSeed(1)))
    assert len(t) == 8 and len(set(t.challenges)) == 8


def test_xor_pair_is_rowwise_xor():
    t = exhaustive_responses(OaxPuf.sample((0, 0, 2), 6, 0.0, RngSeed(2)))
    assert all(r == a ^ b for r, (a, b) in zip(t.responses, t.member_responses))


def test_or_pair_is_rowwise_or():
    t = exhaustive_responses(OaxPuf.sample((2, 0, 0), 6, 0.0, RngSeed(3)))
    assert all(r == (a | b) for r, (a, b) in zip(t.responses, t.member_responses))


def test_reference_features_hand_case():
    # challenge 1,0,1: suffix products of (-1, 1, -1) then the constant
    assert reference_features([1, 0, 1]) == [1, -1, -1, 1]


@pytest.mark.parametrize("top", [(1, 1, 1), (2, 2, 2), (0, 3, 0), (3, 0, 2)])
def test_vectorized_matches_oracle_exhaustively(top):
    p = OaxPuf.sample(top, 10, 0.0, RngSeed(sum(top)))
    t = exhaustive_responses(p)
    cs = np.array(t.challenges, dtype=np.uint8)
    phi = transform_challenge(cs)
    assert phi.tolist() == [reference_features(c) for c in t.challenges]
    assert p.evaluate(phi).tolist() == list(t.responses)
    assert p.member_responses(phi).tolist() == [list(m) for m in t.member_responses]


def test_reference_oax_bit_on_random_long_challenges():
    p = OaxPuf.sample((2, 2, 3), 64, 0.0, RngSeed(9))
    cs = np.random.default_rng(9).integers(0, 2, (300, 64), dtype=np.uint8)
    assert p.evaluate(transform_challenge(cs)).tolist() == [reference_oax_bit(p, c.tolist()) for c in cs]


def test_exhaustive_limit():
    with pytest.raises(InvalidParameterError):
        exhaustive_responses(OaxPuf.sample((0, 0, 1), 13, 0.0, RngSeed(1)))


def test_reference_pearson_agrees_with_fast_path():
    g = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        size = int(g.integers(2, 60))
        a, b = g.standard_normal(size), g.standard_normal(size) * g.uniform(0.1, 10) + g.uniform(-5, 5)
        worst = max(worst, abs(reference_pearson(a, b) - pearson(a, b)))
    assert worst <= 1e-12


def test_reference_pearson_errors():
    with pytest.raises(UndefinedCorrelationError):
        reference_pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidParameterError):
        reference_pearson([1, 2], [1, 2, 3])
