import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from missnodags.graph import ParameterError
from missnodags.missingness import McarConfig, apply_mcar
from missnodags.sem import Experiment, GroundTruthSEM, make_single_node_plan, simulate_plan


def _data(d, n, rng, observational=False):
    sem = GroundTruthSEM("linear", np.zeros((d, d)))
    plan = [(Experiment(d), n)] if observational else make_single_node_plan(d, n)
    return simulate_plan(sem, plan, rng)


def test_rate_zero_keeps_everything(rng):
    data = _data(4, 10, rng)
    assert apply_mcar(data, McarConfig(0.0), rng).mask.all()


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_rate_validation(rate):
    with pytest.raises(ParameterError):
        McarConfig(rate)


def test_empirical_rate():
    rng = np.random.default_rng(0)
    data = _data(20, 10_000, rng, observational=True)
    out = apply_mcar(data, McarConfig(0.5), rng)
    assert abs(out.missing_rate - 0.5) < 0.015


@given(st.floats(0.0, 0.95), st.integers(0, 1000))
def test_intervened_never_hidden(rate, seed):
    rng = np.random.default_rng(seed)
    data = _data(4, 5, rng)
    out = apply_mcar(data, McarConfig(rate), rng)
    assert out.mask[data.intervened].all()
    np.testing.assert_array_equal(out.x, data.x)      # true values retained


def test_mask_independent_of_values():
    rng = np.random.default_rng(2)
    sem = GroundTruthSEM("linear", np.array([[0, 0.5], [0, 0]]))
    data = simulate_plan(sem, [(Experiment(2), 10_000)], rng)
    out = apply_mcar(data, McarConfig(0.3), rng)
    for i in range(2):
        r = out.mask[:, i].astype(float)
        corr = np.corrcoef(r, data.x[:, i])[0, 1]
        assert abs(corr) < 5 / np.sqrt(len(r))


def test_seeded_default_rng(rng):
    data = _data(3, 20, rng)
    a = apply_mcar(data, McarConfig(0.4, seed=9))
    b = apply_mcar(data, McarConfig(0.4, seed=9))
    np.testing.assert_array_equal(a.mask, b.mask)
