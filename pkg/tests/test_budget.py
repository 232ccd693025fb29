"""Efficiency chain and collection-rate arithmetic."""

import math

import pytest
from hypothesis import given, strategies as st

from homsim.budget import (
    EfficiencyChain,
    beta_factor,
    budget_report,
    chain_efficiency,
    collection_efficiency,
    default_chain,
)


def test_beta_factor_cavity_coupled_values():
    assert beta_factor(1120.0, 3200.0) == pytest.approx(0.65, abs=0.005)
    assert beta_factor(1060.0, 3200.0) == pytest.approx(0.66875, abs=1e-12)
    assert beta_factor(3200.0, 3200.0) == 0.0


def test_beta_factor_negative_flagged():
    with pytest.warns(UserWarning, match="negative"):
        assert beta_factor(4000.0, 3200.0) < 0


def test_beta_factor_validation():
    with pytest.raises(ValueError):
        beta_factor(0.0, 100.0)
    with pytest.raises(ValueError):
        beta_factor(100.0, -5.0)


@given(tau=st.floats(1.0, 1e6), k=st.floats(1.001, 100.0))
def test_beta_factor_ratio_identity(tau, k):
    assert beta_factor(tau, tau * k) == pytest.approx(1.0 - 1.0 / k, abs=1e-12)


def test_chain_efficiency_default_chain_values():
    assert chain_efficiency([0.41, 0.42, 0.48, 0.20]) == pytest.approx(0.016531, abs=1e-5)
    assert chain_efficiency(default_chain()) == pytest.approx(0.0165312, abs=1e-7)


def test_chain_efficiency_basics():
    assert chain_efficiency([0.37]) == 0.37
    assert chain_efficiency([0.5, 0.0, 0.9]) == 0.0
    with pytest.raises(ValueError):
        chain_efficiency([])
    with pytest.raises(ValueError):
        chain_efficiency([1.2])
    with pytest.raises(ValueError):
        EfficiencyChain([("bad", -0.1)])
    with pytest.raises(ValueError):
        EfficiencyChain([])


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8))
def test_chain_efficiency_permutation_invariant(effs):
    a = chain_efficiency(effs)
    b = chain_efficiency(list(reversed(effs)))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


@given(
    st.lists(st.floats(0.01, 1.0), min_size=1, max_size=4),
    st.lists(st.floats(0.01, 1.0), min_size=1, max_size=4),
)
def test_chain_efficiency_multiplicative_under_concat(c1, c2):
    assert chain_efficiency(c1 + c2) == pytest.approx(
        chain_efficiency(c1) * chain_efficiency(c2), rel=1e-12
    )


def test_collection_efficiency_typical_rates():
    sys_eff = 0.016531
    assert collection_efficiency(6000.0, 5e6, sys_eff) == pytest.approx(0.0726, abs=5e-4)
    assert collection_efficiency(7800.0, 5e6, sys_eff) == pytest.approx(0.0944, abs=5e-4)
    assert collection_efficiency(0.0, 5e6, sys_eff) == 0.0


def test_collection_efficiency_linearity():
    base = collection_efficiency(1000.0, 5e6, 0.0165312)
    assert collection_efficiency(3000.0, 5e6, 0.0165312) == pytest.approx(3 * base, rel=1e-12)
    assert collection_efficiency(1000.0, 10e6, 0.0165312) == pytest.approx(base / 2, rel=1e-12)
    assert collection_efficiency(1000.0, 5e6, 0.0165312 / 2) == pytest.approx(2 * base, rel=1e-12)


def test_collection_efficiency_validation():
    with pytest.raises(ValueError):
        collection_efficiency(-1.0, 5e6, 0.5)
    with pytest.raises(ValueError):
        collection_efficiency(100.0, 0.0, 0.5)
    with pytest.raises(ValueError):
        collection_efficiency(100.0, 5e6, 0.0)
    with pytest.raises(ValueError):
        collection_efficiency(100.0, 5e6, 1.5)


def test_budget_report_contents():
    rep = budget_report()
    assert rep["beta.dot_a"] == pytest.approx(0.65, abs=0.005)
    assert rep["system_efficiency"] == pytest.approx(0.0165312, abs=1e-7)
    assert rep["collection.dot_a"] == pytest.approx(0.0726, abs=1e-3)
    assert rep["collection.dot_b"] == pytest.approx(0.0944, abs=1e-3)
    assert rep["stage.optics"] == 0.41
    assert math.isclose(
        rep["collection.dot_b"] / rep["collection.dot_a"], 7800.0 / 6000.0, rel_tol=1e-12
    )
