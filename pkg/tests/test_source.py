import math

import numpy as np
import pytest

from srfock.source import (
    CutoffError,
    PairSource,
    conditional_state,
    default_cutoff,
    mean_photon_number,
    number_probability,
)


def test_number_probability_geometric():
    src = PairSource(0.3)
    for n in range(6):
        assert np.isclose(number_probability(src, n), 0.7 * 0.3**n, rtol=0, atol=0)


def test_number_probability_p_zero_is_vacuum():
    src = PairSource(0.0)
    assert number_probability(src, 0) == 1.0
    assert number_probability(src, 1) == 0.0


def test_pmf_sums_to_one():
    src = PairSource(0.42)
    n_max = default_cutoff(src)
    total = sum(number_probability(src, n) for n in range(n_max + 1))
    assert np.isclose(total, 1.0, rtol=0, atol=1e-12)


def test_mean_photon_number():
    for p in (0.0, 0.05, 0.3, 0.9):
        assert np.isclose(mean_photon_number(PairSource(p)), p / (1 - p), rtol=1e-14)


def test_invalid_probability_rejected():
    for bad in (-0.1, 1.0, 1.5, float("nan"), float("inf")):
        with pytest.raises(ValueError):
            PairSource(bad)


def test_default_cutoff_is_smallest():
    src = PairSource(0.2)
    tol = 1e-12
    n_max = default_cutoff(src, tail_tol=tol)
    # tail mass sum_{n > n_max} (1-p) p^n = p^(n_max+1)
    assert 0.2 ** (n_max + 1) < tol
    assert 0.2**n_max >= tol


def test_default_cutoff_vacuum():
    assert default_cutoff(PairSource(0.0)) == 0


def test_conditional_state_weights_geometric():
    # after i herald clicks the weights over n = i + k stay prop. to p^k
    src = PairSource(0.1)
    state = conditional_state(src, heralds=1)
    k = np.arange(state.weights.size)
    expected = 0.1**k
    expected /= expected.sum()
    assert np.allclose(state.weights, expected, rtol=1e-13, atol=0)
    assert state.n_values[0] == 1
    assert np.all(np.diff(state.n_values) == 1)


def test_conditional_state_two_heralds_starts_at_two():
    state = conditional_state(PairSource(0.05), heralds=2)
    assert state.herald_count == 2
    assert state.n_values[0] == 2
    assert np.isclose(state.weights.sum(), 1.0, rtol=0, atol=1e-15)


def test_conditional_state_small_p_limit_is_fock():
    state = conditional_state(PairSource(1e-8), heralds=1)
    assert state.weights[0] > 1 - 1e-7
    assert np.isclose(state.mean(), 1.0, rtol=0, atol=1e-7)


def test_conditional_state_mean():
    p = 0.2
    state = conditional_state(PairSource(p), heralds=1)
    # mean of i + geometric(p): i + p / (1 - p)
    assert np.isclose(state.mean(), 1 + p / (1 - p), rtol=1e-12)


def test_conditional_state_explicit_cutoff_checked():
    with pytest.raises(CutoffError):
        conditional_state(PairSource(0.5), heralds=1, n_max=3, tail_tol=1e-12)
    # a generous explicit cutoff is accepted
    state = conditional_state(PairSource(0.5), heralds=1, n_max=60, tail_tol=1e-12)
    assert state.weights.size == 60


def test_conditional_state_bad_heralds():
    with pytest.raises(ValueError):
        conditional_state(PairSource(0.1), heralds=3)
    with pytest.raises(ValueError):
        conditional_state(PairSource(0.1), heralds=0)
