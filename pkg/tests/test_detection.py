import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from srfock.source import CutoffError, PairSource
from srfock.detection import (
    DetectionTree,
    DetectorModel,
    click_distribution,
    coincidence_table_exact,
    enumerate_click_distribution,
    poisson_reference_table,
)


def test_detector_model_validation():
    with pytest.raises(ValueError):
        DetectorModel(efficiency=1.2, dark_prob=0.0)
    with pytest.raises(ValueError):
        DetectorModel(efficiency=0.5, dark_prob=-0.1)


def test_balanced_tree_routing_uniform():
    tree = DetectionTree.balanced(4, 0.3, throughput=0.8)
    assert tree.n_leaves == 4
    assert np.allclose(tree.click_probs, 0.8 * 0.3 / 4)


def test_zero_photons_no_dark_always_zero_clicks():
    tree = DetectionTree.balanced(4, 0.5)
    dist = click_distribution(0, tree)
    assert dist.p_click(0) == 1.0


def test_one_photon_balanced_tree():
    eta = 0.35
    tree = DetectionTree.balanced(2, eta)
    dist = click_distribution(1, tree)
    assert np.isclose(dist.p_click(1), eta, rtol=1e-14)
    assert np.isclose(dist.p_click(0), 1 - eta, rtol=1e-14)
    assert abs(dist.p_click(2)) < 1e-15  # impossible bin, up to float dust


def test_two_photons_two_leaves_by_hand():
    # each photon routes to one of two leaves and is detected with prob eta;
    # P(0) = (1-eta)^2, P(2) = eta^2/2 (distinct leaves), P(1) = the rest
    tree = DetectionTree.balanced(2, 0.6)
    dist = click_distribution(2, tree)
    assert np.isclose(dist.p_click(0), 0.16, rtol=0, atol=1e-14)
    assert np.isclose(dist.p_click(2), 0.18, rtol=0, atol=1e-14)
    assert np.isclose(dist.p_click(1), 0.66, rtol=0, atol=1e-14)


def test_click_distribution_matches_enumeration_with_darks():
    tree = DetectionTree(
        leaves=(
            DetectorModel(efficiency=0.7, dark_prob=0.02),
            DetectorModel(efficiency=0.4, dark_prob=0.0),
            DetectorModel(efficiency=0.9, dark_prob=0.1),
        ),
        routing=(0.5, 0.3, 0.2),
    )
    for n in range(5):
        fast = click_distribution(n, tree).probabilities
        slow = enumerate_click_distribution(n, tree).probabilities
        assert np.allclose(fast, slow, rtol=0, atol=1e-12)


@given(
    n=st.integers(min_value=0, max_value=4),
    leaves=st.lists(
        st.tuples(
            st.floats(min_value=0.0, max_value=1.0),
            st.floats(min_value=0.0, max_value=0.3),
        ),
        min_size=1,
        max_size=3,
    ),
    weights=st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=3, max_size=3),
    throughput=st.floats(min_value=0.1, max_value=1.0),
)
def test_inclusion_exclusion_equals_enumeration(n, leaves, weights, throughput):
    routing = np.array(weights[: len(leaves)])
    routing = routing / routing.sum() * throughput
    tree = DetectionTree(
        leaves=tuple(DetectorModel(efficiency=e, dark_prob=d) for e, d in leaves),
        routing=tuple(routing),
    )
    fast = click_distribution(n, tree).probabilities
    slow = enumerate_click_distribution(n, tree).probabilities
    assert np.allclose(fast, slow, rtol=0, atol=1e-10)


def test_exact_table_p1_oracle():
    # frozen from an independent run of the same configuration
    table = coincidence_table_exact(
        PairSource(0.05),
        DetectionTree.balanced(2, 0.4, dark_prob=1e-4),
        DetectionTree.balanced(4, 0.03, dark_prob=1e-4),
    )
    assert np.isclose(table.p1, 0.02059759639173301, rtol=1e-13)
    assert np.isclose(table.entry(1, 1)[0], 0.032139102473443995, rtol=1e-13)


def test_exact_table_rows_are_conditional_distributions():
    table = coincidence_table_exact(
        PairSource(0.02),
        DetectionTree.balanced(2, 0.5),
        DetectionTree.balanced(4, 0.25),
    )
    probs = np.asarray(table.probs)
    assert probs.shape == (3, 5)
    assert np.allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    assert table.sigma is None or np.all(np.asarray(table.sigma) == 0)


def test_plateau_ratio_approaches_two_at_low_efficiency():
    # P(1 click | 2 photons) / P(1 click | 1 photon) -> 2(1 - eta) + O(p),
    # so the plateau ratio converges to 2 from below as eta -> 0
    def ratio(eta2):
        table = coincidence_table_exact(
            PairSource(1e-4),
            DetectionTree.balanced(2, 0.4),
            DetectionTree.balanced(4, eta2),
        )
        return table.entry(2, 1)[0] / table.entry(1, 1)[0]

    r = ratio(0.005)
    assert abs(r - 2.0) / 2.0 < 0.01
    assert np.isclose(r, 1.991209407732777, rtol=1e-12)
    ratios = [ratio(e) for e in (0.2, 0.1, 0.05, 0.005)]
    assert all(np.diff(ratios) > 0) and all(r < 2 for r in ratios)


def test_sub_poissonian_two_click_suppression():
    table = coincidence_table_exact(
        PairSource(0.01),
        DetectionTree.balanced(2, 0.4),
        DetectionTree.balanced(4, 0.03),
    )
    p11 = table.entry(1, 1)[0]
    p12 = table.entry(1, 2)[0]
    assert p12 < 0.1 * p11**2 * 10  # far below the Poisson square


def test_cutoff_error_for_large_p():
    with pytest.raises(CutoffError):
        coincidence_table_exact(
            PairSource(0.5),
            DetectionTree.balanced(2, 0.4),
            DetectionTree.balanced(4, 0.03),
        )


def test_explicit_n_max_tail_checked():
    with pytest.raises(CutoffError):
        coincidence_table_exact(
            PairSource(0.2),
            DetectionTree.balanced(2, 0.4),
            DetectionTree.balanced(4, 0.03),
            n_max=3,
        )


def test_csv_round_trip_bit_exact(tmp_path):
    table = coincidence_table_exact(
        PairSource(0.037),
        DetectionTree.balanced(2, 0.4, dark_prob=1e-4),
        DetectionTree.balanced(4, 0.00808),
    )
    path = tmp_path / "table.csv"
    table.to_csv(path)
    back = type(table).from_csv(path)
    assert table.equals(back, include_counts=False)
    # a second write of the recovered table is byte-identical
    path2 = tmp_path / "table2.csv"
    back.to_csv(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_json_round_trip_preserves_counts(tmp_path):
    from srfock.simulate import TrialConfig, run_trials

    table = run_trials(
        TrialConfig(
            source=PairSource(0.05),
            field1_tree=DetectionTree.balanced(2, 0.4),
            field2_tree=DetectionTree.balanced(4, 0.3),
            n_trials=50_000,
            seed=7,
        )
    )
    path = tmp_path / "table.json"
    table.to_json(path)
    back = type(table).from_json(path)
    assert table.equals(back, include_counts=True)
    # NaN rows and notes survive the round trip
    doc = json.loads(path.read_text())
    assert doc["schema"].startswith("srfock")


def test_poisson_reference_table_is_powers_of_plateau():
    table = poisson_reference_table(0.0085)
    for j in range(1, 4):
        assert np.isclose(table.entry(1, j)[0], 0.0085**j, rtol=0, atol=1e-18)
    assert table.engine == "baseline"
