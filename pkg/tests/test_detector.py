import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greywave.attacks import AttackSpec, inject_attacks
from greywave.data import sample_genuine
from greywave.detector import (
    EmConfig,
    EmResult,
    _prepare,
    _run_em,
    detect,
    detect_tables,
    em_fit,
    em_fit_array,
    smaller_cluster,
)
from greywave.evaluation import detection_rate
from greywave.features import tables_to_feature_sets
from greywave.pipeline import PipelineConfig, extract_features, run_detection
from greywave.synthetic import synthetic_genuine


def partition(res: EmResult):
    return {frozenset(res.cluster(0)), frozenset(res.cluster(1))}


def test_one_dimensional_split():
    pts = {"a": [0.0], "b": [0.1], "c": [-0.1], "d": [10.0], "e": [10.1], "f": [9.9]}
    res = em_fit(pts)
    assert partition(res) == {frozenset("abc"), frozenset("def")}
    assert partition(em_fit(pts)) == partition(res)
    assert res.labels.tolist() == em_fit(pts).labels.tolist()


def test_identical_points():
    res = em_fit({u: [1.0, 2.0] for u in "abcd"})
    assert sorted(map(len, res.clusters)) == [0, 4]


def test_errors():
    with pytest.raises(ValueError):
        em_fit({"a": [1.0]})
    with pytest.raises(ValueError, match="'b'"):
        em_fit({"a": [1.0], "b": [float("nan")], "c": [2.0]})
    with pytest.raises(ValueError):
        EmConfig(components=3)
    with pytest.raises(ValueError):
        EmConfig(variance_floor=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_log_likelihood_monotone(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(10, 120)), int(rng.integers(1, 6))
    X = rng.normal(size=(n, d)) * rng.uniform(0.1, 5, d) + (rng.random((n, 1)) < 0.3) * rng.normal(0, 4, d)
    for r in range(3):
        _, trace, *_ = _run_em(_prepare(X, True), EmConfig(), np.random.default_rng([seed, r]))
        assert all(b >= a - 1e-9 * abs(a) for a, b in zip(trace, trace[1:]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_invariant_to_affine_rescaling(seed):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0, 1, (40, 3)), rng.normal(6, 1, (12, 3))])
    users = [f"u{k:02d}" for k in range(len(X))]
    a = em_fit_array(users, X)
    b = em_fit_array(users, X * [2.0, 0.5, 10.0] + [3.0, -1.0, 7.0])
    assert partition(a) == partition(b)


def test_detect_intersection_and_empty_space():
    users = [f"u{k}" for k in range(10)]
    base = np.zeros((10, 2))
    far = base.copy()
    far[[1, 2, 3]] = 50.0
    far[[3]] = 60.0
    p = base.copy()
    p[[2, 3, 4]] = 50.0
    n = base.copy()
    n[[2, 3]] = 50.0
    rep = detect_tables(users, {"rd": far, "p": p, "n": n})
    assert rep.suspects["p"] == {"u2", "u3", "u4"} and rep.suspects["n"] == {"u2", "u3"}
    assert rep.flagged == rep.suspects["rd"] & rep.suspects["p"] & rep.suspects["n"]
    assert rep.flagged == {"u2", "u3"}
    # a constant space yields an empty suspect cluster, so nothing is flagged
    rep = detect_tables(users, {"rd": far, "p": p, "n": base})
    assert rep.suspects["n"] == set() and rep.flagged == set()


def test_equal_sizes_pick_outlying_cluster():
    X = np.array([[0.0], [0.1], [5.0], [5.4]])
    res = em_fit_array(["a", "b", "c", "d"], X)
    chosen, tie = smaller_cluster(res)
    assert tie and len(chosen) == 2


def test_detect_from_feature_sets_matches_tables():
    m = synthetic_genuine(3)
    m = sample_genuine(m, 100, 0)
    _, tables = extract_features(m)
    a = detect(tables_to_feature_sets(m.users, tables))
    b = detect_tables(m.users, tables)
    assert a.flagged == b.flagged


def test_small_end_to_end_average_nuke():
    genuine = sample_genuine(synthetic_genuine(1), 100, 1)
    rates = []
    for seed in range(10):
        attacked, labels = inject_attacks(genuine, AttackSpec("average", "nuke", 0.17, 0.05, seed=seed))
        rep = run_detection(attacked, PipelineConfig())
        rates.append(detection_rate(rep.flagged, labels.attackers))
    assert np.mean(rates) >= 0.8


def test_report_invariant_to_component_relabelling():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(0, 1, (50, 4)), rng.normal(4, 1, (9, 4))])
    users = [f"u{k:02d}" for k in range(len(X))]
    a = em_fit_array(users, X)
    flipped = EmResult(a.users, 1 - a.labels, a.log_likelihood, a.trace, a.iterations, a.restart,
                       a.dims_used, a.means[::-1], a.variances[::-1], a.priors[::-1], a.z)
    assert smaller_cluster(a) == smaller_cluster(flipped)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_flagged_subset_of_each_space(seed):
    rng = np.random.default_rng(seed)
    users = [f"u{k:02d}" for k in range(40)]
    tables = {k: rng.normal(size=(40, 5)) + (rng.random((40, 1)) < 0.2) * 3 for k in ("rd", "p", "n")}
    rep = detect_tables(users, tables)
    for kind in ("rd", "p", "n"):
        assert rep.flagged <= rep.suspects[kind]
        assert len(rep.suspects[kind]) <= 20
