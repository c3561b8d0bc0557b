import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polarsim import checks
from polarsim.analysis import (AnalysisReport, ClusterPartition, NoCrossPair, NotClusterable,
                               ZeroSign, analyze, clusters, delta_ab, epochs, epsilon_base,
                               is_consistent, is_inactive, is_separable, potentials,
                               realizing_pair, sign_triple_consistent, try_clusters)
from polarsim.dynamics import make_record, run_scripted, sample_inactive
from polarsim.geometry import Configuration, UpdateRule, correlation

from conftest import random_config


def sym(n, entries):
    A = np.eye(n)
    for (i, j), v in entries.items():
        A[i, j] = A[j, i] = v
    return A


def test_epsilon_base_examples():
    assert epsilon_base(3, 1.0) == 1 / 256
    assert epsilon_base(12, 1.0) == 1 / 312
    assert epsilon_base(2, 6.0) == 1 / 256
    with pytest.raises(ValueError):
        epsilon_base(1, 1.0)


def test_clusters_examples():
    assert clusters(np.ones((4, 4))).blocks == ((0, 1, 2, 3),)
    assert clusters(np.eye(3)).blocks == ((0,), (1,), (2,))
    A = sym(3, {(0, 1): 0.99, (0, 2): 0.01, (1, 2): 0.01})
    assert clusters(A).as_lists() == [[0, 1], [2]]


def test_clusters_order_by_smallest_member():
    A = sym(4, {(0, 2): 0.9, (1, 3): -0.8})
    assert clusters(A).blocks == ((0, 2), (1, 3))


def test_not_clusterable():
    # 0~1 and 1~2 but 0, 2 only weakly correlated
    A = sym(3, {(0, 1): 0.8, (1, 2): 0.8, (0, 2): 0.3})
    with pytest.raises(NotClusterable):
        clusters(A)
    with pytest.raises(NotClusterable):
        clusters(sym(2, {(0, 1): 0.5}))
    assert try_clusters(A) is None


def test_is_inactive_examples():
    pol = np.array([[1, -1, 1], [-1, 1, -1], [1, -1, 1]], dtype=float)
    assert is_inactive(pol, 1e-9, 1e-9).inactive
    assert is_inactive(np.eye(3), 0.01, 0.1).inactive
    rep = is_inactive(sym(3, {(0, 1): 0.5}), 0.01, 0.1)
    assert not rep.inactive and rep.witness == (0, 1)


def test_is_separable_examples():
    sep, parts = is_separable(np.eye(3))
    assert sep and parts[0] == (0,)
    assert not is_separable(np.full((3, 3), 0.3) + 0.7 * np.eye(3))[0]
    c = Configuration(np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]]))
    sep, (S, T) = is_separable(c)
    assert sep and S == (0, 1) and T == (2,)


def test_potentials_examples():
    p = potentials(np.ones((3, 3)), ClusterPartition(((0, 1, 2),)))
    assert p.delta0 == 0 and p.Q0 == math.inf and p.delta_prime == 9
    A = sym(3, {(0, 1): 0.99, (0, 2): 0.01, (1, 2): 0.0})
    p = potentials(A, ClusterPartition(((0, 1), (2,))))
    assert p.delta0 == pytest.approx(0.01)
    assert p.delta1 == pytest.approx(0.1)
    # 3 + 2 (0.99^2 + 0.01^2 + 0^2)
    assert p.delta_prime == pytest.approx(4.9604)
    assert p.Q0 == pytest.approx(-math.log(0.01))
    p = potentials(np.eye(3), clusters(np.eye(3)))
    assert p.delta1 == 0 and p.Q1 == math.inf


def test_delta_ab_examples():
    P = ClusterPartition(((0, 1), (2,)))
    assert delta_ab(sym(3, {(0, 1): 0.99, (0, 2): 0.0, (1, 2): 0.02}), P, 0, 1) == 0
    assert delta_ab(sym(2, {(0, 1): -0.03}), ClusterPartition(((0,), (1,))), 0, 1) == pytest.approx(0.03)
    A = sym(3, {(0, 1): 0.99, (0, 2): 0.03, (1, 2): -0.01})
    assert delta_ab(A, P, 0, 1) == pytest.approx(0.01)


def test_sign_triple_examples():
    assert sign_triple_consistent(sym(3, {(0, 1): .5, (0, 2): .5, (1, 2): .5}), 0, 1, 2)
    assert not sign_triple_consistent(sym(3, {(0, 1): -.5, (0, 2): .5, (1, 2): .5}), 0, 1, 2)
    with pytest.raises(ZeroSign):
        sign_triple_consistent(sym(3, {(0, 1): 0.0, (0, 2): .5, (1, 2): .5}), 0, 1, 2)


def test_is_consistent_examples():
    P = ClusterPartition(((0, 1), (2, 3)))
    A = sym(4, {(0, 1): .99, (2, 3): .99, (0, 2): .01, (0, 3): .02, (1, 2): .01, (1, 3): .01})
    assert is_consistent(A, P, 0, 1, 0.0).consistent
    P1 = ClusterPartition(((0,), (1,)))
    assert is_consistent(sym(2, {(0, 1): -0.2}), P1, 0, 1, 0.0).consistent
    P2 = ClusterPartition(((0, 1), (2,)))
    rep = is_consistent(sym(3, {(0, 1): .99, (0, 2): .02, (1, 2): -.02}), P2, 0, 1, 0.0)
    assert not rep.consistent and rep.reason == "sign"
    assert rep.violation == (0, 1, 2, 2)


def test_is_consistent_magnitude():
    P = ClusterPartition(((0, 1), (2,)))
    A = sym(3, {(0, 1): .99, (0, 2): .02, (1, 2): .001})
    assert is_consistent(A, P, 0, 1, 0.01).consistent
    rep = is_consistent(A, P, 0, 1, 0.1)
    assert rep.reason == "magnitude"


def test_realizing_pair_examples():
    P = ClusterPartition(((0,), (1,), (2,)))
    assert realizing_pair(sym(3, {(0, 1): .1, (0, 2): -.3, (1, 2): .2}), P) == (0, 2, 0, 2)
    assert realizing_pair(sym(3, {(0, 1): .3, (0, 2): -.3, (1, 2): .2}), P) == (0, 1, 0, 1)
    with pytest.raises(NoCrossPair):
        realizing_pair(np.eye(3), P)
    with pytest.raises(NoCrossPair):
        realizing_pair(np.ones((2, 2)), ClusterPartition(((0, 1),)))


def test_report_json_round_trip(rng):
    c, P = sample_inactive(5, 3, 2, 1e-3, 1e-3, rng)
    rep = analyze(c, 1e-3, 1e-3)
    text = json.dumps(rep.to_json())
    assert AnalysisReport.from_json(json.loads(text)) == rep
    single = analyze(Configuration(np.array([[1.0, 0], [1.0, 0]])), 0.1, 0.1)
    assert single.to_json()["Q0"] == "inf"


# -- epochs ---------------------------------------------------------------------------

def test_epochs_never_inactive():
    class R:
        def __init__(self, t):
            self.t, self.delta0, self.delta1, self.num_clusters = t, 0.3, 0.3, 2
    assert epochs([R(0), R(10)], 1e-3, 1e-2) == []


def test_epochs_single_cluster_forever():
    c = Configuration(np.array([[1.0, 0, 0]] * 3))
    trace = [make_record(c, t, 1e-3, 1e-3) for t in (0, 10, 20)]
    assert epochs(trace, 1e-3, 1e-2) == [(0, 0, 1)]


def test_epochs_from_scripted_states():
    # two clusters -> cross correlation amplified (active) -> merged into one cluster
    eps, eps1, T = 1e-3, 1e-2, 10
    u0 = [1.0, 0.0, 0.0]
    u1 = [1.0, 1e-5, 0.0]
    u2 = [1e-4, 1.0, 0.0]
    c0 = Configuration.from_vectors([u0, u1, u2])
    rule = UpdateRule.linear(1.0)
    c1, _ = run_scripted(c0, [(2, 0)] * T, rule)
    c2, _ = run_scripted(c1, [(2, 0)] * 40 + [(1, 0)] * 10, rule)
    trace = [make_record(c, t, eps, eps) for c, t in ((c0, 0), (c1, 10), (c2, 60))]
    # hand enumeration: t=0 inactive with 2 clusters, t=10 |A_02| ~ 0.1 active,
    # t=60 all three agents nearly parallel
    assert trace[0].num_clusters == 2 and trace[0].inactive
    assert not is_inactive(c1, eps, eps1).inactive
    assert trace[2].num_clusters == 1 and trace[2].inactive
    assert epochs(trace, eps, eps1) == [(0, 10, 2), (60, 60, 1)]


def test_epochs_open_epoch():
    c, _ = sample_inactive(4, 3, 2, 1e-4, 1e-4, np.random.default_rng(1))
    trace = [make_record(c, t, 1e-3, 1e-3) for t in (0, 5)]
    assert epochs(trace, 1e-3, 1e-2) == [(0, None, 2)]


# -- properties ------------------------------------------------------------------------

@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 8), d=st.integers(2, 5))
def test_cluster_uniqueness(seed, n, d):
    rng = np.random.default_rng(seed)
    c = random_config(rng, n, d)
    P = try_clusters(c)
    if P is None:
        return
    A = np.abs(correlation(c).entries)
    lab = P.labels()
    same = lab[:, None] == lab[None, :]
    off = ~np.eye(n, dtype=bool)
    assert np.all(A[same & off] > 0.5) and np.all(A[~same] < 0.5)


@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 8), d=st.integers(2, 5),
       k=st.integers(1, 5), e0=st.floats(1e-8, 0.3), e1=st.floats(1e-8, 0.3))
def test_inactivity_iff_potentials(seed, n, d, k, e0, e1):
    rng = np.random.default_rng(seed)
    k = min(k, n, d)
    try:
        c, P = sample_inactive(n, d, k, 1 / 256, 1 / 256, rng)
    except RuntimeError:
        return
    p = potentials(c, P)
    assert is_inactive(c, e0, e1).inactive == (p.delta0 < e0 and p.delta1 < e1)


def test_cluster_partition_at_scale(rng):
    for _ in range(300):
        d = int(rng.integers(2, 6))
        n = int(rng.integers(2, 9))
        k = int(rng.integers(1, min(n, d) + 1))
        eps = epsilon_base(d, 1.0)
        c, P = sample_inactive(n, d, k, eps, eps, rng)
        got = clusters(c)
        assert got == P and len(got) <= d


def test_separability_is_preserved(rng):
    U = np.zeros((6, 4))
    U[:3, :2] = rng.standard_normal((3, 2))
    U[3:, 2:] = rng.standard_normal((3, 2))
    c = Configuration.from_vectors(U)
    assert is_separable(c, 0.0)[0]
    pairs = rng.integers(0, 6, size=(10000, 2))
    out, _ = run_scripted(c, pairs, UpdateRule.linear(1.0))
    A = correlation(out).entries
    assert np.max(np.abs(A[:3, 3:])) <= 1e-9
    assert is_separable(out, 1e-9)[0]


def test_near_unit_sign_consistency(rng):
    assert all(checks.consistent_signs_case(rng) for _ in range(2000))


def test_consistent_signs_in_inactive_clusters(rng):
    for _ in range(200):
        d = int(rng.integers(2, 5))
        eb = epsilon_base(d, 1.0)
        c, P = sample_inactive(6, d, int(rng.integers(1, min(6, d) + 1)), eb, eb, rng)
        for block in P:
            for x in range(len(block)):
                for y in range(x + 1, len(block)):
                    for z in range(y + 1, len(block)):
                        assert sign_triple_consistent(c, block[x], block[y], block[z])


def test_near_orthogonality_is_stable(rng):
    assert all(checks.orthogonal_transitive_case(rng) for _ in range(2000))
