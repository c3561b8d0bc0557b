import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polarsim.geometry import (BadFile, Configuration, DegenerateUpdate, Interaction,
                               UpdateRule, apply_interaction, config_from_dict,
                               config_to_dict, correlation, flip_agent, is_polarized,
                               load_config, polarization_distance, predicted_row,
                               save_config, self_reinforced)
from polarsim.dynamics import run_scripted

from conftest import random_config

E1, E2 = [1.0, 0.0], [0.0, 1.0]


def test_correlation_of_identical_opinions():
    A = correlation(Configuration(np.array([E1, E1]))).entries
    assert np.array_equal(A, np.ones((2, 2)))


def test_correlation_of_basis():
    A = correlation(Configuration(np.array([E1, E2]))).entries
    assert np.array_equal(A, np.eye(2))


def test_correlation_direct_dot_product():
    A = correlation(Configuration(np.array([E1, [0.6, 0.8]]))).entries
    assert A[0, 1] == pytest.approx(0.6, abs=1e-15)


def test_correlation_is_a_gram_matrix(rng):
    A = correlation(random_config(rng, 7, 4)).entries
    assert np.allclose(A, A.T)
    assert np.allclose(np.diag(A), 1.0, atol=1e-12)
    assert np.all(np.abs(A) <= 1 + 1e-12)
    assert np.linalg.eigvalsh(A).min() >= -1e-9


def test_gaps_match_one_minus_abs(rng):
    C = correlation(random_config(rng, 6, 3))
    assert np.allclose(C.gaps, 1 - np.abs(C.entries), atol=1e-14)


def test_configuration_validation():
    with pytest.raises(ValueError):
        Configuration(np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        Configuration(np.array([[1.0], [1.0]]))
    with pytest.raises(ValueError):
        Configuration(np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        Configuration(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_configuration_is_immutable(rng):
    c = random_config(rng, 3, 3)
    with pytest.raises(ValueError):
        c.opinions[0, 0] = 2.0


def test_fixed_point_when_equal():
    c = Configuration(np.array([E1, E1]))
    assert apply_interaction(c, Interaction(0, 1), UpdateRule.linear(2.5)) == c


def test_zero_coupling_leaves_opinion():
    c = Configuration(np.array([E1, E2]))
    assert apply_interaction(c, (0, 1), UpdateRule.linear(1.0)) == c


def test_update_against_hand_arithmetic():
    # independent 2-D oracle: w = u_i + alpha <u_i, u_j> u_j, then normalize
    ui, uj = np.array([1.0, 0.0]), np.array([0.6, 0.8])
    w = ui + 1.0 * 0.6 * uj
    assert np.allclose(w, [1.36, 0.48])
    expect = w / math.sqrt(2.08)
    out = apply_interaction(Configuration(np.array([ui, uj])), (0, 1), UpdateRule.linear(1.0))
    assert np.allclose(out.opinions[0], expect, atol=1e-15)
    assert np.allclose(out.opinions[0], [0.94299, 0.33282], atol=1e-5)
    assert np.array_equal(out.opinions[1], uj)
    A = correlation(out).entries
    assert A[0, 1] == pytest.approx(predicted_row(np.array([[1, .6], [.6, 1]]), 0, 1, 1.0)[1],
                                    abs=1e-15)


def test_only_influenced_row_changes(rng):
    c = random_config(rng, 5, 3)
    out = apply_interaction(c, (2, 4), UpdateRule.linear(1.3))
    keep = [0, 1, 3, 4]
    assert np.array_equal(out.opinions[keep], c.opinions[keep])
    assert abs(np.linalg.norm(out.opinions[2]) - 1) <= 1e-15


def test_self_interaction_is_noop(rng):
    c = random_config(rng, 4, 3)
    assert apply_interaction(c, (1, 1), UpdateRule.linear(3.0)) == c


def test_out_of_range_interaction(rng):
    with pytest.raises(IndexError):
        apply_interaction(random_config(rng, 3, 2), (0, 3), UpdateRule.linear(1.0))


def test_degenerate_update_for_custom_rule():
    # f(1) = -1 with u_i = u_j gives w = 0
    rule = UpdateRule.tabulate(lambda x: -x, points=3)
    c = Configuration(np.array([E1, E1]))
    with pytest.raises(DegenerateUpdate):
        apply_interaction(c, (0, 1), rule)


def test_piecewise_rule_uses_beta_for_negative():
    rule = UpdateRule.piecewise(1.0, 0.25)
    assert rule.f(0.4) == pytest.approx(0.4)
    assert rule.f(-0.4) == pytest.approx(-0.1)
    c = Configuration(np.array([E1, [-0.6, 0.8]]))
    out = apply_interaction(c, (0, 1), rule)
    w = np.array(E1) + 0.25 * -0.6 * np.array([-0.6, 0.8])
    assert np.allclose(out.opinions[0], w / np.linalg.norm(w))


def test_rule_parse():
    assert UpdateRule.parse("linear", 2.0) == UpdateRule.linear(2.0)
    assert UpdateRule.parse("piecewise:0.5", 1.0).beta == 0.5
    with pytest.raises(ValueError):
        UpdateRule.parse("cubic", 1.0)
    with pytest.raises(ValueError):
        UpdateRule.linear(0.0)


def test_predicted_row_zero_influence():
    A = np.array([[1.0, 0.0, 0.3], [0.0, 1.0, 0.2], [0.3, 0.2, 1.0]])
    assert np.allclose(predicted_row(A, 0, 1, 2.0), A[0])


def test_predicted_row_unit_correlation():
    A = np.ones((2, 2))
    assert predicted_row(A, 0, 1, 3.7)[1] == pytest.approx(1.0, abs=1e-15)


def test_predicted_row_against_geometric_update():
    c = Configuration(np.array([E1, [0.6, 0.8]]))
    out = apply_interaction(c, (0, 1), UpdateRule.linear(1.0))
    geo = correlation(out).entries[0, 1]
    assert geo == pytest.approx(0.83205, abs=1e-5)
    assert predicted_row(correlation(c), 0, 1, 1.0)[1] == pytest.approx(geo, abs=1e-15)


@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 8), d=st.integers(2, 5),
       alpha=st.floats(0.1, 4.0))
def test_closed_form_matches_geometry(seed, n, d, alpha):
    rng = np.random.default_rng(seed)
    c = random_config(rng, n, d)
    i, l = rng.integers(0, n, size=2)
    out = apply_interaction(c, (i, l), UpdateRule.linear(alpha))
    pred = predicted_row(correlation(c), i, l, alpha)
    assert np.max(np.abs(correlation(out).entries[i] - pred)) <= 1e-10


@given(x=st.floats(0.0, 1.0), alpha=st.floats(0.05, 5.0))
def test_self_reinforcement(x, alpha):
    y = self_reinforced(x, alpha)
    assert y >= x - 1e-15
    if 1e-6 < x < 1 - 1e-6:
        assert y > x


@given(seed=st.integers(0, 2 ** 32 - 1), alpha=st.floats(0.1, 4.0))
def test_monotone_arc(seed, alpha):
    rng = np.random.default_rng(seed)
    c = random_config(rng, 2, 3)
    A = correlation(c).entries
    if A[0, 1] < 0:
        c = flip_agent(c, 1)
        A = correlation(c).entries
    new = predicted_row(A, 0, 1, alpha)[1]
    if 1e-9 < A[0, 1] < 1 - 1e-9:
        assert new > A[0, 1]


def test_is_polarized_examples():
    assert is_polarized(Configuration(np.array([E1, E1, E1])), 1e-12)
    assert is_polarized(Configuration(np.array([E1, [-1.0, 0.0], E1])), 1e-12)
    assert not is_polarized(Configuration(np.array([E1, E2])), 1e-6)
    with pytest.raises(ValueError):
        is_polarized(Configuration(np.array([E1, E1])), 0.0)


def test_polarization_distance_small_angle():
    th = 1e-9
    c = Configuration.from_vectors([[1.0, 0.0], [math.cos(th), math.sin(th)]])
    assert polarization_distance(c) == pytest.approx(th, rel=1e-6)


def test_flip_examples(rng):
    c = random_config(rng, 4, 3)
    assert flip_agent(flip_agent(c, 2), 2) == c
    f = flip_agent(Configuration(np.array([E1, E2])), 0)
    assert np.array_equal(f.opinions, [[-1.0, 0.0], [0.0, 1.0]])


def test_flipped_trajectories_agree(rng):
    c = random_config(rng, 5, 3)
    sched = [tuple(p) for p in rng.integers(0, 5, size=(300, 2))]
    rule = UpdateRule.linear(1.0)
    a, b = c, flip_agent(c, 3)
    for x in sched:
        a = apply_interaction(a, x, rule)
        b = apply_interaction(b, x, rule)
        assert np.max(np.abs(flip_agent(b, 3).opinions - a.opinions)) <= 1e-12


def test_norms_survive_many_steps(rng):
    c = random_config(rng, 8, 4)
    pairs = rng.integers(0, 8, size=(20000, 2))
    out, _ = run_scripted(c, pairs, UpdateRule.linear(2.0))
    assert np.max(np.abs(np.linalg.norm(out.opinions, axis=1) - 1)) <= 1e-12


def test_config_file_round_trip(tmp_path, rng):
    c = random_config(rng, 5, 3)
    save_config(tmp_path / "c.json", c, 1.5)
    back, alpha = load_config(tmp_path / "c.json")
    assert back == c and alpha == 1.5


def test_config_file_validation(tmp_path):
    bad = {"d": 2, "alpha": 1.0, "opinions": [[1.0, 0.1], [0.0, 1.0]]}
    with pytest.raises(BadFile):
        config_from_dict(bad)
    c, _ = config_from_dict(bad, renormalize=True)
    assert np.allclose(np.linalg.norm(c.opinions, axis=1), 1.0)
    with pytest.raises(BadFile):
        config_from_dict({"d": 3, "alpha": 1.0, "opinions": [[1.0, 0.0], [0.0, 1.0]]})
    with pytest.raises(BadFile):
        config_from_dict({"alpha": 1.0})
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(BadFile):
        load_config(tmp_path / "x.json")


def test_config_dict_shape(rng):
    c = random_config(rng, 3, 2)
    d = config_to_dict(c, 1.0)
    assert d["d"] == 2 and len(d["opinions"]) == 3
