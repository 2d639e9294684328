import math

import numpy as np
import pytest
from hypothesis import given, settings

from gromlab.action import (
    FoldedGraph,
    NotFree,
    OrbitBudgetExceeded,
    WidenHint,
    apply,
    classical_schottky,
    critical_exponent,
    enumerate_orbit,
    free_subgroup,
    full_free_group,
    injectivity_radius,
    quotient_distance,
    schottky_group,
    tree_orbit_count,
    trivial_group,
)
from gromlab.space import BASE_HPOINT, distance, half_plane, hp_distance, parse_word, tree, tree_distance

from test_space import hpoints, reduced_words

T2, T3, H = tree(2), tree(3), half_plane()
F2 = full_free_group(T2)


def test_apply_examples():
    assert apply(parse_word("a"), parse_word("a⁻¹ b")) == (2,)
    assert apply((), (1, 2)) == (1, 2)
    lam = 1.7
    p = apply(np.diag([lam, 1 / lam]), BASE_HPOINT)
    assert p.x == pytest.approx(0) and p.y == pytest.approx(lam**2)
    with pytest.raises(TypeError):
        apply(np.eye(2), (1,))
    with pytest.raises(TypeError):
        apply((1,), BASE_HPOINT)


def test_orbit_examples():
    assert enumerate_orbit(F2, (), 3).N(3) == 53
    ball = enumerate_orbit(F2, (), 0)
    assert ball.points == [((), (), 0)]
    assert enumerate_orbit(free_subgroup(T3, ["a", "b"]), (), 2).N(2) == 17


def test_orbit_counts_match_closed_form():
    ball = enumerate_orbit(full_free_group(T3), (), 6, store_points=False)
    assert [int(c) for c in ball.counts] == [tree_orbit_count(3, n) for n in range(7)]


def test_orbit_points_unique_and_sorted():
    S = free_subgroup(T2, ["a a b", "b A"])
    x = parse_word("a b")
    ball = enumerate_orbit(S, x, 8)
    gx = [p for _, p, _ in ball.points]
    assert len(set(gx)) == len(gx)
    ds = [d for _, _, d in ball.points]
    assert ds == sorted(ds) and max(ds) <= 8
    graph = FoldedGraph.from_words(S.generators)
    for g, p, d in ball.points:
        assert graph.contains(g) and apply(g, x) == p and tree_distance(x, p) == d


def test_tree_orbit_agrees_with_brute_force():
    # every subgroup element of word length <= 10 in F_2 moving x by <= 6
    S = free_subgroup(T2, ["a a b", "b A"])
    x = parse_word("a b")
    graph = FoldedGraph.from_words(S.generators)
    from gromlab.space import ball_words, letters_of

    brute = sorted(g for g in ball_words(10, letters_of(2)) if graph.contains(g) and tree_distance(x, apply(g, x)) <= 6)
    got = sorted(g for g, _, _ in enumerate_orbit(S, x, 6).points)
    assert got == brute


def test_folded_graph():
    g = FoldedGraph.from_words([parse_word("a a b"), parse_word("a a c")])
    assert g.rank() == 2
    assert g.contains(parse_word("a a b B A A"))
    assert g.contains(parse_word("B A A a a c")) and not g.contains(parse_word("a"))
    assert len(FoldedGraph.from_words([(1,), (2,)])) == 1


def test_budget_partial():
    with pytest.raises(OrbitBudgetExceeded) as err:
        enumerate_orbit(F2, (), 10, budget=1000)
    assert err.value.completed_radius == 5
    assert list(err.value.partial.counts) == [tree_orbit_count(2, n) for n in range(6)]


def test_critical_exponent_tree():
    est = critical_exponent(F2, (), 12, 4)
    assert abs(est.upper - math.log(3)) < 0.02 and abs(est.lower - math.log(3)) < 0.02
    assert est.gap < 0.02
    sub = critical_exponent(free_subgroup(T3, ["a", "b"]), (), 12, 4)
    assert abs(sub.upper - math.log(3)) < 0.02 and sub.upper < math.log(5)


def test_critical_exponent_trivial():
    assert tuple(critical_exponent(trivial_group(T2), (), 6, 3)) == (0.0, 0.0)


def test_critical_exponent_rejects_small_radius():
    with pytest.raises(ValueError):
        critical_exponent(F2, (), 3, 4)


def test_schottky_roblin_gap():
    est = critical_exponent(classical_schottky(H), BASE_HPOINT, 14, 4)
    assert est.gap < 0.05
    assert 0 < est.lower <= est.upper < 1


def test_ping_pong_overlap_rejected():
    with pytest.raises(ValueError):
        schottky_group(H, [np.eye(2)], ping_pong=[((0.0, 2.0), (1.0, 3.0))])


def test_quotient_distance_examples():
    assert quotient_distance(F2, (1, 2), (1, 2), 4) == 0
    assert quotient_distance(F2, (), parse_word("a b"), 4) == 0
    assert quotient_distance(free_subgroup(T2, ["a"]), (), (2,), 4) == 1


def test_quotient_distance_widen_hint():
    S = free_subgroup(T2, ["a a a a a"])
    with pytest.raises(WidenHint):
        quotient_distance(S, (), (2, 2, 2), 2)


def test_injectivity_radius_examples():
    assert injectivity_radius(free_subgroup(T2, ["a"]), (), 3) == 0.5
    assert injectivity_radius(F2, (), 3) == 0.5
    lam = 1.9
    D = schottky_group(H, [np.diag([lam, 1 / lam])])
    assert injectivity_radius(D, BASE_HPOINT, 3) == pytest.approx(math.log(lam), abs=1e-9)


def test_non_free_detected():
    c, s = math.cos(0.4), math.sin(0.4)
    E = schottky_group(H, [np.array([[c, s], [-s, c]])])
    with pytest.raises(NotFree):
        injectivity_radius(E, BASE_HPOINT, 1)


def test_at_most_one_orbit_point_near_each_vertex():
    S = free_subgroup(T2, ["a a b", "b A"])
    rng = np.random.default_rng(4)
    from gromlab.space import sample_ball

    for p, q in zip(sample_ball(T2, 30, 4, rng), sample_ball(T2, 30, 4, rng)):
        iota = injectivity_radius(S, p, 30)
        qd = quotient_distance(S, p, q, 20)
        if qd < iota:
            ball = enumerate_orbit(S, q, distance(T2, p, q) + iota + 1)
            close = [g for g, gq, _ in ball.points if tree_distance(p, gq) < iota]
            assert len(close) == 1


@settings(max_examples=50, deadline=None)
@given(reduced_words(2, 5), reduced_words(2, 5), reduced_words(2, 5))
def test_quotient_is_one_lipschitz_and_triangle(p, q, r):
    S = free_subgroup(T2, ["a a b", "b A"])
    hint = 25
    dpq = quotient_distance(S, p, q, hint)
    assert dpq <= tree_distance(p, q)
    assert quotient_distance(S, p, r, hint) <= dpq + quotient_distance(S, q, r, hint)


@settings(max_examples=100, deadline=None)
@given(hpoints, hpoints)
def test_schottky_acts_isometrically(p, q):
    for g in classical_schottky(H).generators:
        assert hp_distance(apply(g, p), apply(g, q)) == pytest.approx(hp_distance(p, q), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(reduced_words(2), reduced_words(2), reduced_words(2))
def test_tree_action_isometric(g, p, q):
    assert tree_distance(apply(g, p), apply(g, q)) == tree_distance(p, q)


def test_orbit_count_submultiplicative():
    c = enumerate_orbit(F2, (), 8, store_points=False).counts
    for s in range(1, 5):
        for t in range(1, 5):
            assert c[s + t] <= c[s] * c[t]
