import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import Bounds, LinearConstraint, milp

from gromlab.space import (
    HPoint,
    ball_words,
    cov_number_ball,
    distance,
    estimate_delta,
    format_word,
    four_point_defect,
    four_point_defects,
    geodesic,
    gromov_product,
    half_plane,
    hp_distance,
    inverse,
    letters_of,
    multiply,
    pack_number,
    parse_word,
    tree,
    tree_distance,
)

T2 = tree(2)
H = half_plane()


def reduced_words(k, max_len=8):
    letters = letters_of(k)

    def build(seq):
        out = []
        for g in seq:
            if out and out[-1] == -g:
                out.pop()
            else:
                out.append(g)
        return tuple(out)

    return st.lists(st.sampled_from(letters), max_size=max_len).map(build)


hpoints = st.builds(
    HPoint,
    st.floats(-5, 5, allow_nan=False),
    st.floats(0.05, 20, allow_nan=False),
)


# exact oracles on small vertex balls


def _milp_min_cover(verts, rad):
    n = len(verts)
    A = np.array([[1.0 if tree_distance(u, v) <= rad else 0.0 for v in verts] for u in verts])
    res = milp(np.ones(n), constraints=LinearConstraint(A, lb=1), integrality=np.ones(n), bounds=Bounds(0, 1))
    return int(round(res.fun))


def _milp_max_separated(verts, sep):
    n = len(verts)
    rows = []
    for i in range(n):
        for j in range(i + 1, n):
            if tree_distance(verts[i], verts[j]) <= sep:
                row = np.zeros(n)
                row[i] = row[j] = 1
                rows.append(row)
    res = milp(-np.ones(n), constraints=LinearConstraint(np.array(rows), ub=1), integrality=np.ones(n), bounds=Bounds(0, 1))
    return int(round(-res.fun))


def test_words_parse_and_format():
    assert parse_word("a a b") == (1, 1, 2)
    assert parse_word("a A b") == (2,)
    assert parse_word("ε") == ()
    assert parse_word("a⁻¹ b") == (-1, 2)
    assert format_word((1, -2)) == "a B"
    assert multiply(parse_word("a"), parse_word("a⁻¹ b")) == (2,)


def test_distance_examples():
    assert distance(T2, (), parse_word("aab")) == 3
    assert distance(T2, parse_word("aab"), parse_word("aba")) == 4
    assert distance(H, HPoint(0, 1), HPoint(0, 3)) == pytest.approx(math.log(3), abs=1e-12)


def test_invalid_points_rejected():
    with pytest.raises(ValueError):
        distance(T2, (1, -1), ())
    with pytest.raises(ValueError):
        HPoint(0.0, 0.0)
    with pytest.raises(ValueError):
        distance(T2, (3,), ())


def test_geodesic_examples():
    assert geodesic(T2, parse_word("aa"), parse_word("ab")).eval(1) == (1,)
    assert geodesic(T2, (), parse_word("aba")).eval(2) == (1, 2)
    p = geodesic(H, HPoint(0, 1), HPoint(0, 9)).eval(math.log(3))
    assert p.x == pytest.approx(0, abs=1e-12) and p.y == pytest.approx(3, abs=1e-9)
    with pytest.raises(ValueError):
        geodesic(T2, (), (1,)).eval(2)


def test_gromov_product_examples():
    assert gromov_product(T2, (), parse_word("aab"), parse_word("aba")) == 1
    p = HPoint(0.3, 2.0)
    assert gromov_product(H, HPoint(1, 1), p, p) == pytest.approx(hp_distance(HPoint(1, 1), p))
    assert gromov_product(H, HPoint(0, 3), HPoint(0, 1), HPoint(0, 9)) == pytest.approx(0, abs=1e-9)


def test_delta_estimates():
    assert estimate_delta(T2, 2000, 6, seed=3) == 0
    assert estimate_delta(H, 100_000, 10, seed=0) <= 1.0
    x = HPoint(0.2, 0.7)
    assert four_point_defect(H, x, x, x, x) == 0
    with pytest.raises(ValueError):
        estimate_delta(H, 0, 1)


def test_delta_deterministic_given_seed():
    a = four_point_defects(H, 500, 5, seed=11)
    b = four_point_defects(H, 500, 5, seed=11)
    assert np.array_equal(a, b)


def test_pack_matches_exact_search():
    verts = ball_words(3, letters_of(2))
    assert len(verts) == 53
    assert pack_number(T2, (), 3, 1) == _milp_max_separated(verts, 2) == 13
    assert T2.P0 == 13


def test_cov_matches_exact_cover():
    verts = ball_words(4, letters_of(2))
    assert len(verts) == 161
    assert cov_number_ball(T2, (), 4, 1) == _milp_min_cover(verts, 1)
    assert cov_number_ball(T2, (), 3, 1) == 13
    assert cov_number_ball(T2, (), 2, 1) == 4


@pytest.mark.parametrize("k,R,r", [(2, 3, 2), (3, 2, 1), (3, 3, 1), (2, 4, 2)])
def test_tree_pack_cov_small_balls(k, R, r):
    verts = ball_words(R, letters_of(k))
    T = tree(k)
    assert pack_number(T, (), R, r) == _milp_max_separated(verts, 2 * r)
    assert cov_number_ball(T, (), R, r) == _milp_min_cover(verts, r)


def test_equal_radii_give_one():
    assert pack_number(T2, (1,), 2, 2) == 1
    assert cov_number_ball(T2, (1, 2), 3, 3) == 1
    assert pack_number(H, HPoint(0, 1), 1.5, 1.5) == 1
    assert cov_number_ball(H, HPoint(0, 1), 1.5, 1.5) == 1


def test_radius_order_rejected():
    with pytest.raises(ValueError):
        pack_number(T2, (), 1, 2)
    with pytest.raises(ValueError):
        cov_number_ball(H, HPoint(0, 1), 1, 2)


@pytest.mark.parametrize("R", [2, 3, 4])
def test_cov_below_packing_bound(R):
    P0 = T2.P0
    assert cov_number_ball(T2, (), R, 1) <= P0 * (1 + P0) ** (R - 1)


def test_half_plane_packing_constant():
    assert pack_number(H, HPoint(0, 1), 3 * H.r0, H.r0) <= H.P0


def test_monotonicity_tree():
    for R in (2, 3, 4):
        packs = [pack_number(T2, (), R, r) for r in (1, 2)]
        covs = [cov_number_ball(T2, (), R, r) for r in (1, 2)]
        assert packs[0] >= packs[1] and covs[0] >= covs[1]
    assert [cov_number_ball(T2, (), R, 1) for R in (1, 2, 3, 4)] == sorted(cov_number_ball(T2, (), R, 1) for R in (1, 2, 3, 4))


def test_cov_pack_sandwich_tree():
    for R in (2, 3, 4):
        assert pack_number(T2, (), R, 1) <= cov_number_ball(T2, (), R, 1) <= pack_number(T2, (), R, 0.5)


@settings(max_examples=200, deadline=None)
@given(reduced_words(2), reduced_words(2), reduced_words(2))
def test_tree_metric_axioms(p, q, r):
    d = tree_distance
    assert d(p, q) == d(q, p) >= 0
    assert d(p, r) <= d(p, q) + d(q, r)
    assert (d(p, q) == 0) == (p == q)


@settings(max_examples=200, deadline=None)
@given(reduced_words(2), reduced_words(2), reduced_words(2), reduced_words(2))
def test_tree_is_zero_hyperbolic(x, y, z, w):
    assert four_point_defect(T2, x, y, z, w) <= 0


@settings(max_examples=200, deadline=None)
@given(reduced_words(2), reduced_words(2))
def test_tree_left_multiplication_is_isometry(g, p):
    q = parse_word("a b A")
    assert tree_distance(multiply(g, p), multiply(g, q)) == tree_distance(p, q)
    assert multiply(g, inverse(g)) == ()


@settings(max_examples=150, deadline=None)
@given(hpoints, hpoints, hpoints)
def test_half_plane_metric_axioms(p, q, r):
    assert hp_distance(p, q) == pytest.approx(hp_distance(q, p), abs=1e-9)
    assert hp_distance(p, r) <= hp_distance(p, q) + hp_distance(q, r) + 1e-9


@settings(max_examples=100, deadline=None)
@given(hpoints, hpoints, st.floats(0, 1), st.floats(0, 1))
def test_half_plane_geodesic_isometric(p, q, s, t):
    g = geodesic(H, p, q)
    a, b = g.eval(s * g.length), g.eval(t * g.length)
    assert hp_distance(a, b) == pytest.approx(abs(s - t) * g.length, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(reduced_words(2), reduced_words(2))
def test_tree_geodesic_integer_params(p, q):
    g = geodesic(T2, p, q)
    assert g.eval(0) == p and g.eval(g.length) == q
    for t in range(int(g.length) + 1):
        v = g.eval(t)
        assert tree_distance(p, v) == t and tree_distance(v, q) == g.length - t
