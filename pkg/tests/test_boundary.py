import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gromlab.action import classical_schottky, free_subgroup, full_free_group
from gromlab.boundary import (
    INFINITY,
    ErgodicRule,
    EventualWord,
    ExplicitList,
    IdealPoint,
    LimitSetSpec,
    Membership,
    UniformGrid,
    gromov_product_boundary,
    limit_set_net,
    membership_lambda_tau_theta,
    net_window,
    random_cyclic_tail,
    ray,
    shadow_contains,
    shadow_in_ball_check,
    translate,
    visual_ball_contains,
    visual_ball_status,
    word_lcp,
)
from gromlab.space import BASE_HPOINT, HPoint, gromov_product, half_plane, hp_distance, parse_word, tree, tree_distance

T2, T3, H = tree(2), tree(3), half_plane()
A = EventualWord.parse("", "a")
B = EventualWord.parse("", "b")
F2 = full_free_group(T2)
AB3 = free_subgroup(T3, ["a", "b"])


@st.composite
def eventual_words(draw, k=2, max_pre=5):
    letters = [g for g in range(-k, k + 1) if g]
    pre = []
    for _ in range(draw(st.integers(0, max_pre))):
        pre.append(draw(st.sampled_from([g for g in letters if not pre or g != -pre[-1]])))
    seed = draw(st.integers(0, 2**31))
    per = random_cyclic_tail(k, {-pre[-1]} if pre else set(), np.random.default_rng(seed))
    return EventualWord(tuple(pre), per)


def test_canonical_form():
    assert EventualWord.parse("a a", "a") == A
    assert EventualWord.parse("", "a b a b") == EventualWord.parse("a", "b a")
    assert str(EventualWord.parse("b", "a")) == "b (a)^∞"
    with pytest.raises(ValueError):
        EventualWord.parse("a", "A")
    with pytest.raises(ValueError):
        EventualWord((), ())


def test_ray_examples():
    assert ray(T2, (), A).eval(5) == parse_word("a a a a a")
    assert ray(T2, parse_word("b"), A).eval(1) == ()
    assert ray(T2, parse_word("b"), A).eval(3) == parse_word("a a")
    p = ray(H, BASE_HPOINT, INFINITY).eval(2.0)
    assert p.x == pytest.approx(0) and p.y == pytest.approx(math.exp(2))


def test_boundary_product_examples():
    assert gromov_product_boundary(T2, (), A, EventualWord.parse("", "a b")).value == 1
    assert gromov_product_boundary(T2, (), A, A).infinite
    assert gromov_product_boundary(T2, (), A, B).value == 0
    assert gromov_product_boundary(H, BASE_HPOINT, IdealPoint(2.0), IdealPoint(2.0)).infinite


def test_visual_ball_examples():
    assert visual_ball_contains(T2, (), A, 0.3, A)
    # lcp 2 is not > log(1/rho) = 2: the ball is strict
    assert not visual_ball_contains(T2, (), A, math.exp(-2), EventualWord.parse("", "a a b"))
    assert visual_ball_contains(T2, (), A, math.exp(-1.5), EventualWord.parse("", "a a b"))
    assert not visual_ball_contains(T2, (), A, math.exp(-1), B)
    with pytest.raises(ValueError):
        visual_ball_contains(T2, (), A, 0.0, B)


def test_half_plane_ball_three_valued():
    z = IdealPoint(0.0)
    assert visual_ball_status(H, BASE_HPOINT, z, math.exp(-1), IdealPoint(1e-6)) is Membership.IN
    assert visual_ball_status(H, BASE_HPOINT, z, math.exp(-6), INFINITY) is Membership.OUT
    assert visual_ball_status(H, BASE_HPOINT, z, math.exp(-1), IdealPoint(0.5)) is Membership.BORDERLINE
    assert visual_ball_contains(H, BASE_HPOINT, z, math.exp(-1), IdealPoint(0.5))
    assert not visual_ball_contains(H, BASE_HPOINT, z, math.exp(-1), IdealPoint(0.5), borderline_in=False)


def test_shadow_examples():
    assert shadow_contains(T2, (), (), 0.5, B)
    assert shadow_contains(T2, (), (1, 1), 0.5, A)
    assert not shadow_contains(T2, (), (1, 1), 0.5, B)
    assert shadow_contains(H, HPoint(0.2, 1.3), HPoint(0.2, 1.3), 0.1, IdealPoint(7.0))


def test_shadow_lemma_examples():
    assert shadow_in_ball_check(T2, (), A, 5, 1, 1000).ok
    assert shadow_in_ball_check(T2, (), A, 5, 1, [A]).ok
    assert not shadow_in_ball_check(T2, (), A, 5, 1, 1000, ball_exponent="-T-r").ok
    assert shadow_in_ball_check(H, BASE_HPOINT, IdealPoint(-0.4), 4, 1.2, 300).ok


def test_half_plane_product_is_limit_of_finite_products():
    for z, w in [(0.0, 1.0), (-2.0, 0.3), (5.0, math.inf)]:
        rz, rw = ray(H, BASE_HPOINT, IdealPoint(z)), ray(H, BASE_HPOINT, IdealPoint(w))
        t = 14.0
        finite = gromov_product(H, BASE_HPOINT, rz.eval(t), rw.eval(t))
        assert finite == pytest.approx(gromov_product_boundary(H, BASE_HPOINT, IdealPoint(z), IdealPoint(w)).value, abs=1e-6)


@settings(max_examples=150, deadline=None)
@given(eventual_words(), eventual_words())
def test_tree_rays_agree_up_to_product(z, w):
    # rays from one basepoint agree exactly up to the Gromov product and split after it
    prod = word_lcp(z, w)
    if math.isinf(prod):
        assert z == w
        return
    rz, rw = ray(T2, (), z), ray(T2, (), w)
    for t in range(int(prod) + 1):
        assert rz.eval(t) == rw.eval(t)
    assert rz.eval(prod + 1) != rw.eval(prod + 1)


@settings(max_examples=100, deadline=None)
@given(eventual_words(), eventual_words(), st.lists(st.sampled_from([1, -1, 2, -2]), max_size=4))
def test_translation_preserves_products(z, w, g):
    from gromlab.space import reduce_word

    g = reduce_word(g)
    assert gromov_product_boundary(T2, g, translate(g, z), translate(g, w)).value == word_lcp(z, w)


def test_half_plane_rays_stay_close_up_to_product():
    rng = np.random.default_rng(7)
    delta = H.delta
    for _ in range(300):
        z, w = IdealPoint(rng.normal() * 3), IdealPoint(rng.normal() * 3)
        prod = gromov_product_boundary(H, BASE_HPOINT, z, w).value
        rz, rw = ray(H, BASE_HPOINT, z), ray(H, BASE_HPOINT, w)
        T = rng.uniform(delta, 8)
        if prod >= T:
            assert hp_distance(rz.eval(T - delta), rw.eval(T - delta)) <= 4 * delta
        b = rng.uniform(0.1, 2)
        if hp_distance(rz.eval(T), rw.eval(T)) < 2 * b:
            assert prod > T - b


def test_limit_set_net_counts():
    net = limit_set_net(LimitSetSpec(F2, (), 1.0), math.exp(-5))
    assert len(net) == 4 * 3**5
    assert len(limit_set_net(LimitSetSpec(F2, (), 1.0), 1.0)) == 4
    sizes = [len(limit_set_net(LimitSetSpec(AB3, (), 1.0), math.exp(-n))) for n in range(2, 7)]
    assert all(b == 3 * a for a, b in zip(sizes, sizes[1:]))


def test_limit_set_net_covers_sampled_limit_points():
    spec = LimitSetSpec(AB3, parse_word("a B"), 1.0)
    rho = math.exp(-4)
    net = limit_set_net(spec, rho)
    rng = np.random.default_rng(0)
    for _ in range(200):
        # limit points of <a,b>: infinite words over a, b seen from the identity
        pre = random_cyclic_tail(2, set(), rng, max_len=6)
        per = random_cyclic_tail(2, {-pre[-1]}, rng)
        z = EventualWord(pre, per)
        assert membership_lambda_tau_theta(spec, z, 6)
        assert any(visual_ball_contains(T3, spec.basepoint, c, rho, z) for c in net)


def test_schottky_net_covers_fixed_points():
    C = classical_schottky(H)
    spec = LimitSetSpec(C, BASE_HPOINT, 2.0)
    rho = math.exp(-1.5)
    net = limit_set_net(spec, rho)
    from gromlab.action import enumerate_orbit

    ball = enumerate_orbit(C, BASE_HPOINT, 6)
    for g, _, d in ball.points[1:13]:
        vals, vecs = np.linalg.eig(g)
        v = vecs[:, int(np.argmax(np.abs(vals)))]
        z = INFINITY if abs(v[1]) < 1e-300 else IdealPoint(float((v[0] / v[1]).real))
        prods = [gromov_product_boundary(H, BASE_HPOINT, c, z).value for c in net]
        if membership_lambda_tau_theta(spec, z, 3):
            assert max(prods) > math.log(1 / rho)


def test_net_window_contains_shadow_scale():
    spec = LimitSetSpec(F2, (), 1.0)
    lo, hi, depth = net_window(spec, math.exp(-5))
    assert lo - 2 * spec.tau >= 5 and depth == 6 and hi > lo


def test_membership_examples():
    Sa = free_subgroup(T2, ["a"])
    assert not membership_lambda_tau_theta(LimitSetSpec(Sa, (), 0.0, UniformGrid(1)), B, 3)
    spec = LimitSetSpec(F2, (), 0.0, UniformGrid(1))
    for z in [A, B, EventualWord.parse("a b", "A")]:
        for depth in (1, 4, 9):
            assert membership_lambda_tau_theta(spec, z, depth)
    rule = ErgodicRule(2.0)
    erg = LimitSetSpec(AB3, (), 1.0, rule)
    z = EventualWord.parse("a", "b a")
    assert membership_lambda_tau_theta(erg, z, 8)
    assert all(rule.ratio(i) == 2.0 for i in range(1, 50))


def test_membership_rejects_escaping_ray():
    spec = LimitSetSpec(AB3, (), 1.0)
    assert not membership_lambda_tau_theta(spec, EventualWord.parse("a b", "c"), 6)
    assert membership_lambda_tau_theta(spec, EventualWord.parse("a b c", "a"), 1)


def test_theta_rules_validated():
    with pytest.raises(ValueError):
        ExplicitList((0.0, 2.0, 1.0))
    with pytest.raises(ValueError):
        UniformGrid(0.0)
    with pytest.raises(ValueError):
        LimitSetSpec(F2, (), 0.0)
    r = ErgodicRule(1.5, amplitude=2.0, exponent=0.5)
    vals = [r.value(i) for i in range(200)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert abs(r.ratio(10**6) - 1.5) < 0.01


@settings(max_examples=60, deadline=None)
@given(eventual_words(k=2, max_pre=3), st.integers(1, 12))
def test_membership_closed_under_limits(z, n):
    # z_n agreeing with z on a long prefix pass the depth-D certificate iff z does
    spec = LimitSetSpec(free_subgroup(T2, ["a b", "b a b"]), (), 1.0)
    D = 3
    horizon = spec.theta.value(D + 1) + 2
    m = int(horizon) + n
    zn = EventualWord(z.prefix(m), random_cyclic_tail(2, {-z.letter(m - 1)}, np.random.default_rng(n)))
    assert membership_lambda_tau_theta(spec, zn, D) == membership_lambda_tau_theta(spec, z, D)


@settings(max_examples=60, deadline=None)
@given(eventual_words(k=2, max_pre=3), st.sampled_from([(1,), (1, 2), (-2, 1, 1)]))
def test_membership_basepoint_robust(z, y):
    G = free_subgroup(T2, ["a b", "b a b"])
    tau = 1.0
    at_y = LimitSetSpec(G, y, tau)
    if membership_lambda_tau_theta(at_y, z, 4):
        slack = tau + tree_distance((), y)
        assert membership_lambda_tau_theta(LimitSetSpec(G, (), slack, UniformGrid(tau)), z, 3)
