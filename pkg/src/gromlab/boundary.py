"""Gromov boundary of the model spaces.

Tree boundary points are eventually periodic reduced words, half-plane
boundary points are extended reals. Products at infinity, generalized visual
balls, shadows and the limit sets of a free group action are built on these.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .action import FoldedGraph, GroupSpec, enumerate_orbit
from .space import (
    TOL,
    HPoint,
    ModelSpace,
    Word,
    _to_standard,
    format_word,
    hp_distance,
    hp_distance_array,
    hp_geodesic_endpoint,
    inverse,
    is_reduced,
    lcp,
    mobius,
    multiply,
    parse_word,
    tree_distance,
)

# ---------------------------------------------------------------- boundary points


@dataclass(frozen=True)
class EventualWord:
    """The infinite reduced word preperiod · period · period · ...

    Stored in canonical form (primitive period, shortest preperiod), so two
    representations are equal iff the infinite words agree.
    """

    preperiod: Word
    period: Word

    def __post_init__(self):
        pre, per = tuple(self.preperiod), tuple(self.period)
        if not per:
            raise ValueError("period must be non-empty")
        if not is_reduced(pre + per + per):
            raise ValueError(f"{format_word(pre)} ({format_word(per)})^∞ is not reduced")
        n = len(per)
        for d in range(1, n + 1):
            if n % d == 0 and per[:d] * (n // d) == per:
                per = per[:d]
                break
        while pre and pre[-1] == per[-1]:
            pre = pre[:-1]
            per = per[-1:] + per[:-1]
        object.__setattr__(self, "preperiod", pre)
        object.__setattr__(self, "period", per)

    @classmethod
    def parse(cls, preperiod: str, period: str) -> "EventualWord":
        return cls(parse_word(preperiod), parse_word(period))

    def letter(self, i: int) -> int:
        if i < len(self.preperiod):
            return self.preperiod[i]
        return self.period[(i - len(self.preperiod)) % len(self.period)]

    def prefix(self, n: int) -> Word:
        n = max(0, int(n))
        if n <= len(self.preperiod):
            return self.preperiod[:n]
        m = n - len(self.preperiod)
        reps = m // len(self.period) + 1
        return self.preperiod + (self.period * reps)[:m]

    def __str__(self) -> str:
        head = format_word(self.preperiod) + " " if self.preperiod else ""
        return f"{head}({format_word(self.period)})^∞"


@dataclass(frozen=True)
class IdealPoint:
    """A point of R ∪ {∞}, the boundary of the half-plane."""

    x: float

    def __post_init__(self):
        if math.isnan(self.x):
            raise ValueError("ideal point must not be NaN")
        if math.isinf(self.x):
            object.__setattr__(self, "x", math.inf)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.x)


INFINITY = IdealPoint(math.inf)
BoundaryPoint = Union[EventualWord, IdealPoint]


def check_boundary(space: ModelSpace, z) -> None:
    if space.is_tree:
        if not isinstance(z, EventualWord):
            raise TypeError("tree boundary points are EventualWord")
        if any(abs(g) > space.k for g in z.preperiod + z.period):
            raise ValueError(f"{z} uses letters outside F_{space.k}")
    elif not isinstance(z, IdealPoint):
        raise TypeError("half-plane boundary points are IdealPoint")


def translate(g: Word, z: EventualWord) -> EventualWord:
    """The boundary point g·z."""
    reps = (len(g) + len(z.preperiod)) // len(z.period) + 2
    w = multiply(g, z.preperiod + z.period * reps)
    return EventualWord(w, z.period)


def word_lcp(z: EventualWord, w: EventualWord) -> float:
    """Longest common prefix of two infinite words (inf when equal)."""
    if z == w:
        return math.inf
    # two eventually periodic words that agree this long agree forever
    bound = max(len(z.preperiod), len(w.preperiod)) + len(z.period) + len(w.period)
    return float(lcp(z.prefix(bound), w.prefix(bound)))


def _relative(base: Word, z: EventualWord) -> EventualWord:
    return translate(inverse(base), z) if base else z


def _disk(base: HPoint, xi: IdealPoint) -> complex:
    """Unit-circle position of xi seen from base (base sent to the disk centre)."""
    if xi.is_infinite:
        return complex(1.0, 0.0)
    u = (xi.x - base.x) / base.y
    return (u - 1j) / (u + 1j)


def _from_disk(base: HPoint, w: complex) -> IdealPoint:
    if abs(w - 1) < 1e-15:
        return INFINITY
    u = (1j * (1 + w) / (1 - w)).real
    return IdealPoint(base.x + base.y * u)


# ---------------------------------------------------------------- rays


@dataclass(frozen=True)
class Ray:
    """Unit-speed geodesic ray from base to the boundary point target."""

    space: ModelSpace
    base: object
    target: object

    def eval_with_offset(self, t: float):
        if t < -TOL:
            raise ValueError("ray parameter must be >= 0")
        t = max(t, 0.0)
        if self.space.is_tree:
            n = int(math.floor(t + 0.5))
            return self.vertex(n), t - n
        m = _to_standard(self.base, self.target.x)
        z = mobius(m, complex(0.0, math.exp(t)))
        return HPoint(float(z.real), float(z.imag)), 0.0

    def eval(self, t: float):
        return self.eval_with_offset(t)[0]

    def vertex(self, n: int) -> Word:
        """Tree vertex at integer distance n from the base."""
        b = self.base
        m = lcp(b, self.target.prefix(len(b)))
        up = len(b) - m
        if n <= up:
            return b[: len(b) - n]
        return self.target.prefix(m + n - up)

    def points(self, ts: np.ndarray):
        """Half-plane ray points at parameters ts, as coordinate arrays."""
        m = _to_standard(self.base, self.target.x)
        z = 1j * np.exp(np.asarray(ts, dtype=float))
        w = (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])
        return w.real, np.abs(w.imag)


def ray(space: ModelSpace, base, z) -> Ray:
    space.check_point(base)
    check_boundary(space, z)
    return Ray(space, base, z)


# ---------------------------------------------------------------- products and balls


@dataclass(frozen=True)
class BoundaryProduct:
    """A Gromov product at infinity with its error bar.

    value is +inf for z = w (flagged by `infinite`). On the half-plane the
    value is the limit of (xi_z(t), xi_w(t))_x as t grows, and `error` is the
    2*delta bar of the finite-time comparison.
    """

    value: float
    error: float = 0.0

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)

    def __float__(self) -> float:
        return self.value


def gromov_product_boundary(space: ModelSpace, base, z, w) -> BoundaryProduct:
    space.check_point(base)
    check_boundary(space, z)
    check_boundary(space, w)
    if space.is_tree:
        return BoundaryProduct(word_lcp(_relative(base, z), _relative(base, w)))
    if z == w:
        return BoundaryProduct(math.inf, 2 * space.delta)
    gap = abs(_disk(base, z) - _disk(base, w)) / 2.0
    return BoundaryProduct(-math.log(min(1.0, gap)), 2 * space.delta)


class Membership(Enum):
    IN = "in"
    OUT = "out"
    BORDERLINE = "borderline"


def visual_ball_status(space: ModelSpace, base, center, rho: float, query) -> Membership:
    """Membership of query in B(center, rho) = {w : (center, w)_base > log(1/rho)}."""
    if not (0 < rho <= 1):
        raise ValueError("rho must lie in (0, 1]")
    level = math.log(1.0 / rho)
    prod = gromov_product_boundary(space, base, center, query)
    if prod.infinite or prod.value - prod.error > level + TOL:
        return Membership.IN
    if prod.value + prod.error <= level + TOL:
        return Membership.OUT
    return Membership.BORDERLINE


def visual_ball_contains(space: ModelSpace, base, center, rho: float, query, borderline_in: bool = True) -> bool:
    status = visual_ball_status(space, base, center, rho, query)
    return status is Membership.IN or (status is Membership.BORDERLINE and borderline_in)


# ---------------------------------------------------------------- shadows


def _tree_point_to_ray(v0: Word, v1: Word, f: float, r: Ray, reach: float) -> float:
    """Distance from the point at fraction f along the edge v0-v1 to the ray r.

    The closest ray point to any tree point is a vertex unless the point lies
    on the ray itself, so scanning vertices up to `reach` suffices.
    """
    n = int(math.ceil(reach)) + 1
    verts = [r.vertex(s) for s in range(n + 1)]
    if f <= TOL:
        return float(min(tree_distance(v0, u) for u in verts))
    on_ray = any(verts[s] == v0 and verts[s + 1] == v1 for s in range(n)) or any(
        verts[s] == v1 and verts[s + 1] == v0 for s in range(n)
    )
    if on_ray:
        return 0.0
    return min(min(f + tree_distance(v0, u), 1 - f + tree_distance(v1, u)) for u in verts)


def shadow_contains(space: ModelSpace, base, caster, r: float, z) -> bool:
    """Whether the ray from base to z meets the open ball B(caster, r)."""
    if r <= 0:
        raise ValueError("shadow radius must be > 0")
    space.check_point(base)
    space.check_point(caster)
    check_boundary(space, z)
    reach = tree_distance(base, caster) + r if space.is_tree else hp_distance(base, caster) + r
    if space.is_tree:
        return _tree_point_to_ray(caster, caster, 0.0, Ray(space, base, z), reach) < r
    return _hp_point_to_ray(caster, Ray(space, base, z), reach, r / 4) < r


def _hp_point_to_ray(p: HPoint, rr: Ray, reach: float, step: float) -> float:
    ts = np.arange(0.0, reach + step, step)
    xs, ys = rr.points(ts)
    return float(np.min(hp_distance_array(p.x, p.y, xs, ys)))


@dataclass
class ShadowCheck:
    ok: bool
    checked: int
    in_shadow: int
    counterexample: object = None


def shadow_in_ball_check(
    space: ModelSpace,
    base,
    z,
    T: float,
    r: float,
    samples: int | Sequence = 1000,
    seed: int = 0,
    ball_exponent: str = "-T+r",
) -> ShadowCheck:
    """Check Shad_base(xi_z(T), r) ⊆ B(z, e^{-T+r}) on sampled boundary points.

    `samples` is a count (points drawn near z) or an explicit list. Passing
    ball_exponent="-T-r" runs the deliberately too-small ball, which must fail.
    """
    if not (T > r > 0):
        raise ValueError("need T > r > 0")
    exponents = {"-T+r": -T + r, "-T-r": -T - r}
    if ball_exponent not in exponents:
        raise ValueError(f"ball_exponent must be one of {sorted(exponents)}")
    rho = math.exp(exponents[ball_exponent])
    rng = np.random.default_rng(seed)
    pts = sample_near(space, base, z, samples, T + r + 2, rng) if isinstance(samples, int) else list(samples)
    rz = ray(space, base, z)
    if space.is_tree:
        n = int(math.floor(T))
        v0, v1, f = rz.vertex(n), rz.vertex(n + 1), T - n
    else:
        caster = rz.eval(T)
    seen = 0
    for w in pts:
        rw = Ray(space, base, w)
        if space.is_tree:
            inside = _tree_point_to_ray(v0, v1, f, rw, T + r) < r
        else:
            inside = _hp_point_to_ray(caster, rw, T + r, r / 4) < r
        if not inside:
            continue
        seen += 1
        if not visual_ball_contains(space, base, z, rho, w):
            return ShadowCheck(False, len(pts), seen, w)
    return ShadowCheck(True, len(pts), seen)


def random_cyclic_tail(k: int, first_forbidden: set, rng: np.random.Generator, max_len: int = 3) -> Word:
    """A random period of length 1..max_len that is cyclically reduced."""
    letters = [g for g in range(-k, k + 1) if g]
    while True:
        n = int(rng.integers(1, max_len + 1))
        w: list[int] = []
        for i in range(n):
            bad = first_forbidden if i == 0 else {-w[-1]}
            choices = [g for g in letters if g not in bad]
            w.append(choices[int(rng.integers(len(choices)))])
        if n == 1 or w[-1] != -w[0]:
            return tuple(w)


def sample_near(space: ModelSpace, base, z, n: int, depth: float, rng: np.random.Generator) -> list:
    """n boundary points whose product with z (seen from base) is spread over [0, depth]."""
    out = []
    if space.is_tree:
        rel = _relative(base, z)
        letters = [g for g in range(-space.k, space.k + 1) if g]
        for _ in range(n):
            m = int(rng.integers(0, int(math.ceil(depth)) + 1))
            head = list(rel.prefix(m))
            forbidden = {rel.letter(m)} | ({-head[-1]} if head else set())
            choices = [g for g in letters if g not in forbidden]
            head.append(choices[int(rng.integers(len(choices)))])
            for _ in range(int(rng.integers(0, 3))):
                choices = [g for g in letters if g != -head[-1]]
                head.append(choices[int(rng.integers(len(choices)))])
            per = random_cyclic_tail(space.k, {-head[-1]}, rng)
            out.append(translate(base, EventualWord(tuple(head), per)) if base else EventualWord(tuple(head), per))
        return out
    w0 = _disk(base, z)
    for _ in range(n):
        phi = math.exp(-rng.uniform(0, depth)) * (1 if rng.random() < 0.5 else -1)
        out.append(_from_disk(base, w0 * complex(math.cos(phi), math.sin(phi))))
    return out


# ---------------------------------------------------------------- limit sets


class ThetaRule:
    """An increasing unbounded sequence 0 <= theta_0 < theta_1 < ..."""

    def value(self, i: int) -> float:
        raise NotImplementedError

    def first_above(self, level: float) -> int:
        """Smallest i with theta_i > level."""
        i = 0
        while self.value(i) <= level:
            i += 1
        return i


@dataclass(frozen=True)
class UniformGrid(ThetaRule):
    step: float

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("grid step must be > 0")

    def value(self, i: int) -> float:
        return i * self.step


@dataclass(frozen=True)
class ExplicitList(ThetaRule):
    values: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if len(v) < 2 or any(b <= a for a, b in zip(v, v[1:])) or v[0] < 0:
            raise ValueError("theta list must be non-negative and strictly increasing")
        object.__setattr__(self, "values", v)

    def value(self, i: int) -> float:
        if i >= len(self.values):
            raise IndexError(f"theta list has only {len(self.values)} entries")
        return self.values[i]


@dataclass(frozen=True)
class ErgodicRule(ThetaRule):
    """theta_i = limit*i + amplitude*i**exponent; theta_i / i -> limit."""

    limit: float
    amplitude: float = 0.0
    exponent: float = 0.5

    def __post_init__(self):
        if self.limit <= 0 or self.amplitude < 0 or not (0 <= self.exponent < 1):
            raise ValueError("need limit > 0, amplitude >= 0 and 0 <= exponent < 1")

    def value(self, i: int) -> float:
        return self.limit * i + (self.amplitude * i**self.exponent if i else 0.0)

    def ratio(self, i: int) -> float:
        return self.value(i) / i


@dataclass(frozen=True)
class LimitSetSpec:
    """Lambda_{tau, Theta}: boundary points z such that for every i the ray
    [x, z] has a point y_i with d(x, y_i) in [theta_i, theta_{i+1}] lying
    within tau of the orbit."""

    group: GroupSpec
    basepoint: object
    tau: float
    theta: ThetaRule = None

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.theta is None:
            object.__setattr__(self, "theta", UniformGrid(self.tau))
        self.group.space.check_point(self.basepoint)

    @property
    def space(self) -> ModelSpace:
        return self.group.space


def net_window(spec: LimitSetSpec, rho: float) -> tuple[float, float, int]:
    """Distance window for the orbit points whose shadows give a rho-net.

    If z is in Lambda_{tau,Theta} and i is the first index with
    theta_i > log(1/rho) + 3 tau, some orbit point g x with d(x, g x) in
    [theta_i - tau, theta_{i+1} + tau] lies within tau of [x, z]; then z is
    in Shad_x(g x, 2 tau), which sits in the visual ball of radius rho around
    any boundary point whose ray passes through g x.
    """
    L = math.log(1.0 / rho)
    i = spec.theta.first_above(L + 3 * spec.tau)
    lo = spec.theta.value(i) - spec.tau
    hi = spec.theta.value(i + 1) + spec.tau
    return lo, hi, int(math.floor(L + TOL)) + 1


def limit_set_net(spec: LimitSetSpec, rho: float, budget: int | None = None) -> list:
    """Boundary points whose rho-balls cover Lambda_{tau,Theta}, one per shadow
    up to coincident balls. Tree output is exact and sorted."""
    if not (0 < rho <= 1):
        raise ValueError("rho must lie in (0, 1]")
    lo, hi, depth = net_window(spec, rho)
    x = spec.basepoint
    if spec.space.is_tree:
        graph = FoldedGraph.from_words(spec.group.generators).rebased(x)
        heads = tree_net_prefixes(graph, depth, int(math.ceil(lo - TOL)), int(math.floor(hi + TOL)))
        return [translate(x, _extend(h)) if x else _extend(h) for h in heads]
    kwargs = {} if budget is None else {"budget": budget}
    ball = enumerate_orbit(spec.group, x, hi, **kwargs)
    reps = sorted({round(hp_geodesic_endpoint(x, gx), 12) for _, gx, d in ball.points if lo - TOL <= d and d > 0})
    return [IdealPoint(r) for r in reps]


def _extend(w: Word) -> EventualWord:
    return EventualWord(w, (w[-1],)) if w else EventualWord((), (1,))


def closed_path_lengths(graph: FoldedGraph, max_len: int) -> list[set]:
    """reach[n] = states (vertex, last letter) from which a reduced path of
    length exactly n, not starting with the inverse of `last`, ends at the base."""
    letters = sorted({l for d in graph.adj for l in d} | {0})
    states = [(v, l) for v in range(len(graph)) for l in letters]
    reach = [{(graph.base, l) for l in letters}]
    for _ in range(max_len):
        prev = reach[-1]
        reach.append(
            {(v, last) for v, last in states if any(l != -last and (w, l) in prev for l, w in graph.adj[v].items())}
        )
    return reach


def tree_net_prefixes(graph: FoldedGraph, depth: int, lo: int, hi: int) -> list[Word]:
    """Distinct length-`depth` prefixes of closed reduced paths at the base
    with length in [lo, hi], each extended to the smallest such path."""
    lo = max(lo, depth)
    if hi < lo:
        return []
    reach = closed_path_lengths(graph, hi)

    def can_finish(v, last, used):
        return any((v, last) in reach[n] for n in range(max(0, lo - used), hi - used + 1))

    out = []
    stack = [(graph.base, 0, ())]
    while stack:
        v, last, w = stack.pop()
        if not can_finish(v, last, len(w)):
            continue
        if len(w) == depth:
            out.append(_complete(graph, reach, v, last, w, lo, hi))
            continue
        for l in sorted(graph.adj[v], reverse=True):
            if l != -last:
                stack.append((graph.adj[v][l], l, w + (l,)))
    return sorted(out)


def _complete(graph, reach, v, last, w, lo, hi) -> Word:
    # extend greedily by the smallest letter that keeps a closing length in [lo, hi]
    while True:
        used = len(w)
        if v == graph.base and lo <= used <= hi:
            return w
        for l in sorted(graph.adj[v]):
            if l == -last:
                continue
            u = graph.adj[v][l]
            if any((u, l) in reach[n] for n in range(max(0, lo - used - 1), hi - used)):
                v, last, w = u, l, w + (l,)
                break
        else:
            raise RuntimeError("no closing path")


def membership_lambda_tau_theta(spec: LimitSetSpec, z, depth: int) -> bool:
    """Finite certificate: conditions i = 0..depth of the Lambda_{tau,Theta} definition."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    space = spec.space
    check_boundary(space, z)
    x = spec.basepoint
    windows = [(spec.theta.value(i), spec.theta.value(i + 1)) for i in range(depth + 1)]
    if space.is_tree:
        graph = FoldedGraph.from_words(spec.group.generators).rebased(x)
        rel = _relative(x, z)
        top = int(math.ceil(windows[-1][1])) + 1
        dist = [graph.orbit_distance(rel.prefix(n)) for n in range(top + 1)]

        def near(a, b):
            # the orbit distance along the ray is 1-Lipschitz and linear between
            # vertices, so its minimum on [a, b] sits at a vertex or an end
            cands = [dist[n] for n in range(int(math.ceil(a)), int(math.floor(b)) + 1)]
            for t in (a, b):
                n = int(math.floor(t))
                f = t - n
                cands.append(min(dist[n] + f, dist[n + 1] + 1 - f))
            return min(cands)

        return all(near(a, b) <= spec.tau + TOL for a, b in windows)
    top = windows[-1][1]
    ball = enumerate_orbit(spec.group, x, top + spec.tau + 1)
    ox = np.array([p.x for _, p, _ in ball.points])
    oy = np.array([p.y for _, p, _ in ball.points])
    rz = Ray(space, x, z)
    for a, b in windows:
        ts = np.linspace(a, b, max(2, int(math.ceil((b - a) / 0.02)) + 1))
        xs, ys = rz.points(ts)
        d = hp_distance_array(xs[:, None], ys[:, None], ox[None, :], oy[None, :])
        if d.min() > spec.tau + TOL:
            return False
    return True
