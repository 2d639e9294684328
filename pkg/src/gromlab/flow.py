"""Geodesic flow on trees, their quotient graphs and the half-plane.

Lines are unit-speed geodesics; two lines are compared by the f-metric
    f(g1, g2) = ∫ d(g1(s), g2(s)) f(s) ds
for a two-sided exponential kernel f. On trees the integrand is piecewise
linear with breakpoints on the half-integer grid, so window integrals are
exact and only the tails need bounding. Since t -> d(g1(t), g2(t)) can move
by at most 2 per unit time, the tails are pinned between an optimistic and a
pessimistic closed form; every reported value carries that gap as its error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .action import FoldedGraph, GroupSpec, full_free_group
from .boundary import EventualWord, IdealPoint, random_cyclic_tail, translate
from .dimension import DimEstimate, SymbolicTree, _slopes
from .space import (
    BASE_HPOINT,
    TOL,
    HPoint,
    Word,
    ball_words,
    hp_distance,
    is_reduced,
    lcp,
    letters_of,
    mobius,
    multiply,
    tree,
    tree_distance,
)

TAIL_LIMIT = 1e-6
DEFAULT_TAIL = 1e-9


class EnumerationBudgetExceeded(RuntimeError):
    def __init__(self, what: str, budget: int):
        super().__init__(f"{what}: more than {budget} paths")
        self.budget = budget


# ---------------------------------------------------------------- kernel


@dataclass(frozen=True)
class Kernel:
    """f(s) = (beta/2) exp(-beta |s|)."""

    beta: float

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")

    @classmethod
    def for_injectivity(cls, iota: float) -> "Kernel":
        """The kernel with C = iota/2."""
        return cls(4.0 / iota)

    @property
    def C(self) -> float:
        return 2.0 / self.beta

    def density(self, s):
        return 0.5 * self.beta * np.exp(-self.beta * np.abs(s))

    def cdf(self, s):
        s = np.asarray(s, dtype=float)
        e = 0.5 * np.exp(-self.beta * np.abs(s))
        return np.where(s < 0, e, 1.0 - e)

    def _first(self, s):
        # antiderivative of s f(s)
        s = np.asarray(s, dtype=float)
        e = 0.5 * np.exp(-self.beta * np.abs(s))
        return np.where(s < 0, e * (s - 1 / self.beta), -e * (s + 1 / self.beta))

    def mass(self, a, b):
        return self.cdf(b) - self.cdf(a)

    def moment(self, a, b):
        return self._first(b) - self._first(a)

    def excess(self, k):
        """∫_k^∞ (s - k) f(s) ds."""
        k = np.asarray(k, dtype=float)
        return np.maximum(0.0, -k) + np.exp(-self.beta * np.abs(k)) / (2 * self.beta)

    def block(self, a: float, b: float, i: float) -> float:
        """∫ 2 dist(s + i, [a, b]) f(s) ds: the f-distance at time i of two tree
        lines that coincide exactly on [a, b]."""
        return float(2 * self.excess(i - a) + 2 * self.excess(b - i))


def _pl_weights(kernel: Kernel, nodes: np.ndarray, shift: float) -> np.ndarray:
    """w with w·y = ∫ y(u) f(u - shift) du over [nodes[0], nodes[-1]] for y
    piecewise linear on the nodes."""
    a, b = nodes[:-1] - shift, nodes[1:] - shift
    m = kernel.mass(a, b)
    w1 = (kernel.moment(a, b) - a * m) / (b - a)
    w = np.zeros(len(nodes))
    w[:-1] += m - w1
    w[1:] += w1
    return w


def _tail_bounds(kernel: Kernel, y, k):
    """Bounds for ∫_k^∞ d(s) f(s) ds when d(k) = y and d is 2-Lipschitz, d >= 0."""
    y = np.asarray(y, dtype=float)
    pess = y * (1 - kernel.cdf(k)) + 2 * kernel.excess(k)
    top = k + y / 2
    m = kernel.mass(k, top)
    opt = y * m - 2 * (kernel.moment(k, top) - k * m)
    return np.maximum(opt, 0.0), pess


class _Window:
    """Distance profiles sampled on a regular grid over [lo, hi]; values of
    the f-integral at given shifts with tails bounded both ways."""

    def __init__(self, kernel: Kernel, lo: float, hi: float, step: float, shifts: Sequence[float]):
        self.kernel, self.lo, self.hi = kernel, lo, hi
        n = int(round((hi - lo) / step))
        self.nodes = lo + step * np.arange(n + 1)
        self.shifts = list(shifts)
        self.W = np.stack([_pl_weights(kernel, self.nodes, i) for i in self.shifts], axis=1)

    def bounds(self, Y: np.ndarray):
        """(optimistic, pessimistic) integrals, shape (pairs, shifts)."""
        Y = np.atleast_2d(Y)
        core = Y @ self.W
        lo_opt, lo_pess, hi_opt, hi_pess = [], [], [], []
        for i in self.shifts:
            o, p = _tail_bounds(self.kernel, Y[:, 0], i - self.lo)
            lo_opt.append(o)
            lo_pess.append(p)
            o, p = _tail_bounds(self.kernel, Y[:, -1], self.hi - i)
            hi_opt.append(o)
            hi_pess.append(p)
        opt = core + np.stack(lo_opt, 1) + np.stack(hi_opt, 1)
        pess = core + np.stack(lo_pess, 1) + np.stack(hi_pess, 1)
        return opt, pess


# ---------------------------------------------------------------- lines


def _drop(z: EventualWord, m: int) -> EventualWord:
    pre, per = z.preperiod, z.period
    if m <= len(pre):
        return EventualWord(pre[m:], per)
    r = (m - len(pre)) % len(per)
    return EventualWord((), per[r:] + per[:r])


def _prepend(letters: Word, z: EventualWord) -> EventualWord:
    return EventualWord(tuple(letters) + z.preperiod, z.period)


@dataclass(frozen=True)
class GeodesicLine:
    """Unit-speed line in the tree of F_k through the vertex `origin` at time 0.

    future lists the edge labels walked for t > 0; past lists those walked
    backwards from the origin for t < 0, so g(-1) = origin · past[0].
    """

    origin: Word
    past: EventualWord
    future: EventualWord

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(self.origin))
        if not is_reduced(self.origin):
            raise ValueError("origin must be a reduced word")
        if self.past.letter(0) == self.future.letter(0):
            raise ValueError("line backtracks at its origin")

    @classmethod
    def between(cls, minus: EventualWord, plus: EventualWord) -> "GeodesicLine":
        """The line from minus to plus, anchored at its closest point to the identity."""
        if minus == plus:
            raise ValueError("endpoints must differ")
        bound = len(minus.preperiod) + len(plus.preperiod) + len(minus.period) + len(plus.period)
        c = lcp(minus.prefix(bound), plus.prefix(bound))
        return cls(plus.prefix(c), _drop(minus, c), _drop(plus, c))

    def endpoints(self) -> tuple[EventualWord, EventualWord]:
        return translate(self.origin, self.past), translate(self.origin, self.future)

    def letter(self, m: int) -> int:
        """Label of the edge walked from g(m) to g(m+1)."""
        if m >= 0:
            return self.future.letter(m)
        return -self.past.letter(-m - 1)

    def vertex(self, n: int) -> Word:
        if n >= 0:
            return multiply(self.origin, self.future.prefix(n))
        return multiply(self.origin, self.past.prefix(-n))

    def vertices(self, lo: int, hi: int) -> list[Word]:
        out = [self.vertex(lo)]
        for m in range(lo, hi):
            out.append(multiply(out[-1], (self.letter(m),)))
        return out

    def point(self, t: float) -> tuple[Word, int, float]:
        """(vertex g(floor t), label of the next edge, fraction along it)."""
        m = math.floor(t)
        return self.vertex(m), self.letter(m), t - m

    def eval(self, t: float):
        """The vertex g(t) for integer t, else the point as (vertex, label, fraction)."""
        if float(t).is_integer():
            return self.vertex(int(t))
        return self.point(t)

    def shift(self, m: int) -> "GeodesicLine":
        """The flow Φ_m: the same line re-anchored at g(m)."""
        m = int(m)
        if m >= 0:
            head = self.future.prefix(m)
            return GeodesicLine(self.vertex(m), _prepend(tuple(-x for x in reversed(head)), self.past), _drop(self.future, m))
        head = self.past.prefix(-m)
        return GeodesicLine(self.vertex(m), _drop(self.past, -m), _prepend(tuple(-x for x in reversed(head)), self.future))


def _random_eventual(k: int, first_forbidden: set, rng: np.random.Generator, max_pre: int) -> EventualWord:
    letters = letters_of(k)
    pre: list[int] = []
    for i in range(int(rng.integers(0, max_pre + 1))):
        bad = first_forbidden if i == 0 else {-pre[-1]}
        choices = [g for g in letters if g not in bad]
        pre.append(choices[int(rng.integers(len(choices)))])
    per = random_cyclic_tail(k, {-pre[-1]} if pre else set(first_forbidden), rng)
    return EventualWord(tuple(pre), per)


def random_tree_line(k: int, rng: np.random.Generator, max_origin: int = 4, max_pre: int = 5) -> GeodesicLine:
    letters = letters_of(k)
    origin: list[int] = []
    for _ in range(int(rng.integers(0, max_origin + 1))):
        choices = [g for g in letters if not origin or g != -origin[-1]]
        origin.append(choices[int(rng.integers(len(choices)))])
    future = _random_eventual(k, set(), rng, max_pre)
    past = _random_eventual(k, {future.letter(0)}, rng, max_pre)
    return GeodesicLine(tuple(origin), past, future)


@dataclass(frozen=True)
class HalfPlaneLine:
    """Unit-speed geodesic from minus to plus; time 0 sits `origin` past the
    foot of the perpendicular dropped from i."""

    minus: IdealPoint
    plus: IdealPoint
    origin: float = 0.0

    def __post_init__(self):
        if self.minus == self.plus:
            raise ValueError("endpoints must differ")

    def _frame(self):
        a, b = self.minus.x, self.plus.x
        if math.isinf(b):
            m = np.array([[1.0, a], [0.0, 1.0]])
        elif math.isinf(a):
            m = np.array([[b, -1.0], [1.0, 0.0]])
        elif b > a:
            m = np.array([[b, a], [1.0, 1.0]]) / math.sqrt(b - a)
        else:
            m = np.array([[b, -a], [1.0, -1.0]]) / math.sqrt(a - b)
        w = mobius(np.linalg.inv(m), complex(BASE_HPOINT.x, BASE_HPOINT.y))
        return m, math.log(abs(w))

    def eval(self, t: float) -> HPoint:
        m, s0 = self._frame()
        z = mobius(m, 1j * math.exp(s0 + self.origin + t))
        return HPoint(float(z.real), abs(float(z.imag)))

    def shift(self, t: float) -> "HalfPlaneLine":
        return HalfPlaneLine(self.minus, self.plus, self.origin + t)


# ---------------------------------------------------------------- f-metric


@dataclass(frozen=True)
class FValue:
    value: float
    error: float


def _tree_profile(va: Sequence[Word], vb: Sequence[Word]) -> np.ndarray:
    """d(a(t), b(t)) on the half-integer grid, given vertices at integer times."""
    d = [tree_distance(p, q) for p, q in zip(va, vb)]
    y = np.empty(2 * len(d) - 1)
    y[0::2] = d
    for j in range(len(d) - 1):
        # crossing the same edge in opposite directions: they meet mid-edge
        tent = va[j] == vb[j + 1] and va[j + 1] == vb[j]
        y[2 * j + 1] = 0.0 if tent else 0.5 * (d[j] + d[j + 1])
    return y


def _required_window(kernel: Kernel, err_at: Callable[[int], float], target: float, start: int) -> int:
    M = start
    while err_at(M) > target:
        M += 1
        if M > start + 10_000:
            raise RuntimeError("tail bound does not converge")
    return M


def _tail_gap(kernel: Kernel, y_lo: float, y_hi: float, M: float) -> float:
    o1, p1 = _tail_bounds(kernel, y_lo, M)
    o2, p2 = _tail_bounds(kernel, y_hi, M)
    return float(p1 - o1 + p2 - o2) / 2


def f_integral(kernel: Kernel, g1, g2, T_int: float | None = None) -> FValue:
    """f(g1, g2) with a certified error. The window is [-T_int, T_int]; by
    default it is grown until the tail error is below 1e-9."""
    if isinstance(g1, GeodesicLine) and isinstance(g2, GeodesicLine):
        def gap(M):
            return _tail_gap(kernel, tree_distance(g1.vertex(-M), g2.vertex(-M)), tree_distance(g1.vertex(M), g2.vertex(M)), M)

        def compute(M):
            win = _Window(kernel, -M, M, 0.5, [0.0])
            opt, pess = win.bounds(_tree_profile(g1.vertices(-M, M), g2.vertices(-M, M)))
            return FValue(float(opt[0, 0] + pess[0, 0]) / 2, float(pess[0, 0] - opt[0, 0]) / 2)

    elif isinstance(g1, HalfPlaneLine) and isinstance(g2, HalfPlaneLine):
        def dist(s):
            return hp_distance(g1.eval(s), g2.eval(s))

        def gap(M):
            return _tail_gap(kernel, dist(-M), dist(M), M)

        def compute(M):
            val, qerr = integrate.quad(lambda s: dist(s) * float(kernel.density(s)), -M, M, points=[0.0], limit=400, epsabs=1e-11, epsrel=1e-11)
            o1, p1 = _tail_bounds(kernel, dist(-M), M)
            o2, p2 = _tail_bounds(kernel, dist(M), M)
            return FValue(val + float(o1 + p1 + o2 + p2) / 2, qerr + float(p1 - o1 + p2 - o2) / 2)

    else:
        raise TypeError("both lines must live in the same space")
    start = max(1, math.ceil(2 / kernel.beta))
    if T_int is None:
        return compute(_required_window(kernel, gap, DEFAULT_TAIL, start))
    M = max(1, math.ceil(T_int))
    if gap(M) > TAIL_LIMIT:
        need = _required_window(kernel, gap, TAIL_LIMIT, M)
        raise ValueError(f"T_int={T_int} leaves a tail bound above {TAIL_LIMIT:g}; need T_int >= {need}")
    return compute(M)


def f_distance(kernel: Kernel, g1, g2, T_int: float | None = None) -> float:
    return f_integral(kernel, g1, g2, T_int).value


def dyn_distance(kernel: Kernel, g1, g2, n: int, T_int: float | None = None) -> float:
    """max over 0 <= i < n of f(Φ_i g1, Φ_i g2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return max(f_distance(kernel, g1.shift(i), g2.shift(i), T_int) for i in range(n))


def sup_distance(kernel: Kernel, g1, g2, T: float, T_int: float | None = None) -> float:
    """sup over t in [0, T] of f(Φ_t g1, Φ_t g2).

    The distance between two geodesics in a tree or in the hyperbolic plane is
    convex in time, so is its f-average, and the sup sits at t = 0 or t = T.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    if isinstance(g1, GeodesicLine) and not float(T).is_integer():
        raise ValueError("tree lines shift by whole units")
    shift = int(T) if isinstance(g1, GeodesicLine) else T
    return max(f_distance(kernel, g1, g2, T_int), f_distance(kernel, g1.shift(shift), g2.shift(shift), T_int))


# ---------------------------------------------------------------- quotient graphs


class QuotientGraph:
    """Γ\\T for a subgroup Γ of F_k.

    The folded graph of Γ plus the hair towards the basepoint is stored; the
    hanging trees are implicit. A tree vertex w projects to the coset Γw,
    written (graph vertex where reading w stops, unread suffix).
    """

    def __init__(self, group: GroupSpec, basepoint: Word = ()):
        if not group.space.is_tree:
            raise ValueError("quotient graphs need a tree group")
        g = FoldedGraph.from_words(group.generators)
        gx = g.rebased(tuple(basepoint))
        self.group = group
        self.k = group.space.k
        self.graph = FoldedGraph(gx.adj, g.base)
        self.anchor = gx.base
        self._dist = [FoldedGraph(gx.adj, v).distances_to_base() for v in range(len(gx.adj))]

    @classmethod
    def rose(cls, k: int) -> "QuotientGraph":
        return cls(full_free_group(tree(k)))

    def locate(self, word: Word) -> tuple[int, Word]:
        v, used = self.graph.read(word)
        return v, tuple(word[used:])

    def vertex_distance(self, p: tuple[int, Word], q: tuple[int, Word]) -> int:
        (u, s), (v, t) = p, q
        if u == v and s and t and s[0] == t[0]:
            return len(s) + len(t) - 2 * lcp(s, t)
        return len(s) + self._dist[u][v] + len(t)

    def distance(self, p: Word, q: Word) -> int:
        """Quotient distance between the images of two tree vertices."""
        return self.vertex_distance(self.locate(p), self.locate(q))

    def point_distance(self, p: tuple[Word, int, float], q: tuple[Word, int, float]) -> float:
        """Quotient distance between images of edge points (vertex, label, fraction)."""
        (w1, l1, u1), (w2, l2, u2) = p, q
        a = (self.locate(w1), self.locate(multiply(w1, (l1,))))
        b = (self.locate(w2), self.locate(multiply(w2, (l2,))))
        best = min(c1 + c2 + self.vertex_distance(x, y) for x, c1 in zip(a, (u1, 1 - u1)) for y, c2 in zip(b, (u2, 1 - u2)))
        if (a[0], l1) == (b[0], l2):
            best = min(best, abs(u1 - u2))
        if (a[0], l1) == (b[1], -l2):
            best = min(best, abs(u1 - (1 - u2)))
        return best

    def ktau_core(self, tau: float) -> dict[int, dict[int, int]]:
        """Vertices and edges carrying a bi-infinite path inside the closed
        tau-ball around the image of the basepoint."""
        d = self._dist[self.anchor]
        adj = {v: {l: w for l, w in self.graph.adj[v].items() if d[w] <= tau + TOL} for v in range(len(self.graph)) if d[v] <= tau + TOL}
        adj = {v: {l: w for l, w in e.items() if w in adj} for v, e in adj.items()}
        changed = True
        while changed:
            changed = False
            for v in [v for v, e in adj.items() if len(e) <= 1]:
                for w in adj.pop(v).values():
                    if w in adj:
                        adj[w] = {l: x for l, x in adj[w].items() if x != v}
                changed = True
        return adj


@dataclass(frozen=True)
class QuotientLine:
    """Non-backtracking bi-infinite edge path in a quotient graph, anchored at
    the graph vertex `vertex`; past and future as for tree lines."""

    space: QuotientGraph = field(repr=False)
    vertex: int
    past: EventualWord
    future: EventualWord

    def __post_init__(self):
        if self.past.letter(0) == self.future.letter(0):
            raise ValueError("line backtracks at its origin")
        span = len(self.space.graph) + 1
        for z in (self.past, self.future):
            word = z.prefix(len(z.preperiod) + len(z.period) * span)
            if self.space.graph.read(word, self.vertex)[1] < len(word):
                raise ValueError("line leaves the stored part of the quotient graph")

    def _walk(self, z: EventualWord, n: int) -> list[int]:
        out = [self.vertex]
        for l in z.prefix(n):
            out.append(self.space.graph.adj[out[-1]][l])
        return out

    def vertex_at(self, n: int) -> int:
        return self._walk(self.future if n >= 0 else self.past, abs(n))[-1]

    def periodic_span(self) -> int:
        """Times -span..span determine the whole vertex sequence."""
        return max(len(self.past.preperiod), len(self.future.preperiod)) + (len(self.past.period) + len(self.future.period)) * (len(self.space.graph) + 1)

    def shift(self, m: int) -> "QuotientLine":
        if m >= 0:
            head = self.future.prefix(m)
            return QuotientLine(self.space, self.vertex_at(m), _prepend(tuple(-x for x in reversed(head)), self.past), _drop(self.future, m))
        head = self.past.prefix(-m)
        return QuotientLine(self.space, self.vertex_at(m), _drop(self.past, -m), _prepend(tuple(-x for x in reversed(head)), self.future))


class KTauSet:
    """Quotient lines whose integer-time vertices stay within tau of the image
    of the basepoint."""

    def __init__(self, space: QuotientGraph, tau: float):
        if tau < 0:
            raise ValueError("tau must be >= 0")
        self.space, self.tau = space, tau
        self.core = space.ktau_core(tau)

    def __contains__(self, line: QuotientLine) -> bool:
        d = self.space._dist[self.space.anchor]
        n = line.periodic_span()
        verts = line._walk(line.future, n) + line._walk(line.past, n)
        return all(d[v] <= self.tau + TOL for v in verts)

    def is_empty(self) -> bool:
        return not self.core


def quotient_f_integral(kernel: Kernel, space: QuotientGraph, g1: GeodesicLine, g2: GeodesicLine, T_int: float | None = None) -> FValue:
    """f-distance of the projections of two tree lines, integrating the
    quotient distance. That distance is piecewise linear with breakpoints on
    the quarter grid."""

    def qd(t):
        return space.point_distance(g1.point(t), g2.point(t))

    def gap(M):
        return _tail_gap(kernel, qd(-M), qd(M), M)

    start = max(1, math.ceil(2 / kernel.beta))
    M = _required_window(kernel, gap, DEFAULT_TAIL, start) if T_int is None else max(1, math.ceil(T_int))
    win = _Window(kernel, -M, M, 0.25, [0.0])
    y = np.array([qd(t) for t in win.nodes])
    opt, pess = win.bounds(y)
    return FValue(float(opt[0, 0] + pess[0, 0]) / 2, float(pess[0, 0] - opt[0, 0]) / 2)


# ---------------------------------------------------------------- subshift oracle


def _graph_adj(obj, tau) -> dict[int, dict[int, int]]:
    if isinstance(obj, QuotientGraph):
        if tau is None:
            core = obj.graph.core()
            return dict(enumerate(core.adj))
        return obj.ktau_core(tau)
    if isinstance(obj, FoldedGraph):
        return dict(enumerate(obj.core().adj))
    if isinstance(obj, dict):
        return obj
    raise TypeError("expected a QuotientGraph, FoldedGraph or adjacency dict")


def subshift_entropy(obj, tau: float | None = None, rtol: float = 1e-10) -> float:
    """log of the spectral radius of the non-backtracking edge matrix of the
    core (the tau-core for a QuotientGraph with tau given); -inf when empty."""
    adj = _graph_adj(obj, tau)
    edges = [(v, l, w) for v, e in sorted(adj.items()) for l, w in sorted(e.items())]
    if not edges:
        return -math.inf
    idx = {(v, l): i for i, (v, l, _) in enumerate(edges)}
    B = np.zeros((len(edges), len(edges)))
    for i, (_, l, w) in enumerate(edges):
        for l2 in adj[w]:
            if l2 != -l:
                B[i, idx[(w, l2)]] = 1.0
    if not B.any():
        return -math.inf
    # B + I is primitive on each irreducible class, so plain power iteration
    # converges even for periodic graphs such as a single cycle
    M = B + np.eye(len(edges))
    v = np.ones(len(edges)) / len(edges)
    lam = 0.0
    for _ in range(200_000):
        u = M @ v
        new = float(u.sum())
        u /= new
        if abs(new - lam) <= rtol * new and np.abs(u - v).max() <= rtol:
            lam = new
            break
        v, lam = u, new
    rho = lam - 1.0
    return math.log(rho) if rho > TOL else -math.inf


# ---------------------------------------------------------------- path enumeration


def _paths(adj, v: int, last: int, length: int, budget: int | None = None, what: str = "paths") -> list:
    """Non-backtracking label sequences of the given length from v, arriving by `last`."""
    out = [((), v, last)]
    for _ in range(length):
        out = [(seq + (l,), w, l) for seq, u, pl in out for l, w in sorted(adj[u].items()) if l != -pl]
        if budget is not None and len(out) > budget:
            raise EnumerationBudgetExceeded(what, budget)
    return out


def _continuation(adj, v: int, last: int) -> tuple[Word, Word]:
    """Deterministic non-backtracking continuation from v, as (preperiod, period)."""
    seen: dict = {}
    letters: list[int] = []
    state = (v, last)
    while state not in seen:
        seen[state] = len(letters)
        u, pl = state
        l = min((l for l in adj[u] if l != -pl), key=lambda x: (abs(x), x < 0))
        letters.append(l)
        state = (adj[u][l], l)
    j = seen[state]
    return tuple(letters[:j]), tuple(letters[j:])


# ---------------------------------------------------------------- Bowen entropy


def _margin(kernel: Kernel, span: int, r: float, limit: int = 40) -> int:
    """Smallest w with: two lines sharing [-w, span + w] are within r at shifts 0 and span."""
    for w in range(limit + 1):
        d = max(kernel.block(-w, span + w, 0), kernel.block(-w, span + w, span))
        if d <= r + TOL:
            return w
    raise ValueError(f"scale r={r} needs more than {limit} margin letters")


def _critical_scale(kernel: Kernel) -> float:
    """Below this, lines within r coincide at both ends of the horizon."""
    return float(2 * kernel.excess(-1))


def _greedy_in_groups(groups: dict, dist: Callable, r: float) -> list:
    centers = []
    for key in sorted(groups):
        chosen: list = []
        for m in sorted(groups[key]):
            if not any(dist(m, c) <= r + TOL for c in chosen):
                chosen.append(m)
        centers.extend((key, c) for c in chosen)
    return centers


def _lifted_blocks(va: list[int], la: Word, vb: list[int], lb: Word, lo: int) -> list[tuple[int, int]]:
    """Maximal time intervals on which two quotient paths coincide."""
    blocks = []
    start = None
    for j in range(len(va)):
        if va[j] != vb[j]:
            if start is not None:
                blocks.append((start + lo, j - 1 + lo))
            start = None
            continue
        if start is None:
            start = j
        elif la[j - 1] != lb[j - 1]:
            blocks.append((start + lo, j - 1 + lo))
            start = j
    if start is not None:
        blocks.append((start + lo, len(va) - 1 + lo))
    return blocks


def _bowen_cover(space: QuotientGraph, tau: float, kernel: Kernel, n: int, r: float, budget: int):
    if n < 1:
        raise ValueError("horizon must be >= 1")
    if r <= 0:
        raise ValueError("r must be positive")
    core = space.ktau_core(tau)
    if not core:
        raise ValueError("K_tau is empty: no bi-infinite path stays in the tau-ball")
    w = _margin(kernel, n - 1, r)
    lines = []
    for v0 in sorted(core):
        for fut, _, _ in _paths(core, v0, 0, n - 1 + w, budget, "K_tau paths"):
            first = -fut[0] if fut else 0
            for past, _, _ in _paths(core, v0, first, w):
                lines.append((v0, past, fut))
                if len(lines) > budget:
                    raise EnumerationBudgetExceeded("K_tau paths", budget)
    if r < _critical_scale(kernel):
        groups: dict = {}
        for v0, past, fut in lines:
            groups.setdefault((v0, fut[: n - 1]), []).append((past, fut[n - 1 :]))

        def dist(a, b):
            p, q = lcp(a[0], b[0]), lcp(a[1], b[1])
            return max(kernel.block(-p, n - 1 + q, 0), kernel.block(-p, n - 1 + q, n - 1))

        centers = [(key[0], past, key[1] + fm) for key, (past, fm) in _greedy_in_groups(groups, dist, r)]
        return core, centers, w
    # coarse scales: compare every pair through its coincidence blocks
    def walk(line):
        v0, past, fut = line
        back = [v0]
        for l in past:
            back.append(core[back[-1]][l])
        fwd = [v0]
        for l in fut:
            fwd.append(core[fwd[-1]][l])
        verts = back[::-1] + fwd[1:]
        labels = tuple(-l for l in reversed(past)) + fut
        return verts, labels

    walked = {line: walk(line) for line in lines}

    def ldist(a, b):
        (va, la), (vb, lb) = walked[a], walked[b]
        blocks = _lifted_blocks(va, la, vb, lb, -w)
        if not blocks:
            return math.inf
        return min(max(kernel.block(x, y, 0), kernel.block(x, y, n - 1)) for x, y in blocks)

    centers = [c for _, c in _greedy_in_groups({0: lines}, ldist, r)]
    return core, centers, w


def ktau_net(space: QuotientGraph, tau: float, kernel: Kernel, n: int, r: float, budget: int = 2_000_000) -> list[QuotientLine]:
    """An r-cover of K_tau for the horizon-n dynamical distance, by greedy
    selection over the paths through the tau-core.

    Two quotient lines are compared through lifts that coincide on a common
    stretch: the distance used is the least, over the maximal stretches on
    which the paths agree, of the horizon-n distance of the corresponding lifts.
    Stretches are cut at the enumeration window, which only overestimates, so
    the returned set is a certified cover.
    """
    core, centers, _ = _bowen_cover(space, tau, kernel, n, r, budget)
    out = []
    for v0, past, fut in centers:
        end = v0
        for l in fut:
            end = core[end][l]
        pre, per = _continuation(core, end, fut[-1] if fut else 0)
        future = EventualWord(fut + pre, per)
        back = v0
        for l in past:
            back = core[back][l]
        pre, per = _continuation(core, back, past[-1] if past else -future.letter(0))
        out.append(QuotientLine(space, v0, EventualWord(past + pre, per), future))
    return out


def bowen_entropy(space: QuotientGraph, tau: float, kernel: Kernel, r: float, n_min: int, n_max: int, budget: int = 2_000_000) -> DimEstimate:
    """Growth of Cov(K_tau, r) under the horizon-n dynamical distance; the
    slopes are min/max of the unit-step increments of log Cov."""
    if n_max < n_min + 3:
        raise ValueError("need n_max >= n_min + 3")
    scales = list(range(n_min, n_max + 1))
    counts, margins = [], []
    for n in scales:
        _, centers, w = _bowen_cover(space, tau, kernel, n, r, budget)
        counts.append(len(centers))
        margins.append(w)
    logs = [math.log(c) for c in counts]
    diag = _slopes(scales, logs)
    diag["margins"] = margins
    inc = diag["increments"]
    return DimEstimate(scales, counts, min(inc), max(inc), diag)


# ---------------------------------------------------------------- cover decay of dynamical balls


@dataclass(frozen=True)
class KeyLemmaRow:
    T: int
    value: float
    ball: int
    cover: int


def _tree_neighbors(v: Word, k: int) -> list[Word]:
    return [multiply(v, (l,)) for l in letters_of(k)]


def _walks(v: Word, prev: Word | None, steps: int, k: int) -> list[list[Word]]:
    """Non-backtracking walks of the given length leaving v, not via prev."""
    out: list[list[Word]] = [[]]
    for _ in range(steps):
        out = [
            q + [u]
            for q in out
            for u in _tree_neighbors(q[-1] if q else v, k)
            if u != (q[-2] if len(q) > 1 else (v if q else prev))
        ]
    return out


def _key_lemma_row(kernel: Kernel, center: GeodesicLine, k: int, R: float, r: float, T: int, margin: int, budget: int) -> KeyLemmaRow:
    lo, hi = -margin, T - 1 + margin
    c = center.vertices(lo, hi)
    # lines in the ball stay within R + C of the center at times 0..T-1
    D = int(math.floor(R + kernel.C + TOL))
    start = [multiply(c[-lo], u) for u in ball_words(D, letters_of(k))]
    paths = [[v] for v in start if tree_distance(v, c[-lo]) <= D]
    for t in range(1, T):
        nxt = []
        for p in paths:
            for v in _tree_neighbors(p[-1], k):
                if (len(p) < 2 or v != p[-2]) and tree_distance(v, c[t - lo]) <= D:
                    nxt.append(p + [v])
        paths = nxt
        if len(paths) > budget:
            raise EnumerationBudgetExceeded("dynamical-ball paths", budget)
    lines = []
    for p in paths:
        prev = p[-2] if len(p) > 1 else None
        for fwd in _walks(p[-1], prev, margin, k):
            q = p + fwd
            for back in _walks(q[0], q[1], margin, k):
                lines.append(back[::-1] + q)
        if len(lines) > budget:
            raise EnumerationBudgetExceeded("dynamical-ball paths", budget)
    lines = sorted({tuple(x) for x in lines})
    win = _Window(kernel, lo, hi, 0.5, [0.0, float(T - 1)])
    Y = np.array([_tree_profile(x, c) for x in lines]) if lines else np.zeros((0, 2 * (hi - lo) + 1))
    opt, _ = win.bounds(Y)
    # optimistic tails for membership: a superset of the ball gets covered
    ball = [x for x, o in zip(lines, opt.max(axis=1)) if o <= R + TOL]
    chosen: list = []
    for x in ball:
        if chosen:
            Yc = np.array([_tree_profile(x, y) for y in chosen])
            _, pess = win.bounds(Yc)
            if (pess.max(axis=1) <= r + TOL).any():
                continue
        chosen.append(x)
    return KeyLemmaRow(T, math.log(len(chosen)) / T, len(ball), len(chosen))


def key_lemma_rows(kernel: Kernel, center: GeodesicLine, R: float, r: float, T_list: Sequence[int], k: int = 2, margin: int = 2, budget: int = 2_000_000) -> list[KeyLemmaRow]:
    if not (R >= r > 0):
        raise ValueError("need R >= r > 0")
    if margin < 1:
        raise ValueError("margin must be >= 1")
    return [_key_lemma_row(kernel, center, k, R, r, int(T), margin, budget) for T in T_list]


def key_lemma_check(kernel: Kernel, center: GeodesicLine, R: float, r: float, T_list: Sequence[int], k: int = 2, margin: int = 2, budget: int = 2_000_000) -> list[tuple[int, float]]:
    """(T, (1/T) log Cov(B(center, R), r)) under the horizon-T dynamical
    distance in the tree, over integer-anchored lines.

    Ball membership uses lower bounds on the distance and covering uses upper
    bounds, so each count bounds the true covering number of the integer-anchored
    part of the ball from above.
    """
    return [(row.T, row.value) for row in key_lemma_rows(kernel, center, R, r, T_list, k, margin, budget)]


# ---------------------------------------------------------------- Lipschitz-topological entropy


def _admissible_tails(C: SymbolicTree, v: Word, length: int, first_forbidden: int, keep: int) -> list[Word]:
    """Label sequences s of the given length from v, with v·s admissible for C,
    cut to their first `keep` labels."""
    k = C.k
    out = set()
    stack: list[Word] = [()]
    while stack:
        s = stack.pop()
        if len(s) == length:
            out.add(s[:keep])
            continue
        for l in letters_of(k):
            if (not s and l == first_forbidden) or (s and l == -s[-1]):
                continue
            s2 = s + (l,)
            if C.admits(multiply(v, s2)):
                stack.append(s2)
    return sorted(out)


def _lip_top_lines(C: SymbolicTree, L: int, T: int, w: int, budget: int):
    lines = []
    for v in ball_words(L, letters_of(C.k)):
        F = max(T + w, len(v) + 1)
        for fut in _admissible_tails(C, v, F, 0, T + w):
            P = max(w, len(v) + 1)
            pasts = _admissible_tails(C, v, P, fut[0], w)
            for past in pasts:
                lines.append((v, past, fut))
            if len(lines) > budget:
                raise EnumerationBudgetExceeded("line enumeration", budget)
    return lines


def _lip_top_count(C: SymbolicTree, L: int, kernel: Kernel, r: float, T: int, budget: int) -> int:
    w = _margin(kernel, T, r)
    lines = _lip_top_lines(C, L, T, w, budget)
    if r < _critical_scale(kernel):
        groups: dict = {}
        for v, past, fut in lines:
            groups.setdefault((v, fut[:T]), []).append((past, fut[T:]))

        def dist(a, b):
            p, q = lcp(a[0], b[0]), lcp(a[1], b[1])
            return max(kernel.block(-p, T + q, 0), kernel.block(-p, T + q, T))

        return len(_greedy_in_groups(groups, dist, r))
    win = _Window(kernel, -w, T + w, 0.5, [0.0, float(T)])

    def verts(line):
        v, past, fut = line
        back = [v]
        for l in past:
            back.append(multiply(back[-1], (l,)))
        fwd = [v]
        for l in fut:
            fwd.append(multiply(fwd[-1], (l,)))
        return back[::-1] + fwd[1:]

    vs = [verts(x) for x in sorted(lines)]
    chosen: list = []
    for x in vs:
        if chosen:
            _, pess = win.bounds(np.array([_tree_profile(x, y) for y in chosen]))
            if (pess.max(axis=1) <= r + TOL).any():
                continue
        chosen.append(x)
    return len(chosen)


def lip_top_entropy(C: SymbolicTree, L: int, kernel: Kernel, r: float, T_min: int, T_max: int, budget: int = 2_000_000) -> DimEstimate:
    """Growth in T of the r-covering number, under sup_{0<=t<=T} f(Φ_t ·, Φ_t ·),
    of the integer-anchored tree lines with both endpoints in C and g(0)
    within L of the identity."""
    if C.certificate is not None:
        raise ValueError("lip_top_entropy needs a closed symbolic set without window certificate")
    if L < 0 or int(L) != L:
        raise ValueError("L must be a non-negative integer on trees")
    if T_max < T_min + 3:
        raise ValueError("need T_max >= T_min + 3")
    scales = list(range(T_min, T_max + 1))
    counts = [_lip_top_count(C, int(L), kernel, r, T, budget) for T in scales]
    if 0 in counts:
        raise ValueError("no line has both endpoints in C")
    logs = [math.log(c) for c in counts]
    diag = _slopes(scales, logs)
    inc = diag["increments"]
    return DimEstimate(scales, counts, min(inc), max(inc), diag)
