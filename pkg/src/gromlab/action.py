"""Free discrete group actions on the model spaces.

Group elements are reduced words (tree) or 2x2 unit-determinant matrices
acting by Mobius maps (half-plane). Orbits are enumerated breadth-first over
reduced words in the generators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .space import (
    TOL,
    HPoint,
    ModelSpace,
    distance,
    format_word,
    inverse,
    mobius,
    multiply,
    parse_word,
)

DEFAULT_BUDGET = 5_000_000


class GroupKind(Enum):
    FULL_FREE = "full-free"
    FREE_SUBGROUP = "free-subgroup"
    SCHOTTKY = "schottky"


class OrbitBudgetExceeded(RuntimeError):
    """Raised when an orbit enumeration hits its size budget.

    `partial` is the orbit ball restricted to `completed_radius`, the largest
    integer radius whose count is known to be complete.
    """

    def __init__(self, partial: "OrbitBall", completed_radius: int):
        super().__init__(f"orbit budget exceeded; complete up to radius {completed_radius}")
        self.partial = partial
        self.completed_radius = completed_radius


class WidenHint(ValueError):
    def __init__(self, required: float):
        super().__init__(f"radius hint too small, need at least {required:.6g}")
        self.required = required


class NotFree(RuntimeError):
    pass


@dataclass(frozen=True)
class GroupSpec:
    """A finitely generated free group acting on a model space.

    For Schottky groups `ping_pong` optionally lists, per generator, the two
    disjoint boundary intervals (repelling and attracting) that certify
    discreteness.
    """

    space: ModelSpace
    generators: tuple
    kind: GroupKind
    ping_pong: tuple | None = None

    def __post_init__(self):
        if self.space.is_tree:
            for g in self.generators:
                self.space.check_point(g)
                if len(g) == 0:
                    raise ValueError("identity is not allowed as a generator")
        else:
            for m in self.generators:
                if abs(np.linalg.det(m) - 1.0) > 1e-9:
                    raise ValueError("Schottky generators must have determinant 1")
        if self.ping_pong is not None:
            _check_ping_pong(self.ping_pong)

    @property
    def rank(self) -> int:
        return len(self.generators)

    def symmetric_generators(self) -> list:
        """[(letter, element)] with letters +-1..+-rank; -j is the inverse of j."""
        out = []
        for j, g in enumerate(self.generators, start=1):
            out.append((j, g))
            out.append((-j, inverse_element(g)))
        return out

    def identity(self):
        return identity_element(self.space)

    def max_displacement(self, basepoint) -> float:
        if not self.generators:
            return 0.0
        return max(distance(self.space, basepoint, apply(g, basepoint)) for _, g in self.symmetric_generators())


def _check_ping_pong(intervals) -> None:
    flat = [iv for pair in intervals for iv in pair]
    for i, (a, b) in enumerate(flat):
        for c, d in flat[i + 1 :]:
            if _arcs_overlap((a, b), (c, d)):
                raise ValueError(f"ping-pong intervals {(a, b)} and {(c, d)} overlap")


def _arcs_overlap(p, q) -> bool:
    # intervals of the extended real line; a > b means the arc through infinity
    def pieces(iv):
        a, b = iv
        return [(a, b)] if a <= b else [(a, math.inf), (-math.inf, b)]

    return any(max(a, c) < min(b, d) for a, b in pieces(p) for c, d in pieces(q))


def full_free_group(space: ModelSpace) -> GroupSpec:
    return GroupSpec(space, tuple((i,) for i in range(1, space.k + 1)), GroupKind.FULL_FREE)


def free_subgroup(space: ModelSpace, words: Sequence) -> GroupSpec:
    gens = tuple(parse_word(w) if isinstance(w, str) else tuple(w) for w in words)
    return GroupSpec(space, gens, GroupKind.FREE_SUBGROUP)


def trivial_group(space: ModelSpace) -> GroupSpec:
    kind = GroupKind.FREE_SUBGROUP if space.is_tree else GroupKind.SCHOTTKY
    return GroupSpec(space, (), kind)


def schottky_group(space: ModelSpace, matrices: Sequence, ping_pong=None) -> GroupSpec:
    mats = tuple(_normalise(np.asarray(m, dtype=float).reshape(2, 2)) for m in matrices)
    return GroupSpec(space, mats, GroupKind.SCHOTTKY, None if ping_pong is None else tuple(map(tuple, ping_pong)))


def hyperbolic_translation(length: float) -> np.ndarray:
    """Translation by `length` along the geodesic joining -1 and 1."""
    c, s = math.cosh(length / 2), math.sinh(length / 2)
    return np.array([[c, s], [s, c]])


def classical_schottky(space: ModelSpace, length: float = 2 * math.acosh(1.5)) -> GroupSpec:
    """Two hyperbolic generators whose axes cross perpendicularly at i.

    g1 translates along the geodesic joining -1 and 1; g2 is g1 conjugated
    by the quarter turn about i. The ping-pong intervals of g1 are cut out by
    its isometric circles |c z +- d| = 1 and those of g2 are their images
    under the quarter turn; they are disjoint when cosh(length/2) > sqrt 2.
    """
    g1 = hyperbolic_translation(length)
    q = math.sqrt(0.5)
    turn = np.array([[q, q], [-q, q]])
    g2 = turn @ g1 @ np.linalg.inv(turn)
    a, b, c, d = g1.ravel()
    iv1 = ((-d / c - 1 / abs(c), -d / c + 1 / abs(c)), (a / c - 1 / abs(c), a / c + 1 / abs(c)))
    iv2 = tuple((_real_mobius(turn, lo), _real_mobius(turn, hi)) for lo, hi in iv1)
    return schottky_group(space, [g1, g2], ping_pong=[iv1, iv2])


def _real_mobius(m: np.ndarray, x: float) -> float:
    a, b, c, d = m.ravel()
    den = c * x + d
    return math.inf if den == 0 else float((a * x + b) / den)


# ---------------------------------------------------------------- elements


def identity_element(space: ModelSpace):
    return () if space.is_tree else np.eye(2)


def inverse_element(g):
    if isinstance(g, tuple):
        return inverse(g)
    a, b, c, d = np.asarray(g).ravel()
    return np.array([[d, -b], [-c, a]])


def compose(g, h):
    """The element g·h (apply h first)."""
    if isinstance(g, tuple):
        return multiply(g, h)
    return _normalise(np.asarray(g) @ np.asarray(h))


def _normalise(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det <= 0:
        raise ValueError("matrix must have positive determinant")
    return m / math.sqrt(det)


def is_identity(g) -> bool:
    if isinstance(g, tuple):
        return len(g) == 0
    m = np.asarray(g)
    return bool(np.allclose(m, np.eye(2), atol=1e-12) or np.allclose(m, -np.eye(2), atol=1e-12))


def apply(g, p):
    """Image of the point p under the isometry g."""
    if isinstance(g, tuple):
        if not isinstance(p, tuple):
            raise TypeError("word elements act on tree points")
        return multiply(g, p)
    if not isinstance(p, HPoint):
        raise TypeError("matrix elements act on half-plane points")
    z = mobius(np.asarray(g), complex(p.x, p.y))
    return HPoint(z.real, abs(z.imag))


# ---------------------------------------------------------------- folded graphs


class FoldedGraph:
    """Folded (Stallings) graph of a finitely generated subgroup of F_k.

    adj[v] maps a letter to the end of the unique edge leaving v with that
    label; inverse edges are stored too. A reduced word lies in the subgroup
    iff reading it from `base` returns to `base`.
    """

    def __init__(self, adj: list[dict[int, int]], base: int = 0):
        self.adj = adj
        self.base = base

    @classmethod
    def from_words(cls, words: Sequence[tuple]) -> "FoldedGraph":
        n = 1
        edges = []
        for w in words:
            prev = 0
            for i, letter in enumerate(w):
                if i == len(w) - 1:
                    nxt = 0
                else:
                    nxt, n = n, n + 1
                edges.append((prev, letter, nxt))
                prev = nxt
        parent = list(range(n))

        def find(u):
            while parent[u] != u:
                parent[u] = parent[parent[u]]
                u = parent[u]
            return u

        both = edges + [(v, -l, u) for u, l, v in edges]
        while True:
            out: dict = {}
            merged = False
            for u, l, v in both:
                u, v = find(u), find(v)
                t = out.get((u, l))
                if t is not None and t != v:
                    parent[max(t, v)] = min(t, v)
                    merged = True
                    break
                out[(u, l)] = v
            if not merged:
                break
        roots = sorted({find(u) for u in range(n)})
        ids = {r: i for i, r in enumerate(roots)}
        adj: list[dict[int, int]] = [dict() for _ in roots]
        for (u, l), v in out.items():
            adj[ids[u]][l] = ids[v]
        return cls(adj, ids[find(0)])

    def __len__(self) -> int:
        return len(self.adj)

    def read(self, word: Sequence[int], start: int | None = None):
        """(end vertex, letters consumed), reading until an edge is missing."""
        v = self.base if start is None else start
        for i, letter in enumerate(word):
            w = self.adj[v].get(letter)
            if w is None:
                return v, i
            v = w
        return v, len(word)

    def contains(self, word: Sequence[int]) -> bool:
        v, used = self.read(word)
        return used == len(word) and v == self.base

    def rebased(self, x: Sequence[int]) -> "FoldedGraph":
        """Graph of x^-1 H x: follow x, growing a hair where the graph ends."""
        v, used = self.read(x)
        adj = [dict(d) for d in self.adj]
        for letter in x[used:]:
            adj.append({})
            w = len(adj) - 1
            adj[v][letter] = w
            adj[w][-letter] = v
            v = w
        return FoldedGraph(adj, v)

    def core(self) -> "FoldedGraph":
        """Drop hairs by pruning degree-one vertices (the base too, if it sits on a hair)."""
        alive = set(range(len(self.adj)))
        deg = {v: len(self.adj[v]) for v in alive}
        stack = [v for v in alive if deg[v] <= 1]
        while stack:
            v = stack.pop()
            if v not in alive or deg[v] > 1:
                continue
            alive.discard(v)
            for w in self.adj[v].values():
                if w in alive:
                    deg[w] -= 1
                    if deg[w] <= 1:
                        stack.append(w)
        order = sorted(alive)
        ids = {v: i for i, v in enumerate(order)}
        adj = [{l: ids[w] for l, w in self.adj[v].items() if w in alive} for v in order]
        return FoldedGraph(adj, ids.get(self.base, 0))

    def distances_to_base(self) -> list[int]:
        far = 1 << 30
        dist = [far] * len(self.adj)
        dist[self.base] = 0
        queue = [self.base]
        for v in queue:
            for w in self.adj[v].values():
                if dist[w] == far:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist

    def orbit_distance(self, word: Sequence[int]) -> int:
        """d(word, H) in the tree: the unread letters plus the graph distance
        from where reading stops back to the base."""
        v, used = self.read(word)
        return len(word) - used + self.distances_to_base()[v]

    def rank(self) -> int:
        """Rank of the subgroup: edges - vertices + 1."""
        edges = sum(len(d) for d in self.adj) // 2
        return edges - len(self.adj) + 1


# ---------------------------------------------------------------- orbit enumeration


@dataclass
class OrbitBall:
    """Orbit points g·x with d(x, g·x) <= radius, sorted by (distance, word).

    counts[t] is N(t) = #{orbit points at distance <= t} for integer t.
    `points` is empty when the enumeration ran in counts-only mode.
    """

    radius: float
    counts: np.ndarray
    points: list = field(default_factory=list)

    def N(self, t: float) -> int:
        i = int(math.floor(t + TOL))
        return int(self.counts[min(i, len(self.counts) - 1)])


def default_prune_slack(spec: GroupSpec, basepoint) -> float:
    return 2.0 * spec.max_displacement(basepoint)


class _BudgetHit(Exception):
    pass


def enumerate_orbit(
    spec: GroupSpec,
    basepoint,
    radius: float,
    budget: int = DEFAULT_BUDGET,
    prune_slack: float | None = None,
    store_points: bool = True,
) -> OrbitBall:
    """Breadth-first enumeration of the orbit ball of `basepoint`.

    Tree orbits are read off the folded graph of the subgroup and are exact.
    In the half-plane, words whose orbit point lies farther than
    radius + prune_slack are not extended (default: twice the largest
    generator displacement). Each point is reported once.
    If more than `budget` words are visited, OrbitBudgetExceeded carries the
    counts for the largest integer radius that fits in the budget.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    spec.space.check_point(basepoint)
    if prune_slack is None and not spec.space.is_tree:
        prune_slack = default_prune_slack(spec, basepoint)
    run = _bfs_tree if spec.space.is_tree else _bfs_matrix
    try:
        return run(spec, basepoint, radius, prune_slack, budget, store_points)
    except _BudgetHit:
        pass
    best = OrbitBall(0.0, np.array([1], dtype=np.int64), [])
    for t in range(0, int(math.floor(radius + TOL))):
        try:
            best = run(spec, basepoint, float(t), prune_slack, budget, False)
        except _BudgetHit:
            break
    raise OrbitBudgetExceeded(best, int(best.radius))


def _tally(dists: Sequence[float], radius: float) -> np.ndarray:
    top = int(math.floor(radius + TOL))
    counts = np.zeros(top + 1, dtype=np.int64)
    for d in dists:
        i = max(0, int(math.ceil(d - TOL)))
        if i <= top:
            counts[i] += 1
    return np.cumsum(counts)


def _bfs_tree(spec, x, radius, slack, budget, store):
    # g x lies within R of x  <=>  g = x c x^-1 with c a closed reduced path of
    # length <= R at the end of x in the folded graph, so nothing needs slack
    graph = FoldedGraph.from_words(spec.generators).rebased(x)
    top = int(math.floor(radius + TOL))
    hist = [0] * (top + 1)
    points = []
    xinv = inverse(x)
    back = graph.distances_to_base()
    visited = 0
    stack = [(graph.base, 0, ())]
    while stack:
        v, last, c = stack.pop()
        visited += 1
        if visited > budget:
            raise _BudgetHit
        n = len(c)
        if v == graph.base:
            hist[n] += 1
            if store:
                gx = multiply(x, c)
                points.append((multiply(gx, xinv), gx, n))
        if n == top:
            continue
        for letter, w in graph.adj[v].items():
            if letter == -last or n + 1 + back[w] > top:
                continue
            stack.append((w, letter, c + (letter,)))
    if store:
        points.sort(key=lambda t: (t[2], t[0]))
    return OrbitBall(radius, np.cumsum(hist), points)


def _bfs_matrix(spec, x: HPoint, radius, slack, budget, store):
    # conjugate so that the basepoint is i: then d(i, g i) = arccosh(|g|_F^2 / 2)
    s = math.sqrt(x.y)
    h = np.array([[s, x.x / s], [0.0, 1.0 / s]])
    hinv = np.linalg.inv(h)
    gens = spec.symmetric_generators()
    conj = np.stack([hinv @ g @ h for _, g in gens]) if gens else np.zeros((0, 2, 2))
    letters = np.array([letter for letter, _ in gens], dtype=np.int64)
    limit = radius + slack

    mats = np.eye(2)[None, :, :]
    last = np.zeros(1, dtype=np.int64)
    all_d = [np.zeros(1)]
    all_m = [mats] if store else []
    all_len = [np.zeros(1, dtype=np.int64)]
    seen = 1
    depth = 0
    while len(mats) and len(gens):
        prod = np.einsum("nij,gjk->ngik", mats, conj)  # right-multiply by each generator
        allowed = letters[None, :] != -last[:, None]
        prod = prod[allowed]
        new_last = np.broadcast_to(letters[None, :], allowed.shape)[allowed]
        fro = np.einsum("nij,nij->n", prod, prod)
        d = np.arccosh(np.maximum(fro / 2.0, 1.0))
        if np.any(d <= TOL):
            raise NotFree("a non-trivial word fixes the basepoint")
        keep = d <= limit
        mats, last, d = prod[keep], new_last[keep], d[keep]
        depth += 1
        seen += len(mats)
        if seen > budget:
            raise _BudgetHit
        all_d.append(d)
        all_len.append(np.full(len(d), depth))
        if store:
            all_m.append(mats)
    dists = np.concatenate(all_d)
    inside = dists <= radius + TOL
    counts = _tally(dists[inside], radius)
    points = []
    if store:
        ms = np.concatenate(all_m)[inside]
        lens = np.concatenate(all_len)[inside]
        ds = dists[inside]
        order = np.lexsort((lens, ds))
        for i in order:
            g = h @ ms[i] @ hinv
            points.append((g, apply(g, x), float(ds[i])))
    return OrbitBall(radius, counts, points)


# ---------------------------------------------------------------- growth


@dataclass(frozen=True)
class CriticalExponent:
    """Window estimate of the critical exponent.

    upper and lower are the largest and smallest unit-step growth rates
    log N(T) - log N(T-1) over the last `window` integer radii. The raw
    ratios log N(T) / T over the same window are kept in `ratios`; they
    converge to the same limit but carry an O(log N(0)-type constant / T) bias.
    Iterating yields (upper, lower).
    """

    upper: float
    lower: float
    radii: tuple
    increments: tuple
    ratios: tuple
    counts: tuple

    def __iter__(self):
        return iter((self.upper, self.lower))

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def growth_rates(counts: Sequence[int], radii: Sequence[int]):
    incs, ratios = [], []
    for T in radii:
        incs.append(math.log(counts[T]) - math.log(counts[T - 1]))
        ratios.append(math.log(counts[T]) / T)
    return incs, ratios


def critical_exponent(spec: GroupSpec, basepoint, radius: float, window: int, **orbit_kwargs) -> CriticalExponent:
    """Upper and lower critical-exponent estimates from orbit counts."""
    if window < 2 or radius < window:
        raise ValueError("need radius >= window >= 2")
    ball = enumerate_orbit(spec, basepoint, radius, store_points=False, **orbit_kwargs)
    top = int(math.floor(radius + TOL))
    radii = list(range(top - window + 1, top + 1))
    incs, ratios = growth_rates(ball.counts, radii)
    return CriticalExponent(
        upper=max(incs),
        lower=min(incs),
        radii=tuple(radii),
        increments=tuple(incs),
        ratios=tuple(ratios),
        counts=tuple(int(c) for c in ball.counts),
    )


def tree_orbit_count(k: int, n: int) -> int:
    """Closed form N(n) = 1 + 2k((2k-1)^n - 1)/(2k-2) for F_k acting on its tree."""
    return 1 + 2 * k * ((2 * k - 1) ** n - 1) // (2 * k - 2)


# ---------------------------------------------------------------- quotient


def quotient_distance(spec: GroupSpec, p, q, radius_hint: float) -> float:
    """min over g of d(p, g q), certified within the enumerated orbit of q."""
    d0 = distance(spec.space, p, q)
    if not spec.generators:
        return d0
    # the identity already gives d0, and any g with d(p, gq) <= best moves q by at most d0 + best <= 2 d0
    reach = min(radius_hint, 2 * d0)
    ball = enumerate_orbit(spec, q, reach)
    best = min(distance(spec.space, p, gq) for _, gq, _ in ball.points)
    if d0 + best > reach + TOL:
        raise WidenHint(d0 + best)
    return best


def injectivity_radius(spec: GroupSpec, p, radius_hint: float) -> float:
    """Half the minimal displacement of p by a non-identity element."""
    if not spec.generators:
        return math.inf
    # each generator bounds the minimum, so no element beyond the cheapest one is needed
    reach = min(radius_hint, min(distance(spec.space, p, apply(g, p)) for g in spec.generators))
    ball = enumerate_orbit(spec, p, reach)
    best = math.inf
    for g, gp, d in ball.points:
        if is_identity(g):
            continue
        if d <= TOL:
            raise NotFree(f"element fixes the point: {g if not isinstance(g, tuple) else format_word(g)}")
        best = min(best, d)
    if not math.isfinite(best):
        raise WidenHint(min(distance(spec.space, p, apply(g, p)) for g in spec.generators))
    return 0.5 * best
