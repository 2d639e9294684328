"""Covering and packing counts on the boundary and dimension estimates.

Scales are rho = e^-n. Balls are the strict generalized visual balls of
`boundary`, so on a tree boundary B(z, e^-n) is the depth-(n+1) cylinder of z.
Dimension slopes are unit-step increments log Cov(e^-n) - log Cov(e^-(n-1));
the raw ratios log Cov / n carry a log(prefactor)/n bias and are kept as
diagnostics only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .action import FoldedGraph, GroupSpec
from .boundary import ErgodicRule, ThetaRule, _disk, _relative, check_boundary
from .space import TOL, ModelSpace, Word


def scale_depth(rho: float) -> int:
    """Cylinder depth of a strict visual ball of radius rho on a tree boundary."""
    if rho <= 0:
        raise ValueError("rho must be > 0")
    L = math.log(1.0 / rho)
    return max(0, int(math.floor(L + TOL)) + 1)


# ---------------------------------------------------------------- boundary sets


class UnderResolved(ValueError):
    def __init__(self, rho: float, required: float):
        super().__init__(f"net resolution too coarse for rho={rho:g}; need resolution <= {required:g}")
        self.required = required


@dataclass(frozen=True)
class NetList:
    """A finite set of boundary points, trusted down to radius 2*resolution."""

    space: ModelSpace
    base: object
    points: tuple
    resolution: float = 0.0

    def __post_init__(self):
        pts = tuple(self.points)
        if not pts:
            raise ValueError("empty net")
        for z in pts:
            check_boundary(self.space, z)
        if len(set(pts)) != len(pts):
            raise ValueError("net points must be pairwise distinct")
        object.__setattr__(self, "points", pts)

    def _check(self, rho: float) -> None:
        if rho < 2 * self.resolution:
            raise UnderResolved(rho, rho / 2)

    def angles(self) -> np.ndarray:
        return np.sort(np.array([np.angle(_disk(self.base, z)) for z in self.points]))


@dataclass(frozen=True)
class WindowCertificate:
    """The Lambda_{tau,Theta} condition: for every i the ray meets the tau-neighbourhood
    of the orbit at some distance in [theta_i, theta_{i+1}]."""

    tau: float
    theta: ThetaRule


class SymbolicTree:
    """Boundary subset of the 2k-regular tree: the infinite reduced paths of a
    folded graph that start at its base, optionally cut down by a window
    certificate. Counts are exact for the graph part; with a certificate, a
    length-n word is admitted when it passes every window closing by depth n
    and can still be extended inside the graph."""

    def __init__(self, k: int, graph: FoldedGraph, certificate: WindowCertificate | None = None):
        self.k = k
        self.graph = graph
        self.certificate = certificate
        letters = {l for d in graph.adj for l in d}
        if any(abs(l) > k for l in letters):
            raise ValueError(f"graph uses letters outside F_{k}")
        self._live = self._live_states()
        if (graph.base, 0) not in self._live:
            raise ValueError("constraints define an empty subshift")
        self._dist = graph.distances_to_base()
        self._cache: dict[int, int] = {}

    @classmethod
    def full(cls, k: int) -> "SymbolicTree":
        return cls.sub_alphabet(k, range(1, k + 1))

    @classmethod
    def sub_alphabet(cls, k: int, letters) -> "SymbolicTree":
        """Infinite reduced words over the given generators and their inverses."""
        return cls(k, FoldedGraph.from_words([(abs(l),) for l in letters]))

    @classmethod
    def limit_set(cls, group: GroupSpec, basepoint: Word = (), certificate: WindowCertificate | None = None):
        """Limit set of a subgroup of F_k as seen from basepoint."""
        if not group.space.is_tree:
            raise ValueError("symbolic limit sets need a tree")
        graph = FoldedGraph.from_words(group.generators).rebased(tuple(basepoint))
        return cls(group.space.k, graph, certificate)

    def _live_states(self) -> set:
        adj = self.graph.adj
        # (v, last): at v having arrived by `last`; live if an infinite reduced path continues
        states = {(v, last) for v in range(len(adj)) for last in {0} | {-l for l in adj[v]}}
        live = set(states)
        changed = True
        while changed:
            changed = False
            for v, last in list(live):
                if not any(l != -last and (w, l) in live for l, w in adj[v].items()):
                    live.discard((v, last))
                    changed = True
        return live

    def admits(self, word: Word) -> bool:
        """Whether some point of the graph part of the set starts with word."""
        v, last = self.graph.base, 0
        for l in word:
            w = self.graph.adj[v].get(l)
            if w is None or l == -last:
                return False
            v, last = w, l
        return (v, last) in self._live

    def count(self, depth: int) -> int:
        """Number of admissible length-`depth` words (cylinders meeting the set)."""
        if depth not in self._cache:
            self._cache[depth] = self._count(depth)
        return self._cache[depth]

    def _count(self, depth: int) -> int:
        adj, live = self.graph.adj, self._live
        plan = self._window_plan(depth)
        layer = {(self.graph.base, 0, False): 1}
        for n in range(depth):
            nxt: dict = {}
            for (v, last, ok), c in layer.items():
                for l, w in adj[v].items():
                    if l == -last or (w, l) not in live:
                        continue
                    ok2 = self._advance(plan[n], self._dist[v], self._dist[w], ok)
                    if ok2 is None:
                        continue
                    key = (w, l, ok2)
                    nxt[key] = nxt.get(key, 0) + c
            layer = nxt
        return sum(layer.values())

    def _window_plan(self, depth: int) -> list:
        """Per unit segment [n, n+1]: the windows it meets, as offsets of their ends
        from the segment ends, whether they close on it and whether they were open at n."""
        if self.certificate is None:
            return [None] * depth
        th = self.certificate.theta
        wins = []
        i = 0
        while th.value(i) < depth + 1:
            wins.append((th.value(i), th.value(i + 1)))
            i += 1
        plan = []
        for n in range(depth):
            seg = []
            for a, b in wins:
                if a <= n + 1 + TOL and b > n + TOL:
                    lo, hi = max(a, n), min(b, n + 1)
                    open_at_n = a <= n + TOL
                    seg.append((lo - n, n + 1 - hi, b <= n + 1 + TOL, open_at_n))
            plan.append(seg)
        return plan

    def _advance(self, seg, d0: int, d1: int, ok: bool):
        """New carried flag after walking one edge, or None if a window fails."""
        if seg is None:
            return False
        tau = self.certificate.tau
        carried = False
        for off_lo, off_hi, closes, open_at_n in seg:
            # the orbit distance along the edge is min(d0 + s, d1 + 1 - s)
            flag = min(d0 + off_lo, d1 + off_hi) <= tau + TOL
            if open_at_n:
                flag = flag or ok
            if closes:
                if not flag:
                    return None
            else:
                carried = flag
        return carried


BoundarySet = Union[NetList, SymbolicTree]


# ---------------------------------------------------------------- counts


def _jumps(ang: np.ndarray, alpha: float) -> np.ndarray:
    """nxt[i] = index, in the doubled list, of the first point at least 2 alpha past point i."""
    n = len(ang)
    nxt = np.searchsorted(np.concatenate([ang, ang + 2 * math.pi]), ang + 2 * alpha - 1e-15, side="left")
    return np.maximum(nxt, np.arange(n) + 1)


def _circle_cover(ang: np.ndarray, alpha: float) -> int:
    # open arcs of half-width alpha: one arc covers points spread < 2 alpha
    n = len(ang)
    if alpha >= math.pi:
        return 1
    nxt = _jumps(ang, alpha)
    best = n
    for s in range(n):
        i, used = s, 0
        while i < s + n:
            used += 1
            i = nxt[i % n] + (i // n) * n
        best = min(best, used)
    return best


def _circle_pack(ang: np.ndarray, alpha: float) -> int:
    # centres pairwise at least 2 alpha apart, the wrap-around gap included
    n = len(ang)
    if n == 1 or alpha >= math.pi:
        return 1
    nxt = _jumps(ang, alpha)
    best = 1
    full = 2 * math.pi
    for s in range(n):
        chosen = [s]
        i = s
        while True:
            j = nxt[i % n] + (i // n) * n
            if j >= s + n:
                break
            chosen.append(j)
            i = j
        while len(chosen) > 1 and ang[s] + full - (ang[chosen[-1] % n] + full * (chosen[-1] // n)) < 2 * alpha - 1e-15:
            chosen.pop()
        best = max(best, len(chosen))
    return best


def _hp_alpha(rho: float) -> float:
    # B(z, rho) is the open arc |w - z| < 2 rho of the unit circle seen from the base
    return 2 * math.asin(rho) if rho < 1 else math.pi


def boundary_cov(bset: BoundarySet, rho: float) -> int:
    """Minimal number of generalized visual balls of radius rho covering the set."""
    if rho <= 0:
        raise ValueError("rho must be > 0")
    if isinstance(bset, SymbolicTree):
        return bset.count(scale_depth(rho))
    bset._check(rho)
    if bset.space.is_tree:
        return _distinct_prefixes(bset, scale_depth(rho))
    return _circle_cover(bset.angles(), _hp_alpha(rho))


def boundary_pack(bset: BoundarySet, rho: float) -> int:
    """Maximal number of pairwise-disjoint radius-rho balls centred in the set."""
    if rho <= 0:
        raise ValueError("rho must be > 0")
    if isinstance(bset, SymbolicTree):
        return bset.count(scale_depth(rho))
    bset._check(rho)
    if bset.space.is_tree:
        return _distinct_prefixes(bset, scale_depth(rho))
    return _circle_pack(bset.angles(), _hp_alpha(rho))


def _distinct_prefixes(net: NetList, depth: int) -> int:
    return len({_relative(net.base, z).prefix(depth) for z in net.points})


def cov_sandwich(bset: BoundarySet, rho: float) -> tuple[int, int, int]:
    """(Pack(rho), Cov(rho), Pack(rho/2)); the first two never exceed the next."""
    return boundary_pack(bset, rho), boundary_cov(bset, rho), boundary_pack(bset, rho / 2)


# ---------------------------------------------------------------- Minkowski dimensions


@dataclass
class DimEstimate:
    scales: list
    counts: list
    slope_lower: float
    slope_upper: float
    diagnostics: dict = field(default_factory=dict)


def _slopes(scales: Sequence[int], logs: Sequence[float]) -> dict:
    inc = [logs[i] - logs[i - 1] for i in range(1, len(scales))]
    ratios = [lc / n if n else math.nan for n, lc in zip(scales, logs)]
    ls_slope, ls_icpt = np.polyfit(np.asarray(scales, float), np.asarray(logs), 1)
    resid = [lc - (ls_slope * n + ls_icpt) for n, lc in zip(scales, logs)]
    two_point = (logs[-1] - logs[0]) / (scales[-1] - scales[0])
    return {
        "increments": inc,
        "ratios": ratios,
        "least_squares": float(ls_slope),
        "residuals": resid,
        "two_point": two_point,
    }


def minkowski_dims(bset: BoundarySet, n_min: int, n_max: int) -> DimEstimate:
    """Lower/upper Minkowski slopes over rho = e^-n, n_min <= n <= n_max."""
    if n_max < n_min + 3:
        raise ValueError("need n_max >= n_min + 3")
    scales = list(range(n_min, n_max + 1))
    counts = [boundary_cov(bset, math.exp(-n)) for n in scales]
    if 0 in counts:
        raise ValueError(f"set is empty at depth {scale_depth(math.exp(-scales[counts.index(0)]))}")
    logs = [math.log(c) for c in counts]
    diag = _slopes(scales, logs)
    inc = diag["increments"]
    return DimEstimate(scales, counts, min(inc), max(inc), diag)


def packing_dim_upper(pieces: Sequence[BoundarySet], n_min: int = 6, n_max: int = 12) -> float:
    """sup of the upper Minkowski slopes over a finite decomposition.

    The packing dimension of a union is at most this sup. Pieces found
    empty within the window contribute nothing.
    """
    if not pieces:
        raise ValueError("a decomposition needs at least one piece")
    best = 0.0
    for p in pieces:
        if boundary_cov(p, math.exp(-n_max)) == 0:
            continue
        best = max(best, minkowski_dims(p, n_min, n_max).slope_upper)
    return best


def ergodic_decomposition(
    group: GroupSpec,
    basepoint: Word,
    taus: Sequence[float],
    limits: Sequence[float],
    amplitudes: Sequence[float] = (0.0,),
    exponent: float = 0.5,
) -> list[SymbolicTree]:
    """Pieces Lambda_{tau, Theta} with Theta an ErgodicRule, one per parameter triple.

    A point of the ergodic limit set is close to the orbit along a sequence
    of times with a limiting gap; grouping by closeness and gap gives the
    countable family whose Minkowski slopes bound its packing dimension.
    """
    return [
        SymbolicTree.limit_set(group, basepoint, WindowCertificate(t, ErgodicRule(l, a, exponent)))
        for t in taus
        for l in limits
        for a in amplitudes
    ]


# ---------------------------------------------------------------- local dimensions


@dataclass(frozen=True)
class EmpiricalMeasure:
    space: ModelSpace
    base: object
    atoms: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.atoms) != len(self.weights) or not self.atoms:
            raise ValueError("need one weight per atom")
        w = np.asarray(self.weights, float)
        if (w < 0).any() or abs(w.sum() - 1) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        for z in self.atoms:
            check_boundary(self.space, z)

    @classmethod
    def uniform(cls, space: ModelSpace, base, atoms) -> "EmpiricalMeasure":
        n = len(atoms)
        return cls(space, base, tuple(atoms), tuple([1.0 / n] * n))

    def ball_masses(self, scales: Sequence[int]) -> np.ndarray:
        """masses[i, j] = nu(B(atom_i, e^-scales[j]))."""
        w = np.asarray(self.weights, float)
        out = np.zeros((len(self.atoms), len(scales)))
        if self.space.is_tree:
            rel = [_relative(self.base, z) for z in self.atoms]
            for j, n in enumerate(scales):
                d = scale_depth(math.exp(-n))
                keys = [z.prefix(d) for z in rel]
                mass: dict = {}
                for key, wi in zip(keys, w):
                    mass[key] = mass.get(key, 0.0) + wi
                out[:, j] = [mass[key] for key in keys]
            return out
        pts = np.array([_disk(self.base, z) for z in self.atoms])
        chord = np.abs(pts[:, None] - pts[None, :])
        for j, n in enumerate(scales):
            out[:, j] = (chord < 2 * math.exp(-n)) @ w
        return out


@dataclass
class LocalDims:
    hd_lower: float
    hd_upper: float
    pd_lower: float
    pd_upper: float
    degenerate: bool = False
    per_atom: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.hd_lower, self.hd_upper, self.pd_lower, self.pd_upper))


def local_dims(measure: EmpiricalMeasure, quantile: float = 0.05, scales: Sequence[int] = range(1, 8)) -> LocalDims:
    """Quantile versions of the four ess-inf/ess-sup local dimensions.

    Per atom the liminf/limsup of log nu(B(z, rho)) / log rho are replaced by
    the min/max over the scale window of the unit-step increments of
    -log nu(B(z, e^-n)).
    """
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    w = np.asarray(measure.weights, float)
    if len(measure.atoms) == 1 or w.max() >= 1 - 1e-12:
        return LocalDims(0.0, 0.0, 0.0, 0.0, degenerate=True)
    if len(measure.atoms) < 10:
        raise ValueError("need at least 10 atoms")
    scales = list(scales)
    if len(scales) < 2:
        raise ValueError("need at least two scales")
    logs = -np.log(measure.ball_masses(scales))
    inc = np.diff(logs, axis=1)
    low, up = inc.min(axis=1), inc.max(axis=1)

    def q(vals, p):
        return float(np.quantile(vals, p, weights=w, method="inverted_cdf"))

    hi = 1 - quantile
    ratios = logs / np.asarray(scales, float)[None, :]
    return LocalDims(
        q(low, quantile), q(low, hi), q(up, quantile), q(up, hi), per_atom={"lower": low, "upper": up, "ratios": ratios}
    )
