"""Model Gromov-hyperbolic spaces.

Two models are supported: the 2k-regular tree, realised as the Cayley graph
of the free group F_k with vertices labelled by reduced words, and the upper
half-plane with its hyperbolic metric.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

TOL = 1e-9

Word = tuple  # reduced word: tuple of nonzero ints, -i is the inverse of i


class SpaceKind(Enum):
    TREE = "tree"
    HALF_PLANE = "half-plane"


@dataclass(frozen=True)
class HPoint:
    """A point x + iy of the upper half-plane."""

    x: float
    y: float

    def __post_init__(self):
        if not (self.y > 0 and math.isfinite(self.y) and math.isfinite(self.x)):
            raise ValueError(f"half-plane point needs finite x and y > 0, got ({self.x}, {self.y})")


BASE_HPOINT = HPoint(0.0, 1.0)


# ---------------------------------------------------------------- words

_TOKEN = re.compile(r"([a-zA-Z])(\^-1|⁻¹)?")


def parse_word(text: str) -> Word:
    """Parse "a b A" or "a⁻¹ b" into a freely reduced tuple.

    Lowercase letters a, b, c, ... are generators 1, 2, 3, ...; an uppercase
    letter or a trailing ^-1 / ⁻¹ denotes the inverse. "" and "ε" are the
    identity.
    """
    text = text.replace("ε", "").replace(" ", "").replace(",", "")
    letters = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ValueError(f"cannot parse word {text!r} at position {pos}")
        ch, inv = m.group(1), m.group(2)
        g = ord(ch.lower()) - ord("a") + 1
        if ch.isupper():
            g = -g
        if inv:
            g = -g
        letters.append(g)
        pos = m.end()
    return reduce_word(letters)


def format_word(w: Sequence[int]) -> str:
    if len(w) == 0:
        return "ε"
    return " ".join(chr(ord("a") + abs(g) - 1) if g > 0 else chr(ord("A") + abs(g) - 1) for g in w)


def reduce_word(letters: Sequence[int]) -> Word:
    out: list[int] = []
    for g in letters:
        if g == 0:
            raise ValueError("letter 0 is not a generator")
        if out and out[-1] == -g:
            out.pop()
        else:
            out.append(g)
    return tuple(out)


def multiply(u: Sequence[int], v: Sequence[int]) -> Word:
    """Reduced product u·v."""
    i = 0
    n, m = len(u), len(v)
    while i < n and i < m and u[n - 1 - i] == -v[i]:
        i += 1
    return tuple(u[: n - i]) + tuple(v[i:])


def inverse(u: Sequence[int]) -> Word:
    return tuple(-g for g in reversed(u))


def lcp(u: Sequence[int], v: Sequence[int]) -> int:
    n = min(len(u), len(v))
    i = 0
    while i < n and u[i] == v[i]:
        i += 1
    return i


def is_reduced(w: Sequence[int]) -> bool:
    return all(w[i] != -w[i + 1] for i in range(len(w) - 1))


def letters_of(k: int) -> list[int]:
    return [g for i in range(1, k + 1) for g in (i, -i)]


def words_of_length(n: int, alphabet: Sequence[int]):
    """All reduced words of length n over a symmetric alphabet, lexicographic."""
    if n == 0:
        yield ()
        return
    stack = [(g,) for g in reversed(alphabet)]
    while stack:
        w = stack.pop()
        if len(w) == n:
            yield w
            continue
        for g in reversed(alphabet):
            if g != -w[-1]:
                stack.append(w + (g,))


def ball_words(radius: int, alphabet: Sequence[int]) -> list[Word]:
    """Reduced words of length <= radius in breadth-first order."""
    out: list[Word] = [()]
    frontier: list[Word] = [()]
    for _ in range(radius):
        nxt = []
        for w in frontier:
            for g in alphabet:
                if not w or g != -w[-1]:
                    nxt.append(w + (g,))
        out.extend(nxt)
        frontier = nxt
    return out


# ---------------------------------------------------------------- spaces


@dataclass(frozen=True)
class ModelSpace:
    """A model space with its packing constants.

    kind selects the tree T_{2k} or the half-plane. r0 and P0 are the packing
    scale and constant: every ball of radius 3*r0 holds at most P0 points that
    are pairwise more than 2*r0 apart. delta is a hyperbolicity constant.
    """

    kind: SpaceKind
    k: int = 0
    r0: float = 1.0
    P0: int = 1
    delta: float = 0.0

    def __post_init__(self):
        if self.kind is SpaceKind.TREE:
            if self.k < 2:
                raise ValueError("tree model needs k >= 2")
            if self.delta != 0:
                raise ValueError("trees are 0-hyperbolic")
        if self.r0 <= 0 or self.P0 < 1 or self.delta < 0:
            raise ValueError("need r0 > 0, P0 >= 1, delta >= 0")

    @property
    def is_tree(self) -> bool:
        return self.kind is SpaceKind.TREE

    @property
    def basepoint(self):
        return () if self.is_tree else BASE_HPOINT

    @property
    def alphabet(self) -> list[int]:
        return letters_of(self.k)

    def check_point(self, p) -> None:
        if self.is_tree:
            if not isinstance(p, tuple):
                raise TypeError(f"tree point must be a word tuple, got {p!r}")
            for g in p:
                if not (isinstance(g, (int, np.integer)) and g != 0 and abs(g) <= self.k):
                    raise ValueError(f"letter {g} is not a generator of F_{self.k}")
            if not is_reduced(p):
                raise ValueError(f"word {format_word(p)} is not reduced")
        elif not isinstance(p, HPoint):
            raise TypeError(f"half-plane point must be an HPoint, got {p!r}")


def tree(k: int, r0: float = 1.0, P0: int | None = None) -> ModelSpace:
    """The Cayley tree of F_k. P0 defaults to the exact Pack(3*r0, r0)."""
    if P0 is None:
        probe = ModelSpace(SpaceKind.TREE, k=k, r0=r0, P0=1)
        P0 = pack_number(probe, (), 3 * r0, r0)
    return ModelSpace(SpaceKind.TREE, k=k, r0=r0, P0=P0)


def half_plane(delta: float = 1.0, r0: float = 1.0, P0: int | None = None) -> ModelSpace:
    """The upper half-plane. P0 defaults to the area bound vol B(4 r0) / vol B(r0)."""
    if P0 is None:
        P0 = int(math.floor(_hyp_disk_area(4 * r0) / _hyp_disk_area(r0)))
    return ModelSpace(SpaceKind.HALF_PLANE, r0=r0, P0=P0, delta=delta)


def _hyp_disk_area(rho: float) -> float:
    return 2 * math.pi * (math.cosh(rho) - 1)


# ---------------------------------------------------------------- distances


def tree_distance(p: Sequence[int], q: Sequence[int]) -> int:
    return len(p) + len(q) - 2 * lcp(p, q)


def hp_distance(p: HPoint, q: HPoint) -> float:
    # 2 asinh form is stable for nearby points
    dx, dy = p.x - q.x, p.y - q.y
    return 2.0 * math.asinh(math.sqrt(dx * dx + dy * dy) / (2.0 * math.sqrt(p.y * q.y)))


def hp_distance_array(x1, y1, x2, y2):
    x1, y1, x2, y2 = map(np.asarray, (x1, y1, x2, y2))
    return 2.0 * np.arcsinh(np.hypot(x1 - x2, y1 - y2) / (2.0 * np.sqrt(y1 * y2)))


def distance(space: ModelSpace, p, q) -> float:
    space.check_point(p)
    space.check_point(q)
    if space.is_tree:
        return tree_distance(p, q)
    return hp_distance(p, q)


def gromov_product(space: ModelSpace, base, p, q) -> float:
    """(p, q)_base = (d(base, p) + d(base, q) - d(p, q)) / 2."""
    return 0.5 * (distance(space, base, p) + distance(space, base, q) - distance(space, p, q))


# ---------------------------------------------------------------- geodesics


@dataclass(frozen=True)
class GeodesicSegment:
    space: ModelSpace
    start: object
    end: object
    length: float

    def eval(self, t: float):
        """Point at arclength t from start.

        On the tree a non-integer t returns the nearer vertex; use
        eval_with_offset to also get the fractional part.
        """
        return self.eval_with_offset(t)[0]

    def eval_with_offset(self, t: float):
        if t < -TOL or t > self.length + TOL:
            raise ValueError(f"parameter {t} outside [0, {self.length}]")
        t = min(max(t, 0.0), self.length)
        if self.space.is_tree:
            n = int(math.floor(t + 0.5))
            return self._tree_vertex(n), t - n
        return _hp_geodesic_point(self.start, self.end, self.length, t), 0.0

    def _tree_vertex(self, n: int):
        p, q = self.start, self.end
        m = lcp(p, q)
        up = len(p) - m
        if n <= up:
            return p[: len(p) - n]
        return q[: m + (n - up)]


def geodesic(space: ModelSpace, p, q) -> GeodesicSegment:
    return GeodesicSegment(space, p, q, distance(space, p, q))


def _to_standard(p: HPoint, xi: float):
    """SL2 map sending i to p and infinity to the ideal point xi (xi may be inf)."""
    s = math.sqrt(p.y)
    h = np.array([[s, p.x / s], [0.0, 1.0 / s]])
    if math.isinf(xi):
        return h
    u = (xi - p.x) / p.y
    # rotation about i sending infinity to u
    theta = math.atan2(-1.0, u)  # cot(theta) = -u with sin(theta) < 0
    c, sn = math.cos(theta), math.sin(theta)
    k = np.array([[c, sn], [-sn, c]])
    return h @ k


def mobius(m, z: complex) -> complex:
    a, b, c, d = m[0][0], m[0][1], m[1][0], m[1][1]
    return (a * z + b) / (c * z + d)


def mobius_boundary(m, x: float) -> float:
    a, b, c, d = m[0][0], m[0][1], m[1][0], m[1][1]
    if math.isinf(x):
        return math.inf if c == 0 else a / c
    den = c * x + d
    if den == 0:
        return math.inf
    return (a * x + b) / den


def _hp_geodesic_point(p: HPoint, q: HPoint, length: float, t: float) -> HPoint:
    if length == 0:
        return p
    xi = hp_geodesic_endpoint(p, q)
    m = _to_standard(p, xi)
    z = mobius(m, complex(0.0, math.exp(t)))
    return HPoint(z.real, z.imag)


def hp_geodesic_endpoint(p: HPoint, q: HPoint) -> float:
    """Ideal endpoint of the ray from p through q."""
    if abs(p.x - q.x) < 1e-15 * max(1.0, abs(p.x)):
        return math.inf if q.y > p.y else p.x
    c = (q.x**2 + q.y**2 - p.x**2 - p.y**2) / (2.0 * (q.x - p.x))
    rad = math.hypot(p.x - c, p.y)
    return c + rad if q.x > p.x else c - rad


# ---------------------------------------------------------------- hyperbolicity


def four_point_defect(space: ModelSpace, x, y, z, w) -> float:
    """Largest violation of the four-point condition over relabellings.

    Equals max over labellings of min{(x,y)_w, (y,z)_w} - (x,z)_w, i.e.
    (largest pair sum - middle pair sum) / 2.
    """
    d = lambda a, b: distance(space, a, b)
    sums = sorted([d(x, y) + d(z, w), d(x, z) + d(y, w), d(x, w) + d(y, z)])
    return 0.5 * (sums[2] - sums[1])


def sample_ball(space: ModelSpace, n: int, radius: float, rng: np.random.Generator, center=None):
    """n random points of the closed ball of given radius around center."""
    if center is None:
        center = space.basepoint
    if space.is_tree:
        R = int(math.floor(radius + TOL))
        alphabet = space.alphabet
        out = []
        for _ in range(n):
            length = int(rng.integers(0, R + 1))
            w: list[int] = []
            for _ in range(length):
                choices = [g for g in alphabet if not w or g != -w[-1]]
                w.append(choices[int(rng.integers(len(choices)))])
            out.append(multiply(center, tuple(w)))
        return out
    xs, ys = _hp_polar(center, rng.uniform(0, radius, n), rng.uniform(0, 2 * math.pi, n))
    return [HPoint(float(a), float(b)) for a, b in zip(xs, ys)]


def _hp_polar(center: HPoint, rho, theta):
    """Half-plane coordinates of the points at hyperbolic polar (rho, theta) around center."""
    w = np.tanh(np.asarray(rho) / 2.0) * np.exp(1j * np.asarray(theta))
    z = 1j * (1 + w) / (1 - w)
    z = center.x + center.y * z
    return z.real, np.maximum(z.imag, np.finfo(float).tiny)


def four_point_defects(space: ModelSpace, samples: int, radius: float, seed: int) -> np.ndarray:
    """Defects of `samples` random quadruples in the ball B(basepoint, radius)."""
    rng = np.random.default_rng(seed)
    if space.is_tree:
        pts = sample_ball(space, 4 * samples, radius, rng)
        out = np.empty(samples)
        for i in range(samples):
            x, y, z, w = pts[4 * i : 4 * i + 4]
            d = tree_distance
            s = sorted([d(x, y) + d(z, w), d(x, z) + d(y, w), d(x, w) + d(y, z)])
            out[i] = 0.5 * (s[2] - s[1])
        return out
    rho = rng.uniform(0, radius, (4, samples))
    theta = rng.uniform(0, 2 * math.pi, (4, samples))
    X, Y = _hp_polar(space.basepoint, rho, theta)
    d = lambda i, j: hp_distance_array(X[i], Y[i], X[j], Y[j])
    s = np.sort(np.stack([d(0, 1) + d(2, 3), d(0, 2) + d(1, 3), d(0, 3) + d(1, 2)]), axis=0)
    return 0.5 * (s[2] - s[1])


def estimate_delta(space: ModelSpace, samples: int, radius: float, seed: int = 0) -> float:
    """Largest sampled four-point defect in a ball, clipped at 0."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    return max(0.0, float(np.max(four_point_defects(space, samples, radius, seed))))


# ---------------------------------------------------------------- packing and covering


def _tree_ball_by_depth(k: int, R: int) -> list[Word]:
    return ball_words(R, letters_of(k))


def _check_radii(R: float, r: float) -> None:
    if not (r > 0 and R > 0):
        raise ValueError("radii must be positive")
    if r > R + TOL:
        raise ValueError(f"need r <= R, got r={r}, R={R}")


def pack_number(space: ModelSpace, center, R: float, r: float) -> int:
    """Maximal size of a 2r-separated subset of the closed ball B(center, R).

    Exact on the tree (the count is the same at every vertex, so the ball
    around the identity is used). On the half-plane this is a greedy lower
    bound over a sample net of spacing r/4.
    """
    _check_radii(R, r)
    space.check_point(center)
    if space.is_tree:
        verts = _tree_ball_by_depth(space.k, int(math.floor(R + TOL)))
        sep = int(math.floor(2 * r + TOL))  # chosen points must be at distance > 2r
        return _tree_max_separated(verts, sep)
    pts = _hp_ball_net(center, R, r / 4)
    return len(_greedy_separated(pts, 2 * r))


def cov_number_ball(space: ModelSpace, center, R: float, r: float) -> int:
    """Minimal size of an r-dense subset of the closed ball B(center, R).

    Exact on the tree by deepest-first distance domination, which is optimal
    on trees. On the half-plane a maximal r-separated subset of a sample net
    is returned, an upper bound up to the net spacing r/4.
    """
    _check_radii(R, r)
    space.check_point(center)
    if space.is_tree:
        verts = _tree_ball_by_depth(space.k, int(math.floor(R + TOL)))
        return _tree_domination(verts, int(math.floor(r + TOL)))
    pts = _hp_ball_net(center, R, r / 4)
    return len(_greedy_separated(pts, r))


def _tree_domination(verts: list[Word], rad: int) -> int:
    """Minimum distance-rad dominating set of a ball around the identity.

    Repeatedly take the deepest undominated vertex and place a centre at its
    ancestor rad levels up; this greedy rule is optimal on rooted trees.
    """
    if rad <= 0:
        return len(verts)
    dominated: set[Word] = set()
    centers = 0
    for v in sorted(verts, key=len, reverse=True):
        if v in dominated:
            continue
        c = v[: max(0, len(v) - rad)]
        centers += 1
        dominated.update(u for u in verts if tree_distance(u, c) <= rad)
    return centers


def _tree_max_separated(verts: list[Word], sep: int) -> int:
    """Largest subset with pairwise distance > sep, deepest-first greedy."""
    chosen: list[Word] = []
    for v in sorted(verts, key=lambda w: (-len(w), w)):
        if all(tree_distance(v, u) > sep for u in chosen):
            chosen.append(v)
    return len(chosen)


def _hp_ball_net(center: HPoint, R: float, h: float) -> list[HPoint]:
    pts = [center]
    nr = max(1, int(math.ceil(R / h)))
    for j in range(1, nr + 1):
        rho = min(R, j * h)
        m = max(6, int(math.ceil(2 * math.pi * math.sinh(rho) / h)))
        xs, ys = _hp_polar(center, np.full(m, rho), np.arange(m) * (2 * math.pi / m))
        pts.extend(HPoint(float(a), float(b)) for a, b in zip(xs, ys))
    return pts


def _greedy_separated(pts: list[HPoint], sep: float) -> list[HPoint]:
    xs = np.array([p.x for p in pts])
    ys = np.array([p.y for p in pts])
    alive = np.ones(len(pts), dtype=bool)
    chosen = []
    for i in range(len(pts)):
        if not alive[i]:
            continue
        chosen.append(pts[i])
        d = hp_distance_array(xs[i], ys[i], xs, ys)
        alive &= d > sep + TOL
    return chosen
