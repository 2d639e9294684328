"""Named desk-scale experiments and their reports.

Every experiment fills tables first and derives its verdicts from those
tables only, so a report can be audited without rerunning anything.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .action import OrbitBudgetExceeded, critical_exponent, free_subgroup
from .boundary import EventualWord, IdealPoint, random_cyclic_tail, shadow_in_ball_check
from .config import ConfigError, ExperimentConfig
from .dimension import SymbolicTree, boundary_cov, ergodic_decomposition, minkowski_dims
from .flow import (
    EnumerationBudgetExceeded,
    GeodesicLine,
    Kernel,
    QuotientGraph,
    bowen_entropy,
    f_integral,
    key_lemma_rows,
    lip_top_entropy,
    quotient_f_integral,
    random_tree_line,
    subshift_entropy,
)
from .space import cov_number_ball, four_point_defects, pack_number, parse_word, sample_ball, tree_distance

BUDGET_ERRORS = (OrbitBudgetExceeded, EnumerationBudgetExceeded)


@dataclass
class Table:
    name: str
    columns: list
    rows: list = field(default_factory=list)

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]

    def lookup(self, key) -> float:
        """Value of a two-column (quantity, value) table."""
        for q, v in self.rows:
            if q == key:
                return v
        raise KeyError(key)


@dataclass
class Verdict:
    id: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""


@dataclass
class Report:
    experiment: str
    config: dict
    tables: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    status: str = "running"
    runtime: float = 0.0
    error: str = ""

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def add(self, name: str, columns, rows) -> Table:
        t = Table(name, list(columns), [list(r) for r in rows])
        self.tables.append(t)
        return t

    def check(self, vid: str, measured: float, tolerance: float, passed: bool, detail: str = "") -> None:
        self.verdicts.append(Verdict(vid, bool(passed), _num(measured), _num(tolerance), detail))

    @property
    def passed(self) -> bool:
        return self.status == "complete" and all(v.passed for v in self.verdicts)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "status": self.status,
            "passed": self.passed,
            "error": self.error,
            "metadata": {
                "config": self.config,
                "versions": {
                    "gromlab": __version__,
                    "numpy": np.__version__,
                    "scipy": scipy.__version__,
                    "python": platform.python_version(),
                },
            },
            "tables": [{"name": t.name, "columns": t.columns, "rows": [[_num(x) for x in r] for r in t.rows]} for t in self.tables],
            "verdicts": [v.__dict__ for v in self.verdicts],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        rep = cls(data["experiment"], data["metadata"]["config"], status=data["status"], error=data.get("error", ""))
        rep.tables = [Table(t["name"], t["columns"], t["rows"]) for t in data["tables"]]
        rep.verdicts = [Verdict(**v) for v in data["verdicts"]]
        return rep


def _num(x):
    """JSON-safe numbers: non-finite floats become strings."""
    if isinstance(x, (bool, str)) or x is None:
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def fmt(x) -> str:
    """CSV cell: integers verbatim, reals with 12 significant digits."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.12g}"
    return "" if x is None else str(x)


def table_csv(t: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(t.columns)
    for row in t.rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def write_report(rep: Report, out_dir: str, prefix: str) -> list[str]:
    """JSON summary, one CSV per table and a timing sidecar (kept apart so the
    report itself is byte-stable)."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    path = os.path.join(out_dir, f"{prefix}.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(path)
    for t in rep.tables:
        path = os.path.join(out_dir, f"{prefix}-{t.name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(table_csv(t))
        paths.append(path)
    with open(os.path.join(out_dir, f"{prefix}.timing.json"), "w", encoding="utf-8") as fh:
        json.dump({"runtime_seconds": round(rep.runtime, 3)}, fh)
        fh.write("\n")
    return paths


# ---------------------------------------------------------------- helpers


def _tree_oracle(group) -> float:
    """Exact critical exponent of a free subgroup: the entropy of its core graph."""
    h = subshift_entropy(QuotientGraph(group))
    return 0.0 if h == -math.inf else h


def _growth(rep: Report, est) -> None:
    rep.add("growth", ["n", "N"], [(n, c) for n, c in enumerate(est.counts)])
    rep.add("critical-window", ["radius", "increment", "ratio"], zip(est.radii, est.increments, est.ratios))


def _window_bounds(rep: Report) -> tuple[float, float]:
    incs = rep.table("critical-window").column("increment")
    return min(incs), max(incs)


def _slope_bounds(rep: Report, name: str) -> tuple[float, float]:
    counts = rep.table(name).column("count")
    logs = [math.log(c) for c in counts]
    inc = [b - a for a, b in zip(logs, logs[1:])]
    return min(inc), max(inc)


def _counts_table(rep: Report, name: str, est) -> None:
    rep.add(name, ["n", "count"], zip(est.scales, est.counts))


def _tree_only(cfg: ExperimentConfig, space) -> None:
    if not space.is_tree:
        raise ConfigError(f"{cfg.experiment} runs on tree models only")


# ---------------------------------------------------------------- experiments


def _roblin(cfg, rep):
    p = cfg.params
    space = cfg.model.build()
    group = cfg.group.build(space)
    est = critical_exponent(group, cfg.group.base(space), p.radius, p.window, budget=p.budget)
    _growth(rep, est)
    lo, hi = _window_bounds(rep)
    rep.check("gap", hi - lo, p.gap_tol, hi - lo < p.gap_tol, "upper - lower critical-exponent estimate")
    if space.is_tree:
        h = _tree_oracle(group)
        rep.add("reference", ["quantity", "value"], [("oracle", h)])
        h = rep.table("reference").lookup("oracle")
        err = max(abs(hi - h), abs(lo - h))
        rep.check("oracle", err, p.tol, err <= p.tol, "both estimates against the core-graph entropy")


def _bishop_jones(cfg, rep):
    p = cfg.params
    space = cfg.model.build()
    _tree_only(cfg, space)
    group = cfg.group.build(space)
    base = cfg.group.base(space)
    est = critical_exponent(group, base, p.radius, p.window, budget=p.budget)
    _growth(rep, est)
    md = minkowski_dims(SymbolicTree.limit_set(group, base), p.n_min, p.n_max)
    _counts_table(rep, "dimension", md)
    rep.add("reference", ["quantity", "value"], [("ambient", math.log(2 * space.k - 1))])
    clo, chi = _window_bounds(rep)
    mlo, mhi = _slope_bounds(rep, "dimension")
    err = max(abs(a - b) for a in (mlo, mhi) for b in (clo, chi))
    rep.check("md-vs-critical", err, p.tol, err <= p.tol, "Minkowski slopes against critical-exponent window")
    if p.check_ambient:
        ceiling = rep.table("reference").lookup("ambient") - p.ambient_margin
        top = max(mhi, chi)
        rep.check("below-ambient", top, ceiling, top < ceiling, "both estimates below log(2k-1) - margin")


def _dimension_chain(cfg, rep):
    p = cfg.params
    space = cfg.model.build()
    _tree_only(cfg, space)
    group = cfg.group.build(space)
    base = cfg.group.base(space)
    pieces = ergodic_decomposition(group, base, p.taus, p.limits, p.amplitudes, p.exponent)
    params = [(t, l, a) for t in p.taus for l in p.limits for a in p.amplitudes]
    rows = []
    for (t, l, a), piece in zip(params, pieces):
        last = boundary_cov(piece, math.exp(-p.n_max))
        slope = minkowski_dims(piece, p.n_min, p.n_max).slope_upper if last else None
        rows.append((t, l, a, last, slope))
    rep.add("pieces", ["tau", "limit", "amplitude", "count_at_n_max", "slope_upper"], rows)
    whole = minkowski_dims(SymbolicTree.limit_set(group, base), p.n_min, p.n_max)
    _counts_table(rep, "dimension", whole)
    est = critical_exponent(group, base, p.radius, p.window, budget=p.budget)
    _growth(rep, est)
    rep.add("reference", ["quantity", "value"], [("oracle", _tree_oracle(group))])
    slopes = [s for s in rep.table("pieces").column("slope_upper") if s is not None]
    pd = max(slopes) if slopes else 0.0
    h = rep.table("reference").lookup("oracle")
    rep.check("packing-upper", abs(pd - h), p.tol, abs(pd - h) <= p.tol, "sup of piece slopes against the exact critical exponent")
    excess = max(rep.table("pieces").column("count_at_n_max")) - rep.table("dimension").column("count")[-1]
    rep.check("subset", excess, 0, excess <= 0, "no piece has more cylinders than the whole limit set")


def _random_boundary_point(space, rng):
    if space.is_tree:
        letters = [g for g in range(-space.k, space.k + 1) if g]
        pre: list[int] = []
        for _ in range(int(rng.integers(0, 6))):
            choices = [g for g in letters if not pre or g != -pre[-1]]
            pre.append(choices[int(rng.integers(len(choices)))])
        return EventualWord(tuple(pre), random_cyclic_tail(space.k, {-pre[-1]} if pre else set(), rng))
    return IdealPoint(float(rng.standard_cauchy()))


def _shadow(cfg, rep):
    p = cfg.params
    space = cfg.model.build()
    base = cfg.group.base(space)
    rng = np.random.default_rng(cfg.seed)
    mode = "-T-r" if p.mutate else "-T+r"
    checked = seen = bad = 0
    for i in range(p.instances):
        z = _random_boundary_point(space, rng)
        T = float(rng.uniform(p.T_min, p.T_max))
        r = float(rng.uniform(0.05, min(p.r_max, 0.9 * T)))
        res = shadow_in_ball_check(space, base, z, T, r, p.samples, seed=int(rng.integers(2**31)), ball_exponent=mode)
        checked += res.checked
        seen += res.in_shadow
        bad += not res.ok
    rep.add("shadow", ["instances", "points", "in_shadow", "violations", "mutated"], [(p.instances, checked, seen, bad, p.mutate)])
    v = rep.table("shadow").column("violations")[0]
    rep.check("no-violations", v, 0, v == 0, f"shadows inside visual balls of radius e^({mode})")


def _delta_audit(cfg, rep):
    p = cfg.params
    space = cfg.model.build()
    d = four_point_defects(space, p.quadruples, p.radius, cfg.seed)
    bound = p.defect_bound if p.defect_bound is not None else (0.0 if space.is_tree else 1.0)
    rep.add("defects", ["quantity", "value"], [("samples", p.quadruples), ("max", float(d.max())), ("mean", float(d.mean())), ("bound", bound), ("above_bound", int((d > bound).sum()))])
    rng = np.random.default_rng(cfg.seed + 1)
    centers = sample_ball(space, p.balls, p.ball_radius, rng)
    rows = []
    for i, c in enumerate(centers):
        rows.append((i, "pack", 3 * space.r0, space.r0, pack_number(space, c, 3 * space.r0, space.r0), space.P0))
        for R in p.cov_radii:
            bound_c = space.P0 * (1 + space.P0) ** (R / space.r0 - 1)
            rows.append((i, "cov", R, space.r0, cov_number_ball(space, c, R, space.r0), bound_c))
    rep.add("balls", ["ball", "kind", "R", "r", "count", "bound"], rows)
    t = rep.table("defects")
    worst = t.lookup("max")
    rep.check("four-point", worst, t.lookup("bound"), worst <= t.lookup("bound"), "largest sampled defect")
    balls = rep.table("balls")
    for kind in ("pack", "cov"):
        over = [c - b for k, _, _, c, b in zip(balls.column("kind"), balls.column("R"), balls.column("r"), balls.column("count"), balls.column("bound")) if k == kind]
        rep.check(f"{kind}-bound", max(over), 0, max(over) <= 0, f"{kind} counts minus their bound on sampled balls")


def _f_metric(cfg, rep):
    p = cfg.params
    space = cfg.model.build()
    _tree_only(cfg, space)
    kernel = Kernel(p.beta)
    rng = np.random.default_rng(cfg.seed)
    Q = QuotientGraph(free_subgroup(space, p.quotient_words))
    worst_up = worst_down = worst_lip = -math.inf
    worst_err = 0.0
    for _ in range(p.pairs):
        g1, g2 = random_tree_line(space.k, rng), random_tree_line(space.k, rng)
        res = f_integral(kernel, g1, g2)
        d0 = tree_distance(g1.vertex(0), g2.vertex(0))
        worst_up = max(worst_up, res.value - d0 - kernel.C)
        worst_down = max(worst_down, d0 - res.value - kernel.C)
        q = quotient_f_integral(kernel, Q, g1, g2)
        worst_lip = max(worst_lip, q.value - res.value)
        worst_err = max(worst_err, res.error, q.error)
    rep.add("f-metric", ["quantity", "value"], [
        ("pairs", p.pairs), ("C", kernel.C), ("max_f_minus_d0_minus_C", worst_up),
        ("max_d0_minus_f_minus_C", worst_down), ("max_quotient_minus_f", worst_lip), ("max_error", worst_err),
    ])
    t = rep.table("f-metric")
    for vid, key in (("upper-bound", "max_f_minus_d0_minus_C"), ("lower-bound", "max_d0_minus_f_minus_C"), ("one-lipschitz", "max_quotient_minus_f")):
        v = t.lookup(key)
        rep.check(vid, v, p.tol, v <= p.tol, key)
    rep.check("integration-error", t.lookup("max_error"), p.tol, t.lookup("max_error") <= p.tol, "certified tail and window error")


def _key_lemma(cfg, rep):
    p = cfg.params
    space = cfg.model.build()
    _tree_only(cfg, space)
    kernel = Kernel(p.beta)
    R = 2 * kernel.C if p.R is None else p.R
    r = kernel.C / 2 if p.r is None else p.r
    center = GeodesicLine(
        parse_word(p.center_origin),
        EventualWord.parse(*p.center_past),
        EventualWord.parse(*p.center_future),
    )
    rows = key_lemma_rows(kernel, center, R, r, p.T_list, k=space.k, margin=p.margin, budget=p.budget)
    rep.add("key-lemma", ["T", "ball", "cover", "value"], [(x.T, x.ball, x.cover, x.value) for x in rows])
    t = rep.table("key-lemma")
    pts = [(T, v) for T, v in zip(t.column("T"), t.column("value")) if T >= p.burn_in]
    rise = max([b[1] - a[1] for a, b in zip(pts, pts[1:])], default=0.0)
    rep.check("non-increasing", rise, 1e-12, rise <= 1e-12, f"largest increase after T = {p.burn_in}")
    last = t.column("value")[-1]
    rep.check("decay", last, p.threshold, last <= p.threshold, f"value at T = {t.column('T')[-1]}")


def _bowen(cfg, rep, with_critical: bool):
    p = cfg.params
    space = cfg.model.build()
    _tree_only(cfg, space)
    group = cfg.group.build(space)
    base = cfg.group.base(space)
    kernel = Kernel(p.beta)
    Q = QuotientGraph(group, base)
    est = bowen_entropy(Q, p.tau, kernel, p.r, p.n_min, p.n_max, p.budget)
    rep.add("entropy", ["n", "count"], zip(est.scales, est.counts))
    ref = [("oracle", subshift_entropy(Q, p.tau)), ("ambient", math.log(2 * space.k - 1))]
    if p.compare_double:
        est2 = bowen_entropy(Q, p.tau, kernel, 2 * p.r, p.n_min, p.n_max, p.budget)
        rep.add("entropy-2r", ["n", "count"], zip(est2.scales, est2.counts))
    if with_critical:
        crit = critical_exponent(group, base, p.radius, p.window)
        _growth(rep, crit)
    rep.add("reference", ["quantity", "value"], ref)
    lo, hi = _slope_bounds(rep, "entropy")
    h = rep.table("reference").lookup("oracle")
    err = max(abs(lo - h), abs(hi - h))
    rep.check("oracle", err, p.tol, err <= p.tol, "Bowen slopes against the subshift entropy")
    if p.compare_double:
        lo2, hi2 = _slope_bounds(rep, "entropy-2r")
        err2 = max(abs(lo - lo2), abs(hi - hi2))
        rep.check("radius-independence", err2, p.tol, err2 <= p.tol, "slopes at r and 2r")
    if with_critical:
        clo, chi = _window_bounds(rep)
        err3 = max(abs(a - b) for a in (lo, hi) for b in (clo, chi))
        rep.check("critical", err3, p.tol, err3 <= p.tol, "Bowen slopes against critical-exponent window")
    amb = rep.table("reference").lookup("ambient")
    if abs(h - amb) > 2 * p.tol:
        gap = min(abs(lo - amb), abs(hi - amb))
        rep.check("not-ambient", gap, p.tol, gap > p.tol, "slopes stay away from log(2k-1)")


def _lip_top(cfg, rep):
    p = cfg.params
    space = cfg.model.build()
    _tree_only(cfg, space)
    group = cfg.group.build(space)
    C = SymbolicTree.limit_set(group, cfg.group.base(space))
    kernel = Kernel(p.beta)
    est = lip_top_entropy(C, p.L, kernel, p.r, p.T_min, p.T_max, p.budget)
    rep.add("entropy", ["n", "count"], zip(est.scales, est.counts))
    md = minkowski_dims(C, p.T_min, p.T_max)
    _counts_table(rep, "dimension", md)
    lo, hi = _slope_bounds(rep, "entropy")
    mlo, mhi = _slope_bounds(rep, "dimension")
    err = max(abs(lo - mlo), abs(hi - mhi))
    rep.check("md", err, p.tol, err <= p.tol, "Lipschitz-topological slopes against Minkowski slopes")


RUNNERS = {
    "roblin": _roblin,
    "bishop-jones": _bishop_jones,
    "dimension-chain": _dimension_chain,
    "shadow-lemma": _shadow,
    "delta-audit": _delta_audit,
    "f-metric": _f_metric,
    "key-lemma": _key_lemma,
    "bowen": lambda c, r: _bowen(c, r, False),
    "main-theorem": lambda c, r: _bowen(c, r, True),
    "lip-top": _lip_top,
}


def run(cfg: ExperimentConfig) -> Report:
    """Run one experiment. Budget overruns leave a partial report with
    status 'budget-exceeded'; configuration problems raise ConfigError."""
    echo = cfg.to_dict()
    echo.pop("output")  # where the files go is not part of the result
    rep = Report(cfg.experiment, echo)
    t0 = time.perf_counter()
    try:
        RUNNERS[cfg.experiment](cfg, rep)
        rep.status = "complete"
    except BUDGET_ERRORS as err:
        rep.status = "budget-exceeded"
        rep.error = str(err)
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from err
    rep.runtime = time.perf_counter() - t0
    return rep


def exit_code(rep: Report) -> int:
    if rep.status == "budget-exceeded":
        return 3
    return 0 if rep.passed else 1
