"""Acceptance battery: one test per criterion at its stated tolerance.

Each test records a one-line PASS/FAIL summary; conftest prints them at the
end of the session (run with -s to also see them inline).
"""

import io
import json
import math
import time

import pytest

from gromlab import cli
from gromlab.config import parse_config
from gromlab.experiments import run, write_report
from gromlab.flow import QuotientGraph, subshift_entropy
from gromlab.action import full_free_group
from gromlab.space import tree

LOG3, LOG5 = math.log(3), math.log(5)
RESULTS: list[str] = []

F2 = {"model": {"kind": "tree", "k": 2}, "group": {"kind": "full"}}
AB_IN_F3 = {"model": {"kind": "tree", "k": 3}, "group": {"kind": "subgroup", "words": ["a", "b"]}}


@pytest.fixture
def record(request):
    """Collects (ok, text) pairs; logs one line for the criterion on teardown."""
    checks = []
    yield lambda ok, text: checks.append((bool(ok), text))
    ok = bool(checks) and all(c for c, _ in checks) and not request.node.rep_call_failed
    line = f"[{'PASS' if ok else 'FAIL'}] {request.node.name}: " + "; ".join(t for _, t in checks)
    RESULTS.append(line)
    print(line)


def _timed(data):
    t0 = time.perf_counter()
    rep = run(parse_config(data))
    return rep, time.perf_counter() - t0


def _window(rep, name="critical-window"):
    inc = rep.table(name).column("increment")
    return min(inc), max(inc)


def _slopes(rep, name):
    c = rep.table(name).column("count")
    inc = [math.log(b) - math.log(a) for a, b in zip(c, c[1:])]
    return min(inc), max(inc)


def test_criterion_01_critical_exponent_limit(record):
    rep, secs = _timed({**F2, "experiment": "roblin", "params": {"radius": 12, "window": 4}})
    lo, hi = _window(rep)
    err = max(abs(lo - LOG3), abs(hi - LOG3))
    record(err < 0.02, f"tree |est - log 3| = {err:.2e} < 0.02")
    record(hi - lo < 0.02, f"tree gap = {hi - lo:.2e} < 0.02")
    record(secs < 10, f"tree runtime {secs:.1f}s < 10s")
    rep, _ = _timed({"model": {"kind": "half-plane"}, "group": {"kind": "classical-schottky"}, "experiment": "roblin", "params": {"radius": 14, "window": 4, "gap_tol": 0.05}})
    lo, hi = _window(rep)
    record(hi - lo < 0.05, f"Schottky gap = {hi - lo:.4f} < 0.05")
    assert err < 0.02 and hi - lo < 0.05 and secs < 10


def test_criterion_02_minkowski_vs_critical(record):
    rep, secs = _timed({**AB_IN_F3, "experiment": "bishop-jones", "params": {"n_min": 6, "n_max": 12, "radius": 12, "window": 4}})
    mlo, mhi = _slopes(rep, "dimension")
    clo, chi = _window(rep)
    err = max(abs(a - b) for a in (mlo, mhi) for b in (clo, chi))
    top = max(mhi, chi)
    record(err <= 0.05, f"|MD - crit| = {err:.2e} <= 0.05")
    record(top < LOG5 - 0.3, f"max estimate {top:.4f} < log 5 - 0.3 = {LOG5 - 0.3:.4f}")
    record(secs < 60, f"runtime {secs:.1f}s < 60s")
    assert err <= 0.05 and top < LOG5 - 0.3 and secs < 60


def test_criterion_03_packing_upper_bound(record):
    data = {**AB_IN_F3, "experiment": "dimension-chain", "params": {"n_min": 6, "n_max": 12}}
    data["group"] = {**data["group"], "basepoint": "c"}
    rep, secs = _timed(data)
    slopes = [s for s in rep.table("pieces").column("slope_upper") if s is not None]
    h = rep.table("reference").lookup("oracle")
    pd = max(slopes)
    record(abs(pd - h) <= 0.1, f"|PD upper - h| = {abs(pd - h):.2e} <= 0.1 over {len(slopes)} non-empty pieces")
    record(secs < 60, f"runtime {secs:.1f}s < 60s")
    assert abs(h - LOG3) < 1e-10
    assert abs(pd - h) <= 0.1 and secs < 60


def test_criterion_04_shadow_in_visual_ball(record):
    tree_rep, _ = _timed({**F2, "experiment": "shadow-lemma", "params": {"instances": 10_000}})
    hp_rep, _ = _timed({"model": {"kind": "half-plane"}, "group": {"kind": "trivial"}, "experiment": "shadow-lemma", "params": {"instances": 1_000}})
    bad_rep, _ = _timed({**F2, "experiment": "shadow-lemma", "params": {"instances": 10_000, "mutate": True}})
    t = tree_rep.table("shadow").column("violations")[0]
    h = hp_rep.table("shadow").column("violations")[0]
    m = bad_rep.table("shadow").column("violations")[0]
    record(t == 0, f"tree 10^4 instances: {t} violations")
    record(h == 0, f"half-plane 10^3 instances: {h} violations")
    record(m >= 1, f"mutated exponent: {m} violations (>= 1 expected)")
    assert t == 0 and h == 0 and m >= 1


def test_criterion_05_hyperbolicity_audit(record):
    ok = True
    for label, base in (("tree", F2), ("half-plane", {"model": {"kind": "half-plane"}, "group": {"kind": "trivial"}})):
        rep, _ = _timed({**base, "experiment": "delta-audit", "params": {"quadruples": 100_000}})
        d = rep.table("defects")
        bound = 0.0 if label == "tree" else 1.0
        worst = d.lookup("max")
        balls = rep.table("balls")
        over = max(c - b for c, b in zip(balls.column("count"), balls.column("bound")))
        record(worst <= bound, f"{label} max defect {worst:.4f} <= {bound}")
        record(over <= 0, f"{label} Pack/Cov counts never exceed their bounds")
        ok &= worst <= bound and over <= 0 and d.lookup("samples") == 100_000
    assert ok


def test_criterion_06_f_metric_bounds(record):
    rep, _ = _timed({**F2, "experiment": "f-metric", "params": {"pairs": 1000, "tol": 1e-6}})
    t = rep.table("f-metric")
    up, down, lip = t.lookup("max_f_minus_d0_minus_C"), t.lookup("max_d0_minus_f_minus_C"), t.lookup("max_quotient_minus_f")
    record(up <= 1e-6, f"max f - d0 - C = {up:.2e}")
    record(down <= 1e-6, f"max d0 - f - C = {down:.2e}")
    record(lip <= 1e-6, f"max quotient f - f = {lip:.2e}")
    record(t.lookup("max_error") <= 1e-6, f"integration error {t.lookup('max_error'):.1e}")
    assert max(up, down, lip, t.lookup("max_error")) <= 1e-6


def test_criterion_07_dynamical_cover_decay(record):
    rep, secs = _timed({**F2, "experiment": "key-lemma", "params": {"beta": 4, "T_list": [10, 20, 30, 40]}})
    t = rep.table("key-lemma")
    vals = t.column("value")
    mono = all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    record(mono, "values " + ", ".join(f"{v:.4f}" for v in vals) + " non-increasing")
    record(vals[-1] <= 0.05, f"value at T = 40 is {vals[-1]:.4f} <= 0.05")
    record(secs < 300, f"runtime {secs:.1f}s < 300s")
    assert t.column("T") == [10, 20, 30, 40]
    assert mono and vals[-1] <= 0.05 and secs < 300


def test_criterion_08_entropy_equals_critical_exponent(record):
    oracle = subshift_entropy(QuotientGraph(full_free_group(tree(2))))
    record(abs(oracle - LOG3) <= 1e-10, f"rose oracle |h - log 3| = {abs(oracle - LOG3):.1e}")
    rep, s1 = _timed({**F2, "experiment": "main-theorem", "params": {"r": 0.5, "n_min": 6, "n_max": 10, "radius": 12, "window": 4}})
    lo, hi = _slopes(rep, "entropy")
    lo2, hi2 = _slopes(rep, "entropy-2r")
    clo, chi = _window(rep)
    e_oracle = max(abs(lo - oracle), abs(hi - oracle))
    e_crit = max(abs(a - b) for a in (lo, hi) for b in (clo, chi))
    e_2r = max(abs(lo - lo2), abs(hi - hi2))
    record(e_oracle <= 0.05, f"|Bowen - oracle| = {e_oracle:.1e}")
    record(e_crit <= 0.05, f"|Bowen - crit| = {e_crit:.1e}")
    record(e_2r <= 0.05, f"|slope(r) - slope(2r)| = {e_2r:.1e}")
    rep, s2 = _timed({**AB_IN_F3, "experiment": "bowen", "params": {"tau": 2, "r": 0.5, "n_min": 6, "n_max": 10}})
    blo, bhi = _slopes(rep, "entropy")
    near3 = max(abs(blo - LOG3), abs(bhi - LOG3))
    far5 = min(abs(blo - LOG5), abs(bhi - LOG5))
    record(near3 <= 0.05 and far5 > 0.05, f"F_2 < F_3, tau = 2: slopes [{blo:.4f}, {bhi:.4f}] near log 3, not log 5")
    record(s1 + s2 < 600, f"runtime {s1 + s2:.1f}s < 600s")
    assert abs(oracle - LOG3) <= 1e-10
    assert max(e_oracle, e_crit, e_2r, near3) <= 0.05 and far5 > 0.05 and s1 + s2 < 600


def test_criterion_09_lipschitz_entropy_equals_minkowski(record):
    ok = True
    for label, base in (("boundary of F_2", F2), ("boundary of <a,b> in F_3", AB_IN_F3)):
        rep, _ = _timed({**base, "experiment": "lip-top", "params": {"T_min": 6, "T_max": 10}})
        lo, hi = _slopes(rep, "entropy")
        mlo, mhi = _slopes(rep, "dimension")
        err = max(abs(lo - mlo), abs(hi - mhi))
        record(err <= 0.05, f"{label}: |Lip-top - MD| = {err:.1e}")
        ok &= err <= 0.05
    assert ok


def test_criterion_10_determinism_and_plumbing(record, tmp_path, monkeypatch):
    monkeypatch.delenv("GROMLAB_THREADS", raising=False)
    t0 = time.perf_counter()
    code = cli.verify("quick", str(tmp_path / "verify"), stream=io.StringIO())
    secs = time.perf_counter() - t0
    record(code == 0, f"verify quick exit {code}")
    record(secs < 60, f"verify quick {secs:.1f}s < 60s")
    summary = json.loads((tmp_path / "verify" / "verify.json").read_text())
    record(summary["passed"], f"{len(summary['verdicts'])} battery verdicts pass")

    cfg = {**F2, "experiment": "main-theorem", "params": {"n_min": 3, "n_max": 6, "radius": 6, "window": 2}, "seed": 11}
    blobs = []
    for d in ("a", "b"):
        out = tmp_path / d
        rep = run(parse_config(cfg))
        paths = write_report(rep, str(out), "det")
        cli.plotdata(str(out / "det.json"), "entropy-slopes", str(out / "plot.csv"))
        blobs.append([open(p, "rb").read() for p in paths + [str(out / "plot.csv")]])
    same = blobs[0] == blobs[1]
    record(same, f"{len(blobs[0])} output files byte-identical across runs")

    path = tmp_path / "mutated.json"
    path.write_text(json.dumps({**F2, "experiment": "shadow-lemma", "params": {"instances": 2000, "mutate": True}}))
    mcode = cli.main(["run", "--config", str(path), "--out", str(tmp_path / "m")])
    record(mcode == 1, f"mutated shadow run exit {mcode}")
    assert code == 0 and secs < 60 and summary["passed"] and same and mcode == 1
