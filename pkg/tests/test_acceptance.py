"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
Sweeps are cached per module so the packing and determinism checks reuse them.
"""

import hashlib
import json
import math

import numpy as np
import pytest

from netcap.analysis import SweepSpec, aggregate, scenario_report, sweep
from netcap.engine import HYBRID, MOBILE, MULTICAST, STATIC, SimConfig, run, verify_identity
from netcap.geometry import place_uniform
from netcap.interference import packing_upper_bound
from netcap.topology import avg_hop_count, build_range_graph, is_connected

pytestmark = pytest.mark.slow

RESULTS = []
RECORDS = []  # every MetricsRecord produced here, for the packing check
_SWEEPS = {}

N_SWEEP = (64, 128, 256, 512, 1024)
N_GRID = (64, 144, 256, 576, 1024)
HYBRID_N = 1024
HYBRID_FIXED = dict(n=HYBRID_N, r=math.sqrt(math.log(HYBRID_N) / HYBRID_N), C=1.5, T=3000)


def report(num, name, ok, detail):
    line = f"criterion {num:>2} {name}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def run_sweep(spec):
    key = json.dumps(spec.to_dict(), sort_keys=True)
    if key not in _SWEEPS:
        rows = sweep(spec)
        RECORDS.extend(r.metrics for r in rows if r.ok)
        _SWEEPS[key] = rows
    return _SWEEPS[key]


def tracked(cfg):
    m = run(cfg)
    RECORDS.append(m)
    return m


def static_spec(values=N_SWEEP, **fixed):
    return SweepSpec(STATIC, values, seeds=5, fixed={"T": 10_000, **fixed})


def mobile_spec():
    return SweepSpec(MOBILE, N_SWEEP, seeds=5, fixed={"T": 4000})


def multicast_spec(values):
    return SweepSpec(MULTICAST, values, seeds=5, fixed={"n": 1024, "T": 10_000})


def hybrid_spec(values=(4, 8, 16, 32, 64), **extra):
    return SweepSpec(HYBRID, values, seeds=5, fixed={**HYBRID_FIXED, **extra})


def fingerprint(rows) -> str:
    h = hashlib.sha256()
    for r in rows:
        h.update(r.metrics.to_json().encode() if r.ok else (r.error or "").encode())
        if r.ok:
            h.update(np.ascontiguousarray(r.metrics.y).tobytes())
            h.update(np.ascontiguousarray(r.metrics.delivered).tobytes())
    return h.hexdigest()


# --- 1 ------------------------------------------------------------------------

IDENTITY_N = (64, 256, 512)


def test_identity_residual():
    worst, increases, runs = 0.0, [], 0
    for n in IDENTITY_N:
        for seed in range(4):
            m = tracked(SimConfig(n=n, T=20_000, seed=seed))
            if m.stable:
                runs += 1
                worst = max(worst, verify_identity(m))
            # full-horizon accounting for the doubling check
            a = tracked(SimConfig(n=n, T=20_000, warmup=0, seed=seed))
            b = tracked(SimConfig(n=n, T=40_000, warmup=0, seed=seed))
            ra, rb = verify_identity(a), verify_identity(b)
            worst = max(worst, ra, rb)
            if rb > ra:
                increases.append((n, seed, ra, rb))
    ok = runs > 0 and worst <= 0.05 and not increases
    report(1, "identity eta = E(Y) W / k", ok,
           f"max residual {worst:.4f} over {runs} default runs + doubling pairs; "
           f"doubling increases {len(increases)}")
    assert ok, increases


# --- 2 ------------------------------------------------------------------------

def test_micro_oracles():
    pair = SimConfig(n=2, positions=((0.25, 0.5), (0.3, 0.5)), r=0.1, flows=((0, 1),), T=1000, W=2.0)
    chain = SimConfig(n=3, positions=((0.25, 0.5), (0.3, 0.5), (0.35, 0.5)), r=0.06,
                      flows=((0, 2),), T=1000, W=2.0)
    a, b = tracked(pair), tracked(chain)
    got = [(a.eta_hat, a.k_hat, a.ey_hat), (b.eta_hat, b.k_hat, b.ey_hat)]
    ok = got == [(2.0, 1.0, 1.0), (1.0, 2.0, 1.0)]
    report(2, "exact micro-oracles", ok, f"link {got[0]}  chain {got[1]}  (W = 2)")
    assert ok


# --- 3 and 4 ------------------------------------------------------------------

def test_static_random_scaling():
    rep = scenario_report(run_sweep(static_spec()), STATIC)
    ok = rep.verdict == "pass"
    report(3, "static random scaling", ok,
           f"slope {rep.fit.slope:.4f} bracket {list(rep.fit.bracket)} R^2 {rep.fit.r_squared:.4f}")
    print(rep.table())
    assert ok


def test_grid_advantage():
    grid = run_sweep(static_spec(N_GRID, placement="grid"))
    rep = scenario_report(grid, "static-grid")
    rand_rows = run_sweep(static_spec()) + run_sweep(static_spec((144, 576, 1024)))
    rv, rc, _, _ = aggregate(rand_rows, "lambda_hat")
    rand = dict(zip(rv, rc))
    gv, gc, _, _ = aggregate(grid, "lambda_hat")
    pairs = [(n, g, rand[n]) for n, g in zip(gv, gc) if n >= 256]
    beats = all(g >= r for _, g, r in pairs) and {n for n, _, _ in pairs} == {256, 576, 1024}
    ok = rep.verdict == "pass" and beats
    cmp = ", ".join(f"n={n:g}: {g:.5f} vs {r:.5f}" for n, g, r in pairs)
    report(4, "grid advantage", ok,
           f"slope {rep.fit.slope:.4f} bracket {list(rep.fit.bracket)}; grid vs random {cmp}")
    print(rep.table())
    assert ok


# --- 5 ------------------------------------------------------------------------

def test_hops_inverse_in_range():
    n = 1000
    r = 2 * math.sqrt(2 * math.log(n) / n)
    ratios, connected = [], True
    for seed in range(10):
        p = place_uniform(n, seed)
        g1, g2 = build_range_graph(p, r), build_range_graph(p, r / 2)
        connected &= is_connected(g1) and is_connected(g2)
        ratios.append(avg_hop_count(g2, sample_size=0).mean / avg_hop_count(g1, sample_size=0).mean)
    mean = float(np.mean(ratios))
    ok = connected and 1.8 <= mean <= 2.2
    report(5, "k scales as 1/r", ok, f"mean hop ratio {mean:.4f} over 10 seeds, connected={connected}")
    assert ok


# --- 6 ------------------------------------------------------------------------

def test_mobile_two_hop():
    rows = run_sweep(mobile_spec())
    rep = scenario_report(rows, MOBILE)
    ms = [r.metrics for r in rows if r.ok]
    max_hops = max(m.max_hops for m in ms)
    k_ok = all(1.0 <= m.k_hat <= 2.0 for m in ms)
    ok = max_hops == 2 and k_ok and rep.verdict == "pass" and len(ms) == len(rows)
    report(6, "mobile two-hop", ok,
           f"max hops {max_hops}, k in [1,2]: {k_ok}, slope {rep.fit.slope:.4f} "
           f"bracket {list(rep.fit.bracket)}")
    print(rep.table())
    assert ok


# --- 7 ------------------------------------------------------------------------

def test_multicast_regimes():
    n = 1024
    l_star = int(n / (4 * math.log(n)))
    low = tuple(sorted({2, 4, 8, 16, 32, l_star}))
    l_sat = math.ceil(4 * n / math.log(n))
    high = (l_sat, (l_sat + n) // 2, n)
    rep = scenario_report(run_sweep(multicast_spec(low)), MULTICAST)
    _, hc, _, _ = aggregate(run_sweep(multicast_spec(high)), "eta_hat")
    spread = float(hc.max() / hc.min())
    ok = rep.verdict == "pass" and spread <= 2.0
    report(7, "multicast regimes", ok,
           f"slope {rep.fit.slope:.4f} over l={list(low)} bracket {list(rep.fit.bracket)}; "
           f"saturation max/min {spread:.3f} over l={list(high)}")
    print(rep.table())
    assert ok


# --- 8 ------------------------------------------------------------------------

def test_hybrid_regimes():
    rows = run_sweep(hybrid_spec())
    values, centre, _, _ = aggregate(rows, "eta_hat")
    monotone = bool(np.all(np.diff(centre) >= 0))
    m_min = math.sqrt(HYBRID_N / math.log(HYBRID_N))
    rep = scenario_report(rows, HYBRID, fit_min=m_min)
    big = (64, 128, 256)
    _, fixed, _, _ = aggregate(run_sweep(hybrid_spec(big)), "eta_hat")
    _, reduced, _, _ = aggregate(run_sweep(hybrid_spec(big, reduced_range=True)), "eta_hat")
    ok = monotone and rep.verdict == "pass" and reduced[-1] > fixed[-1]
    report(8, "hybrid regimes", ok,
           f"monotone {monotone}; slope {rep.fit.slope:.4f} for M >= {m_min:.1f} "
           f"bracket {list(rep.fit.bracket)}; M=256 reduced {reduced[-1]:.3f} vs fixed {fixed[-1]:.3f}")
    print(rep.table())
    assert ok


# --- 9 and 10 (run last: they read everything above) -----------------------------

def test_packing_invariant():
    bad = [m for m in RECORDS
           if m.y_max > m.packing_bound
           or m.packing_bound != packing_upper_bound(SimConfig(n=m.n, r=m.r, C=m.C, W=m.W).radio())]
    ok = len(RECORDS) > 0 and not bad
    report(9, "packing invariant", ok, f"{len(RECORDS) - len(bad)}/{len(RECORDS)} runs within the bound")
    assert ok


def test_determinism():
    specs = [static_spec(), static_spec(N_GRID, placement="grid"), mobile_spec(), hybrid_spec(),
             multicast_spec((2, 4, 8, 16, 32, 36))]
    same = []
    for spec in specs:
        first = run_sweep(spec)
        same.append(fingerprint(first) == fingerprint(sweep(spec)))
    cfg = SimConfig(n=256, T=20_000, seed=1)
    same.append(run(cfg).to_json() == run(cfg).to_json())
    p = [avg_hop_count(build_range_graph(place_uniform(1000, 0), 0.1), sample_size=0).mean
         for _ in range(2)]
    same.append(p[0] == p[1])
    ok = all(same)
    report(10, "determinism", ok, f"{sum(same)}/{len(same)} re-executions bit-identical")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
