import json
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netcap.analysis import (
    InsufficientDataError,
    SweepRow,
    SweepSpec,
    aggregate,
    loglog_fit,
    report_for,
    rows_from_csv,
    rows_to_csv,
    scenario_report,
    sweep,
    write_sweep,
)
from netcap.engine import HYBRID, MOBILE, MULTICAST, STATIC


def fake(value, seed, stable=True, **metrics):
    m = dict(eta_hat=1.0, k_hat=1.0, ey_hat=1.0, lambda_hat=1.0, identity_residual=0.0)
    m.update(metrics)
    return SweepRow(value, seed, SimpleNamespace(stable=stable, **m))


# --- loglog_fit -----------------------------------------------------------

def test_fit_exact_power_law():
    n = np.array([64, 128, 256, 512, 1024])
    f = loglog_fit(n, n ** -0.5, -0.5, (-0.7, -0.4))
    assert f.slope == pytest.approx(-0.5, abs=1e-12)
    assert f.r_squared == pytest.approx(1.0)
    assert f.verdict == "pass" and f.points == 5


def test_fit_constant():
    f = loglog_fit([4, 8, 16], [3.0, 3.0, 3.0])
    assert f.slope == 0.0 and f.r_squared == 1.0
    assert f.intercept == pytest.approx(math.log(3.0))
    assert f.verdict is None


def test_fit_noisy_linear():
    x = np.geomspace(4, 64, 9)
    y = x * (1 + 0.01 * np.random.default_rng(0).standard_normal(9))
    assert 0.95 <= loglog_fit(x, y).slope <= 1.05


def test_fit_rejects_bad_input():
    for xs, ys in (([1, 2], [1, 2]), ([1, 2, 3], [1, 0, 2]), ([2, 2, 2], [1, 2, 3]),
                   ([1, 2, 3], [1, 2])):
        with pytest.raises(ValueError):
            loglog_fit(xs, ys)
    with pytest.raises(InsufficientDataError):
        loglog_fit([1, 2], [1, 2])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=4, max_size=8), st.floats(1e-3, 1e3),
       st.integers(0, 2**31))
def test_fit_scale_equivariant(ys, c, seed):
    xs = np.sort(np.random.default_rng(seed).uniform(1, 1000, len(ys)))
    if np.ptp(np.log(xs)) < 1e-6:
        return
    a, b = loglog_fit(xs, ys), loglog_fit(xs, np.asarray(ys) * c)
    assert b.slope == pytest.approx(a.slope, abs=1e-9)
    assert b.r_squared == pytest.approx(a.r_squared, abs=1e-9)
    assert b.intercept - a.intercept == pytest.approx(math.log(c), abs=1e-9)


# --- reports on synthetic sweeps ------------------------------------------

def test_static_synthetic_pass():
    rows = [fake(n, s, lambda_hat=n ** -0.5) for n in (64, 128, 256, 512, 1024) for s in range(3)]
    rep = scenario_report(rows, STATIC)
    assert rep.fit.slope == pytest.approx(-0.5) and rep.verdict == "pass"


def test_mobile_synthetic_pass():
    rows = [fake(n, 0, lambda_hat=0.2) for n in (64, 256, 1024)]
    rep = scenario_report(rows, MOBILE)
    assert rep.fit.slope == 0.0 and rep.verdict == "pass"


def test_hybrid_synthetic_pass():
    rows = [fake(M, 0, eta_hat=2.0 * M) for M in (4, 8, 16, 32, 64)]
    assert scenario_report(rows, HYBRID).fit.slope == pytest.approx(1.0)
    assert scenario_report(rows, HYBRID).verdict == "pass"


def test_synthetic_fail_outside_bracket():
    rows = [fake(n, 0, lambda_hat=n ** -1.0) for n in (64, 256, 1024)]
    assert scenario_report(rows, STATIC).verdict == "fail"


def test_unstable_points_excluded():
    rows = [fake(n, 0, lambda_hat=n ** -0.5) for n in (64, 128, 256)]
    rows += [fake(512, 0, stable=False, lambda_hat=1.0), SweepRow(1024, 0, None, "boom")]
    rep = scenario_report(rows, STATIC)
    assert rep.fit.points == 3
    assert [(v, why) for v, _, why in rep.excluded] == [(512, "unstable"), (1024, "boom")]
    assert "excluded value=512" in rep.table()
    with pytest.raises(InsufficientDataError):
        scenario_report(rows[:2] + rows[3:], STATIC)


def test_fit_range_restriction():
    rows = [fake(M, 0, eta_hat=float(M if M >= 16 else 16)) for M in (4, 8, 16, 32, 64)]
    assert scenario_report(rows, HYBRID, fit_min=16).fit.slope == pytest.approx(1.0)
    assert scenario_report(rows, HYBRID).verdict == "fail"


def test_aggregate_mean_median_stderr():
    rows = [fake(10, s, eta_hat=v) for s, v in enumerate([1.0, 2.0, 9.0])]
    v, c, e, _ = aggregate(rows, "eta_hat")
    assert c[0] == 4.0 and e[0] == pytest.approx(np.std([1, 2, 9], ddof=1) / math.sqrt(3))
    assert aggregate(rows, "eta_hat", "median")[1][0] == 2.0


def test_scaling_dat_columns():
    rows = [fake(n, 0, lambda_hat=1 / n) for n in (10, 100, 1000)]
    lines = scenario_report(rows, STATIC).scaling_dat().splitlines()
    assert lines[0].startswith("#")
    assert [tuple(map(float, l.split())) for l in lines[1:]] == [(1.0, -1.0), (2.0, -2.0), (3.0, -3.0)]


# --- sweep specs and runs --------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(STATIC, (64, 64, 128))
    with pytest.raises(ValueError, match="fixed n"):
        SweepSpec(MULTICAST, (2, 4, 8))
    with pytest.raises(ValueError, match="unknown sweep keys"):
        SweepSpec.from_dict({"scenario": STATIC, "values": [16, 25, 36], "colour": 1})
    with pytest.raises(ValueError):
        SweepSpec(STATIC, (16, 25, 36), param="M")
    with pytest.raises(ValueError):
        SweepSpec(STATIC, (16, 25, 36), fixed={"n": 4})
    assert SweepSpec(STATIC, (16, 25, 36), fixed={"placement": "grid"}).report_key == "static-grid"
    spec = SweepSpec(HYBRID, (4, 8, 16), fixed={"n": 100})
    assert SweepSpec.from_dict(spec.to_dict()) == spec


SMALL = SweepSpec(STATIC, (36, 49, 64), seeds=2, fixed={"T": 400, "warmup": 50})


def test_sweep_cardinality_and_order():
    rows = sweep(SMALL)
    assert len(rows) == 6
    assert [(r.value, r.seed) for r in rows] == [(v, s) for v in (36, 49, 64) for s in (0, 1)]
    assert all(r.ok for r in rows)


def test_sweep_deterministic_and_order_free():
    a = sweep(SMALL)
    b = sweep(SweepSpec(STATIC, (64, 36, 49), seeds=2, fixed={"T": 400, "warmup": 50}))
    c = sweep(SMALL, workers=2)
    key = lambda rows: [r.metrics.to_json() for r in rows]
    assert key(a) == key(b) == key(c)


def test_failed_point_is_kept():
    spec = SweepSpec(STATIC, (16, 25, 36), seeds=1, fixed={"T": 200, "warmup": 0, "r": 0.05})
    rows = sweep(spec)
    assert len(rows) == 3 and any(not r.ok for r in rows)
    assert all("unreachable" in r.error or "disconnected" in r.error for r in rows if not r.ok)


def test_csv_reproduces_verdict(tmp_path):
    rows = sweep(SMALL)
    rep = write_sweep(tmp_path, SMALL, rows)
    key, param, back = rows_from_csv((tmp_path / "sweep.csv").read_text())
    assert (key, param) == (STATIC, "n")
    again = scenario_report(back, key)
    assert again.fit == rep.fit
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["slope"] == rep.fit.slope and fit["verdict"] == rep.verdict
    assert fit["spec"] == SMALL.to_dict()
    assert rows_to_csv(rows, STATIC, "n").splitlines()[0] == (
        "scenario,param,value,seed,eta_hat,k_hat,ey_hat,lambda_hat,stable,identity_residual")


def test_csv_failed_rows_round_trip():
    rows = [fake(16, 0), SweepRow(25, 0, None, "ValueError: x"), fake(36, 0)]
    _, _, back = rows_from_csv(rows_to_csv(rows, STATIC, "n"))
    assert [r.ok for r in back] == [True, False, True]
    with pytest.raises(ValueError):
        rows_from_csv("a,b\n1,2\n")


def test_report_for_uses_spec_range():
    spec = SweepSpec(HYBRID, (4, 8, 16, 32), fixed={"n": 100}, fit_min=8)
    rows = [fake(M, 0, eta_hat=float(M)) for M in (4, 8, 16, 32)]
    assert report_for(spec, rows).fit.points == 3
