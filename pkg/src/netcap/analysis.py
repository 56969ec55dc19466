"""Parameter sweeps, log-log slope fits and scaling reports."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import HYBRID, MOBILE, MULTICAST, STATIC, SCENARIOS, MetricsRecord, SimConfig, run

SWEEP_PARAM = {STATIC: "n", MOBILE: "n", MULTICAST: "l", HYBRID: "M"}
STATIC_GRID = "static-grid"

# report key -> (metric, theoretical exponent, slope bracket)
BRACKETS = {
    STATIC: ("lambda_hat", -0.5, (-0.70, -0.40)),
    STATIC_GRID: ("lambda_hat", -0.5, (-0.60, -0.42)),
    MOBILE: ("lambda_hat", 0.0, (-0.15, 0.15)),
    MULTICAST: ("eta_hat", -0.5, (-0.70, -0.35)),
    HYBRID: ("eta_hat", 1.0, (0.7, 1.3)),
}

CSV_COLUMNS = ("scenario", "param", "value", "seed", "eta_hat", "k_hat", "ey_hat",
               "lambda_hat", "stable", "identity_residual")


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    exponent: float = float("nan")
    bracket: tuple | None = None
    points: int = 0

    @property
    def verdict(self):
        if self.bracket is None:
            return None
        lo, hi = self.bracket
        return "pass" if lo <= self.slope <= hi else "fail"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bracket"] = list(self.bracket) if self.bracket is not None else None
        d["verdict"] = self.verdict
        return d


def loglog_fit(xs, ys, exponent: float = float("nan"), bracket=None) -> ScalingFit:
    """Ordinary least squares of ``log y`` on ``log x``."""
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if len(x) != len(y):
        raise ValueError("xs and ys must have equal length")
    if len(x) < 3:
        raise InsufficientDataError("a slope fit needs at least 3 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("values must be finite")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs strictly positive values")
    lx, ly = np.log(x), np.log(y)
    dx, dy = lx - lx.mean(), ly - ly.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("xs must not all be equal")
    slope = float(dx @ dy) / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    ss_tot = float(dy @ dy)
    resid = dy - slope * dx
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(resid @ resid) / ss_tot
    return ScalingFit(slope, intercept, float(min(max(r2, 0.0), 1.0)), float(exponent),
                      tuple(bracket) if bracket is not None else None, len(x))


@dataclass(frozen=True)
class SweepSpec:
    """One scenario swept over ``param``; every other SimConfig field comes from ``fixed``.

    ``fit_min``/``fit_max`` restrict the slope fit (not the runs) to a sub-range.
    """

    scenario: str
    values: tuple
    param: str | None = None
    seeds: int = 5
    seed0: int = 0
    fixed: dict = field(default_factory=dict)
    aggregate: str = "mean"
    fit_min: float | None = None
    fit_max: float | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        param = self.param or SWEEP_PARAM[self.scenario]
        if param != SWEEP_PARAM[self.scenario]:
            raise ValueError(f"{self.scenario} sweeps {SWEEP_PARAM[self.scenario]!r}, not {param!r}")
        object.__setattr__(self, "param", param)
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "fixed", dict(self.fixed))
        if len(set(self.values)) < 3:
            raise ValueError("a sweep needs at least 3 distinct values")
        if self.seeds < 1:
            raise ValueError("need at least one seed per point")
        if self.aggregate not in ("mean", "median"):
            raise ValueError("aggregate must be 'mean' or 'median'")
        bad = {"scenario", "seed", param} & set(self.fixed)
        if bad:
            raise ValueError(f"fixed parameters may not set {sorted(bad)}")
        SimConfig.from_dict({**self.fixed, "scenario": self.scenario, **self._point(self.values[0])})

    def _point(self, value) -> dict:
        d = {self.param: value}
        if self.param != "n" and "n" not in self.fixed:
            raise ValueError(f"sweeping {self.param} needs a fixed n")
        return d

    @property
    def report_key(self) -> str:
        if self.scenario == STATIC and self.fixed.get("placement") == "grid":
            return STATIC_GRID
        return self.scenario

    def configs(self):
        for v in sorted(set(self.values)):
            for s in range(self.seed0, self.seed0 + self.seeds):
                yield v, s, {**self.fixed, "scenario": self.scenario, "seed": s, **self._point(v)}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        names = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["values"] = list(self.values)
        return d


@dataclass(frozen=True)
class SweepRow:
    value: float
    seed: int
    metrics: MetricsRecord | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.metrics is not None


def _run_point(args):
    value, seed, cfg = args
    try:
        return SweepRow(value, seed, run(SimConfig.from_dict(cfg)))
    except (ValueError, RuntimeError) as exc:
        return SweepRow(value, seed, None, f"{type(exc).__name__}: {exc}")


def sweep(spec: SweepSpec, workers: int = 1) -> list:
    """One engine run per (value, seed), ordered by value then seed.

    A point whose construction or run fails is kept with its error message.
    """
    jobs = list(spec.configs())
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_run_point, jobs))
    else:
        rows = [_run_point(j) for j in jobs]
    return sorted(rows, key=lambda r: (r.value, r.seed))


def _metric(row: SweepRow, name: str) -> float:
    return float(getattr(row.metrics, name))


def aggregate(rows, metric: str, how: str = "mean"):
    """Per-value centre and standard error over stable, successful seeds.

    Returns ``(values, centre, stderr, excluded)`` where ``excluded`` lists
    ``(value, seed, reason)`` for every dropped point.
    """
    groups, excluded = {}, []
    for r in rows:
        if not r.ok:
            excluded.append((r.value, r.seed, r.error or "failed"))
        elif not r.metrics.stable:
            excluded.append((r.value, r.seed, "unstable"))
        else:
            groups.setdefault(r.value, []).append(_metric(r, metric))
    values = sorted(groups)
    centre, err = [], []
    for v in values:
        a = np.asarray(groups[v])
        centre.append(float(np.median(a) if how == "median" else a.mean()))
        err.append(float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else float("nan"))
    return np.asarray(values, dtype=float), np.asarray(centre), np.asarray(err), excluded


@dataclass
class ScenarioReport:
    key: str
    metric: str
    fit: ScalingFit
    values: np.ndarray
    centre: np.ndarray
    stderr: np.ndarray
    excluded: list

    @property
    def verdict(self):
        return self.fit.verdict

    def table(self) -> str:
        lines = [f"{self.key}: {self.metric} vs {SWEEP_PARAM.get(self.key, 'n')}",
                 f"{'value':>10} {self.metric:>14} {'stderr':>12}"]
        for v, c, e in zip(self.values, self.centre, self.stderr):
            lines.append(f"{v:>10g} {c:>14.6g} {e:>12.3g}")
        f = self.fit
        lines.append(f"slope {f.slope:.4f}  R^2 {f.r_squared:.4f}  theory {f.exponent:g}  "
                     f"bracket [{f.bracket[0]:g}, {f.bracket[1]:g}]  {f.verdict}")
        for v, s, why in self.excluded:
            lines.append(f"excluded value={v:g} seed={s}: {why}")
        return "\n".join(lines)

    def scaling_dat(self) -> str:
        head = f"# log10({SWEEP_PARAM.get(self.key, 'n')}) log10({self.metric})\n"
        return head + "".join(f"{math.log10(v):.8f} {math.log10(c):.8f}\n"
                              for v, c in zip(self.values, self.centre) if v > 0 and c > 0)


def scenario_report(rows, key: str, how: str = "mean", fit_min=None, fit_max=None) -> ScenarioReport:
    """Fit the scenario's metric against the swept parameter and judge the slope."""
    if key not in BRACKETS:
        raise ValueError(f"no scaling claim registered for {key!r}")
    metric, exponent, bracket = BRACKETS[key]
    values, centre, err, excluded = aggregate(rows, metric, how)
    keep = np.ones(len(values), dtype=bool)
    if fit_min is not None:
        keep &= values >= fit_min
    if fit_max is not None:
        keep &= values <= fit_max
    if keep.sum() < 3:
        raise InsufficientDataError(f"{key}: only {int(keep.sum())} stable points in the fit range")
    fit = loglog_fit(values[keep], centre[keep], exponent, bracket)
    return ScenarioReport(key, metric, fit, values[keep], centre[keep], err[keep], excluded)


def report_for(spec: SweepSpec, rows) -> ScenarioReport:
    return scenario_report(rows, spec.report_key, spec.aggregate, spec.fit_min, spec.fit_max)


# --- CSV round trip ------------------------------------------------------

class _CsvRow:
    """Just enough of a MetricsRecord to aggregate from ``sweep.csv``."""

    def __init__(self, d):
        for k in ("eta_hat", "k_hat", "ey_hat", "lambda_hat"):
            setattr(self, k, float(d[k]) if d[k] != "" else float("nan"))
        self.stable = d["stable"] == "True"
        self.identity_residual = float(d["identity_residual"]) if d["identity_residual"] else None


def rows_to_csv(rows, key: str, param: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        if r.ok:
            m = r.metrics
            res = m.identity_residual
            w.writerow([key, param, repr(r.value), r.seed, repr(m.eta_hat), repr(m.k_hat),
                        repr(m.ey_hat), repr(m.lambda_hat), m.stable, "" if res is None else repr(res)])
        else:
            w.writerow([key, param, repr(r.value), r.seed, "", "", "", "", "error", ""])
    return buf.getvalue()


def rows_from_csv(text: str):
    """Parse ``sweep.csv``; returns ``(key, param, rows)``."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected sweep.csv columns {reader.fieldnames}")
    key = param = None
    rows = []
    for d in reader:
        key, param = d["scenario"], d["param"]
        value = float(d["value"])
        if d["stable"] == "error":
            rows.append(SweepRow(value, int(d["seed"]), None, "failed"))
        else:
            rows.append(SweepRow(value, int(d["seed"]), _CsvRow(d)))
    if key is None:
        raise ValueError("sweep.csv holds no rows")
    return key, param, rows


def write_sweep(out_dir, spec: SweepSpec, rows) -> ScenarioReport | None:
    """Write ``sweep.csv`` and ``fit.json``; returns the report (None if too few points)."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(rows_to_csv(rows, spec.report_key, spec.param))
    fit = {"spec": spec.to_dict()}
    try:
        rep = report_for(spec, rows)
    except InsufficientDataError as exc:
        rep = None
        fit.update(error=str(exc), verdict="fail")
    else:
        fit.update(rep.fit.to_dict(), metric=rep.metric,
                   excluded=[list(e) for e in rep.excluded])
    (out / "fit.json").write_text(json.dumps(fit, indent=2))
    return rep
