"""Experiments: dissipation-time measurement, viscosity sweeps, the transport
comparison check, bound comparisons and the JSON-lines run store."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .bounds import (BoundInputs, InfeasibleRegime, corollary_delta, decay_threshold,
                     enhanced_rate_factor, gradient_growth_bound, transport_distance_bound,
                     trivial_kappa_bound)
from .flows import VelocityField, grad_sup_norm
from .mixing import RateFunction
from .solver import Recorder, RunRecord, SolverConfig, simulate, transport_solve
from .spectral import Grid, ScalarField, grad_lp_norm, random_field, sine_field

__all__ = [
    "ExperimentConfig", "KappaMeasurement", "SweepResult", "TransportComparisonReport", "Comparison",
    "SCHEMA_VERSION", "SchemaVersionError", "PartialReadError", "initial_field",
    "measure_kappa", "crossing_time", "nu_sweep", "verify_lemma41", "compare_bounds",
    "persist", "load", "write_csv", "record_path", "store_records",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
INIT_KINDS = ("sine", "random", "zero")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to replay a set of runs."""

    name: str = "experiment"
    d: int = 2
    n: int = 256
    p: float = 3.0
    flow: str = "zero"
    amplitude: float = 1.0
    period: float = 1.0
    nu_list: tuple = (1e-2, 3e-3, 1e-3)
    s_samples: tuple = (0.0,)
    t_max: float = 10.0
    out_dir: str = "runs"
    beta: float = 1.0
    alpha: float = 1.0
    init: str = "sine"
    seed: int = 0
    kmax: int | None = None
    safety: float = 0.5
    dt_max: float = 1e-2
    dt: float | None = None
    eps_g: float = 0.0
    interp_order: int = 5
    cadence: float | None = None  # default: trivial bound / 200, at most 0.02
    rate_law: str = "exponential"
    rate_params: tuple = (1.0, 1.0)

    def __post_init__(self):
        nus = tuple(float(v) for v in self.nu_list)
        ss = tuple(float(v) for v in self.s_samples)
        object.__setattr__(self, "nu_list", nus)
        object.__setattr__(self, "s_samples", ss)
        object.__setattr__(self, "rate_params", tuple(float(v) for v in self.rate_params))
        if not nus or any(v <= 0 for v in nus):
            raise ValueError("nu_list must hold positive values")
        if any(a <= b for a, b in zip(nus, nus[1:])):
            raise ValueError("nu_list must be sorted strictly descending")
        if not ss or any(not 0 <= s < self.period for s in ss):
            raise ValueError(f"s_samples must lie in [0, period = {self.period})")
        if len(set(ss)) != len(ss):
            raise ValueError("s_samples must be distinct")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.init not in INIT_KINDS:
            raise ValueError(f"init must be one of {INIT_KINDS}")
        if self.cadence is not None and not self.cadence > 0:
            raise ValueError("cadence must be positive")
        self.velocity()  # validates flow kind and dimension
        Grid(self.d, self.n)

    def grid(self) -> Grid:
        return Grid(self.d, self.n)

    def velocity(self) -> VelocityField:
        return VelocityField(self.flow, self.amplitude, self.period, self.d)

    def rate(self) -> RateFunction:
        return RateFunction(self.rate_law, self.rate_params)

    def solver(self, nu) -> SolverConfig:
        return SolverConfig(self.grid(), self.velocity(), nu=nu, p=self.p, safety=self.safety,
                            dt=self.dt, dt_max=self.dt_max, eps_g=self.eps_g,
                            interp_order=self.interp_order)

    def cadence_for(self, nu) -> float:
        auto = min(0.02, trivial_kappa_bound(nu, self.p) / 200)
        return auto if self.cadence is None else min(self.cadence, auto)

    def bound_inputs(self, nu, theta0_l2=None) -> BoundInputs:
        if theta0_l2 is None:
            theta0_l2 = initial_field(self).l2()
        return BoundInputs(p=self.p, nu=nu, alpha=self.alpha, beta=self.beta, d=self.d,
                           grad_u_sup=grad_sup_norm(self.velocity(), require_positive=True),
                           theta0_l2=theta0_l2, h=self.rate())

    def to_dict(self) -> dict:
        out = asdict(self)
        for k in ("nu_list", "s_samples", "rate_params"):
            out[k] = list(out[k])
        return out

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)


def initial_field(cfg: ExperimentConfig) -> ScalarField:
    grid = cfg.grid()
    if cfg.init == "sine":
        return sine_field(grid)
    if cfg.init == "random":
        return random_field(grid, cfg.seed, cfg.kmax)
    return ScalarField.zeros(grid)


# --- dissipation time ---------------------------------------------------------------


def crossing_time(times, l2, threshold):
    """First time ``||theta||_2`` reaches ``threshold``, interpolating
    ``||theta||_2^2`` linearly between samples; ``None`` if never."""
    times = np.asarray(times, dtype=float)
    sq = np.asarray(l2, dtype=float) ** 2
    thr = threshold**2
    hit = np.nonzero(sq <= thr)[0]
    if hit.size == 0:
        return None
    k = int(hit[0])
    if k == 0:
        return float(times[0])
    a, b = sq[k - 1], sq[k]
    return float(times[k - 1] + (a - thr) / (a - b) * (times[k] - times[k - 1]))


@dataclass
class KappaMeasurement:
    nu: float
    kappa: float | None  # max over s of the crossing delay, or the horizon if unreached
    lower_bound: bool  # some s never crossed: kappa is only a lower bound
    per_s: list  # dicts: s, norm0, threshold, crossing (delay or None)
    flags: list = field(default_factory=list)
    records: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"nu": self.nu, "kappa": self.kappa, "lower_bound": self.lower_bound,
                "per_s": list(self.per_s), "flags": list(self.flags)}


def _measure_one(cfg: ExperimentConfig, nu: float) -> KappaMeasurement:
    scfg = cfg.solver(nu)
    every = cfg.cadence_for(nu)
    theta = initial_field(cfg)
    if theta.l2() == 0.0:
        per_s = [{"s": s, "norm0": 0.0, "threshold": 0.0, "crossing": None}
                 for s in cfg.s_samples]
        return KappaMeasurement(nu, None, False, per_s, ["degenerate-initial-data"])
    per_s, records, flags = [], [], []
    t_prev = 0.0
    for s in sorted(cfg.s_samples):
        if s > t_prev:
            # theta_{s,0}: continue the s = 0 trajectory up to time s
            pre = simulate(scfg, theta, t_prev, s, Recorder(every, cfg.beta, keep_fields=True))
            theta, t_prev = pre.fields[-1], s
        norm0 = theta.l2()
        thr = decay_threshold(norm0, cfg.p)
        meta = {"experiment": cfg.to_dict(), "nu": nu, "s": s, "cadence": every}
        rec = simulate(scfg, theta, s, s + cfg.t_max,
                       Recorder(every, cfg.beta, stop_below=thr), meta=meta)
        t_cross = crossing_time(rec.times, rec.l2, thr)
        rec.crossing_time = t_cross
        if t_cross is None:
            rec.flags.append("threshold-not-reached")
        delay = None if t_cross is None else t_cross - s
        per_s.append({"s": s, "norm0": norm0, "threshold": thr, "crossing": delay})
        records.append(rec)
    delays = [e["crossing"] for e in per_s]
    unreached = any(v is None for v in delays)
    if unreached:
        flags.append("threshold-not-reached")
    kappa = cfg.t_max if unreached else max(delays)
    return KappaMeasurement(nu, kappa, unreached, per_s, flags, records)


def measure_kappa(cfg: ExperimentConfig, *, workers: int = 1) -> list:
    """Measured dissipation time for every ``nu`` in ``cfg.nu_list``.

    For each ``s`` sample the run starts from the state of the ``s = 0`` run at
    time ``s``, and the crossing delay is measured against that state's
    threshold; ``kappa`` is the largest delay.  Runs for different ``nu`` are
    independent and execute in ``workers`` processes.
    """
    if workers > 1 and len(cfg.nu_list) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_measure_one, [cfg] * len(cfg.nu_list), cfg.nu_list))
    return [_measure_one(cfg, nu) for nu in cfg.nu_list]


# --- sweeps ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    rows: list  # dicts: nu, kappa, reached, trivial, rate_factor
    slope: float | None
    intercept: float | None
    ci95: tuple | None
    r2: float | None
    warnings: list = field(default_factory=list)
    measurements: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"rows": list(self.rows), "slope": self.slope, "intercept": self.intercept,
                "ci95": None if self.ci95 is None else list(self.ci95), "r2": self.r2,
                "warnings": list(self.warnings)}


def _rate_factor(cfg, nu, norm0):
    try:
        return enhanced_rate_factor(cfg.bound_inputs(nu, norm0), "strong").effective
    except (InfeasibleRegime, ValueError):
        return None


def fit_loglog(x, y):
    """Slope, intercept, 95% interval of the slope and ``R^2`` of ``log y`` vs ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    res = stats.linregress(lx, ly)
    dof = lx.size - 2
    if dof > 0:
        half = stats.t.ppf(0.975, dof) * res.stderr
    else:
        half = math.inf
    return float(res.slope), float(res.intercept), (res.slope - half, res.slope + half), \
        float(res.rvalue**2)


def nu_sweep(cfg: ExperimentConfig, *, workers: int = 1, measurements=None) -> SweepResult:
    """Table of measured dissipation times against ``nu`` and a log-log fit.

    Unreached thresholds are left out of the fit; fewer than two usable points
    leave the fit empty (the table is still produced).
    """
    ms = measurements if measurements is not None else measure_kappa(cfg, workers=workers)
    norm0 = initial_field(cfg).l2()
    rows, notes = [], []
    for m in ms:
        rows.append({"nu": m.nu, "kappa": m.kappa, "reached": not m.lower_bound,
                     "trivial": trivial_kappa_bound(m.nu, cfg.p),
                     "rate_factor": _rate_factor(cfg, m.nu, norm0) if norm0 > 0 else None})
    usable = [(r["nu"], r["kappa"]) for r in rows if r["reached"] and r["kappa"]]
    if len(usable) < len(rows):
        msg = f"{len(rows) - len(usable)} sweep point(s) excluded from the fit (threshold not reached)"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    if len(usable) < 2:
        msg = "fit rejected: fewer than two usable nu values"
        notes.append(msg)
        return SweepResult(rows, None, None, None, None, notes, ms)
    slope, icpt, ci, r2 = fit_loglog(*zip(*usable))
    return SweepResult(rows, slope, icpt, ci, r2, notes, ms)


# --- transport comparison ------------------------------------------------------------


@dataclass
class TransportComparisonReport:
    nu: float
    s: float
    times: list
    distance_sq: list
    bound: list
    control_bound: list  # the same bound with the constant D_p replaced by ``control_d_p``
    grad_growth: list  # measured ||grad phi||_p^p
    grad_growth_bound: list
    passed: bool
    control_failed: bool
    growth_passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def verify_lemma41(cfg: ExperimentConfig, *, nu: float | None = None, s: float | None = None,
                   horizon: float = 2.0, every: float = 0.05,
                   control_d_p: float = 1.0) -> TransportComparisonReport:
    """Compare the coupled solution with pure transport from the same data.

    Checks ``||theta - phi||_2^2 <= transport_distance_bound`` at every sample
    in ``[s, s + horizon]``; the same comparison with the constant replaced by
    ``control_d_p`` is reported as a negative control.
    """
    nu = cfg.nu_list[-1] if nu is None else nu
    s = cfg.s_samples[0] if s is None else s
    scfg = cfg.solver(nu)
    theta0 = initial_field(cfg)
    if s > 0:
        theta0 = simulate(scfg, theta0, 0.0, s, Recorder(every, keep_fields=True)).fields[-1]
    rec = simulate(scfg, theta0, s, s + horizon, Recorder(every, cfg.beta, keep_fields=True))
    inputs = cfg.bound_inputs(nu, theta0.l2())
    g0 = grad_lp_norm(theta0, cfg.p)
    flow = cfg.velocity()
    out = {k: [] for k in ("dist", "bound", "ctrl", "gg", "ggb")}
    for t, th in zip(rec.times, rec.fields):
        phi = transport_solve(flow, theta0, s, t, order=cfg.interp_order)
        out["dist"].append((th - phi).l2() ** 2)
        out["bound"].append(transport_distance_bound(inputs, g0, t - s))
        out["ctrl"].append(transport_distance_bound(inputs, g0, t - s, d_p=control_d_p))
        out["gg"].append(grad_lp_norm(phi, cfg.p) ** cfg.p)
        out["ggb"].append(gradient_growth_bound(cfg.d, cfg.p, inputs.grad_u_sup, g0, t - s))
    d, b, c = (np.array(out[k]) for k in ("dist", "bound", "ctrl"))
    return TransportComparisonReport(nu, s, list(rec.times), out["dist"], out["bound"], out["ctrl"],
                         out["gg"], out["ggb"], bool(np.all(d <= b)), bool(np.any(d > c)),
                         bool(np.all(np.array(out["gg"]) <= np.array(out["ggb"]))))


# --- bound comparison -------------------------------------------------------------------


@dataclass
class Comparison:
    rows: list  # dicts: nu, measured, trivial, strong, weak, within_trivial
    measured_slope: float | None
    delta_strong: float | None
    delta_weak: float | None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def compare_bounds(sweep: SweepResult, reports: dict) -> Comparison:
    """Per-``nu`` measured dissipation time against the trivial bound and the
    strong / weak rate factors.

    ``reports`` maps ``"strong"`` and ``"weak"`` to lists of bound reports (or
    ``None`` entries where the regime is infeasible) on the sweep's ``nu`` grid.
    """
    nus = [r["nu"] for r in sweep.rows]
    for case, reps in reports.items():
        got = [None if r is None else r.nu for r in reps]
        if len(reps) != len(nus) or any(g is not None and g != n for g, n in zip(got, nus)):
            raise ValueError(f"{case} bound reports are not on the sweep's nu grid")
    rows = []
    for i, r in enumerate(sweep.rows):
        entry = {"nu": r["nu"], "measured": r["kappa"], "reached": r["reached"],
                 "trivial": r["trivial"]}
        for case in ("strong", "weak"):
            rep = reports.get(case, [None] * len(nus))[i]
            entry[case] = None if rep is None else rep.effective
        entry["within_trivial"] = (r["kappa"] is not None
                                   and r["kappa"] <= 1.05 * r["trivial"])
        rows.append(entry)
    deltas = {}
    for case in ("strong", "weak"):
        reps = [x for x in reports.get(case, []) if x is not None]
        deltas[case] = reps[0].delta if reps else None
    return Comparison(rows, sweep.slope, deltas["strong"], deltas["weak"])


# --- run store ---------------------------------------------------------------------


class SchemaVersionError(ValueError):
    pass


class PartialReadError(ValueError):
    def __init__(self, path, line, reason):
        super().__init__(f"{path}: line {line}: {reason}")
        self.path = str(path)
        self.line = line


def record_path(root, experiment: str, nu: float, s: float) -> Path:
    """``<root>/<experiment>/<nu>/<s>.jsonl`` with round-trippable number names."""
    return Path(root) / experiment / repr(float(nu)) / f"{float(s)!r}.jsonl"


def persist(record: RunRecord, path) -> Path:
    """Write a run as JSON lines: header, one line per sample, footer."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = RunRecord.SERIES
    n = len(record.times)
    lines = [json.dumps({"schema_version": SCHEMA_VERSION, "type": "header",
                         "config": record.config, "columns": list(cols)}, sort_keys=True)]
    for i in range(n):
        lines.append(json.dumps([getattr(record, c)[i] for c in cols]))
    lines.append(json.dumps({"type": "footer", "samples": n,
                             "crossing_time": record.crossing_time,
                             "flags": list(record.flags)}, sort_keys=True))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)
    return path


def load(path) -> RunRecord:
    """Read a run written by :func:`persist`, validating its structure."""
    path = Path(path)
    text = path.read_text()
    raw = text.split("\n")
    if raw and raw[-1] == "":
        raw.pop()
    elif raw:
        raise PartialReadError(path, len(raw), "file does not end with a newline (truncated)")
    if not raw:
        raise PartialReadError(path, 1, "empty file")
    parsed = []
    for i, line in enumerate(raw, start=1):
        try:
            parsed.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise PartialReadError(path, i, f"malformed JSON ({exc.msg})") from None
    head = parsed[0]
    if not isinstance(head, dict) or head.get("type") != "header":
        raise PartialReadError(path, 1, "missing header")
    if head.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"{path}: schema_version {head.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    cols = head["columns"]
    if list(cols) != list(RunRecord.SERIES):
        raise SchemaVersionError(f"{path}: unexpected columns {cols}")
    foot = parsed[-1]
    if len(parsed) < 2 or not isinstance(foot, dict) or foot.get("type") != "footer":
        raise PartialReadError(path, len(raw) + 1, "missing footer (truncated)")
    body = parsed[1:-1]
    if foot["samples"] != len(body):
        raise PartialReadError(path, len(raw), f"footer announces {foot['samples']} samples, "
                               f"found {len(body)}")
    rec = RunRecord(config=head["config"], crossing_time=foot["crossing_time"],
                    flags=list(foot["flags"]))
    for i, row in enumerate(body, start=2):
        if not isinstance(row, list) or len(row) != len(cols):
            raise PartialReadError(path, i, "sample row has the wrong shape")
        for c, v in zip(cols, row):
            getattr(rec, c).append(v)
    if any(b < a for a, b in zip(rec.times, rec.times[1:])):
        raise ValueError(f"{path}: sample times are not sorted")
    return rec


def write_csv(record: RunRecord, path) -> Path:
    """CSV projection of the sampled series (header row included)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = RunRecord.SERIES
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*(getattr(record, c) for c in cols)):
            w.writerow([repr(float(v)) for v in row])
    return path


def store_records(root, cfg: ExperimentConfig, measurements) -> list:
    """Persist every run of a measurement (single writer)."""
    paths = []
    for m in measurements:
        for rec in m.records:
            s = rec.config["s"]
            paths.append(persist(rec, record_path(root, cfg.name, m.nu, s)))
    return paths
