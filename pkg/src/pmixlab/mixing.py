"""Mixing rates: negative Sobolev decay under transport, rate fitting and the
strong / weak mixing inequalities checked on sampled fields."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .flows import VelocityField
from .solver import pullback
from .spectral import Grid, ScalarField, random_field, sobolev_norm

__all__ = ["RateFunction", "RateFit", "MixingSeries", "MixingReport", "mixing_series",
           "high_mode_fraction", "fit_rate", "verify_strong", "verify_weak"]

LAWS = ("power", "exponential", "tabulated")


@dataclass(frozen=True)
class RateFunction:
    """Strictly decreasing rate ``h`` vanishing at infinity.

    ``power``: ``c / t^q``; ``exponential``: ``c1 exp(-c2 t)``; ``tabulated``:
    samples ``(times, values)``, interpolated linearly in ``(t, log h)`` and
    extended by the exponential through the last two samples.
    """

    law: str
    params: tuple

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValueError(f"unknown rate law {self.law!r}")
        if self.law == "tabulated":
            t, v = (np.asarray(a, dtype=float) for a in self.params)
            if t.ndim != 1 or t.shape != v.shape or t.size < 2:
                raise ValueError("tabulated rate needs two equal-length 1d arrays, size >= 2")
            if np.any(v <= 0) or np.any(np.diff(t) <= 0) or np.any(np.diff(v) >= 0):
                raise ValueError("tabulated rate must be positive and strictly decreasing in t")
            object.__setattr__(self, "params", (tuple(t.tolist()), tuple(v.tolist())))
        else:
            if len(self.params) != 2 or not all(float(x) > 0 for x in self.params):
                raise ValueError(f"{self.law} rate needs two positive parameters")
            object.__setattr__(self, "params", tuple(float(x) for x in self.params))

    @classmethod
    def power(cls, c, q):
        return cls("power", (c, q))

    @classmethod
    def exponential(cls, c1, c2):
        return cls("exponential", (c1, c2))

    @classmethod
    def tabulated(cls, times, values):
        return cls("tabulated", (times, values))

    def _table(self):
        t, v = self.params
        return np.asarray(t), np.log(np.asarray(v))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.law == "power":
            c, q = self.params
            with np.errstate(divide="ignore"):
                out = c / t**q
        elif self.law == "exponential":
            c1, c2 = self.params
            out = c1 * np.exp(-c2 * t)
        else:
            ts, lv = self._table()
            slope = (lv[-1] - lv[-2]) / (ts[-1] - ts[-2])
            out = np.exp(np.where(t <= ts[-1], np.interp(t, ts, lv), lv[-1] + slope * (t - ts[-1])))
        return out if out.ndim else float(out)

    def sup(self) -> float:
        """``h`` at the left end of its domain (``inf`` for the power law)."""
        if self.law == "power":
            return math.inf
        if self.law == "exponential":
            return self.params[0]
        return self.params[1][0]

    def inverse_log(self, log_y):
        """``h^{-1}(exp(log_y))``; stays finite where ``y`` itself underflows."""
        log_y = np.asarray(log_y, dtype=float)
        if self.law == "power":
            c, q = self.params
            out = np.exp((math.log(c) - log_y) / q)
        else:
            if np.any(log_y > math.log(self.sup()) * (1 + 1e-15) + 1e-15):
                raise ValueError(f"argument above the range of h (max {self.sup():.6g})")
            if self.law == "exponential":
                c1, c2 = self.params
                out = np.maximum((math.log(c1) - log_y) / c2, 0.0)
            else:
                ts, lv = self._table()
                slope = (lv[-1] - lv[-2]) / (ts[-1] - ts[-2])
                inside = np.interp(-log_y, -lv, ts)
                out = np.where(log_y >= lv[-1], inside, ts[-1] + (log_y - lv[-1]) / slope)
        return out if out.ndim else float(out)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise ValueError("h^{-1} needs y > 0")
        return self.inverse_log(np.log(y))

    def to_dict(self) -> dict:
        if self.law == "tabulated":
            return {"law": self.law, "times": list(self.params[0]), "values": list(self.params[1])}
        return {"law": self.law, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d):
        if d["law"] == "tabulated":
            return cls.tabulated(d["times"], d["values"])
        return cls(d["law"], tuple(d["params"]))


@dataclass(frozen=True)
class RateFit:
    rate: RateFunction
    r2: float


def fit_rate(times, values, law: str) -> RateFit:
    """Least squares in log space: ``log h`` against ``log t`` (power) or ``t``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and values must be 1d arrays of equal length")
    if t.size < 8:
        raise ValueError(f"need at least 8 samples, got {t.size}")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError("rate fitting needs strictly positive samples")
    if law == "power":
        if np.any(t <= 0):
            raise ValueError("power-law fit needs t > 0")
        res = stats.linregress(np.log(t), np.log(v))
        rate = RateFunction.power(math.exp(res.intercept), -res.slope)
    elif law == "exponential":
        res = stats.linregress(t, np.log(v))
        rate = RateFunction.exponential(math.exp(res.intercept), -res.slope)
    else:
        raise ValueError(f"can only fit 'power' or 'exponential', got {law!r}")
    return RateFit(rate, float(res.rvalue**2))


def high_mode_fraction(f: ScalarField) -> float:
    """Share of ``||f||_2^2`` carried by modes with ``|k|_inf > n/4``."""
    power = np.abs(f.spectrum) ** 2
    total = power.sum()
    if total == 0:
        return 0.0
    ks = f.grid.wavenumbers()
    high = np.maximum.reduce([np.abs(k) for k in ks]) > f.grid.n // 4
    return float(power[high].sum() / total)


@dataclass
class MixingSeries:
    times: np.ndarray
    norms: np.ndarray
    unreliable: np.ndarray  # resolution guard, per entry

    def to_dict(self):
        return {"times": self.times.tolist(), "norms": self.norms.tolist(),
                "unreliable": self.unreliable.tolist()}


def mixing_series(flow: VelocityField, f: ScalarField, times, beta: float, *,
                  s: float = 0.0, order: int = 5, resolution_limit: float = 0.1) -> MixingSeries:
    """``||f o phi_{s,s+t}||_{H^-beta}`` at each offset ``t``.

    Entries whose advected field has more than ``resolution_limit`` of its
    energy above half the Nyquist wavenumber are flagged unreliable.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    times = np.asarray(times, dtype=float)
    norms = np.empty(times.size)
    bad = np.zeros(times.size, dtype=bool)
    for i, t in enumerate(times):
        g = pullback(flow, [f], s, s + t, order=order)[0]
        norms[i] = sobolev_norm(g, -beta)
        bad[i] = high_mode_fraction(g) > resolution_limit
    return MixingSeries(times, norms, bad)


@dataclass
class MixingReport:
    """Outcome of a mixing-inequality check on sampled pairs."""

    kind: str  # "strong" | "weak"
    times: list
    worst_ratio: float
    worst_by_time: list
    passed: bool
    inconclusive: bool = False
    fit: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "times": list(self.times), "worst_ratio": self.worst_ratio,
                "worst_by_time": list(self.worst_by_time), "passed": self.passed,
                "inconclusive": self.inconclusive, "fit": self.fit, "meta": dict(self.meta)}


def _pair_products(flow, grid, alpha, beta, sample_count, times, s, seed, kmax, order):
    """``|<f_i o phi_{s,s+t}, g_i>|`` with normalisers, one row per pair."""
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63 - 1, size=(sample_count, 2))
    fs = [random_field(grid, int(a), kmax) for a, _ in seeds]
    gs = [random_field(grid, int(b), kmax) for _, b in seeds]
    scale = np.array([sobolev_norm(f, alpha) * sobolev_norm(g, beta) for f, g in zip(fs, gs)])
    prods = np.empty((sample_count, len(times)))
    bad = np.zeros(len(times), dtype=bool)
    for j, t in enumerate(times):
        moved = pullback(flow, fs, s, s + t, order=order)
        prods[:, j] = [abs(m.inner(g)) for m, g in zip(moved, gs)]
        bad[j] = max(high_mode_fraction(m) for m in moved) > 0.1
    return prods, scale, bad


def _check_inputs(alpha, beta, sample_count, times):
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not beta > 0:
        raise ValueError("beta must be positive")
    if sample_count < 1:
        raise ValueError("sample_count must be positive")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be increasing offsets starting at 0")
    return times


def _default_times(flow):
    return np.linspace(0.0, 10 * flow.period, 21)


def _ratio(num, h_vals, scale):
    """``num / (h scale)``; an underflowed ``h`` gives ``inf`` and ``0/0`` gives 0."""
    den = h_vals[None, :] * scale[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    return np.where(num == 0, 0.0, out)


def _report(kind, times, ratios, bad, meta):
    worst_t = ratios.max(axis=0)
    worst = float(worst_t.max())
    return MixingReport(kind, times.tolist(), worst, worst_t.tolist(), bool(worst <= 1.0),
                        inconclusive=bool(bad.any()), meta=meta)


def verify_strong(flow: VelocityField, h: RateFunction, alpha: float, beta: float,
                  sample_count: int, *, grid: Grid | None = None, times=None, s: float = 0.0,
                  seed: int = 0, kmax: int | None = None, order: int = 5) -> MixingReport:
    """Worst ``|<f o phi_{s,s+t}, g>| / (h(t) ||f||_{H^alpha} ||g||_{H^beta})`` over
    random band-limited pairs and sampled offsets ``t > 0``; passes when <= 1."""
    grid = grid or Grid(2, 64)
    times = _check_inputs(alpha, beta, sample_count, _default_times(flow) if times is None else times)
    prods, scale, bad = _pair_products(flow, grid, alpha, beta, sample_count, times, s, seed,
                                       kmax, order)
    ratios = np.zeros_like(prods)
    ratios[:, 1:] = _ratio(prods[:, 1:], h(times[1:]), scale)
    return _report("strong", times, ratios, bad,
                   {"alpha": alpha, "beta": beta, "samples": sample_count, "seed": seed,
                    "rate": h.to_dict(), "flow": flow.to_dict(), "n": grid.n})


def verify_weak(flow: VelocityField, h: RateFunction, alpha: float, beta: float,
                sample_count: int, *, grid: Grid | None = None, times=None, s: float = 0.0,
                seed: int = 0, kmax: int | None = None, order: int = 5) -> MixingReport:
    """As :func:`verify_strong` with the time average
    ``((1/t) int_0^t |<f o phi_{s,s+r}, g>|^2 dr)^(1/2)`` (trapezoid rule on
    the sampled offsets) in place of the pointwise product."""
    grid = grid or Grid(2, 64)
    times = _check_inputs(alpha, beta, sample_count, _default_times(flow) if times is None else times)
    prods, scale, bad = _pair_products(flow, grid, alpha, beta, sample_count, times, s, seed,
                                       kmax, order)
    sq = prods**2
    cum = np.concatenate([np.zeros((sample_count, 1)),
                          np.cumsum(0.5 * (sq[:, 1:] + sq[:, :-1]) * np.diff(times), axis=1)],
                         axis=1)
    ratios = np.zeros_like(prods)
    avg = np.sqrt(cum[:, 1:] / times[1:])
    ratios[:, 1:] = _ratio(avg, h(times[1:]), scale)
    return _report("weak", times, ratios, bad,
                   {"alpha": alpha, "beta": beta, "samples": sample_count, "seed": seed,
                    "rate": h.to_dict(), "flow": flow.to_dict(), "n": grid.n})
