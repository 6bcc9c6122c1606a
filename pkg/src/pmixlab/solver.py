"""Time stepping for transport and advection + p-Laplacian diffusion.

The coupled equation ``d_t theta + u . grad theta = nu div(|grad theta|^(p-2) grad theta)``
is advanced with Strang splitting: a semi-Lagrangian transport half step, a
diffusion step (explicit conservative finite volumes, sub-cycled to respect
the stability limit) and another transport half step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import _kernels
from .flows import FlowMap, VelocityField, trace
from .spectral import Grid, ScalarField, grad_lp_norm, sobolev_norm

__all__ = [
    "SolverConfig",
    "SolverState",
    "Recorder",
    "RunRecord",
    "SimulationError",
    "StabilityError",
    "transport_solve",
    "pullback",
    "p_laplacian_step",
    "diffusion_dt",
    "diffusion_dt_limit",
    "cfl_dt",
    "step",
    "simulate",
]

log = logging.getLogger(__name__)

INTERP_ORDERS = (3, 5)


class SimulationError(RuntimeError):
    """Numerical failure (blow-up guard, unreachable stepping)."""


class StabilityError(ValueError):
    def __init__(self, dt, limit):
        super().__init__(f"dt = {dt:.6g} exceeds the explicit stability limit {limit:.6g}")
        self.dt = dt
        self.limit = limit


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid
    flow: VelocityField = field(default_factory=VelocityField)
    nu: float = 1e-2
    p: float = 3.0
    safety: float = 0.5
    dt: float | None = None
    dt_max: float = 1e-2
    eps_g: float = 0.0
    interp_order: int = 5
    flow_step: float | None = None

    def __post_init__(self):
        if not self.nu >= 0:
            raise ValueError("nu must be nonnegative (0 disables diffusion)")
        if not self.p > 2:
            raise ValueError(f"p must exceed 2, got {self.p}")
        if not 0 < self.safety <= 1:
            raise ValueError("safety factor must lie in (0, 1]")
        if self.eps_g < 0:
            raise ValueError("eps_g must be nonnegative")
        if self.flow.d != self.grid.d and not self.flow.is_zero:
            raise ValueError("flow and grid dimensions differ")

    def flow_map(self) -> FlowMap:
        step = self.flow_step
        if step is None:
            step = _default_flow_step(self.flow)
        return FlowMap(self.flow, step)


@dataclass(frozen=True)
class SolverState:
    """Current field and time plus the accumulated ``int nu ||grad theta||_p^p``."""

    field: ScalarField
    time: float = 0.0
    dissipation: float = 0.0
    residual: float = 0.0  # signed energy residual accumulated over the last step


# --- transport ----------------------------------------------------------------


def _check_order(order, grid):
    if order not in INTERP_ORDERS:
        raise ValueError(f"interpolation order must be one of {INTERP_ORDERS}, got {order}")
    if grid.n < 2 * (order + 1):
        raise ValueError(f"grid n = {grid.n} too coarse for order-{order} interpolation")


def _interpolate(values, pts, order):
    """Periodic spline interpolation of grid samples at points in ``[0, 1)^d``."""
    n = values.shape[0]
    coords = (np.asarray(pts) * n).reshape(-1, values.ndim).T
    coeffs = ndimage.spline_filter(values, order=order, mode="grid-wrap")
    out = ndimage.map_coordinates(coeffs, coords, order=order, mode="grid-wrap", prefilter=False)
    return out.reshape(values.shape)


def _shear_axes(flow, t):
    """``(moving axis, transverse axis or None)`` when the field at ``t`` is a
    rigid shift of grid lines, else ``None``."""
    if flow.kind == "translation":
        return 0, None
    if flow.kind == "steady_shear":
        return 0, 1
    if flow.kind == "alternating_shear":
        return ((0, 1) if (t % flow.period) < flow.period / 2 else (1, 0))
    return None


def _shift_lines(values, axis, delta):
    """Evaluate the trigonometric interpolant of ``values`` at ``x + delta``
    along ``axis``; ``delta`` is a scalar or varies along the other axis."""
    n = values.shape[axis]
    spec = np.fft.rfft(values, axis=axis)
    k = np.arange(n // 2 + 1)
    delta = np.asarray(delta, dtype=float)
    if axis == 0:
        phase = np.exp(2j * np.pi * np.multiply.outer(k, delta))
        if values.ndim == 2 and phase.ndim == 1:
            phase = phase[:, None]
    else:
        phase = np.exp(2j * np.pi * np.multiply.outer(delta, k))
        if phase.ndim == 1:
            phase = phase[None, :]
    return np.fft.irfft(spec * phase, n=n, axis=axis)


def _advect_lines(values, grid, fmap, a, b):
    """Semi-Lagrangian step for flows that shift grid lines rigidly.

    The departure offset of each line is found by tracing one point per line
    with the flow map; the shift itself is exact trigonometric interpolation,
    so the step is an isometry up to the Nyquist mode.
    """
    flow = fmap.velocity
    cuts = [a] + flow.breakpoints(a, b) + [b]
    x = np.arange(grid.n) * grid.spacing
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        axis, other = _shear_axes(flow, 0.5 * (lo + hi))
        if other is None:
            start = np.zeros((1, grid.d))
        else:
            start = np.zeros((grid.n, grid.d))
            start[:, other] = x
        dep = trace(fmap, lo, hi, start)
        delta = dep[:, axis] - start[:, axis]
        values = _shift_lines(values, axis, delta[0] if other is None else delta)
    return values


def _advect(values, grid, fmap, a, b, order):
    """One transport sub-step of the time stepper."""
    if _shear_axes(fmap.velocity, a) is not None:
        return _advect_lines(values, grid, fmap, a, b)
    dep = trace(fmap, a, b, grid.points())
    return _interpolate(values, dep, order)


def _default_flow_step(flow):
    return min(1e-2, flow.period / 8)


def pullback(flow: VelocityField, fields, s: float, t: float, *, order: int = 5,
             flow_step: float | None = None) -> list:
    """``[f o phi_{s,t} for f in fields]`` sharing one trace of the grid points."""
    fields = list(fields)
    if t < s:
        raise ValueError("transport requires t >= s")
    if not fields:
        return []
    grid = fields[0].grid
    _check_order(order, grid)
    if t == s or flow.is_zero:
        return fields
    fmap = FlowMap(flow, flow_step if flow_step is not None else _default_flow_step(flow))
    dep = trace(fmap, s, t, grid.points())
    return [ScalarField.from_values(grid, _interpolate(f.values, dep, order)) for f in fields]


def transport_solve(flow: VelocityField, f0: ScalarField, s: float, t: float, *,
                    order: int = 5, flow_step: float | None = None) -> ScalarField:
    """Solve pure transport from ``f0`` at time ``s``: returns ``f0 o phi_{s,t}``.

    Grid points are traced back to time ``s`` in one pass and ``f0`` is
    interpolated there, so there is a single interpolation however long the
    interval.  Returns ``f0`` itself when ``t == s``.
    """
    return pullback(flow, [f0], s, t, order=order, flow_step=flow_step)[0]


# --- diffusion ----------------------------------------------------------------


def diffusion_dt_limit(h, d, nu, p, grad_max, safety):
    """``safety h^2 / (2 d nu (p - 1) grad_max^(p-2))``; infinite without stiffness."""
    stiff = 2 * d * nu * (p - 1) * grad_max ** (p - 2)
    return math.inf if stiff == 0 else safety * h * h / stiff


def _face_grad_max(values, cfg, ws):
    _, gmax = ws.fluxes(values, cfg.grid.spacing, float(cfg.p), cfg.eps_g**2)
    return gmax


def diffusion_dt(state: SolverState, cfg: SolverConfig, ws=None) -> float:
    ws = ws or _kernels.FluxWorkspace(cfg.grid.shape)
    gmax = _face_grad_max(state.field.values, cfg, ws)
    return diffusion_dt_limit(cfg.grid.spacing, cfg.grid.d, cfg.nu, cfg.p, gmax, cfg.safety)


def cfl_dt(state: SolverState, cfg: SolverConfig, ws=None) -> float:
    """Stable step for the coupled system, capped at ``dt_max``."""
    dt = min(diffusion_dt(state, cfg, ws), cfg.dt_max)
    speed = cfg.flow.max_speed()
    if speed > 0:
        dt = min(dt, cfg.safety * cfg.grid.spacing / speed)
    return dt


def _diffusion_substep(th, dt, cfg, ws, out, gmax=None):
    """One explicit step from ``th`` into ``out``; returns the midpoint dissipation rate.

    Pass ``gmax`` when ``ws`` already holds the fluxes of ``th``.
    """
    h = cfg.grid.spacing
    p = float(cfg.p)
    eps2 = cfg.eps_g**2
    if gmax is None:
        _, gmax = ws.fluxes(th, h, p, eps2)
    limit = diffusion_dt_limit(h, cfg.grid.d, cfg.nu, p, gmax, cfg.safety)
    if dt > limit * (1 + 1e-12):
        raise StabilityError(dt, limit)
    ws.apply(th, dt * cfg.nu / h, out)
    _kernels.midpoint(th, out, ws.mid)
    diss_mid, _ = ws.fluxes(ws.mid, h, p, eps2, mid=True)
    return diss_mid


def _energy(values):
    return 0.5 * float(np.mean(values * values))


def p_laplacian_step(state: SolverState, dt: float, cfg: SolverConfig, ws=None) -> SolverState:
    """One explicit conservative step of ``d_t theta = nu Delta_p theta``.

    Rejects ``dt`` above the diffusion stability limit.  The recorded residual
    is ``E_after - E_before + dt nu P(midpoint)`` with ``E = ||theta||^2 / 2``
    and ``P`` the discrete ``||grad theta||_p^p``.
    """
    ws = ws or _kernels.FluxWorkspace(cfg.grid.shape)
    th = np.ascontiguousarray(state.field.values)
    out = np.empty_like(th)
    rate = _diffusion_substep(th, dt, cfg, ws, out)
    diss = dt * cfg.nu * rate
    new = ScalarField.from_values(cfg.grid, out)
    resid = _energy(new.values) - _energy(th) + diss
    return SolverState(new, state.time + dt, state.dissipation + diss, resid)


def _diffuse(values, dt, cfg, ws):
    """Advance diffusion over ``dt`` with as many stable substeps as needed."""
    th = np.array(values, dtype=float)  # writable; buffers are swapped below
    out = np.empty_like(th)
    remaining = dt
    diss = 0.0
    h = cfg.grid.spacing
    while remaining > 0:
        _, gmax = ws.fluxes(th, h, float(cfg.p), cfg.eps_g**2)
        limit = diffusion_dt_limit(h, cfg.grid.d, cfg.nu, cfg.p, gmax, cfg.safety)
        if remaining <= limit:
            sub = remaining
        else:
            m = math.ceil(remaining / limit)
            sub = remaining / m
        rate = _diffusion_substep(th, sub, cfg, ws, out, gmax)
        diss += sub * cfg.nu * rate
        th, out = out, th
        remaining = 0.0 if sub == remaining else remaining - sub
    return th, diss


def step(state: SolverState, dt: float, cfg: SolverConfig, ws=None, fmap=None) -> SolverState:
    """Strang step: transport ``dt/2``, diffusion ``dt``, transport ``dt/2``."""
    ws = ws or _kernels.FluxWorkspace(cfg.grid.shape)
    grid = cfg.grid
    t0 = state.time
    vals = state.field.values
    e0 = _energy(vals)
    moving = not cfg.flow.is_zero
    if moving:
        fmap = fmap or cfg.flow_map()
        vals = _advect(vals, grid, fmap, t0, t0 + dt / 2, cfg.interp_order)
    diss = 0.0
    if cfg.nu > 0:
        vals, diss = _diffuse(vals, dt, cfg, ws)
    if moving:
        vals = _advect(vals, grid, fmap, t0 + dt / 2, t0 + dt, cfg.interp_order)
    new = ScalarField.from_values(grid, vals)
    resid = _energy(new.values) - e0 + diss
    return SolverState(new, t0 + dt, state.dissipation + diss, resid)


# --- measurement loop -----------------------------------------------------------


@dataclass
class Recorder:
    """Sampling policy for :func:`simulate`.

    ``every`` is the sampling interval; ``stop_below`` ends the run after the
    first sample with ``||theta||_2`` at or below it; ``keep_fields`` keeps the
    sampled fields in memory (not persisted).
    """

    every: float
    beta: float = 1.0
    stop_below: float | None = None
    keep_fields: bool = False
    blowup_tol: float = 1e-3


@dataclass
class RunRecord:
    """Sampled time series of one run plus its provenance."""

    config: dict
    times: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    grad_p: list = field(default_factory=list)
    mix_norm: list = field(default_factory=list)
    energy_residual: list = field(default_factory=list)
    crossing_time: float | None = None
    flags: list = field(default_factory=list)
    fields: list = field(default_factory=list, repr=False, compare=False)

    SERIES = ("times", "l2", "grad_p", "mix_norm", "energy_residual")

    def arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k)) for k in self.SERIES}


def _sample(rec, recorder, state, cfg, resid_acc):
    f = state.field
    rec.times.append(float(state.time))
    rec.l2.append(f.l2())
    rec.grad_p.append(grad_lp_norm(f, cfg.p))
    rec.mix_norm.append(sobolev_norm(f, -recorder.beta))
    rec.energy_residual.append(float(resid_acc))
    if recorder.keep_fields:
        rec.fields.append(f)


def simulate(cfg: SolverConfig, theta0: ScalarField, s: float, t_end: float,
             recorder: Recorder, meta: dict | None = None) -> RunRecord:
    """Run from ``theta0`` at time ``s`` to ``t_end`` sampling every ``recorder.every``.

    The energy residual stored with each sample is the sum of the per-step
    residuals since the previous sample.
    """
    if theta0.grid != cfg.grid:
        raise ValueError("initial field lives on a different grid")
    if abs(theta0.spectrum.flat[0]) > 1e-12:
        raise ValueError("initial field must be mean-zero")
    rec = RunRecord(config=dict(meta or {}))
    ws = _kernels.FluxWorkspace(cfg.grid.shape)
    fmap = cfg.flow_map() if not cfg.flow.is_zero else None
    state = SolverState(theta0, float(s))
    _sample(rec, recorder, state, cfg, 0.0)
    if state.field.l2() == 0.0:
        # the zero field is a fixed point
        n_more = int(math.floor((t_end - s) / recorder.every + 1e-9))
        for k in range(1, n_more + 1):
            state = replace(state, time=s + k * recorder.every)
            _sample(rec, recorder, state, cfg, 0.0)
        return rec
    k = 0
    next_sample = s + recorder.every
    resid_acc = 0.0
    while state.time < t_end - 1e-12:
        target = min(next_sample, t_end)
        if cfg.dt is not None:
            dt = cfg.dt
        else:
            speed = cfg.flow.max_speed()
            dt = cfg.dt_max
            if speed > 0:
                dt = min(dt, cfg.safety * cfg.grid.spacing / speed)
        dt = min(dt, target - state.time)
        before = state.field.l2()
        state = step(state, dt, cfg, ws, fmap)
        after = state.field.l2()
        if not np.isfinite(after) or after > before * (1 + recorder.blowup_tol):
            raise SimulationError(
                f"blow-up guard: ||theta||_2 went {before:.6g} -> {after:.6g} at t = {state.time:.6g}")
        resid_acc += state.residual
        if state.time >= target - 1e-12:
            k += 1
            state = replace(state, time=s + k * recorder.every if target == next_sample else t_end)
            _sample(rec, recorder, state, cfg, resid_acc)
            resid_acc = 0.0
            next_sample = s + (k + 1) * recorder.every
            if recorder.stop_below is not None and after <= recorder.stop_below:
                break
    return rec
