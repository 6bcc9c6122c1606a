"""Divergence-free velocity fields on the torus and their flow maps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = ["VelocityField", "FlowMap", "evaluate", "velocity_gradient", "grad_sup_norm",
           "sampled_grad_sup", "trace", "KINDS"]

KINDS = ("zero", "translation", "steady_shear", "alternating_shear", "cellular")
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class VelocityField:
    """Closed-form incompressible field.

    kinds
        ``zero``; ``translation`` (uniform ``U`` along ``x_1``);
        ``steady_shear`` ``(U sin 2 pi x_2, 0)``; ``alternating_shear``, which is
        the steady shear on the first half of every period ``T`` and
        ``(0, U sin 2 pi x_1)`` on the second half; ``cellular`` with stream
        function ``U/(2 pi) sin(2 pi x_1) sin(2 pi x_2)``.
    """

    kind: str = "zero"
    amplitude: float = 1.0
    period: float = 1.0
    d: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}; expected one of {KINDS}")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.d == 1 and self.kind not in ("zero", "translation"):
            raise ValueError(f"{self.kind} needs d = 2")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0

    @property
    def time_periodic(self) -> bool:
        return self.kind == "alternating_shear"

    def breakpoints(self, a: float, b: float) -> list:
        """Switching times strictly inside ``(a, b)``."""
        if self.kind != "alternating_shear":
            return []
        half = self.period / 2
        k = math.floor(a / half) + 1
        out = []
        while k * half < b:
            if k * half > a:
                out.append(k * half)
            k += 1
        return out

    def max_speed(self) -> float:
        return 0.0 if self.kind == "zero" else abs(self.amplitude)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "amplitude": self.amplitude, "period": self.period, "d": self.d}


def _first_half(u, t):
    return (t % u.period) < u.period / 2


def evaluate(u: VelocityField, t: float, x) -> np.ndarray:
    """Velocity at time ``t`` and points ``x`` of shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    U = u.amplitude
    if u.kind == "zero":
        return out
    if u.kind == "translation":
        out[..., 0] = U
        return out
    x1, x2 = x[..., 0], x[..., 1]
    if u.kind == "steady_shear" or (u.kind == "alternating_shear" and _first_half(u, t)):
        out[..., 0] = U * np.sin(TWO_PI * x2)
    elif u.kind == "alternating_shear":
        out[..., 1] = U * np.sin(TWO_PI * x1)
    else:  # cellular
        out[..., 0] = U * np.sin(TWO_PI * x1) * np.cos(TWO_PI * x2)
        out[..., 1] = -U * np.cos(TWO_PI * x1) * np.sin(TWO_PI * x2)
    return out


def velocity_gradient(u: VelocityField, t: float, x) -> np.ndarray:
    """Jacobian ``J[..., i, j] = d u_i / d x_j``."""
    x = np.asarray(x, dtype=float)
    J = np.zeros(x.shape + (x.shape[-1],))
    if u.kind in ("zero", "translation"):
        return J
    U, w = u.amplitude, TWO_PI
    x1, x2 = x[..., 0], x[..., 1]
    if u.kind == "steady_shear" or (u.kind == "alternating_shear" and _first_half(u, t)):
        J[..., 0, 1] = U * w * np.cos(w * x2)
    elif u.kind == "alternating_shear":
        J[..., 1, 0] = U * w * np.cos(w * x1)
    else:
        s1, c1, s2, c2 = np.sin(w * x1), np.cos(w * x1), np.sin(w * x2), np.cos(w * x2)
        J[..., 0, 0] = U * w * c1 * c2
        J[..., 0, 1] = -U * w * s1 * s2
        J[..., 1, 0] = U * w * s1 * s2
        J[..., 1, 1] = -U * w * c1 * c2
    return J


def grad_sup_norm(u: VelocityField, *, require_positive=False) -> float:
    """Space-time sup of the largest entry of ``|grad u|`` (closed form).

    Raises when ``require_positive`` is set and the field has no gradient, since
    several bounds divide by this quantity.
    """
    value = 0.0 if u.kind in ("zero", "translation") else TWO_PI * abs(u.amplitude)
    if require_positive and value == 0.0:
        raise ValueError(f"flow {u.kind!r} has ||grad u||_inf = 0; a positive value is required")
    return value


def sampled_grad_sup(u: VelocityField, n_space=512, n_time=16) -> float:
    """Dense-sampling estimate of :func:`grad_sup_norm`."""
    if u.d == 1:
        return 0.0
    x = np.arange(n_space) / n_space
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)
    times = np.arange(n_time) * (u.period / n_time)
    return max(float(np.abs(velocity_gradient(u, t, pts)).max()) for t in times)


@dataclass(frozen=True)
class FlowMap:
    """Flow map of a velocity field, integrated by fixed-step classical RK4."""

    velocity: VelocityField
    step: float = 1e-2

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.velocity.time_periodic and self.step > self.velocity.period / 8:
            raise ValueError(
                f"step {self.step} exceeds period/8 = {self.velocity.period / 8}; "
                "the switching would be unresolved")


def _rk4_back(u, x, a, b, h_max, compiled=True):
    """Integrate ``dX/dtau = u(tau, X)`` from ``tau = b`` down to ``tau = a``.

    The velocity is smooth in time inside ``(a, b)``; evaluation times are
    clamped into the open piece so a switching time is never sampled.
    ``compiled=False`` uses the vectorised :func:`evaluate` (same arithmetic).
    """
    length = b - a
    m = max(1, math.ceil(length / h_max - 1e-12))
    h = length / m
    eps = 1e-9 * length
    lo, hi = a + eps, b - eps
    if compiled and x.shape[-1] == 2:
        flat = np.ascontiguousarray(x.reshape(-1, 2))
        _kernels.rk4_back_2d(_kernels.FLOW_CODES[u.kind], float(u.amplitude), float(u.period),
                             flat, b, h, m, lo, hi)
        return flat.reshape(x.shape)

    def f(tau, y):
        return evaluate(u, min(max(tau, lo), hi), y)

    tau = b
    for _ in range(m):
        k1 = f(tau, x)
        k2 = f(tau - h / 2, x - (h / 2) * k1)
        k3 = f(tau - h / 2, x - (h / 2) * k2)
        k4 = f(tau - h, x - h * k3)
        x = x - (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        tau -= h
    return x


def trace(fmap: FlowMap, s: float, t: float, points, *, compiled=True) -> np.ndarray:
    """Flow map ``phi_{s,t}`` applied to ``points`` (shape ``(..., d)``).

    ``phi_{s,t}(x)`` is the position at time ``s`` of the particle found at
    ``x`` at time ``t``, so ``f o phi_{s,t}`` solves the transport equation
    with data ``f`` at time ``s``.  The characteristic is integrated backward
    in time with RK4, splitting at switching times, and wrapped into
    ``[0, 1)^d``.  For steady fields this is the map generated by
    ``d/dt phi = -u(phi)``, ``phi_{s,s} = Id``.
    """
    if t < s:
        raise ValueError("trace requires t >= s")
    x = np.array(points, dtype=float)
    u = fmap.velocity
    if t == s or u.is_zero:
        return x
    cuts = [s] + u.breakpoints(s, t) + [t]
    for a, b in zip(cuts[-2::-1], cuts[:0:-1]):
        x = _rk4_back(u, x, a, b, fmap.step, compiled)
    x = np.mod(x, 1.0)
    x[x >= 1.0] -= 1.0  # mod of a tiny negative rounds up to 1.0
    return x
