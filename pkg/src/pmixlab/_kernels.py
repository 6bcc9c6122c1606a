"""Compiled finite-volume kernels for the periodic p-Laplacian.

Face ``i+1/2`` of cell ``i`` carries the normal difference quotient; the
transverse component of the face gradient is the average of the centred
differences in the two adjacent cells.  The face flux is
``(|g|^2 + eps^2)^((p-2)/2) g_normal``.

Each flux routine fills the flux arrays and returns ``(dissipation, gmax)``
where ``dissipation = h^d * sum_faces flux * g_normal`` is the discrete
``int |grad theta|^p`` and ``gmax`` the largest face ``|g|``.
"""
import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _weight(g2, p):
    if p == 3.0:
        return np.sqrt(g2)
    if p == 4.0:
        return g2
    return g2 ** ((p - 2.0) / 2.0)


@njit(cache=True)
def fluxes_1d(th, h, p, eps2, fx):
    n = th.shape[0]
    diss = 0.0
    gmax2 = 0.0
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        gx = (th[ip] - th[i]) / h
        g2 = gx * gx + eps2
        f = _weight(g2, p) * gx
        fx[i] = f
        diss += f * gx
        if g2 > gmax2:
            gmax2 = g2
    return diss * h, np.sqrt(gmax2)


@njit(cache=True)
def fluxes_2d(th, h, p, eps2, fx, fy, cx, cy):
    """``cx``, ``cy`` are scratch arrays for the cell-centred differences."""
    n0, n1 = th.shape
    ih = 1.0 / h
    ih2 = 0.5 / h
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        im = i - 1 if i > 0 else n0 - 1
        for j in range(n1):
            cx[i, j] = (th[ip, j] - th[im, j]) * ih2
        cy[i, 0] = (th[i, 1] - th[i, n1 - 1]) * ih2
        for j in range(1, n1 - 1):
            cy[i, j] = (th[i, j + 1] - th[i, j - 1]) * ih2
        cy[i, n1 - 1] = (th[i, 0] - th[i, n1 - 2]) * ih2
    diss = 0.0
    gmax2 = 0.0
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            # x-face between (i, j) and (i+1, j)
            gx = (th[ip, j] - th[i, j]) * ih
            gy = 0.5 * (cy[i, j] + cy[ip, j])
            g2 = gx * gx + gy * gy + eps2
            f = _weight(g2, p) * gx
            fx[i, j] = f
            diss += f * gx
            gmax2 = max(gmax2, g2)
            # y-face between (i, j) and (i, j+1)
            gy = (th[i, jp] - th[i, j]) * ih
            gx = 0.5 * (cx[i, j] + cx[i, jp])
            g2 = gx * gx + gy * gy + eps2
            f = _weight(g2, p) * gy
            fy[i, j] = f
            diss += f * gy
            gmax2 = max(gmax2, g2)
    return diss * h * h, np.sqrt(gmax2)


@njit(cache=True)
def apply_div_1d(th, fx, coef, out):
    """``out = th + coef * (fx[i] - fx[i-1])`` with ``coef = dt nu / h``."""
    n = th.shape[0]
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        out[i] = th[i] + coef * (fx[i] - fx[im])


@njit(cache=True)
def apply_div_2d(th, fx, fy, coef, out):
    n0, n1 = th.shape
    for i in range(n0):
        im = i - 1 if i > 0 else n0 - 1
        for j in range(n1):
            jm = j - 1 if j > 0 else n1 - 1
            out[i, j] = th[i, j] + coef * (fx[i, j] - fx[im, j] + fy[i, j] - fy[i, jm])


@njit(cache=True)
def midpoint(a, b, out):
    flat_a = a.ravel()
    flat_b = b.ravel()
    flat_o = out.ravel()
    for k in range(flat_a.shape[0]):
        flat_o[k] = 0.5 * (flat_a[k] + flat_b[k])


class FluxWorkspace:
    """Per-run scratch buffers; not shared between simulations."""

    def __init__(self, shape):
        self.d = len(shape)
        self.fx = np.empty(shape)
        self.fy = np.empty(shape) if self.d == 2 else None
        self.mid = np.empty(shape)
        self.fx_mid = np.empty(shape)
        self.fy_mid = np.empty(shape) if self.d == 2 else None
        if self.d == 2:
            self.cx = np.empty(shape)
            self.cy = np.empty(shape)

    def fluxes(self, th, h, p, eps2, mid=False):
        fx = self.fx_mid if mid else self.fx
        if self.d == 1:
            return fluxes_1d(th, h, p, eps2, fx)
        fy = self.fy_mid if mid else self.fy
        return fluxes_2d(th, h, p, eps2, fx, fy, self.cx, self.cy)

    def apply(self, th, coef, out):
        if self.d == 1:
            apply_div_1d(th, self.fx, coef, out)
        else:
            apply_div_2d(th, self.fx, self.fy, coef, out)


# --- characteristics ----------------------------------------------------------

FLOW_CODES = {"zero": 0, "translation": 1, "steady_shear": 2, "alternating_shear": 3, "cellular": 4}


@njit(cache=True, inline="always")
def _velocity(code, U, T, tau, x1, x2):
    w = 2.0 * np.pi
    if code == 1:
        return U, 0.0
    if code == 2:
        return U * np.sin(w * x2), 0.0
    if code == 3:
        if (tau % T) < 0.5 * T:
            return U * np.sin(w * x2), 0.0
        return 0.0, U * np.sin(w * x1)
    if code == 4:
        return (U * np.sin(w * x1) * np.cos(w * x2),
                -U * np.cos(w * x1) * np.sin(w * x2))
    return 0.0, 0.0


@njit(cache=True)
def rk4_back_2d(code, U, T, x, b, h, m, lo, hi):
    """``m`` backward RK4 steps of size ``h`` from ``tau = b``, in place on ``x``
    of shape ``(N, 2)``; evaluation times are clamped into ``[lo, hi]``.

    On a shear piece the transverse coordinate never moves, so all four
    stages see the same velocity; it is evaluated once per point, which gives
    bitwise the same result as the generic loop.
    """
    if code == 2 or code == 3:
        mid = 0.5 * (lo + hi)
        first = code == 2 or (mid % T) < 0.5 * T
        mv = 0 if first else 1
        for k in range(x.shape[0]):
            v = U * np.sin(2.0 * np.pi * x[k, 1 - mv])
            y = x[k, mv]
            for _ in range(m):
                y -= h / 6.0 * (v + 2.0 * v + 2.0 * v + v)
            x[k, mv] = y
        return
    for k in range(x.shape[0]):
        y1 = x[k, 0]
        y2 = x[k, 1]
        tau = b
        for _ in range(m):
            t1 = min(max(tau, lo), hi)
            t2 = min(max(tau - 0.5 * h, lo), hi)
            t3 = min(max(tau - h, lo), hi)
            a1, a2 = _velocity(code, U, T, t1, y1, y2)
            b1, b2 = _velocity(code, U, T, t2, y1 - 0.5 * h * a1, y2 - 0.5 * h * a2)
            c1, c2 = _velocity(code, U, T, t2, y1 - 0.5 * h * b1, y2 - 0.5 * h * b2)
            d1, d2 = _velocity(code, U, T, t3, y1 - h * c1, y2 - h * c2)
            y1 -= h / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
            y2 -= h / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
            tau -= h
        x[k, 0] = y1
        x[k, 1] = y2
