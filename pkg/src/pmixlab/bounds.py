"""Closed-form constants, envelopes and sup-defined frequency thresholds for
the nonlinear dissipation time, plus the ``F_a`` iteration algebra.

Everything touching the frequency thresholds is evaluated in log space: the
thresholds are the largest ``lambda`` with

    lambda^(p/2) d^((p-2)/2) D_p ||theta0||^(p-2) e^(4 G L) / L  <=  G^2 / (4 nu),

``G = ||grad u||_inf`` and ``L = h^{-1}(y(lambda))``, which overflows in
double precision long before the interesting range of ``nu``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .mixing import RateFunction
from .spectral import EigenTable, weyl_constant

__all__ = [
    "BoundInputs", "BoundReport", "SearchInfo", "InfeasibleRegime",
    "d_p_constant", "log_d_p", "decay_threshold", "gronwall_decay", "large_gradient_decay",
    "trivial_kappa_bound", "rate_inverse", "H1", "H2", "script_H1", "script_H2",
    "threshold_slope", "enhanced_rate_factor", "corollary_delta", "transport_distance_bound",
    "gradient_growth_bound", "lemma42_t0", "select_lambda_n", "F_apply", "F_compose",
    "F_compose_min",
]

LAMBDA1 = 4 * math.pi**2


class InfeasibleRegime(ValueError):
    """No frequency satisfies the threshold condition (``nu`` too large)."""


@dataclass(frozen=True)
class BoundInputs:
    p: float
    nu: float
    alpha: float
    beta: float
    d: int
    grad_u_sup: float
    theta0_l2: float
    h: RateFunction
    lambda1: float = LAMBDA1
    weyl: float | None = None  # defaults to weyl_constant(d)

    def __post_init__(self):
        if not self.p > 2:
            raise ValueError(f"p must exceed 2, got {self.p}")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        if not self.grad_u_sup > 0:
            raise ValueError("||grad u||_inf must be positive for these bounds")
        if not self.theta0_l2 > 0:
            raise ValueError("||theta_00||_2 must be positive")
        if not self.lambda1 > 0:
            raise ValueError("lambda1 must be positive")
        if self.weyl is None:
            object.__setattr__(self, "weyl", weyl_constant(self.d))
        elif not self.weyl > 0:
            raise ValueError("Weyl constant must be positive")


# --- elementary closed forms ----------------------------------------------------


def _check_p(p):
    if np.any(~(np.asarray(p) > 2)):
        raise ValueError(f"p must exceed 2, got {p}")


def d_p_constant(p):
    """``48^(p-1) p^p 2^(p(p-1))``; an exact ``int`` for integral ``p``."""
    _check_p(p)
    if float(p).is_integer():
        q = int(p)
        return 48 ** (q - 1) * q**q * 2 ** (q * (q - 1))
    return math.exp(log_d_p(p))


def log_d_p(p) -> float:
    _check_p(p)
    return (p - 1) * math.log(48) + p * math.log(p) + p * (p - 1) * math.log(2)


def _decay(norm0, p, a, dt):
    # norm0 / (a (p-2) dt norm0^(p-2) + 1)^(1/(p-2)), written to stay finite
    return norm0 * math.exp(-math.log1p(a * (p - 2) * dt * norm0 ** (p - 2)) / (p - 2))


def decay_threshold(norm0, p) -> float:
    """``norm0 / ((p-2) norm0^(p-2) + 1)^(1/(p-2))``, the crossing level."""
    _check_p(p)
    if not norm0 > 0:
        raise ValueError("norm0 must be positive")
    return _decay(norm0, p, 1.0, 1.0)


def gronwall_decay(nu, p, lambda1, norm0, dt) -> float:
    """Envelope ``norm0 / (nu lambda1^(p/2) (p-2) dt norm0^(p-2) + 1)^(1/(p-2))``."""
    _check_p(p)
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    return _decay(norm0, p, nu * lambda1 ** (p / 2), dt)


def large_gradient_decay(nu, c0, p, norm0, dt) -> float:
    """Decay while ``||grad theta||_p >= c0^(1/2) ||theta||_2``; the envelope
    with ``lambda1`` replaced by ``c0``."""
    return gronwall_decay(nu, p, c0, norm0, dt)


def trivial_kappa_bound(nu, p, lambda1=LAMBDA1) -> float:
    """``1 / (nu lambda1^(p/2))``."""
    _check_p(p)
    if not nu > 0:
        raise ValueError("nu must be positive")
    return 1.0 / (nu * lambda1 ** (p / 2))


def rate_inverse(h: RateFunction, y):
    """``h^{-1}(y)``; rejects ``y`` outside the range of ``h``."""
    return h.inverse(y)


# --- frequency thresholds ---------------------------------------------------------


@dataclass
class SearchInfo:
    """Diagnostics of the sup search (all in ``x = log lambda``)."""

    method: str  # "bisection" | "grid-scan"
    bracket: tuple
    iterations: int
    residual: float  # width of the final bracket, i.e. relative error in lambda
    log_value: float
    warnings: list = field(default_factory=list)


def _exponent(inputs, case):
    """``(e, log_shift)`` with ``log y(x) = -e x + log_shift``."""
    a, b, d = inputs.alpha, inputs.beta, inputs.d
    if case == "strong":
        return (a + b) / 2, -math.log(2)
    if case == "weak":
        return (d + 2 * a + 2 * b) / 4, -math.log(2) - 0.5 * math.log(inputs.weyl)
    raise ValueError(f"case must be 'strong' or 'weak', got {case!r}")


def _condition(inputs, case):
    """Vectorised ``log g(x) - log(G^2 / (4 nu))``; ``inf`` outside the domain."""
    p, G = inputs.p, inputs.grad_u_sup
    e, shift = _exponent(inputs, case)
    const = ((p - 2) / 2 * math.log(inputs.d) + log_d_p(p)
             + (p - 2) * math.log(inputs.theta0_l2))
    rhs = 2 * math.log(G) - math.log(4) - math.log(inputs.nu)
    h = inputs.h
    top = math.log(h.sup()) if math.isfinite(h.sup()) else math.inf

    def c(x):
        x = np.asarray(x, dtype=float)
        logy = -e * x + shift
        ok = logy < top
        L = np.asarray(h.inverse_log(np.where(ok, logy, top if math.isfinite(top) else 0.0)),
                       dtype=float)
        ok &= L > 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = (p / 2) * x + const - np.log(L) + 4 * G * L - rhs
        val = np.where(ok & ~np.isnan(val), val, np.inf)
        return val if val.ndim else float(val)

    return c


_SCAN_LO, _SCAN_HI, _SCAN_STEP = -40.0, 240.0, 0.25
_FINE = math.log(10) / 1024


def _threshold(inputs, case, tol=1e-10, max_log=1e6):
    c = _condition(inputs, case)
    x0 = math.log(inputs.lambda1)
    xs = x0 + np.arange(_SCAN_LO, _SCAN_HI + _SCAN_STEP / 2, _SCAN_STEP)
    vals = c(xs)
    i = int(np.argmin(vals))
    x_min, c_min = float(xs[i]), float(vals[i])
    if c_min > 0:
        lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, xs.size - 1)]
        res = optimize.minimize_scalar(c, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        if res.fun > 0:
            raise InfeasibleRegime(
                f"nu = {inputs.nu:.6g} too large for enhancement regime: the threshold "
                f"condition fails for every lambda (min excess {res.fun:.4g} in log units)")
        x_min = float(res.x)
    notes = []
    # geometric bracket expansion to the right of a feasible point
    a, step = x_min, _SCAN_STEP
    b = x_min + step
    while c(b) <= 0:
        a = b
        step *= 2
        b = x_min + step
        if b > max_log:
            raise InfeasibleRegime("threshold condition holds up to lambda = exp(1e6); no finite sup")
    probe = np.linspace(a, b, 65)
    cp = c(probe)
    later = xs[xs > b]
    monotone = bool(np.all(np.diff(cp) >= -1e-12 * np.maximum(1.0, np.abs(cp[1:]))))
    monotone &= not bool(np.any(c(later) <= 0)) if later.size else True
    method = "bisection"
    if not monotone:
        method = "grid-scan"
        msg = "threshold condition not monotone on the bracket; using a 1024-per-decade grid scan"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        notes.append(msg)
        top = max(b, float(xs[-1]))
        fine = np.arange(x0 + _SCAN_LO, top + _FINE, _FINE)
        feas = np.nonzero(c(fine) <= 0)[0]
        j = int(feas[-1])
        a, b = float(fine[j]), float(fine[j] + _FINE)
    it = 0
    while b - a > tol:
        mid = 0.5 * (a + b)
        if c(mid) <= 0:
            a = mid
        else:
            b = mid
        it += 1
    return a, SearchInfo(method, (a, b), it, b - a, a, notes)


def _threshold_value(inputs, case, full_output):
    x, info = _threshold(inputs, case)
    value = math.exp(x) if x < 709 else math.inf
    return (value, info) if full_output else value


def H1(inputs: BoundInputs, *, full_output=False):
    """Largest ``lambda`` meeting the strong-mixing threshold condition.

    With ``full_output`` returns ``(H1, SearchInfo)``; ``SearchInfo.log_value``
    stays finite when ``H1`` itself overflows.
    """
    return _threshold_value(inputs, "strong", full_output)


def H2(inputs: BoundInputs, *, full_output=False):
    """Weak-mixing analogue of :func:`H1` (uses the Weyl constant)."""
    return _threshold_value(inputs, "weak", full_output)


def _script_H(inputs, log_H, e):
    p, h = inputs.p, inputs.h
    log_arg = -e * log_H - (1 - e) * math.log(2)
    if math.isfinite(h.sup()) and log_arg >= math.log(h.sup()):
        raise ValueError("h^{-1} argument outside the range of h")
    L = h.inverse_log(log_arg)
    if not L > 0:
        raise ValueError("h^{-1} argument outside the range of h")
    return min(1.0, 2.0 ** (-p - 1) * L ** ((p - 2) / 2))


def _log(value):
    return value if isinstance(value, float) and math.isinf(value) else math.log(value)


def script_H1(inputs: BoundInputs, H1_value, *, log_value=None) -> float:
    """``min{1, 2^(-p-1) h^{-1}(H1^(-(a+b)/2) / 2^(1-(a+b)/2))^((p-2)/2)}``."""
    lv = log_value if log_value is not None else math.log(H1_value)
    return _script_H(inputs, lv, (inputs.alpha + inputs.beta) / 2)


def script_H2(inputs: BoundInputs, H2_value, *, log_value=None) -> float:
    """As :func:`script_H1` with exponent ``(d + 2a + 2b)/4``."""
    lv = log_value if log_value is not None else math.log(H2_value)
    return _script_H(inputs, lv, (inputs.d + 2 * inputs.alpha + 2 * inputs.beta) / 4)


def threshold_slope(case, p, c2, grad_u_sup, alpha, beta, d=None) -> float:
    """Asymptotic ``d log H / d log nu`` for an exponential rate ``c1 e^(-c2 t)``."""
    G = grad_u_sup
    if case == "strong":
        return -2 * c2 / (p * c2 + 4 * G * (alpha + beta))
    if case == "weak":
        return -2 * c2 / (p * c2 + 2 * G * (d + 2 * alpha + 2 * beta))
    raise ValueError(f"case must be 'strong' or 'weak', got {case!r}")


# --- reports --------------------------------------------------------------------


@dataclass
class BoundReport:
    case: str
    nu: float
    d_p: float
    trivial: float
    H: float
    log_H: float
    script_H: float | None  # None when H < lambda1 puts h^{-1} out of range
    rate_factor: float | None
    active: bool  # H >= lambda1; otherwise only the trivial bound applies
    effective: float  # rate_factor when active, else trivial
    delta: float | None
    search: SearchInfo

    def to_dict(self) -> dict:
        out = asdict(self)
        out["d_p"] = float(self.d_p)
        out["search"]["bracket"] = list(self.search.bracket)
        return out


def enhanced_rate_factor(inputs: BoundInputs, case: str = "strong") -> BoundReport:
    """``1 / (nu H^(p/2) script_H)``: the dissipation-time bound without its
    unspecified absolute constant, plus all intermediate quantities."""
    H, info = (H1 if case == "strong" else H2)(inputs, full_output=True)
    p = inputs.p
    trivial = trivial_kappa_bound(inputs.nu, p, inputs.lambda1)
    active = info.log_value >= math.log(inputs.lambda1)
    try:
        sH = (script_H1 if case == "strong" else script_H2)(inputs, H, log_value=info.log_value)
    except ValueError:
        if active:
            raise
        sH = rate = None
    else:
        log_rate = -math.log(inputs.nu) - (p / 2) * info.log_value - math.log(sH)
        rate = math.exp(log_rate) if log_rate < 709 else math.inf
    delta = None
    if inputs.h.law in ("power", "exponential"):
        delta = corollary_delta(case, inputs.h.law, p=p, alpha=inputs.alpha, beta=inputs.beta,
                                d=inputs.d, q=inputs.h.params[1], c2=inputs.h.params[1],
                                grad_u_sup=inputs.grad_u_sup)
    return BoundReport(case, inputs.nu, d_p_constant(p), trivial, H, info.log_value, sH, rate,
                       active, rate if active else trivial, delta, info)



def corollary_delta(case, law, *, p, alpha, beta, d=None, q=None, c2=None,
                    grad_u_sup=None) -> float:
    """Dissipation-time exponents for power-law and exponential mixing rates."""
    _check_p(p)
    ab = alpha + beta
    if case == "strong" and law == "power":
        return p * q / ab
    if case == "weak" and law == "power":
        return 2 * p * q / (2 * ab + d)
    if law == "exponential":
        G = grad_u_sup
        if case == "strong":
            top = 4 * G * ab
        elif case == "weak":
            top = 2 * G * (d + 2 * ab)
        else:
            raise ValueError(f"unknown case {case!r}")
        return top / (p * c2 + top)
    raise ValueError(f"unknown case/law {case!r}/{law!r}")


# --- transport comparison -------------------------------------------------------


def gradient_growth_bound(d, p, grad_u_sup, grad_theta0_p, dt) -> float:
    """``d^((p-2)/2) e^(2 G dt) ||grad theta0||_p^p``."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    return d ** ((p - 2) / 2) * math.exp(2 * grad_u_sup * dt) * grad_theta0_p**p


def transport_distance_bound(inputs: BoundInputs, grad_theta0_p, dt, *, d_p=None) -> float:
    """``d^((p-2)/2) D_p nu / G * e^(2 G dt) * ||grad theta0||_p^p``.

    ``d_p`` overrides the constant (used for mutation checks).
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    G = inputs.grad_u_sup
    if not G > 0:
        raise ValueError("bound divides by ||grad u||_inf, which must be positive")
    D = float(d_p_constant(inputs.p) if d_p is None else d_p)
    p, d = inputs.p, inputs.d
    return d ** ((p - 2) / 2) * D * inputs.nu / G * math.exp(2 * G * dt) * grad_theta0_p**p


# --- contact time and mode selection -----------------------------------------------


def lemma42_t0(s, lambda_n, h: RateFunction, alpha, beta, case="strong", *, weyl=None, d=None):
    """Contact time ``s + 2 h^{-1}(y)`` with ``y = lambda_N^(-(a+b)/2) / 2`` (strong)
    or ``lambda_N^(-(d+2a+2b)/4) / (2 sqrt(c))`` (weak)."""
    if case == "strong":
        log_y = -(alpha + beta) / 2 * math.log(lambda_n) - math.log(2)
    elif case == "weak":
        if d is None:
            raise ValueError("weak case needs d")
        c = weyl_constant(d) if weyl is None else weyl
        log_y = (-(d + 2 * alpha + 2 * beta) / 4 * math.log(lambda_n) - math.log(2)
                 - 0.5 * math.log(c))
    else:
        raise ValueError(f"case must be 'strong' or 'weak', got {case!r}")
    if math.isfinite(h.sup()) and log_y >= math.log(h.sup()):
        raise ValueError("h^{-1} argument outside the range of h")
    return s + 2 * h.inverse_log(log_y)


def select_lambda_n(H, table: EigenTable):
    """Largest tabulated eigenvalue ``<= H``; ``None`` when ``H < lambda1``
    (enhancement regime inactive)."""
    return table.largest_below(H)


# --- F_a iteration --------------------------------------------------------------


def F_apply(a, p, x):
    """``F_a(x) = x / (a x^(p-2) + 1)^(1/(p-2))``."""
    _check_p(p)
    if np.any(np.asarray(a) < 0) or np.any(np.asarray(x) < 0):
        raise ValueError("F_a needs a >= 0 and x >= 0")
    x = np.asarray(x, dtype=float)
    out = x * np.exp(-np.log1p(a * x ** (p - 2)) / (p - 2))
    return out if out.ndim else float(out)


def F_compose(b, c, t0, t1, t2, p, x0):
    """Closed form of ``F_{c(t2-t1)}(F_{b(t1-t0)}(x0))``."""
    return F_apply(c * (t2 - t1) + b * (t1 - t0), p, x0)


def F_compose_min(b, c, t0, t1, t2, p, x0):
    """``F_{min(b,c)(t2-t0)}(x0)``, which dominates the composition."""
    if not (np.all(np.asarray(t2) > t1) and np.all(np.asarray(t1) > t0)):
        raise ValueError("need t2 > t1 > t0")
    return F_apply(np.minimum(b, c) * (t2 - t0), p, x0)
