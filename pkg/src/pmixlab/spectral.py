"""Periodic grids, Fourier fields and homogeneous Sobolev norms on the unit torus.

The torus is ``[0, 1]^d`` with ``d`` in ``{1, 2}``.  The eigenvalues of ``-Laplacian``
are ``4 pi^2 |k|^2`` for integer wave vectors ``k``, so the principal eigenvalue
is ``4 pi^2``.  Discrete Fourier coefficients are normalised so that
``sum |f_k|^2`` equals the L2 norm squared of the field (unit volume).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "EigenTable",
    "MEAN_TOL",
    "sobolev_norm",
    "project_low",
    "gradient",
    "grad_lp_norm",
    "weyl_constant",
    "random_field",
    "sine_field",
]

MEAN_TOL = 1e-12
LAMBDA_1 = 4.0 * math.pi**2


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points per direction on ``[0, 1]^d``."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    def coords(self) -> tuple:
        """Grid point coordinates, one array of ``shape`` per direction."""
        x = np.arange(self.n) / self.n
        return tuple(np.meshgrid(*([x] * self.d), indexing="ij"))

    def points(self) -> np.ndarray:
        """Grid points as an array of shape ``(size, d)``."""
        return np.stack([c.ravel() for c in self.coords()], axis=-1)

    def wavenumbers(self) -> tuple:
        """Integer wave numbers matching ``np.fft.fftn`` ordering."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        return tuple(np.meshgrid(*([k] * self.d), indexing="ij"))

    def eigenvalues(self) -> np.ndarray:
        """``4 pi^2 |k|^2`` on the spectral grid (zero at the mean mode)."""
        return _eigenvalues(self.d, self.n)


@functools.lru_cache(maxsize=16)
def _eigenvalues(d, n):
    ks = Grid(d, n).wavenumbers()
    lam = LAMBDA_1 * sum(k.astype(float) ** 2 for k in ks)
    lam.setflags(write=False)
    return lam


class ScalarField:
    """Mean-zero real field sampled on a :class:`Grid`.

    The field is immutable.  Use :meth:`from_values` to build one from samples
    that may carry a small mean (it is subtracted).
    """

    __slots__ = ("grid", "_values", "_spectrum")

    def __init__(self, grid: Grid, values, *, check=True):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values have shape {values.shape}, grid expects {grid.shape}")
        if check:
            m = values.mean()
            if abs(m) > MEAN_TOL:
                raise ValueError(f"field is not mean-zero (mean = {m:.3e})")
        values.setflags(write=False)
        self.grid = grid
        self._values = values
        self._spectrum = None

    @classmethod
    def from_values(cls, grid, values):
        values = np.array(values, dtype=float)
        values -= values.mean()
        return cls(grid, values, check=False)

    @classmethod
    def from_spectrum(cls, grid, spectrum):
        spectrum = np.array(spectrum, dtype=complex)
        spectrum.flat[0] = 0.0
        values = np.fft.ifftn(spectrum * grid.size).real
        return cls.from_values(grid, values)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def spectrum(self) -> np.ndarray:
        """Fourier coefficients ``f_k`` with ``f(x) = sum_k f_k exp(2 pi i k.x)``."""
        if self._spectrum is None:
            s = np.fft.fftn(self._values) / self.grid.size
            s.setflags(write=False)
            self._spectrum = s
        return self._spectrum

    def l2(self) -> float:
        return float(np.sqrt(np.mean(self._values**2)))

    def inner(self, other: "ScalarField") -> float:
        return float(np.mean(self._values * other.values))

    def __add__(self, other):
        return ScalarField.from_values(self.grid, self._values + other.values)

    def __sub__(self, other):
        return ScalarField.from_values(self.grid, self._values - other.values)

    def __mul__(self, a):
        return ScalarField.from_values(self.grid, self._values * float(a))

    __rmul__ = __mul__

    def __repr__(self):
        return f"ScalarField(d={self.grid.d}, n={self.grid.n}, l2={self.l2():.6g})"


def _require_mean_zero(f):
    m = f.spectrum.flat[0]
    if abs(m) > MEAN_TOL:
        raise ValueError(f"field is not mean-zero (mean = {abs(m):.3e})")


def sobolev_norm(f: ScalarField, alpha: float) -> float:
    """Homogeneous Sobolev norm ``(sum_k lambda_k^alpha |f_k|^2)^(1/2)``.

    Negative orders are allowed; the mean mode is excluded, which is why the
    field has to be mean-zero.
    """
    _require_mean_zero(f)
    lam = f.grid.eigenvalues()
    power = np.abs(f.spectrum) ** 2
    mask = lam > 0
    return float(np.sqrt(np.sum(lam[mask] ** alpha * power[mask])))


def gradient(f: ScalarField) -> tuple:
    """Spectral derivatives ``(d_1 f, ..., d_d f)``; the Nyquist mode is dropped."""
    n = f.grid.n
    out = []
    for k in f.grid.wavenumbers():
        k = k.astype(float)
        k[k == -n // 2] = 0.0
        out.append(ScalarField.from_spectrum(f.grid, 2j * np.pi * k * f.spectrum))
    return tuple(out)


def grad_lp_norm(f: ScalarField, p: float, *, check=True) -> float:
    """``(int |grad f|^p dx)^(1/p)`` with ``|.|`` the Euclidean norm.

    Only ``p > 2`` is admissible; ``check=False`` lifts that for cross-checks.
    """
    if check and not p > 2:
        raise ValueError(f"p must exceed 2, got {p}")
    mag2 = sum(g.values**2 for g in gradient(f))
    return float(np.mean(mag2 ** (p / 2)) ** (1.0 / p))


# --- low-mode projection ---------------------------------------------------


@functools.lru_cache(maxsize=8)
def _real_basis(d, n):
    """Real eigenbasis ordering on the grid.

    Every conjugate pair ``{k, -k}`` carries a cosine and (unless the pair is
    self-conjugate on the grid) a sine.  Pairs are sorted by eigenvalue, ties by
    the lexicographic order of the representative wave vector; cosine precedes
    sine.  Returns ``(flat_index, flat_index_conj, cumulative_count)`` per pair.
    """
    grid = Grid(d, n)
    ks = np.stack([k.ravel() for k in grid.wavenumbers()], axis=-1).astype(np.int64)
    neg = (-ks + n // 2) % n - n // 2
    flat = np.arange(n**d)
    neg_flat = np.ravel_multi_index(tuple((neg % n).T), (n,) * d)
    # keep one member per pair: the lexicographically larger of k and -k
    diff = ks - neg
    first = np.argmax(diff != 0, axis=1)
    lead = diff[np.arange(len(diff)), first]
    keep = (lead >= 0) & (flat != 0)
    idx = flat[keep]
    conj = neg_flat[keep]
    rep = ks[keep]
    sq = (rep**2).sum(axis=1)
    order = np.lexsort(tuple(rep.T[::-1]) + (sq,))
    idx, conj = idx[order], conj[order]
    n_funcs = np.where(idx == conj, 1, 2)
    return idx, conj, np.cumsum(n_funcs)


def basis_size(grid: Grid) -> int:
    """Number of real eigenfunctions representable on ``grid`` (mean excluded)."""
    return grid.size - 1


def project_low(f: ScalarField, N: int) -> ScalarField:
    """Orthogonal projection onto the ``N`` lowest real eigenfunctions."""
    if N < 0:
        raise ValueError("mode count must be nonnegative")
    if N > basis_size(f.grid):
        raise ValueError(f"N = {N} exceeds the {basis_size(f.grid)} grid eigenfunctions")
    idx, conj, cum = _real_basis(f.grid.d, f.grid.n)
    spec = f.spectrum.ravel()
    out = np.zeros_like(spec)
    full = np.searchsorted(cum, N, side="right")  # pairs fully inside
    i, c = idx[:full], conj[:full]
    out[i] = spec[i]
    out[c] = spec[c]
    if full < len(cum) and (cum[full - 1] if full else 0) < N:
        # the cosine of the next pair only
        j, cj = idx[full], conj[full]
        re = spec[j].real
        out[j] = re
        out[cj] = re
    return ScalarField.from_spectrum(f.grid, out.reshape(f.grid.shape))


def eigenfunction(grid: Grid, rank: int) -> ScalarField:
    """The ``rank``-th real eigenfunction (1-based), L2-normalised."""
    idx, conj, cum = _real_basis(grid.d, grid.n)
    pair = int(np.searchsorted(cum, rank, side="left"))
    first = (cum[pair - 1] if pair else 0) + 1
    k = np.array(np.unravel_index(idx[pair], grid.shape)).astype(float)
    k = (k + grid.n // 2) % grid.n - grid.n // 2
    phase = 2 * np.pi * sum(ki * xi for ki, xi in zip(k, grid.coords()))
    vals = np.cos(phase) if rank == first else np.sin(phase)
    return ScalarField.from_values(grid, vals / np.sqrt(np.mean(vals**2)))


# --- eigenvalue counting ----------------------------------------------------


@dataclass(frozen=True)
class EigenTable:
    """Distinct ``-Laplacian`` eigenvalues with multiplicities.

    Built from the integer wave vectors of a grid (``|k_i| <= n/2``).
    """

    d: int
    values: np.ndarray
    multiplicities: np.ndarray

    @classmethod
    def from_grid(cls, grid: Grid):
        lam = grid.eigenvalues().ravel()
        k2 = np.rint(lam / LAMBDA_1).astype(np.int64)
        k2 = k2[k2 > 0]
        vals, mult = np.unique(k2, return_counts=True)
        return cls(grid.d, LAMBDA_1 * vals.astype(float), mult)

    @classmethod
    def for_ball(cls, d: int, kmax: int):
        """All ``k != 0`` with ``|k| <= kmax`` (complete up to ``4 pi^2 kmax^2``)."""
        r = np.arange(-kmax, kmax + 1)
        ks = np.meshgrid(*([r] * d), indexing="ij")
        k2 = sum(k**2 for k in ks).ravel()
        k2 = k2[(k2 > 0) & (k2 <= kmax**2)]
        vals, mult = np.unique(k2, return_counts=True)
        return cls(d, LAMBDA_1 * vals.astype(float), mult)

    @property
    def lambda1(self) -> float:
        return float(self.values[0])

    def counting(self) -> np.ndarray:
        """``N(lambda_j)``: number of eigenvalues (with multiplicity) ``<= lambda_j``."""
        return np.cumsum(self.multiplicities)

    def largest_below(self, bound: float):
        """Largest eigenvalue ``<= bound``, or ``None`` when ``bound < lambda_1``."""
        i = np.searchsorted(self.values, bound * (1 + 1e-14), side="right")
        return float(self.values[i - 1]) if i else None

    def weyl_ratio(self) -> np.ndarray:
        """``N(lambda) / lambda^(d/2)`` at every tabulated eigenvalue."""
        return self.counting() / self.values ** (self.d / 2)


def weyl_constant(d: int, vol: float = 1.0, eps: float = 0.01) -> float:
    """``(1 + eps) Vol / ((4 pi)^(d/2) Gamma(d/2 + 1))``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return (1 + eps) * vol / ((4 * math.pi) ** (d / 2) * math.gamma(d / 2 + 1))


# --- sample fields ----------------------------------------------------------


def sine_field(grid: Grid) -> ScalarField:
    """``sqrt(2) sin(2 pi x_1)``: unit L2 norm, single lowest mode."""
    return ScalarField.from_values(grid, np.sqrt(2.0) * np.sin(2 * np.pi * grid.coords()[0]))


def random_field(grid: Grid, seed: int, kmax: int | None = None, l2: float = 1.0) -> ScalarField:
    """Random band-limited field with ``1 <= |k|_inf <= kmax`` (default ``n/4``)."""
    kmax = grid.n // 4 if kmax is None else kmax
    if not 1 <= kmax <= grid.n // 2 - 1:
        raise ValueError(f"kmax must lie in [1, n/2 - 1], got {kmax}")
    rng = np.random.default_rng(seed)
    ks = grid.wavenumbers()
    band = np.maximum.reduce([np.abs(k) for k in ks]) <= kmax
    coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    coef = np.where(band, coef, 0.0)
    vals = np.fft.ifftn(coef).real
    vals -= vals.mean()
    vals *= l2 / np.sqrt(np.mean(vals**2))
    return ScalarField.from_values(grid, vals)
