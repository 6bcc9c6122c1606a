import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from pmixlab.spectral import (EigenTable, Grid, ScalarField, basis_size, eigenfunction,
                              grad_lp_norm, gradient, project_low, random_field, sine_field,
                              sobolev_norm, weyl_constant)

from conftest import random_modes, trig_field, trig_values

seeds = st.integers(0, 2**32 - 1)


@pytest.mark.parametrize("d,n", [(3, 64), (2, 4), (1, 48), (0, 8)])
def test_grid_rejects_bad_shapes(d, n):
    with pytest.raises(ValueError):
        Grid(d, n)


def test_grid_basics():
    g = Grid(2, 16)
    assert g.size == 256 and g.shape == (16, 16) and g.spacing == 1 / 16
    assert g.points().shape == (256, 2)
    assert g.eigenvalues()[0, 1] == pytest.approx(4 * math.pi**2)


def test_field_must_be_mean_zero():
    g = Grid(1, 16)
    with pytest.raises(ValueError, match="mean-zero"):
        ScalarField(g, np.ones(16))
    f = ScalarField.from_values(g, np.arange(16.0))
    assert abs(f.values.mean()) < 1e-15
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros(8))


def test_field_is_immutable():
    f = sine_field(Grid(1, 16))
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_sobolev_norm_of_normalised_sine():
    f = sine_field(Grid(1, 64))
    assert sobolev_norm(f, 0) == pytest.approx(1.0, abs=1e-14)
    assert sobolev_norm(f, -1) == pytest.approx(1 / (2 * math.pi), rel=1e-13)


def test_sobolev_norm_rejects_mean():
    g = Grid(1, 16)
    f = ScalarField(g, np.ones(16), check=False)
    with pytest.raises(ValueError, match="mean-zero"):
        sobolev_norm(f, -1)


def _fd_dirichlet_energy(modes, n_ref):
    # centred differences of the analytic field on a refined grid
    x = np.arange(n_ref) / n_ref
    X, Y = np.meshgrid(x, x, indexing="ij")
    h = 1 / n_ref
    total = 0.0
    for axis in range(2):
        shift = [np.zeros(2), np.zeros(2)]
        shift[0][axis], shift[1][axis] = h, -h
        fp = trig_values(modes, X + shift[0][0], Y + shift[0][1])
        fm = trig_values(modes, X + shift[1][0], Y + shift[1][1])
        total += np.mean(((fp - fm) / (2 * h)) ** 2)
    return total


def test_h1_norm_matches_refined_difference_quadrature():
    rng = np.random.default_rng(7)
    modes = random_modes(rng, 2)
    f = trig_field(Grid(2, 32), modes)
    # Richardson-extrapolated centred differences: O(h^4) oracle
    e1, e2 = _fd_dirichlet_energy(modes, 1024), _fd_dirichlet_energy(modes, 2048)
    oracle = math.sqrt((4 * e2 - e1) / 3)
    assert sobolev_norm(f, 1) == pytest.approx(oracle, rel=1e-8)


@given(seeds, st.integers(1, 15))
def test_parseval(seed, kmax):
    f = random_field(Grid(2, 32), seed, kmax, l2=3.0)
    spectral = math.sqrt(np.sum(np.abs(f.spectrum) ** 2))
    assert spectral == pytest.approx(f.l2(), rel=1e-10)
    assert sobolev_norm(f, 0) == pytest.approx(f.l2(), rel=1e-10)


@given(seeds, st.floats(0.05, 0.95))
def test_sobolev_interpolation_inequality(seed, a):
    f = random_field(Grid(2, 32), seed)
    lhs = sobolev_norm(f, a)
    rhs = sobolev_norm(f, 0) ** (1 - a) * sobolev_norm(f, 1) ** a
    assert lhs <= rhs * (1 + 1e-12)


def test_projection_annihilates_higher_mode():
    g = Grid(2, 16)
    for N in (0, 1, 4, 9, 20):
        assert project_low(eigenfunction(g, N + 1), N).l2() < 1e-14
        assert project_low(eigenfunction(g, N + 1), N + 1).l2() == pytest.approx(1.0)


def test_projection_keeps_the_lowest_modes_in_order():
    g = Grid(2, 16)
    lams = []
    for r in range(1, 30):
        e = eigenfunction(g, r)
        lams.append(sobolev_norm(e, 1) ** 2)
    assert np.all(np.diff(lams) >= -1e-9)
    assert lams[0] == pytest.approx(4 * math.pi**2)


@given(seeds, st.integers(0, 255))
def test_projection_idempotent_and_orthogonal(seed, N):
    f = random_field(Grid(2, 16), seed, 7)
    P = project_low(f, N)
    assert np.allclose(project_low(P, N).values, P.values, atol=1e-14, rtol=0)
    rest = f - P
    assert P.l2() ** 2 + rest.l2() ** 2 == pytest.approx(f.l2() ** 2, abs=1e-12)


def test_projection_argument_checks():
    f = random_field(Grid(1, 16), 0)
    with pytest.raises(ValueError):
        project_low(f, -1)
    with pytest.raises(ValueError):
        project_low(f, basis_size(f.grid) + 1)
    assert np.allclose(project_low(f, basis_size(f.grid)).values, f.values, atol=1e-14)


def test_gradient_of_sine_pointwise():
    g = Grid(1, 64)
    x = g.coords()[0]
    f = ScalarField.from_values(g, np.sin(2 * np.pi * x))
    (dx,) = gradient(f)
    assert np.max(np.abs(dx.values - 2 * np.pi * np.cos(2 * np.pi * x))) < 1e-10


def test_gradient_of_zero():
    for comp in gradient(ScalarField.zeros(Grid(2, 16))):
        assert not comp.values.any()


def test_gradient_against_centred_differences_second_order():
    rng = np.random.default_rng(3)
    modes = random_modes(rng, 2, kmax=3)
    f = trig_field(Grid(2, 32), modes)
    gx, gy = gradient(f)
    errs = []
    for h in (1e-2, 5e-3):
        x, y = f.grid.coords()
        fd = (trig_values(modes, x + h, y) - trig_values(modes, x - h, y)) / (2 * h)
        errs.append(np.max(np.abs(fd - gx.values)))
        fdy = (trig_values(modes, x, y + h) - trig_values(modes, x, y - h)) / (2 * h)
        assert np.max(np.abs(fdy - gy.values)) < 1e-2 * np.max(np.abs(gy.values))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.01)


def test_grad_lp_norm_examples():
    g = Grid(1, 128)
    assert grad_lp_norm(ScalarField.zeros(g), 3) == 0.0
    f = sine_field(g)
    assert grad_lp_norm(f, 2, check=False) == pytest.approx(sobolev_norm(f, 1), rel=1e-10)
    quad, _ = integrate.quad(lambda x: (2 * math.pi * math.sqrt(2) * math.cos(2 * math.pi * x)) ** 4,
                             0, 1, epsabs=1e-13, epsrel=1e-13, limit=200)
    assert grad_lp_norm(f, 4) == pytest.approx(quad ** 0.25, rel=1e-12)
    assert grad_lp_norm(f, 4) == pytest.approx(6.9535, abs=1e-4)


def test_grad_lp_norm_rejects_p_at_most_two():
    with pytest.raises(ValueError):
        grad_lp_norm(sine_field(Grid(1, 16)), 2)


def test_weyl_constant_examples():
    assert weyl_constant(2) == pytest.approx(1.01 / (4 * math.pi), rel=1e-14)
    assert weyl_constant(1) == pytest.approx(1.01 / math.pi, rel=1e-14)
    assert weyl_constant(2) == pytest.approx(0.080373, abs=1e-6)
    assert weyl_constant(1) == pytest.approx(0.321493, abs=1e-6)
    with pytest.raises(ValueError):
        weyl_constant(2, eps=0)


@pytest.mark.parametrize("table", [EigenTable.from_grid(Grid(2, 32)), EigenTable.for_ball(2, 20),
                                   EigenTable.for_ball(1, 50)])
def test_eigen_table_invariants(table):
    assert table.lambda1 == pytest.approx(4 * math.pi**2)
    assert np.all(np.diff(table.values) > 0)
    assert np.all(np.diff(table.counting()) > 0)


def test_eigen_table_lattice_counts():
    t = EigenTable.for_ball(2, 5)
    # |k|^2 = 1: 4 vectors, 2: 4, 4: 4, 5: 8
    assert list(t.multiplicities[:4]) == [4, 4, 4, 8]
    assert t.largest_below(4 * math.pi**2 * 3) == pytest.approx(4 * math.pi**2 * 2)
    assert t.largest_below(1.0) is None


def test_weyl_counting_in_one_dimension():
    t = EigenTable.for_ball(1, 4096)
    c = weyl_constant(1)
    beyond = slice(100, None)
    assert np.all(t.counting()[beyond] <= c * t.values[beyond] ** 0.5)
