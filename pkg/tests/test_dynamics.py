import numpy as np
import pytest

from algebroid_mech.algebroid import builtin
from algebroid_mech.dynamics import (
    ChartDomainError,
    LagrangianSystem,
    SingularHessianError,
    el_residual,
    energy,
    integrate,
    momentum,
)
from algebroid_mech.models import HeavyTopParams, euler_top_residual, heavy_top_system, rigid_body_system
from algebroid_mech.paths import EPath

from conftest import GENERIC_GAMMA0, GENERIC_OMEGA0

I_HT = np.array([1.0, 1.0, 2.0])


def test_momentum_quadratic():
    sys_ = LagrangianSystem(builtin("tangent", n=2), "0.5*(y1^2 + y2^2)")
    assert np.array_equal(momentum(sys_, [0.0, 0.0], [3.0, 4.0]), [3.0, 4.0])


def test_momentum_heavy_top_is_I_omega(heavy_top):
    w = np.array([0.3, -1.2, 0.7])
    assert np.allclose(momentum(heavy_top, [0.1, 0.2, 0.9], w), I_HT * w)


def test_momentum_vanishes_without_velocity_dependence():
    sys_ = LagrangianSystem(builtin("so3_r3"), "x1*x3 + cos(x2)")
    assert not np.any(momentum(sys_, [0.1, 0.2, 0.3], [1.0, 2.0, 3.0]))


def test_energy_examples(heavy_top):
    free = LagrangianSystem(builtin("tangent", n=2), "0.5*(y1^2 + y2^2)")
    assert energy(free, [5.0, 5.0], [3.0, 4.0]) == pytest.approx(12.5)
    g, w = np.array([0.3, 0.4, 0.8]), np.array([1.0, -2.0, 0.5])
    assert energy(heavy_top, g, w) == pytest.approx(0.5 * w @ (I_HT * w) + g[2])
    lin = LagrangianSystem(builtin("tangent", n=1), "x1^2*y1 + sin(x1)")
    assert energy(lin, [0.4], [2.0]) == pytest.approx(-np.sin(0.4))


def test_batch_energy_matches_pointwise(heavy_top):
    rng = np.random.default_rng(0)
    xs, ys = rng.normal(size=(2, 6, 3))
    assert np.allclose(energy(heavy_top, xs, ys), [energy(heavy_top, x, y) for x, y in zip(xs, ys)])


def test_free_particle_is_exact():
    sys_ = LagrangianSystem(builtin("tangent", n=2), "0.5*(y1^2 + y2^2)")
    p = integrate(sys_, [0.0, 0.0], [1.0, 2.0], 0.0, 1.0, 100)
    assert np.abs(p.xs[-1] - [1.0, 2.0]).max() <= 1e-12
    assert el_residual(sys_, p).max <= 1e-12


def test_relative_equilibrium_is_constant(heavy_top):
    p = integrate(heavy_top, [0, 0, 1], [0, 0, 1], 0.0, 10.0, 1000)
    assert np.abs(p.xs - [0, 0, 1]).max() <= 1e-12
    assert np.abs(p.ys - [0, 0, 1]).max() <= 1e-12
    assert el_residual(heavy_top, p).max <= 1e-12


def test_rigid_body_conservation():
    I = np.array([1.0, 2.0, 3.0])
    sys_ = rigid_body_system(tuple(I))
    p = integrate(sys_, [0.0], [1.0, 1.0, 1.0], 0.0, 5.0, 5000)
    Iw = p.ys * I
    casimir = np.linalg.norm(Iw, axis=1)
    E = 0.5 * np.einsum("pi,pi->p", p.ys, Iw)
    assert np.abs(casimir - casimir[0]).max() <= 1e-8
    assert np.abs(E - E[0]).max() <= 1e-8
    # Euler's equations I dw/dt = (I w) x w, checked with the grid stencils
    assert el_residual(sys_, p).max <= 1e-5


def test_el_residual_order_two_on_solver_output(heavy_top):
    errs = [el_residual(heavy_top, integrate(heavy_top, GENERIC_GAMMA0, GENERIC_OMEGA0, 0, 2, N)).max for N in (200, 400, 800)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_el_residual_matches_euler_top(heavy_top_path_short):
    p = heavy_top_path_short
    generic = el_residual(heavy_top_system(HeavyTopParams()), p).per_node
    hand = euler_top_residual(HeavyTopParams(), p)
    assert np.abs(generic - hand).max() <= 1e-10


def test_el_residual_warns_on_non_admissible(heavy_top):
    t = np.linspace(0, 1, 51)
    xs = np.stack([np.sin(t), 0 * t, np.cos(t)], 1)
    p = EPath(heavy_top.algebroid, 0.0, 1.0, xs, np.tile([0.0, 0.0, 1.0], (51, 1)))
    assert el_residual(heavy_top, p).warnings


def test_singular_hessian_aborts():
    sys_ = LagrangianSystem(builtin("so3_r3"), "x3")
    with pytest.raises(SingularHessianError) as info:
        integrate(sys_, [0, 0, 1], [0, 0, 1], 0.0, 1.0, 10)
    assert info.value.t == 0.0


def test_degenerate_direction_aborts():
    sys_ = LagrangianSystem(builtin("tangent", n=2), "0.5*y1^2 + x2")
    with pytest.raises(SingularHessianError):
        integrate(sys_, [0, 0], [1, 1], 0.0, 1.0, 10)


def test_chart_domain_fence():
    sys_ = LagrangianSystem(builtin("tangent", n=1), "0.5*y1^2")
    with pytest.raises(ChartDomainError) as info:
        integrate(sys_, [0.0], [1.0], 0.0, 1.0, 100, domain=lambda x: x[0] < 0.5)
    assert info.value.t == pytest.approx(0.5, abs=0.011)


def test_lagrangian_must_use_algebroid_variables():
    with pytest.raises(ValueError):
        LagrangianSystem(builtin("tangent", n=1), "z1")


def test_initial_data_shape_checked(heavy_top):
    with pytest.raises(ValueError):
        integrate(heavy_top, [0, 0, 1], [0, 1], 0.0, 1.0, 10)
