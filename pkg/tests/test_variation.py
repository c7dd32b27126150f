import dataclasses

import numpy as np
import pytest

from algebroid_mech.algebroid import builtin
from algebroid_mech.dynamics import LagrangianSystem, integrate
from algebroid_mech.paths import EPath, PathSection, admissibility_residual, lift_base, time_derivative
from algebroid_mech.variation import (
    action,
    dS_analytic,
    dS_numeric,
    deform,
    homotopy_sheet,
    morphism_residual,
    random_section,
    simpson,
    stationarity_report,
)

from conftest import GENERIC_GAMMA0, GENERIC_OMEGA0


def tangent_path(n, N, T, xs_fn, ys_fn):
    t = np.linspace(0.0, T, N + 1)
    return EPath(builtin("tangent", n=n), 0.0, T, xs_fn(t), ys_fn(t))


def accelerating_particle(N=1000):
    # x = t^2/2, y = t: admissible but not a free-particle solution (E = 1)
    return tangent_path(1, N, 1.0, lambda t: (t**2 / 2)[:, None], lambda t: t[:, None])


FREE_1D = LagrangianSystem(builtin("tangent", n=1), "0.5*y1^2")


def test_simpson_rejects_odd_intervals():
    with pytest.raises(ValueError):
        simpson(np.ones(4), 0.1)


def test_action_constant_lagrangian():
    p = tangent_path(1, 100, 2.0, lambda t: t[:, None], lambda t: np.ones((len(t), 1)))
    assert action(LagrangianSystem(p.algebroid, "1"), p) == pytest.approx(2.0, abs=1e-14)


def test_action_free_particle_line():
    sys_ = LagrangianSystem(builtin("tangent", n=2), "0.5*(y1^2 + y2^2)")
    p = tangent_path(2, 100, 1.0, lambda t: np.stack([t, 0 * t], 1), lambda t: np.tile([1.0, 0.0], (len(t), 1)))
    assert action(sys_, p) == pytest.approx(0.5, abs=1e-12)


def test_action_heavy_top_equilibrium(heavy_top):
    e3 = np.tile([0.0, 0.0, 1.0], (101, 1))
    p = EPath(heavy_top.algebroid, 0.0, 1.0, e3, e3)
    assert abs(action(heavy_top, p)) <= 1e-12


def test_dS_free_particle_hand_value():
    p = accelerating_particle()
    sig = np.sin(np.pi * p.times)[:, None]
    sig[[0, -1]] = 0.0  # sin(pi) is not exactly zero in floating point
    s = PathSection(p, sig)
    assert dS_analytic(FREE_1D, p, s) == pytest.approx(-2.0 / np.pi, abs=1e-10)
    # the deformation route differentiates sigma with the grid stencil: O(h^2) off
    assert dS_numeric(FREE_1D, p, s) == pytest.approx(-2.0 / np.pi, abs=1e-5)


def test_dS_zero_section():
    p = accelerating_particle(100)
    s = PathSection(p, np.zeros((101, 1)))
    assert dS_analytic(FREE_1D, p, s) == 0.0
    assert dS_numeric(FREE_1D, p, s) == 0.0


def test_dS_requires_fixed_endpoints():
    p = accelerating_particle(100)
    with pytest.raises(ValueError):
        dS_analytic(FREE_1D, p, PathSection(p, np.ones((101, 1))))


def test_deform_zero_section_is_identity(heavy_top_path_short):
    p = heavy_top_path_short
    q = deform(p.algebroid, p, PathSection(p, np.zeros_like(p.ys)), 0.3)
    assert np.array_equal(q.xs, p.xs) and np.array_equal(q.ys, p.ys)


def test_deform_tangent_is_additive():
    p = tangent_path(2, 200, 1.0, lambda t: np.stack([t, t**3], 1), lambda t: np.stack([0 * t + 1, 3 * t**2], 1))
    s = random_section(p, np.random.default_rng(2))
    q = deform(p.algebroid, p, s, 0.4)
    assert np.abs(q.xs - (p.xs + 0.4 * s.sigmas)).max() <= 1e-14
    assert np.abs(q.ys - (p.ys + 0.4 * time_derivative(s.sigmas, p.h))).max() <= 1e-13


def test_deform_fixes_base_endpoints(heavy_top_path_short):
    p = heavy_top_path_short
    s = random_section(p, np.random.default_rng(4))
    q = deform(p.algebroid, p, s, 0.1)
    assert np.abs(q.xs[[0, -1]] - p.xs[[0, -1]]).max() <= 1e-12
    # the deformed path stays admissible up to the stencil error
    assert admissibility_residual(q)[0] <= 1e-4


def test_random_section_properties(heavy_top_path_short):
    s = random_section(heavy_top_path_short, np.random.default_rng(0))
    assert s.fixed_endpoints
    assert np.abs(s.sigmas).max() == pytest.approx(1.0)


def test_dS_is_linear_in_sigma(heavy_top):
    p = lift_base(heavy_top.algebroid, GENERIC_GAMMA0, np.tile(GENERIC_OMEGA0, (401, 1)), 0.0, 2.0)
    rng = np.random.default_rng(5)
    s = random_section(p, rng)
    for route in (dS_analytic, dS_numeric):
        base = route(heavy_top, p, s)
        assert abs(base) > 1e-3
        assert route(heavy_top, p, s.scaled(2.0)) / base == pytest.approx(2.0, abs=0.2)
        assert route(heavy_top, p, s.scaled(-1.0)) / base == pytest.approx(-1.0, abs=0.1)


def test_routes_agree_on_random_paths(heavy_top):
    rng = np.random.default_rng(11)
    for _ in range(5):
        c = rng.normal(size=(2, 3))
        t = np.linspace(0, 2, 401)
        ys = GENERIC_OMEGA0 + np.outer(np.sin(t), c[0]) + np.outer(t, c[1])
        p = lift_base(heavy_top.algebroid, GENERIC_GAMMA0, ys, 0.0, 2.0)
        s = random_section(p, rng)
        gap = abs(dS_analytic(heavy_top, p, s) - dS_numeric(heavy_top, p, s))
        assert gap <= max(1e-4, 10 * (p.h**2 + 1e-6))


def test_stationarity_of_solution(heavy_top, heavy_top_path_short):
    rep = stationarity_report(heavy_top, heavy_top_path_short, k=5, seed=3)
    assert rep.verdict == "stationary"
    assert max(abs(v) for v in rep.dS_numeric) <= 1e-5


def test_stationarity_vacuous(heavy_top, heavy_top_path_short):
    rep = stationarity_report(heavy_top, heavy_top_path_short, k=0)
    assert rep.verdict == "vacuous" and rep.to_json()["per_sigma"] == []


def test_stationarity_parallel_matches_serial(heavy_top):
    p = integrate(heavy_top, GENERIC_GAMMA0, GENERIC_OMEGA0, 0.0, 1.0, 200)
    a = stationarity_report(heavy_top, p, k=4, seed=9)
    b = stationarity_report(heavy_top, p, k=4, seed=9, parallel=True)
    assert a.to_json() == b.to_json()


def test_tangent_sheet_residual_vanishes():
    p = tangent_path(2, 200, 1.0, lambda t: np.stack([np.sin(t), t], 1), lambda t: np.stack([np.cos(t), 0 * t + 1], 1))
    s = random_section(p, np.random.default_rng(1))
    sheet = homotopy_sheet(p.algebroid, p, s, 0.1, 10)
    assert morphism_residual(sheet)[0] <= 1e-10


def test_sheet_boundary_and_seed_row(heavy_top_path_short):
    p = heavy_top_path_short
    sheet = homotopy_sheet(p.algebroid, p, random_section(p, np.random.default_rng(0)), 0.1, 4)
    assert np.array_equal(sheet.row(0).xs, p.xs) and np.array_equal(sheet.row(0).ys, p.ys)
    assert not np.any(sheet.b[:, 0]) and not np.any(sheet.b[:, -1])


def test_heavy_top_sheet_order_two(heavy_top):
    res = []
    for N, M in ((200, 5), (400, 10), (800, 20)):
        p = integrate(heavy_top, GENERIC_GAMMA0, GENERIC_OMEGA0, 0.0, 2.0, N)
        sheet = homotopy_sheet(p.algebroid, p, random_section(p, np.random.default_rng(0)), 0.1, M)
        res.append(morphism_residual(sheet)[0])
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders >= 1.8)


def test_corrupted_sheet_detected(heavy_top_path_short):
    p = heavy_top_path_short
    sheet = homotopy_sheet(p.algebroid, p, random_section(p, np.random.default_rng(0)), 0.1, 10)
    good = morphism_residual(sheet)[0]
    bad = morphism_residual(dataclasses.replace(sheet, b=1.1 * sheet.b))[0]
    assert bad > 0.05 and bad > 100 * good
