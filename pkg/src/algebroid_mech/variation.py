"""Action functional, first variation along admissible variations, E-homotopy sheets.

Sign convention: for sigma vanishing at both ends,

    dS[Xi_a(sigma)] = - integral of E_a(t) sigma^a(t) dt

where ``E`` is :func:`el_residual`.  It follows from integrating
``<dL/dy, dsigma/dt>`` by parts and is cross-checked against the finite
difference of the action along the deformation flow.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .algebroid import LieAlgebroid
from .dynamics import LagrangianSystem, el_residual
from .paths import EPath, PathSection, time_derivative

__all__ = [
    "action",
    "simpson",
    "dS_analytic",
    "deform",
    "dS_numeric",
    "HomotopySheet",
    "homotopy_sheet",
    "morphism_residual",
    "random_section",
    "StationarityReport",
    "stationarity_report",
]


def simpson(f: np.ndarray, h: float) -> float:
    """Composite Simpson rule on N+1 equally spaced samples (N even)."""
    N = len(f) - 1
    if N < 2 or N % 2:
        raise ValueError(f"Simpson quadrature needs an even number of intervals, got N={N}")
    return float(h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum()))


def action(sys: LagrangianSystem, p: EPath) -> float:
    return simpson(sys.value(p.xs, p.ys), p.h)


def dS_analytic(sys: LagrangianSystem, p: EPath, s: PathSection) -> float:
    if not s.fixed_endpoints:
        raise ValueError("sigma must vanish exactly at both endpoints")
    E = el_residual(sys, p).per_node
    return -simpson(np.einsum("pa,pa->p", E, s.sigmas), p.h)


def deform(A: LieAlgebroid, p: EPath, s: PathSection, s_val: float, M: int = 2) -> EPath:
    """Flow the path for parameter ``s_val`` along the complete lift of sigma.

    The section is extended constantly in x, so at every time node
    dx/ds = rho(x) sigma(t) and dy/ds = dsigma/dt(t) + C(x)(y, sigma(t)),
    integrated with M RK4 steps in s (all time nodes at once).
    """
    if s_val == 0.0 or not np.any(s.sigmas):
        return p.with_data(p.xs.copy(), p.ys.copy())
    sig = s.sigmas
    sig_dot = time_derivative(sig, p.h)

    def f(X, Y):
        dX = np.einsum("pia,pa->pi", A.anchor(X), sig)
        dY = sig_dot + A.bracket_term(X, Y, sig)
        return dX, dY

    X, Y = p.xs.copy(), p.ys.copy()
    ds = s_val / M
    for _ in range(M):
        k1 = f(X, Y)
        k2 = f(X + 0.5 * ds * k1[0], Y + 0.5 * ds * k1[1])
        k3 = f(X + 0.5 * ds * k2[0], Y + 0.5 * ds * k2[1])
        k4 = f(X + ds * k3[0], Y + ds * k3[1])
        X = X + (ds / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Y = Y + (ds / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return p.with_data(X, Y)


def dS_numeric(sys: LagrangianSystem, p: EPath, s: PathSection, ds: float = 1e-3, M: int = 2) -> float:
    """Central difference of the action along the deformation flow."""
    if not np.any(s.sigmas):
        return 0.0
    A = sys.algebroid
    plus = action(sys, deform(A, p, s, ds, M))
    minus = action(sys, deform(A, p, s, -ds, M))
    return (plus - minus) / (2.0 * ds)


@dataclass(frozen=True, eq=False)
class HomotopySheet:
    """Samples of a(s, t) (base and fiber) and b(s, t) on an (M+1) x (N+1) grid."""

    algebroid: LieAlgebroid
    s_grid: np.ndarray
    t_grid: np.ndarray
    a: np.ndarray  # (M+1, N+1, n+m)
    b: np.ndarray  # (M+1, N+1, m)

    @property
    def base(self) -> np.ndarray:
        return self.a[..., : self.algebroid.n]

    @property
    def fiber(self) -> np.ndarray:
        return self.a[..., self.algebroid.n :]

    def row(self, k: int) -> EPath:
        t = self.t_grid
        return EPath(self.algebroid, float(t[0]), float(t[-1]), self.base[k], self.fiber[k])


def homotopy_sheet(A: LieAlgebroid, p: EPath, s: PathSection, s_max: float, M: int) -> HomotopySheet:
    if not s.fixed_endpoints:
        raise ValueError("sigma must vanish exactly at both endpoints")
    rows = [np.concatenate([p.xs, p.ys], axis=1)]
    cur = p
    for _ in range(M):
        cur = deform(A, cur, PathSection(cur, s.sigmas), s_max / M, M=1)
        rows.append(np.concatenate([cur.xs, cur.ys], axis=1))
    a = np.stack(rows)
    b = np.broadcast_to(s.sigmas, (M + 1,) + s.sigmas.shape).copy()
    return HomotopySheet(A, np.linspace(0.0, s_max, M + 1), p.times, a, b)


def morphism_residual(sheet: HomotopySheet) -> tuple[float, np.ndarray]:
    """max over interior nodes of |db/dt - da/ds + C(x)(a, b)| (central differences)."""
    A = sheet.algebroid
    M, N = len(sheet.s_grid) - 1, len(sheet.t_grid) - 1
    if M < 2 or N < 2:
        raise ValueError("need M, N >= 2")
    hs = sheet.s_grid[1] - sheet.s_grid[0]
    ht = sheet.t_grid[1] - sheet.t_grid[0]
    b, y, x = sheet.b, sheet.fiber, sheet.base
    db_dt = (b[1:-1, 2:] - b[1:-1, :-2]) / (2.0 * ht)
    da_ds = (y[2:, 1:-1] - y[:-2, 1:-1]) / (2.0 * hs)
    xi = x[1:-1, 1:-1]
    C = A.structure(xi.reshape(-1, A.n)).reshape(xi.shape[:2] + (A.m,) * 3)
    field_ = db_dt - da_ds + np.einsum("stabc,stb,stc->sta", C, y[1:-1, 1:-1], b[1:-1, 1:-1])
    per_node = np.abs(field_).max(axis=-1)
    return float(per_node.max()), per_node


def random_section(p: EPath, rng: np.random.Generator, modes: int = 5) -> PathSection:
    """Random sine series in every component, scaled to sup-norm 1, zero at both ends."""
    tau = (p.times - p.t0) / (p.t1 - p.t0)
    m = p.algebroid.m
    coef = rng.uniform(-1.0, 1.0, size=(modes, m))
    basis = np.sin(np.pi * np.outer(tau, np.arange(1, modes + 1)))  # (N+1, modes)
    sig = basis @ coef
    sig[0] = 0.0
    sig[-1] = 0.0
    peak = np.abs(sig).max()
    if peak > 0:
        sig /= peak
    return PathSection(p, sig)


@dataclass
class StationarityReport:
    k: int
    tol: float
    seed: int
    dS_analytic: list[float] = field(default_factory=list)
    dS_numeric: list[float] = field(default_factory=list)

    @property
    def max_dS(self) -> float:
        return max((abs(v) for v in self.dS_analytic), default=0.0)

    @property
    def max_route_gap(self) -> float:
        return max((abs(a - b) for a, b in zip(self.dS_analytic, self.dS_numeric)), default=0.0)

    @property
    def verdict(self) -> str:
        if self.k == 0:
            return "vacuous"
        return "stationary" if self.max_dS <= self.tol else "non-stationary"

    def to_json(self) -> dict:
        return {
            "max_dS": self.max_dS,
            "max_route_gap": self.max_route_gap,
            "k": self.k,
            "tol": self.tol,
            "seed": self.seed,
            "verdict": self.verdict,
            "per_sigma": [
                {"dS_analytic": a, "dS_numeric": b}
                for a, b in zip(self.dS_analytic, self.dS_numeric)
            ],
        }


def stationarity_report(
    sys: LagrangianSystem,
    p: EPath,
    k: int = 20,
    seed: int = 0,
    tol: float = 1e-5,
    ds: float = 1e-3,
    parallel: bool = False,
) -> StationarityReport:
    """Sample k random variations with fixed endpoints and test dS = 0 on each."""
    rng = np.random.default_rng(seed)
    sections = [random_section(p, rng) for _ in range(k)]
    report = StationarityReport(k=k, tol=tol, seed=seed)
    if k == 0:
        return report
    E = el_residual(sys, p).per_node

    def one(s: PathSection) -> tuple[float, float]:
        analytic = -simpson(np.einsum("pa,pa->p", E, s.sigmas), p.h)
        return analytic, dS_numeric(sys, p, s, ds)

    if parallel:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(one, sections))
    else:
        results = [one(s) for s in sections]
    report.dS_analytic = [r[0] for r in results]
    report.dS_numeric = [r[1] for r in results]
    return report
