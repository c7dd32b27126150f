"""Lagrangian systems on a Lie algebroid and a fixed-step RK4 integrator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algebroid import LieAlgebroid
from .expr import Expression, jet_batch, parse
from .paths import EPath, admissibility_residual, time_derivative

__all__ = [
    "LagrangianSystem",
    "ELResidual",
    "IntegrationError",
    "SingularHessianError",
    "ChartDomainError",
    "momentum",
    "energy",
    "el_residual",
    "integrate",
]

log = logging.getLogger(__name__)

HESSIAN_COND_MAX = 1e8


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t


class SingularHessianError(IntegrationError):
    pass


class ChartDomainError(IntegrationError):
    pass


class LagrangianSystem:
    """A Lagrangian ``L(x, y)`` over an algebroid; variables ``x1..xn, y1..ym``."""

    def __init__(self, algebroid: LieAlgebroid, L: Expression | str, name: str = "custom"):
        self.algebroid = algebroid
        if isinstance(L, str):
            L = parse(L, algebroid.variables)
        if L.variables != algebroid.variables:
            raise ValueError(f"Lagrangian must be over {algebroid.variables}, got {L.variables}")
        self.L = L
        self.name = name

    def __repr__(self) -> str:
        return f"LagrangianSystem({self.name!r}, L={self.L.to_string()!r})"

    def _points(self, x, y) -> np.ndarray:
        return np.concatenate([np.atleast_2d(x), np.atleast_2d(y)], axis=1)

    def value(self, x, y) -> np.ndarray:
        return self.L(self._points(x, y))

    def gradients(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, dL/dx (P, n) and dL/dy (P, m) at a batch of points."""
        A = self.algebroid
        j = jet_batch(self.L, self._points(x, y), np.eye(A.n + A.m), order=1)
        return j.v, j.g[:, : A.n], j.g[:, A.n :]

    def second_order(self, x, y):
        """dL/dx, dL/dy, d2L/dy dy (P,m,m) and d2L/dy dx (P,m,n)."""
        A = self.algebroid
        j = jet_batch(self.L, self._points(x, y), np.eye(A.n + A.m), order=2)
        n = A.n
        return j.g[:, :n], j.g[:, n:], j.h[:, n:, n:], j.h[:, n:, :n]


def momentum(sys: LagrangianSystem, x, y) -> np.ndarray:
    """Fiber derivative dL/dy at one point (shape (m,)) or a batch."""
    single = np.ndim(x) == 1
    _, _, Ly = sys.gradients(x, y)
    return Ly[0] if single else Ly


def energy(sys: LagrangianSystem, x, y) -> np.ndarray | float:
    """<dL/dy, y> - L at one point or a batch."""
    single = np.ndim(x) == 1
    L, _, Ly = sys.gradients(x, y)
    E = np.einsum("pa,pa->p", Ly, np.atleast_2d(y)) - L
    return float(E[0]) if single else E


@dataclass
class ELResidual:
    per_node: np.ndarray  # (N+1, m) covector E_a(t)
    admissibility: float
    warnings: list[str] = field(default_factory=list)

    @property
    def max(self) -> float:
        return float(np.abs(self.per_node).max())

    @property
    def node_norms(self) -> np.ndarray:
        return np.abs(self.per_node).max(axis=1)


def el_residual(sys: LagrangianSystem, p: EPath, adm_tol: float = 1e-5) -> ELResidual:
    """E_a = d/dt(dL/dy^a) + dL/dy^c C^c_ab y^b - rho^i_a dL/dx^i at every node.

    Momenta are sampled exactly and differentiated with the grid stencils.
    """
    A = sys.algebroid
    if A is not p.algebroid and (A.n, A.m) != (p.algebroid.n, p.algebroid.m):
        raise ValueError("path lives on a different algebroid")
    adm, _ = admissibility_residual(p)
    warnings = []
    if adm > adm_tol:
        warnings.append(f"path is not admissible within {adm_tol:g} (residual {adm:.3e})")
    _, Lx, Ly = sys.gradients(p.xs, p.ys)
    rho = A.anchor(p.xs)
    C = A.structure(p.xs)
    E = (
        time_derivative(Ly, p.h)
        + np.einsum("pc,pcab,pb->pa", Ly, C, p.ys)
        - np.einsum("pia,pi->pa", rho, Lx)
    )
    return ELResidual(E, adm, warnings)


def _vector_field(sys: LagrangianSystem):
    A = sys.algebroid

    def f(x: np.ndarray, y: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        rho = A.anchor(x)
        C = A.structure(x)
        Lx, Ly, H, Lyx = (arr[0] for arr in sys.second_order(x, y))
        xdot = rho @ y
        r = rho.T @ Lx - np.einsum("c,cab,b->a", Ly, C, y) - Lyx @ xdot
        cond = np.linalg.cond(H)
        if not np.isfinite(cond) or cond > HESSIAN_COND_MAX:
            raise SingularHessianError(f"fiber Hessian singular or ill-conditioned (cond {cond:.3g})", t)
        ydot = np.linalg.solve(H, r)
        return xdot, ydot

    return f


def integrate(
    sys: LagrangianSystem,
    x0,
    y0,
    t0: float,
    t1: float,
    N: int,
    domain: Callable[[np.ndarray], bool] | None = None,
) -> EPath:
    """Classical RK4 with N fixed steps for dx/dt = rho(x) y and the Lagrange equations.

    Requires a regular Lagrangian (invertible fiber Hessian, condition number
    below 1e8 at every stage).  ``domain`` optionally fences the chart: a base
    point for which it returns False aborts with :class:`ChartDomainError`.
    """
    A = sys.algebroid
    if N < 1:
        raise ValueError("N must be positive")
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if x0.shape != (A.n,) or y0.shape != (A.m,):
        raise ValueError(f"initial data must have shapes ({A.n},) and ({A.m},)")
    f = _vector_field(sys)
    h = (t1 - t0) / N
    xs = np.empty((N + 1, A.n))
    ys = np.empty((N + 1, A.m))
    xs[0], ys[0] = x0, y0
    if domain is not None and not domain(x0):
        raise ChartDomainError("initial point outside the chart domain", t0)
    for k in range(N):
        t = t0 + k * h
        x, y = xs[k], ys[k]
        k1x, k1y = f(x, y, t)
        k2x, k2y = f(x + 0.5 * h * k1x, y + 0.5 * h * k1y, t + 0.5 * h)
        k3x, k3y = f(x + 0.5 * h * k2x, y + 0.5 * h * k2y, t + 0.5 * h)
        k4x, k4y = f(x + h * k3x, y + h * k3y, t + h)
        xs[k + 1] = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        ys[k + 1] = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        if not (np.all(np.isfinite(xs[k + 1])) and np.all(np.isfinite(ys[k + 1]))):
            raise IntegrationError("non-finite state", t + h)
        if domain is not None and not domain(xs[k + 1]):
            raise ChartDomainError("trajectory left the chart domain", t + h)
    log.debug("integrated %s over [%g, %g] with N=%d", sys.name, t0, t1, N)
    return EPath(A, t0, t1, xs, ys)
