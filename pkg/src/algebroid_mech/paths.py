"""Discretized E-paths, sections along them, and the admissible variation map."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebroid import LieAlgebroid
from .expr import Expression, jet_batch

__all__ = [
    "EPath",
    "PathSection",
    "ProlongationElement",
    "VariationField",
    "time_derivative",
    "admissibility_residual",
    "xi",
    "involution",
    "complete_lift_field",
    "lift_base",
    "path_to_csv",
    "path_from_csv",
    "path_to_json",
    "path_from_json",
]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def time_derivative(f: np.ndarray, h: float) -> np.ndarray:
    """Second-order derivative along axis 0: central inside, one-sided at the ends."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] < 3:
        raise ValueError("need at least 3 nodes")
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    d[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return d


@dataclass(frozen=True, eq=False)
class EPath:
    """A curve t -> (x(t), y(t)) sampled on the uniform grid t0 + k h, k = 0..N."""

    algebroid: LieAlgebroid
    t0: float
    t1: float
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise ValueError("need t0 < t1")
        xs, ys = _frozen(self.xs), _frozen(self.ys)
        A = self.algebroid
        if xs.ndim != 2 or xs.shape[1] != A.n or ys.ndim != 2 or ys.shape[1] != A.m:
            raise ValueError(f"xs must be (N+1, {A.n}) and ys (N+1, {A.m})")
        if xs.shape[0] != ys.shape[0] or xs.shape[0] < 2:
            raise ValueError("xs and ys need the same number (>= 2) of nodes")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def N(self) -> int:
        return self.xs.shape[0] - 1

    @property
    def h(self) -> float:
        return (self.t1 - self.t0) / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.N + 1)

    def same_grid(self, other: "EPath") -> bool:
        return self.N == other.N and self.t0 == other.t0 and self.t1 == other.t1

    def with_data(self, xs=None, ys=None) -> "EPath":
        return EPath(
            self.algebroid,
            self.t0,
            self.t1,
            self.xs if xs is None else xs,
            self.ys if ys is None else ys,
        )


@dataclass(frozen=True, eq=False)
class PathSection:
    """Fiber components sigma(t) of a section along the base curve of ``path``."""

    path: EPath
    sigmas: np.ndarray

    def __post_init__(self):
        s = _frozen(self.sigmas)
        if s.shape != (self.path.N + 1, self.path.algebroid.m):
            raise ValueError(f"sigmas must have shape {(self.path.N + 1, self.path.algebroid.m)}")
        object.__setattr__(self, "sigmas", s)

    @property
    def fixed_endpoints(self) -> bool:
        return bool(np.all(self.sigmas[0] == 0.0) and np.all(self.sigmas[-1] == 0.0))

    def scaled(self, f) -> "PathSection":
        """Multiply by a scalar or by a grid function f(t) of shape (N+1,)."""
        f = np.asarray(f, dtype=float)
        return PathSection(self.path, self.sigmas * (f[:, None] if f.ndim == 1 else f))


@dataclass(frozen=True)
class VariationField:
    dx: np.ndarray  # (N+1, n)
    dy: np.ndarray  # (N+1, m)


@dataclass(frozen=True)
class ProlongationElement:
    """A point (x, a) of E, an element b of E_x and v in T_a E with base part rho(x) b."""

    x: np.ndarray
    a: np.ndarray
    b: np.ndarray
    dx: np.ndarray
    dy: np.ndarray

    @classmethod
    def build(cls, A: LieAlgebroid, x, a, b, dy) -> "ProlongationElement":
        x = np.asarray(x, dtype=float)
        b = np.asarray(b, dtype=float)
        return cls(x, np.asarray(a, dtype=float), b, A.anchor(x) @ b, np.asarray(dy, dtype=float))

    def check(self, A: LieAlgebroid, tol: float = 1e-12) -> None:
        gap = np.max(np.abs(self.dx - A.anchor(self.x) @ self.b), initial=0.0)
        if gap > tol:
            raise ValueError(f"prolongation element violates dx = rho(x) b (gap {gap:.3e})")


def admissibility_residual(p: EPath) -> tuple[float, np.ndarray]:
    """Nodewise sup-norm of dx/dt - rho(x) y with second-order stencils."""
    if p.N < 2:
        raise ValueError("need N >= 2")
    xdot = time_derivative(p.xs, p.h)
    rhs = np.einsum("pia,pa->pi", p.algebroid.anchor(p.xs), p.ys)
    per_node = np.abs(xdot - rhs).max(axis=1)
    return float(per_node.max()), per_node


def xi(p: EPath, s: PathSection) -> VariationField:
    """Admissible variation: dx = rho(x) sigma, dy = dsigma/dt + C(x)(y, sigma)."""
    if s.path is not p and not p.same_grid(s.path):
        raise ValueError("section is not on the path's grid")
    A = p.algebroid
    dx = np.einsum("pia,pa->pi", A.anchor(p.xs), s.sigmas)
    dy = time_derivative(s.sigmas, p.h) + A.bracket_term(p.xs, p.ys, s.sigmas)
    return VariationField(dx, dy)


def involution(A: LieAlgebroid, e: ProlongationElement, tol: float = 1e-12) -> ProlongationElement:
    """Canonical involution: swap a and b, correct dy by C(x)(b, a)."""
    e.check(A, tol)
    C = A.structure(e.x)
    dy = e.dy + np.einsum("abc,b,c->a", C, e.b, e.a)
    return ProlongationElement(e.x, e.b, e.a, A.anchor(e.x) @ e.a, dy)


def complete_lift_field(A: LieAlgebroid, eta: Sequence[Expression], x, y) -> tuple[np.ndarray, np.ndarray]:
    """Vector field of the complete lift of the section ``eta`` at (x, y)."""
    if len(eta) != A.m:
        raise ValueError(f"section needs {A.m} components")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pts = x[None, :]
    vals = np.empty(A.m)
    grads = np.empty((A.m, A.n))
    for a, e in enumerate(eta):
        if e.variables != A.xvars:
            raise ValueError("section components must be expressions in the base variables")
        j = jet_batch(e, pts, np.eye(A.n), order=1)
        vals[a] = j.v[0]
        grads[a] = j.g[0]
    rho = A.anchor(x)
    dx = rho @ vals
    dy = grads @ (rho @ y) + np.einsum("abc,b,c->a", A.structure(x), y, vals)
    return dx, dy


def lift_base(A: LieAlgebroid, x0, ys: np.ndarray, t0: float, t1: float) -> EPath:
    """Integrate dx/dt = rho(x) y(t) on the grid of ``ys`` (RK4, midpoint y by 4-point interpolation).

    Turns any fiber curve into an admissible path starting at ``x0``.
    """
    ys = np.asarray(ys, dtype=float)
    N = ys.shape[0] - 1
    h = (t1 - t0) / N
    ymid = _midpoints(ys)
    xs = np.empty((N + 1, A.n))
    xs[0] = x0
    f = lambda x, y: A.anchor(x) @ y
    for k in range(N):
        x = xs[k]
        k1 = f(x, ys[k])
        k2 = f(x + 0.5 * h * k1, ymid[k])
        k3 = f(x + 0.5 * h * k2, ymid[k])
        k4 = f(x + h * k3, ys[k + 1])
        xs[k + 1] = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return EPath(A, t0, t1, xs, ys)


def _midpoints(f: np.ndarray) -> np.ndarray:
    """Values at t_k + h/2 by cubic Lagrange interpolation (4 nodes, one-sided at ends)."""
    N = f.shape[0] - 1
    if N < 3:
        return 0.5 * (f[:-1] + f[1:])
    mid = np.empty((N,) + f.shape[1:])
    mid[1:-1] = (-f[:-3] + 9 * f[1:-2] + 9 * f[2:-1] - f[3:]) / 16.0
    mid[0] = (5 * f[0] + 15 * f[1] - 5 * f[2] + f[3]) / 16.0
    mid[-1] = (5 * f[-1] + 15 * f[-2] - 5 * f[-3] + f[-4]) / 16.0
    return mid


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def _header(p: EPath) -> list[str]:
    A = p.algebroid
    return ["t"] + [f"x{i + 1}" for i in range(A.n)] + [f"y{a + 1}" for a in range(A.m)]


def path_to_csv(p: EPath) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(p))
    for t, x, y in zip(p.times, p.xs, p.ys):
        w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [repr(float(v)) for v in y])
    return buf.getvalue()


def path_from_csv(text: str, A: LieAlgebroid) -> EPath:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    expected = ["t"] + list(A.xvars) + [f"y{a + 1}" for a in range(A.m)]
    if header != expected:
        raise ValueError(f"CSV header {header} does not match {expected}")
    data = np.array([[float(v) for v in r] for r in body])
    t = data[:, 0]
    N = len(t) - 1
    grid = np.linspace(t[0], t[-1], N + 1)
    if not np.allclose(t, grid, rtol=0, atol=1e-9 * max(1.0, abs(t[-1]))):
        raise ValueError("CSV time column is not a uniform grid")
    return EPath(A, float(t[0]), float(t[-1]), data[:, 1 : 1 + A.n], data[:, 1 + A.n :])


def path_to_json(p: EPath) -> str:
    return json.dumps(
        {
            "algebroid": p.algebroid.name,
            "t0": p.t0,
            "t1": p.t1,
            "N": p.N,
            "n": p.algebroid.n,
            "m": p.algebroid.m,
            "xs": p.xs.tolist(),
            "ys": p.ys.tolist(),
        }
    )


def path_from_json(text: str, A: LieAlgebroid) -> EPath:
    d = json.loads(text)
    if d["n"] != A.n or d["m"] != A.m:
        raise ValueError("path dimensions do not match the algebroid")
    p = EPath(A, float(d["t0"]), float(d["t1"]), d["xs"], d["ys"])
    if p.N != d["N"]:
        raise ValueError("grid metadata N does not match the data")
    return p
