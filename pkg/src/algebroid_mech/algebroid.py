"""Lie algebroids in a single global chart.

An algebroid of base dimension ``n`` and fiber rank ``m`` is described by its
anchor matrix ``rho[i][a]`` and structure functions ``C[a][b][c]`` (the
coefficient of ``e_a`` in ``[e_b, e_c]``), all expressions in ``x1..xn``.

Sign conventions (pinned by the structure-equation check):

* ``so3`` and ``so3_r3`` use ``C[a][b][c] = eps_abc``, so ``[e1, e2] = e3``.
* ``so3_r3`` has anchor ``rho(x) y = x cross y``; this is the only sign of the
  anchor compatible with ``C = eps`` and gives the heavy-top kinematics
  ``dgamma/dt = gamma cross omega``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .expr import Expression, Jet, jet_batch, parse

__all__ = [
    "LieAlgebroid",
    "StructureReport",
    "anchor_at",
    "structure_at",
    "check_structure_equations",
    "builtin",
    "from_json",
    "sample_points",
    "x_names",
    "y_names",
    "BUILTINS",
]


def x_names(n: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(n))


def y_names(m: int) -> tuple[str, ...]:
    return tuple(f"y{a + 1}" for a in range(m))


def _as_expr(e: Expression | str | float, variables: Sequence[str]) -> Expression:
    if isinstance(e, Expression):
        if e.variables != tuple(variables):
            raise ValueError(f"expression {e} is not over variables {tuple(variables)}")
        return e
    return parse(str(e) if not isinstance(e, str) else e, variables)


class LieAlgebroid:
    """Anchor and structure functions of a Lie algebroid in local coordinates.

    ``C_upper`` maps ``(a, b, c)`` with ``b < c`` (0-based) to an expression;
    missing entries are zero.  The full tensor is materialized with
    ``C[a][c][b] = -C[a][b][c]``, which makes antisymmetry exact.
    """

    def __init__(
        self,
        n: int,
        m: int,
        rho: Sequence[Sequence[Expression | str | float]],
        C_upper: Mapping[tuple[int, int, int], Expression | str | float] | None = None,
        name: str = "custom",
    ):
        if n < 1 or m < 1:
            raise ValueError("need n >= 1 and m >= 1 (use a dummy base coordinate for a point)")
        xv = x_names(n)
        if len(rho) != n or any(len(row) != m for row in rho):
            raise ValueError(f"anchor must be {n}x{m}")
        self.n = n
        self.m = m
        self.name = name
        self.xvars = xv
        self.rho: tuple[tuple[Expression, ...], ...] = tuple(
            tuple(_as_expr(e, xv) for e in row) for row in rho
        )
        upper: dict[tuple[int, int, int], Expression] = {}
        for (a, b, c), e in (C_upper or {}).items():
            if not (0 <= a < m and 0 <= b < c < m):
                raise ValueError(f"structure entry {(a, b, c)} must satisfy b < c within rank {m}")
            upper[(a, b, c)] = _as_expr(e, xv)
        self.C_upper = upper

        self._rho_const = all(e.is_constant for row in self.rho for e in row)
        self._C_const = all(e.is_constant for e in upper.values())
        if self._rho_const:
            self._rho_value = np.array([[e([0.0] * n) for e in row] for row in self.rho])
            self._rho_value.setflags(write=False)
        if self._C_const:
            self._C_value = self._materialize({k: e([0.0] * n) for k, e in upper.items()})
            self._C_value.setflags(write=False)

    def __repr__(self) -> str:
        return f"LieAlgebroid({self.name!r}, n={self.n}, m={self.m})"

    def _materialize(self, upper_vals: Mapping[tuple[int, int, int], Any], batch=()) -> np.ndarray:
        out = np.zeros(tuple(batch) + (self.m, self.m, self.m))
        for (a, b, c), v in upper_vals.items():
            out[..., a, b, c] = v
            out[..., a, c, b] = -out[..., a, b, c]
        return out

    @property
    def variables(self) -> tuple[str, ...]:
        """Coordinate names on the total space: ``x1..xn, y1..ym``."""
        return self.xvars + y_names(self.m)

    # -- evaluation ---------------------------------------------------------
    def anchor(self, x) -> np.ndarray:
        """Anchor matrix at ``x`` (shape (n,)) or at a batch (P, n) -> (P, n, m)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"base point must have {self.n} components")
        if self._rho_const:
            return np.broadcast_to(self._rho_value, x.shape[:-1] + (self.n, self.m)).copy()
        out = np.empty(x.shape[:-1] + (self.n, self.m))
        env = [x[..., i] for i in range(self.n)] if x.ndim > 1 else [float(v) for v in x]
        for i, row in enumerate(self.rho):
            for a, e in enumerate(row):
                out[..., i, a] = e.jet(env)
        if not np.all(np.isfinite(out)):
            from .expr import ExprDomainError

            raise ExprDomainError("non-finite anchor entry")
        return out

    def structure(self, x) -> np.ndarray:
        """Structure tensor ``C[a, b, c]`` at ``x`` or at a batch of points."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"base point must have {self.n} components")
        if self._C_const:
            return np.broadcast_to(self._C_value, x.shape[:-1] + (self.m,) * 3).copy()
        env = [x[..., i] for i in range(self.n)] if x.ndim > 1 else [float(v) for v in x]
        vals = {k: e.jet(env) for k, e in self.C_upper.items()}
        return self._materialize(vals, x.shape[:-1])

    def bracket_term(self, x, u, v) -> np.ndarray:
        """``C(x)(u, v)^a = C^a_bc u^b v^c``, batched over leading axes."""
        C = self.structure(x)
        return np.einsum("...abc,...b,...c->...a", C, u, v)

    # -- exact x-derivatives --------------------------------------------------
    def anchor_jet(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Anchor and its x-gradient at points (P, n): shapes (P,n,m), (P,n,m,n)."""
        P = points.shape[0]
        seeds = np.eye(self.n)
        val = np.empty((P, self.n, self.m))
        grad = np.empty((P, self.n, self.m, self.n))
        for i, row in enumerate(self.rho):
            for a, e in enumerate(row):
                j = jet_batch(e, points, seeds, order=1)
                val[:, i, a] = j.v
                grad[:, i, a, :] = j.g
        return val, grad

    def structure_jet(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Structure tensor and its x-gradient: shapes (P,m,m,m), (P,m,m,m,n)."""
        P = points.shape[0]
        seeds = np.eye(self.n)
        val = np.zeros((P, self.m, self.m, self.m))
        grad = np.zeros((P, self.m, self.m, self.m, self.n))
        for (a, b, c), e in self.C_upper.items():
            j = jet_batch(e, points, seeds, order=1)
            val[:, a, b, c] = j.v
            val[:, a, c, b] = -j.v
            grad[:, a, b, c, :] = j.g
            grad[:, a, c, b, :] = -j.g
        return val, grad

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "m": self.m,
            "rho": [[e.to_string() for e in row] for row in self.rho],
            "C": [
                {"alpha": a + 1, "beta": b + 1, "gamma": c + 1, "expr": e.to_string()}
                for (a, b, c), e in sorted(self.C_upper.items())
            ],
        }


def anchor_at(A: LieAlgebroid, x) -> np.ndarray:
    return A.anchor(x)


def structure_at(A: LieAlgebroid, x) -> np.ndarray:
    return A.structure(x)


@dataclass
class StructureReport:
    residual1: list[float]
    residual2: list[float]
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.max1 <= self.tol and self.max2 <= self.tol

    @property
    def max1(self) -> float:
        return max(self.residual1, default=0.0)

    @property
    def max2(self) -> float:
        return max(self.residual2, default=0.0)

    def to_json(self) -> dict:
        return {
            "residual1_max": self.max1,
            "residual2_max": self.max2,
            "points": len(self.residual1),
            "tol": self.tol,
            "pass": self.passed,
        }


def check_structure_equations(
    A: LieAlgebroid, points: Sequence[Sequence[float]] | np.ndarray, tol: float = 1e-10
) -> StructureReport:
    """Residuals of the two structure equations at each point.

    residual1 = max |rho^j_a d_j rho^i_b - rho^j_b d_j rho^i_a - rho^i_c C^c_ab|
    residual2 = max over the cyclic (Jacobi) combination with nu free.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("need at least one sample point")
    rho, drho = A.anchor_jet(pts)  # drho[p, i, a, j] = d_j rho^i_a
    C, dC = A.structure_jet(pts)  # dC[p, nu, b, c, i]

    # Lie bracket of anchor fields vs anchor of the bracket
    t1 = np.einsum("pja,pibj->piab", rho, drho)
    r1 = t1 - np.swapaxes(t1, 2, 3) - np.einsum("pic,pcab->piab", rho, C)

    # rho^i_a d_i C^nu_bc, then cyclic sum over (a, b, c)
    D = np.einsum("pia,pnbci->pnabc", rho, dC)
    # Q[nu, a, b, c] = C^mu_bc C^nu_a mu
    Q = np.einsum("pmbc,pnam->pnabc", C, C)
    cyc = lambda T: T + np.transpose(T, (0, 1, 3, 4, 2)) + np.transpose(T, (0, 1, 4, 2, 3))
    r2 = cyc(D) + cyc(Q)

    res1 = np.abs(r1).reshape(len(pts), -1).max(axis=1) if r1.size else np.zeros(len(pts))
    res2 = np.abs(r2).reshape(len(pts), -1).max(axis=1)
    return StructureReport([float(v) for v in res1], [float(v) for v in res2], tol)


def sample_points(n: int, count: int, seed: int = 0, low: float = -2.0, high: float = 2.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=(count, n))


# --------------------------------------------------------------------------
# Built-in algebroids
# --------------------------------------------------------------------------

_LEVI_CIVITA = {(0, 1, 2): "1", (1, 2, 0): "1", (2, 0, 1): "1"}


def _eps_upper() -> dict[tuple[int, int, int], str]:
    # C^a_bc = eps_abc, stored for b < c
    out = {}
    for a, b, c in itertools.permutations(range(3)):
        if b < c:
            sign = 1 if (a, b, c) in _LEVI_CIVITA else -1
            out[(a, b, c)] = str(sign)
    return out


def tangent(n: int) -> LieAlgebroid:
    rho = [["1" if i == a else "0" for a in range(n)] for i in range(n)]
    return LieAlgebroid(n, n, rho, {}, name=f"tangent({n})")


def lie_algebra(m: int, constants: Mapping[tuple[int, int, int], float], name: str = "lie_algebra") -> LieAlgebroid:
    """A Lie algebra as an algebroid over a single dummy base coordinate."""
    upper: dict[tuple[int, int, int], str] = {}
    for (a, b, c), v in constants.items():
        if b == c:
            if v != 0:
                raise ValueError("structure constants must be antisymmetric")
            continue
        if b > c:
            b, c, v = c, b, -v
        upper[(a, b, c)] = repr(float(v))
    return LieAlgebroid(1, m, [["0"] * m], upper, name=name)


def so3() -> LieAlgebroid:
    return lie_algebra(3, {k: float(v) for k, v in _eps_upper().items()}, name="so3")


def so3_r3() -> LieAlgebroid:
    # rho(x) y = x cross y
    rho = [
        ["0", "-x3", "x2"],
        ["x3", "0", "-x1"],
        ["-x2", "x1", "0"],
    ]
    return LieAlgebroid(3, 3, rho, _eps_upper(), name="so3_r3")


def euler_chart_so3() -> LieAlgebroid:
    """Tangent algebroid over the Euler-angle chart (phi, theta, psi), ZXZ."""
    A = tangent(3)
    A.name = "euler_chart_so3"
    return A


BUILTINS = ("tangent", "lie_algebra", "so3", "so3_r3", "euler_chart_so3")


def builtin(name: str, **params) -> LieAlgebroid:
    """Construct a built-in algebroid by name.

    ``tangent`` takes ``n``; ``lie_algebra`` takes ``m`` and ``constants``
    (mapping of 0-based ``(a, b, c)`` to ``C^a_bc``).
    """
    if name == "tangent":
        return tangent(int(params.get("n", 3)))
    if name == "lie_algebra":
        return lie_algebra(int(params["m"]), params["constants"])
    if name == "so3":
        return so3()
    if name == "so3_r3":
        return so3_r3()
    if name == "euler_chart_so3":
        return euler_chart_so3()
    raise KeyError(f"unknown builtin algebroid {name!r}; expected one of {BUILTINS}")


def from_json(desc: Mapping[str, Any]) -> LieAlgebroid:
    """Build an algebroid from the custom JSON schema (1-based indices, beta < gamma)."""
    try:
        n, m = int(desc["n"]), int(desc["m"])
        rho = desc["rho"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"custom algebroid needs integer 'n', 'm' and a 'rho' matrix: {exc}") from exc
    upper = {}
    for entry in desc.get("C", []):
        a, b, c = int(entry["alpha"]) - 1, int(entry["beta"]) - 1, int(entry["gamma"]) - 1
        if not b < c:
            raise ValueError(f"structure entry {entry} must have beta < gamma")
        if (a, b, c) in upper:
            raise ValueError(f"duplicate structure entry {entry}")
        upper[(a, b, c)] = str(entry["expr"])
    return LieAlgebroid(n, m, rho, upper, name=str(desc.get("name", "custom")))
