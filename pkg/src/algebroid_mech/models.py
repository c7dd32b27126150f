"""Example systems (heavy top, rigid body, free particle) and multiplier diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebroid import builtin
from .dynamics import LagrangianSystem
from .paths import EPath, _midpoints, admissibility_residual, time_derivative

__all__ = [
    "HeavyTopParams",
    "MultiplierState",
    "AbnormalReport",
    "heavy_top_system",
    "rigid_body_system",
    "free_particle_system",
    "heavy_top_invariants",
    "euler_top_residual",
    "abnormal_check",
    "normal_multiplier_gap",
    "normal_multiplier_gap_grid",
    "PRESETS",
]


def _num(v: float) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class HeavyTopParams:
    inertia: tuple[float, float, float] = (1.0, 1.0, 2.0)
    e: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        I = np.asarray(self.inertia, dtype=float)
        e = np.asarray(self.e, dtype=float)
        if I.shape != (3,) or np.any(I <= 0):
            raise ValueError("inertia must be three positive numbers")
        if e.shape != (3,) or abs(np.linalg.norm(e) - 1.0) > 1e-12:
            raise ValueError("symmetry axis e must be a unit 3-vector")
        object.__setattr__(self, "inertia", tuple(float(v) for v in I))
        object.__setattr__(self, "e", tuple(float(v) for v in e))

    @property
    def I(self) -> np.ndarray:
        return np.diag(self.inertia)


@dataclass
class MultiplierState:
    p: np.ndarray
    p0: float

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p0 == 0 and not np.any(self.p):
            raise ValueError("a multiplier state cannot have p0 = 0 and p = 0")


def _kinetic(inertia, names) -> str:
    return " + ".join(f"{_num(I)}*{v}^2" for I, v in zip(inertia, names))


def heavy_top_system(params: HeavyTopParams = HeavyTopParams()) -> LagrangianSystem:
    """L(gamma, omega) = 1/2 omega . I omega - gamma . e on the so3_r3 algebroid."""
    A = builtin("so3_r3")
    potential = [f"{_num(ek)}*x{k + 1}" for k, ek in enumerate(params.e) if ek != 0.0]
    L = f"0.5*({_kinetic(params.inertia, ['y1', 'y2', 'y3'])})"
    if potential:
        L += " - (" + " + ".join(potential) + ")"
    return LagrangianSystem(A, L, name="heavy_top")


def rigid_body_system(inertia=(1.0, 2.0, 3.0)) -> LagrangianSystem:
    """Free rigid body on so(3): L(omega) = 1/2 omega . I omega."""
    A = builtin("so3")
    return LagrangianSystem(A, f"0.5*({_kinetic(inertia, ['y1', 'y2', 'y3'])})", name="rigid_body")


def free_particle_system(n: int = 2) -> LagrangianSystem:
    A = builtin("tangent", n=n)
    return LagrangianSystem(A, "0.5*(" + " + ".join(f"y{a + 1}^2" for a in range(n)) + ")", name="free_particle")


PRESETS = {
    "heavy_top": heavy_top_system,
    "rigid_body": rigid_body_system,
    "free_particle": free_particle_system,
}


def heavy_top_invariants(params: HeavyTopParams, p: EPath) -> dict[str, np.ndarray]:
    """|gamma|^2, energy and gamma . I omega at every node."""
    I = np.asarray(params.inertia)
    e = np.asarray(params.e)
    g, w = p.xs, p.ys
    return {
        "gamma_norm2": np.einsum("pi,pi->p", g, g),
        "energy": 0.5 * np.einsum("pi,i,pi->p", w, I, w) + g @ e,
        "gamma_dot_Iomega": np.einsum("pi,i,pi->p", g, I, w),
    }


def euler_top_residual(params: HeavyTopParams, p: EPath) -> np.ndarray:
    """Nodewise I domega/dt + omega x I omega - gamma x e, with the grid stencils."""
    I = np.asarray(params.inertia)
    e = np.asarray(params.e)
    w = p.ys
    Iw = w * I
    return time_derivative(Iw, p.h) + np.cross(w, Iw) - np.cross(p.xs, e)


@dataclass
class AbnormalReport:
    alpha: float
    max_gap: float  # max |p(t) - alpha gamma(t)|
    max_cross: float  # max |p(t) x gamma(t)|
    admissibility: float
    p: np.ndarray

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "max_gap": self.max_gap,
            "max_cross": self.max_cross,
            "admissibility": self.admissibility,
        }


def abnormal_check(path: EPath, alpha: float, interpolation: str = "cubic") -> AbnormalReport:
    """Integrate dp/dt = -omega x p from p(t0) = alpha gamma(t0) along the samples.

    omega between nodes comes from ``interpolation``: "cubic" (4-node, order 4)
    or "linear" (nodal average, order 2).
    """
    if alpha == 0:
        raise ValueError("alpha must be nonzero (p = 0 is not a multiplier)")
    if path.algebroid.n != 3 or path.algebroid.m != 3:
        raise ValueError("abnormal_check needs a path on so3_r3")
    w = path.ys
    if interpolation == "cubic":
        wmid = _midpoints(w)
    elif interpolation == "linear":
        wmid = 0.5 * (w[:-1] + w[1:])
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    h = path.h
    ps = np.empty_like(w)
    ps[0] = alpha * path.xs[0]
    f = lambda om, q: -np.cross(om, q)
    for k in range(path.N):
        q = ps[k]
        k1 = f(w[k], q)
        k2 = f(wmid[k], q + 0.5 * h * k1)
        k3 = f(wmid[k], q + 0.5 * h * k2)
        k4 = f(w[k + 1], q + h * k3)
        ps[k + 1] = q + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    gap = np.linalg.norm(ps - alpha * path.xs, axis=1).max()
    cross = np.linalg.norm(np.cross(ps, path.xs), axis=1).max()
    adm, _ = admissibility_residual(path)
    return AbnormalReport(float(alpha), float(gap), float(cross), adm, ps)


def _unit(gamma) -> np.ndarray:
    g = np.asarray(gamma, dtype=float)
    if abs(np.linalg.norm(g) - 1.0) > 1e-9:
        raise ValueError("gamma must be a unit vector (|gamma| = 1 within 1e-9)")
    return g


def normal_multiplier_gap(params: HeavyTopParams, gamma, omega) -> float:
    """min over p orthogonal to gamma of |p x gamma - I omega|, in closed form.

    p -> p x gamma maps the plane orthogonal to gamma isometrically onto
    itself, so only the component of I omega along gamma is unmatched.
    """
    g = _unit(gamma)
    Iw = np.asarray(params.inertia) * np.asarray(omega, dtype=float)
    return float(abs(Iw @ g))


def normal_multiplier_gap_grid(
    params: HeavyTopParams, gamma, omega, points: int = 41, levels: int = 30
) -> float:
    """Same minimum by brute force: nested grid search over p = u b1 + v b2."""
    g = _unit(gamma)
    Iw = np.asarray(params.inertia) * np.asarray(omega, dtype=float)
    # orthonormal basis of the plane orthogonal to gamma
    trial = np.eye(3)[np.argmin(np.abs(g))]
    b1 = np.cross(g, trial)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(g, b1)
    c1, c2 = np.cross(b1, g), np.cross(b2, g)

    center = np.zeros(2)
    half = np.linalg.norm(Iw) + 1.0
    best = np.inf
    for _ in range(levels):
        u = np.linspace(center[0] - half, center[0] + half, points)
        v = np.linspace(center[1] - half, center[1] + half, points)
        U, V = np.meshgrid(u, v, indexing="ij")
        R = U[..., None] * c1 + V[..., None] * c2 - Iw
        F = np.linalg.norm(R, axis=-1)
        i, j = np.unravel_index(np.argmin(F), F.shape)
        best = min(best, float(F[i, j]))
        center = np.array([u[i], v[j]])
        half *= 4.0 / (points - 1)
    return best


# --------------------------------------------------------------------------
# Free rigid body in the Euler-angle chart (reduction demo)
# --------------------------------------------------------------------------

EULER_X0 = (0.3, 1.5707963267948966, 0.5)
EULER_OMEGA0 = (0.3, 0.2, 0.1)


def euler_rigid_body_system(inertia=(1.0, 2.0, 3.0)) -> LagrangianSystem:
    """L(x, xdot) = 1/2 (W xdot) . I (W xdot) on the tangent bundle of the Euler chart."""
    from .morphism import EULER_W

    A = builtin("euler_chart_so3")
    omega = [
        "(" + " + ".join(f"{w}*y{j + 1}" for j, w in enumerate(row) if w != "0") + ")" for row in EULER_W
    ]
    L = "0.5*(" + " + ".join(f"{_num(I)}*{w}^2" for I, w in zip(inertia, omega)) + ")"
    return LagrangianSystem(A, L, name="euler_rigid_body")


def free_rigid_body_demo(inertia=(1.0, 2.0, 3.0), x0=None, omega0=None, t1: float = 5.0, N: int = 5000):
    """Integrate the rigid body in Euler angles, push to so(3), compare with Euler's equations."""
    from .morphism import euler_kinematic_matrix, euler_to_so3, reduction_check

    x0 = np.asarray(EULER_X0 if x0 is None else x0, dtype=float)
    omega0 = np.asarray(EULER_OMEGA0 if omega0 is None else omega0, dtype=float)
    y0 = np.linalg.solve(euler_kinematic_matrix(x0), omega0)
    M = euler_to_so3()
    return reduction_check(
        M, euler_rigid_body_system(inertia), rigid_body_system(inertia), x0, y0, (0.0, t1), N
    )
