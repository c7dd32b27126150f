"""Lie algebroid morphisms in coordinates, and reduction/reconstruction checks.

A morphism is a vector bundle map (x, y) -> (phi(x), Phi(x) y) given by
expressions in the source base variables.  Two residuals are reported for the
bracket condition:

* ``display``: rho^i_n dPhi^a_m/dx^i - rho^i_m dPhi^a_n/dx^i - C'^a_bc Phi^b_m Phi^c_n
* ``general``: the same plus Phi^a_l C^l_mn (source structure functions).

They coincide whenever the source structure functions vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebroid import LieAlgebroid, builtin, sample_points, x_names
from .dynamics import LagrangianSystem, el_residual, integrate
from .expr import BinOp, Expression, Num, jet_batch, parse
from .paths import EPath, PathSection, VariationField, time_derivative, xi

__all__ = [
    "AlgebroidMorphism",
    "MorphismResidual",
    "ReductionReport",
    "ReconstructionReport",
    "admissibility_residual_m",
    "morphism_residual_m",
    "push_path",
    "push_section",
    "xi_compat_residual",
    "compose",
    "identity",
    "euler_to_so3",
    "euler_kinematic_matrix",
    "fiber_singular_values",
    "lagrangian_compatibility",
    "reduction_check",
    "reconstruction_check",
    "stages_consistency",
]


class AlgebroidMorphism:
    """Bundle map between two algebroids; ``Phi`` is m' x m, ``phi`` has n' entries."""

    def __init__(
        self,
        source: LieAlgebroid,
        target: LieAlgebroid,
        phi: Sequence[Expression | str],
        Phi: Sequence[Sequence[Expression | str]],
        name: str = "custom",
        validate: bool = True,
        domain: Callable[[np.ndarray], bool] | None = None,
        sample_box: tuple[np.ndarray, np.ndarray] | None = None,
    ):
        xv = source.xvars
        if len(phi) != target.n:
            raise ValueError(f"phi must have {target.n} components")
        if len(Phi) != target.m or any(len(r) != source.m for r in Phi):
            raise ValueError(f"Phi must be {target.m}x{source.m}")
        conv = lambda e: e if isinstance(e, Expression) else parse(str(e), xv)
        self.source = source
        self.target = target
        self.phi = tuple(conv(e) for e in phi)
        self.Phi = tuple(tuple(conv(e) for e in row) for row in Phi)
        for e in self.phi + tuple(e for r in self.Phi for e in r):
            if e.variables != xv:
                raise ValueError("morphism expressions must be in the source base variables")
        self.name = name
        self.domain = domain
        self.sample_box = sample_box
        self.stages: tuple[AlgebroidMorphism, ...] = (self,)
        if validate:
            res = admissibility_residual_m(self, self.sample())
            if res > 1e-10:
                raise ValueError(f"morphism {name!r} is not admissible (residual {res:.3e})")

    def __repr__(self) -> str:
        return f"AlgebroidMorphism({self.name!r}: {self.source.name} -> {self.target.name})"

    def sample(self, count: int = 20, seed: int = 0) -> np.ndarray:
        if self.sample_box is None:
            return sample_points(self.source.n, count, seed)
        lo, hi = self.sample_box
        return np.random.default_rng(seed).uniform(lo, hi, size=(count, self.source.n))

    # -- evaluation -----------------------------------------------------------
    def base_map(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(xs)
        return np.stack([e(xs) for e in self.phi], axis=-1)

    def fiber_matrix(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(xs)
        return np.stack([np.stack([e(xs) for e in row], axis=-1) for row in self.Phi], axis=-2)

    def jets(self, xs: np.ndarray):
        """phi, dphi (P,n',n), Phi (P,m',m), dPhi (P,m',m,n) with exact derivatives."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        P, n = xs.shape
        seeds = np.eye(n)
        phi = np.empty((P, self.target.n))
        dphi = np.empty((P, self.target.n, n))
        for k, e in enumerate(self.phi):
            j = jet_batch(e, xs, seeds, order=1)
            phi[:, k], dphi[:, k] = j.v, j.g
        Phi = np.empty((P, self.target.m, self.source.m))
        dPhi = np.empty((P, self.target.m, self.source.m, n))
        for a, row in enumerate(self.Phi):
            for b, e in enumerate(row):
                j = jet_batch(e, xs, seeds, order=1)
                Phi[:, a, b], dPhi[:, a, b] = j.v, j.g
        return phi, dphi, Phi, dPhi

    def to_json(self) -> dict:
        return {
            "source": self.source.name,
            "target": self.target.name,
            "phi": [e.to_string() for e in self.phi],
            "Phi": [[e.to_string() for e in row] for row in self.Phi],
        }


def admissibility_residual_m(M: AlgebroidMorphism, points) -> float:
    """max |rho'^k_a(phi(x)) Phi^a_b(x) - dphi^k/dx^i rho^i_b(x)| (anchors commute)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    phi, dphi, Phi, _ = M.jets(pts)
    lhs = np.einsum("pka,pab->pkb", M.target.anchor(phi), Phi)
    rhs = np.einsum("pki,pib->pkb", dphi, M.source.anchor(pts))
    return float(np.abs(lhs - rhs).max(initial=0.0))


@dataclass
class MorphismResidual:
    display: float
    general: float

    def to_json(self) -> dict:
        return {"display": self.display, "general": self.general}


def _bracket_defect(M: AlgebroidMorphism, pts: np.ndarray, general: bool) -> np.ndarray:
    """Tensor D[p, a, mu, nu] of the bracket condition at each point."""
    phi, _, Phi, dPhi = M.jets(pts)
    rho = M.source.anchor(pts)
    # T[p, a, mu, nu] = rho^i_nu dPhi^a_mu / dx^i
    T = np.einsum("pin,pami->pamn", rho, dPhi)
    Ct = M.target.structure(phi)
    D = T - np.swapaxes(T, 2, 3) - np.einsum("pabc,pbm,pcn->pamn", Ct, Phi, Phi)
    if general:
        D = D + np.einsum("pal,plmn->pamn", Phi, M.source.structure(pts))
    return D


def morphism_residual_m(M: AlgebroidMorphism, points) -> MorphismResidual:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = np.abs(_bracket_defect(M, pts, general=False)).max(initial=0.0)
    g = np.abs(_bracket_defect(M, pts, general=True)).max(initial=0.0)
    return MorphismResidual(float(d), float(g))


def push_path(M: AlgebroidMorphism, p: EPath, use_stages: bool = True) -> EPath:
    """x'(t) = phi(x(t)), y'(t) = Phi(x(t)) y(t).

    Composites apply their stages in order unless ``use_stages`` is False, in
    which case the substituted expressions are evaluated directly.
    """
    if use_stages and len(M.stages) > 1:
        for stage in M.stages:
            p = push_path(stage, p)
        return p
    xs = M.base_map(p.xs)
    ys = np.einsum("pab,pb->pa", M.fiber_matrix(p.xs), p.ys)
    return EPath(M.target, p.t0, p.t1, xs, ys)


def push_section(M: AlgebroidMorphism, s: PathSection, pushed: EPath | None = None) -> PathSection:
    pushed = push_path(M, s.path) if pushed is None else pushed
    sig = np.einsum("pab,pb->pa", M.fiber_matrix(s.path.xs), s.sigmas)
    return PathSection(pushed, sig)


def xi_compat_residual(M: AlgebroidMorphism, p: EPath, s: PathSection, per_node: bool = False):
    """Gap between the tangent map applied to Xi_a(sigma) and Xi_{Phi a}(Phi sigma)."""
    v: VariationField = xi(p, s)
    _, dphi, Phi, dPhi = M.jets(p.xs)
    pushed_dx = np.einsum("pki,pi->pk", dphi, v.dx)
    pushed_dy = np.einsum("pabi,pi,pb->pa", dPhi, v.dx, p.ys) + np.einsum("pab,pb->pa", Phi, v.dy)
    q = push_path(M, p)
    w = xi(q, push_section(M, s, q))
    gap = np.maximum(np.abs(pushed_dx - w.dx).max(axis=1, initial=0.0), np.abs(pushed_dy - w.dy).max(axis=1))
    return (float(gap.max()), gap) if per_node else float(gap.max())


def compose(M2: AlgebroidMorphism, M1: AlgebroidMorphism) -> AlgebroidMorphism:
    """M2 after M1, with expressions substituted and products expanded."""
    if M1.target is not M2.source and (M1.target.n, M1.target.m) != (M2.source.n, M2.source.m):
        raise ValueError("morphisms are not composable")
    phi = tuple(e.substitute(M1.phi) for e in M2.phi)
    outer = [[e.substitute(M1.phi) for e in row] for row in M2.Phi]
    Phi = []
    for a in range(M2.target.m):
        row = []
        for b in range(M1.source.m):
            node = Num(0.0)
            for k in range(M1.target.m):
                term = BinOp("*", outer[a][k].root, M1.Phi[k][b].root)
                node = term if k == 0 else BinOp("+", node, term)
            row.append(Expression(node, M1.source.xvars))
        Phi.append(row)
    out = AlgebroidMorphism(
        M1.source,
        M2.target,
        phi,
        Phi,
        name=f"{M2.name}o{M1.name}",
        validate=False,
        domain=M1.domain,
        sample_box=M1.sample_box,
    )
    out.stages = M1.stages + M2.stages
    return out


def identity(A: LieAlgebroid) -> AlgebroidMorphism:
    phi = list(A.xvars)
    Phi = [["1" if a == b else "0" for b in range(A.m)] for a in range(A.m)]
    return AlgebroidMorphism(A, A, phi, Phi, name=f"id_{A.name}")


# ZXZ Euler angles (x1, x2, x3) = (phi, theta, psi); R = Rz(x1) Rx(x2) Rz(x3).
# Body angular velocity omega = W(x) xdot.
EULER_W = (
    ("sin(x2)*sin(x3)", "cos(x3)", "0"),
    ("sin(x2)*cos(x3)", "-sin(x3)", "0"),
    ("cos(x2)", "0", "1"),
)

THETA_MIN = 0.2


def _euler_domain(x: np.ndarray) -> bool:
    return THETA_MIN <= x[1] <= np.pi - THETA_MIN


def euler_kinematic_matrix(x) -> np.ndarray:
    _, th, ps = np.asarray(x, dtype=float)
    return np.array(
        [
            [np.sin(th) * np.sin(ps), np.cos(ps), 0.0],
            [np.sin(th) * np.cos(ps), -np.sin(ps), 0.0],
            [np.cos(th), 0.0, 1.0],
        ]
    )


def euler_to_so3(W: Sequence[Sequence[str]] = EULER_W, validate: bool = True) -> AlgebroidMorphism:
    """Left trivialization T SO(3) -> so(3) in the ZXZ Euler chart; the base collapses to a point."""
    src = builtin("euler_chart_so3")
    tgt = builtin("so3")
    box = (np.array([-np.pi, THETA_MIN, -np.pi]), np.array([np.pi, np.pi - THETA_MIN, np.pi]))
    return AlgebroidMorphism(
        src, tgt, ["0"], W, name="euler_to_so3", validate=validate, domain=_euler_domain, sample_box=box
    )


def fiber_singular_values(M: AlgebroidMorphism, points) -> tuple[float, float]:
    """Smallest and largest singular value of Phi(x) over the points."""
    sv = np.linalg.svd(M.fiber_matrix(np.atleast_2d(points)), compute_uv=False)
    return float(sv.min()), float(sv.max())


def lagrangian_compatibility(
    M: AlgebroidMorphism, L_source: LagrangianSystem, L_target: LagrangianSystem, count: int = 50, seed: int = 0
) -> float:
    """max |L(x, y) - L'(phi(x), Phi(x) y)| over sampled points."""
    xs = M.sample(count, seed)
    ys = np.random.default_rng(seed + 1).uniform(-2.0, 2.0, size=(count, M.source.m))
    lhs = L_source.value(xs, ys)
    y2 = np.einsum("pab,pb->pa", M.fiber_matrix(xs), ys)
    rhs = L_target.value(M.base_map(xs), y2)
    return float(np.abs(lhs - rhs).max())


def _require_compatible(M, L_source, L_target, tol: float = 1e-10) -> float:
    gap = lagrangian_compatibility(M, L_source, L_target)
    if gap > tol:
        raise ValueError(f"Lagrangians are not compatible under {M.name} (gap {gap:.3e})")
    return gap


@dataclass
class ReductionReport:
    compatibility_gap: float
    target_el_residual: float
    reduction_gap: float | None  # sup |pushed - directly integrated| (None if skipped)
    action_gap: float
    min_singular_value: float
    source_path: EPath = field(repr=False)
    pushed_path: EPath = field(repr=False)
    direct_path: EPath | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "compatibility_gap": self.compatibility_gap,
            "target_el_residual": self.target_el_residual,
            "reduction_gap": self.reduction_gap,
            "action_gap": self.action_gap,
            "min_singular_value": self.min_singular_value,
            "fiberwise_surjective": self.min_singular_value > 1e-8,
        }


def reduction_check(
    M: AlgebroidMorphism,
    L_source: LagrangianSystem,
    L_target: LagrangianSystem,
    x0,
    y0,
    tspan: tuple[float, float],
    N: int,
    direct: bool = True,
) -> ReductionReport:
    """Integrate the source system, push the solution, compare with the target dynamics."""
    from .variation import action

    compat = _require_compatible(M, L_source, L_target)
    t0, t1 = tspan
    src = integrate(L_source, x0, y0, t0, t1, N, domain=M.domain)
    pushed = push_path(M, src)
    smin, _ = fiber_singular_values(M, src.xs)
    target_res = el_residual(L_target, pushed).max
    gap = None
    direct_path = None
    if direct:
        direct_path = integrate(L_target, pushed.xs[0], pushed.ys[0], t0, t1, N)
        gap = float(max(np.abs(direct_path.xs - pushed.xs).max(), np.abs(direct_path.ys - pushed.ys).max()))
    action_gap = abs(action(L_target, pushed) - action(L_source, src)) if N % 2 == 0 else float("nan")
    return ReductionReport(compat, target_res, gap, action_gap, smin, src, pushed, direct_path)


@dataclass
class ReconstructionReport:
    target_residual: float
    source_residual: float
    tol_target: float
    tol_source: float
    max_fiber_norm: float
    min_singular_value: float

    @property
    def target_is_solution(self) -> bool:
        return self.target_residual <= self.tol_target

    @property
    def source_is_solution(self) -> bool:
        return self.source_residual <= self.tol_source

    @property
    def consistent(self) -> bool:
        """The implication 'push solves the target => path solves the source' holds."""
        return (not self.target_is_solution) or self.source_is_solution

    def to_json(self) -> dict:
        return {
            "target_residual": self.target_residual,
            "source_residual": self.source_residual,
            "tol_target": self.tol_target,
            "tol_source": self.tol_source,
            "max_fiber_norm": self.max_fiber_norm,
            "min_singular_value": self.min_singular_value,
            "target_is_solution": self.target_is_solution,
            "source_is_solution": self.source_is_solution,
            "consistent": self.consistent,
        }


def reconstruction_check(
    M: AlgebroidMorphism,
    L_source: LagrangianSystem,
    L_target: LagrangianSystem,
    p_source: EPath,
    tol_target: float = 1e-4,
) -> ReconstructionReport:
    """Certify a source path through its image.

    With L = L' o Phi the source residual is Phi^T applied to the target
    residual, so the source tolerance is scaled by the largest fiber norm of
    Phi along the path (plus one unit of slack for the grid stencils).
    """
    _require_compatible(M, L_source, L_target)
    q = push_path(M, p_source)
    tr = el_residual(L_target, q).max
    sr = el_residual(L_source, p_source).max
    smin, smax = fiber_singular_values(M, p_source.xs)
    tol_source = (1.0 + smax) * tol_target
    return ReconstructionReport(tr, sr, tol_target, tol_source, smax, smin)


def stages_consistency(M1: AlgebroidMorphism, M2: AlgebroidMorphism, p: EPath) -> float:
    """sup gap between pushing by the composite and pushing stage by stage."""
    single = push_path(compose(M2, M1), p, use_stages=False)
    staged = push_path(M2, push_path(M1, p))
    return float(max(np.abs(single.xs - staged.xs).max(), np.abs(single.ys - staged.ys).max()))
