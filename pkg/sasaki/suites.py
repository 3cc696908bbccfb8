"""Verification suites run by ``verify``.

Each suite maps a model and a seeded sample to one number, its max defect, compared against
the suite tolerance. Equivalence suites report the number of mismatched verdicts instead, with
tolerance 0; a tolerance override leaves that 0 alone and sets the threshold their verdicts use.
Suites that only make sense on some models declare it through ``applies``.
"""
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, List, Optional

import torch
import tqdm
from torch.func import jacfwd

from sasaki.bundle import (
    SplitVector,
    TangentBundlePoint,
    TMVectorField,
    TTVector,
    assemble,
    bracket_tm,
    bundle_jet,
    canonical_field,
    complete_lift,
    complete_lift_field,
    curvature_norm_sq,
    curvature_op_R,
    d_star,
    divergence_tm,
    extension_identity_defect,
    fibre_preserving_defect,
    flow_lie_derivative,
    horizontal_lift,
    horizontal_lift_field,
    lie_B_matrix,
    lie_Bt_matrix,
    lie_metric_matrix,
    lie_omega_matrix,
    lie_theta_covector,
    mirror_apply,
    mirror_field,
    mirror_matrix,
    nabla_star,
    nabla_star_matrix,
    omega,
    sample_bundle_points,
    sasaki_connection_matrix,
    sasaki_inner,
    sasaki_matrix,
    sasaki_scalar,
    split,
    spray_field,
    tanno_field,
    theta,
    vertical_lift,
    vertical_lift_field,
)
from sasaki.classifiers import (
    VERDICT_TOL,
    adjoint_mirror_defect,
    affine_defect,
    almost_analytic_defect,
    harmonic_map_defect,
    killing_defect_tm,
    mirror_defect,
    mirror_fit,
    probe_vectors,
    strictly_contact_defect,
    symplectic_defect,
    totally_geodesic_defect,
)
from sasaki.fields import field_library, form_library, make_field, tm_field_library
from sasaki.forms import (
    codifferential_base,
    codifferential_tm,
    exterior_derivative_base,
    exterior_derivative_tm,
    extension_chart,
    extension_connection,
    flat_base,
    flat_tm,
    lift_one_form,
    lifted_form,
    sharp_base,
)
from sasaki.geodesics import (
    GeodesicState,
    base_geodesic_defect,
    integrate,
    integrate_base,
    sasaki_energy,
)
from sasaki.geometry import (
    BaseVectorField,
    ChartedManifold,
    christoffel,
    christoffel_symbols,
    covariant_derivative,
    covariant_jet,
    curvature,
    curvature_annihilator_defect,
    divergence_base,
    killing_defect_base,
    metric_jet,
    riemann_tensor,
    sample_points,
)
from sasaki.models import make_model
from sasaki.utils import DTYPE, central_difference, make_generator, max_abs

__all__ = [
    "TOL_EXACT",
    "TOL_BUNDLE",
    "TOL_FD",
    "TOL_ODE",
    "Suite",
    "SuiteContext",
    "SuiteReport",
    "SUITES",
    "suite",
    "run_suites",
]

TOL_EXACT = 1e-9
TOL_BUNDLE = 1e-8
TOL_FD = 1e-5
TOL_ODE = 1e-6
HEAVY_SAMPLES = 4
FLOW_TRIPLES = 16


@dataclass
class SuiteContext:
    M: ChartedManifold
    seed: int
    samples: int
    verdict_tol: float = VERDICT_TOL

    @cached_property
    def points(self) -> list:
        return sample_points(self.M, self.samples, make_generator(self.seed))

    @cached_property
    def bundle_points(self) -> list:
        return sample_bundle_points(self.M, self.samples, make_generator(self.seed))

    @property
    def heavy_points(self) -> list:
        return self.bundle_points[: min(self.samples, HEAVY_SAMPLES)]

    @cached_property
    def jets(self) -> list:
        """Bundle jets of the heavy points, built once per context."""
        return [bundle_jet(self.M, u) for u in self.heavy_points]

    @cached_property
    def probes(self) -> list:
        generator = self.generator()
        return [probe_vectors(self.M, u, generator, jet) for u, jet in zip(self.heavy_points, self.jets)]

    def generator(self, offset: int = 0) -> torch.Generator:
        return make_generator(self.seed + 1 + offset)

    def randn(self, generator: torch.Generator, *shape) -> torch.Tensor:
        return torch.randn(*shape, generator=generator, dtype=DTYPE)


@dataclass(frozen=True)
class Suite:
    name: str
    check: Callable[[SuiteContext], float]
    tol: float
    applies: Callable[[ChartedManifold], bool]

    @property
    def exact(self) -> bool:
        """Mismatch counts and distances must be exactly 0 whatever tolerance is requested."""
        return self.tol == 0.0

    def run(self, M: ChartedManifold, seed: int, samples: int, tol: Optional[float] = None) -> "SuiteReport":
        """An override replaces the tolerance of defect suites; exact suites pass it to their verdicts."""
        if tol is not None and self.exact:
            ctx, suite_tol = SuiteContext(M, seed, samples, verdict_tol=tol), self.tol
        else:
            ctx, suite_tol = SuiteContext(M, seed, samples), self.tol if tol is None else tol
        return SuiteReport(self.name, float(self.check(ctx)), suite_tol)


@dataclass
class SuiteReport:
    name: str
    max_defect: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_defect <= self.tol

    def as_dict(self) -> dict:
        return {"name": self.name, "max_defect": self.max_defect, "tol": self.tol, "pass": self.passed}


SUITES: List[Suite] = []


def _always(M: ChartedManifold) -> bool:
    return True


def suite(name: str, tol: float, applies: Callable[[ChartedManifold], bool] = _always):
    def register(fn: Callable[[SuiteContext], float]):
        assert all(s.name != name for s in SUITES), f"Suite {name} already registered"
        SUITES.append(Suite(name, fn, tol, applies))
        return fn

    return register


def _family(M: ChartedManifold) -> str:
    return M.name.split(":")[0]


def _known_curvature(M: ChartedManifold) -> bool:
    return M.sectional_curvature is not None


def _curved(M: ChartedManifold) -> bool:
    return _known_curvature(M) and not M.is_flat


def _base_fields(M: ChartedManifold) -> list:
    return [make_field(M, spec, kind="base") for spec in field_library(M)]


def _constant_split_field(h: torch.Tensor, v: torch.Tensor, M: ChartedManifold) -> TMVectorField:
    return TMVectorField(lambda u: assemble(M, u, SplitVector(h, v)), name="split-constant")


def _constant_chart_fields(n: int) -> list:
    return [TMVectorField(lambda u, e=e: TTVector.from_stacked(e)) for e in torch.eye(n, dtype=DTYPE)]


def _constant_base_field(value: torch.Tensor) -> BaseVectorField:
    return BaseVectorField(lambda x: torch.zeros_like(x) + value, name="constant")


def _sasaki_norm(M: ChartedManifold, u: TangentBundlePoint, W: TTVector) -> float:
    return math.sqrt(max(sasaki_inner(M, u, W, W).item(), 0.0))


def _base_norm(M: ChartedManifold, x: torch.Tensor, a: torch.Tensor) -> float:
    return math.sqrt(max((a @ M.metric(x) @ a).item(), 0.0))


def _max_over(points, fn) -> float:
    return max((fn(p) for p in points), default=0.0)


# ---------------------------------------------------------------- base geometry


@suite("base-identities", TOL_EXACT)
def _base_identities(ctx: SuiteContext) -> float:
    defect = 0.0
    for x in ctx.points:
        jet = metric_jet(ctx.M, x)
        gamma, _ = christoffel(ctx.M, x)
        curv = curvature(ctx.M, x)
        riem, low = curv.riem, curv.riem_low
        nabla_g = (
            jet.dg
            - torch.einsum("lki,lj->ijk", gamma, jet.g)
            - torch.einsum("lkj,il->ijk", gamma, jet.g)
        )
        bianchi = riem + torch.einsum("lijk->lkij", riem) + torch.einsum("ljki->lkij", riem)
        defect = max(
            defect,
            max_abs(jet.g @ jet.ginv - torch.eye(ctx.M.dim, dtype=DTYPE)),
            max_abs(jet.dg - jet.dg.transpose(0, 1)),
            max_abs(jet.d2g - jet.d2g.transpose(2, 3)),
            max_abs(gamma - gamma.transpose(1, 2)),
            max_abs(nabla_g),
            max_abs(low + low.transpose(2, 3)),
            max_abs(low + low.transpose(0, 1)),
            max_abs(bianchi),
        )
    return defect


@suite("constant-curvature", TOL_BUNDLE, applies=_known_curvature)
def _constant_curvature(ctx: SuiteContext) -> float:
    M = ctx.M
    c, m = M.sectional_curvature, M.dim
    defect = 0.0
    for x in ctx.points:
        g = M.metric(x)
        curv = curvature(M, x)
        oracle = c * (torch.einsum("ki,pj->kpij", g, g) - torch.einsum("kj,pi->kpij", g, g))
        defect = max(defect, max_abs(curv.riem_low - oracle), abs(curv.scal.item() - m * (m - 1) * c))
    return defect


def _relative(ad: torch.Tensor, fd: torch.Tensor) -> float:
    return max_abs(ad - fd) / max(1.0, max_abs(ad))


@suite("ad-vs-finite-differences", TOL_FD)
def _ad_vs_fd(ctx: SuiteContext) -> float:
    M = ctx.M
    fields = _base_fields(M)

    def gamma(y: torch.Tensor) -> torch.Tensor:
        return christoffel_symbols(M, y)

    defect = 0.0
    for x in ctx.points:
        defect = max(defect, _relative(jacfwd(M.metric)(x), central_difference(M.metric, x)))
        defect = max(defect, _relative(jacfwd(gamma)(x), central_difference(gamma, x)))
        for X in fields:
            defect = max(defect, _relative(X.jacobian(x), central_difference(X, x)))
    return defect


@suite("killing-incompressible", TOL_BUNDLE)
def _killing_incompressible(ctx: SuiteContext) -> float:
    defect = 0.0
    for X in _base_fields(ctx.M):
        if _max_over(ctx.points, lambda x: max_abs(killing_defect_base(ctx.M, X, x))) < TOL_EXACT:
            defect = max(defect, _max_over(ctx.points, lambda x: abs(divergence_base(ctx.M, X, x).item())))
    return defect


# ---------------------------------------------------------------- tangent bundle


@suite("splitting-and-lifts", TOL_EXACT)
def _splitting_and_lifts(ctx: SuiteContext) -> float:
    M, m = ctx.M, ctx.M.dim
    generator = ctx.generator()
    fields = _base_fields(M)
    xi_field = canonical_field()
    S_field = spray_field(M)
    defect = 0.0
    for u in ctx.bundle_points:
        W = TTVector.from_stacked(ctx.randn(generator, 2 * m))
        defect = max(defect, max_abs(assemble(M, u, split(M, u, W)).stacked() - W.stacked()))
        xi, S = xi_field(u), S_field(u)
        defect = max(
            defect,
            max_abs(split(M, u, xi).stacked() - torch.cat([torch.zeros(m, dtype=DTYPE), u.v])),
            max_abs(split(M, u, S).stacked() - torch.cat([u.v, torch.zeros(m, dtype=DTYPE)])),
            max_abs(S.stacked() - mirror_apply(M, u, xi, "Bt").stacked()),
        )
        for X in fields:
            value = X(u.x)
            zero = torch.zeros_like(value)
            extension = split(M, u, complete_lift(M, X, u))
            defect = max(
                defect,
                max_abs(split(M, u, horizontal_lift(M, X, u)).stacked() - torch.cat([value, zero])),
                max_abs(split(M, u, vertical_lift(M, X, u)).stacked() - torch.cat([zero, value])),
                max_abs(extension.v - covariant_derivative(M, X, u.x) @ u.v),
            )
    for u in ctx.heavy_points:
        defect = max(defect, _max_over(fields, lambda X: extension_identity_defect(M, X, u)))
    return defect


@suite("mirror-structures", TOL_EXACT)
def _mirror_structures(ctx: SuiteContext) -> float:
    M, m = ctx.M, ctx.M.dim
    generator = ctx.generator()
    defect = 0.0
    for u in ctx.bundle_points:
        W1, W2 = (TTVector.from_stacked(ctx.randn(generator, 2 * m)) for _ in range(2))
        B, Bt = mirror_matrix(M, u, "B"), mirror_matrix(M, u, "Bt")
        J, phi = mirror_matrix(M, u, "JNS"), mirror_matrix(M, u, "golden")
        G = sasaki_matrix(M, u)
        eye = torch.eye(2 * m, dtype=DTYPE)
        w1, w2 = W1.stacked(), W2.stacked()
        horizontal = assemble(M, u, SplitVector(W1.a, torch.zeros(m, dtype=DTYPE))).stacked()
        vertical = assemble(M, u, SplitVector(torch.zeros(m, dtype=DTYPE), W2.b)).stacked()
        defect = max(
            defect,
            max_abs(B @ B),
            max_abs(J @ J + eye),
            max_abs(phi @ phi - phi - eye),
            max_abs(J.T @ G @ J - G),
            max_abs(G @ phi - phi.T @ G),
            max_abs(G @ B - (G @ Bt).T),
            abs((horizontal @ G @ vertical).item()),
            abs(omega(M, u, W1, W2).item() - ((B @ w2) @ G @ w1 - (B @ w1) @ G @ w2).item()),
        )
    return defect


@suite("nabla-star-structure", TOL_BUNDLE)
def _nabla_star_structure(ctx: SuiteContext) -> float:
    M, m = ctx.M, ctx.M.dim
    n = 2 * m
    generator = ctx.generator()
    basis = _constant_chart_fields(n)
    xi_field, S_field = canonical_field(), spray_field(M)
    defect = 0.0
    for u, jet in zip(ctx.heavy_points, ctx.jets):
        G = sasaki_matrix(M, u)
        N = torch.stack([nabla_star_matrix(M, E, u, jet) for E in basis])  # [p, s, r]
        for which in ("B", "JNS"):
            T = mirror_matrix(M, u, which)
            NT = torch.stack([nabla_star_matrix(M, mirror_field(M, E, which), u, jet) for E in basis])
            defect = max(defect, max_abs(NT - torch.einsum("st,ptr->psr", T, N)))
        dG = jacfwd(lambda y: sasaki_matrix(M, TangentBundlePoint.from_stacked(y)))(u.stacked())
        metric = dG - torch.einsum("psr,sq->pqr", N, G) - torch.einsum("ps,qsr->pqr", G, N)
        defect = max(defect, max_abs(metric))

        F1, F2 = (_constant_split_field(ctx.randn(generator, m), ctx.randn(generator, m), M) for _ in range(2))
        f1, f2 = F1(u), F2(u)
        bracket = bracket_tm(M, F1, F2, u).stacked()
        torsion = nabla_star(M, F2, u, f1).stacked() - nabla_star(M, F1, u, f2).stacked() - bracket
        d_torsion = d_star(M, F2, u, f1).stacked() - d_star(M, F1, u, f2).stacked() - bracket
        defect = max(
            defect,
            max_abs(torsion - curvature_op_R(M, u, f1, f2).stacked()),
            max_abs(d_torsion),
        )

        X = ctx.randn(generator, m)
        zero = torch.zeros(m, dtype=DTYPE)
        up = assemble(M, u, SplitVector(X, zero))
        down = TTVector(zero, X)
        defect = max(
            defect,
            max_abs(nabla_star(M, xi_field, u, down).stacked() - down.stacked()),
            max_abs(nabla_star(M, S_field, u, up).stacked()),
            max_abs(nabla_star(M, S_field, u, down).stacked() - up.stacked()),
        )
    return defect


def _along(M: ChartedManifold, F: TMVectorField, form) -> Callable:
    """y -> form(u(y), F(u(y))) for differentiating a 1-form evaluated on a field."""
    return lambda y: form(TangentBundlePoint.from_stacked(y), F(TangentBundlePoint.from_stacked(y)))


def _exterior(M: ChartedManifold, form, F1: TMVectorField, F2: TMVectorField, u: TangentBundlePoint) -> float:
    """F1 form(F2) - F2 form(F1) - form([F1, F2])."""
    y = u.stacked()
    first = jacfwd(_along(M, F2, form))(y) @ F1(u).stacked()
    second = jacfwd(_along(M, F1, form))(y) @ F2(u).stacked()
    return (first - second - form(u, bracket_tm(M, F1, F2, u))).item()


@suite("contact-symplectic", TOL_BUNDLE)
def _contact_symplectic(ctx: SuiteContext) -> float:
    M, m = ctx.M, ctx.M.dim
    generator = ctx.generator()
    xi_field = canonical_field()

    def theta_form(u, W):
        return theta(M, u, W)

    def xi_flat(u, W):
        return sasaki_inner(M, u, xi_field(u), W)

    defect = 0.0
    for u in ctx.bundle_points:
        F1, F2 = (_constant_split_field(ctx.randn(generator, m), ctx.randn(generator, m), M) for _ in range(2))
        d_theta = _exterior(M, theta_form, F1, F2, u)
        defect = max(
            defect,
            abs(omega(M, u, F1(u), F2(u)).item() - d_theta),
            abs(_exterior(M, xi_flat, F1, F2, u)),
        )
        W1, W2, W3 = (TTVector.from_stacked(ctx.randn(generator, 2 * m)) for _ in range(3))

        def term(a, b, c):
            return sasaki_inner(M, u, curvature_op_R(M, u, a, b), mirror_apply(M, u, c, "B")).item()

        defect = max(defect, abs(term(W1, W2, W3) + term(W2, W3, W1) + term(W3, W1, W2)))
    S_field = spray_field(M)
    return max(defect, _max_over(ctx.heavy_points, lambda u: abs(divergence_tm(M, S_field, u).item())))


@suite("sasaki-connection", TOL_BUNDLE)
def _sasaki_connection(ctx: SuiteContext) -> float:
    M, m = ctx.M, ctx.M.dim
    generator = ctx.generator()
    defect = 0.0
    for u in ctx.heavy_points:
        F1, F2 = (_constant_split_field(ctx.randn(generator, m), ctx.randn(generator, m), M) for _ in range(2))
        C1, C2 = sasaki_connection_matrix(M, F1, u), sasaki_connection_matrix(M, F2, u)
        f1, f2 = F1(u).stacked(), F2(u).stacked()
        torsion = C2 @ f1 - C1 @ f2 - bracket_tm(M, F1, F2, u).stacked()
        w = ctx.randn(generator, 2 * m)
        G = sasaki_matrix(M, u)

        def pairing(y):
            point = TangentBundlePoint.from_stacked(y)
            return F1.flat(y) @ sasaki_matrix(M, point) @ F2.flat(y)

        metric = jacfwd(pairing)(u.stacked()) @ w - (C1 @ w) @ G @ f2 - f1 @ G @ (C2 @ w)
        X, Y = ctx.randn(generator, m), ctx.randn(generator, m)
        vertical = sasaki_connection_matrix(M, vertical_lift_field(_constant_base_field(Y)), u)
        defect = max(
            defect,
            max_abs(torsion),
            abs(metric.item()),
            max_abs(vertical @ torch.cat([torch.zeros(m, dtype=DTYPE), X])),
        )
        if M.is_flat:
            defect = max(defect, max_abs(C1 - nabla_star_matrix(M, F1, u)))
    return defect


def _curvature_norm_brute(M: ChartedManifold, u: TangentBundlePoint) -> float:
    m = M.dim
    low = curvature(M, u.x).riem_low.tolist()
    ginv = torch.linalg.inv(M.metric(u.x)).tolist()
    v = u.v.tolist()
    total = 0.0
    r = range(m)
    for k in r:
        for p in r:
            for i in r:
                for j in r:
                    for k2 in r:
                        for p2 in r:
                            for i2 in r:
                                for j2 in r:
                                    total += (
                                        v[p] * v[p2] * low[k][p][i][j] * low[k2][p2][i2][j2]
                                        * ginv[i][i2] * ginv[j][j2] * ginv[k][k2]
                                    )
    return total


@suite("sasaki-scalar", TOL_BUNDLE, applies=_known_curvature)
def _sasaki_scalar(ctx: SuiteContext) -> float:
    M = ctx.M
    c, m = M.sectional_curvature, M.dim
    defect = 0.0
    for u in ctx.bundle_points:
        speed2 = (u.v @ M.metric(u.x) @ u.v).item()
        closed_norm = 2 * c**2 * (m - 1) * speed2
        brute = _curvature_norm_brute(M, u) if m <= 3 else closed_norm
        defect = max(
            defect,
            abs(brute - closed_norm),
            abs(curvature_norm_sq(M, u).item() - brute),
            abs(sasaki_scalar(M, u).item() - (m * (m - 1) * c - 0.25 * closed_norm)),
        )
    return defect


# ---------------------------------------------------------------- geodesics


def _random_state(M: ChartedManifold, x: torch.Tensor, generator: torch.Generator, speed: float = 0.5, z: bool = True):
    """Random initial data scaled to Sasaki energy speed**2."""
    m = M.dim
    xdot = torch.randn(m, generator=generator, dtype=DTYPE)
    zz = torch.randn(m, generator=generator, dtype=DTYPE) if z else torch.zeros(m, dtype=DTYPE)
    v = torch.randn(m, generator=generator, dtype=DTYPE)
    s = GeodesicState(x, v, xdot, zz)
    scale = speed / math.sqrt(sasaki_energy(M, s).item())
    return GeodesicState(x, v, scale * xdot, scale * zz)


@suite("geodesic-euclidean-closed-form", 1e-12, applies=lambda M: _family(M) == "euclidean")
def _euclidean_closed_form(ctx: SuiteContext) -> float:
    s0 = _random_state(ctx.M, ctx.points[0], ctx.generator())
    trajectory = integrate(ctx.M, s0, 1.0, 1e-3)
    m = ctx.M.dim
    t = trajectory.times[:, None]
    x = trajectory.states[:, :m]
    v = trajectory.states[:, m : 2 * m]
    return max(max_abs(x - (s0.x + t * s0.xdot)), max_abs(v - (s0.v + t * s0.z)))


@suite("great-circle-closure", TOL_ODE, applies=lambda M: _family(M) == "sphere" and M.dim >= 2)
def _great_circle(ctx: SuiteContext) -> float:
    M, m = ctx.M, ctx.M.dim
    c = M.sectional_curvature
    x0 = torch.zeros(m, dtype=DTYPE)
    x0[0] = 1.0 / math.sqrt(c)
    xdot0 = torch.zeros(m, dtype=DTYPE)
    xdot0[1] = 1.0
    zero = torch.zeros(m, dtype=DTYPE)
    trajectory = integrate(M, GeodesicState(x0, zero, xdot0, zero), 2 * math.pi / math.sqrt(c), 1e-3)
    final = trajectory.final
    return max(max_abs(final.x - x0), max_abs(final.xdot - xdot0))


@suite("energy-conservation", TOL_ODE)
def _energy_conservation(ctx: SuiteContext) -> float:
    s0 = _random_state(ctx.M, ctx.points[0], ctx.generator())
    return integrate(ctx.M, s0, 1.0, 1e-3).energy_drift()


@suite("rk4-order", 0.0, applies=_curved)
def _rk4_order(ctx: SuiteContext) -> float:
    """Distance of the dt-halving error ratio from [12, 20]."""
    s0 = _random_state(ctx.M, ctx.points[0], ctx.generator())
    dt = 0.1
    reference = integrate(ctx.M, s0, 1.0, dt / 16).final.stacked()
    coarse = max_abs(integrate(ctx.M, s0, 1.0, dt).final.stacked() - reference)
    fine = max_abs(integrate(ctx.M, s0, 1.0, dt / 2).final.stacked() - reference)
    ratio = coarse / fine
    return max(0.0, 12.0 - ratio, ratio - 20.0)


@suite("natural-lift", 1e-7)
def _natural_lift(ctx: SuiteContext) -> float:
    M, m = ctx.M, ctx.M.dim
    s0 = _random_state(M, ctx.points[0], ctx.generator(), z=False)
    trajectory = integrate(M, s0, 1.0, 1e-3)
    base = integrate_base(M, s0.x, s0.xdot, 1.0, 1e-3)
    lifted = torch.cat([trajectory.states[:, :m], trajectory.states[:, 2 * m : 3 * m]], dim=1)
    return max(max_abs(lifted - base), max_abs(trajectory.states[:, 3 * m :]))


@suite("fibre-lines", 1e-12)
def _fibre_lines(ctx: SuiteContext) -> float:
    M, m = ctx.M, ctx.M.dim
    generator = ctx.generator()
    x0 = ctx.points[0]
    v0, z0 = ctx.randn(generator, m), ctx.randn(generator, m)
    zero = torch.zeros(m, dtype=DTYPE)
    trajectory = integrate(M, GeodesicState(x0, v0, zero, z0), 1.0, 1e-3)
    t = trajectory.times[:, None]
    return max(
        max_abs(trajectory.states[:, :m] - x0),
        max_abs(trajectory.states[:, m : 2 * m] - (v0 + t * z0)),
    )


@suite("submarine-flat", TOL_EXACT, applies=lambda M: M.is_flat)
def _submarine_flat(ctx: SuiteContext) -> float:
    s0 = _random_state(ctx.M, ctx.points[0], ctx.generator())
    return base_geodesic_defect(ctx.M, integrate(ctx.M, s0, 1.0, 1e-2))


# ---------------------------------------------------------------- classifiers


class _Verdicts:
    """Per-field verdicts over the heavy sample, computed lazily and shared between checks."""

    def __init__(self, ctx: SuiteContext, X: BaseVectorField):
        self.ctx, self.M, self.X = ctx, ctx.M, X
        self.points = ctx.heavy_points
        self.tol = ctx.verdict_tol

    def _base(self, fn) -> bool:
        return _max_over(self.points, lambda u: fn(u.x)) <= self.tol

    def _tm(self, fn, Z: TMVectorField) -> bool:
        ctx = self.ctx
        return max(fn(self.M, Z, u, p, jet) for u, p, jet in zip(self.points, ctx.probes, ctx.jets)) <= self.tol

    @cached_property
    def killing(self) -> bool:
        return self._base(lambda x: max_abs(killing_defect_base(self.M, self.X, x)))

    @cached_property
    def parallel(self) -> bool:
        return self._base(lambda x: max_abs(covariant_derivative(self.M, self.X, x)))

    @cached_property
    def annihilated(self) -> bool:
        return self._base(lambda x: curvature_annihilator_defect(self.M, self.X, x))

    @cached_property
    def closed(self) -> bool:
        return self._base(lambda x: max_abs(exterior_derivative_base(flat_base(self.M, self.X), x)))

    @cached_property
    def harmonic(self) -> bool:
        return self.closed and self._base(lambda x: abs(divergence_base(self.M, self.X, x).item()))

    @cached_property
    def affine(self) -> bool:
        m = self.M.dim
        eye = torch.eye(m, dtype=DTYPE)
        return self._base(
            lambda x: max(max_abs(affine_defect(self.M, self.X, x, eye[a], eye[b])) for a in range(m) for b in range(m))
        )

    def tm_killing(self, Z) -> bool:
        return self._tm(killing_defect_tm, Z)

    def tm_contact(self, Z) -> bool:
        return self._tm(strictly_contact_defect, Z)

    def tm_symplectic(self, Z) -> bool:
        return self._tm(symplectic_defect, Z)

    def tm_mirror_0(self, Z) -> bool:
        return self._tm(lambda M, Z, u, p, jet: mirror_defect(M, Z, u, 0.0, p, jet), Z)

    def tm_adjoint_mirror_0(self, Z) -> bool:
        return self._tm(lambda M, Z, u, p, jet: adjoint_mirror_defect(M, Z, u, 0.0, p, jet), Z)

    def tm_harmonic(self, Z) -> bool:
        return (
            max(
                max(
                    max_abs(exterior_derivative_tm(flat_tm(self.M, Z), u)),
                    abs(divergence_tm(self.M, Z, u, jet).item()),
                )
                for u, jet in zip(self.points, self.ctx.jets)
            )
            <= self.tol
        )


@suite("theorem-equivalence", 0.0)
def _theorem_equivalence(ctx: SuiteContext) -> float:
    """Mismatches among {X Killing, X~ Killing, X~ strictly-contact, X~ symplectic}."""
    mismatches = 0
    for X in _base_fields(ctx.M):
        verdict = _Verdicts(ctx, X)
        Z = complete_lift_field(X)
        answers = {verdict.killing, verdict.tm_killing(Z), verdict.tm_contact(Z), verdict.tm_symplectic(Z)}
        mismatches += len(answers) - 1
    return float(mismatches)


@suite("lift-divergence", VERDICT_TOL)
def _lift_divergence(ctx: SuiteContext) -> float:
    M = ctx.M
    defect = 0.0
    for X in _base_fields(M):
        lifts = (complete_lift_field(X), vertical_lift_field(X), horizontal_lift_field(M, X))
        for u, jet in zip(ctx.heavy_points, ctx.jets):
            div = divergence_base(M, X, u.x).item()
            extension, vertical, horizontal = (divergence_tm(M, Z, u, jet).item() for Z in lifts)
            defect = max(defect, abs(extension - 2 * div), abs(vertical), abs(horizontal - div))
    return defect


@suite("lift-criteria", 0.0)
def _lift_criteria(ctx: SuiteContext) -> float:
    M = ctx.M
    mismatches = 0
    for X in _base_fields(M):
        verdict = _Verdicts(ctx, X)
        h, v, ext = horizontal_lift_field(M, X), vertical_lift_field(X), complete_lift_field(X)
        expectations = [
            (verdict.tm_killing(h), verdict.killing and verdict.annihilated),
            (verdict.tm_killing(v), verdict.parallel),
            (verdict.tm_contact(h), verdict.parallel),
            (verdict.tm_symplectic(h), verdict.parallel),
            (verdict.tm_symplectic(v), verdict.closed),
            (verdict.tm_harmonic(h), verdict.harmonic),
            (verdict.tm_harmonic(v), verdict.parallel),
            (verdict.tm_adjoint_mirror_0(h), verdict.parallel),
            (verdict.tm_adjoint_mirror_0(v), verdict.parallel),
            (verdict.tm_adjoint_mirror_0(ext), verdict.affine),
        ]
        mismatches += sum(actual != expected for actual, expected in expectations)
        for Z in (h, v, ext):
            mismatches += _max_over(ctx.heavy_points, lambda u: fibre_preserving_defect(M, Z, u)) > ctx.verdict_tol
    return float(mismatches)


@suite("affine-almost-analytic", TOL_BUNDLE)
def _affine_almost_analytic(ctx: SuiteContext) -> float:
    M, m = ctx.M, ctx.M.dim
    generator = ctx.generator()
    defect = 0.0
    for X in _base_fields(M):
        killing = _Verdicts(ctx, X).killing
        for u in ctx.heavy_points:
            Y, Z = ctx.randn(generator, m), ctx.randn(generator, m)
            if killing:
                defect = max(defect, max_abs(affine_defect(M, X, u.x, Y, Z)))
            analytic = _sasaki_norm(M, u, almost_analytic_defect(M, X, u, Y))
            affine = _base_norm(M, u.x, affine_defect(M, X, u.x, Y, u.v))
            defect = max(defect, abs(analytic - affine))
    return defect


@suite("harmonic-map", TOL_BUNDLE)
def _harmonic_map(ctx: SuiteContext) -> float:
    M = ctx.M
    defect = 0.0
    for X in _base_fields(M):
        verdict = _Verdicts(ctx, X)
        for x in ctx.points[:HEAVY_SAMPLES]:
            curvature_term, laplacian = harmonic_map_defect(M, X, x)
            if verdict.killing:
                ginv = torch.linalg.inv(M.metric(x))
                trace = torch.einsum("ab,lbia,i->l", ginv, riemann_tensor(M, x), X(x))
                defect = max(defect, max_abs(laplacian + trace))
            if M.is_flat and max_abs(covariant_jet(M, X, x)[1]) <= VERDICT_TOL:
                defect = max(defect, max_abs(curvature_term), max_abs(laplacian))
            if verdict.parallel:
                eye = torch.eye(M.dim, dtype=DTYPE)
                defect = max(defect, max_abs(totally_geodesic_defect(M, X, x, eye[0], eye[-1])))
    return defect


@suite("tanno", TOL_BUNDLE, applies=lambda M: M.is_flat and M.dim >= 2)
def _tanno(ctx: SuiteContext) -> float:
    m = ctx.M.dim
    P = torch.zeros(m, m, dtype=DTYPE)
    P[0, 1], P[1, 0] = 1.0, -1.0
    Z = tanno_field(P)
    triples = zip(ctx.heavy_points, ctx.probes, ctx.jets)
    return max(killing_defect_tm(ctx.M, Z, u, probes, jet) for u, probes, jet in triples)


@suite("mirror-fit", TOL_EXACT)
def _mirror_fit(ctx: SuiteContext) -> float:
    M, points = ctx.M, ctx.heavy_points
    lam, residual = mirror_fit(M, canonical_field(), points, ctx.jets)
    defect = max(abs(lam + 1.0), residual)
    for X in _base_fields(M):
        for Z in (complete_lift_field(X), vertical_lift_field(X)):
            lam, residual = mirror_fit(M, Z, points, ctx.jets)
            defect = max(defect, abs(lam), residual)
    if _family(M) == "euclidean":
        generator = ctx.generator()
        target = ctx.randn(generator, 1).item()
        fields = _base_fields(M)
        Z = (
            vertical_lift_field(fields[-1])
            + complete_lift_field(fields[2 % len(fields)])
            + horizontal_lift_field(M, make_field(M, "position", kind="base")).scaled(target)
        )
        lam, residual = mirror_fit(M, Z, points, ctx.jets)
        defect = max(defect, abs(lam - target), residual)
    return defect


@suite("adjoint-mirror", 0.0)
def _adjoint_mirror(ctx: SuiteContext) -> float:
    """Fibre-preserving 0-adjoint-mirror fields that fail to be 0-mirror.

    The implication needs Z^h to depend on x only. On a flat model the spray is 0-adjoint-mirror
    with L_S B = diag(-I, I), and is counted when it stops behaving that way.
    """
    M = ctx.M
    verdict = _Verdicts(ctx, _constant_base_field(torch.zeros(M.dim, dtype=DTYPE)))
    mismatches = 0
    for spec in tm_field_library(M):
        Z = make_field(M, spec)
        counterexample = verdict.tm_adjoint_mirror_0(Z) and not verdict.tm_mirror_0(Z)
        if spec == "spray" and M.is_flat:
            mismatches += not counterexample
        elif _max_over(ctx.heavy_points, lambda u: fibre_preserving_defect(M, Z, u)) <= ctx.verdict_tol:
            mismatches += counterexample
    return float(mismatches)


# ---------------------------------------------------------------- 1-forms


def _forms(M: ChartedManifold) -> list:
    return [make_field(M, spec, kind="form") for spec in form_library(M)]


@suite("one-forms", VERDICT_TOL)
def _one_forms(ctx: SuiteContext) -> float:
    M = ctx.M
    defect = 0.0
    for alpha in _forms(M):
        vertical, pullback = lifted_form(alpha, "vertical", M), lifted_form(alpha, "pullback")
        for u in ctx.heavy_points:
            defect = max(
                defect,
                abs(codifferential_tm(M, vertical, u).item()),
                abs(codifferential_tm(M, pullback, u).item() - codifferential_base(M, alpha, u.x).item()),
                max_abs(extension_chart(alpha, u) - extension_connection(M, alpha, u)),
            )
    for X in _base_fields(M):
        for u in ctx.heavy_points:
            dual = sasaki_matrix(M, u) @ vertical_lift(M, X, u).stacked()
            defect = max(defect, max_abs(dual - lift_one_form(M, flat_base(M, X), u, "vertical")))
    if M.is_flat:
        constant = _forms(M)[0]
        extension = lifted_form(constant, "extension")
        for u in ctx.heavy_points:
            defect = max(
                defect,
                abs(codifferential_tm(M, extension, u).item()),
                max_abs(exterior_derivative_tm(extension, u)),
            )
    return defect


@suite("one-form-criteria", 0.0)
def _one_form_criteria(ctx: SuiteContext) -> float:
    """Mismatches in: pi^* alpha harmonic iff alpha harmonic; pi^star alpha harmonic iff nabla alpha = 0."""
    M = ctx.M
    points = ctx.heavy_points
    mismatches = 0

    def harmonic_tm(mu) -> bool:
        return all(
            max(max_abs(exterior_derivative_tm(mu, u)), abs(codifferential_tm(M, mu, u).item())) <= ctx.verdict_tol
            for u in points
        )

    for alpha in _forms(M):
        harmonic = all(
            max(max_abs(exterior_derivative_base(alpha, u.x)), abs(codifferential_base(M, alpha, u.x).item()))
            <= ctx.verdict_tol
            for u in points
        )
        parallel = all(max_abs(covariant_derivative(M, sharp_base(M, alpha), u.x)) <= ctx.verdict_tol for u in points)
        mismatches += harmonic_tm(lifted_form(alpha, "pullback")) != harmonic
        mismatches += harmonic_tm(lifted_form(alpha, "vertical", M)) != parallel
    return float(mismatches)


@suite("extension-ricci-obstruction", 0.0, applies=lambda M: _curved(M) and M.dim == 2)
def _extension_ricci_obstruction(ctx: SuiteContext) -> float:
    """alpha = d(x1 x2) is harmonic on a conformal surface; its extension must fail to be co-closed."""
    M = ctx.M
    extension = lifted_form(make_field(M, "exact:x1*x2", kind="form"), "extension")
    generic = ctx.heavy_points[1:] or ctx.heavy_points
    worst = _max_over(generic, lambda u: abs(codifferential_tm(M, extension, u).item()))
    return max(0.0, 1e-3 - worst)


# ---------------------------------------------------------------- Lie derivatives vs flows


_FORMULAS = {
    "metric": lie_metric_matrix,
    "omega": lie_omega_matrix,
    "theta": lie_theta_covector,
    "B": lie_B_matrix,
    "Bt": lie_Bt_matrix,
}


@suite("lie-vs-flow", TOL_FD)
def _lie_vs_flow(ctx: SuiteContext) -> float:
    M = ctx.M
    fields = [make_field(M, spec) for spec in tm_field_library(M)]
    points = ctx.bundle_points
    defect = 0.0
    for k in range(FLOW_TRIPLES):
        Z = fields[k % len(fields)]
        u = points[(k + 1) % len(points)]
        jet = bundle_jet(M, u)
        for tensor, formula in _FORMULAS.items():
            exact = formula(M, Z, u, jet)
            defect = max(defect, _relative(exact, flow_lie_derivative(M, Z, u, tensor)))
    return defect


def _init_worker():
    torch.set_num_threads(1)


def _run_by_name(model: str, name: str, seed: int, samples: int, tol: Optional[float]) -> SuiteReport:
    """Worker entry point: rebuilds the model from its text form and looks the suite up by name."""
    selected = next(s for s in SUITES if s.name == name)
    return selected.run(make_model(model), seed, samples, tol)


def run_suites(
    M: ChartedManifold,
    seed: int,
    samples: int,
    tol: Optional[float] = None,
    workers: int = 1,
    progress: bool = False,
) -> List[SuiteReport]:
    """Run every applicable suite; reports come back in registry order.

    With ``workers > 1`` suites run in separate processes, since forward-mode AD keeps
    process-global state; ``M.name`` must then be a model spec accepted by ``make_model``.
    """
    selected = [s for s in SUITES if s.applies(M)]
    bar = dict(total=len(selected), disable=not progress, desc="verify")
    if workers <= 1:
        return [s.run(M, seed, samples, tol) for s in tqdm.tqdm(selected, **bar)]
    context = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=context, initializer=_init_worker) as pool:
        jobs = [pool.submit(_run_by_name, M.name, s.name, seed, samples, tol) for s in selected]
        return [job.result() for job in tqdm.tqdm(jobs, **bar)]
