"""Numerical predicates for vector-field classes on M and on (TM, g).

Every ``*_defect`` returns a non-negative number that vanishes exactly when the field belongs
to the class; AD makes the defects of member fields sit at round-off level.
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch
import tqdm
from torch import Tensor

from sasaki.bundle import (
    BundleJet,
    TangentBundlePoint,
    TMVectorField,
    TTVector,
    adapted_frame,
    bundle_jet,
    complete_lift_field,
    divergence_tm,
    fibre_preserving_defect,
    horizontal_lift,
    lie_B_matrix,
    lie_Bt_matrix,
    lie_metric_matrix,
    lie_mirror_matrices,
    lie_omega_matrix,
    lie_theta_covector,
    sasaki_matrix,
)
from sasaki.errors import DegenerateFit
from sasaki.forms import closed_dual_defect
from sasaki.geometry import BaseVectorField, ChartedManifold, apply_riemann, covariant_jet, riemann_tensor
from sasaki.utils import DTYPE, as_tensor

__all__ = [
    "VERDICT_TOL",
    "DefectReport",
    "probe_vectors",
    "killing_defect_tm",
    "symplectic_defect",
    "strictly_contact_defect",
    "almost_analytic_defect_tm",
    "mirror_fit",
    "mirror_defect",
    "adjoint_mirror_defect",
    "affine_defect",
    "almost_analytic_defect",
    "totally_geodesic_defect",
    "harmonic_map_defect",
    "bending_integrand",
    "energy_estimate",
    "classify",
]

VERDICT_TOL = 1e-7
N_RANDOM_PROBES = 8


@dataclass
class DefectReport:
    name: str
    max_defect: float
    tol: float
    worst_point: Optional[list] = None
    value: Optional[float] = None  # fitted parameter, e.g. the mirror constant
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_defect <= self.tol

    def as_dict(self) -> dict:
        d = {"name": self.name, "max_defect": self.max_defect, "tol": self.tol, "pass": self.passed}
        if self.value is not None:
            d["value"] = self.value
        if self.worst_point is not None:
            d["worst_point"] = self.worst_point
        return d


def probe_vectors(
    M: ChartedManifold, u: TangentBundlePoint, generator: torch.Generator, jet: Optional[BundleJet] = None
) -> Tensor:
    """Columns: the 2m adapted frame vectors, then random Sasaki-unit vectors."""
    E = adapted_frame(M, u, jet)
    G = sasaki_matrix(M, u, jet)
    W = torch.randn(E.shape[0], N_RANDOM_PROBES, generator=generator, dtype=DTYPE)
    norms = torch.sqrt(torch.einsum("pa,pq,qa->a", W, G, W))
    return torch.cat([E, W / norms], dim=1)


def _form_sup(T: Tensor, probes: Tensor) -> float:
    return (probes.T @ T @ probes).abs().max().item()


def _endo_sup(G: Tensor, T: Tensor, probes: Tensor) -> float:
    images = T @ probes
    norms = torch.einsum("pa,pq,qa->a", images, G, images)
    return torch.sqrt(norms.clamp(min=0.0)).max().item()


def killing_defect_tm(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, probes: Tensor, jet: Optional[BundleJet] = None
) -> float:
    return _form_sup(lie_metric_matrix(M, Z, u, jet), probes)


def symplectic_defect(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, probes: Tensor, jet: Optional[BundleJet] = None
) -> float:
    return _form_sup(lie_omega_matrix(M, Z, u, jet), probes)


def strictly_contact_defect(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, probes: Tensor, jet: Optional[BundleJet] = None
) -> float:
    return (lie_theta_covector(M, Z, u, jet) @ probes).abs().max().item()


def almost_analytic_defect_tm(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, probes: Tensor, jet: Optional[BundleJet] = None
) -> float:
    """sup |(L_Z J)(W)| with J = B - B^t."""
    jet = bundle_jet(M, u) if jet is None else jet
    lie_b, lie_bt = lie_mirror_matrices(M, Z, u, jet)
    return _endo_sup(jet.sasaki, lie_b - lie_bt, probes)


def mirror_defect(
    M: ChartedManifold,
    Z: TMVectorField,
    u: TangentBundlePoint,
    lam: float,
    probes: Tensor,
    jet: Optional[BundleJet] = None,
) -> float:
    jet = bundle_jet(M, u) if jet is None else jet
    return _endo_sup(jet.sasaki, lie_B_matrix(M, Z, u, jet) - lam * jet.mirror("B"), probes)


def adjoint_mirror_defect(
    M: ChartedManifold,
    Z: TMVectorField,
    u: TangentBundlePoint,
    lam: float,
    probes: Tensor,
    jet: Optional[BundleJet] = None,
) -> float:
    jet = bundle_jet(M, u) if jet is None else jet
    return _endo_sup(jet.sasaki, lie_Bt_matrix(M, Z, u, jet) - lam * jet.mirror("Bt"), probes)


def _frame_pair(M: ChartedManifold, u: TangentBundlePoint, lie_b: Tensor, jet: BundleJet) -> tuple:
    E = adapted_frame(M, u, jet)
    to_frame = torch.linalg.inv(E)
    return to_frame @ lie_b @ E, to_frame @ jet.mirror("B") @ E


def _fit(pairs: list) -> tuple:
    numerator = sum(torch.sum(L * B).item() for L, B in pairs)
    denominator = sum(torch.sum(B * B).item() for _, B in pairs)
    if denominator == 0.0:
        raise DegenerateFit("mirror map vanishes at every sample")
    lam = numerator / denominator
    residual = max(torch.linalg.matrix_norm(L - lam * B).item() for L, B in pairs)
    return lam, residual


def mirror_fit(
    M: ChartedManifold,
    Z: TMVectorField,
    points: Sequence[TangentBundlePoint],
    jets: Optional[Sequence[BundleJet]] = None,
) -> tuple:
    """Least-squares lam with L_Z B = lam B; returns (lam, max Frobenius residual).

    Pairings are Frobenius in adapted orthonormal frames.
    """
    assert len(points) > 0, "mirror_fit needs at least one sample"
    jets = [bundle_jet(M, u) for u in points] if jets is None else jets
    return _fit([_frame_pair(M, u, lie_B_matrix(M, Z, u, jet), jet) for u, jet in zip(points, jets)])


def affine_defect(M: ChartedManifold, X: BaseVectorField, x: Tensor, Y: Tensor, Z: Tensor) -> Tensor:
    """nabla^2 X(Y, Z) + R(X, Y) Z."""
    x, Y, Z = as_tensor(x), as_tensor(Y), as_tensor(Z)
    _, nabla2 = covariant_jet(M, X, x)
    riem = riemann_tensor(M, x)
    return torch.einsum("iab,a,b->i", nabla2, Y, Z) + apply_riemann(riem, X(x), Y, Z)


def almost_analytic_defect(M: ChartedManifold, X: BaseVectorField, u: TangentBundlePoint, Y: Tensor) -> TTVector:
    """(L_{X~} J)(pi^* Y), J = B - B^t; vanishes for all Y, u iff X is affine."""
    Z = complete_lift_field(X)
    W = horizontal_lift(M, BaseVectorField(lambda x: torch.zeros_like(x) + as_tensor(Y)), u)
    lie_b, lie_bt = lie_mirror_matrices(M, Z, u)
    return TTVector.from_stacked((lie_b - lie_bt) @ W.stacked())


def totally_geodesic_defect(M: ChartedManifold, X: BaseVectorField, x: Tensor, Z1: Tensor, Z2: Tensor) -> Tensor:
    """Residual of the equation for X(M) to be totally geodesic in TM, evaluated on vectors Z1, Z2.

    nabla_{nabla_{Z1}Z2 + R(X, nabla_{Z2}X)Z1/2 + R(X, nabla_{Z1}X)Z2/2} X - nabla_{Z1} nabla_{Z2} X + R(Z1, Z2)X/2,
    with Z1, Z2 extended with constant chart components, so nabla_{Z1} Z2 cancels.
    """
    x, Z1, Z2 = as_tensor(x), as_tensor(Z1), as_tensor(Z2)
    nabla, nabla2 = covariant_jet(M, X, x)
    riem = riemann_tensor(M, x)
    value = X(x)
    direction = 0.5 * apply_riemann(riem, value, nabla @ Z2, Z1) + 0.5 * apply_riemann(riem, value, nabla @ Z1, Z2)
    return nabla @ direction - torch.einsum("iab,a,b->i", nabla2, Z1, Z2) + 0.5 * apply_riemann(riem, Z1, Z2, value)


def harmonic_map_defect(M: ChartedManifold, X: BaseVectorField, x: Tensor) -> tuple:
    """(tr_g R(nabla_. X, X)., tr_g nabla^2 X); X: M -> TM is harmonic iff both vanish."""
    x = as_tensor(x)
    nabla, nabla2 = covariant_jet(M, X, x)
    riem = riemann_tensor(M, x)
    ginv = torch.linalg.inv(M.metric(x))
    curvature_term = torch.einsum("ab,lbij,ia,j->l", ginv, riem, nabla, X(x))
    return curvature_term, torch.einsum("ab,iab->i", ginv, nabla2)


def bending_integrand(M: ChartedManifold, X: BaseVectorField, x: Tensor) -> Tensor:
    """|nabla X|^2_g = g_ij g^ab (nabla X)^i_a (nabla X)^j_b."""
    x = as_tensor(x)
    nabla, _ = covariant_jet(M, X, x)
    g = M.metric(x)
    return torch.einsum("ij,ab,ia,jb->", g, torch.linalg.inv(g), nabla, nabla)


def energy_estimate(M: ChartedManifold, X: BaseVectorField, n: int = 8, progress: bool = False) -> float:
    """(m/2) vol + (1/2) int |nabla X|^2 over the sampling box, midpoint rule on an n^m lattice."""
    low = as_tensor(M.domain.low)
    high = as_tensor(M.domain.high)
    width = (high - low) / n
    cell = torch.prod(width).item()
    m = M.dim
    energy = 0.0
    cells = list(itertools.product(range(n), repeat=m))
    for index in tqdm.tqdm(cells, disable=not progress, leave=False, desc="energy"):
        x = low + (as_tensor(index) + 0.5) * width
        weight = math.sqrt(torch.linalg.det(M.metric(x)).item()) * cell
        energy += weight * (0.5 * m + 0.5 * bending_integrand(M, X, x).item())
    return energy


def _worst(values: list, points: Sequence[TangentBundlePoint]) -> tuple:
    k = max(range(len(values)), key=values.__getitem__)
    return values[k], points[k].stacked().tolist()


def classify(
    M: ChartedManifold,
    Z: TMVectorField,
    points: Sequence[TangentBundlePoint],
    generator: torch.Generator,
    tol: float = VERDICT_TOL,
    progress: bool = False,
) -> list:
    """Run every TM predicate on Z at the sample points."""
    assert len(points) > 0, "classify needs at least one sample"
    names = [
        "killing",
        "incompressible",
        "symplectic",
        "strictly_contact",
        "almost_analytic",
        "adjoint_mirror_0",
        "closed_dual",
        "harmonic",
        "fibre_preserving",
    ]
    defects = {name: [] for name in names}
    pairs = []
    for u in tqdm.tqdm(points, disable=not progress, leave=False, desc=f"classify {Z}"):
        jet = bundle_jet(M, u)
        probes = probe_vectors(M, u, generator, jet)
        lie_b, lie_bt = lie_mirror_matrices(M, Z, u, jet)
        closed, codiff = closed_dual_defect(M, Z, u), divergence_tm(M, Z, u, jet).abs().item()
        defects["killing"].append(killing_defect_tm(M, Z, u, probes, jet))
        defects["incompressible"].append(codiff)
        defects["symplectic"].append(symplectic_defect(M, Z, u, probes, jet))
        defects["strictly_contact"].append(strictly_contact_defect(M, Z, u, probes, jet))
        defects["almost_analytic"].append(_endo_sup(jet.sasaki, lie_b - lie_bt, probes))
        defects["adjoint_mirror_0"].append(_endo_sup(jet.sasaki, lie_bt, probes))
        defects["closed_dual"].append(closed)
        defects["harmonic"].append(max(closed, codiff))
        defects["fibre_preserving"].append(fibre_preserving_defect(M, Z, u))
        pairs.append(_frame_pair(M, u, lie_b, jet))
    reports = []
    for name in names:
        worst, at = _worst(defects[name], points)
        reports.append(DefectReport(name, worst, tol, worst_point=at))
    lam, residual = _fit(pairs)
    reports.insert(5, DefectReport("mirror", residual, tol, value=lam))
    return reports
