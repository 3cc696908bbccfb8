"""Pointwise Riemannian geometry of a single chart.

Every kernel here is a pure function of torch tensors so it can be nested inside
``torch.func.jacfwd``; derivatives of the metric, of the Christoffel symbols and of
vector fields are forward-mode AD, never finite differences.
"""
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import torch
from torch import Tensor
from torch.func import jacfwd

from sasaki.errors import NonPositiveDefinite
from sasaki.utils import DTYPE, as_tensor

__all__ = [
    "ChartDomain",
    "ChartedManifold",
    "MetricJet",
    "ChristoffelData",
    "CurvatureData",
    "BaseVectorField",
    "metric_jet",
    "christoffel",
    "curvature",
    "christoffel_symbols",
    "riemann_tensor",
    "riemann_from_christoffel",
    "lower_riemann",
    "apply_riemann",
    "covariant_jet",
    "covariant_derivative",
    "divergence_base",
    "killing_defect_base",
    "harmonic_defect_base",
    "bracket_base",
    "curvature_annihilator_defect",
    "sample_points",
]


@dataclass(frozen=True)
class ChartDomain:
    """Sampling box plus the (possibly wider) region where the chart is trusted."""

    low: tuple
    high: tuple
    bounds_low: Optional[tuple] = None  # validity box, defaults to -inf
    bounds_high: Optional[tuple] = None
    radius: Optional[float] = None  # validity ball |x| <= radius
    periods: Optional[tuple] = None  # coordinates wrap into [low, low + period)

    def __post_init__(self):
        assert len(self.low) == len(self.high), "box corners must have the same dimension"
        assert all(lo < hi for lo, hi in zip(self.low, self.high)), f"empty sampling box {self.low} {self.high}"

    @property
    def dim(self) -> int:
        return len(self.low)

    def contains(self, x: Tensor) -> bool:
        if not bool(torch.isfinite(x).all()):
            return False
        if self.periods is not None:
            return True
        if self.bounds_low is not None and bool((x < as_tensor(self.bounds_low)).any()):
            return False
        if self.bounds_high is not None and bool((x > as_tensor(self.bounds_high)).any()):
            return False
        if self.radius is not None and torch.linalg.vector_norm(x).item() > self.radius:
            return False
        return True

    def wrap(self, x: Tensor) -> Tensor:
        if self.periods is None:
            return x
        low = as_tensor(self.low)
        periods = as_tensor(self.periods)
        return low + torch.remainder(x - low, periods)

    def sample(self, n: int, generator: torch.Generator) -> Tensor:
        low = as_tensor(self.low)
        high = as_tensor(self.high)
        u = torch.rand(n, self.dim, generator=generator, dtype=DTYPE)
        return low + (high - low) * u


@dataclass(frozen=True)
class ChartedManifold:
    dim: int
    name: str
    metric: Callable[[Tensor], Tensor]
    domain: ChartDomain
    coordinates: tuple = ()
    sectional_curvature: Optional[float] = None  # known constant curvature, if any

    def __post_init__(self):
        assert self.dim > 0, "dimension must be positive"
        assert self.domain.dim == self.dim, f"domain has dimension {self.domain.dim}, expected {self.dim}"
        if not self.coordinates:
            object.__setattr__(self, "coordinates", tuple(f"x{i + 1}" for i in range(self.dim)))

    @property
    def is_flat(self) -> bool:
        return self.sectional_curvature == 0.0

    def __str__(self):
        return self.name


class MetricJet(NamedTuple):
    g: Tensor
    ginv: Tensor
    dg: Tensor  # dg[i, j, k] = d_k g_ij
    d2g: Tensor  # d2g[i, j, k, l] = d_l d_k g_ij
    basepoint: Tensor


class ChristoffelData(NamedTuple):
    gamma: Tensor  # gamma[k, i, j] = Gamma^k_ij
    dgamma: Tensor  # dgamma[k, i, j, l] = d_l Gamma^k_ij


class CurvatureData(NamedTuple):
    riem: Tensor  # riem[l, k, i, j] = R^l_kij, R(d_i, d_j) d_k = R^l_kij d_l
    riem_low: Tensor  # riem_low[k, p, i, j] = g(R(d_i, d_j) d_p, d_k)
    ric: Tensor
    scal: Tensor


@dataclass(frozen=True)
class BaseVectorField:
    components: Callable[[Tensor], Tensor]
    name: str = ""
    jacobian_override: Optional[Callable[[Tensor], Tensor]] = field(default=None, compare=False)

    def __call__(self, x: Tensor) -> Tensor:
        return self.components(x)

    def jacobian(self, x: Tensor) -> Tensor:
        """jacobian[i, j] = d_j X^i."""
        if self.jacobian_override is not None:
            return self.jacobian_override(x)
        return jacfwd(self.components)(x)

    def __str__(self):
        return self.name or "<field>"


def _check_positive_definite(g: Tensor, x: Tensor):
    _, info = torch.linalg.cholesky_ex(g)
    if info.item() != 0 or not bool(torch.isfinite(g).all()):
        raise NonPositiveDefinite(x.tolist())


def christoffel_symbols(M: ChartedManifold, x: Tensor) -> Tensor:
    g = M.metric(x)
    dg = jacfwd(M.metric)(x)
    ginv = torch.linalg.inv(g)
    return 0.5 * (
        torch.einsum("kl,jli->kij", ginv, dg)
        + torch.einsum("kl,ilj->kij", ginv, dg)
        - torch.einsum("kl,ijl->kij", ginv, dg)
    )


def riemann_from_christoffel(gamma: Tensor, dgamma: Tensor) -> Tensor:
    return (
        torch.einsum("ljki->lkij", dgamma)
        - torch.einsum("likj->lkij", dgamma)
        + torch.einsum("lip,pjk->lkij", gamma, gamma)
        - torch.einsum("ljp,pik->lkij", gamma, gamma)
    )


def riemann_tensor(M: ChartedManifold, x: Tensor) -> Tensor:
    gamma = christoffel_symbols(M, x)
    dgamma = jacfwd(lambda y: christoffel_symbols(M, y))(x)
    return riemann_from_christoffel(gamma, dgamma)


def lower_riemann(g: Tensor, riem: Tensor) -> Tensor:
    return torch.einsum("kl,lpij->kpij", g, riem)


def apply_riemann(riem: Tensor, X: Tensor, Y: Tensor, Z: Tensor) -> Tensor:
    """R(X, Y) Z."""
    return torch.einsum("lkij,i,j,k->l", riem, X, Y, Z)


def metric_jet(M: ChartedManifold, x: Tensor) -> MetricJet:
    x = as_tensor(x)
    g = M.metric(x)
    _check_positive_definite(g, x)
    dg = jacfwd(M.metric)(x)
    d2g = jacfwd(jacfwd(M.metric))(x)
    return MetricJet(g=g, ginv=torch.linalg.inv(g), dg=dg, d2g=d2g, basepoint=x)


def christoffel(M: ChartedManifold, x: Tensor) -> ChristoffelData:
    x = as_tensor(x)
    _check_positive_definite(M.metric(x), x)
    gamma = christoffel_symbols(M, x)
    dgamma = jacfwd(lambda y: christoffel_symbols(M, y))(x)
    return ChristoffelData(gamma=gamma, dgamma=dgamma)


def curvature(M: ChartedManifold, x: Tensor) -> CurvatureData:
    x = as_tensor(x)
    gamma, dgamma = christoffel(M, x)
    g = M.metric(x)
    riem = riemann_from_christoffel(gamma, dgamma)
    ric = torch.einsum("ikij->jk", riem)
    scal = torch.einsum("jk,jk->", torch.linalg.inv(g), ric)
    return CurvatureData(riem=riem, riem_low=lower_riemann(g, riem), ric=ric, scal=scal)


def covariant_derivative(M: ChartedManifold, X: BaseVectorField, x: Tensor) -> Tensor:
    """(nabla X)^i_j = d_j X^i + Gamma^i_jk X^k; AD-composable."""
    return X.jacobian(x) + torch.einsum("ijk,k->ij", christoffel_symbols(M, x), X(x))


def covariant_jet(M: ChartedManifold, X: BaseVectorField, x: Tensor) -> tuple:
    """Returns (nabla X, nabla^2 X) with nabla2[i, a, b] = (nabla^2 X(d_a, d_b))^i."""
    x = as_tensor(x)
    gamma = christoffel_symbols(M, x)
    nabla = covariant_derivative(M, X, x)
    d_nabla = jacfwd(lambda y: covariant_derivative(M, X, y))(x)  # [i, b, a]
    nabla2 = (
        d_nabla.permute(0, 2, 1)
        + torch.einsum("iap,pb->iab", gamma, nabla)
        - torch.einsum("pab,ip->iab", gamma, nabla)
    )
    return nabla, nabla2


def divergence_base(M: ChartedManifold, X: BaseVectorField, x: Tensor) -> Tensor:
    return torch.trace(covariant_derivative(M, X, as_tensor(x)))


def killing_defect_base(M: ChartedManifold, X: BaseVectorField, x: Tensor) -> Tensor:
    x = as_tensor(x)
    gn = M.metric(x) @ covariant_derivative(M, X, x)
    return gn + gn.T


def harmonic_defect_base(M: ChartedManifold, X: BaseVectorField, x: Tensor) -> tuple:
    """Returns (d X^flat as a skew matrix, delta X^flat)."""
    x = as_tensor(x)
    flat = jacfwd(lambda y: M.metric(y) @ X(y))(x)  # [j, i] = d_i (X^flat)_j
    return flat.T - flat, -divergence_base(M, X, x)


def bracket_base(M: ChartedManifold, X: BaseVectorField, Y: BaseVectorField, x: Tensor) -> Tensor:
    x = as_tensor(x)
    return Y.jacobian(x) @ X(x) - X.jacobian(x) @ Y(x)


def curvature_annihilator_defect(M: ChartedManifold, X: BaseVectorField, x: Tensor) -> float:
    """max_ij |R(d_i, d_j) X|; zero iff R(., .)X = 0 at x."""
    x = as_tensor(x)
    riem = riemann_tensor(M, x)
    return torch.einsum("lkij,k->lij", riem, X(x)).abs().max().item()


def sample_points(M: ChartedManifold, n: int, generator: torch.Generator) -> Sequence[Tensor]:
    return list(M.domain.sample(n, generator))
