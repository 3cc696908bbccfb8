"""1-forms on M and on TM: lifts, exterior derivative and codifferential.

A 1-form on TM is stored as its chart covector ``c`` on the stacked basis ``(d_x, d_v)``,
so ``mu(W) = c @ W.stacked()``.
"""
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import torch
from torch import Tensor
from torch.func import jacfwd

from sasaki.bundle import (
    TangentBundlePoint,
    TMVectorField,
    TTVector,
    canonical_fields,
    divergence_tm,
    mirror_matrix,
    nabla_star_matrix,
    sasaki_matrix,
)
from sasaki.geometry import BaseVectorField, ChartedManifold, divergence_base
from sasaki.utils import DTYPE, as_tensor

__all__ = [
    "OneFormField",
    "TMOneForm",
    "sharp_base",
    "flat_base",
    "codifferential_base",
    "exterior_derivative_base",
    "lift_one_form",
    "lifted_form",
    "extension_chart",
    "extension_connection",
    "flat_tm",
    "sharp_tm",
    "codifferential_tm",
    "exterior_derivative_tm",
    "harmonic_defect_tm",
    "closed_dual_defect",
]

Lift = Literal["pullback", "vertical", "extension"]


@dataclass(frozen=True)
class OneFormField:
    components: Callable[[Tensor], Tensor]  # f_i
    name: str = ""
    jacobian_override: Optional[Callable[[Tensor], Tensor]] = field(default=None, compare=False)

    def __call__(self, x: Tensor) -> Tensor:
        return self.components(x)

    def jacobian(self, x: Tensor) -> Tensor:
        """jacobian[i, j] = d_j f_i."""
        if self.jacobian_override is not None:
            return self.jacobian_override(x)
        return jacfwd(self.components)(x)

    def __str__(self):
        return self.name or "<form>"


@dataclass(frozen=True)
class TMOneForm:
    components: Callable[[TangentBundlePoint], Tensor]  # chart covector, length 2m
    name: str = ""

    def __call__(self, u: TangentBundlePoint) -> Tensor:
        return self.components(u)

    def flat(self, y: Tensor) -> Tensor:
        return self.components(TangentBundlePoint.from_stacked(y))

    def __str__(self):
        return self.name or "<tm-form>"


def sharp_base(M: ChartedManifold, alpha: OneFormField) -> BaseVectorField:
    return BaseVectorField(lambda x: torch.linalg.solve(M.metric(x), alpha(x)), name=f"sharp({alpha})")


def flat_base(M: ChartedManifold, X: BaseVectorField) -> OneFormField:
    return OneFormField(lambda x: M.metric(x) @ X(x), name=f"flat({X})")


def codifferential_base(M: ChartedManifold, alpha: OneFormField, x: Tensor) -> Tensor:
    """delta alpha = -g^ij (nabla_i alpha)_j = -div alpha^sharp."""
    return -divergence_base(M, sharp_base(M, alpha), as_tensor(x))


def exterior_derivative_base(alpha: OneFormField, x: Tensor) -> Tensor:
    """d alpha[i, j] = d_i f_j - d_j f_i."""
    jac = alpha.jacobian(as_tensor(x))
    return jac.T - jac


def _pullback_covector(f: Tensor) -> Tensor:
    return torch.cat([f, torch.zeros_like(f)])


def extension_chart(alpha: OneFormField, u: TangentBundlePoint) -> Tensor:
    """alpha~ = v^j d_j f_i dx^i + f_i dv^i."""
    return torch.cat([alpha.jacobian(u.x) @ u.v, alpha(u.x)])


def _covector_nabla_star(M: ChartedManifold, mu: TMOneForm, u: TangentBundlePoint, w: Tensor) -> Tensor:
    """(nabla^*_W mu)(e_p) = W(mu_p) - mu(nabla^*_W e_p), e_p the constant chart fields."""
    n = w.shape[0]
    value = mu(u)
    directional = jacfwd(mu.flat)(u.stacked()) @ w
    correction = []
    for p in range(n):
        e_p = torch.zeros(n, dtype=DTYPE)
        e_p[p] = 1.0
        constant = TMVectorField(lambda _, e_p=e_p: TTVector.from_stacked(e_p))
        correction.append(value @ (nabla_star_matrix(M, constant, u) @ w))
    return directional - torch.stack(correction)


def extension_connection(M: ChartedManifold, alpha: OneFormField, u: TangentBundlePoint) -> Tensor:
    """alpha~ = nabla^*_S pi^* alpha + pi^star alpha, with nabla^* on covectors."""
    pullback = lifted_form(alpha, "pullback")
    _, S = canonical_fields(M, u)
    return _covector_nabla_star(M, pullback, u, S.stacked()) + lift_one_form(M, alpha, u, "vertical")


def lift_one_form(M: ChartedManifold, alpha: OneFormField, u: TangentBundlePoint, which: Lift) -> Tensor:
    if which == "pullback":
        return _pullback_covector(alpha(u.x))
    if which == "vertical":
        # pi^star alpha = pi^* alpha o B^t
        return mirror_matrix(M, u, "Bt").T @ _pullback_covector(alpha(u.x))
    if which == "extension":
        return extension_chart(alpha, u)
    raise NotImplementedError(f"Unknown lift {which}")


def lifted_form(alpha: OneFormField, which: Lift, M: Optional[ChartedManifold] = None) -> TMOneForm:
    if which == "vertical":
        assert M is not None, "the vertical lift of a 1-form needs the base metric"
        return TMOneForm(lambda u: lift_one_form(M, alpha, u, which), name=f"v:{alpha}")
    if which == "pullback":
        return TMOneForm(lambda u: _pullback_covector(alpha(u.x)), name=f"h:{alpha}")
    if which == "extension":
        return TMOneForm(lambda u: extension_chart(alpha, u), name=f"ext:{alpha}")
    raise NotImplementedError(f"Unknown lift {which}")


def flat_tm(M: ChartedManifold, Z: TMVectorField) -> TMOneForm:
    return TMOneForm(lambda u: sasaki_matrix(M, u) @ Z(u).stacked(), name=f"flat({Z})")


def sharp_tm(M: ChartedManifold, mu: TMOneForm) -> TMVectorField:
    return TMVectorField(
        lambda u: TTVector.from_stacked(torch.linalg.solve(sasaki_matrix(M, u), mu(u))),
        name=f"sharp({mu})",
    )


def codifferential_tm(M: ChartedManifold, mu: TMOneForm, u: TangentBundlePoint) -> Tensor:
    """delta mu = -sum_a g(nabla^g_{e_a} mu^sharp, e_a) over the adapted frame."""
    return -divergence_tm(M, sharp_tm(M, mu), u)


def exterior_derivative_tm(mu: TMOneForm, u: TangentBundlePoint) -> Tensor:
    jac = jacfwd(mu.flat)(u.stacked())  # [q, p] = d_p mu_q
    return jac.T - jac


def closed_dual_defect(M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint) -> float:
    return exterior_derivative_tm(flat_tm(M, Z), u).abs().max().item()


def harmonic_defect_tm(M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint) -> tuple:
    """(max |d Z^flat|, |delta Z^flat|); Z is harmonic iff both vanish."""
    return closed_dual_defect(M, Z, u), divergence_tm(M, Z, u).abs().item()
