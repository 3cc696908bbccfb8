"""The Sasaki metric on TM and the structures built on it.

Tangent vectors to TM are stored in chart coordinates ``(a, b)`` on ``(d_x, d_v)``; the
split form ``(h, v)`` on ``(pi^* d_i, pi^star d_i)`` is computed on demand. Most operations are
assembled from chart matrices acting on the stacked vector ``cat(a, b)``:

    P      split map, (h, v) = P (a, b)
    G      Sasaki Gram matrix, P^T diag(g, g) P
    N_F    W -> nabla^*_W F
    K_Z    W -> curv(Z, W)
"""
import math
from dataclasses import dataclass
from typing import Callable, Literal, NamedTuple, Optional

import torch
from torch import Tensor
from torch.func import jacfwd

from sasaki.geometry import (
    BaseVectorField,
    ChartedManifold,
    christoffel_symbols,
    curvature,
    riemann_from_christoffel,
    riemann_tensor,
)
from sasaki.geodesics import rk4_step
from sasaki.utils import DTYPE, as_tensor

__all__ = [
    "TangentBundlePoint",
    "TTVector",
    "SplitVector",
    "TMVectorField",
    "BundleJet",
    "bundle_jet",
    "split",
    "assemble",
    "horizontal_lift",
    "vertical_lift",
    "complete_lift",
    "extension_identity_defect",
    "canonical_fields",
    "horizontal_lift_field",
    "vertical_lift_field",
    "complete_lift_field",
    "canonical_field",
    "spray_field",
    "mirror_field",
    "tanno_field",
    "mirror_apply",
    "mirror_matrix",
    "sasaki_matrix",
    "sasaki_inner",
    "adapted_frame",
    "curvature_op_R",
    "nabla_star",
    "nabla_star_matrix",
    "d_star",
    "sasaki_connection",
    "sasaki_connection_matrix",
    "theta",
    "omega",
    "theta_omega",
    "curvature_norm_sq",
    "sasaki_scalar",
    "lie_metric",
    "lie_metric_matrix",
    "lie_omega_matrix",
    "lie_theta_covector",
    "lie_B",
    "lie_Bt",
    "lie_B_matrix",
    "lie_Bt_matrix",
    "lie_mirror_matrices",
    "bracket_tm",
    "divergence_tm",
    "frame_trace",
    "fibre_preserving_defect",
    "flow_map",
    "flow_lie_derivative",
    "sample_bundle_points",
]

Mirror = Literal["B", "Bt", "JNS", "golden"]


class TangentBundlePoint(NamedTuple):
    x: Tensor
    v: Tensor

    @classmethod
    def of(cls, x, v) -> "TangentBundlePoint":
        return cls(as_tensor(x), as_tensor(v))

    @classmethod
    def from_stacked(cls, y: Tensor) -> "TangentBundlePoint":
        m = y.shape[0] // 2
        return cls(y[:m], y[m:])

    def stacked(self) -> Tensor:
        return torch.cat([self.x, self.v])

    @property
    def dim(self) -> int:
        return self.x.shape[0]


class TTVector(NamedTuple):
    a: Tensor  # coefficients on d_{x^i}
    b: Tensor  # coefficients on d_{v^i}

    @classmethod
    def of(cls, a, b) -> "TTVector":
        return cls(as_tensor(a), as_tensor(b))

    @classmethod
    def from_stacked(cls, w: Tensor) -> "TTVector":
        m = w.shape[0] // 2
        return cls(w[:m], w[m:])

    def stacked(self) -> Tensor:
        return torch.cat([self.a, self.b])


class SplitVector(NamedTuple):
    h: Tensor  # coefficients on pi^* d_i
    v: Tensor  # coefficients on pi^star d_i

    @classmethod
    def from_stacked(cls, s: Tensor) -> "SplitVector":
        m = s.shape[0] // 2
        return cls(s[:m], s[m:])

    def stacked(self) -> Tensor:
        return torch.cat([self.h, self.v])


@dataclass(frozen=True)
class TMVectorField:
    components: Callable[[TangentBundlePoint], TTVector]
    name: str = ""

    def __call__(self, u: TangentBundlePoint) -> TTVector:
        return self.components(u)

    def flat(self, y: Tensor) -> Tensor:
        return self.components(TangentBundlePoint.from_stacked(y)).stacked()

    def jacobian(self, u: TangentBundlePoint) -> Tensor:
        """Chart jacobian [2m, 2m] in the variables (x, v)."""
        return jacfwd(self.flat)(u.stacked())

    def __add__(self, other: "TMVectorField") -> "TMVectorField":
        return TMVectorField(
            lambda u: TTVector.from_stacked(self(u).stacked() + other(u).stacked()),
            name=f"{self}+{other}",
        )

    def scaled(self, c: float) -> "TMVectorField":
        return TMVectorField(lambda u: TTVector.from_stacked(c * self(u).stacked()), name=f"{c}*{self}")

    def __str__(self):
        return self.name or "<tm-field>"


def _blocks(a: Tensor, b: Tensor, c: Tensor, d: Tensor) -> Tensor:
    return torch.cat([torch.cat([a, b], dim=1), torch.cat([c, d], dim=1)], dim=0)


def _connection(gamma: Tensor, v: Tensor) -> Tensor:
    """conn[b, i] = Gamma^b_ij v^j."""
    return torch.einsum("bij,j->bi", gamma, v)


def _split_matrix(conn: Tensor) -> Tensor:
    m = conn.shape[0]
    eye = torch.eye(m, dtype=DTYPE)
    zero = torch.zeros(m, m, dtype=DTYPE)
    return _blocks(eye, zero, conn, eye)


def _gram(g: Tensor, P: Tensor) -> Tensor:
    zero = torch.zeros_like(g)
    return P.T @ _blocks(g, zero, zero, g) @ P


def _split_mirror(which: str, m: int) -> Tensor:
    eye = torch.eye(m, dtype=DTYPE)
    zero = torch.zeros(m, m, dtype=DTYPE)
    b = _blocks(zero, zero, eye, zero)
    bt = _blocks(zero, eye, zero, zero)
    if which == "B":
        return b
    if which == "Bt":
        return bt
    if which == "JNS":
        return b - bt
    if which == "golden":
        return 0.5 * torch.eye(2 * m, dtype=DTYPE) + 0.5 * math.sqrt(5.0) * (b + bt)
    raise NotImplementedError(f"Unknown mirror map {which}")


def _chart_mirror(gamma: Tensor, v: Tensor, which: str) -> Tensor:
    conn = _connection(gamma, v)
    P = _split_matrix(conn)
    P_inv = _split_matrix(-conn)
    return P_inv @ _split_mirror(which, v.shape[0]) @ P


class BundleJet(NamedTuple):
    """Everything pointwise at u that the tangent-bundle formulas need.

    Build it once per sample point and hand it to the ``jet=`` keyword of the matrix
    functions below; without it each call recomputes the Christoffel symbols.
    """

    point: TangentBundlePoint
    g: Tensor
    ginv: Tensor
    gamma: Tensor
    dgamma: Tensor  # [k, i, j, l] = d_l Gamma^k_ij
    split: Tensor  # P
    assemble: Tensor  # P^-1
    sasaki: Tensor  # G
    riem: Optional[Tensor]

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    def riem_v(self) -> Tensor:
        """riem_v[l, i, j] = R^l_kij v^k, so curv(W1, W2) has v-part riem_v(a1, a2)."""
        return torch.einsum("lkij,k->lij", self.riem, self.point.v)

    def mirror(self, which: str) -> Tensor:
        return self.assemble @ _split_mirror(which, self.dim) @ self.split


def bundle_jet(M: ChartedManifold, u: TangentBundlePoint, with_curvature: bool = True) -> BundleJet:
    x, v = u
    g = M.metric(x)
    gamma = christoffel_symbols(M, x)
    dgamma = jacfwd(lambda y: christoffel_symbols(M, y))(x)
    conn = _connection(gamma, v)
    P = _split_matrix(conn)
    return BundleJet(
        point=u,
        g=g,
        ginv=torch.linalg.inv(g),
        gamma=gamma,
        dgamma=dgamma,
        split=P,
        assemble=_split_matrix(-conn),
        sasaki=_gram(g, P),
        riem=riemann_from_christoffel(gamma, dgamma) if with_curvature else None,
    )


def _jet(M: ChartedManifold, u: TangentBundlePoint, jet: Optional[BundleJet]) -> BundleJet:
    return bundle_jet(M, u) if jet is None else jet


def sample_bundle_points(M: ChartedManifold, n: int, generator: torch.Generator) -> list:
    """Seeded sample of TM over the sampling box; the first point lies on the zero section."""
    xs = M.domain.sample(n, generator)
    vs = torch.randn(n, M.dim, generator=generator, dtype=DTYPE)
    vs[0] = 0.0
    return [TangentBundlePoint(x, v) for x, v in zip(xs, vs)]


def sasaki_matrix(M: ChartedManifold, u: TangentBundlePoint, jet: Optional[BundleJet] = None) -> Tensor:
    """Chart Gram matrix of the Sasaki metric at u; AD-composable in u when no jet is given."""
    if jet is not None:
        return jet.sasaki
    conn = _connection(christoffel_symbols(M, u.x), u.v)
    return _gram(M.metric(u.x), _split_matrix(conn))


def mirror_matrix(M: ChartedManifold, u: TangentBundlePoint, which: Mirror, jet: Optional[BundleJet] = None) -> Tensor:
    """Chart matrix of B, B^t, J^NS or the golden structure at u; AD-composable in u when no jet is given."""
    if jet is not None:
        return jet.mirror(which)
    return _chart_mirror(christoffel_symbols(M, u.x), u.v, which)


def split(M: ChartedManifold, u: TangentBundlePoint, W: TTVector) -> SplitVector:
    conn = _connection(christoffel_symbols(M, u.x), u.v)
    return SplitVector(W.a, W.b + conn @ W.a)


def assemble(M: ChartedManifold, u: TangentBundlePoint, S: SplitVector) -> TTVector:
    conn = _connection(christoffel_symbols(M, u.x), u.v)
    return TTVector(S.h, S.v - conn @ S.h)


def horizontal_lift(M: ChartedManifold, X: BaseVectorField, u: TangentBundlePoint) -> TTVector:
    return horizontal_lift_field(M, X)(u)


def vertical_lift(M: ChartedManifold, X: BaseVectorField, u: TangentBundlePoint) -> TTVector:
    return vertical_lift_field(X)(u)


def complete_lift(M: ChartedManifold, X: BaseVectorField, u: TangentBundlePoint, check: bool = False) -> TTVector:
    lifted = complete_lift_field(X)(u)
    if check:
        defect = extension_identity_defect(M, X, u)
        assert defect < 1e-9, f"extension of {X} disagrees with pi^*X + nabla^*_S pi^star X by {defect:.3e}"
    return lifted


def extension_identity_defect(M: ChartedManifold, X: BaseVectorField, u: TangentBundlePoint) -> float:
    """max |X~ - (pi^*X + nabla^*_S pi^star X)| in chart components."""
    _, S = canonical_fields(M, u)
    lifted = complete_lift_field(X)(u).stacked()
    rebuilt = horizontal_lift(M, X, u).stacked() + nabla_star(M, vertical_lift_field(X), u, S).stacked()
    return (lifted - rebuilt).abs().max().item()


def canonical_fields(M: ChartedManifold, u: TangentBundlePoint) -> tuple:
    return canonical_field()(u), spray_field(M)(u)


def horizontal_lift_field(M: ChartedManifold, X: BaseVectorField) -> TMVectorField:
    def components(u: TangentBundlePoint) -> TTVector:
        value = X(u.x)
        return TTVector(value, -_connection(christoffel_symbols(M, u.x), u.v) @ value)

    return TMVectorField(components, name=f"h:{X}")


def vertical_lift_field(X: BaseVectorField) -> TMVectorField:
    def components(u: TangentBundlePoint) -> TTVector:
        value = X(u.x)
        return TTVector(torch.zeros_like(value), value)

    return TMVectorField(components, name=f"v:{X}")


def complete_lift_field(X: BaseVectorField) -> TMVectorField:
    def components(u: TangentBundlePoint) -> TTVector:
        return TTVector(X(u.x), X.jacobian(u.x) @ u.v)

    return TMVectorField(components, name=f"ext:{X}")


def canonical_field() -> TMVectorField:
    return TMVectorField(lambda u: TTVector(torch.zeros_like(u.v), u.v), name="xi")


def spray_field(M: ChartedManifold) -> TMVectorField:
    def components(u: TangentBundlePoint) -> TTVector:
        return TTVector(u.v, -_connection(christoffel_symbols(M, u.x), u.v) @ u.v)

    return TMVectorField(components, name="spray")


def mirror_field(M: ChartedManifold, Z: TMVectorField, which: Mirror) -> TMVectorField:
    def components(u: TangentBundlePoint) -> TTVector:
        if which == "B":
            # chart matrix of B is [[0, 0], [I, 0]] at every u
            a = Z(u).a
            return TTVector(torch.zeros_like(a), a)
        return TTVector.from_stacked(mirror_matrix(M, u, which) @ Z(u).stacked())

    return TMVectorField(components, name=f"{which}({Z})")


def tanno_field(P: Tensor) -> TMVectorField:
    """pi^star(P xi): the vertical field whose fibre value at u is P u."""
    P = as_tensor(P)

    def components(u: TangentBundlePoint) -> TTVector:
        return TTVector(torch.zeros_like(u.v), P @ u.v)

    return TMVectorField(components, name="tanno")


def mirror_apply(M: ChartedManifold, u: TangentBundlePoint, W: TTVector, which: Mirror) -> TTVector:
    return TTVector.from_stacked(mirror_matrix(M, u, which) @ W.stacked())


def sasaki_inner(M: ChartedManifold, u: TangentBundlePoint, W1: TTVector, W2: TTVector) -> Tensor:
    return W1.stacked() @ sasaki_matrix(M, u) @ W2.stacked()


def adapted_frame(M: ChartedManifold, u: TangentBundlePoint, jet: Optional[BundleJet] = None) -> Tensor:
    """Columns e_1..e_2m: horizontal lifts of the g-orthonormalized coordinate basis, then their images under B.

    Gram-Schmidt of (d_1, ..., d_m) in index order is the inverse transpose of the Cholesky factor of g.
    """
    if jet is None:
        g = M.metric(u.x)
        to_chart = _split_matrix(-_connection(christoffel_symbols(M, u.x), u.v))
    else:
        g, to_chart = jet.g, jet.assemble
    m = g.shape[0]
    L = torch.linalg.cholesky(g)
    E = torch.linalg.solve_triangular(L.T, torch.eye(m, dtype=DTYPE), upper=True)
    zero = torch.zeros(m, m, dtype=DTYPE)
    split_frame = _blocks(E, zero, zero, E)
    return to_chart @ split_frame


def curvature_op_R(M: ChartedManifold, u: TangentBundlePoint, W1: TTVector, W2: TTVector) -> TTVector:
    riem = riemann_tensor(M, u.x)
    value = torch.einsum("lkij,i,j,k->l", riem, W1.a, W2.a, u.v)
    return TTVector(torch.zeros_like(value), value)


def _curv_left(jet: BundleJet, w: Tensor) -> Tensor:
    """Chart matrix of W -> curv(w, W)."""
    m = jet.dim
    rv = jet.riem_v()
    block = torch.einsum("lij,i->lj", rv, w[:m])
    zero = torch.zeros(m, m, dtype=DTYPE)
    return _blocks(zero, zero, block, zero)


def _curv(jet: BundleJet, w1: Tensor, w2: Tensor) -> Tensor:
    return _curv_left(jet, w1) @ w2


def nabla_star_matrix(
    M: ChartedManifold, F: TMVectorField, u: TangentBundlePoint, jet: Optional[BundleJet] = None
) -> Tensor:
    """Chart matrix N with N @ W = nabla^*_W F.

    The split components s = (F_a, F_b + conn F_a) of F are differentiated along W, then each
    factor gets its own Levi-Civita correction: pi^* nabla on the h-part, pi^star nabla on the
    v-part. Only F is differentiated by AD; the derivative of conn comes from the jet.
    """
    jet = _jet(M, u, jet)
    m = u.dim
    gamma = jet.gamma
    f = F(u).stacked()
    dF = F.jacobian(u)
    fa = f[:m]
    conn = _connection(gamma, u.v)
    s = torch.cat([fa, f[m:] + conn @ fa])
    d_conn = torch.cat(
        [torch.einsum("bijl,i,j->bl", jet.dgamma, fa, u.v), torch.einsum("bij,i->bj", gamma, fa)], dim=1
    )
    derivative = torch.cat([dF[:m], dF[m:] + conn @ dF[:m] + d_conn], dim=0)
    zero = torch.zeros(m, m, dtype=DTYPE)
    correction = _blocks(
        torch.einsum("ijk,k->ij", gamma, s[:m]),
        zero,
        torch.einsum("ijk,k->ij", gamma, s[m:]),
        zero,
    )
    return jet.assemble @ (derivative + correction)


def nabla_star(M: ChartedManifold, F: TMVectorField, u: TangentBundlePoint, W: TTVector) -> TTVector:
    return TTVector.from_stacked(nabla_star_matrix(M, F, u) @ W.stacked())


def d_star(M: ChartedManifold, F: TMVectorField, u: TangentBundlePoint, W: TTVector) -> TTVector:
    """D^*_W F = nabla^*_W F - curv(W, F)/2; torsion-free."""
    jet = bundle_jet(M, u)
    w = W.stacked()
    value = nabla_star_matrix(M, F, u, jet) @ w - 0.5 * _curv(jet, w, F(u).stacked())
    return TTVector.from_stacked(value)


def _a_term(jet: BundleJet, w: Tensor, f: Tensor) -> Tensor:
    """A(W, F): horizontal, g(A(X, Y), Z) = (g(curv(X, Z), Y) + g(curv(Y, Z), X)) / 2."""
    m = jet.dim
    rv = jet.riem_v()
    v_w = (jet.split @ w)[m:]
    v_f = (jet.split @ f)[m:]
    # g(curv(X, pi^* d_c), Y) = (g Y_v)_l R^l_kic v^k X^i
    flat = 0.5 * (
        torch.einsum("l,lic,i->c", jet.g @ v_f, rv, w[:m])
        + torch.einsum("l,lic,i->c", jet.g @ v_w, rv, f[:m])
    )
    h = jet.ginv @ flat
    return jet.assemble @ torch.cat([h, torch.zeros_like(h)])


def sasaki_connection_matrix(
    M: ChartedManifold, F: TMVectorField, u: TangentBundlePoint, jet: Optional[BundleJet] = None
) -> Tensor:
    jet = _jet(M, u, jet)
    N = nabla_star_matrix(M, F, u, jet)
    f = F(u).stacked()
    basis = torch.eye(2 * u.dim, dtype=DTYPE)
    columns = [_a_term(jet, e, f) - 0.5 * _curv(jet, e, f) for e in basis]
    return N + torch.stack(columns, dim=1)


def sasaki_connection(M: ChartedManifold, F: TMVectorField, u: TangentBundlePoint, W: TTVector) -> TTVector:
    return TTVector.from_stacked(sasaki_connection_matrix(M, F, u) @ W.stacked())


def theta(M: ChartedManifold, u: TangentBundlePoint, W: TTVector) -> Tensor:
    return u.v @ M.metric(u.x) @ W.a


def omega(M: ChartedManifold, u: TangentBundlePoint, W1: TTVector, W2: TTVector) -> Tensor:
    return -sasaki_inner(M, u, mirror_apply(M, u, W1, "JNS"), W2)


def theta_omega(M: ChartedManifold, u: TangentBundlePoint, W1: TTVector, W2: TTVector) -> tuple:
    return theta(M, u, W1), omega(M, u, W1, W2)


def curvature_norm_sq(M: ChartedManifold, u: TangentBundlePoint) -> Tensor:
    """|curv|^2 = v^p v^p' R_kpij R_k'p'i'j' g^ii' g^jj' g^kk'."""
    curv = curvature(M, u.x)
    ginv = torch.linalg.inv(M.metric(u.x))
    contracted = torch.einsum("kpij,p->kij", curv.riem_low, u.v)
    return torch.einsum("kij,abc,ka,ib,jc->", contracted, contracted, ginv, ginv, ginv)


def sasaki_scalar(M: ChartedManifold, u: TangentBundlePoint) -> Tensor:
    return curvature(M, u.x).scal - 0.25 * curvature_norm_sq(M, u)


def lie_metric_matrix(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, jet: Optional[BundleJet] = None
) -> Tensor:
    """L[p, q] = (L_Z g)(e_p, e_q) on the chart basis.

    g(nabla^*_Y Z, W) + g(Y, nabla^*_W Z) + g(curv(Z, W), Y) + g(curv(Z, Y), W).
    """
    jet = _jet(M, u, jet)
    half = jet.sasaki @ (nabla_star_matrix(M, Z, u, jet) + _curv_left(jet, Z(u).stacked()))
    return half + half.T


def lie_metric(M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, W1: TTVector, W2: TTVector) -> Tensor:
    return W1.stacked() @ lie_metric_matrix(M, Z, u) @ W2.stacked()


def lie_omega_matrix(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, jet: Optional[BundleJet] = None
) -> Tensor:
    """-g(nabla^*_Y JZ, W) + g(nabla^*_W JZ, Y) - g(JZ, curv(Y, W))."""
    jet = _jet(M, u, jet)
    m = u.dim
    N_J = nabla_star_matrix(M, mirror_field(M, Z, "JNS"), u, jet)
    jz = jet.mirror("JNS") @ Z(u).stacked()
    curv_term = torch.zeros(2 * m, 2 * m, dtype=DTYPE)
    curv_term[:m, :m] = -torch.einsum("l,lpq->pq", (jet.sasaki @ jz)[m:], jet.riem_v())
    return -N_J.T @ jet.sasaki + jet.sasaki @ N_J + curv_term


def lie_theta_covector(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, jet: Optional[BundleJet] = None
) -> Tensor:
    """c with c @ Y = (L_Z theta)(Y) = g(B^t Z, Y) + g(S, nabla^*_Y Z^h)."""
    jet = _jet(M, u, jet)
    _, S = canonical_fields(M, u)
    N = nabla_star_matrix(M, Z, u, jet)
    return jet.sasaki @ jet.mirror("Bt") @ Z(u).stacked() + N.T @ jet.sasaki @ S.stacked()


def _lie_b(M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, jet: BundleJet, N: Tensor) -> Tensor:
    return -N @ jet.mirror("B") + nabla_star_matrix(M, mirror_field(M, Z, "B"), u, jet)


def _lie_bt(M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, jet: BundleJet, N: Tensor) -> Tensor:
    bt = jet.mirror("Bt")
    K = _curv_left(jet, Z(u).stacked())
    return -N @ bt + nabla_star_matrix(M, mirror_field(M, Z, "Bt"), u, jet) + bt @ K - K @ bt


def lie_B_matrix(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, jet: Optional[BundleJet] = None
) -> Tensor:
    """(L_Z B)(Y) = -nabla^*_{BY} Z + nabla^*_Y BZ."""
    jet = _jet(M, u, jet)
    return _lie_b(M, Z, u, jet, nabla_star_matrix(M, Z, u, jet))


def lie_Bt_matrix(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, jet: Optional[BundleJet] = None
) -> Tensor:
    """(L_Z B^t)(Y) = -nabla^*_{B^t Y} Z + nabla^*_Y B^t Z + pi^* R(Z, Y) S - curv(Z, B^t Y)."""
    jet = _jet(M, u, jet)
    return _lie_bt(M, Z, u, jet, nabla_star_matrix(M, Z, u, jet))


def lie_mirror_matrices(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, jet: Optional[BundleJet] = None
) -> tuple:
    """(L_Z B, L_Z B^t) sharing one nabla^* Z."""
    jet = _jet(M, u, jet)
    N = nabla_star_matrix(M, Z, u, jet)
    return _lie_b(M, Z, u, jet, N), _lie_bt(M, Z, u, jet, N)


def lie_B(M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, W: TTVector) -> TTVector:
    return TTVector.from_stacked(lie_B_matrix(M, Z, u) @ W.stacked())


def lie_Bt(M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, W: TTVector) -> TTVector:
    return TTVector.from_stacked(lie_Bt_matrix(M, Z, u) @ W.stacked())


def bracket_tm(M: ChartedManifold, Z1: TMVectorField, Z2: TMVectorField, u: TangentBundlePoint) -> TTVector:
    value = Z2.jacobian(u) @ Z1(u).stacked() - Z1.jacobian(u) @ Z2(u).stacked()
    return TTVector.from_stacked(value)


def frame_trace(M: ChartedManifold, u: TangentBundlePoint, T: Tensor, jet: Optional[BundleJet] = None) -> Tensor:
    """sum_a g(T e_a, e_a) over the adapted orthonormal frame."""
    E = adapted_frame(M, u, jet)
    return torch.einsum("pa,pq,qa->", T @ E, sasaki_matrix(M, u, jet), E)


def divergence_tm(
    M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint, jet: Optional[BundleJet] = None
) -> Tensor:
    jet = _jet(M, u, jet)
    return frame_trace(M, u, sasaki_connection_matrix(M, Z, u, jet), jet)


def fibre_preserving_defect(M: ChartedManifold, Z: TMVectorField, u: TangentBundlePoint) -> float:
    """max |d a^i / d v^j|: Z^h must depend on x only."""
    m = u.dim
    return Z.jacobian(u)[:m, m:].abs().max().item()


def flow_map(Z: TMVectorField, y: Tensor, t: float, dt: float = 1e-3) -> Tensor:
    """Time-t flow of Z from chart point y by classical RK4 with steps no longer than dt."""
    steps = max(1, math.ceil(abs(t) / dt))
    h = t / steps
    for _ in range(steps):
        y = rk4_step(Z.flat, y, h)
    return y


_FLOW_TENSORS = {
    "metric": ("form", lambda M, u: sasaki_matrix(M, u)),
    "omega": ("form", lambda M, u: -mirror_matrix(M, u, "JNS").T @ sasaki_matrix(M, u)),
    "theta": ("covector", lambda M, u: torch.cat([M.metric(u.x) @ u.v, torch.zeros_like(u.v)])),
    "B": ("endomorphism", lambda M, u: mirror_matrix(M, u, "B")),
    "Bt": ("endomorphism", lambda M, u: mirror_matrix(M, u, "Bt")),
}


def flow_lie_derivative(
    M: ChartedManifold,
    Z: TMVectorField,
    u: TangentBundlePoint,
    tensor: str,
    h: float = 1e-4,
    dt: float = 1e-3,
) -> Tensor:
    """Lie derivative of a chart tensor field along Z as d/dt of its flow pull-back at t = 0.

    Central differences at steps h and h/2 are Richardson-combined, so the error is O(h^4).
    """
    if tensor not in _FLOW_TENSORS:
        raise NotImplementedError(f"Unknown tensor {tensor}")
    kind, field_fn = _FLOW_TENSORS[tensor]
    y = u.stacked()

    def pulled_back(t: float) -> Tensor:
        J = jacfwd(lambda z: flow_map(Z, z, t, dt))(y)
        value = field_fn(M, TangentBundlePoint.from_stacked(flow_map(Z, y, t, dt)))
        if kind == "form":
            return J.T @ value @ J
        if kind == "covector":
            return J.T @ value
        return torch.linalg.solve(J, value @ J)

    def central(step: float) -> Tensor:
        return (pulled_back(step) - pulled_back(-step)) / (2 * step)

    return (4 * central(h / 2) - central(h)) / 3
