import math

import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from torch.func import jacfwd

from sasaki.bundle import (
    SplitVector,
    TangentBundlePoint,
    TTVector,
    adapted_frame,
    assemble,
    bracket_tm,
    bundle_jet,
    canonical_field,
    complete_lift,
    complete_lift_field,
    curvature_norm_sq,
    curvature_op_R,
    divergence_tm,
    fibre_preserving_defect,
    flow_lie_derivative,
    horizontal_lift,
    lie_B,
    lie_B_matrix,
    lie_Bt,
    lie_Bt_matrix,
    lie_metric,
    lie_metric_matrix,
    lie_mirror_matrices,
    lie_omega_matrix,
    lie_theta_covector,
    mirror_apply,
    mirror_field,
    mirror_matrix,
    nabla_star,
    nabla_star_matrix,
    omega,
    sample_bundle_points,
    sasaki_connection,
    sasaki_inner,
    sasaki_matrix,
    sasaki_scalar,
    split,
    spray_field,
    theta,
    theta_omega,
    vertical_lift,
    vertical_lift_field,
)
from sasaki.fields import make_field
from sasaki.geometry import BaseVectorField, bracket_base, christoffel_symbols
from sasaki.models import make_model
from sasaki.utils import DTYPE, make_generator, max_abs
from tests.conftest import vec

component = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


def point(x, v) -> TangentBundlePoint:
    return TangentBundlePoint.of(x, v)


def test_sasaki_matrix_on_zero_section(sphere):
    u = point([0.3, -0.4], [0.0, 0.0])
    g = sphere.metric(u.x)
    expected = torch.block_diag(g, g)
    assert max_abs(sasaki_matrix(sphere, u) - expected) < 1e-15


@given(component, component, component, component)
def test_split_inverts_assemble(a1, a2, b1, b2):
    M = make_model("halfplane")
    u = point([0.2, 1.3], [0.7, -0.4])
    S = SplitVector(vec(a1, a2), vec(b1, b2))
    assert max_abs(split(M, u, assemble(M, u, S)).stacked() - S.stacked()) < 1e-13


def test_mirror_structure_identities(halfplane):
    u = point([0.1, 0.8], [0.5, -1.5])
    B, Bt = mirror_matrix(halfplane, u, "B"), mirror_matrix(halfplane, u, "Bt")
    J, phi = mirror_matrix(halfplane, u, "JNS"), mirror_matrix(halfplane, u, "golden")
    eye = torch.eye(4, dtype=DTYPE)
    assert max_abs(B @ B) < 1e-13
    assert max_abs(Bt @ Bt) < 1e-13
    assert max_abs(J - (B - Bt)) < 1e-13
    assert max_abs(J @ J + eye) < 1e-12
    assert max_abs(phi @ phi - phi - eye) < 1e-12


def test_mirror_map_swaps_lifts(sphere):
    u = point([0.3, 0.2], [1.0, -0.5])
    X = make_field(sphere, "rotation:1,2", kind="base")
    h, v = horizontal_lift(sphere, X, u), vertical_lift(sphere, X, u)
    assert max_abs(mirror_matrix(sphere, u, "B") @ h.stacked() - v.stacked()) < 1e-13
    assert max_abs(mirror_matrix(sphere, u, "Bt") @ v.stacked() - h.stacked()) < 1e-13
    assert max_abs(mirror_matrix(sphere, u, "B") @ v.stacked()) < 1e-13


def test_canonical_two_forms(euclidean):
    u = point([0.0, 0.0], [0.3, 0.4])
    e1_h = TTVector.of([1.0, 0.0], [0.0, 0.0])
    e1_v = TTVector.of([0.0, 0.0], [1.0, 0.0])
    assert omega(euclidean, u, e1_h, e1_v).item() == pytest.approx(-1.0)
    assert omega(euclidean, u, e1_v, e1_h).item() == pytest.approx(1.0)
    assert theta(euclidean, u, spray_field(euclidean)(u)).item() == pytest.approx(0.25)


def test_adapted_frame_is_orthonormal(model):
    for u in sample_bundle_points(model, 4, make_generator(7)):
        E = adapted_frame(model, u)
        assert max_abs(E.T @ sasaki_matrix(model, u) @ E - torch.eye(4, dtype=DTYPE)) < 1e-12


def test_nabla_star_of_canonical_field(sphere):
    u = point([0.4, 0.1], [0.3, -0.9])
    W = TTVector.of([0.0, 0.0], [0.7, 0.2])
    assert max_abs(nabla_star(sphere, canonical_field(), u, W).stacked() - W.stacked()) < 1e-12


def test_extension_decomposes_into_lifts(model):
    X = make_field(model, "poly:x1^2,x1*x2", kind="base")
    for u in sample_bundle_points(model, 3, make_generator(0)):
        complete_lift(model, X, u, check=True)


def test_sasaki_scalar_on_sphere():
    M = make_model("sphere:1")
    # |v|_g^2 = 4 (0.25 + 0.25) = 2 at the origin
    u = point([0.0, 0.0], [0.5, 0.5])
    assert curvature_norm_sq(M, u).item() == pytest.approx(4.0, abs=1e-10)
    assert sasaki_scalar(M, u).item() == pytest.approx(1.0, abs=1e-10)


def test_sasaki_scalar_vanishes_on_flat_models(euclidean):
    for u in sample_bundle_points(euclidean, 8, make_generator(5)):
        assert abs(sasaki_scalar(euclidean, u).item()) < 1e-12


def test_divergence_of_canonical_field(sphere):
    u = point([0.2, -0.3], [0.4, 0.6])
    assert divergence_tm(sphere, canonical_field(), u).item() == pytest.approx(2.0, abs=1e-10)


def test_lift_brackets(sphere):
    X = make_field(sphere, "rotation:1,2", kind="base")
    Y = make_field(sphere, "poly:x1^2,x2", kind="base")
    XY = BaseVectorField(lambda x: bracket_base(sphere, X, Y, x))
    u = point([0.3, -0.1], [0.2, 0.5])
    extension = bracket_tm(sphere, complete_lift_field(X), complete_lift_field(Y), u)
    assert max_abs(extension.stacked() - complete_lift_field(XY)(u).stacked()) < 1e-12
    mixed = bracket_tm(sphere, complete_lift_field(X), vertical_lift_field(Y), u)
    assert max_abs(mixed.stacked() - vertical_lift_field(XY)(u).stacked()) < 1e-12
    vertical = bracket_tm(sphere, vertical_lift_field(X), vertical_lift_field(Y), u)
    assert max_abs(vertical.stacked()) == 0.0


def test_lie_derivatives_of_killing_extension(sphere):
    Z = make_field(sphere, "ext:rotation:1,2")
    for u in sample_bundle_points(sphere, 3, make_generator(2)):
        assert max_abs(lie_metric_matrix(sphere, Z, u)) < 1e-10
        assert max_abs(lie_B_matrix(sphere, Z, u)) < 1e-10


def test_lie_derivative_of_non_killing_extension(euclidean):
    Z = make_field(euclidean, "ext:poly:x1^2,0")
    u = point([0.5, 0.0], [1.0, 0.0])
    assert max_abs(lie_metric_matrix(euclidean, Z, u)) > 0.1


@pytest.mark.parametrize("tensor", ["metric", "omega", "theta", "B", "Bt"])
def test_lie_derivative_formulas_match_flow(sphere, tensor):
    formulas = {
        "metric": lie_metric_matrix,
        "omega": lie_omega_matrix,
        "theta": lie_theta_covector,
        "B": lie_B_matrix,
        "Bt": lie_Bt_matrix,
    }
    Z = make_field(sphere, "ext:poly:x1^2,x1*x2") + make_field(sphere, "v:position")
    u = point([0.3, -0.2], [0.4, 0.1])
    exact = formulas[tensor](sphere, Z, u)
    flow = flow_lie_derivative(sphere, Z, u, tensor)
    assert max_abs(exact - flow) / max(1.0, max_abs(exact)) < 1e-5


def test_flow_lie_derivative_rejects_unknown_tensor(sphere):
    with pytest.raises(NotImplementedError):
        flow_lie_derivative(sphere, canonical_field(), point([0.0, 0.0], [1.0, 0.0]), "ricci")


def test_fibre_preserving(sphere):
    u = point([0.1, 0.2], [0.3, 0.4])
    assert fibre_preserving_defect(sphere, make_field(sphere, "h:rotation:1,2"), u) < 1e-13
    assert fibre_preserving_defect(sphere, spray_field(sphere), u) == pytest.approx(1.0)


def test_sample_bundle_points_start_on_zero_section(halfplane):
    points = sample_bundle_points(halfplane, 4, make_generator(9))
    assert torch.equal(points[0].v, torch.zeros(2, dtype=DTYPE))
    assert all(halfplane.domain.contains(u.x) for u in points)
    again = sample_bundle_points(halfplane, 4, make_generator(9))
    assert all(torch.equal(a.stacked(), b.stacked()) for a, b in zip(points, again))


def test_spray_is_mirror_of_canonical_field(model):
    for u in sample_bundle_points(model, 3, make_generator(4)):
        S = mirror_matrix(model, u, "Bt") @ canonical_field()(u).stacked()
        assert max_abs(S - spray_field(model)(u).stacked()) < 1e-13
        assert not math.isnan(sasaki_scalar(model, u).item())


def test_vector_level_operations(sphere):
    u = point([0.2, -0.1], [0.6, 0.3])
    W1 = TTVector.of([1.0, 0.5], [-0.3, 0.2])
    W2 = TTVector.of([0.0, 1.0], [0.4, -0.7])
    G = sasaki_matrix(sphere, u)
    assert sasaki_inner(sphere, u, W1, W2).item() == pytest.approx((W1.stacked() @ G @ W2.stacked()).item())
    assert sasaki_inner(sphere, u, W1, W2).item() == pytest.approx(sasaki_inner(sphere, u, W2, W1).item())
    t, w = theta_omega(sphere, u, W1, W2)
    assert t.item() == pytest.approx(theta(sphere, u, W1).item())
    assert w.item() == pytest.approx(-omega(sphere, u, W2, W1).item())
    BW = mirror_apply(sphere, u, W1, "B")
    assert max_abs(BW.stacked() - mirror_matrix(sphere, u, "B") @ W1.stacked()) < 1e-15


def test_lie_derivatives_along_canonical_field(euclidean):
    u = point([0.3, 0.1], [0.5, -0.5])
    W = TTVector.of([1.0, 2.0], [3.0, 4.0])
    xi = canonical_field()
    # L_xi B = -B, L_xi B^t = B^t
    assert max_abs(lie_B(euclidean, xi, u, W).stacked() + mirror_apply(euclidean, u, W, "B").stacked()) < 1e-13
    assert max_abs(lie_Bt(euclidean, xi, u, W).stacked() - mirror_apply(euclidean, u, W, "Bt").stacked()) < 1e-13
    # L_xi g(W, W) = 2 |W^v|^2
    assert lie_metric(euclidean, xi, u, W, W).item() == pytest.approx(50.0)


def test_sasaki_connection_on_flat_model(euclidean):
    u = point([0.3, 0.1], [0.5, -0.5])
    W = TTVector.of([1.0, 2.0], [3.0, 4.0])
    assert sasaki_connection(euclidean, canonical_field(), u, W).stacked().tolist() == pytest.approx([0.0, 0.0, 3.0, 4.0])


def test_curvature_operator_on_sphere():
    M = make_model("sphere:1")
    u = point([0.0, 0.0], [1.0, 0.0])
    e1, e2 = TTVector.of([1.0, 0.0], [0.0, 0.0]), TTVector.of([0.0, 1.0], [0.0, 0.0])
    # R(e1, e2) v = g(e2, v) e1 - g(e1, v) e2 with g = 4 I
    R = curvature_op_R(M, u, e1, e2)
    assert R.a.tolist() == [0.0, 0.0]
    assert R.b.tolist() == pytest.approx([0.0, -4.0], abs=1e-10)


@pytest.mark.parametrize("tensor", ["metric", "omega", "theta", "B", "Bt"])
def test_flow_lie_derivative_near_box_corner(sphere, tensor):
    formulas = {
        "metric": lie_metric_matrix,
        "omega": lie_omega_matrix,
        "theta": lie_theta_covector,
        "B": lie_B_matrix,
        "Bt": lie_Bt_matrix,
    }
    # large third t-derivative of the pulled-back metric; a plain central difference is off by ~3e-5 here
    Z = make_field(sphere, "h:gradient:x1*x2")
    u = point([-1.87, -1.84], [0.9, -0.6])
    exact = formulas[tensor](sphere, Z, u)
    flow = flow_lie_derivative(sphere, Z, u, tensor)
    assert max_abs(exact - flow) / max(1.0, max_abs(exact)) < 1e-6


def test_nabla_star_matrix_matches_full_autodiff(model):
    m = model.dim
    F = make_field(model, "h:rotation:1,2") + make_field(model, "ext:position")

    def split_components(y):
        w = F.flat(y)
        conn = torch.einsum("bij,j->bi", christoffel_symbols(model, y[:m]), y[m:])
        return torch.cat([w[:m], w[m:] + conn @ w[:m]])

    for u in sample_bundle_points(model, 3, make_generator(6)):
        gamma = christoffel_symbols(model, u.x)
        s = split_components(u.stacked())
        correction = torch.zeros(2 * m, 2 * m, dtype=DTYPE)
        correction[:m, :m] = torch.einsum("ijk,k->ij", gamma, s[:m])
        correction[m:, :m] = torch.einsum("ijk,k->ij", gamma, s[m:])
        to_chart = torch.eye(2 * m, dtype=DTYPE)
        to_chart[m:, :m] = -torch.einsum("bij,j->bi", gamma, u.v)
        expected = to_chart @ (jacfwd(split_components)(u.stacked()) + correction)
        assert max_abs(nabla_star_matrix(model, F, u) - expected) < 1e-12


def test_shared_jet_gives_the_same_matrices(halfplane):
    Z = make_field(halfplane, "ext:poly:x1^2-x2^2,2*x1*x2") + make_field(halfplane, "v:position")
    for u in sample_bundle_points(halfplane, 2, make_generator(8)):
        jet = bundle_jet(halfplane, u)
        for formula in (lie_metric_matrix, lie_omega_matrix, lie_theta_covector, lie_B_matrix, lie_Bt_matrix):
            assert max_abs(formula(halfplane, Z, u, jet) - formula(halfplane, Z, u)) < 1e-13, formula.__name__
        lie_b, lie_bt = lie_mirror_matrices(halfplane, Z, u, jet)
        assert max_abs(lie_b - lie_B_matrix(halfplane, Z, u)) < 1e-13
        assert max_abs(lie_bt - lie_Bt_matrix(halfplane, Z, u)) < 1e-13
        assert abs(divergence_tm(halfplane, Z, u, jet).item() - divergence_tm(halfplane, Z, u).item()) < 1e-13
        for which in ("B", "Bt", "JNS", "golden"):
            assert max_abs(mirror_matrix(halfplane, u, which, jet) - mirror_matrix(halfplane, u, which)) < 1e-14


def test_mirror_field_of_B_uses_the_constant_chart_matrix(halfplane):
    Z = make_field(halfplane, "h:rotation:1,2")
    u = point([0.4, 1.2], [0.5, -0.3])
    expected = mirror_matrix(halfplane, u, "B") @ Z(u).stacked()
    assert max_abs(mirror_field(halfplane, Z, "B")(u).stacked() - expected) < 1e-15
