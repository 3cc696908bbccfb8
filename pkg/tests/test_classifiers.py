import pytest
import torch

from sasaki.bundle import TangentBundlePoint, bundle_jet, lie_B_matrix, lie_Bt_matrix, sample_bundle_points, spray_field
from sasaki.classifiers import (
    VERDICT_TOL,
    DefectReport,
    adjoint_mirror_defect,
    affine_defect,
    almost_analytic_defect,
    almost_analytic_defect_tm,
    bending_integrand,
    classify,
    energy_estimate,
    harmonic_map_defect,
    killing_defect_tm,
    mirror_defect,
    mirror_fit,
    probe_vectors,
    strictly_contact_defect,
    symplectic_defect,
    totally_geodesic_defect,
)
from sasaki.fields import make_field
from sasaki.utils import make_generator, max_abs
from tests.conftest import vec


def verdicts(M, spec, samples=4, seed=0) -> dict:
    points = sample_bundle_points(M, samples, make_generator(seed))
    reports = classify(M, make_field(M, spec), points, make_generator(seed + 1))
    return {report.name: report for report in reports}


def test_killing_extension_on_sphere(sphere):
    reports = verdicts(sphere, "ext:rotation:1,2")
    for name in ("killing", "symplectic", "strictly_contact", "incompressible", "fibre_preserving"):
        assert reports[name].passed, name
    assert reports["mirror"].value == pytest.approx(0.0, abs=1e-9)


def test_canonical_field_is_mirror_with_constant_minus_one(euclidean):
    reports = verdicts(euclidean, "xi")
    assert reports["mirror"].value == pytest.approx(-1.0, abs=1e-9)
    assert reports["mirror"].passed
    assert not reports["incompressible"].passed
    assert reports["fibre_preserving"].passed


def test_vertical_lift_of_parallel_field(euclidean):
    reports = verdicts(euclidean, "v:const:1,0")
    assert reports["incompressible"].passed
    assert reports["killing"].passed
    assert reports["harmonic"].passed


def test_vertical_lift_of_rotation_is_not_killing(sphere):
    reports = verdicts(sphere, "v:rotation:1,2")
    assert not reports["killing"].passed
    assert reports["incompressible"].passed


def test_classify_order_and_tolerance(halfplane):
    reports = classify(
        halfplane, make_field(halfplane, "h:position"), sample_bundle_points(halfplane, 2, make_generator(3)),
        make_generator(4),
    )
    assert [r.name for r in reports] == [
        "killing",
        "incompressible",
        "symplectic",
        "strictly_contact",
        "almost_analytic",
        "mirror",
        "adjoint_mirror_0",
        "closed_dual",
        "harmonic",
        "fibre_preserving",
    ]
    assert all(r.tol == VERDICT_TOL for r in reports)


def test_defect_report_as_dict():
    report = DefectReport("killing", 2e-8, 1e-7, worst_point=[0.0, 1.0, 0.5, 0.5])
    assert report.as_dict() == {
        "name": "killing",
        "max_defect": 2e-8,
        "tol": 1e-7,
        "pass": True,
        "worst_point": [0.0, 1.0, 0.5, 0.5],
    }
    assert "value" in DefectReport("mirror", 0.0, 1e-7, value=-1.0).as_dict()
    assert not DefectReport("killing", 1.0, 1e-7).passed


def test_probe_vectors_shape(sphere):
    u = TangentBundlePoint.of([0.1, 0.2], [0.3, 0.4])
    assert probe_vectors(sphere, u, make_generator(0)).shape == (4, 12)


def test_mirror_fit_of_extension(halfplane):
    points = sample_bundle_points(halfplane, 3, make_generator(8))
    lam, residual = mirror_fit(halfplane, make_field(halfplane, "ext:poly:x1^2-x2^2,2*x1*x2"), points)
    assert lam == pytest.approx(0.0, abs=1e-9)
    assert residual < 1e-9


def test_affine_defect(euclidean, sphere):
    x, Y, Z = vec(0.3, -0.4), vec(1.0, 0.5), vec(-0.2, 1.0)
    assert max_abs(affine_defect(sphere, make_field(sphere, "rotation:1,2", kind="base"), x, Y, Z)) < 1e-9
    assert max_abs(affine_defect(euclidean, make_field(euclidean, "position", kind="base"), x, Y, Z)) < 1e-15
    assert max_abs(affine_defect(euclidean, make_field(euclidean, "poly:x1^2,0", kind="base"), x, Y, Z)) > 0.1


def test_almost_analytic_defect(sphere):
    u = TangentBundlePoint.of([0.2, 0.1], [0.5, -0.3])
    Y = vec(0.4, 0.7)
    killing = almost_analytic_defect(sphere, make_field(sphere, "rotation:1,2", kind="base"), u, Y)
    assert max_abs(killing.stacked()) < 1e-9
    quadratic = almost_analytic_defect(sphere, make_field(sphere, "poly:x1^2,0", kind="base"), u, Y)
    assert max_abs(quadratic.stacked()) > 1e-3


def test_totally_geodesic_defect_of_parallel_field(euclidean):
    X = make_field(euclidean, "const:1,0", kind="base")
    assert max_abs(totally_geodesic_defect(euclidean, X, vec(0.1, 0.2), vec(1.0, 0.0), vec(0.3, 0.7))) < 1e-15


def test_harmonic_map_defect_of_linear_fields(euclidean):
    for spec in ("position", "rotation:1,2", "const:1,0"):
        curvature_term, laplacian = harmonic_map_defect(euclidean, make_field(euclidean, spec, kind="base"), vec(0.5, 0.5))
        assert max_abs(curvature_term) < 1e-15
        assert max_abs(laplacian) < 1e-15


def test_bending_integrand_of_position(euclidean):
    X = make_field(euclidean, "position", kind="base")
    assert bending_integrand(euclidean, X, vec(-1.0, 0.3)).item() == pytest.approx(2.0)


def test_energy_estimate_of_parallel_field(euclidean):
    # (m/2) vol over the box [-2, 2]^2
    X = make_field(euclidean, "const:1,0", kind="base")
    assert energy_estimate(euclidean, X, n=4) == pytest.approx(16.0)
    assert energy_estimate(euclidean, make_field(euclidean, "position", kind="base"), n=4) == pytest.approx(32.0)


def test_energy_estimate_converges_quadratically(euclidean):
    # |nabla X|^2 = 4 x1^2; exact energy 16 + 128/3, midpoint error 8 h^2 / 3 with h = 4 / n
    X = make_field(euclidean, "poly:x1^2,0", kind="base")
    coarse, fine = energy_estimate(euclidean, X, n=4), energy_estimate(euclidean, X, n=8)
    assert coarse == pytest.approx(56.0)
    assert fine == pytest.approx(58.0)
    assert (176.0 / 3 - coarse) / (176.0 / 3 - fine) == pytest.approx(4.0)


def test_spray_is_adjoint_mirror_but_not_mirror(euclidean):
    S = spray_field(euclidean)
    for u in sample_bundle_points(euclidean, 3, make_generator(12)):
        assert max_abs(lie_Bt_matrix(euclidean, S, u)) < 1e-14
        assert max_abs(lie_B_matrix(euclidean, S, u) - torch.diag(vec(-1.0, -1.0, 1.0, 1.0))) < 1e-14
    reports = verdicts(euclidean, "spray")
    assert reports["adjoint_mirror_0"].passed
    assert reports["mirror"].value == pytest.approx(0.0, abs=1e-12)
    assert not reports["mirror"].passed


def test_shared_jet_gives_the_same_defects(sphere):
    Z = make_field(sphere, "ext:gradient:x1*x2")
    u = TangentBundlePoint.of([0.4, -0.7], [0.2, 0.9])
    jet = bundle_jet(sphere, u)
    probes = probe_vectors(sphere, u, make_generator(1))
    assert max_abs(probe_vectors(sphere, u, make_generator(1), jet) - probes) < 1e-14
    for defect in (killing_defect_tm, symplectic_defect, strictly_contact_defect, almost_analytic_defect_tm):
        assert defect(sphere, Z, u, probes, jet) == pytest.approx(defect(sphere, Z, u, probes), rel=1e-12, abs=1e-14)
    for defect in (mirror_defect, adjoint_mirror_defect):
        assert defect(sphere, Z, u, 0.5, probes, jet) == pytest.approx(defect(sphere, Z, u, 0.5, probes), rel=1e-12)
