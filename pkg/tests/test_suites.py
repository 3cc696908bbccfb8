import pytest

from sasaki.classifiers import VERDICT_TOL
from sasaki.models import make_model
from sasaki.suites import SUITES, Suite, SuiteContext, run_suites


def registered(name: str) -> Suite:
    return next(s for s in SUITES if s.name == name)


def always(M) -> bool:
    return True


def test_registry_names_are_unique():
    names = [s.name for s in SUITES]
    assert len(names) == len(set(names))
    assert names[0] == "base-identities"


def test_override_sets_verdict_tolerance_of_exact_suites(euclidean):
    exact = Suite("counts", lambda ctx: ctx.verdict_tol, 0.0, always)
    assert exact.exact
    report = exact.run(euclidean, 42, 2, tol=0.5)
    assert report.tol == 0.0
    assert report.max_defect == 0.5
    assert not report.passed
    assert exact.run(euclidean, 42, 2).max_defect == VERDICT_TOL


def test_override_replaces_tolerance_of_defect_suites(euclidean):
    defect = Suite("defect", lambda ctx: ctx.verdict_tol, 1e-9, always)
    assert not defect.exact
    report = defect.run(euclidean, 42, 2, tol=0.5)
    assert report.tol == 0.5
    assert report.max_defect == VERDICT_TOL
    assert report.passed


def test_context_caches_jets_and_probes(sphere):
    ctx = SuiteContext(sphere, 7, 3)
    assert len(ctx.jets) == len(ctx.probes) == len(ctx.heavy_points) == 3
    assert ctx.jets is ctx.jets
    assert all(jet.point is u for jet, u in zip(ctx.jets, ctx.heavy_points))


def test_exact_suites_keep_zero_tolerance():
    exact = {s.name for s in SUITES if s.exact}
    assert {"theorem-equivalence", "lift-criteria", "adjoint-mirror", "one-form-criteria", "rk4-order"} <= exact


@pytest.mark.slow
@pytest.mark.parametrize("spec", ["euclidean:2", "torus:2"])
def test_adjoint_mirror_suite_passes_on_flat_models(spec):
    report = registered("adjoint-mirror").run(make_model(spec), 42, 4)
    assert report.max_defect == 0.0
    assert report.passed


@pytest.mark.slow
def test_lie_vs_flow_suite_passes_on_sphere():
    report = registered("lie-vs-flow").run(make_model("sphere:1"), 42, 64)
    assert report.passed, report.max_defect


@pytest.mark.slow
def test_parallel_run_matches_serial_run():
    M = make_model("euclidean:2")
    serial = run_suites(M, 42, 4)
    parallel = run_suites(M, 42, 4, workers=2)
    assert [(r.name, r.tol, r.passed) for r in parallel] == [(r.name, r.tol, r.passed) for r in serial]
    for p, s in zip(parallel, serial):
        assert p.max_defect == pytest.approx(s.max_defect, rel=1e-6, abs=1e-12), p.name
    assert all(r.passed for r in parallel)
