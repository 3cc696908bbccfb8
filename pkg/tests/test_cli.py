import json

import pytest

from sasaki import __version__
from sasaki.cli import main


def run_json(capsys, *argv) -> tuple:
    code = main([*argv, "--format", "json", "--quiet"])
    out = capsys.readouterr().out
    return code, json.loads(out) if code in (0, 1) else out


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["--model", "euclidean:2", "--x", "0.3", "0.4", "--v", "1", "2"], (0.0, 0.0, 0.0)),
        (["--model", "sphere:1", "--x", "0", "0", "--v", "0.5", "0.5"], (2.0, 4.0, 1.0)),
        (["--model", "halfplane", "--x", "0", "1", "--v", "0", "0"], (-2.0, 0.0, -2.0)),
    ],
)
def test_scalar(capsys, argv, expected):
    code, document = run_json(capsys, "scalar", *argv)
    assert code == 0
    values = (document["scal"], document["curvature_norm_sq"], document["sasaki_scalar"])
    assert values == pytest.approx(expected, abs=1e-10)
    assert document["version"] == __version__
    assert document["config"]["model"] == argv[1]


@pytest.mark.parametrize(
    "argv",
    [
        ["scalar", "--model", "halfplane", "--x", "0", "0.05", "--v", "0", "0"],
        ["scalar", "--model", "klein:2", "--x", "0", "0", "--v", "0", "0"],
        ["scalar", "--model", "sphere:1", "--x", "0", "0", "0", "--v", "0", "0"],
        ["classify", "--model", "sphere:1", "--field", "rotation:1,1"],
        ["classify", "--model", "sphere:1", "--samples", "0"],
    ],
)
def test_bad_input_exits_2(capsys, argv):
    assert main([*argv, "--quiet"]) == 2
    assert capsys.readouterr().out == ""


def test_geodesic_closed_form(capsys, tmp_path):
    out = tmp_path / "line.csv"
    code, document = run_json(
        capsys, "geodesic", "--model", "euclidean:2", "--x", "0", "0", "--v", "0", "0", "--xdot", "1", "2",
        "--z", "0.5", "0", "--dt", "0.01", "--out", str(out),
    )
    assert code == 0
    assert document["final"] == pytest.approx([1.0, 2.0, 0.5, 0.0, 1.0, 2.0, 0.5, 0.0], abs=1e-12)
    assert document["energy_drift"] < 1e-12
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x1,x2,v1,v2,xdot1,xdot2,z1,z2,energy"
    assert len(lines) == 102


def test_geodesic_vdot_is_converted(capsys, tmp_path):
    code, document = run_json(
        capsys, "geodesic", "--model", "halfplane", "--x", "0", "1", "--v", "1", "0", "--xdot", "0", "1",
        "--vdot", "0", "0", "--duration", "0.001", "--out", str(tmp_path / "t.csv"),
    )
    assert code == 0
    assert document["config"]["vdot"] == [0.0, 0.0]


def test_geodesic_domain_exit(capsys, tmp_path):
    out = tmp_path / "exit.csv"
    code = main(
        [
            "geodesic", "--model", "halfplane", "--x", "0", "0.5", "--v", "0", "0", "--xdot", "0", "-3",
            "--duration", "2", "--out", str(out), "--quiet",
        ]
    )
    assert code == 3
    assert out.read_text().splitlines()[-1].startswith("# domain exit")


def test_classify(capsys):
    argv = ["classify", "--model", "sphere:1", "--field", "ext:rotation:1,2", "--samples", "3"]
    code, document = run_json(capsys, *argv)
    assert code == 0
    assert document["field"] == "ext:rotation:1,2"
    predicates = {p["name"]: p for p in document["predicates"]}
    assert predicates["killing"]["pass"]
    assert predicates["mirror"]["value"] == pytest.approx(0.0, abs=1e-9)
    # seeded sampling
    again = run_json(capsys, *argv)[1]
    assert again == document


def test_classify_csv(capsys):
    code = main(["classify", "--model", "euclidean:2", "--field", "xi", "--samples", "2", "--format", "csv", "--quiet"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "predicate,max_defect,tol,verdict,value"
    assert len(lines) == 11
    mirror = next(line for line in lines if line.startswith("mirror,"))
    assert float(mirror.split(",")[-1]) == pytest.approx(-1.0, abs=1e-9)


@pytest.mark.slow
def test_verify_flat_model_passes(capsys):
    code, document = run_json(capsys, "verify", "--model", "euclidean:2", "--samples", "8", "--workers", "2")
    assert code == 0
    assert all(suite["pass"] for suite in document["suites"])


@pytest.mark.slow
def test_verify_fails_with_tight_tolerance(capsys):
    code, document = run_json(capsys, "verify", "--model", "halfplane", "--samples", "4", "--tol", "1e-12")
    assert code == 1
    assert not all(suite["pass"] for suite in document["suites"])
    tolerances = {suite["name"]: suite["tol"] for suite in document["suites"]}
    assert tolerances["theorem-equivalence"] == 0.0
    assert tolerances["base-identities"] == 1e-12
    assert set(tolerances.values()) == {0.0, 1e-12}


@pytest.mark.slow
def test_verify_curved_model_passes(capsys):
    code, document = run_json(capsys, "verify", "--model", "sphere:1", "--samples", "4")
    failed = [suite["name"] for suite in document["suites"] if not suite["pass"]]
    assert code == 0, failed
    names = [suite["name"] for suite in document["suites"]]
    assert {"great-circle-closure", "rk4-order", "extension-ricci-obstruction"} <= set(names)


@pytest.mark.slow
def test_verify_skips_suites_that_do_not_apply(capsys):
    code, document = run_json(capsys, "verify", "--model", "torus:2", "--samples", "4")
    names = [suite["name"] for suite in document["suites"]]
    assert code == 0
    assert "great-circle-closure" not in names
    assert "base-identities" in names


def test_json_floats_use_seventeen_digits(capsys):
    main(["scalar", "--model", "euclidean:2", "--x", "0.1", "0", "--v", "0", "0", "--format", "json", "--quiet"])
    out = capsys.readouterr().out
    assert '"x": [0.10000000000000001, 0.0]' in out
    assert json.loads(out)["config"]["x"] == [0.1, 0.0]
