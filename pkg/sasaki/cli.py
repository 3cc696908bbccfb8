import csv
import json
import math
import sys
from typing import List, Optional

import torch
from rich.console import Console
from rich.table import Table

from config.config_abc import CommandParser
from config.config_sasaki import COMMANDS, ClassifyConfig, GeodesicConfig, RunConfig, ScalarConfig, VerifyConfig
from sasaki import __version__
from sasaki.bundle import TangentBundlePoint, curvature_norm_sq, sample_bundle_points, sasaki_scalar
from sasaki.classifiers import VERDICT_TOL, classify
from sasaki.errors import BadSpec, DegenerateFit, DomainExit, NonFinite, NonPositiveDefinite
from sasaki.fields import make_field
from sasaki.geodesics import GeodesicState, integrate, state_from_velocity
from sasaki.geometry import ChartedManifold, curvature
from sasaki.models import make_model
from sasaki.suites import run_suites
from sasaki.utils import as_tensor, log, make_generator, seed_everything, set_log_file

__all__ = ["cmd_verify", "cmd_geodesic", "cmd_classify", "cmd_scalar", "main"]

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_BAD_INPUT = 2
EXIT_INTEGRATION = 3

stdout = Console(highlight=False)


def _float_text(x: float) -> str:
    """%.17g, the format of every float in the CSV files, kept a JSON float."""
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = "%.17g" % x
    return text if any(c in text for c in ".e") else text + ".0"


def _json_text(value) -> str:
    if isinstance(value, float):
        return _float_text(value)
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_text(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_json_text(v) for v in value) + "]"
    return json.dumps(value)


def _emit_json(config: RunConfig, **payload):
    document = {"config": config.as_dict(), **payload, "version": __version__}
    sys.stdout.write(_json_text(document) + "\n")


def _emit_rows(config: RunConfig, title: str, header: list, rows: list):
    if config.format == "csv":
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_float_text(c) if isinstance(c, float) else c for c in row] for row in rows)
        return
    table = Table(title=title)
    for name in header:
        table.add_column(name)
    for row in rows:
        table.add_row(*(f"{c:.3e}" if isinstance(c, float) else str(c) for c in row))
    stdout.print(table)


def _verdict(passed: bool) -> str:
    return "PASS" if passed else "FAIL"


def _point(M: ChartedManifold, name: str, values: Optional[List[float]]) -> torch.Tensor:
    if values is None or len(values) != M.dim:
        raise BadSpec(str(values), 0, f"--{name} needs {M.dim} components")
    return as_tensor(values)


def _check_positive(config: RunConfig):
    checks = {"samples": config.samples, "workers": config.workers}
    if isinstance(config, GeodesicConfig):
        checks.update(duration=config.duration, dt=config.dt)
    for name, value in checks.items():
        if not value > 0:
            raise BadSpec(str(value), 0, f"--{name} must be positive")


def _check_in_domain(M: ChartedManifold, x: torch.Tensor):
    if not M.domain.contains(x):
        raise BadSpec(str(x.tolist()), 0, f"point outside the chart domain of {M}")


def cmd_verify(config: VerifyConfig) -> int:
    M = make_model(config.model)
    log(f"[INFO] Verifying {M} with seed={config.seed}, samples={config.samples}")
    reports = run_suites(M, config.seed, config.samples, config.tol, config.workers, progress=not config.quiet)
    failed = [r.name for r in reports if not r.passed]
    if config.format == "json":
        _emit_json(config, suites=[r.as_dict() for r in reports])
    else:
        rows = [[r.name, r.max_defect, r.tol, _verdict(r.passed)] for r in reports]
        _emit_rows(config, f"verify {M}", ["suite", "max_defect", "tol", "verdict"], rows)
    if failed:
        log(f"[WARN] {len(failed)} suite(s) failed: {', '.join(failed)}")
        return EXIT_FAIL
    return EXIT_OK


def _initial_state(M: ChartedManifold, config: GeodesicConfig) -> GeodesicState:
    x = _point(M, "x", config.x)
    v = _point(M, "v", config.v)
    xdot = _point(M, "xdot", config.xdot)
    _check_in_domain(M, x)
    if config.z is not None:
        return GeodesicState(x, v, xdot, _point(M, "z", config.z))
    if config.vdot is not None:
        return state_from_velocity(M, x, v, xdot, _point(M, "vdot", config.vdot))
    return GeodesicState(x, v, xdot, torch.zeros_like(x))


def cmd_geodesic(config: GeodesicConfig) -> int:
    M = make_model(config.model)
    s0 = _initial_state(M, config)
    try:
        trajectory = integrate(M, s0, config.duration, config.dt, progress=not config.quiet)
    except (DomainExit, NonFinite) as e:
        if e.trajectory is not None:
            e.trajectory.to_csv(config.out)
            log(f"[WARN] {e}; partial trajectory written to {config.out}")
        else:
            log(f"[WARN] {e}")
        return EXIT_INTEGRATION
    trajectory.to_csv(config.out)
    final = trajectory.final
    drift = trajectory.energy_drift()
    log(f"[INFO] {len(trajectory)} states written to {config.out}")
    if config.format == "json":
        _emit_json(config, final=final.stacked().tolist(), energy_drift=drift)
    else:
        m = M.dim
        header = ["t"] + [f"{name}{i + 1}" for name in ("x", "v", "xdot", "z") for i in range(m)] + ["energy_drift"]
        rows = [[config.duration] + final.stacked().tolist() + [drift]]
        _emit_rows(config, f"geodesic {M}", header, rows)
    return EXIT_OK


def cmd_classify(config: ClassifyConfig) -> int:
    M = make_model(config.model)
    Z = make_field(M, config.field)
    points = sample_bundle_points(M, config.samples, make_generator(config.seed))
    tol = VERDICT_TOL if config.tol is None else config.tol
    try:
        reports = classify(M, Z, points, make_generator(config.seed + 1), tol=tol, progress=not config.quiet)
    except DegenerateFit as e:
        log(f"[WARN] {e}")
        return EXIT_BAD_INPUT
    if config.format == "json":
        _emit_json(config, field=str(Z), predicates=[r.as_dict() for r in reports])
    else:
        rows = [[r.name, r.max_defect, r.tol, _verdict(r.passed), "" if r.value is None else r.value] for r in reports]
        _emit_rows(config, f"classify {Z} on {M}", ["predicate", "max_defect", "tol", "verdict", "value"], rows)
    return EXIT_OK


def cmd_scalar(config: ScalarConfig) -> int:
    M = make_model(config.model)
    u = TangentBundlePoint(_point(M, "x", config.x), _point(M, "v", config.v))
    _check_in_domain(M, u.x)
    values = {
        "scal": curvature(M, u.x).scal.item(),
        "curvature_norm_sq": curvature_norm_sq(M, u).item(),
        "sasaki_scalar": sasaki_scalar(M, u).item(),
    }
    if config.format == "json":
        _emit_json(config, **values)
    else:
        _emit_rows(config, f"scalar curvature on {M}", list(values), [list(values.values())])
    return EXIT_OK


_HANDLERS = {
    "verify": cmd_verify,
    "geodesic": cmd_geodesic,
    "classify": cmd_classify,
    "scalar": cmd_scalar,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    command, config = CommandParser(COMMANDS).parse_args(argv)
    if config.model is None:
        log("[WARN] --model is required")
        return EXIT_BAD_INPUT
    set_log_file(config.log_file)
    seed_everything(config.seed)
    try:
        _check_positive(config)
        return _HANDLERS[command](config)
    except (BadSpec, NonPositiveDefinite) as e:
        log(f"[WARN] {e}")
        return EXIT_BAD_INPUT
    finally:
        set_log_file(None)
