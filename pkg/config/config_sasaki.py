from dataclasses import dataclass
from typing import List
from typing import Literal
from typing import Optional

from config.config_abc import ConfigABC

__all__ = [
    "RunConfig",
    "VerifyConfig",
    "GeodesicConfig",
    "ClassifyConfig",
    "ScalarConfig",
    "COMMANDS",
]


@dataclass
class RunConfig(ConfigABC):
    help_dict = {
        "model": "Model spec name[:params], e.g. euclidean:3, sphere:1, halfplane, torus:2.",
        "seed": "Seed of every sampler.",
        "samples": "Number of sample points.",
        "tol": "Override the tolerance of defect suites and the verdict tolerance of mismatch-count suites.",
        "workers": "Worker processes for verification suites.",
        "log_file": "Append log lines to this file.",
        "quiet": "Hide progress bars.",
    }

    model: str = None  # required
    seed: int = 42
    samples: int = 64
    tol: Optional[float] = None
    format: Literal["table", "json", "csv"] = "table"
    workers: int = 1
    log_file: Optional[str] = None
    quiet: bool = False


@dataclass
class VerifyConfig(RunConfig):
    """Run every verification suite that applies to the model."""


@dataclass
class GeodesicConfig(RunConfig):
    """Integrate a Sasaki geodesic and write the trajectory CSV."""

    help_dict = {
        **RunConfig.help_dict,
        "x": "Base point.",
        "v": "Fibre point.",
        "xdot": "Base velocity.",
        "z": "Covariant fibre velocity; wins over --vdot.",
        "vdot": "Chart fibre velocity.",
        "duration": "Integration time T.",
        "dt": "RK4 step.",
        "out": "Trajectory CSV path.",
    }

    x: List[float] = None
    v: List[float] = None
    xdot: List[float] = None
    z: Optional[List[float]] = None
    vdot: Optional[List[float]] = None
    duration: float = 1.0
    dt: float = 1e-3
    out: str = "trajectory.csv"


@dataclass
class ClassifyConfig(RunConfig):
    """Report every TM predicate for one vector field."""

    help_dict = {**RunConfig.help_dict, "field": "TM field spec, e.g. xi, ext:rotation:1,2, v:const:1,0."}

    field: str = "xi"


@dataclass
class ScalarConfig(RunConfig):
    """Print Scal(x), |curv|^2(u) and the Sasaki scalar curvature at u = (x, v)."""

    help_dict = {**RunConfig.help_dict, "x": "Base point.", "v": "Fibre point."}

    x: List[float] = None
    v: List[float] = None


COMMANDS = {
    "verify": VerifyConfig,
    "geodesic": GeodesicConfig,
    "classify": ClassifyConfig,
    "scalar": ScalarConfig,
}
