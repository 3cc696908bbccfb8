import math
import re
from dataclasses import dataclass

import torch
from torch import Tensor

from sasaki.errors import BadSpec
from sasaki.geometry import ChartDomain, ChartedManifold

__all__ = ["ModelId", "parse_model", "make_model", "MODEL_NAMES"]

MODEL_NAMES = ("euclidean", "sphere", "halfplane", "torus")

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")


@dataclass(frozen=True)
class ModelId:
    name: str
    params: tuple = ()

    def __str__(self):
        if not self.params:
            return self.name
        return f"{self.name}:" + ",".join(_format_param(p) for p in self.params)


def _format_param(p: float) -> str:
    return str(int(p)) if float(p).is_integer() else repr(float(p))


def parse_model(text: str) -> ModelId:
    """``name[:p1,p2,...]``, e.g. ``euclidean:3``, ``sphere:1``, ``halfplane``, ``torus:2,1,1``."""
    name, _, rest = text.partition(":")
    if name not in MODEL_NAMES:
        raise BadSpec(text, 0, f"unknown model {name!r}, expected one of {', '.join(MODEL_NAMES)}")
    params = []
    position = len(name) + 1
    if rest:
        for token in rest.split(","):
            if not _NUMBER.match(token):
                raise BadSpec(text, position, f"expected a number, got {token!r}")
            params.append(float(token))
            position += len(token) + 1
    elif text.endswith(":"):
        raise BadSpec(text, len(text), "missing parameters after ':'")
    return ModelId(name, tuple(params))


def _dimension(model: ModelId, value: float, text_position: int) -> int:
    if not float(value).is_integer() or value < 1:
        raise BadSpec(str(model), text_position, f"dimension must be a positive integer, got {value}")
    return int(value)


def _euclidean(model: ModelId) -> ChartedManifold:
    if len(model.params) > 1:
        raise BadSpec(str(model), len(model.name) + 1, "euclidean takes one parameter: m")
    m = _dimension(model, model.params[0], len(model.name) + 1) if model.params else 2

    def metric(x: Tensor) -> Tensor:
        return torch.diag(torch.ones_like(x))

    domain = ChartDomain(low=(-2.0,) * m, high=(2.0,) * m)
    return ChartedManifold(m, str(model), metric, domain, sectional_curvature=0.0)


def _sphere(model: ModelId) -> ChartedManifold:
    if len(model.params) > 2:
        raise BadSpec(str(model), len(model.name) + 1, "sphere takes at most two parameters: c, m")
    c = model.params[0] if model.params else 1.0
    if c <= 0:
        raise BadSpec(str(model), len(model.name) + 1, f"sphere curvature must be positive, got {c}")
    m = _dimension(model, model.params[1], len(str(model))) if len(model.params) > 1 else 2

    def metric(x: Tensor) -> Tensor:
        factor = 4.0 / (1.0 + c * (x @ x)) ** 2
        return factor * torch.diag(torch.ones_like(x))

    # stereographic chart, trusted on |x| <= 10
    domain = ChartDomain(low=(-2.0,) * m, high=(2.0,) * m, radius=10.0)
    return ChartedManifold(m, str(model), metric, domain, sectional_curvature=c)


def _halfplane(model: ModelId) -> ChartedManifold:
    if model.params:
        raise BadSpec(str(model), len(model.name) + 1, "halfplane takes no parameters")

    def metric(x: Tensor) -> Tensor:
        return torch.diag(torch.ones_like(x)) / x[1] ** 2

    domain = ChartDomain(
        low=(-2.0, 0.5),
        high=(2.0, 3.0),
        bounds_low=(-math.inf, 0.1),
    )
    return ChartedManifold(2, str(model), metric, domain, coordinates=("x", "y"), sectional_curvature=-1.0)


def _torus(model: ModelId) -> ChartedManifold:
    m = _dimension(model, model.params[0], len(model.name) + 1) if model.params else 2
    periods = tuple(model.params[1:]) or (2 * math.pi,) * m
    if len(periods) != m or any(p <= 0 for p in periods):
        raise BadSpec(str(model), len(model.name) + 1, f"torus needs {m} positive periods, got {periods}")

    def metric(x: Tensor) -> Tensor:
        return torch.diag(torch.ones_like(x))

    domain = ChartDomain(low=(0.0,) * m, high=periods, periods=periods)
    return ChartedManifold(m, str(model), metric, domain, sectional_curvature=0.0)


_BUILDERS = {
    "euclidean": _euclidean,
    "sphere": _sphere,
    "halfplane": _halfplane,
    "torus": _torus,
}


def make_model(spec) -> ChartedManifold:
    """Build a charted manifold from a ModelId or its text form."""
    model = parse_model(spec) if isinstance(spec, str) else spec
    return _BUILDERS[model.name](model)
