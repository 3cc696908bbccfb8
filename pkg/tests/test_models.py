import math

import pytest
import torch

from sasaki.errors import BadSpec
from sasaki.geometry import christoffel_symbols, curvature, sample_points
from sasaki.models import ModelId, make_model, parse_model
from sasaki.utils import make_generator
from tests.conftest import vec


@pytest.mark.parametrize(
    "text, expected",
    [
        ("euclidean", ModelId("euclidean")),
        ("euclidean:3", ModelId("euclidean", (3.0,))),
        ("sphere:0.5", ModelId("sphere", (0.5,))),
        ("torus:2,1,1", ModelId("torus", (2.0, 1.0, 1.0))),
    ],
)
def test_parse_model(text, expected):
    assert parse_model(text) == expected
    assert str(parse_model(text)) == text


@pytest.mark.parametrize(
    "text, position",
    [
        ("klein:2", 0),
        ("sphere:a", 7),
        ("sphere:", 7),
        ("torus:2,x", 8),
    ],
)
def test_parse_model_reports_position(text, position):
    with pytest.raises(BadSpec) as info:
        parse_model(text)
    assert info.value.position == position
    assert info.value.text == text


@pytest.mark.parametrize("text", ["sphere:-1", "euclidean:1.5", "euclidean:0", "halfplane:1", "torus:2,1", "sphere:1,2,3"])
def test_make_model_rejects_parameters(text):
    with pytest.raises(BadSpec):
        make_model(text)


def test_euclidean_has_no_christoffel_symbols():
    M = make_model("euclidean:3")
    assert M.dim == 3
    for x in sample_points(M, 8, make_generator(0)):
        assert torch.equal(christoffel_symbols(M, x), torch.zeros(3, 3, 3, dtype=x.dtype))


@pytest.mark.parametrize("text, scal", [("sphere:1", 2.0), ("halfplane", -2.0), ("sphere:0.5,3", 3.0), ("torus:2", 0.0)])
def test_scalar_curvature_of_constant_curvature_models(text, scal):
    M = make_model(text)
    for x in sample_points(M, 64, make_generator(42)):
        assert curvature(M, x).scal.item() == pytest.approx(scal, abs=1e-8)


def test_sphere_metric_at_origin():
    M = make_model("sphere:1")
    assert torch.allclose(M.metric(vec(0.0, 0.0)), 4 * torch.eye(2, dtype=torch.float64))
    assert M.sectional_curvature == 1.0


def test_chart_domains():
    assert not make_model("halfplane").domain.contains(vec(0.0, 0.05))
    assert make_model("halfplane").domain.contains(vec(-100.0, 0.2))
    assert not make_model("sphere:1").domain.contains(vec(8.0, 8.0))
    assert make_model("torus:2").domain.contains(vec(100.0, -3.0))


def test_torus_wraps_into_fundamental_domain():
    M = make_model("torus:2")
    wrapped = M.domain.wrap(vec(2 * math.pi + 0.5, -0.25))
    assert wrapped.tolist() == pytest.approx([0.5, 2 * math.pi - 0.25])


def test_torus_with_periods():
    M = make_model("torus:2,1,3")
    assert M.domain.periods == (1.0, 3.0)
    assert M.is_flat
