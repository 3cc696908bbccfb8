import pytest
from hypothesis import given
from hypothesis import strategies as st

from sasaki.bundle import TangentBundlePoint
from sasaki.errors import BadSpec
from sasaki.fields import FieldSpec, Polynomial, field_library, form_library, make_field, parse_polynomial, tm_field_library
from sasaki.geometry import BaseVectorField
from sasaki.utils import max_abs
from tests.conftest import vec

monomial = st.dictionaries(st.tuples(st.sampled_from("xv"), st.integers(1, 3)), st.integers(1, 3), max_size=3).map(
    lambda powers: tuple(sorted((var, index, power) for (var, index), power in powers.items()))
)
coefficient = st.integers(-5, 5).filter(lambda c: c != 0).map(float)


@given(st.dictionaries(monomial, coefficient, max_size=4))
def test_polynomial_text_round_trip(terms):
    poly = Polynomial.from_dict(terms)
    assert parse_polynomial(str(poly)) == poly


def test_polynomial_evaluation():
    p = parse_polynomial("1+2*x1^2-x1*v2")
    assert p(vec(3.0, 0.0), vec(0.0, 5.0)).item() == pytest.approx(1 + 18 - 15)
    assert str(p) == "1-v2*x1+2*x1^2"


def test_rotation_field(euclidean):
    X = make_field(euclidean, "rotation:1,2", kind="base")
    assert X(vec(1.0, 2.0)).tolist() == [-2.0, 1.0]
    assert isinstance(X, BaseVectorField)


def test_lifted_fields(euclidean):
    u = TangentBundlePoint.of([1.0, 2.0], [3.0, 4.0])
    extension = make_field(euclidean, "ext:rotation:1,2")(u)
    assert extension.a.tolist() == [-2.0, 1.0]
    assert extension.b.tolist() == [-4.0, 3.0]
    vertical = make_field(euclidean, "v:position")(u)
    assert vertical.a.tolist() == [0.0, 0.0]
    assert vertical.b.tolist() == [1.0, 2.0]


def test_skew_field(euclidean):
    u = TangentBundlePoint.of([0.5, 0.5], [3.0, 4.0])
    W = make_field(euclidean, "skew:[[0,1],[-1,0]]")(u)
    assert W.a.tolist() == [0.0, 0.0]
    assert W.b.tolist() == [4.0, -3.0]


def test_tm_polynomial_field(euclidean):
    W = make_field(euclidean, "poly:v1,v2,-x1,-x2")(TangentBundlePoint.of([1.0, 2.0], [3.0, 4.0]))
    assert W.a.tolist() == [3.0, 4.0]
    assert W.b.tolist() == [-1.0, -2.0]


def test_gradient_uses_the_metric(sphere):
    X = make_field(sphere, "gradient:x1", kind="base")
    # g = 4 I at the origin
    assert max_abs(X(vec(0.0, 0.0)) - vec(0.25, 0.0)) < 1e-15


def test_library_specs_round_trip(model):
    for spec in field_library(model) + tm_field_library(model) + form_library(model):
        assert str(FieldSpec.parse(spec)) == spec


@pytest.mark.parametrize(
    "text, position",
    [
        ("rotation:1,1", 11),
        ("poly:x1+*x2", 8),
        ("gradient:x1$", 11),
        ("foo", 0),
        ("h:xi", 0),
        ("skew:[[0,1],[1,0]]", 5),
        ("const:", 6),
        ("v:foo", 2),
        ("position:1", 9),
    ],
)
def test_bad_specs_report_position(text, position):
    with pytest.raises(BadSpec) as info:
        FieldSpec.parse(text)
    assert info.value.position == position


@pytest.mark.parametrize(
    "text, kind",
    [
        ("xi", "base"),
        ("h:position", "base"),
        ("poly:x1,v1", "base"),
        ("const:1,0,0", "base"),
        ("rotation:1,3", "base"),
        ("poly:x1,x2", "tm"),
        ("skew:[[0,1,0],[-1,0,0],[0,0,0]]", "tm"),
        ("position", "form"),
        ("form:x3,0", "form"),
    ],
)
def test_fields_reject_wrong_kind_or_dimension(euclidean, text, kind):
    with pytest.raises(BadSpec):
        make_field(euclidean, text, kind=kind)


def test_unknown_field_kind(euclidean):
    with pytest.raises(NotImplementedError):
        make_field(euclidean, "position", kind="tensor")
