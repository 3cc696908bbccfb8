"""Textual field specs for the command line and the built-in field library.

Grammar (whitespace-free)::

    spec    := [lift ':'] kind [':' args]
    lift    := 'h' | 'v' | 'ext'
    kind    := const | position | rotation | gradient | poly          (base fields)
             | xi | spray | skew | poly                              (TM fields, poly over x and v)
             | exact | form                                          (1-forms)
    poly    := ['+'|'-'] term (('+'|'-') term)*
    term    := factor ('*' factor)*
    factor  := number | var ['^' integer]
    var     := 'x' index | 'v' index                                 (1-based)

``skew`` takes a bracketed row-major matrix, e.g. ``skew:[[0,1],[-1,0]]``.
"""
import json
import re
from dataclasses import dataclass
from typing import Literal, Optional

import torch
from torch import Tensor
from torch.func import jacfwd

from sasaki.bundle import (
    TMVectorField,
    TTVector,
    canonical_field,
    complete_lift_field,
    horizontal_lift_field,
    spray_field,
    tanno_field,
    vertical_lift_field,
)
from sasaki.errors import BadSpec
from sasaki.forms import OneFormField
from sasaki.geometry import BaseVectorField, ChartedManifold
from sasaki.utils import DTYPE, as_tensor

__all__ = [
    "Polynomial",
    "parse_polynomial",
    "FieldSpec",
    "make_field",
    "field_library",
    "tm_field_library",
    "form_library",
]

FieldKind = Literal["base", "tm", "form"]

LIFTS = ("h", "v", "ext")
BASE_KINDS = ("const", "position", "rotation", "gradient", "poly")
TM_KINDS = ("xi", "spray", "skew", "poly")
FORM_KINDS = ("exact", "form")

_TOKEN = re.compile(r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<var>[xv]\d+)|(?P<op>[-+*^])")


def _format_number(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True)
class Polynomial:
    """Sum of monomials; ``terms`` maps sorted ((var, index, power), ...) to coefficients."""

    terms: tuple = ()

    @classmethod
    def from_dict(cls, terms: dict) -> "Polynomial":
        return cls(tuple(sorted((k, v) for k, v in terms.items() if v != 0.0)))

    def variables(self) -> set:
        return {(var, index) for monomial, _ in self.terms for var, index, _ in monomial}

    def __call__(self, x: Tensor, v: Optional[Tensor] = None) -> Tensor:
        total = torch.zeros_like(x[0])
        for monomial, coefficient in self.terms:
            value = torch.zeros_like(x[0]) + coefficient
            for var, index, power in monomial:
                source = x if var == "x" else v
                value = value * source[index - 1] ** power
            total = total + value
        return total

    def __str__(self):
        if not self.terms:
            return "0"
        pieces = []
        for monomial, coefficient in self.terms:
            factors = [f"{var}{index}" + (f"^{power}" if power > 1 else "") for var, index, power in monomial]
            magnitude = abs(coefficient)
            if factors and magnitude == 1.0:
                body = "*".join(factors)
            else:
                body = "*".join([_format_number(magnitude)] + factors)
            if coefficient < 0:
                pieces.append("-" + body)
            else:
                pieces.append(("+" if pieces else "") + body)
        return "".join(pieces)


class _PolynomialParser:
    def __init__(self, text: str, offset: int, source: str):
        self.source = source
        self.offset = offset
        self.tokens = []
        position = 0
        while position < len(text):
            match = _TOKEN.match(text, position)
            if match is None:
                raise BadSpec(source, offset + position, f"unexpected character {text[position]!r}")
            self.tokens.append((match.lastgroup, match.group(), offset + position))
            position = match.end()
        self.end = offset + len(text)
        self.k = 0

    def _peek(self):
        return self.tokens[self.k] if self.k < len(self.tokens) else (None, None, self.end)

    def _take(self):
        token = self._peek()
        self.k += 1
        return token

    def _fail(self, reason: str):
        raise BadSpec(self.source, self._peek()[2], reason)

    def parse(self) -> Polynomial:
        if not self.tokens:
            self._fail("empty polynomial")
        terms = {}
        sign = 1.0
        kind, text, _ = self._peek()
        if kind == "op" and text in "+-":
            self._take()
            sign = -1.0 if text == "-" else 1.0
        while True:
            monomial, coefficient = self._term()
            terms[monomial] = terms.get(monomial, 0.0) + sign * coefficient
            kind, text, _ = self._peek()
            if kind is None:
                break
            if kind == "op" and text in "+-":
                self._take()
                sign = -1.0 if text == "-" else 1.0
                continue
            self._fail(f"expected '+' or '-', got {text!r}")
        return Polynomial.from_dict(terms)

    def _term(self) -> tuple:
        coefficient = 1.0
        powers = {}
        while True:
            kind, text, position = self._take()
            if kind == "num":
                coefficient *= float(text)
            elif kind == "var":
                key = (text[0], int(text[1:]))
                if key[1] < 1:
                    raise BadSpec(self.source, position, f"variable indices start at 1, got {text!r}")
                power = 1
                if self._peek()[:2] == ("op", "^"):
                    self._take()
                    kind, exponent, position = self._take()
                    if kind != "num" or not exponent.isdigit():
                        raise BadSpec(self.source, position, f"expected an integer exponent, got {exponent!r}")
                    power = int(exponent)
                powers[key] = powers.get(key, 0) + power
            else:
                raise BadSpec(self.source, position, f"expected a number or variable, got {text!r}")
            if self._peek()[:2] != ("op", "*"):
                break
            self._take()
        monomial = tuple(sorted((var, index, power) for (var, index), power in powers.items() if power > 0))
        return monomial, coefficient


def parse_polynomial(text: str, offset: int = 0, source: Optional[str] = None) -> Polynomial:
    return _PolynomialParser(text, offset, source if source is not None else text).parse()


def _split_args(text: str, offset: int, source: str) -> list:
    """Comma-separated args with their absolute positions; brackets group."""
    args, depth, start = [], 0, 0
    for k, char in enumerate(text):
        if char == "[":
            depth += 1
        elif char == "]":
            depth -= 1
            if depth < 0:
                raise BadSpec(source, offset + k, "unbalanced ']'")
        elif char == "," and depth == 0:
            args.append((text[start:k], offset + start))
            start = k + 1
    if depth != 0:
        raise BadSpec(source, offset + len(text), "unbalanced '['")
    args.append((text[start:], offset + start))
    for arg, position in args:
        if not arg:
            raise BadSpec(source, position, "empty argument")
    return args


def _number(arg: str, position: int, source: str) -> float:
    try:
        return float(arg)
    except ValueError:
        raise BadSpec(source, position, f"expected a number, got {arg!r}") from None


def _matrix(arg: str, position: int, source: str) -> tuple:
    try:
        rows = json.loads(arg)
    except json.JSONDecodeError as e:
        raise BadSpec(source, position + e.pos, f"malformed matrix: {e.msg}") from None
    if not (isinstance(rows, list) and rows and all(isinstance(r, list) and len(r) == len(rows) for r in rows)):
        raise BadSpec(source, position, "expected a square bracketed matrix")
    if not all(isinstance(a, (int, float)) for r in rows for a in r):
        raise BadSpec(source, position, "matrix entries must be numbers")
    return tuple(tuple(float(a) for a in r) for r in rows)


@dataclass(frozen=True)
class FieldSpec:
    kind: str
    args: tuple = ()
    lift: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "FieldSpec":
        lift, rest, offset = None, text, 0
        head, sep, tail = text.partition(":")
        if sep and head in LIFTS:
            lift, rest, offset = head, tail, len(head) + 1
        kind, sep, arg_text = rest.partition(":")
        known = BASE_KINDS + TM_KINDS + FORM_KINDS
        if kind not in known:
            raise BadSpec(text, offset, f"unknown field kind {kind!r}")
        if lift is not None and kind not in BASE_KINDS:
            raise BadSpec(text, 0, f"lift '{lift}:' needs a base field, got {kind!r}")
        arg_offset = offset + len(kind) + 1
        if sep and not arg_text:
            raise BadSpec(text, arg_offset, "missing arguments after ':'")
        raw = _split_args(arg_text, arg_offset, text) if sep else []
        return cls(kind, cls._parse_args(kind, raw, text, arg_offset), lift)

    @staticmethod
    def _parse_args(kind: str, raw: list, text: str, offset: int) -> tuple:
        if kind in ("position", "xi", "spray"):
            if raw:
                raise BadSpec(text, raw[0][1], f"{kind} takes no arguments")
            return ()
        if not raw:
            raise BadSpec(text, offset - 1, f"{kind} needs arguments")
        if kind == "const":
            return tuple(_number(arg, position, text) for arg, position in raw)
        if kind == "rotation":
            if len(raw) != 2 or not all(arg.isdigit() and int(arg) >= 1 for arg, _ in raw):
                raise BadSpec(text, raw[0][1], "rotation takes two 1-based axis indices")
            if raw[0][0] == raw[1][0]:
                raise BadSpec(text, raw[1][1], "rotation axes must differ")
            return (int(raw[0][0]), int(raw[1][0]))
        if kind in ("gradient", "exact"):
            if len(raw) != 1:
                raise BadSpec(text, raw[1][1], f"{kind} takes one polynomial")
            return (parse_polynomial(raw[0][0], raw[0][1], text),)
        if kind == "skew":
            if len(raw) != 1:
                raise BadSpec(text, raw[1][1], "skew takes one matrix")
            matrix = _matrix(raw[0][0], raw[0][1], text)
            n = len(matrix)
            if any(matrix[i][j] != -matrix[j][i] for i in range(n) for j in range(n)):
                raise BadSpec(text, raw[0][1], "matrix is not skew-symmetric")
            return (matrix,)
        return tuple(parse_polynomial(arg, position, text) for arg, position in raw)

    def _format_arg(self, arg) -> str:
        if isinstance(arg, tuple):
            return "[" + ",".join("[" + ",".join(_format_number(a) for a in row) + "]" for row in arg) + "]"
        if isinstance(arg, (int, float)):
            return _format_number(arg)
        return str(arg)

    def __str__(self):
        text = f"{self.lift}:{self.kind}" if self.lift else self.kind
        if self.args:
            text += ":" + ",".join(self._format_arg(a) for a in self.args)
        return text


def _check_variables(spec: FieldSpec, polys, m: int, allow_v: bool):
    for poly in polys:
        for var, index in poly.variables():
            if var == "v" and not allow_v:
                raise BadSpec(str(spec), 0, f"variable v{index} is not allowed in a field on M")
            if index > m:
                raise BadSpec(str(spec), 0, f"variable {var}{index} exceeds dimension {m}")


def _arity(spec: FieldSpec, expected: int):
    if len(spec.args) != expected:
        raise BadSpec(str(spec), 0, f"{spec.kind} needs {expected} components, got {len(spec.args)}")


def _base_field(M: ChartedManifold, spec: FieldSpec) -> BaseVectorField:
    m = M.dim
    name = str(FieldSpec(spec.kind, spec.args))
    if spec.kind == "const":
        _arity(spec, m)
        c = as_tensor(spec.args)
        zero = torch.zeros(m, m, dtype=DTYPE)
        return BaseVectorField(lambda x: torch.zeros_like(x) + c, name, jacobian_override=lambda x: zero)
    if spec.kind == "position":
        eye = torch.eye(m, dtype=DTYPE)
        return BaseVectorField(lambda x: x, name, jacobian_override=lambda x: eye)
    if spec.kind == "rotation":
        i, j = spec.args
        if max(i, j) > m:
            raise BadSpec(name, 0, f"rotation axis exceeds dimension {m}")
        jac = torch.zeros(m, m, dtype=DTYPE)
        jac[i - 1, j - 1] = -1.0
        jac[j - 1, i - 1] = 1.0
        return BaseVectorField(lambda x: jac @ x, name, jacobian_override=lambda x: jac)
    if spec.kind == "gradient":
        _check_variables(spec, spec.args, m, allow_v=False)
        (f,) = spec.args
        return BaseVectorField(lambda x: torch.linalg.solve(M.metric(x), jacfwd(f)(x)), name)
    if spec.kind == "poly":
        _arity(spec, m)
        _check_variables(spec, spec.args, m, allow_v=False)
        polys = spec.args
        return BaseVectorField(lambda x: torch.stack([p(x) for p in polys]), name)
    raise BadSpec(name, 0, f"{spec.kind} is not a field on M")


def _tm_field(M: ChartedManifold, spec: FieldSpec) -> TMVectorField:
    m = M.dim
    if spec.lift is not None:
        X = _base_field(M, spec)
        if spec.lift == "h":
            return horizontal_lift_field(M, X)
        if spec.lift == "v":
            return vertical_lift_field(X)
        return complete_lift_field(X)
    if spec.kind == "xi":
        return canonical_field()
    if spec.kind == "spray":
        return spray_field(M)
    if spec.kind == "skew":
        (matrix,) = spec.args
        if len(matrix) != m:
            raise BadSpec(str(spec), 0, f"skew matrix must be {m}x{m}")
        field = tanno_field(as_tensor(matrix))
        return TMVectorField(field.components, name=str(spec))
    if spec.kind == "poly":
        _arity(spec, 2 * m)
        _check_variables(spec, spec.args, m, allow_v=True)
        polys = spec.args

        def components(u) -> TTVector:
            values = torch.stack([p(u.x, u.v) for p in polys])
            return TTVector(values[:m], values[m:])

        return TMVectorField(components, name=str(spec))
    raise BadSpec(str(spec), 0, f"{spec.kind} is not a field on TM; lift it with h:, v: or ext:")


def _form_field(M: ChartedManifold, spec: FieldSpec) -> OneFormField:
    m = M.dim
    if spec.lift is not None or spec.kind not in FORM_KINDS:
        raise BadSpec(str(spec), 0, f"{spec} is not a 1-form; expected exact:poly or form:p1,...,pm")
    if spec.kind == "exact":
        _check_variables(spec, spec.args, m, allow_v=False)
        (f,) = spec.args
        return OneFormField(jacfwd(f), name=str(spec))
    _arity(spec, m)
    _check_variables(spec, spec.args, m, allow_v=False)
    polys = spec.args
    return OneFormField(lambda x: torch.stack([p(x) for p in polys]), name=str(spec))


def make_field(M: ChartedManifold, spec, kind: FieldKind = "tm"):
    """Build a BaseVectorField, TMVectorField or OneFormField on M from a spec or its text."""
    spec = FieldSpec.parse(spec) if isinstance(spec, str) else spec
    if kind == "base":
        if spec.lift is not None:
            raise BadSpec(str(spec), 0, "lift prefixes only apply to fields on TM")
        return _base_field(M, spec)
    if kind == "tm":
        return _tm_field(M, spec)
    if kind == "form":
        return _form_field(M, spec)
    raise NotImplementedError(f"Unknown field kind {kind}")


def _sphere_killing(c: float) -> str:
    """Killing field a(1 - c|x|^2) + 2c(a.x)x for a = e_1, restricted to m = 2."""
    return str(FieldSpec.parse(f"poly:1+{_format_number(c)}*x1^2-{_format_number(c)}*x2^2,{_format_number(2 * c)}*x1*x2"))


def field_library(M: ChartedManifold) -> list:
    """Named base fields used by the verification suites; Killing and non-Killing mixed."""
    m = M.dim
    zeros = [0] * m
    e1 = ",".join(_format_number(a) for a in [1] + zeros[1:])
    specs = [f"const:{e1}", "position"]
    if m >= 2:
        specs += ["rotation:1,2", "gradient:x1*x2"]
        specs.append("poly:" + ",".join(["x1^2"] + ["0"] * (m - 1)))
    if M.name.startswith("sphere") and m == 2:
        specs.append(_sphere_killing(M.sectional_curvature))
    if M.name == "halfplane":
        specs.append("poly:x1^2-x2^2,2*x1*x2")
    return specs


def tm_field_library(M: ChartedManifold) -> list:
    specs = ["xi", "spray"]
    for base in field_library(M):
        specs += [f"h:{base}", f"v:{base}", f"ext:{base}"]
    if M.is_flat and M.dim == 2:
        specs.append("skew:[[0,1],[-1,0]]")
    return specs


def form_library(M: ChartedManifold) -> list:
    specs = ["form:" + ",".join(["1"] + ["0"] * (M.dim - 1))]
    if M.dim >= 2:
        specs += ["exact:x1*x2", "exact:x1^2-x2^2", "form:" + ",".join(["-x2", "x1"] + ["0"] * (M.dim - 2))]
    return specs
