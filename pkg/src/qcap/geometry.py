"""Parametric cross-section descriptions and their resolution to segments.

A cross-section file is a JSON document whose coordinates are small
arithmetic expressions over named parameters, e.g. ``"-(d - s)/2"``. The
expressions are kept unevaluated in :class:`CrossSection` so that parameter
sweeps can re-resolve the same description with overrides.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

Expr = Union[str, float, int]

UNIT_SCALE = {"mm": 1e-3, "m": 1.0}

CONDUCTOR = 0
INTERFACE = 1


class GeometryError(ValueError):
    """Raised for malformed, inconsistent or unresolvable geometry."""


class ExpressionError(GeometryError):
    def __init__(self, message, expr=None, pos=None):
        self.expr = expr
        self.pos = pos
        if pos is not None:
            message = f"{message} at position {pos} in {expr!r}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/()])"
    r")"
)
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _tokenize(expr):
    tokens = []
    pos = 0
    n = len(expr)
    while pos < n:
        if expr[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(expr, pos)
        if m is None or m.end() == pos:
            bad = pos + len(expr[pos:]) - len(expr[pos:].lstrip())
            raise ExpressionError(f"unexpected character {expr[bad]!r}", expr, bad)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    # expr   := term (('+'|'-') term)*
    # term   := factor (('*'|'/') factor)*
    # factor := '-' factor | '+' factor | atom
    # atom   := number | name | '(' expr ')'

    def __init__(self, expr, params):
        self.expr = expr
        self.params = params
        self.tokens = _tokenize(expr)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def parse(self):
        value = self.expression()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {text!r}", self.expr, pos)
        return value

    def expression(self):
        value = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self):
        value = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.take()
            rhs = self.factor()
            if op == "*":
                value = value * rhs
            else:
                if rhs == 0.0:
                    raise ExpressionError("division by zero", self.expr, pos)
                value = value / rhs
        return value

    def factor(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return -self.factor()
        if kind == "op" and text == "+":
            self.take()
            return self.factor()
        return self.atom()

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return float(text)
        if kind == "name":
            if text not in self.params:
                raise ExpressionError(f"unknown identifier {text!r}", self.expr, pos)
            return float(self.params[text])
        if kind == "op" and text == "(":
            value = self.expression()
            kind, text, pos = self.take()
            if not (kind == "op" and text == ")"):
                raise ExpressionError("expected ')'", self.expr, pos)
            return value
        if kind == "end":
            raise ExpressionError("unexpected end of expression", self.expr, pos)
        raise ExpressionError(f"unexpected token {text!r}", self.expr, pos)


def eval_param_expr(expr: Expr, params: Mapping[str, float]) -> float:
    """Evaluate a coordinate expression.

    The grammar admits real literals, identifiers, unary minus, the four
    binary operators and parentheses, with the usual precedence.

    >>> eval_param_expr("2*w + t", {"w": 0.05, "t": 0.005})
    0.105
    """
    if isinstance(expr, bool):
        raise ExpressionError(f"boolean is not a valid expression: {expr!r}")
    if isinstance(expr, (int, float)):
        return float(expr)
    if not isinstance(expr, str):
        raise ExpressionError(f"expression must be a string or number, got {type(expr).__name__}")
    return _Parser(expr, params).parse()


# ---------------------------------------------------------------------------
# unresolved description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConductorSpec:
    name: str
    loop: tuple  # of (Expr, Expr)
    face_eps_r: tuple  # of Expr, one per edge (edge i runs loop[i] -> loop[i+1])


@dataclass(frozen=True)
class InterfaceSpec:
    polyline: tuple  # of (Expr, Expr)
    eps_r_pos: Expr
    eps_r_neg: Expr


@dataclass(frozen=True)
class CrossSection:
    unit: str
    parameters: dict
    ground_plane: bool
    conductors: tuple
    interfaces: tuple = ()

    def __post_init__(self):
        if self.unit not in UNIT_SCALE:
            raise GeometryError(f"unit must be one of {sorted(UNIT_SCALE)}, got {self.unit!r}")
        for name in self.parameters:
            if not isinstance(name, str) or not _IDENT_RE.match(name):
                raise GeometryError(f"invalid parameter name {name!r}")
        if not self.conductors:
            raise GeometryError("at least one conductor is required")
        if not self.ground_plane and len(self.conductors) < 2:
            raise GeometryError(
                "a structure without a ground plane needs at least two conductors"
            )
        for c in self.conductors:
            if len(c.loop) < 3:
                raise GeometryError(f"conductor {c.name!r}: loop needs at least 3 vertices")
            if len(c.face_eps_r) != len(c.loop):
                raise GeometryError(
                    f"conductor {c.name!r}: face_eps_r has {len(c.face_eps_r)} entries, "
                    f"loop has {len(c.loop)} edges"
                )
        for k, itf in enumerate(self.interfaces):
            if len(itf.polyline) < 2:
                raise GeometryError(f"interface {k}: polyline needs at least 2 vertices")

    @property
    def scale(self):
        return UNIT_SCALE[self.unit]

    def to_dict(self):
        return {
            "unit": self.unit,
            "parameters": dict(self.parameters),
            "ground_plane": self.ground_plane,
            "conductors": [
                {
                    "name": c.name,
                    "loop": [list(v) for v in c.loop],
                    "face_eps_r": list(c.face_eps_r),
                }
                for c in self.conductors
            ],
            "dielectric_interfaces": [
                {
                    "polyline": [list(v) for v in i.polyline],
                    "eps_r_pos": i.eps_r_pos,
                    "eps_r_neg": i.eps_r_neg,
                }
                for i in self.interfaces
            ],
        }


def _check_expr(value, where):
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise GeometryError(f"{where}: expected an expression string or number, got {value!r}")
    return value


def _vertices(raw, where):
    if not isinstance(raw, list):
        raise GeometryError(f"{where}: expected a list of [x, y] pairs")
    out = []
    for k, v in enumerate(raw):
        if not isinstance(v, list) or len(v) != 2:
            raise GeometryError(f"{where}[{k}]: expected an [x, y] pair, got {v!r}")
        out.append((_check_expr(v[0], f"{where}[{k}][0]"), _check_expr(v[1], f"{where}[{k}][1]")))
    return tuple(out)


def _require(obj, key, where):
    if key not in obj:
        raise GeometryError(f"{where}: missing required field {key!r}")
    return obj[key]


def _reject_duplicates(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise GeometryError(f"duplicate key {key!r}")
        seen[key] = value
    return seen


def cross_section_from_dict(doc: dict) -> CrossSection:
    if not isinstance(doc, dict):
        raise GeometryError("geometry document must be a JSON object")
    unit = _require(doc, "unit", "document")
    params = _require(doc, "parameters", "document")
    if not isinstance(params, dict):
        raise GeometryError("'parameters' must be an object")
    parameters = {}
    for name, value in params.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise GeometryError(f"parameter {name!r} must be a number")
        parameters[name] = float(value)
    ground = _require(doc, "ground_plane", "document")
    if not isinstance(ground, bool):
        raise GeometryError("'ground_plane' must be a boolean")

    conductors = []
    for k, c in enumerate(_require(doc, "conductors", "document")):
        where = f"conductors[{k}]"
        if not isinstance(c, dict):
            raise GeometryError(f"{where}: expected an object")
        eps = _require(c, "face_eps_r", where)
        if not isinstance(eps, list):
            raise GeometryError(f"{where}.face_eps_r: expected a list")
        conductors.append(
            ConductorSpec(
                name=str(_require(c, "name", where)),
                loop=_vertices(_require(c, "loop", where), f"{where}.loop"),
                face_eps_r=tuple(_check_expr(e, f"{where}.face_eps_r") for e in eps),
            )
        )
    interfaces = []
    for k, i in enumerate(doc.get("dielectric_interfaces", [])):
        where = f"dielectric_interfaces[{k}]"
        if not isinstance(i, dict):
            raise GeometryError(f"{where}: expected an object")
        interfaces.append(
            InterfaceSpec(
                polyline=_vertices(_require(i, "polyline", where), f"{where}.polyline"),
                eps_r_pos=_check_expr(_require(i, "eps_r_pos", where), f"{where}.eps_r_pos"),
                eps_r_neg=_check_expr(_require(i, "eps_r_neg", where), f"{where}.eps_r_neg"),
            )
        )
    names = [c.name for c in conductors]
    if len(set(names)) != len(names):
        raise GeometryError("conductor names must be unique")
    return CrossSection(unit, parameters, ground, tuple(conductors), tuple(interfaces))


def parse_cross_section(text: str) -> CrossSection:
    """Parse a geometry document. Expressions are stored unevaluated."""
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise GeometryError(f"malformed JSON: {exc}") from exc
    return cross_section_from_dict(doc)


def load_cross_section(path) -> CrossSection:
    return parse_cross_section(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# resolved geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    a: tuple
    b: tuple
    kind: int
    cond_id: int = -1
    eps_r: float = float("nan")  # adjacent permittivity, conductor faces only
    eps_r_pos: float = float("nan")
    eps_r_neg: float = float("nan")

    @property
    def length(self):
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])

    @property
    def normal(self):
        L = self.length
        tx, ty = (self.b[0] - self.a[0]) / L, (self.b[1] - self.a[1]) / L
        if self.kind == CONDUCTOR:
            return (ty, -tx)  # travel rotated -90 deg: outward for a CCW loop
        return (-ty, tx)  # travel rotated +90 deg: into the eps_r_pos medium


@dataclass(frozen=True)
class ResolvedGeometry:
    segments: tuple
    n_cond: int
    ground_plane: bool
    conductor_names: tuple = ()
    # signed area (m^2) of each conductor loop, kept for validation
    loop_areas: tuple = field(default=(), compare=False)


def _signed_area(pts):
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def resolve_geometry(cs: CrossSection, overrides: Mapping[str, float] | None = None) -> ResolvedGeometry:
    """Evaluate every expression (with overrides) and convert to meters."""
    overrides = dict(overrides or {})
    unknown = sorted(set(overrides) - set(cs.parameters))
    if unknown:
        raise GeometryError(f"unknown parameter(s) in overrides: {', '.join(unknown)}")
    params = dict(cs.parameters)
    params.update({k: float(v) for k, v in overrides.items()})
    scale = cs.scale

    def point(v):
        return (eval_param_expr(v[0], params) * scale, eval_param_expr(v[1], params) * scale)

    segments = []
    areas = []
    for ci, c in enumerate(cs.conductors):
        pts = [point(v) for v in c.loop]
        area = _signed_area(pts)
        if area <= 0.0:
            raise GeometryError(
                f"conductor {c.name!r}: loop must be counter-clockwise (signed area {area:.3e} m^2)"
            )
        areas.append(area)
        n = len(pts)
        for k in range(n):
            eps = eval_param_expr(c.face_eps_r[k], params)
            if not eps > 0.0:
                raise GeometryError(f"conductor {c.name!r}: face_eps_r[{k}] = {eps} must be > 0")
            seg = Segment(pts[k], pts[(k + 1) % n], CONDUCTOR, cond_id=ci, eps_r=eps)
            _check_segment(seg, cs.ground_plane, f"conductor {c.name!r} edge {k}")
            segments.append(seg)
    for ii, itf in enumerate(cs.interfaces):
        pos = eval_param_expr(itf.eps_r_pos, params)
        neg = eval_param_expr(itf.eps_r_neg, params)
        if not (pos > 0.0 and neg > 0.0):
            raise GeometryError(f"interface {ii}: permittivities must be > 0 (got {pos}, {neg})")
        if pos == neg:
            raise GeometryError(
                f"interface {ii}: eps_r_pos == eps_r_neg == {pos} is not a physical interface"
            )
        pts = [point(v) for v in itf.polyline]
        for k in range(len(pts) - 1):
            seg = Segment(pts[k], pts[k + 1], INTERFACE, eps_r_pos=pos, eps_r_neg=neg)
            _check_segment(seg, cs.ground_plane, f"interface {ii} edge {k}")
            segments.append(seg)
    return ResolvedGeometry(
        tuple(segments),
        len(cs.conductors),
        cs.ground_plane,
        tuple(c.name for c in cs.conductors),
        tuple(areas),
    )


def _check_segment(seg, ground_plane, where):
    if not seg.length > 0.0:
        raise GeometryError(f"{where}: zero-length edge at {seg.a}")
    problem = _ground_violation(seg, ground_plane)
    if problem:
        raise GeometryError(f"{where}: {problem}")


def _ground_violation(seg, ground_plane):
    if not ground_plane:
        return None
    ys = (seg.a[1], seg.b[1])
    if seg.kind == CONDUCTOR:
        if min(ys) <= 0.0:
            return "conductor must lie strictly above the ground plane (y > 0)"
        return None
    # dielectric may rest on the plane, but not extend below it or along it
    if min(ys) < 0.0:
        return "interface extends below the ground plane (y < 0)"
    if max(ys) <= 0.0:
        return "interface lies on the ground plane (y = 0)"
    return None


def validate_geometry(rg: ResolvedGeometry) -> list:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    for k, seg in enumerate(rg.segments):
        if not seg.length > 0.0:
            problems.append(f"segment {k}: zero length")
        issue = _ground_violation(seg, rg.ground_plane)
        if issue:
            problems.append(f"segment {k}: {issue}")
        if seg.kind == INTERFACE and seg.eps_r_pos == seg.eps_r_neg:
            problems.append(f"segment {k}: eps_r_pos equals eps_r_neg")
    for ci, area in enumerate(rg.loop_areas):
        if area <= 0.0:
            problems.append(f"conductor {ci}: loop is not counter-clockwise (area {area:.3e})")
    ids = sorted({s.cond_id for s in rg.segments if s.kind == CONDUCTOR})
    if ids != list(range(rg.n_cond)):
        problems.append(f"conductor indices {ids} are not dense 0..{rg.n_cond - 1}")
    return problems


def segments_from_loop(points, cond_id, eps_r=1.0):
    """Helper for building :class:`ResolvedGeometry` directly from a CCW loop (meters)."""
    n = len(points)
    return [
        Segment(tuple(points[k]), tuple(points[(k + 1) % n]), CONDUCTOR, cond_id=cond_id, eps_r=eps_r)
        for k in range(n)
    ]
