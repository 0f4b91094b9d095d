"""Independent checks: adaptive quadrature of the raw kernels and analytic capacitances.

Nothing here shares code with :mod:`qcap.kernel`; the integrands are the
bare Green's function and its gradient, integrated numerically.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .geometry import ConductorSpec, CrossSection, InterfaceSpec

EPS0 = 8.8541878128e-12


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureSettings:
    abs_tol: float = 1e-15
    rel_tol: float = 1e-13
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be > 0")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


def _setup(elem, obs, what):
    a = np.asarray(elem.a, dtype=float)
    b = np.asarray(elem.b, dtype=float)
    r = np.asarray(obs, dtype=float)
    d = b - a
    L = math.hypot(d[0], d[1])
    # closest point parameter, for splitting the interval near the peak
    s0 = float(np.clip(np.dot(r - a, d) / (L * L), 0.0, 1.0))
    dist = float(np.hypot(*(r - (a + s0 * d))))
    if dist < 1e-6 * L:
        raise OracleError(
            f"{what}: observation point is {dist:.3e} m from the element (< 1e-6 L); "
            "quadrature is not valid there"
        )
    pts = [s0] if 0.0 < s0 < 1.0 else None
    far = max(float(np.hypot(*(r - a))), float(np.hypot(*(r - a - d))))
    return a, d, L, r, pts, dist, far


def _quad(f, pts, qs, scale):
    # scale bounds the integral's magnitude; the absolute tolerance follows
    # it so that cancelling components do not demand impossible accuracy
    epsabs = max(qs.abs_tol, qs.rel_tol * scale)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(
                f, 0.0, 1.0, points=pts, epsabs=epsabs, epsrel=qs.rel_tol, limit=qs.max_subdivisions
            )
        except integrate.IntegrationWarning as exc:
            raise OracleError(f"quadrature did not reach tolerance: {exc}") from exc
    return val


def quad_potential(elem, obs, qs: QuadratureSettings | None = None) -> float:
    """Numerically integrate -ln|obs - r'| / (2 pi) over the element."""
    qs = qs or QuadratureSettings()
    a, d, L, r, pts, dist, far = _setup(elem, obs, "quad_potential")

    def f(s):
        x = r[0] - (a[0] + s * d[0])
        y = r[1] - (a[1] + s * d[1])
        return -math.log(math.sqrt(x * x + y * y)) / (2.0 * math.pi)

    scale = (1.0 + max(abs(math.log(dist)), abs(math.log(far)))) / (2.0 * math.pi)
    return _quad(f, pts, qs, scale) * L


def quad_field(elem, obs, qs: QuadratureSettings | None = None) -> np.ndarray:
    """Numerically integrate (obs - r') / (2 pi |obs - r'|^2) over the element."""
    qs = qs or QuadratureSettings()
    a, d, L, r, pts, dist, far = _setup(elem, obs, "quad_field")

    def comp(k):
        def f(s):
            x = r[0] - (a[0] + s * d[0])
            y = r[1] - (a[1] + s * d[1])
            return (x, y)[k] / (2.0 * math.pi * (x * x + y * y))

        return f

    scale = 1.0 / (2.0 * math.pi * dist)
    return np.array([_quad(comp(0), pts, qs, scale) * L, _quad(comp(1), pts, qs, scale) * L])


def analytic_coax(a, b, eps_r=1.0) -> float:
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    if not eps_r > 0:
        raise ValueError("eps_r must be > 0")
    return 2 * math.pi * EPS0 * eps_r / math.log(b / a)


def analytic_two_layer_coax(a, b, c, eps_r1, eps_r2) -> float:
    """Coax with eps_r1 for a < r < b and eps_r2 for b < r < c."""
    if not 0 < a < b < c:
        raise ValueError("need 0 < a < b < c")
    if not (eps_r1 > 0 and eps_r2 > 0):
        raise ValueError("permittivities must be > 0")
    return 2 * math.pi * EPS0 / (math.log(b / a) / eps_r1 + math.log(c / b) / eps_r2)


def analytic_wire_over_ground(h, r0) -> float:
    """Round wire of radius r0 with its axis at height h above a ground plane."""
    if not 0 < r0 < h:
        raise ValueError("need 0 < r0 < h")
    return 2 * math.pi * EPS0 / math.acosh(h / r0)


# ---------------------------------------------------------------------------
# reference structures (circles polygonized, vertices on the circle)
# ---------------------------------------------------------------------------


def _circle(radius, n, cx=0.0, cy=0.0):
    th = 2 * math.pi * np.arange(n) / n
    return tuple((cx + radius * math.cos(t), cy + radius * math.sin(t)) for t in th)


def coax_cross_section(a=1.0, b=2.0, eps_r=1.0, n_sides=64) -> CrossSection:
    """Coax in mm: inner conductor first, outer shell second.

    The shell is described by its inner surface; only conductor 0's row of
    C is physically meaningful without a ground plane.
    """
    return CrossSection(
        "mm",
        {"a": a, "b": b, "eps_r": eps_r},
        False,
        (
            ConductorSpec("inner", _circle(a, n_sides), (eps_r,) * n_sides),
            ConductorSpec("outer", _circle(b, n_sides), (eps_r,) * n_sides),
        ),
    )


def two_layer_coax_cross_section(a=1.0, b=1.5, c=2.0, eps_r1=2.0, eps_r2=1.0, n_sides=64) -> CrossSection:
    # a CCW polyline has its +normal pointing at the centre, so eps_r_pos is the inner layer
    ring = _circle(b, n_sides)
    return CrossSection(
        "mm",
        {"a": a, "b": b, "c": c},
        False,
        (
            ConductorSpec("inner", _circle(a, n_sides), (eps_r1,) * n_sides),
            ConductorSpec("outer", _circle(c, n_sides), (eps_r2,) * n_sides),
        ),
        (InterfaceSpec(ring + (ring[0],), eps_r1, eps_r2),),
    )


def wire_over_ground_cross_section(h=10.0, r0=1.0, n_sides=64) -> CrossSection:
    return CrossSection(
        "mm",
        {"h": h, "r0": r0},
        True,
        (ConductorSpec("wire", _circle(r0, n_sides, 0.0, h), (1.0,) * n_sides),),
    )
