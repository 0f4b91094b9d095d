"""Closed-form integrals of the 2D free-space Laplace kernel over straight elements.

For a source element from ``a`` to ``b`` (length ``L``, unit tangent ``t``)
and an observation point with local coordinates ``u`` (along ``t`` from
``a``) and ``v`` (across), the two primitives are

* potential  ``P = -1/(2 pi) * int ln|r - r'| dl'``
  ``= -1/(2 pi) * [h(u) - h(u - L)]`` with
  ``h(s) = s/2 * ln(s^2 + v^2) - s + v * atan(s / v)``;
* field      ``F = 1/(2 pi) * int (r - r') / |r - r'|^2 dl'``, whose tangential
  part is ``ln(|r - a| / |r - b|) / (2 pi)`` and whose normal part is the
  angle the element subtends at ``r`` divided by ``2 pi``.

Both are per unit charge density and exclude ``1/eps0``.  Image versions
subtract the contribution of the element mirrored in ``y = 0``.
"""
from __future__ import annotations

import math

import numpy as np

INV_TWO_PI = 1.0 / (2.0 * math.pi)

# |v| below this fraction of L counts as "on the element line"
_ON_LINE = 1e-12


class KernelSingularityError(ValueError):
    """Observation point sits on an element endpoint (field kernel diverges)."""

    def __init__(self, message, obs_index=None, elem_index=None):
        super().__init__(message)
        self.obs_index = obs_index
        self.elem_index = elem_index


def _local(a, b, obs, pairs=False):
    # a, b: (N, 2); obs: (M, 2) -> u, v of shape (M, N) plus L, t.
    # With pairs, obs[i] is taken against element i only and u, v are (N,).
    d = b - a
    L = np.hypot(d[:, 0], d[:, 1])
    t = d / L[:, None]
    if pairs:
        rx = obs[:, 0] - a[:, 0]
        ry = obs[:, 1] - a[:, 1]
    else:
        rx = obs[:, 0][:, None] - a[:, 0][None, :]
        ry = obs[:, 1][:, None] - a[:, 1][None, :]
    u = rx * t[:, 0] + ry * t[:, 1]
    # v > 0 on the left of the travel direction
    v = ry * t[:, 0] - rx * t[:, 1]
    return u, v, L, t


def _subtended(u, v, L):
    # atan(u/v) - atan((u-L)/v) without the v = 0 singularity
    ang = np.arctan2(L * v, u * (u - L) + v * v)
    on_line = np.abs(v) <= _ON_LINE * L
    return np.where(on_line, 0.0, ang)


def _xlog(x, v2):
    r2 = x * x + v2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * x * np.log(r2)
    return np.where(r2 == 0.0, 0.0, out)


def potential_matrix(a, b, obs):
    """Potential of unit density on each element (columns) at each point (rows)."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    obs = np.asarray(obs, dtype=float).reshape(-1, 2)
    u, v, L, _ = _local(a, b, obs)
    v2 = v * v
    w = u - L
    h = _xlog(u, v2) - _xlog(w, v2) - L + v * _subtended(u, v, L)
    return -INV_TWO_PI * h


def field_matrix(a, b, obs, strict=True, pairs=False):
    """Field of unit density on each element at each point, shape (M, N, 2).

    Points lying on an element's interior get the principal value (zero
    normal component).  Points on an endpoint raise
    :class:`KernelSingularityError` when ``strict``.  With ``pairs`` the
    i-th point is evaluated against the i-th element only, shape (N, 2).
    """
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    obs = np.asarray(obs, dtype=float).reshape(-1, 2)
    u, v, L, t = _local(a, b, obs, pairs)
    w = u - L
    ra2 = u * u + v * v
    rb2 = w * w + v * v
    tiny = (_ON_LINE * L) ** 2
    at_end = (ra2 <= tiny) | (rb2 <= tiny)
    if strict and np.any(at_end):
        i, j = np.argwhere(at_end.reshape(u.shape[0], -1))[0]
        if pairs:
            j = i
        raise KernelSingularityError(
            f"observation point {int(i)} coincides with an endpoint of element {int(j)}",
            int(i),
            int(j),
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        ft = 0.5 * INV_TWO_PI * np.log(ra2 / rb2)
    ft = np.where(at_end, np.nan, ft)
    fn = INV_TWO_PI * _subtended(u, v, L)
    # local normal is the tangent rotated +90 deg
    nx, ny = -t[:, 1], t[:, 0]
    out = np.empty(u.shape + (2,))
    out[..., 0] = ft * t[:, 0] + fn * nx
    out[..., 1] = ft * t[:, 1] + fn * ny
    return out


def _mirror(p):
    m = np.array(p, dtype=float).reshape(-1, 2)
    m[:, 1] = -m[:, 1]
    return m


def grounded_potential_matrix(a, b, obs):
    return potential_matrix(a, b, obs) - potential_matrix(_mirror(a), _mirror(b), obs)


def grounded_field_matrix(a, b, obs, strict=True):
    return field_matrix(a, b, obs, strict) - field_matrix(_mirror(a), _mirror(b), obs, strict)


# ---------------------------------------------------------------------------
# single element / single point
# ---------------------------------------------------------------------------


def _ends(elem):
    return np.asarray(elem.a, dtype=float), np.asarray(elem.b, dtype=float)


def segment_potential(elem, obs) -> float:
    a, b = _ends(elem)
    return float(potential_matrix(a, b, np.asarray(obs, dtype=float))[0, 0])


def segment_field(elem, obs) -> np.ndarray:
    a, b = _ends(elem)
    return field_matrix(a, b, np.asarray(obs, dtype=float))[0, 0]


def grounded_potential(elem, obs) -> float:
    a, b = _ends(elem)
    return float(grounded_potential_matrix(a, b, np.asarray(obs, dtype=float))[0, 0])


def grounded_field(elem, obs) -> np.ndarray:
    a, b = _ends(elem)
    return grounded_field_matrix(a, b, np.asarray(obs, dtype=float))[0, 0]
