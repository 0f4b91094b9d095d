"""scikit-learn style front end.

``fit`` takes a cross-section (object, JSON path, JSON text or dict) and
extracts its nominal capacitance matrix; ``predict`` re-extracts it for a
batch of parameter overrides, which is how a multivariant study is run.

    >>> est = CapacitanceExtractor(initial_l="2*w").fit("mtl2_like.json")  # doctest: +SKIP
    >>> est.capacitance_                                                    # doctest: +SKIP
    >>> est.predict([{"w": 0.0475}, {"w": 0.0525}])                         # doctest: +SKIP
"""
from __future__ import annotations

import os
from collections.abc import Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .adaptive import AdaptiveConfig, default_tol, parse_control, parse_method, run_adaptive
from .geometry import (
    CrossSection,
    GeometryError,
    cross_section_from_dict,
    eval_param_expr,
    load_cross_section,
    parse_cross_section,
    resolve_geometry,
)
from .sweep import reference_run


def check_cross_section(X) -> CrossSection:
    """Coerce ``X`` to a :class:`CrossSection`.

    Accepts a CrossSection, a mapping in the geometry-file layout, a path to
    a geometry file, or the JSON text itself.
    """
    if isinstance(X, CrossSection):
        return X
    if isinstance(X, Mapping):
        return cross_section_from_dict(dict(X))
    if isinstance(X, os.PathLike):
        return load_cross_section(X)
    if isinstance(X, str):
        if X.lstrip().startswith("{"):
            return parse_cross_section(X)
        return load_cross_section(X)
    raise TypeError(f"cannot interpret {type(X).__name__} as a cross-section")


def check_overrides(X, cs: CrossSection) -> list:
    """Normalise ``X`` to a list of override dicts whose keys are declared parameters."""
    if X is None:
        return [{}]
    if isinstance(X, Mapping):
        X = [X]
    out = []
    for k, item in enumerate(X):
        if not isinstance(item, Mapping):
            raise TypeError(f"override set {k} must be a mapping, got {type(item).__name__}")
        unknown = sorted(set(item) - set(cs.parameters))
        if unknown:
            raise GeometryError(f"override set {k}: unknown parameter(s) {', '.join(unknown)}")
        vals = {}
        for name, v in item.items():
            v = float(v)
            if not np.isfinite(v):
                raise ValueError(f"override set {k}: {name} = {v} is not finite")
            vals[name] = v
        out.append(vals)
    return out


def length_in_meters(expr, cs: CrossSection, params=None) -> float:
    value = eval_param_expr(expr, cs.parameters if params is None else params) * cs.scale
    if not value > 0.0:
        raise ValueError(f"length {expr!r} evaluates to {value} m, must be > 0")
    return value


class CapacitanceExtractor(BaseEstimator):
    """Per-unit-length capacitance matrix of a multiconductor line cross-section.

    Parameters
    ----------
    method : "all" or "top:<p>"
        Refinement rule: bisect every element, or the ``p`` percent with
        the largest charge density.
    tol : float or None
        Relative change of the control value at which refinement stops.
        ``None`` picks 1e-2 for "all" and 1e-3 for "top:<p>".
    max_iters : int
        Refinement iterations before giving up (status ``max_iters``).
    initial_l : str, float or None
        Initial maximum element length, an expression in the geometry's
        units (e.g. ``"2*w"``).  ``None`` starts from one element per
        boundary segment.
    control : "diag:<k>" or "fro"
        Convergence monitor: C_kk or the Frobenius norm of C.
    uniform_l : str, float or None
        If set, skip adaptation and solve once on a uniform mesh with this
        element length (e.g. ``"t/3"``).
    """

    def __init__(self, method="all", tol=None, max_iters=30, initial_l=None, control="diag:0", uniform_l=None):
        self.method = method
        self.tol = tol
        self.max_iters = max_iters
        self.initial_l = initial_l
        self.control = control
        self.uniform_l = uniform_l

    def _config(self, cs, rg):
        method = parse_method(self.method)
        tol = default_tol(method) if self.tol is None else float(self.tol)
        if self.initial_l is None:
            l0 = max(s.length for s in rg.segments)
        else:
            l0 = length_in_meters(self.initial_l, cs)
        return AdaptiveConfig(method, tol, int(self.max_iters), l0, parse_control(self.control))

    def _solve(self, cs, overrides):
        rg = resolve_geometry(cs, overrides)
        params = dict(cs.parameters)
        params.update(overrides)
        if self.uniform_l is not None:
            ref = reference_run(rg, length_in_meters(self.uniform_l, cs, params))
            return ref.capacitance, None, ref.n
        # the initial step is a solver setting, fixed at the nominal parameters
        run = run_adaptive(rg, self._config(cs, resolve_geometry(cs)))
        return run.capacitance, run.trace, run.trace.final.n

    def fit(self, X, y=None):
        cs = check_cross_section(X)
        cap, trace, n = self._solve(cs, {})
        self.cross_section_ = cs
        self.capacitance_ = cap.C
        self.conductor_names_ = cap.names
        self.trace_ = trace
        self.status_ = trace.status.value if trace is not None else "uniform"
        self.n_elements_ = n
        self.n_conductors_ = cap.C.shape[0]
        return self

    def predict(self, X=None):
        """Capacitance matrices (F/m) for each override set, shape (n_sets, n_cond, n_cond)."""
        check_is_fitted(self, "capacitance_")
        sets = check_overrides(X, self.cross_section_)
        return np.stack([self._solve(self.cross_section_, o)[0].C for o in sets])

    def fit_predict(self, X, overrides=None):
        return self.fit(X).predict(overrides)
