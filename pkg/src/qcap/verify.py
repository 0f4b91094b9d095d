"""Oracle comparisons run by ``qcap verify`` and by the test-suite."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernel, oracle
from .adaptive import AdaptiveConfig, RefineAll, run_adaptive
from .geometry import resolve_geometry
from .mesh import Element

KERNEL_RTOL = 1e-10


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    expected: float
    error: float
    tol: float

    @property
    def passed(self):
        return bool(self.error <= self.tol)


def random_pairs(rng, n, scale=1e-3, min_gap=0.01):
    """Random (element, observation point) pairs with the point at least
    ``min_gap * L`` away from the element.  Coordinates are of order ``scale``."""
    pairs = []
    while len(pairs) < n:
        a = rng.uniform(-1.0, 1.0, 2) * scale
        theta = rng.uniform(0.0, 2.0 * math.pi)
        L = scale * 10 ** rng.uniform(-2.0, 0.0)
        b = a + L * np.array([math.cos(theta), math.sin(theta)])
        obs = a + rng.uniform(-2.0, 3.0) * (b - a) + rng.normal(0.0, 1.0, 2) * L * 10 ** rng.uniform(-2.0, 0.5)
        s = np.clip(np.dot(obs - a, b - a) / (L * L), 0.0, 1.0)
        if np.hypot(*(obs - (a + s * (b - a)))) >= min_gap * L:
            pairs.append((Element(tuple(a), tuple(b)), tuple(obs)))
    return pairs


def kernel_errors(pairs):
    """Worst relative disagreement of closed-form potential and field with quadrature."""
    pot = fld = 0.0
    for elem, obs in pairs:
        q = oracle.quad_potential(elem, obs)
        pot = max(pot, abs(kernel.segment_potential(elem, obs) - q) / abs(q))
        qf = oracle.quad_field(elem, obs)
        fld = max(fld, float(np.linalg.norm(kernel.segment_field(elem, obs) - qf) / np.linalg.norm(qf)))
    return pot, fld


def _c11(cs, tol=1e-2):
    # initial mesh: one element per polygon edge
    cfg = AdaptiveConfig(RefineAll(), tol, 30, initial_l_max=1.0)
    return float(run_adaptive(resolve_geometry(cs), cfg).capacitance.C[0, 0])


def structure_checks():
    out = []
    exact = oracle.analytic_coax(1e-3, 2e-3, 1.0)
    c = _c11(oracle.coax_cross_section(1.0, 2.0, 1.0))
    out.append(Check("coax a=1 b=2 mm", c, exact, abs(c - exact) / exact, 5e-3))
    exact = oracle.analytic_two_layer_coax(1e-3, 1.5e-3, 2e-3, 2.0, 1.0)
    c = _c11(oracle.two_layer_coax_cross_section(1.0, 1.5, 2.0, 2.0, 1.0))
    out.append(Check("two-layer coax 1/1.5/2 mm, eps 2/1", c, exact, abs(c - exact) / exact, 1e-2))
    exact = oracle.analytic_wire_over_ground(10e-3, 1e-3)
    c = _c11(oracle.wire_over_ground_cross_section(10.0, 1.0))
    out.append(Check("wire over ground h=10 r0=1 mm", c, exact, abs(c - exact) / exact, 1e-2))
    return out


def run_verification(samples=200, seed=0):
    pairs = random_pairs(np.random.default_rng(seed), samples)
    pot, fld = kernel_errors(pairs)
    checks = [
        Check(f"potential vs quadrature ({samples} pairs)", pot, 0.0, pot, KERNEL_RTOL),
        Check(f"field vs quadrature ({samples} pairs)", fld, 0.0, fld, KERNEL_RTOL),
    ]
    return checks + structure_checks()


def format_checks(checks) -> str:
    w = max(len(c.name) for c in checks)
    lines = [f"{'check'.ljust(w)}  {'value':>12}  {'expected':>12}  {'rel err':>9}  {'tol':>7}  result"]
    for c in checks:
        lines.append(
            f"{c.name.ljust(w)}  {c.value:12.5e}  {c.expected:12.5e}  {c.error:9.2e}  {c.tol:7.0e}  "
            f"{'PASS' if c.passed else 'FAIL'}"
        )
    return "\n".join(lines) + "\n"
