"""Iterative mesh refinement driven by the relative change of a control scalar.

Iteration 0 solves on the initial mesh.  Every later iteration refines the
previous mesh (all elements, or the top ``p`` percent by charge density),
re-solves, and stops once ``|C_i - C_{i-1}| / |C_{i-1}| <= tol``.
"""
from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ResolvedGeometry
from .mesh import build_initial_mesh, charge_scores, refine_all, refine_top_fraction
from .system import CapacitanceMatrix, SolveResult, solve_mesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefineAll:
    def __str__(self):
        return "all"


@dataclass(frozen=True)
class RefineTopP:
    p: float = 25.0

    def __post_init__(self):
        if not 0.0 < self.p <= 100.0:
            raise ValueError(f"p must be in (0, 100], got {self.p}")

    def __str__(self):
        return f"top:{self.p:g}"


@dataclass(frozen=True)
class DiagonalElement:
    k: int = 0

    def __str__(self):
        return f"diag:{self.k}"


@dataclass(frozen=True)
class FrobeniusNorm:
    def __str__(self):
        return "fro"


def parse_method(text: str):
    """``"all"`` or ``"top:<p>"``."""
    text = text.strip()
    if text == "all":
        return RefineAll()
    if text.startswith("top:"):
        return RefineTopP(float(text[4:]))
    raise ValueError(f"unknown refinement method {text!r} (expected 'all' or 'top:<p>')")


def parse_control(text: str):
    """``"diag:<k>"`` or ``"fro"``."""
    text = text.strip()
    if text == "fro":
        return FrobeniusNorm()
    if text.startswith("diag:"):
        k = int(text[5:])
        if k < 0:
            raise ValueError("conductor index must be >= 0")
        return DiagonalElement(k)
    raise ValueError(f"unknown control {text!r} (expected 'diag:<k>' or 'fro')")


def default_tol(method) -> float:
    # best accuracy for the cost on the coupled-line benchmarks
    return 1e-3 if isinstance(method, RefineTopP) else 1e-2


@dataclass(frozen=True)
class AdaptiveConfig:
    method: object = field(default_factory=RefineAll)
    tol: float = 1e-2
    max_iters: int = 30
    initial_l_max: float = 1e-4
    control: object = field(default_factory=DiagonalElement)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.initial_l_max > 0:
            raise ValueError(f"initial_l_max must be > 0, got {self.initial_l_max}")
        if not isinstance(self.method, (RefineAll, RefineTopP)):
            raise TypeError(f"method must be RefineAll or RefineTopP, got {self.method!r}")
        if not isinstance(self.control, (DiagonalElement, FrobeniusNorm)):
            raise TypeError(f"control must be DiagonalElement or FrobeniusNorm, got {self.control!r}")


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    n: int
    control: float
    delta_rel: float  # NaN at iteration 0
    memory_bytes: int
    seconds: float
    assemble_s: float = 0.0
    solve_s: float = 0.0


@dataclass
class ConvergenceTrace:
    records: list = field(default_factory=list)
    status: Status | None = None

    def __len__(self):
        return len(self.records)

    @property
    def n_iterations(self):
        """Index of the last iteration (number of refinements performed)."""
        return self.records[-1].iteration if self.records else 0

    @property
    def total_seconds(self):
        return sum(r.seconds for r in self.records)

    @property
    def final(self):
        return self.records[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "N", "control", "delta_rel", "mem_bytes", "seconds", "status"])
        for k, r in enumerate(self.records):
            last = k == len(self.records) - 1
            w.writerow([
                r.iteration,
                r.n,
                repr(r.control),
                "" if math.isnan(r.delta_rel) else repr(r.delta_rel),
                r.memory_bytes,
                f"{r.seconds:.6f}",
                self.status.value if (last and self.status) else "",
            ])
        return buf.getvalue()


def control_scalar(cap, control) -> float:
    C = cap.C if isinstance(cap, CapacitanceMatrix) else np.asarray(cap, dtype=float)
    if isinstance(control, DiagonalElement):
        if not 0 <= control.k < C.shape[0]:
            raise IndexError(f"conductor index {control.k} out of range for {C.shape[0]} conductors")
        return float(C[control.k, control.k])
    if isinstance(control, FrobeniusNorm):
        return float(np.sqrt(np.sum(C * C)))
    raise TypeError(f"unknown control {control!r}")


class DegenerateControlError(ArithmeticError):
    pass


@dataclass
class AdaptiveResult:
    capacitance: CapacitanceMatrix
    trace: ConvergenceTrace
    mesh: object
    last: SolveResult


def run_adaptive(rg: ResolvedGeometry, cfg: AdaptiveConfig, callback=None) -> AdaptiveResult:
    """Refine until the control scalar settles or ``cfg.max_iters`` is reached.

    ``callback(record)`` is invoked after each iteration for live monitoring.
    """
    if isinstance(cfg.control, DiagonalElement) and cfg.control.k >= rg.n_cond:
        raise IndexError(f"control conductor {cfg.control.k} out of range for {rg.n_cond} conductors")
    trace = ConvergenceTrace()
    mesh = build_initial_mesh(rg, cfg.initial_l_max)
    res = solve_mesh(mesh, rg.conductor_names)
    prev = control_scalar(res.capacitance, cfg.control)
    _record(trace, 0, res, prev, float("nan"), callback)

    for i in range(1, cfg.max_iters + 1):
        if prev == 0.0:
            raise DegenerateControlError(f"control value is zero at iteration {i - 1}")
        if isinstance(cfg.method, RefineTopP):
            mesh = refine_top_fraction(mesh, charge_scores(res.solution.sigma), cfg.method.p)
        else:
            mesh = refine_all(mesh)
        res = solve_mesh(mesh, rg.conductor_names)
        cur = control_scalar(res.capacitance, cfg.control)
        delta = abs(cur - prev) / abs(prev)
        _record(trace, i, res, cur, delta, callback)
        prev = cur
        if delta <= cfg.tol:
            trace.status = Status.CONVERGED
            break
    else:
        trace.status = Status.MAX_ITERS
        logger.warning("adaptive refinement stopped at max_iters=%d without converging", cfg.max_iters)
    return AdaptiveResult(res.capacitance, trace, mesh, res)


def _record(trace, i, res, control, delta, callback):
    rec = IterationRecord(i, res.n, control, delta, res.memory_bytes, res.seconds, res.assemble_s, res.solve_s)
    trace.records.append(rec)
    logger.debug("iter %d N=%d control=%.6e delta=%.3e", i, res.n, control, delta)
    if callback is not None:
        callback(rec)
