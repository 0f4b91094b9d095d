"""Multivariant analysis: perturb one parameter by a list of percentages and
compare the adaptive solver against a dense uniform reference mesh at each point."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .adaptive import AdaptiveConfig, control_scalar, run_adaptive
from .geometry import CrossSection, GeometryError, eval_param_expr, resolve_geometry
from .mesh import build_initial_mesh
from .system import CapacitanceMatrix, solve_mesh


@dataclass
class ReferenceResult:
    capacitance: CapacitanceMatrix
    n: int
    memory_bytes: int
    seconds: float


def reference_run(rg, l_max: float) -> ReferenceResult:
    """Single solve on a uniform mesh, no adaptation."""
    res = solve_mesh(build_initial_mesh(rg, l_max), rg.conductor_names)
    return ReferenceResult(res.capacitance, res.n, res.memory_bytes, res.seconds)


@dataclass(frozen=True)
class SweepSpec:
    """One-parameter sweep.

    ``reference_l`` and ``initial_l`` are expressions (or numbers) in the
    geometry's units.  The reference step follows the perturbed parameters
    of each point, so the reference mesh is rebuilt per point.  The initial
    step is a solver setting: it is evaluated once on the nominal
    parameters and shared by all points.  ``initial_l=None`` keeps
    ``adaptive.initial_l_max`` (meters).
    """

    parameter: str
    percents: tuple
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    reference_l: object = "t/3"
    initial_l: object = None


@dataclass(frozen=True)
class SweepRow:
    m: float
    delta_c_pct: float = math.nan
    n_ratio: float = math.nan
    v_ratio: float = math.nan
    t_ratio: float = math.nan
    n_it: int = 0
    status: str = ""
    n_ref: int = 0
    n: int = 0
    c_ref: float = math.nan
    c: float = math.nan

    @property
    def ok(self):
        return self.status == "converged"


@dataclass
class SweepReport:
    parameter: str
    rows: list

    @property
    def all_ok(self):
        return all(r.ok for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "delta_c_pct", "n_ratio", "v_ratio", "t_ratio", "n_it", "status"])
        for r in self.rows:
            w.writerow([f"{r.m:g}", _num(r.delta_c_pct), _num(r.n_ratio), _num(r.v_ratio), _num(r.t_ratio), r.n_it, r.status])
        return buf.getvalue()

    def to_text(self) -> str:
        head = ["m", "dC, %", "N_ref/N", "V_ref/V", "T_ref/T", "N_it", "status"]
        body = [
            [f"{r.m:g}", _fix(r.delta_c_pct, 2), _fix(r.n_ratio, 2), _fix(r.v_ratio, 1), _fix(r.t_ratio, 1), str(r.n_it), r.status]
            for r in self.rows
        ]
        widths = [max(len(x) for x in col) for col in zip(head, *body)]
        lines = [f"Variation of {self.parameter!r}"]
        lines.append("  ".join(h.rjust(wd) for h, wd in zip(head, widths)))
        lines.append("  ".join("-" * wd for wd in widths))
        lines += ["  ".join(c.rjust(wd) for c, wd in zip(row, widths)) for row in body]
        return "\n".join(lines) + "\n"


def _num(x):
    return "" if math.isnan(x) else repr(float(x))


def _fix(x, nd):
    return "-" if math.isnan(x) else f"{x:.{nd}f}"


def _length(expr, params, scale):
    return eval_param_expr(expr, params) * scale


def adaptive_config(cs: CrossSection, spec: SweepSpec) -> AdaptiveConfig:
    if spec.initial_l is None:
        return spec.adaptive
    return replace(spec.adaptive, initial_l_max=_length(spec.initial_l, cs.parameters, cs.scale))


def sweep_point(cs: CrossSection, spec: SweepSpec, m: float, cfg: AdaptiveConfig | None = None) -> SweepRow:
    try:
        if cfg is None:
            cfg = adaptive_config(cs, spec)
        params = dict(cs.parameters)
        params[spec.parameter] = cs.parameters[spec.parameter] * (1.0 + m / 100.0)
        rg = resolve_geometry(cs, {spec.parameter: params[spec.parameter]})
        ref = reference_run(rg, _length(spec.reference_l, params, cs.scale))
        run = run_adaptive(rg, cfg)
    except (GeometryError, ArithmeticError, ValueError, IndexError) as exc:
        return SweepRow(m, status=f"error: {exc}")
    c_ref = control_scalar(ref.capacitance, cfg.control)
    c = control_scalar(run.capacitance, cfg.control)
    fin = run.trace.final
    return SweepRow(
        m=m,
        delta_c_pct=abs(c - c_ref) / abs(c_ref) * 100.0,
        n_ratio=ref.n / fin.n,
        v_ratio=ref.memory_bytes / fin.memory_bytes,
        t_ratio=ref.seconds / run.trace.total_seconds,
        n_it=run.trace.n_iterations,
        status=run.trace.status.value,
        n_ref=ref.n,
        n=fin.n,
        c_ref=c_ref,
        c=c,
    )


def worker_count(serial=False, n_tasks=None) -> int:
    if serial:
        return 1
    env = os.environ.get("QCAP_THREADS", "").strip()
    n = int(env) if env else (os.cpu_count() or 1)
    if n_tasks is not None:
        n = min(n, n_tasks)
    return max(1, n)


def run_sweep(cs: CrossSection, spec: SweepSpec, serial: bool = False) -> SweepReport:
    """Evaluate every sweep point; rows keep the order of ``spec.percents``.

    Points run on a thread pool unless ``serial``.  Timing ratios are only
    meaningful in serial mode since concurrent points share the CPU.
    """
    if spec.parameter not in cs.parameters:
        raise GeometryError(f"unknown sweep parameter {spec.parameter!r}")
    cfg = adaptive_config(cs, spec)
    percents = list(spec.percents)
    workers = worker_count(serial, len(percents))
    if workers == 1:
        rows = [sweep_point(cs, spec, m, cfg) for m in percents]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda m: sweep_point(cs, spec, m, cfg), percents))
    return SweepReport(spec.parameter, rows)


def parse_range(text: str, skip_zero: bool = False) -> list:
    """``"-5:5:1"`` -> [-5, -4, ..., 5] (inclusive)."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"range must be START:STOP[:STEP], got {text!r}")
    start, stop = float(parts[0]), float(parts[1])
    step = float(parts[2]) if len(parts) == 3 else 1.0
    if step <= 0:
        raise ValueError("range step must be > 0")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    values = [round(start + k * step, 12) for k in range(max(count, 0))]
    if skip_zero:
        values = [v for v in values if v != 0.0]
    return [int(v) if float(v).is_integer() else v for v in values]
