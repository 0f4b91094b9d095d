"""Moment-method system: midpoint collocation, LU solve, capacitance extraction.

Unknowns are total (free + polarization) surface charge densities, one
constant value per element.  Conductor rows enforce the conductor potential;
interface rows enforce continuity of the normal displacement.
"""
from __future__ import annotations

import csv
import io
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernel
from .mesh import Mesh

EPS0 = 8.8541878128e-12

PIVOT_RTOL = 1e-30
RESIDUAL_RTOL = 1e-8


class SingularSystemError(ArithmeticError):
    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class AssemblyError(ValueError):
    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = rows


@dataclass
class DenseSystem:
    S: np.ndarray
    V: np.ndarray

    @property
    def n(self):
        return self.S.shape[0]

    @property
    def n_cond(self):
        return self.V.shape[1]


@dataclass
class ChargeSolution:
    sigma: np.ndarray  # (N, N_COND), C/m^2


@dataclass
class CapacitanceMatrix:
    C: np.ndarray  # (N_COND, N_COND), F/m
    names: tuple = ()

    @property
    def n_cond(self):
        return self.C.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.names) or [f"c{i}" for i in range(self.n_cond)]
        w.writerow(["conductor"] + names)
        for name, row in zip(names, self.C):
            w.writerow([name] + [repr(float(x)) for x in row])
        return buf.getvalue()


def memory_bytes(n: int, n_cond: int) -> int:
    """Dense storage estimate: matrix plus right-hand sides plus solution."""
    return 8 * n * (n + 2 * n_cond)


def interface_diagonal(eps_r_pos, eps_r_neg):
    """Own-charge term of an interface row: (e+ + e-) / (2 eps0 (e- - e+))."""
    return (eps_r_pos + eps_r_neg) / (2.0 * EPS0 * (eps_r_neg - eps_r_pos))


def assemble_system(mesh: Mesh, grounded: bool | None = None) -> DenseSystem:
    if grounded is None:
        grounded = mesh.ground_plane
    n = len(mesh)
    if n == 0:
        raise AssemblyError("empty mesh")
    if grounded and np.any(mesh.midpoints[:, 1] <= 0.0):
        raise AssemblyError("all elements must lie above y = 0 with a ground plane")
    mid = mesh.midpoints
    cond = mesh.is_conductor
    rows_c = np.flatnonzero(cond)
    rows_d = np.flatnonzero(~cond)

    S = np.empty((n, n))
    V = np.zeros((n, mesh.n_cond))

    pot = kernel.grounded_potential_matrix if grounded else kernel.potential_matrix
    fld = kernel.grounded_field_matrix if grounded else kernel.field_matrix

    if rows_c.size:
        S[rows_c] = pot(mesh.a, mesh.b, mid[rows_c]) / EPS0
        V[rows_c, mesh.cond_id[rows_c]] = 1.0
    if rows_d.size:
        try:
            F = fld(mesh.a, mesh.b, mid[rows_d])
        except kernel.KernelSingularityError as exc:
            m = int(rows_d[exc.obs_index])
            raise AssemblyError(
                f"collocation point of element {m} coincides with an endpoint of element "
                f"{exc.elem_index}",
                rows=(m, exc.elem_index),
            ) from exc
        nrm = mesh.normals[rows_d]
        Fn = F[..., 0] * nrm[:, 0][:, None] + F[..., 1] * nrm[:, 1][:, None]
        # the direct self term is a principal value: zero for a flat element
        Fn[np.arange(rows_d.size), rows_d] = 0.0
        if grounded:
            # ...but the element's own image still acts on it
            flip = np.array([1.0, -1.0])
            self_img = kernel.field_matrix(
                mesh.a[rows_d] * flip, mesh.b[rows_d] * flip, mid[rows_d], pairs=True
            )
            Fn[np.arange(rows_d.size), rows_d] = -np.sum(self_img * nrm, axis=1)
        block = -Fn / EPS0
        block[np.arange(rows_d.size), rows_d] += interface_diagonal(
            mesh.eps_r_pos[rows_d], mesh.eps_r_neg[rows_d]
        )
        S[rows_d] = block
    return DenseSystem(S, V)


def factor_solve(system: DenseSystem) -> ChargeSolution:
    """Gaussian elimination with partial pivoting, one back-substitution per column."""
    S, V = system.S, system.V
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"S must be square, got shape {S.shape}")
    if V.shape[0] != S.shape[0]:
        raise ValueError(f"V has {V.shape[0]} rows, S has {S.shape[0]}")
    row_scale = np.max(np.abs(S), axis=1)
    if np.any(row_scale == 0.0):
        i = int(np.flatnonzero(row_scale == 0.0)[0])
        raise SingularSystemError(f"row {i} of S is zero", i)
    # Conductor and interface rows differ by ~1e5 in magnitude; equilibrating
    # them first keeps partial pivoting meaningful and the condition number low.
    A = S / row_scale[:, None]
    B = V / row_scale[:, None]
    with warnings.catch_warnings():
        # exact singularity is reported below with its pivot index
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    bad = np.flatnonzero(pivots < PIVOT_RTOL)
    if bad.size:
        k = int(bad[0])
        raise SingularSystemError(f"matrix is numerically singular at pivot {k}", k)
    sigma = np.column_stack([scipy.linalg.lu_solve((lu, piv), B[:, j]) for j in range(B.shape[1])])
    resid = np.max(np.abs(S @ sigma - V)) / max(np.max(np.abs(V)), 1.0)
    if not resid <= RESIDUAL_RTOL:
        raise SingularSystemError(f"solve residual {resid:.3e} exceeds {RESIDUAL_RTOL:g}")
    return ChargeSolution(sigma)


def extract_capacitance(solution: ChargeSolution, mesh: Mesh, names=()) -> CapacitanceMatrix:
    """C_ij = sum over faces k of conductor i of eps_r(k) * sigma[k, j] * l_k (V = 1 V)."""
    sigma = np.asarray(solution.sigma)
    if sigma.shape != (len(mesh), mesh.n_cond):
        raise ValueError(f"solution shape {sigma.shape} does not match mesh ({len(mesh)}, {mesh.n_cond})")
    cond = mesh.is_conductor
    weight = np.where(cond, mesh.eps_r_pos * mesh.lengths, 0.0)
    C = np.zeros((mesh.n_cond, mesh.n_cond))
    np.add.at(C, mesh.cond_id[cond], weight[cond][:, None] * sigma[cond])
    return CapacitanceMatrix(C, tuple(names))


@dataclass
class SolveResult:
    capacitance: CapacitanceMatrix
    solution: ChargeSolution
    n: int
    memory_bytes: int
    assemble_s: float
    solve_s: float
    extract_s: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def seconds(self):
        return self.assemble_s + self.solve_s + self.extract_s


def solve_mesh(mesh: Mesh, names=()) -> SolveResult:
    t0 = time.perf_counter()
    system = assemble_system(mesh)
    t1 = time.perf_counter()
    sol = factor_solve(system)
    t2 = time.perf_counter()
    cap = extract_capacitance(sol, mesh, names)
    t3 = time.perf_counter()
    return SolveResult(cap, sol, len(mesh), memory_bytes(len(mesh), mesh.n_cond), t1 - t0, t2 - t1, t3 - t2)
