"""Boundary meshes: uniform initial segmentation and the two refinement operators."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .geometry import CONDUCTOR, INTERFACE, ResolvedGeometry

_KIND_NAMES = {CONDUCTOR: "conductor", INTERFACE: "interface"}


@dataclass(frozen=True)
class Element:
    a: tuple
    b: tuple
    kind: int = CONDUCTOR
    cond_id: int = -1
    eps_r_pos: float = float("nan")
    eps_r_neg: float = float("nan")
    parent: int = -1

    @property
    def length(self):
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])

    @property
    def midpoint(self):
        return (0.5 * (self.a[0] + self.b[0]), 0.5 * (self.a[1] + self.b[1]))

    @property
    def normal(self):
        L = self.length
        tx, ty = (self.b[0] - self.a[0]) / L, (self.b[1] - self.a[1]) / L
        if self.kind == CONDUCTOR:
            return (ty, -tx)
        return (-ty, tx)


class Mesh:
    """Flat list of straight boundary elements, stored column-wise.

    For conductor faces ``eps_r_pos`` holds the permittivity of the adjacent
    dielectric and ``eps_r_neg`` is NaN; interface elements carry
    ``cond_id == -1``.
    """

    def __init__(self, a, b, kind, cond_id, eps_r_pos, eps_r_neg, parent, n_cond, ground_plane=False):
        self.a = np.array(a, dtype=float).reshape(-1, 2)
        self.b = np.array(b, dtype=float).reshape(-1, 2)
        self.kind = np.asarray(kind, dtype=np.int8)
        self.cond_id = np.asarray(cond_id, dtype=np.int64)
        self.eps_r_pos = np.asarray(eps_r_pos, dtype=float)
        self.eps_r_neg = np.asarray(eps_r_neg, dtype=float)
        self.parent = np.asarray(parent, dtype=np.int64)
        self.n_cond = int(n_cond)
        self.ground_plane = bool(ground_plane)
        for arr in (self.a, self.b, self.kind, self.cond_id, self.eps_r_pos, self.eps_r_neg, self.parent):
            arr.setflags(write=False)

    def __len__(self):
        return self.a.shape[0]

    @property
    def n(self):
        return len(self)

    @property
    def lengths(self):
        d = self.b - self.a
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def midpoints(self):
        return 0.5 * (self.a + self.b)

    @property
    def tangents(self):
        d = self.b - self.a
        return d / np.hypot(d[:, 0], d[:, 1])[:, None]

    @property
    def normals(self):
        t = self.tangents
        out = np.column_stack([-t[:, 1], t[:, 0]])
        cond = self.kind == CONDUCTOR
        out[cond] = -out[cond]
        return out

    @property
    def is_conductor(self):
        return self.kind == CONDUCTOR

    def element(self, i) -> Element:
        return Element(
            tuple(self.a[i]),
            tuple(self.b[i]),
            int(self.kind[i]),
            int(self.cond_id[i]),
            float(self.eps_r_pos[i]),
            float(self.eps_r_neg[i]),
            int(self.parent[i]),
        )

    def __iter__(self):
        return (self.element(i) for i in range(len(self)))

    def _take(self, idx, a, b):
        return Mesh(
            a,
            b,
            self.kind[idx],
            self.cond_id[idx],
            self.eps_r_pos[idx],
            self.eps_r_neg[idx],
            self.parent[idx],
            self.n_cond,
            self.ground_plane,
        )

    def equals(self, other) -> bool:
        """Element-for-element identity, order included."""
        return (
            len(self) == len(other)
            and self.n_cond == other.n_cond
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.kind, other.kind)
            and np.array_equal(self.cond_id, other.cond_id)
            and np.array_equal(self.eps_r_pos, other.eps_r_pos, equal_nan=True)
            and np.array_equal(self.eps_r_neg, other.eps_r_neg, equal_nan=True)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "ax", "ay", "bx", "by", "kind", "cond_id", "eps_r_pos", "eps_r_neg", "length"])
        lengths = self.lengths
        for i in range(len(self)):
            neg = "" if np.isnan(self.eps_r_neg[i]) else repr(float(self.eps_r_neg[i]))
            w.writerow([
                i,
                repr(float(self.a[i, 0])),
                repr(float(self.a[i, 1])),
                repr(float(self.b[i, 0])),
                repr(float(self.b[i, 1])),
                _KIND_NAMES[int(self.kind[i])],
                int(self.cond_id[i]),
                repr(float(self.eps_r_pos[i])),
                neg,
                repr(float(lengths[i])),
            ])
        return buf.getvalue()


def build_initial_mesh(rg: ResolvedGeometry, l_max: float) -> Mesh:
    """Split each segment into ``ceil(L / l_max)`` equal elements."""
    if not l_max > 0.0:
        raise ValueError(f"l_max must be > 0, got {l_max}")
    a, b, kind, cond, pos, neg, parent = [], [], [], [], [], [], []
    for sid, seg in enumerate(rg.segments):
        pa = np.asarray(seg.a, dtype=float)
        pb = np.asarray(seg.b, dtype=float)
        n = max(1, math.ceil(seg.length / l_max))
        t = np.linspace(0.0, 1.0, n + 1)
        pts = pa + t[:, None] * (pb - pa)
        pts[-1] = pb
        a.append(pts[:-1])
        b.append(pts[1:])
        kind += [seg.kind] * n
        cond += [seg.cond_id] * n
        if seg.kind == CONDUCTOR:
            pos += [seg.eps_r] * n
            neg += [float("nan")] * n
        else:
            pos += [seg.eps_r_pos] * n
            neg += [seg.eps_r_neg] * n
        parent += [sid] * n
    mesh = Mesh(np.vstack(a), np.vstack(b), kind, cond, pos, neg, parent, rg.n_cond, rg.ground_plane)
    owned = set(mesh.cond_id[mesh.is_conductor].tolist())
    if owned != set(range(rg.n_cond)):
        raise ValueError("every conductor must own at least one element")
    return mesh


def _bisect(m: Mesh, split: np.ndarray) -> Mesh:
    # children replace their parent in place, so element order stays stable
    reps = np.where(split, 2, 1)
    idx = np.repeat(np.arange(len(m)), reps)
    mid = m.midpoints
    a = m.a[idx].copy()
    b = m.b[idx].copy()
    first = np.zeros(len(idx), dtype=bool)
    second = np.zeros(len(idx), dtype=bool)
    starts = np.cumsum(reps) - reps
    first[starts[split]] = True
    second[starts[split] + 1] = True
    b[first] = mid[idx[first]]
    a[second] = mid[idx[second]]
    return m._take(idx, a, b)


def refine_all(m: Mesh) -> Mesh:
    """Bisect every element."""
    return _bisect(m, np.ones(len(m), dtype=bool))


def top_fraction_count(n: int, p: float) -> int:
    # p*n is formed first so that e.g. 15 % of 20 is exactly 3
    return max(1, math.ceil(round(p * n / 100.0, 9)))


def refine_top_fraction(m: Mesh, charge_score, p: float) -> Mesh:
    """Bisect the ``p`` percent of elements with the largest scores.

    Ties are broken by larger element length, then lower index.
    """
    score = np.asarray(charge_score, dtype=float)
    if score.shape != (len(m),):
        raise ValueError(f"charge_score has shape {score.shape}, expected ({len(m)},)")
    if not 0.0 < p <= 100.0:
        raise ValueError(f"p must be in (0, 100], got {p}")
    k = min(len(m), top_fraction_count(len(m), p))
    order = np.lexsort((np.arange(len(m)), -m.lengths, -score))
    split = np.zeros(len(m), dtype=bool)
    split[order[:k]] = True
    return _bisect(m, split)


def charge_scores(sigma) -> np.ndarray:
    """Per-element refinement score: max over excitations of |sigma|."""
    return np.max(np.abs(np.asarray(sigma)), axis=1)
