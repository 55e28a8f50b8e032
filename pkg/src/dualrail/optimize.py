"""Grid sweeps of the two-measurement joint success."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from ._parallel import pmap
from .chain_model import ChainSpec, Model
from .evolution import amplitude, spectral_data

DEFAULT_T1_RANGE = (0.0, 900.0, 1.0)
DEFAULT_T2_RANGE = (0.0, 100.0, 1.0)


def range_points(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive grid lo, lo + step, ... <= hi (points are lo + i * step)."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    if hi < lo:
        raise ValueError("grid upper bound below lower bound")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def parse_range(text: str) -> tuple[float, float, float]:
    """``lo:hi:step`` or a single value."""
    parts = text.split(":")
    if len(parts) == 1:
        v = float(parts[0])
        return v, v, 1.0
    if len(parts) != 3:
        raise ValueError(f"expected lo:hi:step, got {text!r}")
    lo, hi, step = map(float, parts)
    range_points(lo, hi, step)
    return lo, hi, step


@dataclass(frozen=True)
class SweepGrid:
    a_values: tuple[float, ...] = (0.05,)
    t1_range: tuple[float, float, float] = DEFAULT_T1_RANGE
    t2_range: tuple[float, float, float] = DEFAULT_T2_RANGE
    n_values: tuple[int, ...] = (150,)

    def __post_init__(self):
        for r in (self.t1_range, self.t2_range):
            range_points(*r)

    @property
    def t1(self) -> np.ndarray:
        return range_points(*self.t1_range)

    @property
    def t2(self) -> np.ndarray:
        return range_points(*self.t2_range)


@dataclass
class SweepResult:
    a: float
    t1: float
    t2: float
    max_value: float
    surface: np.ndarray | None = None
    t1_values: np.ndarray | None = None
    t2_values: np.ndarray | None = None

    @property
    def argmax(self) -> tuple[float, float, float]:
        return self.a, self.t1, self.t2

    def surface_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t1", "t2", "P"])
        for i, t1 in enumerate(self.t1_values):
            for j, t2 in enumerate(self.t2_values):
                w.writerow([_num(t1), _num(t2), repr(float(self.surface[i, j]))])
        return buf.getvalue()


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def joint_success_surface(spec: ChainSpec, t1, t2) -> np.ndarray:
    """Closed-form joint success on the outer grid t1 x t2.

    t1 = 0 is allowed here and gives the single-measurement value at t2.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    sd = spectral_data(spec, 1)
    N = spec.n_sites
    sums, inverse = np.unique(t1[:, None] + t2[None, :], return_inverse=True)
    f_sum = amplitude(sd, 1, N, sums)[inverse.reshape(len(t1), len(t2))]
    f1 = amplitude(sd, 1, N, t1)
    fnn = amplitude(sd, N, N, t2)
    return np.abs(f1)[:, None] ** 2 + np.abs(f_sum - fnn[None, :] * f1[:, None]) ** 2


def sweep_surface(spec: ChainSpec, grid: SweepGrid, keep_surface: bool = True) -> SweepResult:
    """Maximise the joint success over the (t1, t2) grid.

    Ties go to the smallest t1, then the smallest t2.
    """
    t1, t2 = grid.t1, grid.t2
    surface = joint_success_surface(spec, t1, t2)
    i, j = np.unravel_index(int(np.argmax(surface)), surface.shape)
    return SweepResult(
        spec.end_coupling, float(t1[i]), float(t2[j]), float(surface[i, j]),
        surface if keep_surface else None, t1, t2,
    )


def pmax_vs_n(n_values, a: float, grid: SweepGrid, model: Model = Model.XY_END_MODULATED,
              threads: int | None = None) -> list[tuple[int, SweepResult]]:
    def one(n):
        return int(n), sweep_surface(ChainSpec(int(n), model, a), grid, keep_surface=False)
    return pmap(one, list(n_values), threads)


@dataclass(frozen=True)
class TableRow:
    n_sites: int
    a: float
    t1: float
    t2: float
    p: float

    @property
    def total_time(self) -> float:
        return self.t1 + self.t2


def pmax_vs_a(n_sites: int, a_values, grid: SweepGrid, model: Model = Model.XY_END_MODULATED,
              threads: int | None = None, sort_by: str | None = None) -> list[TableRow]:
    """Best (t1, t2) per end coupling; optionally sorted by ``"p"`` (descending)
    or ``"time"`` (total time, ascending)."""
    def one(a):
        r = sweep_surface(ChainSpec(n_sites, model, a), grid, keep_surface=False)
        return TableRow(n_sites, float(a), r.t1, r.t2, r.max_value)

    rows = pmap(one, list(a_values), threads)
    if sort_by == "p":
        rows.sort(key=lambda r: -r.p)
    elif sort_by == "time":
        rows.sort(key=lambda r: r.total_time)
    elif sort_by is not None:
        raise ValueError("sort_by must be 'p', 'time' or None")
    return rows


@dataclass(frozen=True)
class ReferenceRow:
    n_sites: int
    a_low: float
    a_high: float
    t1: int
    t2: int
    p: float

    @property
    def a(self) -> float:
        return (self.a_low + self.a_high) / 2


# published optimum table; interval rows carry their a range
REFERENCE_TABLE = (
    ReferenceRow(150, 0.05, 0.05, 709, 100, 0.95),
    ReferenceRow(150, 0.07, 0.07, 411, 49, 0.92),
    ReferenceRow(150, 0.08, 0.08, 395, 24, 0.90),
    ReferenceRow(150, 0.14, 0.14, 839, 59, 0.87),
    ReferenceRow(150, 0.41, 0.49, 81, 7, 0.88),
    ReferenceRow(200, 0.06, 0.06, 548, 73, 0.92),
    ReferenceRow(200, 0.07, 0.07, 521, 100, 0.88),
    ReferenceRow(200, 0.40, 0.45, 106, 8, 0.88),
    ReferenceRow(250, 0.05, 0.05, 705, 100, 0.90),
    ReferenceRow(250, 0.06, 0.06, 668, 44, 0.91),
    ReferenceRow(250, 0.36, 0.44, 131, 8, 0.86),
    ReferenceRow(300, 0.05, 0.05, 821, 88, 0.92),
    ReferenceRow(300, 0.36, 0.42, 157, 9, 0.86),
)


@dataclass(frozen=True)
class ReferenceCheck:
    row: ReferenceRow
    p_at_point: float
    grid_max: SweepResult

    def passes(self, point_tol: float = 0.03, max_slack: float = 0.02) -> bool:
        return (abs(self.p_at_point - self.row.p) <= point_tol
                and self.grid_max.max_value >= self.row.p - max_slack)


def reference_table(grid: SweepGrid | None = None, threads: int | None = None) -> list[ReferenceCheck]:
    """Evaluate every reference row at its published point and on the grid."""
    grid = grid or SweepGrid()

    def one(row):
        spec = ChainSpec(row.n_sites, Model.XY_END_MODULATED, row.a)
        point = joint_success_surface(spec, [row.t1], [row.t2])[0, 0]
        return ReferenceCheck(row, float(point), sweep_surface(spec, grid, keep_surface=False))

    return pmap(one, REFERENCE_TABLE, threads)
