"""Discrete rough-path primitives on uniform time grids.

A path sampled on a uniform grid is stored together with one second-order
increment matrix per step.  Increments over merged intervals are recovered
through Chen's relation

    YY[s,t] = YY[s,u] + YY[u,t] + dY[s,u] (x) dY[u,t],

so second-order data is kept per step (O(n) memory) and composed on demand.
All containers are immutable; operations return new objects.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GridMismatchError(ValueError):
    """Two series that must share a grid/dimension do not."""


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k*dt, k = 0..n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be nonnegative, got {self.n_steps}")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


@dataclass(frozen=True)
class PathSeries:
    """Vector-valued samples y_k on a TimeGrid, shape (n_steps+1, d)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if vals.ndim != 2:
            raise ValueError("values must be a (n_steps+1, d) array")
        if vals.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"values has {vals.shape[0]} rows, grid expects {self.grid.n_steps + 1}"
            )
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def increments(self) -> np.ndarray:
        """Per-step increments dY_k = y_{k+1} - y_k, shape (n_steps, d)."""
        return np.diff(self.values, axis=0)


@dataclass(frozen=True)
class HoelderExponent:
    """Regularity parameter, constrained to the level-2 rough regime (1/3, 1/2]."""

    alpha: float

    def __post_init__(self):
        if not (1.0 / 3.0 < self.alpha <= 0.5):
            raise ValueError(f"alpha must lie in (1/3, 1/2], got {self.alpha}")


@dataclass(frozen=True)
class LiftedSeries:
    """A PathSeries plus one second-order increment matrix per step.

    second_order[k] plays the role of YY[t_k, t_{k+1}] in Chen's relation.
    """

    path: PathSeries
    second_order: np.ndarray = field(repr=False)

    def __post_init__(self):
        so = np.asarray(self.second_order, dtype=float)
        n, d = self.path.grid.n_steps, self.path.dim
        if so.shape != (n, d, d):
            raise ValueError(f"second_order must have shape {(n, d, d)}, got {so.shape}")
        object.__setattr__(self, "second_order", _frozen(so))

    @property
    def grid(self) -> TimeGrid:
        return self.path.grid

    @property
    def dim(self) -> int:
        return self.path.dim

    def second_order_prefix(self) -> np.ndarray:
        """Composed increments anchored at 0: YY[0, t_k] for k = 0..n_steps.

        Built by a left fold of Chen's relation; entry 0 is the zero matrix.
        """
        n, d = self.grid.n_steps, self.dim
        out = np.zeros((n + 1, d, d))
        y = self.path.values
        dy = self.path.increments
        for k in range(n):
            out[k + 1] = out[k] + self.second_order[k] + np.outer(y[k] - y[0], dy[k])
        return out


def canonical_lift(path: PathSeries) -> LiftedSeries:
    """Lift a discrete path by piecewise-linear interpolation between grid points.

    Within one step a straight line encloses no area, so the per-step
    second-order increment is purely symmetric: 0.5 * dY_k (x) dY_k.
    """
    if path.grid.n_steps < 1:
        raise ValueError("cannot lift an empty path (need at least one step)")
    dy = path.increments
    so = 0.5 * np.einsum("ki,kj->kij", dy, dy)
    return LiftedSeries(path=path, second_order=so)


def chen_compose(lift: LiftedSeries, k_start: int, k_end: int):
    """Increments (dY, YY) over the merged interval [t_{k_start}, t_{k_end}].

    Iterated application of Chen's relation, folding left to right.
    """
    n = lift.grid.n_steps
    if not (0 <= k_start < k_end <= n):
        raise IndexError(f"need 0 <= k_start < k_end <= {n}, got ({k_start}, {k_end})")
    y = lift.path.values
    d_total = np.zeros(lift.dim)
    yy_total = np.zeros((lift.dim, lift.dim))
    dy = lift.path.increments
    for k in range(k_start, k_end):
        yy_total = yy_total + lift.second_order[k] + np.outer(y[k] - y[k_start], dy[k])
        d_total = d_total + dy[k]
    return d_total, yy_total


def sym_skew_split(m: np.ndarray):
    """Split a square matrix into (symmetric, skew-symmetric) parts."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    sym = 0.5 * (m + m.T)
    return sym, m - sym


def shift_by_bv(lift: LiftedSeries, m: np.ndarray, sign: int = 1) -> LiftedSeries:
    """Shift every second-order increment by sign * 0.5 * dt * m.

    With m the identity and sign -1 this converts a Stratonovich-type lift of
    standard Brownian motion to its Ito counterpart; the added term is linear
    in the interval length, so Chen's relation is preserved.
    """
    m = np.asarray(m, dtype=float)
    d = lift.dim
    if m.shape != (d, d):
        raise ValueError(f"matrix must be {d}x{d}, got {m.shape}")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    so = lift.second_order + sign * 0.5 * lift.grid.dt * m
    return LiftedSeries(path=lift.path, second_order=so)


def hoelder_seminorm(path: PathSeries, alpha: HoelderExponent, dyadic: bool = False) -> float:
    """Grid-restricted Hoelder seminorm sup_{s<t} |y_t - y_s| / (t-s)^alpha.

    The supremum runs over all O(n^2) grid pairs; with ``dyadic=True`` only
    power-of-two lags are evaluated (use for n_steps > 5000).
    """
    n = path.grid.n_steps
    if n < 1:
        raise ValueError("need at least one step")
    y = path.values
    dt = path.grid.dt
    if dyadic:
        lags = [1 << j for j in range(n.bit_length()) if (1 << j) <= n]
    else:
        lags = range(1, n + 1)
    best = 0.0
    for m in lags:
        diffs = y[m:] - y[:-m]
        sup = float(np.sqrt((diffs**2).sum(axis=1)).max())
        best = max(best, sup / (m * dt) ** alpha.alpha)
    return best


def rough_distance(a: LiftedSeries, b: LiftedSeries, alpha: HoelderExponent,
                   dyadic: bool = False) -> float:
    """Inhomogeneous rough-path distance between two lifts over one grid.

    Path part: alpha-Hoelder norm of Y1 - Y2 (grid-restricted seminorm plus
    the initial-value gap).  Second-order part: 2*alpha-Hoelder seminorm of
    the composed increments YY1[s,t] - YY2[s,t] in Frobenius norm.
    """
    if a.grid != b.grid or a.dim != b.dim:
        raise GridMismatchError("lifts must share grid and dimension")
    n, dt = a.grid.n_steps, a.grid.dt
    diff_path = PathSeries(a.grid, a.path.values - b.path.values)
    d_part = hoelder_seminorm(diff_path, alpha, dyadic=dyadic)
    d_part += float(np.linalg.norm(a.path.values[0] - b.path.values[0]))

    # YY[s,t] = YY[0,t] - YY[0,s] - (y_s - y_0) (x) (y_t - y_s), per lift.
    pre_a, pre_b = a.second_order_prefix(), b.second_order_prefix()
    ya, yb = a.path.values, b.path.values
    if dyadic:
        lags = [1 << j for j in range(n.bit_length()) if (1 << j) <= n]
    else:
        lags = range(1, n + 1)
    two_alpha = 2.0 * alpha.alpha
    so_part = 0.0
    for m in lags:
        cross_a = np.einsum("ki,kj->kij", ya[:-m] - ya[0], ya[m:] - ya[:-m])
        cross_b = np.einsum("ki,kj->kij", yb[:-m] - yb[0], yb[m:] - yb[:-m])
        comp_a = pre_a[m:] - pre_a[:-m] - cross_a
        comp_b = pre_b[m:] - pre_b[:-m] - cross_b
        sup = float(np.sqrt(((comp_a - comp_b) ** 2).sum(axis=(1, 2))).max())
        so_part = max(so_part, sup / (m * dt) ** two_alpha)
    return d_part + so_part


def save_lift_csv(lift: LiftedSeries, csv_path) -> None:
    """Write the per-step lift cache: k, dY_1..dY_d, L_11..L_dd (row-major).

    A JSON sidecar <name>.json records {dt, n_steps, d} plus the starting
    point so a load reproduces the series exactly.
    """
    csv_path = Path(csv_path)
    d = lift.dim
    header = (["k"] + [f"dY_{i+1}" for i in range(d)]
              + [f"L_{i+1}{j+1}" for i in range(d) for j in range(d)])
    dy = lift.path.increments
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(lift.grid.n_steps):
            row = ([k] + [repr(float(v)) for v in dy[k]]
                   + [repr(float(v)) for v in lift.second_order[k].ravel()])
            writer.writerow(row)
    sidecar = {"dt": lift.grid.dt, "n_steps": lift.grid.n_steps, "d": d,
               "y0": [float(v) for v in lift.path.values[0]]}
    csv_path.with_suffix(csv_path.suffix + ".json").write_text(json.dumps(sidecar))


def load_lift_csv(csv_path) -> LiftedSeries:
    """Read a lift cache written by :func:`save_lift_csv`."""
    csv_path = Path(csv_path)
    sidecar = json.loads(csv_path.with_suffix(csv_path.suffix + ".json").read_text())
    d, n = int(sidecar["d"]), int(sidecar["n_steps"])
    grid = TimeGrid(dt=float(sidecar["dt"]), n_steps=n)
    dy = np.zeros((n, d))
    so = np.zeros((n, d, d))
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            k = int(row[0])
            dy[k] = [float(v) for v in row[1:1 + d]]
            so[k] = np.array([float(v) for v in row[1 + d:1 + d + d * d]]).reshape(d, d)
    y0 = np.asarray(sidecar.get("y0", np.zeros(d)), dtype=float)
    values = np.vstack([y0, y0 + np.cumsum(dy, axis=0)])
    return LiftedSeries(path=PathSeries(grid, values), second_order=so)
