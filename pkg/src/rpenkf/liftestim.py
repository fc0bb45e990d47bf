"""Estimation of the skew-symmetric (area) part of a lift from discrete data.

A discrete series carries no within-step area, yet a path observed at fine
resolution may accumulate systematic area that its coarse straightening does
not.  Comparing the cumulative area process of the original piecewise-linear
interpolation with that of a subsampled-and-reinterpolated copy isolates that
systematic part; the per-step difference is the estimated skew correction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .roughpath import PathSeries, TimeGrid, _frozen


@dataclass(frozen=True)
class SubsampleLag:
    """Number of fine steps merged into one coarse step; tau=1 disables subsampling."""

    tau: int

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")


@dataclass(frozen=True)
class AreaProcess:
    """Cumulative skew matrices A_k anchored at t=0, A_0 = 0; shape (n_steps+1, d, d)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        d = vals.shape[-1]
        if vals.shape != (self.grid.n_steps + 1, d, d):
            raise ValueError(f"expected shape {(self.grid.n_steps + 1, d, d)}, got {vals.shape}")
        if not np.allclose(vals + np.swapaxes(vals, -1, -2), 0.0, atol=1e-10 * max(1.0, np.abs(vals).max())):
            raise ValueError("area process entries must be skew-symmetric")
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)


def subsample_interpolate(path: PathSeries, tau) -> PathSeries:
    """Subsample at lag tau and interpolate linearly back onto the fine grid.

    Retained knots are y_0, y_tau, ..., y_{m*tau}; when n_steps is not a
    multiple of tau the final sample y_n is appended as an extra knot so both
    endpoints stay fixed.
    """
    tau = tau if isinstance(tau, SubsampleLag) else SubsampleLag(int(tau))
    n = path.grid.n_steps
    if tau.tau > n:
        raise IndexError(f"tau={tau.tau} exceeds n_steps={n}")
    if tau.tau == 1:
        return path
    knots = list(range(0, n + 1, tau.tau))
    if knots[-1] != n:
        knots.append(n)
    knots = np.asarray(knots)
    fine_k = np.arange(n + 1)
    cols = [np.interp(fine_k, knots, path.values[knots, j]) for j in range(path.dim)]
    return PathSeries(path.grid, np.column_stack(cols))


def area_process(path: PathSeries) -> AreaProcess:
    """Cumulative skew part of the second-order integral of the interpolated path.

    For a piecewise-linear path the increment over step k is exactly
    skew((y_k - y_0) (x) dy_k); in one dimension the process is identically
    zero.
    """
    y = path.values
    dy = path.increments
    anchored = y[:-1] - y[0]
    outer = np.einsum("ki,kj->kij", anchored, dy)
    skew_inc = 0.5 * (outer - np.swapaxes(outer, -1, -2))
    vals = np.concatenate([np.zeros((1, path.dim, path.dim)), np.cumsum(skew_inc, axis=0)])
    return AreaProcess(grid=path.grid, values=vals)


def skew_correction(path: PathSeries, tau) -> np.ndarray:
    """Per-step skew matrices: area increments of the original interpolation
    minus those of the tau-subsampled one, shape (n_steps, d, d).

    With tau = 1 (or in one dimension) the correction vanishes identically.
    """
    fine = area_process(path)
    coarse = area_process(subsample_interpolate(path, tau))
    return fine.increments - coarse.increments


def lag_diagnostics(path: PathSeries, taus) -> list[dict]:
    """Discrete L2 discrepancies between original and subsampled path/area.

    Returns one row per lag: {"tau", "path_l2", "area_l2"}, where both norms
    are taken over the fine grid (Frobenius norm for the area process).
    The lag is then picked by eye: large enough that the area discrepancy has
    plateaued, small enough that the paths still agree.
    """
    dt = path.grid.dt
    ref_area = area_process(path).values
    rows = []
    for tau in taus:
        sub = subsample_interpolate(path, tau)
        path_l2 = float(np.sqrt((((path.values - sub.values)) ** 2).sum() * dt))
        area_l2 = float(np.sqrt(((ref_area - area_process(sub).values) ** 2).sum() * dt))
        tau_val = tau.tau if isinstance(tau, SubsampleLag) else int(tau)
        rows.append({"tau": tau_val, "path_l2": path_l2, "area_l2": area_l2})
    return rows


def write_lag_diagnostics_csv(rows, out_path) -> None:
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "path_l2", "area_l2"])
        for r in rows:
            writer.writerow([r["tau"], repr(r["path_l2"]), repr(r["area_l2"])])
