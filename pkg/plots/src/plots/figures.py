"""Figure builders over the experiment CSV outputs.

Four layouts are supported, one per figure family in the experiment suite:
parameter-estimate traces with the true value as a blue reference line, area
process overlays with the theoretically expected drift dashed in, the
two-panel lag diagnostic, and particle-count convergence curves.  Everything
is read-only over its inputs and renders to a file.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("theta_trace", "area_overlay", "lag_diag", "chaos_curve")


class SchemaError(ValueError):
    """An input CSV is missing columns the figure kind requires."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple
    theta_true: float | None = None
    reference_slope: float | None = None
    title: str = ""
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "inputs", tuple(str(p) for p in self.inputs))
        for p in self.inputs:
            if not Path(p).exists():
                raise FileNotFoundError(p)


def from_json(payload: dict) -> FigureSpec:
    return FigureSpec(kind=payload["kind"], inputs=payload["inputs"],
                      theta_true=payload.get("theta_true"),
                      reference_slope=payload.get("reference_slope"),
                      title=payload.get("title", ""),
                      options=payload.get("options", {}))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return header, data


def _require(header, needed, path):
    missing = [c for c in needed if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}; found {header}")


def _new_axes(n_panels=1):
    fig, axes = plt.subplots(1, n_panels, figsize=(4.2 * n_panels, 3.2), dpi=110)
    return fig, (axes if n_panels > 1 else [axes])


def render(spec: FigureSpec, out_path) -> Path:
    """Draw the figure described by ``spec`` and write it to ``out_path``."""
    fig = _BUILDERS[spec.kind](spec)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def _theta_trace(spec: FigureSpec):
    fig, (ax,) = _new_axes()
    for path in spec.inputs:
        header, data = read_csv(path)
        _require(header, ["t"], path)
        theta_cols = [i for i, c in enumerate(header) if c.startswith("var_theta_")]
        if theta_cols:
            # run/aggregate layout: the parameter means are the trailing
            # mean_* columns, one per var_theta_* column
            mean_cols = [i for i, c in enumerate(header) if c.startswith("mean_")]
            take = mean_cols[len(mean_cols) - len(theta_cols):]
        else:
            take = [i for i, c in enumerate(header) if c.startswith("mean_")]
            if not take:
                raise SchemaError(f"{path}: no mean_* columns; found {header}")
        t = data[:, header.index("t")]
        for i in take:
            ax.plot(t, data[:, i], lw=1.2, label=f"{Path(path).stem}:{header[i]}")
    if spec.theta_true is not None:
        ax.axhline(spec.theta_true, color="tab:blue", lw=1.8, label="true value")
    ax.set_xlabel("t")
    ax.set_ylabel("parameter estimate")
    ax.legend(fontsize=7)
    ax.set_title(spec.title or "parameter estimate over time", fontsize=10)
    fig.tight_layout()
    return fig


def _area_overlay(spec: FigureSpec):
    header, data = read_csv(spec.inputs[0])
    _require(header, ["t", "area_orig"], spec.inputs[0])
    fig, (ax,) = _new_axes()
    t = data[:, header.index("t")]
    ax.plot(t, data[:, header.index("area_orig")], color="black", lw=1.4,
            label="original")
    tau_cols = [(c, i) for i, c in enumerate(header) if c.startswith("area_tau_")]
    cmap = plt.get_cmap("viridis")
    for j, (name, i) in enumerate(tau_cols):
        ax.plot(t, data[:, i], lw=1.0, color=cmap(j / max(len(tau_cols) - 1, 1)),
                label=f"lag {name.split('_')[-1]}")
    if spec.reference_slope is not None:
        ax.plot(t, spec.reference_slope * t, "--", color="tab:red", lw=1.4,
                label="expected drift")
    ax.set_xlabel("t")
    ax.set_ylabel("cumulative area (1,2)")
    ax.legend(fontsize=7)
    ax.set_title(spec.title or "area processes", fontsize=10)
    fig.tight_layout()
    return fig


def _lag_diag(spec: FigureSpec):
    header, data = read_csv(spec.inputs[0])
    _require(header, ["tau", "path_l2", "area_l2"], spec.inputs[0])
    fig, (ax1, ax2) = _new_axes(2)
    tau = data[:, header.index("tau")]
    ax1.plot(tau, data[:, header.index("path_l2")], "o-", ms=3)
    ax1.set_xlabel("lag")
    ax1.set_ylabel("path L2 discrepancy")
    ax2.plot(tau, data[:, header.index("area_l2")], "o-", ms=3, color="tab:orange")
    ax2.set_xlabel("lag")
    ax2.set_ylabel("area L2 discrepancy")
    fig.suptitle(spec.title or "subsampling lag diagnostics", fontsize=10)
    fig.tight_layout()
    return fig


def _chaos_curve(spec: FigureSpec):
    header, data = read_csv(spec.inputs[0])
    _require(header, ["N", "t", "coupled_discrepancy", "seed"], spec.inputs[0])
    wass_cols = [i for i, c in enumerate(header) if c.startswith("wass_theta_")]
    fig, (ax1, ax2) = _new_axes(2)
    counts = np.unique(data[:, header.index("N")]).astype(int)
    t_max = data[:, header.index("t")].max()
    at_terminal = data[np.isclose(data[:, header.index("t")], t_max)]
    disc = [np.median(at_terminal[at_terminal[:, 0] == n,
                                  header.index("coupled_discrepancy")]) for n in counts]
    ax1.loglog(counts, disc, "o-")
    ax1.set_xlabel("particle count")
    ax1.set_ylabel("median coupled discrepancy")
    for i in wass_cols:
        wass = [np.median(at_terminal[at_terminal[:, 0] == n, i]) for n in counts]
        ax2.loglog(counts, wass, "o-", label=header[i])
    ax2.set_xlabel("particle count")
    ax2.set_ylabel("median transport distance")
    if wass_cols:
        ax2.legend(fontsize=7)
    fig.suptitle(spec.title or "convergence of the interacting system", fontsize=10)
    fig.tight_layout()
    return fig


_BUILDERS = {"theta_trace": _theta_trace, "area_overlay": _area_overlay,
             "lag_diag": _lag_diag, "chaos_curve": _chaos_curve}
