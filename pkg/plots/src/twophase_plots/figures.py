"""Render the standard figure set from simulator output files.

Inputs are plain CSVs: the per-run diagnostics table (one row per record) and
the convergence report (one row per resolution per field). Four figure kinds:

  energy         E(t) overlaid with E(0) minus the cumulative dissipation
                 integral, visualizing the energy balance dE/dt = -D.
  functionals    growth of the time-weighted functionals A1, A2 and the
                 informational smallness threshold.
  bounds         min/max of the mass fields over time together with the
                 constant-ratio envelopes s_min(0)*min(m) and s_max(0)*max(m).
  residual-order log-log error against the refined parameter with the
                 least-squares order re-fitted from the data and annotated.

Rendering never mutates its inputs; output is a PNG regenerated
deterministically up to image-library metadata.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = ("energy", "functionals", "bounds", "residual-order")

_REQUIRED = {
    "energy": ("t", "E", "KE", "PE", "D"),
    "functionals": ("t", "A1", "A2", "smallness_lhs", "smallness_rhs"),
    "bounds": ("t", "min_m", "max_m", "min_n", "max_n", "min_s", "max_s"),
    "residual-order": ("kind", "parameter", "field", "l2_error", "order_l2"),
}


class FigureError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    csv_path: str
    out_path: str

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise FigureError(f"unknown figure kind {self.kind!r}")


def load_columns(path: str) -> dict[str, list[str]]:
    """Read a CSV into raw string columns; empty files are errors."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FigureError(f"{path}: empty CSV") from None
        rows = list(reader)
    if not rows:
        raise FigureError(f"{path}: no data rows")
    cols = {name: [] for name in header}
    for row in rows:
        for name, value in zip(header, row):
            cols[name].append(value)
    return cols


def _need(cols: dict, names, path: str) -> None:
    for name in names:
        if name not in cols:
            raise FigureError(f"missing column: {name}")


def _floats(cols: dict, name: str) -> np.ndarray:
    return np.array([float(v) for v in cols[name]])


def fit_order(parameter: np.ndarray, errors: np.ndarray, kind: str) -> float:
    """Least-squares order on log-log axes; mirrors the report's convention
    (spatial studies refine by growing N, temporal by shrinking dt)."""
    slope = np.polyfit(np.log(parameter), np.log(errors), 1)[0]
    return float(-slope) if kind == "spatial" else float(slope)


def _render_energy(cols, ax):
    t = _floats(cols, "t")
    e = _floats(cols, "E")
    d = _floats(cols, "D")
    cum_d = np.concatenate(([0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(t))))
    ax.plot(t, e, label="E(t)", lw=1.8)
    ax.plot(t, e[0] - cum_d, "--", label="E(0) - cumulative dissipation", lw=1.4)
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.set_title("energy balance")
    ax.legend()


def _render_functionals(cols, ax):
    t = _floats(cols, "t")
    ax.plot(t, _floats(cols, "A1"), label="A1", lw=1.8)
    ax.plot(t, _floats(cols, "A2"), label="A2", lw=1.8)
    ax.plot(t, _floats(cols, "smallness_lhs"), ":", label="A1 + A2", lw=1.2)
    ax.plot(t, _floats(cols, "smallness_rhs"), "--",
            label="2 E0^theta (informational)", lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("functional value")
    ax.set_title("time-weighted functionals")
    ax.legend()


def _render_bounds(cols, ax):
    t = _floats(cols, "t")
    min_m, max_m = _floats(cols, "min_m"), _floats(cols, "max_m")
    min_n, max_n = _floats(cols, "min_n"), _floats(cols, "max_n")
    s_lo, s_hi = _floats(cols, "min_s")[0], _floats(cols, "max_s")[0]
    ax.plot(t, min_m, label="min m", color="tab:blue")
    ax.plot(t, max_m, label="max m", color="tab:blue", ls="--")
    ax.plot(t, min_n, label="min n", color="tab:orange")
    ax.plot(t, max_n, label="max n", color="tab:orange", ls="--")
    ax.plot(t, s_lo * min_m, ":", color="tab:green", label="s_min(0) * min m")
    ax.plot(t, s_hi * max_m, ":", color="tab:red", label="s_max(0) * max m")
    ax.set_xlabel("t")
    ax.set_ylabel("mass bounds")
    ax.set_title("density bounds and constant-ratio envelopes")
    ax.legend(fontsize=8)


def _render_residual_order(cols, ax) -> dict[str, float]:
    kinds = set(cols["kind"])
    if len(kinds) != 1:
        raise FigureError(f"report mixes study kinds: {sorted(kinds)}")
    study = kinds.pop()
    fields = sorted(set(cols["field"]))
    param_all = _floats(cols, "parameter")
    err_all = _floats(cols, "l2_error")
    reported = _floats(cols, "order_l2")
    refits = {}
    for name in fields:
        mask = np.array([f == name for f in cols["field"]])
        param = param_all[mask]
        if len(param) < 3:
            raise FigureError(
                f"residual-order figure needs >= 3 resolutions, field {name!r} has {len(param)}"
            )
        err = err_all[mask]
        refit = fit_order(param, err, study)
        refits[name] = refit
        ax.loglog(param, err, "o-",
                  label=f"{name}: order {refit:.3f} (report {reported[mask][0]:.3f})")
    ax.set_xlabel("points per axis" if study == "spatial" else "dt")
    ax.set_ylabel("L2 error")
    ax.set_title(f"{study} refinement")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return refits


def render(spec: FigureSpec) -> dict[str, float] | None:
    """Render one figure; returns the re-fitted orders for residual-order
    figures, None otherwise. The output file is always non-empty on success."""
    cols = load_columns(spec.csv_path)
    _need(cols, _REQUIRED[spec.kind], spec.csv_path)
    fig, ax = plt.subplots(figsize=(7.0, 4.5), dpi=130)
    refits = None
    try:
        if spec.kind == "energy":
            _render_energy(cols, ax)
        elif spec.kind == "functionals":
            _render_functionals(cols, ax)
        elif spec.kind == "bounds":
            _render_bounds(cols, ax)
        else:
            refits = _render_residual_order(cols, ax)
        fig.tight_layout()
        out_dir = os.path.dirname(os.path.abspath(spec.out_path))
        os.makedirs(out_dir, exist_ok=True)
        fig.savefig(spec.out_path)
    finally:
        plt.close(fig)
    return refits
