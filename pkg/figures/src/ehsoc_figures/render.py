"""Render the experiment CSVs into static figures.

Four kinds are supported, one per CSV schema the experiment runner
emits: two action surfaces (heatmaps over battery level and channel
gain), the steady-state comparison (lines over the battery level) and
the battery-size throughput sweep (lines over e_max, one style per
variant).  Input files are validated by their header before anything
is drawn.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

RASTER_SUFFIXES = {".png"}
VECTOR_SUFFIXES = {".pdf", ".svg"}


class SchemaError(ValueError):
    """Input CSV does not match the requested figure kind."""


class DataError(ValueError):
    """Input CSV is structurally fine but unusable (e.g. no rows)."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    input_csv: Path
    output_path: Path
    vector: bool = False


def load_table(path, required: tuple[str, ...], kind: str) -> dict:
    """Read a CSV whose header must contain every required column."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty; expected a header row")
        rows = list(reader)
    for name in required:
        if name not in header:
            raise SchemaError(
                f"{path} is missing column '{name}' required by kind "
                f"'{kind}' (found: {', '.join(header)})")
    if not rows:
        raise DataError(f"{path} has a header but no data rows")
    cols = {}
    for name in required:
        idx = header.index(name)
        raw = [r[idx] for r in rows]
        if name == "variant":
            cols[name] = np.array(raw)
        else:
            cols[name] = np.array([float(v) for v in raw])
    return cols


def _surface(cols, value_key):
    e = cols["e"].astype(int)
    h = cols["h"].astype(int)
    grid = np.full((h.max() + 1, e.max() + 1), np.nan)
    grid[h, e] = cols[value_key]
    return grid


def _render_policy_surface(cols, ax, fig):
    grid = _surface(cols, "rho")
    im = ax.imshow(grid, origin="lower", aspect="auto",
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label="transmit energy (quanta)")
    ax.set_xlabel("battery level (quanta)")
    ax.set_ylabel("channel gain")
    ax.set_title("optimal transmit energy")


def _render_splitting_surface(cols, ax, fig):
    grid = _surface(cols, "iota")
    im = ax.imshow(grid, origin="lower", aspect="auto", vmin=0.0, vmax=1.0,
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label="bypass fraction")
    ax.set_xlabel("battery level (quanta)")
    ax.set_ylabel("channel gain")
    ax.set_title("optimal power-splitting fraction")


_STEADY_SERIES = (("pi_op", "OP"),
                  ("pi_opideal_real", "OP-IDEAL on real battery"),
                  ("pi_opideal_ideal", "OP-IDEAL on ideal battery"))


def _render_steady_state(cols, ax, fig):
    e = cols["e"]
    for key, label in _STEADY_SERIES:
        ax.plot(e, cols[key], marker=".", label=label)
    ax.set_xlabel("battery level (quanta)")
    ax.set_ylabel("stationary probability")
    ax.set_title("steady-state battery occupancy")
    ax.legend()


_SWEEP_SERIES = (("g_op", "OP"),
                 ("g_opideal_real", "OP-IDEAL on real battery"),
                 ("g_opideal_ideal", "OP-IDEAL on ideal battery"))


def _render_throughput(cols, ax, fig):
    variants = sorted(set(cols["variant"]))
    styles = {"iota0": "-", "full": "--"}
    for variant in variants:
        mask = cols["variant"] == variant
        order = np.argsort(cols["e_max"][mask])
        ls = styles.get(variant, ":")
        for key, label in _SWEEP_SERIES:
            ax.plot(cols["e_max"][mask][order], cols[key][mask][order],
                    ls, marker="o", markersize=3,
                    label=f"{label} [{variant}]")
    ax.set_xlabel("battery size e_max (quanta)")
    ax.set_ylabel("average reward")
    ax.set_title("throughput vs battery size")
    ax.legend(fontsize=7)


KINDS = {
    "policy-surface": (("e", "h", "rho", "iota"), _render_policy_surface),
    "splitting-surface": (("e", "h", "iota"), _render_splitting_surface),
    "steady-state": (("e", "pi_op", "pi_opideal_real", "pi_opideal_ideal"),
                     _render_steady_state),
    "throughput-sweep": (("e_max", "g_op", "g_opideal_real",
                          "g_opideal_ideal", "variant"), _render_throughput),
}


def render(spec: FigureSpec) -> Path:
    """Validate the input and write one figure file."""
    if spec.kind not in KINDS:
        raise SchemaError(f"unknown figure kind '{spec.kind}' "
                          f"(choose from {', '.join(sorted(KINDS))})")
    out = Path(spec.output_path)
    suffix = out.suffix.lower()
    if not spec.vector and suffix not in RASTER_SUFFIXES:
        raise DataError(
            f"output {out} is not a raster image; pass vector=True "
            f"for {', '.join(sorted(VECTOR_SUFFIXES))}")
    if spec.vector and suffix not in RASTER_SUFFIXES | VECTOR_SUFFIXES:
        raise DataError(f"unsupported output format '{suffix}'")
    required, draw = KINDS[spec.kind]
    cols = load_table(spec.input_csv, required, spec.kind)
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=150)
    try:
        draw(cols, ax, fig)
        fig.savefig(out)
    finally:
        plt.close(fig)
    return out
