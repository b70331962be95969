"""Figure builders for the four artifact kinds the simulator CLI emits.

xy_tomo   phase-sweep probability curves with cosine-fit overlays
chi_bars  3D bar chart of a process matrix: heights are the real parts,
          bar colors encode the imaginary parts
shift     extracted resonance detuning vs delay, with the model transient
decay     coherence decays per DD pulse count, offset in 0.5 steps, with
          stretched-exponential fit overlays when the fit file is supplied

Rendering is deterministic for identical inputs and style, and inputs are
only ever read.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib import cm, colors

KINDS = ("xy_tomo", "chi_bars", "shift", "decay")


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    output: str
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "inputs", tuple(str(p) for p in self.inputs))
        missing = [p for p in self.inputs if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"input files not found: {missing}")

    @classmethod
    def from_dict(cls, data: dict) -> "FigureSpec":
        return cls(
            kind=data["kind"],
            inputs=tuple(data["inputs"]),
            output=data["output"],
            style=data.get("style", {}),
        )


def read_curve(path) -> tuple[list[str], np.ndarray]:
    header, rows = None, []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = fields
            continue
        rows.append([float(v) for v in fields])
    if header is None or not rows:
        raise ValueError(f"{path}: no tabular data found")
    return header, np.array(rows)


def _fit_cosine(phases_deg, probs):
    rad = np.radians(phases_deg)
    design = np.column_stack([np.ones_like(rad), np.cos(rad), np.sin(rad)])
    coef, *_ = np.linalg.lstsq(design, probs, rcond=None)
    return coef  # offset, a, b


def _new_axes(style, threed=False):
    figsize = tuple(style.get("figsize", (6.0, 4.0)))
    fig = plt.figure(figsize=figsize, dpi=style.get("dpi", 120))
    ax = fig.add_subplot(111, projection="3d" if threed else None)
    return fig, ax


def _render_xy_tomo(spec: FigureSpec) -> dict:
    fig, ax = _new_axes(spec.style)
    summary = {"curves": []}
    markers = ["o", "s", "^", "v", "D", "p"]
    for i, path in enumerate(spec.inputs):
        header, rows = read_curve(path)
        if header[:2] != ["phase_deg", "prob"]:
            raise ValueError(f"{path}: not an XY tomography curve ({header})")
        phases, probs = rows[:, 0], rows[:, 1]
        errs = rows[:, 2] if rows.shape[1] > 2 else None
        label = Path(path).stem.replace("xy_", "")
        color = f"C{i}"
        ax.errorbar(
            phases, probs, yerr=errs if errs is not None and np.any(errs > 0) else None,
            fmt=markers[i % len(markers)], ms=4, color=color, label=label, lw=0, elinewidth=1,
        )
        offset, a, b = _fit_cosine(phases, probs)
        dense = np.linspace(0, 360, 361)
        ax.plot(dense, offset + a * np.cos(np.radians(dense)) + b * np.sin(np.radians(dense)),
                color=color, lw=1)
        summary["curves"].append(
            {"label": label, "amplitude": float(math.hypot(a, b)),
             "phase_deg": float(math.degrees(math.atan2(b, a)) % 360.0)}
        )
    ax.set_xlabel("tomography pulse phase (deg)")
    ax.set_ylabel("click probability")
    ax.set_xlim(0, 360)
    ax.set_ylim(-0.05, 1.05)
    ax.axhline(0.5, color="0.8", lw=0.8, zorder=0)
    ax.legend(loc="upper right", fontsize=8)
    return summary


def _load_chi(path, which):
    data = json.loads(Path(path).read_text())
    key = {"process": "chi_process", "init": "chi_init", "chi": "chi"}.get(which, which)
    if key not in data:
        if "chi" in data:
            key = "chi"
        else:
            raise ValueError(f"{path}: no '{key}' matrix found (keys: {sorted(data)})")
    chi = np.array(data[key]["re"]) + 1j * np.array(data[key]["im"])
    basis = data.get("meta", {}).get("basis", ["I", "X", "iY", "Z"])
    return chi, basis


def _render_chi_bars(spec: FigureSpec) -> dict:
    which = spec.style.get("which", "process")
    chi, basis = _load_chi(spec.inputs[0], which)
    fig, ax = _new_axes(spec.style, threed=True)
    n = chi.shape[0]
    xs, ys = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    xs, ys = xs.ravel(), ys.ravel()
    heights = chi.real.ravel()
    imag = chi.imag.ravel()
    imax = max(np.abs(imag).max(), 1e-3)
    norm = colors.Normalize(vmin=-imax, vmax=imax)
    cmap = matplotlib.colormaps[spec.style.get("cmap", "coolwarm")]
    ax.bar3d(xs - 0.35, ys - 0.35, np.zeros_like(heights), 0.7, 0.7, heights,
             color=cmap(norm(imag)), shade=True)
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(basis)
    ax.set_yticklabels(basis)
    ax.set_zlabel("Re")
    mappable = cm.ScalarMappable(norm=norm, cmap=cmap)
    fig.colorbar(mappable, ax=ax, shrink=0.6, label="Im")
    k = int(np.argmax(np.abs(heights)))
    return {
        "dominant_bar": (basis[xs[k]], basis[ys[k]]),
        "dominant_height": float(heights[k]),
        "which": which,
    }


def _render_shift(spec: FigureSpec) -> dict:
    header, rows = read_curve(spec.inputs[0])
    if header[0] != "delay_s":
        raise ValueError(f"{spec.inputs[0]}: not a shift-scan file ({header})")
    fig, ax = _new_axes(spec.style)
    delays_us = rows[:, 0] * 1e6
    ax.plot(delays_us, rows[:, 1] / 1e3, "o", ms=4, label="Ramsey extraction")
    ax.plot(delays_us, rows[:, 2] / 1e3, "-", lw=1, label="shift model")
    ax.set_xscale("log")
    ax.set_xlabel("delay after RF pulse (us)")
    ax.set_ylabel("ESR detuning (kHz)")
    ax.legend(fontsize=8)
    return {"peak_khz": float(rows[0, 1] / 1e3), "points": int(rows.shape[0])}


def _stretched(tau, y0, amp, t2, alpha):
    return y0 + amp * np.exp(-((tau / t2) ** alpha))


def _render_decay(spec: FigureSpec) -> dict:
    fits = {}
    curve_files = []
    for path in spec.inputs:
        if str(path).endswith(".json"):
            payload = json.loads(Path(path).read_text())
            for item in payload.get("curves", []):
                fits[(item["mode"], item["n_pulses"])] = item
        else:
            curve_files.append(path)
    if not curve_files:
        raise ValueError("decay figure needs at least one decay_*.csv input")
    fig, ax = _new_axes(spec.style)
    step = spec.style.get("offset_step", 0.5)
    summary = {"curves": []}
    for i, path in enumerate(sorted(curve_files)):
        header, rows = read_curve(path)
        if header[0] != "storage_time_s":
            raise ValueError(f"{path}: not a decay curve ({header})")
        stem = Path(path).stem  # decay_<mode>_N<k>
        parts = stem.split("_")
        mode, n_pulses = parts[1], int(parts[2][1:])
        offset = step * i
        color = f"C{i}"
        tau, probs = rows[:, 0], rows[:, 1]
        errs = rows[:, 2] if rows.shape[1] > 2 else None
        ax.errorbar(tau * 1e3, probs + offset,
                    yerr=errs if errs is not None and np.any(errs > 0) else None,
                    fmt="o", ms=3.5, color=color, lw=0, elinewidth=1,
                    label=f"{mode} N={n_pulses}")
        fit = fits.get((mode, n_pulses))
        if fit:
            dense = np.geomspace(tau.min(), tau.max(), 200)
            ax.plot(dense * 1e3,
                    _stretched(dense, fit["y0"], fit["amplitude"], fit["t2"], fit["alpha"]) + offset,
                    color=color, lw=1)
            summary["curves"].append({"mode": mode, "n_pulses": n_pulses, "t2_ms": fit["t2"] * 1e3})
        else:
            summary["curves"].append({"mode": mode, "n_pulses": n_pulses, "t2_ms": None})
    ax.set_xscale("log")
    ax.set_xlabel("storage time (ms)")
    ax.set_ylabel(f"recovery probability (curves offset by {step})")
    ax.legend(fontsize=7)
    return summary


_RENDERERS = {
    "xy_tomo": _render_xy_tomo,
    "chi_bars": _render_chi_bars,
    "shift": _render_shift,
    "decay": _render_decay,
}


def render(spec: FigureSpec) -> dict:
    """Render one figure; returns a summary of what was drawn."""
    plt.close("all")
    summary = _RENDERERS[spec.kind](spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(out, format=spec.style.get("format", None))
    plt.close("all")
    summary["output"] = str(out)
    summary["kind"] = spec.kind
    return summary
