"""Render quditcal CSV artifacts into publication-style PNG + SVG figures.

This package reads only the documented file formats (CSV tables and run
manifests); it never imports the simulation code.  Rendering is deterministic:
matplotlib's SVG hash salt is pinned and no timestamps are embedded, so
re-rendering the same inputs reproduces identical bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "quditcal-figs"

import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = (
    "noise-hist",
    "grape-convergence",
    "learning-curve",
    "fidelity-bars",
    "sweep",
    "pulse-overlay",
)

METHOD_COLORS = {
    "oct": "#222222",
    "sac": "#1f77b4",
    "td3": "#d62728",
    "ddpg": "#2ca02c",
    "ppo": "#9467bd",
}


class FigureInputError(ValueError):
    """Missing/empty input or a header that lacks a required column."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: dict
    output: Path
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise FigureInputError(
                f"unknown figure kind {self.kind!r}; expected one of {FIGURE_KINDS}"
            )


def read_table(path: Path, required: list[str]) -> dict[str, list[str]]:
    """Load a CSV into columns, checking the header and non-emptiness."""
    path = Path(path)
    if not path.exists():
        raise FigureInputError(f"input file does not exist: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FigureInputError(f"{path} is empty")
        missing = [c for c in required if c not in header]
        if missing:
            raise FigureInputError(f"{path} lacks required columns {missing}")
        rows = [r for r in reader if r]
    if not rows:
        raise FigureInputError(f"{path} has a header but no data rows")
    cols = {name: [] for name in header}
    for r in rows:
        for name, value in zip(header, r):
            cols[name].append(value)
    return cols


def floats(col: list[str]) -> np.ndarray:
    return np.array([float(v) for v in col])


def _color(method: str) -> str:
    return METHOD_COLORS.get(method, "#8c564b")


def _save(fig, output: Path) -> list[Path]:
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for ext in ("png", "svg"):
        target = output.with_suffix(f".{ext}")
        fig.savefig(target, dpi=150, metadata={"Date": None} if ext == "svg" else None)
        written.append(target)
    plt.close(fig)
    return written


def render(spec: FigureSpec) -> list[Path]:
    """Render one figure; returns the written paths ([.png, .svg])."""
    renderer = _RENDERERS[spec.kind]
    return renderer(spec)


def _render_noise_hist(spec: FigureSpec) -> list[Path]:
    cols = read_table(spec.inputs["hist"],
                      ["parameter", "bin_left", "bin_right", "count"])
    params = sorted(set(cols["parameter"]),
                    key=["d_omega1", "d_omega2", "d_g"].index)
    sigmas = spec.options.get("sigmas", {})
    fig, axes = plt.subplots(1, len(params), figsize=(4 * len(params), 3.2))
    axes = np.atleast_1d(axes)
    name = np.array(cols["parameter"])
    left = floats(cols["bin_left"])
    right = floats(cols["bin_right"])
    count = floats(cols["count"])
    labels = {"d_omega1": r"$\delta\omega_1$", "d_omega2": r"$\delta\omega_2$",
              "d_g": r"$\delta g$"}
    for ax, p in zip(axes, params):
        sel = name == p
        centers = 0.5 * (left[sel] + right[sel])
        widths = right[sel] - left[sel]
        total = count[sel].sum()
        density = count[sel] / (total * widths)
        mean = float(np.sum(centers * count[sel]) / total)
        if p in sigmas:
            sigma = float(sigmas[p])
        else:
            sigma = float(np.sqrt(np.sum(count[sel] * (centers - mean) ** 2) / total))
        ax.bar(centers, density, width=widths, color="#4c72b0", edgecolor="none")
        ax.axvline(mean, color="k", linestyle="--", linewidth=1)
        for m in (mean - 3 * sigma, mean + 3 * sigma):
            ax.axvline(m, color="k", linestyle=":", linewidth=1)
        ax.set_xlabel(labels.get(p, p))
        ax.set_ylabel("density")
    fig.tight_layout()
    return _save(fig, spec.output)


def _render_grape_convergence(spec: FigureSpec) -> list[Path]:
    cols = read_table(spec.inputs["history"], ["iteration", "infidelity"])
    it = floats(cols["iteration"])
    infid = floats(cols["infidelity"])
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.semilogy(it, np.maximum(infid, 1e-16), color="#1f77b4")
    ax.set_xlabel("iteration")
    ax.set_ylabel("gate infidelity")
    final = infid[-1]
    ax.set_title(f"final infidelity {final:.2e}")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, spec.output)


def _render_learning_curve(spec: FigureSpec) -> list[Path]:
    cols = read_table(spec.inputs["curve"], ["episode", "f_rl", "running_best"])
    ep = floats(cols["episode"])
    f = floats(cols["f_rl"])
    best = floats(cols["running_best"])
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    ax.plot(ep, f, color="#1f77b4", alpha=0.25, linewidth=0.6,
            label="per-episode fidelity")
    ax.plot(ep, best, color="#d62728", linewidth=1.4, label="running best")
    reference = spec.options.get("reference")
    if reference is not None:
        ax.axhline(float(reference), color="#1f3fbf", linewidth=1.6,
                   label=spec.options.get("reference_label", "OCT ensemble mean"))
    ax.set_xlabel("episode")
    ax.set_ylabel("gate fidelity")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    return _save(fig, spec.output)


def _render_fidelity_bars(spec: FigureSpec) -> list[Path]:
    cols = read_table(spec.inputs["stats"], ["method"])
    if "mean" in cols:
        values = floats(cols["mean"])
        errors = floats(cols["std"]) if "std" in cols else None
    elif "fidelity" in cols:
        values = floats(cols["fidelity"])
        errors = None
    else:
        raise FigureInputError(
            f"{spec.inputs['stats']} lacks required columns ['mean' or 'fidelity']"
        )
    methods = cols["method"]
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(methods), 3.4))
    x = np.arange(len(methods))
    colors = [_color(m) for m in methods]
    ax.bar(x, values, yerr=errors, capsize=4 if errors is not None else 0,
           color=colors)
    ax.set_xticks(x, [m.upper() for m in methods])
    ax.set_ylabel("gate fidelity")
    ax.set_ylim(0.0, 1.05)
    ax.axhline(1.0, color="k", linewidth=0.6, alpha=0.4)
    if spec.options.get("title"):
        ax.set_title(spec.options["title"])
    fig.tight_layout()
    return _save(fig, spec.output)


def _render_sweep(spec: FigureSpec) -> list[Path]:
    cols = read_table(spec.inputs["sweep"],
                      ["method", "mean", "std", "axis", "level"])
    methods = list(dict.fromkeys(cols["method"]))
    level = floats(cols["level"])
    mean = floats(cols["mean"])
    std = floats(cols["std"])
    name = np.array(cols["method"])
    axis = cols["axis"][0]
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for m in methods:
        sel = name == m
        ax.errorbar(level[sel], mean[sel], yerr=std[sel], marker="o",
                    capsize=3, label=m.upper(), color=_color(m))
    ax.set_xscale("log")
    sym = r"$\eta_\omega/\sigma_\omega$" if axis == "omega" else r"$\eta_g/\sigma_g$"
    ax.set_xlabel(f"relative estimation noise {sym}")
    ax.set_ylabel("ensemble mean fidelity")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, spec.output)


def _render_pulse_overlay(spec: FigureSpec) -> list[Path]:
    cols = read_table(spec.inputs["overlay"], ["time", "baseline"])
    t = floats(cols["time"])
    methods = [c for c in cols if c not in ("time",)]
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    for m in methods:
        ax.step(t, floats(cols[m]), where="mid",
                linewidth=1.6 if m == "baseline" else 0.9,
                color="#222222" if m == "baseline" else _color(m),
                label=m if m == "baseline" else m.upper())
    ax.set_xlabel("time")
    ax.set_ylabel("drive amplitude")
    ax.legend(fontsize=8, ncol=min(3, len(methods)))
    # zoom inset over a short central window where the small corrections show
    lo, hi = int(0.45 * len(t)), int(0.55 * len(t)) + 1
    inset = ax.inset_axes([0.58, 0.08, 0.38, 0.34])
    for m in methods:
        inset.step(t[lo:hi], floats(cols[m])[lo:hi], where="mid",
                   linewidth=1.4 if m == "baseline" else 0.9,
                   color="#222222" if m == "baseline" else _color(m))
    inset.tick_params(labelsize=6)
    ax.indicate_inset_zoom(inset, edgecolor="gray")
    fig.tight_layout()
    return _save(fig, spec.output)


_RENDERERS = {
    "noise-hist": _render_noise_hist,
    "grape-convergence": _render_grape_convergence,
    "learning-curve": _render_learning_curve,
    "fidelity-bars": _render_fidelity_bars,
    "sweep": _render_sweep,
    "pulse-overlay": _render_pulse_overlay,
}
