"""quditcal-figs: render every applicable figure for a tree of quditcal runs.

`quditcal-figs --all RUN_DIR` scans RUN_DIR recursively for manifest.json
files and renders the figures each run's artifacts support, writing PNG + SVG
into a figures/ directory beside each manifest.  Learning-curve figures pick
up the OCT ensemble-mean reference line from any eval run found in the same
tree.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .figures import FigureInputError, FigureSpec, read_table, render


def find_manifests(root: Path) -> list[Path]:
    return sorted(root.rglob("manifest.json"))


def oct_reference(root: Path) -> float | None:
    """OCT ensemble mean from the first eval run found under root, if any."""
    for manifest_path in find_manifests(root):
        try:
            doc = json.loads(manifest_path.read_text())
        except (OSError, json.JSONDecodeError):
            continue
        if doc.get("command") != "eval":
            continue
        stats = manifest_path.parent / "ensemble.csv"
        try:
            cols = read_table(stats, ["method", "mean"])
        except FigureInputError:
            continue
        for method, mean in zip(cols["method"], cols["mean"]):
            if method == "oct":
                return float(mean)
    return None


def specs_for_run(run_dir: Path, doc: dict, out_dir: Path, reference) -> list[FigureSpec]:
    command = doc.get("command")
    specs = []
    if command == "sample-noise":
        noise = doc.get("config", {}).get("noise", {})
        sigmas = {
            "d_omega1": noise.get("sigma_omega"),
            "d_omega2": noise.get("sigma_omega"),
            "d_g": noise.get("sigma_g"),
        }
        sigmas = {k: v for k, v in sigmas.items() if v is not None}
        specs.append(FigureSpec(
            kind="noise-hist",
            inputs={"hist": run_dir / "noise_hist.csv"},
            output=out_dir / "noise_hist",
            options={"sigmas": sigmas},
        ))
    elif command == "grape":
        specs.append(FigureSpec(
            kind="grape-convergence",
            inputs={"history": run_dir / "grape_history.csv"},
            output=out_dir / "grape_convergence",
        ))
    elif command == "train":
        options = {}
        if reference is not None:
            options["reference"] = reference
        specs.append(FigureSpec(
            kind="learning-curve",
            inputs={"curve": run_dir / "learning_curve.csv"},
            output=out_dir / "learning_curve",
            options=options,
        ))
    elif command == "eval":
        for name, title in (("ensemble", "ensemble of noisy devices"),
                            ("nominal", "nominal device"),
                            ("single", "single static-noise device")):
            specs.append(FigureSpec(
                kind="fidelity-bars",
                inputs={"stats": run_dir / f"{name}.csv"},
                output=out_dir / f"fidelity_{name}",
                options={"title": title},
            ))
        specs.append(FigureSpec(
            kind="pulse-overlay",
            inputs={"overlay": run_dir / "pulse_overlay.csv"},
            output=out_dir / "pulse_overlay",
        ))
    elif command == "sweep":
        specs.append(FigureSpec(
            kind="sweep",
            inputs={"sweep": run_dir / "sweep.csv"},
            output=out_dir / "sweep",
        ))
    return specs


def render_all(root: Path) -> list[Path]:
    manifests = find_manifests(root)
    if not manifests:
        raise FigureInputError(f"no manifest.json found under {root}")
    reference = oct_reference(root)
    written = []
    for manifest_path in manifests:
        try:
            doc = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise FigureInputError(f"{manifest_path} is not valid JSON: {exc}")
        run_dir = manifest_path.parent
        specs = specs_for_run(run_dir, doc, run_dir / "figures", reference)
        for spec in specs:
            written.extend(render(spec))
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="quditcal-figs",
        description="Render figures from quditcal run directories.",
    )
    parser.add_argument("--all", metavar="RUN_DIR", required=True,
                        help="directory tree containing run manifests")
    args = parser.parse_args(argv)
    try:
        written = render_all(Path(args.all))
    except FigureInputError as exc:
        print(f"figure error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
