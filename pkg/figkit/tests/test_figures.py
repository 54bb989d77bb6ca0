import json
from pathlib import Path

import numpy as np
import pytest

from quditcal_figs import FigureInputError, FigureSpec, render
from quditcal_figs.cli import main


def write_csv(path: Path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def run_tree(tmp_path):
    """Synthetic artifacts matching every documented schema."""
    rng = np.random.default_rng(0)

    grape = tmp_path / "grape"
    grape.mkdir()
    write_csv(grape / "grape_history.csv", ["iteration", "infidelity"],
              [(i, 10 ** (-0.05 * i)) for i in range(200)])
    (grape / "manifest.json").write_text(json.dumps(
        {"quditcal_manifest": 1, "command": "grape", "args": {}, "config": {}}))

    noise = tmp_path / "noise"
    noise.mkdir()
    rows = []
    for p, sigma in (("d_omega1", 1e-3), ("d_omega2", 1e-3), ("d_g", 5e-5)):
        edges = np.linspace(-4 * sigma, 4 * sigma, 21)
        z = rng.normal(0, sigma, 5000)
        counts, _ = np.histogram(z, bins=edges)
        rows += [(p, edges[i], edges[i + 1], counts[i]) for i in range(20)]
    write_csv(noise / "noise_hist.csv",
              ["parameter", "bin_left", "bin_right", "count"], rows)
    (noise / "manifest.json").write_text(json.dumps(
        {"quditcal_manifest": 1, "command": "sample-noise", "args": {},
         "config": {"noise": {"sigma_omega": 1e-3, "sigma_g": 5e-5}}}))

    train = tmp_path / "train"
    train.mkdir()
    f = 0.8 + 0.19 * (1 - np.exp(-np.arange(500) / 80)) + rng.normal(0, 0.01, 500)
    f = np.clip(f, 0, 1)
    write_csv(train / "learning_curve.csv", ["episode", "f_rl", "running_best"],
              [(i, f[i], np.max(f[: i + 1])) for i in range(500)])
    (train / "manifest.json").write_text(json.dumps(
        {"quditcal_manifest": 1, "command": "train", "args": {}, "config": {}}))

    evald = tmp_path / "eval"
    evald.mkdir()
    write_csv(evald / "ensemble.csv", ["method", "M", "seed", "mean", "std"],
              [("oct", 100, 1, 0.824, 0.138), ("sac", 100, 1, 0.963, 0.044),
               ("td3", 100, 1, 0.962, 0.044)])
    write_csv(evald / "nominal.csv", ["method", "fidelity"],
              [("oct", 0.9999999), ("sac", 0.998), ("td3", 0.996)])
    write_csv(evald / "single.csv",
              ["method", "d_omega1", "d_omega2", "d_g", "fidelity"],
              [("oct", -3e-4, -8e-4, 6e-6, 0.92), ("sac", -3e-4, -8e-4, 6e-6, 0.99)])
    t = (np.arange(160) + 0.5) * 10.0
    base = 0.25 * np.sin(t / 150.0)
    write_csv(evald / "pulse_overlay.csv", ["time", "baseline", "sac", "td3"],
              [(t[i], base[i], base[i] + 0.004 * np.cos(t[i] / 90), base[i] - 0.003)
               for i in range(160)])
    (evald / "manifest.json").write_text(json.dumps(
        {"quditcal_manifest": 1, "command": "eval", "args": {}, "config": {}}))

    sweep = tmp_path / "sweep"
    sweep.mkdir()
    rows = []
    for m, drop in (("oct", 0.0), ("td3", 0.05)):
        for lv in (1e-4, 1e-3, 1e-2, 1e-1, 1.0):
            rows.append((m, 100, 1, 0.96 - drop * np.log10(lv / 1e-4), 0.03,
                         "omega", lv))
    write_csv(sweep / "sweep.csv",
              ["method", "M", "seed", "mean", "std", "axis", "level"], rows)
    (sweep / "manifest.json").write_text(json.dumps(
        {"quditcal_manifest": 1, "command": "sweep", "args": {}, "config": {}}))

    return tmp_path


class TestRender:
    def test_each_kind_writes_png_and_svg(self, run_tree, tmp_path):
        specs = [
            FigureSpec("grape-convergence",
                       {"history": run_tree / "grape" / "grape_history.csv"},
                       tmp_path / "o1"),
            FigureSpec("noise-hist", {"hist": run_tree / "noise" / "noise_hist.csv"},
                       tmp_path / "o2",
                       {"sigmas": {"d_omega1": 1e-3, "d_omega2": 1e-3, "d_g": 5e-5}}),
            FigureSpec("learning-curve",
                       {"curve": run_tree / "train" / "learning_curve.csv"},
                       tmp_path / "o3", {"reference": 0.824}),
            FigureSpec("fidelity-bars", {"stats": run_tree / "eval" / "ensemble.csv"},
                       tmp_path / "o4"),
            FigureSpec("sweep", {"sweep": run_tree / "sweep" / "sweep.csv"},
                       tmp_path / "o5"),
            FigureSpec("pulse-overlay",
                       {"overlay": run_tree / "eval" / "pulse_overlay.csv"},
                       tmp_path / "o6"),
        ]
        for spec in specs:
            written = render(spec)
            assert [p.suffix for p in written] == [".png", ".svg"]
            for p in written:
                assert p.exists() and p.stat().st_size > 0

    def test_bars_accept_point_fidelities(self, run_tree, tmp_path):
        spec = FigureSpec("fidelity-bars",
                          {"stats": run_tree / "eval" / "nominal.csv"},
                          tmp_path / "bars")
        assert len(render(spec)) == 2

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(FigureInputError):
            FigureSpec("pie", {}, tmp_path / "x")

    def test_missing_column_named_in_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("iteration,wrong\n0,1\n")
        spec = FigureSpec("grape-convergence", {"history": bad}, tmp_path / "o")
        with pytest.raises(FigureInputError, match="infidelity"):
            render(spec)
        assert not (tmp_path / "o.png").exists()
        assert not (tmp_path / "o.svg").exists()

    def test_empty_csv_rejected_without_output(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("iteration,infidelity\n")
        spec = FigureSpec("grape-convergence", {"history": empty}, tmp_path / "o")
        with pytest.raises(FigureInputError):
            render(spec)
        assert not (tmp_path / "o.svg").exists()

    def test_svg_render_deterministic(self, run_tree, tmp_path):
        spec = FigureSpec("sweep", {"sweep": run_tree / "sweep" / "sweep.csv"},
                          tmp_path / "d1")
        spec2 = FigureSpec("sweep", {"sweep": run_tree / "sweep" / "sweep.csv"},
                           tmp_path / "d2")
        svg1 = [p for p in render(spec) if p.suffix == ".svg"][0]
        svg2 = [p for p in render(spec2) if p.suffix == ".svg"][0]
        assert svg1.read_bytes() == svg2.read_bytes()


class TestCli:
    def test_all_renders_every_family(self, run_tree):
        rc = main(["--all", str(run_tree)])
        assert rc == 0
        expected = {
            run_tree / "grape" / "figures" / "grape_convergence.svg",
            run_tree / "noise" / "figures" / "noise_hist.svg",
            run_tree / "train" / "figures" / "learning_curve.svg",
            run_tree / "eval" / "figures" / "fidelity_ensemble.svg",
            run_tree / "eval" / "figures" / "fidelity_nominal.svg",
            run_tree / "eval" / "figures" / "fidelity_single.svg",
            run_tree / "eval" / "figures" / "pulse_overlay.svg",
            run_tree / "sweep" / "figures" / "sweep.svg",
        }
        for path in expected:
            assert path.exists(), path

    def test_reference_line_found_from_eval(self, run_tree):
        from quditcal_figs.cli import oct_reference

        assert oct_reference(run_tree) == pytest.approx(0.824)

    def test_rerender_identical_svgs(self, run_tree):
        assert main(["--all", str(run_tree)]) == 0
        first = {
            p: p.read_bytes() for p in run_tree.rglob("figures/*.svg")
        }
        assert main(["--all", str(run_tree)]) == 0
        for p, content in first.items():
            assert p.read_bytes() == content

    def test_missing_manifest_tree(self, tmp_path):
        assert main(["--all", str(tmp_path)]) == 1
