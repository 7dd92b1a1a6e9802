"""Command-line behavior: full pipelines, exit codes, deterministic
re-runs, output-directory resolution, and run-configuration invariants."""

import math
from pathlib import Path

import numpy as np
import pytest

from setmatch.cli import OUTPUT_DIR_ENV, RunConfig, build_parser, main
from setmatch.cost import CostWeights
from setmatch.scenes import SceneConfig, canonical_scene, load_scene, save_scene
from setmatch.solvers import adaptive_epsilon


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "scene.json"
    save_scene(canonical_scene(), path)
    return path


def _run_config(**overrides) -> RunConfig:
    base = dict(
        subcommand="match",
        scene_path=Path("scene.json"),
        generator=None,
        seed=None,
        weights=CostWeights(),
        eps0=0.2,
        eps=None,
        kappa2=0.01,
        variant="damped",
        output_dir=Path("."),
        threads=1,
    )
    base.update(overrides)
    return RunConfig(**base)


class TestRunConfig:
    def test_requires_exactly_one_scene_source(self):
        with pytest.raises(ValueError, match="exactly one"):
            _run_config(scene_path=None)
        with pytest.raises(ValueError, match="exactly one"):
            _run_config(generator=SceneConfig(n_objects=2))

    def test_rejects_out_of_range_kappa2(self):
        with pytest.raises(ValueError, match="kappa2"):
            _run_config(kappa2=1.5)

    def test_rejects_nonpositive_eps_values(self):
        with pytest.raises(ValueError, match="eps0"):
            _run_config(eps0=0.0)
        with pytest.raises(ValueError, match="eps"):
            _run_config(eps=-1.0)

    def test_rejects_unknown_variant(self):
        with pytest.raises(ValueError, match="variant"):
            _run_config(variant="greedy")

    def test_rejects_zero_threads(self):
        with pytest.raises(ValueError, match="threads"):
            _run_config(threads=0)

    def test_resolve_eps_prefers_fixed_value(self):
        assert _run_config(eps=0.3).resolve_eps(50) == 0.3

    def test_resolve_eps_falls_back_to_adaptive_rule(self):
        config = _run_config(eps0=0.2)
        assert config.resolve_eps(6) == adaptive_epsilon(0.2, 6)
        assert config.resolve_eps(6) == pytest.approx(0.2 / math.log(6.0))


class TestParser:
    def test_eps_range_syntax_is_geometric(self):
        args = build_parser().parse_args(["sweep", "s.json", "--eps", "0.1:1.0:3"])
        np.testing.assert_allclose(args.eps, np.geomspace(0.1, 1.0, 3), rtol=1e-15)

    def test_eps_list_syntax_kept_verbatim(self):
        args = build_parser().parse_args(["sweep", "s.json", "--eps", "0.05,0.2,0.8"])
        assert args.eps == (0.05, 0.2, 0.8)


class TestExitCodes:
    def test_no_arguments_is_usage_error(self, capsys):
        assert main([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self, scene_file, capsys):
        assert main(["match", str(scene_file), "--bogus"]) == 2

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "usage" in capsys.readouterr().out
        assert main(["sweep", "--help"]) == 0
        assert "START:STOP:COUNT" in capsys.readouterr().out

    def test_missing_scene_file_is_runtime_error(self, tmp_path, capsys):
        assert main(["match", str(tmp_path / "nope.json")]) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_malformed_scene_file_is_runtime_error(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "something-else"}\n')
        assert main(["compare", str(path), "-o", str(tmp_path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_eps_and_eps0_are_mutually_exclusive(self, scene_file, capsys):
        assert main(["match", str(scene_file), "--eps", "0.1", "--eps0", "0.2"]) == 2
        assert "not allowed" in capsys.readouterr().err

    def test_zero_threads_is_usage_error(self, scene_file, capsys):
        assert main(["match", str(scene_file), "--threads", "0"]) == 2

    def test_oversized_bench_sizes_are_usage_errors(self, capsys):
        assert main(["bench", "--sizes", "64,5000"]) == 2
        assert main(["bench", "--sizes", "0"]) == 2

    def test_degenerate_sweep_grids_are_usage_errors(self, scene_file, capsys):
        assert main(["sweep", str(scene_file), "--eps", "1.0:0.5:4"]) == 2
        assert main(["sweep", str(scene_file), "--eps", "0.5"]) == 2
        assert main(["sweep", str(scene_file), "--eps", "0.5,0.1"]) == 2

    def test_invalid_generator_counts_are_usage_errors(self, capsys):
        assert main(["gen", "--objects", "0"]) == 2
        assert main(["ablate", "--kappa2-grid", "0.1,1.5"]) == 2


class TestGen:
    def test_writes_scene_to_explicit_path(self, tmp_path, capsys):
        out = tmp_path / "custom.json"
        assert main(["gen", "--seed", "5", "-o", str(out)]) == 0
        assert f"wrote {out}" in capsys.readouterr().out
        scene = load_scene(out)
        assert scene.n_ground_truths == 4
        assert scene.provenance is not None

    def test_defaults_to_scene_json_in_output_dir(self, tmp_path, capsys):
        assert main(["gen", "--output-dir", str(tmp_path)]) == 0
        assert (tmp_path / "scene.json").exists()

    def test_env_var_sets_output_dir(self, tmp_path, monkeypatch, capsys):
        target = tmp_path / "from-env"
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(target))
        assert main(["gen"]) == 0
        assert (target / "scene.json").exists()

    def test_flag_overrides_env_var(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "ignored"))
        chosen = tmp_path / "chosen"
        assert main(["gen", "--output-dir", str(chosen)]) == 0
        assert (chosen / "scene.json").exists()
        assert not (tmp_path / "ignored").exists()


class TestMatch:
    def test_rtp_plan_csv(self, scene_file, tmp_path, capsys):
        out_dir = tmp_path / "out"
        assert main(["match", str(scene_file), "-o", str(out_dir)]) == 0
        lines = (out_dir / "plan.csv").read_text().splitlines()
        assert lines[0].startswith("prediction,g0")
        assert len(lines) == 1 + 6
        assert "converged True" in capsys.readouterr().out

    def test_hungarian_assignment_csv(self, scene_file, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(
            ["match", str(scene_file), "--solver", "hungarian", "-o", str(out_dir)]
        )
        assert code == 0
        lines = (out_dir / "assignment.csv").read_text().splitlines()
        assert lines[0] == "prediction,assignment"
        assert len(lines) == 1 + 6
        assert "background" in capsys.readouterr().out

    def test_sinkhorn_balances_rows(self, scene_file, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(
            ["match", str(scene_file), "--solver", "sinkhorn", "--eps", "0.5",
             "-o", str(out_dir)]
        )
        assert code == 0
        rows = (out_dir / "plan.csv").read_text().splitlines()[1:]
        masses = [sum(float(v) for v in row.split(",")[1:]) for row in rows]
        np.testing.assert_allclose(masses, 1.0 / 6.0, atol=1e-9)

    def test_literal_variant_runs(self, scene_file, tmp_path, capsys):
        code = main(
            ["match", str(scene_file), "--variant", "literal", "--eps", "0.1",
             "-o", str(tmp_path / "out")]
        )
        assert code == 0
        assert (tmp_path / "out" / "plan.csv").exists()

    def test_eps0_reproduces_equivalent_fixed_eps(self, scene_file, tmp_path, capsys):
        adaptive_dir = tmp_path / "adaptive"
        fixed_dir = tmp_path / "fixed"
        assert main(["match", str(scene_file), "--eps0", "0.2", "-o", str(adaptive_dir)]) == 0
        eps = adaptive_epsilon(0.2, 6)
        code = main(
            ["match", str(scene_file), "--eps", format(eps, ".17g"), "-o", str(fixed_dir)]
        )
        assert code == 0
        assert (adaptive_dir / "plan.csv").read_bytes() == (fixed_dir / "plan.csv").read_bytes()

    def test_reruns_are_byte_identical_across_thread_counts(
        self, scene_file, tmp_path, capsys
    ):
        first = tmp_path / "a"
        second = tmp_path / "b"
        assert main(["match", str(scene_file), "-o", str(first)]) == 0
        assert main(["match", str(scene_file), "-o", str(second), "--threads", "7"]) == 0
        assert (first / "plan.csv").read_bytes() == (second / "plan.csv").read_bytes()


class TestSweep:
    def test_geometric_grid_record_count(self, scene_file, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(
            ["sweep", str(scene_file), "--eps", "0.01:1.0:10", "-o", str(out_dir)]
        )
        assert code == 0
        lines = (out_dir / "sweep.csv").read_text().splitlines()
        assert len(lines) == 1 + 10
        assert "10 grid points" in capsys.readouterr().out


class TestCompare:
    def test_emits_csv_and_heatmaps(self, scene_file, tmp_path, capsys):
        out_dir = tmp_path / "out"
        assert main(["compare", str(scene_file), "-o", str(out_dir)]) == 0
        lines = (out_dir / "comparison.csv").read_text().splitlines()
        assert len(lines) == 1 + 5
        for name in (
            "cost_matrix",
            "giou_similarity",
            "hungarian",
            "oracle",
            "exact_ot",
            "rtp",
        ):
            assert (out_dir / f"{name}.svg").exists(), name
        assert not (out_dir / "rtp_threshold.svg").exists()
        assert capsys.readouterr().out.count("wrote") == 7

    def test_reruns_are_byte_identical(self, scene_file, tmp_path, capsys):
        first = tmp_path / "a"
        second = tmp_path / "b"
        assert main(["compare", str(scene_file), "-o", str(first)]) == 0
        assert main(["compare", str(scene_file), "-o", str(second)]) == 0
        for name in ("comparison.csv", "cost_matrix.svg", "rtp.svg"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name


class TestAblate:
    def test_noise_free_grid_ties_to_first_cell(self, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(
            [
                "ablate",
                "--scenes", "2",
                "--objects", "3",
                "--classes", "3",
                "--duplicates", "0",
                "--jitter", "0",
                "--class-noise", "0",
                "--eps0-grid", "0.1,0.3",
                "--kappa2-grid", "0.01",
                "-o", str(out_dir),
            ]
        )
        assert code == 0
        lines = (out_dir / "ablation.csv").read_text().splitlines()
        assert len(lines) == 1 + 2
        assert lines[1].endswith(",1") and lines[2].endswith(",0")
        assert "best eps0=0.1" in capsys.readouterr().out


class TestBench:
    def test_timing_csv_and_slope_line(self, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(
            ["bench", "--sizes", "16,32", "--iters", "2", "--repeats", "1",
             "-o", str(out_dir)]
        )
        assert code == 0
        lines = (out_dir / "timing.csv").read_text().splitlines()
        assert lines[0] == "m,n,backend,seconds_per_iteration"
        assert len(lines) == 1 + 2
        assert "log-log slope" in capsys.readouterr().out

    def test_both_backends_emit_one_row_each(self, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(
            ["bench", "--sizes", "16", "--iters", "2", "--repeats", "1",
             "--backend", "both", "-o", str(out_dir)]
        )
        assert code == 0
        rows = (out_dir / "timing.csv").read_text().splitlines()[1:]
        backends = [row.split(",")[2] for row in rows]
        assert len(backends) == len(set(backends))
        assert "python" in backends
