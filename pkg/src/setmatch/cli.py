"""Command-line interface wiring scenes, solvers, and experiment drivers
into reproducible runs.

Subcommands: ``gen`` (write a synthetic scene), ``match`` (solve one scene),
``sweep`` (regularization sweep), ``compare`` (all matchers side by side),
``ablate`` (hyperparameter grid), ``bench`` (kernel timing).  Every command
except ``bench`` writes byte-identical outputs when re-run with identical
flags.  Exit codes: 0 success, 1 runtime/solver failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._backend import available_backends
from .cost import (
    CostWeights,
    background_augmented_cost,
    default_background_cost,
    pairwise_cost_matrix,
)
from .harness import (
    ablation_grid,
    compare_matchers,
    emit_heatmap,
    epsilon_sweep,
    fit_loglog_slope,
    giou_similarity_matrix,
    timing_benchmark,
    write_ablation_csv,
    write_assignment_csv,
    write_comparison_csv,
    write_plan_csv,
    write_sweep_csv,
    write_timing_csv,
)
from .scenes import (
    Scene,
    SceneConfig,
    SceneFormatError,
    generate_scene,
    load_scene,
    save_scene,
)
from .solvers import (
    DEFAULT_EPS0,
    DEFAULT_KAPPA2,
    Marginals,
    SinkhornNumericalError,
    adaptive_epsilon,
    extract_hard_matches,
    hungarian,
    rtp_unbalanced,
    sinkhorn_log_domain,
)

# Default output directory when -o/--output-dir is not given.
OUTPUT_DIR_ENV = "SETMATCH_OUTPUT_DIR"

_DEFAULT_EPS0_GRID = "0.05,0.1,0.15,0.2,0.25,0.35,0.5"
_DEFAULT_KAPPA2_GRID = "0.001,0.01,0.1,0.5"
_DEFAULT_BENCH_SIZES = "64,128,256,512,1024"


@dataclass(frozen=True)
class RunConfig:
    """Resolved description of one scene-consuming run.

    Exactly one of ``scene_path`` and ``generator`` is set: commands either
    load a scene file or generate scenes from a config.  ``eps`` fixes the
    regularization directly; otherwise ``eps0`` drives the adaptive rule.
    """

    subcommand: str
    scene_path: Path | None
    generator: SceneConfig | None
    seed: int | None
    weights: CostWeights
    eps0: float
    eps: float | None
    kappa2: float
    variant: str
    output_dir: Path
    threads: int

    def __post_init__(self) -> None:
        if (self.scene_path is None) == (self.generator is None):
            raise ValueError(
                "exactly one of scene_path and generator must be set, got "
                f"scene_path={self.scene_path!r}, generator={self.generator!r}"
            )
        if not 0.0 <= self.kappa2 <= 1.0:
            raise ValueError(f"kappa2 must lie in [0, 1], got {self.kappa2!r}")
        if not math.isfinite(self.eps0) or self.eps0 <= 0.0:
            raise ValueError(f"eps0 must be finite and > 0, got {self.eps0!r}")
        if self.eps is not None and (not math.isfinite(self.eps) or self.eps <= 0.0):
            raise ValueError(f"eps must be finite and > 0, got {self.eps!r}")
        if self.variant not in ("damped", "literal"):
            raise ValueError(f"unknown solver variant {self.variant!r}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def resolve_eps(self, n_predictions: int) -> float:
        """Fixed eps when given, else the adaptive value for this size."""
        if self.eps is not None:
            return self.eps
        return adaptive_epsilon(self.eps0, n_predictions)


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not math.isfinite(value) or value <= 0.0:
        raise argparse.ArgumentTypeError(f"must be finite and > 0: {text!r}")
    return value


def _nonnegative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not math.isfinite(value) or value < 0.0:
        raise argparse.ArgumentTypeError(f"must be finite and >= 0: {text!r}")
    return value


def _unit_float(text: str) -> float:
    value = _nonnegative_float(text)
    if value > 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1]: {text!r}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text!r}")
    return value


def _eps_grid(text: str) -> tuple[float, ...]:
    """Parse ``START:STOP:COUNT`` (geometric grid) or a comma-separated list."""
    if ":" in text:
        fields = text.split(":")
        if len(fields) != 3:
            raise argparse.ArgumentTypeError(
                f"range syntax is START:STOP:COUNT, got {text!r}"
            )
        start = _positive_float(fields[0])
        stop = _positive_float(fields[1])
        count = _positive_int(fields[2])
        if stop <= start:
            raise argparse.ArgumentTypeError(f"range needs STOP > START: {text!r}")
        if count < 2:
            raise argparse.ArgumentTypeError(f"range needs COUNT >= 2: {text!r}")
        return tuple(float(e) for e in np.geomspace(start, stop, count))
    values = tuple(_positive_float(field) for field in text.split(","))
    if len(values) < 2:
        raise argparse.ArgumentTypeError(f"eps grid needs at least 2 values: {text!r}")
    if any(b < a for a, b in zip(values, values[1:])):
        raise argparse.ArgumentTypeError(f"eps grid must be sorted: {text!r}")
    return values


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(field) for field in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from exc


def _size_list(text: str) -> tuple[int, ...]:
    sizes = _int_list(text)
    for size in sizes:
        if not 1 <= size <= 4096:
            raise argparse.ArgumentTypeError(f"sizes must lie in [1, 4096]: {text!r}")
    return sizes


def _positive_float_list(text: str) -> tuple[float, ...]:
    return tuple(_positive_float(field) for field in text.split(","))


def _unit_float_list(text: str) -> tuple[float, ...]:
    return tuple(_unit_float(field) for field in text.split(","))


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "-o",
        "--output-dir",
        default=None,
        help=f"output directory (default: ${OUTPUT_DIR_ENV} or '.')",
    )
    parser.add_argument(
        "--threads",
        type=_positive_int,
        default=1,
        help="worker threads; kernels are single-threaded, so any value "
        "yields identical output (default: 1)",
    )


def _add_weight_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda-class", type=_nonnegative_float, default=1.0)
    parser.add_argument("--lambda-bbox", type=_nonnegative_float, default=5.0)
    parser.add_argument("--lambda-giou", type=_nonnegative_float, default=2.0)


def _add_eps_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        "--eps",
        type=_positive_float,
        default=None,
        help="fixed regularization strength",
    )
    group.add_argument(
        "--eps0",
        type=_positive_float,
        default=None,
        help=f"base for adaptive eps = eps0/ln(M) (default: {DEFAULT_EPS0})",
    )


def _add_generator_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--objects", type=_positive_int, default=4)
    parser.add_argument("--duplicates", type=_nonnegative_float, default=0.6)
    parser.add_argument("--miss-rate", type=_unit_float, default=0.0)
    parser.add_argument("--jitter", type=_nonnegative_float, default=0.012)
    parser.add_argument("--class-noise", type=_nonnegative_float, default=0.08)
    parser.add_argument("--classes", type=_positive_int, default=4)
    parser.add_argument("--clutter", type=_nonnegative_int, default=0)
    parser.add_argument("--seed", type=_nonnegative_int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="setmatch",
        description="Set matching via assignment and regularized transport.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic scene file")
    _add_generator_options(gen)
    gen.add_argument(
        "-o",
        "--output",
        default=None,
        help="scene file path (default: <output dir>/scene.json)",
    )
    gen.add_argument(
        "--output-dir",
        default=None,
        help=f"directory for the default scene path (default: ${OUTPUT_DIR_ENV} or '.')",
    )
    gen.add_argument("--threads", type=_positive_int, default=1, help=argparse.SUPPRESS)

    match = sub.add_parser("match", help="solve one scene and write the plan")
    match.add_argument("scene", help="scene JSON file")
    match.add_argument(
        "--solver",
        choices=("hungarian", "sinkhorn", "rtp"),
        default="rtp",
    )
    _add_eps_options(match)
    match.add_argument("--kappa2", type=_unit_float, default=DEFAULT_KAPPA2)
    match.add_argument("--variant", choices=("damped", "literal"), default="damped")
    match.add_argument("--bg-cost", type=_nonnegative_float, default=None)
    match.add_argument("--tol", type=_positive_float, default=1e-9)
    match.add_argument("--max-iter", type=_positive_int, default=50000)
    _add_weight_options(match)
    _add_common_options(match)

    sweep = sub.add_parser("sweep", help="regularization sweep on one scene")
    sweep.add_argument("scene", help="scene JSON file")
    sweep.add_argument(
        "--eps",
        type=_eps_grid,
        required=True,
        help="grid as START:STOP:COUNT (geometric) or comma-separated values",
    )
    sweep.add_argument("--kappa2", type=_unit_float, default=DEFAULT_KAPPA2)
    sweep.add_argument("--tol", type=_positive_float, default=1e-9)
    sweep.add_argument("--max-iter", type=_positive_int, default=50000)
    _add_weight_options(sweep)
    _add_common_options(sweep)

    compare = sub.add_parser("compare", help="run all matchers on one scene")
    compare.add_argument("scene", help="scene JSON file")
    _add_eps_options(compare)
    compare.add_argument("--kappa2", type=_unit_float, default=DEFAULT_KAPPA2)
    compare.add_argument("--bg-cost", type=_nonnegative_float, default=None)
    compare.add_argument("--threshold", type=_positive_float, default=0.5)
    compare.add_argument("--tol", type=_positive_float, default=1e-9)
    compare.add_argument("--max-iter", type=_positive_int, default=50000)
    _add_weight_options(compare)
    _add_common_options(compare)

    ablate = sub.add_parser("ablate", help="hyperparameter grid over generated scenes")
    ablate.add_argument("--scenes", type=_positive_int, default=100)
    ablate.add_argument(
        "--eps0-grid", type=_positive_float_list, default=_positive_float_list(_DEFAULT_EPS0_GRID)
    )
    ablate.add_argument(
        "--kappa2-grid", type=_unit_float_list, default=_unit_float_list(_DEFAULT_KAPPA2_GRID)
    )
    ablate.add_argument("--tol", type=_positive_float, default=1e-8)
    ablate.add_argument("--max-iter", type=_positive_int, default=20000)
    _add_generator_options(ablate)
    _add_weight_options(ablate)
    _add_common_options(ablate)

    bench = sub.add_parser("bench", help="time the scaling kernel across sizes")
    bench.add_argument("--sizes", type=_size_list, default=_size_list(_DEFAULT_BENCH_SIZES))
    bench.add_argument("--iters", type=_positive_int, default=10)
    bench.add_argument("--repeats", type=_positive_int, default=3)
    bench.add_argument(
        "--backend",
        choices=("auto", "python", "compiled", "both"),
        default="auto",
    )
    bench.add_argument("--seed", type=_nonnegative_int, default=0)
    _add_common_options(bench)

    return parser


def _output_dir(args: argparse.Namespace) -> Path:
    raw = getattr(args, "output_dir", None)
    if raw is None:
        raw = os.environ.get(OUTPUT_DIR_ENV, ".")
    path = Path(raw)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _weights(args: argparse.Namespace) -> CostWeights:
    return CostWeights(
        lambda_class=args.lambda_class,
        lambda_bbox=args.lambda_bbox,
        lambda_giou=args.lambda_giou,
    )


def _generator_config(args: argparse.Namespace) -> SceneConfig:
    return SceneConfig(
        n_objects=args.objects,
        duplicates_per_object=args.duplicates,
        miss_rate=args.miss_rate,
        box_jitter=args.jitter,
        class_noise=args.class_noise,
        num_classes=args.classes,
        clutter=args.clutter,
    )


def _run_config(
    args: argparse.Namespace,
    scene_path: Path | None = None,
    generator: SceneConfig | None = None,
) -> RunConfig:
    return RunConfig(
        subcommand=args.command,
        scene_path=scene_path,
        generator=generator,
        seed=getattr(args, "seed", None),
        weights=_weights(args) if hasattr(args, "lambda_class") else CostWeights(),
        eps0=getattr(args, "eps0", None) or DEFAULT_EPS0,
        eps=getattr(args, "eps", None) if not isinstance(getattr(args, "eps", None), tuple) else None,
        kappa2=getattr(args, "kappa2", DEFAULT_KAPPA2),
        variant=getattr(args, "variant", "damped"),
        output_dir=_output_dir(args),
        threads=getattr(args, "threads", 1),
    )


def _load(path: Path) -> Scene:
    return load_scene(path)


def _plan_labels(width: int, n_ground_truths: int) -> list[str]:
    labels = [f"g{i}" for i in range(n_ground_truths)]
    if width == n_ground_truths + 1:
        labels.append("bg")
    return labels


def _cmd_gen(args: argparse.Namespace) -> int:
    config = _generator_config(args)
    run = _run_config(args, generator=config)
    scene = generate_scene(config, seed=args.seed)
    out = Path(args.output) if args.output else run.output_dir / "scene.json"
    save_scene(scene, out)
    print(
        f"wrote {out} ({scene.n_ground_truths} ground truths, "
        f"{scene.n_predictions} predictions, seed {args.seed})"
    )
    return 0


def _cmd_match(args: argparse.Namespace) -> int:
    run = _run_config(args, scene_path=Path(args.scene))
    scene = _load(run.scene_path)
    cost = pairwise_cost_matrix(scene, run.weights)
    m, n = cost.shape
    if args.solver == "hungarian":
        bg = args.bg_cost
        if bg is None:
            bg = default_background_cost(scene, run.weights)
        assignment = hungarian(background_augmented_cost(cost, bg), n_targets=n)
        out = write_assignment_csv(assignment, run.output_dir / "assignment.csv", n)
        print(
            f"wrote {out} (total cost {assignment.total_cost:.6g}, "
            f"{len(assignment.background)} background)"
        )
        return 0
    marginals = Marginals.uniform(n, m)
    eps = run.resolve_eps(m)
    if args.solver == "sinkhorn":
        plan = sinkhorn_log_domain(
            cost, marginals, eps=eps, tol=args.tol, max_iter=args.max_iter
        )
    else:
        plan = rtp_unbalanced(
            cost,
            marginals,
            eps=eps,
            kappa2=run.kappa2,
            tol=args.tol,
            max_iter=args.max_iter,
            variant=run.variant,
        )
    out = write_plan_csv(plan.gamma, run.output_dir / "plan.csv")
    diag = plan.diagnostics
    print(
        f"wrote {out} (eps {eps:.6g}, {diag.iterations} iterations, "
        f"residual {diag.marginal_residual:.3g}, converged {diag.converged}, "
        f"transport cost {diag.transport_cost:.6g})"
    )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    run = _run_config(args, scene_path=Path(args.scene))
    scene = _load(run.scene_path)
    records = epsilon_sweep(
        scene,
        run.weights,
        eps_grid=args.eps,
        kappa2=run.kappa2,
        tol=args.tol,
        max_iter=args.max_iter,
    )
    out = write_sweep_csv(records, run.output_dir / "sweep.csv")
    stalled = sum(1 for r in records if not r.converged)
    note = f", {stalled} not converged" if stalled else ""
    print(f"wrote {out} ({len(records)} grid points{note})")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    run = _run_config(args, scene_path=Path(args.scene))
    scene = _load(run.scene_path)
    cost = pairwise_cost_matrix(scene, run.weights)
    m, n = cost.shape
    bg = args.bg_cost
    if bg is None:
        bg = default_background_cost(scene, run.weights)
    records = compare_matchers(
        scene,
        run.weights,
        eps=run.eps,
        eps0=run.eps0,
        kappa2=run.kappa2,
        bg_cost=bg,
        threshold=args.threshold,
        tol=args.tol,
        max_iter=args.max_iter,
    )
    assert len({r.cost_hash for r in records}) == 1, "records must share one cost matrix"
    out = write_comparison_csv(records, run.output_dir / "comparison.csv")
    print(f"wrote {out}")
    emitted = {
        "cost_matrix": emit_heatmap(
            cost,
            run.output_dir / "cost_matrix.svg",
            title="pairwise cost (lower = better match)",
        ),
        "giou_similarity": emit_heatmap(
            giou_similarity_matrix(scene),
            run.output_dir / "giou_similarity.svg",
            title="rescaled GIoU similarity (higher = better overlap)",
        ),
    }
    for record in records:
        if record.matrix is None or record.matcher == "rtp_threshold":
            continue
        name = "rtp" if record.matcher == "rtp_argmax" else record.matcher
        emitted[name] = emit_heatmap(
            record.matrix,
            run.output_dir / f"{name}.svg",
            col_labels=_plan_labels(record.matrix.shape[1], n),
            title=f"{name} (transport plan by prediction/ground truth)",
        )
    for path in emitted.values():
        print(f"wrote {path}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _generator_config(args)
    run = _run_config(args, generator=config)
    scenes = [generate_scene(config, seed=args.seed + k) for k in range(args.scenes)]
    cells = ablation_grid(
        scenes,
        eps0_grid=args.eps0_grid,
        kappa2_grid=args.kappa2_grid,
        weights=run.weights,
        tol=args.tol,
        max_iter=args.max_iter,
    )
    out = write_ablation_csv(cells, run.output_dir / "ablation.csv")
    best = next(c for c in cells if c.best)
    print(
        f"wrote {out} ({len(cells)} cells; best eps0={best.eps0:g} "
        f"kappa2={best.kappa2:g} mean F1={best.mean_f1:.4f})"
    )
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    out_dir = _output_dir(args)
    if args.backend == "both":
        backends = list(available_backends())
    else:
        backends = [args.backend]
    records = []
    for backend in backends:
        records.extend(
            timing_benchmark(
                args.sizes,
                iters=args.iters,
                repeats=args.repeats,
                backend=backend,
                seed=args.seed,
            )
        )
    out = write_timing_csv(records, out_dir / "timing.csv")
    print(f"wrote {out}")
    for backend in sorted({r.backend for r in records}):
        subset = [r for r in records if r.backend == backend]
        if len({(r.m, r.n) for r in subset}) >= 2:
            slope = fit_loglog_slope(subset)
            print(f"backend {backend}: log-log slope {slope:.3f} over {len(subset)} sizes")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "match": _cmd_match,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
    "ablate": _cmd_ablate,
    "bench": _cmd_bench,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (SceneFormatError, SinkhornNumericalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    """Console-script hook."""
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
