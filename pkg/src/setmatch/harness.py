"""Experiment drivers: matcher comparison, regularization sweeps, ablation
grids, and timing benchmarks, plus the CSV and heatmap emitters they share.

Every driver is a pure function of its inputs (scene, grids, flags):
rerunning one reproduces its records, and the CSV writers format floats with
17 significant digits so files are byte-identical across runs.  The timing
benchmark reports wall-clock time and is exempt from that guarantee.
"""

from __future__ import annotations

import hashlib
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._backend import resolve_backend
from .cost import CostMatrix, CostWeights, background_augmented_cost, pairwise_cost_matrix
from .geometry import giou_rescaled
from .scenes import Scene
from .solvers import (
    BRUTE_FORCE_MAX_SIZE,
    DEFAULT_EPS0,
    DEFAULT_KAPPA2,
    Assignment,
    Marginals,
    adaptive_epsilon,
    brute_force_assignment,
    extract_hard_matches,
    hungarian,
    regularized_objective,
    rtp_unbalanced,
    sinkhorn_log_domain,
)

# "Exact OT" is realized as log-domain Sinkhorn at this small eps; a full LP
# solver would add a dependency for no extra accuracy at these sizes.
EXACT_OT_EPS = 1e-3

# Heatmaps are meant for small matrices; anything bigger belongs in a CSV.
HEATMAP_MAX_CELLS = 64


def format_float(x: float) -> str:
    """CSV float format: 17 significant digits, '.' decimal separator."""
    return format(float(x), ".17g")


def _write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@dataclass(frozen=True)
class SweepRecord:
    """One grid point of a regularization sweep."""

    eps: float
    transport_cost: float
    full_objective: float
    entropy: float
    iterations: int
    marginal_residual: float
    converged: bool


def epsilon_sweep(
    scene: Scene,
    weights: CostWeights | None = None,
    eps_grid: Sequence[float] = (),
    kappa2: float = DEFAULT_KAPPA2,
    tol: float = 1e-9,
    max_iter: int = 50000,
) -> list[SweepRecord]:
    """Solve the relaxed plan across a sorted ``eps`` grid.

    Repeated grid values are allowed and produce identical records.  All
    points share one cost matrix.  Non-convergence at a point is recorded
    in that record's ``converged`` field and the sweep continues.
    """
    grid = [float(e) for e in eps_grid]
    if len(grid) < 2:
        raise ValueError(f"eps grid needs at least 2 points, got {len(grid)}")
    for e in grid:
        if not math.isfinite(e) or e <= 0.0:
            raise ValueError(f"eps grid values must be finite and > 0, got {e!r}")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"eps grid must be sorted in nondecreasing order, got {grid}")
    cost = pairwise_cost_matrix(scene, weights)
    marginals = Marginals.uniform(scene.n_ground_truths, scene.n_predictions)
    records = []
    for eps in grid:
        plan = rtp_unbalanced(
            cost, marginals, eps=eps, kappa2=kappa2, tol=tol, max_iter=max_iter
        )
        diag = plan.diagnostics
        records.append(
            SweepRecord(
                eps=eps,
                transport_cost=diag.transport_cost,
                full_objective=regularized_objective(
                    plan, cost, marginals, eps=eps, kappa2=kappa2
                ),
                entropy=diag.entropy,
                iterations=diag.iterations,
                marginal_residual=diag.marginal_residual,
                converged=diag.converged,
            )
        )
    return records


def write_sweep_csv(records: Sequence[SweepRecord], path: str | Path) -> Path:
    header = [
        "eps",
        "transport_cost",
        "full_objective",
        "entropy",
        "iterations",
        "marginal_residual",
        "converged",
    ]
    rows = [
        [
            format_float(r.eps),
            format_float(r.transport_cost),
            format_float(r.full_objective),
            format_float(r.entropy),
            str(r.iterations),
            format_float(r.marginal_residual),
            str(int(r.converged)),
        ]
        for r in records
    ]
    return _write_csv(path, header, rows)


@dataclass(frozen=True)
class ComparisonRecord:
    """One matcher's result on a shared scene and cost matrix.

    ``matrix`` holds the plan (or the assignment rendered as a plan with
    each matched prediction carrying its marginal weight), with a final
    background column where mass goes unused; it feeds the heatmaps and is
    not serialized to CSV.  ``cost_hash`` is identical across the records
    of one invocation by construction and lets consumers verify it.
    """

    matcher: str
    kind: str  # "assignment", "plan", or "skipped"
    pairs: tuple[tuple[int, int], ...]
    background: tuple[int, ...]
    total_cost: float | None
    precision: float | None
    recall: float | None
    cost_hash: str
    note: str = ""
    matrix: np.ndarray | None = None


def match_quality(
    pairs: Sequence[tuple[int, int]], scene: Scene
) -> tuple[float, float] | tuple[None, None]:
    """Precision/recall of hard pairs against the generator's provenance.

    A pair is correct iff it links a prediction to the ground truth that
    spawned it.  Scenes without provenance yield ``(None, None)``.
    """
    if scene.provenance is None:
        return None, None
    correct = [(j, i) for j, i in pairs if scene.provenance[j] == i]
    precision = len(correct) / len(pairs) if pairs else 1.0
    recall = len({i for _, i in correct}) / scene.n_ground_truths
    return precision, recall


def _assignment_matrix(
    assignment: Assignment, marginals: Marginals, n_ground_truths: int
) -> np.ndarray:
    """Render a hard assignment as a plan-like matrix with a bg column."""
    m = marginals.nu.size
    out = np.zeros((m, n_ground_truths + 1))
    for j, i in assignment.pairs:
        out[j, i] = marginals.nu[j]
    for j in assignment.background:
        out[j, n_ground_truths] = marginals.nu[j]
    return out


def _plan_matrix(gamma: np.ndarray, marginals: Marginals) -> np.ndarray:
    """Append a background column holding each row's undelivered mass."""
    deficit = np.clip(marginals.nu - gamma.sum(axis=1), 0.0, None)
    if float(deficit.max()) <= 1e-9:
        return gamma.copy()
    return np.hstack([gamma, deficit[:, None]])


def compare_matchers(
    scene: Scene,
    weights: CostWeights | None = None,
    eps: float | None = None,
    eps0: float = DEFAULT_EPS0,
    kappa2: float = DEFAULT_KAPPA2,
    bg_cost: float = 1.0,
    threshold: float = 0.5,
    tol: float = 1e-9,
    max_iter: int = 50000,
) -> list[ComparisonRecord]:
    """Run all matchers on one scene and score them against provenance.

    Matchers: Hungarian on the background-augmented square matrix, a
    brute-force oracle on the same matrix when small enough (skipped with a
    note otherwise), log-domain Sinkhorn at ``eps=1e-3`` as the exact-OT
    proxy, and the relaxed plan hardened two ways (argmax and threshold).
    ``eps`` defaults to ``adaptive_epsilon(eps0, m)``.
    """
    cost = pairwise_cost_matrix(scene, weights)
    m, n = cost.shape
    cost_hash = hashlib.sha256(cost.values.tobytes()).hexdigest()
    marginals = Marginals.uniform(n, m)
    if eps is None:
        eps = adaptive_epsilon(eps0, m)

    augmented = background_augmented_cost(cost, bg_cost)
    records = []

    assign = hungarian(augmented, n_targets=n)
    precision, recall = match_quality(assign.pairs, scene)
    records.append(
        ComparisonRecord(
            matcher="hungarian",
            kind="assignment",
            pairs=assign.pairs,
            background=assign.background,
            total_cost=assign.total_cost,
            precision=precision,
            recall=recall,
            cost_hash=cost_hash,
            matrix=_assignment_matrix(assign, marginals, n),
        )
    )

    if m <= BRUTE_FORCE_MAX_SIZE:
        oracle = brute_force_assignment(augmented, n_targets=n)
        precision, recall = match_quality(oracle.pairs, scene)
        records.append(
            ComparisonRecord(
                matcher="oracle",
                kind="assignment",
                pairs=oracle.pairs,
                background=oracle.background,
                total_cost=oracle.total_cost,
                precision=precision,
                recall=recall,
                cost_hash=cost_hash,
                matrix=_assignment_matrix(oracle, marginals, n),
            )
        )
    else:
        records.append(
            ComparisonRecord(
                matcher="oracle",
                kind="skipped",
                pairs=(),
                background=(),
                total_cost=None,
                precision=None,
                recall=None,
                cost_hash=cost_hash,
                note=f"skipped: {m} predictions exceed the brute-force bound "
                f"{BRUTE_FORCE_MAX_SIZE}",
            )
        )

    exact = sinkhorn_log_domain(cost, marginals, eps=EXACT_OT_EPS, tol=tol, max_iter=max_iter)
    hard = extract_hard_matches(exact, mode="argmax_per_gt", cost=cost)
    precision, recall = match_quality(hard.pairs, scene)
    records.append(
        ComparisonRecord(
            matcher="exact_ot",
            kind="plan",
            pairs=hard.pairs,
            background=hard.background,
            total_cost=exact.diagnostics.transport_cost,
            precision=precision,
            recall=recall,
            cost_hash=cost_hash,
            matrix=_plan_matrix(exact.gamma, marginals),
        )
    )

    rtp = rtp_unbalanced(cost, marginals, eps=eps, kappa2=kappa2, tol=tol, max_iter=max_iter)
    for matcher, mode in (("rtp_argmax", "argmax_per_gt"), ("rtp_threshold", "threshold")):
        hard = extract_hard_matches(rtp, mode=mode, threshold=threshold, cost=cost)
        precision, recall = match_quality(hard.pairs, scene)
        records.append(
            ComparisonRecord(
                matcher=matcher,
                kind="plan",
                pairs=hard.pairs,
                background=hard.background,
                total_cost=rtp.diagnostics.transport_cost,
                precision=precision,
                recall=recall,
                cost_hash=cost_hash,
                matrix=_plan_matrix(rtp.gamma, marginals),
            )
        )
    return records


def write_comparison_csv(records: Sequence[ComparisonRecord], path: str | Path) -> Path:
    header = [
        "matcher",
        "kind",
        "pairs",
        "background",
        "total_cost",
        "precision",
        "recall",
        "cost_hash",
        "note",
    ]

    def opt(x: float | None) -> str:
        return "" if x is None else format_float(x)

    rows = [
        [
            r.matcher,
            r.kind,
            ";".join(f"{j}-{i}" for j, i in r.pairs),
            ";".join(str(j) for j in r.background),
            opt(r.total_cost),
            opt(r.precision),
            opt(r.recall),
            r.cost_hash,
            r.note,
        ]
        for r in records
    ]
    return _write_csv(path, header, rows)


@dataclass(frozen=True)
class AblationCell:
    """Mean hardened-match F1 of one hyperparameter combination."""

    eps0: float
    kappa2: float
    mean_f1: float
    best: bool


def ablation_grid(
    scene_set: Sequence[Scene],
    eps0_grid: Sequence[float],
    kappa2_grid: Sequence[float],
    weights: CostWeights | None = None,
    tol: float = 1e-8,
    max_iter: int = 20000,
) -> list[AblationCell]:
    """Mean argmax-hardened F1 over scenes for every (eps0, kappa2) cell.

    Cells are emitted in row-major grid order; exactly one carries
    ``best=True`` (highest mean F1, first cell on ties).
    """
    if not scene_set:
        raise ValueError("scene_set must be nonempty")
    eps0_values = [float(e) for e in eps0_grid]
    kappa2_values = [float(k) for k in kappa2_grid]
    if not eps0_values or not kappa2_values:
        raise ValueError("eps0 and kappa2 grids must be nonempty")
    for e in eps0_values:
        if not math.isfinite(e) or e <= 0.0:
            raise ValueError(f"eps0 grid values must be finite and > 0, got {e!r}")
    for k in kappa2_values:
        if not 0.0 <= k <= 1.0:
            raise ValueError(f"kappa2 grid values must lie in [0, 1], got {k!r}")

    prepared = []
    for scene in scene_set:
        cost = pairwise_cost_matrix(scene, weights)
        marginals = Marginals.uniform(scene.n_ground_truths, scene.n_predictions)
        prepared.append((scene, cost, marginals))

    scored: list[tuple[float, float, float]] = []
    for eps0 in eps0_values:
        for kappa2 in kappa2_values:
            f1_sum = 0.0
            for scene, cost, marginals in prepared:
                eps = adaptive_epsilon(eps0, scene.n_predictions)
                plan = rtp_unbalanced(
                    cost, marginals, eps=eps, kappa2=kappa2, tol=tol, max_iter=max_iter
                )
                hard = extract_hard_matches(plan, mode="argmax_per_gt")
                precision, recall = match_quality(hard.pairs, scene)
                if precision is None:
                    raise ValueError("ablation scenes must carry provenance for scoring")
                f1 = (
                    2.0 * precision * recall / (precision + recall)
                    if precision + recall > 0.0
                    else 0.0
                )
                f1_sum += f1
            scored.append((eps0, kappa2, f1_sum / len(prepared)))

    best_index = max(range(len(scored)), key=lambda idx: scored[idx][2])
    return [
        AblationCell(eps0=e, kappa2=k, mean_f1=f1, best=(idx == best_index))
        for idx, (e, k, f1) in enumerate(scored)
    ]


def write_ablation_csv(cells: Sequence[AblationCell], path: str | Path) -> Path:
    header = ["eps0", "kappa2", "mean_f1", "best"]
    rows = [
        [format_float(c.eps0), format_float(c.kappa2), format_float(c.mean_f1), str(int(c.best))]
        for c in cells
    ]
    return _write_csv(path, header, rows)


@dataclass(frozen=True)
class TimingRecord:
    """Median per-iteration wall time of the scaling kernel at one size."""

    m: int
    n: int
    backend: str
    seconds_per_iteration: float


def timing_benchmark(
    size_grid: Sequence[int],
    iters: int = 10,
    repeats: int = 3,
    backend: str = "auto",
    seed: int = 0,
) -> list[TimingRecord]:
    """Time the balanced scaling kernel on random square problems.

    Each size runs ``iters`` full iterations (convergence disabled),
    repeated ``repeats`` times after a warm-up call; the median per-
    iteration time is reported.
    """
    sizes = [int(s) for s in size_grid]
    if not sizes:
        raise ValueError("size grid must be nonempty")
    for s in sizes:
        if not 1 <= s <= 4096:
            raise ValueError(f"sizes must lie in [1, 4096], got {s}")
    if iters < 1 or repeats < 1:
        raise ValueError("iters and repeats must be >= 1")
    name, impl = resolve_backend(backend)
    records = []
    for size in sizes:
        rng = np.random.default_rng(seed)
        K = np.ascontiguousarray(np.exp(-rng.uniform(0.0, 1.0, (size, size)) / 0.5))
        target = np.full(size, 1.0 / size)
        impl.balanced_scaling(K, target, target, 0.0, 2)  # warm-up
        samples = []
        for _ in range(repeats):
            start = time.perf_counter()
            impl.balanced_scaling(K, target, target, 0.0, iters)
            samples.append((time.perf_counter() - start) / iters)
        records.append(
            TimingRecord(
                m=size,
                n=size,
                backend=name,
                seconds_per_iteration=statistics.median(samples),
            )
        )
    return records


def fit_loglog_slope(records: Sequence[TimingRecord]) -> float:
    """Least-squares slope of log(seconds/iter) against log(m*n)."""
    if len({(r.m, r.n) for r in records}) < 2:
        raise ValueError("need at least two distinct sizes to fit a slope")
    x = np.log([float(r.m) * float(r.n) for r in records])
    y = np.log([r.seconds_per_iteration for r in records])
    return float(np.polyfit(x, y, 1)[0])


def write_timing_csv(records: Sequence[TimingRecord], path: str | Path) -> Path:
    header = ["m", "n", "backend", "seconds_per_iteration"]
    rows = [
        [str(r.m), str(r.n), r.backend, format_float(r.seconds_per_iteration)]
        for r in records
    ]
    return _write_csv(path, header, rows)


def giou_similarity_matrix(scene: Scene) -> np.ndarray:
    """Rescaled-GIoU similarity (1 = identical boxes) of every prediction
    against every ground truth; the complement view of the cost matrix."""
    return np.array(
        [
            [giou_rescaled(pred.box, gt.box) for gt in scene.ground_truths]
            for pred in scene.predictions
        ]
    )


def _heatmap_color(t: float) -> str:
    """Linear white-to-blue ramp for a normalized value in [0, 1]."""
    r = round(255 + (54 - 255) * t)
    g = round(255 + (96 - 255) * t)
    b = round(255 + (192 - 255) * t)
    return f"rgb({r},{g},{b})"


def emit_heatmap(
    matrix: np.ndarray | CostMatrix,
    path: str | Path,
    row_labels: Sequence[str] | None = None,
    col_labels: Sequence[str] | None = None,
    title: str | None = None,
) -> Path:
    """Write a matrix as a labeled SVG grid heatmap.

    Rows default to prediction labels ``p0..``, columns to ground-truth
    labels ``g0..`` (pass ``bg`` yourself for a background column).  Every
    cell carries its numeric value.  Matrices beyond 64x64 are rejected;
    use a CSV for those.
    """
    values = matrix.values if isinstance(matrix, CostMatrix) else np.asarray(matrix, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise ValueError(f"heatmap needs a nonempty 2-D matrix, got shape {values.shape}")
    m, n = values.shape
    if m > HEATMAP_MAX_CELLS or n > HEATMAP_MAX_CELLS:
        raise ValueError(
            f"matrix {m}x{n} exceeds the heatmap limit of "
            f"{HEATMAP_MAX_CELLS}x{HEATMAP_MAX_CELLS}; write a CSV instead"
        )
    if not np.all(np.isfinite(values)):
        raise ValueError("heatmap values must be finite")
    if str(path) == "":
        raise ValueError("heatmap path must be nonempty")
    if row_labels is None:
        row_labels = [f"p{j}" for j in range(m)]
    if col_labels is None:
        col_labels = [f"g{i}" for i in range(n)]
    if len(row_labels) != m or len(col_labels) != n:
        raise ValueError("label counts must match the matrix shape")

    cell_w, cell_h = 64, 32
    left, top = 56, 48 if title else 28
    width = left + n * cell_w + 8
    height = top + m * cell_h + 8
    lo = float(values.min())
    hi = float(values.max())
    span = hi - lo

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{left}" y="16" font-size="13">{title}</text>')
    for i, label in enumerate(col_labels):
        x = left + i * cell_w + cell_w // 2
        parts.append(f'<text x="{x}" y="{top - 8}" text-anchor="middle">{label}</text>')
    for j, label in enumerate(row_labels):
        y = top + j * cell_h + cell_h // 2 + 4
        parts.append(f'<text x="{left - 8}" y="{y}" text-anchor="end">{label}</text>')
    for j in range(m):
        for i in range(n):
            v = float(values[j, i])
            t = (v - lo) / span if span > 0.0 else 0.0
            x = left + i * cell_w
            y = top + j * cell_h
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" '
                f'fill="{_heatmap_color(t)}" stroke="#888"/>'
            )
            text_fill = "white" if t > 0.6 else "black"
            parts.append(
                f'<text x="{x + cell_w // 2}" y="{y + cell_h // 2 + 4}" '
                f'text-anchor="middle" fill="{text_fill}">{v:.3g}</text>'
            )
    parts.append("</svg>")
    out = Path(path)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out


def write_plan_csv(
    matrix: np.ndarray,
    path: str | Path,
    col_labels: Sequence[str] | None = None,
) -> Path:
    """Write a plan (or plan-like) matrix with prediction rows."""
    values = np.asarray(matrix, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"plan must be 2-D, got shape {values.shape}")
    m, n = values.shape
    if col_labels is None:
        col_labels = [f"g{i}" for i in range(n)]
    if len(col_labels) != n:
        raise ValueError("label count must match the plan width")
    header = ["prediction", *col_labels]
    rows = [
        [f"p{j}", *(format_float(v) for v in values[j])]
        for j in range(m)
    ]
    return _write_csv(path, header, rows)


def write_assignment_csv(
    assignment: Assignment, path: str | Path, n_ground_truths: int
) -> Path:
    """Write a hard assignment: one row per prediction, matched target or bg."""
    matched = dict(assignment.pairs)
    rows = []
    for j in sorted({*matched, *assignment.background}):
        target = f"g{matched[j]}" if j in matched else "bg"
        rows.append([f"p{j}", target])
    return _write_csv(path, ["prediction", "assignment"], rows)
