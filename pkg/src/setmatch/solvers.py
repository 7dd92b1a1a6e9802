"""Matchers: one-to-one assignment and entropy-regularized transport plans.

Conventions, fixed across the package: a cost matrix has shape ``(m, n)``
with predictions along rows and ground truths along columns.  ``nu`` is the
prediction marginal (length ``m``), ``mu`` the ground-truth marginal
(length ``n``); both are strictly positive and sum to one.

Three families of matchers:

* :func:`hungarian` / :func:`brute_force_assignment` -- exact one-to-one
  assignment on a square (possibly background-augmented) cost matrix.
* :func:`sinkhorn_balanced` / :func:`sinkhorn_log_domain` -- entropic
  transport with both marginals enforced exactly; the log-domain form
  trades speed for stability at small ``eps``.
* :func:`rtp_unbalanced` -- relaxed transport plans where the marginal
  constraints become KL penalties with complementary weights ``kappa1``
  (rows / predictions) and ``kappa2`` (columns / ground truths), so mass
  can be created or destroyed where the geometry disagrees with the
  marginals.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Literal

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._backend import resolve_backend
from .cost import PROB_FLOOR, CostMatrix

if TYPE_CHECKING:  # pragma: no cover
    from .scenes import Scene

# Marginal vectors must sum to one within this tolerance, and the two
# KL weights of rtp_unbalanced must sum to one within it as well.
MARGINAL_SUM_TOL = 1e-9

# Defaults for the relaxed-plan solver; kappa2 deliberately small so
# ground-truth coverage stays soft but strongly encouraged.
DEFAULT_KAPPA2 = 0.01
DEFAULT_EPS0 = 0.2

# Brute force enumerates n! permutations; beyond this it is pointless.
BRUTE_FORCE_MAX_SIZE = 8


class SinkhornNumericalError(RuntimeError):
    """Plain-domain scaling failed numerically (underflow or overflow)."""


@dataclass(frozen=True)
class Marginals:
    """Target marginals of a transport plan.

    ``mu`` weights the ground truths (columns, length ``n``), ``nu`` the
    predictions (rows, length ``m``).  Both must be strictly positive and
    sum to one.
    """

    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self) -> None:
        for name in ("mu", "nu"):
            vec = np.array(getattr(self, name), dtype=np.float64)
            if vec.ndim != 1 or vec.size == 0:
                raise ValueError(f"Marginals.{name} must be a nonempty 1-D vector")
            if not np.all(np.isfinite(vec)) or np.any(vec <= 0.0):
                raise ValueError(f"Marginals.{name} must be finite and strictly positive")
            if abs(float(vec.sum()) - 1.0) > MARGINAL_SUM_TOL:
                raise ValueError(
                    f"Marginals.{name} must sum to 1 within {MARGINAL_SUM_TOL}, "
                    f"got {float(vec.sum())!r}"
                )
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)

    @property
    def n_ground_truths(self) -> int:
        return self.mu.size

    @property
    def n_predictions(self) -> int:
        return self.nu.size

    @classmethod
    def uniform(cls, n_ground_truths: int, n_predictions: int) -> "Marginals":
        """Equal weight on every ground truth and every prediction."""
        if n_ground_truths < 1 or n_predictions < 1:
            raise ValueError("marginals need at least one entry on each side")
        return cls(
            mu=np.full(n_ground_truths, 1.0 / n_ground_truths),
            nu=np.full(n_predictions, 1.0 / n_predictions),
        )

    @classmethod
    def from_confidence(cls, scene: "Scene") -> "Marginals":
        """Uniform ground-truth weights; prediction weights proportional to
        each prediction's top real-class probability (floored so weights
        stay positive)."""
        conf = np.array(
            [max(p.class_probs[: scene.num_classes]) for p in scene.predictions],
            dtype=np.float64,
        )
        conf = np.maximum(conf, PROB_FLOOR)
        return cls(
            mu=np.full(scene.n_ground_truths, 1.0 / scene.n_ground_truths),
            nu=conf / conf.sum(),
        )


@dataclass(frozen=True)
class SolverDiagnostics:
    """Facts about one solver run.

    ``marginal_residual`` is the worst marginal violation for solvers that
    enforce marginals, and the scaled fixed-point update norm for the
    damped relaxed solver (whose marginals are intentionally soft).
    """

    iterations: int
    marginal_residual: float
    transport_cost: float
    entropy: float
    converged: bool


@dataclass(frozen=True)
class TransportPlan:
    """A soft matching: nonnegative mass ``gamma[j, i]`` from prediction
    ``j`` to ground truth ``i``, plus the run's diagnostics."""

    gamma: np.ndarray
    eps: float
    method: str
    diagnostics: SolverDiagnostics

    def __post_init__(self) -> None:
        gamma = np.asarray(self.gamma, dtype=np.float64)
        if gamma.ndim != 2:
            raise ValueError(f"TransportPlan.gamma must be 2-D, got shape {gamma.shape}")
        if not np.all(np.isfinite(gamma)) or np.any(gamma < 0.0):
            raise ValueError("TransportPlan.gamma must be finite and nonnegative")
        gamma = gamma.copy()
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)

    @property
    def shape(self) -> tuple[int, int]:
        return self.gamma.shape

    def row_masses(self) -> np.ndarray:
        """Mass actually placed on each prediction."""
        return self.gamma.sum(axis=1)

    def column_masses(self) -> np.ndarray:
        """Mass actually received by each ground truth."""
        return self.gamma.sum(axis=0)


@dataclass(frozen=True)
class Assignment:
    """A hard matching.

    ``pairs`` holds ``(prediction, ground_truth)`` index pairs;
    ``background`` the predictions left unmatched.  ``total_cost`` is the
    objective value of the assignment that produced the pairs (for square
    solvers this includes background-column entries) or ``None`` when no
    cost was supplied.  ``one_to_one`` records whether the pairs use every
    prediction and ground truth at most once.
    """

    pairs: tuple[tuple[int, int], ...]
    background: tuple[int, ...]
    total_cost: float | None
    one_to_one: bool = True


def _cost_array(cost: CostMatrix | np.ndarray) -> np.ndarray:
    values = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise ValueError(f"cost matrix must be a nonempty 2-D array, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("cost matrix entries must be finite")
    return values


def _square_cost(cost: CostMatrix | np.ndarray) -> np.ndarray:
    values = _cost_array(cost)
    m, n = values.shape
    if m != n:
        raise ValueError(
            f"assignment needs a square cost matrix, got {m}x{n}; "
            "pad with background_augmented_cost first"
        )
    return values


def _fold_total(values: np.ndarray, pairs: Iterable[tuple[int, int]]) -> float:
    """Sum assignment entries in fixed (row-sorted) order.

    Both exact solvers report totals through this helper so that equal
    assignments produce bit-identical totals.
    """
    total = 0.0
    for j, i in sorted(pairs):
        total += float(values[j, i])
    return total


def hungarian(cost: CostMatrix | np.ndarray, n_targets: int | None = None) -> Assignment:
    """Minimum-cost perfect matching on a square cost matrix.

    ``n_targets`` marks how many leading columns are real ground truths;
    any column past that is a background column and rows assigned there are
    reported as background rather than as pairs.  Defaults to all columns
    real.
    """
    values = _square_cost(cost)
    n = values.shape[0]
    if n_targets is None:
        n_targets = n
    if not 0 <= n_targets <= n:
        raise ValueError(f"n_targets must lie in [0, {n}], got {n_targets}")
    rows, cols = linear_sum_assignment(values)
    matching = list(zip((int(j) for j in rows), (int(i) for i in cols)))
    pairs = tuple((j, i) for j, i in matching if i < n_targets)
    background = tuple(j for j, i in matching if i >= n_targets)
    return Assignment(
        pairs=pairs,
        background=background,
        total_cost=_fold_total(values, matching),
        one_to_one=True,
    )


def brute_force_assignment(
    cost: CostMatrix | np.ndarray, n_targets: int | None = None
) -> Assignment:
    """Exhaustive minimum-cost matching; oracle for :func:`hungarian`.

    Enumerates all permutations (so ``n <= 8``) and returns the
    lexicographically smallest optimal one.
    """
    values = _square_cost(cost)
    n = values.shape[0]
    if n > BRUTE_FORCE_MAX_SIZE:
        raise ValueError(
            f"brute force enumerates n! permutations; n={n} exceeds the cap of "
            f"{BRUTE_FORCE_MAX_SIZE}"
        )
    if n_targets is None:
        n_targets = n
    if not 0 <= n_targets <= n:
        raise ValueError(f"n_targets must lie in [0, {n}], got {n_targets}")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    totals = values[np.arange(n)[None, :], perms].sum(axis=1)
    best = perms[int(np.argmin(totals))]  # first minimum: lexicographically smallest
    matching = [(j, int(best[j])) for j in range(n)]
    pairs = tuple((j, i) for j, i in matching if i < n_targets)
    background = tuple(j for j, i in matching if i >= n_targets)
    return Assignment(
        pairs=pairs,
        background=background,
        total_cost=_fold_total(values, matching),
        one_to_one=True,
    )


def _check_transport_inputs(
    values: np.ndarray, marginals: Marginals, eps: float, tol: float, max_iter: int
) -> None:
    m, n = values.shape
    if marginals.nu.size != m or marginals.mu.size != n:
        raise ValueError(
            f"marginals (nu: {marginals.nu.size}, mu: {marginals.mu.size}) do not match "
            f"cost matrix shape {m}x{n}"
        )
    if not math.isfinite(eps) or eps <= 0.0:
        raise ValueError(f"eps must be finite and > 0, got {eps!r}")
    if not math.isfinite(tol) or tol < 0.0:
        raise ValueError(f"tol must be finite and >= 0, got {tol!r}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")


def _marginal_residual(gamma: np.ndarray, marginals: Marginals) -> float:
    row_viol = float(np.max(np.abs(gamma.sum(axis=1) - marginals.nu)))
    col_viol = float(np.max(np.abs(gamma.sum(axis=0) - marginals.mu)))
    return max(row_viol, col_viol)


def _finish_plan(
    gamma: np.ndarray,
    values: np.ndarray,
    eps: float,
    method: str,
    iterations: int,
    residual: float,
    converged: bool,
) -> TransportPlan:
    diag = SolverDiagnostics(
        iterations=iterations,
        marginal_residual=residual,
        transport_cost=float(np.sum(values * gamma)),
        entropy=entropy(gamma),
        converged=converged,
    )
    return TransportPlan(gamma=gamma, eps=eps, method=method, diagnostics=diag)


def sinkhorn_balanced(
    cost: CostMatrix | np.ndarray,
    marginals: Marginals,
    eps: float,
    tol: float = 1e-6,
    max_iter: int = 10000,
    backend: str = "auto",
) -> TransportPlan:
    """Entropic transport by plain-domain diagonal scaling.

    Fast for moderate ``eps``, but the kernel ``exp(-C/eps)`` underflows
    when ``eps`` is small relative to the costs; in that regime use
    :func:`sinkhorn_log_domain`.
    """
    values = _cost_array(cost)
    _check_transport_inputs(values, marginals, eps, tol, max_iter)
    K = np.ascontiguousarray(np.exp(-values / eps))
    if float(K.max()) == 0.0 or np.any(K.max(axis=1) == 0.0) or np.any(K.max(axis=0) == 0.0):
        raise SinkhornNumericalError(
            f"exp(-C/eps) underflowed to zero across an entire row or column at "
            f"eps={eps}; use sinkhorn_log_domain instead"
        )
    _, impl = resolve_backend(backend)
    try:
        u, v, iterations, _, kernel_ok = impl.balanced_scaling(
            K,
            np.ascontiguousarray(marginals.nu),
            np.ascontiguousarray(marginals.mu),
            float(tol),
            int(max_iter),
        )
    except FloatingPointError as exc:
        raise SinkhornNumericalError(
            f"plain-domain scaling overflowed at eps={eps}; use sinkhorn_log_domain instead"
        ) from exc
    gamma = np.asarray(u)[:, None] * K * np.asarray(v)[None, :]
    residual = _marginal_residual(gamma, marginals)
    return _finish_plan(
        gamma, values, eps, "sinkhorn", iterations, residual, residual <= tol
    )


def sinkhorn_log_domain(
    cost: CostMatrix | np.ndarray,
    marginals: Marginals,
    eps: float,
    tol: float = 1e-6,
    max_iter: int = 10000,
    backend: str = "auto",
) -> TransportPlan:
    """Entropic transport on dual potentials with log-sum-exp reductions.

    Produces the same plan as :func:`sinkhorn_balanced` wherever both
    converge, and stays stable for arbitrarily small ``eps``.
    """
    values = _cost_array(cost)
    _check_transport_inputs(values, marginals, eps, tol, max_iter)
    _, impl = resolve_backend(backend)
    f, g, iterations, _, _ = impl.log_scaling(
        np.ascontiguousarray(values),
        np.log(marginals.nu),
        np.log(marginals.mu),
        float(eps),
        1.0,
        1.0,
        float(tol),
        int(max_iter),
    )
    gamma = np.exp((np.asarray(f)[:, None] + np.asarray(g)[None, :] - values) / eps)
    residual = _marginal_residual(gamma, marginals)
    return _finish_plan(
        gamma, values, eps, "sinkhorn_log", iterations, residual, residual <= tol
    )


def rtp_unbalanced(
    cost: CostMatrix | np.ndarray,
    marginals: Marginals,
    eps: float,
    kappa1: float | None = None,
    kappa2: float = DEFAULT_KAPPA2,
    tol: float = 1e-6,
    max_iter: int = 10000,
    variant: Literal["damped", "literal"] = "damped",
    backend: str = "auto",
) -> TransportPlan:
    """Relaxed transport plan with KL-penalized marginals.

    The marginal constraints are replaced by KL penalties weighted by
    ``kappa1`` (predictions) and ``kappa2`` (ground truths); the weights
    are complementary, ``kappa1 + kappa2 == 1``, and ``kappa1`` defaults to
    the complement of ``kappa2``.  Small ``kappa2`` lets ground truths
    shed or gain mass cheaply, which is what absorbs duplicate detections.

    ``variant="damped"`` runs log-domain scaling with update damping
    ``kappa / (kappa + eps)`` on each side until the fixed point; this is
    the principled solver and the default.  ``variant="literal"`` instead
    reproduces a simpler published recipe: solve the balanced problem, then
    rescale columns to ``mu`` and rows to ``nu`` once, in that order.  The
    kappa weights are validated but do not influence the literal variant.
    """
    values = _cost_array(cost)
    if kappa1 is None:
        kappa1 = 1.0 - kappa2
    if not (math.isfinite(kappa1) and math.isfinite(kappa2)) or kappa1 < 0.0 or kappa2 < 0.0:
        raise ValueError(f"kappa weights must be finite and >= 0, got {kappa1!r}, {kappa2!r}")
    if abs(kappa1 + kappa2 - 1.0) > MARGINAL_SUM_TOL:
        raise ValueError(
            f"kappa weights must be complementary (kappa1 + kappa2 == 1), "
            f"got {kappa1!r} + {kappa2!r}"
        )
    _check_transport_inputs(values, marginals, eps, tol, max_iter)
    if variant not in ("damped", "literal"):
        raise ValueError(f"variant must be 'damped' or 'literal', got {variant!r}")
    _, impl = resolve_backend(backend)
    C = np.ascontiguousarray(values)

    if variant == "damped":
        f, g, iterations, residual, converged = impl.log_scaling(
            C,
            np.log(marginals.nu),
            np.log(marginals.mu),
            float(eps),
            kappa1 / (kappa1 + eps),
            kappa2 / (kappa2 + eps),
            float(tol),
            int(max_iter),
        )
        gamma = np.exp((np.asarray(f)[:, None] + np.asarray(g)[None, :] - values) / eps)
        return _finish_plan(
            gamma, values, eps, "rtp_damped", iterations, float(residual), bool(converged)
        )

    # Literal variant: balanced solve, then one column and one row rescale.
    # The balanced phase runs tighter than the requested tolerance so the
    # rescalings cannot push the final marginals past it.
    inner_tol = tol * float(np.min(marginals.nu)) / 4.0
    f, g, iterations, _, _ = impl.log_scaling(
        C,
        np.log(marginals.nu),
        np.log(marginals.mu),
        float(eps),
        1.0,
        1.0,
        float(inner_tol),
        int(max_iter),
    )
    gamma = np.exp((np.asarray(f)[:, None] + np.asarray(g)[None, :] - values) / eps)
    gamma = gamma * (marginals.mu / gamma.sum(axis=0))[None, :]
    gamma = gamma * (marginals.nu / gamma.sum(axis=1))[:, None]
    residual = _marginal_residual(gamma, marginals)
    return _finish_plan(
        gamma, values, eps, "rtp_literal", iterations, residual, residual <= tol
    )


def entropy(plan: TransportPlan | np.ndarray) -> float:
    """Shannon entropy ``-sum(gamma * log(gamma))`` with ``0 log 0 == 0``."""
    gamma = plan.gamma if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    if np.any(gamma < 0.0):
        raise ValueError("entropy is defined for nonnegative mass only")
    positive = gamma[gamma > 0.0]
    return float(-np.sum(positive * np.log(positive)))


def transport_cost(plan: TransportPlan | np.ndarray, cost: CostMatrix | np.ndarray) -> float:
    """Linear transport objective ``<C, gamma>``."""
    gamma = plan.gamma if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    values = _cost_array(cost)
    if gamma.shape != values.shape:
        raise ValueError(f"plan shape {gamma.shape} does not match cost shape {values.shape}")
    return float(np.sum(values * gamma))


def _generalized_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence extended to unnormalized measures:
    ``sum(p log(p/q) - p + q)``; zero iff ``p == q``."""
    positive = p > 0.0
    return float(
        np.sum(p[positive] * np.log(p[positive] / q[positive])) - p.sum() + q.sum()
    )


def regularized_objective(
    plan: TransportPlan | np.ndarray,
    cost: CostMatrix | np.ndarray,
    marginals: Marginals,
    eps: float,
    kappa1: float | None = None,
    kappa2: float = DEFAULT_KAPPA2,
) -> float:
    """Full relaxed objective of a plan.

    ``<C, gamma> + kappa1 * KL(rows || nu) + kappa2 * KL(cols || mu)
    - eps * H(gamma)``, with KL in its unnormalized-measure form and the
    entropy likewise extended with the total mass
    (``H(gamma) + sum(gamma)``), so plans of any total mass are comparable.
    This is the convex functional whose stationary point the damped
    relaxed solver computes; lower is better.
    """
    gamma = plan.gamma if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    if kappa1 is None:
        kappa1 = 1.0 - kappa2
    values = _cost_array(cost)
    if gamma.shape != values.shape:
        raise ValueError(f"plan shape {gamma.shape} does not match cost shape {values.shape}")
    if marginals.nu.size != gamma.shape[0] or marginals.mu.size != gamma.shape[1]:
        raise ValueError("marginals do not match plan shape")
    rows = gamma.sum(axis=1)
    cols = gamma.sum(axis=0)
    generalized_entropy = entropy(gamma) + float(gamma.sum())
    return (
        float(np.sum(values * gamma))
        + kappa1 * _generalized_kl(rows, marginals.nu)
        + kappa2 * _generalized_kl(cols, marginals.mu)
        - eps * generalized_entropy
    )


def adaptive_epsilon(eps0: float, m: int) -> float:
    """Problem-size-adapted regularization ``eps0 / ln(m)``.

    Larger prediction sets get proportionally less smoothing, keeping plan
    sharpness roughly comparable across sizes.  For ``m < 3`` the natural
    log would inflate (or zero out) the value, so ``eps0`` is returned
    unchanged.
    """
    if not math.isfinite(eps0) or eps0 <= 0.0:
        raise ValueError(f"eps0 must be finite and > 0, got {eps0!r}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if m < 3:
        return eps0
    return eps0 / math.log(m)


def extract_hard_matches(
    plan: TransportPlan | np.ndarray,
    mode: Literal["argmax_per_gt", "threshold"] = "argmax_per_gt",
    threshold: float = 0.5,
    cost: CostMatrix | np.ndarray | None = None,
) -> Assignment:
    """Harden a soft plan into explicit matches.

    Each prediction's row is first normalized to shares (fraction of the
    prediction's surviving mass sent to each ground truth); predictions
    with zero mass go straight to background.

    ``argmax_per_gt`` matches each ground truth with its largest-share
    prediction, resolving conflicts greedily in favor of larger shares
    (ties by lower ground-truth index, then lower prediction index); the
    result is one-to-one.  ``threshold`` keeps every (prediction, ground
    truth) pair whose share is at least ``threshold``; that may give a
    ground truth several predictions, and ``one_to_one`` reports whether it
    happened to stay unique.

    ``total_cost`` sums the supplied cost over the returned pairs, or is
    ``None`` when no cost is given.
    """
    gamma = plan.gamma if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    if gamma.ndim != 2:
        raise ValueError(f"plan must be 2-D, got shape {gamma.shape}")
    if np.any(gamma < 0.0) or not np.all(np.isfinite(gamma)):
        raise ValueError("plan entries must be finite and nonnegative")
    m, n = gamma.shape
    row_mass = gamma.sum(axis=1)
    shares = np.zeros_like(gamma)
    alive = row_mass > 0.0
    shares[alive] = gamma[alive] / row_mass[alive, None]

    if mode == "argmax_per_gt":
        claims = sorted(
            ((float(shares[j, i]), j, i) for j in range(m) for i in range(n) if shares[j, i] > 0.0),
            key=lambda c: (-c[0], c[2], c[1]),
        )
        gt_taken = [False] * n
        pred_taken = [False] * m
        pairs = []
        for share, j, i in claims:
            if not gt_taken[i] and not pred_taken[j]:
                gt_taken[i] = True
                pred_taken[j] = True
                pairs.append((j, i))
        pairs.sort()
        one_to_one = True
    elif mode == "threshold":
        if not (0.0 < threshold <= 1.0):
            raise ValueError(f"threshold must lie in (0, 1], got {threshold!r}")
        pairs = sorted((j, i) for j in range(m) for i in range(n) if shares[j, i] >= threshold)
        matched_gts = [i for _, i in pairs]
        one_to_one = len(set(matched_gts)) == len(matched_gts)
    else:
        raise ValueError(f"mode must be 'argmax_per_gt' or 'threshold', got {mode!r}")

    matched_preds = {j for j, _ in pairs}
    background = tuple(j for j in range(m) if j not in matched_preds)
    total = None
    if cost is not None:
        values = _cost_array(cost)
        if values.shape != gamma.shape:
            raise ValueError(f"cost shape {values.shape} does not match plan shape {gamma.shape}")
        total = _fold_total(values, pairs)
    return Assignment(
        pairs=tuple(pairs), background=background, total_cost=total, one_to_one=one_to_one
    )
