"""Alternating descent for constrained latent max-margin clustering.

One alternation solves the discrete assignment under the current weights,
then lowers the continuous objective by a weight update. The weight update
handles the non-convexity (the latent max inside the assigned-cluster score)
by repeatedly anchoring each sample's assigned-cluster variant at its
current argmax and minimizing the resulting convex hinge problem with a
projected subgradient method; the true objective is tracked throughout, so
the update never returns weights worse than its warm start.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assignment import (
    BalanceBounds,
    ConstraintSet,
    InstanceTooLargeError,
    assignment_cost,
    solve_exact,
    solve_heuristic,
    validate,
)
from .model import Assignment, ModelParams, Sample, objective as full_objective, score_matrix

logger = logging.getLogger(__name__)

__all__ = [
    "SolveSpec",
    "SolveReport",
    "bounds_from_fractions",
    "init_params",
    "update_weights",
    "alternate",
]

# Instances with at most this many enumeration states use the exact
# assignment solver inside the alternation loop.
AUTO_EXACT_STATES = 200_000


@dataclass(frozen=True)
class SolveSpec:
    """Everything one alternating-descent run needs to know."""

    k: int
    lam: float
    bounds_fractions: tuple[float, float] = (0.9, 1.1)
    max_outer_iters: int = 50
    outer_tol: float = 1e-4
    inner_max_iters: int = 500
    inner_tol: float = 1e-6
    seed: int = 0
    assignment_mode: str = "auto"  # auto | exact | heuristic

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"need at least 2 clusters, got k={self.k}")
        if not (self.lam > 0):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.outer_tol <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.assignment_mode not in ("auto", "exact", "heuristic"):
            raise ValueError(f"unknown assignment_mode {self.assignment_mode!r}")


@dataclass
class SolveReport:
    """Audit trail of one alternating-descent run."""

    final_params: ModelParams
    final_assignment: Assignment
    objective_trace: list[float]
    slack_total: float
    outer_iters: int
    wall_time: float
    converged: bool
    initial_objective: float
    bounds: BalanceBounds = field(default=BalanceBounds(0, 1 << 30))


def bounds_from_fractions(n: int, k: int, fractions: tuple[float, float]) -> BalanceBounds:
    """Turn average-cluster-size fractions into integer size bounds.

    ``L = floor(f_L * N / K)``, ``U = ceil(f_U * N / K)``, nudged toward
    N/K when rounding would make the instance infeasible.
    """
    f_lo, f_hi = fractions
    if not (0 <= f_lo <= f_hi):
        raise ValueError(f"invalid bounds fractions {fractions}")
    lower = math.floor(f_lo * n / k)
    upper = math.ceil(f_hi * n / k)
    if k * lower > n:
        adjusted = n // k
        logger.info("lower bound %d infeasible for N=%d, K=%d; using %d", lower, n, k, adjusted)
        lower = adjusted
    if k * upper < n:
        adjusted = math.ceil(n / k)
        logger.info("upper bound %d infeasible for N=%d, K=%d; using %d", upper, n, k, adjusted)
        upper = adjusted
    return BalanceBounds(lower, upper)


def init_params(d: int, k: int, lam: float = 1.0) -> ModelParams:
    """All-ones weight vectors: the unsupervised starting point."""
    if d < 1 or k < 1:
        raise ValueError(f"need d >= 1 and k >= 1, got d={d}, k={k}")
    return ModelParams(weights=np.ones((k, d)), lam=lam)


class _Batch:
    """Padded variant tensor for vectorized scoring during weight updates."""

    def __init__(self, samples: list[Sample]):
        self.n = len(samples)
        self.d = samples[0].dimension if samples else 0
        self.v_max = max((len(s.variants) for s in samples), default=1)
        self.phi = np.zeros((self.n, self.v_max, self.d))
        self.mask = np.zeros((self.n, self.v_max), dtype=bool)
        for i, s in enumerate(samples):
            v = len(s.variants)
            self.phi[i, :v] = s.variant_matrix
            self.mask[i, :v] = True

    def scores(self, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Latent-max scores (N, K) and argmax variant indices (N, K)."""
        raw = np.einsum("nvd,kd->nvk", self.phi, weights)
        raw[~self.mask] = -np.inf
        h = np.argmax(raw, axis=1)  # (N, K)
        s = np.take_along_axis(raw, h[:, None, :], axis=1)[:, 0, :]
        return s, h


def _fixed_assignment_objective(
    batch: _Batch, assigned: np.ndarray, weights: np.ndarray, lam: float
) -> float:
    k = weights.shape[0]
    reg = 0.5 * lam * float(np.sum(weights * weights))
    if batch.n == 0:
        return reg
    s, _ = batch.scores(weights)
    rows = np.arange(batch.n)
    margins = 1.0 - s[rows, assigned][:, None] + s
    np.clip(margins, 0.0, None, out=margins)
    margins[rows, assigned] = 0.0
    return reg + float(margins.sum()) / k


def _anchored_value_grad(
    batch: _Batch,
    assigned: np.ndarray,
    anchors: np.ndarray,
    weights: np.ndarray,
    lam: float,
) -> tuple[float, np.ndarray]:
    """Value and subgradient of the convex anchored objective.

    The assigned-cluster score is linearized at the anchor variants; rival
    scores keep their inner latent max (still convex).
    """
    k = weights.shape[0]
    rows = np.arange(batch.n)
    s, h = batch.scores(weights)
    s_assigned = np.einsum("nd,nd->n", anchors, weights[assigned])
    margins = 1.0 - s_assigned[:, None] + s
    margins[rows, assigned] = 0.0
    active = margins > 0.0
    value = 0.5 * lam * float(np.sum(weights * weights)) + float(margins[active].sum()) / k

    grad = lam * weights.copy()
    n_active = active.sum(axis=1)  # hinge count per sample
    np.add.at(grad, assigned, -anchors * n_active[:, None] / k)
    for t in range(k):
        hit = active[:, t]
        if np.any(hit):
            rivals = batch.phi[rows[hit], h[hit, t]]  # (n_hit, D)
            grad[t] += rivals.sum(axis=0) / k
    return value, grad


def _solve_anchored(
    batch: _Batch,
    assigned: np.ndarray,
    anchors: np.ndarray,
    w0: np.ndarray,
    lam: float,
    max_iters: int,
    tol: float,
) -> np.ndarray:
    """Projected subgradient descent with diminishing steps and best-iterate
    tracking on the anchored convex objective."""
    k = w0.shape[0]
    # The optimum cannot beat the all-zero slack bound, so it lives in this ball.
    zero_value = batch.n * (k - 1) / k if batch.n else 0.0
    radius = math.sqrt(2.0 * max(zero_value, 1.0) / lam)

    w = w0.copy()
    best_val, g0 = _anchored_value_grad(batch, assigned, anchors, w0, lam)
    best_w = w0.copy()
    g0_norm = float(np.linalg.norm(g0))
    eta0 = radius / g0_norm if g0_norm > 1e-12 else 1.0

    stall = 0
    backoffs = 0
    grad = g0
    for it in range(max_iters):
        w = w - (eta0 / (1.0 + it)) * grad
        norm = float(np.linalg.norm(w))
        if norm > radius:
            w *= radius / norm
        val, grad = _anchored_value_grad(batch, assigned, anchors, w, lam)
        if not np.isfinite(val):
            raise FloatingPointError("weight update produced a non-finite objective")
        if val < best_val - tol * (1.0 + abs(best_val)):
            best_val, best_w = val, w.copy()
            stall = 0
        elif val < best_val:
            best_val, best_w = val, w.copy()
            stall += 1
        else:
            stall += 1
        if stall > 25:
            backoffs += 1
            if backoffs > 3:
                break
            eta0 *= 0.25
            w = best_w.copy()
            _, grad = _anchored_value_grad(batch, assigned, anchors, w, lam)
            stall = 0
    return best_w


def update_weights(
    samples: list[Sample],
    assignment: Assignment,
    spec: SolveSpec,
    warm: ModelParams,
) -> ModelParams:
    """Lower the fixed-assignment objective over W, warm-started.

    Alternates anchoring the assigned-cluster latent variants with convex
    minimization until the true objective stops improving; the returned
    parameters never score worse than ``warm`` on the same assignment.
    """
    batch = _Batch(samples) if samples else None
    if batch is None or batch.n == 0:
        return ModelParams(weights=np.zeros_like(warm.weights), lam=spec.lam)
    assigned = np.array([assignment.sample_cluster[s.id] for s in samples], dtype=int)

    w_best = warm.weights.copy()
    f_best = _fixed_assignment_objective(batch, assigned, w_best, spec.lam)
    w = w_best
    for _ in range(50):
        f_before = _fixed_assignment_objective(batch, assigned, w, spec.lam)
        _, h = batch.scores(w)
        anchors = batch.phi[np.arange(batch.n), h[np.arange(batch.n), assigned]]
        w = _solve_anchored(
            batch, assigned, anchors, w, spec.lam, spec.inner_max_iters, spec.inner_tol
        )
        f_after = _fixed_assignment_objective(batch, assigned, w, spec.lam)
        if not np.isfinite(f_after):
            raise FloatingPointError("weight update produced a non-finite objective")
        if f_after < f_best:
            f_best, w_best = f_after, w.copy()
        if f_before - f_after <= spec.inner_tol * (1.0 + abs(f_before)):
            break
    return ModelParams(weights=w_best, lam=spec.lam)


def _round_robin(
    costs: np.ndarray,
    constraints: ConstraintSet,
    bounds: BalanceBounds,
    ids: list[int],
    k: int,
) -> Assignment | None:
    """Deterministic symmetry breaking for all-equal score rows: walk the
    merged units in id order and deal them out round-robin, skipping
    infeasible clusters. Returns None when dealing gets stuck."""
    from .assignment import _build_units, _make_assignment  # internal reuse

    units = _build_units(costs, ids, constraints)
    loads = np.zeros(k, dtype=int)
    unit_cluster = np.full(len(units.members), -1, dtype=int)
    for u in range(len(units.members)):
        size = int(units.sizes[u])
        banned = {int(unit_cluster[v]) for v in units.conflicts[u] if unit_cluster[v] >= 0}
        placed = False
        for probe in range(k):
            t = (u + probe) % k
            if t in banned or loads[t] + size > bounds.upper:
                continue
            unit_cluster[u] = t
            loads[t] += size
            placed = True
            break
        if not placed:
            return None
    if np.any(loads < bounds.lower):
        return None
    return _make_assignment(units, unit_cluster, ids)


def _solve_assignment(
    costs: np.ndarray,
    constraints: ConstraintSet,
    bounds: BalanceBounds,
    ids: list[int],
    spec: SolveSpec,
) -> tuple[Assignment, float]:
    k = costs.shape[1]
    n_units = len(constraints.must_groups) + (
        len(ids) - sum(len(g) for g in constraints.must_groups)
    )
    mode = spec.assignment_mode
    if mode == "auto":
        mode = "exact" if k**n_units <= AUTO_EXACT_STATES else "heuristic"
    if mode == "exact":
        try:
            return solve_exact(costs, constraints, bounds, ids=ids)
        except InstanceTooLargeError:
            if spec.assignment_mode == "exact":
                raise
            mode = "heuristic"
    return solve_heuristic(costs, constraints, bounds, seed=spec.seed, ids=ids)


def alternate(
    samples: list[Sample],
    constraints: ConstraintSet,
    spec: SolveSpec,
    init: ModelParams,
) -> SolveReport:
    """Alternate constrained assignment and weight updates until the
    objective stabilizes; records the objective after each full alternation.

    Only ``init``'s weights are used; the regularization weight comes from
    ``spec``. Heuristic assignment steps can at worst plateau: the previous
    assignment is kept whenever the fresh solve does not beat it.
    """
    t_start = time.perf_counter()
    ids = [s.id for s in samples]
    n = len(samples)
    k = spec.k
    if init.weights.shape[0] != k:
        raise ValueError(f"init has {init.weights.shape[0]} weight vectors, spec.k={k}")
    bounds = bounds_from_fractions(n, k, spec.bounds_fractions)
    params = ModelParams(weights=init.weights, lam=spec.lam)

    trace: list[float] = []
    assignment: Assignment | None = None
    prev_cost: float | None = None
    initial_objective: float | None = None
    converged = False

    for outer in range(spec.max_outer_iters):
        s, _ = score_matrix(samples, params)
        costs = assignment_cost(s)
        candidate: Assignment | None = None
        if outer == 0 and n > 0:
            row_spread = costs.max(axis=1) - costs.min(axis=1)
            if float(row_spread.max(initial=0.0)) < 1e-9:
                candidate = _round_robin(costs, constraints, bounds, ids, k)
        if candidate is None:
            candidate, _ = _solve_assignment(costs, constraints, bounds, ids, spec)

        rows = np.arange(n)
        cand_idx = np.array([candidate.sample_cluster[i] for i in ids], dtype=int)
        cand_cost = float(costs[rows, cand_idx].sum()) if n else 0.0
        if assignment is not None and prev_cost is not None:
            prev_idx = np.array([assignment.sample_cluster[i] for i in ids], dtype=int)
            prev_under_current = float(costs[rows, prev_idx].sum()) if n else 0.0
            if prev_under_current <= cand_cost:
                candidate, cand_cost = assignment, prev_under_current
        assignment = candidate
        prev_cost = cand_cost

        if initial_objective is None:
            reg = 0.5 * spec.lam * float(np.sum(params.weights * params.weights))
            initial_objective = reg + cand_cost / k

        params = update_weights(samples, assignment, spec, warm=params)
        obj = full_objective(samples, params, assignment)
        trace.append(obj)
        if len(trace) >= 2:
            prev = trace[-2]
            if abs(prev - obj) <= spec.outer_tol * max(1.0, abs(prev)):
                converged = True
                break

    if assignment is None:
        raise RuntimeError("alternate ran zero iterations; check max_outer_iters")
    problems = validate(assignment, constraints, bounds, n_clusters=k, ids=ids)
    if problems:
        raise RuntimeError(f"final assignment violates constraints: {[str(v) for v in problems]}")

    _, h_final = score_matrix(samples, params)
    latent = {
        sid: int(h_final[i, assignment.sample_cluster[sid]]) for i, sid in enumerate(ids)
    }
    final_assignment = Assignment(
        sample_cluster=dict(assignment.sample_cluster),
        group_cluster=dict(assignment.group_cluster),
        latent_choice=latent,
    )
    reg = 0.5 * spec.lam * float(np.sum(params.weights * params.weights))
    return SolveReport(
        final_params=params,
        final_assignment=final_assignment,
        objective_trace=trace,
        slack_total=trace[-1] - reg if trace else 0.0,
        outer_iters=len(trace),
        wall_time=time.perf_counter() - t_start,
        converged=converged,
        initial_objective=float(initial_objective) if initial_objective is not None else 0.0,
        bounds=bounds,
    )
