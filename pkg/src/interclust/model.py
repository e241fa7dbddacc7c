"""Data model and latent-max scoring for margin-based clustering.

A sample owns a finite list of feature variants, one per latent
configuration (temporal window offset, role order, ...). Scoring a sample
against a cluster weight vector maximizes the dot product over variants, so
the latent maximization is exact. The clustering objective combines an L2
regularizer over the K weight vectors with per-sample hinge losses against
every rival cluster; slack variables are never stored because, for a fixed
assignment, their optimum is the closed-form hinge value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DimensionMismatchError",
    "UnassignedSamplesError",
    "FeatureVariant",
    "Sample",
    "ModelParams",
    "Assignment",
    "score",
    "score_matrix",
    "objective",
]


class DimensionMismatchError(ValueError):
    """A weight or feature vector does not match the dataset dimension."""

    def __init__(self, expected: int, actual: int):
        super().__init__(f"expected feature dimension {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class UnassignedSamplesError(ValueError):
    """An operation needed a full assignment but some samples had none."""

    def __init__(self, ids):
        self.ids = tuple(sorted(ids))
        super().__init__(f"samples without a cluster assignment: {list(self.ids)}")


def _as_readonly(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureVariant:
    """Feature vector produced by one latent configuration.

    ``latent_tag`` is an opaque descriptor of the configuration that built
    the vector (window offsets, role order, ...); the solver never inspects
    it, it only travels along for reporting.
    """

    values: np.ndarray
    latent_tag: str = ""

    def __post_init__(self):
        arr = _as_readonly(self.values, "feature variant")
        if arr.ndim != 1:
            raise ValueError(f"feature variant must be a 1-D vector, got shape {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, eq=False)
class Sample:
    """One clusterable unit: an id, its latent feature variants, and an
    optional ground-truth label that is only ever read by evaluation code."""

    id: int
    variants: tuple[FeatureVariant, ...]
    label: int | str | None = None

    def __post_init__(self):
        variants = tuple(self.variants)
        if not variants:
            raise ValueError(f"sample {self.id} has no feature variants")
        dims = {v.dimension for v in variants}
        if len(dims) != 1:
            raise ValueError(f"sample {self.id} mixes variant dimensions {sorted(dims)}")
        object.__setattr__(self, "variants", variants)
        matrix = np.stack([v.values for v in variants])
        matrix.setflags(write=False)
        object.__setattr__(self, "_matrix", matrix)

    @property
    def dimension(self) -> int:
        return self.variants[0].dimension

    @property
    def variant_matrix(self) -> np.ndarray:
        """All variants stacked as a read-only (n_variants, D) matrix."""
        return self._matrix


@dataclass(frozen=True, eq=False)
class ModelParams:
    """K cluster weight vectors plus the regularization trade-off."""

    weights: np.ndarray  # (K, D)
    lam: float

    def __post_init__(self):
        w = _as_readonly(self.weights, "weights")
        if w.ndim != 2:
            raise ValueError(f"weights must be a (K, D) matrix, got shape {w.shape}")
        if w.shape[0] < 2:
            raise ValueError(f"need at least 2 clusters, got K={w.shape[0]}")
        if not (float(self.lam) > 0):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n_clusters(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.weights.shape[1])


@dataclass(frozen=True, eq=False)
class Assignment:
    """Cluster membership for every sample plus per-group and latent choices.

    ``sample_cluster`` maps sample id -> cluster index, ``group_cluster``
    maps must-link group id -> cluster index (every member of a group must
    agree with it), and ``latent_choice`` records the variant index that
    maximized each sample's assigned-cluster score.
    """

    sample_cluster: dict[int, int]
    group_cluster: dict[int, int] = field(default_factory=dict)
    latent_choice: dict[int, int] = field(default_factory=dict)

    def cluster_members(self, n_clusters: int | None = None) -> list[list[int]]:
        """Member ids per cluster index, each list sorted by id."""
        if n_clusters is None:
            n_clusters = max(self.sample_cluster.values(), default=-1) + 1
        members: list[list[int]] = [[] for _ in range(n_clusters)]
        for sid in sorted(self.sample_cluster):
            members[self.sample_cluster[sid]].append(sid)
        return members

    def relabeled(self, mapping: dict[int, int]) -> "Assignment":
        """Copy with cluster indices renamed through ``mapping``."""
        return Assignment(
            sample_cluster={i: mapping[t] for i, t in self.sample_cluster.items()},
            group_cluster={g: mapping[t] for g, t in self.group_cluster.items()},
            latent_choice=dict(self.latent_choice),
        )


def score(sample: Sample, weight: np.ndarray) -> tuple[float, int]:
    """Latent-max score of a sample under one weight vector.

    Returns ``(max_h w . phi(x, h), argmax h)``; ties break to the lowest
    variant index.
    """
    w = np.asarray(weight, dtype=float).reshape(-1)
    if w.shape[0] != sample.dimension:
        raise DimensionMismatchError(sample.dimension, int(w.shape[0]))
    values = sample.variant_matrix @ w
    best = int(np.argmax(values))
    return float(values[best]), best


def score_matrix(samples: list[Sample], params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Score every sample against every cluster.

    Returns ``(S, H)`` where ``S[i, t]`` is the latent-max score of sample i
    under cluster t and ``H[i, t]`` the maximizing variant index.
    """
    n, k = len(samples), params.n_clusters
    s = np.zeros((n, k))
    h = np.zeros((n, k), dtype=int)
    for i, sample in enumerate(samples):
        if sample.dimension != params.dimension:
            raise DimensionMismatchError(params.dimension, sample.dimension)
        values = sample.variant_matrix @ params.weights.T  # (V, K)
        h[i] = np.argmax(values, axis=0)
        s[i] = values[h[i], np.arange(k)]
    return s, h


def hinge_costs(s: np.ndarray) -> np.ndarray:
    """Minimal total slack for assigning each sample to each cluster.

    ``C[i, a] = sum_{r != a} max(0, 1 - S[i, a] + S[i, r])``; assignment
    solvers minimize the sum of the chosen entries.
    """
    s = np.asarray(s, dtype=float)
    n, k = s.shape
    margins = 1.0 - s[:, :, None] + s[:, None, :]  # (i, a, r)
    np.clip(margins, 0.0, None, out=margins)
    margins[:, np.arange(k), np.arange(k)] = 0.0
    return margins.sum(axis=2)


def objective(samples: list[Sample], params: ModelParams, assignment: Assignment) -> float:
    """Regularized clustering objective for a fixed assignment.

    ``(lam/2) sum_t ||w_t||^2 + (1/K) sum_i sum_{r != a(i)} hinge`` with every
    slack at its minimal feasible value. The hinge for the assigned cluster
    itself is identically zero and is excluded.
    """
    missing = [s.id for s in samples if s.id not in assignment.sample_cluster]
    if missing:
        raise UnassignedSamplesError(missing)
    s, _ = score_matrix(samples, params)
    costs = hinge_costs(s)
    assigned = np.array([assignment.sample_cluster[s_.id] for s_ in samples], dtype=int)
    slack = float(costs[np.arange(len(samples)), assigned].sum()) if samples else 0.0
    reg = 0.5 * params.lam * float(np.sum(params.weights * params.weights))
    return reg + slack / params.n_clusters
