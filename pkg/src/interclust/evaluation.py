"""Clustering quality metrics and the k-means baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Assignment, Sample

__all__ = [
    "LabeledPartition",
    "purity",
    "nmi",
    "rand_index",
    "kmeans",
]


@dataclass(frozen=True)
class LabeledPartition:
    """Predicted cluster indices next to ground-truth class ids."""

    predicted: dict[int, int]
    truth: dict[int, object]

    def __post_init__(self):
        if set(self.predicted) != set(self.truth):
            raise ValueError("predicted and truth must cover the same sample ids")

    @classmethod
    def from_assignment(cls, assignment: Assignment, truth: dict[int, object]) -> "LabeledPartition":
        return cls(predicted=dict(assignment.sample_cluster), truth=dict(truth))

    def contingency(self) -> np.ndarray:
        """Cluster x class joint count table."""
        clusters = sorted(set(self.predicted.values()))
        classes = sorted(set(self.truth.values()), key=lambda c: (str(type(c)), c))
        ci = {c: i for i, c in enumerate(clusters)}
        li = {c: i for i, c in enumerate(classes)}
        table = np.zeros((len(clusters), len(classes)), dtype=int)
        for sid, cluster in self.predicted.items():
            table[ci[cluster], li[self.truth[sid]]] += 1
        return table


def purity(p: LabeledPartition) -> float:
    """Fraction of samples that carry their cluster's most frequent label."""
    table = p.contingency()
    n = table.sum()
    if n == 0:
        raise ValueError("cannot compute purity of an empty partition")
    return float(table.max(axis=1).sum()) / float(n)


def nmi(p: LabeledPartition) -> float:
    """Normalized mutual information, arithmetic-mean normalization.

    Both partitions trivial (single cluster and single class) counts as a
    perfect match; one-sided triviality gives 0.
    """
    table = p.contingency().astype(float)
    n = table.sum()
    if n == 0:
        raise ValueError("cannot compute NMI of an empty partition")
    pxy = table / n
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)

    def entropy(dist: np.ndarray) -> float:
        nz = dist[dist > 0]
        return float(-(nz * np.log(nz)).sum())

    hx, hy = entropy(px), entropy(py)
    denom = 0.5 * (hx + hy)
    if denom == 0.0:
        return 1.0
    nz = pxy > 0
    mi = float((pxy[nz] * (np.log(pxy[nz]) - np.log(np.outer(px, py)[nz]))).sum())
    return max(0.0, min(1.0, mi / denom))


def rand_index(p: LabeledPartition) -> float:
    """Unadjusted Rand index: agreeing sample pairs over all pairs."""
    table = p.contingency().astype(np.int64)
    n = int(table.sum())
    if n == 0:
        raise ValueError("cannot compute the Rand index of an empty partition")
    if n == 1:
        return 1.0

    def pairs(counts: np.ndarray) -> float:
        return float((counts * (counts - 1) // 2).sum())

    same_both = pairs(table)
    same_pred = pairs(table.sum(axis=1))
    same_true = pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    # agreements = together in both + separated in both
    return (total + 2 * same_both - same_pred - same_true) / total


def _kmeans_pp_seeds(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
            continue
        centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iters: int = 100) -> tuple[np.ndarray, float]:
    k = centers.shape[0]
    labels = np.zeros(x.shape[0], dtype=int)
    for _ in range(max_iters):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        for t in range(k):
            members = x[new_labels == t]
            if len(members) == 0:
                # revive dead clusters from the point farthest from its center
                far = int(np.argmax(d2[np.arange(len(x)), new_labels]))
                centers[t] = x[far]
                new_labels[far] = t
            else:
                centers[t] = members.mean(axis=0)
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    wcss = float(((x - centers[labels]) ** 2).sum())
    return labels, wcss


def kmeans(
    samples: list[Sample],
    k: int,
    seed: int = 0,
    restarts: int = 10,
    variant: int = 0,
) -> Assignment:
    """Lloyd's algorithm on one designated variant per sample.

    k-means++ seeding, best of ``restarts`` runs by within-cluster sum of
    squares. The baseline has no latent mechanism, so every sample
    contributes only ``variants[variant]``.
    """
    n = len(samples)
    if k > n:
        raise ValueError(f"k={k} exceeds the number of samples {n}")
    x = np.stack([s.variants[variant].values for s in samples])
    rng = np.random.default_rng(seed)
    best_labels: np.ndarray | None = None
    best_wcss = np.inf
    for _ in range(max(1, restarts)):
        centers = _kmeans_pp_seeds(x, k, rng)
        labels, wcss = _lloyd(x, centers.copy())
        if wcss < best_wcss:
            best_wcss, best_labels = wcss, labels
    assert best_labels is not None
    return Assignment(
        sample_cluster={s.id: int(best_labels[i]) for i, s in enumerate(samples)},
        latent_choice={s.id: variant for s in samples},
    )
