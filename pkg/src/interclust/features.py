"""Trajectory featurization: proximity and velocity histograms with latent
temporal windows and optional role swap.

A focal person's interaction is described relative to the one nearest person
and one nearest vehicle (by median distance over overlapping frames):
soft-quantized speed histograms (responsibilities under a mixture of
Gaussians fitted on the dataset), hard-quantized distance histograms over
percentile bins, and optional appearance histograms built from precomputed
per-frame descriptors. One feature variant is emitted per (window offset,
role order) pair, so the latent maximization in the scoring layer can align
tracks temporally and resolve who plays which role.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .model import DimensionMismatchError, FeatureVariant, Sample

__all__ = [
    "Trajectory",
    "GaussianMixture",
    "PercentileBins",
    "SceneContext",
    "VariantSpec",
    "fit_gmm",
    "soft_histogram",
    "percentile_edges",
    "distance_histogram",
    "velocity_feature",
    "nearest_entities",
    "build_sample",
    "load_trajectories",
    "build_dataset",
]

KINDS = ("person", "vehicle")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A tracked entity: (t, x, y) points with strictly increasing t."""

    id: int
    kind: str
    points: np.ndarray  # (T, 3) columns t, x, y
    appearance: np.ndarray | None = None  # (T, A) per-frame descriptors
    label: int | str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"trajectory kind must be one of {KINDS}, got {self.kind!r}")
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise ValueError(f"points must be a non-empty (T, 3) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"trajectory {self.id} has non-finite points")
        if np.any(np.diff(pts[:, 0]) <= 0):
            raise ValueError(f"trajectory {self.id} times must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.appearance is not None:
            app = np.array(self.appearance, dtype=float)
            if app.shape[0] != pts.shape[0]:
                raise ValueError(
                    f"trajectory {self.id}: {app.shape[0]} appearance frames for "
                    f"{pts.shape[0]} points"
                )
            app.setflags(write=False)
            object.__setattr__(self, "appearance", app)

    @property
    def times(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, 1:]

    @property
    def t_min(self) -> float:
        return float(self.points[0, 0])

    @property
    def t_max(self) -> float:
        return float(self.points[-1, 0])


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Diagonal-covariance mixture, plus the EM log-likelihood trace."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D), all > 0
    loglik_trace: tuple[float, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        v = np.asarray(self.variances, dtype=float)
        if np.any(v <= 0):
            raise ValueError("mixture variances must be positive")
        for name in ("weights", "means", "variances"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.means.shape[1])

    @property
    def components(self) -> list[tuple[float, np.ndarray, np.ndarray]]:
        return [
            (float(self.weights[j]), self.means[j], self.variances[j])
            for j in range(self.n_components)
        ]


@dataclass(frozen=True)
class PercentileBins:
    """B hard quantization bins defined by B-1 strictly increasing edges."""

    edges: tuple[float, ...]
    degenerate: bool = False  # duplicate quantiles were collapsed

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError(f"bin edges must be strictly increasing, got {self.edges}")

    @property
    def n_bins(self) -> int:
        return len(self.edges) + 1

    def index(self, value: float) -> int:
        return int(np.searchsorted(self.edges, value, side="right"))


@dataclass(frozen=True, eq=False)
class SceneContext:
    """A focal trajectory with its nearest person and nearest vehicle."""

    focal: Trajectory
    nearest_person: Trajectory | None = None
    nearest_vehicle: Trajectory | None = None

    def __post_init__(self):
        for other in (self.nearest_person, self.nearest_vehicle):
            if other is not None and len(_common_times(self.focal, other)[0]) == 0:
                raise ValueError(
                    f"nearest entity {other.id} never overlaps focal {self.focal.id}"
                )


@dataclass(frozen=True)
class VariantSpec:
    """How to enumerate latent feature variants and quantize the blocks.

    The quantizer fields are filled by :func:`build_dataset` (or by hand)
    before :func:`build_sample` runs; the counts and seed control how they
    are fitted from pooled dataset statistics.
    """

    window_frames: int = 20
    stride: int = 10
    role_swap: bool = False
    frame_rate: float | None = None
    n_velocity_components: int = 8
    n_distance_bins: int = 5
    n_appearance_components: int = 8
    quantizer_seed: int = 0
    velocity_gmm: GaussianMixture | None = None
    distance_bins: PercentileBins | None = None
    appearance_gmm: GaussianMixture | None = None

    def __post_init__(self):
        if self.window_frames < 2:
            raise ValueError("window_frames must be at least 2")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")


class HistogramBlock(NamedTuple):
    values: np.ndarray
    empty: bool


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _log_density(x: np.ndarray, gmm_means: np.ndarray, gmm_vars: np.ndarray) -> np.ndarray:
    """(N, K) per-component diagonal Gaussian log densities."""
    diff = x[:, None, :] - gmm_means[None, :, :]
    quad = (diff * diff / gmm_vars[None, :, :]).sum(axis=2)
    logdet = np.log(2.0 * np.pi * gmm_vars).sum(axis=1)
    return -0.5 * (quad + logdet[None, :])


def fit_gmm(values, n_components: int, seed: int = 0) -> GaussianMixture:
    """EM fit of a diagonal-covariance Gaussian mixture.

    Converges when the log-likelihood improves by less than 1e-6 or after
    200 iterations; the per-iteration log-likelihoods are kept on the result
    so monotonicity is checkable.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.size == 0:
        raise ValueError("cannot fit a mixture on no data")
    if not np.all(np.isfinite(x)):
        raise ValueError("input values contain NaN or infinity")
    if n_components < 1:
        raise ValueError(f"n_components must be >= 1, got {n_components}")
    distinct = np.unique(x, axis=0)
    if distinct.shape[0] < n_components:
        raise ValueError(
            f"need at least {n_components} distinct values, got {distinct.shape[0]}"
        )

    n, d = x.shape
    rng = np.random.default_rng(seed)
    var_floor = max(1e-10, 1e-6 * float(x.var(axis=0).mean() or 1.0))

    # k-means++-style spread of initial means over the distinct values.
    means = np.empty((n_components, d))
    means[0] = distinct[rng.integers(distinct.shape[0])]
    d2 = ((distinct - means[0]) ** 2).sum(axis=1)
    for j in range(1, n_components):
        total = d2.sum()
        idx = int(np.argmax(d2)) if total <= 0 else int(rng.choice(len(distinct), p=d2 / total))
        means[j] = distinct[idx]
        d2 = np.minimum(d2, ((distinct - means[j]) ** 2).sum(axis=1))
    variances = np.tile(np.maximum(x.var(axis=0), var_floor), (n_components, 1))
    weights = np.full(n_components, 1.0 / n_components)

    trace: list[float] = []
    for _ in range(200):
        log_joint = _log_density(x, means, variances) + np.log(weights)[None, :]
        log_norm = _logsumexp(log_joint, axis=1)
        trace.append(float(log_norm.sum()))
        resp = np.exp(log_joint - log_norm[:, None])

        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / n
        weights /= weights.sum()
        means = (resp.T @ x) / nk[:, None]
        sq = resp.T @ (x * x) / nk[:, None]
        variances = np.maximum(sq - means * means, var_floor)

        if len(trace) >= 2 and trace[-1] - trace[-2] < 1e-6:
            break

    return GaussianMixture(
        weights=weights, means=means, variances=variances, loglik_trace=tuple(trace)
    )


def soft_histogram(value, gmm: GaussianMixture) -> np.ndarray:
    """Posterior component responsibilities of one observation."""
    x = np.asarray(value, dtype=float).reshape(-1)
    if x.shape[0] != gmm.dimension:
        raise DimensionMismatchError(gmm.dimension, int(x.shape[0]))
    with np.errstate(divide="ignore"):
        log_joint = _log_density(x[None, :], gmm.means, gmm.variances)[0] + np.log(gmm.weights)
    log_joint -= log_joint.max()
    resp = np.exp(log_joint)
    return resp / resp.sum()


def percentile_edges(values, n_bins: int) -> PercentileBins:
    """Interior quantile edges at k/n_bins, linear interpolation.

    Duplicate quantiles (heavily tied data) collapse into fewer edges and
    set the ``degenerate`` flag.
    """
    vals = np.asarray(values, dtype=float).reshape(-1)
    if vals.size == 0:
        raise ValueError("cannot place percentile edges on no data")
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    qs = np.quantile(vals, [k / n_bins for k in range(1, n_bins)])
    lo, hi = float(vals.min()), float(vals.max())
    edges: list[float] = []
    for q in qs:
        # duplicated quantiles collapse; edges at or beyond the data range
        # cannot split anything and are dropped too
        if (not edges or q > edges[-1]) and lo < q < hi:
            edges.append(float(q))
    return PercentileBins(edges=tuple(edges), degenerate=len(edges) < n_bins - 1)


def _common_times(a: Trajectory, b: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    common, ia, ib = np.intersect1d(a.times, b.times, return_indices=True)
    return common, ia, ib


def distance_histogram(
    focal: Trajectory,
    other: Trajectory | None,
    bins: PercentileBins,
    window: tuple[float, float],
) -> HistogramBlock:
    """Normalized histogram of per-frame focal-to-other distances in a window.

    No temporal overlap (or a missing entity) yields an all-zero vector with
    the ``empty`` flag set.
    """
    t0, t1 = window
    if t0 > t1 or t0 < focal.t_min or t1 > focal.t_max:
        raise ValueError(
            f"window [{t0}, {t1}] is not inside focal span [{focal.t_min}, {focal.t_max}]"
        )
    counts = np.zeros(bins.n_bins)
    if other is None:
        return HistogramBlock(counts, True)
    common, ia, ib = _common_times(focal, other)
    in_window = (common >= t0) & (common <= t1)
    if not np.any(in_window):
        return HistogramBlock(counts, True)
    d = np.linalg.norm(focal.xy[ia[in_window]] - other.xy[ib[in_window]], axis=1)
    idx = np.searchsorted(np.asarray(bins.edges), d, side="right")
    np.add.at(counts, idx, 1.0)
    return HistogramBlock(counts / counts.sum(), False)


def velocity_feature(
    trajectory: Trajectory, window: tuple[float, float], gmm: GaussianMixture
) -> np.ndarray:
    """Soft-quantized net speed over a window.

    Speed is the straight-line displacement between the first and last
    points inside the window divided by the elapsed time.
    """
    t0, t1 = window
    inside = (trajectory.times >= t0) & (trajectory.times <= t1)
    idx = np.nonzero(inside)[0]
    if idx.size < 2:
        raise ValueError(
            f"window [{t0}, {t1}] holds {idx.size} points of trajectory "
            f"{trajectory.id}; need at least 2"
        )
    first, last = idx[0], idx[-1]
    dt = trajectory.times[last] - trajectory.times[first]
    speed = float(np.linalg.norm(trajectory.xy[last] - trajectory.xy[first])) / float(dt)
    return soft_histogram(np.array([speed]), gmm)


def nearest_entities(focal: Trajectory, others: list[Trajectory]) -> SceneContext:
    """Pick, per kind, the trajectory with the smallest median distance to
    the focal over their overlapping frames; ties break to the lowest id."""
    best: dict[str, tuple[float, int, Trajectory]] = {}
    for other in others:
        if other.id == focal.id and other.kind == focal.kind:
            continue
        common, ia, ib = _common_times(focal, other)
        if common.size == 0:
            continue
        med = float(np.median(np.linalg.norm(focal.xy[ia] - other.xy[ib], axis=1)))
        key = (med, other.id)
        if other.kind not in best or key < (best[other.kind][0], best[other.kind][1]):
            best[other.kind] = (med, other.id, other)
    return SceneContext(
        focal=focal,
        nearest_person=best.get("person", (0, 0, None))[2],
        nearest_vehicle=best.get("vehicle", (0, 0, None))[2],
    )


def _enumerate_windows(spec: VariantSpec, t_min: float, t_max: float) -> list[tuple[float, float]]:
    span_frames = t_max - t_min + 1
    if span_frames < spec.window_frames:
        return [(t_min, t_max)]
    windows = []
    offset = t_min
    while offset + spec.window_frames - 1 <= t_max:
        windows.append((offset, offset + spec.window_frames - 1))
        offset += spec.stride
    return windows


def _velocity_block(
    traj: Trajectory | None, window: tuple[float, float], gmm: GaussianMixture
) -> HistogramBlock:
    zero = np.zeros(gmm.n_components)
    if traj is None:
        return HistogramBlock(zero, True)
    inside = (traj.times >= window[0]) & (traj.times <= window[1])
    if int(inside.sum()) < 2:
        return HistogramBlock(zero, True)
    return HistogramBlock(velocity_feature(traj, window, gmm), False)


def _appearance_block(
    traj: Trajectory | None, window: tuple[float, float], gmm: GaussianMixture | None
) -> HistogramBlock | None:
    if gmm is None:
        return None
    zero = np.zeros(gmm.n_components)
    if traj is None or traj.appearance is None:
        return HistogramBlock(zero, True)
    inside = (traj.times >= window[0]) & (traj.times <= window[1])
    frames = traj.appearance[inside]
    if frames.shape[0] == 0:
        return HistogramBlock(zero, True)
    total = np.zeros(gmm.n_components)
    for frame in frames:
        total += soft_histogram(frame, gmm)
    return HistogramBlock(total / total.sum(), False)


def _l1(block: HistogramBlock) -> np.ndarray:
    s = block.values.sum()
    return block.values / s if s > 0 else block.values


def _variant(ctx: SceneContext, spec: VariantSpec, window: tuple[float, float], swap: bool) -> FeatureVariant:
    if spec.velocity_gmm is None or spec.distance_bins is None:
        raise ValueError("VariantSpec quantizers are not fitted; run build_dataset first")
    role_a: Trajectory | None = ctx.focal if not swap else ctx.nearest_person
    role_b: Trajectory | None = ctx.nearest_person if not swap else ctx.focal

    blocks = [
        _velocity_block(role_a, window, spec.velocity_gmm),
        _velocity_block(role_b, window, spec.velocity_gmm),
        distance_histogram(ctx.focal, ctx.nearest_person, spec.distance_bins, window),
        distance_histogram(ctx.focal, ctx.nearest_vehicle, spec.distance_bins, window),
    ]
    appearance = _appearance_block(role_a, window, spec.appearance_gmm)
    if appearance is not None:
        blocks.append(appearance)

    parts = [_l1(b) for b in blocks]
    flags = np.array([0.0 if b.empty else 1.0 for b in blocks])
    tag = f"{window[0]:g}:{window[1]:g}:{int(swap)}"
    return FeatureVariant(values=np.concatenate(parts + [flags]), latent_tag=tag)


def build_sample(ctx: SceneContext, spec: VariantSpec) -> Sample:
    """Enumerate one feature variant per (window offset, role order) pair.

    A focal track shorter than one window yields a single full-span window;
    role swap doubles the variant count by exchanging the focal and
    nearest-person blocks.
    """
    windows = _enumerate_windows(spec, ctx.focal.t_min, ctx.focal.t_max)
    roles = (False, True) if spec.role_swap else (False,)
    variants = tuple(_variant(ctx, spec, w, swap) for w in windows for swap in roles)
    return Sample(id=ctx.focal.id, variants=variants, label=ctx.focal.label)


def parse_latent_tag(tag: str) -> dict:
    t0, t1, swap = tag.split(":")
    return {"t0": float(t0), "t1": float(t1), "swapped": bool(int(swap))}


def load_trajectories(source) -> tuple[list[Trajectory], float | None]:
    """Read the trajectory JSON document (path, file object, or dict).

    Schema: ``{"trajectories": [{"id", "kind", "points", "appearance"?,
    "label"?}, ...], "frame_rate"?}``; unknown fields are ignored.
    """
    if isinstance(source, dict):
        doc = source
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source) as fh:
            doc = json.load(fh)
    trajectories = [
        Trajectory(
            id=int(item["id"]),
            kind=item["kind"],
            points=np.array(item["points"], dtype=float),
            appearance=(
                np.array(item["appearance"], dtype=float)
                if item.get("appearance") is not None
                else None
            ),
            label=item.get("label"),
        )
        for item in doc["trajectories"]
    ]
    frame_rate = doc.get("frame_rate")
    return trajectories, (float(frame_rate) if frame_rate is not None else None)


def fit_quantizers(contexts: list[SceneContext], spec: VariantSpec) -> VariantSpec:
    """Fit the velocity mixture, distance bins, and appearance mixture from
    pooled dataset statistics, mirroring how the windows will be scored."""
    speeds: list[float] = []
    distances: list[float] = []
    appearance_frames: list[np.ndarray] = []
    for ctx in contexts:
        for window in _enumerate_windows(spec, ctx.focal.t_min, ctx.focal.t_max):
            for traj in (ctx.focal, ctx.nearest_person):
                if traj is None:
                    continue
                inside = (traj.times >= window[0]) & (traj.times <= window[1])
                idx = np.nonzero(inside)[0]
                if idx.size >= 2:
                    dt = traj.times[idx[-1]] - traj.times[idx[0]]
                    speeds.append(
                        float(np.linalg.norm(traj.xy[idx[-1]] - traj.xy[idx[0]])) / float(dt)
                    )
        for other in (ctx.nearest_person, ctx.nearest_vehicle):
            if other is None:
                continue
            common, ia, ib = _common_times(ctx.focal, other)
            if common.size:
                distances.extend(
                    np.linalg.norm(ctx.focal.xy[ia] - other.xy[ib], axis=1).tolist()
                )
        if ctx.focal.appearance is not None:
            appearance_frames.extend(ctx.focal.appearance)

    if not speeds or not distances:
        raise ValueError("dataset provides no overlapping entities to fit quantizers on")

    n_vel = min(spec.n_velocity_components, np.unique(np.asarray(speeds)).size)
    velocity_gmm = fit_gmm(speeds, n_vel, seed=spec.quantizer_seed)
    distance_bins = percentile_edges(distances, spec.n_distance_bins)
    appearance_gmm = None
    if appearance_frames and spec.n_appearance_components > 0:
        frames = np.stack(appearance_frames)
        n_app = min(spec.n_appearance_components, np.unique(frames, axis=0).shape[0])
        appearance_gmm = fit_gmm(frames, n_app, seed=spec.quantizer_seed + 1)
    return replace(
        spec,
        velocity_gmm=velocity_gmm,
        distance_bins=distance_bins,
        appearance_gmm=appearance_gmm,
    )


def build_dataset(
    trajectories: list[Trajectory],
    spec: VariantSpec,
    focal_ids: list[int] | None = None,
) -> tuple[list[Sample], dict[int, object], VariantSpec, list[SceneContext]]:
    """Featurize focal person trajectories into samples.

    Focal selection: ``focal_ids`` when given; otherwise the labeled person
    trajectories, so unlabeled companions stay context-only; otherwise (a
    fully unlabeled file) every person. Returns the samples, the labels that
    were present, the spec with fitted quantizers, and the per-sample scene
    contexts (useful for rendering).
    """
    persons = [t for t in trajectories if t.kind == "person"]
    if focal_ids is not None:
        wanted = set(focal_ids)
        focals = [t for t in persons if t.id in wanted]
    else:
        focals = [t for t in persons if t.label is not None] or persons
    contexts = [nearest_entities(t, trajectories) for t in focals]
    if not contexts:
        raise ValueError("no person trajectories to featurize")
    if spec.velocity_gmm is None or spec.distance_bins is None:
        spec = fit_quantizers(contexts, spec)
    samples = [build_sample(ctx, spec) for ctx in contexts]
    labels = {
        ctx.focal.id: ctx.focal.label for ctx in contexts if ctx.focal.label is not None
    }
    return samples, labels, spec, contexts
