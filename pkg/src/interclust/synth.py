"""Synthetic interaction scenes for desk-scale experiments.

Each sample is its own scene: a focal person, a companion person, and a
vehicle. The class-discriminative behavior (talking at arm's length,
approaching the parked car, walking together, ...) only occupies one
window-length segment placed at a random stride-aligned offset; outside it
the focal mills around at an intermediate speed and distance drawn per
scene, so whole-track histograms blur across classes while a well-aligned
latent window isolates the archetype. Scenes use disjoint time ranges so
nearest-entity search never pairs entities across scenes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ClassArchetype", "SyntheticSpec", "default_archetypes", "generate_synthetic"]

# "Milling around" regime used outside the active window: speeds and
# companion distances wander inside these envelopes so neutral segments do
# not form stable cross-sample prototypes.
NEUTRAL_SPEED = (0.35, 1.05)
NEUTRAL_COMPANION_DIST = (4.0, 16.0)
NEUTRAL_TURN = 0.35  # max per-frame heading change, radians
FAR_DISTANCE = 30.0
APPROACH_START, APPROACH_END = (14.0, 0.6)


@dataclass(frozen=True)
class ClassArchetype:
    """Generative regime for one interaction class' active segment."""

    name: str
    focal_speed: float  # net speed inside the active window, units/frame
    companion_distance: float | None  # None puts the companion far away
    vehicle_mode: str = "far"  # "far" | "approach"
    companion_matched: bool = True  # False: companion stands while focal moves


def default_archetypes(n_classes: int) -> tuple[ClassArchetype, ...]:
    catalog = (
        ClassArchetype("talking", focal_speed=0.02, companion_distance=1.2),
        ClassArchetype("walk_alone", focal_speed=1.8, companion_distance=None),
        ClassArchetype("car_approach", focal_speed=0.0, companion_distance=None,
                       vehicle_mode="approach"),
        ClassArchetype("walk_together", focal_speed=1.8, companion_distance=1.4),
        ClassArchetype("stand_alone", focal_speed=0.02, companion_distance=None),
    )
    if not (2 <= n_classes <= len(catalog)):
        raise ValueError(f"default archetypes cover 2..{len(catalog)} classes, got {n_classes}")
    return catalog[:n_classes]


@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale generator settings.

    ``window_frames`` and ``stride`` should match the variant spec used for
    featurization so that one enumerated window lines up with the active
    segment exactly; scene lengths vary so the active fraction of each track
    differs from sample to sample.
    """

    n_classes: int = 5
    samples_per_class: int = 40
    window_frames: int = 20
    stride: int = 10
    scene_frames: tuple[int, int] = (30, 60)
    noise_xy: float = 0.0  # per-frame positional jitter
    noise_rel: float = 0.0  # per-scene relative perturbation of regime params
    seed: int = 0
    archetypes: tuple[ClassArchetype, ...] = ()

    def __post_init__(self):
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.scene_frames[0] < self.window_frames:
            raise ValueError("scenes must be at least one window long")
        if not self.archetypes:
            object.__setattr__(self, "archetypes", default_archetypes(self.n_classes))
        elif len(self.archetypes) != self.n_classes:
            raise ValueError(
                f"{len(self.archetypes)} archetypes for n_classes={self.n_classes}"
            )


def _unit(rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([np.cos(angle), np.sin(angle)])


def _perturb(value: float, rng: np.random.Generator, rel: float) -> float:
    return float(value * (1.0 + rel * rng.normal())) if rel > 0 else value


def _scene(
    archetype: ClassArchetype, spec: SyntheticSpec, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[int, int]]:
    """Per-frame xy paths for (focal, companion, vehicle) in local frames."""
    w = spec.window_frames
    t_total = int(rng.integers(spec.scene_frames[0], spec.scene_frames[1] + 1))
    max_offset = (t_total - w) // spec.stride
    a0 = int(rng.integers(0, max_offset + 1)) * spec.stride
    a1 = a0 + w - 1

    active = np.zeros(t_total, dtype=bool)
    active[a0 : a1 + 1] = True

    active_dir = _unit(rng)
    if archetype.vehicle_mode == "approach":
        focal_speed = (APPROACH_START - APPROACH_END) / (w - 1)
    else:
        focal_speed = archetype.focal_speed
    focal_speed = abs(_perturb(focal_speed, rng, spec.noise_rel))

    # Neutral motion wanders: per-frame heading drift and a speed random
    # walk inside the neutral envelope; the active window is an exact,
    # straight-line realization of the archetype.
    heading = rng.uniform(0.0, 2.0 * np.pi)
    speed = rng.uniform(*NEUTRAL_SPEED)
    steps = np.zeros((t_total, 2))
    for t in range(1, t_total):
        if active[t]:
            steps[t] = focal_speed * active_dir
        else:
            heading += rng.uniform(-NEUTRAL_TURN, NEUTRAL_TURN)
            speed = float(
                np.clip(speed + rng.uniform(-0.12, 0.12), NEUTRAL_SPEED[0], NEUTRAL_SPEED[1])
            )
            steps[t] = speed * np.array([np.cos(heading), np.sin(heading)])
    focal = np.cumsum(steps, axis=0) + rng.uniform(0.0, 100.0, size=2)

    # Companion rides at a lateral offset: an exact archetype distance during
    # the active window, a drifting intermediate distance when neutral.
    side = _unit(rng)
    d_active = archetype.companion_distance
    d_active = (
        FAR_DISTANCE if d_active is None else abs(_perturb(d_active, rng, spec.noise_rel))
    )
    d_neutral = np.empty(t_total)
    d = rng.uniform(*NEUTRAL_COMPANION_DIST)
    for t in range(t_total):
        d = float(
            np.clip(
                d + rng.uniform(-0.8, 0.8),
                NEUTRAL_COMPANION_DIST[0],
                NEUTRAL_COMPANION_DIST[1],
            )
        )
        d_neutral[t] = d
    offsets = np.where(active, d_active, d_neutral)[:, None] * side
    companion = focal + offsets
    if not archetype.companion_matched:
        # asymmetric roles: the companion holds its pose during the window
        frozen_pos = companion[a0].copy()
        companion[active] = frozen_pos

    if archetype.vehicle_mode == "approach":
        # Parked just past the end of the active walk, so the gap shrinks
        # from APPROACH_START down to APPROACH_END across the window.
        vehicle_pos = focal[a1] + active_dir * APPROACH_END
    else:
        center = focal.mean(axis=0)
        reach = float(np.max(np.linalg.norm(focal - center, axis=1)))
        vehicle_pos = center + _unit(rng) * (reach + FAR_DISTANCE)
    vehicle = np.tile(vehicle_pos, (t_total, 1))

    if spec.noise_xy > 0:
        focal = focal + rng.normal(scale=spec.noise_xy, size=focal.shape)
        companion = companion + rng.normal(scale=spec.noise_xy, size=companion.shape)
        vehicle = vehicle + rng.normal(scale=spec.noise_xy, size=vehicle.shape)
    return focal, companion, vehicle, (a0, a1)


def generate_synthetic(spec: SyntheticSpec) -> tuple[dict, dict[int, str]]:
    """Emit a trajectory-file document and the ground-truth labels.

    Deterministic for a given spec; focal ids are 3*i so every scene's three
    entities get consecutive ids. Sample order (and therefore id-to-class
    correspondence) is shuffled so downstream symmetry breaking cannot
    accidentally align with the classes.
    """
    rng = np.random.default_rng(spec.seed)
    class_of: list[int] = [
        c for c in range(spec.n_classes) for _ in range(spec.samples_per_class)
    ]
    rng.shuffle(class_of)

    trajectories: list[dict] = []
    labels: dict[int, str] = {}
    for i, cls in enumerate(class_of):
        archetype = spec.archetypes[cls]
        focal, companion, vehicle, window = _scene(archetype, spec, rng)
        t0 = 1000 * i  # disjoint per-scene time ranges
        times = np.arange(focal.shape[0]) + t0
        focal_id = 3 * i
        labels[focal_id] = archetype.name

        def as_points(path: np.ndarray) -> list[list[float]]:
            return [
                [float(t), float(x), float(y)] for t, (x, y) in zip(times.tolist(), path)
            ]

        trajectories.append(
            {
                "id": focal_id,
                "kind": "person",
                "points": as_points(focal),
                "label": archetype.name,
                "active_window": [float(window[0] + t0), float(window[1] + t0)],
            }
        )
        trajectories.append(
            {"id": focal_id + 1, "kind": "person", "points": as_points(companion)}
        )
        trajectories.append(
            {"id": focal_id + 2, "kind": "vehicle", "points": as_points(vehicle)}
        )
    return {"trajectories": trajectories, "frame_rate": None}, labels
