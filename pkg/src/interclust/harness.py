"""Experiment driver: config files, lambda grid sweeps, feedback-loop
purity curves, and their CSV/JSON exports.

Grid selection sweeps the regularization weight over decades and keeps
the best-purity value; note that this selection reads the ground-truth
labels, so grid results are model selection, not an unsupervised accuracy
claim.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .evaluation import LabeledPartition, purity
from .features import Trajectory, VariantSpec, build_dataset, load_trajectories
from .feedback import LoopReport, run_feedback_loop
from .model import Sample
from .synth import ClassArchetype, SyntheticSpec, generate_synthetic
from .training import SolveSpec, alternate, init_params
from .assignment import ConstraintSet

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "GridReport",
    "CurveReport",
    "load_config",
    "run_grid",
    "run_curves",
    "run_once",
]

DEFAULT_LAMBDA_GRID = tuple(10.0**e for e in range(-3, 4))


class ConfigError(ValueError):
    """The experiment configuration is malformed."""


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict  # {"synthetic": {...}} or {"trajectory_file": path}
    variant_spec: VariantSpec = field(default_factory=VariantSpec)
    solve: SolveSpec = field(default_factory=lambda: SolveSpec(k=5, lam=1.0))
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    m: int = 5
    c: int = 2
    max_rounds: int = 8
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        if not self.lambda_grid or any(l <= 0 for l in self.lambda_grid):
            raise ConfigError("lambda_grid must be non-empty and positive")
        if not self.seeds:
            raise ConfigError("need at least one seed")


def _take(doc: dict, known: set[str], where: str) -> None:
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def _parse_solve(doc: dict, top: dict) -> SolveSpec:
    doc = dict(doc)
    if "lambda" in doc:
        doc["lam"] = doc.pop("lambda")
    for key in ("k", "bounds_fractions"):
        if key in top:
            doc[key] = top[key]
    known = {
        "k", "lam", "bounds_fractions", "max_outer_iters", "outer_tol",
        "inner_max_iters", "inner_tol", "seed", "assignment_mode",
    }
    _take(doc, known, "solve_spec")
    if "bounds_fractions" in doc:
        doc["bounds_fractions"] = tuple(doc["bounds_fractions"])
    try:
        return SolveSpec(**{"k": 5, "lam": 1.0, **doc})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solve_spec: {exc}") from exc


def _parse_variant(doc: dict) -> VariantSpec:
    known = {
        "window_frames", "stride", "role_swap", "frame_rate",
        "n_velocity_components", "n_distance_bins", "n_appearance_components",
        "quantizer_seed", "window_seconds",
    }
    doc = dict(doc)
    _take(doc, known, "variant_spec")
    seconds = doc.pop("window_seconds", None)
    if seconds is not None:
        rate = doc.get("frame_rate")
        if not rate:
            raise ConfigError("window_seconds requires frame_rate")
        doc["window_frames"] = max(2, int(round(seconds * rate)))
    try:
        return VariantSpec(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad variant_spec: {exc}") from exc


def _parse_synthetic(doc: dict) -> SyntheticSpec:
    doc = dict(doc)
    known = {
        "n_classes", "samples_per_class", "window_frames", "stride",
        "scene_frames", "noise_xy", "noise_rel", "seed", "archetypes",
    }
    _take(doc, known, "synthetic")
    if "scene_frames" in doc:
        doc["scene_frames"] = tuple(doc["scene_frames"])
    if "archetypes" in doc:
        doc["archetypes"] = tuple(ClassArchetype(**a) for a in doc["archetypes"])
    try:
        return SyntheticSpec(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synthetic spec: {exc}") from exc


def load_config(source) -> ExperimentConfig:
    """Parse an experiment config from a path, file object, or dict."""
    if isinstance(source, dict):
        doc = source
    else:
        try:
            with open(source) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    known = {
        "data", "variant_spec", "solve_spec", "lambda_grid", "m", "c",
        "max_rounds", "seeds", "k", "bounds_fractions",
    }
    _take(doc, known, "config")
    data = doc.get("data")
    if not isinstance(data, dict) or not ({"synthetic", "trajectory_file"} & set(data)):
        raise ConfigError('config needs data.synthetic or data.trajectory_file')
    if "synthetic" in data:
        _parse_synthetic(data["synthetic"])  # validate early
    return ExperimentConfig(
        data=data,
        variant_spec=_parse_variant(doc.get("variant_spec", {})),
        solve=_parse_solve(doc.get("solve_spec", {}), doc),
        lambda_grid=tuple(doc.get("lambda_grid", DEFAULT_LAMBDA_GRID)),
        m=int(doc.get("m", 5)),
        c=int(doc.get("c", 2)),
        max_rounds=int(doc.get("max_rounds", 8)),
        seeds=tuple(doc.get("seeds", [0])),
    )


def _dataset_for_seed(
    config: ExperimentConfig, seed: int
) -> tuple[list[Sample], dict[int, object]]:
    if "synthetic" in config.data:
        spec = replace(_parse_synthetic(config.data["synthetic"]), seed=seed)
        content, _labels = generate_synthetic(spec)
        trajectories, _rate = load_trajectories(content)
    else:
        trajectories, _rate = load_trajectories(config.data["trajectory_file"])
    samples, labels, _spec, _ctx = build_dataset(trajectories, config.variant_spec)
    return samples, labels


def _round0(samples: list[Sample], solve: SolveSpec):
    report = alternate(
        samples, ConstraintSet(), solve, init_params(samples[0].dimension, solve.k, solve.lam)
    )
    return report, report.objective_trace[-1]


@dataclass
class GridReport:
    """Round-0 purity per (lambda, seed) and the best-purity selection."""

    rows: list[dict]  # {"lam","seed","purity","objective","outer_iters"}
    selected_lambda: float

    def to_json(self) -> dict:
        return {"selected_lambda": self.selected_lambda, "rows": self.rows}

    def to_csv(self) -> str:
        lines = ["lambda,seed,purity,objective,outer_iters"]
        for r in self.rows:
            lines.append(
                f"{r['lam']!r},{r['seed']},{r['purity']!r},{r['objective']!r},{r['outer_iters']}"
            )
        return "\n".join(lines) + "\n"


def run_grid(config: ExperimentConfig) -> GridReport:
    """Round-0 unsupervised clustering across the lambda grid and seeds.

    Selection takes the argmax of mean purity over seeds, breaking ties
    toward the smaller lambda (the label-peeking protocol noted above).
    """
    rows: list[dict] = []
    for seed in config.seeds:
        samples, labels = _dataset_for_seed(config, seed)
        if not labels:
            raise ConfigError("grid mode needs labeled data to score purity")
        for lam in config.lambda_grid:
            solve = replace(config.solve, lam=lam, seed=seed)
            report, objective = _round0(samples, solve)
            p = purity(LabeledPartition.from_assignment(report.final_assignment, labels))
            rows.append(
                {
                    "lam": float(lam),
                    "seed": int(seed),
                    "purity": float(p),
                    "objective": float(objective),
                    "outer_iters": report.outer_iters,
                }
            )
            logger.info("grid lam=%g seed=%d purity=%.4f", lam, seed, p)
    by_lam: dict[float, list[float]] = {}
    for r in rows:
        by_lam.setdefault(r["lam"], []).append(r["purity"])
    selected = max(sorted(by_lam), key=lambda lam: (np.mean(by_lam[lam]), -lam))
    return GridReport(rows=rows, selected_lambda=float(selected))


CURVE_CSV_HEADER = "round,seed,method_purity,manual_purity,moved_count,constraint_must,constraint_cannot"


@dataclass
class CurveReport:
    """Per-seed feedback-loop traces plus per-round aggregates."""

    selected_lambda: float
    loops: list[LoopReport]

    def rows(self) -> list[dict]:
        out = []
        for loop in self.loops:
            for r in loop.rounds:
                out.append(
                    {
                        "round": r.round,
                        "seed": loop.seed,
                        "method_purity": r.method_purity,
                        "manual_purity": r.manual_purity,
                        "moved_count": r.moved_count,
                        "constraint_must": r.constraint_must,
                        "constraint_cannot": r.constraint_cannot,
                    }
                )
        return out

    def to_csv(self) -> str:
        lines = [CURVE_CSV_HEADER]
        for r in self.rows():
            lines.append(
                f"{r['round']},{r['seed']},{r['method_purity']!r},{r['manual_purity']!r},"
                f"{r['moved_count']},{r['constraint_must']},{r['constraint_cannot']}"
            )
        return "\n".join(lines) + "\n"

    def aggregates(self) -> list[dict]:
        """Mean and std per round over seeds; seeds that stopped early (pure
        clustering reached) carry their final values forward."""
        horizon = max(len(loop.rounds) for loop in self.loops)
        out = []
        for r in range(horizon):
            method = [
                loop.rounds[min(r, len(loop.rounds) - 1)].method_purity for loop in self.loops
            ]
            manual = [
                loop.rounds[min(r, len(loop.rounds) - 1)].manual_purity for loop in self.loops
            ]
            moved = [
                loop.rounds[r].moved_count if r < len(loop.rounds) else 0
                for loop in self.loops
            ]
            out.append(
                {
                    "round": r,
                    "method_mean": float(np.mean(method)),
                    "method_std": float(np.std(method)),
                    "manual_mean": float(np.mean(manual)),
                    "manual_std": float(np.std(manual)),
                    "moved_mean": float(np.mean(moved)),
                }
            )
        return out

    def to_json(self) -> dict:
        return {
            "selected_lambda": self.selected_lambda,
            "aggregates": self.aggregates(),
            "rows": self.rows(),
        }


def run_curves(
    config: ExperimentConfig, grid: GridReport | None = None
) -> tuple[GridReport, CurveReport]:
    """Feedback-loop purity curves at the grid-selected lambda."""
    if grid is None:
        grid = run_grid(config)
    loops = []
    for seed in config.seeds:
        samples, labels = _dataset_for_seed(config, seed)
        solve = replace(config.solve, lam=grid.selected_lambda, seed=seed)
        loops.append(
            run_feedback_loop(samples, labels, solve, config.m, config.c, config.max_rounds, seed)
        )
        logger.info(
            "curves seed=%d rounds=%d final=%.4f",
            seed, len(loops[-1].rounds), loops[-1].rounds[-1].method_purity,
        )
    return grid, CurveReport(selected_lambda=grid.selected_lambda, loops=loops)


def run_once(config: ExperimentConfig) -> dict:
    """One unsupervised solve on the first seed at the configured lambda."""
    seed = config.seeds[0]
    samples, labels = _dataset_for_seed(config, seed)
    solve = replace(config.solve, seed=seed)
    report, objective = _round0(samples, solve)
    result = {
        "lambda": solve.lam,
        "seed": seed,
        "n_samples": len(samples),
        "objective": objective,
        "objective_trace": [float(x) for x in report.objective_trace],
        "outer_iters": report.outer_iters,
        "converged": report.converged,
        "assignment": {
            str(sid): int(t) for sid, t in sorted(report.final_assignment.sample_cluster.items())
        },
    }
    if labels:
        result["purity"] = purity(
            LabeledPartition.from_assignment(report.final_assignment, labels)
        )
    return result


def write_reports(out_dir: str | Path, mode: str, payload) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def dump(name: str, text: str) -> None:
        path = out / name
        path.write_text(text)
        written.append(path)

    if mode == "grid":
        dump("grid.csv", payload.to_csv())
        dump("grid.json", json.dumps(payload.to_json(), indent=2, sort_keys=True) + "\n")
    elif mode == "curves":
        grid, curves = payload
        dump("grid.csv", grid.to_csv())
        dump("grid.json", json.dumps(grid.to_json(), indent=2, sort_keys=True) + "\n")
        dump("curves.csv", curves.to_csv())
        dump("curves.json", json.dumps(curves.to_json(), indent=2, sort_keys=True) + "\n")
    elif mode == "once":
        dump("once.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    return written
