"""Iterative user-feedback protocol over clusterings.

Each round the user (real or simulated) keeps a few correct samples per
cluster, moves a few misplaced ones to their proper cluster, and may freeze
clusters that look pure. Kept samples become must-link groups; a moved
sample must-links into its target's kept group and cannot-links against its
source's kept group; frozen clusters become atomic must-link groups over
their full membership. Constraints accumulate across rounds and feed the
next constrained re-clustering, warm-started from the previous weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .assignment import ConstraintSet, canonicalize, validate
from .evaluation import LabeledPartition, purity
from .model import Assignment, ModelParams, Sample
from .training import SolveReport, SolveSpec, alternate, bounds_from_fractions, init_params

__all__ = [
    "FeedbackBatch",
    "FeedbackLog",
    "InconsistentFeedbackError",
    "derive_constraints",
    "simulate_user",
    "manually_labeled_purity",
    "ClusteringSession",
    "LoopRound",
    "LoopReport",
    "run_feedback_loop",
]


class InconsistentFeedbackError(ValueError):
    """The same sample received conflicting corrections across rounds."""

    def __init__(self, sample_id: int, previous, current):
        self.sample_id = sample_id
        super().__init__(
            f"sample {sample_id} was previously asserted as {previous!r}, now {current!r}"
        )


@dataclass(frozen=True)
class FeedbackBatch:
    """One round of user edits.

    ``kept`` maps cluster index to the ids marked as that cluster's dominant
    interaction; ``moved`` lists (sample id, source cluster, target cluster);
    ``frozen`` names clusters the user declared pure.
    """

    kept: dict[int, tuple[int, ...]] = field(default_factory=dict)
    moved: tuple[tuple[int, int, int], ...] = ()
    frozen: frozenset[int] = frozenset()

    def __post_init__(self):
        kept = {int(c): tuple(ids) for c, ids in self.kept.items()}
        object.__setattr__(self, "kept", kept)
        object.__setattr__(self, "moved", tuple(tuple(m) for m in self.moved))
        object.__setattr__(self, "frozen", frozenset(int(c) for c in self.frozen))
        seen: set[int] = set()
        for ids in kept.values():
            for sid in ids:
                if sid in seen:
                    raise ValueError(f"sample {sid} appears twice in the kept lists")
                seen.add(sid)
        for sid, src, dst in self.moved:
            if sid in seen:
                raise ValueError(f"sample {sid} is both kept and moved")
            seen.add(sid)
            if src == dst:
                raise ValueError(f"sample {sid} moved from cluster {src} to itself")

    @property
    def moved_count(self) -> int:
        return len(self.moved)

    def to_json(self) -> dict:
        return {
            "kept": {str(c): sorted(ids) for c, ids in sorted(self.kept.items())},
            "moved": [[sid, src, dst] for sid, src, dst in self.moved],
            "frozen": sorted(self.frozen),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FeedbackBatch":
        return cls(
            kept={int(c): tuple(ids) for c, ids in doc.get("kept", {}).items()},
            moved=tuple(tuple(m) for m in doc.get("moved", [])),
            frozen=frozenset(doc.get("frozen", [])),
        )


@dataclass(frozen=True)
class _LogEntry:
    batch: FeedbackBatch
    frozen_members: tuple[frozenset[int], ...]  # membership at recording time


@dataclass
class FeedbackLog:
    """Append-only record of feedback batches plus per-sample assertions.

    Frozen cluster indices are resolved against the assignment that was on
    screen when the batch was recorded, so later re-clusterings cannot
    reinterpret them. ``cumulative_corrections`` tracks each sample's
    asserted identity (its true label in simulation); conflicting
    re-assertions raise instead of last-wins.
    """

    entries: list[_LogEntry] = field(default_factory=list)
    cumulative_corrections: dict[int, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def batches(self) -> list[FeedbackBatch]:
        return [e.batch for e in self.entries]

    def record(
        self,
        batch: FeedbackBatch,
        assignment: Assignment,
        identities: dict[int, object] | None = None,
    ) -> None:
        """Append a batch, resolving frozen clusters against ``assignment``.

        ``identities`` optionally asserts what each touched sample is (used
        in simulation, where it is the true label); inconsistent assertions
        across rounds are an error.
        """
        members = assignment.cluster_members()
        frozen_members = tuple(
            frozenset(members[c]) for c in sorted(batch.frozen) if c < len(members) and members[c]
        )
        if identities:
            for sid, identity in identities.items():
                previous = self.cumulative_corrections.get(sid)
                if previous is not None and previous != identity:
                    raise InconsistentFeedbackError(sid, previous, identity)
            self.cumulative_corrections.update(identities)
        self.entries.append(_LogEntry(batch=batch, frozen_members=frozen_members))

    def prefix(self, n_batches: int) -> "FeedbackLog":
        log = FeedbackLog()
        log.entries = list(self.entries[:n_batches])
        return log


def derive_constraints(log: FeedbackLog) -> ConstraintSet:
    """Turn the accumulated feedback into canonical constraints.

    Per batch: each cluster's kept list is a must-link group; every moved
    sample must-links into its target's kept group and cannot-links against
    each member of its source's kept group; frozen clusters contribute their
    recorded membership as one group. Canonicalization merges everything
    transitively and surfaces contradictions.
    """
    musts: list[set[int]] = []
    cannots: set[tuple[int, int]] = set()
    for entry in log.entries:
        batch = entry.batch
        kept = {c: set(ids) for c, ids in batch.kept.items()}
        for ids in kept.values():
            if len(ids) > 1:
                musts.append(set(ids))
        for sid, src, dst in batch.moved:
            musts.append({sid} | kept.get(dst, set()))
            for other in kept.get(src, ()):  # pair off against the source group
                cannots.add((min(sid, other), max(sid, other)))
        musts.extend(set(g) for g in entry.frozen_members)
    return canonicalize(musts, cannots)


def _dominant_label(member_labels: list):
    counts: dict = {}
    for lab in member_labels:
        counts[lab] = counts.get(lab, 0) + 1
    top = max(counts.values())
    ties = [lab for lab, c in counts.items() if c == top]
    return sorted(ties, key=lambda lab: (isinstance(lab, str), lab))[0]


def simulate_user(
    assignment: Assignment,
    labels: dict[int, object],
    m: int,
    c: int,
    rng: np.random.Generator | int,
) -> FeedbackBatch:
    """Oracle user: keep up to m dominant samples and move up to c
    misplaced samples per cluster, targeting each to the cluster whose
    dominant label matches its true label (plurality holder as fallback).
    Clusters with nothing misplaced are frozen."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    missing = sorted(set(assignment.sample_cluster) - set(labels))
    if missing:
        raise ValueError(f"labels missing for samples {missing}")

    members = assignment.cluster_members()
    dominant: dict[int, object] = {}
    for t, ids in enumerate(members):
        if ids:
            dominant[t] = _dominant_label([labels[i] for i in ids])

    label_counts: dict[object, dict[int, int]] = {}
    for t, ids in enumerate(members):
        for i in ids:
            label_counts.setdefault(labels[i], {}).setdefault(t, 0)
            label_counts[labels[i]][t] += 1

    def target_for(label) -> int:
        matches = [t for t, lab in sorted(dominant.items()) if lab == label]
        if matches:
            return matches[0]
        counts = label_counts.get(label, {})
        top = max(counts.values())
        return sorted(t for t, n in counts.items() if n == top)[0]

    kept: dict[int, tuple[int, ...]] = {}
    moved: list[tuple[int, int, int]] = []
    frozen: set[int] = set()
    for t, ids in enumerate(members):
        if not ids:
            continue
        dom = dominant[t]
        right = [i for i in ids if labels[i] == dom]
        wrong = [i for i in ids if labels[i] != dom]
        n_keep = min(m, len(right))
        chosen = rng.choice(len(right), size=n_keep, replace=False) if n_keep else []
        kept[t] = tuple(sorted(right[j] for j in chosen))
        if not wrong:
            frozen.add(t)
            continue
        n_move = min(c, len(wrong))
        picks = rng.choice(len(wrong), size=n_move, replace=False)
        for j in sorted(picks):
            sid = wrong[j]
            dst = target_for(labels[sid])
            if dst != t:  # plurality fallback may point home; nowhere better to go
                moved.append((sid, t, dst))
    return FeedbackBatch(kept=kept, moved=tuple(moved), frozen=frozenset(frozen))


def manually_labeled_purity(
    assignment: Assignment, log: FeedbackLog, labels: dict[int, object]
) -> float:
    """Purity of the round-0 clustering after applying only the explicit
    moves in the log: no re-clustering, no generalization."""
    corrected = dict(assignment.sample_cluster)
    for batch in log.batches:
        for sid, _src, dst in batch.moved:
            corrected[sid] = dst
    return purity(LabeledPartition(predicted=corrected, truth=dict(labels)))


def _overlap_relabel(previous: Assignment, current: Assignment, k: int) -> Assignment:
    """Rename current cluster indices to maximize overlap with the previous
    round, so cluster identities stay visually and positionally stable."""
    overlap = np.zeros((k, k), dtype=int)
    for sid, t in current.sample_cluster.items():
        prev_t = previous.sample_cluster.get(sid)
        if prev_t is not None:
            overlap[t, prev_t] += 1
    mapping: dict[int, int] = {}
    used: set[int] = set()
    order = sorted(
        ((int(overlap[t, p]), t, p) for t in range(k) for p in range(k)),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    for _count, t, p in order:
        if t not in mapping and p not in used:
            mapping[t] = p
            used.add(p)
    for t in range(k):
        if t not in mapping:
            mapping[t] = min(set(range(k)) - used)
            used.add(mapping[t])
    return current.relabeled(mapping)


@dataclass
class LoopRound:
    round: int
    method_purity: float | None
    manual_purity: float | None
    moved_count: int
    constraint_must: int
    constraint_cannot: int
    objective: float
    converged: bool


class ClusteringSession:
    """Stateful clustering-with-feedback driver shared by the experiment
    harness and the HTTP service: round 0 is unsupervised, each iterate()
    re-clusters under the cumulative constraints, warm-started."""

    def __init__(
        self,
        samples: list[Sample],
        spec: SolveSpec,
        labels: dict[int, object] | None = None,
    ):
        if not samples:
            raise ValueError("cannot open a session with no samples")
        self.samples = list(samples)
        self.spec = spec
        self.labels = dict(labels) if labels else None
        self.log = FeedbackLog()
        self.round = 0
        self.rounds: list[LoopRound] = []
        self._pending_moved = 0

        dim = samples[0].dimension
        report = alternate(samples, ConstraintSet(), spec, init_params(dim, spec.k, spec.lam))
        self.params: ModelParams = report.final_params
        self.assignment: Assignment = report.final_assignment
        self.round0_assignment: Assignment = report.final_assignment
        self.last_report: SolveReport = report
        self._record_round(report)

    # -- bookkeeping ------------------------------------------------------

    def _purity(self) -> float | None:
        if self.labels is None:
            return None
        return purity(LabeledPartition.from_assignment(self.assignment, self.labels))

    def _record_round(self, report: SolveReport) -> None:
        must, cannot = derive_constraints(self.log).counts()
        manual = (
            manually_labeled_purity(self.round0_assignment, self.log, self.labels)
            if self.labels is not None
            else None
        )
        self.rounds.append(
            LoopRound(
                round=self.round,
                method_purity=self._purity(),
                manual_purity=manual,
                moved_count=self._pending_moved,
                constraint_must=must,
                constraint_cannot=cannot,
                objective=report.objective_trace[-1],
                converged=report.converged,
            )
        )
        self._pending_moved = 0

    # -- the two state transitions ---------------------------------------

    def submit_feedback(
        self, batch: FeedbackBatch, identities: dict[int, object] | None = None
    ) -> ConstraintSet:
        """Record a batch and return the cumulative constraints; raises
        ContradictionError or InconsistentFeedbackError without recording
        anything when the batch conflicts."""
        probe = self.log.prefix(len(self.log))
        probe.cumulative_corrections = dict(self.log.cumulative_corrections)
        probe.record(batch, self.assignment, identities)
        constraints = derive_constraints(probe)  # contradiction check before commit
        self.log = probe
        self._pending_moved += batch.moved_count
        return constraints

    def iterate(self) -> LoopRound:
        """Re-cluster under the cumulative constraints, warm-started."""
        constraints = derive_constraints(self.log)
        report = alternate(self.samples, constraints, self.spec, self.params)
        relabeled = _overlap_relabel(self.assignment, report.final_assignment, self.spec.k)
        bounds = bounds_from_fractions(len(self.samples), self.spec.k, self.spec.bounds_fractions)
        leftovers = validate(relabeled, constraints, bounds, n_clusters=self.spec.k)
        if leftovers:  # relabeling is a pure permutation; this cannot trip
            raise RuntimeError(f"relabeled assignment broke constraints: {leftovers}")
        self.params = report.final_params
        self.assignment = relabeled
        self.last_report = report
        self.round += 1
        self._record_round(report)
        return self.rounds[-1]


@dataclass
class LoopReport:
    """Per-round audit of one simulated feedback run."""

    rounds: list[LoopRound]
    reached_pure: bool
    seed: int

    @property
    def final_purity(self) -> float | None:
        return self.rounds[-1].method_purity if self.rounds else None


def run_feedback_loop(
    samples: list[Sample],
    labels: dict[int, object],
    spec: SolveSpec,
    m: int,
    c: int,
    max_rounds: int,
    seed: int,
) -> LoopReport:
    """Simulated interactive loop: cluster, obtain oracle feedback, add the
    constraints, re-cluster warm-started; stop at 100% purity or after
    ``max_rounds`` feedback rounds."""
    session = ClusteringSession(samples, spec, labels=labels)
    rng = np.random.default_rng(seed)
    for _ in range(max_rounds):
        if session.rounds[-1].method_purity == 1.0:
            break
        batch = simulate_user(session.assignment, labels, m, c, rng)
        identities = {sid: labels[sid] for sid, _s, _d in batch.moved}
        identities.update(
            {sid: labels[sid] for ids in batch.kept.values() for sid in ids}
        )
        session.submit_feedback(batch, identities)
        session.iterate()
    return LoopReport(
        rounds=session.rounds,
        reached_pure=session.rounds[-1].method_purity == 1.0,
        seed=seed,
    )


def batch_to_wire(batch: FeedbackBatch) -> str:
    return json.dumps(batch.to_json(), sort_keys=True)
