"""Constrained cluster-assignment subproblem.

Given per-sample per-cluster hinge costs, find the assignment minimizing
total cost subject to must-link groups (which move atomically), cannot-link
pairs, and lower/upper cluster-size bounds. ``solve_exact`` enumerates with
pruning and is the oracle for small instances; ``solve_heuristic`` scales via
regret-ordered greedy construction plus local search. Both only ever return
assignments that pass ``validate``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Assignment, hinge_costs

__all__ = [
    "ConstraintSet",
    "BalanceBounds",
    "Violation",
    "ContradictionError",
    "InfeasibleError",
    "InstanceTooLargeError",
    "canonicalize",
    "assignment_cost",
    "solve_exact",
    "solve_heuristic",
    "validate",
]

# solve_exact refuses instances with more enumeration states than this.
EXACT_STATE_LIMIT = 10_000_000


class ContradictionError(ValueError):
    """Must-link and cannot-link demands collide on the same samples."""

    def __init__(self, ids, message: str | None = None):
        self.ids = tuple(sorted(ids))
        super().__init__(message or f"contradictory constraints on samples {list(self.ids)}")


class InfeasibleError(RuntimeError):
    """No assignment satisfies the constraints and balance bounds."""


class InstanceTooLargeError(RuntimeError):
    """Exact enumeration would exceed the state limit; use solve_heuristic."""


@dataclass(frozen=True)
class ConstraintSet:
    """Canonical must-link groups and cannot-link pairs.

    Groups are pairwise disjoint and sorted by their smallest member; pairs
    are stored as (low, high) tuples. Construct via :func:`canonicalize`.
    """

    must_groups: tuple[frozenset[int], ...] = ()
    cannot_pairs: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        seen: set[int] = set()
        for g in self.must_groups:
            if seen & g:
                raise ValueError("must-link groups overlap; run canonicalize first")
            seen |= g
        for p, q in self.cannot_pairs:
            if p >= q:
                raise ValueError(f"cannot pair ({p}, {q}) must be ordered low < high")
        group_of = {i: gi for gi, g in enumerate(self.must_groups) for i in g}
        for p, q in self.cannot_pairs:
            if p in group_of and group_of[p] == group_of.get(q):
                raise ContradictionError([p, q])

    @property
    def is_empty(self) -> bool:
        return not self.must_groups and not self.cannot_pairs

    def counts(self) -> tuple[int, int]:
        return len(self.must_groups), len(self.cannot_pairs)


@dataclass(frozen=True)
class BalanceBounds:
    """Per-cluster size window [lower, upper]."""

    lower: int
    upper: int

    def __post_init__(self):
        if not (0 <= self.lower <= self.upper):
            raise ValueError(f"invalid bounds: need 0 <= L <= U, got L={self.lower}, U={self.upper}")


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    ids: tuple[int, ...] = ()

    def __str__(self) -> str:
        return f"[{self.kind}] {self.message}"


def canonicalize(raw_must, raw_cannot) -> ConstraintSet:
    """Normalize raw user feedback into a canonical constraint set.

    Overlapping must groups merge transitively, singleton groups vanish,
    cannot pairs deduplicate, and a cannot pair that ends up inside one
    merged group raises :class:`ContradictionError` naming the samples.
    """
    parent: dict[int, int] = {}

    def find(x: int) -> int:
        root = x
        while parent.setdefault(root, root) != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for group in raw_must:
        ids = sorted(set(group))
        for other in ids[1:]:
            parent[find(ids[0])] = find(other)

    merged: dict[int, set[int]] = {}
    for x in parent:
        merged.setdefault(find(x), set()).add(x)
    groups = tuple(
        frozenset(g) for g in sorted((g for g in merged.values() if len(g) > 1), key=min)
    )

    pairs: set[tuple[int, int]] = set()
    for p, q in raw_cannot:
        if p == q:
            raise ValueError(f"cannot-link pair ({p}, {q}) links a sample to itself")
        pairs.add((min(p, q), max(p, q)))

    for p, q in sorted(pairs):
        if p in parent and q in parent and find(p) == find(q):
            raise ContradictionError([p, q])

    return ConstraintSet(must_groups=groups, cannot_pairs=frozenset(pairs))


def assignment_cost(s: np.ndarray) -> np.ndarray:
    """Per-sample per-cluster minimal slack totals (see model.hinge_costs)."""
    return hinge_costs(s)


@dataclass(frozen=True)
class _Units:
    """Merged-unit view of an instance: must groups move as one unit."""

    members: tuple[tuple[int, ...], ...]  # unit -> sorted sample ids
    costs: np.ndarray  # (n_units, K) summed member costs
    sizes: np.ndarray  # (n_units,)
    conflicts: tuple[frozenset[int], ...]  # unit -> units it cannot share a cluster with
    group_unit: dict[int, int]  # must-group index -> unit index


def _build_units(costs: np.ndarray, ids: list[int], constraints: ConstraintSet) -> _Units:
    row_of = {sid: i for i, sid in enumerate(ids)}
    unknown = sorted(
        {i for g in constraints.must_groups for i in g if i not in row_of}
        | {i for p in constraints.cannot_pairs for i in p if i not in row_of}
    )
    if unknown:
        raise ValueError(f"constraints reference unknown sample ids: {unknown}")

    grouped: set[int] = set()
    units: list[tuple[int, ...]] = []
    group_unit: dict[int, int] = {}
    for gi, g in enumerate(constraints.must_groups):
        group_unit[gi] = len(units)
        units.append(tuple(sorted(g)))
        grouped |= g
    for sid in ids:
        if sid not in grouped:
            units.append((sid,))
    order = sorted(range(len(units)), key=lambda u: units[u][0])
    rank = {u: r for r, u in enumerate(order)}
    units = [units[u] for u in order]
    group_unit = {gi: rank[u] for gi, u in group_unit.items()}

    unit_of = {sid: ui for ui, members in enumerate(units) for sid in members}
    conflict_sets: list[set[int]] = [set() for _ in units]
    for p, q in constraints.cannot_pairs:
        up, uq = unit_of[p], unit_of[q]
        if up == uq:
            raise ContradictionError([p, q])
        conflict_sets[up].add(uq)
        conflict_sets[uq].add(up)

    cost = np.stack([costs[[row_of[sid] for sid in members]].sum(axis=0) for members in units])
    sizes = np.array([len(members) for members in units], dtype=int)
    return _Units(
        members=tuple(units),
        costs=cost,
        sizes=sizes,
        conflicts=tuple(frozenset(c) for c in conflict_sets),
        group_unit=group_unit,
    )


def _make_assignment(units: _Units, unit_cluster: np.ndarray, ids: list[int]) -> Assignment:
    sample_cluster = {
        sid: int(unit_cluster[ui]) for ui, members in enumerate(units.members) for sid in members
    }
    group_cluster = {gi: int(unit_cluster[ui]) for gi, ui in units.group_unit.items()}
    return Assignment(sample_cluster=sample_cluster, group_cluster=group_cluster)


def _check_feasible_shape(units: _Units, k: int, bounds: BalanceBounds, n: int) -> None:
    if k * bounds.lower > n or k * bounds.upper < n:
        raise InfeasibleError(
            f"bounds infeasible: K*L={k * bounds.lower} <= N={n} <= K*U={k * bounds.upper} fails"
        )
    biggest = int(units.sizes.max(initial=0))
    if biggest > bounds.upper:
        raise InfeasibleError(
            f"a must-link group of size {biggest} exceeds the upper bound {bounds.upper}"
        )


def solve_exact(
    costs: np.ndarray,
    constraints: ConstraintSet,
    bounds: BalanceBounds,
    ids: list[int] | None = None,
) -> tuple[Assignment, float]:
    """Globally minimal constrained assignment by pruned enumeration.

    Must-link groups are contracted into atomic units before enumerating
    K^units states; refuses instances above ``EXACT_STATE_LIMIT``. Ties
    resolve to the lexicographically smallest assignment in sample-id order.
    """
    costs = np.asarray(costs, dtype=float)
    n, k = costs.shape
    ids = list(range(n)) if ids is None else list(ids)
    units = _build_units(costs, ids, constraints)
    m = len(units.members)
    if k**m > EXACT_STATE_LIMIT:
        raise InstanceTooLargeError(
            f"{k}^{m} assignment states exceed {EXACT_STATE_LIMIT}; use solve_heuristic"
        )
    _check_feasible_shape(units, k, bounds, n)

    # Cheapest completion from each suffix, ignoring feasibility: a valid
    # lower bound for cost pruning.
    min_cost = units.costs.min(axis=1)
    suffix_bound = np.concatenate([np.cumsum(min_cost[::-1])[::-1], [0.0]])
    suffix_size = np.concatenate([np.cumsum(units.sizes[::-1])[::-1], [0]])

    best_cost = np.inf
    best: np.ndarray | None = None
    choice = np.full(m, -1, dtype=int)
    loads = np.zeros(k, dtype=int)

    def dfs(u: int, partial: float) -> None:
        nonlocal best_cost, best
        if partial + suffix_bound[u] >= best_cost:
            return
        if u == m:
            if np.all(loads >= bounds.lower):
                best_cost = partial
                best = choice.copy()
            return
        deficit = int(np.maximum(bounds.lower - loads, 0).sum())
        if deficit > suffix_size[u]:
            return
        size = int(units.sizes[u])
        conflict_clusters = {int(choice[v]) for v in units.conflicts[u] if choice[v] >= 0}
        for t in range(k):
            if t in conflict_clusters or loads[t] + size > bounds.upper:
                continue
            choice[u] = t
            loads[t] += size
            dfs(u + 1, partial + units.costs[u, t])
            loads[t] -= size
            choice[u] = -1

    dfs(0, 0.0)
    if best is None:
        raise InfeasibleError("no assignment satisfies the constraints and bounds")
    return _make_assignment(units, best, ids), float(best_cost)


def _greedy_construct(
    units: _Units, k: int, bounds: BalanceBounds, order: np.ndarray
) -> np.ndarray | None:
    m = len(units.members)
    unit_cluster = np.full(m, -1, dtype=int)
    loads = np.zeros(k, dtype=int)
    for u in order:
        size = int(units.sizes[u])
        banned = {int(unit_cluster[v]) for v in units.conflicts[u] if unit_cluster[v] >= 0}
        feasible = [t for t in range(k) if t not in banned and loads[t] + size <= bounds.upper]
        if not feasible:
            return None
        t = min(feasible, key=lambda t: (units.costs[u, t], t))
        unit_cluster[u] = t
        loads[t] += size
    return unit_cluster


def _dfs_feasible(units: _Units, k: int, bounds: BalanceBounds, node_budget: int = 1_000_000):
    """Pure feasibility search, most-constrained units first. Returns an
    assignment vector, None if exhaustively infeasible, or raises if the
    node budget runs out before the search space is exhausted."""
    m = len(units.members)
    order = sorted(range(m), key=lambda u: (-len(units.conflicts[u]), -units.sizes[u], u))
    unit_cluster = np.full(m, -1, dtype=int)
    loads = np.zeros(k, dtype=int)
    sizes_left = int(units.sizes.sum())
    nodes = 0

    def rec(pos: int, remaining: int) -> bool:
        nonlocal nodes
        nodes += 1
        if nodes > node_budget:
            raise InfeasibleError(
                "feasibility search exhausted its node budget without a verdict"
            )
        if pos == m:
            return bool(np.all(loads >= bounds.lower))
        if int(np.maximum(bounds.lower - loads, 0).sum()) > remaining:
            return False
        u = order[pos]
        size = int(units.sizes[u])
        banned = {int(unit_cluster[v]) for v in units.conflicts[u] if unit_cluster[v] >= 0}
        for t in range(k):
            if t in banned or loads[t] + size > bounds.upper:
                continue
            unit_cluster[u] = t
            loads[t] += size
            if rec(pos + 1, remaining - size):
                return True
            loads[t] -= size
            unit_cluster[u] = -1
        return False

    return unit_cluster if rec(0, sizes_left) else None


def _repair_lower(
    units: _Units, unit_cluster: np.ndarray, k: int, bounds: BalanceBounds
) -> bool:
    """Move cheapest-delta units into clusters below the lower bound."""
    loads = np.zeros(k, dtype=int)
    for u, t in enumerate(unit_cluster):
        loads[t] += units.sizes[u]
    while True:
        short = [t for t in range(k) if loads[t] < bounds.lower]
        if not short:
            return True
        target = short[0]
        best_move: tuple[float, int] | None = None
        for u in np.argsort(units.costs[:, target], kind="stable"):
            u = int(u)
            src = int(unit_cluster[u])
            if src == target:
                continue
            size = int(units.sizes[u])
            if loads[src] - size < bounds.lower or loads[target] + size > bounds.upper:
                continue
            if any(unit_cluster[v] == target for v in units.conflicts[u]):
                continue
            delta = float(units.costs[u, target] - units.costs[u, src])
            if best_move is None or delta < best_move[0]:
                best_move = (delta, u)
        if best_move is None:
            return False
        _, u = best_move
        src = int(unit_cluster[u])
        loads[src] -= units.sizes[u]
        loads[target] += units.sizes[u]
        unit_cluster[u] = target


def _local_search(
    units: _Units, unit_cluster: np.ndarray, k: int, bounds: BalanceBounds, move_budget: int
) -> None:
    m = len(units.members)
    loads = np.zeros(k, dtype=int)
    for u, t in enumerate(unit_cluster):
        loads[t] += units.sizes[u]
    moves = 0
    while moves < move_budget:
        improved = False
        # Single-unit relocations, scanned in unit order (first improvement).
        for u in range(m):
            src = int(unit_cluster[u])
            size = int(units.sizes[u])
            if loads[src] - size < bounds.lower:
                continue
            banned = {int(unit_cluster[v]) for v in units.conflicts[u]}
            for t in range(k):
                if t == src or t in banned or loads[t] + size > bounds.upper:
                    continue
                if units.costs[u, t] < units.costs[u, src] - 1e-12:
                    unit_cluster[u] = t
                    loads[src] -= size
                    loads[t] += size
                    moves += 1
                    improved = True
                    break
            if improved:
                break
        if improved:
            continue
        # Pairwise swaps.
        for u in range(m):
            a = int(unit_cluster[u])
            for v in range(u + 1, m):
                b = int(unit_cluster[v])
                if a == b:
                    continue
                delta = float(
                    units.costs[u, b] + units.costs[v, a] - units.costs[u, a] - units.costs[v, b]
                )
                if delta >= -1e-12:
                    continue
                da = loads[a] - units.sizes[u] + units.sizes[v]
                db = loads[b] - units.sizes[v] + units.sizes[u]
                if not (bounds.lower <= da <= bounds.upper and bounds.lower <= db <= bounds.upper):
                    continue
                if any(w != v and unit_cluster[w] == b for w in units.conflicts[u]):
                    continue
                if any(w != u and unit_cluster[w] == a for w in units.conflicts[v]):
                    continue
                unit_cluster[u], unit_cluster[v] = b, a
                loads[a] += units.sizes[v] - units.sizes[u]
                loads[b] += units.sizes[u] - units.sizes[v]
                moves += 1
                improved = True
                break
            if improved:
                break
        if not improved:
            return


def solve_heuristic(
    costs: np.ndarray,
    constraints: ConstraintSet,
    bounds: BalanceBounds,
    seed: int = 0,
    ids: list[int] | None = None,
) -> tuple[Assignment, float]:
    """Greedy regret construction + lower-bound repair + local search.

    Deterministic for a given seed; the seed only reshuffles construction
    order when the default regret order dead-ends. Always returns a feasible
    assignment or raises :class:`InfeasibleError`.
    """
    costs = np.asarray(costs, dtype=float)
    n, k = costs.shape
    ids = list(range(n)) if ids is None else list(ids)
    units = _build_units(costs, ids, constraints)
    _check_feasible_shape(units, k, bounds, n)
    m = len(units.members)

    sorted_costs = np.sort(units.costs, axis=1)
    regret = sorted_costs[:, 1] - sorted_costs[:, 0] if k > 1 else np.zeros(m)
    order = np.array(sorted(range(m), key=lambda u: (-regret[u], units.members[u][0])), dtype=int)

    rng = np.random.default_rng(seed)
    unit_cluster = _greedy_construct(units, k, bounds, order)
    attempts = 0
    while unit_cluster is None and attempts < 30:
        unit_cluster = _greedy_construct(units, k, bounds, rng.permutation(m))
        attempts += 1
    if unit_cluster is not None and not _repair_lower(units, unit_cluster, k, bounds):
        unit_cluster = None
    if unit_cluster is None:
        unit_cluster = _dfs_feasible(units, k, bounds)
        if unit_cluster is None:
            raise InfeasibleError("no assignment satisfies the constraints and bounds")

    _local_search(units, unit_cluster, k, bounds, move_budget=10 * n)
    total = float(units.costs[np.arange(m), unit_cluster].sum())
    return _make_assignment(units, unit_cluster, ids), total


def validate(
    assignment: Assignment,
    constraints: ConstraintSet,
    bounds: BalanceBounds,
    n_clusters: int | None = None,
    ids: list[int] | None = None,
) -> list[Violation]:
    """Check an assignment against every constraint; violations are data.

    ``ids``, when given, is the full sample roster (anything missing from the
    assignment is reported). ``n_clusters`` defaults to max index + 1.
    """
    violations: list[Violation] = []
    assigned = assignment.sample_cluster
    if ids is not None:
        missing = sorted(set(ids) - set(assigned))
        if missing:
            violations.append(
                Violation("unassigned", f"samples missing a cluster: {missing}", tuple(missing))
            )
    if n_clusters is None:
        n_clusters = max(assigned.values(), default=-1) + 1

    for gi, group in enumerate(constraints.must_groups):
        clusters = {assigned[i] for i in group if i in assigned}
        if len(clusters) > 1:
            violations.append(
                Violation(
                    "must_link_split",
                    f"must-link group {gi} {sorted(group)} spans clusters {sorted(clusters)}",
                    tuple(sorted(group)),
                )
            )
        expected = assignment.group_cluster.get(gi)
        if expected is not None and clusters and clusters != {expected}:
            violations.append(
                Violation(
                    "group_mismatch",
                    f"group {gi} members sit in {sorted(clusters)} but the group is "
                    f"assigned to {expected}",
                    tuple(sorted(group)),
                )
            )

    for p, q in sorted(constraints.cannot_pairs):
        if p in assigned and q in assigned and assigned[p] == assigned[q]:
            violations.append(
                Violation(
                    "cannot_link_joint",
                    f"cannot-link pair ({p}, {q}) shares cluster {assigned[p]}",
                    (p, q),
                )
            )

    sizes = [0] * n_clusters
    for t in assigned.values():
        if 0 <= t < n_clusters:
            sizes[t] += 1
        else:
            violations.append(Violation("bad_cluster", f"cluster index {t} out of range"))
    for t, size in enumerate(sizes):
        if size < bounds.lower:
            violations.append(
                Violation("size_lower", f"cluster {t} has {size} < L={bounds.lower} samples")
            )
        if size > bounds.upper:
            violations.append(
                Violation("size_upper", f"cluster {t} has {size} > U={bounds.upper} samples")
            )
    return violations
