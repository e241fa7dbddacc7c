import numpy as np
import pytest

from interclust.assignment import BalanceBounds, ConstraintSet, canonicalize
from interclust.evaluation import LabeledPartition, purity
from interclust.model import Assignment, ModelParams, objective, score, score_matrix
from interclust.training import (
    SolveSpec,
    alternate,
    bounds_from_fractions,
    init_params,
    update_weights,
)

from .conftest import make_sample, random_samples


def cloud_samples(seed=0, n_per=10):
    """Two angularly separated Gaussian blobs, shuffled ids."""
    rng = np.random.default_rng(seed)
    pts = np.vstack(
        [rng.normal((2, 8), 0.5, (n_per, 2)), rng.normal((8, 2), 0.5, (n_per, 2))]
    )
    order = rng.permutation(2 * n_per)
    samples = [make_sample(i, [pts[order[i]]]) for i in range(2 * n_per)]
    labels = {i: int(order[i] >= n_per) for i in range(2 * n_per)}
    return samples, labels


class TestInitParams:
    def test_all_ones(self):
        params = init_params(3, 2)
        assert params.weights.shape == (2, 3)
        assert np.all(params.weights == 1.0)

    def test_scoring_ranks_by_component_sum(self, rng):
        sample = make_sample(0, rng.normal(size=(4, 3)))
        params = init_params(3, 2)
        val, idx = score(sample, params.weights[0])
        sums = sample.variant_matrix.sum(axis=1)
        assert idx == int(np.argmax(sums))
        assert val == pytest.approx(float(sums.max()))

    def test_identical_scores_across_clusters(self, rng):
        samples = random_samples(rng, 5, 3)
        s, _ = score_matrix(samples, init_params(3, 4))
        assert np.allclose(s, s[:, [0]])


class TestBoundsFromFractions:
    def test_common_fraction_settings(self):
        # typical average-cluster-size fraction configurations
        assert bounds_from_fractions(48, 2, (0.9, 1.1)) == BalanceBounds(21, 27)
        assert bounds_from_fractions(90, 5, (0.4, 1.6)) == BalanceBounds(7, 29)

    def test_infeasible_rounding_is_repaired(self):
        b = bounds_from_fractions(5, 2, (1.0, 1.0))
        assert b.lower * 2 <= 5 <= b.upper * 2

    def test_tiny_upper_fraction_repaired(self):
        b = bounds_from_fractions(10, 3, (0.0, 0.1))
        assert b.upper * 3 >= 10


class TestUpdateWeights:
    def test_no_samples_returns_zero_weights(self):
        spec = SolveSpec(k=2, lam=0.5)
        warm = ModelParams(weights=np.ones((2, 3)), lam=0.5)
        out = update_weights([], Assignment(sample_cluster={}), spec, warm)
        assert np.all(out.weights == 0.0)

    def test_single_sample_vs_grid_search(self):
        # one sample, one 1-D variant, K=2: the weight space is a 2-D slice
        # searchable by brute force
        phi = 2.0
        sample = make_sample(0, [[phi]])
        lam = 0.001
        spec = SolveSpec(k=2, lam=lam, inner_max_iters=800)
        warm = ModelParams(weights=np.ones((2, 1)), lam=lam)
        assignment = Assignment(sample_cluster={0: 0})
        out = update_weights([sample], assignment, spec, warm)
        achieved = objective([sample], out, assignment)

        grid = np.linspace(-40.0, 40.0, 1601)
        best = min(
            0.5 * lam * (w0**2 + w1**2) + 0.5 * max(0.0, 1.0 - w0 * phi + w1 * phi)
            for w0 in grid
            for w1 in grid
        )
        assert achieved <= best + 1e-3
        # margin cost strictly dropped from the warm start (hinge was 1 there)
        warm_obj = objective([sample], warm, assignment)
        assert achieved < warm_obj
        reg = 0.5 * lam * float(np.sum(out.weights**2))
        assert achieved - reg < 1.0  # hinge below its warm-start value

    def test_never_worse_than_warm_start(self, rng):
        for trial in range(50):
            n, k, d = int(rng.integers(1, 8)), int(rng.integers(2, 4)), 3
            samples = random_samples(rng, n, d)
            lam = float(10.0 ** rng.uniform(-3, 3))
            spec = SolveSpec(k=k, lam=lam, inner_max_iters=150)
            warm = ModelParams(weights=rng.normal(size=(k, d)), lam=lam)
            assignment = Assignment(sample_cluster={i: int(rng.integers(k)) for i in range(n)})
            before = objective(samples, warm, assignment)
            after = objective(samples, update_weights(samples, assignment, spec, warm), assignment)
            assert after <= before + 1e-9


class TestAlternate:
    def test_separable_clouds_reach_full_purity(self):
        samples, labels = cloud_samples(seed=0)
        spec = SolveSpec(k=2, lam=1.0, seed=0)
        report = alternate(samples, ConstraintSet(), spec, init_params(2, 2, 1.0))
        assert purity(LabeledPartition.from_assignment(report.final_assignment, labels)) == 1.0

    def test_trace_non_increasing_with_exact_assignment(self, rng):
        for trial in range(20):
            n, k = int(rng.integers(4, 9)), int(rng.integers(2, 4))
            samples = random_samples(rng, n, 3)
            lam = float(10.0 ** rng.uniform(-2, 2))
            spec = SolveSpec(
                k=k, lam=lam, seed=trial, assignment_mode="exact",
                max_outer_iters=12, inner_max_iters=150,
            )
            report = alternate(samples, ConstraintSet(), spec, init_params(3, k, lam))
            trace = report.objective_trace
            assert all(trace[i + 1] <= trace[i] + 1e-6 for i in range(len(trace) - 1)), trace

    def test_must_links_covering_classes_force_partition(self):
        samples, labels = cloud_samples(seed=1, n_per=6)
        groups = [
            {i for i, lab in labels.items() if lab == 0},
            {i for i, lab in labels.items() if lab == 1},
        ]
        constraints = canonicalize(groups, set())
        spec = SolveSpec(k=2, lam=1.0, seed=0)
        report = alternate(samples, constraints, spec, init_params(2, 2, 1.0))
        clusters = {
            frozenset(i for i, t in report.final_assignment.sample_cluster.items() if t == c)
            for c in (0, 1)
        }
        assert clusters == {frozenset(groups[0]), frozenset(groups[1])}

    def test_warm_start_begins_at_previous_objective(self):
        samples, _ = cloud_samples(seed=2, n_per=6)
        spec = SolveSpec(k=2, lam=1.0, seed=0, outer_tol=1e-8, max_outer_iters=60)
        first = alternate(samples, ConstraintSet(), spec, init_params(2, 2, 1.0))
        second = alternate(samples, ConstraintSet(), spec, first.final_params)
        assert second.initial_objective <= first.objective_trace[-1] + 1e-9

    def test_final_assignment_validates_and_has_latent_choices(self, rng):
        samples = random_samples(rng, 8, 3)
        spec = SolveSpec(k=2, lam=0.5, seed=0)
        report = alternate(samples, ConstraintSet(), spec, init_params(3, 2, 0.5))
        assert set(report.final_assignment.latent_choice) == set(range(8))
        s, h = score_matrix(samples, report.final_params)
        for i in range(8):
            t = report.final_assignment.sample_cluster[i]
            assert report.final_assignment.latent_choice[i] == h[i, t]

    def test_round_robin_symmetry_breaking(self):
        # identical all-ones weights make every score row degenerate; the
        # first assignment deals samples out in id order
        samples = [make_sample(i, [[1.0, float(i % 3)]]) for i in range(6)]
        spec = SolveSpec(k=2, lam=1e6, seed=0, max_outer_iters=1)
        report = alternate(samples, ConstraintSet(), spec, init_params(2, 2, 1e6))
        # lam is huge so weights collapse and the round-robin split survives
        assert [report.final_assignment.sample_cluster[i] for i in range(6)] == [0, 1, 0, 1, 0, 1]

    def test_infeasible_constraints_propagate(self):
        from interclust.assignment import InfeasibleError

        samples = [make_sample(i, [[1.0, 2.0]]) for i in range(4)]
        constraints = canonicalize([], {(0, 1), (0, 2), (1, 2)})  # needs 3 clusters
        spec = SolveSpec(k=2, lam=1.0, seed=0)
        with pytest.raises(InfeasibleError):
            alternate(samples, constraints, spec, init_params(2, 2, 1.0))

    def test_joint_weight_lambda_scaling_keeps_first_assignment(self, rng):
        # when every assigned-cluster margin exceeds 1, its hinge vanishes in
        # both scalings, so W -> cW with lambda -> lambda/c leaves the first
        # assignment-step argmin (a zero-cost solution) unchanged
        from interclust.assignment import BalanceBounds, assignment_cost, solve_exact

        samples = [make_sample(i, [[10.0 * (i % 2) + 1.0, 10.0 * ((i + 1) % 2) + 1.0]])
                   for i in range(6)]
        w = np.array([[4.0, 0.0], [0.0, 4.0]])
        for c in (0.5, 3.0, 20.0):
            base = ModelParams(weights=w, lam=1.0)
            scaled = ModelParams(weights=c * w, lam=1.0 / c)
            costs_base = assignment_cost(score_matrix(samples, base)[0])
            costs_scaled = assignment_cost(score_matrix(samples, scaled)[0])
            a_base, cost_base = solve_exact(costs_base, ConstraintSet(), BalanceBounds(0, 6))
            a_scaled, cost_scaled = solve_exact(costs_scaled, ConstraintSet(), BalanceBounds(0, 6))
            assert cost_base == cost_scaled == 0.0  # margins > 1: hinges vanish
            assert a_base.sample_cluster == a_scaled.sample_cluster

    def test_report_shape(self):
        samples, _ = cloud_samples(seed=3, n_per=5)
        spec = SolveSpec(k=2, lam=1.0, seed=0)
        report = alternate(samples, ConstraintSet(), spec, init_params(2, 2, 1.0))
        assert report.outer_iters == len(report.objective_trace)
        assert report.wall_time >= 0.0
        assert np.isfinite(report.objective_trace).all()
        reg = 0.5 * 1.0 * float(np.sum(report.final_params.weights**2))
        assert report.slack_total == pytest.approx(report.objective_trace[-1] - reg)


class TestSolveSpecValidation:
    def test_rejects_bad_k(self):
        with pytest.raises(ValueError):
            SolveSpec(k=1, lam=1.0)

    def test_rejects_bad_lambda(self):
        with pytest.raises(ValueError):
            SolveSpec(k=2, lam=-1.0)

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            SolveSpec(k=2, lam=1.0, assignment_mode="magic")
