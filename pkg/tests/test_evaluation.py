import math
from collections import Counter

import numpy as np
import pytest

from interclust.evaluation import LabeledPartition, kmeans, nmi, purity, rand_index

from .conftest import make_sample

# ---------------------------------------------------------------------------
# Brute-force definitional oracles
# ---------------------------------------------------------------------------


def purity_oracle(predicted, truth):
    clusters = {}
    for sid, cluster in predicted.items():
        clusters.setdefault(cluster, []).append(truth[sid])
    correct = sum(Counter(labs).most_common(1)[0][1] for labs in clusters.values())
    return correct / len(predicted)


def nmi_oracle(predicted, truth):
    """Direct entropy formula over the label distributions."""
    n = len(predicted)
    ids = list(predicted)
    px = Counter(predicted[i] for i in ids)
    py = Counter(truth[i] for i in ids)
    pxy = Counter((predicted[i], truth[i]) for i in ids)
    mi = 0.0
    for (cx, cy), count in pxy.items():
        p = count / n
        mi += p * math.log(p / ((px[cx] / n) * (py[cy] / n)))
    hx = -sum((c / n) * math.log(c / n) for c in px.values())
    hy = -sum((c / n) * math.log(c / n) for c in py.values())
    denom = (hx + hy) / 2
    if denom == 0:
        return 1.0
    return mi / denom


def rand_oracle(predicted, truth):
    """Literal pair loop."""
    ids = list(predicted)
    agree = total = 0
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            a, b = ids[i], ids[j]
            same_pred = predicted[a] == predicted[b]
            same_true = truth[a] == truth[b]
            agree += same_pred == same_true
            total += 1
    return agree / total


def random_partition(rng, n, k_pred, k_true):
    predicted = {i: int(rng.integers(k_pred)) for i in range(n)}
    truth = {i: int(rng.integers(k_true)) for i in range(n)}
    return LabeledPartition(predicted=predicted, truth=truth)


class TestPurity:
    def test_identity_partition(self):
        p = LabeledPartition(predicted={0: 0, 1: 1}, truth={0: "a", 1: "b"})
        assert purity(p) == 1.0

    def test_hand_counted(self):
        # clusters {A,A,B} and {B,B}: (2 + 2) / 5
        p = LabeledPartition(
            predicted={0: 0, 1: 0, 2: 0, 3: 1, 4: 1},
            truth={0: "A", 1: "A", 2: "B", 3: "B", 4: "B"},
        )
        assert purity(p) == pytest.approx(0.8)

    def test_single_cluster_is_modal_frequency(self, rng):
        truth = {i: int(rng.integers(3)) for i in range(50)}
        p = LabeledPartition(predicted={i: 0 for i in range(50)}, truth=truth)
        modal = Counter(truth.values()).most_common(1)[0][1]
        assert purity(p) == pytest.approx(modal / 50)

    def test_matches_oracle(self, rng):
        for _ in range(50):
            p = random_partition(rng, int(rng.integers(2, 40)), 4, 3)
            assert purity(p) == pytest.approx(purity_oracle(p.predicted, p.truth))

    def test_relabeling_invariance(self, rng):
        for _ in range(30):
            p = random_partition(rng, 25, 4, 3)
            perm = rng.permutation(4)
            relabeled = LabeledPartition(
                predicted={i: int(perm[c]) for i, c in p.predicted.items()}, truth=p.truth
            )
            assert purity(relabeled) == pytest.approx(purity(p))
            assert nmi(relabeled) == pytest.approx(nmi(p))
            assert rand_index(relabeled) == pytest.approx(rand_index(p))

    def test_refinement_monotone(self, rng):
        # splitting any cluster never lowers purity
        for _ in range(30):
            p = random_partition(rng, 30, 3, 3)
            split = {i: c if rng.random() < 0.5 else c + 3 for i, c in p.predicted.items()}
            refined = LabeledPartition(predicted=split, truth=p.truth)
            assert purity(refined) >= purity(p) - 1e-12

    def test_correcting_a_misplaced_sample_never_lowers_purity(self, rng):
        for _ in range(30):
            p = random_partition(rng, 20, 3, 3)
            base = purity(p)
            # find a sample not matching its cluster's dominant label and move
            # it to a cluster dominated by its own label
            clusters = {}
            for i, c in p.predicted.items():
                clusters.setdefault(c, []).append(p.truth[i])
            dominant = {c: Counter(labs).most_common(1)[0][0] for c, labs in clusters.items()}
            movable = [i for i, c in p.predicted.items() if p.truth[i] != dominant[c]]
            targets = {lab: c for c, lab in dominant.items()}
            moved = dict(p.predicted)
            for i in movable:
                if p.truth[i] in targets:
                    moved[i] = targets[p.truth[i]]
                    break
            assert purity(LabeledPartition(predicted=moved, truth=p.truth)) >= base - 1e-12

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            purity(LabeledPartition(predicted={}, truth={}))


class TestNmiRand:
    def test_identical_partitions(self):
        p = LabeledPartition(predicted={0: 0, 1: 1, 2: 0}, truth={0: "x", 1: "y", 2: "x"})
        assert nmi(p) == pytest.approx(1.0)
        assert rand_index(p) == pytest.approx(1.0)

    def test_nmi_matches_entropy_formula(self, rng):
        for _ in range(50):
            p = random_partition(rng, int(rng.integers(3, 40)), 4, 3)
            assert nmi(p) == pytest.approx(nmi_oracle(p.predicted, p.truth), abs=1e-9)

    def test_rand_matches_pair_loop(self, rng):
        for _ in range(30):
            p = random_partition(rng, int(rng.integers(2, 30)), 3, 4)
            assert rand_index(p) == pytest.approx(rand_oracle(p.predicted, p.truth))

    def test_rand_near_analytic_expectation_for_independent_partitions(self, rng):
        n = 1000
        p = random_partition(rng, n, 4, 5)
        pred_counts = np.array(list(Counter(p.predicted.values()).values()))
        true_counts = np.array(list(Counter(p.truth.values()).values()))
        same_pred = (pred_counts * (pred_counts - 1) / 2).sum() / (n * (n - 1) / 2)
        same_true = (true_counts * (true_counts - 1) / 2).sum() / (n * (n - 1) / 2)
        expectation = same_pred * same_true + (1 - same_pred) * (1 - same_true)
        assert rand_index(p) == pytest.approx(expectation, abs=0.05)

    def test_one_sided_trivial_partition_scores_zero_nmi(self):
        p = LabeledPartition(predicted={0: 0, 1: 1}, truth={0: "x", 1: "x"})
        assert nmi(p) == 0.0


class TestKmeans:
    def blob_samples(self, rng, n_per=15):
        pts = np.vstack(
            [rng.normal((0, 0), 0.4, (n_per, 2)), rng.normal((8, 8), 0.4, (n_per, 2))]
        )
        samples = [make_sample(i, [pts[i]]) for i in range(2 * n_per)]
        truth = {i: int(i >= n_per) for i in range(2 * n_per)}
        return samples, truth

    def test_separated_blobs_pure(self, rng):
        samples, truth = self.blob_samples(rng)
        assignment = kmeans(samples, 2, seed=0)
        p = LabeledPartition.from_assignment(assignment, truth)
        assert purity(p) == 1.0

    def test_k1_everything_in_cluster_zero(self, rng):
        samples, _ = self.blob_samples(rng)
        assignment = kmeans(samples, 1, seed=0)
        assert set(assignment.sample_cluster.values()) == {0}

    def test_k_exceeds_n(self):
        with pytest.raises(ValueError):
            kmeans([make_sample(0, [[1.0]])], 2)

    def test_wcss_non_increasing_over_lloyd_iterations(self, rng):
        from interclust.evaluation import _kmeans_pp_seeds, _lloyd

        x = rng.normal(size=(40, 3))
        centers = _kmeans_pp_seeds(x, 4, np.random.default_rng(0))
        prev = np.inf
        # run Lloyd one limited iteration at a time; WCSS must not increase
        for iters in range(1, 8):
            _, wcss = _lloyd(x, centers.copy(), max_iters=iters)
            assert wcss <= prev + 1e-9
            prev = wcss

    def test_deterministic_for_seed(self, rng):
        samples, _ = self.blob_samples(rng)
        a = kmeans(samples, 2, seed=5)
        b = kmeans(samples, 2, seed=5)
        assert a.sample_cluster == b.sample_cluster

    def test_uses_designated_variant(self, rng):
        # variant 1 is informative, variant 0 constant: designating variant 1
        # must recover the blobs
        pts = np.vstack([rng.normal((0, 0), 0.3, (10, 2)), rng.normal((6, 6), 0.3, (10, 2))])
        samples = [make_sample(i, [[1.0, 1.0], pts[i]]) for i in range(20)]
        truth = {i: int(i >= 10) for i in range(20)}
        assignment = kmeans(samples, 2, seed=0, variant=1)
        assert purity(LabeledPartition.from_assignment(assignment, truth)) == 1.0
        assert set(assignment.latent_choice.values()) == {1}
