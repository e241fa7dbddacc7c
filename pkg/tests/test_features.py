import numpy as np
import pytest

from interclust.features import (
    GaussianMixture,
    PercentileBins,
    SceneContext,
    Trajectory,
    VariantSpec,
    build_dataset,
    build_sample,
    distance_histogram,
    fit_gmm,
    load_trajectories,
    nearest_entities,
    percentile_edges,
    soft_histogram,
    velocity_feature,
)
from interclust.model import DimensionMismatchError


def traj(tid, pts, kind="person", label=None, appearance=None):
    return Trajectory(id=tid, kind=kind, points=np.asarray(pts, dtype=float),
                      label=label, appearance=appearance)


def line_traj(tid, n, start=(0.0, 0.0), step=(1.0, 0.0), kind="person", t0=0):
    pts = [
        [t0 + t, start[0] + t * step[0], start[1] + t * step[1]] for t in range(n)
    ]
    return traj(tid, pts, kind=kind)


class TestFitGmm:
    def test_single_component_closed_form(self, rng):
        x = rng.normal(3.0, 2.0, size=200)
        gmm = fit_gmm(x, 1, seed=0)
        assert gmm.means[0, 0] == pytest.approx(x.mean(), abs=1e-9)
        assert gmm.variances[0, 0] == pytest.approx(x.var(), rel=1e-6)

    def test_two_blob_recovery(self):
        # generate-and-fit oracle: known parameters must be recovered
        rng = np.random.default_rng(42)
        x = np.concatenate([rng.normal(0, 0.5, 100), rng.normal(10, 0.5, 100)])
        gmm = fit_gmm(x, 2, seed=0)
        means = sorted(gmm.means[:, 0])
        assert abs(means[0] - 0.0) < 0.3
        assert abs(means[1] - 10.0) < 0.3

    def test_loglik_trace_non_decreasing(self, rng):
        for trial in range(10):
            x = rng.normal(size=(80, 2)) * rng.uniform(0.5, 3) + rng.normal(size=2)
            gmm = fit_gmm(x, int(rng.integers(1, 5)), seed=trial)
            trace = gmm.loglik_trace
            assert all(
                trace[i + 1] >= trace[i] - 1e-9 * max(1.0, abs(trace[i]))
                for i in range(len(trace) - 1)
            )

    def test_responsibilities_sum_to_one(self, rng):
        x = rng.normal(size=(60, 1)) * 3
        gmm = fit_gmm(x, 3, seed=1)
        for value in rng.normal(size=(50, 1)) * 3:
            assert soft_histogram(value, gmm).sum() == pytest.approx(1.0)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            fit_gmm([1.0, np.nan, 2.0], 1)

    def test_rejects_too_few_distinct(self):
        with pytest.raises(ValueError):
            fit_gmm([1.0, 1.0, 1.0], 2)


class TestSoftHistogram:
    def well_separated(self):
        return GaussianMixture(
            weights=np.array([0.5, 0.5]),
            means=np.array([[0.0], [100.0]]),
            variances=np.array([[1.0], [1.0]]),
        )

    def test_value_at_component_mean(self):
        # direct Bayes evaluation: a point at a far-separated mean owns it
        resp = soft_histogram([0.0], self.well_separated())
        assert resp[0] > 0.99

    def test_midpoint_of_symmetric_mixture(self):
        resp = soft_histogram([50.0], self.well_separated())
        assert np.allclose(resp, [0.5, 0.5])

    def test_sums_to_one_on_random_inputs(self, rng):
        gmm = fit_gmm(rng.normal(size=(50, 2)), 3, seed=0)
        for x in rng.normal(size=(1000, 2)) * 5:
            assert soft_histogram(x, gmm).sum() == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            soft_histogram([1.0, 2.0], self.well_separated())


class TestPercentileEdges:
    def test_reference_quantiles(self):
        # oracle: numpy linear-interpolation quantiles of 1..100
        values = list(range(1, 101))
        bins = percentile_edges(values, 4)
        expected = np.quantile(values, [0.25, 0.5, 0.75])
        assert np.allclose(bins.edges, expected)
        assert np.allclose(bins.edges, (25.75, 50.5, 75.25))
        assert not bins.degenerate

    def test_identical_values_degenerate(self):
        bins = percentile_edges([7.0] * 20, 4)
        assert bins.degenerate
        assert bins.n_bins == 1

    def test_strictly_increasing_with_enough_distinct(self, rng):
        for _ in range(25):
            n_bins = int(rng.integers(2, 8))
            values = rng.normal(size=200)  # continuous, plenty distinct
            bins = percentile_edges(values, n_bins)
            assert all(b > a for a, b in zip(bins.edges, bins.edges[1:]))
            assert not bins.degenerate

    def test_empty_input(self):
        with pytest.raises(ValueError):
            percentile_edges([], 4)


class TestDistanceHistogram:
    def bins(self):
        return PercentileBins(edges=(2.0, 5.0, 10.0))

    def test_constant_distance_one_hot(self):
        a = traj(0, [[t, 0.0, 0.0] for t in range(5)])
        b = traj(1, [[t, 3.0, 0.0] for t in range(5)])
        hist, empty = distance_histogram(a, b, self.bins(), (0, 4))
        assert not empty
        assert hist.tolist() == [0.0, 1.0, 0.0, 0.0]  # d=3 falls in (2, 5]

    def test_no_overlap_is_empty(self):
        a = traj(0, [[t, 0.0, 0.0] for t in range(5)])
        b = traj(1, [[t + 100, 0.0, 0.0] for t in range(5)])
        hist, empty = distance_histogram(a, b, self.bins(), (0, 4))
        assert empty
        assert np.all(hist == 0.0)

    def test_matches_per_frame_loop(self, rng):
        # naive re-implementation oracle on random walks
        for _ in range(10):
            n = 30
            a_pts = np.column_stack([np.arange(n), rng.normal(size=(n, 2)).cumsum(axis=0)])
            b_pts = np.column_stack([np.arange(n), rng.normal(size=(n, 2)).cumsum(axis=0)])
            a, b = traj(0, a_pts), traj(1, b_pts)
            bins = self.bins()
            t0, t1 = 5, 20
            hist, empty = distance_histogram(a, b, bins, (t0, t1))
            counts = np.zeros(bins.n_bins)
            for t in range(t0, t1 + 1):
                d = float(np.hypot(*(a_pts[t, 1:] - b_pts[t, 1:])))
                j = 0
                while j < len(bins.edges) and d > bins.edges[j]:
                    j += 1
                counts[j] += 1
            assert not empty
            assert np.allclose(hist, counts / counts.sum())

    def test_invalid_window(self):
        a = traj(0, [[t, 0.0, 0.0] for t in range(5)])
        with pytest.raises(ValueError):
            distance_histogram(a, a, self.bins(), (3, 1))
        with pytest.raises(ValueError):
            distance_histogram(a, a, self.bins(), (0, 99))


class TestVelocityFeature:
    def gmm(self):
        return GaussianMixture(
            weights=np.array([0.5, 0.5]),
            means=np.array([[0.0], [2.0]]),
            variances=np.array([[0.01], [0.01]]),
        )

    def test_stationary_speed_zero(self):
        t = traj(0, [[i, 5.0, 5.0] for i in range(10)])
        resp = velocity_feature(t, (0, 9), self.gmm())
        assert resp[0] > 0.99  # responsibility of the zero-speed component

    def test_constant_velocity_exact(self):
        t = line_traj(0, 11, step=(2.0, 0.0))
        inside = velocity_feature(t, (0, 10), self.gmm())
        assert inside[1] > 0.99  # ||(20,0)-(0,0)|| / 10 = 2.0

    def test_matches_direct_computation(self, rng):
        gmm = fit_gmm(rng.uniform(0, 3, size=50), 3, seed=0)
        for _ in range(10):
            n = 20
            pts = np.column_stack([np.arange(n), rng.normal(size=(n, 2)).cumsum(axis=0)])
            t = traj(0, pts)
            got = velocity_feature(t, (3, 15), gmm)
            speed = np.linalg.norm(pts[15, 1:] - pts[3, 1:]) / 12.0
            assert np.allclose(got, soft_histogram([speed], gmm))

    def test_too_few_points(self):
        t = traj(0, [[0, 0.0, 0.0], [5, 1.0, 0.0]])
        with pytest.raises(ValueError):
            velocity_feature(t, (1, 4), self.gmm())


class TestNearestEntities:
    def test_single_candidates(self):
        focal = line_traj(0, 10)
        person = line_traj(1, 10, start=(0, 3))
        vehicle = line_traj(2, 10, start=(0, 8), kind="vehicle")
        ctx = nearest_entities(focal, [focal, person, vehicle])
        assert ctx.nearest_person.id == 1
        assert ctx.nearest_vehicle.id == 2

    def test_picks_smaller_constant_distance(self):
        focal = line_traj(0, 10)
        near = line_traj(1, 10, start=(0, 3))
        far = line_traj(2, 10, start=(0, 5))
        ctx = nearest_entities(focal, [near, far])
        assert ctx.nearest_person.id == 1

    def test_absent_kind_is_none(self):
        focal = line_traj(0, 10)
        assert nearest_entities(focal, []).nearest_vehicle is None

    def test_matches_explicit_median_oracle(self, rng):
        for _ in range(10):
            focal_pts = np.column_stack([np.arange(25), rng.normal(size=(25, 2)).cumsum(axis=0)])
            focal = traj(0, focal_pts)
            candidates = []
            medians = {}
            for cid in range(1, 6):
                start = int(rng.integers(0, 15))
                n = int(rng.integers(5, 25 - start + 1))
                pts = np.column_stack(
                    [np.arange(start, start + n), rng.normal(scale=5, size=(n, 2)).cumsum(axis=0)]
                )
                candidates.append(traj(cid, pts))
                ds = [
                    float(np.hypot(*(focal_pts[t, 1:] - pts[t - start, 1:])))
                    for t in range(start, start + n)
                ]
                medians[cid] = float(np.median(ds))
            ctx = nearest_entities(focal, candidates)
            expected = min(sorted(medians), key=lambda c: (medians[c], c))
            assert ctx.nearest_person.id == expected


def fitted_spec(trajectories, **kwargs):
    from interclust.features import fit_quantizers

    spec = VariantSpec(**kwargs)
    contexts = [nearest_entities(t, trajectories) for t in trajectories if t.kind == "person"]
    return fit_quantizers(contexts, spec)


class TestBuildSample:
    def scene(self, n_frames):
        focal = line_traj(0, n_frames, step=(0.8, 0.1))
        person = line_traj(1, n_frames, start=(0, 2), step=(0.8, 0.1))
        vehicle = line_traj(2, n_frames, start=(10, 10), kind="vehicle")
        return focal, person, vehicle

    def test_exact_window_gives_single_variant(self):
        trajectories = list(self.scene(20))
        spec = fitted_spec(trajectories, window_frames=20, stride=10, role_swap=False,
                           n_velocity_components=2, n_distance_bins=3)
        ctx = nearest_entities(trajectories[0], trajectories)
        sample = build_sample(ctx, spec)
        assert len(sample.variants) == 1

    def test_offset_times_role_count(self):
        # 2W frames, stride W/2, swap on: 3 offsets x 2 roles (enumerated)
        trajectories = list(self.scene(40))
        spec = fitted_spec(trajectories, window_frames=20, stride=10, role_swap=True,
                           n_velocity_components=2, n_distance_bins=3)
        ctx = nearest_entities(trajectories[0], trajectories)
        sample = build_sample(ctx, spec)
        assert len(sample.variants) == 6

    def test_double_swap_is_identity(self):
        trajectories = list(self.scene(40))
        spec = fitted_spec(trajectories, window_frames=20, stride=10, role_swap=True,
                           n_velocity_components=2, n_distance_bins=3)
        ctx = nearest_entities(trajectories[0], trajectories)
        sample = build_sample(ctx, spec)
        by_tag = {v.latent_tag: v for v in sample.variants}
        for tag, variant in by_tag.items():
            t0, t1, swap = tag.split(":")
            twin = by_tag[f"{t0}:{t1}:{1 - int(swap)}"]
            blocks = np.split(variant.values, [2, 4, 7, 10])
            twin_blocks = np.split(twin.values, [2, 4, 7, 10])
            # swapping twice reproduces the original: the twin's twin is the
            # original array, and the velocity blocks are exchanged
            assert np.array_equal(blocks[0], twin_blocks[1])
            assert np.array_equal(blocks[1], twin_blocks[0])
            assert np.array_equal(blocks[2], twin_blocks[2])
            assert np.array_equal(blocks[3], twin_blocks[3])

    def test_short_trajectory_single_fullspan_variant(self):
        trajectories = list(self.scene(8))
        spec = fitted_spec(trajectories, window_frames=20, stride=10,
                           n_velocity_components=2, n_distance_bins=3)
        ctx = nearest_entities(trajectories[0], trajectories)
        assert len(build_sample(ctx, spec).variants) == 1

    def test_blocks_normalized_or_flagged_empty(self):
        focal = line_traj(0, 30)
        lonely = [focal]  # no person, no vehicle nearby
        spec = VariantSpec(window_frames=10, stride=5, n_velocity_components=2,
                           n_distance_bins=3)
        gmm = fit_gmm([0.0, 0.5, 1.0, 1.5], 2, seed=0)
        spec = spec.__class__(**{**spec.__dict__, "velocity_gmm": gmm,
                                 "distance_bins": PercentileBins(edges=(1.0, 2.0))})
        ctx = nearest_entities(focal, lonely)
        sample = build_sample(ctx, spec)
        for v in sample.variants:
            vel_f, vel_o, dist_p, dist_v, flags = np.split(v.values, [2, 4, 7, 10])
            for block, flag in zip((vel_f, vel_o, dist_p, dist_v), flags):
                if flag == 1.0:
                    assert block.sum() == pytest.approx(1.0)
                else:
                    assert np.all(block == 0.0)
            assert flags.tolist() == [1.0, 0.0, 0.0, 0.0]

    def test_dimension_constant_across_samples(self):
        trajectories = []
        for base in (0, 1):
            f = line_traj(10 * base, 25 + 10 * base, start=(base, base))
            p = line_traj(10 * base + 1, 25 + 10 * base, start=(base, base + 2))
            v = line_traj(10 * base + 2, 25 + 10 * base, start=(base + 9, base + 9), kind="vehicle")
            trajectories += [f, p, v]
        spec = fitted_spec(trajectories, window_frames=10, stride=5,
                           n_velocity_components=3, n_distance_bins=4)
        dims = set()
        for t in trajectories:
            if t.kind == "person":
                dims.add(build_sample(nearest_entities(t, trajectories), spec).dimension)
        assert len(dims) == 1


class TestTranslationInvariance:
    def test_features_depend_only_on_relative_geometry(self, rng):
        for trial in range(10):
            n = 30
            offset = rng.uniform(-500, 500, size=2)
            paths = [rng.normal(size=(n, 2)).cumsum(axis=0) + rng.uniform(-5, 5, 2)
                     for _ in range(3)]
            before, after = [], []
            for shift in (np.zeros(2), offset):
                pts = [np.column_stack([np.arange(n), p + shift]) for p in paths]
                trajectories = [
                    traj(0, pts[0]),
                    traj(1, pts[1]),
                    traj(2, pts[2], kind="vehicle"),
                ]
                spec = fitted_spec(trajectories, window_frames=10, stride=5,
                                   n_velocity_components=2, n_distance_bins=3)
                ctx = nearest_entities(trajectories[0], trajectories)
                sample = build_sample(ctx, spec)
                (before if shift[0] == 0 and shift[1] == 0 else after).append(
                    np.concatenate([v.values for v in sample.variants])
                )
            assert np.allclose(before[0], after[0], atol=1e-9)


class TestAppearanceBlocks:
    def scene_with_appearance(self, rng):
        # accelerating focal and a drifting companion so speeds and distances
        # vary enough to fit full-size quantizers
        n = 30
        focal_pts = [[t, 0.05 * t * t, 0.0] for t in range(n)]
        other_pts = [[t, 0.05 * t * t, 2.0 + 0.1 * t] for t in range(n)]
        vehicle_pts = [[t, 30.0, 30.0] for t in range(n)]
        focal_app = rng.normal(0.0, 1.0, size=(n, 3))
        other_app = rng.normal(4.0, 1.0, size=(n, 3))
        return [
            traj(0, focal_pts, appearance=focal_app),
            traj(1, other_pts, appearance=other_app),
            traj(2, vehicle_pts, kind="vehicle"),
        ]

    def test_appearance_block_appended_and_normalized(self, rng):
        trajectories = self.scene_with_appearance(rng)
        spec = fitted_spec(trajectories, window_frames=10, stride=5,
                           n_velocity_components=2, n_distance_bins=3,
                           n_appearance_components=2)
        assert spec.appearance_gmm is not None
        sample = build_sample(nearest_entities(trajectories[0], trajectories), spec)
        # blocks: vel(2) vel(2) dist(3) dist(3) app(2) flags(5)
        assert sample.dimension == 2 + 2 + 3 + 3 + 2 + 5
        for v in sample.variants:
            app = v.values[10:12]
            flags = v.values[12:]
            assert flags[4] == 1.0
            assert app.sum() == pytest.approx(1.0)

    def test_role_swap_takes_other_appearance(self, rng):
        trajectories = self.scene_with_appearance(rng)
        spec = fitted_spec(trajectories, window_frames=10, stride=5, role_swap=True,
                           n_velocity_components=2, n_distance_bins=3,
                           n_appearance_components=2)
        sample = build_sample(nearest_entities(trajectories[0], trajectories), spec)
        by_tag = {v.latent_tag: v for v in sample.variants}
        plain = next(v for tag, v in by_tag.items() if tag.endswith(":0"))
        twin = by_tag[plain.latent_tag[:-1] + "1"]
        # appearance distributions of the two trajectories are far apart, so
        # the swapped variant must carry a different appearance histogram
        assert not np.allclose(plain.values[10:12], twin.values[10:12])

    def test_no_appearance_data_block_absent_flag(self, rng):
        trajectories = self.scene_with_appearance(rng)
        bare = [
            traj(10, trajectories[0].points.tolist()),
            traj(11, trajectories[1].points.tolist()),
            traj(12, trajectories[2].points.tolist(), kind="vehicle"),
        ]
        spec = fitted_spec(trajectories, window_frames=10, stride=5,
                           n_velocity_components=2, n_distance_bins=3,
                           n_appearance_components=2)
        sample = build_sample(nearest_entities(bare[0], bare), spec)
        for v in sample.variants:
            assert np.all(v.values[10:12] == 0.0)
            assert v.values[12:][4] == 0.0


class TestTrajectoryIO:
    DOC = {
        "trajectories": [
            {"id": 0, "kind": "person", "points": [[0, 0, 0], [1, 1, 0]], "label": "walk",
             "mystery_field": 42},
            {"id": 1, "kind": "vehicle", "points": [[0, 5, 5], [1, 5, 5]]},
        ],
        "frame_rate": 10.0,
        "another_unknown": True,
    }

    def test_load_ignores_unknown_fields(self):
        trajectories, rate = load_trajectories(self.DOC)
        assert rate == 10.0
        assert [t.id for t in trajectories] == [0, 1]
        assert trajectories[0].label == "walk"
        assert trajectories[1].kind == "vehicle"

    def test_load_from_file(self, tmp_path):
        import json

        path = tmp_path / "trajs.json"
        path.write_text(json.dumps(self.DOC))
        trajectories, rate = load_trajectories(path)
        assert len(trajectories) == 2

    def test_strictly_increasing_time_enforced(self):
        with pytest.raises(ValueError):
            traj(0, [[0, 0, 0], [0, 1, 1]])

    def test_build_dataset_featurizes_labeled_persons_only(self):
        focal = line_traj(0, 25)
        focal = Trajectory(id=0, kind="person", points=focal.points, label="walk")
        companion = line_traj(1, 25, start=(0, 2))
        vehicle = line_traj(2, 25, start=(8, 8), kind="vehicle")
        samples, labels, spec, ctxs = build_dataset(
            [focal, companion, vehicle],
            VariantSpec(window_frames=10, stride=5, n_velocity_components=2, n_distance_bins=3),
        )
        assert [s.id for s in samples] == [0]
        assert labels == {0: "walk"}
