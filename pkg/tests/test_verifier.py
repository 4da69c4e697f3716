import numpy as np
import pytest

from tilecert import bounds, scene, verifier
from tilecert.bounds import OutputIntervals, ibp_bounds
from tilecert.network import forward, forward_batch, load_weights
from tilecert.tiling import (ClassSet, StateRegion, StateSpace, bounding_box,
                             make_grid)
from tilecert.verifier import (NOT_COVERED, TileResult, global_bound,
                               local_bound, read_report_csv, run_tiler,
                               tile_error_classification,
                               tile_error_regression, write_report_csv)


@pytest.fixture(scope="module")
def estimator_net(assets_dir):
    return load_weights(assets_dir / "estimator.json")


@pytest.fixture(scope="module")
def small_run(cfg, estimator_net):
    space = StateSpace((0.0, 4.0), (0.0, 4.0))
    report = run_tiler(space, 0.4, 0.4, cfg, estimator_net, method="ibp")
    boxes = [bounding_box(r.region, cfg) for r in report.results]
    return report, boxes


def dummy_result(i, j, e):
    region = StateRegion((i, j), (0.0, 1.0), (0.0, 1.0))
    out = OutputIntervals(np.zeros(2), np.ones(2))
    return TileResult((i, j), region, (region.delta, region.theta), out,
                      tuple(np.atleast_1d(e)))


class TestErrorFormulas:
    def test_perfect_net_residual_equals_truth_range(self):
        assert tile_error_regression((0.0, 1.0), (0.0, 1.0)) == 1.0

    def test_interior_point_prediction(self):
        assert tile_error_regression((5.0, 6.0), (5.5, 5.5)) == 0.5

    def test_wide_output_interval(self):
        assert tile_error_regression((0.0, 0.1), (-2.0, 3.0)) == 3.0

    def test_classification_separated_scores(self):
        scores = OutputIntervals(np.array([0.0, 2.0]), np.array([1.0, 3.0]))
        assert tile_error_classification(ClassSet([1]), scores) == 0

    def test_classification_ambiguous_truth(self):
        scores = OutputIntervals(np.array([0.0, 2.0]), np.array([1.0, 3.0]))
        assert tile_error_classification(ClassSet([1, 2]), scores) == 1

    def test_classification_overlapping_scores(self):
        scores = OutputIntervals(np.array([0.0, 1.0]), np.array([2.0, 3.0]))
        assert tile_error_classification(ClassSet([1]), scores) == 1

    def test_classification_error_paths(self):
        scores = OutputIntervals(np.array([0.0]), np.array([1.0]))
        with pytest.raises(ValueError):
            tile_error_classification(ClassSet([0]), scores)

    def test_global_bound_is_max(self):
        results = [dummy_result(0, 0, (0.5, 0.1)),
                   dummy_result(0, 1, (12.66, 0.2)),
                   dummy_result(1, 0, (3.2, 0.05))]
        assert global_bound(results) == (12.66, 0.2)

    def test_global_bound_single_tile(self):
        assert global_bound([dummy_result(0, 0, (1.5, 2.5))]) == (1.5, 2.5)

    def test_global_bound_all_zero_classification(self):
        results = [dummy_result(0, k, (0.0,)) for k in range(3)]
        assert global_bound(results) == (0.0,)

    def test_global_bound_empty_is_error(self):
        with pytest.raises(ValueError):
            global_bound([])


class TestSingleTilePipeline:
    def test_degenerate_space_hand_checked(self, cfg, estimator_net):
        space = StateSpace((5.0, 5.0), (10.0, 10.0))
        report = run_tiler(space, 0.4, 0.4, cfg, estimator_net)
        assert len(report.results) == 1
        res = report.results[0]
        assert res.region.delta == (5.0, 5.0)
        assert res.truth == ((5.0, 5.0), (10.0, 10.0))
        # recompute every step independently of run_tiler
        box = bounding_box(res.region, cfg)
        out = ibp_bounds(estimator_net, box)
        want = (tile_error_regression((5.0, 5.0), (out.lo[0], out.hi[0])),
                tile_error_regression((10.0, 10.0), (out.lo[1], out.hi[1])))
        assert res.errors == want
        assert report.global_bounds == want
        # point tile: bound collapses to |forward - truth| up to fp noise
        img = scene.render(scene.CameraState(5.0, 10.0), cfg)
        y = forward(estimator_net, img)
        actual = (abs(y[0] - 5.0), abs(y[1] - 10.0))
        assert res.errors[0] == pytest.approx(actual[0], abs=1e-6)
        assert res.errors[1] == pytest.approx(actual[1], abs=1e-6)

    def test_report_invariant_enforced(self, cfg, estimator_net):
        space = StateSpace((5.0, 5.0), (10.0, 10.0))
        report = run_tiler(space, 0.4, 0.4, cfg, estimator_net)
        import dataclasses
        with pytest.raises(ValueError):
            dataclasses.replace(report, global_bounds=(0.0, 0.0))


class TestRunTiler:
    def test_grid_shape_and_order(self, small_run):
        report, _ = small_run
        assert len(report.results) == 100
        indices = [r.cell_index for r in report.results]
        assert indices == sorted(indices)

    def test_worker_counts_agree_exactly(self, cfg, estimator_net):
        space = StateSpace((0.0, 1.2), (0.0, 1.2))
        serial = run_tiler(space, 0.4, 0.4, cfg, estimator_net, workers=1)
        parallel = run_tiler(space, 0.4, 0.4, cfg, estimator_net, workers=2)
        assert serial.global_bounds == parallel.global_bounds
        for a, b in zip(serial.results, parallel.results):
            assert a.cell_index == b.cell_index
            assert a.errors == b.errors
            assert np.array_equal(a.outputs.lo, b.outputs.lo)
            assert np.array_equal(a.outputs.hi, b.outputs.hi)

    def test_resume_from_prior_results(self, cfg, estimator_net):
        space = StateSpace((0.0, 1.2), (0.0, 1.2))
        full = run_tiler(space, 0.4, 0.4, cfg, estimator_net)
        half = {r.cell_index: r for r in full.results[:5]}
        resumed = run_tiler(space, 0.4, 0.4, cfg, estimator_net, prior=half)
        assert resumed.global_bounds == full.global_bounds
        assert [r.errors for r in resumed.results] == [r.errors for r in full.results]

    def test_streaming_callback_sees_every_fresh_tile(self, cfg, estimator_net):
        space = StateSpace((0.0, 1.2), (0.0, 1.2))
        seen = []
        run_tiler(space, 0.4, 0.4, cfg, estimator_net,
                  on_result=lambda r: seen.append(r.cell_index))
        assert sorted(seen) == [(i, j) for i in range(3) for j in range(3)]

    def test_classification_task(self, cfg, assets_dir):
        net = load_weights(assets_dir / "classifier_sign.json")
        space = StateSpace((-8.0, 8.0), (-2.0, 2.0))
        report = run_tiler(space, 4.0, 4.0, cfg, net, task="classification")
        assert report.task == "classification"
        assert all(r.errors[0] in (0.0, 1.0) for r in report.results)
        straddling = [r for r in report.results if len(r.truth) == 2]
        assert straddling and all(r.errors[0] == 1.0 for r in straddling)

    def test_invalid_inputs_rejected(self, cfg, estimator_net, assets_dir):
        space = StateSpace((0.0, 1.0), (0.0, 1.0))
        with pytest.raises(ValueError, match="method"):
            run_tiler(space, 0.5, 0.5, cfg, estimator_net, method="milp")
        with pytest.raises(ValueError, match="task"):
            run_tiler(space, 0.5, 0.5, cfg, estimator_net, task="segmentation")

    def test_timings_flag_populates_solve_time(self, cfg, estimator_net):
        space = StateSpace((0.0, 0.4), (0.0, 0.4))
        with_t = run_tiler(space, 0.4, 0.4, cfg, estimator_net, timings=True)
        without = run_tiler(space, 0.4, 0.4, cfg, estimator_net)
        assert all(r.solve_time is not None and r.solve_time >= 0
                   for r in with_t.results)
        assert all(r.solve_time is None for r in without.results)


class TestLocalBound:
    def test_soundness_across_sampled_states(self, cfg, estimator_net, small_run):
        report, boxes = small_run
        rng = np.random.default_rng(113)
        states = np.stack([rng.uniform(0, 4, 1000), rng.uniform(0, 4, 1000)], axis=1)
        imgs = np.stack([scene.render(scene.CameraState(*s), cfg) for s in states])
        outs = forward_batch(estimator_net, imgs)
        for (off, ang), img, y in zip(states, imgs, outs):
            local = local_bound(img, report.results, cfg, boxes=boxes)
            assert local is not NOT_COVERED
            assert local[0] >= abs(y[0] - off) - 1e-9
            assert local[1] >= abs(y[1] - ang) - 1e-9

    def test_local_at_most_global(self, cfg, small_run):
        report, boxes = small_run
        rng = np.random.default_rng(127)
        for _ in range(50):
            st = scene.CameraState(float(rng.uniform(0, 4)), float(rng.uniform(0, 4)))
            local = local_bound(scene.render(st, cfg), report.results, cfg, boxes=boxes)
            assert local[0] <= report.global_bounds[0]
            assert local[1] <= report.global_bounds[1]

    def test_infeasible_image_not_covered(self, cfg, small_run):
        report, boxes = small_run
        img = np.full((32, 32), 255, dtype=np.uint8)  # sky rows must be 0
        assert local_bound(img, report.results, cfg, boxes=boxes) is NOT_COVERED
        assert local_bound(img, report.results[:4], cfg) is NOT_COVERED

    def test_interior_state_bound_at_least_its_tile(self, cfg, small_run):
        report, boxes = small_run
        res = report.results[37]
        mid = scene.CameraState((res.region.delta[0] + res.region.delta[1]) / 2,
                                (res.region.theta[0] + res.region.theta[1]) / 2)
        local = local_bound(scene.render(mid, cfg), report.results, cfg, boxes=boxes)
        assert local[0] >= res.errors[0]
        assert local[1] >= res.errors[1]

    def test_matches_brute_force_definition(self, cfg, small_run):
        report, boxes = small_run
        # a state on an interior cell edge sits in several boxes
        st = scene.CameraState(0.8, 1.3)
        img = scene.render(st, cfg)
        want = None
        hits = 0
        for res, box in zip(report.results, boxes):
            if box.contains(img):
                hits += 1
                e = np.asarray(res.errors)
                want = e if want is None else np.maximum(want, e)
        assert hits >= 2
        got = local_bound(img, report.results, cfg, boxes=boxes)
        assert np.array_equal(got, want)
        # the recompute-boxes path agrees with the aligned-boxes path
        got2 = local_bound(img, report.results, cfg)
        assert np.array_equal(got2, want)

    def test_not_covered_is_falsy_with_clear_repr(self):
        assert not NOT_COVERED
        assert repr(NOT_COVERED) == "NOT_COVERED"


class TestReportCsv:
    def test_round_trip_regression(self, tmp_path, small_run):
        report, _ = small_run
        p = tmp_path / "results.csv"
        write_report_csv(p, report)
        task, back = read_report_csv(p)
        assert task == "regression"
        assert len(back) == len(report.results)
        for a, b in zip(report.results, back):
            assert a.cell_index == b.cell_index
            assert a.region == b.region
            assert a.errors == b.errors
            assert np.array_equal(a.outputs.lo, b.outputs.lo)

    def test_round_trip_classification(self, tmp_path, cfg, assets_dir):
        net = load_weights(assets_dir / "classifier_sign.json")
        space = StateSpace((-8.0, 8.0), (-2.0, 2.0))
        report = run_tiler(space, 4.0, 4.0, cfg, net, task="classification")
        p = tmp_path / "results.csv"
        write_report_csv(p, report)
        task, back = read_report_csv(p)
        assert task == "classification"
        for a, b in zip(report.results, back):
            assert a.truth == b.truth
            assert a.errors == b.errors

    def test_byte_stability(self, tmp_path, small_run):
        report, _ = small_run
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_report_csv(p1, report)
        write_report_csv(p2, report)
        assert p1.read_bytes() == p2.read_bytes()

    def test_timings_column_only_when_asked(self, tmp_path, cfg, estimator_net):
        space = StateSpace((0.0, 0.4), (0.0, 0.4))
        report = run_tiler(space, 0.4, 0.4, cfg, estimator_net, timings=True)
        p = tmp_path / "t.csv"
        write_report_csv(p, report, timings=True)
        header = p.read_text().splitlines()[0]
        assert header.endswith("solve_time")
        write_report_csv(p, report)
        assert "solve_time" not in p.read_text()
