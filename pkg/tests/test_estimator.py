import numpy as np
import pytest

from tilecert import estimator, scene
from tilecert.estimator import (empirical_max_error, estimate_regions, gap,
                                run_estimator)
from tilecert.network import forward, load_weights
from tilecert.tiling import StateRegion, StateSpace, bounding_box
from tilecert.bounds import ibp_bounds
from tilecert.verifier import run_tiler, tile_error_regression


@pytest.fixture(scope="module")
def estimator_net(assets_dir):
    return load_weights(assets_dir / "estimator.json")


class TestEmpiricalMax:
    def test_single_state_region(self, cfg, estimator_net):
        r = StateRegion((0, 0), (2.0, 2.0), (3.0, 3.0))
        est = empirical_max_error(r, cfg, estimator_net, spacing=0.05)
        y = forward(estimator_net, scene.render(scene.CameraState(2.0, 3.0), cfg))
        assert est.e_delta == pytest.approx(abs(y[0] - 2.0), abs=1e-12)
        assert est.e_theta == pytest.approx(abs(y[1] - 3.0), abs=1e-12)

    def test_corner_states_included(self, cfg, estimator_net):
        # spacing larger than the cell still samples all four corners
        r = StateRegion((0, 0), (1.0, 1.4), (2.0, 2.4))
        est = empirical_max_error(r, cfg, estimator_net, spacing=10.0)
        worst = np.zeros(2)
        for off in r.delta:
            for ang in r.theta:
                y = forward(estimator_net, scene.render(scene.CameraState(off, ang), cfg))
                worst = np.maximum(worst, np.abs(y - [off, ang]))
        assert est.e_delta == pytest.approx(worst[0], abs=1e-12)
        assert est.e_theta == pytest.approx(worst[1], abs=1e-12)

    def test_never_exceeds_certified_bound(self, cfg, estimator_net):
        rng = np.random.default_rng(131)
        for _ in range(10):
            d1 = float(rng.uniform(-10, 9.6))
            t1 = float(rng.uniform(-15, 14.6))
            r = StateRegion((0, 0), (d1, d1 + 0.4), (t1, t1 + 0.4))
            est = empirical_max_error(r, cfg, estimator_net, spacing=0.1)
            out = ibp_bounds(estimator_net, bounding_box(r, cfg))
            e_d = tile_error_regression(r.delta, (out.lo[0], out.hi[0]))
            e_t = tile_error_regression(r.theta, (out.lo[1], out.hi[1]))
            assert gap(e_d, est.e_delta) >= 0
            assert gap(e_t, est.e_theta) >= 0

    def test_monotone_under_spacing_refinement(self, cfg, estimator_net):
        # halving the spacing keeps every coarse sample, so the max cannot drop
        rng = np.random.default_rng(137)
        for _ in range(5):
            d1 = float(rng.uniform(-5, 4.6))
            t1 = float(rng.uniform(-5, 4.6))
            r = StateRegion((0, 0), (d1, d1 + 0.4), (t1, t1 + 0.4))
            coarse = empirical_max_error(r, cfg, estimator_net, spacing=0.2)
            fine = empirical_max_error(r, cfg, estimator_net, spacing=0.1)
            assert fine.e_delta >= coarse.e_delta
            assert fine.e_theta >= coarse.e_theta

    def test_invalid_spacing(self, cfg, estimator_net):
        r = StateRegion((0, 0), (0.0, 0.4), (0.0, 0.4))
        with pytest.raises(ValueError):
            empirical_max_error(r, cfg, estimator_net, spacing=0.0)

    def test_estimates_nonnegative(self, cfg, estimator_net):
        r = StateRegion((0, 0), (-0.2, 0.2), (-0.2, 0.2))
        est = empirical_max_error(r, cfg, estimator_net, spacing=0.1)
        assert est.e_delta >= 0 and est.e_theta >= 0


class TestGap:
    def test_worked_examples(self):
        assert gap(1.0, 0.4) == 0.6
        assert gap(0.7, 0.7) == 0.0


class TestRunEstimator:
    def test_covers_grid_sorted(self, cfg, estimator_net):
        space = StateSpace((0.0, 1.2), (0.0, 1.2))
        ests = run_estimator(space, 0.4, 0.4, cfg, estimator_net, spacing=0.2)
        assert [e.cell_index for e in ests] == [(i, j) for i in range(3) for j in range(3)]
        assert all(e.spacing == 0.2 for e in ests)

    def test_worker_counts_agree(self, cfg, estimator_net):
        space = StateSpace((0.0, 1.2), (0.0, 1.2))
        serial = run_estimator(space, 0.4, 0.4, cfg, estimator_net, spacing=0.2,
                               workers=1)
        parallel = run_estimator(space, 0.4, 0.4, cfg, estimator_net, spacing=0.2,
                                 workers=2)
        for a, b in zip(serial, parallel):
            assert a == b

    def test_all_gaps_nonnegative_on_subregion(self, cfg, estimator_net):
        space = StateSpace((0.0, 1.2), (0.0, 1.2))
        report = run_tiler(space, 0.4, 0.4, cfg, estimator_net)
        ests = estimate_regions([r.region for r in report.results], cfg,
                                estimator_net, spacing=0.1)
        for res, est in zip(report.results, ests):
            assert res.cell_index == est.cell_index
            assert gap(res.errors[0], est.e_delta) >= 0
            assert gap(res.errors[1], est.e_theta) >= 0
