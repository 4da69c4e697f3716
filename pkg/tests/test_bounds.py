import numpy as np
import pytest

from conftest import make_tiny_net, tiny_box
from tilecert import scene
from tilecert.bounds import (OutputIntervals, grid_oracle, ibp_bounds,
                             linear_relaxation_bounds)
from tilecert.network import (Conv2D, Dense, Flatten, LinearOutput, Network,
                              ReLU, forward, load_weights)
from tilecert.tiling import StateRegion, bounding_box

METHODS = [ibp_bounds, linear_relaxation_bounds]


def affine_1d(a, b):
    return Network(
        [Flatten(), LinearOutput(np.array([[a]]), np.array([b]))],
        {"height": 1, "width": 1, "channels": 1, "scale": 1.0})


def tiny_conv_net(rng):
    return Network([
        Conv2D(rng.normal(size=(2, 1, 4, 4)) * 0.4, rng.normal(size=2) * 0.2,
               stride=2, padding=1),
        ReLU(),
        Flatten(),
        LinearOutput(rng.normal(size=(2, 2 * 2 * 2)) * 0.5, rng.normal(size=2)),
    ], {"height": 4, "width": 4, "channels": 1, "scale": 1.0})


class TestOutputIntervals:
    def test_validation(self):
        with pytest.raises(ValueError):
            OutputIntervals(np.array([1.0]), np.array([0.0]))
        with pytest.raises(ValueError):
            OutputIntervals(np.array([np.inf]), np.array([np.inf]))

    def test_width_and_enclosure(self):
        a = OutputIntervals(np.array([0.0, -1.0]), np.array([2.0, 1.0]))
        b = OutputIntervals(np.array([0.5, -0.5]), np.array([1.0, 0.5]))
        assert np.array_equal(a.width(), [2.0, 2.0])
        assert a.encloses(b)
        assert not b.encloses(a)


class TestPointExactness:
    @pytest.mark.parametrize("method", METHODS)
    def test_degenerate_box_equals_forward(self, method):
        rng = np.random.default_rng(73)
        for _ in range(10):
            net = make_tiny_net(rng)
            dim = net.input_spec["width"]
            x = rng.uniform(-2, 2, size=dim)
            out = method(net, (x, x.copy()))
            want = forward(net, x.reshape(1, dim))
            assert np.abs(out.width()).max() <= 1e-9
            assert np.abs(out.lo - want).max() <= 1e-9

    @pytest.mark.parametrize("method", METHODS)
    def test_degenerate_pixel_box_on_case_study_net(self, method, cfg, assets_dir):
        net = load_weights(assets_dir / "estimator.json")
        r = StateRegion((0, 0), (2.0, 2.0), (-3.0, -3.0))
        box = bounding_box(r, cfg)
        out = method(net, box)
        img = scene.render(scene.CameraState(2.0, -3.0), cfg)
        want = forward(net, img)
        assert np.abs(out.width()).max() <= 1e-9
        assert np.abs(out.lo - want).max() <= 1e-6


class TestHandAffineCases:
    @pytest.mark.parametrize("method", METHODS)
    def test_doubling_plus_one_over_unit_interval(self, method):
        net = affine_1d(2.0, 1.0)
        out = method(net, (np.array([0.0]), np.array([1.0])))
        assert out.lo[0] == pytest.approx(1.0, abs=1e-12)
        assert out.hi[0] == pytest.approx(3.0, abs=1e-12)

    def test_methods_identical_on_single_affine_layer(self):
        # one linear map: both methods give its exact interval image
        rng = np.random.default_rng(79)
        w = rng.normal(size=(2, 3))
        b = rng.normal(size=2)
        net = Network(
            [Flatten(), LinearOutput(w, b)],
            {"height": 1, "width": 3, "channels": 1, "scale": 1.0})
        lo, hi = tiny_box(rng, 3)
        exact_lo = np.clip(w, 0, None) @ lo + np.clip(w, None, 0) @ hi + b
        exact_hi = np.clip(w, 0, None) @ hi + np.clip(w, None, 0) @ lo + b
        for method in METHODS:
            out = method(net, (lo, hi))
            assert np.abs(out.lo - exact_lo).max() <= 1e-9
            assert np.abs(out.hi - exact_hi).max() <= 1e-9

    def test_stacked_affine_layers_compose_exactly_under_relaxation(self):
        # without ReLU between them two dense layers are one affine map;
        # backward propagation recovers it exactly while plain interval
        # propagation wraps per layer and can only be wider
        rng = np.random.default_rng(79)
        w1 = rng.normal(size=(5, 3))
        b1 = rng.normal(size=5)
        w2 = rng.normal(size=(2, 5))
        b2 = rng.normal(size=2)
        net = Network(
            [Flatten(), Dense(w1, b1), LinearOutput(w2, b2)],
            {"height": 1, "width": 3, "channels": 1, "scale": 1.0})
        lo, hi = tiny_box(rng, 3)
        w = w2 @ w1
        b = w2 @ b1 + b2
        exact_lo = np.clip(w, 0, None) @ lo + np.clip(w, None, 0) @ hi + b
        exact_hi = np.clip(w, 0, None) @ hi + np.clip(w, None, 0) @ lo + b
        lin = linear_relaxation_bounds(net, (lo, hi))
        assert np.abs(lin.lo - exact_lo).max() <= 1e-9
        assert np.abs(lin.hi - exact_hi).max() <= 1e-9
        ibp = ibp_bounds(net, (lo, hi))
        assert ibp.encloses(lin, slack=1e-12)

    def test_negative_weight_sign_split(self):
        net = affine_1d(-3.0, 0.0)
        out = ibp_bounds(net, (np.array([1.0]), np.array([2.0])))
        assert out.lo[0] == pytest.approx(-6.0, abs=1e-12)
        assert out.hi[0] == pytest.approx(-3.0, abs=1e-12)


class TestSoundness:
    @pytest.mark.parametrize("method", METHODS)
    def test_tiny_dense_nets_contain_grid_oracle(self, method):
        rng = np.random.default_rng(83)
        for _ in range(30):
            net = make_tiny_net(rng)
            dim = net.input_spec["width"]
            box = tiny_box(rng, dim)
            oracle = grid_oracle(net, box, resolution=9)
            assert method(net, box).encloses(oracle, slack=1e-9)

    @pytest.mark.parametrize("method", METHODS)
    def test_tiny_conv_nets_contain_sampled_outputs(self, method):
        rng = np.random.default_rng(89)
        for _ in range(10):
            net = tiny_conv_net(rng)
            lo = rng.uniform(-1, 0, size=(1, 4, 4))
            hi = lo + rng.uniform(0, 1, size=(1, 4, 4))
            out = method(net, (lo, hi))
            for _ in range(200):
                x = rng.uniform(lo, hi)
                y = forward(net, x.reshape(4, 4))
                assert (out.lo - 1e-9 <= y).all() and (y <= out.hi + 1e-9).all()

    def test_case_study_box_contains_sampled_renders(self, cfg, assets_dir):
        net = load_weights(assets_dir / "estimator.json")
        r = StateRegion((0, 0), (1.0, 1.4), (2.0, 2.4))
        box = bounding_box(r, cfg)
        rng = np.random.default_rng(97)
        for method in METHODS:
            out = method(net, box)
            for _ in range(25):
                st = scene.CameraState(float(rng.uniform(*r.delta)),
                                       float(rng.uniform(*r.theta)))
                y = forward(net, scene.render(st, cfg))
                assert (out.lo <= y).all() and (y <= out.hi).all()


class TestIsotonicity:
    def test_nested_boxes_give_nested_ibp_intervals(self):
        rng = np.random.default_rng(101)
        for _ in range(30):
            net = make_tiny_net(rng)
            dim = net.input_spec["width"]
            lo_b, hi_b = tiny_box(rng, dim)
            shrink_lo = rng.uniform(0, 0.3, size=dim) * (hi_b - lo_b)
            shrink_hi = rng.uniform(0, 0.3, size=dim) * (hi_b - lo_b)
            lo_a, hi_a = lo_b + shrink_lo, hi_b - shrink_hi
            keep = lo_a > hi_a
            lo_a[keep] = lo_b[keep]
            hi_a[keep] = hi_b[keep]
            outer = ibp_bounds(net, (lo_b, hi_b))
            inner = ibp_bounds(net, (lo_a, hi_a))
            assert outer.encloses(inner)  # zero tolerance


class TestRelativeTightness:
    def test_relaxation_no_wider_on_average(self):
        rng = np.random.default_rng(103)
        ibp_w, lin_w = [], []
        for _ in range(50):
            net = make_tiny_net(rng)
            dim = net.input_spec["width"]
            box = tiny_box(rng, dim)
            ibp_w.append(ibp_bounds(net, box).width().mean())
            lin_w.append(linear_relaxation_bounds(net, box).width().mean())
        assert np.mean(lin_w) <= np.mean(ibp_w) + 1e-12

    def test_relaxation_tighter_on_case_study_box(self, cfg, assets_dir):
        net = load_weights(assets_dir / "estimator.json")
        box = bounding_box(StateRegion((0, 0), (0.0, 0.4), (0.0, 0.4)), cfg)
        wi = ibp_bounds(net, box).width()
        wl = linear_relaxation_bounds(net, box).width()
        assert (wl <= wi + 1e-9).all()


class TestGridOracle:
    def test_degenerate_box(self):
        net = affine_1d(4.0, -1.0)
        x = np.array([0.5])
        out = grid_oracle(net, (x, x), resolution=3)
        assert out.lo[0] == out.hi[0] == pytest.approx(1.0, abs=1e-12)

    def test_monotone_net_attains_endpoints(self):
        net = affine_1d(2.0, 0.0)
        out = grid_oracle(net, (np.array([-1.0]), np.array([2.0])), resolution=11)
        assert out.lo[0] == pytest.approx(-2.0, abs=1e-12)
        assert out.hi[0] == pytest.approx(4.0, abs=1e-12)

    def test_oracle_inside_ibp(self):
        rng = np.random.default_rng(107)
        for _ in range(20):
            net = make_tiny_net(rng)
            dim = net.input_spec["width"]
            box = tiny_box(rng, dim)
            assert ibp_bounds(net, box).encloses(grid_oracle(net, box, 7),
                                                 slack=1e-9)

    def test_budget_exceeded_is_an_error(self):
        net = make_tiny_net(np.random.default_rng(109), in_dim=4)
        box = tiny_box(np.random.default_rng(109), 4)
        with pytest.raises(ValueError, match="budget"):
            grid_oracle(net, box, resolution=100)

    def test_image_sized_box_uses_samples_and_corners(self, cfg, assets_dir):
        net = load_weights(assets_dir / "estimator.json")
        box = bounding_box(StateRegion((0, 0), (0.0, 0.4), (0.0, 0.4)), cfg)
        out = grid_oracle(net, box, resolution=50, seed=3)
        assert ibp_bounds(net, box).encloses(out, slack=1e-9)
