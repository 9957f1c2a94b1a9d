import numpy as np
import pytest

from coopt.errors import DisparityTooLarge, MalformedHeader, SizeMismatch, TruncatedData
from coopt.generators import grid_edges, random_problem
from coopt.problem import evaluate_energy
from coopt.stereo import (
    DisparityMap,
    GrayImage,
    GridEnergy,
    StereoConfig,
    build_stereo_problem,
    encode_pgm,
    evaluate_disparity,
    load_pgm,
    parse_pgm,
    reference_states,
    run_stereo,
    save_pgm,
    smoothness_table,
    sweep_solver,
    synthetic_pair,
    unary_costs,
)


class TestPgm:
    def test_ascii_with_comments(self):
        img = parse_pgm(b"P2\n# made by hand\n3 2 # size\n255\n0 1 2\n# mid\n3 4 5\n")
        assert (img.width, img.height, img.maxval) == (3, 2, 255)
        np.testing.assert_array_equal(img.data, [[0, 1, 2], [3, 4, 5]])

    def test_binary(self):
        img = parse_pgm(b"P5\n2 2\n255\n" + bytes([9, 8, 7, 6]))
        np.testing.assert_array_equal(img.data, [[9, 8], [7, 6]])

    def test_sixteen_bit_big_endian(self):
        img = parse_pgm(b"P5 1 2 1000\n" + bytes([0x01, 0x02, 0x00, 0x05]))
        np.testing.assert_array_equal(img.data[:, 0], [258, 5])

    @pytest.mark.parametrize("binary", [True, False])
    @pytest.mark.parametrize("maxval", [255, 4095])
    def test_round_trip(self, tmp_path, binary, maxval):
        rng = np.random.default_rng(0)
        img = GrayImage(5, 3, rng.integers(0, maxval + 1, (3, 5)), maxval)
        path = tmp_path / "x.pgm"
        path.write_bytes(encode_pgm(img, binary))
        back = load_pgm(path)
        np.testing.assert_array_equal(back.data, img.data)
        assert back.maxval == maxval

    def test_bad_magic(self):
        with pytest.raises(MalformedHeader):
            parse_pgm(b"P6\n1 1\n255\n\x00\x00\x00")

    def test_header_ends_early(self):
        with pytest.raises(MalformedHeader):
            parse_pgm(b"P5\n4 4\n")

    def test_truncated(self):
        with pytest.raises(TruncatedData):
            parse_pgm(b"P5\n2 2\n255\n\x01\x02")
        with pytest.raises(TruncatedData):
            parse_pgm(b"P2\n2 2\n255\n1 2 3\n")

    def test_disparity_scaling(self, tmp_path):
        d = DisparityMap(np.array([[0, 3], [100, 2]]), scale=4)
        path = tmp_path / "d.pgm"
        save_pgm(d, path)
        img = load_pgm(path)
        np.testing.assert_array_equal(img.data, [[0, 12], [255, 8]])
        np.testing.assert_array_equal(DisparityMap.from_image(img, 4).labels, [[0, 3], [63, 2]])


class TestEnergy:
    def test_shifted_pair_has_zero_cost_at_true_shift(self):
        rng = np.random.default_rng(1)
        right = rng.integers(0, 256, (4, 12))
        left = np.zeros_like(right)
        left[:, 2:] = right[:, :-2]
        cfg = StereoConfig(d_max=3)
        cost = unary_costs(GrayImage(12, 4, left), GrayImage(12, 4, right), cfg)
        assert cost.shape == (4, 12, 4)
        np.testing.assert_array_equal(cost[:, 2:, 2], 0.0)
        # columns left of the shift cannot be matched
        np.testing.assert_array_equal(cost[:, :2, 2], cfg.tau_match)

    def test_truncation(self):
        left = GrayImage(2, 1, np.array([[0, 0]]))
        right = GrayImage(2, 1, np.array([[255, 255]]))
        cost = unary_costs(left, right, StereoConfig(d_max=1))
        assert cost[0, 0, 0] == 20.0 and cost.max() == 20.0

    def test_squared_cost(self):
        left = GrayImage(2, 1, np.array([[3, 0]]))
        right = GrayImage(2, 1, np.array([[0, 0]]))
        cost = unary_costs(left, right, StereoConfig(d_max=1, match_cost="squared", tau_match=100))
        assert cost[0, 0, 0] == 9.0

    def test_smoothness_is_truncated_linear(self):
        t = smoothness_table(StereoConfig(d_max=4, smoothness=3, tau_smooth=2))
        assert t[0, 1] == 3 and t[0, 4] == 6 and t[2, 2] == 0

    def test_errors(self):
        a = GrayImage(4, 2, np.zeros((2, 4)))
        with pytest.raises(SizeMismatch):
            unary_costs(a, GrayImage(3, 2, np.zeros((2, 3))), StereoConfig(d_max=1))
        with pytest.raises(DisparityTooLarge):
            unary_costs(a, a, StereoConfig(d_max=4))

    def test_grid_energy_matches_generic(self):
        left, right, _, _ = synthetic_pair(6, 9, 3, seed=2)
        p = build_stereo_problem(left, right, StereoConfig(d_max=3))
        g = GridEnergy.from_problem(p, 6, 9)
        lab = np.random.default_rng(0).integers(0, 4, (6, 9))
        assert g.energy(lab) == pytest.approx(evaluate_energy(p, lab.ravel()), abs=1e-9)


class TestSweep:
    @pytest.mark.parametrize("shape", [(1, 5), (4, 1), (2, 3), (3, 3)])
    def test_matches_reference_dp(self, shape):
        rows, cols = shape
        rng = np.random.default_rng(rows * 10 + cols)
        p = random_problem(grid_edges(rows, cols), [3] * (rows * cols), rng)
        res = sweep_solver(p, rows, cols, alpha=0.16, max_iter=6, keep_states=True)
        ref = reference_states(p, rows, cols, 0.16, 6)
        for a, b in zip(res.states, ref):
            np.testing.assert_allclose(a, b, atol=1e-9)

    def test_threads_identical(self):
        left, right, _, _ = synthetic_pair(16, 20, 4, seed=3)
        p = build_stereo_problem(left, right, StereoConfig(d_max=4))
        one = sweep_solver(p, 16, 20, max_iter=4, threads=1, keep_states=True)
        many = sweep_solver(p, 16, 20, max_iter=4, threads=3, keep_states=True)
        for a, b in zip(one.states, many.states):
            np.testing.assert_array_equal(a, b)
        assert one.trace.to_csv() == many.trace.to_csv()

    def test_synthetic_recovery(self):
        left, right, truth, vis = synthetic_pair(32, 32, 8, seed=0)
        p = build_stereo_problem(left, right, StereoConfig(d_max=8))
        res = sweep_solver(p, 32, 32, max_iter=16)
        assert evaluate_disparity(res.disparity, truth, mask=vis).bad_fraction < 0.05


class TestMetrics:
    def test_one_percent_bad(self):
        truth = DisparityMap(np.zeros((10, 10), int))
        est = np.zeros((10, 10), int)
        est[0, 0] = 2
        m = evaluate_disparity(DisparityMap(est), truth)
        assert m.bad_pct == pytest.approx(1.0)
        assert m.rms == pytest.approx(0.2)

    def test_threshold_is_strict(self):
        truth = DisparityMap(np.zeros((1, 10), int))
        est = np.array([[1, 0, 0, 0, 0, 0, 0, 0, 0, 0]])
        m = evaluate_disparity(DisparityMap(est), truth)
        assert m.bad_fraction == 0.0
        assert m.rms == pytest.approx(np.sqrt(0.1))

    def test_mask(self):
        truth = DisparityMap(np.zeros((1, 4), int))
        est = DisparityMap(np.array([[5, 0, 0, 0]]))
        mask = np.array([[False, True, True, True]])
        assert evaluate_disparity(est, truth, mask=mask).bad_fraction == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(SizeMismatch):
            evaluate_disparity(DisparityMap(np.zeros((2, 2))), DisparityMap(np.zeros((2, 3))))


def test_pipeline_from_files(tmp_path):
    left, right, truth, _ = synthetic_pair(12, 16, 3, seed=5)
    for name, img in (("l", left), ("r", right)):
        save_pgm(img, tmp_path / f"{name}.pgm")
    save_pgm(truth, tmp_path / "t.pgm")
    lines = []
    summary = run_stereo(tmp_path / "l.pgm", tmp_path / "r.pgm", StereoConfig(d_max=3, max_iter=4),
                         tmp_path / "out.pgm", tmp_path / "t.pgm", log=lines.append)
    assert (tmp_path / "out.pgm").exists()
    assert lines[-1].startswith("final energy")
    assert 0.0 <= summary["bad_pct"] <= 100.0
