import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mubeam.array_channel import (ChannelPath, ChannelRealization, SystemConfig, assemble_channel,
                                  bin_index, dft_codeword_bs, dft_codeword_ue, dft_coverage,
                                  generate_channel, measure, noise_var_from_snr, steering_vector)


def test_steering_zero_angle():
    np.testing.assert_allclose(steering_vector(4, 0.0), [0.5, 0.5, 0.5, 0.5])


def test_steering_endfire():
    np.testing.assert_allclose(steering_vector(2, 1.0), [1 / np.sqrt(2), -1 / np.sqrt(2)], atol=1e-15)


def test_steering_ratio_and_norm():
    a = steering_vector(8, 0.3)
    assert abs(np.linalg.norm(a) - 1) < 1e-12
    np.testing.assert_allclose(a[1:] / a[:-1], np.exp(1j * np.pi * 0.3))


@pytest.mark.parametrize("theta", [-1.0001, 1.5, np.nan])
def test_steering_domain(theta):
    with pytest.raises(ValueError):
        steering_vector(8, theta)


@given(st.integers(1, 256), st.floats(-1, 1))
def test_steering_unit_norm(n, theta):
    assert abs(np.linalg.norm(steering_vector(n, theta)) - 1) < 1e-12


def test_dft_codeword_bs_first():
    cw = dft_codeword_bs(128, 1)
    np.testing.assert_allclose(cw.weights, steering_vector(128, -1 + 1 / 128))
    assert cw.coverage == ((-1.0, -1 + 2 / 128),)


def test_dft_codeword_halving():
    cw = dft_codeword_bs(2, 1)
    np.testing.assert_allclose(cw.weights, steering_vector(2, -0.5))
    assert cw.coverage == ((-1.0, 0.0),)


def test_dft_codeword_last():
    cw = dft_codeword_ue(8, 8)
    np.testing.assert_allclose(cw.weights, steering_vector(8, 7 / 8))
    assert cw.coverage == ((0.75, 1.0),)


@pytest.mark.parametrize("bad", [0, 9])
def test_dft_codeword_range(bad):
    with pytest.raises(IndexError):
        dft_codeword_ue(8, bad)


@pytest.mark.parametrize("n", [2, 8, 128])
def test_bottom_coverages_tile(n):
    cov = [dft_coverage(n, i) for i in range(1, n + 1)]
    assert cov[0][0] == -1.0 and cov[-1][1] == 1.0
    for (_, hi), (lo, _) in zip(cov, cov[1:]):
        assert abs(hi - lo) < 1e-15
    assert all(hi > lo for lo, hi in cov)


def test_bin_index_matches_coverage():
    rng = np.random.default_rng(3)
    for theta in rng.uniform(-1, 1, 200):
        lo, hi = dft_coverage(32, bin_index(32, theta))
        assert lo <= theta <= hi


def test_system_config_checks():
    with pytest.raises(ValueError):
        SystemConfig(n_bs=96)
    with pytest.raises(ValueError):
        SystemConfig(n_bs=8, n_ue=16)
    with pytest.raises(ValueError):
        SystemConfig(k_users=9, n_rf=8)
    with pytest.raises(ValueError):
        SystemConfig(noise_var=0.0)


def test_snr_convention():
    cfg = SystemConfig(32, 8, 4, 4).with_snr_db(10)
    assert cfg.noise_var == pytest.approx(noise_var_from_snr(10, 1.0, 4))
    assert cfg.pilot_power / cfg.noise_var == pytest.approx(10.0)


def test_generate_channel_shape_and_los_first():
    cfg = SystemConfig(128, 16)
    h = generate_channel(cfg, 3, [1, 0.01, 0.01], np.random.default_rng(0))
    assert h.matrix.shape == (16, 128)
    assert len(h.paths) == 3
    assert all(-1 <= p.theta_bs <= 1 and -1 <= p.theta_ue <= 1 for p in h.paths)


def test_single_path_closed_form():
    h = ChannelRealization.from_paths([ChannelPath(1.0, 0.0, 0.0)], 16, 128)
    expected = np.sqrt(128 * 16) * np.outer(steering_vector(16, 0), steering_vector(128, 0).conj())
    np.testing.assert_allclose(h.matrix, expected, atol=1e-12)


def test_realization_rejects_inconsistent_matrix():
    paths = [ChannelPath(1.0, 0.2, -0.3)]
    bad = assemble_channel(paths, 4, 8) * 1.01
    with pytest.raises(ValueError):
        ChannelRealization(paths, bad)


def test_generate_channel_reproducible():
    cfg = SystemConfig(32, 8)
    a = generate_channel(cfg, 3, [1, .01, .01], np.random.default_rng(42))
    b = generate_channel(cfg, 3, [1, .01, .01], np.random.default_rng(42))
    assert np.array_equal(a.matrix, b.matrix)
    assert a.paths == b.paths


def test_generate_channel_preconditions():
    cfg = SystemConfig(32, 8)
    with pytest.raises(ValueError):
        generate_channel(cfg, 2, [1.0], np.random.default_rng(0))
    with pytest.raises(ValueError):
        generate_channel(cfg, 0, [], np.random.default_rng(0))


def test_frobenius_statistic():
    # oracle: gains are uncorrelated and steering vectors unit norm, so
    # E||H||_F^2 = N_BS * N_UE * sum(vars) / L
    cfg = SystemConfig(16, 4)
    var = [1.0, 0.01, 0.01]
    rng = np.random.default_rng(7)
    draws = [np.linalg.norm(generate_channel(cfg, 3, var, rng).matrix) ** 2 for _ in range(10_000)]
    expected = 16 * 4 * sum(var) / 3
    assert np.mean(draws) == pytest.approx(expected, rel=0.04)


def test_arcsine_angles():
    # theta = cos(omega) with uniform omega has P(|theta| > 0.9) = 2*arccos(0.9)/pi
    cfg = SystemConfig(8, 2)
    rng = np.random.default_rng(11)
    th = np.array([p.theta_bs for _ in range(4000) for p in generate_channel(cfg, 1, [1], rng).paths])
    assert np.mean(np.abs(th) > 0.9) == pytest.approx(2 * np.arccos(0.9) / np.pi, abs=0.03)


def test_path_sum_expansion():
    cfg = SystemConfig(32, 8)
    rng = np.random.default_rng(5)
    h = generate_channel(cfg, 3, [1, .01, .01], rng)
    w = dft_codeword_ue(8, 3).weights
    f = dft_codeword_bs(32, 20).weights
    expansion = sum(np.sqrt(32 * 8 / 3) * p.gain * (w.conj() @ steering_vector(8, p.theta_ue))
                    * (steering_vector(32, p.theta_bs).conj() @ f) for p in h.paths)
    assert abs(w.conj() @ h.matrix @ f - expansion) < 1e-10


def test_measure_matched_noiseless():
    h = ChannelRealization.from_paths([ChannelPath(1.0, 0.25, -0.4)], 16, 128)
    w = steering_vector(16, 0.25)
    f = steering_vector(128, -0.4)
    y = measure(w, h, f, power=2.0, noise_var=0.0)
    assert abs(y) == pytest.approx(np.sqrt(2.0 * 128 * 16))


def test_measure_pure_noise_variance():
    h = ChannelRealization.from_paths([ChannelPath(1.0, 0.0, 0.0)], 4, 8)
    rng = np.random.default_rng(1)
    w, f = dft_codeword_ue(4, 1), dft_codeword_bs(8, 2)
    ys = np.array([measure(w, h, f, 0.0, 0.3, rng) for _ in range(20_000)])
    assert np.mean(np.abs(ys) ** 2) == pytest.approx(0.3, rel=0.03)


def test_measure_deterministic_and_checks():
    h = ChannelRealization.from_paths([ChannelPath(1.0, 0.1, 0.2)], 4, 8)
    w, f = dft_codeword_ue(4, 1), dft_codeword_bs(8, 2)
    a = measure(w, h, f, 1.0, 0.5, np.random.default_rng(9))
    b = measure(w, h, f, 1.0, 0.5, np.random.default_rng(9))
    assert a == b
    with pytest.raises(ValueError):
        measure(w, h, dft_codeword_bs(16, 2), 1.0, 0.0)


@settings(max_examples=50)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_pattern_via_matrix_equals_expansion(tu, tb):
    h = ChannelRealization.from_paths([ChannelPath(0.3 - 0.2j, tu, tb), ChannelPath(0.05j, -tu, tb / 2)], 4, 16)
    w = dft_codeword_ue(4, 2).weights
    f = dft_codeword_bs(16, 5).weights
    exp = sum(np.sqrt(16 * 4 / 2) * p.gain * (w.conj() @ steering_vector(4, p.theta_ue))
              * (steering_vector(16, p.theta_bs).conj() @ f) for p in h.paths)
    assert abs(w.conj() @ h.matrix @ f - exp) < 1e-10
