import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mubeam.amcf import (BeamSpec, amcf_codeword_update, amcf_design, amcf_objective,
                         amcf_phase_update, build_grid_matrix, build_ue_codebook, gain_template,
                         ideal_gain, quantized_grid, shift_codeword, zc_init)
from mubeam.array_channel import Codeword, beam_gain, dft_matrix

ULP = 4 * np.finfo(float).eps


def assert_constant_modulus(v):
    # unimodular phase times 1/sqrt(N); |.| is only evaluated to a few ulp
    assert np.max(np.abs(np.abs(v) * np.sqrt(v.shape[0]) - 1.0)) <= ULP


@pytest.mark.parametrize("width,expected", [(0.5, 2.0), (2.0, 1.0), (0.125, 4.0)])
def test_ideal_gain_in_band(width, expected):
    spec = BeamSpec(-1.0, width, 16)
    assert ideal_gain(spec, -1.0 + width / 2) == pytest.approx(expected)


def test_ideal_gain_out_of_band():
    assert ideal_gain(BeamSpec(-1.0, 0.5, 16), 0.2) == 0.0


def test_beam_spec_validation():
    assert BeamSpec(-1.0, 0.5, 8).q == 128
    for bad in [dict(omega0=0.8, width=0.5, n=8), dict(omega0=-1, width=0, n=8),
                dict(omega0=-1, width=1, n=8, q=8), dict(omega0=-1, width=1, n=8, max_iters=-1)]:
        with pytest.raises(ValueError):
            BeamSpec(**bad)


@pytest.mark.parametrize("n,q", [(1, 4), (2, 3), (4, 16), (16, 256), (32, 512), (7, 40)])
def test_grid_matrix_orthogonal_rows(n, q):
    a = build_grid_matrix(n, q)
    assert np.linalg.norm(a @ a.conj().T - q * np.eye(n)) < 1e-9 * q


def test_grid_matrix_columns():
    a = build_grid_matrix(4, 16)
    np.testing.assert_allclose(np.linalg.norm(a, axis=0), 2.0)
    np.testing.assert_allclose(np.abs(build_grid_matrix(1, 4)), 1.0)
    with pytest.raises(ValueError):
        build_grid_matrix(8, 8)


def test_zc_modulus_exact():
    assert_constant_modulus(zc_init(BeamSpec(-1.0, 0.5, 32)).weights)


def test_zc_even_branch_formula():
    spec = BeamSpec(-1.0, 0.5, 4)
    n = np.arange(1, 5)
    expected = np.exp(1j * np.pi * (0.5 * n ** 2 / 8 - n)) / 2
    np.testing.assert_allclose(zc_init(spec).weights, expected, atol=1e-15)


def test_zc_odd_branch_formula():
    spec = BeamSpec(-0.5, 1.0, 3, q=48)
    n = np.arange(1, 4)
    expected = np.exp(1j * np.pi * (n * (n + 1) / 6 - 0.5 * n)) / np.sqrt(3)
    np.testing.assert_allclose(zc_init(spec).weights, expected, atol=1e-15)


@pytest.mark.parametrize("n,width,omega0", [(32, 0.5, -1.0), (16, 1.0, -1.0), (16, 0.25, -0.5),
                                            (8, 0.5, 0.0), (3, 1.0, -1.0)])
def test_zc_in_band_average_within_3db(n, width, omega0):
    spec = BeamSpec(omega0, width, n)
    tmpl = gain_template(spec)
    inside = tmpl.target > 0
    avg = beam_gain(zc_init(spec).weights, tmpl.grid)[inside].mean()
    assert abs(20 * np.log10(avg / np.sqrt(2 / width))) < 3.0


def test_phase_update_real_positive():
    a = build_grid_matrix(1, 4)
    assert np.allclose(amcf_phase_update(a, np.array([1.0 + 0j])), amcf_phase_update(a, np.array([2.0 + 0j])))
    # a = [1] with q = 1 is not allowed; use the zero-angle column explicitly
    theta = amcf_phase_update(np.ones((3, 5), dtype=complex), np.ones(3) / np.sqrt(3))
    np.testing.assert_allclose(theta, 0.0)


def test_phase_update_cophases_and_lowers_objective():
    spec = BeamSpec(-1.0, 0.5, 8)
    a = build_grid_matrix(8, spec.q)
    g = gain_template(spec).target
    v = zc_init(spec).weights
    theta = amcf_phase_update(a, v)
    r = g * np.exp(1j * theta)
    proj = a.conj().T @ v
    np.testing.assert_allclose(np.real(r.conj() * proj), g * np.abs(proj), atol=1e-12)
    before = np.sum(np.abs(g - proj) ** 2)  # arbitrary phase (zero) on the target
    after = np.sum(np.abs(r - proj) ** 2)
    assert after <= before + 1e-12


def test_codeword_update_examples():
    np.testing.assert_allclose(amcf_codeword_update(np.ones(4)), np.full(4, 0.5))
    v = amcf_codeword_update(np.array([1j, 2.0, -3.0]))
    np.testing.assert_allclose(v, np.array([1j, 1, -1]) / np.sqrt(3), atol=1e-15)


def test_codeword_update_zero_entry_keeps_previous_phase():
    prev = np.exp(1j * np.array([0.3, 1.1])) / np.sqrt(2)
    v = amcf_codeword_update(np.array([0.0, 1.0j]), previous=prev)
    assert np.angle(v[0]) == pytest.approx(0.3)
    assert np.angle(v[1]) == pytest.approx(np.pi / 2)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_codeword_update_matches_phase_grid_search(n):
    # brute force: each entry independently maximises Re(conj(v_n) p_n) on a 72-point phase grid
    rng = np.random.default_rng(n)
    grid = 2 * np.pi * np.arange(72) / 72
    step = grid[1]
    for _ in range(50):
        p = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        best = np.array([grid[np.argmax(np.real(np.conj(np.exp(1j * grid)) * pk))] for pk in p])
        v = amcf_codeword_update(p)
        diff = np.angle(np.exp(1j * (np.angle(v) - best)))
        assert np.all(np.abs(diff) <= step / 2 + 1e-12)
        assert_constant_modulus(v)


def test_codeword_update_is_joint_minimiser_n2():
    # oracle over the joint phase grid of the full fitting error ||r - A^H v||^2
    rng = np.random.default_rng(8)
    a = build_grid_matrix(2, 12)
    grid = 2 * np.pi * np.arange(72) / 72
    for _ in range(10):
        r = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        v = amcf_codeword_update(a @ r)
        closed = np.sum(np.abs(r - a.conj().T @ v) ** 2)
        brute = min(np.sum(np.abs(r - a.conj().T @ (np.exp(1j * np.array(ph)) / np.sqrt(2))) ** 2)
                    for ph in itertools.product(grid, grid))
        assert closed <= brute + 1e-9


def test_design_flatter_than_initializer():
    spec = BeamSpec(-1.0, 0.5, 32, q=512, max_iters=50)
    res = amcf_design(spec)
    tmpl = gain_template(spec)
    inside = tmpl.target > 0
    var_amcf = beam_gain(res.codeword.weights, tmpl.grid)[inside].var()
    var_zc = beam_gain(zc_init(spec).weights, tmpl.grid)[inside].var()
    assert var_amcf < var_zc
    assert len(res.objective) == 51
    assert_constant_modulus(res.codeword.weights)


def test_design_transition_band_monotone():
    spec = BeamSpec(-1.0, 0.5, 32, q=512)
    gain = beam_gain(amcf_design(spec).codeword.weights, quantized_grid(512))
    # just right of the band the pattern falls before the first sidelobe
    edge = np.searchsorted(quantized_grid(512), -0.5)
    fall = gain[edge - 2:edge + 4]
    assert np.all(np.diff(fall) < 0)


def test_zero_iterations_returns_initializer():
    spec = BeamSpec(-0.25, 0.5, 16, max_iters=0)
    res = amcf_design(spec)
    np.testing.assert_array_equal(res.codeword.weights, zc_init(spec).weights)
    assert len(res.objective) == 1


def test_tolerance_stops_early():
    res = amcf_design(BeamSpec(-1.0, 1.0, 16, max_iters=500), tol=1e-8)
    assert len(res.objective) < 501


@settings(max_examples=100, deadline=None)
@given(st.floats(0.02, 2.0), st.floats(0.0, 1.0), st.sampled_from([4, 8, 16, 32]))
def test_objective_non_increasing(width, frac, n):
    omega0 = -1.0 + frac * (2.0 - width)
    spec = BeamSpec(omega0, width, n, max_iters=50)
    res = amcf_design(spec)
    obj = np.array(res.objective)
    assert np.all(np.diff(obj) <= 1e-9 * obj[:-1])
    assert_constant_modulus(res.codeword.weights)
    a = build_grid_matrix(n, spec.q)
    assert obj[-1] == pytest.approx(amcf_objective(a, gain_template(spec).target, res.codeword.weights))


def test_shift_identity_and_modulus():
    v = amcf_design(BeamSpec(-1.0, 0.5, 16)).codeword
    np.testing.assert_array_equal(shift_codeword(v, 2, 1).weights, v.weights)
    moved = shift_codeword(v, 2, 3)
    assert_constant_modulus(moved.weights)
    assert moved.coverage == ((0.0, 0.5),)
    with pytest.raises(IndexError):
        shift_codeword(v, 2, 5)


@pytest.mark.parametrize("s,m", [(1, 2), (2, 2), (2, 4), (3, 5)])
def test_shift_translates_pattern(s, m):
    n, q = 16, 256
    v = amcf_design(BeamSpec(-1.0, 2 / 2 ** s, n, q)).codeword
    grid = quantized_grid(q)
    base = beam_gain(v.weights, grid)
    moved = beam_gain(shift_codeword(v, s, m).weights, grid)
    steps = (m - 1) * q // 2 ** s
    assert np.max(np.abs(moved - np.roll(base, steps))) < 1e-9


def test_ue_codebook_layout():
    book = build_ue_codebook(16)
    assert book.depth == 4
    assert [book.matrix(s).shape[1] for s in range(1, 5)] == [2, 4, 8, 16]
    assert book.coverages[0] == [(-1.0, 0.0), (0.0, 1.0)]
    np.testing.assert_array_equal(book.matrix(4), dft_matrix(16))
    for s in range(1, 5):
        cov = book.coverages[s - 1]
        assert cov[0][0] == -1.0 and cov[-1][1] == 1.0
        assert all(abs(a[1] - b[0]) < 1e-15 for a, b in zip(cov, cov[1:]))
        for col in book.matrix(s).T:
            assert_constant_modulus(col)


def test_ue_codebook_indexing():
    book = build_ue_codebook(8)
    cw = book[2, 3]
    assert isinstance(cw, Codeword) and cw.layer == 2 and cw.index == 3
    assert cw.coverage == ((0.0, 0.5),)
    stacked, offsets = book.stacked()
    np.testing.assert_array_equal(stacked[:, offsets[1] + 2], cw.weights)
    with pytest.raises(IndexError):
        book[4, 1]


def test_ue_codebook_bottom_is_dft_and_designed_layers_cover():
    book = build_ue_codebook(16)
    grid = quantized_grid(256)
    for s in range(1, 4):
        for m in range(1, 2 ** s + 1):
            lo, hi = book.coverages[s - 1][m - 1]
            inside = (grid > lo) & (grid < hi)
            gain = beam_gain(book.matrix(s)[:, m - 1], grid)
            assert gain[inside].mean() > 3 * gain[~inside].mean()
