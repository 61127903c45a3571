import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiercoop.channel import ChannelMatrix, ChannelParams
from hiercoop.errors import InvalidArgument, NumericError
from hiercoop.mimo import (
    QuantizerSpec, build_session, default_quantizer, eigen_moment_stats, log2det,
    log_m_scaled_quantized_mi, logdet_samples, mi_with_stderr, mimo_mutual_information,
    paley_zygmund_bound, pz_threshold, quantized_mutual_information, quantizer_rate,
    received_power_bounds, received_power_mc, rho_range, rho_range_neighbor,
    sample_neighbor_geometry, sample_session_geometry, session_channel,
)
from hiercoop.netmodel import build_cluster_grid, random_pairing, sample_network

ONE = ChannelMatrix(np.ones((1, 1)), np.zeros((1, 1)))


def test_received_power_bounds():
    P1, P2 = received_power_bounds(ChannelParams(alpha=2))
    assert P1 - 1 == pytest.approx(0.3431, abs=5e-5)
    assert P2 - 1 == pytest.approx(11.657, abs=5e-4)
    # noise-only limit: the signal part scales with GP
    P1s, P2s = received_power_bounds(ChannelParams(P=1e-12))
    assert P1s == pytest.approx(1) and P2s == pytest.approx(1)


def test_rho_range_alpha2():
    a, b = rho_range(2)
    assert a == pytest.approx(0.5858, abs=5e-5)
    assert b == pytest.approx(3.4142, abs=5e-5)


@given(st.floats(2, 8))
def test_rho_product_identity(alpha):
    a, b = rho_range(alpha)
    assert a * b == pytest.approx(2 ** (alpha / 2), rel=1e-12)


def test_rho_neighbor():
    a, b = rho_range_neighbor(3)
    assert a == pytest.approx(5 ** -0.75) and b == 1


@pytest.mark.parametrize("alpha", [2, 3, 4])
def test_sampled_rho_within_range(alpha):
    p = ChannelParams(alpha=alpha)
    a, b = rho_range(alpha)
    for s in range(20):
        _, _, rho = sample_session_geometry(16, p, seed=s)
        assert rho.min() >= a and rho.max() <= b
    an, bn = rho_range_neighbor(alpha)
    for diag in (False, True):
        _, _, rho = sample_neighbor_geometry(16, p, seed=1, diagonal=diag)
        assert rho.min() >= an - 1e-12 and rho.max() <= bn + 1e-12


def test_mi_scalar():
    assert mimo_mutual_information(ONE, 1, 1, trials=5) == pytest.approx(1)
    assert mimo_mutual_information(ONE, 0, 1, trials=5) == 0


def test_mi_rejects_bad_input():
    with pytest.raises(InvalidArgument):
        mimo_mutual_information(ONE, 1, 0)
    with pytest.raises(NumericError):
        logdet_samples(np.array([[np.nan]]), 1.0)
    with pytest.raises(NumericError):
        log2det(np.array([[np.inf]]), 1.0)


def test_logdet_matches_numpy():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((5, 7)) + 1j * rng.standard_normal((5, 7))
    sign, ld = np.linalg.slogdet(np.eye(5) + 0.3 * h @ h.conj().T)
    assert log2det(h, 0.3) == pytest.approx(ld / math.log(2), rel=1e-12)
    assert log2det(h.T, 0.3) == pytest.approx(ld / math.log(2), rel=1e-12)


def test_row_phase_invariance():
    rng = np.random.default_rng(1)
    h = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    g = h.copy()
    g[2] *= np.exp(1.234j)
    assert abs(log2det(h, 2.0) - log2det(g, 2.0)) < 1e-10


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.integers(0, 500))
@settings(max_examples=30, deadline=None)
def test_mi_monotone_per_realization(s1, s2, seed):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    lo, hi = sorted((s1, s2))
    assert log2det(h, lo) <= log2det(h, hi) + 1e-12


def test_pz_examples():
    assert paley_zygmund_bound(1, 1, 1, 10, 0.5) == pytest.approx(0.7312, abs=5e-5)
    assert paley_zygmund_bound(1, 1, 1, 10, 0) == 0
    assert paley_zygmund_bound(0.6, 3, 2, 14, 0.3) == pytest.approx(2 * paley_zygmund_bound(0.6, 3, 2, 7, 0.3))
    with pytest.raises(InvalidArgument):
        paley_zygmund_bound(0.5, 1, 1, 4, 0.25)


def test_pz_threshold():
    a2, _ = rho_range(2)
    assert pz_threshold(a2) == a2 / 2
    a4, _ = rho_range(4)
    assert pz_threshold(a4) == a4 * a4 / 2


def test_eigen_moments_trivial():
    m = eigen_moment_stats(ONE, trials=4)
    assert m.mean_lambda == pytest.approx(1) and m.mean_lambda_sq == pytest.approx(1)


def test_eigen_moments_session():
    p = ChannelParams(alpha=2)
    a, b = rho_range(2)
    _, _, rho = sample_session_geometry(16, p, seed=3)
    F = ChannelMatrix(rho, np.zeros_like(rho))
    m = eigen_moment_stats(F, trials=200, seed=1)
    assert m.mean_lambda == pytest.approx(np.sum(rho ** 2) / 16 ** 2, rel=1e-12)
    assert m.mean_lambda >= a * a
    assert m.mean_lambda_sq <= 2 * b ** 4 + 3 * m.stderr_lambda_sq


def test_quantizer_rate_examples():
    assert quantizer_rate(3, 1) == pytest.approx(2)
    assert quantizer_rate(0, 1) == 0
    assert default_quantizer(ChannelParams(alpha=2)).rate_Q == pytest.approx(1.1)
    with pytest.raises(InvalidArgument):
        QuantizerSpec(0, 1)


def test_quantized_mi_examples():
    q = QuantizerSpec(1.0, 1.0)
    assert quantized_mutual_information(ONE, 1, 1, q, trials=3) == pytest.approx(math.log2(1.5))
    H, r, _ = sample_session_geometry(8, ChannelParams(), seed=2)
    tiny = QuantizerSpec(1e-12, 1.0)
    assert quantized_mutual_information(H, 0.5, 1, tiny, 50, 4) == pytest.approx(
        mimo_mutual_information(H, 0.5, 1, 50, 4), rel=1e-9)


def test_log_m_scaled_examples():
    H, r, _ = sample_session_geometry(8, ChannelParams(), seed=5)
    q = QuantizerSpec(2.0, 1.0)
    base = quantized_mutual_information(H, 0.5, 1, q, 40, 1)
    assert log_m_scaled_quantized_mi(H, 0.5, 1, 0.0, q, 40, 1) == pytest.approx(base)
    a = log_m_scaled_quantized_mi(H, 0.5, 1, 1.0, q, 40, 1)
    b = log_m_scaled_quantized_mi(H, 0.5, 1, 2.0, q, 40, 1)
    assert b < a < base


def test_mi_stderr_small_at_64():
    H, r, _ = sample_session_geometry(64, ChannelParams(), seed=0)
    mi, se = mi_with_stderr(H, r ** 2 / 64, 1.0, trials=200)
    assert se / mi < 0.02


def test_session_builder():
    p = ChannelParams(alpha=3)
    inst = random_pairing(sample_network(1024, seed=0), 0)
    grid = build_cluster_grid(inst, 64)
    far = build_session(inst, grid, 0, 10, p)
    assert not far.neighbor_mode
    assert far.per_node_power == pytest.approx(p.P * far.r_SD ** 3 / len(grid.cells[0]))
    nb = build_session(inst, grid, 0, 1, p)
    assert nb.neighbor_mode
    assert set(nb.tx_nodes) <= set(grid.cells[0]) and set(nb.rx_nodes) <= set(grid.cells[1])
    assert abs(len(nb.tx_nodes) - len(grid.cells[0]) / 2) <= 10
    H = session_channel(inst, far, p, seed=1)
    assert H.shape == (len(far.rx_nodes), len(far.tx_nodes))
    with pytest.raises(InvalidArgument):
        build_session(inst, grid, 3, 3, p)


def test_received_power_mc_matches_closed_form():
    p = ChannelParams(alpha=2)
    H, r, _ = sample_session_geometry(8, p, seed=1)
    est, se, exact = received_power_mc(H, p.P * r ** 2 / 8, p.N0, trials=3000, seed=2)
    assert np.all(np.abs(est - exact) <= 3.5 * se)
    P1, P2 = received_power_bounds(p)
    assert np.all((exact >= P1) & (exact <= P2))


@pytest.mark.slow
def test_linear_growth():
    p = ChannelParams(alpha=2)
    a, b = rho_range(2)
    Ms = [8, 16, 32, 64]
    mi = []
    for M in Ms:
        vals = []
        for d in range(60):
            H, r, _ = sample_session_geometry(M, p, seed=d)
            vals.append(mimo_mutual_information(H, p.P * r ** 2 / M, p.N0, 1, d))
        mi.append(np.mean(vals))
    slope, _ = np.polyfit(Ms, mi, 1)
    r2 = np.corrcoef(Ms, mi)[0, 1] ** 2
    assert r2 >= 0.98
    assert slope >= 0.8 * paley_zygmund_bound(a, b, p.snr, 1, a / 2)
