import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcqpt.numerics import (
    BranchCutError,
    RealSeries,
    SpectrumEstimate,
    average_spectra,
    least_squares_fit,
    loglog_slope,
    matrix_exp,
    matrix_log_principal,
    matrix_log_principal_batch,
    periodogram_psd,
    seeded_rng,
)


def test_parseval_single_segment():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(4096)
    s = RealSeries(0.01, x)
    est = periodogram_psd(s)
    df = est.freqs[1] - est.freqs[0]
    assert abs(est.psd.sum() * df - x.var()) < 1e-10 * x.var()


def test_parseval_odd_length():
    x = np.random.default_rng(2).standard_normal(1001)
    est = periodogram_psd(RealSeries(0.5, x))
    df = est.freqs[0]
    assert abs(est.psd.sum() * df - x.var()) < 1e-10


def test_white_noise_level():
    # one-sided white PSD is 2 sigma^2 dt
    rng = np.random.default_rng(3)
    dt_us = 0.1
    est = periodogram_psd(RealSeries(dt_us, rng.standard_normal(2**16)), segment_len=256)
    assert est.n_averages == 256
    expected = 2 * dt_us * 1e-6
    assert abs(est.psd[:-1].mean() / expected - 1) < 0.02


def test_segment_len_errors():
    s = RealSeries(1.0, np.zeros(10))
    with pytest.raises(ValueError):
        periodogram_psd(s, segment_len=1)
    with pytest.raises(ValueError):
        periodogram_psd(s, segment_len=11)


def test_series_validation():
    with pytest.raises(ValueError):
        RealSeries(1.0, np.array([]))
    with pytest.raises(ValueError):
        RealSeries(0.0, np.ones(3))
    assert np.allclose(RealSeries(0.5, np.ones(3), t0=1.0).times, [1.0, 1.5, 2.0])


def test_spectrum_validation():
    with pytest.raises(ValueError):
        SpectrumEstimate(np.array([2.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        SpectrumEstimate(np.array([1.0, 2.0]), np.array([1.0, -1.0]))


def test_average_spectra():
    a = SpectrumEstimate(np.array([1.0, 2.0]), np.array([1.0, 3.0]))
    b = SpectrumEstimate(np.array([1.0, 2.0]), np.array([3.0, 5.0]))
    m = average_spectra([a, b])
    assert np.allclose(m.psd, [2.0, 4.0])
    assert m.n_averages == 2
    with pytest.raises(ValueError):
        average_spectra([a, SpectrumEstimate(np.array([1.0, 3.0]), np.array([1.0, 1.0]))])


def test_loglog_slope_exact_power_law():
    f = np.logspace(0, 4, 500)
    assert abs(loglog_slope(f, 3.0 / f) + 1) < 1e-6
    assert abs(loglog_slope(f, f**-2, n_bins=None) + 2) < 1e-9


def test_exp_log_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a = 0.3 * rng.standard_normal((4, 4))
        assert np.max(np.abs(matrix_log_principal(matrix_exp(a)) - a)) < 1e-10


def test_log_of_identity_is_zero():
    assert np.allclose(matrix_log_principal(np.eye(16)), 0, atol=1e-15)


def test_rotation_log():
    th = 0.7
    r = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    log = matrix_log_principal(r)
    assert np.isrealobj(log)
    assert np.allclose(log, [[0, -th], [th, 0]], atol=1e-12)


def test_branch_cut_raises():
    with pytest.raises(BranchCutError):
        matrix_log_principal(np.diag([1.0, -1.0]))


def test_singular_raises():
    with pytest.raises(np.linalg.LinAlgError):
        matrix_log_principal(np.diag([1.0, 0.0]))


def test_defective_matrix_falls_back():
    m = np.array([[1.0, 1.0], [0.0, 1.0]])
    log = matrix_log_principal(m)
    assert np.allclose(matrix_exp(log), m, atol=1e-10)


def test_batch_matches_single():
    rng = np.random.default_rng(5)
    ms = matrix_exp(0.2 * rng.standard_normal((6, 3, 3)))
    batch = matrix_log_principal_batch(ms)
    for m, l in zip(ms, batch):
        assert np.allclose(matrix_log_principal(m), l, atol=1e-12)


def test_non_square_rejected():
    with pytest.raises(ValueError):
        matrix_exp(np.ones((2, 3)))
    with pytest.raises(ValueError):
        matrix_log_principal(np.array([[np.nan, 0], [0, 1]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 0.8))
def test_round_trip_property(seed, scale):
    a = scale * np.random.default_rng(seed).standard_normal((4, 4))
    assert np.max(np.abs(matrix_log_principal(matrix_exp(a)) - a)) < 1e-10


def test_fit_linear_model_exact():
    x = np.linspace(0, 1, 20)
    res = least_squares_fit(lambda x, p: p[0] + p[1] * x, x, 2 - 3 * x, [0.0, 0.0])
    assert res.converged and res.covariance_ok
    assert np.allclose(res.params, [2, -3], atol=1e-8)


def test_fit_exponential_with_noise():
    rng = np.random.default_rng(6)
    x = np.linspace(0, 5, 60)
    y = 1.5 * np.exp(-x / 1.3) + 0.01 * rng.standard_normal(x.size)
    res = least_squares_fit(lambda x, p: p[0] * np.exp(-x / p[1]), x, y, [1.0, 1.0])
    assert abs(res.params[1] - 1.3) < 5 * res.stderr[1] + 1e-3
    assert np.all(res.stderr > 0)


def test_fit_degenerate_jacobian():
    x = np.linspace(0, 1, 10)
    res = least_squares_fit(lambda x, p: (p[0] + p[1]) * x, x, x, [0.2, 0.3])
    assert not res.covariance_ok
    assert np.all(np.isinf(res.covariance))


def test_fit_argument_errors():
    with pytest.raises(ValueError):
        least_squares_fit(lambda x, p: p[0] * x, [1, 2], [1], [1.0])
    with pytest.raises(ValueError):
        least_squares_fit(lambda x, p: p[0] + p[1] * x, [1.0], [1.0], [1.0, 1.0])


def test_seeded_rng_reproducible_and_independent():
    a = seeded_rng(7, 0).standard_normal(100_000)
    b = seeded_rng(7, 0).standard_normal(100_000)
    c = seeded_rng(7, 1).standard_normal(100_000)
    assert np.array_equal(a, b)
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.01
    assert not np.array_equal(seeded_rng(8, 0).standard_normal(5), a[:5])
