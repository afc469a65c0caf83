import math
import warnings

import numpy as np
import pytest

from tcqpt.experiments import ExperimentParams, fit_gaussian_decay, ramsey_experiment
from tcqpt.noise import (
    InconsistentParametersError,
    NoiseSensitivities,
    OneOverFSpec,
    QubitNoiseParams,
    band_power,
    derive_sensitivities,
    draw_nuclear_shift,
    psd_value,
    synthesize_trajectory,
    write_trajectory_csv,
)
from tcqpt.numerics import RealSeries, average_spectra, loglog_slope, periodogram_psd, seeded_rng

FIG1 = OneOverFSpec(0.25, 100.0, 1e7)

# direct scalar evaluation of the sensitivity formulas (T2* 1.9, T2 40, gamma_r 8 kHz, 5 MHz Rabi)
FIG1_SIGMA_B = 0.7408279880311984
FIG1_DELTA_N = 0.03002806021966134
FIG1_D_OMEGA_N = 1.5009881494987208e-4


def test_spec_validation():
    with pytest.raises(ValueError):
        OneOverFSpec(-1.0)
    with pytest.raises(ValueError):
        OneOverFSpec(1.0, 100.0, 10.0)


def test_band_power_total():
    total = float(band_power(FIG1, 0.0, 1e15))
    assert abs(total - FIG1.total_variance) < 1e-6 * total
    assert abs(FIG1.total_variance - 0.25 * (math.log(1e5) + 2)) < 1e-12


def test_band_power_matches_quadrature():
    from scipy.integrate import quad

    for lo, hi in ((10.0, 50.0), (50.0, 5e3), (1e6, 3e7)):
        ref = quad(lambda f: float(psd_value(FIG1, f)), lo, hi, limit=200, points=[100.0, 1e7])[0]
        assert abs(float(band_power(FIG1, lo, hi)) - ref) < 1e-6 * ref


def test_psd_branches():
    s = psd_value(FIG1, np.array([10.0, 1e3, 1e8]))
    assert np.allclose(s, [0.25 / 100, 0.25 / 1e3, 0.25 * 1e7 / 1e16])


def test_zero_amplitude_gives_zero_trajectory():
    spec = OneOverFSpec(0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tr = synthesize_trajectory(spec, 0.05, 100, seeded_rng(0))
    assert np.all(tr.values == 0)


def test_synthesis_argument_errors():
    with pytest.raises(ValueError):
        synthesize_trajectory(FIG1, 0.05, 1, seeded_rng(0))
    with pytest.raises(ValueError):
        synthesize_trajectory(FIG1, 0.0, 100, seeded_rng(0))


def test_short_trajectory_warns():
    with pytest.warns(UserWarning):
        synthesize_trajectory(FIG1, 0.05, 100, seeded_rng(0))


def test_coarse_sampling_warns():
    with pytest.warns(UserWarning):
        synthesize_trajectory(FIG1, 1.0, 200_000, seeded_rng(0))


def test_trajectory_is_real_and_sized():
    tr = synthesize_trajectory(FIG1, 0.05, 400_001, seeded_rng(1))
    assert tr.values.dtype == float and len(tr) == 400_001
    assert np.isclose(tr.times[-1], 20_000.0)


def _ensemble(n_traj, n=400_000, dt=0.05, seed=0):
    return [synthesize_trajectory(FIG1, dt, n, seeded_rng(seed, r)).values for r in range(n_traj)]


def test_ensemble_variance_matches_band_integral():
    vals = np.array(_ensemble(200))
    ratio = vals.var() / FIG1.total_variance
    assert abs(ratio - 1) < 0.10


def test_psd_round_trip_branches():
    # 1/f slope in band, 1/f^2 above f_c and a white floor below f_ell
    spec = OneOverFSpec(0.25, 1e4, 1e6)
    dt = 0.05
    ests = [
        periodogram_psd(RealSeries(dt, synthesize_trajectory(spec, dt, 2**17, seeded_rng(2, r)).values), 2**15)
        for r in range(100)
    ]
    est = average_spectra(ests)
    assert abs(loglog_slope(est.freqs, est.psd, 2e4, 5e5) + 1) < 0.15
    assert abs(loglog_slope(est.freqs, est.psd, 2e6, 8e6) + 2) < 0.3
    low = est.psd[est.freqs < spec.f_ell]
    assert 0.5 < low.mean() / (spec.a0 / spec.f_ell) < 2.0


def test_sensitivities_fig1_values():
    s = derive_sensitivities(QubitNoiseParams(1.9, 40.0, 0.008, 0.0, 5.0), FIG1)
    assert abs(s.sigma_b - FIG1_SIGMA_B) < 1e-12
    assert abs(s.delta_n - FIG1_DELTA_N) < 1e-12
    assert abs(s.d_omega_n - FIG1_D_OMEGA_N) < 1e-15
    assert s.d_j_n == 0


def test_sensitivities_trivial_limits():
    s = derive_sensitivities(QubitNoiseParams(2.0), FIG1)
    assert abs(s.sigma_b**2 - 2 / 4.0) < 1e-12
    assert s.delta_n == 0 and s.d_omega_n == 0


def test_exchange_sensitivity():
    s = derive_sensitivities(QubitNoiseParams(1.0, 30.0, 0.0, 0.045, 5.0, 10.0), FIG1)
    ref = math.sqrt(2 / (0.25 * math.log(1e5))) * 0.045 / (2 * math.pi * 10.0)
    assert abs(s.d_j_n - ref) < 1e-15


def test_sensitivities_scale_consistency():
    p = QubitNoiseParams(1.0, 30.0, 0.04, 0.045)
    a = derive_sensitivities(p, OneOverFSpec(0.25))
    b = derive_sensitivities(p, OneOverFSpec(0.5))
    r2 = math.sqrt(2)
    assert abs(a.delta_n / b.delta_n - r2) < 1e-12
    assert abs(a.d_omega_n / b.d_omega_n - r2) < 1e-12
    assert abs(a.d_j_n / b.d_j_n - r2) < 1e-12
    assert a.sigma_b == b.sigma_b


def test_inconsistent_parameters():
    # T2 barely above T2* makes the nuclear variance negative
    with pytest.raises(InconsistentParametersError):
        derive_sensitivities(QubitNoiseParams(1.0, 1.0), FIG1)


def test_qubit_param_validation():
    with pytest.raises(ValueError):
        QubitNoiseParams(2.0, 1.0)
    with pytest.raises(ValueError):
        QubitNoiseParams(1.0, 2.0, -0.1)
    with pytest.raises(ValueError):
        NoiseSensitivities(delta_n=-1.0)


def test_nuclear_draws():
    s = NoiseSensitivities(sigma_b=0.7)
    a = np.array([draw_nuclear_shift(s, seeded_rng(3, k)) for k in range(20_000)])
    rng = seeded_rng(4, 0)
    b = np.array([draw_nuclear_shift(s, rng) for _ in range(100_000)])
    assert abs(b.std() / 0.7 - 1) < 0.02
    assert abs(np.corrcoef(a, b[: a.size])[0, 1]) < 0.03
    assert draw_nuclear_shift(NoiseSensitivities(), rng) == 0.0


def test_independent_streams():
    a = seeded_rng(5, 1).standard_normal(100_000)
    b = seeded_rng(5, 2).standard_normal(100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01


def test_quasistatic_ramsey_calibration():
    t2s = 1.5
    params = ExperimentParams(
        OneOverFSpec(0.25), QubitNoiseParams(t2s), dt=1e-3, sens=NoiseSensitivities(sigma_b=math.sqrt(2) / t2s)
    )
    curve = ramsey_experiment(params, np.linspace(0, 3 * t2s, 16), n_realizations=4000, seed=1)
    fit = fit_gaussian_decay(curve.delays, curve.coherence)
    assert abs(fit.params[1] / t2s - 1) < 0.10


def test_trajectory_csv(tmp_path):
    tr = synthesize_trajectory(FIG1, 0.05, 400_000, seeded_rng(6))
    p = write_trajectory_csv(tr, tmp_path / "v.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "t_us,v_ueV"
    assert len(lines) == 400_001
