"""Classical noise sources for silicon spin qubits.

Charge noise ``v(t)`` on each dot has the three-branch spectrum

    S(f) = A0/f_l      for f < f_l
    S(f) = A0/f        for f_l <= f <= f_c
    S(f) = A0 f_c/f^2  for f > f_c

(one-sided, uV^2/Hz). The nuclear hyperfine field is quasistatic: one Gaussian
frequency offset per experiment run.

Unit conventions used throughout: times in us, angular frequencies in rad/us,
ordinary frequencies in MHz unless a name says ``_hz``, charge noise in ueV.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

from .numerics import US

__all__ = [
    "OneOverFSpec",
    "NoiseTrajectory",
    "QubitNoiseParams",
    "NoiseSensitivities",
    "InconsistentParametersError",
    "band_power",
    "psd_value",
    "synthesize_trajectory",
    "derive_sensitivities",
    "draw_nuclear_shift",
    "write_trajectory_csv",
]


class InconsistentParametersError(ValueError):
    """Coherence parameters that make a sensitivity formula imaginary."""


@dataclass(frozen=True)
class OneOverFSpec:
    a0: float
    f_ell: float = 100.0
    f_c: float = 1e7

    def __post_init__(self):
        if not self.a0 >= 0:
            raise ValueError("a0 must be non-negative")
        if not 0 < self.f_ell < self.f_c:
            raise ValueError("need 0 < f_ell < f_c")

    @property
    def log_band(self) -> float:
        return math.log(self.f_c / self.f_ell)

    @property
    def total_variance(self) -> float:
        """Integral of S(f) over all frequencies, ``A0 (ln(f_c/f_l) + 2)``."""
        return self.a0 * (self.log_band + 2.0)


def _cumulative_power(spec: OneOverFSpec, f):
    """Integral of S from 0 to ``f`` (vectorised)."""
    f = np.asarray(f, dtype=float)
    a0, fl, fc = spec.a0, spec.f_ell, spec.f_c
    low = a0 * np.clip(f, 0, None) / fl
    mid = a0 * (1.0 + np.log(np.clip(f, fl, fc) / fl))
    high = a0 * (2.0 + math.log(fc / fl) - fc / np.maximum(f, fc))
    return np.where(f <= fl, low, np.where(f <= fc, mid, high))


def band_power(spec: OneOverFSpec, f_lo, f_hi):
    """Variance carried by the band ``[f_lo, f_hi]`` (Hz)."""
    return _cumulative_power(spec, f_hi) - _cumulative_power(spec, f_lo)


def psd_value(spec: OneOverFSpec, f):
    """The three-branch one-sided density S(f) in uV^2/Hz."""
    f = np.asarray(f, dtype=float)
    a0, fl, fc = spec.a0, spec.f_ell, spec.f_c
    return np.where(f < fl, a0 / fl, np.where(f <= fc, a0 / np.maximum(f, 1e-300), a0 * fc / f**2))


@dataclass(frozen=True)
class NoiseTrajectory:
    dt: float
    values: np.ndarray
    spec: OneOverFSpec
    seed: tuple | None = None

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.size)


def synthesize_trajectory(
    spec: OneOverFSpec,
    dt: float,
    n: int,
    rng: np.random.Generator,
    *,
    low_band: bool = True,
    seed_info: tuple | None = None,
) -> NoiseTrajectory:
    """Draw one real charge-noise trajectory ``v(t)`` (ueV) sampled every ``dt`` us.

    Each positive-frequency FFT bin gets an independent complex Gaussian
    amplitude whose variance equals the exact integral of S(f) across that
    bin; the real inverse transform enforces Hermitian symmetry. Power below
    half the first bin (``1/(2 n dt)``) cannot be time-resolved; with
    ``low_band=True`` it is added as a single quasistatic offset so that the
    ensemble variance equals the full integral of S.

    The transform runs at the next FFT-friendly length ``m >= n`` and the
    first ``n`` samples are kept, which leaves the stationary statistics intact.
    """
    if n < 2:
        raise ValueError("trajectory needs at least two samples")
    if not dt > 0:
        raise ValueError("dt must be positive")
    dt_s = dt * US
    df = 1.0 / (n * dt_s)
    if df > 10 * spec.f_ell:
        warnings.warn(
            f"trajectory of {n * dt:.4g} us resolves nothing below {df:.3g} Hz "
            f"(f_ell = {spec.f_ell:.3g} Hz)",
            stacklevel=2,
        )
    if 0.5 / dt_s < spec.f_c / 2:
        warnings.warn("sampling too coarse: Nyquist frequency below f_c/2", stacklevel=2)
    if spec.a0 == 0:
        return NoiseTrajectory(dt, np.zeros(n), spec, seed_info)

    n_out = n
    n = scipy.fft.next_fast_len(n, real=True)
    df = 1.0 / (n * dt_s)
    k = np.arange(1, n // 2 + 1)
    lo = (k - 0.5) * df
    hi = np.minimum((k + 0.5) * df, 0.5 / dt_s)
    var = band_power(spec, lo, hi)
    amp = np.sqrt(var) * n
    coeff = np.empty(n // 2 + 1, dtype=complex)
    coeff[0] = 0.0
    z = rng.standard_normal((2, k.size))
    coeff[1:] = 0.5 * amp * (z[0] + 1j * z[1])
    if n % 2 == 0:
        coeff[-1] = amp[-1] * z[0, -1]
    values = scipy.fft.irfft(coeff, n)[:n_out]
    if low_band:
        values += math.sqrt(float(band_power(spec, 0.0, 0.5 * df))) * rng.standard_normal()
    return NoiseTrajectory(dt, values, spec, seed_info)


@dataclass(frozen=True)
class QubitNoiseParams:
    """Measured coherence quantities of one qubit.

    ``gamma_r`` and ``gamma_e`` are envelope decay rates in 1/us; ``omega0`` and
    ``j0`` are ordinary frequencies in MHz (the Rabi frequency of the spin-flip
    oscillation and the exchange frequency, so ``t_ex = 1/(2 j0)``).
    """

    t2_star: float
    t2: float = math.inf
    gamma_r: float = 0.0
    gamma_e: float = 0.0
    omega0: float = 5.0
    j0: float = 10.0

    def __post_init__(self):
        if not self.t2_star > 0:
            raise ValueError("t2_star must be positive")
        if self.t2 < self.t2_star:
            raise ValueError("t2 must be at least t2_star")
        if self.gamma_r < 0 or self.gamma_e < 0:
            raise ValueError("decay rates must be non-negative")


@dataclass(frozen=True)
class NoiseSensitivities:
    """Couplings of one qubit (and its exchange pair) to the noise fields.

    ``delta_n`` in rad/us per ueV; ``d_omega_n`` and ``d_j_n`` are fractional
    changes per ueV; ``sigma_b`` is the RMS nuclear shift in rad/us.
    """

    delta_n: float = 0.0
    d_omega_n: float = 0.0
    d_j_n: float = 0.0
    sigma_b: float = 0.0

    def __post_init__(self):
        for name in ("delta_n", "d_omega_n", "d_j_n", "sigma_b"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")


def derive_sensitivities(p: QubitNoiseParams, spec: OneOverFSpec) -> NoiseSensitivities:
    """Noise sensitivities from coherence times and envelope decay rates.

    With ``ln = ln(f_c/f_l)``::

        sigma_b^2 = 2/T2*^2 - ln/(T2^2 ln 4)
        delta_n   = sqrt(1/(A0 ln)) sqrt(1/T2*^2 - sigma_b^2/2)
        d_omega_n = sqrt(1/(A0 ln)) gamma_r/Omega0
        d_j_n     = sqrt(2/(A0 ln)) gamma_e/J0

    ``Omega0`` and ``J0`` enter as angular frequencies ``2 pi omega0`` and
    ``2 pi j0``. The RMS value of the nuclear shift is used inside the
    ``delta_n`` radicand.
    """
    ln = spec.log_band
    inv_t2 = 0.0 if math.isinf(p.t2) else 1.0 / p.t2**2
    sigma_b2 = 2.0 / p.t2_star**2 - ln * inv_t2 / math.log(4.0)
    if sigma_b2 < 0:
        raise InconsistentParametersError(
            f"nuclear-field variance formula is negative ({sigma_b2:.3g}): "
            "T2 is too short for the given T2* and cutoffs"
        )
    rad = 1.0 / p.t2_star**2 - sigma_b2 / 2.0
    if rad < -1e-12 * (1.0 / p.t2_star**2):
        raise InconsistentParametersError(f"detuning sensitivity radicand is negative ({rad:.3g})")
    rad = max(rad, 0.0)
    if spec.a0 == 0:
        if rad > 0 or p.gamma_r > 0 or p.gamma_e > 0:
            raise InconsistentParametersError("a0 = 0 cannot produce charge-noise dephasing")
        return NoiseSensitivities(0.0, 0.0, 0.0, math.sqrt(sigma_b2))
    pref = math.sqrt(1.0 / (spec.a0 * ln))
    return NoiseSensitivities(
        delta_n=pref * math.sqrt(rad),
        d_omega_n=pref * p.gamma_r / (2 * math.pi * p.omega0),
        d_j_n=math.sqrt(2.0) * pref * p.gamma_e / (2 * math.pi * p.j0),
        sigma_b=math.sqrt(sigma_b2),
    )


def draw_nuclear_shift(sens: NoiseSensitivities, rng: np.random.Generator) -> float:
    """One quasistatic hyperfine frequency offset (rad/us)."""
    if sens.sigma_b == 0:
        return 0.0
    return float(sens.sigma_b * rng.standard_normal())


def write_trajectory_csv(traj: NoiseTrajectory, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_us", "v_ueV"])
        for t, v in zip(traj.times, traj.values):
            w.writerow([f"{t:.12g}", f"{v:.12g}"])
    return path
