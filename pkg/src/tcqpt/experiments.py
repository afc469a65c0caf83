"""Single-qubit coherence benchmarks: Ramsey, Rabi, Hahn echo and CPMG.

All sequences start in spin-down and report the spin-down return
probability ``P0``. The phase of the closing pi/2 pulse is chosen so that the
noiseless sequence returns ``P0 = 1``; the coherence is then ``W = 2 P0 - 1``.
Delays are total free-evolution times in us.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .dynamics import ControlSchedule, SegmentControl, evolve_batch, noise_prefix
from .noise import (
    NoiseSensitivities,
    OneOverFSpec,
    QubitNoiseParams,
    derive_sensitivities,
    synthesize_trajectory,
)
from .numerics import US, FitResult, SpectrumEstimate, least_squares_fit, seeded_rng

__all__ = [
    "ExperimentParams",
    "DecayCurve",
    "ramsey_experiment",
    "rabi_experiment",
    "echo_experiment",
    "cpmg_experiment",
    "cpmg_sweep",
    "cpmg_spectroscopy",
    "fit_gaussian_decay",
    "fit_stretched_decay",
    "fit_rabi_envelope",
    "write_curve_csv",
    "write_spectrum_csv",
]

_MEM_SAMPLES = 4_000_000


@dataclass(frozen=True)
class ExperimentParams:
    """Noise environment of one qubit plus the integration step (us).

    Pulses are square with Rabi frequency ``qubit.omega0`` (MHz). If ``sens`` is
    given it overrides the couplings derived from the coherence parameters.
    """

    spec: OneOverFSpec
    qubit: QubitNoiseParams
    dt: float = 5e-4
    sens: NoiseSensitivities | None = None

    def sensitivities(self) -> NoiseSensitivities:
        return self.sens if self.sens is not None else derive_sensitivities(self.qubit, self.spec)


@dataclass(frozen=True)
class DecayCurve:
    delays: np.ndarray
    p0: np.ndarray
    stderr: np.ndarray
    label: str = ""
    n_realizations: int = 0
    fit: FitResult | None = None

    @property
    def coherence(self) -> np.ndarray:
        return 2.0 * self.p0 - 1.0

    @property
    def decay_time(self) -> float:
        return float(self.fit.params[1]) if self.fit is not None else math.nan


def _pulse(f_mhz, angle, phase, dt):
    dur = angle / (2 * math.pi * f_mhz)
    return SegmentControl.drive(dur, f_mhz, phase)


def _idle(t):
    return [SegmentControl.idle(t)] if t > 0 else []


def _choose_final_phase(build: Callable[[float], list], dt: float) -> float:
    best, best_p = 0.0, -1.0
    for ph in (0.0, math.pi):
        s = ControlSchedule(tuple(build(ph)), dt=dt)
        p = abs(evolve_batch(s, None)[0, 0, 1, 1]) ** 2
        if p > best_p:
            best, best_p = ph, p
    return best


def _monte_carlo(
    params: ExperimentParams,
    schedules: Sequence[ControlSchedule | None],
    n_realizations: int,
    seed: int,
):
    """Mean and standard error of P0 for each schedule (None means P0 = 1)."""
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    sens = params.sensitivities()
    n_steps = max([s.total_steps for s in schedules if s is not None] + [2])
    charge = sens.delta_n > 0 or sens.d_omega_n > 0
    chunk = max(1, min(n_realizations, _MEM_SAMPLES // n_steps))
    vals = np.empty((n_realizations, len(schedules)))
    for c0 in range(0, n_realizations, chunk):
        idx = range(c0, min(n_realizations, c0 + chunk))
        noise = None
        if charge:
            rows = []
            with warnings.catch_warnings():
                # low-band power is carried by the quasistatic offset
                warnings.simplefilter("ignore")
                for r in idx:
                    rng = seeded_rng(seed, 2 * r)
                    rows.append(synthesize_trajectory(params.spec, params.dt, n_steps, rng).values)
            noise = np.stack(rows)[:, None, :]
        pre = None if noise is None else noise_prefix(noise)
        b = np.array([sens.sigma_b * seeded_rng(seed, 2 * r + 1).standard_normal() for r in idx])
        b = b[:, None]
        for j, s in enumerate(schedules):
            if s is None:
                vals[idx.start : idx.stop, j] = 1.0
                continue
            sched = s.with_couplings(delta_n=(sens.delta_n,), d_omega_n=(sens.d_omega_n,))
            U = evolve_batch(sched, noise, b, [0], prefix=pre)[:, 0]
            vals[idx.start : idx.stop, j] = np.abs(U[:, 1, 1]) ** 2
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(n_realizations) if n_realizations > 1 else np.zeros(len(schedules))
    return mean, se


def _sequence_curve(params, builder, delays, n_realizations, seed, label):
    delays = np.asarray(delays, dtype=float)
    if np.any(np.diff(delays) < 0):
        raise ValueError("delays must be sorted ascending")
    if np.any(delays < 0):
        raise ValueError("delays must be non-negative")
    ph = _choose_final_phase(lambda p: builder(0.0, p), params.dt)
    scheds = [ControlSchedule(tuple(builder(t, ph)), dt=params.dt) for t in delays]
    p0, se = _monte_carlo(params, scheds, n_realizations, seed)
    return DecayCurve(delays, p0, se, label, n_realizations)


def ramsey_experiment(params: ExperimentParams, delays, n_realizations: int = 200, seed: int = 0) -> DecayCurve:
    """X90 - idle(tau) - X90 with a fresh noise draw per realization."""
    f = params.qubit.omega0
    dt = params.dt

    def build(t, ph):
        return [_pulse(f, math.pi / 2, 0.0, dt), *_idle(t), _pulse(f, math.pi / 2, ph, dt)]

    return _sequence_curve(params, build, delays, n_realizations, seed, "ramsey")


def echo_experiment(params: ExperimentParams, delays, n_realizations: int = 200, seed: int = 0) -> DecayCurve:
    """X90 - idle(tau/2) - X180 - idle(tau/2) - X90."""
    f = params.qubit.omega0
    dt = params.dt

    def build(t, ph):
        return [
            _pulse(f, math.pi / 2, 0.0, dt),
            *_idle(t / 2),
            _pulse(f, math.pi, 0.0, dt),
            *_idle(t / 2),
            _pulse(f, math.pi / 2, ph, dt),
        ]

    return _sequence_curve(params, build, delays, n_realizations, seed, "echo")


def _cpmg_builder(params: ExperimentParams, n_pi: int):
    f = params.qubit.omega0
    dt = params.dt

    def build(t, ph):
        seq = [_pulse(f, math.pi / 2, 0.0, dt)]
        for _ in range(n_pi):
            seq += [*_idle(t / (2 * n_pi)), _pulse(f, math.pi, math.pi / 2, dt), *_idle(t / (2 * n_pi))]
        seq.append(_pulse(f, math.pi / 2, ph, dt))
        return seq

    return build


def cpmg_experiment(
    params: ExperimentParams, n_pi: int, delays, n_realizations: int = 200, seed: int = 0
) -> DecayCurve:
    """X90 - [idle(tau/2n) - Y180 - idle(tau/2n)]^n - X90, fitted with a stretched exponential."""
    return cpmg_sweep(params, {n_pi: delays}, n_realizations, seed)[n_pi]


def cpmg_sweep(
    params: ExperimentParams, delays_by_n: Mapping[int, Sequence[float]], n_realizations: int = 200, seed: int = 0
) -> dict:
    """CPMG curves for several pulse counts driven by shared noise realizations."""
    scheds, spans = [], {}
    for n_pi, delays in delays_by_n.items():
        if n_pi < 1:
            raise ValueError("n_pi must be at least 1")
        delays = np.asarray(delays, dtype=float)
        if np.any(np.diff(delays) < 0) or np.any(delays < 0):
            raise ValueError("delays must be sorted and non-negative")
        build = _cpmg_builder(params, n_pi)
        ph = _choose_final_phase(lambda p: build(0.0, p), params.dt)
        spans[n_pi] = (len(scheds), delays)
        scheds += [ControlSchedule(tuple(build(t, ph)), dt=params.dt) for t in delays]
    p0, se = _monte_carlo(params, scheds, n_realizations, seed)
    out = {}
    for n_pi, (i0, delays) in spans.items():
        sl = slice(i0, i0 + delays.size)
        fit = fit_stretched_decay(delays, 2 * p0[sl] - 1)
        out[n_pi] = DecayCurve(delays, p0[sl], se[sl], f"cpmg{n_pi}", n_realizations, fit)
    return out


def rabi_experiment(
    params: ExperimentParams, durations, n_realizations: int = 200, seed: int = 0
) -> DecayCurve:
    """Continuous resonant drive of the given durations.

    The returned ``p0`` is the raw spin-down probability; at pi times
    ``1 - 2 p0`` is the Rabi amplitude. All durations are evaluated as
    cumulative prefixes of one drive so each realization is integrated once.
    """
    durations = np.asarray(durations, dtype=float)
    if np.any(np.diff(durations) < 0) or np.any(durations < 0):
        raise ValueError("durations must be sorted and non-negative")
    f = params.qubit.omega0
    if not f > 0:
        raise ValueError("Rabi frequency must be positive")
    sens = params.sensitivities()
    dt = params.dt
    steps = np.rint(durations / dt).astype(int)
    n_total = max(int(steps[-1]) if steps.size else 0, 2)
    chunk = max(1, min(n_realizations, _MEM_SAMPLES // n_total))
    vals = np.empty((n_realizations, durations.size))
    base = ControlSchedule((SegmentControl.drive(dt, f),), dt=dt,
                           delta_n=(sens.delta_n,), d_omega_n=(sens.d_omega_n,))
    for c0 in range(0, n_realizations, chunk):
        idx = range(c0, min(n_realizations, c0 + chunk))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            noise = np.stack(
                [synthesize_trajectory(params.spec, dt, n_total, seeded_rng(seed, 2 * r)).values for r in idx]
            )[:, None, :]
        b = np.array([sens.sigma_b * seeded_rng(seed, 2 * r + 1).standard_normal() for r in idx])[:, None]
        U = np.broadcast_to(np.eye(2, dtype=complex), (len(idx), 2, 2)).copy()
        done = 0
        for j, k in enumerate(steps):
            if k > done:
                blk = ControlSchedule(
                    (SegmentControl.drive((k - done) * dt, f),), dt=dt,
                    delta_n=base.delta_n, d_omega_n=base.d_omega_n,
                )
                U = evolve_batch(blk, noise, b, [done])[:, 0] @ U
                done = k
            vals[idx.start : idx.stop, j] = np.abs(U[:, 1, 1]) ** 2
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(n_realizations) if n_realizations > 1 else np.zeros(durations.size)
    return DecayCurve(durations, mean, se, "rabi", n_realizations)


def _fit(model, x, y, p0, **kw) -> FitResult:
    return least_squares_fit(model, np.asarray(x, float), np.asarray(y, float), p0, **kw)


def _guess_time(x, y):
    """Delay where y first drops below 1/e of its start value."""
    y = np.asarray(y)
    below = np.nonzero(y < y[0] / math.e)[0]
    if below.size:
        return float(x[below[0]])
    return float(x[-1]) * 2 if x[-1] > 0 else 1.0


def fit_gaussian_decay(delays, w) -> FitResult:
    """Fit ``W = A exp(-(tau/T)^2)``; params ``(A, T)``."""
    t0 = _guess_time(np.asarray(delays), w)
    res = _fit(lambda x, p: p[0] * np.exp(-((x / p[1]) ** 2)), delays, w, [max(w[0], 0.1), t0])
    res.params[1] = abs(res.params[1])
    return res


def fit_stretched_decay(delays, w) -> FitResult:
    """Fit ``W = A exp(-(tau/T)^alpha)``; params ``(A, T, alpha)``."""
    t0 = _guess_time(np.asarray(delays), w)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        res = _fit(
            lambda x, p: p[0] * np.exp(-(np.abs(x / p[1]) ** p[2])),
            delays, w, [max(w[0], 0.1), t0, 2.0],
        )
    res.params[1] = abs(res.params[1])
    return res


def fit_rabi_envelope(times, amplitude) -> FitResult:
    """Fit ``A(t) = a exp(-(gamma t)^2/2)``; params ``(a, gamma)``."""
    t = np.asarray(times, float)
    g0 = 1.0 / _guess_time(t, amplitude)
    res = _fit(lambda x, p: p[0] * np.exp(-0.5 * (p[1] * x) ** 2), t, amplitude, [1.0, g0])
    res.params[1] = abs(res.params[1])
    return res


def cpmg_spectroscopy(curves: Mapping[int, DecayCurve]) -> SpectrumEstimate:
    """First-harmonic noise spectrum from CPMG coherences.

    Each point ``(n, tau, W)`` maps to ``S(f) = -pi^2 ln W / (4 tau)`` at
    ``f = n/(2 tau)`` with tau in seconds. Points with ``W <= 0`` or ``W >= 1``
    carry no information and are skipped; coincident frequencies are averaged.
    """
    if len(curves) < 3:
        raise ValueError("need at least three distinct pulse counts")
    fs, ss = [], []
    for n, c in curves.items():
        tau = np.asarray(c.delays) * US
        w = c.coherence
        ok = (w > 0) & (w < 1) & (tau > 0)
        fs.append(n / (2 * tau[ok]))
        ss.append(-(math.pi**2) * np.log(w[ok]) / (4 * tau[ok]))
    f = np.concatenate(fs) if fs else np.empty(0)
    s = np.concatenate(ss) if ss else np.empty(0)
    if f.size == 0:
        return SpectrumEstimate(np.empty(0), np.empty(0), 0)
    uf, inv = np.unique(f, return_inverse=True)
    acc = np.bincount(inv, weights=s) / np.bincount(inv)
    return SpectrumEstimate(uf, acc, len(curves))


def write_curve_csv(curve: DecayCurve, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delay_us", "p0", "stderr"])
        for row in zip(curve.delays, curve.p0, curve.stderr):
            w.writerow([f"{x:.12g}" for x in row])
    return path


def write_spectrum_csv(spec: SpectrumEstimate, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f_hz", "s_psd"])
        for row in zip(spec.freqs, spec.psd):
            w.writerow([f"{x:.12g}" for x in row])
    return path
