"""Windowed tomography of time-correlated gate errors.

A noisy gate is simulated for ``T_tot / t_g`` consecutive applications over
one noise realization. Every ``N_w`` consecutive propagators are mixed into a
channel (the exact counterpart of averaging single-shot outcomes over that
window), divided by the ideal gate, and mapped to its error generator. The
resulting series of generators is the raw material for spectra, the static
split ``L = L_M + L_s R``, fidelity benchmarks and the compressed gate model.
"""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .channels import (
    ErrorGenerator,
    average_gate_fidelity,
    generator_basis,
    pauli_labels,
    pauli_matrix,
    ptm_from_unitary,
)
from .dynamics import GateParams, evolve_batch, ideal_gate, native_gate_schedule, noise_prefix
from .noise import OneOverFSpec, QubitNoiseParams, derive_sensitivities, synthesize_trajectory
from .numerics import (
    BranchCutError,
    RealSeries,
    SpectrumEstimate,
    average_spectra,
    matrix_exp,
    matrix_log_principal_batch,
    periodogram_psd,
    seeded_rng,
)

__all__ = [
    "QptRunConfig",
    "GeneratorSeries",
    "StaticNoiseSplit",
    "FidelityBenchmarks",
    "CompressedGateModel",
    "PUBLISHED_MODEL",
    "GATE_COEFFS",
    "run_windowed_qpt",
    "generator_psd",
    "extract_static_split",
    "high_frequency_magnitudes",
    "fidelity_benchmarks",
    "fit_compressed_model",
    "sample_compressed_generator",
    "compressed_hamiltonian",
    "mean_channel_fidelity",
    "compressed_fidelity",
    "error_unitary",
    "gate_application_timing",
    "write_series_jsonl",
    "read_series_jsonl",
]

_ONE_Q = ("I", "X90", "Y90")
_CHUNK_STEPS = 400_000


@dataclass(frozen=True)
class QptRunConfig:
    """One windowed-tomography run.

    ``qubits`` holds one parameter set for single-qubit gates and two for CZ.
    The Rabi sensitivity is referenced to the gate's own drive, f_R = 1/(4 t_g).
    """

    gate: str = "X90"
    window: int = 256
    t_tot: float = 1600.0
    gate_params: GateParams = GateParams()
    n_realizations: int = 20
    spec: OneOverFSpec = OneOverFSpec(0.25, 100.0, 1e7)
    qubits: tuple = (QubitNoiseParams(3.0, 30.0, 0.008),)
    dt: float = 5e-4
    seed: int = 0
    shots: int | None = None
    flip_flop_dw: float | None = None

    def __post_init__(self):
        g = self.gate.upper()
        object.__setattr__(self, "gate", g)
        if g not in _ONE_Q + ("CZ",):
            raise ValueError(f"unknown gate {self.gate!r}")
        need = 2 if g == "CZ" else 1
        if len(self.qubits) != need:
            raise ValueError(f"gate {g} needs {need} qubit parameter set(s)")
        if self.window < 1:
            raise ValueError("window must be at least one gate")
        if self.n_realizations < 1:
            raise ValueError("need at least one realization")
        if self.t_tot < self.window * self.t_g * (1 - 1e-9):
            raise ValueError("t_tot must cover at least one window")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be positive")

    @property
    def t_g(self) -> float:
        return self.gate_params.t_g_2q if self.gate == "CZ" else self.gate_params.t_g_1q

    @property
    def n_qubits(self) -> int:
        return 2 if self.gate == "CZ" else 1

    @property
    def n_gates(self) -> int:
        return int(round(self.t_tot / self.t_g))

    @property
    def n_windows(self) -> int:
        return self.n_gates // self.window

    @property
    def eps(self) -> float:
        return self.t_g / self.qubits[0].t2_star

    def sensitivities(self):
        out = []
        for q in self.qubits:
            if self.gate != "CZ":
                q = dataclasses.replace(q, omega0=1.0 / (4 * self.t_g))
            else:
                q = dataclasses.replace(q, j0=self.gate_params.j0)
            out.append(derive_sensitivities(q, self.spec))
        return out


@dataclass(frozen=True)
class GeneratorSeries:
    """Error generators ``(R, W, d^2, d^2)`` sampled every ``dt`` us."""

    dt: float
    generators: np.ndarray
    n_qubits: int
    gate: str = ""
    mean_channels: np.ndarray | None = None  # (R, d^2, d^2) realization-mean error channels

    def __post_init__(self):
        g = np.asarray(self.generators, dtype=float)
        if g.ndim != 4 or g.shape[-1] != 4**self.n_qubits or g.shape[-2] != g.shape[-1]:
            raise ValueError("generators must have shape (R, W, d^2, d^2)")
        if not self.dt > 0:
            raise ValueError("sample interval must be positive")
        object.__setattr__(self, "generators", g)

    @property
    def n_realizations(self) -> int:
        return self.generators.shape[0]

    @property
    def n_windows(self) -> int:
        return self.generators.shape[1]

    def realization(self, r: int) -> list:
        return [ErrorGenerator(self.n_qubits, m) for m in self.generators[r]]


def _shot_sample(ptm: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Binomial estimate of a PTM from (I +/- P_nu)/d preparations and P_mu readout."""
    d2 = ptm.shape[0]
    out = np.zeros_like(ptm)
    out[0, 0] = 1.0
    plus = np.clip(ptm[:, :1] + ptm, -1, 1)[1:, 1:]
    minus = np.clip(ptm[:, :1] - ptm, -1, 1)[1:, 1:]
    ep = 2 * rng.binomial(shots, (1 + plus) / 2) / shots - 1
    em = 2 * rng.binomial(shots, (1 + minus) / 2) / shots - 1
    out[1:, 1:] = (ep - em) / 2
    out[1:, 0] = ((ep + em) / 2).mean(axis=1) if d2 > 1 else 0.0
    return out


def run_windowed_qpt(cfg: QptRunConfig, progress: Callable[[int], None] | None = None) -> GeneratorSeries:
    """Simulate the gate stream and return windowed error generators.

    Raises
    ------
    BranchCutError
        If a window's error channel has an eigenvalue on the negative real
        axis; the message names the realization and windows.
    """
    nq = cfg.n_qubits
    sens = cfg.sensitivities()
    sched = native_gate_schedule(
        cfg.gate, cfg.gate_params, n_qubits=nq, dt=cfg.dt, sens=sens, flip_flop_dw=cfg.flip_flop_dw
    )
    steps = sched.total_steps
    n_gates, nw = cfg.n_gates, cfg.n_windows
    used = nw * cfg.window
    d = 2**nq
    V = _vec_basis_cached(nq)
    ideal = ptm_from_unitary(ideal_gate(cfg.gate, nq)).matrix
    gens = np.empty((cfg.n_realizations, nw, d * d, d * d))
    means = np.empty((cfg.n_realizations, d * d, d * d))
    charge = any(s.delta_n > 0 or s.d_omega_n > 0 or s.d_j_n > 0 for s in sens)
    gates_per_chunk = max(cfg.window, (_CHUNK_STEPS // steps) // cfg.window * cfg.window)
    for r in range(cfg.n_realizations):
        noise = None
        if charge:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                noise = np.stack(
                    [
                        synthesize_trajectory(cfg.spec, cfg.dt, n_gates * steps, seeded_rng(cfg.seed, 4 * r + q)).values
                        for q in range(nq)
                    ]
                )[None]
        b = np.array(
            [[s.sigma_b * seeded_rng(cfg.seed, 4 * r + 2 + q).standard_normal() for q, s in enumerate(sens)]]
        )
        pre = None if noise is None else noise_prefix(noise)
        sup = np.empty((nw, d * d, d * d), dtype=complex)
        for g0 in range(0, used, gates_per_chunk):
            g1 = min(used, g0 + gates_per_chunk)
            U = evolve_batch(sched, noise, b, np.arange(g0, g1) * steps, prefix=pre)[0]
            s = np.einsum("gij,gkl->gikjl", U, U.conj()).reshape(-1, cfg.window, d * d, d * d)
            sup[g0 // cfg.window : g1 // cfg.window] = s.mean(axis=1)
        ptms = np.real(np.einsum("ai,wij,jb->wab", V.conj().T, sup, V, optimize=True)) / d
        if cfg.shots is not None:
            rng = seeded_rng(cfg.seed, 4 * r + 1_000_003)
            ptms = np.array([_shot_sample(p, cfg.shots, rng) for p in ptms])
        err = ptms @ ideal.T
        means[r] = err.mean(axis=0)
        try:
            gens[r] = matrix_log_principal_batch(err, real=True)
        except BranchCutError as exc:
            raise BranchCutError(f"realization {r}: {exc} (window indices)") from exc
        if progress is not None:
            progress(r)
    return GeneratorSeries(cfg.window * cfg.t_g, gens, nq, cfg.gate, means)


def _vec_basis_cached(n):
    from .channels import _vec_basis

    return _vec_basis(n)


def _selector_values(series: GeneratorSeries, selector) -> np.ndarray:
    """(R, W) values picked by a selector.

    ``selector`` is either an index pair ``(mu, nu)`` / label pair
    ``("X", "Y")`` into the generator matrix, or a decomposition label
    ``("H", "Z")`` / ``("S", "ZZ")``.
    """
    g = series.generators
    d2 = g.shape[-1]
    labels = pauli_labels(series.n_qubits)
    if isinstance(selector, tuple) and selector and selector[0] in ("H", "S", "C", "A"):
        gb = generator_basis(series.n_qubits)
        try:
            dual = gb.dual(*selector)
        except ValueError:
            raise IndexError(f"unknown generator label {selector!r}") from None
        return np.tensordot(g, dual, axes=([2, 3], [0, 1]))
    mu, nu = selector
    if isinstance(mu, str):
        if mu not in labels or nu not in labels:
            raise IndexError(f"unknown Pauli label in {selector!r}")
        mu, nu = labels.index(mu), labels.index(nu)
    if not (0 <= mu < d2 and 0 <= nu < d2):
        raise IndexError(f"matrix entry {selector!r} out of range")
    return g[:, :, mu, nu]


def generator_psd(series: GeneratorSeries, selector) -> SpectrumEstimate:
    """Realization-averaged one-sided PSD of one generator element (mean removed)."""
    vals = _selector_values(series, selector)
    if vals.shape[1] < 2:
        raise ValueError("need at least two windows per realization")
    specs = [periodogram_psd(RealSeries(series.dt, row)) for row in vals]
    return average_spectra(specs)


@dataclass(frozen=True)
class StaticNoiseSplit:
    """``L_eff = l_m + l_s R`` with per-coefficient summaries.

    ``coeff_mean`` and ``coeff_rms`` hold the mean and RMS deviation of every
    Hamiltonian and stochastic rate across realizations and windows.
    """

    n_qubits: int
    l_m: np.ndarray
    l_s_magnitude: np.ndarray
    signs: np.ndarray
    sign_reference: int = 0
    coeff_mean: dict = field(default_factory=dict)
    coeff_rms: dict = field(default_factory=dict)
    mean_channel_fidelity: float = math.nan

    def __post_init__(self):
        if np.any(self.l_s_magnitude < 0):
            raise ValueError("fluctuation magnitudes must be non-negative")
        if not np.all(np.isin(self.signs, (-1, 1))):
            raise ValueError("signs must be +1 or -1")

    @property
    def l_s(self) -> np.ndarray:
        return self.signs * self.l_s_magnitude

    def generator_m(self) -> ErrorGenerator:
        return ErrorGenerator(self.n_qubits, self.l_m)

    def generator_s(self) -> ErrorGenerator:
        return ErrorGenerator(self.n_qubits, self.l_s)


def _signs(dev_ref: np.ndarray) -> np.ndarray:
    s = np.sign(dev_ref)
    s[s == 0] = 1
    return s.astype(int)


def extract_static_split(series: GeneratorSeries, sign_reference: int = 0) -> StaticNoiseSplit:
    """Entrywise mean and RMS deviation over realizations and windows."""
    g = series.generators
    if series.n_realizations < 10:
        warnings.warn("fewer than 10 realizations: fluctuation estimates are rough", stacklevel=2)
    l_m = g.mean(axis=(0, 1))
    dev = g - l_m
    mag = np.sqrt(np.mean(dev**2, axis=(0, 1)))
    signs = _signs(dev[sign_reference].mean(axis=0))
    gb = generator_basis(series.n_qubits)
    keep = [i for i, lab in enumerate(gb.labels) if lab[0] in ("H", "S")]
    coefs = np.tensordot(g, gb.duals[keep], axes=([2, 3], [1, 2]))  # (R, W, K)
    cm = coefs.mean(axis=(0, 1))
    cr = np.sqrt(np.mean((coefs - cm) ** 2, axis=(0, 1)))
    cmean = {gb.labels[i]: float(v) for i, v in zip(keep, cm)}
    crms = {gb.labels[i]: float(v) for i, v in zip(keep, cr)}
    fid = math.nan
    if series.mean_channels is not None:
        fid = average_gate_fidelity(series.mean_channels.mean(axis=0))
    return StaticNoiseSplit(series.n_qubits, l_m, mag, signs, sign_reference, cmean, crms, fid)


def high_frequency_magnitudes(series: GeneratorSeries, sign_reference: int = 0) -> np.ndarray:
    """Signed RMS of window-to-window fluctuations after removing each realization's mean."""
    g = series.generators
    dev = g - g.mean(axis=1, keepdims=True)
    mag = np.sqrt(np.mean(dev**2, axis=(0, 1)))
    ref = dev[sign_reference]
    s = _signs(ref[-1] - ref[0]) if ref.shape[0] > 1 else np.ones_like(mag, dtype=int)
    return s * mag


@dataclass(frozen=True)
class FidelityBenchmarks:
    f_m: float
    f_s: float
    f_f: float
    f_ms: float
    f_msf: float
    se_s: float = 0.0
    se_f: float = 0.0
    se_ms: float = 0.0
    se_msf: float = 0.0
    n_mc: int = 0

    def __post_init__(self):
        for name in ("f_m", "f_s", "f_f", "f_ms", "f_msf"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1 + 1e-12:
                raise ValueError(f"{name} = {v} outside [0, 1]")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _agf_of_generators(ls: np.ndarray) -> np.ndarray:
    """Average gate fidelities of exp(L) for a stack of generators."""
    e = matrix_exp(ls).real
    d = int(round(math.sqrt(ls.shape[-1])))
    return (np.trace(e, axis1=-2, axis2=-1) + d) / (d * d + d)


def fidelity_benchmarks(
    split: StaticNoiseSplit,
    high_freq: np.ndarray | None = None,
    n_mc: int = 1000,
    rng: np.random.Generator | None = None,
) -> FidelityBenchmarks:
    """``F_M`` exactly; ``F_s, F_f, F_Ms, F_Msf`` as Monte Carlo means over Gaussian draws."""
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    rng = rng if rng is not None else seeded_rng(0, 0)
    lm, ls = split.l_m, split.l_s
    lf = np.zeros_like(lm) if high_freq is None else np.asarray(high_freq, dtype=float)
    r = rng.standard_normal(n_mc)[:, None, None]
    rf = rng.standard_normal(n_mc)[:, None, None]
    f_m = float(_agf_of_generators(lm[None])[0])

    def mc(stack):
        v = _agf_of_generators(stack)
        return float(np.clip(v.mean(), 0, 1)), float(v.std(ddof=1) / math.sqrt(n_mc))

    f_s, se_s = mc(ls * r) if np.any(ls) else (1.0, 0.0)
    f_f, se_f = mc(lf * rf) if np.any(lf) else (1.0, 0.0)
    f_ms, se_ms = mc(lm + ls * r)
    f_msf, se_msf = mc(lm + ls * r + lf * rf)
    return FidelityBenchmarks(min(f_m, 1.0), f_s, f_f, f_ms, f_msf, se_s, se_f, se_ms, se_msf, n_mc)


# Compressed gate model ----------------------------------------------------

GATE_COEFFS = {
    "I": ("X", "Y", "Z"),
    "X90": ("X", "Y", "Z"),
    "Y90": ("X", "Y", "Z"),
    "CZ": ("XX", "ZZ", "ZI", "IZ"),
}

# polynomial coefficients in eps, lowest order first
PUBLISHED_MODEL = {
    "I": {
        "X": ([0.0], [0.0]),
        "Y": ([0.0], [0.0]),
        "Z": ([0.0], [0.0, 1.4]),
    },
    "X90": {
        "X": ([0.018, -0.031, -0.18], [0.018, -0.088, 0.43]),
        "Y": ([0.0], [0.0034, 0.86]),
        "Z": ([0.0], [0.0034, 0.86]),
    },
    "Y90": {
        "X": ([0.0], [0.0034, 0.86]),
        "Y": ([0.018, -0.031, -0.18], [0.018, -0.088, 0.43]),
        "Z": ([0.0], [0.0034, 0.86]),
    },
    "CZ": {
        "XX": ([0.016], [0.0007, 0.15]),
        "ZZ": ([-0.006], [0.036]),
        "ZI": ([0.0], [0.0009, 1.4]),
        "IZ": ([0.0], [0.0009, 1.4]),
    },
}


def _pad3(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    out = np.zeros(3)
    out[: c.size] = c
    return out


@dataclass(frozen=True)
class CompressedGateModel:
    """Per-gate Hamiltonian error rates ``h = mean(eps) + fluct(eps) R``.

    ``coeffs[gate][P] = (mean_poly, fluct_poly)``, each three coefficients in
    ascending powers of ``eps``. ``correlation`` is ``"per_qubit"`` (one field
    per qubit shared by all gates) or ``"per_gate"``.
    """

    coeffs: dict
    correlation: str = "per_qubit"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.correlation not in ("per_qubit", "per_gate"):
            raise ValueError("correlation must be per_qubit or per_gate")
        clean = {}
        for g, table in self.coeffs.items():
            clean[g] = {p: (_pad3(m), _pad3(f)) for p, (m, f) in table.items()}
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def published(cls, correlation: str = "per_qubit") -> "CompressedGateModel":
        return cls(PUBLISHED_MODEL, correlation)

    @classmethod
    def zero(cls) -> "CompressedGateModel":
        return cls({g: {p: ([0.0], [0.0]) for p in ps} for g, ps in GATE_COEFFS.items()})

    def mean(self, gate: str, p: str, eps: float) -> float:
        return float(np.polyval(self.coeffs[gate][p][0][::-1], eps))

    def fluct(self, gate: str, p: str, eps: float) -> float:
        return max(0.0, float(np.polyval(self.coeffs[gate][p][1][::-1], eps)))

    def to_json(self, path=None) -> str:
        rec = {
            g: {p: {"mean_poly": list(map(float, m)), "fluct_poly": list(map(float, f))} for p, (m, f) in t.items()}
            for g, t in self.coeffs.items()
        }
        text = json.dumps(rec, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text: str, correlation: str = "per_qubit") -> "CompressedGateModel":
        rec = json.loads(text)
        return cls({g: {p: (v["mean_poly"], v["fluct_poly"]) for p, v in t.items()} for g, t in rec.items()}, correlation)


def _gate_field(R, gate: str, qubit: int, correlation: str) -> float:
    if correlation == "per_gate":
        return float(np.asarray(R[gate])[qubit])
    return float(np.asarray(R)[qubit])


def compressed_hamiltonian(
    model: CompressedGateModel, gate: str, R, eps: float, qubit: int = 0, n_qubits: int | None = None
) -> dict:
    """Pauli-label -> rate map of one gate's sampled error generator.

    ``R`` is an array of per-qubit unit Gaussians (or, for ``per_gate``
    correlation, a map gate -> array).
    """
    gate = gate.upper()
    if gate not in model.coeffs:
        raise KeyError(f"model has no gate {gate!r}")
    if gate == "CZ":
        r1 = _gate_field(R, gate, 0, model.correlation)
        r2 = _gate_field(R, gate, 1, model.correlation)
        sym = (r1 + r2) / math.sqrt(2)
        out = {}
        for p in model.coeffs[gate]:
            rr = sym if p in ("XX", "YY", "ZZ", "XY", "YX", "XZ", "ZX", "YZ", "ZY") else (r1 if p[1] == "I" else r2)
            out[p] = model.mean(gate, p, eps) + model.fluct(gate, p, eps) * rr
        if "XX" in out:
            out["YY"] = out["XX"]
        return out
    n = n_qubits or 1
    r = _gate_field(R, gate, qubit, model.correlation)
    out = {}
    for p in model.coeffs[gate]:
        lab = p if n == 1 else (p + "I" if qubit == 0 else "I" + p)
        out[lab] = model.mean(gate, p, eps) + model.fluct(gate, p, eps) * r
    return out


def sample_compressed_generator(
    model: CompressedGateModel, gate: str, R, eps: float, qubit: int = 0, n_qubits: int | None = None
) -> ErrorGenerator:
    """Hamiltonian-only error generator of one gate for given field draws."""
    coeffs = compressed_hamiltonian(model, gate, R, eps, qubit, n_qubits)
    n = 2 if gate.upper() == "CZ" else (n_qubits or 1)
    gb = generator_basis(n)
    m = np.zeros(gb.elements.shape[1:])
    for p, h in coeffs.items():
        m += h * gb.element("H", p)
    return ErrorGenerator(n, m)


def error_unitary(coeffs: dict) -> np.ndarray:
    """``exp(-i sum_P h_P P)``, the unitary whose conjugation is ``exp(sum h_P H_P)``."""
    labs = list(coeffs)
    n = len(labs[0])
    h = sum(c * pauli_matrix(p) for p, c in coeffs.items()) if labs else np.zeros((2**n, 2**n))
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w)) @ v.conj().T


def _published_degree(gate, p, which):
    try:
        return len(PUBLISHED_MODEL[gate][p][which]) - 1
    except KeyError:
        return 1


def _weighted_polyfit(eps, y, deg):
    eps = np.asarray(eps, float)
    y = np.asarray(y, float)
    scale = np.maximum(np.abs(y), 0.1 * max(np.max(np.abs(y)), 1e-300))
    A = np.vander(eps, deg + 1, increasing=True)
    w = 1.0 / scale
    coef, *_ = np.linalg.lstsq(A * w[:, None], y * w, rcond=None)
    return _pad3(coef)


def fit_compressed_model(
    splits: Mapping[str, Sequence[StaticNoiseSplit]],
    eps: Mapping[str, Sequence[float]] | Sequence[float],
    stochastic_threshold: float = 0.1,
    correlation: str = "per_qubit",
) -> CompressedGateModel:
    """Polynomial fits in eps of the mean and fluctuating Hamiltonian rates.

    Degrees follow the published model form of each coefficient (at most 2).
    Residuals are weighted by ``1/max(|y|, 0.1 max|y|)`` so small-eps points
    count in relative terms. Stochastic rates are not fitted; their size
    relative to the coherent ones is reported in ``diagnostics`` and a warning
    is raised above ``stochastic_threshold``.
    """
    coeffs, diag = {}, {}
    for gate, seq in splits.items():
        gate = gate.upper()
        xs = np.asarray(eps[gate] if isinstance(eps, Mapping) else eps, dtype=float)
        if xs.size < 3:
            raise ValueError("need at least three eps points")
        if len(seq) != xs.size:
            raise ValueError("one split per eps value is required")
        n = seq[0].n_qubits
        table = {}
        ratios = []
        for p in GATE_COEFFS[gate]:
            lab = p if n == len(p) else p + "I"
            if gate == "CZ" and p == "XX":
                mean_y = [0.5 * (s.coeff_mean[("H", "XX")] + s.coeff_mean[("H", "YY")]) for s in seq]
                rms_y = [
                    math.sqrt(0.5 * (s.coeff_rms[("H", "XX")] ** 2 + s.coeff_rms[("H", "YY")] ** 2)) for s in seq
                ]
            else:
                mean_y = [s.coeff_mean[("H", lab)] for s in seq]
                rms_y = [s.coeff_rms[("H", lab)] for s in seq]
            table[p] = (
                _weighted_polyfit(xs, mean_y, _published_degree(gate, p, 0)),
                _weighted_polyfit(xs, rms_y, _published_degree(gate, p, 1)),
            )
        for s in seq:
            hnorm = math.sqrt(sum(v**2 + s.coeff_rms[k] ** 2 for k, v in s.coeff_mean.items() if k[0] == "H"))
            snorm = math.sqrt(sum(v**2 + s.coeff_rms[k] ** 2 for k, v in s.coeff_mean.items() if k[0] == "S"))
            ratios.append(snorm / hnorm if hnorm > 0 else 0.0)
        diag[gate] = {"stochastic_to_coherent": ratios, "eps": xs.tolist()}
        if max(ratios) > stochastic_threshold:
            warnings.warn(
                f"{gate}: stochastic rates reach {max(ratios):.2f} of the coherent ones", stacklevel=2
            )
        coeffs[gate] = table
    return CompressedGateModel(coeffs, correlation, diag)


def mean_channel_fidelity(series: GeneratorSeries) -> float:
    """Average gate fidelity of the error channel averaged over all windows and realizations."""
    if series.mean_channels is None:
        e = matrix_exp(series.generators.reshape((-1,) + series.generators.shape[-2:])).real.mean(axis=0)
        return average_gate_fidelity(e)
    return average_gate_fidelity(series.mean_channels.mean(axis=0))


def compressed_fidelity(
    model: CompressedGateModel, gate: str, eps: float, n_draws: int = 2000, rng: np.random.Generator | None = None
) -> tuple:
    """Mean and standard error of the average gate fidelity over field draws."""
    rng = rng if rng is not None else seeded_rng(0, 7)
    gate = gate.upper()
    n = 2 if gate == "CZ" else 1
    d = 2**n
    vals = np.empty(n_draws)
    for k in range(n_draws):
        R = rng.standard_normal(2)
        if model.correlation == "per_gate":
            R = {gate: R}
        u = error_unitary(compressed_hamiltonian(model, gate, R, eps, 0, n))
        vals[k] = (abs(np.trace(u)) ** 2 + d) / (d * d + d)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_draws))


def gate_application_timing(cfg: QptRunConfig, model: CompressedGateModel, n_realizations: int = 4) -> dict:
    """Wall time per gate application: time-resolved simulation versus compressed model.

    Both sides evolve ``n_realizations`` independent streams of ``cfg.n_gates``
    consecutive gates, batched over realizations. The full side includes noise
    synthesis and the stepwise propagation; the compressed side draws the
    fields, builds one noisy unitary per stream and applies it gate by gate.
    """
    import time

    nq = cfg.n_qubits
    d = 2**nq
    sens = cfg.sensitivities()
    sched = native_gate_schedule(
        cfg.gate, cfg.gate_params, n_qubits=nq, dt=cfg.dt, sens=sens, flip_flop_dw=cfg.flip_flop_dw
    )
    steps = sched.total_steps
    n_gates = cfg.n_gates
    t0 = time.perf_counter()
    for r in range(n_realizations):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            noise = np.stack(
                [
                    synthesize_trajectory(cfg.spec, cfg.dt, n_gates * steps, seeded_rng(cfg.seed, 4 * r + q)).values
                    for q in range(nq)
                ]
            )[None]
        b = np.array([[s.sigma_b * seeded_rng(cfg.seed, 4 * r + 2 + q).standard_normal() for q, s in enumerate(sens)]])
        pre = noise_prefix(noise)
        per = max(1, _CHUNK_STEPS // steps)
        for g0 in range(0, n_gates, per):
            evolve_batch(sched, noise, b, np.arange(g0, min(n_gates, g0 + per)) * steps, prefix=pre)
    t_full = (time.perf_counter() - t0) / (n_realizations * n_gates)

    t0 = time.perf_counter()
    rng = seeded_rng(cfg.seed, 17)
    u0 = ideal_gate(cfg.gate, nq)
    us = []
    for _ in range(n_realizations):
        R = rng.standard_normal(2)
        if model.correlation == "per_gate":
            R = {cfg.gate: R}
        us.append(error_unitary(compressed_hamiltonian(model, cfg.gate, R, cfg.eps, 0, nq)) @ u0)
    us = np.array(us)
    psi = np.zeros((n_realizations, d, 1), dtype=complex)
    psi[:, 0] = 1.0
    for _ in range(n_gates):
        psi = us @ psi
    t_comp = (time.perf_counter() - t0) / (n_realizations * n_gates)
    return {"full_s": t_full, "compressed_s": t_comp, "speedup": t_full / t_comp}


def write_series_jsonl(series: GeneratorSeries, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for r in range(series.n_realizations):
            for w in range(series.n_windows):
                rec = {
                    "realization": r,
                    "window": w,
                    "t_us": w * series.dt,
                    "matrix": [float(x) for x in series.generators[r, w].ravel()],
                }
                fh.write(json.dumps(rec) + "\n")
    return path


def read_series_jsonl(path, n_qubits: int, dt: float, gate: str = "") -> GeneratorSeries:
    recs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    R = 1 + max(r["realization"] for r in recs)
    W = 1 + max(r["window"] for r in recs)
    d2 = 4**n_qubits
    g = np.zeros((R, W, d2, d2))
    for r in recs:
        g[r["realization"], r["window"]] = np.reshape(r["matrix"], (d2, d2))
    return GeneratorSeries(dt, g, n_qubits, gate)
