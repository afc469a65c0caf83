"""Batch pipelines behind the command line.

Each pipeline turns a resolved :class:`RunConfig` into data files inside an
output directory and returns a small summary dict. :func:`run_pipeline` adds
the config echo, ``manifest.json``, sweep fan-out and error reporting.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import platform
import time
import warnings
from pathlib import Path

import numpy as np
import scipy

from .channels import pauli_labels
from .config import ConfigError, RunConfig
from .experiments import (
    ExperimentParams,
    cpmg_spectroscopy,
    cpmg_sweep,
    echo_experiment,
    fit_gaussian_decay,
    fit_rabi_envelope,
    ramsey_experiment,
    rabi_experiment,
    write_curve_csv,
    write_spectrum_csv,
)
from .noise import InconsistentParametersError, synthesize_trajectory
from .numerics import BranchCutError, RealSeries, average_spectra, loglog_slope, periodogram_psd, seeded_rng
from .rb import irb_report, run_rb, write_rb_csv
from .tomography import (
    CompressedGateModel,
    QptRunConfig,
    compressed_fidelity,
    extract_static_split,
    fidelity_benchmarks,
    fit_compressed_model,
    gate_application_timing,
    generator_psd,
    high_frequency_magnitudes,
    run_windowed_qpt,
    write_series_jsonl,
)

__all__ = [
    "PipelineError",
    "run_pipeline",
    "noise_bench",
    "qpt",
    "benchmarks",
    "compress",
    "irb",
    "qpt_config",
    "noise_psd_ensemble",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_NUMERICAL",
]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
CPMG_PULSES = (1, 2, 4, 8, 16)
EPS_SWEEP_T2STAR = (0.5, 1.0, 1.5, 2.0, 3.0, 5.0)
COMPRESS_GATES = ("I", "X90", "Y90", "CZ")


class PipelineError(RuntimeError):
    """Numerical failure inside a pipeline."""


def _write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.12g}" if isinstance(x, float) else x for x in row])
    return path


def _dump(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))
    return path


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


# noise bench --------------------------------------------------------------


def noise_psd_ensemble(spec, n_traj: int, seed: int, dt: float = 0.05, duration: float = 20_000.0):
    """Realization-averaged periodogram of synthesized trajectories plus the mean sample variance."""
    n = int(round(duration / dt))
    specs, var = [], 0.0
    for r in range(n_traj):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            v = synthesize_trajectory(spec, dt, n, seeded_rng(seed, 3_000_000 + r)).values
        specs.append(periodogram_psd(RealSeries(dt, v)))
        var += float(np.mean(v**2)) / n_traj
    return average_spectra(specs), var


def noise_bench(cfg: RunConfig, out: Path) -> dict:
    sim = cfg.section("sim")
    n_real, seed = int(sim["n_realizations"]), cfg.seed
    q = cfg.qubits(1)[0]
    params = ExperimentParams(cfg.spec, q, float(sim["dt_us"]))
    summary = {}

    psd, var = noise_psd_ensemble(cfg.spec, max(n_real // 5, 20), seed)
    write_spectrum_csv(psd, out / "noise_psd.csv")
    summary["noise_psd_slope"] = loglog_slope(psd.freqs, psd.psd, 2 * cfg.spec.f_ell, cfg.spec.f_c / 2)
    summary["noise_variance_ratio"] = var / cfg.spec.total_variance if cfg.spec.a0 > 0 else None

    ramsey = ramsey_experiment(params, np.linspace(0, 3 * q.t2_star, 31), n_real, seed)
    write_curve_csv(ramsey, out / "ramsey.csv")
    fr = fit_gaussian_decay(ramsey.delays, ramsey.coherence)
    summary["ramsey_t2star_us"] = float(fr.params[1])

    f = q.omega0
    t_max = min(2.0 / q.gamma_r if q.gamma_r > 0 else 50.0, 200.0)
    k = np.unique(np.rint(np.linspace(0, t_max * f, 40)).astype(int))
    rabi = rabi_experiment(params, (2 * k + 1) / (2 * f), n_real, seed)
    write_curve_csv(rabi, out / "rabi.csv")
    fa = fit_rabi_envelope(rabi.delays, 1 - 2 * rabi.p0)
    summary["rabi_gamma_mhz"] = float(fa.params[1])

    t2 = q.t2 if math.isfinite(q.t2) else 40.0
    echo = echo_experiment(params, np.linspace(0, 4 * t2, 33), n_real, seed)
    write_curve_csv(echo, out / "echo.csv")
    fe = fit_gaussian_decay(echo.delays, echo.coherence)
    summary["echo_t2_us"] = float(fe.params[1])

    base = np.linspace(0.25, 1.0, 13) * 2.75 * t2
    curves = cpmg_sweep(params, {n: base * math.sqrt(n) for n in CPMG_PULSES}, n_real, seed)
    rows = []
    for n, c in curves.items():
        rows += [(n, float(t), float(p), float(s)) for t, p, s in zip(c.delays, c.p0, c.stderr)]
    _write_rows(out / "cpmg.csv", ["n_pi", "delay_us", "p0", "stderr"], rows)
    summary["cpmg_decay_us"] = {str(n): c.decay_time for n, c in curves.items()}
    summary["cpmg_alpha"] = {str(n): float(c.fit.params[2]) for n, c in curves.items()}
    spec = cpmg_spectroscopy(curves)
    write_spectrum_csv(spec, out / "cpmg_spectrum.csv")
    summary["cpmg_spectrum_slope"] = loglog_slope(spec.freqs, spec.psd, n_bins=None) if spec.freqs.size > 1 else None
    _dump(out / "fits.json", {k: _finite(v) if not isinstance(v, dict) else v for k, v in summary.items()})
    return summary


# tomography ---------------------------------------------------------------


def qpt_config(cfg: RunConfig, gate: str | None = None, n_realizations: int | None = None) -> QptRunConfig:
    g = cfg.section("gates")
    sim = cfg.section("sim")
    gate = (gate or g["gate"]).upper()
    nq = 2 if gate == "CZ" else 1
    ff = float(g["flip_flop_dw_mhz"])
    return QptRunConfig(
        gate=gate,
        window=int(sim["window"]),
        t_tot=float(sim["t_tot_us"]),
        gate_params=cfg.gate_params,
        n_realizations=int(n_realizations or sim["n_realizations"]),
        spec=cfg.spec,
        qubits=cfg.qubits(nq),
        dt=float(sim["dt_us"]),
        seed=cfg.seed,
        shots=int(sim["shots"]) or None,
        flip_flop_dw=2 * math.pi * ff if ff > 0 else None,
    )


def _psd_selectors(nq: int):
    labs = pauli_labels(nq)[1:]
    sel = []
    if nq == 1:
        sel += [((a, b), f"{a},{b}") for a in labs for b in labs]
    sel += [(("H", p), f"H:{p}") for p in labs]
    sel += [(("S", p), f"S:{p}") for p in labs]
    return sel


def _split_record(split) -> dict:
    return {
        "n_qubits": split.n_qubits,
        "basis": list(pauli_labels(split.n_qubits)),
        "l_m": split.l_m,
        "l_s": split.l_s,
        "sign_reference": split.sign_reference,
        "coeff_mean": {":".join(k): v for k, v in split.coeff_mean.items()},
        "coeff_rms": {":".join(k): v for k, v in split.coeff_rms.items()},
        "mean_channel_fidelity": _finite(split.mean_channel_fidelity),
    }


def _run_qpt(qc: QptRunConfig):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            series = run_windowed_qpt(qc)
    except BranchCutError as exc:
        raise PipelineError(f"{qc.gate}: {exc}") from exc
    return series


def qpt(cfg: RunConfig, out: Path) -> dict:
    qc = qpt_config(cfg)
    series = _run_qpt(qc)
    write_series_jsonl(series, out / "generators.jsonl")
    rows = []
    if series.n_windows >= 2:
        for sel, name in _psd_selectors(series.n_qubits):
            s = generator_psd(series, sel)
            rows += [(name, float(f), float(p)) for f, p in zip(s.freqs, s.psd)]
    _write_rows(out / "psd.csv", ["element", "f_hz", "s_psd"], rows)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        split = extract_static_split(series)
    _dump(out / "split.json", _split_record(split))
    return {
        "gate": qc.gate,
        "eps": qc.eps,
        "n_windows": series.n_windows,
        "sample_interval_us": series.dt,
        "mean_channel_infidelity": 1 - split.mean_channel_fidelity,
    }


def benchmarks(cfg: RunConfig, out: Path) -> dict:
    qc = qpt_config(cfg)
    series = _run_qpt(qc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        split = extract_static_split(series)
    hf = high_frequency_magnitudes(series)
    fb = fidelity_benchmarks(split, hf, int(cfg.section("sim")["n_mc"]), seeded_rng(cfg.seed, 5_000_000))
    d = fb.as_dict()
    _write_rows(out / "benchmarks.csv", list(d), [[float(v) if k != "n_mc" else v for k, v in d.items()]])
    _dump(out / "split.json", _split_record(split))
    return {
        "gate": qc.gate,
        "gamma_r_tg": qc.qubits[0].gamma_r * qc.t_g,
        "infid_m": 1 - fb.f_m,
        "infid_s": 1 - fb.f_s,
        "infid_f": 1 - fb.f_f,
        "infid_msf": 1 - fb.f_msf,
    }


def _t2star_grid(cfg: RunConfig):
    sw = cfg.section("sweep")
    if sw["parameter"] == "noise.t2star_us":
        return [float(v) for v in sw["values"]]
    return list(EPS_SWEEP_T2STAR)


def compress(cfg: RunConfig, out: Path) -> dict:
    """Refit the compressed model over a T2* sweep and check it against the full channels."""
    grid = _t2star_grid(cfg)
    if len(grid) < 3:
        raise ConfigError("sweep.values: the compress pipeline needs at least three T2* values")
    corr = cfg.section("rb")["correlation"]
    splits, eps, points, timing = {}, {}, [], {}
    for gate in COMPRESS_GATES:
        splits[gate], eps[gate] = [], []
        for t2s in grid:
            sub = cfg.with_value("noise.t2star_us", t2s)
            qc = qpt_config(sub, gate)
            series = _run_qpt(qc)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                split = extract_static_split(series)
            splits[gate].append(split)
            eps[gate].append(qc.eps)
            for (kind, p), v in split.coeff_mean.items():
                if kind == "H":
                    points.append((gate, t2s, qc.eps, p, v, split.coeff_rms[(kind, p)], split.mean_channel_fidelity))
        qc = qpt_config(cfg.with_value("noise.t2star_us", grid[len(grid) // 2]), gate)
        timing[gate] = qc
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_compressed_model(splits, eps, correlation=corr)
    model.to_json(out / "compressed_model.json")
    _write_rows(
        out / "compress_points.csv",
        ["gate", "t2star_us", "eps", "coeff", "mean", "rms", "mean_channel_fidelity"],
        points,
    )
    rows = []
    for gate in COMPRESS_GATES:
        for t2s, e, split in zip(grid, eps[gate], splits[gate]):
            f_c, _ = compressed_fidelity(model, gate, e, 2000, seeded_rng(cfg.seed, 6_000_000))
            full = 1 - split.mean_channel_fidelity
            rows.append((gate, t2s, e, full, 1 - f_c, abs((1 - f_c) - full) / full if full > 0 else math.nan))
    _write_rows(
        out / "compression_check.csv",
        ["gate", "t2star_us", "eps", "infid_full", "infid_compressed", "rel_err"],
        rows,
    )
    speed = {g: gate_application_timing(qc, model, qc.n_realizations) for g, qc in timing.items()}
    _dump(out / "timing.json", speed)
    return {
        "max_rel_err": max(r[-1] for r in rows),
        "min_speedup": min(v["speedup"] for v in speed.values()),
        "warnings": [str(w.message) for w in caught],
    }


# randomized benchmarking --------------------------------------------------


def _rb_model(cfg: RunConfig) -> CompressedGateModel:
    rb = cfg.section("rb")
    src = rb["model"]
    if src == "published":
        return CompressedGateModel.published(rb["correlation"])
    p = Path(src)
    if not p.is_file():
        raise ConfigError(f"rb.model: file {src!r} does not exist")
    try:
        return CompressedGateModel.from_json(p.read_text(), rb["correlation"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"rb.model: cannot read model ({exc})") from None


def rb_eps(cfg: RunConfig) -> dict:
    g = cfg.section("gates")
    t2s = cfg.per_qubit("t2star_us", 1)[0]
    e1 = float(g["t_g_1q_us"]) / t2s
    return {"I": e1, "X90": e1, "Y90": e1, "CZ": float(g["t_g_2q_us"]) / t2s}


def irb(cfg: RunConfig, out: Path) -> dict:
    rb = cfg.section("rb")
    model = _rb_model(cfg)
    eps = rb_eps(cfg)
    kw = dict(
        shots=int(rb["shots"]) or None,
        seed=cfg.seed,
        residual=rb["residual"],
    )
    ref = run_rb(model, eps, float(rb["h_ex"]), rb["lengths"], int(rb["n_seq"]), False, **kw)
    inter = run_rb(model, eps, float(rb["h_ex"]), rb["lengths"], int(rb["n_seq"]), True, **kw)
    write_rb_csv(ref, out / "rb_reference.csv")
    write_rb_csv(inter, out / "rb_interleaved.csv")
    try:
        rep = irb_report(ref, inter, model, eps, int(rb["n_draws"]), cfg.seed)
    except ValueError as exc:
        raise PipelineError(str(exc)) from exc
    rec = dataclasses.asdict(rep)
    rec["ref_fit_degenerate"] = ref.fit_degenerate
    rec["int_fit_degenerate"] = inter.fit_degenerate
    _dump(out / "irb_report.json", {k: _finite(v) for k, v in rec.items()})
    return {
        "rb_infidelity": rep.rb_infidelity,
        "exact_infidelity": 1 - rep.exact_fidelity,
        "ratio": _finite(rep.ratio),
    }


_PIPELINES = {
    "noise-bench": noise_bench,
    "qpt": qpt,
    "benchmarks": benchmarks,
    "compress": compress,
    "irb": irb,
}


# orchestration ------------------------------------------------------------


def _versions() -> dict:
    try:
        from importlib.metadata import version

        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__, "artifact": pkg}


def _files(root: Path) -> list:
    return sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file() and p.name != "manifest.json")


def _scalar_items(d: dict) -> dict:
    return {k: v for k, v in d.items() if isinstance(v, (int, float, str)) or v is None}


def _run_one(cfg: RunConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_resolved.json").write_text(cfg.to_json())
    return _PIPELINES[cfg.pipeline](cfg, out)


def _sweep_label(key: str, v) -> str:
    return f"{key.split('.')[1]}={v:g}" if isinstance(v, (int, float)) else f"{key.split('.')[1]}={v}"


def run_pipeline(cfg: RunConfig, out, *, threads: int | None = None) -> int:
    """Run ``cfg.pipeline`` into ``out``; returns the process exit code.

    On failure ``error.json`` holds ``{"status", "exit_code", "error", "message"}``.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sw = cfg.section("sweep")
    try:
        if sw["parameter"] and cfg.pipeline != "compress":
            key = sw["parameter"]
            (out / "config_resolved.json").write_text(cfg.to_json())
            rows, header = [], None
            for v in sw["values"]:
                sub = cfg.with_value(key, v)
                summ = _scalar_items(_run_one(sub, out / _sweep_label(key, v)))
                if header is None:
                    header = [key] + list(summ)
                rows.append([v] + [summ[k] for k in header[1:]])
            _write_rows(out / "sweep_summary.csv", header, rows)
            summary = {"sweep": key, "values": sw["values"]}
        else:
            summary = _run_one(cfg, out)
    except (ConfigError, InconsistentParametersError) as exc:
        return _fail(out, EXIT_CONFIG, exc)
    except Exception as exc:  # any module failure is reported, not raised
        return _fail(out, EXIT_NUMERICAL, exc)
    manifest = {
        "pipeline": cfg.pipeline,
        "seed": cfg.seed,
        "threads": threads,
        "parameters": cfg.data,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t0,
        "summary": summary,
        "files": _files(out),
    }
    _dump(out / "manifest.json", manifest)
    return EXIT_OK


def _fail(out: Path, code: int, exc: Exception) -> int:
    _dump(
        out / "error.json",
        {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)},
    )
    return code
