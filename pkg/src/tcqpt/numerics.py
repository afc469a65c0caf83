"""Shared numerical kernels.

Spectral estimation, matrix exponential and principal logarithm, a small
Levenberg-Marquardt least-squares solver and the seeding contract used by every
Monte Carlo routine in the package.

Units: time series carry their step ``dt`` in microseconds; spectra are
reported in Hz with one-sided densities (``sum(psd) * df == variance``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg as sla

__all__ = [
    "RealSeries",
    "SpectrumEstimate",
    "FitResult",
    "BranchCutError",
    "periodogram_psd",
    "average_spectra",
    "loglog_slope",
    "matrix_exp",
    "matrix_log_principal",
    "matrix_log_principal_batch",
    "least_squares_fit",
    "seeded_rng",
]

US = 1e-6  # seconds per microsecond


class BranchCutError(ArithmeticError):
    """A matrix has an eigenvalue on (or too close to) the negative real axis.

    The principal logarithm is then ambiguous; callers should reduce the noise
    strength or the averaging window.
    """


@dataclass(frozen=True)
class RealSeries:
    dt: float
    values: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("series values must be a non-empty 1-d array")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)


@dataclass(frozen=True)
class SpectrumEstimate:
    freqs: np.ndarray
    psd: np.ndarray
    n_averages: int = 1

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        psd = np.asarray(self.psd, dtype=float)
        if freqs.shape != psd.shape or freqs.ndim != 1:
            raise ValueError("freqs and psd must be 1-d arrays of equal length")
        if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")
        if np.any(psd < 0):
            raise ValueError("psd must be non-negative")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "psd", psd)

    def __len__(self):
        return self.freqs.size


@dataclass
class FitResult:
    params: np.ndarray
    residual_norm: float
    covariance: np.ndarray
    converged: bool
    covariance_ok: bool = True
    n_iter: int = 0
    message: str = ""

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))


def _one_sided(x: np.ndarray, dt_s: float) -> np.ndarray:
    """One-sided periodogram of each row of ``x`` (mean removed), DC dropped."""
    n = x.shape[-1]
    x = x - x.mean(axis=-1, keepdims=True)
    spec = np.abs(np.fft.rfft(x, axis=-1)) ** 2 * (dt_s / n)
    spec = spec[..., 1:]
    if n % 2 == 0:
        spec[..., :-1] *= 2.0
    else:
        spec *= 2.0
    return spec


def periodogram_psd(series: RealSeries, segment_len: int | None = None) -> SpectrumEstimate:
    """Bartlett-averaged one-sided power spectral density.

    The series is cut into non-overlapping segments of ``segment_len`` samples
    (trailing samples are dropped), each segment has its own mean removed and
    a rectangular-window periodogram is taken. Frequencies are in Hz and the
    zero-frequency bin is omitted, so for a single full-length segment
    ``psd.sum() * df`` equals the population variance of the series.
    """
    n = len(series)
    if segment_len is None:
        segment_len = n
    if segment_len < 2:
        raise ValueError("segment_len must be at least 2")
    if segment_len > n:
        raise ValueError(f"segment_len={segment_len} exceeds series length {n}")
    n_seg = n // segment_len
    x = series.values[: n_seg * segment_len].reshape(n_seg, segment_len)
    dt_s = series.dt * US
    psd = _one_sided(x, dt_s).mean(axis=0)
    freqs = np.arange(1, psd.size + 1) / (segment_len * dt_s)
    return SpectrumEstimate(freqs, psd, n_averages=n_seg)


def average_spectra(spectra: Sequence[SpectrumEstimate]) -> SpectrumEstimate:
    """Average spectra that share a frequency grid."""
    if not spectra:
        raise ValueError("no spectra to average")
    freqs = spectra[0].freqs
    for s in spectra[1:]:
        if s.freqs.shape != freqs.shape or not np.allclose(s.freqs, freqs):
            raise ValueError("spectra must share one frequency grid")
    psd = np.mean([s.psd for s in spectra], axis=0)
    return SpectrumEstimate(freqs, psd, n_averages=sum(s.n_averages for s in spectra))


def loglog_slope(freqs, psd, fmin: float = 0.0, fmax: float = np.inf, n_bins: int | None = 30):
    """Slope of ``log10(psd)`` against ``log10(f)`` over ``[fmin, fmax]``.

    With ``n_bins`` set, points are first averaged into log-spaced bins so that
    the dense high-frequency end does not dominate the regression.
    """
    freqs = np.asarray(freqs, dtype=float)
    psd = np.asarray(psd, dtype=float)
    sel = (freqs >= fmin) & (freqs <= fmax) & (psd > 0)
    f, p = freqs[sel], psd[sel]
    if f.size < 2:
        raise ValueError("fewer than two positive points inside the fit band")
    lf, lp = np.log10(f), np.log10(p)
    if n_bins:
        edges = np.linspace(lf.min(), lf.max() + 1e-12, n_bins + 1)
        idx = np.digitize(lf, edges) - 1
        xs, ys = [], []
        for b in range(n_bins):
            m = idx == b
            if m.any():
                xs.append(np.log10(np.mean(f[m])))
                ys.append(np.log10(np.mean(p[m])))
        lf, lp = np.array(xs), np.array(ys)
        if lf.size < 2:
            raise ValueError("fewer than two occupied bins")
    slope, _ = np.polyfit(lf, lp, 1)
    return float(slope)


def _check_square(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def matrix_exp(m) -> np.ndarray:
    """Matrix exponential (scaling and squaring, Pade). Accepts stacks."""
    return sla.expm(_check_square(m))


_BRANCH_TOL = 1e-12
_COND_LIMIT = 1e8


def matrix_log_principal(m, branch_tol: float = _BRANCH_TOL) -> np.ndarray:
    """Principal matrix logarithm.

    Uses a complex eigendecomposition; when the eigenvector matrix is badly
    conditioned (condition number above 1e8) the inverse scaling-and-squaring
    algorithm takes over. Real input with a real logarithm is returned real.

    Raises
    ------
    BranchCutError
        If an eigenvalue lies within ``branch_tol`` of the closed negative real
        axis.
    numpy.linalg.LinAlgError
        If the matrix is singular.
    """
    m = _check_square(m)
    out = matrix_log_principal_batch(m[None], branch_tol=branch_tol)[0]
    return out


def matrix_log_principal_batch(ms, branch_tol: float = _BRANCH_TOL, real: bool | None = None):
    """Principal logarithm of a stack of matrices with shape ``(..., n, n)``."""
    ms = _check_square(ms)
    shape = ms.shape
    flat = ms.reshape(-1, shape[-1], shape[-1])
    if real is None:
        real = not np.iscomplexobj(flat)
    w, v = np.linalg.eig(flat)
    scale = np.maximum(np.abs(w).max(axis=-1, keepdims=True), 1.0)
    if np.any(np.abs(w) <= 1e-14 * scale):
        raise np.linalg.LinAlgError("matrix is singular; logarithm undefined")
    on_cut = (w.real < 0) & (np.abs(w.imag) <= branch_tol * scale)
    if np.any(on_cut):
        bad = np.unique(np.nonzero(on_cut)[0])
        raise BranchCutError(
            f"eigenvalue on the negative real axis for matrices {bad[:10].tolist()}; "
            "principal logarithm is ambiguous"
        )
    cond = np.linalg.cond(v)
    out = np.empty_like(flat, dtype=complex)
    good = cond < _COND_LIMIT
    if np.any(good):
        vg, wg = v[good], w[good]
        logw = np.log(wg)
        out[good] = (vg * logw[:, None, :]) @ np.linalg.inv(vg)
    for i in np.nonzero(~good)[0]:
        # near-defective input
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out[i] = sla.logm(flat[i])
    if real:
        out = out.real
    return out.reshape(shape)


def least_squares_fit(
    model: Callable[[np.ndarray, np.ndarray], np.ndarray],
    xs,
    ys,
    initial_params,
    *,
    weights=None,
    max_iter: int = 500,
    xtol: float = 1e-12,
    ftol: float = 1e-14,
) -> FitResult:
    """Levenberg-Marquardt fit of ``model(xs, params)`` to ``ys``.

    Jacobians are central differences with step ``1e-6 * max(|p|, 1)``.
    ``weights`` multiply the residuals. A rank-deficient Jacobian does not
    raise; it is reported through ``covariance_ok=False`` and an infinite
    covariance.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    p = np.array(initial_params, dtype=float)
    if xs.shape[0] != ys.shape[0]:
        raise ValueError("xs and ys must have the same length")
    if ys.size < p.size:
        raise ValueError("need at least as many data points as parameters")
    w = np.ones_like(ys) if weights is None else np.asarray(weights, dtype=float)

    def resid(q):
        return w * (np.asarray(model(xs, q), dtype=float) - ys)

    def jac(q):
        cols = []
        for k in range(q.size):
            h = 1e-6 * max(abs(q[k]), 1.0)
            qp, qm = q.copy(), q.copy()
            qp[k] += h
            qm[k] -= h
            cols.append((resid(qp) - resid(qm)) / (2 * h))
        return np.stack(cols, axis=1)

    r = resid(p)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = jac(p)
        g = J.T @ r
        A = J.T @ J
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        improved = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            p_new = p + step
            r_new = resid(p_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                improved = True
                break
            lam *= 10
        if not improved:
            converged = True  # no downhill step left: local minimum
            break
        dcost = cost - cost_new
        small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol)
        p, r, cost = p_new, r_new, cost_new
        lam = max(lam / 10, 1e-12)
        if small_step or dcost <= ftol * max(cost, 1e-300) or cost == 0.0:
            converged = True
            break

    J = jac(p)
    dof = max(ys.size - p.size, 1)
    s2 = cost / dof
    JTJ = J.T @ J
    cov_ok = np.linalg.matrix_rank(JTJ) == p.size
    if cov_ok:
        cov = np.linalg.pinv(JTJ) * s2
    else:
        cov = np.full((p.size, p.size), np.inf)
    return FitResult(
        params=p,
        residual_norm=float(np.sqrt(cost)),
        covariance=cov,
        converged=converged,
        covariance_ok=bool(cov_ok),
        n_iter=it,
        message="" if cov_ok else "degenerate Jacobian",
    )


def seeded_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Deterministic PCG64 stream for ``(seed, stream_id)``.

    Distinct stream ids are spawned from one SeedSequence and are
    statistically independent.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(stream_id) & (2**64 - 1),))
    return np.random.Generator(np.random.PCG64(ss))
