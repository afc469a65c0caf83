"""Rotating-frame spin-qubit Hamiltonian and its propagators.

For each qubit ``i`` the Hamiltonian (in units of hbar, rad/us) is

    H_i = (Delta_i/2) Z + (Omega_i/2) (cos(theta_i) X + sin(theta_i) Y)
    Delta_i = Delta0_i + delta_n_i v_i(t) + b_i
    Omega_i = 2 pi f_R,i (1 + d_omega_n_i v_i(t))

and a pair with exchange on adds ``J (ZZ - 1)/4`` with
``J = 2 pi J0 (1 + d_j_n (v_1 + v_2))``. Basis index 0 is spin-up; ``Z = diag(1, -1)``.
The flip-flop part of the exchange is dropped unless the schedule carries a
qubit frequency difference ``flip_flop_dw`` (rad/us).

Noise is zero-order held: step ``k`` of a segment uses sample ``start + k``
of each trajectory. Segments with no drive and no flip-flop term are diagonal
and are integrated exactly from prefix sums of the noise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .noise import NoiseSensitivities

__all__ = [
    "SegmentControl",
    "VirtualZ",
    "ControlSchedule",
    "GateParams",
    "TrajectoryUnderrun",
    "evolve",
    "evolve_batch",
    "noise_prefix",
    "native_gate_schedule",
    "ideal_gate",
    "ordered_product",
    "equal_up_to_phase",
    "PAULI_1Q",
]

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_1Q = {"I": I2, "X": SX, "Y": SY, "Z": SZ}
_ZSIGN = np.array([1.0, -1.0])


class TrajectoryUnderrun(IndexError):
    """Noise trajectory shorter than the schedule it should drive."""


@dataclass(frozen=True)
class SegmentControl:
    """Constant controls over one time segment.

    Per-qubit tuples: ``detuning`` (rad/us), ``drive_mhz`` (Rabi frequency
    f_R in MHz, 0 means drive off), ``phase`` (rad). ``j_mhz`` is the exchange
    frequency J0 in MHz (0 means exchange off).
    """

    duration: float
    detuning: tuple = (0.0,)
    drive_mhz: tuple = (0.0,)
    phase: tuple = (0.0,)
    j_mhz: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")
        n = len(self.detuning)
        if len(self.drive_mhz) != n or len(self.phase) != n:
            raise ValueError("per-qubit control tuples must have equal length")
        if any(f < 0 for f in self.drive_mhz) or self.j_mhz < 0:
            raise ValueError("drive and exchange amplitudes must be non-negative")

    @property
    def n_qubits(self) -> int:
        return len(self.detuning)

    @property
    def driven(self) -> bool:
        return any(f > 0 for f in self.drive_mhz)

    @staticmethod
    def idle(duration: float, n_qubits: int = 1) -> "SegmentControl":
        z = (0.0,) * n_qubits
        return SegmentControl(duration, z, z, z)

    @staticmethod
    def drive(duration: float, f_mhz: float, phase: float = 0.0, qubit: int = 0, n_qubits: int = 1):
        f = [0.0] * n_qubits
        th = [0.0] * n_qubits
        f[qubit] = f_mhz
        th[qubit] = phase
        return SegmentControl(duration, (0.0,) * n_qubits, tuple(f), tuple(th))


@dataclass(frozen=True)
class VirtualZ:
    """Exact zero-duration frame change ``exp(-i angle Z/2)`` on one qubit."""

    angle: float
    qubit: int = 0


Element = Union[SegmentControl, VirtualZ]


@dataclass(frozen=True)
class ControlSchedule:
    elements: tuple
    dt: float = 5e-4
    n_qubits: int = 1
    delta_n: tuple = (0.0,)
    d_omega_n: tuple = (0.0,)
    d_j_n: float = 0.0
    flip_flop_dw: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_qubits not in (1, 2):
            raise ValueError("only one or two qubits are supported")
        if len(self.delta_n) != self.n_qubits or len(self.d_omega_n) != self.n_qubits:
            raise ValueError("need one coupling per qubit")
        object.__setattr__(self, "elements", tuple(self.elements))
        hmax = 0.0
        for el in self.elements:
            if isinstance(el, VirtualZ):
                if not 0 <= el.qubit < self.n_qubits:
                    raise ValueError("virtual Z on a missing qubit")
                continue
            if el.n_qubits != self.n_qubits:
                raise ValueError("segment qubit count does not match schedule")
            if el.duration < self.dt * (1 - 1e-9):
                raise ValueError("dt must not exceed the shortest segment")
            h = sum(
                0.5 * math.hypot(d, 2 * math.pi * f)
                for d, f in zip(el.detuning, el.drive_mhz)
            ) + 0.5 * math.pi * el.j_mhz
            hmax = max(hmax, h)
        if hmax * self.dt > 0.05:
            warnings.warn(
                f"integration step resolves only {hmax * self.dt:.3g} rad per step",
                stacklevel=2,
            )

    @classmethod
    def from_sensitivities(cls, elements, sens: Sequence[NoiseSensitivities], dt=5e-4, **kw):
        sens = list(sens)
        return cls(
            tuple(elements),
            dt=dt,
            n_qubits=len(sens),
            delta_n=tuple(s.delta_n for s in sens),
            d_omega_n=tuple(s.d_omega_n for s in sens),
            d_j_n=float(np.mean([s.d_j_n for s in sens])) if len(sens) == 2 else 0.0,
            **kw,
        )

    def with_couplings(self, **kw) -> "ControlSchedule":
        vals = dict(
            elements=self.elements, dt=self.dt, n_qubits=self.n_qubits, delta_n=self.delta_n,
            d_omega_n=self.d_omega_n, d_j_n=self.d_j_n, flip_flop_dw=self.flip_flop_dw,
        )
        vals.update(kw)
        return ControlSchedule(**vals)

    def n_steps(self, el: SegmentControl) -> int:
        return max(1, int(round(el.duration / self.dt)))

    @property
    def total_steps(self) -> int:
        return sum(self.n_steps(e) for e in self.elements if isinstance(e, SegmentControl))

    @property
    def duration(self) -> float:
        return sum(e.duration for e in self.elements if isinstance(e, SegmentControl))

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


def ordered_product(stack: np.ndarray) -> np.ndarray:
    """Time-ordered product ``U[n-1] ... U[1] U[0]`` over axis -3."""
    m = np.asarray(stack)
    while m.shape[-3] > 1:
        if m.shape[-3] % 2:
            eye = np.broadcast_to(np.eye(m.shape[-1], dtype=m.dtype), m.shape[:-3] + (1,) + m.shape[-2:])
            m = np.concatenate([m, eye], axis=-3)
        m = m[..., 1::2, :, :] @ m[..., 0::2, :, :]
    return m[..., 0, :, :]


def _su2(hx, hy, hz, tau):
    """``exp(-i tau (hx X + hy Y + hz Z))`` for broadcast arrays."""
    hx, hy, hz = np.broadcast_arrays(hx, hy, hz)
    norm = np.sqrt(hx**2 + hy**2 + hz**2)
    ang = norm * tau
    c = np.cos(ang)
    sinc = tau * np.sinc(ang / np.pi)  # sin(ang)/norm, safe at norm = 0
    out = np.empty(hx.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c - 1j * sinc * hz
    out[..., 1, 1] = c + 1j * sinc * hz
    out[..., 0, 1] = sinc * (-1j * hx - hy)
    out[..., 1, 0] = sinc * (-1j * hx + hy)
    return out


def _vz(angle):
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def _embed(u1, qubit, n_qubits):
    if n_qubits == 1:
        return u1
    return np.kron(u1, I2) if qubit == 0 else np.kron(I2, u1)


def _kron2(a, b):
    """Batched kron of (..., 2, 2) stacks."""
    return np.einsum("...ij,...kl->...ikjl", a, b).reshape(a.shape[:-2] + (4, 4))


def _zzdiag():
    return np.array([1.0, -1.0, -1.0, 1.0])


def noise_prefix(noise: np.ndarray) -> np.ndarray:
    """Prefix sums along the last axis with a leading zero."""
    noise = np.asarray(noise, dtype=float)
    out = np.zeros(noise.shape[:-1] + (noise.shape[-1] + 1,))
    np.cumsum(noise, axis=-1, out=out[..., 1:])
    return out


def _check_noise(noise, sched, starts):
    if noise is None:
        return None
    need = int(np.max(starts)) + sched.total_steps
    if noise.shape[-1] < need:
        raise TrajectoryUnderrun(f"trajectory has {noise.shape[-1]} samples, schedule needs {need}")
    return noise


def evolve_batch(
    sched: ControlSchedule,
    noise: np.ndarray | None,
    b_shift=None,
    starts=(0,),
    prefix: np.ndarray | None = None,
) -> np.ndarray:
    """Propagators for many realizations and start offsets at once.

    Parameters
    ----------
    noise : array (R, n_qubits, N) of v samples in ueV, or None for no charge noise
    b_shift : array (R, n_qubits) of quasistatic detuning offsets (rad/us)
    starts : start sample indices (S,)
    prefix : optional precomputed ``noise_prefix(noise)``, reused across calls

    Returns
    -------
    array (R, S, d, d)
    """
    nq, d = sched.n_qubits, sched.dim
    starts = np.atleast_1d(np.asarray(starts, dtype=np.int64))
    if np.any(starts < 0):
        raise ValueError("start indices must be non-negative")
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.ndim == 2:
            noise = noise[None]
        if noise.shape[1] != nq:
            raise ValueError("noise must have one trajectory per qubit")
    if b_shift is None:
        R = 1 if noise is None else noise.shape[0]
        b_shift = np.zeros((R, nq))
    b_shift = np.asarray(b_shift, dtype=float).reshape(-1, nq)
    R = b_shift.shape[0] if noise is None else noise.shape[0]
    if b_shift.shape[0] != R:
        b_shift = np.broadcast_to(b_shift, (R, nq))
    _check_noise(noise, sched, starts)
    csum = None
    if noise is not None:
        csum = noise_prefix(noise) if prefix is None else prefix

    S = starts.size
    U = np.broadcast_to(np.eye(d, dtype=complex), (R, S, d, d)).copy()
    offset = 0
    for el in sched.elements:
        if isinstance(el, VirtualZ):
            U = _embed(_vz(el.angle), el.qubit, nq) @ U
            continue
        n = sched.n_steps(el)
        tau = el.duration / n
        idx0 = starts + offset  # (S,)
        if not el.driven and not (sched.flip_flop_dw is not None and el.j_mhz > 0):
            blk = _diag_block(sched, el, csum, b_shift, idx0, n, tau)
        else:
            blk = _driven_block(sched, el, noise, b_shift, idx0, n, tau, offset)
        U = blk @ U
        offset += n
    return U


def _diag_block(sched, el, csum, b, idx0, n, tau):
    nq = sched.n_qubits
    R, S = b.shape[0], idx0.size
    # integrated detuning phase per qubit, shape (R, S, nq)
    phi = np.empty((R, S, nq))
    vsum = None
    if csum is not None:
        vsum = csum[:, :, idx0 + n] - csum[:, :, idx0]  # (R, nq, S)
        vsum = np.swapaxes(vsum, 1, 2)
    for q in range(nq):
        phi[..., q] = (el.detuning[q] + b[:, q][:, None]) * el.duration
        if vsum is not None:
            phi[..., q] += sched.delta_n[q] * tau * vsum[..., q]
    if nq == 1:
        e = np.exp(-0.5j * phi[..., 0:1] * _ZSIGN)
    else:
        z1 = np.array([1.0, 1.0, -1.0, -1.0])
        z2 = np.array([1.0, -1.0, 1.0, -1.0])
        tot = 0.5 * (phi[..., 0:1] * z1 + phi[..., 1:2] * z2)
        if el.j_mhz > 0:
            jint = 2 * math.pi * el.j_mhz * el.duration * np.ones((R, S))
            if vsum is not None:
                jint = jint + 2 * math.pi * el.j_mhz * sched.d_j_n * tau * (vsum[..., 0] + vsum[..., 1])
            tot = tot + 0.25 * jint[..., None] * (_zzdiag() - 1.0)
        e = np.exp(-1j * tot)
    out = np.zeros(e.shape + (e.shape[-1],), dtype=complex)
    ii = np.arange(e.shape[-1])
    out[..., ii, ii] = e
    return out


def _window(noise, idx0, n):
    """Noise samples (R, nq, S, n) for each start."""
    return noise[:, :, idx0[:, None] + np.arange(n)[None, :]]


def _qubit_fields(sched, el, q, v, b):
    """(hx, hy, hz) of qubit q with v shaped (R, S, n) or None."""
    om = 2 * math.pi * el.drive_mhz[q]
    det = el.detuning[q] + b[:, q][:, None, None]
    if v is None:
        delta = det * np.ones((1, 1, 1))
        omega = om * np.ones((1, 1, 1))
    else:
        delta = det + sched.delta_n[q] * v
        omega = om * (1.0 + sched.d_omega_n[q] * v)
    th = el.phase[q]
    return 0.5 * omega * math.cos(th), 0.5 * omega * math.sin(th), 0.5 * delta


def _driven_block(sched, el, noise, b, idx0, n, tau, offset):
    nq = sched.n_qubits
    R, S = b.shape[0], idx0.size
    w = None if noise is None else _window(noise, idx0, n)
    coherent_pair = nq == 2 and el.j_mhz > 0
    if not coherent_pair:
        blocks = []
        for q in range(nq):
            v = None if w is None else w[:, q]
            hx, hy, hz = _qubit_fields(sched, el, q, v, b)
            steps = _su2(hx, hy, hz, tau)
            steps = np.broadcast_to(steps, (R, S, n, 2, 2))
            blocks.append(ordered_product(steps))
        return blocks[0] if nq == 1 else _kron2(blocks[0], blocks[1])
    # exchange on during a drive or with flip-flop: general 4x4 steps
    H = np.zeros((R, S, n, 4, 4), dtype=complex)
    for q in range(nq):
        v = None if w is None else w[:, q]
        hx, hy, hz = _qubit_fields(sched, el, q, v, b)
        for h, p in zip((hx, hy, hz), (SX, SY, SZ)):
            H += np.asarray(h)[..., None, None] * _embed(p, q, 2)
    jj = 2 * math.pi * el.j_mhz * np.ones((1, 1, 1))
    if w is not None:
        jj = jj * (1.0 + sched.d_j_n * (w[:, 0] + w[:, 1]))
    H += 0.25 * jj[..., None, None] * (np.diag(_zzdiag()) - np.eye(4))
    if sched.flip_flop_dw is not None:
        # (J/2)(e^{i dw t} s1+ s2- + h.c.), t from schedule start
        t = (offset + np.arange(n) + 0.5) * tau
        ph = np.exp(1j * sched.flip_flop_dw * t)
        ff = np.zeros((n, 4, 4), dtype=complex)
        ff[:, 1, 2] = ph  # |up,down><down,up|
        ff[:, 2, 1] = np.conj(ph)
        H += 0.5 * jj[..., None, None] * ff
    lam, vec = np.linalg.eigh(H)
    steps = (vec * np.exp(-1j * lam * tau)[..., None, :]) @ np.swapaxes(vec.conj(), -1, -2)
    return ordered_product(steps)


def evolve(
    sched: ControlSchedule,
    noise=None,
    b_shift=None,
    start_index: int = 0,
) -> np.ndarray:
    """Propagator of one schedule for one noise realization.

    ``noise`` is a sequence with one trajectory per qubit (``NoiseTrajectory``
    or plain arrays of ueV samples), or None.
    """
    arr = None
    if noise is not None:
        rows = [np.asarray(getattr(x, "values", x), dtype=float) for x in noise]
        n = min(r.size for r in rows)
        arr = np.stack([r[:n] for r in rows])[None]
    b = None if b_shift is None else np.asarray(b_shift, dtype=float).reshape(1, -1)
    return evolve_batch(sched, arr, b, [start_index])[0, 0]


@dataclass(frozen=True)
class GateParams:
    """Native gate timing. Times in us, frequencies in MHz."""

    t_g_1q: float = 0.1
    t_g_2q: float = 0.05
    j0: float = 10.0

    def __post_init__(self):
        if not (self.t_g_1q > 0 and self.t_g_2q > 0):
            raise ValueError("gate times must be positive")
        if not self.j0 > 0:
            raise ValueError("j0 must be positive")


def native_gate_schedule(
    gate: str,
    params: GateParams = GateParams(),
    *,
    n_qubits: int | None = None,
    qubit: int = 0,
    dt: float = 5e-4,
    sens: Sequence[NoiseSensitivities] | None = None,
    flip_flop_dw: float | None = None,
) -> ControlSchedule:
    """Square-pulse schedule of a native gate.

    ``X90``/``Y90`` use a resonant drive with f_R = 1/(4 t_g). ``CZ`` is a square
    exchange pulse of length ``1/(2 J0)`` (so ``J t_ex = pi``) followed by idle
    time up to ``t_g_2q`` and virtual ``Z(-pi/2)`` on both qubits.
    """
    gate = gate.upper()
    if gate == "CZ":
        nq = 2
    else:
        nq = n_qubits or 1
    if gate in ("I", "X90", "Y90"):
        tg = params.t_g_1q
        if gate == "I":
            els = [SegmentControl.idle(tg, nq)]
        else:
            ph = 0.0 if gate == "X90" else math.pi / 2
            els = [SegmentControl.drive(tg, 1.0 / (4 * tg), ph, qubit, nq)]
    elif gate == "CZ":
        t_ex = 1.0 / (2 * params.j0)
        if t_ex > params.t_g_2q * (1 + 1e-12):
            raise ValueError("exchange pulse does not fit in the CZ gate time")
        z = (0.0, 0.0)
        els = [SegmentControl(t_ex, z, z, z, j_mhz=params.j0)]
        rest = params.t_g_2q - t_ex
        if rest > 1e-12:
            els.append(SegmentControl.idle(rest, 2))
        els += [VirtualZ(-math.pi / 2, 0), VirtualZ(-math.pi / 2, 1)]
    else:
        raise ValueError(f"unknown gate {gate!r}")
    if sens is None:
        return ControlSchedule(tuple(els), dt=dt, n_qubits=nq, delta_n=(0.0,) * nq,
                               d_omega_n=(0.0,) * nq, flip_flop_dw=flip_flop_dw)
    return ControlSchedule.from_sensitivities(els, sens, dt=dt, flip_flop_dw=flip_flop_dw)


def ideal_gate(gate: str, n_qubits: int = 1, qubit: int = 0) -> np.ndarray:
    gate = gate.upper()
    if gate == "CZ":
        return np.diag([1, 1, 1, -1]).astype(complex)
    c = math.cos(math.pi / 4)
    one = {
        "I": I2,
        "X90": c * (I2 - 1j * SX),
        "Y90": c * (I2 - 1j * SY),
    }
    if gate not in one:
        raise ValueError(f"unknown gate {gate!r}")
    return _embed(one[gate], qubit, n_qubits)


def equal_up_to_phase(a, b, atol=1e-10) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    ov = np.vdot(b, a)
    if abs(ov) < 1e-15:
        return False
    return bool(np.linalg.norm(a - b * ov / abs(ov), 2) <= atol)
