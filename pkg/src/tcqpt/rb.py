"""Two-qubit Clifford group and interleaved randomized benchmarking.

Cliffords are tracked as signed permutations of the 16 two-qubit Pauli
strings (``C P C^dag = sign[P] * perm[P]``). The group is enumerated in
canonical form ``L_k CZ ... CZ L_0`` where each ``L`` is a pair of
single-qubit Cliffords and ``k <= 3`` is minimal. Single-qubit Cliffords
compile to the fewest X90/Y90 pulses with virtual Z rotations in between.

Compiled circuits are lists of *moments*:

* ``("Z", q, angle)``  exact frame change on qubit q
* ``("1Q", g0, g1)``   simultaneous physical gates from {X90, Y90, I}
* ``("CZ",)``
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .channels import pauli_labels, pauli_matrix
from .numerics import FitResult, least_squares_fit, seeded_rng
from .tomography import CompressedGateModel, compressed_fidelity, compressed_hamiltonian, error_unitary

__all__ = [
    "CliffordElement",
    "CliffordTable",
    "RBCurve",
    "IrbReport",
    "clifford_table",
    "sample_clifford",
    "invert_clifford",
    "compose_cliffords",
    "moment_unitary",
    "sequence_unitary",
    "run_rb",
    "irb_report",
    "fit_rb_decay",
    "write_rb_csv",
]

N_CLIFFORD_2Q = 11520
_I2 = np.eye(2, dtype=complex)
_GEN_IDX = tuple(pauli_labels(2).index(p) for p in ("XI", "IX", "ZI", "IZ"))


def _rot(axis: str, angle: float) -> np.ndarray:
    p = pauli_matrix(axis)
    return math.cos(angle / 2) * _I2 - 1j * math.sin(angle / 2) * p


_ONEQ_UNITARY = {
    "X90": _rot("X", math.pi / 2),
    "Y90": _rot("Y", math.pi / 2),
    "I": _I2,
}
_CZ = np.diag([1, 1, 1, -1]).astype(complex)


def _signed_perm(u: np.ndarray, n: int):
    """Signed permutation of Pauli strings induced by conjugation with u."""
    labs = pauli_labels(n)
    P = np.array([pauli_matrix(lab) for lab in labs])
    d = 2**n
    img = u[None] @ P @ u.conj().T[None]
    ov = np.einsum("aij,bij->ab", P.conj(), img).real / d  # ov[q, p] = Tr[Q^dag C P C^dag]/d
    perm = np.argmax(np.abs(ov), axis=0)
    sign = np.sign(ov[perm, np.arange(len(labs))]).astype(np.int8)
    if not np.allclose(np.abs(ov[perm, np.arange(len(labs))]), 1, atol=1e-8):
        raise ValueError("unitary is not a Clifford")
    return perm.astype(np.int16), sign


# single-qubit Cliffords --------------------------------------------------


def _key1(u):
    perm, sign = _signed_perm(u, 1)
    return (int(perm[1]), int(sign[1]), int(perm[3]), int(sign[3]))


@lru_cache(maxsize=None)
def single_qubit_cliffords() -> tuple:
    """The 24 single-qubit Cliffords as (ops, unitary) with ops over X90/Y90/Z(angle).

    Found by a uniform-cost search where physical pulses cost 1 and virtual Z
    rotations cost nothing, so every element uses the fewest pulses.
    """
    moves = [("X90", _ONEQ_UNITARY["X90"], 1)] + [("Y90", _ONEQ_UNITARY["Y90"], 1)]
    zs = [(("Z", a), np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)]), 0) for a in (math.pi / 2, math.pi, -math.pi / 2)]
    moves = [((m,), u, c) for m, u, c in moves] + [((z,), u, c) for z, u, c in zs]
    best = {}
    heap = [(0, 0, (), _I2)]
    tie = 1
    while heap:
        cost, _, ops, u = heapq.heappop(heap)
        k = _key1(u)
        if k in best:
            continue
        best[k] = (ops, u)
        for m, mu, c in moves:
            nu = mu @ u
            if _key1(nu) not in best:
                heapq.heappush(heap, (cost + c, tie, ops + m, nu))
                tie += 1
    out = sorted(best.values(), key=lambda t: (_n_phys(t[0]), len(t[0]), str(t[0])))
    if len(out) != 24:
        raise RuntimeError("single-qubit Clifford enumeration failed")
    return tuple(out)


def _n_phys(ops):
    return sum(1 for o in ops if o != "Z" and not (isinstance(o, tuple) and o[0] == "Z"))


def _layer_moments(c0: int, c1: int) -> list:
    """Moments of a pair of simultaneous single-qubit Cliffords."""
    seqs = [single_qubit_cliffords()[c][0] for c in (c0, c1)]
    # split each op list into (leading Zs, pulse) chunks
    chunks = []
    for ops in seqs:
        cur, out = [], []
        for o in ops:
            if isinstance(o, tuple):
                cur.append(o[1])
            else:
                out.append((cur, o))
                cur = []
        chunks.append((out, cur))
    moments = []
    n_slots = max(len(chunks[0][0]), len(chunks[1][0]))
    for k in range(n_slots):
        gates = []
        for q in range(2):
            pulses = chunks[q][0]
            if k < len(pulses):
                for a in pulses[k][0]:
                    moments.append(("Z", q, a))
                gates.append(pulses[k][1])
            else:
                gates.append("I")
        moments.append(("1Q", gates[0], gates[1]))
    for q in range(2):
        for a in chunks[q][1]:
            moments.append(("Z", q, a))
    return moments


def moment_unitary(m) -> np.ndarray:
    """Ideal two-qubit unitary of one moment."""
    if m[0] == "Z":
        z = np.diag([np.exp(-0.5j * m[2]), np.exp(0.5j * m[2])])
        return np.kron(z, _I2) if m[1] == 0 else np.kron(_I2, z)
    if m[0] == "CZ":
        return _CZ
    return np.kron(_ONEQ_UNITARY[m[1]], _ONEQ_UNITARY[m[2]])


def sequence_unitary(moments) -> np.ndarray:
    u = np.eye(4, dtype=complex)
    for m in moments:
        u = moment_unitary(m) @ u
    return u


# two-qubit Clifford group -------------------------------------------------


@dataclass(frozen=True)
class CliffordElement:
    index: int
    perm: np.ndarray = field(repr=False)
    sign: np.ndarray = field(repr=False)
    native_sequence: tuple = field(repr=False)
    n_cz: int = 0

    @property
    def tableau(self) -> np.ndarray:
        """4x4 binary symplectic matrix; column j is the image of XI, IX, ZI, IZ as (x1, x2, z1, z2)."""
        labs = pauli_labels(2)
        cols = []
        for g in _GEN_IDX:
            lab = labs[self.perm[g]]
            x = [1 if ch in "XY" else 0 for ch in lab]
            z = [1 if ch in "ZY" else 0 for ch in lab]
            cols.append(x + z)
        return np.array(cols, dtype=np.int8).T

    @property
    def phases(self) -> np.ndarray:
        return (self.sign[list(_GEN_IDX)] < 0).astype(np.int8)

    @property
    def key(self) -> int:
        return _key_from(self.perm[None], self.sign[None])[0]

    def unitary(self) -> np.ndarray:
        return sequence_unitary(self.native_sequence)

    def flat_sequence(self) -> list:
        """Ordered native operations: ('X90', q), ('Y90', q), ('Z', q, angle), ('CZ',)."""
        out = []
        for m in self.native_sequence:
            if m[0] == "1Q":
                out += [(g, q) for q, g in enumerate(m[1:]) if g != "I"]
            else:
                out.append(m)
        return out


def _key_from(perm, sign) -> np.ndarray:
    g = np.array(_GEN_IDX)
    code = perm[..., g].astype(np.int64) * 2 + (sign[..., g] < 0)
    return (code * (32 ** np.arange(4))).sum(axis=-1)


@dataclass(frozen=True)
class CliffordTable:
    elements: tuple
    lookup: dict = field(repr=False)

    def __len__(self):
        return len(self.elements)

    def find(self, perm, sign) -> CliffordElement:
        return self.elements[self.lookup[int(_key_from(perm[None], sign[None])[0])]]


@lru_cache(maxsize=None)
def clifford_table() -> CliffordTable:
    """All 11520 two-qubit Cliffords (modulo phase), fewest CZ gates first."""
    ones = single_qubit_cliffords()
    layers = [(a, b) for a in range(24) for b in range(24)]
    lperm = np.empty((576, 16), dtype=np.int16)
    lsign = np.empty((576, 16), dtype=np.int8)
    for i, (a, b) in enumerate(layers):
        lperm[i], lsign[i] = _signed_perm(np.kron(ones[a][1], ones[b][1]), 2)
    czp, czs = _signed_perm(_CZ, 2)

    # level 0: bare layers
    perms, signs, seqs, ncz = list(lperm), list(lsign), [[i] for i in range(576)], [0] * 576
    seen = set(_key_from(lperm, lsign).tolist())
    frontier = list(range(576))
    for level in (1, 2, 3):
        fp = np.array([perms[i] for i in frontier])
        fs = np.array([signs[i] for i in frontier])
        # CZ after the frontier element
        cp = czp[fp]
        cs = fs * czs[fp]
        # layer after that: (L o X)[p] = L[X[p]]
        newp = lperm[np.arange(576)[:, None, None], cp[None, :, :]]  # (576, F, 16)
        news = cs[None] * lsign[np.arange(576)[:, None, None], cp[None, :, :]]
        keys = _key_from(newp, news)  # (576, F)
        flat = keys.ravel()
        uniq, first = np.unique(flat, return_index=True)
        fresh = np.array([k not in seen for k in uniq.tolist()], dtype=bool)
        new_frontier = []
        for k, pos in zip(uniq[fresh].tolist(), first[fresh].tolist()):
            li, fi = divmod(pos, len(frontier))
            src = frontier[fi]
            perms.append(newp[li, fi])
            signs.append(news[li, fi])
            seqs.append(seqs[src] + [li])
            ncz.append(level)
            seen.add(k)
            new_frontier.append(len(perms) - 1)
        frontier = new_frontier
    if len(perms) != N_CLIFFORD_2Q:
        raise RuntimeError(f"enumerated {len(perms)} Cliffords, expected {N_CLIFFORD_2Q}")
    elements, lookup = [], {}
    for i, (p, s, sq, k) in enumerate(zip(perms, signs, seqs, ncz)):
        moments = []
        for j, li in enumerate(sq):
            if j > 0:
                moments.append(("CZ",))
            moments += _layer_moments(*layers[li])
        el = CliffordElement(i, np.asarray(p), np.asarray(s), tuple(moments), k)
        elements.append(el)
        lookup[el.key] = i
    return CliffordTable(tuple(elements), lookup)


def sample_clifford(rng: np.random.Generator) -> CliffordElement:
    """Uniformly random two-qubit Clifford."""
    tab = clifford_table()
    return tab.elements[int(rng.integers(len(tab)))]


def compose_cliffords(elements: Sequence[CliffordElement]):
    """Signed permutation of the product ``C_n ... C_1`` (first element acts first)."""
    perm = np.arange(16)
    sign = np.ones(16, dtype=np.int8)
    for c in elements:
        sign = sign * c.sign[perm]
        perm = c.perm[perm]
    return perm, sign


def invert_clifford(elements: Sequence[CliffordElement] | CliffordElement) -> CliffordElement:
    """Element undoing the product of the given Cliffords."""
    if isinstance(elements, CliffordElement):
        elements = [elements]
    perm, sign = compose_cliffords(elements)
    inv_p = np.empty_like(perm)
    inv_s = np.empty_like(sign)
    inv_p[perm] = np.arange(16)
    inv_s[perm] = sign
    return clifford_table().find(inv_p, inv_s)


# randomized benchmarking -------------------------------------------------


@dataclass(frozen=True)
class RBCurve:
    lengths: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    per_sequence: np.ndarray  # (len(lengths), n_seq)
    fit: FitResult | None
    variant: str = "reference"
    fit_degenerate: bool = False

    def __post_init__(self):
        if np.any(self.per_sequence < -1e-12) or np.any(self.per_sequence > 1 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")

    @property
    def p(self) -> float:
        return float(self.fit.params[1]) if self.fit is not None else math.nan


def fit_rb_decay(lengths, probs) -> tuple:
    """Fit ``A p^m + B``; returns ``(FitResult, degenerate)``."""
    m = np.asarray(lengths, dtype=float)
    y = np.asarray(probs, dtype=float)
    span = float(y.max() - y.min())
    if span < 1e-9:
        # no decay visible: p is not identifiable
        cov = np.full((3, 3), np.inf)
        return FitResult(np.array([0.0, 1.0, float(y.mean())]), 0.0, cov, False, False, 0, "flat data"), True
    a0 = max(float(y[0] - 0.25), 1e-3)
    ratio = np.clip((y[-1] - 0.25) / a0, 1e-6, 1.0)
    p0 = float(ratio ** (1.0 / max(m[-1] - m[0], 1.0))) if m[-1] > m[0] else 0.99
    res = least_squares_fit(lambda x, p: p[0] * p[1] ** x + p[2], m, y, [a0, min(p0, 0.9999), 0.25])
    return res, not res.converged or not res.covariance_ok


def _noisy_moment_factory(model, eps, R, h_ex, residual="layer"):
    """Per-circuit cache of noisy moment unitaries."""
    cache = {}
    ex = np.diag(np.exp(-1j * h_ex * np.array([1, -1, -1, 1]))) if h_ex else None

    def eps_of(g):
        return eps[g] if isinstance(eps, Mapping) else eps

    def oneq(g, q):
        key = (g, q)
        if key not in cache:
            if model is None or g not in model.coeffs:
                cache[key] = _ONEQ_UNITARY[g]
            else:
                h = compressed_hamiltonian(model, g, R, eps_of(g), qubit=q, n_qubits=1)
                cache[key] = error_unitary(h) @ _ONEQ_UNITARY[g]
        return cache[key]

    def get(m):
        if m[0] == "Z":
            return moment_unitary(m)
        if m[0] == "CZ":
            if "CZ" not in cache:
                if model is None:
                    cache["CZ"] = _CZ
                else:
                    cache["CZ"] = error_unitary(compressed_hamiltonian(model, "CZ", R, eps_of("CZ"))) @ _CZ
            return cache["CZ"]
        key = m
        if key not in cache:
            u = np.kron(oneq(m[1], 0), oneq(m[2], 1))
            if ex is not None:
                if residual == "gate":
                    n = sum(1 for g in m[1:] if g != "I")
                    u = np.linalg.matrix_power(ex, n) @ u
                else:
                    u = ex @ u
            cache[key] = u
        return cache[key]

    return get


def _draw_fields(rng, correlation):
    if correlation == "per_gate":
        return {g: rng.standard_normal(2) for g in ("I", "X90", "Y90", "CZ")}
    return rng.standard_normal(2)


def run_rb(
    model: CompressedGateModel | None,
    eps,
    h_ex: float,
    lengths: Sequence[int],
    n_seq: int,
    interleave_cz: bool = False,
    shots: int | None = None,
    seed: int = 0,
    *,
    residual: str = "layer",
    depolarizing: float | None = None,
    density_matrix: bool = False,
) -> RBCurve:
    """Simulate a (possibly interleaved) RB curve under the compressed gate model.

    For each (length index, sequence index) one RNG stream supplies the random
    Cliffords, the per-qubit fields R and any shot noise. Streams do not
    depend on ``interleave_cz``, so reference and interleaved curves see the
    same random draws. ``eps`` is a number or a map gate -> eps.
    ``depolarizing=q`` replaces the gate model by an ideal Clifford followed
    by a depolarizing channel with parameter q per Clifford.
    """
    lengths = np.asarray(lengths, dtype=int)
    if np.any(np.diff(lengths) <= 0) or np.any(lengths < 0):
        raise ValueError("lengths must be strictly ascending and non-negative")
    if n_seq < 1:
        raise ValueError("n_seq must be at least 1")
    if residual not in ("layer", "gate"):
        raise ValueError("residual must be 'layer' or 'gate'")
    tab = clifford_table()
    correlation = model.correlation if model is not None else "per_qubit"
    vals = np.empty((lengths.size, n_seq))
    for i, m in enumerate(lengths):
        for s in range(n_seq):
            rng = seeded_rng(seed, (i << 20) + s)
            idx = rng.integers(len(tab), size=int(m))
            R = _draw_fields(rng, correlation)
            cliffs = [tab.elements[k] for k in idx]
            body = []
            for c in cliffs:
                body.append(c)
                if interleave_cz:
                    body.append("CZ")
            # inverse of the ideal circuit
            ideal = []
            for c in cliffs:
                ideal.append(c)
                if interleave_cz:
                    ideal.append(_cz_element())
            inv = invert_clifford(ideal)
            body.append(inv)
            if depolarizing is not None:
                p = _depolarized_return(body, depolarizing)
            else:
                get = _noisy_moment_factory(model, eps, R, h_ex, residual)
                p = _return_probability(body, get, density_matrix)
            if shots:
                p = rng.binomial(shots, min(max(p, 0.0), 1.0)) / shots
            vals[i, s] = p
    vals = np.clip(vals, 0.0, 1.0)
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / math.sqrt(n_seq) if n_seq > 1 else np.zeros(lengths.size)
    fit, degenerate = fit_rb_decay(lengths, mean)
    return RBCurve(lengths, mean, se, vals, fit, "interleaved" if interleave_cz else "reference", degenerate)


@lru_cache(maxsize=None)
def _cz_element() -> CliffordElement:
    p, s = _signed_perm(_CZ, 2)
    return clifford_table().find(p, s)


def _moments_of(item):
    return (("CZ",),) if isinstance(item, str) else item.native_sequence


def _return_probability(body, get, density_matrix=False) -> float:
    if density_matrix:
        rho = np.zeros((4, 4), dtype=complex)
        rho[0, 0] = 1
        for item in body:
            for m in _moments_of(item):
                u = get(m)
                rho = u @ rho @ u.conj().T
        return float(rho[0, 0].real)
    psi = np.zeros(4, dtype=complex)
    psi[0] = 1
    for item in body:
        for m in _moments_of(item):
            psi = get(m) @ psi
    return float(abs(psi[0]) ** 2)


def _depolarized_return(body, q) -> float:
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = 1
    eye = np.eye(4) / 4
    for item in body:
        u = sequence_unitary(_moments_of(item))
        rho = q * (u @ rho @ u.conj().T) + (1 - q) * eye
    return float(rho[0, 0].real)


@dataclass(frozen=True)
class IrbReport:
    p_ref: float
    p_int: float
    rb_infidelity: float
    rb_fidelity: float
    exact_fidelity: float
    exact_stderr: float
    ratio: float
    p_ref_stderr: float = math.nan
    p_int_stderr: float = math.nan
    ref_covariance: list = field(default_factory=list)
    int_covariance: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("rb_fidelity", "exact_fidelity"):
            v = getattr(self, name)
            if not (0 <= v <= 1 or math.isnan(v)):
                raise ValueError(f"{name} outside [0, 1]")

    def to_json(self, path=None) -> str:
        text = json.dumps(self.__dict__, indent=2, default=float)
        if path is not None:
            Path(path).write_text(text)
        return text


def irb_report(
    ref: RBCurve,
    inter: RBCurve,
    model: CompressedGateModel,
    eps,
    n_draws: int = 2000,
    seed: int = 0,
) -> IrbReport:
    """Interleaved estimate ``r = (d-1)(1 - p_int/p_ref)/d`` against the exact CZ fidelity."""
    if ref.fit is None or inter.fit is None:
        raise ValueError("both curves must be fitted")
    p_ref, p_int = ref.p, inter.p
    if not p_ref > 0:
        raise ValueError("reference decay parameter must be positive")
    d = 4
    r = (d - 1) * (1 - p_int / p_ref) / d
    e = eps["CZ"] if isinstance(eps, Mapping) else eps
    f_exact, se = compressed_fidelity(model, "CZ", e, n_draws, seeded_rng(seed, 99))
    infid = 1 - f_exact
    ratio = r / infid if infid > 0 else math.nan
    return IrbReport(
        p_ref, p_int, r, min(max(1 - r, 0.0), 1.0), f_exact, se, ratio,
        float(ref.fit.stderr[1]) if ref.fit.covariance_ok else math.nan,
        float(inter.fit.stderr[1]) if inter.fit.covariance_ok else math.nan,
        np.asarray(ref.fit.covariance).tolist(), np.asarray(inter.fit.covariance).tolist(),
    )


def write_rb_csv(curve: RBCurve, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "p_mean", "p_stderr", "variant"])
        for m, p, s in zip(curve.lengths, curve.mean, curve.stderr):
            w.writerow([int(m), f"{p:.12g}", f"{s:.12g}", curve.variant])
    return path
