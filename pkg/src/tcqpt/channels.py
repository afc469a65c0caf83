"""Channels and error generators in the Pauli transfer matrix picture.

PTM convention: ``M[mu, nu] = Tr[P_mu Phi(P_nu)] / d`` with unnormalized Pauli
strings ordered lexicographically over ``IXYZ`` (``II, IX, ..., ZZ``).

Elementary generators::

    H_P[rho]   = -i [P, rho]
    S_P[rho]   = P rho P - rho
    C_PQ[rho]  = P rho Q + Q rho P - {{P, Q}, rho}/2
    A_PQ[rho]  = i (P rho Q - Q rho P - [{P, Q}, rho]/2)

With this scaling ``exp(h H_P)`` is conjugation by ``exp(-i h P)``. The dual
set is computed from the Gram matrix of the full elementary set, so that
``Tr[B'^T D] = delta`` holds exactly for every pair.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .numerics import matrix_exp, matrix_log_principal

__all__ = [
    "PauliTransferMatrix",
    "ErrorGenerator",
    "GeneratorDecomposition",
    "GeneratorBasis",
    "pauli_labels",
    "pauli_matrices",
    "superop_ptm",
    "ptm_from_unitary",
    "ptms_from_unitaries",
    "channel_from_ensemble",
    "error_channel",
    "error_generator",
    "generator_basis",
    "decompose",
    "hamiltonian_generator",
    "average_gate_fidelity",
    "choi_matrix",
    "to_json",
    "from_json",
]

_P1 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

CP_TOL = 1e-8
TP_TOL = 1e-10


@lru_cache(maxsize=None)
def pauli_labels(n_qubits: int) -> tuple:
    return tuple("".join(p) for p in itertools.product("IXYZ", repeat=n_qubits))


@lru_cache(maxsize=None)
def _pauli_stack(n_qubits: int) -> np.ndarray:
    mats = []
    for lab in pauli_labels(n_qubits):
        m = np.ones((1, 1), dtype=complex)
        for ch in lab:
            m = np.kron(m, _P1[ch])
        mats.append(m)
    out = np.array(mats)
    out.setflags(write=False)
    return out


def pauli_matrices(n_qubits: int) -> np.ndarray:
    """Stack (d^2, d, d) of Pauli strings in label order."""
    return _pauli_stack(n_qubits)


def pauli_matrix(label: str) -> np.ndarray:
    n = len(label)
    return _pauli_stack(n)[pauli_labels(n).index(label)]


@lru_cache(maxsize=None)
def _vec_basis(n_qubits: int) -> np.ndarray:
    """Columns are row-major vec(P_nu)."""
    P = _pauli_stack(n_qubits)
    return P.reshape(P.shape[0], -1).T.copy()


def _n_from_dim(d: int) -> int:
    n = int(round(np.log2(d)))
    if 2**n != d or n < 1:
        raise ValueError(f"dimension {d} is not a qubit register")
    return n


@dataclass(frozen=True)
class PauliTransferMatrix:
    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        d2 = 4**self.n_qubits
        if m.shape != (d2, d2):
            raise ValueError(f"PTM must be {d2}x{d2}")
        if not np.all(np.isfinite(m)):
            raise ValueError("PTM has non-finite entries")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def is_tp(self, tol: float = TP_TOL) -> bool:
        row = self.matrix[0].copy()
        row[0] -= 1.0
        return bool(np.max(np.abs(row)) <= tol)

    def is_cp(self, tol: float = CP_TOL) -> bool:
        return bool(np.linalg.eigvalsh(choi_matrix(self)).min() >= -tol)

    def compose(self, other: "PauliTransferMatrix") -> "PauliTransferMatrix":
        """Channel ``self o other`` (``other`` acts first)."""
        return PauliTransferMatrix(self.n_qubits, self.matrix @ other.matrix)

    @staticmethod
    def identity(n_qubits: int) -> "PauliTransferMatrix":
        return PauliTransferMatrix(n_qubits, np.eye(4**n_qubits))


@dataclass(frozen=True)
class ErrorGenerator:
    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        d2 = 4**self.n_qubits
        if m.shape != (d2, d2):
            raise ValueError(f"generator must be {d2}x{d2}")
        object.__setattr__(self, "matrix", m)

    def exp(self) -> PauliTransferMatrix:
        return PauliTransferMatrix(self.n_qubits, matrix_exp(self.matrix).real)

    def __add__(self, other):
        return ErrorGenerator(self.n_qubits, self.matrix + other.matrix)

    def __sub__(self, other):
        return ErrorGenerator(self.n_qubits, self.matrix - other.matrix)

    def scale(self, c: float) -> "ErrorGenerator":
        return ErrorGenerator(self.n_qubits, c * self.matrix)


def superop_ptm(terms, n_qubits: int) -> np.ndarray:
    """PTM of ``rho -> sum_k c_k A_k rho B_k`` given ``terms = [(c, A, B), ...]``."""
    P = _pauli_stack(n_qubits)
    d = 2**n_qubits
    out = np.zeros((d * d, d * d), dtype=complex)
    for c, A, B in terms:
        # Tr[P_mu A P_nu B]
        out += c * np.einsum("mij,jk,nkl,li->mn", P, A, P, B, optimize=True)
    out /= d
    if np.max(np.abs(out.imag)) > 1e-12:
        raise ValueError("map is not Hermiticity preserving")
    return out.real


def _check_unitary(u, tol=1e-8):
    u = np.asarray(u, dtype=complex)
    if u.ndim < 2 or u.shape[-1] != u.shape[-2]:
        raise ValueError("propagator must be square")
    eye = np.eye(u.shape[-1])
    err = np.max(np.abs(np.swapaxes(u.conj(), -1, -2) @ u - eye))
    if err > tol:
        raise ValueError(f"propagator is not unitary (deviation {err:.2e})")
    return u


def _superop_to_ptm(s: np.ndarray, n: int) -> np.ndarray:
    V = _vec_basis(n)
    d = 2**n
    return (V.conj().T @ s @ V).real / d


def ptms_from_unitaries(us) -> np.ndarray:
    """Batched PTMs (..., d^2, d^2) of a stack of unitaries."""
    us = _check_unitary(us)
    d = us.shape[-1]
    n = _n_from_dim(d)
    s = np.einsum("...ij,...kl->...ikjl", us, us.conj()).reshape(us.shape[:-2] + (d * d, d * d))
    V = _vec_basis(n)
    return np.real(np.einsum("ai,...ij,jb->...ab", V.conj().T, s, V, optimize=True)) / d


def ptm_from_unitary(u) -> PauliTransferMatrix:
    u = np.asarray(u, dtype=complex)
    return PauliTransferMatrix(_n_from_dim(u.shape[-1]), ptms_from_unitaries(u))


def channel_from_ensemble(us, weights=None) -> PauliTransferMatrix:
    """Convex mixture of unitary channels ``sum_k w_k U_k . U_k^dag``."""
    us = _check_unitary(np.asarray(us, dtype=complex))
    if us.ndim == 2:
        us = us[None]
    k, d = us.shape[0], us.shape[-1]
    if weights is None:
        w = np.full(k, 1.0 / k)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (k,):
            raise ValueError("one weight per unitary is required")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-10:
            raise ValueError("weights must be non-negative and sum to 1")
    s = np.einsum("k,kij,kpl->ipjl", w, us, us.conj(), optimize=True).reshape(d * d, d * d)
    n = _n_from_dim(d)
    return PauliTransferMatrix(n, _superop_to_ptm(s, n))


def error_channel(gate: PauliTransferMatrix, ideal: PauliTransferMatrix) -> PauliTransferMatrix:
    """``E`` with ``E o ideal = gate``."""
    if gate.n_qubits != ideal.n_qubits:
        raise ValueError("qubit count mismatch")
    u = ideal.matrix
    if np.allclose(u @ u.T, np.eye(u.shape[0]), atol=1e-10):
        inv = u.T
    else:
        if np.linalg.cond(u) > 1e12:
            raise np.linalg.LinAlgError("ideal channel is singular")
        inv = np.linalg.inv(u)
    return PauliTransferMatrix(gate.n_qubits, gate.matrix @ inv)


def error_generator(e: PauliTransferMatrix) -> ErrorGenerator:
    """Principal matrix logarithm of an error channel."""
    log = matrix_log_principal(e.matrix)
    if np.iscomplexobj(log):
        if np.max(np.abs(log.imag)) > 1e-8:
            raise ValueError("generator has a non-negligible imaginary part")
        log = log.real
    return ErrorGenerator(e.n_qubits, log)


@dataclass(frozen=True)
class GeneratorBasis:
    n_qubits: int
    labels: tuple  # ('H', 'Z'), ('S', 'Z'), ('C', 'X', 'Y'), ('A', 'X', 'Y'), ...
    elements: np.ndarray  # (K, d^2, d^2)
    duals: np.ndarray  # (K, d^2, d^2)

    def index(self, kind: str, *paulis: str) -> int:
        return self.labels.index((kind, *paulis))

    def element(self, kind: str, *paulis: str) -> np.ndarray:
        return self.elements[self.index(kind, *paulis)]

    def dual(self, kind: str, *paulis: str) -> np.ndarray:
        return self.duals[self.index(kind, *paulis)]


@lru_cache(maxsize=None)
def generator_basis(n_qubits: int) -> GeneratorBasis:
    if n_qubits not in (1, 2):
        raise ValueError("generator basis supports one or two qubits")
    labs = pauli_labels(n_qubits)[1:]
    P = {lab: pauli_matrix(lab) for lab in labs}
    eye = np.eye(2**n_qubits)
    labels, elems = [], []
    for p in labs:
        labels.append(("H", p))
        elems.append(superop_ptm([(-1j, P[p], eye), (1j, eye, P[p])], n_qubits))
    for p in labs:
        labels.append(("S", p))
        elems.append(superop_ptm([(1, P[p], P[p]), (-1, eye, eye)], n_qubits))
    pairs = list(itertools.combinations(labs, 2))
    for p, q in pairs:
        ac = P[p] @ P[q] + P[q] @ P[p]
        labels.append(("C", p, q))
        elems.append(superop_ptm([(1, P[p], P[q]), (1, P[q], P[p]), (-0.5, ac, eye), (-0.5, eye, ac)], n_qubits))
    for p, q in pairs:
        ac = P[p] @ P[q] + P[q] @ P[p]
        labels.append(("A", p, q))
        elems.append(
            superop_ptm([(1j, P[p], P[q]), (-1j, P[q], P[p]), (-0.5j, ac, eye), (0.5j, eye, ac)], n_qubits)
        )
    B = np.array(elems)
    flat = B.reshape(B.shape[0], -1)
    gram = flat @ flat.T
    duals = (np.linalg.solve(gram, flat)).reshape(B.shape)
    B.setflags(write=False)
    duals.setflags(write=False)
    return GeneratorBasis(n_qubits, tuple(labels), B, duals)


@dataclass(frozen=True)
class GeneratorDecomposition:
    h: dict
    s: dict
    c: dict
    a: dict
    residual: float

    def coefficient(self, kind: str, *paulis: str) -> float:
        table = {"H": self.h, "S": self.s, "C": self.c, "A": self.a}[kind]
        return table[paulis[0] if len(paulis) == 1 else tuple(paulis)]


def decompose(l) -> GeneratorDecomposition:
    """H/S/C/A rates of a generator via the dual set."""
    m = np.asarray(getattr(l, "matrix", l), dtype=float)
    n = _n_from_dim(int(round(np.sqrt(m.shape[0]))))
    gb = generator_basis(n)
    coef = np.tensordot(gb.duals, m, axes=([1, 2], [0, 1]))
    recon = np.tensordot(coef, gb.elements, axes=1)
    out = {"H": {}, "S": {}, "C": {}, "A": {}}
    for lab, c in zip(gb.labels, coef):
        key = lab[1] if len(lab) == 2 else (lab[1], lab[2])
        out[lab[0]][key] = float(c)
    return GeneratorDecomposition(out["H"], out["S"], out["C"], out["A"], float(np.linalg.norm(m - recon)))


def hamiltonian_generator(coeffs: dict, n_qubits: int) -> ErrorGenerator:
    """``sum_P h_P H_P`` from a {Pauli label: h} map."""
    gb = generator_basis(n_qubits)
    m = np.zeros(gb.elements.shape[1:])
    for p, h in coeffs.items():
        m += h * gb.element("H", p)
    return ErrorGenerator(n_qubits, m)


def average_gate_fidelity(e) -> float:
    """Haar-averaged fidelity ``(Tr M + d)/(d^2 + d)`` of a trace-preserving channel."""
    m = np.asarray(getattr(e, "matrix", e), dtype=float)
    d = int(round(np.sqrt(m.shape[-1])))
    f = (np.trace(m, axis1=-2, axis2=-1) + d) / (d * d + d)
    return float(f) if np.ndim(f) == 0 else f


def choi_matrix(e: PauliTransferMatrix) -> np.ndarray:
    """Unit-trace Choi matrix ``sum M_mu,nu P_nu^T (x) P_mu / d^2``."""
    P = _pauli_stack(e.n_qubits)
    d = e.dim
    return np.einsum("mn,nij,mkl->ikjl", e.matrix, P.transpose(0, 2, 1), P).reshape(d * d, d * d) / d**2


def to_json(obj, path=None) -> str:
    rec = {
        "n_qubits": obj.n_qubits,
        "basis": list(pauli_labels(obj.n_qubits)),
        "matrix": [float(x) for x in np.asarray(obj.matrix).ravel()],
    }
    text = json.dumps(rec)
    if path is not None:
        Path(path).write_text(text)
    return text


def from_json(text: str, kind=PauliTransferMatrix):
    rec = json.loads(text)
    n = int(rec["n_qubits"])
    if list(rec["basis"]) != list(pauli_labels(n)):
        raise ValueError("unexpected Pauli basis ordering")
    return kind(n, np.array(rec["matrix"], dtype=float).reshape(4**n, 4**n))
