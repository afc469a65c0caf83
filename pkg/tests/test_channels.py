import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from tcqpt.channels import (
    ErrorGenerator,
    PauliTransferMatrix,
    average_gate_fidelity,
    channel_from_ensemble,
    choi_matrix,
    decompose,
    error_channel,
    error_generator,
    from_json,
    generator_basis,
    hamiltonian_generator,
    pauli_labels,
    pauli_matrix,
    ptm_from_unitary,
    ptms_from_unitaries,
    superop_ptm,
    to_json,
)
from tcqpt.dynamics import ideal_gate


def _rand_unitary(rng, d):
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_pauli_labels_order():
    assert pauli_labels(1) == ("I", "X", "Y", "Z")
    assert pauli_labels(2)[:5] == ("II", "IX", "IY", "IZ", "XI")
    assert np.allclose(pauli_matrix("XZ"), np.kron([[0, 1], [1, 0]], np.diag([1, -1])))


@pytest.mark.parametrize("n", [1, 2])
def test_dual_orthonormality(n):
    gb = generator_basis(n)
    k = len(gb.labels)
    gram = np.tensordot(gb.duals, gb.elements, axes=([1, 2], [1, 2]))
    assert np.max(np.abs(gram - np.eye(k))) < 1e-12


def test_basis_sizes():
    assert len(generator_basis(1).labels) == 3 + 3 + 3 + 3
    assert len(generator_basis(2).labels) == 15 + 15 + 105 + 105


def test_unitary_ptm_is_orthogonal():
    rng = np.random.default_rng(0)
    m = ptm_from_unitary(_rand_unitary(rng, 4)).matrix
    assert np.allclose(m @ m.T, np.eye(16), atol=1e-12)
    assert np.allclose(m[0], np.eye(16)[0], atol=1e-12)


def test_ptm_matches_definition():
    rng = np.random.default_rng(1)
    u = _rand_unitary(rng, 2)
    P = [pauli_matrix(l) for l in pauli_labels(1)]
    ref = np.array([[np.trace(a @ u @ b @ u.conj().T).real / 2 for b in P] for a in P])
    assert np.allclose(ptm_from_unitary(u).matrix, ref, atol=1e-13)


def test_non_unitary_rejected():
    with pytest.raises(ValueError):
        ptm_from_unitary(np.diag([1.0, 0.5]))


def test_hamiltonian_rate_of_rotation():
    th = 0.03
    u = expm(-0.5j * th * pauli_matrix("X"))
    dec = decompose(error_generator(ptm_from_unitary(u)))
    assert abs(dec.h["X"] - th / 2) < 1e-12
    assert max(abs(v) for v in dec.s.values()) < 1e-12
    assert dec.residual < 1e-12


def test_stochastic_rate_of_pauli_channel():
    p = 0.02
    m = channel_from_ensemble([np.eye(2), pauli_matrix("Z")], [1 - p, p])
    dec = decompose(error_generator(m))
    assert abs(dec.s["Z"] - (-math.log(1 - 2 * p) / 2)) < 1e-12
    assert abs(dec.s["X"]) < 1e-12
    assert abs(dec.h["Z"]) < 1e-12


def test_error_channel_recovers_error():
    rng = np.random.default_rng(2)
    err = ptm_from_unitary(expm(-1j * 0.01 * pauli_matrix("Y")))
    ideal = ptm_from_unitary(ideal_gate("X90"))
    e = error_channel(err.compose(ideal), ideal)
    assert np.allclose(e.matrix, err.matrix, atol=1e-13)
    with pytest.raises(ValueError):
        error_channel(err, ptm_from_unitary(_rand_unitary(rng, 4)))


def test_agf_rotation_closed_form():
    th = 0.4
    u = expm(-0.5j * th * pauli_matrix("X"))
    ref = (4 * math.cos(th / 2) ** 2 + 2) / 6
    assert abs(average_gate_fidelity(ptm_from_unitary(u)) - ref) < 1e-14


def test_agf_matches_two_design_average():
    # the six Pauli eigenstates form a 2-design for one qubit
    rng = np.random.default_rng(3)
    us = [_rand_unitary(rng, 2) for _ in range(3)]
    w = np.array([0.6, 0.3, 0.1])
    e = channel_from_ensemble(us, w)
    states = []
    for v in ([1, 0], [0, 1], [1, 1], [1, -1], [1, 1j], [1, -1j]):
        v = np.array(v, dtype=complex)
        states.append(v / np.linalg.norm(v))
    avg = np.mean([sum(wk * abs(np.vdot(s, u @ s)) ** 2 for wk, u in zip(w, us)) for s in states])
    assert abs(average_gate_fidelity(e) - avg) < 1e-12


def test_agf_depolarizing():
    lam = 0.97
    m = np.diag([1.0] + [lam] * 15)
    assert abs(average_gate_fidelity(m) - (1 + 15 * lam + 4) / 20) < 1e-15


def test_choi_cp_and_tp():
    rng = np.random.default_rng(4)
    e = channel_from_ensemble([_rand_unitary(rng, 4) for _ in range(3)])
    c = choi_matrix(e)
    assert abs(np.trace(c) - 1) < 1e-12
    assert e.is_cp() and e.is_tp()
    # transpose map is positive but not completely positive
    t = PauliTransferMatrix(1, np.diag([1.0, 1.0, -1.0, 1.0]))
    assert t.is_tp() and not t.is_cp()
    assert not PauliTransferMatrix(1, np.diag([0.9, 1, 1, 1])).is_tp()


def test_ensemble_weight_validation():
    with pytest.raises(ValueError):
        channel_from_ensemble([np.eye(2), np.eye(2)], [0.7, 0.7])
    with pytest.raises(ValueError):
        channel_from_ensemble([np.eye(2)], [0.5, 0.5])


def test_superop_matches_unitary_ptm():
    u = ideal_gate("CZ")
    assert np.allclose(superop_ptm([(1, u, u.conj().T)], 2), ptm_from_unitary(u).matrix)


def test_batched_ptms():
    rng = np.random.default_rng(5)
    us = np.array([_rand_unitary(rng, 2) for _ in range(4)])
    batch = ptms_from_unitaries(us)
    for u, m in zip(us, batch):
        assert np.allclose(ptm_from_unitary(u).matrix, m)


def test_hamiltonian_generator_matches_conjugation():
    coeffs = {"XX": 0.01, "ZI": -0.02, "IZ": 0.005}
    L = hamiltonian_generator(coeffs, 2)
    H = sum(h * pauli_matrix(p) for p, h in coeffs.items())
    assert np.allclose(L.exp().matrix, ptm_from_unitary(expm(-1j * H)).matrix, atol=1e-13)


def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    e = ptm_from_unitary(_rand_unitary(rng, 4))
    text = to_json(e, tmp_path / "e.json")
    back = from_json(text)
    assert np.array_equal(back.matrix, e.matrix)
    g = from_json(to_json(ErrorGenerator(1, np.eye(4))), ErrorGenerator)
    assert isinstance(g, ErrorGenerator)


def test_generator_arithmetic():
    a = hamiltonian_generator({"X": 0.1}, 1)
    b = hamiltonian_generator({"Y": 0.2}, 1)
    d = decompose((a + b.scale(2.0)) - a)
    assert abs(d.h["Y"] - 0.4) < 1e-12 and abs(d.h["X"]) < 1e-12


_COEF = st.floats(-0.05, 0.05, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(_COEF, min_size=36, max_size=36))
def test_decomposition_recovery_one_qubit(vals):
    gb = generator_basis(1)
    c = np.array(vals[: len(gb.labels)])
    L = np.tensordot(c, gb.elements, axes=1)
    dec = decompose(L)
    got = np.array([dec.coefficient(lab[0], *lab[1:]) for lab in gb.labels])
    assert np.max(np.abs(got - c)) < 1e-8
    assert dec.residual < 1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_decomposition_recovery_two_qubit(seed):
    gb = generator_basis(2)
    c = 0.01 * np.random.default_rng(seed).standard_normal(len(gb.labels))
    dec = decompose(np.tensordot(c, gb.elements, axes=1))
    got = np.array([dec.coefficient(lab[0], *lab[1:]) for lab in gb.labels])
    assert np.max(np.abs(got - c)) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.lists(_COEF, min_size=15, max_size=15), st.lists(st.floats(0, 0.02), min_size=15, max_size=15))
def test_exp_log_round_trip_two_qubit(h, s):
    labs = pauli_labels(2)[1:]
    gb = generator_basis(2)
    L = sum(hv * gb.element("H", p) + sv * gb.element("S", p) for p, hv, sv in zip(labs, h, s))
    e = ErrorGenerator(2, L).exp()
    assert e.is_tp() and e.is_cp()
    back = error_generator(e).matrix
    assert np.max(np.abs(back - L)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_unitary_channel_agf_bounds(seed):
    rng = np.random.default_rng(seed)
    f = average_gate_fidelity(ptm_from_unitary(_rand_unitary(rng, 4)))
    assert 1 / 5 - 1e-12 <= f <= 1 + 1e-12


def test_correlation_label_counts():
    gb = generator_basis(2)
    kinds = [lab[0] for lab in gb.labels]
    assert kinds.count("C") == kinds.count("A") == len(list(itertools.combinations(range(15), 2)))
