import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kpzsim.gates import CX, SQRT_X, T_GATE, X, Z
from kpzsim.qstate import (
    CapacityError,
    StateVector,
    ValidationError,
    apply_1q,
    apply_2q,
    basis_index,
    bipartite_entropy,
    bitstring_counts,
    expectation_z,
    index_bits,
    new_basis_state,
    sample_bitstrings,
    site_magnetization,
)

from conftest import haar_unitary, random_state

SWAP = np.eye(4)[[0, 2, 1, 3]].astype(complex)


def dense_op(u: np.ndarray, qubits: tuple[int, ...], n: int) -> np.ndarray:
    """Reference full-space matrix built by explicit index arithmetic."""
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    k = len(qubits)
    for col in range(dim):
        sub_in = sum(((col >> q) & 1) << (k - 1 - i) for i, q in enumerate(qubits))
        for sub_out in range(1 << k):
            row = col
            for i, q in enumerate(qubits):
                bit = (sub_out >> (k - 1 - i)) & 1
                row = (row & ~(1 << q)) | (bit << q)
            out[row, col] += u[sub_out, sub_in]
    return out


# -- construction --------------------------------------------------------------

def test_basis_state_single_qubit():
    s = new_basis_state(1, "0")
    np.testing.assert_array_equal(s.amplitudes, [1, 0])


def test_basis_state_bit_convention():
    s = new_basis_state(2, "10")
    # qubit 0 set -> bit 0 of the label
    assert basis_index("10") == 1
    assert s.amplitudes[1] == 1 and np.count_nonzero(s.amplitudes) == 1
    assert index_bits(1, 2) == "10"


def test_basis_state_21_qubits():
    s = new_basis_state(21)
    assert s.dim == 2**21
    assert s.norm_sq() == 1.0


@pytest.mark.parametrize("n", [0, 31, -2])
def test_capacity_limits(n):
    with pytest.raises(CapacityError):
        new_basis_state(n)


def test_bits_length_mismatch():
    with pytest.raises(ValidationError):
        new_basis_state(3, "01")


def test_statevector_length_checked():
    with pytest.raises(ValidationError):
        StateVector(3, np.zeros(4))


# -- single-qubit action -------------------------------------------------------

def test_x_flips_zero():
    s = apply_1q(new_basis_state(1), X, 0)
    np.testing.assert_allclose(s.amplitudes, [0, 1])


def test_t_squared_is_s():
    s = StateVector.from_amplitudes(np.array([1, 1]) / math.sqrt(2))
    apply_1q(apply_1q(s, T_GATE, 0), T_GATE, 0)
    np.testing.assert_allclose(s.amplitudes, np.array([1, 1j]) / math.sqrt(2), atol=1e-12)


def test_sqrt_x_twice_gives_one_up_to_phase():
    s = apply_1q(apply_1q(new_basis_state(1), SQRT_X, 0), SQRT_X, 0)
    assert abs(s.amplitudes[1]) == pytest.approx(1.0, abs=1e-12)


def test_non_unitary_rejected():
    with pytest.raises(ValidationError):
        apply_1q(new_basis_state(1), np.array([[1, 0], [0, 2]]), 0)
    with pytest.raises(ValidationError):
        apply_2q(new_basis_state(2), np.ones((4, 4)), 0, 1)


def test_index_errors():
    with pytest.raises(IndexError):
        apply_1q(new_basis_state(2), X, 2)
    with pytest.raises(IndexError):
        apply_2q(new_basis_state(2), CX, 1, 1)
    with pytest.raises(IndexError):
        apply_2q(new_basis_state(2), CX, 0, 5)


# -- two-qubit action ----------------------------------------------------------

def test_cx_control_set():
    s = apply_2q(new_basis_state(2, "10"), CX, 0, 1)
    assert s.amplitudes[basis_index("11")] == 1


def test_identity_leaves_state_bitwise():
    rng = np.random.default_rng(0)
    s = StateVector(3, random_state(3, rng))
    before = s.amplitudes.copy()
    apply_2q(s, np.eye(4), 2, 0)
    np.testing.assert_array_equal(s.amplitudes, before)


def test_swap_moves_excitation():
    s = apply_2q(new_basis_state(2, "01"), SWAP, 0, 1)
    assert s.amplitudes[basis_index("10")] == 1


@pytest.mark.parametrize("pair", [(0, 1), (1, 0), (0, 3), (3, 1), (2, 4)])
def test_apply_2q_matches_dense_reference(pair, rng):
    n = 5
    u = haar_unitary(4, rng)
    psi = random_state(n, rng)
    s = apply_2q(StateVector(n, psi.copy()), u, *pair)
    np.testing.assert_allclose(s.amplitudes, dense_op(u, pair, n) @ psi, atol=1e-12)


@pytest.mark.parametrize("q", [0, 2, 4])
def test_apply_1q_matches_dense_reference(q, rng):
    n = 5
    u = haar_unitary(2, rng)
    psi = random_state(n, rng)
    s = apply_1q(StateVector(n, psi.copy()), u, q)
    np.testing.assert_allclose(s.amplitudes, dense_op(u, (q,), n) @ psi, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_kron_equals_two_single_qubit_gates(seed, n):
    rng = np.random.default_rng(seed)
    qa, qb = rng.choice(n, size=2, replace=False)
    a, b = haar_unitary(2, rng), haar_unitary(2, rng)
    psi = random_state(n, rng)
    s1 = apply_2q(StateVector(n, psi.copy()), np.kron(a, b), int(qa), int(qb))
    s2 = apply_1q(apply_1q(StateVector(n, psi.copy()), a, int(qa)), b, int(qb))
    np.testing.assert_allclose(s1.amplitudes, s2.amplitudes, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(2, 7), st.integers(1, 30))
def test_norm_preserved_and_round_trip(seed, n, depth):
    rng = np.random.default_rng(seed)
    s = StateVector(n, random_state(n, rng))
    start = s.amplitudes.copy()
    history = []
    for _ in range(depth):
        if rng.random() < 0.5:
            u, q = haar_unitary(2, rng), (int(rng.integers(n)),)
            apply_1q(s, u, *q)
        else:
            u, q = haar_unitary(4, rng), tuple(int(x) for x in rng.choice(n, 2, replace=False))
            apply_2q(s, u, *q)
        history.append((u, q))
    assert abs(s.norm_sq() - 1) <= 1e-10
    for u, q in reversed(history):
        (apply_1q if len(q) == 1 else apply_2q)(s, u.conj().T, *q)
    np.testing.assert_allclose(s.amplitudes, start, atol=1e-10)


# -- expectation / entropy -----------------------------------------------------

def test_expectation_z_eigenstates():
    assert expectation_z(new_basis_state(3), 0) == 1.0
    assert expectation_z(new_basis_state(3, "001"), 2) == -1.0
    assert expectation_z(new_basis_state(3, "001"), 1) == 1.0


def test_expectation_z_equal_superposition():
    s = StateVector(3, np.full(8, 1 / math.sqrt(8)))
    for q in range(3):
        assert abs(expectation_z(s, q)) <= 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_expectation_z_matches_dense(seed, n):
    rng = np.random.default_rng(seed)
    psi = random_state(n, rng)
    q = int(rng.integers(n))
    ref = np.vdot(psi, dense_op(Z, (q,), n) @ psi).real
    assert expectation_z(StateVector(n, psi), q) == pytest.approx(ref, abs=1e-12)


def test_entropy_product_state_zero():
    assert bipartite_entropy(new_basis_state(4, "0110"), 2) == 0.0


def test_entropy_bell_pair():
    s = StateVector(2, np.array([1, 0, 0, 1]) / math.sqrt(2))
    assert bipartite_entropy(s, 1) == pytest.approx(math.log(2), abs=1e-12)


def test_entropy_cut_selects_low_qubits():
    # Bell pair on qubits (0, 2), qubit 1 in |0>: cut 1 separates the pair, cut 2 does not
    amps = np.zeros(8, complex)
    amps[0] = amps[0b101] = 1 / math.sqrt(2)
    s = StateVector(3, amps)
    assert bipartite_entropy(s, 1) == pytest.approx(math.log(2))
    assert bipartite_entropy(s, 2) == pytest.approx(math.log(2))
    amps2 = np.zeros(8, complex)
    amps2[0] = amps2[0b011] = 1 / math.sqrt(2)  # pair on (0, 1)
    assert bipartite_entropy(StateVector(3, amps2), 2) == pytest.approx(0.0, abs=1e-12)


def test_entropy_matches_density_matrix(rng):
    n, cut = 5, 2
    psi = random_state(n, rng)
    m = psi.reshape(1 << (n - cut), 1 << cut)
    rho = m.T @ m.conj()
    w = np.linalg.eigvalsh(rho)
    w = w[w > 1e-15]
    assert bipartite_entropy(StateVector(n, psi), cut) == pytest.approx(-np.sum(w * np.log(w)), abs=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.data())
def test_entropy_bounds(seed, n, data):
    cut = data.draw(st.integers(1, n - 1))
    s = StateVector(n, random_state(n, np.random.default_rng(seed)))
    val = bipartite_entropy(s, cut)
    assert 0.0 <= val <= min(cut, n - cut) * math.log(2) + 1e-12


def test_entropy_cut_range():
    with pytest.raises(IndexError):
        bipartite_entropy(new_basis_state(3), 0)
    with pytest.raises(IndexError):
        bipartite_entropy(new_basis_state(3), 3)


# -- sampling ------------------------------------------------------------------

def test_sampling_basis_state_no_flip():
    out = sample_bitstrings(new_basis_state(4, "0110"), 500, 0.0, seed=1)
    assert set(out) == {"0110"}


def test_sampling_flip_fraction():
    shots = 100_000
    out = sample_bitstrings(new_basis_state(3, "000"), shots, 0.1, seed=7)
    frac = 1 - (site_magnetization(out) + 1) / 2
    np.testing.assert_allclose(frac, 0.1, atol=0.005)


def test_sampling_uniform_superposition():
    shots = 80_000
    s = StateVector(3, np.full(8, 1 / math.sqrt(8)))
    counts = bitstring_counts(sample_bitstrings(s, shots, 0.0, seed=3))
    sigma = math.sqrt(shots * (1 / 8) * (7 / 8))
    for k in range(8):
        assert abs(counts[index_bits(k, 3)] - shots / 8) <= 4 * sigma


def test_sampling_deterministic():
    s = StateVector(4, random_state(4, np.random.default_rng(2)))
    assert sample_bitstrings(s, 200, 0.05, seed=9) == sample_bitstrings(s, 200, 0.05, seed=9)


def test_sampling_argument_checks():
    with pytest.raises(ValidationError):
        sample_bitstrings(new_basis_state(1), 0)
    with pytest.raises(ValidationError):
        sample_bitstrings(new_basis_state(1), 5, readout_flip=1.5)
