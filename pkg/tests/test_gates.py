import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from kpzsim.gates import (
    CIRCUIT_PHASE,
    PREP_GATES,
    Circuit,
    FloquetSpec,
    X,
    Y,
    Z,
    circuit_unitary,
    compose_2q,
    cx_pattern,
    dumps_circuit,
    field_angles,
    floquet_circuit,
    fuse_field_layer,
    gate_matrix,
    loads_circuit,
    op_1q,
    random_prep_choices,
    random_prep_circuit,
    run_circuit,
    xxz_block_circuit,
    xxz_block_matrix,
)
from kpzsim.qstate import StateVector, ValidationError, expectation_z

from conftest import random_state

DATA = Path(__file__).parent / "data"


def generator(J, delta):
    return (J / 4) * (np.kron(X, X) + np.kron(Y, Y) + delta * np.kron(Z, Z))


def equal_up_to_phase(a, b, tol=1e-12):
    k = np.argmax(np.abs(b))
    ph = a.flat[k] / b.flat[k]
    return abs(abs(ph) - 1) < tol and np.max(np.abs(a - ph * b)) < tol


# -- gate_matrix ---------------------------------------------------------------

def test_sqrt_x_squared_is_x():
    assert equal_up_to_phase(gate_matrix("X^1/2") @ gate_matrix("X^1/2"), X)


def test_sqrt_y_squared_is_y():
    assert equal_up_to_phase(gate_matrix("Y^1/2") @ gate_matrix("Y^1/2"), Y)


def test_principal_roots_eigenphases():
    # principal root: eigenvalues 1 and i (half of phases 0, pi)
    for name in ("X^1/2", "Y^1/2"):
        ev = np.sort_complex(np.linalg.eigvals(gate_matrix(name)))
        np.testing.assert_allclose(ev, np.sort_complex(np.array([1, 1j])), atol=1e-12)


def test_t_fourth_power_is_z():
    np.testing.assert_allclose(np.linalg.matrix_power(gate_matrix("T"), 4), Z, atol=1e-12)


def test_rz_inverse_pair():
    np.testing.assert_allclose(gate_matrix("Rz", math.pi / 2) @ gate_matrix("Rz(-1.5707963267948966)"), np.eye(2), atol=1e-12)


def test_inline_args_and_dagger():
    np.testing.assert_allclose(gate_matrix("XXZ(1,1,4)†"), xxz_block_matrix(1, 1, 4).conj().T)
    np.testing.assert_allclose(gate_matrix("Ry", 0.3), expm(-0.15j * Y), atol=1e-14)


@pytest.mark.parametrize("bad", ["H", "Rz", "Rz(1,2)", "((", "XXZ(1,2)"])
def test_unknown_gate_rejected(bad):
    with pytest.raises(ValidationError):
        gate_matrix(bad)


def test_non_finite_angle_rejected():
    with pytest.raises(ValidationError):
        gate_matrix("Rz", float("nan"))


# -- XXZ block -----------------------------------------------------------------

def test_xxz_zero_time_identity():
    np.testing.assert_array_equal(xxz_block_matrix(1, 0.7, 0), np.eye(4))


@given(st.floats(0.1, 2.0), st.floats(-2, 2), st.floats(0, 6.5))
def test_xxz_closed_form_matches_expm(J, delta, tau):
    ref = expm(-1j * tau * generator(J, delta))
    np.testing.assert_allclose(xxz_block_matrix(J, delta, tau), ref, atol=1e-12)


def test_xxz_block_structure():
    J, delta, tau = 1.0, 1.0, 4.0
    u = xxz_block_matrix(J, delta, tau)
    assert u[0, 0] == pytest.approx(np.exp(-1j * J * tau * delta / 4))
    assert u[3, 3] == pytest.approx(np.exp(-1j * J * tau * delta / 4))
    assert abs(u[1, 1]) == pytest.approx(abs(math.cos(J * tau / 2)))


def test_xxz_dual_unitary_point_swaps():
    u = xxz_block_matrix(1.0, 0.3, math.pi)
    assert abs(u[1, 1]) < 1e-15 and abs(abs(u[1, 2]) - 1) < 1e-15


# -- three-CX block synthesis -------------------------------------------------

def test_block_circuit_gate_content():
    ops = xxz_block_circuit(1, 1, 4)
    assert [op.kind for op in ops].count("cx") == 3
    assert len(ops) == 8


def test_block_circuit_operating_point():
    comp = compose_2q(xxz_block_circuit(1, 1, 4))
    assert np.max(np.abs(comp / CIRCUIT_PHASE - xxz_block_matrix(1, 1, 4))) <= 1e-12


def test_block_circuit_zero_time_is_phase():
    comp = compose_2q(xxz_block_circuit(1, 0.8, 0.0))
    np.testing.assert_allclose(comp, CIRCUIT_PHASE * np.eye(4), atol=1e-12)


def test_block_circuit_iswap_family():
    comp = compose_2q(xxz_block_circuit(1, 0.0, math.pi / 2))
    gen = (np.kron(X, X) + np.kron(Y, Y)) / 4
    np.testing.assert_allclose(comp * np.conj(CIRCUIT_PHASE), expm(-1j * (math.pi / 2) * gen), atol=1e-12)


def test_block_circuit_on_reversed_wires():
    # wires (j, k) = (1, 0): matrix acts on the ordered pair (1, 0)
    comp = compose_2q(xxz_block_circuit(1, 0.6, 2.5, j=2, k=0), j=2, k=0)
    np.testing.assert_allclose(comp * np.conj(CIRCUIT_PHASE), xxz_block_matrix(1, 0.6, 2.5), atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_block_circuit_state_fidelity(seed):
    rng = np.random.default_rng(seed)
    delta, tau = rng.uniform(0, 2), rng.uniform(1e-3, 6)
    u = xxz_block_matrix(1, delta, tau)
    circ = Circuit(2, xxz_block_circuit(1, delta, tau))
    for _ in range(20):
        psi = random_state(2, rng)
        out = run_circuit(circ, StateVector(2, psi.copy())).amplitudes
        ref = np.zeros(4, complex)
        # u is indexed with qubit 0 as the most significant factor
        perm = [0, 2, 1, 3]
        ref[perm] = u @ psi[perm]
        assert abs(np.vdot(ref, out)) ** 2 >= 1 - 1e-10


# -- random preparation --------------------------------------------------------

def test_cx_patterns():
    q = [1, 2, 3, 4, 5, 6]
    assert cx_pattern(q, "A") == [(1, 2), (3, 4), (5, 6)]
    assert cx_pattern(q, "B") == [(2, 3), (4, 5)]


def test_prep_never_repeats_previous_gate():
    violations = 0
    for seed in range(10_000):
        circ = random_prep_circuit(6, 5, seed)
        last: dict[int, str] = {}
        for ops in circ.layer_ops("prep"):
            for op in ops:
                if op.kind == "1q":
                    q = op.targets[0]
                    violations += last.get(q) == op.label
                    last[q] = op.label
    assert violations == 0


def test_prep_first_layer_uniform_and_later_uniform_over_two():
    rng = np.random.default_rng(1)
    ch = random_prep_choices(1, 60_000, rng)[:, 0]
    counts = np.bincount(ch, minlength=3) / ch.size
    np.testing.assert_allclose(counts, 1 / 3, atol=0.01)
    first = random_prep_choices(30_000, 1, rng)[0]
    np.testing.assert_allclose(np.bincount(first, minlength=3) / first.size, 1 / 3, atol=0.01)


@pytest.mark.parametrize("seed", [0, 1, 17, 2024])
def test_prep_leaves_probe_idle(seed):
    circ = random_prep_circuit(9, 12, seed)
    assert circ.gate_count(0) == 0
    assert all(op.label in PREP_GATES or op.label == "CX" for op in circ.ops)


def test_prep_idle_elsewhere():
    circ = random_prep_circuit(7, 4, 3, idle=3)
    assert circ.gate_count(3) == 0
    assert min(circ.gate_count(q) for q in range(7) if q != 3) > 0


def test_prep_deterministic_l21():
    a = random_prep_circuit(21, 20, 99)
    b = random_prep_circuit(21, 20, 99)
    assert dumps_circuit(a) == dumps_circuit(b)
    assert dumps_circuit(a) != dumps_circuit(random_prep_circuit(21, 20, 100))


def test_prep_patterns_alternate():
    circ = random_prep_circuit(8, 6, 5)
    pats = []
    for ops in circ.layer_ops("prep"):
        pats.append(tuple(op.targets for op in ops if op.kind == "cx"))
    assert all(pats[i] != pats[i + 1] for i in range(len(pats) - 1))
    assert pats[0] == ((1, 2), (3, 4), (5, 6))
    assert pats[1] == ((2, 3), (4, 5), (6, 7))


# -- Floquet circuits ----------------------------------------------------------

def test_floquet_zero_steps_empty():
    assert len(floquet_circuit(FloquetSpec(6), 0)) == 0


def test_floquet_clean_l4_structure():
    circ = floquet_circuit(FloquetSpec(4), 1)
    assert [op.targets for op in circ.ops] == [(0, 1), (2, 3), (1, 2)]


def test_floquet_staggered_structure():
    spec = FloquetSpec(5, staggered=True)
    circ = floquet_circuit(spec, 1)
    kinds = [op.kind for op in circ.ops]
    assert kinds == ["2q", "2q"] + ["1q"] * 5 + ["2q", "2q"]
    angles = field_angles(spec, spec.tau)
    np.testing.assert_allclose(angles, [1, -1, 1, -1, 1])
    for op, th in zip(circ.ops[2:7], angles):
        np.testing.assert_allclose(op.matrix, expm(-1j * th * Z), atol=1e-14)


def test_floquet_weave_prepends_short_layer():
    spec = FloquetSpec(4, weave_offsets=(1.5,))
    circ = floquet_circuit(spec, 2, weave_offset=1.5)
    assert [l.name for l in circ.layers] == ["weave", "trotter", "trotter"]
    np.testing.assert_allclose(circ.ops[0].matrix, xxz_block_matrix(1, 1, 1.5))
    with pytest.raises(ValidationError):
        floquet_circuit(spec, 1, weave_offset=4.0)


def test_floquet_matches_dense_product():
    spec = FloquetSpec(4, delta=0.7, tau=1.3, staggered=True)
    u = circuit_unitary(floquet_circuit(spec, 1))
    # independent build: dense Hamiltonian pieces exponentiated separately
    def two_site(a):
        out = np.zeros((16, 16), complex)
        for s, w in ((X, 1), (Y, 1), (Z, 0.7)):
            m = [np.eye(2)] * 4
            m[a], m[a + 1] = s, s
            # qubit j corresponds to bit j: kron order is q3 (x) q2 (x) q1 (x) q0
            out += w * _kron_rev(m)
        return out / 4
    def field():
        out = np.zeros((16, 16), complex)
        for j in range(4):
            m = [np.eye(2)] * 4
            m[j] = Z
            out += 0.5 * (-1) ** j * _kron_rev(m) / 2
        return out
    tau = 1.3
    even = expm(-1j * tau * (two_site(0) + two_site(2)))
    odd = expm(-1j * tau * two_site(1))
    ref = odd @ expm(-1j * tau * field()) @ even
    np.testing.assert_allclose(u, ref, atol=1e-12)


def _kron_rev(mats):
    out = np.array([[1.0 + 0j]])
    for m in reversed(mats):
        out = np.kron(out, m)
    return out


def test_decomposed_matches_native_up_to_phase():
    spec = FloquetSpec(5, staggered=True, tau=2.2)
    a = circuit_unitary(floquet_circuit(spec, 2))
    b = circuit_unitary(floquet_circuit(spec, 2, decompose=True))
    assert equal_up_to_phase(b, a, 1e-11)


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_magnetization_conserved(seed, staggered):
    rng = np.random.default_rng(seed)
    L = 6
    spec = FloquetSpec(L, delta=rng.uniform(0, 2), tau=rng.uniform(0.1, 6), staggered=staggered)
    s = StateVector(L, random_state(L, rng))
    m0 = sum(expectation_z(s, q) for q in range(L))
    run_circuit(floquet_circuit(spec, 3), s)
    assert sum(expectation_z(s, q) for q in range(L)) == pytest.approx(m0, abs=1e-8)


def test_spec_validation():
    with pytest.raises(ValidationError):
        FloquetSpec(1)
    with pytest.raises(ValidationError):
        FloquetSpec(4, tau=0)
    with pytest.raises(ValidationError):
        FloquetSpec(4, probe_site=4)
    with pytest.raises(ValidationError):
        FloquetSpec(4, weave_offsets=(4.5,))
    with pytest.raises(ValidationError):
        FloquetSpec(4, weave_offsets=(1, 1))


def test_fused_field_layer_equivalent():
    spec = FloquetSpec(5, staggered=True)
    circ = floquet_circuit(spec, 2)
    fused = fuse_field_layer(circ.ops, 5)
    assert len(fused) < len(circ.ops)
    psi = random_state(5, np.random.default_rng(4))
    a = run_circuit(circ, StateVector(5, psi.copy())).amplitudes
    b = run_circuit(Circuit(5, fused), StateVector(5, psi.copy())).amplitudes
    np.testing.assert_allclose(a, b, atol=1e-13)


# -- circuits and serialization ------------------------------------------------

def test_layers_must_tile():
    ops = [op_1q("X", 0), op_1q("X", 1)]
    with pytest.raises(ValidationError):
        Circuit(2, ops, [("prep", 0, 1)])
    with pytest.raises(ValidationError):
        Circuit(2, ops, [("prep", 1, 2)])
    with pytest.raises(ValidationError):
        Circuit(1, ops)


def test_inverse_undoes_circuit():
    circ = random_prep_circuit(5, 6, 8) + floquet_circuit(FloquetSpec(5, staggered=True), 2, decompose=True)
    u = circuit_unitary(circ + circ.inverse())
    np.testing.assert_allclose(u, np.eye(32), atol=1e-12)


def test_serialization_round_trip():
    circ = random_prep_circuit(5, 3, 1) + floquet_circuit(FloquetSpec(5, staggered=True, weave_offsets=(1.5,)), 2, 1.5, decompose=True)
    text = dumps_circuit(circ)
    back = loads_circuit(text)
    assert dumps_circuit(back) == text
    assert back.layers == circ.layers
    np.testing.assert_allclose(circuit_unitary(back), circuit_unitary(circ), atol=1e-13)


def test_golden_circuit_file():
    spec = FloquetSpec(4, staggered=True, weave_offsets=(1.0,))
    circ = random_prep_circuit(4, 2, 7) + floquet_circuit(spec, 1, 1.0, decompose=True)
    golden = (DATA / "golden_circuit.txt").read_text()
    assert dumps_circuit(circ) == golden
