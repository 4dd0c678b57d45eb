"""Dense statevector substrate.

Bit convention: qubit ``j`` addresses bit ``j`` of the integer basis label, so
``index = sum(bit_j << j)``.  A bitstring ``"b0 b1 ... b_{L-1}"`` lists qubit 0
first.  Two-qubit matrices act on the ordered pair ``(q_a, q_b)`` with ``q_a``
as the most significant factor, i.e. ``kron(A, B)`` puts ``A`` on ``q_a``.

The array kernels (``apply_1q_array`` and friends) accept either a single
amplitude vector of shape ``(2**L,)`` or a batch of shape ``(2**L, B)`` whose
columns are evolved together.  They mutate their input.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 30
UNITARY_TOL = 1e-12


class CapacityError(ValueError):
    """Requested problem size exceeds a configured memory/time cap."""


class ValidationError(ValueError):
    """Input fails a structural or numerical contract."""


def _check_unitary(u: np.ndarray, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (dim, dim):
        raise ValidationError(f"expected a {dim}x{dim} matrix, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValidationError("matrix has non-finite entries")
    dev = np.abs(u.conj().T @ u - np.eye(dim)).max()
    if dev > UNITARY_TOL:
        raise ValidationError(f"matrix is not unitary (max |U^dag U - 1| = {dev:.3e})")
    return u


def _check_qubit(q: int, n_qubits: int) -> int:
    if not 0 <= q < n_qubits:
        raise IndexError(f"qubit {q} out of range for {n_qubits} qubits")
    return int(q)


def apply_1q_array(psi: np.ndarray, u: np.ndarray, target: int, n_qubits: int) -> np.ndarray:
    """Apply a 2x2 matrix to ``target`` of ``psi`` in place and return ``psi``."""
    lo = 1 << target
    view = psi.reshape(1 << (n_qubits - 1 - target), 2, lo, -1)
    v0 = view[:, 0].copy()
    v1 = view[:, 1]
    view[:, 0] = u[0, 0] * v0 + u[0, 1] * v1
    view[:, 1] = u[1, 0] * v0 + u[1, 1] * v1
    return psi


def apply_2q_array(psi: np.ndarray, u: np.ndarray, q_a: int, q_b: int, n_qubits: int) -> np.ndarray:
    """Apply a 4x4 matrix to the ordered pair ``(q_a, q_b)`` in place."""
    hi, lo = (q_a, q_b) if q_a > q_b else (q_b, q_a)
    view = psi.reshape(1 << (n_qubits - 1 - hi), 2, 1 << (hi - lo - 1), 2, 1 << lo, -1)
    # axes of the matrix index: (bit q_a, bit q_b)
    perm = (1, 3, 0, 2, 4, 5) if q_a == hi else (3, 1, 0, 2, 4, 5)
    block = view.transpose(perm)
    out = (u @ block.reshape(4, -1)).reshape(block.shape)
    block[...] = out
    return psi


def apply_diag_array(psi: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """Multiply by a diagonal operator given as a length-``2**L`` vector."""
    if psi.ndim == 1:
        psi *= diag
    else:
        psi *= diag[:, None]
    return psi


def z_signs(site: int, n_qubits: int) -> np.ndarray:
    """Eigenvalues of sigma^z on ``site`` for every basis index (+1 for bit 0)."""
    idx = np.arange(1 << n_qubits)
    return 1.0 - 2.0 * ((idx >> site) & 1)


@dataclass
class StateVector:
    """Normalized amplitude vector for ``n_qubits`` qubits.

    Operations in this module mutate ``amplitudes`` in place and also return
    the state, so calls can be chained.
    """

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise CapacityError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValidationError(
                f"amplitude array must have length 2**{self.n_qubits}, got {self.amplitudes.shape}"
            )

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    @classmethod
    def from_amplitudes(cls, amplitudes: np.ndarray, normalize: bool = False) -> "StateVector":
        amplitudes = np.asarray(amplitudes, dtype=np.complex128)
        n = int(round(np.log2(amplitudes.size)))
        if normalize:
            amplitudes = amplitudes / np.linalg.norm(amplitudes)
        return cls(n, amplitudes)


def basis_index(bits: str) -> int:
    """Integer label of a bitstring listed qubit 0 first."""
    return sum(1 << j for j, b in enumerate(bits) if b == "1")


def index_bits(index: int, n_qubits: int) -> str:
    return "".join("1" if (index >> j) & 1 else "0" for j in range(n_qubits))


def new_basis_state(n_qubits: int, bits: str | None = None) -> StateVector:
    """Computational basis state; ``bits`` defaults to all zeros."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise CapacityError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    if bits is None:
        bits = "0" * n_qubits
    if len(bits) != n_qubits or set(bits) - {"0", "1"}:
        raise ValidationError(f"bits must be a 0/1 string of length {n_qubits}, got {bits!r}")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[basis_index(bits)] = 1.0
    return StateVector(n_qubits, amps)


def apply_1q(state: StateVector, u: np.ndarray, target: int) -> StateVector:
    u = _check_unitary(u, 2)
    _check_qubit(target, state.n_qubits)
    apply_1q_array(state.amplitudes, u, target, state.n_qubits)
    return state


def apply_2q(state: StateVector, u: np.ndarray, q_a: int, q_b: int) -> StateVector:
    u = _check_unitary(u, 4)
    _check_qubit(q_a, state.n_qubits)
    _check_qubit(q_b, state.n_qubits)
    if q_a == q_b:
        raise IndexError(f"two-qubit gate needs distinct qubits, got ({q_a}, {q_b})")
    apply_2q_array(state.amplitudes, u, q_a, q_b, state.n_qubits)
    return state


def expectation_z(state: StateVector, site: int) -> float:
    """<sigma^z_site>; halve it for S^z."""
    _check_qubit(site, state.n_qubits)
    probs = np.abs(state.amplitudes) ** 2
    view = probs.reshape(1 << (state.n_qubits - 1 - site), 2, 1 << site)
    return float(view[:, 0].sum() - view[:, 1].sum())


def normalized_z(prob: np.ndarray, site: int, n_qubits: int) -> np.ndarray | float:
    """``(p0 - p1) / (p0 + p1)`` for qubit ``site`` from probabilities of shape ``(2**L,)`` or ``(2**L, B)``.

    Summing the two halves separately keeps the result exactly 1 when the
    site is untouched, whatever the rounding in the rest of the vector.
    """
    view = prob.reshape((1 << (n_qubits - 1 - site), 2, 1 << site) + prob.shape[1:])
    p0 = view[:, 0].sum(axis=(0, 1))
    p1 = view[:, 1].sum(axis=(0, 1))
    return (p0 - p1) / (p0 + p1)


def bipartite_entropy(state: StateVector, cut: int) -> float:
    """Von Neumann entropy (nats) of qubits ``[0, cut)``.

    Computed from the singular values of the amplitude vector reshaped to a
    ``2**(L-cut) x 2**cut`` matrix (rows: high qubits, columns: low qubits).
    """
    n = state.n_qubits
    if not 1 <= cut <= n - 1:
        raise IndexError(f"cut must be in [1, {n - 1}], got {cut}")
    mat = state.amplitudes.reshape(1 << (n - cut), 1 << cut)
    s = np.linalg.svd(mat, compute_uv=False)
    p = s**2
    p = p[p > 1e-300]
    p = p / p.sum()
    return float(max(0.0, -np.sum(p * np.log(p))))


def sample_bitstrings(
    state: StateVector,
    shots: int,
    readout_flip: float = 0.0,
    seed: int | np.random.SeedSequence | None = 0,
) -> list[str]:
    """Draw ``shots`` measurement outcomes, flipping each bit with ``readout_flip``."""
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    if not 0.0 <= readout_flip <= 1.0:
        raise ValidationError("readout_flip must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    outcomes = sample_indices(state, shots, readout_flip, rng)
    return [index_bits(int(i), state.n_qubits) for i in outcomes]


def sample_indices(
    state: StateVector, shots: int, readout_flip: float, rng: np.random.Generator
) -> np.ndarray:
    """Same draws as :func:`sample_bitstrings` but as integer labels."""
    probs = np.abs(state.amplitudes) ** 2
    probs = probs / probs.sum()
    outcomes = rng.choice(state.dim, size=shots, p=probs)
    if readout_flip > 0.0:
        flips = rng.random((shots, state.n_qubits)) < readout_flip
        masks = (flips * (1 << np.arange(state.n_qubits))).sum(axis=1)
        outcomes = outcomes ^ masks
    return outcomes


def bitstring_counts(samples: list[str]) -> Counter:
    return Counter(samples)


def site_magnetization(samples: list[str]) -> np.ndarray:
    """Per-site sampled <sigma^z_j> from a list of bitstrings."""
    bits = np.array([[c == "1" for c in s] for s in samples], dtype=float)
    return 1.0 - 2.0 * bits.mean(axis=0)
