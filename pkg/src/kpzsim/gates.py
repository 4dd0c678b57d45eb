"""Gate constants, XXZ Trotter blocks and circuit builders.

Circuits are immutable lists of :class:`GateOp` plus layer bookkeeping.  A
Floquet step is "even-pair blocks, then (optionally) the staggered-field
rotations, then odd-pair blocks", all at a common step ``tau`` measured in
units of 1/J.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Literal, NamedTuple, Sequence

import numpy as np

from .qstate import (
    StateVector,
    ValidationError,
    apply_1q_array,
    apply_2q_array,
    apply_diag_array,
)

I2 = np.eye(2, dtype=np.complex128)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}

# principal square roots: eigenphases (0, pi) -> (0, pi/2)
SQRT_X = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=np.complex128)
SQRT_Y = 0.5 * np.array([[1 + 1j, -1 - 1j], [1 + 1j, 1 + 1j]], dtype=np.complex128)
T_GATE = np.diag([1.0, np.exp(1j * np.pi / 4)]).astype(np.complex128)
CX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)

PREP_GATES = ("X^1/2", "Y^1/2", "T")

# the three-CX block circuit equals exp(+i pi/4) * exp(-i h tau)
CIRCUIT_PHASE = np.exp(1j * np.pi / 4)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)]).astype(np.complex128)


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


_FIXED = {"X^1/2": SQRT_X, "Y^1/2": SQRT_Y, "T": T_GATE, "X": X, "Y": Y, "Z": Z, "CX": CX, "I": I2}
_NAME_RE = re.compile(r"^(?P<name>[A-Za-z^/0-9]+?)(?:\((?P<args>[^)]*)\))?(?P<dag>†?)$")


def gate_matrix(name: str, *params: float) -> np.ndarray:
    """Matrix for a named gate.

    ``name`` is one of ``X^1/2, Y^1/2, T, X, Y, Z, CX, Rz, Ry, XXZ`` and may
    carry inline arguments (``"Rz(0.5)"``, ``"XXZ(1,1,4)"``) or a trailing
    dagger ``"†"``.  ``XXZ`` takes ``(J, delta, tau)``.
    """
    m = _NAME_RE.match(name.strip())
    if m is None:
        raise ValidationError(f"cannot parse gate name {name!r}")
    base = m.group("name")
    if m.group("args"):
        params = tuple(float(a) for a in m.group("args").split(",")) + tuple(params)
    if not all(math.isfinite(p) for p in params):
        raise ValidationError(f"non-finite gate parameter in {name!r}")
    if base in _FIXED and not params:
        mat = _FIXED[base]
    elif base == "Rz" and len(params) == 1:
        mat = rz(params[0])
    elif base == "Ry" and len(params) == 1:
        mat = ry(params[0])
    elif base == "XXZ" and len(params) == 3:
        mat = xxz_block_matrix(*params)
    else:
        raise ValidationError(f"unknown gate {name!r} with parameters {params}")
    mat = mat.copy()
    return mat.conj().T if m.group("dag") else mat


def xxz_block_matrix(J: float, delta: float, tau: float) -> np.ndarray:
    """Closed form of ``exp(-i tau (J/4)(XX + YY + delta ZZ))``.

    In the basis ``|00>, |01>, |10>, |11>`` the generator is diagonal on the
    fully polarized states and a ``2 sigma^x - delta`` block on ``{|01>, |10>}``.
    """
    for v in (J, delta, tau):
        if not math.isfinite(v):
            raise ValidationError("XXZ block parameters must be finite")
    a = J * tau / 4.0
    out = np.zeros((4, 4), dtype=np.complex128)
    out[0, 0] = out[3, 3] = np.exp(-1j * a * delta)
    ph = np.exp(1j * a * delta)
    out[1, 1] = out[2, 2] = ph * math.cos(2 * a)
    out[1, 2] = out[2, 1] = -1j * ph * math.sin(2 * a)
    return out


class GateOp(NamedTuple):
    """A single gate application.

    ``kind`` is ``"1q"``, ``"2q"`` (ordered pair) or ``"cx"`` (control, target).
    For ``"diag"`` ops ``matrix`` holds a length-``2**L`` phase vector and
    ``targets`` lists the qubits it touches; these are only produced by
    :func:`fuse_field_layer` and never serialized.
    """

    kind: Literal["1q", "2q", "cx", "diag"]
    targets: tuple[int, ...]
    matrix: np.ndarray
    label: str

    def dagger(self) -> "GateOp":
        label = self.label[:-1] if self.label.endswith("†") else self.label + "†"
        return GateOp(self.kind, self.targets, self.matrix.conj().T if self.kind != "diag" else self.matrix.conj(), label)


def op_1q(name: str, target: int, *params: float) -> GateOp:
    label = f"{name}({','.join(repr(float(p)) for p in params)})" if params else name
    return GateOp("1q", (target,), gate_matrix(name, *params), label)


def op_cx(control: int, target: int) -> GateOp:
    return GateOp("cx", (control, target), CX, "CX")


def op_xxz(q_a: int, q_b: int, J: float, delta: float, tau: float) -> GateOp:
    label = f"XXZ({float(J)!r},{float(delta)!r},{float(tau)!r})"
    return GateOp("2q", (q_a, q_b), xxz_block_matrix(J, delta, tau), label)


class Layer(NamedTuple):
    name: str  # "prep", "weave" or "trotter"
    start: int
    stop: int


@dataclass(frozen=True)
class Circuit:
    """Ordered gate list on ``n_qubits`` with named contiguous layers."""

    n_qubits: int
    ops: tuple[GateOp, ...] = ()
    layers: tuple[Layer, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "layers", tuple(Layer(*l) for l in self.layers))
        pos = 0
        for layer in self.layers:
            if layer.start != pos or layer.stop < layer.start:
                raise ValidationError(f"layers must tile the op list contiguously, got {self.layers}")
            pos = layer.stop
        if self.layers and pos != len(self.ops):
            raise ValidationError("layers do not cover every op")
        for op in self.ops:
            if any(not 0 <= q < self.n_qubits for q in op.targets):
                raise ValidationError(f"op {op.label} targets {op.targets} outside {self.n_qubits} qubits")

    def __len__(self) -> int:
        return len(self.ops)

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise ValidationError("cannot concatenate circuits of different width")
        shift = len(self.ops)
        layers = self.layers + tuple(Layer(l.name, l.start + shift, l.stop + shift) for l in other.layers)
        return Circuit(self.n_qubits, self.ops + other.ops, layers)

    def layer_ops(self, name: str | None = None) -> list[tuple[GateOp, ...]]:
        return [self.ops[l.start : l.stop] for l in self.layers if name is None or l.name == name]

    def gate_count(self, qubit: int) -> int:
        return sum(qubit in op.targets for op in self.ops)

    def inverse(self) -> "Circuit":
        ops = tuple(op.dagger() for op in reversed(self.ops))
        n = len(ops)
        layers = tuple(Layer(l.name, n - l.stop, n - l.start) for l in reversed(self.layers))
        return Circuit(self.n_qubits, ops, layers)

    def fingerprint(self) -> str:
        return hashlib.sha256(dumps_circuit(self).encode()).hexdigest()[:16]


def apply_op_array(psi: np.ndarray, op: GateOp, n_qubits: int) -> np.ndarray:
    if op.kind == "1q":
        return apply_1q_array(psi, op.matrix, op.targets[0], n_qubits)
    if op.kind in ("2q", "cx"):
        return apply_2q_array(psi, op.matrix, op.targets[0], op.targets[1], n_qubits)
    return apply_diag_array(psi, op.matrix)


def run_circuit(circuit: Circuit, state: StateVector | None = None) -> StateVector:
    """Apply every op of ``circuit`` to ``state`` (default ``|0...0>``) in place."""
    if state is None:
        amps = np.zeros(1 << circuit.n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        state = StateVector(circuit.n_qubits, amps)
    if state.n_qubits != circuit.n_qubits:
        raise ValidationError("state and circuit widths differ")
    for op in circuit.ops:
        apply_op_array(state.amplitudes, op, circuit.n_qubits)
    return state


def run_ops_array(psi: np.ndarray, ops: Iterable[GateOp], n_qubits: int) -> np.ndarray:
    for op in ops:
        apply_op_array(psi, op, n_qubits)
    return psi


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Dense matrix of a small circuit (columns are images of basis states)."""
    dim = 1 << circuit.n_qubits
    psi = np.eye(dim, dtype=np.complex128)
    return run_ops_array(psi, circuit.ops, circuit.n_qubits)


# --------------------------------------------------------------------------
# XXZ block synthesis


def xxz_block_circuit(J: float, delta: float, tau: float, j: int = 0, k: int = 1) -> list[GateOp]:
    """Three-CX realization of the XXZ block on wires ``j`` (top) and ``k``.

    The composed matrix equals ``CIRCUIT_PHASE * xxz_block_matrix(J, delta, tau)``
    on the ordered pair ``(j, k)``.
    """
    theta = delta * J * tau / 2 - math.pi / 2
    phi = J * tau / 2 - math.pi / 2
    return [
        op_1q("Rz", k, math.pi / 2),
        op_cx(k, j),
        op_1q("Rz", j, theta),
        op_1q("Ry", k, phi),
        op_cx(j, k),
        op_1q("Ry", k, -phi),
        op_cx(k, j),
        op_1q("Rz", j, -math.pi / 2),
    ]


def compose_2q(ops: Sequence[GateOp], j: int = 0, k: int = 1) -> np.ndarray:
    """4x4 matrix of ``ops`` acting on the ordered pair ``(j, k)``."""
    n = max(max(op.targets) for op in ops) + 1
    n = max(n, j + 1, k + 1)
    full = circuit_unitary(Circuit(n, ops))
    # restrict to the (j, k) subspace with every other qubit in |0>
    idx = [(a << j) | (b << k) for a in (0, 1) for b in (0, 1)]
    return full[np.ix_(idx, idx)]


# --------------------------------------------------------------------------
# Random state preparation


def cx_pattern(qubits: Sequence[int], pattern: Literal["A", "B"]) -> list[tuple[int, int]]:
    """Brickwork CX pairs over the ordered chain ``qubits``.

    Pattern A pairs positions (0,1), (2,3), ...; pattern B pairs (1,2), (3,4), ...
    The control is the lower qubit index of each pair.
    """
    start = 0 if pattern == "A" else 1
    pairs = []
    for p in range(start, len(qubits) - 1, 2):
        a, b = qubits[p], qubits[p + 1]
        pairs.append((min(a, b), max(a, b)))
    return pairs


def random_prep_choices(n_random: int, layers: int, rng: np.random.Generator) -> np.ndarray:
    """Gate indices into ``PREP_GATES`` with no qubit repeating its previous gate."""
    out = np.empty((layers, n_random), dtype=np.int64)
    out[0] = rng.integers(0, 3, size=n_random)
    for n in range(1, layers):
        # shift 1 or 2 picks uniformly from the two gates != previous
        out[n] = (out[n - 1] + rng.integers(1, 3, size=n_random)) % 3
    return out


def random_prep_circuit(
    n_qubits: int,
    layers: int,
    seed: int | np.random.SeedSequence | None,
    idle: int = 0,
) -> Circuit:
    """Pseudo-random preparation circuit leaving qubit ``idle`` untouched.

    Each layer is one random single-qubit gate per active qubit followed by a
    CX brickwork layer, alternating patterns A and B.
    """
    if layers < 1:
        raise ValidationError("layers must be >= 1")
    if n_qubits < 2:
        raise ValidationError("need at least 2 qubits")
    if not 0 <= idle < n_qubits:
        raise IndexError(f"idle qubit {idle} out of range")
    rng = np.random.default_rng(seed)
    active = [q for q in range(n_qubits) if q != idle]
    choices = random_prep_choices(len(active), layers, rng)
    ops: list[GateOp] = []
    marks: list[Layer] = []
    for n in range(layers):
        start = len(ops)
        for q, g in zip(active, choices[n]):
            ops.append(op_1q(PREP_GATES[g], q))
        for c, t in cx_pattern(active, "A" if n % 2 == 0 else "B"):
            ops.append(op_cx(c, t))
        marks.append(Layer("prep", start, len(ops)))
    return Circuit(n_qubits, ops, marks)


# --------------------------------------------------------------------------
# Floquet evolution


@dataclass(frozen=True)
class FloquetSpec:
    """Physical parameters of a discrete-time XXZ run (times in units of 1/J)."""

    n_qubits: int
    delta: float = 1.0
    tau: float = 4.0
    J: float = 1.0
    staggered: bool = False
    stagger_strength: float = 0.5  # field amplitude in units of J
    probe_site: int = 0
    prep_layers: int = 20
    weave_offsets: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "weave_offsets", tuple(float(w) for w in self.weave_offsets))
        if self.n_qubits < 2:
            raise ValidationError("n_qubits must be >= 2")
        if not self.tau > 0:
            raise ValidationError("tau must be > 0")
        if not 0 <= self.probe_site < self.n_qubits:
            raise ValidationError(f"probe_site {self.probe_site} outside chain of {self.n_qubits}")
        if self.prep_layers < 1:
            raise ValidationError("prep_layers must be >= 1")
        for w in self.weave_offsets:
            if not 0 < w < self.tau:
                raise ValidationError(f"weave offset {w} must lie in (0, tau={self.tau})")
        if len(set(self.weave_offsets)) != len(self.weave_offsets):
            raise ValidationError("duplicate weave offsets")

    def fingerprint(self) -> str:
        """Hash of the physics, excluding weave offsets and prep depth."""
        key = (
            f"L={self.n_qubits};J={self.J!r};delta={self.delta!r};tau={self.tau!r};"
            f"staggered={self.staggered};h={self.stagger_strength!r};probe={self.probe_site}"
        )
        return hashlib.sha256(key.encode()).hexdigest()[:16]


def field_angles(spec: FloquetSpec, tau: float) -> np.ndarray:
    """Rotation angles theta_j of exp(-i theta_j sigma^z_j) for one step of length ``tau``.

    The field ``h sum_l (-1)^l S^z_l`` with ``h = stagger_strength * J`` gives
    ``theta_j = (h tau / 2)(-1)^j``; the default ``h = J/2`` yields ``J tau/4``.
    """
    h = spec.stagger_strength * spec.J
    return np.array([(h * tau / 2) * (-1) ** j for j in range(spec.n_qubits)])


def trotter_layer_ops(spec: FloquetSpec, tau: float, decompose: bool = False) -> list[GateOp]:
    L = spec.n_qubits
    ops: list[GateOp] = []

    def block(a: int, b: int) -> None:
        if decompose:
            ops.extend(xxz_block_circuit(spec.J, spec.delta, tau, a, b))
        else:
            ops.append(op_xxz(a, b, spec.J, spec.delta, tau))

    for a in range(0, L - 1, 2):
        block(a, a + 1)
    if spec.staggered:
        for j, theta in enumerate(field_angles(spec, tau)):
            # exp(-i theta Z) == Rz(2 theta)
            ops.append(op_1q("Rz", j, 2 * theta))
    for a in range(1, L - 1, 2):
        block(a, a + 1)
    return ops


def floquet_circuit(
    spec: FloquetSpec,
    n_steps: int,
    weave_offset: float | None = None,
    decompose: bool = False,
) -> Circuit:
    """Circuit for ``n_steps`` Floquet layers, optionally preceded by one layer at ``weave_offset``.

    ``decompose=True`` emits every XXZ block as its three-CX circuit; the
    resulting global phase is left uncorrected.
    """
    if n_steps < 0:
        raise ValidationError("n_steps must be >= 0")
    ops: list[GateOp] = []
    layers: list[Layer] = []
    if weave_offset is not None:
        if not 0 < weave_offset < spec.tau:
            raise ValidationError(f"weave offset {weave_offset} must lie in (0, tau)")
        ops.extend(trotter_layer_ops(spec, weave_offset, decompose))
        layers.append(Layer("weave", 0, len(ops)))
    step = trotter_layer_ops(spec, spec.tau, decompose)
    for _ in range(n_steps):
        start = len(ops)
        ops.extend(step)
        layers.append(Layer("trotter", start, len(ops)))
    return Circuit(spec.n_qubits, ops, layers)


def fuse_field_layer(ops: Sequence[GateOp], n_qubits: int) -> list[GateOp]:
    """Merge runs of single-qubit diagonal Rz ops into one diagonal phase op.

    Used only inside hot loops; the resulting op list is not serializable.
    """
    out: list[GateOp] = []
    run: list[GateOp] = []

    def flush() -> None:
        if len(run) <= 1:
            out.extend(run)
        else:
            idx = np.arange(1 << n_qubits)
            diag = np.ones(1 << n_qubits, dtype=np.complex128)
            for op in run:
                bit = (idx >> op.targets[0]) & 1
                diag *= np.where(bit, op.matrix[1, 1], op.matrix[0, 0])
            targets = tuple(sorted({op.targets[0] for op in run}))
            out.append(GateOp("diag", targets, diag, "+".join(op.label for op in run)))
        run.clear()

    for op in ops:
        if op.kind == "1q" and op.label.startswith("Rz") and not op.label.endswith("†"):
            run.append(op)
        else:
            flush()
            out.append(op)
    flush()
    return out


# --------------------------------------------------------------------------
# Text serialization: one gate per line, "<kind> <label> <targets>"


def dumps_circuit(circuit: Circuit) -> str:
    lines = [f"# qubits {circuit.n_qubits}"]
    for l in circuit.layers:
        lines.append(f"# layer {l.name} {l.start} {l.stop}")
    for op in circuit.ops:
        if op.kind == "diag":
            raise ValidationError("fused diagonal ops cannot be serialized")
        lines.append(f"{op.kind} {op.label} {','.join(str(q) for q in op.targets)}")
    return "\n".join(lines) + "\n"


def loads_circuit(text: str) -> Circuit:
    n_qubits = None
    layers: list[Layer] = []
    ops: list[GateOp] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[0] == "qubits":
                n_qubits = int(parts[1])
            elif parts[0] == "layer":
                layers.append(Layer(parts[1], int(parts[2]), int(parts[3])))
            continue
        kind, label, targets = line.split()
        tq = tuple(int(t) for t in targets.split(","))
        ops.append(GateOp(kind, tq, gate_matrix(label), label))  # type: ignore[arg-type]
    if n_qubits is None:
        raise ValidationError("missing '# qubits' header")
    return Circuit(n_qubits, ops, layers)
