"""Pauli noise trajectories, unitary folding and exponential zero-noise extrapolation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .gates import (
    PAULIS,
    Circuit,
    FloquetSpec,
    Layer,
    floquet_circuit,
    random_prep_circuit,
    run_circuit,
    run_ops_array,
)
from .qstate import StateVector, ValidationError, apply_1q_array, normalized_z
from .typicality import CorrelatorSeries, _ordered_map, _seed_for, strand_times, weave_merge

_PAULI_SEQ = (PAULIS["I"], PAULIS["X"], PAULIS["Y"], PAULIS["Z"])


@dataclass(frozen=True)
class NoiseModel:
    """Stochastic Pauli noise inserted after gates plus symmetric readout flips.

    After every two-qubit gate (including CX) a uniformly random non-identity
    two-qubit Pauli is applied with probability ``two_qubit_pauli_p``; after
    every single-qubit gate one of X, Y, Z with ``one_qubit_pauli_p``.
    """

    two_qubit_pauli_p: float = 0.0
    one_qubit_pauli_p: float = 0.0
    readout_flip: float = 0.0

    def __post_init__(self) -> None:
        for name in ("two_qubit_pauli_p", "one_qubit_pauli_p", "readout_flip"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")

    @property
    def noiseless(self) -> bool:
        return self.two_qubit_pauli_p == self.one_qubit_pauli_p == self.readout_flip == 0.0


@dataclass(frozen=True)
class ZNEPoint:
    lam: float
    value: float
    std_err: float = 0.0
    f: int | None = None
    s: int | None = None


@dataclass(frozen=True)
class ZNEFit:
    value_at_zero: float
    a: float
    b: float
    c: float
    residual_norm: float
    method: str  # "loglinear", "nonlinear" or "constant"

    def predict(self, lam: np.ndarray | float) -> np.ndarray:
        return self.a + self.b * np.exp(-self.c * np.asarray(lam, dtype=float))


# --------------------------------------------------------------------------
# Trajectories


def _prep_mask(circuit: Circuit) -> np.ndarray:
    mask = np.zeros(len(circuit.ops), dtype=bool)
    for layer in circuit.layers:
        if layer.name == "prep":
            mask[layer.start : layer.stop] = True
    return mask


def _insert_paulis(psi, qubits, choice, cols, n_qubits):
    """Apply Pauli ``choice[c]`` (base-4 digits per qubit) to columns ``cols``."""
    for pos, q in enumerate(qubits):
        digit = (choice // 4 ** (len(qubits) - 1 - pos)) % 4
        for p in (1, 2, 3):
            sel = cols[digit == p]
            if sel.size:
                sub = psi[:, sel]
                apply_1q_array(sub, _PAULI_SEQ[p], q, n_qubits)
                psi[:, sel] = sub


def noisy_trajectories(
    circuit: Circuit,
    observable_site: int,
    noise: NoiseModel,
    trajectories: int,
    seed: int | np.random.SeedSequence | None = 0,
    initial_state: StateVector | None = None,
    noisy_prep: bool = True,
    batch: int = 4096,
) -> np.ndarray:
    """Per-trajectory ``<sigma^z>`` (readout flips folded in as ``1 - 2 r``)."""
    if trajectories < 1:
        raise ValidationError("trajectories must be >= 1")
    L = circuit.n_qubits
    if not 0 <= observable_site < L:
        raise IndexError(f"observable site {observable_site} out of range")
    if initial_state is None:
        psi0 = np.zeros(1 << L, dtype=np.complex128)
        psi0[0] = 1.0
    else:
        if initial_state.n_qubits != L:
            raise ValidationError("initial state width differs from circuit")
        psi0 = initial_state.amplitudes
    quiet = _prep_mask(circuit) if not noisy_prep else np.zeros(len(circuit.ops), dtype=bool)
    rng = np.random.default_rng(seed)
    p1, p2 = noise.one_qubit_pauli_p, noise.two_qubit_pauli_p
    out = np.empty(trajectories)
    for start in range(0, trajectories, batch):
        B = min(batch, trajectories - start)
        psi = np.repeat(psi0[:, None], B, axis=1)
        for k, op in enumerate(circuit.ops):
            run_ops_array(psi, (op,), L)
            if quiet[k] or op.kind == "diag":
                continue
            nq = len(op.targets)
            p = p2 if nq == 2 else p1
            if p == 0.0:
                continue
            hit = np.nonzero(rng.random(B) < p)[0]
            if hit.size == 0:
                continue
            choice = rng.integers(1, 4**nq, size=hit.size)
            _insert_paulis(psi, op.targets, choice, hit, L)
        out[start : start + B] = normalized_z(np.abs(psi) ** 2, observable_site, L)
    return out * (1.0 - 2.0 * noise.readout_flip)


def noisy_expectation(
    circuit: Circuit,
    observable_site: int,
    noise: NoiseModel,
    trajectories: int,
    seed: int | np.random.SeedSequence | None = 0,
    initial_state: StateVector | None = None,
    noisy_prep: bool = True,
) -> tuple[float, float]:
    """Trajectory average of ``<sigma^z_site>`` and its standard error."""
    z = noisy_trajectories(
        circuit, observable_site, noise, trajectories, seed, initial_state, noisy_prep
    )
    err = float(z.std(ddof=1) / math.sqrt(z.size)) if z.size > 1 else 0.0
    return float(z.mean()), err


# --------------------------------------------------------------------------
# Folding


def noise_factor(f: int, s: int, m: int) -> float:
    return 2 * f + 1 + 2 * s / m


def fold_circuit(circuit: Circuit, f: int, s: int) -> tuple[Circuit, float]:
    """Fold the non-prep part ``U`` as ``U (U^dag U)^f`` then partially fold its last ``s`` layers.

    Prep layers are copied unchanged.  Returns the folded circuit and its
    noise factor ``2f + 1 + 2s/m`` with ``m`` the number of simulation layers.
    """
    if f < 0:
        raise ValidationError("f must be >= 0")
    prep = [l for l in circuit.layers if l.name == "prep"]
    sim = [l for l in circuit.layers if l.name != "prep"]
    if any(l.start < p.stop for l in sim for p in prep):
        raise ValidationError("prep layers must precede the simulation layers")
    m = len(sim)
    if m == 0:
        raise ValidationError("circuit has no marked simulation layers to fold")
    if not 0 <= s <= m:
        raise ValidationError(f"s must lie in [0, {m}], got {s}")
    ops = list(circuit.ops[: prep[-1].stop]) if prep else []
    layers = list(prep)

    def emit(name: str, layer_ops) -> None:
        start = len(ops)
        ops.extend(layer_ops)
        layers.append(Layer(name, start, len(ops)))

    fwd = [circuit.ops[l.start : l.stop] for l in sim]
    back = [tuple(op.dagger() for op in reversed(block)) for block in fwd]
    names = [l.name for l in sim]
    for i, block in enumerate(fwd):
        emit(names[i], block)
    for _ in range(f):
        for i in reversed(range(m)):
            emit("fold", back[i])
        for i in range(m):
            emit(names[i], fwd[i])
    for i in reversed(range(m - s, m)):
        emit("fold", back[i])
    for i in range(m - s, m):
        emit(names[i], fwd[i])
    return Circuit(circuit.n_qubits, ops, layers), noise_factor(f, s, m)


def fold_settings(m: int, lambdas: Sequence[float]) -> list[tuple[int, int]]:
    """Closest achievable ``(f, s)`` for each target noise factor, deduplicated."""
    if m < 1:
        raise ValidationError("m must be >= 1")
    out: list[tuple[int, int]] = []
    for lam in lambdas:
        if lam < 1:
            raise ValidationError(f"noise factor must be >= 1, got {lam}")
        f = int((lam - 1) // 2)
        s = int(math.floor((lam - 1 - 2 * f) * m / 2 + 0.5))
        if s >= m:  # (f, m) and (f + 1, 0) share a factor; keep the full fold
            f, s = f + 1, s - m
        if (f, s) not in out:
            out.append((f, s))
    return sorted(out, key=lambda fs: noise_factor(*fs, m))


# --------------------------------------------------------------------------
# Extrapolation


def _nonlinear(lam, val, w, pinned, a0, b0, c0):
    if pinned:
        x0 = [b0, c0]
        resid = lambda x: w * (x[0] * np.exp(-x[1] * lam) - val)
    else:
        x0 = [a0, b0, c0]
        resid = lambda x: w * (x[0] + x[1] * np.exp(-x[2] * lam) - val)
    sol = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    x = sol.x
    return (0.0, x[0], x[1]) if pinned else (x[0], x[1], x[2])


def zne_fit(points: Sequence[ZNEPoint], pin_asymptote: bool = True, weighted: bool = False) -> ZNEFit:
    """Fit ``E(lam) = a + b exp(-c lam)`` (``a = 0`` when pinned) and evaluate at 0.

    ``weighted`` scales residuals by ``1/std_err`` (log-space weights
    ``|value|/std_err`` on the log-linear path); it needs every ``std_err > 0``.
    """
    lam = np.array([p.lam for p in points], dtype=float)
    val = np.array([p.value for p in points], dtype=float)
    err = np.array([p.std_err for p in points], dtype=float)
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(val))):
        raise ValidationError("noise factors and values must be finite")
    if weighted and not np.all(err > 0):
        raise ValidationError("weighted fit needs positive, finite std_err on every point")
    n_distinct = np.unique(lam).size
    need = 2 if pin_asymptote else 3
    if n_distinct < need:
        raise ValidationError(f"need >= {need} distinct noise factors, got {n_distinct}")
    order = np.argsort(lam, kind="stable")
    lam, val, err = lam[order], val[order], err[order]
    w = 1.0 / err if weighted else np.ones_like(val)

    if np.ptp(val) <= 1e-14 * max(1.0, abs(val[0])):
        return ZNEFit(float(val[0]), 0.0, float(val[0]), 0.0, 0.0, "constant")

    if pin_asymptote:
        signs = np.sign(val)
        if np.all(signs == signs[0]) and signs[0] != 0:
            slope, intercept = np.polyfit(lam, np.log(np.abs(val)), 1, w=np.abs(val) * w if weighted else None)
            a, b, c = 0.0, float(signs[0] * math.exp(intercept)), float(-slope)
            method = "loglinear"
        else:
            b0 = val[0]
            c0 = 0.0
            if val[1] * val[0] > 0 and lam[1] > lam[0]:
                c0 = -math.log(val[1] / val[0]) / (lam[1] - lam[0])
            a, b, c = _nonlinear(lam, val, w, True, 0.0, b0, c0)
            method = "nonlinear"
    else:
        a0 = 0.0
        b0 = val[0]
        c0 = 1.0
        if val[1] * val[0] > 0 and val[1] != val[0]:
            c0 = abs(math.log(abs(val[1] / val[0]))) / (lam[1] - lam[0]) or 1.0
        a, b, c = _nonlinear(lam, val, w, False, a0, b0, c0)
        method = "nonlinear"
    resid = a + b * np.exp(-c * lam) - val
    return ZNEFit(float(a + b), float(a), float(b), float(c), float(np.linalg.norm(resid)), method)


def zne_uncertainty(points: Sequence[ZNEPoint], pin_asymptote: bool = True, weighted: bool = False) -> float:
    """Linearized propagation of the points' standard errors into ``E(0)``."""
    base = zne_fit(points, pin_asymptote, weighted).value_at_zero
    var = 0.0
    for i, p in enumerate(points):
        if p.std_err <= 0:
            continue
        h = max(1e-7, 1e-4 * p.std_err)
        bumped = list(points)
        bumped[i] = ZNEPoint(p.lam, p.value + h, p.std_err, p.f, p.s)
        deriv = (zne_fit(bumped, pin_asymptote, weighted).value_at_zero - base) / h
        var += (deriv * p.std_err) ** 2
    return math.sqrt(var)


def zne_csv(points: Sequence[ZNEPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "value", "std_err", "f", "s"])
    for p in points:
        w.writerow([repr(float(p.lam)), repr(float(p.value)), repr(float(p.std_err)), p.f, p.s])
    return buf.getvalue()


def read_zne_csv(text: str) -> list[ZNEPoint]:
    rows = csv.DictReader(io.StringIO(text))
    return [
        ZNEPoint(float(r["lambda"]), float(r["value"]), float(r["std_err"]), int(r["f"]), int(r["s"]))
        for r in rows
    ]


# --------------------------------------------------------------------------
# Noisy correlator pipeline


@dataclass
class ZNECorrelator:
    """Outputs of :func:`zne_correlator`: mitigated, unmitigated and noiseless series."""

    mitigated: CorrelatorSeries
    unmitigated: CorrelatorSeries
    noiseless: CorrelatorSeries
    points: dict[float, list[ZNEPoint]]


def zne_correlator(
    spec: FloquetSpec,
    n_max: int,
    noise: NoiseModel,
    lambdas: Sequence[float] = (1.0, 1.5, 2.0, 2.5, 3.0),
    realizations: int = 4,
    trajectories: int = 1000,
    seed: int = 0,
    noisy_prep: bool = False,
    decompose: bool = False,
    workers: int = 1,
    weighted_fit: bool = True,
) -> ZNECorrelator:
    """Typicality correlator under Pauli noise with exponential ZNE at every time point.

    The same random preparation states feed the noiseless reference, so the
    comparison measures mitigation quality rather than typicality error.
    ``decompose`` selects three-CX blocks instead of native two-qubit XXZ
    gates (noise then strikes after every CX).  ``weighted_fit`` uses the
    trajectory standard errors as fit weights whenever all are positive.
    """
    if realizations < 1 or trajectories < 1:
        raise ValidationError("realizations and trajectories must be >= 1")
    L = spec.n_qubits
    site = spec.probe_site
    prep_circuits = [
        random_prep_circuit(L, spec.prep_layers, _seed_for(seed, r).spawn(2)[0], idle=site)
        for r in range(realizations)
    ]
    states = [run_circuit(c) for c in prep_circuits]

    def evaluate(job):
        offset, n, r = job
        circ = floquet_circuit(spec, n, offset, decompose=decompose)
        if noisy_prep:
            circ = prep_circuits[r] + circ
            init = None
        else:
            init = states[r]
        ideal = run_circuit(circ, init.copy() if init is not None else None)
        ideal_z = float(normalized_z(np.abs(ideal.amplitudes) ** 2, site, L))
        m = sum(1 for l in circ.layers if l.name != "prep")
        settings = fold_settings(m, lambdas) if m else [(0, 0)]
        results = []
        for f, s in settings:
            folded, lam = fold_circuit(circ, f, s) if m else (circ, 1.0)
            z = noisy_trajectories(
                folded,
                site,
                noise,
                trajectories,
                np.random.SeedSequence(entropy=seed, spawn_key=(1, r, n, f, s, int(1000 * (offset or 0)))),
                init,
                noisy_prep,
            )
            results.append((lam, f, s, float(z.mean()), float(z.std(ddof=1)) if z.size > 1 else 0.0))
        return ideal_z, results

    strands_m, strands_u, strands_0 = [], [], []
    all_points: dict[float, list[ZNEPoint]] = {}
    for offset, times in strand_times(spec, n_max):
        jobs = [(offset, n, r) for n in range(times.size) for r in range(realizations)]
        res = dict(zip(jobs, _ordered_map(evaluate, jobs, workers)))
        mit, unm, ideal, mit_err, unm_err = [], [], [], [], []
        for n, t in enumerate(times):
            per = [res[(offset, n, r)] for r in range(realizations)]
            ideal.append(0.25 * np.mean([p[0] for p in per]))
            lam_rows = {}
            for _, rows in per:
                for lam, f, s, mean, sd in rows:
                    lam_rows.setdefault((lam, f, s), []).append((mean, sd))
            pts = []
            for (lam, f, s), vals in sorted(lam_rows.items()):
                means = np.array([v[0] for v in vals])
                sds = np.array([v[1] for v in vals])
                se = math.sqrt(np.sum(sds**2) / trajectories) / len(vals)
                pts.append(ZNEPoint(lam, 0.25 * float(means.mean()), 0.25 * se, f, s))
            all_points[float(t)] = pts
            base = pts[0]
            unm.append(base.value)
            unm_err.append(base.std_err)
            if len(pts) >= 2:
                wf = weighted_fit and all(p.std_err > 0 for p in pts)
                mit.append(zne_fit(pts, weighted=wf).value_at_zero)
                mit_err.append(zne_uncertainty(pts, weighted=wf))
            else:
                mit.append(base.value)
                mit_err.append(base.std_err)
        fp = spec.fingerprint()
        o = (offset or 0.0,)
        strands_m.append(CorrelatorSeries(times, mit, mit_err, realizations, fp, o))
        strands_u.append(CorrelatorSeries(times, unm, unm_err, realizations, fp, o))
        strands_0.append(CorrelatorSeries(times, ideal, np.zeros(times.size), realizations, fp, o))
    return ZNECorrelator(
        weave_merge(strands_m), weave_merge(strands_u), weave_merge(strands_0), all_points
    )
