"""Infinite-temperature spin autocorrelation: typicality estimator and exact oracle.

The quantity is ``C(t) = Tr(S^z_p S^z_p(t)) / 2**L`` for the probe site ``p``.
The estimator evolves ``|0>_p (x) |psi_R>`` with ``|psi_R>`` produced by a
random preparation circuit and records ``(1/2) <S^z_p(t)>``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import sparse

from .gates import (
    FloquetSpec,
    GateOp,
    fuse_field_layer,
    random_prep_circuit,
    run_ops_array,
    trotter_layer_ops,
)
from .qstate import CapacityError, ValidationError, normalized_z, z_signs

EXACT_MAX_QUBITS = 14
TIME_TOL = 1e-9


@dataclass
class CorrelatorSeries:
    """A time series ``(time, value, std_err)`` with provenance for safe merging."""

    times: np.ndarray
    values: np.ndarray
    std_errs: np.ndarray
    realizations: int = 0  # 0 marks an exact evaluation
    spec_fingerprint: str = ""
    offsets: tuple[float, ...] = (0.0,)
    strand: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.std_errs = np.asarray(self.std_errs, dtype=float)
        if not (self.times.shape == self.values.shape == self.std_errs.shape):
            raise ValidationError("times, values and std_errs must have equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValidationError("times must be strictly increasing")
        if self.strand is None:
            self.strand = np.zeros(self.times.size, dtype=int)
        self.strand = np.asarray(self.strand, dtype=int)

    def __len__(self) -> int:
        return self.times.size

    @property
    def exact(self) -> bool:
        return self.realizations == 0

    def window(self, t_min: float, t_max: float) -> "CorrelatorSeries":
        m = (self.times >= t_min - TIME_TOL) & (self.times <= t_max + TIME_TOL)
        return replace(
            self,
            times=self.times[m],
            values=self.values[m],
            std_errs=self.std_errs[m],
            strand=self.strand[m],
        )

    def strand_series(self, index: int) -> "CorrelatorSeries":
        m = self.strand == index
        return replace(
            self,
            times=self.times[m],
            values=self.values[m],
            std_errs=self.std_errs[m],
            offsets=(self.offsets[index],),
            strand=np.zeros(int(m.sum()), dtype=int),
        )

    def value_at(self, t: float) -> float:
        i = np.nonzero(np.abs(self.times - t) <= TIME_TOL)[0]
        if i.size == 0:
            raise KeyError(f"no entry at time {t}")
        return float(self.values[i[0]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "value", "std_err", "realizations"])
        for t, v, e in zip(self.times, self.values, self.std_errs):
            w.writerow([repr(float(t)), repr(float(v)), repr(float(e)), self.realizations])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, spec_fingerprint: str = "") -> "CorrelatorSeries":
        rows = list(csv.DictReader(io.StringIO(text)))
        if rows and set(rows[0]) != {"time", "value", "std_err", "realizations"}:
            raise ValidationError(f"unexpected CSV columns {list(rows[0])}")
        return cls(
            times=np.array([float(r["time"]) for r in rows]),
            values=np.array([float(r["value"]) for r in rows]),
            std_errs=np.array([float(r["std_err"]) for r in rows]),
            realizations=int(rows[0]["realizations"]) if rows else 0,
            spec_fingerprint=spec_fingerprint,
        )


def weave_merge(strands: Sequence[CorrelatorSeries]) -> CorrelatorSeries:
    """Sorted union of strands that share a physics fingerprint.

    Each strand's times are already physical (``offset + n tau``).  Coinciding
    times are rejected rather than averaged.
    """
    if not strands:
        raise ValidationError("nothing to merge")
    fp = strands[0].spec_fingerprint
    for s in strands[1:]:
        if s.spec_fingerprint != fp:
            raise ValidationError(
                f"fingerprint mismatch: {s.spec_fingerprint!r} != {fp!r}; strands describe different models"
            )
    if len(strands) == 1:
        return strands[0]
    times = np.concatenate([s.times for s in strands])
    values = np.concatenate([s.values for s in strands])
    errs = np.concatenate([s.std_errs for s in strands])
    offsets: list[float] = []
    labels = []
    for s in strands:
        base = len(offsets)
        offsets.extend(s.offsets)
        labels.append(s.strand + base)
    strand = np.concatenate(labels)
    order = np.argsort(times, kind="stable")
    times, values, errs, strand = times[order], values[order], errs[order], strand[order]
    dup = np.nonzero(np.diff(times) <= TIME_TOL)[0]
    if dup.size:
        raise ValidationError(f"duplicate weave times {times[dup].tolist()}; check the offsets")
    reals = {s.realizations for s in strands}
    return CorrelatorSeries(
        times,
        values,
        errs,
        realizations=min(reals),
        spec_fingerprint=fp,
        offsets=tuple(offsets),
        strand=strand,
    )


def strand_times(spec: FloquetSpec, n_max: int) -> list[tuple[float | None, np.ndarray]]:
    """Times of the base strand (``n tau``, n = 0..n_max) and each weave strand.

    A weave strand with offset ``tau'`` holds ``tau' + n tau`` for n = 0..n_max-1,
    so every strand ends at or before ``n_max tau``.
    """
    out: list[tuple[float | None, np.ndarray]] = [(None, spec.tau * np.arange(n_max + 1))]
    for w in spec.weave_offsets:
        out.append((w, w + spec.tau * np.arange(n_max)))
    return out


# --------------------------------------------------------------------------
# Typicality estimator


def _seed_for(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


def _ordered_map(fn: Callable, items: Iterable, workers: int) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _single_realization(
    spec: FloquetSpec,
    n_max: int,
    seq: np.random.SeedSequence,
    shots: int | None,
) -> list[np.ndarray]:
    L = spec.n_qubits
    prep_seq, shot_seq = seq.spawn(2)
    prep = random_prep_circuit(L, spec.prep_layers, prep_seq, idle=spec.probe_site)
    if prep.gate_count(spec.probe_site):
        raise RuntimeError("preparation circuit touched the probe qubit")
    psi0 = np.zeros(1 << L, dtype=np.complex128)
    psi0[0] = 1.0
    run_ops_array(psi0, prep.ops, L)
    rng = np.random.default_rng(shot_seq)

    def measure(psi: np.ndarray) -> float:
        p = np.abs(psi) ** 2
        z = float(normalized_z(p, spec.probe_site, L))
        if shots is not None:
            p0 = min(max(0.5 * (1 + z), 0.0), 1.0)
            z = 2.0 * rng.binomial(shots, p0) / shots - 1.0
        return 0.25 * z

    step = fuse_field_layer(trotter_layer_ops(spec, spec.tau), L)
    out = []
    for offset, times in strand_times(spec, n_max):
        psi = psi0.copy()
        if offset is not None:
            run_ops_array(psi, fuse_field_layer(trotter_layer_ops(spec, offset), L), L)
        vals = np.empty(times.size)
        for n in range(times.size):
            if n:
                run_ops_array(psi, step, L)
            vals[n] = measure(psi)
        out.append(vals)
    return out


def estimate_autocorrelation(
    spec: FloquetSpec,
    n_max: int,
    realizations: int = 10,
    seed: int = 0,
    shots: int | None = None,
    workers: int = 1,
    return_samples: bool = False,
) -> CorrelatorSeries | tuple[CorrelatorSeries, list[np.ndarray]]:
    """Typicality estimate of the probe autocorrelation over all strands of ``spec``.

    With ``return_samples`` the per-realization arrays (shape ``(R, n_t)`` per
    strand) are returned as well.
    """
    if realizations < 1:
        raise ValidationError("realizations must be >= 1")
    if n_max < 0:
        raise ValidationError("n_max must be >= 0")
    if shots is not None and shots < 1:
        raise ValidationError("shots must be >= 1")
    runs = _ordered_map(
        lambda i: _single_realization(spec, n_max, _seed_for(seed, i), shots),
        range(realizations),
        workers,
    )
    strands = []
    samples = []
    R = realizations
    for k, (offset, times) in enumerate(strand_times(spec, n_max)):
        data = np.stack([r[k] for r in runs])
        samples.append(data)
        mean = data.mean(axis=0)
        err = data.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.full(times.size, np.nan)
        strands.append(
            CorrelatorSeries(times, mean, err, R, spec.fingerprint(), (offset or 0.0,))
        )
    merged = weave_merge(strands)
    return (merged, samples) if return_samples else merged


# --------------------------------------------------------------------------
# Exact oracle


def _exact_basis(spec: FloquetSpec, n_max: int, chunk: int = 1024) -> list[np.ndarray]:
    """Evolve every computational basis state in the full Hilbert space.

    ``C = 2**-L sum_x s(x) <x| U^dag S^z U |x>`` with ``s(x) = +-1/2``.
    """
    L = spec.n_qubits
    dim = 1 << L
    half = 0.5 * z_signs(spec.probe_site, L)
    step = fuse_field_layer(trotter_layer_ops(spec, spec.tau), L)
    out = []
    for offset, times in strand_times(spec, n_max):
        acc = np.zeros(times.size)
        for start in range(0, dim, chunk):
            cols = np.arange(start, min(dim, start + chunk))
            psi = np.zeros((dim, cols.size), dtype=np.complex128)
            psi[cols, np.arange(cols.size)] = 1.0
            if offset is not None:
                run_ops_array(psi, fuse_field_layer(trotter_layer_ops(spec, offset), L), L)
            for n in range(times.size):
                if n:
                    run_ops_array(psi, step, L)
                zexp = half @ (np.abs(psi) ** 2)
                acc[n] += float(np.dot(half[cols], zexp))
        out.append(acc / dim)
    return out


class _SectorKernel:
    """Magnetization-conserving ops restricted to a fixed-popcount sector."""

    def __init__(self, n_qubits: int, weight: int):
        idx = np.arange(1 << n_qubits)
        pop = np.zeros_like(idx)
        for j in range(n_qubits):
            pop += (idx >> j) & 1
        self.states = idx[pop == weight]
        self.n_qubits = n_qubits
        self._cache: dict[int, tuple] = {}

    def _prepare(self, op: GateOp):
        key = id(op)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is op:
            return hit[1]
        s = self.states
        if op.kind == "diag":
            prepared = ("diag", op.matrix[s])
        elif op.kind == "1q":
            u = op.matrix
            if abs(u[0, 1]) > 1e-14 or abs(u[1, 0]) > 1e-14:
                raise ValidationError(f"{op.label} does not conserve magnetization")
            bit = (s >> op.targets[0]) & 1
            prepared = ("diag", np.where(bit, u[1, 1], u[0, 0]))
        elif op.kind == "2q":
            u = op.matrix
            mask = np.ones((4, 4), bool)
            mask[[0, 1, 1, 2, 2, 3], [0, 1, 2, 1, 2, 3]] = False
            if np.abs(u[mask]).max() > 1e-14:
                raise ValidationError(f"{op.label} does not conserve magnetization")
            a, b = op.targets
            ba = (s >> a) & 1
            bb = (s >> b) & 1
            i = 2 * ba + bb
            j = 2 * bb + ba
            partner = np.searchsorted(s, s ^ ((1 << a) | (1 << b)))
            flip = ba != bb
            rows = np.arange(s.size)
            self_c = u[i, i]
            part_c = u[i, j][flip]
            mat = sparse.csr_matrix(
                (np.concatenate([self_c, part_c]),
                 (np.concatenate([rows, rows[flip]]), np.concatenate([rows, partner[flip]]))),
                shape=(s.size, s.size),
            )
            prepared = ("sparse", mat)
        else:
            raise ValidationError(f"sector kernel cannot apply {op.kind} ops")
        self._cache[key] = (op, prepared)
        return prepared

    def apply(self, v: np.ndarray, ops: Sequence[GateOp]) -> np.ndarray:
        for op in ops:
            p = self._prepare(op)
            if p[0] == "diag":
                v *= p[1][:, None]
            else:
                v = p[1] @ v
        return v


def _exact_sector(spec: FloquetSpec, n_max: int) -> list[np.ndarray]:
    """Sector-by-sector evolution of the basis states with the probe spin up.

    Uses ``Tr(S^z S^z(t)) = Tr(P_up S^z(t))`` (the trace of ``S^z(t)`` vanishes),
    so only the ``2**(L-1)`` states with the probe bit clear are evolved.
    """
    L = spec.n_qubits
    p = spec.probe_site
    step = fuse_field_layer(trotter_layer_ops(spec, spec.tau), L)
    weave_ops = {w: fuse_field_layer(trotter_layer_ops(spec, w), L) for w in spec.weave_offsets}
    plan = strand_times(spec, n_max)
    acc = [np.zeros(t.size) for _, t in plan]
    # Without the field the model commutes with the global spin flip, which maps
    # sector k onto L-k: contrib(L-k) = contrib(k) + Tr_{L-k}(S^z_p).
    mirror = not spec.staggered
    for weight in range(L + 1):
        if mirror and weight > L - weight:
            continue
        kern = _SectorKernel(L, weight)
        s = kern.states
        up = np.nonzero(((s >> p) & 1) == 0)[0]
        half = 0.5 - ((s >> p) & 1)
        contrib = [np.zeros(t.size) for _, t in plan]
        if up.size:
            for k, (offset, times) in enumerate(plan):
                v = np.zeros((s.size, up.size), dtype=np.complex128)
                v[up, np.arange(up.size)] = 1.0
                if offset is not None:
                    v = kern.apply(v, weave_ops[offset])
                for n in range(times.size):
                    if n:
                        v = kern.apply(v, step)
                    contrib[k][n] = float(half @ (np.abs(v) ** 2).sum(axis=1))
        for k in range(len(plan)):
            acc[k] += contrib[k]
        if mirror and weight < L - weight:
            # Tr over sector L-k of S^z_p: (#up - #down)/2 with C(L-1, L-k) up states
            tr = 0.5 * (math.comb(L - 1, L - weight) - math.comb(L - 1, L - weight - 1))
            for k in range(len(plan)):
                acc[k] += contrib[k] + tr
    return [a / (1 << L) for a in acc]


def exact_autocorrelation(
    spec: FloquetSpec,
    n_max: int,
    method: str = "auto",
    max_qubits: int = EXACT_MAX_QUBITS,
) -> CorrelatorSeries:
    """Brute-force ``Tr(S^z_p S^z_p(t)) / 2**L`` over all strands of ``spec``.

    ``method="basis"`` evolves all ``2**L`` basis states in the full space;
    ``"sector"`` evolves the probe-up half sector by sector.  ``"auto"``
    picks ``basis`` for L <= 8.
    """
    L = spec.n_qubits
    if L > max_qubits:
        raise CapacityError(f"exact oracle capped at {max_qubits} qubits, got {L}")
    if n_max < 0:
        raise ValidationError("n_max must be >= 0")
    if method == "auto":
        method = "basis" if L <= 8 else "sector"
    if method == "basis":
        vals = _exact_basis(spec, n_max)
    elif method == "sector":
        vals = _exact_sector(spec, n_max)
    else:
        raise ValidationError(f"unknown method {method!r}")
    strands = [
        CorrelatorSeries(times, v, np.zeros(times.size), 0, spec.fingerprint(), (offset or 0.0,))
        for (offset, times), v in zip(strand_times(spec, n_max), vals)
    ]
    return weave_merge(strands)
