"""Transport-exponent extraction and small physics helpers."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .qstate import ValidationError
from .typicality import CorrelatorSeries

DUAL_UNITARY_TAU = math.pi
DUAL_UNITARY_WARN_WIDTH = 0.3


class AnalysisError(RuntimeError):
    """The data do not support the requested analysis (e.g. no usable fit window)."""


class DualUnitaryWarning(UserWarning):
    """Step size sits close to the dual-unitary point J tau = pi."""


@dataclass(frozen=True)
class FitResult:
    alpha: float
    amplitude: float
    t_min: float
    t_max: float
    residual_rms: float
    n_points: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        d = json.loads(text)
        return cls(**{k: d[k] for k in ("alpha", "amplitude", "t_min", "t_max", "residual_rms", "n_points")})


def _log_derivative(t: np.ndarray, c: np.ndarray) -> np.ndarray:
    lt, lc = np.log(t), np.log(c)
    if t.size == 1:
        return np.array([np.nan])
    # second-order central differences on non-uniform grids, one-sided at the ends
    return np.gradient(lc, lt, edge_order=1)


def _positive_or_raise(series: CorrelatorSeries, mask: np.ndarray | None = None) -> None:
    vals = series.values if mask is None else series.values[mask]
    times = series.times if mask is None else series.times[mask]
    bad = times[~(vals > 0)]
    if bad.size:
        raise ValueError(f"correlator must be positive for log-derivative; offending times {bad.tolist()}")


def local_exponent(
    series: CorrelatorSeries,
    per_strand: bool = False,
    axis: str = "time",
    tau: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """``d ln C / d ln t`` at every entry with ``t > 0``.

    ``per_strand`` differentiates each weave strand on its own uniform grid,
    which removes the strand-to-strand sawtooth of a merged series.  With
    ``axis="step"`` the derivative is taken against the step count
    ``n = (t - offset) / tau`` instead of the physical time (per strand).
    """
    keep = series.times > 0
    if keep.sum() < 3:
        raise ValidationError("need at least 3 points with t > 0")
    _positive_or_raise(series, keep)
    t = series.times[keep]
    c = series.values[keep]
    strand = series.strand[keep]
    if axis == "step":
        if tau is None:
            raise ValidationError("axis='step' needs tau")
        offsets = np.array(series.offsets)[strand]
        n = np.rint((t - offsets) / tau)
        alpha = np.full(t.size, np.nan)
        for k in np.unique(strand):
            m = (strand == k) & (n > 0)
            if m.sum() >= 2:
                alpha[m] = _log_derivative(n[m], c[m])
        return t, alpha
    if axis != "time":
        raise ValidationError(f"axis must be 'time' or 'step', got {axis!r}")
    if not per_strand:
        return t, _log_derivative(t, c)
    alpha = np.full(t.size, np.nan)
    for k in np.unique(strand):
        m = strand == k
        if m.sum() >= 2:
            alpha[m] = _log_derivative(t[m], c[m])
    return t, alpha


def strand_mean_exponent(
    series: CorrelatorSeries, interior_only: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Per-strand local exponents averaged across strands at every ``t > 0``.

    Each strand's exponent is interpolated linearly in ``ln t`` onto the full
    grid (no extrapolation, so strands only contribute inside their own span).
    With ``interior_only`` the one-sided first/last estimate of every strand
    is dropped, so grid points covered by no central difference come out NaN.
    """
    t, alpha = local_exponent(series, per_strand=True)
    strand = series.strand[series.times > 0]
    labels = np.unique(strand)
    if interior_only:
        for k in labels:
            idx = np.flatnonzero(strand == k)
            if idx.size >= 3:
                alpha[idx[[0, -1]]] = np.nan
    if labels.size == 1:
        return t, alpha
    lt = np.log(t)
    total = np.zeros(t.size)
    count = np.zeros(t.size)
    for k in labels:
        m = (strand == k) & np.isfinite(alpha)
        if m.sum() < 2:
            continue
        inside = (lt >= lt[m][0]) & (lt <= lt[m][-1])
        total[inside] += np.interp(lt[inside], lt[m], alpha[m])
        count[inside] += 1
    with np.errstate(invalid="ignore"):
        return t, np.where(count > 0, total / np.maximum(count, 1), np.nan)


def power_law_fit(
    series: CorrelatorSeries,
    window: tuple[float, float] | None = None,
    weighted: bool = False,
) -> FitResult:
    """Least-squares line through ``(ln t, ln C)`` inside ``window``.

    ``weighted`` uses ``1/sigma_ln = C / std_err`` weights; entries with zero
    error then fall back to unit weight.
    """
    if window is None:
        pos = series.times[series.times > 0]
        window = (float(pos.min()), float(pos.max())) if pos.size else (0.0, 0.0)
    t_min, t_max = window
    sub = series.window(max(t_min, np.nextafter(0.0, 1.0)), t_max)
    sub = sub.window(t_min, t_max)
    if len(sub) < 3:
        raise ValidationError(f"need >= 3 points in window {window}, got {len(sub)}")
    _positive_or_raise(sub)
    x = np.log(sub.times)
    y = np.log(sub.values)
    w = None
    if weighted:
        sig = np.where(sub.std_errs > 0, sub.std_errs / sub.values, np.nan)
        w = np.where(np.isfinite(sig), 1.0 / np.where(np.isfinite(sig), sig, 1.0), 1.0)
    slope, intercept = np.polyfit(x, y, 1, w=w)
    resid = y - (slope * x + intercept)
    return FitResult(
        alpha=float(slope),
        amplitude=float(math.exp(intercept)),
        t_min=float(sub.times[0]),
        t_max=float(sub.times[-1]),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n_points=int(len(sub)),
    )


def fit_window_select(
    exact: CorrelatorSeries,
    estimated: CorrelatorSeries,
    slope_tol: float = 0.1,
    agree_tol: float = 0.15,
    t_floor: float = 0.0,
    min_points: int = 3,
) -> tuple[float, float]:
    """Largest contiguous time window that is both power-law-like and low-error.

    On the common time grid (``t > t_floor``) a window qualifies when

    1. the strand-averaged local exponent of ``exact`` (see
       :func:`strand_mean_exponent`, central differences only) stays within
       ``slope_tol`` of the window's own fitted slope, and
    2. ``|estimated - exact| <= agree_tol * |exact|`` at every entry.

    Raises :class:`AnalysisError` when no window of ``min_points`` exists.
    """
    common = [t for t in exact.times if t > t_floor and np.any(np.abs(estimated.times - t) <= 1e-9)]
    if len(common) < min_points:
        raise AnalysisError("exact and estimated series do not overlap on enough times")
    t = np.array(common)
    ex = np.array([exact.value_at(x) for x in t])
    es = np.array([estimated.value_at(x) for x in t])
    good = (np.abs(es - ex) <= agree_tol * np.abs(ex)) & (ex > 0) & (es > 0)
    # exponents come from the whole positive part of the exact series, so the
    # floor does not turn interior points into one-sided ones
    pos = (exact.times > 0) & (exact.values > 0)
    alpha = np.full(t.size, np.nan)
    if pos.sum() >= 3:
        clean = CorrelatorSeries(
            exact.times[pos], exact.values[pos], exact.std_errs[pos], exact.realizations,
            exact.spec_fingerprint, exact.offsets, exact.strand[pos],
        )
        ta, aa = strand_mean_exponent(clean, interior_only=True)
        where = np.searchsorted(ta, t)
        hit = (where < ta.size) & (np.abs(ta[np.minimum(where, ta.size - 1)] - t) <= 1e-9)
        alpha[hit] = aa[where[hit]]
    lt = np.log(t)
    lc = np.log(np.where(ex > 0, ex, np.nan))
    n = t.size
    best: tuple[int, int] | None = None
    for i in range(n):
        if not good[i]:
            continue
        for j in range(n - 1, i + min_points - 2, -1):
            if best is not None and j - i <= best[1] - best[0]:
                break
            seg = slice(i, j + 1)
            if not np.all(good[seg]) or not np.all(np.isfinite(alpha[seg])):
                continue
            slope = np.polyfit(lt[seg], lc[seg], 1)[0]
            if np.max(np.abs(alpha[seg] - slope)) < slope_tol:
                best = (i, j)
                break
    if best is None:
        raise AnalysisError(
            f"no window satisfies slope_tol={slope_tol} and agree_tol={agree_tol}; "
            "try a longer run, larger tolerances or a different t_floor"
        )
    return float(t[best[0]]), float(t[best[1]])


def page_value(dim_a: int | float, dim_b: int | float) -> float:
    """Mean Haar-random entanglement entropy ``ln m - m/(2n)`` with ``m <= n`` (nats)."""
    m, n = (dim_a, dim_b) if dim_a <= dim_b else (dim_b, dim_a)
    if m < 1:
        raise ValidationError("dimensions must be >= 1")
    return math.log(m) - m / (2.0 * n)


def convert_parameterization(
    J_cal: float, J_cal_prime: float, warn_width: float = DUAL_UNITARY_WARN_WIDTH
) -> tuple[float, float]:
    """Map the couplings of ``Jc (XX + YY) + Jc' ZZ`` to ``(tau, delta)``.

    ``tau = 4 Jc`` (units of 1/J) and ``delta = Jc' / Jc``.  Emits a
    :class:`DualUnitaryWarning` when ``|tau - pi| < warn_width``.
    """
    if J_cal == 0:
        raise ZeroDivisionError("J_cal must be non-zero")
    tau = 4.0 * J_cal
    delta = J_cal_prime / J_cal
    if abs(tau - DUAL_UNITARY_TAU) < warn_width:
        warnings.warn(
            f"tau = {tau:.4f} is within {warn_width} of the dual-unitary point pi; "
            "transport there is ballistic and power-law fits are unreliable",
            DualUnitaryWarning,
            stacklevel=2,
        )
    return tau, delta
