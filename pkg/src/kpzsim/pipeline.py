"""Config-driven experiment runs that write CSV/JSON artifacts plus a manifest.

Config files are flat ``key = value`` text; ``#`` starts a comment.  All times
are in units of 1/J and ``J`` itself is fixed to 1.
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__
from .analysis import FitResult, convert_parameterization, fit_window_select, page_value, power_law_fit
from .gates import Circuit, FloquetSpec, random_prep_circuit, run_circuit
from .noisezne import NoiseModel, zne_correlator, zne_csv
from .qstate import bipartite_entropy, sample_bitstrings, site_magnetization
from .typicality import (
    CorrelatorSeries,
    _ordered_map,
    _seed_for,
    estimate_autocorrelation,
    exact_autocorrelation,
)

MODES = ("entropy_curve", "density_profile", "correlator", "zne_sweep", "fit", "convert")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    mode: str
    seed: int
    floquet: FloquetSpec | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    realizations: int = 10
    n_max: int = 10
    method: str = "typicality"  # or "exact"
    shots: int | None = None
    zne_lambdas: tuple[float, ...] = (1.0, 1.5, 2.0, 2.5, 3.0)
    trajectories: int = 1000
    noisy_prep: bool = False
    decompose: bool = False
    samples: int = 20
    output_dir: str = "out"
    slope_tol: float = 0.1
    agree_tol: float = 0.15
    t_floor: float = 0.0
    fit_window: tuple[float, float] | None = None
    input: str | None = None
    exact_input: str | None = None
    J_cal: float | None = None
    J_cal_prime: float | None = None


_FLOQUET_KEYS = {f.name for f in fields(FloquetSpec)}
_NOISE_KEYS = {"p2": "two_qubit_pauli_p", "p1": "one_qubit_pauli_p", "readout_flip": "readout_flip"}


def _parse_bool(key: str, v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {v!r}")


def _parse_floats(key: str, v: str) -> tuple[float, ...]:
    if not v.strip():
        return ()
    try:
        return tuple(float(x) for x in v.replace(";", ",").split(","))
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {v!r}") from exc


_INT_KEYS = {"seed", "realizations", "n_max", "shots", "trajectories", "samples",
             "n_qubits", "probe_site", "prep_layers"}
_FLOAT_KEYS = {"slope_tol", "agree_tol", "t_floor", "J_cal", "J_cal_prime",
               "delta", "tau", "J", "stagger_strength", "p1", "p2", "readout_flip"}
_BOOL_KEYS = {"staggered", "noisy_prep", "decompose"}
_STR_KEYS = {"mode", "method", "output_dir", "input", "exact_input"}
_LIST_KEYS = {"weave_offsets", "zne_lambdas", "fit_window"}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS | _LIST_KEYS


def parse_config_text(text: str) -> dict[str, Any]:
    """Typed key-value pairs from config text (no cross-field validation)."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{key}: unknown field (line {lineno})")
        if key in out:
            raise ConfigError(f"{key}: given twice (line {lineno})")
        try:
            if key in _INT_KEYS:
                out[key] = None if value.lower() == "none" else int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            elif key in _BOOL_KEYS:
                out[key] = _parse_bool(key, value)
            elif key in _LIST_KEYS:
                out[key] = _parse_floats(key, value)
            else:
                out[key] = value
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{key}: cannot parse {value!r}") from exc
    return out


def build_config(values: dict[str, Any]) -> RunConfig:
    v = dict(values)
    mode = v.pop("mode", None)
    if mode not in MODES:
        raise ConfigError(f"mode: must be one of {MODES}, got {mode!r}")
    if "seed" not in v or v["seed"] is None:
        raise ConfigError("seed: required (runs never draw wall-clock entropy)")
    if "J" in v and v["J"] != 1.0:
        raise ConfigError("J: units are fixed to J = 1 with times in 1/J (see Units in README.md); rescale tau instead")
    v.pop("J", None)

    fl = {k: v.pop(k) for k in list(v) if k in _FLOQUET_KEYS}
    floquet = None
    needs_floquet = mode in ("entropy_curve", "density_profile", "correlator", "zne_sweep")
    if fl or needs_floquet:
        if "n_qubits" not in fl:
            raise ConfigError(f"n_qubits: required for mode {mode}")
        try:
            floquet = FloquetSpec(**fl)
        except ValueError as exc:
            raise ConfigError(f"floquet: {exc}") from exc

    nz = {_NOISE_KEYS[k]: v.pop(k) for k in list(v) if k in _NOISE_KEYS}
    try:
        noise = NoiseModel(**nz)
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from exc

    if "fit_window" in v:
        w = v["fit_window"]
        if len(w) != 2 or not w[0] < w[1]:
            raise ConfigError("fit_window: expected 't_min, t_max' with t_min < t_max")
        v["fit_window"] = (w[0], w[1])
    cfg = RunConfig(mode=mode, floquet=floquet, noise=noise, **v)
    for name in ("realizations", "trajectories", "samples"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name}: must be >= 1")
    if cfg.n_max < 0:
        raise ConfigError("n_max: must be >= 0")
    if cfg.shots is not None and cfg.shots < 1:
        raise ConfigError("shots: must be >= 1")
    if cfg.method not in ("typicality", "exact"):
        raise ConfigError(f"method: must be 'typicality' or 'exact', got {cfg.method!r}")
    if mode == "fit" and not cfg.input:
        raise ConfigError("input: fit mode needs a correlator CSV path")
    if mode == "convert" and (cfg.J_cal is None or cfg.J_cal_prime is None):
        raise ConfigError("J_cal: convert mode needs J_cal and J_cal_prime")
    if mode == "zne_sweep" and any(l < 1 for l in cfg.zne_lambdas):
        raise ConfigError("zne_lambdas: noise factors must be >= 1")
    return cfg


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> RunConfig:
    values = parse_config_text(Path(path).read_text())
    values.update({k: val for k, val in (overrides or {}).items() if val is not None})
    return build_config(values)


def config_hash(cfg: RunConfig) -> str:
    payload = json.dumps(_jsonable(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def _jsonable(obj: Any) -> Any:
    if hasattr(obj, "__dataclass_fields__"):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_jsonable(x) for x in obj]
    return obj


# --------------------------------------------------------------------------
# Stages


def assign_strands(times: np.ndarray, tau: float, offsets: tuple[float, ...]) -> tuple[tuple[float, ...], np.ndarray]:
    """Recover weave-strand labels of a merged time grid."""
    all_offsets = (0.0,) + tuple(offsets)
    labels = np.zeros(times.size, dtype=int)
    for i, t in enumerate(times):
        phase = [abs(((t - o) / tau) - round((t - o) / tau)) for o in all_offsets]
        labels[i] = int(np.argmin(phase))
    return all_offsets, labels


def entropy_curve(cfg: RunConfig, workers: int = 1) -> str:
    spec = cfg.floquet
    L = spec.n_qubits
    cut = (L + 1) // 2 if spec.probe_site == 0 else L // 2
    n_reg = L - 1
    layers = spec.prep_layers

    def one(i: int) -> np.ndarray:
        circ = random_prep_circuit(L, layers, _seed_for(cfg.seed, i), idle=spec.probe_site)
        state = None
        ent = np.empty(layers)
        for n, ops in enumerate(circ.layer_ops("prep")):
            state = run_circuit(Circuit(L, ops), state)
            ent[n] = bipartite_entropy(state, cut)
        return ent

    data = np.stack(_ordered_map(one, range(cfg.samples), workers))
    mean = data.mean(axis=0)
    err = data.std(axis=0, ddof=1) / math.sqrt(cfg.samples) if cfg.samples > 1 else np.zeros(layers)
    reg_a = cut - 1 if spec.probe_site == 0 else cut
    page = page_value(2**reg_a, 2 ** (n_reg - reg_a))
    lines = ["layer,entropy,std_err,page_value"]
    for n in range(layers):
        lines.append(f"{n + 1},{float(mean[n])!r},{float(err[n])!r},{page!r}")
    return "\n".join(lines) + "\n"


def density_profile(cfg: RunConfig) -> str:
    spec = cfg.floquet
    prep_seq, shot_seq = _seed_for(cfg.seed, 0).spawn(2)
    circ = random_prep_circuit(spec.n_qubits, spec.prep_layers, prep_seq, idle=spec.probe_site)
    state = run_circuit(circ)
    shots = cfg.shots or 30000
    samples = sample_bitstrings(state, shots, cfg.noise.readout_flip, shot_seq)
    mz = site_magnetization(samples)
    lines = ["site,sigma_z,s_z"]
    for j, m in enumerate(mz):
        lines.append(f"{j},{float(m)!r},{float(m / 2)!r}")
    return "\n".join(lines) + "\n"


def correlator(cfg: RunConfig, workers: int = 1) -> CorrelatorSeries:
    if cfg.method == "exact":
        return exact_autocorrelation(cfg.floquet, cfg.n_max)
    return estimate_autocorrelation(
        cfg.floquet, cfg.n_max, cfg.realizations, cfg.seed, cfg.shots, workers
    )


def _read_series(path: str, cfg: RunConfig) -> CorrelatorSeries:
    s = CorrelatorSeries.from_csv(Path(path).read_text())
    if cfg.floquet is not None:
        offsets, labels = assign_strands(s.times, cfg.floquet.tau, cfg.floquet.weave_offsets)
        s = replace(s, offsets=offsets, strand=labels)
    return s


def fit(cfg: RunConfig) -> FitResult:
    est = _read_series(cfg.input, cfg)
    if cfg.fit_window is not None:
        window = cfg.fit_window
    else:
        ref = _read_series(cfg.exact_input, cfg) if cfg.exact_input else est
        window = fit_window_select(ref, est, cfg.slope_tol, cfg.agree_tol, cfg.t_floor)
    return power_law_fit(est, window)


# --------------------------------------------------------------------------
# Driver


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run(cfg: RunConfig, output_dir: str | Path | None = None, workers: int = 1) -> dict[str, str]:
    """Execute ``cfg`` and write artifacts; returns ``{filename: sha256}``."""
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, str] = {}
    stdout: list[str] = []

    def write(name: str, text: str) -> None:
        data = text.encode("utf-8")
        (out / name).write_bytes(data)
        artifacts[name] = _sha(data)

    if cfg.mode == "entropy_curve":
        write("entropy_curve.csv", entropy_curve(cfg, workers))
    elif cfg.mode == "density_profile":
        write("density_profile.csv", density_profile(cfg))
    elif cfg.mode == "correlator":
        write("correlator.csv", correlator(cfg, workers).to_csv())
    elif cfg.mode == "zne_sweep":
        res = zne_correlator(
            cfg.floquet,
            cfg.n_max,
            cfg.noise,
            cfg.zne_lambdas,
            cfg.realizations,
            cfg.trajectories,
            cfg.seed,
            noisy_prep=cfg.noisy_prep,
            decompose=cfg.decompose,
            workers=workers,
        )
        for k, t in enumerate(sorted(res.points)):
            write(f"zne_sweep_{k:03d}.csv", zne_csv(res.points[t]))
        write("zne_times.csv", "index,time\n" + "".join(f"{k},{t!r}\n" for k, t in enumerate(sorted(res.points))))
        write("mitigated.csv", res.mitigated.to_csv())
        write("unmitigated.csv", res.unmitigated.to_csv())
        write("noiseless.csv", res.noiseless.to_csv())
    elif cfg.mode == "fit":
        write("fit.json", fit(cfg).to_json())
    elif cfg.mode == "convert":
        tau, delta = convert_parameterization(cfg.J_cal, cfg.J_cal_prime)
        stdout.append(f"tau = {tau!r}\ndelta = {delta!r}")
        write("convert.json", json.dumps({"tau": tau, "delta": delta}, sort_keys=True) + "\n")

    manifest = {
        "config": _jsonable(cfg),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "versions": {
            "kpzsim": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "artifacts": artifacts,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    for line in stdout:
        print(line)
    return artifacts
