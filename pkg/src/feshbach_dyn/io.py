"""Run configuration, timeseries records and output files.

Configuration is a flat text format, one ``section.key = value`` per line,
``#`` starting a comment. Exactly one model section (``spinboson``,
``minibath`` or ``whitenoise``) describes the physics; ``run`` and ``state``
hold the plumbing.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bath import BathSpec, FlatSingleMode, Lorentzian, OhmicExpCut, Tabulated
from .minibath import MiniBathSpec
from .spinboson import SpinBosonParams, WhiteNoiseParams
from .volterra import VolterraError, grid_steps

MODES = ("simulate", "oracle", "compare", "whitenoise", "diagnose")
MODEL_FOR_MODE = {"simulate": "spinboson", "oracle": "minibath", "compare": "minibath", "whitenoise": "whitenoise"}
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# -- value parsers ------------------------------------------------------------


def _float(text):
    return float(text)


def _pos_float(text):
    value = float(text)
    if not value > 0:
        raise ValueError("must be positive")
    return value


def _beta(text):
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    return _pos_float(text)


def _int(text):
    return int(text)


def _complex(text):
    return complex(text.replace(" ", ""))


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _str(text):
    return text.strip()


def _float_list(text):
    return tuple(float(x) for x in text.split(","))


def _complex_list(text):
    return tuple(_complex(x) for x in text.split(","))


def _choice(*options):
    def parse(text):
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


_CHANNEL_KEYS = {
    "family": _choice("lorentzian", "ohmic", "flat", "tabulated", "none"),
    "center": _float,
    "width": _pos_float,
    "strength": _complex,
    "coupling": _float,
    "cutoff": _pos_float,
    "weight": _complex,
    "table": _str,
}

SCHEMA = {
    "run": {
        "mode": _choice(*MODES),
        "output": _str,
        "format": _choice(*FORMATS),
        "emit_plots": _bool,
        "seed": _int,
        "input": _str,
        "self_convergence": _bool,
    },
    "state": {"rho11": _float, "rho12_re": _float, "rho12_im": _float},
    "spinboson": {
        "omega0": _float,
        "t_max": _pos_float,
        "dt": _pos_float,
        "beta": _beta,
        "secular": _bool,
        **{f"{ch}_{k}": p for ch in ("f", "h", "cross") for k, p in _CHANNEL_KEYS.items()},
    },
    "minibath": {
        "n_modes": _int,
        "n_max": _int,
        "mode_freqs": _float_list,
        "f_coeffs": _complex_list,
        "h_coeffs": _complex_list,
        "omega0": _float,
        "env": _choice("vacuum", "gibbs"),
        "beta": _beta,
        "t_max": _pos_float,
        "dt": _pos_float,
    },
    "whitenoise": {
        "gamma1": _float,
        "gamma2": _float,
        "eta": _complex,
        "omega0": _float,
        "t_max": _pos_float,
        "dt": _pos_float,
        "secular": _bool,
    },
}

REQUIRED = {
    "spinboson": ("omega0", "t_max", "dt", "f_family"),
    "minibath": ("n_modes", "n_max", "mode_freqs", "f_coeffs", "h_coeffs", "omega0", "t_max", "dt"),
    "whitenoise": ("gamma1", "gamma2", "eta", "omega0", "t_max", "dt"),
}


@dataclass
class RunConfig:
    mode: str
    model_kind: str | None
    model: object
    t_max: float | None = None
    dt: float | None = None
    secular: bool = False
    output: str | None = None
    format: str = "csv"
    emit_plots: bool = False
    seed: int = 0
    input: str | None = None
    self_convergence: bool = False
    rho0: np.ndarray = field(default_factory=lambda: np.diag([1.0, 0.0]).astype(complex))
    values: dict = field(default_factory=dict)

    def echo(self):
        """JSON-friendly copy of the parsed key/value pairs."""
        return {k: _jsonable(v) for k, v in sorted(self.values.items())}


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def _tokenize(text):
    entries = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", lineno)
        name, value = (s.strip() for s in line.split("=", 1))
        if "." not in name:
            raise ConfigError(f"key {name!r} has no section prefix", lineno)
        section, key = name.split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r}", lineno)
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {name!r}", lineno)
        if name in lines:
            raise ConfigError(f"duplicate key {name!r} (first set on line {lines[name]})", lineno)
        if value == "":
            raise ConfigError(f"key {name!r} has no value", lineno)
        try:
            entries[name] = SCHEMA[section][key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {name!r}: {value!r} ({exc})", lineno) from None
        lines[name] = lineno
    return entries, lines


def _channel(prefix, get, base_dir, line_of):
    family = get(f"{prefix}_family", "none")
    keys = {k[len(prefix) + 1:] for k in _present_keys(prefix, get)} - {"family"}
    needed = {
        "lorentzian": {"center", "width", "strength"},
        "ohmic": {"coupling", "cutoff"},
        "flat": {"center", "weight"},
        "tabulated": {"table"},
        "none": set(),
    }[family]
    missing = needed - keys
    if missing:
        raise ConfigError(f"{prefix} channel '{family}' needs {', '.join(sorted(prefix + '_' + m for m in missing))}",
                          line_of(f"{prefix}_family"))
    extra = keys - needed
    if extra:
        name = f"{prefix}_{sorted(extra)[0]}"
        raise ConfigError(f"key {name!r} does not apply to family '{family}'", line_of(name))
    try:
        if family == "none":
            return None
        if family == "lorentzian":
            strength = get(f"{prefix}_strength")
            if prefix != "cross" and strength.imag == 0:
                strength = strength.real
            return Lorentzian(get(f"{prefix}_center"), get(f"{prefix}_width"), strength)
        if family == "ohmic":
            return OhmicExpCut(get(f"{prefix}_coupling"), get(f"{prefix}_cutoff"))
        if family == "flat":
            weight = get(f"{prefix}_weight")
            if prefix != "cross" and weight.imag == 0:
                weight = weight.real
            return FlatSingleMode(get(f"{prefix}_center"), weight)
        path = Path(get(f"{prefix}_table"))
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        return Tabulated.from_file(path)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"{prefix} channel: {exc}", line_of(f"{prefix}_family")) from None


def _present_keys(prefix, get):
    return [k for k in get.keys if k.startswith(prefix + "_")]


def parse_config(text, mode=None, base_dir=None) -> RunConfig:
    """Parse and validate a configuration text.

    ``mode`` (from the command line) must agree with ``run.mode`` when both
    are given.
    """
    entries, lines = _tokenize(text)
    first_line = min(lines.values()) if lines else None

    cfg_mode = entries.get("run.mode")
    if mode is not None and cfg_mode is not None and mode != cfg_mode:
        raise ConfigError(f"run.mode = {cfg_mode} conflicts with requested mode {mode}", lines["run.mode"])
    mode = mode or cfg_mode
    if mode is None:
        raise ConfigError("no mode given (command line or run.mode)")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")

    starts = {}
    for name, ln in lines.items():
        sec = name.split(".")[0]
        if sec in REQUIRED:
            starts[sec] = min(ln, starts.get(sec, ln))
    models = sorted(starts, key=starts.get)
    if len(models) > 1:
        raise ConfigError(f"conflicting model sections: {', '.join(models)}", starts[models[1]])
    kind = models[0] if models else None
    if mode == "diagnose":
        if "run.input" not in entries:
            raise ConfigError("diagnose mode needs run.input", first_line)
    else:
        if kind is None:
            raise ConfigError(f"missing model section for mode {mode} (expected [{MODEL_FOR_MODE[mode]}])", first_line)
        if kind != MODEL_FOR_MODE[mode]:
            raise ConfigError(f"mode {mode} needs a {MODEL_FOR_MODE[mode]} section, found {kind}",
                              min(ln for name, ln in lines.items() if name.startswith(kind + ".")))

    cfg = RunConfig(mode=mode, model_kind=kind, model=None, values=dict(entries))
    cfg.output = entries.get("run.output")
    cfg.format = entries.get("run.format", "csv")
    cfg.emit_plots = entries.get("run.emit_plots", False)
    cfg.seed = entries.get("run.seed", 0)
    cfg.input = entries.get("run.input")
    cfg.self_convergence = entries.get("run.self_convergence", False)
    if cfg.input is not None and base_dir is not None and not Path(cfg.input).is_absolute():
        cfg.input = str(Path(base_dir) / cfg.input)

    rho11 = entries.get("state.rho11", 1.0)
    rho12 = complex(entries.get("state.rho12_re", 0.0), entries.get("state.rho12_im", 0.0))
    rho0 = np.array([[rho11, rho12], [rho12.conjugate(), 1 - rho11]], dtype=complex)
    if np.linalg.eigvalsh(rho0)[0] < -1e-12:
        line = min((lines[k] for k in lines if k.startswith("state.")), default=None)
        raise ConfigError("initial state is not positive semidefinite", line)
    cfg.rho0 = rho0

    if kind is None:
        return cfg

    section_lines = [ln for name, ln in lines.items() if name.startswith(kind + ".")]

    def line_of(key):
        return lines.get(f"{kind}.{key}", min(section_lines))

    for key in REQUIRED[kind]:
        if f"{kind}.{key}" not in entries:
            raise ConfigError(f"missing required key {kind}.{key}", min(section_lines))

    class _Getter:
        keys = [name.split(".", 1)[1] for name in entries if name.startswith(kind + ".")]

        def __call__(self, key, default=None):
            return entries.get(f"{kind}.{key}", default)

    get = _Getter()
    cfg.t_max = get("t_max")
    cfg.dt = get("dt")
    cfg.secular = get("secular", False)
    try:
        if kind == "spinboson":
            bath = BathSpec(
                _channel("f", get, base_dir, line_of),
                _channel("h", get, base_dir, line_of),
                _channel("cross", get, base_dir, line_of),
                beta=get("beta", math.inf),
            )
            cfg.model = SpinBosonParams(get("omega0"), bath, cfg.t_max, cfg.dt, cfg.secular)
        elif kind == "minibath":
            env = get("env", "vacuum")
            if env == "gibbs" and get("beta") is None:
                raise ConfigError("gibbs environment needs minibath.beta", line_of("env"))
            cfg.model = MiniBathSpec(
                get("n_modes"), get("n_max"), get("mode_freqs"), get("f_coeffs"), get("h_coeffs"),
                get("omega0"), env, get("beta", math.inf) if env == "gibbs" else math.inf,
            )
            _check_grid(cfg.t_max, cfg.dt)
        else:
            cfg.model = WhiteNoiseParams(get("gamma1"), get("gamma2"), get("eta"), get("omega0"))
            _check_grid(cfg.t_max, cfg.dt)
    except ConfigError:
        raise
    except (ValueError, VolterraError) as exc:
        msg = str(exc)
        key = "eta" if "eta" in msg else ("dt" if "t_max/dt" in msg else None)
        raise ConfigError(msg, line_of(key) if key else min(section_lines)) from None
    return cfg


def _check_grid(t_max, dt):
    grid_steps(t_max, dt)


def with_overrides(cfg: RunConfig, dt=None, t_max=None) -> RunConfig:
    """Copy of ``cfg`` with the time grid replaced (model re-validated)."""
    if dt is None and t_max is None:
        return cfg
    new = dataclasses.replace(cfg)
    new.dt = dt if dt is not None else cfg.dt
    new.t_max = t_max if t_max is not None else cfg.t_max
    if not (new.dt and new.dt > 0 and new.t_max and new.t_max > 0):
        raise ConfigError("dt and t_max overrides must be positive")
    try:
        if isinstance(cfg.model, SpinBosonParams):
            new.model = dataclasses.replace(cfg.model, dt=new.dt, t_max=new.t_max)
        else:
            _check_grid(new.t_max, new.dt)
    except (ValueError, VolterraError) as exc:
        raise ConfigError(str(exc)) from None
    return new


# -- records and output ----------------------------------------------------------


@dataclass
class TimeseriesRecord:
    t: float
    rho11: float
    rho22: float
    re_rho12: float
    im_rho12: float
    z1_re: float
    z1_im: float
    z2_re: float
    z2_im: float
    d1: float
    d2: float
    alpha_re: float
    alpha_im: float
    trace_defect: float
    choi_min_eig: float


FIELDS = tuple(f.name for f in dataclasses.fields(TimeseriesRecord))


def records_from_arrays(times, states, z1, z2, d1, d2, alpha, trace_defect, choi_min_eig):
    """Build records from per-time arrays; ``states`` are lab-frame ``(N, 2, 2)``."""
    out = []
    for k in range(len(times)):
        r = states[k]
        out.append(TimeseriesRecord(
            float(times[k]), float(r[0, 0].real), float(r[1, 1].real), float(r[0, 1].real), float(r[0, 1].imag),
            float(np.real(z1[k])), float(np.imag(z1[k])), float(np.real(z2[k])), float(np.imag(z2[k])),
            float(np.real(d1[k])), float(np.real(d2[k])), float(np.real(alpha[k])), float(np.imag(alpha[k])),
            float(trace_defect[k]), float(choi_min_eig[k]),
        ))
    return out


def records_from_series(series, rho0):
    """Records for a :class:`~feshbach_dyn.spinboson.QubitMapSeries`."""
    states = series.evolve(rho0, lab_frame=True)
    return records_from_arrays(series.times, states, series.z1, series.z2, series.d1, series.d2, series.alpha,
                               series.trace_defects(), series.choi_min_eigs())


def environment_info():
    import scipy

    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        for rec in records:
            w.writerow([format(getattr(rec, f), ".17g") for f in FIELDS])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != FIELDS:
        raise ValueError(f"{path}: header does not match the record fields")
    return [TimeseriesRecord(*(float(x) for x in row)) for row in rows[1:]]


def write_json(records, path, metadata):
    doc = {"metadata": metadata, "records": [dataclasses.asdict(r) for r in records]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, allow_nan=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    if "records" not in doc:
        raise ValueError(f"{path}: no 'records' array")
    return [TimeseriesRecord(**{f: float(r[f]) for f in FIELDS}) for r in doc["records"]], doc.get("metadata", {})


def read_series(path):
    """Records from a CSV or JSON file written by :func:`emit`."""
    path = Path(path)
    if path.suffix == ".json":
        return read_json(path)
    meta_path = path.with_name(path.name + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return read_csv(path), meta


def plot_script(records, title="qubit dynamics"):
    """gnuplot script with the data inlined, five stacked panels."""
    lines = [
        "# gnuplot script; run with: gnuplot -p <file>",
        f"set multiplot layout 5,1 title '{title}'",
        "set key outside right",
        "set xlabel 't'",
        "$DATA << EOD",
    ]
    for rec in records:
        lines.append(" ".join(format(getattr(rec, f), ".17g") for f in FIELDS))
    lines.append("EOD")
    col = {f: i + 1 for i, f in enumerate(FIELDS)}
    lines += [
        "set ylabel 'population'",
        f"plot $DATA using {col['t']}:{col['rho11']} with lines title 'rho11', "
        f"$DATA using {col['t']}:{col['rho22']} with lines title 'rho22'",
        "set ylabel '|z_k|'",
        f"plot $DATA using {col['t']}:(sqrt(${col['z1_re']}**2+${col['z1_im']}**2)) with lines title '|z1|', "
        f"$DATA using {col['t']}:(sqrt(${col['z2_re']}**2+${col['z2_im']}**2)) with lines title '|z2|'",
        "set ylabel 'd_k'",
        f"plot $DATA using {col['t']}:{col['d1']} with lines title 'd1', "
        f"$DATA using {col['t']}:{col['d2']} with lines title 'd2'",
        "set ylabel 'trace defect'",
        f"plot $DATA using {col['t']}:{col['trace_defect']} with lines title 'trace defect'",
        "set ylabel 'min Choi eig'",
        f"plot $DATA using {col['t']}:{col['choi_min_eig']} with lines title 'min Choi eigenvalue'",
        "unset multiplot",
    ]
    return "\n".join(lines) + "\n"


def emit(records, fmt, path, metadata=None, emit_plots=False):
    """Write the records (and sidecar files); returns the list of paths written."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    metadata = {} if metadata is None else metadata
    written = [path]
    if fmt == "csv":
        write_csv(records, path)
        meta_path = path.with_name(path.name + ".meta.json")
        meta_path.write_text(json.dumps(metadata, indent=1, sort_keys=True) + "\n")
        written.append(meta_path)
    else:
        write_json(records, path, metadata)
    if emit_plots:
        plot_path = path.with_name(path.stem + ".gp")
        plot_path.write_text(plot_script(records, title=metadata.get("mode", "qubit dynamics")))
        written.append(plot_path)
    return written
