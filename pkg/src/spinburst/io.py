"""Config files, CSV series, run manifests and the little SVG plotter.

Configs are flat JSON objects.  `load_config` fills every default and
rejects unknown keys by name, so a typo fails loudly instead of running
with a silently ignored setting.  Floats written to CSV use repr, which
round-trips exactly.  Each run lands in a directory named by the content
hash of its resolved config; identical configs map to identical names,
and an existing directory is refused unless forced.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .series import SERIES_COLUMNS, TimeSeries

FORMAT_VERSION = 1

SOLVERS = ("exact", "collective", "ladder", "reduced", "cumulant",
           "semiclassical")
PROFILE_KINDS = ("homogeneous", "gaussian", "nv")
_MISSING = object()


@dataclass(frozen=True)
class _Key:
    default: object
    kinds: tuple
    help: str


CONFIG_SCHEMA: dict = {
    "solver": _Key(_MISSING, (str,), "one of " + ", ".join(SOLVERS)),
    "profile": _Key("homogeneous", (str,),
                    "coupling profile: homogeneous, gaussian or nv"),
    "n": _Key(None, (int,), "number of nuclei (homogeneous profile)"),
    "lattice_side": _Key(None, (int,),
                         "side length of the gaussian-profile grid"),
    "width": _Key(None, (float, int),
                  "gaussian beam width; default side/4"),
    "nv_table": _Key(None, (str,), "path to a coupling shell table"),
    "concentration": _Key(None, (float, int),
                          "occupation probability for nv shells"),
    "cutoff_mhz": _Key(0.5, (float, int),
                       "drop nv shells coupled below this (2 pi MHz)"),
    "seed": _Key(0, (int,), "rng seed for nv sampling"),
    "epsilon": _Key(None, (float, int),
                    "cooperation parameter; fixes gamma_r"),
    "gamma_r": _Key(None, (float, int), "pump rate in natural units"),
    "gamma_r_mhz": _Key(None, (float, int),
                        "pump rate in 2 pi MHz (nv profile only)"),
    "omega_s": _Key(None, (float, int),
                    "electron splitting in natural units"),
    "detuning": _Key("half", (str,),
                     "named electron splitting: half (a/2) or zero"),
    "compensate": _Key(False, (bool,),
                       "track the mean bath shift with the drive"),
    "m_s": _Key(0.0, (float, int), "z projection of the pumped level"),
    "polarization": _Key(1.0, (float, int), "initial bath polarization"),
    "initial_state": _Key("product", (str,), "product or dicke_mixture"),
    "independent": _Key(False, (bool,),
                        "drop cross-site coherences (reference run)"),
    "t_max": _Key(50.0, (float, int), "integration horizon"),
    "n_samples": _Key(500, (int,), "output grid size"),
    "rtol": _Key(1e-8, (float, int), "solver relative tolerance"),
    "atol": _Key(1e-10, (float, int), "solver absolute tolerance"),
    "method": _Key("DOP853", (str,), "integrator method"),
    "c": _Key(1.0, (float, int), "ladder rate (ladder solver only)"),
    "omega_x": _Key(0.0, (float, int), "transverse nuclear drive"),
    "omega_x_electron": _Key(0.0, (float, int),
                             "transverse electron drive"),
    "scan_param": _Key(None, (str,), "mean-field scan parameter"),
    "scan_start": _Key(None, (float, int), "scan range start"),
    "scan_stop": _Key(None, (float, int), "scan range stop"),
    "scan_points": _Key(41, (int,), "scan grid size"),
    "scan_bidirectional": _Key(True, (bool,),
                               "run the scan both ways (hysteresis)"),
    "relax_time": _Key(200.0, (float, int),
                       "mean-field relaxation horizon"),
    "scan_tol": _Key(1e-8, (float, int),
                     "mean-field fixed-point residual target"),
    "label": _Key(None, (str,), "free-form run label"),
}


def _type_name(kinds) -> str:
    return " or ".join(k.__name__ for k in kinds)


def load_config(source) -> dict:
    """Validate a config mapping or JSON file; returns a resolved copy.

    Every schema key is present in the result.  Unknown keys and type
    mismatches raise ConfigError naming the key.
    """
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    else:
        raw = dict(source)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(CONFIG_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]!r}")
    resolved = {}
    for key, spec in CONFIG_SCHEMA.items():
        if key in raw and raw[key] is not None:
            value = raw[key]
            if bool in spec.kinds:
                if not isinstance(value, bool):
                    raise ConfigError(f"key {key!r} must be a boolean")
            elif isinstance(value, bool) or \
                    not isinstance(value, spec.kinds):
                raise ConfigError(
                    f"key {key!r} must be {_type_name(spec.kinds)}")
            if float in spec.kinds:
                value = float(value)
            resolved[key] = value
        elif spec.default is _MISSING:
            raise ConfigError(f"missing required config key: {key!r}")
        else:
            resolved[key] = spec.default
    _cross_validate(resolved)
    return resolved


def _cross_validate(cfg: dict):
    if cfg["solver"] not in SOLVERS:
        raise ConfigError(
            f"solver must be one of {SOLVERS}, got {cfg['solver']!r}")
    if cfg["profile"] not in PROFILE_KINDS:
        raise ConfigError(
            f"profile must be one of {PROFILE_KINDS}, got {cfg['profile']!r}")
    if cfg["detuning"] not in ("half", "zero"):
        raise ConfigError("detuning must be 'half' or 'zero'")
    if cfg["initial_state"] not in ("product", "dicke_mixture"):
        raise ConfigError("initial_state must be product or dicke_mixture")
    rates = [k for k in ("epsilon", "gamma_r", "gamma_r_mhz")
             if cfg[k] is not None]
    if len(rates) > 1:
        raise ConfigError(
            f"give only one of epsilon, gamma_r, gamma_r_mhz (got {rates})")
    if cfg["profile"] == "homogeneous" and cfg["solver"] != "semiclassical" \
            and cfg["n"] is None:
        raise ConfigError("homogeneous profile needs 'n'")
    if cfg["profile"] == "gaussian" and cfg["lattice_side"] is None:
        raise ConfigError("gaussian profile needs 'lattice_side'")
    if cfg["profile"] == "nv":
        if cfg["concentration"] is None:
            raise ConfigError("nv profile needs 'concentration'")
    elif cfg["gamma_r_mhz"] is not None:
        raise ConfigError("gamma_r_mhz applies to the nv profile only")
    if cfg["solver"] == "semiclassical":
        if cfg["scan_param"] is None:
            raise ConfigError("semiclassical runs need scan_param")
        if cfg["scan_start"] is None or cfg["scan_stop"] is None:
            raise ConfigError("scan_start and scan_stop are required")
        if cfg["n"] is None:
            raise ConfigError("semiclassical runs need 'n'")
    for key in ("rtol", "atol", "t_max", "relax_time", "scan_tol"):
        if not cfg[key] > 0:
            raise ConfigError(f"key {key!r} must be positive")
    if cfg["n_samples"] < 2:
        raise ConfigError("n_samples must be at least 2")


def config_hash(resolved: dict) -> str:
    """Stable content hash of a resolved config."""
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def prepare_run_dir(root, resolved: dict, force: bool = False) -> str:
    run_id = config_hash(resolved)
    path = os.path.join(os.fspath(root), run_id)
    if os.path.exists(path):
        if not force:
            raise ConfigError(
                f"run directory {path} already exists for this exact "
                "config; pass --force to overwrite")
    else:
        os.makedirs(path)
    return path


def write_resolved_config(path, resolved: dict):
    with open(path, "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# CSV series


def _fmt(x: float) -> str:
    if not math.isfinite(x):
        return repr(x)
    return repr(float(x))


def write_series(path, series: TimeSeries):
    with open(path, "w") as fh:
        fh.write(",".join(SERIES_COLUMNS) + "\n")
        cols = [series.column(name) for name in SERIES_COLUMNS]
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_series(path) -> TimeSeries:
    with open(path) as fh:
        header = fh.readline().strip()
        names = tuple(header.split(","))
        if names != SERIES_COLUMNS:
            raise ConfigError(
                f"unexpected series columns {names}, want {SERIES_COLUMNS}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in row] for row in rows])
    if data.size == 0:
        raise ConfigError(f"series file {path} holds no samples")
    kwargs = {name: data[:, k] for k, name in enumerate(SERIES_COLUMNS)}
    return TimeSeries(meta={"source": os.fspath(path)}, **kwargs)


def write_scan_csv(path, results):
    """Serialize one or more mean-field ScanResult objects."""
    header = ("param", "value", "s_x", "s_y", "s_z", "a_x", "a_y", "a_z",
              "order", "converged", "direction")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for result in results:
            for row in result.rows():
                fields = []
                for name in header:
                    v = row[name]
                    if isinstance(v, bool):
                        fields.append("1" if v else "0")
                    elif isinstance(v, float):
                        fields.append(_fmt(v))
                    else:
                        fields.append(str(v))
                fh.write(",".join(fields) + "\n")


# ---------------------------------------------------------------------------
# manifest


def manifest_record(resolved: dict, status: str, **extra) -> dict:
    record = {
        "format_version": FORMAT_VERSION,
        "run_id": config_hash(resolved),
        "status": status,
        "config": resolved,
    }
    record.update(extra)
    return record


def append_manifest(path, record: dict):
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True, default=_json_default))
        fh.write("\n")


def read_manifest(path) -> list:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# SVG plotting (deterministic, no plotting stack required)

_SVG_COLORS = ("#1b6ca8", "#c0392b", "#27ae60", "#8e44ad", "#d35400",
               "#16a085")


def _ticks(lo: float, hi: float, target: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10.0 ** math.floor(math.log10(span / target))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if span / (step * mult) <= target:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return ticks


def write_svg_plot(path, curves, log_y: bool = False, title: str = "",
                   x_label: str = "t", y_label: str = "intensity",
                   width: int = 720, height: int = 480):
    """Plot (label, x, y) curves into a standalone SVG file.

    Output is byte-for-byte deterministic for identical inputs: floats are
    formatted with a fixed precision and no timestamps or ids are
    embedded.
    """
    curves = [(str(label), np.asarray(x, float), np.asarray(y, float))
              for label, x, y in curves]
    if not curves:
        raise ConfigError("nothing to plot")
    margin_l, margin_r, margin_t, margin_b = 64, 16, 28, 44
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    def prep_y(y):
        if log_y:
            y = np.array(y, float)
            floor = np.max(y) * 1e-12 if np.max(y) > 0 else 1e-300
            y = np.where(y > floor, y, floor)
            return np.log10(y)
        return y

    xs = np.concatenate([c[1] for c in curves])
    ys = np.concatenate([prep_y(c[2]) for c in curves])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    def sx(x):
        return margin_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return margin_t + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">')
    parts.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    parts.append(
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#333" stroke-width="1"/>')
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{title}</text>')
    for tick in _ticks(x_lo, x_hi):
        px = sx(tick)
        parts.append(
            f'<line x1="{px:.2f}" y1="{margin_t + plot_h}" x2="{px:.2f}" '
            f'y2="{margin_t + plot_h + 5}" stroke="#333"/>')
        parts.append(
            f'<text x="{px:.2f}" y="{margin_t + plot_h + 18}" '
            f'text-anchor="middle" font-family="sans-serif" '
            f'font-size="11">{tick:.6g}</text>')
    for tick in _ticks(y_lo, y_hi):
        py = sy(tick)
        label = f"1e{tick:.6g}" if log_y else f"{tick:.6g}"
        parts.append(
            f'<line x1="{margin_l - 5}" y1="{py:.2f}" x2="{margin_l}" '
            f'y2="{py:.2f}" stroke="#333"/>')
        parts.append(
            f'<text x="{margin_l - 8}" y="{py + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{label}</text>')
    parts.append(
        f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 8}" '
        f'text-anchor="middle" font-family="sans-serif" '
        f'font-size="12">{x_label}</text>')
    parts.append(
        f'<text x="14" y="{margin_t + plot_h / 2:.1f}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {margin_t + plot_h / 2:.1f})">'
        f'{y_label}</text>')
    for k, (label, x, y) in enumerate(curves):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        yy = prep_y(y)
        pts = " ".join(f"{sx(px):.2f},{sy(py):.2f}"
                       for px, py in zip(x, yy))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>')
        parts.append(
            f'<text x="{margin_l + plot_w - 8}" '
            f'y="{margin_t + 16 + 14 * k}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11" '
            f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
