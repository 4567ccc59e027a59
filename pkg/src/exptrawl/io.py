"""Plain-text model configs and CSV files.

Model config: one ``key = value`` per line, ``#`` starts a comment::

    phi = 0.034
    nu.1 = 0.013
    nu.-1 = 0.011
    y0 = 2           # optional
    horizon = 75600  # optional

Optional keys are ``y0``, ``horizon``, ``delta`` and ``seed``.  Reals are written
with 17 significant digits so every file round-trips exactly; all files use
LF line endings.

A jump path is a ``time,size`` CSV plus a sidecar config ``<csv>.cfg`` holding
``y0`` and ``horizon``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ModelError
from .model import JumpPath, LevyMeasure, StateVector, TrawlModel
from .simulate import ARRIVAL, DEPARTURE, HiddenTrace

OPTIONAL_KEYS = {"y0": int, "horizon": float, "delta": float, "seed": int}


def fmt(x) -> str:
    """Shortest-safe round-trip text for a real: 17 significant digits."""
    return f"{float(x):.17g}"


@dataclass
class ModelConfig:
    model: TrawlModel | None
    extras: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.extras.get(key, default)


def _number(text, kind, lineno, key):
    try:
        value = kind(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key}: cannot parse {text!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"line {lineno}: {key}: value must be finite")
    return value


def parse_model_config(text: str, require_model: bool = True) -> ModelConfig:
    phi = None
    nu = {}
    extras = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first on line {seen[key]})")
        seen[key] = lineno
        if key == "phi":
            phi = _number(value, float, lineno, key)
            if not phi > 0:
                raise ConfigError(f"line {lineno}: phi must be positive")
        elif key.startswith("nu."):
            y = _number(key[3:], int, lineno, "mark")
            if y == 0:
                raise ConfigError(f"line {lineno}: mark 0 is not allowed")
            mass = _number(value, float, lineno, key)
            if not mass > 0:
                raise ConfigError(f"line {lineno}: {key} must be positive")
            nu[y] = mass
        elif key in OPTIONAL_KEYS:
            extras[key] = _number(value, OPTIONAL_KEYS[key], lineno, key)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if phi is None and nu:
        raise ConfigError("missing key 'phi'")
    if nu or phi is not None:
        if not nu:
            raise ConfigError("no 'nu.<y>' entries: the Levy measure is empty")
        try:
            model = TrawlModel(LevyMeasure.from_dict(nu), phi)
        except ModelError as exc:
            raise ConfigError(str(exc)) from None
    else:
        model = None
    if require_model and model is None:
        raise ConfigError("config does not define a model (phi and nu.<y>)")
    return ModelConfig(model, extras)


def read_model_config(path, require_model: bool = True) -> ModelConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return parse_model_config(text, require_model)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def format_model_config(model: TrawlModel | None, **extras) -> str:
    lines = []
    if model is not None:
        lines.append(f"phi = {fmt(model.phi)}")
        lines += [f"nu.{y} = {fmt(m)}" for y, m in zip(model.support, model.levy.mass)]
    for key in OPTIONAL_KEYS:
        if extras.get(key) is not None:
            value = extras[key]
            lines.append(f"{key} = {fmt(value) if OPTIONAL_KEYS[key] is float else int(value)}")
    return "\n".join(lines) + "\n"


def write_text(path, text: str):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def write_model_config(path, model: TrawlModel | None, **extras):
    write_text(path, format_model_config(model, **extras))


# ---------------------------------------------------------------------------
# CSV


def write_csv(target, header, rows):
    """Write to a file name or an open text stream; reals use :func:`fmt`."""
    if hasattr(target, "write"):
        _write_rows(target, header, rows)
    else:
        with open(target, "w", newline="") as fh:
            _write_rows(fh, header, rows)


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def sidecar(path) -> Path:
    return Path(str(path) + ".cfg")


def write_path(path, jp: JumpPath):
    write_csv(path, ["time", "size"], zip(jp.times.tolist(), jp.sizes.tolist()))
    write_model_config(sidecar(path), None, y0=jp.y0, horizon=jp.horizon)


def read_path(path, y0=None, horizon=None) -> JumpPath:
    """Read a ``time,size`` CSV.  ``y0``/``horizon`` come from the sidecar config
    when present, otherwise from the arguments."""
    meta = sidecar(path)
    if meta.exists():
        cfg = read_model_config(meta, require_model=False)
        y0 = cfg.get("y0", y0)
        horizon = cfg.get("horizon", horizon)
    if y0 is None or horizon is None:
        raise ConfigError(f"{path}: y0 and horizon must be given (sidecar {meta.name} or model config)")
    times, sizes = [], []
    try:
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows, None)
            if header != ["time", "size"]:
                raise ConfigError(f"{path}: line 1: expected header 'time,size', got {header}")
            for lineno, row in enumerate(rows, 2):
                if not row:
                    continue
                if len(row) != 2:
                    raise ConfigError(f"{path}: line {lineno}: expected 2 fields, got {len(row)}")
                times.append(_number(row[0], float, lineno, "time"))
                sizes.append(_number(row[1], int, lineno, "size"))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return JumpPath(int(y0), float(horizon), times, sizes)


def write_hidden(path, trace: HiddenTrace):
    """``time,mark,kind`` with one ``initial`` row (time 0) per event alive at 0."""
    rows = []
    for y, c in trace.initial_state.items:
        rows += [(0.0, y, "initial")] * c
    kinds = {ARRIVAL: "arrival", DEPARTURE: "departure"}
    for t, m, k in zip(trace.times.tolist(), trace.marks.tolist(), trace.kinds.tolist()):
        rows.append((t, m, kinds[k]))
    write_csv(path, ["time", "mark", "kind"], rows)


def read_hidden(path) -> HiddenTrace:
    initial, times, marks, kinds = {}, [], [], []
    codes = {"arrival": ARRIVAL, "departure": DEPARTURE}
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        if next(rows, None) != ["time", "mark", "kind"]:
            raise ConfigError(f"{path}: line 1: expected header 'time,mark,kind'")
        for lineno, row in enumerate(rows, 2):
            if len(row) != 3:
                raise ConfigError(f"{path}: line {lineno}: expected 3 fields")
            t = _number(row[0], float, lineno, "time")
            y = _number(row[1], int, lineno, "mark")
            if row[2] == "initial":
                initial[y] = initial.get(y, 0) + 1
            elif row[2] in codes:
                times.append(t)
                marks.append(y)
                kinds.append(codes[row[2]])
            else:
                raise ConfigError(f"{path}: line {lineno}: unknown kind {row[2]!r}")
    return HiddenTrace(
        StateVector.from_dict(initial), np.array(times), np.array(marks, np.int64), np.array(kinds, np.int64)
    )
