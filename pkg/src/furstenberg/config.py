"""Run configuration: parsing, validation and serialization."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction

import numpy as np

from .algebraic import ExactMatrix
from .errors import FurstenbergError, ParseError, WeightsNotProbability
from .walks import Atom, MeasureSpec

ENV_PREFIX = "FURSTENBERG_"


@dataclass
class RunConfig:
    """Everything needed to reproduce a run.  Exactly one measure source is normally set."""

    measure: dict | None = None
    measure_file: str | None = None
    example: dict | None = None
    seed: int = 0
    workers: int = 1
    samples: int = 100000
    burn_in: int = 2000
    n_max: int = 12
    runs: int = 1000
    out: str | None = None
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def build_measure(self) -> MeasureSpec:
        from .certificate import build_example

        if self.measure is not None:
            return measure_from_json(self.measure)
        if self.measure_file is not None:
            with open(self.measure_file, encoding="utf-8") as fh:
                return measure_from_json(_loads(fh.read()))
        if self.example is not None:
            params = dict(self.example)
            return build_example(params.pop("family"), **params)
        raise ParseError("no measure given (use --input, stdin, or an example family)")


def _loads(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _weight(value, where: str) -> Fraction:
    try:
        w = Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"{where}: weight {value!r} is not an exact rational") from None
    return w


def _float_matrix(rows, where: str) -> np.ndarray:
    try:
        m = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: matrix entries must be numbers") from None
    if m.shape != (2, 2) or not np.all(np.isfinite(m)):
        raise ParseError(f"{where}: matrix must be a finite 2x2 array")
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det <= 0:
        raise ParseError(f"{where}: determinant must be positive")
    return m / math.sqrt(det)


def measure_from_json(obj) -> MeasureSpec:
    """Measure from {"atoms": [{"m": [[..],[..]], "w": "p/q"}, ...]}; an optional "family" block rebuilds inexact atoms."""
    from .certificate import build_example

    if not isinstance(obj, dict) or "atoms" not in obj:
        raise ParseError("measure document needs an 'atoms' list")
    atoms_in = obj["atoms"]
    if not isinstance(atoms_in, list) or not atoms_in:
        raise ParseError("'atoms' must be a non-empty list")
    if any(isinstance(a, dict) and a.get("exact") is False for a in atoms_in) and "family" in obj:
        params = dict(obj["family"])
        return build_example(params.pop("family"), **params)
    atoms = []
    for i, a in enumerate(atoms_in):
        where = f"atoms[{i}]"
        if not isinstance(a, dict) or "m" not in a or "w" not in a:
            raise ParseError(f"{where}: needs fields 'm' and 'w'")
        w = _weight(a["w"], f"{where}.w")
        if a.get("exact") is False:
            atoms.append(Atom(_float_matrix(a["m"], f"{where}.m"), w, None, label=f"g{i}"))
            continue
        try:
            m = ExactMatrix.parse(a["m"])
        except ParseError as exc:
            raise ParseError(f"{where}.m: {exc}") from None
        except FurstenbergError as exc:
            raise type(exc)(f"{where}.m: {exc}") from None
        atoms.append(Atom(m.to_float(), w, m, label=f"g{i}"))
    total = sum((a.weight for a in atoms), Fraction(0))
    if total != 1:
        raise WeightsNotProbability(f"weights sum to {total}, not 1")
    params = dict(obj.get("family") or {})
    return MeasureSpec(tuple(atoms), str(obj.get("name", "")), params)


def parse_config(text: str) -> RunConfig:
    """RunConfig from JSON text; a bare measure document becomes a config with that measure."""
    obj = _loads(text)
    if not isinstance(obj, dict):
        raise ParseError("config must be a JSON object")
    if "atoms" in obj:
        measure_from_json(obj)
        return RunConfig(measure=obj)
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ParseError(f"unknown config fields: {', '.join(unknown)}")
    cfg = RunConfig(**obj)
    for name in ("seed", "workers", "samples", "burn_in", "n_max", "runs"):
        value = getattr(cfg, name)
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ParseError(f"field '{name}' must be a non-negative integer")
    if cfg.workers < 1:
        raise ParseError("field 'workers' must be at least 1")
    if cfg.measure is not None:
        measure_from_json(cfg.measure)
    return cfg


def env_default(name: str, default, kind=int):
    """Value of FURSTENBERG_<NAME> converted with ``kind``, else ``default``."""
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None or raw == "":
        return default
    try:
        return kind(raw)
    except ValueError:
        raise ParseError(f"environment variable {ENV_PREFIX + name.upper()}={raw!r} is not a valid {kind.__name__}") from None
