"""HSR1 cube container, JSON run configuration and results, CSV tables.

HSR1 layout (all little-endian)::

    offset  size  field
    0       4     magic b"HSR1"
    4       2     version (u16) = 1
    6       1     dtype (u8), 1 = float64
    7       12    M, N, B (u32 each)
    19      8MNB  float64 payload, row-major (m, n, b), b fastest
"""

from __future__ import annotations

import csv
import hashlib
import io as _stdio
import json
import math
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import HsiCube
from .errors import (
    BadMagic,
    DimOverflow,
    HsrFormatError,
    IoFailure,
    ParseError,
    PayloadSizeMismatch,
    TruncatedPayload,
    UnsupportedDtype,
    UnsupportedVersion,
)
from .metrics import MetricsReport
from .noise import CASES, NoiseSpec, case_spec
from .presets import resolve_preset
from .solver import SolverParams

MAGIC = b"HSR1"
VERSION = 1
DTYPE_F64 = 1
HEADER = struct.Struct("<4sHB3I")
HEADER_SIZE = HEADER.size  # 19


def encode_hsr(cube: HsiCube) -> bytes:
    m, n, b = cube.shape
    payload = np.ascontiguousarray(cube.data, dtype="<f8").tobytes()
    return HEADER.pack(MAGIC, VERSION, DTYPE_F64, m, n, b) + payload


def decode_hsr(blob: bytes) -> HsiCube:
    if len(blob) < HEADER_SIZE:
        if not MAGIC.startswith(blob[:4]):
            raise BadMagic(f"bad magic {blob[:4]!r}")
        raise TruncatedPayload(f"header needs {HEADER_SIZE} bytes, file has {len(blob)}")
    magic, version, dtype, m, n, b = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported version {version}")
    if dtype != DTYPE_F64:
        raise UnsupportedDtype(f"unsupported dtype code {dtype}")
    if 0 in (m, n, b):
        raise HsrFormatError(f"zero dimension in header: {(m, n, b)}")
    count = m * n * b
    if count * 8 > sys.maxsize:
        raise DimOverflow(f"{m}x{n}x{b} float64 payload exceeds addressable size")
    have = len(blob) - HEADER_SIZE
    if have < count * 8:
        raise TruncatedPayload(f"payload has {have} bytes, header declares {count * 8}")
    if have > count * 8:
        raise PayloadSizeMismatch(f"payload has {have} bytes, header declares {count * 8}")
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=HEADER_SIZE)
    return HsiCube(data.reshape(m, n, b))


def read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from exc


def write_bytes(path, blob: bytes) -> None:
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_text(path, text: str) -> None:
    write_bytes(path, text.encode("utf-8"))


def read_hsr(path) -> HsiCube:
    return decode_hsr(read_bytes(path))


def write_hsr(cube: HsiCube, path) -> None:
    write_bytes(path, encode_hsr(cube))


# -- run configuration --------------------------------------------------------

_CONFIG_KEYS = {"input", "truth", "outputs", "noise", "case", "preset", "params", "seed"}
_OUTPUT_KEYS = {"restored", "trace", "results", "components"}


@dataclass
class RunConfig:
    input: str
    outputs: dict
    truth: str | None = None
    noise: NoiseSpec | None = None
    case: int | None = None
    preset: str | None = None
    params: SolverParams | None = None
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)

    def noise_spec(self) -> NoiseSpec | None:
        if self.noise is not None:
            return self.noise
        if self.case is not None:
            return case_spec(self.case, self.seed)
        return None


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode("utf-8")).hexdigest()


def parse_json(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {what}: {exc.msg}", exc.lineno, exc.colno) from exc


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ParseError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ParseError("configuration must be a JSON object")
    _reject_unknown(raw, _CONFIG_KEYS, "config")
    if "input" not in raw or not isinstance(raw["input"], str):
        raise ParseError("config needs a string 'input'")
    outputs = raw.get("outputs", {})
    if not isinstance(outputs, dict) or "restored" not in outputs:
        raise ParseError("config needs 'outputs' with at least 'restored'")
    _reject_unknown(outputs, _OUTPUT_KEYS, "outputs")
    if "noise" in raw and "case" in raw:
        raise ParseError("'noise' and 'case' are mutually exclusive")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ParseError(f"'seed' must be a nonnegative integer, got {seed!r}")
    noise = None
    if "noise" in raw:
        try:
            noise = NoiseSpec.from_dict(raw["noise"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"invalid noise spec: {exc}") from exc
    case = raw.get("case")
    if case is not None and case not in CASES:
        raise ParseError(f"'case' must be one of {sorted(CASES)}, got {case!r}")
    overrides = raw.get("params", {})
    if not isinstance(overrides, dict):
        raise ParseError("'params' must be an object")
    preset = raw.get("preset")
    try:
        if preset is not None:
            params = resolve_preset(preset, **params_fields(overrides))
        elif overrides:
            params = SolverParams.from_dict(overrides)
        else:
            params = None
    except TypeError as exc:
        raise ParseError(f"invalid params: {exc}") from exc
    if params is None:
        raise ParseError("config needs 'preset' or 'params'")
    return RunConfig(
        input=raw["input"],
        outputs=dict(outputs),
        truth=raw.get("truth"),
        noise=noise,
        case=case,
        preset=preset,
        params=params,
        seed=seed,
        raw=raw,
    )


def params_fields(d: dict) -> dict:
    d = dict(d)
    if isinstance(d.get("tau"), list):
        d["tau"] = tuple(d["tau"])
    return d


def load_config(path) -> RunConfig:
    text = read_bytes(path).decode("utf-8")
    return parse_config(parse_json(text, str(path)))


# -- results documents ----------------------------------------------------------


def _clean(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def results_document(
    *,
    params: SolverParams,
    seconds: float,
    iterations: int,
    converged: bool,
    final_residuals: tuple[float, float, float] | None = None,
    metrics: MetricsReport | None = None,
    noise: NoiseSpec | None = None,
    config_hash: str | None = None,
) -> dict:
    return {
        "config_hash": config_hash,
        "noise": noise.to_dict() if noise is not None else None,
        "params": params.to_dict(),
        "metrics": metrics.to_dict() if metrics is not None else None,
        "seconds": float(seconds),
        "iterations": int(iterations),
        "converged": bool(converged),
        "final_residuals": list(final_residuals) if final_residuals is not None else None,
    }


def emit_results(doc: dict, path) -> None:
    write_text(path, json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n")


def load_results(path) -> dict:
    doc = parse_json(read_bytes(path).decode("utf-8"), str(path))
    if doc.get("metrics") is not None:
        doc["metrics"] = MetricsReport.from_dict(doc["metrics"])
    if doc.get("noise") is not None:
        doc["noise"] = NoiseSpec.from_dict(doc["noise"])
    if doc.get("params") is not None:
        doc["params"] = SolverParams.from_dict(doc["params"])
    return doc


def write_json(obj, path) -> None:
    write_text(path, json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


# -- CSV tables -------------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".10g")
    return str(v)


def table_csv(rows: list[dict], columns: tuple[str, ...]) -> str:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def write_table(rows: list[dict], columns: tuple[str, ...], path) -> None:
    write_text(path, table_csv(rows, columns))
