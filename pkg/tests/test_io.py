import json
import struct

import numpy as np
import pytest

from hsidn import io as hio
from hsidn.core import HsiCube
from hsidn.errors import (
    BadMagic,
    DimOverflow,
    HsrFormatError,
    IoFailure,
    ParseError,
    PayloadSizeMismatch,
    TruncatedPayload,
    UnknownPreset,
    UnsupportedDtype,
    UnsupportedVersion,
)
from hsidn.metrics import evaluate
from hsidn.noise import NoiseSpec
from hsidn.solver import SolverParams


def test_single_value_layout(tmp_path):
    p = tmp_path / "one.hsr"
    hio.write_hsr(HsiCube(np.array([[[0.5]]])), p)
    blob = p.read_bytes()
    assert len(blob) == 27
    assert blob[:19] == b"HSR1" + struct.pack("<H", 1) + b"\x01" + struct.pack("<3I", 1, 1, 1)
    assert blob[19:] == struct.pack("<d", 0.5)


def test_payload_order_b_fastest():
    x = np.arange(12, dtype=float).reshape(2, 3, 2)
    blob = hio.encode_hsr(HsiCube(x))
    vals = struct.unpack("<12d", blob[19:])
    assert vals == tuple(float(v) for v in range(12))
    assert struct.unpack_from("<3I", blob, 7) == (2, 3, 2)


def test_round_trip_bit_exact(tmp_path, rng):
    x = HsiCube(rng.standard_normal((5, 4, 3)) * 1e300)
    hio.write_hsr(x, tmp_path / "a.hsr")
    hio.write_hsr(x, tmp_path / "b.hsr")
    assert (tmp_path / "a.hsr").read_bytes() == (tmp_path / "b.hsr").read_bytes()
    back = hio.read_hsr(tmp_path / "a.hsr")
    assert back.data.tobytes() == x.data.tobytes()


def _header(magic=b"HSR1", version=1, dtype=1, dims=(2, 2, 2)):
    return struct.pack("<4sHB3I", magic, version, dtype, *dims)


@pytest.mark.parametrize(
    "blob,err",
    [
        (_header(magic=b"XXXX") + bytes(64), BadMagic),
        (b"XX", BadMagic),
        (_header(version=2) + bytes(64), UnsupportedVersion),
        (_header(dtype=2) + bytes(64), UnsupportedDtype),
        (_header() + bytes(56), TruncatedPayload),
        (_header() + bytes(72), PayloadSizeMismatch),
        (_header()[:10], TruncatedPayload),
        (_header(dims=(0, 2, 2)), HsrFormatError),
    ],
)
def test_decode_errors(blob, err):
    with pytest.raises(err):
        hio.decode_hsr(blob)


def test_dim_overflow(monkeypatch):
    monkeypatch.setattr(hio.sys, "maxsize", 2**31 - 1)
    with pytest.raises(DimOverflow):
        hio.decode_hsr(_header(dims=(2**16, 2**16, 2)))


def test_missing_and_unwritable(tmp_path):
    with pytest.raises(IoFailure):
        hio.read_hsr(tmp_path / "nope.hsr")
    with pytest.raises(IoFailure):
        hio.write_hsr(HsiCube(np.zeros((1, 1, 1))), tmp_path / "missing" / "x.hsr")


def write_cfg(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return p


def test_config_preset_resolution(tmp_path):
    cfg = hio.load_config(write_cfg(tmp_path, {"input": "x.hsr", "outputs": {"restored": "r.hsr"},
                                                "preset": "cave-case1"}))
    assert cfg.params == SolverParams(r=4, tau=1.0, beta=1.0, gamma=0.0)
    cfg2 = hio.load_config(write_cfg(tmp_path, {"input": "x", "outputs": {"restored": "r"}, "preset": "wdc-case4",
                                                 "params": {"max_iter": 7}, "case": 4, "seed": 3}))
    assert (cfg2.params.r, cfg2.params.tau, cfg2.params.max_iter) == (3, (0.1, 0.1), 7)
    assert cfg2.noise_spec().deadline_fraction == 0.2 and cfg2.noise_spec().seed == 3
    assert len(cfg2.config_hash) == 64


def test_config_hash_is_canonical():
    a = {"input": "x", "outputs": {"restored": "r"}, "preset": "cave-case1"}
    b = {"preset": "cave-case1", "outputs": {"restored": "r"}, "input": "x"}
    assert hio.config_hash(a) == hio.config_hash(b)


@pytest.mark.parametrize(
    "obj",
    [
        {"input": "x", "outputs": {"restored": "r"}, "preset": "cave-case1", "sed": 1},
        {"input": "x", "outputs": {"restored": "r", "trce": "t"}, "preset": "cave-case1"},
        {"input": "x", "outputs": {"restored": "r"}},
        {"input": "x", "outputs": {"restored": "r"}, "preset": "cave-case1", "case": 1, "noise": {}},
        {"input": "x", "outputs": {"restored": "r"}, "params": {"r": 2, "tua": 1}},
        {"input": "x", "outputs": {"restored": "r"}, "preset": "cave-case1", "case": 9},
    ],
)
def test_config_rejects(tmp_path, obj):
    with pytest.raises(ParseError):
        hio.load_config(write_cfg(tmp_path, obj))


def test_config_parse_error_location(tmp_path):
    with pytest.raises(ParseError) as info:
        hio.load_config(write_cfg(tmp_path, '{\n  "input": "x",\n  oops\n}'))
    assert (info.value.line, info.value.column) == (3, 3)


def test_unknown_preset(tmp_path):
    with pytest.raises(UnknownPreset):
        hio.load_config(write_cfg(tmp_path, {"input": "x", "outputs": {"restored": "r"}, "preset": "cave-case0"}))


def test_results_round_trip(tmp_path, rng):
    ref = HsiCube(rng.random((12, 12, 2)))
    rep = evaluate(ref, ref)
    doc = hio.results_document(
        params=SolverParams(r=2), seconds=0.5, iterations=12, converged=True,
        final_residuals=(1e-6, 2e-6, 3e-7), metrics=rep, noise=NoiseSpec(0.1, 0.1, 0.0, seed=4),
        config_hash="ab" * 32,
    )
    hio.emit_results(doc, tmp_path / "res.json")
    back = hio.load_results(tmp_path / "res.json")
    assert back["metrics"] == rep and back["params"] == SolverParams(r=2)
    assert back["noise"] == NoiseSpec(0.1, 0.1, 0.0, seed=4)
    assert back["iterations"] == 12 and back["config_hash"] == "ab" * 32


def test_table_csv():
    text = hio.table_csv([{"a": 1, "b": 0.1 + 0.2}, {"a": "x", "b": float("inf")}], ("a", "b", "c"))
    assert text == "a,b,c\n1,0.3,\nx,inf,\n"
