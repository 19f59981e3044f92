"""``hsidn`` command line: simulate, denoise, evaluate, benchmark, convert.

Exit codes: 0 success, 2 bad flags or configuration, 3 I/O or container
errors, 4 solver produced non-finite values, 5 every benchmark row failed.
All flags are validated before any file is read or written.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as hio
from .core import HsiCube, unfold3
from .errors import (
    ConfigError,
    DimensionMismatch,
    HsiError,
    HsrFormatError,
    IoFailure,
    NonFiniteState,
)
from .metrics import evaluate
from .noise import CASES, NoiseSpec, apply_noise, case_spec, sweep_specs
from .presets import resolve_preset
from .solver import Variant, SolverParams, residuals, solve

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NONFINITE = 4
EXIT_ALL_FAILED = 5

BENCH_COLUMNS = ("case", "variant", "psnr_db", "ssim", "sam_rad", "seconds", "iters", "error")


class FlagError(HsiError, ValueError):
    def __init__(self, flag: str, message: str):
        self.flag = flag
        super().__init__(f"{flag}: {message}")


def _fraction(flag: str, value: float | None) -> float | None:
    if value is not None and not 0.0 <= value <= 1.0:
        raise FlagError(flag, f"must lie in [0, 1], got {value}")
    return value


def _nonneg(flag: str, value: float | None) -> float | None:
    if value is not None and not value >= 0:
        raise FlagError(flag, f"must be nonnegative, got {value}")
    return value


def _positive(flag: str, value):
    if value is not None and not value > 0:
        raise FlagError(flag, f"must be positive, got {value}")
    return value


def _seed(value: int) -> int:
    if not 0 <= value < 2**64:
        raise FlagError("--seed", f"must be an unsigned 64-bit integer, got {value}")
    return value


def _parse_dims(text: str) -> tuple[int, int, int]:
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise FlagError("--dims", f"expected M,N,B integers, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise FlagError("--dims", f"expected three positive integers M,N,B, got {text!r}")
    return dims


# -- simulate -------------------------------------------------------------------


def _noise_from_flags(args) -> NoiseSpec:
    explicit = {
        "--gaussian-var": args.gaussian_var,
        "--impulse": args.impulse,
        "--deadline": args.deadline,
    }
    _fraction("--affected-bands", args.affected_bands)
    if args.case is not None:
        given = [k for k, v in explicit.items() if v is not None]
        if given:
            raise FlagError(given[0], "cannot be combined with --case")
        spec = case_spec(args.case, args.seed, args.affected_bands, args.sigma_is_std)
        if args.stripe_offset:
            spec = NoiseSpec(**{**spec.to_dict(), "stripe_offset": args.stripe_offset})
        return spec
    if all(v is None for v in explicit.values()):
        raise FlagError("--case", "give --case or at least one of --gaussian-var/--impulse/--deadline")
    _nonneg("--gaussian-var", args.gaussian_var)
    _fraction("--impulse", args.impulse)
    _fraction("--deadline", args.deadline)
    var = args.gaussian_var or 0.0
    if args.sigma_is_std:
        var = var * var
    return NoiseSpec(
        var,
        args.impulse or 0.0,
        args.deadline or 0.0,
        args.affected_bands,
        args.seed,
        args.stripe_offset,
    )


def cmd_simulate(args) -> int:
    _seed(args.seed)
    spec = _noise_from_flags(args)
    x = hio.read_hsr(args.input)
    hio.write_hsr(apply_noise(x, spec), args.output)
    if args.spec_out:
        hio.write_text(args.spec_out, spec.to_json())
    return EXIT_OK


# -- denoise --------------------------------------------------------------------

_PARAM_FLAGS = {
    "r": "--r",
    "tau": "--tau",
    "beta": "--beta",
    "gamma": "--gamma",
    "alpha": "--alpha",
    "rho0": "--rho0",
    "eta": "--eta",
    "rho_max": "--rho-max",
    "eps": "--eps",
    "max_iter": "--max-iter",
    "variant": "--variant",
    "w_floor": "--w-floor",
    "u_solve": "--u-solve",
    "l21_groups": "--l21-groups",
}


def _params_from_flags(args) -> SolverParams:
    given = {k: getattr(args, k) for k in _PARAM_FLAGS if getattr(args, k) is not None}
    for k in ("tau", "beta", "gamma"):
        if k in given:
            _nonneg(_PARAM_FLAGS[k], given[k])
    for k in ("alpha", "rho0", "rho_max", "eps", "max_iter", "w_floor", "r"):
        if k in given:
            _positive(_PARAM_FLAGS[k], given[k])
    if "eta" in given and not given["eta"] >= 1:
        raise FlagError("--eta", f"must be at least 1, got {given['eta']}")
    try:
        if args.preset:
            return resolve_preset(args.preset, **given)
        if "r" not in given:
            raise FlagError("--r", "required unless --preset or --config is given")
        return SolverParams(**given)
    except ConfigError as exc:
        raise FlagError("--preset", str(exc)) from exc


def _summary_line(result, y_data) -> str:
    r1, r2, rf = residuals(result.state, unfold3(y_data).data)
    return (
        f"iterations={result.iterations} converged={'yes' if result.converged else 'no'} "
        f"residuals={r1:.3e},{r2:.3e},{rf:.3e} seconds={result.seconds:.3f}"
    )


def _emit_components(result, prefix: str) -> None:
    for tag, cube in (("S", result.s_hat), ("D", result.d_hat), ("W", result.w_hat)):
        hio.write_hsr(cube, f"{prefix}.{tag}.hsr")


def cmd_denoise(args) -> int:
    if args.config:
        cfg = hio.load_config(args.config)
        params = cfg.params
        input_path, output = cfg.input, cfg.outputs["restored"]
        trace_out = cfg.outputs.get("trace")
        results_out = cfg.outputs.get("results")
        components = cfg.outputs.get("components")
        truth_path = cfg.truth
        noise = cfg.noise_spec()
        chash = cfg.config_hash
    else:
        for flag, v in (("--input", args.input), ("--output", args.output)):
            if not v:
                raise FlagError(flag, "required unless --config is given")
        params = _params_from_flags(args)
        input_path, output = args.input, args.output
        trace_out, results_out = args.trace_out, args.results_out
        components, truth_path = args.emit_components, args.truth
        noise, chash = None, None
        if args.spec_in:
            text = hio.read_bytes(args.spec_in).decode("utf-8")
            try:
                noise = NoiseSpec.from_json(text)
            except (ValueError, TypeError) as exc:
                raise FlagError("--spec-in", f"invalid noise spec: {exc}") from exc
    y = hio.read_hsr(input_path)
    truth = hio.read_hsr(truth_path) if truth_path else None
    if args.config and noise is not None:
        # config describes simulate + denoise on a clean input
        truth = truth if truth is not None else y
        y = apply_noise(y, noise)
    if truth is not None and truth.shape != y.shape:
        raise DimensionMismatch(f"truth shape {truth.shape} != input shape {y.shape}")
    params.check_shape(y.shape[0] * y.shape[1], y.shape[2])
    result = solve(y, params, truth=truth)
    hio.write_hsr(result.x_hat, output)
    if trace_out:
        hio.write_text(trace_out, result.trace.to_csv())
    if components:
        _emit_components(result, components)
    report = evaluate(truth, result.x_hat) if truth is not None else None
    if results_out:
        doc = hio.results_document(
            params=params,
            seconds=result.seconds,
            iterations=result.iterations,
            converged=result.converged,
            final_residuals=residuals(result.state, unfold3(y).data),
            metrics=report,
            noise=noise,
            config_hash=chash,
        )
        hio.emit_results(doc, results_out)
    line = _summary_line(result, y)
    if report is not None:
        line += " " + report.summary()
    print(line)
    return EXIT_OK


# -- evaluate -------------------------------------------------------------------


def cmd_evaluate(args) -> int:
    ref = hio.read_hsr(args.ref)
    test = hio.read_hsr(args.test)
    report = evaluate(ref, test)
    if args.json_out:
        hio.write_json(report.to_dict(), args.json_out)
    print(report.summary())
    return EXIT_OK


# -- benchmark ------------------------------------------------------------------


def _parse_cases(text: str) -> list[tuple[str, NoiseSpec | int]]:
    """``"1..5"``, ``"1,3,5"``, ``"sweep:impulse"`` or ``"sweep:gaussian"``."""
    text = text.strip()
    if not text:
        raise FlagError("--cases", "empty case list")
    if text.startswith("sweep:"):
        return [("sweep", text[len("sweep:"):])]
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = (int(v) for v in part.split(".."))
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise FlagError("--cases", f"cannot parse {part!r}") from None
    if not out:
        raise FlagError("--cases", "empty case list")
    bad = [c for c in out if c not in CASES]
    if bad:
        raise FlagError("--cases", f"unknown case(s) {bad}; expected 1..5")
    return [("case", c) for c in out]


def _bench_points(cases, seed: int, sigma_is_std: bool, affected: float):
    points = []
    for kind, v in cases:
        if kind == "sweep":
            try:
                specs = sweep_specs(v, seed, affected)
            except ValueError as exc:
                raise FlagError("--cases", str(exc)) from exc
            level = "impulse_fraction" if v == "impulse" else "gaussian_variance"
            for s in specs:
                val = getattr(s, level)
                if v == "gaussian":
                    val = math.sqrt(val)
                points.append((f"{v}:{val:.2f}", v, s))
        else:
            points.append((str(v), v, case_spec(v, seed, affected, sigma_is_std)))
    return points


def _load_preset_map(path) -> dict:
    if not path:
        return {}
    raw = hio.parse_json(hio.read_bytes(path).decode("utf-8"), str(path))
    if not isinstance(raw, dict):
        raise FlagError("--preset-map", "must be a JSON object")
    return raw


def _resolve_row_params(entry, variant: str, max_iter) -> SolverParams:
    extra = {"variant": variant}
    if max_iter is not None:
        extra["max_iter"] = max_iter
    if isinstance(entry, str):
        return resolve_preset(entry, **extra)
    if isinstance(entry, dict):
        d = dict(entry)
        preset = d.pop("preset", None)
        fields = {**hio.params_fields(d), **extra}
        return resolve_preset(preset, **fields) if preset else SolverParams(**fields)
    raise ConfigError(f"preset map entries must be names or objects, got {entry!r}")


def _map_entry(pmap: dict, key, variant: str, default_preset: str | None):
    for k in (f"{key}:{variant}", str(key)):
        if k in pmap:
            return pmap[k]
    if default_preset:
        return default_preset
    return f"synthetic-case{key if isinstance(key, int) else 5}"


def _bench_row(job) -> dict:
    label, variant, spec, entry, input_path, traces_dir, max_iter = job
    row = {"case": label, "variant": variant}
    try:
        params = _resolve_row_params(entry, variant, max_iter)
        x = hio.read_hsr(input_path)
        y = apply_noise(x, spec)
        result = solve(y, params, truth=x)
        rep = evaluate(x, result.x_hat, per_band=False)
        row.update(
            psnr_db=rep.psnr_db,
            ssim=rep.ssim,
            sam_rad=rep.sam_rad,
            seconds=result.seconds,
            iters=result.iterations,
        )
        if traces_dir:
            safe = label.replace(":", "_")
            hio.write_text(Path(traces_dir) / f"case{safe}_{variant}.csv", result.trace.to_csv())
    except (HsiError, ValueError, TypeError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def worker_slots(requested: int) -> int:
    cap = os.environ.get("HSIDN_THREADS")
    n = max(1, requested)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def cmd_benchmark(args) -> int:
    _seed(args.seed)
    _fraction("--affected-bands", args.affected_bands)
    _positive("--workers", args.workers)
    _positive("--max-iter", args.max_iter)
    cases = _parse_cases(args.cases)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if not variants:
        raise FlagError("--variants", "empty variant list")
    for v in variants:
        try:
            Variant(v)
        except ValueError:
            raise FlagError("--variants", f"unknown variant {v!r}") from None
    points = _bench_points(cases, args.seed, args.sigma_is_std, args.affected_bands)
    pmap = _load_preset_map(args.preset_map)
    if args.traces_dir:
        try:
            Path(args.traces_dir).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(f"cannot create {args.traces_dir}: {exc}") from exc
    # fail fast on an unreadable input instead of once per row
    hio.read_hsr(args.input)
    jobs = [
        (label, v, spec, _map_entry(pmap, key, v, args.preset), args.input, args.traces_dir, args.max_iter)
        for label, key, spec in points
        for v in variants
    ]
    slots = worker_slots(args.workers)
    if slots == 1:
        rows = [_bench_row(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=slots) as pool:
            rows = list(pool.map(_bench_row, jobs))
    hio.write_table(rows, BENCH_COLUMNS, args.table_out)
    ok = sum(1 for r in rows if not r.get("error"))
    print(f"benchmark: {ok}/{len(rows)} rows succeeded -> {args.table_out}")
    return EXIT_OK if ok else EXIT_ALL_FAILED


# -- convert --------------------------------------------------------------------


def raw_to_cube(values: np.ndarray, dims: tuple[int, int, int], order: str) -> HsiCube:
    m, n, b = dims
    if order == "band-major":
        return HsiCube(values.reshape(b, m, n).transpose(1, 2, 0))
    return HsiCube(values.reshape(m, n, b))


def cube_to_raw(cube: HsiCube, order: str) -> bytes:
    data = cube.data.transpose(2, 0, 1) if order == "band-major" else cube.data
    return np.ascontiguousarray(data, dtype="<f8").tobytes()


def cmd_convert(args) -> int:
    if args.raw_input:
        if args.hsr_input:
            raise FlagError("--hsr-input", "cannot be combined with --raw-input")
        if not args.dims:
            raise FlagError("--dims", "required with --raw-input")
        if not args.output:
            raise FlagError("--output", "required with --raw-input")
        dims = _parse_dims(args.dims)
        blob = hio.read_bytes(args.raw_input)
        want = 8 * dims[0] * dims[1] * dims[2]
        if len(blob) != want:
            raise FlagError(
                "--dims",
                f"size mismatch: {args.dims} declares {want // 8} values, file holds {len(blob) / 8:g}",
            )
        cube = raw_to_cube(np.frombuffer(blob, dtype="<f8"), dims, args.order)
        hio.write_hsr(cube, args.output)
        return EXIT_OK
    if args.hsr_input:
        if not args.raw_output:
            raise FlagError("--raw-output", "required with --hsr-input")
        cube = hio.read_hsr(args.hsr_input)
        hio.write_bytes(args.raw_output, cube_to_raw(cube, args.order))
        return EXIT_OK
    raise FlagError("--raw-input", "give --raw-input or --hsr-input")


# -- parser ---------------------------------------------------------------------


def _tau(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return tuple(parts)
    raise argparse.ArgumentTypeError("expected one value or a pair t1,t2")


def _rho0(text: str):
    return "auto" if text == "auto" else float(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hsidn", description="Mixed-noise hyperspectral denoising.")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("simulate", help="contaminate a clean cube")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--spec-out")
    s.add_argument("--case", type=int, choices=sorted(CASES))
    s.add_argument("--gaussian-var", type=float)
    s.add_argument("--impulse", type=float)
    s.add_argument("--deadline", type=float)
    s.add_argument("--affected-bands", type=float, default=1.0 / 3.0)
    s.add_argument("--stripe-offset", type=float, default=0.0)
    s.add_argument("--sigma-is-std", action="store_true", help="read the Gaussian level as a std dev")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("denoise", help="restore a noisy cube")
    d.add_argument("--config")
    d.add_argument("--input")
    d.add_argument("--output")
    d.add_argument("--trace-out")
    d.add_argument("--results-out")
    d.add_argument("--truth")
    d.add_argument("--spec-in", help="NoiseSpec JSON recorded in the results document")
    d.add_argument("--emit-components", metavar="PREFIX", help="write PREFIX.{S,D,W}.hsr")
    d.add_argument("--preset")
    d.add_argument("--r", type=int)
    d.add_argument("--tau", type=_tau)
    d.add_argument("--beta", type=float)
    d.add_argument("--gamma", type=float)
    d.add_argument("--alpha", type=float)
    d.add_argument("--rho0", type=_rho0)
    d.add_argument("--eta", type=float)
    d.add_argument("--rho-max", type=float)
    d.add_argument("--eps", type=float)
    d.add_argument("--max-iter", type=int)
    d.add_argument("--variant", choices=[v.value for v in Variant])
    d.add_argument("--w-floor", type=float)
    d.add_argument("--u-solve", choices=["unweighted", "tau_weighted"])
    d.add_argument("--l21-groups", choices=["columns", "bands"])
    d.set_defaults(func=cmd_denoise)

    e = sub.add_parser("evaluate", help="PSNR/SSIM/SAM of a cube against a reference")
    e.add_argument("--ref", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--json-out")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("benchmark", help="simulate, denoise and score a grid of cases")
    b.add_argument("--input", required=True)
    b.add_argument("--cases", required=True)
    b.add_argument("--variants", default="full")
    b.add_argument("--preset")
    b.add_argument("--preset-map")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--affected-bands", type=float, default=1.0 / 3.0)
    b.add_argument("--sigma-is-std", action="store_true")
    b.add_argument("--max-iter", type=int)
    b.add_argument("--table-out", required=True)
    b.add_argument("--traces-dir")
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(func=cmd_benchmark)

    c = sub.add_parser("convert", help="raw float64 dumps <-> HSR1")
    c.add_argument("--raw-input")
    c.add_argument("--dims")
    c.add_argument("--order", choices=["band-major", "pixel-major"], default="pixel-major")
    c.add_argument("--output")
    c.add_argument("--hsr-input")
    c.add_argument("--raw-output")
    c.set_defaults(func=cmd_convert)
    return p


def _fail(code: int, msg: str) -> int:
    print(f"hsidn: error: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FlagError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except (IoFailure, HsrFormatError) as exc:
        return _fail(EXIT_IO, str(exc))
    except NonFiniteState as exc:
        return _fail(EXIT_NONFINITE, str(exc))
    except (HsiError, ValueError) as exc:
        return _fail(EXIT_USAGE, str(exc))


if __name__ == "__main__":
    sys.exit(main())
