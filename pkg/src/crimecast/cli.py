"""Batch command-line front end.

Commands: synth, analyze, fit, predict, evaluate. Config files are flat
``key = value`` text; every key is also a CLI flag of the same name (dashes
for underscores), and flags win. Every run writes a manifest with the
resolved config, seed, and content hashes of its inputs.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import build_report
from .checkpoint import load_checkpoint, save_checkpoint
from .datagen import SynthSpec, generate, write_dataset
from .dataio import load_dataset
from .errors import (
    ConfigError,
    CrimecastError,
    DivergenceError,
    InsufficientHistoryError,
    InvalidDimensionError,
    LoadError,
    NumericError,
    SingularityError,
)
from .evaluation import RunConfig, evaluate
from .forecaster import fit_forecast_table, predict
from .solver import TrainingData, fit, training_rmse

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3

_BOOL_TOKENS = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def _coerce(raw: str, target_type, key: str, source: str):
    if target_type is bool:
        tok = raw.strip().lower()
        if tok not in _BOOL_TOKENS:
            raise ConfigError(f"{source}: {key} expects a boolean, got {raw!r}")
        return _BOOL_TOKENS[tok]
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{source}: {key} expects {target_type.__name__}, got {raw!r}") from None
    return raw


def _field_types(cls) -> dict[str, type]:
    out = {}
    for f in dataclasses.fields(cls):
        t = f.type if isinstance(f.type, type) else None
        if t is None:
            name = str(f.type)
            t = {"int": int, "float": float, "bool": bool, "str": str}.get(
                name.replace(" | None", ""), str
            )
        out[f.name] = t
    return out


def parse_config_file(path) -> dict[str, str]:
    """Flat key = value lines; '#' starts a comment; blank lines ignored."""
    entries: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected key = value, got {line.strip()!r}")
        key, val = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{line_no}: empty key")
        entries[key] = val
    return entries


def _build_config(cls, config_path, cli_values: dict):
    """defaults < config file < CLI flags."""
    types = _field_types(cls)
    merged: dict = {}
    if config_path:
        for key, raw in parse_config_file(config_path).items():
            if key not in types:
                raise ConfigError(f"{config_path}: unknown key {key!r}")
            merged[key] = _coerce(raw, types[key], key, str(config_path))
    for key, val in cli_values.items():
        if val is not None:
            merged[key] = _coerce(val, types[key], key, "command line") if isinstance(val, str) else val
    try:
        return cls(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _add_config_flags(parser: argparse.ArgumentParser, cls) -> list[str]:
    names = []
    for f in dataclasses.fields(cls):
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None,
                            metavar="V", help=f"override config key {f.name}")
        names.append(f.name)
    return names


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path, command: str, config: dict, seed, inputs: dict, outputs: list[str]):
    manifest = {
        "tool": f"crimecast {__version__}",
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items()},
        "outputs": sorted(outputs),
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_json(path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _dataset_paths(data_dir) -> dict:
    d = Path(data_dir)
    return {"crimes": d / "crimes.csv", "features": d / "features.csv", "regions": d / "regions.csv"}


def _dataset_lag(data_dir, override) -> int:
    if override is not None:
        return int(override)
    meta = Path(data_dir) / "dataset.json"
    if meta.exists():
        try:
            return int(json.loads(meta.read_text(encoding="utf-8")).get("lag", 1))
        except (ValueError, json.JSONDecodeError):
            raise ConfigError(f"{meta}: malformed dataset metadata") from None
    return 1


def _load(data_dir, lag: int):
    paths = _dataset_paths(data_dir)
    crimes, features, grid, report = load_dataset(
        paths["crimes"], paths["features"], paths["regions"], lag=lag
    )
    for msg in report.warnings():
        print(f"warning: {msg}", file=sys.stderr)
    return crimes, features, grid, paths


def cmd_synth(args) -> int:
    cli_values = {name: getattr(args, name) for name in args._spec_keys}
    spec = _build_config(SynthSpec, args.spec, cli_values)
    result = generate(spec)
    out = Path(args.out)
    files = write_dataset(result, out)
    inputs = {"spec": args.spec} if args.spec else {}
    write_manifest(out / "manifest.json", "synth", dataclasses.asdict(spec), spec.seed,
                   inputs, files)
    print(f"wrote {len(files)} files to {out} "
          f"(N={spec.N}, T={spec.T}, K={spec.K}, M={spec.M})")
    return 0


def cmd_analyze(args) -> int:
    lag = _dataset_lag(args.data, args.lag)
    crimes, _features, grid, paths = _load(args.data, lag)
    report = build_report(crimes, grid, dt_max=args.dt_max, bin_width_km=args.bin_width)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report.to_dict())
    with open(out / "temporal_curve.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["crime_type", "delta_t", "mean_abs_diff"])
        for k, (dts, means) in enumerate(report.temporal_curves, start=1):
            for dt, m in zip(dts, means):
                w.writerow([k, int(dt), repr(float(m))])
    with open(out / "spatial_curve.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["crime_type", "bin_center_km", "mean_abs_diff"])
        for k, (centers, means) in enumerate(report.spatial_curves, start=1):
            for c, m in zip(centers, means):
                w.writerow([k, repr(float(c)), repr(float(m))])
    with open(out / "cross_type.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["crime_type"] + [str(k) for k in range(1, crimes.K + 1)])
        for k in range(crimes.K):
            w.writerow([k + 1] + [repr(float(v)) for v in report.cross_type[k]])
    files = ["report.json", "temporal_curve.csv", "spatial_curve.csv", "cross_type.csv"]
    write_manifest(out / "manifest.json", "analyze",
                   {"dt_max": args.dt_max, "bin_width": args.bin_width, "lag": lag},
                   None, paths, files)
    print(f"analyzed {crimes.K} crime types over {crimes.N} regions x {crimes.T} slots -> {out}")
    return 0


def cmd_fit(args) -> int:
    cli_values = {name: getattr(args, name) for name in args._config_keys}
    config = _build_config(RunConfig, args.config, cli_values)
    lag = config.horizon
    crimes, features, grid, paths = _load(args.data, lag)
    hp = config.hyperparams()
    data = TrainingData.build(crimes, features, grid, hp)
    state, report = fit(data, hp, seed=config.seed)
    window = min(config.decay_window, crimes.T - 1)
    table = fit_forecast_table(state, data, window=window, sigma_max=config.sigma_max,
                               shared=config.shared_sigma)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.ckpt", state, hp, lag, grid, table,
                    extra={"seed": config.seed})
    payload = report.to_dict()
    payload["training_rmse"] = training_rmse(state, data)
    _write_json(out / "fit_report.json", payload)
    if args.config:
        paths = dict(paths, config=args.config)
    write_manifest(out / "manifest.json", "fit", dataclasses.asdict(config), config.seed,
                   paths, ["model.ckpt", "fit_report.json"])
    print(f"fit {report.stopping_reason} after {report.iterations} iterations, "
          f"training rmse {payload['training_rmse']:.6f} -> {out / 'model.ckpt'}")
    return 0


def _read_future_features(path, N: int, M: int) -> np.ndarray:
    """Feature rows at the file's latest slot, as an (N, M) matrix; regions
    absent at that slot fall back to zeros."""
    from .dataio import _parse_float, _parse_int, _read_rows

    rows = _read_rows(path)
    if not rows or len(rows[0]) < 3:
        raise LoadError(path, 1, "expected header region_id,time_slot,f1,...")
    if len(rows[0]) - 2 != M:
        raise LoadError(path, 1, f"model expects {M} features, file has {len(rows[0]) - 2}")
    parsed = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != M + 2:
            raise LoadError(path, line_no, f"expected {M + 2} columns, got {len(row)}")
        n = _parse_int(row[0], path, line_no, "region_id")
        s = _parse_int(row[1], path, line_no, "time_slot")
        if not 1 <= n <= N:
            raise LoadError(path, line_no, f"region_id {n} outside 1..{N}")
        vec = [_parse_float(tok, path, line_no, f"f{i + 1}") for i, tok in enumerate(row[2:])]
        parsed.append((s, n, vec))
    if not parsed:
        raise LoadError(path, 2, "no feature rows")
    latest = max(s for s, _, _ in parsed)
    x = np.zeros((N, M))
    filled = 0
    for s, n, vec in parsed:
        if s == latest:
            x[n - 1] = vec
            filled += 1
    if filled < N:
        print(f"warning: {N - filled} region(s) missing at slot {latest}, using zero features",
              file=sys.stderr)
    return x


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.model)
    if ckpt.forecast is None:
        raise ConfigError(f"{args.model} has no decay table; re-run fit")
    N, _T, K, M = ckpt.state.Q.shape
    x_future = _read_future_features(args.features, N, M)
    preds = predict(ckpt.state, ckpt.forecast, x_future, clamp_non_negative=args.clamp)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["region_id", "crime_type", "predicted_count"])
        for n in range(N):
            for k in range(K):
                w.writerow([n + 1, k + 1, repr(float(preds[n, k]))])
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "predict",
                   {"clamp": bool(args.clamp)}, None,
                   {"model": args.model, "features": args.features}, [out.name])
    print(f"wrote {N * K} predictions to {out}")
    return 0


def cmd_evaluate(args) -> int:
    cli_values = {name: getattr(args, name) for name in args._config_keys}
    config = _build_config(RunConfig, args.config, cli_values)
    crimes, features, grid, paths = _load(args.data, config.horizon)
    report = evaluate(crimes, features, grid, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "evaluation.json", report.to_dict())
    if args.config:
        paths = dict(paths, config=args.config)
    write_manifest(out / "manifest.json", "evaluate", dataclasses.asdict(config), config.seed,
                   paths, ["evaluation.json"])
    print(f"{report.num_origins} origins: model rmse {report.rmse_model:.6f}, "
          f"last-value {report.rmse_last_value:.6f}, "
          f"historical-mean {report.rmse_historical_mean:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crimecast",
                                     description="Spatio-temporal multi-task crime prediction")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", default=None, help="flat key=value spec file")
    p.add_argument("--out", required=True, help="output directory")
    p._spec_keys = _add_config_flags(p, SynthSpec)  # type: ignore[attr-defined]
    p.set_defaults(func=cmd_synth, _spec_keys=p._spec_keys)

    p = sub.add_parser("analyze", help="correlation analytics over a dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dt-max", dest="dt_max", type=int, default=None)
    p.add_argument("--bin-width", dest="bin_width", type=float, default=1.0)
    p.add_argument("--lag", type=int, default=None, help="feature lag (default: dataset.json or 1)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fit", help="train a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="flat key=value run config")
    p.add_argument("--out", required=True)
    p._config_keys = _add_config_flags(p, RunConfig)  # type: ignore[attr-defined]
    p.set_defaults(func=cmd_fit, _config_keys=p._config_keys)

    p = sub.add_parser("predict", help="predict the next horizon slot from a checkpoint")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--features", required=True, help="features CSV with the latest raw slot")
    p.add_argument("--out", required=True, help="output predictions CSV")
    p.add_argument("--clamp", action="store_true", help="clamp predictions at 0")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="rolling-origin evaluation with baselines")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p._config_keys = _add_config_flags(p, RunConfig)  # type: ignore[attr-defined]
    p.set_defaults(func=cmd_evaluate, _config_keys=p._config_keys)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else USAGE_EXIT
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    try:
        return args.func(args)
    except (LoadError, ConfigError, InvalidDimensionError, SingularityError,
            InsufficientHistoryError) as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return DATA_EXIT
    except (DivergenceError, NumericError) as exc:
        print(f"numeric failure ({args.command}): {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except CrimecastError as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
