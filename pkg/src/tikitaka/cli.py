"""Command-line entry point.

    tikitaka trace            --config cfg.toml --algorithm tt3 --out runs/trace
    tikitaka devices          --out runs/devices
    tikitaka program-weights  --seed 7 --out runs/prog
    tikitaka sweep            --config sweep.toml --jobs 4 --out runs/sweep

Every run writes ``manifest.json`` before it starts. The manifest can be
passed back as ``--config`` to regenerate the outputs bit-identically.
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path


from . import __version__
from .config import (ConfigError, config_hash, from_mapping, load_mapping, parse_overrides,
                     sweep_grid, to_dict)
from .harness import (ExperimentConfig, TraceRecord, build_tile, expand_pattern,
                      run_device_traces, run_trace_experiment, run_weight_programming)
from .streams import substream

log = logging.getLogger("tikitaka")

TRACE_SCHEMA = "# tikitaka-trace v1"
TRACE_COLUMNS = ("step", "a", "r_or_mupast", "h", "w", "omega", "chopper", "pulses")
DEVICE_SCHEMA = "# tikitaka-device-traces v1"
CURVE_SCHEMA = "# tikitaka-eps-curve v1"

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
SUBCOMMAND_KINDS = {
    "trace": "trace_constant_gradient",
    "devices": "device_traces",
    "program-weights": "weight_programming",
    "sweep": "weight_programming",
}


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fmt(value: float) -> str:
    return repr(float(value))


def trace_csv(records: list[TraceRecord]) -> str:
    buf = io.StringIO()
    buf.write(TRACE_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in records:
        writer.writerow([r.step, _fmt(r.a_sel), _fmt(r.r_sel), _fmt(r.h_sel), _fmt(r.w_sel),
                         _fmt(r.omega), int(r.chopper_sign), r.pulses_emitted])
    return buf.getvalue()


def read_trace_csv(text: str) -> list[dict]:
    lines = text.splitlines()
    if not lines or lines[0] != TRACE_SCHEMA:
        raise ValueError("not a trace file")
    return list(csv.DictReader(lines[1:]))


def manifest(cfg: ExperimentConfig, config_path, out_dir: Path, command: str) -> dict:
    return {
        "command": command,
        "config_path": None if config_path is None else str(config_path),
        "config": to_dict(cfg),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "out_dir": str(out_dir),
        "version": __version__,
    }


def run_summary(cfg: ExperimentConfig) -> dict:
    """Run a weight-programming config and return its summary record."""
    res = run_weight_programming(cfg)
    return {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "algorithm": cfg.optimizer.algorithm,
        "sigma_r": cfg.reference.sigma_r,
        "n_states": cfg.device_a.n_states,
        "eps_w_abs": res.eps_final,
        "eps_w_rel": res.eps_final_rel,
        "eps_w_runs": res.eps_final_runs,
        "pulse_counts": res.pulse_counts,
        "curve": {"steps": res.steps, "eps_w_abs": res.eps_curve},
    }


def _cmd_trace(cfg: ExperimentConfig, out: Path) -> None:
    records = run_trace_experiment(cfg)
    write_atomic(out / "trace.csv", trace_csv(records))
    summary = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "algorithm": cfg.optimizer.algorithm,
        "pulse_counts": {"w": sum(r.pulses_emitted for r in records)},
        "final": records[-1]._asdict(),
    }
    if cfg.kind == "trace_decay":
        summary["pulse_counts"]["w_after_decay_step"] = sum(
            r.pulses_emitted for r in records if r.step >= cfg.decay_step)
    write_atomic(out / "summary.json", dumps(summary))


def _cmd_devices(cfg: ExperimentConfig, out: Path) -> None:
    signs = expand_pattern(cfg.pulse_pattern)
    traces = run_device_traces(cfg.device_a, cfg.n_devices, signs, substream(cfg.seed, "devices"))
    buf = io.StringIO()
    buf.write(DEVICE_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["pulse", "sign"] + [f"dev{i}" for i in range(cfg.n_devices)])
    for t, row in enumerate(traces):
        sign = 0 if t == 0 else int(signs[t - 1])
        writer.writerow([t, sign] + [_fmt(v) for v in row])
    write_atomic(out / "device_traces.csv", buf.getvalue())
    tile = build_tile(cfg)
    write_atomic(out / "device_state.csv", tile.a.to_csv())
    write_atomic(out / "summary.json", dumps({
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "n_devices": cfg.n_devices,
        "final_w": [float(v) for v in traces[-1]],
    }))


def _cmd_program(cfg: ExperimentConfig, out: Path) -> None:
    summary = run_summary(cfg)
    curve = summary.pop("curve")
    lines = [CURVE_SCHEMA, "step,eps_w_abs"]
    lines += [f"{s},{_fmt(e)}" for s, e in zip(curve["steps"], curve["eps_w_abs"])]
    write_atomic(out / "curve.csv", "\n".join(lines) + "\n")
    write_atomic(out / "summary.json", dumps(summary))


def _sweep_configs(data: dict, overrides: dict) -> list[tuple[dict, ExperimentConfig]]:
    if not data.get("sweep"):
        raise ConfigError("sweep: no [sweep] table with parameter lists")
    points = sweep_grid(data)
    return [(point, from_mapping(data, {**overrides, **point})) for point in points]


def _cmd_sweep(points, out: Path, jobs: int) -> None:
    configs = [cfg for _, cfg in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(run_summary, configs))
    else:
        summaries = [run_summary(cfg) for cfg in configs]
    lines = []
    for (point, _), summary in zip(points, summaries):
        summary.pop("curve")
        lines.append(json.dumps({"point": point, **summary}, sort_keys=True))
    write_atomic(out / "sweep.jsonl", "\n".join(lines) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tikitaka", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_KINDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="TOML config or a run manifest (JSON)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, default=Path("runs") / name)
        p.add_argument("--algorithm", choices=("plain_sgd", "tt2", "tt3", "tt4"))
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        data = load_mapping(args.config) if args.config is not None else {}
        data.setdefault("kind", SUBCOMMAND_KINDS[args.command])
        overrides = parse_overrides(args.overrides)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.algorithm is not None:
            overrides["optimizer.algorithm"] = args.algorithm
        if args.command == "sweep":
            points = _sweep_configs(data, overrides)
            cfg = from_mapping(data, overrides)
        else:
            points = None
            cfg = from_mapping(data, overrides)
        expected = {"trace": ("trace_constant_gradient", "trace_decay"),
                    "devices": ("device_traces",)}.get(args.command, ("weight_programming",))
        if cfg.kind not in expected:
            raise ConfigError(f"kind: {cfg.kind!r} cannot be run by '{args.command}'")
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out
    try:
        man = manifest(cfg, args.config, out, args.command)
        if points is not None:
            man["sweep"] = [p for p, _ in points]
        write_atomic(out / "manifest.json", dumps(man))
        log.info("running %s (config %s) into %s", args.command, man["config_hash"][:12], out)
        if args.command == "trace":
            _cmd_trace(cfg, out)
        elif args.command == "devices":
            _cmd_devices(cfg, out)
        elif args.command == "program-weights":
            _cmd_program(cfg, out)
        else:
            _cmd_sweep(points, out, args.jobs)
    except (OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
