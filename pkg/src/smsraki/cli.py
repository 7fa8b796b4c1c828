"""Command-line interface.

Subcommands:
  simulate   write a simulated SMS dataset container from a config file
  train      train one configuration's networks on a dataset
  grid       full hyperparameter sweep (simulates per seed) -> records.csv
  eval       evaluate saved networks on a dataset; optional error maps
  report     normalize, rank, and summarize a records.csv

Worker count and output directory can come from SMSRAKI_WORKERS and
SMSRAKI_OUTPUT_DIR; command-line flags take precedence over both the
environment and the config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .augment import build_split_slice_set, build_standard_set
from .dataio import load_dataset, load_network, save_dataset, save_network
from .errors import ConfigError, SmsRakiError
from .harness import (
    GridSpec,
    error_map,
    evaluate,
    held_out_indices,
    normalize_and_rank,
    run_grid,
    write_f64,
    write_pgm,
    write_records_csv,
    read_records_csv,
    write_summary_json,
    PERCENTILE_CONVENTION,
)
from .network import NetworkConfig, build_network, train, unalias
from .rng import Rng
from .sim import simulate_dataset, undo_caipi_shift

_SIM_DEFAULTS = {
    "grid": 32,
    "coils": 8,
    "sms_factor": 2,
    "fov_shift": None,
    "frames": 21,
    "perturbation": 0.05,
    "noise_sigma": 0.02,
    "calib_noise": False,
}

_TRAIN_DEFAULTS = {
    "max_epochs": 200,
    "max_seconds": None,
    "batch_size": 48,
    "learning_rate": 1e-4,
}

_GRAPPA_DEFAULTS = {"kernel_size": 5, "lam": None}

_TOP_DEFAULTS = {
    "sim": _SIM_DEFAULTS,
    "grid": None,  # defaults to GridSpec.default()
    "train": _TRAIN_DEFAULTS,
    "grappa": _GRAPPA_DEFAULTS,
    "eval_frames": 20,
    "seeds": [1, 2, 3, 4, 5],
    "workers": 1,
    "output_dir": "out",
}

_GRID_KEYS = [
    "num_layers",
    "filter_size",
    "num_filters",
    "penultimate_filters",
    "batch_norm",
    "dropout",
    "split_slice",
]


def _merge_section(name: str, defaults: dict, given) -> dict:
    if given is None:
        return dict(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(given)
    return merged


def load_config(path) -> dict:
    """Parse and validate a run configuration; unknown keys are rejected."""
    with open(path) as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - set(_TOP_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = {
        "sim": _merge_section("sim", _SIM_DEFAULTS, raw.get("sim")),
        "train": _merge_section("train", _TRAIN_DEFAULTS, raw.get("train")),
        "grappa": _merge_section("grappa", _GRAPPA_DEFAULTS, raw.get("grappa")),
        "eval_frames": raw.get("eval_frames", _TOP_DEFAULTS["eval_frames"]),
        "seeds": raw.get("seeds", list(_TOP_DEFAULTS["seeds"])),
        "workers": raw.get("workers", _TOP_DEFAULTS["workers"]),
        "output_dir": raw.get("output_dir", _TOP_DEFAULTS["output_dir"]),
    }
    grid_raw = raw.get("grid")
    if grid_raw is None:
        cfg["grid"] = GridSpec.default()
    else:
        if not isinstance(grid_raw, dict):
            raise ConfigError("config section 'grid' must be an object")
        unknown = set(grid_raw) - set(_GRID_KEYS)
        if unknown:
            raise ConfigError(f"unknown keys in 'grid': {sorted(unknown)}")
        base = GridSpec.default()
        vals = {k: grid_raw.get(k, getattr(base, k)) for k in _GRID_KEYS}
        cfg["grid"] = GridSpec(**vals)
    return cfg


def _simulate_from_cfg(cfg: dict, seed: int):
    sim = cfg["sim"]
    return simulate_dataset(
        grid=sim["grid"],
        coil_count=sim["coils"],
        sms_factor=sim["sms_factor"],
        frames=sim["frames"],
        perturbation=sim["perturbation"],
        noise_sigma=sim["noise_sigma"],
        seed=seed,
        fov_shift=sim["fov_shift"],
        calib_noise=sim["calib_noise"],
    )


def _resolve_workers(args, cfg) -> int:
    if getattr(args, "workers", None) is not None:
        return args.workers
    env = os.environ.get("SMSRAKI_WORKERS")
    if env is not None:
        return int(env)
    return cfg["workers"] if cfg else 1


def _resolve_outdir(value: str | None, cfg=None) -> Path:
    if value is not None:
        out = Path(value)
    else:
        env = os.environ.get("SMSRAKI_OUTPUT_DIR")
        out = Path(env) if env else Path(cfg["output_dir"] if cfg else "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -------------------------------------------------------------


def _cmd_simulate(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seeds"][0]
    ts = _simulate_from_cfg(cfg, seed)
    save_dataset(ts, args.out)
    print(
        f"wrote {args.out}: grid {ts.grid[0]}x{ts.grid[1]}, {ts.coil_count} coils, "
        f"{ts.n}-band, {ts.frame_count} frames, seed {seed}"
    )
    return 0


def _cmd_train(args):
    ts = load_dataset(args.dataset)
    outdir = _resolve_outdir(args.out)
    cfg = NetworkConfig(
        num_layers=args.layers,
        filter_size=args.filter_size,
        num_filters=args.filters,
        penultimate_filters=args.penultimate,
        batch_norm=args.batch_norm,
        dropout=args.dropout,
        in_channels=2 * ts.coil_count,
    )
    summary = {"config": vars(args).copy(), "nets": {}}
    summary["config"].pop("func", None)
    for s in range(ts.n):
        for c in range(ts.coil_count):
            if args.split_slice:
                tset = build_split_slice_set(ts.calib, s, c)
            else:
                tset = build_standard_set(ts.calib, ts.frames[0], s, c)
            rng = Rng.from_keys(args.seed, "cli-train", s, c)
            net = build_network(cfg, rng)
            rec = train(
                net,
                tset,
                max_epochs=args.epochs,
                max_seconds=args.seconds,
                lr=args.lr,
                batch_size=args.batch_size,
                rng=rng,
            )
            path = outdir / f"net_s{s}_c{c}.rakinet"
            save_network(net, path)
            summary["nets"][f"s{s}_c{c}"] = {
                "epochs": rec.epochs,
                "final_loss": rec.final_loss,
                "wall_seconds": rec.wall_seconds,
            }
            print(f"trained slice {s} coil {c}: loss {rec.final_loss:.4e} -> {path}")
    with open(outdir / "train.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0


def _cmd_grid(args):
    cfg = load_config(args.config)
    workers = _resolve_workers(args, cfg)
    outdir = _resolve_outdir(args.out, cfg)
    train_cfg = cfg["train"]
    records = []
    timings = []
    if args.dataset:
        datasets = [(load_dataset(args.dataset), None)]
    else:
        datasets = [(None, seed) for seed in cfg["seeds"]]
    for ts, seed in datasets:
        if ts is None:
            ts = _simulate_from_cfg(cfg, seed)
        run_seed = seed if seed is not None else (ts.seed if ts.seed is not None else 0)
        recs = run_grid(
            ts,
            cfg["grid"],
            seed=run_seed,
            max_epochs=train_cfg["max_epochs"],
            max_seconds=train_cfg["max_seconds"],
            lr=train_cfg["learning_rate"],
            batch_size=train_cfg["batch_size"],
            eval_frames=cfg["eval_frames"],
            workers=workers,
        )
        records.extend(recs)
        timings.extend((r.seed, r.combo_index, r.wall_seconds) for r in recs)
        print(f"seed {run_seed}: {len(recs)} records")
    write_records_csv(records, outdir / "records.csv")
    # wall-clock timings vary run to run, so they live outside records.csv
    with open(outdir / "timings.csv", "w") as f:
        f.write("seed,combo,wall_seconds\n")
        for seed, combo, wall in timings:
            f.write(f"{seed},{combo},{wall:.3f}\n")
    print(f"wrote {outdir / 'records.csv'} ({len(records)} rows)")
    return 0


def _load_net_dir(path: Path):
    nets = {}
    for f in sorted(path.glob("net_s*_c*.rakinet")):
        stem = f.stem[len("net_") :]
        s_part, c_part = stem.split("_")
        nets[(int(s_part[1:]), int(c_part[1:]))] = load_network(f)
    if not nets:
        raise ConfigError(f"no net_s*_c*.rakinet files found in {path}")
    return nets


def _cmd_eval(args):
    ts = load_dataset(args.dataset)
    nets = _load_net_dir(Path(args.nets))
    rec = evaluate(nets, ts, frame_count=args.eval_frames)
    result = {
        "mean_l1": rec.mean_l1,
        "frame_l1": rec.frame_l1,
        "eval_frames": args.eval_frames,
        "frame_indices": held_out_indices(args.eval_frames, ts.frame_count),
    }
    with open(args.out, "w") as f:
        json.dump(result, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"mean held-out L1: {rec.mean_l1:.6e} -> {args.out}")
    if args.maps:
        mapdir = _resolve_outdir(args.maps)
        frame_idx = args.frame
        if frame_idx is None:
            frame_idx = held_out_indices(args.eval_frames, ts.frame_count)[0]
        recon = unalias(nets, ts.frames[frame_idx], ts.fov_shift, unshift=True)
        truth = np.stack(
            [undo_caipi_shift(ts.calib[s], s, ts.fov_shift) for s in range(ts.n)]
        )
        maps = error_map(recon, truth)
        meta = {"frame": int(frame_idx), "kspace_l1": maps.kspace_l1.tolist()}
        for s in range(ts.n):
            write_pgm(mapdir / f"percent_error_s{s}.pgm", maps.percent[s])
            write_f64(mapdir / f"percent_error_s{s}.f64", maps.percent[s])
        with open(mapdir / "maps.json", "w") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")
        print(f"wrote per-slice error maps to {mapdir}")
    return 0


def _cmd_report(args):
    records = read_records_csv(args.records)
    outdir = _resolve_outdir(args.out)
    write_summary_json(records, outdir / "summary.json")
    normalized = normalize_and_rank(records)
    lines = [f"# {PERCENTILE_CONVENTION}"]
    lines.append("seed,combo,mean_l1,normalized_loss,percentile,rank")
    for n in sorted(normalized, key=lambda n: (n.record.seed, n.record.combo_index)):
        r = n.record
        lines.append(
            f"{r.seed},{r.combo_index},{r.mean_l1!r},{n.normalized_loss!r},"
            f"{n.percentile!r},{n.rank}"
        )
    with open(outdir / "normalized.csv", "w") as f:
        f.write("\n".join(lines) + "\n")
    print(f"wrote {outdir / 'summary.json'} and {outdir / 'normalized.csv'}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smsraki", description="SMS k-space unaliasing toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated dataset container")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train one configuration on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--filter-size", type=int, default=5)
    p.add_argument("--filters", type=int, default=32)
    p.add_argument("--penultimate", type=int, default=128)
    p.add_argument("--batch-norm", action="store_true")
    p.add_argument("--dropout", action="store_true")
    p.add_argument("--split-slice", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seconds", type=float, default=None)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=48)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("grid", help="full hyperparameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--dataset", default=None, help="sweep one existing dataset")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("eval", help="evaluate saved networks on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--nets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eval-frames", type=int, default=20)
    p.add_argument("--maps", default=None, help="directory for error maps")
    p.add_argument("--frame", type=int, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="summarize a records.csv")
    p.add_argument("--records", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SmsRakiError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
