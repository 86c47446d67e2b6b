"""Command-line front end: run experiments and sweeps, dump the modulation
table, validate the analytical model; results go to CSV.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import os
import sys

from . import analysis
from .amc import build_table, table_rows
from .config import (SCHEDULER_KINDS, ExperimentConfig, ValidationError,
                     default_config, load_config)
from .engine import SweepRow, TraceSinks, run_experiment, sweep

CONFIG_ENV_VAR = "UPLINKSIM_CONFIG"

# Aggregate CSV column order (documented in the README).
AGGREGATE_COLUMNS = (
    "scheduler", "sigma_dB", "cwnd_max", "num_runs",
    "avg_throughput_bps", "avg_throughput_bps_std",
    "avg_cwnd", "avg_cwnd_std",
    "slot_utilization", "slot_utilization_std",
    "jfi_slots", "jfi_slots_std", "jfi_throughput",
    "loss_rate", "measured_p", "mean_rtt_s", "mean_rto_s",
    "mean_epoch_frames", "timeouts", "fast_retransmits",
)

# Presets reproducing the headline experiments (sweeps behind each figure).
PRESETS = {
    "fig-3": ("sweep-cwnd", {"schedulers": ["TWUS", "TWUS-A"],
                             "values": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100]}),
    "fig-4": ("sweep-sigma", {"schedulers": ["RR-A", "TWUS-A", "DTWUS-A"],
                              "values": [4, 6, 8, 10, 12]}),
    "fig-5": ("sweep-sigma", {"schedulers": ["RR-A", "TWUS-A", "DTWUS-A"],
                              "values": [4, 6, 8, 10, 12]}),
    "fig-6": ("sweep-sigma", {"schedulers": ["RR", "TWUS", "DTWUS"],
                              "values": [4, 6, 8, 10, 12]}),
    "fig-7": ("sweep-sigma", {"schedulers": ["RR", "TWUS", "DTWUS"],
                              "values": [4, 6, 8, 10, 12]}),
    "fig-8": ("sweep-sigma", {"schedulers": ["RR-A", "TWUS-A", "DTWUS-A"],
                              "values": [4, 6, 8, 10, 12],
                              "variant": "unequal-distance"}),
    "fig-9": ("sweep-sigma", {"schedulers": ["RR-A", "TWUS-A", "DTWUS-A"],
                              "values": [4, 6, 8, 10, 12]}),
    "fig-10": ("sweep-sigma", {"schedulers": ["RR", "TWUS", "DTWUS"],
                               "values": [4, 6, 8, 10, 12]}),
    "fig-14": ("validate-analysis", {"schedulers": ["TWUS-A"],
                                     "values": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100]}),
    "fig-15": ("validate-analysis", {"schedulers": ["DTWUS-A"],
                                     "values": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100]}),
    "fig-16": ("validate-analysis", {"schedulers": ["TWUS-A"],
                                     "values": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
                                     "variant": "unequal-distance"}),
    "fig-17": ("validate-analysis", {"schedulers": ["DTWUS-A"],
                                     "values": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
                                     "variant": "unequal-distance"}),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def _format_cell(value) -> str:
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r} cannot be emitted")
        return repr(value)
    return str(value)


def emit_csv(records: list[dict], path) -> None:
    """Write dict records with a fixed column order; NaN is never emitted."""
    if not records:
        raise ValueError("no records to emit")
    columns = list(records[0].keys())
    lines = [",".join(columns)]
    for rec in records:
        if list(rec.keys()) != columns:
            raise ValueError("records have inconsistent columns")
        lines.append(",".join(_format_cell(v) for v in rec.values()))
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _aggregate_row(scheduler: str, cfg: ExperimentConfig, result) -> dict:
    m, s = result.mean, result.std
    return {
        "scheduler": scheduler,
        "sigma_dB": cfg.shadowing_sigma_dB,
        "cwnd_max": cfg.cwnd_max,
        "num_runs": result.num_runs,
        "avg_throughput_bps": m["avg_throughput_bps"],
        "avg_throughput_bps_std": s["avg_throughput_bps"],
        "avg_cwnd": m["avg_cwnd"],
        "avg_cwnd_std": s["avg_cwnd"],
        "slot_utilization": m["slot_utilization"],
        "slot_utilization_std": s["slot_utilization"],
        "jfi_slots": m["jfi_slots"],
        "jfi_slots_std": s["jfi_slots"],
        "jfi_throughput": m["jfi_throughput"],
        "loss_rate": m["loss_rate"],
        "measured_p": m["measured_p"],
        "mean_rtt_s": m["mean_rtt_s"],
        "mean_rto_s": m["mean_rto_s"],
        "mean_epoch_frames": m["mean_epoch_frames"],
        "timeouts": m["timeouts"],
        "fast_retransmits": m["fast_retransmits"],
    }


def _summary_line(scheduler: str, cfg: ExperimentConfig, result) -> str:
    m = result.mean
    return (f"{scheduler} sigma={cfg.shadowing_sigma_dB:g}dB "
            f"cwnd_max={cfg.cwnd_max} runs={result.num_runs}: "
            f"throughput={m['avg_throughput_bps'] / 1e6:.3f} Mbps/flow "
            f"jfi={m['jfi_slots']:.4f} util={m['slot_utilization']:.3f}")


def _base_config(args) -> ExperimentConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if path:
        cfg = load_config(path)
    else:
        cfg = default_config(getattr(args, "variant", "equal-distance") or "equal-distance")
    overrides = {}
    if getattr(args, "scheduler", None):
        overrides["scheduler_kind"] = _normalize_scheduler(args.scheduler.split(",")[0])
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = args.seed
    if getattr(args, "frames", None) is not None:
        overrides["num_frames"] = args.frames
    if getattr(args, "runs", None) is not None:
        overrides["num_runs"] = args.runs
    if getattr(args, "sigma", None) is not None:
        overrides["shadowing_sigma_dB"] = args.sigma
    if getattr(args, "cwnd_max", None) is not None:
        overrides["cwnd_max"] = args.cwnd_max
    if getattr(args, "warmup", None) is not None:
        overrides["warmup_frames"] = args.warmup
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _normalize_scheduler(name: str) -> str:
    canon = name.strip().upper()
    if canon not in SCHEDULER_KINDS:
        raise ValidationError("scheduler_kind", f"unknown scheduler {name!r}")
    return canon


def _scheduler_list(args, default: list[str]) -> list[str]:
    if getattr(args, "scheduler", None):
        return [_normalize_scheduler(s) for s in args.scheduler.split(",")]
    return default


def _open_traces(args) -> tuple[TraceSinks | None, list]:
    handles = []
    sinks = {}
    for kind in ("snr", "sched", "tcp"):
        path = getattr(args, f"trace_{kind}", None)
        if path:
            fh = open(path, "w", newline="")
            handles.append(fh)
            sinks[kind] = csv.writer(fh)
    if not sinks:
        return None, handles
    return TraceSinks(**sinks), handles


def _cmd_run(args) -> int:
    if getattr(args, "preset", None):
        return _run_preset(args)
    cfg = _base_config(args)
    traces, handles = _open_traces(args)
    try:
        result = run_experiment(cfg, traces=traces)
    finally:
        for fh in handles:
            fh.close()
    print(_summary_line(cfg.scheduler_kind, cfg, result))
    if args.output:
        emit_csv([_aggregate_row(cfg.scheduler_kind, cfg, result)], args.output)
    return 0


def _sweep_rows(cfg: ExperimentConfig, schedulers: list[str], parameter: str,
                values: list) -> list[tuple[str, SweepRow]]:
    rows = []
    for name in schedulers:
        cwnd = cfg.cwnd_max
        scfg = dataclasses.replace(cfg, scheduler_kind=name, cwnd_max=cwnd)
        for entry in sweep(scfg, parameter, values):
            rows.append((name, entry))
    return rows


def _emit_sweep(cfg, tagged_rows, parameter, output) -> int:
    records = []
    for name, entry in tagged_rows:
        rcfg = dataclasses.replace(
            cfg, scheduler_kind=name,
            **({"shadowing_sigma_dB": entry.value} if parameter == "sigma_dB"
               else {"cwnd_max": int(entry.value)}))
        records.append(_aggregate_row(name, rcfg, entry.result))
        print(_summary_line(name, rcfg, entry.result))
    emit_csv(records, output)
    return 0


def _cmd_sweep_sigma(args) -> int:
    cfg = _base_config(args)
    schedulers = _scheduler_list(args, ["RR-A", "TWUS-A", "DTWUS-A"])
    values = [float(v) for v in args.values.split(",")]
    return _emit_sweep(cfg, _sweep_rows(cfg, schedulers, "sigma_dB", values),
                       "sigma_dB", args.output)


def _cmd_sweep_cwnd(args) -> int:
    cfg = _base_config(args)
    schedulers = _scheduler_list(args, ["TWUS-A"])
    values = [int(v) for v in args.values.split(",")]
    return _emit_sweep(cfg, _sweep_rows(cfg, schedulers, "cwnd_max", values),
                       "cwnd_max", args.output)


def _cmd_validate_analysis(args) -> int:
    cfg = _base_config(args)
    schedulers = _scheduler_list(args, ["TWUS-A"])
    values = [int(v) for v in args.values.split(",")]
    records = []
    for name in schedulers:
        scfg = dataclasses.replace(cfg, scheduler_kind=name)
        for row in analysis.compare_with_simulation(scfg, values):
            records.append({
                "scheduler": name,
                "cwnd_max": row.cwnd_max,
                "sim_bps": row.sim_bps,
                "model_bps": row.model_bps,
                "rel_err": row.rel_err,
            })
            print(f"{name} cwnd_max={row.cwnd_max}: sim={row.sim_bps / 1e6:.3f} Mbps "
                  f"model={row.model_bps / 1e6:.3f} Mbps rel_err={row.rel_err:.3%}")
    emit_csv(records, args.output)
    return 0


def _cmd_dump_amc_table(args) -> int:
    table = build_table(args.bandwidth, args.ber)
    emit_csv(table_rows(table), args.output)
    for row in table_rows(table):
        print(f"{row['scheme']}: {row['rate_mbps']:g} Mbps "
              f"-> {row['snr_th_dB']:.2f} dB")
    return 0


def _run_preset(args) -> int:
    name = args.preset
    if name not in PRESETS:
        raise ValidationError("preset", f"unknown preset {name!r} "
                              f"(expected one of {', '.join(sorted(PRESETS))})")
    kind, spec = PRESETS[name]
    args.variant = spec.get("variant", getattr(args, "variant", None))
    args.scheduler = ",".join(spec["schedulers"])
    args.values = ",".join(str(v) for v in spec["values"])
    if kind == "sweep-sigma":
        return _cmd_sweep_sigma(args)
    if kind == "sweep-cwnd":
        return _cmd_sweep_cwnd(args)
    return _cmd_validate_analysis(args)


def _add_common(p: argparse.ArgumentParser, with_traces: bool = False) -> None:
    p.add_argument("--config", help=f"config file (default: ${CONFIG_ENV_VAR} or built-in)")
    p.add_argument("--variant", choices=["equal-distance", "unequal-distance"],
                   help="built-in distance set when no config file is given")
    p.add_argument("--scheduler", help="scheduler kind(s), comma separated")
    p.add_argument("--seed", type=int, help="override rng_seed")
    p.add_argument("--frames", type=int, help="override num_frames")
    p.add_argument("--warmup", type=int, help="override warmup_frames")
    p.add_argument("--runs", type=int, help="override num_runs")
    p.add_argument("--sigma", type=float, help="override shadowing sigma (dB)")
    p.add_argument("--cwnd-max", dest="cwnd_max", type=int, help="override cwnd_max")
    p.add_argument("--output", "-o", help="CSV output path (default: stdout)")
    if with_traces:
        p.add_argument("--trace-snr", help="per-frame SNR trace CSV path")
        p.add_argument("--trace-sched", help="per-frame allocation trace CSV path")
        p.add_argument("--trace-tcp", help="TCP event trace CSV path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uplinksim",
                     description="TCP-aware uplink scheduling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment (or a --preset)")
    _add_common(p_run, with_traces=True)
    p_run.add_argument("--preset", help="figure preset, e.g. fig-5")
    p_run.set_defaults(func=_cmd_run)

    p_ss = sub.add_parser("sweep-sigma", help="sweep the shadowing deviation")
    _add_common(p_ss)
    p_ss.add_argument("--values", default="4,6,8,10,12",
                      help="comma-separated sigma values (dB)")
    p_ss.set_defaults(func=_cmd_sweep_sigma)

    p_sc = sub.add_parser("sweep-cwnd", help="sweep cwnd_max")
    _add_common(p_sc)
    p_sc.add_argument("--values", default="10,20,30,40,50,60,70,80,90,100",
                      help="comma-separated cwnd_max values")
    p_sc.set_defaults(func=_cmd_sweep_cwnd)

    p_va = sub.add_parser("validate-analysis",
                          help="simulated vs closed-form send rate")
    _add_common(p_va)
    p_va.add_argument("--values", default="10,20,30,40,50,60,70,80,90,100",
                      help="comma-separated cwnd_max values")
    p_va.set_defaults(func=_cmd_validate_analysis)

    p_amc = sub.add_parser("dump-amc-table", help="modulation threshold table")
    p_amc.add_argument("--ber", type=float, default=1e-6, help="target bit error rate")
    p_amc.add_argument("--bandwidth", type=float, default=25e6, help="channel bandwidth (Hz)")
    p_amc.add_argument("--output", "-o", help="CSV output path (default: stdout)")
    p_amc.set_defaults(func=_cmd_dump_amc_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
