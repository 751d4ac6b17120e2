"""Command-line front end: presets, overrides, and trace export.

One invocation runs one experiment (or a named preset, which may sweep a
parameter and compare several protocols) and writes every round record to a
CSV or JSON trace. Exit codes: 0 success, 2 invalid arguments, 3 the run
completed but raised a runtime flag (no round ever passed the capacity gate).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

from .engine import ProtocolConfig, Trace, run_downlink_trials, run_experiment

__all__ = ["PRESETS", "parse_args", "render_args", "export_trace", "main"]

CSV_HEADER = "run,round,protocol,requested,realized,md,fa,cra_success,acquired_total,sq_error"


@dataclass(frozen=True)
class Preset:
    """A bundled experiment: base config, optional sweep, protocol list."""

    name: str
    kind: str  # "protocol" (multi-round recovery) or "downlink" (request-only)
    base: dict
    protocols: tuple[str, ...]
    sweep_param: str | None = None
    sweep_values: tuple = ()


def _preset_table() -> dict[str, Preset]:
    dense = dict(num_nodes=300, basis_dim=100, sparsity=10, request_size=10,
                 sig_len=64, omega=0.1, ap_snr=100.0, scaled_decision=0.5,
                 mode="gaussian", selector="corrnorm", seed=1)
    small = dict(num_nodes=64, basis_dim=25, sparsity=3, request_size=5,
                 sig_len=64, omega=0.0, ap_snr=100.0, scaled_decision=0.5,
                 mode="gaussian", selector="corrnorm", seed=1)
    return {
        # small-field recovery comparison, ideal downlink vs matched random
        "fig3": Preset(
            name="fig3", kind="protocol",
            base=dict(small, rounds=3, runs=200, rrs_reference="das_ideal"),
            protocols=("das_ideal", "rrs"),
        ),
        # request error counts as the request size grows
        "fig4": Preset(
            name="fig4", kind="downlink",
            base=dict(dense, rounds=1, runs=1000),
            protocols=("das",),
            sweep_param="request_size",
            sweep_values=(10, 20, 30, 40, 50, 60, 70, 80, 90, 100),
        ),
        # request error counts against the decision offset
        "fig5": Preset(
            name="fig5", kind="downlink",
            base=dict(dense, rounds=1, runs=1000),
            protocols=("das",),
            sweep_param="scaled_decision",
            sweep_values=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
        ),
        # recovery error by round, full protocol stack
        "fig6": Preset(
            name="fig6", kind="protocol",
            base=dict(dense, rounds=3, runs=1000),
            protocols=("das", "das_ideal", "rrs"),
        ),
        # final-round recovery error against the decision offset
        "fig7": Preset(
            name="fig7", kind="protocol",
            base=dict(dense, rounds=3, runs=500),
            protocols=("das", "das_ideal", "rrs"),
            sweep_param="scaled_decision",
            sweep_values=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
        ),
        # final-round recovery error against sparsity
        "fig8": Preset(
            name="fig8", kind="protocol",
            base=dict(dense, rounds=3, runs=500),
            protocols=("das", "das_ideal", "rrs"),
            sweep_param="sparsity",
            sweep_values=(2, 4, 6, 8, 10, 12, 14, 16, 18, 20),
        ),
        # final-round recovery error against field size
        "fig9": Preset(
            name="fig9", kind="protocol",
            base=dict(dense, rounds=3, runs=500),
            protocols=("das", "das_ideal", "rrs"),
            sweep_param="num_nodes",
            sweep_values=(100, 200, 300, 400, 500),
        ),
    }


PRESETS = _preset_table()


@dataclass
class Job:
    """One sweep point: every protocol in the list runs on this config."""

    label: str
    kind: str
    configs: list[ProtocolConfig]


@dataclass
class RunPlan:
    jobs: list[Job] = field(default_factory=list)
    out: str = "trace.csv"
    fmt: str = "csv"


_FLAG_FIELDS = {
    # flag name -> (config field, type)
    "k": ("num_nodes", int),
    "m": ("basis_dim", int),
    "s": ("sparsity", int),
    "n": ("request_size", int),
    "l": ("sig_len", int),
    "rounds": ("rounds", int),
    "runs": ("runs", int),
    "seed": ("seed", int),
    "selector": ("selector", str),
    "protocol": ("protocol", str),
    "mode": ("mode", str),
    "gamma_u": ("scaled_decision", float),
    "omega": ("omega", float),
    "ap_snr": ("ap_snr", float),
    "threshold_policy": ("threshold_policy", str),
    "rrs_reference": ("rrs_reference", str),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dasense",
        description="Simulate multi-round data collection over a compressive "
        "random-access uplink with request-driven node selection.",
    )
    parser.add_argument("--preset", choices=sorted(PRESETS), default=None,
                        help="bundled experiment; explicit flags override its values")
    parser.add_argument("--k", type=int, help="number of nodes K")
    parser.add_argument("--m", type=int, help="sparse representation length M")
    parser.add_argument("--s", type=int, help="sparsity S")
    parser.add_argument("--n", type=int, help="request size N")
    parser.add_argument("--l", type=int, help="signature length L")
    parser.add_argument("--rounds", type=int, help="request rounds after round 0")
    parser.add_argument("--runs", type=int, help="Monte-Carlo repetitions")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--selector", choices=("random", "magnitude", "corrnorm", "oracle"))
    parser.add_argument("--protocol", choices=("das", "das_ideal", "rrs", "oracle"))
    parser.add_argument("--mode", choices=("waveform", "gaussian"))
    parser.add_argument("--gamma-u", dest="gamma_u", type=float,
                        help="scaled decision offset, must lie in (-1, 1)")
    parser.add_argument("--omega-db", dest="omega_db", type=float,
                        help="feasibility floor in dB (10 log10 omega)")
    parser.add_argument("--omega", type=float, help="feasibility floor, linear")
    parser.add_argument("--snr-db", dest="snr_db", type=float,
                        help="access-point SNR in dB")
    parser.add_argument("--ap-snr", dest="ap_snr", type=float,
                        help="access-point SNR, linear")
    parser.add_argument("--threshold-policy", dest="threshold_policy",
                        choices=("scaled", "map"))
    parser.add_argument("--rrs-reference", dest="rrs_reference",
                        choices=("das", "das_ideal"))
    parser.add_argument("--pin-basis", action="store_true", default=None,
                        help="share one basis-row draw across all runs")
    parser.add_argument("--out", default=None, help="output path (default trace.csv)")
    parser.add_argument("--format", dest="fmt", choices=("csv", "json"), default=None)
    return parser


def parse_args(argv: list[str]) -> RunPlan:
    """Resolve flags (and preset) into a fully validated run plan."""
    parser = _build_parser()
    ns = parser.parse_args(argv)

    if ns.gamma_u is not None and not -1.0 < ns.gamma_u < 1.0:
        parser.error(f"--gamma-u must lie in (-1, 1), got {ns.gamma_u}")
    if ns.omega is not None and ns.omega < 0:
        parser.error(f"--omega must be >= 0, got {ns.omega}")
    if ns.omega_db is not None and ns.omega is not None:
        parser.error("--omega and --omega-db are mutually exclusive")
    if ns.snr_db is not None and ns.ap_snr is not None:
        parser.error("--ap-snr and --snr-db are mutually exclusive")

    overrides: dict = {}
    for flag, (fieldname, _cast) in _FLAG_FIELDS.items():
        value = getattr(ns, flag, None)
        if value is not None:
            overrides[fieldname] = value
    if ns.omega_db is not None:
        overrides["omega"] = 10.0 ** (ns.omega_db / 10.0)
    if ns.snr_db is not None:
        overrides["ap_snr"] = 10.0 ** (ns.snr_db / 10.0)
    if ns.pin_basis is not None:
        overrides["pin_basis"] = ns.pin_basis

    plan = RunPlan()
    try:
        if ns.preset is None:
            config = ProtocolConfig(**overrides)
            plan.jobs.append(Job(label="run", kind="protocol", configs=[config]))
        else:
            preset = PRESETS[ns.preset]
            base = dict(preset.base)
            sweep_param = preset.sweep_param
            sweep_values = preset.sweep_values
            if sweep_param is not None and sweep_param in overrides:
                sweep_values = (overrides[sweep_param],)
            protocols = preset.protocols
            if "protocol" in overrides:
                protocols = (overrides["protocol"],)
            points = sweep_values if sweep_param else (None,)
            for value in points:
                merged = dict(base)
                merged.update(overrides)
                if sweep_param and value is not None:
                    merged[sweep_param] = value
                if value is None:
                    label = preset.name
                elif isinstance(value, float):
                    label = f"{preset.name}-{sweep_param}-{value:g}"
                else:
                    label = f"{preset.name}-{sweep_param}-{value}"
                configs = [
                    ProtocolConfig(**{**merged, "protocol": proto}) for proto in protocols
                ]
                plan.jobs.append(Job(label=label, kind=preset.kind, configs=configs))
    except ValueError as err:
        parser.error(str(err))

    plan.out = ns.out if ns.out is not None else "trace.csv"
    plan.fmt = ns.fmt if ns.fmt is not None else "csv"
    return plan


def render_args(config: ProtocolConfig) -> list[str]:
    """Flag list that parses back to exactly this config (bare run, no preset)."""
    args = []
    for flag, (fieldname, _cast) in _FLAG_FIELDS.items():
        value = getattr(config, fieldname)
        args.extend([f"--{flag.replace('_', '-')}", repr(value) if isinstance(value, float) else str(value)])
    if config.pin_basis:
        args.append("--pin-basis")
    return args


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def export_trace(trace: Trace | list[Trace], fmt: str, path: str) -> None:
    """Write one or more traces to a single CSV or JSON file."""
    traces = trace if isinstance(trace, list) else [trace]
    rows = [row for tr in traces for row in tr.to_rows()]
    if fmt == "csv":
        lines = [CSV_HEADER]
        for row in rows:
            lines.append(",".join(_format_value(row[col]) for col in CSV_HEADER.split(",")))
        with open(path, "w", newline="") as handle:
            handle.write("\n".join(lines) + "\n")
    elif fmt == "json":
        payload = {
            "configs": [tr.config.to_dict() for tr in traces],
            "records": rows,
        }
        with open(path, "w", newline="") as handle:
            json.dump(payload, handle, sort_keys=True)
            handle.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _out_path(base: str, label: str, many: bool) -> str:
    if not many:
        return base
    if "." in base.rsplit("/", 1)[-1]:
        stem, ext = base.rsplit(".", 1)
        return f"{stem}-{label}.{ext}"
    return f"{base}-{label}"


def main(argv: list[str] | None = None) -> int:
    plan = parse_args(sys.argv[1:] if argv is None else argv)
    flagged = False
    many = len(plan.jobs) > 1
    for job in plan.jobs:
        traces = []
        for config in job.configs:
            runner = run_downlink_trials if job.kind == "downlink" else run_experiment
            trace = runner(config)
            traces.append(trace)
            if trace.all_cra_failed():
                flagged = True
            last = max(rec.round_index for run in trace.runs for rec in run.records)
            counts = trace.mean_counts(last)
            if job.kind == "downlink":
                print(
                    f"{job.label} {config.protocol}: mean md {counts['md']:.2f}, "
                    f"mean fa {counts['fa']:.2f}, mean realized {counts['realized']:.2f}, "
                    f"gate pass rate {counts['cra_success']:.3f}"
                )
            else:
                print(
                    f"{job.label} {config.protocol}: round {last} mean squared error "
                    f"{trace.mean_sq_error(last):.6g}, gate pass rate {counts['cra_success']:.3f}"
                )
        export_trace(traces, plan.fmt, _out_path(plan.out, job.label, many))
    return 3 if flagged else 0


if __name__ == "__main__":
    sys.exit(main())
