"""Command-line front end: scenario configuration files, run/sweep
execution with replication management, the analytic waste table, and the
self-test suite.

Config files are TOML; every key maps 1:1 onto a scenario field and
unknown keys are rejected.  An empty file yields the built-in default
scenario.  Results land as one CSV per load point plus a manifest with
the config hash and the seeds used.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict
from multiprocessing import get_context
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .analytics import WasteInputs, gsipact_waste, ipact_waste_percent, wmax_per_onu
from .dba import Demand, DemandSet, ExcessPolicy, classify, distribute_excess, excess_pool
from .metrics import result_rows, rows_to_csv
from .scenario import OnOffTuning, ScenarioConfig, ValidationError, run_replication
from .sched import GroupSpec, PriorityPolicy, SchedKind, SchedulerConfig
from .traffic import CbrSpec, CbrSource, FlWorkloadSpec
from .twdm import WavelengthPolicy


class ParseError(Exception):
    """Config file is not syntactically valid TOML."""


def _take(table: dict, known: dict, where: str) -> dict:
    """Pop known keys; anything left over is a config error."""
    out = {}
    for key, convert in known.items():
        if key in table:
            out[key] = convert(table.pop(key))
    if table:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(sorted(table))}")
    return out


def _scheduler_from(table: dict) -> SchedulerConfig:
    groups = []
    for g in table.pop("groups", []):
        fields = _take(
            dict(g),
            {
                "group_id": int,
                "members": lambda v: tuple(int(m) for m in v),
                "policy": lambda v: ExcessPolicy(v),
            },
            "scheduler.groups",
        )
        groups.append(GroupSpec(**fields))
    fields = _take(
        table,
        {
            "kind": lambda v: SchedKind(v),
            "priority_policy": lambda v: PriorityPolicy(v),
            "theta": float,
            "wavelength_policy": lambda v: WavelengthPolicy(v),
            "max_cycle_ns": int,
            "guard_ns": int,
        },
        "scheduler",
    )
    return SchedulerConfig(groups=tuple(groups), **fields)


def parse_config(path: str | Path | None) -> ScenarioConfig:
    """Load and validate a scenario; missing keys take the defaults."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ScenarioConfig:
    raw = dict(raw)
    kwargs = {}

    sched_table = dict(raw.pop("scheduler", {}))
    kwargs["scheduler"] = _scheduler_from(sched_table)

    cbr_table = dict(raw.pop("cbr", {}))
    cbr_enabled = bool(cbr_table.pop("enabled", True))
    cbr_fields = _take(cbr_table, {"packet_bytes": int, "interarrival_ns": int}, "cbr")
    kwargs["cbr"] = CbrSpec(**cbr_fields) if cbr_enabled else None

    fl_table = dict(raw.pop("fl", {}))
    fl_enabled = bool(fl_table.pop("enabled", True))
    sync_window_s = fl_table.pop("sync_window_s", None)
    fl_fields = _take(
        fl_table,
        {
            "payload_bytes_per_round": int,
            "clients": int,
            "compute_min_s": float,
            "compute_max_s": float,
            "downstream_delay_ns": int,
            "aggregation_delay_ns": int,
        },
        "fl",
    )
    if sync_window_s is not None:
        fl_fields["sync_window_ns"] = int(float(sync_window_s) * 1e9)

    onoff_fields = _take(
        dict(raw.pop("onoff", {})),
        {
            "hurst": float,
            "burst_shape": float,
            "burst_min_bytes": int,
            "burst_max_bytes": int,
            "peak_factor": float,
            "mean_on_ns": float,
        },
        "onoff",
    )
    kwargs["onoff"] = OnOffTuning(**onoff_fields)

    top = _take(
        raw,
        {
            "name": str,
            "n_onus": int,
            "n_wavelengths": int,
            "line_rate_bps": float,
            "duration_s": float,
            "warmup_s": float,
            "replications": int,
            "master_seed": int,
            "rtt_min_ns": int,
            "rtt_max_ns": int,
            "loads": lambda v: tuple(float(x) for x in v),
            "ds_be_enabled": bool,
            "buffer_bytes": int,
            "sync_sweep_s": lambda v: tuple(float(x) for x in v),
        },
        "top level",
    )
    kwargs.update(top)

    cfg = ScenarioConfig(**kwargs)
    if not fl_enabled:
        cfg.fl = FlWorkloadSpec(clients=0)
    else:
        base = asdict(cfg.fl)
        base.update(fl_fields)
        if "clients" not in fl_fields:
            base["clients"] = cfg.n_onus
        cfg.fl = FlWorkloadSpec(**base)
    cfg.validate()
    return cfg


def config_hash(cfg: ScenarioConfig) -> str:
    canonical = json.dumps(asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# run / sweep
# ---------------------------------------------------------------------------


def _one_replication(args):
    cfg, load, rep, log_mode = args
    gate_trace = None
    frame_trace = None
    if log_mode in ("gates", "frames"):
        gate_trace = lambda line: print(f"gate,{line}", file=sys.stderr)
    if log_mode == "frames":
        frame_trace = lambda line: print(f"frame,{line}", file=sys.stderr)
    result = run_replication(cfg, load, rep, gate_trace, frame_trace)
    return load, rep, result


def run_scenario(cfg: ScenarioConfig, out_dir: Path, workers: int = 1) -> int:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"output directory not writable: {exc}", file=sys.stderr)
        return 2

    log_mode = os.environ.get("PONSIM_LOG", "off")
    jobs = [
        (cfg, load, rep, log_mode)
        for load in cfg.loads
        for rep in range(cfg.replications)
    ]
    try:
        if workers > 1:
            with get_context("spawn").Pool(workers) as pool:
                outcomes = pool.map(_one_replication, jobs)
        else:
            outcomes = [_one_replication(j) for j in jobs]
    except AssertionError as exc:
        print(f"invariant violated during run: {exc}", file=sys.stderr)
        return 1

    by_load: dict[float, list] = {load: [] for load in cfg.loads}
    for load, rep, result in sorted(
        outcomes, key=lambda o: (cfg.loads.index(o[0]), o[1])
    ):
        by_load[load].extend(result_rows(result))
    for load, rows in by_load.items():
        path = out_dir / f"results_load{load:g}.csv"
        path.write_text(rows_to_csv(rows))
    manifest = {
        "config_hash": config_hash(cfg),
        "version": __version__,
        "scenario": cfg.name,
        "master_seed": cfg.master_seed,
        "seeds": [
            cfg.master_seed * 1_000_003 + rep for rep in range(cfg.replications)
        ],
        "loads": list(cfg.loads),
        "replications": cfg.replications,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# waste table
# ---------------------------------------------------------------------------


def waste_table(args) -> int:
    print("cycle_us,rtt_us,n_onus,n_group,wlength_percent,guard_us,wasted_us,wasted_percent")
    for rtt_us in args.rtt_us:
        for wl in args.wlength_percent:
            inputs = WasteInputs(
                cycle_ns=int(args.cycle_us * 1000),
                rtt_ns=int(rtt_us * 1000),
                n_onus=args.n_onus,
                n_group=args.n_group,
                guard_ns=int(args.guard_us * 1000),
                wlength_percent=wl,
            )
            wasted_ns, pct = gsipact_waste(inputs)
            print(
                f"{args.cycle_us:g},{rtt_us:g},{args.n_onus},{args.n_group},"
                f"{wl:g},{args.guard_us:g},{wasted_ns / 1000:g},{pct:g}"
            )
    return 0


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------


def _selftest_checks() -> list[tuple[str, bool, str]]:
    checks: list[tuple[str, bool, str]] = []

    def judge(name: str, got, want) -> None:
        checks.append((name, got == want, f"got {got}, want {want}"))

    demands = DemandSet(
        [Demand(0, 12000, 5000), Demand(1, 8000, 5000), Demand(2, 3000, 5000),
         Demand(3, 4500, 5000)]
    )
    under, over = classify(demands)
    pool = excess_pool(demands, under)
    judge("classify_under_over", (sorted(under), sorted(over)), ([2, 3], [0, 1]))
    judge("excess_pool_total", pool.total_bytes, 2500)
    sub = DemandSet([Demand(0, 12000, 5000), Demand(1, 8000, 5000)])
    pool4k = excess_pool(
        DemandSet([Demand(9, 1000, 5000)]), {9}
    )  # synthetic 4000-byte pool
    pool4k.total_bytes = 4000
    judge(
        "dba1_demand_weighted",
        distribute_excess(ExcessPolicy.DBA1, sub, {0, 1}, pool4k),
        {0: 7400, 1: 6600},
    )
    judge(
        "dba2_equal_split",
        distribute_excess(ExcessPolicy.DBA2, sub, {0, 1}, pool4k),
        {0: 7000, 1: 7000},
    )
    sub3 = DemandSet([Demand(0, 12000, 5000), Demand(1, 6000, 5000)])
    judge(
        "dba3_controlled",
        distribute_excess(ExcessPolicy.DBA3, sub3, {0, 1}, pool4k),
        {0: 7000, 1: 6000},
    )
    judge(
        "wdba_excess_weighted",
        distribute_excess(ExcessPolicy.WDBA, sub, {0, 1}, pool4k),
        {0: 7800, 1: 6200},
    )
    judge(
        "wdba1_controlled",
        distribute_excess(ExcessPolicy.WDBA1, sub3, {0, 1}, pool4k),
        {0: 8500, 1: 5500},
    )

    judge("waste_ipact_rtt100", ipact_waste_percent(1_000_000, 100_000), 10.0)
    judge("waste_ipact_rtt200", ipact_waste_percent(1_000_000, 200_000), 20.0)
    judge("wmax_32_onus_gt1us", wmax_per_onu(1_000_000, 32, 1_000), 30_250.0)

    source = CbrSource(CbrSpec())
    arrivals, wires = source.pull(1_000_000_000)
    offered = sum(w - 20 for w in wires) * 8 / 1.0
    judge("cbr_frame_count_1s", len(arrivals), 80_000)
    judge("cbr_offered_bps", offered, 44_800_000.0)
    return checks


def selftest() -> int:
    checks = _selftest_checks()
    width = max(len(name) for name, _, _ in checks)
    failed = 0
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        line = f"{name:<{width}}  {status}"
        if not ok:
            line += f"  ({detail})"
            failed += 1
        print(line)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ponsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("run", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--replications", type=int, default=None)
        p.add_argument("--workers", type=int, default=1)
        if name == "sweep":
            p.add_argument("--loads", type=_float_list, default=None)

    w = sub.add_parser("waste")
    w.add_argument("--cycle-us", type=float, default=1000.0)
    w.add_argument("--rtt-us", type=_float_list, default=[100.0, 150.0, 200.0])
    w.add_argument("--n-onus", type=int, default=32)
    w.add_argument("--n-group", type=int, default=28)
    w.add_argument("--wlength-percent", type=_float_list, default=[0.0, 50.0, 100.0])
    w.add_argument("--guard-us", type=float, default=1.0)

    sub.add_parser("selftest")

    args = parser.parse_args(argv)
    if args.command == "selftest":
        return selftest()
    if args.command == "waste":
        return waste_table(args)

    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.master_seed = args.seed
        if args.replications is not None:
            cfg.replications = args.replications
        if args.command == "sweep" and args.loads:
            cfg.loads = tuple(args.loads)
        cfg.validate()
    except (ParseError, ValidationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run_scenario(cfg, args.out, workers=args.workers)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
