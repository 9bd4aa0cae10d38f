"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 bad config, 3 unknown
preset, 4 infeasible mapping.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .config import load_chip_config, load_device_config
from .errors import ConfigParseError, Infeasible, InvariantViolation
from .experiments import (
    PRESETS,
    WORK_COLUMNS,
    ExperimentPreset,
    Targets,
    UnknownPreset,
    design_plans,
    run_performance_preset,
    work_table,
)
from .fabric import PcuGeometry, PcuMode, interconnect_delta
from .perf import to_csv, to_json
from .verify import run_suites
from .workloads import DECODERS, build_decoder

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_PRESET, EXIT_INFEASIBLE = 0, 1, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdusim", description="RDU fabric simulator and performance model")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment preset and write CSV/JSON reports")
    run.add_argument("preset")
    run.add_argument("--seqlen", type=int, action="append", help="repeatable; default 2^18, 2^19, 2^20")
    run.add_argument("--hidden", type=int, default=32)
    run.add_argument("--tile", type=int, default=32)
    run.add_argument("--chip", default="rdu_table1", help="chip config path or built-in name")
    run.add_argument("--device", default=None, help="GPU config path or built-in name (default gpu_a100)")
    run.add_argument("--out", required=True, type=Path)

    ver = sub.add_parser("verify", help="run the oracle-equivalence suites")
    ver.add_argument("scope", choices=("fabric", "kernels", "all"))
    ver.add_argument("--inject-fault", choices=("butterfly",), default=None, help=argparse.SUPPRESS)

    dg = sub.add_parser("dump-graph", help="print a decoder graph as JSON")
    dg.add_argument("decoder", choices=DECODERS)
    dg.add_argument("--seqlen", type=int, required=True)
    dg.add_argument("--hidden", type=int, default=32)
    dg.add_argument("--tile", type=int, default=32)

    dp = sub.add_parser("dump-plan", help="print the RDU mapping plans of a preset as JSON")
    dp.add_argument("preset")
    dp.add_argument("--seqlen", type=int, default=1 << 20)
    dp.add_argument("--hidden", type=int, default=32)
    dp.add_argument("--tile", type=int, default=32)
    dp.add_argument("--chip", default="rdu_table1")
    return p


def _err(msg: str) -> None:
    print(f"rdusim: {msg}", file=sys.stderr)


def _targets(args) -> Targets:
    targets = Targets(load_chip_config(args.chip))
    if getattr(args, "device", None):
        targets.gpu = load_device_config(args.device)
    return targets


def _pcu_verify_summary() -> dict:
    res = run_suites("fabric")["fabric"]
    deltas = {}
    for g in (PcuGeometry(8, 6), PcuGeometry(32, 12)):
        for m in PcuMode:
            deltas.setdefault(str(g), {})[m.value] = interconnect_delta(m, g)
    return {
        "preset": "pcu-verify",
        "cases": [{"name": c.name, "passed": c.passed} for c in res],
        "passed": sum(c.passed for c in res),
        "total": len(res),
        "interconnect_delta": deltas,
    }


def cmd_run(args) -> int:
    preset = ExperimentPreset(args.preset, tuple(args.seqlen) if args.seqlen else
                              ExperimentPreset("x").seqlens, args.hidden, args.tile)
    try:
        preset.check()
    except UnknownPreset as e:
        _err(str(e))
        return EXIT_PRESET
    except ValueError as e:
        _err(str(e))
        return EXIT_CONFIG
    targets = _targets(args)
    if preset.name == "pcu-verify":
        summary, csv_text = _pcu_verify_summary(), None
    elif preset.name == "work-tables":
        res = work_table(preset)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(WORK_COLUMNS)
        w.writerows(res.reports)
        summary, csv_text = res.summary, buf.getvalue()
    else:
        res = run_performance_preset(preset, targets)
        summary, csv_text = res.summary, to_csv(res.reports)
    args.out.mkdir(parents=True, exist_ok=True)
    if csv_text is not None:
        (args.out / f"{preset.name}.csv").write_text(csv_text)
    (args.out / f"{preset.name}.json").write_text(to_json(summary))
    for row in summary.get("speedups", []):
        print(f"{row['name']:<28} L={row['seqlen']:<8} {row['speedup']:10.3f}x  (reference {row['reference']}x)")
    if preset.name == "pcu-verify" and summary["passed"] != summary["total"]:
        return EXIT_VERIFY
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suites(args.scope, fault=args.inject_fault)
    failed = None
    for suite, cases in results.items():
        ok = sum(c.passed for c in cases)
        print(f"{suite}: {ok}/{len(cases)} passed")
        if failed is None:
            failed = next((c for c in cases if not c.passed), None)
    if failed is not None:
        print(f"FAIL {failed.suite}: {failed.name}")
        print(f"  input:    {failed.inputs}")
        print(f"  expected: {failed.expected}")
        print(f"  got:      {failed.got}")
        return EXIT_VERIFY
    return EXIT_OK


def cmd_dump_graph(args) -> int:
    print(build_decoder(args.decoder, args.seqlen, args.hidden, args.tile).to_json())
    return EXIT_OK


def cmd_dump_plan(args) -> int:
    preset = ExperimentPreset(args.preset, (args.seqlen,), args.hidden, args.tile)
    try:
        preset.check()
    except UnknownPreset as e:
        _err(str(e))
        return EXIT_PRESET
    if preset.name in ("pcu-verify", "work-tables"):
        _err(f"preset {preset.name} has no mapping plans")
        return EXIT_PRESET
    plans = design_plans(preset, _targets(args), args.seqlen)
    print(json.dumps({k: v.to_dict() for k, v in plans.items()}, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "dump-graph": cmd_dump_graph, "dump-plan": cmd_dump_plan}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigParseError, InvariantViolation) as e:
        _err(f"config error: {e}")
        return EXIT_CONFIG
    except Infeasible as e:
        _err(f"infeasible mapping: {e}")
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
