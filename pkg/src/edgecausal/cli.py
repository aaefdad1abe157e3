"""Command-line entry point: ``edgecausal {analyze,run,check,compare}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checker import build_causal_order, check_liveness, check_safety, classify_stalls
from .graph import render_edge
from .protocol import FAULTS
from .reduction import coefficient_table, reduction_for
from .scenario import ScenarioError, load_scenario_file
from .sim import DELAY_ALGORITHM, Simulation
from .trace import read_trace, write_trace


def _edges(es) -> str:
    return "{" + ", ".join(sorted(render_edge(e) for e in es)) + "}"


def analyze(sc) -> str:
    topo = sc.topology
    g, gp = topo.share, topo.augmented
    out = ["share graph:"]
    for a, b in sorted(g.edges):
        out.append(f"  {a} -- {b}  shares {{{', '.join(sorted(g.shared_vars(a, b)))}}}")
    aug = gp.augmented_only()
    out.append("augmented edges: " + (", ".join(f"{a} -- {b}" for a, b in aug) if aug else "none"))
    out.append("replicas:")
    for r in topo.replicas:
        basis = reduction_for(topo, r)
        out.append(f"  {r}: |E|={len(topo.E(r))} E={_edges(topo.E(r))}")
        out.append(f"  {r}: |reduced|={len(basis.edges)} reduced={_edges(basis.edges)}")
        for line in coefficient_table(basis):
            out.append(f"      {line}")
    out.append("clients:")
    for c in topo.clients:
        out.append(f"  {c}: |C|={len(topo.C(c))} C={_edges(topo.C(c))}")
    return "\n".join(out) + "\n"


def _load(path):
    try:
        return load_scenario_file(path)
    except ScenarioError as exc:
        raise SystemExit(f"{path}: {exc}") from None
    except OSError as exc:
        raise SystemExit(f"cannot read scenario: {exc}") from None


def _simulate(sc, args, mode):
    return Simulation(
        sc,
        args.seed,
        mode=mode,
        step_cap=args.step_cap,
        gc=getattr(args, "gc", False),
        faults=getattr(args, "fault", None) or (),
    ).run()


def cmd_analyze(args) -> int:
    sys.stdout.write(analyze(_load(args.scenario)))
    return 0


def cmd_run(args) -> int:
    sc = _load(args.scenario)
    mode = args.mode or sc.mode
    result = _simulate(sc, args, mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(result.trace, out / "trace.jsonl")
    report = result.metrics.report()
    (out / "metrics.txt").write_text(report)
    sys.stdout.write(report)
    return 0 if result.metrics.quiescent else 3


def check_report(trace, sc) -> tuple[list[str], int]:
    order = build_causal_order(trace)
    violations = check_safety(trace, order, sc.replicas) + check_liveness(trace, sc.replicas)
    true_stalls, false_stalls = classify_stalls(trace, order, sc.replicas)
    lines = [v.render() for v in violations]
    lines.append(f"violations = {len(violations)}")
    lines.append(f"true_stalls = {len(true_stalls)}")
    lines.append(f"false_stalls = {len(false_stalls)}")
    for ev in true_stalls:
        lines.append(f"stall step={ev.step} true {ev['entry']} at {ev['replica']}")
    for ev in false_stalls:
        lines.append(f"stall step={ev.step} false {ev['entry']} at {ev['replica']}")
    return lines, len(violations)


def cmd_check(args) -> int:
    sc = _load(args.scenario)
    try:
        trace = read_trace(args.trace)
    except (OSError, ValueError, KeyError) as exc:
        raise SystemExit(f"cannot read trace: {exc}") from None
    lines, n = check_report(trace, sc)
    print("\n".join(lines))
    return 1 if n else 0


def compare(sc, seed=None, step_cap=None) -> str:
    rows = {}
    for mode in ("edge", "baseline"):
        res = Simulation(sc, seed, mode=mode, step_cap=step_cap).run()
        order = build_causal_order(res.trace)
        true_stalls, false_stalls = classify_stalls(res.trace, order, sc.replicas)
        viol = check_safety(res.trace, order, sc.replicas) + check_liveness(res.trace, sc.replicas)
        m = res.metrics
        rows[mode] = {
            "stalls": m.stalls,
            "true_stalls": len(true_stalls),
            "false_stalls": len(false_stalls),
            "stall_time": m.stall_time,
            "violations": len(viol),
            "quiescent": str(m.quiescent).lower(),
            "end_time": m.end_time,
            "messages": sum(m.messages.values()),
            "replica_counters": sum(m.edges.values()),
            "reduced_counters": sum(m.reduced.values()),
            "client_counters": sum(m.client_edges.values()),
        }
    used = sc.network.seed if seed is None else seed
    lines = [
        f"# both modes draw delays from one stream: {DELAY_ALGORITHM}, seed {used}, keyed by (channel, message ordinal)",
        f"{'metric':<18}{'edge':>10}{'baseline':>10}",
    ]
    for key in rows["edge"]:
        lines.append(f"{key:<18}{rows['edge'][key]!s:>10}{rows['baseline'][key]!s:>10}")
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    sc = _load(args.scenario)
    table = compare(sc, args.seed, args.step_cap)
    sys.stdout.write(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.txt").write_text(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgecausal", description="Edge-timestamp causal consistency toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default=None):
        sp.add_argument("--scenario", required=True, help="scenario YAML file")
        sp.add_argument("--seed", type=int, default=None, help="delay seed (default: the scenario's, else 0)")
        sp.add_argument("--step-cap", type=int, default=None, help="stop after this many trace events")
        sp.add_argument("--out", default=out_default, help="output directory")

    sp = sub.add_parser("analyze", help="print share graph and timestamp sets")
    sp.add_argument("--scenario", required=True)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("run", help="simulate a scenario and write trace.jsonl and metrics.txt")
    common(sp, "out")
    sp.add_argument("--mode", choices=("edge", "baseline"), default=None)
    sp.add_argument("--gc", action="store_true", help="enable log and Done garbage collection")
    sp.add_argument("--fault", action="append", choices=sorted(FAULTS), help="inject a protocol fault (edge mode)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("check", help="verify a trace; exit 1 if it violates causal consistency")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--trace", required=True)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("compare", help="edge protocol vs baseline on identical delay draws")
    common(sp)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
