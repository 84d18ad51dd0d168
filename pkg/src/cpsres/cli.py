"""``cps-res`` command line.

Exit codes: 0 success, 1 configuration or usage error, 2 non-resilient verdict
(threshold violation, no settling, envelope violation), 3 divergence.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from . import te_benchmark as te
from .config import (
    build_networks,
    build_scenario,
    demo2_transfer_matrix,
    load_config,
    network_setpoints,
    schema_text,
)
from .errors import ConfigError, CPSResError, DivergenceError, NotSettledError
from .lti_core import simulate
from .metrics import measure, worst_case_estimate

EXIT_OK, EXIT_CONFIG, EXIT_VERDICT, EXIT_DIVERGED = 0, 1, 2, 3


class _Ctx:
    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.quiet = args.quiet

    def say(self, *parts):
        if not self.quiet:
            print(*parts)

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text)
        return path

    def doc(self, required: bool = True) -> dict:
        a = self.args
        if a.config:
            doc = load_config(a.config)
            if a.plant:
                doc["plant"] = a.plant
        elif a.plant:
            doc = {"plant": a.plant}
        elif required:
            raise ConfigError("a scenario needs --config or --plant")
        else:
            doc = {}
        if a.seed is not None:
            if "noise" in doc:
                doc["noise"]["seed"] = a.seed
            if "montecarlo" in doc:
                doc["montecarlo"]["seed"] = a.seed
        return doc


def _run(sc):
    return simulate(sc.model, sc.controller, sc.x0, sc.horizon, noise=sc.noise, limits=sc.limits,
                    attack=sc.attack, u_offset=sc.u_offset, y_offset=sc.y_offset)


def _window(sc):
    if sc.attack is None:
        return 0, 0
    w = sc.attack.window
    KA = sc.KA if w.duration is None else w.duration
    return w.start, KA


def cmd_simulate(ctx: _Ctx) -> int:
    sc = build_scenario(ctx.doc())
    traj = _run(sc)
    outputs = sc.doc.get("output", {})
    ctx.write(outputs.get("trajectory_csv", "trajectory.csv"), traj.csv_text())
    k0, KA = _window(sc)
    try:
        report = measure(traj, sc.variables, k0, KA, sc.band_fraction)
    except NotSettledError as exc:
        print(f"not resilient: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    ctx.write(outputs.get("report_json", "report.json"), report.to_json())
    ctx.say(report.table())
    violated = [v.name for v in sc.variables if v.violates(traj.y[:, v.output])]
    if violated:
        print(f"not resilient: threshold violated by {', '.join(violated)}", file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


def cmd_estimate(ctx: _Ctx) -> int:
    sc = build_scenario(ctx.doc())
    try:
        report = worst_case_estimate(sc.model, sc.controller, sc.variables, sc.KA, sc.limits,
                                     band_fraction=sc.band_fraction, direction=sc.direction,
                                     y_offset=sc.y_offset, u_offset=sc.u_offset, max_recovery=sc.max_recovery)
    except NotSettledError as exc:
        print(f"not resilient: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    ctx.write("estimate.json", report.to_json())
    ctx.say(report.table())
    return EXIT_OK


def cmd_montecarlo(ctx: _Ctx) -> int:
    from .campaign import CampaignResult, CampaignSpec, run_campaign

    doc = ctx.doc()
    if ctx.args.replay_seed is not None:
        sc = build_scenario(doc)
        spec = CampaignSpec.from_scenario(sc)
        attack = spec.from_seed(ctx.args.replay_seed, "replay")
        traj = simulate(sc.model, sc.controller, sc.x0, sc.horizon, limits=sc.limits, attack=attack,
                        u_offset=sc.u_offset, y_offset=sc.y_offset)
        path = ctx.write(f"replay_{ctx.args.replay_seed}.csv", traj.csv_text())
        ctx.say(f"replayed run with seed {ctx.args.replay_seed} -> {path}")
        return EXIT_OK
    result = run_campaign(doc, n_runs=ctx.args.runs)
    ctx.write("campaign.json", result.to_json())
    ctx.write("runs.csv", result.runs_csv())
    ctx.write("envelope.dat", result.gnuplot_data())
    ctx.write("envelope.gp", CampaignResult.gnuplot_script())
    viol = result.violations
    ctx.say(f"{result.spec.n_runs} runs, {len(viol)} envelope violations")
    if viol:
        for v in viol:
            print(f"envelope violation: {json.dumps(v)}", file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


def cmd_structure(ctx: _Ctx) -> int:
    from .structure import structural_report

    sc = build_scenario(ctx.doc())
    m = sc.structure_model()
    report = structural_report(m.A, m.B, m.C, sc.topology())
    text = json.dumps(report.to_dict(), indent=2)
    ctx.write("structure.json", text)
    ctx.say(text)
    return EXIT_OK


def _plant_tf(ctx: _Ctx):
    doc = ctx.doc()
    if doc.get("plant") == "te":
        return te.te_transfer_matrix()
    if doc.get("plant") == "demo2":
        return demo2_transfer_matrix()
    sc = build_scenario(doc)
    if sc.tf is None:
        raise ConfigError("decompose needs a transfer-function plant")
    return sc.tf


def cmd_decompose(ctx: _Ctx) -> int:
    from .switched import build_graph
    from .tf_algebra import DecompositionSelection, build_D, compute_Q, enumerate_selections

    G = _plant_tf(ctx)
    n = G.shape[0]
    sel_arg = ctx.args.selection
    if sel_arg == "all":
        found = list(enumerate_selections(G))
    else:
        try:
            rows = tuple(int(r) - 1 for r in sel_arg.split(","))
        except ValueError:
            raise ConfigError(f"--selection must be 'all' or comma-separated rows, got {sel_arg!r}") from None
        sel = DecompositionSelection(rows)
        D = build_D(G, sel)
        found = [(sel, D, compute_Q(G, D))]
    for sel, D, Q in found:
        label = sel.label()
        ctx.write(f"D_{label}.txt", D.to_text())
        ctx.write(f"Q_{label}.txt", Q.to_text())
        ctx.write(f"graph_{label}.dot", build_graph(D, Q).to_dot())
    summary = {
        "version": 1,
        "size": n,
        "candidates": n**n if sel_arg == "all" else 1,
        "realizable": len(found),
        "selections": [sel.label() for sel, _, _ in found],
    }
    ctx.write("decompose.json", json.dumps(summary, indent=2))
    ctx.say(f"{summary['realizable']} realizable of {summary['candidates']} selections: "
            + ", ".join(summary["selections"]))
    return EXIT_OK


def cmd_switched(ctx: _Ctx) -> int:
    from .switched import SwitchedSystem, simulate_switched

    doc = ctx.doc()
    sc = build_scenario(doc)
    spec = doc.get("switched")
    if not spec:
        raise ConfigError("switched: section missing")
    nets = build_networks(sc)
    K2 = bytes.fromhex(spec["K2"]) if "K2" in spec else b"\x00" * 32
    sw = SwitchedSystem(sc.model, nets, spec.get("interval", 10), bytes.fromhex(spec["K1"]), K2,
                        network_setpoints(sc))
    gap = sw.validate()
    run = simulate_switched(sw, sc.x0, sc.horizon, attack=sc.attack, limits=sc.limits, noise=sc.noise,
                            switch_settle_guard=spec.get("guard", 20), warmup=spec.get("warmup", 20),
                            u_offset=sc.u_offset, y_offset=sc.y_offset)
    outputs = doc.get("output", {})
    ctx.write(outputs.get("trajectory_csv", "trajectory.csv"), run.trajectory.csv_text())
    ctx.write("schedule.csv", run.schedule_csv())
    for net in nets:
        ctx.write(f"graph_{net.label}.dot", net.graph.to_dot())
    summary = {
        "version": 1,
        "subsystems": sw.N,
        "selection_calls": run.selection_calls,
        "switches": len(run.switch_steps),
        "equivalence_gap": gap,
        "state_transfer": "least-squares fit over the warm-up window",
    }
    ctx.write("switched.json", json.dumps(summary, indent=2))
    ctx.say(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_plant_dump(ctx: _Ctx) -> int:
    if ctx.args.name != "te":
        raise ConfigError(f"unknown built-in plant {ctx.args.name!r}")
    print(json.dumps(te.plant_dump(), indent=2))
    return EXIT_OK


def cmd_config_schema(ctx: _Ctx) -> int:
    print(schema_text())
    return EXIT_OK


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="scenario JSON file")
    p.add_argument("--plant", default=d, help="built-in plant (te, demo2, scalar)")
    p.add_argument("--out", default=d if suppress else ".", help="output directory")
    p.add_argument("--seed", type=int, default=d, help="override noise / master seed")
    p.add_argument("--quiet", action="store_true", default=d if suppress else False)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cps-res", description="Cyber-resilience evaluation of control systems")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        sp.set_defaults(func=func)
        return sp

    add("simulate", cmd_simulate, "single closed-loop run, trajectory CSV and measured report")
    add("estimate", cmd_estimate, "worst-case resilience estimate")
    mc = add("montecarlo", cmd_montecarlo, "Monte Carlo campaign against the estimate")
    mc.add_argument("--runs", type=int, default=None, help="override n_runs")
    mc.add_argument("--replay-seed", type=int, default=None, help="replay one run from its logged seed")
    add("structure", cmd_structure, "controllability/observability and t-resilience indices")
    dec = add("decompose", cmd_decompose, "D/Q decomposition files and network graphs")
    dec.add_argument("--selection", default="all", help="'all' or 1-based rows per column, e.g. 1,3,2,4")
    add("switched", cmd_switched, "switched decentralized run and schedule")
    plant = sub.add_parser("plant", help="built-in plant utilities")
    psub = plant.add_subparsers(dest="plant_command", required=True)
    dump = psub.add_parser("dump", help="print plant constants as JSON")
    dump.add_argument("name")
    _global_flags(dump, suppress=True)
    dump.set_defaults(func=cmd_plant_dump)
    cfg = sub.add_parser("config", help="configuration utilities")
    csub = cfg.add_subparsers(dest="config_command", required=True)
    schema = csub.add_parser("schema", help="print the scenario JSON schema")
    _global_flags(schema, suppress=True)
    schema.set_defaults(func=cmd_config_schema)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    ctx = _Ctx(args)
    try:
        return args.func(ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NotSettledError as exc:
        print(f"not resilient: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except CPSResError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
