"""Command-line interface: gen, surrogate, plan, simulate, eval, bench, serve."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

from . import evalmc, instgen, planners, simpolicy, stage2, surrogate
from .model import Instance, Plan, Specialty, scenarios_from_jsonl, scenarios_to_jsonl
from .planners import PlannerConfig


def _all_specialties() -> dict[str, Specialty]:
    return {
        code: Specialty(code, mean, sd * sd)
        for code, (mean, sd) in instgen.SPECIALTY_MARGINALS.items()
    }


def _load_surrogates(cache_dir: str, cost_structure: str, n_points: int,
                     k_scenarios: int) -> dict[str, surrogate.SurrogateModel]:
    return surrogate.load_or_build(
        cache_dir, _all_specialties(), instgen.COST_STRUCTURES[cost_structure],
        n_points=n_points, k_scenarios=k_scenarios,
    )


def _add_surrogate_size_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--surrogate-points", type=int,
                        default=surrogate.DEFAULT_CLOUD_POINTS,
                        help="cloud points per specialty")
    parser.add_argument("--surrogate-scenarios", type=int, default=stage2.PREPROCESS_K,
                        help="scenarios per cloud point")


def cmd_gen(args: argparse.Namespace) -> int:
    config = instgen.GenConfig(
        seed=args.seed, n_patients=args.patients, rate=getattr(args, "lambda"),
        flowtime_unit=args.unit, cost_structure=args.cost_structure,
    )
    models = _load_surrogates(args.surrogates, args.cost_structure,
                              args.surrogate_points, args.surrogate_scenarios)
    instance = instgen.generate_instance(config, surrogate.rightmost_slopes(models))
    with open(args.out, "w") as fh:
        fh.write(instance.to_json(indent=2))
    print(f"wrote instance with {len(instance.patients)} patients to {args.out}")
    if args.scenarios:
        seed = args.scenario_seed
        if seed is None:
            seed = args.seed + evalmc.VALIDATION_SEED_OFFSET
        scen = instgen.sample_scenarios(instance, args.scenarios, seed)
        out = args.scenarios_out or (os.path.splitext(args.out)[0] + ".scenarios.jsonl")
        with open(out, "w") as fh:
            fh.write(scenarios_to_jsonl(scen))
        print(f"wrote {len(scen)} scenarios to {out}")
    return 0


def cmd_surrogate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    models = _load_surrogates(args.out, args.cost_structure,
                              args.surrogate_points, args.surrogate_scenarios)
    for code, model in sorted(models.items()):
        pieces = ", ".join(f"({a:.3f}, {b:.1f})" for a, b in model.pieces)
        print(f"{code}: pieces [{pieces}]  mard={model.mean_abs_rel_dev:.3f}")
    print(f"surrogate cache ready in {args.out} ({time.perf_counter() - t0:.1f}s)")
    return 0


def _read_instance(path: str) -> Instance:
    with open(path) as fh:
        return Instance.from_json(fh.read())


def cmd_plan(args: argparse.Namespace) -> int:
    instance = _read_instance(args.instance)
    config = PlannerConfig(
        method=args.method, n_e=args.ne, scenario_count=args.k,
        scenario_seed=args.scenario_seed, time_limit=args.time_limit,
        quantile=args.quantile, mip_gap=args.mip_gap,
    )
    models = None
    if args.method == "smb2ss":
        cost_structure = instance.meta.get("cost_structure", args.cost_structure)
        models = _load_surrogates(args.surrogates, cost_structure,
                                  args.surrogate_points, args.surrogate_scenarios)
    result = planners.plan(instance, config, models)
    with open(args.out, "w") as fh:
        fh.write(result.plan.to_json(indent=2))
    report = result.report.to_dict()
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=2)
    print(json.dumps(report, indent=2))
    return 0


def _read_plan(path: str) -> Plan:
    with open(path) as fh:
        return Plan.from_json(fh.read())


def cmd_simulate(args: argparse.Namespace) -> int:
    instance = _read_instance(args.instance)
    plan = _read_plan(args.plan)
    with open(args.scenario_file) as fh:
        scenarios = scenarios_from_jsonl(fh.read())
    params = simpolicy.PolicyParams(delta=args.delta, alpha=args.alpha)
    with open(args.out, "w") as fh:
        for scenario in scenarios:
            if args.trace:
                outcome, trace = simpolicy.simulate(instance, plan, scenario, params,
                                                    collect_trace=True)
                record = {"outcome": outcome.to_dict(), "trace": trace}
            else:
                outcome = simpolicy.simulate(instance, plan, scenario, params)
                record = {"outcome": outcome.to_dict()}
            fh.write(json.dumps(record) + "\n")
    print(f"simulated {len(scenarios)} scenarios -> {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    instance = _read_instance(args.instance)
    plan = _read_plan(args.plan)
    if args.scenarios:
        with open(args.scenarios) as fh:
            scenarios = scenarios_from_jsonl(fh.read())
    else:
        scenarios = evalmc.validation_scenarios(instance, args.k)
    params = simpolicy.PolicyParams(delta=args.delta, alpha=args.alpha)
    report = evalmc.evaluate_plan(instance, plan, scenarios, params)
    with open(args.out, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    print(json.dumps({"mean": report.mean.to_dict(),
                      "median_total": report.median_total,
                      "status_counts": report.status_counts}, indent=2))
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    seeds = [int(s) for s in args.seeds.split(",")]
    sizes = [int(s) for s in args.patients.split(",")]
    rates = [float(s) for s in args.lambdas.split(",")]
    methods = args.methods.split(",")
    deltas = [float(s) for s in args.deltas.split(",")]
    alphas = [float(s) for s in args.alphas.split(",")]
    cost_structures = args.cost_structures.split(",")
    units = args.units.split(",")

    fieldnames = [
        "seed", "n", "lambda", "unit", "cost_structure", "method", "delta",
        "alpha", "objective", "gap", "plan_seconds", "mean_total", "scheduling",
        "waiting", "idle", "overtime", "migration", "median_total",
    ]
    writer = csv.DictWriter(open(args.out, "w", newline=""), fieldnames=fieldnames)
    writer.writeheader()
    for cs in cost_structures:
        models = _load_surrogates(args.surrogates, cs, args.surrogate_points,
                                  args.surrogate_scenarios)
        slopes = surrogate.rightmost_slopes(models)
        for unit in units:
            for seed in seeds:
                for n in sizes:
                    for lam in rates:
                        config = instgen.GenConfig(
                            seed=seed, n_patients=n, rate=lam,
                            flowtime_unit=unit, cost_structure=cs,
                        )
                        instance = instgen.generate_instance(config, slopes)
                        scenarios = evalmc.validation_scenarios(instance, args.k)
                        for method in methods:
                            n_e = args.ne if method == "smb2ss" else 0
                            pconf = PlannerConfig(method=method, n_e=n_e,
                                                  scenario_count=args.k)
                            result = planners.plan(instance, pconf, models)
                            for delta in deltas:
                                for alpha in alphas:
                                    params = simpolicy.PolicyParams(delta, alpha)
                                    report = evalmc.evaluate_plan(
                                        instance, result.plan, scenarios, params
                                    )
                                    writer.writerow({
                                        "seed": seed, "n": n, "lambda": lam,
                                        "unit": unit, "cost_structure": cs,
                                        "method": method, "delta": delta,
                                        "alpha": alpha,
                                        "objective": result.report.objective,
                                        "gap": result.report.gap,
                                        "plan_seconds": result.report.wall_time,
                                        "mean_total": report.mean.total,
                                        "scheduling": report.mean.scheduling,
                                        "waiting": report.mean.waiting,
                                        "idle": report.mean.idle,
                                        "overtime": report.mean.overtime,
                                        "migration": report.mean.migration,
                                        "median_total": report.median_total,
                                    })
                                    print(f"seed={seed} n={n} lambda={lam} {cs} "
                                          f"{method} delta={delta} alpha={alpha}: "
                                          f"mean={report.mean.total:.1f}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceSettings, create_app

    settings = ServiceSettings(
        data_dir=args.data_dir,
        surrogate_dir=args.surrogates,
        surrogate_points=args.surrogate_points,
        surrogate_scenarios=args.surrogate_scenarios,
    )
    app = create_app(settings)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orplan",
                                     description="surgery planning pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a benchmark instance")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--patients", type=int, default=70)
    p.add_argument("--lambda", type=float, default=0.0, dest="lambda")
    p.add_argument("--unit", choices=("day", "week"), default="day")
    p.add_argument("--cost-structure", choices=sorted(instgen.COST_STRUCTURES),
                   default="cs3")
    p.add_argument("--out", required=True)
    p.add_argument("--scenarios", type=int, default=0,
                   help="also sample this many scenarios")
    p.add_argument("--scenario-seed", type=int, default=None)
    p.add_argument("--scenarios-out", default=None)
    p.add_argument("--surrogates", default="surrogate-cache")
    _add_surrogate_size_args(p)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("surrogate", help="build the surrogate cache")
    p.add_argument("--cost-structure", choices=sorted(instgen.COST_STRUCTURES),
                   default="cs3")
    p.add_argument("--out", required=True)
    _add_surrogate_size_args(p)
    p.set_defaults(fn=cmd_surrogate)

    p = sub.add_parser("plan", help="compute an assignment and tentative times")
    p.add_argument("--method", choices=("smb2ss", "det", "firstfit", "saa", "benders"),
                   default="smb2ss")
    p.add_argument("--instance", required=True)
    p.add_argument("--surrogates", default="surrogate-cache")
    p.add_argument("--cost-structure", default="cs3",
                   help="used when the instance has no cost-structure metadata")
    p.add_argument("--ne", type=int, default=0)
    p.add_argument("--k", type=int, default=stage2.PLANNING_K)
    p.add_argument("--scenario-seed", type=int, default=None)
    p.add_argument("--time-limit", type=float, default=20.0)
    p.add_argument("--quantile", type=float, default=0.7)
    p.add_argument("--mip-gap", type=float, default=0.005)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    _add_surrogate_size_args(p)
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("simulate", help="run the online policy on scenarios")
    p.add_argument("--instance", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--scenario-file", required=True)
    p.add_argument("--delta", type=float, default=120.0)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--trace", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("eval", help="Monte Carlo evaluation of a plan")
    p.add_argument("--instance", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--scenarios", default=None,
                   help="scenario JSONL file; default draws the validation set")
    p.add_argument("--k", type=int, default=stage2.PLANNING_K)
    p.add_argument("--delta", type=float, default=120.0)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="factorial sweep writing one CSV row per cell")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--patients", default="70")
    p.add_argument("--lambdas", default="0,3")
    p.add_argument("--units", default="day")
    p.add_argument("--cost-structures", default="cs3")
    p.add_argument("--methods", default="smb2ss,det,firstfit")
    p.add_argument("--deltas", default="120")
    p.add_argument("--alphas", default="0.7")
    p.add_argument("--ne", type=int, default=5)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--surrogates", default="surrogate-cache")
    p.add_argument("--out", required=True)
    _add_surrogate_size_args(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("ORPLAN_PORT", "8000")))
    p.add_argument("--data-dir",
                   default=os.environ.get("ORPLAN_DATA_DIR", "orplan-data"))
    p.add_argument("--surrogates", default=None)
    _add_surrogate_size_args(p)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
