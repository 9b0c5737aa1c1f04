from __future__ import annotations

import argparse
import logging
import sys
import uuid
from pathlib import Path

from app.config import DEFAULT_BUCKETS, RULES
from app.session_store import JsonStore, load_settings

logger = logging.getLogger("dagedge")

SETTINGS_PATH = Path("data/settings.json")


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="[dagedge] %(levelname)s %(name)s: %(message)s",
    )


def _cmd_gen(args: argparse.Namespace) -> int:
    from app.dataset import generate_corpus
    from app.models import GeneratorConfig

    config = GeneratorConfig(runtime_mode=args.runtime, resource_dist=args.dist)
    manifest = generate_corpus(
        Path(args.out),
        seed=args.seed,
        train_count=args.train,
        sizes=args.sizes,
        per_bucket=args.per_bucket,
        config=config,
    )
    for split, paths in manifest.splits.items():
        print(f"{split}: {len(paths)} files")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    from app.bench import write_training_log
    from app.dataset import load_split, load_test_buckets
    from app.models import ModelConfig, TrainConfig
    from app.policy import init_model, load_checkpoint, save_checkpoint
    from app.trainer import train

    config = TrainConfig(
        lr=args.lr,
        iterations=args.iters,
        rollouts=args.rollouts,
        edges=args.edges,
        gamma=args.gamma,
        epsilon=args.eps,
        rule=args.rule,
        seed=args.seed,
        beam=args.beam,
        eval_every=args.eval_every,
    )
    dataset = load_split(Path(args.data), "train")
    eval_sets = None if args.no_eval else load_test_buckets(Path(args.data))
    params = load_checkpoint(Path(args.init)) if args.init else init_model(ModelConfig(seed=args.seed))
    result = train(dataset, config, params=params, eval_sets=eval_sets)
    save_checkpoint(Path(args.out), result.params, meta={"train": config.model_dump(mode="json")})
    if args.log:
        write_training_log(Path(args.log), result.log)
    print(f"Checkpoint written to {args.out}")
    return 0


def _cmd_infer(args: argparse.Namespace) -> int:
    from app.dataset import load_dag
    from app.inference import ensemble_best, infer_edges
    from app.policy import load_checkpoint
    from app.simulator import PriorityRule, makespan

    params = load_checkpoint(Path(args.ckpt))
    g = load_dag(Path(args.dag))
    rule = PriorityRule.named(args.rule)
    if args.ensemble:
        augmented = ensemble_best(g, rule, args.edges, args.beam, params).graph
    else:
        augmented = infer_edges(g, params, args.edges, args.beam)
    for start, end in sorted(augmented.edges - g.edges):
        print(f"added edge {start} -> {end}")
    print(f"makespan before: {makespan(g, rule):.6f}")
    print(f"makespan after:  {makespan(augmented, rule):.6f}")
    return 0


def _cmd_bench_table(args: argparse.Namespace) -> int:
    from app.bench import format_table, run_table, write_csv
    from app.dataset import load_test_buckets
    from app.db import connect, record_table
    from app.policy import load_checkpoint

    settings = load_settings(JsonStore(SETTINGS_PATH))
    params = load_checkpoint(Path(args.ckpt)) if args.ckpt else None
    buckets = load_test_buckets(Path(args.data))
    rows = run_table(
        buckets,
        rules=args.rules,
        params=params,
        max_edges=args.edges,
        beam=args.beam,
        lp_column=not args.no_lp,
        workers=args.workers,
    )
    print(format_table(rows), end="")
    payload = [row.as_dict() for row in rows]
    write_csv(Path(args.csv), payload)
    with connect(settings.db_path) as conn:
        record_table(
            conn,
            run_id=uuid.uuid4().hex,
            manifest=str(args.data),
            rules=args.rules,
            max_edges=args.edges,
            beam=args.beam,
            checkpoint=args.ckpt,
            rows=payload,
        )
    return 0


def _cmd_bench_sweep(args: argparse.Namespace) -> int:
    from app.bench import sweep_edges, sweep_rows, write_csv
    from app.dataset import load_test_buckets
    from app.policy import load_checkpoint

    params = load_checkpoint(Path(args.ckpt))
    result = sweep_edges(load_test_buckets(Path(args.data)), params, args.rule, args.edges, args.beam)
    rows = sweep_rows(result)
    write_csv(Path(args.csv), rows)
    for row in rows:
        cells = "  ".join(f"{key}={value:.2f}" for key, value in row.items() if key != "dags")
        print(f"{row['dags']:>4} DAGs  {cells}")
    if args.plot:
        from app.plots import plot_sweep

        plot_sweep(result, Path(args.plot))
    return 0


def _cmd_bench_convergence(args: argparse.Namespace) -> int:
    from app.bench import convergence_report, read_training_log, write_csv

    log = read_training_log(Path(args.log).read_text(encoding="utf-8"))
    report = convergence_report(log, args.window)
    iterations = [row.iteration for row in log]
    rows = [
        {"iteration": iteration, **{f"dags_{b}": report[b][k][1] for b in report}}
        for k, iteration in enumerate(iterations)
    ]
    write_csv(Path(args.csv), rows)
    print(f"{len(rows)} smoothed points for buckets {sorted(report)}")
    if args.plot:
        from app.plots import plot_convergence

        plot_convergence(report, Path(args.plot))
    return 0


def _cmd_milp(args: argparse.Namespace) -> int:
    from app.dataset import load_dag
    from app.milp import build_milp, order_from_solution, read_solution, solve_relaxation, write_lp
    from app.simulator import makespan

    g = load_dag(Path(args.dag))
    model = build_milp(g)
    Path(args.out).write_text(write_lp(model, relax=args.relax), encoding="utf-8")
    print(f"Wrote {args.out}: {len(model.variables)} variables, {len(model.constraints)} constraints")

    solution = None
    if args.solution:
        solution = read_solution(Path(args.solution).read_text(encoding="utf-8"), model)
    elif args.solve == "scipy":
        solution = solve_relaxation(model)
    elif args.solve == "cbc":
        from app.tools import cbc_solution_to_pairs, resolve_and_validate_tool, solve_with_cbc

        settings = load_settings(JsonStore(SETTINGS_PATH))
        tool = resolve_and_validate_tool("cbc", settings.solver_path)
        report = solve_with_cbc(write_lp(model, relax=args.relax), tool)
        solution = read_solution(cbc_solution_to_pairs(report), model)
    if solution is not None:
        rule = order_from_solution(solution, g)
        print(f"objective T: {solution.get('T', float('nan')):.6f}")
        print(f"order: {' '.join(str(i) for i in rule.order)}")
        print(f"LP-order makespan: {makespan(g, rule):.6f}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    settings = load_settings(JsonStore(SETTINGS_PATH))
    print(f"[dagedge] results: {settings.db_path.resolve()} | checkpoint: {settings.checkpoint_path}")
    uvicorn.run(
        "app.main:app",
        host=args.host or settings.host,
        port=args.port or settings.port,
        reload=False,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dagedge", description="Learned edge addition for DAG scheduling")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate a synthetic corpus")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--train", type=int, default=1000)
    gen.add_argument("--sizes", type=int, nargs="+", default=list(DEFAULT_BUCKETS))
    gen.add_argument("--per-bucket", type=int, default=10)
    gen.add_argument("--dist", type=float, default=1.0)
    gen.add_argument("--runtime", choices=["empirical", "uniform"], default="empirical")
    gen.set_defaults(func=_cmd_gen)

    tr = sub.add_parser("train", help="Train the edge policy")
    tr.add_argument("--rule", choices=["sjf", "cp"], default="sjf")
    tr.add_argument("--edges", type=int, default=5)
    tr.add_argument("--rollouts", type=int, default=10)
    tr.add_argument("--iters", type=int, default=10_000)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--eps", type=float, default=0.05)
    tr.add_argument("--gamma", type=float, default=1.0)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--beam", type=int, default=10)
    tr.add_argument("--eval-every", type=int, default=100)
    tr.add_argument("--no-eval", action="store_true")
    tr.add_argument("--init", help="Checkpoint to continue from")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--log")
    tr.set_defaults(func=_cmd_train)

    inf = sub.add_parser("infer", help="Add edges to one DAG")
    inf.add_argument("--ckpt", required=True)
    inf.add_argument("--dag", required=True)
    inf.add_argument("--rule", choices=list(RULES), default="sjf")
    inf.add_argument("--edges", type=int, default=5)
    inf.add_argument("--beam", type=int, default=10)
    inf.add_argument("--ensemble", action="store_true", help="Keep the best of 0..edges added edges")
    inf.set_defaults(func=_cmd_infer)

    bench = sub.add_parser("bench", help="Experiment reports")
    bench_sub = bench.add_subparsers(dest="report", required=True)

    table = bench_sub.add_parser("table")
    table.add_argument("--data", required=True)
    table.add_argument("--ckpt")
    table.add_argument("--rules", nargs="+", choices=["sjf", "cp"], default=["sjf", "cp"])
    table.add_argument("--edges", type=int, default=5)
    table.add_argument("--beam", type=int, default=10)
    table.add_argument("--no-lp", action="store_true")
    table.add_argument("--workers", type=int, default=1)
    table.add_argument("--csv", required=True)
    table.set_defaults(func=_cmd_bench_table)

    sweep = bench_sub.add_parser("sweep")
    sweep.add_argument("--data", required=True)
    sweep.add_argument("--ckpt", required=True)
    sweep.add_argument("--rule", choices=list(RULES), default="sjf")
    sweep.add_argument("--edges", type=int, default=5)
    sweep.add_argument("--beam", type=int, default=10)
    sweep.add_argument("--csv", required=True)
    sweep.add_argument("--plot")
    sweep.set_defaults(func=_cmd_bench_sweep)

    conv = bench_sub.add_parser("convergence")
    conv.add_argument("--log", required=True)
    conv.add_argument("--window", type=int, default=10)
    conv.add_argument("--csv", required=True)
    conv.add_argument("--plot")
    conv.set_defaults(func=_cmd_bench_convergence)

    milp = sub.add_parser("milp", help="Export the scheduling MILP")
    milp.add_argument("--dag", required=True)
    milp.add_argument("--relax", action="store_true")
    milp.add_argument("--out", required=True)
    milp.add_argument("--solve", choices=["scipy", "cbc"])
    milp.add_argument("--solution", help="Recorded 'name value' solution to order by")
    milp.set_defaults(func=_cmd_milp)

    serve = sub.add_parser("serve", help="Run the HTTP service")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, KeyError, OSError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
