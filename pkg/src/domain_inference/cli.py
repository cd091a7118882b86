"""Command-line entry point: taskgen, train, infer, plan, bench, validate.

Exit codes: 0 ok, 1 invalid plan (validate), 2 input error,
3 needs more demonstrations, 4 budget exhausted, 5 unsolvable,
6 non-finite training loss.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import pddl
from . import taskgen as tg
from .estimator import FrequencyEstimator, GATEstimator, NonFiniteLoss, TrainConfig, train_estimator
from .induction import InconsistentInstances, NoInstances
from .logic import Domain, UnknownName, project_problem
from .pipeline import infer, success_rate
from .planner import Outcome, SearchBudget, plan, validate
from .search import Outcome as SearchOutcome
from .search import SearchFailure, blind_hillclimb, contraction_search, rib_search

log = logging.getLogger("domain_inference")

EXIT_OK, EXIT_INVALID, EXIT_INPUT, EXIT_MORE_DEMOS = 0, 1, 2, 3
EXIT_BUDGET, EXIT_UNSOLVABLE, EXIT_NONFINITE = 4, 5, 6


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    max_expansions: int = 200_000
    max_plan_length: int = 200
    universe: str | None = None
    dataset: str | None = None
    checkpoint: str | None = None
    demos: list[str] = field(default_factory=list)
    validation: str | None = None
    out: str = "out"
    estimator: str = "learned"
    negative: bool = False
    jobs: int = 1
    epochs: int = 150
    per_task: int = 30
    per_count: int = 10
    qv_size: int = 5
    tasks: list[str] = field(default_factory=list)
    mode: str = "success"

    @property
    def budget(self) -> SearchBudget:
        return SearchBudget(self.max_expansions, self.max_plan_length)


def load_config(args: argparse.Namespace) -> RunConfig:
    """JSON config file first, then any flag given on the command line."""
    cfg = RunConfig()
    names = {f.name for f in fields(RunConfig)}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(data) - names
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, v)
    for k in names:
        v = getattr(args, k, None)
        if v is not None and v != []:
            setattr(cfg, k, v)
    return cfg


def _require(path: str | None, what: str) -> Path:
    if not path:
        raise InputError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise InputError(f"{what} not found: {path}")
    return p


def _world(cfg: RunConfig) -> Domain:
    if cfg.universe:
        return pddl.parse_domain(_require(cfg.universe, "universe").read_text())
    return tg.universe()


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# taskgen
# ---------------------------------------------------------------------------

def _gen_task(name: str, cfg: RunConfig, out: Path, with_suite: bool) -> list[dict]:
    spec = tg.task_spec(name)
    files = []

    def emit(rel: str, text: str, kind: str, seed: int) -> None:
        _write(out / rel, text)
        files.append({"path": rel, "kind": kind, "task": name, "seed": seed})

    emit(f"{name}/ground_truth.pddl", pddl.serialize_domain(spec.gt_domain()), "domain", cfg.seed)
    emit(f"{name}/demo.traj.jsonl", pddl.write_trajectory(tg.make_demo(spec, cfg.seed)),
         "trajectory", cfg.seed)
    emit(f"{name}/validation.jsonl",
         pddl.write_problem_set(tg.make_validation_set(spec, cfg.qv_size, cfg.seed)),
         "problem_set", cfg.seed)
    if with_suite:
        rows = tg.make_test_suite([spec], cfg.seed, cfg.per_count)[name]
        for n, problems in rows.items():
            emit(f"{name}/suite/n{n}.jsonl", pddl.write_problem_set(problems), "problem_set",
                 cfg.seed)
    return files


def cmd_taskgen(cfg: RunConfig, args) -> int:
    out = Path(cfg.out)
    names = cfg.tasks or [*tg.BASIC_TASKS, *tg.COMPOSED_TASKS]
    for n in names:
        tg.task_spec(n)
    files = [{"path": "universe.pddl", "kind": "domain", "task": None, "seed": cfg.seed}]
    _write(out / "universe.pddl", pddl.serialize_domain(tg.universe()))
    basic = [n for n in names if n in tg.BASIC_TASKS]
    if basic:
        ds = tg.make_dataset(tg.all_specs(basic), cfg.per_task, cfg.seed)
        _write(out / "train.dataset.jsonl", pddl.write_dataset(ds))
        files.append({"path": "train.dataset.jsonl", "kind": "dataset", "task": None,
                      "seed": cfg.seed, "examples": len(ds)})
    with_suite = not args.no_suite
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            parts = list(pool.map(_gen_task, names, [cfg] * len(names), [out] * len(names),
                                  [with_suite] * len(names)))
    else:
        parts = [_gen_task(n, cfg, out, with_suite) for n in names]
    for part in parts:
        files.extend(part)
    suite_total = sum(
        sum(1 for _ in (out / f["path"]).read_text().splitlines())
        for f in files if "/suite/" in f["path"])
    manifest = {"seed": cfg.seed, "tasks": names, "suite_problems": suite_total, "files": files}
    path = _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(cfg: RunConfig, args) -> int:
    examples = pddl.read_dataset(_require(cfg.dataset, "dataset").read_text())
    if not examples:
        raise InputError("dataset is empty")
    world = _world(cfg)
    out = Path(cfg.checkpoint or Path(cfg.out) / "estimator.json")
    est = train_estimator(examples, world.predicates, sorted(world.predicate_names),
                          sorted(world.action_names), TrainConfig(epochs=cfg.epochs), cfg.seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    est.save(out)
    metrics_path = out.with_suffix(".metrics.json")
    _write(metrics_path, json.dumps(est.metrics, indent=2, sort_keys=True) + "\n")
    print(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def _estimator(cfg: RunConfig, world: Domain):
    if cfg.estimator == "frequency":
        examples = pddl.read_dataset(_require(cfg.dataset, "dataset").read_text())
        return FrequencyEstimator(sorted(world.predicate_names), sorted(world.action_names),
                                  examples)
    if cfg.estimator != "learned":
        raise InputError(f"unknown estimator {cfg.estimator!r}")
    return GATEstimator.load(_require(cfg.checkpoint, "checkpoint"))


def cmd_infer(cfg: RunConfig, args) -> int:
    if not cfg.demos:
        raise InputError("at least one --demo is required")
    demos = [pddl.read_trajectory(_require(d, "demo").read_text()) for d in cfg.demos]
    problems = pddl.read_problem_set(_require(cfg.validation, "validation set").read_text())
    if not len(problems):
        raise InputError("validation set is empty")
    world = _world(cfg)
    result = infer(demos, list(problems), _estimator(cfg, world), cfg.budget, world,
                   negative=cfg.negative)
    out = Path(cfg.out)
    _write(out / "domain.pddl", pddl.serialize_domain(result.domain))
    _write(out / "full_domain.pddl", pddl.serialize_domain(result.full_domain))
    report = result.report.to_json()
    report["scores"] = result.scores.to_json()
    _write(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(out / "domain.pddl")
    if result.report.outcome is SearchOutcome.NEEDS_MORE_DEMONSTRATIONS:
        print("additional demonstrations of this task are required", file=sys.stderr)
        return EXIT_MORE_DEMOS
    return EXIT_OK


# ---------------------------------------------------------------------------
# plan / validate
# ---------------------------------------------------------------------------

def cmd_plan(cfg: RunConfig, args) -> int:
    domain = pddl.parse_domain(_require(args.domain, "domain").read_text())
    problem = pddl.parse_problem(_require(args.problem, "problem").read_text())
    problem = project_problem(problem, domain.predicate_names)
    result = plan(domain, problem, cfg.budget)
    stats = {"outcome": result.outcome.value, "expansions": result.expansions,
             "generated": result.generated,
             "length": len(result.plan) if result.plan is not None else None}
    if result.solved:
        path = Path(args.plan_out or Path(cfg.out) / "plan.txt")
        _write(path, pddl.serialize_plan(result.plan.steps))
        stats["plan"] = str(path)
    print(json.dumps(stats, sort_keys=True))
    return {Outcome.SOLVED: EXIT_OK, Outcome.BUDGET_EXHAUSTED: EXIT_BUDGET,
            Outcome.UNSOLVABLE: EXIT_UNSOLVABLE}[result.outcome]


def cmd_validate(cfg: RunConfig, args) -> int:
    domain = pddl.parse_domain(_require(args.domain, "domain").read_text())
    problem = pddl.parse_problem(_require(args.problem, "problem").read_text())
    steps = pddl.parse_plan(_require(args.plan, "plan").read_text())
    ok = validate(domain, problem, steps)
    print("valid" if ok else "invalid")
    return EXIT_OK if ok else EXIT_INVALID


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _bench_task(name: str, cfg: RunConfig, est) -> list[dict]:
    spec = tg.task_spec(name)
    world = tg.universe()
    demo = tg.make_demo(spec, cfg.seed)
    rows = []
    if cfg.mode == "success":
        qv = tg.make_validation_set(spec, cfg.qv_size, cfg.seed)
        res = infer([demo], list(qv), est, cfg.budget, world)
        suite = tg.make_test_suite([spec], cfg.seed, cfg.per_count)[name]
        for n, problems in suite.items():
            rows.append({"task": name, "objects": n, "problems": len(problems),
                         "success_rate": success_rate(res.domain, problems, cfg.budget, world),
                         "outcome": res.report.outcome.value, "seed": cfg.seed})
    elif cfg.mode == "queries":
        qv = list(tg.make_validation_set(spec, cfg.qv_size, cfg.seed))
        res = infer([demo], qv, est, cfg.budget, world)
        full = res.full_domain
        reports = {"optimize": res.report}
        rib = []
        for s in range(5):
            rib.append(_report_or_failure(lambda: rib_search(full, qv, cfg.budget, cfg.seed + s,
                                                             world)))
        reports["contraction"] = _report_or_failure(
            lambda: contraction_search(full, qv, cfg.budget, world))
        reports["blind_hillclimb"] = _report_or_failure(
            lambda: blind_hillclimb(full, qv, cfg.budget, world))
        for method, rep in reports.items():
            rows.append(_query_row(name, method, rep, cfg.seed))
        rows.append({"task": name, "method": "rib", "seed": cfg.seed,
                     "planner_calls": statistics.median(r.ledger["planner_calls"] for r in rib),
                     "applicability_checks":
                         statistics.median(r.ledger["applicability_checks"] for r in rib),
                     "expansions_total": statistics.median(r.ledger["expansions_total"] for r in rib),
                     "outcome": "median_of_5", "omega_size": None})
    elif cfg.mode == "validation-sweep":
        suite = tg.make_test_suite([spec], cfg.seed, cfg.per_count)[name]
        problems = [p for ps in suite.values() for p in ps]
        qv_all = list(tg.make_validation_set(spec, 5, cfg.seed))
        for m in range(1, 6):
            res = infer([demo], qv_all[:m], est, cfg.budget, world)
            rows.append({"task": name, "qv_size": m, "seed": cfg.seed,
                         "success_rate": success_rate(res.domain, problems, cfg.budget, world),
                         "omega_optm": " ".join(res.report.omega_optm.sorted_names())})
    else:
        raise InputError(f"unknown bench mode {cfg.mode!r}")
    return rows


def _report_or_failure(fn):
    try:
        return fn()
    except SearchFailure as exc:
        return exc.report


def _query_row(task: str, method: str, rep, seed: int) -> dict:
    return {"task": task, "method": method, "seed": seed, "outcome": rep.outcome.value,
            "omega_size": len(rep.omega_optm), **rep.ledger}


def cmd_bench(cfg: RunConfig, args) -> int:
    world = _world(cfg)
    est = _estimator(cfg, world)
    names = cfg.tasks or list(tg.BASIC_TASKS)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, failed = [], []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            futures = {n: pool.submit(_bench_task, n, cfg, est) for n in names}
            results = []
            for n, fut in futures.items():
                try:
                    results.append(fut.result())
                except Exception as exc:  # keep the other tasks' rows
                    log.error("bench %s failed: %s", n, exc)
                    failed.append(n)
    else:
        results = []
        for n in names:
            try:
                results.append(_bench_task(n, cfg, est))
            except InputError:
                raise
            except Exception as exc:
                log.error("bench %s failed: %s", n, exc)
                failed.append(n)
    for part in results:
        rows.extend(part)
    stem = out / f"bench_{cfg.mode.replace('-', '_')}"
    if rows:
        keys = list(dict.fromkeys(k for r in rows for k in r))
        with open(stem.with_suffix(".csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(rows)
    _write(stem.with_suffix(".json"),
           json.dumps({"mode": cfg.mode, "seed": cfg.seed, "rows": rows, "failed": failed},
                      indent=2, sort_keys=True) + "\n")
    print(stem.with_suffix(".json"))
    return EXIT_INPUT if failed else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="domain-infer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, budget=False):
        p.add_argument("--config", help="JSON run configuration; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--universe", help="reference domain (default: built-in universe)")
        p.add_argument("--jobs", type=int)
        if budget:
            p.add_argument("--max-expansions", dest="max_expansions", type=int)
            p.add_argument("--max-plan-length", dest="max_plan_length", type=int)

    p = sub.add_parser("taskgen", help="generate datasets, demos, validation sets and suites")
    common(p)
    p.add_argument("--tasks", nargs="+")
    p.add_argument("--per-task", dest="per_task", type=int)
    p.add_argument("--per-count", dest="per_count", type=int)
    p.add_argument("--qv-size", dest="qv_size", type=int)
    p.add_argument("--no-suite", action="store_true")

    p = sub.add_parser("train", help="train the predicate and action estimators")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--checkpoint", help="output checkpoint path")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("infer", help="infer a minimal domain from demonstrations")
    common(p, budget=True)
    p.add_argument("--demo", dest="demos", action="append", default=[])
    p.add_argument("--validation")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset", help="needed by the frequency estimator")
    p.add_argument("--estimator", choices=("learned", "frequency"))
    p.add_argument("--negative", action="store_const", const=True,
                   help="also induce negative preconditions")

    p = sub.add_parser("plan", help="plan for one problem")
    common(p, budget=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--plan-out", dest="plan_out")

    p = sub.add_parser("validate", help="check a plan against a domain and problem")
    common(p)
    p.add_argument("--domain", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--plan", required=True)

    p = sub.add_parser("bench", help="benchmark tables (success, queries, validation-sweep)")
    common(p, budget=True)
    p.add_argument("--mode", choices=("success", "queries", "validation-sweep"))
    p.add_argument("--tasks", nargs="+")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--estimator", choices=("learned", "frequency"))
    p.add_argument("--per-count", dest="per_count", type=int)
    p.add_argument("--qv-size", dest="qv_size", type=int)
    return parser


COMMANDS = {"taskgen": cmd_taskgen, "train": cmd_train, "infer": cmd_infer, "plan": cmd_plan,
            "validate": cmd_validate, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        cfg.budget  # validates the budget fields early
        return COMMANDS[args.command](cfg, args)
    except NonFiniteLoss as exc:
        print(f"error: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NONFINITE
    except (InputError, pddl.ParseError, pddl.MissingAction, InconsistentInstances, NoInstances,
            UnknownName, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
