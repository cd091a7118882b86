"""Acceptance criteria, one test each; the terminal summary lists every verdict."""

import itertools
import json
import math
import random
import time

import pytest

from domain_inference import cli, pddl
from domain_inference import taskgen as tg
from domain_inference.estimator import RelevanceScores, TrainConfig, train_estimator
from domain_inference.induction import (
    InconsistentInstances,
    group_instances,
    induce_domain,
    induce_effects,
    induce_preconditions,
)
from domain_inference.logic import DomainSet, apply, project
from domain_inference.pipeline import infer, success_rate
from domain_inference.planner import plan, validate
from domain_inference.search import (
    SearchFailure,
    blind_hillclimb,
    check_one_minimal,
    contraction_search,
    exhaustive_minimum,
    is_monotone,
    log_score,
    optimize,
    rib_search,
    score_domain_set,
    top_domain_set,
)

from oracles import gradient_error, oracle_induction, random_trajectory_set


def verdict(record, number, failures, detail):
    record(number, not failures, detail if not failures else f"{detail}; {failures[:3]}")
    assert not failures, failures


@pytest.fixture(scope="module")
def basic_inference(estimator, demos, validation_sets, world):
    return {name: infer([demos[name]], validation_sets[name], estimator, world=world)
            for name in tg.BASIC_TASKS}


def test_criterion_01_eq1_exactness(record_criterion):
    rng = random.Random(2024)
    failures = []
    start = time.perf_counter()
    for i in range(100):
        n = rng.randint(1, 12)
        flat = {f"e{k:02d}": rng.random() for k in range(n)}
        cut = rng.randint(0, n)
        keys = sorted(flat)
        s = RelevanceScores({k: flat[k] for k in keys[:cut]}, {k: flat[k] for k in keys[cut:]})
        subsets = [frozenset(c) for r in range(n + 1) for c in itertools.combinations(keys, r)]
        best = max(subsets, key=lambda o: log_score(s, o))
        if top_domain_set(s)[0].names != best:
            failures.append(f"vector {i}: argmax mismatch")
        total = math.fsum(score_domain_set(s, o) for o in subsets)
        if abs(total - 1.0) > 1e-9:
            failures.append(f"vector {i}: sum {total}")
    elapsed = time.perf_counter() - start
    if elapsed >= 5.0:
        failures.append(f"runtime {elapsed:.2f}s")
    verdict(record_criterion, 1, failures, f"100 vectors, {elapsed:.2f}s")


def test_criterion_02_induction_oracle(record_criterion):
    failures, checked, seed = [], 0, 0
    while checked < 50:
        preds, trajs = random_trajectory_set(random.Random(seed))
        seed += 1
        want_pre, want_eff, clashes = oracle_induction(preds, trajs)
        if any(clashes.values()):
            # contradictory evidence: the oracle and induction must both refuse
            groups = group_instances(trajs)
            with pytest.raises(InconsistentInstances):
                induce_effects(groups, induce_preconditions(groups))
            continue
        groups = group_instances(trajs)
        pre = induce_preconditions(groups)
        if pre != want_pre or induce_effects(groups, pre) != want_eff:
            failures.append(f"seed {seed - 1}")
        checked += 1
    verdict(record_criterion, 2, failures, f"50 consistent sets (seeds 0..{seed - 1})")


def test_criterion_03_replay(record_criterion, world, demos):
    failures = []
    trajs = list(demos.values()) + [tg.make_demo(s, 1) for s in tg.all_specs()]
    for traj in trajs:
        dom = induce_domain([traj], world.predicates)
        state = traj.states[0]
        try:
            for i, step in enumerate(traj.actions):
                state = apply(state, step, dom)
                if state != traj.states[i + 1]:
                    raise ValueError(f"diverged at step {i}")
        except Exception as exc:
            failures.append(f"{traj.actions[0].name}: {exc}")
    verdict(record_criterion, 3, failures, f"{len(trajs)} demos")


def test_criterion_04_algorithm_minimality(record_criterion, world):
    failures, monotone, matched = [], 0, 0
    for i in range(30):
        rng = random.Random(i)
        spec = tg.task_spec(rng.choice(tg.BASIC_TASKS))
        full = induce_domain([tg.make_demo(spec, i)], world.predicates)
        gt = spec.ground_truth
        extra = sorted(full.domain_set().names - gt.names)
        room = max(0, 8 - len(gt))
        chosen = frozenset(gt.names) | frozenset(
            rng.sample(extra, min(room, rng.randint(1, max(1, room)))))
        sub = project(full, DomainSet(chosen & full.predicate_names, chosen & full.action_names))
        assert len(sub.domain_set()) <= 8
        qv = list(tg.make_validation_set(spec, rng.randint(1, 3), seed=i))
        scores = RelevanceScores({p: rng.random() for p in sub.predicate_names},
                                 {a: rng.random() for a in sub.action_names})
        best, table = exhaustive_minimum(sub, qv, world=world)
        rep = optimize(sub, scores, qv, world=world)
        if rep.outcome.value != "optimal" or not check_one_minimal(rep.omega_optm, sub, qv,
                                                                   world=world):
            failures.append(f"instance {i} ({spec.name}): not complete and 1-minimal")
        if is_monotone(table):
            monotone += 1
            if len(rep.omega_optm) != best:
                failures.append(f"instance {i}: size {len(rep.omega_optm)} vs minimum {best}")
            else:
                matched += 1
    verdict(record_criterion, 4, failures,
            f"30 instances, {monotone} monotone, {matched} at exhaustive minimum")


def test_criterion_05_end_to_end(record_criterion, basic_inference):
    failures = [f"{name}: {res.report.omega_optm.sorted_names()}"
                for name, res in basic_inference.items()
                if res.report.omega_optm != tg.task_spec(name).ground_truth]
    verdict(record_criterion, 5, failures, "9 basic tasks, 1 demo, |Q_v| = 5")


def per_count_rates(domain, rows, world, counts=None):
    return {n: success_rate(domain, problems, world=world)
            for n, problems in rows.items() if counts is None or n in counts}


@pytest.fixture(scope="module")
def basic_rates(basic_inference, suites, world):
    return {name: per_count_rates(res.domain, suites[name], world)
            for name, res in basic_inference.items()}


def test_criterion_06_success_rates(record_criterion, basic_rates):
    failures = [f"{name} n={n}: {rate:.2f}" for name, rates in basic_rates.items()
                for n, rate in rates.items() if rate < 0.9]
    worst = min(r for rates in basic_rates.values() for r in rates.values())
    verdict(record_criterion, 6, failures, f"worst per-count rate {worst:.2f}")


def test_criterion_07_composed(record_criterion, estimator, demos, validation_sets, suites,
                               tmp_path):
    failures = []
    ckpt = tmp_path / "basic.json"
    estimator.save(ckpt)
    worst = 1.0
    for name in tg.COMPOSED_TASKS:
        d = tmp_path / name
        d.mkdir()
        (d / "demo.traj.jsonl").write_text(pddl.write_trajectory(demos[name]))
        (d / "validation.jsonl").write_text(pddl.write_problem_set(validation_sets[name]))
        code = cli.main(["infer", "--demo", str(d / "demo.traj.jsonl"),
                         "--validation", str(d / "validation.jsonl"),
                         "--checkpoint", str(ckpt), "--out", str(d / "out")])
        report = json.loads((d / "out" / "report.json").read_text())
        if code != 0 or report["outcome"] != "optimal":
            failures.append(f"{name}: exit {code}, outcome {report['outcome']}")
            continue
        dom = pddl.parse_domain((d / "out" / "domain.pddl").read_text())
        rates = per_count_rates(dom, suites[name], tg.universe(), counts=range(3, 8))
        worst = min(worst, *rates.values())
        failures += [f"{name} n={n}: {r:.2f}" for n, r in rates.items() if r < 0.9]
    verdict(record_criterion, 7, failures, f"3 composed tasks, worst rate {worst:.2f}")


def test_criterion_08_query_counts(record_criterion, basic_inference, validation_sets, world):
    wins, lines = 0, []
    for name, res in basic_inference.items():
        qv = validation_sets[name]
        full = res.full_domain

        def calls(fn):
            try:
                return fn().planner_calls
            except SearchFailure as exc:
                return exc.report.planner_calls

        rib = sorted(calls(lambda s=s: rib_search(full, qv, seed=s, world=world))
                     for s in range(5))[2]
        con = calls(lambda: contraction_search(full, qv, world=world))
        blind = calls(lambda: blind_hillclimb(full, qv, world=world))
        ours = res.report.planner_calls
        if ours <= min(rib, con, blind):
            wins += 1
        lines.append(f"{name}:{ours}/{rib}/{con}/{blind}")
    failures = [] if wins >= 7 else [f"only {wins} of 9 tasks"]
    # per task: optimize/rib median/contraction/blind hill-climb
    verdict(record_criterion, 8, failures,
            f"optimize fewest calls on {wins}/9 ({' '.join(lines)})")


def test_criterion_09_validation_sweep(record_criterion, estimator, demos, validation_sets,
                                       suites, world, basic_rates):
    failures = []
    for name in tg.BASIC_TASKS:
        problems = [p for rows in suites[name].values() for p in rows]
        curve = []
        for m in range(1, 6):
            res = infer([demos[name]], validation_sets[name][:m], estimator, world=world)
            curve.append(success_rate(res.domain, problems, world=world))
        if any(b < a for a, b in zip(curve, curve[1:])):
            failures.append(f"{name}: {['%.2f' % c for c in curve]}")
        if min(basic_rates[name].values()) < 0.9:
            failures.append(f"{name}: criterion 6 fails at |Q_v| = 5")
    verdict(record_criterion, 9, failures, "|Q_v| 1..5 on 9 basic tasks")


def test_criterion_10_estimator_numerics(record_criterion, world, dataset):
    failures = []
    errors = [gradient_error(seed) for seed in range(20)]
    if max(errors) >= 1e-4:
        failures.append(f"gradient error {max(errors):.2e}")
    blobs = []
    for _ in range(2):
        est = train_estimator(dataset, world.predicates, tg.PREDICATE_NAMES, tg.ACTION_NAMES,
                              TrainConfig(), seed=3)
        blobs.append(json.dumps(est.to_json(), sort_keys=True).encode())
    if blobs[0] != blobs[1]:
        failures.append("checkpoints differ")
    verdict(record_criterion, 10, failures,
            f"max gradient error {max(errors):.1e} over 20 configs, checkpoints identical")


def test_criterion_11_planner(record_criterion, world, suites):
    failures = []
    for discs in (3, 4, 5):
        spec = tg.task_spec("hanoi")
        p = tg.sample_problem(spec, discs, 0)
        a, b = plan(spec.gt_domain(world), p), plan(spec.gt_domain(world), p)
        if not a.solved:
            failures.append(f"hanoi {discs}: {a.outcome.value}")
        elif not validate(spec.gt_domain(world), p, a.plan):
            failures.append(f"hanoi {discs}: invalid plan")
        if (a.expansions, a.generated) != (b.expansions, b.generated):
            failures.append(f"hanoi {discs}: expansions vary")
    checked = 0
    for name, rows in suites.items():
        dom = tg.task_spec(name).gt_domain(world)
        for problems in rows.values():
            for p in problems[:3]:
                res = plan(dom, p)
                if res.solved:
                    checked += 1
                    if not validate(dom, p, res.plan):
                        failures.append(f"{p.name}: invalid plan")
    verdict(record_criterion, 11, failures, f"hanoi 3-5 solved, {checked} suite plans validated")


def test_criterion_12_round_trip(record_criterion, world, suites, demos, basic_inference):
    failures, count = [], 0
    domains = [world] + [s.gt_domain(world) for s in tg.all_specs()]
    domains += [r.full_domain for r in basic_inference.values()]
    domains += [r.domain for r in basic_inference.values()]
    for d in domains:
        text = pddl.serialize_domain(d)
        back = pddl.parse_domain(text)
        if back != d or pddl.serialize_domain(back) != text:
            failures.append(f"domain {d.name}")
        count += 1
    for rows in suites.values():
        for problems in rows.values():
            for p in problems:
                text = pddl.serialize_problem(p)
                back = pddl.parse_problem(text)
                if back != p or pddl.serialize_problem(back) != text:
                    failures.append(p.name)
                count += 1
    verdict(record_criterion, 12, failures, f"{count} files are byte fixed points")
