"""Reading and writing the PDDL subset, trajectories and datasets.

Serialization is canonical: lowercase keywords, two-space indentation and
lexicographic ordering of predicates, actions, objects and literals, so equal
inputs always give identical bytes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .logic import (
    ANY_TYPE,
    ActionSchema,
    Atom,
    Domain,
    GroundAction,
    Literal,
    ObjectRef,
    PredicateSchema,
    Problem,
    ProblemSet,
    Trajectory,
)

SUPPORTED_REQUIREMENTS = (":strips", ":typing", ":negative-preconditions")


@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int
    line: int
    column: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError("span start after end")


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan, expected: Sequence[str] = ()):
        self.message = message
        self.span = span
        self.expected = list(expected)
        where = f"line {span.line}, column {span.column}"
        extra = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at {where}{extra}")


class MixedModes(ParseError):
    pass


class MissingAction(ValueError):
    """A demonstration must contain at least one action."""


# ---------------------------------------------------------------------------
# S-expression reader
# ---------------------------------------------------------------------------

@dataclass
class Token:
    text: str
    span: SourceSpan


@dataclass
class SList:
    items: list = field(default_factory=list)
    span: SourceSpan | None = None

    def __iter__(self) -> Iterator:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]


_TOKEN_RE = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")


def _span_at(text: str, start: int, end: int) -> SourceSpan:
    line = text.count("\n", 0, start) + 1
    col = start - (text.rfind("\n", 0, start) + 1) + 1
    return SourceSpan(start, end, line, col)


def read_sexpr(text: str) -> SList:
    stack: list[tuple[SList, int]] = []
    top: SList | None = None
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:  # pragma: no cover - the regex matches every character class
            raise ParseError("unreadable input", _span_at(text, pos, pos + 1))
        tok = m.group(0)
        start, pos = m.start(), m.end()
        if tok.isspace() or tok.startswith(";"):
            continue
        if tok == "(":
            if top is not None and not stack:
                raise ParseError("trailing content after top-level form",
                                 _span_at(text, start, pos), ["end of input"])
            stack.append((SList(), start))
        elif tok == ")":
            if not stack:
                raise ParseError("unbalanced ')'", _span_at(text, start, pos), ["'('"])
            lst, open_at = stack.pop()
            lst.span = _span_at(text, open_at, pos)
            if stack:
                stack[-1][0].items.append(lst)
            else:
                top = lst
        else:
            if not stack:
                raise ParseError(f"unexpected token {tok!r} outside a form",
                                 _span_at(text, start, pos), ["'('"])
            stack[-1][0].items.append(Token(tok.lower(), _span_at(text, start, pos)))
    if stack:
        _, open_at = stack[-1]
        raise ParseError("unclosed '('", _span_at(text, open_at, len(text)), ["')'"])
    if top is None:
        raise ParseError("empty input", _span_at(text, 0, len(text)), ["'('"])
    return top


def _span(node) -> SourceSpan:
    return node.span


def _expect_list(node, what: str) -> SList:
    if not isinstance(node, SList):
        raise ParseError(f"expected a list for {what}", _span(node), ["'('"])
    return node


def _expect_token(node, what: str, value: str | None = None) -> str:
    if not isinstance(node, Token):
        raise ParseError(f"expected {what}", _span(node), [value or what])
    if value is not None and node.text != value:
        raise ParseError(f"expected {value!r}, found {node.text!r}", node.span, [value])
    return node.text


def _typed_list(items: Sequence, what: str, variables: bool) -> list[tuple[str, str, SourceSpan]]:
    """Parse ``a b - t c`` into (name, type) pairs; untyped names get ``object``."""
    out: list[tuple[str, str, SourceSpan]] = []
    pending: list[tuple[str, SourceSpan]] = []
    i = 0
    while i < len(items):
        name = _expect_token(items[i], what)
        if name == "-":
            if i + 1 >= len(items) or not pending:
                raise ParseError("dangling '-' in typed list", items[i].span, ["type name"])
            type_tag = _expect_token(items[i + 1], "type name")
            if type_tag.startswith("?") or type_tag == "either":
                raise ParseError(f"unsupported type {type_tag!r}", items[i + 1].span,
                                 ["type name"])
            out.extend((n, type_tag, s) for n, s in pending)
            pending = []
            i += 2
            continue
        if variables != name.startswith("?"):
            raise ParseError(f"bad {what} {name!r}", items[i].span,
                             ["variable" if variables else "name"])
        pending.append((name, items[i].span))
        i += 1
    out.extend((n, ANY_TYPE, s) for n, s in pending)
    return out


def _literal(node, allowed: set[str] | None, what: str) -> Literal:
    lst = _expect_list(node, what)
    if not lst.items:
        raise ParseError(f"empty {what}", lst.span, ["predicate"])
    head = _expect_token(lst[0], "predicate")
    if head == "not":
        if len(lst) != 2:
            raise ParseError("'not' takes exactly one argument", lst.span, ["atom"])
        inner = _literal(lst[1], allowed, what)
        if not inner.positive:
            raise ParseError("double negation", lst.span, ["atom"])
        return inner.negate()
    if head in ("and", "or", "forall", "exists", "when", "imply"):
        raise ParseError(f"unsupported connective {head!r}", lst[0].span, ["atom"])
    args = []
    for item in lst.items[1:]:
        arg = _expect_token(item, "argument")
        if allowed is not None and arg not in allowed:
            raise ParseError(f"unknown {'variable' if arg.startswith('?') else 'object'} "
                             f"{arg!r}", item.span, sorted(allowed))
        args.append(arg)
    return Literal(head, tuple(args), True)


def _conjunction(node, allowed: set[str] | None, what: str) -> list[tuple[Literal, SourceSpan]]:
    lst = _expect_list(node, what)
    if lst.items and isinstance(lst[0], Token) and lst[0].text == "and":
        return [(_literal(item, allowed, what), _span(item)) for item in lst.items[1:]]
    return [(_literal(lst, allowed, what), lst.span)]


def _check_atom(lit: Literal, span: SourceSpan, preds: dict[str, PredicateSchema]) -> None:
    schema = preds.get(lit.predicate)
    if schema is None:
        raise ParseError(f"unknown predicate {lit.predicate!r}", span, sorted(preds))
    if schema.arity != len(lit.args):
        raise ParseError(f"{lit.predicate} expects {schema.arity} arguments, got "
                         f"{len(lit.args)}", span)


def _sections(root: SList, kind: str) -> tuple[str, dict[str, list[SList]]]:
    _expect_token(root[0] if root.items else root, "'define'", "define")
    if len(root) < 2:
        raise ParseError(f"missing ({kind} ...) header", root.span, [f"({kind} name)"])
    header = _expect_list(root[1], f"{kind} header")
    if len(header) != 2:
        raise ParseError(f"malformed {kind} header", header.span, [f"({kind} name)"])
    _expect_token(header[0], kind, kind)
    name = _expect_token(header[1], f"{kind} name")
    sections: dict[str, list[SList]] = {}
    for item in root.items[2:]:
        lst = _expect_list(item, "section")
        if not lst.items:
            raise ParseError("empty section", lst.span, ["section keyword"])
        key = _expect_token(lst[0], "section keyword")
        sections.setdefault(key, []).append(lst)
    return name, sections


def _single(sections: dict[str, list[SList]], key: str, root: SList, required: bool = True):
    found = sections.get(key, [])
    if len(found) > 1:
        raise ParseError(f"duplicate {key} section", found[1].span)
    if not found:
        if required:
            raise ParseError(f"missing {key} section", root.span, [key])
        return None
    return found[0]


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------

def parse_domain(text: str) -> Domain:
    root = read_sexpr(text)
    name, sections = _sections(root, "domain")
    allowed = {":requirements", ":types", ":predicates", ":action"}
    for key, lists in sections.items():
        if key not in allowed:
            raise ParseError(f"unsupported section {key}", lists[0].span, sorted(allowed))
    req = _single(sections, ":requirements", root, required=False)
    if req is not None:
        for item in req.items[1:]:
            flag = _expect_token(item, "requirement")
            if flag not in SUPPORTED_REQUIREMENTS:
                raise ParseError(f"unsupported requirement {flag}", item.span,
                                 list(SUPPORTED_REQUIREMENTS))
    types = {ANY_TYPE}
    tsec = _single(sections, ":types", root, required=False)
    if tsec is not None:
        for tname, parent, span in _typed_list(tsec.items[1:], "type", variables=False):
            if parent != ANY_TYPE:
                raise ParseError("type hierarchies are not supported", span, ["type name"])
            types.add(tname)

    preds: dict[str, PredicateSchema] = {}
    psec = _single(sections, ":predicates", root, required=False)
    for item in (psec.items[1:] if psec is not None else []):
        lst = _expect_list(item, "predicate declaration")
        if not lst.items:
            raise ParseError("empty predicate declaration", lst.span, ["predicate name"])
        pname = _expect_token(lst[0], "predicate name")
        params = _typed_list(lst.items[1:], "parameter", variables=True)
        if not params:
            raise ParseError(f"predicate {pname} must have arity >= 1", lst.span,
                             ["parameter"])
        for _, t, span in params:
            if t not in types:
                raise ParseError(f"undeclared type {t!r}", span, sorted(types))
        if pname in preds:
            raise ParseError(f"duplicate predicate {pname}", lst.span)
        preds[pname] = PredicateSchema(pname, tuple(t for _, t, _ in params))

    actions: dict[str, ActionSchema] = {}
    for lst in sections.get(":action", []):
        act = _parse_action(lst, preds, types)
        if act.name in actions:
            raise ParseError(f"duplicate action {act.name}", lst.span)
        actions[act.name] = act
    return Domain(name, tuple(preds.values()), tuple(actions.values()))


def _parse_action(lst: SList, preds: dict[str, PredicateSchema], types: set[str]) -> ActionSchema:
    if len(lst) < 2:
        raise ParseError("action without a name", lst.span, ["action name"])
    aname = _expect_token(lst[1], "action name")
    fields: dict[str, object] = {}
    i = 2
    while i < len(lst):
        key = _expect_token(lst[i], "action keyword")
        if key not in (":parameters", ":precondition", ":effect"):
            raise ParseError(f"unknown action keyword {key}", lst[i].span,
                             [":parameters", ":precondition", ":effect"])
        if i + 1 >= len(lst):
            raise ParseError(f"{key} without a value", lst[i].span, ["'('"])
        if key in fields:
            raise ParseError(f"duplicate {key}", lst[i].span)
        fields[key] = lst[i + 1]
        i += 2
    pnode = fields.get(":parameters")
    params = _typed_list(_expect_list(pnode, "parameters").items, "parameter",
                         variables=True) if pnode is not None else []
    for _, t, span in params:
        if t not in types:
            raise ParseError(f"undeclared type {t!r}", span, sorted(types))
    variables = {v for v, _, _ in params}
    if len(variables) != len(params):
        raise ParseError(f"duplicate parameter in {aname}", pnode.span)

    pre: list[Literal] = []
    if ":precondition" in fields:
        for lit, span in _conjunction(fields[":precondition"], variables, "precondition"):
            _check_atom(lit, span, preds)
            pre.append(lit)
    add: list[Literal] = []
    delete: list[Literal] = []
    if ":effect" in fields:
        for lit, span in _conjunction(fields[":effect"], variables, "effect"):
            _check_atom(lit, span, preds)
            (add if lit.positive else delete).append(Literal(lit.predicate, lit.args))
    try:
        return ActionSchema(aname, tuple((v, t) for v, t, _ in params),
                            frozenset(pre), frozenset(add), frozenset(delete))
    except ValueError as exc:
        raise ParseError(str(exc), lst.span) from None


def requirements(domain: Domain) -> list[str]:
    reqs = [":strips"]
    # every parameter is written with an explicit type, object included
    if domain.predicates or any(a.params for a in domain.actions):
        reqs.append(":typing")
    if any(not l.positive for a in domain.actions for l in a.pre):
        reqs.append(":negative-preconditions")
    return reqs


def _fmt_params(params: Iterable[tuple[str, str]]) -> str:
    return " ".join(f"{v} - {t}" for v, t in params)


def _fmt_conj(lits: Iterable[Literal]) -> str:
    parts = sorted(str(l) for l in lits)
    return "(and" + "".join(" " + p for p in parts) + ")"


def serialize_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})",
             f"  (:requirements {' '.join(requirements(domain))})"]
    if domain.types:
        lines.append(f"  (:types {' '.join(domain.types)})")
    if domain.predicates:
        lines.append("  (:predicates")
        for p in domain.predicates:
            params = _fmt_params((f"?x{i + 1}", t) for i, t in enumerate(p.param_types))
            lines.append(f"    ({p.name} {params})")
        lines[-1] += ")"
    for a in domain.actions:
        effects = list(a.add) + [l.negate() for l in a.delete]
        lines.append(f"  (:action {a.name}")
        lines.append(f"    :parameters ({_fmt_params(a.params)})")
        lines.append(f"    :precondition {_fmt_conj(a.pre)}")
        lines.append(f"    :effect {_fmt_conj(effects)})")
    lines.append(")")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------

def parse_problem(text: str) -> Problem:
    root = read_sexpr(text)
    name, sections = _sections(root, "problem")
    allowed = {":domain", ":objects", ":init", ":goal"}
    for key, lists in sections.items():
        if key not in allowed:
            raise ParseError(f"unsupported section {key}", lists[0].span, sorted(allowed))
    dsec = _single(sections, ":domain", root)
    if len(dsec) != 2:
        raise ParseError("malformed :domain section", dsec.span, ["domain name"])
    domain_name = _expect_token(dsec[1], "domain name")
    osec = _single(sections, ":objects", root, required=False)
    objects = []
    seen: set[str] = set()
    for oname, otype, span in (_typed_list(osec.items[1:], "object", variables=False)
                               if osec is not None else []):
        if oname in seen:
            raise ParseError(f"duplicate object {oname}", span)
        seen.add(oname)
        objects.append(ObjectRef(oname, otype))
    isec = _single(sections, ":init", root)
    init = set()
    for item in isec.items[1:]:
        lit = _literal(item, seen, "init atom")
        init.add(lit.atom)
    gsec = _single(sections, ":goal", root)
    if len(gsec) != 2:
        raise ParseError("malformed :goal section", gsec.span, ["(and ...)"])
    goal_node = _expect_list(gsec[1], "goal")
    if goal_node.items:
        goal = {lit for lit, _ in _conjunction(goal_node, seen, "goal")}
    else:
        goal = set()
    return Problem(name, domain_name, tuple(objects), frozenset(init), frozenset(goal))


def check_problem(problem: Problem, domain: Domain) -> None:
    """Type-check a parsed problem against a domain's predicate schemas."""
    types = problem.object_types
    for item in list(problem.init) + [l.atom for l in problem.goal]:
        if item.predicate not in domain.predicate_names:
            raise ValueError(f"unknown predicate {item.predicate}")
        schema = domain.predicate(item.predicate)
        if schema.arity != len(item.args):
            raise ValueError(f"{item.predicate} expects {schema.arity} arguments")
        for t, arg in zip(schema.param_types, item.args):
            if t != ANY_TYPE and types[arg] != t:
                raise ValueError(f"{arg} is not of type {t} in {item}")


def serialize_problem(problem: Problem) -> str:
    by_type: dict[str, list[str]] = {}
    for o in problem.objects:
        by_type.setdefault(o.type_tag, []).append(o.name)
    obj_parts = [" ".join(sorted(names)) + f" - {t}" for t, names in sorted(by_type.items())]
    lines = [f"(define (problem {problem.name})",
             f"  (:domain {problem.domain_name})",
             "  (:objects" + "".join(" " + p for p in obj_parts) + ")"]
    init = sorted(str(a) for a in problem.init)
    lines.append("  (:init" + "".join("\n    " + a for a in init) + ")")
    lines.append(f"  (:goal {_fmt_conj(problem.goal)})")
    lines.append(")")
    return "\n".join(lines) + "\n"


def serialize_plan(steps: Iterable[GroundAction]) -> str:
    return "".join(str(s) + "\n" for s in steps)


def parse_plan(text: str) -> list[GroundAction]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if not (line.startswith("(") and line.endswith(")")):
            offset = sum(len(l) + 1 for l in text.splitlines()[:lineno - 1])
            raise ParseError("plan steps must be parenthesised",
                             SourceSpan(offset, offset + len(raw), lineno, 1), ["'('"])
        parts = line[1:-1].split()
        out.append(GroundAction(parts[0].lower(), tuple(p.lower() for p in parts[1:])))
    return out


# ---------------------------------------------------------------------------
# Trajectory files (.traj.jsonl)
# ---------------------------------------------------------------------------

def _line_span(text: str, lineno: int) -> SourceSpan:
    lines = text.splitlines(keepends=True)
    start = sum(len(l) for l in lines[:lineno - 1])
    return SourceSpan(start, start + len(lines[lineno - 1].rstrip("\n")), lineno, 1)


def _state_from_json(items, text: str, lineno: int) -> frozenset[Atom]:
    try:
        return frozenset(Atom(str(a[0]), tuple(str(x) for x in a[1:])) for a in items)
    except (TypeError, IndexError):
        raise ParseError("state atoms must be [predicate, arg, ...] lists",
                         _line_span(text, lineno), ["atom list"]) from None


def _is_continuous(rec: dict) -> bool:
    return "poses" in rec or "action_mark" in rec or "t" in rec


def read_trajectory(text: str, classifiers=None) -> Trajectory:
    """Read a logical or continuous trajectory file.

    Continuous traces are grounded into logical states with ``classifiers``
    (the default tabletop set when omitted).
    """
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", _line_span(text, lineno),
                             ["JSON object"]) from None
        if not isinstance(rec, dict):
            raise ParseError("record must be a JSON object", _line_span(text, lineno))
        records.append((lineno, rec))
    if not records:
        raise ParseError("empty trajectory", SourceSpan(0, len(text), 1, 1),
                         ["state record"])
    objects: tuple[ObjectRef, ...] = ()
    if "objects" in records[0][1]:
        lineno, rec = records.pop(0)
        try:
            objects = tuple(ObjectRef(n, t) for n, t in sorted(rec["objects"].items()))
        except (AttributeError, ValueError):
            raise ParseError("objects record must map names to types",
                             _line_span(text, lineno)) from None
    if not records:
        raise MissingAction("trajectory contains no states or actions")
    modes = {_is_continuous(r) for _, r in records}
    if len(modes) > 1:
        first = next(l for l, r in records if _is_continuous(r) != _is_continuous(records[0][1]))
        raise MixedModes("logical and continuous records are interleaved",
                         _line_span(text, first), ["consistent record kinds"])
    if modes == {True}:
        return _read_continuous(records, objects, text, classifiers)

    steps = []
    pending_state: frozenset[Atom] | None = None
    for lineno, rec in records:
        if set(rec) == {"state"}:
            if pending_state is not None:
                raise ParseError("two consecutive state records", _line_span(text, lineno),
                                 ["action record"])
            pending_state = _state_from_json(rec["state"], text, lineno)
        elif set(rec) == {"action"}:
            if pending_state is None:
                raise ParseError("action without a preceding state",
                                 _line_span(text, lineno), ["state record"])
            act = rec["action"]
            try:
                ga = GroundAction(str(act["name"]), tuple(str(a) for a in act.get("args", [])))
            except (TypeError, KeyError, AttributeError):
                raise ParseError("action record needs name and args",
                                 _line_span(text, lineno), ["{name, args}"]) from None
            steps.append((pending_state, ga))
            pending_state = None
        else:
            raise ParseError(f"unknown record keys {sorted(rec)}", _line_span(text, lineno),
                             ["state", "action"])
    if pending_state is None:
        raise ParseError("trajectory must end with a state record",
                         _line_span(text, records[-1][0]), ["state record"])
    if not steps:
        raise MissingAction("a demonstration must contain at least one action")
    return Trajectory(tuple(steps), pending_state, objects)


def _read_continuous(records, objects, text, classifiers) -> Trajectory:
    from .induction import ActionMark, ContinuousFrame, default_classifiers, ground_trace

    frames = []
    marks = []
    for lineno, rec in records:
        if "action_mark" in rec:
            m = rec["action_mark"]
            try:
                marks.append(ActionMark(
                    str(m["name"]), tuple(str(a) for a in m.get("args", [])),
                    str(m["phase"]), float(m["t"]) if "t" in m else None,
                    position=len(frames)))
            except (KeyError, TypeError, ValueError):
                raise ParseError("action_mark needs name, args and phase",
                                 _line_span(text, lineno), ["{name, args, phase}"]) from None
        else:
            try:
                poses = {str(k): tuple(float(x) for x in v) for k, v in rec["poses"].items()}
                frames.append(ContinuousFrame(float(rec["t"]), poses))
            except (KeyError, TypeError, ValueError, AttributeError) as exc:
                raise ParseError(f"bad frame record: {exc}", _line_span(text, lineno),
                                 ["{t, poses}"]) from None
    if not objects:
        names = sorted({n for f in frames for n in f.poses})
        objects = tuple(ObjectRef(n, "robot" if n in ("gripper", "robot", "r") else "block")
                        for n in names)
    return ground_trace(frames, marks, classifiers or default_classifiers(), objects)


def write_trajectory(traj: Trajectory) -> str:
    lines = []
    if traj.objects:
        lines.append(json.dumps({"objects": {o.name: o.type_tag for o in traj.objects}},
                                sort_keys=True))

    def state_rec(state):
        return json.dumps({"state": [[a.predicate, *a.args] for a in sorted(state)]})

    for state, action in traj.steps:
        lines.append(state_rec(state))
        lines.append(json.dumps({"action": {"name": action.name, "args": list(action.args)}},
                                sort_keys=True))
    lines.append(state_rec(traj.final_state))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Datasets (.dataset.jsonl) and problem sets
# ---------------------------------------------------------------------------

def write_dataset(examples) -> str:
    lines = []
    for ex in examples:
        lines.append(json.dumps({
            "problem": serialize_problem(ex.problem),
            "task": ex.task,
            "labels": {"predicates": dict(sorted(ex.predicate_labels.items())),
                       "actions": dict(sorted(ex.action_labels.items()))},
        }, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def read_dataset(text: str):
    from .taskgen import LabeledExample

    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            labels = rec["labels"]
            out.append(LabeledExample(
                parse_problem(rec["problem"]), str(rec["task"]),
                {k: int(v) for k, v in labels["predicates"].items()},
                {k: int(v) for k, v in labels["actions"].items()}))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad dataset record: {exc}", _line_span(text, lineno),
                             ["{problem, task, labels}"]) from None
    return out


def write_problem_set(problems: Iterable[Problem]) -> str:
    """Problem sets are stored as JSON lines of serialized problem texts."""
    return "".join(json.dumps({"problem": serialize_problem(p)}) + "\n" for p in problems)


def read_problem_set(text: str) -> ProblemSet:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(parse_problem(rec["problem"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad problem-set record: {exc}", _line_span(text, lineno),
                             ["{problem}"]) from None
    return ProblemSet(tuple(out))
