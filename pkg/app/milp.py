"""Big-M scheduling model, LP-format export, solution ingestion and LP-order extraction.

Families (a)-(j) follow the reformulated minimum-makespan model. Family (k)
adds ``y_ij + y_ji = 1`` and family (t) forbids 3-cycles among unrelated
triples, so ``y`` is a total order on every set of mutually unrelated tasks
and the last of several simultaneous starts sees all the others in its
resource row (i).
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from app.config import CAPACITY
from app.dag import DagGraph, strip_virtual_root
from app.simulator import PriorityRule, Schedule

logger = logging.getLogger(__name__)

Sense = Literal["<=", ">=", "="]
VariableKind = Literal["continuous", "binary"]

FEASIBILITY_TOL = 1e-6


class MilpError(ValueError):
    pass


class SolutionParseError(MilpError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, slots=True)
class Variable:
    name: str
    kind: VariableKind


@dataclass(frozen=True, slots=True)
class Constraint:
    name: str
    family: str
    terms: tuple[tuple[str, float], ...]
    sense: Sense
    rhs: float


@dataclass(slots=True)
class MilpModel:
    variables: dict[str, Variable] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    objective: tuple[tuple[str, float], ...] = (("T", 1.0),)
    big_m: float = 1.0
    resource_dims: int = 1
    capacity: tuple[float, ...] = (CAPACITY,)
    task_ids: tuple[int, ...] = ()
    unrelated_pairs: tuple[tuple[int, int], ...] = ()

    def add_variable(self, name: str, kind: VariableKind = "continuous") -> None:
        self.variables[name] = Variable(name, kind)

    def add(self, name: str, family: str, terms: dict[str, float], sense: Sense, rhs: float) -> None:
        self.constraints.append(
            Constraint(name, family, tuple((k, v) for k, v in terms.items() if v != 0), sense, rhs)
        )

    def family_count(self, family: str) -> int:
        return sum(1 for c in self.constraints if c.family == family)


def start_var(i: int) -> str:
    return f"s_{i}"


def build_milp(g: DagGraph, transitive: bool = True) -> MilpModel:
    """Instantiate the big-M model for a DAG; a virtual root is dropped first.

    ``transitive=False`` leaves out family (t). Its row count grows with the
    cube of the task count; without it the LP is still a lower bound but
    integral solutions may order three simultaneous starts cyclically.
    """
    stripped, original = strip_virtual_root(g)
    ids = original
    runtime = {original[i]: stripped.nodes[i].runtime for i in range(stripped.size)}
    resource = {original[i]: stripped.nodes[i].resource for i in range(stripped.size)}
    index = {old: new for new, old in enumerate(original)}

    big_m = float(sum(runtime.values())) + 1.0
    capacity = CAPACITY
    model = MilpModel(big_m=big_m, task_ids=tuple(ids))
    model.add_variable("T")
    for i in ids:
        model.add_variable(start_var(i))

    for i in ids:
        model.add(f"a_{i}", "a", {start_var(i): 1.0, "T": -1.0}, "<=", -runtime[i])
    for u, v in sorted(stripped.edges):
        i, j = original[u], original[v]
        model.add(f"b_{i}_{j}", "b", {start_var(i): 1.0, start_var(j): -1.0}, "<=", -runtime[i])

    pairs = [
        (i, j)
        for x, i in enumerate(ids)
        for j in ids[x + 1 :]
        if not stripped.reach[index[i], index[j]] and not stripped.reach[index[j], index[i]]
    ]
    model.unrelated_pairs = tuple(pairs)
    partners: dict[int, list[int]] = {i: [] for i in ids}
    for i, j in pairs:
        for p, q in ((i, j), (j, i)):
            y, z, u = f"y_{p}_{q}", f"z_{p}_{q}", f"u_{p}_{q}"
            for name in (y, z, u):
                model.add_variable(name, "binary")
            sp, sq = start_var(p), start_var(q)
            model.add(f"c_{p}_{q}", "c", {sp: 1.0, sq: -1.0, y: -big_m}, "<=", 0.0)
            model.add(f"d_{p}_{q}", "d", {sq: 1.0, sp: -1.0, y: big_m}, "<=", big_m)
            model.add(f"e_{p}_{q}", "e", {sq: 1.0, sp: -1.0, z: -big_m}, "<=", -runtime[q])
            model.add(f"f_{p}_{q}", "f", {sp: 1.0, sq: -1.0, z: big_m}, "<=", runtime[q] + big_m)
            model.add(f"g_{p}_{q}", "g", {y: 1.0, z: 1.0, u: -big_m}, "<=", 1.0)
            model.add(f"h_{p}_{q}", "h", {y: -1.0, z: -1.0, u: big_m}, "<=", big_m - 2.0)
            partners[p].append(q)
        model.add(f"k_{i}_{j}", "k", {f"y_{i}_{j}": 1.0, f"y_{j}_{i}": 1.0}, "=", 1.0)

    if transitive:
        position = {i: x for x, i in enumerate(ids)}
        unrelated = {i: set(partners[i]) for i in ids}
        for i, j in pairs:
            for m in sorted(unrelated[i] & unrelated[j], key=position.__getitem__):
                if position[m] <= position[j]:
                    continue
                # One row per 3-cycle orientation: i>j>m>i and i>m>j>i.
                model.add(
                    f"t_{i}_{j}_{m}", "t", {f"y_{i}_{j}": 1.0, f"y_{j}_{m}": 1.0, f"y_{i}_{m}": -1.0}, "<=", 1.0
                )
                model.add(
                    f"t_{i}_{m}_{j}", "t", {f"y_{i}_{m}": 1.0, f"y_{m}_{j}": 1.0, f"y_{i}_{j}": -1.0}, "<=", 1.0
                )

    for i in ids:
        terms = {f"u_{i}_{j}": resource[j] for j in sorted(partners[i]) if resource[j] != 0}
        if terms:
            model.add(f"i_{i}", "i", terms, "<=", capacity - resource[i])

    logger.info(
        "Built MILP: %d variables, %d constraints, %d unrelated pairs, B=%g",
        len(model.variables),
        len(model.constraints),
        len(pairs),
        big_m,
    )
    return model


def format_number(value: float) -> str:
    text = f"{value:.12g}"
    return "0" if text == "-0" else text


def format_terms(terms: tuple[tuple[str, float], ...]) -> str:
    parts: list[str] = []
    for position, (name, coef) in enumerate(terms):
        magnitude = abs(coef)
        body = name if magnitude == 1 else f"{format_number(magnitude)} {name}"
        if position == 0:
            parts.append(body if coef >= 0 else f"- {body}")
        else:
            parts.append(f"{'-' if coef < 0 else '+'} {body}")
    return " ".join(parts)


def write_lp(model: MilpModel, relax: bool) -> str:
    binaries = [v.name for v in model.variables.values() if v.kind == "binary"]
    lines = [
        f"\\ DAG makespan model: {len(model.task_ids)} tasks, "
        f"{len(model.unrelated_pairs)} unrelated pairs, B = {format_number(model.big_m)}",
        "Minimize",
        f" obj: {format_terms(model.objective)}",
        "Subject To",
    ]
    for c in model.constraints:
        lines.append(f" {c.name}: {format_terms(c.terms)} {c.sense} {format_number(c.rhs)}")
    if relax and binaries:
        lines.append("Bounds")
        lines.extend(f" 0 <= {name} <= 1" for name in binaries)
    if not relax and binaries:
        lines.append("Binaries")
        lines.extend(f" {name}" for name in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


def read_solution(text: str, model: MilpModel | None = None) -> dict[str, float]:
    """Parse ``name value`` lines; blank lines and ``#`` comments are skipped."""
    values: dict[str, float] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolutionParseError(f"expected 'name value', got {raw!r}", number)
        name, value_text = parts
        try:
            value = float(value_text)
        except ValueError:
            raise SolutionParseError(f"value {value_text!r} is not a number", number) from None
        if not np.isfinite(value):
            raise SolutionParseError(f"value for {name} is not finite", number)
        if model is not None and name not in model.variables:
            raise SolutionParseError(f"unknown variable {name!r}", number)
        values[name] = value
    return values


def write_solution(values: Mapping[str, float]) -> str:
    return "".join(f"{name} {format_number(value)}\n" for name, value in values.items())


def solve_relaxation(model: MilpModel) -> dict[str, float]:
    """Solve the LP relaxation (binaries in [0, 1]) with SciPy's HiGHS backend."""
    names = list(model.variables)
    column = {name: k for k, name in enumerate(names)}
    cost = np.zeros(len(names))
    for name, coef in model.objective:
        cost[column[name]] = coef

    def assemble(rows: list[Constraint], flip: bool):
        data, row_idx, col_idx, rhs = [], [], [], []
        for r, c in enumerate(rows):
            sign = -1.0 if flip and c.sense == ">=" else 1.0
            for name, coef in c.terms:
                data.append(sign * coef)
                row_idx.append(r)
                col_idx.append(column[name])
            rhs.append(sign * c.rhs)
        matrix = sparse.csr_matrix((data, (row_idx, col_idx)), shape=(len(rows), len(names)))
        return matrix, np.array(rhs)

    inequalities = [c for c in model.constraints if c.sense != "="]
    equalities = [c for c in model.constraints if c.sense == "="]
    a_ub, b_ub = assemble(inequalities, flip=True)
    a_eq, b_eq = assemble(equalities, flip=False)
    bounds = [(0.0, 1.0) if model.variables[n].kind == "binary" else (0.0, None) for n in names]
    result = linprog(
        cost,
        A_ub=a_ub if inequalities else None,
        b_ub=b_ub if inequalities else None,
        A_eq=a_eq if equalities else None,
        b_eq=b_eq if equalities else None,
        bounds=bounds,
        method="highs",
    )
    if result.status != 0:
        raise MilpError(f"LP relaxation failed: {result.message}")
    return {name: float(result.x[column[name]]) for name in names}


def order_from_solution(solution: Mapping[str, float], g: DagGraph) -> PriorityRule:
    """FIXED_ORDER sorted by relaxed start time, ties by node id; the virtual root leads."""
    keyed = []
    for i in g.task_ids():
        name = start_var(i)
        if name not in solution:
            raise MilpError(f"Solution is missing {name}")
        keyed.append((solution[name], i))
    order = [i for _, i in sorted(keyed)]
    if g.virtual_root is not None:
        order.insert(0, g.virtual_root)
    return PriorityRule.fixed(order)


def check_assignment(model: MilpModel, values: Mapping[str, float], tol: float = FEASIBILITY_TOL) -> list[str]:
    """Names of rows (and integrality of binaries) violated by ``values``."""
    violated = []
    for c in model.constraints:
        lhs = sum(coef * values.get(name, 0.0) for name, coef in c.terms)
        if c.sense == "<=" and lhs > c.rhs + tol:
            violated.append(c.name)
        elif c.sense == ">=" and lhs < c.rhs - tol:
            violated.append(c.name)
        elif c.sense == "=" and abs(lhs - c.rhs) > tol:
            violated.append(c.name)
    for var in model.variables.values():
        value = values.get(var.name, 0.0)
        if var.kind == "binary" and min(abs(value), abs(value - 1.0)) > tol:
            violated.append(f"integrality:{var.name}")
        if value < -tol:
            violated.append(f"bound:{var.name}")
    return violated


def assignment_from_schedule(model: MilpModel, g: DagGraph, schedule: Schedule) -> dict[str, float]:
    """Integral assignment induced by a schedule; equal starts are ordered by id."""
    start = schedule.start_time
    runtime = {node.id: node.runtime for node in g.nodes}
    values: dict[str, float] = {"T": max((start[i] + runtime[i] for i in model.task_ids), default=0.0)}
    for i in model.task_ids:
        values[start_var(i)] = start[i]
    for i, j in model.unrelated_pairs:
        for p, q in ((i, j), (j, i)):
            y = 1.0 if (start[p], p) > (start[q], q) else 0.0
            z = 1.0 if start[p] < start[q] + runtime[q] else 0.0
            values[f"y_{p}_{q}"] = y
            values[f"z_{p}_{q}"] = z
            values[f"u_{p}_{q}"] = 1.0 if y and z else 0.0
    return values
