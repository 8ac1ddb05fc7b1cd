"""
Fixpoint evaluation of recursive rules, closure verification and lineage queries.

Starting from A0 = base, each iteration computes A(t+1) = H(A(t) + plan(A(t)))
and stops at the first iteration that adds no edge. The semi-naive engine
feeds only the previous iteration's new edges back into the plan and produces
bit-identical matrices and traces.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .datalog import ContractionPlan, Rule, compile_rule, execute_plan, parse_program, parse_rule
from .exceptions import (AmbiguousNameError, FixpointDivergenceError, ParameterValidationError, ShapeError,
                         UnknownNameError, UnsupportedPatternError)
from .logging import log
from .store import Vocabulary
from .tensor import SparseBoolMatrix, bool_matmul

DEFAULT_MAX_ITERS = 10_000
VIOLATION_CAP = 20

BASE_RULE = "Ancestor(x,y) :- Parent(x,y)."
RECURSIVE_RULE = "Ancestor(x,z) :- Ancestor(x,y), Parent(y,z)."
DEFAULT_PROGRAM = f"{BASE_RULE}\n{RECURSIVE_RULE}"

Observer = Callable[[int, SparseBoolMatrix], None]


@dataclass
class ClosureTrace:
    """Per-iteration edge additions; iteration i is stored at index i - 1"""
    base_edges: int
    new_edges: List[int] = field(default_factory=list)
    engine: str = "naive"

    @property
    def iterations(self) -> int:
        return len(self.new_edges)

    @property
    def converged(self) -> bool:
        return bool(self.new_edges) and self.new_edges[-1] == 0

    @property
    def final_edges(self) -> int:
        return self.base_edges + sum(self.new_edges)

    @property
    def total_new_edges(self) -> int:
        return sum(self.new_edges)

    @property
    def last_productive_iteration(self) -> int:
        productive = [i + 1 for i, added in enumerate(self.new_edges) if added > 0]
        return productive[-1] if productive else 0

    @property
    def zero_progress_iteration(self) -> Optional[int]:
        return self.iterations if self.converged else None

    @property
    def convergence_iteration(self) -> int:
        return self.last_productive_iteration

    def records(self) -> List[Dict[str, int]]:
        return [{"iteration": i + 1, "new_edges": added} for i, added in enumerate(self.new_edges)]

    def to_dict(self) -> Dict[str, object]:
        return {
            "engine": self.engine,
            "base_edges": self.base_edges,
            "iteration_1_new_edges": self.new_edges[0] if self.new_edges else 0,
            "last_productive_iteration": self.last_productive_iteration,
            "zero_progress_iteration": self.zero_progress_iteration,
            "convergence_iteration": self.convergence_iteration,
            "total_new_edges": self.total_new_edges,
            "final_edges": self.final_edges,
            "new_edges": list(self.new_edges),
        }


def _bindings(base: SparseBoolMatrix, plan: ContractionPlan,
              edb: Optional[Mapping[str, SparseBoolMatrix]]) -> Dict[str, SparseBoolMatrix]:
    if base.shape[0] != base.shape[1]:
        raise ShapeError(f"Base relation must be square, got {base.shape}")
    if edb is None:
        return {op.predicate: base for op in plan.operands if op.predicate != plan.head.predicate}
    return {name: matrix for name, matrix in edb.items() if name != plan.head.predicate}


def _check_iters(max_iters: int) -> None:
    if max_iters < 1:
        raise ParameterValidationError(f"max_iters must be at least 1, got {max_iters}")


def _diverged(trace: ClosureTrace, max_iters: int) -> FixpointDivergenceError:
    return FixpointDivergenceError(f"No fixpoint within {max_iters} iterations ({trace.final_edges} edges so far)", trace)


@log("Naive fixpoint started", "Naive fixpoint finished in {elapsed}s")
def fixpoint(base: SparseBoolMatrix,
             recursive_plan: ContractionPlan,
             max_iters: int = DEFAULT_MAX_ITERS,
             edb: Optional[Mapping[str, SparseBoolMatrix]] = None,
             observer: Optional[Observer] = None) -> Tuple[SparseBoolMatrix, ClosureTrace]:
    """
    Iterate the recursive plan from A0 = ``base`` until nothing new is derived.

    Predicates other than the plan's head are bound from ``edb``; when it is
    omitted they all bind to ``base`` (the ``A0 = P`` program shape).
    """
    _check_iters(max_iters)
    relations = _bindings(base, recursive_plan, edb)
    head = recursive_plan.head.predicate
    current = base
    trace = ClosureTrace(base_edges=base.nnz, engine="naive")
    for iteration in range(1, max_iters + 1):
        derived = execute_plan(recursive_plan, {**relations, head: current})
        updated = current.union(derived)
        added = updated.nnz - current.nnz
        trace.new_edges.append(added)
        current = updated
        logger.debug(f"Iteration {iteration}: +{added} edges ({current.nnz} total)")
        if observer is not None:
            observer(iteration, current)
        if added == 0:
            logger.info(f"Fixpoint after {trace.last_productive_iteration} productive iterations, {current.nnz} edges")
            return current, trace
    raise _diverged(trace, max_iters)


@log("Semi-naive fixpoint started", "Semi-naive fixpoint finished in {elapsed}s")
def semi_naive_fixpoint(base: SparseBoolMatrix,
                        recursive_plan: ContractionPlan,
                        max_iters: int = DEFAULT_MAX_ITERS,
                        edb: Optional[Mapping[str, SparseBoolMatrix]] = None,
                        observer: Optional[Observer] = None) -> Tuple[SparseBoolMatrix, ClosureTrace]:
    """
    Same result as :func:`fixpoint`, joining only the last iteration's delta.

    For a head predicate occurring k times in the body, one delta term is
    evaluated per occurrence with the other occurrences bound to the full
    current relation.
    """
    _check_iters(max_iters)
    relations = _bindings(base, recursive_plan, edb)
    head = recursive_plan.head.predicate
    occurrences = recursive_plan.occurrences(head)
    current = base
    delta = base
    empty = SparseBoolMatrix.empty(base.shape)
    trace = ClosureTrace(base_edges=base.nnz, engine="seminaive")
    for iteration in range(1, max_iters + 1):
        if occurrences:
            derived = empty
            for position in occurrences:
                term = execute_plan(recursive_plan, {**relations, head: current}, overrides={position: delta})
                derived = derived.union(term)
        elif iteration == 1:
            derived = execute_plan(recursive_plan, relations)
        else:
            derived = empty
        delta = derived.difference(current)
        current = current.union(delta)
        trace.new_edges.append(delta.nnz)
        logger.debug(f"Iteration {iteration}: +{delta.nnz} edges ({current.nnz} total)")
        if observer is not None:
            observer(iteration, current)
        if delta.nnz == 0:
            logger.info(f"Fixpoint after {trace.last_productive_iteration} productive iterations, {current.nnz} edges")
            return current, trace
    raise _diverged(trace, max_iters)


ENGINES = {"naive": fixpoint, "seminaive": semi_naive_fixpoint}


@dataclass(frozen=True)
class ClosureProgram:
    """A base rule and a linear-or-not recursive rule defining one predicate"""
    base: Rule
    recursive: Rule

    @classmethod
    def from_text(cls, text: str, edb_predicate: str = "Parent") -> "ClosureProgram":
        """
        Parse a closure program. A lone recursive rule gets the default base
        rule copying ``edb_predicate`` into the head predicate.
        """
        rules = parse_program(text)
        recursive = [rule for rule in rules if rule.is_recursive]
        base = [rule for rule in rules if not rule.is_recursive]
        if len(recursive) != 1 or len(base) > 1:
            raise UnsupportedPatternError("A closure program needs exactly one recursive rule and at most one base rule")
        rule = recursive[0]
        if base:
            base_rule = base[0]
        else:
            base_rule = parse_rule(f"{rule.head.predicate}(x,y) :- {edb_predicate}(x,y).")
        if base_rule.head.predicate != rule.head.predicate:
            raise UnsupportedPatternError(
                f"Base rule defines '{base_rule.head.predicate}' but the recursive rule defines '{rule.head.predicate}'")
        return cls(base_rule, rule)

    @property
    def predicate(self) -> str:
        return self.recursive.head.predicate

    def evaluate(self, edb: Mapping[str, SparseBoolMatrix], engine: str = "seminaive",
                 max_iters: int = DEFAULT_MAX_ITERS) -> Tuple[SparseBoolMatrix, ClosureTrace]:
        if engine not in ENGINES:
            raise ParameterValidationError(f"Unknown engine '{engine}' (choose from {', '.join(ENGINES)})")
        base = execute_plan(compile_rule(self.base), edb)
        plan = compile_rule(self.recursive)
        logger.info(f"Evaluating {plan} ({plan.einsum}) with the {engine} engine")
        return ENGINES[engine](base, plan, max_iters, edb=edb)

    def __str__(self) -> str:
        return f"{self.base}\n{self.recursive}"


@dataclass(frozen=True)
class CheckResult:
    name: str
    violations: int
    examples: Tuple[Tuple[int, int], ...] = ()

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> Dict[str, object]:
        return {"passed": self.passed, "violations": self.violations, "examples": [list(e) for e in self.examples]}


@dataclass(frozen=True)
class VerificationReport:
    containment: CheckResult
    closure: CheckResult
    acyclicity: CheckResult

    @property
    def passed(self) -> bool:
        return self.containment.passed and self.closure.passed and self.acyclicity.passed

    def to_dict(self) -> Dict[str, object]:
        return {
            "passed": self.passed,
            "containment": self.containment.to_dict(),
            "closure": self.closure.to_dict(),
            "acyclicity": self.acyclicity.to_dict(),
        }


def _check(name: str, violations: SparseBoolMatrix, cap: int) -> CheckResult:
    examples = tuple(sorted(violations.iter_pairs())[:cap])
    return CheckResult(name, violations.nnz, examples)


def verify(parent: SparseBoolMatrix, ancestor: SparseBoolMatrix, cap: int = VIOLATION_CAP) -> VerificationReport:
    """Containment (P in A), closure (A x P adds nothing) and acyclicity (empty diagonal)"""
    if parent.shape != ancestor.shape:
        raise ShapeError(f"Parent {parent.shape} and ancestor {ancestor.shape} shapes differ")
    containment = _check("containment", parent.difference(ancestor), cap)
    closure = _check("closure", bool_matmul(ancestor, parent).difference(ancestor), cap)
    diagonal = ancestor.diagonal_entries()
    acyclicity = CheckResult("acyclicity", len(diagonal), tuple((int(i), int(i)) for i in diagonal[:cap]))
    report = VerificationReport(containment, closure, acyclicity)
    if report.passed:
        logger.success("Closure verification passed (containment, closure, acyclicity)")
    else:
        logger.warning(f"Closure verification failed: {report.to_dict()}")
    return report


@dataclass(frozen=True)
class Lineage:
    person: str
    ancestors: FrozenSet[str]
    descendants: FrozenSet[str]
    children: Tuple[str, ...] = ()
    chain: Tuple[str, ...] = ()

    def to_dict(self, display: Optional[Mapping[str, str]] = None) -> Dict[str, object]:
        def show(person_id: str) -> str:
            return display.get(person_id, person_id) if display else person_id

        return {
            "person": self.person,
            "name": show(self.person),
            "ancestors": len(self.ancestors),
            "descendants": len(self.descendants),
            "children": [show(p) for p in self.children],
            "ancestor_chain": [show(p) for p in self.chain],
        }


def resolve_person(vocab: Vocabulary, person: str, display_names: Optional[Mapping[str, str]] = None) -> int:
    """Accept a vocabulary name, or a display name that identifies exactly one person"""
    if person in vocab:
        return vocab[person]
    if display_names:
        for exact in (True, False):
            matches = sorted(pid for pid, name in display_names.items()
                             if pid in vocab and (name == person if exact else name.lower() == person.lower()))
            if len(matches) == 1:
                return vocab[matches[0]]
            if len(matches) > 1:
                raise AmbiguousNameError("person", person, matches)
    suggestions = vocab.suggest(person)
    if display_names:
        labels = sorted({name for pid, name in display_names.items() if pid in vocab})
        suggestions += [s for s in Vocabulary("person", labels).suggest(person) if s not in suggestions]
    raise UnknownNameError("person", person, suggestions[:5])


def _ancestor_chain(parent: SparseBoolMatrix, ancestor_counts: np.ndarray, start: int) -> List[int]:
    chain: List[int] = []
    visited = {start}
    node = start
    while True:
        candidates = [int(p) for p in parent.column(node) if int(p) not in visited]
        if not candidates:
            return chain
        node = max(candidates, key=lambda p: (ancestor_counts[p], -p))
        visited.add(node)
        chain.append(node)


def lineage(ancestor: SparseBoolMatrix,
            vocab: Vocabulary,
            person: str,
            parent: Optional[SparseBoolMatrix] = None,
            display_names: Optional[Mapping[str, str]] = None) -> Lineage:
    """
    Ancestors (non-zero rows of the person's column) and descendants (non-zero
    columns of the person's row). With the parent matrix, also the direct
    children and the deepest ancestor chain.
    """
    index = resolve_person(vocab, person, display_names)
    descendants = frozenset(vocab.name(int(j)) for j in ancestor.row(index))
    ancestors = frozenset(vocab.name(int(i)) for i in ancestor.column(index))
    children: Sequence[str] = ()
    chain: Sequence[str] = ()
    if parent is not None:
        children = [vocab.name(int(j)) for j in parent.row(index)]
        counts = np.asarray(ancestor.csr.getnnz(axis=0))
        chain = [vocab.name(i) for i in _ancestor_chain(parent, counts, index)]
    return Lineage(vocab.name(index), ancestors, descendants, tuple(children), tuple(chain))
