"""
A minimal Datalog surface syntax compiled to Boolean matrix contractions.

    Ancestor(x,z) :- Ancestor(x,y), Parent(y,z).

Predicates are capitalized, variables start lowercase, every predicate is
binary and a rule ends with a period. A compiled rule is a chain of pairwise
contractions: each shared body variable becomes a summed index, the head
variables become the output indices, and an atom whose variables run against
the chain is transposed.
"""

import re
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

from .exceptions import (RuleSyntaxError, UnboundVariableError, UnknownPredicateError,
                         UnsupportedArityError, UnsupportedPatternError)
from .tensor import SparseBoolMatrix, bool_matmul_count, heaviside

_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z][A-Za-z0-9_]*)|(?P<implies>:-)|(?P<punct>[(),.]))")


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: Tuple[str, ...]

    def __str__(self) -> str:
        return f"{self.predicate}({','.join(self.args)})"


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: Tuple[Atom, ...]

    @property
    def predicates(self) -> Tuple[str, ...]:
        return tuple(atom.predicate for atom in self.body)

    @property
    def is_recursive(self) -> bool:
        return self.head.predicate in self.predicates

    def __str__(self) -> str:
        return f"{self.head} :- {', '.join(str(atom) for atom in self.body)}."


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    position: int


def _tokenize(text: str) -> Iterator[_Token]:
    position = 0
    while position < len(text):
        if text[position:].strip() == "":
            return
        match = _TOKEN.match(text, position)
        if match is None or match.end() == position:
            offset = position + (len(text[position:]) - len(text[position:].lstrip()))
            raise RuleSyntaxError(f"Unexpected character {text[offset]!r}", text, offset)
        kind = match.lastgroup or ""
        yield _Token(kind, match.group(kind), match.start(kind))
        position = match.end()


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = list(_tokenize(text))
        self.index = 0

    def peek(self) -> Optional[_Token]:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def expect(self, kind: str, text: Optional[str] = None, what: str = "") -> _Token:
        token = self.peek()
        if token is None or token.kind != kind or (text is not None and token.text != text):
            position = token.position if token else len(self.text)
            found = repr(token.text) if token else "end of input"
            raise RuleSyntaxError(f"Expected {what or text or kind}, found {found}", self.text, position)
        self.index += 1
        return token

    def atom(self) -> Atom:
        name = self.expect("ident", what="predicate name")
        if not name.text[0].isupper():
            raise RuleSyntaxError(f"Predicate '{name.text}' must be capitalized", self.text, name.position)
        self.expect("punct", "(")
        args = [self.variable()]
        while self.peek() is not None and self.peek().text == ",":  # type: ignore[union-attr]
            self.index += 1
            args.append(self.variable())
        self.expect("punct", ")")
        if len(args) != 2:
            raise UnsupportedArityError(f"Predicate '{name.text}' has arity {len(args)}; only binary predicates are supported")
        return Atom(name.text, tuple(args))

    def variable(self) -> str:
        token = self.expect("ident", what="variable")
        if not token.text[0].islower():
            raise RuleSyntaxError(f"Variable '{token.text}' must start with a lowercase letter", self.text, token.position)
        return token.text

    def rule(self) -> Rule:
        head = self.atom()
        self.expect("implies", ":-", what="':-'")
        body = [self.atom()]
        while self.peek() is not None and self.peek().text == ",":  # type: ignore[union-attr]
            self.index += 1
            body.append(self.atom())
        self.expect("punct", ".", what="'.' terminating the rule")
        bound = {var for atom in body for var in atom.args}
        for var in head.args:
            if var not in bound:
                raise UnboundVariableError(f"Head variable '{var}' of {head} does not occur in the rule body")
        return Rule(head, tuple(body))

    def at_end(self) -> bool:
        return self.peek() is None


def parse_rule(text: str) -> Rule:
    parser = _Parser(text)
    rule = parser.rule()
    if not parser.at_end():
        token = parser.peek()
        raise RuleSyntaxError("Unexpected text after the rule", text, token.position)  # type: ignore[union-attr]
    return rule


def parse_program(text: str) -> List[Rule]:
    parser = _Parser(text)
    rules = []
    while not parser.at_end():
        rules.append(parser.rule())
    if not rules:
        raise RuleSyntaxError("Empty program", text, 0)
    return rules


@dataclass(frozen=True)
class Operand:
    predicate: str
    transpose: bool = False

    def __str__(self) -> str:
        return f"{self.predicate}{'^T' if self.transpose else ''}"


@dataclass(frozen=True)
class ContractionStep:
    right: Operand
    summed: str


@dataclass(frozen=True)
class ContractionPlan:
    """Left-to-right schedule of pairwise contractions for one rule"""
    head: Atom
    first: Operand
    steps: Tuple[ContractionStep, ...]
    chain: Tuple[str, ...]

    @property
    def output(self) -> Tuple[str, str]:
        return self.chain[0], self.chain[-1]

    @property
    def operands(self) -> Tuple[Operand, ...]:
        return (self.first,) + tuple(step.right for step in self.steps)

    @property
    def transposes(self) -> int:
        return sum(operand.transpose for operand in self.operands)

    def occurrences(self, predicate: str) -> List[int]:
        return [i for i, operand in enumerate(self.operands) if operand.predicate == predicate]

    @property
    def einsum(self) -> str:
        """The plan written as an einsum signature, e.g. 'xy,yz->xz'"""
        pairs = [self.chain[i] + self.chain[i + 1] for i in range(len(self.chain) - 1)]
        return f"{','.join(pairs)}->{self.output[0]}{self.output[1]}"

    def __str__(self) -> str:
        text = str(self.first)
        for step in self.steps:
            text += f" x[{step.summed}] {step.right}"
        return f"{self.head} = H({text})"


def compile_rule(rule: Rule) -> ContractionPlan:
    """
    Chain the body atoms from the head's row variable to its column variable.

    Atoms are consumed in body order, each one taking the first remaining atom
    that mentions the chain's current end variable.
    """
    row_var, col_var = rule.head.args
    if row_var == col_var:
        raise UnsupportedPatternError(f"Head {rule.head} repeats a variable; diagonal heads are not supported")
    current = row_var
    visited = [row_var]
    remaining = list(rule.body)
    operands: List[Operand] = []
    summed: List[str] = []
    while remaining:
        atom = next((a for a in remaining if current in a.args), None)
        if atom is None:
            pending = ", ".join(str(a) for a in remaining)
            raise UnsupportedPatternError(f"Atoms {pending} share no variable with the chain ending at '{current}'")
        remaining.remove(atom)
        left, right = atom.args
        if left == right:
            raise UnsupportedPatternError(f"Atom {atom} repeats a variable; diagonal selections are not supported")
        transpose = left != current
        following = left if transpose else right
        if following in visited:
            raise UnsupportedPatternError(f"Atom {atom} revisits variable '{following}'; only simple chains are supported")
        if operands:
            summed.append(current)
        operands.append(Operand(atom.predicate, transpose))
        visited.append(following)
        current = following
    if current != col_var:
        raise UnsupportedPatternError(f"Body chain of {rule} ends at '{current}', not at head variable '{col_var}'")
    steps = tuple(ContractionStep(operand, var) for operand, var in zip(operands[1:], summed))
    return ContractionPlan(head=rule.head, first=operands[0], steps=steps, chain=tuple(visited))


def _operand_matrix(operand: Operand, matrix: SparseBoolMatrix) -> SparseBoolMatrix:
    return matrix.transpose() if operand.transpose else matrix


def execute_plan(plan: ContractionPlan,
                 relations: Mapping[str, SparseBoolMatrix],
                 overrides: Optional[Mapping[int, SparseBoolMatrix]] = None) -> SparseBoolMatrix:
    """
    Evaluate ``plan`` over Boolean relations, applying the step function after
    every contraction. ``overrides`` binds individual operand positions to
    other matrices (used to substitute deltas during semi-naive evaluation).
    """
    matrices: Dict[int, SparseBoolMatrix] = {}
    for position, operand in enumerate(plan.operands):
        if overrides and position in overrides:
            matrix = overrides[position]
        elif operand.predicate in relations:
            matrix = relations[operand.predicate]
        else:
            raise UnknownPredicateError(f"No relation bound to predicate '{operand.predicate}'")
        matrices[position] = _operand_matrix(operand, matrix)

    result = matrices[0]
    for position in range(1, len(plan.operands)):
        result = heaviside(bool_matmul_count(result, matrices[position]))
    return result
