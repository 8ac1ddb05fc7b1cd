import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorlogic.datalog import Atom, compile_rule, execute_plan, parse_program, parse_rule
from tensorlogic.exceptions import (RuleSyntaxError, UnboundVariableError, UnknownPredicateError,
                                    UnsupportedArityError, UnsupportedPatternError)
from tensorlogic.tensor import SparseBoolMatrix


def relation(n, pairs):
    return SparseBoolMatrix.from_pairs((n, n), pairs)


def test_parse_rule():
    rule = parse_rule("Ancestor(x,z) :- Ancestor(x,y), Parent(y,z).")
    assert rule.head == Atom("Ancestor", ("x", "z"))
    assert rule.predicates == ("Ancestor", "Parent")
    assert rule.is_recursive
    assert str(rule) == "Ancestor(x,z) :- Ancestor(x,y), Parent(y,z)."


def test_parse_program_with_whitespace():
    rules = parse_program("  Ancestor(x,y) :- Parent(x,y).\n\n  Ancestor(x, z) :-\n Ancestor(x, y),  Parent(y, z).\n")
    assert len(rules) == 2
    assert not rules[0].is_recursive and rules[1].is_recursive


@pytest.mark.parametrize("text", [
    "Ancestor(x,z) :- Parent(x,z)",
    "ancestor(x,z) :- Parent(x,z).",
    "Ancestor(X,z) :- Parent(X,z).",
    "Ancestor(x,z) Parent(x,z).",
    "Ancestor(x,z) :- Parent(x,z). extra",
    "Ancestor(x,z) :- Parent(x;z).",
])
def test_syntax_errors(text):
    with pytest.raises(RuleSyntaxError):
        parse_rule(text)


def test_syntax_error_reports_position():
    with pytest.raises(RuleSyntaxError) as info:
        parse_rule("Ancestor(x,z) :- Parent(x;z).")
    assert info.value.position == 25


def test_empty_program():
    with pytest.raises(RuleSyntaxError):
        parse_program("   ")


def test_arity_and_unbound_variables():
    with pytest.raises(UnsupportedArityError):
        parse_rule("Sibling(x,y,z) :- Parent(x,y).")
    with pytest.raises(UnboundVariableError):
        parse_rule("Ancestor(x,w) :- Parent(x,y).")


def test_compile_two_atom_chain():
    plan = compile_rule(parse_rule("Ancestor(x,z) :- Ancestor(x,y), Parent(y,z)."))
    assert plan.einsum == "xy,yz->xz"
    assert plan.transposes == 0
    assert [step.summed for step in plan.steps] == ["y"]
    assert plan.occurrences("Ancestor") == [0]


def test_compile_transposes_reversed_atoms():
    plan = compile_rule(parse_rule("Sibling(x,z) :- Parent(y,x), Parent(y,z)."))
    assert [operand.transpose for operand in plan.operands] == [True, False]
    assert plan.chain == ("x", "y", "z")


def test_compile_three_atom_chain():
    plan = compile_rule(parse_rule("A(x,w) :- R(x,y), S(y,z), T(z,w)."))
    assert len(plan.steps) == 2
    assert plan.einsum == "xy,yz,zw->xw"


@pytest.mark.parametrize("text", [
    "A(x,x) :- R(x,x).",
    "A(x,z) :- R(x,y), S(w,z).",
    "A(x,z) :- R(x,y), S(y,x), T(x,z).",
    "A(x,z) :- R(x,z), S(z,w).",
])
def test_unsupported_patterns(text):
    with pytest.raises(UnsupportedPatternError):
        compile_rule(parse_rule(text))


def test_execute_plan_unknown_predicate():
    plan = compile_rule(parse_rule("A(x,z) :- R(x,y), S(y,z)."))
    with pytest.raises(UnknownPredicateError):
        execute_plan(plan, {"R": relation(2, [])})


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_three_atom_plan_matches_nested_loop_join(data):
    n = 10
    pairs = st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=25)
    r, s, t = data.draw(pairs), data.draw(pairs), data.draw(pairs)
    plan = compile_rule(parse_rule("A(x,w) :- R(x,y), S(z,y), T(z,w)."))
    result = execute_plan(plan, {"R": relation(n, r), "S": relation(n, s), "T": relation(n, t)})
    expected = {(x, w) for (x, y) in r for (z, y2) in s if y == y2 for (z2, w) in t if z == z2}
    assert result.pairs() == expected
