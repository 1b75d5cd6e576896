import pytest
from hypothesis import given, strategies as st

from csa_formula.formula import Var, evaluate
from csa_formula.sexpr import FormulaSyntaxError, canonicalize, dump, load, parse, render

from test_formula import brute, formulas


@given(formulas())
def test_render_parse_round_trip(f):
    text = render(f)
    g = parse(text)
    assert g == f
    assert render(g) == text


@given(formulas())
def test_canonical_form_is_a_fixed_point(f):
    text = render(f)
    spaced = text.replace(" ", "  \n ").replace("(", "( ")
    assert canonicalize(spaced) == text


def test_named_gates_and_tables():
    f = parse("(gate 0110 (var 0) (var 1))")
    assert render(f) == "(xor (var 0) (var 1))"
    g = parse("(gate 1011 (var 0) (var 1))")
    assert render(g) == "(gate 1011 (var 0) (var 1))"
    assert brute(g, 2) == [1, 1, 0, 1]


def test_comments_and_constants():
    f = parse("# header\n(and (const 1)\n  (not (var 2)))")
    assert evaluate(f, [0, 0, 0]) == 1
    assert f.size == 1


@pytest.mark.parametrize("text, line, col", [
    ("(and (var 0))", 1, 13),
    ("(var x)", 1, 6),
    ("(foo (var 0))", 1, 2),
    ("(var 0) (var 1)", 1, 9),
    ("(and (var 0)\n  (vr 1))", 2, 4),
    ("", 1, 1),
    ("(gate 01 (var 0) (var 1))", 1, 7),
])
def test_syntax_errors_carry_positions(text, line, col):
    with pytest.raises(FormulaSyntaxError) as ei:
        parse(text)
    assert (ei.value.line, ei.value.column) == (line, col)


def test_deep_formula_does_not_recurse():
    f = Var(0)
    for i in range(1, 20000):
        f = f & Var(i % 7) if i % 2 else Var(i % 5) | f
    text = render(f)
    assert parse(text) == f


def test_dump_and_load(tmp_path):
    f = (Var(0) & ~Var(1)) | Var(2)
    path = tmp_path / "f.sexp"
    dump(f, path, comment="two\nlines")
    assert path.read_text().startswith("# two\n# lines\n")
    assert load(path) == f


@given(st.text(alphabet="() varndox01gte\n", max_size=40))
def test_parser_never_crashes_unexpectedly(text):
    try:
        parse(text)
    except FormulaSyntaxError:
        pass
