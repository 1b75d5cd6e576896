import itertools

import pytest
from hypothesis import given, settings, strategies as st

from csa_formula.formula import (
    AND,
    ONE,
    OR,
    XOR,
    ZERO,
    Basis,
    Gate,
    MissingArgumentError,
    NonMonotoneError,
    Not,
    ResourceLimitError,
    TruthTable,
    Var,
    VariableIndexError,
    and_all,
    dualize_monotone,
    evaluate,
    fold_constants,
    gate_count,
    instantiate,
    instantiate_many,
    is_monotone,
    leaf_profile,
    mk_gate,
    negate,
    or_all,
    rename,
    table_from_string,
    table_string,
    truth_table,
    validate_basis,
    variables,
    xor_b0,
)

NV = 4


def formulas(nvars=NV, monotone=False, b0=False):
    leaves = st.integers(0, nvars - 1).map(Var)
    if not monotone:
        leaves = leaves | st.integers(0, nvars - 1).map(lambda i: Not(Var(i)))
    tables = st.sampled_from([AND, OR]) if (monotone or b0) else st.integers(0, 15)

    def extend(kids):
        gates = st.builds(Gate, tables, kids, kids)
        if monotone or b0:
            return gates
        return gates | st.builds(Not, kids)

    return st.recursive(leaves, extend, max_leaves=12)


def brute(f, nvars=NV):
    return [evaluate(f, [(a >> i) & 1 for i in range(nvars)]) for a in range(1 << nvars)]


def test_sizes_count_leaves_not_gates():
    x, y = Var(0), Var(1)
    f = (x & ~y) | (~x & y)
    assert f.size == 4
    assert gate_count(f) == 3
    assert ZERO.size == 0 and ONE.size == 0


def test_shared_subformula_counts_every_occurrence():
    x = Var(0)
    f = x
    for _ in range(40):
        f = f & f
    assert f.size == 2 ** 40
    assert evaluate(f, [1]) == 1


def test_table_strings_round_trip():
    for t in range(16):
        assert table_from_string(table_string(t)) == t
    assert table_string(AND) == "0001"
    assert table_string(XOR) == "0110"
    with pytest.raises(ValueError):
        table_from_string("012")


def test_gate_rejects_bad_table():
    with pytest.raises(ValueError):
        Gate(16, Var(0), Var(1))


def test_truth_table_limits():
    with pytest.raises(VariableIndexError):
        truth_table(Var(3), 2)
    with pytest.raises(ResourceLimitError):
        truth_table(Var(0), 40)


def test_truth_table_from_function_matches():
    f = (Var(0) & Var(1)) | Var(2)
    tt = TruthTable.from_function(3, lambda a: (a[0] and a[1]) or a[2])
    assert truth_table(f, 3) == tt
    assert str(tt) == "00011111"


def test_validate_basis_reports_paths():
    ok, diag = validate_basis(Var(0) ^ Var(1), Basis.B0)
    assert not ok and "xor" in diag[0]
    ok, diag = validate_basis(~(Var(0) & Var(1)), Basis.B0)
    assert not ok and "non-variable" in diag[0]
    assert validate_basis(Var(0) ^ Var(1), Basis.B2) == (True, [])


def test_dualize_rejects_negation():
    with pytest.raises(NonMonotoneError):
        dualize_monotone(~Var(0) | Var(1))
    with pytest.raises(NonMonotoneError):
        dualize_monotone(Var(0) ^ Var(1))


def test_instantiate_missing_argument():
    with pytest.raises(MissingArgumentError):
        instantiate(Var(0) & Var(3), [Var(0), Var(1)])


def test_mk_gate_folds_constants():
    x = Var(0)
    assert mk_gate(AND, x, ZERO) is ZERO
    assert mk_gate(OR, x, ZERO) is x
    assert mk_gate(XOR, ONE, x, Basis.B0) == Not(x)
    assert mk_gate(XOR, x, x) is ZERO


def test_balanced_trees_have_log_depth():
    xs = [Var(i) for i in range(16)]
    f = and_all(xs)
    assert f.size == 16
    depth = 0
    while isinstance(f, Gate):
        f, depth = f.left, depth + 1
    assert depth == 4
    assert or_all([]) is ZERO and and_all([]) is ONE


def test_xor_b0_doubles_leaves():
    f = xor_b0(Var(0), Var(1))
    assert f.size == 4
    assert validate_basis(f, Basis.B0)[0]
    assert brute(f, 2) == [0, 1, 1, 0]


@given(formulas(b0=True))
def test_negate_b0_is_complement_and_keeps_size(f):
    g = negate(f, Basis.B0)
    assert g.size == f.size
    assert validate_basis(g, Basis.B0)[0]
    assert brute(g) == [1 - v for v in brute(f)]
    assert negate(g, Basis.B0) == f


@given(formulas())
def test_negate_b2_is_complement(f):
    g = negate(f, Basis.B2)
    assert g.size == f.size
    assert brute(g) == [1 - v for v in brute(f)]


@given(formulas(monotone=True))
def test_dual_semantics(f):
    # f*(x) = not f(not x)
    d = dualize_monotone(f)
    assert d.size == f.size and is_monotone(d)
    full = (1 << NV) - 1
    vals = brute(f)
    assert brute(d) == [1 - vals[full ^ a] for a in range(1 << NV)]
    assert dualize_monotone(d) == f


@given(formulas(), st.lists(formulas(), min_size=NV, max_size=NV))
@settings(max_examples=60)
def test_instantiate_multiplies_leaf_profile(t, args):
    f = instantiate(t, args)
    prof = leaf_profile(t, NV)
    assert f.size == sum(prof[i] * args[i].size for i in range(NV))
    # semantics: composition
    for a in range(1 << NV):
        bits = [(a >> i) & 1 for i in range(NV)]
        inner = [evaluate(g, bits) for g in args]
        assert evaluate(f, bits) == evaluate(t, inner)


@given(formulas(), st.lists(st.sampled_from([ZERO, ONE, Var(0), Var(1)]), min_size=NV, max_size=NV))
def test_fold_preserves_semantics(t, args):
    plain = instantiate(t, args)
    folded = instantiate(t, args, fold=True)
    assert folded.size <= plain.size
    assert brute(folded) == brute(plain)
    assert brute(fold_constants(plain)) == brute(plain)


@given(formulas(), st.permutations(range(NV)))
def test_rename_permutes_inputs(f, perm):
    g = rename(f, dict(enumerate(perm)))
    for a in itertools.product((0, 1), repeat=NV):
        b = [0] * NV
        for i, j in enumerate(perm):
            b[j] = a[i]
        assert evaluate(g, b) == evaluate(f, list(a))


def test_instantiate_many_shares_structure():
    t1 = Var(0) & Var(1)
    t2 = t1 | Var(2)
    a, b = instantiate_many([t1, t2], [Var(5), Var(6), Var(7)])
    assert b.left is a
    assert variables(b) == [5, 6, 7]
