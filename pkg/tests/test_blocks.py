import dataclasses

import numpy as np
import pytest

from csa_formula.blocks import (
    REF_MATRIX_15x6,
    REF_MATRIX_17x6,
    Encoding,
    Netlist,
    block_library,
    compare_with_reference,
    compose_chain,
    instantiate_block,
    leaf_matrix,
    std,
    template_matrix,
    threshold_formula,
    verify_block,
)
from csa_formula.formula import Basis, ResourceLimitError, Var, truth_table, validate_basis

LIB = block_library()


@pytest.mark.parametrize("name", sorted(LIB))
def test_block_passes_exhaustive_verification(name):
    b = LIB[name]
    rep = verify_block(b)
    assert rep.passed, rep.failures[:3]
    assert rep.assignments == 1 << b.decoded_inputs
    assert all(validate_basis(t, b.basis)[0] for t in b.templates)


@pytest.mark.parametrize("name", sorted(LIB))
def test_composed_matrix_matches_expanded_templates(name):
    b = LIB[name]
    assert leaf_matrix(b).array().tolist() == template_matrix(b).array().tolist()


def test_broken_block_is_caught():
    fa = LIB["FA3"]
    bad = dataclasses.replace(fa, templates=(fa.templates[1], fa.templates[0]))
    rep = verify_block(bad)
    assert not rep.passed
    assert rep.failure_count > 0 and rep.failures


def test_verify_refuses_huge_blocks():
    ins = [std(f"x{i}") for i in range(30)]
    b = dataclasses.replace(LIB["FA3"], inputs=tuple(ins), outputs=(std("s"),), templates=(Var(0),))
    with pytest.raises(ResourceLimitError):
        verify_block(b)


@pytest.mark.parametrize("enc", list(Encoding))
def test_encodings_round_trip(enc):
    k = enc.arity
    width = 1 << k
    ones = (1 << width) - 1
    cols = [sum(((a >> i) & 1) << a for a in range(width)) for i in range(k)]
    comps = enc.encode(cols, ones)
    arr = [np.array([(c >> a) & 1 for a in range(width)], dtype=bool) for c in comps]
    total = np.array([bin(a).count("1") for a in range(width)])
    assert enc.valid(arr).all()
    assert (enc.decode_sum(arr) == total).all()


# profiles implied by the size inequalities (coefficients at unit sizes)
@pytest.mark.parametrize("block, row, profile", [
    ("FA3", "s", (1, 1, 1)),
    ("FA3", "c", (2, 2, 1)),
    ("FA3_B0", "s", (4, 4, 2)),
    ("MDFA", "c", (1, 0, 1, 0, 1)),
    ("SFA5", "c", (4, 4, 4, 2, 2)),
    ("FIG2", "c1", (1, 1, 1, 0, 0, 1, 0, 0, 0, 0)),
    ("FIG2", "c2", (0, 0, 0, 1, 0, 0, 0, 1, 0, 1)),
    ("FIG2", "A1.v", (1, 1, 3, 0, 0, 0, 0, 0, 0, 0)),
    ("SFA7", "c1", (4, 0, 0, 0, 4, 0, 0, 0, 2)),
    ("SFA7P", "c2", (8, 8, 8, 8, 0, 0, 0, 2)),
])
def test_leaf_profiles(block, row, profile):
    assert template_matrix(LIB[block]).row(row) == profile


def test_sorted_outputs_parity_is_twice_median():
    for name in ("SFA7", "SFA7P"):
        m = template_matrix(LIB[name])
        assert np.array_equal(np.array(m.row("Q.sx")), 2 * np.array(m.row("Q.s2")))


def test_chain4_reproduces_reference_matrix():
    assert leaf_matrix(LIB["CHAIN4"]).array().tolist() == [list(r) for r in REF_MATRIX_15x6]


def test_csa17_matrix_against_reference():
    cmp = {r["row"]: r for r in compare_with_reference(leaf_matrix(LIB["CSA17"]), REF_MATRIX_17x6)}
    for row in ("c0", "c1", "c2"):
        assert cmp[row]["exact"]
    # columns fed by the two pair groups agree everywhere
    for row in ("p", "m", "h"):
        assert cmp[row]["measured"][7:] == cmp[row]["reference"][7:]


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_chain_shapes(m):
    b = compose_chain(m)
    assert len(b.input_components) == 3 * m + 3
    assert len(b.outputs) == m + 2
    assert verify_block(b).passed


def test_chain_rejects_bad_length():
    with pytest.raises(ValueError):
        compose_chain(0)


@pytest.mark.parametrize("n", range(1, 8))
def test_threshold_formulas(n):
    for k in range(n + 2):
        f = threshold_formula(n, k)
        tt = truth_table(f, n) if f.max_var >= 0 else None
        for a in range(1 << n):
            want = int(bin(a).count("1") >= k)
            got = tt[a] if tt is not None else f.value
            assert got == want, (n, k, a)


def test_instantiate_block_checks_inputs():
    fa = LIB["FA3_B0"]
    with pytest.raises(KeyError):
        instantiate_block(fa, {"x": Var(0)})
    with pytest.raises(ValueError):
        instantiate_block(fa, {"x": Var(0) ^ Var(1), "y": Var(2), "z": Var(3)})
    out = instantiate_block(fa, {"x": Var(0), "y": Var(1), "z": Var(2)})
    assert out["s"].size == 10


def test_netlist_wiring_errors():
    net = Netlist("T", Basis.B2, [std("a"), std("b"), std("c")])
    with pytest.raises((ValueError, IndexError, KeyError)):
        net.add(LIB["FA3"], [0, 1])
    with pytest.raises((ValueError, IndexError, KeyError)):
        net.add(LIB["FA3"], [0, 1, 99])


def test_fig2_first_output_role_choice_is_functional():
    # binding v to x3 or to x1 gives the same function
    x1, x2, x3 = Var(0), Var(1), Var(2)
    a = ((x1 ^ x3) & (x2 ^ x3)) ^ x3
    b = ((x3 ^ x1) & (x2 ^ x1)) ^ x1
    assert truth_table(a, 3) == truth_table(b, 3)


def test_identity_strings():
    assert LIB["FA3"].identity() == "x + y + z = s + 2*c"
    assert LIB["FIG3"].identity() == "x1 + x2 + x3 + |U1| + |U2| = c + 2*|A1| + |A2|"


def test_describe_is_json_ready():
    import json

    for b in LIB.values():
        json.dumps(b.describe())
