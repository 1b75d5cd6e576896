import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from csa_formula.analysis import (
    REF_PARAMS,
    ParamSet,
    PlanError,
    SearchConfig,
    SystemSyntaxError,
    bit_exponent,
    bit_margins,
    builtin_system,
    builtin_system_text,
    check_balance,
    check_monotone,
    load_matrix,
    load_params,
    load_system,
    matrix_exponent,
    matrix_margin,
    optimize_params,
    reference_matrix,
    parse_matrix,
    parse_system,
    plan_levels,
)
from csa_formula.formula import ResourceLimitError

DATA = Path(__file__).parent / "data"
TOY_P = math.log(1.5) / math.log(3)


def test_builtin_systems_round_trip_through_text():
    for name in ("mdfa", "sfa5", "sfa7"):
        sys = builtin_system(name)
        again = parse_system(builtin_system_text(name))
        assert again.bounds == sys.bounds
        assert check_monotone(sys)


@pytest.mark.parametrize("text, fragment", [
    ("types 1\ntype t: X -> Y\nY <= X", "system"),
    ("system s\ntypes 2\ntype t: X -> Y\nY <= X", "declares 2"),
    ("system s\ntype t: X -> Y\nY <= X + Z", "Z"),
    ("system s\ntype t: X -> Y\n", "no bound"),
    ("system s\ntype t X -> Y\nY <= X", "expected"),
    ("system s\nfoo bar", "unknown directive"),
    ("system s\ntype t: X -> Y\nY <= (X", ""),
])
def test_system_syntax_errors(text, fragment):
    with pytest.raises(SystemSyntaxError) as ei:
        parse_system(text)
    assert fragment in str(ei.value)


def test_expression_features():
    sys = parse_system("system e\nparam a\ntype t: X1 X2 -> Y\nY <= max(X1, (2/a)*X2) + 3*X1 - X2/2")
    y = sys.evaluate({"X1": 1.0, "X2": 4.0}, {"a": 2.0})
    assert y["Y"] == pytest.approx(4.0 + 3.0 - 2.0)


def test_check_balance_needs_alpha_and_weights():
    sys = builtin_system("mdfa")
    _, ps = REF_PARAMS["paper-mdfa"]
    with pytest.raises(ValueError):
        check_balance(sys, ParamSet(ps.p, ps.weights))
    with pytest.raises(ValueError):
        check_balance(sys, ParamSet(ps.p, {"X1": 1.0}, 2.0))


def test_reference_mdfa_and_sfa5_feasible():
    for key in ("paper-mdfa", "paper-sfa5"):
        name, ps = load_params(key)
        m = check_balance(builtin_system(name), ps)
        assert m.feasible, m.values


def test_params_json_round_trip(tmp_path):
    _, ps = load_params("paper-sfa7")
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"system": "sfa7", **ps.to_dict()}))
    name, again = load_params(str(path))
    assert name == "sfa7" and again == ps


def test_paramset_validation():
    with pytest.raises(ValueError):
        ParamSet(0.0, {"X1": 1.0})
    with pytest.raises(ValueError):
        ParamSet(0.3, {"X1": -1.0})


@given(st.floats(0.1, 10.0), st.sampled_from(["paper-mdfa", "paper-sfa5", "paper-sfa7"]))
@settings(max_examples=30)
def test_margins_scale_homogeneously(t, key):
    # all bounds are degree-one homogeneous, so margins scale by t^p
    name, ps = REF_PARAMS[key]
    sys = builtin_system(name)
    base = check_balance(sys, ps).values
    scaled = check_balance(sys, ps.scaled(t)).values
    for k in base:
        assert scaled[k] == pytest.approx(base[k] * t ** ps.p, rel=1e-6, abs=1e-12)


@given(st.lists(st.floats(0.05, 20.0), min_size=3, max_size=3), st.floats(0.05, 0.9))
def test_toy_system_margin_never_beats_equal_weights(w, p):
    sys = load_system(str(DATA / "toy3.sys"))
    ps = ParamSet(p, {"X1": w[0], "X2": w[1], "X3": w[2]})
    m = check_balance(sys, ps).values["std"]
    s = sum(w)
    best = 3 * (s / 3) ** p - 2 * s ** p
    assert m <= best + 1e-9


def test_toy_optimum_matches_closed_form():
    ps, margins, res = optimize_params(load_system(str(DATA / "toy3.sys")), seed=3)
    assert margins.feasible
    assert TOY_P - 2e-6 <= ps.p <= TOY_P
    assert res.supremum_check


def test_toy_matrix_exponents_match_closed_form():
    ms = load_matrix(str(DATA / "toy3.mat"))
    assert ms.name == "toy3"
    r = matrix_exponent(ms)
    assert TOY_P - 2e-6 <= r.p <= TOY_P
    # equal weights are optimal; the nu-condition reduces to 3 = 3^p (1 + 2^-p)
    want = brentq(lambda p: 3 - 3 ** p * (1 + 2 ** -p), 0.05, 0.9)
    b = bit_exponent(ms)
    assert want - 2e-6 <= b.p <= want
    a0, tot = bit_margins(ms, np.array(b.weights), b.p)
    assert a0 > 0 and tot > 0


def test_infeasible_box_reports_uncertified():
    # 2 X^p > (2e6 X)^p needs p < 0.048, below the search box
    sys = parse_system("system bad\ntype t: X1 X2 -> Y\nY <= 1000000*(X1 + X2)")
    ps, margins, res = optimize_params(sys, cfg=SearchConfig(restarts=2))
    assert ps is None and not res.certified


def test_matrix_parsing():
    ms = parse_matrix("# c\nsigs_in: 0 1\nsigs_out: 0\n1 2\n")
    assert ms.M == ((1, 2),) and ms.sigs_in == (0, 1)
    with pytest.raises(SystemSyntaxError):
        parse_matrix("1 x\n")
    with pytest.raises(ValueError):
        parse_matrix("1 2\n3\n")
    with pytest.raises(ValueError):
        parse_matrix("sigs_in: 0\n1 2\n")
    assert parse_matrix(ms.to_text()) == ms


def test_reference_matrices_shapes():
    assert reference_matrix("paper-15x6").array().shape == (6, 15)
    assert reference_matrix("paper-17x6").array().shape == (6, 17)
    with pytest.raises(ValueError):
        reference_matrix("paper-1x1")


def test_matrix_margin_direct():
    ms = load_matrix(str(DATA / "toy3.mat"))
    x = np.ones(3)
    assert matrix_margin(ms, x, 0.5) == pytest.approx(3 - 2 * math.sqrt(3))


def test_plan_hand_case():
    sys = parse_system("system one\ntype t: X1 X2 X3 -> Y\nY <= (2/3)*(X1 + X2 + X3)")
    ps = ParamSet(0.5, {"X1": 1.0, "X2": 1.0, "X3": 1.0})
    plan = plan_levels(sys, ps, 8)
    assert plan.lam == 2.0
    assert plan.levels_in["t"] == [0, 0, 0] and plan.levels_out["t"] == [1]
    assert plan.discrete_margins["t"] == 1.0
    assert plan.top_level == 3
    assert plan.c == 2 and plan.counts == [16, 8, 4, 2]


def test_plan_reports_tightest_margin():
    ps = ParamSet(0.5, {"X1": 1.0, "X2": 1.0, "X3": 1.0})
    with pytest.raises(PlanError, match="tightest margin"):
        plan_levels(load_system(str(DATA / "toy3.sys")), ps, 8)


def test_plan_mdfa_with_slack():
    name, ps = load_params("paper-mdfa")
    plan = plan_levels(builtin_system(name), ps, 1024, slack=0.01)
    assert all(v > 0 for v in plan.discrete_margins.values())
    assert min(plan.supply.values()) >= 1024
    with pytest.raises(ResourceLimitError):
        plan_levels(builtin_system(name), ps, 1024, slack=0.01, max_levels=100)


def test_plan_discrete_margins_imply_continuous():
    # rounding inputs down and outputs up only weakens the inequality
    name, ps = load_params("paper-sfa5")
    sys = builtin_system(name)
    plan = plan_levels(sys, ps, 64, slack=0.05)
    cont = check_balance(sys, ps.with_p(plan.p)).values
    for k, v in plan.discrete_margins.items():
        assert v > 0 and cont[k] > 0


def test_bit_margins_reduce_to_matrix_margin_without_significances():
    ms = parse_matrix("1 1 1\n1 1 1\n")
    x = np.array([1.0, 2.0, 0.5])
    a0, tot = bit_margins(ms, x, 0.4)
    assert a0 == pytest.approx(tot) == pytest.approx(matrix_margin(ms, x, 0.4))
