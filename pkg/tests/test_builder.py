import pytest
from hypothesis import given, settings, strategies as st

from csa_formula.builder import (
    BuildOptions,
    build_bit,
    build_counter,
    build_symmetric,
    check_counter,
    check_symmetric,
    counter_size,
    fit_growth,
)
from csa_formula.formula import Basis, validate_basis

CONFIGS = [("b2", "fig2"), ("b2", "chain4"), ("b0", "fig3"), ("b0", "fig4"), ("b0", "csa17")]


@pytest.mark.parametrize("basis, csa", CONFIGS)
@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 11, 13])
def test_counter_exhaustive(basis, csa, n):
    opts = BuildOptions(Basis(basis), csa)
    bits = build_counter(n, opts)
    assert len(bits) == n.bit_length()
    assert check_counter(bits, n) == 0
    if basis == "b0":
        assert all(validate_basis(f, Basis.B0)[0] for f in bits)


@pytest.mark.parametrize("basis, csa", CONFIGS)
def test_counter_random_large(basis, csa):
    n = 200
    assert check_counter(build_counter(n, BuildOptions(Basis(basis), csa)), n, samples=2000, seed=5) == 0


@given(st.integers(1, 12), st.sampled_from(CONFIGS), st.integers(3, 6))
@settings(max_examples=25, deadline=None)
def test_counter_property(n, cfg, threshold):
    opts = BuildOptions(Basis(cfg[0]), cfg[1], threshold=threshold)
    assert check_counter(build_counter(n, opts), n) == 0


@given(st.integers(1, 10).flatmap(lambda n: st.tuples(st.just(n), st.lists(st.integers(0, 1), min_size=n + 1,
                                                                              max_size=n + 1))),
       st.sampled_from(["b0", "b2"]))
@settings(max_examples=30, deadline=None)
def test_symmetric_property(case, basis):
    n, values = case
    f = build_symmetric(values, n, BuildOptions(Basis(basis)))
    assert check_symmetric(f, values, n) == 0


def test_build_bit_matches_counter():
    opts = BuildOptions()
    bits = build_counter(20, opts)
    for k in range(len(bits)):
        assert build_bit(20, k, opts).size == bits[k].size
    with pytest.raises(ValueError):
        build_bit(20, 5, opts)


def test_deterministic_sizes():
    a = [f.size for f in build_counter(300, BuildOptions(Basis.B0))]
    b = [f.size for f in build_counter(300, BuildOptions(Basis.B0))]
    assert a == b


def test_option_validation():
    with pytest.raises(ValueError):
        BuildOptions(Basis.B0, "fig2").block
    with pytest.raises(ValueError):
        BuildOptions(csa="nope")
    with pytest.raises(ValueError):
        BuildOptions(threshold=2)
    with pytest.raises(ValueError):
        build_counter(0)
    with pytest.raises(ValueError):
        build_symmetric([0, 1], 3)


def test_growth_report():
    rep = fit_growth([16, 32, 64, 128], None, BuildOptions())
    assert rep.to_csv().splitlines()[0] == "n,bit,leaves"
    assert len(rep.rows) == 4 and not rep.monotone_violations
    assert 2.0 < rep.slope < 4.5
    assert counter_size(64, BuildOptions(), bit=0) == rep.rows[2][2] - sum(
        f.size for f in build_counter(64, BuildOptions())[1:])
    with pytest.raises(ValueError):
        fit_growth([64, 32], None)
