import io
import json
from pathlib import Path

import pytest

from csa_formula.cli import EXIT_CHECK, EXIT_LIMIT, EXIT_OK, EXIT_USAGE, main, payload_json, run

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "golden"

GOLDEN_CASES = {
    "check_mdfa": ["check", "--system", "mdfa", "--params", "paper-mdfa"],
    "build_7_b0": ["build", "--n", "7", "--basis", "b0", "--selftest", "exhaustive"],
    "synth_majority_9": ["synth-sym", "--n", "9", "--function", "majority"],
    "eval_inline": ["eval", "--formula", "(or (and (var 0) (var 1)) (not (var 2)))"],
    "catalog_fa3": ["catalog", "--block", "FA3"],
}


def invoke(argv):
    out = io.StringIO()
    report, code = run(argv, stream=out)
    return report, code, out.getvalue()


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES))
def test_golden_payloads(name):
    report, code, text = invoke(GOLDEN_CASES[name])
    assert code == EXIT_OK
    assert json.loads(text)["payload"] == report["payload"]
    golden = json.loads((GOLDEN / f"{name}.json").read_text())
    assert report["payload"] == golden


def test_report_shape():
    report, code, _ = invoke(["eval", "--formula", "(var 0)", "--assign", "1"])
    assert code == EXIT_OK
    assert set(report) == {"command", "config", "seed", "status", "payload", "wall_time"}
    assert report["payload"]["value"] == 1


def test_examples_from_usage(tmp_path):
    assert main(["verify-blocks"]) == EXIT_OK
    assert main(["check", "--system", "mdfa", "--params", "paper-mdfa"]) == EXIT_OK
    out = tmp_path / "c7.sexp"
    assert main(["build", "--n", "7", "--basis", "b0", "--out", str(out), "--selftest", "exhaustive"]) == EXIT_OK
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["c7.bit0.sexp", "c7.bit1.sexp", "c7.bit2.sexp"]
    # the written formulas evaluate like the counter
    _, code, text = invoke(["eval", "--formula", str(tmp_path / "c7.bit2.sexp"), "--assign", "1111000"])
    assert json.loads(text)["payload"]["value"] == 1


def test_exit_codes():
    assert main(["check", "--params", "paper-sfa7"]) == EXIT_CHECK
    assert main(["build", "--n", "40", "--selftest", "exhaustive"]) == EXIT_LIMIT
    assert main(["nonsense"]) == EXIT_USAGE
    assert main(["build"]) == EXIT_USAGE
    assert main(["build", "--n", "5", "--selftest", "sometimes"]) == EXIT_USAGE
    assert main(["build", "--n", "5", "--basis", "b0", "--csa", "fig2"]) == EXIT_USAGE
    assert main(["eval", "--formula", "(and (var 0)"]) == EXIT_USAGE
    assert main(["check", "--system", "nope", "--params", "paper-mdfa"]) == EXIT_USAGE
    assert main(["fit", "--sizes", "32,16"]) == EXIT_USAGE
    assert main(["fit", "--sizes", "8,16,32", "--band", "9", "10"]) == EXIT_CHECK


def test_floats_rounded_to_ten_digits():
    report, _, _ = invoke(["check", "--system", "mdfa", "--params", "paper-mdfa"])
    for v in report["payload"]["bounds"].values():
        assert len(repr(v).replace(".", "").lstrip("0").split("e")[0]) <= 10


def test_optimize_writes_loadable_params(tmp_path):
    out = tmp_path / "toy.json"
    report, code, _ = invoke(["optimize", "--system", str(DATA / "toy3.sys"), "--out", str(out)])
    assert code == EXIT_OK
    assert report["payload"]["supremum_check"] is True
    _, code, _ = invoke(["check", "--system", str(DATA / "toy3.sys"), "--params", str(out)])
    assert code == EXIT_OK


def test_matrix_params_feed_plan(tmp_path):
    out = tmp_path / "m.json"
    _, code, _ = invoke(["matrix-exponent", "--matrix", str(DATA / "toy3.mat"), "--out", str(out)])
    assert code == EXIT_OK
    report, code, _ = invoke(["plan", "--matrix", str(DATA / "toy3.mat"), "--params", str(out), "--n", "64",
                              "--slack", "0.05"])
    assert code == EXIT_OK, report
    assert report["payload"]["discrete_margins"]["matrix"] > 0


def test_bit_exponent_reports_symmetric_exponent():
    report, code, _ = invoke(["bit-exponent", "--matrix", str(DATA / "toy3.mat")])
    assert code == EXIT_OK
    p = report["payload"]
    assert p["symmetric_exponent"] == pytest.approx(1 + p["exponent"])


def test_fit_csv_output(tmp_path):
    _, code, text = invoke(["fit", "--sizes", "8,16,32", "--format", "csv", "--out", str(tmp_path / "g.csv")])
    assert code == EXIT_OK
    assert text.splitlines()[0] == "n,bit,leaves"
    assert (tmp_path / "g.csv").read_text() == text


def test_text_format():
    _, code, text = invoke(["build-bit", "--n", "6", "--bit", "1", "--format", "text"])
    assert code == EXIT_OK
    assert text.startswith("build-bit: ok")
    assert "selftest.mismatches = 0" in text


def test_verify_blocks_parallel_matches_serial():
    a, _, _ = invoke(["verify-blocks", "--block", "FA3", "--block", "SFA7"])
    b, _, _ = invoke(["verify-blocks", "--block", "FA3", "--block", "SFA7", "--jobs", "2"])
    assert payload_json(a["payload"]) == payload_json(b["payload"])


def test_usage_error_unknown_block():
    assert main(["verify-blocks", "--block", "NOPE"]) == EXIT_USAGE
