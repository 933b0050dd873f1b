import json
import math

import pytest

from oselab.cli import main
from oselab.interval_maps import map_to_spec, paper_map


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_spectrum_from_map_file(tmp_path, capsys):
    p = tmp_path / "t1.json"
    p.write_text(json.dumps(map_to_spec(paper_map("T1"))))
    code, out, _ = run(capsys, "spectrum", "--maps", str(p))
    assert code == 0
    moduli = sorted((math.hypot(z["re"], z["im"]) for z in json.loads(out)["eigenvalues"]), reverse=True)
    assert moduli == pytest.approx([1, 1 / 3, 1 / 3] + [0] * 6, abs=1e-9)


def test_oseledets_periodic(capsys):
    code, out, _ = run(capsys, "oseledets", "--driver", "123", "--maps", "thm1", "--depth-M", "24", "--push-N", "12")
    assert code == 0
    doc = json.loads(out)
    assert doc["multiplicities"] == [1, 1, 1, 6]
    assert doc["exponents"][-1] == "-inf"


def test_oseledets_csv(capsys):
    code, out, _ = run(capsys, "oseledets", "--driver", '{"type": "pi_sft"}', "--maps", "sec7",
                       "--push-N", "4", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0] == "N,group,exponent,multiplicity,delta,residual"


def test_met_is_byte_identical(tmp_path, capsys):
    args = ["met", "--seed", "7", "--dim", "4", "--depth-M", "60", "--push-N", "30", "--dps", "80",
            "--oracle-steps", "256"]
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run(capsys, *args, "--out", str(a))
    run(capsys, *args, "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    for line in a.read_text().splitlines():
        assert {"base", "property", "status"} <= set(json.loads(line))


def test_reproduce_thm2_passes(tmp_path, capsys):
    code, _, err = run(capsys, "reproduce", "thm2", "--out", str(tmp_path))
    assert code == 0
    report = json.loads((tmp_path / "thm2_report.json").read_text())
    assert report["passed"] and report["tolerance_table_version"] == 1
    assert (tmp_path / "thm2_w2_bases.csv").exists()


def test_reproduce_output_is_stable(tmp_path, capsys):
    run(capsys, "reproduce", "thm2", "--out", str(tmp_path / "a"))
    run(capsys, "reproduce", "thm2", "--out", str(tmp_path / "b"))
    assert (tmp_path / "a" / "thm2_report.json").read_bytes() == (tmp_path / "b" / "thm2_report.json").read_bytes()


def test_reproduce_names_first_failure(capsys):
    # a tolerance nobody can meet forces a failing check
    code, _, err = run(capsys, "reproduce", "thm2", "--tol", "subspace=1e-30")
    assert code == 1
    assert "first failing check: W2_closed_form" in err


def test_reproduce_thm1_reports_roots(capsys):
    code, out, _ = run(capsys, "reproduce", "thm1")
    doc = json.loads(out)
    roots = next(c for c in doc["checks"] if c["name"] == "exceptional_roots")
    assert roots["status"] == "PASS"
    w2 = next(c for c in doc["checks"] if c["name"] == "w2_entries")
    assert w2["status"] == "PASS"
    assert code == (0 if doc["passed"] else 1)


@pytest.mark.parametrize("argv", [
    ["oseledets", "--driver", "123", "--maps", "thm1", "--depth-M", "5", "--push-N", "6"],
    ["oseledets", "--driver", "{bad json", "--maps", "thm1"],
    ["oseledets", "--driver", "no_such_file.json", "--maps", "thm1"],
    ["spectrum", "--maps", "T9"],
    ["reproduce", "thm1", "--tol", "bogus=1"],
    ["reproduce", "thm1", "--tol", "subspace=-1"],
    ["oseledets", "--driver", "123", "--maps", "thm1", "--gap-tol", "0"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_json_error_reports_position(tmp_path, capsys):
    p = tmp_path / "drv.json"
    p.write_text('{\n  "type": "periodic",\n  "word": [1, 2,\n}')
    code, _, err = run(capsys, "oseledets", "--driver", str(p), "--maps", "thm1")
    assert code == 2 and "line 4" in err


def test_missing_field_is_named(capsys):
    code, _, err = run(capsys, "oseledets", "--driver", '{"type": "periodic"}', "--maps", "thm1")
    assert code == 2 and "word" in err
