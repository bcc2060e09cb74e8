import io
import json
import subprocess
import sys

import pytest

from elldensity.cli import EXIT_CAP, EXIT_INVALID, EXIT_OK, render, run


def call(*argv):
    buf = io.StringIO()
    rc = run(list(argv), out=buf)
    return rc, buf.getvalue()


def call_json(*argv):
    rc, text = call(*argv)
    assert rc == EXIT_OK, text
    return json.loads(text)


def test_density_lang_trotter():
    rep = call_json("density", "cyclic", "--catalog", "lang-trotter-11", "--L", "100000")
    r = rep["result"]
    assert r["correction"] == "65996/65995"
    assert abs(float(r["constant"]["value"]) - 0.611597) < 5e-7
    assert rep["truncation_L"] == 100000
    assert rep["inputs"]["catalog"] == "lang-trotter-11" and len(rep["inputs"]["sha256"]) == 64
    assert rep["version"]


def test_density_curve17_vanishes():
    r = call_json("density", "cyclic-ap", "--catalog", "curve-17", "--a", "2", "--f", "17")["result"]
    assert r["vanishing"] == "entanglement"
    assert float(r["constant"]["value"]) == 0
    assert r["vanishing_analysis"] == "zero_entanglement"


def test_density_koblitz_serre():
    r = call_json("density", "koblitz", "--catalog", "serre-37a")["result"]
    assert r["correction"] == "47882/47881"
    assert r["constant"]["digits"].startswith("0.5051")


def test_inline_curve_assumes_serre():
    rep = call_json("density", "cyclic", "--curve", "0,0,1,-1,0", "--L", "1000")
    assert rep["inputs"]["serre_asserted"] is True
    # D = 37: 1 + 1/((37^2 - 1)(37^2 - 37) - 1)
    assert rep["result"]["correction"] == "9110876/9110875"


def test_inline_curve_with_spec_file(tmp_path):
    from elldensity.catalog import catalog_entry

    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(catalog_entry("curve-17").spec_data))
    rep = call_json("density", "cyclic-ap", "--curve", "1,-1,1,-1,-14", "--spec", str(spec), "--a", "1", "--f", "3",
                    "--L", "1000")
    assert rep["result"]["correction"] == "78336/78335"
    assert "spec_sha256" in rep["inputs"]


def test_format_table_matches_json():
    argv = ["density", "cyclic", "--catalog", "lang-trotter-11", "--L", "10000"]
    rep = call_json(*argv)
    rc, table = call(*argv, "--format", "table")
    assert rc == EXIT_OK
    lines = dict(line.split(None, 1) for line in table.splitlines())
    assert lines["result.correction"] == rep["result"]["correction"]
    assert lines["result.constant.digits"] == rep["result"]["constant"]["digits"]
    assert table.rstrip("\n") == render(rep, "table")


def test_catalog_verb():
    rows = call_json("catalog")["result"]["entries"]
    assert [r["id"] for r in rows][0] == "lang-trotter-11" and len(rows) == 5
    one = call_json("catalog", "curve-4x4")["result"]
    assert one["phi_orders"] == [4]


def test_goursat_verb():
    r = call_json("goursat", "--catalog", "lang-trotter-11", "--check-normal")["result"]
    assert r["quotient_order"] == 2 and r["abelian_entanglements"] and r["normal_in_product"]
    r = call_json("goursat", "--catalog", "family6-example")["result"]
    assert r["quotient_order"] == 6 and not r["abelian_entanglements"] and not r["quotient_abelian"]


def test_artin_verb():
    r = call_json("artin", "--g", "5", "--L", "10000", "--N", "10000")["result"]
    assert r["correction"] == "20/19"


def test_verify_small():
    rep = call_json("verify", "cyclic", "--catalog", "lang-trotter-11", "--x", "20000", "--L", "1000")
    r = rep["result"]
    assert r["total_primes"] == 2262 and rep["seed"] == 0
    assert abs(r["deviation"]) < 0.05


@pytest.mark.parametrize("argv", [
    ["density", "cyclic", "--catalog", "no-such-curve"],
    ["density", "cyclic-ap", "--catalog", "curve-17", "--a", "1"],
    ["density", "cyclic", "--catalog", "curve-17", "--a", "1"],
    ["density", "cyclic"],
    ["density", "cyclic", "--curve", "1,x,3"],
    ["density", "cyclic", "--curve", "0,0"],
    ["density", "koblitz", "--curve", "0,0,0,-1,0", "--t", "3"],
    ["density", "cyclic", "--catalog", "curve-17", "--curve", "0,1"],
    ["artin", "--g", "1"],
    ["verify", "cyclic", "--catalog", "lang-trotter-11", "--x", "1"],
    ["goursat", "--catalog", "curve-17", "--blocks", "0"],
    ["frobnicate"],
])
def test_invalid_inputs_exit_2(argv, capsys):
    rc, _ = call(*argv)
    assert rc == EXIT_INVALID


def test_malformed_spec_json(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    rc, _ = call("density", "cyclic", "--curve", "0,0,1,-1,0", "--spec", str(bad))
    assert rc == EXIT_INVALID
    rc, _ = call("density", "cyclic", "--entry", str(bad))
    assert rc == EXIT_INVALID


def test_cap_exit_3():
    rc, _ = call("goursat", "--catalog", "lang-trotter-11", "--cap", "100")
    assert rc == EXIT_CAP


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "elldensity", "artin", "--g", "2", "--L", "100", "--N", "100"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["result"]["correction"] == "1"
