import json
import subprocess
import sys

import pytest

from blowupforge.cli import main
from blowupforge.gradient import VectorField
from blowupforge.oned import BlowupTarget, PwlFunction
from blowupforge.reports import write_json


@pytest.fixture
def files(tmp_path):
    write_json(tmp_path / "cantor.json", {"kind": "cantor"})
    write_json(tmp_path / "prod.json", {"kind": "product", "components": [
        {"kind": "lebesgue_density", "lo": [0], "hi": [1]}, {"kind": "cantor"}]})
    write_json(tmp_path / "abs.json", BlowupTarget.abs().to_json())
    write_json(tmp_path / "one.json", VectorField.constant([1.0]).to_json())
    write_json(tmp_path / "pwl.json", PwlFunction([-2, 0.5, 2], [-1.5, 0, -1.5], (-2, 2)).to_json())
    write_json(tmp_path / "atoms.json", {"kind": "atomic", "points": [[0.2], [0.5], [0.8]], "weights": [1, 1, 2]})
    return tmp_path


def run(files, *argv, out="a"):
    return main([*argv, "--out", str(files / out)])


def test_cover_example(files):
    assert run(files, "cover", "--measure", str(files / "cantor.json"), "--eps", "0.01", "--r0", "0.1", "--tol", "1e-3", "--seed", "7") == 0
    assert (files / "a" / "cover.json").exists()
    assert (files / "a" / "cover.csv").exists()
    rep = json.loads((files / "a" / "cover.report.json").read_text())
    assert rep["ok"]


def test_cover_needs_seed(files, capsys):
    assert run(files, "cover", "--measure", str(files / "cantor.json"), "--eps", "0.01", "--r0", "0.1") == 1
    assert "seed" in capsys.readouterr().err


def test_bad_parameters(files):
    assert run(files, "cover", "--measure", str(files / "cantor.json"), "--eps", "0.9", "--r0", "0.1", "--seed", "1") == 1
    assert run(files, "cover", "--measure", str(files / "missing.json"), "--eps", "0.1", "--r0", "0.1", "--seed", "1") == 1
    assert main(["no-such-command"]) == 1


def test_blowup_example(files):
    code = run(files, "blowup", "--function", str(files / "pwl.json"), "--point", "0.5", "--radii", "0.1,0.01",
               "--target", str(files / "abs.json"))
    assert code == 0
    rows = (files / "a" / "blowup.csv").read_text().splitlines()
    assert rows[0] == "radius,distance,bound" and len(rows) == 3
    # the function is -|t - 0.5| near 0.5, at distance 2 from |t|
    assert float(rows[1].split(",")[1]) == pytest.approx(2.0, abs=1e-12)


def test_blowup_claim_failure_exit_3(files):
    code = run(files, "blowup", "--function", str(files / "pwl.json"), "--point", "0.5", "--radii", "0.1",
               "--target", str(files / "abs.json"), "--tol", "0.5")
    assert code == 3


def test_blowup_1d_budget_exit_2(files):
    code = run(files, "prescribe-blowup-1d", "--measure", str(files / "cantor.json"), "--target", str(files / "abs.json"),
               "--n", "4", "--eps0", "0.1", "--max-windows", "1000")
    assert code == 2
    assert (files / "a" / "blowup1d.report.json").exists()


def test_blowup_1d_atoms_and_verify(files):
    assert run(files, "prescribe-blowup-1d", "--measure", str(files / "atoms.json"), "--target", str(files / "abs.json"),
               "--n", "4", "--eps0", "0.1") == 0
    assert run(files, "verify", "--measure", str(files / "atoms.json"), "--artifact", str(files / "a" / "blowup1d.json"),
               "--report", str(files / "a" / "blowup1d.report.json")) == 0


COMMANDS = {
    "cover": ["cover", "--measure", "cantor.json", "--eps", "0.01", "--r0", "0.1", "--tol", "1e-3", "--seed", "7"],
    "iv": ["cover", "intervals", "--measure", "cantor.json", "--r0", "0.1", "--n", "4", "--seed", "1", "--name", "iv"],
    "rc": ["cover", "rectangles", "--measure", "prod.json", "--L", "8", "--sigma", "0.1", "--N0", "1", "--r0", "0.1",
           "--seed", "1", "--name", "rc"],
    "gradient": ["prescribe-gradient", "--measure", "cantor.json", "--field", "one.json", "--eps", "0.1", "--zeta", "0.05",
                 "--layers", "2"],
    "tile": ["tile", "--measure", "prod.json", "--target", "abs.json", "--L", "16", "--sigma", "0.1", "--N0", "1",
             "--eps-s", "0.25", "--eps-m", "0.1", "--r0", "0.05"],
}


def _abs_args(files, argv):
    return [str(files / a) if a.endswith(".json") else a for a in argv]


@pytest.mark.parametrize("key", sorted(COMMANDS))
def test_verify_roundtrip(files, key):
    assert run(files, *_abs_args(files, COMMANDS[key])) == 0
    measure = "prod.json" if key in ("rc", "tile") else "cantor.json"
    assert run(files, "verify", "--measure", str(files / measure), "--artifact", str(files / "a" / f"{key}.json"),
               "--report", str(files / "a" / f"{key}.report.json"), "--name", f"v{key}") == 0


def test_verify_detects_tampering(files):
    assert run(files, *_abs_args(files, COMMANDS["cover"])) == 0
    art = json.loads((files / "a" / "cover.json").read_text())
    art["cells"][0]["r"] *= 3
    (files / "a" / "bad.json").write_text(json.dumps(art))
    assert run(files, "verify", "--measure", str(files / "cantor.json"), "--artifact", str(files / "a" / "bad.json"),
               "--report", str(files / "a" / "cover.report.json")) == 3


def test_module_entry(files):
    out = subprocess.run([sys.executable, "-m", "blowupforge", "cover", "--measure", str(files / "cantor.json"),
                          "--eps", "0.01", "--r0", "0.1", "--out", str(files / "m")], capture_output=True, text=True)
    assert out.returncode == 1
