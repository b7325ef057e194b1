import json
import os
import pathlib
import subprocess
import sys

import mpmath
import numpy as np
import pytest

from whitconv import DiscreteMeasure, GridDensity, Params
from whitconv import io as wio
from whitconv.cli import main

DATA = pathlib.Path(__file__).parent / "data"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def body(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


def test_eval_constant_order(capsys):
    code, out, _ = run(["eval", "--alpha", 0, "--nu", "real:0.5", "--x-grid", "0:5:50"], capsys)
    assert code == 0
    header, rows = wio.read_table(out)
    assert header == ["x", "bW"] and len(rows) == 50
    assert all(r[1] == pytest.approx(1.0, abs=1e-14) for r in rows)


def test_eval_golden_file(capsys, tmp_path):
    out = tmp_path / "w.csv"
    code, _, _ = run(["eval", "--alpha", 0, "--nu", "imag:1", "--x-grid", "0.1:10:100", "--out", out], capsys)
    assert code == 0
    golden = (DATA / "eval_alpha0_imag1.csv").read_text()
    assert body(out.read_text()) == body(golden)
    assert json.loads((tmp_path / "w.csv.manifest.json").read_text())["command"] == "eval"
    # the golden rows agree with Tricomi's U from mpmath
    _, rows = wio.read_table(golden)
    for x, v in (rows[0], rows[37], rows[99]):
        with mpmath.workdps(30):
            z = 1 / (2 * mpmath.mpf(x) ** 2)
            nu = 1j
            ref = (2 * mpmath.mpf(x) ** 2) ** (-0.5 - nu) * mpmath.hyperu(0.5 + nu, 1 + 2 * nu, z)
        assert v == pytest.approx(float(mpmath.re(ref)), rel=1e-8, abs=1e-13)


def test_exit_codes(capsys, tmp_path):
    assert run(["eval", "--alpha", 0.6, "--nu", "real:0.1", "--x-grid", "0:1:3"], capsys)[0] == 2
    assert run(["eval", "--nu", "complex:1", "--x-grid", "0:1:3"], capsys)[0] == 2
    assert run(["eval", "--nu", "real:0.1", "--x-grid=-1:1:3"], capsys)[0] == 2
    assert run(["convolve", "--a", "file:" + str(tmp_path / "missing.json"), "--b", "dirac:1"], capsys)[0] == 2
    assert run(["simulate", "--exponent", "gaussian:1", "--t", 1, "--paths", 0, "--seed", 1], capsys)[0] == 2
    with pytest.raises(SystemExit):
        main(["simulate", "--exponent", "gaussian:1", "--t", "1"])  # --seed is required
    capsys.readouterr()
    # a pure compound Poisson law has no density: numerical failure, exit 3
    out = tmp_path / "s.csv"
    code, _, err = run(["semigroup", "--exponent", "poisson:2:1", "--t", 0.5, "--out", out], capsys)
    assert code == 3 and "atom at 0" in err
    assert not out.exists() and not pathlib.Path(str(out) + ".manifest.json").exists()


def test_partial_outputs_removed(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise OSError("disk full")

    outs = wio.OutputSet()
    first = tmp_path / "a.txt"
    outs.write(str(first), "x")
    assert first.exists()
    with pytest.raises(OSError):
        with wio.output_set() as o:
            o.write(str(tmp_path / "b.txt"), "y")
            monkeypatch.setattr(os, "replace", boom)
            o.write(str(tmp_path / "c.txt"), "z")
    monkeypatch.undo()
    assert not (tmp_path / "b.txt").exists() and not (tmp_path / "c.txt").exists()
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


def test_convolve_identity(capsys, tmp_path):
    out = tmp_path / "c.json"
    code, _, _ = run(["convolve", "--a", "dirac:0", "--b", "dirac:2", "--out", out], capsys)
    assert code == 0
    obj = json.loads(out.read_text())
    assert obj["atoms"] == [{"x": 2.0, "w": 1.0}] and obj["grid"] == []
    mu = wio.read_measure(str(out))
    assert mu.atoms.locations.tolist() == [2.0]


def test_simulate_deterministic(capsys, tmp_path):
    args = ["simulate", "--exponent", "gaussian:1", "--t", 1, "--paths", 1000, "--seed", 7]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(args + ["--out", a], capsys)[0] == 0
    assert run(args + ["--out", b], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["seed"] == 7 and man["n_paths"] == 1000 and man["scheme"] == "ExactExpFunctional"
    assert run(args[:-1] + [8, "--out", b], capsys)[0] == 0
    assert a.read_bytes() != b.read_bytes()


def test_walk_shape(capsys, tmp_path):
    mu = tmp_path / "mu.json"
    mu.write_text(json.dumps(wio.measure_to_json(DiscreteMeasure([0.5, 1.0], [0.5, 0.5]))))
    out = tmp_path / "w.csv"
    code, _, _ = run(["walk", "--step", f"file:{mu}", "--n", 64, "--chains", 500, "--seed", 3, "--out", out], capsys)
    assert code == 0
    header, rows = wio.read_table(out.read_text())
    assert header == ["path_id", "t", "value"] and len(rows) == 500 * 65
    assert json.loads((tmp_path / "w.csv.manifest.json").read_text())["step"]["kind"] == "discrete"


def test_transform_invert_semigroup(capsys, tmp_path):
    code, out, _ = run(["transform", "--measure", "dirac:0", "--lambda-grid", "0:3:4"], capsys)
    assert code == 0 and all(r[1] == 1.0 for r in wio.read_table(out)[1])
    code, out, _ = run(["invert", "--fhat", "heat:0.5", "--x-grid", "0.5:2:3", "--format", "json"], capsys)
    assert code == 0 and all(v > 0 for v in json.loads(out)["value"])
    path = tmp_path / "mu.csv"
    code, _, _ = run(["semigroup", "--exponent", "gaussian:1", "--t", 0.5, "--out", path], capsys)
    assert code == 0
    mu = wio.measure_from_csv(path.read_text(), kind="density")
    assert mu.mass(Params(0.0)) == pytest.approx(1.0, abs=1e-3)


def test_verify_exit_and_report(capsys):
    code, out, _ = run(["verify", "kernel", "--alpha", 0], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["pass"] and all({"name", "value", "tol", "pass"} <= set(c) for c in rep["checks"])


def test_measure_roundtrips(tmp_path):
    p = Params(0.0)
    d = DiscreteMeasure([0.0, 0.3, 1.7], [0.2, 0.3, 0.5])
    back = wio.measure_from_json(wio.dumps(wio.measure_to_json(d)))
    assert np.array_equal(back.locations, d.locations) and np.array_equal(back.weights, d.weights)
    back = wio.measure_from_csv(wio.measure_to_csv(d))
    assert np.array_equal(back.locations, d.locations) and np.array_equal(back.weights, d.weights)
    g = np.geomspace(0.1, 5, 40)
    gd = GridDensity(g, np.exp(-g) / 3, atom_at_zero=0.1, atoms=DiscreteMeasure.dirac(2.0, 0.05))
    back = wio.measure_from_json(wio.dumps(wio.measure_to_json(gd)))
    assert np.max(np.abs(back.values - gd.values)) <= 1e-15
    assert back.atom_at_zero == 0.1 and back.atoms.weights.tolist() == [0.05]
    assert back.mass(p) == pytest.approx(gd.mass(p), rel=1e-15)
    plain = GridDensity(g, np.exp(-g), atom_at_zero=0.25)
    back = wio.measure_from_csv(wio.measure_to_csv(plain), kind="density")
    assert np.array_equal(back.values, plain.values) and back.atom_at_zero == 0.25
    f = tmp_path / "m.csv"
    f.write_text(wio.measure_to_csv(d))
    assert wio.read_measure(str(f)).mass == pytest.approx(1.0)


def test_threads_env(capsys, monkeypatch):
    monkeypatch.setenv("WHITCONV_THREADS", "1")
    assert run(["eval", "--nu", "real:0.2", "--x-grid", "0.5:1:2"], capsys)[0] == 0
    monkeypatch.setenv("WHITCONV_THREADS", "many")
    assert run(["eval", "--nu", "real:0.2", "--x-grid", "0.5:1:2"], capsys)[0] == 2


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "whitconv.cli", "eval", "--nu", "real:0.5", "--x-grid", "1:2:2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.startswith("# whitconv 0.1.0 format 1\n")
