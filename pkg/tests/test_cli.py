import json
import math
import os
import subprocess
import sys

import pytest

from contactflex.cli import main

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")
sys.path.insert(0, GOLDEN)
from generate import CASES  # noqa: E402


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _close(a, b, path="$"):
    if isinstance(a, dict):
        assert set(a) == set(b), path
        for k in a:
            _close(a[k], b[k], f"{path}.{k}")
    elif isinstance(a, list):
        assert len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            _close(x, y, f"{path}[{i}]")
    elif isinstance(a, float) and isinstance(b, (int, float)):
        assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12), (path, a, b)
    else:
        assert a == b, path


@pytest.mark.parametrize("name", sorted(CASES))
def test_golden(name, capsys):
    code, out, _ = run(CASES[name], capsys)
    assert code == 0
    with open(os.path.join(GOLDEN, name)) as fh:
        _close(json.loads(out), json.load(fh))


def test_factorize_report(capsys):
    code, out, _ = run(["factorize", "--builtin", "reeb:0.2", "--eps", "0.5", "--box", "1"], capsys)
    d = json.loads(out)
    assert code == 0 and d["residual"] <= 1e-6 and d["eps"] == 0.5


def test_null_path_jsonl_then_verify(tmp_path, capsys):
    p = tmp_path / "np.jsonl"
    code, out, _ = run(["null-path", "--map", "(x, y+0.1, z)", "--auto-eps", "--grid", "5", "--times", "9",
                        "--out", str(p)], capsys)
    assert code == 0 and json.loads(out)["report"]["verdict"] == "null"
    code, out, _ = run(["verify", "--path", str(p), "--map", "(x, y+0.1, z)", "--expect", "null"], capsys)
    assert code == 0
    code, _, _ = run(["verify", "--path", str(p), "--expect", "positive"], capsys)
    assert code == 1
    code, _, _ = run(["verify", "--path", str(p), "--target", "(x, y+0.3, z)"], capsys)
    assert code == 1


def test_usage_errors(tmp_path, capsys):
    assert run(["verify", "--path", str(tmp_path / "missing.jsonl")], capsys)[0] == 2
    assert run([], capsys)[0] == 2
    assert run(["null-path", "--map", "(x, y)"], capsys)[0] == 2
    assert run(["null-path", "--map", "(x, y + w, z)"], capsys)[0] == 2
    assert run(["null-path", "--builtin", "nope:1"], capsys)[0] == 2
    assert run(["factorize", "--bogus"], capsys)[0] == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    assert run(["verify", "--path", str(bad)], capsys)[0] == 2


def test_library_failure_is_exit_1(capsys):
    code, out, _ = run(["factorize", "--builtin", "translate:1000,0,0", "--grid", "3"], capsys)
    assert code == 1 and json.loads(out)["error"] == "NoFeasibleEpsilon"


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": 3, "times": 5, "reeb-time": 0.25}))
    code, out, _ = run(["positive-path", "--config", str(cfg)], capsys)
    d = json.loads(out)
    assert code == 0 and d["reeb_time"] == 0.25 and d["report"]["meta"]["grid"] == 3
    code, out, _ = run(["positive-path", "--config", str(cfg), "--grid", "4"], capsys)
    assert json.loads(out)["report"]["meta"]["grid"] == 4
    cfg.write_text(json.dumps({"gird": 3}))
    assert run(["positive-path", "--config", str(cfg)], capsys)[0] == 2


def test_legendrian_commands(tmp_path, capsys):
    code, out, _ = run(["legendrian", "--kind", "positive", "--builtin", "reeb:0.3", "--reeb-time", "0.3",
                        "--grid", "5", "--times", "9"], capsys)
    d = json.loads(out)
    assert code == 0 and d["verdict"]["verdict"] == "positive"
    assert abs(d["verdict"]["min_alpha"] - 0.3) <= 1e-12
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "null", "map": "(x, y+0.1, z)"}))
    code, out, _ = run(["legendrian", "--path-from", str(spec), "--grid", "5", "--times", "9"], capsys)
    assert code == 0 and json.loads(out)["verdict"]["max_abs_alpha"] <= 1e-8


def test_connect(capsys):
    code, out, _ = run(["connect", "--family", "reeb:2", "--eps", "0.5", "--grid", "5", "--times", "9"], capsys)
    d = json.loads(out)
    assert code == 0 and d["subdivisions"] <= 64 and d["report"]["endpoint_error"] <= 1e-5


def test_output_is_deterministic(tmp_path):
    argv = [sys.executable, "-m", "contactflex", "null-path", "--map", "(x + 0.05*sin(y), y + 0.1*z, z)",
            "--grid", "5", "--times", "9", "--random-points", "10", "--seed", "3"]
    outs = []
    for k in range(2):
        p = tmp_path / f"r{k}.jsonl"
        res = subprocess.run(argv + ["--out", str(p)], capture_output=True, check=True)
        outs.append((res.stdout, p.read_bytes()))
    assert outs[0] == outs[1]
