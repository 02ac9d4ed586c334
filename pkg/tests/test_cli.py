import json

import numpy as np
import pytest

from ess.cli import main
from ess.matgen import power_system_spec, generate
from ess.sparse import load_vector, residual_norm, save_matrix_market, save_vector

SPEC = {"templates": [{"size": 4, "pattern": "dense"}, {"size": 5, "pattern": "arrow"}],
        "counts": [20, 12], "network_size": 35, "coupling_density": 0.25, "seed": 2,
        "ratio": [3, 5]}


@pytest.fixture
def corpus(tmp_path):
    d = tmp_path / "corpus"
    d.mkdir()
    for s in range(2):
        save_matrix_market(generate(power_system_spec(200, seed=s))[0], d / f"m{s}.mtx")
    return d


def test_gen_and_analyze(tmp_path, capsys):
    (tmp_path / "s.json").write_text(json.dumps(SPEC))
    m = tmp_path / "m.mtx"
    assert main(["gen", "--templates", str(tmp_path / "s.json"), "--out", str(m),
                 "--blockmap", str(tmp_path / "b.json")]) == 0
    assert len(json.loads((tmp_path / "b.json").read_text())["blocks"]) == 32
    capsys.readouterr()
    assert main(["analyze", str(m), "--blocks", "--border", "35",
                 "--json", str(tmp_path / "a.json")]) == 0
    out = capsys.readouterr().out
    assert "blocks       32" in out and "groups       2" in out and "reuse_ratio  16.000" in out
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc["n"] == 175 and len(doc["workloads"]) == doc["frontals"]


def test_analyze_natural(tmp_path, capsys):
    m = tmp_path / "m.mtx"
    save_matrix_market(generate(power_system_spec(100, seed=1))[0], m)
    assert main(["analyze", str(m), "--order", "natural", "--relax", "0"]) == 0
    assert "tree_height" in capsys.readouterr().out


def test_train_factor_solve(tmp_path, corpus, capsys):
    q = tmp_path / "q.json"
    assert main(["train", "--corpus", str(corpus), "--episodes", "6", "--threads", "2",
                 "--seed", "1", "--out", str(q)]) == 0
    assert json.loads(q.read_text())["version"] == "ess-q1"
    m = corpus / "m0.mtx"
    trace = tmp_path / "t.csv"
    assert main(["factor", str(m), "--threads", "2", "--qtable", str(q),
                 "--trace", str(trace)]) == 0
    assert trace.read_text().startswith("task_id,frontals,core,t_start_us,t_end_us,peak_bytes")
    a = generate(power_system_spec(200, seed=0))[0]
    b = np.linspace(-1, 1, a.n)
    save_vector(b, tmp_path / "b.mtx")
    assert main(["solve", str(m), "--rhs", str(tmp_path / "b.mtx"), "--out",
                 str(tmp_path / "x.mtx"), "--policy", "serial", "--threads", "2"]) == 0
    x = load_vector(tmp_path / "x.mtx")
    assert residual_norm(a, x, b) <= 1e-10


def test_factor_digest_stable_across_threads(corpus, capsys):
    digests = []
    for t in ("1", "3"):
        main(["factor", str(corpus / "m1.mtx"), "--threads", t])
        out = capsys.readouterr().out
        digests.append([ln for ln in out.splitlines() if ln.startswith("digest")][0])
    assert digests[0] == digests[1]


def test_bench(tmp_path, corpus, capsys):
    out = tmp_path / "r.csv"
    assert main(["bench", "--corpus", str(corpus), "--threads", "1", "--policies",
                 "serial,static", "--repeats", "3", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["matrix", "threads", "policy"]
    assert len(lines) == 1 + 2 * 1 * 2
    serial = [ln for ln in lines[1:] if ",serial," in ln]
    assert all(ln.split(",")[6] == "1.0" for ln in serial)


def test_errors(tmp_path, capsys):
    bad = tmp_path / "bad.mtx"
    bad.write_text("nonsense\n")
    assert main(["factor", str(bad)]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["bench", "--corpus", str(tmp_path), "--repeats", "2"]) == 1
    with pytest.raises(SystemExit):
        main(["factor"])
