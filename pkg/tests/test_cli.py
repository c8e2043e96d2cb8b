import hashlib
import json
import re

import pytest

from rnnrules.automata import deserialize, equivalent
from rnnrules.cli import run
from rnnrules.grammars import tomita_dfa

SIZES = ["--size", "train=200", "--size", "val=80", "--size", "test_bin0=60", "--size", "test_bin1=30"]
ERROR_LINE = re.compile(r"^error: [a-z-]+: \S.*$")


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def data(tmp_path):
    assert run(["gen-data", "--grammar", "tomita1", "--seed", "1", "--out", str(tmp_path / "d"), *SIZES]) == 0
    return tmp_path / "d" / "tomita1_seed1.jsonl"


def test_gen_data_is_deterministic(tmp_path, data):
    first = sha(data)
    assert run(["--seed", "1", "gen-data", "--grammar", "tomita1", "--out", str(tmp_path / "d"), *SIZES]) == 0
    assert sha(data) == first


def test_unknown_grammar_lists_choices(capsys):
    assert run(["gen-data", "--grammar", "tomita9"]) == 2
    err = capsys.readouterr().err
    assert "tomita1" in err and "dyck8" in err


def test_unknown_cell(capsys, data):
    assert run(["train", "--data", str(data), "--cell", "rnn"]) == 2
    assert "o2rnn" in capsys.readouterr().err


def test_train_extract_evaluate(tmp_path, data, capsys):
    out = tmp_path / "m"
    assert run(["train", "--data", str(data), "--cell", "o2rnn", "--mult", "2", "--lr", "0.5",
                "--max-iterations", "60", "--out", str(out)]) == 0
    meta = json.loads(capsys.readouterr().out)
    assert meta["grammar"] == "tomita1" and (out / "model.ckpt").exists()
    assert (out / "train_log.csv").read_text().startswith("iter,lr,train_loss,val_acc")

    for method in ("lstar", "kmeans"):
        assert run(["extract", "--method", method, "--model", str(out / "model.ckpt"),
                    "--data", str(data), "--out", str(tmp_path / "x")]) == 0
        res = json.loads(capsys.readouterr().out)
        dfa = deserialize((tmp_path / "x" / f"{method}.dfa.json").read_text())
        assert dfa.num_states == res["states"]
        stats = json.loads((tmp_path / "x" / f"{method}.stats.json").read_text())
        assert "test_bin0" in stats
        assert (tmp_path / "x" / f"{method}.dot").read_text().startswith("digraph")

    assert run(["evaluate", "--dfa", str(tmp_path / "x" / "kmeans.dfa.json"), "--model",
                str(out / "model.ckpt"), "--data", str(data)]) == 0
    acc = json.loads(capsys.readouterr().out)
    assert set(acc) == {"dfa", "model"} and 0 <= acc["dfa"]["val"] <= 1


def test_extract_regenerates_recorded_dataset(tmp_path, capsys):
    out = tmp_path / "m"
    assert run(["train", "--grammar", "tomita1", "--cell", "gru", "--max-iterations", "5",
                "--out", str(out), "--config", str(_sizes_config(tmp_path))]) == 0
    capsys.readouterr()
    assert run(["extract", "--method", "som", "--model", str(out / "model.ckpt"),
                "--config", str(_sizes_config(tmp_path)), "--out", str(tmp_path / "x")]) == 0


def _sizes_config(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text("[sizes]\ntrain = 100\nval = 50\ntest_bin0 = 40\ntest_bin1 = 20\n")
    return p


def test_errors_are_one_machine_line(tmp_path, data, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"alphabet": ')
    assert run(["evaluate", "--dfa", str(bad), "--data", str(data)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and ERROR_LINE.match(err[0]) and err[0].startswith("error: dfa-format:")

    assert run(["extract", "--method", "lstar", "--model", str(data)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: checkpoint:")

    assert run(["sweep"]) == 1
    assert capsys.readouterr().err.startswith("error: input:")


def test_ring(tmp_path, capsys):
    svg = tmp_path / "r.svg"
    csv = tmp_path / "r.csv"
    assert run(["ring", "--grammar", "tomita1", "--rings", "3", "--out", str(svg), "--csv", str(csv)]) == 0
    assert svg.exists()
    assert csv.read_text().splitlines()[1:5] == ["2,0,1", "2,1,0", "2,2,0", "2,3,0"]
    assert run(["ring", "--dfa", str(tmp_path / "nope.json")]) == 2


def test_ring_from_dfa_file(tmp_path):
    from rnnrules.automata import serialize

    p = tmp_path / "t4.json"
    p.write_text(serialize(tomita_dfa(4)))
    assert run(["ring", "--dfa", str(p), "--rings", "2", "--out", str(tmp_path / "t4.svg")]) == 0
    assert equivalent(deserialize(p.read_text()), tomita_dfa(4)) is None


def test_sweep_and_report(tmp_path, capsys):
    plan = tmp_path / "plan.toml"
    plan.write_text(f"""
grammars = ["tomita2"]
cells = ["o2rnn"]
multipliers = [1]
seeds = [0]
methods = ["kmeans"]
out = "{tmp_path / 'sweep'}"

[sizes]
train = 150
val = 60
test_bin0 = 40
test_bin1 = 20

[train]
batch_size = 64
max_iterations = 30
initial_lr = 0.5
""")
    assert run(["sweep", "--config", str(plan), "--no-figures"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["records"] == 1
    assert (tmp_path / "sweep" / "manifest.json").exists()
    report = tmp_path / "sweep" / "reports" / "report.csv"
    first = report.read_bytes()
    assert run(["report", "--runs", str(tmp_path / "sweep"), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "report.csv").read_bytes() == first
    assert (tmp_path / "again" / "figures" / "tomita2_accuracy.svg").exists()
