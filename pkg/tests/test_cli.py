import json
import subprocess
import sys

import pytest

from rgcr.cli import main

SMALL = {
    "graph": {"kind": "small_world", "side": 5, "seed": 4},
    "replicates": 2, "mixture_sizes": [1, 4], "runs_per_node": 3, "gcr_clusterings": 2,
    "gcr_runs": 20, "k_probs": 2, "sides": [4, 5],
    "ring": {"n": 60, "k": [4, 6], "scaling_n": 200, "scaling_k": 10},
    "audit": {"exact_graphs": ["P3"], "mc_graphs": ["C12"], "reps": 2, "random_weight_draws": 1,
              "mc_K": [4, 8], "mc_reps": 5, "proxy_draws": 5},
}

COMMANDS = [
    ["gen"],
    ["gen", "--graph", "C12", "--format", "csv"],
    ["cluster", "--algo", "three_net", "--count", "3"],
    ["cluster", "--algo", "one_hop_max", "--count", "2", "--format", "csv"],
    ["probs", "--method", "stratified"],
    ["probs", "--method", "iid", "--algo", "three_net"],
    ["probs", "--method", "exact", "--graph", "C6", "--pairs"],
    ["probs", "--method", "stratified", "--pairs", "--cutoff", "2"],
    ["experiment", "mixture"],
    ["experiment", "estimator-sim", "--format", "csv"],
    ["experiment", "size-sweep"],
    ["ring-check"],
    ["audit", "--format", "csv"],
]


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return path


@pytest.mark.parametrize("cmd", COMMANDS, ids=lambda c: "-".join(x.strip("-") for x in c))
def test_rerun_is_byte_identical(cmd, config_file, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        assert main(cmd + ["--config", str(config_file), "--seed", "5", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0]


def test_seed_changes_output(config_file, tmp_path):
    texts = []
    for seed in ("1", "2"):
        out = tmp_path / f"c{seed}"
        main(["cluster", "--count", "5", "--graph", "C12", "--config", str(config_file),
              "--seed", seed, "--out", str(out)])
        texts.append(out.read_text())
    assert texts[0] != texts[1]


def test_reports_embed_resolved_config(config_file, tmp_path):
    out = tmp_path / "r.json"
    main(["ring-check", "--config", str(config_file), "--seed", "3", "--out", str(out)])
    rep = json.loads(out.read_text())
    assert rep["config"]["seed"] == 3
    assert rep["config"]["ring"]["n"] == 60
    assert rep["config"]["p"] == 0.5


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scheme": "complete", "p": 0.2}))
    assert main(["gen", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["gen", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["probs", "--method", "iid", "--pairs", "--graph", "C6"]) == 2


def test_stdout_and_console_script():
    res = subprocess.run([sys.executable, "-m", "rgcr.cli", "gen", "--graph", "P3"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout) == {"edges": [[0, 1], [1, 2]], "m": 2, "n": 3}
