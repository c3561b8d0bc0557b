import json
from types import SimpleNamespace

import numpy as np
import pytest

from polarsim import cli, dynamics
from polarsim.analysis import epsilon_base
from polarsim.dynamics import sample_inactive
from polarsim.geometry import DegenerateUpdate, save_config


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_simulate_outputs_and_determinism(tmp_path):
    args = ["simulate", "--n", 5, "--d", 3, "--seed", 7, "--max-steps", 2000,
            "--sample-every", 250]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    for name in ("trace.csv", "trace.meta.json", "final.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 7
    assert set(man) >= {"argv", "params", "code_version", "outputs"}


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("POLARSIM_SEED", "5")
    assert run("simulate", "--max-steps", 10, "--out", tmp_path) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 5


def test_replay_reproduces(tmp_path):
    assert run("simulate", "--seed", 3, "--max-steps", 500, "--sample-every", 100,
               "--out", tmp_path / "a") == 0
    assert run("replay", tmp_path / "a" / "manifest.json", "--out", tmp_path / "r") == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "r" / "trace.csv").read_bytes()


def test_input_errors_exit_2(tmp_path):
    assert run("simulate", "--bogus") == 2
    assert run("simulate", "--init", tmp_path / "missing.json", "--out", tmp_path) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert run("simulate", "--init", tmp_path / "bad.json", "--out", tmp_path) == 2
    assert run("simulate", "--stop-active", "1,2", "--out", tmp_path) == 2
    assert run("simulate", "--rule", "cubic", "--out", tmp_path) == 2
    assert run("replay", tmp_path / "nothing.json") == 2
    assert run("construct", "replay", "--out", tmp_path) == 2
    assert run("ensemble", "--runs", 0, "--out", tmp_path) == 2


def test_construct_precondition_errors(tmp_path):
    # a generic configuration is not clusterable
    assert run("construct", "consistency", "--seed", 0, "--out", tmp_path) == 2
    # one cluster only
    c, _ = sample_inactive(4, 3, 1, 1e-3, 1e-3, np.random.default_rng(0))
    save_config(tmp_path / "one.json", c, 1.0)
    assert run("construct", "amplify", "--init", tmp_path / "one.json", "--out", tmp_path) == 2


def test_construct_to_inactive_and_replay(tmp_path):
    assert run("construct", "to-inactive", "--seed", 2, "--execute", "--out", tmp_path / "c") == 0
    res = json.loads((tmp_path / "c" / "result.json").read_text())
    assert res["post_condition"] is True and res["analysis"]["inactive"]
    assert run("construct", "replay", "--seed", 2, "--schedule", tmp_path / "c" / "schedule.json",
               "--execute", "--out", tmp_path / "r") == 0
    assert (tmp_path / "c" / "post.json").read_bytes() == (tmp_path / "r" / "post.json").read_bytes()


def test_construct_collapse(tmp_path):
    eb = epsilon_base(3, 1.0)
    c, _ = sample_inactive(6, 3, 3, eb, eb, np.random.default_rng(1), min_cross=eb / 2)
    save_config(tmp_path / "c.json", c, 1.0)
    code = run("construct", "collapse", "--init", tmp_path / "c.json", "--eps", eb / 4,
               "--execute", "--out", tmp_path / "o")
    assert code == 0


def test_invariant_breach_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise DegenerateUpdate("forced")
    monkeypatch.setattr(dynamics, "simulate", boom)
    assert run("simulate", "--out", tmp_path) == 3


def test_post_condition_failure_exit_4(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "is_inactive", lambda *a, **k: SimpleNamespace(inactive=False))
    assert run("construct", "to-inactive", "--execute", "--out", tmp_path) == 4


def test_ensemble_summary(tmp_path):
    assert run("ensemble", "--runs", 6, "--n", 5, "--seed", 1, "--stop-polarized", 1e-6,
               "--max-steps", 20000, "--sample-every", 5000, "--jobs", 2,
               "--out", tmp_path) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["runs"] == 6 and 0 <= s["polarized_fraction"] <= 1
    assert sum(s["stop_reasons"].values()) == 6
    assert all(sum(x) == 5 for x in s["split_sizes"])


def test_ensemble_inactive_cross_activation(tmp_path):
    assert run("ensemble", "--runs", 5, "--init-kind", "inactive", "--stop-active",
               "1e-5,3e-3,20", "--max-steps", 200000, "--sample-every", 1000,
               "--out", tmp_path) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert set(s["cross_activation"]) == {"estimate", "wilson_interval", "bound"}
    assert len(s["epochs_nc"]) == 5


@pytest.mark.parametrize("verb,extra", [
    ("two-chain", ["--trials", 200]),
    ("azuma", ["--trials", 2000, "--t", 200]),
    ("block-check", ["--blocks", 10, "--replicas", 100]),
    ("dprime-scan", ["--configs", 50]),
])
def test_lab_verbs(tmp_path, verb, extra):
    assert run("lab", verb, *extra, "--out", tmp_path) == 0
    assert (tmp_path / f"{verb}.json").exists()
