import json
import math
import os

import pandas as pd
import pytest
from conftest import REFERENCE_ENV_BLOCK, ROOT

from almab_cli import main
from almab_scaling import ScalingParams, closed_form_agents
from almab_svg import count_markers


def _simulate_config(T=10, replicates=1, active=False):
    runs = {"sequential": {"T": T, "N": 1, "ucb_c": 0.2}}
    data = {"seed": 3, "replicates": replicates, "environment": REFERENCE_ENV_BLOCK, "runs": runs}
    if active:
        data["gp"] = {"lengthscale": 0.1, "signal_var": 1.0, "noise_var": 0.01}
        data["acquisition"] = {"kind": "variance", "batch_size": 5, "direction": "maximize"}
        runs["active"] = {"T": T, "N": 1, "ucb_c": 0.2, "active_learning": True}
    return data


def _manifest(out):
    return json.loads((out / "manifest.json").read_text(encoding="utf-8"))


# ================== simulate ==================

def test_simulate_writes_history_and_charts(tmp_path, write_config):
    out = tmp_path / "out"
    assert main(["simulate", "--config", write_config(_simulate_config()), "--out", str(out)]) == 0
    lines = (out / "sequential_rep0.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 11
    assert lines[0].startswith("round,arm,agent_arms,reward_realized")
    assert (out / "sequential_aggregate.csv").exists()
    assert (out / "reward_sequential.svg").read_text(encoding="utf-8").startswith("<svg")
    assert count_markers((out / "landscape_sequential.svg").read_text(encoding="utf-8")) == 15
    m = _manifest(out)
    assert m["command"] == "simulate"
    assert m["csv_schema_version"] == 1
    assert json.loads((out / "events.json").read_text(encoding="utf-8"))["sequential"]["0"][0]["event"] == "RUN_STARTED"


def test_simulate_is_byte_identical_across_runs(tmp_path, write_config):
    path = write_config(_simulate_config(T=30, replicates=2))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", path, "--out", str(a)]) == 0
    assert main(["simulate", "--config", path, "--out", str(b)]) == 0
    for name in ("sequential_rep0.csv", "sequential_rep1.csv", "sequential_aggregate.csv", "landscape_sequential.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_override_changes_history(tmp_path, write_config):
    path = write_config(_simulate_config(T=30))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", path, "--out", str(a)]) == 0
    assert main(["simulate", "--config", path, "--out", str(b), "--seed", "99"]) == 0
    assert (a / "sequential_rep0.csv").read_bytes() != (b / "sequential_rep0.csv").read_bytes()


def test_simulate_active_learning_reports_residual(tmp_path, write_config):
    out = tmp_path / "out"
    assert main(["simulate", "--config", write_config(_simulate_config(T=25, active=True)), "--out", str(out)]) == 0
    summaries = {s["run"]: s for s in _manifest(out)["summaries"]}
    assert summaries["active"]["al_residual"] is not None
    assert summaries["active"]["q_T"] > 0
    assert summaries["sequential"]["al_residual"] is None


def test_progress_streams_json_lines(tmp_path, write_config, capsys):
    out = tmp_path / "out"
    assert main(["simulate", "--config", write_config(_simulate_config(T=8)), "--out", str(out), "--progress"]) == 0
    lines = [x for x in capsys.readouterr().out.splitlines() if x.strip()]
    parsed = [json.loads(x) for x in lines]
    assert [p["round"] for p in parsed] == list(range(1, 9))


# ================== compare ==================

def test_compare_writes_rows(tmp_path, write_config):
    data = {
        "seed": 1, "replicates": 2, "environment": REFERENCE_ENV_BLOCK,
        "runs": {"sequential": {"T": 10, "N": 1, "ucb_c": 0.2}, "distributed": {"T": 10, "N": 2, "ucb_c": 0.2}},
        "compare": {"eval_cost_ms": 1},
        "bootstrap": {"B": 200},
    }
    out = tmp_path / "out"
    assert main(["compare", "--config", write_config(data), "--out", str(out)]) == 0
    df = pd.read_csv(out / "compare.csv", dtype={"replicate": str})
    assert len(df) == 2 * 2 + 2
    agg = df[df["replicate"] == "aggregate"]
    assert sorted(agg["mode"]) == ["distributed", "sequential"]
    assert (agg["regret_ci_lower"] <= agg["regret_ci_upper"]).all()
    assert (out / "distributed_rep1.csv").exists()
    test = _manifest(out)["wilcoxon_paired_regret"]
    assert test["p_value"] is None and test["note"]


@pytest.mark.slow
def test_shipped_compare_reference_setup(tmp_path):
    out = tmp_path / "out"
    assert main(["compare", "--config", os.path.join(ROOT, "configs", "compare.json"), "--out", str(out)]) == 0
    df = pd.read_csv(out / "compare.csv", dtype={"replicate": str})
    agg = df[df["replicate"] == "aggregate"].set_index("mode")
    assert agg.loc["distributed", "speedup"] >= 2.0
    medians = _manifest(out)["median_regret"]
    assert medians["distributed"] < medians["sequential"]
    assert len(df) == 2 * 20 + 2


# ================== airfoil ==================

def test_airfoil_outputs(tmp_path, write_config):
    data = {
        "seed": 2, "replicates": 1,
        "environment": {"kind": "drag"},
        "gp": {"lengthscale": 0.35, "signal_var": 1.0, "noise_var": 0.1},
        "airfoil": {"initial_points": 3, "iterations": 2, "grid": 11, "workers": 2, "top_k": 3,
                    "cpu_counts": [1, 2]},
    }
    out = tmp_path / "out"
    assert main(["airfoil", "--config", write_config(data), "--out", str(out)]) == 0
    top = pd.read_csv(out / "airfoil_top.csv")
    assert list(top["rank"]) == list(range(1, len(top) + 1))
    assert top["drag"].is_monotonic_increasing
    assert len(pd.read_csv(out / "airfoil_samples.csv")) == 3 + 2 * 2
    assert list(pd.read_csv(out / "airfoil_aggregate.csv")["cpus"]) == [1, 2]
    assert count_markers((out / "airfoil.svg").read_text(encoding="utf-8")) == 2 * 7


def test_airfoil_needs_drag_environment(tmp_path, write_config):
    path = write_config(_simulate_config())
    assert main(["airfoil", "--config", path, "--out", str(tmp_path / "out")]) == 2


# ================== scaling ==================

def test_scaling_sweep_carries_optimal_agents(tmp_path, write_config):
    data = {"scaling": {"serial_fraction": 0.05, "comm_alpha": 0.01, "comm_beta": 0.5, "k_max": 50}}
    out = tmp_path / "out"
    assert main(["scaling", "--config", write_config(data), "--out", str(out)]) == 0
    df = pd.read_csv(out / "scaling.csv")
    assert list(df["K"]) == list(range(1, 51))
    expected = closed_form_agents(ScalingParams(serial_fraction=0.05, comm_alpha=0.01, comm_beta=0.5))
    assert df["k_star_closed"].iloc[0] == pytest.approx(expected, rel=1e-5)
    assert df["k_star_numeric_comm"].iloc[-1] == pytest.approx(expected, rel=1e-3)
    assert "k_star_numeric" not in df.columns
    kstar = _manifest(out)["optimal_agents"]
    assert kstar["k_star_closed"] == pytest.approx(expected)
    assert kstar["k_star_numeric_comm"] == pytest.approx(df["k_star_numeric_comm"].iloc[0], rel=1e-5)
    assert "k_star_eta_model" in kstar
    assert (out / "scaling.svg").read_text(encoding="utf-8").count('class="vline"') == 2


def test_scaling_without_finite_optimum_leaves_columns_blank(tmp_path, write_config):
    out = tmp_path / "out"
    path = write_config({"scaling": {"serial_fraction": 0.0, "k_max": 8}})
    assert main(["scaling", "--config", path, "--out", str(out)]) == 0
    df = pd.read_csv(out / "scaling.csv")
    assert df["k_star_closed"].isna().all()
    assert df["amdahl_speedup"].tolist() == pytest.approx(list(range(1, 9)))
    assert "note" in _manifest(out)["optimal_agents"]


# ================== analyze ==================

def test_analyze_summarizes_simulated_histories(tmp_path, write_config):
    data = _simulate_config(T=40, replicates=6)
    data["runs"]["distributed"] = {"T": 40, "N": 2, "ucb_c": 0.2}
    data["bootstrap"] = {"B": 200}
    path = write_config(data)
    sim, out = tmp_path / "sim", tmp_path / "summary"
    assert main(["simulate", "--config", path, "--out", str(sim)]) == 0
    assert main(["analyze", "--config", path, "--out", str(out), "--inputs", str(sim)]) == 0
    df = pd.read_csv(out / "summary.csv")
    assert len(df) == 3 * 2
    assert set(df["mode"]) == {"sequential", "distributed"}
    assert (df["n"] == 6).all()
    assert (df["lower"] <= df["upper"]).all()
    assert df[df["mode"] == "sequential"]["p_value"].isna().all()
    reward = df[(df["mode"] == "distributed") & (df["metric"] == "reward_mean_agents")]
    p = float(reward["p_value"].iloc[0])
    assert 0.0 <= p <= 1.0 and not math.isnan(p)
    assert _manifest(out)["modes"] == ["distributed", "sequential"]


def test_analyze_without_histories_is_config_error(tmp_path, write_config):
    empty = tmp_path / "empty"
    empty.mkdir()
    path = write_config(_simulate_config())
    assert main(["analyze", "--config", path, "--out", str(tmp_path / "o"), "--inputs", str(empty)]) == 2


# ================== exit codes ==================

def test_config_error_exit_code(tmp_path, write_config):
    path = write_config({"seed": 1, "bogus": True})
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "out")]) == 2


def test_unwritable_output_exit_code(tmp_path, write_config):
    blocker = tmp_path / "file.txt"
    blocker.write_text("x", encoding="utf-8")
    path = write_config(_simulate_config())
    assert main(["simulate", "--config", path, "--out", str(blocker)]) == 4


def test_unknown_command_is_rejected(write_config):
    with pytest.raises(SystemExit):
        main(["optimize", "--config", write_config(_simulate_config())])
