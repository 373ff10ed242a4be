# -*- coding: utf-8 -*-
"""
almab_cli.py
Подкоманды эксперимента: simulate, compare, airfoil, scaling, analyze.
Коды выхода: 0 успех, 2 ошибка конфига, 3 численная ошибка, 4 ошибка ввода-вывода.
"""

from __future__ import annotations

import argparse
import logging
import re
from collections import defaultdict
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from almab_airfoil import run_airfoil
from almab_config import ALMAB_OUT_DIR, ALMAB_PROGRESS, ExperimentConfig, load_config
from almab_env import MixtureArms, true_mixture_mean
from almab_errors import AlmabError, ConfigError, ExitCode, NumericalError
from almab_history_repo import CSV_SCHEMA_VERSION, HistoryRepo
from almab_scaling import optimal_agents, scaling_rows
from almab_stats import bootstrap_ci, wilcoxon_signed_rank
from almab_state import RunHistory
from almab_svg import Series, line_chart
from almab_worker import regret_summary, run_any, wall_clock_compare

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "compare", "airfoil", "scaling", "analyze")

Notify = Callable[[str], Any]


def _print_line(text: str):
    print(text, flush=True)


# ================== simulate ==================

def _aggregate(frames: List[pd.DataFrame]) -> pd.DataFrame:
    allf = pd.concat(frames, ignore_index=True)
    g = allf.groupby("round", sort=True)
    out = pd.DataFrame({
        "round": sorted(allf["round"].unique()),
        "reward_mean": g["reward_mean_agents"].mean().to_numpy(),
        "reward_sd": g["reward_mean_agents"].std(ddof=0).to_numpy(),
        "regret_pseudo_cum_mean": g["regret_pseudo_cum"].mean().to_numpy(),
        "regret_pseudo_cum_sd": g["regret_pseudo_cum"].std(ddof=0).to_numpy(),
        "regret_realized_cum_mean": g["regret_realized_cum"].mean().to_numpy(),
        "replicates": g.size().to_numpy(),
    })
    return out


def _landscape_svg(name: str, env, histories: List[RunHistory]) -> str:
    means = env.true_means()
    A = env.n_arms
    mu_hat = np.mean([h.final_stats.mean_hat for h in histories], axis=0)
    if isinstance(env, MixtureArms) and env.spec.dim == 1:
        lo, hi = env.box.lower[0], env.box.upper[0]
        xs = np.linspace(lo, hi, 401)
        curve = [true_mixture_mean([x], env.spec) for x in xs]
        arm_x = [c.coords[0] for c in env.candidates]
        xlabel = "x"
    else:
        xs = np.arange(A, dtype=float)
        curve = means
        arm_x = list(xs)
        xlabel = "arm"
    return line_chart(
        f"True reward landscape and estimated arm values ({name})", xlabel, "reward",
        [Series("true mean", list(xs), list(curve)), Series("final mean estimate", arm_x, list(mu_hat), kind="markers")],
    )


def cmd_simulate(cfg: ExperimentConfig, repo: HistoryRepo, notify: Optional[Notify] = None,
                 progress: bool = False) -> Dict[str, Any]:
    if not cfg.runs:
        raise ConfigError("simulate needs at least one entry under runs", key="runs")
    env = cfg.environment.build_arms()
    events: Dict[str, Any] = {}
    summaries: List[Dict[str, Any]] = []
    for name in cfg.runs:
        frames, histories = [], []
        for r in range(cfg.replicates):
            rc = cfg.run_config(name, r)
            hist = run_any(env, rc, notify, progress)
            baseline = None
            if rc.acquisition is not None:
                baseline = run_any(env, rc.replace(acquisition=None))
            frame = repo.write_history(f"{name}_rep{r}.csv", hist)
            frames.append(frame)
            histories.append(hist)
            s = regret_summary(hist, baseline)
            s.update({"run": name, "replicate": r})
            summaries.append(s)
            events.setdefault(name, {})[str(r)] = hist.events
        agg = _aggregate(frames)
        repo.write_csv(f"{name}_aggregate.csv", agg)
        repo.write_text(f"reward_{name}.svg", line_chart(
            f"Observed reward per iteration ({name}, {cfg.replicates} replicates)", "iteration", "mean reward",
            [Series("mean reward", agg["round"].tolist(), agg["reward_mean"].tolist()),
             Series("regret / T", agg["round"].tolist(), (agg["regret_pseudo_cum_mean"] / agg["round"]).tolist())],
        ))
        repo.write_text(f"landscape_{name}.svg", _landscape_svg(name, env, histories))
    repo.write_json("events.json", events)
    manifest = repo.update_manifest({"command": "simulate", "config": cfg.to_dict(), "summaries": summaries})
    logger.info("simulate done runs=%s replicates=%s out=%s", list(cfg.runs), cfg.replicates, repo.root)
    return manifest


# ================== compare ==================

COMPARE_COLUMNS = ["mode", "replicate", "wall_clock_s", "cumulative_regret", "mean_reward", "speedup",
                   "wall_ratio", "regret_ci_lower", "regret_ci_upper", "speedup_ci_lower", "speedup_ci_upper"]


def cmd_compare(cfg: ExperimentConfig, repo: HistoryRepo, notify: Optional[Notify] = None) -> Dict[str, Any]:
    cs = cfg.compare
    env = cfg.environment.build_arms().with_cost(cs.eval_cost_ms)
    rows: List[Dict[str, Any]] = []
    per_mode: Dict[str, List[Dict[str, Any]]] = defaultdict(list)
    for r in range(cfg.replicates):
        res = wall_clock_compare(env, cfg.run_config(cs.sequential, r), cfg.run_config(cs.distributed, r), notify)
        repo.write_history(f"{cs.sequential}_rep{r}.csv", res.sequential)
        repo.write_history(f"{cs.distributed}_rep{r}.csv", res.distributed)
        for label, row in zip((cs.sequential, cs.distributed), res.rows()):
            row = dict(row, mode=label, replicate=str(r))
            row.pop("seed", None)
            rows.append(row)
            per_mode[label].append(row)

    boot = cfg.bootstrap
    medians: Dict[str, float] = {}
    for label, mrows in per_mode.items():
        regrets = [m["cumulative_regret"] for m in mrows]
        speeds = [m["speedup"] for m in mrows]
        rci = bootstrap_ci(regrets, boot)
        sci = bootstrap_ci(speeds, boot)
        medians[label] = float(np.median(regrets))
        rows.append({
            "mode": label,
            "replicate": "aggregate",
            "wall_clock_s": float(np.mean([m["wall_clock_s"] for m in mrows])),
            "cumulative_regret": rci.estimate,
            "mean_reward": float(np.mean([m["mean_reward"] for m in mrows])),
            "speedup": sci.estimate,
            "wall_ratio": float(np.mean([m["wall_ratio"] for m in mrows])),
            "regret_ci_lower": rci.lower,
            "regret_ci_upper": rci.upper,
            "speedup_ci_lower": sci.lower,
            "speedup_ci_upper": sci.upper,
        })
    repo.write_csv("compare.csv", rows, COMPARE_COLUMNS)

    test: Dict[str, Any] = {"wilcoxon_w": None, "p_value": None, "note": ""}
    seq_r = [m["cumulative_regret"] for m in per_mode[cs.sequential]]
    dist_r = [m["cumulative_regret"] for m in per_mode[cs.distributed]]
    try:
        w = wilcoxon_signed_rank(seq_r, dist_r)
        test.update(wilcoxon_w=w.statistic, p_value=w.p_value, n=w.n)
    except AlmabError as e:
        test["note"] = str(e)
        logger.warning("compare wilcoxon skipped reason=%s", e)
    manifest = repo.update_manifest({"command": "compare", "config": cfg.to_dict(), "median_regret": medians,
                                     "wilcoxon_paired_regret": test})
    logger.info("compare done replicates=%s medians=%s p=%s", cfg.replicates, medians, test["p_value"])
    return manifest


# ================== airfoil ==================

TOP_COLUMNS = ["replicate", "rank", "camber", "thickness", "drag", "posterior_sd", "drag_observed"]
SAMPLE_COLUMNS = ["replicate", "index", "iteration", "worker", "camber", "thickness", "drag_observed"]
AGGREGATE_COLUMNS = ["cpus", "drag_mean", "drag_std", "runtime_mean_s", "runtime_std_s", "count"]


def cmd_airfoil(cfg: ExperimentConfig, repo: HistoryRepo, notify: Optional[Notify] = None) -> Dict[str, Any]:
    if cfg.environment.kind != "drag":
        raise ConfigError("airfoil needs environment.kind = drag", key="kind")
    spec, st = cfg.environment.drag, cfg.airfoil
    top_rows, sample_rows, bests = [], [], []
    for r in range(cfg.replicates):
        res = run_airfoil(spec, st, cfg.gp, cfg.seed + r, notify_text=notify or (lambda text: None))
        top_rows.extend(dict(row, replicate=r) for row in res.top)
        sample_rows.extend({"replicate": r, "index": s.index, "iteration": s.iteration, "worker": s.worker,
                            "camber": s.camber, "thickness": s.thickness, "drag_observed": s.drag_observed}
                           for s in res.samples)
        bests.append(res.best)
    repo.write_csv("airfoil_top.csv", top_rows, TOP_COLUMNS)
    repo.write_csv("airfoil_samples.csv", sample_rows, SAMPLE_COLUMNS)

    first = [s for s in sample_rows if s["replicate"] == 0]
    repo.write_text("airfoil.svg", line_chart(
        "Parameter values vs. drag coefficient", "parameter value", "drag",
        [Series("camber", [s["camber"] for s in first], [s["drag_observed"] for s in first], kind="markers"),
         Series("thickness", [s["thickness"] for s in first], [s["drag_observed"] for s in first], kind="markers")],
    ))

    aggregate = []
    for cpus in st.cpu_counts:
        drags, times = [], []
        for r in range(cfg.replicates):
            res = run_airfoil(spec, st, cfg.gp, cfg.seed + r, workers=cpus)
            drags.append(res.best["drag"])
            times.append(res.runtime_s)
        ddof = 1 if len(drags) > 1 else 0
        aggregate.append({"cpus": cpus, "drag_mean": float(np.mean(drags)), "drag_std": float(np.std(drags, ddof=ddof)),
                          "runtime_mean_s": float(np.mean(times)), "runtime_std_s": float(np.std(times, ddof=ddof)),
                          "count": len(drags)})
    if aggregate:
        repo.write_csv("airfoil_aggregate.csv", aggregate, AGGREGATE_COLUMNS)
    manifest = repo.update_manifest({"command": "airfoil", "config": cfg.to_dict(), "best": bests})
    logger.info("airfoil done replicates=%s best_drag=%s", cfg.replicates, [round(b["drag"], 6) for b in bests])
    return manifest


# ================== scaling ==================

def cmd_scaling(cfg: ExperimentConfig, repo: HistoryRepo) -> Dict[str, Any]:
    params, k_max = cfg.scaling.params, cfg.scaling.k_max
    rows = scaling_rows(params, range(1, k_max + 1))
    kstar: Dict[str, Any] = {}
    try:
        opt = optimal_agents(params)
        kstar = opt.to_dict()
    except NumericalError as e:
        kstar = {"note": str(e)}
        logger.warning("optimal agents undefined reason=%s", e)
    for row in rows:
        row["k_star_closed"] = kstar.get("k_star_closed", np.nan)
        row["k_star_numeric_comm"] = kstar.get("k_star_numeric_comm", np.nan)
    repo.write_csv("scaling.csv", rows)

    ks = [row["K"] for row in rows]
    vlines = []
    if "k_star_closed" in kstar:
        vlines = [(kstar["k_star_closed"], "K* closed form"),
                  (kstar["k_star_numeric_comm"], "K* numeric (comm model)")]
    repo.write_text("scaling.svg", line_chart(
        "Speedup and parallel efficiency vs. agents", "agents K", "speedup / efficiency",
        [Series("Amdahl S(K)", ks, [row["amdahl_speedup"] for row in rows]),
         Series("Gustafson S_G(K)", ks, [row["gustafson_speedup"] for row in rows]),
         Series("efficiency eta(K)", ks, [row["efficiency"] for row in rows])],
        vlines,
    ))
    return repo.update_manifest({"command": "scaling", "config": cfg.to_dict(), "optimal_agents": kstar})


# ================== analyze ==================

SUMMARY_COLUMNS = ["metric", "mode", "n", "estimate", "lower", "upper", "wilcoxon_w", "p_value"]
_REP_RE = re.compile(r"^(?P<mode>.+)_rep(?P<rep>\d+)\.csv$")


def _metric_value(df: pd.DataFrame, metric: str) -> float:
    if metric not in df.columns:
        raise ConfigError(f"history has no column {metric!r}", key="metrics")
    col = df[metric]
    return float(col.iloc[-1]) if metric.endswith("_cum") else float(col.mean())


def cmd_analyze(cfg: ExperimentConfig, repo: HistoryRepo, inputs: HistoryRepo) -> Dict[str, Any]:
    groups: Dict[str, Dict[int, pd.DataFrame]] = defaultdict(dict)
    for name in inputs.list_histories():
        m = _REP_RE.match(name)
        if m:
            groups[m.group("mode")][int(m.group("rep"))] = inputs.read_csv(name)
    if not groups:
        raise ConfigError(f"no run-history CSVs found in {inputs.root}")
    an = cfg.analyze
    rows = []
    for metric in an.metrics:
        values = {mode: {rep: _metric_value(df, metric) for rep, df in reps.items()} for mode, reps in groups.items()}
        base = values.get(an.baseline)
        for mode in sorted(values):
            reps = values[mode]
            ci = bootstrap_ci([reps[k] for k in sorted(reps)], cfg.bootstrap, an.statistic)
            row = {"metric": metric, "mode": mode, "n": len(reps), "estimate": ci.estimate, "lower": ci.lower,
                   "upper": ci.upper, "wilcoxon_w": np.nan, "p_value": np.nan}
            if base is not None and mode != an.baseline:
                common = sorted(set(base) & set(reps))
                try:
                    w = wilcoxon_signed_rank([base[k] for k in common], [reps[k] for k in common])
                    row.update(wilcoxon_w=w.statistic, p_value=w.p_value)
                except AlmabError as e:
                    logger.warning("analyze wilcoxon skipped metric=%s mode=%s reason=%s", metric, mode, e)
            rows.append(row)
    repo.write_csv("summary.csv", rows, SUMMARY_COLUMNS)
    return repo.update_manifest({"command": "analyze", "config": cfg.to_dict(), "inputs": str(inputs.root),
                                 "modes": sorted(groups)})


# ================== main ==================

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="run_almab.py", description="Distributed bandit-driven black-box optimization")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="experiment JSON config")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="base seed (overrides config)")
    p.add_argument("--replicates", type=int, default=None, help="replicate count (overrides config)")
    p.add_argument("--inputs", default=None, help="directory with run-history CSVs (analyze)")
    p.add_argument("--progress", action="store_true", help="stream per-round progress as JSON lines")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.replicates)
        out_dir = args.out or cfg.output_dir or ALMAB_OUT_DIR
        repo = HistoryRepo(out_dir)
        progress = args.progress or ALMAB_PROGRESS
        notify = _print_line if progress else None
        logger.info("command=%s config=%s out=%s seed=%s replicates=%s", args.command, args.config, out_dir,
                    cfg.seed, cfg.replicates)
        if args.command == "simulate":
            cmd_simulate(cfg, repo, notify, progress)
        elif args.command == "compare":
            cmd_compare(cfg, repo, notify)
        elif args.command == "airfoil":
            cmd_airfoil(cfg, repo, notify)
        elif args.command == "scaling":
            cmd_scaling(cfg, repo)
        else:
            cmd_analyze(cfg, repo, HistoryRepo(args.inputs or out_dir))
    except AlmabError as e:
        logger.error("%s failed code=%s error=%s", args.command, int(e.exit_code), e)
        return int(e.exit_code)
    except OSError as e:
        logger.error("%s failed io error=%s", args.command, e)
        return int(ExitCode.IO)
    return int(ExitCode.OK)


__all__ = ["main", "cmd_simulate", "cmd_compare", "cmd_airfoil", "cmd_scaling", "cmd_analyze",
           "CSV_SCHEMA_VERSION"]
