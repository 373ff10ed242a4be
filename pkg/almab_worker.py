from __future__ import annotations
import asyncio
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from almab_bandit import (
    ArmStats,
    RegretLedger,
    cumulative_regret,
    delayed_regret_order,
    distributed_regret,
    effective_regret,
    new_arm_stats,
    realized_regret,
    sublinear_regret_order,
    suboptimal_gaps,
    thompson_select,
    ts_regret_order,
    ucb_regret_bound,
    ucb_select,
    update_mean,
)
from almab_config import thread_cap
from almab_env import ArmEnvironment, Stream, substream
from almab_errors import InputError
from almab_orchestrator import ActiveLearningStage
from almab_state import (
    Policy,
    RoundRecord,
    RunConfig,
    RunHistory,
    RunStatus,
    record_event,
    set_failed,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Report:
    issue_round: int
    apply_round: int
    arms: tuple
    rewards: tuple
    reward_mean: float


async def gather_in_order(pool: Optional[ThreadPoolExecutor], calls: Sequence[Callable[[], Any]]) -> List[Any]:
    """Выполняет вызовы (параллельно, если есть пул); результаты в порядке вызовов."""
    if pool is None:
        return [c() for c in calls]
    loop = asyncio.get_running_loop()
    futs = [loop.run_in_executor(pool, c) for c in calls]
    return list(await asyncio.gather(*futs))


# ------------------- WORKER -------------------
class AlmabWorker:
    """
    Контроллер цикла оптимизации. Владеет ArmStats, леджером и очередью
    отложенных отчётов; агенты - stateless-оценки окружения со своими подпотоками.
    """

    def __init__(
        self,
        env: ArmEnvironment,
        config: RunConfig,
        notify_text: Callable[[str], Any] = lambda text: None,
        progress: bool = False,
    ):
        self.env = env
        self.config = config
        self.notify_text = notify_text
        self.progress = progress
        self.stage = (
            ActiveLearningStage(env, config.acquisition, config.gp, notify_text=self._safe_notify)
            if config.acquisition is not None else None
        )
        self._pool: Optional[ThreadPoolExecutor] = None
        self._stats: ArmStats = new_arm_stats(env.n_arms)
        self._pending: List[_Report] = []
        self._comm_cum = 0.0

    async def _safe_notify(self, text: str):
        try:
            r = self.notify_text(text)
            if asyncio.iscoroutine(r):
                await r
        except Exception:
            logger.exception("notify failed")

    # loop
    async def run(self) -> RunHistory:
        cfg = self.config
        means = self.env.true_means()
        history = RunHistory(mode=cfg.mode, config=cfg, arm_means=means,
                             ledger=RegretLedger(means, lam=cfg.lam))
        self.history = history
        self._agent_rngs = [substream(cfg.seed, Stream.AGENTS, j) for j in range(cfg.N)]
        self._policy_rng = substream(cfg.seed, Stream.POLICY)
        self._delay_rng = substream(cfg.seed, Stream.DELAYS)
        self._binarize_rng = substream(cfg.seed, Stream.BINARIZE)

        history.status = RunStatus.RUNNING
        record_event(history, "RUN_STARTED", {"mode": cfg.mode.value, "T": cfg.T, "N": cfg.N,
                                              "policy": cfg.policy.value, "seed": cfg.seed,
                                              "exploration_c": cfg.exploration_c}, 0)
        logger.info("run started mode=%s T=%s N=%s policy=%s seed=%s", cfg.mode.value, cfg.T, cfg.N,
                    cfg.policy.value, cfg.seed)

        if cfg.emulate_cost and self.env.eval_cost_ms > 0:
            self._pool = ThreadPoolExecutor(max_workers=thread_cap(cfg.N), thread_name_prefix="almab-agent")
        t0 = time.perf_counter()
        try:
            for t in range(1, cfg.T + 1):
                await self._tick(t)
        except Exception as e:
            set_failed(history, str(e))
            record_event(history, "RUN_FAILED", {"error": str(e)})
            raise
        finally:
            if self._pool is not None:
                self._pool.shutdown(wait=True)
                self._pool = None
        history.wall_clock_s = time.perf_counter() - t0
        history.final_stats = self._stats
        history.status = RunStatus.DONE
        record_event(history, "RUN_FINISHED", {"applied_updates": history.applied_updates,
                                               "dropped_reports": len(self._pending), "q_T": history.q_T})
        logger.info("run finished mode=%s applied=%s dropped=%s regret=%.6g wall_s=%.3f", cfg.mode.value,
                    history.applied_updates, len(self._pending), cumulative_regret(history.ledger),
                    history.wall_clock_s)
        return history

    async def _tick(self, t: int):
        cfg, history = self.config, self.history
        subset = await self.stage.step(self._stats, history, t) if self.stage is not None else None
        narrowed = subset is not None and len(subset) < self.env.n_arms
        if narrowed:
            history.q_T += 1

        arms = self._select(t, subset)
        calls = [
            (lambda a=a, rng=rng: self.env.pull(a, rng, emulate_cost=cfg.emulate_cost))
            for a, rng in zip(arms, self._agent_rngs)
        ]
        rewards = [float(r) for r in await gather_in_order(self._pool, calls)]
        r_bar = float(np.mean(rewards))

        delay = int(self._delay_rng.integers(0, cfg.delay_max + 1))
        report = _Report(t, t + delay, tuple(arms), tuple(rewards), r_bar)
        self._pending.append(report)
        c_t = self._apply_due(t)
        self._comm_cum += c_t

        history.ledger.append(t, arms, rewards, c_t)
        inc = max(history.mu_star - float(np.mean(history.arm_means[arms])), 0.0)
        history.records.append(RoundRecord(
            round=t, arm=arms[0], agent_arms=tuple(arms), rewards=tuple(rewards), reward_mean=r_bar,
            regret_increment=inc, issue_round=t, apply_round=report.apply_round, comm_cost=c_t,
            wall_ms=self.env.eval_cost_ms, narrowed=narrowed,
        ))
        if self.progress:
            await self._safe_notify(json.dumps({
                "mode": cfg.mode.value, "seed": cfg.seed, "round": t, "arm": arms[0],
                "reward_mean": round(r_bar, 6), "regret_increment": round(inc, 6),
            }, separators=(",", ":")))

    def _pick(self, t: int, subset: Optional[List[int]], claimed: Optional[np.ndarray]) -> int:
        cfg = self.config
        if cfg.policy is Policy.UCB:
            return ucb_select(self._stats, t, cfg.exploration_c, candidates=subset, virtual_pulls=claimed)
        return thompson_select(self._stats, self._policy_rng, cfg.reward_model, candidates=subset)

    def _select(self, t: int, subset: Optional[List[int]]) -> List[int]:
        cfg = self.config
        if not cfg.independent_agents:
            return [self._pick(t, subset, None)] * cfg.N
        # каждый агент выбирает сам; уже занятые в раунде руки несут виртуальное вытягивание
        claimed = np.zeros(self.env.n_arms)
        arms = []
        for _ in range(cfg.N):
            a = self._pick(t, subset, claimed)
            claimed[a] += 1
            arms.append(a)
        return arms

    def _apply_due(self, t: int) -> float:
        cfg, history = self.config, self.history
        due = [r for r in self._pending if r.apply_round <= t]
        if not due:
            return 0.0
        self._pending = [r for r in self._pending if r.apply_round > t]
        c_t = 0.0
        for rep in due:
            if cfg.independent_agents:
                for a, r in zip(rep.arms, rep.rewards):
                    self._stats = update_mean(self._stats, a, r, cfg.reward_model, self._binarize_rng)
                history.applied_updates += len(rep.arms)
            else:
                self._stats = update_mean(self._stats, rep.arms[0], rep.reward_mean, cfg.reward_model,
                                          self._binarize_rng)
                history.applied_updates += 1
            c_t += cfg.N * cfg.comm_cost_per_report
            if rep.apply_round > rep.issue_round:
                record_event(history, "FEEDBACK_APPLIED_LATE",
                             {"issue_round": rep.issue_round, "delay": rep.apply_round - rep.issue_round}, t)
        return c_t


# ------------------- ENTRY POINTS -------------------

def _run(env: ArmEnvironment, config: RunConfig, notify_text: Optional[Callable[[str], Any]],
         progress: bool) -> RunHistory:
    worker = AlmabWorker(env, config, notify_text=notify_text or (lambda text: None), progress=progress)
    return asyncio.run(worker.run())


def run_sequential(env: ArmEnvironment, config: RunConfig,
                   notify_text: Optional[Callable[[str], Any]] = None, progress: bool = False) -> RunHistory:
    if config.N != 1:
        raise InputError(f"sequential run needs N = 1, got N = {config.N}")
    return _run(env, config, notify_text, progress)


def run_distributed(env: ArmEnvironment, config: RunConfig,
                    notify_text: Optional[Callable[[str], Any]] = None, progress: bool = False) -> RunHistory:
    return _run(env, config, notify_text, progress)


def run_any(env: ArmEnvironment, config: RunConfig,
            notify_text: Optional[Callable[[str], Any]] = None, progress: bool = False) -> RunHistory:
    if config.N == 1 and not config.independent_agents:
        return run_sequential(env, config, notify_text, progress)
    return run_distributed(env, config, notify_text, progress)


# ------------------- REPORTING -------------------

def regret_summary(history: RunHistory, baseline: Optional[RunHistory] = None) -> Dict[str, Any]:
    """Регрет-метрики прогона и оценочные порядки границ (только отчёт)."""
    cfg = history.config
    T, A = cfg.T, history.arm_means.shape[0]
    gaps = suboptimal_gaps(history.arm_means)
    cum = cumulative_regret(history.ledger)
    out: Dict[str, Any] = {
        "mode": history.mode.value,
        "seed": cfg.seed,
        "T": T,
        "N": cfg.N,
        "cumulative_regret": cum,
        "distributed_regret": distributed_regret(history.ledger, cfg.N),
        "effective_regret": effective_regret(history.ledger, cfg.N),
        "realized_regret": realized_regret(history.ledger),
        "comm_cost_total": history.total_comm_cost(),
        "applied_updates": history.applied_updates,
        "mean_reward": history.mean_reward(),
        "q_T": history.q_T,
        "ucb_bound": None,
        "ts_order": None,
        "sublinear_order": None,
        "delayed_order": None,
        "al_residual": None,
    }
    if T >= 2:
        out["sublinear_order"] = sublinear_regret_order(T, A)
        out["delayed_order"] = delayed_regret_order(T, A, cfg.delay_max)
        if gaps:
            out["ucb_bound"] = ucb_regret_bound(gaps, T)
            out["ts_order"] = ts_regret_order(gaps, T)
    if baseline is not None:
        out["al_residual"] = cum - cumulative_regret(baseline.ledger)
    return out


@dataclass(frozen=True)
class CompareResult:
    sequential: RunHistory
    distributed: RunHistory
    speedup: float
    wall_ratio: float

    def rows(self) -> List[Dict[str, Any]]:
        out = []
        for h in (self.sequential, self.distributed):
            out.append({
                "mode": h.mode.value,
                "seed": h.config.seed,
                "wall_clock_s": h.wall_clock_s,
                "cumulative_regret": cumulative_regret(h.ledger),
                "mean_reward": h.mean_reward(),
                "speedup": 1.0 if h is self.sequential else self.speedup,
                "wall_ratio": 1.0 if h is self.sequential else self.wall_ratio,
            })
        return out


def wall_clock_compare(env_with_cost: ArmEnvironment, config_seq: RunConfig, config_dist: RunConfig,
                       notify_text: Optional[Callable[[str], Any]] = None) -> CompareResult:
    """
    Оба режима с эмуляцией стоимости оценки. speedup нормирован на объём работы:
    (T_seq / evals_seq) · evals_dist / T_dist; сырое отношение - wall_ratio.
    """
    if config_seq.T != config_dist.T or config_seq.seed != config_dist.seed:
        raise InputError("compared runs must share T and seed")
    if env_with_cost.eval_cost_ms <= 0:
        raise InputError("wall-clock comparison needs an evaluation cost > 0")
    seq = _run(env_with_cost, config_seq.replace(emulate_cost=True), notify_text, False)
    dist = _run(env_with_cost, config_dist.replace(emulate_cost=True), notify_text, False)
    per_eval = seq.wall_clock_s / max(seq.evaluations(), 1)
    speedup = per_eval * dist.evaluations() / dist.wall_clock_s if dist.wall_clock_s > 0 else float("inf")
    wall_ratio = seq.wall_clock_s / dist.wall_clock_s if dist.wall_clock_s > 0 else float("inf")
    logger.info("compare seed=%s seq_s=%.3f dist_s=%.3f speedup=%.3f", config_seq.seed, seq.wall_clock_s,
                dist.wall_clock_s, speedup)
    return CompareResult(seq, dist, speedup, wall_ratio)
