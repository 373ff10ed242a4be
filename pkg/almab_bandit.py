# -*- coding: utf-8 -*-
"""
almab_bandit.py
Статистика рук, политики UCB1 / Thompson, регрет-леджеры и замкнутые формулы границ.

ArmStats - значение: update_mean возвращает новую копию, исходный объект
не меняется (снимки безопасно передавать между потоками).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from almab_errors import InputError

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"
REWARD_MODELS = (GAUSSIAN, BERNOULLI)

TS_VARIANCE_FLOOR = 0.01
TS_PRIOR_VARIANCE = 1.0


# ================== Arm statistics ==================

@dataclass(frozen=True, eq=False)
class ArmStats:
    mean_hat: np.ndarray
    pulls: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    m2: np.ndarray  # сумма квадратов отклонений (Welford)

    @property
    def n_arms(self) -> int:
        return int(self.pulls.shape[0])

    @property
    def total_pulls(self) -> int:
        return int(self.pulls.sum())

    def sample_variance(self) -> np.ndarray:
        var = np.full(self.n_arms, TS_PRIOR_VARIANCE)
        many = self.pulls >= 2
        var[many] = self.m2[many] / (self.pulls[many] - 1)
        return np.maximum(var, TS_VARIANCE_FLOOR)


def new_arm_stats(n_arms: int) -> ArmStats:
    if n_arms < 1:
        raise InputError("arm count must be >= 1")
    return ArmStats(
        mean_hat=np.zeros(n_arms),
        pulls=np.zeros(n_arms, dtype=np.int64),
        alpha=np.ones(n_arms),
        beta=np.ones(n_arms),
        m2=np.zeros(n_arms),
    )


def _candidate_index(stats: ArmStats, candidates: Optional[Sequence[int]]) -> np.ndarray:
    if stats.n_arms == 0:
        raise InputError("no arms to select from")
    if candidates is None:
        return np.arange(stats.n_arms)
    idx = np.asarray(sorted(set(int(c) for c in candidates)), dtype=np.int64)
    if idx.size == 0:
        raise InputError("empty candidate subset")
    if idx[0] < 0 or idx[-1] >= stats.n_arms:
        raise InputError(f"candidate arm out of range 0..{stats.n_arms - 1}")
    return idx


def ucb_select(stats: ArmStats, t: int, c: float = SQRT2, candidates: Optional[Sequence[int]] = None,
               virtual_pulls: Optional[np.ndarray] = None) -> int:
    """
    aₜ = argmax μ̂ᵢ + c·sqrt(ln t / nᵢ); руки с nᵢ = 0 выбираются принудительно
    (наименьший индекс). virtual_pulls - «занятые» в этом раунде руки
    (модель независимых агентов).
    """
    if t < 1:
        raise InputError("round index t must be >= 1")
    idx = _candidate_index(stats, candidates)
    n = stats.pulls[idx].astype(float)
    if virtual_pulls is not None:
        n = n + np.asarray(virtual_pulls, dtype=float)[idx]
    unpulled = np.flatnonzero(n == 0)
    if unpulled.size:
        return int(idx[unpulled[0]])
    index = stats.mean_hat[idx] + c * np.sqrt(math.log(t) / n)
    return int(idx[int(np.argmax(index))])


def thompson_select(stats: ArmStats, rng: np.random.Generator, reward_model: str = GAUSSIAN,
                    candidates: Optional[Sequence[int]] = None) -> int:
    idx = _candidate_index(stats, candidates)
    if reward_model == BERNOULLI:
        theta = rng.beta(stats.alpha, stats.beta)
    elif reward_model == GAUSSIAN:
        n = stats.pulls
        loc = np.where(n > 0, stats.mean_hat, 0.0)
        scale = np.where(n > 0, np.sqrt(stats.sample_variance() / (n + 1)), math.sqrt(TS_PRIOR_VARIANCE))
        theta = rng.normal(loc, scale)
    else:
        raise InputError(f"unknown reward model {reward_model!r}")
    # выборка по всем рукам, чтобы расход генератора не зависел от подмножества
    return int(idx[int(np.argmax(theta[idx]))])


def update_mean(stats: ArmStats, arm: int, reward: float, reward_model: str = GAUSSIAN,
                rng: Optional[np.random.Generator] = None) -> ArmStats:
    """μ̂ᵢ ← μ̂ᵢ + (r − μ̂ᵢ)/(nᵢ + 1); в bernoulli-режиме ещё и счётчики Beta."""
    if not 0 <= arm < stats.n_arms:
        raise InputError(f"arm {arm} out of range 0..{stats.n_arms - 1}")
    mean_hat = stats.mean_hat.copy()
    pulls = stats.pulls.copy()
    m2 = stats.m2.copy()
    alpha, beta = stats.alpha, stats.beta

    n_new = int(pulls[arm]) + 1
    delta = reward - mean_hat[arm]
    mean_hat[arm] += delta / n_new
    m2[arm] += delta * (reward - mean_hat[arm])
    pulls[arm] = n_new

    if reward_model == BERNOULLI:
        p = min(max(float(reward), 0.0), 1.0)
        if p in (0.0, 1.0):
            success = p == 1.0
        elif rng is None:
            raise InputError("bernoulli binarization of a fractional reward needs a generator")
        else:
            success = bool(rng.random() < p)
        alpha, beta = alpha.copy(), beta.copy()
        if success:
            alpha[arm] += 1.0
        else:
            beta[arm] += 1.0
    elif reward_model != GAUSSIAN:
        raise InputError(f"unknown reward model {reward_model!r}")
    return ArmStats(mean_hat=mean_hat, pulls=pulls, alpha=alpha, beta=beta, m2=m2)


# ================== Regret ledgers ==================

@dataclass(frozen=True)
class LedgerEntry:
    round: int
    arms: Tuple[int, ...]
    rewards: Tuple[float, ...] = ()
    comm_cost: float = 0.0


@dataclass
class RegretLedger:
    arm_means: np.ndarray
    lam: float = 0.0
    entries: List[LedgerEntry] = field(default_factory=list)

    def __post_init__(self):
        self.arm_means = np.asarray(self.arm_means, dtype=float)
        if self.lam < 0:
            raise InputError("lambda must be >= 0")

    @property
    def mu_star(self) -> float:
        return float(self.arm_means.max())

    def append(self, round_: int, arms: Iterable[int], rewards: Iterable[float] = (), comm_cost: float = 0.0):
        self.entries.append(LedgerEntry(int(round_), tuple(int(a) for a in arms),
                                        tuple(float(r) for r in rewards), float(comm_cost)))

    def increments(self) -> np.ndarray:
        """Мгновенный псевдо-регрет раунда: μ* минус среднее истинных средних выбранных рук."""
        if not self.entries:
            return np.zeros(0)
        inc = [self.mu_star - float(np.mean(self.arm_means[list(e.arms)])) for e in self.entries]
        return np.maximum(np.array(inc), 0.0)

    def prefix(self) -> np.ndarray:
        return np.cumsum(self.increments())

    def total_comm_cost(self) -> float:
        return float(sum(e.comm_cost for e in self.entries))


def cumulative_regret(ledger: RegretLedger) -> float:
    """Σₜ (μ* − μ_{aₜ}) по руке контроллера (первой в записи раунда)."""
    if not ledger.entries:
        return 0.0
    chosen = np.array([e.arms[0] for e in ledger.entries])
    return float(np.sum(ledger.mu_star - ledger.arm_means[chosen]))


def distributed_regret(ledger: RegretLedger, n_agents: int) -> float:
    if n_agents < 1:
        raise InputError("agent count must be >= 1")
    if not ledger.entries:
        return 0.0
    for e in ledger.entries:
        if len(e.arms) != n_agents:
            raise InputError(f"round {e.round} records {len(e.arms)} agent choices, expected {n_agents}")
    arms = np.array([e.arms for e in ledger.entries])
    return float(np.sum(np.maximum(ledger.mu_star - ledger.arm_means[arms].mean(axis=1), 0.0)))


def effective_regret(ledger: RegretLedger, n_agents: int) -> float:
    return distributed_regret(ledger, n_agents) + ledger.lam * ledger.total_comm_cost()


def realized_regret(ledger: RegretLedger) -> float:
    """Вторичная метрика: Σₜ (μ* − r̄ₜ) по наблюдённым наградам."""
    return float(sum(ledger.mu_star - float(np.mean(e.rewards)) for e in ledger.entries if e.rewards))


# ================== Bounds (test envelopes / reporting) ==================

def suboptimal_gaps(arm_means: Sequence[float]) -> List[float]:
    m = np.asarray(arm_means, dtype=float)
    gaps = m.max() - m
    return [float(g) for g in gaps if g > 0]


def ucb_regret_bound(gaps: Sequence[float], T: int) -> float:
    if T < 2:
        raise InputError("horizon T must be >= 2")
    if any(g <= 0 for g in gaps):
        raise InputError("all gaps must be > 0")
    log_t = math.log(T)
    return float(sum(8.0 * log_t / g + (1.0 + math.pi ** 2 / 3.0) * g for g in gaps))


def ts_regret_order(gaps: Sequence[float], T: int) -> float:
    if T < 2:
        raise InputError("horizon T must be >= 2")
    log_t = math.log(T)
    return float(sum(log_t / g for g in gaps if g > 0))


def delayed_regret_order(T: int, K: int, tau_max: int) -> float:
    if T < 2:
        raise InputError("horizon T must be >= 2")
    return math.sqrt((T + tau_max) * K * math.log(T))


def sublinear_regret_order(T: int, K: int) -> float:
    if T < 2:
        raise InputError("horizon T must be >= 2")
    return math.sqrt(K * T * math.log(T))
