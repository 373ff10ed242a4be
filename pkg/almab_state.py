from __future__ import annotations
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from almab_acquisition import AcquisitionSpec
from almab_bandit import GAUSSIAN, REWARD_MODELS, SQRT2, ArmStats, RegretLedger
from almab_errors import ConfigError
from almab_surrogate import GpSettings

EVENTS_CAP = 500


class RunStatus(str, Enum):
    PENDING = "PENDING"
    RUNNING = "RUNNING"
    DONE = "DONE"
    FAILED = "FAILED"


FINAL_STATUSES = {
    RunStatus.DONE,
    RunStatus.FAILED,
}


class RunMode(str, Enum):
    SEQUENTIAL = "sequential"
    DISTRIBUTED = "distributed"
    INDEPENDENT = "independent"


class Policy(str, Enum):
    UCB = "ucb"
    THOMPSON = "thompson"


def is_terminal(status: RunStatus) -> bool:
    return status in FINAL_STATUSES


@dataclass(frozen=True)
class RunConfig:
    T: int
    N: int = 1
    policy: Policy = Policy.UCB
    ucb_c: float = SQRT2
    reward_model: str = GAUSSIAN
    acquisition: Optional[AcquisitionSpec] = None
    gp: GpSettings = field(default_factory=GpSettings)
    delay_max: int = 0
    comm_cost_per_report: float = 0.0
    lam: float = 0.0
    seed: int = 0
    independent_agents: bool = False
    emulate_cost: bool = False

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        if self.T < 1:
            raise ConfigError("run T must be >= 1", key="T")
        if self.N < 1:
            raise ConfigError("run N must be >= 1", key="N")
        if self.delay_max < 0:
            raise ConfigError("run delay_max must be >= 0", key="delay_max")
        if self.comm_cost_per_report < 0 or self.lam < 0:
            raise ConfigError("comm_cost_per_report and lambda must be >= 0")
        if self.ucb_c < 0:
            raise ConfigError("ucb_c must be >= 0", key="ucb_c")
        if self.reward_model not in REWARD_MODELS:
            raise ConfigError(f"reward_model must be one of {REWARD_MODELS}", key="reward_model")

    @property
    def mode(self) -> RunMode:
        if self.independent_agents:
            return RunMode.INDEPENDENT
        return RunMode.SEQUENTIAL if self.N == 1 else RunMode.DISTRIBUTED

    @property
    def exploration_c(self) -> float:
        """
        Константа UCB для контроллера. В режиме репликации r̄ₜ усредняет N
        отчётов (дисперсия σ²/N), поэтому бонус сужается в √N раз; счётчики nᵢ не меняются.
        """
        if self.mode is RunMode.DISTRIBUTED:
            return self.ucb_c / math.sqrt(self.N)
        return self.ucb_c

    def replace(self, **kw) -> "RunConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(kw)
        return RunConfig(**data)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "T": self.T,
            "N": self.N,
            "policy": self.policy.value,
            "ucb_c": self.ucb_c,
            "reward_model": self.reward_model,
            "acquisition": self.acquisition.to_dict() if self.acquisition else None,
            "gp": self.gp.to_dict(),
            "delay_max": self.delay_max,
            "comm_cost_per_report": self.comm_cost_per_report,
            "lambda": self.lam,
            "seed": self.seed,
            "independent_agents": self.independent_agents,
            "emulate_cost": self.emulate_cost,
        }


@dataclass(frozen=True)
class RoundRecord:
    round: int
    arm: int
    agent_arms: Tuple[int, ...]
    rewards: Tuple[float, ...]
    reward_mean: float
    regret_increment: float
    issue_round: int
    apply_round: int
    comm_cost: float  # C_comm(t): стоимость применённых в раунде отчётов
    wall_ms: float
    narrowed: bool = False


@dataclass
class RunHistory:
    mode: RunMode
    config: RunConfig
    arm_means: np.ndarray
    ledger: RegretLedger
    records: List[RoundRecord] = field(default_factory=list)
    events: List[Dict[str, Any]] = field(default_factory=list)
    status: RunStatus = RunStatus.PENDING
    last_error: str = ""
    final_stats: Optional[ArmStats] = None
    applied_updates: int = 0
    q_T: int = 0
    wall_clock_s: float = 0.0

    @property
    def mu_star(self) -> float:
        return float(self.arm_means.max())

    def arm_sequence(self) -> List[int]:
        return [r.arm for r in self.records]

    def pulls_per_arm(self) -> np.ndarray:
        return np.bincount(self.arm_sequence(), minlength=self.arm_means.shape[0])

    def total_comm_cost(self) -> float:
        return math.fsum(r.comm_cost for r in self.records)

    def mean_reward(self) -> float:
        return float(np.mean([r.reward_mean for r in self.records])) if self.records else 0.0

    def evaluations(self) -> int:
        return sum(len(r.rewards) for r in self.records)


def set_failed(history: RunHistory, error_msg: str):
    history.status = RunStatus.FAILED
    history.last_error = error_msg


def record_event(history: RunHistory, event: str, extra: Optional[Dict[str, Any]] = None,
                 round_: Optional[int] = None):
    hist = history.events
    item: Dict[str, Any] = {"round": round_ if round_ is not None else len(history.records), "event": event}
    if extra:
        item.update(extra)
    hist.append(item)
    if len(hist) > EVENTS_CAP:
        del hist[:-EVENTS_CAP]
