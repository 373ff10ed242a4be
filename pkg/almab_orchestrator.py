from __future__ import annotations
import json
import logging
from typing import Awaitable, Callable, List, Optional

import numpy as np

from almab_acquisition import AcquisitionKind, AcquisitionSpec, select_candidates
from almab_bandit import ArmStats
from almab_env import ArmEnvironment
from almab_state import RunHistory, record_event
from almab_surrogate import GpModel, GpSettings

logger = logging.getLogger(__name__)


class ActiveLearningStage:
    """
    Стадия SelectCandidates(U, M) перед бандитом: GP по оценкам μ̂ уже
    опрошенных рук, функция захвата сужает пул рук до batch_size.
    Пока ни одного применённого наблюдения нет, стадия пропускается.
    """

    def __init__(
        self,
        env: ArmEnvironment,
        spec: AcquisitionSpec,
        gp: GpSettings,
        notify_text: Callable[[str], Awaitable[None]],
    ):
        self.env = env
        self.spec = spec
        self.gp = gp
        self.notify_text = notify_text
        self._coords = np.array([c.coords for c in env.candidates], dtype=float)
        self._model: Optional[GpModel] = None
        self._model_pulls = -1
        self._announced = False

    def _fit(self, stats: ArmStats) -> Optional[GpModel]:
        total = stats.total_pulls
        if total == self._model_pulls:
            return self._model
        seen = np.flatnonzero(stats.pulls > 0)
        self._model = self.gp.fit(self._coords[seen], stats.mean_hat[seen], self.env.box) if seen.size else None
        self._model_pulls = total
        return self._model

    async def step(self, stats: ArmStats, history: RunHistory, round_: int) -> Optional[List[int]]:
        """Подмножество рук для политики или None (стадия пропущена)."""
        if stats.total_pulls == 0:
            return None
        pool = self.env.candidates
        labeled = [pool[i] for i in np.flatnonzero(stats.pulls > 0)]
        model = None if self.spec.kind is AcquisitionKind.K_CENTER else self._fit(stats)
        if self.spec.kind is AcquisitionKind.K_CENTER and len(labeled) == len(pool):
            # всё покрыто: k-center больше ничего не сужает
            return None
        picked = select_candidates(pool, model, self.spec, labeled=labeled)
        arms = sorted(s.pool_index for s in picked)
        if not self._announced:
            self._announced = True
            record_event(history, "AL_STAGE_ACTIVE",
                         {"kind": self.spec.kind.value, "batch_size": self.spec.batch_size}, round_)
            logger.info("al stage active round=%s kind=%s batch=%s", round_, self.spec.kind.value,
                        self.spec.batch_size)
            await self.notify_text(json.dumps({"event": "al_stage_active", "round": round_,
                                               "kind": self.spec.kind.value}, separators=(",", ":")))
        return arms
