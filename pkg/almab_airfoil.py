# -*- coding: utf-8 -*-
"""
almab_airfoil.py
Суррогатная минимизация сопротивления на mock-CFD поверхности:
затравочные точки -> итерации (GP + функция захвата по сетке grid×grid) -> топ-k.

Пакет из `workers` кандидатов на итерацию оценивается параллельно; воркер j
всегда шумит из своего подпотока, поэтому результат не зависит от потоков.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from almab_acquisition import AcquisitionSpec, Direction, select_candidates, unlabeled_mask
from almab_config import AirfoilSettings, thread_cap
from almab_env import AIRFOIL_BOX, Candidate, DragSurfaceSpec, Stream, mock_cfd_drag, substream
from almab_surrogate import GpModel, GpSettings, gp_predict, gp_predict_batch
from almab_worker import gather_in_order

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AirfoilSample:
    index: int
    iteration: int  # 0 - затравочные точки
    worker: int
    camber: float
    thickness: float
    drag_observed: float


@dataclass
class AirfoilResult:
    seed: int
    workers: int
    samples: List[AirfoilSample] = field(default_factory=list)
    top: List[Dict[str, Any]] = field(default_factory=list)
    model: Optional[GpModel] = None
    runtime_s: float = 0.0

    @property
    def best(self) -> Dict[str, Any]:
        return self.top[0]


class AirfoilOptimizer:
    def __init__(
        self,
        spec: DragSurfaceSpec,
        settings: AirfoilSettings,
        gp: GpSettings,
        seed: int,
        workers: Optional[int] = None,
        notify_text: Callable[[str], Any] = lambda text: None,
    ):
        self.spec = spec
        self.settings = settings
        self.gp = gp
        self.seed = seed
        self.workers = workers or settings.workers
        self.notify_text = notify_text
        self.acquisition = AcquisitionSpec(settings.acquisition, 1, Direction.MINIMIZE)
        grid = AIRFOIL_BOX.grid(settings.grid)
        self._grid = grid
        self.pool = [Candidate((float(c), float(t))) for c, t in grid]
        self._rngs = [substream(seed, Stream.AGENTS, j) for j in range(self.workers)]

    def _eval(self, worker: int, camber: float, thickness: float) -> float:
        return mock_cfd_drag(camber, thickness, self.spec, self._rngs[worker],
                             emulate_cost=self.settings.emulate_cost)

    async def _evaluate_batch(self, pool: Optional[ThreadPoolExecutor], points: np.ndarray,
                              iteration: int, result: AirfoilResult):
        for start in range(0, len(points), self.workers):
            chunk = points[start:start + self.workers]
            calls = [(lambda j=j, p=p: self._eval(j, float(p[0]), float(p[1]))) for j, p in enumerate(chunk)]
            values = await gather_in_order(pool, calls)
            for j, (p, v) in enumerate(zip(chunk, values)):
                result.samples.append(AirfoilSample(len(result.samples), iteration, j, float(p[0]),
                                                    float(p[1]), float(v)))

    def _fit(self, result: AirfoilResult) -> GpModel:
        X = np.array([[s.camber, s.thickness] for s in result.samples])
        y = np.array([s.drag_observed for s in result.samples])
        return self.gp.fit(X, y, AIRFOIL_BOX)

    def _posterior_argmin(self, model: GpModel, labeled: List[Candidate]) -> int:
        mean, _ = gp_predict_batch(model, self._grid)
        mean = np.where(unlabeled_mask(self.pool, labeled), mean, np.inf)
        return int(np.argmin(mean))

    def _pick_batch(self, result: AirfoilResult, exploit: bool) -> np.ndarray:
        """
        Пакет из `workers` точек сетки (kriging believer): выбранная точка сразу
        добавляется в выборку со значением апостериорного среднего, дисперсия рядом
        падает, и следующий выбор уходит в сторону. Оценённые точки не выбираются повторно.
        При exploit первая точка пакета - минимум апостериорного среднего.
        """
        X = [[s.camber, s.thickness] for s in result.samples]
        y = [s.drag_observed for s in result.samples]
        labeled = [Candidate((s.camber, s.thickness)) for s in result.samples]
        picked = []
        for j in range(self.workers):
            model = self.gp.fit(np.array(X), np.array(y), AIRFOIL_BOX)
            if exploit and j == 0:
                idx = self._posterior_argmin(model, labeled)
            else:
                idx = select_candidates(self.pool, model, self.acquisition, labeled=labeled,
                                        exclude_labeled=True)[0].pool_index
            x = self.pool[idx].coords
            believed, _ = gp_predict(model, x)
            X.append(list(x))
            y.append(believed)
            labeled.append(self.pool[idx])
            picked.append(x)
        return np.array(picked)

    async def run(self) -> AirfoilResult:
        st = self.settings
        result = AirfoilResult(seed=self.seed, workers=self.workers)
        design = substream(self.seed, Stream.DESIGN)
        init = design.uniform(AIRFOIL_BOX.lower, AIRFOIL_BOX.upper, size=(st.initial_points, 2))
        pool = None
        if st.emulate_cost and self.spec.eval_delay > 0 and self.workers > 1:
            pool = ThreadPoolExecutor(max_workers=thread_cap(self.workers), thread_name_prefix="almab-cfd")
        t0 = time.perf_counter()
        try:
            await self._evaluate_batch(pool, init, 0, result)
            for it in range(1, st.iterations + 1):
                batch = self._pick_batch(result, exploit=it == st.iterations)
                await self._evaluate_batch(pool, batch, it, result)
                best = min(s.drag_observed for s in result.samples)
                logger.debug("airfoil iteration=%s best_observed=%.6f", it, best)
                r = self.notify_text(json.dumps({"event": "airfoil_iteration", "seed": self.seed, "iteration": it,
                                                 "best_observed": round(best, 6)}, separators=(",", ":")))
                if asyncio.iscoroutine(r):
                    await r
        finally:
            if pool is not None:
                pool.shutdown(wait=True)
        result.runtime_s = time.perf_counter() - t0
        result.model = self._fit(result)
        result.top = top_designs(result, st.top_k)
        logger.info("airfoil done seed=%s workers=%s evals=%s best_drag=%.6f", self.seed, self.workers,
                    len(result.samples), result.best["drag"])
        return result


def top_designs(result: AirfoilResult, k: int) -> List[Dict[str, Any]]:
    """Топ-k уникальных дизайнов по апостериорному среднему сопротивления (по возрастанию)."""
    X = np.array([[s.camber, s.thickness] for s in result.samples])
    mean, var = gp_predict_batch(result.model, X)
    order = np.argsort(mean, kind="stable")
    rows: List[Dict[str, Any]] = []
    seen = set()
    for i in order:
        s = result.samples[int(i)]
        key = (s.camber, s.thickness)
        if key in seen:
            continue
        seen.add(key)
        rows.append({
            "rank": len(rows) + 1,
            "camber": s.camber,
            "thickness": s.thickness,
            "drag": float(mean[i]),
            "posterior_sd": float(np.sqrt(var[i])),
            "drag_observed": s.drag_observed,
        })
        if len(rows) == k:
            break
    return rows


def run_airfoil(spec: DragSurfaceSpec, settings: AirfoilSettings, gp: GpSettings, seed: int,
                workers: Optional[int] = None, notify_text: Callable[[str], Any] = lambda text: None) -> AirfoilResult:
    return asyncio.run(AirfoilOptimizer(spec, settings, gp, seed, workers, notify_text).run())
