# -*- coding: utf-8 -*-
"""
almab_acquisition.py
Функции захвата: EI, дисперсия (uncertainty sampling), взаимная информация
GP (аналог BALD) и greedy k-center (core-set). select_candidates ранжирует пул.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm

from almab_env import Candidate
from almab_errors import InputError
from almab_surrogate import GpModel, gp_predict_batch

logger = logging.getLogger(__name__)

LABELED_TOL = 1e-12


class AcquisitionKind(str, Enum):
    EXPECTED_IMPROVEMENT = "expected_improvement"
    VARIANCE = "variance"
    MUTUAL_INFORMATION = "mutual_information"
    K_CENTER = "k_center"


class Direction(str, Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


@dataclass(frozen=True)
class AcquisitionSpec:
    kind: AcquisitionKind = AcquisitionKind.EXPECTED_IMPROVEMENT
    batch_size: int = 1
    direction: Direction = Direction.MAXIMIZE

    def __post_init__(self):
        object.__setattr__(self, "kind", AcquisitionKind(self.kind))
        object.__setattr__(self, "direction", Direction(self.direction))
        if self.batch_size < 1:
            raise InputError("acquisition batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "batch_size": self.batch_size, "direction": self.direction.value}


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: Candidate
    score: float
    pool_index: int


# ================== Scores ==================

def expected_improvement_array(mean, variance, best: float,
                               direction: Union[Direction, str] = Direction.MINIMIZE) -> np.ndarray:
    m = np.asarray(mean, dtype=float)
    v = np.asarray(variance, dtype=float)
    if np.any(v < 0):
        raise InputError("variance must be >= 0")
    if Direction(direction) is Direction.MAXIMIZE:
        m, best = -m, -best
    diff = best - m
    sigma = np.sqrt(v)
    ei = np.maximum(diff, 0.0)
    pos = sigma > 0
    z = diff[pos] / sigma[pos]
    ei[pos] = diff[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    # на хвостах Φ и φ дают отрицательный ноль порядка 1e-17
    return np.maximum(ei, 0.0)


def expected_improvement(mean: float, variance: float, best: float,
                         direction: Union[Direction, str] = Direction.MINIMIZE) -> float:
    return float(expected_improvement_array(np.array([mean]), np.array([variance]), best, direction)[0])


def mutual_information_score(variance, noise_var: float):
    """½·ln(1 + σ²(x)/σ_n²) в натах; скаляр или массив."""
    if noise_var <= 0:
        raise InputError("noise_var must be > 0 for mutual information")
    v = np.asarray(variance, dtype=float)
    if np.any(v < 0):
        raise InputError("variance must be >= 0")
    out = 0.5 * np.log1p(v / noise_var)
    return float(out) if out.ndim == 0 else out


def _coords(cands: Sequence[Candidate]) -> np.ndarray:
    return np.array([c.coords for c in cands], dtype=float)


def greedy_k_center_indices(pool: np.ndarray, labeled: Optional[np.ndarray], k: int) -> List[int]:
    if k < 0:
        raise InputError("k must be >= 0")
    if k == 0:
        return []
    n = pool.shape[0]
    if n == 0:
        raise InputError("empty pool")
    if k > n:
        raise InputError(f"k={k} exceeds pool size {n}")

    picked: List[int] = []
    min_d = np.full(n, np.inf)
    if labeled is not None and len(labeled):
        min_d = cdist(pool, labeled).min(axis=1)
    else:
        picked.append(0)
        min_d = cdist(pool, pool[:1]).ravel()

    while len(picked) < k:
        masked = min_d.copy()
        masked[picked] = -np.inf
        i = int(np.argmax(masked))
        picked.append(i)
        min_d = np.minimum(min_d, cdist(pool, pool[i:i + 1]).ravel())
    return picked


def greedy_k_center(pool: Sequence[Candidate], labeled: Sequence[Candidate], k: int) -> List[Candidate]:
    idx = greedy_k_center_indices(_coords(pool) if pool else np.zeros((0, 1)),
                                  _coords(labeled) if labeled else None, k)
    return [pool[i] for i in idx]


def coverage_radius(pool: np.ndarray, centers: np.ndarray) -> float:
    """max по пулу минимального расстояния до центров."""
    return float(cdist(pool, centers).min(axis=1).max())


# ================== Selection ==================

def score_pool(pool: Sequence[Candidate], model: GpModel, spec: AcquisitionSpec) -> np.ndarray:
    X = _coords(pool)
    mean, var = gp_predict_batch(model, X)
    if spec.kind is AcquisitionKind.VARIANCE:
        return var
    if spec.kind is AcquisitionKind.MUTUAL_INFORMATION:
        # шум модели в исходных единицах выхода
        return mutual_information_score(var, model.noise_var * model.y_scale ** 2)
    if spec.kind is AcquisitionKind.EXPECTED_IMPROVEMENT:
        train_mean, _ = gp_predict_batch(model, model.train_X)
        best = float(train_mean.min() if spec.direction is Direction.MINIMIZE else train_mean.max())
        return expected_improvement_array(mean, var, best, spec.direction)
    raise InputError(f"acquisition {spec.kind.value} does not score through the model")


def unlabeled_mask(pool: Sequence[Candidate], labeled: Sequence[Candidate], tol: float = LABELED_TOL) -> np.ndarray:
    """True для кандидатов пула дальше tol от всех размеченных точек."""
    if not pool:
        return np.zeros(0, dtype=bool)
    if not labeled:
        return np.ones(len(pool), dtype=bool)
    return cdist(_coords(pool), _coords(labeled)).min(axis=1) > tol


def select_candidates(pool: Sequence[Candidate], model: Optional[GpModel], spec: AcquisitionSpec,
                      labeled: Sequence[Candidate] = (), exclude_labeled: bool = False) -> List[ScoredCandidate]:
    """
    Топ batch_size кандидатов пула по убыванию скора, при равенстве - меньший индекс.
    k_center модель не использует: порядок выбора жадный, скор - расстояние
    до уже покрытых точек в момент выбора.

    exclude_labeled убирает из ранжирования уже оценённые точки (EI / variance / MI);
    pool_index всегда индекс в исходном пуле.
    """
    if not pool:
        raise InputError("empty candidate pool")
    if spec.batch_size > len(pool):
        raise InputError(f"batch_size={spec.batch_size} exceeds pool size {len(pool)}")

    if spec.kind is AcquisitionKind.K_CENTER:
        X = _coords(pool)
        L = _coords(labeled) if labeled else None
        idx = greedy_k_center_indices(X, L, spec.batch_size)
        out: List[ScoredCandidate] = []
        for j, i in enumerate(idx):
            centers = [X[p] for p in idx[:j]]
            if L is not None:
                centers.extend(L)
            d = float(cdist(X[i:i + 1], np.array(centers)).min()) if centers else 0.0
            out.append(ScoredCandidate(pool[i], d, i))
        return out

    if model is None:
        raise InputError(f"acquisition {spec.kind.value} needs a fitted model")
    scores = score_pool(pool, model, spec)
    if not np.all(np.isfinite(scores)):
        raise InputError("non-finite acquisition score")
    if exclude_labeled:
        keep = np.flatnonzero(unlabeled_mask(pool, labeled))
        if keep.size < spec.batch_size:
            raise InputError(f"batch_size={spec.batch_size} exceeds {keep.size} unlabeled candidates")
        order = keep[np.argsort(-scores[keep], kind="stable")[: spec.batch_size]]
    else:
        order = np.argsort(-scores, kind="stable")[: spec.batch_size]
    logger.debug("select_candidates kind=%s pool=%s top=%s", spec.kind.value, len(pool), order.tolist())
    return [ScoredCandidate(pool[int(i)], float(scores[i]), int(i)) for i in order]

