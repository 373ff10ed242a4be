# -*- coding: utf-8 -*-
"""
almab_stats.py
Пост-анализ по сидам: перцентильный бутстрап-интервал и парный
знаково-ранговый критерий Уилкоксона (нормальная аппроксимация).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.stats import rankdata, wilcoxon

from almab_errors import InputError, NumericalError

logger = logging.getLogger(__name__)

WILCOXON_MIN_PAIRS = 6


class Statistic(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"


@dataclass(frozen=True)
class BootstrapSpec:
    B: int = 1000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.B < 100:
            raise InputError("bootstrap B must be >= 100")
        if not 0.0 < self.alpha < 1.0:
            raise InputError("bootstrap alpha must be in (0, 1)")

    def to_dict(self) -> dict:
        return {"B": self.B, "alpha": self.alpha, "seed": self.seed}


@dataclass(frozen=True)
class BootstrapResult:
    estimate: float
    lower: float
    upper: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.estimate, self.lower, self.upper


def bootstrap_ci(samples: Sequence[float], spec: BootstrapSpec = BootstrapSpec(),
                 statistic: Union[Statistic, str] = Statistic.MEAN) -> BootstrapResult:
    """
    B ресэмплов с возвращением; точка - среднее бутстрап-статистик,
    границы - ближайший ранг: индексы ceil(α/2·B)−1 и ceil((1−α/2)·B)−1.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise InputError("bootstrap needs at least one sample")
    stat = Statistic(statistic)
    rng = np.random.default_rng(spec.seed)
    idx = rng.integers(0, x.size, size=(spec.B, x.size))
    resampled = x[idx]
    thetas = resampled.mean(axis=1) if stat is Statistic.MEAN else np.median(resampled, axis=1)
    thetas = np.sort(thetas)
    lo_i = max(math.ceil(spec.alpha / 2.0 * spec.B) - 1, 0)
    hi_i = min(math.ceil((1.0 - spec.alpha / 2.0) * spec.B) - 1, spec.B - 1)
    return BootstrapResult(float(thetas.mean()), float(thetas[lo_i]), float(thetas[hi_i]))


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    w_plus: float
    w_minus: float
    n: int


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float]) -> WilcoxonResult:
    """
    Двусторонний парный тест: нулевые разности отбрасываются, нормальное
    приближение с поправкой на связи и непрерывность. W = min(W⁺, W⁻).
    """
    a = np.asarray(x, dtype=float).ravel()
    b = np.asarray(y, dtype=float).ravel()
    if a.shape != b.shape:
        raise InputError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size < WILCOXON_MIN_PAIRS:
        raise InputError(f"wilcoxon needs at least {WILCOXON_MIN_PAIRS} pairs, got {a.size}")
    d = a - b
    nz = d[d != 0.0]
    n = int(nz.size)
    if n == 0:
        raise NumericalError("wilcoxon test undefined: all paired differences are zero")

    res = wilcoxon(a, b, zero_method="wilcox", correction=True, method="approx")
    ranks = rankdata(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    w_minus = float(ranks[nz < 0].sum())
    if n < WILCOXON_MIN_PAIRS:
        logger.warning("wilcoxon normal approximation with n=%s retained pairs", n)
    return WilcoxonResult(statistic=float(res.statistic), p_value=float(res.pvalue),
                          w_plus=w_plus, w_minus=w_minus, n=n)
