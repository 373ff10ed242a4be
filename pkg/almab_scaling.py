# -*- coding: utf-8 -*-
"""
almab_scaling.py
Аналитика масштабирования: Амдал (время и ускорение), Густафсон,
эффективность с коммуникационными накладными η(K) = 1/(1 + αK^β)
и оптимальное число агентов K* (замкнутая формула + численная проверка).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

from scipy.optimize import minimize_scalar

from almab_errors import InputError, NumericalError

logger = logging.getLogger(__name__)

K_SEARCH_MAX = 1e6


@dataclass(frozen=True)
class ScalingParams:
    serial_fraction: float = 0.05
    efficiency: float = 1.0
    comm_alpha: float = 0.01
    comm_beta: float = 0.5
    task_costs: Tuple[float, ...] = field(default=(1.0,))

    def __post_init__(self):
        if not 0.0 <= self.serial_fraction <= 1.0:
            raise InputError("serial_fraction must be in [0, 1]")
        if not 0.0 < self.efficiency <= 1.0:
            raise InputError("efficiency must be in (0, 1]")
        if self.comm_alpha < 0:
            raise InputError("comm_alpha must be >= 0")
        if not 0.5 <= self.comm_beta <= 1.0:
            raise InputError("comm_beta must be in [0.5, 1]")
        if not self.task_costs or any(c < 0 for c in self.task_costs):
            raise InputError("task_costs must be a non-empty list of non-negative costs")

    @property
    def total_cost(self) -> float:
        return float(math.fsum(self.task_costs))

    def to_dict(self) -> Dict[str, object]:
        return {
            "serial_fraction": self.serial_fraction,
            "efficiency": self.efficiency,
            "comm_alpha": self.comm_alpha,
            "comm_beta": self.comm_beta,
            "task_costs": list(self.task_costs),
        }


def _check_k(K: float):
    if K < 1:
        raise InputError(f"agent count K must be >= 1, got {K}")


def amdahl_time(K: float, params: ScalingParams) -> float:
    _check_k(K)
    p, c = params.serial_fraction, params.total_cost
    return (1.0 - p) * c / (params.efficiency * K) + p * c


def amdahl_speedup(K: float, params: ScalingParams) -> float:
    _check_k(K)
    p = params.serial_fraction
    return 1.0 / (p + (1.0 - p) / (params.efficiency * K))


def gustafson_speedup(K: float, params: ScalingParams) -> float:
    p = params.serial_fraction
    return p + (1.0 - p) * K


def parallel_efficiency(K: float, params: ScalingParams) -> float:
    return 1.0 / (1.0 + params.comm_alpha * K ** params.comm_beta)


# ================== Communication-augmented time models ==================

def comm_time(K: float, params: ScalingParams) -> float:
    """T_K = (1−p)·C/K + p·C·(1 + αK^β): накладные несёт координационная часть."""
    _check_k(K)
    p, c = params.serial_fraction, params.total_cost
    return (1.0 - p) * c / K + p * c * (1.0 + params.comm_alpha * K ** params.comm_beta)


def eta_time(K: float, params: ScalingParams) -> float:
    """T_K = (1−p)·C·(1 + αK^β)/K + p·C: Амдал с η, заменённой на η(K)."""
    _check_k(K)
    p, c = params.serial_fraction, params.total_cost
    return (1.0 - p) * c * (1.0 + params.comm_alpha * K ** params.comm_beta) / K + p * c


@dataclass(frozen=True)
class OptimalAgents:
    closed_form: float
    numeric: float
    numeric_time: float
    numeric_eta_model: float
    eta_model_at_bound: bool

    @property
    def relative_gap(self) -> float:
        return abs(self.numeric - self.closed_form) / self.closed_form

    def to_dict(self) -> Dict[str, object]:
        return {
            "k_star_closed": self.closed_form,
            "k_star_numeric_comm": self.numeric,
            "k_star_numeric_comm_time": self.numeric_time,
            "k_star_eta_model": self.numeric_eta_model,
            "eta_model_at_bound": self.eta_model_at_bound,
            "relative_gap": self.relative_gap,
        }


def closed_form_agents(params: ScalingParams) -> float:
    p, a, b = params.serial_fraction, params.comm_alpha, params.comm_beta
    if p <= 0.0 or p >= 1.0:
        raise NumericalError(f"no finite optimal agent count for serial_fraction={p}")
    if a == 0.0:
        raise NumericalError("no finite optimal agent count without communication cost (comm_alpha=0)")
    return ((1.0 - p) / (a * b * p)) ** (1.0 / (1.0 + b))


def _argmin_log_k(fn, params: ScalingParams, k_max: float) -> float:
    # поиск по log10 K: масштаб K от 1 до 1e6
    res = minimize_scalar(lambda u: fn(10.0 ** u, params), bounds=(0.0, math.log10(k_max)),
                          method="bounded", options={"xatol": 1e-10})
    return float(10.0 ** res.x)


def optimal_agents(params: ScalingParams, k_max: float = K_SEARCH_MAX) -> OptimalAgents:
    closed = closed_form_agents(params)
    numeric = _argmin_log_k(comm_time, params, k_max)
    eta_k = _argmin_log_k(eta_time, params, k_max)
    at_bound = eta_k >= k_max * (1.0 - 1e-4)
    out = OptimalAgents(
        closed_form=closed,
        numeric=numeric,
        numeric_time=comm_time(numeric, params),
        numeric_eta_model=eta_k,
        eta_model_at_bound=bool(at_bound),
    )
    logger.info("optimal agents closed=%.4f numeric=%.4f eta_model=%.4f at_bound=%s",
                closed, numeric, eta_k, at_bound)
    if out.relative_gap > 1e-3:
        logger.warning("closed form and numeric K* disagree gap=%.3e", out.relative_gap)
    return out


def scaling_rows(params: ScalingParams, k_values: Iterable[int]) -> List[Dict[str, float]]:
    rows = []
    for k in k_values:
        rows.append({
            "K": int(k),
            "T_K": amdahl_time(k, params),
            "amdahl_speedup": amdahl_speedup(k, params),
            "gustafson_speedup": gustafson_speedup(k, params),
            "efficiency": parallel_efficiency(k, params),
            "T_K_comm": comm_time(k, params),
        })
    return rows
