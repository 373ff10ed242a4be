# -*- coding: utf-8 -*-
"""
almab_surrogate.py
GP-регрессия с RBF-ядром: апостериорные среднее и дисперсия для функций захвата.

Гиперпараметры задаются конфигом (без оптимизации правдоподобия). Модель после
gp_fit неизменяема; повторное обучение создаёт новую модель.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular
from scipy.spatial.distance import cdist

from almab_env import SearchBox
from almab_errors import InputError, NumericalError

logger = logging.getLogger(__name__)

JITTER_STEPS = (0.0, 1e-10, 1e-8, 1e-6)

DEFAULT_LENGTHSCALE = 0.2
DEFAULT_SIGNAL_VAR = 1.0
DEFAULT_NOISE_VAR = 1e-4


def rbf_kernel(x: Sequence[float], x2: Sequence[float], lengthscale: float, signal_var: float) -> float:
    a = np.atleast_1d(np.asarray(x, dtype=float))
    b = np.atleast_1d(np.asarray(x2, dtype=float))
    if a.shape != b.shape:
        raise InputError(f"kernel inputs differ in dimension: {a.shape} vs {b.shape}")
    if lengthscale <= 0:
        raise InputError("lengthscale must be > 0")
    d2 = float(np.sum((a - b) ** 2))
    return signal_var * float(np.exp(-d2 / (2.0 * lengthscale ** 2)))


def rbf_matrix(A: np.ndarray, B: np.ndarray, lengthscale: float, signal_var: float) -> np.ndarray:
    d2 = cdist(A, B, metric="sqeuclidean")
    return signal_var * np.exp(-d2 / (2.0 * lengthscale ** 2))


@dataclass(frozen=True, eq=False)
class GpModel:
    train_X: np.ndarray
    train_y: np.ndarray
    lengthscale: float
    signal_var: float
    noise_var: float
    chol_factor: np.ndarray  # нижнетреугольный
    alpha_vec: np.ndarray
    jitter: float = 0.0
    bounds: Optional[SearchBox] = None
    y_mean: float = 0.0
    y_scale: float = 1.0

    @property
    def dim(self) -> int:
        return int(self.train_X.shape[1])

    def _inputs(self, X: np.ndarray) -> np.ndarray:
        return self.bounds.to_unit(X) if self.bounds is not None else X


def _as_matrix(X, name: str) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InputError(f"{name} must be a 2-D array")
    return arr


def gp_fit(X, y, lengthscale: float = DEFAULT_LENGTHSCALE, signal_var: float = DEFAULT_SIGNAL_VAR,
           noise_var: float = DEFAULT_NOISE_VAR, bounds: Optional[SearchBox] = None,
           standardize: bool = False) -> GpModel:
    """
    Холецкий для K + σ_n²·I с эскалацией jitter (1e-10, 1e-8, 1e-6).
    bounds - нормировка входов в единичный куб, standardize - центрирование
    и масштабирование выходов; по умолчанию выключены.
    """
    Xm = _as_matrix(X, "X")
    ym = np.asarray(y, dtype=float).ravel()
    if Xm.shape[0] < 1:
        raise InputError("GP needs at least one training point")
    if ym.shape[0] != Xm.shape[0]:
        raise InputError(f"X has {Xm.shape[0]} rows but y has {ym.shape[0]} values")
    if lengthscale <= 0 or signal_var <= 0 or noise_var < 0:
        raise InputError("GP hyperparameters need lengthscale > 0, signal_var > 0, noise_var >= 0")
    if bounds is not None and bounds.dim != Xm.shape[1]:
        raise InputError(f"bounds dimension {bounds.dim} != input dimension {Xm.shape[1]}")
    if noise_var == 0 and np.unique(Xm, axis=0).shape[0] < Xm.shape[0]:
        raise NumericalError("duplicate training inputs with zero noise variance: kernel matrix is singular")

    y_mean, y_scale = 0.0, 1.0
    if standardize:
        y_mean = float(ym.mean())
        sd = float(ym.std())
        y_scale = sd if ym.shape[0] > 1 and sd > 0 else 1.0
    ys = (ym - y_mean) / y_scale

    Xn = bounds.to_unit(Xm) if bounds is not None else Xm
    K = rbf_matrix(Xn, Xn, lengthscale, signal_var)
    K[np.diag_indices_from(K)] += noise_var

    last_err: Optional[Exception] = None
    for jitter in JITTER_STEPS:
        try:
            c, low = cho_factor(K + jitter * np.eye(K.shape[0]), lower=True)
        except LinAlgError as e:
            last_err = e
            logger.debug("cholesky failed jitter=%s n=%s", jitter, K.shape[0])
            continue
        if jitter > 0:
            logger.warning("gp_fit needed jitter=%s n=%s", jitter, K.shape[0])
        L = np.tril(c)
        alpha = cho_solve((L, True), ys)
        return GpModel(
            train_X=Xm, train_y=ym, lengthscale=lengthscale, signal_var=signal_var, noise_var=noise_var,
            chol_factor=L, alpha_vec=alpha, jitter=jitter, bounds=bounds, y_mean=y_mean, y_scale=y_scale,
        )
    min_eig = float(np.linalg.eigvalsh(K).min())
    raise NumericalError(
        f"cholesky failed after max jitter {JITTER_STEPS[-1]}: n={K.shape[0]} min_eig={min_eig:.3e} ({last_err})"
    )


def gp_predict_batch(model: GpModel, Xq) -> Tuple[np.ndarray, np.ndarray]:
    Q = _as_matrix(Xq, "query")
    if Q.shape[1] != model.dim:
        raise InputError(f"query dimension {Q.shape[1]} != model dimension {model.dim}")
    Xn = model._inputs(model.train_X)
    Ks = rbf_matrix(Xn, model._inputs(Q), model.lengthscale, model.signal_var)
    mean = Ks.T @ model.alpha_vec
    v = solve_triangular(model.chol_factor, Ks, lower=True)
    var = model.signal_var - np.sum(v * v, axis=0)
    var = np.maximum(var, 0.0)
    return mean * model.y_scale + model.y_mean, var * model.y_scale ** 2


def gp_predict(model: GpModel, x) -> Tuple[float, float]:
    q = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    mean, var = gp_predict_batch(model, q)
    return float(mean[0]), float(var[0])


@dataclass(frozen=True)
class GpSettings:
    """Гиперпараметры из блока "gp" конфига; normalize/standardize включают предобработку."""
    lengthscale: float = DEFAULT_LENGTHSCALE
    signal_var: float = DEFAULT_SIGNAL_VAR
    noise_var: float = DEFAULT_NOISE_VAR
    normalize: bool = True
    standardize: bool = True

    def __post_init__(self):
        if self.lengthscale <= 0 or self.signal_var <= 0 or self.noise_var < 0:
            raise InputError("gp settings need lengthscale > 0, signal_var > 0, noise_var >= 0")

    def fit(self, X, y, box: Optional[SearchBox] = None) -> GpModel:
        return gp_fit(X, y, self.lengthscale, self.signal_var, self.noise_var,
                      bounds=box if self.normalize else None, standardize=self.standardize)

    def to_dict(self) -> dict:
        return {
            "lengthscale": self.lengthscale,
            "signal_var": self.signal_var,
            "noise_var": self.noise_var,
            "normalize": self.normalize,
            "standardize": self.standardize,
        }
