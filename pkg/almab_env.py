# -*- coding: utf-8 -*-
"""
almab_env.py
Синтетические black-box окружения: смесь гауссиан (бандитская сетка рук),
бернуллиевские руки и калиброванная «mock CFD» поверхность сопротивления.

Генераторы шума никогда не разделяются между агентами: каждый агент получает
свой подпоток, выведенный из базового seed по (stream, index).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from almab_errors import InputError, ConfigError

logger = logging.getLogger(__name__)

CAMBER_RANGE = (0.01, 0.1)
THICKNESS_RANGE = (0.05, 0.2)


# ================== RNG substreams ==================

class Stream(IntEnum):
    AGENTS = 0
    DELAYS = 1
    POLICY = 2
    DESIGN = 3
    BINARIZE = 4


def substream(seed: int, stream: Stream, index: int = 0) -> np.random.Generator:
    """Независимый генератор для (seed, stream, index); не зависит от числа агентов."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index)))
    return np.random.default_rng(ss)


# ================== Types ==================

@dataclass(frozen=True)
class SearchBox:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise InputError("search box bounds must be non-empty and of equal length")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise InputError(f"search box lower must be < upper: {self.lower} / {self.upper}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, coords: Sequence[float], tol: float = 1e-12) -> bool:
        x = np.asarray(coords, dtype=float)
        return bool(np.all(x >= np.asarray(self.lower) - tol) and np.all(x <= np.asarray(self.upper) + tol))

    def to_unit(self, X: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lower)
        return (np.asarray(X, dtype=float) - lo) / (np.asarray(self.upper) - lo)

    def grid(self, per_dim: int) -> np.ndarray:
        axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class Candidate:
    coords: Tuple[float, ...]
    arm_id: Optional[int] = None

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    @classmethod
    def of(cls, coords: Union[Sequence[float], float, np.ndarray], arm_id: Optional[int] = None,
           box: Optional[SearchBox] = None) -> "Candidate":
        x = np.atleast_1d(np.asarray(coords, dtype=float))
        if box is not None:
            if x.shape[0] != box.dim:
                raise InputError(f"candidate dimension {x.shape[0]} != box dimension {box.dim}")
            if not box.contains(x):
                raise InputError(f"candidate {x.tolist()} outside search box")
        return cls(tuple(float(v) for v in x), arm_id)


@dataclass(frozen=True)
class MixtureSpec:
    weights: Tuple[float, ...]
    means: Tuple[Tuple[float, ...], ...]
    covariances: Tuple[Tuple[Tuple[float, ...], ...], ...]
    noise_sd: float
    _chol: List[Any] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.size == 0 or np.any(w <= 0):
            raise ConfigError("mixture weights must be positive")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ConfigError(f"mixture weights must sum to 1, got {float(w.sum())!r}")
        if self.noise_sd < 0:
            raise ConfigError("mixture noise_sd must be >= 0")
        if len(self.means) != w.size or len(self.covariances) != w.size:
            raise ConfigError("mixture needs one mean and one covariance per component")
        d = len(self.means[0])
        for mu, cov in zip(self.means, self.covariances):
            c = np.asarray(cov, dtype=float)
            if len(mu) != d or c.shape != (d, d):
                raise ConfigError(f"mixture component shapes inconsistent with dimension {d}")
            if not np.allclose(c, c.T):
                raise ConfigError("mixture covariance must be symmetric")
            try:
                self._chol.append(cho_factor(c, lower=True))
            except LinAlgError as e:
                raise ConfigError(f"mixture covariance is not positive definite: {e}") from e

    @property
    def dim(self) -> int:
        return len(self.means[0])

    @classmethod
    def build(cls, weights: Sequence[float], means: Sequence[Any], covariances: Sequence[Any],
              noise_sd: float) -> "MixtureSpec":
        """Скаляры в means/covariances трактуются как 1-D компоненты."""
        mus = tuple(tuple(float(v) for v in np.atleast_1d(m)) for m in means)
        covs = []
        for c in covariances:
            arr = np.asarray(c, dtype=float)
            if arr.ndim == 0:
                arr = arr.reshape(1, 1)
            elif arr.ndim == 1:
                arr = np.diag(arr)
            covs.append(tuple(tuple(float(v) for v in row) for row in arr))
        return cls(tuple(float(w) for w in weights), mus, tuple(covs), float(noise_sd))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weights": list(self.weights),
            "means": [list(m) for m in self.means],
            "covariances": [[list(r) for r in c] for c in self.covariances],
            "noise_sd": self.noise_sd,
        }


@dataclass(frozen=True)
class DragSurfaceSpec:
    camber_opt: float = 0.075
    thickness_opt: float = 0.14
    base_drag: float = 0.087
    curvature_c: float = 2.0
    curvature_t: float = 0.8
    cross_term: float = 0.3
    noise_sd: float = 0.002
    eval_delay: float = 0.0  # ms

    def __post_init__(self):
        if self.curvature_c <= 0 or self.curvature_t <= 0:
            raise ConfigError("drag curvatures must be > 0")
        if self.base_drag <= 0:
            raise ConfigError("base_drag must be > 0")
        if 4.0 * self.curvature_c * self.curvature_t <= self.cross_term ** 2:
            raise ConfigError("drag surface has no unique minimum (cross_term too large)")
        if self.noise_sd < 0 or self.eval_delay < 0:
            raise ConfigError("noise_sd and eval_delay must be >= 0")


# Эталонная 1-D смесь для симуляций seq vs distributed
REFERENCE_MIXTURE = MixtureSpec.build(
    weights=(0.4, 0.35, 0.25),
    means=(0.2, 0.55, 0.85),
    covariances=(0.004, 0.003, 0.005),
    noise_sd=0.1,
)
REFERENCE_ARMS = 15
REFERENCE_DRAG = DragSurfaceSpec()


# ================== Operations ==================

def _as_point(x: Union[Candidate, Sequence[float], float, np.ndarray], dim: int) -> np.ndarray:
    arr = x.array if isinstance(x, Candidate) else np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (dim,):
        raise InputError(f"point dimension {arr.shape} does not match mixture dimension {dim}")
    return arr


def true_mixture_mean(x: Union[Candidate, Sequence[float], float], spec: MixtureSpec) -> float:
    p = _as_point(x, spec.dim)
    total = 0.0
    for w, mu, chol in zip(spec.weights, spec.means, spec._chol):
        diff = p - np.asarray(mu)
        total += w * float(np.exp(-0.5 * diff @ cho_solve(chol, diff)))
    return total


def gaussian_mixture_reward(x: Union[Candidate, Sequence[float], float], spec: MixtureSpec,
                            rng: np.random.Generator, size: Optional[int] = None):
    """Значение смеси плюс шум N(0, σ²); одна нормальная выборка на оценку."""
    mean = true_mixture_mean(x, spec)
    if size is None:
        return mean + float(rng.normal(0.0, spec.noise_sd))
    return mean + rng.normal(0.0, spec.noise_sd, size=size)


def drag_noiseless(camber: float, thickness: float, spec: DragSurfaceSpec) -> float:
    dc = camber - spec.camber_opt
    dt = thickness - spec.thickness_opt
    return (spec.base_drag + spec.curvature_c * dc * dc + spec.curvature_t * dt * dt
            + spec.cross_term * dc * dt)


def mock_cfd_drag(camber: float, thickness: float, spec: DragSurfaceSpec,
                  rng: Optional[np.random.Generator] = None, emulate_cost: bool = False) -> float:
    if not (CAMBER_RANGE[0] - 1e-12 <= camber <= CAMBER_RANGE[1] + 1e-12):
        raise InputError(f"camber {camber} outside {CAMBER_RANGE}")
    if not (THICKNESS_RANGE[0] - 1e-12 <= thickness <= THICKNESS_RANGE[1] + 1e-12):
        raise InputError(f"thickness {thickness} outside {THICKNESS_RANGE}")
    drag = drag_noiseless(camber, thickness, spec)
    if rng is not None:
        drag += float(rng.normal(0.0, spec.noise_sd))
    if emulate_cost and spec.eval_delay > 0:
        time.sleep(spec.eval_delay / 1000.0)
    return drag


AIRFOIL_BOX = SearchBox((CAMBER_RANGE[0], THICKNESS_RANGE[0]), (CAMBER_RANGE[1], THICKNESS_RANGE[1]))


# ================== Arm environments ==================

class ArmEnvironment:
    """Дискретный набор рук; pull() чистая функция от (arm, состояние генератора)."""

    name = "arms"

    def __init__(self, candidates: List[Candidate], box: SearchBox, eval_cost_ms: float = 0.0):
        if not candidates:
            raise InputError("environment needs at least one arm")
        self.candidates = candidates
        self.box = box
        self.eval_cost_ms = float(eval_cost_ms)
        self._means: Optional[np.ndarray] = None

    @property
    def n_arms(self) -> int:
        return len(self.candidates)

    def _true_mean(self, arm: int) -> float:
        raise NotImplementedError

    def _draw(self, arm: int, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def true_means(self) -> np.ndarray:
        if self._means is None:
            self._means = np.array([self._true_mean(i) for i in range(self.n_arms)])
        return self._means

    def pull(self, arm: int, rng: np.random.Generator, emulate_cost: bool = False) -> float:
        if not 0 <= arm < self.n_arms:
            raise InputError(f"arm {arm} out of range 0..{self.n_arms - 1}")
        r = self._draw(arm, rng)
        if emulate_cost and self.eval_cost_ms > 0:
            time.sleep(self.eval_cost_ms / 1000.0)
        return r

    def with_cost(self, eval_cost_ms: float) -> "ArmEnvironment":
        raise NotImplementedError


class MixtureArms(ArmEnvironment):
    name = "mixture"

    def __init__(self, spec: MixtureSpec, candidates: List[Candidate], box: SearchBox,
                 eval_cost_ms: float = 0.0):
        super().__init__(candidates, box, eval_cost_ms)
        self.spec = spec
        for c in candidates:
            if len(c.coords) != spec.dim:
                raise InputError(f"arm {c.arm_id} dimension {len(c.coords)} != mixture dimension {spec.dim}")

    @classmethod
    def uniform_grid(cls, spec: MixtureSpec, n_arms: int, lower: float = 0.0, upper: float = 1.0,
                     eval_cost_ms: float = 0.0) -> "MixtureArms":
        if spec.dim != 1:
            raise InputError("uniform arm grid is defined for 1-D mixtures only; pass explicit arms")
        if n_arms < 1:
            raise InputError("n_arms must be >= 1")
        box = SearchBox((float(lower),), (float(upper),))
        xs = np.linspace(lower, upper, n_arms) if n_arms > 1 else np.array([0.5 * (lower + upper)])
        cands = [Candidate((float(x),), i) for i, x in enumerate(xs)]
        return cls(spec, cands, box, eval_cost_ms)

    def _true_mean(self, arm: int) -> float:
        return true_mixture_mean(self.candidates[arm], self.spec)

    def _draw(self, arm: int, rng: np.random.Generator) -> float:
        return self.true_means()[arm] + float(rng.normal(0.0, self.spec.noise_sd))

    def with_cost(self, eval_cost_ms: float) -> "MixtureArms":
        return MixtureArms(self.spec, self.candidates, self.box, eval_cost_ms)


class BernoulliArms(ArmEnvironment):
    name = "bernoulli"

    def __init__(self, probs: Sequence[float], eval_cost_ms: float = 0.0):
        p = [float(v) for v in probs]
        if any(not 0.0 <= v <= 1.0 for v in p):
            raise ConfigError("bernoulli probabilities must be in [0, 1]")
        a = len(p)
        cands = [Candidate((i / (a - 1) if a > 1 else 0.5,), i) for i in range(a)]
        super().__init__(cands, SearchBox((0.0,), (1.0,)), eval_cost_ms)
        self.probs = p

    def _true_mean(self, arm: int) -> float:
        return self.probs[arm]

    def _draw(self, arm: int, rng: np.random.Generator) -> float:
        return 1.0 if rng.random() < self.probs[arm] else 0.0

    def with_cost(self, eval_cost_ms: float) -> "BernoulliArms":
        return BernoulliArms(self.probs, eval_cost_ms)
