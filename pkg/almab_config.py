# -*- coding: utf-8 -*-
"""
almab_config.py
Конфигурация экспериментов: один JSON-документ (ExperimentConfig) и
переменные окружения процесса (.env через python-dotenv).

Неизвестные ключи - жёсткая ошибка с номером строки ключа в исходном тексте.
Все вложенные инварианты проверяются при загрузке, до старта любых прогонов.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv

from almab_acquisition import AcquisitionKind, AcquisitionSpec, Direction
from almab_bandit import BERNOULLI, GAUSSIAN, SQRT2
from almab_env import (
    REFERENCE_ARMS,
    REFERENCE_DRAG,
    REFERENCE_MIXTURE,
    ArmEnvironment,
    BernoulliArms,
    Candidate,
    DragSurfaceSpec,
    MixtureArms,
    MixtureSpec,
    SearchBox,
)
from almab_errors import AlmabError, ConfigError
from almab_scaling import ScalingParams
from almab_state import Policy, RunConfig
from almab_stats import BootstrapSpec
from almab_surrogate import GpSettings

logger = logging.getLogger(__name__)

load_dotenv()

SCHEMA_VERSION = 1

# ================== ENV helpers ==================

def _getenv_str(name: str, default: str = "") -> str:
    v = os.getenv(name)
    return default if v is None else v


def _getenv_int(name: str, default: int) -> int:
    v = os.getenv(name)
    if v is None or v == "":
        return default
    try:
        return int(v)
    except Exception:
        try:
            return int(float(v))
        except Exception:
            return default


def _getenv_bool(name: str, default: bool) -> bool:
    v = os.getenv(name)
    if v is None or v == "":
        return default
    return str(v).strip().lower() in ("1", "true", "yes", "on")


LOG_LEVEL = _getenv_str("LOG_LEVEL", "INFO").upper()
ALMAB_OUT_DIR = _getenv_str("ALMAB_OUT_DIR", "out")
ALMAB_PROGRESS = _getenv_bool("ALMAB_PROGRESS", False)


def thread_cap(n_agents: int) -> int:
    """Число потоков оценки: ALMAB_THREADS (если задан), не больше числа агентов."""
    return max(1, min(n_agents, _getenv_int("ALMAB_THREADS", n_agents)))


# ================== Settings blocks ==================

@dataclass(frozen=True)
class AirfoilSettings:
    initial_points: int = 5
    iterations: int = 10
    grid: int = 41
    workers: int = 1
    top_k: int = 5
    acquisition: AcquisitionKind = AcquisitionKind.EXPECTED_IMPROVEMENT
    cpu_counts: Tuple[int, ...] = ()
    emulate_cost: bool = False

    def __post_init__(self):
        object.__setattr__(self, "acquisition", AcquisitionKind(self.acquisition))
        if self.initial_points < 1 or self.iterations < 0 or self.top_k < 1:
            raise ConfigError("airfoil needs initial_points >= 1, iterations >= 0, top_k >= 1")
        if self.grid < 2:
            raise ConfigError("airfoil grid must be >= 2 points per axis", key="grid")
        if self.workers < 1 or any(c < 1 for c in self.cpu_counts):
            raise ConfigError("airfoil workers and cpu_counts must be >= 1")
        if self.workers > self.grid ** 2:
            raise ConfigError("airfoil workers exceed candidate grid size", key="workers")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "initial_points": self.initial_points,
            "iterations": self.iterations,
            "grid": self.grid,
            "workers": self.workers,
            "top_k": self.top_k,
            "acquisition": self.acquisition.value,
            "cpu_counts": list(self.cpu_counts),
            "emulate_cost": self.emulate_cost,
        }


@dataclass(frozen=True)
class ScalingSettings:
    params: ScalingParams = field(default_factory=ScalingParams)
    k_max: int = 64

    def to_dict(self) -> Dict[str, Any]:
        d = self.params.to_dict()
        d["k_max"] = self.k_max
        return d


@dataclass(frozen=True)
class CompareSettings:
    eval_cost_ms: float = 10.0
    sequential: str = "sequential"
    distributed: str = "distributed"

    def to_dict(self) -> Dict[str, Any]:
        return {"eval_cost_ms": self.eval_cost_ms, "sequential": self.sequential,
                "distributed": self.distributed}


@dataclass(frozen=True)
class AnalyzeSettings:
    metrics: Tuple[str, ...] = ("regret_pseudo_cum", "regret_realized_cum", "reward_mean_agents")
    baseline: str = "sequential"
    statistic: str = "mean"

    def to_dict(self) -> Dict[str, Any]:
        return {"metrics": list(self.metrics), "baseline": self.baseline, "statistic": self.statistic}


ENV_KINDS = ("mixture", "bernoulli", "drag")


@dataclass(frozen=True)
class EnvironmentConfig:
    kind: str = "mixture"
    mixture: MixtureSpec = REFERENCE_MIXTURE
    arm_count: int = REFERENCE_ARMS
    arm_lower: float = 0.0
    arm_upper: float = 1.0
    arm_points: Tuple[Tuple[float, ...], ...] = ()
    probs: Tuple[float, ...] = ()
    drag: DragSurfaceSpec = REFERENCE_DRAG
    eval_cost_ms: float = 0.0

    def build_arms(self) -> ArmEnvironment:
        if self.kind == "bernoulli":
            return BernoulliArms(self.probs, self.eval_cost_ms)
        if self.kind == "mixture":
            if not self.arm_points:
                return MixtureArms.uniform_grid(self.mixture, self.arm_count, self.arm_lower, self.arm_upper,
                                                self.eval_cost_ms)
            d = self.mixture.dim
            box = SearchBox(tuple([self.arm_lower] * d), tuple([self.arm_upper] * d))
            cands = [Candidate.of(p, i, box) for i, p in enumerate(self.arm_points)]
            return MixtureArms(self.mixture, cands, box, self.eval_cost_ms)
        raise ConfigError(f"environment kind {self.kind!r} has no discrete arms", key="kind")

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {"kind": self.kind, "eval_cost_ms": self.eval_cost_ms}
        if self.kind == "mixture":
            d["mixture"] = self.mixture.to_dict()
            d["arms"] = {"count": self.arm_count, "lower": self.arm_lower, "upper": self.arm_upper,
                         "points": [list(p) for p in self.arm_points]}
        elif self.kind == "bernoulli":
            d["probs"] = list(self.probs)
        else:
            d["drag"] = {k: getattr(self.drag, k) for k in self.drag.__dataclass_fields__}
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    runs: Dict[str, RunConfig] = field(default_factory=dict)
    active_learning: Dict[str, bool] = field(default_factory=dict)
    acquisition: Optional[AcquisitionSpec] = None
    gp: GpSettings = field(default_factory=GpSettings)
    airfoil: AirfoilSettings = field(default_factory=AirfoilSettings)
    scaling: ScalingSettings = field(default_factory=ScalingSettings)
    bootstrap: BootstrapSpec = field(default_factory=BootstrapSpec)
    compare: CompareSettings = field(default_factory=CompareSettings)
    analyze: AnalyzeSettings = field(default_factory=AnalyzeSettings)
    output_dir: str = ""
    replicates: int = 1
    seed: int = 0

    def run_config(self, name: str, replicate: int = 0) -> RunConfig:
        if name not in self.runs:
            raise ConfigError(f"no run named {name!r} in config", key=name)
        return self.runs[name].replace(seed=self.seed + replicate)

    def with_overrides(self, seed: Optional[int] = None, replicates: Optional[int] = None,
                       output_dir: Optional[str] = None) -> "ExperimentConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if seed is not None:
            data["seed"] = int(seed)
        if replicates is not None:
            if replicates < 1:
                raise ConfigError("replicates must be >= 1", key="replicates")
            data["replicates"] = int(replicates)
        if output_dir:
            data["output_dir"] = output_dir
        return ExperimentConfig(**data)

    def to_dict(self) -> Dict[str, Any]:
        runs = {}
        for name, rc in self.runs.items():
            runs[name] = {
                "T": rc.T,
                "N": rc.N,
                "policy": rc.policy.value,
                "ucb_c": rc.ucb_c,
                "reward_model": rc.reward_model,
                "delay_max": rc.delay_max,
                "comm_cost_per_report": rc.comm_cost_per_report,
                "lambda": rc.lam,
                "independent_agents": rc.independent_agents,
                "active_learning": self.active_learning.get(name, False),
            }
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "replicates": self.replicates,
            "output_dir": self.output_dir,
            "environment": self.environment.to_dict(),
            "runs": runs,
            "acquisition": self.acquisition.to_dict() if self.acquisition else None,
            "gp": self.gp.to_dict(),
            "airfoil": self.airfoil.to_dict(),
            "scaling": self.scaling.to_dict(),
            "bootstrap": self.bootstrap.to_dict(),
            "compare": self.compare.to_dict(),
            "analyze": self.analyze.to_dict(),
        }


# ================== Parsing ==================

_REQUIRED = object()


def _line_of(text: str, key: str) -> Optional[int]:
    pat = re.compile(r'"%s"\s*:' % re.escape(key))
    for i, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return i
    return None


class _Block:
    """Обёртка над JSON-объектом: типизированные чтения + контроль неизвестных ключей."""

    def __init__(self, data: Any, path: str, text: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must be a JSON object", line=_line_of(text, path.rsplit(".", 1)[-1]))
        self.data = data
        self.path = path
        self.text = text
        self.used: set = set()

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(f"{self.path}.{key}: {message}", line=_line_of(self.text, key), key=key)

    def take(self, key: str, kind: type, default: Any = _REQUIRED) -> Any:
        self.used.add(key)
        if key not in self.data or self.data[key] is None:
            if default is _REQUIRED:
                raise ConfigError(f"{self.path}.{key} is required", key=key)
            return default
        v = self.data[key]
        if kind is float:
            ok = isinstance(v, (int, float)) and not isinstance(v, bool)
            v = float(v) if ok else v
        elif kind is int:
            ok = isinstance(v, int) and not isinstance(v, bool)
        else:
            ok = isinstance(v, kind)
        if not ok:
            raise self.error(key, f"expected {kind.__name__}, got {type(v).__name__}")
        return v

    def block(self, key: str) -> Optional["_Block"]:
        self.used.add(key)
        if key not in self.data or self.data[key] is None:
            return None
        return _Block(self.data[key], f"{self.path}.{key}", self.text)

    def finish(self):
        unknown = sorted(set(self.data) - self.used)
        if unknown:
            k = unknown[0]
            raise ConfigError(f"unknown key {self.path}.{k}", line=_line_of(self.text, k), key=k)


def _floats(b: _Block, key: str, default: Tuple[float, ...]) -> Tuple[float, ...]:
    raw = b.take(key, list, None)
    if raw is None:
        return default
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in raw):
        raise b.error(key, "expected a list of numbers")
    return tuple(float(v) for v in raw)


def _ints(b: _Block, key: str, default: Tuple[int, ...]) -> Tuple[int, ...]:
    raw = b.take(key, list, None)
    if raw is None:
        return default
    if any(isinstance(v, bool) or not isinstance(v, int) for v in raw):
        raise b.error(key, "expected a list of integers")
    return tuple(raw)


def _wrap(b: _Block, key: str, fn):
    try:
        return fn()
    except ConfigError as e:
        if e.line is None:
            k = e.key or key
            raise ConfigError(f"{b.path}.{k}: {e}", line=_line_of(b.text, k), key=k) from e
        raise
    except (AlmabError, ValueError, TypeError) as e:
        raise b.error(key, str(e)) from e


def _parse_environment(b: _Block) -> EnvironmentConfig:
    kind = b.take("kind", str, "mixture")
    if kind not in ENV_KINDS:
        raise b.error("kind", f"must be one of {ENV_KINDS}")
    eval_cost = b.take("eval_cost_ms", float, 0.0)
    if eval_cost < 0:
        raise b.error("eval_cost_ms", "must be >= 0")
    mixture, arm_count, lower, upper, points = REFERENCE_MIXTURE, REFERENCE_ARMS, 0.0, 1.0, ()
    probs: Tuple[float, ...] = ()
    drag = REFERENCE_DRAG

    mb = b.block("mixture")
    if mb is not None:
        weights = _floats(mb, "weights", ())
        means = mb.take("means", list)
        covs = mb.take("covariances", list)
        noise = mb.take("noise_sd", float)
        mb.finish()
        mixture = _wrap(b, "mixture", lambda: MixtureSpec.build(weights, means, covs, noise))
    ab = b.block("arms")
    if ab is not None:
        arm_count = ab.take("count", int, REFERENCE_ARMS)
        lower = ab.take("lower", float, 0.0)
        upper = ab.take("upper", float, 1.0)
        raw_pts = ab.take("points", list, [])
        ab.finish()
        if arm_count < 1:
            raise ab.error("count", "must be >= 1")
        if lower >= upper:
            raise ab.error("upper", "must be > lower")
        points = tuple(tuple(float(v) for v in (p if isinstance(p, list) else [p])) for p in raw_pts)
    if kind == "bernoulli":
        probs = _floats(b, "probs", ())
        if not probs:
            raise b.error("probs", "bernoulli environment needs probs")
    else:
        b.used.add("probs")
        if b.data.get("probs"):
            raise b.error("probs", "only valid for the bernoulli environment")
    db = b.block("drag")
    if db is not None:
        fields = {}
        for k in DragSurfaceSpec.__dataclass_fields__:
            v = db.take(k, float, None)
            if v is not None:
                fields[k] = v
        db.finish()
        drag = _wrap(b, "drag", lambda: DragSurfaceSpec(**fields))
    b.finish()
    env = EnvironmentConfig(kind, mixture, arm_count, lower, upper, points, probs, drag, eval_cost)
    if kind != "drag":
        _wrap(b, "arms" if kind == "mixture" else "probs", env.build_arms)
    return env


def _parse_run(b: _Block, seed: int, acquisition: Optional[AcquisitionSpec], gp: GpSettings) -> Tuple[RunConfig, bool]:
    T = b.take("T", int)
    N = b.take("N", int, 1)
    policy = b.take("policy", str, Policy.UCB.value)
    if policy not in {p.value for p in Policy}:
        raise b.error("policy", f"must be one of {[p.value for p in Policy]}")
    ucb_c = b.take("ucb_c", float, SQRT2)
    reward_model = b.take("reward_model", str, GAUSSIAN)
    if reward_model not in (GAUSSIAN, BERNOULLI):
        raise b.error("reward_model", f"must be {GAUSSIAN} or {BERNOULLI}")
    delay_max = b.take("delay_max", int, 0)
    cost = b.take("comm_cost_per_report", float, 0.0)
    lam = b.take("lambda", float, 0.0)
    independent = b.take("independent_agents", bool, False)
    al = b.take("active_learning", bool, False)
    b.finish()
    if al and acquisition is None:
        raise b.error("active_learning", "needs a top-level acquisition block")
    rc = _wrap(b, "T", lambda: RunConfig(
        T=T, N=N, policy=Policy(policy), ucb_c=ucb_c, reward_model=reward_model,
        acquisition=acquisition if al else None, gp=gp, delay_max=delay_max,
        comm_cost_per_report=cost, lam=lam, seed=seed, independent_agents=independent,
    ))
    return rc, al


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: invalid JSON: {e.msg}", line=e.lineno) from e
    root = _Block(data, "config", text)
    root.take("schema_version", int, SCHEMA_VERSION)
    seed = root.take("seed", int, 0)
    replicates = root.take("replicates", int, 1)
    if replicates < 1:
        raise root.error("replicates", "must be >= 1")
    output_dir = root.take("output_dir", str, "")

    eb = root.block("environment")
    environment = _parse_environment(eb) if eb is not None else EnvironmentConfig()

    gb = root.block("gp")
    gp = GpSettings()
    if gb is not None:
        vals = dict(
            lengthscale=gb.take("lengthscale", float, gp.lengthscale),
            signal_var=gb.take("signal_var", float, gp.signal_var),
            noise_var=gb.take("noise_var", float, gp.noise_var),
            normalize=gb.take("normalize", bool, gp.normalize),
            standardize=gb.take("standardize", bool, gp.standardize),
        )
        gb.finish()
        gp = _wrap(root, "gp", lambda: GpSettings(**vals))

    acq = None
    qb = root.block("acquisition")
    if qb is not None:
        kind = qb.take("kind", str, AcquisitionKind.EXPECTED_IMPROVEMENT.value)
        batch = qb.take("batch_size", int, 1)
        direction = qb.take("direction", str, Direction.MAXIMIZE.value)
        qb.finish()
        acq = _wrap(root, "acquisition", lambda: AcquisitionSpec(kind, batch, direction))

    runs: Dict[str, RunConfig] = {}
    al_flags: Dict[str, bool] = {}
    rb = root.block("runs")
    if rb is not None:
        for name in list(rb.data):
            rc, al = _parse_run(rb.block(name), seed, acq, gp)
            runs[name] = rc
            al_flags[name] = al
        rb.finish()
        if acq is not None and any(al_flags.values()) and environment.kind != "drag":
            n_arms = environment.build_arms().n_arms
            if acq.batch_size > n_arms:
                raise ConfigError(f"acquisition batch_size={acq.batch_size} exceeds arm count {n_arms}",
                                  line=_line_of(text, "batch_size"), key="batch_size")

    fb = root.block("airfoil")
    airfoil = AirfoilSettings()
    if fb is not None:
        vals = dict(
            initial_points=fb.take("initial_points", int, airfoil.initial_points),
            iterations=fb.take("iterations", int, airfoil.iterations),
            grid=fb.take("grid", int, airfoil.grid),
            workers=fb.take("workers", int, airfoil.workers),
            top_k=fb.take("top_k", int, airfoil.top_k),
            acquisition=fb.take("acquisition", str, airfoil.acquisition.value),
            cpu_counts=_ints(fb, "cpu_counts", ()),
            emulate_cost=fb.take("emulate_cost", bool, airfoil.emulate_cost),
        )
        fb.finish()
        airfoil = _wrap(root, "airfoil", lambda: AirfoilSettings(**vals))

    sb = root.block("scaling")
    scaling = ScalingSettings()
    if sb is not None:
        p = scaling.params
        vals = dict(
            serial_fraction=sb.take("serial_fraction", float, p.serial_fraction),
            efficiency=sb.take("efficiency", float, p.efficiency),
            comm_alpha=sb.take("comm_alpha", float, p.comm_alpha),
            comm_beta=sb.take("comm_beta", float, p.comm_beta),
            task_costs=_floats(sb, "task_costs", p.task_costs),
        )
        k_max = sb.take("k_max", int, scaling.k_max)
        sb.finish()
        if k_max < 1:
            raise sb.error("k_max", "must be >= 1")
        scaling = ScalingSettings(_wrap(root, "scaling", lambda: ScalingParams(**vals)), k_max)

    bb = root.block("bootstrap")
    bootstrap = BootstrapSpec(seed=seed)
    if bb is not None:
        B = bb.take("B", int, bootstrap.B)
        alpha = bb.take("alpha", float, bootstrap.alpha)
        bseed = bb.take("seed", int, seed)
        bb.finish()
        bootstrap = _wrap(root, "bootstrap", lambda: BootstrapSpec(B, alpha, bseed))

    cb = root.block("compare")
    compare = CompareSettings()
    if cb is not None:
        compare = CompareSettings(
            eval_cost_ms=cb.take("eval_cost_ms", float, compare.eval_cost_ms),
            sequential=cb.take("sequential", str, compare.sequential),
            distributed=cb.take("distributed", str, compare.distributed),
        )
        cb.finish()
        if compare.eval_cost_ms < 0:
            raise cb.error("eval_cost_ms", "must be >= 0")

    nb = root.block("analyze")
    analyze = AnalyzeSettings()
    if nb is not None:
        analyze = AnalyzeSettings(
            metrics=tuple(str(m) for m in nb.take("metrics", list, list(analyze.metrics))),
            baseline=nb.take("baseline", str, analyze.baseline),
            statistic=nb.take("statistic", str, analyze.statistic),
        )
        nb.finish()
        if analyze.statistic not in ("mean", "median"):
            raise nb.error("statistic", "must be mean or median")

    root.finish()
    cfg = ExperimentConfig(environment, runs, al_flags, acq, gp, airfoil, scaling, bootstrap, compare,
                           analyze, output_dir, replicates, seed)
    logger.debug("config loaded source=%s runs=%s env=%s", source, list(runs), environment.kind)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, source=str(p))


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), ensure_ascii=False, indent=2)
