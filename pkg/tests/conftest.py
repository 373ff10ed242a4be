import json
import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

import early_env_override  # noqa: E402,F401

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from almab_bandit import ArmStats  # noqa: E402
from almab_env import REFERENCE_MIXTURE, BernoulliArms, MixtureArms  # noqa: E402


def make_stats(means, pulls, alpha=None, beta=None) -> ArmStats:
    means = np.asarray(means, dtype=float)
    return ArmStats(
        mean_hat=means,
        pulls=np.asarray(pulls, dtype=np.int64),
        alpha=np.ones_like(means) if alpha is None else np.asarray(alpha, dtype=float),
        beta=np.ones_like(means) if beta is None else np.asarray(beta, dtype=float),
        m2=np.zeros_like(means),
    )


REFERENCE_ENV_BLOCK = {
    "kind": "mixture",
    "mixture": {
        "weights": [0.4, 0.35, 0.25],
        "means": [0.2, 0.55, 0.85],
        "covariances": [0.004, 0.003, 0.005],
        "noise_sd": 0.1,
    },
    "arms": {"count": 15, "lower": 0.0, "upper": 1.0},
}


@pytest.fixture
def reference_arms() -> MixtureArms:
    return MixtureArms.uniform_grid(REFERENCE_MIXTURE, 15)


@pytest.fixture
def bernoulli_pair() -> BernoulliArms:
    return BernoulliArms([0.9, 0.5])


@pytest.fixture
def write_config(tmp_path):
    """Пишет dict как JSON-конфиг и возвращает путь."""

    def _write(data, name="config.json"):
        p = tmp_path / name
        p.write_text(json.dumps(data, indent=2), encoding="utf-8")
        return str(p)

    return _write


@pytest.fixture(autouse=True)
def _no_thread_cap(monkeypatch):
    monkeypatch.delenv("ALMAB_THREADS", raising=False)
