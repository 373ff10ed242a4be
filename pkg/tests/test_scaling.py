import numpy as np
import pytest

from almab_errors import InputError, NumericalError
from almab_scaling import (
    ScalingParams,
    amdahl_speedup,
    amdahl_time,
    closed_form_agents,
    comm_time,
    gustafson_speedup,
    optimal_agents,
    parallel_efficiency,
    scaling_rows,
)


def _p(p=0.1, eta=1.0, alpha=0.01, beta=0.5, costs=(100.0,)):
    return ScalingParams(serial_fraction=p, efficiency=eta, comm_alpha=alpha, comm_beta=beta, task_costs=costs)


# ================== Amdahl / Gustafson ==================

def test_amdahl_time_limits():
    for k in (1, 3, 17):
        assert amdahl_time(k, _p(p=1.0)) == pytest.approx(100.0)
        assert amdahl_time(k, _p(p=0.0)) == pytest.approx(100.0 / k)


def test_amdahl_time_value():
    assert amdahl_time(8, _p(costs=(60.0, 40.0))) == pytest.approx(21.25, abs=1e-12)


def test_amdahl_speedup_values():
    assert amdahl_speedup(4, _p(p=0.0)) == pytest.approx(4.0)
    assert amdahl_speedup(8, _p()) == pytest.approx(4.7059, abs=1e-4)


def test_speedup_times_time_is_serial_time():
    rng = np.random.default_rng(0)
    for _ in range(200):
        params = _p(p=float(rng.uniform(0, 1)), costs=tuple(rng.uniform(0, 10, 3)))
        k = float(rng.integers(1, 1000))
        assert amdahl_speedup(k, params) * amdahl_time(k, params) == pytest.approx(amdahl_time(1, params), rel=1e-12)


def test_amdahl_ceiling_and_gustafson_ordering():
    params = _p(p=0.05)
    for k in range(1, 2000, 37):
        s = amdahl_speedup(k, params)
        assert s <= 1 / 0.05 + 1e-12
        assert gustafson_speedup(k, params) >= s - 1e-12


def test_gustafson_values():
    assert gustafson_speedup(1, _p(p=0.37)) == pytest.approx(1.0)
    assert gustafson_speedup(8, _p()) == pytest.approx(7.3)


def test_agent_count_must_be_positive():
    with pytest.raises(InputError):
        amdahl_time(0, _p())
    with pytest.raises(InputError):
        amdahl_speedup(0, _p())


def test_scaling_params_validation():
    with pytest.raises(InputError):
        _p(p=1.2)
    with pytest.raises(InputError):
        _p(eta=0.0)
    with pytest.raises(InputError):
        _p(beta=0.3)
    with pytest.raises(InputError):
        _p(alpha=-0.1)
    with pytest.raises(InputError):
        _p(costs=())


# ================== efficiency ==================

def test_parallel_efficiency_values():
    assert parallel_efficiency(100, _p(alpha=0.01, beta=1.0)) == pytest.approx(0.5)
    assert all(parallel_efficiency(k, _p(alpha=0.0)) == 1.0 for k in (1, 10, 1000))


def test_parallel_efficiency_identity_and_monotone():
    rng = np.random.default_rng(1)
    for _ in range(100):
        params = _p(alpha=float(rng.uniform(0, 1)), beta=float(rng.uniform(0.5, 1)))
        k = float(rng.uniform(1, 1e4))
        assert parallel_efficiency(k, params) * (1 + params.comm_alpha * k ** params.comm_beta) == pytest.approx(1.0, abs=1e-12)
    eff = [parallel_efficiency(k, _p()) for k in range(1, 10_001)]
    assert all(a > b for a, b in zip(eff, eff[1:]))


# ================== optimal agents ==================

def test_closed_form_value():
    assert closed_form_agents(_p(p=0.05)) == pytest.approx(243.6, abs=0.5)


def test_closed_form_decreasing_in_alpha():
    values = [closed_form_agents(_p(p=0.05, alpha=a)) for a in (0.001, 0.01, 0.1, 1.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_numeric_minimizer_agrees_with_closed_form():
    out = optimal_agents(_p(p=0.05, costs=(1.0,)))
    assert out.relative_gap < 1e-3
    assert out.numeric_time == pytest.approx(comm_time(out.numeric, _p(p=0.05, costs=(1.0,))))


def test_numeric_minimizer_first_order_condition():
    params = _p(p=0.05, costs=(1.0,))
    k = optimal_agents(params).numeric
    h = 1e-3 * k
    slope = (comm_time(k + h, params) - comm_time(k - h, params)) / (2 * h)
    assert abs(slope) < 1e-6 * comm_time(k, params)


def test_numeric_minimizer_is_local_minimum():
    params = _p(p=0.05, costs=(1.0,))
    k = optimal_agents(params).numeric
    t = comm_time(k, params)
    assert comm_time(1.01 * k, params) > t
    assert comm_time(0.99 * k, params) > t


def test_eta_model_runs_to_search_bound():
    out = optimal_agents(_p(p=0.05, costs=(1.0,)), k_max=1e4)
    assert out.eta_model_at_bound
    assert out.to_dict()["k_star_closed"] == out.closed_form


@pytest.mark.parametrize("p,alpha", [(0.0, 0.01), (1.0, 0.01), (0.05, 0.0)])
def test_no_finite_optimum(p, alpha):
    with pytest.raises(NumericalError):
        closed_form_agents(_p(p=p, alpha=alpha))
    with pytest.raises(NumericalError):
        optimal_agents(_p(p=p, alpha=alpha))


def test_scaling_rows_ideal_parallel():
    rows = scaling_rows(_p(p=0.0, alpha=0.0), range(1, 9))
    assert [r["K"] for r in rows] == list(range(1, 9))
    for r in rows:
        assert r["amdahl_speedup"] == pytest.approx(r["K"])
        assert r["efficiency"] == 1.0
