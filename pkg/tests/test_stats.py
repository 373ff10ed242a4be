import numpy as np
import pytest
from scipy.stats import wilcoxon

from almab_errors import InputError, NumericalError
from almab_stats import BootstrapSpec, Statistic, bootstrap_ci, wilcoxon_signed_rank


# ================== bootstrap ==================

def test_constant_samples_give_degenerate_interval():
    res = bootstrap_ci([2.5] * 12)
    assert res.as_tuple() == (2.5, 2.5, 2.5)
    assert bootstrap_ci([2.5] * 12, statistic=Statistic.MEDIAN).as_tuple() == (2.5, 2.5, 2.5)


def test_bootstrap_is_deterministic_per_seed():
    x = np.random.default_rng(0).normal(size=40)
    assert bootstrap_ci(x, BootstrapSpec(seed=3)) == bootstrap_ci(x, BootstrapSpec(seed=3))
    assert bootstrap_ci(x, BootstrapSpec(seed=3)) != bootstrap_ci(x, BootstrapSpec(seed=4))


def test_lower_never_exceeds_upper():
    rng = np.random.default_rng(1)
    for i in range(30):
        x = rng.exponential(size=int(rng.integers(1, 30)))
        res = bootstrap_ci(x, BootstrapSpec(B=200, seed=i), "median")
        assert res.lower <= res.upper


def test_interval_narrows_with_more_samples():
    rng = np.random.default_rng(2)
    widths = []
    for n in (10, 100, 1000):
        w = []
        for rep in range(20):
            res = bootstrap_ci(rng.normal(size=n), BootstrapSpec(seed=rep))
            w.append(res.upper - res.lower)
        widths.append(float(np.median(w)))
    assert widths[0] >= widths[1] >= widths[2]


@pytest.mark.slow
def test_bootstrap_coverage_near_nominal():
    rng = np.random.default_rng(3)
    runs = 1000
    hits = 0
    for i in range(runs):
        res = bootstrap_ci(rng.normal(size=50), BootstrapSpec(seed=i))
        hits += res.lower <= 0.0 <= res.upper
    assert abs(hits / runs - 0.95) <= 0.03


def test_bootstrap_errors():
    with pytest.raises(InputError):
        bootstrap_ci([])
    with pytest.raises(InputError):
        BootstrapSpec(B=50)
    with pytest.raises(InputError):
        BootstrapSpec(alpha=1.0)


# ================== Wilcoxon ==================

def test_wilcoxon_detects_constant_shift():
    x = np.random.default_rng(4).normal(size=20)
    res = wilcoxon_signed_rank(x, x + 10)
    assert res.p_value < 0.001
    assert res.w_plus == 0.0
    assert res.statistic == 0.0


def test_wilcoxon_symmetric_in_arguments():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=25), rng.normal(0.3, 1, size=25)
    assert wilcoxon_signed_rank(x, y).p_value == pytest.approx(wilcoxon_signed_rank(y, x).p_value, abs=1e-15)


def test_wilcoxon_rank_sums_and_ranges():
    rng = np.random.default_rng(6)
    for _ in range(50):
        n = int(rng.integers(6, 40))
        x = np.round(rng.normal(size=n), 1)
        y = np.round(rng.normal(size=n), 1)
        if np.all(x == y):
            continue
        res = wilcoxon_signed_rank(x, y)
        assert res.w_plus + res.w_minus == pytest.approx(res.n * (res.n + 1) / 2)
        assert 0.0 <= res.p_value <= 1.0
        assert res.statistic >= 0.0


def test_wilcoxon_uses_continuity_corrected_normal_approximation():
    # разности 1..5 и -6: W⁺ = 15, W⁻ = 6, z = (6 - 10.5 + 0.5) / sqrt(22.75)
    x = [1.0, 2.0, 3.0, 4.0, 5.0, 0.0]
    y = [0.0, 0.0, 0.0, 0.0, 0.0, 6.0]
    res = wilcoxon_signed_rank(x, y)
    assert (res.w_plus, res.w_minus, res.statistic) == (15.0, 6.0, 6.0)
    assert res.p_value == pytest.approx(0.4017, abs=1e-3)


def test_wilcoxon_matches_scipy_with_ties_and_zeros():
    rng = np.random.default_rng(8)
    x = np.round(rng.normal(size=30), 1)
    y = np.round(x + rng.normal(0.2, 0.5, size=30), 1)
    ref = wilcoxon(x, y, zero_method="wilcox", correction=True, method="approx")
    res = wilcoxon_signed_rank(x, y)
    assert res.statistic == pytest.approx(float(ref.statistic))
    assert res.p_value == pytest.approx(float(ref.pvalue), rel=1e-12)
    assert res.n == int(np.count_nonzero(x - y))


def test_wilcoxon_drops_zero_differences():
    x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
    y = [1.0, 2.0, 2.5, 3.0, 4.5, 5.0, 6.5, 7.0]
    assert wilcoxon_signed_rank(x, y).n == 6


@pytest.mark.slow
def test_wilcoxon_null_calibration():
    rng = np.random.default_rng(7)
    sims = 1000
    rejections = 0
    for _ in range(sims):
        x = rng.normal(size=50)
        rejections += wilcoxon_signed_rank(x, x + rng.normal(size=50)).p_value < 0.05
    assert abs(rejections / sims - 0.05) <= 0.03


def test_wilcoxon_errors():
    with pytest.raises(InputError):
        wilcoxon_signed_rank([1.0] * 6, [1.0] * 7)
    with pytest.raises(InputError):
        wilcoxon_signed_rank([1.0] * 5, [2.0] * 5)
    with pytest.raises(NumericalError):
        wilcoxon_signed_rank([1.0] * 8, [1.0] * 8)
