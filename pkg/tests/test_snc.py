import math

import numpy as np
import pytest

from nomaq import snc


def _flat_service(prob, rate, eps, n_d=1):
    prob = np.asarray(prob, dtype=float)
    rate = np.asarray(rate, dtype=float)
    eps = np.asarray(eps, dtype=float)
    return snc.ServiceSpec.from_arrays(prob, rate, eps, rate, eps, n_d)


TWO_POINT = _flat_service([0.5, 0.5], [1.0, 2.0], [0.0, 0.0], n_d=1)


def test_mellin_arrival():
    assert snc.mellin_arrival(snc.ArrivalSpec(0.0), 3.0) == 1.0
    assert snc.mellin_arrival(snc.ArrivalSpec(560.0), 0.001) == pytest.approx(
        math.exp(0.56), rel=1e-12)
    a = snc.ArrivalSpec(10.0)
    assert snc.mellin_arrival(a, 0.2) < snc.mellin_arrival(a, 0.3)
    assert snc.mellin_arrival(snc.ArrivalSpec(20.0), 0.2) > snc.mellin_arrival(a, 0.2)
    with pytest.raises(ValueError):
        snc.mellin_arrival(a, 0.0)
    with pytest.raises(ValueError):
        snc.ArrivalSpec(-1.0)


def test_mellin_service_closed_cases():
    const = _flat_service([0.25, 0.75], [2.0, 2.0], [0.0, 0.0], n_d=3)
    assert snc.mellin_service(const, 1, 0.5) == pytest.approx(
        math.exp(-0.5 * 3 * 2.0), rel=1e-12)
    dead = _flat_service([0.5, 0.5], [1.0, 2.0], [1.0, 1.0])
    assert snc.mellin_service(dead, 1, 1.0) == 1.0
    assert snc.mellin_service(TWO_POINT, 2, 1.0) == pytest.approx(
        0.5 * math.exp(-1.0) + 0.5 * math.exp(-2.0), rel=1e-12)
    assert snc.mellin_service(TWO_POINT, 1, 1.0) == pytest.approx(0.25161, abs=5e-5)


def test_service_spec_validation():
    with pytest.raises(ValueError):
        _flat_service([0.5, 0.5], [1.0, 2.0], [0.0, 1.5])
    with pytest.raises(ValueError):
        snc.ServiceSpec.from_arrays([1.0], [1.0], [0.0], [1.0, 2.0], [0.0, 0.0], 1)
    with pytest.raises(ValueError):
        _flat_service([1.0], [1.0], [0.0], n_d=0)
    with pytest.raises(ValueError):
        snc.ServiceSpec(grid=None, policy=None, n_d=5)
    with pytest.raises(ValueError):
        TWO_POINT.user_arrays(3)


def test_stability_and_kernel():
    assert snc.stability(1.0, 0.5)
    assert not snc.stability(2.0, 0.5)  # boundary counts as unstable
    assert snc.stability(1.7507, 0.5)
    assert snc.kernel(1.0, 0.5, 2) == pytest.approx(0.5, rel=1e-14)
    assert snc.kernel(1.0, 0.5, 0) == pytest.approx(2.0, rel=1e-14)
    assert snc.kernel(1.0, 0.6, 2) > snc.kernel(1.0, 0.5, 2)
    assert snc.kernel(1.5, 0.5, 2) > snc.kernel(1.0, 0.5, 2)
    with pytest.raises(snc.StabilityError):
        snc.kernel(2.0, 0.5, 2)


def test_delay_bound_matches_dense_scan():
    arrival = snc.ArrivalSpec(0.7)
    got = snc.delay_bound(arrival, TWO_POINT, 1, w=4)
    # brute-force oracle: dense scan over s
    best = math.inf
    for s in np.geomspace(1e-6, 20.0, 200_001):
        ma = math.exp(s * arrival.alpha)
        ms = 0.5 * math.exp(-s) + 0.5 * math.exp(-2 * s)
        if ma * ms < 1.0:
            best = min(best, ms**4 / (1.0 - ma * ms))
    assert got.bound == pytest.approx(best, rel=1e-6)
    assert got.s_opt > 0
    # the returned bound is a true kernel value, so it bounds the infimum
    ma = math.exp(got.s_opt * arrival.alpha)
    ms = 0.5 * math.exp(-got.s_opt) + 0.5 * math.exp(-2 * got.s_opt)
    assert got.bound == pytest.approx(snc.kernel(ma, ms, 4), rel=1e-9)


def test_delay_bound_never_above_sampled_kernels():
    arrival = snc.ArrivalSpec(0.4)
    got = snc.delay_bound(arrival, TWO_POINT, 1, w=3)
    rng = np.random.default_rng(4)
    for s in rng.uniform(0.01, 8.0, 200):
        ma = math.exp(s * arrival.alpha)
        ms = 0.5 * math.exp(-s) + 0.5 * math.exp(-2 * s)
        if ma * ms < 1.0:
            assert got.bound <= snc.kernel(ma, ms, 3) * (1 + 1e-9)


def test_delay_bound_monotone_in_deadline():
    arrival = snc.ArrivalSpec(0.9)
    bounds = [snc.delay_bound(arrival, TWO_POINT, 1, w).bound for w in range(1, 12)]
    assert all(b2 <= b1 * (1 + 1e-12) for b1, b2 in zip(bounds, bounds[1:]))


def test_delay_bound_decays_without_arrivals():
    arrival = snc.ArrivalSpec(0.0)
    b5 = snc.delay_bound(arrival, TWO_POINT, 1, 5).bound
    b50 = snc.delay_bound(arrival, TWO_POINT, 1, 50).bound
    assert b50 < b5 * 1e-10


def test_delay_bound_handles_large_arrival_scales():
    # s * alpha far beyond float overflow in the plain transform
    service = _flat_service([0.5, 0.5], [2.0, 3.0], [1e-4, 1e-4], n_d=200)
    arrival = snc.ArrivalSpec(320.0)
    got = snc.delay_bound(arrival, service, 1, w=5)
    assert 0.0 < got.bound < 1e-6
    assert np.isfinite(got.s_opt)


def test_delay_bound_raises_when_unstable_everywhere():
    overloaded = snc.ArrivalSpec(3.0)  # more bits than the service carries
    with pytest.raises(snc.StabilityError):
        snc.delay_bound(overloaded, TWO_POINT, 1, w=5)
    dead = _flat_service([1.0], [5.0], [1.0])
    with pytest.raises(snc.StabilityError):
        snc.delay_bound(snc.ArrivalSpec(1.0), dead, 1, w=5)


def test_mellin_budget_inverts_the_kernel():
    for s, alpha, w, pv in [(0.01, 560.0, 5, 1e-8), (0.005, 320.0, 5, 1e-8),
                            (1.0, 0.5, 3, 1e-3)]:
        ms = snc.mellin_budget(s, alpha, w, pv)
        assert 0.0 < ms < 1.0
        ma = math.exp(s * alpha)
        assert snc.kernel(ma, ms, w) == pytest.approx(pv, rel=1e-9)
        # anything below the budget strictly beats the target
        assert snc.kernel(ma, 0.9 * ms, w) < pv


def test_mellin_budget_near_stability_boundary():
    # here the polynomial's root hugs 1/ma within rounding: the budget is
    # still valid (stable side), even though evaluating the kernel there
    # would cancel catastrophically
    s, alpha, w, pv = 0.05, 100.0, 10, 1e-6
    ms = snc.mellin_budget(s, alpha, w, pv)
    ma = math.exp(s * alpha)
    assert 0.0 < ms <= 1.0 / ma
    assert ms == pytest.approx(math.exp(-s * alpha), rel=1e-12)


def test_mellin_budget_monotone_in_target():
    budgets = [snc.mellin_budget(0.01, 560.0, 5, pv) for pv in (1e-10, 1e-8, 1e-6)]
    assert budgets[0] < budgets[1] < budgets[2]
    with pytest.raises(ValueError):
        snc.mellin_budget(0.01, 560.0, 0, 1e-8)
    # absurd s * alpha: no representable budget
    assert snc.mellin_budget(10.0, 560.0, 5, 1e-8) == 0.0


def test_max_arrival_meets_target_at_claimed_resolution():
    service = TWO_POINT
    w, pv = 6, 1e-6
    alpha = snc.max_arrival(service, 1, w, pv)
    assert alpha > 0
    assert snc.delay_bound(snc.ArrivalSpec(alpha), service, 1, w).bound <= pv
    beyond = snc.delay_bound(snc.ArrivalSpec(alpha + 0.11), service, 1, w)
    assert beyond.bound > pv


def test_max_arrival_degenerate_and_limits():
    dead = _flat_service([1.0], [5.0], [1.0])
    assert snc.max_arrival(dead, 1, 5, 1e-6) == 0.0
    # deterministic error-free service approaches full capacity as w grows
    det = _flat_service([1.0], [2.0], [0.0], n_d=100)
    a_small = snc.max_arrival(det, 1, 2, 1e-8)
    a_big = snc.max_arrival(det, 1, 400, 1e-8)
    assert a_big > a_small
    assert a_big == pytest.approx(200.0, rel=0.02)
    assert a_big < 200.0


def test_max_arrival_monotone_in_w_and_target():
    a_w5 = snc.max_arrival(TWO_POINT, 1, 5, 1e-6)
    a_w9 = snc.max_arrival(TWO_POINT, 1, 9, 1e-6)
    assert a_w9 >= a_w5 - 1e-12
    a_loose = snc.max_arrival(TWO_POINT, 1, 5, 1e-3)
    assert a_loose >= a_w5 - 1e-12
