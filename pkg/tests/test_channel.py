import numpy as np
import pytest

from nomaq import channel


def test_single_user_rate_spot_values():
    assert channel.single_user_rate(0.0) == 0.0
    assert channel.single_user_rate(1.0) == pytest.approx(1.0, abs=1e-15)
    assert channel.single_user_rate(3.0) == pytest.approx(2.0, abs=1e-15)
    assert channel.single_user_rate(15.0) == pytest.approx(4.0, abs=1e-15)


def test_interfered_rate_treats_interference_as_noise():
    # gamma / (1 + gamma_int) = 6 / 3 = 2 -> log2(3)
    assert channel.interfered_rate(6.0, 2.0) == pytest.approx(np.log2(3.0), rel=1e-15)
    # no interference degenerates to the single-user rate
    assert channel.interfered_rate(7.0, 0.0) == pytest.approx(channel.single_user_rate(7.0))


def test_sum_rate():
    assert channel.sum_rate(1.0, 2.0) == pytest.approx(2.0, abs=1e-15)
    assert channel.sum_rate(0.0, 0.0) == 0.0


def test_corner_points_components_sum_to_sum_rate():
    rng = np.random.default_rng(7)
    for _ in range(50):
        g1, g2 = rng.uniform(0.01, 500.0, size=2)
        (r1a, r2a), (r1b, r2b) = channel.corner_points(g1, g2)
        rs = channel.sum_rate(g1, g2)
        assert r1a + r2a == rs
        assert r1b + r2b == rs


def test_corner_points_roles():
    g1, g2 = 10.0, 3.0
    (r1a, r2a), (r1b, r2b) = channel.corner_points(g1, g2)
    # first corner: user 2 decoded first (through user 1's interference)
    assert r1a == channel.single_user_rate(g1)
    assert r2a == pytest.approx(channel.interfered_rate(g2, g1), rel=1e-12)
    # second corner: user 1 decoded first
    assert r1b == pytest.approx(channel.interfered_rate(g1, g2), rel=1e-12)
    assert r2b == channel.single_user_rate(g2)


def test_corner_points_lie_on_region_boundary():
    g1, g2 = 20.0, 5.0
    for r1, r2 in channel.corner_points(g1, g2):
        assert channel.in_capacity_region(r1, r2, g1, g2)
        # strictly outside once either rate is nudged up
        assert not channel.in_capacity_region(r1 + 1e-9, r2 + 1e-9, g1, g2)


def test_in_capacity_region_individual_and_sum_constraints():
    g1, g2 = 3.0, 1.0  # caps: 2.0 and 1.0, sum cap log2(5)
    assert channel.in_capacity_region(1.0, 1.0, g1, g2)
    assert not channel.in_capacity_region(2.5, 0.1, g1, g2)   # user 1 cap
    assert not channel.in_capacity_region(0.1, 1.5, g1, g2)   # user 2 cap
    assert not channel.in_capacity_region(1.9, 0.9, g1, g2)   # sum cap
    assert channel.in_capacity_region(0.0, 0.0, g1, g2)


def test_in_capacity_region_broadcasts():
    r1 = np.array([0.5, 2.5, 1.0])
    out = channel.in_capacity_region(r1, 0.5, 3.0, 1.0)
    assert out.shape == (3,)
    assert out.tolist() == [True, False, True]


def test_sample_snr_is_exponential_with_given_mean():
    rng = np.random.default_rng(123)
    rho = 25.0
    x = channel.sample_snr(rho, rng, size=200_000)
    assert x.min() >= 0.0
    assert x.mean() == pytest.approx(rho, rel=0.02)
    # exponential: variance equals mean^2, P(X > mean) = 1/e
    assert x.var() == pytest.approx(rho * rho, rel=0.05)
    assert (x > rho).mean() == pytest.approx(np.exp(-1.0), abs=0.01)


def test_sample_snr_seeded_reproducibility():
    a = channel.sample_snr(5.0, np.random.default_rng(9), size=8)
    b = channel.sample_snr(5.0, np.random.default_rng(9), size=8)
    np.testing.assert_array_equal(a, b)
