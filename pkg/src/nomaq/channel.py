"""Two-user Gaussian multiple-access channel: rates, region, fading.

All rates are in bits per channel use, all SNRs are linear (not dB).
User indices are 1 and 2 throughout the package.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "single_user_rate",
    "interfered_rate",
    "sum_rate",
    "corner_points",
    "in_capacity_region",
    "sample_snr",
]


def single_user_rate(gamma):
    """Max rate of a user decoded without interference, log2(1 + gamma)."""
    return np.log2(1.0 + np.asarray(gamma, dtype=float))


def interfered_rate(gamma, gamma_int):
    """Max rate of a user decoded first, treating the other as noise.

    log2(1 + gamma / (gamma_int + 1)).
    """
    gamma = np.asarray(gamma, dtype=float)
    gamma_int = np.asarray(gamma_int, dtype=float)
    return np.log2(1.0 + gamma / (gamma_int + 1.0))


def sum_rate(gamma_1, gamma_2):
    """Sum-rate limit of the region, log2(1 + gamma_1 + gamma_2)."""
    return np.log2(1.0 + np.asarray(gamma_1, dtype=float) + np.asarray(gamma_2, dtype=float))


def corner_points(gamma_1, gamma_2):
    """The two successive-decoding corners of the pentagon.

    Corner A decodes user 2 first (user 1 gets its single-user rate),
    corner B decodes user 1 first. Returns ((r1_A, r2_A), (r1_B, r2_B)).
    The second component at each corner is taken as the sum rate minus
    the first, so the pair adds up to sum_rate exactly in floating point
    and the corners always pass in_capacity_region.
    """
    rs = sum_rate(gamma_1, gamma_2)
    r1_a = single_user_rate(gamma_1)
    r2_b = single_user_rate(gamma_2)
    return (r1_a, rs - r1_a), (rs - r2_b, r2_b)


def in_capacity_region(r1, r2, gamma_1, gamma_2):
    """True if the rate pair is decodable at the given SNRs.

    Boundary points count as decodable. Inputs broadcast.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    ok1 = r1 <= single_user_rate(gamma_1)
    ok2 = r2 <= single_user_rate(gamma_2)
    oks = r1 + r2 <= sum_rate(gamma_1, gamma_2)
    return ok1 & ok2 & oks


def sample_snr(rho_bar: float, rng: np.random.Generator, size=None):
    """Instantaneous SNR of Rayleigh block fading with average rho_bar.

    The channel coefficient is CN(0, 1), drawn as two independent real
    Gaussians scaled by 1/sqrt(2), so the SNR is exponential with mean
    rho_bar.
    """
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return rho_bar * 0.5 * (re * re + im * im)
