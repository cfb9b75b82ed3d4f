"""Channel estimation model and SNR-state discretization.

MMSE estimation from pilot symbols leaves a residual error with variance
sigma_z^2 = 1/(1 + rho_tr * n_tr). The true channel splits as
H = h_hat + Z with Z ~ CN(0, sigma_z^2) independent of the estimate, and
h_hat ~ CN(0, 1 - sigma_z^2) so that E|H|^2 = 1. Conditioned on the
estimated SNR rho_hat = rho_bar |h_hat|^2, the true SNR
Gamma = rho_bar |h_hat + Z|^2 is approximated as Gaussian with mean
rho_hat and standard deviation sigma_ic = sqrt(2 rho_bar rho_hat sigma_z^2).

The optimizer works on a discretized estimate space: each user's estimated
SNR is exponential, split into equiprobable quantile cells, each cell
represented by its conditional mean. The joint grid is the product of the
two independent per-user grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AvgSnrConfig",
    "TrainingConfig",
    "EstimatedState",
    "UserGrid",
    "SnrGrid",
    "estimation_error_variance",
    "icsi_stddev",
    "sample_exact",
    "sample_conditional",
    "quantile_grid",
    "build_user_grid",
    "build_grid",
]


@dataclass(frozen=True)
class AvgSnrConfig:
    """Average SNR scenario: per-user OMA SNRs and the NOMA power split.

    rho_oma_k is the average SNR user k would have transmitting alone
    (linear). Under NOMA, user k transmits at beta_k of that power, so its
    average data-phase SNR is beta_k * rho_oma_k. beta_1 + beta_2 = 1.
    """

    rho_oma_1: float
    rho_oma_2: float
    beta_1: float
    beta_2: float

    def __post_init__(self):
        if not (self.rho_oma_1 > 0 and self.rho_oma_2 > 0):
            raise ValueError("average SNRs must be positive")
        if min(self.beta_1, self.beta_2) < 0 or abs(self.beta_1 + self.beta_2 - 1.0) > 1e-9:
            raise ValueError("power split must be nonnegative and sum to 1")

    @property
    def rho_bar_1(self) -> float:
        return self.beta_1 * self.rho_oma_1

    @property
    def rho_bar_2(self) -> float:
        return self.beta_2 * self.rho_oma_2


@dataclass(frozen=True)
class TrainingConfig:
    """Pilot phase: per-user pilot counts and training SNRs.

    Training access is orthogonal, so each user trains at its full OMA
    power; rho_tr_k defaults to the scenario's rho_oma_k when built through
    the CLI. n_tr_1 + n_tr_2 symbols are lost to training in every slot.
    """

    n_tr_1: int
    n_tr_2: int
    rho_tr_1: float
    rho_tr_2: float

    def __post_init__(self):
        if self.n_tr_1 < 0 or self.n_tr_2 < 0:
            raise ValueError("pilot counts must be nonnegative")
        if self.rho_tr_1 <= 0 or self.rho_tr_2 <= 0:
            raise ValueError("training SNRs must be positive")

    def sigma_z2(self, user: int) -> float:
        if user == 1:
            return estimation_error_variance(self.rho_tr_1, self.n_tr_1)
        if user == 2:
            return estimation_error_variance(self.rho_tr_2, self.n_tr_2)
        raise ValueError("user must be 1 or 2")


def estimation_error_variance(rho_tr: float, n_tr: int) -> float:
    """Residual MMSE estimation error variance, 1 / (1 + rho_tr * n_tr)."""
    if rho_tr < 0 or n_tr < 0:
        raise ValueError("training SNR and pilot count must be nonnegative")
    return 1.0 / (1.0 + rho_tr * n_tr)


def icsi_stddev(rho_bar, rho_hat, sigma_z2):
    """Conditional stddev of the true SNR given the estimate.

    sqrt(2 * rho_bar * rho_hat * sigma_z2); zero estimate or perfect
    training gives zero spread.
    """
    return np.sqrt(2.0 * np.asarray(rho_bar, float) * np.asarray(rho_hat, float) * sigma_z2)


def sample_exact(rho_bar: float, sigma_z2: float, rng: np.random.Generator, size=None):
    """Draw (rho_hat, gamma) pairs from the exact estimation model.

    h_hat ~ CN(0, 1 - sigma_z2), Z ~ CN(0, sigma_z2), and the returned
    true SNR is rho_bar |h_hat + Z|^2 with no Gaussian approximation.
    With sigma_z2 = 0 the two outputs are identical (perfect CSI).
    """
    if not 0.0 <= sigma_z2 <= 1.0:
        raise ValueError("sigma_z2 must be in [0, 1]")
    s_est = np.sqrt((1.0 - sigma_z2) / 2.0)
    s_err = np.sqrt(sigma_z2 / 2.0)
    h_re = s_est * rng.standard_normal(size)
    h_im = s_est * rng.standard_normal(size)
    z_re = s_err * rng.standard_normal(size)
    z_im = s_err * rng.standard_normal(size)
    rho_hat = rho_bar * (h_re * h_re + h_im * h_im)
    gamma = rho_bar * ((h_re + z_re) ** 2 + (h_im + z_im) ** 2)
    return rho_hat, gamma


def sample_conditional(rho_bar: float, rho_hat: float, sigma_z2: float,
                       rng: np.random.Generator, size=None):
    """Draw true SNRs conditioned on a fixed estimated SNR.

    The estimate's phase is irrelevant by circular symmetry, so the true
    SNR is rho_bar * ((sqrt(rho_hat/rho_bar) + Z_re)^2 + Z_im^2) with
    Z_re, Z_im ~ N(0, sigma_z2 / 2). This is the exact conditional law,
    including the |Z|^2 term the Gaussian approximation drops.
    """
    if rho_hat < 0:
        raise ValueError("estimated SNR must be nonnegative")
    mag = np.sqrt(rho_hat / rho_bar)
    s_err = np.sqrt(sigma_z2 / 2.0)
    z_re = s_err * rng.standard_normal(size)
    z_im = s_err * rng.standard_normal(size)
    return rho_bar * ((mag + z_re) ** 2 + z_im * z_im)


@dataclass(frozen=True)
class EstimatedState:
    """What the rate controller knows about one slot: estimates and spreads.

    sigma_ic_k is the conditional stddev of the true SNR around rho_hat_k.
    Fields may be scalars or equal-shape arrays (formulas broadcast).
    """

    rho_hat_1: float
    rho_hat_2: float
    sigma_ic_1: float
    sigma_ic_2: float

    @classmethod
    def from_channels(cls, rho_bar_1, sigma_z2_1, rho_hat_1,
                      rho_bar_2, sigma_z2_2, rho_hat_2) -> "EstimatedState":
        return cls(
            rho_hat_1=rho_hat_1,
            rho_hat_2=rho_hat_2,
            sigma_ic_1=icsi_stddev(rho_bar_1, rho_hat_1, sigma_z2_1),
            sigma_ic_2=icsi_stddev(rho_bar_2, rho_hat_2, sigma_z2_2),
        )


def quantile_grid(mean: float, points: int) -> np.ndarray:
    """Equiprobable quantization of an exponential distribution.

    Splits Exp(mean) into `points` cells of probability 1/points and
    returns each cell's conditional mean. The top (unbounded) cell is
    represented at a + mean, its conditional mean. The probability-weighted
    average of the returned values reproduces `mean` exactly.
    """
    if points < 1:
        raise ValueError("need at least one grid point")
    if mean <= 0:
        raise ValueError("mean must be positive")
    j = np.arange(points + 1, dtype=float) / points
    edges = -mean * np.log1p(-j[:-1])
    lo = edges
    hi = np.append(edges[1:], np.inf)
    hi_capped = np.where(np.isinf(hi), 0.0, hi)
    mass_lo = np.exp(-lo / mean)
    mass_hi = np.where(np.isinf(hi), 0.0, np.exp(-hi_capped / mean))
    num = (lo + mean) * mass_lo - (hi_capped + mean) * mass_hi
    vals = num / (mass_lo - mass_hi)
    vals[-1] = lo[-1] + mean
    return vals


@dataclass(frozen=True)
class UserGrid:
    """Discretized estimate space of one user."""

    rho_hat: np.ndarray
    prob: np.ndarray
    sigma_ic: np.ndarray
    rho_bar: float
    sigma_z2: float

    @property
    def n_points(self) -> int:
        return self.rho_hat.size


@dataclass(frozen=True)
class SnrGrid:
    """Joint discretized estimate space of both users.

    The flattened views enumerate the product grid row-major in
    (user-1 index, user-2 index); the joint mass is the product of the
    per-user masses since the estimates are independent.
    """

    user1: UserGrid
    user2: UserGrid
    rho1: np.ndarray = field(init=False)
    rho2: np.ndarray = field(init=False)
    sigma1: np.ndarray = field(init=False)
    sigma2: np.ndarray = field(init=False)
    prob: np.ndarray = field(init=False)

    def __post_init__(self):
        n1, n2 = self.user1.n_points, self.user2.n_points
        object.__setattr__(self, "rho1", np.repeat(self.user1.rho_hat, n2))
        object.__setattr__(self, "rho2", np.tile(self.user2.rho_hat, n1))
        object.__setattr__(self, "sigma1", np.repeat(self.user1.sigma_ic, n2))
        object.__setattr__(self, "sigma2", np.tile(self.user2.sigma_ic, n1))
        object.__setattr__(self, "prob", np.outer(self.user1.prob, self.user2.prob).ravel())

    @property
    def n_points(self) -> int:
        return self.prob.size

    def user(self, user: int) -> UserGrid:
        if user == 1:
            return self.user1
        if user == 2:
            return self.user2
        raise ValueError("user must be 1 or 2")


def build_user_grid(rho_bar: float, sigma_z2: float, points: int) -> UserGrid:
    """Quantize one user's estimated-SNR distribution.

    The estimate rho_bar |h_hat|^2 is exponential with mean
    rho_bar (1 - sigma_z2); sigma_z2 = 0 reduces to quantizing the true
    SNR (perfect CSI).
    """
    mean = rho_bar * (1.0 - sigma_z2)
    vals = quantile_grid(mean, points)
    prob = np.full(points, 1.0 / points)
    sig = icsi_stddev(rho_bar, vals, sigma_z2)
    return UserGrid(rho_hat=vals, prob=prob, sigma_ic=sig, rho_bar=rho_bar, sigma_z2=sigma_z2)


def build_grid(avg: AvgSnrConfig, training: TrainingConfig | None,
               points_per_axis: int, oma: bool = False) -> SnrGrid:
    """Build the joint estimate grid for the NOMA (or OMA) data phase.

    NOMA users transmit at beta_k of their OMA power; with oma=True the
    grid instead uses the full per-user OMA SNRs (used by the baseline).
    training=None means perfect CSI (zero estimation error, training
    overhead handled by the caller through the symbol budget).
    """
    sz1 = training.sigma_z2(1) if training is not None else 0.0
    sz2 = training.sigma_z2(2) if training is not None else 0.0
    if oma:
        rb1, rb2 = avg.rho_oma_1, avg.rho_oma_2
    else:
        rb1, rb2 = avg.rho_bar_1, avg.rho_bar_2
    return SnrGrid(
        user1=build_user_grid(rb1, sz1, points_per_axis),
        user2=build_user_grid(rb2, sz2, points_per_axis),
    )
