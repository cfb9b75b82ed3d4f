"""Decoding-error probabilities: closed-form approximations and the oracle.

Two error sources are covered, separately and combined: imperfect CSI
(the true SNR is only known up to a Gaussian spread around the estimate)
and finite blocklength (the decoder falls short of capacity by a
dispersion-scaled backoff). Every closed form here is an approximation of
the exact estimation model; `oracle_eps` estimates the same probabilities
by Monte Carlo from the exact model and is the reference the closed forms
are validated against.

Conventions. phi(r) = 2^r - 1 is the SNR threshold of rate r. For SIC,
the user decoded first sees the other user as interference, and the user
decoded last (the priority user) also fails whenever the first user's
signal cannot be cancelled. Gaussian spreads are never truncated at zero;
the closed forms integrate over the whole real line by design.

Monotonicities (asserted by the tests): every eps is nondecreasing in each
rate and, for the finite-blocklength variants, nonincreasing in the
blocklength. Single-user and joint errors are nonincreasing in each
estimated SNR. Under SIC the cross dependencies flip: the first-decoded
user's eps grows with the interferer's estimate, and the priority user's
own estimate helps its own outage term but hurts the cancellation step, so
only the first user's estimate is a clean monotone knob for both.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy import special

from .channel import in_capacity_region, interfered_rate, single_user_rate
from .csi import EstimatedState, sample_conditional, sample_exact

__all__ = [
    "DecodingOrder",
    "ErrorModel",
    "eps_pair",
    "q_func",
    "q_inv",
    "dispersion_awgn",
    "dispersion_iid",
    "dispersion_mac",
    "fbl_snr_stddev",
    "fbl_sum_stddev",
    "eps_fbl_pcsi",
    "eps_sic_icsi",
    "eps_sic_icsi_fbl",
    "eps_joint_icsi",
    "eps_joint_icsi_fbl",
    "eps_oma",
    "snr_threshold",
    "invert_eps",
    "wilson_interval",
    "UserChannel",
    "OracleResult",
    "oracle_eps",
]

LOG2E = np.log2(np.e)

# Stddevs are floored so that sigma -> 0 degrades every Q((x)/sigma) to a
# hard indicator instead of dividing by zero. 1e-150 keeps squares well
# inside the normal double range.
SIGMA_FLOOR = 1e-150


class DecodingOrder(IntEnum):
    """Which user the receiver decodes first (JOINT: no ordering)."""

    JOINT = 0
    USER1_FIRST = 1
    USER2_FIRST = 2


@dataclass(frozen=True)
class ErrorModel:
    """Which error law applies: decoder x CSI knowledge x blocklength.

    decoder is "sic", "joint" or "oma". csi = "perfect" means the rate
    controller knows the true SNRs (the estimated state carries them with
    zero spread); "imperfect" uses the Gaussian conditional spread around
    the estimate. n_fbl is the codeword length in symbols, None for
    infinite-blocklength decoding; for OMA it is the user's own share of
    the data symbols, since each user only transmits in its slice.
    """

    decoder: str
    csi: str = "imperfect"
    n_fbl: int | None = None

    def __post_init__(self):
        if self.decoder not in ("sic", "joint", "oma"):
            raise ValueError("decoder must be sic, joint or oma")
        if self.csi not in ("perfect", "imperfect"):
            raise ValueError("csi must be perfect or imperfect")
        if self.n_fbl is not None and self.n_fbl < 1:
            raise ValueError("blocklength must be at least 1 symbol")

    @property
    def finite_blocklength(self) -> bool:
        return self.n_fbl is not None


def q_func(x):
    """Gaussian tail probability Q(x) via the complementary error function.

    erfc saturates to exactly 2.0 / 0.0 past |x| ~ 38, so the result is a
    hard 0 or 1 in the far tails, which the callers rely on when spreads
    are floored to indicators.
    """
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def q_inv(p):
    """Inverse of q_func on (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("q_inv argument must lie strictly inside (0, 1)")
    return -special.ndtri(p)


def snr_threshold(rate):
    """SNR needed to support a rate: 2^rate - 1, computed as expm1."""
    rate = np.asarray(rate, dtype=float)
    if np.any(~np.isfinite(rate)) or np.any(rate < 0):
        raise ValueError("rates must be finite and nonnegative")
    return np.expm1(rate * np.log(2.0))


def dispersion_awgn(gamma):
    """Channel dispersion of the scalar Gaussian channel (bits^2)."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SNR must be nonnegative")
    return LOG2E**2 * (1.0 - 1.0 / (1.0 + gamma) ** 2)


def dispersion_iid(gamma):
    """Dispersion under i.i.d. Gaussian codebooks (bits^2).

    Larger than dispersion_awgn; applies when a user's codeword must look
    Gaussian so the other user can treat it as noise.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SNR must be nonnegative")
    return LOG2E**2 * 2.0 * gamma / (1.0 + gamma)


def dispersion_mac(gamma_1, gamma_2):
    """Sum-rate dispersion of the two-user MAC (bits^2).

    Reduces to dispersion_awgn(gamma_1) when gamma_2 = 0.
    """
    gamma_1 = np.asarray(gamma_1, dtype=float)
    gamma_2 = np.asarray(gamma_2, dtype=float)
    if np.any(gamma_1 < 0) or np.any(gamma_2 < 0):
        raise ValueError("SNRs must be nonnegative")
    s = gamma_1 + gamma_2
    return dispersion_awgn(s) + LOG2E**2 * 2.0 * gamma_1 * gamma_2 / (1.0 + s) ** 2


def fbl_snr_stddev(rho, n, kind="iid"):
    """Finite-blocklength backoff mapped into the SNR domain.

    The rate backoff sqrt(V(rho)/n) is linearized around rho through the
    capacity slope, giving an equivalent Gaussian SNR spread
    (1 + rho) / log2(e) * sqrt(V(rho) / n).
    """
    rho = np.asarray(rho, dtype=float)
    disp = dispersion_iid(rho) if kind == "iid" else dispersion_awgn(rho)
    return (1.0 + rho) / LOG2E * np.sqrt(disp / n)


def fbl_sum_stddev(rho_1, rho_2, n):
    """SNR-domain spread of the sum-rate constraint at blocklength n."""
    rho_1 = np.asarray(rho_1, dtype=float)
    rho_2 = np.asarray(rho_2, dtype=float)
    return (1.0 + rho_1 + rho_2) / LOG2E * np.sqrt(dispersion_mac(rho_1, rho_2) / n)


def eps_fbl_pcsi(rate, sinr, n, kind="iid"):
    """Finite-blocklength error with the SINR perfectly known.

    Q((log2(1+sinr) - rate) / sqrt(V(sinr)/n)). Degenerate V = 0 falls
    back to the indicator, except that rate exactly at capacity returns
    0.5 (the normal approximation's limit from either side).
    """
    rate = np.asarray(rate, dtype=float)
    if np.any(~np.isfinite(rate)) or np.any(rate < 0):
        raise ValueError("rates must be finite and nonnegative")
    cap = np.log2(1.0 + np.asarray(sinr, dtype=float))
    disp = dispersion_iid(sinr) if kind == "iid" else dispersion_awgn(sinr)
    scale = np.sqrt(disp / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = (cap - rate) / scale
    degenerate = np.where(cap == rate, 0.5, np.where(rate > cap, 1.0, 0.0))
    out = np.where(scale > 0.0, q_func(np.where(scale > 0.0, arg, 0.0)), degenerate)
    return out[()] if out.ndim == 0 else out


def _sic_core(rho_p, sig_int, sig_own, phi_p, rho_f, sig_f, phi_f):
    """Shared SIC error template under Gaussian SNR spreads.

    Index p is the priority user (decoded last, interference-free after
    cancellation), f the user decoded first under interference from p.
    sig_int is the spread of p's SNR as it enters f's decoding, sig_own
    the spread in p's own outage term (these differ only in the
    finite-blocklength variant), sig_f the effective spread of f's SNR.

    The first user fails when gamma_p exceeds the turning point
    gamma_turn = rho_f / phi_f - 1 (interference too strong, counted in
    full), plus a Chernoff-bounded slice below it. The priority user adds
    its own outage and trims that slice at its own threshold phi_p, which
    is also what the finite-blocklength reduction at n -> infinity needs.
    """
    sig_int = np.maximum(np.asarray(sig_int, dtype=float), SIGMA_FLOOR)
    sig_own = np.maximum(np.asarray(sig_own, dtype=float), SIGMA_FLOOR)
    sig_f = np.maximum(np.asarray(sig_f, dtype=float), SIGMA_FLOOR)
    rho_p = np.asarray(rho_p, dtype=float)
    rho_f = np.asarray(rho_f, dtype=float)
    phi_p = np.asarray(phi_p, dtype=float)
    phi_f = np.asarray(phi_f, dtype=float)

    with np.errstate(divide="ignore"):
        gamma_turn = np.where(phi_f > 0.0, rho_f / np.where(phi_f > 0.0, phi_f, 1.0) - 1.0, np.inf)

    v_int = sig_int * sig_int
    v_f = sig_f * sig_f
    den = v_f + v_int * phi_f * phi_f
    sig_n = np.sqrt(np.maximum(v_int * v_f / den, SIGMA_FLOOR * SIGMA_FLOOR))
    mu_n = (rho_p * v_f + v_int * phi_f * (rho_f - phi_f)) / den
    # Completed-square constant, written in the cancellation-free form
    # (the quadratic's minimum over the integration variable).
    c = (rho_f - phi_f * (1.0 + rho_p)) ** 2 / (2.0 * den)

    with np.errstate(over="ignore"):
        pref = sig_n / (2.0 * sig_int) * np.exp(-c)
    tail = q_func((gamma_turn - rho_p) / sig_int)
    q_turn = q_func((gamma_turn - mu_n) / sig_n)
    # The Chernoff slices live on [0, gamma_turn] and [phi_p, gamma_turn];
    # an empty range (phi_p past the turning point) is clamped to zero.
    slice_f = np.clip(pref * (q_func(-mu_n / sig_n) - q_turn), 0.0, 1.0)
    slice_p = np.clip(pref * (q_func((phi_p - mu_n) / sig_n) - q_turn), 0.0, 1.0)
    own_p = np.where(phi_p > 0.0, q_func((rho_p - phi_p) / sig_own), 0.0)

    # A zero rate carries no data and never fails; the Gaussian surrogate
    # would otherwise leave spurious mass below zero SNR.
    fail_f = np.where(phi_f > 0.0, np.clip(tail + slice_f, 0.0, 1.0), 0.0)
    fail_p_slice = np.where(phi_f > 0.0, np.clip(tail + slice_p, 0.0, 1.0), 0.0)
    eps_f = fail_f
    eps_p = np.clip(fail_p_slice + own_p, 0.0, 1.0)
    return eps_p, eps_f


def eps_sic_icsi(r1, r2, order: DecodingOrder, est: EstimatedState):
    """SIC decoding errors under imperfect CSI, infinite blocklength.

    Returns (eps_1, eps_2) by user index. `order` names the user decoded
    first; both orders run through the same template with the roles
    swapped. A zero estimate with a positive rate gives eps = 1.
    """
    phi1 = snr_threshold(r1)
    phi2 = snr_threshold(r2)
    if order == DecodingOrder.USER2_FIRST:
        eps_p, eps_f = _sic_core(est.rho_hat_1, est.sigma_ic_1, est.sigma_ic_1, phi1,
                                 est.rho_hat_2, est.sigma_ic_2, phi2)
        return eps_p, eps_f
    if order == DecodingOrder.USER1_FIRST:
        eps_p, eps_f = _sic_core(est.rho_hat_2, est.sigma_ic_2, est.sigma_ic_2, phi2,
                                 est.rho_hat_1, est.sigma_ic_1, phi1)
        return eps_f, eps_p
    raise ValueError("SIC needs USER1_FIRST or USER2_FIRST")


def _sic_fbl_sigmas(rho_p, sig_p, rho_f, sig_f, n):
    """Widened spreads for the SIC template at blocklength n.

    The priority user's own term combines the CSI spread with the
    i.i.d.-codebook backoff at its estimate. The first user's spread adds
    the backoff at its estimated SINR, scaled back to the SNR domain by
    (1 + rho_p).
    """
    sig_own = np.sqrt(sig_p**2 + fbl_snr_stddev(rho_p, n, "iid") ** 2)
    sinr_f = np.asarray(rho_f, dtype=float) / (1.0 + np.asarray(rho_p, dtype=float))
    sig_f_eff = np.sqrt(sig_f**2 + ((1.0 + rho_p) * fbl_snr_stddev(sinr_f, n, "iid")) ** 2)
    return sig_own, sig_f_eff


def eps_sic_icsi_fbl(r1, r2, order: DecodingOrder, est: EstimatedState, n: int):
    """SIC decoding errors with imperfect CSI and blocklength n.

    Same template as eps_sic_icsi with every spread widened by the
    finite-blocklength backoff; n -> infinity reduces to eps_sic_icsi
    exactly.
    """
    phi1 = snr_threshold(r1)
    phi2 = snr_threshold(r2)
    if order == DecodingOrder.USER2_FIRST:
        sig_own, sig_f_eff = _sic_fbl_sigmas(est.rho_hat_1, est.sigma_ic_1,
                                             est.rho_hat_2, est.sigma_ic_2, n)
        eps_p, eps_f = _sic_core(est.rho_hat_1, est.sigma_ic_1, sig_own, phi1,
                                 est.rho_hat_2, sig_f_eff, phi2)
        return eps_p, eps_f
    if order == DecodingOrder.USER1_FIRST:
        sig_own, sig_f_eff = _sic_fbl_sigmas(est.rho_hat_2, est.sigma_ic_2,
                                             est.rho_hat_1, est.sigma_ic_1, n)
        eps_p, eps_f = _sic_core(est.rho_hat_2, est.sigma_ic_2, sig_own, phi2,
                                 est.rho_hat_1, sig_f_eff, phi1)
        return eps_f, eps_p
    raise ValueError("SIC needs USER1_FIRST or USER2_FIRST")


def _joint_core(rho_1, sig_1, rho_2, sig_2, sig_12, phi_1, phi_2):
    """Union bound over the three boundaries of the decoding region."""
    sig_1 = np.maximum(np.asarray(sig_1, dtype=float), SIGMA_FLOOR)
    sig_2 = np.maximum(np.asarray(sig_2, dtype=float), SIGMA_FLOOR)
    sig_12 = np.maximum(np.asarray(sig_12, dtype=float), SIGMA_FLOOR)
    phi_1 = np.asarray(phi_1, dtype=float)
    phi_2 = np.asarray(phi_2, dtype=float)
    phi_12 = phi_1 + phi_2 + phi_1 * phi_2
    # zero-rate users never fail, so their terms carry no mass
    eps = (np.where(phi_1 > 0.0, q_func((rho_1 - phi_1) / sig_1), 0.0)
           + np.where(phi_2 > 0.0, q_func((rho_2 - phi_2) / sig_2), 0.0)
           + np.where(phi_12 > 0.0, q_func((rho_1 + rho_2 - phi_12) / sig_12), 0.0))
    return np.clip(eps, 0.0, 1.0)


def eps_joint_icsi(r1, r2, est: EstimatedState):
    """Joint-decoding error under imperfect CSI, infinite blocklength.

    Union bound of the two single-user outages and the sum-rate outage;
    the same value applies to both users (they share the decoder).
    """
    sig_12 = np.sqrt(np.asarray(est.sigma_ic_1, float) ** 2 + np.asarray(est.sigma_ic_2, float) ** 2)
    return _joint_core(est.rho_hat_1, est.sigma_ic_1, est.rho_hat_2, est.sigma_ic_2,
                       sig_12, snr_threshold(r1), snr_threshold(r2))


def eps_joint_icsi_fbl(r1, r2, est: EstimatedState, n: int):
    """Joint-decoding error with imperfect CSI and blocklength n.

    Per-user terms widen by the single-user (awgn) backoff, the sum term
    by the MAC dispersion; n -> infinity reduces to eps_joint_icsi.
    """
    s1 = np.asarray(est.sigma_ic_1, dtype=float)
    s2 = np.asarray(est.sigma_ic_2, dtype=float)
    sig_1 = np.sqrt(s1**2 + fbl_snr_stddev(est.rho_hat_1, n, "awgn") ** 2)
    sig_2 = np.sqrt(s2**2 + fbl_snr_stddev(est.rho_hat_2, n, "awgn") ** 2)
    sig_12 = np.sqrt(s1**2 + s2**2 + fbl_sum_stddev(est.rho_hat_1, est.rho_hat_2, n) ** 2)
    return _joint_core(est.rho_hat_1, sig_1, est.rho_hat_2, sig_2,
                       sig_12, snr_threshold(r1), snr_threshold(r2))


def eps_oma(rate, rho_hat, sigma_ic, n=None):
    """Single-user error for the orthogonal baseline.

    Q((rho_hat - phi) / sigma) with sigma combining the CSI spread and,
    when a blocklength is given, the single-user (awgn) backoff. n is the
    user's own codeword length (its share of the data symbols).
    """
    phi = snr_threshold(rate)
    sig = np.asarray(sigma_ic, dtype=float)
    if n is not None:
        sig = np.sqrt(sig**2 + fbl_snr_stddev(rho_hat, n, "awgn") ** 2)
    sig = np.maximum(sig, SIGMA_FLOOR)
    eps = np.where(phi > 0.0,
                   q_func((np.asarray(rho_hat, float) - phi) / sig), 0.0)
    return np.clip(eps, 0.0, 1.0)[()]


def eps_pair(model: ErrorModel, r1, r2, est: EstimatedState,
             order: DecodingOrder = DecodingOrder.JOINT):
    """(eps_1, eps_2) under the given model at one estimated state.

    Dispatches to the matching closed form. Under perfect CSI the state's
    estimates are the true SNRs: infinite blocklength gives exact region
    indicators (boundary rates decodable, matching the capacity region),
    finite blocklength the capacity-domain normal approximation. Joint
    decoding returns the same value for both users. Inputs broadcast;
    `order` must name a user for SIC and is ignored otherwise.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if model.decoder == "sic" and order not in (DecodingOrder.USER1_FIRST,
                                                DecodingOrder.USER2_FIRST):
        raise ValueError("SIC needs USER1_FIRST or USER2_FIRST")
    n = model.n_fbl

    if model.csi == "imperfect":
        if model.decoder == "sic":
            if n is None:
                return eps_sic_icsi(r1, r2, order, est)
            return eps_sic_icsi_fbl(r1, r2, order, est, n)
        if model.decoder == "joint":
            e = eps_joint_icsi(r1, r2, est) if n is None \
                else eps_joint_icsi_fbl(r1, r2, est, n)
            return e, e
        return (eps_oma(r1, est.rho_hat_1, est.sigma_ic_1, n),
                eps_oma(r2, est.rho_hat_2, est.sigma_ic_2, n))

    g1 = np.asarray(est.rho_hat_1, dtype=float)
    g2 = np.asarray(est.rho_hat_2, dtype=float)
    if model.decoder == "sic":
        if order == DecodingOrder.USER1_FIRST:
            gp, gf, rp, rf = g2, g1, r2, r1
        else:
            gp, gf, rp, rf = g1, g2, r1, r2
        if n is None:
            # compare in the rate domain with the same cap expressions the
            # rate search builds, so a rate set exactly at a cap decodes
            ef = (rf > interfered_rate(gf, gp)).astype(float)
            ep = np.clip(ef + (rp > single_user_rate(gp)), 0.0, 1.0)
        else:
            sinr_f = gf / (1.0 + gp)
            ef = np.where(rf > 0.0, eps_fbl_pcsi(rf, sinr_f, n, "iid"), 0.0)
            own = np.where(rp > 0.0, eps_fbl_pcsi(rp, gp, n, "iid"), 0.0)
            ep = np.clip(ef + own, 0.0, 1.0)
        return (ef, ep) if order == DecodingOrder.USER1_FIRST else (ep, ef)
    if model.decoder == "joint":
        if n is None:
            e = (~in_capacity_region(r1, r2, g1, g2)).astype(float)
        else:
            e1 = np.where(r1 > 0.0, eps_fbl_pcsi(r1, g1, n, "awgn"), 0.0)
            e2 = np.where(r2 > 0.0, eps_fbl_pcsi(r2, g2, n, "awgn"), 0.0)
            cap_s = np.log2(1.0 + g1 + g2)
            scale = np.sqrt(dispersion_mac(g1, g2) / n)
            with np.errstate(divide="ignore", invalid="ignore"):
                arg = (cap_s - r1 - r2) / scale
            es = np.where(scale > 0.0,
                          q_func(np.where(scale > 0.0, arg, 0.0)),
                          (r1 + r2 > cap_s).astype(float))
            es = np.where(r1 + r2 > 0.0, es, 0.0)
            e = np.clip(e1 + e2 + es, 0.0, 1.0)
        return e, e
    if n is None:
        return ((r1 > single_user_rate(g1)).astype(float),
                (r2 > single_user_rate(g2)).astype(float))
    return (np.where(r1 > 0.0, eps_fbl_pcsi(r1, g1, n, "awgn"), 0.0),
            np.where(r2 > 0.0, eps_fbl_pcsi(r2, g2, n, "awgn"), 0.0))


def invert_eps(eps_fn, target: float, r_hi: float, tol: float = 1e-10) -> float:
    """Rate at which a nondecreasing eps(r) crosses the target.

    Plain bisection on [0, r_hi]; r_hi must already overshoot the target.
    Used to place validation tuples at prescribed error levels.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target must be in (0, 1)")
    lo, hi = 0.0, float(r_hi)
    if eps_fn(hi) < target:
        raise ValueError("eps at r_hi is below the target")
    if eps_fn(lo) >= target:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if eps_fn(mid) >= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion (default 95%)."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = z * np.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class UserChannel:
    """One user's channel law for the oracle.

    rho_hat = None averages over the estimate's own distribution;
    otherwise the oracle conditions on that estimate.
    """

    rho_bar: float
    sigma_z2: float
    rho_hat: float | None = None

    def draw(self, rng: np.random.Generator, size: int):
        if self.rho_hat is None:
            _, gamma = sample_exact(self.rho_bar, self.sigma_z2, rng, size)
            return gamma
        return sample_conditional(self.rho_bar, self.rho_hat, self.sigma_z2, rng, size)


@dataclass(frozen=True)
class OracleResult:
    """Monte Carlo error estimates with Wilson 95% intervals."""

    eps_1: float
    eps_2: float
    ci_1: tuple
    ci_2: tuple
    samples: int


def _fbl_capacity(sinr, n, kind, rng):
    """Blocklength-equivalent capacity draw: C + sqrt(V/n) * N(0,1)."""
    disp = dispersion_iid(sinr) if kind == "iid" else dispersion_awgn(sinr)
    return np.log2(1.0 + sinr) + np.sqrt(disp / n) * rng.standard_normal(sinr.shape)


def oracle_eps(decoder: "str | ErrorModel", r1: float, r2: float,
               user1: UserChannel, user2: UserChannel,
               order: DecodingOrder = DecodingOrder.JOINT,
               n_fbl_1: int | None = None, n_fbl_2: int | None = None,
               samples: int = 10_000_000, rng: np.random.Generator | None = None,
               chunk: int = 1 << 21) -> OracleResult:
    """Estimate decoding-error probabilities from the exact model.

    decoder is "sic", "joint" or "oma". SNRs are drawn from the exact
    estimation law (conditional on the estimates when given), and errors
    are counted from region membership, or from blocklength-equivalent
    capacity draws when a blocklength is set. Sampling is chunked so the
    memory stays flat; counts are exact integers, so the result does not
    depend on the chunk size.

    `decoder` may also be an ErrorModel; its decoder name is used and its
    blocklength fills both n_fbl slots unless they are passed explicitly.
    """
    if isinstance(decoder, ErrorModel):
        model = decoder
        decoder = model.decoder
        if model.n_fbl is not None and n_fbl_1 is None and n_fbl_2 is None:
            n_fbl_1 = n_fbl_2 = model.n_fbl
    if decoder not in ("sic", "joint", "oma"):
        raise ValueError("decoder must be sic, joint or oma")
    if decoder == "sic" and order not in (DecodingOrder.USER1_FIRST, DecodingOrder.USER2_FIRST):
        raise ValueError("SIC oracle needs a decoding order")
    if decoder == "joint" and n_fbl_1 != n_fbl_2:
        raise ValueError("joint decoding uses one shared blocklength")
    if rng is None:
        rng = np.random.default_rng()
    r1 = float(r1)
    r2 = float(r2)
    phi1 = float(snr_threshold(r1))
    phi2 = float(snr_threshold(r2))

    fails_1 = 0
    fails_2 = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        g1 = user1.draw(rng, m)
        g2 = user2.draw(rng, m)
        if decoder == "oma":
            if n_fbl_1 is None:
                e1 = g1 < phi1
            else:
                e1 = _fbl_capacity(g1, n_fbl_1, "awgn", rng) < r1
            if n_fbl_2 is None:
                e2 = g2 < phi2
            else:
                e2 = _fbl_capacity(g2, n_fbl_2, "awgn", rng) < r2
        elif decoder == "joint":
            if n_fbl_1 is None:
                e1 = ~in_capacity_region(r1, r2, g1, g2)
            else:
                cap_sum = (np.log2(1.0 + g1 + g2)
                           + np.sqrt(dispersion_mac(g1, g2) / n_fbl_1) * rng.standard_normal(m))
                e1 = ((_fbl_capacity(g1, n_fbl_1, "awgn", rng) < r1)
                      | (_fbl_capacity(g2, n_fbl_1, "awgn", rng) < r2)
                      | (cap_sum < r1 + r2))
            e2 = e1
        else:
            if order == DecodingOrder.USER2_FIRST:
                gp, gf, phip, phif, nf = g1, g2, phi1, phi2, n_fbl_1
                rp, rf = r1, r2
            else:
                gp, gf, phip, phif, nf = g2, g1, phi2, phi1, n_fbl_2
                rp, rf = r2, r1
            sinr_f = gf / (1.0 + gp)
            if nf is None:
                ef = sinr_f < phif
                ep = ef | (gp < phip)
            else:
                ef = _fbl_capacity(sinr_f, nf, "iid", rng) < rf
                ep = ef | (_fbl_capacity(gp, nf, "iid", rng) < rp)
            if order == DecodingOrder.USER2_FIRST:
                e1, e2 = ep, ef
            else:
                e1, e2 = ef, ep
        fails_1 += int(np.count_nonzero(e1))
        fails_2 += int(np.count_nonzero(e2))
        done += m

    return OracleResult(
        eps_1=fails_1 / samples,
        eps_2=fails_2 / samples,
        ci_1=wilson_interval(fails_1, samples),
        ci_2=wilson_interval(fails_2, samples),
        samples=samples,
    )
