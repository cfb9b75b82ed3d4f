"""Rate adaptation against the delay-violation bounds.

A policy assigns each estimated-SNR grid point a rate pair, an error
pair and a decoding order. Its per-slot service transform for user k at
parameter s is sum_i p_i (eps_ki + (1 - eps_ki) e^{-s n_d r_ki}); the
design problem is to minimize user 2's transform subject to a cap on
user 1's, which separates per grid point once the cap is priced by a
multiplier.

Two perfect-CSI structures are solved exactly. With successive decoding
each point picks one of the two capacity-region corners, and the
constrained selection is a 0/1 knapsack whose LP relaxation the density
greedy solves; rounding the single fractional item down keeps the
constraint satisfied and costs at most that item's value. With joint
decoding each point slides along the sum-rate face, where the weighted
objective is convex in the split and the stationary point is available
in closed form. Imperfect CSI and finite blocklength have no such
structure, so those models search a per-point candidate grid with the
error tensors evaluated by the kernel backend; the returned policies
always carry errors recomputed through the error module at the chosen
rates, never values cached from the search.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import _backend as kernels
from . import snc
from .channel import interfered_rate, single_user_rate, sum_rate
from .csi import EstimatedState, UserGrid, build_user_grid
from .errors import (DecodingOrder, ErrorModel, _sic_fbl_sigmas,
                     dispersion_mac, eps_fbl_pcsi, eps_oma, eps_pair,
                     fbl_snr_stddev, fbl_sum_stddev, q_func, snr_threshold)

__all__ = [
    "InfeasibleError",
    "RatePolicy",
    "policy_mellin",
    "corner_rule",
    "face_rule",
    "optimize_sic_pcsi",
    "sic_policy_at_lambda",
    "optimize_joint_pcsi",
    "find_lambda",
    "optimize_grid",
    "outer_loop",
    "max_arrival_frontier",
    "OmaScheme",
    "oma_scheme",
    "oma_policy",
    "oma_max_arrivals",
]


class InfeasibleError(RuntimeError):
    """No policy on the grid satisfies the requested constraint."""


@dataclass(frozen=True)
class RatePolicy:
    """Per-grid-point rates, error probabilities and decoding orders.

    `order` holds DecodingOrder values; JOINT also marks points where no
    ordering exists (joint decoding, or a lone user in the orthogonal
    baseline). `lam` records the multiplier the policy was produced at;
    the joint closed form stores its rate offset instead, where +-inf
    means the whole grid is saturated at one end of the sum-rate face.
    """

    rate_1: np.ndarray
    rate_2: np.ndarray
    eps_1: np.ndarray
    eps_2: np.ndarray
    order: np.ndarray
    s_1: float
    s_2: float
    lam: float

    def __post_init__(self):
        for name in ("rate_1", "rate_2", "eps_1", "eps_2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "order", np.asarray(self.order, dtype=np.int64))
        shape = self.rate_1.shape
        if len(shape) != 1:
            raise ValueError("policies are flat over the grid")
        for name in ("rate_2", "eps_1", "eps_2", "order"):
            if getattr(self, name).shape != shape:
                raise ValueError("policy arrays must share one shape")
        for rate in (self.rate_1, self.rate_2):
            if not np.all(np.isfinite(rate)) or np.any(rate < 0.0):
                raise ValueError("rates must be finite and nonnegative")
        for eps in (self.eps_1, self.eps_2):
            if np.any(~np.isfinite(eps) | (eps < 0.0) | (eps > 1.0)):
                raise ValueError("error probabilities must lie in [0, 1]")
        if not np.isin(self.order, (0, 1, 2)).all():
            raise ValueError("order entries must be DecodingOrder values")
        if not (self.s_1 > 0.0 and self.s_2 > 0.0):
            raise ValueError("transform parameters must be positive")
        if math.isnan(self.lam):
            raise ValueError("lam must not be NaN")

    @property
    def n_points(self) -> int:
        return self.rate_1.shape[0]


def policy_mellin(grid, policy: RatePolicy, user: int, s: float, n_d: int) -> float:
    """User k's per-slot service transform under the policy."""
    spec = snc.ServiceSpec(grid=grid, policy=policy, n_d=n_d)
    return snc.mellin_service(spec, user, s)


# --- perfect CSI, successive decoding ------------------------------------

def _corner_rates(rho1, rho2):
    """Rates of the two region corners at the given SNR pairs.

    Written with the direct single-user and interfered forms (not as
    complements of the sum rate) so a corner rate is bitwise equal to the
    cap the rate-domain error indicators compare against.
    """
    r1max = single_user_rate(rho1)
    r2max = single_user_rate(rho2)
    r1min = interfered_rate(rho1, rho2)
    r2min = interfered_rate(rho2, rho1)
    return r1max, r1min, r2max, r2min


def corner_rule(rho1, rho2, s1, s2, n, lam):
    """Pointwise corner selection at a fixed price, for arbitrary SNRs.

    Returns (rate_1, rate_2, user-1-first mask). The grid policies weight
    each point's value and weight by its cell probability, which cancels
    inside the comparison; this probability-free form is what the
    exact-fidelity simulator applies at the drawn SNRs.
    """
    r1max, r1min, r2max, r2min = _corner_rates(rho1, rho2)
    v = np.exp(-s2 * n * r2min) - np.exp(-s2 * n * r2max)
    w = np.exp(-s1 * n * r1min) - np.exp(-s1 * n * r1max)
    pick_b = np.where(w > 0.0, v > lam * w, v > 0.0)
    return np.where(pick_b, r1min, r1max), np.where(pick_b, r2max, r2min), pick_b


def face_rule(rho1, rho2, s1, s2, lambda_tilde):
    """Pointwise sum-rate-face rates at a fixed offset, for arbitrary
    SNRs: r1 = s2/(s1+s2) rs + lambda_tilde clamped to the face, r2 the
    exact-sum complement nudged down up to a few ulp where the rounded
    sum would leave the region."""
    rs = sum_rate(rho1, rho2)
    cap1 = single_user_rate(rho1)
    cap2 = single_user_rate(rho2)
    lo = np.minimum(np.maximum(rs - cap2, 0.0), cap1)
    f = s2 / (s1 + s2)
    r1 = np.clip(f * rs + lambda_tilde, lo, cap1)
    r2 = np.minimum(rs - r1, cap2)
    over = r1 + r2 > rs
    while np.any(over):
        r2 = np.where(over, np.nextafter(r2, 0.0), r2)
        over = r1 + r2 > rs
    return r1, r2


def _knapsack_items(grid, s1, s2, n):
    """Per-point (value, weight) of flipping a point to the corner that
    decodes user 1 first: value is user 2's transform drop, weight is
    user 1's transform rise. Both are clipped at zero against stray
    negative rounding."""
    r1max, r1min, r2max, r2min = _corner_rates(grid.rho1, grid.rho2)
    p = grid.prob
    v = np.maximum(p * (np.exp(-s2 * n * r2min) - np.exp(-s2 * n * r2max)), 0.0)
    w = np.maximum(p * (np.exp(-s1 * n * r1min) - np.exp(-s1 * n * r1max)), 0.0)
    return v, w


def _sic_corner_policy(grid, s1, s2, n, pick_b, lam):
    r1max, r1min, r2max, r2min = _corner_rates(grid.rho1, grid.rho2)
    zeros = np.zeros(grid.n_points)
    order = np.where(pick_b, int(DecodingOrder.USER1_FIRST),
                     int(DecodingOrder.USER2_FIRST)).astype(np.int64)
    return RatePolicy(rate_1=np.where(pick_b, r1min, r1max),
                      rate_2=np.where(pick_b, r2max, r2min),
                      eps_1=zeros, eps_2=zeros.copy(), order=order,
                      s_1=s1, s_2=s2, lam=lam)


def optimize_sic_pcsi(grid, s1, s2, n, budget) -> RatePolicy:
    """Best corner selection within a user-1 transform budget.

    `budget` is the allowed slack above the floor where every point
    decodes user 1 last (its transform minimum). The greedy takes points
    by value density until the budget is spent; the straddling item is
    rounded down, so the constraint holds exactly and the selection is at
    most one item's value away from the unrounded optimum. Density ties
    break toward the lower grid index. The returned policy's `lam` is the
    density of the first rejected item (the critical price), 0 when
    everything fits.
    """
    if budget < 0.0:
        raise InfeasibleError("budget below the all-corner floor")
    v, w = _knapsack_items(grid, s1, s2, n)
    ratio = np.where(w > 0.0, v / np.where(w > 0.0, w, 1.0),
                     np.where(v > 0.0, np.inf, 0.0))
    order = np.lexsort((np.arange(v.size), -ratio))
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, budget, side="right"))
    pick_b = np.zeros(v.size, dtype=bool)
    pick_b[order[:k]] = True
    lam = float(ratio[order[k]]) if k < v.size else 0.0
    return _sic_corner_policy(grid, s1, s2, n, pick_b, lam)


def sic_policy_at_lambda(grid, s1, s2, n, lam) -> RatePolicy:
    """Corner selection at a fixed price: flip a point exactly when its
    value beats lam times its weight (ties stay at the floor corner);
    zero-weight points flip whenever their value is positive."""
    if math.isnan(lam) or lam < 0.0:
        raise ValueError("lam must be nonnegative")
    v, w = _knapsack_items(grid, s1, s2, n)
    pick_b = np.where(w > 0.0, v > lam * w, v > 0.0)
    return _sic_corner_policy(grid, s1, s2, n, pick_b, float(lam))


# --- perfect CSI, joint decoding ------------------------------------------

def optimize_joint_pcsi(grid, s1, s2, n, lambda_tilde) -> RatePolicy:
    """Joint-decoding rates on the sum-rate face at a fixed price.

    Per point, e^{-s2 n r2} + lam e^{-s1 n r1} with r1 + r2 = rs is
    convex in r1 and stationary at r1 = s2/(s1+s2) rs + lambda_tilde; the
    offset lambda_tilde = ln(lam s1/s2) / ((s1+s2) n) carries the price.
    r1 is clamped to the face (r2 within its single-user cap and
    nonnegative); +-inf offsets saturate every point at one end. r2 is
    the exact-sum complement, nudged down up to a few ulp where the
    rounded sum would leave the region.
    """
    if math.isnan(lambda_tilde):
        raise ValueError("lambda_tilde must not be NaN")
    r1, r2 = face_rule(grid.rho1, grid.rho2, s1, s2, lambda_tilde)
    zeros = np.zeros(grid.n_points)
    order = np.full(grid.n_points, int(DecodingOrder.JOINT), dtype=np.int64)
    return RatePolicy(rate_1=r1, rate_2=r2, eps_1=zeros, eps_2=zeros.copy(),
                      order=order, s_1=s1, s_2=s2, lam=float(lambda_tilde))


# --- the multiplier search ------------------------------------------------

def find_lambda(optimizer, grid, s1, s2, n, constraint) -> RatePolicy:
    """Policy meeting a user-1 transform constraint with the least price.

    The returned policy always satisfies
    sum_i p_i (eps_1i + (1 - eps_1i) e^{-s1 n r_1i}) <= constraint.
    `optimizer` selects the inner solver: "sic" converts the constraint
    into a knapsack budget and solves it exactly; "joint" bisects the
    closed form's rate offset (the transform is continuous there); any
    callable lam -> RatePolicy is bisected on the multiplier itself,
    treating its transform as a nonincreasing step function of lam.
    Raises InfeasibleError when even the most protective policy misses
    the constraint.
    """
    if math.isnan(constraint):
        raise ValueError("constraint must not be NaN")

    def m1(pol):
        return policy_mellin(grid, pol, 1, s1, n)

    if optimizer == "sic":
        r1max = single_user_rate(grid.rho1)
        base = float(np.dot(grid.prob, np.exp(-s1 * n * r1max)))
        if not constraint >= base:
            raise InfeasibleError("constraint below the all-corner floor")
        return optimize_sic_pcsi(grid, s1, s2, n, constraint - base)

    if optimizer == "joint":
        rs = sum_rate(grid.rho1, grid.rho2)
        cap1 = single_user_rate(grid.rho1)
        cap2 = single_user_rate(grid.rho2)
        face_lo = np.minimum(np.maximum(rs - cap2, 0.0), cap1)
        frac = s2 / (s1 + s2)
        lt_lo = float(np.min(face_lo - frac * rs))
        lt_hi = float(np.max(cap1 - frac * rs))
        pol_hi = optimize_joint_pcsi(grid, s1, s2, n, lt_hi)
        m_hi = m1(pol_hi)
        if not m_hi <= constraint:
            raise InfeasibleError("user-1 transform floor exceeds the constraint")
        pol_lo = optimize_joint_pcsi(grid, s1, s2, n, lt_lo)
        if m1(pol_lo) <= constraint:
            return pol_lo
        lo, hi = lt_lo, lt_hi
        scale = max(abs(lo), abs(hi), 1.0)
        for _ in range(200):
            if m_hi >= constraint * (1.0 - 1e-6) or hi - lo <= 1e-12 * scale:
                break
            mid = 0.5 * (lo + hi)
            pol = optimize_joint_pcsi(grid, s1, s2, n, mid)
            m = m1(pol)
            if m <= constraint:
                hi, pol_hi, m_hi = mid, pol, m
            else:
                lo = mid
        return pol_hi

    if not callable(optimizer):
        raise ValueError("optimizer must be 'sic', 'joint' or a callable")

    pol = optimizer(0.0)
    if m1(pol) <= constraint:
        return pol
    hi = 1.0
    pol_hi = optimizer(hi)
    m_hi = m1(pol_hi)
    while m_hi > constraint:
        if hi >= 1e18:
            raise InfeasibleError("no multiplier meets the user-1 constraint")
        hi *= 16.0
        pol_hi = optimizer(hi)
        m_hi = m1(pol_hi)
    lo = hi / 16.0 if hi > 1.0 else 0.0
    for _ in range(200):
        if hi - lo <= max(1e-9, 1e-9 * hi):
            break
        # the transform is flat between selection flips; once the bracket
        # is tight in ratio, a near-binding value cannot hide a flip
        if m_hi >= constraint * (1.0 - 1e-6) and lo > 0.0 and hi <= lo * 1.002:
            break
        mid = 0.5 * (lo + hi)
        pol = optimizer(mid)
        m = m1(pol)
        if m <= constraint:
            hi, pol_hi, m_hi = mid, pol, m
        else:
            lo = mid
    return pol_hi


# --- the candidate-grid search ---------------------------------------------

_WORKSPACES: "OrderedDict[tuple, dict]" = OrderedDict()
_WORKSPACE_KEEP = 3


def _workspace(model: ErrorModel, grid, m: int) -> dict:
    """Error tensors on the candidate rates, cached per (model, grid, m).

    The tensors do not depend on the transform parameters or n_d, so one
    workspace serves every (s1, s2, lam) probe of an outer search. Grid
    identity is by array content (bytes), not object identity.
    """
    key = (model.decoder, model.csi, model.n_fbl, m,
           grid.rho1.tobytes(), grid.rho2.tobytes(),
           grid.sigma1.tobytes(), grid.sigma2.tobytes(), grid.prob.tobytes())
    ws = _WORKSPACES.get(key)
    if ws is not None:
        _WORKSPACES.move_to_end(key)
        return ws
    ws = _build_workspace(model, grid, m)
    _WORKSPACES[key] = ws
    while len(_WORKSPACES) > _WORKSPACE_KEEP:
        _WORKSPACES.popitem(last=False)
    return ws


def _build_workspace(model: ErrorModel, grid, m: int) -> dict:
    """Candidate rates (linear from 0 to a 3-sigma cap) and their error
    tensors, matching the error module's composition for the model."""
    frac = np.linspace(0.0, 1.0, m)
    n = model.n_fbl
    ws = {}
    if model.decoder == "sic":
        for order in (DecodingOrder.USER1_FIRST, DecodingOrder.USER2_FIRST):
            if order == DecodingOrder.USER2_FIRST:
                rho_p, sig_p = grid.rho1, grid.sigma1
                rho_f, sig_f = grid.rho2, grid.sigma2
            else:
                rho_p, sig_p = grid.rho2, grid.sigma2
                rho_f, sig_f = grid.rho1, grid.sigma1
            if n is not None:
                sig_own, sig_f_eff = _sic_fbl_sigmas(rho_p, sig_p, rho_f, sig_f, n)
            else:
                sig_own, sig_f_eff = sig_p, sig_f
            cap_p = np.log2(1.0 + rho_p + 3.0 * sig_own)
            cap_f = np.log2(1.0 + (rho_f + 3.0 * sig_f_eff) / (1.0 + rho_p))
            cand_p = cap_p[:, None] * frac
            cand_f = cap_f[:, None] * frac
            if model.csi == "perfect":
                # finite blocklength (the infinite case never gets here):
                # same composition as the error module's perfect-CSI path
                sinr_f = rho_f / (1.0 + rho_p)
                e_f = np.where(cand_f > 0.0,
                               eps_fbl_pcsi(cand_f, sinr_f[:, None], n, "iid"), 0.0)
                own = np.where(cand_p > 0.0,
                               eps_fbl_pcsi(cand_p, rho_p[:, None], n, "iid"), 0.0)
                e_p = np.clip(e_f[:, None, :] + own[:, :, None], 0.0, 1.0)
            else:
                e_p, e_f = kernels.sic_eps_tensors(
                    rho_p, sig_p, sig_own, rho_f, sig_f_eff,
                    snr_threshold(cand_p), snr_threshold(cand_f))
            ws[order] = (cand_p, cand_f, e_p, e_f)
        return ws

    if model.csi == "perfect":
        sig_1 = fbl_snr_stddev(grid.rho1, n, "awgn")
        sig_2 = fbl_snr_stddev(grid.rho2, n, "awgn")
    elif n is not None:
        sig_1 = np.sqrt(grid.sigma1**2 + fbl_snr_stddev(grid.rho1, n, "awgn") ** 2)
        sig_2 = np.sqrt(grid.sigma2**2 + fbl_snr_stddev(grid.rho2, n, "awgn") ** 2)
    else:
        sig_1, sig_2 = grid.sigma1, grid.sigma2
    cand_1 = np.log2(1.0 + grid.rho1 + 3.0 * sig_1)[:, None] * frac
    cand_2 = np.log2(1.0 + grid.rho2 + 3.0 * sig_2)[:, None] * frac
    if model.csi == "perfect":
        e1 = np.where(cand_1 > 0.0,
                      eps_fbl_pcsi(cand_1, grid.rho1[:, None], n, "awgn"), 0.0)
        e2 = np.where(cand_2 > 0.0,
                      eps_fbl_pcsi(cand_2, grid.rho2[:, None], n, "awgn"), 0.0)
        cap_s = np.log2(1.0 + grid.rho1 + grid.rho2)[:, None, None]
        scale = np.sqrt(dispersion_mac(grid.rho1, grid.rho2) / n)[:, None, None]
        r1t = cand_1[:, :, None]
        r2t = cand_2[:, None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            arg = (cap_s - r1t - r2t) / scale
        es = np.where(scale > 0.0, q_func(np.where(scale > 0.0, arg, 0.0)),
                      (r1t + r2t > cap_s).astype(float))
        es = np.where(r1t + r2t > 0.0, es, 0.0)
        eps = np.clip(e1[:, :, None] + e2[:, None, :] + es, 0.0, 1.0)
    else:
        if n is not None:
            sig_12 = np.sqrt(grid.sigma1**2 + grid.sigma2**2
                             + fbl_sum_stddev(grid.rho1, grid.rho2, n) ** 2)
        else:
            sig_12 = np.sqrt(grid.sigma1**2 + grid.sigma2**2)
        eps = kernels.joint_eps_tensor(grid.rho1, sig_1, grid.rho2, sig_2, sig_12,
                                       snr_threshold(cand_1), snr_threshold(cand_2))
    ws["joint"] = (cand_1, cand_2, eps)
    return ws


def optimize_grid(model: ErrorModel, grid, s1, s2, lam,
                  rate_candidates: int = 32, *, n_d: int) -> RatePolicy:
    """Best per-point rates for the weighted objective e_2 + lam e_1.

    e_k is user k's transform contribution
    eps_k + (1 - eps_k) e^{-s_k n_d r_k}, so lam prices user 1's
    constraint into the pointwise problem. Perfect-CSI infinite-
    blocklength models route to the exact corner and sum-rate-face
    structures; every other model searches `rate_candidates` linear steps
    from zero to a 3-sigma cap per point (both SIC orders are searched
    and merged pointwise). Errors in the returned policy are recomputed
    from the error module at the chosen rates.
    """
    if model.decoder not in ("sic", "joint"):
        raise ValueError("optimize_grid covers sic and joint; see oma_scheme")
    if not (s1 > 0.0 and s2 > 0.0):
        raise ValueError("transform parameters must be positive")
    if not (np.isfinite(lam) and lam >= 0.0):
        raise ValueError("lam must be finite and nonnegative")
    if rate_candidates < 2:
        raise ValueError("need at least two rate candidates")
    if n_d < 1:
        raise ValueError("n_d must be positive")

    if model.csi == "perfect" and not model.finite_blocklength:
        if model.decoder == "sic":
            return sic_policy_at_lambda(grid, s1, s2, n_d, lam)
        if lam == 0.0:
            return optimize_joint_pcsi(grid, s1, s2, n_d, -math.inf)
        lt = float(np.log(lam * s1 / s2) / ((s1 + s2) * n_d))
        return optimize_joint_pcsi(grid, s1, s2, n_d, lt)

    ws = _workspace(model, grid, rate_candidates)
    est = EstimatedState(grid.rho1, grid.rho2, grid.sigma1, grid.sigma2)
    rows = np.arange(grid.n_points)

    if model.decoder == "joint":
        cand_1, cand_2, eps = ws["joint"]
        w_1 = np.exp(-s1 * n_d * cand_1)
        w_2 = np.exp(-s2 * n_d * cand_2)
        _, _, idx_1, idx_2 = kernels.joint_best_reduce(grid.prob, eps, w_1, w_2, lam)
        r1 = cand_1[rows, idx_1]
        r2 = cand_2[rows, idx_2]
        e1, e2 = eps_pair(model, r1, r2, est, DecodingOrder.JOINT)
        order = np.full(grid.n_points, int(DecodingOrder.JOINT), dtype=np.int64)
        return RatePolicy(rate_1=r1, rate_2=r2, eps_1=e1, eps_2=e2, order=order,
                          s_1=s1, s_2=s2, lam=float(lam))

    per_order = {}
    for order in (DecodingOrder.USER1_FIRST, DecodingOrder.USER2_FIRST):
        cand_p, cand_f, e_p, e_f = ws[order]
        if order == DecodingOrder.USER2_FIRST:
            # user 1 is decoded last here, so it carries the price
            w_p = np.exp(-s1 * n_d * cand_p)
            w_f = np.exp(-s2 * n_d * cand_f)
            lam_p, lam_f = lam, 1.0
        else:
            w_p = np.exp(-s2 * n_d * cand_p)
            w_f = np.exp(-s1 * n_d * cand_f)
            lam_p, lam_f = 1.0, lam
        _, _, idx_p, idx_f = kernels.sic_best_reduce(
            grid.prob, e_p, e_f, w_p, w_f, lam_p, lam_f)
        r_p = cand_p[rows, idx_p]
        r_f = cand_f[rows, idx_f]
        r1, r2 = (r_p, r_f) if order == DecodingOrder.USER2_FIRST else (r_f, r_p)
        e1, e2 = eps_pair(model, r1, r2, est, order)
        obj = (e2 + (1.0 - e2) * np.exp(-s2 * n_d * r2)
               + lam * (e1 + (1.0 - e1) * np.exp(-s1 * n_d * r1)))
        per_order[order] = (r1, r2, e1, e2, obj)

    r1a, r2a, e1a, e2a, obj_a = per_order[DecodingOrder.USER2_FIRST]
    r1b, r2b, e1b, e2b, obj_b = per_order[DecodingOrder.USER1_FIRST]
    take_a = obj_a <= obj_b
    order = np.where(take_a, int(DecodingOrder.USER2_FIRST),
                     int(DecodingOrder.USER1_FIRST)).astype(np.int64)
    return RatePolicy(rate_1=np.where(take_a, r1a, r1b),
                      rate_2=np.where(take_a, r2a, r2b),
                      eps_1=np.where(take_a, e1a, e1b),
                      eps_2=np.where(take_a, e2a, e2b),
                      order=order, s_1=s1, s_2=s2, lam=float(lam))


# --- the outer search over transform parameters ---------------------------

_DEFAULT_S_GRID = np.geomspace(5e-4, 0.25, 9)


def _search_s_pair(eval_cell, s_grid_1, s_grid_2, max_rounds, min_gain):
    """Maximize eval_cell over (s1, s2): a coarse product sweep followed
    by a pattern search on the log-scaled pair.

    eval_cell returns (score, payload), or None for an infeasible cell.
    min_gain(delta, score) stops the refinement once a round's
    improvement stops mattering. Returns (score, payload, s1, s2), or
    None when every cell is infeasible.
    """
    cache = {}

    def probe(s1, s2):
        key = (s1, s2)
        if key not in cache:
            cache[key] = eval_cell(s1, s2)
        return cache[key]

    best = None
    for s1 in np.asarray(s_grid_1, dtype=float):
        for s2 in np.asarray(s_grid_2, dtype=float):
            out = probe(float(s1), float(s2))
            if out is not None and (best is None or out[0] > best[0]):
                best = (out[0], out[1], float(s1), float(s2))
    if best is None:
        return None

    def grid_step(g):
        g = np.asarray(g, dtype=float)
        return math.log(g[1] / g[0]) if g.size > 1 else math.log(4.0)

    step = max(grid_step(s_grid_1), grid_step(s_grid_2))
    for _ in range(max_rounds):
        if step < 0.02:
            break
        prev = best[0]
        moved = False
        for d1, d2 in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            s1 = best[2] * math.exp(d1 * step)
            s2 = best[3] * math.exp(d2 * step)
            out = probe(s1, s2)
            if out is not None and out[0] > best[0]:
                best = (out[0], out[1], s1, s2)
                moved = True
        if not moved:
            step *= 0.5
        elif min_gain(best[0] - prev, best[0]):
            break
    return best


def _inner_optimizer(model: ErrorModel, grid, rate_candidates, n_d):
    """find_lambda's solver argument for the model: the exact structure
    when there is one, the candidate-grid search otherwise."""
    if model.csi == "perfect" and not model.finite_blocklength:
        return lambda s1, s2: model.decoder
    return lambda s1, s2: (
        lambda lam: optimize_grid(model, grid, s1, s2, lam, rate_candidates, n_d=n_d))


def outer_loop(model: ErrorModel, grid, arrival_1: snc.ArrivalSpec,
               arrival_2: snc.ArrivalSpec, w: int, target_pv_1: float, *,
               n_d: int, w_1: int | None = None, rate_candidates: int = 32,
               s_grid_1=None, s_grid_2=None, max_rounds: int = 50,
               rel_tol: float = 0.01):
    """Minimize user 2's delay bound subject to user 1's delay target.

    For each transform pair (s1, s2) the user-1 kernel constraint
    inverts into a transform budget at s1; find_lambda produces the
    least-pressure policy meeting it, and user 2's bound is evaluated at
    the deadline w. The (s1, s2) pair is tuned by a coarse sweep plus
    pattern refinement (stopping once a round improves the bound by less
    than rel_tol, as a log-scale fraction). w_1 defaults to user 1's
    deadline being the same w; target_pv_1 >= 1 disables the constraint.

    Returns (policy, DelayBound for user 2); raises InfeasibleError when
    no sampled pair supports the target.
    """
    if model.decoder == "oma":
        raise ValueError("the orthogonal baseline is handled by oma_scheme")
    if target_pv_1 <= 0.0:
        raise ValueError("target_pv_1 must be positive")
    if w_1 is None:
        w_1 = w
    if s_grid_1 is None:
        s_grid_1 = _DEFAULT_S_GRID
    if s_grid_2 is None:
        s_grid_2 = _DEFAULT_S_GRID
    inner = _inner_optimizer(model, grid, rate_candidates, n_d)

    def eval_cell(s1, s2):
        if target_pv_1 >= 1.0:
            budget = math.inf
        else:
            budget = snc.mellin_budget(s1, arrival_1.alpha, w_1, target_pv_1)
            if budget <= 0.0:
                return None
        try:
            pol = find_lambda(inner(s1, s2), grid, s1, s2, n_d, budget)
        except InfeasibleError:
            return None
        spec = snc.ServiceSpec(grid=grid, policy=pol, n_d=n_d)
        try:
            db = snc.delay_bound(arrival_2, spec, 2, w)
        except snc.StabilityError:
            return None
        return (-math.log(max(db.bound, 1e-320)), (pol, db))

    best = _search_s_pair(eval_cell, s_grid_1, s_grid_2, max_rounds,
                          lambda delta, score: delta <= rel_tol)
    if best is None:
        raise InfeasibleError("no transform pair meets the user-1 target")
    return best[1]


def max_arrival_frontier(model: ErrorModel, grid, alphas_1, w: int,
                         target_pv: float, *, n_d: int,
                         rate_candidates: int = 32, s_grid_1=None,
                         s_grid_2=None, max_rounds: int = 50,
                         rel_tol: float = 0.01) -> np.ndarray:
    """User 2's largest supportable arrival rate per user-1 arrival rate.

    Both users face the same deadline and target. Each user-1 rate gets
    its own (s1, s2) search; a rate no transform pair supports yields a
    zero column instead of an error, so sweeps over a whole axis always
    complete.
    """
    if model.decoder == "oma":
        raise ValueError("the orthogonal baseline is handled by oma_max_arrivals")
    if s_grid_1 is None:
        s_grid_1 = _DEFAULT_S_GRID
    if s_grid_2 is None:
        s_grid_2 = _DEFAULT_S_GRID
    inner = _inner_optimizer(model, grid, rate_candidates, n_d)
    alphas_1 = np.asarray(alphas_1, dtype=float)
    out = np.zeros(alphas_1.shape)

    for j, alpha_1 in enumerate(alphas_1):
        def eval_cell(s1, s2, alpha_1=float(alpha_1)):
            budget = snc.mellin_budget(s1, alpha_1, w, target_pv)
            if budget <= 0.0:
                return None
            try:
                pol = find_lambda(inner(s1, s2), grid, s1, s2, n_d, budget)
            except InfeasibleError:
                return None
            spec = snc.ServiceSpec(grid=grid, policy=pol, n_d=n_d)
            alpha_2 = snc.max_arrival(spec, 2, w, target_pv)
            return (alpha_2, alpha_2) if alpha_2 > 0.0 else None

        best = _search_s_pair(eval_cell, s_grid_1, s_grid_2, max_rounds,
                              lambda d, s: d <= rel_tol * max(1.0, abs(s)))
        out[j] = best[0] if best is not None else 0.0
    return out


# --- the orthogonal baseline -----------------------------------------------

@dataclass(frozen=True)
class OmaScheme:
    """Both per-user policies of the time-split baseline.

    Each user transmits alone at full power for its share of the data
    symbols; policy k fills only user k's columns (the other user's rate
    and error are zero) and its grid is the user's own estimate axis.
    """

    policy_1: RatePolicy
    policy_2: RatePolicy
    grid_1: UserGrid
    grid_2: UserGrid
    n_1: int
    n_2: int

    def service(self, user: int) -> snc.ServiceSpec:
        if user == 1:
            pol, ug, n = self.policy_1, self.grid_1, self.n_1
        elif user == 2:
            pol, ug, n = self.policy_2, self.grid_2, self.n_2
        else:
            raise ValueError("user must be 1 or 2")
        return snc.ServiceSpec.from_arrays(ug.prob, pol.rate_1, pol.eps_1,
                                           pol.rate_2, pol.eps_2, n)


def _oma_eps(model: ErrorModel, rate, rho_hat, sigma_ic, n_fbl):
    """Single-user error law, matching the error module's dispatch with
    the user's own blocklength in place of the model-wide flag."""
    if model.csi == "imperfect":
        return np.asarray(eps_oma(rate, rho_hat, sigma_ic, n_fbl))
    rate = np.asarray(rate, dtype=float)
    if n_fbl is None:
        return (rate > single_user_rate(rho_hat)).astype(float)
    return np.where(rate > 0.0, eps_fbl_pcsi(rate, rho_hat, n_fbl, "awgn"), 0.0)


def _oma_best(model: ErrorModel, ug: UserGrid, s: float, n_k: int,
              rate_candidates: int):
    """Best per-point rate for a lone user at transform parameter s."""
    if model.csi == "perfect" and not model.finite_blocklength:
        return single_user_rate(ug.rho_hat), np.zeros(ug.n_points)
    n_fbl = n_k if model.finite_blocklength else None
    if not model.finite_blocklength:
        sig_tot = ug.sigma_ic
    elif model.csi == "perfect":
        sig_tot = fbl_snr_stddev(ug.rho_hat, n_fbl, "awgn")
    else:
        sig_tot = np.hypot(ug.sigma_ic, fbl_snr_stddev(ug.rho_hat, n_fbl, "awgn"))
    cap = np.log2(1.0 + ug.rho_hat + 3.0 * sig_tot)
    cands = cap[:, None] * np.linspace(0.0, 1.0, rate_candidates)
    eps = _oma_eps(model, cands, ug.rho_hat[:, None], ug.sigma_ic[:, None], n_fbl)
    decay = np.exp(-s * n_k * cands)
    _, idx = kernels.single_best_reduce(ug.prob, eps, decay)
    rate = cands[np.arange(ug.n_points), idx]
    return rate, _oma_eps(model, rate, ug.rho_hat, ug.sigma_ic, n_fbl)


def oma_scheme(model: ErrorModel, avg, training, s_1: float, s_2: float, *,
               n_d: int, split: float = 0.5, points: int = 100,
               rate_candidates: int = 32) -> OmaScheme:
    """Optimize the time-split baseline.

    User 1 gets round(split * n_d) data symbols (clipped to leave the
    other user at least one) and user 2 the rest; each transmits alone at
    its full average SNR on its own estimate grid. The model's
    blocklength field only selects the finite-blocklength law; the
    backoff always enters at the user's own share. training=None means
    perfect estimation.
    """
    if model.decoder != "oma":
        raise ValueError("oma_scheme needs the oma decoder")
    if not 0.0 < split < 1.0:
        raise ValueError("split must be inside (0, 1)")
    if n_d < 2:
        raise ValueError("both users need at least one data symbol")
    n_1 = min(max(int(round(split * n_d)), 1), n_d - 1)
    n_2 = n_d - n_1

    built = {}
    for user, s_k, n_k in ((1, s_1, n_1), (2, s_2, n_2)):
        rho_oma = avg.rho_oma_1 if user == 1 else avg.rho_oma_2
        sigma_z2 = training.sigma_z2(user) if training is not None else 0.0
        ug = build_user_grid(rho_oma, sigma_z2, points)
        rate, eps = _oma_best(model, ug, s_k, n_k, rate_candidates)
        zeros = np.zeros(ug.n_points)
        order = np.full(ug.n_points, int(DecodingOrder.JOINT), dtype=np.int64)
        if user == 1:
            pol = RatePolicy(rate_1=rate, rate_2=zeros, eps_1=eps,
                             eps_2=zeros.copy(), order=order,
                             s_1=s_k, s_2=s_k, lam=0.0)
        else:
            pol = RatePolicy(rate_1=zeros, rate_2=rate, eps_1=zeros.copy(),
                             eps_2=eps, order=order,
                             s_1=s_k, s_2=s_k, lam=0.0)
        built[user] = (pol, ug)
    return OmaScheme(policy_1=built[1][0], policy_2=built[2][0],
                     grid_1=built[1][1], grid_2=built[2][1], n_1=n_1, n_2=n_2)


def oma_policy(model: ErrorModel, avg, training, s_1: float, s_2: float, *,
               n_d: int, split: float = 0.5, points: int = 100,
               rate_candidates: int = 32):
    """The baseline's two per-user policies, as a (user 1, user 2) pair."""
    scheme = oma_scheme(model, avg, training, s_1, s_2, n_d=n_d, split=split,
                        points=points, rate_candidates=rate_candidates)
    return scheme.policy_1, scheme.policy_2


def oma_max_arrivals(model: ErrorModel, avg, training, w: int,
                     target_pv: float, *, n_d: int, split: float = 0.5,
                     points: int = 100, rate_candidates: int = 32,
                     s_grid=None):
    """Largest per-user constant arrivals the baseline carries at the
    delay target. The users are orthogonal, so each maximizes alone; one
    scheme build per sampled transform parameter serves both."""
    if s_grid is None:
        s_grid = _DEFAULT_S_GRID
    best_1 = best_2 = 0.0
    for s in np.asarray(s_grid, dtype=float):
        scheme = oma_scheme(model, avg, training, float(s), float(s), n_d=n_d,
                            split=split, points=points,
                            rate_candidates=rate_candidates)
        best_1 = max(best_1, snc.max_arrival(scheme.service(1), 1, w, target_pv))
        best_2 = max(best_2, snc.max_arrival(scheme.service(2), 2, w, target_pv))
    return best_1, best_2
