"""Rate-policy kernels in plain numpy.

Drop-in twin of the compiled extension; `_backend` exposes whichever
loads. Shape conventions: NP grid points, and per point Mp / Mf (or
M1 / M2) rate candidates. All sigma inputs are per-point vectors; rate
thresholds are [NP, M] matrices because candidate grids differ across
points. Everything is float64.
"""

import numpy as np
from scipy.special import erfc

_SQRT2 = np.sqrt(2.0)
_FLOOR = 1e-150


def _q(x):
    return 0.5 * erfc(x / _SQRT2)


def sic_eps_tensors(rho_p, sig_int, sig_own, rho_f, sig_f, phi_p, phi_f):
    """Decoding-error tensors for one SIC order.

    Returns (eps_p, eps_f): the priority user's error over [NP, Mp, Mf]
    and the first-decoded user's over [NP, Mf] (it does not depend on the
    priority user's rate). Same algebra as the scalar reference in
    `errors`, restructured so the per-(point, first-rate) pieces are
    computed once.
    """
    rho_p = np.asarray(rho_p, dtype=float)[:, None]
    rho_f = np.asarray(rho_f, dtype=float)[:, None]
    sig_int = np.maximum(np.asarray(sig_int, dtype=float), _FLOOR)[:, None]
    sig_own = np.maximum(np.asarray(sig_own, dtype=float), _FLOOR)[:, None]
    sig_f = np.maximum(np.asarray(sig_f, dtype=float), _FLOOR)[:, None]
    phi_p = np.asarray(phi_p, dtype=float)
    phi_f = np.asarray(phi_f, dtype=float)

    active = phi_f > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma_turn = np.where(active, rho_f / np.where(active, phi_f, 1.0) - 1.0, np.inf)

    v_int = sig_int * sig_int
    v_f = sig_f * sig_f
    den = v_f + v_int * phi_f * phi_f
    sig_n = np.sqrt(np.maximum(v_int * v_f / den, _FLOOR * _FLOOR))
    mu_n = (rho_p * v_f + v_int * phi_f * (rho_f - phi_f)) / den
    c = (rho_f - phi_f * (1.0 + rho_p)) ** 2 / (2.0 * den)
    pref = sig_n / (2.0 * sig_int) * np.exp(-c)
    tail = _q((gamma_turn - rho_p) / sig_int)
    q_turn = _q((gamma_turn - mu_n) / sig_n)

    slice_f = np.clip(pref * (_q(-mu_n / sig_n) - q_turn), 0.0, 1.0)
    eps_f = np.where(active, np.clip(tail + slice_f, 0.0, 1.0), 0.0)

    q_lo = _q((phi_p[:, :, None] - mu_n[:, None, :]) / sig_n[:, None, :])
    slice_p = np.clip(pref[:, None, :] * (q_lo - q_turn[:, None, :]), 0.0, 1.0)
    fail_f = np.where(active[:, None, :],
                      np.clip(tail[:, None, :] + slice_p, 0.0, 1.0), 0.0)
    own = np.where(phi_p > 0.0, _q((rho_p - phi_p) / sig_own), 0.0)
    eps_p = np.clip(fail_f + own[:, :, None], 0.0, 1.0)
    return eps_p, eps_f


def joint_eps_tensor(rho_1, sig_1, rho_2, sig_2, sig_12, phi_1, phi_2):
    """Joint-decoding error tensor over [NP, M1, M2]."""
    rho_1 = np.asarray(rho_1, dtype=float)[:, None]
    rho_2 = np.asarray(rho_2, dtype=float)[:, None]
    sig_1 = np.maximum(np.asarray(sig_1, dtype=float), _FLOOR)[:, None]
    sig_2 = np.maximum(np.asarray(sig_2, dtype=float), _FLOOR)[:, None]
    sig_12 = np.maximum(np.asarray(sig_12, dtype=float), _FLOOR)[:, None, None]
    phi_1 = np.asarray(phi_1, dtype=float)
    phi_2 = np.asarray(phi_2, dtype=float)

    t1 = np.where(phi_1 > 0.0, _q((rho_1 - phi_1) / sig_1), 0.0)
    t2 = np.where(phi_2 > 0.0, _q((rho_2 - phi_2) / sig_2), 0.0)
    phi_12 = (phi_1[:, :, None] + phi_2[:, None, :]
              + phi_1[:, :, None] * phi_2[:, None, :])
    rho_sum = (rho_1 + rho_2)[:, :, None]
    t12 = np.where(phi_12 > 0.0, _q((rho_sum - phi_12) / sig_12), 0.0)
    return np.clip(t1[:, :, None] + t2[:, None, :] + t12, 0.0, 1.0)


def sic_best_reduce(prob, eps_p, eps_f, w_p, w_f, lam_p, lam_f, chunk=2048):
    """Per-point best rate pair for one SIC order.

    Minimizes lam_p * e_p + lam_f * e_f over the candidate pair, where
    e = eps + (1 - eps) * w is a user's per-slot service transform
    contribution. Returns the probability-weighted sums (m_p, m_f) at the
    argmin, plus the chosen indices (priority-rate, first-rate) per point.
    """
    n_pts, m_p_cand, m_f_cand = eps_p.shape
    idx_p = np.empty(n_pts, dtype=np.int64)
    idx_f = np.empty(n_pts, dtype=np.int64)
    m_p = 0.0
    m_f = 0.0
    for lo in range(0, n_pts, chunk):
        hi = min(lo + chunk, n_pts)
        ep = eps_p[lo:hi]
        ef = eps_f[lo:hi]
        e_p = ep + (1.0 - ep) * w_p[lo:hi, :, None]
        e_f = ef + (1.0 - ef) * w_f[lo:hi]
        obj = lam_p * e_p + lam_f * e_f[:, None, :]
        flat = obj.reshape(hi - lo, -1)
        k = np.argmin(flat, axis=1)
        a = k // m_f_cand
        b = k % m_f_cand
        rows = np.arange(hi - lo)
        idx_p[lo:hi] = a
        idx_f[lo:hi] = b
        p = prob[lo:hi]
        m_p += float(np.dot(p, e_p[rows, a, b]))
        m_f += float(np.dot(p, e_f[rows, b]))
    return m_p, m_f, idx_p, idx_f


def joint_best_reduce(prob, eps, w_1, w_2, lam, chunk=2048):
    """Per-point best rate pair for joint decoding.

    Both users share one error; minimizes e_2 + lam * e_1. Returns
    (m_1, m_2, idx_1, idx_2).
    """
    n_pts, m1_cand, m2_cand = eps.shape
    idx_1 = np.empty(n_pts, dtype=np.int64)
    idx_2 = np.empty(n_pts, dtype=np.int64)
    m_1 = 0.0
    m_2 = 0.0
    for lo in range(0, n_pts, chunk):
        hi = min(lo + chunk, n_pts)
        e = eps[lo:hi]
        e_1 = e + (1.0 - e) * w_1[lo:hi, :, None]
        e_2 = e + (1.0 - e) * w_2[lo:hi, None, :]
        obj = e_2 + lam * e_1
        flat = obj.reshape(hi - lo, -1)
        k = np.argmin(flat, axis=1)
        a = k // m2_cand
        b = k % m2_cand
        rows = np.arange(hi - lo)
        idx_1[lo:hi] = a
        idx_2[lo:hi] = b
        p = prob[lo:hi]
        m_1 += float(np.dot(p, e_1[rows, a, b]))
        m_2 += float(np.dot(p, e_2[rows, a, b]))
    return m_1, m_2, idx_1, idx_2


def single_best_reduce(prob, eps, w):
    """Per-point best rate for a lone user; returns (m, idx)."""
    e = eps + (1.0 - eps) * w
    idx = np.argmin(e, axis=1)
    rows = np.arange(eps.shape[0])
    return float(np.dot(prob, e[rows, idx])), idx
