# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in _kernels_py.

Same functions, same shapes, same edge-case handling; the python module
is the executable reference and the equivalence tests hold both to it.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, erfc, exp, sqrt

cnp.import_array()

cdef double _FLOOR = 1e-150
cdef double _SQRT1_2 = 0.7071067811865476


cdef inline double _q(double x) noexcept nogil:
    return 0.5 * erfc(x * _SQRT1_2)


cdef inline double _clip01(double x) noexcept nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


cdef inline double _floored(double s) noexcept nogil:
    return s if s > _FLOOR else _FLOOR


def sic_eps_tensors(double[::1] rho_p, double[::1] sig_int, double[::1] sig_own,
                    double[::1] rho_f, double[::1] sig_f,
                    double[:, ::1] phi_p, double[:, ::1] phi_f):
    cdef Py_ssize_t n_pts = rho_p.shape[0]
    cdef Py_ssize_t m_p = phi_p.shape[1]
    cdef Py_ssize_t m_f = phi_f.shape[1]
    eps_p_arr = np.empty((n_pts, m_p, m_f), dtype=np.float64)
    eps_f_arr = np.empty((n_pts, m_f), dtype=np.float64)
    scratch = np.empty((5, m_f), dtype=np.float64)
    active_arr = np.empty(m_f, dtype=np.uint8)
    cdef double[:, :, ::1] eps_p = eps_p_arr
    cdef double[:, ::1] eps_f = eps_f_arr
    cdef double[:, ::1] buf = scratch
    cdef unsigned char[::1] active = active_arr
    cdef Py_ssize_t i, a, b
    cdef double rp, rf, si, so, sf, v_int, v_f
    cdef double phi, g_turn, den, sig_n, mu_n, c, pref, tail, q_turn
    cdef double own, q_lo, sl, fail

    with nogil:
        for i in range(n_pts):
            rp = rho_p[i]
            rf = rho_f[i]
            si = _floored(sig_int[i])
            so = _floored(sig_own[i])
            sf = _floored(sig_f[i])
            v_int = si * si
            v_f = sf * sf
            for b in range(m_f):
                phi = phi_f[i, b]
                if phi > 0.0:
                    active[b] = 1
                    g_turn = rf / phi - 1.0
                    den = v_f + v_int * phi * phi
                    sig_n = v_int * v_f / den
                    sig_n = sqrt(sig_n if sig_n > _FLOOR * _FLOOR else _FLOOR * _FLOOR)
                    mu_n = (rp * v_f + v_int * phi * (rf - phi)) / den
                    c = rf - phi * (1.0 + rp)
                    c = c * c / (2.0 * den)
                    pref = sig_n / (2.0 * si) * exp(-c)
                    tail = _q((g_turn - rp) / si)
                    q_turn = _q((g_turn - mu_n) / sig_n)
                    buf[0, b] = mu_n
                    buf[1, b] = sig_n
                    buf[2, b] = pref
                    buf[3, b] = tail
                    buf[4, b] = q_turn
                    sl = _clip01(pref * (_q(-mu_n / sig_n) - q_turn))
                    eps_f[i, b] = _clip01(tail + sl)
                else:
                    active[b] = 0
                    eps_f[i, b] = 0.0
            for a in range(m_p):
                phi = phi_p[i, a]
                own = _q((rp - phi) / so) if phi > 0.0 else 0.0
                for b in range(m_f):
                    if active[b]:
                        q_lo = _q((phi - buf[0, b]) / buf[1, b])
                        sl = _clip01(buf[2, b] * (q_lo - buf[4, b]))
                        fail = _clip01(buf[3, b] + sl)
                    else:
                        fail = 0.0
                    eps_p[i, a, b] = _clip01(fail + own)
    return eps_p_arr, eps_f_arr


def joint_eps_tensor(double[::1] rho_1, double[::1] sig_1,
                     double[::1] rho_2, double[::1] sig_2, double[::1] sig_12,
                     double[:, ::1] phi_1, double[:, ::1] phi_2):
    cdef Py_ssize_t n_pts = rho_1.shape[0]
    cdef Py_ssize_t m_1 = phi_1.shape[1]
    cdef Py_ssize_t m_2 = phi_2.shape[1]
    eps_arr = np.empty((n_pts, m_1, m_2), dtype=np.float64)
    t2_scratch = np.empty(m_2, dtype=np.float64)
    cdef double[:, :, ::1] eps = eps_arr
    cdef double[::1] t2 = t2_scratch
    cdef Py_ssize_t i, a, b
    cdef double r1, r2, s1, s2, s12, rs, p1, p2, p12, t1, t12

    with nogil:
        for i in range(n_pts):
            r1 = rho_1[i]
            r2 = rho_2[i]
            s1 = _floored(sig_1[i])
            s2 = _floored(sig_2[i])
            s12 = _floored(sig_12[i])
            rs = r1 + r2
            for b in range(m_2):
                p2 = phi_2[i, b]
                t2[b] = _q((r2 - p2) / s2) if p2 > 0.0 else 0.0
            for a in range(m_1):
                p1 = phi_1[i, a]
                t1 = _q((r1 - p1) / s1) if p1 > 0.0 else 0.0
                for b in range(m_2):
                    p2 = phi_2[i, b]
                    p12 = p1 + p2 + p1 * p2
                    t12 = _q((rs - p12) / s12) if p12 > 0.0 else 0.0
                    eps[i, a, b] = _clip01(t1 + t2[b] + t12)
    return eps_arr


def sic_best_reduce(double[::1] prob, double[:, :, ::1] eps_p, double[:, ::1] eps_f,
                    double[:, ::1] w_p, double[:, ::1] w_f,
                    double lam_p, double lam_f, chunk=None):
    cdef Py_ssize_t n_pts = eps_p.shape[0]
    cdef Py_ssize_t m_p = eps_p.shape[1]
    cdef Py_ssize_t m_f = eps_p.shape[2]
    idx_p_arr = np.empty(n_pts, dtype=np.int64)
    idx_f_arr = np.empty(n_pts, dtype=np.int64)
    ef_scratch = np.empty(m_f, dtype=np.float64)
    cdef cnp.int64_t[::1] idx_p = idx_p_arr
    cdef cnp.int64_t[::1] idx_f = idx_f_arr
    cdef double[::1] ef_row = ef_scratch
    cdef Py_ssize_t i, a, b, best_a, best_b
    cdef double m_p_sum = 0.0, m_f_sum = 0.0
    cdef double e, wp, obj, best, best_ep, best_ef

    with nogil:
        for i in range(n_pts):
            for b in range(m_f):
                e = eps_f[i, b]
                ef_row[b] = e + (1.0 - e) * w_f[i, b]
            best = INFINITY
            best_a = 0
            best_b = 0
            best_ep = 0.0
            best_ef = 0.0
            for a in range(m_p):
                wp = w_p[i, a]
                for b in range(m_f):
                    e = eps_p[i, a, b]
                    e = e + (1.0 - e) * wp
                    obj = lam_p * e + lam_f * ef_row[b]
                    if obj < best:
                        best = obj
                        best_a = a
                        best_b = b
                        best_ep = e
                        best_ef = ef_row[b]
            idx_p[i] = best_a
            idx_f[i] = best_b
            m_p_sum += prob[i] * best_ep
            m_f_sum += prob[i] * best_ef
    return m_p_sum, m_f_sum, idx_p_arr, idx_f_arr


def joint_best_reduce(double[::1] prob, double[:, :, ::1] eps,
                      double[:, ::1] w_1, double[:, ::1] w_2,
                      double lam, chunk=None):
    cdef Py_ssize_t n_pts = eps.shape[0]
    cdef Py_ssize_t m_1 = eps.shape[1]
    cdef Py_ssize_t m_2 = eps.shape[2]
    idx_1_arr = np.empty(n_pts, dtype=np.int64)
    idx_2_arr = np.empty(n_pts, dtype=np.int64)
    cdef cnp.int64_t[::1] idx_1 = idx_1_arr
    cdef cnp.int64_t[::1] idx_2 = idx_2_arr
    cdef Py_ssize_t i, a, b, best_a, best_b
    cdef double m_1_sum = 0.0, m_2_sum = 0.0
    cdef double e, e1, e2, w1, obj, best, best_e1, best_e2

    with nogil:
        for i in range(n_pts):
            best = INFINITY
            best_a = 0
            best_b = 0
            best_e1 = 0.0
            best_e2 = 0.0
            for a in range(m_1):
                w1 = w_1[i, a]
                for b in range(m_2):
                    e = eps[i, a, b]
                    e1 = e + (1.0 - e) * w1
                    e2 = e + (1.0 - e) * w_2[i, b]
                    obj = e2 + lam * e1
                    if obj < best:
                        best = obj
                        best_a = a
                        best_b = b
                        best_e1 = e1
                        best_e2 = e2
            idx_1[i] = best_a
            idx_2[i] = best_b
            m_1_sum += prob[i] * best_e1
            m_2_sum += prob[i] * best_e2
    return m_1_sum, m_2_sum, idx_1_arr, idx_2_arr


def single_best_reduce(double[::1] prob, double[:, ::1] eps, double[:, ::1] w):
    cdef Py_ssize_t n_pts = eps.shape[0]
    cdef Py_ssize_t m = eps.shape[1]
    idx_arr = np.empty(n_pts, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = idx_arr
    cdef Py_ssize_t i, a, best_a
    cdef double m_sum = 0.0
    cdef double e, best

    with nogil:
        for i in range(n_pts):
            best = INFINITY
            best_a = 0
            for a in range(m):
                e = eps[i, a]
                e = e + (1.0 - e) * w[i, a]
                if e < best:
                    best = e
                    best_a = a
            idx[i] = best_a
            m_sum += prob[i] * best
    return m_sum, idx_arr
