"""Delay-violation bounds for block-fading service via transform-domain
queueing analysis.

The arrival and service processes enter through their SNR-domain
transforms: constant arrivals of alpha bits per slot give
ma(s) = e^{s alpha}, and a rate policy over the estimate grid gives
ms(s) = sum_i p_i (eps_i + (1 - eps_i) e^{-s n_d r_i}) per user. When
ma * ms < 1 the queue is stable and

    p_v(w) <= inf_{s > 0}  ms(s)^w / (1 - ma(s) ms(s))

bounds the probability that the steady-state delay exceeds w slots.
Everything here works in the log domain so large s * alpha products do
not overflow.
"""

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import brentq

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_S_GRID = np.geomspace(1e-5, 10.0, 40)


class StabilityError(RuntimeError):
    """No SNC parameter satisfies the stability condition."""


@dataclass(frozen=True)
class ArrivalSpec:
    """Constant per-slot arrivals, in bits."""

    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError("arrival rate must be finite and nonnegative")


@dataclass(frozen=True)
class DelayBound:
    """Violation bound at deadline w, with the minimizing parameter."""

    w: int
    bound: float
    s_opt: float


@dataclass(frozen=True)
class ServiceSpec:
    """A rate policy applied on an estimate grid, n_d symbols per slot.

    Either pass (grid, policy) or build from flat arrays; the per-user
    views used by the bound are the same either way.
    """

    grid: Any = None
    policy: Any = None
    n_d: int = 0
    _arrays: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._arrays is None:
            if self.grid is None or self.policy is None:
                raise ValueError("need a grid and a policy, or from_arrays()")
            arrays = {
                "prob": np.asarray(self.grid.prob, dtype=float),
                1: (np.asarray(self.policy.rate_1, dtype=float),
                    np.asarray(self.policy.eps_1, dtype=float)),
                2: (np.asarray(self.policy.rate_2, dtype=float),
                    np.asarray(self.policy.eps_2, dtype=float)),
            }
            object.__setattr__(self, "_arrays", arrays)
        prob = self._arrays["prob"]
        for user in (1, 2):
            rate, eps = self._arrays[user]
            if rate.shape != prob.shape or eps.shape != prob.shape:
                raise ValueError("policy does not cover the grid")
            if np.any((eps < 0) | (eps > 1)):
                raise ValueError("error probabilities must lie in [0, 1]")
        if self.n_d <= 0:
            raise ValueError("n_d must be positive")

    @classmethod
    def from_arrays(cls, prob, rate_1, eps_1, rate_2, eps_2, n_d):
        arrays = {
            "prob": np.asarray(prob, dtype=float),
            1: (np.asarray(rate_1, dtype=float), np.asarray(eps_1, dtype=float)),
            2: (np.asarray(rate_2, dtype=float), np.asarray(eps_2, dtype=float)),
        }
        return cls(grid=None, policy=None, n_d=n_d, _arrays=arrays)

    def user_arrays(self, user: int):
        if user not in (1, 2):
            raise ValueError("user must be 1 or 2")
        rate, eps = self._arrays[user]
        return self._arrays["prob"], rate, eps


def mellin_arrival(spec: ArrivalSpec, s: float) -> float:
    """Transform of constant arrivals, e^{s alpha}. May overflow to inf
    for extreme s * alpha; the bound search works in logs instead."""
    if s <= 0:
        raise ValueError("s must be positive")
    return float(np.exp(s * spec.alpha))


def mellin_service(spec: ServiceSpec, user: int, s: float) -> float:
    """Per-slot service transform for one user, in (0, 1]."""
    if s <= 0:
        raise ValueError("s must be positive")
    prob, rate, eps = spec.user_arrays(user)
    return float(np.dot(prob, eps + (1.0 - eps) * np.exp(-s * spec.n_d * rate)))


def stability(ma: float, ms: float) -> bool:
    """Strict stability: ma * ms < 1."""
    if ma <= 0 or ms <= 0:
        raise ValueError("transforms must be positive")
    return ma * ms < 1.0


def kernel(ma: float, ms: float, w: int) -> float:
    """ms^w / (1 - ma ms); only defined under stability."""
    if not stability(ma, ms):
        raise StabilityError(f"ma*ms = {ma * ms:g} >= 1")
    return ms**w / (1.0 - ma * ms)


def _log_kernel(s: float, alpha: float, w: int, ms: float):
    """log kernel value, or None when unstable at this s."""
    if ms <= 0.0:
        # service transform underflowed to zero: ma*ms is 0*inf in
        # disguise, so this s proves nothing about stability
        return None
    log_ma_ms = s * alpha + math.log(ms)
    if log_ma_ms >= 0.0:
        return None
    # 1 - ma*ms = -expm1(log(ma*ms)), stable for log arguments near 0
    return w * math.log(ms) - math.log(-math.expm1(log_ma_ms))


def _golden_min(fn, lo: float, hi: float, iters: int = 60):
    """Golden-section minimum of fn on [lo, hi]; fn may return None
    (treated as +inf). Returns (x, fn(x))."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = fn(c)
    fd = fn(d)
    inf = math.inf
    for _ in range(iters):
        if (fc if fc is not None else inf) <= (fd if fd is not None else inf):
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    fx = fn(x)
    return x, fx


def delay_bound(arrival: ArrivalSpec, service: ServiceSpec, user: int,
                w: int) -> DelayBound:
    """Tightest kernel bound on the delay-violation probability.

    Coarse sweep over a fixed log grid of s, then golden-section
    refinement on log s around the best grid point. Raises
    StabilityError when no sampled s stabilizes the queue.
    """
    if w < 0:
        raise ValueError("deadline must be nonnegative")
    prob, rate, eps = service.user_arrays(user)
    decay = service.n_d * rate

    def log_k(s: float):
        ms = float(np.dot(prob, eps + (1.0 - eps) * np.exp(-s * decay)))
        return _log_kernel(s, arrival.alpha, w, ms)

    values = [log_k(s) for s in _S_GRID]
    finite = [(v, i) for i, v in enumerate(values) if v is not None]
    if not finite:
        raise StabilityError("unstable for every sampled s")
    best_v, best_i = min(finite)
    lo = _S_GRID[max(best_i - 1, 0)]
    hi = _S_GRID[min(best_i + 1, len(_S_GRID) - 1)]
    log_s, refined = _golden_min(lambda t: log_k(math.exp(t)),
                                 math.log(lo), math.log(hi))
    if refined is not None and refined < best_v:
        return DelayBound(w=w, bound=math.exp(refined), s_opt=math.exp(log_s))
    return DelayBound(w=w, bound=math.exp(best_v), s_opt=float(_S_GRID[best_i]))


def mellin_budget(s: float, alpha: float, w: int, target_pv: float) -> float:
    """Largest service transform whose kernel at (s, w) still meets the
    target: the root of x^w + pv e^{s alpha} x - pv = 0 in (0, 1).

    kernel(ma, x, w) <= pv rearranges to exactly that polynomial being
    nonpositive, so any policy with ms <= the returned value satisfies
    the bound at this s.
    """
    if s <= 0 or not 0.0 < target_pv < 1.0:
        raise ValueError("need s > 0 and target in (0, 1)")
    if w < 1:
        raise ValueError("the kernel exceeds any target in (0, 1) at w = 0")
    log_ma = s * alpha
    log_hi = min(math.log(target_pv) / w, -log_ma)
    if log_hi < -700.0:
        return 0.0  # no representable positive budget at this s
    hi = math.exp(log_hi)

    def f(x):
        if x <= 0.0:
            return -target_pv
        return x**w + target_pv * math.exp(log_ma + math.log(x)) - target_pv

    if f(hi) <= 0.0:
        return hi
    return float(brentq(f, 0.0, hi, xtol=1e-300, rtol=8.9e-16))


def max_arrival(service: ServiceSpec, user: int, w: int,
                target_pv: float) -> float:
    """Largest constant arrival rate whose delay bound meets the target.

    For fixed s the constraint inverts in closed form to
    alpha(s) = ln((1 - ms^w / pv) / ms) / s; the best grid point is
    refined by golden section and then pushed up by bisection to a
    0.1-bit resolution.
    """
    if not 0.0 < target_pv < 1.0:
        raise ValueError("target must be in (0, 1)")
    prob, rate, eps = service.user_arrays(user)
    decay = service.n_d * rate

    def alpha_at(s: float):
        ms = float(np.dot(prob, eps + (1.0 - eps) * np.exp(-s * decay)))
        if ms <= 0.0:  # transform underflowed; skip this s
            return None
        head = 1.0 - ms**w / target_pv
        if head <= 0.0:
            return None
        a = (math.log(head) - math.log(ms)) / s
        return a if a > 0.0 else None

    def meets(alpha: float) -> bool:
        try:
            return delay_bound(ArrivalSpec(alpha), service, user, w).bound <= target_pv
        except StabilityError:
            return False

    candidates = [(a, s) for s in _S_GRID if (a := alpha_at(s)) is not None]
    if not candidates:
        return 0.0
    best_a, best_s = max(candidates)
    i = int(np.argmin(np.abs(_S_GRID - best_s)))
    lo_s = _S_GRID[max(i - 1, 0)]
    hi_s = _S_GRID[min(i + 1, len(_S_GRID) - 1)]
    _, neg = _golden_min(
        lambda t: (lambda a: None if a is None else -a)(alpha_at(math.exp(t))),
        math.log(lo_s), math.log(hi_s))
    lo = max(best_a, -neg if neg is not None else 0.0)

    if not meets(lo):
        # the closed form can overclaim by a rounding hair right at the
        # stability boundary; fall back to bisecting below it
        if not meets(0.0):
            return 0.0
        hi, lo = lo, 0.0
        while hi - lo > 0.1:
            mid = 0.5 * (lo + hi)
            if meets(mid):
                lo = mid
            else:
                hi = mid
        return lo

    step = 0.1
    hi = lo + step
    while meets(hi):
        lo = hi
        step *= 2.0
        hi = lo + step
    while hi - lo > 0.1:
        mid = 0.5 * (lo + hi)
        if meets(mid):
            lo = mid
        else:
            hi = mid
    return lo
