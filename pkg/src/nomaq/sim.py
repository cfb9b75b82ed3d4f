"""Monte Carlo queueing simulator for the delay-violation experiments.

Each user feeds a constant-rate bit arrival into its own FIFO buffer and
drains it through the fading channel; a slot's offered service is the
data-phase bits of the scheduled rate when the decoder succeeds and zero
when it fails. Two fidelities share the queueing core:

``"approximate"``
    samples the discretized estimate grid and replaces the decoding
    events by independent Bernoulli draws with the policy's analytic
    error probabilities. This is exactly the service law the analytic
    bounds describe, so any gap to the bounds is pure Chernoff slack
    plus Monte Carlo noise.

``"exact"``
    draws estimated and true SNRs from the exact estimation law every
    slot, applies the policy (estimate-indexed policies through the
    quantizer's own cell boundaries, perfect-CSI infinite-blocklength
    ones through the continuous corner and face rules) and decides
    success from capacity-region membership, or from blocklength-
    equivalent capacity draws when the model carries a blocklength.
    Decoding indicators are compared in the rate domain with the same
    expressions the analytic error laws use, so a rate sitting exactly
    on its cap decodes. Entering cells by their mass intervals keeps the
    exact fidelity's cell occupancy identical in law to the grid masses;
    any residual gap between the fidelities is then purely the error
    approximation, which is the comparison the experiments are after.

Delays are counted through the backlog recursion
``U(t) = max(U(t-1) + alpha - S(t), 0)`` with service preceding the
enqueue inside a slot: the batch arriving in slot tau misses deadline w
exactly when ``U(tau + w) > alpha (w - 1)``. ``QueueState`` keeps the
explicit FIFO mechanics and the tests hold the two transcriptions
together. The recursion is evaluated chunkwise with running prefix
minima, so arbitrarily long runs use flat memory and the counts do not
depend on the chunk size.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import alloc, snc
from .channel import in_capacity_region, interfered_rate, single_user_rate
from .csi import AvgSnrConfig, SnrGrid, TrainingConfig, sample_exact
from .errors import (
    DecodingOrder,
    ErrorModel,
    _fbl_capacity,
    dispersion_mac,
    wilson_interval,
)

__all__ = [
    "SaturationWarning",
    "QueueState",
    "SimConfig",
    "SimReport",
    "CompareVerdict",
    "nearest_index",
    "violation_counts",
    "simulate",
    "compare",
]


class SaturationWarning(RuntimeWarning):
    """A simulated queue kept growing through the second half of the run,
    so its violation estimates describe an unstable system."""


def nearest_index(axis, values) -> np.ndarray:
    """Indices of the closest axis points, ties resolved downward.

    The axis must be sorted ascending; values outside its range clamp to
    the end points.
    """
    axis = np.asarray(axis, dtype=float)
    mids = 0.5 * (axis[1:] + axis[:-1])
    return np.searchsorted(mids, np.asarray(values, dtype=float), side="left")


class QueueState:
    """Bit-accounted FIFO buffer, service before the enqueue in a slot.

    step() offers service to the buffered backlog, then enqueues the
    slot's arrivals, and reports the batches that finished as
    (arrival slot, completion slot) pairs; the earliest possible delay is
    therefore one slot.
    """

    def __init__(self):
        self.slot = 0
        self.arrived = 0.0
        self.departed = 0.0
        self._batches: list[list] = []

    @property
    def buffered(self) -> float:
        return self.arrived - self.departed

    def step(self, offered: float, arrivals: float) -> list[tuple[int, int]]:
        if offered < 0.0 or arrivals < 0.0:
            raise ValueError("offered service and arrivals must be nonnegative")
        completed = []
        room = min(float(offered), self.buffered)
        while self._batches and room > 0.0:
            batch = self._batches[0]
            take = min(batch[1], room)
            batch[1] -= take
            room -= take
            self.departed += take
            if batch[1] == 0.0:
                completed.append((batch[0], self.slot))
                self._batches.pop(0)
        if arrivals > 0.0:
            self._batches.append([self.slot, float(arrivals)])
            self.arrived += float(arrivals)
        self.slot += 1
        return completed


def _count_chunk(u0, bits, alpha, t0, burn_in, last_batch, counts, probe_t):
    """Advance the backlog recursion over one service chunk.

    Unrolling U(t) = max(U(t-1) + alpha - S(t), 0) over the chunk gives
    U(t0 + j) = max(u0 + P_j, P_j - min_{1<=k<=j} P_k) with P the running
    sum of alpha - S; the minimum includes P_j itself, so a slot that
    drains the buffer lands on an exact 0.0. Violations of deadline w are
    counted at slots tau + w for scored batches tau in
    [burn_in, last_batch]. Returns the chunk-final backlog and, when the
    probe slot falls inside the chunk, its backlog.
    """
    x = alpha - bits
    p = np.cumsum(x)
    rmin = np.minimum.accumulate(p)
    u = np.maximum(u0 + p, p - rmin)
    t_end = t0 + x.shape[0] - 1
    w_max = counts.shape[0]
    for w in range(1, w_max + 1):
        lo = max(burn_in + w, t0)
        hi = min(last_batch + w, t_end)
        if lo <= hi:
            seg = u[lo - t0: hi - t0 + 1]
            counts[w - 1] += int(np.count_nonzero(seg > alpha * (w - 1.0)))
    probe = float(u[probe_t - t0]) if t0 <= probe_t <= t_end else None
    return float(u[-1]), probe


def violation_counts(service, alpha, w_max, burn_in=1000, chunk=1 << 19):
    """Deadline-violation counts of a constant-rate flow over a service
    trace.

    Returns (counts, batches): counts[w - 1] is the number of scored
    batches whose delay exceeded w slots, for w = 1 .. w_max, and batches
    is how many arrival slots were scored. The first burn_in slots warm
    the queue up and the last w_max slots cannot be scored against every
    deadline, so batches = len(service) - burn_in - w_max.
    """
    bits = np.asarray(service, dtype=float)
    if bits.ndim != 1:
        raise ValueError("service must be a one-dimensional array")
    if not (alpha >= 0.0) or not np.isfinite(alpha):
        raise ValueError("alpha must be finite and nonnegative")
    w_max = int(w_max)
    burn_in = int(burn_in)
    if w_max < 1 or burn_in < 0:
        raise ValueError("w_max must be >= 1 and burn_in >= 0")
    T = bits.shape[0]
    last_batch = T - 1 - w_max
    batches = last_batch + 1 - burn_in
    if batches < 1:
        raise ValueError("trace too short for the burn-in and largest deadline")
    counts = np.zeros(w_max, dtype=np.int64)
    u0 = -float(alpha)
    for t0 in range(0, T, chunk):
        u0, _ = _count_chunk(u0, bits[t0:t0 + chunk], alpha, t0,
                             burn_in, last_batch, counts, -1)
    return counts, batches


@dataclass(frozen=True)
class SimConfig:
    """Scenario shared by every simulation of one setting.

    grid is the discretized estimate space matching the policy; it may be
    None for a time-split scheme (which carries its own per-user grids)
    and is not consulted by the exact fidelity of continuous perfect-CSI
    policies.
    """

    model: ErrorModel
    avg: AvgSnrConfig
    training: TrainingConfig | None
    alpha_1: float
    alpha_2: float
    n_d: int
    w_max: int
    burn_in: int
    grid: SnrGrid | None = None

    def __post_init__(self):
        for name in ("alpha_1", "alpha_2"):
            a = getattr(self, name)
            if not np.isfinite(a) or a < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative")
        if self.n_d < 1:
            raise ValueError("n_d must be at least 1")
        if self.w_max < 1:
            raise ValueError("w_max must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")


@dataclass(frozen=True)
class SimReport:
    """Pooled violation estimates of one simulate() call.

    w enumerates the deadlines 1 .. w_max; p_hat_k and the Wilson
    intervals ci_k are per deadline, violations_k the pooled counts.
    histogram_k bins the scored batches by delay (1, 2, .., w_max, and
    one overflow bin), so it sums to batches. The rep_* arrays keep the
    per-replication splits; saturated_k reports the growth check.
    """

    fidelity: str
    w: np.ndarray
    p_hat_1: np.ndarray
    p_hat_2: np.ndarray
    ci_1: np.ndarray
    ci_2: np.ndarray
    violations_1: np.ndarray
    violations_2: np.ndarray
    histogram_1: np.ndarray
    histogram_2: np.ndarray
    batches: int
    slots: int
    seed: int
    replications: int
    rep_violations_1: np.ndarray
    rep_violations_2: np.ndarray
    rep_batches: np.ndarray
    saturated_1: bool
    saturated_2: bool


def _grid_sampler(grid, policy, n_d):
    """Chunk generator of the discretized service law: a joint estimate
    cell per slot, then one Bernoulli decoding draw per user."""
    cum = np.cumsum(grid.prob)
    top = grid.n_points - 1
    bits_1 = n_d * policy.rate_1
    bits_2 = n_d * policy.rate_2

    def draw(m, rng):
        idx = np.minimum(np.searchsorted(cum, rng.random(m), side="right"), top)
        s1 = bits_1[idx] * (rng.random(m) >= policy.eps_1[idx])
        s2 = bits_2[idx] * (rng.random(m) >= policy.eps_2[idx])
        return s1, s2

    return draw


def _sigma_z2(config, user):
    if config.model.csi == "perfect":
        return 0.0
    if config.training is None:
        return 0.0
    return config.training.sigma_z2(user)


def _cell_edges(ug):
    """Interior decision boundaries of one user's estimate quantizer.

    The estimate is exponential, so the cell holding a draw is delimited
    by the quantiles at the cumulative cell masses; looking policies up
    this way occupies each cell exactly as often as its mass says.
    """
    mean = ug.rho_bar * (1.0 - ug.sigma_z2)
    cum = np.minimum(np.cumsum(ug.prob)[:-1], 1.0 - 1e-15)
    return -mean * np.log1p(-cum)


def _exact_sampler(config, policy):
    """Chunk generator of the exact two-user system under a NOMA policy.

    Estimates and true SNRs follow the exact estimation law; the policy
    is applied through the continuous corner / face rules for perfect-CSI
    infinite-blocklength models and through nearest-estimate lookup
    otherwise; decoding events mirror the region and blocklength-
    equivalent comparisons of the analytic error laws, evaluated at the
    true SNRs.
    """
    model = config.model
    n_d = config.n_d
    continuous = model.csi == "perfect" and not model.finite_blocklength
    if not continuous:
        grid = config.grid
        edges_1 = _cell_edges(grid.user1)
        edges_2 = _cell_edges(grid.user2)
        n2 = grid.user2.n_points
    sz1 = _sigma_z2(config, 1)
    sz2 = _sigma_z2(config, 2)
    rb1, rb2 = config.avg.rho_bar_1, config.avg.rho_bar_2
    u2f_code = int(DecodingOrder.USER2_FIRST)
    nf = model.n_fbl

    def draw(m, rng):
        rh1, g1 = sample_exact(rb1, sz1, rng, m)
        rh2, g2 = sample_exact(rb2, sz2, rng, m)
        u2f = None
        if continuous:
            if model.decoder == "sic":
                r1, r2, pick_b = alloc.corner_rule(
                    g1, g2, policy.s_1, policy.s_2, n_d, policy.lam)
                u2f = ~pick_b
            else:
                r1, r2 = alloc.face_rule(g1, g2, policy.s_1, policy.s_2, policy.lam)
        else:
            idx = (np.searchsorted(edges_1, rh1, side="right") * n2
                   + np.searchsorted(edges_2, rh2, side="right"))
            r1 = policy.rate_1[idx]
            r2 = policy.rate_2[idx]
            if model.decoder == "sic":
                u2f = policy.order[idx] == u2f_code
        if model.decoder == "joint":
            if nf is None:
                err = ~in_capacity_region(r1, r2, g1, g2)
            else:
                cap_sum = (np.log2(1.0 + g1 + g2)
                           + np.sqrt(dispersion_mac(g1, g2) / nf)
                           * rng.standard_normal(m))
                err = ((_fbl_capacity(g1, nf, "awgn", rng) < r1)
                       | (_fbl_capacity(g2, nf, "awgn", rng) < r2)
                       | (cap_sum < r1 + r2))
            e1 = e2 = err
        else:
            gp = np.where(u2f, g1, g2)
            gf = np.where(u2f, g2, g1)
            rp = np.where(u2f, r1, r2)
            rf = np.where(u2f, r2, r1)
            if nf is None:
                ef = rf > interfered_rate(gf, gp)
                ep = ef | (rp > single_user_rate(gp))
            else:
                ef = _fbl_capacity(gf / (1.0 + gp), nf, "iid", rng) < rf
                ep = ef | (_fbl_capacity(gp, nf, "iid", rng) < rp)
            e1 = np.where(u2f, ep, ef)
            e2 = np.where(u2f, ef, ep)
        return n_d * r1 * ~e1, n_d * r2 * ~e2

    return draw


def _oma_sampler(config, scheme, fidelity):
    """Chunk generator of the time-split baseline: the users occupy
    disjoint symbols, so their channels, policies and decoding events are
    independent. Policy k fills only user k's columns."""
    model = config.model
    pcsi_ibl = model.csi == "perfect" and not model.finite_blocklength
    users = (
        (scheme.policy_1.rate_1, scheme.policy_1.eps_1, scheme.grid_1,
         _cell_edges(scheme.grid_1), scheme.n_1, config.avg.rho_oma_1,
         _sigma_z2(config, 1)),
        (scheme.policy_2.rate_2, scheme.policy_2.eps_2, scheme.grid_2,
         _cell_edges(scheme.grid_2), scheme.n_2, config.avg.rho_oma_2,
         _sigma_z2(config, 2)),
    )

    def one_user(rate, eps, ug, edges, n_k, rho_oma, sz, m, rng):
        if fidelity == "approximate":
            cum = np.cumsum(ug.prob)
            idx = np.minimum(np.searchsorted(cum, rng.random(m), side="right"),
                             ug.n_points - 1)
            return n_k * rate[idx] * (rng.random(m) >= eps[idx])
        rh, g = sample_exact(rho_oma, sz, rng, m)
        if pcsi_ibl:
            return n_k * single_user_rate(g)
        r = rate[np.searchsorted(edges, rh, side="right")]
        if model.finite_blocklength:
            err = _fbl_capacity(g, n_k, "awgn", rng) < r
        else:
            err = r > single_user_rate(g)
        return n_k * r * ~err

    def draw(m, rng):
        s1 = one_user(*users[0], m, rng)
        s2 = one_user(*users[1], m, rng)
        return s1, s2

    return draw


def _saturated(u_mid, u_end, alpha, t_mid, t_final):
    if alpha <= 0.0 or t_final <= t_mid:
        return False
    drift = (u_end - u_mid) / (t_final - t_mid)
    return drift > 0.05 * alpha and u_end > 50.0 * alpha


def _make_sampler(config, policy, fidelity):
    if isinstance(policy, alloc.OmaScheme):
        if config.model.decoder != "oma":
            raise ValueError("a time-split scheme needs an oma error model")
        return _oma_sampler(config, policy, fidelity)
    if config.model.decoder == "oma":
        raise ValueError("an oma error model needs the time-split scheme")
    continuous = (fidelity == "exact" and config.model.csi == "perfect"
                  and not config.model.finite_blocklength)
    if not continuous:
        if config.grid is None:
            raise ValueError("config.grid is required for this policy")
        if config.grid.n_points != policy.n_points:
            raise ValueError("policy and grid sizes disagree")
    if fidelity == "approximate":
        return _grid_sampler(config.grid, policy, config.n_d)
    return _exact_sampler(config, policy)


def simulate(config, policy, fidelity, slots, seed, *,
             replications=1, chunk=1 << 19) -> SimReport:
    """Estimate both users' delay-violation probabilities by simulation.

    policy is a rate policy (NOMA) or a time-split scheme. slots is the
    total simulated slot budget, split evenly over the replications; each
    replication runs its own burn-in on an independent stream spawned
    from seed, and the counts are pooled. Results are reproducible for a
    fixed (seed, replications, chunk).
    """
    fidelity = str(fidelity)
    if fidelity not in ("exact", "approximate"):
        raise ValueError("fidelity must be 'exact' or 'approximate'")
    replications = int(replications)
    if replications < 1:
        raise ValueError("replications must be at least 1")
    rep_slots = int(slots) // replications
    last_batch = rep_slots - 1 - config.w_max
    rep_batches = last_batch + 1 - config.burn_in
    if rep_batches < 1:
        raise ValueError("too few slots per replication for the burn-in "
                         "and largest deadline")
    sampler = _make_sampler(config, policy, fidelity)

    w_max = config.w_max
    probe_t = rep_slots // 2
    rep_v1 = np.zeros((replications, w_max), dtype=np.int64)
    rep_v2 = np.zeros((replications, w_max), dtype=np.int64)
    sat1 = sat2 = False
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(replications)):
        rng = np.random.default_rng(child)
        u1, u2 = -config.alpha_1, -config.alpha_2
        mid1 = mid2 = 0.0
        t0 = 0
        while t0 < rep_slots:
            m = min(chunk, rep_slots - t0)
            s1, s2 = sampler(m, rng)
            u1, p1 = _count_chunk(u1, s1, config.alpha_1, t0, config.burn_in,
                                  last_batch, rep_v1[r], probe_t)
            u2, p2 = _count_chunk(u2, s2, config.alpha_2, t0, config.burn_in,
                                  last_batch, rep_v2[r], probe_t)
            if p1 is not None:
                mid1, mid2 = p1, p2
            t0 += m
        sat1 = sat1 or _saturated(mid1, u1, config.alpha_1, probe_t, rep_slots - 1)
        sat2 = sat2 or _saturated(mid2, u2, config.alpha_2, probe_t, rep_slots - 1)

    batches = replications * rep_batches
    v1 = rep_v1.sum(axis=0)
    v2 = rep_v2.sum(axis=0)
    ci_1 = np.array([wilson_interval(int(v), batches) for v in v1])
    ci_2 = np.array([wilson_interval(int(v), batches) for v in v2])

    def histogram(v):
        edges = np.concatenate(([batches], v))
        return np.concatenate((edges[:-1] - edges[1:], [v[-1]]))

    if sat1 or sat2:
        which = " and ".join(f"user {k}" for k, s in ((1, sat1), (2, sat2)) if s)
        warnings.warn(f"backlog of {which} kept growing; the queue looks "
                      "unstable at these arrival rates", SaturationWarning,
                      stacklevel=2)
    return SimReport(
        fidelity=fidelity,
        w=np.arange(1, w_max + 1),
        p_hat_1=v1 / batches,
        p_hat_2=v2 / batches,
        ci_1=ci_1,
        ci_2=ci_2,
        violations_1=v1,
        violations_2=v2,
        histogram_1=histogram(v1),
        histogram_2=histogram(v2),
        batches=batches,
        slots=int(slots),
        seed=int(seed),
        replications=replications,
        rep_violations_1=rep_v1,
        rep_violations_2=rep_v2,
        rep_batches=np.full(replications, rep_batches, dtype=np.int64),
        saturated_1=bool(sat1),
        saturated_2=bool(sat2),
    )


@dataclass(frozen=True)
class CompareVerdict:
    """Dominance check of simulated violation estimates against analytic
    bounds: a deadline passes when the upper Wilson edge sits at or below
    the bound. Slopes are log-probability per deadline slot, fitted where
    violations were observed; None when fewer than two deadlines have
    any.
    """

    user: int
    w: np.ndarray
    p_hat: np.ndarray
    ci_hi: np.ndarray
    bound: np.ndarray
    passed: np.ndarray
    all_passed: bool
    slope_sim: float | None
    slope_bound: float | None


def compare(report: SimReport, bounds, user: int) -> CompareVerdict:
    """Check one user's simulated tail against per-deadline bounds.

    bounds is a sequence of delay bounds covering exactly the report's
    deadlines, in any order.
    """
    if user == 1:
        p_hat, ci, viol = report.p_hat_1, report.ci_1, report.violations_1
    elif user == 2:
        p_hat, ci, viol = report.p_hat_2, report.ci_2, report.violations_2
    else:
        raise ValueError("user must be 1 or 2")
    ws = np.array([b.w for b in bounds], dtype=np.int64)
    if ws.size != report.w.size or not np.array_equal(np.sort(ws), report.w):
        raise ValueError("bounds must cover exactly the report's deadlines")
    vals = np.array([b.bound for b in bounds], dtype=float)[np.argsort(ws)]
    ci_hi = ci[:, 1]
    passed = ci_hi <= np.minimum(vals, 1.0)
    obs = (viol > 0) & (vals > 0.0)
    if int(obs.sum()) >= 2:
        slope_sim = float(np.polyfit(report.w[obs], np.log(p_hat[obs]), 1)[0])
        slope_bound = float(np.polyfit(report.w[obs], np.log(vals[obs]), 1)[0])
    else:
        slope_sim = slope_bound = None
    return CompareVerdict(
        user=user,
        w=report.w.copy(),
        p_hat=p_hat.copy(),
        ci_hi=ci_hi.copy(),
        bound=vals,
        passed=passed,
        all_passed=bool(passed.all()),
        slope_sim=slope_sim,
        slope_bound=slope_bound,
    )
