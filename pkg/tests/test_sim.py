"""Queueing simulator tests.

The counting core is checked against two independent transcriptions of
the virtual-delay definition: a cumulative-sums brute force and the FIFO
queue mechanics. Fidelity properties are checked on seeded runs against
the analytic bounds.
"""

import numpy as np
import pytest

from nomaq import alloc, sim, snc
from nomaq.alloc import RatePolicy
from nomaq.channel import in_capacity_region, interfered_rate, single_user_rate
from nomaq.csi import (
    AvgSnrConfig,
    EstimatedState,
    SnrGrid,
    TrainingConfig,
    UserGrid,
    build_grid,
)
from nomaq.errors import DecodingOrder, ErrorModel, eps_pair
from nomaq.sim import QueueState, SimConfig, SimReport

AVG = AvgSnrConfig(1000.0, 31.622776601683793, 0.2, 0.8)
TRAIN = TrainingConfig(25, 25, 1000.0, 31.622776601683793)


def _brute_counts(service, alpha, w_max, burn_in):
    """Direct transcription: batch tau violates w iff cumulative
    departures through slot tau + w fall short of cumulative arrivals
    through tau. Service precedes the enqueue within a slot."""
    T = len(service)
    backlog = 0.0
    total = 0.0
    cd = np.zeros(T)
    for t in range(T):
        d = min(backlog, service[t])
        total += d
        backlog = backlog - d + alpha
        cd[t] = total
    ca = alpha * (np.arange(T) + 1.0)
    last = T - 1 - w_max
    counts = np.zeros(w_max, dtype=np.int64)
    for tau in range(burn_in, last + 1):
        for w in range(1, w_max + 1):
            if cd[tau + w] < ca[tau]:
                counts[w - 1] += 1
    return counts, last + 1 - burn_in


# Counting tests keep service and arrivals on a dyadic lattice (eighths)
# so every partial sum is exact in floating point; a batch whose queue
# drains exactly at the deadline then compares identically in all three
# transcriptions instead of leaving the verdict to accumulated rounding.

def test_violation_counts_matches_brute_force():
    rng = np.random.default_rng(3)
    service = rng.integers(0, 320, 3000) / 8.0
    counts, batches = sim.violation_counts(service, 13.75, 6, burn_in=37)
    ref_counts, ref_batches = _brute_counts(service, 13.75, 6, 37)
    assert batches == ref_batches
    assert np.array_equal(counts, ref_counts)


def test_violation_counts_chunk_invariant():
    rng = np.random.default_rng(4)
    service = rng.integers(0, 200, 5000) / 8.0
    a = sim.violation_counts(service, 9.375, 5, burn_in=100, chunk=197)
    b = sim.violation_counts(service, 9.375, 5, burn_in=100, chunk=100000)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


def test_violation_counts_matches_fifo_queue():
    rng = np.random.default_rng(5)
    T, alpha, w_max, burn_in = 2000, 11.875, 5, 50
    service = rng.integers(0, 240, T) / 8.0
    q = QueueState()
    delay = {}
    for t in range(T):
        for arrival_slot, completion_slot in q.step(service[t], alpha):
            delay[arrival_slot] = completion_slot - arrival_slot
    counts = np.zeros(w_max, dtype=np.int64)
    last = T - 1 - w_max
    for tau in range(burn_in, last + 1):
        d = delay.get(tau, np.inf)
        for w in range(1, w_max + 1):
            if d > w:
                counts[w - 1] += 1
    got, batches = sim.violation_counts(service, alpha, w_max, burn_in=burn_in)
    assert np.array_equal(got, counts)
    assert batches == last + 1 - burn_in


def test_queue_state_mechanics():
    q = QueueState()
    assert q.step(100.0, 10.0) == []          # nothing buffered yet
    assert q.step(4.0, 10.0) == []            # partial service, no completion
    done = q.step(100.0, 0.0)                 # clears slot-0 remainder and slot 1
    assert done == [(0, 2), (1, 2)]
    assert q.departed <= q.arrived
    assert q.arrived == 20.0
    assert q.buffered == 0.0
    # FIFO: serving exactly the head batch completes only the head
    q2 = QueueState()
    q2.step(0.0, 7.0)
    q2.step(0.0, 5.0)
    assert q2.step(7.0, 0.0) == [(0, 2)]
    assert q2.buffered == 5.0
    with pytest.raises(ValueError):
        q2.step(-1.0, 0.0)


def _one_point_setup(eps1, eps2, r1=2.0, r2=1.5, model=None):
    grid = SnrGrid(
        user1=UserGrid(rho_hat=np.array([50.0]), prob=np.array([1.0]),
                       sigma_ic=np.array([0.5]), rho_bar=60.0, sigma_z2=0.01),
        user2=UserGrid(rho_hat=np.array([10.0]), prob=np.array([1.0]),
                       sigma_ic=np.array([0.2]), rho_bar=12.0, sigma_z2=0.01))
    pol = RatePolicy(rate_1=np.array([r1]), rate_2=np.array([r2]),
                     eps_1=np.array([eps1]), eps_2=np.array([eps2]),
                     order=np.array([int(DecodingOrder.USER2_FIRST)]),
                     s_1=0.01, s_2=0.01, lam=0.0)
    cfg = SimConfig(model=model or ErrorModel("sic"), avg=AVG, training=TRAIN,
                    alpha_1=300.0, alpha_2=200.0, n_d=200, w_max=4,
                    burn_in=100, grid=grid)
    return cfg, pol


def test_trivial_immediate_service():
    # errorless constant rate covering the arrivals: every delay is one slot
    cfg, pol = _one_point_setup(0.0, 0.0)
    rep = sim.simulate(cfg, pol, "approximate", 20_000, seed=1)
    assert np.all(rep.p_hat_1 == 0.0) and np.all(rep.p_hat_2 == 0.0)
    assert rep.histogram_1[0] == rep.batches and rep.histogram_1[1:].sum() == 0


def test_trivial_no_departures():
    cfg, pol = _one_point_setup(1.0, 1.0)
    with pytest.warns(sim.SaturationWarning):
        rep = sim.simulate(cfg, pol, "approximate", 20_000, seed=2)
    assert np.all(rep.p_hat_1 == 1.0) and np.all(rep.p_hat_2 == 1.0)
    assert rep.saturated_1 and rep.saturated_2


def test_simulate_is_seed_deterministic():
    cfg, pol = _one_point_setup(0.35, 0.2)
    a = sim.simulate(cfg, pol, "approximate", 60_000, seed=9)
    b = sim.simulate(cfg, pol, "approximate", 60_000, seed=9)
    c = sim.simulate(cfg, pol, "approximate", 60_000, seed=10)
    assert np.array_equal(a.violations_1, b.violations_1)
    assert np.array_equal(a.violations_2, b.violations_2)
    assert not np.array_equal(a.violations_2, c.violations_2)


def test_report_shapes_and_invariants():
    cfg, pol = _one_point_setup(0.35, 0.25)
    rep = sim.simulate(cfg, pol, "approximate", 90_000, seed=14, replications=3)
    assert np.array_equal(rep.w, np.arange(1, 5))
    for p in (rep.p_hat_1, rep.p_hat_2):
        assert np.all(np.diff(p) <= 0.0)
        assert np.all((0.0 <= p) & (p <= 1.0))
    assert rep.histogram_2.sum() == rep.batches
    assert rep.rep_violations_2.sum() == rep.violations_2.sum()
    assert rep.rep_batches.sum() == rep.batches
    assert rep.batches == 3 * (30_000 - 100 - 4)
    assert rep.slots == 90_000 and rep.seed == 14
    # Wilson intervals bracket the point estimates
    assert np.all(rep.ci_2[:, 0] <= rep.p_hat_2) and np.all(rep.p_hat_2 <= rep.ci_2[:, 1])


def test_simulate_validates_inputs():
    cfg, pol = _one_point_setup(0.1, 0.1)
    with pytest.raises(ValueError):
        sim.simulate(cfg, pol, "fuzzy", 10_000, seed=1)
    with pytest.raises(ValueError):
        sim.simulate(cfg, pol, "exact", 100, seed=1)  # burn-in leaves no batches
    with pytest.raises(ValueError):
        sim.simulate(cfg, pol, "exact", 10_000, seed=1, replications=0)


def test_pcsi_rules_respect_event_algebra():
    # the pointwise corner rates are bitwise the caps the decoding
    # comparisons use, and the face rates stay inside the region
    rng = np.random.default_rng(33)
    g1 = rng.exponential(200.0, 20_000)
    g2 = rng.exponential(25.0, 20_000)
    for lam in (0.0, 0.7, 3.0):
        r1, r2, pick_b = alloc.corner_rule(g1, g2, 0.01, 0.02, 200, lam)
        gf = np.where(pick_b, g1, g2)   # the first-decoded user sees interference
        gp = np.where(pick_b, g2, g1)
        rf = np.where(pick_b, r1, r2)
        rp = np.where(pick_b, r2, r1)
        assert np.array_equal(rf, interfered_rate(gf, gp))
        assert np.array_equal(rp, single_user_rate(gp))
    for lt in (-0.3, 0.0, 0.4, 1e9):
        r1, r2 = alloc.face_rule(g1, g2, 0.01, 0.02, lt)
        assert np.all(in_capacity_region(r1, r2, g1, g2))


def test_exact_pcsi_rules_never_violate_capacity():
    # the continuous corner / face rules evaluated at the drawn SNRs stay
    # inside the instantaneous region, so every slot decodes; arrivals are
    # set so small that missing a deadline would need a fade far deeper
    # than the run can plausibly produce
    rng = np.random.default_rng(21)

    def axis(vals):
        v = np.sort(np.asarray(vals, dtype=float))
        return UserGrid(rho_hat=v, prob=np.full(v.size, 1.0 / v.size),
                        sigma_ic=np.zeros(v.size), rho_bar=float(v.mean()),
                        sigma_z2=0.0)

    grid = SnrGrid(user1=axis(rng.uniform(20, 80, 3)), user2=axis(rng.uniform(2, 6, 3)))
    for model, pol in (
        (ErrorModel("sic", csi="perfect"),
         alloc.sic_policy_at_lambda(grid, 0.01, 0.02, 200, 0.7)),
        (ErrorModel("joint", csi="perfect"),
         alloc.optimize_joint_pcsi(grid, 0.01, 0.02, 200, 1e9)),
    ):
        cfg = SimConfig(model=model, avg=AVG, training=None, alpha_1=1e-8,
                        alpha_2=1e-8, n_d=200, w_max=3, burn_in=100, grid=grid)
        rep = sim.simulate(cfg, pol, "exact", 30_000, seed=8)
        assert rep.violations_1.sum() == 0
        assert rep.violations_2.sum() == 0


def _edge_safe_sic_policy(grid, points, s1, s2, margin=6.0):
    """SIC policy whose per-cell rates survive every draw inside the cell.

    The grid representatives are conditional cell means, so a rate chosen
    for the representative can fail for estimates near the cell's lower
    boundary (the unbounded top cell is the worst offender). Anchoring
    each rate to its own cell's lower edge, and the interference term to
    the neighbour's upper edge, pushes the within-cell failure odds below
    the normal tail at `margin` sigmas. With failures negligible in both
    fidelities the exact and quantized simulations share one service law,
    which is what a fidelity-agreement check needs.
    """
    mu1 = grid.user1.rho_bar * (1.0 - grid.user1.sigma_z2)
    mu2 = grid.user2.rho_bar * (1.0 - grid.user2.sigma_z2)
    q = np.arange(points) / points
    lo1 = np.repeat(-mu1 * np.log1p(-q), points)
    lo2 = np.tile(-mu2 * np.log1p(-q), points)
    hi2 = np.tile(np.append(-mu2 * np.log1p(-q[1:]), np.inf), points)
    r2 = np.log2(1.0 + np.maximum(lo2 - margin * grid.sigma2, 0.0))
    num = np.maximum(lo1 - margin * grid.sigma1, 0.0)
    r1 = np.where(np.isinf(hi2), 0.0,
                  np.log2(1.0 + num / (1.0 + hi2 + margin * grid.sigma2)))
    est = EstimatedState(grid.rho1, grid.rho2, grid.sigma1, grid.sigma2)
    e1, e2 = eps_pair(ErrorModel("sic"), r1, r2, est, DecodingOrder.USER1_FIRST)
    order = np.full(grid.n_points, int(DecodingOrder.USER1_FIRST), dtype=np.int64)
    return RatePolicy(rate_1=r1, rate_2=r2, eps_1=np.asarray(e1),
                      eps_2=np.asarray(e2), order=order, s_1=s1, s_2=s2, lam=0.0)


def test_exact_approximate_agree_and_bound_dominates():
    # smoke-scale version of the dominance experiment: the analytic
    # kernel bound must sit above both fidelities at every deadline, and
    # the fidelities must agree with each other
    model = ErrorModel("sic")
    points = 24
    grid = build_grid(AVG, TRAIN, points)
    s1, s2, n_d = 0.008, 0.012, 200
    pol = _edge_safe_sic_policy(grid, points, s1, s2)
    assert float(np.max(pol.eps_1)) < 1e-9
    assert float(np.max(pol.eps_2)) < 1e-9
    spec = snc.ServiceSpec(grid=grid, policy=pol, n_d=n_d)
    alpha_1, alpha_2 = 200.0, 120.0
    cfg = SimConfig(model=model, avg=AVG, training=TRAIN, alpha_1=alpha_1,
                    alpha_2=alpha_2, n_d=n_d, w_max=4, burn_in=1000, grid=grid)
    bounds = {u: [snc.delay_bound(snc.ArrivalSpec(a), spec, u, w)
                  for w in range(1, 5)]
              for u, a in ((1, alpha_1), (2, alpha_2))}
    rep_e = sim.simulate(cfg, pol, "exact", 1_500_000, seed=11)
    rep_a = sim.simulate(cfg, pol, "approximate", 1_500_000, seed=12)
    for user in (1, 2):
        ci_e = getattr(rep_e, f"ci_{user}")
        ci_a = getattr(rep_a, f"ci_{user}")
        for j, db in enumerate(bounds[user]):
            assert ci_e[j, 1] <= min(db.bound, 1.0)
            assert ci_a[j, 1] <= min(db.bound, 1.0)
            # the fidelities estimate the same probability: overlapping CIs
            assert ci_e[j, 0] <= ci_a[j, 1] and ci_a[j, 0] <= ci_e[j, 1]
        v_e = getattr(rep_e, f"violations_{user}")
        v_a = getattr(rep_a, f"violations_{user}")
        both = (v_e > 10) & (v_a > 10)
        assert both.all()
        ratio = getattr(rep_e, f"p_hat_{user}")[both]
        ratio = ratio / getattr(rep_a, f"p_hat_{user}")[both]
        assert np.all((0.8 < ratio) & (ratio < 1.25))
        for rep in (rep_e, rep_a):
            verdict = sim.compare(rep, bounds[user], user)
            assert verdict.all_passed and np.all(verdict.passed)
            assert verdict.slope_sim is not None and verdict.slope_sim < 0.0
            assert verdict.slope_bound < 0.0


def test_compare_trivial_and_failing():
    cfg, pol = _one_point_setup(0.35, 0.25)
    rep = sim.simulate(cfg, pol, "approximate", 50_000, seed=3)
    ones = [snc.DelayBound(w=w, bound=1.0, s_opt=0.01) for w in range(1, 5)]
    v = sim.compare(rep, ones, 2)
    assert v.all_passed and np.all(v.passed)
    tiny = [snc.DelayBound(w=w, bound=1e-12, s_opt=0.01) for w in range(1, 5)]
    v2 = sim.compare(rep, tiny, 2)
    assert not v2.all_passed and not v2.passed.all()
    with pytest.raises(ValueError):
        sim.compare(rep, ones[:2], 2)


def test_oma_scheme_simulation_smoke():
    model = ErrorModel("oma")
    scheme = alloc.oma_scheme(model, AVG, TRAIN, 0.02, 0.02, n_d=200,
                              points=5, rate_candidates=16)
    cfg = SimConfig(model=model, avg=AVG, training=TRAIN, alpha_1=250.0,
                    alpha_2=60.0, n_d=200, w_max=4, burn_in=200, grid=None)
    for fidelity in ("exact", "approximate"):
        rep = sim.simulate(cfg, scheme, fidelity, 150_000, seed=5)
        assert np.all(np.diff(rep.p_hat_1) <= 0.0)
        assert np.all(np.diff(rep.p_hat_2) <= 0.0)
        assert rep.histogram_1.sum() == rep.batches


def test_nearest_index_ties_and_ends():
    axis = np.array([1.0, 4.0, 10.0])
    x = np.array([-5.0, 2.4, 2.5, 2.6, 7.1, 100.0])
    idx = sim.nearest_index(axis, x)
    assert idx.tolist() == [0, 0, 0, 1, 2, 2]
