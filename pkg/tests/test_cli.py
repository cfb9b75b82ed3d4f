"""Experiment-runner tests: config parsing, schemas, reproducibility.

CSV faithfulness is checked by recomputing table entries through the
library (the kernel closed form from the persisted policy, analytic
errors from the persisted tuples) rather than trusting the writer.
"""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from nomaq import cli, snc
from nomaq.cli import ConfigError, load_config
from nomaq.csi import EstimatedState, build_grid, icsi_stddev
from nomaq.errors import DecodingOrder, eps_pair

BASE = """\
[scenario]
rho_oma_1_db = 30
rho_oma_2_db = 15
beta_1 = 0.2
beta_2 = 0.8
n_tr_1 = 25
n_tr_2 = 25
n_total = 250
alpha_1 = {alpha_1}
alpha_2 = {alpha_2}
w = {w}
target_pv = {target_pv}

[model]
csi = {csi}
decoder = {decoder}

[solver]
grid_points = {grid_points}
rate_candidates = {rate_candidates}

[sim]
slots = {slots}
seed = {seed}
"""


def _scenario(tmp_path, name="scen.ini", *, alpha_1=260, alpha_2=120, w=4,
              target_pv="1e-3", csi="icsi", decoder="sic", grid_points=6,
              rate_candidates=6, slots=40000, seed=7, extra=""):
    path = tmp_path / name
    path.write_text(BASE.format(alpha_1=alpha_1, alpha_2=alpha_2, w=w,
                                target_pv=target_pv, csi=csi, decoder=decoder,
                                grid_points=grid_points,
                                rate_candidates=rate_candidates, slots=slots,
                                seed=seed) + extra)
    return path


def _read_table(path):
    """(comment lines, header row, data rows) of one output table."""
    comments, data = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row and row[0].startswith("#"):
                comments.append(",".join(row))
            else:
                data.append(row)
    return comments, data[0], data[1:]


def test_config_resolution_and_db_twins(tmp_path):
    cfg = load_config(_scenario(tmp_path))
    assert cfg.avg.rho_oma_1 == 1000.0
    assert cfg.avg.rho_oma_2 == 31.622776601683793
    # training SNRs default to the full per-user power
    assert cfg.training.rho_tr_1 == 1000.0
    assert cfg.n_d == 200
    assert cfg.error_model.csi == "imperfect"
    assert cfg.error_model.n_fbl is None
    assert cfg.training_or_none is cfg.training

    pcsi = load_config(_scenario(tmp_path, "p.ini", csi="pcsi"))
    assert pcsi.error_model.csi == "perfect"
    assert pcsi.training_or_none is None

    fbl = load_config(_scenario(tmp_path, "f.ini", csi="icsi_fbl"))
    assert fbl.error_model.n_fbl == 200

    # a linear key carries the exact value through
    lin = _scenario(tmp_path, "lin.ini")
    text = lin.read_text().replace("rho_oma_2_db = 15", "rho_oma_2 = 31.0")
    lin.write_text(text)
    assert load_config(lin).avg.rho_oma_2 == 31.0


def test_config_rejections(tmp_path):
    def broken(name, **kwargs):
        return _scenario(tmp_path, name, **kwargs)

    with pytest.raises(ConfigError, match="unknown key"):
        load_config(broken("a.ini", extra="\n[validate]\nbogus = 3\n"))
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(broken("b.ini", extra="\n[plotting]\nstyle = x\n"))
    with pytest.raises(ConfigError, match="both"):
        path = broken("c.ini")
        path.write_text(path.read_text().replace(
            "rho_oma_1_db = 30", "rho_oma_1_db = 30\nrho_oma_1 = 1000"))
        load_config(path)
    with pytest.raises(ConfigError, match="missing required key"):
        path = broken("d.ini")
        path.write_text(path.read_text().replace("alpha_1 = 260\n", ""))
        load_config(path)
    with pytest.raises(ConfigError, match="csi"):
        load_config(broken("e.ini", csi="genie"))
    with pytest.raises(ConfigError, match="decoder"):
        load_config(broken("f.ini", decoder="zf"))
    with pytest.raises(ConfigError, match="target_pv"):
        load_config(broken("g.ini", target_pv="1.5"))
    with pytest.raises(ConfigError, match="slots"):
        load_config(broken("h.ini", slots=900, w=4))
    with pytest.raises(ConfigError, match="training overhead"):
        path = broken("i.ini")
        path.write_text(path.read_text().replace("n_total = 250", "n_total = 50"))
        load_config(path)
    with pytest.raises(ConfigError, match="sweep"):
        load_config(broken("j.ini"), need_sweep=True)
    with pytest.raises(ConfigError, match="sum to 1"):
        path = broken("k.ini")
        path.write_text(path.read_text().replace("beta_1 = 0.2", "beta_1 = 0.4"))
        load_config(path)


def test_main_exit_codes(tmp_path):
    good = _scenario(tmp_path, grid_points=5, rate_candidates=5, w=2)
    assert cli.main(["bound", "--config", str(good),
                     "--out", str(tmp_path / "ok")]) == 0
    bad = _scenario(tmp_path, "bad.ini", extra="\n[sim]\nwhat = 1\n")
    assert cli.main(["bound", "--config", str(bad),
                     "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["bound", "--config", str(tmp_path / "nope.ini"),
                     "--out", str(tmp_path / "x")]) == 2
    hopeless = _scenario(tmp_path, "huge.ini", alpha_1=90000)
    assert cli.main(["bound", "--config", str(hopeless),
                     "--out", str(tmp_path / "x")]) == 3
    assert cli.main(["bound", "--config", str(good), "--threads", "0",
                     "--out", str(tmp_path / "x")]) == 2
    with pytest.raises(SystemExit):
        cli.main(["frobnicate", "--config", str(good)])


def test_bound_table_matches_kernel_closed_form(tmp_path):
    scen = _scenario(tmp_path, grid_points=8, rate_candidates=8)
    out = tmp_path / "run"
    assert cli.main(["bound", "--config", str(scen), "--out", str(out)]) == 0
    assert cli.main(["optimize", "--config", str(scen), "--out", str(out)]) == 0

    comments, header, rows = _read_table(out / "bound.csv")
    assert comments[0].startswith("# nomaq bound schema=bound/1")
    assert comments[1] == "# seed=7"
    echoed = json.loads(comments[2][len("# config="):])
    assert echoed["scenario"]["rho_oma_1"] == 1000.0
    assert echoed["scenario"]["n_d"] == 200
    assert header == ["scheme", "user", "w", "bound", "s_opt"]
    assert [r[:3] for r in rows] == [["noma-sic", str(u), str(w)]
                                     for u in (1, 2) for w in (1, 2, 3, 4)]

    # same config, same policy: rebuild the mellin transform from the
    # persisted rate table and check bound = ms^w / (1 - ma ms) at s_opt
    _, _, prows = _read_table(out / "optimize.csv")
    cfg = load_config(scen)
    grid = build_grid(cfg.avg, cfg.training, cfg.grid_points)
    tables = {1: np.zeros((grid.n_points, 2)), 2: np.zeros((grid.n_points, 2))}
    for r in prows:
        tables[int(r[1])][int(r[2])] = (float(r[5]), float(r[6]))
    alpha = {1: cfg.alpha_1, 2: cfg.alpha_2}
    for r in rows:
        user, w = int(r[1]), int(r[2])
        bound, s_opt = float(r[3]), float(r[4])
        rate, eps = tables[user][:, 0], tables[user][:, 1]
        ms = float(np.dot(grid.prob, eps + (1 - eps) * np.exp(-s_opt * 200 * rate)))
        ma = float(np.exp(s_opt * alpha[user]))
        assert ma * ms < 1.0
        assert bound == pytest.approx(ms**w / (1.0 - ma * ms), rel=1e-9)


def test_bound_zero_arrivals_vanish(tmp_path):
    scen = _scenario(tmp_path, alpha_1=0, alpha_2=0, target_pv="1e-2")
    out = tmp_path / "run"
    assert cli.main(["bound", "--config", str(scen), "--out", str(out)]) == 0
    _, _, rows = _read_table(out / "bound.csv")
    bounds = np.array([float(r[3]) for r in rows]).reshape(2, 4)
    assert np.all(bounds < 1e-6)
    assert np.all(np.diff(bounds, axis=1) < 0.0)


def test_reruns_are_bit_identical_even_threaded(tmp_path):
    scen = _scenario(tmp_path, extra="\n[validate]\ntuples = 3\nsamples = 20000\n")
    outs = [tmp_path / f"run{k}" for k in range(3)]
    for out, threads in zip(outs, ("1", "1", "4")):
        assert cli.main(["validate-eps", "--config", str(scen),
                         "--out", str(out), "--threads", threads]) == 0
    first = (outs[0] / "validate_eps.csv").read_bytes()
    assert (outs[1] / "validate_eps.csv").read_bytes() == first
    assert (outs[2] / "validate_eps.csv").read_bytes() == first
    side = (outs[0] / "validate_eps.json").read_bytes()
    assert (outs[1] / "validate_eps.json").read_bytes() == side

    reseeded = tmp_path / "run_seed"
    assert cli.main(["validate-eps", "--config", str(scen), "--seed", "99",
                     "--out", str(reseeded)]) == 0
    other = (reseeded / "validate_eps.csv").read_bytes()
    assert other != first
    assert b"# seed=99" in other


def test_validate_eps_rows_recompute(tmp_path):
    scen = _scenario(tmp_path, extra="\n[validate]\ntuples = 4\nsamples = 50000\n")
    out = tmp_path / "run"
    assert cli.main(["validate-eps", "--config", str(scen),
                     "--out", str(out)]) == 0
    comments, header, rows = _read_table(out / "validate_eps.csv")
    assert comments[0].startswith("# nomaq validate-eps schema=validate-eps/1")
    assert header == ["model", "rho_hat1_db", "rho_hat2_db", "r1", "r2",
                      "order", "eps_analytic", "eps_oracle", "ci_lo", "ci_hi",
                      "user"]
    assert len(rows) == 8
    cfg = load_config(scen)
    sz = (cfg.training.sigma_z2(1), cfg.training.sigma_z2(2))
    rho_bar = (cfg.avg.rho_bar_1, cfg.avg.rho_bar_2)
    for r in rows:
        assert r[0] == "icsi:sic"
        rho_hat = (10.0 ** (float(r[1]) / 10.0), 10.0 ** (float(r[2]) / 10.0))
        est = EstimatedState(
            rho_hat[0], rho_hat[1],
            icsi_stddev(rho_bar[0], rho_hat[0], sz[0]),
            icsi_stddev(rho_bar[1], rho_hat[1], sz[1]))
        e = eps_pair(cfg.error_model, float(r[3]), float(r[4]), est,
                     DecodingOrder(int(r[5])))
        expect = float(e[int(r[10]) - 1])
        assert float(r[6]) == pytest.approx(expect, rel=1e-4, abs=1e-12)
        assert 0.0 <= float(r[8]) <= float(r[9]) <= 1.0
    flagged = json.loads((out / "validate_eps.json").read_text())["band_violations"]
    assert flagged >= 0


def test_sweep_pcsi_dominates_icsi_and_ergodic_caps(tmp_path):
    sweep_extra = ("\n[sweep]\nalpha_1_min = 60\nalpha_1_max = 420\n"
                   "alpha_1_count = 3\noma_splits = 3\n")
    frontiers = {}
    for csi in ("pcsi", "icsi"):
        scen = _scenario(tmp_path, f"{csi}.ini", csi=csi, w=2,
                         target_pv="1e-2", extra=sweep_extra)
        out = tmp_path / csi
        assert cli.main(["sweep", "--config", str(scen), "--out", str(out),
                         "--threads", "2"]) == 0
        _, header, rows = _read_table(out / "sweep.csv")
        assert header == ["scheme", "alpha1_bits", "max_alpha2_bits"]
        table = {}
        for scheme, a1, a2 in rows:
            table.setdefault(scheme, []).append((float(a1), float(a2)))
        assert sorted(table) == ["noma-ergodic", "noma-joint", "noma-sic",
                                 "oma", "oma-ergodic"]
        assert all(len(v) == 3 for v in table.values())
        frontiers[csi] = table

    for scheme in ("noma-sic", "noma-joint", "oma"):
        perfect = np.array([a2 for _, a2 in frontiers["pcsi"][scheme]])
        estimated = np.array([a2 for _, a2 in frontiers["icsi"][scheme]])
        assert np.all(perfect >= estimated - 1e-9)

    # no delay constraint can beat the ergodic reference
    for csi in ("pcsi", "icsi"):
        t = frontiers[csi]
        for scheme, ref in (("noma-sic", "noma-ergodic"),
                            ("noma-joint", "noma-ergodic"),
                            ("oma", "oma-ergodic")):
            got = np.array([a2 for _, a2 in t[scheme]])
            cap = np.array([a2 for _, a2 in t[ref]])
            assert np.all(got <= cap + 1e-9)

    # ergodic rows use the true channel law, identical across CSI models
    assert frontiers["pcsi"]["noma-ergodic"] == frontiers["icsi"]["noma-ergodic"]
    assert frontiers["pcsi"]["oma-ergodic"] == frontiers["icsi"]["oma-ergodic"]


def test_ergodic_sum_rate_against_quadrature():
    # closed-form marginals, quadrature for the two-mean sum
    from scipy.integrate import quad

    for mean in (3.0, 31.622776601683793, 200.0):
        val, _ = quad(lambda x, m=mean: np.exp(-x / m) / m * np.log2(1 + x),
                      0.0, np.inf, limit=200)
        assert cli.ergodic_rate(mean) == pytest.approx(val, rel=1e-9)
    # the gamma-limit branch joins the two-mean branch continuously
    assert cli.ergodic_sum_rate(10.0, 10.0) == pytest.approx(
        cli.ergodic_sum_rate(10.0, 10.00002), rel=1e-5)
    big = cli.ergodic_sum_rate(200.0, 25.0)
    assert cli.ergodic_rate(200.0) < big < cli.ergodic_rate(225.0) + 1.0


def test_simulate_table_consistency(tmp_path):
    scen = _scenario(tmp_path, csi="pcsi", decoder="joint", grid_points=5,
                     rate_candidates=5, w=3, slots=30000, alpha_1=240,
                     alpha_2=240, target_pv="1e-2")
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(scen), "--out", str(out),
                     "--threads", "2"]) == 0
    _, header, rows = _read_table(out / "simulate.csv")
    assert header == ["fidelity", "user", "w", "p_hat", "ci_lo", "ci_hi",
                      "violations", "bound", "passed"]
    assert len(rows) == 2 * 2 * 3
    for r in rows:
        assert r[0] in ("approximate", "exact")
        passed = r[8] == "True"
        assert passed == (float(r[5]) <= min(float(r[7]), 1.0))
    side = json.loads((out / "simulate.json").read_text())
    assert side["batches"] == 30000 - 1000 - 3
    assert set(side["verdicts"]) == {"approximate_user1", "approximate_user2",
                                     "exact_user1", "exact_user2"}
    for v in side["verdicts"].values():
        assert v["saturated"] is False


def test_oma_tables(tmp_path):
    scen = _scenario(tmp_path, decoder="oma", alpha_1=120, alpha_2=60,
                     grid_points=5, rate_candidates=5, w=2, target_pv="1e-2")
    out = tmp_path / "run"
    assert cli.main(["bound", "--config", str(scen), "--out", str(out)]) == 0
    assert cli.main(["optimize", "--config", str(scen), "--out", str(out)]) == 0
    _, _, rows = _read_table(out / "bound.csv")
    assert {r[0] for r in rows} == {"oma"}
    _, _, prows = _read_table(out / "optimize.csv")
    user1 = [r for r in prows if r[1] == "1"]
    user2 = [r for r in prows if r[1] == "2"]
    assert len(user1) == len(user2) == 5
    assert all(r[4] == "" and r[7] == "" for r in user1)
    assert all(r[3] == "" for r in user2)
    side = json.loads((out / "optimize.json").read_text())
    assert side["policy"]["n_1"] + side["policy"]["n_2"] == 200
