"""Seeded Monte Carlo orchestration for every experiment.

Trials are cut into fixed-size chunks that do not depend on the worker
count.  Workers only draw per-trial quantities; every reduction runs in the
parent on the chunks reassembled in trial order, so output is identical for
any number of workers.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import rng as rngs
from ..channel import CsitQuality, complex_normal, gaussian_csit
from ..dof import STRATEGIES, dof_region_two_user
from ..errors import RateSplitError
from ..hrs import (
    HrsScenario,
    group_users,
    hrs_sum_rates,
    hrs_trial_gains,
    optimize_hrs_split,
    outer_precoders,
)
from ..multicell import (
    CellTopology,
    best_two_cell_rho,
    trs_build_plan,
    trs_trial_gains,
    two_cell_sum_rates,
    two_cell_trial_gains,
)
from ..optimizer.feedback import required_feedback_bits
from ..optimizer.power_split import (
    LinkGains,
    Scenario,
    best_rho,
    optimize_power_split,
    rs_sum_rates,
    trial_gains,
)
from ..optimizer.search import golden_max
from ..optimizer.wmmse import saa_samples, wmmse_optimize
from ..sic import layered_rates
from ..transceiver import assemble_rs, common_precoder, evaluate_rates, tdma_report, zf_directions
from .config import ExperimentConfig
from .results import ResultTable

CHUNK = 50


def _run_task(task):
    fn, args = task
    return fn(*args)


def _parallel(fn, arg_list, workers):
    tasks = [(fn, args) for args in arg_list]
    if workers <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_task, tasks))


def _trials(fn, args, seed, trials, workers):
    """``fn(*args, seed, trial)`` for every trial, in trial order."""
    spans = [(s, min(CHUNK, trials - s)) for s in range(0, trials, CHUNK)]
    parts = _parallel(_chunk, [(fn, args, seed, s, n) for s, n in spans], workers)
    return [x for part in parts for x in part]


def _chunk(fn, args, seed, start, count):
    out = []
    for t in range(start, start + count):
        try:
            out.append(fn(*args, seed, t))
        except RateSplitError as exc:
            exc.args = (f"trial {t}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            exc.trial = t
            raise
    return out


def _db(x):
    return 10.0 ** (x / 10.0)


# ---------------------------------------------------------------- single cell

def _csit(cfg):
    sc = cfg.scenario
    if sc["csit"] == "rvq":
        return CsitQuality.rvq(sc["bits"])
    if sc["csit"] == "exponent":
        return CsitQuality.exponent(sc["alpha"][0])
    return CsitQuality.perfect()


def _link_trial(scenario, seed, trial):
    return trial_gains(scenario, seed, trial)


def link_gains(scenario: Scenario, trials, seed, workers=1) -> LinkGains:
    out = _trials(_link_trial, (scenario,), seed, trials, workers)
    rs, tdma, pz, sins = zip(*out)
    return LinkGains(np.array(rs), np.array(tdma), np.array(pz),
                     None if sins[0] is None else np.array(sins))


def run_dof_region(cfg: ExperimentConfig, table):
    for a in cfg.scenario["alpha"]:
        for strategy in STRATEGIES:
            reg = dof_region_two_user(strategy, a)
            for i, (d1, d2) in enumerate(reg.vertices):
                table.add(strategy, "alpha", a, f"vertex{i}.d1", d1)
                table.add(strategy, "alpha", a, f"vertex{i}.d2", d2)
            table.add(strategy, "alpha", a, "max_sum_dof", reg.max_sum())


def run_sumrate(cfg: ExperimentConfig, table):
    sc = cfg.scenario
    csit = _csit(cfg)
    gains = None
    for db in sc["snr_db"]:
        P = _db(db)
        scen = Scenario(sc["M"], sc["K"], P, csit, sc["common_strategy"])
        # quantized and perfect CSIT do not depend on SNR: reuse the draws
        if gains is None or csit.kind == "exponent":
            gains = link_gains(scen, cfg.trials, cfg.seed, cfg.workers)
        best = best_rho(gains.rs, P, sc["rho_tol"])
        rs = rs_sum_rates(gains.rs, best.rho, P)
        zf = rs_sum_rates(gains.rs, 1.0, P)
        tdma = tdma_report(gains.tdma, P).sum_rate
        sumu = np.maximum(tdma, zf)
        for scheme, vals in (("rs", rs), ("zfbf", zf), ("tdma", tdma), ("sumu", sumu),
                             ("zfbf-perfect", rs_sum_rates(gains.perfect_zf, 1.0, P)),
                             ("rs-minus-sumu", rs - sumu)):
            metric = "sum_rate_gap" if "minus" in scheme else "sum_rate"
            table.add_samples(scheme, "snr_db", db, metric, vals)
        table.add("rs", "snr_db", db, "rho", best.rho, 0.0, cfg.trials)


def _bits_sampler(workers):
    def sample(scenario, trials, seed):
        return link_gains(scenario, trials, seed, workers)
    return sample


def run_feedback_bits(cfg: ExperimentConfig, table):
    sc = cfg.scenario
    for db in sc["snr_db"]:
        for scheme in sc["schemes"]:
            res = required_feedback_bits(sc["target_gap"], _db(db), sc["M"], scheme, cfg.trials,
                                         K=sc["K"], seed=cfg.seed, max_bits=sc["max_bits"],
                                         tol=sc["rho_tol"], sampler=_bits_sampler(cfg.workers))
            bits = float(res.bits) if res.attained else float("nan")
            table.add(scheme, "snr_db", db, "required_bits", bits, 0.0, cfg.trials)
            for B, gap in sorted(res.gaps.items()):
                table.add(scheme, "bits", B, "sum_rate_gap", gap, 0.0, cfg.trials)


def _wmmse_draw(M, K, P, alpha, rho, sc, seed, trial):
    """All schemes of one estimate draw, scored on fresh posterior samples."""
    H = complex_normal(rngs.trial_rng(seed, trial, rngs.CHANNEL), (K, M))
    est = gaussian_csit(H, alpha, P, rngs.trial_rng(seed, trial, rngs.ERROR))
    ev = saa_samples(est.Hhat, est.error_var, sc["eval_samples"],
                     rngs.trial_rng(seed, trial, rngs.SAA, 1)).H
    zf_rs = assemble_rs(zf_directions(est.Hhat), common_precoder(est.Hhat), rho, P)
    zfbf = assemble_rs(zf_directions(est.Hhat), common_precoder(est.Hhat), 1.0, P)
    out = {}
    for objective in sc["objective"]:
        metric = "sum_rate" if objective == "sumrate" else "min_rate"

        def score(pre):
            rep = evaluate_rates(ev, pre)
            return float((rep.sum_rate if objective == "sumrate" else rep.min_user_rate).mean())

        variants = [("rs-wmmse", True)] + ([("mu-wmmse", False)] if sc["private_only"] else [])
        for name, use_common in variants:
            st = wmmse_optimize(est.Hhat, est.error_var, P, S=sc["samples"], objective=objective,
                                max_iter=sc["max_iter"], epsilon=sc["epsilon"],
                                seed=rngs.trial_rng(seed, trial, rngs.SAA, 0),
                                starts=sc["starts"], use_common=use_common)
            out[(name, metric)] = score(st.precoders)
            trace = np.asarray(st.objective_trace)
            out[(name, f"{objective}.trace_min_step")] = (
                float(np.min(np.diff(trace))) if trace.size > 1 else 0.0)
            out[(name, f"{objective}.iterations")] = float(trace.size - 1)
        out[("rs-zf", metric)] = score(zf_rs)
        out[("zfbf", metric)] = score(zfbf)
        out[("rs-wmmse-minus-rs-zf", metric + "_gap")] = out[("rs-wmmse", metric)] - out[("rs-zf", metric)]
    return out


def run_optimized(cfg: ExperimentConfig, table):
    sc = cfg.scenario
    alpha = sc["alpha"][0]
    for db in sc["snr_db"]:
        P = _db(db)
        split = optimize_power_split(Scenario(sc["M"], sc["K"], P, CsitQuality.exponent(alpha)),
                                     trials=sc["rho_trials"], tol=sc["rho_tol"], seed=cfg.seed)
        table.add("rs-zf", "snr_db", db, "rho", split.rho, 0.0, sc["rho_trials"])
        draws = _trials(_wmmse_draw, (sc["M"], sc["K"], P, alpha, split.rho, sc), cfg.seed,
                        cfg.trials, cfg.workers)
        for key in draws[0]:
            scheme, metric = key
            vals = [d[key] for d in draws]
            if metric.endswith("trace_min_step"):
                table.add(scheme, "snr_db", db, metric, min(vals), 0.0, len(vals))
            else:
                table.add_samples(scheme, "snr_db", db, metric, vals)


# ---------------------------------------------------------------- HRS

def hrs_setup(cfg: ExperimentConfig):
    sc = cfg.scenario
    M = 100 if sc["profile"] == "full" else sc["M"]
    scen = HrsScenario(M, sc["K"], sc["G"], tuple(sc["azimuths"]), sc["spread"], sc["alpha"][0],
                       _db(sc["snr_db"][0]))
    grouping = group_users(scen.covariances, sc["G"], seed=cfg.seed)
    return scen, grouping, outer_precoders(grouping)


def _hrs_trial(scen, grouping, outer, seed, trial):
    return hrs_trial_gains(scen, grouping, outer, seed, trial)


def run_hrs(cfg: ExperimentConfig, table):
    """Splits are tuned on one batch of trials and scored on a fresh batch."""
    sc = cfg.scenario
    base, grouping, outer = hrs_setup(cfg)
    for db in sc["snr_db"]:
        scen = HrsScenario(base.M, base.K, base.G, base.azimuths, base.spread, base.alpha, _db(db),
                           covariances=base.covariances)
        gains = np.array(_trials(_hrs_trial, (scen, grouping, outer), cfg.seed, 2 * cfg.trials,
                                 cfg.workers))
        tune, score = gains[:cfg.trials], gains[cfg.trials:]
        P = scen.P
        rs_split = optimize_hrs_split(tune, grouping, P, inner=False, tol=sc["rho_tol"])
        hrs_split = optimize_hrs_split(tune, grouping, P, tol=sc["rho_tol"])
        hrs = hrs_sum_rates(score, grouping, hrs_split.rho_outer, hrs_split.rho_inner, P)
        rs = hrs_sum_rates(score, grouping, rs_split.rho_outer, 1.0, P)
        base_rates = hrs_sum_rates(score, grouping, 1.0, 1.0, P)
        for scheme, vals in (("hrs", hrs), ("rs", rs), ("two-tier", base_rates),
                             ("hrs-minus-rs", hrs - rs), ("rs-minus-two-tier", rs - base_rates)):
            metric = "sum_rate_gap" if "minus" in scheme else "sum_rate"
            table.add_samples(scheme, "snr_db", db, metric, vals)
        table.add("hrs", "snr_db", db, "rho_outer", hrs_split.rho_outer, 0.0, cfg.trials)
        table.add("hrs", "snr_db", db, "rho_inner", hrs_split.rho_inner, 0.0, cfg.trials)
        table.add("rs", "snr_db", db, "rho_outer", rs_split.rho_outer, 0.0, cfg.trials)


# ---------------------------------------------------------------- multi-cell

def _two_cell_trial(topology, P, common_tx, seed, trial):
    return two_cell_trial_gains(topology, P, seed, trial, common_tx)


def run_two_cell(cfg: ExperimentConfig, table):
    tp = cfg.topology
    topology = CellTopology.two_cell(tp["alpha"], tp["antennas"])
    for db in cfg.scenario["snr_db"]:
        P = _db(db)
        gains = np.array(_trials(_two_cell_trial, (topology, P, tp["common_tx"]), cfg.seed,
                                 cfg.trials, cfg.workers))
        rho, _ = best_two_cell_rho(gains, P, cfg.scenario["rho_tol"])
        table.add_samples("rs", "snr_db", db, "sum_rate", two_cell_sum_rates(gains, rho, P))
        table.add_samples("zf", "snr_db", db, "sum_rate", two_cell_sum_rates(gains, 1.0, P))
        table.add("rs", "snr_db", db, "rho", rho, 0.0, cfg.trials)


def _trs_trial(trs, P, seed, trial):
    return trs_trial_gains(trs, P, seed, trial)


def _trs_rates(gains, trs, powers):
    return layered_rates(gains * np.asarray(powers), trs.plan).sum_rate


def run_trs(cfg: ExperimentConfig, table):
    """TRS against single-layer RS and private-only ZF on shared draws."""
    tp = cfg.topology
    grouped = CellTopology.three_cell(tp["alpha"], tp["beta"], tp["antennas"])
    flat = CellTopology(3, tp["antennas"], grouped.cross)
    tol = cfg.scenario["rho_tol"]
    for db in cfg.scenario["snr_db"]:
        P = _db(db)
        trs_unit = trs_build_plan(grouped, P, system_tx=tp["common_tx"])
        rs_unit = trs_build_plan(flat, P, system_tx=tp["common_tx"])
        g_trs = np.array(_trials(_trs_trial, (trs_unit, P), cfg.seed, cfg.trials, cfg.workers))
        g_rs = np.array(_trials(_trs_trial, (rs_unit, P), cfg.seed, cfg.trials, cfg.workers))

        def mean_trs(r, rg):
            powers = trs_build_plan(grouped, P, r, rg, tp["common_tx"]).plan.powers
            return float(_trs_rates(g_trs, trs_unit, powers).mean())

        def mean_rs(r):
            powers = trs_build_plan(flat, P, r, system_tx=tp["common_tx"]).plan.powers
            return float(_trs_rates(g_rs, rs_unit, powers).mean())

        rho_rs, _, _ = golden_max(mean_rs, tol=tol)
        rho, rho_g = rho_rs, 1.0
        best = mean_trs(rho, rho_g)
        for _ in range(4):
            start = best
            x, v, _ = golden_max(lambda r: mean_trs(rho, r), tol=tol)
            if v > best:
                rho_g, best = x, v
            x, v, _ = golden_max(lambda r: mean_trs(r, rho_g), tol=tol)
            if v > best:
                rho, best = x, v
            if best <= start + 1e-12:
                break
        trs_p = trs_build_plan(grouped, P, rho, rho_g, tp["common_tx"]).plan.powers
        rs_p = trs_build_plan(flat, P, rho_rs, system_tx=tp["common_tx"]).plan.powers
        zf_p = trs_build_plan(flat, P, 1.0, system_tx=tp["common_tx"]).plan.powers
        table.add_samples("trs", "snr_db", db, "sum_rate", _trs_rates(g_trs, trs_unit, trs_p))
        table.add_samples("rs", "snr_db", db, "sum_rate", _trs_rates(g_rs, rs_unit, rs_p))
        table.add_samples("zf", "snr_db", db, "sum_rate", _trs_rates(g_rs, rs_unit, zf_p))
        table.add("trs", "snr_db", db, "rho", rho, 0.0, cfg.trials)
        table.add("trs", "snr_db", db, "rho_group", rho_g, 0.0, cfg.trials)
        table.add("rs", "snr_db", db, "rho", rho_rs, 0.0, cfg.trials)


RUNNERS = {
    "dof-region": run_dof_region,
    "sumrate-vs-snr": run_sumrate,
    "optimized-precoders": run_optimized,
    "hrs-massive": run_hrs,
    "two-cell": run_two_cell,
    "trs-three-cell": run_trs,
    "feedback-bits": run_feedback_bits,
}


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Run ``cfg`` and return its result table (rows in a fixed order)."""
    table = ResultTable(cfg.experiment, cfg.seed, cfg.echo())
    RUNNERS[cfg.experiment](cfg, table)
    return table
