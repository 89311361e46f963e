"""Scenario runners: seeded sweeps, CSV emission, plot recipes, worker pool."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .analytic import calibrate_progress, run_recursion
from .baseline import BclConfig, run_bcl
from .channel import PhyConfig, detection_constant
from .config import ExperimentSpec, dbm_to_watts
from .engine import RetransmitPolicy, run_trial, run_two_packet_trial
from .field import FieldConfig, Point2D
from .metrics import edp_and_cost, mcs_table, trial_e2e

TRACE_COLUMNS = ["trial_id", "hop", "K", "L", "j", "n_r", "xH0",
                 "delay_spread_s"]
SUMMARY_COLUMNS = ["protocol", "p_t_dbm", "rho_per_km2", "B", "mcs",
                   "E_e2e_J", "l_e2e_s", "EDP", "C_e2e", "cost_ratio",
                   "delivered", "trials"]


def _write_csv(path: str, header: list[str], rows) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in row])


def _write_plot_recipe(path: str, title: str, x: str, y: str, data_csv: str,
                       series: str | None = None, notes: str = "") -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    lines = [
        f"title = {title}",
        f"data = {os.path.basename(data_csv)}",
        f"x = {x}",
        f"y = {y}",
    ]
    if series:
        lines.append(f"series_by = {series}")
    if notes:
        lines.append(f"notes = {notes}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _trial_seeds(seed: int, trials: int) -> list[int]:
    root = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in root.spawn(trials)]


def _one_omr_trial(args):
    field_kw, phy_kw, pol_kw, b, seed = args
    res = run_trial(FieldConfig(**field_kw), PhyConfig(**phy_kw),
                    RetransmitPolicy(**pol_kw), b, seed)
    rows = [(res.seed, r.hop, r.k_prev, r.l, r.j_prev, r.n_r, r.xh0,
             res.delay_spread_s) for r in res.records]
    e, l = trial_e2e(res.records, PhyConfig(**phy_kw))
    return res.seed, res.reached, res.q, res.delay_spread_s, rows, e, l


def run_omr_batch(spec: ExperimentSpec, field: FieldConfig, phy: PhyConfig,
                  trials: int, seed: int):
    """Run trials (parallel when spec.workers != 1), deterministic order."""
    args = [
        (field.__dict__, phy.__dict__, spec.policy.__dict__, spec.b, s)
        for s in _trial_seeds(seed, trials)
    ]
    workers = spec.workers if spec.workers > 0 else (os.cpu_count() or 1)
    if workers == 1 or trials < 8:
        out = [_one_omr_trial(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_one_omr_trial, args, chunksize=16))
    order = {a[-1]: i for i, a in enumerate(args)}
    out.sort(key=lambda item: order[item[0]])
    return out


def _omr_point_metrics(batch, phy: PhyConfig):
    """Delivery-normalized energy, mean delivered delay, EDP and cost."""
    delivered = [b for b in batch if b[1]]
    total_energy = sum(b[5] for b in batch)
    if not delivered:
        return math.nan, math.nan, math.nan, math.nan, 0
    e_per_delivery = total_energy / len(delivered)
    l_mean = float(np.mean([b[6] for b in delivered]))
    edp, cost = edp_and_cost(e_per_delivery, l_mean, phy.r, phy.t_p)
    return e_per_delivery, l_mean, edp, cost, len(delivered)


def scenario_omr_trials(spec: ExperimentSpec) -> list[str]:
    batch = run_omr_batch(spec, spec.field, spec.phy, spec.trials, spec.seed)
    trace_path = os.path.join(spec.out_dir, "omr_trace.csv")
    rows = [row for b in batch for row in b[4]]
    _write_csv(trace_path, TRACE_COLUMNS, rows)
    e, l, edp, cost, delivered = _omr_point_metrics(batch, spec.phy)
    summary = os.path.join(spec.out_dir, "summary.csv")
    _write_csv(summary, SUMMARY_COLUMNS, [(
        "omr", round(10 * math.log10(spec.phy.p_t) + 30, 6),
        spec.field.rho * 1e6, spec.b, "", e, l, edp, cost, "",
        delivered, spec.trials)])
    return [trace_path, summary]


def scenario_bcl_trials(spec: ExperimentSpec) -> list[str]:
    phy = spec.phy.with_tx_power(dbm_to_watts(spec.bcl_p_t_dbm))
    res = run_bcl(spec.bcl, spec.field, phy, spec.trials, spec.seed)
    hop_path = os.path.join(spec.out_dir, "bcl_hops.csv")
    _write_csv(hop_path, ["trial_id", "hop", "eta", "m_e", "m_n", "progress_m"],
               res.per_hop)
    edp, cost = edp_and_cost(res.e2e_energy_j, res.e2e_delay_s, phy.r, phy.t_p)
    summary = os.path.join(spec.out_dir, "summary.csv")
    _write_csv(summary, SUMMARY_COLUMNS, [(
        "bcl", spec.bcl_p_t_dbm, spec.field.rho * 1e6, "", "",
        res.e2e_energy_j, res.e2e_delay_s, edp, cost, "",
        res.delivered, res.trials)])
    return [hop_path, summary]


def calibrate_from_batch(spec: ExperimentSpec, field: FieldConfig,
                         phy: PhyConfig, trials: int, seed: int):
    """Fit the per-hop progress law from a fresh batch of trials."""
    batch = run_omr_batch(spec, field, phy, trials, seed)
    u = detection_constant(phy).u
    ks, dxs = [], []
    for b in batch:
        # failed trials still advanced the contour for a few hops; their
        # samples are as real as any
        prev_x = None
        for (_, hop, k_prev, _, _, _, xh0, _) in b[4]:
            if hop >= 2 and prev_x is not None \
                    and not math.isnan(xh0) and not math.isnan(prev_x):
                ks.append(k_prev)
                dxs.append(xh0 - prev_x)
            prev_x = xh0
    model, mape = calibrate_progress(np.asarray(ks, dtype=float),
                                     np.asarray(dxs, dtype=float), u)
    return model, mape, batch


def scenario_calibrate(spec: ExperimentSpec) -> list[str]:
    model, mape, _ = calibrate_from_batch(spec, spec.field, spec.phy,
                                          spec.trials, spec.seed)
    path = os.path.join(spec.out_dir, "calibration.csv")
    _write_csv(path, ["varphi_m", "beta", "u", "alpha", "r1_m", "mape"],
               [(model.varphi, model.beta, model.u, model.alpha, model.r1,
                 mape)])
    return [path]


def scenario_analytic(spec: ExperimentSpec) -> list[str]:
    model, mape, _ = calibrate_from_batch(
        spec, spec.field, spec.phy, max(200, spec.trials // 5), spec.seed + 1)
    stats = run_recursion(spec.field, model, spec.b)
    path = os.path.join(spec.out_dir, "analytic_hops.csv")
    _write_csv(path, ["hop", "E_K", "E_L", "E_nr", "xH0"],
               [(r.hop, r.e_k, r.e_l, r.e_nr, r.xh0) for r in stats.rows])
    out = [path]
    if spec.dump_pmfs:
        for i, dist in enumerate(stats.dists_k, start=1):
            p = os.path.join(spec.out_dir, f"pmf_K_hop{i}.csv")
            _write_csv(p, ["k", "prob"], list(enumerate(dist.probs)))
            out.append(p)
    _write_plot_recipe(os.path.join(spec.out_dir, "analytic_hops.plot.txt"),
                       "Per-hop relay/decoder expectations", "hop",
                       "E_K,E_L,E_nr", path,
                       notes=f"progress fit MAPE = {mape:.4f}")
    return out


def scenario_compare_power(spec: ExperimentSpec) -> list[str]:
    """Cost-ratio curve against transmit power for each density."""
    rows = []
    for rho_km2 in spec.rho_per_km2_list:
        field = replace(spec.field, rho=rho_km2 * 1e-6)
        phy_b = spec.phy.with_tx_power(dbm_to_watts(spec.bcl_p_t_dbm))
        bcl = run_bcl(spec.bcl, field, phy_b, max(100, spec.trials // 5),
                      spec.seed + 17)
        edp_b, cost_b = edp_and_cost(bcl.e2e_energy_j, bcl.e2e_delay_s,
                                     phy_b.r, phy_b.t_p)
        rows.append(("bcl", spec.bcl_p_t_dbm, rho_km2, "", "",
                     bcl.e2e_energy_j, bcl.e2e_delay_s, edp_b, cost_b, 1.0,
                     bcl.delivered, bcl.trials))
        for pdbm in spec.p_t_dbm_list:
            phy = spec.phy.with_tx_power(dbm_to_watts(pdbm))
            batch = run_omr_batch(spec, field, phy, spec.trials,
                                  spec.seed + int(pdbm * 10))
            e, l, edp, cost, delivered = _omr_point_metrics(batch, phy)
            ratio = cost / cost_b if cost == cost else math.nan
            rows.append(("omr", pdbm, rho_km2, spec.b, "", e, l, edp, cost,
                         ratio, delivered, spec.trials))
    path = os.path.join(spec.out_dir, "compare_power.csv")
    _write_csv(path, SUMMARY_COLUMNS, rows)
    _write_plot_recipe(os.path.join(spec.out_dir, "compare_power.plot.txt"),
                       "End-to-end cost ratio vs transmit power",
                       "p_t_dbm", "cost_ratio", path, series="rho_per_km2")
    return [path]


def scenario_compare_b(spec: ExperimentSpec) -> list[str]:
    rows = []
    field = spec.field
    phy_b = spec.phy.with_tx_power(dbm_to_watts(spec.bcl_p_t_dbm))
    bcl = run_bcl(spec.bcl, field, phy_b, max(100, spec.trials // 5),
                  spec.seed + 17)
    _, cost_b = edp_and_cost(bcl.e2e_energy_j, bcl.e2e_delay_s, phy_b.r,
                             phy_b.t_p)
    for b in spec.b_list:
        batch = run_omr_batch(replace(spec, b=b), field, spec.phy,
                              spec.trials, spec.seed + b)
        e, l, edp, cost, delivered = _omr_point_metrics(batch, spec.phy)
        rows.append(("omr", round(10 * math.log10(spec.phy.p_t) + 30, 6),
                     field.rho * 1e6, b, "", e, l, edp, cost, cost / cost_b,
                     delivered, spec.trials))
    path = os.path.join(spec.out_dir, "compare_B.csv")
    _write_csv(path, SUMMARY_COLUMNS, rows)
    _write_plot_recipe(os.path.join(spec.out_dir, "compare_B.plot.txt"),
                       "End-to-end cost ratio vs RACH slot count", "B",
                       "cost_ratio", path)
    return [path]


def scenario_compare_mcs(spec: ExperimentSpec) -> list[str]:
    """Per-MCS cost against the baseline running coherent QPSK."""
    table = {m.name: m for m in mcs_table(spec.coding_gain_db)}
    rows = []
    qpsk = table["QPSK-coherent"]
    phy_b = replace(spec.phy, p_t=dbm_to_watts(spec.bcl_p_t_dbm),
                    gamma_t=qpsk.gamma_t, r=qpsk.rate(spec.phy.symbol_rate))
    bcl = run_bcl(spec.bcl, spec.field, phy_b, max(100, spec.trials // 5),
                  spec.seed + 17)
    edp_b, cost_b = edp_and_cost(bcl.e2e_energy_j, bcl.e2e_delay_s, phy_b.r,
                                 phy_b.t_p)
    rows.append(("bcl", spec.bcl_p_t_dbm, spec.field.rho * 1e6, "",
                 "QPSK-coherent", bcl.e2e_energy_j, bcl.e2e_delay_s, edp_b,
                 cost_b, 1.0, bcl.delivered, bcl.trials))
    for name in spec.mcs_list:
        if name not in table:
            raise ValueError(f"unknown MCS '{name}'")
        entry = table[name]
        phy = replace(spec.phy, gamma_t=entry.gamma_t,
                      r=entry.rate(spec.phy.symbol_rate))
        batch = run_omr_batch(spec, spec.field, phy, spec.trials,
                              spec.seed + entry.bits_per_symbol)
        e, l, edp, cost, delivered = _omr_point_metrics(batch, phy)
        rows.append(("omr", round(10 * math.log10(phy.p_t) + 30, 6),
                     spec.field.rho * 1e6, spec.b, name, e, l, edp, cost,
                     cost / cost_b, delivered, spec.trials))
    path = os.path.join(spec.out_dir, "compare_mcs.csv")
    _write_csv(path, SUMMARY_COLUMNS, rows)
    _write_plot_recipe(os.path.join(spec.out_dir, "compare_mcs.plot.txt"),
                       "End-to-end cost ratio per modulation scheme", "mcs",
                       "cost_ratio", path)
    return [path]


def scenario_delay_spread(spec: ExperimentSpec) -> list[str]:
    rows = []
    for rho_km2 in spec.rho_per_km2_list:
        for w in spec.w_list:
            field = replace(spec.field, rho=rho_km2 * 1e-6, w=w)
            batch = run_omr_batch(spec, field, spec.phy, spec.trials,
                                  spec.seed + int(w) + int(rho_km2))
            spreads = np.asarray([b[3] for b in batch if b[1]])
            rows.append((rho_km2, w, spreads.size,
                         float(spreads.mean()) if spreads.size else math.nan,
                         float(spreads.std()) if spreads.size else math.nan,
                         float(np.mean(spreads > spec.phy.t_cp))
                         if spreads.size else math.nan))
    path = os.path.join(spec.out_dir, "delay_spread.csv")
    _write_csv(path, ["rho_per_km2", "w_m", "delivered", "spread_mean_s",
                      "spread_std_s", "frac_above_t_cp"], rows)
    _write_plot_recipe(os.path.join(spec.out_dir, "delay_spread.plot.txt"),
                       "Forwarding delay spread vs strip width", "w_m",
                       "spread_mean_s,spread_std_s", path,
                       series="rho_per_km2")
    return [path]


def scenario_retransmissions(spec: ExperimentSpec) -> list[str]:
    """Per-hop expected retransmissions: recursion vs Monte Carlo."""
    from .analytic import CalibrationError

    rows = []
    for rho_km2 in spec.rho_per_km2_list:
        for pdbm in spec.p_t_dbm_list:
            field = replace(spec.field, rho=rho_km2 * 1e-6)
            phy = spec.phy.with_tx_power(dbm_to_watts(pdbm))
            ana = {}
            try:
                model, mape, batch = calibrate_from_batch(
                    spec, field, phy, spec.trials, spec.seed + int(pdbm * 10))
                stats = run_recursion(field, model, spec.b)
                ana = {r.hop: r.e_nr for r in stats.rows}
            except (CalibrationError, ValueError):
                # sweep point too sparse to calibrate; keep the raw counts
                batch = run_omr_batch(spec, field, phy, spec.trials,
                                      spec.seed + int(pdbm * 10))
            nr_by_hop: dict[int, list] = {}
            for b in batch:
                for (_, hop, _, _, _, n_r, _, _) in b[4]:
                    nr_by_hop.setdefault(hop, []).append(n_r)
            for hop in sorted(nr_by_hop):
                mc = nr_by_hop[hop]
                rows.append((rho_km2, pdbm, hop, float(np.mean(mc)),
                             float(np.std(mc) / math.sqrt(len(mc))),
                             ana.get(hop, math.nan), len(mc)))
    path = os.path.join(spec.out_dir, "retransmissions.csv")
    _write_csv(path, ["rho_per_km2", "p_t_dbm", "hop", "E_nr_mc", "se_mc",
                      "E_nr_analytic", "n"], rows)
    _write_plot_recipe(os.path.join(spec.out_dir, "retransmissions.plot.txt"),
                       "Expected retransmissions per hop", "hop",
                       "E_nr_mc,E_nr_analytic", path,
                       series="rho_per_km2,p_t_dbm")
    return [path]


def scenario_two_packets(spec: ExperimentSpec) -> list[str]:
    res = run_two_packet_trial(
        spec.field, spec.phy, spec.policy, spec.b, spec.seed,
        src_a=Point2D(*spec.two_src_a), src_b=Point2D(*spec.two_src_b),
        interference_radius=spec.interference_radius,
        stagger_slots=spec.two_stagger_slots,
    )
    out = []
    for name, flow in (("a", res.flow_a), ("b", res.flow_b)):
        path = os.path.join(spec.out_dir, f"two_packets_flow_{name}.csv")
        _write_csv(path, ["hop", "K", "L", "j", "n_r", "n_r_interference",
                          "xH0", "reached"],
                   [(r.hop, r.k_prev, r.l, r.j_prev, r.n_r,
                     r.n_r_interference, r.xh0, flow.reached)
                    for r in flow.records])
        out.append(path)
    summary = os.path.join(spec.out_dir, "two_packets_summary.csv")
    _write_csv(summary, ["flow", "reached", "hops", "interference_tagged",
                         "slots_used"],
               [("a", res.flow_a.reached, res.flow_a.q,
                 res.interference_tagged, res.slots_used),
                ("b", res.flow_b.reached, res.flow_b.q,
                 res.interference_tagged, res.slots_used)])
    out.append(summary)
    return out


_SCENARIO_FUNCS = {
    "omr-trials": scenario_omr_trials,
    "bcl-trials": scenario_bcl_trials,
    "analytic": scenario_analytic,
    "compare-power": scenario_compare_power,
    "compare-B": scenario_compare_b,
    "compare-mcs": scenario_compare_mcs,
    "delay-spread": scenario_delay_spread,
    "retransmissions": scenario_retransmissions,
    "two-packets": scenario_two_packets,
    "calibrate": scenario_calibrate,
}


def run(spec: ExperimentSpec) -> list[str]:
    """Execute one scenario; returns the paths written."""
    diags = spec.validate()
    if diags:
        from .config import ConfigError

        raise ConfigError(diags)
    os.makedirs(spec.out_dir, exist_ok=True)
    try:
        return _SCENARIO_FUNCS[spec.scenario](spec)
    except Exception as exc:
        manifest = os.path.join(spec.out_dir, "error_manifest.txt")
        with open(manifest, "w", encoding="utf-8") as fh:
            fh.write(f"scenario = {spec.scenario}\nerror = {exc!r}\n")
        raise
