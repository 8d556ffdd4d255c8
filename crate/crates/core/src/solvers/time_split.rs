//! Time split between offloading and forwarding with everything else fixed.

use std::f64::consts::LN_2;

use super::{clamp_rho, ground_snr_per_watt, Outcome, SolverSettings, TimeSplitMode, RHO_MAX, RHO_MIN};
use crate::conic::{self, Affine, ConicProgram, Var};
use crate::energy;
use crate::error::{Error, Result};
use crate::linalg;
use crate::robustify::{self, Robustness};
use crate::scenario::{Instance, Plan};

/// `1/(1−ρ)` minus its first-order expansion at `rho0`; never negative
/// because the function is convex.
pub fn taylor_inverse_gap(rho: f64, rho0: f64) -> f64 {
    1.0 / (1.0 - rho) - taylor_inverse(rho, rho0)
}

fn taylor_inverse(rho: f64, rho0: f64) -> f64 {
    (1.0 - 2.0 * rho0 + rho) / (1.0 - rho0).powi(2)
}

/// Forwarding exponent coefficient `c` in `log2(1 + SNR) ≥ c/(1−ρ)`.
fn forward_coeff(inst: &Instance, plan: &Plan, n: usize) -> f64 {
    let cfg = &inst.cfg;
    cfg.result_ratio * plan.slot_bits(n) / (cfg.slot_len() * cfg.bandwidth_sat)
}

fn supported(inst: &Instance, plan: &Plan, n: usize, rule: Robustness) -> Result<f64> {
    let cfg = &inst.cfg;
    let snr = robustify::supported_snr(&plan.beams[n], &inst.link.g_hat[n], cfg.varrho, cfg.eps(n), rule)?;
    Ok(snr.max(0.0))
}

/// Largest split the fixed beam of slot `n` allows: `1 − c/log2(1 + B)`.
pub fn max_time_split(inst: &Instance, plan: &Plan, n: usize, rule: Robustness) -> Result<f64> {
    let c = forward_coeff(inst, plan, n);
    if c <= 0.0 {
        return Ok(1.0);
    }
    let cap = (1.0 + supported(inst, plan, n, rule)?).log2();
    Ok(1.0 - c / cap)
}

/// Lower bound on the split from the ground rate and the compute capacity.
fn min_time_split(inst: &Instance, plan: &Plan, n: usize) -> Result<f64> {
    let cfg = &inst.cfg;
    let tau = cfg.slot_len();
    let mut lo = RHO_MIN;
    for k in 0..cfg.node_count {
        let bits = plan.bits[n][k];
        if bits <= 0.0 {
            continue;
        }
        let snr = plan.power[n][k] * ground_snr_per_watt(cfg, &plan.waypoints[n + 1], k);
        if snr <= 0.0 {
            return Err(Error::Infeasible(format!("slot {n}: node {k} has data but no power")));
        }
        lo = lo.max(bits / (tau * cfg.bandwidth_ground * (1.0 + snr).log2()));
    }
    lo = lo.max(cfg.c0 * plan.slot_bits(n) / (tau * cfg.cpu_freq_max));
    if lo > RHO_MAX {
        return Err(Error::Infeasible(format!(
            "slot {n}: rate and compute capacity need time split {lo:.6} (above 1)"
        )));
    }
    Ok(lo)
}

fn objective_at(inst: &Instance, plan: &Plan) -> f64 {
    let cfg = &inst.cfg;
    energy::energy_offload(cfg, plan) + cfg.eta1 * energy::energy_forward(cfg, plan)
}

/// One conic solve. `expansion` switches the `1/(1−ρ)` coupling from the
/// exact cone form to the first-order expansion around the given splits.
fn solve_once(
    inst: &Instance,
    plan: &Plan,
    lower: &[f64],
    expansion: Option<&[f64]>,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    let cfg = &inst.cfg;
    let tau = cfg.slot_len();
    let scale = 1.0 / objective_at(inst, plan).max(1e-9);
    let mut prog = ConicProgram::new();
    let mut objective = Affine::default();
    let rho: Vec<Var> = prog.vars("rho", cfg.slots);
    for n in 0..cfg.slots {
        let on: f64 = plan.chi[n].iter().zip(&plan.power[n]).map(|(c, p)| c * p).sum();
        let tr = linalg::real_trace(&plan.beams[n]);
        objective += rho[n] * (tau * (on - cfg.eta1 * tr) * scale);
        objective += cfg.eta1 * tr * tau * scale;
        prog.ge(format!("rho lower n={n}"), rho[n], lower[n]);
        prog.le(format!("rho upper n={n}"), rho[n], RHO_MAX);

        let c = forward_coeff(inst, plan, n);
        if c <= 0.0 {
            continue;
        }
        let psi = prog.var(format!("psi[{n}]"));
        let inverse = match expansion {
            None => {
                let t = prog.var(format!("t[{n}]"));
                prog.rsoc(format!("t(1-rho)>=1 n={n}"), t, Affine::constant(1.0) - rho[n], vec![1.0.into()]);
                t.aff()
            }
            Some(r0) => (Affine::constant(1.0 - 2.0 * r0[n]) + rho[n]) * (1.0 / (1.0 - r0[n]).powi(2)),
        };
        prog.exp_cone(format!("log2(psi+1)>=c t n={n}"), inverse * (LN_2 * c), 1.0, psi + 1.0);
        prog.le(
            format!("bernstein n={n}"),
            psi,
            supported(inst, plan, n, settings.robustness)?,
        );
    }
    prog.minimize(objective);
    let sol = conic::solve(&prog, &settings.conic).require("time split")?;
    Ok(rho.iter().map(|&v| sol.value(v)).collect())
}

/// Optimize the time split of every slot.
pub fn solve_time_split(inst: &Instance, plan: &Plan, settings: &SolverSettings) -> Result<Outcome> {
    let cfg = &inst.cfg;
    let lower = (0..cfg.slots)
        .map(|n| min_time_split(inst, plan, n))
        .collect::<Result<Vec<_>>>()?;
    let upper = (0..cfg.slots)
        .map(|n| max_time_split(inst, plan, n, settings.robustness))
        .collect::<Result<Vec<_>>>()?;
    let mut upper = upper;
    for n in 0..cfg.slots {
        // the current split may sit on both bounds at once
        if upper[n] < lower[n] && upper[n] >= lower[n] - 1e-7 {
            upper[n] = lower[n];
        }
        if upper[n] < lower[n] {
            return Err(Error::Infeasible(format!(
                "slot {n}: forwarding needs split <= {:.6} but offloading needs >= {:.6}",
                upper[n], lower[n]
            )));
        }
    }
    let finish = |rho: Vec<f64>, history: Vec<f64>| {
        let mut out = plan.clone();
        out.rho = rho
            .iter()
            .enumerate()
            .map(|(n, &r)| clamp_rho(r.clamp(lower[n], upper[n])))
            .collect();
        let objective = objective_at(inst, &out);
        let mut history = history;
        history.push(objective);
        Outcome {
            plan: out,
            objective,
            history,
        }
    };

    match settings.time_split_mode {
        TimeSplitMode::Exact => Ok(finish(solve_once(inst, plan, &lower, None, settings)?, Vec::new())),
        TimeSplitMode::Sca => {
            let sca = settings.time_split;
            let mut point: Vec<f64> = plan.rho.iter().map(|&r| clamp_rho(r)).collect();
            let mut history = vec![objective_at(inst, plan)];
            for _ in 0..sca.max_iters {
                let raw = solve_once(inst, plan, &lower, Some(&point), settings)?;
                let next: Vec<f64> = raw
                    .iter()
                    .enumerate()
                    .map(|(n, &r)| clamp_rho(r.clamp(lower[n], upper[n])))
                    .collect();
                let mut trial = plan.clone();
                trial.rho = next.clone();
                let obj = objective_at(inst, &trial);
                let prev = *history.last().expect("seeded");
                history.push(obj);
                point = next;
                if (prev - obj).abs() <= sca.tol * prev.abs().max(1e-12) {
                    break;
                }
            }
            history.pop();
            Ok(finish(point, history))
        }
    }
}
