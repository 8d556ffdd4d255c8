//! The four block subproblems: offloading schedule and data, time split,
//! forwarding beams, and trajectory with node powers.

mod beamforming;
mod offload;
mod time_split;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::conic::ConicSettings;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::CMatrix;
use crate::robustify::{self, Robustness};
use crate::scenario::{Instance, Plan, ScenarioConfig};

pub use beamforming::{beam_program, solve_beamforming, BeamProgram};
pub use offload::{round_schedule, solve_offload_fixed, solve_offload_schedule};
pub use time_split::{max_time_split, solve_time_split, taylor_inverse_gap};
pub use trajectory::{distance_to_path, path_length, solve_fixed_path_speed, solve_trajectory_power, PathModel};

pub const RHO_MIN: f64 = 1e-3;
pub const RHO_MAX: f64 = 1.0 - 1e-3;

pub fn clamp_rho(rho: f64) -> f64 {
    rho.clamp(RHO_MIN, RHO_MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaSettings {
    pub max_iters: usize,
    /// Relative objective change that ends the loop.
    pub tol: f64,
    /// Per-waypoint box radius around the expansion point (m); none by default.
    pub trust_radius: Option<f64>,
    pub penalty_init: f64,
    pub penalty_growth: f64,
}

impl Default for ScaSettings {
    fn default() -> Self {
        Self {
            max_iters: 30,
            tol: 1e-3,
            trust_radius: None,
            penalty_init: 10.0,
            penalty_growth: 5.0,
        }
    }
}

impl ScaSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if self.penalty_init < 0.0 || self.penalty_growth < 1.0 {
            return Err(Error::invalid("penalty", "needs init >= 0 and growth >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeSplitMode {
    /// Cone composition `t(1-ρ) ≥ 1`, `log2(ψ+1) ≥ c t`.
    #[default]
    Exact,
    /// First-order expansion of `1/(1-ρ)` iterated from the current split.
    Sca,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub robustness: Robustness,
    pub time_split_mode: TimeSplitMode,
    pub time_split: ScaSettings,
    /// `penalty_init` is multiplied by `eta1` to give the first rank penalty.
    pub beam: ScaSettings,
    pub trajectory: ScaSettings,
    /// Target for `(trace − λmax)/trace` of every beam.
    pub rank_tol: f64,
    pub conic: ConicSettings,
    pub exec: Exec,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            robustness: Robustness::default(),
            time_split_mode: TimeSplitMode::Exact,
            time_split: ScaSettings::default(),
            beam: ScaSettings {
                max_iters: 40,
                ..ScaSettings::default()
            },
            trajectory: ScaSettings::default(),
            rank_tol: 1e-4,
            conic: ConicSettings::default(),
            exec: Exec::default(),
        }
    }
}

/// Updated plan from one subproblem with its objective history.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub plan: Plan,
    /// Subproblem objective at the returned plan.
    pub objective: f64,
    /// Objective of each inner iteration, in order.
    pub history: Vec<f64>,
}

/// Ground-link SNR per watt, `β0 / (σ² ||q − w_k||²)`.
pub fn ground_snr_per_watt(cfg: &ScenarioConfig, q: &[f64; 3], k: usize) -> f64 {
    let w = cfg.node_point(k);
    let d2 = (q[0] - w[0]).powi(2) + (q[1] - w[1]).powi(2) + (q[2] - w[2]).powi(2);
    cfg.beta0() / (cfg.noise_power() * d2)
}

/// SNR needed to move `bits` in the offloading part of a slot.
pub fn ground_threshold(cfg: &ScenarioConfig, bits: f64, rho: f64) -> f64 {
    (bits / (rho * cfg.slot_len() * cfg.bandwidth_ground)).exp2() - 1.0
}

/// Least node power that carries `bits` from node `k` to a UAV at `q`.
pub fn min_node_power(cfg: &ScenarioConfig, q: &[f64; 3], k: usize, bits: f64, rho: f64) -> f64 {
    if bits <= 0.0 {
        return 0.0;
    }
    ground_threshold(cfg, bits, rho) / ground_snr_per_watt(cfg, q, k)
}

/// Bits node `k` can deliver at power `p`.
pub fn ground_bits(cfg: &ScenarioConfig, q: &[f64; 3], k: usize, p: f64, rho: f64) -> f64 {
    rho * cfg.slot_len() * cfg.bandwidth_ground * (1.0 + p * ground_snr_per_watt(cfg, q, k)).log2()
}

/// Reset node powers to match the plan: scheduled pairs get the least power
/// carrying their bits; unscheduled pairs get the (capped) power they would
/// need to carry the slot's load, which prices a schedule change.
pub fn refresh_powers(cfg: &ScenarioConfig, plan: &mut Plan) {
    let mean_load = (0..cfg.node_count).map(|k| cfg.demand(k)).sum::<f64>() / cfg.slots as f64;
    for n in 0..plan.slots() {
        let q = plan.waypoints[n + 1];
        let rho = plan.rho[n];
        let load = plan.slot_bits(n);
        let target = if load > 0.0 { load } else { mean_load };
        for k in 0..cfg.node_count {
            plan.power[n][k] = if plan.chi[n][k] > 0.5 {
                min_node_power(cfg, &q, k, plan.bits[n][k], rho)
            } else {
                min_node_power(cfg, &q, k, target, rho).min(cfg.node_power_max(k))
            };
        }
    }
}

/// SNR threshold of every slot's forwarding constraint.
pub fn forward_thresholds(cfg: &ScenarioConfig, plan: &Plan) -> Result<Vec<f64>> {
    (0..plan.slots())
        .map(|n| robustify::forward_threshold(cfg, plan.slot_bits(n), plan.rho[n]))
        .collect()
}

/// Per-slot `supported SNR − threshold` under `rule`; nonnegative means the
/// forwarding constraint (robust or nominal) holds.
pub fn forward_margins(inst: &Instance, plan: &Plan, rule: Robustness) -> Result<Vec<f64>> {
    let cfg = &inst.cfg;
    let thresholds = forward_thresholds(cfg, plan)?;
    (0..plan.slots())
        .map(|n| {
            let snr = robustify::supported_snr(&plan.beams[n], &inst.link.g_hat[n], cfg.varrho, cfg.eps(n), rule)?;
            Ok(snr - thresholds[n])
        })
        .collect()
}

/// Whether every slot's forwarding constraint holds up to relative `tol`.
pub fn forward_certified(inst: &Instance, plan: &Plan, rule: Robustness, tol: f64) -> Result<bool> {
    let thresholds = forward_thresholds(&inst.cfg, plan)?;
    let margins = forward_margins(inst, plan, rule)?;
    Ok(margins
        .iter()
        .zip(&thresholds)
        .all(|(m, t)| *m >= -tol * t.max(1e-12)))
}

/// Relative rank-one residual `(trace − λmax)/trace`; zero for a zero matrix.
pub fn rank_residual(w: &CMatrix) -> f64 {
    let tr = crate::linalg::real_trace(w);
    if tr <= 0.0 {
        return 0.0;
    }
    let (lam, _) = crate::linalg::principal_eigenpair(w);
    ((tr - lam) / tr).max(0.0)
}
