//! Energy components and the weighted objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scenario::{Plan, ScenarioConfig};

/// Rotary-wing propulsion constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropulsionConstants {
    pub blade_power: f64,
    pub induced_power: f64,
    pub tip_speed: f64,
    pub hover_velocity: f64,
    pub fuselage_drag: f64,
    pub solidity: f64,
    pub air_density: f64,
    pub disc_area: f64,
}

impl PropulsionConstants {
    pub fn parasite_coeff(&self) -> f64 {
        0.5 * self.fuselage_drag * self.air_density * self.solidity * self.disc_area
    }
}

/// Induced-power factor `sqrt(1 + V^4/(4 v0^4)) - V^2/(2 v0^2)`, written in
/// a form that does not cancel at high speed.
pub fn induced_radicand(v: f64, v0: f64) -> f64 {
    let a = v * v / (2.0 * v0 * v0);
    1.0 / ((1.0 + a * a).sqrt() + a)
}

/// Propulsion power at horizontal speed `v` (W).
pub fn propulsion_power(v: f64, pc: &PropulsionConstants) -> f64 {
    pc.blade_power * (1.0 + 3.0 * v * v / (pc.tip_speed * pc.tip_speed))
        + pc.induced_power * induced_radicand(v, pc.hover_velocity).sqrt()
        + pc.parasite_coeff() * v.powi(3)
}

/// Speeds minimizing power and energy per meter found by a grid scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficientSpeeds {
    pub min_power_speed: f64,
    pub min_power: f64,
    pub min_energy_per_meter_speed: f64,
}

pub fn efficient_speeds(pc: &PropulsionConstants, v_max: f64, step: f64) -> EfficientSpeeds {
    let count = (v_max / step).round() as usize;
    let mut best = (0.0, f64::INFINITY);
    let mut best_range = (0.0, f64::INFINITY);
    for i in 0..=count {
        let v = i as f64 * step;
        let p = propulsion_power(v, pc);
        if p < best.1 {
            best = (v, p);
        }
        if v > 0.0 && p / v < best_range.1 {
            best_range = (v, p / v);
        }
    }
    EfficientSpeeds {
        min_power_speed: best.0,
        min_power: best.1,
        min_energy_per_meter_speed: best_range.0,
    }
}

/// Weighted energy and its components (J).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EnergyBreakdown {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn compose(cfg: &ScenarioConfig, e1: f64, e2: f64, e3: f64, e4: f64) -> Self {
        Self {
            e1,
            e2,
            e3,
            e4,
            total: e1 + cfg.eta1 * (e2 + e3) + cfg.eta2 * e4,
        }
    }
}

/// Ground offloading energy.
pub fn energy_offload(cfg: &ScenarioConfig, plan: &Plan) -> f64 {
    let tau = cfg.slot_len();
    (0..plan.slots())
        .map(|n| {
            let on: f64 = plan.chi[n]
                .iter()
                .zip(&plan.power[n])
                .map(|(c, p)| c * p)
                .sum();
            plan.rho[n] * tau * on
        })
        .sum()
}

pub fn compute_energy_slot(cfg: &ScenarioConfig, bits: f64, rho: f64) -> f64 {
    let t = cfg.slot_len() * rho;
    cfg.gamma * (cfg.c0 * bits).powi(3) / (t * t)
}

/// UAV computation energy. Fails if a slot has data but no offload time.
pub fn energy_compute(cfg: &ScenarioConfig, plan: &Plan) -> Result<f64> {
    let mut total = 0.0;
    for n in 0..plan.slots() {
        let bits = plan.slot_bits(n);
        if bits <= 0.0 {
            continue;
        }
        if plan.rho[n] <= 0.0 {
            return Err(Error::ComputeTimeZero { slot: n, bits });
        }
        total += compute_energy_slot(cfg, bits, plan.rho[n]);
    }
    Ok(total)
}

/// Result forwarding energy.
pub fn energy_forward(cfg: &ScenarioConfig, plan: &Plan) -> f64 {
    let tau = cfg.slot_len();
    plan.beams
        .iter()
        .zip(&plan.rho)
        .map(|(w, rho)| linalg::real_trace(w) * (1.0 - rho) * tau)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropulsionEnergy {
    pub energy: f64,
    pub within_budget: bool,
}

/// Propulsion energy over the horizon and whether it fits the battery.
pub fn energy_propulsion(cfg: &ScenarioConfig, plan: &Plan) -> PropulsionEnergy {
    let tau = cfg.slot_len();
    let pc = cfg.propulsion();
    let energy: f64 = (0..plan.slots())
        .map(|n| propulsion_power(plan.step(n) / tau, &pc) * tau)
        .sum();
    PropulsionEnergy {
        energy,
        within_budget: energy <= cfg.propulsion_budget,
    }
}

pub fn energy_total(cfg: &ScenarioConfig, plan: &Plan) -> Result<EnergyBreakdown> {
    Ok(EnergyBreakdown::compose(
        cfg,
        energy_offload(cfg, plan),
        energy_compute(cfg, plan)?,
        energy_forward(cfg, plan),
        energy_propulsion(cfg, plan).energy,
    ))
}

/// Per-slot components `[E1, E2, E3, E4]` for trace output.
pub fn slot_energies(cfg: &ScenarioConfig, plan: &Plan) -> Vec<[f64; 4]> {
    let tau = cfg.slot_len();
    let pc = cfg.propulsion();
    (0..plan.slots())
        .map(|n| {
            let e1: f64 = plan.chi[n]
                .iter()
                .zip(&plan.power[n])
                .map(|(c, p)| c * p)
                .sum::<f64>()
                * plan.rho[n]
                * tau;
            let bits = plan.slot_bits(n);
            let e2 = if bits > 0.0 && plan.rho[n] > 0.0 {
                compute_energy_slot(cfg, bits, plan.rho[n])
            } else {
                0.0
            };
            let e3 = linalg::real_trace(&plan.beams[n]) * (1.0 - plan.rho[n]) * tau;
            let e4 = propulsion_power(plan.step(n) / tau, &pc) * tau;
            [e1, e2, e3, e4]
        })
        .collect()
}
