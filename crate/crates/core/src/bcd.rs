//! Initial plan and the outer block-coordinate-descent loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energy::{self, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::scenario::{validate_plan, Instance, Plan, ScenarioConfig};
use crate::solvers::{self, forward_certified, min_node_power, Outcome, PathModel, SolverSettings};

/// Fraction of the flight range the initial path may use.
const PATH_SLACK: f64 = 0.95;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn polyline_length(v: &[[f64; 2]]) -> f64 {
    v.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// Nearest-neighbor tour from the start over the node projections to the
/// finish, pulled toward the straight start-finish line when it is longer
/// than the UAV can fly.
pub fn init_path(cfg: &ScenarioConfig) -> Result<Vec<[f64; 2]>> {
    let mut tour = vec![cfg.q_start];
    let mut left: Vec<[f64; 2]> = cfg.nodes.clone();
    while !left.is_empty() {
        let here = *tour.last().unwrap();
        let (i, _) = left
            .iter()
            .enumerate()
            .map(|(i, &p)| (i, dist(here, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        tour.push(left.remove(i));
    }
    tour.push(cfg.q_finish);
    // drop repeated points so every segment has a direction
    tour.dedup_by(|a, b| dist(*a, *b) < 1e-9);
    if tour.len() == 1 {
        tour.push(cfg.q_finish);
    }

    let range = cfg.v_max * cfg.horizon;
    let straight = dist(cfg.q_start, cfg.q_finish);
    if straight > range * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "start and finish are {straight:.3} m apart but the UAV covers at most {range:.3} m"
        )));
    }
    let limit = PATH_SLACK * range;
    if polyline_length(&tour) <= limit {
        return Ok(tour);
    }
    let total = polyline_length(&tour);
    let mut acc = 0.0;
    let anchors: Vec<[f64; 2]> = tour
        .iter()
        .enumerate()
        .map(|(i, _)| {
            if i > 0 {
                acc += dist(tour[i - 1], tour[i]);
            }
            let t = acc / total;
            [
                cfg.q_start[0] + t * (cfg.q_finish[0] - cfg.q_start[0]),
                cfg.q_start[1] + t * (cfg.q_finish[1] - cfg.q_start[1]),
            ]
        })
        .collect();
    let shrink = |alpha: f64| -> Vec<[f64; 2]> {
        tour.iter()
            .zip(&anchors)
            .map(|(p, a)| [a[0] + alpha * (p[0] - a[0]), a[1] + alpha * (p[1] - a[1])])
            .collect()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if polyline_length(&shrink(mid)) <= limit {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    log::debug!("initial tour shrunk by factor {lo:.4}");
    Ok(shrink(lo))
}

/// `count + 1` points at equal arc length along the polyline.
pub fn resample(vertices: &[[f64; 2]], count: usize) -> Vec<[f64; 2]> {
    let total = polyline_length(vertices);
    let mut out = Vec::with_capacity(count + 1);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 0..=count {
        let target = total * i as f64 / count as f64;
        while seg + 1 < vertices.len() - 1 && seg_start + dist(vertices[seg], vertices[seg + 1]) < target {
            seg_start += dist(vertices[seg], vertices[seg + 1]);
            seg += 1;
        }
        let len = dist(vertices[seg], vertices[seg + 1]);
        let t = if len > 0.0 { ((target - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (vertices[seg], vertices[seg + 1]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out[0] = vertices[0];
    out[count] = *vertices.last().unwrap();
    out
}

/// Starting point of the descent: tour path at constant speed, half-split
/// slots, round-robin schedule, least ground powers and full-power beams
/// matched to the nominal link.
pub fn init_plan(inst: &Instance) -> Result<Plan> {
    let cfg = &inst.cfg;
    let (slots, nodes) = (cfg.slots, cfg.node_count);
    if nodes > slots {
        return Err(Error::Infeasible(format!(
            "{nodes} nodes cannot share {slots} slots round-robin"
        )));
    }
    let path = init_path(cfg)?;
    let waypoints: Vec<[f64; 3]> = resample(&path, slots)
        .into_iter()
        .map(|p| [p[0], p[1], cfg.altitude])
        .collect();

    let mut chi = vec![vec![0.0; nodes]; slots];
    let mut counts = vec![0usize; nodes];
    for (n, row) in chi.iter_mut().enumerate() {
        row[n % nodes] = 1.0;
        counts[n % nodes] += 1;
    }
    let rho = vec![0.5; slots];
    let bits: Vec<Vec<f64>> = chi
        .iter()
        .map(|row| {
            (0..nodes)
                .map(|k| if row[k] > 0.5 { cfg.demand(k) / counts[k] as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    let power: Vec<Vec<f64>> = (0..slots)
        .map(|n| {
            (0..nodes)
                .map(|k| min_node_power(cfg, &waypoints[n + 1], k, bits[n][k], rho[n]).min(cfg.node_power_max(k)))
                .collect()
        })
        .collect();
    let beams = inst
        .link
        .g_hat
        .iter()
        .map(|g| {
            let u = g / C64::new(g.norm(), 0.0);
            linalg::outer(&u) * C64::new(cfg.uav_power_max, 0.0)
        })
        .collect();
    let mut plan = Plan {
        waypoints,
        rho,
        chi,
        bits,
        power,
        beams,
    };
    solvers::refresh_powers(cfg, &mut plan);
    for n in 0..slots {
        for k in 0..nodes {
            plan.power[n][k] = plan.power[n][k].min(cfg.node_power_max(k));
        }
    }
    let violations = validate_plan(inst, &plan)?;
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
        return Err(Error::Infeasible(format!(
            "initial plan violates {} constraint(s): {}",
            violations.len(),
            list.join("; ")
        )));
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcdSettings {
    /// Outer loop stops once an iteration saves less than this (J).
    pub eps0: f64,
    pub max_outer: usize,
    /// Outer iterations run before the `eps0` test may stop the loop.
    pub min_outer: usize,
    /// Accept a block update only if total energy does not rise.
    pub safeguard: bool,
    pub solver: SolverSettings,
    #[serde(skip)]
    pub path: PathModel,
}

impl Default for BcdSettings {
    fn default() -> Self {
        Self {
            eps0: 1e-2,
            max_outer: 30,
            min_outer: 1,
            safeguard: true,
            solver: SolverSettings::default(),
            path: PathModel::Free,
        }
    }
}

impl BcdSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0) {
            return Err(Error::invalid("eps0", "must be positive"));
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("max_outer", "must be at least 1"));
        }
        self.solver.time_split.validate()?;
        self.solver.beam.validate()?;
        self.solver.trajectory.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Offload,
    TimeSplit,
    Beamforming,
    Trajectory,
}

impl Block {
    pub const ORDER: [Block; 4] = [Block::Offload, Block::TimeSplit, Block::Beamforming, Block::Trajectory];

    pub fn label(self) -> &'static str {
        match self {
            Block::Offload => "offload",
            Block::TimeSplit => "time_split",
            Block::Beamforming => "beamforming",
            Block::Trajectory => "trajectory",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub outer: usize,
    pub block: Block,
    pub energy_before: f64,
    /// Total energy of the candidate, `None` if the block produced none.
    pub energy_candidate: Option<f64>,
    pub subproblem_objective: Option<f64>,
    pub inner_iterations: usize,
    pub accepted: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub energy: EnergyBreakdown,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct BcdTrace {
    pub initial: EnergyBreakdown,
    pub outer: Vec<OuterRecord>,
    pub steps: Vec<StepRecord>,
    pub converged: bool,
    pub wall_time: f64,
}

impl BcdTrace {
    /// Total energy before the loop and after every outer iteration.
    pub fn energies(&self) -> Vec<f64> {
        std::iter::once(self.initial.total)
            .chain(self.outer.iter().map(|o| o.energy.total))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug, Clone)]
pub struct BcdResult {
    pub plan: Plan,
    pub energy: EnergyBreakdown,
    pub trace: BcdTrace,
}

/// Feasibility tolerance of the forwarding certificate on accepted plans.
const CERT_TOL: f64 = 1e-6;

fn run_block(inst: &Instance, plan: &Plan, block: Block, settings: &BcdSettings) -> Result<Outcome> {
    let s = &settings.solver;
    match block {
        Block::Offload => solvers::solve_offload_schedule(inst, plan, s),
        Block::TimeSplit => solvers::solve_time_split(inst, plan, s),
        Block::Beamforming => solvers::solve_beamforming(inst, plan, s),
        Block::Trajectory => match &settings.path {
            PathModel::Free => solvers::solve_trajectory_power(inst, plan, s),
            PathModel::Fixed { vertices: v } => solvers::solve_fixed_path_speed(inst, plan, v, s),
        },
    }
}

/// Why a candidate cannot replace the current plan, if anything.
fn rejection(inst: &Instance, candidate: &Plan, energy: f64, current: f64, settings: &BcdSettings) -> Result<Option<String>> {
    let violations = validate_plan(inst, candidate)?;
    if let Some(v) = violations.first() {
        return Ok(Some(format!("infeasible candidate: {v}")));
    }
    if !forward_certified(inst, candidate, settings.solver.robustness, CERT_TOL)? {
        return Ok(Some("forwarding certificate fails".into()));
    }
    if settings.safeguard && energy > current + 1e-12 * current.abs() {
        return Ok(Some(format!("energy rises by {:.3e} J", energy - current)));
    }
    Ok(None)
}

/// Cycle the four blocks until an outer iteration saves less than `eps0`.
pub fn run_bcd(inst: &Instance, plan0: &Plan, settings: &BcdSettings) -> Result<BcdResult> {
    settings.validate()?;
    let clock = Instant::now();
    let cfg = &inst.cfg;
    let violations = validate_plan(inst, plan0)?;
    if let Some(v) = violations.first() {
        return Err(Error::Infeasible(format!("starting plan is infeasible: {v}")));
    }
    if !forward_certified(inst, plan0, settings.solver.robustness, CERT_TOL)? {
        return Err(Error::Infeasible("starting plan fails the forwarding certificate".into()));
    }

    let mut plan = plan0.clone();
    let mut energy = energy::energy_total(cfg, &plan)?;
    let mut trace = BcdTrace {
        initial: energy,
        ..BcdTrace::default()
    };

    for outer in 0..settings.max_outer {
        let start_total = energy.total;
        for block in Block::ORDER {
            let before = energy.total;
            let mut record = StepRecord {
                outer,
                block,
                energy_before: before,
                energy_candidate: None,
                subproblem_objective: None,
                inner_iterations: 0,
                accepted: false,
                note: String::new(),
            };
            match run_block(inst, &plan, block, settings) {
                Ok(out) => {
                    record.subproblem_objective = Some(out.objective);
                    record.inner_iterations = out.history.len();
                    match energy::energy_total(cfg, &out.plan) {
                        Ok(e) => {
                            record.energy_candidate = Some(e.total);
                            match rejection(inst, &out.plan, e.total, before, settings)? {
                                None => {
                                    record.accepted = true;
                                    plan = out.plan;
                                    energy = e;
                                }
                                Some(why) => record.note = why,
                            }
                        }
                        Err(err) => record.note = err.to_string(),
                    }
                }
                // relaxed schedule may be declared infeasible from numerical
                // noise even though the current schedule stands
                Err(err @ Error::Infeasible(_)) if block == Block::Offload => record.note = err.to_string(),
                Err(err @ Error::Solver(_)) => record.note = err.to_string(),
                Err(err) => {
                    return Err(match err {
                        Error::Infeasible(msg) => {
                            Error::Infeasible(format!("outer iteration {outer}, {} block: {msg}", block.label()))
                        }
                        other => other,
                    })
                }
            }
            log::info!(
                "outer {outer} {}: {} ({})",
                block.label(),
                if record.accepted { "accepted" } else { "kept" },
                record.energy_candidate.map_or("no candidate".into(), |e| format!("{e:.9} J"))
            );
            trace.steps.push(record);
        }
        let delta = start_total - energy.total;
        trace.outer.push(OuterRecord { outer, energy, delta });
        if outer + 1 >= settings.min_outer && delta < settings.eps0 {
            trace.converged = true;
            break;
        }
    }
    trace.wall_time = clock.elapsed().as_secs_f64();
    Ok(BcdResult { plan, energy, trace })
}
