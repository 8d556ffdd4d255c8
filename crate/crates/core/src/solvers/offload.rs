//! Offloading schedule and data amounts with the time split, powers, beams
//! and trajectory held fixed.

use super::{ground_bits, Outcome, SolverSettings};
use crate::conic::{self, Affine, ConicProgram, Var};
use crate::energy;
use crate::error::{Error, Result};
use crate::robustify;
use crate::scenario::{Instance, Plan};

/// Data amounts are modelled in Mbit.
const MBIT: f64 = 1e6;

/// Relative give on every capacity. Earlier blocks leave the current plan
/// tight on the ground, compute and forwarding caps at once; without the give
/// the interior-point solver reports that point infeasible.
const GIVE: f64 = 1.0 + 1e-8;

struct Model {
    prog: ConicProgram,
    chi: Vec<Vec<Option<Var>>>,
    bits: Vec<Vec<Option<Var>>>,
}

/// Largest slot load the fixed beam can forward; the Bernstein auxiliaries
/// sit at their least feasible values because the beam does not move here.
fn forward_capacity_snr(inst: &Instance, plan: &Plan, n: usize, settings: &SolverSettings) -> Result<f64> {
    let cfg = &inst.cfg;
    let snr = robustify::supported_snr(
        &plan.beams[n],
        &inst.link.g_hat[n],
        cfg.varrho,
        cfg.eps(n),
        settings.robustness,
    )?;
    Ok(snr.max(0.0))
}

/// Bits the fixed beam of slot `n` can forward at the current split.
fn forward_cap(inst: &Instance, plan: &Plan, n: usize, settings: &SolverSettings) -> Result<f64> {
    let cfg = &inst.cfg;
    let snr = forward_capacity_snr(inst, plan, n, settings)?;
    Ok(cfg.slot_len() * (1.0 - plan.rho[n]) * cfg.bandwidth_sat * (1.0 + snr).log2() / cfg.result_ratio)
}

/// Most bits node `k` can hand over in slot `n` when it owns the slot.
fn slot_cap(inst: &Instance, plan: &Plan, n: usize, k: usize, settings: &SolverSettings) -> Result<f64> {
    let cfg = &inst.cfg;
    let rho = plan.rho[n];
    let ground = ground_bits(cfg, &plan.waypoints[n + 1], k, plan.power[n][k], rho);
    let compute = rho * cfg.slot_len() * cfg.cpu_freq_max / cfg.c0;
    Ok(GIVE * ground.min(compute).min(forward_cap(inst, plan, n, settings)?))
}

fn objective_at(inst: &Instance, plan: &Plan) -> Result<f64> {
    let cfg = &inst.cfg;
    Ok(energy::energy_offload(cfg, plan) + cfg.eta1 * energy::energy_compute(cfg, plan)?)
}

/// `schedule = None` relaxes the indicators to `[0, 1]`.
fn build(inst: &Instance, plan: &Plan, schedule: Option<&[usize]>, settings: &SolverSettings) -> Result<Model> {
    let cfg = &inst.cfg;
    let (slots, nodes) = (cfg.slots, cfg.node_count);
    let tau = cfg.slot_len();
    // with a fixed schedule only the computation energy moves
    let reference = match schedule {
        None => objective_at(inst, plan).unwrap_or(1.0),
        Some(_) => cfg.eta1 * energy::energy_compute(cfg, plan).unwrap_or(1.0),
    };
    let scale = 1.0 / reference.max(1e-6);

    let mut prog = ConicProgram::new();
    let mut objective = Affine::default();
    let mut chi = vec![vec![None; nodes]; slots];
    let mut bits = vec![vec![None; nodes]; slots];

    for n in 0..slots {
        let rho = plan.rho[n];
        let q = plan.waypoints[n + 1];
        let mut load = Affine::default();
        let mut row = Affine::default();
        for k in 0..nodes {
            let cap = GIVE * ground_bits(cfg, &q, k, plan.power[n][k], rho) / MBIT;
            match schedule {
                None => {
                    let c = prog.var(format!("chi[{n},{k}]"));
                    let l = prog.var(format!("l[{n},{k}]"));
                    prog.ge(format!("chi>=0 n={n} k={k}"), c, 0.0);
                    prog.le(format!("chi<=1 n={n} k={k}"), c, 1.0);
                    prog.ge(format!("l>=0 n={n} k={k}"), l, 0.0);
                    prog.le(format!("rate n={n} k={k}"), l, c * cap);
                    objective += c * (rho * tau * plan.power[n][k] * scale);
                    row += c;
                    load += l;
                    chi[n][k] = Some(c);
                    bits[n][k] = Some(l);
                }
                Some(s) if s[n] == k => {
                    let l = prog.var(format!("l[{n},{k}]"));
                    prog.ge(format!("l>=0 n={n} k={k}"), l, 0.0);
                    prog.le(format!("rate n={n} k={k}"), l, cap);
                    load += l;
                    bits[n][k] = Some(l);
                }
                Some(_) => {}
            }
        }
        if schedule.is_none() {
            prog.equal(format!("one node n={n}"), row, 1.0);
        }

        prog.le(
            format!("compute n={n}"),
            load.clone() * (cfg.c0 * MBIT),
            GIVE * rho * tau * cfg.cpu_freq_max,
        );

        // computation energy epigraph u >= L^3
        let u = prog.var(format!("u[{n}]"));
        prog.pow_cone(format!("cube n={n}"), u, 1.0, load.clone(), 1.0 / 3.0);
        let e2_coeff = energy::compute_energy_slot(cfg, MBIT, rho) * cfg.eta1;
        objective += u * (e2_coeff * scale);

        // with the beam fixed the forwarding constraint is a cap on the load
        prog.le(
            format!("forward n={n}"),
            load,
            GIVE * forward_cap(inst, plan, n, settings)? / MBIT,
        );
    }

    for k in 0..nodes {
        let total: Affine = (0..slots).filter_map(|n| bits[n][k]).map(Affine::from).sum();
        prog.ge(format!("demand k={k}"), total, cfg.demand(k) / MBIT);
    }
    prog.minimize(objective);
    Ok(Model { prog, chi, bits })
}

/// Explain which demand cannot be met when the relaxation is infeasible.
fn diagnose(inst: &Instance, plan: &Plan, settings: &SolverSettings) -> Error {
    let cfg = &inst.cfg;
    for k in 0..cfg.node_count {
        let best: f64 = (0..cfg.slots)
            .map(|n| slot_cap(inst, plan, n, k, settings).unwrap_or(0.0))
            .sum();
        if best < cfg.demand(k) {
            return Error::Infeasible(format!(
                "demand D_{k} = {:.6e} bits cannot be met (at most {best:.6e} deliverable)",
                cfg.demand(k)
            ));
        }
    }
    Error::Infeasible("offloading relaxation infeasible: node demands compete for shared slots".into())
}

fn extract(inst: &Instance, plan: &Plan, model: &Model, sol: &conic::ConicSolution, schedule: &[usize]) -> Plan {
    let mut out = plan.clone();
    for n in 0..inst.cfg.slots {
        for k in 0..inst.cfg.node_count {
            let on = schedule[n] == k;
            out.chi[n][k] = if on { 1.0 } else { 0.0 };
            out.bits[n][k] = match (on, model.bits[n][k]) {
                (true, Some(v)) => (sol.value(v) * MBIT).max(0.0),
                _ => 0.0,
            };
        }
    }
    out
}

/// Data amounts for a fixed binary schedule (`schedule[n]` = node served in
/// slot `n`).
pub fn solve_offload_fixed(
    inst: &Instance,
    plan: &Plan,
    schedule: &[usize],
    settings: &SolverSettings,
) -> Result<Outcome> {
    let cfg = &inst.cfg;
    if schedule.len() != cfg.slots || schedule.iter().any(|&k| k >= cfg.node_count) {
        return Err(Error::Dimension("schedule must name one node per slot".into()));
    }
    let model = build(inst, plan, Some(schedule), settings)?;
    let sol = conic::solve(&model.prog, &settings.conic);
    let sol = match sol.require("offload data") {
        Ok(s) => s,
        Err(e) if e.is_infeasible() => {
            return Err(Error::Infeasible(format!(
                "schedule {schedule:?} cannot meet the node demands"
            )))
        }
        Err(e) => return Err(e),
    };
    let out = extract(inst, plan, &model, &sol, schedule);
    let objective = objective_at(inst, &out)?;
    Ok(Outcome {
        plan: out,
        objective,
        history: vec![objective],
    })
}

/// Binary schedule from relaxed indicators: per slot the largest entry wins,
/// ties going to the lowest node index; data amounts are then re-solved.
pub fn round_schedule(
    inst: &Instance,
    relaxed: &[Vec<f64>],
    plan: &Plan,
    settings: &SolverSettings,
) -> Result<Outcome> {
    let schedule: Vec<usize> = relaxed
        .iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] + 1e-9 {
                    best = k;
                }
            }
            best
        })
        .collect();
    let schedule = repair(inst, plan, relaxed, schedule, settings)?;
    solve_offload_fixed(inst, plan, &schedule, settings)
}

/// Hand slots to nodes that fall short of their demand after rounding. The
/// fixed-schedule data problem splits per slot, so a schedule is feasible iff
/// every node's summed slot capacity covers its demand. Each move takes the
/// slot with the largest relaxed indicator whose owner can spare it.
fn repair(
    inst: &Instance,
    plan: &Plan,
    relaxed: &[Vec<f64>],
    mut schedule: Vec<usize>,
    settings: &SolverSettings,
) -> Result<Vec<usize>> {
    let cfg = &inst.cfg;
    let caps: Vec<Vec<f64>> = (0..cfg.slots)
        .map(|n| (0..cfg.node_count).map(|k| slot_cap(inst, plan, n, k, settings)).collect())
        .collect::<Result<_>>()?;
    let surplus = |schedule: &[usize], k: usize| -> f64 {
        let have: f64 = (0..cfg.slots).filter(|&n| schedule[n] == k).map(|n| caps[n][k]).sum();
        have - cfg.demand(k)
    };
    for _ in 0..cfg.slots {
        let Some(k) = (0..cfg.node_count).find(|&k| surplus(&schedule, k) < 0.0) else {
            return Ok(schedule);
        };
        let pick = (0..cfg.slots)
            .filter(|&n| schedule[n] != k && caps[n][k] > 0.0)
            .filter(|&n| surplus(&schedule, schedule[n]) - caps[n][schedule[n]] >= 0.0)
            .max_by(|&a, &b| relaxed[a][k].total_cmp(&relaxed[b][k]).then(b.cmp(&a)));
        match pick {
            Some(n) => schedule[n] = k,
            None => break,
        }
    }
    match (0..cfg.node_count).find(|&k| surplus(&schedule, k) < 0.0) {
        None => Ok(schedule),
        Some(k) => Err(Error::Infeasible(format!(
            "rounded schedule leaves demand D_{k} unmet and no slot can be moved"
        ))),
    }
}

/// Relaxed schedule and data amounts in one conic program, then rounding.
pub fn solve_offload_schedule(inst: &Instance, plan: &Plan, settings: &SolverSettings) -> Result<Outcome> {
    let cfg = &inst.cfg;
    let model = build(inst, plan, None, settings)?;
    let sol = conic::solve(&model.prog, &settings.conic);
    let sol = match sol.require("offload relaxation") {
        Ok(s) => s,
        Err(e) if e.is_infeasible() => return Err(diagnose(inst, plan, settings)),
        Err(e) => return Err(e),
    };
    let relaxed: Vec<Vec<f64>> = (0..cfg.slots)
        .map(|n| {
            (0..cfg.node_count)
                .map(|k| model.chi[n][k].map_or(0.0, |v| sol.value(v)))
                .collect()
        })
        .collect();
    let mut out = match round_schedule(inst, &relaxed, plan, settings) {
        Err(e) if e.is_infeasible() => {
            // keep the current schedule and re-solve only the amounts
            let current: Option<Vec<usize>> = (0..cfg.slots).map(|n| plan.scheduled(n)).collect();
            match current {
                Some(schedule) => solve_offload_fixed(inst, plan, &schedule, settings)?,
                None => return Err(e),
            }
        }
        other => other?,
    };
    out.history.insert(0, sol.objective * objective_at(inst, plan).unwrap_or(1.0).max(1e-9));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn toy(nodes: usize, slots: usize) -> (Instance, Plan) {
        let cfg = ScenarioConfig {
            horizon: slots as f64,
            slots,
            node_count: nodes,
            antennas: 2,
            q_start: [0.0, 0.0],
            q_finish: [60.0, 0.0],
            nodes: (0..nodes).map(|k| [20.0 * k as f64 + 10.0, 30.0 * (k % 2) as f64]).collect(),
            demand: crate::scenario::PerItem::Uniform(1e6),
            ..ScenarioConfig::default()
        }
        .resolved()
        .unwrap();
        let inst = Instance::new(cfg, 3).unwrap();
        let plan = crate::bcd::init_plan(&inst).unwrap();
        (inst, plan)
    }

    #[test]
    fn single_node_always_scheduled() {
        let (inst, plan) = toy(1, 4);
        let out = solve_offload_schedule(&inst, &plan, &SolverSettings::default()).unwrap();
        assert!(out.plan.chi.iter().all(|row| row[0] == 1.0));
        let total: f64 = out.plan.bits.iter().map(|r| r[0]).sum();
        assert!(total >= 1e6 * (1.0 - 1e-7));
    }

    #[test]
    fn zero_demand_gives_zero_data() {
        let (mut inst, plan) = toy(2, 3);
        inst.cfg.demand = crate::scenario::PerItem::Uniform(0.0);
        let out = solve_offload_schedule(&inst, &plan, &SolverSettings::default()).unwrap();
        // interior-point residue only; nothing is worth spending energy on
        let total: f64 = out.plan.bits.iter().flatten().sum();
        assert!(total < 1e4, "{total} bits");
        let e2 = energy::energy_compute(&inst.cfg, &out.plan).unwrap();
        assert!(e2 < 1e-9, "{e2}");
    }

    #[test]
    fn rounding_takes_argmax_with_low_tie_break() {
        let (inst, plan) = toy(2, 3);
        let relaxed = vec![vec![0.6, 0.4], vec![0.4, 0.6], vec![0.5, 0.5]];
        let out = round_schedule(&inst, &relaxed, &plan, &SolverSettings::default()).unwrap();
        assert_eq!(out.plan.chi, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        let binary: Vec<Vec<f64>> = out.plan.chi.clone();
        let again = round_schedule(&inst, &binary, &out.plan, &SolverSettings::default()).unwrap();
        assert_eq!(again.plan.chi, binary);
    }

    #[test]
    fn unreachable_demand_is_named() {
        let (mut inst, plan) = toy(2, 3);
        inst.cfg.demand = crate::scenario::PerItem::List(vec![1e6, 1e12]);
        let err = solve_offload_schedule(&inst, &plan, &SolverSettings::default()).unwrap_err();
        assert!(err.is_infeasible());
        assert!(err.to_string().contains("D_1"), "{err}");
    }
}
