//! Forwarding beams: per-slot SDPs with a rank-one penalty, then rank-one
//! extraction and an exact rescaling onto the forwarding constraint.

use super::{rank_residual, Outcome, SolverSettings};
use crate::conic::{self, Affine, ConicProgram, ConicSolution, HermitianVar};
use crate::energy;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::robustify::{self, BernsteinForm, Robustness};
use crate::scenario::{Instance, Plan};

const POWER_GIVE: f64 = 1.0 + 1e-7;

/// One slot's penalized SDP in normalized units: `W = omega · W'` and the
/// link is scaled to unit norm, so the forwarding condition reads `B(W') ≥ 1`.
pub struct BeamProgram {
    pub prog: ConicProgram,
    pub w: HermitianVar,
    pub omega: f64,
}

/// Build the program for slot `n`; `None` when the slot forwards nothing.
/// `anchor` is the unit vector of the eigenvalue linearization and `zeta`
/// the penalty weight; `power_cap` toggles the UAV power budget.
pub fn beam_program(
    inst: &Instance,
    plan: &Plan,
    n: usize,
    anchor: &CVector,
    zeta: f64,
    power_cap: bool,
    rule: Robustness,
) -> Result<Option<BeamProgram>> {
    let cfg = &inst.cfg;
    let load = plan.slot_bits(n);
    if load <= 0.0 {
        return Ok(None);
    }
    let gamma = robustify::forward_threshold(cfg, load, plan.rho[n])?;
    let g = &inst.link.g_hat[n];
    let gnorm2 = g.norm_squared();
    let g_unit = g / C64::new(gnorm2.sqrt(), 0.0);
    let omega = gamma / gnorm2;
    let m = cfg.antennas;

    let mut prog = ConicProgram::new();
    let w = HermitianVar::new(&mut prog, "W", m);
    w.constrain_psd(&mut prog, "W psd");
    let surrogate = |b: &CMatrix| robustify::quad_surrogate(b, &g_unit).expect("basis is hermitian");
    let zsum = w.linear(|b| surrogate(b).zsum);

    let condition = match rule {
        Robustness::Nominal => zsum,
        Robustness::Bernstein(form) => bernstein_rows(&mut prog, &w, cfg.varrho, cfg.eps(n), form, zsum, &surrogate),
    };
    prog.ge(format!("forward n={n}"), condition, 1.0);
    if power_cap {
        // a split chosen against full power puts the optimum exactly on the
        // budget; the give keeps that point inside and is removed on extraction
        prog.le(format!("power n={n}"), w.trace(), POWER_GIVE * cfg.uav_power_max / omega);
    }
    let weight = (1.0 - plan.rho[n]) * cfg.slot_len();
    let objective = w.trace() * (weight + zeta) - w.inner(&linalg::outer(anchor)) * zeta;
    prog.minimize(objective);
    Ok(Some(BeamProgram { prog, w, omega }))
}

/// Rows (a)–(c) of the Bernstein condition with `Q`, `r` linear in `W'`;
/// returns the left side of (a) without the threshold term.
fn bernstein_rows(
    prog: &mut ConicProgram,
    w: &HermitianVar,
    xi: f64,
    eps: f64,
    form: BernsteinForm,
    zsum: Affine,
    surrogate: &dyn Fn(&CMatrix) -> robustify::QuadSurrogate,
) -> Affine {
    let m = w.dim;
    // Q and r are O(xi^2) and O(xi); work with Q/s and r/s so the
    // auxiliaries are O(1).
    let s = if xi > 0.0 { xi * xi } else { 1.0 };
    let parts = |b: &CMatrix| robustify::scaled_parts(&surrogate(b), xi);
    let q_entries = w.linear_vec(m * m, |b| {
        let (q, _) = parts(b);
        q.iter().map(|v| v / s).collect()
    });
    let r_entries = w.linear_vec(m, |b| {
        let (_, r) = parts(b);
        r.iter().map(|v| v / s).collect()
    });
    let qhat = |i: usize, j: usize| q_entries[j * m + i].clone();

    let x = prog.var("x");
    let y = prog.var("y");
    let mut stack: Vec<Affine> = Vec::with_capacity(m * m + m);
    for j in 0..m {
        for i in 0..m {
            stack.push(qhat(i, j));
        }
    }
    stack.extend(r_entries.iter().map(|e| e.clone() * std::f64::consts::SQRT_2));
    prog.soc("bernstein (b)", x, stack);
    prog.psd("bernstein (c)", m, |i, j| {
        let e = qhat(i, j);
        if i == j {
            e + y
        } else {
            e
        }
    });
    let (c1, c2) = form.coefficients(eps);
    let trace: Affine = (0..m).map(|i| qhat(i, i)).sum();
    (trace - x * c1 + y * c2) * s + zsum
}

fn principal_unit(w: &CMatrix) -> Option<CVector> {
    if linalg::real_trace(w) <= 0.0 {
        return None;
    }
    Some(linalg::principal_eigenpair(w).1)
}

fn min_power_certificate(inst: &Instance, plan: &Plan, n: usize, rule: Robustness, settings: &SolverSettings) -> String {
    let g = &inst.link.g_hat[n];
    let unit = g / C64::new(g.norm(), 0.0);
    match beam_program(inst, plan, n, &unit, 0.0, false, rule) {
        Ok(Some(bp)) => {
            let sol = conic::solve(&bp.prog, &settings.conic);
            if sol.status.has_solution() {
                let need = bp.omega * linalg::real_trace(&bp.w.value(&sol));
                format!("needs at least {need:.6e} W")
            } else {
                "no beam meets the threshold".to_string()
            }
        }
        _ => "no beam meets the threshold".to_string(),
    }
}

struct SlotResult {
    beam: CMatrix,
    history: Vec<f64>,
}

fn solve_slot(inst: &Instance, plan: &Plan, n: usize, settings: &SolverSettings) -> Result<SlotResult> {
    let cfg = &inst.cfg;
    let m = cfg.antennas;
    let rule = settings.robustness;
    let sca = settings.beam;
    let load = plan.slot_bits(n);
    if load <= 0.0 {
        return Ok(SlotResult {
            beam: CMatrix::zeros(m, m),
            history: vec![0.0],
        });
    }
    let g = &inst.link.g_hat[n];
    let mut anchor = principal_unit(&plan.beams[n]).unwrap_or_else(|| g / C64::new(g.norm(), 0.0));
    let mut zeta = sca.penalty_init * cfg.eta1;
    let mut last_residual = f64::INFINITY;
    let mut history = Vec::new();
    let weight = cfg.eta1 * (1.0 - plan.rho[n]) * cfg.slot_len();
    let mut current: Option<(CMatrix, f64)> = None;

    for _ in 0..sca.max_iters {
        let bp = beam_program(inst, plan, n, &anchor, zeta, true, rule)?.expect("slot has data");
        let sol: ConicSolution = conic::solve(&bp.prog, &settings.conic);
        let sol = match sol.require("beamforming") {
            Ok(s) => s,
            Err(e) if e.is_infeasible() => {
                return Err(Error::Infeasible(format!(
                    "slot {n}: forwarding threshold unreachable within {} W; {}",
                    cfg.uav_power_max,
                    min_power_certificate(inst, plan, n, rule, settings)
                )))
            }
            Err(e) => return Err(e),
        };
        let w_norm = bp.w.value(&sol);
        let residual = rank_residual(&w_norm);
        history.push(weight * bp.omega * linalg::real_trace(&w_norm));
        current = Some((w_norm.clone(), bp.omega));
        if residual <= settings.rank_tol {
            break;
        }
        if residual > 0.5 * last_residual {
            zeta *= sca.penalty_growth;
        }
        last_residual = residual;
        anchor = principal_unit(&w_norm).unwrap_or(anchor);
    }

    let (w_norm, omega) = current.expect("at least one iteration");
    let (lam, v) = linalg::principal_eigenpair(&w_norm);
    let rank_one = linalg::outer(&v) * C64::new(lam.max(0.0) * omega, 0.0);
    let supported = robustify::supported_snr(&rank_one, g, cfg.varrho, cfg.eps(n), rule)?;
    let gamma = robustify::forward_threshold(cfg, load, plan.rho[n])?;
    if !(supported > 0.0) {
        return Err(Error::Solver(format!("slot {n}: extracted beam supports no forwarding")));
    }
    let beam = rank_one * C64::new(gamma / supported * (1.0 + 1e-12), 0.0);
    let beam = (&beam + beam.adjoint()) * C64::new(0.5, 0.0);
    let mut beam = beam;
    let mut power = linalg::real_trace(&beam);
    if power > cfg.uav_power_max && power <= cfg.uav_power_max * POWER_GIVE {
        beam *= C64::new(cfg.uav_power_max / power, 0.0);
        power = linalg::real_trace(&beam);
    }
    if power > cfg.uav_power_max * (1.0 + 1e-9) {
        return Err(Error::Infeasible(format!(
            "slot {n}: rank-one beam needs {power:.6e} W above the {} W budget",
            cfg.uav_power_max
        )));
    }
    history.push(weight * power);
    Ok(SlotResult { beam, history })
}

/// Optimize every slot's beam independently.
pub fn solve_beamforming(inst: &Instance, plan: &Plan, settings: &SolverSettings) -> Result<Outcome> {
    settings.beam.validate()?;
    let results = settings
        .exec
        .map_range(inst.cfg.slots, |n| solve_slot(inst, plan, n, settings));
    let mut out = plan.clone();
    let mut iterations = 0;
    for (n, r) in results.into_iter().enumerate() {
        let r = r?;
        out.beams[n] = r.beam;
        iterations = iterations.max(r.history.len());
    }
    log::debug!("beamforming: at most {iterations} penalty rounds per slot");
    let objective = inst.cfg.eta1 * energy::energy_forward(&inst.cfg, &out);
    Ok(Outcome {
        plan: out,
        objective,
        history: vec![inst.cfg.eta1 * energy::energy_forward(&inst.cfg, plan), objective],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn desk() -> (Instance, Plan) {
        let cfg = ScenarioConfig::desk().resolved().unwrap();
        let inst = Instance::new(cfg, 7).unwrap();
        let plan = crate::bcd::init_plan(&inst).unwrap();
        (inst, plan)
    }

    #[test]
    fn no_data_gives_zero_beam() {
        let (inst, mut plan) = desk();
        plan.bits[0].iter_mut().for_each(|b| *b = 0.0);
        let out = solve_beamforming(&inst, &plan, &SolverSettings::default()).unwrap();
        assert_eq!(linalg::real_trace(&out.plan.beams[0]), 0.0);
    }

    #[test]
    fn single_antenna_closed_form() {
        let cfg = ScenarioConfig {
            antennas: 1,
            ..ScenarioConfig::desk()
        }
        .resolved()
        .unwrap();
        let inst = Instance::new(cfg, 7).unwrap();
        let plan = crate::bcd::init_plan(&inst).unwrap();
        let settings = SolverSettings {
            robustness: Robustness::Nominal,
            ..SolverSettings::default()
        };
        let out = solve_beamforming(&inst, &plan, &settings).unwrap();
        for n in 0..inst.cfg.slots {
            let gamma = robustify::forward_threshold(&inst.cfg, plan.slot_bits(n), plan.rho[n]).unwrap();
            let want = gamma / inst.link.g_hat[n].norm_squared();
            let got = out.plan.beams[n][(0, 0)].re;
            assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn beams_are_rank_one_and_certified() {
        let (inst, plan) = desk();
        let settings = SolverSettings::default();
        let out = solve_beamforming(&inst, &plan, &settings).unwrap();
        for w in &out.plan.beams {
            assert!(rank_residual(w) <= 1e-4);
        }
        assert!(super::super::forward_certified(&inst, &out.plan, settings.robustness, 1e-9).unwrap());
        assert!(out.objective < cfg_forward(&inst, &plan));
    }

    fn cfg_forward(inst: &Instance, plan: &Plan) -> f64 {
        inst.cfg.eta1 * energy::energy_forward(&inst.cfg, plan)
    }

    #[test]
    fn joint_and_separate_solves_match() {
        let (inst, plan) = desk();
        let rule = Robustness::default();
        let settings = SolverSettings::default();
        let mut joint = ConicProgram::new();
        let mut parts = Vec::new();
        for n in 0..4 {
            let g = &inst.link.g_hat[n];
            let anchor = g / C64::new(g.norm(), 0.0);
            let bp = beam_program(&inst, &plan, n, &anchor, 1.0, true, rule).unwrap().unwrap();
            let alone = conic::solve(&bp.prog, &settings.conic);
            let offset = joint.append(&bp.prog);
            parts.push((offset, bp.prog, alone.objective));
        }
        let sol = conic::solve(&joint, &settings.conic);
        for (offset, prog, alone) in parts {
            let vals = &sol.values[offset..offset + prog.num_vars()];
            let together = prog.objective.eval(vals);
            assert!((together - alone).abs() < 1e-7 * alone.abs().max(1.0), "{together} vs {alone}");
        }
    }
}
