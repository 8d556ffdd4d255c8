//! Translation to the clarabel interior-point solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{Affine, ConicProgram, ConicSettings, ConicSolution, Constraint, Status};

/// Rows `s = b - A x` collected cone by cone.
#[derive(Default)]
struct Rows {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn push(&mut self, e: &Affine, scale: f64) {
        let r = self.b.len();
        for &(i, c) in &e.compressed().terms {
            self.rows.push(r);
            self.cols.push(i);
            self.vals.push(-c * scale);
        }
        self.b.push(e.constant * scale);
    }
}

fn cone_rows(c: &Constraint, rows: &mut Rows) -> SupportedConeT<f64> {
    use SupportedConeT::*;
    match c {
        Constraint::Zero(e) => {
            rows.push(e, 1.0);
            ZeroConeT(1)
        }
        Constraint::NonNeg(e) => {
            rows.push(e, 1.0);
            NonnegativeConeT(1)
        }
        Constraint::Soc { t, x } => {
            rows.push(t, 1.0);
            x.iter().for_each(|e| rows.push(e, 1.0));
            SecondOrderConeT(1 + x.len())
        }
        Constraint::RotatedSoc { u, v, x } => {
            rows.push(&(u.clone() + v.clone()), 1.0);
            rows.push(&(u.clone() - v.clone()), 1.0);
            x.iter().for_each(|e| rows.push(e, 2.0));
            SecondOrderConeT(2 + x.len())
        }
        Constraint::Exp { x, y, z } => {
            rows.push(x, 1.0);
            rows.push(y, 1.0);
            rows.push(z, 1.0);
            ExponentialConeT()
        }
        Constraint::Pow { x, y, z, alpha } => {
            rows.push(x, 1.0);
            rows.push(y, 1.0);
            rows.push(z, 1.0);
            PowerConeT(*alpha)
        }
        Constraint::Psd { dim, upper } => {
            let mut k = 0;
            for j in 0..*dim {
                for i in 0..=j {
                    rows.push(&upper[k], if i == j { 1.0 } else { std::f64::consts::SQRT_2 });
                    k += 1;
                }
            }
            PSDTriangleConeT(*dim)
        }
    }
}

fn map_status(s: SolverStatus) -> Status {
    match s {
        SolverStatus::Solved => Status::Optimal,
        SolverStatus::AlmostSolved => Status::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Status::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => Status::Unbounded,
        _ => Status::Failed,
    }
}

fn failed(prog: &ConicProgram, message: String) -> ConicSolution {
    ConicSolution {
        status: Status::Failed,
        objective: f64::NAN,
        values: vec![f64::NAN; prog.num_vars()],
        solve_time: 0.0,
        iterations: 0,
        message: Some(message),
    }
}

/// Largest constraint violation and relative duality gap for which a stalled
/// run is reported as inaccurate instead of failed.
const STALL_FEAS: f64 = 1e-7;
const STALL_GAP: f64 = 1e-4;

/// Solve with the native backend. Deterministic for identical inputs.
pub fn solve(prog: &ConicProgram, settings: &ConicSettings) -> ConicSolution {
    if let Err(e) = prog.check() {
        return failed(prog, e.to_string());
    }
    let n = prog.num_vars();

    // Equalities and inequalities are merged into one cone each, placed first.
    let mut rows = Rows::default();
    let mut cones = Vec::new();
    let zeros: Vec<_> = prog
        .constraints
        .iter()
        .filter_map(|c| match &c.constraint {
            Constraint::Zero(e) => Some(e),
            _ => None,
        })
        .collect();
    let nonneg: Vec<_> = prog
        .constraints
        .iter()
        .filter_map(|c| match &c.constraint {
            Constraint::NonNeg(e) => Some(e),
            _ => None,
        })
        .collect();
    if !zeros.is_empty() {
        zeros.iter().for_each(|e| rows.push(e, 1.0));
        cones.push(SupportedConeT::ZeroConeT(zeros.len()));
    }
    if !nonneg.is_empty() {
        nonneg.iter().for_each(|e| rows.push(e, 1.0));
        cones.push(SupportedConeT::NonnegativeConeT(nonneg.len()));
    }
    for c in &prog.constraints {
        if !matches!(c.constraint, Constraint::Zero(_) | Constraint::NonNeg(_)) {
            cones.push(cone_rows(&c.constraint, &mut rows));
        }
    }

    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows.rows, rows.cols, rows.vals);
    let p = CscMatrix::zeros((n, n));
    let mut q = vec![0.0; n];
    for (i, c) in prog.objective.compressed().terms {
        q[i] += c;
    }

    let built = DefaultSettingsBuilder::default()
        .verbose(settings.verbose)
        .tol_gap_abs(settings.tol_gap_abs)
        .tol_gap_rel(settings.tol_gap_rel)
        .tol_feas(settings.tol_feas)
        .max_iter(settings.max_iter)
        .time_limit(settings.time_limit)
        .max_threads(1)
        .build();
    let solver_settings = match built {
        Ok(s) => s,
        Err(e) => return failed(prog, format!("settings: {e}")),
    };
    let mut solver = match DefaultSolver::new(&p, &q, &a, &rows.b, &cones, solver_settings) {
        Ok(s) => s,
        Err(e) => return failed(prog, format!("setup: {e}")),
    };
    // the PSD cone's LAPACK calls panic on non-finite iterates
    let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        solver.solve();
        solver
    }));
    let solver = match run {
        Ok(s) => s,
        Err(_) => return failed(prog, "backend panicked on a non-finite iterate".into()),
    };
    let sol = &solver.solution;
    let mut status = map_status(sol.status);
    // a stalled run whose iterate is primal feasible with a small duality gap
    // is still usable; callers re-validate everything they accept
    if status == Status::Failed
        && matches!(
            sol.status,
            SolverStatus::InsufficientProgress | SolverStatus::MaxIterations | SolverStatus::MaxTime
        )
        && sol.x.iter().all(|v| v.is_finite())
    {
        let gap = (sol.obj_val - sol.obj_val_dual).abs() / (1.0 + sol.obj_val.abs());
        if prog.max_violation(&sol.x) <= STALL_FEAS && gap <= STALL_GAP {
            status = Status::Inaccurate;
        }
    }
    let message = match status {
        Status::Optimal => None,
        _ => Some(format!("{:?}", sol.status)),
    };
    ConicSolution {
        status,
        objective: sol.obj_val + prog.objective.constant,
        values: sol.x.clone(),
        solve_time: sol.solve_time,
        iterations: sol.iterations,
        message,
    }
}
