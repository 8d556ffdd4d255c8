use ntn_core::bcd::{self, BcdSettings};
use ntn_core::evaluation::{self, ExperimentReport, Scheme};
use ntn_core::scenario::validate_plan;
use ntn_core::solvers::distance_to_path;
use ntn_core::{Exec, Instance, ScenarioConfig};

fn run(cfg: ScenarioConfig, scheme: Scheme, exec: Exec, mc: usize) -> ExperimentReport {
    let inst = Instance::new(cfg, 11).unwrap();
    let plan0 = bcd::init_plan(&inst).unwrap();
    let mut s = BcdSettings::default();
    s.solver.exec = exec;
    evaluation::run_scheme(&inst, &plan0, &s, scheme, mc).unwrap()
}

fn desk() -> ScenarioConfig {
    ScenarioConfig::desk().resolved().unwrap()
}

#[test]
fn without_phase_error_robust_equals_nominal() {
    let cfg = ScenarioConfig { varrho: 0.0, ..desk() };
    let robust = run(cfg.clone(), Scheme::ROBUST, Exec::Sequential, 0);
    let nominal = run(cfg, Scheme::NONROBUST, Exec::Sequential, 0);
    let rel = (robust.energy.total - nominal.energy.total).abs() / nominal.energy.total;
    assert!(rel < 1e-2, "robust {} vs nominal {}", robust.energy.total, nominal.energy.total);
}

#[test]
fn fixed_path_plan_stays_on_the_path() {
    let r = run(desk(), Scheme::FIXED, Exec::Sequential, 0);
    let path = r.path.as_ref().unwrap();
    for q in &r.plan.waypoints {
        assert!(distance_to_path(path, [q[0], q[1]]) < 1e-6, "{q:?} off the path");
    }
    // arc position along the path never decreases
    let arc = |p: [f64; 2]| {
        let mut best = (f64::INFINITY, 0.0);
        let mut walked = 0.0;
        for seg in path.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let t = (((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len)).clamp(0.0, 1.0);
            let d = ((a[0] + t * (b[0] - a[0]) - p[0]).powi(2) + (a[1] + t * (b[1] - a[1]) - p[1]).powi(2)).sqrt();
            if d < best.0 - 1e-9 {
                best = (d, walked + t * len);
            }
            walked += len;
        }
        best.1
    };
    let s: Vec<f64> = r.plan.waypoints.iter().map(|q| arc([q[0], q[1]])).collect();
    assert!(s.windows(2).all(|w| w[1] >= w[0] - 1e-6), "{s:?}");
}

#[test]
fn fixed_path_costs_at_least_free_flight() {
    let free = run(desk(), Scheme::ROBUST, Exec::Sequential, 0);
    let fixed = run(desk(), Scheme::FIXED, Exec::Sequential, 0);
    assert!(fixed.energy.e4 >= free.energy.e4);
}

#[test]
fn runs_are_deterministic() {
    let a = run(desk(), Scheme::ROBUST, Exec::Sequential, 1000);
    let b = run(desk(), Scheme::ROBUST, Exec::Sequential, 1000);
    assert_eq!(a.trace.energies(), b.trace.energies());
    assert_eq!(a.plan.to_json(), b.plan.to_json());
    assert_eq!(a.completion.unwrap().outage, b.completion.unwrap().outage);
}

#[test]
fn sequential_and_parallel_agree() {
    let seq = run(desk(), Scheme::ROBUST, Exec::Sequential, 2000);
    let par = run(desk(), Scheme::ROBUST, Exec::Parallel, 2000);
    assert_eq!(seq.plan.to_json(), par.plan.to_json());
    let (hs, hp) = (seq.completion.unwrap(), par.completion.unwrap());
    assert_eq!(hs.outage, hp.outage);
    assert_eq!(hs.counts, hp.counts);
}

#[test]
fn every_scheme_returns_a_valid_plan() {
    for scheme in [Scheme::ROBUST, Scheme::NONROBUST, Scheme::FIXED, Scheme::FIXED_NONROBUST] {
        let cfg = desk();
        let r = run(cfg.clone(), scheme, Exec::Sequential, 0);
        let inst = Instance::new(cfg, 11).unwrap();
        let v = validate_plan(&inst, &r.plan).unwrap();
        assert!(v.is_empty(), "{scheme}: {v:?}");
        let e = r.trace.energies();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{scheme}: {e:?}");
    }
}

#[test]
fn plan_survives_a_json_round_trip() {
    let r = run(desk(), Scheme::ROBUST, Exec::Sequential, 0);
    let back = ntn_core::Plan::from_json(&r.plan.to_json()).unwrap();
    assert_eq!(back.to_json(), r.plan.to_json());
    let inst = Instance::new(desk(), 11).unwrap();
    assert!(validate_plan(&inst, &back).unwrap().is_empty());
}
