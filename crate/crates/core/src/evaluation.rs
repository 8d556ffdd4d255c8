//! Baseline schemes, Monte Carlo completion statistics, parameter sweeps and
//! CSV export.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bcd::{self, BcdSettings, BcdTrace};
use crate::energy::{self, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::robustify::{self, Robustness};
use crate::rng::SeedTree;
use crate::scenario::{Instance, PerItem, Plan, ScenarioConfig};
use crate::solvers::PathModel;

/// Robust or nominal forwarding, optimized or frozen trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scheme {
    pub robust: bool,
    pub fixed_trajectory: bool,
}

impl Scheme {
    pub const ROBUST: Scheme = Scheme {
        robust: true,
        fixed_trajectory: false,
    };
    pub const NONROBUST: Scheme = Scheme {
        robust: false,
        fixed_trajectory: false,
    };
    pub const FIXED: Scheme = Scheme {
        robust: true,
        fixed_trajectory: true,
    };
    pub const FIXED_NONROBUST: Scheme = Scheme {
        robust: false,
        fixed_trajectory: true,
    };

    pub fn label(self) -> &'static str {
        match (self.robust, self.fixed_trajectory) {
            (true, false) => "robust/optimized-trajectory",
            (false, false) => "non-robust/optimized-trajectory",
            (true, true) => "robust/fixed-trajectory",
            (false, true) => "non-robust/fixed-trajectory",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-slot Monte Carlo summary of forwarded bits over required bits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionHistogram {
    pub samples: usize,
    /// Fraction of draws with ratio below one, per slot (zero for idle slots).
    pub outage: Vec<f64>,
    pub mean: f64,
    /// `(probability, ratio)` pairs over all busy slots and draws.
    pub quantiles: Vec<(f64, f64)>,
    /// Bin edges, one more than `counts`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl CompletionHistogram {
    pub fn worst_outage(&self) -> f64 {
        self.outage.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub scheme: Scheme,
    pub energy: EnergyBreakdown,
    /// Flying speed per slot (m/s).
    pub speed: Vec<f64>,
    /// Offloaded bits per slot.
    pub offload: Vec<f64>,
    /// `[E1, E2, E3, E4]` per slot.
    pub slot_energy: Vec<[f64; 4]>,
    pub completion: Option<CompletionHistogram>,
    /// Frozen path of a fixed-trajectory run.
    pub path: Option<Vec<[f64; 2]>>,
    pub plan: Plan,
    pub trace: BcdTrace,
}

const QUANTILES: [f64; 7] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9];
const BINS: usize = 40;

/// Ratio of forwarded to required bits for every slot under sampled phase
/// errors. Slot `n` draws from stream `completion/n`, so schemes evaluated
/// with the same seeds see the same errors.
pub fn completion_histogram(
    inst: &Instance,
    plan: &Plan,
    samples: usize,
    seeds: &SeedTree,
    exec: Exec,
) -> Result<CompletionHistogram> {
    if samples < robustify::MC_CHUNK {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples, got {samples}",
            robustify::MC_CHUNK
        )));
    }
    let cfg = &inst.cfg;
    plan.check_dims(cfg)?;
    let per_slot: Vec<Option<Vec<f64>>> = (0..cfg.slots)
        .map(|n| {
            let required = cfg.result_ratio * plan.slot_bits(n);
            if required <= 0.0 {
                return None;
            }
            let beam = robustify::principal_beam(&plan.beams[n]);
            let capacity = (1.0 - plan.rho[n]) * cfg.slot_len() * cfg.bandwidth_sat;
            let snr = robustify::sample_snr(
                &beam,
                &inst.link.g_hat[n],
                cfg.varrho,
                samples,
                seeds,
                &format!("completion/{n}"),
                exec,
            );
            Some(snr.into_iter().map(|s| capacity * (1.0 + s).log2() / required).collect())
        })
        .collect();

    let outage = per_slot
        .iter()
        .map(|r| r.as_ref().map_or(0.0, |r| r.iter().filter(|&&x| x < 1.0).count() as f64 / samples as f64))
        .collect();
    let mut all: Vec<f64> = per_slot.into_iter().flatten().flatten().collect();
    all.sort_by(f64::total_cmp);
    if all.is_empty() {
        return Ok(CompletionHistogram {
            samples,
            outage,
            mean: 1.0,
            quantiles: QUANTILES.iter().map(|&p| (p, 1.0)).collect(),
            edges: vec![1.0, 1.0],
            counts: vec![0],
        });
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let quantiles = QUANTILES
        .iter()
        .map(|&p| {
            let idx = ((p * all.len() as f64).ceil() as usize).clamp(1, all.len()) - 1;
            (p, all[idx])
        })
        .collect();
    let (lo, hi) = (all[0], all[all.len() - 1]);
    let width = if hi > lo { (hi - lo) / BINS as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=BINS).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; BINS];
    for &x in &all {
        let i = (((x - lo) / width) as usize).min(BINS - 1);
        counts[i] += 1;
    }
    Ok(CompletionHistogram {
        samples,
        outage,
        mean,
        quantiles,
        edges,
        counts,
    })
}

/// Full pipeline for one scheme from `plan0`, with completion statistics when
/// `mc_samples` is nonzero.
pub fn run_scheme(
    inst: &Instance,
    plan0: &Plan,
    settings: &BcdSettings,
    scheme: Scheme,
    mc_samples: usize,
) -> Result<ExperimentReport> {
    let cfg = &inst.cfg;
    let mut s = settings.clone();
    if !scheme.robust {
        s.solver.robustness = Robustness::Nominal;
    }
    let path = if scheme.fixed_trajectory {
        let vertices = bcd::init_path(cfg)?;
        s.path = PathModel::Fixed {
            vertices: vertices.clone(),
        };
        Some(vertices)
    } else {
        s.path = PathModel::Free;
        None
    };
    let out = bcd::run_bcd(inst, plan0, &s)?;
    let completion = match mc_samples {
        0 => None,
        m => Some(completion_histogram(inst, &out.plan, m, &inst.seeds(), s.solver.exec)?),
    };
    Ok(ExperimentReport {
        scheme,
        energy: out.energy,
        speed: (0..cfg.slots).map(|n| out.plan.step(n) / cfg.slot_len()).collect(),
        offload: (0..cfg.slots).map(|n| out.plan.slot_bits(n)).collect(),
        slot_energy: energy::slot_energies(cfg, &out.plan),
        completion,
        path,
        plan: out.plan,
        trace: out.trace,
    })
}

/// The same pipeline with the forwarding constraint enforced only at the
/// estimated link.
pub fn run_nonrobust(inst: &Instance, plan0: &Plan, settings: &BcdSettings, mc_samples: usize) -> Result<ExperimentReport> {
    run_scheme(inst, plan0, settings, Scheme::NONROBUST, mc_samples)
}

/// Trajectory frozen to the initial tour; only the spacing along it moves.
pub fn run_fixed_trajectory(
    inst: &Instance,
    plan0: &Plan,
    settings: &BcdSettings,
    robust: bool,
    mc_samples: usize,
) -> Result<ExperimentReport> {
    let scheme = Scheme {
        robust,
        fixed_trajectory: true,
    };
    run_scheme(inst, plan0, settings, scheme, mc_samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Mission time (s); the slot length stays fixed, so the slot count scales.
    #[serde(rename = "T")]
    Horizon,
    /// Per-node demand (bits).
    #[serde(rename = "D_k")]
    Demand,
    /// UAV CPU frequency (cycles/s).
    #[serde(rename = "f_max")]
    CpuFreq,
    /// Outage probability of every slot.
    #[serde(rename = "eps")]
    Eps,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" => Ok(SweepParam::Horizon),
            "D_k" | "D" => Ok(SweepParam::Demand),
            "f_max" => Ok(SweepParam::CpuFreq),
            "eps" => Ok(SweepParam::Eps),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep parameter `{other}` (expected T, D_k, f_max or eps)"
            ))),
        }
    }
}

/// `cfg` with `param` set to `value`.
pub fn with_param(cfg: &ScenarioConfig, param: SweepParam, value: f64) -> Result<ScenarioConfig> {
    let mut c = cfg.clone();
    match param {
        SweepParam::Horizon => {
            let slots = (value / cfg.slot_len()).round();
            if slots < 1.0 {
                return Err(Error::invalid("T", "shorter than one slot"));
            }
            c.horizon = value;
            c.slots = slots as usize;
        }
        SweepParam::Demand => c.demand = PerItem::Uniform(value),
        SweepParam::CpuFreq => c.cpu_freq_max = value,
        SweepParam::Eps => c.eps = PerItem::Uniform(value),
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub report: ExperimentReport,
}

/// Robust optimized-trajectory run per value, all with `seed`.
pub fn sweep(
    cfg: &ScenarioConfig,
    param: SweepParam,
    values: &[f64],
    settings: &BcdSettings,
    seed: u64,
    mc_samples: usize,
) -> Result<Vec<SweepPoint>> {
    let configs = values
        .iter()
        .map(|&v| with_param(cfg, param, v))
        .collect::<Result<Vec<_>>>()?;
    let runs = settings.solver.exec.map(configs, |c| -> Result<ExperimentReport> {
        let inst = Instance::new(c, seed)?;
        let plan0 = bcd::init_plan(&inst)?;
        run_scheme(&inst, &plan0, settings, Scheme::ROBUST, mc_samples)
    });
    values
        .iter()
        .zip(runs)
        .map(|(&value, r)| r.map(|report| SweepPoint { value, report }))
        .collect()
}

/// Twelve significant digits.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let v: f64 = format!("{x:.11e}").parse().expect("round trip");
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if plain.len() <= sci.len() {
        plain
    } else {
        sci
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Waypoint positions after each slot with the slot speed.
pub fn write_trajectory_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let rows = (0..report.speed.len()).map(|n| {
        let q = report.plan.waypoints[n + 1];
        vec![(n + 1).to_string(), fmt_num(q[0]), fmt_num(q[1]), fmt_num(report.speed[n])]
    });
    write_rows(path, &["slot", "x", "y", "speed"], rows)
}

pub fn write_offload_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let nodes = report.plan.bits.first().map_or(0, Vec::len);
    let mut header = vec!["slot".to_string(), "total".to_string()];
    header.extend((0..nodes).map(|k| format!("node_{}", k + 1)));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = report.plan.bits.iter().enumerate().map(|(n, row)| {
        let mut r = vec![(n + 1).to_string(), fmt_num(report.offload[n])];
        r.extend(row.iter().map(|&b| fmt_num(b)));
        r
    });
    write_rows(path, &header, rows)
}

/// Per-slot components, then a `total` row with the weighted objective.
pub fn write_energy_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let e = &report.energy;
    let rows = report
        .slot_energy
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let mut r = vec![(n + 1).to_string()];
            r.extend(s.iter().map(|&x| fmt_num(x)));
            r.push(String::new());
            r
        })
        .chain(std::iter::once(vec![
            "total".to_string(),
            fmt_num(e.e1),
            fmt_num(e.e2),
            fmt_num(e.e3),
            fmt_num(e.e4),
            fmt_num(e.total),
        ]));
    write_rows(path, &["slot", "E1", "E2", "E3", "E4", "weighted"], rows)
}

pub fn write_histogram_csv(hist: &CompletionHistogram, path: &Path) -> Result<()> {
    let rows = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| vec![fmt_num(hist.edges[i]), fmt_num(hist.edges[i + 1]), c.to_string()]);
    write_rows(path, &["lower", "upper", "count"], rows)
}

pub fn write_outage_csv(hist: &CompletionHistogram, path: &Path) -> Result<()> {
    let rows = hist
        .outage
        .iter()
        .enumerate()
        .map(|(n, &o)| vec![(n + 1).to_string(), fmt_num(o)]);
    write_rows(path, &["slot", "outage"], rows)
}

/// One row per sweep point.
pub fn write_sweep_csv(param: SweepParam, points: &[SweepPoint], path: &Path) -> Result<()> {
    let name = serde_json::to_value(param).expect("param serializes");
    let name = name.as_str().unwrap_or("value").to_string();
    let rows = points.iter().map(|p| {
        let e = &p.report.energy;
        vec![
            fmt_num(p.value),
            fmt_num(e.e1),
            fmt_num(e.e2),
            fmt_num(e.e3),
            fmt_num(e.e4),
            fmt_num(e.total),
        ]
    });
    write_rows(path, &[name.as_str(), "E1", "E2", "E3", "E4", "weighted"], rows)
}
