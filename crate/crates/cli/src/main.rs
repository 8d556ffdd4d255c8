//! `ntnopt`: solve, compare baselines, sweep parameters and certify plans.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ntn_core::bcd::{self, BcdSettings};
use ntn_core::energy::{self, efficient_speeds};
use ntn_core::evaluation::{self, ExperimentReport, Scheme, SweepParam};
use ntn_core::linkmodel;
use ntn_core::scenario::{self, lin_to_db};
use ntn_core::{Exec, Instance, Plan, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(name = "ntnopt", version, about = "Energy-minimizing UAV edge computing with satellite forwarding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Scenario JSON; missing keys take the default values.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory (created if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Outer tolerance of the descent loop (J).
    #[arg(long, default_value_t = 1e-2)]
    eps0: f64,
    /// Monte Carlo draws per slot for completion statistics; 0 skips them.
    #[arg(long, default_value_t = 10_000)]
    mc_samples: usize,
    #[arg(long, value_enum, default_value_t = Mode::Parallel)]
    mode: Mode,
    /// Outer iterations before the tolerance test may stop the loop.
    #[arg(long, default_value_t = 1)]
    min_outer: usize,
    #[arg(long, default_value_t = 30)]
    max_outer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Parallel,
    Sequential,
}

impl From<Mode> for Exec {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Parallel => Exec::Parallel,
            Mode::Sequential => Exec::Sequential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum BaselineScheme {
    Nonrobust,
    Fixed,
    FixedNonrobust,
}

impl From<BaselineScheme> for Scheme {
    fn from(s: BaselineScheme) -> Self {
        match s {
            BaselineScheme::Nonrobust => Scheme::NONROBUST,
            BaselineScheme::Fixed => Scheme::FIXED,
            BaselineScheme::FixedNonrobust => Scheme::FIXED_NONROBUST,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Robust optimization with the optimized trajectory.
    Solve(RunArgs),
    /// A comparison scheme on the same scenario.
    Baseline {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        scheme: BaselineScheme,
    },
    /// One robust run per parameter value with a common seed.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// One of T, D_k, f_max, eps.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Monte Carlo outage of an existing plan.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Parallel)]
        mode: Mode,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form calculators.
    Oracle {
        #[command(subcommand)]
        what: Oracle,
    },
}

#[derive(Subcommand, Debug)]
enum Oracle {
    /// Rotary-wing propulsion power (W) at speed `v` (m/s), default constants.
    Propulsion {
        #[arg(long)]
        v: f64,
    },
    /// Free-space loss (dB) over `distance` (m) at `carrier` (Hz).
    PathLoss {
        #[arg(long, default_value_t = 6e5)]
        distance: f64,
        #[arg(long, default_value_t = 20e9)]
        carrier: f64,
    },
    /// Receive antenna gain (dB, relative to boresight) at `phi` (rad).
    AntennaGain {
        #[arg(long)]
        phi: f64,
        /// 3 dB beamwidth (rad); default 1 degree.
        #[arg(long, default_value_t = 1.0_f64.to_radians())]
        phi3db: f64,
    },
    /// Minimum-power and minimum-energy-per-meter speeds.
    Speeds {
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
}

/// What a run directory was produced by; enough to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    scheme: Option<BaselineScheme>,
    param: Option<String>,
    values: Option<Vec<f64>>,
    config: ScenarioConfig,
    seed: u64,
    eps0: f64,
    mc_samples: usize,
    mode: Mode,
    min_outer: usize,
    max_outer: usize,
    out: PathBuf,
    version: String,
    wall_clock: f64,
}

fn settings(run: &RunArgs) -> BcdSettings {
    let mut s = BcdSettings {
        eps0: run.eps0,
        min_outer: run.min_outer,
        max_outer: run.max_outer,
        ..BcdSettings::default()
    };
    s.solver.exec = run.mode.into();
    s
}

fn out_dir(out: &Option<PathBuf>, default: &str) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("runs").join(default));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    write(&dir.join("plan.json"), &report.plan.to_json())?;
    write(&dir.join("trace.json"), &report.trace.to_json())?;
    evaluation::write_energy_csv(report, &dir.join("energy.csv"))?;
    evaluation::write_trajectory_csv(report, &dir.join("trajectory.csv"))?;
    evaluation::write_offload_csv(report, &dir.join("offload.csv"))?;
    if let Some(h) = &report.completion {
        evaluation::write_histogram_csv(h, &dir.join("histogram.csv"))?;
        evaluation::write_outage_csv(h, &dir.join("outage.csv"))?;
    }
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    let e = &report.energy;
    println!("scheme      {}", report.scheme);
    println!("E1 offload  {} J", evaluation::fmt_num(e.e1));
    println!("E2 compute  {} J", evaluation::fmt_num(e.e2));
    println!("E3 forward  {} J", evaluation::fmt_num(e.e3));
    println!("E4 flight   {} J", evaluation::fmt_num(e.e4));
    println!("weighted    {} J", evaluation::fmt_num(e.total));
    println!("outer iters {}", report.trace.outer.len());
    if let Some(h) = &report.completion {
        println!("worst slot outage {} ({} draws)", evaluation::fmt_num(h.worst_outage()), h.samples);
    }
}

fn manifest(command: &str, run: &RunArgs, cfg: &ScenarioConfig, dir: &Path, clock: Instant) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        scheme: None,
        param: None,
        values: None,
        config: cfg.clone(),
        seed: run.seed,
        eps0: run.eps0,
        mc_samples: run.mc_samples,
        mode: run.mode,
        min_outer: run.min_outer,
        max_outer: run.max_outer,
        out: dir.to_path_buf(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock: clock.elapsed().as_secs_f64(),
    }
}

fn run_one(cfg: ScenarioConfig, run: &RunArgs, scheme: Scheme) -> Result<ExperimentReport> {
    let inst = Instance::new(cfg, run.seed)?;
    let plan0 = bcd::init_plan(&inst)?;
    Ok(evaluation::run_scheme(&inst, &plan0, &settings(run), scheme, run.mc_samples)?)
}

fn cmd_scheme(run: &RunArgs, cfg: ScenarioConfig, scheme: Option<BaselineScheme>) -> Result<()> {
    let clock = Instant::now();
    let name = match scheme {
        None => "solve",
        Some(_) => "baseline",
    };
    let dir = out_dir(&run.out, name)?;
    let report = run_one(cfg.clone(), run, scheme.map_or(Scheme::ROBUST, Scheme::from))?;
    write_report(&dir, &report)?;
    let mut m = manifest(name, run, &cfg, &dir, clock);
    m.scheme = scheme;
    write(&dir.join("manifest.json"), &serde_json::to_string_pretty(&m)?)?;
    print_summary(&report);
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_sweep(run: &RunArgs, cfg: ScenarioConfig, param: &str, values: &[f64]) -> Result<()> {
    let clock = Instant::now();
    let p: SweepParam = param.parse()?;
    let dir = out_dir(&run.out, "sweep")?;
    let points = evaluation::sweep(&cfg, p, values, &settings(run), run.seed, run.mc_samples)?;
    evaluation::write_sweep_csv(p, &points, &dir.join("sweep.csv"))?;
    for (i, pt) in points.iter().enumerate() {
        let sub = dir.join(format!("point_{i}"));
        std::fs::create_dir_all(&sub)?;
        write_report(&sub, &pt.report)?;
        println!("{param} = {}: weighted {} J", evaluation::fmt_num(pt.value), evaluation::fmt_num(pt.report.energy.total));
    }
    let mut m = manifest("sweep", run, &cfg, &dir, clock);
    m.param = Some(param.to_string());
    m.values = Some(values.to_vec());
    write(&dir.join("manifest.json"), &serde_json::to_string_pretty(&m)?)?;
    println!("wrote {}", dir.display());
    Ok(())
}

/// Exit status 2 when some slot's outage exceeds its target by more than
/// three binomial standard deviations.
fn cmd_certify(config: &Path, plan: &Path, seed: u64, samples: usize, out: &Option<PathBuf>, mode: Mode) -> Result<bool> {
    let cfg = scenario::load_config(config)?;
    let text = std::fs::read_to_string(plan).with_context(|| format!("reading {}", plan.display()))?;
    let plan = Plan::from_json(&text)?;
    let inst = Instance::new(cfg, seed)?;
    let hist = evaluation::completion_histogram(&inst, &plan, samples, &inst.seeds(), mode.into())?;
    let dir = out_dir(out, "certify")?;
    evaluation::write_histogram_csv(&hist, &dir.join("histogram.csv"))?;
    evaluation::write_outage_csv(&hist, &dir.join("outage.csv"))?;
    let mut ok = true;
    for (n, &o) in hist.outage.iter().enumerate() {
        let eps = inst.cfg.eps(n);
        let limit = eps + 3.0 * (eps * (1.0 - eps) / samples as f64).sqrt();
        let pass = o <= limit;
        ok &= pass;
        println!(
            "slot {:>3}: outage {} (eps {}) {}",
            n + 1,
            evaluation::fmt_num(o),
            evaluation::fmt_num(eps),
            if pass { "ok" } else { "EXCEEDED" }
        );
    }
    println!("mean completion ratio {}", evaluation::fmt_num(hist.mean));
    Ok(ok)
}

fn cmd_oracle(what: &Oracle) -> Result<()> {
    let cfg = ScenarioConfig::default();
    match what {
        Oracle::Propulsion { v } => {
            if !(*v >= 0.0) {
                bail!("speed must be nonnegative");
            }
            println!("{} W", evaluation::fmt_num(energy::propulsion_power(*v, &cfg.propulsion())));
        }
        Oracle::PathLoss { distance, carrier } => {
            let g = linkmodel::free_space_loss(*distance, *carrier)?;
            println!("{} dB", evaluation::fmt_num(lin_to_db(g)));
        }
        Oracle::AntennaGain { phi, phi3db } => {
            let g = linkmodel::receive_antenna_gain(*phi, *phi3db, 1.0);
            println!("{} dB", evaluation::fmt_num(lin_to_db(g)));
        }
        Oracle::Speeds { step } => {
            let s = efficient_speeds(&cfg.propulsion(), cfg.v_max, *step);
            println!("min-power speed {} m/s ({} W)", evaluation::fmt_num(s.min_power_speed), evaluation::fmt_num(s.min_power));
            println!("min-energy-per-meter speed {} m/s", evaluation::fmt_num(s.min_energy_per_meter_speed));
        }
    }
    Ok(())
}

fn replay(manifest: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let m: RunManifest = serde_json::from_str(&text).context("parsing manifest")?;
    let cfg = m.config.clone().resolved()?;
    let run = RunArgs {
        config: manifest.to_path_buf(),
        seed: m.seed,
        out: Some(out.to_path_buf()),
        eps0: m.eps0,
        mc_samples: m.mc_samples,
        mode: m.mode,
        min_outer: m.min_outer,
        max_outer: m.max_outer,
    };
    match m.command.as_str() {
        "solve" => cmd_scheme(&run, cfg, None),
        "baseline" => cmd_scheme(&run, cfg, Some(m.scheme.context("baseline manifest without scheme")?)),
        "sweep" => cmd_sweep(
            &run,
            cfg,
            m.param.as_deref().context("sweep manifest without param")?,
            m.values.as_deref().context("sweep manifest without values")?,
        ),
        other => bail!("cannot replay command `{other}`"),
    }
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Solve(run) => cmd_scheme(run, scenario::load_config(&run.config)?, None)?,
        Command::Baseline { run, scheme } => cmd_scheme(run, scenario::load_config(&run.config)?, Some(*scheme))?,
        Command::Sweep { run, param, values } => cmd_sweep(run, scenario::load_config(&run.config)?, param, values)?,
        Command::Certify {
            config,
            plan,
            seed,
            samples,
            out,
            mode,
        } => return cmd_certify(config, plan, *seed, *samples, out, *mode),
        Command::Replay { manifest, out } => replay(manifest, out)?,
        Command::Oracle { what } => cmd_oracle(what)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = e
                .downcast_ref::<ntn_core::Error>()
                .is_some_and(ntn_core::Error::is_infeasible);
            ExitCode::from(if infeasible { 2 } else { 1 })
        }
    }
}
