//! Mission configuration, decision-variable containers and feasibility checks.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::energy;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::linkmodel::SatLink;
use crate::rng::SeedTree;

/// Speed of light used by every link-budget formula (m/s).
pub const LIGHT_SPEED: f64 = 3e8;

/// Relative tolerance for constraint checks.
pub const REL_TOL: f64 = 1e-6;
/// Absolute floor for constraint checks.
pub const ABS_TOL: f64 = 1e-9;

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// A value that is either shared by every node/slot or listed per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerItem {
    Uniform(f64),
    List(Vec<f64>),
}

impl PerItem {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            PerItem::Uniform(v) => *v,
            PerItem::List(v) => v[i],
        }
    }

    fn check(&self, len: usize, field: &str, ok: impl Fn(f64) -> bool, bound: &str) -> Result<()> {
        if let PerItem::List(v) = self {
            if v.len() != len {
                return Err(Error::invalid(
                    field,
                    format!("expected {len} entries, got {}", v.len()),
                ));
            }
        }
        let values: Vec<f64> = match self {
            PerItem::Uniform(v) => vec![*v],
            PerItem::List(v) => v.clone(),
        };
        for v in values {
            if !v.is_finite() || !ok(v) {
                return Err(Error::invalid(field, format!("{v} {bound}")));
            }
        }
        Ok(())
    }
}

/// All physical and mission constants. Keys of the JSON file mirror the
/// usual symbols; dB-valued keys carry a `_db`/`_dbm` suffix and are
/// converted by the accessor methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Horizon length (s).
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub slots: usize,
    #[serde(rename = "K")]
    pub node_count: usize,
    #[serde(rename = "M")]
    pub antennas: usize,
    /// Flight altitude (m).
    #[serde(rename = "H")]
    pub altitude: f64,
    /// Horizontal start point (m).
    pub q_start: [f64; 2],
    /// Horizontal end point (m).
    pub q_finish: [f64; 2],
    #[serde(rename = "V_max")]
    pub v_max: f64,
    /// Ground node coordinates (m). Empty means: draw `K` nodes uniformly in
    /// `[0, area]^2` from `node_seed`.
    pub nodes: Vec<[f64; 2]>,
    pub node_seed: u64,
    pub area: f64,
    /// Offloading demand per node (bits).
    #[serde(rename = "D_k")]
    pub demand: PerItem,
    #[serde(rename = "B1")]
    pub bandwidth_ground: f64,
    #[serde(rename = "B2")]
    pub bandwidth_sat: f64,
    #[serde(rename = "sigma0_sq_dbm")]
    pub noise_dbm: f64,
    #[serde(rename = "beta0_db")]
    pub beta0_db: f64,
    #[serde(rename = "p_max_k")]
    pub node_power_max: PerItem,
    #[serde(rename = "p_uav_max")]
    pub uav_power_max: f64,
    /// CPU cycles per bit.
    pub c0: f64,
    #[serde(rename = "f_max")]
    pub cpu_freq_max: f64,
    /// Effective switched capacitance.
    pub gamma: f64,
    /// Result-size ratio.
    #[serde(rename = "o")]
    pub result_ratio: f64,
    pub eta1: f64,
    pub eta2: f64,
    #[serde(rename = "E_prop")]
    pub propulsion_budget: f64,
    #[serde(rename = "P0")]
    pub blade_power: f64,
    #[serde(rename = "Pi")]
    pub induced_power: f64,
    #[serde(rename = "U_tip")]
    pub tip_speed: f64,
    pub v0: f64,
    pub d0: f64,
    #[serde(rename = "s")]
    pub rotor_solidity: f64,
    pub rho_air: f64,
    #[serde(rename = "A")]
    pub rotor_area: f64,
    #[serde(rename = "d_SU")]
    pub sat_distance: f64,
    #[serde(rename = "f_carr")]
    pub carrier: f64,
    /// Combined maximum transmit and receive antenna gain (dB).
    #[serde(rename = "GtGr_db")]
    pub gain_txrx_db: f64,
    #[serde(rename = "phi_3dB")]
    pub beamwidth_3db: f64,
    /// Off-boresight angle of the UAV seen from the satellite (rad).
    #[serde(rename = "phi")]
    pub off_boresight: f64,
    /// Boltzmann constant (J/K).
    pub kappa: f64,
    #[serde(rename = "t_noise")]
    pub noise_temperature: f64,
    pub mu_rain_db: f64,
    pub sd_rain_db: f64,
    /// Draw an independent rain gain per slot instead of once per run.
    pub rain_per_slot: bool,
    /// Phase-error standard deviation (rad).
    pub varrho: f64,
    /// Outage thresholds per slot.
    pub eps: PerItem,
    /// Cosine of the angle between the link and the array axis.
    #[serde(rename = "phi_SU")]
    pub array_cosine: f64,
    /// Antenna separation in wavelengths.
    pub d_ant_wavelengths: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            horizon: 110.0,
            slots: 110,
            node_count: 10,
            antennas: 8,
            altitude: 100.0,
            q_start: [0.0, 500.0],
            q_finish: [500.0, 0.0],
            v_max: 30.0,
            nodes: Vec::new(),
            node_seed: 1,
            area: 1000.0,
            demand: PerItem::Uniform(170e6),
            bandwidth_ground: 3e6,
            bandwidth_sat: 30e6,
            noise_dbm: -105.0,
            beta0_db: -60.0,
            node_power_max: PerItem::Uniform(1.0),
            uav_power_max: 10.0,
            c0: 100.0,
            cpu_freq_max: 6e9,
            gamma: 1e-27,
            result_ratio: 0.1,
            eta1: 0.1,
            eta2: 0.001,
            propulsion_budget: 2e4,
            blade_power: 79.86,
            induced_power: 88.63,
            tip_speed: 120.0,
            v0: 4.03,
            d0: 0.6,
            rotor_solidity: 0.05,
            rho_air: 1.225,
            rotor_area: 0.503,
            sat_distance: 6e5,
            carrier: 20e9,
            gain_txrx_db: 18.0,
            beamwidth_3db: 1.0_f64.to_radians(),
            off_boresight: 0.0,
            kappa: 1.38e-23,
            noise_temperature: 207.0,
            mu_rain_db: -8.6,
            sd_rain_db: 0.3,
            rain_per_slot: false,
            varrho: (50.0 / 360.0_f64).to_radians(),
            eps: PerItem::Uniform(0.2),
            array_cosine: 1.0,
            d_ant_wavelengths: 0.5,
        }
    }
}

impl ScenarioConfig {
    /// Small scenario used for tests and quick runs: 3 nodes, 20 one-second
    /// slots, 4 satellite antennas, 5 Mbit per node, and the default mission
    /// geometry scaled by 0.4 so the endpoints stay reachable in 10 s.
    pub fn desk() -> Self {
        Self {
            horizon: 20.0,
            slots: 20,
            node_count: 3,
            antennas: 4,
            q_start: [0.0, 200.0],
            q_finish: [200.0, 0.0],
            area: 400.0,
            demand: PerItem::Uniform(5e6),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.resolved()
    }

    /// Fill derived fields (node placement) and check every invariant.
    pub fn resolved(mut self) -> Result<Self> {
        if self.nodes.is_empty() && self.node_count > 0 {
            let mut rng = SeedTree::new(self.node_seed).stream("nodes");
            self.nodes = (0..self.node_count)
                .map(|_| [rng.random_range(0.0..self.area), rng.random_range(0.0..self.area)])
                .collect();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("{v} must be strictly positive")))
            }
        };
        if self.slots < 1 {
            return Err(Error::invalid("N", "must be >= 1"));
        }
        if self.node_count < 1 {
            return Err(Error::invalid("K", "must be >= 1"));
        }
        if self.antennas < 1 {
            return Err(Error::invalid("M", "must be >= 1"));
        }
        if self.nodes.len() != self.node_count {
            return Err(Error::invalid(
                "nodes",
                format!("expected K={} nodes, got {}", self.node_count, self.nodes.len()),
            ));
        }
        for (name, v) in [
            ("T", self.horizon),
            ("H", self.altitude),
            ("V_max", self.v_max),
            ("B1", self.bandwidth_ground),
            ("B2", self.bandwidth_sat),
            ("p_uav_max", self.uav_power_max),
            ("c0", self.c0),
            ("f_max", self.cpu_freq_max),
            ("gamma", self.gamma),
            ("E_prop", self.propulsion_budget),
            ("P0", self.blade_power),
            ("Pi", self.induced_power),
            ("U_tip", self.tip_speed),
            ("v0", self.v0),
            ("d0", self.d0),
            ("s", self.rotor_solidity),
            ("rho_air", self.rho_air),
            ("A", self.rotor_area),
            ("d_SU", self.sat_distance),
            ("f_carr", self.carrier),
            ("phi_3dB", self.beamwidth_3db),
            ("kappa", self.kappa),
            ("t_noise", self.noise_temperature),
            ("d_ant_wavelengths", self.d_ant_wavelengths),
            ("area", self.area),
        ] {
            positive(name, v)?;
        }
        for (name, v) in [
            ("sigma0_sq_dbm", self.noise_dbm),
            ("beta0_db", self.beta0_db),
            ("GtGr_db", self.gain_txrx_db),
            ("mu_rain_db", self.mu_rain_db),
            ("phi_SU", self.array_cosine),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if !(self.eta1 >= 0.0 && self.eta2 >= 0.0) {
            return Err(Error::invalid("eta", "weights must be nonnegative"));
        }
        if !(self.result_ratio > 0.0 && self.result_ratio < 1.0) {
            return Err(Error::invalid("o", format!("{} out of (0,1)", self.result_ratio)));
        }
        if !(self.varrho >= 0.0 && self.varrho.is_finite()) {
            return Err(Error::invalid("varrho", "must be >= 0"));
        }
        if !(self.sd_rain_db >= 0.0) {
            return Err(Error::invalid("sd_rain_db", "must be >= 0"));
        }
        if !(self.off_boresight >= 0.0 && self.off_boresight <= PI / 2.0) {
            return Err(Error::invalid("phi", "must lie in [0, pi/2]"));
        }
        self.demand
            .check(self.node_count, "D_k", |v| v >= 0.0, "must be >= 0")?;
        self.node_power_max
            .check(self.node_count, "p_max_k", |v| v > 0.0, "must be > 0")?;
        self.eps
            .check(self.slots, "eps", |v| v > 0.0 && v < 1.0, "eps out of (0,1)")?;
        let gap = self.start_point() - self.finish_point();
        if gap.norm() > self.v_max * self.horizon * (1.0 + REL_TOL) {
            return Err(Error::invalid(
                "q_finish",
                format!(
                    "endpoint distance {:.3} m exceeds V_max*T = {:.3} m",
                    gap.norm(),
                    self.v_max * self.horizon
                ),
            ));
        }
        Ok(())
    }

    pub fn slot_len(&self) -> f64 {
        self.horizon / self.slots as f64
    }

    pub fn max_step(&self) -> f64 {
        self.v_max * self.slot_len()
    }

    pub fn start_point(&self) -> Vector3<f64> {
        Vector3::new(self.q_start[0], self.q_start[1], self.altitude)
    }

    pub fn finish_point(&self) -> Vector3<f64> {
        Vector3::new(self.q_finish[0], self.q_finish[1], self.altitude)
    }

    pub fn node_point(&self, k: usize) -> Vector3<f64> {
        Vector3::new(self.nodes[k][0], self.nodes[k][1], 0.0)
    }

    pub fn demand(&self, k: usize) -> f64 {
        self.demand.get(k)
    }

    pub fn node_power_max(&self, k: usize) -> f64 {
        self.node_power_max.get(k)
    }

    pub fn eps(&self, n: usize) -> f64 {
        self.eps.get(n)
    }

    /// Ground-air noise power (W).
    pub fn noise_power(&self) -> f64 {
        db_to_lin(self.noise_dbm) * 1e-3
    }

    pub fn beta0(&self) -> f64 {
        db_to_lin(self.beta0_db)
    }

    pub fn gain_txrx_max(&self) -> f64 {
        db_to_lin(self.gain_txrx_db)
    }

    pub fn wavelength(&self) -> f64 {
        LIGHT_SPEED / self.carrier
    }

    pub fn propulsion(&self) -> energy::PropulsionConstants {
        energy::PropulsionConstants {
            blade_power: self.blade_power,
            induced_power: self.induced_power,
            tip_speed: self.tip_speed,
            hover_velocity: self.v0,
            fuselage_drag: self.d0,
            solidity: self.rotor_solidity,
            air_density: self.rho_air,
            disc_area: self.rotor_area,
        }
    }
}

/// Read and resolve a JSON config file; absent keys take the defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_json(&text)
}

/// Configuration plus the realized satellite link it induces.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cfg: ScenarioConfig,
    pub link: SatLink,
    pub seed: u64,
}

impl Instance {
    pub fn new(cfg: ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let link = SatLink::realize(&cfg, &SeedTree::new(seed))?;
        Ok(Self { cfg, link, seed })
    }

    pub fn seeds(&self) -> SeedTree {
        SeedTree::new(self.seed)
    }
}

/// Decision variables. Slot `n` (0-based here) flies from `waypoints[n]` to
/// `waypoints[n + 1]`; the plan holds `N + 1` waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub waypoints: Vec<[f64; 3]>,
    pub rho: Vec<f64>,
    /// Scheduling indicators, `N x K`.
    pub chi: Vec<Vec<f64>>,
    /// Offloaded bits, `N x K`.
    pub bits: Vec<Vec<f64>>,
    /// Node transmit powers (W), `N x K`.
    pub power: Vec<Vec<f64>>,
    /// Forwarding beam covariance per slot.
    #[serde(serialize_with = "ser_beams", deserialize_with = "de_beams")]
    pub beams: Vec<CMatrix>,
}

#[derive(Serialize, Deserialize)]
struct BeamRepr {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

fn ser_beams<S: Serializer>(beams: &[CMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
    let repr: Vec<BeamRepr> = beams
        .iter()
        .map(|w| BeamRepr {
            re: (0..w.nrows())
                .map(|i| (0..w.ncols()).map(|j| w[(i, j)].re).collect())
                .collect(),
            im: (0..w.nrows())
                .map(|i| (0..w.ncols()).map(|j| w[(i, j)].im).collect())
                .collect(),
        })
        .collect();
    repr.serialize(s)
}

fn de_beams<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<CMatrix>, D::Error> {
    let repr = Vec::<BeamRepr>::deserialize(d)?;
    repr.into_iter()
        .map(|b| {
            let m = b.re.len();
            if b.im.len() != m || b.re.iter().chain(&b.im).any(|row| row.len() != m) {
                return Err(serde::de::Error::custom("beam matrix must be square"));
            }
            Ok(CMatrix::from_fn(m, m, |i, j| C64::new(b.re[i][j], b.im[i][j])))
        })
        .collect()
}

impl Plan {
    pub fn slots(&self) -> usize {
        self.rho.len()
    }

    pub fn waypoint(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.waypoints[i])
    }

    /// Horizontal displacement of slot `n` (0-based).
    pub fn step(&self, n: usize) -> f64 {
        (self.waypoint(n + 1) - self.waypoint(n)).norm()
    }

    /// Index of the scheduled node in slot `n`, if the row is one-hot.
    pub fn scheduled(&self, n: usize) -> Option<usize> {
        let row = &self.chi[n];
        let (k, &v) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))?;
        (v > 0.5).then_some(k)
    }

    pub fn slot_bits(&self, n: usize) -> f64 {
        self.bits[n].iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn check_dims(&self, cfg: &ScenarioConfig) -> Result<()> {
        let (n, k, m) = (cfg.slots, cfg.node_count, cfg.antennas);
        let bad = |what: &str| Err(Error::Dimension(what.to_string()));
        if self.waypoints.len() != n + 1 {
            return bad(&format!("expected {} waypoints, got {}", n + 1, self.waypoints.len()));
        }
        if self.rho.len() != n {
            return bad(&format!("expected {n} time splits, got {}", self.rho.len()));
        }
        for (name, table) in [("chi", &self.chi), ("bits", &self.bits), ("power", &self.power)] {
            if table.len() != n || table.iter().any(|row| row.len() != k) {
                return bad(&format!("{name} must be {n}x{k}"));
            }
        }
        if self.beams.len() != n || self.beams.iter().any(|w| w.nrows() != m || w.ncols() != m) {
            return bad(&format!("beams must be {n} matrices of size {m}x{m}"));
        }
        Ok(())
    }
}

/// Flying speed in slot `n` (1-based, `1..=N`).
pub fn slot_speed(plan: &Plan, n: usize, slot_len: f64) -> Result<f64> {
    let max = plan.slots();
    if n == 0 || n > max {
        return Err(Error::IndexOutOfRange { index: n, max });
    }
    Ok(plan.step(n - 1) / slot_len)
}

/// One failed constraint check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: &'static str,
    pub slot: Option<usize>,
    pub node: Option<usize>,
    pub magnitude: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.constraint)?;
        if let Some(n) = self.slot {
            write!(f, " slot={n}")?;
        }
        if let Some(k) = self.node {
            write!(f, " node={k}")?;
        }
        write!(f, " by {:.3e}", self.magnitude)
    }
}

/// Amount by which `lhs <= rhs` is violated beyond tolerance.
pub fn excess(lhs: f64, rhs: f64) -> Option<f64> {
    let tol = ABS_TOL.max(REL_TOL * lhs.abs().max(rhs.abs()));
    let gap = lhs - rhs;
    (gap > tol || gap.is_nan()).then_some(gap)
}

/// Ground-to-UAV achievable bits of node `k` in slot `n` at power `p`.
pub fn ground_capacity(cfg: &ScenarioConfig, plan: &Plan, n: usize, k: usize, p: f64) -> f64 {
    let h = crate::linkmodel::ground_air_gain_unchecked(
        &plan.waypoint(n + 1),
        &cfg.node_point(k),
        cfg.beta0(),
    );
    plan.rho[n] * cfg.slot_len() * cfg.bandwidth_ground * (1.0 + p * h / cfg.noise_power()).log2()
}

/// Check every deterministic constraint; the forwarding rate is evaluated at
/// the nominal link. Returns an empty list iff the plan is feasible.
pub fn validate_plan(inst: &Instance, plan: &Plan) -> Result<Vec<Violation>> {
    let cfg = &inst.cfg;
    plan.check_dims(cfg)?;
    let mut out = Vec::new();
    let mut push = |constraint, slot, node, magnitude| {
        out.push(Violation {
            constraint,
            slot,
            node,
            magnitude,
        })
    };
    let tau = cfg.slot_len();

    let d0 = (plan.waypoint(0) - cfg.start_point()).norm();
    let d1 = (plan.waypoint(cfg.slots) - cfg.finish_point()).norm();
    if let Some(e) = excess(d0, 0.0).or(excess(d1, 0.0)) {
        push("endpoint", None, None, e.max(d0).max(d1));
    }
    for (i, q) in plan.waypoints.iter().enumerate() {
        if let Some(e) = excess((q[2] - cfg.altitude).abs(), 0.0) {
            push("altitude", Some(i), None, e);
        }
    }
    for n in 0..cfg.slots {
        if let Some(e) = excess(plan.step(n), cfg.max_step()) {
            push("speed", Some(n), None, e);
        }
        let rho = plan.rho[n];
        if !(-ABS_TOL..=1.0 + ABS_TOL).contains(&rho) {
            push("time_split", Some(n), None, rho);
        }
        let row_sum: f64 = plan.chi[n].iter().sum();
        if (row_sum - 1.0).abs() > REL_TOL {
            push("schedule_sum", Some(n), None, row_sum - 1.0);
        }
        for k in 0..cfg.node_count {
            let chi = plan.chi[n][k];
            let bits = plan.bits[n][k];
            let p = plan.power[n][k];
            if chi.min(1.0 - chi).abs() > REL_TOL {
                push("schedule_binary", Some(n), Some(k), chi);
            }
            if bits < -ABS_TOL {
                push("bits_nonneg", Some(n), Some(k), bits);
            }
            if chi < 0.5 && bits > ABS_TOL {
                push("unscheduled_bits", Some(n), Some(k), bits);
            }
            if let Some(e) = excess(-p, 0.0).or(excess(p, cfg.node_power_max(k))) {
                push("node_power", Some(n), Some(k), e);
            }
            let cap = chi * ground_capacity(cfg, plan, n, k, p.max(0.0));
            if let Some(e) = excess(bits, cap) {
                push("ground_rate", Some(n), Some(k), e);
            }
        }
        let load = plan.slot_bits(n);
        if let Some(e) = excess(cfg.c0 * load, rho * tau * cfg.cpu_freq_max) {
            push("compute_capacity", Some(n), None, e);
        }
        let w = &plan.beams[n];
        let defect = linalg::hermitian_defect(w);
        let tr = linalg::real_trace(w);
        if defect > 1e-9 * tr.abs().max(1.0) {
            push("beam_hermitian", Some(n), None, defect);
        }
        if let Some(e) = excess(tr, cfg.uav_power_max) {
            push("beam_power", Some(n), None, e);
        }
        let lam_min = linalg::min_eigenvalue(w);
        if lam_min < -(ABS_TOL + REL_TOL * tr.abs()) {
            push("beam_psd", Some(n), None, lam_min);
        }
        if load > 0.0 {
            let snr = linalg::quad_form(w, &inst.link.g_hat[n]);
            let sent = (1.0 - rho) * tau * cfg.bandwidth_sat * (1.0 + snr.max(0.0)).log2();
            if let Some(e) = excess(cfg.result_ratio * load, sent) {
                push("forward_rate", Some(n), None, e);
            }
        }
    }
    for k in 0..cfg.node_count {
        let total: f64 = (0..cfg.slots).map(|n| plan.bits[n][k]).sum();
        if let Some(e) = excess(cfg.demand(k), total) {
            push("demand", None, Some(k), e);
        }
    }
    let e4 = energy::energy_propulsion(cfg, plan);
    if let Some(e) = excess(e4.energy, cfg.propulsion_budget) {
        push("propulsion_budget", None, None, e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_table() {
        let cfg = ScenarioConfig::default().resolved().unwrap();
        assert_eq!(cfg.horizon, 110.0);
        assert_eq!(cfg.slots, 110);
        assert_eq!(cfg.node_count, 10);
        assert_eq!(cfg.antennas, 8);
        assert_eq!(cfg.nodes.len(), 10);
        assert!((cfg.noise_power() - 10f64.powf(-13.5)).abs() < 1e-20);
        assert!((cfg.beta0() - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn missing_key_takes_default() {
        let cfg = ScenarioConfig::from_json(r#"{"T": 50, "N": 25}"#).unwrap();
        assert_eq!(cfg.eta1, 0.1);
        assert_eq!(cfg.slots, 25);
    }

    #[test]
    fn eps_out_of_range_rejected() {
        let err = ScenarioConfig::from_json(r#"{"eps": 1.2}"#).unwrap_err();
        assert!(err.to_string().contains("eps out of (0,1)"), "{err}");
        let err = ScenarioConfig::from_json(r#"{"N": 2, "T": 40, "eps": [0.1, 1.5]}"#).unwrap_err();
        assert!(err.to_string().contains("eps"));
    }

    #[test]
    fn unknown_keys_and_bad_json_rejected() {
        assert!(matches!(
            ScenarioConfig::from_json(r#"{"bogus": 1}"#),
            Err(Error::Parse(_))
        ));
        assert!(matches!(ScenarioConfig::from_json("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn unreachable_mission_rejected() {
        let err = ScenarioConfig::from_json(r#"{"T": 10}"#).unwrap_err();
        assert!(err.to_string().contains("q_finish"), "{err}");
    }

    #[test]
    fn node_placement_is_seeded() {
        let a = ScenarioConfig::desk().resolved().unwrap();
        let b = ScenarioConfig::desk().resolved().unwrap();
        assert_eq!(a.nodes, b.nodes);
        let c = ScenarioConfig {
            node_seed: 99,
            ..ScenarioConfig::desk()
        }
        .resolved()
        .unwrap();
        assert_ne!(a.nodes, c.nodes);
        assert!(a.nodes.iter().all(|w| w.iter().all(|&x| (0.0..400.0).contains(&x))));
    }

    fn straight_plan(cfg: &ScenarioConfig, steps: &[f64]) -> Plan {
        let n = steps.len();
        let mut waypoints = vec![[0.0, 0.0, cfg.altitude]];
        let mut x = 0.0;
        for s in steps {
            x += s;
            waypoints.push([x, 0.0, cfg.altitude]);
        }
        Plan {
            waypoints,
            rho: vec![0.5; n],
            chi: vec![vec![1.0]; n],
            bits: vec![vec![0.0]; n],
            power: vec![vec![0.0]; n],
            beams: vec![CMatrix::zeros(1, 1); n],
        }
    }

    #[test]
    fn slot_speed_cases() {
        let cfg = ScenarioConfig::default();
        let plan = straight_plan(&cfg, &[0.0, 30.0, 15.0]);
        assert_eq!(slot_speed(&plan, 1, 1.0).unwrap(), 0.0);
        assert!((slot_speed(&plan, 2, 1.0).unwrap() - 30.0).abs() < 1e-12);
        assert!((slot_speed(&plan, 3, 0.5).unwrap() - 30.0).abs() < 1e-12);
        assert!(matches!(
            slot_speed(&plan, 0, 1.0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(slot_speed(&plan, 4, 1.0).is_err());
    }

    #[test]
    fn excess_respects_tolerances() {
        assert!(excess(1.0 + 5e-7, 1.0).is_none());
        assert!(excess(1.0 + 2e-6, 1.0).is_some());
        assert!(excess(5e-10, 0.0).is_none());
        assert!(excess(2e-9, 0.0).is_some());
    }
}
