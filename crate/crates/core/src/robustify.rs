//! Quadratic surrogate of the phase-perturbed forwarding gain, the
//! Bernstein-type sufficient condition for its chance constraint, and Monte
//! Carlo certification against the exact channel.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::rng::SeedTree;
use crate::scenario::ScenarioConfig;

/// `θᵀ F θ + θᵀ g + zsum`, the second-order expansion of `gᴴ W g` in the
/// phase errors `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadSurrogate {
    pub fmat: DMatrix<f64>,
    pub gvec: DVector<f64>,
    pub zsum: f64,
}

impl QuadSurrogate {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        (t.transpose() * &self.fmat * &t)[(0, 0)] + t.dot(&self.gvec) + self.zsum
    }
}

/// `Z = diag(ĝ)ᴴ W diag(ĝ)`.
fn weighted(w: &CMatrix, g_hat: &CVector) -> CMatrix {
    CMatrix::from_fn(w.nrows(), w.ncols(), |i, j| g_hat[i].conj() * w[(i, j)] * g_hat[j])
}

pub fn quad_surrogate(w: &CMatrix, g_hat: &CVector) -> Result<QuadSurrogate> {
    linalg::ensure_hermitian(w)?;
    let m = g_hat.len();
    if w.nrows() != m {
        return Err(Error::Dimension(format!("beam is {}x{}, link has {m} antennas", w.nrows(), w.ncols())));
    }
    let z = weighted(w, g_hat);
    let x = z.map(|c| c.re);
    let y = z.map(|c| c.im);
    let mut fmat = x.clone();
    for i in 0..m {
        fmat[(i, i)] -= x.row(i).sum();
    }
    let gvec = DVector::from_fn(m, |i, _| 2.0 * y.row(i).sum());
    let zsum = x.sum();
    Ok(QuadSurrogate { fmat, gvec, zsum })
}

/// Exact gain `gᴴ W g` with `g = ĝ ⊙ e^{jθ}`.
pub fn exact_gain(w: &CMatrix, g_hat: &CVector, theta: &[f64]) -> f64 {
    let g = crate::linkmodel::perturb(g_hat, theta);
    linalg::quad_form(w, &g)
}

/// Coefficients of the first Bernstein condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BernsteinForm {
    /// `trQ − 2√(−ln ε)x + 2 ln(ε) y + s ≥ 0`
    #[default]
    Conservative,
    /// `trQ − √(−2 ln ε)x + ln(ε) y + s ≥ 0`
    Standard,
}

impl BernsteinForm {
    /// `(c1, c2)` in `trQ − c1 x + c2 y + s ≥ 0`.
    pub fn coefficients(self, eps: f64) -> (f64, f64) {
        let l = eps.ln();
        match self {
            BernsteinForm::Conservative => (2.0 * (-l).sqrt(), 2.0 * l),
            BernsteinForm::Standard => ((-2.0 * l).sqrt(), l),
        }
    }
}

/// How the forwarding rate constraint is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Robustness {
    /// Bernstein sufficient condition for the chance constraint.
    Bernstein(BernsteinForm),
    /// Rate met at the nominal link only.
    Nominal,
}

impl Default for Robustness {
    fn default() -> Self {
        Robustness::Bernstein(BernsteinForm::Conservative)
    }
}

/// SNR needed to forward `o·l_sum` bits in the forwarding part of a slot.
pub fn forward_threshold(cfg: &ScenarioConfig, l_sum: f64, rho: f64) -> Result<f64> {
    if rho >= 1.0 {
        return Err(Error::InvalidArgument(format!("time split {rho} leaves no forwarding time")));
    }
    let exponent = cfg.result_ratio * l_sum / (cfg.slot_len() * (1.0 - rho) * cfg.bandwidth_sat);
    Ok(exponent.exp2() - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinBlock {
    pub q: DMatrix<f64>,
    pub r: DVector<f64>,
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub eps: f64,
}

/// Scaled surrogate `uᵀQu + 2rᵀu` for `θ = ξu`.
pub fn scaled_parts(surr: &QuadSurrogate, xi: f64) -> (DMatrix<f64>, DVector<f64>) {
    (&surr.fmat * (xi * xi), &surr.gvec * (0.5 * xi))
}

/// `||[vec(Q); √2 r]||` and `max(0, λmax(−Q))`.
pub fn minimal_auxiliaries(q: &DMatrix<f64>, r: &DVector<f64>) -> (f64, f64) {
    let x = (q.norm_squared() + 2.0 * r.norm_squared()).sqrt();
    let y = if q.nrows() == 0 {
        0.0
    } else {
        (-linalg::real_min_eigenvalue(q)).max(0.0)
    };
    (x, y)
}

pub fn bernstein_block(
    surr: &QuadSurrogate,
    xi: f64,
    l_sum: f64,
    rho: f64,
    eps: f64,
    cfg: &ScenarioConfig,
) -> Result<BernsteinBlock> {
    if xi < 0.0 {
        return Err(Error::InvalidArgument(format!("phase scale {xi} is negative")));
    }
    let gamma = forward_threshold(cfg, l_sum, rho)?;
    let (q, r) = scaled_parts(surr, xi);
    let (x, y) = minimal_auxiliaries(&q, &r);
    Ok(BernsteinBlock {
        q,
        r,
        s: surr.zsum - gamma,
        x,
        y,
        eps,
    })
}

impl BernsteinBlock {
    /// Left side of condition (a).
    pub fn margin(&self, form: BernsteinForm) -> f64 {
        let (c1, c2) = form.coefficients(self.eps);
        self.q.trace() - c1 * self.x + c2 * self.y + self.s
    }

    /// Slack of (a), (b) and (c); all nonnegative iff the block is feasible.
    pub fn conditions(&self, form: BernsteinForm) -> [f64; 3] {
        let (xmin, _) = minimal_auxiliaries(&self.q, &self.r);
        let m = self.q.nrows();
        let shifted = &self.q + DMatrix::identity(m, m) * self.y;
        let psd = if m == 0 { 0.0 } else { linalg::real_min_eigenvalue(&shifted) };
        [self.margin(form), self.x - xmin, psd]
    }

    pub fn holds(&self, form: BernsteinForm, tol: f64) -> bool {
        self.conditions(form).iter().all(|&c| c >= -tol)
    }
}

/// Largest SNR threshold the beam supports under the chosen rule: the
/// Bernstein value `trQ − c1x* + c2y* + zsum`, or the nominal gain.
pub fn supported_snr(w: &CMatrix, g_hat: &CVector, varrho: f64, eps: f64, rule: Robustness) -> Result<f64> {
    let surr = quad_surrogate(w, g_hat)?;
    Ok(match rule {
        Robustness::Nominal => surr.zsum,
        Robustness::Bernstein(form) => {
            let (q, r) = scaled_parts(&surr, varrho);
            let (x, y) = minimal_auxiliaries(&q, &r);
            let (c1, c2) = form.coefficients(eps);
            q.trace() - c1 * x + c2 * y + surr.zsum
        }
    })
}

/// Beamforming vector carried by the principal component of `W`.
pub fn principal_beam(w: &CMatrix) -> CVector {
    if w.nrows() == 0 || linalg::real_trace(w) <= 0.0 {
        return CVector::zeros(w.nrows());
    }
    let (lam, v) = linalg::principal_eigenpair(w);
    v * C64::new(lam.max(0.0).sqrt(), 0.0)
}

pub const MC_CHUNK: usize = 1000;

/// Sampled SNRs `|gᴴw|²` under `θ ~ N(0, varrho² I)`, drawn in fixed-size
/// chunks with one derived stream per chunk.
pub fn sample_snr(
    beam: &CVector,
    g_hat: &CVector,
    varrho: f64,
    samples: usize,
    seeds: &SeedTree,
    label: &str,
    exec: Exec,
) -> Vec<f64> {
    let m = g_hat.len();
    let chunks = samples.div_ceil(MC_CHUNK);
    let per_chunk = exec.map_range(chunks, |c| {
        let count = MC_CHUNK.min(samples - c * MC_CHUNK);
        let mut rng = seeds.indexed(label, c as u64);
        let normal = (varrho > 0.0).then(|| Normal::new(0.0, varrho).expect("finite std"));
        let mut theta = vec![0.0; m];
        (0..count)
            .map(|_| {
                if let Some(d) = &normal {
                    theta.iter_mut().for_each(|t| *t = d.sample(&mut rng));
                }
                let g = crate::linkmodel::perturb(g_hat, &theta);
                g.dotc(beam).norm_sqr()
            })
            .collect::<Vec<_>>()
    });
    per_chunk.into_iter().flatten().collect()
}

/// Empirical probability that the forwarding part of the slot carries
/// `threshold_bits`.
#[allow(clippy::too_many_arguments)]
pub fn chance_check_mc(
    w: &CMatrix,
    g_hat: &CVector,
    varrho: f64,
    threshold_bits: f64,
    rho: f64,
    cfg: &ScenarioConfig,
    samples: usize,
    seeds: &SeedTree,
    exec: Exec,
) -> Result<f64> {
    if samples < MC_CHUNK {
        return Err(Error::InvalidArgument(format!("need at least {MC_CHUNK} samples, got {samples}")));
    }
    if threshold_bits <= 0.0 {
        return Ok(1.0);
    }
    let capacity = (1.0 - rho) * cfg.slot_len() * cfg.bandwidth_sat;
    let beam = principal_beam(w);
    let snr = sample_snr(&beam, g_hat, varrho, samples, seeds, "chance", exec);
    let ok = snr
        .iter()
        .filter(|&&s| capacity * (1.0 + s).log2() >= threshold_bits)
        .count();
    Ok(ok as f64 / samples as f64)
}
