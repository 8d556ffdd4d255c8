//! Ground-air channel gains and the UAV-satellite link vector.

pub mod bessel;

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};
use crate::rng::SeedTree;
use crate::scenario::{db_to_lin, ScenarioConfig, LIGHT_SPEED};

use bessel::bessel_j_over_pow;

/// Inverse-square ground-air power gain `beta0 / ||q - w||^2`.
pub fn ground_air_gain(q: &Vector3<f64>, w: &Vector3<f64>, beta0: f64) -> Result<f64> {
    let d2 = (q - w).norm_squared();
    if d2 == 0.0 {
        return Err(Error::InvalidArgument("UAV and node coincide".into()));
    }
    Ok(beta0 / d2)
}

pub(crate) fn ground_air_gain_unchecked(q: &Vector3<f64>, w: &Vector3<f64>, beta0: f64) -> f64 {
    beta0 / (q - w).norm_squared().max(f64::MIN_POSITIVE)
}

/// Free-space path gain `(c / (4 pi f d))^2` (linear).
pub fn free_space_loss(distance: f64, carrier: f64) -> Result<f64> {
    if !(distance > 0.0 && carrier > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distance {distance} and carrier {carrier} must be positive"
        )));
    }
    Ok((LIGHT_SPEED / (4.0 * PI * carrier * distance)).powi(2))
}

/// Satellite receive gain for an off-boresight angle `phi`.
pub fn receive_antenna_gain(phi: f64, phi_3db: f64, gain_max: f64) -> f64 {
    let u = 2.07123 * phi.sin() / phi_3db.sin();
    let pattern = 0.5 * bessel_j_over_pow(1, u) + 36.0 * bessel_j_over_pow(3, u);
    gain_max * pattern * pattern
}

/// Geometric phase estimate per antenna (rad).
pub fn phase_estimate(
    distance: f64,
    wavelength: f64,
    spacing: f64,
    array_cosine: f64,
    antennas: usize,
) -> Result<Vec<f64>> {
    if !(wavelength > 0.0) {
        return Err(Error::InvalidArgument("wavelength must be positive".into()));
    }
    Ok((0..antennas)
        .map(|m| {
            -2.0 * PI * distance / wavelength - 2.0 * PI * spacing * m as f64 * array_cosine / wavelength
        })
        .collect())
}

/// Draw a rain power gain: dB value from `Normal(mu, sd^2)`, returned linear.
pub fn rain_gain_sample<R: Rng + ?Sized>(rng: &mut R, mu_db: f64, sd_db: f64) -> f64 {
    let db = if sd_db > 0.0 {
        Normal::new(mu_db, sd_db).expect("sd checked").sample(rng)
    } else {
        mu_db
    };
    db_to_lin(db)
}

/// I.i.d. `Normal(0, varrho^2)` phase errors.
pub fn sample_phase_error<R: Rng + ?Sized>(rng: &mut R, varrho: f64, antennas: usize) -> Vec<f64> {
    if varrho == 0.0 {
        return vec![0.0; antennas];
    }
    let dist = Normal::new(0.0, varrho).expect("varrho checked");
    (0..antennas).map(|_| dist.sample(rng)).collect()
}

/// Deterministic part of the UAV-satellite link for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SatLinkNominal {
    pub g_hat: CVector,
    pub path_gain: f64,
    pub rain_gain: f64,
    pub antenna_gain: f64,
    pub phases: Vec<f64>,
}

impl SatLinkNominal {
    /// Common per-antenna amplitude.
    pub fn amplitude(&self) -> f64 {
        self.g_hat.get(0).map_or(0.0, |z| z.norm())
    }
}

/// Link vector with noise folded in: `sqrt(G_PL Gt Gr / (kappa B2 t)) / sqrt(rain) * e^{j theta}`.
pub fn nominal_link_vector(cfg: &ScenarioConfig, rain_gain: f64, phases: &[f64]) -> Result<SatLinkNominal> {
    if !(rain_gain > 0.0) {
        return Err(Error::InvalidArgument("rain gain must be positive".into()));
    }
    let path_gain = free_space_loss(cfg.sat_distance, cfg.carrier)?;
    let antenna_gain = cfg.gain_txrx_max()
        * receive_antenna_gain(cfg.off_boresight, cfg.beamwidth_3db, 1.0);
    let noise = cfg.kappa * cfg.bandwidth_sat * cfg.noise_temperature;
    let amp = (path_gain * antenna_gain / noise).sqrt() / rain_gain.sqrt();
    let g_hat = CVector::from_iterator(phases.len(), phases.iter().map(|&t| C64::from_polar(amp, t)));
    Ok(SatLinkNominal {
        g_hat,
        path_gain,
        rain_gain,
        antenna_gain,
        phases: phases.to_vec(),
    })
}

/// Apply phase errors to a nominal link: `g = g_hat .* e^{j theta_err}`.
pub fn perturb(g_hat: &CVector, phase_error: &[f64]) -> CVector {
    CVector::from_iterator(
        g_hat.len(),
        g_hat
            .iter()
            .zip(phase_error)
            .map(|(g, &t)| g * C64::from_polar(1.0, t)),
    )
}

/// Nominal link vectors for every slot of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SatLink {
    pub g_hat: Vec<CVector>,
    pub rain_gain: Vec<f64>,
}

impl SatLink {
    /// Draw the rain realization from the `rain` stream and build every slot.
    pub fn realize(cfg: &ScenarioConfig, seeds: &SeedTree) -> Result<Self> {
        let rain: Vec<f64> = if cfg.rain_per_slot {
            (0..cfg.slots)
                .map(|n| rain_gain_sample(&mut seeds.indexed("rain", n as u64), cfg.mu_rain_db, cfg.sd_rain_db))
                .collect()
        } else {
            let g = rain_gain_sample(&mut seeds.stream("rain"), cfg.mu_rain_db, cfg.sd_rain_db);
            vec![g; cfg.slots]
        };
        Self::with_rain(cfg, &rain)
    }

    pub fn with_rain(cfg: &ScenarioConfig, rain: &[f64]) -> Result<Self> {
        let lambda = cfg.wavelength();
        let phases = phase_estimate(
            cfg.sat_distance,
            lambda,
            cfg.d_ant_wavelengths * lambda,
            cfg.array_cosine,
            cfg.antennas,
        )?;
        let g_hat = rain
            .iter()
            .map(|&r| nominal_link_vector(cfg, r, &phases).map(|l| l.g_hat))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            g_hat,
            rain_gain: rain.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::lin_to_db;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ground_air_examples() {
        let w = Vector3::new(0.0, 500.0, 0.0);
        let q = Vector3::new(0.0, 500.0, 100.0);
        assert!((ground_air_gain(&q, &w, 1e-6).unwrap() - 1e-10).abs() < 1e-22);
        let q2 = Vector3::new(100.0, 500.0, 100.0);
        assert!((ground_air_gain(&q2, &w, 1e-6).unwrap() - 5e-11).abs() < 1e-22);
        let far = Vector3::new(0.0, 500.0, 200.0);
        let ratio = ground_air_gain(&far, &w, 1e-6).unwrap() / ground_air_gain(&q, &w, 1e-6).unwrap();
        assert!((ratio - 0.25).abs() < 1e-12);
        assert!(ground_air_gain(&w, &w, 1e-6).is_err());
    }

    #[test]
    fn free_space_examples() {
        let g = free_space_loss(6e5, 20e9).unwrap();
        assert!((lin_to_db(g) + 174.0).abs() < 0.1, "{}", lin_to_db(g));
        let g2 = free_space_loss(12e5, 20e9).unwrap();
        assert!((lin_to_db(g2) - lin_to_db(g) + 6.0206).abs() < 1e-3);
        let d_ref = LIGHT_SPEED / (4.0 * PI * 20e9);
        assert!((free_space_loss(d_ref, 20e9).unwrap() - 1.0).abs() < 1e-12);
        assert!(free_space_loss(0.0, 1.0).is_err());
    }

    #[test]
    fn inverse_square_invariant() {
        let base = free_space_loss(1.0, 20e9).unwrap();
        for d in [10.0, 1e3, 6e5, 3.6e7] {
            let g = free_space_loss(d, 20e9).unwrap();
            assert!((g * d * d / base - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn antenna_gain_pattern() {
        let phi3 = 1.0_f64.to_radians();
        assert!((receive_antenna_gain(0.0, phi3, 7.0) - 7.0).abs() < 1e-12);
        let half = lin_to_db(receive_antenna_gain(phi3, phi3, 1.0));
        assert!((half + 3.0).abs() < 0.2, "{half}");
        let mut prev = f64::INFINITY;
        for i in 1..=200 {
            let g = receive_antenna_gain(phi3 * i as f64 / 200.0, phi3, 1.0);
            assert!(g <= prev + 1e-15);
            prev = g;
        }
    }

    #[test]
    fn phase_estimate_examples() {
        let lambda = 0.015;
        let p = phase_estimate(6e5, lambda, lambda / 2.0, 1.0, 4).unwrap();
        assert!((p[0] + 2.0 * PI * 6e5 / lambda).abs() < 1e-6);
        for m in 0..3 {
            assert!((p[m + 1] - p[m] + PI).abs() < 1e-6);
        }
        assert!(phase_estimate(1.0, 0.0, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn rain_gain_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = rain_gain_sample(&mut rng, -8.6, 0.0);
        assert!((g - 0.138_038).abs() < 1e-5);
        let n = 100_000;
        let mean_db = (0..n)
            .map(|_| lin_to_db(rain_gain_sample(&mut rng, -8.6, 0.3)))
            .sum::<f64>()
            / n as f64;
        assert!((mean_db + 8.6).abs() < 0.01, "{mean_db}");
    }

    #[test]
    fn phase_error_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(sample_phase_error(&mut rng, 0.0, 3), vec![0.0; 3]);
        let varrho = 0.05;
        let draws: Vec<f64> = (0..100_000 / 4)
            .flat_map(|_| sample_phase_error(&mut rng, varrho, 4))
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        assert!((sd / varrho - 1.0).abs() < 0.01, "{sd}");
    }

    #[test]
    fn default_phase_std_reads_degrees_literally() {
        let cfg = ScenarioConfig::default();
        assert!((cfg.varrho - 50.0 / 360.0 * PI / 180.0).abs() < 1e-15);
    }

    #[test]
    fn nominal_vector_norm_and_amplitude() {
        let cfg = ScenarioConfig::desk();
        let phases = vec![0.0; cfg.antennas];
        let link = nominal_link_vector(&cfg, 0.138, &phases).unwrap();
        assert!(link.g_hat.iter().all(|z| z.im == 0.0 && z.re > 0.0));
        // Independent arithmetic: -174.025 dB path gain, 18 dB antennas.
        let c = 3e8_f64;
        let g_pl = (c / (4.0 * PI * 20e9 * 6e5)).powi(2);
        let gains = 10f64.powf(1.8);
        let noise = 1.38e-23 * 30e6 * 207.0;
        let amp = (g_pl * gains / noise / 0.138).sqrt();
        assert!((link.amplitude() / amp - 1.0).abs() < 1e-12);
        assert!(
            (link.g_hat.norm_squared() - cfg.antennas as f64 * g_pl * gains / (noise * 0.138)).abs()
                < 1e-12 * link.g_hat.norm_squared()
        );
    }

    #[test]
    fn perturbation_keeps_amplitude() {
        let cfg = ScenarioConfig::desk();
        let lambda = cfg.wavelength();
        let phases = phase_estimate(cfg.sat_distance, lambda, lambda / 2.0, 1.0, 4).unwrap();
        let link = nominal_link_vector(&cfg, 0.14, &phases).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = sample_phase_error(&mut rng, 0.3, 4);
        let g = perturb(&link.g_hat, &err);
        for (a, b) in g.iter().zip(link.g_hat.iter()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn rain_drawn_once_unless_per_slot() {
        let cfg = ScenarioConfig::desk().resolved().unwrap();
        let link = SatLink::realize(&cfg, &SeedTree::new(5)).unwrap();
        assert!(link.rain_gain.windows(2).all(|w| w[0] == w[1]));
        let per = ScenarioConfig {
            rain_per_slot: true,
            ..cfg
        };
        let link = SatLink::realize(&per, &SeedTree::new(5)).unwrap();
        assert!(link.rain_gain.windows(2).any(|w| w[0] != w[1]));
    }
}
