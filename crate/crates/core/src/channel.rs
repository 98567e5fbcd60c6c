//! Frequency-domain radar channel: point reflectors (leakage plus objects),
//! Hadamard application to a Tx grid, and calibrated AWGN.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::ofdm::{ComplexGrid, OfdmConfig, ResourceGrid};
use crate::{Result, C0};

/// One point reflection. By convention index 0 of a [`Scenario`] is the
/// direct Tx-to-Rx leakage and carries the 0 dB power reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub distance_m: f64,
    pub velocity_mps: f64,
    /// Power relative to the leakage in dB.
    pub power_db: f64,
    /// Initial phase of the complex amplitude in radians.
    #[serde(default)]
    pub phase_rad: f64,
}

impl Reflector {
    pub fn new(distance_m: f64, velocity_mps: f64, power_db: f64) -> Self {
        Self {
            distance_m,
            velocity_mps,
            power_db,
            phase_rad: 0.0,
        }
    }

    /// Round-trip delay 2 d / c0 in seconds.
    pub fn delay_s(&self) -> f64 {
        2.0 * self.distance_m / C0
    }

    /// Doppler shift -2 v f_c / c0 in Hz.
    pub fn doppler_hz(&self, carrier_frequency: f64) -> f64 {
        -2.0 * self.velocity_mps * carrier_frequency / C0
    }

    /// Complex amplitude with |a|^2 = 10^(power_db/10).
    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(10f64.powf(self.power_db / 20.0), self.phase_rad)
    }
}

/// Reflector list plus the noise level, which is referenced to the leakage
/// power per subcarrier in the frequency domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub reflectors: Vec<Reflector>,
    /// Leakage-to-noise ratio per subcarrier in dB; `None` means noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Scenario {
    pub fn noise_variance(&self) -> Option<f64> {
        let leakage = self
            .reflectors
            .first()
            .map(|r| 10f64.powf(r.power_db / 10.0))
            .unwrap_or(1.0);
        self.snr_db.map(|snr| leakage / 10f64.powf(snr / 10.0))
    }
}

/// Frequency-domain channel over all subcarriers and symbols.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    pub grid: ComplexGrid,
    pub config: OfdmConfig,
}

/// One entry of the 2D complex-exponential synthesis kernel shared by the
/// channel synthesizer and the RELAX reconstruction: a reflection at delay
/// `tau` and Doppler `doppler` contributes
/// `exp(-j 2 pi f_k tau) * exp(j 2 pi f_D l (T + T_cp))` at subcarrier k,
/// symbol l.
#[inline]
pub fn steering_entry(config: &OfdmConfig, k: usize, l: usize, tau: f64, doppler: f64) -> Complex64 {
    let range_phase = -2.0 * std::f64::consts::PI * config.baseband_frequency(k) * tau;
    let doppler_phase = 2.0 * std::f64::consts::PI * doppler * l as f64 * config.symbol_interval();
    Complex64::from_polar(1.0, range_phase + doppler_phase)
}

/// Sum the per-reflector 2D exponentials into a channel matrix.
///
/// Every delay must stay below the CP duration; otherwise the per-subcarrier
/// multiplicative model no longer holds and the call refuses rather than
/// aliasing silently.
pub fn synthesize_channel(scenario: &Scenario, config: &OfdmConfig) -> Result<ChannelMatrix> {
    if scenario.reflectors.is_empty() {
        return Err(SimError::InvalidArgument("scenario has no reflectors".into()));
    }
    let cp = config.cp_duration();
    for (i, r) in scenario.reflectors.iter().enumerate() {
        if r.distance_m < 0.0 {
            return Err(SimError::InvalidArgument(format!(
                "reflector {i} has negative distance"
            )));
        }
        if r.delay_s() >= cp {
            return Err(SimError::ModelViolation(format!(
                "reflector {i} delay {:.3e} s >= CP duration {:.3e} s",
                r.delay_s(),
                cp
            )));
        }
    }
    let mut grid = ComplexGrid::zeros(config.n_subcarriers, config.n_symbols);
    for r in &scenario.reflectors {
        let a = r.amplitude();
        let tau = r.delay_s();
        let fd = r.doppler_hz(config.carrier_frequency);
        for l in 0..config.n_symbols {
            for k in 0..config.n_subcarriers {
                let v = grid.at(k, l) + a * steering_entry(config, k, l, tau, fd);
                grid.set(k, l, v);
            }
        }
    }
    Ok(ChannelMatrix {
        grid,
        config: config.clone(),
    })
}

/// Element-wise (Hadamard) product of a Tx grid with the channel.
pub fn apply_channel(x_tx: &ResourceGrid, h: &ChannelMatrix) -> Result<ResourceGrid> {
    Ok(ResourceGrid {
        grid: x_tx.grid.zip_map(&h.grid, |x, h| x * h)?,
        config: x_tx.config.clone(),
    })
}

/// Draw the i.i.d. circular complex Gaussian noise grid for a scenario,
/// with per-subcarrier variance `sigma^2 = leakage / 10^(snr/10)` split
/// evenly between the real and imaginary parts. `None` when noiseless.
pub fn sample_noise_grid(scenario: &Scenario, config: &OfdmConfig) -> Option<ComplexGrid> {
    let sigma2 = scenario.noise_variance()?;
    let std_per_part = (sigma2 / 2.0).sqrt();
    let mut rng = crate::rng::chacha(scenario.seed);
    let mut grid = ComplexGrid::zeros(config.n_subcarriers, config.n_symbols);
    for c in 0..config.n_symbols {
        for r in 0..config.n_subcarriers {
            let (g_re, g_im) = crate::rng::standard_normal_pair(&mut rng);
            grid.set(r, c, Complex64::new(g_re * std_per_part, g_im * std_per_part));
        }
    }
    Some(grid)
}

/// Add calibrated AWGN to a grid. The identical noise realization is produced
/// for a fixed scenario seed, so baselines can share it.
pub fn add_awgn(grid: &ResourceGrid, scenario: &Scenario) -> Result<ResourceGrid> {
    match sample_noise_grid(scenario, &grid.config) {
        None => Ok(grid.clone()),
        Some(noise) => Ok(ResourceGrid {
            grid: grid.grid.zip_map(&noise, |g, n| g + n)?,
            config: grid.config.clone(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> OfdmConfig {
        OfdmConfig::new(3, 64, 8, 128, 9, 28.0e9).unwrap()
    }

    #[test]
    fn static_unit_reflector_gives_flat_channel() {
        let sc = Scenario {
            reflectors: vec![Reflector::new(0.0, 0.0, 0.0)],
            snr_db: None,
            seed: 0,
        };
        let h = synthesize_channel(&sc, &cfg()).unwrap();
        for &v in h.grid.data() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn static_reflector_has_analytic_phase_slope() {
        let c = cfg();
        let d = 12.0;
        let sc = Scenario {
            reflectors: vec![Reflector::new(d, 0.0, 0.0)],
            snr_db: None,
            seed: 0,
        };
        let h = synthesize_channel(&sc, &c).unwrap();
        let expected_step = -2.0 * std::f64::consts::PI * c.subcarrier_spacing * 2.0 * d / C0;
        for k in 0..c.n_subcarriers - 1 {
            let ratio = h.grid.at(k + 1, 0) / h.grid.at(k, 0);
            assert_abs_diff_eq!(h.grid.at(k, 0).norm(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(ratio.arg(), expected_step, epsilon = 1e-9);
        }
    }

    #[test]
    fn delay_beyond_cp_is_refused() {
        let c = cfg();
        let too_far = C0 * c.cp_duration() / 2.0 + 1.0;
        let sc = Scenario {
            reflectors: vec![Reflector::new(too_far, 0.0, 0.0)],
            snr_db: None,
            seed: 0,
        };
        assert!(matches!(
            synthesize_channel(&sc, &c),
            Err(SimError::ModelViolation(_))
        ));
    }

    #[test]
    fn synthesis_is_linear_in_reflectors() {
        let c = cfg();
        let r1 = Reflector::new(5.0, 10.0, 0.0);
        let r2 = Reflector {
            phase_rad: 1.0,
            ..Reflector::new(20.0, -4.0, -13.0)
        };
        let both = synthesize_channel(
            &Scenario {
                reflectors: vec![r1.clone(), r2.clone()],
                snr_db: None,
                seed: 0,
            },
            &c,
        )
        .unwrap();
        let a = synthesize_channel(
            &Scenario {
                reflectors: vec![r1],
                snr_db: None,
                seed: 0,
            },
            &c,
        )
        .unwrap();
        let b = synthesize_channel(
            &Scenario {
                reflectors: vec![r2],
                snr_db: None,
                seed: 0,
            },
            &c,
        )
        .unwrap();
        let sum = a.grid.zip_map(&b.grid, |x, y| x + y).unwrap();
        assert_eq!(both.grid, sum);
    }

    #[test]
    fn apply_channel_identity_and_scaling() {
        let c = cfg();
        let x = crate::ofdm::generate_grid(&c, 16, 3).unwrap();
        let ones = ChannelMatrix {
            grid: ComplexGrid::from_fn(c.n_subcarriers, c.n_symbols, |_, _| Complex64::new(1.0, 0.0)),
            config: c.clone(),
        };
        let y = apply_channel(&x, &ones).unwrap();
        assert_eq!(y.grid, x.grid);

        let scale = Complex64::new(0.3, -1.2);
        let scaled = ChannelMatrix {
            grid: ones.grid.map(|v| v * scale),
            config: c.clone(),
        };
        let y = apply_channel(&x, &scaled).unwrap();
        for (a, b) in y.grid.data().iter().zip(x.grid.data()) {
            assert!((a - b * scale).norm() < 1e-14);
        }
    }

    #[test]
    fn noiseless_scenario_leaves_grid_unchanged() {
        let c = cfg();
        let x = crate::ofdm::generate_grid(&c, 16, 3).unwrap();
        let sc = Scenario {
            reflectors: vec![Reflector::new(0.0, 0.0, 0.0)],
            snr_db: None,
            seed: 5,
        };
        let y = add_awgn(&x, &sc).unwrap();
        assert_eq!(y.grid, x.grid);
    }

    #[test]
    fn awgn_power_calibration() {
        // 0 dB SNR against unit leakage: noise power 1.0 within 2 percent
        // over >= 1e5 samples.
        let c = OfdmConfig::new(3, 500, 210, 512, 36, 28e9).unwrap();
        let sc = Scenario {
            reflectors: vec![Reflector::new(0.0, 0.0, 0.0)],
            snr_db: Some(0.0),
            seed: 77,
        };
        let zeros = ResourceGrid::zeros(&c);
        let noisy = add_awgn(&zeros, &sc).unwrap();
        let n = (c.n_subcarriers * c.n_symbols) as f64;
        assert!(n >= 1e5);
        let power = noisy.grid.energy() / n;
        assert!((power - 1.0).abs() < 0.02, "noise power {power}");
    }

    #[test]
    fn awgn_is_deterministic_per_seed() {
        let c = cfg();
        let x = crate::ofdm::generate_grid(&c, 16, 3).unwrap();
        let sc = Scenario {
            reflectors: vec![Reflector::new(0.0, 0.0, 0.0)],
            snr_db: Some(20.0),
            seed: 9,
        };
        let a = add_awgn(&x, &sc).unwrap();
        let b = add_awgn(&x, &sc).unwrap();
        assert_eq!(a.grid, b.grid);
    }
}
