//! Frequency-independent IQ imbalance: parameter model, application in time
//! or frequency domain, the afflicted receive grid, and the ISR/EVM figures.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::SimError;
use crate::ofdm::{conj_mirror, ComplexGrid, ResourceGrid, TimeSignal};
use crate::Result;

/// FID imbalance parameters of one modulator path.
///
/// `alpha = cos(dphi/2) + j eps sin(dphi/2)` and
/// `beta = eps cos(dphi/2) - j sin(dphi/2)`; an imbalanced path maps
/// `x -> alpha x + beta conj(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqParams {
    pub epsilon: f64,
    pub delta_phi_rad: f64,
    pub alpha: Complex64,
    pub beta: Complex64,
}

/// Tx and Rx imbalance parameters of one transceiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqPair {
    pub tx: IqParams,
    pub rx: IqParams,
}

/// Build the imbalance parameters from amplitude error `epsilon` and phase
/// error `delta_phi` (radians).
pub fn fid_params(epsilon: f64, delta_phi_rad: f64) -> IqParams {
    let half = delta_phi_rad / 2.0;
    IqParams {
        epsilon,
        delta_phi_rad,
        alpha: Complex64::new(half.cos(), epsilon * half.sin()),
        beta: Complex64::new(epsilon * half.cos(), -half.sin()),
    }
}

fn deg(d: f64) -> f64 {
    d.to_radians()
}

impl IqParams {
    /// No imbalance: alpha = 1, beta = 0.
    pub fn ideal() -> Self {
        fid_params(0.0, 0.0)
    }
}

impl IqPair {
    pub fn ideal() -> Self {
        IqPair {
            tx: IqParams::ideal(),
            rx: IqParams::ideal(),
        }
    }

    /// Strong literature-based set: Tx (0.3, -20 deg), Rx (-0.1, -30 deg).
    pub fn literature() -> Self {
        IqPair {
            tx: fid_params(0.3, deg(-20.0)),
            rx: fid_params(-0.1, deg(-30.0)),
        }
    }

    /// 3GPP-EVM-compliant set: Tx (-0.02, 2 deg), Rx (-0.03, -2 deg).
    pub fn gpp3() -> Self {
        IqPair {
            tx: fid_params(-0.02, deg(2.0)),
            rx: fid_params(-0.03, deg(-2.0)),
        }
    }

    /// Look a named preset up; `"none"`, `"literature"` and `"3gpp"` exist.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "none" | "ideal" => Ok(Self::ideal()),
            "literature" => Ok(Self::literature()),
            "3gpp" => Ok(Self::gpp3()),
            other => Err(SimError::InvalidArgument(format!(
                "unknown imbalance preset '{other}'"
            ))),
        }
    }
}

/// Apply `alpha x + beta conj-mirror(x)` per OFDM symbol in frequency domain.
pub fn apply_imbalance_freq(grid: &ComplexGrid, params: &IqParams) -> ComplexGrid {
    let mirrored = conj_mirror(grid);
    grid.zip_map(&mirrored, |x, xm| params.alpha * x + params.beta * xm)
        .expect("conj_mirror preserves dimensions")
}

/// Apply `alpha x + beta conj(x)` samplewise in time domain.
pub fn apply_imbalance_time(signal: &TimeSignal, params: &IqParams) -> TimeSignal {
    TimeSignal {
        samples: signal
            .samples
            .iter()
            .map(|&x| params.alpha * x + params.beta * x.conj())
            .collect(),
        sample_rate: signal.sample_rate,
    }
}

/// Exact inverse of [`apply_imbalance_time`]:
/// `x = (conj(alpha) y - beta conj(y)) / (|alpha|^2 - |beta|^2)`.
pub fn invert_imbalance_time(signal: &TimeSignal, params: &IqParams) -> Result<TimeSignal> {
    let det = params.alpha.norm_sqr() - params.beta.norm_sqr();
    if det == 0.0 {
        return Err(SimError::SingularImbalance);
    }
    Ok(TimeSignal {
        samples: signal
            .samples
            .iter()
            .map(|&y| (params.alpha.conj() * y - params.beta * y.conj()) / det)
            .collect(),
        sample_rate: signal.sample_rate,
    })
}

/// Full afflicted receive grid:
/// `y_rx = a_rx (y_tx o h + n) + b_rx conj-mirror(y_tx o h + n)` with
/// `y_tx = a_tx x + b_tx conj-mirror(x)`. Pass the noise grid explicitly so
/// baselines can reuse the identical realization.
pub fn afflicted_rx_grid(
    x_tx: &ResourceGrid,
    h: &ChannelMatrix,
    pair: &IqPair,
    noise: Option<&ComplexGrid>,
) -> Result<ResourceGrid> {
    let y_tx = apply_imbalance_freq(&x_tx.grid, &pair.tx);
    let mut pre_rx = y_tx.zip_map(&h.grid, |y, h| y * h)?;
    if let Some(n) = noise {
        pre_rx = pre_rx.zip_map(n, |v, n| v + n)?;
    }
    Ok(ResourceGrid {
        grid: apply_imbalance_freq(&pre_rx, &pair.rx),
        config: x_tx.config.clone(),
    })
}

/// Image suppression ratio `10 log10(|a_tx a_rx|^2 / |b_rx conj(b_tx)|^2)` in
/// dB; `None` is the infinite-ISR sentinel for a ghost-free pair.
pub fn isr(pair: &IqPair) -> Option<f64> {
    let num = (pair.tx.alpha * pair.rx.alpha).norm_sqr();
    let den = (pair.rx.beta * pair.tx.beta.conj()).norm_sqr();
    if den == 0.0 {
        None
    } else {
        Some(10.0 * (num / den).log10())
    }
}

/// RMS error-vector magnitude of one imbalanced path against the ideal
/// constellation for unit-power circular data: `sqrt(|alpha - 1|^2 + |beta|^2)`.
pub fn evm(params: &IqParams) -> f64 {
    ((params.alpha - Complex64::new(1.0, 0.0)).norm_sqr() + params.beta.norm_sqr()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synthesize_channel, Reflector, Scenario};
    use crate::ofdm::{generate_grid, mirror_index, modulate, demodulate, OfdmConfig};
    use approx::assert_abs_diff_eq;

    fn cfg() -> OfdmConfig {
        OfdmConfig::new(3, 64, 4, 128, 9, 28.0e9).unwrap()
    }

    #[test]
    fn ideal_params_are_identity() {
        let p = fid_params(0.0, 0.0);
        assert_eq!(p.alpha, Complex64::new(1.0, 0.0));
        assert_eq!(p.beta, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn gpp3_rx_matches_published_values() {
        let p = fid_params(-0.03, (-2f64).to_radians());
        assert_abs_diff_eq!(p.alpha.re, 0.99985, epsilon = 5e-6);
        assert_abs_diff_eq!(p.alpha.im, 0.00052, epsilon = 5e-6);
        assert_abs_diff_eq!(p.beta.re, -0.0299, epsilon = 1e-4);
        assert_abs_diff_eq!(p.beta.im, 0.01745, epsilon = 5e-6);
    }

    #[test]
    fn literature_tx_follows_the_closed_form() {
        // The closed form gives alpha = 0.9848 - j0.0521 for (0.3, -20 deg);
        // beta = 0.2954 + j0.1736.
        let p = fid_params(0.3, (-20f64).to_radians());
        assert_abs_diff_eq!(p.alpha.re, 0.98481, epsilon = 1e-5);
        assert_abs_diff_eq!(p.alpha.im, -0.05209, epsilon = 1e-5);
        assert_abs_diff_eq!(p.beta.re, 0.29544, epsilon = 1e-5);
        assert_abs_diff_eq!(p.beta.im, 0.17365, epsilon = 1e-5);
    }

    #[test]
    fn params_recompute_from_errors() {
        for &(e, d) in &[(0.3, -20.0), (-0.1, -30.0), (-0.02, 2.0), (-0.03, -2.0)] {
            let p = fid_params(e, deg(d));
            let half = deg(d) / 2.0;
            assert_abs_diff_eq!(p.alpha.re, half.cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(p.alpha.im, e * half.sin(), epsilon = 1e-12);
            assert_abs_diff_eq!(p.beta.re, e * half.cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(p.beta.im, -half.sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn freq_application_identity_and_real_symmetric_case() {
        let c = cfg();
        let g = generate_grid(&c, 16, 2).unwrap();
        let out = apply_imbalance_freq(&g.grid, &IqParams::ideal());
        assert_eq!(out, g.grid);

        // A conjugate-symmetric pair of subcarriers with real beta: both
        // entries scale by (alpha + beta) when the pair values are real.
        let p = IqParams {
            epsilon: 0.2,
            delta_phi_rad: 0.0,
            alpha: Complex64::new(0.9, 0.0),
            beta: Complex64::new(0.2, 0.0),
        };
        let mut grid = ComplexGrid::zeros(c.n_subcarriers, 1);
        let k = 10;
        let m = mirror_index(c.n_subcarriers, k).unwrap();
        grid.set(k, 0, Complex64::new(1.0, 0.0));
        grid.set(m, 0, Complex64::new(1.0, 0.0));
        let out = apply_imbalance_freq(&grid, &p);
        assert!((out.at(k, 0) - Complex64::new(1.1, 0.0)).norm() < 1e-14);
        assert!((out.at(m, 0) - Complex64::new(1.1, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn time_application_ideal_and_real_signal() {
        let p = fid_params(0.17, 0.4);
        let sig = TimeSignal {
            samples: vec![Complex64::new(1.5, 0.0), Complex64::new(-0.25, 0.0)],
            sample_rate: 1.0,
        };
        let out = apply_imbalance_time(&sig, &p);
        let gain = p.alpha + p.beta;
        for (y, x) in out.samples.iter().zip(&sig.samples) {
            assert!((y - x * gain).norm() < 1e-15);
        }
        let unchanged = apply_imbalance_time(&sig, &IqParams::ideal());
        assert_eq!(unchanged.samples, sig.samples);
    }

    #[test]
    fn time_inverse_round_trip() {
        let p = fid_params(0.3, deg(-20.0));
        let c = cfg();
        let sig = modulate(&generate_grid(&c, 64, 4).unwrap());
        let back = invert_imbalance_time(&apply_imbalance_time(&sig, &p), &p).unwrap();
        for (a, b) in back.samples.iter().zip(&sig.samples) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_inverse_is_detected() {
        let p = IqParams {
            epsilon: 0.0,
            delta_phi_rad: 0.0,
            alpha: Complex64::new(0.8, 0.0),
            beta: Complex64::new(0.8, 0.0),
        };
        let sig = TimeSignal {
            samples: vec![Complex64::new(1.0, 0.0)],
            sample_rate: 1.0,
        };
        assert!(matches!(
            invert_imbalance_time(&sig, &p),
            Err(SimError::SingularImbalance)
        ));
    }

    /// The frequency-domain model equals the time-domain model through the
    /// modulator on every interior subcarrier.
    #[test]
    fn freq_time_equivalence() {
        let c = cfg();
        let p = fid_params(0.3, deg(-20.0));
        for seed in 0..5 {
            let g = generate_grid(&c, 256, seed).unwrap();
            let via_time = demodulate(&apply_imbalance_time(&modulate(&g), &p), &c).unwrap();
            let via_freq = apply_imbalance_freq(&g.grid, &p);
            for l in 0..c.n_symbols {
                for k in 1..c.n_subcarriers {
                    assert!(
                        (via_time.grid.at(k, l) - via_freq.at(k, l)).norm() < 1e-9,
                        "seed {seed} k {k} l {l}"
                    );
                }
            }
        }
    }

    #[test]
    fn afflicted_grid_reduces_to_channel_when_ideal() {
        let c = cfg();
        let g = generate_grid(&c, 16, 1).unwrap();
        let sc = Scenario {
            reflectors: vec![Reflector::new(3.0, 4.0, 0.0)],
            snr_db: None,
            seed: 0,
        };
        let h = synthesize_channel(&sc, &c).unwrap();
        let y = afflicted_rx_grid(&g, &h, &IqPair::ideal(), None).unwrap();
        let direct = crate::channel::apply_channel(&g, &h).unwrap();
        for (a, b) in y.grid.data().iter().zip(direct.grid.data()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    /// Expand the six terms of the Tx+Rx afflicted grid independently and
    /// compare term by term against the composed implementation.
    #[test]
    fn afflicted_grid_matches_six_term_expansion() {
        let c = cfg();
        let g = generate_grid(&c, 256, 5).unwrap();
        let pair = IqPair::literature();
        let sc = Scenario {
            reflectors: vec![Reflector::new(2.0, 7.0, 0.0), Reflector::new(9.0, -3.0, -12.0)],
            snr_db: Some(25.0),
            seed: 3,
        };
        let h = synthesize_channel(&sc, &c).unwrap();
        let noise = crate::channel::sample_noise_grid(&sc, &c).unwrap();
        let y = afflicted_rx_grid(&g, &h, &pair, Some(&noise)).unwrap();

        let x = &g.grid;
        let xm = conj_mirror(x);
        let hm = conj_mirror(&h.grid);
        let nm = conj_mirror(&noise);
        let (at, bt, ar, br) = (pair.tx.alpha, pair.tx.beta, pair.rx.alpha, pair.rx.beta);
        for l in 0..c.n_symbols {
            for k in 0..c.n_subcarriers {
                let expect = ar * at * x.at(k, l) * h.grid.at(k, l)
                    + ar * bt * xm.at(k, l) * h.grid.at(k, l)
                    + ar * noise.at(k, l)
                    + br * at.conj() * xm.at(k, l) * hm.at(k, l)
                    + br * bt.conj() * x.at(k, l) * hm.at(k, l)
                    + br * nm.at(k, l);
                assert!(
                    (y.grid.at(k, l) - expect).norm() < 1e-12,
                    "k {k} l {l}: {} vs {expect}",
                    y.grid.at(k, l)
                );
            }
        }
    }

    #[test]
    fn isr_values() {
        let lit = isr(&IqPair::literature()).unwrap();
        assert_abs_diff_eq!(lit, 20.06, epsilon = 0.01);
        let gpp = isr(&IqPair::gpp3()).unwrap();
        assert_abs_diff_eq!(gpp, 60.7, epsilon = 0.05);
        let mut no_ghost = IqPair::literature();
        no_ghost.rx.beta = Complex64::new(0.0, 0.0);
        assert!(isr(&no_ghost).is_none());
    }

    #[test]
    fn isr_depends_only_on_magnitudes() {
        let a = IqPair {
            tx: fid_params(0.3, deg(-20.0)),
            rx: fid_params(-0.1, deg(-30.0)),
        };
        // Flip the phase error signs: |alpha| and |beta| are unchanged.
        let b = IqPair {
            tx: fid_params(0.3, deg(20.0)),
            rx: fid_params(-0.1, deg(30.0)),
        };
        assert_abs_diff_eq!(isr(&a).unwrap(), isr(&b).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn evm_values() {
        let pair = IqPair::literature();
        assert_abs_diff_eq!(100.0 * evm(&pair.tx), 34.7, epsilon = 0.05);
        assert_abs_diff_eq!(100.0 * evm(&pair.rx), 27.96, epsilon = 0.05);
        let pair = IqPair::gpp3();
        assert_abs_diff_eq!(100.0 * evm(&pair.tx), 2.65, epsilon = 0.05);
        assert_abs_diff_eq!(100.0 * evm(&pair.rx), 3.47, epsilon = 0.05);
        assert_eq!(evm(&IqParams::ideal()), 0.0);
    }

    #[test]
    fn evm_increases_with_beta_magnitude() {
        let alpha = fid_params(0.1, 0.2).alpha;
        let mut last = -1.0;
        for i in 0..20 {
            let p = IqParams {
                epsilon: 0.0,
                delta_phi_rad: 0.0,
                alpha,
                beta: Complex64::from_polar(0.02 * i as f64, 0.7),
            };
            let e = evm(&p);
            assert!(e > last);
            last = e;
        }
    }
}
