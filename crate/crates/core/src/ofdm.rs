//! OFDM waveform layer: numerology, resource grids, QAM fill, modulation to
//! CP-prefixed time samples, and the conjugate-mirror operator.
//!
//! Subcarrier `k` of a grid sits at baseband frequency `(k - floor(n_sc/2)) * df`,
//! i.e. the allocation is centered on DC. That convention makes the
//! conjugate-mirror operator the exact frequency-domain image of time-domain
//! conjugation, which the whole imbalance model leans on.

use num_complex::Complex64;
use rand::RngCore;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::Result;

/// OFDM numerology and geometry.
///
/// Invariants (checked by [`OfdmConfig::new`]):
/// - `subcarrier_spacing = 2^numerology_mu * 15 kHz`
/// - `n_subcarriers <= fft_size`, `cp_samples < fft_size`
/// - `sample_rate = fft_size * subcarrier_spacing`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub numerology_mu: u32,
    pub subcarrier_spacing: f64,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub fft_size: usize,
    pub cp_samples: usize,
    pub sample_rate: f64,
    pub carrier_frequency: f64,
}

impl OfdmConfig {
    pub fn new(
        numerology_mu: u32,
        n_subcarriers: usize,
        n_symbols: usize,
        fft_size: usize,
        cp_samples: usize,
        carrier_frequency: f64,
    ) -> Result<Self> {
        let subcarrier_spacing = (1u64 << numerology_mu) as f64 * 15_000.0;
        if n_subcarriers == 0 || n_symbols == 0 {
            return Err(SimError::InvalidArgument(
                "grid dimensions must be nonzero".into(),
            ));
        }
        if n_subcarriers > fft_size {
            return Err(SimError::InvalidArgument(format!(
                "n_subcarriers {n_subcarriers} exceeds fft_size {fft_size}"
            )));
        }
        if cp_samples >= fft_size {
            return Err(SimError::InvalidArgument(format!(
                "cp_samples {cp_samples} must be < fft_size {fft_size}"
            )));
        }
        Ok(Self {
            numerology_mu,
            subcarrier_spacing,
            n_subcarriers,
            n_symbols,
            fft_size,
            cp_samples,
            sample_rate: fft_size as f64 * subcarrier_spacing,
            carrier_frequency,
        })
    }

    /// Full-scale profile: mu = 3 (120 kHz spacing), 3300 subcarriers, one
    /// 1 ms subframe of 112 symbols, FFT 4096 with a uniform 288-sample CP,
    /// FR2 carrier at 28 GHz.
    pub fn nr_mu3_full() -> Self {
        Self::new(3, 3300, 112, 4096, 288, 28.0e9).expect("static config is valid")
    }

    /// Desk-scale profile for fast tests: same numerology and CP fraction,
    /// 512 subcarriers over 64 symbols on a 1024-point FFT.
    pub fn small() -> Self {
        Self::new(3, 512, 64, 1024, 72, 28.0e9).expect("static config is valid")
    }

    /// OFDM core symbol duration `T = 1/df` in seconds.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.subcarrier_spacing
    }

    /// Cyclic prefix duration in seconds.
    pub fn cp_duration(&self) -> f64 {
        self.cp_samples as f64 / self.sample_rate
    }

    /// Symbol-to-symbol spacing `T + T_cp` in seconds.
    pub fn symbol_interval(&self) -> f64 {
        self.symbol_duration() + self.cp_duration()
    }

    /// Samples per transmitted symbol block (CP + FFT body).
    pub fn samples_per_symbol(&self) -> usize {
        self.cp_samples + self.fft_size
    }

    /// Index of the subcarrier sitting on DC.
    pub fn dc_index(&self) -> usize {
        self.n_subcarriers / 2
    }

    /// Baseband frequency of subcarrier `k` in Hz.
    pub fn baseband_frequency(&self, k: usize) -> f64 {
        (k as f64 - self.dc_index() as f64) * self.subcarrier_spacing
    }

    /// FFT bin carrying subcarrier `k` under the centered mapping.
    pub fn fft_bin(&self, k: usize) -> usize {
        let offset = k as isize - self.dc_index() as isize;
        offset.rem_euclid(self.fft_size as isize) as usize
    }

    /// Range extent of one unpadded range bin in meters.
    pub fn range_bin_m(&self) -> f64 {
        crate::C0 / (2.0 * self.n_subcarriers as f64 * self.subcarrier_spacing)
    }

    /// Velocity extent of one unpadded Doppler bin in m/s.
    pub fn velocity_bin_mps(&self) -> f64 {
        crate::C0 / (2.0 * self.carrier_frequency * self.n_symbols as f64 * self.symbol_interval())
    }
}

/// Dense complex matrix stored column-major (columns are OFDM symbols).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    n_rows: usize,
    n_cols: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![Complex64::new(0.0, 0.0); n_rows * n_cols],
        }
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut g = Self::zeros(n_rows, n_cols);
        for c in 0..n_cols {
            for r in 0..n_rows {
                g.data[c * n_rows + r] = f(r, c);
            }
        }
        g
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[c * self.n_rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[c * self.n_rows + r] = v;
    }

    pub fn col(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.n_rows..(c + 1) * self.n_rows]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.data[c * self.n_rows..(c + 1) * self.n_rows]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Sum of |entry|^2 over the whole grid.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Element-wise combination of two equally sized grids.
    pub fn zip_map(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(SimError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Frequency-domain Tx/Rx data for all subcarriers and symbols.
#[derive(Debug, Clone)]
pub struct ResourceGrid {
    pub grid: ComplexGrid,
    pub config: OfdmConfig,
}

impl ResourceGrid {
    pub fn zeros(config: &OfdmConfig) -> Self {
        Self {
            grid: ComplexGrid::zeros(config.n_subcarriers, config.n_symbols),
            config: config.clone(),
        }
    }
}

/// CP-prefixed baseband time samples, laid out as `n_symbols` consecutive
/// blocks of `cp_samples + fft_size` samples.
#[derive(Debug, Clone)]
pub struct TimeSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
}

/// Mirror image of subcarrier `k`: the index carrying the negated baseband
/// frequency, `m(k) = 2*floor(n_sc/2) - k`. `None` when the image falls
/// outside the allocation (exactly the k = 0 edge subcarrier for even n_sc).
pub fn mirror_index(n_sc: usize, k: usize) -> Option<usize> {
    let m = 2 * (n_sc / 2) as isize - k as isize;
    if (0..n_sc as isize).contains(&m) {
        Some(m as usize)
    } else {
        None
    }
}

/// Conjugate-mirror of one frequency-domain column; out-of-band images are
/// zeroed.
pub fn conj_mirror_col(col: &[Complex64]) -> Vec<Complex64> {
    let n = col.len();
    (0..n)
        .map(|k| match mirror_index(n, k) {
            Some(m) => col[m].conj(),
            None => Complex64::new(0.0, 0.0),
        })
        .collect()
}

/// Conjugate-mirror applied along the subcarrier axis of every column.
pub fn conj_mirror(grid: &ComplexGrid) -> ComplexGrid {
    let mut out = ComplexGrid::zeros(grid.n_rows(), grid.n_cols());
    for c in 0..grid.n_cols() {
        let mirrored = conj_mirror_col(grid.col(c));
        out.col_mut(c).copy_from_slice(&mirrored);
    }
    out
}

/// Draw a resource grid of uniformly random square-QAM symbols normalized to
/// unit average constellation power. Deterministic for a fixed seed (ChaCha8).
pub fn generate_grid(config: &OfdmConfig, modulation_order: usize, seed: u64) -> Result<ResourceGrid> {
    let side = match modulation_order {
        4 => 2u32,
        16 => 4,
        64 => 8,
        256 => 16,
        other => {
            return Err(SimError::InvalidArgument(format!(
                "unsupported modulation order {other} (expected 4, 16, 64 or 256)"
            )))
        }
    };
    // Unit average power: E|x|^2 of +/-1, +/-3, ... +/-(side-1) per rail is
    // (side^2 - 1)/3, so the complex constellation scales by sqrt(3 / (2(side^2-1))).
    let scale = (3.0 / (2.0 * (side as f64 * side as f64 - 1.0))).sqrt();
    let mut rng = crate::rng::chacha(seed);
    let draw_level = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        // side is a power of two, so masking next_u32 is bias-free.
        let idx = rng.next_u32() & (side - 1);
        (2.0 * idx as f64 - (side as f64 - 1.0)) * scale
    };
    let mut grid = ComplexGrid::zeros(config.n_subcarriers, config.n_symbols);
    for c in 0..config.n_symbols {
        for r in 0..config.n_subcarriers {
            let re = draw_level(&mut rng);
            let im = draw_level(&mut rng);
            grid.set(r, c, Complex64::new(re, im));
        }
    }
    Ok(ResourceGrid {
        grid,
        config: config.clone(),
    })
}

/// IFFT each symbol onto the centered bin mapping and prepend the cyclic
/// prefix. Unitary scaling, so [`demodulate`] is the exact inverse.
pub fn modulate(grid: &ResourceGrid) -> TimeSignal {
    let cfg = &grid.config;
    let n_fft = cfg.fft_size;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n_fft);
    let scale = 1.0 / (n_fft as f64).sqrt();

    let mut samples = Vec::with_capacity(cfg.n_symbols * cfg.samples_per_symbol());
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for l in 0..cfg.n_symbols {
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for k in 0..cfg.n_subcarriers {
            buf[cfg.fft_bin(k)] = grid.grid.at(k, l);
        }
        ifft.process(&mut buf);
        buf.iter_mut().for_each(|v| *v *= scale);
        samples.extend_from_slice(&buf[n_fft - cfg.cp_samples..]);
        samples.extend_from_slice(&buf);
    }
    TimeSignal {
        samples,
        sample_rate: cfg.sample_rate,
    }
}

/// Strip the CP from each symbol block, FFT, and pull the allocated
/// subcarriers back out of the centered mapping.
pub fn demodulate(signal: &TimeSignal, config: &OfdmConfig) -> Result<ResourceGrid> {
    let block = config.samples_per_symbol();
    if signal.samples.len() != config.n_symbols * block {
        return Err(SimError::InvalidArgument(format!(
            "signal length {} does not match {} symbols of {} samples",
            signal.samples.len(),
            config.n_symbols,
            block
        )));
    }
    let n_fft = config.fft_size;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_fft);
    let scale = 1.0 / (n_fft as f64).sqrt();

    let mut grid = ComplexGrid::zeros(config.n_subcarriers, config.n_symbols);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for l in 0..config.n_symbols {
        let body = &signal.samples[l * block + config.cp_samples..(l + 1) * block];
        buf.copy_from_slice(body);
        fft.process(&mut buf);
        for k in 0..config.n_subcarriers {
            grid.set(k, l, buf[config.fft_bin(k)] * scale);
        }
    }
    Ok(ResourceGrid {
        grid,
        config: config.clone(),
    })
}
