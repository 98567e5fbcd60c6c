//! Radar side of the chain: zero-forcing channel estimation, range-Doppler
//! maps with calibrated axes, 2D cell-averaging CFAR, ghost-candidate
//! flagging, RELAX parameter estimation, and synthetic channel reconstruction.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::{steering_entry, ChannelMatrix};
use crate::error::SimError;
use crate::ofdm::{ComplexGrid, OfdmConfig, ResourceGrid};
use crate::{Result, C0};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| {
                    let x = std::f64::consts::PI * i as f64 / (n as f64 - 1.0).max(1.0);
                    x.sin() * x.sin()
                })
                .collect(),
        }
    }
}

/// 2D transform of a channel matrix. Rows are range bins, columns are
/// center-shifted Doppler bins.
///
/// Axis calibration: range bin `n` sits at `n * c0 / (2 pad_r N_sc df)`
/// meters (rows past the midpoint alias to negative delays), and the
/// centered Doppler bin `m = col - n_doppler/2` sits at
/// `v = -m c0 / (2 f_c pad_d N_sym (T + T_cp))` m/s.
#[derive(Debug, Clone)]
pub struct RangeDopplerMap {
    pub complex_map: ComplexGrid,
    /// |complex_map|^2 in dB normalized to a 0 dB global maximum.
    pub power_map_db: Vec<f64>,
    pub pad_range: usize,
    pub pad_doppler: usize,
    pub window: Window,
    pub config: OfdmConfig,
}

impl RangeDopplerMap {
    pub fn n_range(&self) -> usize {
        self.complex_map.n_rows()
    }

    pub fn n_doppler(&self) -> usize {
        self.complex_map.n_cols()
    }

    /// Meters per padded range bin.
    pub fn range_bin_m(&self) -> f64 {
        self.config.range_bin_m() / self.pad_range as f64
    }

    /// m/s per padded Doppler bin (magnitude of the axis step).
    pub fn velocity_bin_mps(&self) -> f64 {
        self.config.velocity_bin_mps() / self.pad_doppler as f64
    }

    pub fn distance_at_row(&self, row: usize) -> f64 {
        row as f64 * self.range_bin_m()
    }

    pub fn velocity_at_col(&self, col: usize) -> f64 {
        let m = col as f64 - (self.n_doppler() / 2) as f64;
        -m * self.velocity_bin_mps()
    }

    /// Fractional row of a physical distance.
    pub fn row_of_distance(&self, distance_m: f64) -> f64 {
        distance_m / self.range_bin_m()
    }

    /// Fractional column of a physical velocity.
    pub fn col_of_velocity(&self, velocity_mps: f64) -> f64 {
        (self.n_doppler() / 2) as f64 - velocity_mps / self.velocity_bin_mps()
    }

    #[inline]
    pub fn power_lin(&self, row: usize, col: usize) -> f64 {
        self.complex_map.at(row, col).norm_sqr()
    }

    /// Location and linear power of the global maximum.
    pub fn peak(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, 0.0);
        for c in 0..self.n_doppler() {
            for r in 0..self.n_range() {
                let p = self.power_lin(r, c);
                if p > best.2 {
                    best = (r, c, p);
                }
            }
        }
        best
    }

    /// Maximum linear power inside a wrapped box around a fractional center.
    pub fn max_power_in_box(&self, center_row: f64, center_col: f64, half_rows: usize, half_cols: usize) -> f64 {
        let nr = self.n_range() as isize;
        let nd = self.n_doppler() as isize;
        let r0 = center_row.round() as isize;
        let c0 = center_col.round() as isize;
        let mut best = 0.0f64;
        for dr in -(half_rows as isize)..=half_rows as isize {
            for dc in -(half_cols as isize)..=half_cols as isize {
                let r = (r0 + dr).rem_euclid(nr) as usize;
                let c = (c0 + dc).rem_euclid(nd) as usize;
                best = best.max(self.power_lin(r, c));
            }
        }
        best
    }
}

/// One estimated reflection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeakEstimate {
    pub distance_m: f64,
    pub velocity_mps: f64,
    pub amplitude: Complex64,
    /// Power relative to the strongest peak of the same list, in dB.
    pub power_db: f64,
    pub is_ghost_candidate: bool,
}

/// Zero-forcing channel estimate `Y ./ X`.
pub fn estimate_channel(y_rx: &ResourceGrid, x_tx: &ResourceGrid) -> Result<ChannelMatrix> {
    let (nr, nc) = (x_tx.grid.n_rows(), x_tx.grid.n_cols());
    if y_rx.grid.n_rows() != nr || y_rx.grid.n_cols() != nc {
        return Err(SimError::DimensionMismatch(format!(
            "{}x{} vs {nr}x{nc}",
            y_rx.grid.n_rows(),
            y_rx.grid.n_cols()
        )));
    }
    for l in 0..nc {
        for k in 0..nr {
            if x_tx.grid.at(k, l).norm_sqr() == 0.0 {
                return Err(SimError::ZeroDivisor {
                    subcarrier: k,
                    symbol: l,
                });
            }
        }
    }
    Ok(ChannelMatrix {
        grid: y_rx.grid.zip_map(&x_tx.grid, |y, x| y / x)?,
        config: x_tx.config.clone(),
    })
}

/// Transform a channel matrix into a range-Doppler map: optional window,
/// unitary IFFT of length `pad_range * n_sc` along the subcarrier axis,
/// unitary FFT of length `pad_doppler * n_sym` along the symbol axis, and a
/// center shift of the Doppler axis.
pub fn compute_rdm(
    h: &ChannelMatrix,
    pad_range: usize,
    pad_doppler: usize,
    window: Window,
) -> Result<RangeDopplerMap> {
    if pad_range < 1 || pad_doppler < 1 {
        return Err(SimError::InvalidArgument("pads must be >= 1".into()));
    }
    let cfg = &h.config;
    let n_sc = cfg.n_subcarriers;
    let n_sym = cfg.n_symbols;
    let n_range = pad_range * n_sc;
    let n_doppler = pad_doppler * n_sym;

    let w_range = window.coefficients(n_sc);
    let w_doppler = window.coefficients(n_sym);

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n_range);
    let fft = planner.plan_fft_forward(n_doppler);
    let range_scale = 1.0 / (n_range as f64).sqrt();
    let doppler_scale = 1.0 / (n_doppler as f64).sqrt();

    // Stage 1: per-symbol IFFT over (windowed, zero-padded) subcarriers.
    let mut stage = ComplexGrid::zeros(n_range, n_sym);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_range];
    for l in 0..n_sym {
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let col = h.grid.col(l);
        for k in 0..n_sc {
            buf[k] = col[k] * (w_range[k] * w_doppler[l]);
        }
        ifft.process(&mut buf);
        for (r, &v) in buf.iter().enumerate() {
            stage.set(r, l, v * range_scale);
        }
    }

    // Stage 2: per-range-bin FFT over zero-padded symbols, center-shifted.
    let mut out = ComplexGrid::zeros(n_range, n_doppler);
    let mut row_buf = vec![Complex64::new(0.0, 0.0); n_doppler];
    for r in 0..n_range {
        row_buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for l in 0..n_sym {
            row_buf[l] = stage.at(r, l);
        }
        fft.process(&mut row_buf);
        for j in 0..n_doppler {
            let src = (j + n_doppler / 2) % n_doppler;
            out.set(r, j, row_buf[src] * doppler_scale);
        }
    }

    let max_power = out.data().iter().map(|v| v.norm_sqr()).fold(0.0f64, f64::max);
    let floor = 1e-300f64;
    let power_map_db = out
        .data()
        .iter()
        .map(|v| 10.0 * ((v.norm_sqr() / max_power.max(floor)).max(floor)).log10())
        .collect();

    Ok(RangeDopplerMap {
        complex_map: out,
        power_map_db,
        pad_range,
        pad_doppler,
        window,
        config: cfg.clone(),
    })
}

/// Circular sliding-window box sums over a column-major map, used by the
/// CFAR detector. `half` is the half-width per axis.
fn sliding_box_sums(power: &[f64], n_rows: usize, n_cols: usize, half_rows: usize, half_cols: usize) -> Vec<f64> {
    // Column direction first (over rows), then row direction (over cols).
    let mut stage = vec![0.0f64; power.len()];
    for c in 0..n_cols {
        let col = &power[c * n_rows..(c + 1) * n_rows];
        let mut acc: f64 = 0.0;
        for dr in 0..=2 * half_rows {
            acc += col[(dr + n_rows - half_rows) % n_rows];
        }
        for r in 0..n_rows {
            stage[c * n_rows + r] = acc;
            let leave = (r + n_rows - half_rows) % n_rows;
            let enter = (r + half_rows + 1) % n_rows;
            acc += col[enter] - col[leave];
        }
    }
    let mut out = vec![0.0f64; power.len()];
    for r in 0..n_rows {
        let mut acc: f64 = 0.0;
        for dc in 0..=2 * half_cols {
            acc += stage[((dc + n_cols - half_cols) % n_cols) * n_rows + r];
        }
        for c in 0..n_cols {
            out[c * n_rows + r] = acc;
            let leave = ((c + n_cols - half_cols) % n_cols) * n_rows + r;
            let enter = ((c + half_cols + 1) % n_cols) * n_rows + r;
            acc += stage[enter] - stage[leave];
        }
    }
    out
}

/// 2D cell-averaging CFAR with a guard ring. A cell is detected when its
/// power exceeds the training-ring mean by `threshold_db`; detections are
/// reduced to local maxima of the power map. Returns `(row, col)` cells
/// sorted by descending power.
pub fn cfar_detect(
    rdm: &RangeDopplerMap,
    guard_cells: usize,
    training_cells: usize,
    threshold_db: f64,
) -> Result<Vec<(usize, usize)>> {
    let nr = rdm.n_range();
    let nd = rdm.n_doppler();
    let outer = guard_cells + training_cells;
    if 2 * outer + 1 > nr || 2 * outer + 1 > nd {
        return Err(SimError::InvalidArgument(
            "CFAR window does not fit in the map".into(),
        ));
    }
    let power: Vec<f64> = rdm.complex_map.data().iter().map(|v| v.norm_sqr()).collect();
    let outer_sums = sliding_box_sums(&power, nr, nd, outer, outer);
    let inner_sums = sliding_box_sums(&power, nr, nd, guard_cells, guard_cells);
    let ring_cells = ((2 * outer + 1) * (2 * outer + 1) - (2 * guard_cells + 1) * (2 * guard_cells + 1)) as f64;
    let thr = 10f64.powf(threshold_db / 10.0);

    let mut cells = Vec::new();
    for c in 0..nd {
        for r in 0..nr {
            let idx = c * nr + r;
            let ring_mean = (outer_sums[idx] - inner_sums[idx]) / ring_cells;
            if power[idx] > ring_mean * thr {
                // Keep only local maxima of the 8-neighborhood.
                let mut is_max = true;
                'nb: for dc in -1isize..=1 {
                    for dr in -1isize..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let rr = (r as isize + dr).rem_euclid(nr as isize) as usize;
                        let cc = (c as isize + dc).rem_euclid(nd as isize) as usize;
                        if power[cc * nr + rr] > power[idx] {
                            is_max = false;
                            break 'nb;
                        }
                    }
                }
                if is_max {
                    cells.push((r, c));
                }
            }
        }
    }
    cells.sort_by(|a, b| {
        let pa = power[a.1 * nr + a.0];
        let pb = power[b.1 * nr + b.0];
        pb.partial_cmp(&pa).unwrap()
    });
    Ok(cells)
}

/// Turn detected cells into peak estimates with axis-calibrated positions
/// and powers relative to the strongest cell.
pub fn peak_estimates(rdm: &RangeDopplerMap, cells: &[(usize, usize)]) -> Vec<PeakEstimate> {
    let strongest = cells
        .iter()
        .map(|&(r, c)| rdm.power_lin(r, c))
        .fold(0.0f64, f64::max);
    cells
        .iter()
        .map(|&(r, c)| PeakEstimate {
            distance_m: rdm.distance_at_row(r),
            velocity_mps: rdm.velocity_at_col(c),
            amplitude: rdm.complex_map.at(r, c),
            power_db: 10.0 * (rdm.power_lin(r, c) / strongest).log10(),
            is_ghost_candidate: false,
        })
        .collect()
}

/// Mark peaks that look like the velocity-mirrored ghost of a stronger peak:
/// same range within `range_tol_bins`, velocity within the same tolerance of
/// the stronger peak's negated velocity, and at least `power_gap_db` weaker.
/// Peaks must be sorted by descending power.
pub fn flag_ghosts(
    peaks: &mut [PeakEstimate],
    config: &OfdmConfig,
    range_tol_bins: f64,
    power_gap_db: f64,
) {
    let d_tol = range_tol_bins * config.range_bin_m();
    let v_tol = range_tol_bins * config.velocity_bin_mps();
    for b in 0..peaks.len() {
        for a in 0..b {
            let stronger = &peaks[a];
            let weaker = &peaks[b];
            if stronger.is_ghost_candidate {
                continue;
            }
            if (stronger.distance_m - weaker.distance_m).abs() <= d_tol
                && (weaker.velocity_mps + stronger.velocity_mps).abs() <= v_tol
                && weaker.power_db <= stronger.power_db - power_gap_db
            {
                peaks[b].is_ghost_candidate = true;
                break;
            }
        }
    }
}

/// Outcome of a RELAX decomposition.
#[derive(Debug, Clone)]
pub struct RelaxResult {
    pub estimates: Vec<PeakEstimate>,
    pub converged: bool,
    /// Residual energy after each component addition and each cyclic pass.
    pub residual_energies: Vec<f64>,
}

/// One sinusoid component in internal (delay, Doppler) coordinates.
#[derive(Debug, Clone, Copy)]
struct Component {
    tau: f64,
    doppler: f64,
    amplitude: Complex64,
}

impl Component {
    fn to_peak(self, config: &OfdmConfig) -> PeakEstimate {
        PeakEstimate {
            distance_m: self.tau * C0 / 2.0,
            velocity_mps: -self.doppler * C0 / (2.0 * config.carrier_frequency),
            amplitude: self.amplitude,
            power_db: 0.0,
            is_ghost_candidate: false,
        }
    }
}

/// Matched-filter projection of a grid onto the 2D exponential at
/// `(tau, doppler)`, normalized so the result is the least-squares amplitude.
fn project(grid: &ComplexGrid, config: &OfdmConfig, tau: f64, doppler: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..grid.n_cols() {
        for k in 0..grid.n_rows() {
            acc += grid.at(k, l) * steering_entry(config, k, l, tau, doppler).conj();
        }
    }
    acc / (grid.n_rows() as f64 * grid.n_cols() as f64)
}

/// Collapse the symbol axis at a fixed Doppler, leaving a per-subcarrier
/// profile whose delay projection is cheap to evaluate repeatedly.
fn reduce_doppler(grid: &ComplexGrid, config: &OfdmConfig, doppler: f64) -> Vec<Complex64> {
    let ts = config.symbol_interval();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.n_rows()];
    for l in 0..grid.n_cols() {
        let rot = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * doppler * l as f64 * ts);
        let col = grid.col(l);
        for (k, &v) in col.iter().enumerate() {
            out[k] += v * rot;
        }
    }
    out
}

fn reduce_range(grid: &ComplexGrid, config: &OfdmConfig, tau: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); grid.n_cols()];
    for l in 0..grid.n_cols() {
        let col = grid.col(l);
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &v) in col.iter().enumerate() {
            let rot = Complex64::from_polar(
                1.0,
                2.0 * std::f64::consts::PI * config.baseband_frequency(k) * tau,
            );
            acc += v * rot;
        }
        out[l] = acc;
    }
    out
}

fn mf_delay(profile: &[Complex64], config: &OfdmConfig, tau: f64) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &v) in profile.iter().enumerate() {
        let rot = Complex64::from_polar(
            1.0,
            2.0 * std::f64::consts::PI * config.baseband_frequency(k) * tau,
        );
        acc += v * rot;
    }
    acc.norm()
}

fn mf_doppler(profile: &[Complex64], config: &OfdmConfig, doppler: f64) -> f64 {
    let ts = config.symbol_interval();
    let mut acc = Complex64::new(0.0, 0.0);
    for (l, &v) in profile.iter().enumerate() {
        let rot = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * doppler * l as f64 * ts);
        acc += v * rot;
    }
    acc.norm()
}

/// Golden-section maximization over [a, b].
fn golden_max(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Three-point parabolic refinement of a peak on a log-power profile.
fn parabolic_offset(p_minus: f64, p_center: f64, p_plus: f64) -> f64 {
    let denom = p_minus - 2.0 * p_center + p_plus;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    let delta = 0.5 * (p_minus - p_plus) / denom;
    delta.clamp(-0.5, 0.5)
}

/// Coarse (tau, doppler) of the strongest residual cell, refined by 3-point
/// parabolic interpolation on log power.
fn coarse_peak(residual: &ChannelMatrix, pad: usize) -> Result<(f64, f64)> {
    let cfg = &residual.config;
    let rdm = compute_rdm(residual, pad, pad, Window::Rectangular)?;
    let (r, c, _) = rdm.peak();
    let nr = rdm.n_range();
    let nd = rdm.n_doppler();
    let ldb = |row: usize, col: usize| {
        let p = rdm.power_lin(row, col);
        (p.max(1e-300)).ln()
    };
    let dr = parabolic_offset(
        ldb((r + nr - 1) % nr, c),
        ldb(r, c),
        ldb((r + 1) % nr, c),
    );
    let dc = parabolic_offset(
        ldb(r, (c + nd - 1) % nd),
        ldb(r, c),
        ldb(r, (c + 1) % nd),
    );
    let row = r as f64 + dr;
    // Rows past the midpoint alias to negative delays.
    let row_signed = if row > nr as f64 / 2.0 { row - nr as f64 } else { row };
    let tau = row_signed / (nr as f64 * cfg.subcarrier_spacing);
    let m = c as f64 + dc - (nd / 2) as f64;
    let doppler = m / (nd as f64 * cfg.symbol_interval());
    Ok((tau, doppler))
}

/// Refine one component on `work` (residual plus the component itself) with
/// alternating golden-section searches over a local box, then re-project the
/// amplitude.
fn refine_component(
    work: &ComplexGrid,
    config: &OfdmConfig,
    mut tau: f64,
    mut doppler: f64,
    half_range_bins: f64,
    rounds: usize,
) -> Component {
    let tau_bin = 1.0 / (config.n_subcarriers as f64 * config.subcarrier_spacing);
    let dop_bin = 1.0 / (config.n_symbols as f64 * config.symbol_interval());
    for _ in 0..rounds {
        let profile = reduce_doppler(work, config, doppler);
        tau = golden_max(
            |t| mf_delay(&profile, config, t),
            tau - half_range_bins * tau_bin,
            tau + half_range_bins * tau_bin,
            30,
        );
        let profile = reduce_range(work, config, tau);
        doppler = golden_max(
            |d| mf_doppler(&profile, config, d),
            doppler - half_range_bins * dop_bin,
            doppler + half_range_bins * dop_bin,
            30,
        );
    }
    let amplitude = project(work, config, tau, doppler);
    Component {
        tau,
        doppler,
        amplitude,
    }
}

fn subtract_component(grid: &mut ComplexGrid, config: &OfdmConfig, comp: &Component, sign: f64) {
    for l in 0..grid.n_cols() {
        for k in 0..grid.n_rows() {
            let v = grid.at(k, l) + sign * comp.amplitude * steering_entry(config, k, l, comp.tau, comp.doppler);
            grid.set(k, l, v);
        }
    }
}

/// RELAX decomposition: repeatedly pull the strongest 2D exponential out of
/// the residual, re-refining all previously found components after each new
/// one until the relative residual-energy change falls below
/// `convergence_tol`.
pub fn relax_estimate(
    h: &ChannelMatrix,
    max_components: usize,
    convergence_tol: f64,
) -> Result<RelaxResult> {
    if max_components == 0 {
        return Err(SimError::InvalidArgument("max_components must be >= 1".into()));
    }
    let cfg = &h.config;
    let coarse_pad = if cfg.n_subcarriers > 1024 { 2 } else { 4 };
    let total_energy = h.grid.energy();
    let mut result = RelaxResult {
        estimates: Vec::new(),
        converged: true,
        residual_energies: Vec::new(),
    };
    if total_energy == 0.0 {
        return Ok(result);
    }

    let mut residual = h.grid.clone();
    let mut components: Vec<Component> = Vec::new();
    const MAX_CYCLES: usize = 20;

    for _ in 0..max_components {
        if residual.energy() < 1e-20 * total_energy {
            break;
        }
        let (tau0, dop0) = coarse_peak(
            &ChannelMatrix {
                grid: residual.clone(),
                config: cfg.clone(),
            },
            coarse_pad,
        )?;
        let comp = refine_component(&residual, cfg, tau0, dop0, 1.0, 3);
        subtract_component(&mut residual, cfg, &comp, -1.0);
        components.push(comp);
        result.residual_energies.push(residual.energy());

        // Cyclic re-refinement of every component against the others.
        if components.len() > 1 {
            let mut prev_energy = residual.energy();
            let mut cycles = 0;
            loop {
                for i in 0..components.len() {
                    let old = components[i];
                    subtract_component(&mut residual, cfg, &old, 1.0);
                    let refined = refine_component(&residual, cfg, old.tau, old.doppler, 0.5, 2);
                    subtract_component(&mut residual, cfg, &refined, -1.0);
                    components[i] = refined;
                }
                let energy = residual.energy();
                result.residual_energies.push(energy);
                cycles += 1;
                if (prev_energy - energy).abs() / total_energy < convergence_tol {
                    break;
                }
                if cycles >= MAX_CYCLES {
                    result.converged = false;
                    break;
                }
                prev_energy = energy;
            }
        }
    }

    let strongest = components
        .iter()
        .map(|c| c.amplitude.norm_sqr())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    result.estimates = components
        .iter()
        .map(|c| {
            let mut p = c.to_peak(cfg);
            p.power_db = 10.0 * (c.amplitude.norm_sqr() / strongest).log10();
            p
        })
        .collect();
    Ok(result)
}

/// Rebuild a channel matrix from peak estimates with the same synthesis
/// kernel the simulator uses.
pub fn reconstruct_channel(estimates: &[PeakEstimate], config: &OfdmConfig) -> Result<ChannelMatrix> {
    if estimates.is_empty() {
        return Err(SimError::InvalidArgument(
            "cannot reconstruct from zero estimates".into(),
        ));
    }
    let mut grid = ComplexGrid::zeros(config.n_subcarriers, config.n_symbols);
    for e in estimates {
        let tau = 2.0 * e.distance_m / C0;
        let doppler = -2.0 * e.velocity_mps * config.carrier_frequency / C0;
        for l in 0..config.n_symbols {
            for k in 0..config.n_subcarriers {
                let v = grid.at(k, l) + e.amplitude * steering_entry(config, k, l, tau, doppler);
                grid.set(k, l, v);
            }
        }
    }
    Ok(ChannelMatrix {
        grid,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synthesize_channel, Reflector, Scenario};
    use crate::ofdm::generate_grid;
    use approx::assert_abs_diff_eq;

    fn cfg() -> OfdmConfig {
        OfdmConfig::new(3, 64, 16, 128, 9, 28.0e9).unwrap()
    }

    fn single_reflector(c: &OfdmConfig, d: f64, v: f64, p_db: f64) -> ChannelMatrix {
        synthesize_channel(
            &Scenario {
                reflectors: vec![Reflector::new(d, v, p_db)],
                snr_db: None,
                seed: 0,
            },
            c,
        )
        .unwrap()
    }

    #[test]
    fn zero_forcing_recovers_channel() {
        let c = cfg();
        let x = generate_grid(&c, 256, 1).unwrap();
        let h = single_reflector(&c, 7.0, 3.0, 0.0);
        let y = crate::channel::apply_channel(&x, &h).unwrap();
        let est = estimate_channel(&y, &x).unwrap();
        for (a, b) in est.grid.data().iter().zip(h.grid.data()) {
            assert!((a - b).norm() < 1e-12);
        }
        let same = estimate_channel(&x, &x).unwrap();
        assert!(same.grid.data().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    /// With imbalance, the zero-forcing estimate expands exactly into the
    /// alpha/beta terms of the afflicted channel model.
    #[test]
    fn zero_forcing_matches_term_expansion_under_imbalance() {
        let c = cfg();
        let x = generate_grid(&c, 256, 2).unwrap();
        let h = single_reflector(&c, 4.0, 11.0, 0.0);
        let pair = crate::imbalance::IqPair::literature();
        let y = crate::imbalance::afflicted_rx_grid(&x, &h, &pair, None).unwrap();
        let h_iq = estimate_channel(&y, &x).unwrap();

        let xm = crate::ofdm::conj_mirror(&x.grid);
        let hm = crate::ofdm::conj_mirror(&h.grid);
        let (at, bt, ar, br) = (pair.tx.alpha, pair.tx.beta, pair.rx.alpha, pair.rx.beta);
        for l in 0..c.n_symbols {
            for k in 0..c.n_subcarriers {
                let xp = xm.at(k, l) / x.grid.at(k, l);
                let expect = ar * at * h.grid.at(k, l)
                    + ar * bt * xp * h.grid.at(k, l)
                    + br * at.conj() * xp * hm.at(k, l)
                    + br * bt.conj() * hm.at(k, l);
                assert!((h_iq.grid.at(k, l) - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn flat_channel_peaks_at_origin() {
        let c = cfg();
        let h = single_reflector(&c, 0.0, 0.0, 0.0);
        let rdm = compute_rdm(&h, 2, 2, Window::Rectangular).unwrap();
        let (r, col, _) = rdm.peak();
        assert_eq!(r, 0);
        assert_eq!(col, rdm.n_doppler() / 2);
        assert_abs_diff_eq!(rdm.distance_at_row(r), 0.0);
        assert_abs_diff_eq!(rdm.velocity_at_col(col), 0.0);
    }

    #[test]
    fn rdm_peak_lands_on_calibrated_axes() {
        let c = cfg();
        // Off-bin target: quadratic interpolation must land within 0.1 bin
        // at pad 8.
        let d = 3.3 * c.range_bin_m();
        let v = 2.6 * c.velocity_bin_mps();
        let h = single_reflector(&c, d, v, 0.0);
        let rdm = compute_rdm(&h, 8, 8, Window::Rectangular).unwrap();
        let (r, col, _) = rdm.peak();
        let expected_row = rdm.row_of_distance(d);
        let expected_col = rdm.col_of_velocity(v);
        assert!(
            (r as f64 - expected_row).abs() <= 0.5 + 1e-9,
            "row {r} vs {expected_row}"
        );
        assert!(
            (col as f64 - expected_col).abs() <= 0.5 + 1e-9,
            "col {col} vs {expected_col}"
        );

        // Parabolic refinement on the log power gets below 0.1 padded bin.
        let nr = rdm.n_range();
        let nd = rdm.n_doppler();
        let lp = |row: usize, colx: usize| rdm.power_lin(row, colx).max(1e-300).ln();
        let fr = r as f64
            + parabolic_offset(lp((r + nr - 1) % nr, col), lp(r, col), lp((r + 1) % nr, col));
        let fc = col as f64
            + parabolic_offset(lp(r, (col + nd - 1) % nd), lp(r, col), lp(r, (col + 1) % nd));
        assert!((fr - expected_row).abs() < 0.1, "row {fr} vs {expected_row}");
        assert!((fc - expected_col).abs() < 0.1, "col {fc} vs {expected_col}");
    }

    #[test]
    fn rdm_on_bin_peak_is_exact_within_a_bin() {
        let c = cfg();
        let d = 3.0 * c.range_bin_m();
        let v = -3.0 * c.velocity_bin_mps();
        let h = single_reflector(&c, d, v, 0.0);
        let rdm = compute_rdm(&h, 1, 1, Window::Rectangular).unwrap();
        let (r, col, _) = rdm.peak();
        assert!((r as f64 - rdm.row_of_distance(d)).abs() <= 1.0);
        assert!((col as f64 - rdm.col_of_velocity(v)).abs() <= 1.0);
    }

    #[test]
    fn rdm_is_unitary() {
        let c = cfg();
        let h = synthesize_channel(
            &Scenario {
                reflectors: vec![
                    Reflector::new(3.0, 5.0, 0.0),
                    Reflector::new(11.0, -2.0, -17.0),
                ],
                snr_db: None,
                seed: 0,
            },
            &c,
        )
        .unwrap();
        for window in [Window::Rectangular, Window::Hann] {
            let rdm = compute_rdm(&h, 2, 4, window).unwrap();
            let wr = window.coefficients(c.n_subcarriers);
            let wd = window.coefficients(c.n_symbols);
            let mut windowed_energy = 0.0;
            for l in 0..c.n_symbols {
                for k in 0..c.n_subcarriers {
                    windowed_energy += (h.grid.at(k, l) * wr[k] * wd[l]).norm_sqr();
                }
            }
            let map_energy = rdm.complex_map.energy();
            assert!(
                (map_energy - windowed_energy).abs() <= 1e-9 * windowed_energy,
                "{map_energy} vs {windowed_energy}"
            );
        }
    }

    #[test]
    fn cfar_finds_single_peak_on_zero_background() {
        let c = cfg();
        let mut rdm = compute_rdm(&single_reflector(&c, 0.0, 0.0, 0.0), 1, 1, Window::Rectangular).unwrap();
        // Construct an explicit unit peak on a tiny uniform background.
        let nr = rdm.complex_map.n_rows();
        let nd = rdm.complex_map.n_cols();
        rdm.complex_map = ComplexGrid::from_fn(nr, nd, |r, col| {
            if r == 10 && col == 5 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(1e-8, 0.0)
            }
        });
        let hits = cfar_detect(&rdm, 2, 4, 12.0).unwrap();
        assert_eq!(hits, vec![(10, 5)]);
    }

    #[test]
    fn cfar_rejects_pure_noise_at_high_threshold() {
        let c = cfg();
        let sc = Scenario {
            reflectors: vec![Reflector::new(0.0, 0.0, 0.0)],
            snr_db: Some(0.0),
            seed: 12,
        };
        let noise = crate::channel::sample_noise_grid(&sc, &c).unwrap();
        let h = ChannelMatrix {
            grid: noise,
            config: c.clone(),
        };
        let rdm = compute_rdm(&h, 1, 1, Window::Rectangular).unwrap();
        let hits = cfar_detect(&rdm, 2, 4, 40.0).unwrap();
        assert!(hits.len() <= 1, "{} false alarms", hits.len());
    }

    #[test]
    fn cfar_window_must_fit() {
        let c = cfg();
        let rdm = compute_rdm(&single_reflector(&c, 0.0, 0.0, 0.0), 1, 1, Window::Rectangular).unwrap();
        assert!(cfar_detect(&rdm, 4, 10, 12.0).is_err());
    }

    #[test]
    fn ghost_flagging_rules() {
        let c = cfg();
        let mk = |d: f64, v: f64, p: f64| PeakEstimate {
            distance_m: d,
            velocity_mps: v,
            amplitude: Complex64::new(1.0, 0.0),
            power_db: p,
            is_ghost_candidate: false,
        };
        // Mirrored weaker peak is flagged.
        let mut peaks = vec![mk(6.0, 15.0, 0.0), mk(6.0, -15.0, -20.0)];
        flag_ghosts(&mut peaks, &c, 2.0, 10.0);
        assert!(!peaks[0].is_ghost_candidate);
        assert!(peaks[1].is_ghost_candidate);

        // A single peak is never flagged.
        let mut single = vec![mk(6.0, 15.0, 0.0)];
        flag_ghosts(&mut single, &c, 2.0, 10.0);
        assert!(!single[0].is_ghost_candidate);

        // Equal-power mirrored peaks fail the gap rule.
        let mut equal = vec![mk(6.0, 15.0, 0.0), mk(6.0, -15.0, 0.0)];
        flag_ghosts(&mut equal, &c, 2.0, 10.0);
        assert!(equal.iter().all(|p| !p.is_ghost_candidate));
    }

    #[test]
    fn relax_recovers_single_component() {
        let c = cfg();
        let d = 4.37 * c.range_bin_m();
        let v = 1.83 * c.velocity_bin_mps();
        let mut sc = Scenario {
            reflectors: vec![Reflector::new(d, v, 0.0)],
            snr_db: None,
            seed: 0,
        };
        sc.reflectors[0].phase_rad = 0.9;
        let h = synthesize_channel(&sc, &c).unwrap();
        let out = relax_estimate(&h, 1, 1e-9).unwrap();
        assert_eq!(out.estimates.len(), 1);
        let e = &out.estimates[0];
        assert!(
            (e.distance_m - d).abs() < 0.01 * c.range_bin_m(),
            "distance {} vs {d}",
            e.distance_m
        );
        assert!(
            (e.velocity_mps - v).abs() < 0.01 * c.velocity_bin_mps(),
            "velocity {} vs {v}",
            e.velocity_mps
        );
        let truth = sc.reflectors[0].amplitude();
        assert!(
            (e.amplitude - truth).norm() < 1e-3 * truth.norm(),
            "amplitude {} vs {truth}",
            e.amplitude
        );
    }

    #[test]
    fn relax_zero_channel_is_empty() {
        let c = cfg();
        let h = ChannelMatrix {
            grid: ComplexGrid::zeros(c.n_subcarriers, c.n_symbols),
            config: c.clone(),
        };
        let out = relax_estimate(&h, 4, 1e-9).unwrap();
        assert!(out.estimates.is_empty());
        assert!(out.converged);
    }

    #[test]
    fn relax_residual_energy_non_increasing() {
        let c = cfg();
        let h = synthesize_channel(
            &Scenario {
                reflectors: vec![
                    Reflector::new(2.0, 4.0, 0.0),
                    Reflector::new(9.0, -7.0, -8.0),
                    Reflector::new(15.0, 1.5, -12.0),
                ],
                snr_db: None,
                seed: 0,
            },
            &c,
        )
        .unwrap();
        let out = relax_estimate(&h, 3, 1e-10).unwrap();
        for w in out.residual_energies.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn reconstruct_round_trips_relax() {
        let c = cfg();
        // Components separated by more than a resolution cell in range.
        let truth = Scenario {
            reflectors: vec![
                Reflector::new(1.3 * c.range_bin_m(), 0.9 * c.velocity_bin_mps(), 0.0),
                Reflector::new(3.1 * c.range_bin_m(), -1.4 * c.velocity_bin_mps(), -9.0),
            ],
            snr_db: None,
            seed: 0,
        };
        let h = synthesize_channel(&truth, &c).unwrap();
        let out = relax_estimate(&h, 2, 1e-10).unwrap();
        let rebuilt = reconstruct_channel(&out.estimates, &c).unwrap();
        let err = h
            .grid
            .zip_map(&rebuilt.grid, |a, b| a - b)
            .unwrap()
            .energy()
            .sqrt();
        let norm = h.grid.energy().sqrt();
        assert!(err < 1e-3 * norm, "relative error {}", err / norm);
    }

    #[test]
    fn reconstruct_exact_ground_truth() {
        let c = cfg();
        let unit = PeakEstimate {
            distance_m: 0.0,
            velocity_mps: 0.0,
            amplitude: Complex64::new(1.0, 0.0),
            power_db: 0.0,
            is_ghost_candidate: false,
        };
        let h = reconstruct_channel(&[unit], &c).unwrap();
        assert!(h.grid.data().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
        assert!(reconstruct_channel(&[], &c).is_err());
    }
}
