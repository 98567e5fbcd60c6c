// debug scratch — verify each AWF half-step is an exact LS optimum
use iqjcas_core::bilinear::*;
use iqjcas_core::imbalance::{afflicted_rx_grid, IqPair};
use iqjcas_core::ofdm::OfdmConfig;
use iqjcas_core::channel::{synthesize_channel, Reflector, Scenario};
use iqjcas_core::radar::estimate_channel;
use num_complex::Complex64;

fn j_cost(samples: &[SystemSample], f: &[Complex64;2], g: &[f64;4]) -> f64 {
    samples.iter().map(|s| (s.target - model_output(f, g, &s.x_matrix)).norm_sqr()).sum::<f64>() / samples.len() as f64
}

fn main() {
    let c = OfdmConfig::new(3, 64, 4, 128, 9, 28.0e9).unwrap();
    let pair = IqPair::literature();
    let x = iqjcas_core::ofdm::generate_grid(&c, 256, 4).unwrap();
    let h = synthesize_channel(&Scenario {
        reflectors: vec![Reflector::new(1.0, 0.0, 0.0), Reflector::new(20.0, 12.0, -20.0)],
        snr_db: None, seed: 0 }, &c).unwrap();
    let y = afflicted_rx_grid(&x, &h, &pair, None).unwrap();
    let h_iq = estimate_channel(&y, &x).unwrap();
    let samples = build_samples(&h_iq, &h, &x, SymbolSelection::All).unwrap();
    let n = 252usize;
    let cache = &samples[..n];

    let mut cfg = FilterConfig::new(FilterMethod::Awf);
    cfg.n_stats = n;
    cfg.max_iterations = 3;
    let est = awf_run(&samples, &cfg).unwrap();
    let f = est.f_hat; let g = est.g_hat;
    let j = j_cost(cache, &f, &g);
    println!("J after 3 alternations = {j:e}");

    // check g-optimality: perturb g in each coordinate
    for m in 0..4 {
        for d in [-1e-6, 1e-6] {
            let mut g2 = g; g2[m] += d;
            let j2 = j_cost(cache, &f, &g2);
            if j2 < j - 1e-18 { println!("g[{m}] {d:+e} improves: {j:e} -> {j2:e}"); }
        }
    }
    // check f-optimality — note f was solved BEFORE the g step, so slight
    // improvement may exist; solve again to test the solver itself.
    for l in 0..2 {
        for d in [Complex64::new(1e-6,0.0), Complex64::new(0.0,1e-6), Complex64::new(-1e-6,0.0), Complex64::new(0.0,-1e-6)] {
            let mut f2 = f; f2[l] += d;
            let j2 = j_cost(cache, &f2, &g);
            if j2 < j - 1e-18 { println!("f[{l}] {d:?} improves: {j:e} -> {j2:e}"); }
        }
    }
    // direct brute-force check of the g normal equations given f
    let mut rv = [[0.0f64;4];4];
    let mut rhs = [0.0f64;4];
    for s in cache {
        let xm = &s.x_matrix;
        let mut z = [Complex64::new(0.0,0.0);4];
        for m in 0..4 { for l in 0..2 { z[m] += xm[l][m].conj() * f[l]; } }
        for m in 0..4 { for m2 in 0..4 { rv[m][m2] += (z[m]*z[m2].conj()).re; } }
        for m in 0..4 { rhs[m] += (z[m]*s.target).re; }
    }
    // solve 4x4 via Gaussian elimination
    let mut a = rv; let mut b = rhs;
    for i in 0..4 {
        let piv = a[i][i];
        for j2 in i..4 { a[i][j2] /= piv; }
        b[i] /= piv;
        for r in 0..4 { if r != i {
            let fct = a[r][i];
            for j2 in i..4 { a[r][j2] -= fct*a[i][j2]; }
            b[r] -= fct*b[i];
        }}
    }
    println!("direct optimal g given f = {b:?}");
    println!("awf g                   = {g:?}");
    let jd = j_cost(cache, &f, &b);
    println!("J with direct g = {jd:e} vs awf J = {j:e}");
}
