// debug scratch — compare statistics contraction vs direct normal equations
use iqjcas_core::bilinear::*;
use iqjcas_core::imbalance::IqPair;
use iqjcas_core::ofdm::OfdmConfig;
use iqjcas_core::channel::{synthesize_channel, Reflector, Scenario};
use iqjcas_core::radar::estimate_channel;
use iqjcas_core::imbalance::afflicted_rx_grid;
use num_complex::Complex64;

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
    let stats = estimate_statistics(&samples, n).unwrap();

    // direct R_u, r_u with g = [1,0,0,0]
    let g = [1.0, 0.0, 0.0, 0.0];
    let mut ru = [[Complex64::new(0.0,0.0);2];2];
    let mut rr = [Complex64::new(0.0,0.0);2];
    for s in &samples[..n] {
        let mut u = [Complex64::new(0.0,0.0);2];
        for l in 0..2 { for m in 0..4 { u[l] += s.x_matrix[l][m]*g[m]; } }
        for l in 0..2 { for l2 in 0..2 { ru[l][l2] += u[l]*u[l2].conj(); } }
        for l in 0..2 { rr[l] += u[l]*s.target.conj(); }
    }
    for l in 0..2 { for l2 in 0..2 { ru[l][l2] /= n as f64; } rr[l] /= n as f64; }
    println!("direct R_u = {:?}", ru);
    println!("direct r_u = {:?}", rr);

    // from stats via the same contraction as solve_f_branch
    let mut big_g = [[0.0f64; 2]; 8];
    for (r, row) in big_g.iter_mut().enumerate() { row[r % 2] = g[r / 2]; }
    let mut ru2 = [[Complex64::new(0.0,0.0);2];2];
    for c1 in 0..2 { for c2 in 0..2 {
        let mut acc = Complex64::new(0.0,0.0);
        for r in 0..8 { for r2 in 0..8 {
            acc += big_g[r][c1] * stats.r_xx[r][r2] * big_g[r2][c2];
        }}
        ru2[c1][c2] = acc;
    }}
    println!("contracted R_u = {:?}", ru2);
    let mut rr2 = [Complex64::new(0.0,0.0);2];
    for c1 in 0..2 {
        for m in 0..4 { for l in 0..2 {
            rr2[c1] += big_g[l + 2*m][c1] * stats.r_xy[l][m];
        }}
    }
    println!("contracted r_u = {:?}", rr2);

    // run awf with trace
    let mut cfg = FilterConfig::new(FilterMethod::Awf);
    cfg.n_stats = n;
    cfg.max_iterations = 12;
    let est = awf_run(&samples, &cfg).unwrap();
    println!("awf iters {} trace {:?}", est.iterations, est.error_trace.iter().map(|e| e.re).collect::<Vec<_>>());
    println!("f_hat {:?} g_hat {:?}", est.f_hat, est.g_hat);
    let fl = [pair.rx.alpha.conj(), pair.rx.beta.conj()];
    let gl = [pair.tx.alpha.re, pair.tx.alpha.im, pair.tx.beta.re, pair.tx.beta.im];
    println!("residual truth {:e}", residual_ratio(&samples[..n], &fl, &gl));
}
