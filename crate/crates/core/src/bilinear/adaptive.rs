//! Sample-adaptive bilinear filters: LMS, NLMS and RLS.
//!
//! One iteration consumes one [`SystemSample`]. The error is always the
//! a-priori error `e_i = h_iq,i - f^H X_i g` evaluated with the previous
//! state, and both half-updates of an iteration read the previous state.

use num_complex::Complex64;

use super::counted::Ops;
use super::{BilinearEstimate, FilterConfig, FilterMethod, OpCounter, SystemSample, L_DIM, M_DIM};
use crate::error::SimError;
use crate::Result;

const DIVERGENCE_BOUND: f64 = 1e6;
const COVARIANCE_BOUND: f64 = 1e12;

fn iteration_budget(samples: &[SystemSample], config: &FilterConfig) -> usize {
    if config.max_iterations == 0 {
        samples.len()
    } else {
        config.max_iterations.min(samples.len())
    }
}

/// `u = X g` with complex-by-real products and per-row accumulation.
fn regressor_u(ops: &mut Ops, x: &[[Complex64; M_DIM]; L_DIM], g: &[f64; M_DIM]) -> [Complex64; L_DIM] {
    let mut u = [Complex64::new(0.0, 0.0); L_DIM];
    for l in 0..L_DIM {
        let mut acc = ops.cmul_cr(x[l][0], g[0]);
        for m in 1..M_DIM {
            let p = ops.cmul_cr(x[l][m], g[m]);
            acc = ops.cadd(acc, p);
        }
        u[l] = acc;
    }
    u
}

/// `y = f^H u` and the a-priori error.
fn apriori_error(
    ops: &mut Ops,
    f: &[Complex64; L_DIM],
    u: &[Complex64; L_DIM],
    target: Complex64,
) -> Complex64 {
    let mut y = ops.cmul(f[0].conj(), u[0]);
    for l in 1..L_DIM {
        let p = ops.cmul(f[l].conj(), u[l]);
        y = ops.cadd(y, p);
    }
    ops.csub(target, y)
}

/// `z = X^H f` with full complex products and per-entry accumulation.
fn regressor_z(ops: &mut Ops, x: &[[Complex64; M_DIM]; L_DIM], f: &[Complex64; L_DIM]) -> [Complex64; M_DIM] {
    let mut z = [Complex64::new(0.0, 0.0); M_DIM];
    for m in 0..M_DIM {
        let mut acc = ops.cmul(x[0][m].conj(), f[0]);
        for l in 1..L_DIM {
            let p = ops.cmul(x[l][m].conj(), f[l]);
            acc = ops.cadd(acc, p);
        }
        z[m] = acc;
    }
    z
}

fn check_divergence(e: Complex64, iteration: usize) -> Result<()> {
    let mag = e.norm();
    if !mag.is_finite() || mag > DIVERGENCE_BOUND {
        return Err(SimError::Divergence {
            iteration,
            error_abs: mag,
        });
    }
    Ok(())
}

/// Bilinear LMS: `f += mu_f conj(e) X g`, `g += mu_g 2 Re{e X^H f}`.
///
/// The g half-step is computed as `Re{(mu_g X)^H (2e f)}`, which costs
/// exactly the published per-iteration budget of 50 additions and 78
/// multiplications.
pub fn lms_run(samples: &[SystemSample], config: &FilterConfig) -> Result<BilinearEstimate> {
    config.validate()?;
    let mut est = BilinearEstimate::new(config);
    let mut f = config.f_init;
    let mut g = config.g_init;

    for (i, s) in samples.iter().take(iteration_budget(samples, config)).enumerate() {
        let mut counter = OpCounter::default();
        {
            let ops = &mut Ops::new(&mut counter);
            let x = &s.x_matrix;

            let u = regressor_u(ops, x, &g);
            let e = apriori_error(ops, &f, &u, s.target);
            est.error_trace.push(e);
            check_divergence(e, i)?;

            // f half-step.
            let c = ops.cmul(Complex64::new(config.mu_f, 0.0), e.conj());
            let mut f_new = f;
            for l in 0..L_DIM {
                let step = ops.cmul(c, u[l]);
                f_new[l] = ops.cadd(f[l], step);
            }

            // g half-step from the pre-update f.
            let mut x_scaled = [[Complex64::new(0.0, 0.0); M_DIM]; L_DIM];
            for l in 0..L_DIM {
                for m in 0..M_DIM {
                    x_scaled[l][m] = ops.cmul_cr(x[l][m], config.mu_g);
                }
            }
            let e2 = ops.cmul_cr(e, 2.0);
            let mut w = [Complex64::new(0.0, 0.0); L_DIM];
            for l in 0..L_DIM {
                w[l] = ops.cmul(e2, f[l]);
            }
            for m in 0..M_DIM {
                let mut p = ops.re_prod_conj(x_scaled[0][m], w[0]);
                for l in 1..L_DIM {
                    let t = ops.re_prod_conj(x_scaled[l][m], w[l]);
                    p = ops.radd(p, t);
                }
                g[m] = ops.radd(g[m], p);
            }
            f = f_new;
        }
        if i == 0 {
            est.ops_per_iteration = counter;
        }
        est.op_counts += counter;
        est.iterations = i + 1;
    }
    est.f_hat = f;
    est.g_hat = g;
    Ok(est)
}

/// Bilinear NLMS: LMS with the step gains normalized per branch,
/// `alpha_h / (delta_h + ||X g||^2)` and `alpha_g / (delta_g + ||X^H f||^2)`.
pub fn nlms_run(samples: &[SystemSample], config: &FilterConfig) -> Result<BilinearEstimate> {
    config.validate()?;
    let mut est = BilinearEstimate::new(config);
    let mut f = config.f_init;
    let mut g = config.g_init;

    for (i, s) in samples.iter().take(iteration_budget(samples, config)).enumerate() {
        let mut counter = OpCounter::default();
        {
            let ops = &mut Ops::new(&mut counter);
            let x = &s.x_matrix;

            let u = regressor_u(ops, x, &g);
            let e = apriori_error(ops, &f, &u, s.target);
            est.error_trace.push(e);
            check_divergence(e, i)?;

            // f half-step with the normalized gain.
            let mut nu = ops.cmul(u[0].conj(), u[0]);
            for l in 1..L_DIM {
                let p = ops.cmul(u[l].conj(), u[l]);
                nu = ops.cadd(nu, p);
            }
            let den_h = ops.radd(config.delta_h, nu.re);
            let r_h = ops.rdiv(1.0, den_h);
            let s_f = ops.rmul(config.alpha_h, r_h);
            let c = ops.cmul(Complex64::new(s_f, 0.0), e.conj());
            let mut f_new = f;
            for l in 0..L_DIM {
                let step = ops.cmul(c, u[l]);
                f_new[l] = ops.cadd(f[l], step);
            }

            // g half-step from the pre-update f.
            let z = regressor_z(ops, x, &f);
            let mut nz = ops.re_prod_conj(z[0], z[0]);
            for m in 1..M_DIM {
                let t = ops.re_prod_conj(z[m], z[m]);
                nz = ops.radd(nz, t);
            }
            let den_g = ops.radd(config.delta_g, nz);
            let r_g = ops.rdiv(1.0, den_g);
            let t = ops.rmul(config.alpha_g, r_g);
            let s_g = ops.rmul(2.0, t);
            for m in 0..M_DIM {
                let p = ops.re_prod(e, z[m]);
                let step = ops.rmul(s_g, p);
                g[m] = ops.radd(g[m], step);
            }
            f = f_new;
        }
        if i == 0 {
            est.ops_per_iteration = counter;
        }
        est.op_counts += counter;
        est.iterations = i + 1;
    }
    est.f_hat = f;
    est.g_hat = g;
    Ok(est)
}

/// Bilinear RLS: an exponentially weighted complex RLS on the regressor
/// `u = X g` for the f branch, and a real RLS on the stacked real/imaginary
/// composite of `z = X^H f` for the g branch (a rank-2 block update).
pub fn rls_run(samples: &[SystemSample], config: &FilterConfig) -> Result<BilinearEstimate> {
    config.validate()?;
    let mut est = BilinearEstimate::new(config);
    let mut f = config.f_init;
    let mut g = config.g_init;
    let lambda = config.lambda_forget;
    let inv_lambda = 1.0 / lambda;

    let mut p_h = [[Complex64::new(0.0, 0.0); L_DIM]; L_DIM];
    for (l, row) in p_h.iter_mut().enumerate() {
        row[l] = Complex64::new(config.p_init, 0.0);
    }
    let mut p_g = [[0.0f64; M_DIM]; M_DIM];
    for (m, row) in p_g.iter_mut().enumerate() {
        row[m] = config.p_init;
    }

    for (i, s) in samples.iter().take(iteration_budget(samples, config)).enumerate() {
        let mut counter = OpCounter::default();
        {
            let ops = &mut Ops::new(&mut counter);
            let x = &s.x_matrix;

            let u = regressor_u(ops, x, &g);
            let e = apriori_error(ops, &f, &u, s.target);
            est.error_trace.push(e);
            check_divergence(e, i)?;

            // Complex RLS on the f branch.
            let mut pi = [Complex64::new(0.0, 0.0); L_DIM];
            for l in 0..L_DIM {
                let mut acc = ops.cmul(p_h[l][0], u[0]);
                for l2 in 1..L_DIM {
                    let p = ops.cmul(p_h[l][l2], u[l2]);
                    acc = ops.cadd(acc, p);
                }
                pi[l] = acc;
            }
            let mut sigma = ops.re_prod_conj(u[0], pi[0]);
            for l in 1..L_DIM {
                let t = ops.re_prod_conj(u[l], pi[l]);
                sigma = ops.radd(sigma, t);
            }
            let den = ops.radd(lambda, sigma);
            let mut k = [Complex64::new(0.0, 0.0); L_DIM];
            for l in 0..L_DIM {
                k[l] = ops.cdiv_r(pi[l], den);
            }
            let mut f_new = f;
            for l in 0..L_DIM {
                let step = ops.cmul(k[l], e.conj());
                f_new[l] = ops.cadd(f[l], step);
            }
            // P <- (P - k pi^H) / lambda; u^H P equals pi^H because P is
            // Hermitian.
            for l in 0..L_DIM {
                for l2 in 0..L_DIM {
                    let o = ops.cmul(k[l], pi[l2].conj());
                    let d = ops.csub(p_h[l][l2], o);
                    p_h[l][l2] = ops.cmul_cr(d, inv_lambda);
                }
            }

            // Real-composite RLS on the g branch, from the pre-update f.
            let z = regressor_z(ops, x, &f);
            let a: [f64; M_DIM] = [z[0].re, z[1].re, z[2].re, z[3].re];
            let b: [f64; M_DIM] = [-z[0].im, -z[1].im, -z[2].im, -z[3].im];
            // V = P_g [a b]
            let mut v = [[0.0f64; 2]; M_DIM];
            for m in 0..M_DIM {
                for (j, col) in [&a, &b].into_iter().enumerate() {
                    let mut acc = ops.rmul(p_g[m][0], col[0]);
                    for m2 in 1..M_DIM {
                        let p = ops.rmul(p_g[m][m2], col[m2]);
                        acc = ops.radd(acc, p);
                    }
                    v[m][j] = acc;
                }
            }
            // S = lambda I + [a b]^T V, symmetric 2x2.
            let mut s00 = ops.rmul(a[0], v[0][0]);
            let mut s01 = ops.rmul(a[0], v[0][1]);
            let mut s11 = ops.rmul(b[0], v[0][1]);
            for m in 1..M_DIM {
                let p0 = ops.rmul(a[m], v[m][0]);
                s00 = ops.radd(s00, p0);
                let p1 = ops.rmul(a[m], v[m][1]);
                s01 = ops.radd(s01, p1);
                let p2 = ops.rmul(b[m], v[m][1]);
                s11 = ops.radd(s11, p2);
            }
            s00 = ops.radd(s00, lambda);
            s11 = ops.radd(s11, lambda);
            let d0 = ops.rmul(s00, s11);
            let d1 = ops.rmul(s01, s01);
            let det = ops.rsub(d0, d1);
            let rdet = ops.rdiv(1.0, det);
            let i00 = ops.rmul(s11, rdet);
            let i11 = ops.rmul(s00, rdet);
            let i01 = -ops.rmul(s01, rdet);
            // K = V S^-1
            let mut kg = [[0.0f64; 2]; M_DIM];
            for m in 0..M_DIM {
                let p0 = ops.rmul(v[m][0], i00);
                let p1 = ops.rmul(v[m][1], i01);
                kg[m][0] = ops.radd(p0, p1);
                let p2 = ops.rmul(v[m][0], i01);
                let p3 = ops.rmul(v[m][1], i11);
                kg[m][1] = ops.radd(p2, p3);
            }
            // The composite innovation is exactly [Re e, Im e].
            for m in 0..M_DIM {
                let p0 = ops.rmul(kg[m][0], e.re);
                let p1 = ops.rmul(kg[m][1], e.im);
                let step = ops.radd(p0, p1);
                g[m] = ops.radd(g[m], step);
            }
            // P_g <- (P_g - K V^T) / lambda
            for m in 0..M_DIM {
                for m2 in 0..M_DIM {
                    let p0 = ops.rmul(kg[m][0], v[m2][0]);
                    let p1 = ops.rmul(kg[m][1], v[m2][1]);
                    let w = ops.radd(p0, p1);
                    let diff = ops.rsub(p_g[m][m2], w);
                    p_g[m][m2] = ops.rmul(diff, inv_lambda);
                }
            }
            f = f_new;

            let mut trace = ops.radd(p_h[0][0].re, p_h[1][1].re);
            for m in 0..M_DIM {
                trace = ops.radd(trace, p_g[m][m]);
            }
            if !trace.is_finite() || trace > COVARIANCE_BOUND {
                return Err(SimError::Instability {
                    iteration: i,
                    trace,
                });
            }
        }
        if i == 0 {
            est.ops_per_iteration = counter;
        }
        est.op_counts += counter;
        est.iterations = i + 1;
    }
    est.f_hat = f;
    est.g_hat = g;
    Ok(est)
}
