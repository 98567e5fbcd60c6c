//! Block Wiener estimators: second-order statistics, the alternating Wiener
//! filter (exact per-branch least squares) and its damped iterative variant.
//!
//! Both filters consume the sample statistics `R_xx = E[vec(X) vec(X)^H]`
//! and `R_Xy = E[X y*]` rather than streaming samples: each alternation
//! contracts the cached statistics into the per-branch normal equations and
//! solves them with LDL factorizations. The vectorization is column-major,
//! `vec(X)[l + 2m] = X[l][m]`.

use num_complex::Complex64;

use super::counted::Ops;
use super::{BilinearEstimate, FilterConfig, OpCounter, SystemSample, L_DIM, M_DIM};
use crate::error::SimError;
use crate::Result;

const VEC_DIM: usize = L_DIM * M_DIM;
const RIDGE: f64 = 1e-9;
const DEFAULT_MAX_ALTERNATIONS: usize = 50;

/// Estimated second-order statistics of the bilinear system.
#[derive(Debug, Clone)]
pub struct Statistics {
    pub r_xx: [[Complex64; VEC_DIM]; VEC_DIM],
    pub r_xy: [[Complex64; M_DIM]; L_DIM],
    pub n_samples: usize,
    /// Real trace of `r_xx`, the scale reference for singularity guards.
    pub trace: f64,
    pub op_counts: OpCounter,
}

/// Sample means `R_xx = (1/N) sum vec(X) vec(X)^H` and
/// `R_Xy = (1/N) sum X y*` over the first `n_stats` samples.
pub fn estimate_statistics(samples: &[SystemSample], n_stats: usize) -> Result<Statistics> {
    if n_stats == 0 {
        return Err(SimError::InvalidArgument("n_stats must be >= 1".into()));
    }
    if n_stats > samples.len() {
        return Err(SimError::InvalidArgument(format!(
            "n_stats {} exceeds sample count {}",
            n_stats,
            samples.len()
        )));
    }
    let mut counter = OpCounter::default();
    let mut r_xx = [[Complex64::new(0.0, 0.0); VEC_DIM]; VEC_DIM];
    let mut r_xy = [[Complex64::new(0.0, 0.0); M_DIM]; L_DIM];
    {
        let ops = &mut Ops::new(&mut counter);
        for s in &samples[..n_stats] {
            let mut x = [Complex64::new(0.0, 0.0); VEC_DIM];
            for m in 0..M_DIM {
                for l in 0..L_DIM {
                    x[l + L_DIM * m] = s.x_matrix[l][m];
                }
            }
            let yc = s.target.conj();
            for i in 0..VEC_DIM {
                for j in 0..VEC_DIM {
                    r_xx[i][j] = ops.cmac(r_xx[i][j], x[i], x[j].conj());
                }
            }
            for l in 0..L_DIM {
                for m in 0..M_DIM {
                    r_xy[l][m] = ops.cmac(r_xy[l][m], s.x_matrix[l][m], yc);
                }
            }
        }
        let inv_n = ops.rdiv(1.0, n_stats as f64);
        for row in r_xx.iter_mut() {
            for v in row.iter_mut() {
                *v = ops.cmul_cr(*v, inv_n);
            }
        }
        for row in r_xy.iter_mut() {
            for v in row.iter_mut() {
                *v = ops.cmul_cr(*v, inv_n);
            }
        }
    }
    let mut trace = 0.0;
    {
        let ops = &mut Ops::new(&mut counter);
        for (i, row) in r_xx.iter().enumerate() {
            trace = ops.radd(trace, row[i].re);
        }
    }
    Ok(Statistics {
        r_xx,
        r_xy,
        n_samples: n_stats,
        trace,
        op_counts: counter,
    })
}

/// Solve the Hermitian 2x2 system `R f = rhs` by LDL^H. Returns the solution
/// and whether the ridge was needed.
fn solve_herm2(
    ops: &mut Ops,
    r: &[[Complex64; L_DIM]; L_DIM],
    rhs: &[Complex64; L_DIM],
    scale: f64,
) -> ([Complex64; L_DIM], bool) {
    let tiny = (scale.abs() + RIDGE) * 1e-13;
    let mut mat = *r;
    let mut regularized = false;
    loop {
        let d1 = mat[0][0].re;
        if d1 > tiny {
            let l21 = ops.cdiv_r(mat[1][0], d1);
            let t = ops.re_prod_conj(l21, l21);
            let td = ops.rmul(t, d1);
            let d2 = ops.rsub(mat[1][1].re, td);
            if d2 > tiny {
                // Forward, diagonal, backward passes.
                let lw = ops.cmul(l21, rhs[0]);
                let w2 = ops.csub(rhs[1], lw);
                let v1 = ops.cdiv_r(rhs[0], d1);
                let v2 = ops.cdiv_r(w2, d2);
                let lb = ops.cmul(l21.conj(), v2);
                let f1 = ops.csub(v1, lb);
                return ([f1, v2], regularized);
            }
        }
        regularized = true;
        for (i, row) in mat.iter_mut().enumerate() {
            row[i].re += RIDGE * (scale.abs() + 1.0);
        }
    }
}

/// Solve the symmetric 4x4 system `R g = rhs` by LDL^T. Returns the solution
/// and whether the ridge was needed.
fn solve_sym4(
    ops: &mut Ops,
    r: &[[f64; M_DIM]; M_DIM],
    rhs: &[f64; M_DIM],
    scale: f64,
) -> ([f64; M_DIM], bool) {
    let tiny = (scale.abs() + RIDGE) * 1e-13;
    let mut mat = *r;
    let mut regularized = false;
    'retry: loop {
        let mut lower = [[0.0f64; M_DIM]; M_DIM];
        let mut diag = [0.0f64; M_DIM];
        for j in 0..M_DIM {
            let mut acc = mat[j][j];
            for k in 0..j {
                let sq = ops.rmul(lower[j][k], lower[j][k]);
                let term = ops.rmul(sq, diag[k]);
                acc = ops.rsub(acc, term);
            }
            if acc <= tiny {
                regularized = true;
                for (i, row) in mat.iter_mut().enumerate() {
                    row[i] += RIDGE * (scale.abs() + 1.0);
                }
                continue 'retry;
            }
            diag[j] = acc;
            for i in j + 1..M_DIM {
                let mut acc2 = mat[i][j];
                for k in 0..j {
                    let p = ops.rmul(lower[i][k], lower[j][k]);
                    let term = ops.rmul(p, diag[k]);
                    acc2 = ops.rsub(acc2, term);
                }
                lower[i][j] = ops.rdiv(acc2, diag[j]);
            }
        }
        let mut w = *rhs;
        for i in 0..M_DIM {
            for j in 0..i {
                let term = ops.rmul(lower[i][j], w[j]);
                w[i] = ops.rsub(w[i], term);
            }
        }
        let mut v = [0.0f64; M_DIM];
        for i in 0..M_DIM {
            v[i] = ops.rdiv(w[i], diag[i]);
        }
        for i in (0..M_DIM).rev() {
            for j in i + 1..M_DIM {
                let term = ops.rmul(lower[j][i], v[j]);
                v[i] = ops.rsub(v[i], term);
            }
        }
        return (v, regularized);
    }
}

/// Exact least-squares f for fixed g: contract `R_xx` with `G = g (x) I_L`
/// into `R_u = G^T R_xx G`, `r_u = G^T vec(R_Xy)`, and solve.
fn solve_f_branch(
    ops: &mut Ops,
    stats: &Statistics,
    g: &[f64; M_DIM],
) -> ([Complex64; L_DIM], bool) {
    // Dense G with the Kronecker zero pattern filled in by construction.
    let mut big_g = [[0.0f64; L_DIM]; VEC_DIM];
    for (r, row) in big_g.iter_mut().enumerate() {
        row[r % L_DIM] = g[r / L_DIM];
    }
    let mut t = [[Complex64::new(0.0, 0.0); L_DIM]; VEC_DIM];
    for r in 0..VEC_DIM {
        for c in 0..L_DIM {
            let mut acc = ops.cmul_cr(stats.r_xx[r][0], big_g[0][c]);
            for r2 in 1..VEC_DIM {
                let p = ops.cmul_cr(stats.r_xx[r][r2], big_g[r2][c]);
                acc = ops.cadd(acc, p);
            }
            t[r][c] = acc;
        }
    }
    let mut r_u = [[Complex64::new(0.0, 0.0); L_DIM]; L_DIM];
    for c1 in 0..L_DIM {
        for c2 in 0..L_DIM {
            let mut acc = ops.cmul_cr(t[0][c2], big_g[0][c1]);
            for r in 1..VEC_DIM {
                let p = ops.cmul_cr(t[r][c2], big_g[r][c1]);
                acc = ops.cadd(acc, p);
            }
            r_u[c1][c2] = acc;
        }
    }
    let mut xy = [Complex64::new(0.0, 0.0); VEC_DIM];
    for m in 0..M_DIM {
        for l in 0..L_DIM {
            xy[l + L_DIM * m] = stats.r_xy[l][m];
        }
    }
    let mut rhs = [Complex64::new(0.0, 0.0); L_DIM];
    for (c, rhs_c) in rhs.iter_mut().enumerate() {
        let mut acc = ops.cmul_cr(xy[0], big_g[0][c]);
        for r in 1..VEC_DIM {
            let p = ops.cmul_cr(xy[r], big_g[r][c]);
            acc = ops.cadd(acc, p);
        }
        *rhs_c = acc;
    }
    solve_herm2(ops, &r_u, &rhs, stats.trace)
}

/// Exact least-squares g for fixed f: contract `R_xx` with `F = I_M (x) f`
/// into `R_v = Re(F^H R_xx F)`, `r_v[m] = Re(sum_l f_l conj(R_Xy[l][m]))`,
/// and solve.
fn solve_g_branch(
    ops: &mut Ops,
    stats: &Statistics,
    f: &[Complex64; L_DIM],
) -> ([f64; M_DIM], bool) {
    let mut big_f = [[Complex64::new(0.0, 0.0); M_DIM]; VEC_DIM];
    for (r, row) in big_f.iter_mut().enumerate() {
        row[r / L_DIM] = f[r % L_DIM];
    }
    let mut u = [[Complex64::new(0.0, 0.0); M_DIM]; VEC_DIM];
    for r in 0..VEC_DIM {
        for c in 0..M_DIM {
            let mut acc = ops.cmul(stats.r_xx[r][0], big_f[0][c]);
            for r2 in 1..VEC_DIM {
                let p = ops.cmul(stats.r_xx[r][r2], big_f[r2][c]);
                acc = ops.cadd(acc, p);
            }
            u[r][c] = acc;
        }
    }
    let mut r_v = [[0.0f64; M_DIM]; M_DIM];
    for c1 in 0..M_DIM {
        for c2 in 0..M_DIM {
            let mut acc = ops.cmul(big_f[0][c1].conj(), u[0][c2]);
            for r in 1..VEC_DIM {
                let p = ops.cmul(big_f[r][c1].conj(), u[r][c2]);
                acc = ops.cadd(acc, p);
            }
            r_v[c1][c2] = acc.re;
        }
    }
    let mut rhs = [0.0f64; M_DIM];
    for (m, rhs_m) in rhs.iter_mut().enumerate() {
        let mut acc = ops.re_prod_conj(f[0], stats.r_xy[0][m]);
        for l in 1..L_DIM {
            let t = ops.re_prod_conj(f[l], stats.r_xy[l][m]);
            acc = ops.radd(acc, t);
        }
        *rhs_m = acc;
    }
    solve_sym4(ops, &r_v, &rhs, stats.trace)
}

fn mean_squared_error(samples: &[SystemSample], f: &[Complex64; L_DIM], g: &[f64; M_DIM]) -> f64 {
    let mut acc = 0.0;
    for s in samples {
        acc += (s.target - super::model_output(f, g, &s.x_matrix)).norm_sqr();
    }
    acc / samples.len() as f64
}

fn wiener_run(samples: &[SystemSample], config: &FilterConfig, damping: Option<f64>) -> Result<BilinearEstimate> {
    config.validate()?;
    if samples.is_empty() {
        return Err(SimError::InvalidArgument("no samples".into()));
    }
    let n_stats = config.n_stats.min(samples.len());
    let stats = estimate_statistics(samples, n_stats)?;
    let cache = &samples[..n_stats];

    let mut est = BilinearEstimate::new(config);
    est.stats_ops = stats.op_counts;
    let mut f = config.f_init;
    let mut g = config.g_init;

    let max_alternations = if config.max_iterations == 0 {
        DEFAULT_MAX_ALTERNATIONS
    } else {
        config.max_iterations
    };
    let j0 = mean_squared_error(cache, &f, &g);
    let mut j_prev = j0;

    for it in 0..max_alternations {
        let mut counter = OpCounter::default();
        {
            let ops = &mut Ops::new(&mut counter);
            let (f_sol, reg_f) = solve_f_branch(ops, &stats, &g);
            est.regularized |= reg_f;
            match damping {
                None => f = f_sol,
                Some(mu) => {
                    for l in 0..L_DIM {
                        let delta = ops.csub(f_sol[l], f[l]);
                        let step = ops.cmul_cr(delta, mu);
                        f[l] = ops.cadd(f[l], step);
                    }
                }
            }
            let (g_sol, reg_g) = solve_g_branch(ops, &stats, &f);
            est.regularized |= reg_g;
            match damping {
                None => g = g_sol,
                Some(mu) => {
                    for m in 0..M_DIM {
                        let delta = ops.rsub(g_sol[m], g[m]);
                        let step = ops.rmul(delta, mu);
                        g[m] = ops.radd(g[m], step);
                    }
                }
            }
        }
        if it == 0 {
            est.ops_per_iteration = counter;
        }
        est.op_counts += counter;
        est.iterations = it + 1;

        let j = mean_squared_error(cache, &f, &g);
        est.error_trace.push(Complex64::new(j.sqrt(), 0.0));
        if (j_prev - j).abs() <= 1e-10 * j0.max(1e-300) {
            break;
        }
        j_prev = j;
    }
    est.f_hat = f;
    est.g_hat = g;
    Ok(est)
}

/// Alternating Wiener filter: per alternation, exact least squares for `f`
/// with `g` fixed, then for `g` with the new `f` fixed.
pub fn awf_run(samples: &[SystemSample], config: &FilterConfig) -> Result<BilinearEstimate> {
    wiener_run(samples, config, None)
}

/// Iterative Wiener filter: each half-step moves by `mu_iwf` toward the
/// exact least-squares solution; `mu_iwf = 1` degenerates to the AWF.
pub fn iwf_run(samples: &[SystemSample], config: &FilterConfig) -> Result<BilinearEstimate> {
    let damping = if (config.mu_iwf - 1.0).abs() == 0.0 {
        None
    } else {
        Some(config.mu_iwf)
    };
    wiener_run(samples, config, damping)
}
