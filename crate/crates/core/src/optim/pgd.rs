//! Projected gradient descent with Barzilai-Borwein steps and Armijo
//! backtracking along the projection arc, plus an augmented-Lagrangian outer
//! loop for linear equality constraints over a box.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PgdOptions {
    /// Stop once `||x - P(x - grad f(x))||_2` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for PgdOptions {
    fn default() -> Self {
        PgdOptions {
            tol: 1e-7,
            max_iter: 50_000,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgdSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub pg_norm: f64,
    pub converged: bool,
}

fn pg_norm<P: Fn(&mut [f64])>(x: &[f64], g: &[f64], project: &P, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(x.iter().zip(g).map(|(a, b)| a - b));
    project(buf);
    x.iter()
        .zip(buf.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Minimizes a smooth convex `f` over the set onto which `project` maps.
/// Objective values are monotone non-increasing across iterations.
pub fn projected_gradient_min<F, G, P>(
    f: F,
    grad: G,
    project: P,
    x0: &[f64],
    opts: &PgdOptions,
) -> Result<PgdSolution>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
    P: Fn(&mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite("projected gradient start"));
    }
    let mut g = vec![0.0; n];
    grad(&x, &mut g);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let mut step = 1.0 / g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut buf = Vec::with_capacity(n);
    let mut pgn = pg_norm(&x, &g, &project, &mut buf);
    let mut it = 0;

    while it < opts.max_iter && pgn > opts.tol {
        it += 1;
        let mut s = step;
        let mut accepted = false;
        let mut fxn = fx;
        for _ in 0..opts.max_backtracks {
            for i in 0..n {
                xn[i] = x[i] - s * g[i];
            }
            project(&mut xn);
            let slope: f64 = (0..n).map(|i| g[i] * (xn[i] - x[i])).sum();
            fxn = f(&xn);
            if fxn.is_nan() {
                return Err(Error::NonFinite("objective"));
            }
            if fxn.is_finite() && fxn <= fx + opts.armijo * slope {
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
        grad(&xn, &mut gn);
        if gn.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..n {
            let si = xn[i] - x[i];
            ss += si * si;
            sy += si * (gn[i] - g[i]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (2.0 * s).min(1e12) };
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        let moved = ss.sqrt();
        fx = fxn;
        pgn = pg_norm(&x, &g, &project, &mut buf);
        if moved == 0.0 {
            break;
        }
    }
    Ok(PgdSolution {
        value: fx,
        converged: pgn <= opts.tol,
        x,
        iterations: it,
        pg_norm: pgn,
    })
}

/// `min f(x)` subject to `rows * x = rhs` and `lower <= x <= upper`.
#[derive(Debug, Clone)]
pub struct LinearlyConstrained {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AlmSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub multipliers: Vec<f64>,
    /// Largest absolute equality residual.
    pub violation: f64,
    /// `||x - P_box(x - (grad f + A^T mu))||_2`.
    pub kkt_residual: f64,
    pub outer_iterations: usize,
}

impl LinearlyConstrained {
    /// Largest absolute equality residual `|Ax - b|_∞`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.rows.len()];
        self.residual(x, &mut r);
        r.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn residual(&self, x: &[f64], r: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            r[i] = row.iter().map(|&(j, a)| a * x[j]).sum::<f64>() - self.rhs[i];
        }
    }

    /// `||x - P_box(x - (grad_f + A^T mu))||_2`; zero exactly at KKT points.
    pub fn kkt_residual(&self, x: &[f64], grad_f: &[f64], mu: &[f64]) -> f64 {
        let mut g = grad_f.to_vec();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                g[j] += mu[i] * a;
            }
        }
        let mut buf = Vec::with_capacity(x.len());
        pg_norm(x, &g, &|z: &mut [f64]| self.project_box(z), &mut buf)
    }

    pub fn project_box(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }
}

/// Augmented Lagrangian method whose inner solves are
/// [`projected_gradient_min`] over the box.
pub fn augmented_lagrangian_min<F, G>(
    f: F,
    grad: G,
    problem: &LinearlyConstrained,
    x0: &[f64],
    feas_tol: f64,
) -> Result<AlmSolution>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    let m = problem.rows.len();
    let n = x0.len();
    let mut mu = vec![0.0; m];
    let mut penalty = 10.0;
    let mut x = x0.to_vec();
    problem.project_box(&mut x);
    let mut r = vec![0.0; m];
    let mut prev_violation = f64::INFINITY;
    let mut outer = 0;
    let inner_opts = PgdOptions {
        tol: (1e-2 * feas_tol).max(1e-12),
        max_iter: 20_000,
        ..PgdOptions::default()
    };

    loop {
        outer += 1;
        let (mu_ref, c) = (&mu, penalty);
        let phi = |z: &[f64]| {
            let mut res = vec![0.0; m];
            problem.residual(z, &mut res);
            f(z) + res
                .iter()
                .zip(mu_ref)
                .map(|(ri, mi)| mi * ri + 0.5 * c * ri * ri)
                .sum::<f64>()
        };
        let dphi = |z: &[f64], out: &mut [f64]| {
            grad(z, out);
            let mut res = vec![0.0; m];
            problem.residual(z, &mut res);
            for (i, row) in problem.rows.iter().enumerate() {
                let w = mu_ref[i] + c * res[i];
                for &(j, a) in row {
                    out[j] += w * a;
                }
            }
        };
        let sol = projected_gradient_min(phi, dphi, |z: &mut [f64]| problem.project_box(z), &x, &inner_opts)?;
        x = sol.x;
        problem.residual(&x, &mut r);
        let violation = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..m {
            mu[i] += penalty * r[i];
        }
        if (violation <= feas_tol && sol.pg_norm <= feas_tol.max(1e-9)) || outer >= 60 {
            let mut g = vec![0.0; n];
            grad(&x, &mut g);
            let kkt = problem.kkt_residual(&x, &g, &mu);
            return Ok(AlmSolution {
                value: f(&x),
                x,
                multipliers: mu,
                violation,
                kkt_residual: kkt,
                outer_iterations: outer,
            });
        }
        if violation > feas_tol && violation > 0.25 * prev_violation {
            penalty = (penalty * 10.0).min(1e9);
        }
        prev_violation = violation;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex_projection(v: &mut [f64]) {
        // Euclidean projection onto {x >= 0, sum x = 1}
        let mut u: Vec<f64> = v.to_vec();
        u.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut css = 0.0;
        let mut theta = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            css += ui;
            let t = (css - 1.0) / (i + 1) as f64;
            if ui - t > 0.0 {
                theta = t;
            }
        }
        for x in v.iter_mut() {
            *x = (*x - theta).max(0.0);
        }
    }

    #[test]
    fn squared_norm_over_simplex_is_uniform() {
        let sol = projected_gradient_min(
            |x: &[f64]| x.iter().map(|v| v * v).sum(),
            |x: &[f64], g: &mut [f64]| {
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi = 2.0 * xi;
                }
            },
            simplex_projection,
            &[1.0, 0.0, 0.0, 0.0],
            &PgdOptions::default(),
        )
        .unwrap();
        assert!(sol.converged);
        for v in &sol.x {
            assert!((v - 0.25).abs() < 1e-7);
        }
    }

    #[test]
    fn clamped_scalar() {
        let sol = projected_gradient_min(
            |x: &[f64]| (x[0] - 2.0).powi(2),
            |x: &[f64], g: &mut [f64]| g[0] = 2.0 * (x[0] - 2.0),
            |x: &mut [f64]| x[0] = x[0].clamp(0.0, 1.0),
            &[0.3],
            &PgdOptions::default(),
        )
        .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strongly_convex_quadratics_reach_analytic_optimum() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let n = rng.random_range(2..8usize);
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..5.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            // box [-1, 1]; separable so the optimum is the clamped centre
            let sol = projected_gradient_min(
                |x: &[f64]| (0..n).map(|i| d[i] * (x[i] - c[i]).powi(2)).sum(),
                |x: &[f64], g: &mut [f64]| {
                    for i in 0..n {
                        g[i] = 2.0 * d[i] * (x[i] - c[i]);
                    }
                },
                |x: &mut [f64]| x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0)),
                &vec![0.0; n],
                &PgdOptions::default(),
            )
            .unwrap();
            for i in 0..n {
                assert!((sol.x[i] - c[i].clamp(-1.0, 1.0)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn objective_never_increases() {
        use std::cell::RefCell;
        let trace = RefCell::new(Vec::new());
        let f = |x: &[f64]| {
            let v = (x[0] - 3.0).powi(4) + (x[0] + x[1]).powi(2);
            trace.borrow_mut().push(v);
            v
        };
        let sol = projected_gradient_min(
            f,
            |x: &[f64], g: &mut [f64]| {
                g[0] = 4.0 * (x[0] - 3.0).powi(3) + 2.0 * (x[0] + x[1]);
                g[1] = 2.0 * (x[0] + x[1]);
            },
            |x: &mut [f64]| x[1] = x[1].max(0.0),
            &[0.0, 5.0],
            &PgdOptions::default(),
        )
        .unwrap();
        assert!(sol.value <= trace.borrow()[0]);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = projected_gradient_min(
            |_: &[f64]| f64::NAN,
            |_: &[f64], g: &mut [f64]| g[0] = 0.0,
            |_: &mut [f64]| {},
            &[1.0],
            &PgdOptions::default(),
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn equality_constrained_quadratic() {
        // min x^2 + 2 y^2 s.t. x + y = 1 -> (2/3, 1/3)
        let prob = LinearlyConstrained {
            rows: vec![vec![(0, 1.0), (1, 1.0)]],
            rhs: vec![1.0],
            lower: vec![0.0; 2],
            upper: vec![f64::INFINITY; 2],
        };
        let sol = augmented_lagrangian_min(
            |x: &[f64]| x[0] * x[0] + 2.0 * x[1] * x[1],
            |x: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * x[0];
                g[1] = 4.0 * x[1];
            },
            &prob,
            &[0.5, 0.5],
            1e-12,
        )
        .unwrap();
        assert!((sol.x[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((sol.x[1] - 1.0 / 3.0).abs() < 1e-9);
        assert!(sol.kkt_residual < 1e-8);
    }
}
