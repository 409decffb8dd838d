//! Shared Frobenius norms and their comparison norms.
//!
//! For `U` (one row per leaf) the structured shared norm is
//! `min ||V||_F` over factorizations `U = A V` where `A_{l,n} = a_n` for
//! `n ∈ Ā(l)` (zero elsewhere) and every row of `A` has Euclidean norm at most
//! one. Dropping the support pattern gives the unstructured shared norm.
//! Neither is computed exactly in general; the estimators return certified
//! upper bounds.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ssvm::{optimal_alpha_from_norms, optimal_alpha_numeric};
use crate::taxonomy::Taxonomy;

/// Certificates must reproduce `U` to this absolute accuracy.
pub const CERTIFICATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    SharedStructuredUpper,
    SharedUpper,
    Frobenius,
    Trace,
    RowMaxLower,
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormKind::SharedStructuredUpper => "shared_structured_upper",
            NormKind::SharedUpper => "shared_upper",
            NormKind::Frobenius => "frobenius",
            NormKind::Trace => "trace",
            NormKind::RowMaxLower => "row_max_lower",
        })
    }
}

/// `U = A V` with rows of `A` of norm at most one; `||V||_F` bounds the norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub a: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl Factorization {
    pub fn residual(&self, u: &DMatrix<f64>) -> f64 {
        (&self.a * &self.v - u).abs().max()
    }

    pub fn max_row_norm(&self) -> f64 {
        self.a.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
    }

    pub fn value(&self) -> f64 {
        self.v.norm()
    }

    pub fn is_valid_for(&self, u: &DMatrix<f64>) -> bool {
        self.residual(u) <= CERTIFICATE_TOL && self.max_row_norm() <= 1.0 + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub value: f64,
    pub kind: NormKind,
    pub certificate: Option<Factorization>,
    /// A certified lower bound, when the estimator produces one.
    pub lower: Option<f64>,
    pub iterations: usize,
}

impl NormReport {
    fn plain(kind: NormKind, value: f64) -> Self {
        NormReport {
            value,
            kind,
            certificate: None,
            lower: None,
            iterations: 0,
        }
    }
}

/// Thin SVD `A = U diag(σ) Vᵀ`, singular values in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn jacobi_svd(a: &DMatrix<f64>) -> Svd {
    if a.nrows() < a.ncols() {
        let t = jacobi_svd(&a.transpose());
        return Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * x - s * y;
                    w[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut u = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        sigma.push(norms[j]);
        if norms[j] > 0.0 {
            u.set_column(k, &(w.column(j) / norms[j]));
        }
        vs.set_column(k, &v.column(j));
    }
    Svd { u, sigma, v: vs }
}

pub fn singular_values(u: &DMatrix<f64>) -> Vec<f64> {
    jacobi_svd(u).sigma
}

/// Sum of singular values.
pub fn trace_norm(u: &DMatrix<f64>) -> f64 {
    singular_values(u).iter().sum()
}

pub fn frobenius_norm(u: &DMatrix<f64>) -> f64 {
    u.norm()
}

/// Largest Euclidean row norm, a lower bound on both shared norms.
pub fn shared_norm_lower_bound(u: &DMatrix<f64>) -> f64 {
    u.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// The trivial factorization `A = I`, `V = U`.
fn identity_certificate(u: &DMatrix<f64>) -> Factorization {
    Factorization {
        a: DMatrix::identity(u.nrows(), u.nrows()),
        v: u.clone(),
    }
}

/// Leaf-by-node incidence matrix of `t` (rows in `t.leaves()` order).
pub fn leaf_incidence(t: &Taxonomy) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(t.leaves().len(), t.node_count());
    for (i, &l) in t.leaves().iter().enumerate() {
        for &n in t.ancestors_closure(l) {
            p[(i, n)] = 1.0;
        }
    }
    p
}

const STRUCTURED_MAX_ITER: usize = 5_000;
const UNSTRUCTURED_MAX_ITER: usize = 5_000;
const REL_TOL: f64 = 1e-12;

/// Structured estimate for a given start `α`: alternates the exact
/// least-norm solve for the per-node blocks `W_n = a_n V_n` and the exact
/// minimization over `α = a²`. Each half step does not increase
/// `Σ_n ||W_n||²/α_n`. Returns `(value², α, W, iterations)`.
fn structured_run(
    u: &DMatrix<f64>,
    t: &Taxonomy,
    p: &DMatrix<f64>,
    mut alpha: Vec<f64>,
) -> Result<(f64, Vec<f64>, DMatrix<f64>, usize)> {
    let m = t.node_count();
    let tree = t.is_tree();
    let mut best = (f64::INFINITY, alpha.clone(), DMatrix::zeros(m, u.ncols()));
    let mut iters = 0;
    for it in 0..STRUCTURED_MAX_ITER {
        iters = it + 1;
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(alpha.clone()));
        let k = p * &d * p.transpose();
        let x = k
            .svd(true, true)
            .solve(u, 1e-14)
            .map_err(|e| Error::Solver(e.to_string()))?;
        let mut w = &d * p.transpose() * x;
        // leaf blocks absorb the solve's residual so that P W = U holds exactly
        for (i, &l) in t.leaves().iter().enumerate() {
            let mut row = u.row(i).clone_owned();
            for &n in t.ancestors_closure(l) {
                if n != l {
                    row -= w.row(n);
                }
            }
            w.set_row(l, &row);
        }
        let norms: Vec<f64> = (0..m).map(|n| w.row(n).norm_squared()).collect();
        let value = crate::ssvm::alpha_objective_norms(&norms, &alpha);
        if !(value < best.0) {
            break;
        }
        let done = best.0 - value <= REL_TOL * value;
        best = (value, alpha.clone(), w);
        if done {
            break;
        }
        alpha = if tree {
            optimal_alpha_from_norms(&norms, t)?.alpha
        } else {
            optimal_alpha_numeric(&norms, t)?.0.alpha
        };
    }
    Ok((best.0, best.1, best.2, iters))
}

fn structured_certificate(p: &DMatrix<f64>, alpha: &[f64], w: &DMatrix<f64>) -> Factorization {
    let mut a = p.clone();
    let mut v = w.clone();
    for (n, &al) in alpha.iter().enumerate() {
        let s = al.max(0.0).sqrt();
        a.column_mut(n).scale_mut(s);
        v.row_mut(n).scale_mut(if s > 0.0 { 1.0 / s } else { 0.0 });
    }
    Factorization { a, v }
}

/// Upper bound on the structured shared norm over `t`, best over `restarts`
/// random starting points (plus one deterministic start and the trivial
/// leaf-only factorization).
pub fn shared_structured_estimate(u: &DMatrix<f64>, t: &Taxonomy, restarts: usize, seed: u64) -> Result<NormReport> {
    if u.nrows() != t.leaves().len() {
        return Err(Error::DimensionMismatch {
            expected: t.leaves().len(),
            got: u.nrows(),
        });
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entries"));
    }
    let p = leaf_incidence(t);
    let m = t.node_count();
    let depth: Vec<f64> = t.longest_path_through().into_iter().map(|d| d as f64).collect();
    let mut best_cert = {
        let mut a = DMatrix::zeros(u.nrows(), m);
        let mut v = DMatrix::zeros(m, u.ncols());
        for (i, &l) in t.leaves().iter().enumerate() {
            a[(i, l)] = 1.0;
            v.set_row(l, &u.row(i));
        }
        Factorization { a, v }
    };
    let mut best = best_cert.value();
    let mut iterations = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..=restarts {
        let alpha0: Vec<f64> = depth
            .iter()
            .map(|d| if r == 0 { 1.0 / d } else { rng.random_range(0.05..1.0) / d })
            .collect();
        let (v2, alpha, w, it) = structured_run(u, t, &p, alpha0)?;
        iterations += it;
        if v2.is_finite() && v2.sqrt() < best {
            let cert = structured_certificate(&p, &alpha, &w);
            if cert.is_valid_for(u) {
                best = cert.value();
                best_cert = cert;
            }
        }
    }
    Ok(NormReport {
        value: best,
        kind: NormKind::SharedStructuredUpper,
        certificate: Some(best_cert),
        lower: Some(shared_norm_lower_bound(u)),
        iterations,
    })
}

/// Upper bound on the unstructured shared norm with a duality certificate.
///
/// For weights `μ > 0`, write `B = diag(sqrt μ) U = P Σ Qᵀ`. Then
/// `A = diag(μ)^{-1/2} P Σ^{1/2} / sqrt(c)` and `V = sqrt(c) Σ^{1/2} Qᵀ`, with `c`
/// the largest row norm² of the unscaled `A`, is feasible with
/// `||V||_F² = c ||B||_*`. Conversely `||B||_*² / Σ μ` lower-bounds the
/// squared norm. The weights are updated multiplicatively by the row norms
/// until the bounds meet.
pub fn shared_unstructured_estimate(
    u: &DMatrix<f64>,
    warm: Option<&Factorization>,
    restarts: usize,
    seed: u64,
) -> Result<NormReport> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entries"));
    }
    let (r, c) = u.shape();
    let live: Vec<usize> = (0..r).filter(|&i| u.row(i).norm() > 0.0).collect();
    let mut best_cert = identity_certificate(u);
    if let Some(w) = warm {
        if w.is_valid_for(u) && w.value() < best_cert.value() {
            best_cert = w.clone();
        }
    }
    let mut best = best_cert.value();
    let mut lower = shared_norm_lower_bound(u);
    if live.is_empty() {
        return Ok(NormReport {
            value: 0.0,
            kind: NormKind::SharedUpper,
            certificate: Some(Factorization {
                a: DMatrix::zeros(r, 1),
                v: DMatrix::zeros(1, c),
            }),
            lower: Some(0.0),
            iterations: 0,
        });
    }
    let ul = DMatrix::from_fn(live.len(), c, |i, j| u[(live[i], j)]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iterations = 0;
    for restart in 0..=restarts {
        let mut mu: Vec<f64> = (0..live.len())
            .map(|_| if restart == 0 { 1.0 } else { rng.random_range(0.1..1.0) })
            .collect();
        for _ in 0..UNSTRUCTURED_MAX_ITER {
            iterations += 1;
            let b = DMatrix::from_fn(live.len(), c, |i, j| mu[i].sqrt() * ul[(i, j)]);
            let svd = jacobi_svd(&b);
            let smax = svd.sigma[0];
            let rank = svd.sigma.iter().take_while(|&&s| s > 1e-14 * smax).count().max(1);
            let nuc: f64 = svd.sigma[..rank].iter().sum();
            let k: Vec<f64> = (0..live.len())
                .map(|i| (0..rank).map(|j| svd.u[(i, j)].powi(2) * svd.sigma[j]).sum::<f64>() / mu[i])
                .collect();
            let cmax = k.iter().cloned().fold(0.0, f64::max);
            let upper2 = cmax * nuc;
            let lower2 = nuc * nuc / mu.iter().sum::<f64>();
            lower = lower.max(lower2.sqrt());
            if upper2.sqrt() < best {
                let mut a = DMatrix::zeros(r, rank);
                let mut v = DMatrix::zeros(rank, c);
                for j in 0..rank {
                    let sj = svd.sigma[j].sqrt();
                    for (i, &row) in live.iter().enumerate() {
                        a[(row, j)] = svd.u[(i, j)] * sj / (mu[i].sqrt() * cmax.sqrt());
                    }
                    for col in 0..c {
                        v[(j, col)] = cmax.sqrt() * sj * svd.v[(col, j)];
                    }
                }
                let cert = Factorization { a, v };
                if cert.is_valid_for(u) {
                    best = cert.value();
                    best_cert = cert;
                }
            }
            if upper2 - lower2 <= REL_TOL * upper2 {
                break;
            }
            for (m, ki) in mu.iter_mut().zip(&k) {
                *m = (*m * ki / cmax).max(1e-300);
            }
        }
    }
    Ok(NormReport {
        value: best,
        kind: NormKind::SharedUpper,
        certificate: Some(best_cert),
        lower: Some(lower.min(best)),
        iterations,
    })
}

/// Structured estimate when `t` is given, unstructured otherwise.
pub fn shared_norm_estimate(u: &DMatrix<f64>, t: Option<&Taxonomy>, restarts: usize) -> Result<NormReport> {
    match t {
        Some(t) => shared_structured_estimate(u, t, restarts, 0),
        None => shared_unstructured_estimate(u, None, restarts, 0),
    }
}

/// Every norm the module knows about, in a fixed order. The unstructured
/// estimate is warm-started from the structured certificate, so it never
/// exceeds it.
pub fn norm_reports(u: &DMatrix<f64>, t: Option<&Taxonomy>, restarts: usize) -> Result<Vec<NormReport>> {
    let mut out = Vec::new();
    let structured = match t {
        Some(t) => Some(shared_structured_estimate(u, t, restarts, 0)?),
        None => None,
    };
    let warm = structured.as_ref().and_then(|s| s.certificate.clone());
    out.push(shared_unstructured_estimate(u, warm.as_ref(), restarts, 0)?);
    if let Some(s) = structured {
        out.insert(0, s);
    }
    out.push(NormReport::plain(NormKind::Frobenius, frobenius_norm(u)));
    out.push(NormReport::plain(NormKind::Trace, trace_norm(u)));
    out.push(NormReport::plain(NormKind::RowMaxLower, shared_norm_lower_bound(u)));
    Ok(out)
}

/// Whitespace-separated rows, one matrix row per non-empty line; `#` starts a
/// comment.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("bad number '{tok}'"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 0, msg: "empty matrix".into() });
    }
    let c = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn star(leaves: usize) -> Taxonomy {
        let edges: Vec<(usize, usize)> = (1..=leaves).map(|l| (0, l)).collect();
        Taxonomy::from_dense(leaves + 1, &edges).unwrap()
    }

    #[test]
    fn jacobi_matches_library_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let r = rng.random_range(1..8);
            let c = rng.random_range(1..8);
            let a = random_matrix(&mut rng, r, c);
            let ours = jacobi_svd(&a);
            let mut lib: Vec<f64> = a.clone().svd(false, false).singular_values.iter().cloned().collect();
            lib.sort_by(|x, y| y.partial_cmp(x).unwrap());
            for (x, y) in ours.sigma.iter().zip(&lib) {
                assert!((x - y).abs() <= 1e-9 * lib[0].max(1.0));
            }
            let recon = &ours.u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(ours.sigma.clone())) * ours.v.transpose();
            assert!((recon - &a).abs().max() < 1e-12);
        }
    }

    #[test]
    fn trace_norm_examples() {
        assert!((trace_norm(&DMatrix::identity(3, 3)) - 3.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!((trace_norm(&d) - 6.0).abs() < 1e-12);
        let u = nalgebra::DVector::from_vec(vec![3.0, 4.0]);
        let full = DMatrix::from_fn(4, 2, |_, j| u[j]);
        assert!((trace_norm(&full) - 2.0 * 5.0).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(shared_norm_lower_bound(&DMatrix::zeros(3, 2)), 0.0);
        let mut single = DMatrix::zeros(3, 2);
        single[(1, 0)] = 3.0;
        single[(1, 1)] = 4.0;
        assert_eq!(shared_norm_lower_bound(&single), 5.0);
        let est = shared_unstructured_estimate(&single, None, 0, 0).unwrap();
        assert!((est.value - 5.0).abs() < 1e-8);
    }

    #[test]
    fn full_sharing_reduces_to_row_norm() {
        let u = DMatrix::from_fn(4, 3, |_, j| [1.0, -2.0, 2.0][j]);
        let s = shared_structured_estimate(&u, &star(4), 0, 0).unwrap();
        assert!((s.value - 3.0).abs() <= 1e-4 * 3.0, "{}", s.value);
        let un = shared_unstructured_estimate(&u, None, 0, 0).unwrap();
        assert!((un.value - 3.0).abs() <= 1e-4 * 3.0);
    }

    #[test]
    fn no_sharing_is_frobenius() {
        let t = Taxonomy::from_dense(6, &[(0, 1), (2, 3), (4, 5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let u = random_matrix(&mut rng, 3, 4);
        let s = shared_structured_estimate(&u, &t, 1, 0).unwrap();
        assert!((s.value - u.norm()).abs() <= 1e-4 * u.norm());
    }

    #[test]
    fn disjoint_features() {
        let u = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.5]);
        let s = shared_structured_estimate(&u, &star(3), 1, 0).unwrap();
        assert!((s.value - u.norm()).abs() <= 1e-4 * u.norm(), "{}", s.value);
        assert!((trace_norm(&u) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn factor_scaling() {
        let uvec = [0.6, 0.8];
        let scales = [0.5, -2.0, 1.0];
        let u = DMatrix::from_fn(3, 2, |i, j| scales[i] * uvec[j]);
        let est = shared_unstructured_estimate(&u, None, 0, 0).unwrap();
        assert!((est.value - 2.0).abs() <= 1e-4 * 2.0, "{}", est.value);
    }

    #[test]
    fn random_chain_of_inequalities() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..40 {
            let leaves = rng.random_range(2..6);
            let t = star(leaves);
            let u = random_matrix(&mut rng, leaves, 4);
            let reports = norm_reports(&u, Some(&t), 1).unwrap();
            let (s, un) = (&reports[0], &reports[1]);
            for r in [s, un] {
                assert!(r.certificate.as_ref().unwrap().is_valid_for(&u));
                assert!(shared_norm_lower_bound(&u) <= r.value + 1e-8);
                assert!(r.lower.unwrap() <= r.value + 1e-9);
            }
            assert!(un.value <= s.value + 1e-12);
            assert!(s.value <= u.norm() + 1e-6);
            let (rr, cc) = (u.nrows() as f64, u.ncols() as f64);
            assert!(trace_norm(&u) / (rr * cc).sqrt() <= un.value / cc.sqrt() + 1e-6);
        }
    }

    #[test]
    fn unstructured_bounds_meet_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..20 {
            let u = random_matrix(&mut rng, 5, 8);
            let r = shared_unstructured_estimate(&u, None, 0, 0).unwrap();
            assert!(r.value - r.lower.unwrap() <= 1e-4 * r.value, "{} {:?}", r.value, r.lower);
        }
    }

    #[test]
    fn dag_structured_estimate_is_certified() {
        let dag = Taxonomy::from_dense(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (1, 4)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let u = random_matrix(&mut rng, 2, 3);
        let s = shared_structured_estimate(&u, &dag, 0, 0).unwrap();
        assert!(s.certificate.unwrap().is_valid_for(&u));
        assert!(s.value <= u.norm() + 1e-6);
    }

    #[test]
    fn matrix_parsing() {
        let m = parse_matrix("1 2\n# c\n3 4\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(matches!(parse_matrix("1 2\n3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_matrix("x").is_err());
    }
}
