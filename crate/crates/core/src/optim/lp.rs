//! Dense two-phase primal simplex.
//!
//! Dantzig pricing with a switch to Bland's rule once 1,000 degenerate pivots
//! have been taken. Bounds are folded into the tableau (shifted lower bounds,
//! explicit rows for finite upper bounds, split free variables).

use crate::error::{Error, Result};

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const INTEGRALITY_TOL: f64 = 1e-6;
const PIVOT_TOL: f64 = 1e-11;
const BLAND_AFTER: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub solution: Option<Vec<f64>>,
    pub objective: f64,
    pub is_integral: bool,
    /// Simplex pivots for an LP, explored nodes for branch-and-bound.
    pub iterations: usize,
}

impl SolveReport {
    pub(crate) fn without_solution(status: SolveStatus, iterations: usize) -> Self {
        SolveReport {
            status,
            solution: None,
            objective: f64::NAN,
            is_integral: false,
            iterations,
        }
    }
}

/// Every coordinate lies within [`INTEGRALITY_TOL`] of 0 or 1.
pub fn is_binary(x: &[f64]) -> bool {
    x.iter()
        .all(|&v| v.abs() <= INTEGRALITY_TOL || (v - 1.0).abs() <= INTEGRALITY_TOL)
}

impl LinearProgram {
    /// `n` variables with bounds `[0, +inf)` and a zero objective.
    pub fn new(n: usize, sense: Sense) -> Self {
        LinearProgram {
            sense,
            objective: vec![0.0; n],
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn var_count(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.lower[var] = lo;
        self.upper[var] = hi;
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest constraint or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let gap = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.var_count();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LP objective"));
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() || c.coeffs.iter().any(|&(_, a)| !a.is_finite()) {
                return Err(Error::NonFinite("LP constraint"));
            }
            if let Some(&(j, _)) = c.coeffs.iter().find(|&&(j, _)| j >= n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: j + 1,
                });
            }
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] == f64::INFINITY {
                return Err(Error::NonFinite("LP bounds"));
            }
        }
        Ok(())
    }
}

/// Solves `p` to optimality or reports infeasible / unbounded / iteration limit.
pub fn lp_solve(p: &LinearProgram) -> Result<SolveReport> {
    p.validate()?;
    let n = p.var_count();
    for j in 0..n {
        if p.lower[j] > p.upper[j] + FEASIBILITY_TOL {
            return Ok(SolveReport::without_solution(SolveStatus::Infeasible, 0));
        }
    }

    // x_j = offset_j + sum(coef * y_col), y >= 0
    let mut var_map: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut offset = vec![0.0; n];
    let mut ny = 0;
    let mut rows: Vec<(Vec<(usize, f64)>, Relation, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (p.lower[j], p.upper[j]);
        if lo.is_finite() {
            offset[j] = lo;
            var_map.push(vec![(ny, 1.0)]);
            if hi.is_finite() {
                rows.push((vec![(ny, 1.0)], Relation::Le, hi - lo));
            }
            ny += 1;
        } else if hi.is_finite() {
            offset[j] = hi;
            var_map.push(vec![(ny, -1.0)]);
            ny += 1;
        } else {
            var_map.push(vec![(ny, 1.0), (ny + 1, -1.0)]);
            ny += 2;
        }
    }
    for c in &p.constraints {
        let mut dense: Vec<(usize, f64)> = Vec::new();
        let mut rhs = c.rhs;
        for &(j, a) in &c.coeffs {
            rhs -= a * offset[j];
            for &(col, s) in &var_map[j] {
                dense.push((col, a * s));
            }
        }
        rows.push((dense, c.relation, rhs));
    }
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; ny];
    for j in 0..n {
        for &(col, s) in &var_map[j] {
            cost[col] += sign * p.objective[j] * s;
        }
    }

    let mut tab = Tableau::new(ny, rows);
    let status = tab.solve(&cost);
    let iterations = tab.pivots;
    if status != SolveStatus::Optimal {
        return Ok(SolveReport::without_solution(status, iterations));
    }
    let y = tab.primal(ny);
    let x: Vec<f64> = (0..n)
        .map(|j| offset[j] + var_map[j].iter().map(|&(col, s)| s * y[col]).sum::<f64>())
        .map(|v| if v.abs() < 1e-13 { 0.0 } else { v })
        .collect();
    Ok(SolveReport {
        status,
        objective: p.objective_at(&x),
        is_integral: is_binary(&x),
        solution: Some(x),
        iterations,
    })
}

struct Tableau {
    m: usize,
    width: usize,
    // row-major m x (width + 1); last column is the right-hand side
    a: Vec<f64>,
    basis: Vec<usize>,
    first_artificial: usize,
    pivots: usize,
    degenerate: usize,
}

impl Tableau {
    fn new(ny: usize, rows: Vec<(Vec<(usize, f64)>, Relation, f64)>) -> Self {
        let m = rows.len();
        let slack_count = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let art_count = rows
            .iter()
            .filter(|r| {
                let flipped = r.2 < 0.0;
                match r.1 {
                    Relation::Eq => true,
                    Relation::Le => flipped,
                    Relation::Ge => !flipped,
                }
            })
            .count();
        let first_artificial = ny + slack_count;
        let width = first_artificial + art_count;
        let stride = width + 1;
        let mut a = vec![0.0; m * stride];
        let mut basis = vec![0; m];
        let mut next_slack = ny;
        let mut next_art = first_artificial;
        for (i, (coeffs, rel, rhs)) in rows.into_iter().enumerate() {
            let s = if rhs < 0.0 { -1.0 } else { 1.0 };
            let row = &mut a[i * stride..(i + 1) * stride];
            for (col, v) in coeffs {
                row[col] += s * v;
            }
            row[width] = s * rhs;
            let rel = match (rel, s < 0.0) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => r,
            };
            match rel {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }
        Tableau {
            m,
            width,
            a,
            basis,
            first_artificial,
            pivots: 0,
            degenerate: 0,
        }
    }

    fn stride(&self) -> usize {
        self.width + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.stride() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width)
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let stride = self.stride();
        let pv = self.a[r * stride + c];
        for v in &mut self.a[r * stride..(r + 1) * stride] {
            *v /= pv;
        }
        let prow: Vec<f64> = self.a[r * stride..(r + 1) * stride].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * stride + c];
            if f != 0.0 {
                let row = &mut self.a[i * stride..(i + 1) * stride];
                for (v, &pj) in row.iter_mut().zip(&prow) {
                    *v -= f * pj;
                }
                row[c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, &pj) in obj.iter_mut().zip(&prow) {
                *v -= f * pj;
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs simplex iterations on `obj` (reduced costs plus negated objective
    /// value in the last slot), with columns `>= allowed` barred from entering.
    fn iterate(&mut self, obj: &mut [f64], allowed: usize) -> SolveStatus {
        let limit = 50_000 + 100 * (self.m + self.width);
        loop {
            if self.pivots > limit {
                return SolveStatus::IterationLimit;
            }
            let bland = self.degenerate >= BLAND_AFTER;
            let scale = 1.0 + obj[..allowed].iter().fold(0.0f64, |m, v| m.max(v.abs())) * 1e-12;
            let mut enter = None;
            let mut best = -1e-10 * scale;
            for (j, &d) in obj[..allowed].iter().enumerate() {
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else {
                return SolveStatus::Optimal;
            };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                let aij = self.at(i, c);
                if aij > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / aij;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            if ratio < best_ratio - 1e-12 {
                                true
                            } else if ratio <= best_ratio + 1e-12 {
                                if bland {
                                    self.basis[i] < self.basis[l]
                                } else {
                                    aij > self.at(l, c)
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some(i);
                        best_ratio = ratio;
                    }
                }
            }
            let Some(r) = leave else {
                return SolveStatus::Unbounded;
            };
            if best_ratio <= 1e-12 {
                self.degenerate += 1;
            }
            self.pivot(r, c, obj);
        }
    }

    fn objective_row(&self, cost: &[f64]) -> Vec<f64> {
        let mut obj = vec![0.0; self.stride()];
        obj[..cost.len()].copy_from_slice(cost);
        for i in 0..self.m {
            let cb = obj[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.stride() {
                    obj[j] -= cb * self.at(i, j);
                }
            }
        }
        obj
    }

    fn solve(&mut self, cost: &[f64]) -> SolveStatus {
        if self.first_artificial < self.width {
            let mut phase1 = vec![0.0; self.width];
            for v in &mut phase1[self.first_artificial..] {
                *v = 1.0;
            }
            let mut obj = self.objective_row(&phase1);
            let status = self.iterate(&mut obj, self.width);
            if status == SolveStatus::IterationLimit {
                return status;
            }
            let scale = 1.0 + (0..self.m).fold(0.0f64, |acc, i| acc.max(self.rhs(i).abs()));
            if -obj[self.width] > FEASIBILITY_TOL * scale {
                return SolveStatus::Infeasible;
            }
            // drive zero-level artificials out of the basis where possible
            for i in 0..self.m {
                if self.basis[i] >= self.first_artificial {
                    if let Some(j) = (0..self.first_artificial).find(|&j| self.at(i, j).abs() > 1e-9) {
                        self.pivot(i, j, &mut obj);
                    }
                }
            }
        }
        let mut obj = self.objective_row(cost);
        self.iterate(&mut obj, self.first_artificial)
    }

    fn primal(&self, ny: usize) -> Vec<f64> {
        let mut y = vec![0.0; ny];
        for i in 0..self.m {
            if self.basis[i] < ny {
                y[self.basis[i]] = self.rhs(i).max(0.0);
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bounded_minimum() {
        let mut p = LinearProgram::new(1, Sense::Minimize);
        p.objective[0] = 1.0;
        p.add_constraint(vec![(0, 1.0)], Relation::Ge, 3.0);
        let r = lp_solve(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.solution.unwrap()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn simple_maximum() {
        let mut p = LinearProgram::new(2, Sense::Maximize);
        p.objective = vec![1.0, 1.0];
        p.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.0);
        let r = lp_solve(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_pair() {
        let mut p = LinearProgram::new(1, Sense::Minimize);
        p.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        p.add_constraint(vec![(0, 1.0)], Relation::Le, 0.0);
        p.add_constraint(vec![(0, 1.0)], Relation::Ge, 1.0);
        assert_eq!(lp_solve(&p).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut p = LinearProgram::new(2, Sense::Maximize);
        p.objective = vec![1.0, 0.0];
        p.add_constraint(vec![(0, 1.0), (1, -1.0)], Relation::Le, 1.0);
        assert_eq!(lp_solve(&p).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn free_and_upper_bounded_variables() {
        // min x - y, x free, y <= 2, x >= -5 via constraint
        let mut p = LinearProgram::new(2, Sense::Minimize);
        p.objective = vec![1.0, -1.0];
        p.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        p.set_bounds(1, f64::NEG_INFINITY, 2.0);
        p.add_constraint(vec![(0, 1.0)], Relation::Ge, -5.0);
        let r = lp_solve(&p).unwrap();
        let x = r.solution.unwrap();
        assert!((x[0] + 5.0).abs() < 1e-10 && (x[1] - 2.0).abs() < 1e-10);
        assert!((r.objective + 7.0).abs() < 1e-10);
    }

    #[test]
    fn redundant_equalities() {
        let mut p = LinearProgram::new(2, Sense::Minimize);
        p.objective = vec![1.0, 2.0];
        p.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        p.add_constraint(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let r = lp_solve(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 1.0).abs() < 1e-12);
        assert!(r.is_integral);
    }

    #[test]
    fn random_lps_satisfy_their_constraints() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(1..8usize);
            let mut p = LinearProgram::new(n, Sense::Maximize);
            for j in 0..n {
                p.objective[j] = rng.random_range(-1.0..1.0);
                p.set_bounds(j, 0.0, rng.random_range(0.5..3.0));
            }
            for _ in 0..rng.random_range(0..6usize) {
                let coeffs = (0..n).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
                let rel = [Relation::Le, Relation::Ge, Relation::Eq][rng.random_range(0..3usize)];
                p.add_constraint(coeffs, rel, rng.random_range(-0.5..1.5));
            }
            let r = lp_solve(&p).unwrap();
            if let Some(x) = &r.solution {
                assert!(p.max_violation(x) < 1e-8, "violation {}", p.max_violation(x));
                // no vertex of a coarse grid beats it
                let grid_best = grid_search(&p, 6);
                assert!(grid_best <= r.objective + 1e-8);
            } else if r.status == SolveStatus::Infeasible {
                assert!(grid_search(&p, 6) == f64::NEG_INFINITY);
            }
        }
    }

    fn grid_search(p: &LinearProgram, steps: usize) -> f64 {
        let n = p.var_count();
        let mut idx = vec![0usize; n];
        let mut best = f64::NEG_INFINITY;
        loop {
            let x: Vec<f64> = (0..n).map(|j| p.upper[j] * idx[j] as f64 / steps as f64).collect();
            if p.max_violation(&x) <= 1e-12 {
                best = best.max(p.objective_at(&x));
            }
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] <= steps {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                return best;
            }
        }
    }
}
