//! LP-based branch-and-bound for 0/1 programs.

use super::lp::{is_binary, lp_solve, LinearProgram, Sense, SolveReport, SolveStatus};
use crate::error::{Error, Result};

pub const NODE_LIMIT: usize = 200_000;

/// Depth-first branch-and-bound on the most fractional variable, pruning
/// against the incumbent. Every variable must be bounded within `[0, 1]`.
pub fn ip_solve_binary(p: &LinearProgram) -> Result<SolveReport> {
    p.validate()?;
    for j in 0..p.var_count() {
        if p.lower[j] < 0.0 || p.upper[j] > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "variable {j} is not bounded within [0, 1]"
            )));
        }
    }
    // internally everything is a minimization
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stack: Vec<(Vec<f64>, Vec<f64>)> = vec![(p.lower.clone(), p.upper.clone())];
    let mut node = p.clone();
    let mut explored = 0;

    while let Some((lo, hi)) = stack.pop() {
        if explored >= NODE_LIMIT {
            return Ok(SolveReport::without_solution(SolveStatus::IterationLimit, explored));
        }
        explored += 1;
        node.lower = lo;
        node.upper = hi;
        let relax = lp_solve(&node)?;
        match relax.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => continue,
            // bounded variables cannot be unbounded; treat a stalled LP as fatal
            other => return Ok(SolveReport::without_solution(other, explored)),
        }
        let bound = sign * relax.objective;
        if let Some((inc, _)) = &best {
            if bound >= *inc - 1e-9 {
                continue;
            }
        }
        let x = relax.solution.expect("optimal LP has a solution");
        if is_binary(&x) {
            let rounded: Vec<f64> = x.iter().map(|v| v.round()).collect();
            let value = sign * p.objective_at(&rounded);
            if best.as_ref().is_none_or(|(inc, _)| value < *inc) {
                best = Some((value, rounded));
            }
            continue;
        }
        let (j, frac) = x
            .iter()
            .enumerate()
            .map(|(j, &v)| (j, (v - v.floor() - 0.5).abs()))
            .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
        debug_assert!(frac < 0.5);
        let mut down_hi = node.upper.clone();
        down_hi[j] = 0.0;
        let mut up_lo = node.lower.clone();
        up_lo[j] = 1.0;
        let down = (node.lower.clone(), down_hi);
        let up = (up_lo, node.upper.clone());
        // explore the side the relaxation leans towards first
        if x[j] >= 0.5 {
            stack.push(down);
            stack.push(up);
        } else {
            stack.push(up);
            stack.push(down);
        }
    }

    Ok(match best {
        Some((_, x)) => SolveReport {
            status: SolveStatus::Optimal,
            objective: p.objective_at(&x),
            is_integral: true,
            solution: Some(x),
            iterations: explored,
        },
        None => SolveReport::without_solution(SolveStatus::Infeasible, explored),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::lp::Relation;
    use rand::{RngExt, SeedableRng};

    fn binary_lp(n: usize, sense: Sense) -> LinearProgram {
        let mut p = LinearProgram::new(n, sense);
        for j in 0..n {
            p.set_bounds(j, 0.0, 1.0);
        }
        p
    }

    fn enumerate(p: &LinearProgram) -> Option<f64> {
        let n = p.var_count();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << n) {
            let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
            if p.max_violation(&x) <= 1e-12 {
                let v = p.objective_at(&x);
                best = Some(match (best, p.sense) {
                    (None, _) => v,
                    (Some(b), Sense::Minimize) => b.min(v),
                    (Some(b), Sense::Maximize) => b.max(v),
                });
            }
        }
        best
    }

    #[test]
    fn two_variable_cover() {
        let mut p = binary_lp(2, Sense::Minimize);
        p.objective = vec![1.0, 1.0];
        p.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Ge, 1.0);
        let r = ip_solve_binary(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integral_relaxation_stops_at_root() {
        let mut p = binary_lp(3, Sense::Maximize);
        p.objective = vec![1.0, -1.0, 2.0];
        let r = ip_solve_binary(&p).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.solution.unwrap(), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn six_variable_covering_matches_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let mut p = binary_lp(6, Sense::Minimize);
            p.objective = (0..6).map(|_| rng.random_range(0.1..2.0)).collect();
            for _ in 0..5 {
                let coeffs: Vec<(usize, f64)> = (0..6)
                    .filter(|_| rng.random::<f64>() < 0.4)
                    .map(|j| (j, 1.0))
                    .collect();
                if !coeffs.is_empty() {
                    p.add_constraint(coeffs, Relation::Ge, 1.0);
                }
            }
            let r = ip_solve_binary(&p).unwrap();
            let truth = enumerate(&p).unwrap();
            assert!((r.objective - truth).abs() < 1e-9);
        }
    }

    #[test]
    fn random_binary_programs_match_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = rng.random_range(1..=12usize);
            let sense = if rng.random::<bool>() { Sense::Minimize } else { Sense::Maximize };
            let mut p = binary_lp(n, sense);
            p.objective = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            for _ in 0..rng.random_range(1..6usize) {
                let coeffs: Vec<(usize, f64)> =
                    (0..n).map(|j| (j, rng.random_range(-1.0..2.0))).collect();
                let rel = if rng.random::<bool>() { Relation::Le } else { Relation::Ge };
                p.add_constraint(coeffs, rel, rng.random_range(-0.5..2.0));
            }
            let r = ip_solve_binary(&p).unwrap();
            match enumerate(&p) {
                Some(v) => {
                    assert_eq!(r.status, SolveStatus::Optimal);
                    assert!((r.objective - v).abs() < 1e-9, "{} vs {}", r.objective, v);
                    // the relaxation bounds the integer optimum
                    let relax = lp_solve(&p).unwrap();
                    match sense {
                        Sense::Minimize => assert!(relax.objective <= v + 1e-9),
                        Sense::Maximize => assert!(relax.objective >= v - 1e-9),
                    }
                    if relax.is_integral {
                        assert!((relax.objective - v).abs() < 1e-9);
                    }
                }
                None => assert_eq!(r.status, SolveStatus::Infeasible),
            }
        }
    }

    #[test]
    fn rejects_unbounded_variables() {
        let p = LinearProgram::new(2, Sense::Minimize);
        assert!(ip_solve_binary(&p).is_err());
    }
}
