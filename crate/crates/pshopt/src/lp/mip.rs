//! Generic branch-and-bound over binary-marked variables.
//!
//! Deterministic by construction: most-fractional branching with ties broken
//! by lowest variable index, best-bound node order with ties broken by depth
//! then creation order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use thiserror::Error;

use super::model::{LinearProgram, LpSolution, LpStatus};
use super::{solve_with, Backend, LpError};
use crate::tol::INTEGRALITY_TOL;

#[derive(Debug, Clone)]
pub struct MipOptions {
    pub time_budget: f64,
    pub backend: Backend,
    /// Run the rounding heuristic every this many nodes (0 disables it).
    pub heuristic_every: usize,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions { time_budget: f64::INFINITY, backend: Backend::Auto, heuristic_every: 16 }
    }
}

#[derive(Debug, Clone)]
pub struct MipSolution {
    /// Best integral solution; `status == Infeasible` when none exists.
    pub solution: LpSolution,
    /// Relative optimality gap proven at termination.
    pub gap: f64,
    pub nodes: usize,
}

#[derive(Debug, Error)]
pub enum MipError {
    #[error("time budget exceeded (gap {gap:.3e} after {nodes} nodes)")]
    TimeBudgetExceeded { incumbent: Option<Box<LpSolution>>, gap: f64, nodes: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixes: Vec<(usize, f64)>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Node {}
impl Ord for Node {
    // BinaryHeap is a max-heap; invert so pop() yields the best bound first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(other.depth.cmp(&self.depth))
            .then(other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn frac(v: f64) -> f64 {
    (v - v.round()).abs()
}

fn most_fractional(lp: &LinearProgram, x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in lp.variables.iter().enumerate() {
        if v.binary {
            let f = frac(x[j]);
            if f > INTEGRALITY_TOL && best.map_or(true, |(_, bf)| f > bf) {
                best = Some((j, f));
            }
        }
    }
    best.map(|(j, _)| j)
}

fn solve_fixed(
    lp: &mut LinearProgram,
    fixes: &[(usize, f64)],
    backend: Backend,
) -> Result<LpSolution, LpError> {
    let saved: Vec<(usize, f64, f64)> =
        fixes.iter().map(|&(j, _)| (j, lp.variables[j].lower, lp.variables[j].upper)).collect();
    for &(j, v) in fixes {
        lp.variables[j].lower = v;
        lp.variables[j].upper = v;
    }
    let out = solve_with(lp, backend);
    for (j, lo, hi) in saved {
        lp.variables[j].lower = lo;
        lp.variables[j].upper = hi;
    }
    out
}

pub fn solve_binary_mip(
    model: &LinearProgram,
    time_budget: f64,
) -> Result<MipSolution, MipError> {
    solve_binary_mip_with(model, &MipOptions { time_budget, ..Default::default() })
}

pub fn solve_binary_mip_with(
    model: &LinearProgram,
    opts: &MipOptions,
) -> Result<MipSolution, MipError> {
    let start = Instant::now();
    let mut lp = model.clone();
    let binaries: Vec<usize> =
        (0..lp.num_vars()).filter(|&j| lp.variables[j].binary).collect();
    for &j in &binaries {
        let v = &lp.variables[j];
        assert!(v.lower >= 0.0 && v.upper <= 1.0, "binary variable {} outside [0,1]", v.name);
    }

    let root = solve_with(&lp, opts.backend)?;
    match root.status {
        LpStatus::Infeasible => {
            return Ok(MipSolution { solution: LpSolution::infeasible(), gap: 0.0, nodes: 1 })
        }
        LpStatus::Unbounded => {
            return Err(LpError::NumericalFailure("relaxation unbounded below".into()).into())
        }
        LpStatus::Optimal => {}
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node { bound: root.objective, depth: 0, seq, fixes: Vec::new(), x: root.x });
    let mut incumbent: Option<LpSolution> = None;
    let mut nodes = 0usize;

    let rel_gap = |inc: f64, bound: f64| ((inc - bound) / 1.0f64.max(inc.abs())).max(0.0);

    while let Some(node) = heap.pop() {
        nodes += 1;
        if let Some(inc) = &incumbent {
            // Best-first: once the best open bound is within tolerance of the
            // incumbent, optimality is proven.
            if node.bound >= inc.objective - 1e-9 * 1.0f64.max(inc.objective.abs()) {
                break;
            }
        }
        if start.elapsed().as_secs_f64() > opts.time_budget {
            let gap = incumbent
                .as_ref()
                .map(|inc| rel_gap(inc.objective, node.bound))
                .unwrap_or(f64::INFINITY);
            return Err(MipError::TimeBudgetExceeded {
                incumbent: incumbent.map(Box::new),
                gap,
                nodes,
            });
        }

        match most_fractional(&lp, &node.x) {
            None => {
                // Integral already; node bound equals its objective.
                let candidate = LpSolution {
                    status: LpStatus::Optimal,
                    objective: node.bound,
                    x: node.x,
                    duals: None,
                };
                if incumbent.as_ref().map_or(true, |inc| candidate.objective < inc.objective) {
                    incumbent = Some(candidate);
                }
                continue;
            }
            Some(branch_var) => {
                if opts.heuristic_every > 0 && nodes % opts.heuristic_every == 1 {
                    let rounded: Vec<(usize, f64)> =
                        binaries.iter().map(|&j| (j, node.x[j].round())).collect();
                    let h = solve_fixed(&mut lp, &rounded, opts.backend)?;
                    if h.status == LpStatus::Optimal
                        && incumbent.as_ref().map_or(true, |inc| h.objective < inc.objective)
                    {
                        incumbent = Some(h);
                    }
                }
                for fix_val in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((branch_var, fix_val));
                    let child = solve_fixed(&mut lp, &fixes, opts.backend)?;
                    if child.status != LpStatus::Optimal {
                        continue;
                    }
                    if let Some(inc) = &incumbent {
                        if child.objective >= inc.objective - 1e-9 * 1.0f64.max(inc.objective.abs())
                        {
                            continue;
                        }
                    }
                    seq += 1;
                    heap.push(Node {
                        bound: child.objective,
                        depth: node.depth + 1,
                        seq,
                        fixes,
                        x: child.x,
                    });
                }
            }
        }
    }

    match incumbent {
        Some(mut inc) => {
            // Snap binaries exactly.
            for &j in &binaries {
                inc.x[j] = inc.x[j].round();
            }
            Ok(MipSolution { solution: inc, gap: 0.0, nodes })
        }
        None => Ok(MipSolution { solution: LpSolution::infeasible(), gap: 0.0, nodes }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::model::Relation;

    #[test]
    fn two_candidate_knapsack() {
        let mut lp = LinearProgram::new();
        let y1 = lp.add_binary("y1", -3.0);
        let y2 = lp.add_binary("y2", -2.0);
        lp.add_row("cap", vec![(y1, 1.0), (y2, 1.0)], Relation::Le, 1.0);
        let s = solve_binary_mip(&lp, 10.0).unwrap();
        assert_eq!(s.solution.x, vec![1.0, 0.0]);
        assert!((s.solution.objective + 3.0).abs() < 1e-9);
        assert_eq!(s.gap, 0.0);
    }

    #[test]
    fn fixed_binaries_reduce_to_lp() {
        let mut lp = LinearProgram::new();
        let y = lp.add_binary("y", 5.0);
        lp.variables[y].lower = 1.0;
        let x = lp.add_var("x", 0.0, 2.0, -1.0);
        lp.add_row("link", vec![(x, 1.0), (y, -2.0)], Relation::Le, 0.0);
        let s = solve_binary_mip(&lp, 10.0).unwrap();
        let relaxed = crate::lp::solve_lp(&lp).unwrap();
        assert!((s.solution.objective - relaxed.objective).abs() < 1e-9);
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..25 {
            let nb = 5;
            let mut lp = LinearProgram::new();
            for j in 0..nb {
                lp.add_binary(format!("y{j}"), rng.gen_range(-5.0..5.0));
            }
            let x = lp.add_var("x", 0.0, 3.0, rng.gen_range(-2.0..0.0));
            for r in 0..3 {
                let mut coeffs: Vec<(usize, f64)> =
                    (0..nb).map(|j| (j, rng.gen_range(-2.0..2.0))).collect();
                coeffs.push((x, rng.gen_range(0.0..1.0)));
                lp.add_row(format!("r{r}"), coeffs, Relation::Le, rng.gen_range(0.5..4.0));
            }
            let got = solve_binary_mip(&lp, 30.0).unwrap();

            // Brute force over all 2^5 assignments, solving the continuous
            // remainder for each.
            let mut best = f64::INFINITY;
            for mask in 0..(1u32 << nb) {
                let fixes: Vec<(usize, f64)> =
                    (0..nb).map(|j| (j, ((mask >> j) & 1) as f64)).collect();
                let mut probe = lp.clone();
                let s = solve_fixed(&mut probe, &fixes, Backend::Auto).unwrap();
                if s.status == LpStatus::Optimal {
                    best = best.min(s.objective);
                }
            }
            if best.is_infinite() {
                assert_eq!(got.solution.status, LpStatus::Infeasible, "trial {trial}");
            } else {
                assert!(
                    (got.solution.objective - best).abs() <= 1e-6 * 1.0f64.max(best.abs()),
                    "trial {trial}: bnb {} vs enumeration {best}",
                    got.solution.objective
                );
            }
        }
    }

    #[test]
    fn relaxation_dominates_mip() {
        let mut lp = LinearProgram::new();
        let y1 = lp.add_binary("y1", -1.0);
        let y2 = lp.add_binary("y2", -1.0);
        lp.add_row("r", vec![(y1, 2.0), (y2, 2.0)], Relation::Le, 3.0);
        let relaxed = crate::lp::solve_lp(&lp).unwrap();
        let integral = solve_binary_mip(&lp, 10.0).unwrap();
        assert!(relaxed.objective <= integral.solution.objective + 1e-9);
    }

    #[test]
    fn infeasible_integer_model() {
        let mut lp = LinearProgram::new();
        let y = lp.add_binary("y", 1.0);
        lp.add_row("impossible", vec![(y, 2.0)], Relation::Eq, 1.0);
        let s = solve_binary_mip(&lp, 10.0).unwrap();
        assert_eq!(s.solution.status, LpStatus::Infeasible);
    }
}
