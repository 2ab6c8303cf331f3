//! LP representation, solve dispatch, and a generic binary branch-and-bound.

pub mod highs;
pub mod mip;
pub mod model;
pub mod simplex;

pub use mip::{solve_binary_mip, solve_binary_mip_with, MipError, MipOptions, MipSolution};
pub use model::{Constraint, LinearProgram, LpSolution, LpStatus, Relation, Variable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// Backend selection for [`solve_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Dense internal simplex for small models, external solver otherwise.
    #[default]
    Auto,
    Dense,
    External,
}

/// Models at or below this size run on the internal dense simplex.
const DENSE_LIMIT: usize = 500;

/// Solves the LP relaxation (binary marks ignored). Deterministic: identical
/// models produce identical results.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with(lp, Backend::Auto)
}

pub fn solve_with(lp: &LinearProgram, backend: Backend) -> Result<LpSolution, LpError> {
    let dense = match backend {
        Backend::Dense => true,
        Backend::External => false,
        Backend::Auto => lp.num_vars().max(lp.num_rows()) <= DENSE_LIMIT,
    };
    let sol = if dense {
        match simplex::solve(lp) {
            // Heavily degenerate models can exhaust the dense iteration cap;
            // under Auto the external solver is the deterministic fallback.
            Err(LpError::NumericalFailure(_)) if backend == Backend::Auto => highs::solve(lp)?,
            other => other?,
        }
    } else {
        highs::solve(lp)?
    };
    debug_assert!(
        sol.status != LpStatus::Optimal || lp.feasibility_residual(&sol.x) <= 1e-6,
        "backend returned an infeasible optimum (residual {})",
        lp.feasibility_residual(&sol.x)
    );
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::model::*;
    use super::*;

    fn backends() -> [Backend; 2] {
        [Backend::Dense, Backend::External]
    }

    #[test]
    fn backends_agree_on_contract_examples() {
        for be in backends() {
            let mut lp = LinearProgram::new();
            lp.add_var("x", 1.0, 5.0, 1.0);
            let s = solve_with(&lp, be).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            assert!((s.objective - 1.0).abs() < 1e-9, "{be:?}");

            let mut lp = LinearProgram::new();
            let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 0.0);
            lp.add_row("le", vec![(x, 1.0)], Relation::Le, 0.0);
            lp.add_row("ge", vec![(x, 1.0)], Relation::Ge, 1.0);
            assert_eq!(solve_with(&lp, be).unwrap().status, LpStatus::Infeasible, "{be:?}");

            let mut lp = LinearProgram::new();
            lp.add_var("x", 0.0, f64::INFINITY, -1.0);
            assert_eq!(solve_with(&lp, be).unwrap().status, LpStatus::Unbounded, "{be:?}");
        }
    }

    #[test]
    fn backends_agree_on_random_dense_lps() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let nv = rng.gen_range(2..8);
            let nr = rng.gen_range(1..8);
            let mut lp = LinearProgram::new();
            for j in 0..nv {
                let lo = rng.gen_range(-5.0..0.0);
                let hi = lo + rng.gen_range(0.5..10.0);
                lp.add_var(format!("x{j}"), lo, hi, rng.gen_range(-3.0..3.0));
            }
            for r in 0..nr {
                let mut coeffs = Vec::new();
                for j in 0..nv {
                    if rng.gen_bool(0.7) {
                        coeffs.push((j, rng.gen_range(-2.0..2.0)));
                    }
                }
                if coeffs.is_empty() {
                    continue;
                }
                let rel = match rng.gen_range(0..3) {
                    0 => Relation::Le,
                    1 => Relation::Ge,
                    _ => Relation::Eq,
                };
                lp.add_row(format!("r{r}"), coeffs, rel, rng.gen_range(-4.0..4.0));
            }
            let a = solve_with(&lp, Backend::Dense).unwrap();
            let b = solve_with(&lp, Backend::External).unwrap();
            assert_eq!(a.status, b.status, "{}", lp.to_lp_format());
            if a.status == LpStatus::Optimal {
                let denom = 1.0f64.max(a.objective.abs());
                assert!(
                    (a.objective - b.objective).abs() / denom < 1e-6,
                    "dense {} vs external {}\n{}",
                    a.objective,
                    b.objective,
                    lp.to_lp_format()
                );
            }
        }
    }

    #[test]
    fn repeated_solves_are_bit_identical() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 10.0, -1.5);
        let y = lp.add_var("y", 0.0, 10.0, -2.5);
        lp.add_row("r", vec![(x, 1.0), (y, 2.0)], Relation::Le, 13.0);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn lp_format_dump_mentions_all_sections() {
        let mut lp = LinearProgram::new();
        let x = lp.add_binary("pick", -1.0);
        lp.add_row("cap", vec![(x, 1.0)], Relation::Le, 1.0);
        let text = lp.to_lp_format();
        for needle in ["Minimize", "Subject To", "Bounds", "Binary", "End"] {
            assert!(text.contains(needle), "missing {needle} in:\n{text}");
        }
    }
}
