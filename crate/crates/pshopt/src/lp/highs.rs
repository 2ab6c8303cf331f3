//! Adapter from [`LinearProgram`] to the HiGHS solver.
//!
//! Runs single-threaded with logging off so repeated solves of identical
//! models are deterministic.

use highs::{HighsModelStatus, RowProblem, Sense};

use super::model::{LinearProgram, LpSolution, LpStatus, Relation};
use super::LpError;

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let mut pb = RowProblem::new();
    let cols: Vec<_> = lp
        .variables
        .iter()
        .map(|v| pb.add_column(v.obj, v.lower..v.upper))
        .collect();
    for c in &lp.constraints {
        let factors: Vec<_> = c.coeffs.iter().map(|(i, a)| (cols[*i], *a)).collect();
        match c.relation {
            Relation::Le => pb.add_row(..=c.rhs, &factors),
            Relation::Ge => pb.add_row(c.rhs.., &factors),
            Relation::Eq => pb.add_row(c.rhs..=c.rhs, &factors),
        }
    }
    let mut model = pb.optimise(Sense::Minimise);
    model.make_quiet();
    model.set_option("threads", 1);
    let solved = model.solve();
    match solved.status() {
        HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => {
            let sol = solved.get_solution();
            let x = sol.columns().to_vec();
            let duals = Some(sol.dual_rows().to_vec());
            let objective = lp.objective_of(&x);
            Ok(LpSolution { status: LpStatus::Optimal, objective, x, duals })
        }
        HighsModelStatus::Infeasible => Ok(LpSolution::infeasible()),
        HighsModelStatus::Unbounded => Ok(LpSolution::unbounded()),
        HighsModelStatus::UnboundedOrInfeasible => {
            // Disambiguate by minimizing 0 over the same feasible set.
            let mut probe = lp.clone();
            for v in &mut probe.variables {
                v.obj = 0.0;
            }
            match solve(&probe)? {
                s if s.status == LpStatus::Infeasible => Ok(LpSolution::infeasible()),
                _ => Ok(LpSolution::unbounded()),
            }
        }
        other => Err(LpError::NumericalFailure(format!("backend status {other:?}"))),
    }
}

/// A solved model that can be cheaply re-solved after bound changes, reusing
/// the previous basis. Used by branch-and-bound to evaluate all children of a
/// node on one model.
pub struct ReSolver {
    solved: highs::SolvedModel,
}

impl ReSolver {
    pub fn new(lp: &LinearProgram) -> Result<ReSolver, LpError> {
        let mut pb = RowProblem::new();
        let cols: Vec<_> = lp
            .variables
            .iter()
            .map(|v| pb.add_column(v.obj, v.lower..v.upper))
            .collect();
        for c in &lp.constraints {
            let factors: Vec<_> = c.coeffs.iter().map(|(i, a)| (cols[*i], *a)).collect();
            match c.relation {
                Relation::Le => pb.add_row(..=c.rhs, &factors),
                Relation::Ge => pb.add_row(c.rhs.., &factors),
                Relation::Eq => pb.add_row(c.rhs..=c.rhs, &factors),
            }
        }
        let mut model = pb.optimise(Sense::Minimise);
        model.make_quiet();
        model.set_option("threads", 1);
        // Interior point beats simplex on these large cold models, and the
        // crossover still leaves a basis behind for the re-solves.
        model.set_option("solver", "ipm");
        let mut solved = model.solve();
        // Re-solves flip a handful of bounds: dual simplex from the existing
        // basis, without presolve rebuilding the model each time.
        {
            let ptr = solved.as_mut_ptr();
            let set = |name: &str, value: &str| {
                let name = std::ffi::CString::new(name).unwrap();
                let value = std::ffi::CString::new(value).unwrap();
                unsafe { highs_sys::Highs_setStringOptionValue(ptr, name.as_ptr(), value.as_ptr()) };
            };
            set("solver", "simplex");
            set("presolve", "off");
        }
        Ok(ReSolver { solved })
    }

    /// Solves with the given temporary column bounds, then restores the
    /// bounds recorded in `lp`. The basis from the previous solve carries
    /// over, so sequences of single-bound flips are fast.
    pub fn solve_with_bounds(
        &mut self,
        lp: &LinearProgram,
        changes: &[(usize, f64, f64)],
    ) -> Result<LpSolution, LpError> {
        let ptr = self.solved.as_mut_ptr();
        unsafe {
            for &(col, lo, hi) in changes {
                highs_sys::Highs_changeColBounds(ptr, col as highs_sys::HighsInt, lo, hi);
            }
            highs_sys::Highs_run(ptr);
        }
        let out = match self.solved.status() {
            HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => {
                let sol = self.solved.get_solution();
                let x = sol.columns().to_vec();
                let objective = lp.objective_of(&x);
                Ok(LpSolution { status: LpStatus::Optimal, objective, x, duals: None })
            }
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                Ok(LpSolution::infeasible())
            }
            HighsModelStatus::Unbounded => Ok(LpSolution::unbounded()),
            other => Err(LpError::NumericalFailure(format!("backend status {other:?}"))),
        };
        let ptr = self.solved.as_mut_ptr();
        unsafe {
            for &(col, _, _) in changes {
                let v = &lp.variables[col];
                highs_sys::Highs_changeColBounds(
                    ptr,
                    col as highs_sys::HighsInt,
                    v.lower,
                    v.upper,
                );
            }
        }
        out
    }
}
