//! Dense bounded-variable revised simplex, the reference LP backend.
//!
//! Two-phase primal method with an explicit basis inverse. Pricing is
//! Dantzig's rule; after a run of degenerate pivots it falls back to Bland's
//! rule, which guarantees termination. Intended for the small LPs that
//! dominate this crate (within-event blocks, node relaxations); large models
//! are routed to an external backend by the dispatcher.

use super::model::{LinearProgram, LpSolution, LpStatus, Relation};
use super::LpError;

const ZTOL: f64 = 1e-9;
const PTOL: f64 = 1e-9;
const FTOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const BLAND_AFTER_DEGENERATE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free variable resting at zero.
    FreeZero,
}

struct Simplex {
    m: usize,
    n: usize,
    /// Dense columns, structural then slack; each of length `m`.
    cols: Vec<Vec<f64>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<f64>,
    /// Row-major m*m basis inverse.
    binv: Vec<f64>,
    pivots_since_refactor: usize,
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let mut s = Simplex::build(lp);
    match s.run()? {
        LpStatus::Optimal => {
            let x = s.x[..lp.num_vars()].to_vec();
            let duals = Some(s.duals());
            let objective = lp.objective_of(&x);
            Ok(LpSolution { status: LpStatus::Optimal, objective, x, duals })
        }
        LpStatus::Infeasible => Ok(LpSolution::infeasible()),
        LpStatus::Unbounded => Ok(LpSolution::unbounded()),
    }
}

impl Simplex {
    fn build(lp: &LinearProgram) -> Simplex {
        let m = lp.num_rows();
        let nv = lp.num_vars();
        let n = nv + m;
        let mut cols = vec![vec![0.0; m]; n];
        let mut lb = vec![0.0; n];
        let mut ub = vec![0.0; n];
        let mut cost = vec![0.0; n];
        for (j, v) in lp.variables.iter().enumerate() {
            lb[j] = v.lower;
            ub[j] = v.upper;
            cost[j] = v.obj;
        }
        let mut rhs = vec![0.0; m];
        for (r, c) in lp.constraints.iter().enumerate() {
            for (j, a) in &c.coeffs {
                cols[*j][r] += a;
            }
            rhs[r] = c.rhs;
            let s = nv + r;
            cols[s][r] = 1.0;
            let (slo, shi) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lb[s] = slo;
            ub[s] = shi;
        }
        let mut state = Vec::with_capacity(n);
        let mut x = vec![0.0; n];
        for j in 0..nv {
            let st = if lb[j].is_finite() {
                x[j] = lb[j];
                VarState::AtLower
            } else if ub[j].is_finite() {
                x[j] = ub[j];
                VarState::AtUpper
            } else {
                VarState::FreeZero
            };
            state.push(st);
        }
        let mut basis = Vec::with_capacity(m);
        for r in 0..m {
            state.push(VarState::Basic(r));
            basis.push(nv + r);
        }
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let mut s = Simplex { m, n, cols, lb, ub, cost, rhs, basis, state, x, binv, pivots_since_refactor: 0 };
        s.recompute_basics();
        s
    }

    /// x_B = B^{-1} (rhs - N x_N).
    fn recompute_basics(&mut self) {
        let mut resid = self.rhs.clone();
        for j in 0..self.n {
            if !matches!(self.state[j], VarState::Basic(_)) && self.x[j] != 0.0 {
                for r in 0..self.m {
                    resid[r] -= self.cols[j][r] * self.x[j];
                }
            }
        }
        for r in 0..self.m {
            let mut v = 0.0;
            for k in 0..self.m {
                v += self.binv[r * self.m + k] * resid[k];
            }
            self.x[self.basis[r]] = v;
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan with partial pivoting.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for r in 0..m {
                a[r * m + c] = self.cols[j][r];
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            for r in col + 1..m {
                if a[r * m + col].abs() > a[piv * m + col].abs() {
                    piv = r;
                }
            }
            if a[piv * m + col].abs() < 1e-12 {
                return Err(LpError::NumericalFailure("singular basis during refactorization".into()));
            }
            if piv != col {
                for k in 0..m {
                    a.swap(col * m + k, piv * m + k);
                    inv.swap(col * m + k, piv * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.pivots_since_refactor = 0;
        self.recompute_basics();
        Ok(())
    }

    fn violation(&self, j: usize) -> f64 {
        (self.lb[j] - self.x[j]).max(self.x[j] - self.ub[j]).max(0.0)
    }

    fn total_infeasibility(&self) -> f64 {
        self.basis.iter().map(|&j| self.violation(j)).sum()
    }

    /// Phase-1 costs: -1 per unit below lower, +1 per unit above upper.
    fn phase_cost(&self, phase: u8, j: usize) -> f64 {
        if phase == 2 {
            return self.cost[j];
        }
        if self.x[j] < self.lb[j] - FTOL {
            -1.0
        } else if self.x[j] > self.ub[j] + FTOL {
            1.0
        } else {
            0.0
        }
    }

    fn duals_for(&self, phase: u8) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let cb = self.phase_cost(phase, j);
            if cb != 0.0 {
                for k in 0..m {
                    y[k] += cb * self.binv[r * m + k];
                }
            }
        }
        y
    }

    fn duals(&self) -> Vec<f64> {
        self.duals_for(2)
    }

    fn reduced_cost(&self, phase: u8, y: &[f64], j: usize) -> f64 {
        let mut z = if phase == 2 { self.cost[j] } else { 0.0 };
        for r in 0..self.m {
            let a = self.cols[j][r];
            if a != 0.0 {
                z -= y[r] * a;
            }
        }
        z
    }

    fn run(&mut self) -> Result<LpStatus, LpError> {
        if self.m > 0 && self.total_infeasibility() > FTOL {
            match self.phase(1)? {
                LpStatus::Optimal => {
                    if self.total_infeasibility() > 1e-7 {
                        return Ok(LpStatus::Infeasible);
                    }
                    // Snap near-feasible basics onto their bounds.
                    for r in 0..self.m {
                        let j = self.basis[r];
                        if self.lb[j].is_finite() && self.x[j] < self.lb[j] {
                            self.x[j] = self.lb[j];
                        }
                        if self.ub[j].is_finite() && self.x[j] > self.ub[j] {
                            self.x[j] = self.ub[j];
                        }
                    }
                }
                LpStatus::Unbounded => {
                    return Err(LpError::NumericalFailure("unbounded phase-1 ray".into()))
                }
                other => return Ok(other),
            }
        }
        self.phase(2)
    }

    fn phase(&mut self, phase: u8) -> Result<LpStatus, LpError> {
        let max_iter = 5_000 + 10 * (self.n + self.m);
        let mut bland = false;
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            if phase == 1 && self.total_infeasibility() <= FTOL {
                return Ok(LpStatus::Optimal);
            }
            let y = self.duals_for(phase);
            let mut entering: Option<(usize, f64, f64)> = None; // (var, sigma, |z|)
            for j in 0..self.n {
                let (sigma, score) = match self.state[j] {
                    VarState::Basic(_) => continue,
                    VarState::AtLower => {
                        let z = self.reduced_cost(phase, &y, j);
                        if z < -ZTOL {
                            (1.0, -z)
                        } else {
                            continue;
                        }
                    }
                    VarState::AtUpper => {
                        let z = self.reduced_cost(phase, &y, j);
                        if z > ZTOL {
                            (-1.0, z)
                        } else {
                            continue;
                        }
                    }
                    VarState::FreeZero => {
                        let z = self.reduced_cost(phase, &y, j);
                        if z < -ZTOL {
                            (1.0, -z)
                        } else if z > ZTOL {
                            (-1.0, z)
                        } else {
                            continue;
                        }
                    }
                };
                if bland {
                    entering = Some((j, sigma, score));
                    break;
                }
                if entering.map_or(true, |(_, _, best)| score > best) {
                    entering = Some((j, sigma, score));
                }
            }
            let Some((j_in, sigma, _)) = entering else {
                if phase == 1 && self.total_infeasibility() > FTOL {
                    return Ok(LpStatus::Infeasible);
                }
                return Ok(LpStatus::Optimal);
            };

            // w = B^{-1} A_j; basic variable r moves at rate -sigma * w_r.
            let m = self.m;
            let mut w = vec![0.0; m];
            for k in 0..m {
                let a = self.cols[j_in][k];
                if a != 0.0 {
                    for r in 0..m {
                        w[r] += self.binv[r * m + k] * a;
                    }
                }
            }

            let own_range = self.ub[j_in] - self.lb[j_in]; // inf for free/one-sided
            let mut best_delta = if own_range.is_finite() { own_range } else { f64::INFINITY };
            let mut leaving: Option<(usize, f64)> = None; // (row, bound hit)
            for r in 0..m {
                if w[r].abs() <= PTOL {
                    continue;
                }
                let d = -sigma * w[r];
                let jb = self.basis[r];
                let xb = self.x[jb];
                let (blocks, bound) = if phase == 1 && xb < self.lb[jb] - FTOL {
                    if d > 0.0 {
                        (true, self.lb[jb])
                    } else {
                        (false, 0.0)
                    }
                } else if phase == 1 && xb > self.ub[jb] + FTOL {
                    if d < 0.0 {
                        (true, self.ub[jb])
                    } else {
                        (false, 0.0)
                    }
                } else if d > 0.0 && self.ub[jb].is_finite() {
                    (true, self.ub[jb])
                } else if d < 0.0 && self.lb[jb].is_finite() {
                    (true, self.lb[jb])
                } else {
                    (false, 0.0)
                };
                if !blocks {
                    continue;
                }
                let delta = ((bound - xb) / d).max(0.0);
                let better = delta < best_delta - 1e-12
                    || (delta < best_delta + 1e-12
                        && match leaving {
                            None => true,
                            Some((r_cur, _)) => {
                                if bland {
                                    self.basis[r] < self.basis[r_cur]
                                } else {
                                    w[r].abs() > w[r_cur].abs()
                                }
                            }
                        });
                if better {
                    best_delta = delta.min(best_delta);
                    leaving = Some((r, bound));
                }
            }

            if best_delta.is_infinite() {
                return if phase == 2 {
                    Ok(LpStatus::Unbounded)
                } else {
                    Err(LpError::NumericalFailure("no blocking variable in phase 1".into()))
                };
            }

            if best_delta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > BLAND_AFTER_DEGENERATE {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }

            // Apply the step.
            self.x[j_in] += sigma * best_delta;
            for r in 0..m {
                if w[r] != 0.0 {
                    self.x[self.basis[r]] -= sigma * w[r] * best_delta;
                }
            }
            match leaving {
                None => {
                    // Bound flip: entering variable hits its opposite bound.
                    self.state[j_in] = match self.state[j_in] {
                        VarState::AtLower => {
                            self.x[j_in] = self.ub[j_in];
                            VarState::AtUpper
                        }
                        VarState::AtUpper => {
                            self.x[j_in] = self.lb[j_in];
                            VarState::AtLower
                        }
                        other => other,
                    };
                }
                Some((r_out, bound)) => {
                    let j_out = self.basis[r_out];
                    self.x[j_out] = bound;
                    self.state[j_out] = if (bound - self.lb[j_out]).abs() <= (bound - self.ub[j_out]).abs()
                    {
                        VarState::AtLower
                    } else {
                        VarState::AtUpper
                    };
                    self.basis[r_out] = j_in;
                    self.state[j_in] = VarState::Basic(r_out);
                    self.pivot_update(r_out, &w)?;
                }
            }
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
        Err(LpError::NumericalFailure("simplex iteration limit".into()))
    }

    /// Gauss-Jordan update of the basis inverse after column `w` enters on
    /// pivot row `r_out`.
    fn pivot_update(&mut self, r_out: usize, w: &[f64]) -> Result<(), LpError> {
        let m = self.m;
        let piv = w[r_out];
        if piv.abs() < PTOL {
            return Err(LpError::NumericalFailure("tiny pivot".into()));
        }
        for k in 0..m {
            self.binv[r_out * m + k] /= piv;
        }
        for r in 0..m {
            if r != r_out && w[r] != 0.0 {
                let f = w[r];
                for k in 0..m {
                    self.binv[r * m + k] -= f * self.binv[r_out * m + k];
                }
            }
        }
        self.pivots_since_refactor += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::model::*;
    use super::solve;

    #[test]
    fn bound_active_minimum() {
        let mut lp = LinearProgram::new();
        lp.add_var("x", 1.0, 5.0, 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-9);
        assert!((s.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_feasible_set() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        lp.add_row("le", vec![(x, 1.0)], Relation::Le, 0.0);
        lp.add_row("ge", vec![(x, 1.0)], Relation::Ge, 1.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new();
        lp.add_var("x", 0.0, f64::INFINITY, -1.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn small_dense_problem() {
        // min -2x - 3y  s.t.  x + y <= 4, x + 3y <= 6, x,y >= 0.
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, -2.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY, -3.0);
        lp.add_row("r1", vec![(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
        lp.add_row("r2", vec![(x, 1.0), (y, 3.0)], Relation::Ge, 6.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // Optimum at x=4, y=... check: maximize 2x+3y over x+y<=4, x+3y>=6.
        // Vertices: (0,4): obj -12; (3,1): -9; (0,2): -6; (4,0) infeasible (x+3y=4<6).
        assert!((s.objective + 12.0).abs() < 1e-7, "obj {}", s.objective);
        assert!(lp.feasibility_residual(&s.x) <= 1e-7);
    }

    #[test]
    fn equality_and_upper_bounds() {
        // min x1 + 2 x2, x1 + x2 = 10, 0 <= x1 <= 4, 0 <= x2 <= 8.
        let mut lp = LinearProgram::new();
        let x1 = lp.add_var("x1", 0.0, 4.0, 1.0);
        let x2 = lp.add_var("x2", 0.0, 8.0, 2.0);
        lp.add_row("bal", vec![(x1, 1.0), (x2, 1.0)], Relation::Eq, 10.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 4.0).abs() < 1e-9);
        assert!((s.x[1] - 6.0).abs() < 1e-9);
        assert!((s.objective - 16.0).abs() < 1e-9);
    }

    #[test]
    fn free_variable_in_equality() {
        // min |structure|: free y forced by equality, minimize cost through it.
        // min y s.t. y = x - 7, 0 <= x <= 3, y free  ->  x=0, y=-7.
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 3.0, 0.0);
        let y = lp.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_row("def", vec![(y, 1.0), (x, -1.0)], Relation::Eq, -7.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 7.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Multiple redundant constraints through the same vertex.
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, -1.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY, -1.0);
        for r in 0..6 {
            lp.add_row(format!("r{r}"), vec![(x, 1.0 + r as f64 * 0.0), (y, 1.0)], Relation::Le, 2.0);
        }
        lp.add_row("cap", vec![(x, 1.0)], Relation::Le, 2.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 2.0).abs() < 1e-7);
    }
}
