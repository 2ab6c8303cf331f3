//! Generic linear-program representation shared by every formulation.

use std::fmt::Write as _;

/// Constraint relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub obj: f64,
    /// Marked variables are branched on by the binary MIP solver; the LP
    /// relaxation treats them as plain bounded variables.
    pub binary: bool,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    /// Sparse coefficient row: (variable index, coefficient).
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A minimization LP with bounded variables and sparse rows.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Constant added to the objective (boundary costs folded into arcs).
    pub obj_offset: f64,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, obj: f64) -> usize {
        debug_assert!(lower <= upper, "variable bounds inverted");
        self.variables.push(Variable { name: name.into(), lower, upper, obj, binary: false });
        self.variables.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>, obj: f64) -> usize {
        let idx = self.add_var(name, 0.0, 1.0, obj);
        self.variables[idx].binary = true;
        idx
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        mut coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) {
        debug_assert!(coeffs.iter().all(|(i, _)| *i < self.variables.len()));
        // Coalesce repeated columns; solver backends require unique indices.
        coeffs.sort_by_key(|(i, _)| *i);
        coeffs.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        self.constraints.push(Constraint { name: name.into(), coeffs, relation, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_of(&self, x: &[f64]) -> f64 {
        self.obj_offset + self.variables.iter().zip(x).map(|(v, xi)| v.obj * xi).sum::<f64>()
    }

    /// Maximum absolute constraint/bound violation of `x`.
    pub fn feasibility_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, xi) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|(i, a)| a * x[*i]).sum();
            let resid = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(resid);
        }
        worst.max(0.0)
    }

    /// Renders the model in CPLEX LP text format for external cross-checks.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::from("Minimize\n obj:");
        for (i, v) in self.variables.iter().enumerate() {
            if v.obj != 0.0 {
                let _ = write!(out, " {:+} x{}", v.obj, i);
            }
        }
        out.push_str("\nSubject To\n");
        for (r, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{r}:");
            for (i, a) in &c.coeffs {
                let _ = write!(out, " {a:+} x{i}");
            }
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {rel} {}", c.rhs);
        }
        out.push_str("Bounds\n");
        for (i, v) in self.variables.iter().enumerate() {
            let lo = if v.lower.is_finite() { format!("{}", v.lower) } else { "-inf".into() };
            let hi = if v.upper.is_finite() { format!("{}", v.upper) } else { "+inf".into() };
            let _ = writeln!(out, " {lo} <= x{i} <= {hi}  \\ {}", v.name);
        }
        let binaries: Vec<String> = self
            .variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.binary)
            .map(|(i, _)| format!("x{i}"))
            .collect();
        if !binaries.is_empty() {
            out.push_str("Binary\n ");
            out.push_str(&binaries.join(" "));
            out.push('\n');
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// `+inf` when infeasible, `-inf` when unbounded.
    pub objective: f64,
    /// Primal values; empty unless Optimal.
    pub x: Vec<f64>,
    /// Row duals, when the backend provides them.
    pub duals: Option<Vec<f64>>,
}

impl LpSolution {
    pub fn infeasible() -> Self {
        LpSolution { status: LpStatus::Infeasible, objective: f64::INFINITY, x: Vec::new(), duals: None }
    }

    pub fn unbounded() -> Self {
        LpSolution {
            status: LpStatus::Unbounded,
            objective: f64::NEG_INFINITY,
            x: Vec::new(),
            duals: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}
