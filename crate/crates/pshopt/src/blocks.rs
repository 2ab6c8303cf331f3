//! Mode-specific within-event operating LPs.
//!
//! A block covers stages `t..j-1` in a fixed mode and connects an entry
//! boundary (reservoir level, previous turbine output) to an exit boundary.
//! The same constraint set is emitted in three guises: standalone with fixed
//! boundaries (DP arc costs), perspective-scaled onto a flow arc (monolithic
//! network LP), and scaled with affine boundary expressions (branch-and-bound
//! node relaxations). `append_block` is the single source of truth for all
//! three; boundaries and the scale enter as affine expressions.

use thiserror::Error;

use crate::instance::{Instance, Mode};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation};

/// Affine expression over LP variables: `Σ coef·var + constant`.
#[derive(Debug, Clone, Default)]
pub struct Expr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr { terms: Vec::new(), constant: c }
    }

    pub fn var(j: usize) -> Expr {
        Expr { terms: vec![(j, 1.0)], constant: 0.0 }
    }

    pub fn scaled(j: usize, c: f64) -> Expr {
        Expr { terms: vec![(j, c)], constant: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.constant == 0.0
    }
}

/// How the last turbine output of a turbine block is tied to the exit
/// boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalRule {
    /// `H_{j-1}` equals the exit ramping boundary (successor keeps the
    /// turbine running).
    Pin,
    /// `H_{j-1} <= ramp_limit`, so output can reach zero right after the
    /// block; the exit ramping boundary must be zero.
    Cap,
    /// No terminal condition (free end of horizon).
    Free,
}

/// Fixed boundary data for a standalone block solve. Stages are 1-based and
/// the block covers `t..j-1` with `t < j <= T+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockBoundary {
    pub t: usize,
    pub j: usize,
    pub mode: Mode,
    pub m_start: f64,
    pub h_bar_start: f64,
    /// Exit reservoir level; `None` leaves the final level free (end of
    /// horizon with no terminal target).
    pub m_end: Option<f64>,
    pub h_bar_end: f64,
    pub terminal: TerminalRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrajectory {
    /// Per-stage turbine output and pump draw over `t..j-1`.
    pub h_out: Vec<f64>,
    pub h_in: Vec<f64>,
    /// Reservoir levels `M_t..M_j` inclusive (length `j-t+1`).
    pub levels: Vec<f64>,
    /// Per-stage epigraph costs; their sum is the block cost.
    pub stage_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockResult {
    Feasible { cost: f64, traj: BlockTrajectory },
    Infeasible,
}

impl BlockResult {
    pub fn cost(&self) -> Option<f64> {
        match self {
            BlockResult::Feasible { cost, .. } => Some(*cost),
            BlockResult::Infeasible => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("boundary contract violated: {0}")]
    BoundaryContract(String),
    #[error("hydraulic short circuit is disabled on this instance")]
    ModeDisabled,
}

/// Boundary expressions for one embedded block. `pi` is the perspective
/// scale (constant 1 for an unscaled block).
#[derive(Debug, Clone)]
pub struct BlockEmbed {
    pub pi: Expr,
    pub m_in: Expr,
    pub h_bar_in: Expr,
    pub m_out: Option<Expr>,
    pub h_bar_out: Expr,
    pub terminal: TerminalRule,
}

/// Variable indices created for one embedded block.
#[derive(Debug, Clone, Default)]
pub struct BlockVars {
    pub h_out: Vec<usize>,
    pub h_in: Vec<usize>,
    /// `M_t..M_j` inclusive.
    pub m: Vec<usize>,
    /// Epigraph variables carrying the block cost in the objective.
    pub phi: Vec<usize>,
}

fn add_row_expr(
    lp: &mut LinearProgram,
    name: String,
    mut lhs: Vec<(usize, f64)>,
    minus: &[(&Expr, f64)],
    relation: Relation,
) {
    let mut rhs = 0.0;
    for (e, w) in minus {
        for (v, c) in &e.terms {
            lhs.push((*v, -c * w));
        }
        rhs += e.constant * w;
    }
    lp.add_row(name, lhs, relation, rhs);
}

/// Emits the constraints and epigraph variables of one block into `lp`.
///
/// All flow bounds, ramp limits, storage caps, and epigraph intercepts are
/// multiplied by the scale expression, so with `pi` a flow variable this is
/// exactly the perspective-scaled arc embedding; with `pi = 1` it is the
/// plain block LP.
pub fn append_block(
    lp: &mut LinearProgram,
    inst: &Instance,
    t: usize,
    j: usize,
    mode: Mode,
    emb: &BlockEmbed,
    tag: &str,
) -> BlockVars {
    assert!(t < j && j <= inst.horizon + 1, "block stages out of range");
    let n = j - t;
    let mut vars = BlockVars::default();

    // Reservoir levels M_t..M_j.
    for i in t..=j {
        vars.m.push(lp.add_var(format!("{tag}_M{i}"), 0.0, f64::INFINITY, 0.0));
    }
    add_row_expr(
        lp,
        format!("{tag}_pinMin"),
        vec![(vars.m[0], 1.0)],
        &[(&emb.m_in, 1.0)],
        Relation::Eq,
    );
    match &emb.m_out {
        Some(m_out) => add_row_expr(
            lp,
            format!("{tag}_pinMout"),
            vec![(vars.m[n], 1.0)],
            &[(m_out, 1.0)],
            Relation::Eq,
        ),
        None => add_row_expr(
            lp,
            format!("{tag}_Mcap{j}"),
            vec![(vars.m[n], 1.0)],
            &[(&emb.pi, inst.capacity)],
            Relation::Le,
        ),
    }
    for k in 1..n {
        add_row_expr(
            lp,
            format!("{tag}_Mcap{}", t + k),
            vec![(vars.m[k], 1.0)],
            &[(&emb.pi, inst.capacity)],
            Relation::Le,
        );
    }

    for i in t..j {
        let a = i - 1; // instance arrays are 0-based
        let k = i - t;
        let turbine = mode.uses_turbine();
        let pump = mode.uses_pump();
        let mut mass = vec![(vars.m[k + 1], 1.0), (vars.m[k], -1.0)];
        if turbine {
            let h = lp.add_var(format!("{tag}_Ho{i}"), 0.0, f64::INFINITY, 0.0);
            vars.h_out.push(h);
            add_row_expr(
                lp,
                format!("{tag}_HoUb{i}"),
                vec![(h, 1.0)],
                &[(&emb.pi, inst.gen_max[a])],
                Relation::Le,
            );
            add_row_expr(
                lp,
                format!("{tag}_HoLb{i}"),
                vec![(h, 1.0)],
                &[(&emb.pi, inst.gen_min[a])],
                Relation::Ge,
            );
            mass.push((h, inst.eff_gen[a]));
            let phi = lp.add_var(format!("{tag}_phiG{i}"), f64::NEG_INFINITY, f64::INFINITY, 1.0);
            vars.phi.push(phi);
            let k_lin = inst.water_value * inst.eff_gen[a] - inst.prices[a];
            for (p, piece) in inst.gen_cost_pieces[a].iter().enumerate() {
                add_row_expr(
                    lp,
                    format!("{tag}_epiG{i}_{p}"),
                    vec![(phi, 1.0), (h, -(piece.slope + k_lin))],
                    &[(&emb.pi, piece.intercept)],
                    Relation::Ge,
                );
            }
        }
        if pump {
            let h = lp.add_var(format!("{tag}_Hi{i}"), 0.0, f64::INFINITY, 0.0);
            vars.h_in.push(h);
            add_row_expr(
                lp,
                format!("{tag}_HiUb{i}"),
                vec![(h, 1.0)],
                &[(&emb.pi, inst.pump_max[a])],
                Relation::Le,
            );
            add_row_expr(
                lp,
                format!("{tag}_HiLb{i}"),
                vec![(h, 1.0)],
                &[(&emb.pi, inst.pump_min[a])],
                Relation::Ge,
            );
            mass.push((h, -inst.eff_pump[a]));
            let phi = lp.add_var(format!("{tag}_phiP{i}"), f64::NEG_INFINITY, f64::INFINITY, 1.0);
            vars.phi.push(phi);
            let k_lin = inst.prices[a] - inst.water_value * inst.eff_pump[a];
            for (p, piece) in inst.pump_cost_pieces[a].iter().enumerate() {
                add_row_expr(
                    lp,
                    format!("{tag}_epiP{i}_{p}"),
                    vec![(phi, 1.0), (h, -(piece.slope + k_lin))],
                    &[(&emb.pi, piece.intercept)],
                    Relation::Ge,
                );
            }
        }
        add_row_expr(
            lp,
            format!("{tag}_mass{i}"),
            mass,
            &[(&emb.pi, inst.inflow[a] - inst.spillage[a])],
            Relation::Eq,
        );
    }

    // Turbine ramping, entry link, and terminal rule.
    if mode.uses_turbine() {
        let v = inst.ramp_limit;
        add_row_expr(
            lp,
            format!("{tag}_rampIn+"),
            vec![(vars.h_out[0], 1.0)],
            &[(&emb.h_bar_in, 1.0), (&emb.pi, v)],
            Relation::Le,
        );
        add_row_expr(
            lp,
            format!("{tag}_rampIn-"),
            vec![(vars.h_out[0], -1.0)],
            &[(&emb.h_bar_in, -1.0), (&emb.pi, v)],
            Relation::Le,
        );
        for k in 1..n {
            let i = t + k;
            add_row_expr(
                lp,
                format!("{tag}_rampv+{i}"),
                vec![(vars.h_out[k], 1.0), (vars.h_out[k - 1], -1.0)],
                &[(&emb.pi, v)],
                Relation::Le,
            );
            add_row_expr(
                lp,
                format!("{tag}_rampv-{i}"),
                vec![(vars.h_out[k - 1], 1.0), (vars.h_out[k], -1.0)],
                &[(&emb.pi, v)],
                Relation::Le,
            );
        }
        match emb.terminal {
            TerminalRule::Pin => add_row_expr(
                lp,
                format!("{tag}_pinHout"),
                vec![(vars.h_out[n - 1], 1.0)],
                &[(&emb.h_bar_out, 1.0)],
                Relation::Eq,
            ),
            TerminalRule::Cap => add_row_expr(
                lp,
                format!("{tag}_capHout"),
                vec![(vars.h_out[n - 1], 1.0)],
                &[(&emb.pi, v)],
                Relation::Le,
            ),
            TerminalRule::Free => {}
        }
    } else if !emb.h_bar_out.is_zero() {
        // Non-turbine blocks reset the ramping boundary.
        add_row_expr(
            lp,
            format!("{tag}_zeroHout"),
            vec![],
            &[(&emb.h_bar_out, 1.0)],
            Relation::Eq,
        );
    }

    vars
}

/// Solves one block with fixed boundaries on the dense backend.
pub fn solve_block(b: &BlockBoundary, inst: &Instance) -> Result<BlockResult, BlockError> {
    debug_assert!(b.t < b.j && b.j <= inst.horizon + 1);
    match b.mode {
        Mode::Gen => solve_turbine_block(b, inst),
        Mode::Sc => {
            if !inst.hsc_enabled {
                return Err(BlockError::ModeDisabled);
            }
            solve_turbine_block(b, inst)
        }
        Mode::Pump => {
            if b.h_bar_end != 0.0 {
                return Err(BlockError::BoundaryContract(
                    "pumping block requires a zero exit ramping boundary".into(),
                ));
            }
            solve_lp_block(b, inst)
        }
        Mode::Off => solve_offline_block(b, inst),
    }
}

pub fn solve_generating_block(b: &BlockBoundary, inst: &Instance) -> Result<BlockResult, BlockError> {
    debug_assert_eq!(b.mode, Mode::Gen);
    solve_block(b, inst)
}

pub fn solve_pumping_block(b: &BlockBoundary, inst: &Instance) -> Result<BlockResult, BlockError> {
    debug_assert_eq!(b.mode, Mode::Pump);
    solve_block(b, inst)
}

pub fn solve_hsc_block(b: &BlockBoundary, inst: &Instance) -> Result<BlockResult, BlockError> {
    debug_assert_eq!(b.mode, Mode::Sc);
    solve_block(b, inst)
}

fn solve_turbine_block(b: &BlockBoundary, inst: &Instance) -> Result<BlockResult, BlockError> {
    if b.terminal == TerminalRule::Cap && b.h_bar_end != 0.0 {
        return Err(BlockError::BoundaryContract(
            "ramp-capped exit requires a zero exit ramping boundary".into(),
        ));
    }
    solve_lp_block(b, inst)
}

fn solve_lp_block(b: &BlockBoundary, inst: &Instance) -> Result<BlockResult, BlockError> {
    let mut lp = LinearProgram::new();
    let emb = BlockEmbed {
        pi: Expr::constant(1.0),
        m_in: Expr::constant(b.m_start),
        h_bar_in: Expr::constant(b.h_bar_start),
        m_out: b.m_end.map(Expr::constant),
        h_bar_out: Expr::constant(b.h_bar_end),
        terminal: b.terminal,
    };
    let vars = append_block(&mut lp, inst, b.t, b.j, b.mode, &emb, "b");
    let sol = solve_lp(&lp).expect("block LP solve failed");
    match sol.status {
        LpStatus::Optimal => {
            let n = b.j - b.t;
            let pick = |ids: &Vec<usize>| -> Vec<f64> {
                if ids.is_empty() {
                    vec![0.0; n]
                } else {
                    ids.iter().map(|&v| sol.x[v]).collect()
                }
            };
            let mut stage_costs = vec![0.0; n];
            // One epigraph variable per active flow per stage, in stage order.
            let flows = (b.mode.uses_turbine() as usize) + (b.mode.uses_pump() as usize);
            for (idx, &v) in vars.phi.iter().enumerate() {
                stage_costs[idx / flows.max(1)] += sol.x[v];
            }
            Ok(BlockResult::Feasible {
                cost: sol.objective,
                traj: BlockTrajectory {
                    h_out: pick(&vars.h_out),
                    h_in: pick(&vars.h_in),
                    levels: vars.m.iter().map(|&v| sol.x[v]).collect(),
                    stage_costs,
                },
            })
        }
        _ => Ok(BlockResult::Infeasible),
    }
}

fn solve_offline_block(b: &BlockBoundary, inst: &Instance) -> Result<BlockResult, BlockError> {
    if b.h_bar_end != 0.0 {
        return Err(BlockError::BoundaryContract(
            "offline block requires a zero exit ramping boundary".into(),
        ));
    }
    let tol = crate::tol::FEAS_TOL;
    let n = b.j - b.t;
    let mut levels = Vec::with_capacity(n + 1);
    let mut level = b.m_start;
    levels.push(level);
    for i in b.t..b.j {
        level += inst.inflow[i - 1] - inst.spillage[i - 1];
        if level < -tol || level > inst.capacity + tol {
            return Ok(BlockResult::Infeasible);
        }
        levels.push(level);
    }
    if let Some(m_end) = b.m_end {
        if (level - m_end).abs() > tol {
            return Ok(BlockResult::Infeasible);
        }
    }
    Ok(BlockResult::Feasible {
        cost: 0.0,
        traj: BlockTrajectory {
            h_out: vec![0.0; n],
            h_in: vec![0.0; n],
            levels,
            stage_costs: vec![0.0; n],
        },
    })
}
