//! Branch-and-bound over event skeletons.
//!
//! Continuous mode branches on the discrete event decisions (switch stage,
//! successor mode) only; reservoir levels and ramping boundaries at the
//! switches stay continuous. A node's lower bound comes from one LP: the
//! partial skeleton as a chain of arcs with flow fixed at one, the remaining
//! stages as a reduced-state flow relaxation with per-node boundary variables
//! and McCormick envelopes on the flow-boundary products. Fixing a flow at
//! one collapses its envelopes to exact products, so a complete skeleton's
//! "relaxation" is exactly the concatenated block LP with free interior
//! boundaries — the leaf evaluation.
//!
//! Grid mode restricts boundaries to the instance grids and searches the
//! finite event network best-first with an optimistic stagewise bound,
//! deduplicating states by best accumulated cost.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use thiserror::Error;

use crate::blocks::{
    append_block, solve_block, BlockBoundary, BlockEmbed, BlockResult, BlockVars, Expr,
    TerminalRule,
};
use crate::instance::{GridSpec, Instance, Mode};
use crate::lp::{solve_with, Backend, LinearProgram, LpError, LpStatus, Relation};
use crate::network::{build_grid_network, precompute_arc_costs, solve_dp};
use crate::schedule::{assemble, Schedule};
use crate::tol::PRUNE_TOL;

/// Branching state: the continuous components are not part of the node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReducedState {
    pub t: usize,
    pub mode: Mode,
    pub tau: usize,
}

/// One discrete event decision from a reduced state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedAction {
    pub j: usize,
    pub succ: Option<Mode>,
    pub terminal: TerminalRule,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonStep {
    pub from: ReducedState,
    pub action: ReducedAction,
}

/// Enumerates admissible `(j, successor)` decisions, ordered by switch stage,
/// then successor mode G < P < SC < O, with the end-of-horizon action last.
pub fn enumerate_reduced(s: &ReducedState, inst: &Instance) -> Vec<ReducedAction> {
    let t_n = inst.horizon;
    let online: Vec<Mode> = inst.modes().iter().copied().filter(|m| m.is_online()).collect();
    let mut out = Vec::new();
    if s.mode == Mode::Off {
        if s.t == 1 && s.tau == 0 {
            for &x in &online {
                out.push(ReducedAction {
                    j: 1,
                    succ: Some(x),
                    terminal: TerminalRule::Free,
                    gamma: inst.startup[0],
                });
            }
        }
        for j in (s.t + s.tau + 1)..=t_n {
            for &x in &online {
                out.push(ReducedAction {
                    j,
                    succ: Some(x),
                    terminal: TerminalRule::Free,
                    gamma: inst.startup[j - 1],
                });
            }
        }
        out.push(ReducedAction {
            j: t_n + 1,
            succ: None,
            terminal: TerminalRule::Free,
            gamma: 0.0,
        });
        return out;
    }
    let j_hi = (s.t + inst.j_max.max(1)).min(t_n + 1);
    for j in (s.t + 1)..=j_hi {
        if j <= t_n {
            for &succ in &[Mode::Gen, Mode::Pump, Mode::Sc, Mode::Off] {
                if succ == s.mode || (succ != Mode::Off && !online.contains(&succ)) {
                    continue;
                }
                if succ == Mode::Off && j < s.t + s.tau + 1 {
                    continue;
                }
                let keep_turbine = s.mode.uses_turbine() && succ.uses_turbine();
                let terminal = if keep_turbine {
                    TerminalRule::Pin
                } else if s.mode.uses_turbine() {
                    if inst.strict_terminal {
                        TerminalRule::Pin
                    } else {
                        TerminalRule::Cap
                    }
                } else {
                    TerminalRule::Free
                };
                let gamma = if succ == Mode::Off { inst.shutdown[j - 1] } else { 0.0 };
                out.push(ReducedAction { j, succ: Some(succ), terminal, gamma });
            }
        } else {
            let terminal = if s.mode.uses_turbine() && inst.terminal_ramp_zero {
                if inst.strict_terminal {
                    TerminalRule::Pin
                } else {
                    TerminalRule::Cap
                }
            } else {
                TerminalRule::Free
            };
            out.push(ReducedAction { j, succ: None, terminal, gamma: 0.0 });
        }
    }
    out
}

/// Successor reduced state, or `None` past the horizon.
pub fn transition_reduced(
    s: &ReducedState,
    a: &ReducedAction,
    inst: &Instance,
) -> Option<ReducedState> {
    let succ = a.succ?;
    let tau = match (s.mode.is_online(), succ.is_online()) {
        (false, true) => inst.min_up - 1,
        (true, false) => inst.min_down - 1,
        _ => s.tau.saturating_sub(a.j - s.t),
    };
    Some(ReducedState { t: a.j, mode: succ, tau })
}

#[derive(Debug, Error)]
pub enum BnbError {
    #[error("no feasible event schedule exists")]
    Infeasible,
    #[error("wall-clock budget exceeded after {expanded} nodes")]
    Budget { expanded: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
}

#[derive(Debug, Clone, Default)]
pub struct BnbStats {
    pub expanded: usize,
    pub pruned: usize,
    pub lps_solved: usize,
    pub wall_seconds: f64,
    /// Explored-node trace: skeleton and the LB computed for it. Populated
    /// only when `BnbConfig::collect_explored` is set.
    pub explored: Vec<(Vec<SkeletonStep>, f64)>,
}

#[derive(Debug, Clone)]
pub struct BnbSolution {
    pub objective: f64,
    pub schedule: Schedule,
    pub stats: BnbStats,
}

#[derive(Debug, Clone)]
pub struct BnbConfig {
    pub backend: Backend,
    /// Restrict boundary values to the instance grids (finite search).
    pub grid: Option<GridSpec>,
    /// Seed the incumbent with a coarse-grid DP schedule before searching.
    pub seed_incumbent: bool,
    /// Record every explored node with its lower bound.
    pub collect_explored: bool,
    /// Node-trace CSV target.
    pub log: Option<std::path::PathBuf>,
    /// Wall-clock budget in seconds; exceeding it aborts with
    /// [`BnbError::Budget`].
    pub time_budget: f64,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            backend: Backend::default(),
            grid: None,
            seed_incumbent: false,
            collect_explored: false,
            log: None,
            time_budget: f64::INFINITY,
        }
    }
}

// ---------------------------------------------------------------------------
// Node relaxation / leaf LP
// ---------------------------------------------------------------------------

/// The flow relaxations are heavily degenerate; the dense simplex can stall
/// on them, so `Auto` routes them straight to the external solver.
fn solve_relaxation_lp(
    lp: &LinearProgram,
    backend: Backend,
) -> Result<crate::lp::LpSolution, LpError> {
    let backend = if backend == Backend::Auto { Backend::External } else { backend };
    solve_with(lp, backend)
}

struct ArcLp {
    from: ReducedState,
    action: ReducedAction,
    to: Option<ReducedState>,
    pi: usize,
    m_in: usize,
    h_in: usize,
    m_out: usize,
    h_out: usize,
    block: Option<BlockVars>,
}

struct Relaxation {
    lp: LinearProgram,
    arcs: Vec<ArcLp>,
}

/// Offline states inside the relaxation graph carry "stages that must still
/// be spent offline before a start", one more than the branching counter
/// (which counts stages beyond the current one). The initial state with a
/// fully served counter is the one offline state that may start immediately.
fn relax_state(s: ReducedState) -> ReducedState {
    if s.mode == Mode::Off && !(s.t == 1 && s.tau == 0) {
        ReducedState { tau: s.tau + 1, ..s }
    } else {
        s
    }
}

/// Fan-out arcs in the compact offline representation: offline time advances
/// one wait arc per stage and starts are zero-length, so the graph stays
/// linear in the horizon.
fn relax_actions(s: &ReducedState, inst: &Instance) -> Vec<ReducedAction> {
    if s.mode != Mode::Off {
        return enumerate_reduced(s, inst);
    }
    let t_n = inst.horizon;
    let mut out = Vec::new();
    if s.tau == 0 && s.t <= t_n {
        for &x in inst.modes().iter().filter(|m| m.is_online()) {
            out.push(ReducedAction {
                j: s.t,
                succ: Some(x),
                terminal: TerminalRule::Free,
                gamma: inst.startup[s.t - 1],
            });
        }
    }
    if s.t < t_n {
        out.push(ReducedAction {
            j: s.t + 1,
            succ: Some(Mode::Off),
            terminal: TerminalRule::Free,
            gamma: 0.0,
        });
    } else {
        out.push(ReducedAction {
            j: t_n + 1,
            succ: None,
            terminal: TerminalRule::Free,
            gamma: 0.0,
        });
    }
    out
}

/// Graph successor under the relaxation's offline convention.
fn relax_succ(s: &ReducedState, a: &ReducedAction, inst: &Instance) -> Option<ReducedState> {
    if s.mode == Mode::Off && a.succ == Some(Mode::Off) {
        return Some(ReducedState { t: a.j, mode: Mode::Off, tau: s.tau.saturating_sub(1) });
    }
    transition_reduced(s, a, inst).map(relax_state)
}

/// Builds the bounding LP: the skeleton as a unit-flow chain plus the full
/// reduced-state fan-out from the frontier. Boundary values live on reduced
/// nodes; arc-level products are lifted under McCormick envelopes tied to the
/// arc flow.
fn build_relaxation(
    inst: &Instance,
    skeleton: &[SkeletonStep],
    frontier: Option<ReducedState>,
    root_m: f64,
    root_h: f64,
) -> Relaxation {
    let mut lp = LinearProgram::new();
    let m_cap = inst.capacity;
    let h_cap = inst.gen_output_cap();

    // Node boundary variables, keyed by reduced state; the sink is separate.
    let mut node_m: HashMap<ReducedState, usize> = HashMap::new();
    let mut node_h: HashMap<ReducedState, usize> = HashMap::new();
    let ensure_node = |lp: &mut LinearProgram,
                           node_m: &mut HashMap<ReducedState, usize>,
                           node_h: &mut HashMap<ReducedState, usize>,
                           s: ReducedState| {
        node_m.entry(s).or_insert_with(|| {
            lp.add_var(format!("M_{}_{}_{}", s.t, s.mode.as_str(), s.tau), 0.0, m_cap, 0.0)
        });
        node_h.entry(s).or_insert_with(|| {
            let hi = if s.mode.uses_turbine() { h_cap } else { 0.0 };
            lp.add_var(format!("Hb_{}_{}_{}", s.t, s.mode.as_str(), s.tau), 0.0, hi, 0.0)
        });
    };

    let root =
        relax_state(skeleton.first().map(|s| s.from).or(frontier).expect("root state"));
    ensure_node(&mut lp, &mut node_m, &mut node_h, root);
    lp.variables[node_m[&root]].lower = root_m;
    lp.variables[node_m[&root]].upper = root_m;
    lp.variables[node_h[&root]].lower = root_h;
    lp.variables[node_h[&root]].upper = root_h;
    let sink_m = match inst.terminal_level {
        Some(term) => lp.add_var("M_sink", term, term, 0.0),
        None => lp.add_var("M_sink", 0.0, m_cap, 0.0),
    };

    // Collect arcs: the committed chain (in the branching convention), then
    // breadth-first fan-out (in the relaxation convention).
    let mut arcs: Vec<SkeletonStep> = skeleton.to_vec();
    if let Some(f) = frontier {
        let f = relax_state(f);
        let mut queue = vec![f];
        let mut seen: HashMap<ReducedState, ()> = HashMap::new();
        seen.insert(f, ());
        let mut head = 0;
        while head < queue.len() {
            let s = queue[head];
            head += 1;
            for action in relax_actions(&s, inst) {
                if let Some(succ) = relax_succ(&s, &action, inst) {
                    if seen.insert(succ, ()).is_none() {
                        queue.push(succ);
                    }
                }
                arcs.push(SkeletonStep { from: s, action });
            }
        }
    }
    let n_chain = skeleton.len();

    let mut built: Vec<ArcLp> = Vec::with_capacity(arcs.len());
    for (idx, step) in arcs.iter().enumerate() {
        let chain = idx < n_chain;
        let s = if chain { relax_state(step.from) } else { step.from };
        let a = step.action;
        ensure_node(&mut lp, &mut node_m, &mut node_h, s);
        let succ = relax_succ(&step.from, &a, inst);
        if let Some(succ) = succ {
            ensure_node(&mut lp, &mut node_m, &mut node_h, succ);
        }
        let (lo, hi) = if chain { (1.0, 1.0) } else { (0.0, 1.0) };
        let pi = lp.add_var(format!("pi{idx}"), lo, hi, a.gamma);
        let m_in = lp.add_var(format!("mi{idx}"), 0.0, f64::INFINITY, 0.0);
        let h_in = lp.add_var(format!("hi{idx}"), 0.0, f64::INFINITY, 0.0);
        let m_out = lp.add_var(format!("mo{idx}"), 0.0, f64::INFINITY, 0.0);
        let h_out = lp.add_var(format!("ho{idx}"), 0.0, f64::INFINITY, 0.0);
        let (m_to, h_to) = match succ {
            Some(sd) => (node_m[&sd], Some(node_h[&sd])),
            None => (sink_m, None),
        };
        // McCormick envelopes for lifted = pi * node value.
        let envelope = |lp: &mut LinearProgram, lift: usize, node: usize, cap: f64, tag: &str| {
            lp.add_row(
                format!("{tag}{idx}_ub"),
                vec![(lift, 1.0), (pi, -cap)],
                Relation::Le,
                0.0,
            );
            lp.add_row(format!("{tag}{idx}_nd"), vec![(lift, 1.0), (node, -1.0)], Relation::Le, 0.0);
            lp.add_row(
                format!("{tag}{idx}_lb"),
                vec![(lift, 1.0), (node, -1.0), (pi, -cap)],
                Relation::Ge,
                -cap,
            );
        };
        envelope(&mut lp, m_in, node_m[&s], m_cap, "mcM");
        envelope(&mut lp, m_out, m_to, m_cap, "mcMo");
        // Ramp lifts only matter where the boundary can be nonzero: entry
        // ramp when leaving a turbine node, exit ramp on pinned handovers
        // into a turbine node; everything else is zero by convention and the
        // conservation rows propagate that.
        if lp.variables[node_h[&s]].upper > 0.0 {
            envelope(&mut lp, h_in, node_h[&s], h_cap, "mcH");
        } else {
            lp.variables[h_in].upper = 0.0;
        }
        match h_to {
            Some(h) if a.terminal == TerminalRule::Pin && lp.variables[h].upper > 0.0 => {
                envelope(&mut lp, h_out, h, h_cap, "mcHo");
            }
            _ => {
                lp.variables[h_out].upper = 0.0;
            }
        }

        let block = if s.mode.is_online() && a.j > s.t {
            let emb = BlockEmbed {
                pi: Expr::var(pi),
                m_in: Expr::var(m_in),
                h_bar_in: Expr::var(h_in),
                m_out: Some(Expr::var(m_out)),
                h_bar_out: Expr::var(h_out),
                terminal: a.terminal,
            };
            Some(append_block(&mut lp, inst, s.t, a.j, s.mode, &emb, &format!("k{idx}")))
        } else {
            // Offline (or zero-length) arc: the level drifts, bounded stagewise.
            let full = inst.drift(s.t - 1, a.j - 1);
            lp.add_row(
                format!("off{idx}_bal"),
                vec![(m_out, 1.0), (m_in, -1.0), (pi, -full)],
                Relation::Eq,
                0.0,
            );
            let mut part = 0.0;
            for i in s.t..a.j {
                part += inst.inflow[i - 1] - inst.spillage[i - 1];
                if part != 0.0 {
                    lp.add_row(
                        format!("off{idx}_lo{i}"),
                        vec![(m_in, 1.0), (pi, part)],
                        Relation::Ge,
                        0.0,
                    );
                    lp.add_row(
                        format!("off{idx}_hi{i}"),
                        vec![(m_in, 1.0), (pi, part - m_cap)],
                        Relation::Le,
                        0.0,
                    );
                }
            }
            None
        };
        built.push(ArcLp {
            from: s,
            action: a,
            to: succ,
            pi,
            m_in,
            h_in,
            m_out,
            h_out,
            block,
        });
    }

    // Flow and lifted-value conservation at every non-root reduced node.
    let mut outs: HashMap<ReducedState, Vec<usize>> = HashMap::new();
    let mut ins: HashMap<Option<ReducedState>, Vec<usize>> = HashMap::new();
    for (i, arc) in built.iter().enumerate() {
        outs.entry(arc.from).or_default().push(i);
        ins.entry(arc.to).or_default().push(i);
    }
    let empty = Vec::new();
    // Fixed node order: hash-map iteration would shuffle LP rows between
    // otherwise identical builds, and a degenerate LP can answer with a
    // different optimal vertex for each row order.
    let mut nodes: Vec<ReducedState> = outs.keys().copied().collect();
    nodes.sort_by_key(|s| (s.t, s.mode as usize, s.tau));
    for &s in &nodes {
        let out_arcs = &outs[&s];
        let in_arcs = if s == root { &empty } else { ins.get(&Some(s)).unwrap_or(&empty) };
        if s == root {
            lp.add_row(
                "flow_root".to_string(),
                out_arcs.iter().map(|&i| (built[i].pi, 1.0)).collect(),
                Relation::Eq,
                1.0,
            );
            lp.add_row(
                "pin_root_m".to_string(),
                out_arcs.iter().map(|&i| (built[i].m_in, 1.0)).collect(),
                Relation::Eq,
                root_m,
            );
            lp.add_row(
                "pin_root_h".to_string(),
                out_arcs.iter().map(|&i| (built[i].h_in, 1.0)).collect(),
                Relation::Eq,
                root_h,
            );
            continue;
        }
        for (tag, pick) in [
            ("flow", 0usize),
            ("liftm", 1usize),
            ("lifth", 2usize),
        ] {
            if pick == 2 && lp.variables[node_h[&s]].upper == 0.0 {
                // Every ramp lift touching this node is fixed at zero.
                continue;
            }
            let var = |i: usize, side: bool| -> usize {
                let a = &built[i];
                match (pick, side) {
                    (0, _) => a.pi,
                    (1, true) => a.m_in,
                    (1, false) => a.m_out,
                    (2, true) => a.h_in,
                    (2, false) => a.h_out,
                    _ => unreachable!(),
                }
            };
            let mut coeffs: Vec<(usize, f64)> =
                out_arcs.iter().map(|&i| (var(i, true), 1.0)).collect();
            coeffs.extend(in_arcs.iter().map(|&i| (var(i, false), -1.0)));
            lp.add_row(format!("{tag}_{}_{}_{}", s.t, s.mode.as_str(), s.tau), coeffs, Relation::Eq, 0.0);
        }
    }
    // Terminal coupling: the flow-weighted exit levels sum to the sink level.
    if let Some(sink_in) = ins.get(&None) {
        let mut coeffs: Vec<(usize, f64)> =
            sink_in.iter().map(|&i| (built[i].m_out, 1.0)).collect();
        coeffs.push((sink_m, -1.0));
        lp.add_row("sink_m".to_string(), coeffs, Relation::Eq, 0.0);
    }

    Relaxation { lp, arcs: built }
}

/// Reads a schedule off an integral relaxation solution: arcs carrying flow
/// define the modes, their block variables the dispatch.
fn extract_schedule(inst: &Instance, relax: &Relaxation, x: &[f64]) -> Schedule {
    let t_n = inst.horizon;
    let mut modes = vec![Mode::Off; t_n];
    let mut h_out = vec![0.0; t_n];
    let mut h_in = vec![0.0; t_n];
    for arc in &relax.arcs {
        if x[arc.pi] < 0.5 {
            continue;
        }
        let Some(block) = &arc.block else { continue };
        for (k, i) in (arc.from.t..arc.action.j).enumerate() {
            modes[i - 1] = arc.from.mode;
            if !block.h_out.is_empty() {
                h_out[i - 1] = x[block.h_out[k]];
            }
            if !block.h_in.is_empty() {
                h_in[i - 1] = x[block.h_in[k]];
            }
        }
    }
    assemble(inst, &modes, &h_out, &h_in)
}

/// Finds the fan-out arcs that carry a branching decision from `frontier`.
/// Online decisions map to a single arc. Offline decisions map onto the
/// compact representation: the wait arcs up to the decision stage plus the
/// zero-length start arc (or the final offline arc into the sink). Forcing
/// the whole wait chain excludes online detours that would otherwise re-enter
/// it, so the restriction matches the child exactly.
fn find_branch_pi(
    relax: &Relaxation,
    frontier: &ReducedState,
    a: &ReducedAction,
) -> Option<Vec<usize>> {
    let find = |probe: &dyn Fn(&ArcLp) -> bool| -> Option<usize> {
        relax.arcs.iter().find(|arc| probe(arc)).map(|arc| arc.pi)
    };
    let f = relax_state(*frontier);
    if frontier.mode != Mode::Off {
        return find(&|arc: &ArcLp| {
            arc.from == f && arc.action.j == a.j && arc.action.succ == a.succ
        })
        .map(|pi| vec![pi]);
    }
    let last_stage = if a.succ.is_some() { a.j } else { a.j - 1 };
    let mut pis = Vec::new();
    for t in f.t..last_stage {
        let w = f.tau.saturating_sub(t - f.t);
        let node = ReducedState { t, mode: Mode::Off, tau: w };
        pis.push(find(&|arc: &ArcLp| {
            arc.from == node && arc.action.succ == Some(Mode::Off) && arc.action.j == t + 1
        })?);
    }
    let final_probe: Box<dyn Fn(&ArcLp) -> bool> = if a.succ.is_some() {
        Box::new(|arc: &ArcLp| {
            arc.from.mode == Mode::Off
                && arc.from.t == a.j
                && arc.action.j == a.j
                && arc.action.succ == a.succ
        })
    } else {
        Box::new(|arc: &ArcLp| {
            arc.from.mode == Mode::Off && arc.action.succ.is_none() && arc.action.j == a.j
        })
    };
    pis.push(find(&*final_probe)?);
    Some(pis)
}

/// Exact cost and schedule of a complete skeleton: one LP over all its blocks
/// with the interior boundary values free. `None` if the skeleton admits no
/// feasible continuous decisions.
pub fn evaluate_leaf(
    inst: &Instance,
    skeleton: &[SkeletonStep],
    backend: Backend,
) -> Result<Option<(f64, Schedule)>, LpError> {
    debug_assert!(skeleton.last().is_some_and(|s| s.action.j == inst.horizon + 1));
    let relax = build_relaxation(inst, skeleton, None, inst.initial_level, 0.0);
    let sol = solve_relaxation_lp(&relax.lp, backend)?;
    if sol.status != LpStatus::Optimal {
        return Ok(None);
    }
    Ok(Some((sol.objective, extract_schedule(inst, &relax, &sol.x))))
}

/// Lower bound for a partial skeleton: exact chain + McCormick-relaxed
/// completion. `f64::INFINITY` when the relaxation is infeasible.
pub fn relax_lower_bound(
    inst: &Instance,
    skeleton: &[SkeletonStep],
    frontier: Option<ReducedState>,
    backend: Backend,
) -> Result<f64, LpError> {
    let relax = build_relaxation(inst, skeleton, frontier, inst.initial_level, 0.0);
    let sol = solve_relaxation_lp(&relax.lp, backend)?;
    Ok(match sol.status {
        LpStatus::Optimal => sol.objective,
        _ => f64::INFINITY,
    })
}

// ---------------------------------------------------------------------------
// Greedy completion (upper bound heuristic)
// ---------------------------------------------------------------------------

/// Extends a skeleton to the horizon by repeatedly taking the cheapest
/// feasible single event, committing boundary values as the block LPs choose
/// them. Returns the completed skeleton; `None` on a dead end.
pub fn greedy_completion(
    inst: &Instance,
    skeleton: &[SkeletonStep],
    frontier: Option<ReducedState>,
) -> Option<Vec<SkeletonStep>> {
    let mut chain = skeleton.to_vec();
    let mut m = inst.initial_level;
    let mut h = 0.0;
    // Commit the existing chain greedily to get frontier boundary values.
    for step in &chain {
        (m, h) = commit_step(inst, step, m, h)?;
    }
    let mut at = frontier;
    while let Some(s) = at {
        let mut best: Option<(f64, SkeletonStep, f64, f64)> = None;
        for action in enumerate_reduced(&s, inst) {
            let step = SkeletonStep { from: s, action };
            let Some((cost, nm, nh)) = step_cost(inst, &step, m, h) else { continue };
            let total = cost + action.gamma;
            if best.as_ref().map_or(true, |(bc, ..)| total < *bc - 1e-12) {
                best = Some((total, step, nm, nh));
            }
        }
        let (_, step, nm, nh) = best?;
        at = transition_reduced(&s, &step.action, inst);
        chain.push(step);
        m = nm;
        h = nh;
    }
    Some(chain)
}

fn step_cost(
    inst: &Instance,
    step: &SkeletonStep,
    m: f64,
    h: f64,
) -> Option<(f64, f64, f64)> {
    let s = step.from;
    let a = step.action;
    if a.j == s.t {
        return Some((0.0, m, 0.0));
    }
    let to_sink = a.succ.is_none();
    let m_end = if to_sink { inst.terminal_level } else { None };
    // Greedy keeps exit boundaries free; a pinned exit only reappears in the
    // exact leaf LP.
    let terminal = match a.terminal {
        TerminalRule::Pin if !inst.strict_terminal => TerminalRule::Free,
        other => other,
    };
    let b = BlockBoundary {
        t: s.t,
        j: a.j,
        mode: s.mode,
        m_start: m,
        h_bar_start: h,
        m_end,
        h_bar_end: 0.0,
        terminal,
    };
    match solve_block(&b, inst).ok()? {
        BlockResult::Feasible { cost, traj } => {
            let nm = *traj.levels.last().unwrap();
            let nh = if s.mode.uses_turbine() { *traj.h_out.last().unwrap() } else { 0.0 };
            Some((cost, nm, nh))
        }
        BlockResult::Infeasible => None,
    }
}

fn commit_step(inst: &Instance, step: &SkeletonStep, m: f64, h: f64) -> Option<(f64, f64)> {
    step_cost(inst, step, m, h).map(|(_, nm, nh)| (nm, nh))
}

// ---------------------------------------------------------------------------
// Best-first search (continuous mode)
// ---------------------------------------------------------------------------

struct OpenNode {
    bound: f64,
    depth: usize,
    seq: u64,
    skeleton: Vec<SkeletonStep>,
    frontier: Option<ReducedState>,
}

enum ChildEval {
    Open(f64),
    Leaf(f64, Schedule),
    Dead,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for OpenNode {}
impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenNode {
    // BinaryHeap is a max-heap; invert so the lowest (bound, depth, seq) pops.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.depth.cmp(&self.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Root node: stage 1, offline, initial counter.
pub fn make_root(inst: &Instance) -> ReducedState {
    ReducedState { t: 1, mode: Mode::Off, tau: inst.initial_tau }
}

/// Children of an open node, in deterministic branching order.
pub fn branch(
    skeleton: &[SkeletonStep],
    frontier: &ReducedState,
    inst: &Instance,
) -> Vec<(Vec<SkeletonStep>, Option<ReducedState>)> {
    enumerate_reduced(frontier, inst)
        .into_iter()
        .map(|action| {
            let mut child = skeleton.to_vec();
            let step = SkeletonStep { from: *frontier, action };
            child.push(step);
            (child, transition_reduced(frontier, &action, inst))
        })
        .collect()
}

fn skeleton_label(skeleton: &[SkeletonStep]) -> String {
    let mut s = String::new();
    for step in skeleton {
        let succ = step.action.succ.map_or("end", |m| m.as_str());
        s.push_str(&format!("{}:{}>{}@{};", step.from.t, step.from.mode.as_str(), succ, step.action.j));
    }
    s
}

/// Exact continuous-state (or grid-restricted) solve.
pub fn solve_bnb(inst: &Instance, cfg: &BnbConfig) -> Result<BnbSolution, BnbError> {
    if let Some(grid) = &cfg.grid {
        return solve_bnb_grid(inst, grid, cfg);
    }
    let start = Instant::now();
    let mut stats = BnbStats::default();
    let mut log: Vec<String> =
        vec!["node,depth,bound,incumbent,kind,skeleton".to_string()];

    let mut incumbent: Option<(f64, Schedule)> = None;
    if cfg.seed_incumbent {
        // Seed from the finest grid policy that stays cheap to price out.
        for k in [10usize, 5, 2, 1] {
            let Ok(grid) = crate::instance::build_grid(inst, k) else { continue };
            let net = build_grid_network(inst, &grid);
            if net.blocks.len() > 60_000 && k > 1 {
                continue;
            }
            let costs = precompute_arc_costs(&net, inst);
            if let Ok(dp) = solve_dp(&net, &costs, inst) {
                incumbent = Some((dp.objective, dp.schedule));
            }
            break;
        }
    }

    let root = make_root(inst);
    let mut heap: BinaryHeap<OpenNode> = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(OpenNode {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq,
        skeleton: Vec::new(),
        frontier: Some(root),
    });

    while let Some(node) = heap.pop() {
        if start.elapsed().as_secs_f64() > cfg.time_budget {
            return Err(BnbError::Budget { expanded: stats.expanded });
        }
        let ub = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        if node.bound >= ub - PRUNE_TOL {
            stats.pruned += 1;
            continue;
        }
        let frontier = node.frontier.expect("complete skeletons resolve at push time");
        stats.expanded += 1;
        // Heuristic completion near the root keeps the incumbent honest
        // before leaves start arriving.
        if node.depth <= 2 {
            if let Some(full) = greedy_completion(inst, &node.skeleton, Some(frontier)) {
                if let Some((cost, schedule)) = evaluate_leaf(inst, &full, cfg.backend)? {
                    stats.lps_solved += 1;
                    let ub_now = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
                    if cost < ub_now - PRUNE_TOL {
                        incumbent = Some((cost, schedule));
                    }
                }
            }
        }
        // Evaluate every child on one copy of the parent relaxation: forcing
        // a child's first arc to full flow is exactly the child's relaxation,
        // and the warm basis makes the re-solves cheap.
        let relax =
            build_relaxation(inst, &node.skeleton, Some(frontier), inst.initial_level, 0.0);
        let mut resolver = crate::lp::highs::ReSolver::new(&relax.lp)?;
        let children = branch(&node.skeleton, &frontier, inst);
        let evals: Vec<Result<ChildEval, LpError>> = children
            .iter()
            .map(|(skeleton, child_frontier)| {
                let action = skeleton.last().expect("child has a new step").action;
                let sol = match find_branch_pi(&relax, &frontier, &action) {
                    Some(pis) => {
                        let changes: Vec<(usize, f64, f64)> =
                            pis.into_iter().map(|pi| (pi, 1.0, 1.0)).collect();
                        resolver.solve_with_bounds(&relax.lp, &changes)?
                    }
                    // No matching arc should exist, but a rebuild stays correct.
                    None => {
                        let r = build_relaxation(
                            inst,
                            skeleton,
                            *child_frontier,
                            inst.initial_level,
                            0.0,
                        );
                        let s = solve_relaxation_lp(&r.lp, cfg.backend)?;
                        return Ok(match (child_frontier, s.status) {
                            (_, LpStatus::Infeasible) => ChildEval::Dead,
                            (None, _) => {
                                ChildEval::Leaf(s.objective, extract_schedule(inst, &r, &s.x))
                            }
                            (Some(_), _) => ChildEval::Open(s.objective),
                        });
                    }
                };
                Ok(match (child_frontier, sol.status) {
                    (_, LpStatus::Infeasible) => ChildEval::Dead,
                    (None, _) => {
                        // Forcing the final arc makes the whole path integral,
                        // so the LP value is the exact skeleton cost.
                        ChildEval::Leaf(sol.objective, extract_schedule(inst, &relax, &sol.x))
                    }
                    (Some(_), _) => ChildEval::Open(sol.objective),
                })
            })
            .collect();
        for ((skeleton, frontier), eval) in children.into_iter().zip(evals) {
            stats.lps_solved += 1;
            let ub_now = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
            match eval? {
                ChildEval::Leaf(cost, schedule) => {
                    if cfg.collect_explored {
                        stats.explored.push((skeleton.clone(), cost));
                    }
                    if cfg.log.is_some() {
                        log.push(format!(
                            "{},{},{cost},{ub_now},leaf,{}",
                            stats.lps_solved,
                            node.depth + 1,
                            skeleton_label(&skeleton)
                        ));
                    }
                    if cost < ub_now - PRUNE_TOL {
                        incumbent = Some((cost, schedule));
                    }
                }
                ChildEval::Dead => {
                    stats.pruned += 1;
                }
                ChildEval::Open(lb) => {
                    if cfg.collect_explored {
                        stats.explored.push((skeleton.clone(), lb));
                    }
                    if cfg.log.is_some() {
                        log.push(format!(
                            "{},{},{lb},{ub_now},open,{}",
                            stats.lps_solved,
                            node.depth + 1,
                            skeleton_label(&skeleton)
                        ));
                    }
                    if lb >= ub_now - PRUNE_TOL {
                        stats.pruned += 1;
                        continue;
                    }
                    seq += 1;
                    heap.push(OpenNode {
                        bound: lb,
                        depth: node.depth + 1,
                        seq,
                        skeleton,
                        frontier,
                    });
                }
            }
        }
    }

    stats.wall_seconds = start.elapsed().as_secs_f64();
    if let Some(path) = &cfg.log {
        let _ = std::fs::write(path, log.join("\n") + "\n");
    }
    match incumbent {
        Some((objective, schedule)) => Ok(BnbSolution { objective, schedule, stats }),
        None => Err(BnbError::Infeasible),
    }
}

// ---------------------------------------------------------------------------
// Grid-restricted search
// ---------------------------------------------------------------------------

/// Optimistic per-stage profit suffix sums: a valid lower bound on any
/// completion cost from stage `t`, ignoring storage coupling and switching
/// charges.
fn stage_bound_suffix(inst: &Instance) -> Vec<f64> {
    let t_n = inst.horizon;
    let mut per = vec![0.0; t_n];
    for i in 0..t_n {
        let gen = {
            let k = inst.water_value * inst.eff_gen[i] - inst.prices[i];
            inst.gen_cost_pieces[i]
                .iter()
                .map(|p| {
                    let slope = p.slope + k;
                    let at = if slope >= 0.0 { inst.gen_min[i] } else { inst.gen_max[i] };
                    slope * at + p.intercept
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let pump = {
            let k = inst.prices[i] - inst.water_value * inst.eff_pump[i];
            inst.pump_cost_pieces[i]
                .iter()
                .map(|p| {
                    let slope = p.slope + k;
                    let at = if slope >= 0.0 { inst.pump_min[i] } else { inst.pump_max[i] };
                    slope * at + p.intercept
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let mut best = 0.0f64.min(gen).min(pump);
        if inst.hsc_enabled {
            best = best.min(gen + pump);
        }
        per[i] = best;
    }
    let mut suffix = vec![0.0; t_n + 2];
    for i in (0..t_n).rev() {
        suffix[i + 1] = suffix[i + 2] + per[i];
    }
    suffix
}

fn solve_bnb_grid(
    inst: &Instance,
    grid: &GridSpec,
    cfg: &BnbConfig,
) -> Result<BnbSolution, BnbError> {
    let start = Instant::now();
    let mut stats = BnbStats::default();
    let net = build_grid_network(inst, grid);
    let costs = precompute_arc_costs(&net, inst);
    stats.lps_solved += net.blocks.len();
    let suffix = stage_bound_suffix(inst);

    #[derive(PartialEq)]
    struct GridNode {
        bound: f64,
        g: f64,
        at: usize,
        depth: usize,
        seq: u64,
        path: Vec<(usize, usize)>,
    }
    impl Eq for GridNode {}
    impl PartialOrd for GridNode {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for GridNode {
        fn cmp(&self, other: &Self) -> Ordering {
            other
                .bound
                .total_cmp(&self.bound)
                .then(other.depth.cmp(&self.depth))
                .then(other.seq.cmp(&self.seq))
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut best_g: Vec<f64> = vec![f64::INFINITY; net.nodes.len()];
    heap.push(GridNode {
        bound: suffix[1],
        g: 0.0,
        at: net.source,
        depth: 0,
        seq,
        path: Vec::new(),
    });
    best_g[net.source] = 0.0;
    let mut incumbent: Option<(f64, Vec<(usize, usize)>)> = None;

    while let Some(node) = heap.pop() {
        if start.elapsed().as_secs_f64() > cfg.time_budget {
            return Err(BnbError::Budget { expanded: stats.expanded });
        }
        let ub = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        if node.bound >= ub - PRUNE_TOL {
            stats.pruned += 1;
            continue;
        }
        if node.g > best_g[node.at] + PRUNE_TOL {
            stats.pruned += 1;
            continue;
        }
        if node.at == net.sink {
            incumbent = Some((node.g, node.path));
            continue;
        }
        stats.expanded += 1;
        for (ai, arc) in net.nodes[node.at].arcs.iter().enumerate() {
            let c = arc.gamma + arc.block.map_or(0.0, |b| costs[b as usize]);
            if !c.is_finite() {
                continue;
            }
            let g = node.g + c;
            if g >= best_g[arc.to] - PRUNE_TOL {
                continue;
            }
            best_g[arc.to] = g;
            let stage = net.nodes[arc.to].state.t;
            seq += 1;
            let mut path = node.path.clone();
            path.push((node.at, ai));
            heap.push(GridNode {
                bound: g + suffix[stage.min(inst.horizon + 1)],
                g,
                at: arc.to,
                depth: node.depth + 1,
                seq,
                path,
            });
        }
    }

    stats.wall_seconds = start.elapsed().as_secs_f64();
    let Some((objective, path)) = incumbent else {
        return Err(BnbError::Infeasible);
    };
    // Replay the winning path into a schedule.
    let t_n = inst.horizon;
    let mut modes = vec![Mode::Off; t_n];
    let mut h_out = vec![0.0; t_n];
    let mut h_in = vec![0.0; t_n];
    for (at, ai) in &path {
        let arc = &net.nodes[*at].arcs[*ai];
        if let Some(b) = arc.block {
            let b = &net.blocks[b as usize];
            let BlockResult::Feasible { traj, .. } =
                solve_block(b, inst).expect("grid path block contract")
            else {
                unreachable!("finite-cost arc must re-solve feasibly");
            };
            for (k, i) in (b.t..b.j).enumerate() {
                modes[i - 1] = net.nodes[*at].state.mode;
                h_out[i - 1] = traj.h_out[k];
                h_in[i - 1] = traj.h_in[k];
            }
        }
    }
    Ok(BnbSolution { objective, schedule: assemble(inst, &modes, &h_out, &h_in), stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{build_grid, load_instance};
    use crate::schedule::evaluate_schedule_cost;

    fn toy() -> Instance {
        load_instance(
            &serde_json::json!({
                "horizon": 2,
                "prices": [100.0, 200.0],
                "gen_bounds": [40.0, 130.0],
                "pump_bounds": [0.0, 130.0],
                "ramp_limit": 50.0,
                "efficiency_pump": 0.75,
                "reservoir": { "capacity": 900.0, "initial": 450.0 },
                "grids": {
                    "reservoir": [0.0, 100.0, 200.0, 300.0, 400.0, 450.0, 500.0,
                                  600.0, 700.0, 800.0, 900.0],
                    "ramp": [0.0, 40.0, 90.0, 130.0]
                }
            })
            .to_string(),
        )
        .unwrap()
    }

    #[test]
    fn root_state_mirrors_instance() {
        let mut inst = toy();
        assert_eq!(make_root(&inst), ReducedState { t: 1, mode: Mode::Off, tau: 0 });
        inst.initial_tau = 2;
        assert_eq!(make_root(&inst).tau, 2);
    }

    #[test]
    fn toy_bnb_matches_closed_form() {
        let inst = toy();
        let sol = solve_bnb(&inst, &BnbConfig::default()).unwrap();
        assert!((sol.objective + 25000.0).abs() < 1e-6, "{}", sol.objective);
        let audited = evaluate_schedule_cost(&sol.schedule, &inst).unwrap();
        assert!((audited - sol.objective).abs() < 1e-6);
    }

    #[test]
    fn root_relaxation_is_a_valid_bound() {
        let inst = toy();
        let lb = relax_lower_bound(&inst, &[], Some(make_root(&inst)), Backend::Auto).unwrap();
        assert!(lb <= -25000.0 + 1e-7, "root LB {lb} above the optimum");
    }

    #[test]
    fn greedy_completion_toy_is_optimal() {
        let inst = toy();
        let full = greedy_completion(&inst, &[], Some(make_root(&inst))).unwrap();
        let (cost, schedule) = evaluate_leaf(&inst, &full, Backend::Auto).unwrap().unwrap();
        assert!((cost + 25000.0).abs() < 1e-6, "{cost}");
        assert!(evaluate_schedule_cost(&schedule, &inst).is_ok());
    }

    #[test]
    fn zero_price_instance_has_zero_value() {
        // Every schedule is worth exactly zero; the solver must still return
        // a feasible one and report the tie value.
        let mut inst = toy();
        inst.prices = vec![0.0, 0.0];
        let sol = solve_bnb(&inst, &BnbConfig::default()).unwrap();
        assert!(sol.objective.abs() < 1e-9);
        let audited = evaluate_schedule_cost(&sol.schedule, &inst).unwrap();
        assert!(audited.abs() < 1e-9);
    }

    #[test]
    fn grid_mode_matches_grid_dp() {
        let inst = toy();
        let grid = build_grid(&inst, 1).unwrap();
        let net = build_grid_network(&inst, &grid);
        let costs = precompute_arc_costs(&net, &inst);
        let dp = solve_dp(&net, &costs, &inst).unwrap();
        let cfg = BnbConfig { grid: Some(grid), ..Default::default() };
        let bnb = solve_bnb(&inst, &cfg).unwrap();
        assert!((bnb.objective - dp.objective).abs() < 1e-9);
    }

    #[test]
    fn infeasible_terminal_reported() {
        let mut inst = toy();
        inst.terminal_level = Some(900.0);
        inst.terminal_ramp_zero = true;
        assert!(matches!(
            solve_bnb(&inst, &BnbConfig::default()),
            Err(BnbError::Infeasible)
        ));
    }
}
