//! Finite-grid event network and the exact dynamic program over it.
//!
//! A node is a grid state (stage, mode, reservoir index, entry-output index,
//! residence counter); an arc is one event: stay in the current mode over
//! `t..j-1`, then switch at `j`. Arc costs are optimal block LP values plus
//! boundary switching charges. The network is a DAG by construction (arcs move
//! strictly forward in stage, except the zero-length start arc at stage 1), so
//! a single backward pass solves it exactly.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::blocks::{solve_block, BlockBoundary, BlockResult, TerminalRule};
use crate::instance::{GridSpec, Instance, Mode};
use crate::schedule::{assemble, Schedule};
use crate::tol::FEAS_TOL;

/// Grid-state of the dynamic program. `h_idx` indexes the ramp grid and is
/// zero unless the mode was entered from a running turbine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventState {
    pub t: usize,
    pub mode: Mode,
    pub m_idx: usize,
    pub h_idx: usize,
    pub tau: usize,
}

/// One admissible event from a state: where the mode switch happens, what the
/// successor mode is (`None` targets the end-of-horizon dummy), and the exit
/// boundary of the covered block.
#[derive(Debug, Clone, PartialEq)]
pub struct EventAction {
    pub j: usize,
    pub succ: Option<Mode>,
    pub m_end: Option<f64>,
    pub m_end_idx: usize,
    pub h_bar_end: f64,
    pub h_end_idx: usize,
    pub terminal: TerminalRule,
    /// Switching charge at the boundary.
    pub gamma: f64,
    /// Offline and zero-length events have a known zero block cost.
    pub needs_lp: bool,
}

#[derive(Debug, Clone)]
pub struct EventArc {
    pub to: usize,
    pub j: usize,
    /// Index into the deduplicated block table, or `None` for events whose
    /// block cost is identically zero (offline, zero-length start).
    pub block: Option<u32>,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct EventNode {
    pub state: EventState,
    pub arcs: Vec<EventArc>,
}

#[derive(Debug, Clone)]
pub struct EventNetwork {
    pub grid: GridSpec,
    pub nodes: Vec<EventNode>,
    pub source: usize,
    pub sink: usize,
    /// Deduplicated block boundaries; several arcs may share one entry when
    /// they differ only in the residence counter or successor mode.
    pub blocks: Vec<BlockBoundary>,
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("no feasible source-to-sink path in the event network")]
    NoFeasiblePath,
    #[error("arc on the optimal path failed to re-solve: {0}")]
    PathReplay(String),
    #[error("arc cost cache i/o: {0}")]
    CacheIo(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    pub objective: f64,
    pub schedule: Schedule,
}

/// Levels that an offline block walks through; `None` if a bound is violated.
fn offline_end_level(inst: &Instance, t: usize, j: usize, m_start: f64) -> Option<f64> {
    let mut level = m_start;
    for i in t..j {
        level += inst.inflow[i - 1] - inst.spillage[i - 1];
        if level < -FEAS_TOL || level > inst.capacity + FEAS_TOL {
            return None;
        }
    }
    Some(level)
}

/// Interval of total net water release achievable by a block, from per-stage
/// flow bounds and ramp propagation. A necessary condition only: arcs whose
/// level change falls outside are infeasible; the block LP settles the rest.
fn release_interval(
    inst: &Instance,
    mode: Mode,
    t: usize,
    j: usize,
    h_start: f64,
    h_end: f64,
    terminal: TerminalRule,
) -> Option<(f64, f64)> {
    let v = inst.ramp_limit;
    let mut lo = 0.0;
    let mut hi = 0.0;
    for i in t..j {
        let a = i - 1;
        if mode.uses_turbine() {
            let fwd = (i - t + 1) as f64;
            let bwd = (j - 1 - i) as f64;
            let mut h_lo = inst.gen_min[a].max(h_start - fwd * v);
            let mut h_hi = inst.gen_max[a].min(h_start + fwd * v);
            match terminal {
                TerminalRule::Pin => {
                    h_lo = h_lo.max(h_end - bwd * v);
                    h_hi = h_hi.min(h_end + bwd * v);
                }
                TerminalRule::Cap => h_hi = h_hi.min(v + bwd * v),
                TerminalRule::Free => {}
            }
            if h_lo > h_hi + FEAS_TOL {
                return None;
            }
            lo += inst.eff_gen[a] * h_lo;
            hi += inst.eff_gen[a] * h_hi;
        }
        if mode.uses_pump() {
            lo -= inst.eff_pump[a] * inst.pump_max[a];
            hi -= inst.eff_pump[a] * inst.pump_min[a];
        }
    }
    Some((lo, hi))
}

/// Enumerates every admissible event from `s`, in deterministic order:
/// ascending switch stage, successor modes G < P < SC < O, then ascending
/// reservoir and ramp grid indices; end-of-horizon events come last within
/// their switch stage.
pub fn enumerate_events(s: &EventState, inst: &Instance, grid: &GridSpec) -> Vec<EventAction> {
    let t_n = inst.horizon;
    let m_start = grid.reservoir[s.m_idx];
    let h_start = grid.ramp[s.h_idx];
    let online: Vec<Mode> = inst.modes().iter().copied().filter(|m| m.is_online()).collect();
    let mut out = Vec::new();

    if s.mode == Mode::Off {
        // Zero-length start event: the unit may come online at stage 1.
        if s.t == 1 && s.tau == 0 {
            for &x in &online {
                out.push(EventAction {
                    j: 1,
                    succ: Some(x),
                    m_end: Some(m_start),
                    m_end_idx: s.m_idx,
                    h_bar_end: 0.0,
                    h_end_idx: 0,
                    terminal: TerminalRule::Free,
                    gamma: inst.startup[0],
                    needs_lp: false,
                });
            }
        }
        for j in (s.t + s.tau + 1)..=t_n {
            let Some(end) = offline_end_level(inst, s.t, j, m_start) else {
                break; // drift only worsens past a bound violation at fixed start
            };
            // Offline arcs exist only where the drifted level lands on the grid.
            let Some(m_end_idx) = GridSpec::find(&grid.reservoir, end, crate::tol::SNAP_TOL)
            else {
                continue;
            };
            for &x in &online {
                out.push(EventAction {
                    j,
                    succ: Some(x),
                    m_end: Some(grid.reservoir[m_end_idx]),
                    m_end_idx,
                    h_bar_end: 0.0,
                    h_end_idx: 0,
                    terminal: TerminalRule::Free,
                    gamma: inst.startup[j - 1],
                    needs_lp: false,
                });
            }
        }
        // Stay offline through the end of the horizon.
        if let Some(end) = offline_end_level(inst, s.t, t_n + 1, m_start) {
            let ok = match inst.terminal_level {
                Some(term) => (end - term).abs() <= FEAS_TOL,
                None => true,
            };
            if ok {
                out.push(EventAction {
                    j: t_n + 1,
                    succ: None,
                    m_end: inst.terminal_level,
                    m_end_idx: 0,
                    h_bar_end: 0.0,
                    h_end_idx: 0,
                    terminal: TerminalRule::Free,
                    gamma: 0.0,
                    needs_lp: false,
                });
            }
        }
        return out;
    }

    // Online mode: the event length is capped.
    let j_hi = (s.t + inst.j_max.max(1)).min(t_n + 1);
    for j in (s.t + 1)..=j_hi {
        if j <= t_n {
            for &succ in &[Mode::Gen, Mode::Pump, Mode::Sc, Mode::Off] {
                if succ == s.mode || (succ != Mode::Off && !online.contains(&succ)) {
                    continue;
                }
                if succ == Mode::Off && j < s.t + s.tau + 1 {
                    continue; // minimum-up residence
                }
                let gamma = if succ == Mode::Off { inst.shutdown[j - 1] } else { 0.0 };
                let keep_turbine = s.mode.uses_turbine() && succ.uses_turbine();
                let (h_choices, terminal) = if keep_turbine {
                    ((0..grid.ramp.len()).collect::<Vec<_>>(), TerminalRule::Pin)
                } else if s.mode.uses_turbine() {
                    let rule =
                        if inst.strict_terminal { TerminalRule::Pin } else { TerminalRule::Cap };
                    (vec![0], rule)
                } else {
                    (vec![0], TerminalRule::Free)
                };
                for m_end_idx in 0..grid.reservoir.len() {
                    let m_end = grid.reservoir[m_end_idx];
                    for &h_end_idx in &h_choices {
                        let h_end = if keep_turbine { grid.ramp[h_end_idx] } else { 0.0 };
                        let Some((lo, hi)) =
                            release_interval(inst, s.mode, s.t, j, h_start, h_end, terminal)
                        else {
                            continue;
                        };
                        let need = m_start + inst.drift(s.t - 1, j - 1) - m_end;
                        if need < lo - FEAS_TOL.max(1e-9 * lo.abs())
                            || need > hi + FEAS_TOL.max(1e-9 * hi.abs())
                        {
                            continue;
                        }
                        out.push(EventAction {
                            j,
                            succ: Some(succ),
                            m_end: Some(m_end),
                            m_end_idx,
                            h_bar_end: h_end,
                            h_end_idx,
                            terminal,
                            gamma,
                            needs_lp: true,
                        });
                    }
                }
            }
        } else {
            // Run to the end of the horizon.
            let terminal = if s.mode.uses_turbine() && inst.terminal_ramp_zero {
                if inst.strict_terminal {
                    TerminalRule::Pin
                } else {
                    TerminalRule::Cap
                }
            } else {
                TerminalRule::Free
            };
            if let Some(term) = inst.terminal_level {
                let Some((lo, hi)) =
                    release_interval(inst, s.mode, s.t, j, h_start, 0.0, terminal)
                else {
                    continue;
                };
                let need = m_start + inst.drift(s.t - 1, j - 1) - term;
                if need < lo - FEAS_TOL || need > hi + FEAS_TOL {
                    continue;
                }
            }
            out.push(EventAction {
                j,
                succ: None,
                m_end: inst.terminal_level,
                m_end_idx: 0,
                h_bar_end: 0.0,
                h_end_idx: 0,
                terminal,
                gamma: 0.0,
                needs_lp: true,
            });
        }
    }
    out
}

/// Successor state of an event, or `None` for end-of-horizon events.
pub fn transition(s: &EventState, a: &EventAction, inst: &Instance) -> Option<EventState> {
    let succ = a.succ?;
    let tau = match (s.mode.is_online(), succ.is_online()) {
        (false, true) => inst.min_up - 1,
        (true, false) => inst.min_down - 1,
        _ => s.tau.saturating_sub(a.j - s.t),
    };
    Some(EventState { t: a.j, mode: succ, m_idx: a.m_end_idx, h_idx: a.h_end_idx, tau })
}

#[derive(PartialEq, Eq, Hash)]
struct BlockKey {
    t: usize,
    j: usize,
    mode: Mode,
    m0: u64,
    h0: u64,
    m1: Option<u64>,
    h1: u64,
    term: u8,
}

fn block_key(b: &BlockBoundary) -> BlockKey {
    BlockKey {
        t: b.t,
        j: b.j,
        mode: b.mode,
        m0: b.m_start.to_bits(),
        h0: b.h_bar_start.to_bits(),
        m1: b.m_end.map(f64::to_bits),
        h1: b.h_bar_end.to_bits(),
        term: match b.terminal {
            TerminalRule::Pin => 0,
            TerminalRule::Cap => 1,
            TerminalRule::Free => 2,
        },
    }
}

/// Builds the reachable event network by a forward sweep from the source
/// state (stage 1, offline, initial level, zero boundary output).
pub fn build_grid_network(inst: &Instance, grid: &GridSpec) -> EventNetwork {
    let m_init_idx = GridSpec::find(&grid.reservoir, inst.initial_level, crate::tol::SNAP_TOL)
        .expect("grid contains the initial level by construction");
    let root = EventState {
        t: 1,
        mode: Mode::Off,
        m_idx: m_init_idx,
        h_idx: 0,
        tau: inst.initial_tau,
    };
    let mut nodes: Vec<EventNode> = Vec::new();
    let mut ids: HashMap<EventState, usize> = HashMap::new();
    let sink_state =
        EventState { t: inst.horizon + 1, mode: Mode::Off, m_idx: 0, h_idx: 0, tau: 0 };
    nodes.push(EventNode { state: sink_state, arcs: Vec::new() });
    let sink = 0;
    nodes.push(EventNode { state: root, arcs: Vec::new() });
    ids.insert(root, 1);
    let source = 1;

    let mut blocks: Vec<BlockBoundary> = Vec::new();
    let mut block_ids: HashMap<BlockKey, u32> = HashMap::new();

    let mut head = source;
    while head < nodes.len() {
        let s = nodes[head].state;
        let m_start = grid.reservoir[s.m_idx];
        let h_start = grid.ramp[s.h_idx];
        let mut arcs = Vec::new();
        for a in enumerate_events(&s, inst, grid) {
            let to = match transition(&s, &a, inst) {
                None => sink,
                Some(succ) => *ids.entry(succ).or_insert_with(|| {
                    nodes.push(EventNode { state: succ, arcs: Vec::new() });
                    nodes.len() - 1
                }),
            };
            let block = if a.needs_lp {
                let b = BlockBoundary {
                    t: s.t,
                    j: a.j,
                    mode: s.mode,
                    m_start,
                    h_bar_start: h_start,
                    m_end: a.m_end,
                    h_bar_end: a.h_bar_end,
                    terminal: a.terminal,
                };
                Some(*block_ids.entry(block_key(&b)).or_insert_with(|| {
                    blocks.push(b);
                    (blocks.len() - 1) as u32
                }))
            } else {
                None
            };
            arcs.push(EventArc { to, j: a.j, block, gamma: a.gamma });
        }
        nodes[head].arcs = arcs;
        head += 1;
    }

    EventNetwork { grid: grid.clone(), nodes, source, sink, blocks }
}

/// Solves every deduplicated block LP in parallel. Infeasible blocks get
/// `f64::INFINITY`. The result is a function of the block list only, so it is
/// identical for any worker count.
pub fn precompute_arc_costs(net: &EventNetwork, inst: &Instance) -> Vec<f64> {
    net.blocks
        .par_iter()
        .map(|b| {
            match solve_block(b, inst).expect("network arcs honor block contracts") {
                BlockResult::Feasible { cost, .. } => cost,
                BlockResult::Infeasible => f64::INFINITY,
            }
        })
        .collect()
}

fn cache_file(dir: &Path, inst: &Instance, grid: &GridSpec, n: usize) -> PathBuf {
    dir.join(format!("arcs-{:016x}-{:016x}-{n}.csv", inst.content_hash(), grid.content_hash()))
}

/// Like [`precompute_arc_costs`] but backed by a sidecar file keyed on the
/// instance and grid hashes, so repeated runs skip the block solves.
pub fn load_or_compute_arc_costs(
    net: &EventNetwork,
    inst: &Instance,
    cache_dir: Option<&Path>,
) -> Result<Vec<f64>, NetworkError> {
    let Some(dir) = cache_dir else {
        return Ok(precompute_arc_costs(net, inst));
    };
    let path = cache_file(dir, inst, &net.grid, net.blocks.len());
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Some(costs) = parse_cost_cache(&text, net.blocks.len()) {
            return Ok(costs);
        }
    }
    let costs = precompute_arc_costs(net, inst);
    std::fs::create_dir_all(dir)?;
    let mut buf = String::from("pshopt-arc-cache,v1\n");
    for (i, c) in costs.iter().enumerate() {
        if c.is_finite() {
            buf.push_str(&format!("{i},{}\n", hex_f64(*c)));
        } else {
            buf.push_str(&format!("{i},inf\n"));
        }
    }
    let mut f = std::fs::File::create(&path)?;
    f.write_all(buf.as_bytes())?;
    Ok(costs)
}

fn hex_f64(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn parse_cost_cache(text: &str, n: usize) -> Option<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next()? != "pshopt-arc-cache,v1" {
        return None;
    }
    let mut out = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let (idx, val) = line.split_once(',')?;
        if idx.parse::<usize>().ok()? != i {
            return None;
        }
        if val == "inf" {
            out.push(f64::INFINITY);
        } else {
            out.push(f64::from_bits(u64::from_str_radix(val, 16).ok()?));
        }
    }
    (out.len() == n).then_some(out)
}

/// Backward pass over the event network. Ties are broken by arc enumeration
/// order (smallest switch stage, successor mode order, lowest grid indices),
/// so the recovered schedule is deterministic.
pub fn solve_dp(
    net: &EventNetwork,
    costs: &[f64],
    inst: &Instance,
) -> Result<DpSolution, NetworkError> {
    assert_eq!(costs.len(), net.blocks.len());
    let mut order: Vec<usize> = (0..net.nodes.len()).collect();
    // Backward by stage; the zero-length start arc makes the offline source
    // depend on same-stage online nodes, so offline states go last per stage.
    order.sort_by_key(|&i| {
        let s = &net.nodes[i].state;
        (std::cmp::Reverse(s.t), s.mode == Mode::Off)
    });

    let mut value = vec![f64::INFINITY; net.nodes.len()];
    let mut choice: Vec<Option<usize>> = vec![None; net.nodes.len()];
    value[net.sink] = 0.0;
    for &i in &order {
        if i == net.sink {
            continue;
        }
        for (ai, arc) in net.nodes[i].arcs.iter().enumerate() {
            let block_cost = arc.block.map_or(0.0, |b| costs[b as usize]);
            let total = arc.gamma + block_cost + value[arc.to];
            if total < value[i] {
                value[i] = total;
                choice[i] = Some(ai);
            }
        }
    }

    let objective = value[net.source];
    if !objective.is_finite() {
        return Err(NetworkError::NoFeasiblePath);
    }

    // Replay the optimal path, re-solving each block for its trajectory.
    let t_n = inst.horizon;
    let mut modes = vec![Mode::Off; t_n];
    let mut h_out = vec![0.0; t_n];
    let mut h_in = vec![0.0; t_n];
    let mut at = net.source;
    while at != net.sink {
        let node = &net.nodes[at];
        let ai = choice[at].expect("finite value implies a chosen arc");
        let arc = &node.arcs[ai];
        let (t, j) = (node.state.t, arc.j);
        if let Some(b) = arc.block {
            let BlockResult::Feasible { traj, .. } = solve_block(&net.blocks[b as usize], inst)
                .map_err(|e| NetworkError::PathReplay(e.to_string()))?
            else {
                return Err(NetworkError::PathReplay(format!(
                    "block over {t}..{} became infeasible on replay",
                    j - 1
                )));
            };
            for (k, i) in (t..j).enumerate() {
                modes[i - 1] = node.state.mode;
                h_out[i - 1] = traj.h_out[k];
                h_in[i - 1] = traj.h_in[k];
            }
        }
        at = arc.to;
    }
    let schedule = assemble(inst, &modes, &h_out, &h_in);
    Ok(DpSolution { objective, schedule })
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
    fn toy_dp_matches_closed_form() {
        let inst = toy();
        let grid = build_grid(&inst, 1).unwrap();
        let net = build_grid_network(&inst, &grid);
        let costs = precompute_arc_costs(&net, &inst);
        let sol = solve_dp(&net, &costs, &inst).unwrap();
        assert!((sol.objective + 25000.0).abs() < 1e-6, "{}", sol.objective);
        assert_eq!(sol.schedule.stages[0].mode, Mode::Gen);
        assert_eq!(sol.schedule.stages[1].mode, Mode::Gen);
        let audited = evaluate_schedule_cost(&sol.schedule, &inst).unwrap();
        assert!((audited - sol.objective).abs() < 1e-7);
    }

    #[test]
    fn start_events_respect_initial_counter() {
        let mut inst = toy();
        inst.initial_tau = 1;
        let grid = build_grid(&inst, 1).unwrap();
        let root = EventState {
            t: 1,
            mode: Mode::Off,
            m_idx: GridSpec::find(&grid.reservoir, 450.0, 1e-9).unwrap(),
            h_idx: 0,
            tau: inst.initial_tau,
        };
        let events = enumerate_events(&root, &inst, &grid);
        // No zero-length start and no start-up before stage 3; only the
        // all-offline event survives on this two-stage instance.
        assert!(events.iter().all(|a| a.succ.is_none()));
    }

    #[test]
    fn online_events_capped_by_event_length() {
        let inst = toy_with_horizon(20, 4);
        let grid = build_grid(&inst, 1).unwrap();
        let s = EventState { t: 3, mode: Mode::Gen, m_idx: 5, h_idx: 0, tau: 0 };
        let events = enumerate_events(&s, &inst, &grid);
        assert!(!events.is_empty());
        assert!(events.iter().all(|a| a.j <= 7));
        assert!(events.iter().all(|a| a.succ != Some(Mode::Gen)));
    }

    #[test]
    fn boundary_charges_follow_switch_direction() {
        let inst = toy_with_horizon(20, 4);
        let grid = build_grid(&inst, 1).unwrap();
        let off = EventState { t: 5, mode: Mode::Off, m_idx: 5, h_idx: 0, tau: 0 };
        for a in enumerate_events(&off, &inst, &grid) {
            match a.succ {
                Some(m) if m.is_online() => assert_eq!(a.gamma, inst.startup[a.j - 1]),
                _ => assert_eq!(a.gamma, 0.0),
            }
        }
        let gen = EventState { t: 5, mode: Mode::Gen, m_idx: 5, h_idx: 0, tau: 0 };
        for a in enumerate_events(&gen, &inst, &grid) {
            match a.succ {
                Some(Mode::Off) => assert_eq!(a.gamma, inst.shutdown[a.j - 1]),
                _ => assert_eq!(a.gamma, 0.0),
            }
        }
    }

    #[test]
    fn counter_updates_follow_residence_rules() {
        let mut inst = toy_with_horizon(20, 4);
        inst.min_up = 3;
        inst.min_down = 2;
        let grid = build_grid(&inst, 1).unwrap();
        let off = EventState { t: 5, mode: Mode::Off, m_idx: 5, h_idx: 0, tau: 1 };
        let start = enumerate_events(&off, &inst, &grid)
            .into_iter()
            .find(|a| a.succ == Some(Mode::Gen))
            .unwrap();
        assert!(start.j >= 7); // j >= t + tau + 1
        let next = transition(&off, &start, &inst).unwrap();
        assert_eq!(next.tau, 2); // min-up - 1

        let gen = EventState { t: 5, mode: Mode::Gen, m_idx: 5, h_idx: 0, tau: 2 };
        let events = enumerate_events(&gen, &inst, &grid);
        // Shut-downs blocked until the counter clears; switching to pumping
        // is allowed immediately and drains the counter by the elapsed stages.
        assert!(events
            .iter()
            .all(|a| a.succ != Some(Mode::Off) || a.j >= 8));
        let swap = events.iter().find(|a| a.succ == Some(Mode::Pump) && a.j == 6).unwrap();
        assert_eq!(transition(&gen, swap, &inst).unwrap().tau, 1);
        let stop = events.iter().find(|a| a.succ == Some(Mode::Off)).unwrap();
        assert_eq!(transition(&gen, stop, &inst).unwrap().tau, 1); // min-down - 1
    }

    fn toy_with_horizon(t_n: usize, j_max: usize) -> Instance {
        load_instance(
            &serde_json::json!({
                "horizon": t_n,
                "prices": (0..t_n).map(|i| 100.0 + i as f64).collect::<Vec<_>>(),
                "gen_bounds": [40.0, 130.0],
                "pump_bounds": [0.0, 130.0],
                "ramp_limit": 50.0,
                "efficiency_pump": 0.75,
                "j_max": j_max,
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
    fn infeasible_network_is_reported() {
        let mut inst = toy();
        // Demand a terminal level no two-stage schedule can reach.
        inst.terminal_level = Some(900.0);
        inst.terminal_ramp_zero = true;
        let grid = build_grid(&inst, 1).unwrap();
        let net = build_grid_network(&inst, &grid);
        let costs = precompute_arc_costs(&net, &inst);
        assert!(matches!(solve_dp(&net, &costs, &inst), Err(NetworkError::NoFeasiblePath)));
    }

    #[test]
    fn cost_cache_round_trips(){
        let inst = toy();
        let grid = build_grid(&inst, 1).unwrap();
        let net = build_grid_network(&inst, &grid);
        let dir = tempfile::tempdir().unwrap();
        let first = load_or_compute_arc_costs(&net, &inst, Some(dir.path())).unwrap();
        let second = load_or_compute_arc_costs(&net, &inst, Some(dir.path())).unwrap();
        assert_eq!(first.len(), net.blocks.len());
        for (a, b) in first.iter().zip(&second) {
            assert!(a.to_bits() == b.to_bits());
        }
    }
}
