//! Monolithic network-flow LP over the event network.
//!
//! Each arc carries a flow variable `pi` and a perspective-scaled copy of its
//! block: all bounds, constants, and epigraph intercepts are multiplied by
//! `pi`, so the embedded cost is exactly `pi` times the optimal block cost at
//! the arc's boundary. A unit of flow from source to sink then selects an
//! event schedule, and because the flow polytope has integral vertices the LP
//! optimum matches the dynamic program.

use thiserror::Error;

use crate::blocks::{solve_block, BlockBoundary, BlockEmbed, BlockResult, Expr};
use crate::instance::{Instance, Mode};
use crate::lp::{solve_with, Backend, LinearProgram, LpError, Relation};
use crate::network::{EventNetwork, NetworkError};
use crate::schedule::{assemble, Schedule};
use crate::tol::INTEGRALITY_TOL;

/// Maps network arcs to LP columns: `pi[node][arc]` is the flow variable of
/// that arc of that node.
#[derive(Debug, Clone)]
pub struct NetworkLpIndex {
    pub pi: Vec<Vec<usize>>,
}

#[derive(Debug)]
pub struct NetworkLp {
    pub lp: LinearProgram,
    pub index: NetworkLpIndex,
}

#[derive(Debug, Error)]
pub enum NetflowError {
    #[error("network LP is infeasible")]
    Infeasible,
    #[error("path decomposition failed: {0}")]
    DecompositionFailure(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone)]
pub struct NetflowSolution {
    pub objective: f64,
    pub schedule: Schedule,
    /// Whether the raw LP flows were already integral.
    pub integral: bool,
}

/// Builds the flow LP: one `pi` per arc (objective = boundary charge), one
/// perspective-scaled block copy per LP-backed arc, a unit-source row, and
/// flow conservation at every interior node.
pub fn build_network_lp(net: &EventNetwork, inst: &Instance) -> NetworkLp {
    let mut lp = LinearProgram::new();
    let mut pi = Vec::with_capacity(net.nodes.len());
    let mut inflow: Vec<Vec<usize>> = vec![Vec::new(); net.nodes.len()];
    for (i, node) in net.nodes.iter().enumerate() {
        let mut row = Vec::with_capacity(node.arcs.len());
        for (ai, arc) in node.arcs.iter().enumerate() {
            let v = lp.add_var(format!("pi_{i}_{ai}"), 0.0, 1.0, arc.gamma);
            row.push(v);
            inflow[arc.to].push(v);
            if let Some(b) = arc.block {
                let b: &BlockBoundary = &net.blocks[b as usize];
                let emb = BlockEmbed {
                    pi: Expr::var(v),
                    m_in: Expr::scaled(v, b.m_start),
                    h_bar_in: Expr::scaled(v, b.h_bar_start),
                    m_out: b.m_end.map(|m| Expr::scaled(v, m)),
                    h_bar_out: Expr::scaled(v, b.h_bar_end),
                    terminal: b.terminal,
                };
                crate::blocks::append_block(&mut lp, inst, b.t, b.j, b.mode, &emb, &format!("a{i}_{ai}"));
            }
        }
        pi.push(row);
    }
    lp.add_row(
        "source".to_string(),
        pi[net.source].iter().map(|&v| (v, 1.0)).collect(),
        Relation::Eq,
        1.0,
    );
    for (i, outs) in pi.iter().enumerate() {
        if i == net.source || i == net.sink {
            continue;
        }
        let mut coeffs: Vec<(usize, f64)> = outs.iter().map(|&v| (v, 1.0)).collect();
        coeffs.extend(inflow[i].iter().map(|&v| (v, -1.0)));
        lp.add_row(format!("cons_{i}"), coeffs, Relation::Eq, 0.0);
    }
    NetworkLp { lp, index: NetworkLpIndex { pi } }
}

/// Recovers a source-to-sink event path from LP flows and re-solves its
/// blocks exactly. With integral flows this reads the path off directly;
/// fractional flows are decomposed greedily along the largest-flow arcs.
/// Flows below 1e-6 are never divided by or followed.
pub fn extract_path(
    net: &EventNetwork,
    index: &NetworkLpIndex,
    x: &[f64],
    inst: &Instance,
) -> Result<(f64, Schedule, bool), NetflowError> {
    let integral = index
        .pi
        .iter()
        .flatten()
        .all(|&v| x[v] < INTEGRALITY_TOL || (x[v] - 1.0).abs() < INTEGRALITY_TOL);

    let t_n = inst.horizon;
    let mut modes = vec![Mode::Off; t_n];
    let mut h_out = vec![0.0; t_n];
    let mut h_in = vec![0.0; t_n];
    let mut exact = 0.0;
    let mut at = net.source;
    let mut hops = 0usize;
    while at != net.sink {
        hops += 1;
        if hops > 2 * (t_n + 2) {
            return Err(NetflowError::DecompositionFailure("path exceeds horizon".into()));
        }
        let node = &net.nodes[at];
        let mut best: Option<(usize, f64)> = None;
        for (ai, &v) in index.pi[at].iter().enumerate() {
            let f = x[v];
            if f >= 1e-6 && best.map_or(true, |(_, bf)| f > bf) {
                best = Some((ai, f));
            }
        }
        let Some((ai, _)) = best else {
            return Err(NetflowError::DecompositionFailure(format!(
                "no positive-flow arc out of node {at}"
            )));
        };
        let arc = &node.arcs[ai];
        exact += arc.gamma;
        if let Some(b) = arc.block {
            let b = &net.blocks[b as usize];
            let BlockResult::Feasible { cost, traj } =
                solve_block(b, inst).map_err(|e| NetflowError::DecompositionFailure(e.to_string()))?
            else {
                return Err(NetflowError::DecompositionFailure(format!(
                    "arc block over {}..{} infeasible at unit flow",
                    b.t,
                    b.j - 1
                )));
            };
            exact += cost;
            for (k, i) in (b.t..b.j).enumerate() {
                modes[i - 1] = node.state.mode;
                h_out[i - 1] = traj.h_out[k];
                h_in[i - 1] = traj.h_in[k];
            }
        }
        at = arc.to;
    }
    Ok((exact, assemble(inst, &modes, &h_out, &h_in), integral))
}

/// Builds, solves, and extracts in one call.
pub fn solve_network_lp(
    net: &EventNetwork,
    inst: &Instance,
    backend: Backend,
) -> Result<NetflowSolution, NetflowError> {
    let built = build_network_lp(net, inst);
    let sol = solve_with(&built.lp, backend)?;
    if !sol.is_optimal() {
        return Err(NetflowError::Infeasible);
    }
    let (_, schedule, integral) = extract_path(net, &built.index, &sol.x, inst)?;
    Ok(NetflowSolution { objective: sol.objective, schedule, integral })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{build_grid, load_instance};
    use crate::network::{build_grid_network, precompute_arc_costs, solve_dp};
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
    fn toy_lp_matches_dp() {
        let inst = toy();
        let grid = build_grid(&inst, 1).unwrap();
        let net = build_grid_network(&inst, &grid);
        for backend in [Backend::Dense, Backend::External] {
            let lp = solve_network_lp(&net, &inst, backend).unwrap();
            assert!((lp.objective + 25000.0).abs() < 1e-5, "{}", lp.objective);
            let audited = evaluate_schedule_cost(&lp.schedule, &inst).unwrap();
            assert!((audited - lp.objective).abs() < 1e-5);
        }
        let costs = precompute_arc_costs(&net, &inst);
        let dp = solve_dp(&net, &costs, &inst).unwrap();
        assert!((dp.objective + 25000.0).abs() < 1e-6);
    }

    #[test]
    fn two_equal_paths_still_extract() {
        // Two stages with equal prices create symmetric optimal paths
        // (generate early or late); any optimal basic solution must still
        // decompose into one audited path of the same exact cost.
        let mut inst = toy();
        inst.prices = vec![150.0, 150.0];
        let grid = build_grid(&inst, 1).unwrap();
        let net = build_grid_network(&inst, &grid);
        let lp = solve_network_lp(&net, &inst, Backend::External).unwrap();
        let audited = evaluate_schedule_cost(&lp.schedule, &inst).unwrap();
        assert!((audited - lp.objective).abs() < 1e-5, "{audited} vs {}", lp.objective);
    }

    #[test]
    fn infeasible_terminal_is_reported() {
        let mut inst = toy();
        inst.terminal_level = Some(900.0);
        inst.terminal_ramp_zero = true;
        let grid = build_grid(&inst, 1).unwrap();
        let net = build_grid_network(&inst, &grid);
        assert!(matches!(
            solve_network_lp(&net, &inst, Backend::External),
            Err(NetflowError::Infeasible)
        ));
    }
}
