//! Cross-method consistency on the shipped instances.

use std::path::{Path, PathBuf};
use pshopt::instance::{build_grid, load_instance_file, Instance};
use pshopt::lp::{Backend, MipOptions};
use pshopt::network::{build_grid_network, precompute_arc_costs, solve_dp};
use pshopt::schedule::evaluate_schedule_cost;
use pshopt::time_indexed::solve_milp;

fn shipped(name: &str) -> Instance {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances").join(name);
    load_instance_file(&p).unwrap()
}

fn milp_opts() -> MipOptions {
    MipOptions {
        time_budget: 120.0,
        backend: Backend::External,
        ..MipOptions::default()
    }
}

/// The grid DP solves a restriction of the MILP's feasible set, so its
/// objective can never beat the MILP, and both schedules must audit to their
/// reported objectives.
#[test]
fn baseline_grid_dp_bounded_by_milp() {
    let inst = shipped("baseline.json");
    let grid = build_grid(&inst, 1).unwrap();
    let net = build_grid_network(&inst, &grid);
    let costs = precompute_arc_costs(&net, &inst);
    let dp = solve_dp(&net, &costs, &inst).unwrap();
    let audited = evaluate_schedule_cost(&dp.schedule, &inst).unwrap();
    assert!((audited - dp.objective).abs() < 1e-6, "{audited} vs {}", dp.objective);

    let (schedule, mip) = solve_milp(&inst, &milp_opts()).unwrap();
    let schedule = schedule.expect("baseline MILP is feasible");
    let milp_obj = mip.solution.objective;
    let audited_milp = evaluate_schedule_cost(&schedule, &inst).unwrap();
    assert!((audited_milp - milp_obj).abs() < 1e-5, "{audited_milp} vs {milp_obj}");
    assert!(
        dp.objective >= milp_obj - 1e-6 * milp_obj.abs().max(1.0),
        "grid DP {} beat the MILP {milp_obj}",
        dp.objective
    );
}

#[test]
fn hsc_grid_dp_bounded_by_milp() {
    let inst = shipped("hsc.json");
    let grid = build_grid(&inst, 1).unwrap();
    let net = build_grid_network(&inst, &grid);
    let costs = precompute_arc_costs(&net, &inst);
    let dp = solve_dp(&net, &costs, &inst).unwrap();
    let audited = evaluate_schedule_cost(&dp.schedule, &inst).unwrap();
    assert!((audited - dp.objective).abs() < 1e-6);

    let (schedule, mip) = solve_milp(&inst, &milp_opts()).unwrap();
    assert!(schedule.is_some());
    assert!(dp.objective >= mip.solution.objective - 1e-6 * mip.solution.objective.abs().max(1.0));
}

/// Refining the reservoir grid can only improve (or keep) the DP objective
/// when the finer grid contains the coarser one.
#[test]
fn nested_refinement_is_monotone() {
    let inst = shipped("baseline.json");
    let mut prev = f64::INFINITY;
    for k in [1usize, 2, 4] {
        let grid = build_grid(&inst, k).unwrap();
        let net = build_grid_network(&inst, &grid);
        let costs = precompute_arc_costs(&net, &inst);
        let dp = solve_dp(&net, &costs, &inst).unwrap();
        assert!(dp.objective <= prev + 1e-9, "refinement {k} worsened: {} > {prev}", dp.objective);
        prev = dp.objective;
    }
}

/// The flow polytope has integral vertices, so the monolithic LP matches the
/// DP exactly and its extracted path audits to the same objective.
#[test]
fn baseline_network_lp_equals_dp() {
    let inst = shipped("baseline.json");
    let grid = build_grid(&inst, 1).unwrap();
    let net = build_grid_network(&inst, &grid);
    let costs = precompute_arc_costs(&net, &inst);
    let dp = solve_dp(&net, &costs, &inst).unwrap();
    let lp = pshopt::netflow::solve_network_lp(&net, &inst, Backend::External).unwrap();
    let rel = (lp.objective - dp.objective).abs() / dp.objective.abs().max(1.0);
    assert!(rel < 1e-6, "LP {} vs DP {}", lp.objective, dp.objective);
    let audited = evaluate_schedule_cost(&lp.schedule, &inst).unwrap();
    assert!((audited - lp.objective).abs() < 1e-5 * lp.objective.abs().max(1.0));
}

#[allow(dead_code)]
fn unused(_: PathBuf) {}
