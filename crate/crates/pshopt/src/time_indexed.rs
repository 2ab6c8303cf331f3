//! Time-indexed mixed-integer benchmark formulation.
//!
//! One commitment binary per mode and stage, aggregate on/off status with
//! start/stop indicators, stagewise mass balance, and ramping on the turbine
//! output. Serves as the reference against which the event-based methods are
//! cross-validated.

use thiserror::Error;

use crate::instance::{validate, Instance, Mode};
use crate::lp::{
    solve_binary_mip_with, LinearProgram, LpSolution, MipError, MipOptions, MipSolution, Relation,
};
use crate::schedule::{assemble, Schedule};
use crate::tol::INTEGRALITY_TOL;

#[derive(Debug, Error)]
pub enum TimeIndexedError {
    #[error("instance validation failed: {0:?}")]
    ValidationFailed(Vec<String>),
    #[error("solution has fractional binaries")]
    FractionalBinaries,
    #[error(transparent)]
    Mip(#[from] MipError),
}

/// Variable index map for one built model.
#[derive(Debug, Clone)]
pub struct TimeIndexedModel {
    pub lp: LinearProgram,
    pub yg: Vec<usize>,
    pub yp: Vec<usize>,
    pub ysc: Option<Vec<usize>>,
    pub y: Vec<usize>,
    pub u: Vec<usize>,
    pub d: Vec<usize>,
    pub h_out: Vec<usize>,
    pub h_in: Vec<usize>,
    /// Reservoir levels, length T+1.
    pub m: Vec<usize>,
}

pub fn build_time_indexed(inst: &Instance) -> Result<TimeIndexedModel, TimeIndexedError> {
    let violations = validate(inst);
    if !violations.is_empty() {
        return Err(TimeIndexedError::ValidationFailed(violations));
    }
    let t_n = inst.horizon;
    let mut lp = LinearProgram::new();

    let yg: Vec<usize> = (0..t_n).map(|i| lp.add_binary(format!("yG_{}", i + 1), 0.0)).collect();
    let yp: Vec<usize> = (0..t_n).map(|i| lp.add_binary(format!("yP_{}", i + 1), 0.0)).collect();
    let ysc: Option<Vec<usize>> = inst
        .hsc_enabled
        .then(|| (0..t_n).map(|i| lp.add_binary(format!("ySC_{}", i + 1), 0.0)).collect());
    let y: Vec<usize> = (0..t_n).map(|i| lp.add_binary(format!("y_{}", i + 1), 0.0)).collect();
    let u: Vec<usize> =
        (0..t_n).map(|i| lp.add_binary(format!("u_{}", i + 1), inst.startup[i])).collect();
    let d: Vec<usize> =
        (0..t_n).map(|i| lp.add_binary(format!("d_{}", i + 1), inst.shutdown[i])).collect();
    let h_out: Vec<usize> = (0..t_n)
        .map(|i| {
            let obj = -inst.prices[i] + inst.water_value * inst.eff_gen[i];
            lp.add_var(format!("Hout_{}", i + 1), 0.0, inst.gen_max[i], obj)
        })
        .collect();
    let h_in: Vec<usize> = (0..t_n)
        .map(|i| {
            let obj = inst.prices[i] - inst.water_value * inst.eff_pump[i];
            lp.add_var(format!("Hin_{}", i + 1), 0.0, inst.pump_max[i], obj)
        })
        .collect();
    let m: Vec<usize> = (0..=t_n)
        .map(|i| lp.add_var(format!("M_{}", i + 1), 0.0, inst.capacity, 0.0))
        .collect();
    let phi_g: Vec<usize> = (0..t_n)
        .map(|i| lp.add_var(format!("phiG_{}", i + 1), f64::NEG_INFINITY, f64::INFINITY, 1.0))
        .collect();
    let phi_p: Vec<usize> = (0..t_n)
        .map(|i| lp.add_var(format!("phiP_{}", i + 1), f64::NEG_INFINITY, f64::INFINITY, 1.0))
        .collect();

    // Initial and terminal reservoir levels as bound pins.
    lp.variables[m[0]].lower = inst.initial_level;
    lp.variables[m[0]].upper = inst.initial_level;
    if let Some(term) = inst.terminal_level {
        lp.variables[m[t_n]].lower = term;
        lp.variables[m[t_n]].upper = term;
    }
    // Unit starts offline; the initial counter keeps it offline longer.
    for i in 0..(inst.first_start_stage() - 1).min(t_n) {
        lp.variables[y[i]].upper = 0.0;
    }

    // Minimum up/down windows.
    for t in inst.min_up..=t_n {
        let mut coeffs: Vec<(usize, f64)> =
            (t - inst.min_up + 1..=t).map(|tau| (u[tau - 1], 1.0)).collect();
        coeffs.push((y[t - 1], -1.0));
        lp.add_row(format!("minup_{t}"), coeffs, Relation::Le, 0.0);
    }
    for t in inst.min_down..=t_n {
        let mut coeffs: Vec<(usize, f64)> =
            (t - inst.min_down + 1..=t).map(|tau| (d[tau - 1], 1.0)).collect();
        coeffs.push((y[t - 1], 1.0));
        lp.add_row(format!("mindown_{t}"), coeffs, Relation::Le, 1.0);
    }
    // Start/stop linking, with y_0 = 0.
    for i in 0..t_n {
        let mut up = vec![(y[i], 1.0), (u[i], -1.0)];
        let mut down = vec![(y[i], -1.0), (d[i], -1.0)];
        if i > 0 {
            up.push((y[i - 1], -1.0));
            down.push((y[i - 1], 1.0));
        }
        lp.add_row(format!("startup_{}", i + 1), up, Relation::Le, 0.0);
        lp.add_row(format!("shutdown_{}", i + 1), down, Relation::Le, 0.0);
    }
    // Aggregate status.
    for i in 0..t_n {
        let mut coeffs = vec![(yg[i], 1.0), (yp[i], 1.0)];
        if let Some(ysc) = &ysc {
            coeffs.push((ysc[i], 1.0));
        }
        coeffs.push((y[i], -1.0));
        lp.add_row(format!("status_{}", i + 1), coeffs, Relation::Eq, 0.0);
    }
    // Run-length cap: no j_max+1 consecutive stages in one online mode.
    if inst.j_max < t_n {
        let families: Vec<(&str, &Vec<usize>)> = match &ysc {
            Some(ysc) => vec![("G", &yg), ("P", &yp), ("SC", ysc)],
            None => vec![("G", &yg), ("P", &yp)],
        };
        for (tag, fam) in families {
            for start in 0..=(t_n - inst.j_max - 1) {
                let coeffs: Vec<(usize, f64)> =
                    (start..=start + inst.j_max).map(|k| (fam[k], 1.0)).collect();
                lp.add_row(
                    format!("runcap_{tag}_{}", start + 1),
                    coeffs,
                    Relation::Le,
                    inst.j_max as f64,
                );
            }
        }
    }
    // Mass balance.
    for i in 0..t_n {
        lp.add_row(
            format!("mass_{}", i + 1),
            vec![
                (m[i + 1], 1.0),
                (m[i], -1.0),
                (h_out[i], inst.eff_gen[i]),
                (h_in[i], -inst.eff_pump[i]),
            ],
            Relation::Eq,
            inst.inflow[i] - inst.spillage[i],
        );
    }
    // Mode-gated flow bounds and ramping. Under HSC, the turbine gates are
    // yG + ySC and the pump gates are yP + ySC.
    let turbine_gate = |i: usize| -> Vec<(usize, f64)> {
        let mut g = vec![(yg[i], 1.0)];
        if let Some(ysc) = &ysc {
            g.push((ysc[i], 1.0));
        }
        g
    };
    let pump_gate = |i: usize| -> Vec<(usize, f64)> {
        let mut g = vec![(yp[i], 1.0)];
        if let Some(ysc) = &ysc {
            g.push((ysc[i], 1.0));
        }
        g
    };
    for i in 0..t_n {
        let mut hi = vec![(h_out[i], 1.0)];
        hi.extend(turbine_gate(i).into_iter().map(|(v, c)| (v, -c * inst.gen_max[i])));
        lp.add_row(format!("genmax_{}", i + 1), hi, Relation::Le, 0.0);
        let mut lo = vec![(h_out[i], 1.0)];
        lo.extend(turbine_gate(i).into_iter().map(|(v, c)| (v, -c * inst.gen_min[i])));
        lp.add_row(format!("genmin_{}", i + 1), lo, Relation::Ge, 0.0);

        let mut hi = vec![(h_in[i], 1.0)];
        hi.extend(pump_gate(i).into_iter().map(|(v, c)| (v, -c * inst.pump_max[i])));
        lp.add_row(format!("pumpmax_{}", i + 1), hi, Relation::Le, 0.0);
        let mut lo = vec![(h_in[i], 1.0)];
        lo.extend(pump_gate(i).into_iter().map(|(v, c)| (v, -c * inst.pump_min[i])));
        lp.add_row(format!("pumpmin_{}", i + 1), lo, Relation::Ge, 0.0);
    }
    for i in 0..t_n {
        // Ramp-up gated by the current stage's turbine commitment.
        let mut up = vec![(h_out[i], 1.0)];
        if i > 0 {
            up.push((h_out[i - 1], -1.0));
        }
        up.extend(turbine_gate(i).into_iter().map(|(v, c)| (v, -c * inst.ramp_limit)));
        lp.add_row(format!("rampup_{}", i + 1), up, Relation::Le, 0.0);
        // Ramp-down gated by the previous stage's turbine commitment.
        if i > 0 {
            let mut down = vec![(h_out[i - 1], 1.0), (h_out[i], -1.0)];
            down.extend(turbine_gate(i - 1).into_iter().map(|(v, c)| (v, -c * inst.ramp_limit)));
            lp.add_row(format!("rampdown_{}", i + 1), down, Relation::Le, 0.0);
        }
    }
    if inst.terminal_ramp_zero {
        lp.add_row(
            "terminal_ramp".to_string(),
            vec![(h_out[t_n - 1], 1.0)],
            Relation::Le,
            inst.ramp_limit,
        );
    }
    // Physical-cost epigraphs, intercepts gated by commitment so offline
    // stages cost zero.
    for i in 0..t_n {
        for (p, piece) in inst.gen_cost_pieces[i].iter().enumerate() {
            let mut coeffs = vec![(phi_g[i], 1.0), (h_out[i], -piece.slope)];
            coeffs.extend(turbine_gate(i).into_iter().map(|(v, c)| (v, -c * piece.intercept)));
            lp.add_row(format!("phiG_{}_{p}", i + 1), coeffs, Relation::Ge, 0.0);
        }
        for (p, piece) in inst.pump_cost_pieces[i].iter().enumerate() {
            let mut coeffs = vec![(phi_p[i], 1.0), (h_in[i], -piece.slope)];
            coeffs.extend(pump_gate(i).into_iter().map(|(v, c)| (v, -c * piece.intercept)));
            lp.add_row(format!("phiP_{}_{p}", i + 1), coeffs, Relation::Ge, 0.0);
        }
        // Keep phi at zero when the mode is off.
        lp.add_row(format!("phiG0_{}", i + 1), vec![(phi_g[i], 1.0)], Relation::Ge, 0.0);
        lp.add_row(format!("phiP0_{}", i + 1), vec![(phi_p[i], 1.0)], Relation::Ge, 0.0);
    }

    Ok(TimeIndexedModel { lp, yg, yp, ysc, y, u, d, h_out, h_in, m })
}

/// Reads a schedule off an integral solution of the time-indexed model.
pub fn extract_schedule(
    model: &TimeIndexedModel,
    sol: &LpSolution,
    inst: &Instance,
) -> Result<Schedule, TimeIndexedError> {
    let x = &sol.x;
    let is_one = |j: usize| -> Result<bool, TimeIndexedError> {
        let v = x[j];
        if (v - v.round()).abs() > INTEGRALITY_TOL {
            return Err(TimeIndexedError::FractionalBinaries);
        }
        Ok(v.round() == 1.0)
    };
    let t_n = inst.horizon;
    let mut modes = Vec::with_capacity(t_n);
    let mut h_out = Vec::with_capacity(t_n);
    let mut h_in = Vec::with_capacity(t_n);
    for i in 0..t_n {
        let g = is_one(model.yg[i])?;
        let p = is_one(model.yp[i])?;
        let sc = match &model.ysc {
            Some(ysc) => is_one(ysc[i])?,
            None => false,
        };
        is_one(model.y[i])?;
        is_one(model.u[i])?;
        is_one(model.d[i])?;
        let mode = match (g, p, sc) {
            (true, false, false) => Mode::Gen,
            (false, true, false) => Mode::Pump,
            (false, false, true) => Mode::Sc,
            (false, false, false) => Mode::Off,
            _ => return Err(TimeIndexedError::FractionalBinaries),
        };
        modes.push(mode);
        h_out.push(if mode.uses_turbine() { x[model.h_out[i]] } else { 0.0 });
        h_in.push(if mode.uses_pump() { x[model.h_in[i]] } else { 0.0 });
    }
    Ok(assemble(inst, &modes, &h_out, &h_in))
}

/// Builds and solves the benchmark; returns the schedule and solver stats.
pub fn solve_milp(
    inst: &Instance,
    opts: &MipOptions,
) -> Result<(Option<Schedule>, MipSolution), TimeIndexedError> {
    let model = build_time_indexed(inst)?;
    let mip = solve_binary_mip_with(&model.lp, opts)?;
    let schedule = if mip.solution.is_optimal() {
        Some(extract_schedule(&model, &mip.solution, inst)?)
    } else {
        None
    };
    Ok((schedule, mip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::load_instance;
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
                "reservoir": { "capacity": 900.0, "initial": 450.0 }
            })
            .to_string(),
        )
        .unwrap()
    }

    #[test]
    fn binary_count_is_five_families() {
        let mut inst = toy();
        inst.horizon = 24;
        let stretch = |v: &mut Vec<f64>| *v = vec![v[0]; 24];
        stretch(&mut inst.prices);
        stretch(&mut inst.gen_min);
        stretch(&mut inst.gen_max);
        stretch(&mut inst.pump_min);
        stretch(&mut inst.pump_max);
        stretch(&mut inst.eff_gen);
        stretch(&mut inst.eff_pump);
        stretch(&mut inst.inflow);
        stretch(&mut inst.spillage);
        stretch(&mut inst.startup);
        stretch(&mut inst.shutdown);
        inst.gen_cost_pieces = vec![inst.gen_cost_pieces[0].clone(); 24];
        inst.pump_cost_pieces = vec![inst.pump_cost_pieces[0].clone(); 24];
        inst.j_max = 24;
        let model = build_time_indexed(&inst).unwrap();
        let binaries = model.lp.variables.iter().filter(|v| v.binary).count();
        assert_eq!(binaries, 5 * 24);
        let mass_rows =
            model.lp.constraints.iter().filter(|c| c.name.starts_with("mass_")).count();
        assert_eq!(mass_rows, 24);
    }

    #[test]
    fn zero_cost_instance_stays_offline() {
        let mut inst = toy();
        inst.prices = vec![0.0, 0.0];
        let (schedule, mip) = solve_milp(&inst, &MipOptions::default()).unwrap();
        assert!((mip.solution.objective).abs() < 1e-9);
        let s = schedule.unwrap();
        assert_eq!(evaluate_schedule_cost(&s, &inst).unwrap(), 0.0);
    }

    #[test]
    fn toy_optimum_matches_closed_form() {
        let inst = toy();
        let (schedule, mip) = solve_milp(&inst, &MipOptions::default()).unwrap();
        assert!(
            (mip.solution.objective + 25000.0).abs() < 1e-6,
            "objective {}",
            mip.solution.objective
        );
        let s = schedule.unwrap();
        assert_eq!(s.stages.iter().map(|r| r.mode).collect::<Vec<_>>(), vec![Mode::Gen, Mode::Gen]);
        assert!((s.stages[0].h_out - 50.0).abs() < 1e-6);
        assert!((s.stages[1].h_out - 100.0).abs() < 1e-6);
        assert!((s.stages[1].level - 400.0).abs() < 1e-6);
        assert!((s.final_level - 300.0).abs() < 1e-6);
        let audited = evaluate_schedule_cost(&s, &inst).unwrap();
        assert!((audited - mip.solution.objective).abs() < 1e-6);
    }

    #[test]
    fn fractional_binaries_are_rejected() {
        let inst = toy();
        let model = build_time_indexed(&inst).unwrap();
        let mut sol = crate::lp::solve_lp(&model.lp).unwrap();
        sol.x[model.yg[0]] = 0.5;
        match extract_schedule(&model, &sol, &inst) {
            Err(TimeIndexedError::FractionalBinaries) => {}
            other => panic!("expected FractionalBinaries, got {other:?}"),
        }
    }

    #[test]
    fn invalid_instance_is_refused() {
        let mut inst = toy();
        inst.min_up = 0;
        match build_time_indexed(&inst) {
            Err(TimeIndexedError::ValidationFailed(_)) => {}
            other => panic!("expected ValidationFailed, got {other:?}"),
        }
    }
}
