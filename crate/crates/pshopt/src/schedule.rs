//! Stage-by-stage operating schedules and the independent cost audit.
//!
//! `evaluate_schedule_cost` recomputes the objective of a schedule from the
//! instance data alone, with no solver involvement; every method's output is
//! audited through it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub mode: Mode,
    /// Generation output, MW.
    pub h_out: f64,
    /// Pumping power draw, MW.
    pub h_in: f64,
    /// Reservoir level at the start of the stage, MWh-equivalent.
    pub level: f64,
    pub started: bool,
    pub stopped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Purchases minus sales at market price.
    pub energy_net: f64,
    pub startup: f64,
    pub shutdown: f64,
    /// Piecewise-linear physical operating cost.
    pub physical: f64,
    /// Water released minus stored, at the marginal water value.
    pub water_value: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.energy_net + self.startup + self.shutdown + self.physical + self.water_value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub stages: Vec<StageRow>,
    /// Reservoir level after the last stage.
    pub final_level: f64,
    pub total_cost: f64,
    pub breakdown: CostBreakdown,
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),
}

fn piecewise(pieces: &[crate::instance::CostPiece], h: f64) -> f64 {
    pieces.iter().map(|p| p.slope * h + p.intercept).fold(f64::NEG_INFINITY, f64::max)
}

/// Start/stop indicators implied by the mode sequence (unit starts offline).
pub fn transitions(modes: &[Mode]) -> Vec<(bool, bool)> {
    let mut out = Vec::with_capacity(modes.len());
    let mut prev_online = false;
    for m in modes {
        let online = m.is_online();
        out.push((online && !prev_online, !online && prev_online));
        prev_online = online;
    }
    out
}

/// Recomputes the total objective of `s` on `inst`, verifying feasibility.
///
/// Checks run at 1e-6 absolute tolerance; the returned value is exact
/// arithmetic on the stored trajectory.
pub fn evaluate_schedule_cost(s: &Schedule, inst: &Instance) -> Result<f64, ScheduleError> {
    const TOL: f64 = 1e-6;
    let t_n = inst.horizon;
    if s.stages.len() != t_n {
        return Err(ScheduleError::InfeasibleSchedule(format!(
            "schedule has {} stages, instance horizon is {t_n}",
            s.stages.len()
        )));
    }
    let err = |msg: String| Err(ScheduleError::InfeasibleSchedule(msg));

    // Flow/mode consistency, bounds, storage limits.
    for (i, row) in s.stages.iter().enumerate() {
        let t = i + 1;
        if row.mode == Mode::Sc && !inst.hsc_enabled {
            return err(format!("SC mode at t={t} on a non-HSC instance"));
        }
        if row.mode.uses_turbine() {
            if row.h_out < inst.gen_min[i] - TOL || row.h_out > inst.gen_max[i] + TOL {
                return err(format!("generation bound at t={t}: H_out={}", row.h_out));
            }
        } else if row.h_out.abs() > TOL {
            return err(format!("nonzero generation at t={t} in mode {}", row.mode));
        }
        if row.mode.uses_pump() {
            if row.h_in < inst.pump_min[i] - TOL || row.h_in > inst.pump_max[i] + TOL {
                return err(format!("pumping bound at t={t}: H_in={}", row.h_in));
            }
        } else if row.h_in.abs() > TOL {
            return err(format!("nonzero pumping at t={t} in mode {}", row.mode));
        }
        if row.level < -TOL || row.level > inst.capacity + TOL {
            return err(format!("storage bound at t={t}: M={}", row.level));
        }
    }
    if s.final_level < -TOL || s.final_level > inst.capacity + TOL {
        return err(format!("terminal storage bound: M={}", s.final_level));
    }

    // Mass balance and boundary levels.
    if (s.stages[0].level - inst.initial_level).abs() > TOL {
        return err(format!("initial level is {}, expected {}", s.stages[0].level, inst.initial_level));
    }
    for i in 0..t_n {
        let next = if i + 1 < t_n { s.stages[i + 1].level } else { s.final_level };
        let predicted = s.stages[i].level - inst.eff_gen[i] * s.stages[i].h_out - inst.spillage[i]
            + inst.inflow[i]
            + inst.eff_pump[i] * s.stages[i].h_in;
        if (next - predicted).abs() > TOL {
            return err(format!("mass balance at t={}: {} vs {}", i + 1, next, predicted));
        }
    }
    if let Some(term) = inst.terminal_level {
        if (s.final_level - term).abs() > TOL {
            return err(format!("terminal level is {}, expected {term}", s.final_level));
        }
    }

    // Turbine ramping, initialized at zero output before stage 1.
    let mut prev_h = 0.0;
    for (i, row) in s.stages.iter().enumerate() {
        if row.h_out - prev_h > inst.ramp_limit + TOL {
            return err(format!("ramp-up at t={}", i + 1));
        }
        if prev_h - row.h_out > inst.ramp_limit + TOL {
            return err(format!("ramp-down at t={}", i + 1));
        }
        prev_h = row.h_out;
    }
    if inst.terminal_ramp_zero && prev_h > inst.ramp_limit + TOL {
        return err(format!("terminal ramp-down: H_out at T is {prev_h}"));
    }

    // Minimum up/down times on maximal runs; runs truncated by the horizon
    // are exempt, and the leading offline run must cover the initial counter.
    let modes: Vec<Mode> = s.stages.iter().map(|r| r.mode).collect();
    let mut i = 0;
    while i < t_n {
        let mut j = i;
        let online = modes[i].is_online();
        while j < t_n && modes[j].is_online() == online {
            j += 1;
        }
        let len = j - i;
        if j < t_n {
            if online && len < inst.min_up {
                return err(format!("online run of {len} < min-up {} at t={}", inst.min_up, i + 1));
            }
            if !online && i > 0 && len < inst.min_down {
                return err(format!("offline run of {len} < min-down {} at t={}", inst.min_down, i + 1));
            }
        }
        if !online && i == 0 && j < t_n && j + 1 < inst.first_start_stage() {
            return err(format!("first start-up at t={} inside the initial counter", j + 1));
        }
        if i == 0 && online && inst.first_start_stage() > 1 {
            return err("unit online at t=1 inside the initial counter".into());
        }
        i = j;
    }
    // Run-length cap per maximal same-mode segment.
    let mut i = 0;
    while i < t_n {
        let mut j = i;
        while j < t_n && modes[j] == modes[i] {
            j += 1;
        }
        if modes[i].is_online() && j - i > inst.j_max {
            return err(format!("mode run of {} > j_max {} at t={}", j - i, inst.j_max, i + 1));
        }
        i = j;
    }

    // Start/stop indicators must match the mode sequence.
    for (i, (u, d)) in transitions(&modes).iter().enumerate() {
        if s.stages[i].started != *u || s.stages[i].stopped != *d {
            return err(format!("start/stop indicators at t={} disagree with modes", i + 1));
        }
    }

    Ok(cost_of(&s.stages, inst).total())
}

/// Exact objective of a trajectory, split by term. Performs no checks.
pub fn cost_of(stages: &[StageRow], inst: &Instance) -> CostBreakdown {
    let mut b = CostBreakdown::default();
    for (i, row) in stages.iter().enumerate() {
        b.energy_net += inst.prices[i] * (row.h_in - row.h_out);
        b.water_value +=
            inst.water_value * (inst.eff_gen[i] * row.h_out - inst.eff_pump[i] * row.h_in);
        if row.mode.uses_turbine() {
            b.physical += piecewise(&inst.gen_cost_pieces[i], row.h_out);
        }
        if row.mode.uses_pump() {
            b.physical += piecewise(&inst.pump_cost_pieces[i], row.h_in);
        }
        if row.started {
            b.startup += inst.startup[i];
        }
        if row.stopped {
            b.shutdown += inst.shutdown[i];
        }
    }
    b
}

/// Builds a [`Schedule`] from per-stage modes and flows, computing levels and
/// indicators from the instance.
pub fn assemble(inst: &Instance, modes: &[Mode], h_out: &[f64], h_in: &[f64]) -> Schedule {
    let trans = transitions(modes);
    let mut level = inst.initial_level;
    let mut stages = Vec::with_capacity(modes.len());
    for i in 0..modes.len() {
        stages.push(StageRow {
            mode: modes[i],
            h_out: h_out[i],
            h_in: h_in[i],
            level,
            started: trans[i].0,
            stopped: trans[i].1,
        });
        level += inst.inflow[i] - inst.spillage[i] - inst.eff_gen[i] * h_out[i]
            + inst.eff_pump[i] * h_in[i];
    }
    let breakdown = cost_of(&stages, inst);
    Schedule { stages, final_level: level, total_cost: breakdown.total(), breakdown }
}

impl Schedule {
    /// Per-stage objective contribution, including start/stop charges.
    pub fn stage_cost(&self, inst: &Instance, i: usize) -> f64 {
        let row = &self.stages[i];
        let mut c = inst.prices[i] * (row.h_in - row.h_out)
            + inst.water_value * (inst.eff_gen[i] * row.h_out - inst.eff_pump[i] * row.h_in);
        if row.mode.uses_turbine() {
            c += piecewise(&inst.gen_cost_pieces[i], row.h_out);
        }
        if row.mode.uses_pump() {
            c += piecewise(&inst.pump_cost_pieces[i], row.h_in);
        }
        if row.started {
            c += inst.startup[i];
        }
        if row.stopped {
            c += inst.shutdown[i];
        }
        c
    }

    pub fn to_csv(&self, inst: &Instance) -> String {
        let mut out = String::from("t,mode,H_out_MW,H_in_MW,M_MWh,u,d,stage_cost\n");
        for (i, row) in self.stages.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                i + 1,
                row.mode,
                row.h_out,
                row.h_in,
                row.level,
                row.started as u8,
                row.stopped as u8,
                self.stage_cost(inst, i)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::load_instance;

    fn toy() -> Instance {
        load_instance(
            &serde_json::json!({
                "horizon": 2,
                "prices": [100.0, 200.0],
                "gen_bounds": [40.0, 130.0],
                "pump_bounds": [0.0, 130.0],
                "ramp_limit": 50.0,
                "efficiency_gen": 1.0,
                "efficiency_pump": 0.75,
                "reservoir": { "capacity": 900.0, "initial": 450.0 }
            })
            .to_string(),
        )
        .unwrap()
    }

    #[test]
    fn all_offline_costs_zero() {
        let inst = toy();
        let s = assemble(&inst, &[Mode::Off, Mode::Off], &[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(evaluate_schedule_cost(&s, &inst).unwrap(), 0.0);
    }

    #[test]
    fn toy_optimum_evaluates_exactly() {
        let inst = toy();
        let s = assemble(&inst, &[Mode::Gen, Mode::Gen], &[50.0, 100.0], &[0.0, 0.0]);
        assert_eq!(evaluate_schedule_cost(&s, &inst).unwrap(), -25000.0);
        assert_eq!(s.stages[1].level, 400.0);
        assert_eq!(s.final_level, 300.0);
    }

    #[test]
    fn ramp_jump_is_rejected() {
        let inst = toy();
        let s = assemble(&inst, &[Mode::Gen, Mode::Gen], &[130.0, 130.0], &[0.0, 0.0]);
        match evaluate_schedule_cost(&s, &inst) {
            Err(ScheduleError::InfeasibleSchedule(msg)) => {
                assert!(msg.contains("ramp-up at t=1"), "{msg}");
            }
            other => panic!("expected ramp violation, got {other:?}"),
        }
    }

    #[test]
    fn csv_has_expected_header_and_rows() {
        let inst = toy();
        let s = assemble(&inst, &[Mode::Gen, Mode::Gen], &[50.0, 100.0], &[0.0, 0.0]);
        let csv = s.to_csv(&inst);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,mode,H_out_MW,H_in_MW,M_MWh,u,d,stage_cost");
        assert_eq!(lines.next().unwrap(), "1,G,50,0,450,1,0,-5000");
        assert_eq!(lines.next().unwrap(), "2,G,100,0,400,0,0,-20000");
    }
}
