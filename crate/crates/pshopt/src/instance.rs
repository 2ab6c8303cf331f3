//! Problem data model: instance schema, validation and grid construction.
//!
//! Instances are stored on disk as UTF-8 JSON. Every per-stage quantity may be
//! given either as a scalar (broadcast to all stages) or as a length-`T`
//! array. The exact schema is documented in the repository README; golden
//! files live under `instances/`.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Operating modes of the unit. The declaration order (`G < P < SC < O`) is
/// the deterministic tie-break order used by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Generating.
    Gen,
    /// Pumping.
    Pump,
    /// Hydraulic short circuit: simultaneous generating and pumping.
    Sc,
    /// Offline.
    Off,
}

impl Mode {
    /// True for modes that count as "online" for min-up/down purposes.
    pub fn is_online(self) -> bool {
        !matches!(self, Mode::Off)
    }

    /// True when the turbine is discharging (ramping constraints apply).
    pub fn uses_turbine(self) -> bool {
        matches!(self, Mode::Gen | Mode::Sc)
    }

    /// True when the pump is drawing power.
    pub fn uses_pump(self) -> bool {
        matches!(self, Mode::Pump | Mode::Sc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Gen => "G",
            Mode::Pump => "P",
            Mode::Sc => "SC",
            Mode::Off => "O",
        }
    }

    pub fn from_str_opt(s: &str) -> Option<Mode> {
        match s {
            "G" => Some(Mode::Gen),
            "P" => Some(Mode::Pump),
            "SC" => Some(Mode::Sc),
            "O" => Some(Mode::Off),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One affine piece `a * H + b` of a convex piecewise-linear operating cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPiece {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unit/range error: {0}")]
    UnitRange(String),
    #[error("grid excludes boundary value: {0}")]
    GridExcludesBoundary(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Explicitly listed discretization grids, as given in the instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawGrids {
    pub reservoir: Vec<f64>,
    pub ramp: Vec<f64>,
}

/// All physical and economic parameters of one PSH scheduling problem.
///
/// Stage duration is fixed at one hour, so energy (MWh) and power (MW) are
/// numerically interchangeable. Reservoir quantities are in MWh-equivalent.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Number of stages `T`.
    pub horizon: usize,
    /// Electricity price per stage, $/MWh.
    pub prices: Vec<f64>,
    /// Generation output bounds per stage, MW.
    pub gen_min: Vec<f64>,
    pub gen_max: Vec<f64>,
    /// Pumping power bounds per stage, MW.
    pub pump_min: Vec<f64>,
    pub pump_max: Vec<f64>,
    /// Turbine ramp limit, MW per stage.
    pub ramp_limit: f64,
    /// Generation efficiency: MWh water released per MWh electric.
    pub eff_gen: Vec<f64>,
    /// Pumping efficiency: MWh water stored per MWh electric.
    pub eff_pump: Vec<f64>,
    /// Reservoir capacity, MWh-equivalent.
    pub capacity: f64,
    pub initial_level: f64,
    pub terminal_level: Option<f64>,
    /// When true, a generating/SC block ending at the horizon must ramp down
    /// to the ramp limit so the unit can reach zero output after stage `T`.
    pub terminal_ramp_zero: bool,
    /// Natural inflow and spillage per stage, MWh-equivalent.
    pub inflow: Vec<f64>,
    pub spillage: Vec<f64>,
    /// Minimum up and down times, stages.
    pub min_up: usize,
    pub min_down: usize,
    /// Remaining initial min-down stages before the first start-up.
    pub initial_tau: usize,
    /// Start-up and shut-down costs per stage, $.
    pub startup: Vec<f64>,
    pub shutdown: Vec<f64>,
    /// Marginal water value, $/MWh-equivalent.
    pub water_value: f64,
    /// Convex piecewise-linear physical costs, one piece list per stage.
    pub gen_cost_pieces: Vec<Vec<CostPiece>>,
    pub pump_cost_pieces: Vec<Vec<CostPiece>>,
    /// Maximum length (stages) of a generating/pumping/SC run.
    pub j_max: usize,
    /// When set, the mode set is {G, P, SC, O}.
    pub hsc_enabled: bool,
    /// Pin the last within-event output to the (zero) exit boundary on
    /// switches to pumping/offline instead of capping it at the ramp limit.
    /// Off by default; exists for A/B comparison of the two conventions.
    pub strict_terminal: bool,
    /// Explicit discretization grids, if the file lists any.
    pub grids: Option<RawGrids>,
}

impl Instance {
    /// `τ_max = max{L-1, l-1}`.
    pub fn tau_max(&self) -> usize {
        (self.min_up - 1).max(self.min_down - 1)
    }

    /// Uniform upper bound on generation output across stages.
    pub fn gen_output_cap(&self) -> f64 {
        self.gen_max.iter().cloned().fold(0.0, f64::max)
    }

    /// Net exogenous reservoir drift over stages `t..j` (0-based, exclusive).
    pub fn drift(&self, t: usize, j: usize) -> f64 {
        (t..j).map(|i| self.inflow[i] - self.spillage[i]).sum()
    }

    /// First stage at which the unit may come online. With a zero initial
    /// counter the unit may start immediately; a counter of `k >= 1` keeps it
    /// offline through stage `k+1` (the current offline stage plus `k` more).
    pub fn first_start_stage(&self) -> usize {
        if self.initial_tau == 0 {
            1
        } else {
            self.initial_tau + 2
        }
    }

    /// Modes available on this instance.
    pub fn modes(&self) -> &'static [Mode] {
        if self.hsc_enabled {
            &[Mode::Gen, Mode::Pump, Mode::Sc, Mode::Off]
        } else {
            &[Mode::Gen, Mode::Pump, Mode::Off]
        }
    }

    /// Stable hash of the canonical serialized form, used to key arc caches.
    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.to_json().to_string().hash(&mut h);
        h.finish()
    }
}

fn field<'a>(doc: &'a Value, key: &str) -> Result<&'a Value, InstanceError> {
    doc.get(key)
        .ok_or_else(|| InstanceError::MissingField(key.to_string()))
}

fn as_f64(v: &Value, ctx: &str) -> Result<f64, InstanceError> {
    v.as_f64()
        .ok_or_else(|| InstanceError::MalformedDocument(format!("`{ctx}` is not a number")))
}

/// Scalar-or-vector broadcast to a length-`t` vector.
fn broadcast(v: &Value, t: usize, ctx: &str) -> Result<Vec<f64>, InstanceError> {
    match v {
        Value::Number(_) => Ok(vec![as_f64(v, ctx)?; t]),
        Value::Array(items) => {
            if items.len() != t {
                return Err(InstanceError::MalformedDocument(format!(
                    "`{ctx}` has length {} but horizon is {t}",
                    items.len()
                )));
            }
            items.iter().map(|x| as_f64(x, ctx)).collect()
        }
        _ => Err(InstanceError::MalformedDocument(format!(
            "`{ctx}` must be a number or an array"
        ))),
    }
}

/// Bounds are `[lo, hi]`, or a length-`T` array of such pairs.
fn broadcast_bounds(v: &Value, t: usize, ctx: &str) -> Result<(Vec<f64>, Vec<f64>), InstanceError> {
    let items = v.as_array().ok_or_else(|| {
        InstanceError::MalformedDocument(format!("`{ctx}` must be [lo, hi] or an array of pairs"))
    })?;
    let pair = |p: &Value| -> Result<(f64, f64), InstanceError> {
        let a = p.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
            InstanceError::MalformedDocument(format!("`{ctx}` entries must be [lo, hi] pairs"))
        })?;
        Ok((as_f64(&a[0], ctx)?, as_f64(&a[1], ctx)?))
    };
    if items.len() == 2 && items[0].is_number() {
        let (lo, hi) = (as_f64(&items[0], ctx)?, as_f64(&items[1], ctx)?);
        return Ok((vec![lo; t], vec![hi; t]));
    }
    if items.len() != t {
        return Err(InstanceError::MalformedDocument(format!(
            "`{ctx}` has length {} but horizon is {t}",
            items.len()
        )));
    }
    let mut lo = Vec::with_capacity(t);
    let mut hi = Vec::with_capacity(t);
    for p in items {
        let (a, b) = pair(p)?;
        lo.push(a);
        hi.push(b);
    }
    Ok((lo, hi))
}

/// Cost pieces: `[[a, b], ...]` broadcast, or one such list per stage.
fn broadcast_pieces(
    v: Option<&Value>,
    t: usize,
    ctx: &str,
) -> Result<Vec<Vec<CostPiece>>, InstanceError> {
    let Some(v) = v else {
        return Ok(vec![vec![CostPiece { slope: 0.0, intercept: 0.0 }]; t]);
    };
    let items = v.as_array().ok_or_else(|| {
        InstanceError::MalformedDocument(format!("`{ctx}` must be an array of [a, b] pairs"))
    })?;
    let parse_list = |list: &[Value]| -> Result<Vec<CostPiece>, InstanceError> {
        list.iter()
            .map(|p| {
                let a = p.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                    InstanceError::MalformedDocument(format!("`{ctx}` pieces must be [a, b]"))
                })?;
                Ok(CostPiece { slope: as_f64(&a[0], ctx)?, intercept: as_f64(&a[1], ctx)? })
            })
            .collect()
    };
    let per_stage = !items.is_empty()
        && items[0].as_array().is_some_and(|a| !a.is_empty() && a[0].is_array());
    if per_stage {
        if items.len() != t {
            return Err(InstanceError::MalformedDocument(format!(
                "`{ctx}` has {} stage entries but horizon is {t}",
                items.len()
            )));
        }
        items
            .iter()
            .map(|s| parse_list(s.as_array().unwrap()))
            .collect()
    } else {
        let pieces = parse_list(items)?;
        if pieces.is_empty() {
            return Err(InstanceError::MalformedDocument(format!("`{ctx}` must not be empty")));
        }
        Ok(vec![pieces; t])
    }
}

/// Parses an instance document. Numbers are IEEE doubles; parsing is
/// locale-independent (JSON). Range checks are deferred to [`validate`].
pub fn load_instance(source: &str) -> Result<Instance, InstanceError> {
    let doc: Value = serde_json::from_str(source)
        .map_err(|e| InstanceError::MalformedDocument(e.to_string()))?;
    let t = field(&doc, "horizon")?
        .as_u64()
        .ok_or_else(|| InstanceError::MalformedDocument("`horizon` must be an integer".into()))?
        as usize;
    if t == 0 {
        return Err(InstanceError::MalformedDocument("`horizon` must be >= 1".into()));
    }
    let reservoir = field(&doc, "reservoir")?;
    let capacity = as_f64(field(reservoir, "capacity")?, "reservoir.capacity")?;
    let initial_level = as_f64(field(reservoir, "initial")?, "reservoir.initial")?;
    let terminal_level = match reservoir.get("terminal") {
        None | Some(Value::Null) => None,
        Some(v) => Some(as_f64(v, "reservoir.terminal")?),
    };
    let (gen_min, gen_max) = broadcast_bounds(field(&doc, "gen_bounds")?, t, "gen_bounds")?;
    let (pump_min, pump_max) = broadcast_bounds(field(&doc, "pump_bounds")?, t, "pump_bounds")?;
    let opt_vec = |key: &str, default: f64| -> Result<Vec<f64>, InstanceError> {
        match doc.get(key) {
            None | Some(Value::Null) => Ok(vec![default; t]),
            Some(v) => broadcast(v, t, key),
        }
    };
    let opt_usize = |key: &str, default: usize| -> Result<usize, InstanceError> {
        match doc.get(key) {
            None | Some(Value::Null) => Ok(default),
            Some(v) => v.as_u64().map(|x| x as usize).ok_or_else(|| {
                InstanceError::MalformedDocument(format!("`{key}` must be an integer"))
            }),
        }
    };
    let grids = match doc.get("grids") {
        None | Some(Value::Null) => None,
        Some(v) => Some(RawGrids {
            reservoir: broadcast_any_len(field(v, "reservoir")?, "grids.reservoir")?,
            ramp: broadcast_any_len(field(v, "ramp")?, "grids.ramp")?,
        }),
    };
    Ok(Instance {
        horizon: t,
        prices: broadcast(field(&doc, "prices")?, t, "prices")?,
        gen_min,
        gen_max,
        pump_min,
        pump_max,
        ramp_limit: as_f64(field(&doc, "ramp_limit")?, "ramp_limit")?,
        eff_gen: opt_vec("efficiency_gen", 1.0)?,
        eff_pump: opt_vec("efficiency_pump", 1.0)?,
        capacity,
        initial_level,
        terminal_level,
        terminal_ramp_zero: doc
            .get("terminal_ramp_zero")
            .and_then(Value::as_bool)
            .unwrap_or(terminal_level.is_some()),
        inflow: opt_vec("inflow", 0.0)?,
        spillage: opt_vec("spillage", 0.0)?,
        min_up: opt_usize("min_up", 1)?,
        min_down: opt_usize("min_down", 1)?,
        initial_tau: opt_usize("initial_tau", 0)?,
        startup: opt_vec("startup", 0.0)?,
        shutdown: opt_vec("shutdown", 0.0)?,
        water_value: match doc.get("water_value") {
            None | Some(Value::Null) => 0.0,
            Some(v) => as_f64(v, "water_value")?,
        },
        gen_cost_pieces: broadcast_pieces(doc.get("gen_cost_pieces"), t, "gen_cost_pieces")?,
        pump_cost_pieces: broadcast_pieces(doc.get("pump_cost_pieces"), t, "pump_cost_pieces")?,
        j_max: opt_usize("j_max", t)?,
        hsc_enabled: doc.get("hsc").and_then(Value::as_bool).unwrap_or(false),
        strict_terminal: doc.get("strict_terminal_h").and_then(Value::as_bool).unwrap_or(false),
        grids,
    })
}

fn broadcast_any_len(v: &Value, ctx: &str) -> Result<Vec<f64>, InstanceError> {
    v.as_array()
        .ok_or_else(|| InstanceError::MalformedDocument(format!("`{ctx}` must be an array")))?
        .iter()
        .map(|x| as_f64(x, ctx))
        .collect()
}

/// Loads an instance from a file path.
pub fn load_instance_file(path: &Path) -> Result<Instance, InstanceError> {
    load_instance(&std::fs::read_to_string(path)?)
}

impl Instance {
    /// Canonical JSON form: all per-stage quantities written as full vectors.
    /// `load_instance(to_json(..))` reproduces the instance field by field.
    pub fn to_json(&self) -> Value {
        let bounds = |lo: &[f64], hi: &[f64]| -> Value {
            json!(lo.iter().zip(hi).map(|(a, b)| json!([a, b])).collect::<Vec<_>>())
        };
        let pieces = |p: &[Vec<CostPiece>]| -> Value {
            json!(p
                .iter()
                .map(|stage| {
                    json!(stage.iter().map(|c| json!([c.slope, c.intercept])).collect::<Vec<_>>())
                })
                .collect::<Vec<_>>())
        };
        let mut reservoir = json!({ "capacity": self.capacity, "initial": self.initial_level });
        if let Some(term) = self.terminal_level {
            reservoir["terminal"] = json!(term);
        }
        let mut doc = json!({
            "horizon": self.horizon,
            "prices": self.prices,
            "gen_bounds": bounds(&self.gen_min, &self.gen_max),
            "pump_bounds": bounds(&self.pump_min, &self.pump_max),
            "ramp_limit": self.ramp_limit,
            "efficiency_gen": self.eff_gen,
            "efficiency_pump": self.eff_pump,
            "reservoir": reservoir,
            "inflow": self.inflow,
            "spillage": self.spillage,
            "min_up": self.min_up,
            "min_down": self.min_down,
            "initial_tau": self.initial_tau,
            "startup": self.startup,
            "shutdown": self.shutdown,
            "water_value": self.water_value,
            "gen_cost_pieces": pieces(&self.gen_cost_pieces),
            "pump_cost_pieces": pieces(&self.pump_cost_pieces),
            "j_max": self.j_max,
            "hsc": self.hsc_enabled,
            "strict_terminal_h": self.strict_terminal,
            "terminal_ramp_zero": self.terminal_ramp_zero,
        });
        if let Some(g) = &self.grids {
            doc["grids"] = json!({ "reservoir": g.reservoir, "ramp": g.ramp });
        }
        doc
    }
}

/// Report-style validation: returns the list of invariant violations.
pub fn validate(inst: &Instance) -> Vec<String> {
    let mut v = Vec::new();
    let t = inst.horizon;
    for (name, vec) in [
        ("prices", &inst.prices),
        ("gen_min", &inst.gen_min),
        ("gen_max", &inst.gen_max),
        ("pump_min", &inst.pump_min),
        ("pump_max", &inst.pump_max),
        ("efficiency_gen", &inst.eff_gen),
        ("efficiency_pump", &inst.eff_pump),
        ("inflow", &inst.inflow),
        ("spillage", &inst.spillage),
        ("startup", &inst.startup),
        ("shutdown", &inst.shutdown),
    ] {
        if vec.len() != t {
            v.push(format!("{name} has length {} but horizon is {t}", vec.len()));
        }
    }
    for i in 0..t.min(inst.gen_min.len()).min(inst.gen_max.len()) {
        if !(0.0 <= inst.gen_min[i] && inst.gen_min[i] <= inst.gen_max[i]) {
            v.push(format!("generation bounds at stage {} are not 0 <= lo <= hi", i + 1));
        }
    }
    for i in 0..t.min(inst.pump_min.len()).min(inst.pump_max.len()) {
        if !(0.0 <= inst.pump_min[i] && inst.pump_min[i] <= inst.pump_max[i]) {
            v.push(format!("pumping bounds at stage {} are not 0 <= lo <= hi", i + 1));
        }
    }
    if !(inst.ramp_limit > 0.0) {
        v.push("ramp limit must be > 0".into());
    }
    if !(inst.capacity > 0.0) {
        v.push("reservoir capacity must be > 0".into());
    }
    if inst.initial_level < 0.0 || inst.initial_level > inst.capacity {
        v.push("initial level exceeds capacity or is negative".into());
    }
    if let Some(term) = inst.terminal_level {
        if term < 0.0 || term > inst.capacity {
            v.push("terminal level exceeds capacity or is negative".into());
        }
    }
    if inst.min_up < 1 {
        v.push("min-up must be >= 1".into());
    }
    if inst.min_down < 1 {
        v.push("min-down must be >= 1".into());
    }
    if inst.j_max < 1 {
        v.push("j_max must be >= 1".into());
    }
    if inst.gen_cost_pieces.iter().any(|p| p.is_empty()) {
        v.push("gen_cost_pieces must have at least one piece per stage".into());
    }
    if inst.pump_cost_pieces.iter().any(|p| p.is_empty()) {
        v.push("pump_cost_pieces must have at least one piece per stage".into());
    }
    // Convexity of the epigraph max over affine pieces is automatic; no
    // further piecewise-cost check is required.
    v
}

/// Discretization grids for the finite-grid event network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Reservoir boundary points, sorted and distinct, within `[0, capacity]`.
    pub reservoir: Vec<f64>,
    /// Ramping-boundary points, sorted, distinct, containing 0.
    pub ramp: Vec<f64>,
}

impl GridSpec {
    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        serde_json::to_string(self).unwrap().hash(&mut h);
        h.finish()
    }

    /// Index of the grid point matching `x` within `tol`, if any.
    pub fn find(points: &[f64], x: f64, tol: f64) -> Option<usize> {
        let i = points.partition_point(|p| *p < x);
        for cand in [i.wrapping_sub(1), i] {
            if let Some(p) = points.get(cand) {
                if (p - x).abs() <= tol {
                    return Some(cand);
                }
            }
        }
        None
    }
}

fn sort_dedup(mut pts: Vec<f64>) -> Vec<f64> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    pts
}

/// Builds the reservoir/ramp grids at a given refinement level.
///
/// Level 1 returns the instance's explicit grids when present, otherwise
/// uniform defaults. Level `k` subdivides each reservoir interval of the base
/// grid into `k` equal parts; the initial (and terminal, when set) levels are
/// always inserted. The ramp grid is not refined.
pub fn build_grid(inst: &Instance, refinement: usize) -> Result<GridSpec, InstanceError> {
    assert!(refinement >= 1, "refinement must be >= 1");
    let cap_h = inst.gen_output_cap();
    let (base_res, ramp, explicit) = match &inst.grids {
        Some(g) => (sort_dedup(g.reservoir.clone()), sort_dedup(g.ramp.clone()), true),
        None => {
            let n = 10;
            let res = (0..=n).map(|i| inst.capacity * i as f64 / n as f64).collect();
            let ramp = (0..=3).map(|i| cap_h * i as f64 / 3.0).collect();
            (res, sort_dedup(ramp), false)
        }
    };
    if explicit {
        if GridSpec::find(&ramp, 0.0, 1e-9).is_none() {
            return Err(InstanceError::GridExcludesBoundary("ramp grid omits 0".into()));
        }
        if GridSpec::find(&base_res, inst.initial_level, 1e-9).is_none() {
            return Err(InstanceError::GridExcludesBoundary(format!(
                "reservoir grid omits initial level {}",
                inst.initial_level
            )));
        }
        if let Some(term) = inst.terminal_level {
            if GridSpec::find(&base_res, term, 1e-9).is_none() {
                return Err(InstanceError::GridExcludesBoundary(format!(
                    "reservoir grid omits terminal level {term}"
                )));
            }
        }
        for p in &base_res {
            if *p < -1e-9 || *p > inst.capacity + 1e-9 {
                return Err(InstanceError::UnitRange(format!(
                    "reservoir grid point {p} outside [0, {}]",
                    inst.capacity
                )));
            }
        }
        for p in &ramp {
            if *p < -1e-9 || *p > cap_h + 1e-9 {
                return Err(InstanceError::UnitRange(format!(
                    "ramp grid point {p} outside [0, {cap_h}]"
                )));
            }
        }
    }
    let mut res = Vec::new();
    for w in base_res.windows(2) {
        for i in 0..refinement {
            res.push(w[0] + (w[1] - w[0]) * i as f64 / refinement as f64);
        }
    }
    res.push(*base_res.last().unwrap());
    res.push(inst.initial_level);
    if let Some(term) = inst.terminal_level {
        res.push(term);
    }
    Ok(GridSpec { reservoir: sort_dedup(res), ramp })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TABLE2_PRICES: [f64; 24] = [
        130.0, 150.0, 160.0, 135.0, 150.0, 150.0, 220.0, 240.0, 250.0, 220.0, 200.0, 130.0, 120.0,
        125.0, 130.0, 160.0, 260.0, 280.0, 250.0, 220.0, 200.0, 160.0, 130.0, 130.0,
    ];

    fn baseline_doc() -> String {
        serde_json::json!({
            "horizon": 24,
            "prices": TABLE2_PRICES.to_vec(),
            "gen_bounds": [40.0, 130.0],
            "pump_bounds": [0.0, 130.0],
            "ramp_limit": 50.0,
            "efficiency_gen": 1.0,
            "efficiency_pump": 0.75,
            "reservoir": { "capacity": 900.0, "initial": 450.0, "terminal": 450.0 },
            "min_up": 1,
            "min_down": 1,
            "j_max": 4,
            "grids": {
                "reservoir": [0.0, 100.0, 200.0, 300.0, 400.0, 450.0, 500.0, 600.0, 700.0, 800.0, 900.0],
                "ramp": [0.0, 40.0, 90.0, 130.0]
            }
        })
        .to_string()
    }

    #[test]
    fn parses_baseline_prices() {
        let inst = load_instance(&baseline_doc()).unwrap();
        assert_eq!(inst.prices[0], 130.0);
        assert_eq!(inst.prices[16], 260.0);
        assert_eq!(inst.horizon, 24);
    }

    #[test]
    fn scalar_bounds_broadcast() {
        let inst = load_instance(&baseline_doc()).unwrap();
        assert_eq!(inst.gen_min, vec![40.0; 24]);
        assert_eq!(inst.gen_max, vec![130.0; 24]);
    }

    #[test]
    fn missing_prices_reported() {
        let mut doc: Value = serde_json::from_str(&baseline_doc()).unwrap();
        doc.as_object_mut().unwrap().remove("prices");
        match load_instance(&doc.to_string()) {
            Err(InstanceError::MissingField(f)) => assert_eq!(f, "prices"),
            other => panic!("expected MissingField, got {other:?}"),
        }
    }

    #[test]
    fn validation_flags_bad_levels() {
        let mut inst = load_instance(&baseline_doc()).unwrap();
        inst.initial_level = 1000.0;
        inst.capacity = 900.0;
        let report = validate(&inst);
        assert!(report.iter().any(|r| r.contains("initial level exceeds capacity")));
        inst.initial_level = 450.0;
        inst.min_up = 0;
        assert!(validate(&inst).iter().any(|r| r.contains("min-up must be >= 1")));
    }

    #[test]
    fn baseline_validates_clean() {
        let inst = load_instance(&baseline_doc()).unwrap();
        assert!(validate(&inst).is_empty());
    }

    #[test]
    fn baseline_grids_pass_through() {
        let inst = load_instance(&baseline_doc()).unwrap();
        let g = build_grid(&inst, 1).unwrap();
        assert_eq!(
            g.reservoir,
            vec![0.0, 100.0, 200.0, 300.0, 400.0, 450.0, 500.0, 600.0, 700.0, 800.0, 900.0]
        );
        assert_eq!(g.ramp, vec![0.0, 40.0, 90.0, 130.0]);
    }

    #[test]
    fn refinement_inserts_midpoints() {
        let inst = load_instance(&baseline_doc()).unwrap();
        let g = build_grid(&inst, 2).unwrap();
        assert!(GridSpec::find(&g.reservoir, 50.0, 1e-9).is_some());
        assert!(GridSpec::find(&g.reservoir, 425.0, 1e-9).is_some());
        // Doubling the refinement keeps every coarser point.
        let g4 = build_grid(&inst, 4).unwrap();
        for p in &g.reservoir {
            assert!(GridSpec::find(&g4.reservoir, *p, 1e-9).is_some(), "lost point {p}");
        }
    }

    #[test]
    fn explicit_grid_must_cover_boundaries() {
        let mut inst = load_instance(&baseline_doc()).unwrap();
        inst.grids.as_mut().unwrap().reservoir.retain(|p| (*p - 450.0).abs() > 1e-9);
        match build_grid(&inst, 1) {
            Err(InstanceError::GridExcludesBoundary(_)) => {}
            other => panic!("expected GridExcludesBoundary, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_field_exact() {
        let inst = load_instance(&baseline_doc()).unwrap();
        let reparsed = load_instance(&inst.to_json().to_string()).unwrap();
        assert_eq!(inst, reparsed);
    }
}
