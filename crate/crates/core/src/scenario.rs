//! World description: mission area, importance fields, UAV roster, scripted
//! ground-controller directives and game weights.
//!
//! Scenarios are stored as JSON (the `.scn` files shipped under
//! `crates/core/scenarios/`). Every key is documented in
//! `docs/scenario-schema.md`. Loading always validates; a `Scenario` value
//! obtained from [`load_scenario`] or [`parse_scenario`] satisfies every
//! invariant checked by [`Scenario::validate`].

use crate::coalition::{ElectionEnv, PartitionState};
use crate::event::{Cause, Change, Event, EventKind};
use crate::geometry::{Point, Rect};
use crate::ids::{CoalitionId, UavId};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

/// The bundled disaster-coverage scenario.
pub const FIRE_SCENARIO: &str = include_str!("../scenarios/fire.scn");

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("bad override `{key}`: {message}")]
    Override { key: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub area: Rect,
    #[serde(default = "default_cell_size")]
    pub cell_size_m: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weights: GameWeights,
    #[serde(default = "default_channels")]
    pub channels: u32,
    #[serde(default)]
    pub fields: Vec<ImportanceField>,
    pub uavs: Vec<UavSpec>,
    #[serde(default)]
    pub directives: Vec<TaskDirective>,
    #[serde(default)]
    pub options: SimOptions,
}

fn default_cell_size() -> f64 {
    250.0
}
fn default_max_steps() -> u64 {
    1000
}
fn default_channels() -> u32 {
    3
}

/// Radially decaying importance centred on a point of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceField {
    pub center: Point,
    #[serde(default = "default_sigma")]
    pub sigma_m: f64,
    #[serde(default = "default_peak")]
    pub peak: f64,
}

fn default_sigma() -> f64 {
    2500.0
}
fn default_peak() -> f64 {
    1.0
}

impl ImportanceField {
    pub fn at(&self, p: Point) -> f64 {
        self.peak * (-p.distance_sq(self.center) / (2.0 * self.sigma_m * self.sigma_m)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSpec {
    pub id: UavId,
    pub start_pos: Point,
    #[serde(default = "default_coverage_radius")]
    pub coverage_radius_m: f64,
    #[serde(default = "default_comm_range")]
    pub comm_range_m: f64,
    /// Maximum number of simultaneous coalition memberships.
    #[serde(default = "default_transceivers")]
    pub transceivers: u32,
    /// Backhaul quality to the ground controller; 0 means no backhaul hardware.
    #[serde(default)]
    pub ground_link_quality: f64,
    #[serde(default)]
    pub relay_quota: u32,
    /// Per-axis displacement of one move.
    #[serde(default = "default_max_move")]
    pub max_move_m: f64,
}

fn default_coverage_radius() -> f64 {
    1500.0
}
fn default_comm_range() -> f64 {
    3000.0
}
fn default_transceivers() -> u32 {
    2
}
fn default_max_move() -> f64 {
    500.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDirective {
    pub step: u64,
    #[serde(flatten)]
    pub kind: DirectiveKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DirectiveKind {
    AddField { field: ImportanceField },
    RemoveField { index: usize },
    ForceSplit { coalition: CoalitionId, members: Vec<UavId> },
    ForceMerge { a: CoalitionId, b: CoalitionId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameWeights {
    pub w_cov: f64,
    pub w_ovh: f64,
    /// Normalizing distance for hop cost and link quality.
    pub overhead_ref_m: f64,
    pub path_loss_exp: f64,
}

impl Default for GameWeights {
    fn default() -> Self {
        GameWeights { w_cov: 1.0, w_ovh: 0.1, overhead_ref_m: 1000.0, path_loss_exp: 2.0 }
    }
}

/// Simulation switches that are not part of the physical world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    /// Backhaul quality floor below which a coalition is in emergency mode.
    pub emergency_theta: f64,
    /// Overhead charged per member that cannot reach a backhauled ground leader.
    pub unreachable_penalty: f64,
    pub allow_overlap: bool,
    pub allow_moves: bool,
    pub max_coalitions: Option<u32>,
    /// `None` starts from singletons; `Some(k)` from a seeded random partition into k coalitions.
    pub initial_coalitions: Option<u32>,
    pub interference_eps_m: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            emergency_theta: 0.1,
            unreachable_penalty: 10.0,
            allow_overlap: true,
            allow_moves: true,
            max_coalitions: None,
            initial_coalitions: None,
            interference_eps_m: 1.0,
        }
    }
}

impl Scenario {
    /// The bundled fire scenario.
    pub fn fire() -> Scenario {
        parse_scenario(FIRE_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let a = &self.area;
        let finite = [a.min_x, a.min_y, a.max_x, a.max_y].iter().all(|v| v.is_finite());
        if !finite || a.width() <= 0.0 || a.height() <= 0.0 {
            return Err(invalid("area", "width and height must be positive and finite"));
        }
        if !(self.cell_size_m > 0.0) || !self.cell_size_m.is_finite() {
            return Err(invalid("cell_size_m", "must be positive"));
        }
        if self.cell_size_m > a.width() || self.cell_size_m > a.height() {
            return Err(invalid("cell_size_m", "larger than the area; grid would be empty"));
        }
        if self.channels == 0 {
            return Err(invalid("channels", "at least one channel required"));
        }
        let w = &self.weights;
        if !(w.w_cov >= 0.0) || !w.w_cov.is_finite() {
            return Err(invalid("weights.w_cov", "must be non-negative"));
        }
        if !(w.w_ovh >= 0.0) || !w.w_ovh.is_finite() {
            return Err(invalid("weights.w_ovh", "must be non-negative"));
        }
        if !(w.w_cov + w.w_ovh > 0.0) {
            return Err(invalid("weights", "w_cov + w_ovh must be positive"));
        }
        if !(w.overhead_ref_m > 0.0) || !w.overhead_ref_m.is_finite() {
            return Err(invalid("weights.overhead_ref_m", "must be positive"));
        }
        if !(w.path_loss_exp >= 1.0) || !w.path_loss_exp.is_finite() {
            return Err(invalid("weights.path_loss_exp", "must be >= 1"));
        }
        for (i, f) in self.fields.iter().enumerate() {
            validate_field(f, &format!("fields[{i}]"))?;
        }
        if self.uavs.is_empty() {
            return Err(invalid("uavs", "at least one UAV required"));
        }
        let mut seen = BTreeSet::new();
        for (i, u) in self.uavs.iter().enumerate() {
            let at = |k: &str| format!("uavs[{i}].{k}");
            if !seen.insert(u.id) {
                return Err(invalid(at("id"), format!("duplicate id {}", u.id)));
            }
            if !u.start_pos.is_finite() || !a.contains(u.start_pos) {
                return Err(invalid(at("start_pos"), "outside area"));
            }
            if !(u.coverage_radius_m > 0.0) || !u.coverage_radius_m.is_finite() {
                return Err(invalid(at("coverage_radius_m"), "must be positive"));
            }
            if !(u.comm_range_m > 0.0) || !u.comm_range_m.is_finite() {
                return Err(invalid(at("comm_range_m"), "must be positive"));
            }
            if u.transceivers == 0 {
                return Err(invalid(at("transceivers"), "must be >= 1"));
            }
            if !(0.0..=1.0).contains(&u.ground_link_quality) {
                return Err(invalid(at("ground_link_quality"), "must lie in [0, 1]"));
            }
            if !(u.max_move_m >= 0.0) || !u.max_move_m.is_finite() {
                return Err(invalid(at("max_move_m"), "must be non-negative"));
            }
        }
        for (i, d) in self.directives.iter().enumerate() {
            if d.step > self.max_steps {
                return Err(invalid(
                    format!("directives[{i}].step"),
                    format!("step {} exceeds max_steps {}", d.step, self.max_steps),
                ));
            }
            match &d.kind {
                DirectiveKind::AddField { field } => {
                    validate_field(field, &format!("directives[{i}].field"))?
                }
                DirectiveKind::ForceSplit { members, .. } if members.is_empty() => {
                    return Err(invalid(format!("directives[{i}].members"), "must be non-empty"))
                }
                _ => {}
            }
        }
        if self.directives.windows(2).any(|w| w[0].step > w[1].step) {
            return Err(invalid("directives", "must be ordered by step"));
        }
        let o = &self.options;
        if !(0.0..=1.0).contains(&o.emergency_theta) {
            return Err(invalid("options.emergency_theta", "must lie in [0, 1]"));
        }
        if !(o.unreachable_penalty >= 0.0) || !o.unreachable_penalty.is_finite() {
            return Err(invalid("options.unreachable_penalty", "must be non-negative"));
        }
        if o.max_coalitions == Some(0) {
            return Err(invalid("options.max_coalitions", "must be >= 1"));
        }
        if let Some(k) = o.initial_coalitions {
            if k == 0 || k as usize > self.uavs.len() {
                return Err(invalid("options.initial_coalitions", "must lie in [1, number of UAVs]"));
            }
            if o.max_coalitions.is_some_and(|m| k > m) {
                return Err(invalid("options.initial_coalitions", "exceeds max_coalitions"));
            }
        }
        if !(o.interference_eps_m > 0.0) {
            return Err(invalid("options.interference_eps_m", "must be positive"));
        }
        Ok(())
    }

    /// Pretty JSON rendering; `parse_scenario(&s.to_json())` round-trips.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical compact JSON rendering, hex encoded.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn roster(&self) -> Roster {
        Roster::new(&self.uavs)
    }
}

fn validate_field(f: &ImportanceField, at: &str) -> Result<(), ScenarioError> {
    if !f.center.is_finite() {
        return Err(invalid(format!("{at}.center"), "must be finite"));
    }
    if !(f.sigma_m > 0.0) || !f.sigma_m.is_finite() {
        return Err(invalid(format!("{at}.sigma_m"), "must be positive"));
    }
    if !(f.peak > 0.0 && f.peak <= 1.0) {
        return Err(invalid(format!("{at}.peak"), "must lie in (0, 1]"));
    }
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    scenario_from_value(value)
}

pub fn scenario_from_value(value: Value) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario =
        serde_json::from_value(value).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn read_scenario_value(path: &Path) -> Result<Value, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    scenario_from_value(read_scenario_value(path)?)
}

/// Applies a `key=value` override to a JSON document. Keys are dotted paths;
/// numeric segments index arrays. Values parse as JSON, falling back to a
/// bare string.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<(), ScenarioError> {
    let err = |message: String| ScenarioError::Override { key: key.to_string(), message };
    let segments: Vec<&str> = key.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(err("empty path segment".into()));
    }
    let new_value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| err(format!("`{seg}` is not an index")))?;
                let len = items.len();
                items.get_mut(idx).ok_or_else(|| err(format!("index {idx} out of range ({len})")))?
            }
            Value::Object(map) => map.entry(seg.to_string()).or_insert_with(|| placeholder(last)),
            Value::Null => {
                *cur = Value::Object(Default::default());
                let Value::Object(map) = cur else { unreachable!() };
                map.entry(seg.to_string()).or_insert_with(|| placeholder(last))
            }
            _ => return Err(err(format!("cannot descend into `{seg}`"))),
        };
    }
    *cur = new_value;
    Ok(())
}

fn placeholder(last: bool) -> Value {
    if last {
        Value::Null
    } else {
        Value::Object(Default::default())
    }
}

/// Parses `key=value`.
pub fn split_override(arg: &str) -> Result<(&str, &str), ScenarioError> {
    arg.split_once('=').ok_or_else(|| ScenarioError::Override {
        key: arg.to_string(),
        message: "expected key=value".into(),
    })
}

/// Roster with id lookup. UAV state vectors are indexed in roster order.
#[derive(Debug, Clone)]
pub struct Roster {
    specs: Vec<UavSpec>,
    index: HashMap<UavId, usize>,
}

impl Roster {
    pub fn new(specs: &[UavSpec]) -> Self {
        let index = specs.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        Roster { specs: specs.to_vec(), index }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[UavSpec] {
        &self.specs
    }

    pub fn index_of(&self, id: UavId) -> usize {
        self.index[&id]
    }

    pub fn try_index_of(&self, id: UavId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn spec(&self, id: UavId) -> &UavSpec {
        &self.specs[self.index_of(id)]
    }

    pub fn ids(&self) -> impl Iterator<Item = UavId> + '_ {
        self.specs.iter().map(|s| s.id)
    }

    pub fn start_positions(&self) -> Vec<Point> {
        self.specs.iter().map(|s| s.start_pos).collect()
    }
}

/// Importance of a point: the maximum over fields, 0 with no fields.
pub fn importance_at(fields: &[ImportanceField], p: Point) -> f64 {
    fields.iter().map(|f| f.at(p)).fold(0.0, f64::max)
}

/// Per-cell importance over the mission area, evaluated at cell centres.
/// Partial cells at the upper edges are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceGrid {
    pub origin: Point,
    pub cell_size_m: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major: index `iy * nx + ix`.
    pub weights: Vec<f64>,
    pub total: f64,
}

impl ImportanceGrid {
    pub fn new(area: Rect, cell_size_m: f64, fields: &[ImportanceField]) -> Self {
        let nx = (area.width() / cell_size_m).floor() as usize;
        let ny = (area.height() / cell_size_m).floor() as usize;
        let origin = Point::new(area.min_x, area.min_y);
        let mut weights = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let c = Point::new(
                    origin.x + (ix as f64 + 0.5) * cell_size_m,
                    origin.y + (iy as f64 + 0.5) * cell_size_m,
                );
                weights.push(importance_at(fields, c));
            }
        }
        let total = weights.iter().sum();
        ImportanceGrid { origin, cell_size_m, nx, ny, weights, total }
    }

    pub fn center(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            self.origin.x + (ix as f64 + 0.5) * self.cell_size_m,
            self.origin.y + (iy as f64 + 0.5) * self.cell_size_m,
        )
    }

    pub fn weight(&self, ix: usize, iy: usize) -> f64 {
        self.weights[iy * self.nx + ix]
    }

    /// Cell (ix, iy) containing `p`, if inside the grid.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.cell_size_m;
        let fy = (p.y - self.origin.y) / self.cell_size_m;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        (ix < self.nx && iy < self.ny).then_some((ix, iy))
    }
}

pub fn importance_grid(scenario: &Scenario) -> ImportanceGrid {
    ImportanceGrid::new(scenario.area, scenario.cell_size_m, &scenario.fields)
}

/// Executes one directive against the world. Rejections are reported as
/// `Rejected` events and leave everything untouched.
pub fn apply_directive(
    fields: &mut Vec<ImportanceField>,
    partition: &mut PartitionState,
    roster: &Roster,
    positions: &[Point],
    step: u64,
    directive: &TaskDirective,
) -> Event {
    let reject = |why: String| Change::new(EventKind::Rejected, vec![], vec![]).with_detail(why);
    if directive.step != step {
        return reject(format!("directive due at step {} applied at {}", directive.step, step))
            .at(step, Cause::Directive);
    }
    let change = match &directive.kind {
        DirectiveKind::AddField { field } => {
            fields.push(*field);
            let env = ElectionEnv { roster, positions, fields };
            partition.reelect_all(&env);
            Change::new(EventKind::FieldAdded, vec![], vec![]).with_detail(format!(
                "index={} center=({}, {}) sigma_m={} peak={}",
                fields.len() - 1,
                field.center.x,
                field.center.y,
                field.sigma_m,
                field.peak
            ))
        }
        DirectiveKind::RemoveField { index } => {
            if *index < fields.len() {
                fields.remove(*index);
                let env = ElectionEnv { roster, positions, fields };
                partition.reelect_all(&env);
                Change::new(EventKind::FieldRemoved, vec![], vec![]).with_detail(format!("index={index}"))
            } else {
                reject(format!("remove_field: no field at index {index}"))
            }
        }
        DirectiveKind::ForceSplit { coalition, members } => {
            let env = ElectionEnv { roster, positions, fields };
            let subset: BTreeSet<UavId> = members.iter().copied().collect();
            match partition.split(*coalition, &subset, &env) {
                Ok(change) => change,
                Err(e) => reject(format!("force_split: {e}"))
                    .with_coalitions(vec![*coalition])
                    .with_uavs(members.clone()),
            }
        }
        DirectiveKind::ForceMerge { a, b } => {
            let env = ElectionEnv { roster, positions, fields };
            match partition.merge(*a, *b, &env) {
                Ok(change) => change,
                Err(e) => reject(format!("force_merge: {e}")).with_coalitions(vec![*a, *b]),
            }
        }
    };
    change.at(step, Cause::Directive)
}

impl Change {
    fn with_coalitions(mut self, c: Vec<CoalitionId>) -> Self {
        self.coalitions = c;
        self
    }
    fn with_uavs(mut self, u: Vec<UavId>) -> Self {
        self.uavs = u;
        self
    }
}
