//! Deterministic time-stepped simulation loop.
//!
//! Each step runs, in order: due directives, emergency checks (with the
//! merges and relay assignments they trigger), one learning iteration, one
//! channel best-response sweep, traffic accounting, and metrics collection.

use crate::coalition::{Coalition, ElectionEnv, PartitionState};
use crate::event::{Cause, Change, Event, EventKind};
use crate::games::{channel_round, global_objective, GameContext, ObjectiveBreakdown, SwarmState};
use crate::geometry::{Point, Rect};
use crate::ids::{CoalitionId, UavId};
use crate::learning::{detect_convergence, learning_iteration, IterationOutcome, LearnerConfig, LearnerState};
use crate::radio::{account_traffic, relay_matching, RelayOffer};
use crate::scenario::{apply_directive, ImportanceField, ImportanceGrid, Roster, Scenario, ScenarioError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub coverage: f64,
    pub overhead: f64,
    pub objective: f64,
    pub n_coalitions: usize,
    pub safety_msgs: u64,
    pub fusion_msgs: u64,
    pub inter_msgs: u64,
    pub emergencies: usize,
    pub accepted_moves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavSnapshot {
    pub id: UavId,
    pub x: f64,
    pub y: f64,
    pub coverage_radius_m: f64,
    pub comm_range_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub step: u64,
    pub area: Rect,
    pub uavs: Vec<UavSnapshot>,
    pub coalitions: Vec<Coalition>,
    pub objective: ObjectiveBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub algo: String,
    pub seed: u64,
    pub converged_at: Option<usize>,
    pub initial_objective: ObjectiveBreakdown,
    pub metrics: Vec<MetricsRecord>,
    pub events: Vec<Event>,
    pub final_state: FinalSummary,
}

impl Trace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Mutable world owned by one engine.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub step: u64,
    pub swarm: SwarmState,
    pub fields: Vec<ImportanceField>,
    pub grid: ImportanceGrid,
    pub learner: LearnerState,
    pub rng: ChaCha8Rng,
}

pub struct Engine<'s> {
    scenario: &'s Scenario,
    roster: Roster,
    state: WorldState,
    metrics: Vec<MetricsRecord>,
    events: Vec<Event>,
    last_iteration: Option<IterationOutcome>,
}

/// Builds the initial world: UAVs at their start positions, one singleton
/// coalition each (or a seeded random partition when configured).
pub fn initialize(scenario: &Scenario, config: &LearnerConfig) -> WorldState {
    let roster = scenario.roster();
    let positions = roster.start_positions();
    let fields = scenario.fields.clone();
    let grid = ImportanceGrid::new(scenario.area, scenario.cell_size_m, &fields);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let env = ElectionEnv { roster: &roster, positions: &positions, fields: &fields };
    let partition = match scenario.options.initial_coalitions {
        None => PartitionState::singletons(&env),
        Some(k) => random_partition(&roster, k as usize, &env, &mut rng),
    };
    WorldState {
        step: 0,
        swarm: SwarmState { positions, partition },
        fields,
        grid,
        learner: LearnerState::new(config.clone(), &roster),
        rng,
    }
}

/// Every UAV assigned to one of `k` coalitions uniformly at random, with the
/// first `k` UAVs of a shuffled order seeding one coalition each so none is empty.
pub fn random_partition(roster: &Roster, k: usize, env: &ElectionEnv<'_>, rng: &mut ChaCha8Rng) -> PartitionState {
    use rand::Rng;
    let mut ids: Vec<UavId> = roster.ids().collect();
    ids.shuffle(rng);
    let mut groups: Vec<Vec<UavId>> = vec![Vec::new(); k];
    for (i, u) in ids.into_iter().enumerate() {
        let g = if i < k { i } else { rng.gen_range(0..k) };
        groups[g].push(u);
    }
    PartitionState::from_groups(&groups, env).expect("random groups are valid")
}

impl<'s> Engine<'s> {
    pub fn new(scenario: &'s Scenario, config: &LearnerConfig) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        config.validate()?;
        Ok(Engine {
            scenario,
            roster: scenario.roster(),
            state: initialize(scenario, config),
            metrics: Vec::new(),
            events: Vec::new(),
            last_iteration: None,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Mutable access for experiments that seed a custom partition or placement.
    pub fn state_mut(&mut self) -> &mut WorldState {
        &mut self.state
    }

    pub fn metrics(&self) -> &[MetricsRecord] {
        &self.metrics
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn last_iteration(&self) -> Option<&IterationOutcome> {
        self.last_iteration.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.scenario.max_steps
    }

    pub fn context(&self) -> GameContext<'_> {
        GameContext {
            roster: &self.roster,
            grid: &self.state.grid,
            fields: &self.state.fields,
            weights: &self.scenario.weights,
            options: &self.scenario.options,
            area: self.scenario.area,
        }
    }

    pub fn objective(&self) -> ObjectiveBreakdown {
        global_objective(&self.context(), &self.state.swarm)
    }

    /// Advances one step. Returns `None` once `max_steps` is reached.
    pub fn step(&mut self) -> Option<&MetricsRecord> {
        if self.is_done() {
            return None;
        }
        let step = self.state.step;
        let scenario = self.scenario;
        let roster = &self.roster;
        let st = &mut self.state;

        // (1) directives
        let mut fields_changed = false;
        for d in scenario.directives.iter().filter(|d| d.step == step) {
            let ev = apply_directive(
                &mut st.fields,
                &mut st.swarm.partition,
                roster,
                &st.swarm.positions,
                step,
                d,
            );
            fields_changed |= matches!(ev.kind, EventKind::FieldAdded | EventKind::FieldRemoved);
            self.events.push(ev);
        }
        if fields_changed {
            st.grid = ImportanceGrid::new(scenario.area, scenario.cell_size_m, &st.fields);
        }

        // (2) emergencies
        let (emergencies, emergency_uavs) = emergency_phase(scenario, roster, st, step, &mut self.events);

        // (3) learning
        let ctx = GameContext {
            roster,
            grid: &st.grid,
            fields: &st.fields,
            weights: &scenario.weights,
            options: &scenario.options,
            area: scenario.area,
        };
        let outcome = learning_iteration(&ctx, &mut st.swarm, &mut st.learner, &mut st.rng);
        self.events.extend(outcome.changes.iter().cloned().map(|c| c.at(step, Cause::Game)));

        // (4) channels
        channel_round(
            &mut st.swarm.partition,
            roster,
            &st.swarm.positions,
            scenario.channels,
            scenario.options.interference_eps_m,
        );

        // (5) traffic
        let traffic =
            account_traffic(&st.swarm.partition, roster, &st.swarm.positions, &scenario.weights, &emergency_uavs);

        // (6) metrics
        let obj = outcome.objective;
        self.metrics.push(MetricsRecord {
            step,
            coverage: obj.coverage,
            overhead: obj.overhead,
            objective: obj.objective,
            n_coalitions: st.swarm.partition.len(),
            safety_msgs: traffic.safety,
            fusion_msgs: traffic.fusion,
            inter_msgs: traffic.inter,
            emergencies,
            accepted_moves: outcome.accepted,
        });
        self.last_iteration = Some(outcome);
        st.step += 1;
        self.metrics.last()
    }

    pub fn final_summary(&self) -> FinalSummary {
        let positions = &self.state.swarm.positions;
        FinalSummary {
            step: self.state.step,
            area: self.scenario.area,
            uavs: self
                .roster
                .specs()
                .iter()
                .zip(positions)
                .map(|(s, p)| UavSnapshot {
                    id: s.id,
                    x: p.x,
                    y: p.y,
                    coverage_radius_m: s.coverage_radius_m,
                    comm_range_m: s.comm_range_m,
                })
                .collect(),
            coalitions: self.state.swarm.partition.coalitions().values().cloned().collect(),
            objective: self.objective(),
        }
    }
}

/// Checks every coalition, then executes the merges the flagged ones asked
/// for, then matches members of still-flagged coalitions to relay drones.
/// Returns the number of flagged coalitions and the UAVs in them.
fn emergency_phase(
    scenario: &Scenario,
    roster: &Roster,
    st: &mut WorldState,
    step: u64,
    events: &mut Vec<Event>,
) -> (usize, BTreeSet<UavId>) {
    let theta = scenario.options.emergency_theta;
    let env = ElectionEnv { roster, positions: &st.swarm.positions, fields: &st.fields };
    let partition = &mut st.swarm.partition;
    let mut flagged = 0;
    let mut uavs = BTreeSet::new();
    let mut requests = Vec::new();
    let ids: Vec<CoalitionId> = partition.ids().collect();
    for c in ids {
        let check = partition.check_emergency(c, theta, &env, &scenario.weights).expect("coalition exists");
        if !check.emergency {
            continue;
        }
        flagged += 1;
        let members = &partition.coalitions()[&c].members;
        uavs.extend(members.iter().copied());
        let why = match (check.low_backhaul, check.fragmented) {
            (true, true) => "low_backhaul;fragmented",
            (true, false) => "low_backhaul",
            _ => "fragmented",
        };
        events.push(
            Change::new(EventKind::Emergency, vec![c], members.iter().copied().collect())
                .with_detail(why)
                .at(step, Cause::Emergency),
        );
        if let Some(t) = check.merge_with {
            requests.push((c, t));
        }
    }

    // Earlier merges retire ids; follow them to the coalition that absorbed them.
    let mut redirect: BTreeMap<CoalitionId, CoalitionId> = BTreeMap::new();
    let resolve = |redirect: &BTreeMap<CoalitionId, CoalitionId>, mut c: CoalitionId| {
        while let Some(&n) = redirect.get(&c) {
            c = n;
        }
        c
    };
    for (a, b) in requests {
        let (a, b) = (resolve(&redirect, a), resolve(&redirect, b));
        if a == b {
            continue;
        }
        if let Ok(change) = partition.merge(a, b, &env) {
            let new = change.coalitions[2];
            redirect.insert(a, new);
            redirect.insert(b, new);
            events.push(change.with_detail("emergency_merge").at(step, Cause::Emergency));
        }
    }

    // Coalitions still without backhaul borrow relay drones from others.
    let mut proposers = Vec::new();
    let mut stranded = BTreeSet::new();
    for c in partition.coalitions().values() {
        if roster.spec(c.ground_leader).ground_link_quality < theta {
            for &m in &c.members {
                if roster.spec(m).ground_link_quality < theta {
                    proposers.push(m);
                    stranded.insert(m);
                }
            }
        }
    }
    if !proposers.is_empty() {
        let relays: Vec<RelayOffer> = roster
            .specs()
            .iter()
            .filter(|s| s.relay_quota > 0 && s.ground_link_quality >= theta && !stranded.contains(&s.id))
            .map(|s| RelayOffer { relay: s.id, quota: s.relay_quota })
            .collect();
        let matching = relay_matching(&proposers, &relays, roster, &st.swarm.positions, &scenario.weights);
        for (p, r) in &matching.assignments {
            let home = partition.primary_of(*p).into_iter().collect();
            events.push(Change::new(EventKind::RelayAssigned, home, vec![*p, *r]).at(step, Cause::Emergency));
        }
    }
    (flagged, uavs)
}

/// Runs until `max_steps`, or until convergence of the objective plus a
/// grace window of `conv_window` steps.
pub fn run(scenario: &Scenario, config: &LearnerConfig) -> Result<Trace, ScenarioError> {
    let mut engine = Engine::new(scenario, config)?;
    let initial_objective = engine.objective();
    let window = config.conv_window;
    let mut history = Vec::new();
    let mut converged_at = None;
    while let Some(m) = engine.step() {
        history.push(m.objective);
        if converged_at.is_none() {
            converged_at = detect_convergence(&history, window, config.conv_eps);
        }
        if let Some(i) = converged_at {
            if history.len() >= i + 2 * window {
                break;
            }
        }
    }
    let final_state = engine.final_summary();
    Ok(Trace {
        algo: config.algo.to_string(),
        seed: scenario.seed,
        converged_at,
        initial_objective,
        metrics: engine.metrics,
        events: engine.events,
        final_state,
    })
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>, header: Option<&[&str]>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(header.is_none()).from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub const METRICS_COLUMNS: [&str; 10] = [
    "step",
    "coverage",
    "overhead",
    "objective",
    "n_coalitions",
    "safety_msgs",
    "fusion_msgs",
    "inter_msgs",
    "emergencies",
    "accepted_moves",
];

pub fn metrics_csv(metrics: &[MetricsRecord]) -> String {
    csv_string(metrics, Some(&METRICS_COLUMNS))
}

fn join_ids<T: std::fmt::Display>(ids: &[T]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

/// Events CSV: `step,event_kind,cause,coalitions,uavs,detail` with id lists
/// separated by `;`.
pub fn events_csv(events: &[Event]) -> String {
    let rows = events.iter().map(|e| {
        (e.step, e.kind.as_str(), e.cause.as_str(), join_ids(&e.coalitions), join_ids(&e.uavs), e.detail.as_str())
    });
    csv_string(rows, Some(&["step", "event_kind", "cause", "coalitions", "uavs", "detail"]))
}

/// Prefix of the only manifest line that varies between identical runs.
pub const MANIFEST_TIMESTAMP_PREFIX: &str = "generated_at_unix=";

/// Plain-text run manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub scenario_sha256: String,
    pub seeds: Vec<u64>,
    pub entries: Vec<(String, String)>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn render(&self, timestamp_unix: u64) -> String {
        let mut out = String::new();
        out.push_str("# fanet run manifest\n");
        out.push_str(&format!("artifact_version={}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("command={}\n", self.command));
        out.push_str(&format!("scenario_sha256={}\n", self.scenario_sha256));
        out.push_str(&format!("seeds={}\n", join_ids(&self.seeds)));
        for (k, v) in &self.entries {
            out.push_str(&format!("{k}={v}\n"));
        }
        for f in &self.files {
            out.push_str(&format!("file={f}\n"));
        }
        out.push_str("# the next line is the only one that differs between identical runs\n");
        out.push_str(&format!("{MANIFEST_TIMESTAMP_PREFIX}{timestamp_unix}\n"));
        out
    }
}

/// Manifest text with the timestamp line removed, for comparisons.
pub fn manifest_without_timestamp(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with(MANIFEST_TIMESTAMP_PREFIX)).collect::<Vec<_>>().join("\n")
}

/// Evaluates positions and partition, leaders re-elected, under the scenario's
/// weights and options.
pub fn evaluate_configuration(scenario: &Scenario, positions: Vec<Point>, groups: &[Vec<UavId>]) -> ObjectiveBreakdown {
    let roster = scenario.roster();
    let grid = ImportanceGrid::new(scenario.area, scenario.cell_size_m, &scenario.fields);
    let env = ElectionEnv { roster: &roster, positions: &positions, fields: &scenario.fields };
    let partition = PartitionState::from_groups(groups, &env).expect("valid groups");
    let ctx = GameContext {
        roster: &roster,
        grid: &grid,
        fields: &scenario.fields,
        weights: &scenario.weights,
        options: &scenario.options,
        area: scenario.area,
    };
    global_objective(&ctx, &SwarmState { positions, partition })
}
