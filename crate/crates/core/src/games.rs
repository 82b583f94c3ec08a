//! Task-driven objective and the games played over it.
//!
//! The global objective `w_cov * coverage - w_ovh * overhead` is the exact
//! potential of the coalition formation game: each agent's utility for an
//! action is the change it causes in the global objective, so every
//! strictly improving unilateral move strictly raises the potential.
//! Channel selection is a separate congestion-style potential game over
//! ground-leader interference.

use crate::coalition::{ElectionEnv, PartitionState};
use crate::event::Change;
use crate::geometry::{Point, Rect};
use crate::ids::{CoalitionId, UavId};
use crate::radio::RelayTree;
use crate::scenario::{GameWeights, ImportanceField, ImportanceGrid, Roster, SimOptions};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Compass offsets (N, NE, E, SE, S, SW, W, NW) in units of `max_move_m`.
pub const COMPASS: [(f64, f64); 8] =
    [(0.0, 1.0), (1.0, 1.0), (1.0, 0.0), (1.0, -1.0), (0.0, -1.0), (-1.0, -1.0), (-1.0, 0.0), (-1.0, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SwitchTarget {
    Existing(CoalitionId),
    New,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GameAction {
    Stay,
    Move(u8),
    SwitchPrimary(SwitchTarget),
    JoinSecondary(CoalitionId),
    LeaveSecondary(CoalitionId),
}

impl GameAction {
    pub fn is_stay(&self) -> bool {
        matches!(self, GameAction::Stay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub coverage: f64,
    pub overhead: f64,
    pub objective: f64,
}

impl ObjectiveBreakdown {
    pub fn new(coverage: f64, overhead: f64, weights: &GameWeights) -> Self {
        ObjectiveBreakdown { coverage, overhead, objective: weights.w_cov * coverage - weights.w_ovh * overhead }
    }
}

/// Everything about the world that stays fixed while agents deliberate.
#[derive(Clone, Copy)]
pub struct GameContext<'a> {
    pub roster: &'a Roster,
    pub grid: &'a ImportanceGrid,
    pub fields: &'a [ImportanceField],
    pub weights: &'a GameWeights,
    pub options: &'a SimOptions,
    pub area: Rect,
}

/// The mutable part of the world the games act on.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub positions: Vec<Point>,
    pub partition: PartitionState,
}

impl SwarmState {
    pub fn position(&self, roster: &Roster, u: UavId) -> Point {
        self.positions[roster.index_of(u)]
    }
}

impl<'a> GameContext<'a> {
    pub fn election<'b>(&'b self, positions: &'b [Point]) -> ElectionEnv<'b> {
        ElectionEnv { roster: self.roster, positions, fields: self.fields }
    }
}

/// Fraction of total importance lying in cells whose centre is within
/// coverage radius of at least one UAV.
pub fn weighted_coverage(positions: &[Point], radii: &[f64], grid: &ImportanceGrid) -> f64 {
    if grid.total <= 0.0 || positions.is_empty() {
        return 0.0;
    }
    let mut covered = vec![false; grid.nx * grid.ny];
    let c = grid.cell_size_m;
    let last_x = grid.nx as f64 - 1.0;
    let last_y = grid.ny as f64 - 1.0;
    for (p, &r) in positions.iter().zip(radii) {
        let rx = (p.x - grid.origin.x) / c - 0.5;
        let ry = (p.y - grid.origin.y) / c - 0.5;
        let span = r / c;
        let x0 = (rx - span).ceil().max(0.0);
        let x1 = (rx + span).floor().min(last_x);
        let y0 = (ry - span).ceil().max(0.0);
        let y1 = (ry + span).floor().min(last_y);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let r2 = r * r;
        for iy in y0 as usize..=y1 as usize {
            for ix in x0 as usize..=x1 as usize {
                if grid.center(ix, iy).distance_sq(*p) <= r2 {
                    covered[iy * grid.nx + ix] = true;
                }
            }
        }
    }
    let sum: f64 = covered.iter().zip(&grid.weights).filter(|(c, _)| **c).map(|(_, w)| w).sum();
    sum / grid.total
}

/// Sum over coalitions and members of the relay cost to the ground leader.
/// Members that cannot reach the ground leader, and every member of a
/// coalition whose ground leader's backhaul is below the emergency floor,
/// are charged the unreachable penalty instead.
pub fn transmission_overhead(
    partition: &PartitionState,
    roster: &Roster,
    positions: &[Point],
    weights: &GameWeights,
    options: &SimOptions,
) -> f64 {
    let penalty = options.unreachable_penalty;
    let mut total = 0.0;
    for c in partition.coalitions().values() {
        if roster.spec(c.ground_leader).ground_link_quality < options.emergency_theta {
            total += penalty * c.members.len() as f64;
            continue;
        }
        let tree = RelayTree::build(c.ground_leader, &c.members, roster, positions, weights);
        for &m in &c.members {
            total += tree.cost(m).unwrap_or(penalty);
        }
    }
    total
}

pub fn global_objective(ctx: &GameContext<'_>, state: &SwarmState) -> ObjectiveBreakdown {
    let radii: Vec<f64> = ctx.roster.specs().iter().map(|s| s.coverage_radius_m).collect();
    let coverage = weighted_coverage(&state.positions, &radii, ctx.grid);
    let overhead = transmission_overhead(&state.partition, ctx.roster, &state.positions, ctx.weights, ctx.options);
    ObjectiveBreakdown::new(coverage, overhead, ctx.weights)
}

/// Candidate actions for `agent` in canonical order: Stay, the eight moves,
/// primary switches (ascending id, then a new coalition), secondary joins,
/// secondary leaves. Infeasible actions are left out.
pub fn candidate_actions(ctx: &GameContext<'_>, state: &SwarmState, agent: UavId) -> Vec<GameAction> {
    let spec = ctx.roster.spec(agent);
    let partition = &state.partition;
    let mut out = vec![GameAction::Stay];
    if ctx.options.allow_moves && spec.max_move_m > 0.0 {
        let here = state.position(ctx.roster, agent);
        for (i, (dx, dy)) in COMPASS.iter().enumerate() {
            let to = here.offset(dx * spec.max_move_m, dy * spec.max_move_m);
            if ctx.area.contains(to) {
                out.push(GameAction::Move(i as u8));
            }
        }
    }
    let Some(primary) = partition.primary_of(agent) else { return out };
    let memberships = partition.memberships(agent);
    for c in partition.ids() {
        if c != primary {
            out.push(GameAction::SwitchPrimary(SwitchTarget::Existing(c)));
        }
    }
    let primary_is_singleton = partition.coalition(primary).is_some_and(|c| c.members.len() == 1);
    let room_for_new = ctx.options.max_coalitions.is_none_or(|m| partition.len() < m as usize);
    if !primary_is_singleton && room_for_new {
        out.push(GameAction::SwitchPrimary(SwitchTarget::New));
    }
    if ctx.options.allow_overlap && memberships.len() < spec.transceivers as usize {
        for c in partition.ids() {
            if !memberships.contains(&c) {
                out.push(GameAction::JoinSecondary(c));
            }
        }
    }
    for &c in memberships {
        if c != primary {
            out.push(GameAction::LeaveSecondary(c));
        }
    }
    out
}

/// Applies `action` for `agent`, re-electing leaders where it matters.
/// Returns the structural change, if any.
pub fn apply_action(ctx: &GameContext<'_>, state: &mut SwarmState, agent: UavId, action: GameAction) -> Option<Change> {
    let roster = ctx.roster;
    match action {
        GameAction::Stay => None,
        GameAction::Move(dir) => {
            let spec = roster.spec(agent);
            let (dx, dy) = COMPASS[dir as usize];
            let i = roster.index_of(agent);
            state.positions[i] = state.positions[i].offset(dx * spec.max_move_m, dy * spec.max_move_m);
            let env = ctx.election(&state.positions);
            state.partition.reelect_memberships(agent, &env);
            None
        }
        GameAction::SwitchPrimary(target) => {
            let env = ctx.election(&state.positions);
            let t = match target {
                SwitchTarget::Existing(c) => Some(c),
                SwitchTarget::New => None,
            };
            state.partition.switch_primary(agent, t, &env).ok()
        }
        GameAction::JoinSecondary(c) => {
            let env = ctx.election(&state.positions);
            state.partition.join(agent, c, &env).ok()
        }
        GameAction::LeaveSecondary(c) => {
            let env = ctx.election(&state.positions);
            state.partition.leave(agent, c, &env).ok()
        }
    }
}

/// Change in global objective caused by `agent` taking `action`.
pub fn marginal_utility(ctx: &GameContext<'_>, state: &SwarmState, agent: UavId, action: GameAction) -> f64 {
    if action.is_stay() {
        return 0.0;
    }
    let base = global_objective(ctx, state).objective;
    let mut next = state.clone();
    apply_action(ctx, &mut next, agent, action);
    global_objective(ctx, &next).objective - base
}

/// Marginal utility of every candidate, in canonical order.
pub fn evaluate_candidates(ctx: &GameContext<'_>, state: &SwarmState, agent: UavId) -> Vec<(GameAction, f64)> {
    let base = global_objective(ctx, state).objective;
    candidate_actions(ctx, state, agent)
        .into_iter()
        .map(|a| {
            if a.is_stay() {
                return (a, 0.0);
            }
            let mut next = state.clone();
            apply_action(ctx, &mut next, agent, a);
            (a, global_objective(ctx, &next).objective - base)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwitchRule {
    BestResponse,
    LogLinear { temperature: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchOutcome {
    pub accepted: bool,
    pub action: GameAction,
    pub utility: f64,
    pub change: Option<Change>,
}

/// Boltzmann distribution over utilities at `temperature`.
pub fn boltzmann(utilities: &[f64], temperature: f64) -> Vec<f64> {
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = utilities.iter().map(|u| ((u - max) / temperature).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

/// Best response picks the highest-utility candidate when strictly positive
/// (lowest ordinal on ties); log-linear samples from the Boltzmann
/// distribution and applies whatever it draws.
pub fn switch_step<R: Rng + ?Sized>(
    ctx: &GameContext<'_>,
    state: &mut SwarmState,
    agent: UavId,
    rule: SwitchRule,
    rng: &mut R,
) -> SwitchOutcome {
    let evaluated = evaluate_candidates(ctx, state, agent);
    let (action, utility) = match rule {
        SwitchRule::BestResponse => {
            let mut best = (GameAction::Stay, 0.0);
            for &(a, u) in &evaluated {
                if u > best.1 {
                    best = (a, u);
                }
            }
            best
        }
        SwitchRule::LogLinear { temperature } => {
            let utils: Vec<f64> = evaluated.iter().map(|e| e.1).collect();
            let probs = boltzmann(&utils, temperature);
            let draw: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = evaluated.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if draw < acc {
                    pick = i;
                    break;
                }
            }
            evaluated[pick]
        }
    };
    if action.is_stay() {
        return SwitchOutcome { accepted: false, action, utility: 0.0, change: None };
    }
    let change = apply_action(ctx, state, agent, action);
    SwitchOutcome { accepted: true, action, utility, change }
}

fn leader_position(partition: &PartitionState, c: CoalitionId, roster: &Roster, positions: &[Point]) -> Point {
    let gl = partition.coalitions()[&c].ground_leader;
    positions[roster.index_of(gl)]
}

pub fn pair_interference(a: Point, b: Point, eps_m: f64) -> f64 {
    let d = a.distance(b).max(eps_m);
    1.0 / (d * d)
}

/// Interference `coalition` would see on `channel` from every other coalition on it.
pub fn channel_interference(
    coalition: CoalitionId,
    channel: u32,
    partition: &PartitionState,
    roster: &Roster,
    positions: &[Point],
    eps_m: f64,
) -> f64 {
    let here = leader_position(partition, coalition, roster, positions);
    partition
        .coalitions()
        .values()
        .filter(|o| o.id != coalition && o.channel == channel)
        .map(|o| pair_interference(here, positions[roster.index_of(o.ground_leader)], eps_m))
        .sum()
}

/// Least-interfered channel for `coalition`, lowest index on ties.
pub fn channel_best_response(
    coalition: CoalitionId,
    partition: &PartitionState,
    roster: &Roster,
    positions: &[Point],
    channels: u32,
    eps_m: f64,
) -> u32 {
    let mut best = (0, f64::INFINITY);
    for ch in 0..channels {
        let i = channel_interference(coalition, ch, partition, roster, positions, eps_m);
        if i < best.1 {
            best = (ch, i);
        }
    }
    best.0
}

/// Total same-channel pairwise interference: the channel game's potential.
pub fn channel_potential(partition: &PartitionState, roster: &Roster, positions: &[Point], eps_m: f64) -> f64 {
    let list: Vec<_> = partition.coalitions().values().collect();
    let mut total = 0.0;
    for (i, a) in list.iter().enumerate() {
        for b in &list[i + 1..] {
            if a.channel == b.channel {
                total += pair_interference(
                    positions[roster.index_of(a.ground_leader)],
                    positions[roster.index_of(b.ground_leader)],
                    eps_m,
                );
            }
        }
    }
    total
}

/// One sequential best-response sweep in ascending coalition id. Returns
/// the number of coalitions that changed channel.
pub fn channel_round(partition: &mut PartitionState, roster: &Roster, positions: &[Point], channels: u32, eps_m: f64) -> usize {
    let ids: Vec<_> = partition.ids().collect();
    let mut changed = 0;
    for c in ids {
        let best = channel_best_response(c, partition, roster, positions, channels, eps_m);
        if partition.coalitions()[&c].channel != best {
            partition.set_channel(c, best);
            changed += 1;
        }
    }
    changed
}

/// Sweeps until a round changes nothing. Returns the number of rounds run,
/// `None` if `max_rounds` is exhausted first.
pub fn channel_equilibrium(
    partition: &mut PartitionState,
    roster: &Roster,
    positions: &[Point],
    channels: u32,
    eps_m: f64,
    max_rounds: usize,
) -> Option<usize> {
    (1..=max_rounds).find(|_| channel_round(partition, roster, positions, channels, eps_m) == 0)
}
