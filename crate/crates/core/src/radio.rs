//! Air-to-air links, relay routing inside coalitions, relay-drone matching
//! and per-class traffic accounting.

use crate::coalition::PartitionState;
use crate::geometry::Point;
use crate::ids::UavId;
use crate::scenario::{GameWeights, Roster, UavSpec};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RadioError {
    #[error("UAV {member} cannot reach leader {leader} through coalition members")]
    Unreachable { member: UavId, leader: UavId },
    #[error("UAV {0} is not a member of the coalition")]
    NotMember(UavId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageClass {
    SafetyBroadcast,
    IntraCoalitionFusion,
    InterCoalitionShare,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: UavId,
    pub b: UavId,
    pub distance_m: f64,
    pub quality: f64,
}

/// True when both endpoints are within each other's communication range.
pub fn in_range(a: &UavSpec, pa: Point, b: &UavSpec, pb: Point) -> bool {
    pa.distance(pb) <= a.comm_range_m.min(b.comm_range_m)
}

pub fn link(a: &UavSpec, pa: Point, b: &UavSpec, pb: Point, weights: &GameWeights) -> Link {
    Link {
        a: a.id,
        b: b.id,
        distance_m: pa.distance(pb),
        quality: link_quality(a, pa, b, pb, weights),
    }
}

/// `1 / (1 + (d / overhead_ref_m)^path_loss_exp)` inside range, 0 outside.
pub fn link_quality(a: &UavSpec, pa: Point, b: &UavSpec, pb: Point, weights: &GameWeights) -> f64 {
    if !in_range(a, pa, b, pb) {
        return 0.0;
    }
    let d = pa.distance(pb);
    let q = 1.0 / (1.0 + (d / weights.overhead_ref_m).powf(weights.path_loss_exp));
    q.clamp(0.0, 1.0)
}

/// Cost of one hop; the same form as the overhead term it feeds.
pub fn hop_cost(distance_m: f64, weights: &GameWeights) -> f64 {
    (distance_m / weights.overhead_ref_m).powf(weights.path_loss_exp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayPath {
    /// Nodes visited after the source, ending at the leader. Empty when the
    /// source is the leader.
    pub hops: Vec<UavId>,
    pub cost: f64,
}

/// Shortest-path tree rooted at a coalition leader, restricted to coalition
/// members. Hop costs are symmetric, so distances from the root equal
/// member-to-leader path costs.
#[derive(Debug, Clone)]
pub struct RelayTree {
    leader: UavId,
    nodes: Vec<UavId>,
    dist: Vec<f64>,
    parent: Vec<Option<usize>>,
}

impl RelayTree {
    pub fn build(
        leader: UavId,
        members: &BTreeSet<UavId>,
        roster: &Roster,
        positions: &[Point],
        weights: &GameWeights,
    ) -> RelayTree {
        let nodes: Vec<UavId> = members.iter().copied().collect();
        let n = nodes.len();
        let specs: Vec<&UavSpec> = nodes.iter().map(|&id| roster.spec(id)).collect();
        let pos: Vec<Point> = nodes.iter().map(|&id| positions[roster.index_of(id)]).collect();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![None; n];
        let mut done = vec![false; n];
        if let Some(root) = nodes.iter().position(|&id| id == leader) {
            dist[root] = 0.0;
            // Dense Dijkstra: coalitions are small and ties resolve by node order.
            loop {
                let mut best: Option<usize> = None;
                for i in 0..n {
                    if !done[i] && dist[i].is_finite() && best.is_none_or(|b| dist[i] < dist[b]) {
                        best = Some(i);
                    }
                }
                let Some(u) = best else { break };
                done[u] = true;
                for v in 0..n {
                    if done[v] || !in_range(specs[u], pos[u], specs[v], pos[v]) {
                        continue;
                    }
                    let cand = dist[u] + hop_cost(pos[u].distance(pos[v]), weights);
                    if cand < dist[v] {
                        dist[v] = cand;
                        parent[v] = Some(u);
                    }
                }
            }
        }
        RelayTree { leader, nodes, dist, parent }
    }

    pub fn leader(&self) -> UavId {
        self.leader
    }

    fn slot(&self, id: UavId) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    /// Path cost from `member` to the leader, `None` when unreachable.
    pub fn cost(&self, member: UavId) -> Option<f64> {
        self.slot(member).map(|i| self.dist[i]).filter(|d| d.is_finite())
    }

    pub fn path(&self, member: UavId) -> Result<RelayPath, RadioError> {
        let mut i = self.slot(member).ok_or(RadioError::NotMember(member))?;
        if !self.dist[i].is_finite() {
            return Err(RadioError::Unreachable { member, leader: self.leader });
        }
        let cost = self.dist[i];
        let mut hops = Vec::new();
        while let Some(p) = self.parent[i] {
            hops.push(self.nodes[p]);
            i = p;
        }
        Ok(RelayPath { hops, cost })
    }

    pub fn hop_count(&self, member: UavId) -> Option<usize> {
        let mut i = self.slot(member)?;
        if !self.dist[i].is_finite() {
            return None;
        }
        let mut hops = 0;
        while let Some(p) = self.parent[i] {
            hops += 1;
            i = p;
        }
        Some(hops)
    }
}

/// Minimum-cost route from `member` to `leader` using only coalition members
/// as relays.
pub fn relay_path(
    member: UavId,
    leader: UavId,
    members: &BTreeSet<UavId>,
    roster: &Roster,
    positions: &[Point],
    weights: &GameWeights,
) -> Result<RelayPath, RadioError> {
    if !members.contains(&leader) {
        return Err(RadioError::NotMember(leader));
    }
    RelayTree::build(leader, members, roster, positions, weights).path(member)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelayOffer {
    pub relay: UavId,
    pub quota: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelayMatching {
    pub assignments: BTreeMap<UavId, UavId>,
    /// Capacity left on each relay.
    pub quotas: BTreeMap<UavId, u32>,
}

impl RelayMatching {
    pub fn relay_of(&self, proposer: UavId) -> Option<UavId> {
        self.assignments.get(&proposer).copied()
    }

    pub fn load(&self, relay: UavId) -> usize {
        self.assignments.values().filter(|&&r| r == relay).count()
    }
}

/// Proposer preference list: in-range relays by ascending hop cost, then id.
pub fn proposer_preferences(
    proposer: UavId,
    relays: &[RelayOffer],
    roster: &Roster,
    positions: &[Point],
    weights: &GameWeights,
) -> Vec<UavId> {
    let ps = roster.spec(proposer);
    let pp = positions[roster.index_of(proposer)];
    let mut prefs: Vec<(f64, UavId)> = relays
        .iter()
        .filter_map(|r| {
            let rs = roster.spec(r.relay);
            let rp = positions[roster.index_of(r.relay)];
            in_range(ps, pp, rs, rp).then(|| (hop_cost(pp.distance(rp), weights), r.relay))
        })
        .collect();
    prefs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    prefs.into_iter().map(|(_, id)| id).collect()
}

/// Relay-side score of a proposer: link quality, higher preferred.
pub fn relay_score(relay: UavId, proposer: UavId, roster: &Roster, positions: &[Point], weights: &GameWeights) -> f64 {
    link_quality(
        roster.spec(relay),
        positions[roster.index_of(relay)],
        roster.spec(proposer),
        positions[roster.index_of(proposer)],
        weights,
    )
}

/// True when the relay strictly prefers `a` over `b`.
fn relay_prefers(score_a: f64, a: UavId, score_b: f64, b: UavId) -> bool {
    score_a > score_b || (score_a == score_b && a < b)
}

/// Proposer-optimal deferred acceptance with relay quotas.
pub fn relay_matching(
    proposers: &[UavId],
    relays: &[RelayOffer],
    roster: &Roster,
    positions: &[Point],
    weights: &GameWeights,
) -> RelayMatching {
    let mut order: Vec<UavId> = proposers.to_vec();
    order.sort();
    order.dedup();
    let prefs: BTreeMap<UavId, Vec<UavId>> = order
        .iter()
        .map(|&p| (p, proposer_preferences(p, relays, roster, positions, weights)))
        .collect();
    let quota: BTreeMap<UavId, u32> = relays.iter().map(|r| (r.relay, r.quota)).collect();
    let mut held: BTreeMap<UavId, Vec<UavId>> = relays.iter().map(|r| (r.relay, Vec::new())).collect();
    let mut next: BTreeMap<UavId, usize> = order.iter().map(|&p| (p, 0)).collect();
    let mut free: VecDeque<UavId> = order.iter().copied().collect();

    while let Some(p) = free.pop_front() {
        let list = &prefs[&p];
        let idx = next[&p];
        if idx >= list.len() {
            continue;
        }
        next.insert(p, idx + 1);
        let r = list[idx];
        let cap = quota[&r] as usize;
        let score_p = relay_score(r, p, roster, positions, weights);
        let slot = held.get_mut(&r).expect("relay listed");
        if slot.len() < cap {
            slot.push(p);
            continue;
        }
        // Full (or zero-capacity): displace the least preferred holder if p beats it.
        let worst = slot
            .iter()
            .enumerate()
            .map(|(i, &q)| (i, q, relay_score(r, q, roster, positions, weights)))
            .reduce(|w, c| if relay_prefers(w.2, w.1, c.2, c.1) { c } else { w });
        match worst {
            Some((i, q, score_q)) if relay_prefers(score_p, p, score_q, q) => {
                slot[i] = p;
                free.push_back(q);
            }
            _ => free.push_back(p),
        }
    }

    let mut matching = RelayMatching::default();
    for (r, holders) in &held {
        for &p in holders {
            matching.assignments.insert(p, *r);
        }
        matching.quotas.insert(*r, quota[r].saturating_sub(holders.len() as u32));
    }
    matching
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrafficCounts {
    pub safety: u64,
    pub fusion: u64,
    pub inter: u64,
}

impl TrafficCounts {
    pub fn get(&self, class: MessageClass) -> u64 {
        match class {
            MessageClass::SafetyBroadcast => self.safety,
            MessageClass::IntraCoalitionFusion => self.fusion,
            MessageClass::InterCoalitionShare => self.inter,
        }
    }

    pub fn add(&mut self, class: MessageClass, n: u64) {
        match class {
            MessageClass::SafetyBroadcast => self.safety += n,
            MessageClass::IntraCoalitionFusion => self.fusion += n,
            MessageClass::InterCoalitionShare => self.inter += n,
        }
    }

    pub fn total(&self) -> u64 {
        self.safety + self.fusion + self.inter
    }
}

/// Message tallies for one step.
///
/// Safety: every UAV sends one location broadcast to each in-range neighbour,
/// twice for UAVs in `emergency` coalitions. Fusion: one message per hop of
/// every member-to-ground-leader route. Inter-coalition: one coordination
/// exchange per adjacent coalition pair (sharing a member, or with some pair
/// of members in range).
pub fn account_traffic(
    partition: &PartitionState,
    roster: &Roster,
    positions: &[Point],
    weights: &GameWeights,
    emergency: &BTreeSet<UavId>,
) -> TrafficCounts {
    let mut counts = TrafficCounts::default();
    let specs = roster.specs();
    for (i, a) in specs.iter().enumerate() {
        let neighbours = specs
            .iter()
            .enumerate()
            .filter(|&(j, b)| j != i && in_range(a, positions[i], b, positions[j]))
            .count() as u64;
        let factor = if emergency.contains(&a.id) { 2 } else { 1 };
        counts.add(MessageClass::SafetyBroadcast, neighbours * factor);
    }

    for c in partition.coalitions().values() {
        let tree = RelayTree::build(c.ground_leader, &c.members, roster, positions, weights);
        let hops: usize = c.members.iter().filter_map(|&m| tree.hop_count(m)).sum();
        counts.add(MessageClass::IntraCoalitionFusion, hops as u64);
    }

    let list: Vec<_> = partition.coalitions().values().collect();
    for (i, c1) in list.iter().enumerate() {
        for c2 in &list[i + 1..] {
            if coalitions_adjacent(&c1.members, &c2.members, roster, positions) {
                counts.add(MessageClass::InterCoalitionShare, 1);
            }
        }
    }
    counts
}

pub fn coalitions_adjacent(a: &BTreeSet<UavId>, b: &BTreeSet<UavId>, roster: &Roster, positions: &[Point]) -> bool {
    if a.intersection(b).next().is_some() {
        return true;
    }
    a.iter().any(|&u| {
        let (su, pu) = (roster.spec(u), positions[roster.index_of(u)]);
        b.iter().any(|&v| in_range(su, pu, roster.spec(v), positions[roster.index_of(v)]))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::UavSpec;

    fn spec(id: u32, range: f64) -> UavSpec {
        UavSpec {
            id: UavId(id),
            start_pos: Point::new(0.0, 0.0),
            coverage_radius_m: 1000.0,
            comm_range_m: range,
            transceivers: 2,
            ground_link_quality: 0.0,
            relay_quota: 1,
            max_move_m: 100.0,
        }
    }

    fn w() -> GameWeights {
        GameWeights { w_cov: 1.0, w_ovh: 0.1, overhead_ref_m: 1000.0, path_loss_exp: 2.0 }
    }

    #[test]
    fn link_quality_reference_points() {
        let (a, b) = (spec(0, 3000.0), spec(1, 3000.0));
        let o = Point::new(0.0, 0.0);
        assert_eq!(link_quality(&a, o, &b, o, &w()), 1.0);
        assert_eq!(link_quality(&a, o, &b, Point::new(1000.0, 0.0), &w()), 0.5);
        assert_eq!(link_quality(&a, o, &b, Point::new(3000.1, 0.0), &w()), 0.0);
        // Shorter range of the pair governs.
        let short = spec(2, 500.0);
        assert_eq!(link_quality(&a, o, &short, Point::new(600.0, 0.0), &w()), 0.0);
        assert_eq!(link_quality(&short, Point::new(600.0, 0.0), &a, o, &w()), 0.0);
    }

    #[test]
    fn collinear_relay_beats_out_of_range_direct_link() {
        let range = 3000.0;
        let specs = vec![spec(0, range), spec(1, range), spec(2, range)];
        let roster = Roster::new(&specs);
        let gap = 0.8 * range;
        let pos = vec![Point::new(0.0, 0.0), Point::new(gap, 0.0), Point::new(2.0 * gap, 0.0)];
        let members: BTreeSet<UavId> = [0, 1, 2].map(UavId).into();
        let path = relay_path(UavId(2), UavId(0), &members, &roster, &pos, &w()).unwrap();
        assert_eq!(path.hops, vec![UavId(1), UavId(0)]);
        let expected = 2.0 * (gap / 1000.0f64).powi(2);
        assert!((path.cost - expected).abs() < 1e-12);

        let same = relay_path(UavId(0), UavId(0), &members, &roster, &pos, &w()).unwrap();
        assert!(same.hops.is_empty());
        assert_eq!(same.cost, 0.0);
    }

    #[test]
    fn isolated_member_is_unreachable() {
        let specs = vec![spec(0, 1000.0), spec(1, 1000.0)];
        let roster = Roster::new(&specs);
        let pos = vec![Point::new(0.0, 0.0), Point::new(5000.0, 0.0)];
        let members: BTreeSet<UavId> = [0, 1].map(UavId).into();
        let err = relay_path(UavId(1), UavId(0), &members, &roster, &pos, &w()).unwrap_err();
        assert_eq!(err, RadioError::Unreachable { member: UavId(1), leader: UavId(0) });
    }

    #[test]
    fn single_relay_takes_higher_quality_proposer() {
        let specs = vec![spec(0, 3000.0), spec(1, 3000.0), spec(2, 3000.0)];
        let roster = Roster::new(&specs);
        // Relay 2 at origin; proposer 1 is closer than proposer 0.
        let pos = vec![Point::new(1500.0, 0.0), Point::new(0.0, 700.0), Point::new(0.0, 0.0)];
        let relays = [RelayOffer { relay: UavId(2), quota: 1 }];
        let m = relay_matching(&[UavId(0), UavId(1)], &relays, &roster, &pos, &w());
        assert_eq!(m.relay_of(UavId(1)), Some(UavId(2)));
        assert_eq!(m.relay_of(UavId(0)), None);
        assert_eq!(m.quotas[&UavId(2)], 0);
    }

    #[test]
    fn zero_quota_relay_accepts_nobody() {
        let specs = vec![spec(0, 3000.0), spec(1, 3000.0)];
        let roster = Roster::new(&specs);
        let pos = vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        let m = relay_matching(&[UavId(0)], &[RelayOffer { relay: UavId(1), quota: 0 }], &roster, &pos, &w());
        assert!(m.assignments.is_empty());
    }
}
