//! Overlapping coalition structure with dual leadership.
//!
//! Every UAV belongs to at least one coalition and to at most as many as it
//! has transceivers. One membership is its primary ("home") coalition. Each
//! coalition elects a ground-connecting leader (best backhaul) and a
//! task-guiding leader (highest local importance); the two roles may fall on
//! the same drone.

use crate::event::{Change, EventKind};
use crate::geometry::Point;
use crate::ids::{CoalitionId, UavId};
use crate::radio::{in_range, RelayTree};
use crate::scenario::{importance_at, GameWeights, ImportanceField, Roster};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PartitionError {
    #[error("unknown coalition {0}")]
    UnknownCoalition(CoalitionId),
    #[error("cannot merge coalition {0} with itself")]
    SelfMerge(CoalitionId),
    #[error("split subset must be a strict non-empty subset of coalition {0}")]
    InvalidSubset(CoalitionId),
    #[error("UAV {0} has no free transceiver")]
    NoFreeTransceiver(UavId),
    #[error("UAV {0} cannot leave its last coalition {1}")]
    LastMembership(UavId, CoalitionId),
    #[error("UAV {0} is already a member of coalition {1}")]
    AlreadyMember(UavId, CoalitionId),
    #[error("UAV {0} is not a member of coalition {1}")]
    NotMember(UavId, CoalitionId),
    #[error("unknown UAV {0}")]
    UnknownUav(UavId),
    #[error("partition invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coalition {
    pub id: CoalitionId,
    pub members: BTreeSet<UavId>,
    pub ground_leader: UavId,
    pub task_leader: UavId,
    pub channel: u32,
    pub emergency: bool,
}

/// What leader election needs to know about the world.
#[derive(Clone, Copy)]
pub struct ElectionEnv<'a> {
    pub roster: &'a Roster,
    pub positions: &'a [Point],
    pub fields: &'a [ImportanceField],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Leaders {
    pub ground: UavId,
    pub task: UavId,
    /// No member has any backhaul.
    pub no_backhaul: bool,
}

/// Ground leader: best backhaul quality. Task leader: highest importance at
/// its position. Ties go to the lowest id.
pub fn elect_leaders(members: &BTreeSet<UavId>, env: &ElectionEnv<'_>) -> Leaders {
    let mut iter = members.iter().copied();
    let first = iter.next().expect("coalition has members");
    let quality = |u: UavId| env.roster.spec(u).ground_link_quality;
    let importance = |u: UavId| importance_at(env.fields, env.positions[env.roster.index_of(u)]);
    let (mut ground, mut best_q) = (first, quality(first));
    let (mut task, mut best_i) = (first, importance(first));
    for u in iter {
        let q = quality(u);
        if q > best_q {
            ground = u;
            best_q = q;
        }
        let i = importance(u);
        if i > best_i {
            task = u;
            best_i = i;
        }
    }
    Leaders { ground, task, no_backhaul: best_q <= 0.0 }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PartitionState {
    coalitions: BTreeMap<CoalitionId, Coalition>,
    membership: BTreeMap<UavId, BTreeSet<CoalitionId>>,
    primary_of: BTreeMap<UavId, CoalitionId>,
    next_id: u32,
}

/// Outcome of an emergency check on one coalition.
#[derive(Debug, Clone, PartialEq)]
pub struct EmergencyCheck {
    pub emergency: bool,
    pub low_backhaul: bool,
    pub fragmented: bool,
    /// Coalition to merge with, when one with adequate backhaul is in range.
    pub merge_with: Option<CoalitionId>,
}

impl PartitionState {
    /// One singleton coalition per UAV; coalition ids follow roster order.
    pub fn singletons(env: &ElectionEnv<'_>) -> Self {
        let groups: Vec<Vec<UavId>> = env.roster.ids().map(|u| vec![u]).collect();
        Self::from_groups(&groups, env).expect("singletons are valid")
    }

    /// Builds a partition from explicit member lists: coalition `i` gets id
    /// `i`, and each UAV's primary is the first group listing it.
    pub fn from_groups(groups: &[Vec<UavId>], env: &ElectionEnv<'_>) -> Result<Self, PartitionError> {
        let mut p = PartitionState::default();
        for (i, g) in groups.iter().enumerate() {
            let id = CoalitionId(i as u32);
            let members: BTreeSet<UavId> = g.iter().copied().collect();
            if members.is_empty() {
                return Err(PartitionError::Invariant(format!("group {i} is empty")));
            }
            for &u in &members {
                if env.roster.try_index_of(u).is_none() {
                    return Err(PartitionError::UnknownUav(u));
                }
                p.membership.entry(u).or_default().insert(id);
                p.primary_of.entry(u).or_insert(id);
            }
            p.insert_coalition(id, members, 0, env);
        }
        p.next_id = groups.len() as u32;
        p.validate(env.roster)?;
        Ok(p)
    }

    fn fresh_id(&mut self) -> CoalitionId {
        let id = CoalitionId(self.next_id);
        self.next_id += 1;
        id
    }

    fn insert_coalition(&mut self, id: CoalitionId, members: BTreeSet<UavId>, channel: u32, env: &ElectionEnv<'_>) {
        let leaders = elect_leaders(&members, env);
        self.coalitions.insert(
            id,
            Coalition {
                id,
                members,
                ground_leader: leaders.ground,
                task_leader: leaders.task,
                channel,
                emergency: leaders.no_backhaul,
            },
        );
    }

    pub fn coalitions(&self) -> &BTreeMap<CoalitionId, Coalition> {
        &self.coalitions
    }

    pub fn coalition(&self, id: CoalitionId) -> Option<&Coalition> {
        self.coalitions.get(&id)
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = CoalitionId> + '_ {
        self.coalitions.keys().copied()
    }

    pub fn memberships(&self, u: UavId) -> &BTreeSet<CoalitionId> {
        static EMPTY: BTreeSet<CoalitionId> = BTreeSet::new();
        self.membership.get(&u).unwrap_or(&EMPTY)
    }

    pub fn primary_of(&self, u: UavId) -> Option<CoalitionId> {
        self.primary_of.get(&u).copied()
    }

    pub fn next_id(&self) -> CoalitionId {
        CoalitionId(self.next_id)
    }

    pub fn set_channel(&mut self, c: CoalitionId, channel: u32) {
        if let Some(co) = self.coalitions.get_mut(&c) {
            co.channel = channel;
        }
    }

    pub fn set_emergency(&mut self, c: CoalitionId, flag: bool) {
        if let Some(co) = self.coalitions.get_mut(&c) {
            co.emergency = flag;
        }
    }

    /// Re-runs leader election, keeping channel. The emergency flag is reset
    /// to "no member has backhaul".
    pub fn reelect(&mut self, c: CoalitionId, env: &ElectionEnv<'_>) {
        if let Some(co) = self.coalitions.get_mut(&c) {
            let l = elect_leaders(&co.members, env);
            co.ground_leader = l.ground;
            co.task_leader = l.task;
            co.emergency = l.no_backhaul;
        }
    }

    pub fn reelect_all(&mut self, env: &ElectionEnv<'_>) {
        let ids: Vec<_> = self.ids().collect();
        for c in ids {
            self.reelect(c, env);
        }
    }

    /// Leaders of `c` may depend on `u`'s position; re-elect every coalition `u` is in.
    pub fn reelect_memberships(&mut self, u: UavId, env: &ElectionEnv<'_>) {
        let cs: Vec<_> = self.memberships(u).iter().copied().collect();
        for c in cs {
            self.reelect(c, env);
        }
    }

    fn free_slots(&self, u: UavId, roster: &Roster) -> usize {
        (roster.spec(u).transceivers as usize).saturating_sub(self.memberships(u).len())
    }

    pub fn has_free_transceiver(&self, u: UavId, roster: &Roster) -> bool {
        self.free_slots(u, roster) > 0
    }

    /// Unites two coalitions under a fresh id. Shared members keep one
    /// membership, which frees a transceiver.
    pub fn merge(&mut self, c1: CoalitionId, c2: CoalitionId, env: &ElectionEnv<'_>) -> Result<Change, PartitionError> {
        if c1 == c2 {
            return Err(PartitionError::SelfMerge(c1));
        }
        let a = self.coalitions.get(&c1).ok_or(PartitionError::UnknownCoalition(c1))?;
        let b = self.coalitions.get(&c2).ok_or(PartitionError::UnknownCoalition(c2))?;
        let union: BTreeSet<UavId> = a.members.union(&b.members).copied().collect();
        let channel = a.channel;
        self.coalitions.remove(&c1);
        self.coalitions.remove(&c2);
        let id = self.fresh_id();
        for &u in &union {
            let ms = self.membership.get_mut(&u).expect("member has memberships");
            ms.remove(&c1);
            ms.remove(&c2);
            ms.insert(id);
            if let Some(p) = self.primary_of.get_mut(&u) {
                if *p == c1 || *p == c2 {
                    *p = id;
                }
            }
        }
        // A union never raises anyone's membership count, so transceiver
        // bounds cannot overflow here.
        self.insert_coalition(id, union.clone(), channel, env);
        Ok(Change::new(EventKind::Merge, vec![c1, c2, id], union.into_iter().collect()))
    }

    /// Moves `subset` out of `c` into a fresh coalition; `c` keeps its id.
    pub fn split(&mut self, c: CoalitionId, subset: &BTreeSet<UavId>, env: &ElectionEnv<'_>) -> Result<Change, PartitionError> {
        let co = self.coalitions.get(&c).ok_or(PartitionError::UnknownCoalition(c))?;
        if subset.is_empty() || !subset.is_subset(&co.members) || subset.len() == co.members.len() {
            return Err(PartitionError::InvalidSubset(c));
        }
        let channel = co.channel;
        let id = self.fresh_id();
        let co = self.coalitions.get_mut(&c).expect("checked");
        for u in subset {
            co.members.remove(u);
        }
        for &u in subset {
            let ms = self.membership.get_mut(&u).expect("member has memberships");
            ms.remove(&c);
            ms.insert(id);
            if self.primary_of.get(&u) == Some(&c) {
                self.primary_of.insert(u, id);
            }
        }
        self.insert_coalition(id, subset.clone(), channel, env);
        self.reelect(c, env);
        Ok(Change::new(EventKind::Split, vec![c, id], subset.iter().copied().collect()))
    }

    pub fn join(&mut self, u: UavId, c: CoalitionId, env: &ElectionEnv<'_>) -> Result<Change, PartitionError> {
        if env.roster.try_index_of(u).is_none() {
            return Err(PartitionError::UnknownUav(u));
        }
        let co = self.coalitions.get(&c).ok_or(PartitionError::UnknownCoalition(c))?;
        if co.members.contains(&u) {
            return Err(PartitionError::AlreadyMember(u, c));
        }
        if !self.has_free_transceiver(u, env.roster) {
            return Err(PartitionError::NoFreeTransceiver(u));
        }
        self.coalitions.get_mut(&c).expect("checked").members.insert(u);
        self.membership.entry(u).or_default().insert(c);
        self.primary_of.entry(u).or_insert(c);
        self.reelect(c, env);
        Ok(Change::new(EventKind::Join, vec![c], vec![u]))
    }

    /// Removes `u` from `c`. `u` must keep another membership. A coalition
    /// left empty is deleted (reported in the change detail).
    pub fn leave(&mut self, u: UavId, c: CoalitionId, env: &ElectionEnv<'_>) -> Result<Change, PartitionError> {
        let co = self.coalitions.get(&c).ok_or(PartitionError::UnknownCoalition(c))?;
        if !co.members.contains(&u) {
            return Err(PartitionError::NotMember(u, c));
        }
        if self.memberships(u).len() <= 1 {
            return Err(PartitionError::LastMembership(u, c));
        }
        let dissolved = self.detach(u, c, env);
        if self.primary_of.get(&u) == Some(&c) {
            let first = *self.memberships(u).iter().next().expect("kept a membership");
            self.primary_of.insert(u, first);
        }
        let change = Change::new(EventKind::Leave, vec![c], vec![u]);
        Ok(if dissolved { change.with_detail("dissolved") } else { change })
    }

    /// Drops the membership and deletes or re-elects `c`. Returns whether `c` was deleted.
    fn detach(&mut self, u: UavId, c: CoalitionId, env: &ElectionEnv<'_>) -> bool {
        let co = self.coalitions.get_mut(&c).expect("caller checked");
        co.members.remove(&u);
        let empty = co.members.is_empty();
        if empty {
            self.coalitions.remove(&c);
        } else {
            self.reelect(c, env);
        }
        if let Some(ms) = self.membership.get_mut(&u) {
            ms.remove(&c);
        }
        empty
    }

    /// Moves `u`'s primary membership to `target`, or to a freshly founded
    /// singleton when `target` is `None`. If `u` already belongs to `target`
    /// the old primary membership is simply dropped.
    pub fn switch_primary(&mut self, u: UavId, target: Option<CoalitionId>, env: &ElectionEnv<'_>) -> Result<Change, PartitionError> {
        let old = self.primary_of(u).ok_or(PartitionError::UnknownUav(u))?;
        if let Some(t) = target {
            if t == old {
                return Err(PartitionError::AlreadyMember(u, t));
            }
            if !self.coalitions.contains_key(&t) {
                return Err(PartitionError::UnknownCoalition(t));
            }
        }
        let channel = self.coalitions[&old].channel;
        let dissolved = self.detach(u, old, env);
        let (kind, dest) = match target {
            Some(t) => {
                let co = self.coalitions.get_mut(&t).expect("checked");
                co.members.insert(u);
                self.membership.entry(u).or_default().insert(t);
                self.reelect(t, env);
                (EventKind::Switch, t)
            }
            None => {
                let id = self.fresh_id();
                self.membership.entry(u).or_default().insert(id);
                self.insert_coalition(id, BTreeSet::from([u]), channel, env);
                (EventKind::Found, id)
            }
        };
        self.primary_of.insert(u, dest);
        let change = Change::new(kind, vec![old, dest], vec![u]);
        Ok(if dissolved { change.with_detail("dissolved") } else { change })
    }

    /// Flags `c` when its ground leader's backhaul is below `theta` or any
    /// member cannot reach the ground leader. A flagged coalition is offered
    /// the nearest other coalition (by ground-leader distance) whose ground
    /// leader is in range and has backhaul of at least `theta`.
    pub fn check_emergency(
        &mut self,
        c: CoalitionId,
        theta: f64,
        env: &ElectionEnv<'_>,
        weights: &GameWeights,
    ) -> Result<EmergencyCheck, PartitionError> {
        let co = self.coalitions.get(&c).ok_or(PartitionError::UnknownCoalition(c))?;
        let roster = env.roster;
        let gl = co.ground_leader;
        let low_backhaul = roster.spec(gl).ground_link_quality < theta;
        let tree = RelayTree::build(gl, &co.members, roster, env.positions, weights);
        let fragmented = co.members.iter().any(|&m| tree.cost(m).is_none());
        let emergency = low_backhaul || fragmented;
        let mut merge_with = None;
        if emergency {
            let (gs, gp) = (roster.spec(gl), env.positions[roster.index_of(gl)]);
            let mut best: Option<(f64, CoalitionId)> = None;
            for other in self.coalitions.values() {
                if other.id == c {
                    continue;
                }
                let ol = other.ground_leader;
                let (os, op) = (roster.spec(ol), env.positions[roster.index_of(ol)]);
                if os.ground_link_quality < theta || !in_range(gs, gp, os, op) {
                    continue;
                }
                let d = gp.distance(op);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, other.id));
                }
            }
            merge_with = best.map(|(_, id)| id);
        }
        self.set_emergency(c, emergency);
        Ok(EmergencyCheck { emergency, low_backhaul, fragmented, merge_with })
    }

    /// Checks every structural invariant.
    pub fn validate(&self, roster: &Roster) -> Result<(), PartitionError> {
        let bad = |m: String| Err(PartitionError::Invariant(m));
        for (id, co) in &self.coalitions {
            if co.id != *id {
                return bad(format!("coalition keyed {id} carries id {}", co.id));
            }
            if co.members.is_empty() {
                return bad(format!("coalition {id} is empty"));
            }
            if !co.members.contains(&co.ground_leader) || !co.members.contains(&co.task_leader) {
                return bad(format!("coalition {id} has a leader outside its members"));
            }
            if id.0 >= self.next_id {
                return bad(format!("coalition {id} not below next id {}", self.next_id));
            }
            for u in &co.members {
                if !self.memberships(*u).contains(id) {
                    return bad(format!("UAV {u} in coalition {id} but membership map disagrees"));
                }
            }
        }
        for spec in roster.specs() {
            let u = spec.id;
            let ms = self.memberships(u);
            if ms.is_empty() {
                return bad(format!("UAV {u} has no coalition"));
            }
            if ms.len() > spec.transceivers as usize {
                return bad(format!("UAV {u} holds {} memberships with {} transceivers", ms.len(), spec.transceivers));
            }
            match self.primary_of(u) {
                Some(p) if ms.contains(&p) => {}
                _ => return bad(format!("UAV {u} primary coalition not among its memberships")),
            }
            for c in ms {
                match self.coalitions.get(c) {
                    Some(co) if co.members.contains(&u) => {}
                    _ => return bad(format!("UAV {u} lists coalition {c} which does not contain it")),
                }
            }
        }
        if self.membership.len() != roster.len() || self.primary_of.len() != roster.len() {
            return bad("membership maps cover UAVs outside the roster".into());
        }
        Ok(())
    }

    /// Membership sets only, for structural comparisons that ignore ids.
    pub fn member_sets(&self) -> BTreeSet<BTreeSet<UavId>> {
        self.coalitions.values().map(|c| c.members.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::UavSpec;

    fn roster(qualities: &[(u32, f64)], transceivers: u32) -> Roster {
        let specs: Vec<UavSpec> = qualities
            .iter()
            .map(|&(id, q)| UavSpec {
                id: UavId(id),
                start_pos: Point::new(0.0, 0.0),
                coverage_radius_m: 1000.0,
                comm_range_m: 3000.0,
                transceivers,
                ground_link_quality: q,
                relay_quota: 0,
                max_move_m: 100.0,
            })
            .collect();
        Roster::new(&specs)
    }

    fn ids(v: &[u32]) -> BTreeSet<UavId> {
        v.iter().map(|&i| UavId(i)).collect()
    }

    #[test]
    fn one_member_holds_both_roles() {
        let r = roster(&[(4, 0.3)], 1);
        let pos = vec![Point::new(0.0, 0.0)];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[] };
        let l = elect_leaders(&ids(&[4]), &env);
        assert_eq!((l.ground, l.task), (UavId(4), UavId(4)));
    }

    #[test]
    fn roles_split_between_backhaul_and_task_position() {
        let r = roster(&[(3, 0.9), (7, 0.2)], 1);
        let field = ImportanceField { center: Point::new(2000.0, 0.0), sigma_m: 500.0, peak: 1.0 };
        let pos = vec![Point::new(0.0, 0.0), Point::new(2000.0, 0.0)];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[field] };
        let l = elect_leaders(&ids(&[3, 7]), &env);
        assert_eq!(l.ground, UavId(3));
        assert_eq!(l.task, UavId(7));
        assert!(!l.no_backhaul);
    }

    #[test]
    fn no_backhaul_falls_back_to_lowest_id() {
        let r = roster(&[(2, 0.0), (5, 0.0), (9, 0.0)], 1);
        let pos = vec![Point::new(0.0, 0.0); 3];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[] };
        let p = PartitionState::from_groups(&[vec![UavId(9), UavId(5), UavId(2)]], &env).unwrap();
        let c = &p.coalitions()[&CoalitionId(0)];
        assert_eq!(c.ground_leader, UavId(2));
        assert!(c.emergency);
    }

    #[test]
    fn merge_then_split_restores_member_sets() {
        let r = roster(&[(1, 0.5), (2, 0.0), (3, 0.4)], 2);
        let pos = vec![Point::new(0.0, 0.0); 3];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[] };
        let mut p = PartitionState::from_groups(&[vec![UavId(1), UavId(2)], vec![UavId(3)]], &env).unwrap();
        let before = p.member_sets();
        let change = p.merge(CoalitionId(0), CoalitionId(1), &env).unwrap();
        let merged = change.coalitions[2];
        assert_eq!(p.coalitions()[&merged].members, ids(&[1, 2, 3]));
        assert_eq!(p.coalitions()[&merged].ground_leader, UavId(1));
        p.validate(&r).unwrap();
        p.split(merged, &ids(&[3]), &env).unwrap();
        assert_eq!(p.member_sets(), before);
        p.validate(&r).unwrap();
    }

    #[test]
    fn merge_with_shared_member_frees_a_transceiver() {
        let r = roster(&[(1, 0.5), (5, 0.1), (3, 0.4)], 2);
        let pos = vec![Point::new(0.0, 0.0); 3];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[] };
        let mut p =
            PartitionState::from_groups(&[vec![UavId(1), UavId(5)], vec![UavId(3), UavId(5)]], &env).unwrap();
        assert_eq!(p.memberships(UavId(5)).len(), 2);
        p.merge(CoalitionId(0), CoalitionId(1), &env).unwrap();
        assert_eq!(p.memberships(UavId(5)).len(), 1);
        p.validate(&r).unwrap();
    }

    #[test]
    fn merge_errors() {
        let r = roster(&[(1, 0.5)], 1);
        let pos = vec![Point::new(0.0, 0.0)];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[] };
        let mut p = PartitionState::singletons(&env);
        assert_eq!(p.merge(CoalitionId(0), CoalitionId(0), &env), Err(PartitionError::SelfMerge(CoalitionId(0))));
        assert_eq!(
            p.merge(CoalitionId(0), CoalitionId(8), &env),
            Err(PartitionError::UnknownCoalition(CoalitionId(8)))
        );
    }

    #[test]
    fn split_keeps_remainder_and_rejects_bad_subsets() {
        let r = roster(&[(1, 0.5), (2, 0.0), (3, 0.4), (4, 0.0)], 1);
        let pos = vec![Point::new(0.0, 0.0); 4];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[] };
        let all = vec![UavId(1), UavId(2), UavId(3), UavId(4)];
        let mut p = PartitionState::from_groups(&[all], &env).unwrap();
        let snapshot = p.clone();
        assert_eq!(p.split(CoalitionId(0), &ids(&[]), &env), Err(PartitionError::InvalidSubset(CoalitionId(0))));
        assert_eq!(
            p.split(CoalitionId(0), &ids(&[1, 2, 3, 4]), &env),
            Err(PartitionError::InvalidSubset(CoalitionId(0)))
        );
        assert_eq!(p, snapshot);
        p.split(CoalitionId(0), &ids(&[3, 4]), &env).unwrap();
        assert_eq!(p.member_sets(), BTreeSet::from([ids(&[1, 2]), ids(&[3, 4])]));
        assert_eq!(p.coalitions()[&CoalitionId(1)].ground_leader, UavId(3));
        p.validate(&r).unwrap();
    }

    #[test]
    fn join_and_leave_respect_bounds() {
        let r = roster(&[(1, 0.5), (2, 0.5), (3, 0.5)], 2);
        let pos = vec![Point::new(0.0, 0.0); 3];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[] };
        let mut p = PartitionState::singletons(&env);
        p.join(UavId(1), CoalitionId(1), &env).unwrap();
        assert_eq!(p.memberships(UavId(1)).len(), 2);
        assert_eq!(p.join(UavId(1), CoalitionId(2), &env), Err(PartitionError::NoFreeTransceiver(UavId(1))));
        assert_eq!(
            p.leave(UavId(2), CoalitionId(1), &env),
            Err(PartitionError::LastMembership(UavId(2), CoalitionId(1)))
        );
        // Last remaining member of coalition 0 leaves: coalition is deleted.
        let change = p.leave(UavId(1), CoalitionId(0), &env).unwrap();
        assert_eq!(change.detail, "dissolved");
        assert!(p.coalition(CoalitionId(0)).is_none());
        assert_eq!(p.primary_of(UavId(1)), Some(CoalitionId(1)));
        p.validate(&r).unwrap();
    }

    #[test]
    fn three_transceivers_allow_three_memberships() {
        let r = roster(&[(0, 0.5), (1, 0.5), (2, 0.5), (3, 0.5)], 3);
        let pos = vec![Point::new(0.0, 0.0); 4];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[] };
        let mut p = PartitionState::singletons(&env);
        p.join(UavId(0), CoalitionId(1), &env).unwrap();
        p.join(UavId(0), CoalitionId(2), &env).unwrap();
        assert_eq!(p.memberships(UavId(0)).len(), 3);
        assert!(p.join(UavId(0), CoalitionId(3), &env).is_err());
        p.validate(&r).unwrap();
    }

    #[test]
    fn emergency_checks() {
        let r = roster(&[(0, 0.9), (1, 0.0), (2, 0.0)], 1);
        let pos = vec![Point::new(0.0, 0.0), Point::new(1000.0, 0.0), Point::new(9000.0, 0.0)];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[] };
        let w = GameWeights::default();
        let mut p = PartitionState::singletons(&env);
        let ok = p.check_emergency(CoalitionId(0), 0.2, &env, &w).unwrap();
        assert!(!ok.emergency);
        let e = p.check_emergency(CoalitionId(1), 0.2, &env, &w).unwrap();
        assert!(e.emergency && e.low_backhaul);
        assert_eq!(e.merge_with, Some(CoalitionId(0)));
        // Too far from any backhauled leader: flagged, nothing to merge with.
        let far = p.check_emergency(CoalitionId(2), 0.2, &env, &w).unwrap();
        assert!(far.emergency);
        assert_eq!(far.merge_with, None);

        let mut frag = PartitionState::from_groups(&[vec![UavId(0), UavId(2)], vec![UavId(1)]], &env).unwrap();
        let f = frag.check_emergency(CoalitionId(0), 0.2, &env, &w).unwrap();
        assert!(f.emergency && f.fragmented && !f.low_backhaul);
        assert!(frag.coalitions()[&CoalitionId(0)].emergency);
    }

    #[test]
    fn switch_primary_into_existing_secondary_drops_old_home() {
        let r = roster(&[(0, 0.5), (1, 0.5)], 2);
        let pos = vec![Point::new(0.0, 0.0); 2];
        let env = ElectionEnv { roster: &r, positions: &pos, fields: &[] };
        let mut p = PartitionState::from_groups(&[vec![UavId(0)], vec![UavId(0), UavId(1)]], &env).unwrap();
        p.switch_primary(UavId(0), Some(CoalitionId(1)), &env).unwrap();
        assert_eq!(p.memberships(UavId(0)).len(), 1);
        assert!(p.coalition(CoalitionId(0)).is_none());
        p.switch_primary(UavId(1), None, &env).unwrap();
        assert_eq!(p.len(), 2);
        p.validate(&r).unwrap();
    }
}
