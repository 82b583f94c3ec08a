mod common;

use common::{field, uav};
use fanet_core::coalition::{elect_leaders, ElectionEnv};
use fanet_core::scenario::{GameWeights, ImportanceField, Roster, UavSpec};
use fanet_core::{CoalitionId, EventKind, PartitionError, PartitionState, Point, UavId};
use proptest::prelude::*;
use std::collections::BTreeSet;

fn set(ids: &[u32]) -> BTreeSet<UavId> {
    ids.iter().map(|&i| UavId(i)).collect()
}

#[test]
fn leader_roles_can_fall_on_different_drones() {
    let mut a = uav(3, 0.0, 0.0);
    a.ground_link_quality = 0.9;
    let mut b = uav(7, 4000.0, 0.0);
    b.ground_link_quality = 0.2;
    let roster = Roster::new(&[a, b]);
    let pos = roster.start_positions();
    let fields = [field(4000.0, 0.0, 1000.0)];
    let env = ElectionEnv { roster: &roster, positions: &pos, fields: &fields };
    let l = elect_leaders(&set(&[3, 7]), &env);
    assert_eq!((l.ground, l.task), (UavId(3), UavId(7)));
    assert!(!l.no_backhaul);
}

#[test]
fn no_backhaul_flags_emergency() {
    let roster = Roster::new(&[uav(5, 0.0, 0.0), uav(2, 10.0, 0.0), uav(9, 20.0, 0.0)]);
    let pos = roster.start_positions();
    let env = ElectionEnv { roster: &roster, positions: &pos, fields: &[] };
    let p = PartitionState::from_groups(&[vec![UavId(5), UavId(2), UavId(9)]], &env).unwrap();
    let c = &p.coalitions()[&CoalitionId(0)];
    assert_eq!(c.ground_leader, UavId(2));
    assert!(c.emergency);
}

#[test]
fn emergency_requests_merge_with_backhauled_neighbour() {
    let mut far = uav(0, 9000.0, 0.0);
    far.ground_link_quality = 0.95;
    let mut near = uav(1, 2000.0, 0.0);
    near.ground_link_quality = 0.5;
    let mut weak = uav(3, 1500.0, 0.0);
    weak.ground_link_quality = 0.05;
    let roster = Roster::new(&[far, near, uav(2, 0.0, 0.0), weak]);
    let pos = roster.start_positions();
    let env = ElectionEnv { roster: &roster, positions: &pos, fields: &[] };
    let mut p = PartitionState::singletons(&env);
    let w = GameWeights::default();
    let out = p.check_emergency(CoalitionId(2), 0.1, &env, &w).unwrap();
    assert!(out.emergency && out.low_backhaul);
    // The weak-backhaul coalition 3 is nearer but below theta; 0 is out of range.
    assert_eq!(out.merge_with, Some(CoalitionId(1)));
    assert!(p.coalitions()[&CoalitionId(2)].emergency);
    let fine = p.check_emergency(CoalitionId(1), 0.1, &env, &w).unwrap();
    assert!(!fine.emergency);
}

#[test]
fn merge_and_split_examples() {
    let roster = Roster::new(&(1..=5).map(|i| uav(i, 0.0, 0.0)).collect::<Vec<_>>());
    let pos = roster.start_positions();
    let env = ElectionEnv { roster: &roster, positions: &pos, fields: &[] };
    let groups = vec![vec![UavId(1), UavId(2)], vec![UavId(3)], vec![UavId(4), UavId(5)], vec![UavId(5)]];
    let mut p = PartitionState::from_groups(&groups, &env).unwrap();
    let ch = p.merge(CoalitionId(0), CoalitionId(1), &env).unwrap();
    assert_eq!(ch.kind, EventKind::Merge);
    let merged = ch.coalitions[2];
    assert_eq!(p.coalitions()[&merged].members, set(&[1, 2, 3]));
    assert_eq!(p.memberships(UavId(5)).len(), 2);
    let ch = p.merge(CoalitionId(2), CoalitionId(3), &env).unwrap();
    assert_eq!(p.coalitions()[&ch.coalitions[2]].members, set(&[4, 5]));
    assert_eq!(p.memberships(UavId(5)).len(), 1);
    assert_eq!(p.merge(merged, merged, &env), Err(PartitionError::SelfMerge(merged)));
    assert_eq!(p.merge(merged, CoalitionId(99), &env), Err(PartitionError::UnknownCoalition(CoalitionId(99))));

    let roster = Roster::new(&(1..=4).map(|i| uav(i, 0.0, 0.0)).collect::<Vec<_>>());
    let env = ElectionEnv { roster: &roster, positions: &pos[..4], fields: &[] };
    let mut p = PartitionState::from_groups(&[vec![UavId(1), UavId(2), UavId(3), UavId(4)]], &env).unwrap();
    let ch = p.split(CoalitionId(0), &set(&[3, 4]), &env).unwrap();
    assert_eq!(ch.kind, EventKind::Split);
    assert_eq!(p.member_sets(), BTreeSet::from([set(&[1, 2]), set(&[3, 4])]));
    let c = CoalitionId(0);
    assert_eq!(p.split(c, &BTreeSet::new(), &env), Err(PartitionError::InvalidSubset(c)));
    assert_eq!(p.split(c, &set(&[1, 2]), &env), Err(PartitionError::InvalidSubset(c)));
}

#[test]
fn join_leave_examples() {
    let roster = Roster::new(&[uav(0, 0.0, 0.0), uav(1, 0.0, 0.0), uav(2, 0.0, 0.0)]);
    let pos = roster.start_positions();
    let env = ElectionEnv { roster: &roster, positions: &pos, fields: &[] };
    let mut p = PartitionState::singletons(&env);
    p.join(UavId(0), CoalitionId(1), &env).unwrap();
    assert_eq!(p.memberships(UavId(0)).len(), 2);
    assert_eq!(p.join(UavId(0), CoalitionId(2), &env), Err(PartitionError::NoFreeTransceiver(UavId(0))));
    assert_eq!(p.leave(UavId(2), CoalitionId(2), &env), Err(PartitionError::LastMembership(UavId(2), CoalitionId(2))));
    // UAV 1 joins 0, then leaves its home; the singleton is deleted.
    p.join(UavId(1), CoalitionId(0), &env).unwrap();
    p.leave(UavId(0), CoalitionId(1), &env).unwrap();
    let ch = p.leave(UavId(1), CoalitionId(1), &env).unwrap();
    assert_eq!(ch.detail, "dissolved");
    assert!(p.coalition(CoalitionId(1)).is_none());
    assert_eq!(p.primary_of(UavId(1)), Some(CoalitionId(0)));
    p.validate(&roster).unwrap();
}

#[test]
fn three_transceivers_reach_three_memberships() {
    let mut hub = uav(0, 0.0, 0.0);
    hub.transceivers = 3;
    let roster = Roster::new(&[hub, uav(1, 0.0, 0.0), uav(2, 0.0, 0.0), uav(3, 0.0, 0.0)]);
    let pos = roster.start_positions();
    let env = ElectionEnv { roster: &roster, positions: &pos, fields: &[] };
    let mut p = PartitionState::from_groups(&[vec![UavId(0)], vec![UavId(1)], vec![UavId(2), UavId(3)]], &env).unwrap();
    p.join(UavId(0), CoalitionId(1), &env).unwrap();
    p.join(UavId(0), CoalitionId(2), &env).unwrap();
    assert_eq!(p.memberships(UavId(0)).len(), 3);
    assert!(matches!(p.join(UavId(0), CoalitionId(2), &env), Err(PartitionError::AlreadyMember(..))));
    p.validate(&roster).unwrap();
}

#[derive(Debug, Clone)]
enum Op {
    Merge(usize, usize),
    Split(usize, u64),
    Join(usize, usize),
    Leave(usize, usize),
    Switch(usize, Option<usize>),
    Emergency(usize),
}

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Op::Merge(a, b)),
        (any::<usize>(), any::<u64>()).prop_map(|(a, m)| Op::Split(a, m)),
        (any::<usize>(), any::<usize>()).prop_map(|(u, c)| Op::Join(u, c)),
        (any::<usize>(), any::<usize>()).prop_map(|(u, c)| Op::Leave(u, c)),
        (any::<usize>(), prop::option::of(any::<usize>())).prop_map(|(u, c)| Op::Switch(u, c)),
        any::<usize>().prop_map(Op::Emergency),
    ]
}

fn fuzz_roster(n: usize) -> (Vec<UavSpec>, Vec<ImportanceField>) {
    let specs = (0..n)
        .map(|i| {
            let mut u = uav(i as u32, 700.0 * i as f64, 300.0 * (i % 3) as f64);
            u.transceivers = 1 + (i as u32 % 3);
            u.ground_link_quality = if i % 4 == 0 { 0.8 } else { 0.0 };
            u
        })
        .collect();
    (specs, vec![field(2000.0, 0.0, 1500.0)])
}

/// Applies one op; errors are allowed, but every state must stay valid.
fn apply(p: &mut PartitionState, op: &Op, env: &ElectionEnv<'_>) {
    let ids: Vec<CoalitionId> = p.ids().collect();
    let pick = |i: usize| ids[i % ids.len()];
    let uav = |i: usize| UavId((i % env.roster.len()) as u32);
    let _ = match *op {
        Op::Merge(a, b) => p.merge(pick(a), pick(b), env).map(|_| ()),
        Op::Split(c, mask) => {
            let c = pick(c);
            let members: Vec<UavId> = p.coalitions()[&c].members.iter().copied().collect();
            let subset = members.iter().enumerate().filter(|(i, _)| mask >> (i % 64) & 1 == 1).map(|(_, &u)| u).collect();
            p.split(c, &subset, env).map(|_| ())
        }
        Op::Join(u, c) => p.join(uav(u), pick(c), env).map(|_| ()),
        Op::Leave(u, c) => p.leave(uav(u), pick(c), env).map(|_| ()),
        Op::Switch(u, c) => p.switch_primary(uav(u), c.map(pick), env).map(|_| ()),
        Op::Emergency(c) => p.check_emergency(pick(c), 0.1, env, &GameWeights::default()).map(|_| ()),
    };
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_operations_preserve_invariants(ops in prop::collection::vec(arb_op(), 1..200), n in 2usize..9) {
        let (specs, fields) = fuzz_roster(n);
        let roster = Roster::new(&specs);
        let pos = roster.start_positions();
        let env = ElectionEnv { roster: &roster, positions: &pos, fields: &fields };
        let mut p = PartitionState::singletons(&env);
        for op in &ops {
            apply(&mut p, op, &env);
            prop_assert!(p.validate(&roster).is_ok(), "{:?} after {:?}", p.validate(&roster), op);
            for c in p.coalitions().values() {
                let l = elect_leaders(&c.members, &env);
                prop_assert_eq!((c.ground_leader, c.task_leader), (l.ground, l.task));
            }
        }
    }

    #[test]
    fn merge_then_split_restores_member_sets(n in 2usize..9, cut in 1usize..8, ops in prop::collection::vec(arb_op(), 0..30)) {
        let (specs, fields) = fuzz_roster(n);
        let roster = Roster::new(&specs);
        let pos = roster.start_positions();
        let env = ElectionEnv { roster: &roster, positions: &pos, fields: &fields };
        let mut p = PartitionState::singletons(&env);
        for op in &ops {
            apply(&mut p, op, &env);
        }
        if p.len() < 2 {
            return Ok(());
        }
        let ids: Vec<CoalitionId> = p.ids().collect();
        let (a, b) = (ids[0], ids[cut % (ids.len() - 1) + 1]);
        let (ma, mb) = (p.coalitions()[&a].members.clone(), p.coalitions()[&b].members.clone());
        // Overlapping pairs lose information on merge; the law needs disjoint ones.
        if !ma.is_disjoint(&mb) {
            return Ok(());
        }
        let before = p.member_sets();
        let merged = p.merge(a, b, &env).unwrap().coalitions[2];
        p.split(merged, &mb, &env).unwrap();
        prop_assert_eq!(p.member_sets(), before);
        prop_assert!(p.validate(&roster).is_ok());
    }
}

#[test]
fn memberships_never_exceed_transceivers_under_merges() {
    // UAV 0 sits in two coalitions; merging them frees one of its transceivers.
    let roster = Roster::new(&[uav(0, 0.0, 0.0), uav(1, 0.0, 0.0), uav(2, 0.0, 0.0)]);
    let pos = vec![Point::new(0.0, 0.0); 3];
    let env = ElectionEnv { roster: &roster, positions: &pos, fields: &[] };
    let mut p = PartitionState::from_groups(&[vec![UavId(0), UavId(1)], vec![UavId(0), UavId(2)]], &env).unwrap();
    assert_eq!(p.memberships(UavId(0)).len(), 2);
    p.merge(CoalitionId(0), CoalitionId(1), &env).unwrap();
    assert_eq!(p.memberships(UavId(0)).len(), 1);
    p.validate(&roster).unwrap();
}
