#![allow(dead_code)]

use fanet_core::coalition::ElectionEnv;
use fanet_core::games::{GameContext, SwarmState};
use fanet_core::scenario::{GameWeights, ImportanceField, ImportanceGrid, Roster, SimOptions, UavSpec};
use fanet_core::{PartitionState, Point, Rect, UavId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uav(id: u32, x: f64, y: f64) -> UavSpec {
    UavSpec {
        id: UavId(id),
        start_pos: Point::new(x, y),
        coverage_radius_m: 1000.0,
        comm_range_m: 3000.0,
        transceivers: 2,
        ground_link_quality: 0.0,
        relay_quota: 0,
        max_move_m: 500.0,
    }
}

/// Owns everything a `GameContext` borrows.
pub struct World {
    pub roster: Roster,
    pub grid: ImportanceGrid,
    pub fields: Vec<ImportanceField>,
    pub weights: GameWeights,
    pub options: SimOptions,
    pub area: Rect,
}

impl World {
    pub fn new(specs: &[UavSpec], area: Rect, cell: f64, fields: Vec<ImportanceField>) -> World {
        World {
            roster: Roster::new(specs),
            grid: ImportanceGrid::new(area, cell, &fields),
            fields,
            weights: GameWeights::default(),
            options: SimOptions::default(),
            area,
        }
    }

    pub fn ctx(&self) -> GameContext<'_> {
        GameContext {
            roster: &self.roster,
            grid: &self.grid,
            fields: &self.fields,
            weights: &self.weights,
            options: &self.options,
            area: self.area,
        }
    }

    pub fn env<'a>(&'a self, positions: &'a [Point]) -> ElectionEnv<'a> {
        ElectionEnv { roster: &self.roster, positions, fields: &self.fields }
    }

    pub fn start(&self) -> Vec<Point> {
        self.roster.start_positions()
    }

    pub fn swarm(&self, groups: &[Vec<u32>]) -> SwarmState {
        let positions = self.start();
        let groups: Vec<Vec<UavId>> = groups.iter().map(|g| g.iter().map(|&i| UavId(i)).collect()).collect();
        let partition = PartitionState::from_groups(&groups, &self.env(&positions)).expect("valid groups");
        SwarmState { positions, partition }
    }
}

pub fn square(side: f64) -> Rect {
    Rect { min_x: 0.0, min_y: 0.0, max_x: side, max_y: side }
}

pub fn field(x: f64, y: f64, sigma: f64) -> ImportanceField {
    ImportanceField { center: Point::new(x, y), sigma_m: sigma, peak: 1.0 }
}

/// Random swarm in a 6 km square, roughly 40% of UAVs with backhaul.
pub fn random_world(seed: u64, n: usize) -> (World, SwarmState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = square(6000.0);
    let specs: Vec<UavSpec> = (0..n)
        .map(|i| {
            let mut u = uav(i as u32, rng.gen_range(0.0..6000.0), rng.gen_range(0.0..6000.0));
            u.ground_link_quality = if rng.gen_bool(0.4) { rng.gen_range(0.1..1.0) } else { 0.0 };
            u.transceivers = rng.gen_range(1..=3);
            u.coverage_radius_m = rng.gen_range(500.0..1500.0);
            u
        })
        .collect();
    let w = World::new(&specs, area, 300.0, vec![field(rng.gen_range(0.0..6000.0), rng.gen_range(0.0..6000.0), 1500.0)]);
    let k = rng.gen_range(1..=n);
    let mut groups: Vec<Vec<u32>> = (0..k).map(|i| vec![i as u32]).collect();
    for i in k..n {
        groups[rng.gen_range(0..k)].push(i as u32);
    }
    let s = w.swarm(&groups);
    (w, s)
}
