//! Road network topology: lanes, movements, conflicts, phases and links.

mod conflict;
mod scenario;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use conflict::{enumerate_phases, enumerate_phases_excluding, ConflictClass, ConflictMatrix, Phase};
pub use scenario::{
    load_scenario, load_scenario_file, FlowDoc, IntersectionDoc, LaneDoc, LinkDoc, MovementDoc,
    ScenarioDocument,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneKind {
    Incoming,
    Outgoing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Left,
    Through,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lane {
    pub id: String,
    pub length_m: f64,
    pub speed_mps: f64,
    /// Maximum number of vehicles the lane holds (traversing plus queued).
    pub capacity: usize,
    pub kind: LaneKind,
    pub intersection: usize,
}

impl Lane {
    /// Whole steps needed to traverse the lane at free-flow speed.
    pub fn traversal_steps(&self) -> u64 {
        (self.length_m / self.speed_mps).ceil().max(1.0) as u64
    }

    pub fn free_flow_s(&self) -> f64 {
        self.length_m / self.speed_mps
    }
}

/// A movement `(l, m)` from an incoming lane to an outgoing lane. Lanes are indices into
/// [`RoadNetwork::lanes`].
#[derive(Clone, Debug, PartialEq)]
pub struct Movement {
    pub label: String,
    pub from_lane: usize,
    pub to_lane: usize,
    pub turn: Turn,
    pub always_green: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Intersection {
    pub id: String,
    /// Lane indices in declaration order.
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
    pub movements: Vec<Movement>,
    pub conflicts: ConflictMatrix,
    pub phases: Vec<Phase>,
    pub neighbors: Vec<usize>,
}

impl Intersection {
    /// Whether `movement` may discharge under `phase`.
    pub fn is_green(&self, phase: usize, movement: usize) -> bool {
        self.movements[movement].always_green || self.phases[phase].contains(movement)
    }

    pub fn always_green_mask(&self) -> Vec<bool> {
        self.movements.iter().map(|m| m.always_green).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Link {
    pub from_lane: usize,
    pub to_lane: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    pub id: String,
    pub lanes: Vec<Lane>,
    pub intersections: Vec<Intersection>,
    pub links: Vec<Link>,
    lane_index: HashMap<String, usize>,
    intersection_index: HashMap<String, usize>,
}

impl RoadNetwork {
    pub fn lane_by_id(&self, id: &str) -> Option<usize> {
        self.lane_index.get(id).copied()
    }

    pub fn intersection_by_id(&self, id: &str) -> Option<usize> {
        self.intersection_index.get(id).copied()
    }

    pub fn intersection(&self, idx: usize) -> crate::Result<&Intersection> {
        self.intersections
            .get(idx)
            .ok_or(crate::Error::UnknownIntersection(idx))
    }

    /// Movement `(intersection, movement index)` joining two lanes, if any.
    pub fn movement_between(&self, from: usize, to: usize) -> Option<(usize, usize)> {
        let lane = &self.lanes[from];
        if lane.kind != LaneKind::Incoming {
            return None;
        }
        let node = &self.intersections[lane.intersection];
        node.movements
            .iter()
            .position(|m| m.from_lane == from && m.to_lane == to)
            .map(|mi| (lane.intersection, mi))
    }

    pub fn is_linked(&self, from: usize, to: usize) -> bool {
        self.links.iter().any(|l| l.from_lane == from && l.to_lane == to)
    }

    /// Up to `k` other intersections ordered by hop distance, then by index.
    pub fn nearest_neighbors(&self, idx: usize, k: usize) -> Vec<usize> {
        let mut seen = vec![false; self.intersections.len()];
        let mut order = Vec::new();
        let mut frontier = vec![idx];
        seen[idx] = true;
        while !frontier.is_empty() && order.len() < k {
            let mut next = Vec::new();
            for &n in &frontier {
                for &m in &self.intersections[n].neighbors {
                    if !seen[m] {
                        seen[m] = true;
                        next.push(m);
                    }
                }
            }
            next.sort_unstable();
            order.extend(next.iter().copied());
            frontier = next;
        }
        order.truncate(k);
        order
    }

    /// Checks every structural invariant and lists each violation; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        for lane in &self.lanes {
            if lane.capacity < 1 {
                report.push(Violation::new(format!("lane `{}` has capacity 0", lane.id)));
            }
            if !(lane.length_m > 0.0) {
                report.push(Violation::new(format!(
                    "lane `{}` has non-positive length {}",
                    lane.id, lane.length_m
                )));
            }
            if !(lane.speed_mps > 0.0) {
                report.push(Violation::new(format!(
                    "lane `{}` has non-positive speed {}",
                    lane.id, lane.speed_mps
                )));
            }
        }
        for (i, node) in self.intersections.iter().enumerate() {
            for &n in &node.neighbors {
                if !self.intersections[n].neighbors.contains(&i) {
                    report.push(Violation::new(format!(
                        "intersection `{}` lists `{}` as neighbor but not vice versa",
                        node.id, self.intersections[n].id
                    )));
                }
            }
            let mut pairs = Vec::new();
            for m in &node.movements {
                if self.lanes[m.from_lane].kind != LaneKind::Incoming
                    || self.lanes[m.from_lane].intersection != i
                {
                    report.push(Violation::new(format!(
                        "movement `{}` at `{}` does not start on one of its incoming lanes",
                        m.label, node.id
                    )));
                }
                if self.lanes[m.to_lane].kind != LaneKind::Outgoing
                    || self.lanes[m.to_lane].intersection != i
                {
                    report.push(Violation::new(format!(
                        "movement `{}` at `{}` does not end on one of its outgoing lanes",
                        m.label, node.id
                    )));
                }
                if pairs.contains(&(m.from_lane, m.to_lane)) {
                    report.push(Violation::new(format!(
                        "movement `{}` at `{}` duplicates a lane pair",
                        m.label, node.id
                    )));
                }
                pairs.push((m.from_lane, m.to_lane));
            }
            if node.conflicts.size() != node.movements.len() {
                report.push(Violation::new(format!(
                    "conflict matrix at `{}` is {}x{} for {} movements",
                    node.id,
                    node.conflicts.size(),
                    node.conflicts.size(),
                    node.movements.len()
                )));
                continue;
            }
            for p in &node.phases {
                for &a in &p.movements {
                    for &b in &p.movements {
                        if node.conflicts.conflicts(a, b) {
                            report.push(Violation::new(format!(
                                "phase {} at `{}` holds conflicting movements `{}` and `{}`",
                                p.id, node.id, node.movements[a].label, node.movements[b].label
                            )));
                        }
                    }
                }
            }
            if node.phases.is_empty() {
                report.push(Violation::new(format!("intersection `{}` has no phases", node.id)));
            }
        }
        for link in &self.links {
            if self.lanes[link.from_lane].kind != LaneKind::Outgoing
                || self.lanes[link.to_lane].kind != LaneKind::Incoming
            {
                report.push(Violation::new(format!(
                    "link `{}` -> `{}` must join an outgoing lane to an incoming lane",
                    self.lanes[link.from_lane].id, self.lanes[link.to_lane].id
                )));
            }
        }
        report
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation(pub String);

impl Violation {
    fn new(msg: String) -> Self {
        Violation(msg)
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
