use serde::{Deserialize, Serialize};

use crate::controllers::movement_readings;
use crate::error::{Error, Result};
use crate::frap::{MovementFeatures, PhaseLayout};
use crate::network::RoadNetwork;
use crate::sim::{SimConfig, SimState};

/// What one intersection's agent sees at a decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// One-hot over the intersection's phases.
    pub current_phase: Vec<f64>,
    /// Per incoming lane in declaration order, count / capacity.
    pub incoming_counts: Vec<f64>,
    /// Per outgoing lane in declaration order, count / capacity.
    pub outgoing_counts: Vec<f64>,
}

impl Observation {
    pub fn phase(&self) -> usize {
        self.current_phase.iter().position(|&x| x == 1.0).unwrap_or(0)
    }
}

pub fn build_observation(
    state: &SimState,
    net: &RoadNetwork,
    intersection: usize,
    cfg: &SimConfig,
) -> Result<Observation> {
    let node = net.intersection(intersection)?;
    let norm = |&l: &usize| {
        let cap = net.lanes[l].capacity;
        if cap == 0 {
            0.0
        } else {
            (state.lane_count(l, cfg) as f64 / cap as f64).min(1.0)
        }
    };
    let mut current_phase = vec![0.0; node.phases.len()];
    if let Some(x) = current_phase.get_mut(state.active_phase(intersection)) {
        *x = 1.0;
    }
    Ok(Observation {
        current_phase,
        incoming_counts: node.incoming.iter().map(norm).collect(),
        outgoing_counts: node.outgoing.iter().map(norm).collect(),
    })
}

/// Which reward the agent is trained on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// `-|Σ w|` over the intersection's movements.
    #[default]
    AbsPressure,
    /// `-Σ w`
    RawPressure,
}

pub fn compute_reward(
    state: &SimState,
    net: &RoadNetwork,
    intersection: usize,
    cfg: &SimConfig,
    mode: RewardMode,
) -> Result<f64> {
    let total: f64 = movement_readings(state, net, intersection, cfg)?
        .iter()
        .map(|r| r.w)
        .sum();
    Ok(match mode {
        RewardMode::AbsPressure => -total.abs(),
        RewardMode::RawPressure => -total,
    })
}

/// Static per-intersection data needed to turn observations into network inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentGeometry {
    pub layout: PhaseLayout,
    /// Per movement, positions of its lanes in `incoming_counts` / `outgoing_counts`.
    pub slots: Vec<(usize, usize)>,
    /// `P x M` green flags, always-green movements included.
    pub green: Vec<Vec<bool>>,
    /// Intersections whose observations feed the attention, nearest first.
    pub neighbors: Vec<usize>,
}

impl AgentGeometry {
    pub fn for_network(net: &RoadNetwork, max_neighbors: usize) -> Result<Vec<AgentGeometry>> {
        (0..net.intersections.len())
            .map(|i| AgentGeometry::new(net, i, max_neighbors))
            .collect()
    }

    pub fn new(net: &RoadNetwork, intersection: usize, max_neighbors: usize) -> Result<Self> {
        let node = net.intersection(intersection)?;
        let slots = node
            .movements
            .iter()
            .map(|m| {
                let a = node.incoming.iter().position(|&l| l == m.from_lane);
                let b = node.outgoing.iter().position(|&l| l == m.to_lane);
                a.zip(b).ok_or_else(|| {
                    Error::Shape(format!("movement {} of {} leaves the intersection's lanes", m.label, node.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let green = (0..node.phases.len())
            .map(|p| (0..node.movements.len()).map(|m| node.is_green(p, m)).collect())
            .collect();
        Ok(AgentGeometry {
            layout: PhaseLayout::from_intersection(node),
            slots,
            green,
            neighbors: net.nearest_neighbors(intersection, max_neighbors),
        })
    }

    /// `[incoming count, outgoing count, green]` per movement.
    pub fn features(&self, obs: &Observation) -> Vec<MovementFeatures> {
        let phase = obs.phase();
        self.slots
            .iter()
            .enumerate()
            .map(|(m, &(a, b))| {
                let g = self.green.get(phase).is_some_and(|row| row[m]);
                [obs.incoming_counts[a], obs.outgoing_counts[b], f64::from(u8::from(g))]
            })
            .collect()
    }
}
