//! Classical signal controllers: pressure, Max-Pressure, Webster and fixed-time plans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Intersection, RoadNetwork};
use crate::sim::{FlowSpec, SimConfig, SimState};

/// Pressure of one movement `(l, m)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PressureReading {
    pub movement: usize,
    /// `x(l) - x(m)`
    pub z: i64,
    /// `x(l)/x_max(l) - x(m)/x_max(m)`
    pub w: f64,
}

/// Capacity-normalized movement pressure.
pub fn movement_pressure(x_l: usize, cap_l: usize, x_m: usize, cap_m: usize) -> Result<f64> {
    if cap_l == 0 || cap_m == 0 {
        return Err(Error::ZeroCapacity);
    }
    Ok(x_l as f64 / cap_l as f64 - x_m as f64 / cap_m as f64)
}

/// Pressure of every movement at an intersection, in movement order.
pub fn movement_readings(
    state: &SimState,
    net: &RoadNetwork,
    intersection: usize,
    cfg: &SimConfig,
) -> Result<Vec<PressureReading>> {
    let node = net.intersection(intersection)?;
    node.movements
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let x_l = state.lane_count(m.from_lane, cfg);
            let x_m = state.lane_count(m.to_lane, cfg);
            Ok(PressureReading {
                movement: i,
                z: x_l as i64 - x_m as i64,
                w: movement_pressure(x_l, net.lanes[m.from_lane].capacity, x_m, net.lanes[m.to_lane].capacity)?,
            })
        })
        .collect()
}

/// Sum of the phase's movement pressures, raw (`z`) or normalized (`w`).
pub fn phase_pressure(
    state: &SimState,
    net: &RoadNetwork,
    intersection: usize,
    phase: usize,
    normalized: bool,
    cfg: &SimConfig,
) -> Result<f64> {
    let node = net.intersection(intersection)?;
    let phase = node
        .phases
        .get(phase)
        .ok_or(Error::InvalidPhase { intersection, phase })?;
    let readings = movement_readings(state, net, intersection, cfg)?;
    Ok(phase
        .movements
        .iter()
        .map(|&m| if normalized { readings[m].w } else { readings[m].z as f64 })
        .sum())
}

/// Phase with the largest raw pressure; ties go to the lowest phase id.
pub fn max_pressure_select(
    state: &SimState,
    net: &RoadNetwork,
    intersection: usize,
    cfg: &SimConfig,
) -> Result<usize> {
    let node = net.intersection(intersection)?;
    let readings = movement_readings(state, net, intersection, cfg)?;
    let mut best = (0, i64::MIN);
    for p in &node.phases {
        let pressure: i64 = p.movements.iter().map(|&m| readings[m].z).sum();
        if pressure > best.1 {
            best = (p.id, pressure);
        }
    }
    Ok(best.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WebsterPlan {
    pub cycle_s: f64,
    /// Phase ids served in order, one per green.
    pub phases: Vec<usize>,
    pub green_s: Vec<f64>,
    pub lost_time_s: f64,
    pub offset_s: f64,
}

pub const MIN_CYCLE_S: f64 = 30.0;
pub const MAX_CYCLE_S: f64 = 180.0;
pub const MIN_GREEN_S: f64 = 5.0;

/// Webster cycle `C = (1.5 L + 5) / (1 - Y)` with greens split in proportion to each
/// phase's critical flow ratio `y_i`.
///
/// `ratios[i]` is the critical ratio of `phases[i]`. The cycle is clamped to
/// [`MIN_CYCLE_S`, `MAX_CYCLE_S`] and each green is at least [`MIN_GREEN_S`].
pub fn webster_plan(phases: &[usize], ratios: &[f64], lost_time_s: f64) -> Result<WebsterPlan> {
    if phases.len() != ratios.len() || phases.is_empty() {
        return Err(Error::Shape(format!(
            "{} phases with {} flow ratios",
            phases.len(),
            ratios.len()
        )));
    }
    let y: f64 = ratios.iter().sum();
    if y >= 1.0 {
        return Err(Error::Oversaturated { y });
    }
    let n = phases.len() as f64;
    let raw = (1.5 * lost_time_s + 5.0) / (1.0 - y);
    let cycle = raw
        .clamp(MIN_CYCLE_S, MAX_CYCLE_S)
        .max(lost_time_s + n * MIN_GREEN_S);
    let effective = cycle - lost_time_s;
    let green_s = if y > 0.0 {
        split_with_floor(ratios, effective, MIN_GREEN_S)
    } else {
        vec![effective / n; phases.len()]
    };
    Ok(WebsterPlan {
        cycle_s: cycle,
        phases: phases.to_vec(),
        green_s,
        lost_time_s,
        offset_s: 0.0,
    })
}

// Proportional split of `total` that gives every share at least `floor`.
fn split_with_floor(weights: &[f64], total: f64, floor: f64) -> Vec<f64> {
    let mut pinned = vec![false; weights.len()];
    loop {
        let free_total = total - floor * pinned.iter().filter(|p| **p).count() as f64;
        let free_weight: f64 = weights
            .iter()
            .zip(&pinned)
            .filter(|(_, p)| !**p)
            .map(|(w, _)| *w)
            .sum();
        let shares: Vec<f64> = weights
            .iter()
            .zip(&pinned)
            .map(|(w, p)| if *p { floor } else { free_total * w / free_weight })
            .collect();
        let mut changed = false;
        for (i, s) in shares.iter().enumerate() {
            if !pinned[i] && *s < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            return shares;
        }
    }
}

impl WebsterPlan {
    /// Equal greens over the given phases with no lost time.
    pub fn uniform(phases: &[usize], green_s: f64) -> WebsterPlan {
        WebsterPlan {
            cycle_s: green_s * phases.len() as f64,
            phases: phases.to_vec(),
            green_s: vec![green_s; phases.len()],
            lost_time_s: 0.0,
            offset_s: 0.0,
        }
    }
}

/// Phase whose window contains `(t + offset) mod cycle`. Each window is its green plus an
/// equal share of the lost time.
pub fn fixed_time_select(plan: &WebsterPlan, t_s: f64) -> usize {
    let share = plan.lost_time_s / plan.phases.len() as f64;
    let pos = (t_s + plan.offset_s).rem_euclid(plan.cycle_s);
    let mut end = 0.0;
    for (i, g) in plan.green_s.iter().enumerate() {
        end += g + share;
        if pos < end {
            return plan.phases[i];
        }
    }
    *plan.phases.last().expect("plan has phases")
}

/// Smallest set of phases covering every phase movement, lexicographically first among
/// equal-size covers. Fixed-time plans cycle through it.
pub fn phase_cover(node: &Intersection) -> Vec<usize> {
    let needed: Vec<usize> = (0..node.movements.len())
        .filter(|&m| node.phases.iter().any(|p| p.contains(m)))
        .collect();
    let p = node.phases.len();
    for size in 1..=p {
        if let Some(c) = first_cover(node, &needed, size, 0, &mut Vec::new()) {
            return c;
        }
    }
    (0..p).collect()
}

fn first_cover(
    node: &Intersection,
    needed: &[usize],
    size: usize,
    start: usize,
    chosen: &mut Vec<usize>,
) -> Option<Vec<usize>> {
    if chosen.len() == size {
        let covered = needed
            .iter()
            .all(|&m| chosen.iter().any(|&p| node.phases[p].contains(m)));
        return covered.then(|| chosen.clone());
    }
    for p in start..node.phases.len() {
        chosen.push(p);
        if let Some(c) = first_cover(node, needed, size, p + 1, chosen) {
            return Some(c);
        }
        chosen.pop();
    }
    None
}

/// Mean demand per movement (veh/s) implied by the flow routes.
pub fn movement_demand(net: &RoadNetwork, flows: &FlowSpec, intersection: usize) -> Vec<f64> {
    let mut demand = vec![0.0; net.intersections[intersection].movements.len()];
    for e in &flows.entries {
        for w in e.route.windows(2) {
            if let Some((i, m)) = net.movement_between(w[0], w[1]) {
                if i == intersection {
                    demand[m] += e.mean_rate();
                }
            }
        }
    }
    demand
}

/// Webster plan for one intersection over its phase cover.
pub fn webster_for_intersection(
    net: &RoadNetwork,
    flows: &FlowSpec,
    intersection: usize,
    cfg: &SimConfig,
    lost_time_s: f64,
) -> Result<WebsterPlan> {
    let node = net.intersection(intersection)?;
    let cover = phase_cover(node);
    let demand = movement_demand(net, flows, intersection);
    let ratios: Vec<f64> = cover
        .iter()
        .map(|&p| {
            node.phases[p]
                .movements
                .iter()
                .map(|&m| demand[m] / cfg.saturation_flow_vps)
                .fold(0.0, f64::max)
        })
        .collect();
    webster_plan(&cover, &ratios, lost_time_s)
}

/// A signal policy driven by the episode runner.
pub trait Controller {
    fn name(&self) -> &str;

    /// Whether the controller is consulted every step rather than only at decision
    /// boundaries.
    fn every_step(&self) -> bool {
        false
    }

    /// Phase per intersection for the coming interval.
    fn decide(&mut self, state: &SimState, net: &RoadNetwork, cfg: &SimConfig) -> Result<Vec<usize>>;
}

pub struct MaxPressure;

impl Controller for MaxPressure {
    fn name(&self) -> &str {
        "maxpressure"
    }

    fn decide(&mut self, state: &SimState, net: &RoadNetwork, cfg: &SimConfig) -> Result<Vec<usize>> {
        (0..net.intersections.len())
            .map(|i| max_pressure_select(state, net, i, cfg))
            .collect()
    }
}

/// Fixed-time control from one plan per intersection.
pub struct FixedTime {
    name: String,
    plans: Vec<WebsterPlan>,
}

impl FixedTime {
    /// Equal greens over each intersection's phase cover.
    pub fn uniform(net: &RoadNetwork, green_s: f64) -> Self {
        let plans = net
            .intersections
            .iter()
            .map(|n| WebsterPlan::uniform(&phase_cover(n), green_s))
            .collect();
        FixedTime { name: "fixed".into(), plans }
    }

    /// Webster plans from the scenario's demand; lost time is the simulator's switch
    /// lost time times the number of phases in the cycle.
    pub fn webster(net: &RoadNetwork, flows: &FlowSpec, cfg: &SimConfig) -> Result<Self> {
        let plans = (0..net.intersections.len())
            .map(|i| {
                let n = phase_cover(&net.intersections[i]).len() as f64;
                webster_for_intersection(net, flows, i, cfg, n * cfg.switch_lost_time_s as f64)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FixedTime { name: "webster".into(), plans })
    }

    pub fn plans(&self) -> &[WebsterPlan] {
        &self.plans
    }
}

impl Controller for FixedTime {
    fn name(&self) -> &str {
        &self.name
    }

    fn every_step(&self) -> bool {
        true
    }

    fn decide(&mut self, state: &SimState, _net: &RoadNetwork, _cfg: &SimConfig) -> Result<Vec<usize>> {
        let t = state.clock() as f64;
        Ok(self.plans.iter().map(|p| fixed_time_select(p, t)).collect())
    }
}

/// Uniformly random phase at every decision.
pub struct RandomPhase {
    rng: ChaCha8Rng,
}

impl RandomPhase {
    pub fn new(seed: u64) -> Self {
        RandomPhase { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Controller for RandomPhase {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&mut self, _state: &SimState, net: &RoadNetwork, _cfg: &SimConfig) -> Result<Vec<usize>> {
        Ok(net
            .intersections
            .iter()
            .map(|n| self.rng.random_range(0..n.phases.len()))
            .collect())
    }
}
