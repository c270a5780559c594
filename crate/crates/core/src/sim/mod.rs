//! Discrete-time point-queue network simulator.
//!
//! Each lane holds a FIFO of vehicles still traversing it at free-flow speed and a FIFO
//! queue at its downstream end. A lane's capacity bounds both together, so a full lane
//! refuses entry and the blocked vehicle waits where it is (spillback). Movements under
//! green accumulate fractional service credit at the saturation flow rate and discharge
//! one head-of-queue vehicle per whole credit.

mod flow;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

pub use flow::{Arrival, FlowEntry, FlowSpec};

use crate::error::{Error, Result};
use crate::network::{LaneKind, RoadNetwork};

/// Simulation clock step. Every quantity measured in steps is also in seconds.
pub const STEP_S: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub decision_interval_s: u64,
    pub saturation_flow_vps: f64,
    pub switch_lost_time_s: u64,
    pub horizon_steps: u64,
    /// Count traversing vehicles in [`SimState::lane_count`], not only queued ones.
    pub count_in_transit: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            decision_interval_s: 10,
            saturation_flow_vps: 0.5,
            switch_lost_time_s: 0,
            horizon_steps: 3600,
            count_in_transit: false,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        if self.decision_interval_s == 0 || self.decision_interval_s % STEP_S != 0 {
            return Err(Error::InvalidScenario(format!(
                "decision interval {} s is not a positive multiple of the step",
                self.decision_interval_s
            )));
        }
        if !(self.saturation_flow_vps > 0.0) {
            return Err(Error::NonPositive {
                field: "saturation_flow_vps",
                locus: "simulation config".into(),
                value: self.saturation_flow_vps,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Position {
    Traversing { lane: usize, arrival_step: u64 },
    Queued { lane: usize, join_step: u64 },
    Finished,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: usize,
    pub route: Vec<usize>,
    /// Index into `route` of the lane the vehicle is on.
    pub route_pos: usize,
    pub position: Position,
    pub depart_step: u64,
    pub finish_step: Option<u64>,
    pub free_flow_time_s: f64,
}

impl VehicleRecord {
    pub fn travel_time_s(&self) -> Option<f64> {
        self.finish_step.map(|f| (f - self.depart_step) as f64)
    }

    pub fn delay_s(&self) -> Option<f64> {
        self.travel_time_s().map(|t| t - self.free_flow_time_s)
    }

    fn next_lane(&self) -> Option<usize> {
        self.route.get(self.route_pos + 1).copied()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct LaneState {
    traversing: VecDeque<usize>,
    queue: VecDeque<usize>,
}

impl LaneState {
    fn occupancy(&self) -> usize {
        self.traversing.len() + self.queue.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Pending {
    flow: usize,
}

/// Per-step event counts, suitable for a line-delimited debug log.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvents {
    pub step: u64,
    pub injected: usize,
    pub discharged: usize,
    pub completed: usize,
}

/// Where every generated vehicle currently is.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Census {
    pub generated: usize,
    pub injected: usize,
    pub traversing: usize,
    pub queued: usize,
    pub spilled: usize,
    pub completed: usize,
}

impl Census {
    pub fn conserved(&self) -> bool {
        self.injected == self.traversing + self.queued + self.completed
            && self.generated == self.injected + self.spilled
    }
}

#[derive(Clone, Debug)]
pub struct SimState {
    clock: u64,
    lanes: Vec<LaneState>,
    /// Vehicles waiting to enter a full source lane, keyed by lane.
    spill: Vec<VecDeque<Pending>>,
    vehicles: Vec<VehicleRecord>,
    active_phase: Vec<usize>,
    /// Per intersection, per movement.
    service_credit: Vec<Vec<f64>>,
    lost_until: Vec<u64>,
    generated: usize,
    completed: usize,
    /// Vehicle ids in completion order.
    completion_log: Vec<usize>,
    rng: ChaCha8Rng,
    poisson: Vec<Option<Poisson<f64>>>,
}

impl PartialEq for SimState {
    fn eq(&self, other: &Self) -> bool {
        self.clock == other.clock
            && self.lanes == other.lanes
            && self.spill == other.spill
            && self.vehicles == other.vehicles
            && self.active_phase == other.active_phase
            && self.service_credit == other.service_credit
            && self.lost_until == other.lost_until
            && self.generated == other.generated
            && self.completed == other.completed
            && self.completion_log == other.completion_log
            && self.rng == other.rng
    }
}

impl SimState {
    /// Fresh simulation: clock 0, empty lanes, every intersection on phase 0.
    pub fn new(net: &RoadNetwork, flows: &FlowSpec, cfg: &SimConfig, seed: u64) -> Result<Self> {
        cfg.check()?;
        flows.check_routes(net)?;
        let poisson = flows
            .entries
            .iter()
            .map(|e| match e.arrival {
                Arrival::Poisson(r) if r > 0.0 => Poisson::new(r * STEP_S as f64)
                    .map(Some)
                    .map_err(|e| Error::InvalidScenario(format!("poisson rate: {e}"))),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SimState {
            clock: 0,
            lanes: vec![LaneState::default(); net.lanes.len()],
            spill: vec![VecDeque::new(); net.lanes.len()],
            vehicles: Vec::new(),
            active_phase: vec![0; net.intersections.len()],
            service_credit: net
                .intersections
                .iter()
                .map(|n| vec![0.0; n.movements.len()])
                .collect(),
            lost_until: vec![0; net.intersections.len()],
            generated: 0,
            completed: 0,
            completion_log: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            poisson,
        })
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn active_phase(&self, intersection: usize) -> usize {
        self.active_phase[intersection]
    }

    pub fn active_phases(&self) -> &[usize] {
        &self.active_phase
    }

    pub fn vehicles(&self) -> &[VehicleRecord] {
        &self.vehicles
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    /// Ids of completed vehicles, in completion order.
    pub fn completion_log(&self) -> &[usize] {
        &self.completion_log
    }

    pub fn service_credit(&self, intersection: usize, movement: usize) -> f64 {
        self.service_credit[intersection][movement]
    }

    pub fn queue_len(&self, lane: usize) -> usize {
        self.lanes[lane].queue.len()
    }

    pub fn occupancy(&self, lane: usize) -> usize {
        self.lanes[lane].occupancy()
    }

    /// Vehicle count used for observations and pressure.
    pub fn lane_count(&self, lane: usize, cfg: &SimConfig) -> usize {
        if cfg.count_in_transit {
            self.lanes[lane].occupancy()
        } else {
            self.lanes[lane].queue.len()
        }
    }

    /// Vehicle count per lane (incoming then outgoing, declaration order) at an intersection.
    pub fn lane_counts(
        &self,
        net: &RoadNetwork,
        intersection: usize,
        cfg: &SimConfig,
    ) -> Result<Vec<(String, usize)>> {
        let node = net.intersection(intersection)?;
        Ok(node
            .incoming
            .iter()
            .chain(&node.outgoing)
            .map(|&l| (net.lanes[l].id.clone(), self.lane_count(l, cfg)))
            .collect())
    }

    /// Vehicles queued at the stop lines of an intersection's incoming lanes.
    pub fn intersection_queue(&self, net: &RoadNetwork, intersection: usize) -> usize {
        net.intersections[intersection]
            .incoming
            .iter()
            .map(|&l| self.lanes[l].queue.len())
            .sum()
    }

    pub fn census(&self) -> Census {
        let traversing = self.lanes.iter().map(|l| l.traversing.len()).sum();
        let queued = self.lanes.iter().map(|l| l.queue.len()).sum();
        let spilled = self.spill.iter().map(VecDeque::len).sum();
        Census {
            generated: self.generated,
            injected: self.vehicles.len(),
            traversing,
            queued,
            spilled,
            completed: self.completed,
        }
    }

    /// Advances one step under the given per-intersection phases.
    pub fn step(
        &mut self,
        net: &RoadNetwork,
        flows: &FlowSpec,
        cfg: &SimConfig,
        signal: &[usize],
    ) -> Result<StepEvents> {
        if signal.len() != net.intersections.len() {
            return Err(Error::Shape(format!(
                "signal has {} entries for {} intersections",
                signal.len(),
                net.intersections.len()
            )));
        }
        for (i, &p) in signal.iter().enumerate() {
            if p >= net.intersections[i].phases.len() {
                return Err(Error::InvalidPhase { intersection: i, phase: p });
            }
        }
        self.apply_signal(net, cfg, signal);

        let mut events = StepEvents { step: self.clock, ..StepEvents::default() };
        events.injected = self.inject_arrivals(net, flows);
        events.completed = self.advance(net);
        self.transfer_links(net);
        events.discharged = self.discharge(net, cfg);
        self.clock += STEP_S;
        Ok(events)
    }

    fn apply_signal(&mut self, net: &RoadNetwork, cfg: &SimConfig, signal: &[usize]) {
        for (i, &next) in signal.iter().enumerate() {
            let prev = self.active_phase[i];
            if prev == next {
                continue;
            }
            let node = &net.intersections[i];
            for m in 0..node.movements.len() {
                if node.is_green(prev, m) != node.is_green(next, m) {
                    self.service_credit[i][m] = 0.0;
                }
            }
            if cfg.switch_lost_time_s > 0 {
                self.lost_until[i] = self.clock + cfg.switch_lost_time_s;
            }
            self.active_phase[i] = next;
        }
    }

    /// Spawns this step's vehicles. Vehicles that find their source lane full wait in a
    /// spill buffer and are retried first on later steps. Returns the number that entered.
    pub fn inject_arrivals(&mut self, net: &RoadNetwork, flows: &FlowSpec) -> usize {
        let mut entered = 0;
        for lane in 0..self.spill.len() {
            while let Some(p) = self.spill[lane].front() {
                if self.lanes[lane].occupancy() >= net.lanes[lane].capacity {
                    break;
                }
                let flow = p.flow;
                self.spill[lane].pop_front();
                self.enter_network(net, flows, flow);
                entered += 1;
            }
        }
        let t = self.clock;
        for (fi, entry) in flows.entries.iter().enumerate() {
            let n = match entry.arrival {
                Arrival::Headway(h) => entry.headway_spawns(t, h),
                Arrival::Poisson(_) => match &self.poisson[fi] {
                    Some(dist) if (t as f64) >= entry.start_s && (t as f64) < entry.end_s => {
                        dist.sample(&mut self.rng) as usize
                    }
                    _ => 0,
                },
            };
            let source = entry.route[0];
            for _ in 0..n {
                self.generated += 1;
                if self.spill[source].is_empty()
                    && self.lanes[source].occupancy() < net.lanes[source].capacity
                {
                    self.enter_network(net, flows, fi);
                    entered += 1;
                } else {
                    self.spill[source].push_back(Pending { flow: fi });
                }
            }
        }
        entered
    }

    /// Puts a vehicle directly onto `route[route_pos]`, either queued at its stop line or
    /// just starting to traverse it. Meant for building test states; the vehicle counts as
    /// generated and injected at the current clock.
    pub fn place_vehicle(
        &mut self,
        net: &RoadNetwork,
        route: Vec<usize>,
        route_pos: usize,
        queued: bool,
    ) -> Result<usize> {
        let Some(&lane) = route.get(route_pos) else {
            return Err(Error::InvalidScenario(format!("route position {route_pos} out of range")));
        };
        if route.iter().any(|&l| l >= net.lanes.len()) {
            return Err(Error::InvalidScenario("route references an unknown lane".into()));
        }
        if queued && route_pos + 1 == route.len() {
            return Err(Error::InvalidScenario("cannot queue a vehicle on its final lane".into()));
        }
        if self.lanes[lane].occupancy() >= net.lanes[lane].capacity {
            return Err(Error::InvalidScenario(format!("lane {} is full", net.lanes[lane].id)));
        }
        let id = self.vehicles.len();
        let free_flow_time_s = route.iter().map(|&l| net.lanes[l].free_flow_s()).sum();
        let position = if queued {
            self.lanes[lane].queue.push_back(id);
            Position::Queued { lane, join_step: self.clock }
        } else {
            self.lanes[lane].traversing.push_back(id);
            Position::Traversing { lane, arrival_step: self.clock + net.lanes[lane].traversal_steps() }
        };
        self.vehicles.push(VehicleRecord {
            id,
            route,
            route_pos,
            position,
            depart_step: self.clock,
            finish_step: None,
            free_flow_time_s,
        });
        self.generated += 1;
        Ok(id)
    }

    fn enter_network(&mut self, net: &RoadNetwork, flows: &FlowSpec, flow: usize) {
        let route = flows.entries[flow].route.clone();
        let free_flow_time_s = route.iter().map(|&l| net.lanes[l].free_flow_s()).sum();
        let id = self.vehicles.len();
        let lane = route[0];
        let arrival_step = self.clock + net.lanes[lane].traversal_steps();
        self.vehicles.push(VehicleRecord {
            id,
            route,
            route_pos: 0,
            position: Position::Traversing { lane, arrival_step },
            depart_step: self.clock,
            finish_step: None,
            free_flow_time_s,
        });
        self.lanes[lane].traversing.push_back(id);
    }

    fn enter_lane(&mut self, net: &RoadNetwork, vehicle: usize, lane: usize) {
        let arrival_step = self.clock + net.lanes[lane].traversal_steps();
        let v = &mut self.vehicles[vehicle];
        v.route_pos += 1;
        debug_assert_eq!(v.route[v.route_pos], lane);
        v.position = Position::Traversing { lane, arrival_step };
        self.lanes[lane].traversing.push_back(vehicle);
    }

    // Vehicles reaching the end of a lane join its queue, or leave the network at the
    // end of their route. Returns completions.
    fn advance(&mut self, net: &RoadNetwork) -> usize {
        let mut done = 0;
        for lane in 0..net.lanes.len() {
            while let Some(&v) = self.lanes[lane].traversing.front() {
                let Position::Traversing { arrival_step, .. } = self.vehicles[v].position else {
                    unreachable!("traversing list holds a non-traversing vehicle");
                };
                if arrival_step > self.clock {
                    break;
                }
                self.lanes[lane].traversing.pop_front();
                let rec = &mut self.vehicles[v];
                if rec.next_lane().is_none() {
                    rec.position = Position::Finished;
                    rec.finish_step = Some(self.clock);
                    self.completed += 1;
                    self.completion_log.push(v);
                    done += 1;
                } else {
                    rec.position = Position::Queued { lane, join_step: self.clock };
                    self.lanes[lane].queue.push_back(v);
                }
            }
        }
        done
    }

    // Vehicles queued at the end of an outgoing lane cross the link into the next
    // intersection's incoming lane when it has room.
    fn transfer_links(&mut self, net: &RoadNetwork) {
        for lane in 0..net.lanes.len() {
            if net.lanes[lane].kind != LaneKind::Outgoing {
                continue;
            }
            while let Some(&v) = self.lanes[lane].queue.front() {
                let next = self.vehicles[v].next_lane().expect("queued vehicle has a next lane");
                if self.lanes[next].occupancy() >= net.lanes[next].capacity {
                    break;
                }
                self.lanes[lane].queue.pop_front();
                self.enter_lane(net, v, next);
            }
        }
    }

    fn discharge(&mut self, net: &RoadNetwork, cfg: &SimConfig) -> usize {
        let per_step = cfg.saturation_flow_vps * STEP_S as f64;
        let cap = per_step.max(1.0);
        let mut moved = 0;
        for (i, node) in net.intersections.iter().enumerate() {
            let phase = self.active_phase[i];
            let lost = self.clock < self.lost_until[i];
            for (mi, m) in node.movements.iter().enumerate() {
                let green = m.always_green || (!lost && node.phases[phase].contains(mi));
                if !green {
                    continue;
                }
                let credit = &mut self.service_credit[i][mi];
                *credit = (*credit + per_step).min(cap);
                while self.service_credit[i][mi] >= 1.0 {
                    let Some(&v) = self.lanes[m.from_lane].queue.front() else { break };
                    if self.vehicles[v].next_lane() != Some(m.to_lane)
                        || self.lanes[m.to_lane].occupancy() >= net.lanes[m.to_lane].capacity
                    {
                        break;
                    }
                    self.lanes[m.from_lane].queue.pop_front();
                    self.enter_lane(net, v, m.to_lane);
                    self.service_credit[i][mi] -= 1.0;
                    moved += 1;
                }
            }
        }
        moved
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::load_scenario;

    fn tiny(flow: &str) -> String {
        format!(
            r#"{{
          "intersections": [{{
            "id": "A",
            "lanes": [
              {{"id": "in", "length_m": 100, "speed_mps": 10, "capacity": 12, "kind": "incoming"}},
              {{"id": "out", "length_m": 50, "speed_mps": 10, "capacity": 12, "kind": "outgoing"}},
              {{"id": "in2", "length_m": 100, "speed_mps": 10, "capacity": 12, "kind": "incoming"}},
              {{"id": "out2", "length_m": 50, "speed_mps": 10, "capacity": 12, "kind": "outgoing"}}
            ],
            "movements": [
              {{"id": "1", "from": "in", "to": "out", "turn": "through"}},
              {{"id": "2", "from": "in2", "to": "out2", "turn": "through"}}
            ],
            "conflict_matrix": [[0, 1], [1, 0]]
          }}],
          "flows": [{flow}]
        }}"#
        )
    }

    fn setup(flow: &str) -> (RoadNetwork, FlowSpec) {
        load_scenario(&tiny(flow)).unwrap()
    }

    #[test]
    fn init_is_empty_and_deterministic() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 10, "headway_s": 2}"#);
        let cfg = SimConfig::default();
        let a = SimState::new(&net, &flows, &cfg, 7).unwrap();
        let b = SimState::new(&net, &flows, &cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.clock(), 0);
        assert_eq!(a.census().injected, 0);
        assert_eq!(a.active_phases(), &[0]);
    }

    #[test]
    fn route_skipping_a_link_is_rejected() {
        let (net, _) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 10, "headway_s": 2}"#);
        let bad = FlowSpec {
            entries: vec![FlowEntry {
                route: vec![0, 3],
                start_s: 0.0,
                end_s: 1.0,
                arrival: Arrival::Headway(1.0),
            }],
        };
        assert!(matches!(
            SimState::new(&net, &bad, &SimConfig::default(), 7),
            Err(Error::RouteNotConnected { .. })
        ));
    }

    #[test]
    fn headway_spawns_arithmetic_sequence() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 10, "headway_s": 2}"#);
        let mut s = SimState::new(&net, &flows, &SimConfig::default(), 1).unwrap();
        let mut at = Vec::new();
        for t in 0..20 {
            if s.inject_arrivals(&net, &flows) > 0 {
                at.push(t);
            }
            s.clock += 1;
        }
        assert_eq!(at, vec![0, 2, 4, 6, 8, 10]);
    }

    #[test]
    fn zero_poisson_rate_never_spawns() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 3600, "poisson_rate_vps": 0}"#);
        let cfg = SimConfig::default();
        let mut s = SimState::new(&net, &flows, &cfg, 3).unwrap();
        for _ in 0..3600 {
            s.step(&net, &flows, &cfg, &[0]).unwrap();
        }
        assert_eq!(s.census().generated, 0);
    }

    #[test]
    fn poisson_sample_mean_close_to_rate() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 3600, "poisson_rate_vps": 0.2}"#);
        for seed in 0..20 {
            let mut s = SimState::new(&net, &flows, &SimConfig::default(), seed).unwrap();
            for _ in 0..3600 {
                s.inject_arrivals(&net, &flows);
                s.clock += 1;
            }
            let mean = s.census().generated as f64 / 3600.0;
            assert!((0.18..=0.22).contains(&mean), "seed {seed}: mean {mean}");
        }
    }

    fn queue_vehicles(net: &RoadNetwork, flows: &FlowSpec, cfg: &SimConfig, n: usize) -> SimState {
        let mut s = SimState::new(net, flows, cfg, 0).unwrap();
        for _ in 0..n {
            s.generated += 1;
            s.enter_network(net, flows, 0);
        }
        // Hold on the conflicting phase until everything has queued.
        s.active_phase[0] = 1;
        for _ in 0..=10 {
            s.advance(net);
            s.clock += 1;
        }
        assert_eq!(s.queue_len(0), n);
        s
    }

    #[test]
    fn single_vehicle_transfers_once_credit_reaches_one() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 0, "headway_s": 1}"#);
        let cfg = SimConfig::default();
        let mut s = queue_vehicles(&net, &flows, &cfg, 1);
        let empty = FlowSpec::default();
        let e = s.step(&net, &empty, &cfg, &[0]).unwrap();
        assert_eq!(e.discharged, 0);
        assert_eq!(s.service_credit(0, 0), 0.5);
        let e = s.step(&net, &empty, &cfg, &[0]).unwrap();
        assert_eq!(e.discharged, 1);
        assert_eq!(s.queue_len(0), 0);
        assert_eq!(s.occupancy(1), 1);
        assert!(s.census().conserved());
    }

    #[test]
    fn red_movement_keeps_its_queue() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 0, "headway_s": 1}"#);
        let cfg = SimConfig::default();
        let mut s = queue_vehicles(&net, &flows, &cfg, 3);
        for _ in 0..5 {
            s.step(&net, &FlowSpec::default(), &cfg, &[1]).unwrap();
        }
        assert_eq!(s.queue_len(0), 3);
    }

    #[test]
    fn saturation_flow_discharges_five_in_ten_seconds() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 0, "headway_s": 1}"#);
        let cfg = SimConfig::default();
        let mut s = queue_vehicles(&net, &flows, &cfg, 5);
        let discharged: usize = (0..10)
            .map(|_| s.step(&net, &FlowSpec::default(), &cfg, &[0]).unwrap().discharged)
            .sum();
        assert_eq!(discharged, 5);
        assert_eq!(s.queue_len(0), 0);
    }

    #[test]
    fn lost_time_suppresses_discharge_after_switch() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 0, "headway_s": 1}"#);
        let cfg = SimConfig { switch_lost_time_s: 4, ..SimConfig::default() };
        let mut s = queue_vehicles(&net, &flows, &cfg, 5);
        let per_step: Vec<usize> = (0..8)
            .map(|_| s.step(&net, &FlowSpec::default(), &cfg, &[0]).unwrap().discharged)
            .collect();
        assert_eq!(per_step, vec![0, 0, 0, 0, 0, 1, 0, 1]);
    }

    #[test]
    fn invalid_phase_rejected() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 0, "headway_s": 1}"#);
        let cfg = SimConfig::default();
        let mut s = SimState::new(&net, &flows, &cfg, 0).unwrap();
        assert!(matches!(
            s.step(&net, &flows, &cfg, &[2]),
            Err(Error::InvalidPhase { intersection: 0, phase: 2 })
        ));
    }

    #[test]
    fn full_source_lane_spills_and_conserves() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 100, "headway_s": 0.25}"#);
        let cfg = SimConfig::default();
        let mut s = SimState::new(&net, &flows, &cfg, 0).unwrap();
        for _ in 0..60 {
            s.step(&net, &flows, &cfg, &[1]).unwrap();
            let c = s.census();
            assert!(c.conserved(), "{c:?}");
            assert!(s.occupancy(0) <= 12);
        }
        assert!(s.census().spilled > 0);
    }

    #[test]
    fn lane_counts_after_one_injection() {
        let (net, flows) = setup(r#"{"route": ["in", "out"], "start_s": 0, "end_s": 0, "headway_s": 1}"#);
        let cfg = SimConfig::default();
        let mut s = SimState::new(&net, &flows, &cfg, 0).unwrap();
        assert!(s.lane_counts(&net, 0, &cfg).unwrap().iter().all(|(_, c)| *c == 0));
        s.step(&net, &flows, &cfg, &[1]).unwrap();
        let with_transit = SimConfig { count_in_transit: true, ..cfg.clone() };
        let counts = s.lane_counts(&net, 0, &with_transit).unwrap();
        assert_eq!(counts[0], ("in".to_string(), 1));
        for _ in 0..10 {
            s.step(&net, &flows, &cfg, &[1]).unwrap();
        }
        assert_eq!(s.lane_counts(&net, 0, &cfg).unwrap()[0], ("in".to_string(), 1));
        assert!(matches!(s.lane_counts(&net, 3, &cfg), Err(Error::UnknownIntersection(3))));
    }
}
