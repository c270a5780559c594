use crate::error::{Error, Result};
use crate::network::{LaneKind, RoadNetwork};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Arrival {
    /// Deterministic spawns at `start + k * headway`.
    Headway(f64),
    /// Poisson arrivals at this rate (vehicles per second), drawn from the simulation RNG.
    Poisson(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowEntry {
    /// Lane indices from source lane to sink lane.
    pub route: Vec<usize>,
    pub start_s: f64,
    pub end_s: f64,
    pub arrival: Arrival,
}

impl FlowEntry {
    /// Mean arrival rate over the active window, vehicles per second.
    pub fn mean_rate(&self) -> f64 {
        match self.arrival {
            Arrival::Poisson(r) => r,
            Arrival::Headway(h) => 1.0 / h,
        }
    }

    /// Deterministic spawns whose time falls in `[t, t + 1)`.
    pub(crate) fn headway_spawns(&self, t: u64, headway: f64) -> usize {
        let t = t as f64;
        if t + 1.0 <= self.start_s || t > self.end_s {
            return 0;
        }
        let mut k = ((t - self.start_s) / headway).ceil().max(0.0);
        let mut n = 0;
        loop {
            let at = self.start_s + k * headway;
            if at >= t + 1.0 || at > self.end_s {
                break;
            }
            n += 1;
            k += 1.0;
        }
        n
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowSpec {
    pub entries: Vec<FlowEntry>,
}

impl FlowSpec {
    /// Same routes with every arrival rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> FlowSpec {
        let entries = self
            .entries
            .iter()
            .filter(|_| factor > 0.0)
            .map(|e| FlowEntry {
                arrival: match e.arrival {
                    Arrival::Headway(h) => Arrival::Headway(h / factor),
                    Arrival::Poisson(r) => Arrival::Poisson(r * factor),
                },
                ..e.clone()
            })
            .collect();
        FlowSpec { entries }
    }

    /// Every route starts on a source lane, ends on a sink lane, and each consecutive
    /// pair is joined by a movement or a link.
    pub fn check_routes(&self, net: &RoadNetwork) -> Result<()> {
        let linked_into: Vec<bool> = {
            let mut v = vec![false; net.lanes.len()];
            for l in &net.links {
                v[l.to_lane] = true;
            }
            v
        };
        let linked_from: Vec<bool> = {
            let mut v = vec![false; net.lanes.len()];
            for l in &net.links {
                v[l.from_lane] = true;
            }
            v
        };
        for (i, e) in self.entries.iter().enumerate() {
            let first = e.route[0];
            let last = *e.route.last().unwrap_or(&first);
            if net.lanes[first].kind != LaneKind::Incoming || linked_into[first] {
                return Err(Error::InvalidScenario(format!(
                    "flow {i}: route must start on a source lane, `{}` is not one",
                    net.lanes[first].id
                )));
            }
            if net.lanes[last].kind != LaneKind::Outgoing || linked_from[last] {
                return Err(Error::InvalidScenario(format!(
                    "flow {i}: route must end on a sink lane, `{}` is not one",
                    net.lanes[last].id
                )));
            }
            for w in e.route.windows(2) {
                if net.movement_between(w[0], w[1]).is_none() && !net.is_linked(w[0], w[1]) {
                    return Err(Error::RouteNotConnected {
                        flow: i,
                        from: net.lanes[w[0]].id.clone(),
                        to: net.lanes[w[1]].id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}
