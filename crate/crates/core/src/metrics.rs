//! Episode evaluation measures: travel time, throughput, queue length and delay.

use serde::{Deserialize, Serialize};

use crate::network::RoadNetwork;
use crate::sim::SimState;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsAccumulator {
    pub steps: u64,
    /// Sum over sampled steps of the network-wide stop-line queue.
    pub queue_integral: u64,
    pub queue_integral_per_intersection: Vec<u64>,
    pub completed: usize,
    pub travel_time_sum_s: f64,
    pub delay_sum_s: f64,
    pub unfinished: usize,
    cursor: usize,
}

impl MetricsAccumulator {
    pub fn new(net: &RoadNetwork) -> Self {
        MetricsAccumulator {
            queue_integral_per_intersection: vec![0; net.intersections.len()],
            ..Default::default()
        }
    }

    /// Samples queues and picks up vehicles completed since the previous call.
    pub fn record_step(&mut self, state: &SimState, net: &RoadNetwork) {
        self.steps += 1;
        for i in 0..net.intersections.len() {
            let q = state.intersection_queue(net, i) as u64;
            self.queue_integral_per_intersection[i] += q;
            self.queue_integral += q;
        }
        let log = state.completion_log();
        for &v in &log[self.cursor..] {
            let rec = &state.vehicles()[v];
            self.completed += 1;
            self.travel_time_sum_s += rec.travel_time_s().unwrap_or_default();
            self.delay_sum_s += rec.delay_s().unwrap_or_default();
        }
        self.cursor = log.len();
        let census = state.census();
        self.unfinished = census.generated - census.completed;
    }

    /// Field-wise sum, for aggregating independent simulations before finalizing.
    pub fn merge(&mut self, other: &MetricsAccumulator) {
        self.steps = self.steps.max(other.steps);
        self.queue_integral += other.queue_integral;
        if self.queue_integral_per_intersection.len() < other.queue_integral_per_intersection.len() {
            self.queue_integral_per_intersection
                .resize(other.queue_integral_per_intersection.len(), 0);
        }
        for (a, b) in self
            .queue_integral_per_intersection
            .iter_mut()
            .zip(&other.queue_integral_per_intersection)
        {
            *a += b;
        }
        self.completed += other.completed;
        self.travel_time_sum_s += other.travel_time_sum_s;
        self.delay_sum_s += other.delay_sum_s;
        self.unfinished += other.unfinished;
    }

    pub fn finalize(&self, horizon_steps: u64) -> EpisodeMetrics {
        let horizon = horizon_steps.max(1) as f64;
        let mean = |sum: f64| (self.completed > 0).then(|| sum / self.completed as f64);
        EpisodeMetrics {
            avg_travel_time_s: mean(self.travel_time_sum_s),
            throughput: self.completed,
            avg_queue: self.queue_integral as f64 / horizon,
            avg_queue_per_intersection: self
                .queue_integral_per_intersection
                .iter()
                .map(|&q| q as f64 / horizon)
                .collect(),
            avg_delay_s: mean(self.delay_sum_s),
            unfinished: self.unfinished,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Mean over completed vehicles; `None` when nothing completed.
    pub avg_travel_time_s: Option<f64>,
    pub throughput: usize,
    /// Time-mean of the total queue at all stop lines.
    pub avg_queue: f64,
    pub avg_queue_per_intersection: Vec<f64>,
    pub avg_delay_s: Option<f64>,
    /// Vehicles generated but not finished at the horizon.
    pub unfinished: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{Controller, MaxPressure};
    use crate::scenarios;
    use crate::sim::SimConfig;

    #[test]
    fn empty_state_only_counts_steps() {
        let (net, flows) = scenarios::single().unwrap();
        let s = SimState::new(&net, &flows, &SimConfig::default(), 0).unwrap();
        let mut acc = MetricsAccumulator::new(&net);
        acc.record_step(&s, &net);
        let mut expected = MetricsAccumulator::new(&net);
        expected.steps = 1;
        assert_eq!(acc, expected);
    }

    #[test]
    fn rectangle_queue_integral() {
        let mut acc = MetricsAccumulator { queue_integral: 3 * 10, steps: 10, ..Default::default() };
        assert_eq!(acc.finalize(10).avg_queue, 3.0);
        acc.queue_integral = 7200;
        assert_eq!(acc.finalize(3600).avg_queue, 2.0);
    }

    #[test]
    fn single_vehicle_arithmetic() {
        let acc = MetricsAccumulator {
            completed: 1,
            travel_time_sum_s: 55.0,
            delay_sum_s: 55.0 - 40.0,
            ..Default::default()
        };
        let m = acc.finalize(3600);
        assert_eq!(m.avg_travel_time_s, Some(55.0));
        assert_eq!(m.avg_delay_s, Some(15.0));
        assert_eq!(m.throughput, 1);
    }

    #[test]
    fn no_completions_reports_absent_means() {
        let m = MetricsAccumulator::default().finalize(3600);
        assert_eq!(m.throughput, 0);
        assert_eq!(m.avg_travel_time_s, None);
        assert_eq!(m.avg_delay_s, None);
    }

    #[test]
    fn accumulator_matches_replay_of_vehicle_records() {
        let (net, flows) = scenarios::single().unwrap();
        let cfg = SimConfig::default();
        let mut s = SimState::new(&net, &flows, &cfg, 11).unwrap();
        let mut acc = MetricsAccumulator::new(&net);
        let mut mp = MaxPressure;
        let mut signal = vec![0];
        let mut queue_log = 0u64;
        for t in 0..1200 {
            if t % 10 == 0 {
                signal = mp.decide(&s, &net, &cfg).unwrap();
            }
            s.step(&net, &flows, &cfg, &signal).unwrap();
            acc.record_step(&s, &net);
            queue_log += net.intersections[0].incoming.iter().map(|&l| s.queue_len(l) as u64).sum::<u64>();
        }
        let done: Vec<_> = s.vehicles().iter().filter(|v| v.finish_step.is_some()).collect();
        assert_eq!(acc.completed, done.len());
        let travel: f64 = done.iter().map(|v| (v.finish_step.unwrap() - v.depart_step) as f64).sum();
        assert!((acc.travel_time_sum_s - travel).abs() < 1e-9);
        assert_eq!(acc.queue_integral, queue_log);
        for v in &done {
            assert!(v.delay_s().unwrap() >= 0.0);
        }
    }
}
