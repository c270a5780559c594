//! Scenario file format (JSON) and its resolution into a [`RoadNetwork`] and [`FlowSpec`].

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    enumerate_phases_excluding, ConflictClass, ConflictMatrix, Intersection, Lane, LaneKind, Link,
    Movement, RoadNetwork, Turn,
};
use crate::error::{Error, Result};
use crate::sim::{Arrival, FlowEntry, FlowSpec};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub intersections: Vec<IntersectionDoc>,
    #[serde(default)]
    pub links: Vec<LinkDoc>,
    #[serde(default)]
    pub flows: Vec<FlowDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionDoc {
    pub id: String,
    pub lanes: Vec<LaneDoc>,
    pub movements: Vec<MovementDoc>,
    /// `0` none, `1` conflict, `2` partial.
    pub conflict_matrix: Vec<Vec<u8>>,
    #[serde(default)]
    pub neighbors: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneDoc {
    pub id: String,
    pub length_m: f64,
    pub speed_mps: f64,
    pub capacity: usize,
    pub kind: LaneKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementDoc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub turn: Turn,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub always_green: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub from_lane: String,
    pub to_lane: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowDoc {
    pub route: Vec<String>,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub headway_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson_rate_vps: Option<f64>,
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<(RoadNetwork, FlowSpec)> {
    let doc: ScenarioDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    doc.load()
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<(RoadNetwork, FlowSpec)> {
    load_scenario(&std::fs::read_to_string(path)?)
}

impl ScenarioDocument {
    pub fn load(&self) -> Result<(RoadNetwork, FlowSpec)> {
        let net = self.build_network()?;
        for lane in &net.lanes {
            let locus = || format!("lane `{}`", lane.id);
            if !(lane.length_m > 0.0) {
                return Err(Error::NonPositive { field: "length_m", locus: locus(), value: lane.length_m });
            }
            if !(lane.speed_mps > 0.0) {
                return Err(Error::NonPositive { field: "speed_mps", locus: locus(), value: lane.speed_mps });
            }
            if lane.capacity == 0 {
                return Err(Error::NonPositive { field: "capacity", locus: locus(), value: 0.0 });
            }
        }
        let report = net.validate();
        if !report.is_empty() {
            let msgs: Vec<String> = report.into_iter().map(|v| v.0).collect();
            return Err(Error::InvalidScenario(msgs.join("; ")));
        }
        let flows = self.build_flows(&net)?;
        flows.check_routes(&net)?;
        Ok((net, flows))
    }

    /// Resolves identifiers into an unvalidated network. Only reference errors are raised.
    pub fn build_network(&self) -> Result<RoadNetwork> {
        let mut lanes = Vec::new();
        let mut lane_index = HashMap::new();
        let mut intersection_index = HashMap::new();
        for (i, node) in self.intersections.iter().enumerate() {
            if intersection_index.insert(node.id.clone(), i).is_some() {
                return Err(Error::InvalidScenario(format!("duplicate intersection id `{}`", node.id)));
            }
            for l in &node.lanes {
                if lane_index.insert(l.id.clone(), lanes.len()).is_some() {
                    return Err(Error::InvalidScenario(format!("duplicate lane id `{}`", l.id)));
                }
                lanes.push(Lane {
                    id: l.id.clone(),
                    length_m: l.length_m,
                    speed_mps: l.speed_mps,
                    capacity: l.capacity,
                    kind: l.kind,
                    intersection: i,
                });
            }
        }
        let lane_ref = |context: &str, id: &str| {
            lane_index.get(id).copied().ok_or_else(|| Error::DanglingReference {
                context: context.to_string(),
                id: id.to_string(),
            })
        };

        let mut intersections = Vec::with_capacity(self.intersections.len());
        for node in &self.intersections {
            let ctx = format!("intersection `{}`", node.id);
            let movements = node
                .movements
                .iter()
                .map(|m| {
                    let mctx = format!("{ctx} movement `{}`", m.id);
                    Ok(Movement {
                        label: m.id.clone(),
                        from_lane: lane_ref(&mctx, &m.from)?,
                        to_lane: lane_ref(&mctx, &m.to)?,
                        turn: m.turn,
                        always_green: m.always_green,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if node.conflict_matrix.len() != movements.len() {
                return Err(Error::InvalidScenario(format!(
                    "{ctx}: conflict matrix has {} rows for {} movements",
                    node.conflict_matrix.len(),
                    movements.len()
                )));
            }
            let raw = node
                .conflict_matrix
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&c| match c {
                            0 => Ok(ConflictClass::NonConflicting),
                            1 => Ok(ConflictClass::Conflicting),
                            2 => Ok(ConflictClass::Partial),
                            other => Err(Error::InvalidScenario(format!(
                                "{ctx}: conflict code {other} is not 0, 1 or 2"
                            ))),
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let conflicts = ConflictMatrix::from_classes(&raw)?;
            let always_green: Vec<bool> = movements.iter().map(|m| m.always_green).collect();
            let phases = enumerate_phases_excluding(&conflicts, &always_green);
            let neighbors = node
                .neighbors
                .iter()
                .map(|n| {
                    intersection_index.get(n).copied().ok_or_else(|| Error::DanglingReference {
                        context: format!("{ctx} neighbors"),
                        id: n.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let own = |kind| {
                node.lanes
                    .iter()
                    .filter(|l| l.kind == kind)
                    .map(|l| lane_index[&l.id])
                    .collect::<Vec<_>>()
            };
            intersections.push(Intersection {
                id: node.id.clone(),
                incoming: own(LaneKind::Incoming),
                outgoing: own(LaneKind::Outgoing),
                movements,
                conflicts,
                phases,
                neighbors,
            });
        }

        let links = self
            .links
            .iter()
            .map(|l| {
                Ok(Link {
                    from_lane: lane_ref("links", &l.from_lane)?,
                    to_lane: lane_ref("links", &l.to_lane)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(RoadNetwork {
            id: self.id.clone().unwrap_or_else(|| "scenario".to_string()),
            lanes,
            intersections,
            links,
            lane_index,
            intersection_index,
        })
    }

    fn build_flows(&self, net: &RoadNetwork) -> Result<FlowSpec> {
        let mut entries = Vec::with_capacity(self.flows.len());
        for (i, f) in self.flows.iter().enumerate() {
            let ctx = format!("flow {i}");
            let route = f
                .route
                .iter()
                .map(|id| {
                    net.lane_by_id(id).ok_or_else(|| Error::DanglingReference {
                        context: ctx.clone(),
                        id: id.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if route.is_empty() {
                return Err(Error::InvalidScenario(format!("{ctx}: empty route")));
            }
            if f.start_s < 0.0 || f.start_s > f.end_s {
                return Err(Error::InvalidScenario(format!(
                    "{ctx}: window [{}, {}] is not ordered",
                    f.start_s, f.end_s
                )));
            }
            let arrival = match (f.poisson_rate_vps, f.headway_s) {
                (Some(rate), _) if rate >= 0.0 && rate.is_finite() => Arrival::Poisson(rate),
                (Some(rate), _) => {
                    return Err(Error::NonPositive { field: "poisson_rate_vps", locus: ctx, value: rate })
                }
                (None, Some(h)) if h > 0.0 => Arrival::Headway(h),
                (None, Some(h)) => {
                    return Err(Error::NonPositive { field: "headway_s", locus: ctx, value: h })
                }
                (None, None) => {
                    return Err(Error::InvalidScenario(format!(
                        "{ctx}: needs headway_s or poisson_rate_vps"
                    )))
                }
            };
            entries.push(FlowEntry { route, start_s: f.start_s, end_s: f.end_s, arrival });
        }
        Ok(FlowSpec { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
      "id": "tiny",
      "intersections": [{
        "id": "A",
        "lanes": [
          {"id": "in", "length_m": 100, "speed_mps": 10, "capacity": 12, "kind": "incoming"},
          {"id": "out", "length_m": 100, "speed_mps": 10, "capacity": 12, "kind": "outgoing"}
        ],
        "movements": [{"id": "1", "from": "in", "to": "out", "turn": "through"}],
        "conflict_matrix": [[0]]
      }],
      "flows": [{"route": ["in", "out"], "start_s": 0, "end_s": 10, "headway_s": 2}]
    }"#;

    #[test]
    fn loads_minimal_scenario() {
        let (net, flows) = load_scenario(TINY).unwrap();
        assert_eq!(net.intersections.len(), 1);
        assert_eq!(net.intersections[0].phases.len(), 1);
        assert_eq!(flows.entries.len(), 1);
        assert_eq!(flows.entries[0].route, vec![0, 1]);
    }

    #[test]
    fn missing_lane_is_dangling() {
        let text = TINY.replace(r#""to": "out""#, r#""to": "nowhere""#);
        match load_scenario(&text) {
            Err(Error::DanglingReference { id, context }) => {
                assert_eq!(id, "nowhere");
                assert!(context.contains("movement `1`"));
            }
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_has_locus() {
        let text = TINY.replace(r#""capacity": 12, "kind": "incoming""#, r#""capacity": "x", "kind": "incoming""#);
        match load_scenario(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_dimensions_rejected() {
        let text = TINY.replacen(r#""length_m": 100"#, r#""length_m": 0"#, 1);
        assert!(matches!(
            load_scenario(&text),
            Err(Error::NonPositive { field: "length_m", .. })
        ));
        let text = TINY.replacen(r#""capacity": 12"#, r#""capacity": 0"#, 1);
        assert!(matches!(
            load_scenario(&text),
            Err(Error::NonPositive { field: "capacity", .. })
        ));
    }

    #[test]
    fn capacity_zero_is_one_violation() {
        let text = TINY.replacen(r#""capacity": 12"#, r#""capacity": 0"#, 1);
        let doc: ScenarioDocument = serde_json::from_str(&text).unwrap();
        let report = doc.build_network().unwrap().validate();
        assert_eq!(report.len(), 1, "{report:?}");
        assert!(report[0].0.contains("capacity 0"));
    }

    #[test]
    fn unknown_conflict_code_rejected() {
        let text = TINY.replace(r#"[[0]]"#, r#"[[3]]"#);
        assert!(matches!(load_scenario(&text), Err(Error::InvalidScenario(_))));
    }
}
