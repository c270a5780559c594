//! Scenarios bundled with the crate.

use crate::error::Result;
use crate::network::{load_scenario, RoadNetwork};
use crate::sim::FlowSpec;

/// Single intersection, twelve movements, Poisson demand at 90% of service capacity.
pub const SINGLE: &str = include_str!("../scenarios/single.json");

/// Sixteen intersections on a 4x4 grid.
pub const GRID4X4: &str = include_str!("../scenarios/grid4x4.json");

/// Looks up a bundled scenario by file name (`single.json`, `grid4x4.json`) or stem.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name.trim_end_matches(".json") {
        "single" => Some(SINGLE),
        "grid4x4" => Some(GRID4X4),
        _ => None,
    }
}

pub fn single() -> Result<(RoadNetwork, FlowSpec)> {
    load_scenario(SINGLE)
}

pub fn grid4x4() -> Result<(RoadNetwork, FlowSpec)> {
    load_scenario(GRID4X4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_has_eight_two_movement_phases() {
        let (net, _) = single().unwrap();
        assert_eq!(net.intersections.len(), 1);
        let node = &net.intersections[0];
        assert_eq!(node.movements.len(), 12);
        assert_eq!(node.phases.len(), 8);
        assert!(node.phases.iter().all(|p| p.movements.len() == 2));
    }

    #[test]
    fn grid_is_valid_with_four_interior_neighbors() {
        let (net, _) = grid4x4().unwrap();
        assert_eq!(net.intersections.len(), 16);
        assert!(net.validate().is_empty());
        for r in 0..4 {
            for c in 0..4 {
                let i = net.intersection_by_id(&format!("I{r}_{c}")).unwrap();
                let interior = (1..3).contains(&r) && (1..3).contains(&c);
                let deg = net.intersections[i].neighbors.len();
                if interior {
                    assert_eq!(deg, 4);
                } else {
                    assert!(deg == 2 || deg == 3);
                }
            }
        }
    }

    #[test]
    fn asymmetric_neighbor_is_one_violation() {
        use crate::network::ScenarioDocument;
        let mut doc: ScenarioDocument = serde_json::from_str(GRID4X4).unwrap();
        let a = doc.intersections.iter().position(|n| n.id == "I0_0").unwrap();
        doc.intersections[a].neighbors.retain(|n| n != "I0_1");
        let report = doc.build_network().unwrap().validate();
        assert_eq!(report.len(), 1, "{report:?}");
        assert!(report[0].0.contains("I0_0") && report[0].0.contains("I0_1"));
    }
}
