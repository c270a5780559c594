//! Regenerates the bundled synthetic scenarios under `scenarios/`.
//!
//! ```text
//! cargo run -p movelight --example gen_scenarios
//! ```

use std::path::Path;

use movelight::network::{
    FlowDoc, IntersectionDoc, LaneDoc, LaneKind, LinkDoc, MovementDoc, ScenarioDocument, Turn,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Heading {
    East,
    West,
    North,
    South,
}

impl Heading {
    fn tag(self) -> &'static str {
        match self {
            Heading::East => "EB",
            Heading::West => "WB",
            Heading::North => "NB",
            Heading::South => "SB",
        }
    }

    /// Side of the intersection a vehicle with this heading leaves through.
    fn exit_side(self) -> &'static str {
        match self {
            Heading::East => "E",
            Heading::West => "W",
            Heading::North => "N",
            Heading::South => "S",
        }
    }

    fn after(self, turn: Turn) -> Heading {
        use Heading::*;
        match (self, turn) {
            (h, Turn::Through) => h,
            (East, Turn::Left) => North,
            (East, Turn::Right) => South,
            (North, Turn::Left) => West,
            (North, Turn::Right) => East,
            (West, Turn::Left) => South,
            (West, Turn::Right) => North,
            (South, Turn::Left) => East,
            (South, Turn::Right) => West,
        }
    }

    /// Grid step as (row, col) delta; row 0 is the northern edge.
    fn delta(self) -> (i32, i32) {
        match self {
            Heading::East => (0, 1),
            Heading::West => (0, -1),
            Heading::North => (-1, 0),
            Heading::South => (1, 0),
        }
    }
}

fn turn_tag(t: Turn) -> &'static str {
    match t {
        Turn::Left => "L",
        Turn::Through => "T",
        Turn::Right => "R",
    }
}

// Movement order: 1..8 follow the eight-movement conflict matrix, 9..12 are right turns.
const MOVEMENTS: [(Heading, Turn); 12] = [
    (Heading::East, Turn::Through),
    (Heading::West, Turn::Left),
    (Heading::North, Turn::Through),
    (Heading::South, Turn::Left),
    (Heading::West, Turn::Through),
    (Heading::East, Turn::Left),
    (Heading::South, Turn::Through),
    (Heading::North, Turn::Left),
    (Heading::East, Turn::Right),
    (Heading::West, Turn::Right),
    (Heading::North, Turn::Right),
    (Heading::South, Turn::Right),
];

// As printed, including the one-directional entry at row 3 / column 6.
const PRINTED: [&str; 8] = [
    "-CCC--CC", "C-CC--CC", "CC-CC---", "CCC-CC--", "--CC-CCC", "--CCC-CC", "CC--CC-C", "CC--CCC-",
];

fn conflict_matrix() -> Vec<Vec<u8>> {
    let mut m = vec![vec![0u8; 12]; 12];
    for (i, row) in PRINTED.iter().enumerate() {
        for (j, c) in row.chars().enumerate() {
            if c == 'C' {
                m[i][j] = 1;
            }
        }
    }
    // Right turns partially conflict with the through movement of their own approach.
    for (rt, th) in [(8, 0), (9, 4), (10, 2), (11, 6)] {
        m[rt][th] = 2;
        m[th][rt] = 2;
    }
    m
}

fn in_lane(node: &str, h: Heading, t: Turn) -> String {
    format!("{node}_{}_{}", h.tag(), turn_tag(t))
}

fn out_lane(node: &str, h: Heading) -> String {
    format!("{node}_out_{}", h.exit_side())
}

struct Geometry {
    in_length_m: f64,
    in_capacity: usize,
    out_length_m: f64,
    out_capacity: usize,
    speed_mps: f64,
}

fn intersection(id: &str, g: &Geometry, neighbors: Vec<String>) -> IntersectionDoc {
    let mut lanes = Vec::new();
    for h in [Heading::East, Heading::West, Heading::North, Heading::South] {
        for t in [Turn::Left, Turn::Through, Turn::Right] {
            lanes.push(LaneDoc {
                id: in_lane(id, h, t),
                length_m: g.in_length_m,
                speed_mps: g.speed_mps,
                capacity: g.in_capacity,
                kind: LaneKind::Incoming,
            });
        }
    }
    for h in [Heading::East, Heading::West, Heading::North, Heading::South] {
        lanes.push(LaneDoc {
            id: out_lane(id, h),
            length_m: g.out_length_m,
            speed_mps: g.speed_mps,
            capacity: g.out_capacity,
            kind: LaneKind::Outgoing,
        });
    }
    let movements = MOVEMENTS
        .iter()
        .enumerate()
        .map(|(i, &(h, t))| MovementDoc {
            id: (i + 1).to_string(),
            from: in_lane(id, h, t),
            to: out_lane(id, h.after(t)),
            turn: t,
            always_green: t == Turn::Right,
        })
        .collect();
    IntersectionDoc {
        id: id.to_string(),
        lanes,
        movements,
        conflict_matrix: conflict_matrix(),
        neighbors,
    }
}

fn single() -> ScenarioDocument {
    let g = Geometry {
        in_length_m: 300.0,
        in_capacity: 40,
        out_length_m: 300.0,
        out_capacity: 120,
        speed_mps: 15.0,
    };
    // Critical ratios over the ring {1,5},{2,6},{3,7},{4,8} at 0.5 veh/s saturation:
    // 0.30 + 0.15 + 0.20 + 0.25 = 0.90 of service capacity.
    let rate = |h: Heading, t: Turn| match (h, t) {
        (Heading::East | Heading::West, Turn::Through) => 0.15,
        (Heading::East | Heading::West, Turn::Left) => 0.075,
        (Heading::North | Heading::South, Turn::Through) => 0.10,
        (Heading::North | Heading::South, Turn::Left) => 0.125,
        (_, Turn::Right) => 0.05,
    };
    let flows = MOVEMENTS
        .iter()
        .map(|&(h, t)| FlowDoc {
            route: vec![in_lane("I0", h, t), out_lane("I0", h.after(t))],
            start_s: 0.0,
            end_s: 3600.0,
            headway_s: None,
            poisson_rate_vps: Some(rate(h, t)),
        })
        .collect();
    ScenarioDocument {
        id: Some("single".into()),
        description: Some(
            "Synthetic 1x1 intersection, bidirectional turning Poisson flows at 90% of ring service capacity"
                .into(),
        ),
        intersections: vec![intersection("I0", &g, Vec::new())],
        links: Vec::new(),
        flows,
    }
}

fn grid(n: i32) -> ScenarioDocument {
    let g = Geometry {
        in_length_m: 150.0,
        in_capacity: 20,
        out_length_m: 150.0,
        out_capacity: 60,
        speed_mps: 15.0,
    };
    let name = |r: i32, c: i32| format!("I{r}_{c}");
    let inside = |r: i32, c: i32| (0..n).contains(&r) && (0..n).contains(&c);
    let mut intersections = Vec::new();
    let mut links = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let mut neighbors = Vec::new();
            for h in [Heading::North, Heading::West, Heading::East, Heading::South] {
                let (dr, dc) = h.delta();
                if inside(r + dr, c + dc) {
                    neighbors.push(name(r + dr, c + dc));
                    for t in [Turn::Left, Turn::Through, Turn::Right] {
                        links.push(LinkDoc {
                            from_lane: out_lane(&name(r, c), h),
                            to_lane: in_lane(&name(r + dr, c + dc), h, t),
                        });
                    }
                }
            }
            intersections.push(intersection(&name(r, c), &g, neighbors));
        }
    }

    // Drives from a boundary entry, turning at the listed (steps-from-entry, turn) points.
    let route = |r0: i32, c0: i32, h0: Heading, turns: &[(i32, Turn)]| {
        let (mut r, mut c, mut h) = (r0, c0, h0);
        let mut lanes = Vec::new();
        let mut k = 0;
        while inside(r, c) {
            let t = turns.iter().find(|(at, _)| *at == k).map_or(Turn::Through, |x| x.1);
            lanes.push(in_lane(&name(r, c), h, t));
            h = h.after(t);
            lanes.push(out_lane(&name(r, c), h));
            let (dr, dc) = h.delta();
            r += dr;
            c += dc;
            k += 1;
        }
        lanes
    };
    let mut flows = Vec::new();
    let mut add = |lanes: Vec<String>, rate: f64| {
        flows.push(FlowDoc {
            route: lanes,
            start_s: 0.0,
            end_s: 3600.0,
            headway_s: None,
            poisson_rate_vps: Some(rate),
        })
    };
    for i in 0..n {
        let entries = [
            (i, 0, Heading::East, 0.10),
            (i, n - 1, Heading::West, 0.10),
            (n - 1, i, Heading::North, 0.06),
            (0, i, Heading::South, 0.06),
        ];
        for (r, c, h, through) in entries {
            add(route(r, c, h, &[]), through);
            add(route(r, c, h, &[(1, Turn::Left)]), 0.02);
            add(route(r, c, h, &[(2, Turn::Right)]), 0.02);
        }
    }
    ScenarioDocument {
        id: Some("grid4x4".into()),
        description: Some(
            "Synthetic 4x4 grid, 300 m blocks, through traffic on every row and column with turning routes"
                .into(),
        ),
        intersections,
        links,
        flows,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    std::fs::create_dir_all(&dir)?;
    for (file, doc) in [("single.json", single()), ("grid4x4.json", grid(4))] {
        doc.load()?;
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        std::fs::write(dir.join(file), text)?;
        println!("wrote {}", dir.join(file).display());
    }
    Ok(())
}
