#![allow(dead_code)]

use proptest::prelude::*;
use uplan::generator::{generate, GeneratorParams};
use uplan::model::{EdgeDoc, InstanceDoc, SwitchDoc, UGraph};
use uplan::rng::SplitMix64;

pub const CORPUS_SEED: u64 = 0x5EED_2024;
pub const CORPUS_SIZE: u64 = 240;

/// Generator parameters for corpus member `i`: 4 to 8 vertices, 1 to 5
/// switches, up to 3 extra certain edges.
pub fn corpus_params(i: u64) -> GeneratorParams {
    let mut rng = SplitMix64::substream(CORPUS_SEED, i);
    let vertices = 4 + rng.below(5) as usize;
    let pairs = vertices * (vertices - 1) / 2;
    let room = pairs - (vertices - 1);
    let switches = (1 + rng.below(5) as usize).min(room);
    let extra_edges = (rng.below(4) as usize).min(room - switches);
    GeneratorParams {
        vertices,
        extra_edges,
        switches,
        weight_range: [1.0, 10.0],
        prob_range: [0.1, 0.9],
        seed: rng.next_u64(),
    }
}

pub fn corpus() -> Vec<UGraph> {
    (0..CORPUS_SIZE)
        .map(|i| UGraph::from_doc(&generate(&corpus_params(i)).expect("corpus params")).expect("corpus instance"))
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn weight() -> impl Strategy<Value = f64> {
    // small integers provoke ties between routes
    prop_oneof![(1u32..6).prop_map(f64::from), 0.5f64..8.0]
}

fn prob() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), Just(0.5), 0.05f64..0.95]
}

/// Arbitrary small instances: possibly disconnected, parallel connections
/// allowed, switch probabilities including the degenerate 0 and 1.
pub fn arb_instance(max_vertices: usize, max_switches: usize) -> impl Strategy<Value = UGraph> {
    (2..=max_vertices)
        .prop_flat_map(move |n| {
            let pair = (0..n, 1..n).prop_map(move |(a, d)| (a, (a + d) % n));
            (
                Just(n),
                proptest::collection::vec((pair.clone(), weight()), 0..=n + 2),
                proptest::collection::vec((pair, weight(), prob()), 0..=max_switches),
                0..n,
                0..n,
            )
        })
        .prop_map(|(n, edges, switches, start, goal)| {
            let name = |v: usize| format!("v{v}");
            let doc = InstanceDoc {
                vertices: (0..n).map(name).collect(),
                edges: edges
                    .into_iter()
                    .enumerate()
                    .map(|(i, ((a, b), w))| EdgeDoc { id: format!("e{i}"), ends: [name(a), name(b)], weight: w })
                    .collect(),
                switches: switches
                    .into_iter()
                    .enumerate()
                    .map(|(i, ((a, b), w, p))| SwitchDoc {
                        id: format!("s{i}"),
                        ends: [name(a), name(b)],
                        weight: w,
                        prob: p,
                    })
                    .collect(),
                start: name(start),
                goal: name(goal),
            };
            UGraph::from_doc(&doc).expect("arbitrary instance is valid")
        })
}

/// 5 x 10 grid of certain edges with up to 12 cheap long-range switches,
/// corner to corner. Prefixes of the same switch list give nested instances.
pub fn stress_grid(switches: usize) -> UGraph {
    const ROWS: usize = 5;
    const COLS: usize = 10;
    let name = |r: usize, c: usize| format!("r{r}c{c}");
    let mut rng = SplitMix64::new(3);
    let mut edges = Vec::new();
    for r in 0..ROWS {
        for c in 0..COLS {
            if c + 1 < COLS {
                edges.push(EdgeDoc {
                    id: format!("h{r}_{c}"),
                    ends: [name(r, c), name(r, c + 1)],
                    weight: rng.uniform(2.0, 6.0),
                });
            }
            if r + 1 < ROWS {
                edges.push(EdgeDoc {
                    id: format!("v{r}_{c}"),
                    ends: [name(r, c), name(r + 1, c)],
                    weight: rng.uniform(2.0, 6.0),
                });
            }
        }
    }
    let mut shortcuts = Vec::new();
    while shortcuts.len() < 12 {
        let (r1, c1) = (rng.below(ROWS as u64) as usize, rng.below(COLS as u64) as usize);
        let (r2, c2) = (rng.below(ROWS as u64) as usize, rng.below(COLS as u64) as usize);
        if r1.abs_diff(r2) + c1.abs_diff(c2) < 3 {
            continue;
        }
        shortcuts.push(SwitchDoc {
            id: format!("s{}", shortcuts.len()),
            ends: [name(r1, c1), name(r2, c2)],
            weight: rng.uniform(1.0, 3.0),
            prob: rng.uniform(0.3, 0.7),
        });
    }
    shortcuts.truncate(switches);
    let doc = InstanceDoc {
        vertices: (0..ROWS).flat_map(|r| (0..COLS).map(move |c| name(r, c))).collect(),
        edges,
        switches: shortcuts,
        start: name(0, 0),
        goal: name(ROWS - 1, COLS - 1),
    };
    UGraph::from_doc(&doc).expect("stress instance")
}
