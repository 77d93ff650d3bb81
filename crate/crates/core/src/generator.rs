//! Random instances: a spanning tree of certain edges, extra edges and
//! switches on distinct vertex pairs, start and goal at the tree's diameter.

use crate::error::{Error, Result};
use crate::model::{EdgeDoc, InstanceDoc, SwitchDoc};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub vertices: usize,
    pub extra_edges: usize,
    pub switches: usize,
    pub weight_range: [f64; 2],
    pub prob_range: [f64; 2],
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            vertices: 6,
            extra_edges: 3,
            switches: 2,
            weight_range: [1.0, 10.0],
            prob_range: [0.1, 0.9],
            seed: 0,
        }
    }
}

impl GeneratorParams {
    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.vertices < 2 {
            problems.push(format!("need at least 2 vertices, got {}", self.vertices));
        }
        let [wl, wh] = self.weight_range;
        if !(wl > 0.0 && wl <= wh && wh.is_finite()) {
            problems.push(format!("weight range [{wl}, {wh}] must be positive and non-empty"));
        }
        let [pl, ph] = self.prob_range;
        if !(pl > 0.0 && pl <= ph && ph < 1.0) {
            problems.push(format!("prob range [{pl}, {ph}] must lie inside (0, 1)"));
        }
        let pairs = self.vertices * self.vertices.saturating_sub(1) / 2;
        let wanted = self.vertices.saturating_sub(1) + self.extra_edges + self.switches;
        if wanted > pairs {
            problems.push(format!("{wanted} connections requested but only {pairs} vertex pairs exist"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(problems))
        }
    }
}

fn farthest(adj: &[Vec<(usize, f64)>], from: usize) -> usize {
    let mut dist = vec![f64::NAN; adj.len()];
    dist[from] = 0.0;
    let mut stack = vec![from];
    while let Some(u) = stack.pop() {
        for &(v, w) in &adj[u] {
            if dist[v].is_nan() {
                dist[v] = dist[u] + w;
                stack.push(v);
            }
        }
    }
    // first index wins ties
    (0..adj.len()).fold(from, |best, v| if dist[v] > dist[best] { v } else { best })
}

pub fn generate(params: &GeneratorParams) -> Result<InstanceDoc> {
    params.validate()?;
    let n = params.vertices;
    let mut rng = SplitMix64::new(params.seed);
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();

    // random attachment order over a shuffled vertex sequence
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    let mut used = vec![vec![false; n]; n];
    let mut tree_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut edges = Vec::new();
    let [wl, wh] = params.weight_range;
    for i in 1..n {
        let a = order[i];
        let b = order[rng.below(i as u64) as usize];
        let w = rng.uniform(wl, wh);
        used[a][b] = true;
        used[b][a] = true;
        tree_adj[a].push((b, w));
        tree_adj[b].push((a, w));
        edges.push((a.min(b), a.max(b), w));
    }

    let mut free: Vec<(usize, usize)> =
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).filter(|&(a, b)| !used[a][b]).collect();
    let mut draw_pair = |rng: &mut SplitMix64| free.remove(rng.below(free.len() as u64) as usize);

    for _ in 0..params.extra_edges {
        let (a, b) = draw_pair(&mut rng);
        edges.push((a, b, rng.uniform(wl, wh)));
    }
    let [pl, ph] = params.prob_range;
    let mut switches = Vec::new();
    for _ in 0..params.switches {
        let (a, b) = draw_pair(&mut rng);
        let w = rng.uniform(wl, wh);
        switches.push((a, b, w, rng.uniform(pl, ph)));
    }

    let start = farthest(&tree_adj, 0);
    let goal = farthest(&tree_adj, start);

    Ok(InstanceDoc {
        vertices: names.clone(),
        edges: edges
            .into_iter()
            .enumerate()
            .map(|(i, (a, b, w))| EdgeDoc {
                id: format!("e{i}"),
                ends: [names[a].clone(), names[b].clone()],
                weight: w,
            })
            .collect(),
        switches: switches
            .into_iter()
            .enumerate()
            .map(|(i, (a, b, w, p))| SwitchDoc {
                id: format!("s{i}"),
                ends: [names[a].clone(), names[b].clone()],
                weight: w,
                prob: p,
            })
            .collect(),
        start: names[start].clone(),
        goal: names[goal].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UGraph;

    #[test]
    fn deterministic_bytes() {
        let p = GeneratorParams { vertices: 6, extra_edges: 3, switches: 2, seed: 9, ..Default::default() };
        let a = serde_json::to_string(&generate(&p).unwrap()).unwrap();
        let b = serde_json::to_string(&generate(&p).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = serde_json::to_string(&generate(&GeneratorParams { seed: 10, ..p }).unwrap()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn generated_instances_are_valid() {
        for seed in 0..50 {
            let p = GeneratorParams { vertices: 8, extra_edges: 4, switches: 5, seed, ..Default::default() };
            let doc = generate(&p).unwrap();
            let g = UGraph::from_doc(&doc).unwrap();
            assert_eq!(g.edges().len(), 7 + 4);
            assert_eq!(g.switches().len(), 5);
            assert_ne!(g.start(), g.goal());
            let mut pairs: Vec<_> = g
                .edges()
                .iter()
                .map(|e| e.ends)
                .chain(g.switches().iter().map(|s| s.ends))
                .map(|[a, b]| (a.min(b), a.max(b)))
                .collect();
            pairs.sort_unstable();
            pairs.dedup();
            assert_eq!(pairs.len(), 16);
            for s in g.switches() {
                assert!(s.prob > 0.0 && s.prob < 1.0);
            }
        }
    }

    #[test]
    fn two_vertex_path() {
        let p = GeneratorParams { vertices: 2, extra_edges: 0, switches: 0, seed: 1, ..Default::default() };
        let g = UGraph::from_doc(&generate(&p).unwrap()).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.vertex_count(), 2);
    }

    #[test]
    fn infeasible_requests() {
        let too_many = GeneratorParams { vertices: 3, extra_edges: 1, switches: 1, ..Default::default() };
        assert!(matches!(generate(&too_many), Err(Error::Invalid(_))));
        let one = GeneratorParams { vertices: 1, extra_edges: 0, switches: 0, ..Default::default() };
        assert!(matches!(generate(&one), Err(Error::Invalid(_))));
        let bad_prob = GeneratorParams { prob_range: [0.0, 0.5], ..Default::default() };
        assert!(matches!(generate(&bad_prob), Err(Error::Invalid(_))));
    }
}
