//! Ground truth by exhaustion: every switch realization, policy execution in
//! a fixed world, and a per-edge expectimax over all knowledge vectors that
//! never forms generic transitions or a representing graph.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::canonical_key;
use crate::model::{ConfigClass, ConnRef, KnowledgeState, KnowledgeView, SwitchStatus, UGraph, ViewMode};
use crate::planner::{PolicyAction, PolicyDocument};

pub const MAX_WORLD_SWITCHES: usize = 20;
pub const MAX_EXPECTIMAX_SWITCHES: usize = 12;

/// One joint realization of every switch.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    /// `true` = On, in switch declaration order.
    pub status: Vec<bool>,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    ReachedGoal,
    ProvedUnreachable,
}

/// All 2^k worlds, binary counting over declaration order (first switch
/// most significant, On before Off).
pub fn enumerate_worlds(g: &UGraph) -> Result<Vec<World>> {
    let k = g.switches().len();
    if k > MAX_WORLD_SWITCHES {
        return Err(Error::Limit { what: "switches", actual: k, cap: MAX_WORLD_SWITCHES });
    }
    let worlds = (0..1u64 << k)
        .map(|mask| {
            let status: Vec<bool> = (0..k).map(|j| mask >> (k - 1 - j) & 1 == 0).collect();
            let probability =
                g.switches().iter().zip(&status).map(|(s, &on)| if on { s.prob } else { 1.0 - s.prob }).product();
            World { status, probability }
        })
        .collect();
    Ok(worlds)
}

/// Reveals every unknown switch at `v` from the world.
pub(crate) fn reveal(g: &UGraph, k: &mut KnowledgeState, v: usize, world: &World) -> bool {
    let mut changed = false;
    for inc in g.incident(v) {
        if let ConnRef::Switch(s) = inc.conn {
            if k.status(s) == SwitchStatus::Unknown {
                k.set(s, if world.status[s] { SwitchStatus::On } else { SwitchStatus::Off });
                changed = true;
            }
        }
    }
    changed
}

/// Executes a policy document in a fixed world.
pub fn run_in_world(g: &UGraph, policy: &PolicyDocument, world: &World) -> Result<(f64, Outcome)> {
    if world.status.len() != g.switches().len() {
        return Err(Error::Mismatch("world does not match instance".into()));
    }
    let mut config = g.initial_configuration();
    let mut cost = 0.0;
    let guard = g.vertex_count().saturating_mul(3usize.saturating_pow(g.switches().len() as u32)) + 1;
    for _ in 0..guard {
        let mut class = KnowledgeView::new(g, config.knowledge.clone()).classify(config.current);
        if class == ConfigClass::Uncontrolled {
            reveal(g, &mut config.knowledge, config.current, world);
            class = KnowledgeView::new(g, config.knowledge.clone()).classify(config.current);
        }
        let key = canonical_key(&config);
        let entry = policy
            .states
            .get(&key)
            .ok_or_else(|| Error::IncompletePolicy(format!("no entry for visited state {key}")))?;
        match (&entry.action, class) {
            (PolicyAction::Finish { cost: finish }, ConfigClass::GoodTerminal { .. }) => {
                return Ok((cost + finish, Outcome::ReachedGoal))
            }
            (PolicyAction::Halt, ConfigClass::BadTerminal) => return Ok((cost, Outcome::ProvedUnreachable)),
            (PolicyAction::Move { to, waypoints, .. }, ConfigClass::Active) => {
                for id in waypoints {
                    let conn =
                        g.conn_by_id(id).ok_or_else(|| Error::Fault(format!("unknown waypoint {id} at {key}")))?;
                    if !config.knowledge.traversable(conn, ViewMode::Pessimistic) {
                        return Err(Error::Fault(format!("waypoint {id} not traversable at {key}")));
                    }
                    let [a, b] = g.conn_ends(conn);
                    config.current = if a == config.current {
                        b
                    } else if b == config.current {
                        a
                    } else {
                        return Err(Error::Fault(format!("waypoint {id} does not touch the walk at {key}")));
                    };
                    cost += g.conn_weight(conn);
                }
                if g.vertex_name(config.current) != to {
                    return Err(Error::Fault(format!("walk from {key} ends away from {to}")));
                }
            }
            (action, class) => {
                return Err(Error::Mismatch(format!("action {action:?} at {key} which is {class}")));
            }
        }
    }
    Err(Error::Fault("policy execution did not terminate".into()))
}

/// Probability-weighted cost and goal-reaching mass over all worlds.
pub fn exact_policy_value(g: &UGraph, policy: &PolicyDocument) -> Result<(f64, f64)> {
    let mut expected = 0.0;
    let mut reach = 0.0;
    // probability-zero worlds may visit states the representing graph prunes
    for w in enumerate_worlds(g)?.into_iter().filter(|w| w.probability > 0.0) {
        let (cost, outcome) = run_in_world(g, policy, &w)?;
        expected += w.probability * cost;
        if outcome == Outcome::ReachedGoal {
            reach += w.probability;
        }
    }
    Ok((expected, reach))
}

/// Per-world (world, cost, outcome) for a policy, over worlds of positive probability.
pub fn world_table(g: &UGraph, policy: &PolicyDocument) -> Result<Vec<(World, f64, Outcome)>> {
    enumerate_worlds(g)?
        .into_iter()
        .filter(|w| w.probability > 0.0)
        .map(|w| run_in_world(g, policy, &w).map(|(c, o)| (w, c, o)))
        .collect()
}

fn knowledge_index(k: &KnowledgeState) -> usize {
    k.statuses().iter().fold(0, |acc, s| {
        acc * 3
            + match s {
                SwitchStatus::Unknown => 0,
                SwitchStatus::On => 1,
                SwitchStatus::Off => 2,
            }
    })
}

fn knowledge_from_index(mut idx: usize, k: usize) -> KnowledgeState {
    let mut statuses = vec![SwitchStatus::Unknown; k];
    for slot in statuses.iter_mut().rev() {
        *slot = match idx % 3 {
            0 => SwitchStatus::Unknown,
            1 => SwitchStatus::On,
            _ => SwitchStatus::Off,
        };
        idx /= 3;
    }
    KnowledgeState::from_statuses(statuses)
}

/// Expected-cost value at a vertex before any revelation there.
fn arrival_value(g: &UGraph, view: &KnowledgeView<'_>, v: usize, table: &HashMap<usize, Vec<f64>>) -> Option<f64> {
    match view.classify(v) {
        ConfigClass::GoodTerminal { remaining } => Some(remaining),
        ConfigClass::BadTerminal => Some(0.0),
        ConfigClass::Active => None,
        ConfigClass::Uncontrolled => {
            // one switch at a time: independence makes the joint product
            // equal to the nested expectation
            let unknown: Vec<usize> = g
                .incident(v)
                .iter()
                .filter_map(|inc| match inc.conn {
                    ConnRef::Switch(s) if view.knowledge().status(s) == SwitchStatus::Unknown => Some(s),
                    _ => None,
                })
                .collect();
            let mut value = 0.0;
            let mut stack = vec![(view.knowledge().clone(), 1.0, 0usize)];
            while let Some((k, p, depth)) = stack.pop() {
                if p == 0.0 {
                    continue;
                }
                if depth == unknown.len() {
                    value += p * table[&knowledge_index(&k)][v];
                    continue;
                }
                let s = unknown[depth];
                if k.status(s) != SwitchStatus::Unknown {
                    stack.push((k, p, depth + 1));
                    continue;
                }
                let prob = g.switches()[s].prob;
                stack.push((k.with(s, SwitchStatus::On), p * prob, depth + 1));
                stack.push((k.with(s, SwitchStatus::Off), p * (1.0 - prob), depth + 1));
            }
            Some(value)
        }
    }
}

/// Optimal expected cost from the initial configuration by expectimax over
/// all 3^k knowledge vectors, deepest layer first.
///
/// Within a layer moves are deterministic, so values of active vertices come
/// from a multi-source relaxation seeded with the fixed values of terminal
/// and uncontrolled vertices.
pub fn layered_expectimax_value(g: &UGraph) -> Result<f64> {
    let k = g.switches().len();
    if k > MAX_EXPECTIMAX_SWITCHES {
        return Err(Error::Limit { what: "switches", actual: k, cap: MAX_EXPECTIMAX_SWITCHES });
    }
    let n = g.vertex_count();
    let total = 3usize.pow(k as u32);
    let mut order: Vec<KnowledgeState> = (0..total).map(|i| knowledge_from_index(i, k)).collect();
    order.sort_by_key(|ks| std::cmp::Reverse(ks.known_count()));

    // value of standing at v with knowledge K, after any revelation at v
    let mut table: HashMap<usize, Vec<f64>> = HashMap::with_capacity(total);
    let mut initial_value = None;
    for knowledge in order {
        let view = KnowledgeView::new(g, knowledge.clone());
        let mut value = vec![f64::INFINITY; n];
        let mut fixed = vec![false; n];
        for v in 0..n {
            if let Some(x) = arrival_value(g, &view, v, &table) {
                value[v] = x;
                fixed[v] = true;
            }
        }
        // Bellman-Ford style relaxation over certain connections into active
        // vertices: value(u) = min over neighbours w of weight + value(w).
        loop {
            let mut changed = false;
            for u in (0..n).filter(|&u| !fixed[u]) {
                for inc in g.incident(u) {
                    if !knowledge.traversable(inc.conn, ViewMode::Pessimistic) {
                        continue;
                    }
                    let cand = g.conn_weight(inc.conn) + value[inc.other];
                    if cand < value[u] {
                        value[u] = cand;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if knowledge.known_count() == 0 {
            let start = g.start();
            // before anything is revealed the start may itself be uncontrolled
            initial_value = Some(value[start]);
        }
        // after revelation at v, the agent sits in a controlled configuration;
        // entries for uncontrolled vertices are never read from this layer
        table.insert(knowledge_index(&knowledge), value);
    }
    let v = initial_value.expect("all-unknown layer processed");
    if !v.is_finite() {
        return Err(Error::Fault("initial configuration has no finite value".into()));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_representing_graph, Limits};
    use crate::planner::{solve, Policy};
    use crate::testing::*;

    fn optimal_doc(g: &UGraph) -> PolicyDocument {
        let rg = build_representing_graph(g, &Limits::default()).unwrap();
        let sol = solve(&rg);
        PolicyDocument::new(&rg, &sol.policy, sol.values.root_value).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9
    }

    #[test]
    fn worlds() {
        let ws = enumerate_worlds(&bridge()).unwrap();
        assert_eq!(
            ws,
            vec![World { status: vec![true], probability: 0.8 }, World { status: vec![false], probability: 1.0 - 0.8 },]
        );
        let ws = enumerate_worlds(&two_switch()).unwrap();
        let probs: Vec<f64> = ws.iter().map(|w| w.probability).collect();
        for (got, want) in probs.iter().zip([0.4, 0.4, 0.1, 0.1]) {
            assert!((got - want).abs() < 1e-15);
        }
        let ws = enumerate_worlds(&single_vertex()).unwrap();
        assert_eq!(ws, vec![World { status: vec![], probability: 1.0 }]);
    }

    #[test]
    fn certain_switch_keeps_its_impossible_world_out_of_evaluation() {
        let g = crate::model::load_ugraph(&crate::testing::BRIDGE_TEXT.replace("0.8", "1")).unwrap();
        let ws = enumerate_worlds(&g).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[1].probability, 0.0);
        let doc = optimal_doc(&g);
        assert_eq!(exact_policy_value(&g, &doc).unwrap(), (5.0, 1.0));
        assert_eq!(world_table(&g, &doc).unwrap().len(), 1);
    }

    #[test]
    fn runs_in_fixed_worlds() {
        let g = detour(0.8);
        let doc = optimal_doc(&g);
        let on = World { status: vec![true], probability: 0.8 };
        let off = World { status: vec![false], probability: 0.2 };
        assert_eq!(run_in_world(&g, &doc, &on).unwrap(), (6.0, Outcome::ReachedGoal));
        assert_eq!(run_in_world(&g, &doc, &off).unwrap(), (14.0, Outcome::ReachedGoal));

        let g = bridge();
        let doc = optimal_doc(&g);
        assert_eq!(run_in_world(&g, &doc, &off).unwrap(), (0.0, Outcome::ProvedUnreachable));
    }

    #[test]
    fn exact_values() {
        let (v, r) = exact_policy_value(&detour(0.8), &optimal_doc(&detour(0.8))).unwrap();
        assert!(close(v, 7.6) && r == 1.0);
        let (v, r) = exact_policy_value(&bridge(), &optimal_doc(&bridge())).unwrap();
        assert!(close(v, 4.0) && close(r, 0.8));
        let g = single_vertex();
        assert_eq!(exact_policy_value(&g, &optimal_doc(&g)).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn expectimax_examples() {
        assert!(close(layered_expectimax_value(&detour(0.8)).unwrap(), 7.6));
        assert!(close(layered_expectimax_value(&bridge()).unwrap(), 4.0));
        assert!(close(layered_expectimax_value(&detour(0.1)).unwrap(), 10.0));
        assert!(close(layered_expectimax_value(&two_switch_series()).unwrap(), 0.8 * 1.5));
        assert_eq!(layered_expectimax_value(&single_vertex()).unwrap(), 0.0);
    }

    #[test]
    fn missing_state_is_reported() {
        let g = detour(0.8);
        let mut doc = optimal_doc(&g);
        doc.states.remove("C|CD=off");
        let off = World { status: vec![false], probability: 0.2 };
        assert!(matches!(run_in_world(&g, &doc, &off), Err(Error::IncompletePolicy(_))));
    }

    #[test]
    fn non_optimal_document_values() {
        let g = detour(0.8);
        let rg = build_representing_graph(&g, &Limits::default()).unwrap();
        let direct = Policy::from_choices(vec![Some(1), None, None, None]);
        let doc = PolicyDocument::new(&rg, &direct, 10.0).unwrap();
        let (v, _) = exact_policy_value(&g, &doc).unwrap();
        assert!(close(v, 10.0));
    }

    #[test]
    fn knowledge_index_round_trip() {
        for i in 0..81 {
            assert_eq!(knowledge_index(&knowledge_from_index(i, 4)), i);
        }
    }
}
