//! Backward dynamic programming over the representing graph, policy
//! evaluation, and the serialized policy document.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{canonical_key, ArcTarget, NatureNode, RepresentingGraph, Root, StateNode};
use crate::model::ConfigClass;

/// Relative slack under which two action values count as tied; ties go to
/// the lowest arc index.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Chosen action arc per state; `None` for terminals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    choice: Vec<Option<usize>>,
}

impl Policy {
    pub fn from_choices(choice: Vec<Option<usize>>) -> Self {
        Policy { choice }
    }

    /// Policy that takes arc `0` everywhere: the cheapest walk out of each state.
    pub fn cheapest_first(rg: &RepresentingGraph<'_>) -> Self {
        Policy { choice: rg.states.iter().map(|s| (!s.actions.is_empty()).then_some(0)).collect() }
    }

    pub fn choice(&self, state: usize) -> Option<usize> {
        self.choice.get(state).copied().flatten()
    }

    pub fn choices(&self) -> &[Option<usize>] {
        &self.choice
    }

    fn validate(&self, rg: &RepresentingGraph<'_>) -> Result<()> {
        if self.choice.len() != rg.states.len() {
            return Err(Error::IncompletePolicy(format!(
                "policy covers {} states, graph has {}",
                self.choice.len(),
                rg.states.len()
            )));
        }
        for s in &rg.states {
            match (s.class, self.choice[s.id]) {
                (ConfigClass::Active, Some(i)) if i < s.actions.len() => {}
                (ConfigClass::Active, Some(i)) => {
                    return Err(Error::Mismatch(format!("arc {i} out of range at {}", canonical_key(&s.config))))
                }
                (ConfigClass::Active, None) => {
                    return Err(Error::IncompletePolicy(format!("no choice at {}", canonical_key(&s.config))))
                }
                (_, Some(_)) => {
                    return Err(Error::Mismatch(format!(
                        "terminal {} only takes the finishing action",
                        canonical_key(&s.config)
                    )))
                }
                (_, None) => {}
            }
        }
        Ok(())
    }
}

/// Expected cost-to-go per state node and at the root.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub value: Vec<f64>,
    pub root_value: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub policy: Policy,
    pub values: ValueTable,
    /// Node evaluations plus arc traversals performed by the solver.
    pub visits: usize,
}

/// Cost of the finishing action at a terminal.
pub fn terminal_value(class: ConfigClass) -> Option<f64> {
    match class {
        ConfigClass::GoodTerminal { remaining } => Some(remaining),
        ConfigClass::BadTerminal => Some(0.0),
        _ => None,
    }
}

enum Choose<'p> {
    Min,
    Fixed(&'p Policy),
}

struct Evaluator<'a, 'g, 'p> {
    rg: &'a RepresentingGraph<'g>,
    mode: Choose<'p>,
    value: Vec<Option<f64>>,
    choice: Vec<Option<usize>>,
    visits: usize,
}

impl Evaluator<'_, '_, '_> {
    fn state(&mut self, id: usize) -> f64 {
        if let Some(v) = self.value[id] {
            return v;
        }
        self.visits += 1;
        let node: &StateNode<'_> = &self.rg.states[id];
        let v = if let Some(v) = terminal_value(node.class) {
            v
        } else {
            match self.mode {
                Choose::Fixed(policy) => {
                    let i = policy.choice(id).expect("validated policy");
                    self.visits += 1;
                    let arc = &self.rg.states[id].actions[i];
                    arc.move_cost + self.target(arc.target)
                }
                Choose::Min => {
                    let mut best: Option<(usize, f64)> = None;
                    for i in 0..self.rg.states[id].actions.len() {
                        self.visits += 1;
                        let arc = &self.rg.states[id].actions[i];
                        let v = arc.move_cost + self.target(arc.target);
                        match best {
                            Some((_, b)) if v >= b - TIE_TOLERANCE * b.abs() => {}
                            _ => best = Some((i, v)),
                        }
                    }
                    let (i, v) = best.expect("active state has actions");
                    self.choice[id] = Some(i);
                    v
                }
            }
        };
        self.value[id] = Some(v);
        v
    }

    fn nature(&mut self, n: &NatureNode<'_>) -> f64 {
        self.visits += 1;
        let mut total = 0.0;
        for b in &n.branches {
            self.visits += 1;
            total += b.probability * self.state(b.target);
        }
        total
    }

    fn target(&mut self, t: ArcTarget) -> f64 {
        match t {
            ArcTarget::State(s) => self.state(s),
            ArcTarget::Nature(n) => {
                let rg = self.rg;
                self.nature(&rg.natures[n])
            }
        }
    }

    fn root(&mut self) -> f64 {
        match self.rg.root {
            Root::State(s) => self.state(s),
            Root::Nature(n) => {
                let rg = self.rg;
                self.nature(&rg.natures[n])
            }
        }
    }
}

/// Optimal policy and values by memoized reverse-topological evaluation.
pub fn solve(rg: &RepresentingGraph<'_>) -> Solution {
    let n = rg.states.len();
    let mut ev = Evaluator { rg, mode: Choose::Min, value: vec![None; n], choice: vec![None; n], visits: 0 };
    let root_value = ev.root();
    // states unreachable from the root cannot exist in a built graph, but
    // policy_subgraph copies and hand-built graphs may carry them
    for id in 0..n {
        ev.state(id);
    }
    Solution {
        policy: Policy { choice: ev.choice },
        values: ValueTable { value: ev.value.into_iter().map(|v| v.expect("all valued")).collect(), root_value },
        visits: ev.visits,
    }
}

/// Expected cost of following `policy` from every state.
pub fn evaluate_policy(rg: &RepresentingGraph<'_>, policy: &Policy) -> Result<ValueTable> {
    policy.validate(rg)?;
    let n = rg.states.len();
    let mut ev = Evaluator { rg, mode: Choose::Fixed(policy), value: vec![None; n], choice: vec![None; n], visits: 0 };
    let root_value = ev.root();
    for id in 0..n {
        ev.state(id);
    }
    Ok(ValueTable { value: ev.value.into_iter().map(|v| v.expect("all valued")).collect(), root_value })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    State(usize),
    Nature(usize),
}

fn policy_successors(rg: &RepresentingGraph<'_>, policy: &Policy, node: Node) -> Vec<Node> {
    match node {
        Node::State(s) => match policy.choice(s) {
            Some(i) => match rg.states[s].actions[i].target {
                ArcTarget::State(t) => vec![Node::State(t)],
                ArcTarget::Nature(n) => vec![Node::Nature(n)],
            },
            None => Vec::new(),
        },
        Node::Nature(n) => rg.natures[n].branches.iter().map(|b| Node::State(b.target)).collect(),
    }
}

fn root_node(rg: &RepresentingGraph<'_>) -> Node {
    match rg.root {
        Root::State(s) => Node::State(s),
        Root::Nature(n) => Node::Nature(n),
    }
}

/// Nodes reachable from the root under `policy`, in topological order.
fn policy_topological_order(rg: &RepresentingGraph<'_>, policy: &Policy) -> Vec<Node> {
    let ns = rg.states.len();
    let index = |n: Node| match n {
        Node::State(s) => s,
        Node::Nature(k) => ns + k,
    };
    let mut visited = vec![false; ns + rg.natures.len()];
    let mut post = Vec::new();
    // iterative post-order DFS
    let root = root_node(rg);
    let mut stack = vec![(root, false)];
    while let Some((node, done)) = stack.pop() {
        if done {
            post.push(node);
            continue;
        }
        if visited[index(node)] {
            continue;
        }
        visited[index(node)] = true;
        stack.push((node, true));
        for next in policy_successors(rg, policy, node).into_iter().rev() {
            if !visited[index(next)] {
                stack.push((next, false));
            }
        }
    }
    post.reverse();
    post
}

/// Probability mass absorbed at good terminals when following `policy`.
pub fn reach_probability(rg: &RepresentingGraph<'_>, policy: &Policy) -> Result<f64> {
    policy.validate(rg)?;
    let order = policy_topological_order(rg, policy);
    let mut state_mass = vec![0.0; rg.states.len()];
    let mut nature_mass = vec![0.0; rg.natures.len()];
    match root_node(rg) {
        Node::State(s) => state_mass[s] = 1.0,
        Node::Nature(n) => nature_mass[n] = 1.0,
    }
    let mut reached = 0.0;
    for node in order {
        match node {
            Node::State(s) => {
                let m = state_mass[s];
                match rg.states[s].class {
                    ConfigClass::GoodTerminal { .. } => reached += m,
                    ConfigClass::BadTerminal => {}
                    _ => {
                        let i = policy.choice(s).expect("validated policy");
                        match rg.states[s].actions[i].target {
                            ArcTarget::State(t) => state_mass[t] += m,
                            ArcTarget::Nature(n) => nature_mass[n] += m,
                        }
                    }
                }
            }
            Node::Nature(n) => {
                let m = nature_mass[n];
                for b in &rg.natures[n].branches {
                    state_mass[b.target] += m * b.probability;
                }
            }
        }
    }
    Ok(reached)
}

/// Copy of the graph restricted to the arcs `policy` chooses and the nodes
/// they reach. Ids are renumbered densely, keeping the original order.
pub fn policy_subgraph<'g>(rg: &RepresentingGraph<'g>, policy: &Policy) -> Result<RepresentingGraph<'g>> {
    policy.validate(rg)?;
    let order = policy_topological_order(rg, policy);
    let mut kept_states: Vec<usize> = Vec::new();
    let mut kept_natures: Vec<usize> = Vec::new();
    for node in &order {
        match *node {
            Node::State(s) => kept_states.push(s),
            Node::Nature(n) => kept_natures.push(n),
        }
    }
    kept_states.sort_unstable();
    kept_natures.sort_unstable();
    let state_map: HashMap<usize, usize> = kept_states.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let nature_map: HashMap<usize, usize> = kept_natures.iter().enumerate().map(|(new, &old)| (old, new)).collect();

    let states = kept_states
        .iter()
        .map(|&old| {
            let s = &rg.states[old];
            let actions = match policy.choice(old) {
                Some(i) => {
                    let mut arc = s.actions[i].clone();
                    arc.target = match arc.target {
                        ArcTarget::State(t) => ArcTarget::State(state_map[&t]),
                        ArcTarget::Nature(n) => ArcTarget::Nature(nature_map[&n]),
                    };
                    vec![arc]
                }
                None => Vec::new(),
            };
            StateNode { id: state_map[&old], config: s.config.clone(), class: s.class, actions }
        })
        .collect();
    let natures = kept_natures
        .iter()
        .map(|&old| {
            let n = &rg.natures[old];
            let mut branches = n.branches.clone();
            branches.iter_mut().for_each(|b| b.target = state_map[&b.target]);
            NatureNode {
                id: nature_map[&old],
                source: n.source.map(|(s, _)| (state_map[&s], 0)),
                config: n.config.clone(),
                branches,
            }
        })
        .collect();
    let root = match rg.root {
        Root::State(s) => Root::State(state_map[&s]),
        Root::Nature(n) => Root::Nature(nature_map[&n]),
    };
    Ok(RepresentingGraph { graph: rg.graph, states, natures, root })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PolicyAction {
    Move { to: String, waypoints: Vec<String>, cost: f64 },
    Finish { cost: f64 },
    Halt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub class: String,
    pub action: PolicyAction,
}

/// Serialized plan: one entry per state node, keyed by canonical key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub instance_digest: String,
    pub root_value: f64,
    pub states: BTreeMap<String, PolicyEntry>,
}

impl PolicyDocument {
    pub fn new(rg: &RepresentingGraph<'_>, policy: &Policy, root_value: f64) -> Result<Self> {
        policy.validate(rg)?;
        let g = rg.graph;
        let states = rg
            .states
            .iter()
            .map(|s| {
                let action = match s.class {
                    ConfigClass::GoodTerminal { remaining } => PolicyAction::Finish { cost: remaining },
                    ConfigClass::BadTerminal => PolicyAction::Halt,
                    _ => {
                        let arc = &s.actions[policy.choice(s.id).expect("validated policy")];
                        PolicyAction::Move {
                            to: g.vertex_name(arc.action.to()).to_string(),
                            waypoints: arc.action.waypoint_ids(),
                            cost: arc.move_cost,
                        }
                    }
                };
                (canonical_key(&s.config), PolicyEntry { class: s.class.name().to_string(), action })
            })
            .collect();
        Ok(PolicyDocument { instance_digest: g.digest(), root_value, states })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("policy document: {e}")))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("policy serializes");
        s.push('\n');
        s
    }

    /// Maps the document back onto arc indices of `rg`.
    pub fn to_policy(&self, rg: &RepresentingGraph<'_>) -> Result<Policy> {
        let g = rg.graph;
        if self.instance_digest != g.digest() {
            return Err(Error::Mismatch(format!(
                "policy digest {} does not match instance digest {}",
                self.instance_digest,
                g.digest()
            )));
        }
        let mut choice = Vec::with_capacity(rg.states.len());
        for s in &rg.states {
            let key = canonical_key(&s.config);
            let entry = self.states.get(&key).ok_or_else(|| Error::IncompletePolicy(format!("no entry for {key}")))?;
            if entry.class != s.class.name() {
                return Err(Error::Mismatch(format!("{key} is {} but document says {}", s.class.name(), entry.class)));
            }
            let c = match (&entry.action, s.class) {
                (PolicyAction::Move { to, waypoints, .. }, ConfigClass::Active) => {
                    let i = s
                        .actions
                        .iter()
                        .position(|a| g.vertex_name(a.action.to()) == to && a.action.waypoint_ids() == *waypoints)
                        .ok_or_else(|| Error::Mismatch(format!("move to {to} at {key} is not an available action")))?;
                    Some(i)
                }
                (PolicyAction::Finish { .. }, ConfigClass::GoodTerminal { .. }) => None,
                (PolicyAction::Halt, ConfigClass::BadTerminal) => None,
                (action, class) => {
                    return Err(Error::Mismatch(format!("action {action:?} invalid for {class} at {key}")))
                }
            };
            choice.push(c);
        }
        Ok(Policy { choice })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_representing_graph, to_dot, Limits};
    use crate::testing::*;

    fn built(g: &crate::model::UGraph) -> RepresentingGraph<'_> {
        build_representing_graph(g, &Limits::default()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
    }

    fn root_target<'a>(rg: &'a RepresentingGraph<'_>, sol: &Solution) -> &'a str {
        let Root::State(r) = rg.root else { panic!("state root expected") };
        let arc = &rg.states[r].actions[sol.policy.choice(r).unwrap()];
        rg.graph.vertex_name(arc.action.to())
    }

    #[test]
    fn detour_optimal_goes_via_c() {
        let g = detour(0.8);
        let rg = built(&g);
        let sol = solve(&rg);
        // 0.8 * (2 + 4) + 0.2 * (2 + 12)
        assert!(close(sol.values.root_value, 7.6), "{}", sol.values.root_value);
        assert_eq!(root_target(&rg, &sol), "C");
        let on = rg.state_by_key("C|CD=on").unwrap();
        let off = rg.state_by_key("C|CD=off").unwrap();
        assert_eq!(sol.values.value[on], 4.0);
        assert_eq!(sol.values.value[off], 12.0);
    }

    #[test]
    fn detour_low_probability_goes_direct() {
        let g = detour(0.1);
        let rg = built(&g);
        let sol = solve(&rg);
        assert!(close(sol.values.root_value, 10.0));
        assert_eq!(root_target(&rg, &sol), "B");
        let via_c = Policy::cheapest_first(&rg);
        assert!(close(evaluate_policy(&rg, &via_c).unwrap().root_value, 13.2));
    }

    #[test]
    fn bridge_and_single_vertex() {
        let g = bridge();
        let rg = built(&g);
        let sol = solve(&rg);
        assert!(close(sol.values.root_value, 4.0));
        assert!(close(reach_probability(&rg, &sol.policy).unwrap(), 0.8));

        let g = single_vertex();
        let rg = built(&g);
        assert_eq!(solve(&rg).values.root_value, 0.0);
    }

    #[test]
    fn policy_evaluation_examples() {
        let g = detour(0.8);
        let rg = built(&g);
        let opt = solve(&rg);
        let via_c = Policy::from_choices(vec![Some(0), None, None, None]);
        let direct = Policy::from_choices(vec![Some(1), None, None, None]);
        assert!(close(evaluate_policy(&rg, &direct).unwrap().root_value, 10.0));
        assert!(close(evaluate_policy(&rg, &via_c).unwrap().root_value, 7.6));
        for p in [&via_c, &direct] {
            assert!(evaluate_policy(&rg, p).unwrap().root_value >= opt.values.root_value - 1e-12);
            assert_eq!(reach_probability(&rg, p).unwrap(), 1.0);
        }
    }

    #[test]
    fn incomplete_policies_are_rejected() {
        let g = detour(0.8);
        let rg = built(&g);
        let missing = Policy::from_choices(vec![None, None, None, None]);
        assert!(matches!(evaluate_policy(&rg, &missing), Err(Error::IncompletePolicy(_))));
        assert!(matches!(reach_probability(&rg, &missing), Err(Error::IncompletePolicy(_))));
        assert!(matches!(policy_subgraph(&rg, &missing), Err(Error::IncompletePolicy(_))));
        let short = Policy::from_choices(vec![Some(0)]);
        assert!(matches!(evaluate_policy(&rg, &short), Err(Error::IncompletePolicy(_))));
        let out_of_range = Policy::from_choices(vec![Some(5), None, None, None]);
        assert!(matches!(evaluate_policy(&rg, &out_of_range), Err(Error::Mismatch(_))));
    }

    #[test]
    fn two_switch_series_reach() {
        let g = two_switch_series();
        let rg = built(&g);
        let sol = solve(&rg);
        assert!(close(reach_probability(&rg, &sol.policy).unwrap(), 0.4));
        // a on (0.8): walk a (1), then b on (0.5) finishes with 1 more
        assert!(close(sol.values.root_value, 0.8 * (1.0 + 0.5 * 1.0)));
    }

    #[test]
    fn subgraphs() {
        let g = detour(0.8);
        let rg = built(&g);
        let sol = solve(&rg);
        let sub = policy_subgraph(&rg, &sol.policy).unwrap();
        let keys: Vec<String> = sub.states.iter().map(|s| canonical_key(&s.config)).collect();
        assert_eq!(keys, ["A|CD=?", "C|CD=on", "C|CD=off"]);
        assert_eq!(sub.natures.len(), 1);
        assert_eq!(sub.states[0].actions.len(), 1);
        assert!(matches!(sub.states[0].actions[0].target, ArcTarget::Nature(0)));
        let dot = to_dot(&rg, Some(&sol.policy)).unwrap();
        assert_eq!(dot.matches("s0 -> ").count(), 1);
        assert!(dot.contains("s0 -> n0"));

        let direct = Policy::from_choices(vec![Some(1), None, None, None]);
        let sub = policy_subgraph(&rg, &direct).unwrap();
        let keys: Vec<String> = sub.states.iter().map(|s| canonical_key(&s.config)).collect();
        assert_eq!(keys, ["A|CD=?", "B|CD=?"]);
        assert!(sub.natures.is_empty());

        let g = bridge();
        let rg = built(&g);
        let sol = solve(&rg);
        let sub = policy_subgraph(&rg, &sol.policy).unwrap();
        assert_eq!(to_dot(&sub, None).unwrap(), to_dot(&rg, None).unwrap());
    }

    #[test]
    fn solver_is_linear() {
        let g = detour(0.8);
        let rg = built(&g);
        let sol = solve(&rg);
        assert!(sol.visits <= 2 * (rg.node_count() + rg.arc_count()));
        assert_eq!(sol.visits, rg.node_count() + rg.arc_count());
    }

    #[test]
    fn document_round_trip() {
        let g = detour(0.8);
        let rg = built(&g);
        let sol = solve(&rg);
        let doc = PolicyDocument::new(&rg, &sol.policy, sol.values.root_value).unwrap();
        let entry = &doc.states["A|CD=?"];
        assert_eq!(entry.class, "Active");
        assert_eq!(entry.action, PolicyAction::Move { to: "C".into(), waypoints: vec!["AC".into()], cost: 2.0 });
        assert_eq!(doc.states["C|CD=off"].action, PolicyAction::Finish { cost: 12.0 });
        let parsed = PolicyDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(parsed, doc);
        assert_eq!(parsed.to_policy(&rg).unwrap(), sol.policy);

        let other = detour(0.5);
        let other_rg = built(&other);
        assert!(matches!(parsed.to_policy(&other_rg), Err(Error::Mismatch(_))));

        let g = bridge();
        let rg = built(&g);
        let sol = solve(&rg);
        let doc = PolicyDocument::new(&rg, &sol.policy, sol.values.root_value).unwrap();
        assert_eq!(doc.states["A|s1=off"].action, PolicyAction::Halt);
        assert!(doc.to_json().contains("\"type\": \"halt\""));
    }
}
