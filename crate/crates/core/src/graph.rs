//! Representing graph: the DAG of reachable decision states and nature nodes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::model::{ConfigClass, Configuration, KnowledgeState, KnowledgeView, UGraph, VertexId};
use crate::num::round_sig;
use crate::planner::{policy_subgraph, Policy};
use crate::transitions::{generic_successors_in, nature_outcomes, GenericTransition, DEFAULT_MAX_CURRENT_SWITCHES};

pub const DEFAULT_MAX_SWITCHES: usize = 16;
pub const DEFAULT_MAX_NODES: usize = 5_000_000;

/// Tolerance on per-action branch probability sums.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_switches: usize,
    pub max_nodes: usize,
    pub max_current_switches: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_switches: DEFAULT_MAX_SWITCHES,
            max_nodes: DEFAULT_MAX_NODES,
            max_current_switches: DEFAULT_MAX_CURRENT_SWITCHES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArcTarget {
    State(usize),
    Nature(usize),
}

#[derive(Debug, Clone)]
pub struct ActionArc<'g> {
    pub action: GenericTransition<'g>,
    pub move_cost: f64,
    pub target: ArcTarget,
}

#[derive(Debug, Clone)]
pub struct StateNode<'g> {
    pub id: usize,
    pub config: Configuration<'g>,
    pub class: ConfigClass,
    /// Empty for terminals, which implicitly take the finishing action.
    pub actions: Vec<ActionArc<'g>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub probability: f64,
    pub target: usize,
}

#[derive(Debug, Clone)]
pub struct NatureNode<'g> {
    pub id: usize,
    /// (state id, action arc index) that leads here; `None` for a virtual root.
    pub source: Option<(usize, usize)>,
    /// The uncontrolled configuration whose switches are revealed.
    pub config: Configuration<'g>,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Root {
    State(usize),
    /// The initial configuration is uncontrolled.
    Nature(usize),
}

#[derive(Debug, Clone)]
pub struct RepresentingGraph<'g> {
    pub graph: &'g UGraph,
    pub states: Vec<StateNode<'g>>,
    pub natures: Vec<NatureNode<'g>>,
    pub root: Root,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphStats {
    pub states: usize,
    pub natures: usize,
    pub arcs: usize,
    pub layers: usize,
}

impl GraphStats {
    /// `key=value` lines for the diagnostics stream.
    pub fn diagnostics(&self) -> String {
        format!("states={}\nnatures={}\narcs={}\nlayers={}\n", self.states, self.natures, self.arcs, self.layers)
    }
}

/// `vertex|id=status,...` in switch declaration order.
pub fn canonical_key(c: &Configuration<'_>) -> String {
    let g = c.graph;
    let mut key = String::with_capacity(8 + 6 * g.switches().len());
    key.push_str(g.vertex_name(c.current));
    key.push('|');
    for (i, s) in g.switches().iter().enumerate() {
        if i > 0 {
            key.push(',');
        }
        key.push_str(&s.id);
        key.push('=');
        key.push_str(c.knowledge.status(i).as_str());
    }
    key
}

impl<'g> RepresentingGraph<'g> {
    pub fn stats(&self) -> GraphStats {
        let arcs = self.states.iter().map(|s| s.actions.len()).sum::<usize>()
            + self.natures.iter().map(|n| n.branches.len()).sum::<usize>();
        let mut layers: Vec<usize> = self.states.iter().map(|s| s.config.knowledge.known_count()).collect();
        layers.sort_unstable();
        layers.dedup();
        GraphStats { states: self.states.len(), natures: self.natures.len(), arcs, layers: layers.len() }
    }

    pub fn node_count(&self) -> usize {
        self.states.len() + self.natures.len()
    }

    pub fn arc_count(&self) -> usize {
        self.stats().arcs
    }

    pub fn state_by_key(&self, key: &str) -> Option<usize> {
        self.states.iter().position(|s| canonical_key(&s.config) == key)
    }

    pub fn root_configuration(&self) -> &Configuration<'g> {
        match self.root {
            Root::State(s) => &self.states[s].config,
            Root::Nature(n) => &self.natures[n].config,
        }
    }
}

struct Builder<'g> {
    graph: &'g UGraph,
    limits: Limits,
    views: HashMap<KnowledgeState, Rc<KnowledgeView<'g>>>,
    memo: HashMap<(VertexId, KnowledgeState), usize>,
    states: Vec<StateNode<'g>>,
    natures: Vec<NatureNode<'g>>,
    queue: VecDeque<usize>,
}

impl<'g> Builder<'g> {
    fn view(&mut self, k: &KnowledgeState) -> Rc<KnowledgeView<'g>> {
        if let Some(v) = self.views.get(k) {
            return Rc::clone(v);
        }
        let v = Rc::new(KnowledgeView::new(self.graph, k.clone()));
        self.views.insert(k.clone(), Rc::clone(&v));
        v
    }

    fn check_nodes(&self) -> Result<()> {
        let n = self.states.len() + self.natures.len();
        if n > self.limits.max_nodes {
            return Err(Error::Limit { what: "nodes", actual: n, cap: self.limits.max_nodes });
        }
        Ok(())
    }

    fn state(&mut self, config: Configuration<'g>, class: ConfigClass) -> Result<usize> {
        let key = (config.current, config.knowledge.clone());
        if let Some(&id) = self.memo.get(&key) {
            return Ok(id);
        }
        let id = self.states.len();
        if class == ConfigClass::Active {
            self.queue.push_back(id);
        }
        self.states.push(StateNode { id, config, class, actions: Vec::new() });
        self.memo.insert(key, id);
        self.check_nodes()?;
        Ok(id)
    }

    fn nature(&mut self, source: Option<(usize, usize)>, config: Configuration<'g>) -> Result<usize> {
        let outcomes = nature_outcomes(&config, self.limits.max_current_switches)?;
        let mut branches = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            let class = self.view(&o.result.knowledge).classify(o.result.current);
            if class == ConfigClass::Uncontrolled {
                return Err(Error::Fault(format!("revelation left {} uncontrolled", canonical_key(&o.result))));
            }
            let target = self.state(o.result, class)?;
            branches.push(Branch { probability: o.probability, target });
        }
        let id = self.natures.len();
        self.natures.push(NatureNode { id, source, config, branches });
        self.check_nodes()?;
        Ok(id)
    }

    fn expand(&mut self, id: usize) -> Result<()> {
        let config = self.states[id].config.clone();
        let view = self.view(&config.knowledge);
        let successors = generic_successors_in(&view, config.current)?;
        let mut actions = Vec::with_capacity(successors.len());
        for (arc, t) in successors.into_iter().enumerate() {
            let target = match t.successor_class {
                ConfigClass::Uncontrolled => ArcTarget::Nature(self.nature(Some((id, arc)), t.successor.clone())?),
                class => ArcTarget::State(self.state(t.successor.clone(), class)?),
            };
            actions.push(ActionArc { move_cost: t.cost, action: t, target });
        }
        self.states[id].actions = actions;
        Ok(())
    }
}

/// Expands every configuration reachable from the initial one.
pub fn build_representing_graph<'g>(g: &'g UGraph, limits: &Limits) -> Result<RepresentingGraph<'g>> {
    if g.switches().len() > limits.max_switches {
        return Err(Error::Limit { what: "switches", actual: g.switches().len(), cap: limits.max_switches });
    }
    let mut b = Builder {
        graph: g,
        limits: *limits,
        views: HashMap::new(),
        memo: HashMap::new(),
        states: Vec::new(),
        natures: Vec::new(),
        queue: VecDeque::new(),
    };
    let initial = g.initial_configuration();
    let class = b.view(&initial.knowledge).classify(initial.current);
    let root = match class {
        ConfigClass::Uncontrolled => Root::Nature(b.nature(None, initial)?),
        class => Root::State(b.state(initial, class)?),
    };
    while let Some(id) = b.queue.pop_front() {
        b.expand(id)?;
    }
    Ok(RepresentingGraph { graph: g, states: b.states, natures: b.natures, root })
}

/// Outcome of the structural checks on a representing graph.
#[derive(Debug, Clone, Default)]
pub struct MarkovReport {
    pub failures: Vec<String>,
    /// Number of state nodes per count of known switches.
    pub layers: BTreeMap<usize, usize>,
    pub max_normalization_error: f64,
}

impl MarkovReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Verifies normalization, knowledge monotonicity, acyclicity, terminal
/// action uniqueness and non-negative costs.
pub fn check_markov(rg: &RepresentingGraph<'_>) -> MarkovReport {
    let mut report = MarkovReport::default();
    for s in &rg.states {
        *report.layers.entry(s.config.knowledge.known_count()).or_default() += 1;
    }
    let fail = |report: &mut MarkovReport, msg: String| report.failures.push(msg);

    for s in &rg.states {
        let key = canonical_key(&s.config);
        match s.class {
            ConfigClass::Uncontrolled => fail(&mut report, format!("state class: {key} is uncontrolled")),
            ConfigClass::Active if s.actions.is_empty() => {
                fail(&mut report, format!("active state {key} has no action"))
            }
            ConfigClass::GoodTerminal { .. } | ConfigClass::BadTerminal if !s.actions.is_empty() => {
                fail(&mut report, format!("terminal action: {key} has {} moves besides finishing", s.actions.len()))
            }
            _ => {}
        }
        if let ConfigClass::GoodTerminal { remaining } = s.class {
            if !(remaining >= 0.0 && remaining.is_finite()) {
                fail(&mut report, format!("cost: terminal {key} has remaining cost {remaining}"));
            }
        }
        for (i, a) in s.actions.iter().enumerate() {
            if a.move_cost.partial_cmp(&0.0) != Some(Ordering::Greater) || a.move_cost != a.action.cost {
                fail(&mut report, format!("cost: arc {i} of {key} has move cost {}", a.move_cost));
            }
            match a.target {
                ArcTarget::State(t) => {
                    let target = &rg.states[t];
                    if !target.class.is_terminal() || target.config.knowledge != s.config.knowledge {
                        fail(
                            &mut report,
                            format!("arc {i} of {key} jumps to non-terminal {}", canonical_key(&target.config)),
                        );
                    }
                }
                ArcTarget::Nature(n) => {
                    if rg.natures[n].source != Some((s.id, i)) {
                        fail(&mut report, format!("arc {i} of {key} points at foreign nature node {n}"));
                    }
                }
            }
        }
    }

    for n in &rg.natures {
        let key = canonical_key(&n.config);
        let sum: f64 = n.branches.iter().map(|b| b.probability).sum();
        let err = (sum - 1.0).abs();
        report.max_normalization_error = report.max_normalization_error.max(err);
        if n.branches.is_empty() || err > NORMALIZATION_TOLERANCE {
            fail(&mut report, format!("normalization: branches of {key} sum to {sum}"));
        }
        for b in &n.branches {
            if !(b.probability > 0.0 && b.probability <= 1.0) {
                fail(&mut report, format!("normalization: branch probability {} at {key}", b.probability));
            }
            let target = &rg.states[b.target].config;
            if !n.config.knowledge.strictly_refined_by(&target.knowledge) || target.current != n.config.current {
                fail(&mut report, format!("monotonicity: {key} -> {}", canonical_key(target)));
            }
        }
    }

    if let Some(cycle_node) = find_cycle(rg) {
        fail(&mut report, format!("cycle through {cycle_node}"));
    }
    report
}

/// Kahn's algorithm over states and natures; returns a node left over.
fn find_cycle(rg: &RepresentingGraph<'_>) -> Option<String> {
    let ns = rg.states.len();
    let total = ns + rg.natures.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); total];
    for s in &rg.states {
        for a in &s.actions {
            succ[s.id].push(match a.target {
                ArcTarget::State(t) => t,
                ArcTarget::Nature(n) => ns + n,
            });
        }
    }
    for n in &rg.natures {
        succ[ns + n.id].extend(n.branches.iter().map(|b| b.target));
    }
    let mut indeg = vec![0usize; total];
    for list in &succ {
        for &t in list {
            indeg[t] += 1;
        }
    }
    let mut queue: Vec<usize> = (0..total).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = queue.pop() {
        seen += 1;
        for &t in &succ[i] {
            indeg[t] -= 1;
            if indeg[t] == 0 {
                queue.push(t);
            }
        }
    }
    if seen == total {
        return None;
    }
    let stuck = (0..total).find(|&i| indeg[i] > 0)?;
    Some(if stuck < ns { canonical_key(&rg.states[stuck].config) } else { format!("nature {}", stuck - ns) })
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders the graph as DOT. With a policy, only chosen arcs and the nodes
/// they reach are kept.
pub fn to_dot(rg: &RepresentingGraph<'_>, policy: Option<&Policy>) -> Result<String> {
    match policy {
        Some(p) => Ok(render_dot(&policy_subgraph(rg, p)?)),
        None => Ok(render_dot(rg)),
    }
}

fn render_dot(rg: &RepresentingGraph<'_>) -> String {
    let g = rg.graph;
    let mut out = String::from("digraph representing_graph {\n  rankdir=TB;\n");
    for s in &rg.states {
        let class = match s.class {
            ConfigClass::GoodTerminal { remaining } => format!("GoodTerminal({})", round_sig(remaining, 12)),
            c => c.name().to_string(),
        };
        let style = if rg.root == Root::State(s.id) { ", style=bold" } else { "" };
        let _ = writeln!(
            out,
            "  s{} [shape=box{style}, label=\"{}\\n{}\"];",
            s.id,
            escape(&canonical_key(&s.config)),
            class
        );
    }
    for n in &rg.natures {
        let style = if rg.root == Root::Nature(n.id) { ", style=bold" } else { "" };
        let _ = writeln!(out, "  n{} [shape=diamond{style}, label=\"{}\"];", n.id, escape(&canonical_key(&n.config)));
    }
    for s in &rg.states {
        for a in &s.actions {
            let target = match a.target {
                ArcTarget::State(t) => format!("s{t}"),
                ArcTarget::Nature(n) => format!("n{n}"),
            };
            let _ = writeln!(
                out,
                "  s{} -> {target} [label=\"to {} ({})\"];",
                s.id,
                escape(g.vertex_name(a.action.to())),
                round_sig(a.move_cost, 12)
            );
        }
    }
    for n in &rg.natures {
        for b in &n.branches {
            let _ = writeln!(
                out,
                "  n{} -> s{} [style=dashed, label=\"{}\"];",
                n.id,
                b.target,
                round_sig(b.probability, 12)
            );
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SwitchStatus;
    use crate::testing::*;

    fn keys(rg: &RepresentingGraph<'_>) -> Vec<String> {
        rg.states.iter().map(|s| canonical_key(&s.config)).collect()
    }

    #[test]
    fn canonical_keys() {
        let g = detour(0.8);
        assert_eq!(canonical_key(&g.initial_configuration()), "A|CD=?");
        let on = Configuration::new(&g, KnowledgeState::from_statuses(vec![SwitchStatus::On]), 2);
        assert_eq!(canonical_key(&on), "C|CD=on");
        let g = bridge();
        let off = Configuration::new(&g, KnowledgeState::from_statuses(vec![SwitchStatus::Off]), 0);
        assert_eq!(canonical_key(&off), "A|s1=off");
    }

    #[test]
    fn detour_graph_shape() {
        let g = detour(0.8);
        let rg = build_representing_graph(&g, &Limits::default()).unwrap();
        assert_eq!(keys(&rg), ["A|CD=?", "C|CD=on", "C|CD=off", "B|CD=?"]);
        assert_eq!(rg.root, Root::State(0));
        assert_eq!(rg.natures.len(), 1);
        assert_eq!(canonical_key(&rg.natures[0].config), "C|CD=?");
        assert_eq!(rg.states[0].actions.len(), 2);
        assert_eq!(rg.states[1].class, ConfigClass::GoodTerminal { remaining: 4.0 });
        assert_eq!(rg.states[2].class, ConfigClass::GoodTerminal { remaining: 12.0 });
        assert_eq!(rg.states[3].class, ConfigClass::GoodTerminal { remaining: 0.0 });
        let stats = rg.stats();
        assert_eq!((stats.states, stats.natures, stats.arcs, stats.layers), (4, 1, 4, 2));
        assert_eq!(stats.diagnostics(), "states=4\nnatures=1\narcs=4\nlayers=2\n");
    }

    #[test]
    fn bridge_has_virtual_root() {
        let g = bridge();
        let rg = build_representing_graph(&g, &Limits::default()).unwrap();
        assert_eq!(rg.root, Root::Nature(0));
        assert_eq!(keys(&rg), ["A|s1=on", "A|s1=off"]);
        assert_eq!(rg.states[0].class, ConfigClass::GoodTerminal { remaining: 5.0 });
        assert_eq!(rg.states[1].class, ConfigClass::BadTerminal);
        assert_eq!(rg.natures[0].source, None);
    }

    #[test]
    fn single_vertex_graph() {
        let g = single_vertex();
        let rg = build_representing_graph(&g, &Limits::default()).unwrap();
        assert_eq!(rg.states.len(), 1);
        assert!(rg.natures.is_empty());
        assert_eq!(rg.states[0].class, ConfigClass::GoodTerminal { remaining: 0.0 });
        let dot = to_dot(&rg, None).unwrap();
        assert_eq!(dot.matches("shape=box").count(), 1);
        assert!(!dot.contains("->"));
    }

    #[test]
    fn limits_are_enforced() {
        let g = two_switch();
        let tight = Limits { max_switches: 1, ..Limits::default() };
        assert!(matches!(build_representing_graph(&g, &tight), Err(Error::Limit { what: "switches", .. })));
        let tiny = Limits { max_nodes: 2, ..Limits::default() };
        assert!(matches!(build_representing_graph(&g, &tiny), Err(Error::Limit { what: "nodes", .. })));
    }

    #[test]
    fn markov_checks_pass_on_examples() {
        let g = detour(0.8);
        let rg = build_representing_graph(&g, &Limits::default()).unwrap();
        let report = check_markov(&rg);
        assert!(report.passed(), "{:?}", report.failures);
        assert_eq!(report.layers, BTreeMap::from([(0, 2), (1, 2)]));

        let g = bridge();
        let rg = build_representing_graph(&g, &Limits::default()).unwrap();
        let report = check_markov(&rg);
        assert!(report.passed(), "{:?}", report.failures);
        assert!(report.max_normalization_error <= 1e-12);
    }

    #[test]
    fn markov_check_catches_corruption() {
        let g = bridge();
        let mut rg = build_representing_graph(&g, &Limits::default()).unwrap();
        rg.natures[0].branches[1].probability = 0.1;
        let report = check_markov(&rg);
        assert!(!report.passed());
        assert!(report.failures.iter().any(|f| f.starts_with("normalization")), "{:?}", report.failures);

        let g = detour(0.8);
        let mut rg = build_representing_graph(&g, &Limits::default()).unwrap();
        // give a terminal a move back to the root: breaks a_0 uniqueness and acyclicity
        let arc = ActionArc { target: ArcTarget::State(0), ..rg.states[0].actions[1].clone() };
        rg.states[3].actions.push(arc);
        let report = check_markov(&rg);
        assert!(report.failures.iter().any(|f| f.starts_with("terminal action")), "{:?}", report.failures);
        assert!(report.failures.iter().any(|f| f.starts_with("cycle")), "{:?}", report.failures);
    }

    #[test]
    fn dot_render_counts() {
        let g = detour(0.8);
        let rg = build_representing_graph(&g, &Limits::default()).unwrap();
        let dot = to_dot(&rg, None).unwrap();
        assert_eq!(dot.matches("shape=box").count(), 4);
        assert_eq!(dot.matches("shape=diamond").count(), 1);
        assert_eq!(dot.matches("s0 -> ").count(), 2);
        assert!(dot.contains("n0 -> s1 [style=dashed, label=\"0.8\"]"));
        assert!(dot.contains("n0 -> s2 [style=dashed, label=\"0.2\"]"));
    }

    #[test]
    fn expansion_is_deterministic() {
        let g = detour(0.3);
        let a = build_representing_graph(&g, &Limits::default()).unwrap();
        let b = build_representing_graph(&g, &Limits::default()).unwrap();
        assert_eq!(to_dot(&a, None).unwrap(), to_dot(&b, None).unwrap());
    }
}
