//! Controlled walks between decision points and nature's revelations.

use crate::error::{Error, Result};
use crate::model::{
    current_connections, dijkstra, ConfigClass, Configuration, ConnRef, KnowledgeView, SwitchStatus, VertexId, ViewMode,
};

/// Default cap on the number of switches revealed jointly at one vertex.
pub const DEFAULT_MAX_CURRENT_SWITCHES: usize = 20;

/// Cheapest controlled walk from an active configuration to a generic
/// successor (a terminal or an uncontrolled configuration).
#[derive(Debug, Clone, PartialEq)]
pub struct GenericTransition<'g> {
    pub successor: Configuration<'g>,
    pub waypoints: Vec<ConnRef>,
    /// Visited vertices, source first.
    pub path: Vec<VertexId>,
    pub cost: f64,
    pub successor_class: ConfigClass,
}

impl GenericTransition<'_> {
    pub fn source(&self) -> VertexId {
        self.path[0]
    }

    pub fn to(&self) -> VertexId {
        self.successor.current
    }

    pub fn waypoint_ids(&self) -> Vec<String> {
        let g = self.successor.graph;
        self.waypoints.iter().map(|c| g.conn_id(*c).to_string()).collect()
    }
}

/// One joint revelation of the switches incident to the current vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NatureOutcome<'g> {
    pub on_set: Vec<usize>,
    pub off_set: Vec<usize>,
    pub probability: f64,
    pub result: Configuration<'g>,
}

pub fn generic_successors<'g>(c: &Configuration<'g>) -> Result<Vec<GenericTransition<'g>>> {
    let view = KnowledgeView::new(c.graph, c.knowledge.clone());
    generic_successors_in(&view, c.current)
}

/// Generic successors of the configuration at `from` under `view`'s knowledge.
///
/// Shortest-path expansion over the pessimistic view that passes only through
/// active vertices; terminal and uncontrolled vertices are recorded and not
/// expanded. Sorted by (cost, vertex index).
pub fn generic_successors_in<'g>(view: &KnowledgeView<'g>, from: VertexId) -> Result<Vec<GenericTransition<'g>>> {
    let class = view.classify(from);
    if class != ConfigClass::Active {
        return Err(Error::Precondition(format!(
            "generic successors need an active configuration, {} is {class}",
            view.graph().vertex_name(from)
        )));
    }
    let g = view.graph();
    let k = view.knowledge();
    let classes: Vec<ConfigClass> = (0..g.vertex_count()).map(|v| view.classify(v)).collect();
    let sp = dijkstra(
        g,
        &[(from, 0.0)],
        |conn| k.traversable(conn, ViewMode::Pessimistic),
        |v| classes[v] == ConfigClass::Active,
    );

    let mut out = Vec::new();
    for &v in &sp.settled {
        if v == from {
            continue;
        }
        match classes[v] {
            ConfigClass::GoodTerminal { .. } | ConfigClass::Uncontrolled => {}
            ConfigClass::Active => continue,
            ConfigClass::BadTerminal => {
                return Err(Error::Fault(format!(
                    "bad terminal {} reachable from active vertex {}",
                    g.vertex_name(v),
                    g.vertex_name(from)
                )))
            }
        }
        let (waypoints, path) = sp.path_to(v).expect("settled vertex has a path");
        out.push(GenericTransition {
            successor: view.configuration(v),
            waypoints,
            path,
            cost: sp.dist[v],
            successor_class: classes[v],
        });
    }
    // settle order is already (cost, vertex); keep the sort explicit
    out.sort_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.to().cmp(&b.to())));
    if out.is_empty() {
        return Err(Error::Fault(format!("active vertex {} has no generic successor", g.vertex_name(from))));
    }
    Ok(out)
}

pub fn apply_generic<'g>(c: &Configuration<'g>, t: &GenericTransition<'g>) -> Result<Configuration<'g>> {
    if t.source() != c.current || t.successor.knowledge != c.knowledge || !std::ptr::eq(t.successor.graph, c.graph) {
        return Err(Error::Mismatch(format!(
            "transition from {} does not belong to configuration at {}",
            c.graph.vertex_name(t.source()),
            c.graph.vertex_name(c.current)
        )));
    }
    Ok(t.successor.clone())
}

/// All nonzero-probability joint revelations of the current switches.
///
/// Switches are enumerated in declaration order, On before Off, with the
/// first switch varying slowest.
pub fn nature_outcomes<'g>(c: &Configuration<'g>, max_current_switches: usize) -> Result<Vec<NatureOutcome<'g>>> {
    let (_, cs) = current_connections(c);
    if cs.is_empty() {
        return Err(Error::Precondition(format!("no unknown switch at {}", c.graph.vertex_name(c.current))));
    }
    if cs.len() > max_current_switches {
        return Err(Error::Limit { what: "current switches", actual: cs.len(), cap: max_current_switches });
    }
    let switches = c.graph.switches();
    let k = cs.len();
    let mut out = Vec::new();
    for mask in 0..(1u64 << k) {
        // bit (k-1-j) set means switch j is Off
        let mut probability = 1.0;
        let mut on_set = Vec::new();
        let mut off_set = Vec::new();
        let mut knowledge = c.knowledge.clone();
        for (j, &s) in cs.iter().enumerate() {
            let off = mask >> (k - 1 - j) & 1 == 1;
            if off {
                probability *= 1.0 - switches[s].prob;
                off_set.push(s);
                knowledge.set(s, SwitchStatus::Off);
            } else {
                probability *= switches[s].prob;
                on_set.push(s);
                knowledge.set(s, SwitchStatus::On);
            }
        }
        if probability > 0.0 {
            out.push(NatureOutcome { on_set, off_set, probability, result: Configuration { knowledge, ..c.clone() } });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{classify, KnowledgeState};
    use crate::testing::*;

    #[test]
    fn detour_successors_from_start() {
        let g = detour(0.8);
        let succ = generic_successors(&g.initial_configuration()).unwrap();
        assert_eq!(succ.len(), 2);
        assert_eq!(g.vertex_name(succ[0].to()), "C");
        assert_eq!(succ[0].waypoint_ids(), ["AC"]);
        assert_eq!(succ[0].cost, 2.0);
        assert_eq!(succ[0].successor_class, ConfigClass::Uncontrolled);
        assert_eq!(g.vertex_name(succ[1].to()), "B");
        assert_eq!(succ[1].waypoint_ids(), ["AB"]);
        assert_eq!(succ[1].cost, 10.0);
        assert_eq!(succ[1].successor_class, ConfigClass::GoodTerminal { remaining: 0.0 });
    }

    #[test]
    fn successors_require_active() {
        let g = detour(0.8);
        let c = Configuration::new(&g, KnowledgeState::from_statuses(vec![SwitchStatus::On]), 2);
        assert_eq!(classify(&c), ConfigClass::GoodTerminal { remaining: 4.0 });
        assert!(matches!(generic_successors(&c), Err(Error::Precondition(_))));
    }

    #[test]
    fn chain_has_single_successor() {
        let g = chain();
        let succ = generic_successors(&g.initial_configuration()).unwrap();
        assert_eq!(succ.len(), 1);
        assert_eq!(g.vertex_name(succ[0].to()), "Y");
        assert_eq!(succ[0].cost, 1.0);
        assert_eq!(succ[0].successor_class, ConfigClass::Uncontrolled);
    }

    #[test]
    fn apply_moves_and_checks_ownership() {
        let g = detour(0.8);
        let c = g.initial_configuration();
        for t in generic_successors(&c).unwrap() {
            let next = apply_generic(&c, &t).unwrap();
            assert_eq!(next.current, t.to());
            assert_eq!(next.knowledge, c.knowledge);
        }
        let chain_g = chain();
        let cc = chain_g.initial_configuration();
        let t = &generic_successors(&cc).unwrap()[0];
        assert_eq!(chain_g.vertex_name(apply_generic(&cc, t).unwrap().current), "Y");
        let elsewhere = cc.at(1);
        assert!(matches!(apply_generic(&elsewhere, t), Err(Error::Mismatch(_))));
    }

    #[test]
    fn bridge_outcomes() {
        let g = bridge();
        let outs = nature_outcomes(&g.initial_configuration(), DEFAULT_MAX_CURRENT_SWITCHES).unwrap();
        assert_eq!(outs.len(), 2);
        assert_eq!((outs[0].on_set.clone(), outs[0].probability), (vec![0], 0.8));
        assert_eq!(outs[0].result.knowledge.status(0), SwitchStatus::On);
        assert_eq!(outs[1].off_set, vec![0]);
        assert!((outs[1].probability - 0.2).abs() < 1e-15);
        assert_eq!(outs[1].result.knowledge.status(0), SwitchStatus::Off);
    }

    #[test]
    fn two_switch_product_probabilities() {
        let g = two_switch();
        let outs = nature_outcomes(&g.initial_configuration(), DEFAULT_MAX_CURRENT_SWITCHES).unwrap();
        let probs: Vec<f64> = outs.iter().map(|o| o.probability).collect();
        for (got, want) in probs.iter().zip([0.4, 0.4, 0.1, 0.1]) {
            assert!((got - want).abs() < 1e-15, "{probs:?}");
        }
        assert_eq!(outs[1].on_set, vec![0]);
        assert_eq!(outs[1].off_set, vec![1]);
        assert_eq!(outs[2].on_set, vec![1]);
        assert_eq!(outs[2].off_set, vec![0]);
    }

    #[test]
    fn certain_switch_prunes_off_branch() {
        let g = detour(1.0);
        let c = g.initial_configuration().at(2);
        let outs = nature_outcomes(&c, DEFAULT_MAX_CURRENT_SWITCHES).unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0].probability, 1.0);
        assert_eq!(outs[0].on_set, vec![0]);
    }

    #[test]
    fn outcome_cap_and_precondition() {
        let g = two_switch();
        assert!(matches!(nature_outcomes(&g.initial_configuration(), 1), Err(Error::Limit { cap: 1, actual: 2, .. })));
        let g = detour(0.8);
        assert!(matches!(nature_outcomes(&g.initial_configuration(), 20), Err(Error::Precondition(_))));
    }
}
