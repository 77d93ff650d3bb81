//! Seeded execution of plans and baseline strategies in sampled worlds.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{canonical_key, ArcTarget, RepresentingGraph, Root};
use crate::model::{shortest_path, ConfigClass, Configuration, ConnRef, KnowledgeView, UGraph, VertexId, ViewMode};
use crate::oracle::{enumerate_worlds, reveal, Outcome, World, MAX_WORLD_SWITCHES};
use crate::planner::{PolicyAction, PolicyDocument};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialStats {
    pub runs: u64,
    pub mean_cost: f64,
    pub stderr: f64,
    pub reach_fraction: f64,
    pub min_cost: f64,
    pub max_cost: f64,
    /// A single run carries no spread information.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// Walk these certain connections from the current vertex.
    Move(Vec<ConnRef>),
    /// Good terminal: proceed along a pessimistic shortest path.
    Finish,
    /// Bad terminal.
    Halt,
}

/// Per-run memory of a strategy: the path it is currently following.
#[derive(Debug, Clone, Default)]
pub struct Itinerary {
    conns: Vec<ConnRef>,
    vertices: Vec<VertexId>,
    optimistic: bool,
    known_at_plan: usize,
}

impl Itinerary {
    fn remaining(&self, c: &Configuration<'_>) -> Option<(&[ConnRef], &[VertexId])> {
        let pos = self.vertices.iter().position(|&v| v == c.current)?;
        let conns = &self.conns[pos..];
        let usable = conns.iter().all(|&x| c.knowledge.traversable(x, ViewMode::Optimistic));
        (usable && !conns.is_empty()).then(|| (conns, &self.vertices[pos..]))
    }
}

/// Move-granular decision maker. Implementations must finish at good
/// terminals and halt at bad ones.
pub trait Strategy: Sync {
    fn name(&self) -> &str;

    fn decide(&self, c: &Configuration<'_>, class: ConfigClass, itinerary: &mut Itinerary) -> Result<Decision>;
}

/// Follows a serialized optimal plan.
#[derive(Debug, Clone)]
pub struct OptimalPolicy {
    pub document: PolicyDocument,
}

impl Strategy for OptimalPolicy {
    fn name(&self) -> &str {
        "optimal"
    }

    fn decide(&self, c: &Configuration<'_>, class: ConfigClass, _: &mut Itinerary) -> Result<Decision> {
        let key = canonical_key(c);
        let entry = self
            .document
            .states
            .get(&key)
            .ok_or_else(|| Error::IncompletePolicy(format!("no entry for visited state {key}")))?;
        match (&entry.action, class) {
            (PolicyAction::Finish { .. }, ConfigClass::GoodTerminal { .. }) => Ok(Decision::Finish),
            (PolicyAction::Halt, ConfigClass::BadTerminal) => Ok(Decision::Halt),
            (PolicyAction::Move { waypoints, .. }, ConfigClass::Active) => waypoints
                .iter()
                .map(|id| c.graph.conn_by_id(id).ok_or_else(|| Error::Mismatch(format!("unknown waypoint {id}"))))
                .collect::<Result<Vec<_>>>()
                .map(Decision::Move),
            (action, class) => Err(Error::Mismatch(format!("action {action:?} at {key} which is {class}"))),
        }
    }
}

/// Path-following baseline. With `pessimistic_first`, a certain route to the
/// goal is preferred whenever one exists; otherwise (and always for the
/// plain replanner) the optimistic shortest path is followed, re-planned
/// when a revelation removes part of it.
#[derive(Debug, Clone, Copy)]
pub struct Replanner {
    pub pessimistic_first: bool,
}

impl Replanner {
    pub const OPTIMISTIC: Replanner = Replanner { pessimistic_first: false };
    pub const PESSIMISTIC_DIRECT: Replanner = Replanner { pessimistic_first: true };
}

impl Strategy for Replanner {
    fn name(&self) -> &str {
        if self.pessimistic_first {
            "pessimistic"
        } else {
            "optimistic"
        }
    }

    fn decide(&self, c: &Configuration<'_>, class: ConfigClass, it: &mut Itinerary) -> Result<Decision> {
        match class {
            ConfigClass::GoodTerminal { .. } => return Ok(Decision::Finish),
            ConfigClass::BadTerminal => return Ok(Decision::Halt),
            ConfigClass::Uncontrolled => return Err(Error::Fault("strategy consulted before revelation".into())),
            ConfigClass::Active => {}
        }
        let known = c.knowledge.known_count();
        let stale = it.remaining(c).is_none() || (self.pessimistic_first && it.optimistic && known != it.known_at_plan);
        if stale {
            let pessimistic = if self.pessimistic_first {
                shortest_path(c.graph, &c.knowledge, ViewMode::Pessimistic, c.current, c.goal)
            } else {
                None
            };
            let (path, optimistic) = match pessimistic {
                Some(p) => (p, false),
                None => (
                    shortest_path(c.graph, &c.knowledge, ViewMode::Optimistic, c.current, c.goal)
                        .ok_or_else(|| Error::Fault("active configuration without optimistic path".into()))?,
                    true,
                ),
            };
            *it = Itinerary { conns: path.0, vertices: path.1, optimistic, known_at_plan: known };
        }
        let (conns, _) = it.remaining(c).ok_or_else(|| Error::Fault("fresh plan is unusable".into()))?;
        let certain: Vec<ConnRef> =
            conns.iter().copied().take_while(|&x| c.knowledge.traversable(x, ViewMode::Pessimistic)).collect();
        if certain.is_empty() {
            return Err(Error::Fault(format!("plan at {} starts with an unknown switch", canonical_key(c))));
        }
        Ok(Decision::Move(certain))
    }
}

/// Each switch On with its presence probability, independently.
pub fn sample_world(g: &UGraph, rng: &mut SplitMix64) -> World {
    let mut probability = 1.0;
    let status = g
        .switches()
        .iter()
        .map(|s| {
            let on = rng.next_f64() < s.prob;
            probability *= if on { s.prob } else { 1.0 - s.prob };
            on
        })
        .collect();
    World { status, probability }
}

/// Executes a strategy in a fixed world under the joint-revelation
/// observation model. Walks stop early at any non-active vertex.
pub fn run_strategy(g: &UGraph, s: &dyn Strategy, world: &World) -> Result<(f64, Outcome)> {
    if world.status.len() != g.switches().len() {
        return Err(Error::Mismatch("world does not match instance".into()));
    }
    let guard = g.vertex_count().saturating_mul(3usize.saturating_pow(g.switches().len() as u32));
    let mut config = g.initial_configuration();
    let mut itinerary = Itinerary::default();
    let mut view = KnowledgeView::new(g, config.knowledge.clone());
    let mut cost = 0.0;
    let mut moves = 0usize;
    loop {
        let mut class = view.classify(config.current);
        if class == ConfigClass::Uncontrolled {
            reveal(g, &mut config.knowledge, config.current, world);
            view = KnowledgeView::new(g, config.knowledge.clone());
            class = view.classify(config.current);
        }
        match (s.decide(&config, class, &mut itinerary)?, class) {
            (Decision::Finish, ConfigClass::GoodTerminal { remaining }) => {
                return Ok((cost + remaining, Outcome::ReachedGoal))
            }
            (Decision::Halt, ConfigClass::BadTerminal) => return Ok((cost, Outcome::ProvedUnreachable)),
            (Decision::Move(conns), ConfigClass::Active) if !conns.is_empty() => {
                for conn in conns {
                    if !config.knowledge.traversable(conn, ViewMode::Pessimistic) {
                        return Err(Error::Fault(format!("{} walks an uncertain connection", s.name())));
                    }
                    let [a, b] = g.conn_ends(conn);
                    config.current = match config.current {
                        v if v == a => b,
                        v if v == b => a,
                        _ => return Err(Error::Fault(format!("{} walks a disconnected route", s.name()))),
                    };
                    cost += g.conn_weight(conn);
                    moves += 1;
                    if moves > guard {
                        return Err(Error::Fault(format!("{} did not terminate within {guard} moves", s.name())));
                    }
                    if view.classify(config.current) != ConfigClass::Active {
                        break;
                    }
                }
            }
            (d, class) => {
                return Err(Error::Fault(format!("{} chose {d:?} at {class}", s.name())));
            }
        }
    }
}

fn aggregate(results: &[(f64, Outcome)]) -> TrialStats {
    let n = results.len() as f64;
    let mean = results.iter().map(|r| r.0).sum::<f64>() / n;
    let reach = results.iter().filter(|r| r.1 == Outcome::ReachedGoal).count() as f64 / n;
    let (min, max) = results.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.0), hi.max(r.0)));
    let degenerate = results.len() < 2;
    let stderr = if degenerate {
        0.0
    } else {
        let var = results.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    TrialStats {
        runs: results.len() as u64,
        mean_cost: mean,
        stderr,
        reach_fraction: reach,
        min_cost: min,
        max_cost: max,
        degenerate,
    }
}

fn one_run(g: &UGraph, s: &dyn Strategy, seed: u64, i: u64) -> Result<(f64, Outcome)> {
    let mut rng = SplitMix64::substream(seed, i);
    let world = sample_world(g, &mut rng);
    run_strategy(g, s, &world)
}

/// Parallel Monte-Carlo estimate; run `i` uses substream `(seed, i)` and the
/// reduction is serial, so results do not depend on scheduling.
pub fn monte_carlo(g: &UGraph, s: &dyn Strategy, runs: u64, seed: u64) -> Result<TrialStats> {
    if runs == 0 {
        return Err(Error::Precondition("runs must be at least 1".into()));
    }
    let results = (0..runs).into_par_iter().map(|i| one_run(g, s, seed, i)).collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&results))
}

pub fn monte_carlo_serial(g: &UGraph, s: &dyn Strategy, runs: u64, seed: u64) -> Result<TrialStats> {
    if runs == 0 {
        return Err(Error::Precondition("runs must be at least 1".into()));
    }
    let results = (0..runs).map(|i| one_run(g, s, seed, i)).collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&results))
}

/// Exact expected cost and reach probability by running in every world.
pub fn evaluate_strategy_exact(g: &UGraph, s: &dyn Strategy) -> Result<(f64, f64)> {
    if g.switches().len() > MAX_WORLD_SWITCHES {
        return Err(Error::Limit { what: "switches", actual: g.switches().len(), cap: MAX_WORLD_SWITCHES });
    }
    let mut expected = 0.0;
    let mut reach = 0.0;
    for w in enumerate_worlds(g)?.into_iter().filter(|w| w.probability > 0.0) {
        let (cost, outcome) = run_strategy(g, s, &w)?;
        expected += w.probability * cost;
        if outcome == Outcome::ReachedGoal {
            reach += w.probability;
        }
    }
    Ok((expected, reach))
}

/// Expected cost and reach probability of a strategy by backward recursion
/// over the representing graph. Each decision is replayed from the state it
/// is taken in and must land on one of that state's generic transitions at
/// its cost; the strategy's itinerary is threaded along every branch, so
/// history-dependent strategies are handled exactly.
pub fn evaluate_strategy_on_graph(rg: &RepresentingGraph<'_>, s: &dyn Strategy) -> Result<(f64, f64)> {
    match rg.root {
        Root::State(id) => strategy_state_value(rg, s, id, &Itinerary::default()),
        Root::Nature(id) => strategy_nature_value(rg, s, id, &Itinerary::default()),
    }
}

fn strategy_nature_value(
    rg: &RepresentingGraph<'_>,
    s: &dyn Strategy,
    id: usize,
    it: &Itinerary,
) -> Result<(f64, f64)> {
    let mut value = 0.0;
    let mut reach = 0.0;
    for b in &rg.natures[id].branches {
        let (v, r) = strategy_state_value(rg, s, b.target, it)?;
        value += b.probability * v;
        reach += b.probability * r;
    }
    Ok((value, reach))
}

fn strategy_state_value(rg: &RepresentingGraph<'_>, s: &dyn Strategy, id: usize, it: &Itinerary) -> Result<(f64, f64)> {
    let g = rg.graph;
    let state = &rg.states[id];
    let mut it = it.clone();
    let mut config = state.config.clone();
    let decision = s.decide(&config, state.class, &mut it)?;
    match (decision, state.class) {
        (Decision::Finish, ConfigClass::GoodTerminal { remaining }) => Ok((remaining, 1.0)),
        (Decision::Halt, ConfigClass::BadTerminal) => Ok((0.0, 0.0)),
        (Decision::Move(first), ConfigClass::Active) => {
            let view = KnowledgeView::new(g, config.knowledge.clone());
            let guard = g.vertex_count().saturating_mul(3usize.saturating_pow(g.switches().len() as u32));
            let mut walked = 0.0;
            let mut moves = 0usize;
            let mut conns = first;
            loop {
                if conns.is_empty() {
                    return Err(Error::Fault(format!("{} chose an empty move", s.name())));
                }
                for conn in conns {
                    if !config.knowledge.traversable(conn, ViewMode::Pessimistic) {
                        return Err(Error::Fault(format!("{} walks an uncertain connection", s.name())));
                    }
                    let [a, b] = g.conn_ends(conn);
                    config.current = match config.current {
                        v if v == a => b,
                        v if v == b => a,
                        _ => return Err(Error::Fault(format!("{} walks a disconnected route", s.name()))),
                    };
                    walked += g.conn_weight(conn);
                    moves += 1;
                    if moves > guard {
                        return Err(Error::Fault(format!("{} did not terminate within {guard} moves", s.name())));
                    }
                    if view.classify(config.current) != ConfigClass::Active {
                        break;
                    }
                }
                if view.classify(config.current) != ConfigClass::Active {
                    break;
                }
                conns = match s.decide(&config, ConfigClass::Active, &mut it)? {
                    Decision::Move(c) => c,
                    d => return Err(Error::Fault(format!("{} chose {d:?} at an active vertex", s.name()))),
                };
            }
            let arc = state.actions.iter().find(|arc| arc.action.to() == config.current).ok_or_else(|| {
                Error::Mismatch(format!("{} leaves {} outside its transitions", s.name(), canonical_key(&state.config)))
            })?;
            if (walked - arc.move_cost).abs() > 1e-9 * arc.move_cost.max(1.0) {
                return Err(Error::Mismatch(format!(
                    "{} walks {walked} where the transition costs {}",
                    s.name(),
                    arc.move_cost
                )));
            }
            let (v, r) = match arc.target {
                ArcTarget::State(t) => strategy_state_value(rg, s, t, &it)?,
                ArcTarget::Nature(n) => strategy_nature_value(rg, s, n, &it)?,
            };
            Ok((arc.move_cost + v, r))
        }
        (d, class) => Err(Error::Fault(format!("{} chose {d:?} at {class}", s.name()))),
    }
}
