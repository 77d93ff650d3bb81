//! Environment model: graphs with certain edges and probabilistic switches,
//! knowledge over switch statuses, configurations and their classification.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = usize;

/// Relative tolerance used when comparing optimistic and pessimistic
/// distances for the good-terminal test.
pub const TERMINAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub ends: [VertexId; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Switch {
    pub id: String,
    pub ends: [VertexId; 2],
    pub weight: f64,
    pub prob: f64,
}

/// Reference to a connection by its position in the declaration lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConnRef {
    Edge(usize),
    Switch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub conn: ConnRef,
    pub other: VertexId,
}

/// Immutable environment: vertices, certain edges, switches, start and goal.
#[derive(Debug, Clone)]
pub struct UGraph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    switches: Vec<Switch>,
    start: VertexId,
    goal: VertexId,
    // sorted by (other vertex, connection id)
    adjacency: Vec<Vec<Incidence>>,
    vertex_index: HashMap<String, VertexId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub id: String,
    pub ends: [String; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchDoc {
    pub id: String,
    pub ends: [String; 2],
    pub weight: f64,
    pub prob: f64,
}

/// Serialized instance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub vertices: Vec<String>,
    #[serde(default)]
    pub edges: Vec<EdgeDoc>,
    #[serde(default)]
    pub switches: Vec<SwitchDoc>,
    pub start: String,
    pub goal: String,
}

/// Parses and validates an instance document.
pub fn load_ugraph(text: &str) -> Result<UGraph> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    UGraph::from_doc(&doc)
}

impl UGraph {
    /// Validates a document, reporting every violated invariant at once.
    pub fn from_doc(doc: &InstanceDoc) -> Result<UGraph> {
        let mut problems = Vec::new();
        let mut vertex_index = HashMap::new();
        for (i, name) in doc.vertices.iter().enumerate() {
            if vertex_index.insert(name.clone(), i).is_some() {
                problems.push(format!("duplicate vertex '{name}'"));
            }
        }
        let resolve = |name: &str, ctx: &str, problems: &mut Vec<String>| -> Option<VertexId> {
            let v = vertex_index.get(name).copied();
            if v.is_none() {
                problems.push(format!("unknown vertex '{name}' in {ctx}"));
            }
            v
        };

        let mut ids = HashSet::new();
        let mut check_conn = |id: &str, ends: &[String; 2], weight: f64, problems: &mut Vec<String>| {
            if !ids.insert(id.to_string()) {
                problems.push(format!("duplicate id '{id}'"));
            }
            if !(weight > 0.0 && weight.is_finite()) {
                problems.push(format!("non-positive weight {weight} on '{id}'"));
            }
            if ends[0] == ends[1] {
                problems.push(format!("self-loop on '{id}'"));
            }
        };

        let mut edges = Vec::with_capacity(doc.edges.len());
        for e in &doc.edges {
            check_conn(&e.id, &e.ends, e.weight, &mut problems);
            let a = resolve(&e.ends[0], &e.id, &mut problems);
            let b = resolve(&e.ends[1], &e.id, &mut problems);
            if let (Some(a), Some(b)) = (a, b) {
                edges.push(Edge { id: e.id.clone(), ends: [a, b], weight: e.weight });
            }
        }
        let mut switches = Vec::with_capacity(doc.switches.len());
        for s in &doc.switches {
            check_conn(&s.id, &s.ends, s.weight, &mut problems);
            if !(0.0..=1.0).contains(&s.prob) {
                problems.push(format!("prob {} outside [0,1] on '{}'", s.prob, s.id));
            }
            let a = resolve(&s.ends[0], &s.id, &mut problems);
            let b = resolve(&s.ends[1], &s.id, &mut problems);
            if let (Some(a), Some(b)) = (a, b) {
                switches.push(Switch { id: s.id.clone(), ends: [a, b], weight: s.weight, prob: s.prob });
            }
        }
        let start = resolve(&doc.start, "start", &mut problems);
        let goal = resolve(&doc.goal, "goal", &mut problems);

        if !problems.is_empty() {
            return Err(Error::Invalid(problems));
        }
        Ok(UGraph::assemble(doc.vertices.clone(), edges, switches, start.unwrap(), goal.unwrap(), vertex_index))
    }

    fn assemble(
        vertices: Vec<String>,
        edges: Vec<Edge>,
        switches: Vec<Switch>,
        start: VertexId,
        goal: VertexId,
        vertex_index: HashMap<String, VertexId>,
    ) -> UGraph {
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.ends[0]].push(Incidence { conn: ConnRef::Edge(i), other: e.ends[1] });
            adjacency[e.ends[1]].push(Incidence { conn: ConnRef::Edge(i), other: e.ends[0] });
        }
        for (i, s) in switches.iter().enumerate() {
            adjacency[s.ends[0]].push(Incidence { conn: ConnRef::Switch(i), other: s.ends[1] });
            adjacency[s.ends[1]].push(Incidence { conn: ConnRef::Switch(i), other: s.ends[0] });
        }
        let conn_id = |c: ConnRef| match c {
            ConnRef::Edge(i) => edges[i].id.as_str(),
            ConnRef::Switch(i) => switches[i].id.as_str(),
        };
        for list in &mut adjacency {
            list.sort_by(|a, b| a.other.cmp(&b.other).then_with(|| conn_id(a.conn).cmp(conn_id(b.conn))));
        }
        UGraph { vertices, edges, switches, start, goal, adjacency, vertex_index }
    }

    pub fn to_doc(&self) -> InstanceDoc {
        let name = |v: VertexId| self.vertices[v].clone();
        InstanceDoc {
            vertices: self.vertices.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc { id: e.id.clone(), ends: [name(e.ends[0]), name(e.ends[1])], weight: e.weight })
                .collect(),
            switches: self
                .switches
                .iter()
                .map(|s| SwitchDoc {
                    id: s.id.clone(),
                    ends: [name(s.ends[0]), name(s.ends[1])],
                    weight: s.weight,
                    prob: s.prob,
                })
                .collect(),
            start: name(self.start),
            goal: name(self.goal),
        }
    }

    /// Compact JSON of the instance in declaration order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("instance serializes")
    }

    /// 64-bit FNV-1a over the canonical serialization, as 16 hex digits.
    pub fn digest(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_json().as_bytes()))
    }

    /// Copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> UGraph {
        let mut g = self.clone();
        g.edges.iter_mut().for_each(|e| e.weight *= factor);
        g.switches.iter_mut().for_each(|s| s.weight *= factor);
        g
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn switches(&self) -> &[Switch] {
        &self.switches
    }

    pub fn start(&self) -> VertexId {
        self.start
    }

    pub fn goal(&self) -> VertexId {
        self.goal
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        &self.vertices[v]
    }

    pub fn vertex_by_name(&self, name: &str) -> Option<VertexId> {
        self.vertex_index.get(name).copied()
    }

    pub fn incident(&self, v: VertexId) -> &[Incidence] {
        &self.adjacency[v]
    }

    pub fn conn_id(&self, c: ConnRef) -> &str {
        match c {
            ConnRef::Edge(i) => &self.edges[i].id,
            ConnRef::Switch(i) => &self.switches[i].id,
        }
    }

    pub fn conn_weight(&self, c: ConnRef) -> f64 {
        match c {
            ConnRef::Edge(i) => self.edges[i].weight,
            ConnRef::Switch(i) => self.switches[i].weight,
        }
    }

    pub fn conn_ends(&self, c: ConnRef) -> [VertexId; 2] {
        match c {
            ConnRef::Edge(i) => self.edges[i].ends,
            ConnRef::Switch(i) => self.switches[i].ends,
        }
    }

    pub fn conn_by_id(&self, id: &str) -> Option<ConnRef> {
        self.edges
            .iter()
            .position(|e| e.id == id)
            .map(ConnRef::Edge)
            .or_else(|| self.switches.iter().position(|s| s.id == id).map(ConnRef::Switch))
    }

    pub fn initial_configuration(&self) -> Configuration<'_> {
        Configuration::new(self, KnowledgeState::unknown(self.switches.len()), self.start)
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SwitchStatus {
    Unknown,
    On,
    Off,
}

impl SwitchStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SwitchStatus::Unknown => "?",
            SwitchStatus::On => "on",
            SwitchStatus::Off => "off",
        }
    }
}

/// Per-switch status vector in switch declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KnowledgeState(Vec<SwitchStatus>);

impl KnowledgeState {
    pub fn unknown(switches: usize) -> Self {
        KnowledgeState(vec![SwitchStatus::Unknown; switches])
    }

    pub fn from_statuses(statuses: Vec<SwitchStatus>) -> Self {
        KnowledgeState(statuses)
    }

    pub fn status(&self, switch: usize) -> SwitchStatus {
        self.0[switch]
    }

    pub fn statuses(&self) -> &[SwitchStatus] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn known_count(&self) -> usize {
        self.0.iter().filter(|s| **s != SwitchStatus::Unknown).count()
    }

    pub fn with(&self, switch: usize, status: SwitchStatus) -> Self {
        let mut k = self.clone();
        k.0[switch] = status;
        k
    }

    pub fn set(&mut self, switch: usize, status: SwitchStatus) {
        self.0[switch] = status;
    }

    /// True when every switch known here has the same status in `other`
    /// and `other` knows strictly more.
    pub fn strictly_refined_by(&self, other: &KnowledgeState) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| *a == SwitchStatus::Unknown || a == b)
            && other.known_count() > self.known_count()
    }

    /// Whether connection `c` appears in the induced view of this knowledge.
    pub fn traversable(&self, c: ConnRef, mode: ViewMode) -> bool {
        match c {
            ConnRef::Edge(_) => true,
            ConnRef::Switch(i) => match self.0[i] {
                SwitchStatus::On => true,
                SwitchStatus::Unknown => mode == ViewMode::Optimistic,
                SwitchStatus::Off => false,
            },
        }
    }
}

/// Agent situation: what is known, where it stands, where it is going.
#[derive(Clone)]
pub struct Configuration<'g> {
    pub graph: &'g UGraph,
    pub knowledge: KnowledgeState,
    pub current: VertexId,
    pub goal: VertexId,
}

impl<'g> Configuration<'g> {
    pub fn new(graph: &'g UGraph, knowledge: KnowledgeState, current: VertexId) -> Self {
        Configuration { graph, knowledge, current, goal: graph.goal() }
    }

    pub fn at(&self, vertex: VertexId) -> Self {
        Configuration { current: vertex, ..self.clone() }
    }
}

impl PartialEq for Configuration<'_> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.graph, other.graph)
            && self.current == other.current
            && self.goal == other.goal
            && self.knowledge == other.knowledge
    }
}

impl fmt::Debug for Configuration<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Configuration({})", crate::graph::canonical_key(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewMode {
    Pessimistic,
    Optimistic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfigClass {
    GoodTerminal { remaining: f64 },
    BadTerminal,
    Uncontrolled,
    Active,
}

impl ConfigClass {
    pub fn is_terminal(&self) -> bool {
        matches!(self, ConfigClass::GoodTerminal { .. } | ConfigClass::BadTerminal)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConfigClass::GoodTerminal { .. } => "GoodTerminal",
            ConfigClass::BadTerminal => "BadTerminal",
            ConfigClass::Uncontrolled => "Uncontrolled",
            ConfigClass::Active => "Active",
        }
    }
}

impl fmt::Display for ConfigClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigClass::GoodTerminal { remaining } => write!(f, "GoodTerminal({remaining})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Connections present in the induced view, edges first then switches.
pub fn induced_view(g: &UGraph, k: &KnowledgeState, mode: ViewMode) -> Vec<ConnRef> {
    (0..g.edges.len())
        .map(ConnRef::Edge)
        .chain((0..g.switches.len()).map(ConnRef::Switch))
        .filter(|c| k.traversable(*c, mode))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    vertex: VertexId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    // reversed: BinaryHeap pops the smallest (cost, vertex)
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Result of a single-source (or multi-source) Dijkstra run.
pub(crate) struct ShortestPaths {
    pub dist: Vec<f64>,
    pub pred: Vec<Option<Incidence>>,
    /// Vertices in the order they were settled.
    pub settled: Vec<VertexId>,
}

impl ShortestPaths {
    /// Connections and vertices from the source to `to`, or `None` if unreached.
    pub fn path_to(&self, to: VertexId) -> Option<(Vec<ConnRef>, Vec<VertexId>)> {
        if !self.dist[to].is_finite() {
            return None;
        }
        let mut conns = Vec::new();
        let mut verts = vec![to];
        let mut v = to;
        while let Some(step) = self.pred[v] {
            conns.push(step.conn);
            v = step.other;
            verts.push(v);
        }
        conns.reverse();
        verts.reverse();
        Some((conns, verts))
    }
}

/// Dijkstra over connections accepted by `usable`. Only vertices for which
/// `expand` returns true relax their neighbours (sources always do).
pub(crate) fn dijkstra(
    g: &UGraph,
    sources: &[(VertexId, f64)],
    usable: impl Fn(ConnRef) -> bool,
    expand: impl Fn(VertexId) -> bool,
) -> ShortestPaths {
    let n = g.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<Incidence>> = vec![None; n];
    let mut done = vec![false; n];
    let mut settled = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut is_source = vec![false; n];
    for &(v, d) in sources {
        is_source[v] = true;
        if d < dist[v] {
            dist[v] = d;
            heap.push(HeapEntry { cost: d, vertex: v });
        }
    }
    while let Some(HeapEntry { cost, vertex }) = heap.pop() {
        if done[vertex] || cost > dist[vertex] {
            continue;
        }
        done[vertex] = true;
        settled.push(vertex);
        if !is_source[vertex] && !expand(vertex) {
            continue;
        }
        for inc in g.incident(vertex) {
            if done[inc.other] || !usable(inc.conn) {
                continue;
            }
            let next = cost + g.conn_weight(inc.conn);
            if next < dist[inc.other] {
                dist[inc.other] = next;
                pred[inc.other] = Some(Incidence { conn: inc.conn, other: vertex });
                heap.push(HeapEntry { cost: next, vertex: inc.other });
            }
        }
    }
    ShortestPaths { dist, pred, settled }
}

/// Minimum-weight undirected path length in the induced view; `None` when unreachable.
pub fn shortest_distance(g: &UGraph, k: &KnowledgeState, mode: ViewMode, src: VertexId, dst: VertexId) -> Option<f64> {
    let sp = dijkstra(g, &[(src, 0.0)], |c| k.traversable(c, mode), |_| true);
    let d = sp.dist[dst];
    d.is_finite().then_some(d)
}

/// Shortest path as (connections, vertices) in the induced view.
pub fn shortest_path(
    g: &UGraph,
    k: &KnowledgeState,
    mode: ViewMode,
    src: VertexId,
    dst: VertexId,
) -> Option<(Vec<ConnRef>, Vec<VertexId>)> {
    dijkstra(g, &[(src, 0.0)], |c| k.traversable(c, mode), |_| true).path_to(dst)
}

/// Distances to the goal from every vertex under one knowledge state, in
/// both views. Classifies any configuration sharing that knowledge.
#[derive(Debug, Clone)]
pub struct KnowledgeView<'g> {
    graph: &'g UGraph,
    knowledge: KnowledgeState,
    optimistic: Vec<f64>,
    pessimistic: Vec<f64>,
}

impl<'g> KnowledgeView<'g> {
    pub fn new(graph: &'g UGraph, knowledge: KnowledgeState) -> Self {
        let goal = [(graph.goal(), 0.0)];
        let optimistic = dijkstra(graph, &goal, |c| knowledge.traversable(c, ViewMode::Optimistic), |_| true).dist;
        let pessimistic = dijkstra(graph, &goal, |c| knowledge.traversable(c, ViewMode::Pessimistic), |_| true).dist;
        KnowledgeView { graph, knowledge, optimistic, pessimistic }
    }

    pub fn graph(&self) -> &'g UGraph {
        self.graph
    }

    pub fn knowledge(&self) -> &KnowledgeState {
        &self.knowledge
    }

    pub fn distance_to_goal(&self, v: VertexId, mode: ViewMode) -> Option<f64> {
        let d = match mode {
            ViewMode::Optimistic => self.optimistic[v],
            ViewMode::Pessimistic => self.pessimistic[v],
        };
        d.is_finite().then_some(d)
    }

    pub fn has_unknown_incident(&self, v: VertexId) -> bool {
        self.graph.incident(v).iter().any(|inc| match inc.conn {
            ConnRef::Switch(s) => self.knowledge.status(s) == SwitchStatus::Unknown,
            ConnRef::Edge(_) => false,
        })
    }

    pub fn classify(&self, v: VertexId) -> ConfigClass {
        let o = self.optimistic[v];
        let p = self.pessimistic[v];
        if !o.is_finite() {
            ConfigClass::BadTerminal
        } else if p.is_finite() && (o - p).abs() <= TERMINAL_TOLERANCE * p.max(1.0) {
            ConfigClass::GoodTerminal { remaining: p }
        } else if self.has_unknown_incident(v) {
            ConfigClass::Uncontrolled
        } else {
            ConfigClass::Active
        }
    }

    pub fn configuration(&self, v: VertexId) -> Configuration<'g> {
        Configuration::new(self.graph, self.knowledge.clone(), v)
    }
}

pub fn classify(c: &Configuration<'_>) -> ConfigClass {
    KnowledgeView::new(c.graph, c.knowledge.clone()).classify(c.current)
}

/// Current edges (certain connections incident to the current vertex) and
/// current switches (unknown switches incident to it).
pub fn current_connections(c: &Configuration<'_>) -> (Vec<ConnRef>, Vec<usize>) {
    let mut ce = Vec::new();
    let mut cs = Vec::new();
    for inc in c.graph.incident(c.current) {
        match inc.conn {
            ConnRef::Switch(s) if c.knowledge.status(s) == SwitchStatus::Unknown => cs.push(s),
            conn if c.knowledge.traversable(conn, ViewMode::Pessimistic) => ce.push(conn),
            _ => {}
        }
    }
    ce.sort();
    ce.dedup();
    cs.sort();
    cs.dedup();
    (ce, cs)
}
