//! Small reference instances used by tests, examples and the acceptance suite.

use crate::model::{load_ugraph, UGraph};

/// Two river banks joined by a bridge that is up with probability 0.8.
pub const BRIDGE_TEXT: &str = r#"{
  "vertices": ["A", "B"],
  "edges": [],
  "switches": [{"id": "s1", "ends": ["A", "B"], "weight": 5, "prob": 0.8}],
  "start": "A",
  "goal": "B"
}"#;

/// Direct road A-B (10) versus a detour A-C (2), C-D switch (1), D-B (3).
pub const DETOUR_TEXT: &str = r#"{
  "vertices": ["A", "B", "C", "D"],
  "edges": [
    {"id": "AB", "ends": ["A", "B"], "weight": 10},
    {"id": "AC", "ends": ["A", "C"], "weight": 2},
    {"id": "DB", "ends": ["D", "B"], "weight": 3}
  ],
  "switches": [{"id": "CD", "ends": ["C", "D"], "weight": 1, "prob": 0.8}],
  "start": "A",
  "goal": "B"
}"#;

pub fn bridge() -> UGraph {
    load_ugraph(BRIDGE_TEXT).expect("bridge instance")
}

/// The detour instance with the switch presence probability set to `p`.
pub fn detour(p: f64) -> UGraph {
    load_ugraph(&DETOUR_TEXT.replace("\"prob\": 0.8", &format!("\"prob\": {p}"))).expect("detour instance")
}

pub fn single_vertex() -> UGraph {
    load_ugraph(r#"{"vertices":["Z"],"edges":[],"switches":[],"start":"Z","goal":"Z"}"#).expect("single")
}

/// X -(edge 1)- Y -(switch 1, p=0.5)- Z, from X to Z.
pub fn chain() -> UGraph {
    load_ugraph(
        r#"{"vertices":["X","Y","Z"],
            "edges":[{"id":"xy","ends":["X","Y"],"weight":1}],
            "switches":[{"id":"yz","ends":["Y","Z"],"weight":1,"prob":0.5}],
            "start":"X","goal":"Z"}"#,
    )
    .expect("chain")
}

/// Start X touches two unknown switches a (p=0.8) and b (p=0.5).
pub fn two_switch() -> UGraph {
    load_ugraph(
        r#"{"vertices":["X","Y","G"],
            "edges":[{"id":"yg","ends":["Y","G"],"weight":1}],
            "switches":[{"id":"a","ends":["X","Y"],"weight":1,"prob":0.8},
                        {"id":"b","ends":["X","G"],"weight":3,"prob":0.5}],
            "start":"X","goal":"G"}"#,
    )
    .expect("two-switch")
}

/// Goal behind two independent switches in series, no certain route.
pub fn two_switch_series() -> UGraph {
    load_ugraph(
        r#"{"vertices":["X","Y","Z"],
            "edges":[],
            "switches":[{"id":"a","ends":["X","Y"],"weight":1,"prob":0.8},
                        {"id":"b","ends":["Y","Z"],"weight":1,"prob":0.5}],
            "start":"X","goal":"Z"}"#,
    )
    .expect("two-switch series")
}
