//! Command-line front end. Structured output goes to `out` as JSON,
//! diagnostics to `err`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::generator::{generate, GeneratorParams};
use crate::graph::{build_representing_graph, check_markov, to_dot, Limits, DEFAULT_MAX_NODES, DEFAULT_MAX_SWITCHES};
use crate::model::{classify, current_connections, load_ugraph, shortest_distance, UGraph, ViewMode};
use crate::num::round_sig;
use crate::oracle::{exact_policy_value, layered_expectimax_value, world_table, Outcome};
use crate::planner::{evaluate_policy, reach_probability, solve, PolicyDocument};
use crate::simulator::{monte_carlo, monte_carlo_serial, OptimalPolicy, Replanner, Strategy};

const SIG_DIGITS: usize = 12;

#[derive(Debug, Parser)]
#[command(name = "uplan", version, about = "Expected-cost navigation plans for graphs with uncertain switches")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct LimitArgs {
    /// Maximum number of switches accepted for planning.
    #[arg(long, default_value_t = DEFAULT_MAX_SWITCHES)]
    pub max_switches: usize,
    /// Maximum number of nodes in the representing graph.
    #[arg(long, default_value_t = DEFAULT_MAX_NODES)]
    pub max_nodes: usize,
}

impl LimitArgs {
    fn limits(&self) -> Limits {
        Limits { max_switches: self.max_switches, max_nodes: self.max_nodes, ..Limits::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyName {
    Optimal,
    Optimistic,
    Pessimistic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the optimal plan and print a summary.
    Plan {
        instance: PathBuf,
        /// Write the policy document here.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Write the representing graph as DOT here.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Keep only the arcs chosen by the optimal plan in the DOT output.
        #[arg(long)]
        pruned: bool,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Expected cost of a policy document.
    Eval {
        instance: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Evaluate by enumerating every world instead of over the graph.
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Independent optimum and per-world costs of a plan.
    Oracle {
        instance: PathBuf,
        /// Policy to tabulate; defaults to the optimal plan.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Monte-Carlo execution in sampled worlds.
    Simulate {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = StrategyName::Optimal)]
        strategy: StrategyName,
        #[arg(long, default_value_t = 10_000)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Policy document for the optimal strategy; planned on the fly if absent.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Run on one thread.
        #[arg(long)]
        serial: bool,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Generate a random instance.
    Gen {
        #[arg(long, default_value_t = 6)]
        vertices: usize,
        #[arg(long, default_value_t = 3)]
        extra_edges: usize,
        #[arg(long, default_value_t = 2)]
        switches: usize,
        #[arg(long, default_value_t = 1.0)]
        weight_min: f64,
        #[arg(long, default_value_t = 10.0)]
        weight_max: f64,
        #[arg(long, default_value_t = 0.1)]
        prob_min: f64,
        #[arg(long, default_value_t = 0.9)]
        prob_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate an instance and classify its initial configuration.
    Info { instance: PathBuf },
    /// Write the representing graph as DOT.
    ExportDot {
        instance: PathBuf,
        /// Prune to the arcs chosen by this policy document.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        limits: LimitArgs,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Limit { .. } => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match execute(&cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    Ok(fs::write(path, content)?)
}

fn load_instance(path: &Path) -> Result<UGraph> {
    load_ugraph(&read(path)?)
}

fn load_policy(path: &Path, g: &UGraph) -> Result<PolicyDocument> {
    let doc = PolicyDocument::from_json(&read(path)?)?;
    if doc.instance_digest != g.digest() {
        return Err(Error::Mismatch(format!(
            "policy digest {} does not match instance digest {}",
            doc.instance_digest,
            g.digest()
        )));
    }
    Ok(doc)
}

fn num(x: f64) -> Value {
    json!(round_sig(x, SIG_DIGITS))
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn emit(out: &mut dyn Write, v: &Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v).expect("json value serializes"))?;
    Ok(())
}

fn optimal_document(g: &UGraph, limits: &Limits, err: &mut dyn Write) -> Result<PolicyDocument> {
    let rg = build_representing_graph(g, limits)?;
    write!(err, "{}", rg.stats().diagnostics())?;
    let sol = solve(&rg);
    PolicyDocument::new(&rg, &sol.policy, sol.values.root_value)
}

fn execute(cmd: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Plan { instance, policy, dot, pruned, limits } => {
            let g = load_instance(instance)?;
            let rg = build_representing_graph(&g, &limits.limits())?;
            let stats = rg.stats();
            write!(err, "{}", stats.diagnostics())?;
            let report = check_markov(&rg);
            if !report.passed() {
                return Err(Error::Fault(format!("representing graph failed checks: {}", report.failures.join("; "))));
            }
            let sol = solve(&rg);
            if let Some(path) = policy {
                let doc = PolicyDocument::new(&rg, &sol.policy, sol.values.root_value)?;
                write_file(path, &doc.to_json())?;
            }
            if let Some(path) = dot {
                let text = to_dot(&rg, pruned.then_some(&sol.policy))?;
                write_file(path, &text)?;
            }
            let k = crate::model::KnowledgeState::unknown(g.switches().len());
            emit(
                out,
                &json!({
                    "optimal_expected_cost": num(sol.values.root_value),
                    "optimistic_sd": opt_num(shortest_distance(&g, &k, ViewMode::Optimistic, g.start(), g.goal())),
                    "pessimistic_sd": opt_num(shortest_distance(&g, &k, ViewMode::Pessimistic, g.start(), g.goal())),
                    "reach_probability": num(reach_probability(&rg, &sol.policy)?),
                    "states": stats.states,
                    "natures": stats.natures,
                }),
            )
        }
        Command::Eval { instance, policy, exact, limits } => {
            let g = load_instance(instance)?;
            let doc = load_policy(policy, &g)?;
            let (cost, reach, method) = if *exact {
                let (c, r) = exact_policy_value(&g, &doc)?;
                (c, r, "exact")
            } else {
                let rg = build_representing_graph(&g, &limits.limits())?;
                let p = doc.to_policy(&rg)?;
                (evaluate_policy(&rg, &p)?.root_value, reach_probability(&rg, &p)?, "graph")
            };
            emit(out, &json!({"expected_cost": num(cost), "reach_probability": num(reach), "method": method}))
        }
        Command::Oracle { instance, policy, limits } => {
            let g = load_instance(instance)?;
            let optimum = layered_expectimax_value(&g)?;
            let doc = match policy {
                Some(p) => load_policy(p, &g)?,
                None => optimal_document(&g, &limits.limits(), err)?,
            };
            let table = world_table(&g, &doc)?;
            let mut expected = 0.0;
            let mut reach = 0.0;
            let worlds: Vec<Value> = table
                .iter()
                .map(|(w, cost, outcome)| {
                    expected += w.probability * cost;
                    if *outcome == Outcome::ReachedGoal {
                        reach += w.probability;
                    }
                    let status: serde_json::Map<String, Value> = g
                        .switches()
                        .iter()
                        .zip(&w.status)
                        .map(|(s, &on)| (s.id.clone(), json!(if on { "on" } else { "off" })))
                        .collect();
                    json!({
                        "status": status,
                        "probability": num(w.probability),
                        "cost": num(*cost),
                        "outcome": match outcome {
                            Outcome::ReachedGoal => "reached_goal",
                            Outcome::ProvedUnreachable => "proved_unreachable",
                        },
                    })
                })
                .collect();
            emit(
                out,
                &json!({
                    "layered_expectimax_value": num(optimum),
                    "policy_expected_cost": num(expected),
                    "reach_probability": num(reach),
                    "worlds": worlds,
                }),
            )
        }
        Command::Simulate { instance, strategy, runs, seed, policy, serial, limits } => {
            let g = load_instance(instance)?;
            let optimal;
            let s: &dyn Strategy = match strategy {
                StrategyName::Optimal => {
                    let document = match policy {
                        Some(p) => load_policy(p, &g)?,
                        None => optimal_document(&g, &limits.limits(), err)?,
                    };
                    optimal = OptimalPolicy { document };
                    &optimal
                }
                StrategyName::Optimistic => &Replanner::OPTIMISTIC,
                StrategyName::Pessimistic => &Replanner::PESSIMISTIC_DIRECT,
            };
            let stats =
                if *serial { monte_carlo_serial(&g, s, *runs, *seed)? } else { monte_carlo(&g, s, *runs, *seed)? };
            let mut v = json!({
                "runs": stats.runs,
                "mean_cost": num(stats.mean_cost),
                "stderr": num(stats.stderr),
                "reach_fraction": num(stats.reach_fraction),
                "min_cost": num(stats.min_cost),
                "max_cost": num(stats.max_cost),
            });
            if stats.degenerate {
                v["degenerate"] = json!(true);
                writeln!(err, "warning: a single run gives no spread estimate")?;
            }
            emit(out, &v)
        }
        Command::Gen {
            vertices,
            extra_edges,
            switches,
            weight_min,
            weight_max,
            prob_min,
            prob_max,
            seed,
            out: path,
        } => {
            let params = GeneratorParams {
                vertices: *vertices,
                extra_edges: *extra_edges,
                switches: *switches,
                weight_range: [*weight_min, *weight_max],
                prob_range: [*prob_min, *prob_max],
                seed: *seed,
            };
            let doc = generate(&params)?;
            let mut text = serde_json::to_string_pretty(&doc).expect("instance serializes");
            text.push('\n');
            match path {
                Some(p) => write_file(p, &text),
                None => Ok(out.write_all(text.as_bytes())?),
            }
        }
        Command::Info { instance } => {
            let g = match load_instance(instance) {
                Err(Error::Invalid(problems)) => {
                    for p in &problems {
                        writeln!(err, "invalid: {p}")?;
                    }
                    return Err(Error::Invalid(problems));
                }
                other => other?,
            };
            let c = g.initial_configuration();
            let class = classify(&c);
            let (ce, cs) = current_connections(&c);
            let k = &c.knowledge;
            emit(
                out,
                &json!({
                    "valid": true,
                    "digest": g.digest(),
                    "vertices": g.vertex_count(),
                    "edges": g.edges().len(),
                    "switches": g.switches().len(),
                    "class": class.name(),
                    "remaining": match class {
                        crate::model::ConfigClass::GoodTerminal { remaining } => num(remaining),
                        _ => Value::Null,
                    },
                    "optimistic_sd": opt_num(shortest_distance(&g, k, ViewMode::Optimistic, g.start(), g.goal())),
                    "pessimistic_sd": opt_num(shortest_distance(&g, k, ViewMode::Pessimistic, g.start(), g.goal())),
                    "current_edges": ce.iter().map(|x| g.conn_id(*x)).collect::<Vec<_>>(),
                    "current_switches": cs.iter().map(|&s| g.switches()[s].id.as_str()).collect::<Vec<_>>(),
                }),
            )
        }
        Command::ExportDot { instance, policy, out: path, limits } => {
            let g = load_instance(instance)?;
            let rg = build_representing_graph(&g, &limits.limits())?;
            write!(err, "{}", rg.stats().diagnostics())?;
            let p = match policy {
                Some(p) => Some(load_policy(p, &g)?.to_policy(&rg)?),
                None => None,
            };
            let text = to_dot(&rg, p.as_ref())?;
            match path {
                Some(p) => write_file(p, &text),
                None => Ok(out.write_all(text.as_bytes())?),
            }
        }
    }
}
