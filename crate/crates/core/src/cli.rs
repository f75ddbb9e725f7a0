//! The `vatworld` command-line front end.
//!
//! Every command prints a [`RunReport`], as `key: value` lines or as JSON
//! with `--format machine`. Exit codes: 0 when the command succeeds and its
//! verdict holds, 1 when a verdict fails (not equivalent, not reversible,
//! invalid model, ...), 2 on usage or input errors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::beliefs::{self, MspCaps};
use crate::epsilon;
use crate::error::{Error, Result};
use crate::fixtures;
use crate::io::{self, HistoryDoc, PolicyDoc, ReverseKernelDoc, TransducerDoc};
use crate::minimize;
use crate::model::{History, Policy, Transducer, DEFAULT_TOL};
use crate::oracle::{self, Budget};
use crate::reduce;
use crate::retro;
use crate::reverse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Debug, Parser)]
#[command(name = "vatworld", version, about = "Analyse stochastic transducers: equivalence, reduction, beliefs, reversal")]
pub struct Cli {
    /// Report format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    pub format: Format,
    /// Numerical tolerance.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Ignore the enumeration budget (also set by VATWORLD_BUDGET).
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct PolicyArg {
    /// Action law: uniform, weighted:<w1,w2,..> or file:<path>.
    #[arg(long, default_value = "uniform")]
    pub policy: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a transducer file: structure, column sums, entry ranges.
    Validate { file: PathBuf },
    /// Moore class, memory class, unifilarity and counifilarity.
    Info {
        file: PathBuf,
        /// Depth used to diagnose the memory class.
        #[arg(long, default_value_t = 4)]
        depth: usize,
        /// List edges as `from -> to [y|a:p]`.
        #[arg(long)]
        pretty: bool,
    },
    /// Probability of a history given its actions.
    Prob {
        file: PathBuf,
        /// History file with action and output labels.
        #[arg(long, conflicts_with_all = ["actions", "outputs"])]
        trace: Option<PathBuf>,
        /// Comma-separated action labels.
        #[arg(long, requires = "outputs")]
        actions: Option<String>,
        /// Comma-separated output labels.
        #[arg(long, requires = "actions")]
        outputs: Option<String>,
    },
    /// Sample a trajectory.
    Sample {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        length: usize,
        #[command(flatten)]
        policy: PolicyArg,
        /// Write the sampled history here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two interfaces on every word up to a depth.
    Equivalent {
        left: PathBuf,
        right: PathBuf,
        /// Defaults to the sum of the state counts.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Quotient by the coarsest bisimulation.
    Minimize {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Canonical dimension of the history-vector span.
    Dimension { file: PathBuf },
    /// Reduce to a generalised transducer of canonical dimension.
    ReduceGt {
        file: PathBuf,
        /// Also project onto the reachable span.
        #[arg(long)]
        both_sides: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mixed-state presentation.
    Msp {
        file: PathBuf,
        #[arg(long, default_value_t = MspCaps::default().max_states)]
        max_states: usize,
        #[arg(long, default_value_t = MspCaps::default().max_depth)]
        max_depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ε-transducer.
    Epsilon {
        file: PathBuf,
        /// Cluster histories instead of minimising the MSP.
        #[arg(long)]
        from_histories: bool,
        #[arg(long, default_value_t = 4)]
        hist_depth: usize,
        #[arg(long, default_value_t = 3)]
        future_depth: usize,
        #[arg(long, default_value_t = MspCaps::default().max_states)]
        max_states: usize,
        #[arg(long, default_value_t = MspCaps::default().max_depth)]
        max_depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reversibility verdict and reverse kernels.
    Reverse {
        file: PathBuf,
        #[command(flatten)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
        /// Directory for one reverse-kernel file per time slice.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predictive, retrodictive and smoothed beliefs along a trace.
    Smooth {
        file: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        policy: PolicyArg,
    },
    /// Write the built-in fixtures as transducer files.
    Fixtures {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedVerdict {
    pub name: String,
    pub value: Value,
}

/// Everything a run reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub parameters: BTreeMap<String, String>,
    pub verdicts: Vec<NamedVerdict>,
    pub artifacts: Vec<String>,
}

impl RunReport {
    fn new(command: &str) -> Self {
        RunReport {
            command: command.to_string(),
            inputs: Vec::new(),
            parameters: BTreeMap::new(),
            verdicts: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.to_string(), value.to_string());
    }

    fn verdict(&mut self, name: &str, value: impl Serialize) {
        self.verdicts.push(NamedVerdict {
            name: name.to_string(),
            value: serde_json::to_value(value).expect("verdicts serialise"),
        });
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.verdicts.iter().find(|v| v.name == name).map(|v| &v.value)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Machine => io::to_pretty(self),
            Format::Text => {
                let mut s = format!("command: {}\n", self.command);
                for i in &self.inputs {
                    s.push_str(&format!("input: {} (sha256 {})\n", i.path, i.sha256));
                }
                for (k, v) in &self.parameters {
                    s.push_str(&format!("{k} = {v}\n"));
                }
                for v in &self.verdicts {
                    match &v.value {
                        Value::String(text) => s.push_str(&format!("{}: {text}\n", v.name)),
                        Value::Array(items) if items.iter().all(Value::is_string) => {
                            s.push_str(&format!("{}:\n", v.name));
                            for item in items {
                                s.push_str(&format!("  {}\n", item.as_str().unwrap_or_default()));
                            }
                        }
                        other => s.push_str(&format!("{}: {other}\n", v.name)),
                    }
                }
                for a in &self.artifacts {
                    s.push_str(&format!("wrote: {a}\n"));
                }
                s
            }
        }
    }
}

/// Outcome of a command before rendering.
struct Outcome {
    report: RunReport,
    holds: bool,
}

fn ok(report: RunReport) -> Result<Outcome> {
    Ok(Outcome { report, holds: true })
}

fn digest(path: &Path) -> Result<(String, InputDigest)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    Ok((text, digest))
}

fn load(path: &Path, report: &mut RunReport) -> Result<Transducer> {
    let (text, d) = digest(path)?;
    report.inputs.push(d);
    io::transducer_from_str(&text, &path.display().to_string())
}

fn load_history(path: &Path, t: &Transducer, report: &mut RunReport) -> Result<History> {
    let (text, d) = digest(path)?;
    report.inputs.push(d);
    io::history_from_str(&text, &path.display().to_string(), t.actions(), t.outputs())
}

/// Parses `uniform`, `weighted:<w1,..>` or `file:<path>`.
pub fn parse_policy(spec: &str, t: &Transducer, report: &mut RunReport) -> Result<Policy> {
    let policy = if spec == "uniform" {
        Policy::IidUniform
    } else if let Some(w) = spec.strip_prefix("weighted:") {
        let weights = w
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Parse(format!("--policy weight {x:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Policy::IidWeighted(weights)
    } else if let Some(path) = spec.strip_prefix("file:") {
        let (text, d) = digest(Path::new(path))?;
        report.inputs.push(d);
        io::parse_doc::<PolicyDoc>(&text, path)?.to_policy(t.actions(), t.outputs())?
    } else {
        return Err(Error::Parse(format!(
            "--policy {spec:?}: expected uniform, weighted:<w1,..> or file:<path>"
        )));
    };
    policy.check(t.actions().len(), 1e-9)?;
    Ok(policy)
}

fn labels(list: &str) -> Vec<String> {
    if list.is_empty() {
        Vec::new()
    } else {
        list.split(',').map(|s| s.trim().to_string()).collect()
    }
}

fn write_artifact(path: &Path, text: &str, report: &mut RunReport) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    report.artifacts.push(path.display().to_string());
    Ok(())
}

fn belief_doc(t: &Transducer, beliefs: &[beliefs::BeliefState]) -> String {
    let mut doc = TransducerDoc::from_transducer(t);
    doc.beliefs = Some(beliefs.iter().map(|b| b.weights().to_vec()).collect());
    io::to_pretty(&doc)
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let tol = cli.tol;
    let budget = Budget {
        force: cli.force,
        ..Budget::from_env()
    };
    let mut report;
    match &cli.command {
        Command::Validate { file } => {
            report = RunReport::new("validate");
            let t = load(file, &mut report)?;
            report.param("tol", tol);
            let v = t.validate(tol);
            report.verdict("valid", v.is_valid());
            let issues: Vec<String> = v.violations.iter().map(|x| x.describe(&t)).collect();
            if !issues.is_empty() {
                report.verdict("violations", issues);
            }
            Ok(Outcome {
                holds: v.is_valid(),
                report,
            })
        }
        Command::Info { file, depth, pretty } => {
            report = RunReport::new("info");
            let t = load(file, &mut report)?;
            report.param("tol", tol);
            report.param("depth", depth);
            report.verdict("name", t.name());
            report.verdict("states", t.n_states());
            report.verdict("actions", t.actions().symbols());
            report.verdict("outputs", t.outputs().symbols());
            report.verdict("moore_class", t.classify_moore(tol).to_string());
            report.verdict("memory_class", oracle::memory_class(&t, *depth, tol, budget)?.to_string());
            report.verdict("unifilar", beliefs::is_unifilar(&t, tol));
            report.verdict("action_counifilar", reverse::is_action_counifilar(&t, tol));
            report.verdict(
                "deterministic_start",
                t.deterministic_start(tol).map(|s| t.states()[s].clone()),
            );
            if *pretty {
                let mut edges = Vec::new();
                for from in 0..t.n_states() {
                    for to in 0..t.n_states() {
                        for a in 0..t.actions().len() {
                            for y in 0..t.outputs().len() {
                                let p = t.prob(y, to, a, from);
                                if p > tol {
                                    edges.push(format!(
                                        "{} -> {} [{}|{}:{}]",
                                        t.states()[from],
                                        t.states()[to],
                                        t.outputs().symbol(y),
                                        t.actions().symbol(a),
                                        p
                                    ));
                                }
                            }
                        }
                    }
                }
                report.verdict("edges", edges);
            }
            ok(report)
        }
        Command::Prob {
            file,
            trace,
            actions,
            outputs,
        } => {
            report = RunReport::new("prob");
            let t = load(file, &mut report)?;
            let h = match (trace, actions, outputs) {
                (Some(path), _, _) => load_history(path, &t, &mut report)?,
                (None, Some(a), Some(y)) => HistoryDoc {
                    actions: labels(a),
                    outputs: labels(y),
                }
                .to_history(t.actions(), t.outputs())?,
                _ => return Err(Error::Parse("prob needs --trace or --actions with --outputs".into())),
            };
            report.param("history", h.render(t.actions(), t.outputs()));
            report.verdict("probability", oracle::word_probability(&t, &h)?);
            ok(report)
        }
        Command::Sample {
            file,
            seed,
            length,
            policy,
            out,
        } => {
            report = RunReport::new("sample");
            let t = load(file, &mut report)?;
            let p = parse_policy(&policy.policy, &t, &mut report)?;
            report.param("seed", seed);
            report.param("length", length);
            report.param("policy", p.describe());
            let tr = oracle::sample_trajectory(&t, &p, *length, *seed);
            let h = tr.history();
            let doc = HistoryDoc::from_history(&h, t.actions(), t.outputs());
            report.verdict("actions", &doc.actions);
            report.verdict("outputs", &doc.outputs);
            report.verdict("states", tr.states.iter().map(|&s| t.states()[s].clone()).collect::<Vec<_>>());
            if let Some(path) = out {
                write_artifact(path, &io::to_pretty(&doc), &mut report)?;
            }
            ok(report)
        }
        Command::Equivalent { left, right, depth } => {
            report = RunReport::new("equivalent");
            let t1 = load(left, &mut report)?;
            let t2 = load(right, &mut report)?;
            let depth = depth.unwrap_or_else(|| oracle::default_depth(t1.n_states(), t2.n_states()));
            report.param("depth", depth);
            report.param("tol", tol);
            let v = oracle::equivalent(&t1, &t2, depth, tol)?;
            report.verdict("equivalent", v.equivalent);
            report.verdict("depth_checked", v.depth_checked);
            report.verdict("method", v.method);
            if let Some(c) = &v.counterexample {
                report.verdict("counterexample", c.history.render(t1.actions(), t1.outputs()));
                report.verdict("probabilities", [c.left, c.right]);
            }
            Ok(Outcome {
                holds: v.equivalent,
                report,
            })
        }
        Command::Minimize { file, out } => {
            report = RunReport::new("minimize");
            let t = load(file, &mut report)?;
            report.param("tol", tol);
            let part = minimize::coarsest_bisimulation(&t, tol);
            let q = minimize::quotient(&t, &part, tol)?;
            report.verdict("states_before", t.n_states());
            report.verdict("states_after", q.n_states());
            report.verdict(
                "partition",
                part.labelled(&t).into_iter().map(|c| format!("{{{}}}", c.join(","))).collect::<Vec<_>>(),
            );
            if let Some(path) = out {
                write_artifact(path, &io::transducer_to_string(&q), &mut report)?;
            }
            ok(report)
        }
        Command::Dimension { file } => {
            report = RunReport::new("dimension");
            let t = load(file, &mut report)?;
            report.param("tol", tol);
            report.verdict("states", t.n_states());
            report.verdict("canonical_dimension", reduce::canonical_dimension(&t, tol, budget)?);
            ok(report)
        }
        Command::ReduceGt { file, both_sides, out } => {
            report = RunReport::new("reduce-gt");
            let t = load(file, &mut report)?;
            report.param("tol", tol);
            report.param("both_sides", both_sides);
            let g = reduce::reduce_generalized(&t, tol, *both_sides, budget)?;
            report.verdict("dims", g.dims());
            let check = oracle::equivalent(&t, &g, 2 * t.n_states(), tol.max(1e-9))?;
            report.verdict("interface_preserved", check.equivalent);
            if let Some(path) = out {
                write_artifact(path, &io::generalized_to_string(&g), &mut report)?;
            }
            Ok(Outcome {
                holds: check.equivalent,
                report,
            })
        }
        Command::Msp {
            file,
            max_states,
            max_depth,
            out,
        } => {
            report = RunReport::new("msp");
            let t = load(file, &mut report)?;
            let caps = MspCaps {
                max_states: *max_states,
                max_depth: *max_depth,
            };
            report.param("tol", tol);
            report.param("max_states", max_states);
            report.param("max_depth", max_depth);
            let msp = beliefs::build_msp(&t, tol, caps)?;
            report.verdict("states", msp.n_states());
            report.verdict("unifilar", beliefs::is_unifilar(&msp.machine, tol));
            let depth = 2 * t.n_states();
            let faithful = beliefs::is_faithful(&msp, &t, depth, tol.max(1e-9))?;
            report.verdict("faithful_depth", depth);
            report.verdict("faithful", faithful);
            if let Some(path) = out {
                write_artifact(path, &belief_doc(&msp.machine, &msp.payload), &mut report)?;
            }
            Ok(Outcome { holds: faithful, report })
        }
        Command::Epsilon {
            file,
            from_histories,
            hist_depth,
            future_depth,
            max_states,
            max_depth,
            out,
        } => {
            report = RunReport::new("epsilon");
            let t = load(file, &mut report)?;
            report.param("tol", tol);
            let (eps, holds) = if *from_histories {
                report.param("hist_depth", hist_depth);
                report.param("future_depth", future_depth);
                let hc = epsilon::epsilon_from_histories(&t, *hist_depth, *future_depth, tol, budget)?;
                report.verdict("classes", hc.classes.len());
                report.verdict("class_counts", &hc.counts);
                report.verdict("stabilized", hc.stabilized);
                let stabilized = hc.stabilized;
                (hc.epsilon, stabilized)
            } else {
                report.param("max_states", max_states);
                report.param("max_depth", max_depth);
                let caps = MspCaps {
                    max_states: *max_states,
                    max_depth: *max_depth,
                };
                (epsilon::epsilon_transducer(&t, tol, caps)?, true)
            };
            report.verdict("states", eps.n_states());
            report.verdict("unifilar", beliefs::is_unifilar(&eps.machine, tol));
            report.verdict("provenance", &eps.provenance);
            if let Some(path) = out {
                write_artifact(path, &belief_doc(&eps.machine, &eps.beliefs), &mut report)?;
            }
            Ok(Outcome { holds, report })
        }
        Command::Reverse {
            file,
            policy,
            horizon,
            out,
        } => {
            report = RunReport::new("reverse");
            let t = load(file, &mut report)?;
            let p = parse_policy(&policy.policy, &t, &mut report)?;
            report.param("policy", p.describe());
            report.param("horizon", horizon);
            report.param("tol", tol);
            let v = reverse::check_reversible(&t, *horizon, tol, budget)?;
            report.verdict("reversible", v.reversible);
            report.verdict("route", v.route);
            if let Some(w) = &v.witness {
                report.verdict("witness", w.describe(&t));
            }
            let kernels = reverse::reverse_kernels(&t, &p, *horizon, tol, budget)?;
            let worst = kernels.iter().map(|k| k.normalization_error()).fold(0.0, f64::max);
            report.verdict("reverse_normalization_error", worst);
            if v.reversible {
                let check = reverse::verify_reverse_generates(&t, &p, *horizon, tol.max(1e-9), budget)?;
                report.verdict("reverse_generates", check.holds);
                report.verdict("max_deviation", check.max_deviation);
                if let Some(dir) = out {
                    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
                    for k in &kernels {
                        let path = dir.join(format!("{}-reverse-t{}.json", t.name(), k.tau));
                        write_artifact(&path, &io::to_pretty(&ReverseKernelDoc::from_kernel(&t, k)), &mut report)?;
                    }
                }
            }
            Ok(Outcome {
                holds: v.reversible,
                report,
            })
        }
        Command::Smooth { file, trace, policy } => {
            report = RunReport::new("smooth");
            let t = load(file, &mut report)?;
            let h = load_history(trace, &t, &mut report)?;
            let p = parse_policy(&policy.policy, &t, &mut report)?;
            // posteriors condition on the realised actions, so the law only
            // labels the report
            report.param("policy", p.describe());
            report.param("history", h.render(t.actions(), t.outputs()));
            let predictive = (0..=h.len())
                .map(|tau| beliefs::belief_after(&t, &h.prefix(tau)).map(|b| b.weights().to_vec()))
                .collect::<Result<Vec<_>>>()?;
            let retrodictive = (0..=h.len())
                .map(|tau| {
                    retro::bdmsm_from_word(&t, &h.prefix(tau)).map(|r| retro::retrodictive_from_bdmsm(&r).0.weights().to_vec())
                })
                .collect::<Result<Vec<_>>>()?;
            let smoothed: Vec<Vec<f64>> = retro::smooth(&t, &h)?.iter().map(|b| b.weights().to_vec()).collect();
            let rho = retro::bdmsm_from_word(&t, &h)?;
            let rows: Vec<Vec<f64>> = (0..rho.matrix().nrows())
                .map(|i| rho.matrix().row(i).iter().copied().collect())
                .collect();
            report.verdict("states", t.states());
            report.verdict("predictive", predictive);
            report.verdict("retrodictive", retrodictive);
            report.verdict("smoothed", smoothed);
            report.verdict("bdmsm", rows);
            ok(report)
        }
        Command::Fixtures { out } => {
            report = RunReport::new("fixtures");
            std::fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
            for (stem, t) in fixtures::all() {
                write_artifact(&out.join(format!("{stem}.json")), &io::transducer_to_string(&t), &mut report)?;
            }
            report.verdict("written", report.artifacts.len());
            ok(report)
        }
    }
}

/// Exit code for an error: verdict-like failures are 1, input problems 2.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonClosingMsp { .. }
        | Error::NotBisimulation { .. }
        | Error::Singular(_)
        | Error::Unreachable(_)
        | Error::Invariant(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (program name first), runs the command and writes the
/// report to `out` and diagnostics to `err`.
pub fn run_with<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            let _ = write!(out, "{}", outcome.report.render(cli.format));
            if outcome.holds {
                0
            } else {
                1
            }
        }
        Err(e) => {
            let code = exit_code(&e);
            if cli.format == Format::Machine {
                let _ = write!(out, "{}", io::to_pretty(&json!({ "error": e.to_string(), "exit": code })));
            }
            let _ = writeln!(err, "vatworld: {e}");
            code
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}
