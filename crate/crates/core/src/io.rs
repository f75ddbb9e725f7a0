//! JSON documents for transducers, generalised transducers, histories and
//! reverse-kernel slices.
//!
//! Kernel entries are sparse records `{from, action, output, to, prob}`
//! addressed by label; every omitted combination is zero. Writers emit
//! records in `(from, action, output, to)` order and skip exact zeros, so a
//! document written by this module reads back and re-serialises to the same
//! bytes.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Alphabet, GeneralizedTransducer, History, Policy, Transducer};
use crate::reverse::ReverseKernel;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelRecord {
    pub from: String,
    pub action: String,
    pub output: String,
    pub to: String,
    pub prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransducerDoc {
    pub name: String,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub outputs: Vec<String>,
    pub initial: Vec<f64>,
    pub kernel: Vec<KernelRecord>,
    /// Belief payload per state, present for mixed-state presentations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beliefs: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatrixRecord {
    pub action: String,
    pub output: String,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeneralizedDoc {
    pub dims: usize,
    pub actions: Vec<String>,
    pub outputs: Vec<String>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub matrices: Vec<MatrixRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HistoryDoc {
    pub actions: Vec<String>,
    pub outputs: Vec<String>,
}

/// One time slice of a reverse kernel, `κ^R_τ(output, to | action, given)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReverseKernelDoc {
    pub name: String,
    pub tau: usize,
    pub policy: String,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub outputs: Vec<String>,
    pub kernel: Vec<ReverseRecord>,
    pub undefined: Vec<UndefinedColumn>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReverseRecord {
    pub given: String,
    pub action: String,
    pub output: String,
    pub to: String,
    pub prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UndefinedColumn {
    pub action: String,
    pub given: String,
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        Error::Parse(format!("{origin}:{}:{}: {e}", e.line(), e.column()))
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents always serialise");
    s.push('\n');
    s
}

impl TransducerDoc {
    pub fn from_transducer(t: &Transducer) -> Self {
        let mut kernel = Vec::new();
        for from in 0..t.n_states() {
            for a in 0..t.actions().len() {
                for y in 0..t.outputs().len() {
                    for to in 0..t.n_states() {
                        let prob = t.prob(y, to, a, from);
                        if prob != 0.0 {
                            kernel.push(KernelRecord {
                                from: t.states()[from].clone(),
                                action: t.actions().symbol(a).to_string(),
                                output: t.outputs().symbol(y).to_string(),
                                to: t.states()[to].clone(),
                                prob,
                            });
                        }
                    }
                }
            }
        }
        TransducerDoc {
            name: t.name().to_string(),
            states: t.states().to_vec(),
            actions: t.actions().symbols().to_vec(),
            outputs: t.outputs().symbols().to_vec(),
            initial: t.initial().iter().copied().collect(),
            kernel,
            beliefs: None,
        }
    }

    pub fn to_transducer(&self, origin: &str) -> Result<Transducer> {
        let structure = |msg: String| Error::Structure(format!("{origin}: {msg}"));
        let actions = Alphabet::new(self.actions.iter().cloned()).map_err(|e| structure(format!("actions: {e}")))?;
        let outputs = Alphabet::new(self.outputs.iter().cloned()).map_err(|e| structure(format!("outputs: {e}")))?;
        let states = Alphabet::new(self.states.iter().cloned()).map_err(|e| structure(format!("states: {e}")))?;
        let n = states.len();
        let mut kernel = vec![DMatrix::zeros(n, n); actions.len() * outputs.len()];
        let mut seen = HashSet::new();
        for (i, r) in self.kernel.iter().enumerate() {
            let lookup = |ab: &Alphabet, label: &str, field: &str| {
                ab.index_of(label)
                    .ok_or_else(|| structure(format!("kernel[{i}].{field}: unknown symbol {label:?}")))
            };
            let from = lookup(&states, &r.from, "from")?;
            let to = lookup(&states, &r.to, "to")?;
            let a = lookup(&actions, &r.action, "action")?;
            let y = lookup(&outputs, &r.output, "output")?;
            if !seen.insert((from, a, y, to)) {
                return Err(structure(format!("kernel[{i}]: duplicate record")));
            }
            kernel[a * outputs.len() + y][(to, from)] = r.prob;
        }
        if let Some(beliefs) = &self.beliefs {
            if beliefs.len() != n {
                return Err(structure(format!("{} beliefs for {n} states", beliefs.len())));
            }
        }
        Transducer::new(
            self.name.clone(),
            self.states.clone(),
            actions,
            outputs,
            kernel,
            DVector::from_vec(self.initial.clone()),
        )
        .map_err(|e| structure(e.to_string()))
    }
}

impl GeneralizedDoc {
    pub fn from_generalized(g: &GeneralizedTransducer) -> Self {
        use crate::model::Realization;
        let mut matrices = Vec::new();
        for a in 0..g.actions().len() {
            for y in 0..g.outputs().len() {
                let m = g.matrix(a, y);
                matrices.push(MatrixRecord {
                    action: g.actions().symbol(a).to_string(),
                    output: g.outputs().symbol(y).to_string(),
                    rows: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
                });
            }
        }
        GeneralizedDoc {
            dims: g.dims(),
            actions: g.actions().symbols().to_vec(),
            outputs: g.outputs().symbols().to_vec(),
            u: g.u().iter().copied().collect(),
            v: g.v().iter().copied().collect(),
            matrices,
        }
    }

    pub fn to_generalized(&self, origin: &str) -> Result<GeneralizedTransducer> {
        let structure = |msg: String| Error::Structure(format!("{origin}: {msg}"));
        let actions = Alphabet::new(self.actions.iter().cloned()).map_err(|e| structure(format!("actions: {e}")))?;
        let outputs = Alphabet::new(self.outputs.iter().cloned()).map_err(|e| structure(format!("outputs: {e}")))?;
        let n = self.dims;
        if self.u.len() != n || self.v.len() != n {
            return Err(structure(format!("u and v must have dims = {n} entries")));
        }
        let mut matrices: Vec<Option<DMatrix<f64>>> = vec![None; actions.len() * outputs.len()];
        for (i, r) in self.matrices.iter().enumerate() {
            let a = actions
                .index_of(&r.action)
                .ok_or_else(|| structure(format!("matrices[{i}].action: unknown symbol {:?}", r.action)))?;
            let y = outputs
                .index_of(&r.output)
                .ok_or_else(|| structure(format!("matrices[{i}].output: unknown symbol {:?}", r.output)))?;
            if r.rows.len() != n || r.rows.iter().any(|row| row.len() != n) {
                return Err(structure(format!("matrices[{i}]: expected {n}×{n} rows")));
            }
            let slot = &mut matrices[a * outputs.len() + y];
            if slot.is_some() {
                return Err(structure(format!("matrices[{i}]: duplicate (action, output)")));
            }
            *slot = Some(DMatrix::from_fn(n, n, |row, col| r.rows[row][col]));
        }
        let matrices = matrices
            .into_iter()
            .map(|m| m.unwrap_or_else(|| DMatrix::zeros(n, n)))
            .collect();
        GeneralizedTransducer::new(
            actions,
            outputs,
            matrices,
            DVector::from_vec(self.u.clone()),
            DVector::from_vec(self.v.clone()),
        )
        .map_err(|e| structure(e.to_string()))
    }
}

impl HistoryDoc {
    pub fn from_history(h: &History, actions: &Alphabet, outputs: &Alphabet) -> Self {
        HistoryDoc {
            actions: h.actions().iter().map(|&a| actions.symbol(a).to_string()).collect(),
            outputs: h.outputs().iter().map(|&y| outputs.symbol(y).to_string()).collect(),
        }
    }

    pub fn to_history(&self, actions: &Alphabet, outputs: &Alphabet) -> Result<History> {
        let lookup = |ab: &Alphabet, s: &String, field: &str| {
            ab.index_of(s)
                .ok_or_else(|| Error::AlphabetMismatch(format!("{field}: unknown symbol {s:?}")))
        };
        let a = self
            .actions
            .iter()
            .map(|s| lookup(actions, s, "actions"))
            .collect::<Result<Vec<_>>>()?;
        let y = self
            .outputs
            .iter()
            .map(|s| lookup(outputs, s, "outputs"))
            .collect::<Result<Vec<_>>>()?;
        History::new(a, y)
    }
}

/// History-dependent action law: one weight vector per listed history,
/// uniform elsewhere.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolicyDoc {
    pub entries: Vec<PolicyEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub actions: Vec<String>,
    pub outputs: Vec<String>,
    pub weights: Vec<f64>,
}

impl PolicyDoc {
    pub fn to_policy(&self, actions: &Alphabet, outputs: &Alphabet) -> Result<Policy> {
        let mut table = HashMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            let h = HistoryDoc {
                actions: e.actions.clone(),
                outputs: e.outputs.clone(),
            }
            .to_history(actions, outputs)
            .map_err(|err| Error::Structure(format!("entries[{i}]: {err}")))?;
            if table.insert(h, e.weights.clone()).is_some() {
                return Err(Error::Structure(format!("entries[{i}]: duplicate history")));
            }
        }
        let policy = Policy::HistoryTable(table);
        policy.check(actions.len(), 1e-9)?;
        Ok(policy)
    }
}

impl ReverseKernelDoc {
    pub fn from_kernel(t: &Transducer, k: &ReverseKernel) -> Self {
        let st = |i: usize| t.states()[i].clone();
        let mut kernel = Vec::new();
        let mut undefined = Vec::new();
        for later in 0..t.n_states() {
            for a in 0..t.actions().len() {
                if !k.defined[a][later] {
                    undefined.push(UndefinedColumn {
                        action: t.actions().symbol(a).to_string(),
                        given: st(later),
                    });
                    continue;
                }
                for y in 0..t.outputs().len() {
                    for earlier in 0..t.n_states() {
                        let prob = k.prob(y, earlier, a, later);
                        if prob != 0.0 {
                            kernel.push(ReverseRecord {
                                given: st(later),
                                action: t.actions().symbol(a).to_string(),
                                output: t.outputs().symbol(y).to_string(),
                                to: st(earlier),
                                prob,
                            });
                        }
                    }
                }
            }
        }
        ReverseKernelDoc {
            name: t.name().to_string(),
            tau: k.tau,
            policy: k.policy.describe(),
            states: t.states().to_vec(),
            actions: t.actions().symbols().to_vec(),
            outputs: t.outputs().symbols().to_vec(),
            kernel,
            undefined,
        }
    }
}

pub fn transducer_to_string(t: &Transducer) -> String {
    to_pretty(&TransducerDoc::from_transducer(t))
}

pub fn transducer_from_str(text: &str, origin: &str) -> Result<Transducer> {
    parse_json::<TransducerDoc>(text, origin)?.to_transducer(origin)
}

pub fn read_transducer(path: &Path) -> Result<Transducer> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    transducer_from_str(&text, &path.display().to_string())
}

pub fn write_transducer(path: &Path, t: &Transducer) -> Result<()> {
    std::fs::write(path, transducer_to_string(t)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn generalized_to_string(g: &GeneralizedTransducer) -> String {
    to_pretty(&GeneralizedDoc::from_generalized(g))
}

pub fn generalized_from_str(text: &str, origin: &str) -> Result<GeneralizedTransducer> {
    parse_json::<GeneralizedDoc>(text, origin)?.to_generalized(origin)
}

pub fn history_from_str(text: &str, origin: &str, actions: &Alphabet, outputs: &Alphabet) -> Result<History> {
    parse_json::<HistoryDoc>(text, origin)?.to_history(actions, outputs)
}

/// Parses any JSON document type defined here, with `origin:line:column`
/// diagnostics.
pub fn parse_doc<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T> {
    parse_json(text, origin)
}
