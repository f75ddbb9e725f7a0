//! Domain types: alphabets, histories, transducers and their generalised
//! (quasi-probabilistic) counterparts, plus the action policies used wherever
//! a law over actions is required.
//!
//! A [`Transducer`] stores one `n × n` substochastic matrix per
//! `(action, output)` pair. Entry `[i][j]` of the matrix for `(a, y)` is
//! `κ(y, s_i | a, s_j)`: columns are indexed by the current state and rows by
//! the next state, so a distribution over states is a column vector and one
//! step of the machine is a matrix-vector product.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance used whenever a caller does not pick one.
pub const DEFAULT_TOL: f64 = 1e-9;

/// An ordered set of distinct symbol labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Alphabet {
    pub fn new<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(Error::Structure("alphabet must not be empty".into()));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Structure(format!("duplicate symbol {s:?} in alphabet")));
            }
        }
        Ok(Alphabet { symbols, index })
    }

    /// Alphabet `{"0", "1", ..}` of the given size.
    pub fn numbered(len: usize) -> Result<Self> {
        Alphabet::new((0..len).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// Joint action/output history `h_{:t}`; step `τ` is `(actions[τ], outputs[τ])`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord, serde::Serialize)]
pub struct History {
    actions: Vec<usize>,
    outputs: Vec<usize>,
}

impl History {
    pub fn new(actions: Vec<usize>, outputs: Vec<usize>) -> Result<Self> {
        if actions.len() != outputs.len() {
            return Err(Error::Structure(format!(
                "history has {} actions but {} outputs",
                actions.len(),
                outputs.len()
            )));
        }
        Ok(History { actions, outputs })
    }

    pub fn empty() -> Self {
        History::default()
    }

    /// Builds a history from `(action, output)` pairs.
    pub fn from_steps(steps: &[(usize, usize)]) -> Self {
        History {
            actions: steps.iter().map(|s| s.0).collect(),
            outputs: steps.iter().map(|s| s.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn steps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.actions.iter().copied().zip(self.outputs.iter().copied())
    }

    pub fn push(&mut self, action: usize, output: usize) {
        self.actions.push(action);
        self.outputs.push(output);
    }

    pub fn pop(&mut self) -> Option<(usize, usize)> {
        Some((self.actions.pop()?, self.outputs.pop()?))
    }

    pub fn extended(&self, action: usize, output: usize) -> History {
        let mut h = self.clone();
        h.push(action, output);
        h
    }

    pub fn prefix(&self, len: usize) -> History {
        History {
            actions: self.actions[..len].to_vec(),
            outputs: self.outputs[..len].to_vec(),
        }
    }

    pub fn suffix(&self, start: usize) -> History {
        History {
            actions: self.actions[start..].to_vec(),
            outputs: self.outputs[start..].to_vec(),
        }
    }

    pub fn concat(&self, other: &History) -> History {
        let mut h = self.clone();
        h.actions.extend_from_slice(&other.actions);
        h.outputs.extend_from_slice(&other.outputs);
        h
    }

    /// Checks that every symbol lies inside alphabets of the given sizes.
    pub fn check_alphabets(&self, n_actions: usize, n_outputs: usize) -> Result<()> {
        if let Some(a) = self.actions.iter().find(|&&a| a >= n_actions) {
            return Err(Error::AlphabetMismatch(format!(
                "action index {a} outside alphabet of size {n_actions}"
            )));
        }
        if let Some(y) = self.outputs.iter().find(|&&y| y >= n_outputs) {
            return Err(Error::AlphabetMismatch(format!(
                "output index {y} outside alphabet of size {n_outputs}"
            )));
        }
        Ok(())
    }

    /// Renders the history with symbol labels, e.g. `((1,0),(0,1))`.
    pub fn render(&self, actions: &Alphabet, outputs: &Alphabet) -> String {
        let a: Vec<&str> = self.actions.iter().map(|&i| actions.symbol(i)).collect();
        let y: Vec<&str> = self.outputs.iter().map(|&i| outputs.symbol(i)).collect();
        format!("(({}),({}))", a.join(","), y.join(","))
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a: Vec<String> = self.actions.iter().map(ToString::to_string).collect();
        let y: Vec<String> = self.outputs.iter().map(ToString::to_string).collect();
        write!(f, "(({}),({}))", a.join(","), y.join(","))
    }
}

/// Anything that assigns word probabilities through a product of matrices
/// sandwiched between a left functional and a right vector:
/// `left() ᵀ · M(y_t|a_t) ⋯ M(y_0|a_0) · right()`.
pub trait Realization {
    fn actions(&self) -> &Alphabet;
    fn outputs(&self) -> &Alphabet;
    fn dim(&self) -> usize;
    fn matrix(&self, action: usize, output: usize) -> &DMatrix<f64>;
    fn left(&self) -> DVector<f64>;
    fn right(&self) -> &DVector<f64>;
}

/// How a [`Transducer`] classifies under the Moore factorisation tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum MooreClass {
    Mealy,
    InputMoore,
    OutputMoore,
    IOMoore,
}

impl MooreClass {
    pub fn is_input_moore(self) -> bool {
        matches!(self, MooreClass::InputMoore | MooreClass::IOMoore)
    }

    pub fn is_output_moore(self) -> bool {
        matches!(self, MooreClass::OutputMoore | MooreClass::IOMoore)
    }
}

impl fmt::Display for MooreClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MooreClass::Mealy => "mealy",
            MooreClass::InputMoore => "input-moore",
            MooreClass::OutputMoore => "output-moore",
            MooreClass::IOMoore => "io-moore",
        };
        f.write_str(s)
    }
}

/// A single probabilistic defect found by [`Transducer::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Column `(action, state)` carries total mass `total` instead of 1.
    Incomplete {
        action: usize,
        state: usize,
        total: f64,
    },
    NegativeEntry {
        action: usize,
        output: usize,
        from: usize,
        to: usize,
        value: f64,
    },
    EntryAboveOne {
        action: usize,
        output: usize,
        from: usize,
        to: usize,
        value: f64,
    },
    NonFinite {
        action: usize,
        output: usize,
        from: usize,
        to: usize,
    },
    InitialEntry {
        state: usize,
        value: f64,
    },
    InitialMass {
        total: f64,
    },
}

impl Violation {
    /// Missing mass of an incomplete column (`1 - total`).
    pub fn deficit(&self) -> Option<f64> {
        match self {
            Violation::Incomplete { total, .. } => Some(1.0 - total),
            _ => None,
        }
    }

    pub fn describe(&self, t: &Transducer) -> String {
        let st = |i: usize| t.states()[i].as_str();
        let act = |i: usize| t.actions().symbol(i);
        let out = |i: usize| t.outputs().symbol(i);
        match *self {
            Violation::Incomplete {
                action,
                state,
                total,
            } => format!(
                "column (a={}, s={}) sums to {total} (deficit {:e})",
                act(action),
                st(state),
                1.0 - total
            ),
            Violation::NegativeEntry {
                action,
                output,
                from,
                to,
                value,
            } => format!(
                "negative entry κ({}, {} | {}, {}) = {value}",
                out(output),
                st(to),
                act(action),
                st(from)
            ),
            Violation::EntryAboveOne {
                action,
                output,
                from,
                to,
                value,
            } => format!(
                "entry above one κ({}, {} | {}, {}) = {value}",
                out(output),
                st(to),
                act(action),
                st(from)
            ),
            Violation::NonFinite {
                action,
                output,
                from,
                to,
            } => format!(
                "non-finite entry κ({}, {} | {}, {})",
                out(output),
                st(to),
                act(action),
                st(from)
            ),
            Violation::InitialEntry { state, value } => {
                format!("initial entry for {} is {value}", st(state))
            }
            Violation::InitialMass { total } => format!("initial distribution sums to {total}"),
        }
    }
}

/// Outcome of a validation pass; an empty list means the model is valid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A finite stochastic transducer with a time-homogeneous kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Transducer {
    name: String,
    states: Vec<String>,
    actions: Alphabet,
    outputs: Alphabet,
    kernel: Vec<DMatrix<f64>>,
    initial: DVector<f64>,
}

impl Transducer {
    /// Builds a transducer from its substochastic matrices, ordered
    /// action-major: `kernel[a * |Y| + y]`.
    ///
    /// Only the shape is checked here; use [`Transducer::validate`] for the
    /// probabilistic constraints.
    pub fn new(
        name: impl Into<String>,
        states: Vec<String>,
        actions: Alphabet,
        outputs: Alphabet,
        kernel: Vec<DMatrix<f64>>,
        initial: DVector<f64>,
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::Structure("transducer needs at least one state".into()));
        }
        let mut seen = HashMap::new();
        for (i, s) in states.iter().enumerate() {
            if seen.insert(s.as_str(), i).is_some() {
                return Err(Error::Structure(format!("duplicate state label {s:?}")));
            }
        }
        let expected = actions.len() * outputs.len();
        if kernel.len() != expected {
            return Err(Error::Structure(format!(
                "kernel has {} matrices, expected |A|·|Y| = {expected}",
                kernel.len()
            )));
        }
        if let Some(m) = kernel.iter().find(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Structure(format!(
                "kernel matrix is {}×{}, expected {n}×{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        if initial.len() != n {
            return Err(Error::Structure(format!(
                "initial distribution has {} entries, expected {n}",
                initial.len()
            )));
        }
        Ok(Transducer {
            name: name.into(),
            states,
            actions,
            outputs,
            kernel,
            initial,
        })
    }

    /// Builds a transducer from a kernel function `f(y, to, a, from) = κ(y, to | a, from)`.
    pub fn from_fn(
        name: impl Into<String>,
        states: Vec<String>,
        actions: Alphabet,
        outputs: Alphabet,
        initial: Vec<f64>,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let n = states.len();
        let mut kernel = Vec::with_capacity(actions.len() * outputs.len());
        for a in 0..actions.len() {
            for y in 0..outputs.len() {
                kernel.push(DMatrix::from_fn(n, n, |to, from| f(y, to, a, from)));
            }
        }
        Transducer::new(name, states, actions, outputs, kernel, DVector::from_vec(initial))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn actions(&self) -> &Alphabet {
        &self.actions
    }

    pub fn outputs(&self) -> &Alphabet {
        &self.outputs
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.initial
    }

    /// Replaces the initial distribution; the length must match.
    pub fn with_initial(mut self, initial: DVector<f64>) -> Result<Self> {
        if initial.len() != self.n_states() {
            return Err(Error::Structure(format!(
                "initial distribution has {} entries, expected {}",
                initial.len(),
                self.n_states()
            )));
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn kernel(&self) -> &[DMatrix<f64>] {
        &self.kernel
    }

    /// `T^(y|a)`.
    pub fn matrix(&self, action: usize, output: usize) -> &DMatrix<f64> {
        &self.kernel[action * self.outputs.len() + output]
    }

    /// `κ(y, to | a, from)`.
    pub fn prob(&self, output: usize, to: usize, action: usize, from: usize) -> f64 {
        self.matrix(action, output)[(to, from)]
    }

    pub fn set_prob(&mut self, output: usize, to: usize, action: usize, from: usize, value: f64) {
        let ny = self.outputs.len();
        self.kernel[action * ny + output][(to, from)] = value;
    }

    /// Output marginal `p(y | a, s)`.
    pub fn emission(&self, action: usize, state: usize) -> Vec<f64> {
        (0..self.outputs.len())
            .map(|y| self.matrix(action, y).column(state).sum())
            .collect()
    }

    /// State marginal `p(s' | a, s)`.
    pub fn transition(&self, action: usize, state: usize) -> Vec<f64> {
        let n = self.n_states();
        let mut out = vec![0.0; n];
        for y in 0..self.outputs.len() {
            let m = self.matrix(action, y);
            for (to, o) in out.iter_mut().enumerate() {
                *o += m[(to, state)];
            }
        }
        out
    }

    /// `M_a = Σ_y T^(y|a)`, the output-marginalised state dynamics.
    pub fn state_matrix(&self, action: usize) -> DMatrix<f64> {
        let n = self.n_states();
        (0..self.outputs.len()).fold(DMatrix::zeros(n, n), |acc, y| acc + self.matrix(action, y))
    }

    /// The single initial state, if the initial distribution is a point mass.
    pub fn deterministic_start(&self, tol: f64) -> Option<usize> {
        let support: Vec<usize> = (0..self.n_states()).filter(|&i| self.initial[i] > tol).collect();
        match support.as_slice() {
            [s] => Some(*s),
            _ => None,
        }
    }

    /// Lists every probabilistic defect; structural soundness is guaranteed
    /// by construction.
    pub fn validate(&self, tol: f64) -> ValidationReport {
        let mut violations = Vec::new();
        let n = self.n_states();
        for a in 0..self.actions.len() {
            for y in 0..self.outputs.len() {
                let m = self.matrix(a, y);
                for from in 0..n {
                    for to in 0..n {
                        let value = m[(to, from)];
                        if !value.is_finite() {
                            violations.push(Violation::NonFinite {
                                action: a,
                                output: y,
                                from,
                                to,
                            });
                        } else if value < -tol {
                            violations.push(Violation::NegativeEntry {
                                action: a,
                                output: y,
                                from,
                                to,
                                value,
                            });
                        } else if value > 1.0 + tol {
                            violations.push(Violation::EntryAboveOne {
                                action: a,
                                output: y,
                                from,
                                to,
                                value,
                            });
                        }
                    }
                }
            }
            for s in 0..n {
                let total: f64 = self.transition(a, s).iter().sum();
                if (total - 1.0).abs() > tol {
                    violations.push(Violation::Incomplete {
                        action: a,
                        state: s,
                        total,
                    });
                }
            }
        }
        for (state, &value) in self.initial.iter().enumerate() {
            if !value.is_finite() || value < -tol || value > 1.0 + tol {
                violations.push(Violation::InitialEntry { state, value });
            }
        }
        let total = self.initial.sum();
        if (total - 1.0).abs() > tol {
            violations.push(Violation::InitialMass { total });
        }
        ValidationReport { violations }
    }

    /// Moore classification by factorisation tests on every `(a, s)` row.
    pub fn classify_moore(&self, tol: f64) -> MooreClass {
        let n = self.n_states();
        let ny = self.outputs.len();
        let mut output_moore = true;
        let mut input_moore = true;
        for s in 0..n {
            let reference = self.emission(0, s);
            for a in 0..self.actions.len() {
                let mu = self.emission(a, s);
                let nu = self.transition(a, s);
                if mu.iter().zip(&reference).any(|(x, r)| (x - r).abs() > tol) {
                    input_moore = false;
                }
                'joint: for (y, &mu_y) in mu.iter().enumerate().take(ny) {
                    for (to, &nu_to) in nu.iter().enumerate() {
                        if (self.prob(y, to, a, s) - mu_y * nu_to).abs() > tol {
                            output_moore = false;
                            break 'joint;
                        }
                    }
                }
            }
        }
        match (input_moore, output_moore) {
            (true, true) => MooreClass::IOMoore,
            (true, false) => MooreClass::InputMoore,
            (false, true) => MooreClass::OutputMoore,
            (false, false) => MooreClass::Mealy,
        }
    }

    /// Induced transducer of a POMDP: `κ(y, s' | a, s) = τ(s' | s, a) · μ(y | s)`.
    ///
    /// `transition[a]` is row-stochastic with entry `[s][s']`, `observation`
    /// has entry `[s][y]`. Labels are `s0, s1, ..` for states and numbers for
    /// actions and observations.
    pub fn from_pomdp(
        transition: &[DMatrix<f64>],
        observation: &DMatrix<f64>,
        initial: &[f64],
        tol: f64,
    ) -> Result<Self> {
        let n = initial.len();
        if transition.is_empty() {
            return Err(Error::Structure("POMDP needs at least one action".into()));
        }
        if let Some(m) = transition.iter().find(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Structure(format!(
                "transition matrix is {}×{}, expected {n}×{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        if observation.nrows() != n || observation.ncols() == 0 {
            return Err(Error::Structure(format!(
                "observation matrix is {}×{}, expected {n}×|Y|",
                observation.nrows(),
                observation.ncols()
            )));
        }
        let is_dist = |row: &[f64]| {
            row.iter().all(|&p| p >= -tol && p <= 1.0 + tol)
                && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        };
        for (a, m) in transition.iter().enumerate() {
            for s in 0..n {
                let row: Vec<f64> = m.row(s).iter().copied().collect();
                if !is_dist(&row) {
                    return Err(Error::Precondition(format!(
                        "transition row (a={a}, s={s}) is not a distribution"
                    )));
                }
            }
        }
        for s in 0..n {
            let row: Vec<f64> = observation.row(s).iter().copied().collect();
            if !is_dist(&row) {
                return Err(Error::Precondition(format!(
                    "observation row s={s} is not a distribution"
                )));
            }
        }
        if !is_dist(initial) {
            return Err(Error::Precondition("initial vector is not a distribution".into()));
        }
        Transducer::from_fn(
            "pomdp",
            (0..n).map(|i| format!("s{i}")).collect(),
            Alphabet::numbered(transition.len())?,
            Alphabet::numbered(observation.ncols())?,
            initial.to_vec(),
            |y, to, a, from| transition[a][(from, to)] * observation[(from, y)],
        )
    }
}

impl Realization for Transducer {
    fn actions(&self) -> &Alphabet {
        &self.actions
    }
    fn outputs(&self) -> &Alphabet {
        &self.outputs
    }
    fn dim(&self) -> usize {
        self.n_states()
    }
    fn matrix(&self, action: usize, output: usize) -> &DMatrix<f64> {
        Transducer::matrix(self, action, output)
    }
    fn left(&self) -> DVector<f64> {
        DVector::from_element(self.n_states(), 1.0)
    }
    fn right(&self) -> &DVector<f64> {
        &self.initial
    }
}

/// A realization over quasi-distributions: real matrices `A^(y|a)` with
/// left functional `u` and right vector `v`, entries possibly negative.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedTransducer {
    actions: Alphabet,
    outputs: Alphabet,
    matrices: Vec<DMatrix<f64>>,
    u: DVector<f64>,
    v: DVector<f64>,
}

impl GeneralizedTransducer {
    /// `matrices` is ordered action-major like [`Transducer::new`].
    pub fn new(
        actions: Alphabet,
        outputs: Alphabet,
        matrices: Vec<DMatrix<f64>>,
        u: DVector<f64>,
        v: DVector<f64>,
    ) -> Result<Self> {
        let n = v.len();
        if n == 0 {
            return Err(Error::Structure("generalised transducer needs dims ≥ 1".into()));
        }
        if u.len() != n {
            return Err(Error::Structure(format!(
                "u has {} entries, v has {n}",
                u.len()
            )));
        }
        let expected = actions.len() * outputs.len();
        if matrices.len() != expected {
            return Err(Error::Structure(format!(
                "{} matrices given, expected |A|·|Y| = {expected}",
                matrices.len()
            )));
        }
        if let Some(m) = matrices.iter().find(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Structure(format!(
                "matrix is {}×{}, expected {n}×{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(GeneralizedTransducer {
            actions,
            outputs,
            matrices,
            u,
            v,
        })
    }

    /// The same transducer seen as a generalised one, `u = 1` and `v = p`.
    pub fn from_transducer(t: &Transducer) -> Self {
        GeneralizedTransducer {
            actions: t.actions().clone(),
            outputs: t.outputs().clone(),
            matrices: t.kernel().to_vec(),
            u: DVector::from_element(t.n_states(), 1.0),
            v: t.initial().clone(),
        }
    }

    pub fn dims(&self) -> usize {
        self.v.len()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }
}

impl Realization for GeneralizedTransducer {
    fn actions(&self) -> &Alphabet {
        &self.actions
    }
    fn outputs(&self) -> &Alphabet {
        &self.outputs
    }
    fn dim(&self) -> usize {
        self.dims()
    }
    fn matrix(&self, action: usize, output: usize) -> &DMatrix<f64> {
        &self.matrices[action * self.outputs.len() + output]
    }
    fn left(&self) -> DVector<f64> {
        self.u.clone()
    }
    fn right(&self) -> &DVector<f64> {
        &self.v
    }
}

/// Law over actions, consulted wherever a result depends on how actions are
/// chosen (state marginals, reverse kernels, sampling).
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    IidUniform,
    IidWeighted(Vec<f64>),
    /// Action distribution looked up by the history so far; histories not in
    /// the table fall back to the uniform law.
    HistoryTable(HashMap<History, Vec<f64>>),
}

impl Default for Policy {
    fn default() -> Self {
        Policy::IidUniform
    }
}

impl Policy {
    pub fn is_iid(&self) -> bool {
        !matches!(self, Policy::HistoryTable(_))
    }

    /// Checks every distribution the policy can emit.
    pub fn check(&self, n_actions: usize, tol: f64) -> Result<()> {
        let check_dist = |w: &[f64]| -> Result<()> {
            if w.len() != n_actions {
                return Err(Error::Structure(format!(
                    "policy distribution has {} entries, expected {n_actions}",
                    w.len()
                )));
            }
            if w.iter().any(|&p| !p.is_finite() || p < -tol)
                || (w.iter().sum::<f64>() - 1.0).abs() > tol
            {
                return Err(Error::Precondition(format!(
                    "policy weights {w:?} are not a distribution"
                )));
            }
            Ok(())
        };
        match self {
            Policy::IidUniform => Ok(()),
            Policy::IidWeighted(w) => check_dist(w),
            Policy::HistoryTable(table) => table.values().try_for_each(|w| check_dist(w)),
        }
    }

    /// Distribution over actions given the realised history.
    pub fn distribution(&self, n_actions: usize, past: &History) -> Vec<f64> {
        let uniform = || vec![1.0 / n_actions as f64; n_actions];
        match self {
            Policy::IidUniform => uniform(),
            Policy::IidWeighted(w) => w.clone(),
            Policy::HistoryTable(table) => table.get(past).cloned().unwrap_or_else(uniform),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Policy::IidUniform => "uniform".into(),
            Policy::IidWeighted(w) => {
                let parts: Vec<String> = w.iter().map(|p| p.to_string()).collect();
                format!("weighted:{}", parts.join(","))
            }
            Policy::HistoryTable(table) => format!("history-table({} entries)", table.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn alphabet_rejects_duplicates_and_empty() {
        assert!(Alphabet::new(["a", "b", "a"]).is_err());
        assert!(Alphabet::new(Vec::<String>::new()).is_err());
        let ab = Alphabet::new(["x", "y"]).unwrap();
        assert_eq!(ab.index_of("y"), Some(1));
        assert_eq!(ab.symbol(0), "x");
    }

    #[test]
    fn history_lengths_must_match() {
        assert!(History::new(vec![0, 1], vec![0]).is_err());
        let h = History::from_steps(&[(1, 0), (0, 1)]);
        assert_eq!(h.to_string(), "((1,0),(0,1))");
        assert!(h.check_alphabets(2, 2).is_ok());
        assert!(h.check_alphabets(1, 2).is_err());
    }

    #[test]
    fn structural_errors_are_hard_errors() {
        let ab = Alphabet::numbered(2).unwrap();
        let err = Transducer::new(
            "bad",
            vec!["s0".into(), "s1".into()],
            ab.clone(),
            ab,
            vec![DMatrix::zeros(2, 3); 4],
            DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn fixture_a_validates() {
        assert!(fixtures::parity_flip().validate(DEFAULT_TOL).is_valid());
    }

    #[test]
    fn single_deficit_column_is_reported() {
        let mut t = fixtures::parity_flip();
        t.set_prob(0, 0, 0, 0, 0.9);
        let report = t.validate(DEFAULT_TOL);
        assert_eq!(report.violations.len(), 1);
        match report.violations[0] {
            Violation::Incomplete { action, state, .. } => {
                assert_eq!((action, state), (0, 0));
            }
            ref v => panic!("unexpected violation {v:?}"),
        }
        let deficit = report.violations[0].deficit().unwrap();
        assert!((deficit - 0.1).abs() < 1e-12);
    }

    #[test]
    fn fixture_c_validates() {
        // column sums of the averaged row are 0.5·1 + 0.5·1
        let t = fixtures::mixture_hmm();
        for s in 0..3 {
            let total: f64 = t.transition(0, s).iter().sum();
            assert!((total - 1.0).abs() < 1e-15);
        }
        assert!(t.validate(DEFAULT_TOL).is_valid());
    }

    #[test]
    fn moore_classes_of_fixtures() {
        assert_eq!(fixtures::parity_flip().classify_moore(DEFAULT_TOL), MooreClass::IOMoore);
        // one action makes the emission trivially action-independent; the
        // mixed row does not factorise
        assert_eq!(fixtures::mixture_hmm().classify_moore(DEFAULT_TOL), MooreClass::InputMoore);
        assert_eq!(fixtures::delay_channel().classify_moore(DEFAULT_TOL), MooreClass::IOMoore);
    }

    #[test]
    fn output_moore_but_not_input_moore() {
        // emission depends on the action, transition does not depend on the output
        let ab = Alphabet::numbered(2).unwrap();
        let t = Transducer::from_fn("om", vec!["s".into()], ab.clone(), ab, vec![1.0], |y, _, a, _| {
            if y == a {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        assert_eq!(t.classify_moore(DEFAULT_TOL), MooreClass::OutputMoore);
    }

    #[test]
    fn pomdp_identity_emits_zero_forever() {
        let id = DMatrix::identity(2, 2);
        let t = Transducer::from_pomdp(&[id.clone(), id.clone()], &id, &[1.0, 0.0], DEFAULT_TOL).unwrap();
        assert!(t.validate(DEFAULT_TOL).is_valid());
        for a in 0..2 {
            assert_eq!(t.emission(a, 0), vec![1.0, 0.0]);
            assert_eq!(t.transition(a, 0), vec![1.0, 0.0]);
        }
    }

    #[test]
    fn pomdp_reproduces_fixture_a() {
        let stay = DMatrix::identity(2, 2);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let obs = DMatrix::identity(2, 2);
        let t = Transducer::from_pomdp(&[stay, swap], &obs, &[1.0, 0.0], DEFAULT_TOL).unwrap();
        assert_eq!(t.kernel(), fixtures::parity_flip().kernel());
    }

    #[test]
    fn pomdp_dimension_mismatch() {
        let id = DMatrix::identity(2, 2);
        let err = Transducer::from_pomdp(&[DMatrix::identity(3, 3)], &id, &[1.0, 0.0], DEFAULT_TOL);
        assert!(matches!(err, Err(Error::Structure(_))));
    }

    #[test]
    fn policy_distributions() {
        let p = Policy::IidWeighted(vec![0.25, 0.75]);
        assert!(p.check(2, DEFAULT_TOL).is_ok());
        assert!(Policy::IidWeighted(vec![0.5, 0.6]).check(2, DEFAULT_TOL).is_err());
        let mut table = HashMap::new();
        table.insert(History::empty(), vec![1.0, 0.0]);
        let p = Policy::HistoryTable(table);
        assert_eq!(p.distribution(2, &History::empty()), vec![1.0, 0.0]);
        assert_eq!(p.distribution(2, &History::from_steps(&[(0, 0)])), vec![0.5, 0.5]);
    }
}
