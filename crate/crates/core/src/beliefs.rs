//! Bayesian belief updates over the states of a transducer and the
//! mixed-state presentation (MSP) they generate.
//!
//! A predictive belief `b_t` is the law of the memory state that will
//! produce the next output, given the history so far. For I-O Moore
//! machines the update splits into an observation step ([`update`]) and a
//! transition step ([`predict`]); the postdictive belief `d_t` sits between
//! the two.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{History, Realization, Transducer};
use crate::oracle::{self, EquivalenceVerdict};

/// A distribution over the states of some transducer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefState {
    weights: Vec<f64>,
}

impl BeliefState {
    /// Checks entries `≥ -tol` and total mass `1 ± tol`.
    pub fn new(weights: Vec<f64>, tol: f64) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !w.is_finite() || w < -tol) || (total - 1.0).abs() > tol {
            return Err(Error::Precondition(format!("{weights:?} is not a belief state")));
        }
        Ok(BeliefState { weights })
    }

    pub fn point(n: usize, state: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[state] = 1.0;
        BeliefState { weights }
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        BeliefState {
            weights: v.iter().copied().collect(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn l1(&self, other: &BeliefState) -> f64 {
        self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum()
    }
}

fn check_len(t: &Transducer, b: &BeliefState) -> Result<()> {
    if b.len() != t.n_states() {
        return Err(Error::Structure(format!(
            "belief has {} entries, transducer has {} states",
            b.len(),
            t.n_states()
        )));
    }
    Ok(())
}

fn check_symbol(len: usize, index: usize, what: &str) -> Result<()> {
    if index >= len {
        return Err(Error::AlphabetMismatch(format!("{what} index {index} out of range")));
    }
    Ok(())
}

fn normalized(v: DVector<f64>) -> Result<BeliefState> {
    let z = v.sum();
    if !(z > 0.0) {
        return Err(Error::ImpossibleObservation { normaliser: z });
    }
    Ok(BeliefState::from_vector(&(v / z)))
}

/// `b'(s') ∝ Σ_s κ(y, s' | a, s)·b(s)`.
pub fn predictive_update(t: &Transducer, b: &BeliefState, action: usize, output: usize) -> Result<BeliefState> {
    check_len(t, b)?;
    check_symbol(t.actions().len(), action, "action")?;
    check_symbol(t.outputs().len(), output, "output")?;
    normalized(t.matrix(action, output) * b.vector())
}

/// Predictive belief after a whole history, starting from the initial law.
pub fn belief_after(t: &Transducer, h: &History) -> Result<BeliefState> {
    let alpha = oracle::forward_vector(t, h)?;
    let z = alpha.sum();
    if !(z > 0.0) {
        return Err(Error::ImpossibleHistory { probability: z });
    }
    Ok(BeliefState::from_vector(&(alpha / z)))
}

fn require_io_moore(t: &Transducer) -> Result<()> {
    let class = t.classify_moore(crate::model::DEFAULT_TOL);
    if class != crate::model::MooreClass::IOMoore {
        return Err(Error::Precondition(format!(
            "predict/update needs an io-moore transducer, {} is {class}",
            t.name()
        )));
    }
    Ok(())
}

/// Transition step only: `Σ_s ν(s' | a, s)·d(s)`.
pub fn predict(t: &Transducer, d: &BeliefState, action: usize) -> Result<BeliefState> {
    require_io_moore(t)?;
    check_len(t, d)?;
    check_symbol(t.actions().len(), action, "action")?;
    Ok(BeliefState::from_vector(&(t.state_matrix(action) * d.vector())))
}

/// Observation step only: reweights by `μ(y | s)` and normalises.
pub fn update(t: &Transducer, prior: &BeliefState, output: usize) -> Result<BeliefState> {
    require_io_moore(t)?;
    check_len(t, prior)?;
    check_symbol(t.outputs().len(), output, "output")?;
    let v = DVector::from_fn(t.n_states(), |s, _| t.emission(0, s)[output] * prior.weights()[s]);
    normalized(v)
}

/// `d'(s') ∝ μ(y_next | s')·Σ_s ν(s' | a, s)·d(s)`.
pub fn postdictive_update(t: &Transducer, d: &BeliefState, action: usize, next_output: usize) -> Result<BeliefState> {
    update(t, &predict(t, d, action)?, next_output)
}

/// Limits on MSP construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MspCaps {
    pub max_states: usize,
    pub max_depth: usize,
}

impl Default for MspCaps {
    fn default() -> Self {
        MspCaps {
            max_states: 1000,
            max_depth: 200,
        }
    }
}

/// A transducer over deduplicated beliefs of a base transducer.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTransducer {
    pub base: Transducer,
    pub machine: Transducer,
    pub payload: Vec<BeliefState>,
    /// BFS depth at which each belief was first reached.
    pub depth: Vec<usize>,
}

impl BeliefTransducer {
    pub fn n_states(&self) -> usize {
        self.machine.n_states()
    }
}

impl Realization for BeliefTransducer {
    fn actions(&self) -> &crate::model::Alphabet {
        self.machine.actions()
    }
    fn outputs(&self) -> &crate::model::Alphabet {
        self.machine.outputs()
    }
    fn dim(&self) -> usize {
        self.machine.n_states()
    }
    fn matrix(&self, action: usize, output: usize) -> &DMatrix<f64> {
        self.machine.matrix(action, output)
    }
    fn left(&self) -> DVector<f64> {
        self.machine.left()
    }
    fn right(&self) -> &DVector<f64> {
        self.machine.right()
    }
}

/// MSP started from the initial distribution of `t`.
pub fn build_msp(t: &Transducer, tol: f64, caps: MspCaps) -> Result<BeliefTransducer> {
    let b0 = BeliefState::from_vector(t.initial());
    build_msp_from(t, &b0, tol, caps)
}

/// Breadth-first closure of the beliefs reachable from `b0`. Branches whose
/// emission mass is at most `tol` are dropped and the remaining column is
/// rescaled to total one; beliefs within L1 distance `tol` are merged.
pub fn build_msp_from(t: &Transducer, b0: &BeliefState, tol: f64, caps: MspCaps) -> Result<BeliefTransducer> {
    check_len(t, b0)?;
    let na = t.actions().len();
    let ny = t.outputs().len();
    let mut payload = vec![b0.clone()];
    let mut depth = vec![0usize];
    // (from, a, y, to, mass)
    let mut edges: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    let mut nearest = f64::INFINITY;
    while let Some(i) = queue.pop_front() {
        let b = payload[i].vector();
        for a in 0..na {
            let mut column: Vec<(usize, usize, f64)> = Vec::new();
            for y in 0..ny {
                let v = t.matrix(a, y) * &b;
                let mass = v.sum();
                if mass <= tol {
                    continue;
                }
                let next = BeliefState::from_vector(&(v / mass));
                let mut found = None;
                for (j, other) in payload.iter().enumerate() {
                    let d = other.l1(&next);
                    if d <= tol {
                        found = Some(j);
                        break;
                    }
                    nearest = nearest.min(d);
                }
                let j = match found {
                    Some(j) => j,
                    None => {
                        let next_depth = depth[i] + 1;
                        if payload.len() >= caps.max_states || next_depth > caps.max_depth {
                            return Err(Error::NonClosingMsp {
                                visited: payload.len(),
                                depth: next_depth,
                                nearest,
                            });
                        }
                        payload.push(next);
                        depth.push(next_depth);
                        queue.push_back(payload.len() - 1);
                        payload.len() - 1
                    }
                };
                column.push((y, j, mass));
            }
            let kept: f64 = column.iter().map(|c| c.2).sum();
            for (y, j, mass) in column {
                edges.push((i, a, y, j, mass / kept));
            }
        }
    }
    let k = payload.len();
    let mut kernel = vec![DMatrix::zeros(k, k); na * ny];
    for (from, a, y, to, mass) in edges {
        kernel[a * ny + y][(to, from)] += mass;
    }
    let mut initial = DVector::zeros(k);
    initial[0] = 1.0;
    let machine = Transducer::new(
        format!("{}-msp", t.name()),
        (0..k).map(|i| format!("b{i}")).collect(),
        t.actions().clone(),
        t.outputs().clone(),
        kernel,
        initial,
    )?;
    Ok(BeliefTransducer {
        base: t.clone(),
        machine,
        payload,
        depth,
    })
}

/// Interface comparison of a presentation against the transducer it claims
/// to present.
pub fn faithfulness<R: Realization>(candidate: &R, t: &Transducer, depth: usize, tol: f64) -> Result<EquivalenceVerdict> {
    oracle::equivalent(candidate, t, depth, tol)
}

pub fn is_faithful<R: Realization>(candidate: &R, t: &Transducer, depth: usize, tol: f64) -> Result<bool> {
    Ok(faithfulness(candidate, t, depth, tol)?.equivalent)
}

/// Every `(s, a, y)` with positive emission mass has exactly one successor.
pub fn is_unifilar(t: &Transducer, tol: f64) -> bool {
    let n = t.n_states();
    (0..t.actions().len()).all(|a| {
        (0..t.outputs().len()).all(|y| {
            let m = t.matrix(a, y);
            (0..n).all(|s| {
                let successors = (0..n).filter(|&to| m[(to, s)] > tol).count();
                let mass: f64 = m.column(s).sum();
                mass <= tol || successors == 1
            })
        })
    })
}

/// Successor of `s` under `(a, y)` in a unifilar machine, if the step has mass.
pub fn unifilar_successor(t: &Transducer, s: usize, action: usize, output: usize, tol: f64) -> Option<usize> {
    let m = t.matrix(action, output);
    if m.column(s).sum() <= tol {
        return None;
    }
    (0..t.n_states()).find(|&to| m[(to, s)] > tol)
}
