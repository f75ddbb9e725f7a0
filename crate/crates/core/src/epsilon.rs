//! ε-transducers: the minimal predictive presentation of an interface.
//!
//! The main route collapses bisimilar beliefs of the mixed-state
//! presentation. [`epsilon_from_histories`] gets there independently by
//! clustering histories whose conditional futures agree, which is used to
//! cross-check the first route.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::beliefs::{self, BeliefState, MspCaps};
use crate::error::{Error, Result};
use crate::minimize::{coarsest_bisimulation, minimize_bisim};
use crate::model::{History, Realization, Transducer};
use crate::oracle::{self, word_count, Budget};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Provenance {
    MspBisimulation {
        msp_states: usize,
        tol: f64,
        caps: MspCaps,
        faithful_depth: usize,
    },
    HistoryClustering {
        hist_depth: usize,
        future_depth: usize,
        tol: f64,
        stabilized: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonMachine {
    pub machine: Transducer,
    pub provenance: Provenance,
    /// Belief over source states carried by each ε-state.
    pub beliefs: Vec<BeliefState>,
}

impl EpsilonMachine {
    pub fn n_states(&self) -> usize {
        self.machine.n_states()
    }
}

/// `minimize_bisim(build_msp(t))`, with unifilarity, minimality and
/// faithfulness at depth `2n` asserted before returning.
pub fn epsilon_transducer(t: &Transducer, tol: f64, caps: MspCaps) -> Result<EpsilonMachine> {
    let msp = beliefs::build_msp(t, tol, caps)?;
    let part = coarsest_bisimulation(&msp.machine, tol);
    let machine = minimize_bisim(&msp.machine, tol).with_name(format!("{}-epsilon", t.name()));
    let beliefs = part.classes().iter().map(|c| msp.payload[c[0]].clone()).collect();
    if !beliefs::is_unifilar(&machine, tol) {
        return Err(Error::Invariant("ε-transducer is not unifilar".into()));
    }
    if !coarsest_bisimulation(&machine, tol).is_discrete() {
        return Err(Error::Invariant("ε-transducer still has bisimilar states".into()));
    }
    let depth = 2 * t.n_states();
    let verdict = oracle::equivalent(&machine, t, depth, tol.max(1e-9))?;
    if !verdict.equivalent {
        return Err(Error::Invariant(format!(
            "ε-transducer is not faithful at depth {depth}: {:?}",
            verdict.counterexample
        )));
    }
    Ok(EpsilonMachine {
        machine,
        provenance: Provenance::MspBisimulation {
            msp_states: msp.n_states(),
            tol,
            caps,
            faithful_depth: depth,
        },
        beliefs,
    })
}

/// Histories grouped by their conditional futures, with the machine they
/// induce.
#[derive(Debug, Clone)]
pub struct HistoryClustering {
    /// Member histories of each class, shortest first.
    pub classes: Vec<Vec<History>>,
    /// Class count among histories of length `≤ L`, for `L = 0..=hist_depth`.
    pub counts: Vec<usize>,
    /// False if the count still grew at the last level or closing the
    /// induced machine needed classes not seen among the enumerated histories.
    pub stabilized: bool,
    pub epsilon: EpsilonMachine,
}

impl HistoryClustering {
    pub fn class_of(&self, h: &History) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(h))
    }
}

/// Values `p(f | h)` for every future word `f` of length `1..=future_depth`,
/// in depth-first order, from the predictive belief after `h`.
fn future_signature(t: &Transducer, belief: &DVector<f64>, future_depth: usize) -> Vec<f64> {
    let mut sig = Vec::new();
    let restarted = t.clone().with_initial(belief.clone()).expect("belief has one entry per state");
    oracle::for_each_word(&restarted, future_depth, |_, alpha| sig.push(alpha.sum()));
    sig
}

fn matches(x: &[f64], y: &[f64], tol: f64) -> bool {
    x.iter().zip(y).all(|(a, b)| (a - b).abs() <= tol)
}

const CLOSURE_FACTOR: usize = 4;

/// Clusters the positive-probability histories of length `≤ hist_depth` by
/// their conditional futures up to `future_depth`, then builds the machine
/// whose transitions follow one-step extensions of each class's shortest
/// member.
pub fn epsilon_from_histories(
    t: &Transducer,
    hist_depth: usize,
    future_depth: usize,
    tol: f64,
    budget: Budget,
) -> Result<HistoryClustering> {
    let symbols = t.actions().len() * t.outputs().len();
    let cost = word_count(symbols, hist_depth)
        .saturating_add(1)
        .saturating_mul(word_count(symbols, future_depth));
    budget.check(cost)?;
    let (na, ny) = (t.actions().len(), t.outputs().len());

    // breadth-first, so members arrive in shortlex order
    let mut classes: Vec<Vec<History>> = Vec::new();
    let mut reps: Vec<(Vec<f64>, DVector<f64>)> = Vec::new();
    let mut counts = Vec::new();
    let mut layer = vec![(History::empty(), t.initial().clone())];
    for len in 0..=hist_depth {
        let mut next = Vec::new();
        for (h, alpha) in layer {
            let belief = &alpha / alpha.sum();
            let sig = future_signature(t, &belief, future_depth);
            match reps.iter().position(|(r, _)| matches(r, &sig, tol)) {
                Some(c) => classes[c].push(h.clone()),
                None => {
                    classes.push(vec![h.clone()]);
                    reps.push((sig, belief));
                }
            }
            if len < hist_depth {
                for a in 0..na {
                    for y in 0..ny {
                        let v = t.matrix(a, y) * &alpha;
                        if v.sum() > tol {
                            next.push((h.extended(a, y), v));
                        }
                    }
                }
            }
        }
        counts.push(classes.len());
        layer = next;
    }
    let enumerated = classes.len();
    let mut stabilized = counts.len() < 2 || counts[counts.len() - 1] == counts[counts.len() - 2];

    // close the transition structure from each class's representative belief
    let mut edges: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    let mut queue: VecDeque<usize> = (0..classes.len()).collect();
    let limit = CLOSURE_FACTOR * enumerated.max(1);
    while let Some(c) = queue.pop_front() {
        let belief = reps[c].1.clone();
        for a in 0..na {
            for y in 0..ny {
                let v = t.matrix(a, y) * &belief;
                let mass = v.sum();
                if mass <= tol {
                    continue;
                }
                let nb = v / mass;
                let sig = future_signature(t, &nb, future_depth);
                let target = match reps.iter().position(|(r, _)| matches(r, &sig, tol)) {
                    Some(j) => j,
                    None => {
                        stabilized = false;
                        if reps.len() >= limit {
                            return Err(Error::Precondition(format!(
                                "history clustering did not close within {limit} classes; raise the depths"
                            )));
                        }
                        let rep = classes[c][0].extended(a, y);
                        classes.push(vec![rep]);
                        reps.push((sig, nb));
                        queue.push_back(reps.len() - 1);
                        reps.len() - 1
                    }
                };
                edges.push((c, a, y, target, mass));
            }
        }
    }
    let k = classes.len();
    let mut kernel = vec![DMatrix::zeros(k, k); na * ny];
    for (from, a, y, to, mass) in edges {
        kernel[a * ny + y][(to, from)] += mass;
    }
    let mut initial = DVector::zeros(k);
    initial[0] = 1.0;
    let machine = Transducer::new(
        format!("{}-histories", t.name()),
        (0..k).map(|i| format!("c{i}")).collect(),
        t.actions().clone(),
        t.outputs().clone(),
        kernel,
        initial,
    )?;
    Ok(HistoryClustering {
        classes,
        counts,
        stabilized,
        epsilon: EpsilonMachine {
            machine,
            provenance: Provenance::HistoryClustering {
                hist_depth,
                future_depth,
                tol,
                stabilized,
            },
            beliefs: reps.iter().map(|(_, b)| BeliefState::from_vector(b)).collect(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictiveVerdict {
    pub faithful: bool,
    pub observable: bool,
    /// A positive-probability history after which the candidate's state is
    /// not determined.
    pub ambiguous_history: Option<History>,
}

impl PredictiveVerdict {
    pub fn holds(&self) -> bool {
        self.faithful && self.observable
    }
}

/// Faithfulness of `candidate` to `reference`, plus observability: after
/// every positive-probability history of length `≤ depth` (the empty one
/// included) the candidate's state is determined. The reported ambiguous
/// history is a shortest one.
pub fn check_predictive(candidate: &Transducer, reference: &Transducer, depth: usize, tol: f64) -> Result<PredictiveVerdict> {
    let faithful = oracle::equivalent(candidate, reference, depth, tol)?.equivalent;
    let determined = |alpha: &DVector<f64>| {
        let total = alpha.sum();
        total <= tol || alpha.iter().filter(|&&p| p / total > tol).count() == 1
    };
    let mut ambiguous = None;
    if !determined(candidate.initial()) {
        ambiguous = Some(History::empty());
    } else {
        oracle::for_each_word(candidate, depth, |h, alpha| {
            let shorter = match &ambiguous {
                None => true,
                Some(best) => (h.len(), h) < (best.len(), best),
            };
            if shorter && !determined(alpha) {
                ambiguous = Some(h.clone());
            }
        });
    }
    Ok(PredictiveVerdict {
        faithful,
        observable: ambiguous.is_none(),
        ambiguous_history: ambiguous,
    })
}

/// For a unifilar machine with a deterministic start, labels every reachable
/// state by the shortlex-least history reaching it.
pub fn canonical_labels(t: &Transducer, tol: f64) -> Result<Vec<Option<History>>> {
    if !beliefs::is_unifilar(t, tol) {
        return Err(Error::Precondition(format!("{} is not unifilar", t.name())));
    }
    let start = t
        .deterministic_start(tol)
        .ok_or_else(|| Error::Precondition(format!("{} has no deterministic start", t.name())))?;
    let mut labels: Vec<Option<History>> = vec![None; t.n_states()];
    labels[start] = Some(History::empty());
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        let h = labels[s].clone().expect("queued states are labelled");
        for a in 0..t.actions().len() {
            for y in 0..t.outputs().len() {
                if let Some(to) = beliefs::unifilar_successor(t, s, a, y, tol) {
                    if labels[to].is_none() {
                        labels[to] = Some(h.extended(a, y));
                        queue.push_back(to);
                    }
                }
            }
        }
    }
    Ok(labels)
}

/// State bijection (indexed by states of `t1`) under which the kernels of two
/// unifilar, fully reachable machines agree within `tol`; `None` if there is
/// none.
pub fn isomorphism(t1: &Transducer, t2: &Transducer, tol: f64) -> Result<Option<Vec<usize>>> {
    if t1.actions() != t2.actions() || t1.outputs() != t2.outputs() {
        return Err(Error::AlphabetMismatch("machines must share alphabets".into()));
    }
    let (l1, l2) = (canonical_labels(t1, tol)?, canonical_labels(t2, tol)?);
    if t1.n_states() != t2.n_states() || l1.iter().chain(&l2).any(Option::is_none) {
        return Ok(None);
    }
    let index: HashMap<&History, usize> = l2.iter().enumerate().map(|(i, h)| (h.as_ref().unwrap(), i)).collect();
    let mut map = Vec::with_capacity(t1.n_states());
    for h in &l1 {
        match index.get(h.as_ref().unwrap()) {
            Some(&j) => map.push(j),
            None => return Ok(None),
        }
    }
    for a in 0..t1.actions().len() {
        for y in 0..t1.outputs().len() {
            let (m1, m2) = (t1.matrix(a, y), t2.matrix(a, y));
            for from in 0..t1.n_states() {
                for to in 0..t1.n_states() {
                    if (m1[(to, from)] - m2[(map[to], map[from])]).abs() > tol {
                        return Ok(None);
                    }
                }
            }
        }
    }
    Ok(Some(map))
}

pub fn isomorphic(t1: &Transducer, t2: &Transducer, tol: f64) -> Result<bool> {
    Ok(isomorphism(t1, t2, tol)?.is_some())
}

impl Realization for EpsilonMachine {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, DeckVariant};
    use crate::model::{Alphabet, DEFAULT_TOL};

    fn eps(t: &Transducer) -> EpsilonMachine {
        epsilon_transducer(t, DEFAULT_TOL, MspCaps::default()).unwrap()
    }

    #[test]
    fn epsilon_of_parity_fixtures() {
        let a = fixtures::parity_flip();
        let b = fixtures::parity_flip_redundant();
        let ea = eps(&a);
        let eb = eps(&b);
        assert_eq!(ea.n_states(), 2);
        assert_eq!(eb.n_states(), 2);
        assert!(isomorphic(&ea.machine, &a, 1e-9).unwrap());
        assert!(isomorphic(&ea.machine, &eb.machine, 1e-9).unwrap());
        assert!(oracle::equivalent(&eb, &a, 8, DEFAULT_TOL).unwrap().equivalent);
    }

    #[test]
    fn history_clusters() {
        let budget = Budget::default();
        let a = fixtures::parity_flip();
        let ha = epsilon_from_histories(&a, 4, 3, DEFAULT_TOL, budget).unwrap();
        assert_eq!(ha.classes.len(), 2);
        assert!(ha.stabilized);
        assert!(isomorphic(&ha.epsilon.machine, &a, 1e-9).unwrap());

        let b = fixtures::parity_flip_redundant();
        let hb = epsilon_from_histories(&b, 4, 3, DEFAULT_TOL, budget).unwrap();
        assert_eq!(hb.classes.len(), eps(&b).n_states());
        assert!(isomorphic(&hb.epsilon.machine, &eps(&b).machine, 1e-9).unwrap());

        let d = fixtures::delay_channel();
        let hd = epsilon_from_histories(&d, 3, 2, DEFAULT_TOL, budget).unwrap();
        assert_eq!(hd.classes.len(), 2);
        assert_eq!(hd.classes.len(), eps(&d).n_states());
        // the class is fixed by the last action
        let last_one = History::from_steps(&[(0, 0), (1, 0)]);
        let last_zero = History::from_steps(&[(1, 0), (0, 1)]);
        assert_ne!(hd.class_of(&last_one), hd.class_of(&last_zero));
        assert_eq!(hd.class_of(&last_zero), hd.class_of(&History::empty()));
    }

    #[test]
    fn predictive_checks() {
        let b = fixtures::parity_flip_redundant();
        assert!(check_predictive(&eps(&b).machine, &b, 6, DEFAULT_TOL).unwrap().holds());
        let self_check = check_predictive(&b, &b, 6, DEFAULT_TOL).unwrap();
        assert!(self_check.faithful && !self_check.observable);
        assert_eq!(self_check.ambiguous_history, Some(History::from_steps(&[(1, 0)])));
        assert!(check_predictive(&fixtures::parity_flip(), &b, 6, DEFAULT_TOL).unwrap().holds());
    }

    fn phased_parity() -> Transducer {
        // parity flip with a redundant phase bit that toggles every step
        let bits = Alphabet::numbered(2).unwrap();
        Transducer::from_fn(
            "phased",
            vec!["p0e".into(), "p0o".into(), "p1e".into(), "p1o".into()],
            bits.clone(),
            bits,
            vec![1.0, 0.0, 0.0, 0.0],
            |y, to, a, from| {
                let (parity, phase) = (from / 2, from % 2);
                let next = ((parity ^ a) * 2) + (1 - phase);
                if y == parity && to == next {
                    1.0
                } else {
                    0.0
                }
            },
        )
        .unwrap()
    }

    #[test]
    fn unifilar_presentations_collapse_to_the_epsilon_size() {
        let p = phased_parity();
        assert!(beliefs::is_unifilar(&p, DEFAULT_TOL));
        assert!(check_predictive(&p, &fixtures::parity_flip(), 8, DEFAULT_TOL).unwrap().holds());
        assert_eq!(minimize_bisim(&p, DEFAULT_TOL).n_states(), eps(&fixtures::parity_flip()).n_states());
        assert!(!isomorphic(&p, &fixtures::parity_flip(), 1e-9).unwrap());
    }

    #[test]
    fn canonical_labels_need_unifilar_machines() {
        assert!(canonical_labels(&fixtures::parity_flip_redundant(), DEFAULT_TOL).is_err());
        let labels = canonical_labels(&fixtures::parity_flip(), DEFAULT_TOL).unwrap();
        assert_eq!(labels[1], Some(History::from_steps(&[(1, 0)])));
    }

    #[test]
    fn card_deck_epsilon_is_faithful() {
        let deck = fixtures::card_deck(2, 2, DeckVariant::FlipShuffle).unwrap();
        let e = eps(&deck);
        assert!(oracle::equivalent(&e, &deck, 6, DEFAULT_TOL).unwrap().equivalent);
        // six known arrangements, the uniform belief after a shuffle, two
        // beliefs over three arrangements after one observed colour and two
        // over two arrangements after a second
        assert_eq!(e.n_states(), 11);
    }
}
