//! Brute-force ground truth for the interface generated by a realization:
//! word probabilities, next-output conditionals, sampling, equivalence and
//! memory-class diagnosis.
//!
//! Word probabilities follow the time order of the history: the earliest
//! step acts first on the initial vector,
//! `p(y_{:t} | a_{:t}) = 1ᵀ · T^(y_t|a_t) ⋯ T^(y_0|a_0) · p`.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{History, Policy, Realization, Transducer};

/// Default cap on the number of words an enumeration may visit.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Guard on exhaustive enumerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub limit: u64,
    pub force: bool,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            limit: DEFAULT_BUDGET,
            force: false,
        }
    }
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget { limit, force: false }
    }

    pub fn forced(self) -> Self {
        Budget { force: true, ..self }
    }

    /// Default budget, overridden by `VATWORLD_BUDGET` when it parses.
    pub fn from_env() -> Self {
        let limit = std::env::var("VATWORLD_BUDGET")
            .ok()
            .and_then(|v| v.trim().parse::<u64>().ok())
            .unwrap_or(DEFAULT_BUDGET);
        Budget { limit, force: false }
    }

    pub fn allows(&self, words: u128) -> bool {
        self.force || words <= self.limit as u128
    }

    pub fn check(&self, words: u128) -> Result<()> {
        if self.allows(words) {
            Ok(())
        } else {
            Err(Error::BudgetExceeded {
                words,
                budget: self.limit,
            })
        }
    }
}

/// Number of words of length `1..=max_len` over an alphabet of `symbols` letters.
pub fn word_count(symbols: usize, max_len: usize) -> u128 {
    let base = symbols as u128;
    let mut total: u128 = 0;
    let mut layer: u128 = 1;
    for _ in 0..max_len {
        layer = layer.saturating_mul(base);
        total = total.saturating_add(layer);
    }
    total
}

fn check_same_alphabets<A: Realization, B: Realization>(m1: &A, m2: &B) -> Result<()> {
    if m1.actions() != m2.actions() {
        return Err(Error::AlphabetMismatch(format!(
            "action alphabets differ: {:?} vs {:?}",
            m1.actions().symbols(),
            m2.actions().symbols()
        )));
    }
    if m1.outputs() != m2.outputs() {
        return Err(Error::AlphabetMismatch(format!(
            "output alphabets differ: {:?} vs {:?}",
            m1.outputs().symbols(),
            m2.outputs().symbols()
        )));
    }
    Ok(())
}

/// Unnormalised forward vector `T^(y_t|a_t) ⋯ T^(y_0|a_0) · p`.
pub fn forward_vector<R: Realization>(m: &R, h: &History) -> Result<DVector<f64>> {
    h.check_alphabets(m.actions().len(), m.outputs().len())?;
    let mut v = m.right().clone();
    for (a, y) in h.steps() {
        v = m.matrix(a, y) * v;
    }
    Ok(v)
}

/// `p(y_{:t} | a_{:t})` for a transducer, or the quasi-probability
/// `uᵀ · A ⋯ A · v` for a generalised transducer.
pub fn word_probability<R: Realization>(m: &R, h: &History) -> Result<f64> {
    Ok(m.left().dot(&forward_vector(m, h)?))
}

/// Visits every word of length `1..=max_len` in depth-first lexicographic
/// order together with its forward vector.
pub fn for_each_word<R: Realization>(m: &R, max_len: usize, mut visit: impl FnMut(&History, &DVector<f64>)) {
    fn recurse<R: Realization>(
        m: &R,
        max_len: usize,
        prefix: &mut History,
        vector: &DVector<f64>,
        visit: &mut dyn FnMut(&History, &DVector<f64>),
    ) {
        if prefix.len() == max_len {
            return;
        }
        for a in 0..m.actions().len() {
            for y in 0..m.outputs().len() {
                let next = m.matrix(a, y) * vector;
                prefix.push(a, y);
                visit(prefix, &next);
                recurse(m, max_len, prefix, &next, visit);
                prefix.pop();
            }
        }
    }
    let mut prefix = History::empty();
    recurse(m, max_len, &mut prefix, m.right(), &mut visit);
}

/// Word probabilities with a memo table. Fills are idempotent, so concurrent
/// readers may race on the same key without harm.
pub struct InterfaceView<'a, R: Realization> {
    source: &'a R,
    cache: Mutex<HashMap<History, f64>>,
}

impl<'a, R: Realization> InterfaceView<'a, R> {
    pub fn new(source: &'a R) -> Self {
        InterfaceView {
            source,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn source(&self) -> &R {
        self.source
    }

    pub fn probability(&self, h: &History) -> Result<f64> {
        if let Some(&p) = self.cache.lock().expect("cache lock").get(h) {
            return Ok(p);
        }
        let p = word_probability(self.source, h)?;
        self.cache.lock().expect("cache lock").insert(h.clone(), p);
        Ok(p)
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

/// `p(y_t | h_{:t-1}, a_t)` as a ratio of word probabilities.
pub fn next_output_dist<R: Realization>(m: &R, past: &History, action: usize) -> Result<Vec<f64>> {
    if action >= m.actions().len() {
        return Err(Error::AlphabetMismatch(format!("action index {action} out of range")));
    }
    let alpha = forward_vector(m, past)?;
    let left = m.left();
    let denominator = left.dot(&alpha);
    if denominator <= 0.0 {
        return Err(Error::ImpossibleHistory {
            probability: denominator,
        });
    }
    Ok((0..m.outputs().len())
        .map(|y| left.dot(&(m.matrix(action, y) * &alpha)) / denominator)
        .collect())
}

/// Realised run of a transducer: `states` has one more entry than the
/// action and output sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    pub actions: Vec<usize>,
    pub outputs: Vec<usize>,
    pub states: Vec<usize>,
}

impl Trajectory {
    pub fn history(&self) -> History {
        History::new(self.actions.clone(), self.outputs.clone()).expect("equal lengths by construction")
    }
}

fn categorical(rng: &mut ChaCha8Rng, weights: impl IntoIterator<Item = f64>) -> usize {
    let weights: Vec<f64> = weights.into_iter().collect();
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            if r < w {
                return i;
            }
            r -= w;
        }
    }
    last_positive
}

/// Samples `length` steps: the action from the policy on the realised
/// history, then `(y, s')` jointly from the kernel.
pub fn sample_trajectory(t: &Transducer, policy: &Policy, length: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = t.n_states();
    let ny = t.outputs().len();
    let na = t.actions().len();
    let mut state = categorical(&mut rng, t.initial().iter().copied());
    let mut history = History::empty();
    let mut states = vec![state];
    for _ in 0..length {
        let a = categorical(&mut rng, policy.distribution(na, &history));
        let joint = (0..ny).flat_map(|y| (0..n).map(move |to| (y, to)));
        let cells: Vec<(usize, usize)> = joint.collect();
        let pick = categorical(&mut rng, cells.iter().map(|&(y, to)| t.prob(y, to, a, state)));
        let (y, to) = cells[pick];
        history.push(a, y);
        state = to;
        states.push(state);
    }
    Trajectory {
        actions: history.actions().to_vec(),
        outputs: history.outputs().to_vec(),
        states,
    }
}

/// A word on which two interfaces disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub history: History,
    pub left: f64,
    pub right: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquivalenceMethod {
    /// Every word up to the depth was compared.
    Enumeration,
    /// Words were explored breadth-first, extending only those whose joint
    /// forward vector is linearly independent of the ones already kept;
    /// word probabilities are linear in that vector, so agreement on the
    /// kept words implies agreement on all words up to the depth.
    SpanBasis,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceVerdict {
    pub equivalent: bool,
    pub depth_checked: usize,
    pub method: EquivalenceMethod,
    pub counterexample: Option<Counterexample>,
}

/// Default comparison depth for two machines of the given sizes.
pub fn default_depth(n1: usize, n2: usize) -> usize {
    n1 + n2
}

/// Word count below which [`equivalent`] enumerates instead of building a span basis.
pub const ENUMERATION_THRESHOLD: u128 = 200_000;

/// Compares two interfaces on every `(a, y)` word of length `1..=depth`.
pub fn equivalent<A: Realization, B: Realization>(
    m1: &A,
    m2: &B,
    depth: usize,
    tol: f64,
) -> Result<EquivalenceVerdict> {
    check_same_alphabets(m1, m2)?;
    let symbols = m1.actions().len() * m1.outputs().len();
    if word_count(symbols, depth) <= ENUMERATION_THRESHOLD {
        Ok(equivalent_by_enumeration(m1, m2, depth, tol))
    } else {
        Ok(equivalent_by_span(m1, m2, depth, tol))
    }
}

fn equivalent_by_enumeration<A: Realization, B: Realization>(m1: &A, m2: &B, depth: usize, tol: f64) -> EquivalenceVerdict {
    let (l1, l2) = (m1.left(), m2.left());
    // iterative deepening so the reported counterexample is a shortest one
    for len in 1..=depth {
        let mut found: Option<Counterexample> = None;
        let mut stack: Vec<(History, DVector<f64>, DVector<f64>)> =
            vec![(History::empty(), m1.right().clone(), m2.right().clone())];
        while let Some((h, v1, v2)) = stack.pop() {
            if h.len() == len {
                let (p1, p2) = (l1.dot(&v1), l2.dot(&v2));
                if (p1 - p2).abs() > tol {
                    found = Some(Counterexample {
                        history: h,
                        left: p1,
                        right: p2,
                        difference: p1 - p2,
                    });
                    break;
                }
                continue;
            }
            for a in (0..m1.actions().len()).rev() {
                for y in (0..m1.outputs().len()).rev() {
                    stack.push((h.extended(a, y), m1.matrix(a, y) * &v1, m2.matrix(a, y) * &v2));
                }
            }
        }
        if let Some(c) = found {
            return EquivalenceVerdict {
                equivalent: false,
                depth_checked: depth,
                method: EquivalenceMethod::Enumeration,
                counterexample: Some(c),
            };
        }
    }
    EquivalenceVerdict {
        equivalent: true,
        depth_checked: depth,
        method: EquivalenceMethod::Enumeration,
        counterexample: None,
    }
}

/// Gram–Schmidt membership test; returns the normalised residual when `x`
/// is independent of `basis`.
pub(crate) fn independent_direction(basis: &[DVector<f64>], x: &DVector<f64>, rel_tol: f64) -> Option<DVector<f64>> {
    let scale = x.norm();
    if scale == 0.0 {
        return None;
    }
    let mut r = x.clone();
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&r);
            r -= q * c;
        }
    }
    let norm = r.norm();
    if norm > rel_tol * scale.max(1.0) {
        Some(r / norm)
    } else {
        None
    }
}

const SPAN_REL_TOL: f64 = 1e-10;

fn equivalent_by_span<A: Realization, B: Realization>(m1: &A, m2: &B, depth: usize, tol: f64) -> EquivalenceVerdict {
    let (n1, n2) = (m1.dim(), m2.dim());
    let (l1, l2) = (m1.left(), m2.left());
    let stack = |v1: &DVector<f64>, v2: &DVector<f64>| {
        DVector::from_iterator(n1 + n2, v1.iter().chain(v2.iter()).copied())
    };
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut frontier: Vec<(History, DVector<f64>, DVector<f64>)> = Vec::new();
    let joint0 = stack(m1.right(), m2.right());
    if let Some(q) = independent_direction(&basis, &joint0, SPAN_REL_TOL) {
        basis.push(q);
    }
    frontier.push((History::empty(), m1.right().clone(), m2.right().clone()));
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (h, v1, v2) in frontier {
            if h.len() == depth {
                continue;
            }
            for a in 0..m1.actions().len() {
                for y in 0..m1.outputs().len() {
                    let w1 = m1.matrix(a, y) * &v1;
                    let w2 = m2.matrix(a, y) * &v2;
                    let joint = stack(&w1, &w2);
                    if let Some(q) = independent_direction(&basis, &joint, SPAN_REL_TOL) {
                        let word = h.extended(a, y);
                        let (p1, p2) = (l1.dot(&w1), l2.dot(&w2));
                        if (p1 - p2).abs() > tol {
                            return EquivalenceVerdict {
                                equivalent: false,
                                depth_checked: depth,
                                method: EquivalenceMethod::SpanBasis,
                                counterexample: Some(Counterexample {
                                    history: word,
                                    left: p1,
                                    right: p2,
                                    difference: p1 - p2,
                                }),
                            };
                        }
                        basis.push(q);
                        next.push((word, w1, w2));
                    }
                }
            }
        }
        frontier = next;
    }
    EquivalenceVerdict {
        equivalent: true,
        depth_checked: depth,
        method: EquivalenceMethod::SpanBasis,
        counterexample: None,
    }
}

/// Memory structure of the interface, diagnosed from its conditionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MemoryClass {
    Memoryless,
    FullyObservable,
    General,
}

impl std::fmt::Display for MemoryClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MemoryClass::Memoryless => "memoryless",
            MemoryClass::FullyObservable => "fully-observable",
            MemoryClass::General => "general",
        })
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Classifies the interface from all conditionals `p(y_t | h_{:t-1}, a_t)`
/// with `t < depth` (so all words up to `depth` are covered).
///
/// * memoryless: the conditional depends on `(t, a_t)` only, i.e. the word
///   probability is a product of per-step marginals;
/// * fully observable: at `t = 0` it ignores `a_0`, and afterwards it
///   depends on `(t, y_{t-1}, a_{t-1})` only, so the last output can serve
///   as the memory state.
pub fn memory_class<R: Realization>(m: &R, depth: usize, tol: f64, budget: Budget) -> Result<MemoryClass> {
    let na = m.actions().len();
    let ny = m.outputs().len();
    budget.check(word_count(na * ny, depth))?;
    let left = m.left();
    let mut memoryless = true;
    let mut observable = true;
    let mut by_action: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    let mut by_last: HashMap<(usize, usize, usize), Vec<f64>> = HashMap::new();

    let mut check = |h: &History, alpha: &DVector<f64>| {
        let total = left.dot(alpha);
        if total <= tol {
            return;
        }
        let t = h.len();
        for a in 0..na {
            let cond: Vec<f64> = (0..ny)
                .map(|y| left.dot(&(m.matrix(a, y) * alpha)) / total)
                .collect();
            let reference = by_action.entry((t, a)).or_insert_with(|| cond.clone());
            if !close(reference, &cond, tol) {
                memoryless = false;
            }
            let key = match (h.actions().last(), h.outputs().last()) {
                (Some(&pa), Some(&py)) => (t, py, pa),
                _ => (0, usize::MAX, usize::MAX),
            };
            let reference = by_last.entry(key).or_insert_with(|| cond.clone());
            if !close(reference, &cond, tol) {
                observable = false;
            }
        }
    };
    check(&History::empty(), m.right());
    if depth > 1 {
        for_each_word(m, depth - 1, |h, alpha| check(h, alpha));
    }
    Ok(if memoryless {
        MemoryClass::Memoryless
    } else if observable {
        MemoryClass::FullyObservable
    } else {
        MemoryClass::General
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{Alphabet, DEFAULT_TOL};

    #[test]
    fn word_probabilities_of_fixtures() {
        let a = fixtures::parity_flip();
        assert_eq!(word_probability(&a, &History::from_steps(&[(0, 0)])).unwrap(), 1.0);
        assert_eq!(word_probability(&a, &History::from_steps(&[(1, 0), (0, 1)])).unwrap(), 1.0);
        let c = fixtures::mixture_hmm();
        let p = word_probability(&c, &History::from_steps(&[(0, 1)])).unwrap();
        assert!((p - 0.53).abs() < 1e-15);
    }

    #[test]
    fn alphabet_mismatch_is_an_error() {
        let a = fixtures::parity_flip();
        assert!(matches!(
            word_probability(&a, &History::from_steps(&[(2, 0)])),
            Err(Error::AlphabetMismatch(_))
        ));
        let c = fixtures::mixture_hmm();
        assert!(matches!(equivalent(&a, &c, 2, DEFAULT_TOL), Err(Error::AlphabetMismatch(_))));
    }

    #[test]
    fn next_output_examples() {
        let a = fixtures::parity_flip();
        assert_eq!(next_output_dist(&a, &History::empty(), 1).unwrap(), vec![1.0, 0.0]);
        let b = fixtures::parity_flip_redundant();
        let d = next_output_dist(&b, &History::from_steps(&[(1, 0)]), 0).unwrap();
        assert_eq!(d, vec![0.0, 1.0]);
        let err = next_output_dist(&a, &History::from_steps(&[(0, 1)]), 0).unwrap_err();
        assert!(matches!(err, Error::ImpossibleHistory { .. }));
    }

    #[test]
    fn next_output_of_mixture_sums_to_one() {
        // brute force over start states and first transition
        let c = fixtures::mixture_hmm();
        let d = next_output_dist(&c, &History::from_steps(&[(0, 1)]), 0).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut joint = 0.0;
        for s0 in 0..3 {
            for s1 in 0..3 {
                for s2 in 0..3 {
                    joint += c.initial()[s0] * c.prob(1, s1, 0, s0) * c.prob(1, s2, 0, s1);
                }
            }
        }
        assert!((d[1] - joint / 0.53).abs() < 1e-12);
    }

    #[test]
    fn parity_outputs_track_actions() {
        let a = fixtures::parity_flip();
        let tr = sample_trajectory(&a, &Policy::IidUniform, 5, 7);
        let mut parity = 0;
        for (act, out) in tr.actions.iter().zip(&tr.outputs) {
            assert_eq!(*out, parity);
            parity ^= act;
        }
        assert_eq!(tr.states.len(), 6);
    }

    #[test]
    fn delay_channel_repeats_actions() {
        let d = fixtures::delay_channel();
        let tr = sample_trajectory(&d, &Policy::IidWeighted(vec![0.3, 0.7]), 50, 3);
        for t in 1..50 {
            assert_eq!(tr.outputs[t], tr.actions[t - 1]);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let c = fixtures::mixture_hmm();
        assert_eq!(
            sample_trajectory(&c, &Policy::IidUniform, 30, 11),
            sample_trajectory(&c, &Policy::IidUniform, 30, 11)
        );
    }

    #[test]
    fn equivalence_examples() {
        let a = fixtures::parity_flip();
        let b = fixtures::parity_flip_redundant();
        let d = fixtures::delay_channel();
        assert!(equivalent(&a, &a, 6, DEFAULT_TOL).unwrap().equivalent);
        assert!(equivalent(&a, &b, 8, DEFAULT_TOL).unwrap().equivalent);
        // both emit y_1 = a_0; the machines part ways at the third step
        assert!(equivalent(&a, &d, 2, DEFAULT_TOL).unwrap().equivalent);
        let v = equivalent(&a, &d, 3, DEFAULT_TOL).unwrap();
        assert!(!v.equivalent);
        let c = v.counterexample.unwrap();
        assert_eq!(c.history.len(), 3);
        assert!((c.difference.abs() - 1.0).abs() < 1e-12);
        let pa = word_probability(&a, &c.history).unwrap();
        let pd = word_probability(&d, &c.history).unwrap();
        assert_eq!((pa, pd), (c.left, c.right));
    }

    #[test]
    fn span_method_agrees_with_enumeration() {
        let a = fixtures::parity_flip();
        let b = fixtures::parity_flip_redundant();
        let d = fixtures::delay_channel();
        for depth in 1..=6 {
            for (x, y) in [(&a, &b), (&a, &d), (&b, &d)] {
                let e = equivalent_by_enumeration(x, y, depth, DEFAULT_TOL);
                let s = equivalent_by_span(x, y, depth, DEFAULT_TOL);
                assert_eq!(e.equivalent, s.equivalent, "depth {depth}");
                if let Some(c) = s.counterexample {
                    let p1 = word_probability(x, &c.history).unwrap();
                    let p2 = word_probability(y, &c.history).unwrap();
                    assert!((p1 - p2).abs() > DEFAULT_TOL);
                }
            }
        }
    }

    #[test]
    fn memory_classes() {
        let bits = Alphabet::numbered(2).unwrap();
        let coin = Transducer::from_fn("coin", vec!["s".into()], bits.clone(), bits, vec![1.0], |_, _, _, _| 0.5).unwrap();
        let budget = Budget::default();
        assert_eq!(memory_class(&coin, 6, DEFAULT_TOL, budget).unwrap(), MemoryClass::Memoryless);
        assert_eq!(
            memory_class(&fixtures::parity_flip(), 6, DEFAULT_TOL, budget).unwrap(),
            MemoryClass::FullyObservable
        );
        assert_eq!(
            memory_class(&fixtures::mixture_hmm(), 4, DEFAULT_TOL, budget).unwrap(),
            MemoryClass::General
        );
    }

    #[test]
    fn budget_guard() {
        let a = fixtures::parity_flip();
        let err = memory_class(&a, 30, DEFAULT_TOL, Budget::new(1000)).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
        assert!(Budget::new(10).forced().allows(1 << 40));
    }

    #[test]
    fn interface_view_caches() {
        let c = fixtures::mixture_hmm();
        let view = InterfaceView::new(&c);
        let h = History::from_steps(&[(0, 1), (0, 0)]);
        let p = view.probability(&h).unwrap();
        assert_eq!(view.probability(&h).unwrap(), p);
        assert_eq!(view.cached(), 1);
        assert!((p - word_probability(&c, &h).unwrap()).abs() < 1e-12);
    }
}
