//! Time reversal of transducers.
//!
//! A transducer is reversible when the law of the previous memory state,
//! given the next one and the whole action sequence, depends on the current
//! action only. Then the reverse kernel
//!
//! ```text
//! κ^R_τ(y, s | a, s̃) = Pr(S_τ = s | A_τ = a) · κ(y, s̃ | a, s) / Pr(S_{τ+1} = s̃ | A_τ = a)
//! ```
//!
//! generates the same joint law backwards in time. The marginals depend on
//! how actions are chosen, so every reverse artifact carries its [`Policy`].

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{History, Policy, Transducer};
use crate::oracle::{word_count, Budget};

/// Joint laws `Pr(S_τ = s, A_τ = a)` for `τ = 0..=horizon`, each an
/// `n × |A|` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    pub policy: Policy,
    slices: Vec<DMatrix<f64>>,
}

impl MarginalTable {
    pub fn horizon(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn joint(&self, tau: usize) -> &DMatrix<f64> {
        &self.slices[tau]
    }

    /// `Pr(S_τ = ·)`.
    pub fn state(&self, tau: usize) -> DVector<f64> {
        let j = &self.slices[tau];
        DVector::from_fn(j.nrows(), |s, _| j.row(s).sum())
    }

    /// `Pr(A_τ = a)`.
    pub fn action(&self, tau: usize, a: usize) -> f64 {
        self.slices[tau].column(a).sum()
    }

    /// `Pr(S_τ = · | A_τ = a)`, or `None` if the action has no mass.
    pub fn state_given_action(&self, tau: usize, a: usize, tol: f64) -> Option<DVector<f64>> {
        let col = self.slices[tau].column(a).into_owned();
        let mass = col.sum();
        (mass > tol).then(|| col / mass)
    }
}

/// Propagates the joint law of state and history under `policy`. IID
/// policies need only the state marginal; history-dependent ones are
/// enumerated.
pub fn state_marginals(t: &Transducer, policy: &Policy, horizon: usize, budget: Budget) -> Result<MarginalTable> {
    let na = t.actions().len();
    policy.check(na, 1e-9)?;
    let n = t.n_states();
    let mut slices = Vec::with_capacity(horizon + 1);
    if policy.is_iid() {
        let w = policy.distribution(na, &History::empty());
        let step: DMatrix<f64> = (0..na).fold(DMatrix::zeros(n, n), |acc, a| acc + t.state_matrix(a) * w[a]);
        let mut mu = t.initial().clone();
        for tau in 0..=horizon {
            slices.push(DMatrix::from_fn(n, na, |s, a| mu[s] * w[a]));
            if tau < horizon {
                mu = &step * mu;
            }
        }
    } else {
        budget.check(word_count(na * t.outputs().len(), horizon))?;
        // (history, Pr(history under policy and kernel) spread over states)
        let mut layer = vec![(History::empty(), t.initial().clone())];
        for tau in 0..=horizon {
            let mut joint = DMatrix::zeros(n, na);
            let mut next = Vec::new();
            for (h, alpha) in &layer {
                let w = policy.distribution(na, h);
                for a in 0..na {
                    if w[a] == 0.0 {
                        continue;
                    }
                    for s in 0..n {
                        joint[(s, a)] += w[a] * alpha[s];
                    }
                    if tau < horizon {
                        for y in 0..t.outputs().len() {
                            let v = t.matrix(a, y) * alpha * w[a];
                            if v.sum() > 0.0 {
                                next.push((h.extended(a, y), v));
                            }
                        }
                    }
                }
            }
            slices.push(joint);
            layer = next;
        }
    }
    Ok(MarginalTable {
        policy: policy.clone(),
        slices,
    })
}

/// For every `(s', a)`, at most one `s` moves to `s'` under `a`.
pub fn is_action_counifilar(t: &Transducer, tol: f64) -> bool {
    let n = t.n_states();
    (0..t.actions().len()).all(|a| {
        let m = t.state_matrix(a);
        (0..n).all(|to| (0..n).filter(|&from| m[(to, from)] > tol).count() <= 1)
    })
}

/// The kernel does not depend on the action.
pub fn is_action_agnostic(t: &Transducer, tol: f64) -> bool {
    let ny = t.outputs().len();
    (1..t.actions().len()).all(|a| {
        (0..ny).all(|y| {
            let d = t.matrix(a, y) - t.matrix(0, y);
            d.iter().all(|x| x.abs() <= tol)
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReversibilityRoute {
    SingleState,
    ActionAgnostic,
    ActionCounifilar,
    Exhaustive,
}

/// Two action prefixes after which the previous-state law given the next
/// state differs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversibilityWitness {
    pub tau: usize,
    pub action: usize,
    pub next_state: usize,
    pub prefix: Vec<usize>,
    pub other_prefix: Vec<usize>,
    /// `Pr(S_τ = · | S_{τ+1} = next_state, prefix, action)`.
    pub conditional: Vec<f64>,
    pub other_conditional: Vec<f64>,
}

impl ReversibilityWitness {
    pub fn describe(&self, t: &Transducer) -> String {
        let acts = |p: &[usize]| p.iter().map(|&a| t.actions().symbol(a)).collect::<Vec<_>>().join(",");
        format!(
            "at τ={} with a={} and S_{{τ+1}}={}: prefix ({}) gives Pr(S_τ)={:?}, prefix ({}) gives {:?}",
            self.tau,
            t.actions().symbol(self.action),
            t.states()[self.next_state],
            acts(&self.prefix),
            self.conditional,
            acts(&self.other_prefix),
            self.other_conditional
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversibilityVerdict {
    pub reversible: bool,
    pub route: ReversibilityRoute,
    pub horizon: usize,
    pub witness: Option<ReversibilityWitness>,
}

/// Tests `p(s_τ | s_{τ+1}, a_{:T}) = p(s_τ | s_{τ+1}, a_τ)` for every
/// `τ ≤ horizon` by comparing, for each `a_τ` and reachable `s_{τ+1}`, the
/// conditional over all action prefixes `a_{:τ-1}`. Later actions cannot
/// influence `(S_τ, S_{τ+1})`, so prefixes suffice.
pub fn reversibility_condition(t: &Transducer, horizon: usize, tol: f64, budget: Budget) -> Result<ReversibilityVerdict> {
    let na = t.actions().len();
    let n = t.n_states();
    budget.check(word_count(na, horizon + 1))?;
    let moves: Vec<DMatrix<f64>> = (0..na).map(|a| t.state_matrix(a)).collect();
    // open-loop state law after each prefix of the current length
    let mut layer: Vec<(Vec<usize>, DVector<f64>)> = vec![(Vec::new(), t.initial().clone())];
    for tau in 0..=horizon {
        for a in 0..na {
            let mut reference: Vec<Option<(usize, Vec<f64>)>> = vec![None; n];
            for (i, (prefix, mu)) in layer.iter().enumerate() {
                for next in 0..n {
                    let joint: Vec<f64> = (0..n).map(|s| moves[a][(next, s)] * mu[s]).collect();
                    let mass: f64 = joint.iter().sum();
                    if mass <= tol {
                        continue;
                    }
                    let cond: Vec<f64> = joint.iter().map(|p| p / mass).collect();
                    match &reference[next] {
                        None => reference[next] = Some((i, cond)),
                        Some((j, r)) => {
                            if r.iter().zip(&cond).any(|(x, y)| (x - y).abs() > tol) {
                                return Ok(ReversibilityVerdict {
                                    reversible: false,
                                    route: ReversibilityRoute::Exhaustive,
                                    horizon,
                                    witness: Some(ReversibilityWitness {
                                        tau,
                                        action: a,
                                        next_state: next,
                                        prefix: layer[*j].0.clone(),
                                        other_prefix: prefix.clone(),
                                        conditional: r.clone(),
                                        other_conditional: cond,
                                    }),
                                });
                            }
                        }
                    }
                }
            }
        }
        if tau < horizon {
            layer = layer
                .iter()
                .flat_map(|(prefix, mu)| {
                    (0..na).map(move |a| {
                        let mut p = prefix.clone();
                        p.push(a);
                        (p, a)
                    })
                    .map(|(p, a)| (p, &moves[a] * mu))
                    .collect::<Vec<_>>()
                })
                .collect();
        }
    }
    Ok(ReversibilityVerdict {
        reversible: true,
        route: ReversibilityRoute::Exhaustive,
        horizon,
        witness: None,
    })
}

/// Structural sufficient conditions first, then [`reversibility_condition`].
pub fn check_reversible(t: &Transducer, horizon: usize, tol: f64, budget: Budget) -> Result<ReversibilityVerdict> {
    let fast = if t.n_states() == 1 {
        Some(ReversibilityRoute::SingleState)
    } else if is_action_agnostic(t, tol) {
        Some(ReversibilityRoute::ActionAgnostic)
    } else if is_action_counifilar(t, tol) {
        Some(ReversibilityRoute::ActionCounifilar)
    } else {
        None
    };
    match fast {
        Some(route) => Ok(ReversibilityVerdict {
            reversible: true,
            route,
            horizon,
            witness: None,
        }),
        None => reversibility_condition(t, horizon, tol, budget),
    }
}

/// One time slice of the reverse kernel. `matrix(a, y)[(s, s̃)]` is
/// `κ^R_τ(y, s | a, s̃)`; columns with `defined[a][s̃] == false` have an
/// unreachable conditioning event and are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseKernel {
    pub tau: usize,
    pub policy: Policy,
    outputs: usize,
    matrices: Vec<DMatrix<f64>>,
    pub defined: Vec<Vec<bool>>,
}

impl ReverseKernel {
    pub fn matrix(&self, action: usize, output: usize) -> &DMatrix<f64> {
        &self.matrices[action * self.outputs + output]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// `κ^R_τ(y, s | a, s̃)`, zero on undefined columns.
    pub fn prob(&self, output: usize, earlier: usize, action: usize, later: usize) -> f64 {
        self.matrix(action, output)[(earlier, later)]
    }

    /// Largest `|Σ_{y,s} κ^R - 1|` over defined columns.
    pub fn normalization_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, cols) in self.defined.iter().enumerate() {
            for (later, &ok) in cols.iter().enumerate() {
                if ok {
                    let total: f64 = (0..self.outputs).map(|y| self.matrix(a, y).column(later).sum()).sum();
                    worst = worst.max((total - 1.0).abs());
                }
            }
        }
        worst
    }
}

/// Reverse kernel at time `τ` from precomputed marginals.
pub fn reverse_kernel_from(t: &Transducer, marginals: &MarginalTable, tau: usize, tol: f64) -> Result<ReverseKernel> {
    if tau > marginals.horizon() {
        return Err(Error::Precondition(format!(
            "τ={tau} beyond the marginal horizon {}",
            marginals.horizon()
        )));
    }
    let (n, na, ny) = (t.n_states(), t.actions().len(), t.outputs().len());
    let mut matrices = vec![DMatrix::zeros(n, n); na * ny];
    let mut defined = vec![vec![false; n]; na];
    for a in 0..na {
        let Some(prior) = marginals.state_given_action(tau, a, tol) else { continue };
        let reach = t.state_matrix(a) * &prior;
        for later in 0..n {
            if reach[later] <= tol {
                continue;
            }
            defined[a][later] = true;
            for y in 0..ny {
                let m = t.matrix(a, y);
                for earlier in 0..n {
                    matrices[a * ny + y][(earlier, later)] = prior[earlier] * m[(later, earlier)] / reach[later];
                }
            }
        }
    }
    if defined.iter().flatten().all(|d| !d) {
        return Err(Error::Unreachable(format!("every reverse column at τ={tau} is undefined")));
    }
    Ok(ReverseKernel {
        tau,
        policy: marginals.policy.clone(),
        outputs: ny,
        matrices,
        defined,
    })
}

pub fn reverse_kernel(t: &Transducer, policy: &Policy, tau: usize, tol: f64, budget: Budget) -> Result<ReverseKernel> {
    let marginals = state_marginals(t, policy, tau, budget)?;
    reverse_kernel_from(t, &marginals, tau, tol)
}

/// Reverse kernels for `τ = 0..=horizon`.
pub fn reverse_kernels(t: &Transducer, policy: &Policy, horizon: usize, tol: f64, budget: Budget) -> Result<Vec<ReverseKernel>> {
    let marginals = state_marginals(t, policy, horizon, budget)?;
    (0..=horizon).map(|tau| reverse_kernel_from(t, &marginals, tau, tol)).collect()
}

fn open_loop(t: &Transducer, actions: &[usize]) -> DVector<f64> {
    actions.iter().fold(t.initial().clone(), |mu, &a| t.state_matrix(a) * mu)
}

/// Word probability generated backwards: start from `Pr(S_{t+1} | a_{:t})`
/// and apply the reverse kernels from the last step to the first.
pub fn reverse_word_probability(t: &Transducer, kernels: &[ReverseKernel], h: &History) -> Result<f64> {
    h.check_alphabets(t.actions().len(), t.outputs().len())?;
    if h.len() > kernels.len() {
        return Err(Error::Precondition(format!(
            "history of length {} needs {} reverse kernels, {} given",
            h.len(),
            h.len(),
            kernels.len()
        )));
    }
    let mut v = open_loop(t, h.actions());
    for (tau, (a, y)) in h.steps().enumerate().collect::<Vec<_>>().into_iter().rev() {
        v = kernels[tau].matrix(a, y) * v;
    }
    Ok(v.sum())
}

/// A joint path on which the forward and reverse factorisations differ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversePath {
    pub actions: Vec<usize>,
    pub outputs: Vec<usize>,
    pub states: Vec<usize>,
    pub forward: f64,
    pub reverse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReverseCheck {
    pub holds: bool,
    pub max_deviation: f64,
    pub paths_checked: usize,
    pub violating: Option<ReversePath>,
}

/// Compares `p(s_0)·Πκ` with `p(s_{t+1} | a_{:t})·Πκ^R` on every path of
/// every action sequence of length `1..=horizon + 1`; paths in the support
/// of either side are visited.
pub fn verify_reverse_generates(t: &Transducer, policy: &Policy, horizon: usize, tol: f64, budget: Budget) -> Result<ReverseCheck> {
    let (n, na, ny) = (t.n_states(), t.actions().len(), t.outputs().len());
    budget.check(word_count(na, horizon + 1))?;
    let kernels = reverse_kernels(t, policy, horizon, tol, budget)?;
    let mut check = ReverseCheck {
        holds: true,
        max_deviation: 0.0,
        paths_checked: 0,
        violating: None,
    };
    let mut actions: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..=horizon {
        actions = actions
            .into_iter()
            .flat_map(|p| {
                (0..na).map(move |a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
        for seq in &actions {
            let steps = seq.len();
            let end = open_loop(t, seq);
            let forward_of = |states: &[usize], outputs: &[usize]| {
                (0..steps).fold(t.initial()[states[0]], |p, k| {
                    p * t.prob(outputs[k], states[k + 1], seq[k], states[k])
                })
            };
            let reverse_of = |states: &[usize], outputs: &[usize]| {
                (0..steps).fold(end[states[steps]], |p, k| {
                    p * kernels[k].prob(outputs[k], states[k], seq[k], states[k + 1])
                })
            };
            let mut paths: HashSet<(Vec<usize>, Vec<usize>)> = HashSet::new();
            // forward support
            let mut stack: Vec<(Vec<usize>, Vec<usize>)> =
                (0..n).filter(|&s| t.initial()[s] > 0.0).map(|s| (vec![s], Vec::new())).collect();
            while let Some((states, outputs)) = stack.pop() {
                let k = outputs.len();
                if k == steps {
                    paths.insert((states, outputs));
                    continue;
                }
                let from = states[k];
                for y in 0..ny {
                    for to in 0..n {
                        if t.prob(y, to, seq[k], from) > 0.0 {
                            let (mut s2, mut o2) = (states.clone(), outputs.clone());
                            s2.push(to);
                            o2.push(y);
                            stack.push((s2, o2));
                        }
                    }
                }
            }
            // reverse support, built from the last state backwards
            let mut stack: Vec<(Vec<usize>, Vec<usize>)> =
                (0..n).filter(|&s| end[s] > 0.0).map(|s| (vec![s], Vec::new())).collect();
            while let Some((rev_states, rev_outputs)) = stack.pop() {
                let k = rev_outputs.len();
                if k == steps {
                    let states: Vec<usize> = rev_states.into_iter().rev().collect();
                    let outputs: Vec<usize> = rev_outputs.into_iter().rev().collect();
                    paths.insert((states, outputs));
                    continue;
                }
                let tau = steps - 1 - k;
                let later = rev_states[k];
                for y in 0..ny {
                    for earlier in 0..n {
                        if kernels[tau].prob(y, earlier, seq[tau], later) > 0.0 {
                            let (mut s2, mut o2) = (rev_states.clone(), rev_outputs.clone());
                            s2.push(earlier);
                            o2.push(y);
                            stack.push((s2, o2));
                        }
                    }
                }
            }
            let mut sorted: Vec<_> = paths.into_iter().collect();
            sorted.sort();
            for (states, outputs) in sorted {
                let (f, r) = (forward_of(&states, &outputs), reverse_of(&states, &outputs));
                let dev = (f - r).abs();
                check.paths_checked += 1;
                check.max_deviation = check.max_deviation.max(dev);
                if dev > tol && check.violating.is_none() {
                    check.holds = false;
                    check.violating = Some(ReversePath {
                        actions: seq.clone(),
                        outputs,
                        states,
                        forward: f,
                        reverse: r,
                    });
                }
            }
        }
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, DeckVariant};
    use crate::model::{Alphabet, DEFAULT_TOL};
    use crate::oracle::{for_each_word, word_probability};
    use rand::{seq::SliceRandom, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn budget() -> Budget {
        Budget::default()
    }

    fn coin() -> Transducer {
        let bits = Alphabet::numbered(2).unwrap();
        Transducer::from_fn("coin", vec!["s".into()], bits.clone(), bits, vec![1.0], |y, _, a, _| {
            if y == a {
                0.7
            } else {
                0.3
            }
        })
        .unwrap()
    }

    #[test]
    fn marginal_examples() {
        let a = fixtures::parity_flip();
        let m = state_marginals(&a, &Policy::IidUniform, 2, budget()).unwrap();
        assert!((m.state(1)[1] - 0.5).abs() < 1e-15);
        for tau in 0..=2 {
            assert!((m.joint(tau).sum() - 1.0).abs() < 1e-12);
        }
        let d = fixtures::delay_channel();
        let m = state_marginals(&d, &Policy::IidUniform, 3, budget()).unwrap();
        for tau in 1..=3 {
            assert_eq!(m.state(tau), DVector::from_vec(vec![0.5, 0.5]));
        }
        let c = fixtures::mixture_hmm();
        let m = state_marginals(&c, &Policy::IidUniform, 2, budget()).unwrap();
        let expected = c.state_matrix(0) * c.initial();
        assert!((m.state(1) - expected).norm() < 1e-15);
    }

    #[test]
    fn history_policies_are_enumerated() {
        // a table that reproduces the uniform law must give the same marginals
        let a = fixtures::parity_flip();
        let mut table = std::collections::HashMap::new();
        table.insert(History::empty(), vec![0.5, 0.5]);
        let ht = state_marginals(&a, &Policy::HistoryTable(table), 3, budget()).unwrap();
        let iid = state_marginals(&a, &Policy::IidUniform, 3, budget()).unwrap();
        for tau in 0..=3 {
            assert!((ht.joint(tau) - iid.joint(tau)).norm() < 1e-12);
        }
        // always flip after observing 0
        let mut table = std::collections::HashMap::new();
        for len in 0..3 {
            for_each_word(&a, len, |h, _| {
                if h.outputs().last() == Some(&0) {
                    table.insert(h.clone(), vec![0.0, 1.0]);
                }
            });
        }
        table.insert(History::empty(), vec![0.0, 1.0]);
        let m = state_marginals(&a, &Policy::HistoryTable(table), 1, budget()).unwrap();
        assert_eq!(m.state(1), DVector::from_vec(vec![0.0, 1.0]));
    }

    #[test]
    fn reversibility_verdicts() {
        let a = fixtures::parity_flip();
        let v = check_reversible(&a, 4, DEFAULT_TOL, budget()).unwrap();
        assert!(v.reversible);
        assert_eq!(v.route, ReversibilityRoute::ActionCounifilar);
        assert!(reversibility_condition(&a, 4, DEFAULT_TOL, budget()).unwrap().reversible);

        let d = fixtures::delay_channel();
        let v = check_reversible(&d, 3, DEFAULT_TOL, budget()).unwrap();
        assert!(!v.reversible);
        let w = v.witness.unwrap();
        assert_eq!(w.tau, 1);
        assert_ne!(w.prefix, w.other_prefix);

        assert!(check_reversible(&coin(), 4, DEFAULT_TOL, budget()).unwrap().reversible);
    }

    #[test]
    fn card_deck_reversibility() {
        let cyc = fixtures::card_deck(2, 2, DeckVariant::Cyclic).unwrap();
        assert!(is_action_counifilar(&cyc, DEFAULT_TOL));
        assert!(reversibility_condition(&cyc, 4, DEFAULT_TOL, budget()).unwrap().reversible);
        let fs = fixtures::card_deck(2, 2, DeckVariant::FlipShuffle).unwrap();
        let v = check_reversible(&fs, 4, DEFAULT_TOL, budget()).unwrap();
        assert!(!v.reversible);
        assert_eq!(v.witness.unwrap().action, 1);
    }

    #[test]
    fn counifilarity() {
        assert!(is_action_counifilar(&fixtures::parity_flip(), DEFAULT_TOL));
        assert!(!is_action_counifilar(&fixtures::parity_flip_redundant(), DEFAULT_TOL));
    }

    #[test]
    fn reverse_kernel_examples() {
        let a = fixtures::parity_flip();
        let k = reverse_kernel(&a, &Policy::IidUniform, 1, DEFAULT_TOL, budget()).unwrap();
        for act in 0..2 {
            for later in 0..2 {
                let earlier = later ^ act;
                assert_eq!(k.prob(earlier, earlier, act, later), 1.0);
            }
        }
        let k0 = reverse_kernel(&a, &Policy::IidUniform, 0, DEFAULT_TOL, budget()).unwrap();
        assert_eq!(k0.defined, vec![vec![true, false], vec![false, true]]);

        let c = coin();
        let k = reverse_kernel(&c, &Policy::IidUniform, 2, DEFAULT_TOL, budget()).unwrap();
        assert_eq!(k.matrices(), c.kernel());
    }

    #[test]
    fn reverse_columns_normalize_for_any_input() {
        for t in [fixtures::delay_channel(), fixtures::mixture_hmm(), fixtures::parity_flip_redundant()] {
            for policy in [Policy::IidUniform, Policy::IidWeighted(vec![0.2, 0.8])] {
                if let Policy::IidWeighted(_) = policy {
                    if t.actions().len() != 2 {
                        continue;
                    }
                }
                for k in reverse_kernels(&t, &policy, 4, DEFAULT_TOL, budget()).unwrap() {
                    assert!(k.normalization_error() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn reverse_factorisation() {
        let a = fixtures::parity_flip();
        let v = verify_reverse_generates(&a, &Policy::IidUniform, 4, 1e-12, budget()).unwrap();
        assert!(v.holds && v.max_deviation <= 1e-12);
        let two = fixtures::card_deck(1, 1, DeckVariant::Cyclic).unwrap();
        assert!(verify_reverse_generates(&two, &Policy::IidUniform, 4, 1e-12, budget()).unwrap().holds);
        let d = fixtures::delay_channel();
        let v = verify_reverse_generates(&d, &Policy::IidUniform, 2, 1e-9, budget()).unwrap();
        assert!(!v.holds);
        let p = v.violating.unwrap();
        assert!((p.forward - p.reverse).abs() > 1e-9);
    }

    #[test]
    fn reversal_preserves_word_probabilities() {
        for t in [fixtures::parity_flip(), fixtures::card_deck(2, 2, DeckVariant::Cyclic).unwrap(), coin()] {
            let kernels = reverse_kernels(&t, &Policy::IidWeighted(vec![0.3, 0.7]), 4, DEFAULT_TOL, budget()).unwrap();
            let mut words = Vec::new();
            for_each_word(&t, 5, |h, _| words.push(h.clone()));
            for h in words {
                let p = word_probability(&t, &h).unwrap();
                let r = reverse_word_probability(&t, &kernels, &h).unwrap();
                assert!((p - r).abs() <= 1e-9, "{}: {h}", t.name());
            }
        }
    }

    fn permutation_transducer(seed: u64) -> Transducer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let perms: Vec<Vec<usize>> = (0..2)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let emit = [0.9, 0.6, 0.3, 0.1];
        Transducer::from_fn(
            format!("perm-{seed}"),
            (0..n).map(|i| format!("s{i}")).collect(),
            Alphabet::numbered(2).unwrap(),
            Alphabet::numbered(2).unwrap(),
            vec![0.4, 0.3, 0.2, 0.1],
            |y, to, a, from| {
                let e = if y == 0 { emit[from] } else { 1.0 - emit[from] };
                if perms[a][from] == to {
                    e
                } else {
                    0.0
                }
            },
        )
        .unwrap()
    }

    #[test]
    fn fast_path_is_sound() {
        let mut cases: Vec<Transducer> = fixtures::all().into_iter().map(|(_, t)| t).collect();
        cases.extend((0..20).map(permutation_transducer));
        for t in cases {
            if is_action_counifilar(&t, DEFAULT_TOL) {
                let v = reversibility_condition(&t, 4, DEFAULT_TOL, budget()).unwrap();
                assert!(v.reversible, "{}", t.name());
                let r = verify_reverse_generates(&t, &Policy::IidUniform, 3, 1e-9, budget()).unwrap();
                assert!(r.holds, "{}: {:?}", t.name(), r.violating);
            }
        }
    }
}
