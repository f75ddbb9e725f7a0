//! Bi-directional mixed-state matrices and smoothing.
//!
//! For a window `h = h_{τ:t}` and a prior over `S_τ`, the BDMSM is the joint
//! posterior `ρ[s_{t+1}][s_τ] = Pr(S_τ = s_τ, S_{t+1} = s_{t+1} | h)`. Row
//! sums give the predictive belief over `S_{t+1}`; column sums give the
//! retrodictive belief over `S_τ`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::beliefs::{self, BeliefState};
use crate::error::{Error, Result};
use crate::model::{History, Transducer};

#[derive(Debug, Clone, PartialEq)]
pub struct Bdmsm {
    matrix: DMatrix<f64>,
    window: History,
}

impl Bdmsm {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn window(&self) -> &History {
        &self.window
    }

    pub fn total(&self) -> f64 {
        self.matrix.sum()
    }
}

/// Belief over the first state of a window, given the whole window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrodictiveBelief(pub BeliefState);

fn normalize(m: DMatrix<f64>, window: History) -> Result<Bdmsm> {
    let z = m.sum();
    if !(z > 0.0) {
        return Err(Error::ImpossibleHistory { probability: z });
    }
    Ok(Bdmsm { matrix: m / z, window })
}

/// `ρ = T^(h)·diag(prior) / 1ᵀ·T^(h)·prior` with `T^(h)` the time-ordered
/// product over the window.
pub fn bdmsm_with_prior(t: &Transducer, h: &History, prior: &DVector<f64>) -> Result<Bdmsm> {
    h.check_alphabets(t.actions().len(), t.outputs().len())?;
    if prior.len() != t.n_states() {
        return Err(Error::Structure(format!(
            "prior has {} entries, transducer has {} states",
            prior.len(),
            t.n_states()
        )));
    }
    let mut m = DMatrix::from_diagonal(prior);
    for (a, y) in h.steps() {
        m = t.matrix(a, y) * m;
    }
    normalize(m, h.clone())
}

/// BDMSM of a window starting at time zero, prior = the initial law.
pub fn bdmsm_from_word(t: &Transducer, h: &History) -> Result<Bdmsm> {
    bdmsm_with_prior(t, h, t.initial())
}

/// `ρ' = T^(y|a)·ρ / 1ᵀ·T^(y|a)·ρ·1`.
pub fn bdmsm_forward(t: &Transducer, rho: &Bdmsm, action: usize, output: usize) -> Result<Bdmsm> {
    History::from_steps(&[(action, output)]).check_alphabets(t.actions().len(), t.outputs().len())?;
    let m = t.matrix(action, output) * &rho.matrix;
    let z = m.sum();
    if !(z > 0.0) {
        return Err(Error::ImpossibleObservation { normaliser: z });
    }
    Ok(Bdmsm {
        matrix: m / z,
        window: rho.window.extended(action, output),
    })
}

pub fn predictive_from_bdmsm(rho: &Bdmsm) -> BeliefState {
    let m = &rho.matrix;
    BeliefState::from_vector(&DVector::from_fn(m.nrows(), |i, _| m.row(i).sum()))
}

pub fn retrodictive_from_bdmsm(rho: &Bdmsm) -> RetrodictiveBelief {
    let m = &rho.matrix;
    RetrodictiveBelief(BeliefState::from_vector(&DVector::from_fn(m.ncols(), |j, _| m.column(j).sum())))
}

/// Prepends the step `(a_prev, y_prev)` to the window:
/// `ρ' ∝ ρ·diag(cur)⁻¹·T^(y_prev|a_prev)·diag(prev)`, where `cur` and
/// `prev` are the state marginals at the old and new window starts.
///
/// The result agrees with [`bdmsm_with_prior`] on the longer window only if
/// `ρ` was built with prior `cur` and both marginals come from one action
/// law under which the initial state is independent of later actions.
pub fn bdmsm_reverse_extend(
    t: &Transducer,
    rho: &Bdmsm,
    prev_action: usize,
    prev_output: usize,
    prev: &DVector<f64>,
    cur: &DVector<f64>,
    tol: f64,
) -> Result<Bdmsm> {
    History::from_steps(&[(prev_action, prev_output)]).check_alphabets(t.actions().len(), t.outputs().len())?;
    let n = t.n_states();
    if prev.len() != n || cur.len() != n {
        return Err(Error::Structure("marginal diagonals must have one entry per state".into()));
    }
    let mut inverse = DVector::zeros(n);
    for s in 0..n {
        let needed = rho.matrix.column(s).iter().any(|&x| x.abs() > tol);
        if cur[s] > tol {
            inverse[s] = 1.0 / cur[s];
        } else if needed {
            return Err(Error::Singular(format!(
                "marginal of {} is {} but the window puts mass on it",
                t.states()[s],
                cur[s]
            )));
        }
    }
    let m = &rho.matrix * DMatrix::from_diagonal(&inverse) * t.matrix(prev_action, prev_output) * DMatrix::from_diagonal(prev);
    let z = m.sum();
    if !(z > 0.0) {
        return Err(Error::ImpossibleObservation { normaliser: z });
    }
    Ok(Bdmsm {
        matrix: m / z,
        window: History::from_steps(&[(prev_action, prev_output)]).concat(&rho.window),
    })
}

/// `Pr(S_τ | h)` for `τ = 0..=len(h)`: the predictive belief after the
/// prefix `h_{:τ}` is used as the prior of the suffix window, whose
/// column sums give the smoothed slice.
pub fn smooth(t: &Transducer, h: &History) -> Result<Vec<BeliefState>> {
    let total = crate::oracle::word_probability(t, h)?;
    if !(total > 0.0) {
        return Err(Error::ImpossibleHistory { probability: total });
    }
    (0..=h.len())
        .map(|tau| {
            let prior = beliefs::belief_after(t, &h.prefix(tau))?;
            let rho = bdmsm_with_prior(t, &h.suffix(tau), &prior.vector())?;
            Ok(retrodictive_from_bdmsm(&rho).0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, RandomKind};
    use crate::model::{Alphabet, Policy, DEFAULT_TOL};
    use crate::oracle::{sample_trajectory, Budget};
    use crate::reverse::state_marginals;

    /// `Pr(S_τ = · | h)` by summing over every state path.
    fn brute_posterior(t: &Transducer, h: &History, tau: usize) -> Vec<f64> {
        let n = t.n_states();
        let mut out = vec![0.0; n];
        let steps: Vec<(usize, usize)> = h.steps().collect();
        let mut paths: Vec<(Vec<usize>, f64)> = (0..n).map(|s| (vec![s], t.initial()[s])).collect();
        for &(a, y) in &steps {
            paths = paths
                .into_iter()
                .flat_map(|(p, w)| {
                    (0..n)
                        .map(|to| {
                            let mut q = p.clone();
                            let from = *p.last().unwrap();
                            q.push(to);
                            (q, w * t.prob(y, to, a, from))
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
        }
        let total: f64 = paths.iter().map(|p| p.1).sum();
        for (p, w) in paths {
            out[p[tau]] += w / total;
        }
        out
    }

    fn l1(x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
    }

    #[test]
    fn bdmsm_examples() {
        let a = fixtures::parity_flip();
        let rho = bdmsm_from_word(&a, &History::from_steps(&[(1, 0)])).unwrap();
        assert_eq!(rho.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]));
        assert_eq!(predictive_from_bdmsm(&rho).weights(), &[0.0, 1.0]);
        assert_eq!(retrodictive_from_bdmsm(&rho).0.weights(), &[1.0, 0.0]);

        let c = fixtures::mixture_hmm();
        let rho = bdmsm_from_word(&c, &History::from_steps(&[(0, 1)])).unwrap();
        let r = retrodictive_from_bdmsm(&rho).0;
        let expected = [0.04 / 0.53, 0.24 / 0.53, 0.25 / 0.53];
        assert!(l1(r.weights(), &expected) < 1e-12);

        let empty = bdmsm_from_word(&c, &History::empty()).unwrap();
        assert_eq!(empty.matrix(), &DMatrix::from_diagonal(c.initial()));
        assert_eq!(predictive_from_bdmsm(&empty).vector(), *c.initial());
        assert_eq!(retrodictive_from_bdmsm(&empty).0.vector(), *c.initial());
    }

    #[test]
    fn forward_updates() {
        let a = fixtures::parity_flip();
        let word = History::from_steps(&[(1, 0), (0, 1)]);
        let start = bdmsm_from_word(&a, &History::empty()).unwrap();
        let chained = word
            .steps()
            .try_fold(start.clone(), |rho, (x, y)| bdmsm_forward(&a, &rho, x, y))
            .unwrap();
        assert_eq!(chained, bdmsm_from_word(&a, &word).unwrap());

        let b = fixtures::parity_flip_redundant();
        let rho = bdmsm_forward(&b, &bdmsm_from_word(&b, &History::empty()).unwrap(), 1, 0).unwrap();
        assert_eq!(rho.matrix().column(0).as_slice(), &[0.0, 0.5, 0.5]);

        assert!(matches!(
            bdmsm_forward(&a, &start, 0, 1),
            Err(Error::ImpossibleObservation { .. })
        ));
    }

    #[test]
    fn marginal_identities_on_traces() {
        let fixtures = [fixtures::parity_flip(), fixtures::parity_flip_redundant(), fixtures::mixture_hmm()];
        for seed in 0..100u64 {
            let t = &fixtures[seed as usize % 3];
            let len = 1 + seed as usize % 6;
            let h = sample_trajectory(t, &Policy::IidUniform, len, seed).history();
            let rho = bdmsm_from_word(t, &h).unwrap();
            assert!((rho.total() - 1.0).abs() <= 1e-10);
            assert!(rho.matrix().iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
            let mut b = BeliefState::from_vector(t.initial());
            let mut step = bdmsm_from_word(t, &History::empty()).unwrap();
            for (a, y) in h.steps() {
                b = beliefs::predictive_update(t, &b, a, y).unwrap();
                step = bdmsm_forward(t, &step, a, y).unwrap();
            }
            assert!(l1(predictive_from_bdmsm(&rho).weights(), b.weights()) <= 1e-9);
            assert!(l1(retrodictive_from_bdmsm(&rho).0.weights(), &brute_posterior(t, &h, 0)) <= 1e-9);
            assert!((step.matrix() - rho.matrix()).amax() <= 1e-12);
        }
    }

    #[test]
    fn reverse_extension_reproduces_longer_windows() {
        let a = fixtures::parity_flip();
        let budget = Budget::default();
        let m = state_marginals(&a, &Policy::IidUniform, 3, budget).unwrap();
        let mut words = Vec::new();
        crate::oracle::for_each_word(&a, 3, |h, alpha| {
            if alpha.sum() > 0.0 && h.len() >= 2 {
                words.push(h.clone());
            }
        });
        for h in words {
            // window h_{1:} with prior Pr(S_1), extended back by step 0
            let cur = m.state(1);
            let rho = bdmsm_with_prior(&a, &h.suffix(1), &cur).unwrap();
            let (a0, y0) = h.steps().next().unwrap();
            let ext = bdmsm_reverse_extend(&a, &rho, a0, y0, &m.state(0), &cur, DEFAULT_TOL).unwrap();
            let direct = bdmsm_from_word(&a, &h).unwrap();
            assert!((ext.matrix() - direct.matrix()).amax() <= 1e-12, "{h}");
            assert_eq!(ext.window(), &h);
        }
    }

    #[test]
    fn singular_marginal_is_rejected() {
        let a = fixtures::parity_flip();
        let rho = bdmsm_with_prior(&a, &History::from_steps(&[(0, 1)]), &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        let err = bdmsm_reverse_extend(
            &a,
            &rho,
            1,
            0,
            &DVector::from_vec(vec![1.0, 0.0]),
            &DVector::from_vec(vec![1.0, 0.0]),
            DEFAULT_TOL,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn scalar_reverse_extension() {
        let one = Alphabet::numbered(1).unwrap();
        let t = Transducer::from_fn("scalar", vec!["s".into()], one, Alphabet::numbered(2).unwrap(), vec![1.0], |y, _, _, _| {
            if y == 0 {
                0.25
            } else {
                0.75
            }
        })
        .unwrap();
        let ones = DVector::from_vec(vec![1.0]);
        let rho = bdmsm_from_word(&t, &History::from_steps(&[(0, 1)])).unwrap();
        let ext = bdmsm_reverse_extend(&t, &rho, 0, 0, &ones, &ones, DEFAULT_TOL).unwrap();
        assert_eq!(ext.matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn smoothing_examples() {
        let a = fixtures::parity_flip();
        let s = smooth(&a, &History::new(vec![1, 1], vec![0, 1]).unwrap()).unwrap();
        let w: Vec<&[f64]> = s.iter().map(|b| b.weights()).collect();
        assert_eq!(w, vec![&[1.0, 0.0][..], &[0.0, 1.0], &[1.0, 0.0]]);
        let b = fixtures::parity_flip_redundant();
        let s = smooth(&b, &History::from_steps(&[(1, 0)])).unwrap();
        assert_eq!(s[1].weights(), &[0.0, 0.5, 0.5]);
        assert!(matches!(smooth(&a, &History::from_steps(&[(0, 1)])), Err(Error::ImpossibleHistory { .. })));
    }

    #[test]
    fn smoothing_matches_enumeration() {
        let c = fixtures::mixture_hmm();
        for seed in 0..100u64 {
            let h = sample_trajectory(&c, &Policy::IidUniform, 3, seed).history();
            let slices = smooth(&c, &h).unwrap();
            for (tau, slice) in slices.iter().enumerate() {
                assert!(l1(slice.weights(), &brute_posterior(&c, &h, tau)) <= 1e-9);
            }
        }
        let t = fixtures::random_transducer(3, 2, 2, RandomKind::Dense, 5);
        let h = sample_trajectory(&t, &Policy::IidUniform, 5, 5).history();
        for (tau, slice) in smooth(&t, &h).unwrap().iter().enumerate() {
            assert!(l1(slice.weights(), &brute_posterior(&t, &h, tau)) <= 1e-9);
        }
    }
}
