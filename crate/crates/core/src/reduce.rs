//! History-vector spans, canonical dimension and quasi-probabilistic
//! reduction of transducers.
//!
//! The history vector of `h = ((a_0,y_0), .., (a_t,y_t))` is
//! `w(h) = T_0ᵀ ⋯ T_tᵀ · u` (with `u = 1` for transducers): its `k`-th
//! entry is the probability of `h` when the machine starts in state `k`.
//! Prepending a step is one matrix product, `w(σ·h) = T_σᵀ · w(h)`, so the
//! vectors are generated layer by layer in that direction.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SVD};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GeneralizedTransducer, History, Realization};
use crate::oracle::{word_count, Budget};

/// The vectors `w(h)` for every history up to `max_len`, one column each.
#[derive(Debug, Clone)]
pub struct HistoryMatrix {
    histories: Vec<History>,
    matrix: DMatrix<f64>,
    max_len: usize,
    built_len: usize,
    saturated: bool,
}

impl HistoryMatrix {
    pub fn histories(&self) -> &[History] {
        &self.histories
    }

    /// `n × m` matrix whose columns follow [`HistoryMatrix::histories`].
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn column(&self, h: &History) -> Option<DVector<f64>> {
        let i = self.histories.iter().position(|x| x == h)?;
        Some(self.matrix.column(i).into_owned())
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Longest history length actually generated.
    pub fn built_len(&self) -> usize {
        self.built_len
    }

    /// Whether generation stopped because the rank did not grow.
    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn rank(&self, tol: f64) -> usize {
        numerical_rank(&self.matrix, tol)
    }
}

/// Number of singular values above `tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

fn columns_to_matrix(n: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

fn collect_layers<R: Realization>(
    m: &R,
    max_len: usize,
    tol: f64,
    budget: Budget,
    seed: DVector<f64>,
    step: impl Fn(&R, usize, usize, &DVector<f64>) -> DVector<f64>,
    extend: impl Fn(&History, usize, usize) -> History,
) -> Result<HistoryMatrix> {
    let na = m.actions().len();
    let ny = m.outputs().len();
    budget.check(word_count(na * ny, max_len))?;
    let n = m.dim();
    let mut histories = vec![History::empty()];
    let mut cols = vec![seed];
    let mut layer: Vec<usize> = vec![0];
    let mut rank = numerical_rank(&columns_to_matrix(n, &cols), tol);
    let mut built_len = 0;
    let mut saturated = false;
    for len in 1..=max_len {
        let mut next = Vec::with_capacity(layer.len() * na * ny);
        for &i in &layer {
            for a in 0..na {
                for y in 0..ny {
                    let v = step(m, a, y, &cols[i]);
                    histories.push(extend(&histories[i], a, y));
                    cols.push(v);
                    next.push(cols.len() - 1);
                }
            }
        }
        layer = next;
        built_len = len;
        let new_rank = numerical_rank(&columns_to_matrix(n, &cols), tol);
        if new_rank == rank {
            saturated = true;
            break;
        }
        rank = new_rank;
    }
    Ok(HistoryMatrix {
        matrix: columns_to_matrix(n, &cols),
        histories,
        max_len,
        built_len,
        saturated,
    })
}

/// `w(h)` for the empty history and every history of length `1..=max_len`,
/// stopping early once one more length leaves the rank unchanged.
pub fn history_vectors<R: Realization>(m: &R, max_len: usize, tol: f64, budget: Budget) -> Result<HistoryMatrix> {
    let prepend = |h: &History, a: usize, y: usize| History::from_steps(&[(a, y)]).concat(h);
    collect_layers(m, max_len, tol, budget, m.left(), |m, a, y, w| m.matrix(a, y).transpose() * w, prepend)
}

/// Forward vectors `T_t ⋯ T_0 · v`, the dual of [`history_vectors`].
pub fn reachable_vectors<R: Realization>(m: &R, max_len: usize, tol: f64, budget: Budget) -> Result<HistoryMatrix> {
    let append = |h: &History, a: usize, y: usize| h.extended(a, y);
    collect_layers(m, max_len, tol, budget, m.right().clone(), |m, a, y, v| m.matrix(a, y) * v, append)
}

/// Rank of the history-vector span, generated up to length `n - 1`.
pub fn canonical_dimension<R: Realization>(m: &R, tol: f64, budget: Budget) -> Result<usize> {
    let hm = history_vectors(m, m.dim().saturating_sub(1), tol, budget)?;
    Ok(hm.rank(tol))
}

/// Orthonormal basis (left singular vectors above `tol · σ_max`) of the
/// column span.
fn span_basis(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let svd = SVD::new(m.clone(), true, false);
    let max = svd.singular_values.max();
    if max <= 0.0 {
        return Err(Error::Invariant("history-vector span is the zero space".into()));
    }
    let u = svd.u.expect("requested left singular vectors");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol * max)
        .collect();
    Ok(DMatrix::from_fn(m.nrows(), keep.len(), |i, j| u[(i, keep[j])]))
}

fn project<R: Realization>(m: &R, c: &DMatrix<f64>) -> Result<GeneralizedTransducer> {
    let ct = c.transpose();
    let mut matrices = Vec::with_capacity(m.actions().len() * m.outputs().len());
    for a in 0..m.actions().len() {
        for y in 0..m.outputs().len() {
            matrices.push(&ct * m.matrix(a, y) * c);
        }
    }
    GeneralizedTransducer::new(
        m.actions().clone(),
        m.outputs().clone(),
        matrices,
        &ct * m.left(),
        &ct * m.right(),
    )
}

/// Projects onto the history-vector span: with `C` an orthonormal basis of
/// that span, `Ã = Cᵀ·A·C`, `ũ = Cᵀ·u`, `ṽ = Cᵀ·v`. With `both_sides`,
/// the result is further projected onto the span of its forward vectors,
/// which yields a minimal realization.
pub fn reduce_generalized<R: Realization>(
    m: &R,
    tol: f64,
    both_sides: bool,
    budget: Budget,
) -> Result<GeneralizedTransducer> {
    let hm = history_vectors(m, m.dim().saturating_sub(1), tol, budget)?;
    let c = span_basis(hm.matrix(), tol)?;
    let g = project(m, &c)?;
    if !both_sides {
        return Ok(g);
    }
    let rm = reachable_vectors(&g, g.dims().saturating_sub(1), tol, budget)?;
    let d = span_basis(rm.matrix(), tol)?;
    project(&g, &d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InterfaceViolation {
    /// A word whose induced value lies outside `[0, 1]`.
    OutOfRange { history: History, value: f64 },
    /// An action word whose output words do not sum to one.
    Unnormalized { actions: Vec<usize>, total: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct InterfaceReport {
    pub violations: Vec<InterfaceViolation>,
    pub words_checked: usize,
}

impl InterfaceReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that a realization induces probabilities on every word up to
/// `depth`: values in `[-tol, 1 + tol]`, and for every action word the
/// output words summing to one within `depth · tol`.
pub fn gt_validate_interface<R: Realization>(m: &R, depth: usize, tol: f64, budget: Budget) -> Result<InterfaceReport> {
    budget.check(word_count(m.actions().len() * m.outputs().len(), depth))?;
    let left = m.left();
    let mut report = InterfaceReport::default();
    let mut totals: HashMap<Vec<usize>, f64> = HashMap::new();
    crate::oracle::for_each_word(m, depth, |h, alpha| {
        let value = left.dot(alpha);
        report.words_checked += 1;
        if value < -tol || value > 1.0 + tol {
            report.violations.push(InterfaceViolation::OutOfRange {
                history: h.clone(),
                value,
            });
        }
        *totals.entry(h.actions().to_vec()).or_insert(0.0) += value;
    });
    let slack = depth.max(1) as f64 * tol;
    let mut unnormalized: Vec<(Vec<usize>, f64)> =
        totals.into_iter().filter(|(_, total)| (total - 1.0).abs() > slack).collect();
    unnormalized.sort_by(|x, y| (x.0.len(), &x.0).cmp(&(y.0.len(), &y.0)));
    report.violations.extend(
        unnormalized
            .into_iter()
            .map(|(actions, total)| InterfaceViolation::Unnormalized { actions, total }),
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, RandomKind};
    use crate::model::{Alphabet, Transducer, DEFAULT_TOL};
    use crate::oracle::{equivalent, for_each_word, word_probability};

    fn budget() -> Budget {
        Budget::default()
    }

    #[test]
    fn indicator_columns_of_parity_flip() {
        let a = fixtures::parity_flip();
        let hm = history_vectors(&a, 1, DEFAULT_TOL, budget()).unwrap();
        let col = |steps: &[(usize, usize)]| hm.column(&History::from_steps(steps)).unwrap();
        assert_eq!(col(&[]), DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(col(&[(0, 0)]), DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(col(&[(0, 1)]), DVector::from_vec(vec![0.0, 1.0]));
    }

    #[test]
    fn columns_are_start_state_probabilities() {
        // brute force: restart the machine in each state
        let c = fixtures::mixture_hmm();
        let hm = history_vectors(&c, 2, 0.0, budget()).unwrap();
        assert_eq!(hm.built_len(), 2);
        for (j, h) in hm.histories().iter().enumerate() {
            for k in 0..3 {
                let mut start = DVector::zeros(3);
                start[k] = 1.0;
                let restarted = c.clone().with_initial(start).unwrap();
                let p = word_probability(&restarted, h).unwrap();
                assert!((hm.matrix()[(k, j)] - p).abs() < 1e-12);
            }
            let col = hm.matrix().column(j);
            assert!((col[2] - 0.5 * (col[0] + col[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_dimensions() {
        assert_eq!(canonical_dimension(&fixtures::parity_flip(), DEFAULT_TOL, budget()).unwrap(), 2);
        assert_eq!(canonical_dimension(&fixtures::parity_flip_redundant(), DEFAULT_TOL, budget()).unwrap(), 2);
        assert_eq!(canonical_dimension(&fixtures::mixture_hmm(), DEFAULT_TOL, budget()).unwrap(), 2);
    }

    #[test]
    fn budget_is_enforced() {
        let t = fixtures::random_transducer(2, 3, 3, RandomKind::Dense, 1);
        let err = history_vectors(&t, 12, DEFAULT_TOL, Budget::new(1000)).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    fn assert_same_words<A: Realization, B: Realization>(x: &A, y: &B, len: usize, tol: f64) {
        let mut values = Vec::new();
        for_each_word(x, len, |h, _| values.push(h.clone()));
        for h in values {
            let (p, q) = (word_probability(x, &h).unwrap(), word_probability(y, &h).unwrap());
            assert!((p - q).abs() <= tol, "{h}: {p} vs {q}");
        }
    }

    #[test]
    fn reduction_of_mixture() {
        let c = fixtures::mixture_hmm();
        let g = reduce_generalized(&c, DEFAULT_TOL, false, budget()).unwrap();
        assert_eq!(g.dims(), 2);
        assert_same_words(&c, &g, 8, 1e-9);
        let again = reduce_generalized(&g, DEFAULT_TOL, false, budget()).unwrap();
        assert_eq!(again.dims(), 2);
        assert!(gt_validate_interface(&g, 6, 1e-9, budget()).unwrap().is_valid());
    }

    #[test]
    fn full_rank_fixture_is_not_reduced() {
        let a = fixtures::parity_flip();
        let g = reduce_generalized(&a, DEFAULT_TOL, false, budget()).unwrap();
        assert_eq!(g.dims(), 2);
        assert!(gt_validate_interface(&g, 6, 1e-9, budget()).unwrap().is_valid());
        assert_same_words(&a, &g, 8, 1e-9);
    }

    #[test]
    fn both_sides_can_shrink_further() {
        // the unreachable state s1 is observable but never visited
        let bits = Alphabet::numbered(2).unwrap();
        let t = Transducer::from_fn("stuck", vec!["s0".into(), "s1".into()], Alphabet::numbered(1).unwrap(), bits, vec![1.0, 0.0], |y, to, _, from| {
            match (from, y, to) {
                (0, 0, 0) | (1, 1, 1) => 1.0,
                _ => 0.0,
            }
        })
        .unwrap();
        let one = reduce_generalized(&t, DEFAULT_TOL, false, budget()).unwrap();
        assert_eq!(one.dims(), 2);
        let both = reduce_generalized(&t, DEFAULT_TOL, true, budget()).unwrap();
        assert_eq!(both.dims(), 1);
        assert_same_words(&t, &both, 6, 1e-12);
    }

    #[test]
    fn hand_built_violation_is_reported() {
        let g = GeneralizedTransducer::new(
            Alphabet::numbered(1).unwrap(),
            Alphabet::numbered(1).unwrap(),
            vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5])],
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![2.0, -1.0]),
        )
        .unwrap();
        let report = gt_validate_interface(&g, 3, 1e-9, budget()).unwrap();
        assert!(!report.is_valid());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, InterfaceViolation::OutOfRange { .. })));
    }

    #[test]
    fn random_reductions_preserve_the_interface() {
        for seed in 0..25u64 {
            let n = 1 + (seed as usize % 5);
            let t = fixtures::random_transducer(n, 2, 2, RandomKind::Dense, 100 + seed);
            let d = canonical_dimension(&t, DEFAULT_TOL, budget()).unwrap();
            assert!(d <= n);
            let g = reduce_generalized(&t, DEFAULT_TOL, false, budget()).unwrap();
            assert_eq!(g.dims(), d);
            assert_eq!(canonical_dimension(&g, DEFAULT_TOL, budget()).unwrap(), d);
            assert!(equivalent(&t, &g, 2 * n, 1e-9).unwrap().equivalent, "seed {seed}");
            let b = reduce_generalized(&t, DEFAULT_TOL, true, budget()).unwrap();
            assert!(b.dims() <= d);
            assert!(equivalent(&t, &b, 2 * n, 1e-9).unwrap().equivalent, "seed {seed}");
        }
    }
}
