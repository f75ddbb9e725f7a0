#![allow(dead_code)]

use vatworld::oracle::sample_trajectory;
use vatworld::{History, Policy, Transducer};

/// Posterior `Pr(S_tau | h)` by summing over every state path.
pub fn brute_posterior(t: &Transducer, h: &History, tau: usize) -> Vec<f64> {
    let n = t.n_states();
    let mut paths: Vec<(Vec<usize>, f64)> = (0..n).map(|s| (vec![s], t.initial()[s])).collect();
    for (a, y) in h.steps() {
        let mut next = Vec::with_capacity(paths.len() * n);
        for (path, w) in &paths {
            let from = *path.last().unwrap();
            for to in 0..n {
                let p = w * t.prob(y, to, a, from);
                if p > 0.0 {
                    let mut q = path.clone();
                    q.push(to);
                    next.push((q, p));
                }
            }
        }
        paths = next;
    }
    let total: f64 = paths.iter().map(|p| p.1).sum();
    let mut out = vec![0.0; n];
    for (path, w) in paths {
        out[path[tau]] += w / total;
    }
    out
}

/// Word probability by summing over every state path.
pub fn brute_probability(t: &Transducer, h: &History) -> f64 {
    let n = t.n_states();
    let mut paths: Vec<(usize, f64)> = (0..n).map(|s| (s, t.initial()[s])).collect();
    for (a, y) in h.steps() {
        paths = paths
            .iter()
            .flat_map(|&(from, w)| (0..n).map(move |to| (to, w * t.prob(y, to, a, from))))
            .collect();
    }
    paths.iter().map(|p| p.1).sum()
}

pub fn l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// Sampled traces, so every one has positive probability.
pub fn traces(t: &Transducer, count: usize, max_len: usize, seed: u64) -> Vec<History> {
    (0..count as u64)
        .map(|i| {
            let len = 1 + (i as usize % max_len);
            sample_trajectory(t, &Policy::IidUniform, len, seed.wrapping_mul(1000).wrapping_add(i)).history()
        })
        .collect()
}

/// Every action sequence of the given length.
pub fn action_words(actions: usize, len: usize) -> Vec<Vec<usize>> {
    let mut words = vec![Vec::new()];
    for _ in 0..len {
        words = words
            .into_iter()
            .flat_map(|w| {
                (0..actions).map(move |a| {
                    let mut v = w.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    words
}

/// Adds a copy of state `s`; mass entering `s` is split `frac : 1 - frac`
/// between the original and the copy, which share outgoing behaviour.
pub fn split_state(t: &Transducer, s: usize, frac: f64) -> Transducer {
    let n = t.n_states();
    let mut states = t.states().to_vec();
    states.push(format!("{}'", states[s]));
    let orig = |i: usize| if i == n { s } else { i };
    let share = |to: usize| match to {
        _ if to == s => frac,
        _ if to == n => 1.0 - frac,
        _ => 1.0,
    };
    let initial = (0..=n).map(|i| t.initial()[orig(i)] * share(i)).collect();
    Transducer::from_fn(
        format!("{}-split", t.name()),
        states,
        t.actions().clone(),
        t.outputs().clone(),
        initial,
        |y, to, a, from| t.prob(y, orig(to), a, orig(from)) * share(to),
    )
    .unwrap()
}
