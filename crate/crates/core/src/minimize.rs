//! Bisimulation by partition refinement and the quotient it induces.
//!
//! Two states are merged when, for every action, they put the same mass on
//! every `(output, class)` cell. Comparing the joint `(y, class)` table
//! rather than the output marginal and the class marginal separately is what
//! makes the quotient kernel well defined for Mealy machines, whose next
//! state may be correlated with the output.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Transducer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    classes: Vec<Vec<usize>>,
    class_of: Vec<usize>,
}

impl Partition {
    pub fn discrete(n: usize) -> Self {
        Partition {
            classes: (0..n).map(|s| vec![s]).collect(),
            class_of: (0..n).collect(),
        }
    }

    pub fn trivial(n: usize) -> Self {
        Partition {
            classes: vec![(0..n).collect()],
            class_of: vec![0; n],
        }
    }

    /// Checks that `classes` are non-empty, disjoint and cover `0..n`.
    /// Members are sorted and classes ordered by their smallest member.
    pub fn from_classes(n: usize, classes: Vec<Vec<usize>>) -> Result<Self> {
        let mut class_of = vec![usize::MAX; n];
        let mut classes: Vec<Vec<usize>> = classes
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        if classes.iter().any(Vec::is_empty) {
            return Err(Error::Structure("partition has an empty class".into()));
        }
        classes.sort_by_key(|c| c[0]);
        for (id, class) in classes.iter().enumerate() {
            for &s in class {
                if s >= n {
                    return Err(Error::Structure(format!("state index {s} out of range")));
                }
                if class_of[s] != usize::MAX {
                    return Err(Error::Structure(format!("state {s} appears in two classes")));
                }
                class_of[s] = id;
            }
        }
        if let Some(s) = class_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Structure(format!("state {s} is not covered")));
        }
        Ok(Partition { classes, class_of })
    }

    /// Partition given by state labels, e.g. `[["s0"], ["s1a", "s1b"]]`.
    pub fn from_labels(t: &Transducer, classes: &[Vec<&str>]) -> Result<Self> {
        let indexed = classes
            .iter()
            .map(|c| {
                c.iter()
                    .map(|l| {
                        t.state_index(l)
                            .ok_or_else(|| Error::Structure(format!("unknown state {l:?}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Partition::from_classes(t.n_states(), indexed)
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class_of(&self, state: usize) -> usize {
        self.class_of[state]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn is_discrete(&self) -> bool {
        self.classes.len() == self.class_of.len()
    }

    pub fn labelled(&self, t: &Transducer) -> Vec<Vec<String>> {
        self.classes
            .iter()
            .map(|c| c.iter().map(|&s| t.states()[s].clone()).collect())
            .collect()
    }
}

/// `κ(y, C | a, s)` for every `(a, y, C)`, flattened action-major.
fn signature(t: &Transducer, part: &Partition, s: usize) -> Vec<f64> {
    let ny = t.outputs().len();
    let k = part.len();
    let mut sig = vec![0.0; t.actions().len() * ny * k];
    for a in 0..t.actions().len() {
        for y in 0..ny {
            let m = t.matrix(a, y);
            for to in 0..t.n_states() {
                sig[(a * ny + y) * k + part.class_of(to)] += m[(to, s)];
            }
        }
    }
    sig
}

fn agree(x: &[f64], y: &[f64], tol: f64) -> bool {
    x.iter().zip(y).all(|(a, b)| (a - b).abs() <= tol)
}

/// One refinement round: a state joins the first new class, within its old
/// class, whose representative (lowest index) has a matching signature.
fn refine(t: &Transducer, part: &Partition, tol: f64) -> Partition {
    let sigs: Vec<Vec<f64>> = (0..t.n_states()).map(|s| signature(t, part, s)).collect();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for old in part.classes() {
        let first_new = classes.len();
        for &s in old {
            let home = (first_new..classes.len()).find(|&c| agree(&sigs[classes[c][0]], &sigs[s], tol));
            match home {
                Some(c) => classes[c].push(s),
                None => classes.push(vec![s]),
            }
        }
    }
    Partition::from_classes(t.n_states(), classes).expect("refinement of a partition is a partition")
}

/// Coarsest bisimulation together with the class count after each round.
pub fn coarsest_bisimulation_trace(t: &Transducer, tol: f64) -> (Partition, Vec<usize>) {
    let mut part = Partition::trivial(t.n_states());
    let mut counts = vec![part.len()];
    loop {
        let next = refine(t, &part, tol);
        counts.push(next.len());
        if next.len() == part.len() {
            return (next, counts);
        }
        part = next;
    }
}

pub fn coarsest_bisimulation(t: &Transducer, tol: f64) -> Partition {
    coarsest_bisimulation_trace(t, tol).0
}

/// Checks that `part` is a bisimulation: every member of a class must match
/// the class representative first on its emission table, then on its
/// `(y, class)` table.
pub fn check_bisimulation(t: &Transducer, part: &Partition, tol: f64) -> Result<()> {
    if part.class_of.len() != t.n_states() {
        return Err(Error::Structure(format!(
            "partition covers {} states, transducer has {}",
            part.class_of.len(),
            t.n_states()
        )));
    }
    let label = |s: usize| t.states()[s].clone();
    for class in part.classes() {
        let rep = class[0];
        for &s in &class[1..] {
            for a in 0..t.actions().len() {
                let (er, es) = (t.emission(a, rep), t.emission(a, s));
                if let Some(y) = (0..er.len()).find(|&y| (er[y] - es[y]).abs() > tol) {
                    return Err(Error::NotBisimulation {
                        state: label(rep),
                        other: label(s),
                        detail: format!(
                            "emission p(y={} | a={}) = {} vs {}",
                            t.outputs().symbol(y),
                            t.actions().symbol(a),
                            er[y],
                            es[y]
                        ),
                    });
                }
            }
        }
    }
    let ny = t.outputs().len();
    let k = part.len();
    for class in part.classes() {
        let rep = class[0];
        let sr = signature(t, part, rep);
        for &s in &class[1..] {
            let ss = signature(t, part, s);
            if let Some(i) = (0..sr.len()).find(|&i| (sr[i] - ss[i]).abs() > tol) {
                let (ay, c) = (i / k, i % k);
                let (a, y) = (ay / ny, ay % ny);
                return Err(Error::NotBisimulation {
                    state: label(rep),
                    other: label(s),
                    detail: format!(
                        "κ(y={}, class {{{}}} | a={}) = {} vs {}",
                        t.outputs().symbol(y),
                        part.labelled(t)[c].join(","),
                        t.actions().symbol(a),
                        sr[i],
                        ss[i]
                    ),
                });
            }
        }
    }
    Ok(())
}

/// The reduction of `t` onto the classes of a bisimulation. Class labels
/// join member labels with `+`.
pub fn quotient(t: &Transducer, part: &Partition, tol: f64) -> Result<Transducer> {
    check_bisimulation(t, part, tol)?;
    let k = part.len();
    let ny = t.outputs().len();
    let mut kernel = Vec::with_capacity(t.actions().len() * ny);
    for a in 0..t.actions().len() {
        for y in 0..ny {
            let m = t.matrix(a, y);
            let mut q = DMatrix::zeros(k, k);
            for (c, class) in part.classes().iter().enumerate() {
                let rep = class[0];
                for to in 0..t.n_states() {
                    q[(part.class_of(to), c)] += m[(to, rep)];
                }
            }
            kernel.push(q);
        }
    }
    let mut initial = DVector::zeros(k);
    for s in 0..t.n_states() {
        initial[part.class_of(s)] += t.initial()[s];
    }
    let labels = part.labelled(t).into_iter().map(|c| c.join("+")).collect();
    Transducer::new(
        t.name().to_string(),
        labels,
        t.actions().clone(),
        t.outputs().clone(),
        kernel,
        initial,
    )
}

pub fn minimize_bisim(t: &Transducer, tol: f64) -> Transducer {
    let part = coarsest_bisimulation(t, tol);
    quotient(t, &part, tol).expect("the coarsest bisimulation passes its own check")
}
