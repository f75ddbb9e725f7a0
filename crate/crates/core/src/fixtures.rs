//! Small reference transducers with known structure.
//!
//! | fixture | states | property it exhibits |
//! |---|---|---|
//! | [`parity_flip`] | 2 | deterministic, unifilar, action-counifilar, I-O Moore |
//! | [`parity_flip_redundant`] | 3 | state split of `parity_flip`; `s1a ~ s1b` |
//! | [`mixture_hmm`] | 3 | canonical dimension 2, no bisimilar pair |
//! | [`delay_channel`] | 2 | outputs repeat the previous action; not reversible |
//!
//! [`card_deck`] builds the card-manipulating robot world for small decks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Alphabet, Transducer};

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn delta(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

/// `y = s`, `s' = s ⊕ a`, starting in `s0`.
pub fn parity_flip() -> Transducer {
    let bits = Alphabet::numbered(2).expect("static alphabet");
    Transducer::from_fn(
        "parity-flip",
        labels(&["s0", "s1"]),
        bits.clone(),
        bits,
        vec![1.0, 0.0],
        |y, to, a, from| delta(y == from && to == from ^ a),
    )
    .expect("static fixture")
}

/// `parity_flip` with state `s1` split into two copies entered with
/// probability one half each.
pub fn parity_flip_redundant() -> Transducer {
    let bits = Alphabet::numbered(2).expect("static alphabet");
    Transducer::from_fn(
        "parity-flip-redundant",
        labels(&["s0", "s1a", "s1b"]),
        bits.clone(),
        bits,
        vec![1.0, 0.0, 0.0],
        |y, to, a, from| {
            let emitted = if from == 0 { 0 } else { 1 };
            if y != emitted {
                return 0.0;
            }
            match (a, from) {
                (0, _) => delta(to == from),
                (_, 0) => {
                    if to == 0 {
                        0.0
                    } else {
                        0.5
                    }
                }
                _ => delta(to == 0),
            }
        },
    )
    .expect("static fixture")
}

/// Single-action HMM whose third state is the even mixture (as a
/// joint table over `(y, s')`) of the first two.
pub fn mixture_hmm() -> Transducer {
    let emit_one = [0.2, 0.8];
    let trans = [[0.5, 0.5, 0.0], [0.1, 0.9, 0.0]];
    let product_row = |s: usize, y: usize, to: usize| {
        let e = if y == 1 { emit_one[s] } else { 1.0 - emit_one[s] };
        e * trans[s][to]
    };
    Transducer::from_fn(
        "mixture-hmm",
        labels(&["s0", "s1", "s2"]),
        Alphabet::numbered(1).expect("static alphabet"),
        Alphabet::numbered(2).expect("static alphabet"),
        vec![0.2, 0.3, 0.5],
        |y, to, _, from| match from {
            0 | 1 => product_row(from, y, to),
            _ => 0.5 * product_row(0, y, to) + 0.5 * product_row(1, y, to),
        },
    )
    .expect("static fixture")
}

/// The delay channel, `y = s` and `s' = a`.
pub fn delay_channel() -> Transducer {
    let bits = Alphabet::numbered(2).expect("static alphabet");
    Transducer::from_fn(
        "delay-channel",
        labels(&["s0", "s1"]),
        bits.clone(),
        bits,
        vec![1.0, 0.0],
        |y, to, a, from| delta(y == from && to == a),
    )
    .expect("static fixture")
}

/// Action sets of the card-deck world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeckVariant {
    /// `rotate` moves the top card to the back, `shuffle` draws a uniformly
    /// random arrangement.
    FlipShuffle,
    /// `rotate-left` moves the top card to the back, `rotate-right` the back
    /// card to the top.
    Cyclic,
}

/// Largest deck [`card_deck`] accepts.
pub const MAX_DECK: usize = 8;

/// Card-deck world over the distinct colour arrangements of `reds` red and
/// `blacks` black cards.
///
/// States are labelled by their colour sequence, top card first (`"RRBB"`),
/// in lexicographic order of the red positions. The robot observes the top
/// colour before acting. The deck starts in the first arrangement (all reds
/// on top).
pub fn card_deck(reds: usize, blacks: usize, variant: DeckVariant) -> Result<Transducer> {
    if reds == 0 || blacks == 0 {
        return Err(Error::Precondition("deck needs at least one card of each colour".into()));
    }
    if reds + blacks > MAX_DECK {
        return Err(Error::Precondition(format!(
            "deck of {} cards exceeds the cap of {MAX_DECK}",
            reds + blacks
        )));
    }
    let size = reds + blacks;
    let mut arrangements: Vec<Vec<bool>> = Vec::new();
    red_positions(size, reds, 0, &mut Vec::new(), &mut arrangements);
    let names: Vec<String> = arrangements
        .iter()
        .map(|deck| deck.iter().map(|&red| if red { 'R' } else { 'B' }).collect())
        .collect();
    let index_of = |deck: &[bool]| {
        arrangements
            .iter()
            .position(|d| d.as_slice() == deck)
            .expect("rotations stay inside the arrangement set")
    };
    let rotate_left: Vec<usize> = arrangements
        .iter()
        .map(|d| {
            let mut r = d.clone();
            r.rotate_left(1);
            index_of(&r)
        })
        .collect();
    let rotate_right: Vec<usize> = arrangements
        .iter()
        .map(|d| {
            let mut r = d.clone();
            r.rotate_right(1);
            index_of(&r)
        })
        .collect();
    let n = arrangements.len();
    let (name, actions) = match variant {
        DeckVariant::FlipShuffle => ("flip-shuffle", ["rotate", "shuffle"]),
        DeckVariant::Cyclic => ("cyclic", ["rotate-left", "rotate-right"]),
    };
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    let top_is_red: Vec<bool> = arrangements.iter().map(|d| d[0]).collect();
    Transducer::from_fn(
        format!("card-deck-{reds}-{blacks}-{name}"),
        names,
        Alphabet::new(actions)?,
        Alphabet::new(["red", "black"])?,
        initial,
        |y, to, a, from| {
            let observed = if top_is_red[from] { 0 } else { 1 };
            if y != observed {
                return 0.0;
            }
            match (variant, a) {
                (_, 0) => delta(to == rotate_left[from]),
                (DeckVariant::FlipShuffle, _) => 1.0 / n as f64,
                (DeckVariant::Cyclic, _) => delta(to == rotate_right[from]),
            }
        },
    )
}

fn red_positions(size: usize, left: usize, start: usize, chosen: &mut Vec<usize>, out: &mut Vec<Vec<bool>>) {
    if left == 0 {
        let mut deck = vec![false; size];
        for &p in chosen.iter() {
            deck[p] = true;
        }
        out.push(deck);
        return;
    }
    for p in start..=size - left {
        chosen.push(p);
        red_positions(size, left - 1, p + 1, chosen, out);
        chosen.pop();
    }
}

/// Shape of a seeded random transducer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomKind {
    /// Every column is a random joint over `(y, s')` with about a third of
    /// the cells zeroed; random initial distribution.
    Dense,
    /// One successor per `(s, a, y)`; starts in `s0`.
    Unifilar,
    /// `κ(y, s' | a, s) = μ(y | s)·ν(s' | a, s)`; random initial distribution.
    IoMoore,
}

fn random_dist(rng: &mut ChaCha8Rng, len: usize, zero_fraction: f64) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random::<f64>() < zero_fraction {
                    0.0
                } else {
                    rng.random::<f64>() + 0.05
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return w.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Seeded random valid transducer with numbered alphabets.
pub fn random_transducer(n: usize, actions: usize, outputs: usize, kind: RandomKind, seed: u64) -> Transducer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ny = outputs;
    let mut table = vec![0.0; actions * n * ny * n];
    let at = |a: usize, s: usize, y: usize, to: usize| ((a * n + s) * ny + y) * n + to;
    let initial = match kind {
        RandomKind::Unifilar => {
            let mut p = vec![0.0; n];
            p[0] = 1.0;
            p
        }
        _ => random_dist(&mut rng, n, 0.0),
    };
    match kind {
        RandomKind::Dense => {
            for a in 0..actions {
                for s in 0..n {
                    let joint = random_dist(&mut rng, ny * n, 0.35);
                    for y in 0..ny {
                        for to in 0..n {
                            table[at(a, s, y, to)] = joint[y * n + to];
                        }
                    }
                }
            }
        }
        RandomKind::Unifilar => {
            for a in 0..actions {
                for s in 0..n {
                    let emit = random_dist(&mut rng, ny, 0.2);
                    for (y, &e) in emit.iter().enumerate() {
                        let to = rng.random_range(0..n);
                        table[at(a, s, y, to)] = e;
                    }
                }
            }
        }
        RandomKind::IoMoore => {
            let emit: Vec<Vec<f64>> = (0..n).map(|_| random_dist(&mut rng, ny, 0.2)).collect();
            for a in 0..actions {
                for s in 0..n {
                    let next = random_dist(&mut rng, n, 0.3);
                    for y in 0..ny {
                        for to in 0..n {
                            table[at(a, s, y, to)] = emit[s][y] * next[to];
                        }
                    }
                }
            }
        }
    }
    Transducer::from_fn(
        format!("random-{seed}"),
        (0..n).map(|i| format!("s{i}")).collect(),
        Alphabet::numbered(actions).expect("non-empty alphabet"),
        Alphabet::numbered(outputs).expect("non-empty alphabet"),
        initial,
        |y, to, a, from| table[at(a, from, y, to)],
    )
    .expect("consistent shapes")
}

/// All shipped fixtures with their canonical file stems.
pub fn all() -> Vec<(&'static str, Transducer)> {
    vec![
        ("fix-a", parity_flip()),
        ("fix-b", parity_flip_redundant()),
        ("fix-c", mixture_hmm()),
        ("fix-d", delay_channel()),
        ("card-deck-1-1-cyclic", card_deck(1, 1, DeckVariant::Cyclic).expect("small deck")),
        ("card-deck-2-2-cyclic", card_deck(2, 2, DeckVariant::Cyclic).expect("small deck")),
        (
            "card-deck-2-2-flip-shuffle",
            card_deck(2, 2, DeckVariant::FlipShuffle).expect("small deck"),
        ),
    ]
}
