//! Interfaces, world models and transducers for agents acting in an
//! environment they only see through outputs.
//!
//! The crate covers the full pipeline on finite stochastic transducers:
//! brute-force word probabilities ([`oracle`]), bisimulation quotients
//! ([`minimize`]), linear-algebraic reduction ([`reduce`]), Bayesian belief
//! presentations ([`beliefs`], [`epsilon`]), time reversal ([`reverse`]) and
//! retrodiction ([`retro`]).
//!
//! ```
//! use vatworld::{fixtures, minimize, oracle, DEFAULT_TOL};
//!
//! let split = fixtures::parity_flip_redundant();
//! let minimal = minimize::minimize_bisim(&split, DEFAULT_TOL);
//! assert_eq!(minimal.n_states(), 2);
//! assert!(oracle::equivalent(&minimal, &split, 8, DEFAULT_TOL)?.equivalent);
//! # Ok::<(), vatworld::Error>(())
//! ```

pub mod beliefs;
pub mod cli;
pub mod epsilon;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod minimize;
pub mod model;
pub mod oracle;
pub mod reduce;
pub mod retro;
pub mod reverse;

pub use error::{Error, Result};
pub use model::{Alphabet, GeneralizedTransducer, History, MooreClass, Policy, Realization, Transducer, DEFAULT_TOL};
pub use oracle::Budget;
