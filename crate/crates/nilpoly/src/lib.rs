//! Exact computation in finitely generated nilpotent groups and the
//! combinatorial structures built on top of them: polynomial maps on finite
//! subsets of ℕ, polynomial expressions in several set variables, IP-rings
//! and their monochromaticity searches, generalized polynomials with exact
//! real coefficients, and recurrence checks on finite measure-preserving
//! systems.
//!
//! Everything is desk-scale and exact: group elements are exponent vectors
//! over a polycyclic presentation, measures are rationals, coefficients are
//! rationals or quadratic surds (intervals only as a last resort), and every
//! search is exhaustive within explicit windows, so "not found" is a
//! statement about the window, never a guess.

pub mod error;
pub mod genpoly;
pub mod hjsearch;
pub mod ipcore;
pub mod polymap;
pub mod nilgroup;
pub mod pexpr;
pub mod recurrence;
pub mod zlin;

pub use error::{Error, Result};
