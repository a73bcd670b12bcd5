//! Photon-echo quantum memory toolkit for a Λ-type three-level medium.
//!
//! The crate has two halves that check each other:
//!
//! * a time-domain simulator ([`ensemble`]) that co-evolves an
//!   inhomogeneously broadened atomic ensemble and the slowly varying
//!   optical field over a (z, Δ) grid, driven by single-atom dynamics
//!   from [`bloch`];
//! * a set of closed-form results ([`analytic`], [`phasematch`]) for echo
//!   times, coherence signs, propagation directions, and retrieval
//!   efficiencies of the standard rephasing protocols.
//!
//! Protocols (two-pulse echo, double rephasing, controlled double
//! rephasing, controlled single rephasing) are built and validated by
//! [`protocol`], which attaches the analytic predictions to each schedule
//! so a simulation run can be compared against them directly.
//!
//! The accompanying guide in `book/` walks through the physics chapter by
//! chapter; its code snippets are compiled and run as doctests.

pub mod analytic;
pub mod bloch;
pub mod ensemble;
pub mod phasematch;
pub mod protocol;

pub use num_complex::Complex64;
