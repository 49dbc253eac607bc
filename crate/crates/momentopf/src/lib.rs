//! Sparse second-order moment relaxations for AC optimal power flow.
//!
//! This crate builds polynomial optimization models of AC-OPF from
//! MATPOWER case files, applies term/correlative sparsity patterns (the
//! per-bus "minimal" pattern, with optional neighborhood splitting for large
//! buses, or classical chordal-clique patterns), assembles the block moment
//! SDP at a chosen relaxation order, solves desk-scale instances with an
//! embedded interior-point method or exports SDPA sparse files for external
//! solvers, and certifies results: lower bound, optimality gap against a
//! reference dispatch cost, moment-matrix rank diagnostics, and — when the
//! relaxation is tight — extraction of a global minimizer with independent
//! AC feasibility verification.
//!
//! The `examples/` directory demonstrates each stage end to end; the
//! `momentopf` binary wraps the same pipeline behind `stats`, `solve`,
//! `export`, and `certify` subcommands.

pub mod acopf;
pub mod certify;
pub mod netio;
pub mod poly;
pub mod relax;
pub mod sdp;
pub mod sparsity;

pub use poly::{binomial, Monomial, MonomialBasis, Polynomial};
