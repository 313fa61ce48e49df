//! Numerical laboratory for nearest-neighbour lattice spin systems whose
//! spins live on the real line or on the first Heisenberg group.
//!
//! The crate provides
//! - group arithmetic, the Carnot-Caratheodory metric and horizontal
//!   finite-difference calculus ([`geometry`]),
//! - phases, interactions and finite-window Hamiltonians with fixed boundary
//!   data, plus a numerical audit of the structural assumptions they are
//!   expected to satisfy ([`model`], [`audit`]),
//! - deterministic tensor-grid quadrature for one-site and tiny-lattice
//!   measures, the brute-force oracle behind every fitted constant
//!   ([`quadrature`], [`tiny_lattice`]),
//! - Metropolis-within-Gibbs checkerboard dynamics with counter-based
//!   seeding ([`dynamics`]),
//! - estimation and fitting of coercive-inequality constants (U-bound,
//!   Poincare, weak log-Sobolev, sweep contractions, convergence rate,
//!   global log-Sobolev, tail bounds) over a family of smooth compactly
//!   supported test functions ([`inequality`], [`testfn`]),
//! - a CLI runner with config files, golden-value regression and CSV/JSON
//!   emission ([`config`], [`runner`], [`golden`]).

pub mod audit;
pub mod config;
pub mod dynamics;
pub mod estimators;
pub mod geometry;
pub mod golden;
pub mod inequality;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod runner;
pub mod svg;
pub mod testfn;
pub mod tiny_lattice;
