//! Deterministic hidden-variable dynamics in and out of quantum equilibrium.
//!
//! The crate has three legs:
//!
//! * [`singlet`] — a deterministic nonlocal outcome model for a pair of
//!   2-state systems, with equilibrium/non-equilibrium ensemble measures,
//!   correlations, transition sets and remote-setting signal statistics.
//! * [`modes`], [`grid`], [`guidance`], [`ensemble`], [`signal`] — pilot-wave
//!   dynamics: wavefunctions (exact eigenmode expansions and a Crank–Nicolson
//!   grid integrator), the first-order guidance law, ensemble transport,
//!   coarse-grained relaxation, and the two-particle signalling experiment.
//! * [`kinematics`] — flat and foliated spacetime bookkeeping: Lorentz clock
//!   readings, proper times, lapse fields, and simultaneity-vs-synchrony
//!   reports.
//!
//! Everything is seeded and deterministic: a fixed `(seed, n)` pair produces
//! bit-identical results regardless of how many worker threads run the
//! Monte Carlo loops (see [`mc`]).

pub mod config;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod guidance;
pub mod kinematics;
pub mod mc;
pub mod modes;
pub mod signal;
pub mod singlet;

pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
