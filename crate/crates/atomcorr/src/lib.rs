//! Monte Carlo simulation and analysis of correlated ultracold-atom
//! detection: chaotic-cloud bunching, degenerate-fermion antibunching,
//! s-wave pair halos, a time-of-flight single-atom detector model, and
//! mixed-event pair-correlation estimation.

pub mod config;
pub mod correlator;
pub mod detector;
pub mod error;
pub mod halo;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sources;
