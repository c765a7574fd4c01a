//! Beamforming optimization for IRS-assisted downlink systems under a
//! phase-shift-dependent power consumption (PS-DPC) model.
//!
//! A 1-bit IRS built from PIN diodes draws power proportional to the number of
//! diodes in the on-state, so the total system budget has to be split between
//! BS transmit power and IRS reflection quality. This crate implements the
//! joint power-allocation / beamforming solvers for that setting:
//!
//! - [`gbd`]: exact single-user solver alternating a closed-form convex primal
//!   with a binary master problem connected by valid linear cuts.
//! - [`scsi`]: low-complexity single-user design whose power split is computed
//!   offline from channel statistics.
//! - [`jpabf`]: multi-user sum-rate maximization through a WMMSE reformulation
//!   with two coordinate-descent pin-vector updates (`FOpt` and `FScale`).
//! - [`baselines`]: alternating-optimization and PS-DPC-blind reference
//!   methods.
//! - [`milp`]: self-contained branch-and-bound solver for the master problem.
//! - [`harness`]: seeded Monte-Carlo experiment sweeps with CSV output, driven
//!   by the `irsbeam` CLI.

pub mod baselines;
pub mod channel;
pub mod gbd;
pub mod harness;
pub mod jpabf;
pub mod milp;
pub mod model;
pub mod scsi;

use num_complex::Complex;

/// Double-precision complex scalar used throughout.
pub type C64 = Complex<f64>;
/// Dense dynamically-sized complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense dynamically-sized complex vector.
pub type CVec = nalgebra::DVector<C64>;
