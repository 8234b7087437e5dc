//! Neural-network pulse synthesis for Schrödinger-cat preparation in a
//! cavity dispersively coupled to a transmon.
//!
//! The crate is organised bottom-up:
//!
//! * [`hilbert`] – truncated Fock-space states, operators and Wigner functionals.
//! * [`splines`] – the clamped cubic B-spline basis that encodes drive pulses.
//! * [`dynamics`] – Schrödinger and Lindblad propagation plus the first-order
//!   decoherence correction to the fidelity.
//! * [`gradients`] – reverse-mode derivatives of the corrected loss.
//! * [`controller`] – the dense network, Adam, task sampling and the training curriculum.
//! * [`tomography`] – simulated Wigner tomography, fidelity estimators, heralding and
//!   the measurement error budget.
//! * [`baseline`] – GRAPE followed by Krotov refinement, used as a comparison optimizer.

pub mod baseline;
pub mod controller;
pub mod dynamics;
mod error;
pub mod gradients;
pub mod hilbert;
pub mod linalg;
pub mod splines;
pub mod tomography;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
