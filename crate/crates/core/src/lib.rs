//! Secret-key rates, optimal attacks and security thresholds for
//! continuous-variable QKD through an untrusted relay placed midway between
//! the two parties.
//!
//! * [`gaussian`]: covariance matrices, symplectic spectra, entropies and
//!   heterodyne conditioning.
//! * [`attack`]: symmetric two-mode Gaussian attacks and their
//!   classification on the `(g, g')` correlation plane.
//! * [`rate`]: conditional covariance matrices, Holevo bound, mutual
//!   information and key rates.
//! * [`threshold`]: zero-rate thresholds, distance conversion, optimal
//!   modulation.
//! * [`sim`]: Monte Carlo sampling of the protocol, used as an independent
//!   check on the analytic covariance matrices.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attack;
pub mod error;
pub mod gaussian;
pub mod rate;
pub mod sim;
pub mod threshold;

pub use attack::{AttackClass, AttackKind, AttackParams, NoisePair};
pub use error::{Error, Result};
pub use gaussian::{CovarianceMatrix, SymplecticSpectrum};
pub use rate::{key_rate, Modulation, RateBreakdown, RateConfig};
pub use threshold::{Detectors, Grid, ThresholdCurve, ThresholdPoint, ThresholdSolver};
