//! Privacy-preserving transmission/distribution optimal power flow.
//!
//! Distribution operators describe their networks to the transmission
//! operator only through learned surrogates: a convex polytope over the
//! DS operating vector (PCC voltages and DG set-points) and quadratic
//! regressors for the power exchanged at each PCC. The transmission-side
//! OPF embeds these surrogates in place of the DS network model.

pub mod acopf;
pub mod bench;
pub mod error;
pub mod fixtures;
pub mod netmodel;
pub mod powerflow;
pub mod ppopf;
pub mod sampling;
pub mod surrogate;

pub use error::{Error, Result};
