//! Numerical laboratory for periodic homogenization of elliptic systems
//! with oscillating Robin boundary conditions.

// Index loops mirror the tensor notation; negated comparisons also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod error;
pub mod fem;
pub mod fft;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod oscillatory;
pub mod quadrature;

pub use cell::{CellDiscretization, CellOptions, CorrectorSet, HomogenizedTensor};
pub use error::{HomolabError, Result};
pub use fields::{EllipticityReport, FieldKind, FourierMode, PeriodicField};
pub use geometry::{check_non_resonance, NonResonanceVerdict, SurfaceChart};
pub use harness::{run, ExperimentConfig, ExperimentKind, RateReport};
