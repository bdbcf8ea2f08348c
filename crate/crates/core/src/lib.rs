//! Exact symbolic engine for filtered Frobenius data over truncated Witt
//! rings: chart validation, divided-Frobenius operators, de Rham
//! subsheaves associated to Higgs subsheaves, Cartier--Katz descent, and
//! exponential-twisting degree checks on two-chart projective lines.
//!
//! All arithmetic is exact; there are no floating-point tolerances
//! anywhere. See the `fixture` module for the on-disk `mfv1` format and
//! the `report` module for the machine-readable verdict format.

pub mod error;
pub mod scalar;
mod polyutil;
pub mod ring;
pub mod matrix;
pub mod chart;
pub mod submodule;
pub mod associate;
pub mod glued;
pub mod descent;
pub mod random;
pub mod fixture;
pub mod report;

pub use error::{Error, Result};
pub use scalar::{factorial_inverse, ord_factorial_ratio, MultiIndex, PadicScalar};
pub use ring::{ChartRing, Place, RingElement};
pub use matrix::Mat;
pub use chart::{FilteredDeRhamChart, FrobeniusLifting, HiggsChart};
pub use submodule::SubmodulePresentation;
pub use report::{CheckResult, Report, Status};
