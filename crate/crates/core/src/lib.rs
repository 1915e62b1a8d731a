//! Numerical laboratory for Yang-Mills connections on periodic lattices.
//!
//! The modules build on one another: [`algebra`] provides U(1) and SU(2),
//! [`lattice`] the link fields and covariant calculus, [`functional`] the
//! action with its derivatives and spectrum, [`gauge`] Coulomb projection and
//! the standard form of a path, [`flow`] the gradient flow, [`asymptotics`]
//! the regime and rate diagnostics, and [`cone`] the continuum cone tests.
//! [`io`] reads and writes the on-disk formats.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod algebra;
pub mod asymptotics;
pub mod cone;
pub mod configs;
mod dense;
pub mod flow;
pub mod functional;
pub mod gauge;
pub mod io;
pub mod lattice;
pub mod rng;

pub use algebra::{AlgebraElement, AlgebraError, GroupElement, GroupId};
pub use asymptotics::{AsymptoticsError, LojasiewiczFit, RateFit, RateModel, RegimeIndex, RegimeReport, SimonAudit};
pub use cone::{ConeError, CurvatureField, FieldTable, SampledBallField};
pub use flow::{FlowConfig, FlowError, FlowOutcome, FlowSample, FlowScheme, FlowTrace};
pub use functional::{FunctionalError, SpectrumReport};
pub use gauge::{CoulombOptions, GaugeError, StandardForm, StandardFormCertificate};
pub use io::IoError;
pub use lattice::{GaugeField, Lattice, LatticeError, LinkField, OneForm, PathConnection, ZeroForm};
pub use rng::LabRng;

/// Any failure raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
