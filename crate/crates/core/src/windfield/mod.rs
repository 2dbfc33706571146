//! Turbulent 2-D wind field generation, persistence, and sampling.
//!
//! A pseudo-spectral solver ([`FlowSolver`]) advances incompressible flow
//! on a periodic square and a [`WindFieldSeries`] stores its output at a
//! fixed frame cadence. Robots query the series through
//! [`WindFieldSeries::sample`], which interpolates velocity and pressure
//! continuously in space and time.

mod fft;
mod io;
mod series;
mod solver;

pub use io::{read_series, write_series, WindFileError};
pub use series::{
    reynolds_diagnostic, FlowSample, WindFieldSeries, WindFrame, DT_FRAME_DEFAULT,
    SPEED_BOUND_DEFAULT,
};
pub use solver::{FlowSolver, GridSpec, SpectralState, WindError, CFL_LIMIT, CFL_SAFETY};
