//! Single-atom wavepacket simulator for repeated spatial measurements by a
//! pulsed optical tweezer, with protocol runners, curve fitting and
//! independent validation oracles.

// Negated comparisons are how validators reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fitting;
pub mod grid;
pub mod measurement;
pub mod oracle;
pub mod output;
pub mod potentials;
pub mod propagator;
pub mod protocols;
mod spectral;
pub mod units;

pub use error::{Result, ZenoError};
pub use grid::{Grid, Observables, Wavefunction, gaussian_state, observables, window_probability};
pub use measurement::{MeasurementRecord, MeasurementWindow, Projector, WindowProfile};
pub use potentials::{PotentialTimeline, Profile, Segment, TimeBudget, Well};
pub use propagator::{Boundary, ObservableTrace, Propagator, StepControl};
pub use units::PhysicalParams;
