//! Fault detection, characterization and localization for radial
//! three-phase distribution grids monitored by a reduced set of PMUs.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: network model, nodal admittance, virtual/fake node extension
//!   and the grid description file.
//! - [`observability`]: observability conditions, unlocalizable fault
//!   clusters and their empirical residual oracle.
//! - [`placement`]: optimal PMU placement as a binary program with an exact
//!   branch-and-bound solver.
//! - [`estimation`]: measurement models, WLS estimates and weighted
//!   measurement residuals (WMR), including the per-cluster estimator bank.
//! - [`fdla`]: the detection / localization / characterization state machine.
//! - [`simulation`]: steady-state fault solver, PMU noise synthesis and Monte
//!   Carlo campaigns.
//! - [`stream`]: CSV measurement streams and trace export.

pub mod error;
pub mod estimation;
pub mod fdla;
pub mod grid;
pub mod noise;
pub mod observability;
pub mod placement;
pub mod simulation;
pub mod stream;

pub use error::{Error, Result};
pub use grid::{BranchId, GridModel, NodeId};
pub use observability::Monitoring;
