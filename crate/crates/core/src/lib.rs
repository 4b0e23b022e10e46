//! Steady-state analysis of a quad-active-bridge (QAB) DC-DC converter.
//!
//! The crate models the full equivalent circuit (leakage and magnetizing inductances,
//! winding resistances) of four single-phase-shift bridges coupled through four
//! transformers whose link-side windings are paralleled. It provides:
//!
//! * [`circuit`]: converter description and the 7-state network matrices;
//! * [`modulation`]: square-wave bridge voltages and switching timelines;
//! * [`timedomain`]: exact piecewise-LTI simulation and periodic steady state;
//! * [`harmonic_balance`]: fundamental-frequency phasors and port powers;
//! * [`powerflow`]: phase-shift solver for commanded load powers;
//! * [`zvs`]: zero-voltage-switching checks at the switching instants;
//! * [`sweep`]: parameter grids reproducing the power and ZVS maps;
//! * [`config`]: the TOML configuration file.

pub mod circuit;
pub mod config;
pub mod error;
pub mod harmonic_balance;
pub mod modulation;
pub mod powerflow;
pub mod sweep;
pub mod timedomain;
pub mod zvs;

pub use circuit::{
    assemble_matrices, assemble_matrices_with, conversion_ratio, validate_config, CircuitMatrices,
    MatrixForm, Port, QabConfig, QabParameters,
};
pub use error::{ConfigError, QabError, Result, Violation};
pub use harmonic_balance::{Network, PortAdmittance, PortPhasors, PowerReport};
pub use powerflow::{power_dispatch, solve_phase_shifts, PowerFlowProblem, PowerFlowSolution};
pub use sweep::{GridAxis, GridCell, GridResult};
pub use timedomain::{periodic_steady_state, simulate_cycles, WaveformRecord};
pub use zvs::{zvs_check, zvs_check_timedomain, ZvsReport};
