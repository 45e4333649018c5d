//! Proportionally fair power and time scheduling for a broadcast downlink
//! whose transmitter runs on harvested energy.
//!
//! The transmitter knows a frame's energy arrivals in advance and picks one
//! power per slot plus a time split of every slot among the users, to
//! maximize `sum_n log2(bits_n)` under energy causality. The objective is
//! concave in the powers for fixed time shares and concave in the time
//! shares for fixed powers, and [`bcd::run_bcd`] alternates between the two
//! blocks until neither improves.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bcd;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod nnls;
pub mod oracle;
pub mod power;
pub mod scenario;
pub mod time;

pub use bcd::{
    energy_exhaustion_check, run_bcd, run_bcd_from, run_multistart, verify_partial_optimum, BcdReport,
    PartialOptimumCertificate,
};
pub use error::{Error, Result};
pub use metrics::{improvement_metrics, jain_index, sg_tdma_schedule, MetricsReport};
pub use model::{
    check_feasible, slot_rate, utility, EnergyProfile, Instance, Schedule, SolverOptions, SystemParams,
    UserChannel,
};
pub use power::{kkt_residual_power, solve_power, PowerSolution};
pub use scenario::Scenario;
pub use time::{full_time_pass, solve_time_slot, SlotUpdate};
