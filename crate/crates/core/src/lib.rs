//! Trust-aware navigation: pedestrian trust estimation, trust-adaptive
//! control barrier functions and a receding-horizon controller, plus a 2D
//! scenario simulator and command-line driver.

// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cbf;
pub mod cli;
pub mod confidence;
pub mod config;
pub mod mpc;
pub mod sim;
pub mod sqp;
pub mod trust;
