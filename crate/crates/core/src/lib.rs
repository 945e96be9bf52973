//! Extraction of finite-state controllers from recurrent POMDP policies,
//! verified by explicit-state probabilistic model checking and refined by
//! counterexample-guided retraining.

pub mod check;
pub mod error;
pub mod fsc;
pub mod model;
pub mod network;
pub mod num;
pub mod seed;
pub mod spec;
pub mod synth;

pub use error::{Error, Result};
