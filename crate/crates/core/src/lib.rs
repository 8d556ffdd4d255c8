//! Energy-minimizing UAV edge computing with a satellite backhaul.
//!
//! A UAV collects task data from ground nodes, processes it on board and
//! forwards the results to a LEO satellite through an antenna array whose
//! phase estimates are imperfect. The crate models the links and energy,
//! casts the forwarding outage constraint into a conic form, and solves the
//! joint design by block coordinate descent.

use openblas_src as _;

pub mod bcd;
pub mod conic;
pub mod energy;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod linalg;
pub mod linkmodel;
pub mod rng;
pub mod robustify;
pub mod scenario;
pub mod solvers;

pub use error::{Error, Result};
pub use exec::Exec;
pub use scenario::{Instance, Plan, ScenarioConfig};
