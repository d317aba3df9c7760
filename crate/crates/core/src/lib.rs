//! Leader-follower strategy injection: a planner policy picks a reasoning
//! strategy before every step, a reasoner policy decodes the step under it, and
//! both are trained jointly from group-relative rewards.

pub mod analysis;
pub mod checkpoint;
pub mod domain;
pub mod env;
pub mod marl;
pub mod model;

pub use domain::*;
