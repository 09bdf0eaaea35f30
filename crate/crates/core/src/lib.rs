//! Simulation library for CT-guided navigation of an arm-mounted flexible
//! endoscope through a sinus phantom.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod environment;
pub mod error;
pub mod imaging;
pub mod kinematics;
pub mod planner;
pub mod registration;
pub mod sim;
pub mod transform;

pub use error::{Error, Result};
pub use transform::RigidTransform;
