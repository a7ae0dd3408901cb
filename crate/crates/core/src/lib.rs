//! Muscle-driven planar reaching: template-blending motion planning with
//! off-line and online endpoint-error calibration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arm;
pub mod calibration;
mod error;
pub mod harness;
pub mod planner;
pub mod templates;
mod vec2;

pub use error::{Error, Result};
pub use vec2::Vec2;
