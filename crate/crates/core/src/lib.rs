//! Minimal-time and sliding-mode control of semilinear parabolic systems
//! `y' + A y = B u` with pointwise control bound `‖u(t)‖ ≤ ρ`.
#![allow(non_snake_case)]

pub mod adjoint;
pub mod error;
pub mod forward;
pub mod hilbert;
pub mod operators;
pub mod oracle;
pub mod parallel;
pub mod sliding;
pub mod time;
pub mod timeopt;

pub use error::{Error, Result};
