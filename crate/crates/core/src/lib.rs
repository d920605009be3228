//! Coding-rate analysis for discrete memoryless channels whose state is known
//! at both encoder and decoder.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod first_order;
pub mod io;
pub mod numerics;
pub mod oneshot;
pub mod second_order;
pub mod state;

pub use error::{Error, Result};
