#![no_std]
extern crate alloc;

pub mod channel;
pub mod detect;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod linalg;
pub mod pa;
pub mod power;
pub mod rmt;
pub mod rng;

pub use error::{Error, Result};
