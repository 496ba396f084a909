#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod bounds;
pub mod envs;
pub mod error;
pub mod index;
pub mod mechanism;
pub mod model;
pub mod montecarlo;
pub mod solver;
pub mod stats;
pub mod synthesis;

pub use error::{Error, Result};
