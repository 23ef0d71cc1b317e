#![no_std]
extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod env;
pub mod error;
pub mod fieldcheck;
pub mod fields;
pub mod kernel;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod statics;
pub mod stats;
pub mod theorems;

pub use error::{Error, Result};
