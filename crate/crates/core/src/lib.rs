//! Geometry core for layered body and garment meshes.
//!
//! The crate is `no_std` (with `alloc`) and performs no IO. File formats and
//! the command-line front end live in the `drape` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod body;
pub mod error;
pub mod eval;
pub mod garment;
pub mod math;
pub mod mesh;
pub mod registration;
pub mod retarget;
pub mod rng;
pub mod segmentation;
pub mod shape_space;
pub mod wardrobe;

pub use error::{Error, Result};
pub use math::{Mat3, Vec3};
