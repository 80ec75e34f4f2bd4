//! Symmetry-aware geometry of the zero-error landscape of small
//! fully-connected networks.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to let
//! the matrix kernels pick SIMD paths at runtime.
//!
//! - [`nn`]: network container, forward pass, error counting.
//! - [`train`]: backprop with straight-through estimation, SGD, replicated
//!   SGD and adversarially initialized SGD.
//! - [`data`]: hidden-manifold generator and dataset transforms.
//! - [`symmetry`]: per-unit normalization, alignment, linear assignment.
//! - [`geometry`]: geodesics on the product of spheres, Hamming paths.
//! - [`probes`]: local energy, path scans, barriers, planes, distances.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod geometry;
pub mod nn;
pub mod probes;
pub mod rng;
pub mod symmetry;
pub mod train;

pub use nn::{classify, sign, Activation, Dataset, Layer, LayerSpec, Network, NnError, Task};
