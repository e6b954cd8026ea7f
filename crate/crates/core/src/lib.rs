//! LiDAR place recognition from two complementary scan encodings.
//!
//! A scan is encoded twice over a shared azimuth discretization: a
//! spherical range image ([`riv`]) and a polar bird's-eye view whose
//! cells carry Gaussian (NDT) statistics ([`bev`], [`ndt`]). A small
//! network ([`net`]) fuses the two views with attention restricted to
//! matching azimuth columns and aggregates the result with a
//! context-gated NetVLAD into a unit-norm descriptor that is exactly
//! invariant to cyclic azimuth shifts, hence to yaw rotations by whole
//! bins. [`train`] fits the network with a triplet margin loss and
//! [`index`] evaluates retrieval.

pub mod bev;
pub mod cloud;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod grid;
pub mod index;
pub mod manifest;
pub mod ndt;
pub mod net;
pub mod pipeline;
pub mod riv;
pub mod seed;
pub mod tensor_file;
pub mod train;

pub use error::{Error, Result};
