//! Las Vegas locality-sensitive filters for Euclidean approximate near
//! neighbor search.
//!
//! Given a dataset and a query within distance `r` of some stored point, the
//! structures here return a point within distance `c*r` with certainty: only
//! the running time is random, never the correctness. The guarantee rests on
//! filter families whose covering property is checked exhaustively on a
//! finite net at sampling time (`ball_lattice::verify_family`,
//! `sphere::sample_spherical_family`), so a successfully sampled family is a
//! certificate, not a probabilistic hope.
//!
//! Module layout mirrors the pipeline:
//!
//! * [`rng`], [`vector`], [`math`]: deterministic randomness, vectors,
//!   special functions.
//! * [`gf`], [`ortho`], [`caps`]: small-field hashing, orthogonal
//!   decompositions, cap/ball volumes and Gaussian integrals.
//! * [`ball_lattice`]: lattices of balls as filters in low dimension, with
//!   exhaustive net verification.
//! * [`splitters`]: CountSketch-style halvings composed into trees that
//!   split vectors across subspaces with certified distortion.
//! * [`tensor`]: tensored filter families over the splitter subspaces and
//!   the mid-level bucketed index.
//! * [`reduction`]: two-stage one-sided dimensionality reduction and the
//!   top-level index.
//! * [`sphere`]: spherical cap filters with threshold solving, net
//!   verification, and a tensored variant.
//!
//! The crate is `no_std` (with `alloc`); IO, file formats, and the CLI live
//! in the companion `lvann-cli` crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod ball_lattice;
pub mod caps;
pub mod error;
pub mod gf;
pub mod math;
pub mod ortho;
pub mod reduction;
pub mod rng;
pub mod sphere;
pub mod splitters;
pub mod tensor;
pub mod vector;

pub use error::CoreError;
pub use rng::RngStream;
pub use vector::RealVector;
