//! Self-supervised discretization of gridded daily climate fields into
//! categorical regimes, plus ENSO teleconnection statistics on the resulting
//! label sequence.
//!
//! The crate is `no_std` (with `alloc`). File formats, threading and the
//! command-line pipeline live in the `regime-tools` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod calendar;
pub mod encoder;
mod error;
pub mod exec;
pub mod grid;
pub mod msn;
pub mod regimes;
pub mod stats;
pub mod synth;
pub mod teleconnection;
pub mod views;

pub use error::{Error, Result};

/// Seeded generator used for every random draw in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;
