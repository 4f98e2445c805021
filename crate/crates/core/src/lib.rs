//! Whisper-to-normal speech feature conversion with cycle-consistent
//! adversarial networks.
//!
//! Two training schemes share the same building blocks:
//!
//! * a sequential baseline: a CycleGAN between whisper and normal cepstra,
//!   then a second CycleGAN from (converted) normal cepstra to F0;
//! * joint training of both cycles plus an end-to-end adversarial term
//!   (cycle-in-cycle).
//!
//! Everything runs on `f64` matrices with a small reverse-mode tape.

pub mod autodiff;
pub mod cli;
pub mod codec;
pub mod config;
pub mod convert;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod networks;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
