//! Finite-space multistage stochastic optimization by dynamic programming.
//!
//! The crate works on problems where uncertainties and controls alternate
//! `w0, u0, w1, ..., u_{T-1}, w_T` over finite sets. Value functions are
//! first computed over the full *history* `h_t = (w0, u0, ..., w_t)`
//! ([`bellman`]), which needs no Markov assumption at all. When the history
//! can be compressed into a smaller state at selected stages, [`reduction`]
//! solves the problem block by block and checks that the compression is
//! legitimate. [`two_timescale`] and [`dhd`] specialize that machinery to
//! day/minute problems and to decision-hazard-decision problems, and
//! [`noise`] covers problems driven by an exogenous noise process.
//!
//! Everything here is `no_std` + `alloc`; file formats and the command line
//! live in the `timeblocks-cli` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bellman;
pub mod dhd;
pub mod error;
pub mod history;
pub mod kernels;
pub mod maps;
pub mod noise;
pub mod problem;
pub mod reduction;
pub mod space;
pub mod two_timescale;

mod par;

pub use bellman::{SolveOptions, ValueFunction};
pub use error::{Error, Result};
pub use history::{History, HistoryLayout, HistorySegment};
pub use kernels::{Feedback, StochasticKernel};
pub use problem::{Criterion, ProblemSpec};
pub use space::{Cost, Distribution, FiniteSpace};
