//! Joint base-station beamforming and active intelligent-reflecting-surface
//! (IRS) design for downlink transmit-power minimization.
//!
//! The crate is organised bottom-up:
//!
//! - [`math`]: complex Hermitian helpers (real PSD embedding, eigen checks).
//! - [`config`] and [`channel`]: scenario constants, node placement and
//!   Rician channel draws.
//! - [`problem`]: SINR, IRS amplification power, feasibility and energy
//!   efficiency of a candidate [`problem::Solution`].
//! - [`conic`]: a small conic modeling layer over an interior-point solver.
//! - [`ia`]: the bilinear-transformation / inner-approximation / SDR
//!   algorithm for the joint design.
//! - [`baselines`]: no-IRS SDR beamforming and the random-phase ZF scheme.
//! - [`experiments`]: seeded Monte Carlo sweeps, aggregation and CSV output.
//! - [`verify`]: numerical oracle suites used by the `verify` subcommand.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod conic;
pub mod error;
pub mod experiments;
pub mod ia;
pub mod math;
pub mod problem;
pub mod verify;

pub use error::{Error, Result};
