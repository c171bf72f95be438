//! Simulator and protocol harness for a frequency-coded plug-and-play
//! quantum key distribution scheme.
//!
//! The qubit lives in two frequency bins of a single photon; an
//! acousto-optic modulator acts as a frequency-translating 50/50
//! coupler, a Faraday-mirror round trip auto-compensates the rf phase,
//! and narrow spectral filters at the far station encode key bits.
//!
//! Module map:
//! - [`mode_engine`]: sparse single-photon state vectors over
//!   (frequency, path, time, polarization) modes and the linear optics
//!   acting on them.
//! - [`optics_bench`]: the physical kits (source, AOM, arms, channel,
//!   filters, mirror, detectors) and exact/sampled round trips.
//! - [`adversary`]: intercept-resend, passive-tap, and bright-probe
//!   attack models.
//! - [`protocol`]: seeded sessions, sifting, alarms, and QBER
//!   estimation.
//! - [`network`]: one-to-any branch topology with time-of-flight
//!   receiver identification.
//! - [`config`], [`report`], [`cli`]: TOML configuration, transcript
//!   and summary files, and the command-line front end.

pub mod adversary;
pub mod cli;
pub mod config;
pub mod error;
pub mod mode_engine;
pub mod network;
pub mod optics_bench;
pub mod protocol;
pub mod report;
pub mod util;

pub use error::{Error, Result};
