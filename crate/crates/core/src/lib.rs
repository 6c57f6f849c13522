//! Relative-pitch sequence modeling toolkit.
//!
//! The centerpiece is a recurrent gated autoencoder: a gated autoencoder
//! (GAE) that encodes the pitch intervals between a context window and a
//! target frame in a latent "mapping" vector, and a GRU that learns the
//! temporal structure of those mappings. A conventional absolute-pitch GRU
//! serves as the baseline, and an entropy-weighted geometric mean combines
//! the prediction distributions of several models.
//!
//! Supporting machinery: a synthetic copy-and-shift dataset generator,
//! corpus file I/O, an evaluation harness (cross-entropy, free-running
//! continuation precision, parameter counts), a binary model format, and a
//! config-file driven command layer shared by the CLI and the Python
//! bindings.

pub mod commands;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod gae;
pub mod mathcore;
pub mod model_io;
pub mod recurrent;

pub use error::{Error, Result};
