//! Delay distributions of fixed-rate retransmission protocols over
//! Markov-modulated binary erasure channels.
//!
//! The crate has two halves. [`ratefn`] evaluates the large-deviation
//! quantities that predict tail behaviour, and [`protocols`] simulates the
//! transfers whose delays those quantities describe. [`oracle`] computes
//! exact tail probabilities for small instances, [`estimator`] fits empirical
//! tails, and [`harness`] drives everything from a JSON config.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod protocols;
pub mod ratefn;

pub use channel::ChannelSpec;
pub use error::{Error, Result};
