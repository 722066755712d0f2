//! Universal fingerprinting at finite blocklength.
//!
//! Exact method-of-types arithmetic ([`types`]), randomized
//! constant-composition fingerprint codes ([`codec`]), collusion attacks and
//! their feasibility checks ([`collusion`]), and the empirical mutual
//! information decoders ([`decoders`]).

pub mod codec;
pub mod collusion;
pub mod decoders;
pub mod error;
pub mod registry;
pub mod rng;
pub mod types;

pub use error::{Error, Result};
pub use registry::Registry;
pub use types::{Alphabet, InfoQuery, JointType, Sequence};
