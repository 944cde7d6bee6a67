//! Deterministic simulator of hierarchical federated learning over a
//! three-tier non-terrestrial network: ground clients and base stations,
//! HAPS servers and UAV relays, LEO clients and GEO/MEO relays.

pub mod aggregation;
pub mod error;
pub mod learning;
pub mod network;
pub mod protocol;
pub mod registry;
pub mod rng;
pub mod scenario;
pub mod telemetry;

pub use error::{Error, Result};
