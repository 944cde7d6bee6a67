use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::NodeId;
use crate::error::{Error, Result};

/// Fixed per-message framing overhead.
pub const HEADER_BITS: f64 = 1024.0;
/// Parameters travel at single precision.
pub const BITS_PER_PARAM: f64 = 32.0;

/// Size of one serialized model message.
pub fn payload_bits(param_count: usize) -> f64 {
    param_count as f64 * BITS_PER_PARAM + HEADER_BITS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    Rf,
    Fso,
}

impl fmt::Display for Medium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Medium::Rf => "rf",
            Medium::Fso => "fso",
        })
    }
}

impl FromStr for Medium {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(Medium::Rf),
            "fso" => Ok(Medium::Fso),
            other => Err(Error::Config(format!("unknown medium `{other}` (valid: rf, fso)"))),
        }
    }
}

/// Bidirectional point-to-point link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    pub medium: Medium,
    pub one_way_delay: f64,
    pub nominal_rate: f64,
    /// Configured link quality; only meaningful for RF links.
    pub snr_db: Option<f64>,
}

impl Link {
    pub fn other_end(&self, node: NodeId) -> Option<NodeId> {
        if self.src == node {
            Some(self.dst)
        } else if self.dst == node {
            Some(self.src)
        } else {
            None
        }
    }
}

/// Propagation delay plus serialization at the link's rate divided among
/// `n_sharing` FDMA users. Optical links are never shared.
pub fn transmission_delay(link: &Link, payload_bits: f64, n_sharing: u32) -> Result<f64> {
    if n_sharing == 0 {
        return Err(Error::Contract("n_sharing must be at least 1".into()));
    }
    if n_sharing > 1 && link.medium == Medium::Fso {
        return Err(Error::Contract(format!(
            "fso link {}-{} cannot be shared by {n_sharing} users",
            link.src, link.dst
        )));
    }
    if !(payload_bits >= 0.0) {
        return Err(Error::Contract(format!("negative payload {payload_bits}")));
    }
    Ok(link.one_way_delay + payload_bits / (link.nominal_rate / f64::from(n_sharing)))
}

/// Delay when the sender holds `share` of the link's bandwidth.
pub fn shared_transmission_delay(link: &Link, payload_bits: f64, share: f64) -> Result<f64> {
    if !(share > 0.0 && share <= 1.0) {
        return Err(Error::Contract(format!("bandwidth share {share} outside (0, 1]")));
    }
    if share < 1.0 && link.medium == Medium::Fso {
        return Err(Error::Contract(format!(
            "fso link {}-{} cannot be shared",
            link.src, link.dst
        )));
    }
    Ok(link.one_way_delay + payload_bits / (link.nominal_rate * share))
}

/// Equal FDMA split of `total_bandwidth_hz`.
pub fn fdma_allocate(total_bandwidth_hz: f64, clients: &[NodeId]) -> Result<BTreeMap<NodeId, f64>> {
    if clients.is_empty() {
        return Err(Error::Contract("fdma allocation needs at least one client".into()));
    }
    let each = total_bandwidth_hz / clients.len() as f64;
    Ok(clients.iter().map(|&c| (c, each)).collect())
}
