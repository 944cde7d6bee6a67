use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NodeId;
use crate::error::{Error, Result};

/// Half-open `[start, end)` interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

/// LEO-to-HAPS visibility windows, keyed by `(leo, haps)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VisibilitySchedule {
    windows: BTreeMap<(NodeId, NodeId), Vec<Window>>,
}

impl VisibilitySchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Windows must be sorted and pairwise disjoint.
    pub fn insert(&mut self, leo: NodeId, haps: NodeId, windows: Vec<Window>) -> Result<()> {
        for w in &windows {
            if !(w.start < w.end) {
                return Err(Error::Config(format!(
                    "empty visibility window [{}, {})",
                    w.start, w.end
                )));
            }
        }
        if windows.windows(2).any(|p| p[0].end > p[1].start) {
            return Err(Error::Config(format!(
                "visibility windows for ({leo}, {haps}) overlap or are unsorted"
            )));
        }
        self.windows.insert((leo, haps), windows);
        Ok(())
    }

    pub fn windows(&self, leo: NodeId, haps: NodeId) -> &[Window] {
        self.windows
            .get(&(leo, haps))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.windows.keys().copied()
    }
}

/// Windows `[offset + k*period, offset + k*period + width)` that intersect
/// `[0, horizon)`, clipped at 0.
pub fn periodic_windows(period: f64, width: f64, offset: f64, horizon: f64) -> Result<Vec<Window>> {
    if !(period > 0.0 && width > 0.0 && width <= period) {
        return Err(Error::Config(format!(
            "visibility needs 0 < width <= period (got width {width}, period {period})"
        )));
    }
    let phase = offset.rem_euclid(period);
    let mut out = Vec::new();
    let mut start = phase - period;
    while start < horizon {
        let end = start + width;
        if end > 0.0 {
            out.push(Window {
                start: start.max(0.0),
                end,
            });
        }
        start += period;
    }
    Ok(out)
}

/// Whether `leo` sees `haps` at time `t`. Unknown pairs are never visible.
pub fn leo_visible(leo: NodeId, haps: NodeId, t: f64, visibility: &VisibilitySchedule) -> bool {
    let windows = visibility.windows(leo, haps);
    let idx = windows.partition_point(|w| w.start <= t);
    idx > 0 && t < windows[idx - 1].end
}
