//! Round orchestration: client selection, scheduling and the synchronous
//! broadcast / train / aggregate / exchange pipeline.

mod engine;
mod policy;

use serde::{Deserialize, Serialize};

pub use engine::{consensus_gap, run_simulation, RoundState, Simulation, SimulationResult};
pub use policy::{
    schedule_round, scheduling_registry, select_clients, selection_registry, Allocation, Clusters, EqualShare,
    SchedulingStrategy, SelectedClient, SelectionPolicy, SelectionStrategy, SnrThreshold, TelemetryScheduling,
    TelemetrySelection,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Broadcast,
    LocalCompute,
    Upload,
    ClusterAggCompute,
    RingExchange,
    RelayExchange,
    GlobalCombineCompute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub stage: Stage,
    pub seconds: f64,
}

impl StageLatency {
    pub fn new(stage: Stage, seconds: f64) -> Self {
        debug_assert!(seconds >= 0.0);
        Self { stage, seconds }
    }
}
