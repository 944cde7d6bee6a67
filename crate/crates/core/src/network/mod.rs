//! Three-tier network model: nodes, links, LEO visibility, access routing
//! and timing.

mod link;
mod topology;
mod visibility;

pub type NodeId = u32;

pub use link::{
    fdma_allocate, payload_bits, shared_transmission_delay, transmission_delay, Link, Medium,
    BITS_PER_PARAM, HEADER_BITS,
};
pub(crate) use topology::ring_neighbors;
pub use topology::{
    access_route, build_topology, classify_access, compute_time, AccessPath, AccessRoute,
    ComputeProfile, Node, PowerProfile, Role, Tier, Topology,
};
pub use visibility::{leo_visible, periodic_windows, VisibilitySchedule, Window};
