use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::link::{Link, Medium};
use super::visibility::{periodic_windows, VisibilitySchedule};
use super::NodeId;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream};
use crate::scenario::{ClientProfile, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Terrestrial,
    Aerial,
    Satellite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    GroundClient,
    BaseStation,
    UavRelay,
    HapsServer,
    LeoClient,
    GeoMeoRelay,
}

impl Role {
    pub fn tier(self) -> Tier {
        match self {
            Role::GroundClient | Role::BaseStation => Tier::Terrestrial,
            Role::UavRelay | Role::HapsServer => Tier::Aerial,
            Role::LeoClient | Role::GeoMeoRelay => Tier::Satellite,
        }
    }

    pub fn is_client(self) -> bool {
        matches!(self, Role::GroundClient | Role::LeoClient)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeProfile {
    /// Work units per second.
    pub work_rate: f64,
    pub max_epochs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub tx_power: f64,
    pub compute_energy_per_work_unit: f64,
    /// `None` is unlimited.
    pub battery_budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub tier: Tier,
    pub role: Role,
    pub compute: ComputeProfile,
    pub power: PowerProfile,
}

/// Seconds needed to perform `work_units` on `node`.
pub fn compute_time(node: &Node, work_units: f64) -> f64 {
    work_units / node.compute.work_rate
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: BTreeMap<NodeId, Node>,
    links: Vec<Link>,
    link_index: BTreeMap<(NodeId, NodeId), usize>,
    /// Cyclic order of FL servers (HAPS, or base stations when no HAPS exist).
    pub haps_ring_order: Vec<NodeId>,
    pub neighbor_radius: usize,
    pub visibility: VisibilitySchedule,
    /// Medium used on satellite-aerial links.
    pub satellite_aerial_medium: Medium,
    pub multi_constellation: bool,
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

impl Topology {
    pub fn from_parts(
        nodes: Vec<Node>,
        links: Vec<Link>,
        haps_ring_order: Vec<NodeId>,
        neighbor_radius: usize,
        visibility: VisibilitySchedule,
        satellite_aerial_medium: Medium,
        multi_constellation: bool,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for n in nodes {
            if n.role.tier() != n.tier {
                return Err(Error::Config(format!(
                    "node {} has role {:?} on tier {:?}",
                    n.id, n.role, n.tier
                )));
            }
            if map.insert(n.id, n).is_some() {
                return Err(Error::Config("duplicate node id".into()));
            }
        }
        let mut link_index = BTreeMap::new();
        for (i, l) in links.iter().enumerate() {
            if !map.contains_key(&l.src) || !map.contains_key(&l.dst) || l.src == l.dst {
                return Err(Error::Config(format!("link {}-{} has bad endpoints", l.src, l.dst)));
            }
            if !(l.one_way_delay > 0.0 && l.nominal_rate > 0.0) {
                return Err(Error::Config(format!(
                    "link {}-{} needs positive delay and rate",
                    l.src, l.dst
                )));
            }
            if link_index.insert(key(l.src, l.dst), i).is_some() {
                return Err(Error::Config(format!("duplicate link {}-{}", l.src, l.dst)));
            }
        }
        let mut ring = haps_ring_order.clone();
        ring.sort_unstable();
        ring.dedup();
        if ring.len() != haps_ring_order.len() {
            return Err(Error::Config("server ring lists a node twice".into()));
        }
        let topo = Self {
            nodes: map,
            links,
            link_index,
            haps_ring_order,
            neighbor_radius,
            visibility,
            satellite_aerial_medium,
            multi_constellation,
        };
        let servers: Vec<NodeId> = topo.nodes_with_role(topo.server_role()).collect();
        if servers != ring {
            return Err(Error::Config(
                "every FL server must appear exactly once in the ring".into(),
            ));
        }
        if multi_constellation {
            for &h in &topo.haps_ring_order {
                if topo.neighbors_with_role(h, Role::GeoMeoRelay).next().is_none() {
                    return Err(Error::Config(format!("server {h} has no GEO/MEO relay")));
                }
            }
        }
        topo.check_medium_rule()?;
        Ok(topo)
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<&Link> {
        self.link_index.get(&key(a, b)).map(|&i| &self.links[i])
    }

    /// Ascending ids of nodes with `role`.
    pub fn nodes_with_role(&self, role: Role) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.values().filter(move |n| n.role == role).map(|n| n.id)
    }

    pub fn clients(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.role.is_client())
            .map(|n| n.id)
            .collect()
    }

    /// Ascending ids of `node`'s link partners with `role`.
    pub fn neighbors_with_role(&self, node: NodeId, role: Role) -> impl Iterator<Item = NodeId> + '_ {
        let mut ids: Vec<NodeId> = self
            .links
            .iter()
            .filter_map(move |l| l.other_end(node))
            .filter(|other| self.nodes[other].role == role)
            .collect();
        ids.sort_unstable();
        ids.into_iter()
    }

    /// HAPS when present, base stations otherwise.
    pub fn server_role(&self) -> Role {
        if self.nodes.values().any(|n| n.role == Role::HapsServer) {
            Role::HapsServer
        } else {
            Role::BaseStation
        }
    }

    pub fn is_server(&self, id: NodeId) -> bool {
        self.nodes
            .get(&id)
            .is_some_and(|n| n.role == self.server_role())
    }

    /// Server a base station or UAV forwards to (lowest-id linked HAPS), or
    /// the node itself if it is a server.
    pub fn upstream_server(&self, relay: NodeId) -> Option<NodeId> {
        if self.is_server(relay) {
            return Some(relay);
        }
        self.neighbors_with_role(relay, Role::HapsServer).next()
    }

    /// Servers within `neighbor_radius` ring hops of `server`, excluding it.
    pub fn ring_neighbors(&self, server: NodeId) -> Vec<NodeId> {
        ring_neighbors(&self.haps_ring_order, server, self.neighbor_radius)
    }

    /// Terrestrial links must be RF, aerial-aerial links FSO, and
    /// satellite-aerial links use the declared satellite medium (FSO unless
    /// a scenario explicitly models the RF baseline).
    pub fn check_medium_rule(&self) -> Result<()> {
        for l in &self.links {
            let (a, b) = (self.nodes[&l.src].tier, self.nodes[&l.dst].tier);
            let required = if a == Tier::Terrestrial || b == Tier::Terrestrial {
                Medium::Rf
            } else if a == b {
                Medium::Fso
            } else {
                self.satellite_aerial_medium
            };
            if l.medium != required {
                return Err(Error::Config(format!(
                    "link {}-{} ({a:?}-{b:?}) must be {required}, found {}",
                    l.src, l.dst, l.medium
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn ring_neighbors(ring: &[NodeId], server: NodeId, radius: usize) -> Vec<NodeId> {
    let n = ring.len();
    let Some(pos) = ring.iter().position(|&s| s == server) else {
        return Vec::new();
    };
    let mut out: Vec<NodeId> = Vec::new();
    for d in 1..=radius.min(n / 2 + 1) {
        for idx in [(pos + d) % n, (pos + n - d % n) % n] {
            let id = ring[idx];
            if id != server && !out.contains(&id) {
                out.push(id);
            }
        }
    }
    out.sort_unstable();
    out
}

fn client_node(id: NodeId, role: Role, p: &ClientProfile) -> Node {
    Node {
        id,
        tier: role.tier(),
        role,
        compute: ComputeProfile {
            work_rate: p.work_rate,
            max_epochs: p.max_epochs,
        },
        power: PowerProfile {
            tx_power: p.tx_power_w,
            compute_energy_per_work_unit: p.energy_per_work_j,
            battery_budget: p.battery_budget_j,
        },
    }
}

/// Instantiates one constellation.
///
/// Ids are assigned in blocks: HAPS, base stations, UAVs, GEO/MEO relays,
/// ground clients, LEO clients. Ground client `k` is covered by HAPS
/// `k mod H`, base station `k mod B` and UAV `k mod U`; BS/UAV `j` hangs off
/// HAPS `j mod H`; LEO `k` is served by HAPS `k mod H`. Without HAPS the
/// base stations are the servers. RF link SNRs are drawn from the
/// configured ranges with the scenario seed.
pub fn build_topology(cfg: &ScenarioConfig) -> Result<Topology> {
    cfg.validate()?;
    let c = &cfg.counts;
    let mut rng = rng_from(derive_seed(cfg.seed, &[stream::TOPOLOGY]));
    let mut next: NodeId = 0;
    let mut block = |n: usize| -> Vec<NodeId> {
        let ids: Vec<NodeId> = (next..next + n as NodeId).collect();
        next += n as NodeId;
        ids
    };
    let haps = block(c.haps);
    let bss = block(c.base_stations);
    let uavs = block(c.uav_relays);
    let relays = block(c.geo_meo_relays);
    let grounds = block(c.ground_clients);
    let leos = block(c.leo_clients);

    let infra = |id: NodeId, role: Role| Node {
        id,
        tier: role.tier(),
        role,
        compute: ComputeProfile {
            work_rate: cfg.infrastructure.work_rate,
            max_epochs: cfg.ground.max_epochs,
        },
        power: PowerProfile {
            tx_power: cfg.infrastructure.tx_power_w,
            compute_energy_per_work_unit: cfg.infrastructure.energy_per_work_j,
            battery_budget: None,
        },
    };
    let mut nodes = Vec::new();
    nodes.extend(haps.iter().map(|&id| infra(id, Role::HapsServer)));
    nodes.extend(bss.iter().map(|&id| infra(id, Role::BaseStation)));
    nodes.extend(uavs.iter().map(|&id| infra(id, Role::UavRelay)));
    nodes.extend(relays.iter().map(|&id| infra(id, Role::GeoMeoRelay)));
    nodes.extend(grounds.iter().map(|&id| client_node(id, Role::GroundClient, &cfg.ground)));
    nodes.extend(leos.iter().map(|&id| client_node(id, Role::LeoClient, &cfg.leo.profile)));

    let rate = |m: Medium| match m {
        Medium::Rf => cfg.link.rf_rate_bps,
        Medium::Fso => cfg.link.fso_rate_bps,
    };
    let mut links = Vec::new();
    let mut add = |src, dst, medium, delay, snr| {
        links.push(Link {
            src,
            dst,
            medium,
            one_way_delay: delay,
            nominal_rate: rate(medium),
            snr_db: snr,
        })
    };
    let s = &cfg.snr;
    let mut draw = |lo: f64, hi: f64| if lo == hi { lo } else { rng.random_range(lo..hi) };

    let haps_served = !haps.is_empty();
    for (k, &g) in grounds.iter().enumerate() {
        if haps_served {
            let h = haps[k % haps.len()];
            let snr = draw(s.ground_haps_min_db, s.ground_haps_max_db);
            add(g, h, Medium::Rf, cfg.delay.channel_s, Some(snr));
        }
        if !bss.is_empty() {
            let b = bss[k % bss.len()];
            let snr = draw(s.ground_bs_min_db, s.ground_bs_max_db);
            add(g, b, Medium::Rf, cfg.delay.channel_s, Some(snr));
        }
        if !uavs.is_empty() {
            let u = uavs[k % uavs.len()];
            let snr = draw(s.ground_uav_min_db, s.ground_uav_max_db);
            add(g, u, Medium::Rf, cfg.delay.uav_s, Some(snr));
        }
    }
    if haps_served {
        for (j, &b) in bss.iter().enumerate() {
            add(b, haps[j % haps.len()], Medium::Rf, cfg.delay.bs_haps_s, None);
        }
        for (j, &u) in uavs.iter().enumerate() {
            add(u, haps[j % haps.len()], Medium::Fso, cfg.delay.uav_s, None);
        }
    }
    let sat_medium = cfg.link.satellite_aerial_medium;
    let sat_snr = (sat_medium == Medium::Rf).then_some(s.leo_rf_db);
    let mut visibility = VisibilitySchedule::new();
    for (k, &l) in leos.iter().enumerate() {
        let h = haps[k % haps.len()];
        add(l, h, sat_medium, cfg.delay.channel_s, sat_snr);
        let offset = cfg.leo.window_offset_s + k as f64 * cfg.leo.window_offset_step_s;
        visibility.insert(
            l,
            h,
            periodic_windows(
                cfg.leo.window_period_s,
                cfg.leo.window_width_s,
                offset,
                cfg.leo.visibility_horizon_s,
            )?,
        )?;
    }
    let ring: Vec<NodeId> = if haps_served { haps.clone() } else { bss.clone() };
    if haps_served {
        let mut seen = std::collections::BTreeSet::new();
        for &h in &haps {
            for n in ring_neighbors(&ring, h, cfg.neighbor_radius) {
                if seen.insert(key(h, n)) {
                    add(h.min(n), h.max(n), Medium::Fso, cfg.delay.haps_haps_s, None);
                }
            }
        }
        if !relays.is_empty() {
            for (j, &h) in haps.iter().enumerate() {
                add(h, relays[j % relays.len()], sat_medium, cfg.delay.relay_s, sat_snr);
            }
        }
    } else if ring.len() > 1 {
        // Several ground servers exchange over terrestrial backhaul.
        let mut seen = std::collections::BTreeSet::new();
        for &b in &ring {
            for n in ring_neighbors(&ring, b, cfg.neighbor_radius) {
                if seen.insert(key(b, n)) {
                    add(b.min(n), b.max(n), Medium::Rf, cfg.delay.haps_haps_s, None);
                }
            }
        }
    }

    Topology::from_parts(
        nodes,
        links,
        ring,
        cfg.neighbor_radius,
        visibility,
        sat_medium,
        cfg.multi_constellation,
    )
}

/// How a ground client's update reaches its server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessRoute {
    DirectHaps,
    ViaBs,
    ViaUav,
    /// LEO client on its feeder link.
    Satellite,
    Excluded,
}

/// Resolved route with the intermediate node and the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessPath {
    pub route: AccessRoute,
    /// First hop (HAPS, BS or UAV); equals `server` on direct routes.
    pub via: NodeId,
    pub server: NodeId,
}

/// Access decision for a ground client: a direct HAPS link meeting the SNR
/// threshold, else a base station link meeting it, else any UAV that reaches
/// a HAPS. Ties go to the lowest target id.
pub fn classify_access(client: NodeId, topology: &Topology, snr_threshold_db: f64) -> Option<AccessPath> {
    let passes = |target: NodeId| {
        topology
            .link(client, target)
            .and_then(|l| l.snr_db)
            .is_some_and(|snr| snr >= snr_threshold_db)
    };
    if let Some(h) = topology
        .neighbors_with_role(client, Role::HapsServer)
        .find(|&h| passes(h))
    {
        return Some(AccessPath {
            route: AccessRoute::DirectHaps,
            via: h,
            server: h,
        });
    }
    if let Some((b, server)) = topology
        .neighbors_with_role(client, Role::BaseStation)
        .filter(|&b| passes(b))
        .find_map(|b| topology.upstream_server(b).map(|s| (b, s)))
    {
        return Some(AccessPath {
            route: AccessRoute::ViaBs,
            via: b,
            server,
        });
    }
    if let Some((u, server)) = topology
        .neighbors_with_role(client, Role::UavRelay)
        .find_map(|u| topology.upstream_server(u).map(|s| (u, s)))
    {
        return Some(AccessPath {
            route: AccessRoute::ViaUav,
            via: u,
            server,
        });
    }
    None
}

/// Convenience wrapper returning only the route kind.
pub fn access_route(client: NodeId, topology: &Topology, snr_threshold_db: f64) -> AccessRoute {
    classify_access(client, topology, snr_threshold_db)
        .map(|p| p.route)
        .unwrap_or(AccessRoute::Excluded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin_scenario;

    fn count(t: &Topology, role: Role) -> usize {
        t.nodes_with_role(role).count()
    }

    #[test]
    fn builtin_node_counts() {
        let t = build_topology(&builtin_scenario("distributed_haps").unwrap()).unwrap();
        assert_eq!(count(&t, Role::GroundClient), 200);
        assert_eq!(count(&t, Role::LeoClient), 5);
        assert_eq!(count(&t, Role::HapsServer), 5);

        let t = build_topology(&builtin_scenario("terrestrial_only").unwrap()).unwrap();
        assert_eq!(count(&t, Role::GroundClient), 20);
        assert_eq!(count(&t, Role::BaseStation), 1);
        assert!(t.nodes().all(|n| n.tier == Tier::Terrestrial));
        assert_eq!(t.haps_ring_order.len(), 1);
    }

    #[test]
    fn medium_rule_holds_for_builtins() {
        for name in crate::scenario::BUILTIN_NAMES {
            let t = build_topology(&builtin_scenario(name).unwrap()).unwrap();
            for l in t.links() {
                let (a, b) = (t.node(l.src).unwrap().tier, t.node(l.dst).unwrap().tier);
                if a == Tier::Terrestrial || b == Tier::Terrestrial {
                    assert_eq!(l.medium, Medium::Rf);
                } else if a == Tier::Aerial && b == Tier::Aerial {
                    assert_eq!(l.medium, Medium::Fso);
                } else if name != "satellite_rf" {
                    assert_eq!(l.medium, Medium::Fso, "{name}: {l:?}");
                }
            }
        }
        // The RF satellite baseline is the only declared exception.
        let t = build_topology(&builtin_scenario("satellite_rf").unwrap()).unwrap();
        assert!(t.links().iter().all(|l| l.medium == Medium::Rf));
    }

    #[test]
    fn medium_rule_rejects_rf_between_aerial_nodes() {
        let t = build_topology(&builtin_scenario("distributed_haps").unwrap()).unwrap();
        let mut links = t.links().to_vec();
        let i = links
            .iter()
            .position(|l| t.node(l.src).unwrap().role == Role::HapsServer && t.node(l.dst).unwrap().role == Role::HapsServer)
            .unwrap();
        links[i].medium = Medium::Rf;
        let nodes: Vec<Node> = t.nodes().cloned().collect();
        assert!(Topology::from_parts(
            nodes,
            links,
            t.haps_ring_order.clone(),
            1,
            t.visibility.clone(),
            Medium::Fso,
            false
        )
        .is_err());
    }

    #[test]
    fn inconsistent_counts_are_rejected() {
        let mut cfg = builtin_scenario("satellite_fso").unwrap();
        cfg.counts.haps = 0;
        assert!(build_topology(&cfg).is_err());
    }

    #[test]
    fn ring_neighbors_by_radius() {
        let ring = [10, 11, 12, 13, 14];
        assert_eq!(ring_neighbors(&ring, 10, 1), vec![11, 14]);
        assert_eq!(ring_neighbors(&ring, 10, 2), vec![11, 12, 13, 14]);
        assert_eq!(ring_neighbors(&ring, 10, 7), vec![11, 12, 13, 14]);
        assert_eq!(ring_neighbors(&[3], 3, 2), Vec::<NodeId>::new());
        assert_eq!(ring_neighbors(&[3, 4], 3, 1), vec![4]);
    }

    #[test]
    fn compute_time_is_linear() {
        let mut node = client_node(0, Role::GroundClient, &ScenarioConfig::default().ground);
        node.compute.work_rate = 1e9;
        assert_eq!(compute_time(&node, 1e9), 1.0);
        assert_eq!(compute_time(&node, 0.0), 0.0);
        let t = compute_time(&node, 3e8);
        node.compute.work_rate = 2e9;
        assert_eq!(compute_time(&node, 3e8), t / 2.0);
    }

    fn access_fixture(haps_snr: f64, bs_snr: f64, with_uav: bool) -> Topology {
        let mut cfg = builtin_scenario("distributed_haps").unwrap();
        cfg.counts = crate::scenario::RoleCounts {
            ground_clients: 1,
            leo_clients: 0,
            base_stations: 1,
            haps: 1,
            uav_relays: usize::from(with_uav),
            geo_meo_relays: 0,
        };
        cfg.snr.ground_haps_min_db = haps_snr;
        cfg.snr.ground_haps_max_db = haps_snr;
        cfg.snr.ground_bs_min_db = bs_snr;
        cfg.snr.ground_bs_max_db = bs_snr;
        build_topology(&cfg).unwrap()
    }

    #[test]
    fn access_classification() {
        let client = |t: &Topology| t.nodes_with_role(Role::GroundClient).next().unwrap();
        let t = access_fixture(15.0, 0.0, false);
        assert_eq!(access_route(client(&t), &t, 10.0), AccessRoute::DirectHaps);
        let t = access_fixture(5.0, 20.0, false);
        let path = classify_access(client(&t), &t, 10.0).unwrap();
        assert_eq!(path.route, AccessRoute::ViaBs);
        assert_eq!(path.server, 0);
        let t = access_fixture(5.0, 5.0, false);
        assert_eq!(access_route(client(&t), &t, 10.0), AccessRoute::Excluded);
        let t = access_fixture(5.0, 5.0, true);
        assert_eq!(access_route(client(&t), &t, 10.0), AccessRoute::ViaUav);
        assert_eq!(
            access_route(client(&t), &t, 10.0),
            access_route(client(&t), &t, 10.0)
        );
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = builtin_scenario("distributed_haps").unwrap();
        assert_eq!(build_topology(&cfg).unwrap(), build_topology(&cfg).unwrap());
    }
}
