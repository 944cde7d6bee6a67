//! Synchronous round orchestration.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::policy::{
    schedule_round, scheduling_registry, select_clients, selection_registry, Allocation, Clusters,
    SchedulingStrategy, SelectedClient, SelectionStrategy,
};
use super::{Stage, StageLatency};
use crate::aggregation::{
    cluster_aggregate, combine_global, combiner_registry, default_mix_weight, relay_mix, ring_exchange,
    ClusterUpdate, Combiner, GlobalModel,
};
use crate::error::{Error, Result};
use crate::learning::{
    evaluate, gen_synthetic_dataset, init_model, load_dataset_csv, local_train, partition_noniid,
    partition_registry, split_stratified, DataPartition, Dataset, ModelSpec, ParamVector,
};
use crate::network::{
    build_topology, compute_time, payload_bits, shared_transmission_delay, transmission_delay, AccessRoute,
    NodeId, Role, Topology,
};
use crate::rng::{client_round_seed, derive_seed, rng_from, stream};
use crate::scenario::{config_hash, DatasetSource, ScenarioConfig};
use crate::telemetry::{
    avg_train_loss, feedback_weights, round_latency, ClientRecord, RoundMetrics, TelemetryStore,
};

/// Protocol state between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    /// Rounds completed so far.
    pub round_index: u32,
    /// Simulated time at which the next round starts.
    pub clock_s: f64,
    /// Per constellation: every server's global model.
    pub global_models: Vec<BTreeMap<NodeId, GlobalModel>>,
    /// Per constellation: clients that took part in the last round, by
    /// aggregation point.
    pub selected_clients: Vec<BTreeMap<NodeId, Vec<NodeId>>>,
    pub metrics: Option<RoundMetrics>,
}

impl RoundState {
    /// The primary constellation's model, as held by its first server.
    pub fn global_model(&self) -> &GlobalModel {
        self.global_models[0]
            .values()
            .next()
            .expect("every constellation has a server")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub initial_model: ParamVector,
    /// Primary global model after each round.
    pub trajectory: Vec<ParamVector>,
    pub final_model: GlobalModel,
    pub telemetry: TelemetryStore,
}

impl SimulationResult {
    pub fn per_round(&self) -> &[RoundMetrics] {
        self.telemetry.rounds()
    }
}

/// Everything fixed for the lifetime of a run: topology, data, partitions
/// and the selected strategies.
pub struct Simulation {
    config: ScenarioConfig,
    topology: Topology,
    spec: ModelSpec,
    test_set: Dataset,
    pools: Vec<Dataset>,
    partitions: Vec<BTreeMap<NodeId, DataPartition>>,
    combiner: Box<dyn Combiner>,
    selection: Box<dyn SelectionStrategy>,
    scheduling: Box<dyn SchedulingStrategy>,
    payload: f64,
}

struct ClientPlan {
    constellation: u32,
    client: SelectedClient,
    epochs: u32,
    work_units: u64,
    broadcast: f64,
    upload: f64,
    forward: f64,
    compute: f64,
    alloc: Allocation,
    energy: f64,
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let topology = build_topology(&config)?;
        let seed = config.seed;
        let ds = &config.dataset;
        let n_clients = topology.clients().len();
        let synthetic = ds.source == DatasetSource::Synthetic;
        let (data, test_fraction) = if synthetic {
            // With a per-client quota the training pool grows with the client
            // count while the test split keeps its configured size.
            let (n, frac) = if ds.samples_per_client > 0 {
                let n_test = (ds.n_samples as f64 * ds.test_fraction).round() as usize;
                let n = ds.samples_per_client * n_clients + n_test;
                (n, n_test as f64 / n as f64)
            } else {
                (ds.n_samples, ds.test_fraction)
            };
            let data = gen_synthetic_dataset(
                n,
                ds.n_features,
                ds.n_classes,
                ds.class_separation,
                derive_seed(seed, &[stream::DATASET]),
            )?;
            (data, frac)
        } else {
            (load_dataset_csv(&ds.csv_path)?, ds.test_fraction)
        };
        let spec = config.model_spec(data.n_features(), data.n_classes())?;
        let (train, test_set) = split_stratified(&data, test_fraction, derive_seed(seed, &[stream::SPLIT]))?;

        let n_constellations = if config.multi_constellation { 2 } else { 1 };
        let pools = if n_constellations == 1 {
            vec![train]
        } else {
            let mut idx: Vec<usize> = (0..train.n_samples()).collect();
            idx.shuffle(&mut rng_from(derive_seed(seed, &[stream::SPLIT, 1])));
            let half = idx.len() / 2;
            let mut a = idx[..half].to_vec();
            let mut b = idx[half..].to_vec();
            a.sort_unstable();
            b.sort_unstable();
            vec![train.subset(&a)?, train.subset(&b)?]
        };

        let strategy = partition_registry().create(&config.partition)?;
        let clients = topology.clients();
        debug_assert_eq!(clients.len(), n_clients);
        let mut partitions = Vec::with_capacity(pools.len());
        for (c, pool) in pools.iter().enumerate() {
            let parts = partition_noniid(
                pool,
                clients.len(),
                strategy.as_ref(),
                derive_seed(seed, &[stream::PARTITION, c as u64]),
            )?;
            let mut by_client = BTreeMap::new();
            for (&id, mut part) in clients.iter().zip(parts) {
                part.owner = id;
                if !synthetic && ds.samples_per_client > 0 && part.len() > ds.samples_per_client {
                    let mut rng = rng_from(derive_seed(seed, &[stream::SUBSAMPLE, c as u64, u64::from(id)]));
                    part.sample_indices.shuffle(&mut rng);
                    part.sample_indices.truncate(ds.samples_per_client);
                    part.sample_indices.sort_unstable();
                }
                by_client.insert(id, part);
            }
            partitions.push(by_client);
        }

        Ok(Self {
            combiner: combiner_registry().create(&config.combiner)?,
            selection: selection_registry().create(&config.policy.selection)?,
            scheduling: scheduling_registry().create(&config.policy.scheduling)?,
            payload: payload_bits(spec.param_count()),
            config,
            topology,
            spec,
            test_set,
            pools,
            partitions,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn model_spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test_set
    }

    /// Training pool of a constellation.
    pub fn pool(&self, constellation: u32) -> &Dataset {
        &self.pools[constellation as usize]
    }

    /// Per-client partitions of a constellation's pool.
    pub fn partitions(&self, constellation: u32) -> &BTreeMap<NodeId, DataPartition> {
        &self.partitions[constellation as usize]
    }

    pub fn n_constellations(&self) -> u32 {
        self.pools.len() as u32
    }

    fn servers(&self) -> &[NodeId] {
        &self.topology.haps_ring_order
    }

    pub fn initial_model(&self) -> Result<ParamVector> {
        init_model(&self.spec, derive_seed(self.config.seed, &[stream::MODEL_INIT]))
    }

    pub fn initial_state(&self) -> Result<RoundState> {
        let params = self.initial_model()?;
        let global_models = (0..self.n_constellations())
            .map(|c| {
                self.servers()
                    .iter()
                    .map(|&s| {
                        (
                            s,
                            GlobalModel {
                                params: params.clone(),
                                round_index: 0,
                                constellation_id: c,
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(RoundState {
            round_index: 0,
            clock_s: 0.0,
            global_models,
            selected_clients: vec![BTreeMap::new(); self.pools.len()],
            metrics: None,
        })
    }

    fn plan_client(
        &self,
        constellation: u32,
        client: SelectedClient,
        alloc: Allocation,
        uav_load: &BTreeMap<NodeId, usize>,
    ) -> Result<ClientPlan> {
        let topo = &self.topology;
        let node = topo.node(client.id).expect("selected client exists");
        let path = client.path;
        let first = topo
            .link(client.id, path.via)
            .ok_or_else(|| Error::Protocol(format!("client {} has no link to {}", client.id, path.via)))?;
        let share = (alloc.bandwidth_hz / self.config.link.total_bandwidth_hz).min(1.0);
        let upload = shared_transmission_delay(first, self.payload, share)?;
        let mut broadcast = transmission_delay(first, self.payload, 1)?;
        let mut forward = 0.0;
        if path.via != path.server {
            let second = topo
                .link(path.via, path.server)
                .ok_or_else(|| Error::Protocol(format!("relay {} has no link to {}", path.via, path.server)))?;
            broadcast += transmission_delay(second, self.payload, 1)?;
            let carried = match path.route {
                AccessRoute::ViaUav => uav_load.get(&path.via).copied().unwrap_or(1) as f64,
                _ => 1.0,
            };
            forward = transmission_delay(second, self.payload * carried, 1)?;
        }
        let partition = &self.partitions[constellation as usize][&client.id];
        let epochs = self.config.train.epochs_per_round.min(node.compute.max_epochs);
        let batches = partition.len().div_ceil(self.config.train.batch_size) as u64;
        let work_units = u64::from(epochs) * batches * self.spec.param_count() as u64;
        let compute = compute_time(node, work_units as f64);
        let energy = ClientRecord::energy(
            work_units,
            node.power.compute_energy_per_work_unit,
            alloc.tx_power_w,
            upload,
        );
        Ok(ClientPlan {
            constellation,
            client,
            epochs,
            work_units,
            broadcast,
            upload,
            forward,
            compute,
            alloc,
            energy,
        })
    }

    /// Runs one synchronous round: broadcast, local training, upload with
    /// base-station pre-aggregation, cluster aggregation, ring exchange,
    /// relay exchange, global combination and evaluation.
    pub fn run_round(&self, state: &RoundState, telemetry: &TelemetryStore) -> Result<RoundState> {
        let cfg = &self.config;
        let topo = &self.topology;
        let round = state.round_index;
        let cap = (cfg.policy.max_clients_per_cluster > 0).then_some(cfg.policy.max_clients_per_cluster);
        let policy = self.selection.policy(cfg.snr.threshold_db, cap, telemetry)?;
        let weights = if telemetry.is_empty() {
            None
        } else {
            Some(feedback_weights(telemetry)?)
        };
        let clusters = select_clients(topo, state.clock_s, &policy)?;
        let alloc = schedule_round(
            &clusters,
            topo,
            cfg.link.total_bandwidth_hz,
            self.scheduling.as_ref(),
            weights.as_ref(),
        )?;
        let spent = telemetry.energy_spent();

        // Budgeted clients sit out a round they cannot pay for.
        let mut plans: Vec<ClientPlan> = Vec::new();
        let mut kept: Vec<Clusters> = Vec::new();
        for c in 0..self.n_constellations() {
            let mut uav_load: BTreeMap<NodeId, usize> = BTreeMap::new();
            for m in clusters.values().flatten() {
                if m.path.route == AccessRoute::ViaUav {
                    *uav_load.entry(m.path.via).or_default() += 1;
                }
            }
            let mut cons_clusters: Clusters = BTreeMap::new();
            for (&key, members) in &clusters {
                for &m in members {
                    let plan = self.plan_client(c, m, alloc[&m.id], &uav_load)?;
                    let node = topo.node(m.id).expect("client exists");
                    if let Some(budget) = node.power.battery_budget {
                        let used = spent.get(&m.id).copied().unwrap_or(0.0);
                        if used + plan.energy > budget {
                            continue;
                        }
                    }
                    cons_clusters.entry(key).or_default().push(m);
                    plans.push(plan);
                }
            }
            kept.push(cons_clusters);
        }
        if plans.is_empty() {
            return Err(Error::Protocol(format!(
                "round {round}: every selected client has exhausted its battery"
            )));
        }

        let trained: Vec<(ParamVector, f64, usize)> = plans
            .par_iter()
            .map(|p| {
                let c = p.constellation as usize;
                let start = &state.global_models[c][&p.client.path.server].params;
                let part = &self.partitions[c][&p.client.id];
                let tc = cfg.train_config(p.epochs, client_round_seed(cfg.seed, p.constellation, round, p.client.id));
                let (params, stats) = local_train(start, &self.spec, &self.pools[c], part, &tc)?;
                Ok((params, stats.final_avg_loss, stats.n_samples))
            })
            .collect::<Result<_>>()?;

        let p_count = self.spec.param_count() as f64;
        let infra_rate = cfg.infrastructure.work_rate;
        let mut combined: Vec<BTreeMap<NodeId, GlobalModel>> = Vec::new();
        let mut agg_time = 0.0f64;
        let mut ring_time = 0.0f64;
        let mut combine_time = 0.0f64;
        let mut n_clusters = Vec::new();
        for c in 0..self.n_constellations() {
            let mut updates: BTreeMap<NodeId, (ParamVector, u64)> = BTreeMap::new();
            for (p, (params, _, n)) in plans.iter().zip(&trained) {
                if p.constellation == c {
                    updates.insert(p.client.id, (params.clone(), *n as u64));
                }
            }
            let mut server_inputs: BTreeMap<NodeId, Vec<(NodeId, ParamVector, u64)>> = BTreeMap::new();
            let mut bs_time: BTreeMap<NodeId, f64> = BTreeMap::new();
            for (&key, members) in &kept[c as usize] {
                let server = members[0].path.server;
                let contribs: Vec<(NodeId, ParamVector, u64)> = members
                    .iter()
                    .map(|m| {
                        let (p, n) = &updates[&m.id];
                        (m.id, p.clone(), *n)
                    })
                    .collect();
                if key != server {
                    let pre = cluster_aggregate(&contribs, key, round)?;
                    let t = contribs.len() as f64 * p_count / infra_rate;
                    let slot = bs_time.entry(server).or_insert(0.0);
                    *slot = slot.max(t);
                    server_inputs.entry(server).or_default().push((key, pre.params, pre.n_samples));
                } else {
                    server_inputs.entry(server).or_default().extend(contribs);
                }
            }
            let mut cluster_updates: BTreeMap<NodeId, ClusterUpdate> = BTreeMap::new();
            for (&server, inputs) in &server_inputs {
                let t = inputs.len() as f64 * p_count / infra_rate + bs_time.get(&server).copied().unwrap_or(0.0);
                agg_time = agg_time.max(t);
                cluster_updates.insert(server, cluster_aggregate(inputs, server, round)?);
            }
            n_clusters.push(cluster_updates.len());

            let exchange = ring_exchange(&cluster_updates, self.servers(), topo.neighbor_radius)?;
            let mut t_ring = 0.0;
            for &count in &exchange.max_updates_per_message {
                let mut step = 0.0f64;
                for &s in self.servers() {
                    for n in topo.ring_neighbors(s) {
                        if let Some(link) = topo.link(s, n) {
                            step = step.max(transmission_delay(link, self.payload * count as f64, 1)?);
                        }
                    }
                }
                t_ring += step;
            }
            ring_time = ring_time.max(t_ring);

            let mut globals = BTreeMap::new();
            for (&server, collected) in &exchange.collections {
                combine_time = combine_time.max(collected.len() as f64 * p_count / infra_rate);
                globals.insert(server, combine_global(collected, self.combiner.as_ref(), round, c)?);
            }
            combined.push(globals);
        }

        let mut relay_time = 0.0f64;
        let global_models = if combined.len() > 1 {
            for &s in self.servers() {
                let relay = topo
                    .neighbors_with_role(s, Role::GeoMeoRelay)
                    .next()
                    .ok_or_else(|| Error::Protocol(format!("server {s} has no relay for the foreign exchange")))?;
                let link = topo.link(s, relay).expect("neighbour link exists");
                relay_time = relay_time.max(2.0 * transmission_delay(link, self.payload, 1)?);
            }
            let mut mixed = Vec::with_capacity(combined.len());
            for (c, globals) in combined.iter().enumerate() {
                let foreign: Vec<GlobalModel> = combined
                    .iter()
                    .enumerate()
                    .filter(|&(f, _)| f != c)
                    .map(|(_, g)| g.values().next().expect("server present").clone())
                    .collect();
                let foreign_clusters: usize = (0..combined.len()).filter(|&f| f != c).map(|f| n_clusters[f]).sum();
                let w = cfg
                    .relay_mix_weight
                    .unwrap_or_else(|| default_mix_weight(n_clusters[c], foreign_clusters));
                let mut out = BTreeMap::new();
                for (&s, local) in globals {
                    out.insert(s, relay_mix(local, &foreign, w)?);
                }
                mixed.push(out);
            }
            mixed
        } else {
            combined
        };

        let stages = vec![
            StageLatency::new(Stage::Broadcast, max_of(plans.iter().map(|p| p.broadcast))),
            StageLatency::new(Stage::LocalCompute, max_of(plans.iter().map(|p| p.compute))),
            StageLatency::new(Stage::Upload, max_of(plans.iter().map(|p| p.upload + p.forward))),
            StageLatency::new(Stage::ClusterAggCompute, agg_time),
            StageLatency::new(Stage::RingExchange, ring_time),
            StageLatency::new(Stage::RelayExchange, relay_time),
            StageLatency::new(Stage::GlobalCombineCompute, combine_time),
        ];
        let latency = round_latency(&stages);

        let per_client: Vec<ClientRecord> = plans
            .iter()
            .zip(&trained)
            .map(|(p, (_, loss, n))| {
                let node = topo.node(p.client.id).expect("client exists");
                let budget = node.power.battery_budget;
                let used = spent.get(&p.client.id).copied().unwrap_or(0.0);
                ClientRecord {
                    client_id: p.client.id,
                    constellation: p.constellation,
                    route: p.client.path.route,
                    n_samples: *n as u64,
                    epochs: p.epochs,
                    work_units: p.work_units,
                    final_train_loss: *loss,
                    compute_time_s: p.compute,
                    broadcast_time_s: p.broadcast,
                    upload_time_s: p.upload,
                    forward_time_s: p.forward,
                    bandwidth_hz: p.alloc.bandwidth_hz,
                    tx_power_w: p.alloc.tx_power_w,
                    energy_j: p.energy,
                    battery_budget_j: budget,
                    battery_remaining_j: budget.map(|b| b - used - p.energy),
                }
            })
            .collect();

        let primary = global_models[0].values().next().expect("server present");
        let eval = evaluate(&primary.params, &self.spec, &self.test_set)?;
        let metrics = RoundMetrics {
            round_index: round,
            global_accuracy: eval.accuracy,
            global_test_loss: eval.avg_loss,
            avg_train_loss: avg_train_loss(&per_client),
            round_latency_s: latency,
            cumulative_latency_s: state.clock_s + latency,
            stage_latencies: stages,
            per_client,
        };
        let selected_clients = kept
            .iter()
            .map(|cl| {
                cl.iter()
                    .map(|(&k, m)| (k, m.iter().map(|s| s.id).collect()))
                    .collect()
            })
            .collect();
        Ok(RoundState {
            round_index: round + 1,
            clock_s: metrics.cumulative_latency_s,
            global_models,
            selected_clients,
            metrics: Some(metrics),
        })
    }

    /// Runs the configured number of rounds, stopping early only when a
    /// target accuracy is configured and reached.
    pub fn run(&self) -> Result<SimulationResult> {
        let cfg = &self.config;
        let mut telemetry = TelemetryStore::new(cfg.name.clone(), config_hash(cfg), cfg.seed);
        let initial_model = self.initial_model()?;
        let mut state = self.initial_state()?;
        let mut trajectory = Vec::with_capacity(cfg.rounds as usize);
        for _ in 0..cfg.rounds {
            state = self.run_round(&state, &telemetry)?;
            let metrics = state.metrics.clone().expect("completed round has metrics");
            let accuracy = metrics.global_accuracy;
            telemetry.record_round(metrics)?;
            trajectory.push(state.global_model().params.clone());
            if cfg.target_accuracy.is_some_and(|t| accuracy >= t) {
                break;
            }
        }
        Ok(SimulationResult {
            initial_model,
            trajectory,
            final_model: state.global_model().clone(),
            telemetry,
        })
    }
}

/// Servers that hold a model after a round; all of them must agree.
pub fn consensus_gap(models: &BTreeMap<NodeId, GlobalModel>) -> f64 {
    let mut it = models.values();
    let Some(first) = it.next() else {
        return 0.0;
    };
    it.map(|m| m.params.max_abs_diff(&first.params)).fold(0.0, f64::max)
}

/// Builds the simulation for `config` and runs it.
pub fn run_simulation(config: &ScenarioConfig) -> Result<SimulationResult> {
    Simulation::new(config.clone())?.run()
}
