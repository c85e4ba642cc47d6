//! Partitioned execution: the node set is cut into x-axis strips, each run
//! by its own worker thread and kernel. Workers advance in lockstep rounds
//! up to a safe horizon (earliest pending time plus lookahead) and exchange
//! boundary-crossing packet arrivals between rounds.

use std::collections::BTreeMap;
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::kernel::SimTime;
use crate::radio::{coverage_radius, propagation_delay, transmission_delay};
use crate::sim::{NodeReport, RemoteMessage, SimError, World, WorldConfig};
use crate::telemetry::Telemetry;
use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteLink {
    pub local: NodeId,
    pub remote: NodeId,
    pub remote_partition: u32,
    pub latency: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub id: u32,
    pub owned: Vec<NodeId>,
    /// Strip bounds along x; neighbouring strips share a boundary.
    pub x_range: (f64, f64),
    pub remote_links: Vec<RemoteLink>,
}

#[derive(Debug, Error)]
pub enum FederationError {
    #[error("cannot split {nodes} nodes into {k} partitions")]
    TooManyPartitions { k: usize, nodes: usize },
    #[error("remote link {a}-{b} has zero latency; lookahead must be positive")]
    ZeroLookahead { a: NodeId, b: NodeId },
    #[error("no partition can advance past {at}")]
    DeadlockDetected { at: SimTime },
    #[error("federated runs need a static topology; disable mobility")]
    MobilityUnsupported,
    #[error("message for node {node} sent to partition {partition}, which does not own it")]
    UnknownPartition { partition: u32, node: NodeId },
    #[error("partition {partition}: {source}")]
    Worker {
        partition: u32,
        #[source]
        source: SimError,
    },
    #[error("partition {0} worker stopped unexpectedly")]
    WorkerLost(u32),
}

/// Splits nodes into `k` strips of equal node count ordered by (x, id) and
/// lists the links that cross strips: every ordered pair within the
/// sender's coverage radius whose endpoints are owned by different strips.
pub fn partition_topology(
    topology: &Topology,
    config: &WorldConfig,
    k: usize,
) -> Result<Vec<Partition>, FederationError> {
    let n = topology.len();
    if k == 0 || k > n {
        return Err(FederationError::TooManyPartitions { k, nodes: n });
    }
    let mut order: Vec<(f64, NodeId)> = topology
        .node_ids()
        .map(|id| (topology.position(id).expect("listed").x, id))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut owner = vec![0u32; n];
    let mut parts: Vec<Partition> = (0..k)
        .map(|p| {
            let chunk = &order[p * n / k..(p + 1) * n / k];
            for &(_, id) in chunk {
                owner[id.index()] = p as u32;
            }
            let lo = if p == 0 {
                0.0
            } else {
                (order[p * n / k - 1].0 + chunk[0].0) / 2.0
            };
            let hi = if p + 1 == k {
                topology.field().width
            } else {
                (chunk[chunk.len() - 1].0 + order[(p + 1) * n / k].0) / 2.0
            };
            let mut owned: Vec<NodeId> = chunk.iter().map(|&(_, id)| id).collect();
            owned.sort_unstable();
            Partition {
                id: p as u32,
                owned,
                x_range: (lo, hi),
                remote_links: Vec::new(),
            }
        })
        .collect();

    let min_bits = config.packet.payload_bits + config.packet.header_bits;
    let mut scratch = Vec::new();
    for a in topology.node_ids() {
        let tx = topology.node(a).expect("listed");
        let radius = coverage_radius(&config.pipeline, &tx.radio);
        topology
            .neighbors_within_into(a, radius, &mut scratch)
            .expect("valid radius");
        for &b in &scratch {
            let (pa, pb) = (owner[a.index()], owner[b.index()]);
            if pa == pb {
                continue;
            }
            let d = topology.distance(a, b).expect("listed");
            let latency = propagation_delay(d)
                .checked_add(transmission_delay(min_bits, tx.radio.bitrate))
                .unwrap_or(SimTime::MAX);
            if latency == SimTime::ZERO {
                return Err(FederationError::ZeroLookahead { a, b });
            }
            parts[pa as usize].remote_links.push(RemoteLink {
                local: a,
                remote: b,
                remote_partition: pb,
                latency,
            });
            // the receiving side records the same link from its end
            let entry = RemoteLink {
                local: b,
                remote: a,
                remote_partition: pa,
                latency,
            };
            let theirs = &mut parts[pb as usize].remote_links;
            if !theirs.contains(&entry) {
                theirs.push(entry);
            }
        }
    }
    for p in &mut parts {
        p.remote_links.sort_by_key(|l| (l.local, l.remote));
        p.remote_links.dedup();
    }
    Ok(parts)
}

/// Smallest remote-link latency, or `None` when partitions never talk.
pub fn lookahead(partitions: &[Partition]) -> Option<SimTime> {
    partitions
        .iter()
        .flat_map(|p| p.remote_links.iter().map(|l| l.latency))
        .min()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStats {
    pub id: u32,
    pub nodes: usize,
    pub events: u64,
    pub remote_sent: u64,
    /// Share of the run the worker spent waiting on the barrier.
    pub blocked_fraction: f64,
}

#[derive(Debug)]
pub struct FederatedOutput {
    pub telemetry: Telemetry,
    pub nodes: Vec<NodeReport>,
    pub dispatched: u64,
    pub peak_pending: usize,
    pub rounds: u64,
    pub lookahead: Option<SimTime>,
    pub partitions: Vec<PartitionStats>,
    pub routes_computed: u64,
    pub route_cache_hits: u64,
}

enum Command {
    Advance {
        bound: SimTime,
        inbox: Vec<RemoteMessage>,
    },
    Finish {
        end: SimTime,
    },
}

struct Report {
    next: Option<SimTime>,
    outbox: Vec<RemoteMessage>,
}

struct Final {
    output: crate::sim::WorldOutput,
    busy: Duration,
    remote_sent: u64,
}

type Reply = Result<Report, SimError>;

/// Runs the scenario over `partitions` and merges the result. Events in
/// `[0, stop)` are dispatched, matching a monolithic run over the same
/// window.
pub fn run_federated(
    config: &WorldConfig,
    topology: &Topology,
    partitions: &[Partition],
    stop: SimTime,
) -> Result<FederatedOutput, FederationError> {
    if config.mobility.is_some() && partitions.len() > 1 {
        return Err(FederationError::MobilityUnsupported);
    }
    let mut owner = vec![u32::MAX; topology.len()];
    for p in partitions {
        for &id in &p.owned {
            owner[id.index()] = p.id;
        }
    }
    let owner: Arc<[u32]> = owner.into();
    let la = lookahead(partitions);
    let started = Instant::now();

    thread::scope(|scope| {
        let mut to_workers = Vec::new();
        let mut from_workers = Vec::new();
        let mut finals = Vec::new();
        for p in partitions {
            let (cmd_tx, cmd_rx) = mpsc::channel::<Command>();
            let (rep_tx, rep_rx) = mpsc::channel::<Reply>();
            let (fin_tx, fin_rx) = mpsc::channel::<Final>();
            let owner = Arc::clone(&owner);
            let id = p.id;
            scope.spawn(move || worker(config, topology, owner, id, cmd_rx, rep_tx, fin_tx));
            to_workers.push(cmd_tx);
            from_workers.push(rep_rx);
            finals.push(fin_rx);
        }

        let gather = |from: &[mpsc::Receiver<Reply>]| -> Result<Vec<Report>, FederationError> {
            from.iter()
                .zip(partitions)
                .map(|(rx, p)| match rx.recv() {
                    Ok(Ok(r)) => Ok(r),
                    Ok(Err(source)) => Err(FederationError::Worker {
                        partition: p.id,
                        source,
                    }),
                    Err(_) => Err(FederationError::WorkerLost(p.id)),
                })
                .collect()
        };

        // boot reply
        let mut reports = gather(&from_workers)?;
        let mut in_flight: Vec<RemoteMessage> = Vec::new();
        let mut rounds = 0u64;
        let last = stop.checked_sub(SimTime::from_nanos(1));
        loop {
            for r in &mut reports {
                in_flight.append(&mut r.outbox);
            }
            let tmin = reports
                .iter()
                .filter_map(|r| r.next)
                .chain(in_flight.iter().map(|m| m.receive_time))
                .min();
            let (Some(tmin), Some(last)) = (tmin, last) else {
                break;
            };
            if tmin > last {
                break;
            }
            let bound = match la {
                None => last,
                Some(la) => {
                    let horizon = tmin.checked_add(la).unwrap_or(SimTime::MAX);
                    if horizon <= tmin {
                        return Err(FederationError::DeadlockDetected { at: tmin });
                    }
                    horizon
                        .checked_sub(SimTime::from_nanos(1))
                        .expect("positive")
                        .min(last)
                }
            };
            let mut inboxes: BTreeMap<u32, Vec<RemoteMessage>> = BTreeMap::new();
            for m in in_flight.drain(..) {
                if owner.get(m.target.index()) != Some(&m.to_partition) {
                    return Err(FederationError::UnknownPartition {
                        partition: m.to_partition,
                        node: m.target,
                    });
                }
                inboxes.entry(m.to_partition).or_default().push(m);
            }
            for (p, tx) in partitions.iter().zip(&to_workers) {
                let inbox = inboxes.remove(&p.id).unwrap_or_default();
                tx.send(Command::Advance { bound, inbox })
                    .map_err(|_| FederationError::WorkerLost(p.id))?;
            }
            reports = gather(&from_workers)?;
            rounds += 1;
        }

        let end = stop;
        for (p, tx) in partitions.iter().zip(&to_workers) {
            tx.send(Command::Finish { end })
                .map_err(|_| FederationError::WorkerLost(p.id))?;
        }
        let wall = started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
        let mut outputs = Vec::new();
        let mut stats = Vec::new();
        for (p, rx) in partitions.iter().zip(&finals) {
            let f = rx.recv().map_err(|_| FederationError::WorkerLost(p.id))?;
            stats.push(PartitionStats {
                id: p.id,
                nodes: p.owned.len(),
                events: f.output.dispatched,
                remote_sent: f.remote_sent,
                blocked_fraction: (1.0 - f.busy.as_secs_f64() / wall).clamp(0.0, 1.0),
            });
            outputs.push(f.output);
        }
        let dispatched = outputs.iter().map(|o| o.dispatched).sum();
        let peak_pending = outputs.iter().map(|o| o.peak_pending).sum();
        let routes_computed = outputs.iter().map(|o| o.routes_computed).sum();
        let route_cache_hits = outputs.iter().map(|o| o.route_cache_hits).sum();
        let mut nodes: Vec<NodeReport> = Vec::new();
        let mut tels = Vec::new();
        for o in outputs {
            nodes.extend(o.nodes);
            tels.push(o.telemetry);
        }
        nodes.sort_by_key(|r| r.node);
        Ok(FederatedOutput {
            telemetry: Telemetry::merge(tels),
            nodes,
            dispatched,
            peak_pending,
            rounds,
            lookahead: la,
            partitions: stats,
            routes_computed,
            route_cache_hits,
        })
    })
}

fn worker(
    config: &WorldConfig,
    topology: &Topology,
    owner: Arc<[u32]>,
    id: u32,
    commands: mpsc::Receiver<Command>,
    replies: mpsc::Sender<Reply>,
    finals: mpsc::Sender<Final>,
) {
    let mut busy = Duration::ZERO;
    let mut remote_sent = 0u64;
    let setup = Instant::now();
    let world = World::partition(config, topology.clone(), owner, id).and_then(|mut w| {
        w.boot()?;
        Ok(w)
    });
    let mut world = match world {
        Ok(w) => w,
        Err(e) => {
            let _ = replies.send(Err(e));
            return;
        }
    };
    let outbox = world.take_outbox();
    remote_sent += outbox.len() as u64;
    let next = world.next_event_time();
    busy += setup.elapsed();
    if replies.send(Ok(Report { next, outbox })).is_err() {
        return;
    }
    while let Ok(cmd) = commands.recv() {
        match cmd {
            Command::Advance { bound, mut inbox } => {
                let t0 = Instant::now();
                // arrival order within a round does not matter: ids fix the order
                inbox.sort_by_key(|m| (m.receive_time, m.id));
                let mut result = inbox.into_iter().try_for_each(|m| world.inject(m));
                if result.is_ok() && bound >= world.now() {
                    result = world.run_until(bound);
                }
                let reply = result.map(|()| {
                    let outbox = world.take_outbox();
                    remote_sent += outbox.len() as u64;
                    Report {
                        next: world.next_event_time(),
                        outbox,
                    }
                });
                busy += t0.elapsed();
                let failed = reply.is_err();
                if replies.send(reply).is_err() || failed {
                    return;
                }
            }
            Command::Finish { end } => {
                let output = world.finish(end);
                let _ = finals.send(Final {
                    output,
                    busy,
                    remote_sent,
                });
                return;
            }
        }
    }
}
