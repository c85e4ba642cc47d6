//! Scenario files and run orchestration.

mod scenario;

pub use scenario::{Diagnostic, NodeSpec, Scenario};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::federation::{partition_topology, run_federated, FederationError, PartitionStats};
use crate::kernel::SimTime;
use crate::process::protocols::Registry;
use crate::radio::coverage_radius;
use crate::rng::{global_stream, Stream};
use crate::sim::{NodeReport, SimError, World, WorldConfig};
use crate::telemetry::{ManifestEntry, Telemetry, TelemetryError};
use crate::topology::{Position, Topology, TopologyError};

pub const EFFECTIVE_SCENARIO_FILE: &str = "scenario.effective";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("process model '{name}' is invalid: {details}")]
    Model { name: String, details: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Places the scenario's nodes. Random placement draws x then y for each
/// node in id order from the placement stream.
pub fn build_topology(s: &Scenario) -> Result<Topology, HarnessError> {
    let coverage = coverage_radius(&s.pipeline, &s.radio);
    let cell = if coverage.is_finite() && coverage > 0.0 {
        coverage
    } else {
        s.field.width.max(s.field.height)
    };
    let mut topology = Topology::new(s.field, cell);
    match &s.nodes {
        NodeSpec::Random(n) => {
            let mut rng = global_stream(s.seed, Stream::Placement);
            for _ in 0..*n {
                let x = rng.random::<f64>() * s.field.width;
                let y = rng.random::<f64>() * s.field.height;
                topology.add_node(Position::new(x, y, 0.0), s.radio)?;
            }
        }
        NodeSpec::Explicit(ps) => {
            for p in ps {
                topology.add_node(*p, s.radio)?;
            }
        }
    }
    Ok(topology)
}

pub fn world_config(s: &Scenario, registry: &Registry) -> Result<WorldConfig, HarnessError> {
    let model = registry
        .build(&s.process, &s.protocol)
        .ok_or_else(|| HarnessError::Model {
            name: s.process.clone(),
            details: "not registered".to_string(),
        })?
        .validate()
        .map_err(|d| HarnessError::Model {
            name: s.process.clone(),
            details: d
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        })?;
    Ok(WorldConfig {
        seed: s.seed,
        pipeline: s.pipeline,
        energy: s.energy.clone(),
        routing: s.routing,
        process: model,
        packet: s.packet,
        mobility: s.mobility,
        energy_sample: s.energy_sample,
        filter: s.log.clone(),
        kernel: s.kernel,
    })
}

/// Result of executing a scenario in memory.
#[derive(Debug)]
pub struct Execution {
    pub telemetry: Telemetry,
    pub nodes: Vec<NodeReport>,
    pub dispatched: u64,
    pub end: SimTime,
    pub peak_pending: usize,
    pub partitions: Vec<PartitionStats>,
    pub rounds: u64,
    pub routes_computed: u64,
    pub route_cache_hits: u64,
    pub wall_s: f64,
}

/// Runs the scenario over `[0, stop)` without touching the filesystem.
/// End-of-run per-node statistics are folded into the telemetry in node
/// order, so they do not depend on the partition count.
pub fn execute(s: &Scenario, registry: &Registry) -> Result<Execution, HarnessError> {
    s.validate().map_err(HarnessError::Invalid)?;
    let started = Instant::now();
    let topology = build_topology(s)?;
    let config = world_config(s, registry)?;
    let last = s.stop.checked_sub(SimTime::from_nanos(1));

    let mut exec = if s.partitions <= 1 {
        let mut world = World::monolithic(&config, topology)?;
        world.boot()?;
        if let Some(last) = last {
            world.run_until(last)?;
        }
        let out = world.finish(s.stop);
        Execution {
            telemetry: out.telemetry,
            nodes: out.nodes,
            dispatched: out.dispatched,
            end: s.stop,
            peak_pending: out.peak_pending,
            partitions: vec![PartitionStats {
                id: 0,
                nodes: s.nodes.count(),
                events: out.dispatched,
                remote_sent: 0,
                blocked_fraction: 0.0,
            }],
            rounds: 0,
            routes_computed: out.routes_computed,
            route_cache_hits: out.route_cache_hits,
            wall_s: 0.0,
        }
    } else {
        let parts = partition_topology(&topology, &config, s.partitions)?;
        let out = run_federated(&config, &topology, &parts, s.stop)?;
        Execution {
            telemetry: out.telemetry,
            nodes: out.nodes,
            dispatched: out.dispatched,
            end: s.stop,
            peak_pending: out.peak_pending,
            partitions: out.partitions,
            rounds: out.rounds,
            routes_computed: out.routes_computed,
            route_cache_hits: out.route_cache_hits,
            wall_s: 0.0,
        }
    };
    record_node_stats(&mut exec.telemetry, &exec.nodes)?;
    exec.wall_s = started.elapsed().as_secs_f64();
    Ok(exec)
}

fn record_node_stats(t: &mut Telemetry, nodes: &[NodeReport]) -> Result<(), TelemetryError> {
    let probes = [
        "energy.remaining_j",
        "energy.debited_j",
        "energy.death_time_s",
        "node.sent",
        "node.received",
        "node.dropped",
        "process.unmatched",
    ];
    for p in probes {
        if t.scalar(p).is_none() {
            t.register_scalar(p)?;
        }
    }
    for n in nodes {
        t.record_scalar("energy.remaining_j", n.remaining_j)?;
        t.record_scalar("energy.debited_j", n.debited_j)?;
        if let Some(at) = n.died_at {
            t.record_scalar("energy.death_time_s", at.as_secs_f64())?;
        }
        t.record_scalar("node.sent", n.sent as f64)?;
        t.record_scalar("node.received", n.received as f64)?;
        t.record_scalar("node.dropped", n.dropped as f64)?;
        t.record_scalar("process.unmatched", n.unmatched as f64)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub events: u64,
    pub end: SimTime,
    pub wall_s: f64,
    /// Resident-set high-water mark of this process, where the platform
    /// reports one.
    pub peak_memory_bytes: Option<u64>,
    pub peak_pending: usize,
    pub trace_lines: usize,
    pub manifest: Vec<ManifestEntry>,
    pub partitions: Vec<PartitionStats>,
    pub rounds: u64,
    pub routes_computed: u64,
    pub route_cache_hits: u64,
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "events dispatched: {}", self.events)?;
        writeln!(f, "simulated end: {}", self.end)?;
        writeln!(f, "wall clock: {:.3} s", self.wall_s)?;
        match self.peak_memory_bytes {
            Some(b) => writeln!(f, "peak memory: {:.1} MiB", b as f64 / (1024.0 * 1024.0))?,
            None => writeln!(f, "peak memory: unavailable")?,
        }
        writeln!(f, "peak pending events: {}", self.peak_pending)?;
        writeln!(
            f,
            "routes computed: {}, cache hits: {}",
            self.routes_computed, self.route_cache_hits
        )?;
        if self.partitions.len() > 1 {
            writeln!(f, "rounds: {}", self.rounds)?;
            for p in &self.partitions {
                writeln!(
                    f,
                    "partition {}: {} nodes, {} events, {} remote messages, blocked {:.1}%",
                    p.id,
                    p.nodes,
                    p.events,
                    p.remote_sent,
                    p.blocked_fraction * 100.0
                )?;
            }
        }
        for m in &self.manifest {
            writeln!(f, "wrote {} ({} lines)", m.path.display(), m.lines)?;
        }
        Ok(())
    }
}

/// Reads the peak resident set size from `/proc/self/status`.
pub fn peak_memory_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Executes the scenario and writes the trace, statistics and the effective
/// scenario into `out`. Only deterministic content goes to disk.
pub fn run(s: &Scenario, registry: &Registry, out: &Path) -> Result<RunSummary, HarnessError> {
    let exec = execute(s, registry)?;
    let mut manifest = exec.telemetry.flush(out)?;
    let path = out.join(EFFECTIVE_SCENARIO_FILE);
    fs::write(&path, s.serialize()).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    manifest.push(ManifestEntry {
        path,
        lines: s.serialize().lines().count(),
    });
    Ok(RunSummary {
        events: exec.dispatched,
        end: exec.end,
        wall_s: exec.wall_s,
        peak_memory_bytes: peak_memory_bytes(),
        peak_pending: exec.peak_pending,
        trace_lines: exec.telemetry.trace_lines(),
        manifest,
        partitions: exec.partitions,
        rounds: exec.rounds,
        routes_computed: exec.routes_computed,
        route_cache_hits: exec.route_cache_hits,
    })
}
