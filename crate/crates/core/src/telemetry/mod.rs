mod filter;

pub use filter::LogFilter;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::kernel::{EventId, EventKind, SimTime, KERNEL_ORIGIN};
use crate::topology::NodeId;

pub const TRACE_FILE: &str = "trace.tsv";
pub const SCALARS_FILE: &str = "scalars.tsv";

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("probe '{0}' is not registered")]
    UnknownProbe(String),
    #[error("probe '{0}' is already registered")]
    DuplicateProbe(String),
    #[error("probe '{name}' is a {actual} probe")]
    KindMismatch { name: String, actual: ProbeKind },
    #[error("probe '{name}': time {at} precedes last recorded {last}")]
    TimeRegression {
        name: String,
        at: SimTime,
        last: SimTime,
    },
    #[error("cannot write {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    Scalar,
    Vector,
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeKind::Scalar => "scalar",
            ProbeKind::Vector => "vector",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarStats {
    pub count: u64,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
}

impl ScalarStats {
    fn record(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
        self.sum += v;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

/// A vector sample keyed by the event that produced it, so that series from
/// different partitions merge into the same order a single run would give.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    time: SimTime,
    event: EventId,
    seq: u32,
    value: f64,
}

#[derive(Debug, Clone)]
enum Accumulator {
    Scalar(ScalarStats),
    Vector { unit: String, samples: Vec<Sample> },
}

impl Accumulator {
    fn kind(&self) -> ProbeKind {
        match self {
            Accumulator::Scalar(_) => ProbeKind::Scalar,
            Accumulator::Vector { .. } => ProbeKind::Vector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub lines: usize,
}

/// Probes plus the filtered trace of one simulation (or one partition of it).
#[derive(Debug, Clone)]
pub struct Telemetry {
    filter: LogFilter,
    text: String,
    /// (time, id, byte offset of the line start); lines are appended in
    /// dispatch order so this stays sorted.
    index: Vec<(SimTime, EventId, usize)>,
    probes: BTreeMap<String, Accumulator>,
    context: EventId,
    context_seq: u32,
}

impl Default for Telemetry {
    fn default() -> Self {
        Self::new(LogFilter::all())
    }
}

impl Telemetry {
    pub fn new(filter: LogFilter) -> Self {
        Telemetry {
            filter,
            text: String::new(),
            index: Vec::new(),
            probes: BTreeMap::new(),
            context: EventId {
                created: SimTime::ZERO,
                depth: 0,
                origin: KERNEL_ORIGIN,
                seq: 0,
            },
            context_seq: 0,
        }
    }

    pub fn filter(&self) -> &LogFilter {
        &self.filter
    }

    pub fn register_scalar(&mut self, name: &str) -> Result<(), TelemetryError> {
        self.register(
            name,
            Accumulator::Scalar(ScalarStats {
                count: 0,
                sum: 0.0,
                min: 0.0,
                max: 0.0,
            }),
        )
    }

    pub fn register_vector(&mut self, name: &str, unit: &str) -> Result<(), TelemetryError> {
        self.register(
            name,
            Accumulator::Vector {
                unit: unit.to_string(),
                samples: Vec::new(),
            },
        )
    }

    fn register(&mut self, name: &str, acc: Accumulator) -> Result<(), TelemetryError> {
        if self.probes.contains_key(name) {
            return Err(TelemetryError::DuplicateProbe(name.to_string()));
        }
        self.probes.insert(name.to_string(), acc);
        Ok(())
    }

    /// Marks the event whose handler is about to record samples.
    pub fn set_context(&mut self, event: EventId) {
        self.context = event;
        self.context_seq = 0;
    }

    pub fn record_scalar(&mut self, name: &str, value: f64) -> Result<(), TelemetryError> {
        match self.probes.get_mut(name) {
            None => Err(TelemetryError::UnknownProbe(name.to_string())),
            Some(Accumulator::Scalar(s)) => {
                s.record(value);
                Ok(())
            }
            Some(acc) => Err(TelemetryError::KindMismatch {
                name: name.to_string(),
                actual: acc.kind(),
            }),
        }
    }

    pub fn record_vector(
        &mut self,
        name: &str,
        t: SimTime,
        value: f64,
    ) -> Result<(), TelemetryError> {
        let (event, seq) = (self.context, self.context_seq);
        match self.probes.get_mut(name) {
            None => Err(TelemetryError::UnknownProbe(name.to_string())),
            Some(Accumulator::Vector { samples, .. }) => {
                if let Some(last) = samples.last() {
                    if t < last.time {
                        return Err(TelemetryError::TimeRegression {
                            name: name.to_string(),
                            at: t,
                            last: last.time,
                        });
                    }
                }
                samples.push(Sample {
                    time: t,
                    event,
                    seq,
                    value,
                });
                self.context_seq += 1;
                Ok(())
            }
            Some(acc) => Err(TelemetryError::KindMismatch {
                name: name.to_string(),
                actual: acc.kind(),
            }),
        }
    }

    pub fn scalar(&self, name: &str) -> Option<ScalarStats> {
        match self.probes.get(name)? {
            Accumulator::Scalar(s) => Some(*s),
            Accumulator::Vector { .. } => None,
        }
    }

    pub fn vector(&self, name: &str) -> Option<Vec<(SimTime, f64)>> {
        match self.probes.get(name)? {
            Accumulator::Vector { samples, .. } => {
                Some(samples.iter().map(|s| (s.time, s.value)).collect())
            }
            Accumulator::Scalar(_) => None,
        }
    }

    /// Writes one trace line if the event passes the filter.
    pub fn log_event(
        &mut self,
        time: SimTime,
        id: EventId,
        kind: EventKind,
        node: Option<NodeId>,
        detail: impl fmt::Display,
    ) -> bool {
        if !self.filter.matches(time, kind, node) {
            return false;
        }
        let start = self.text.len();
        let _ = write!(self.text, "{}\t{}\t", time.as_nanos(), kind.name());
        match node {
            Some(n) => {
                let _ = write!(self.text, "{}", n.0);
            }
            None => self.text.push('-'),
        }
        let _ = writeln!(self.text, "\t{detail}");
        self.index.push((time, id, start));
        true
    }

    pub fn trace_lines(&self) -> usize {
        self.index.len()
    }

    pub fn trace_text(&self) -> &str {
        &self.text
    }

    /// Merges per-partition telemetry into the single-run equivalent. Trace
    /// lines and vector samples are ordered by (time, event id); scalar
    /// accumulators are combined in partition order.
    pub fn merge(parts: Vec<Telemetry>) -> Telemetry {
        let mut iter = parts.into_iter();
        let Some(first) = iter.next() else {
            return Telemetry::default();
        };
        let rest: Vec<Telemetry> = iter.collect();
        if rest.is_empty() {
            return first;
        }
        let mut all = vec![first];
        all.extend(rest);

        let mut order: Vec<(SimTime, EventId, usize, usize)> = all
            .iter()
            .enumerate()
            .flat_map(|(p, t)| {
                t.index
                    .iter()
                    .enumerate()
                    .map(move |(i, &(time, id, _))| (time, id, p, i))
            })
            .collect();
        order.sort_unstable_by_key(|&(time, id, _, _)| (time, id));

        let mut merged = Telemetry::new(all[0].filter.clone());
        merged.text.reserve(all.iter().map(|t| t.text.len()).sum());
        merged.index.reserve(order.len());
        for (time, id, p, i) in order {
            let line = all[p].line(i);
            merged.index.push((time, id, merged.text.len()));
            merged.text.push_str(line);
        }

        for part in &all {
            for (name, acc) in &part.probes {
                match (merged.probes.get_mut(name), acc) {
                    (None, acc) => {
                        merged.probes.insert(name.clone(), acc.clone());
                    }
                    (Some(Accumulator::Scalar(m)), Accumulator::Scalar(s)) => {
                        if s.count > 0 {
                            if m.count == 0 {
                                *m = *s;
                            } else {
                                m.count += s.count;
                                m.sum += s.sum;
                                m.min = m.min.min(s.min);
                                m.max = m.max.max(s.max);
                            }
                        }
                    }
                    (
                        Some(Accumulator::Vector { samples: m, .. }),
                        Accumulator::Vector { samples: s, .. },
                    ) => {
                        m.extend_from_slice(s);
                    }
                    // Registration is identical across partitions, so kinds agree.
                    _ => {}
                }
            }
        }
        for acc in merged.probes.values_mut() {
            if let Accumulator::Vector { samples, .. } = acc {
                samples.sort_by_key(|s| (s.time, s.event, s.seq));
            }
        }
        merged
    }

    fn line(&self, i: usize) -> &str {
        let start = self.index[i].2;
        let end = self.index.get(i + 1).map_or(self.text.len(), |e| e.2);
        &self.text[start..end]
    }

    /// Writes the trace, the scalar summary and one file per vector probe.
    pub fn flush(&self, dir: &Path) -> Result<Vec<ManifestEntry>, TelemetryError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| TelemetryError::IoFailure { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut manifest = Vec::new();

        let trace_path = dir.join(TRACE_FILE);
        write_file(&trace_path, self.text.as_bytes()).map_err(io(&trace_path))?;
        manifest.push(ManifestEntry {
            path: trace_path,
            lines: self.index.len(),
        });

        let mut scalars = String::from("# name\tcount\tsum\tmin\tmax\tmean\n");
        let mut scalar_lines = 0;
        for (name, acc) in &self.probes {
            if let Accumulator::Scalar(s) = acc {
                if s.count > 0 {
                    let _ = writeln!(
                        scalars,
                        "{name}\t{}\t{}\t{}\t{}\t{}",
                        s.count,
                        s.sum,
                        s.min,
                        s.max,
                        s.mean()
                    );
                    scalar_lines += 1;
                }
            }
        }
        let scalars_path = dir.join(SCALARS_FILE);
        write_file(&scalars_path, scalars.as_bytes()).map_err(io(&scalars_path))?;
        manifest.push(ManifestEntry {
            path: scalars_path,
            lines: scalar_lines,
        });

        for (name, acc) in &self.probes {
            if let Accumulator::Vector { unit, samples } = acc {
                let mut body = format!("# probe {name}\n# unit {unit}\n# time_s\tvalue\n");
                for s in samples {
                    let ns = s.time.as_nanos();
                    let _ = writeln!(
                        body,
                        "{}.{:09}\t{}",
                        ns / 1_000_000_000,
                        ns % 1_000_000_000,
                        s.value
                    );
                }
                let path = dir.join(vector_file_name(name));
                write_file(&path, body.as_bytes()).map_err(io(&path))?;
                manifest.push(ManifestEntry {
                    path,
                    lines: samples.len(),
                });
            }
        }
        Ok(manifest)
    }
}

pub fn vector_file_name(probe: &str) -> String {
    let safe: String = probe
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("vector-{safe}.tsv")
}

fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    f.write_all(bytes)?;
    f.flush()
}
