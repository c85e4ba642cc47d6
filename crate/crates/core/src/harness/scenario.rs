//! Line-oriented scenario files: `key = value`, `#` starts a comment,
//! physical quantities carry their unit in the key suffix.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::energy::{EnergyConfig, ModelKind, PowerState};
use crate::kernel::{KernelConfig, SimTime};
use crate::process::protocols::{ProtocolParams, Registry};
use crate::radio::{Modulation, PipelineConfig, Propagation, RadioParams};
use crate::sim::{MobilityConfig, PacketShape};
use crate::telemetry::LogFilter;
use crate::topology::{Field, NodeId, Position, WaypointConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum NodeSpec {
    Random(usize),
    Explicit(Vec<Position>),
}

impl NodeSpec {
    pub fn count(&self) -> usize {
        match self {
            NodeSpec::Random(n) => *n,
            NodeSpec::Explicit(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub stop: SimTime,
    pub field: Field,
    pub nodes: NodeSpec,
    pub radio: RadioParams,
    pub pipeline: PipelineConfig,
    pub energy: EnergyConfig,
    pub energy_sample: Option<SimTime>,
    pub routing: bool,
    pub process: String,
    pub protocol: ProtocolParams,
    pub packet: PacketShape,
    pub mobility: Option<MobilityConfig>,
    pub log: LogFilter,
    pub partitions: usize,
    pub kernel: KernelConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "scenario".to_string(),
            seed: 0,
            stop: SimTime::ZERO,
            field: Field::new(100.0, 100.0),
            nodes: NodeSpec::Random(0),
            radio: RadioParams::default(),
            pipeline: PipelineConfig::unit_disk(),
            energy: EnergyConfig::default(),
            energy_sample: None,
            routing: true,
            process: "flood".to_string(),
            protocol: ProtocolParams::default(),
            packet: PacketShape::default(),
            mobility: None,
            log: LogFilter::all(),
            partitions: 1,
            kernel: KernelConfig::default(),
        }
    }
}

/// A problem found while reading a scenario; `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

const REQUIRED: [&str; 4] = ["seed", "stop_s", "field.width_m", "field.height_m"];

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>()
        .map_err(|_| format!("'{v}' is not a valid number"))
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("'{v}' is not finite"))
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

fn parse_secs(v: &str) -> Result<SimTime, String> {
    let x = parse_f64(v)?;
    SimTime::from_secs_f64(x).ok_or_else(|| format!("'{v}' is not a valid non-negative duration"))
}

/// Exact decimal seconds.
fn secs(t: SimTime) -> String {
    let ns = t.as_nanos();
    let mut s = format!("{}.{:09}", ns / 1_000_000_000, ns % 1_000_000_000);
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

fn draw_key(state: PowerState) -> String {
    format!("energy.draw.{}_w", state.name())
}

impl Scenario {
    /// Parses and validates; any problem is reported with its line.
    pub fn parse(text: &str, registry: &Registry) -> Result<Scenario, Vec<Diagnostic>> {
        let mut s = Scenario::default();
        let mut diags = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut explicit: Vec<Position> = Vec::new();
        let mut random: Option<usize> = None;
        let mut mobility_model: Option<String> = None;
        let mut waypoint = WaypointConfig {
            min_speed: 1.0,
            max_speed: 1.0,
            pause: SimTime::ZERO,
        };
        let mut mobility_period = SimTime::from_secs(1);

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                diags.push(Diagnostic {
                    line: Some(line),
                    message: format!("expected 'key = value', got '{content}'"),
                });
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if key != "node" {
                if let Some(first) = seen.insert(key.to_string(), line) {
                    diags.push(Diagnostic {
                        line: Some(line),
                        message: format!("duplicate key '{key}' (first set on line {first})"),
                    });
                    continue;
                }
            }
            let r: Result<(), String> = (|| {
                match key {
                    "name" => s.name = value.to_string(),
                    "seed" => s.seed = parse_num(value)?,
                    "stop_s" => s.stop = parse_secs(value)?,
                    "field.width_m" => s.field.width = parse_f64(value)?,
                    "field.height_m" => s.field.height = parse_f64(value)?,
                    "nodes.random.count" => random = Some(parse_num(value)?),
                    "node" => {
                        let nums: Vec<f64> = value
                            .split_whitespace()
                            .map(parse_f64)
                            .collect::<Result<_, _>>()?;
                        let p = match nums.as_slice() {
                            [x, y] => Position::new(*x, *y, 0.0),
                            [x, y, z] => Position::new(*x, *y, *z),
                            _ => return Err("node needs 'x y' or 'x y z' in meters".to_string()),
                        };
                        explicit.push(p);
                    }
                    "propagation" => s.pipeline.closure = value.parse::<Propagation>()?,
                    "tx_power_w" => s.radio.tx_power = parse_f64(value)?,
                    "tx_gain" => s.radio.tx_gain = parse_f64(value)?,
                    "rx_gain" => s.radio.rx_gain = parse_f64(value)?,
                    "wavelength_m" => s.radio.wavelength = parse_f64(value)?,
                    "system_loss" => s.radio.system_loss = parse_f64(value)?,
                    "tx_height_m" => s.radio.tx_height = parse_f64(value)?,
                    "rx_height_m" => s.radio.rx_height = parse_f64(value)?,
                    "rx_threshold_w" => s.radio.rx_threshold = parse_f64(value)?,
                    "disk_range_m" => s.radio.disk_range = parse_f64(value)?,
                    "noise_floor_w" => s.radio.noise_floor = parse_f64(value)?,
                    "bitrate_bps" => s.radio.bitrate = parse_f64(value)?,
                    "tx_gain_enabled" => s.pipeline.tx_gain_enabled = parse_bool(value)?,
                    "rx_gain_enabled" => s.pipeline.rx_gain_enabled = parse_bool(value)?,
                    "power_enabled" => s.pipeline.power_enabled = parse_bool(value)?,
                    "bkgnoise_enabled" => s.pipeline.bkgnoise_enabled = parse_bool(value)?,
                    "snr_enabled" => s.pipeline.snr_enabled = parse_bool(value)?,
                    "ber_enabled" => s.pipeline.ber_enabled = parse_bool(value)?,
                    "error_enabled" => s.pipeline.error_enabled = parse_bool(value)?,
                    "ecc_enabled" => s.pipeline.ecc_enabled = parse_bool(value)?,
                    "ecc_capability" => s.pipeline.ecc_capability = parse_num(value)?,
                    "modulation" => s.pipeline.modulation = value.parse::<Modulation>()?,
                    "energy.model" => s.energy.model = value.parse::<ModelKind>()?,
                    "energy.capacity_j" => s.energy.capacity_j = parse_f64(value)?,
                    "energy.tx_cost_j" => s.energy.tx_cost_j = parse_f64(value)?,
                    "energy.rx_cost_j" => s.energy.rx_cost_j = parse_f64(value)?,
                    "energy.sample_period_s" => {
                        let t = parse_secs(value)?;
                        s.energy_sample = (t > SimTime::ZERO).then_some(t);
                    }
                    k if k.starts_with("energy.draw.") => {
                        let state = PowerState::ALL
                            .into_iter()
                            .find(|st| draw_key(*st) == k)
                            .ok_or_else(|| format!("unknown key '{k}'"))?;
                        s.energy.draw_w[state.index()] = parse_f64(value)?;
                    }
                    "routing" => {
                        s.routing = match value {
                            "nix" => true,
                            "none" => false,
                            _ => return Err(format!("unknown routing '{value}' (nix | none)")),
                        }
                    }
                    "process" => {
                        if registry.build(value, &ProtocolParams::default()).is_none() {
                            return Err(format!("unknown process '{value}'"));
                        }
                        s.process = value.to_string();
                    }
                    "flood.source" => s.protocol.flood_source = NodeId(parse_num(value)?),
                    "flood.start_s" => s.protocol.flood_start = parse_secs(value)?,
                    "report.source" => s.protocol.report_source = NodeId(parse_num(value)?),
                    "report.sink" => s.protocol.report_sink = NodeId(parse_num(value)?),
                    "report.start_s" => s.protocol.report_start = parse_secs(value)?,
                    "report.period_s" => s.protocol.report_period = parse_secs(value)?,
                    "report.count" => s.protocol.report_count = parse_num(value)?,
                    "packet.payload_bits" => s.packet.payload_bits = parse_num(value)?,
                    "packet.header_bits" => s.packet.header_bits = parse_num(value)?,
                    "mobility.model" => match value {
                        "none" | "random-waypoint" => mobility_model = Some(value.to_string()),
                        _ => return Err(format!("unknown mobility model '{value}'")),
                    },
                    "mobility.vmin_mps" => waypoint.min_speed = parse_f64(value)?,
                    "mobility.vmax_mps" => waypoint.max_speed = parse_f64(value)?,
                    "mobility.pause_s" => waypoint.pause = parse_secs(value)?,
                    "mobility.period_s" => mobility_period = parse_secs(value)?,
                    "log.filter" => s.log = LogFilter::parse(value)?,
                    "partitions" => s.partitions = parse_num(value)?,
                    "kernel.bucket_width_s" => s.kernel.bucket_width = parse_secs(value)?,
                    other => return Err(format!("unknown key '{other}'")),
                }
                Ok(())
            })();
            if let Err(message) = r {
                diags.push(Diagnostic {
                    line: Some(line),
                    message,
                });
            }
        }

        let at = |key: &str| seen.get(key).copied();
        for key in REQUIRED {
            if at(key).is_none() {
                diags.push(Diagnostic {
                    line: None,
                    message: format!("missing required key '{key}'"),
                });
            }
        }
        match (random, explicit.is_empty()) {
            (Some(n), true) => s.nodes = NodeSpec::Random(n),
            (None, false) => s.nodes = NodeSpec::Explicit(explicit),
            (Some(_), false) => diags.push(Diagnostic {
                line: at("nodes.random.count"),
                message: "use either nodes.random.count or node lines, not both".to_string(),
            }),
            (None, true) => diags.push(Diagnostic {
                line: None,
                message: "no nodes: set nodes.random.count or add node lines".to_string(),
            }),
        }
        if mobility_model.as_deref() == Some("random-waypoint") {
            s.mobility = Some(MobilityConfig {
                waypoint,
                period: mobility_period,
            });
        }

        diags.extend(s.check().into_iter().map(|(key, message)| Diagnostic {
            line: key.and_then(at),
            message,
        }));
        if diags.is_empty() {
            Ok(s)
        } else {
            diags.sort_by_key(|d| d.line.unwrap_or(usize::MAX));
            Err(diags)
        }
    }

    /// Cross-field checks, each tagged with the key it is reported against.
    fn check(&self) -> Vec<(Option<&'static str>, String)> {
        let mut out = Vec::new();
        if !(self.field.width > 0.0 && self.field.height > 0.0) {
            out.push((
                Some("field.width_m"),
                "field dimensions must be > 0 m".to_string(),
            ));
        }
        for e in self.radio.validate() {
            out.push((None, e));
        }
        for e in self.pipeline.validate() {
            let key = if e.starts_with("ber") {
                "ber_enabled"
            } else if e.starts_with("error") {
                "error_enabled"
            } else {
                "ecc_enabled"
            };
            out.push((Some(key), format!("pipeline: {e}")));
        }
        for e in self.energy.validate() {
            out.push((Some("energy.model"), e));
        }
        let n = self.nodes.count();
        if let NodeSpec::Explicit(ps) = &self.nodes {
            for p in ps {
                if !p.is_valid() || !self.field.contains(p) {
                    out.push((
                        Some("node"),
                        format!("node at ({}, {}) lies outside the field", p.x, p.y),
                    ));
                }
            }
        }
        if n > u32::MAX as usize {
            out.push((Some("nodes.random.count"), "too many nodes".to_string()));
        }
        let check_node = |key: &'static str, id: NodeId, out: &mut Vec<_>| {
            if id.index() >= n {
                out.push((Some(key), format!("{key} {id} does not exist ({n} nodes)")));
            }
        };
        match self.process.as_str() {
            "flood" => check_node("flood.source", self.protocol.flood_source, &mut out),
            "report" => {
                check_node("report.source", self.protocol.report_source, &mut out);
                check_node("report.sink", self.protocol.report_sink, &mut out);
                if !self.routing {
                    out.push((
                        Some("routing"),
                        "process 'report' needs routing = nix".to_string(),
                    ));
                }
            }
            _ => {}
        }
        if self.packet.payload_bits + self.packet.header_bits == 0 {
            out.push((
                Some("packet.payload_bits"),
                "packets must carry at least one bit".to_string(),
            ));
        }
        if let Some(m) = &self.mobility {
            if let Err(e) = m.waypoint.validate() {
                out.push((Some("mobility.model"), e));
            }
            if m.period == SimTime::ZERO {
                out.push((
                    Some("mobility.period_s"),
                    "mobility period must be > 0 s".to_string(),
                ));
            }
            if self.partitions > 1 {
                out.push((
                    Some("partitions"),
                    "mobility requires partitions = 1".to_string(),
                ));
            }
        }
        if self.partitions == 0 || (n > 0 && self.partitions > n) {
            out.push((
                Some("partitions"),
                format!("partitions must be between 1 and the node count ({n})"),
            ));
        }
        if self.kernel.bucket_width == SimTime::ZERO {
            out.push((
                Some("kernel.bucket_width_s"),
                "bucket width must be > 0 s".to_string(),
            ));
        }
        out
    }

    /// Re-validates after programmatic edits (e.g. command-line overrides).
    pub fn validate(&self) -> Result<(), Vec<Diagnostic>> {
        let d: Vec<Diagnostic> = self
            .check()
            .into_iter()
            .map(|(_, message)| Diagnostic {
                line: None,
                message,
            })
            .collect();
        if d.is_empty() {
            Ok(())
        } else {
            Err(d)
        }
    }

    /// Canonical text form; parsing it yields an equal scenario.
    pub fn serialize(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(o, "{k} = {v}");
        };
        kv("name", &self.name);
        kv("seed", &self.seed);
        kv("stop_s", &secs(self.stop));
        kv("field.width_m", &self.field.width);
        kv("field.height_m", &self.field.height);
        match &self.nodes {
            NodeSpec::Random(n) => kv("nodes.random.count", n),
            NodeSpec::Explicit(ps) => {
                for p in ps {
                    kv("node", &format_args!("{} {} {}", p.x, p.y, p.z));
                }
            }
        }
        let r = &self.radio;
        kv("propagation", &self.pipeline.closure);
        kv("tx_power_w", &r.tx_power);
        kv("tx_gain", &r.tx_gain);
        kv("rx_gain", &r.rx_gain);
        kv("wavelength_m", &r.wavelength);
        kv("system_loss", &r.system_loss);
        kv("tx_height_m", &r.tx_height);
        kv("rx_height_m", &r.rx_height);
        kv("rx_threshold_w", &r.rx_threshold);
        kv("disk_range_m", &r.disk_range);
        kv("noise_floor_w", &r.noise_floor);
        kv("bitrate_bps", &r.bitrate);
        let p = &self.pipeline;
        kv("tx_gain_enabled", &p.tx_gain_enabled);
        kv("rx_gain_enabled", &p.rx_gain_enabled);
        kv("power_enabled", &p.power_enabled);
        kv("bkgnoise_enabled", &p.bkgnoise_enabled);
        kv("snr_enabled", &p.snr_enabled);
        kv("ber_enabled", &p.ber_enabled);
        kv("error_enabled", &p.error_enabled);
        kv("ecc_enabled", &p.ecc_enabled);
        kv("ecc_capability", &p.ecc_capability);
        kv("modulation", &p.modulation);
        let e = &self.energy;
        kv("energy.model", &e.model);
        kv("energy.capacity_j", &e.capacity_j);
        kv("energy.tx_cost_j", &e.tx_cost_j);
        kv("energy.rx_cost_j", &e.rx_cost_j);
        for st in PowerState::ALL {
            kv(&draw_key(st), &e.draw(st));
        }
        kv(
            "energy.sample_period_s",
            &secs(self.energy_sample.unwrap_or(SimTime::ZERO)),
        );
        kv("routing", &if self.routing { "nix" } else { "none" });
        kv("process", &self.process);
        let pr = &self.protocol;
        kv("flood.source", &pr.flood_source);
        kv("flood.start_s", &secs(pr.flood_start));
        kv("report.source", &pr.report_source);
        kv("report.sink", &pr.report_sink);
        kv("report.start_s", &secs(pr.report_start));
        kv("report.period_s", &secs(pr.report_period));
        kv("report.count", &pr.report_count);
        kv("packet.payload_bits", &self.packet.payload_bits);
        kv("packet.header_bits", &self.packet.header_bits);
        match &self.mobility {
            None => kv("mobility.model", &"none"),
            Some(m) => {
                kv("mobility.model", &"random-waypoint");
                kv("mobility.vmin_mps", &m.waypoint.min_speed);
                kv("mobility.vmax_mps", &m.waypoint.max_speed);
                kv("mobility.pause_s", &secs(m.waypoint.pause));
                kv("mobility.period_s", &secs(m.period));
            }
        }
        kv("log.filter", &self.log.to_spec());
        kv("partitions", &self.partitions);
        kv("kernel.bucket_width_s", &secs(self.kernel.bucket_width));
        o
    }
}
