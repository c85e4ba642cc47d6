use std::fmt::Write as _;
use std::ops::RangeInclusive;

use crate::kernel::{EventKind, SimTime};
use crate::topology::NodeId;

const USER_BIT: u8 = 1 << 5;
const ALL_KINDS: u8 = 0b11_1111;

fn kind_bit(kind: EventKind) -> u8 {
    match kind {
        EventKind::PacketArrival => 1,
        EventKind::TimerExpiry => 1 << 1,
        EventKind::InterruptDelivery => 1 << 2,
        EventKind::MobilityUpdate => 1 << 3,
        EventKind::EnergySample => 1 << 4,
        EventKind::User(_) => USER_BIT,
    }
}

/// Which dispatched events reach the trace: kind, node range and time window
/// must all match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogFilter {
    kinds: u8,
    /// `None` admits every node, including kernel-targeted events.
    nodes: Option<Vec<RangeInclusive<u32>>>,
    window: (SimTime, SimTime),
}

impl Default for LogFilter {
    fn default() -> Self {
        Self::all()
    }
}

impl LogFilter {
    pub fn all() -> Self {
        LogFilter {
            kinds: ALL_KINDS,
            nodes: None,
            window: (SimTime::ZERO, SimTime::MAX),
        }
    }

    pub fn none() -> Self {
        LogFilter {
            kinds: 0,
            ..Self::all()
        }
    }

    pub fn with_kinds(mut self, kinds: &[EventKind]) -> Self {
        self.kinds = kinds.iter().fold(0, |acc, &k| acc | kind_bit(k));
        self
    }

    pub fn with_nodes(mut self, ranges: Vec<RangeInclusive<u32>>) -> Self {
        self.nodes = Some(ranges);
        self
    }

    pub fn with_window(mut self, start: SimTime, stop: SimTime) -> Self {
        self.window = (start, stop);
        self
    }

    pub fn matches(&self, time: SimTime, kind: EventKind, node: Option<NodeId>) -> bool {
        if self.kinds & kind_bit(kind) == 0 {
            return false;
        }
        if time < self.window.0 || time > self.window.1 {
            return false;
        }
        match (&self.nodes, node) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(ranges), Some(n)) => ranges.iter().any(|r| r.contains(&n.0)),
        }
    }

    /// Parses `all`, `none`, or comma-separated fields
    /// `kinds=a+b`, `nodes=0-9+12`, `window=START:STOP` (seconds).
    pub fn parse(spec: &str) -> Result<Self, String> {
        let spec = spec.trim();
        match spec {
            "all" | "" => return Ok(Self::all()),
            "none" => return Ok(Self::none()),
            _ => {}
        }
        let mut filter = Self::all();
        for field in spec.split(',') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| format!("log filter field '{field}' is not key=value"))?;
            match key.trim() {
                "kinds" => {
                    filter.kinds = 0;
                    for name in value.split('+').map(str::trim).filter(|s| !s.is_empty()) {
                        let kind = EventKind::parse(name)
                            .ok_or_else(|| format!("unknown event kind '{name}'"))?;
                        filter.kinds |= kind_bit(kind);
                    }
                }
                "nodes" => {
                    let mut ranges = Vec::new();
                    for part in value.split('+').map(str::trim).filter(|s| !s.is_empty()) {
                        let parse = |s: &str| {
                            s.trim()
                                .parse::<u32>()
                                .map_err(|_| format!("bad node id '{s}' in log filter"))
                        };
                        let range = match part.split_once('-') {
                            Some((a, b)) => parse(a)?..=parse(b)?,
                            None => {
                                let n = parse(part)?;
                                n..=n
                            }
                        };
                        ranges.push(range);
                    }
                    filter.nodes = Some(ranges);
                }
                "window" => {
                    let (a, b) = value
                        .split_once(':')
                        .ok_or_else(|| "window must be START:STOP in seconds".to_string())?;
                    let secs = |s: &str| {
                        s.trim()
                            .parse::<f64>()
                            .ok()
                            .and_then(SimTime::from_secs_f64)
                            .ok_or_else(|| format!("bad window bound '{s}'"))
                    };
                    let (start, stop) = (secs(a)?, secs(b)?);
                    if stop < start {
                        return Err("window stop precedes start".to_string());
                    }
                    filter.window = (start, stop);
                }
                other => return Err(format!("unknown log filter field '{other}'")),
            }
        }
        Ok(filter)
    }

    /// Inverse of [`LogFilter::parse`].
    pub fn to_spec(&self) -> String {
        if *self == Self::all() {
            return "all".to_string();
        }
        if self.kinds == 0 && self.nodes.is_none() && self.window == Self::all().window {
            return "none".to_string();
        }
        let mut fields = Vec::new();
        if self.kinds != ALL_KINDS {
            let mut names: Vec<&str> = EventKind::NAMED
                .iter()
                .filter(|k| self.kinds & kind_bit(**k) != 0)
                .map(|k| k.name())
                .collect();
            if self.kinds & USER_BIT != 0 {
                names.push("user");
            }
            fields.push(format!("kinds={}", names.join("+")));
        }
        if let Some(ranges) = &self.nodes {
            let mut s = String::from("nodes=");
            for (i, r) in ranges.iter().enumerate() {
                if i > 0 {
                    s.push('+');
                }
                if r.start() == r.end() {
                    let _ = write!(s, "{}", r.start());
                } else {
                    let _ = write!(s, "{}-{}", r.start(), r.end());
                }
            }
            fields.push(s);
        }
        if self.window != Self::all().window {
            fields.push(format!(
                "window={}:{}",
                self.window.0.as_secs_f64(),
                self.window.1.as_secs_f64()
            ));
        }
        fields.join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_node_and_window_checks() {
        let f = LogFilter::all().with_kinds(&[EventKind::PacketArrival]);
        assert!(!f.matches(SimTime::ZERO, EventKind::TimerExpiry, Some(NodeId(0))));
        assert!(f.matches(SimTime::ZERO, EventKind::PacketArrival, Some(NodeId(0))));
        let f = LogFilter::all().with_window(SimTime::ZERO, SimTime::from_secs(10));
        assert!(!f.matches(SimTime::from_secs(11), EventKind::TimerExpiry, None));
        assert!(f.matches(SimTime::from_secs(10), EventKind::TimerExpiry, None));
        assert!(!LogFilter::none().matches(SimTime::ZERO, EventKind::User(3), None));
    }

    #[test]
    fn parse_round_trip() {
        for spec in [
            "all",
            "none",
            "kinds=packet-arrival+user",
            "nodes=0-9+12",
            "kinds=timer-expiry,nodes=3,window=0.5:10",
        ] {
            let f = LogFilter::parse(spec).unwrap();
            assert_eq!(LogFilter::parse(&f.to_spec()).unwrap(), f, "{spec}");
        }
        let f = LogFilter::parse("nodes=5-7").unwrap();
        assert!(f.matches(SimTime::ZERO, EventKind::User(1), Some(NodeId(6))));
        assert!(!f.matches(SimTime::ZERO, EventKind::User(1), Some(NodeId(8))));
        assert!(LogFilter::parse("kinds=warp").is_err());
        assert!(LogFilter::parse("window=3:1").is_err());
    }
}
