use std::fmt;

use super::SimTime;
use crate::topology::NodeId;

/// Origin value reserved for events created outside any node context.
pub const KERNEL_ORIGIN: u32 = u32::MAX;

/// Identity and tie-break key of an event.
///
/// Ordered by creation time, then zero-delay depth, then creating origin,
/// then the origin's private sequence counter. For a single origin this is
/// plain creation order. Because the key depends only on who created the
/// event and when, a partitioned run assigns the same ids as a monolithic
/// one.
///
/// `depth` counts how many zero-delay hops separate the event from the
/// first event created at its timestamp. It keeps an event scheduled for
/// `now` ordered after the event whose handler created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId {
    pub created: SimTime,
    pub depth: u32,
    pub origin: u32,
    pub seq: u32,
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.created.as_nanos(),
            self.depth,
            self.origin,
            self.seq
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Node(NodeId),
    Kernel,
}

impl Target {
    pub(crate) fn origin(self) -> u32 {
        match self {
            Target::Node(n) => n.0,
            Target::Kernel => KERNEL_ORIGIN,
        }
    }

    pub fn node(self) -> Option<NodeId> {
        match self {
            Target::Node(n) => Some(n),
            Target::Kernel => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    PacketArrival,
    TimerExpiry,
    InterruptDelivery,
    MobilityUpdate,
    EnergySample,
    User(u16),
}

impl EventKind {
    pub const NAMED: [EventKind; 5] = [
        EventKind::PacketArrival,
        EventKind::TimerExpiry,
        EventKind::InterruptDelivery,
        EventKind::MobilityUpdate,
        EventKind::EnergySample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::PacketArrival => "packet-arrival",
            EventKind::TimerExpiry => "timer-expiry",
            EventKind::InterruptDelivery => "interrupt-delivery",
            EventKind::MobilityUpdate => "mobility-update",
            EventKind::EnergySample => "energy-sample",
            EventKind::User(_) => "user",
        }
    }

    /// Parses a kind name. `user` matches every user-defined code.
    pub fn parse(s: &str) -> Option<EventKind> {
        if s == "user" {
            return Some(EventKind::User(0));
        }
        EventKind::NAMED.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A unit of scheduled work. The payload is owned by the event and moved
/// into the handler at dispatch.
#[derive(Debug, Clone)]
pub struct Event<P> {
    pub id: EventId,
    pub time: SimTime,
    pub target: Target,
    pub kind: EventKind,
    pub payload: P,
}

impl<P> Event<P> {
    pub(crate) fn key(&self) -> (SimTime, EventId) {
        (self.time, self.id)
    }
}

/// Refers to a pending event; returned by scheduling and used to cancel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle {
    pub(crate) id: EventId,
    pub(crate) time: SimTime,
}

impl EventHandle {
    pub fn id(&self) -> EventId {
        self.id
    }

    pub fn time(&self) -> SimTime {
        self.time
    }
}
