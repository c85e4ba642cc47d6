//! Discrete-event engine.
//!
//! Events are dispatched in `(time, id)` order. Handlers receive the kernel
//! mutably together with the owned event, so they can schedule and cancel
//! follow-up work while the clock sits at the event's timestamp.

mod event;
mod pending;
mod time;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::error::Error as StdError;
use std::time::{Duration, Instant};

pub use event::{Event, EventHandle, EventId, EventKind, Target, KERNEL_ORIGIN};
pub use time::SimTime;

use crate::topology::NodeId;
use pending::PendingSet;

pub type BoxError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("cannot schedule at {at}: clock is already at {now}")]
    PastTime { at: SimTime, now: SimTime },
    #[error("simulation time overflow")]
    TimeOverflow,
    #[error("event sequence exhausted for origin {0}")]
    SequenceExhausted(u32),
    #[error("handler for event {event} failed: {source}")]
    HandlerFault {
        event: EventId,
        #[source]
        source: BoxError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelConfig {
    /// Width of one timer bucket.
    pub bucket_width: SimTime,
    /// Number of buckets on the wheel; events further out wait in overflow.
    pub wheel_slots: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bucket_width: SimTime::from_millis(1),
            wheel_slots: 1024,
        }
    }
}

/// Statistics of one `run_until` call.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub dispatched: u64,
    pub wall: Duration,
    /// Largest number of live pending events seen since the kernel was created.
    pub peak_pending: usize,
}

pub struct Kernel<P> {
    now: SimTime,
    pending: PendingSet<P>,
    cancelled: HashSet<EventId>,
    purged: BinaryHeap<Reverse<(SimTime, EventId)>>,
    live: usize,
    peak_live: usize,
    peak_ordered: usize,
    last_removed: Option<(SimTime, EventId)>,
    node_seq: Vec<u32>,
    kernel_seq: u32,
    /// Origin and zero-delay depth of new events while a handler runs.
    context: Option<(u32, u32)>,
    dispatched: u64,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new(KernelConfig::default())
    }
}

impl<P> Kernel<P> {
    pub fn new(config: KernelConfig) -> Self {
        Kernel {
            now: SimTime::ZERO,
            pending: PendingSet::new(config.bucket_width, config.wheel_slots),
            cancelled: HashSet::new(),
            purged: BinaryHeap::new(),
            live: 0,
            peak_live: 0,
            peak_ordered: 0,
            last_removed: None,
            node_seq: Vec::new(),
            kernel_seq: 0,
            context: None,
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Live (scheduled, not yet dispatched or cancelled) events.
    pub fn pending(&self) -> usize {
        self.live
    }

    pub fn peak_pending(&self) -> usize {
        self.peak_live
    }

    /// Peak size of the ordered event list, excluding packets parked behind
    /// their receive-queue head.
    pub fn peak_event_list(&self) -> usize {
        self.peak_ordered
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Schedules on behalf of whatever is currently executing: the target of
    /// the event being dispatched, or the kernel itself outside dispatch.
    pub fn schedule(
        &mut self,
        at: SimTime,
        target: Target,
        kind: EventKind,
        payload: P,
    ) -> Result<EventHandle, KernelError> {
        let id = self.allocate_id()?;
        self.insert(Event {
            id,
            time: at,
            target,
            kind,
            payload,
        })
    }

    /// Schedules with an explicit creating node. Used for setup work so that
    /// initial events carry the same ids however the node set is split.
    pub fn schedule_from(
        &mut self,
        origin: NodeId,
        at: SimTime,
        target: Target,
        kind: EventKind,
        payload: P,
    ) -> Result<EventHandle, KernelError> {
        let id = self.allocate_id_from(origin)?;
        self.insert(Event {
            id,
            time: at,
            target,
            kind,
            payload,
        })
    }

    /// Reserves an id for an event that will be inserted elsewhere (another
    /// partition's kernel).
    pub fn allocate_id(&mut self) -> Result<EventId, KernelError> {
        let (origin, depth) = self.context.unwrap_or((KERNEL_ORIGIN, 0));
        self.allocate_from(origin, depth)
    }

    /// [`Kernel::allocate_id`] with an explicit creating node.
    pub fn allocate_id_from(&mut self, origin: NodeId) -> Result<EventId, KernelError> {
        let depth = self.context.map_or(0, |c| c.1);
        self.allocate_from(origin.0, depth)
    }

    fn allocate_from(&mut self, origin: u32, depth: u32) -> Result<EventId, KernelError> {
        let counter = if origin == KERNEL_ORIGIN {
            &mut self.kernel_seq
        } else {
            let idx = origin as usize;
            if self.node_seq.len() <= idx {
                self.node_seq.resize(idx + 1, 0);
            }
            &mut self.node_seq[idx]
        };
        let seq = *counter;
        *counter = seq
            .checked_add(1)
            .ok_or(KernelError::SequenceExhausted(origin))?;
        Ok(EventId {
            created: self.now,
            depth,
            origin,
            seq,
        })
    }

    /// Inserts an event whose id was assigned already.
    pub fn insert(&mut self, event: Event<P>) -> Result<EventHandle, KernelError> {
        if event.time < self.now {
            return Err(KernelError::PastTime {
                at: event.time,
                now: self.now,
            });
        }
        if let Some(last) = self.last_removed {
            // same timestamp but ordered before something already consumed
            if event.key() <= last {
                return Err(KernelError::PastTime {
                    at: event.time,
                    now: self.now,
                });
            }
        }
        let handle = EventHandle {
            id: event.id,
            time: event.time,
        };
        self.pending.push(event);
        self.live += 1;
        self.peak_live = self.peak_live.max(self.live);
        self.peak_ordered = self.peak_ordered.max(self.pending.ordered_len());
        Ok(handle)
    }

    /// Returns true iff the event was pending and is now removed.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if let Some(last) = self.last_removed {
            if (handle.time, handle.id) <= last {
                return false;
            }
        }
        if handle.time < self.now || !self.cancelled.insert(handle.id) {
            return false;
        }
        self.live -= 1;
        true
    }

    /// Time of the next live event, if any.
    pub fn next_event_time(&mut self) -> Option<SimTime> {
        loop {
            let (time, id) = self.pending.peek_key()?;
            if !self.cancelled.contains(&id) {
                return Some(time);
            }
            // Dropped early, possibly past `now`: the id stays in
            // `cancelled` so a repeated cancel still reports false, until
            // dispatch moves beyond it.
            self.pending.pop();
            self.purged.push(Reverse((time, id)));
        }
    }

    /// Dispatches every event with `time <= stop`, then leaves the clock at
    /// `stop`.
    pub fn run_until<F, E>(
        &mut self,
        stop: SimTime,
        mut handler: F,
    ) -> Result<RunStats, KernelError>
    where
        F: FnMut(&mut Kernel<P>, Event<P>) -> Result<(), E>,
        E: Into<BoxError>,
    {
        if stop < self.now {
            return Err(KernelError::PastTime {
                at: stop,
                now: self.now,
            });
        }
        let started = Instant::now();
        let mut dispatched = 0;
        while let Some(key) = self.pending.peek_key() {
            if key.0 > stop {
                break;
            }
            let event = self.pending.pop().expect("peeked");
            self.last_removed = Some(key);
            while let Some(&Reverse(old)) = self.purged.peek() {
                if old > key {
                    break;
                }
                self.purged.pop();
                self.cancelled.remove(&old.1);
            }
            if self.cancelled.remove(&event.id) {
                continue;
            }
            self.live -= 1;
            self.now = event.time;
            let depth = if event.id.created == event.time {
                event.id.depth + 1
            } else {
                0
            };
            self.context = Some((event.target.origin(), depth));
            let id = event.id;
            let result = handler(self, event);
            self.context = None;
            self.dispatched += 1;
            dispatched += 1;
            if let Err(e) = result {
                return Err(KernelError::HandlerFault {
                    event: id,
                    source: e.into(),
                });
            }
        }
        self.now = stop;
        Ok(RunStats {
            dispatched,
            wall: started.elapsed(),
            peak_pending: self.peak_live,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn secs(s: u64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn order(kernel: &mut Kernel<u32>, stop: SimTime) -> Vec<u32> {
        let mut seen = Vec::new();
        kernel
            .run_until(stop, |_, ev| {
                seen.push(ev.payload);
                Ok::<_, Infallible>(())
            })
            .unwrap();
        seen
    }

    #[test]
    fn peeking_past_cancelled_event_keeps_earlier_inserts_legal() {
        let mut k: Kernel<u32> = Kernel::default();
        let h = k
            .schedule(secs(10), Target::Node(NodeId(0)), EventKind::User(0), 1)
            .unwrap();
        assert!(k.cancel(h));
        assert_eq!(k.next_event_time(), None);
        assert!(!k.cancel(h));
        k.schedule(secs(5), Target::Node(NodeId(0)), EventKind::User(0), 2)
            .unwrap();
        assert_eq!(order(&mut k, secs(20)), vec![2]);
        assert!(!k.cancel(h));
        assert_eq!(k.pending(), 0);
    }

    #[test]
    fn zero_delay_from_node_after_kernel_event() {
        // node ids sort below the kernel origin, so without the depth field
        // this follow-up would land behind the event that created it
        let mut k: Kernel<u32> = Kernel::default();
        k.schedule(secs(0), Target::Node(NodeId(3)), EventKind::User(0), 0)
            .unwrap();
        let mut seen = Vec::new();
        k.run_until(secs(1), |k, ev| {
            seen.push(ev.payload);
            if ev.payload < 3 {
                k.schedule(
                    ev.time,
                    Target::Node(NodeId(1)),
                    EventKind::User(0),
                    ev.payload + 1,
                )?;
            }
            Ok::<_, KernelError>(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn timestamp_then_id_order() {
        let mut k = Kernel::default();
        k.schedule(secs(5), Target::Kernel, EventKind::User(0), 1)
            .unwrap();
        k.schedule(secs(3), Target::Kernel, EventKind::User(0), 2)
            .unwrap();
        k.schedule(secs(5), Target::Kernel, EventKind::User(0), 3)
            .unwrap();
        assert_eq!(order(&mut k, secs(10)), vec![2, 1, 3]);
    }

    #[test]
    fn past_time_rejected() {
        let mut k: Kernel<u32> = Kernel::default();
        order(&mut k, secs(1));
        let err = k
            .schedule(
                secs(1).checked_sub(SimTime::from_nanos(1)).unwrap(),
                Target::Kernel,
                EventKind::User(0),
                0,
            )
            .unwrap_err();
        assert!(matches!(err, KernelError::PastTime { .. }));
        assert!(k
            .run_until(SimTime::ZERO, |_, _| Ok::<_, Infallible>(()))
            .is_err());
    }

    #[test]
    fn cancel_semantics() {
        let mut k = Kernel::default();
        let a = k
            .schedule(secs(1), Target::Kernel, EventKind::User(0), 1)
            .unwrap();
        let b = k
            .schedule(secs(2), Target::Kernel, EventKind::User(0), 2)
            .unwrap();
        assert!(k.cancel(a));
        assert!(!k.cancel(a));
        assert_eq!(order(&mut k, secs(3)), vec![2]);
        assert!(!k.cancel(b));
        assert_eq!(k.pending(), 0);
    }

    #[test]
    fn run_until_leaves_later_events_pending() {
        let mut k = Kernel::default();
        for (i, s) in [1, 2, 3].into_iter().enumerate() {
            k.schedule(secs(s), Target::Kernel, EventKind::User(0), i as u32)
                .unwrap();
        }
        assert_eq!(order(&mut k, secs(2)), vec![0, 1]);
        assert_eq!(k.pending(), 1);
        assert_eq!(k.now(), secs(2));
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut k: Kernel<u32> = Kernel::default();
        assert_eq!(k.now(), SimTime::ZERO);
        let stats = k
            .run_until(secs(10), |_, _| Ok::<_, Infallible>(()))
            .unwrap();
        assert_eq!(stats.dispatched, 0);
        assert_eq!(k.now(), secs(10));
    }

    #[test]
    fn same_time_follow_up_runs_after_scheduler() {
        let mut k = Kernel::default();
        k.schedule(secs(1), Target::Node(NodeId(3)), EventKind::User(0), 0)
            .unwrap();
        k.schedule(secs(1), Target::Node(NodeId(3)), EventKind::User(0), 1)
            .unwrap();
        let mut seen = Vec::new();
        k.run_until(secs(1), |k, ev| {
            assert_eq!(k.now(), secs(1));
            seen.push(ev.payload);
            if ev.payload == 0 {
                k.schedule(k.now(), ev.target, EventKind::User(0), 2)?;
            }
            Ok::<_, KernelError>(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn handler_fault_carries_event_id() {
        let mut k = Kernel::default();
        let h = k
            .schedule(secs(1), Target::Kernel, EventKind::User(0), 0u32)
            .unwrap();
        let err = k
            .run_until(secs(2), |_, _| Err::<(), _>("boom"))
            .unwrap_err();
        match err {
            KernelError::HandlerFault { event, .. } => assert_eq!(event, h.id()),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn far_future_events_cross_the_wheel_horizon() {
        let mut k = Kernel::new(KernelConfig {
            bucket_width: SimTime::from_millis(1),
            wheel_slots: 8,
        });
        for (i, ms) in [500u64, 3, 9, 7, 1_000_000, 8].into_iter().enumerate() {
            k.schedule(
                SimTime::from_millis(ms),
                Target::Kernel,
                EventKind::User(0),
                i as u32,
            )
            .unwrap();
        }
        assert_eq!(order(&mut k, SimTime::MAX), vec![1, 3, 5, 2, 0, 4]);
    }
}
