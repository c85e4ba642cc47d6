//! Pending-event storage: a bucketed time wheel for the near future, a heap
//! for everything beyond the wheel horizon, and one FIFO receive queue per
//! node for packet arrivals. Only the head of each receive queue occupies a
//! slot in the wheel, which keeps the ordered structure small when many
//! packets are in flight.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use super::event::{Event, EventId, EventKind, Target};
use super::SimTime;

type Key = (SimTime, EventId);

enum Slot<P> {
    Owned(Event<P>),
    QueueHead(u32),
}

struct Entry<P> {
    key: Key,
    slot: Slot<P>,
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<P> Eq for Entry<P> {}
impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

pub(crate) struct PendingSet<P> {
    bucket_ns: u64,
    cursor: u64,
    current: BinaryHeap<Reverse<Entry<P>>>,
    slots: Vec<Vec<Entry<P>>>,
    in_slots: usize,
    overflow: BinaryHeap<Reverse<Entry<P>>>,
    fifos: Vec<VecDeque<Event<P>>>,
}

impl<P> PendingSet<P> {
    pub(crate) fn new(bucket: SimTime, slots: usize) -> Self {
        assert!(bucket.as_nanos() > 0, "bucket width must be positive");
        assert!(slots > 1, "wheel needs at least two slots");
        PendingSet {
            bucket_ns: bucket.as_nanos(),
            cursor: 0,
            current: BinaryHeap::new(),
            slots: (0..slots).map(|_| Vec::new()).collect(),
            in_slots: 0,
            overflow: BinaryHeap::new(),
            fifos: Vec::new(),
        }
    }

    /// Number of entries held by the ordered structures (wheel + overflow).
    pub(crate) fn ordered_len(&self) -> usize {
        self.current.len() + self.in_slots + self.overflow.len()
    }

    pub(crate) fn push(&mut self, event: Event<P>) {
        match (event.kind, event.target) {
            (EventKind::PacketArrival, Target::Node(n)) => self.push_fifo(n.0, event),
            _ => {
                let key = event.key();
                self.place(Entry {
                    key,
                    slot: Slot::Owned(event),
                })
            }
        }
    }

    fn push_fifo(&mut self, node: u32, event: Event<P>) {
        let idx = node as usize;
        if self.fifos.len() <= idx {
            self.fifos.resize_with(idx + 1, VecDeque::new);
        }
        let key = event.key();
        let fifo = &mut self.fifos[idx];
        match fifo.back() {
            None => {
                fifo.push_back(event);
            }
            Some(back) if back.key() < key => {
                // common case: arrivals come in timestamp order
                fifo.push_back(event);
                return;
            }
            Some(_) => {
                let pos = fifo.partition_point(|e| e.key() < key);
                fifo.insert(pos, event);
                if pos != 0 {
                    return;
                }
            }
        }
        // new head; any older head entry becomes stale
        self.place(Entry {
            key,
            slot: Slot::QueueHead(node),
        });
    }

    fn place(&mut self, entry: Entry<P>) {
        let bucket = entry.key.0.as_nanos() / self.bucket_ns;
        if bucket <= self.cursor {
            self.current.push(Reverse(entry));
        } else if bucket - self.cursor < self.slots.len() as u64 {
            let n = self.slots.len() as u64;
            self.slots[(bucket % n) as usize].push(entry);
            self.in_slots += 1;
        } else {
            self.overflow.push(Reverse(entry));
        }
    }

    fn migrate_overflow(&mut self) {
        let horizon = self.cursor + self.slots.len() as u64;
        while let Some(Reverse(top)) = self.overflow.peek() {
            if top.key.0.as_nanos() / self.bucket_ns >= horizon {
                break;
            }
            let Reverse(entry) = self.overflow.pop().expect("peeked");
            self.place(entry);
        }
    }

    /// Moves the cursor forward until the current bucket holds something.
    fn fill_current(&mut self) -> bool {
        while self.current.is_empty() {
            if self.in_slots == 0 {
                let Some(Reverse(top)) = self.overflow.peek() else {
                    return false;
                };
                self.cursor = top.key.0.as_nanos() / self.bucket_ns;
            } else {
                self.cursor += 1;
                let n = self.slots.len() as u64;
                let slot = std::mem::take(&mut self.slots[(self.cursor % n) as usize]);
                self.in_slots -= slot.len();
                self.current.extend(slot.into_iter().map(Reverse));
            }
            self.migrate_overflow();
        }
        true
    }

    /// Key of the earliest pending event, discarding stale queue heads.
    pub(crate) fn peek_key(&mut self) -> Option<Key> {
        loop {
            if !self.fill_current() {
                return None;
            }
            let Reverse(top) = self.current.peek().expect("filled");
            if let Slot::QueueHead(node) = top.slot {
                let front = self.fifos[node as usize].front().map(Event::key);
                if front != Some(top.key) {
                    self.current.pop();
                    continue;
                }
            }
            return Some(top.key);
        }
    }

    pub(crate) fn pop(&mut self) -> Option<Event<P>> {
        self.peek_key()?;
        let Reverse(entry) = self.current.pop().expect("peeked");
        match entry.slot {
            Slot::Owned(event) => Some(event),
            Slot::QueueHead(node) => {
                let fifo = &mut self.fifos[node as usize];
                let event = fifo.pop_front().expect("validated head");
                if let Some(next) = fifo.front() {
                    let key = next.key();
                    self.place(Entry {
                        key,
                        slot: Slot::QueueHead(node),
                    });
                }
                Some(event)
            }
        }
    }
}
