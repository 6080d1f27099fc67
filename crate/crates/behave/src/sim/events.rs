use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Simulator events. Variant order is the processing priority among events
/// sharing a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Event {
    Expiry { holding: u64 },
    Arrival { device: usize },
    Detection { day: u32 },
    Epoch { index: usize },
}

impl Event {
    pub fn rank(&self) -> u8 {
        match self {
            Event::Expiry { .. } => 0,
            Event::Arrival { .. } => 1,
            Event::Detection { .. } => 2,
            Event::Epoch { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    time: f64,
    rank: u8,
    seq: u64,
    event: Event,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    /// Reversed so the max-heap pops the earliest entry first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.rank.cmp(&self.rank))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Time-ordered queue: earliest time first, then type priority, then
/// insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    seq: u64,
    now: f64,
}

impl EventQueue {
    pub fn new(start: f64) -> Self {
        Self { heap: BinaryHeap::new(), seq: 0, now: start }
    }

    /// Schedules `event`; times before the current clock are clamped to it.
    pub fn push(&mut self, time: f64, event: Event) {
        let time = if time < self.now { self.now } else { time };
        self.heap.push(Entry { time, rank: event.rank(), seq: self.seq, event });
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(f64, Event)> {
        let e = self.heap.pop()?;
        debug_assert!(e.time >= self.now);
        self.now = e.time;
        Some((e.time, e.event))
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
