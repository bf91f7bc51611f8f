//! Event queue, messages, and the trace record.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::capsule::Direction;
use crate::tx::SouthNotification;

use super::topology::{ColumnIndex, SlotAddress};

/// A message in flight between slots. The extended ID text is the whole
/// wire artifact: relays forward it untouched, and only endpoints ever
/// open the part after `#`.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub direction: Direction,
    /// The core column this message's path belongs to, whichever way it
    /// is going.
    pub column: ColumnIndex,
    pub xid: String,
    pub body: MessageBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    MainCall {
        call_id: u64,
        payload: String,
    },
    MainResult {
        call_id: u64,
        value: String,
    },
    /// Pathway traffic with no main-protocol role; the capsule on the
    /// extended ID is the entire content.
    Nsvtp,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) enum EventKind {
    /// A core opens (or re-opens) a pathway through the broker.
    Establish {
        column: ColumnIndex,
    },
    /// The application starts duty cycle `k` against a core column.
    BeginCycle {
        column: ColumnIndex,
        k: u64,
    },
    /// The application emits a frequency tweak so it lands at `Deliver`
    /// time; `target` is resolved when the event fires.
    SendTweak {
        column: ColumnIndex,
        up: bool,
    },
    /// A message reaches a slot.
    Deliver {
        slot: SlotAddress,
        message: Message,
    },
    /// A core finishes the compute window of one main call.
    ComputeDone {
        column: ColumnIndex,
        call_id: u64,
        payload: String,
    },
    /// A core finishes a frequency transition. Stale generations are
    /// ignored.
    FreqChangeDone {
        column: ColumnIndex,
        generation: u64,
        target: f64,
    },
    /// The broker's claim notification arrives at the depositor.
    NotifySouth {
        column: ColumnIndex,
        notification: SouthNotification,
    },
    /// A core fails; its slot goes dark.
    Fail {
        column: ColumnIndex,
    },
    /// A spare takes over a dark slot.
    Rotate {
        column: ColumnIndex,
    },
    /// Energy measurement window opens / closes.
    MeasureStart,
    MeasureEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Event {
    pub at: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap and we want earliest-first,
        // breaking timestamp ties by enqueue order.
        other
            .at
            .total_cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Earliest-first queue with deterministic FIFO tie-breaking.
#[derive(Debug, Default)]
pub(super) struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, at: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { at, seq, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }
}

/// One line of the run trace. Serializes with a stable field order for
/// JSON-lines output; `detail` keys are sorted by construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub t: f64,
    pub kind: String,
    pub who: String,
    pub detail: serde_json::Value,
}
