// Copyright 2026 The Skylite Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::collections::BTreeMap;

use crate::sim::SimTime;

/// Callback fired by the event loop. Receives the simulator so it can issue
/// further operations and schedule follow-up events.
pub type EventCallback = Box<dyn FnOnce(&super::Simulator) + Send>;

/// Identifier of a scheduled event; also its FIFO tie-breaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

/// Simulated clock plus the ordered set of pending events.
///
/// Events at equal times fire in scheduling order.
pub struct SimClock {
    now: SimTime,
    next_seq: u64,
    pending: BTreeMap<(SimTime, u64), EventCallback>,
}

impl Default for SimClock {
    fn default() -> Self {
        Self::new()
    }
}

impl SimClock {
    pub fn new() -> Self {
        Self {
            now: 0,
            next_seq: 0,
            pending: BTreeMap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Events in the past are clamped to `now` so time never runs backwards.
    pub fn schedule(&mut self, at: SimTime, callback: EventCallback) -> EventId {
        let at = at.max(self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert((at, seq), callback);
        EventId(seq)
    }

    pub fn cancel(&mut self, id: EventId) -> bool {
        let key = self.pending.keys().find(|(_, s)| *s == id.0).copied();
        key.map(|k| self.pending.remove(&k).is_some())
            .unwrap_or(false)
    }

    pub fn pop(&mut self) -> Option<(SimTime, EventCallback)> {
        let ((at, _), cb) = self.pending.pop_first()?;
        self.now = self.now.max(at);
        Some((at, cb))
    }

    pub fn advance_to(&mut self, at: SimTime) {
        self.now = self.now.max(at);
    }
}
