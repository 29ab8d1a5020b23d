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

use std::fmt;

use serde::{Deserialize, Serialize};

use super::pricing::Cents;
use super::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostCategory {
    ComputeGibS,
    RequestsRead,
    RequestsWrite,
    TransferGib,
    StorageGibMo,
    QueueMsgs,
}

impl CostCategory {
    pub const ALL: [CostCategory; 6] = [
        CostCategory::ComputeGibS,
        CostCategory::RequestsRead,
        CostCategory::RequestsWrite,
        CostCategory::TransferGib,
        CostCategory::StorageGibMo,
        CostCategory::QueueMsgs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostCategory::ComputeGibS => "compute_gib_s",
            CostCategory::RequestsRead => "requests_read",
            CostCategory::RequestsWrite => "requests_write",
            CostCategory::TransferGib => "transfer_gib",
            CostCategory::StorageGibMo => "storage_gib_mo",
            CostCategory::QueueMsgs => "queue_msgs",
        }
    }
}

impl fmt::Display for CostCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub at: SimTime,
    pub category: CostCategory,
    pub quantity: f64,
    pub cost: Cents,
}

/// Append-only record of every billable event.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, at: SimTime, category: CostCategory, quantity: f64, cost: Cents) {
        self.entries.push(LedgerEntry {
            at,
            category,
            quantity,
            cost,
        });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries appended since `mark` (a previous `len()`).
    pub fn since(&self, mark: usize) -> CostLedger {
        CostLedger {
            entries: self.entries[mark.min(self.entries.len())..].to_vec(),
        }
    }

    pub fn total_cost(&self, category: Option<CostCategory>) -> Cents {
        total_cost(self, category)
    }

    pub fn quantity(&self, category: CostCategory) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.category == category)
            .map(|e| e.quantity)
            .sum()
    }
}

/// Sum of ledger entries, optionally restricted to one category.
pub fn total_cost(ledger: &CostLedger, category: Option<CostCategory>) -> Cents {
    ledger
        .entries
        .iter()
        .filter(|e| category.map_or(true, |c| e.category == c))
        .map(|e| e.cost)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ledger_costs_nothing() {
        assert_eq!(CostLedger::new().total_cost(None), Cents::ZERO);
    }

    #[test]
    fn total_is_sum_of_entries_and_filter_works() {
        let mut l = CostLedger::new();
        l.record(0, CostCategory::RequestsRead, 1.0, Cents(3));
        l.record(1, CostCategory::RequestsWrite, 1.0, Cents(5));
        l.record(2, CostCategory::RequestsRead, 1.0, Cents(7));
        assert_eq!(l.total_cost(None), Cents(15));
        assert_eq!(l.total_cost(Some(CostCategory::RequestsRead)), Cents(10));
        assert_eq!(l.since(1).total_cost(None), Cents(12));
    }
}
