//! Counter-table tracker. Bounded tables of per-row activation counters;
//! TRR-capable REFs alternate between refreshing the neighbors of the
//! hottest entry (max counter) and walking the table entry by entry.

use crate::trr::config::CounterBasedConfig;
use crate::trr::{Detection, TrrRefKind};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    bank: u32,
    row: u32,
    counter: u64,
}

/// One counter table. A device holds one per bank or one shared, per config.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CounterTable {
    /// Insertion-ordered: index 0 is the oldest surviving entry.
    entries: Vec<Entry>,
    /// Next entry the table walk will pick.
    walk_ptr: usize,
}

impl CounterTable {
    pub(crate) fn new() -> Self {
        CounterTable { entries: Vec::new(), walk_ptr: 0 }
    }

    /// Record one activation of (bank, row).
    pub(crate) fn on_activate(&mut self, bank: u32, row: u32, config: &CounterBasedConfig) {
        if let Some(entry) =
            self.entries.iter_mut().find(|e| e.bank == bank && e.row == row)
        {
            entry.counter += 1;
            return;
        }
        if self.entries.len() >= config.table_size {
            self.evict(config);
        }
        self.entries.push(Entry { bank, row, counter: 1 });
    }

    /// Make room for a new entry. Min-counter eviction subtracts the evicted
    /// counter value from every survivor, so survivors are credited only for
    /// activity above the table floor. Without that rebase a long-lived hot
    /// entry would dominate detection forever.
    fn evict(&mut self, config: &CounterBasedConfig) {
        match config.evict_policy {
            crate::trr::config::EvictPolicy::MinCounter => {
                let min_idx = self
                    .entries
                    .iter()
                    .enumerate()
                    .min_by_key(|(idx, e)| (e.counter, *idx))
                    .map(|(idx, _)| idx)
                    .expect("evict called on empty table");
                let floor = self.entries[min_idx].counter;
                self.entries.remove(min_idx);
                for entry in &mut self.entries {
                    entry.counter -= floor;
                }
                if min_idx < self.walk_ptr {
                    self.walk_ptr -= 1;
                }
                if !self.entries.is_empty() {
                    self.walk_ptr %= self.entries.len();
                } else {
                    self.walk_ptr = 0;
                }
            }
        }
    }

    /// One TRR-capable REF for this table. `tref_b` selects the table-walk
    /// flavor (when enabled); otherwise the max-counter flavor runs.
    pub(crate) fn on_capable_ref(
        &mut self,
        tref_b: bool,
        config: &CounterBasedConfig,
    ) -> Option<Detection> {
        if self.entries.is_empty() {
            return None;
        }
        let (idx, kind) = if tref_b && config.trefb_enabled {
            let idx = self.walk_ptr % self.entries.len();
            self.walk_ptr = (idx + 1) % self.entries.len();
            (idx, TrrRefKind::TableWalk)
        } else {
            let idx = self
                .entries
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| a.counter.cmp(&b.counter).then(ib.cmp(ia)))
                .map(|(idx, _)| idx)
                .expect("nonempty");
            (idx, TrrRefKind::MaxCounter)
        };
        let entry = &mut self.entries[idx];
        let detection = Detection {
            bank: entry.bank as usize,
            row: entry.row as usize,
            kind,
        };
        if config.reset_on_detect {
            entry.counter = 0;
        }
        Some(detection)
    }

    #[cfg(test)]
    fn counters(&self) -> Vec<(u32, u64)> {
        self.entries.iter().map(|e| (e.row, e.counter)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> CounterBasedConfig {
        CounterBasedConfig { table_size: 16, ..CounterBasedConfig::default() }
    }

    #[test]
    fn repeated_activates_accumulate() {
        let mut table = CounterTable::new();
        for _ in 0..5 {
            table.on_activate(0, 10, &config());
        }
        assert_eq!(table.counters(), vec![(10, 5)]);
    }

    #[test]
    fn full_table_evicts_minimum_and_rebases() {
        let mut table = CounterTable::new();
        let cfg = config();
        // Row 3 gets the unique minimum count of 50; everyone else 50 + row.
        for row in 0..16u32 {
            let count = if row == 3 { 50 } else { 50 + u64::from(row) + 1 };
            for _ in 0..count {
                table.on_activate(0, row, &cfg);
            }
        }
        table.on_activate(0, 99, &cfg);
        let counters = table.counters();
        assert!(!counters.iter().any(|&(row, _)| row == 3));
        assert!(counters.contains(&(99, 1)));
        // Survivors are rebased by the evicted floor of 50.
        assert!(counters.contains(&(0, 1)));
        assert!(counters.contains(&(15, 16)));
    }

    #[test]
    fn eviction_tie_drops_oldest() {
        let mut table = CounterTable::new();
        let cfg = config();
        for row in 0..16u32 {
            table.on_activate(0, row, &cfg);
        }
        table.on_activate(0, 99, &cfg);
        let counters = table.counters();
        assert!(!counters.iter().any(|&(row, _)| row == 0));
        assert!(counters.iter().any(|&(row, _)| row == 1));
    }

    #[test]
    fn max_counter_detection_resets_only_winner() {
        let mut table = CounterTable::new();
        let cfg = config();
        for _ in 0..7 {
            table.on_activate(0, 4, &cfg);
        }
        for _ in 0..3 {
            table.on_activate(0, 9, &cfg);
        }
        let hit = table.on_capable_ref(false, &cfg).unwrap();
        assert_eq!((hit.bank, hit.row), (0, 4));
        assert_eq!(hit.kind, TrrRefKind::MaxCounter);
        assert_eq!(table.counters(), vec![(4, 0), (9, 3)]);
    }

    #[test]
    fn table_walk_visits_entries_in_insertion_order() {
        let mut table = CounterTable::new();
        let cfg = config();
        for row in [5u32, 8, 2] {
            table.on_activate(0, row, &cfg);
        }
        let picks: Vec<usize> =
            (0..4).map(|_| table.on_capable_ref(true, &cfg).unwrap().row).collect();
        assert_eq!(picks, vec![5, 8, 2, 5]);
    }

    #[test]
    fn walk_pointer_survives_eviction_before_it() {
        let mut table = CounterTable::new();
        let cfg = config();
        for row in 0..16u32 {
            for _ in 0..=row {
                table.on_activate(0, row, &cfg);
            }
        }
        // Walk past the first two entries.
        table.on_capable_ref(true, &cfg);
        table.on_capable_ref(true, &cfg);
        // Row 0 (counter 1, minimum) is evicted; pointer slides back with it.
        table.on_activate(0, 99, &cfg);
        let pick = table.on_capable_ref(true, &cfg).unwrap();
        assert_eq!(pick.row, 2);
    }

    #[test]
    fn empty_table_detects_nothing() {
        let mut table = CounterTable::new();
        assert_eq!(table.on_capable_ref(false, &config()), None);
        assert_eq!(table.on_capable_ref(true, &config()), None);
    }
}
