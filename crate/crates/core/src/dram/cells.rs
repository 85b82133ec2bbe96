//! Per-row fault tables: retention-weak cells (including variable-retention
//! rows) and disturbance-vulnerable cells. All draws derive from the device
//! seed through per-row RNG streams, so a given config and seed always
//! materializes the same silicon.
//!
//! These tables are the ground-truth oracle for tests. The analysis pipeline
//! never reads them; it only sees read-back data through commands.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::dram::config::{DisturbanceModelConfig, RetentionModelConfig, NS_PER_MS};

/// Retention category of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Retention at or above the base value; never fails in probe windows.
    Normal,
    /// One or more cells with retention in the weak band.
    Weak,
    /// Weak cells whose retention toggles between two values over time.
    VariableRetention,
}

/// A cell that loses its value when left unrefreshed past its retention time.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakCell {
    bit: u32,
    retention_a_ns: u64,
    retention_b_ns: u64,
    /// Phase offset of the retention toggle; 0 for stable cells.
    toggle_offset_ns: u64,
    flipped: bool,
}

impl WeakCell {
    pub fn bit(&self) -> usize {
        self.bit as usize
    }

    pub fn is_flipped(&self) -> bool {
        self.flipped
    }

    /// Both retention values; equal for stable cells.
    pub fn retention_values_ns(&self) -> (u64, u64) {
        (self.retention_a_ns, self.retention_b_ns)
    }

    pub fn is_variable(&self) -> bool {
        self.retention_a_ns != self.retention_b_ns
    }

    /// Retention in effect at `now`, given the device-wide toggle period.
    pub fn retention_ns_at(&self, now_ns: u64, toggle_period_ns: u64) -> u64 {
        if !self.is_variable() {
            return self.retention_a_ns;
        }
        let phase = ((now_ns + self.toggle_offset_ns) / toggle_period_ns) % 2;
        if phase == 0 {
            self.retention_a_ns
        } else {
            self.retention_b_ns
        }
    }
}

/// A cell that flips once its row's accumulated neighbor disturbance reaches
/// its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct VulnCell {
    bit: u32,
    threshold: f64,
    flipped: bool,
}

impl VulnCell {
    pub fn bit(&self) -> usize {
        self.bit as usize
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_flipped(&self) -> bool {
        self.flipped
    }
}

/// Fault cells of one row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RowCells {
    pub(crate) weak: SmallVec<[WeakCell; 2]>,
    pub(crate) vuln: SmallVec<[VulnCell; 3]>,
}

impl RowCells {
    /// Latch any failures observable at `now`: weak cells past their
    /// retention since `last_refresh_ns`, vulnerable cells at or past their
    /// threshold. Flips stay latched until the row is rewritten.
    pub(crate) fn materialize(
        &mut self,
        now_ns: u64,
        last_refresh_ns: u64,
        disturbance: f64,
        toggle_period_ns: u64,
    ) {
        let elapsed = now_ns - last_refresh_ns;
        for cell in &mut self.weak {
            if !cell.flipped && elapsed > cell.retention_ns_at(now_ns, toggle_period_ns) {
                cell.flipped = true;
            }
        }
        for cell in &mut self.vuln {
            if !cell.flipped && disturbance >= cell.threshold {
                cell.flipped = true;
            }
        }
    }

    /// XOR the latched flips into a row image.
    pub(crate) fn apply_flips(&self, words: &mut [u64]) {
        let mut flip = |bit: u32| {
            words[(bit / 64) as usize] ^= 1u64 << (bit % 64);
        };
        // A cell flips the stored value once, no matter how many failure
        // mechanisms touched it; collect bits first so weak+vulnerable
        // collisions do not cancel out.
        let mut bits: SmallVec<[u32; 6]> = SmallVec::new();
        for cell in &self.weak {
            if cell.flipped {
                bits.push(cell.bit);
            }
        }
        for cell in &self.vuln {
            if cell.flipped && !bits.contains(&cell.bit) {
                bits.push(cell.bit);
            }
        }
        bits.sort_unstable();
        bits.dedup();
        for bit in bits {
            flip(bit);
        }
    }

    pub fn any_flipped(&self) -> bool {
        self.weak.iter().any(|c| c.flipped) || self.vuln.iter().any(|c| c.flipped)
    }

    /// A rewrite restores full charge everywhere in the row.
    pub(crate) fn clear_flips(&mut self) {
        for cell in &mut self.weak {
            cell.flipped = false;
        }
        for cell in &mut self.vuln {
            cell.flipped = false;
        }
    }

    pub fn weak_cells(&self) -> &[WeakCell] {
        &self.weak
    }

    pub fn vuln_cells(&self) -> &[VulnCell] {
        &self.vuln
    }

    /// Smallest retention among this row's weak cells, by phase-A value.
    pub fn min_retention_ns(&self) -> Option<u64> {
        self.weak.iter().map(|c| c.retention_a_ns.min(c.retention_b_ns)).min()
    }
}

/// Fault tables for one bank, indexed by physical row.
#[derive(Debug, Clone, PartialEq)]
pub struct BankCells {
    kinds: Vec<RowKind>,
    rows: Vec<RowCells>,
}

/// Stream-tag byte for per-row cell draws; keeps cell RNG independent from
/// tracker RNG at the same device seed.
const CELL_STREAM_TAG: u64 = 1 << 56;

impl BankCells {
    pub(crate) fn draw(
        seed: u64,
        bank: usize,
        rows_per_bank: usize,
        row_bits: usize,
        retention: &RetentionModelConfig,
        disturbance: &DisturbanceModelConfig,
    ) -> Self {
        let base = ChaCha8Rng::seed_from_u64(seed);
        let grid: Vec<u64> = (retention.weak_retention_min_ms
            ..=retention.weak_retention_max_ms)
            .step_by(retention.retention_quantum_ms as usize)
            .map(|ms| ms * NS_PER_MS)
            .collect();
        let toggle_ns = retention.vrt_toggle_period_ms * NS_PER_MS;
        let mut kinds = Vec::with_capacity(rows_per_bank);
        let mut rows = Vec::with_capacity(rows_per_bank);
        for row in 0..rows_per_bank {
            let mut rng = base.clone();
            rng.set_stream(CELL_STREAM_TAG | ((bank as u64) << 40) | row as u64);
            let (kind, cells) =
                draw_row(&mut rng, row_bits, &grid, toggle_ns, retention, disturbance);
            kinds.push(kind);
            rows.push(cells);
        }
        BankCells { kinds, rows }
    }

    pub fn kind(&self, row: usize) -> RowKind {
        self.kinds[row]
    }

    pub fn row(&self, row: usize) -> &RowCells {
        &self.rows[row]
    }

    pub(crate) fn row_mut(&mut self, row: usize) -> &mut RowCells {
        &mut self.rows[row]
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    /// All weak and variable-retention rows with their minimum retention.
    pub fn weak_rows(&self) -> Vec<(usize, u64, bool)> {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| !matches!(k, RowKind::Normal))
            .map(|(row, k)| {
                let min = self.rows[row].min_retention_ns().expect("weak row has cells");
                (row, min, matches!(k, RowKind::VariableRetention))
            })
            .collect()
    }
}

fn draw_distinct_bits(rng: &mut ChaCha8Rng, count: u32, row_bits: usize) -> SmallVec<[u32; 4]> {
    let mut bits: SmallVec<[u32; 4]> = SmallVec::new();
    while bits.len() < count as usize {
        let bit = rng.gen_range(0..row_bits as u32);
        if !bits.contains(&bit) {
            bits.push(bit);
        }
    }
    bits
}

fn draw_row(
    rng: &mut ChaCha8Rng,
    row_bits: usize,
    grid: &[u64],
    toggle_ns: u64,
    retention: &RetentionModelConfig,
    disturbance: &DisturbanceModelConfig,
) -> (RowKind, RowCells) {
    let roll: f64 = rng.gen();
    let kind = if roll < retention.weak_row_fraction {
        RowKind::Weak
    } else if roll < retention.weak_row_fraction + retention.vrt_row_fraction {
        RowKind::VariableRetention
    } else {
        RowKind::Normal
    };

    let mut weak: SmallVec<[WeakCell; 2]> = SmallVec::new();
    if kind != RowKind::Normal {
        let (lo, hi) = retention.weak_cells_per_weak_row;
        let count = rng.gen_range(lo..=hi);
        let bits = draw_distinct_bits(rng, count, row_bits);
        for bit in bits {
            let a = grid[rng.gen_range(0..grid.len())];
            let (b, offset) = if kind == RowKind::VariableRetention {
                let mut b = a;
                while b == a {
                    b = grid[rng.gen_range(0..grid.len())];
                }
                (b, rng.gen_range(0..toggle_ns))
            } else {
                (a, 0)
            };
            weak.push(WeakCell {
                bit,
                retention_a_ns: a,
                retention_b_ns: b,
                toggle_offset_ns: offset,
                flipped: false,
            });
        }
    }

    let (vlo, vhi) = disturbance.vulnerable_cells_per_row;
    let vcount = rng.gen_range(vlo..=vhi);
    let vbits = draw_distinct_bits(rng, vcount, row_bits);
    let floor = 2.0 * disturbance.hc_first as f64;
    let mut vuln: SmallVec<[VulnCell; 3]> = SmallVec::new();
    for bit in vbits {
        let spread = 1.0 + (disturbance.per_cell_threshold_spread - 1.0) * rng.gen::<f64>();
        vuln.push(VulnCell { bit, threshold: floor * spread, flipped: false });
    }

    (kind, RowCells { weak, vuln })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tables(seed: u64) -> BankCells {
        BankCells::draw(
            seed,
            0,
            512,
            1024,
            &RetentionModelConfig::default(),
            &DisturbanceModelConfig::default(),
        )
    }

    #[test]
    fn draws_are_deterministic_per_seed() {
        assert_eq!(tables(7), tables(7));
        assert_ne!(tables(7), tables(8));
    }

    #[test]
    fn weak_retentions_sit_on_the_quantum_grid() {
        let t = tables(3);
        let r = RetentionModelConfig::default();
        for (row, min, _) in t.weak_rows() {
            let _ = row;
            let ms = min / NS_PER_MS;
            assert!(ms >= r.weak_retention_min_ms && ms <= r.weak_retention_max_ms);
            assert_eq!((ms - r.weak_retention_min_ms) % r.retention_quantum_ms, 0);
        }
    }

    #[test]
    fn category_fractions_roughly_match_config() {
        let t = tables(5);
        let weak = (0..512).filter(|&r| t.kind(r) == RowKind::Weak).count();
        let vrt =
            (0..512).filter(|&r| t.kind(r) == RowKind::VariableRetention).count();
        // 65% and 2% of 512, with generous sampling slack.
        assert!((270..=390).contains(&weak), "weak rows: {weak}");
        assert!((1..=30).contains(&vrt), "vrt rows: {vrt}");
    }

    #[test]
    fn variable_rows_toggle_between_two_distinct_values() {
        let t = tables(5);
        let toggle_ns = RetentionModelConfig::default().vrt_toggle_period_ms * NS_PER_MS;
        let mut seen = 0;
        for row in 0..512 {
            if t.kind(row) != RowKind::VariableRetention {
                continue;
            }
            for cell in t.row(row).weak_cells() {
                seen += 1;
                let (a, b) = cell.retention_values_ns();
                assert_ne!(a, b);
                assert_eq!(cell.retention_ns_at(0, toggle_ns), a);
                // Scanning a full period hits both values.
                let mut values = std::collections::HashSet::new();
                for step in 0..8 {
                    values.insert(cell.retention_ns_at(step * toggle_ns / 4, toggle_ns));
                }
                assert_eq!(values.len(), 2);
            }
        }
        assert!(seen > 0, "no variable-retention cells drawn");
    }

    #[test]
    fn every_row_draws_vulnerable_cells_in_range() {
        let t = tables(9);
        let d = DisturbanceModelConfig::default();
        for row in 0..512 {
            let cells = t.row(row).vuln_cells();
            let n = cells.len() as u32;
            assert!(n >= d.vulnerable_cells_per_row.0 && n <= d.vulnerable_cells_per_row.1);
            for cell in cells {
                let floor = 2.0 * d.hc_first as f64;
                assert!(cell.threshold() >= floor);
                assert!(cell.threshold() <= floor * d.per_cell_threshold_spread);
            }
        }
    }

    fn first_stable_weak_row(t: &BankCells) -> (usize, u64) {
        t.weak_rows()
            .into_iter()
            .find(|&(_, _, vrt)| !vrt)
            .map(|(row, min, _)| (row, min))
            .expect("a stable weak row exists")
    }

    #[test]
    fn materialize_latches_until_rewrite() {
        let mut t = tables(5);
        let (row, min) = first_stable_weak_row(&t);
        let toggle_ns = RetentionModelConfig::default().vrt_toggle_period_ms * NS_PER_MS;
        let cells = t.row_mut(row);
        cells.materialize(min, 0, 0.0, toggle_ns);
        assert!(!cells.any_flipped(), "exactly-at-retention must not flip");
        cells.materialize(min + 1, 0, 0.0, toggle_ns);
        assert!(cells.any_flipped());
        // Later materializations with zero elapsed keep the latch.
        cells.materialize(min + 2, min + 2, 0.0, toggle_ns);
        assert!(cells.any_flipped());
        cells.clear_flips();
        assert!(!cells.any_flipped());
    }

    #[test]
    fn flips_xor_into_row_image() {
        let mut t = tables(5);
        let (row, min) = first_stable_weak_row(&t);
        let toggle_ns = RetentionModelConfig::default().vrt_toggle_period_ms * NS_PER_MS;
        let cells = t.row_mut(row);
        cells.materialize(min + 1, 0, 0.0, toggle_ns);
        let mut words = vec![u64::MAX; 16];
        cells.apply_flips(&mut words);
        let zeros: u32 = words.iter().map(|w| w.count_zeros()).sum();
        assert!(zeros >= 1);
    }
}
