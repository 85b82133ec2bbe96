//! Retention-based row profiling.
//!
//! Later experiment stages need probe rows whose data decays at a known,
//! repeatable wall-clock threshold: write such a row, leave it alone for its
//! retention time, and it flips unless something refreshed it in between.
//! That makes any refresh observable from the command bus alone. This module
//! finds those rows by stepping a wait grid, verifies each candidate's
//! threshold is stable across repeated staggered trials (rows with variable
//! retention fail that check and are dropped), and assembles verified rows
//! into groups with the physical layout an experiment asks for.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::blind::BlindDevice;
use crate::dram::command::{DataPattern, DramCommand};
use crate::dram::config::NS_PER_MS;
use crate::error::{Error, Result};

/// Tuning knobs for [`find_row_groups`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowScoutConfig {
    /// First wait the scan profiles, in milliseconds.
    pub t_initial_ms: u64,
    /// Grid step between profiled waits.
    pub t_step_ms: u64,
    /// Last wait the scan profiles (inclusive).
    pub t_max_ms: u64,
    /// How many times a candidate must reproduce both "flips at T" and
    /// "retains at T - t_step" before it is trusted. Trials are staggered in
    /// time so rows whose retention toggles between two values land in
    /// different phases and get caught.
    pub consistency_trials: usize,
    /// Unprofiled rows kept clear on each side of an accepted group so that
    /// hammering one group cannot disturb another.
    pub guard_rows: usize,
    /// Data written to rows under profile.
    pub pattern: DataPattern,
}

impl Default for RowScoutConfig {
    fn default() -> Self {
        RowScoutConfig {
            t_initial_ms: 100,
            t_step_ms: 50,
            t_max_ms: 600,
            consistency_trials: 1000,
            guard_rows: 2,
            pattern: DataPattern::AllOnes,
        }
    }
}

impl RowScoutConfig {
    /// Default knobs with the consistency check cut down for quick runs.
    /// Semantics are unchanged; only the repeat count shrinks.
    pub fn desk() -> Self {
        RowScoutConfig { consistency_trials: 24, ..RowScoutConfig::default() }
    }
}

/// Physical arrangement requested for one row group: a pattern over the
/// alphabet {R, -} laid onto consecutive physical rows. `R` marks a
/// profiled row, `-` one skipped row (an aggressor slot). `"R-R"` is the
/// classic victim/aggressor/victim sandwich; `"RRR-RRR"` surrounds one
/// slot with three profiled rows per side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GroupLayout {
    pattern: String,
}

impl GroupLayout {
    pub const MAX_SPAN: usize = 32;

    pub fn new(pattern: impl Into<String>) -> Result<Self> {
        let pattern = pattern.into();
        if pattern.is_empty() || pattern.len() > Self::MAX_SPAN {
            return Err(Error::invalid("layout.pattern", "length must be 1..=32 rows"));
        }
        if pattern.bytes().any(|b| b != b'R' && b != b'-') {
            return Err(Error::invalid("layout.pattern", "only 'R' and '-' are allowed"));
        }
        if !pattern.bytes().any(|b| b == b'R') {
            return Err(Error::invalid("layout.pattern", "needs at least one profiled row"));
        }
        Ok(GroupLayout { pattern })
    }

    /// One profiled row on its own.
    pub fn single() -> Self {
        GroupLayout { pattern: "R".into() }
    }

    /// Two profiled rows with `gap` skipped rows between them.
    pub fn flanking_pair(gap: usize) -> Result<Self> {
        Self::new(format!("R{}R", "-".repeat(gap)))
    }

    /// `arm` profiled rows on each side of `gap` skipped rows.
    pub fn flanking_run(arm: usize, gap: usize) -> Result<Self> {
        if arm == 0 {
            return Err(Error::invalid("layout.arm", "needs at least one profiled row per side"));
        }
        Self::new(format!("{r}{g}{r}", r = "R".repeat(arm), g = "-".repeat(gap)))
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    /// Rows the pattern covers.
    pub fn span(&self) -> usize {
        self.pattern.len()
    }

    /// Offsets of profiled rows from the anchor, ascending.
    pub fn probe_offsets(&self) -> Vec<usize> {
        self.pattern.bytes().enumerate().filter(|&(_, b)| b == b'R').map(|(i, _)| i).collect()
    }

    /// Offsets of skipped rows from the anchor, ascending.
    pub fn skip_offsets(&self) -> Vec<usize> {
        self.pattern.bytes().enumerate().filter(|&(_, b)| b == b'-').map(|(i, _)| i).collect()
    }
}

impl TryFrom<String> for GroupLayout {
    type Error = Error;
    fn try_from(pattern: String) -> Result<Self> {
        GroupLayout::new(pattern)
    }
}

impl From<GroupLayout> for String {
    fn from(layout: GroupLayout) -> String {
        layout.pattern
    }
}

impl std::fmt::Display for GroupLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.pattern)
    }
}

/// A set of profiled rows sharing one retention threshold and the requested
/// physical layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowGroup {
    pub bank: usize,
    /// Physical row the layout pattern starts at.
    pub anchor: usize,
    pub layout: GroupLayout,
    /// Probe rows in ascending physical order.
    pub physical_rows: Vec<usize>,
    /// The same rows as logical (bus) addresses, index-aligned with
    /// `physical_rows`.
    pub logical_rows: Vec<usize>,
    /// Smallest profiled wait at which every row in the group reliably
    /// flips. Each row also reliably retains for one grid step less.
    pub retention_ms: u64,
}

impl RowGroup {
    /// Physical rows at the layout's skipped positions, the aggressor slots
    /// the layout reserved.
    pub fn enclosed_physical_rows(&self) -> Vec<usize> {
        self.layout.skip_offsets().iter().map(|&o| self.anchor + o).collect()
    }
}

/// Writes `pattern` into one row through the command bus.
pub(crate) fn write_row(
    dev: &mut BlindDevice,
    bank: usize,
    row: usize,
    pattern: &DataPattern,
) -> Result<()> {
    let tras = dev.timing().t_act_to_pre_ns;
    let trp = dev.timing().t_pre_to_act_ns;
    dev.issue(DramCommand::Act { bank, row })?;
    dev.issue(DramCommand::Wr { bank, row, pattern: pattern.clone() })?;
    dev.issue(DramCommand::Wait { ns: tras })?;
    dev.issue(DramCommand::Pre { bank })?;
    dev.issue(DramCommand::Wait { ns: trp })?;
    Ok(())
}

/// Reads one row back through the command bus.
pub(crate) fn read_row(dev: &mut BlindDevice, bank: usize, row: usize) -> Result<Vec<u64>> {
    let tras = dev.timing().t_act_to_pre_ns;
    let trp = dev.timing().t_pre_to_act_ns;
    dev.issue(DramCommand::Act { bank, row })?;
    let data = dev
        .issue(DramCommand::Rd { bank, row })?
        .data()
        .expect("read returns data")
        .to_vec();
    dev.issue(DramCommand::Wait { ns: tras })?;
    dev.issue(DramCommand::Pre { bank })?;
    dev.issue(DramCommand::Wait { ns: trp })?;
    Ok(data)
}

pub(crate) fn wait_ms(dev: &mut BlindDevice, ms: u64) -> Result<()> {
    if ms > 0 {
        dev.issue(DramCommand::Wait { ns: ms * NS_PER_MS })?;
    }
    Ok(())
}

/// Writes every row in `rows`, idles for `wait_ms`, and returns the logical
/// row numbers whose readback no longer matches. Rows are left holding
/// whatever the decay produced; callers rewrite before reuse.
pub fn scan_failing_rows(
    dev: &mut BlindDevice,
    bank: usize,
    rows: Range<usize>,
    wait: u64,
    pattern: &DataPattern,
) -> Result<Vec<usize>> {
    let expected = pattern.to_words(dev.row_bits());
    for row in rows.clone() {
        write_row(dev, bank, row, pattern)?;
    }
    wait_ms(dev, wait)?;
    let mut failing = Vec::new();
    for row in rows {
        if read_row(dev, bank, row)? != expected {
            failing.push(row);
        }
    }
    Ok(failing)
}

/// Checks that a row's decay threshold reproduces: across staggered trials
/// it must always flip after `fail_ms` and always survive `retain_ms`.
fn retention_is_consistent(
    dev: &mut BlindDevice,
    bank: usize,
    row: usize,
    fail_ms: u64,
    retain_ms: u64,
    config: &RowScoutConfig,
) -> Result<bool> {
    let expected = config.pattern.to_words(dev.row_bits());
    for trial in 0..config.consistency_trials {
        write_row(dev, bank, row, &config.pattern)?;
        wait_ms(dev, fail_ms)?;
        if read_row(dev, bank, row)? == expected {
            return Ok(false);
        }
        write_row(dev, bank, row, &config.pattern)?;
        wait_ms(dev, retain_ms)?;
        if read_row(dev, bank, row)? != expected {
            return Ok(false);
        }
        // Unequal stagger between trials shifts where the next trial's reads
        // land relative to any retention toggling the row might do.
        wait_ms(dev, 170 * (trial as u64 + 1))?;
    }
    Ok(true)
}

/// Finds `count` row groups in `rows` matching `layout`, profiling waits
/// from `t_initial_ms` to `t_max_ms`. Groups are returned in discovery order
/// (lowest retention first); rows of one group never overlap another group
/// or come within `guard_rows` of it.
///
/// Fails with [`Error::InsufficientGroups`] when the scan window is
/// exhausted first.
pub fn find_row_groups(
    dev: &mut BlindDevice,
    bank: usize,
    rows: Range<usize>,
    layout: GroupLayout,
    count: usize,
    config: &RowScoutConfig,
) -> Result<Vec<RowGroup>> {
    if config.t_step_ms == 0 {
        return Err(Error::invalid("scout.t_step_ms", "must be > 0"));
    }
    if rows.end > dev.rows_per_bank() {
        return Err(Error::OutOfRange { row: rows.end - 1, rows_per_bank: dev.rows_per_bank() });
    }
    let probe_offsets = layout.probe_offsets();
    let skip_offsets = layout.skip_offsets();

    let mut groups: Vec<RowGroup> = Vec::new();
    // Physical rows already claimed by a group (probes, enclosed aggressor
    // slots, and guard margin) or rejected by the consistency check.
    let mut blocked: BTreeSet<usize> = BTreeSet::new();
    let mut rejected: BTreeSet<usize> = BTreeSet::new();
    let mut already_failed: BTreeSet<usize> = BTreeSet::new();
    // Verified candidates per retention threshold, as physical row numbers.
    let mut pools: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();

    let mut t = config.t_initial_ms;
    while t <= config.t_max_ms && groups.len() < count {
        let failing = scan_failing_rows(dev, bank, rows.clone(), t, &config.pattern)?;
        let pool = pools.entry(t).or_default();
        for logical in failing {
            if !already_failed.insert(logical) {
                continue;
            }
            pool.insert(dev.to_physical(logical)?);
        }

        // Assemble groups from this threshold's pool, verifying members on
        // demand and dropping any row that cannot reproduce its threshold.
        let candidates: Vec<usize> = pool.iter().copied().collect();
        let mut i = 0;
        while i < candidates.len() && groups.len() < count {
            let first = candidates[i];
            i += 1;
            // `first` is tried as the layout's lowest profiled row.
            let Some(anchor) = first.checked_sub(probe_offsets[0]) else { continue };
            if anchor + layout.span() > rows.end {
                continue;
            }
            let members: Vec<usize> = probe_offsets.iter().map(|&o| anchor + o).collect();
            if members
                .iter()
                .any(|m| !pool.contains(m) || blocked.contains(m) || rejected.contains(m))
            {
                continue;
            }
            // The skipped aggressor slots must be free too.
            if skip_offsets.iter().any(|&o| blocked.contains(&(anchor + o))) {
                continue;
            }

            let mut all_consistent = true;
            for &member in &members {
                let logical = dev.to_logical(member)?;
                let retain = t.saturating_sub(config.t_step_ms);
                if !retention_is_consistent(dev, bank, logical, t, retain, config)? {
                    rejected.insert(member);
                    all_consistent = false;
                }
            }
            if !all_consistent {
                continue;
            }

            let lo = anchor.saturating_sub(config.guard_rows);
            let hi = anchor + layout.span() - 1 + config.guard_rows;
            blocked.extend(lo..=hi);
            let logical_rows = members
                .iter()
                .map(|&p| dev.to_logical(p))
                .collect::<Result<Vec<_>>>()?;
            groups.push(RowGroup {
                bank,
                anchor,
                layout: layout.clone(),
                physical_rows: members,
                logical_rows,
                retention_ms: t,
            });
        }
        t += config.t_step_ms;
    }

    if groups.len() < count {
        return Err(Error::InsufficientGroups { found: groups.len(), needed: count });
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dram::DramDevice;
    use crate::presets::desk_preset;

    fn blind(name: &str, seed: u64) -> BlindDevice {
        BlindDevice::new(DramDevice::new(desk_preset(name, seed).unwrap()).unwrap())
    }

    #[test]
    fn scan_reports_only_decayed_rows() {
        let mut dev = blind("baseline", 11);
        let rows = 0..256;
        let short = scan_failing_rows(&mut dev, 0, rows.clone(), 40, &DataPattern::AllOnes).unwrap();
        assert!(short.is_empty(), "no desk row decays within 40ms");
        let long = scan_failing_rows(&mut dev, 0, rows, 200, &DataPattern::AllOnes).unwrap();
        assert!(!long.is_empty(), "weak rows must decay within 200ms");
    }

    #[test]
    fn groups_have_requested_layout_and_matching_retention() {
        let mut dev = blind("baseline", 3);
        let groups = find_row_groups(
            &mut dev,
            1,
            0..1024,
            GroupLayout::flanking_pair(1).unwrap(),
            4,
            &RowScoutConfig::desk(),
        )
        .unwrap();
        assert_eq!(groups.len(), 4);
        for g in &groups {
            assert_eq!(g.physical_rows.len(), 2);
            assert_eq!(g.physical_rows[1] - g.physical_rows[0], 2);
            assert_eq!(g.enclosed_physical_rows(), vec![g.physical_rows[0] + 1]);
            assert!(g.retention_ms >= 100 && g.retention_ms <= 600);
        }
    }

    #[test]
    fn groups_never_overlap_or_touch() {
        let mut dev = blind("baseline", 5);
        let config = RowScoutConfig::desk();
        let groups = find_row_groups(
            &mut dev,
            0,
            0..2048,
            GroupLayout::flanking_pair(1).unwrap(),
            8,
            &config,
        )
        .unwrap();
        let mut spans: Vec<(usize, usize)> = groups
            .iter()
            .map(|g| (g.physical_rows[0], *g.physical_rows.last().unwrap()))
            .collect();
        spans.sort_unstable();
        for pair in spans.windows(2) {
            assert!(
                pair[0].1 + config.guard_rows < pair[1].0,
                "groups {pair:?} closer than the guard margin"
            );
        }
    }

    #[test]
    fn profiled_rows_flip_at_threshold_and_survive_below() {
        let mut dev = blind("baseline", 9);
        let groups = find_row_groups(
            &mut dev,
            0,
            0..512,
            GroupLayout::single(),
            3,
            &RowScoutConfig::desk(),
        )
        .unwrap();
        let expected = DataPattern::AllOnes.to_words(dev.row_bits());
        for g in &groups {
            let row = g.logical_rows[0];
            write_row(&mut dev, 0, row, &DataPattern::AllOnes).unwrap();
            wait_ms(&mut dev, g.retention_ms - 50).unwrap();
            assert_eq!(read_row(&mut dev, 0, row).unwrap(), expected, "must survive below threshold");
            write_row(&mut dev, 0, row, &DataPattern::AllOnes).unwrap();
            wait_ms(&mut dev, g.retention_ms).unwrap();
            assert_ne!(read_row(&mut dev, 0, row).unwrap(), expected, "must flip at threshold");
        }
    }

    #[test]
    fn toggling_retention_rows_are_excluded() {
        let config = desk_preset("baseline", 21).unwrap();
        let device = DramDevice::new(config).unwrap();
        let toggling: BTreeSet<usize> = device
            .cells(0)
            .weak_rows()
            .into_iter()
            .filter_map(|(row, _, vrt)| vrt.then_some(row))
            .collect();
        assert!(!toggling.is_empty(), "seed must produce toggling rows for this test");
        let mut dev = BlindDevice::new(device);
        let groups = find_row_groups(
            &mut dev,
            0,
            0..4096,
            GroupLayout::single(),
            24,
            &RowScoutConfig::desk(),
        )
        .unwrap();
        for g in &groups {
            let phys = g.physical_rows[0];
            assert!(!toggling.contains(&phys), "row {phys} toggles but was accepted");
        }
    }

    #[test]
    fn insufficient_candidates_reported_with_best_count() {
        let mut dev = blind("baseline", 2);
        let err = find_row_groups(
            &mut dev,
            0,
            0..24,
            GroupLayout::flanking_pair(1).unwrap(),
            50,
            &RowScoutConfig::desk(),
        )
        .unwrap_err();
        match err {
            Error::InsufficientGroups { found, needed } => {
                assert!(found < 50);
                assert_eq!(needed, 50);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
