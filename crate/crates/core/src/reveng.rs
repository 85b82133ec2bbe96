//! Black-box inference of a device's TRR implementation.
//!
//! Everything here drives a [`BlindDevice`], so the only observable signals
//! are the ones an attacker on a real bus has: command counts, refresh
//! cadence, and which weak rows keep or lose their data. The pipeline fills
//! an [`InferredTrrProfile`] one field at a time, one experiment per field,
//! and keeps a human-readable evidence log of what each experiment saw.
//!
//! All experiments share one envelope. A weak row with retention T holds
//! its data across a gap of T milliseconds and flips once the gap exceeds
//! T, and a flip stays until the row is rewritten; a refresh that arrives
//! after the gap has already passed does not bring the data back. Each
//! trial therefore writes the probe, waits T/2, performs the accesses and
//! refreshes under test, waits the remaining T/2 plus a settle margin, and
//! reads the probe back. A probe refreshed inside the action window comes
//! back intact; one that was not comes back corrupted.
//!
//! Two sources of noise have to be engineered away rather than averaged
//! away. First, the regular refresh walk recharges probes on its own
//! schedule, so trials either discard iterations whose refresh slots touch
//! a probe or pre-position the REF index so the whole action window stays
//! clear of the probes' slots. Second, heavy activation bursts disturb the
//! burst row's neighbors enough to flip their vulnerable cells, so probes
//! are always written after any large adjacent burst; the write clears the
//! accumulated disturbance along with the decay clock.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analyzer::{hammer_cycle, infer_refresh_schedule, reset_trr_state, RegularSchedule};
use crate::blind::BlindDevice;
use crate::dram::command::{DataPattern, DramCommand};
use crate::error::{Error, Result};
use crate::scout::{
    find_row_groups, read_row, wait_ms, write_row, GroupLayout, RowGroup, RowScoutConfig,
};

/// How often the hidden mitigation gets to act, in REF commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefRatio {
    /// Detection and the countermeasure refresh happen on the same REF,
    /// every `n`-th REF.
    Every(u64),
    /// Detections on every `n`-th REF are paid out on a later ordinary
    /// REF.
    Deferred(u64),
}

impl RefRatio {
    /// The cadence in REFs regardless of deferral.
    pub fn period(&self) -> u64 {
        match *self {
            RefRatio::Every(n) | RefRatio::Deferred(n) => n,
        }
    }
}

impl fmt::Display for RefRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RefRatio::Every(n) => write!(f, "every {n} REFs"),
            RefRatio::Deferred(n) => write!(f, "deferred({n})"),
        }
    }
}

/// Which neighbors of a detected aggressor the mitigation refreshes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanResult {
    /// A fixed set of row offsets relative to the aggressor.
    Offsets(BTreeSet<i32>),
    /// Only the aggressor's pair partner (the row differing in address
    /// bit 0), not a fixed offset.
    Pair,
}

impl fmt::Display for SpanResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpanResult::Offsets(s) => {
                let parts: Vec<String> = s.iter().map(|d| format!("{d:+}")).collect();
                write!(f, "offsets {{{}}}", parts.join(", "))
            }
            SpanResult::Pair => write!(f, "pair partner"),
        }
    }
}

/// The tracking strategy class an experiment attributes to the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferredKind {
    Counter,
    Sampling,
    Window,
    /// No mitigation-attributed refresh was ever observed.
    None,
    #[default]
    Unknown,
}

impl fmt::Display for InferredKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InferredKind::Counter => "counter",
            InferredKind::Sampling => "sampling",
            InferredKind::Window => "window",
            InferredKind::None => "none",
            InferredKind::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// Verdict of the eviction-policy experiment on counter-based trackers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictionVerdict {
    /// A lightly hammered row is reliably pushed out by heavier rows.
    MinCounter,
    /// The lightly hammered row survives in the table.
    Other,
    /// The device does not keep an evictable table.
    NotApplicable,
    #[default]
    Unknown,
}

impl fmt::Display for EvictionVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EvictionVerdict::MinCounter => "min-counter",
            EvictionVerdict::Other => "other",
            EvictionVerdict::NotApplicable => "not-applicable",
            EvictionVerdict::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// Verdict of the reset-on-detect experiment on counter-based trackers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetVerdict {
    /// A detected row's standing is cleared, so two unequal aggressors
    /// alternate detections.
    Resets,
    /// The heavier aggressor keeps winning every detection.
    Retains,
    NotApplicable,
    #[default]
    Unknown,
}

impl fmt::Display for ResetVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ResetVerdict::Resets => "resets",
            ResetVerdict::Retains => "retains",
            ResetVerdict::NotApplicable => "not-applicable",
            ResetVerdict::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// How long tracker state about an aggressor outlives the hammering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersistenceLabel {
    /// The aggressor keeps drawing countermeasure refreshes indefinitely.
    Indefinite,
    /// State persists until unrelated traffic displaces it.
    IndefiniteUntilResample,
    /// State is consumed by the first countermeasure action.
    Cleared,
    #[default]
    Unknown,
}

impl fmt::Display for PersistenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PersistenceLabel::Indefinite => "indefinite",
            PersistenceLabel::IndefiniteUntilResample => "indefinite-until-resample",
            PersistenceLabel::Cleared => "cleared",
            PersistenceLabel::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// Everything the pipeline inferred about the hidden mitigation.
///
/// Every field starts out unknown and is only populated by the experiment
/// responsible for it; nothing here is ever copied from the simulator's
/// ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InferredTrrProfile {
    /// Mitigation cadence relative to REF commands.
    pub trr_to_ref_ratio: Option<RefRatio>,
    /// Which neighbors of a detected aggressor get refreshed.
    pub neighbor_span: Option<SpanResult>,
    /// Tracking strategy class.
    pub detection_kind: InferredKind,
    /// Aggressors the tracker can follow at once, when observable.
    pub tracker_capacity: Option<usize>,
    /// Whether tracking state is kept per bank (`true`) or shared
    /// device-wide (`false`).
    pub per_bank_scope: Option<bool>,
    /// Replacement behavior of a full tracking table.
    pub evict_policy: EvictionVerdict,
    /// Whether a detection clears the detected row's standing.
    pub reset_on_detect: ResetVerdict,
    /// Lifetime of tracking state after hammering stops.
    pub entry_persistence: PersistenceLabel,
    /// Activation count within which a sampling tracker is guaranteed to
    /// observe at least one activation of a row.
    pub sampling_guarantee: Option<usize>,
    /// Activations recorded after a mitigation action before the tracker
    /// goes blind until the next one.
    pub window_size: Option<usize>,
    /// REFs per full pass of the regular refresh walk.
    pub regular_refresh_period_refs: Option<usize>,
}

/// One log line of what an experiment did and concluded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceRecord {
    /// Which experiment produced the record.
    pub op: String,
    /// The verdict or error, as text.
    pub outcome: String,
    /// Supporting observations: counts, indices, survivor sets.
    pub detail: String,
}

/// Tunable iteration and budget knobs for the inference pipeline.
///
/// Defaults are sized for confidence on unknown hardware. [`desk`] shrinks
/// the repetition counts to what the bundled simulated devices need so the
/// whole pipeline runs in seconds.
///
/// [`desk`]: RevengConfig::desk
#[derive(Debug, Clone)]
pub struct RevengConfig {
    /// Row-scout settings used whenever an experiment needs weak rows.
    pub scout: RowScoutConfig,
    /// Extra settle time added to the second half-retention wait.
    pub settle_margin_ms: u64,
    /// Single-REF probe iterations when measuring the mitigation cadence.
    pub ratio_iterations: usize,
    /// Activations per aggressor per cadence iteration.
    pub ratio_hammers: u64,
    /// Re-runs of the deferral check; the majority wins.
    pub defer_trials: usize,
    /// Tracker-claiming burst length for span, class, and displacement
    /// experiments. Long enough to overwrite any sampling slot and fill
    /// any activation window.
    pub burst_acts: u64,
    /// Activations per aggressor when probing the refresh span.
    pub span_hammers: u64,
    /// Largest neighbor offset probed for the refresh span.
    pub span_max_offset: i32,
    /// Upper bound on the tracked-aggressor count search.
    pub capacity_max: usize,
    /// Activations per aggressor in the capacity sweep.
    pub capacity_hammers: u64,
    /// Iterations of the eviction-policy duel.
    pub evict_iterations: usize,
    /// Activations for the lightly hammered row in the eviction duel.
    pub evict_cold_hammers: u64,
    /// Activations for each heavy filler row in the eviction duel.
    pub evict_hot_hammers: u64,
    /// Iterations of the reset-on-detect race.
    pub reset_iterations: usize,
    /// Activations priming both race rows before the first iteration,
    /// lifting them above any counts earlier experiments accumulated.
    pub reset_prime_hammers: u64,
    /// Activations for the lighter row in the reset race.
    pub reset_cold_hammers: u64,
    /// Activations for the heavier row in the reset race.
    pub reset_hot_hammers: u64,
    /// Quiet REFs issued while watching how long tracker state persists.
    pub persistence_refs: u64,
    /// REFs per block between decay waits in the persistence experiment.
    pub persistence_block_refs: u64,
    /// Upper bound accepted for a sampling guarantee.
    pub guarantee_max: u64,
    /// Scan trials allowed while hunting sample points.
    pub guarantee_scan_trials: usize,
    /// Sample-point observations required before computing the stride.
    pub guarantee_hits: usize,
    /// Aligned confirmation rounds for the computed stride.
    pub guarantee_verify_trials: usize,
    /// Weak-row groups scanned in parallel per sample-hunt trial.
    pub guarantee_scan_groups: usize,
    /// Upper bound on the window-size search.
    pub window_max: usize,
    /// REF budget per batch when sweeping walk slots in the window search.
    pub window_batch_refs: u64,
}

impl Default for RevengConfig {
    fn default() -> Self {
        RevengConfig {
            scout: RowScoutConfig::default(),
            settle_margin_ms: 5,
            ratio_iterations: 768,
            ratio_hammers: 5000,
            defer_trials: 3,
            burst_acts: 4096,
            span_hammers: 2600,
            span_max_offset: 3,
            capacity_max: 32,
            capacity_hammers: 60,
            evict_iterations: 1000,
            evict_cold_hammers: 50,
            evict_hot_hammers: 100,
            reset_iterations: 64,
            reset_prime_hammers: 60_000,
            reset_cold_hammers: 2000,
            reset_hot_hammers: 3000,
            persistence_refs: 32_768,
            persistence_block_refs: 600,
            guarantee_max: 4096,
            guarantee_scan_trials: 2000,
            guarantee_hits: 6,
            guarantee_verify_trials: 8,
            guarantee_scan_groups: 16,
            window_max: 4096,
            window_batch_refs: 3000,
        }
    }
}

impl RevengConfig {
    /// Repetition counts sized for the bundled simulated devices.
    pub fn desk() -> Self {
        RevengConfig {
            scout: RowScoutConfig::desk(),
            ratio_iterations: 420,
            ratio_hammers: 60,
            evict_iterations: 6,
            reset_iterations: 16,
            ..RevengConfig::default()
        }
    }
}

/// Stateful inference session over one blind device.
///
/// The session caches what earlier experiments established (the regular
/// refresh schedule, the mitigation cadence, the tracking class, scouted
/// row groups) so later experiments can build on it, and appends one
/// [`EvidenceRecord`] per experiment.
pub struct ProfileSession {
    dev: BlindDevice,
    config: RevengConfig,
    schedule: Option<RegularSchedule>,
    ratio: Option<RefRatio>,
    capable_phase: u64,
    kind: Option<InferredKind>,
    groups: BTreeMap<usize, Vec<RowGroup>>,
    hammered: BTreeSet<(usize, usize)>,
    evidence: Vec<EvidenceRecord>,
}

impl ProfileSession {
    pub fn new(dev: BlindDevice, config: RevengConfig) -> Self {
        ProfileSession {
            dev,
            config,
            schedule: None,
            ratio: None,
            capable_phase: 0,
            kind: None,
            groups: BTreeMap::new(),
            hammered: BTreeSet::new(),
            evidence: Vec::new(),
        }
    }

    /// The evidence log, one record per completed or failed experiment.
    pub fn evidence(&self) -> &[EvidenceRecord] {
        &self.evidence
    }

    /// Releases the device, for example to compare against ground truth
    /// after the inference is done.
    pub fn into_device(self) -> BlindDevice {
        self.dev
    }

    fn note(&mut self, op: &str, outcome: impl fmt::Display, detail: impl Into<String>) {
        self.evidence.push(EvidenceRecord {
            op: op.to_string(),
            outcome: outcome.to_string(),
            detail: detail.into(),
        });
    }

    // ------------------------------------------------------------------
    // Shared infrastructure
    // ------------------------------------------------------------------

    /// Rows the scout may profile. The top of the address space is
    /// reserved for junk and churn rows so their disturbance can never
    /// reach a probe, and enough clearance is left that a full REF drain
    /// fits between two passes of the regular walk over the scouted band.
    fn scout_band(&self) -> std::ops::Range<usize> {
        let rows = self.dev.rows_per_bank();
        64..(64 + rows * 6 / 10)
    }

    /// Rows reserved for traffic whose neighbors must never be probes.
    fn far_rows(&self, count: usize) -> Vec<usize> {
        let rows = self.dev.rows_per_bank();
        (0..count).map(|i| rows - 8 * (i + 1)).collect()
    }

    /// One far row as a logical address, for junk traffic.
    fn junk_row(&self) -> Result<usize> {
        self.dev.to_logical(self.far_rows(1)[0])
    }

    /// Scouts (and caches) `count` two-row groups in `bank`: weak flank
    /// rows around one enclosed aggressor.
    fn rr_groups(&mut self, bank: usize, count: usize) -> Result<Vec<RowGroup>> {
        let cached = self.groups.get(&bank).map_or(0, Vec::len);
        if cached < count {
            let layout = GroupLayout::flanking_pair(1)?;
            let band = self.scout_band();
            let found = find_row_groups(
                &mut self.dev,
                bank,
                band,
                layout,
                count,
                &self.config.scout,
            )?;
            self.groups.insert(bank, found);
        }
        Ok(self.groups[&bank][..count].to_vec())
    }

    /// Scouts `count` two-row groups whose anchors sit at least `min_sep`
    /// physical rows apart, so one group's aggressor traffic, refresh
    /// span, and disturbance can never reach another group's probes.
    fn separated_groups(
        &mut self,
        bank: usize,
        count: usize,
        min_sep: usize,
    ) -> Result<Vec<RowGroup>> {
        let mut want = count * 2;
        loop {
            let mut pool = match self.rr_groups(bank, want) {
                Ok(pool) => pool,
                // The band cannot supply `want` raw groups; retry with
                // everything it has before giving up.
                Err(Error::InsufficientGroups { found, .. }) if found >= count => {
                    self.rr_groups(bank, found)?
                }
                Err(e) => return Err(e),
            };
            let exhausted = pool.len() < want;
            pool.sort_by_key(|g| g.anchor);
            let mut picked: Vec<RowGroup> = Vec::new();
            for g in pool {
                let far_enough = picked
                    .last()
                    .is_none_or(|p| g.anchor.abs_diff(p.anchor) >= min_sep);
                if far_enough {
                    picked.push(g);
                }
            }
            if picked.len() >= count {
                picked.truncate(count);
                return Ok(picked);
            }
            if exhausted || want >= count * 6 {
                return Err(Error::InsufficientGroups {
                    found: picked.len(),
                    needed: count,
                });
            }
            want += count * 2;
        }
    }

    /// Regular refresh schedule, inferred once and cached.
    fn schedule(&mut self) -> Result<RegularSchedule> {
        if let Some(s) = &self.schedule {
            return Ok(s.clone());
        }
        let group = self.rr_groups(0, 1)?.remove(0);
        let sched = infer_refresh_schedule(&mut self.dev, &group)?;
        self.note(
            "refresh-schedule",
            format!(
                "period {} REFs, {} rows/REF",
                sched.period_refs, sched.rows_per_ref
            ),
            format!("anchor {} slack {}", sched.anchor, sched.anchor_slack),
        );
        self.schedule = Some(sched.clone());
        Ok(sched)
    }

    /// Cached mitigation cadence, measuring it first if needed.
    fn ensure_ratio(&mut self) -> Result<RefRatio> {
        if let Some(r) = self.ratio {
            return Ok(r);
        }
        let probes = self.rr_groups(0, 1)?;
        self.find_trr_ref_ratio(&probes)
    }

    /// Issues `n` REF commands back to back.
    fn refs(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            self.dev.issue(DramCommand::Ref)?;
        }
        Ok(())
    }

    /// Issues REFs until the issued count is `rel` modulo `k`, crossing at
    /// least one capable REF on the way (it issues a full cycle when
    /// already aligned). With `rel` equal to the capable phase the last
    /// REF issued is itself the capable one.
    fn refs_past_phase(&mut self, k: u64, rel: u64) -> Result<()> {
        self.refs(1)?;
        while self.dev.refs_issued() % k != rel % k {
            self.refs(1)?;
        }
        Ok(())
    }

    /// Issues REFs until the next `horizon` REFs are guaranteed not to
    /// regularly refresh any of `avoid` (physical rows).
    fn sync_refs(&mut self, avoid: &[usize], horizon: u64) -> Result<()> {
        let sched = self.schedule()?;
        let period = sched.period_refs as u64;
        let n0 = self.dev.refs_issued();
        for skip in 0..=(2 * period) {
            let clear = avoid
                .iter()
                .all(|&row| !sched.covers_in_range(n0 + skip + 1, n0 + skip + horizon, row));
            if clear {
                return self.refs(skip);
            }
        }
        Err(Error::Inconclusive(format!(
            "no {horizon}-REF window clear of {} probe rows within two walk periods",
            avoid.len()
        )))
    }

    /// Repeated activate cycles of one logical row.
    fn hammer(&mut self, bank: usize, logical_row: usize, count: u64) -> Result<()> {
        if count > 0 {
            self.hammered.insert((bank, logical_row));
        }
        for _ in 0..count {
            hammer_cycle(&mut self.dev, bank, logical_row)?;
        }
        Ok(())
    }

    fn write_probe(&mut self, bank: usize, logical_row: usize) -> Result<()> {
        write_row(&mut self.dev, bank, logical_row, &DataPattern::AllOnes)
    }

    /// Whether the row still holds the pattern written by `write_probe`.
    fn probe_intact(&mut self, bank: usize, logical_row: usize) -> Result<bool> {
        let data = read_row(&mut self.dev, bank, logical_row)?;
        let expect = DataPattern::AllOnes.to_words(self.dev.row_bits());
        Ok(data == expect)
    }

    /// Whether any of the group's weak flank rows survived.
    fn any_flank_intact(&mut self, group: &RowGroup) -> Result<bool> {
        let rows = group.logical_rows.clone();
        let mut alive = false;
        for row in rows {
            if self.probe_intact(group.bank, row)? {
                alive = true;
            }
        }
        Ok(alive)
    }

    fn write_flanks(&mut self, group: &RowGroup) -> Result<()> {
        let rows = group.logical_rows.clone();
        for row in rows {
            self.write_probe(group.bank, row)?;
        }
        Ok(())
    }

    /// The single enclosed aggressor of a group, as a logical row.
    fn aggressor_of(&self, group: &RowGroup) -> Result<usize> {
        let enclosed = group.enclosed_physical_rows();
        let phys = enclosed
            .first()
            .copied()
            .ok_or_else(|| Error::invalid("probes", "group has no enclosed aggressor row"))?;
        self.dev.to_logical(phys)
    }

    fn wait(&mut self, ms: u64) -> Result<()> {
        wait_ms(&mut self.dev, ms)
    }

    fn settle(&mut self, retention_ms: u64) -> Result<()> {
        let rest = retention_ms - retention_ms / 2 + self.config.settle_margin_ms;
        self.wait(rest)
    }

    // ------------------------------------------------------------------
    // Cadence
    // ------------------------------------------------------------------

    /// Measures how often the mitigation gets to act, in REFs, and whether
    /// its refreshes are paid out on the acting REF or deferred to a later
    /// one.
    ///
    /// Each iteration arms one probe group, hammers its aggressor, issues
    /// exactly one REF, and checks whether the probes were refreshed.
    /// Iterations whose REF slot regularly refreshes a probe are
    /// discarded. The cadence is the GCD of the gaps between refreshing
    /// REF indices.
    pub fn find_trr_ref_ratio(&mut self, probes: &[RowGroup]) -> Result<RefRatio> {
        let group = probes
            .iter()
            .find(|g| !g.enclosed_physical_rows().is_empty())
            .cloned()
            .ok_or_else(|| Error::invalid("probes", "need a group with an enclosed aggressor"))?;
        let sched = self.schedule()?;
        let aggressor = self.aggressor_of(&group)?;
        let t = group.retention_ms;
        let hammers = self.config.ratio_hammers;
        let iterations = self.config.ratio_iterations;
        let probe_phys = group.physical_rows.clone();

        let mut hits: Vec<u64> = Vec::new();
        let mut discarded = 0usize;
        for _ in 0..iterations {
            self.write_flanks(&group)?;
            self.wait(t / 2)?;
            self.hammer(group.bank, aggressor, hammers)?;
            let ref_index = self.dev.refs_issued() + 1;
            let covered = probe_phys.iter().any(|&r| sched.covers(ref_index, r));
            self.refs(1)?;
            self.settle(t)?;
            let survived = self.any_flank_intact(&group)?;
            if covered {
                discarded += 1;
                continue;
            }
            if survived {
                hits.push(ref_index);
            }
        }
        if hits.len() < 2 {
            self.note(
                "trr-ref-ratio",
                "no mitigation refresh observed",
                format!("{iterations} iterations, {discarded} discarded"),
            );
            return Err(Error::NoTrrDetected { iterations });
        }
        let mut k = 0u64;
        for pair in hits.windows(2) {
            k = gcd(k, pair[1] - pair[0]);
        }
        self.capable_phase = hits[0] % k;
        let ratio = if k >= 2 && self.deferral_observed(&group, k)? {
            RefRatio::Deferred(k)
        } else {
            RefRatio::Every(k)
        };
        self.ratio = Some(ratio);
        let phase = self.capable_phase;
        self.note(
            "trr-ref-ratio",
            ratio,
            format!(
                "{} refreshing REFs over {iterations} iterations, {discarded} discarded, phase {phase}",
                hits.len(),
            ),
        );
        Ok(ratio)
    }

    /// Whether a detection's refresh lands on a later, ordinary REF
    /// instead of the acting REF itself.
    ///
    /// The acting REF is made to fire while the tracker has nothing
    /// recorded; the aggressor is hammered only afterwards, and a single
    /// ordinary REF follows. Only a mitigation that armed a deferred
    /// action on the empty acting REF refreshes the probes on that
    /// ordinary REF.
    fn deferral_observed(&mut self, group: &RowGroup, k: u64) -> Result<bool> {
        let aggressor = self.aggressor_of(group)?;
        let far = self.junk_row()?;
        let t = group.retention_ms;
        let phase = self.capable_phase;
        let burst = self.config.burst_acts;
        let mut deferred_votes = 0usize;
        for _ in 0..self.config.defer_trials {
            self.sync_refs(&group.physical_rows, 2 * k + 4)?;
            // Point any sticky sampling slot at a far row and fill any
            // activation window with it, so nothing recorded before this
            // trial can refresh the probes.
            self.hammer(group.bank, far, burst)?;
            self.write_flanks(group)?;
            self.refs(k + 1)?;
            self.wait(t / 2)?;
            self.refs_past_phase(k, phase)?;
            self.hammer(group.bank, aggressor, 60)?;
            self.refs(1)?;
            self.settle(t)?;
            if self.any_flank_intact(group)? {
                deferred_votes += 1;
            }
        }
        Ok(deferred_votes * 2 > self.config.defer_trials)
    }

    // ------------------------------------------------------------------
    // Neighbor span
    // ------------------------------------------------------------------

    /// Determines which neighbors of a detected aggressor get refreshed.
    ///
    /// Each trial keeps one scouted weak row P as the probe and hammers
    /// the row at P - d into the tracker, so the probe sits at offset d
    /// from the aggressor; after a drain the probe survives exactly when
    /// d is in the refresh span. Every (offset, aggressor parity)
    /// combination gets its own far-apart group, so stale tracker entries
    /// from one trial can never refresh another trial's probe. Survivor
    /// sets split by aggressor parity separate a fixed offset set from
    /// pair-partner refreshing, which mirrors between parities.
    pub fn find_neighbor_span(&mut self) -> Result<SpanResult> {
        let k = self.ensure_ratio()?.period();
        let max_d = self.config.span_max_offset;
        let offsets: Vec<i32> = (-max_d..=max_d).filter(|&d| d != 0).collect();
        let needed = offsets.len();
        // An odd separation keeps consecutive anchors from locking onto
        // one parity when most rows in the band are weak; the loop widens
        // the pool until both parities can cover every offset.
        let mut want = 2 * needed;
        let (even_probes, odd_probes) = loop {
            let groups = self.separated_groups(0, want, 13)?;
            let mut even: Vec<RowGroup> = Vec::new();
            let mut odd: Vec<RowGroup> = Vec::new();
            for g in groups {
                if g.physical_rows[0] % 2 == 0 {
                    even.push(g);
                } else {
                    odd.push(g);
                }
            }
            if even.len() >= needed && odd.len() >= needed {
                break (even, odd);
            }
            if want >= 5 * needed {
                return Err(Error::Inconclusive(
                    "too few probe groups of one parity for the span sweep".into(),
                ));
            }
            want += needed;
        };
        let mut even_set: BTreeSet<i32> = BTreeSet::new();
        let mut odd_set: BTreeSet<i32> = BTreeSet::new();
        let protect: Vec<(usize, usize)> = even_probes
            .iter()
            .chain(odd_probes.iter())
            .flat_map(|g| g.logical_rows.iter().map(move |&r| (g.bank, r)))
            .collect();
        reset_trr_state(&mut self.dev, &protect)?;
        for probes in [&even_probes, &odd_probes] {
            for (i, &d) in offsets.iter().enumerate() {
                let group = probes[i].clone();
                let probe_phys = group.physical_rows[0];
                let probe = group.logical_rows[0];
                let aggressor_phys = (probe_phys as i64 - d as i64) as usize;
                let aggressor = self.dev.to_logical(aggressor_phys)?;
                let t = group.retention_ms;
                self.sync_refs(&[probe_phys], 4 * k + 6)?;
                // The burst claims the tracker before the probe is
                // written; writing afterwards clears the disturbance the
                // burst deposited on the aggressor's neighbors.
                self.hammer(group.bank, aggressor, self.config.span_hammers)?;
                self.write_probe(group.bank, probe)?;
                self.refs(k + 1)?;
                self.wait(t / 2)?;
                self.hammer(group.bank, aggressor, 60)?;
                self.refs(2 * k + 1)?;
                self.settle(t)?;
                if self.probe_intact(group.bank, probe)? {
                    if aggressor_phys % 2 == 0 {
                        even_set.insert(d);
                    } else {
                        odd_set.insert(d);
                    }
                }
            }
        }
        if even_set.is_empty() && odd_set.is_empty() {
            self.note("neighbor-span", "no refreshed neighbor found", "");
            return Err(Error::NoTrrDetected {
                iterations: 2 * needed,
            });
        }
        let result = if even_set == odd_set {
            SpanResult::Offsets(even_set.clone())
        } else if even_set.len() == 1 && odd_set.len() == 1 {
            let e = *even_set.iter().next().unwrap();
            let o = *odd_set.iter().next().unwrap();
            // An even aggressor's pair partner sits at +1, an odd one's
            // at -1.
            if e == 1 && o == -1 {
                SpanResult::Pair
            } else {
                return Err(Error::Inconclusive(format!(
                    "span differs by parity: even {{{e:+}}} vs odd {{{o:+}}}"
                )));
            }
        } else {
            return Err(Error::Inconclusive(format!(
                "span differs by parity: {even_set:?} vs {odd_set:?}"
            )));
        };
        self.note(
            "neighbor-span",
            &result,
            format!("even-parity survivors {even_set:?}, odd-parity survivors {odd_set:?}"),
        );
        Ok(result)
    }

    // ------------------------------------------------------------------
    // Detection kind
    // ------------------------------------------------------------------

    /// Classifies the tracker, caching the verdict.
    ///
    /// A deferred cadence already implies an activation window. Otherwise
    /// two equal back-to-back bursts are issued and the drain is watched:
    /// a counter table detects both aggressors in turn, a sampler only
    /// re-emits the last row it sampled, and a first-come window only
    /// ever holds the first.
    fn detection_kind(&mut self) -> Result<InferredKind> {
        if let Some(k) = self.kind {
            return Ok(k);
        }
        let ratio = self.ensure_ratio()?;
        if let RefRatio::Deferred(_) = ratio {
            self.kind = Some(InferredKind::Window);
            self.note(
                "detection-kind",
                InferredKind::Window,
                "deferred cadence implies an activation window",
            );
            return Ok(InferredKind::Window);
        }
        let k = ratio.period();
        let groups = self.separated_groups(0, 2, 12)?;
        let (g1, g2) = (groups[0].clone(), groups[1].clone());
        let a1 = self.aggressor_of(&g1)?;
        let a2 = self.aggressor_of(&g2)?;
        let drain = 2 * k * (self.config.capacity_max as u64 + 4);
        for attempt in 0..3u64 {
            let mut survived = [false; 2];
            for (slot, probe_group) in [&g1, &g2].into_iter().enumerate() {
                let t = probe_group.retention_ms;
                self.sync_refs(&probe_group.physical_rows, drain + 2)?;
                let burst = self.config.burst_acts + attempt;
                self.hammer(g1.bank, a1, burst)?;
                self.hammer(g2.bank, a2, burst)?;
                self.write_flanks(probe_group)?;
                self.wait(t / 2)?;
                self.refs(drain)?;
                self.settle(t)?;
                survived[slot] = self.any_flank_intact(probe_group)?;
            }
            let verdict = match (survived[0], survived[1]) {
                (true, true) => Some(InferredKind::Counter),
                (false, true) => Some(InferredKind::Sampling),
                (true, false) => Some(InferredKind::Window),
                (false, false) => None,
            };
            if let Some(kind) = verdict {
                self.kind = Some(kind);
                self.note(
                    "detection-kind",
                    kind,
                    format!(
                        "first-burst probe survived={}, second-burst probe survived={}",
                        survived[0], survived[1]
                    ),
                );
                return Ok(kind);
            }
        }
        Err(Error::Inconclusive(
            "neither aggressor of an equal double burst was ever refreshed".into(),
        ))
    }

    // ------------------------------------------------------------------
    // Capacity
    // ------------------------------------------------------------------

    /// How many aggressors the tracker can follow at once.
    ///
    /// On counter tables this sweeps N simultaneous aggressors and finds
    /// the largest N where every one of them eventually draws a refresh.
    /// The double-burst experiment already pins samplers to a single
    /// followed row. Activation windows refresh one recorded row per
    /// action, so a simultaneous capacity is not observable there and the
    /// field stays unknown.
    pub fn find_tracker_capacity(&mut self) -> Result<usize> {
        match self.detection_kind()? {
            InferredKind::Sampling => {
                self.note(
                    "tracker-capacity",
                    1,
                    "double-burst test: only the most recently sampled row is followed",
                );
                return Ok(1);
            }
            InferredKind::Window => {
                return Err(Error::Inconclusive(
                    "an activation window refreshes one recorded row per action; \
                     simultaneous capacity is not observable"
                        .into(),
                ));
            }
            InferredKind::Counter => {}
            other => {
                return Err(Error::Inconclusive(format!(
                    "capacity sweep needs a classified tracker, got {other}"
                )));
            }
        }
        let k = self.ensure_ratio()?.period();
        let max_n = self.config.capacity_max;
        let groups = self.separated_groups(0, max_n + 1, 12)?;
        let mut lo = 2usize;
        let mut hi = max_n;
        let mut best = 1usize;
        while lo <= hi {
            let mid = (lo + hi) / 2;
            if self.capacity_trial(&groups[..mid + 1], k)? {
                best = mid;
                lo = mid + 1;
            } else {
                hi = mid - 1;
            }
        }
        self.note(
            "tracker-capacity",
            best,
            format!("largest simultaneous-aggressor count fully refreshed, bound {max_n}"),
        );
        Ok(best)
    }

    /// Whether all but the last of `groups` get refreshed when hammered
    /// together: `groups.len() - 1` simultaneous aggressors.
    fn capacity_trial(&mut self, groups: &[RowGroup], k: u64) -> Result<bool> {
        let groups = &groups[..groups.len() - 1];
        let n = groups.len() as u64;
        let protect: Vec<(usize, usize)> = groups
            .iter()
            .flat_map(|g| g.logical_rows.iter().map(move |&r| (g.bank, r)))
            .collect();
        reset_trr_state(&mut self.dev, &protect)?;
        let drain = 2 * k * (2 * n + 6);
        let probes_phys: Vec<usize> = groups.iter().map(|g| g.physical_rows[1]).collect();
        self.sync_refs(&probes_phys, drain + 2)?;
        let t = groups.iter().map(|g| g.retention_ms).max().unwrap();
        for g in groups {
            self.write_probe(g.bank, g.logical_rows[1])?;
        }
        self.wait(t / 2)?;
        for g in groups {
            let aggressor = self.aggressor_of(g)?;
            self.hammer(g.bank, aggressor, self.config.capacity_hammers)?;
        }
        self.refs(drain)?;
        self.settle(t)?;
        let mut all = true;
        for g in groups {
            if !self.probe_intact(g.bank, g.logical_rows[1])? {
                all = false;
            }
        }
        Ok(all)
    }

    // ------------------------------------------------------------------
    // Eviction policy
    // ------------------------------------------------------------------

    /// Whether a full tracking table evicts the least-hammered entry.
    ///
    /// One row is hammered lightly, then one more row than the table can
    /// hold is hammered heavily. Under least-count replacement the light
    /// row is pushed out every time and its probe never survives.
    pub fn test_eviction_policy(&mut self) -> Result<EvictionVerdict> {
        match self.detection_kind()? {
            InferredKind::Counter => {}
            other => {
                self.note(
                    "eviction-policy",
                    EvictionVerdict::NotApplicable,
                    format!("tracker class {other} keeps no evictable table"),
                );
                return Ok(EvictionVerdict::NotApplicable);
            }
        }
        let k = self.ensure_ratio()?.period();
        let groups = self.separated_groups(0, 17, 12)?;
        let cold = groups[0].clone();
        let cold_aggressor = self.aggressor_of(&cold)?;
        let cold_probe = cold.logical_rows[1];
        let t = cold.retention_ms;
        let drain = 2 * k * 40;
        let iterations = self.config.evict_iterations;
        let mut survivals = 0usize;
        for _ in 0..iterations {
            let protect: Vec<(usize, usize)> =
                cold.logical_rows.iter().map(|&r| (cold.bank, r)).collect();
            reset_trr_state(&mut self.dev, &protect)?;
            self.sync_refs(&[cold.physical_rows[1]], drain + 2)?;
            self.write_probe(cold.bank, cold_probe)?;
            self.wait(t / 2)?;
            self.hammer(cold.bank, cold_aggressor, self.config.evict_cold_hammers)?;
            for g in &groups[1..] {
                let aggressor = self.aggressor_of(g)?;
                self.hammer(g.bank, aggressor, self.config.evict_hot_hammers)?;
            }
            self.refs(drain)?;
            self.settle(t)?;
            if self.probe_intact(cold.bank, cold_probe)? {
                survivals += 1;
            }
        }
        let verdict = if survivals == 0 {
            EvictionVerdict::MinCounter
        } else {
            EvictionVerdict::Other
        };
        self.note(
            "eviction-policy",
            verdict,
            format!("lightly hammered row survived {survivals} of {iterations} duels"),
        );
        Ok(verdict)
    }

    // ------------------------------------------------------------------
    // Reset on detect
    // ------------------------------------------------------------------

    /// Whether a detection clears the detected row's standing.
    ///
    /// Two aggressors with unequal counts race inside each drain. The
    /// drain spans four mitigation-capable REFs, which hold exactly two
    /// max-count detections no matter how the capable phase falls. If a
    /// detection resets the winner, the first one claims the heavier row
    /// and the second falls to the lighter row, so both probes come back
    /// refreshed; if standing is retained, both detections land on the
    /// heavier row and the lighter probe decays. The race runs on rows
    /// this session has never hammered, primed well above any counts
    /// earlier experiments left behind, so leftover standing from those
    /// rows cannot outbid either contender.
    pub fn test_reset_on_detect(&mut self) -> Result<ResetVerdict> {
        match self.detection_kind()? {
            InferredKind::Counter => {}
            other => {
                self.note(
                    "reset-on-detect",
                    ResetVerdict::NotApplicable,
                    format!("tracker class {other} keeps no per-row standing"),
                );
                return Ok(ResetVerdict::NotApplicable);
            }
        }
        let k = self.ensure_ratio()?.period();
        let mut want = 4;
        let (gx, gy) = loop {
            let pool = self.separated_groups(0, want, 12)?;
            let mut fresh: Vec<RowGroup> = Vec::new();
            for g in pool {
                let aggressor = self.aggressor_of(&g)?;
                if !self.hammered.contains(&(g.bank, aggressor)) {
                    fresh.push(g);
                }
            }
            if fresh.len() >= 2 {
                break (fresh.remove(0), fresh.remove(0));
            }
            if want >= 48 {
                return Err(Error::Inconclusive(
                    "no unhammered row groups left for the detection race".into(),
                ));
            }
            want += 4;
        };
        let protect: Vec<(usize, usize)> = [&gx, &gy]
            .iter()
            .flat_map(|g| g.logical_rows.iter().map(move |&r| (g.bank, r)))
            .collect();
        reset_trr_state(&mut self.dev, &protect)?;
        let ax = self.aggressor_of(&gx)?;
        let ay = self.aggressor_of(&gy)?;
        let px = gx.logical_rows[1];
        let py = gy.logical_rows[1];
        let t = gx.retention_ms.max(gy.retention_ms);
        let iterations = self.config.reset_iterations;
        self.hammer(gx.bank, ax, self.config.reset_prime_hammers)?;
        self.hammer(gy.bank, ay, self.config.reset_prime_hammers)?;
        let mut x_refreshed = 0usize;
        let mut y_refreshed = 0usize;
        for _ in 0..iterations {
            self.sync_refs(&[gx.physical_rows[1], gy.physical_rows[1]], 4 * k + 6)?;
            self.hammer(gx.bank, ax, self.config.reset_cold_hammers)?;
            self.hammer(gy.bank, ay, self.config.reset_hot_hammers)?;
            self.write_probe(gx.bank, px)?;
            self.write_probe(gy.bank, py)?;
            self.wait(t / 2)?;
            self.refs(4 * k + 2)?;
            self.settle(t)?;
            if self.probe_intact(gx.bank, px)? {
                x_refreshed += 1;
            }
            if self.probe_intact(gy.bank, py)? {
                y_refreshed += 1;
            }
        }
        let verdict = if 3 * x_refreshed >= 2 * iterations && 3 * y_refreshed >= 2 * iterations {
            ResetVerdict::Resets
        } else if 3 * x_refreshed <= iterations && 3 * y_refreshed >= 2 * iterations {
            ResetVerdict::Retains
        } else {
            return Err(Error::Inconclusive(format!(
                "detection race drew no clear pattern (lighter row refreshed in \
                 {x_refreshed}, heavier in {y_refreshed} of {iterations} drains)"
            )));
        };
        self.note(
            "reset-on-detect",
            verdict,
            format!(
                "lighter row drew a refresh in {x_refreshed} and the heavier in \
                 {y_refreshed} of {iterations} double-detection drains"
            ),
        );
        Ok(verdict)
    }

    // ------------------------------------------------------------------
    // Entry persistence
    // ------------------------------------------------------------------

    /// How long tracker state about an aggressor outlives the hammering.
    ///
    /// The aggressor is hammered once, then only REFs are issued, paced
    /// in blocks with decay waits in between. The waits are sized so the
    /// probes survive a whole phase only if mitigation refreshes keep
    /// arriving; the regular walk alone leaves gaps longer than the
    /// retention time. A second phase injects displacing traffic to
    /// separate state that lives until overwritten from state that truly
    /// persists.
    pub fn test_entry_persistence(&mut self) -> Result<PersistenceLabel> {
        let group = self.rr_groups(0, 1)?.remove(0);
        let sched = self.schedule()?;
        self.ensure_ratio()?;
        let aggressor = self.aggressor_of(&group)?;
        let far = self.junk_row()?;
        let protect: Vec<(usize, usize)> = group
            .logical_rows
            .iter()
            .map(|&r| (group.bank, r))
            .collect();
        reset_trr_state(&mut self.dev, &protect)?;

        self.hammer(group.bank, aggressor, self.config.span_hammers)?;
        self.write_flanks(&group)?;
        let phase1 = self.quiet_blocks_survival(&group, &sched)?;

        self.hammer(group.bank, far, self.config.burst_acts)?;
        self.write_flanks(&group)?;
        let phase2 = self.quiet_blocks_survival(&group, &sched)?;

        let label = match (phase1, phase2) {
            (true, true) => PersistenceLabel::Indefinite,
            (true, false) => PersistenceLabel::IndefiniteUntilResample,
            (false, _) => PersistenceLabel::Cleared,
        };
        self.note(
            "entry-persistence",
            label,
            format!("probes alive after quiet phase: {phase1}; after displacing burst: {phase2}"),
        );
        Ok(label)
    }

    /// Issues a long run of REFs in blocks with decay waits in between
    /// and reports whether any probe flank survived to the end.
    ///
    /// The wait after each block is sized so consecutive passes of the
    /// regular walk over a probe sit further apart than its retention
    /// time. Only mitigation refreshes arriving in most blocks can then
    /// keep a probe alive.
    fn quiet_blocks_survival(&mut self, group: &RowGroup, sched: &RegularSchedule) -> Result<bool> {
        let t = group.retention_ms;
        let block = self.config.persistence_block_refs;
        let wait_ms = (t + 60) * block / sched.period_refs as u64 + 1;
        let mut issued = 0u64;
        while issued < self.config.persistence_refs {
            self.refs(block)?;
            issued += block;
            self.wait(wait_ms)?;
        }
        self.any_flank_intact(group)
    }

    // ------------------------------------------------------------------
    // Scope
    // ------------------------------------------------------------------

    /// Whether tracking state is kept per bank (`true`) or shared across
    /// banks (`false`).
    ///
    /// An aggressor in bank 0 is armed, then a heavier stream of distinct
    /// rows churns through bank 1 and a still heavier aggressor in bank 1
    /// tops it off. Shared state gets displaced or outranked by the
    /// bank 1 traffic and only the bank 1 probe survives; per-bank state
    /// is untouched and the bank 0 probe survives.
    pub fn test_scope(&mut self) -> Result<bool> {
        if self.dev.banks() < 2 {
            return Err(Error::Inconclusive(
                "scope test needs at least two banks".into(),
            ));
        }
        let k = self.ensure_ratio()?.period();
        let g0 = self.rr_groups(0, 1)?.remove(0);
        let g1 = self.rr_groups(1, 1)?.remove(0);
        let protect: Vec<(usize, usize)> = [&g0, &g1]
            .iter()
            .flat_map(|g| g.logical_rows.iter().map(move |&r| (g.bank, r)))
            .collect();
        reset_trr_state(&mut self.dev, &protect)?;
        let a0 = self.aggressor_of(&g0)?;
        let a1 = self.aggressor_of(&g1)?;
        let t = g0.retention_ms.max(g1.retention_ms);
        let churn_rows = self.far_rows(8);
        let avoid: Vec<usize> = g0
            .physical_rows
            .iter()
            .chain(g1.physical_rows.iter())
            .copied()
            .collect();
        for _ in 0..3u32 {
            self.sync_refs(&avoid, 3 * k + 4)?;
            self.hammer(g0.bank, a0, self.config.span_hammers)?;
            for &row in &churn_rows {
                let logical = self.dev.to_logical(row)?;
                self.hammer(g1.bank, logical, 3200)?;
            }
            self.hammer(g1.bank, a1, 4000)?;
            self.write_flanks(&g0)?;
            self.write_flanks(&g1)?;
            self.wait(t / 2)?;
            self.refs(2 * k + 1)?;
            self.settle(t)?;
            let p0_alive = self.any_flank_intact(&g0)?;
            let p1_alive = self.any_flank_intact(&g1)?;
            match (p0_alive, p1_alive) {
                (true, _) => {
                    self.note(
                        "scope",
                        "per-bank",
                        format!(
                            "bank 0 probe survived cross-bank churn (bank 1 probe alive: {p1_alive})"
                        ),
                    );
                    return Ok(true);
                }
                (false, true) => {
                    self.note(
                        "scope",
                        "shared",
                        "bank 1 churn displaced the bank 0 aggressor",
                    );
                    return Ok(false);
                }
                (false, false) => continue,
            }
        }
        Err(Error::Inconclusive(
            "neither bank's probe drew a refresh in the cross-bank race".into(),
        ))
    }

    // ------------------------------------------------------------------
    // Sampling guarantee
    // ------------------------------------------------------------------

    /// The activation count within which a sampling tracker is guaranteed
    /// to observe a row at least once.
    ///
    /// Sample points sit at a fixed stride in the activation stream. The
    /// experiment hunts sample points by scanning one activation of each
    /// of several instrumented rows per trial and noting which row's
    /// probes survive, takes the GCD of the observed positions' gaps,
    /// and confirms the stride with aligned positive and negative bursts.
    pub fn find_sampling_guarantee(&mut self) -> Result<usize> {
        match self.detection_kind()? {
            InferredKind::Sampling => {}
            other => return Err(Error::NotASampler(other.to_string())),
        }
        let k = self.ensure_ratio()?.period();
        let phase = self.capable_phase;
        let groups = self.separated_groups(0, self.config.guarantee_scan_groups, 12)?;
        let protect: Vec<(usize, usize)> = groups
            .iter()
            .flat_map(|g| g.logical_rows.iter().map(move |&r| (g.bank, r)))
            .collect();
        reset_trr_state(&mut self.dev, &protect)?;
        // From here on all activations stay in bank 0, so stream
        // positions advance in lockstep with the device's activation
        // counter no matter how the streams are scoped.
        let far = self.junk_row()?;
        let avoid: Vec<usize> = groups
            .iter()
            .flat_map(|g| g.physical_rows.iter().copied())
            .collect();
        let t = groups.iter().map(|g| g.retention_ms).max().unwrap();

        let mut positions: Vec<u64> = Vec::new();
        let mut poisoned: Option<usize> = None;
        let mut trial = 0usize;
        for _attempt in 0..3u32 {
            let target = positions.len() + self.config.guarantee_hits;
            while positions.len() < target && trial < self.config.guarantee_scan_trials {
                trial += 1;
                self.sync_refs(&avoid, 2 * k + 4)?;
                for g in &groups.clone() {
                    self.write_flanks(g)?;
                }
                self.wait(t / 2)?;
                self.hammer(0, far, (trial % 17) as u64)?;
                let mut scan_pos = Vec::with_capacity(groups.len());
                for g in &groups.clone() {
                    let aggressor = self.aggressor_of(g)?;
                    self.hammer(0, aggressor, 1)?;
                    scan_pos.push(self.dev.acts_issued());
                }
                self.refs_past_phase(k, phase)?;
                self.settle(t)?;
                let mut fresh = Vec::new();
                for (i, g) in groups.clone().iter().enumerate() {
                    if self.any_flank_intact(g)? && poisoned != Some(i) {
                        fresh.push(i);
                    }
                }
                // More than one fresh survivor means a scheduling slip;
                // a single one is a sample point at that row's scan slot.
                if fresh.len() == 1 {
                    positions.push(scan_pos[fresh[0]]);
                    poisoned = Some(fresh[0]);
                }
            }
            if positions.len() < 2 {
                return Err(Error::NoTrrDetected { iterations: trial });
            }
            let mut sorted = positions.clone();
            sorted.sort_unstable();
            let mut g = 0u64;
            for pair in sorted.windows(2) {
                g = gcd(g, pair[1] - pair[0]);
            }
            if g < 2 || g > self.config.guarantee_max {
                continue;
            }
            let beta = sorted[0] % g;
            if self.confirm_guarantee(&groups, k, phase, g, beta, &avoid, &mut poisoned)? {
                self.note(
                    "sampling-guarantee",
                    g,
                    format!(
                        "{} sample points over {trial} scan trials, stride confirmed",
                        positions.len(),
                    ),
                );
                return Ok(g as usize);
            }
        }
        Err(Error::Inconclusive(
            "sample-point stride failed aligned confirmation".into(),
        ))
    }

    /// Confirms a candidate sample stride `g` with aligned bursts: a
    /// burst of `g` activations starting right after a sample point must
    /// always be observed, and a burst of `g - 1` in the same position
    /// never is.
    #[allow(clippy::too_many_arguments)]
    fn confirm_guarantee(
        &mut self,
        groups: &[RowGroup],
        k: u64,
        phase: u64,
        g: u64,
        beta: u64,
        avoid: &[usize],
        poisoned: &mut Option<usize>,
    ) -> Result<bool> {
        let far = self.junk_row()?;
        for round in 0..self.config.guarantee_verify_trials {
            for positive in [true, false] {
                let mut idx = round % groups.len();
                if Some(idx) == *poisoned {
                    idx = (idx + 1) % groups.len();
                }
                let group = groups[idx].clone();
                let aggressor = self.aggressor_of(&group)?;
                let t = group.retention_ms;
                self.sync_refs(avoid, 2 * k + 4)?;
                // Pad with far activations so the last one lands exactly
                // on a sample point; the aggressor burst then spans the
                // next point (positive) or stops one short (negative).
                let pos = self.dev.acts_issued();
                let mut pad = (beta + g - pos % g) % g;
                if pad == 0 {
                    pad = g;
                }
                self.hammer(0, far, pad)?;
                self.hammer(0, aggressor, if positive { g } else { g - 1 })?;
                self.write_flanks(&group)?;
                *poisoned = if positive { Some(idx) } else { None };
                self.wait(t / 2)?;
                self.refs_past_phase(k, phase)?;
                self.settle(t)?;
                let alive = self.any_flank_intact(&group)?;
                if alive != positive {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    // ------------------------------------------------------------------
    // Window size
    // ------------------------------------------------------------------

    /// How many activations after a mitigation action the tracker keeps
    /// recording before it goes blind until the next action.
    ///
    /// A single aggressor activation is placed after `i` junk activations
    /// so it occupies record slot `i`; it can only draw a refresh if the
    /// record still had room. Each mitigation action consumes one walk
    /// slot of the record, so batches of hammer-and-drain cycles sweep
    /// the walk until either the aggressor's slot comes up (probe
    /// survives) or every residue has been consumed without a survival.
    pub fn find_window_size(&mut self) -> Result<usize> {
        match self.detection_kind()? {
            InferredKind::Window => {}
            other => return Err(Error::NotWindowBased(other.to_string())),
        }
        let group = self.rr_groups(0, 1)?.remove(0);
        let mut lo = 1usize;
        let mut hi = self.config.window_max;
        let mut best = 0usize;
        while lo <= hi {
            let mid = (lo + hi) / 2;
            if self.window_trial(&group, mid)? {
                best = mid;
                lo = mid + 1;
            } else {
                hi = mid - 1;
            }
        }
        let size = best + 1;
        self.note(
            "window-size",
            size,
            format!("largest recorded offset still refreshed: {best}"),
        );
        Ok(size)
    }

    /// Whether an aggressor recorded after `i` junk activations can still
    /// draw a refresh.
    fn window_trial(&mut self, group: &RowGroup, i: usize) -> Result<bool> {
        let k = self.ensure_ratio()?.period();
        let junk = self.junk_row()?;
        let aggressor = self.aggressor_of(group)?;
        let t = group.retention_ms;
        let residues = i + 1;
        let base_cycles = ((self.config.window_batch_refs - k - 1) / k).max(3) as usize;
        let mut covered = vec![false; residues];
        let mut covered_count = 0usize;
        // Each action consumes one walk slot; tracking relative advances
        // is enough because only full residue coverage matters.
        let mut walk = 0usize;
        let max_batches = 6 * residues.div_ceil(base_cycles - 1) + 16;
        for batch in 0..max_batches {
            // Alternating batch lengths keep the inter-batch walk strides
            // coprime, so every residue is eventually visited no matter
            // how the record length divides the batch size.
            let cycles = base_cycles - (batch % 2);
            if batch > 0 {
                // One action consumes the entries left by the previous
                // batch's probe reads.
                self.refs(k + 1)?;
                walk += 1;
            }
            self.sync_refs(
                &group.physical_rows,
                (k + 1) + cycles as u64 * k + 2,
            )?;
            self.write_flanks(group)?;
            self.refs(k + 1)?;
            walk += 1;
            self.wait(t / 2)?;
            for _ in 0..cycles {
                self.hammer(group.bank, junk, i as u64)?;
                self.hammer(group.bank, aggressor, 1)?;
                self.refs(k)?;
                if !covered[walk % residues] {
                    covered[walk % residues] = true;
                    covered_count += 1;
                }
                walk += 1;
            }
            self.settle(t)?;
            if self.any_flank_intact(group)? {
                return Ok(true);
            }
            if covered_count == residues {
                return Ok(false);
            }
        }
        Err(Error::Inconclusive(format!(
            "walk sweep never covered all {residues} record slots"
        )))
    }

    // ------------------------------------------------------------------
    // Full pipeline
    // ------------------------------------------------------------------

    /// Runs every experiment the device's tracker class admits and
    /// assembles the profile. Individual experiment failures leave their
    /// field unknown and are recorded in the evidence log; only a failure
    /// to scout weak rows at all aborts the pipeline.
    pub fn full_profile(&mut self) -> Result<InferredTrrProfile> {
        let mut profile = InferredTrrProfile::default();
        let probes = self.rr_groups(0, 1)?;
        let sched = self.schedule()?;
        profile.regular_refresh_period_refs = Some(sched.period_refs);

        match self.find_trr_ref_ratio(&probes) {
            Ok(ratio) => profile.trr_to_ref_ratio = Some(ratio),
            Err(Error::NoTrrDetected { .. }) => {
                profile.detection_kind = InferredKind::None;
                profile.evict_policy = EvictionVerdict::NotApplicable;
                profile.reset_on_detect = ResetVerdict::NotApplicable;
                self.note(
                    "full-profile",
                    InferredKind::None,
                    "no mitigation refresh observed; remaining experiments skipped",
                );
                return Ok(profile);
            }
            Err(e) => {
                self.note("full-profile", "cadence failed", e.to_string());
                return Ok(profile);
            }
        }

        match self.find_neighbor_span() {
            Ok(span) => profile.neighbor_span = Some(span),
            Err(e) => self.note("full-profile", "span failed", e.to_string()),
        }

        let kind = match self.detection_kind() {
            Ok(kind) => kind,
            Err(e) => {
                self.note("full-profile", "classification failed", e.to_string());
                return Ok(profile);
            }
        };
        profile.detection_kind = kind;

        match kind {
            InferredKind::Counter => {
                match self.find_tracker_capacity() {
                    Ok(c) => profile.tracker_capacity = Some(c),
                    Err(e) => self.note("full-profile", "capacity failed", e.to_string()),
                }
                match self.test_eviction_policy() {
                    Ok(v) => profile.evict_policy = v,
                    Err(e) => self.note("full-profile", "eviction failed", e.to_string()),
                }
                match self.test_reset_on_detect() {
                    Ok(v) => profile.reset_on_detect = v,
                    Err(e) => self.note("full-profile", "reset test failed", e.to_string()),
                }
            }
            InferredKind::Sampling => {
                profile.tracker_capacity = Some(1);
                profile.evict_policy = EvictionVerdict::NotApplicable;
                profile.reset_on_detect = ResetVerdict::NotApplicable;
                match self.find_sampling_guarantee() {
                    Ok(g) => profile.sampling_guarantee = Some(g),
                    Err(e) => self.note("full-profile", "guarantee failed", e.to_string()),
                }
            }
            InferredKind::Window => {
                profile.evict_policy = EvictionVerdict::NotApplicable;
                profile.reset_on_detect = ResetVerdict::NotApplicable;
                match self.find_window_size() {
                    Ok(w) => profile.window_size = Some(w),
                    Err(e) => self.note("full-profile", "window size failed", e.to_string()),
                }
            }
            InferredKind::None | InferredKind::Unknown => {}
        }

        match self.test_entry_persistence() {
            Ok(p) => profile.entry_persistence = p,
            Err(e) => self.note("full-profile", "persistence failed", e.to_string()),
        }
        match self.test_scope() {
            Ok(per_bank) => profile.per_bank_scope = Some(per_bank),
            Err(e) => self.note("full-profile", "scope failed", e.to_string()),
        }
        Ok(profile)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if a == 0 {
        b
    } else {
        gcd(b % a, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dram::DramDevice;
    use crate::presets::desk_preset;
    use crate::trr::{CounterBasedConfig, SamplingBasedConfig, TrrVariant, WindowBasedConfig, WindowPickPolicy};
    use crate::DeviceConfig;

    fn session_for(cfg: DeviceConfig) -> ProfileSession {
        let dev = BlindDevice::new(DramDevice::new(cfg).unwrap());
        ProfileSession::new(dev, RevengConfig::desk())
    }

    fn session(name: &str, seed: u64) -> ProfileSession {
        session_for(desk_preset(name, seed).unwrap())
    }

    fn measured_ratio(s: &mut ProfileSession) -> RefRatio {
        let probes = s.rr_groups(0, 1).unwrap();
        s.find_trr_ref_ratio(&probes).unwrap()
    }

    #[test]
    fn counter_device_mitigates_every_ninth_ref() {
        assert_eq!(measured_ratio(&mut session("A_TRR1", 11)), RefRatio::Every(9));
    }

    #[test]
    fn sampling_device_mitigates_every_fourth_ref() {
        assert_eq!(measured_ratio(&mut session("B_TRR1", 12)), RefRatio::Every(4));
    }

    #[test]
    fn deferring_window_device_reports_deferred_cadence() {
        assert_eq!(measured_ratio(&mut session("C_TRR3", 13)), RefRatio::Deferred(8));
    }

    #[test]
    fn unmitigated_device_profiles_as_none() {
        let mut s = session("baseline", 14);
        let profile = s.full_profile().unwrap();
        assert_eq!(profile.detection_kind, InferredKind::None);
        assert_eq!(profile.trr_to_ref_ratio, None);
        assert_eq!(profile.evict_policy, EvictionVerdict::NotApplicable);
        assert_eq!(profile.reset_on_detect, ResetVerdict::NotApplicable);
        assert_eq!(profile.regular_refresh_period_refs, Some(8192));
    }

    #[test]
    fn counter_device_refreshes_two_rows_each_side() {
        let mut s = session("A_TRR1", 15);
        let span = s.find_neighbor_span().unwrap();
        assert_eq!(span, SpanResult::Offsets(BTreeSet::from([-2, -1, 1, 2])));
    }

    #[test]
    fn sampling_device_refreshes_adjacent_rows() {
        let mut s = session("B_TRR1", 16);
        let span = s.find_neighbor_span().unwrap();
        assert_eq!(span, SpanResult::Offsets(BTreeSet::from([-1, 1])));
    }

    #[test]
    fn paired_window_device_refreshes_pair_partner() {
        let mut s = session("C_TRR1", 17);
        assert_eq!(s.find_neighbor_span().unwrap(), SpanResult::Pair);
    }

    #[test]
    fn double_burst_separates_counter_from_sampler() {
        let mut a = session("A_TRR2", 18);
        assert_eq!(a.detection_kind().unwrap(), InferredKind::Counter);
        let mut b = session("B_TRR2", 18);
        assert_eq!(b.detection_kind().unwrap(), InferredKind::Sampling);
    }

    #[test]
    fn immediate_window_device_classified_by_double_burst() {
        let mut cfg = desk_preset("C_TRR2", 19).unwrap();
        cfg.trr.variant = TrrVariant::WindowBased(WindowBasedConfig {
            window_size: 2048,
            defer_when_empty: false,
            pick_policy: WindowPickPolicy::RoundRobinWalk,
        });
        let mut s = session_for(cfg);
        assert_eq!(s.detection_kind().unwrap(), InferredKind::Window);
    }

    #[test]
    fn counter_capacity_matches_table_size() {
        let mut s = session("A_TRR1", 20);
        assert_eq!(s.find_tracker_capacity().unwrap(), 16);
    }

    #[test]
    fn sampler_capacity_is_one_followed_row() {
        let mut s = session("B_TRR3", 21);
        assert_eq!(s.find_tracker_capacity().unwrap(), 1);
    }

    #[test]
    fn window_capacity_is_not_observable() {
        let mut s = session("C_TRR2", 22);
        assert!(matches!(
            s.find_tracker_capacity(),
            Err(Error::Inconclusive(_))
        ));
    }

    #[test]
    fn full_table_evicts_the_least_hammered_row() {
        let mut s = session("A_TRR1", 23);
        assert_eq!(s.test_eviction_policy().unwrap(), EvictionVerdict::MinCounter);
    }

    #[test]
    fn oversized_table_keeps_the_least_hammered_row() {
        let mut cfg = desk_preset("A_TRR1", 24).unwrap();
        cfg.trr.variant = TrrVariant::CounterBased(CounterBasedConfig {
            table_size: 17,
            ..CounterBasedConfig::default()
        });
        let mut s = session_for(cfg);
        assert_eq!(s.test_eviction_policy().unwrap(), EvictionVerdict::Other);
    }

    #[test]
    fn sampler_has_no_eviction_policy() {
        let mut s = session("B_TRR1", 25);
        assert_eq!(
            s.test_eviction_policy().unwrap(),
            EvictionVerdict::NotApplicable
        );
    }

    #[test]
    fn detection_clears_the_winning_rows_standing() {
        let mut s = session("A_TRR1", 26);
        assert_eq!(s.test_reset_on_detect().unwrap(), ResetVerdict::Resets);
    }

    #[test]
    fn without_reset_the_heavier_row_keeps_winning() {
        let mut cfg = desk_preset("A_TRR1", 27).unwrap();
        cfg.trr.variant = TrrVariant::CounterBased(CounterBasedConfig {
            reset_on_detect: false,
            ..CounterBasedConfig::default()
        });
        let mut s = session_for(cfg);
        assert_eq!(s.test_reset_on_detect().unwrap(), ResetVerdict::Retains);
    }

    #[test]
    fn counter_entries_persist_indefinitely() {
        let mut s = session("A_TRR1", 28);
        assert_eq!(
            s.test_entry_persistence().unwrap(),
            PersistenceLabel::Indefinite
        );
    }

    #[test]
    fn sticky_sample_persists_until_displaced() {
        let mut s = session("B_TRR1", 29);
        assert_eq!(
            s.test_entry_persistence().unwrap(),
            PersistenceLabel::IndefiniteUntilResample
        );
    }

    #[test]
    fn clearing_sampler_state_dies_with_its_refresh() {
        let mut cfg = desk_preset("B_TRR1", 30).unwrap();
        cfg.trr.variant = TrrVariant::SamplingBased(SamplingBasedConfig {
            clear_on_trr: true,
            ..SamplingBasedConfig::default()
        });
        let mut s = session_for(cfg);
        assert_eq!(
            s.test_entry_persistence().unwrap(),
            PersistenceLabel::Cleared
        );
    }

    #[test]
    fn window_record_is_consumed_by_its_refresh() {
        let mut s = session("C_TRR3", 31);
        assert_eq!(
            s.test_entry_persistence().unwrap(),
            PersistenceLabel::Cleared
        );
    }

    #[test]
    fn per_bank_counter_shrugs_off_cross_bank_churn() {
        let mut s = session("A_TRR1", 32);
        assert!(s.test_scope().unwrap());
    }

    #[test]
    fn shared_sampler_is_displaced_by_cross_bank_churn() {
        let mut s = session("B_TRR1", 33);
        assert!(!s.test_scope().unwrap());
    }

    #[test]
    fn per_bank_sampler_keeps_its_slot_across_banks() {
        let mut s = session("B_TRR3", 34);
        assert!(s.test_scope().unwrap());
    }

    #[test]
    fn sampling_guarantee_recovered_from_observed_stride() {
        let mut s = session("B_TRR1", 35);
        assert_eq!(s.find_sampling_guarantee().unwrap(), 2048);
    }

    #[test]
    fn narrower_sampling_guarantee_recovered() {
        let mut cfg = desk_preset("B_TRR1", 36).unwrap();
        cfg.trr.variant = TrrVariant::SamplingBased(SamplingBasedConfig {
            sample_guarantee_window: 512,
            ..SamplingBasedConfig::default()
        });
        let mut s = session_for(cfg);
        assert_eq!(s.find_sampling_guarantee().unwrap(), 512);
    }

    #[test]
    fn sampling_guarantee_requires_a_sampler() {
        let mut s = session("A_TRR1", 37);
        assert!(matches!(
            s.find_sampling_guarantee(),
            Err(Error::NotASampler(_))
        ));
    }

    #[test]
    fn window_size_recovered_by_walk_sweep() {
        let mut s = session("C_TRR3", 38);
        assert_eq!(s.find_window_size().unwrap(), 1024);
    }

    #[test]
    fn wide_window_size_recovered_by_walk_sweep() {
        let mut s = session("C_TRR1", 39);
        assert_eq!(s.find_window_size().unwrap(), 2048);
    }

    #[test]
    fn window_size_requires_a_window_tracker() {
        let mut s = session("B_TRR1", 40);
        assert!(matches!(
            s.find_window_size(),
            Err(Error::NotWindowBased(_))
        ));
    }

    #[test]
    fn evidence_log_records_each_experiment() {
        let mut s = session("A_TRR1", 41);
        let probes = s.rr_groups(0, 1).unwrap();
        s.find_trr_ref_ratio(&probes).unwrap();
        assert!(s.evidence().iter().any(|e| e.op == "refresh-schedule"));
        assert!(s.evidence().iter().any(|e| e.op == "trr-ref-ratio"));
    }

    #[test]
    fn profile_serializes_round_trip() {
        let profile = InferredTrrProfile {
            trr_to_ref_ratio: Some(RefRatio::Deferred(17)),
            neighbor_span: Some(SpanResult::Pair),
            detection_kind: InferredKind::Window,
            window_size: Some(2048),
            regular_refresh_period_refs: Some(8192),
            ..InferredTrrProfile::default()
        };
        let json = serde_json::to_string(&profile).unwrap();
        let back: InferredTrrProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, profile);
    }
}
