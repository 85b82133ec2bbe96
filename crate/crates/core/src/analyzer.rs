//! REF-synchronized refresh experiments.
//!
//! The core observable: a probe row with verified retention T, written and
//! then read T (plus a small margin) later, flips unless something refreshed
//! it in between. An experiment writes probes, waits T/2, runs a middle
//! phase of hammering and REF commands, waits out the remainder, and reads
//! the probes back. A surviving probe was refreshed during the middle phase;
//! cross-checking against the known regular refresh schedule separates
//! walk-order refreshes from tracker-induced ones.
//!
//! Everything here works through [`BlindDevice`]: no tracker state, fault
//! map, or event log is consulted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blind::BlindDevice;
use crate::dram::command::{DataPattern, DramCommand};
use crate::dram::config::NS_PER_MS;
use crate::error::{Error, Result};
use crate::scout::{read_row, wait_ms, write_row, RowGroup};

/// The regular (walk-order) refresh schedule, as inferred from the bus or
/// assumed from a datasheet. REF index `n` (1-based, counting every REF ever
/// issued) refreshes a block of `rows_per_ref` physical rows starting at
/// `anchor + ((n - 1) % period_refs) * rows_per_ref`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularSchedule {
    /// REF commands per full pass over the bank.
    pub period_refs: usize,
    /// Physical rows one REF refreshes in each bank.
    pub rows_per_ref: usize,
    /// Physical row the block at walk slot 0 starts at.
    pub anchor: usize,
    /// Uncertainty of `anchor` toward lower rows. Inference pins the walk
    /// down to one probe row inside a block, so the block start is known
    /// only to within `rows_per_ref - 1` rows. Coverage queries treat the
    /// whole uncertainty band as covered.
    pub anchor_slack: usize,
}

impl RegularSchedule {
    /// Rows one full pass covers.
    pub fn rows(&self) -> usize {
        self.period_refs * self.rows_per_ref
    }

    /// Whether REF number `ref_index` possibly refreshes `phys_row`.
    pub fn covers(&self, ref_index: u64, phys_row: usize) -> bool {
        let rows = self.rows();
        let slot = ((ref_index - 1) % self.period_refs as u64) as usize;
        let base = (self.anchor + slot * self.rows_per_ref) % rows;
        let lo = (base + rows - self.anchor_slack) % rows;
        (phys_row + rows - lo) % rows < self.rows_per_ref + self.anchor_slack
    }

    /// Whether any REF in `first..=last` possibly refreshes `phys_row`.
    pub fn covers_in_range(&self, first: u64, last: u64, phys_row: usize) -> bool {
        if last < first {
            return false;
        }
        if last - first + 1 >= self.period_refs as u64 {
            return true;
        }
        let rows = self.rows();
        let r_off = (phys_row + rows - self.anchor) % rows;
        // Walk slots whose (slack-extended) block contains the row.
        let hi_slot = (r_off + self.anchor_slack) / self.rows_per_ref;
        let lo_slot = (r_off + 1).saturating_sub(self.rows_per_ref).div_ceil(self.rows_per_ref);
        for slot in lo_slot..=hi_slot {
            let slot = (slot % self.period_refs) as u64;
            // Smallest n >= first with (n - 1) % period == slot.
            let period = self.period_refs as u64;
            let n = first + (slot + period - (first - 1) % period) % period;
            if n <= last {
                return true;
            }
        }
        false
    }
}

/// One hammered row in an experiment's middle phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentAggressor {
    pub bank: usize,
    /// Logical row address.
    pub row: usize,
    /// Activations per round.
    pub acts_per_round: u64,
}

/// Order in which multiple aggressors are activated within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HammerMode {
    /// Round-robin over the aggressors (a1, a2, ..., a1, a2, ...).
    Interleaved,
    /// Each aggressor's full per-round budget in one burst.
    Cascaded,
}

/// Description of one refresh experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Probe groups. All groups must share one retention threshold.
    pub probes: Vec<RowGroup>,
    pub aggressors: Vec<ExperimentAggressor>,
    pub hammer_mode: HammerMode,
    /// Middle-phase rounds; each round hammers then issues REFs.
    pub rounds: usize,
    /// REF commands issued at the end of each round.
    pub refs_per_round: usize,
    /// Data written to probes.
    pub pattern: DataPattern,
    /// Data written to the aggressor rows before the middle phase. Accepted
    /// for experiment fidelity; under the inversion flip model the stored
    /// aggressor value has no effect on victims.
    pub aggressor_pattern: Option<DataPattern>,
    /// Diversion rows hammered after the aggressors each round. Rows are
    /// auto-selected outward from the bank midpoint, at least 100 rows from
    /// every probe and aggressor.
    pub dummy_rows: usize,
    /// Activations per dummy row per round.
    pub dummy_hammers: u64,
    /// Flush tracker state before the probes are written.
    pub reset_tracker: bool,
    /// When set, the middle phase starts after a pseudo-random extra wait of
    /// up to one REF interval instead of immediately, for robustness tests.
    pub phase_jitter_seed: Option<u64>,
    /// When set, each round's per-bank activations must fit in
    /// `refs_per_round` REF intervals, as on a bus that must keep issuing
    /// REFs on time. Off by default: virtual time stretches instead.
    pub enforce_interval_budget: bool,
    /// Extra wait after the nominal retention threshold before reading
    /// probes back, so unrefreshed probes are strictly past it.
    pub settle_margin_ms: u64,
}

impl ExperimentConfig {
    pub fn new(probes: Vec<RowGroup>, aggressors: Vec<ExperimentAggressor>) -> Self {
        ExperimentConfig {
            probes,
            aggressors,
            hammer_mode: HammerMode::Interleaved,
            rounds: 1,
            refs_per_round: 1,
            pattern: DataPattern::AllOnes,
            aggressor_pattern: None,
            dummy_rows: 0,
            dummy_hammers: 0,
            reset_tracker: false,
            phase_jitter_seed: None,
            enforce_interval_budget: false,
            settle_margin_ms: 5,
        }
    }
}

/// What refreshed a probe, if anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshAttribution {
    /// Survived, and no middle REF's walk block could cover it: a tracker
    /// refreshed it.
    Trr,
    /// Survived, and the regular walk passed over it during the middle.
    Regular,
    /// Survived, but no schedule was supplied to attribute it.
    Unattributed,
    /// Flipped: nothing refreshed it.
    NotRefreshed,
}

/// Per-probe experiment outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub bank: usize,
    pub physical_row: usize,
    pub logical_row: usize,
    pub retention_ms: u64,
    pub survived: bool,
    /// Bits that read back inverted. Zero exactly when `survived`.
    pub bit_flips: usize,
    pub attribution: RefreshAttribution,
}

/// Timing record for one middle-phase round.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RoundTrace {
    /// Virtual time when the round's hammering began.
    pub started_ns: u64,
    /// Global index of the round's first REF (1-based).
    pub first_ref: u64,
    /// REF commands this round issued.
    pub refs: usize,
}

/// Result of one run of [`run_experiment`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub outcomes: Vec<ProbeOutcome>,
    /// Global index of the first middle-phase REF (1-based), if any.
    pub first_middle_ref: u64,
    /// REF commands issued in the middle phase.
    pub middle_refs: usize,
    /// ACT commands the middle phase issued for hammering.
    pub hammer_acts: u64,
    /// One entry per middle-phase round, in order.
    pub round_traces: Vec<RoundTrace>,
}

impl ExperimentResult {
    pub fn survivors(&self) -> impl Iterator<Item = &ProbeOutcome> {
        self.outcomes.iter().filter(|o| o.survived)
    }

    pub fn count(&self, attribution: RefreshAttribution) -> usize {
        self.outcomes.iter().filter(|o| o.attribution == attribution).count()
    }
}

/// One activate cycle: ACT, hold for the activate-to-precharge minimum,
/// PRE, wait out precharge-to-activate.
pub(crate) fn hammer_cycle(dev: &mut BlindDevice, bank: usize, row: usize) -> Result<()> {
    let tras = dev.timing().t_act_to_pre_ns;
    let trp = dev.timing().t_pre_to_act_ns;
    dev.issue(DramCommand::Act { bank, row })?;
    dev.issue(DramCommand::Wait { ns: tras })?;
    dev.issue(DramCommand::Pre { bank })?;
    dev.issue(DramCommand::Wait { ns: trp })?;
    Ok(())
}

fn probe_rows(config: &ExperimentConfig) -> Vec<(usize, usize, usize, u64)> {
    let mut rows = Vec::new();
    for group in &config.probes {
        for (i, &logical) in group.logical_rows.iter().enumerate() {
            rows.push((group.bank, group.physical_rows[i], logical, group.retention_ms));
        }
    }
    rows
}

fn validate(dev: &BlindDevice, config: &ExperimentConfig) -> Result<u64> {
    let rows = probe_rows(config);
    if rows.is_empty() {
        return Err(Error::invalid("experiment.probes", "need at least one probe row"));
    }
    let retention = rows[0].3;
    if rows.iter().any(|r| r.3 != retention) {
        return Err(Error::invalid(
            "experiment.probes",
            "all probes must share one retention threshold",
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &(bank, _, logical, _) in &rows {
        if !seen.insert((bank, logical)) {
            return Err(Error::ProbeOverlap { row: logical });
        }
    }
    for agg in &config.aggressors {
        if seen.contains(&(agg.bank, agg.row)) {
            return Err(Error::ProbeOverlap { row: agg.row });
        }
    }

    if config.enforce_interval_budget {
        let mut per_bank = std::collections::BTreeMap::<usize, u64>::new();
        for agg in &config.aggressors {
            *per_bank.entry(agg.bank).or_default() += agg.acts_per_round;
        }
        if config.dummy_rows > 0 {
            *per_bank.entry(config.probes[0].bank).or_default() +=
                config.dummy_rows as u64 * config.dummy_hammers;
        }
        let budget = config.refs_per_round as u64 * dev.timing().hammers_per_ref_interval() as u64;
        for (_, needed) in per_bank {
            if needed > budget {
                return Err(Error::BudgetExceeded { needed, budget });
            }
        }
    }

    // The middle phase must fit well inside the first half of the retention
    // window, or refreshed probes would decay before readout anyway.
    let acts_per_round: u64 = config.aggressors.iter().map(|a| a.acts_per_round).sum::<u64>()
        + config.dummy_rows as u64 * config.dummy_hammers;
    let cycle = dev.timing().hammer_cycle_ns();
    let round_ns = acts_per_round * cycle + config.refs_per_round as u64 * dev.timing().t_ref_ns;
    let middle_ns = config.rounds as u64 * round_ns;
    let budget_ns = (retention * NS_PER_MS) / 2;
    if middle_ns + config.settle_margin_ms * NS_PER_MS >= budget_ns {
        return Err(Error::invalid(
            "experiment.rounds",
            format!(
                "middle phase needs {middle_ns}ns but only {budget_ns}ns fit inside half the probe retention"
            ),
        ));
    }
    Ok(retention)
}

/// Picks the diversion rows requested by [`ExperimentConfig::dummy_rows`]:
/// walks outward from the midpoint of the probed bank, keeping at least 100
/// rows of physical distance from every probe and aggressor so neither
/// disturbance nor a tracker-triggered refresh span can touch the rows
/// under observation. Returns (bank, logical row) pairs.
fn select_dummy_rows(dev: &BlindDevice, config: &ExperimentConfig) -> Result<Vec<(usize, usize)>> {
    if config.dummy_rows == 0 {
        return Ok(Vec::new());
    }
    let bank = config.probes[0].bank;
    let rows = dev.rows_per_bank();
    let mut keep_out: Vec<usize> = Vec::new();
    for group in &config.probes {
        if group.bank == bank {
            keep_out.extend(group.physical_rows.iter().copied());
        }
    }
    for agg in &config.aggressors {
        if agg.bank == bank {
            keep_out.push(dev.to_physical(agg.row)?);
        }
    }
    let mid = rows / 2;
    let mut picked = Vec::with_capacity(config.dummy_rows);
    'search: for offset in 0..rows {
        let candidates = if offset == 0 {
            [Some(mid), None]
        } else {
            [Some(mid + offset).filter(|&p| p < rows), mid.checked_sub(offset)]
        };
        for phys in candidates.into_iter().flatten() {
            if keep_out.iter().any(|&k| phys.abs_diff(k) < 100) {
                continue;
            }
            picked.push((bank, dev.to_logical(phys)?));
            if picked.len() == config.dummy_rows {
                break 'search;
            }
        }
    }
    if picked.len() < config.dummy_rows {
        return Err(Error::invalid(
            "experiment.dummy_rows",
            format!(
                "bank {bank} has only {} rows at least 100 away from every probe and aggressor",
                picked.len()
            ),
        ));
    }
    Ok(picked)
}

/// Runs one experiment. When `schedule` is given, surviving probes are
/// attributed to the regular walk or to TRR; without it they are
/// `Unattributed`.
pub fn run_experiment(
    dev: &mut BlindDevice,
    config: &ExperimentConfig,
    schedule: Option<&RegularSchedule>,
) -> Result<ExperimentResult> {
    let retention = validate(dev, config)?;
    let rows = probe_rows(config);
    let dummies = select_dummy_rows(dev, config)?;
    let expected = config.pattern.to_words(dev.row_bits());

    if config.reset_tracker {
        let mut protect: Vec<(usize, usize)> = Vec::new();
        for group in &config.probes {
            protect.extend(group.logical_rows.iter().map(|&r| (group.bank, r)));
        }
        protect.extend(config.aggressors.iter().map(|a| (a.bank, a.row)));
        reset_trr_state(dev, &protect)?;
    }

    for &(bank, _, logical, _) in &rows {
        write_row(dev, bank, logical, &config.pattern)?;
    }
    if let Some(pattern) = &config.aggressor_pattern {
        for agg in &config.aggressors {
            write_row(dev, agg.bank, agg.row, pattern)?;
        }
    }
    let t0 = dev.clock_ns();
    if let Some(seed) = config.phase_jitter_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = rng.gen_range(0..dev.timing().ref_interval_ns);
        dev.issue(DramCommand::Wait { ns: jitter })?;
    }
    dev.issue(DramCommand::Wait { ns: retention * NS_PER_MS / 2 })?;

    let first_middle_ref = dev.refs_issued() + 1;
    let acts_before = dev.acts_issued();
    let mut round_traces = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        let started_ns = dev.clock_ns();
        let first_ref = dev.refs_issued() + 1;
        match config.hammer_mode {
            HammerMode::Interleaved => {
                let longest = config.aggressors.iter().map(|a| a.acts_per_round).max().unwrap_or(0);
                for i in 0..longest {
                    for agg in &config.aggressors {
                        if i < agg.acts_per_round {
                            hammer_cycle(dev, agg.bank, agg.row)?;
                        }
                    }
                }
            }
            HammerMode::Cascaded => {
                for agg in &config.aggressors {
                    for _ in 0..agg.acts_per_round {
                        hammer_cycle(dev, agg.bank, agg.row)?;
                    }
                }
            }
        }
        for &(bank, row) in &dummies {
            for _ in 0..config.dummy_hammers {
                hammer_cycle(dev, bank, row)?;
            }
        }
        for _ in 0..config.refs_per_round {
            dev.issue(DramCommand::Ref)?;
        }
        round_traces.push(RoundTrace { started_ns, first_ref, refs: config.refs_per_round });
    }
    let last_middle_ref = dev.refs_issued();
    let hammer_acts = dev.acts_issued() - acts_before;

    let target_ns = (retention + config.settle_margin_ms) * NS_PER_MS;
    let elapsed = dev.clock_ns() - t0;
    if elapsed < target_ns {
        dev.issue(DramCommand::Wait { ns: target_ns - elapsed })?;
    }

    let mut outcomes = Vec::with_capacity(rows.len());
    for &(bank, physical, logical, retention_ms) in &rows {
        let data = read_row(dev, bank, logical)?;
        let bit_flips: usize =
            data.iter().zip(&expected).map(|(a, b)| (a ^ b).count_ones() as usize).sum();
        let survived = bit_flips == 0;
        let attribution = if !survived {
            RefreshAttribution::NotRefreshed
        } else {
            match schedule {
                None => RefreshAttribution::Unattributed,
                Some(s) if last_middle_ref >= first_middle_ref
                    && s.covers_in_range(first_middle_ref, last_middle_ref, physical) =>
                {
                    RefreshAttribution::Regular
                }
                Some(_) => RefreshAttribution::Trr,
            }
        };
        outcomes.push(ProbeOutcome {
            bank,
            physical_row: physical,
            logical_row: logical,
            retention_ms,
            survived,
            bit_flips,
            attribution,
        });
    }

    Ok(ExperimentResult {
        outcomes,
        first_middle_ref,
        middle_refs: (last_middle_ref + 1 - first_middle_ref) as usize,
        hammer_acts,
        round_traces,
    })
}

/// Drives every tracker into a state dominated by sacrificial rows, so
/// whatever earlier commands loaded into tables, slots, or windows cannot
/// bleed into the next experiment. `protect` lists (bank, logical row)
/// pairs the dummy traffic must stay away from.
pub fn reset_trr_state(dev: &mut BlindDevice, protect: &[(usize, usize)]) -> Result<()> {
    let banks = dev.banks();
    let rows = dev.rows_per_bank();
    let mut protected_phys: Vec<Vec<usize>> = vec![Vec::new(); banks];
    for &(bank, logical) in protect {
        protected_phys[bank].push(dev.to_physical(logical)?);
    }

    // 24 sacrificial rows per bank from the top of the address space, kept
    // at physical distance > 4 from anything protected and spaced 8 apart
    // so their own refresh spans never touch each other or the probes.
    let mut dummies: Vec<Vec<usize>> = Vec::with_capacity(banks);
    for bank in 0..banks {
        let mut picked = Vec::new();
        let mut candidate = rows;
        while picked.len() < 24 && candidate >= 8 {
            candidate -= 8;
            let phys = dev.to_physical(candidate)?;
            let clear = protected_phys[bank]
                .iter()
                .all(|&p| phys.abs_diff(p) > 4);
            if clear {
                picked.push(candidate);
            }
        }
        if picked.len() < 24 {
            return Err(Error::invalid(
                "reset.protect",
                "not enough free rows for tracker-reset traffic",
            ));
        }
        dummies.push(picked);
    }

    // Phase 1: churn. More distinct rows than any supported table, hammered
    // round-robin with a REF per block, so stale entries get evicted and
    // windows hold only sacrificial rows.
    for block in 0..256usize {
        for bank in 0..banks {
            for j in 0..8 {
                let row = dummies[bank][(block * 8 + j) % 24];
                hammer_cycle(dev, bank, row)?;
            }
        }
        dev.issue(DramCommand::Ref)?;
    }
    // Phase 2: quiet REFs. Detect-and-reset trackers zero their entries one
    // per TRR-capable REF; 768 covers a full table walk for any supported
    // capable-REF cadence.
    for _ in 0..768 {
        dev.issue(DramCommand::Ref)?;
    }
    // Phase 3: settle. A few activations before each REF so window trackers
    // never see an empty window at a capable REF and carry a deferred
    // refresh into the next experiment.
    for block in 0..64usize {
        for bank in 0..banks {
            hammer_cycle(dev, bank, dummies[bank][block % 24])?;
        }
        dev.issue(DramCommand::Ref)?;
    }
    Ok(())
}

/// Confirms (or refutes) that every row in `probe_phys` is
/// disturbance-coupled to `aggressor_phys`. Each probe gets two-sided
/// pressure where possible: the aggressor plus the probe's far-side mirror
/// row, skipped when the mirror falls off the bank or on another probe.
/// Returns true only if every probe flips at least one bit. No REF is
/// issued while hammering, so no tracker can interfere; probe contents are
/// rewritten before returning.
pub fn verify_adjacency(
    dev: &mut BlindDevice,
    bank: usize,
    aggressor_phys: usize,
    probe_phys: &[usize],
    acts: u64,
) -> Result<bool> {
    if probe_phys.is_empty() {
        return Err(Error::invalid("adjacency.probes", "need at least one probe row"));
    }
    let rows = dev.rows_per_bank();
    let mut hammer_set = vec![aggressor_phys];
    for &v in probe_phys {
        let mirror = (2 * v).checked_sub(aggressor_phys).filter(|&m| m < rows);
        if let Some(m) = mirror {
            if !probe_phys.contains(&m) && !hammer_set.contains(&m) {
                hammer_set.push(m);
            }
        }
    }
    let hammer_logical: Vec<usize> =
        hammer_set.iter().map(|&p| dev.to_logical(p)).collect::<Result<_>>()?;
    let probe_logical: Vec<usize> =
        probe_phys.iter().map(|&p| dev.to_logical(p)).collect::<Result<_>>()?;

    let expected = DataPattern::AllOnes.to_words(dev.row_bits());
    for &v in &probe_logical {
        write_row(dev, bank, v, &DataPattern::AllOnes)?;
    }
    for _ in 0..acts {
        for &a in &hammer_logical {
            hammer_cycle(dev, bank, a)?;
        }
    }
    let mut all_flipped = true;
    for &v in &probe_logical {
        if read_row(dev, bank, v)? == expected {
            all_flipped = false;
        }
    }
    for &v in &probe_logical {
        write_row(dev, bank, v, &DataPattern::AllOnes)?;
    }
    Ok(all_flipped)
}

/// Infers the regular refresh schedule from scratch using one probe row.
///
/// Each trial writes the probe, waits almost its whole retention, issues a
/// burst of REFs, and reads it back shortly after: the probe survives
/// exactly when one of the burst REFs refreshed it. Coarse 64-REF bursts
/// locate the walk's first pass over the probe; single-REF trials then pin
/// three consecutive passes exactly, and their common distance is the walk
/// period.
///
/// Tracker state is neutralized first. Leftover table entries near the
/// probe would otherwise inject their own periodic refreshes (a table walk
/// that detects a probe neighbor refreshes the probe on a cadence that has
/// nothing to do with the regular walk), and the three-crossing check would
/// reject the run as inconclusive.
pub fn infer_refresh_schedule(dev: &mut BlindDevice, probe: &RowGroup) -> Result<RegularSchedule> {
    let bank = probe.bank;
    let logical = probe.logical_rows[0];
    let phys = probe.physical_rows[0];
    let retention = probe.retention_ms;
    if retention < 50 {
        return Err(Error::invalid("probe.retention_ms", "schedule probe must hold >= 50ms"));
    }
    let protect: Vec<(usize, usize)> =
        probe.logical_rows.iter().map(|&r| (bank, r)).collect();
    reset_trr_state(dev, &protect)?;
    let expected = DataPattern::AllOnes.to_words(dev.row_bits());
    let rows = dev.rows_per_bank();

    let trial = |dev: &mut BlindDevice, refs: usize| -> Result<bool> {
        write_row(dev, bank, logical, &DataPattern::AllOnes)?;
        wait_ms(dev, retention - 25)?;
        for _ in 0..refs {
            dev.issue(DramCommand::Ref)?;
        }
        wait_ms(dev, 25)?;
        Ok(read_row(dev, bank, logical)? == expected)
    };

    // Coarse: find a burst containing a pass over the probe.
    let coarse_cap = rows.div_ceil(64) * 2 + 4;
    let mut found = false;
    for _ in 0..coarse_cap {
        if trial(dev, 64)? {
            found = true;
            break;
        }
    }
    if !found {
        return Err(Error::Inconclusive(
            "no REF burst ever refreshed the probe; is the walk longer than two bank passes?".into(),
        ));
    }

    // Exact: locate the next three passes with single-REF trials.
    let single_cap = rows + 128;
    let mut crossings = Vec::new();
    for _ in 0..3 {
        let mut hit = None;
        for _ in 0..single_cap {
            if trial(dev, 1)? {
                hit = Some(dev.refs_issued());
                break;
            }
        }
        match hit {
            Some(r) => crossings.push(r),
            None => {
                return Err(Error::Inconclusive(
                    "walk period exceeds one full pass worth of single-REF trials".into(),
                ))
            }
        }
    }

    let period = (crossings[1] - crossings[0]) as usize;
    let second_gap = (crossings[2] - crossings[1]) as usize;
    if period != second_gap {
        return Err(Error::Inconclusive(format!(
            "probe refresh gaps disagree ({period} vs {second_gap} REFs); \
             something besides the regular walk is refreshing the probe"
        )));
    }
    if period == 0 || rows % period != 0 {
        return Err(Error::Inconclusive(format!(
            "observed walk period {period} does not divide {rows} rows evenly"
        )));
    }
    let rows_per_ref = rows / period;
    let slot = ((crossings[0] - 1) % period as u64) as usize;
    let anchor = (phys + rows - slot * rows_per_ref) % rows;
    Ok(RegularSchedule {
        period_refs: period,
        rows_per_ref,
        anchor,
        anchor_slack: rows_per_ref - 1,
    })
}

/// REF commands between two regular-walk passes over the same row, inferred
/// from scratch. Convenience wrapper around [`infer_refresh_schedule`] for
/// callers that only need the period.
pub fn infer_regular_refresh_period(dev: &mut BlindDevice, probe: &RowGroup) -> Result<usize> {
    Ok(infer_refresh_schedule(dev, probe)?.period_refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dram::DramDevice;
    use crate::presets::desk_preset;
    use crate::scout::{find_row_groups, GroupLayout, RowScoutConfig};

    fn blind(name: &str, seed: u64) -> BlindDevice {
        BlindDevice::new(DramDevice::new(desk_preset(name, seed).unwrap()).unwrap())
    }

    fn scout_groups(
        dev: &mut BlindDevice,
        range: std::ops::Range<usize>,
        layout: GroupLayout,
        count: usize,
    ) -> Vec<RowGroup> {
        let groups =
            find_row_groups(dev, 0, range, layout, count, &RowScoutConfig::desk()).unwrap();
        let t = groups[0].retention_ms;
        assert!(groups.iter().all(|g| g.retention_ms == t), "test groups must share retention");
        groups
    }

    fn exact_desk_schedule(dev: &BlindDevice) -> RegularSchedule {
        RegularSchedule {
            period_refs: dev.rows_per_bank(),
            rows_per_ref: 1,
            anchor: 0,
            anchor_slack: 0,
        }
    }

    #[test]
    fn unrefreshed_probes_flip() {
        let mut dev = blind("baseline", 31);
        let probes = scout_groups(&mut dev, 1024..3072, GroupLayout::single(), 3);
        let schedule = exact_desk_schedule(&dev);
        let config = ExperimentConfig::new(probes, vec![]);
        // One REF; its walk block is nowhere near the probes (cursor is at
        // the start of the walk, probes live past row 1024).
        let result = run_experiment(&mut dev, &config, Some(&schedule)).unwrap();
        assert_eq!(result.count(RefreshAttribution::NotRefreshed), 3);
        assert_eq!(result.middle_refs, 1);
    }

    #[test]
    fn regular_walk_survival_is_attributed_to_the_schedule() {
        let mut dev = blind("baseline", 8);
        let probes = scout_groups(&mut dev, 1024..3072, GroupLayout::single(), 2);
        let schedule = exact_desk_schedule(&dev);
        // Aim the middle phase so the walk crosses exactly the first probe.
        let target = probes[0].physical_rows[0] as u64;
        let refs_now = dev.refs_issued();
        let rows = dev.rows_per_bank() as u64;
        let delta = (target + rows - refs_now % rows) % rows + 1;
        let mut config = ExperimentConfig::new(probes.clone(), vec![]);
        config.rounds = delta as usize;
        let result = run_experiment(&mut dev, &config, Some(&schedule)).unwrap();
        let first = &result.outcomes[0];
        assert!(first.survived);
        assert_eq!(first.attribution, RefreshAttribution::Regular);
        let second = &result.outcomes[1];
        assert!(!second.survived, "walk stopped before the second probe");
    }

    #[test]
    fn tracker_refresh_is_attributed_to_trr() {
        let mut dev = blind("A_TRR1", 12);
        let probes = scout_groups(&mut dev, 2000..3500, GroupLayout::flanking_pair(1).unwrap(), 1);
        let protect: Vec<(usize, usize)> =
            probes[0].logical_rows.iter().map(|&r| (0, r)).collect();
        reset_trr_state(&mut dev, &protect).unwrap();
        let schedule = exact_desk_schedule(&dev);
        let aggressor_phys = probes[0].enclosed_physical_rows()[0];
        let aggressor = dev.to_logical(aggressor_phys).unwrap();
        let mut config = ExperimentConfig::new(
            probes,
            vec![ExperimentAggressor { bank: 0, row: aggressor, acts_per_round: 60 }],
        );
        config.rounds = 18;
        let result = run_experiment(&mut dev, &config, Some(&schedule)).unwrap();
        assert_eq!(result.count(RefreshAttribution::Trr), 2, "both flanks refreshed by TRR");
    }

    #[test]
    fn without_hammering_no_trr_refresh_happens() {
        let mut dev = blind("A_TRR1", 12);
        let probes = scout_groups(&mut dev, 2000..3500, GroupLayout::flanking_pair(1).unwrap(), 1);
        let protect: Vec<(usize, usize)> =
            probes[0].logical_rows.iter().map(|&r| (0, r)).collect();
        reset_trr_state(&mut dev, &protect).unwrap();
        let schedule = exact_desk_schedule(&dev);
        let mut config = ExperimentConfig::new(probes, vec![]);
        config.rounds = 18;
        let result = run_experiment(&mut dev, &config, Some(&schedule)).unwrap();
        assert_eq!(result.count(RefreshAttribution::NotRefreshed), 2);
    }

    #[test]
    fn overlong_middle_phase_is_rejected() {
        let mut dev = blind("baseline", 4);
        let probes = scout_groups(&mut dev, 1024..3072, GroupLayout::single(), 1);
        let mut config = ExperimentConfig::new(probes, vec![]);
        config.rounds = 1_000_000;
        let err = run_experiment(&mut dev, &config, None).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { .. }), "{err:?}");
    }

    #[test]
    fn aggressor_overlapping_probe_is_rejected() {
        let mut dev = blind("baseline", 4);
        let probes = scout_groups(&mut dev, 1024..3072, GroupLayout::single(), 1);
        let row = probes[0].logical_rows[0];
        let config = ExperimentConfig::new(
            probes,
            vec![ExperimentAggressor { bank: 0, row, acts_per_round: 10 }],
        );
        let err = run_experiment(&mut dev, &config, None).unwrap_err();
        assert!(matches!(err, Error::ProbeOverlap { .. }), "{err:?}");
    }

    #[test]
    fn adjacency_check_separates_neighbors_from_strangers() {
        let mut dev = blind("baseline", 17);
        let probes = scout_groups(&mut dev, 1024..3072, GroupLayout::single(), 2);
        let victim = probes[0].physical_rows[0];
        assert!(verify_adjacency(&mut dev, 0, victim + 1, &[victim], 50_000).unwrap());
        let victim2 = probes[1].physical_rows[0];
        assert!(!verify_adjacency(&mut dev, 0, victim2 + 10, &[victim2], 50_000).unwrap());
    }

    #[test]
    fn adjacency_check_restores_probe_data() {
        let mut dev = blind("baseline", 17);
        let probes = scout_groups(&mut dev, 1024..3072, GroupLayout::single(), 1);
        let victim = probes[0].physical_rows[0];
        assert!(verify_adjacency(&mut dev, 0, victim + 1, &[victim], 50_000).unwrap());
        let logical = probes[0].logical_rows[0];
        let expected = DataPattern::AllOnes.to_words(dev.row_bits());
        assert_eq!(read_row(&mut dev, 0, logical).unwrap(), expected, "probe rewritten after check");
    }

    #[test]
    fn dummy_rows_keep_their_distance() {
        let mut dev = blind("baseline", 23);
        let probes = scout_groups(&mut dev, 1024..3072, GroupLayout::single(), 2);
        let aggressor = probes[1].physical_rows[0] + 1;
        let mut config = ExperimentConfig::new(
            probes.clone(),
            vec![ExperimentAggressor {
                bank: 0,
                row: dev.to_logical(aggressor).unwrap(),
                acts_per_round: 4,
            }],
        );
        config.dummy_rows = 16;
        config.dummy_hammers = 2;
        let picked = select_dummy_rows(&dev, &config).unwrap();
        assert_eq!(picked.len(), 16);
        let mut keep_out: Vec<usize> =
            probes.iter().flat_map(|g| g.physical_rows.clone()).collect();
        keep_out.push(aggressor);
        for &(bank, logical) in &picked {
            assert_eq!(bank, 0);
            let phys = dev.to_physical(logical).unwrap();
            assert!(keep_out.iter().all(|&k| phys.abs_diff(k) >= 100), "dummy {phys} too close");
        }
    }

    #[test]
    fn interval_budget_rejects_oversubscribed_rounds() {
        let mut dev = blind("baseline", 4);
        let probes = scout_groups(&mut dev, 1024..3072, GroupLayout::single(), 1);
        let far = dev.to_logical(200).unwrap();
        let mut config = ExperimentConfig::new(
            probes,
            vec![ExperimentAggressor { bank: 0, row: far, acts_per_round: 200 }],
        );
        config.enforce_interval_budget = true;
        let err = run_experiment(&mut dev, &config, None).unwrap_err();
        assert!(
            matches!(err, Error::BudgetExceeded { needed: 200, budget: 149 }),
            "{err:?}"
        );
        config.refs_per_round = 2;
        run_experiment(&mut dev, &config, None).unwrap();
    }

    #[test]
    fn round_traces_record_every_middle_ref() {
        let mut dev = blind("baseline", 7);
        let probes = scout_groups(&mut dev, 1024..3072, GroupLayout::single(), 1);
        let mut config = ExperimentConfig::new(probes, vec![]);
        config.rounds = 5;
        config.refs_per_round = 3;
        let result = run_experiment(&mut dev, &config, None).unwrap();
        assert_eq!(result.round_traces.len(), 5);
        assert_eq!(result.round_traces[0].first_ref, result.first_middle_ref);
        let total: usize = result.round_traces.iter().map(|t| t.refs).sum();
        assert_eq!(total, result.middle_refs);
        for pair in result.round_traces.windows(2) {
            assert_eq!(pair[1].first_ref, pair[0].first_ref + 3);
            assert!(pair[1].started_ns > pair[0].started_ns);
        }
        assert!(!result.outcomes[0].survived);
        assert!(result.outcomes[0].bit_flips > 0);
    }

    #[test]
    fn tracker_reset_flag_flushes_prior_detections() {
        // Pre-load the counter table by hammering a row, then run a
        // hammer-free experiment on its flanks. Without a reset the stale
        // entry keeps getting detected and the flanks survive; with the
        // reset flag they decay.
        let acts = 2600;
        let layout = GroupLayout::flanking_pair(3).unwrap();
        for (reset, expect_flipped) in [(false, 0), (true, 2)] {
            let mut dev = blind("A_TRR1", 12);
            let probes = scout_groups(&mut dev, 2000..3500, layout.clone(), 1);
            let aggressor_phys = probes[0].enclosed_physical_rows()[1];
            let aggressor = dev.to_logical(aggressor_phys).unwrap();
            for _ in 0..acts {
                hammer_cycle(&mut dev, 0, aggressor).unwrap();
            }
            let mut config = ExperimentConfig::new(probes, vec![]);
            config.rounds = 18;
            config.reset_tracker = reset;
            let result = run_experiment(&mut dev, &config, None).unwrap();
            assert_eq!(
                result.count(RefreshAttribution::NotRefreshed),
                expect_flipped,
                "reset={reset}"
            );
        }
    }

    #[test]
    fn schedule_inference_recovers_walk_exactly() {
        let mut dev = blind("baseline", 19);
        let probes = scout_groups(&mut dev, 1024..3072, GroupLayout::single(), 1);
        let schedule = infer_refresh_schedule(&mut dev, &probes[0]).unwrap();
        assert_eq!(schedule.period_refs, 8192);
        assert_eq!(schedule.rows_per_ref, 1);
        assert_eq!(schedule.anchor, 0);
        assert_eq!(schedule.anchor_slack, 0);
    }

    #[test]
    fn schedule_inference_sees_through_tracker_interference() {
        // Scouting leaves the probe's flanking partner in the counter table.
        // A table walk that keeps detecting that partner refreshes the probe
        // on the tracker's own cadence; inference must not mistake it for
        // the regular walk.
        let mut dev = blind("A_TRR1", 99);
        let probes = scout_groups(&mut dev, 2200..3400, GroupLayout::flanking_pair(1).unwrap(), 1);
        let schedule = infer_refresh_schedule(&mut dev, &probes[0]).unwrap();
        assert_eq!(schedule.period_refs, dev.rows_per_bank());
        assert_eq!(schedule.rows_per_ref, 1);
        assert_eq!(schedule.anchor, 0);
    }

    #[test]
    fn schedule_coverage_math_matches_simple_walk() {
        let s = RegularSchedule { period_refs: 8, rows_per_ref: 4, anchor: 0, anchor_slack: 0 };
        // REF 1 covers rows 0..4, REF 2 covers 4..8, wrapping every 8 REFs.
        assert!(s.covers(1, 0));
        assert!(s.covers(1, 3));
        assert!(!s.covers(1, 4));
        assert!(s.covers(2, 4));
        assert!(s.covers(9, 0), "walk wraps after a full pass");
        assert!(s.covers_in_range(3, 5, 12));
        assert!(!s.covers_in_range(3, 5, 0));
        assert!(s.covers_in_range(3, 11, 0), "range spanning a wrap covers slot 0");
    }
}
