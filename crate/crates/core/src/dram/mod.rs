//! Command-level device simulator: banks, virtual-time clock, timing checks,
//! retention and disturbance materialization, regular refresh, and the TRR
//! tracker hookup.

pub mod cells;
pub mod command;
pub mod config;
pub mod mapping;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trr::{DetectionKind, NeighborSpan, TrrRefKind, TrrState, TrrVariant};
use self::cells::BankCells;
use self::command::{CommandResult, DataPattern, DramCommand};
use self::config::{DeviceConfig, NS_PER_MS};
use self::mapping::RowMap;

/// Everything the simulator's tracker configuration implies about observable
/// TRR behavior, for judging reverse-engineering results in tests. Not
/// available through the blind interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrrProfileGroundTruth {
    pub kind: DetectionKind,
    /// Every n-th REF is TRR-capable.
    pub trr_ref_ratio: Option<usize>,
    pub neighbors: Option<NeighborSpan>,
    /// Tracker entries (counter table size, or sampler slot count).
    pub capacity: Option<usize>,
    pub per_bank: Option<bool>,
    pub window_size: Option<usize>,
    pub sampling_guarantee: Option<usize>,
    pub regular_refresh_period_refs: usize,
}

/// One TRR-induced refresh action, recorded when action logging is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrrEvent {
    pub ref_index: u64,
    pub at_ns: u64,
    pub bank: usize,
    pub kind: TrrRefKind,
    /// Physical row the tracker identified as the aggressor.
    pub detected_row: usize,
    /// Physical rows refreshed on its behalf.
    pub refreshed_rows: Vec<usize>,
}

/// Why a watched row was refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefreshCause {
    Regular,
    Trr(TrrRefKind),
}

/// One refresh of a watched row (physical address).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshEvent {
    pub at_ns: u64,
    pub ref_index: u64,
    pub bank: usize,
    pub row: usize,
    pub cause: RefreshCause,
}

const PATTERN_ZEROS: u8 = 0;
const PATTERN_ONES: u8 = 1;
const PATTERN_WORDS: u8 = 2;

#[derive(Debug, Clone)]
struct Bank {
    /// Open physical row, if any.
    open: Option<usize>,
    /// Earliest clock at which ACT is legal (set by PRE + precharge time).
    ready_act_ns: u64,
    /// Earliest clock at which PRE is legal (set by ACT + row active time).
    ready_pre_ns: u64,
    last_refresh_ns: Vec<u64>,
    disturbance: Vec<f64>,
    /// Side of the most recent adjacent aggressor per row (+1 above, -1
    /// below, 0 none since the last refresh); drives the same-side discount.
    last_side: Vec<i8>,
    cells: BankCells,
    base_pattern: Vec<u8>,
    words: HashMap<u32, Arc<Vec<u64>>>,
}

impl Bank {
    fn materialize_row(&mut self, row: usize, now_ns: u64, toggle_ns: u64) {
        let last = self.last_refresh_ns[row];
        let disturbance = self.disturbance[row];
        self.cells.row_mut(row).materialize(now_ns, last, disturbance, toggle_ns);
    }

    fn read_row(&self, row: usize, row_bits: usize) -> Vec<u64> {
        let n = row_bits / 64;
        let mut words = match self.base_pattern[row] {
            PATTERN_ZEROS => vec![0u64; n],
            PATTERN_ONES => vec![u64::MAX; n],
            _ => {
                let stored = self.words.get(&(row as u32)).expect("words pattern stored");
                let mut v = stored.as_ref().clone();
                v.resize(n, 0);
                v
            }
        };
        self.cells.row(row).apply_flips(&mut words);
        words
    }

    fn write_row(&mut self, row: usize, pattern: DataPattern) {
        match pattern {
            DataPattern::AllZeros => {
                self.base_pattern[row] = PATTERN_ZEROS;
                self.words.remove(&(row as u32));
            }
            DataPattern::AllOnes => {
                self.base_pattern[row] = PATTERN_ONES;
                self.words.remove(&(row as u32));
            }
            DataPattern::Words(w) => {
                self.base_pattern[row] = PATTERN_WORDS;
                self.words.insert(row as u32, w);
            }
        }
        self.cells.row_mut(row).clear_flips();
        self.disturbance[row] = 0.0;
        self.last_side[row] = 0;
    }
}

/// Global activation-rate limiter: a ring of the most recent ACT times.
#[derive(Debug, Clone)]
struct FawRing {
    times: Vec<u64>,
    head: usize,
    filled: usize,
}

impl FawRing {
    fn new(capacity: usize) -> Self {
        FawRing { times: vec![0; capacity], head: 0, filled: 0 }
    }

    /// Earliest clock at which one more ACT stays within the rate window,
    /// or None while the ring is not yet full.
    fn earliest_legal(&self, window_ns: u64) -> Option<u64> {
        (self.filled == self.times.len()).then(|| self.times[self.head] + window_ns)
    }

    fn push(&mut self, now_ns: u64) {
        self.times[self.head] = now_ns;
        self.head = (self.head + 1) % self.times.len();
        self.filled = (self.filled + 1).min(self.times.len());
    }
}

/// A simulated device. Commands address logical rows; the device translates
/// through its row mapping, so adjacency effects and refresh walks happen in
/// physical space.
#[derive(Debug, Clone)]
pub struct DramDevice {
    config: DeviceConfig,
    map: RowMap,
    clock_ns: u64,
    acts_issued: u64,
    refs_issued: u64,
    refresh_cursor: usize,
    faw: FawRing,
    banks: Vec<Bank>,
    trr: TrrState,
    toggle_ns: u64,
    trr_log: Option<Vec<TrrEvent>>,
    watch_rows: HashSet<(usize, usize)>,
    watch_events: Vec<RefreshEvent>,
}

impl DramDevice {
    /// Build a device. Equal configs (seed included) produce devices whose
    /// observable behavior is bit-identical.
    pub fn new(config: DeviceConfig) -> Result<Self> {
        config.validate()?;
        let map = RowMap::build(&config.mapping, config.rows_per_bank);
        let banks = (0..config.banks)
            .map(|bank| Bank {
                open: None,
                ready_act_ns: 0,
                ready_pre_ns: 0,
                last_refresh_ns: vec![0; config.rows_per_bank],
                disturbance: vec![0.0; config.rows_per_bank],
                last_side: vec![0; config.rows_per_bank],
                cells: BankCells::draw(
                    config.seed,
                    bank,
                    config.rows_per_bank,
                    config.row_bits,
                    &config.retention,
                    &config.disturbance,
                ),
                base_pattern: vec![PATTERN_ZEROS; config.rows_per_bank],
                words: HashMap::new(),
            })
            .collect();
        let trr = TrrState::new(&config.trr, config.banks, config.seed);
        let faw = FawRing::new(config.timing.max_acts_in_window);
        let toggle_ns = config.retention.vrt_toggle_period_ms * NS_PER_MS;
        Ok(DramDevice {
            config,
            map,
            clock_ns: 0,
            acts_issued: 0,
            refs_issued: 0,
            refresh_cursor: 0,
            faw,
            banks,
            trr,
            toggle_ns,
            trr_log: None,
            watch_rows: HashSet::new(),
            watch_events: Vec::new(),
        })
    }

    /// Execute one command at the current virtual time.
    pub fn issue(&mut self, cmd: DramCommand) -> Result<CommandResult> {
        match cmd {
            DramCommand::Act { bank, row } => {
                self.act(bank, row)?;
                Ok(CommandResult::Done)
            }
            DramCommand::Pre { bank } => {
                self.pre(bank)?;
                Ok(CommandResult::Done)
            }
            DramCommand::Rd { bank, row } => self.read(bank, row).map(CommandResult::Data),
            DramCommand::Wr { bank, row, pattern } => {
                self.write(bank, row, pattern)?;
                Ok(CommandResult::Done)
            }
            DramCommand::Ref => {
                self.refresh()?;
                Ok(CommandResult::Done)
            }
            DramCommand::Wait { ns } => {
                self.clock_ns += ns;
                Ok(CommandResult::Done)
            }
        }
    }

    fn check_bank(&self, bank: usize) -> Result<()> {
        if bank >= self.banks.len() {
            return Err(Error::ProtocolViolation(format!(
                "bank {bank} out of range ({} banks)",
                self.banks.len()
            )));
        }
        Ok(())
    }

    fn act(&mut self, bank_idx: usize, row: usize) -> Result<()> {
        self.check_bank(bank_idx)?;
        let phys = self.map.to_physical(row)?;
        let now = self.clock_ns;
        let bank = &self.banks[bank_idx];
        if let Some(open) = bank.open {
            return Err(Error::ProtocolViolation(format!(
                "ACT on bank {bank_idx} while row {open} is open"
            )));
        }
        if now < bank.ready_act_ns {
            return Err(Error::TimingViolation {
                constraint: "precharge-to-activate spacing",
                at_ns: now,
                earliest_legal_ns: bank.ready_act_ns,
            });
        }
        if let Some(earliest) = self.faw.earliest_legal(self.config.timing.t_faw_window_ns) {
            if now < earliest {
                return Err(Error::TimingViolation {
                    constraint: "activation-rate window",
                    at_ns: now,
                    earliest_legal_ns: earliest,
                });
            }
        }
        self.faw.push(now);
        self.acts_issued += 1;
        let toggle = self.toggle_ns;
        let t_ras = self.config.timing.t_act_to_pre_ns;
        let bank = &mut self.banks[bank_idx];
        bank.open = Some(phys);
        bank.ready_pre_ns = now + t_ras;
        // Activation senses and will restore the row itself: latch anything
        // already lost, then start its disturbance accumulation over.
        bank.materialize_row(phys, now, toggle);
        bank.disturbance[phys] = 0.0;
        bank.last_side[phys] = 0;
        self.apply_disturbance(bank_idx, phys);
        self.trr.on_activate(bank_idx, phys);
        Ok(())
    }

    /// Neighbor disturbance from one activation of physical row `agg`.
    fn apply_disturbance(&mut self, bank_idx: usize, agg: usize) {
        let d = &self.config.disturbance;
        let rows = self.config.rows_per_bank;
        let bank = &mut self.banks[bank_idx];
        if d.paired_rows {
            // Row pairs share internal circuitry; an activation disturbs the
            // pair partner with double-sided strength and nothing else.
            let partner = agg ^ 1;
            if partner < rows {
                bank.disturbance[partner] += 2.0;
            }
            return;
        }
        // Immediate neighbors: full strength when the aggressor side
        // alternated since this victim last saw one, discounted otherwise.
        for (victim, side) in [(agg.wrapping_sub(1), 1i8), (agg + 1, -1i8)] {
            if victim < rows {
                let contrib = if bank.last_side[victim] == side {
                    1.0 / d.single_sided_factor
                } else {
                    1.0
                };
                bank.last_side[victim] = side;
                bank.disturbance[victim] += contrib;
            }
        }
        for victim in [agg.wrapping_sub(2), agg + 2] {
            if victim < rows {
                bank.disturbance[victim] += 1.0 / d.distance2_factor;
            }
        }
    }

    fn pre(&mut self, bank_idx: usize) -> Result<()> {
        self.check_bank(bank_idx)?;
        let now = self.clock_ns;
        let bank = &mut self.banks[bank_idx];
        let Some(open) = bank.open else {
            return Ok(());
        };
        if now < bank.ready_pre_ns {
            return Err(Error::TimingViolation {
                constraint: "activate-to-precharge spacing",
                at_ns: now,
                earliest_legal_ns: bank.ready_pre_ns,
            });
        }
        // Closing writes the sensed row back fully charged; its retention
        // clock restarts here.
        bank.last_refresh_ns[open] = now;
        bank.open = None;
        bank.ready_act_ns = now + self.config.timing.t_pre_to_act_ns;
        Ok(())
    }

    fn read(&mut self, bank_idx: usize, row: usize) -> Result<Vec<u64>> {
        self.check_bank(bank_idx)?;
        let phys = self.map.to_physical(row)?;
        let bank = &self.banks[bank_idx];
        if bank.open != Some(phys) {
            return Err(Error::ProtocolViolation(format!(
                "RD of row {row} on bank {bank_idx} requires that row open"
            )));
        }
        Ok(bank.read_row(phys, self.config.row_bits))
    }

    fn write(&mut self, bank_idx: usize, row: usize, pattern: DataPattern) -> Result<()> {
        self.check_bank(bank_idx)?;
        let phys = self.map.to_physical(row)?;
        let bank = &mut self.banks[bank_idx];
        if bank.open != Some(phys) {
            return Err(Error::ProtocolViolation(format!(
                "WR of row {row} on bank {bank_idx} requires that row open"
            )));
        }
        bank.write_row(phys, pattern);
        Ok(())
    }

    fn refresh(&mut self) -> Result<()> {
        for (idx, bank) in self.banks.iter().enumerate() {
            if bank.open.is_some() {
                return Err(Error::ProtocolViolation(format!(
                    "REF requires all banks precharged; bank {idx} is open"
                )));
            }
        }
        let now = self.clock_ns + self.config.timing.t_ref_ns;
        self.clock_ns = now;
        self.refs_issued += 1;
        let rows = self.config.rows_per_bank;
        let rpr = self.config.regular_refresh.rows_per_ref;
        for off in 0..rpr {
            let row = (self.refresh_cursor + off) % rows;
            for bank_idx in 0..self.banks.len() {
                self.refresh_row(bank_idx, row, now, RefreshCause::Regular);
            }
        }
        self.refresh_cursor = (self.refresh_cursor + rpr) % rows;
        for detection in self.trr.on_ref(self.refs_issued) {
            let victims = self.trr.victims(&detection, rows);
            for &victim in &victims {
                self.refresh_row(detection.bank, victim, now, RefreshCause::Trr(detection.kind));
            }
            if let Some(log) = &mut self.trr_log {
                log.push(TrrEvent {
                    ref_index: self.refs_issued,
                    at_ns: now,
                    bank: detection.bank,
                    kind: detection.kind,
                    detected_row: detection.row,
                    refreshed_rows: victims,
                });
            }
        }
        Ok(())
    }

    fn refresh_row(&mut self, bank_idx: usize, row: usize, now: u64, cause: RefreshCause) {
        let toggle = self.toggle_ns;
        let bank = &mut self.banks[bank_idx];
        bank.materialize_row(row, now, toggle);
        bank.last_refresh_ns[row] = now;
        bank.disturbance[row] = 0.0;
        bank.last_side[row] = 0;
        if !self.watch_rows.is_empty() && self.watch_rows.contains(&(bank_idx, row)) {
            self.watch_events.push(RefreshEvent {
                at_ns: now,
                ref_index: self.refs_issued,
                bank: bank_idx,
                row,
                cause,
            });
        }
    }

    pub fn clock_ns(&self) -> u64 {
        self.clock_ns
    }

    pub fn acts_issued(&self) -> u64 {
        self.acts_issued
    }

    pub fn refs_issued(&self) -> u64 {
        self.refs_issued
    }

    pub fn banks(&self) -> usize {
        self.banks.len()
    }

    pub fn rows_per_bank(&self) -> usize {
        self.config.rows_per_bank
    }

    pub fn row_bits(&self) -> usize {
        self.config.row_bits
    }

    pub fn timing(&self) -> &config::TimingParams {
        &self.config.timing
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn to_physical(&self, logical: usize) -> Result<usize> {
        self.map.to_physical(logical)
    }

    pub fn to_logical(&self, physical: usize) -> Result<usize> {
        self.map.to_logical(physical)
    }

    /// Ground-truth cell tables of one bank (physical row indexing). Test
    /// oracle; nothing in the analysis pipeline reads this.
    pub fn cells(&self, bank: usize) -> &BankCells {
        &self.banks[bank].cells
    }

    /// What the configured mechanism should look like to a perfect analyst.
    pub fn ground_truth(&self) -> TrrProfileGroundTruth {
        let trr = &self.config.trr;
        let (kind, capacity, per_bank, window_size, guarantee) = match &trr.variant {
            TrrVariant::None => (DetectionKind::None, None, None, None, None),
            TrrVariant::CounterBased(c) => {
                (DetectionKind::Counter, Some(c.table_size), Some(c.per_bank), None, None)
            }
            TrrVariant::SamplingBased(s) => (
                DetectionKind::Sampling,
                Some(s.capacity),
                Some(!s.shared_across_banks),
                None,
                Some(s.sample_guarantee_window),
            ),
            TrrVariant::WindowBased(w) => {
                (DetectionKind::Window, None, Some(true), Some(w.window_size), None)
            }
        };
        let active = kind != DetectionKind::None;
        TrrProfileGroundTruth {
            kind,
            trr_ref_ratio: active.then_some(trr.trr_ref_period),
            neighbors: active.then(|| trr.neighbor_span.clone()),
            capacity,
            per_bank,
            window_size,
            sampling_guarantee: guarantee,
            regular_refresh_period_refs: self.config.regular_refresh_period_refs(),
        }
    }

    /// Enable or disable the TRR action log. Disabled by default; the
    /// analysis pipeline must work without it.
    pub fn record_trr_actions(&mut self, enabled: bool) {
        match (enabled, self.trr_log.is_some()) {
            (true, false) => self.trr_log = Some(Vec::new()),
            (false, true) => self.trr_log = None,
            _ => {}
        }
    }

    pub fn trr_events(&self) -> &[TrrEvent] {
        self.trr_log.as_deref().unwrap_or(&[])
    }

    pub fn take_trr_events(&mut self) -> Vec<TrrEvent> {
        match &mut self.trr_log {
            Some(log) => std::mem::take(log),
            None => Vec::new(),
        }
    }

    /// Record every refresh (regular or TRR) of the given physical rows.
    pub fn watch_refreshes<I: IntoIterator<Item = (usize, usize)>>(&mut self, rows: I) {
        self.watch_rows.extend(rows);
    }

    pub fn clear_refresh_watches(&mut self) {
        self.watch_rows.clear();
        self.watch_events.clear();
    }

    pub fn refresh_events(&self) -> &[RefreshEvent] {
        &self.watch_events
    }

    pub fn take_refresh_events(&mut self) -> Vec<RefreshEvent> {
        std::mem::take(&mut self.watch_events)
    }

    /// Whitebox tracker reset; unit-test convenience. The command-level
    /// equivalent is a long quiet hammer-and-refresh sequence.
    pub fn reset_tracker_state(&mut self) {
        self.trr.reset();
    }
}
