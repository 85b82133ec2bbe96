//! Device configuration: geometry, timing, retention and disturbance models,
//! regular-refresh schedule. Validation lives here so every construction path
//! (presets, files, hand-built tests) rejects the same bad inputs.

use serde::{Deserialize, Serialize};

use crate::dram::mapping::RowMappingConfig;
use crate::error::{Error, Result};
use crate::trr::TrrMechanismConfig;

pub const NS_PER_MS: u64 = 1_000_000;

/// Full description of a simulated device. `seed` drives every random draw
/// (cell placement, retention values, tracker phases), so equal configs with
/// equal seeds materialize bit-identical devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub banks: usize,
    pub rows_per_bank: usize,
    /// Bits per row; multiple of 64.
    pub row_bits: usize,
    pub timing: TimingParams,
    pub retention: RetentionModelConfig,
    pub disturbance: DisturbanceModelConfig,
    pub mapping: RowMappingConfig,
    pub regular_refresh: RegularRefreshConfig,
    pub trr: TrrMechanismConfig,
    pub seed: u64,
}

/// Command timing constraints, all in nanoseconds of virtual time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    /// Minimum ACT-to-PRE spacing on a bank (row active time).
    pub t_act_to_pre_ns: u64,
    /// Minimum PRE-to-ACT spacing on a bank (precharge time).
    pub t_pre_to_act_ns: u64,
    /// REF latency; all banks must be precharged.
    pub t_ref_ns: u64,
    /// Sliding window for the activation-rate limit.
    pub t_faw_window_ns: u64,
    /// Maximum ACTs allowed inside one `t_faw_window_ns`.
    pub max_acts_in_window: usize,
    /// Nominal spacing between REF commands.
    pub ref_interval_ns: u64,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            t_act_to_pre_ns: 35,
            t_pre_to_act_ns: 15,
            t_ref_ns: 350,
            t_faw_window_ns: 50,
            max_acts_in_window: 4,
            ref_interval_ns: 7_800,
        }
    }
}

impl TimingParams {
    /// Duration of one full hammer cycle (ACT, row active, PRE, precharge).
    pub fn hammer_cycle_ns(&self) -> u64 {
        self.t_act_to_pre_ns + self.t_pre_to_act_ns
    }

    /// How many ACT+PRE cycles fit in one REF interval per bank after paying
    /// for the REF itself. 149 at default timings.
    pub fn hammers_per_ref_interval(&self) -> usize {
        ((self.ref_interval_ns - self.t_ref_ns) / self.hammer_cycle_ns()) as usize
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("timing.t_act_to_pre_ns", self.t_act_to_pre_ns),
            ("timing.t_pre_to_act_ns", self.t_pre_to_act_ns),
            ("timing.t_ref_ns", self.t_ref_ns),
            ("timing.t_faw_window_ns", self.t_faw_window_ns),
            ("timing.ref_interval_ns", self.ref_interval_ns),
        ] {
            if v == 0 {
                return Err(Error::invalid(field, "must be > 0"));
            }
        }
        if self.max_acts_in_window == 0 {
            return Err(Error::invalid("timing.max_acts_in_window", "must be > 0"));
        }
        if self.ref_interval_ns <= self.t_ref_ns {
            return Err(Error::invalid(
                "timing.ref_interval_ns",
                "must exceed t_ref_ns",
            ));
        }
        Ok(())
    }
}

/// Per-cell retention model. Ordinary rows retain for `base_retention_ms`;
/// a seeded fraction of rows carry 1..=n weak cells whose retention is drawn
/// from a quantized range, and a further fraction toggle between two drawn
/// values on a fixed period (variable retention time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionModelConfig {
    pub base_retention_ms: u64,
    pub weak_row_fraction: f64,
    pub weak_retention_min_ms: u64,
    pub weak_retention_max_ms: u64,
    /// Inclusive range of weak cells drawn per weak row.
    pub weak_cells_per_weak_row: (u32, u32),
    pub vrt_row_fraction: f64,
    pub vrt_toggle_period_ms: u64,
    /// Granularity at which retention values are drawn.
    pub retention_quantum_ms: u64,
}

impl Default for RetentionModelConfig {
    fn default() -> Self {
        RetentionModelConfig {
            base_retention_ms: 10_000,
            weak_row_fraction: 0.65,
            weak_retention_min_ms: 100,
            weak_retention_max_ms: 600,
            weak_cells_per_weak_row: (1, 2),
            vrt_row_fraction: 0.02,
            vrt_toggle_period_ms: 500,
            retention_quantum_ms: 50,
        }
    }
}

impl RetentionModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.retention_quantum_ms == 0 {
            return Err(Error::invalid("retention.retention_quantum_ms", "must be > 0"));
        }
        if self.weak_retention_min_ms < 2 * self.retention_quantum_ms {
            return Err(Error::invalid(
                "retention.weak_retention_min_ms",
                "must be at least two retention quanta",
            ));
        }
        if self.weak_retention_max_ms < self.weak_retention_min_ms {
            return Err(Error::invalid(
                "retention.weak_retention_max_ms",
                "must be >= weak_retention_min_ms",
            ));
        }
        for (field, f) in [
            ("retention.weak_row_fraction", self.weak_row_fraction),
            ("retention.vrt_row_fraction", self.vrt_row_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(field, "must be in [0, 1]"));
            }
        }
        if self.weak_row_fraction + self.vrt_row_fraction > 1.0 {
            return Err(Error::invalid(
                "retention.weak_row_fraction",
                "weak + vrt fractions must not exceed 1",
            ));
        }
        if self.weak_cells_per_weak_row.0 == 0
            || self.weak_cells_per_weak_row.1 < self.weak_cells_per_weak_row.0
        {
            return Err(Error::invalid(
                "retention.weak_cells_per_weak_row",
                "range must be nonempty and start at >= 1",
            ));
        }
        if self.vrt_toggle_period_ms == 0 {
            return Err(Error::invalid("retention.vrt_toggle_period_ms", "must be > 0"));
        }
        if self.vrt_row_fraction > 0.0
            && self.weak_retention_max_ms < self.weak_retention_min_ms + self.retention_quantum_ms
        {
            return Err(Error::invalid(
                "retention.vrt_row_fraction",
                "variable-retention rows need at least two distinct retention grid points",
            ));
        }
        if self.base_retention_ms <= self.weak_retention_max_ms {
            return Err(Error::invalid(
                "retention.base_retention_ms",
                "must exceed weak_retention_max_ms",
            ));
        }
        Ok(())
    }
}

/// RowHammer disturbance model. `hc_first` is the per-aggressor double-sided
/// hammer count at which the weakest victim cell flips; each vulnerable
/// cell's threshold is drawn in [2*hc_first, 2*hc_first*spread].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceModelConfig {
    pub hc_first: u64,
    /// Per-cell threshold multiplier range upper bound (>= 1).
    pub per_cell_threshold_spread: f64,
    /// Disturbance divisor for victims two rows away (>= 4).
    pub distance2_factor: f64,
    /// Divisor applied to repeated same-side hammers (>= 2).
    pub single_sided_factor: f64,
    /// Confine disturbance to even/odd row pairs (vendor-C style).
    pub paired_rows: bool,
    /// Inclusive range of vulnerable cells drawn per row.
    pub vulnerable_cells_per_row: (u32, u32),
}

impl Default for DisturbanceModelConfig {
    fn default() -> Self {
        DisturbanceModelConfig {
            hc_first: 2_000,
            per_cell_threshold_spread: 1.25,
            distance2_factor: 4.0,
            single_sided_factor: 4.0,
            paired_rows: false,
            vulnerable_cells_per_row: (2, 3),
        }
    }
}

impl DisturbanceModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hc_first == 0 {
            return Err(Error::invalid("disturbance.hc_first", "must be > 0"));
        }
        if self.per_cell_threshold_spread < 1.0 {
            return Err(Error::invalid(
                "disturbance.per_cell_threshold_spread",
                "must be >= 1",
            ));
        }
        if self.distance2_factor < 4.0 {
            return Err(Error::invalid("disturbance.distance2_factor", "must be >= 4"));
        }
        if self.single_sided_factor < 2.0 {
            return Err(Error::invalid(
                "disturbance.single_sided_factor",
                "must be >= 2",
            ));
        }
        if self.vulnerable_cells_per_row.0 == 0
            || self.vulnerable_cells_per_row.1 < self.vulnerable_cells_per_row.0
        {
            return Err(Error::invalid(
                "disturbance.vulnerable_cells_per_row",
                "range must be nonempty and start at >= 1",
            ));
        }
        Ok(())
    }
}

/// Regular (non-TRR) refresh schedule: each REF refreshes `rows_per_ref`
/// consecutive physical rows per bank, walking the bank round-robin, so every
/// row is refreshed once per rows_per_bank / rows_per_ref REF commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularRefreshConfig {
    pub rows_per_ref: usize,
    /// REF commands between two regular refreshes of the same row.
    pub full_pass_period_refs: usize,
}

impl Default for RegularRefreshConfig {
    fn default() -> Self {
        RegularRefreshConfig {
            rows_per_ref: 1,
            full_pass_period_refs: 8192,
        }
    }
}

impl DeviceConfig {
    /// Check every invariant; names the first violated field.
    pub fn validate(&self) -> Result<()> {
        if !(1..=64).contains(&self.banks) {
            return Err(Error::invalid("banks", "must be in 1..=64"));
        }
        if self.rows_per_bank < 64 {
            return Err(Error::invalid("rows_per_bank", "must be >= 64"));
        }
        if self.row_bits < 64 || self.row_bits % 64 != 0 {
            return Err(Error::invalid("row_bits", "must be a positive multiple of 64"));
        }
        self.timing.validate()?;
        self.retention.validate()?;
        self.disturbance.validate()?;
        self.mapping.validate(self.rows_per_bank)?;
        if self.regular_refresh.rows_per_ref == 0 {
            return Err(Error::invalid("regular_refresh.rows_per_ref", "must be > 0"));
        }
        if self.regular_refresh.rows_per_ref * self.regular_refresh.full_pass_period_refs
            < self.rows_per_bank
        {
            return Err(Error::invalid(
                "regular_refresh.full_pass_period_refs",
                "rows_per_ref * full_pass_period_refs must cover the bank",
            ));
        }
        self.trr.validate()?;
        Ok(())
    }

    /// Effective per-row regular refresh period in REF commands.
    pub fn regular_refresh_period_refs(&self) -> usize {
        self.rows_per_bank.div_ceil(self.regular_refresh.rows_per_ref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_timing_budget_is_149_hammers_per_interval() {
        let t = TimingParams::default();
        assert_eq!(t.hammer_cycle_ns(), 50);
        assert_eq!(t.hammers_per_ref_interval(), 149);
    }

    #[test]
    fn zero_duration_rejected() {
        let mut t = TimingParams::default();
        t.t_ref_ns = 0;
        assert!(matches!(t.validate(), Err(Error::InvalidConfig { .. })));
    }

    #[test]
    fn weak_retention_below_two_quanta_rejected() {
        let mut r = RetentionModelConfig::default();
        r.weak_retention_min_ms = 60;
        let err = r.validate().unwrap_err();
        match err {
            Error::InvalidConfig { field, .. } => {
                assert_eq!(field, "retention.weak_retention_min_ms")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
