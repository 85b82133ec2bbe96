//! Configuration for the in-device Target Row Refresh mechanisms. Each
//! variant describes one family of tracker hardware; a device embeds exactly
//! one (or none) and keeps its parameters secret from the analysis pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which physical rows a TRR-induced refresh targets, relative to the
/// detected aggressor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpanRepr", into = "SpanRepr")]
pub enum NeighborSpan {
    /// Fixed offsets, e.g. {-2,-1,+1,+2}.
    Offsets(Vec<i32>),
    /// Only the even/odd pair partner of the detected row.
    Pair,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SpanRepr {
    Name(String),
    Offsets(Vec<i32>),
}

impl From<NeighborSpan> for SpanRepr {
    fn from(span: NeighborSpan) -> Self {
        match span {
            NeighborSpan::Pair => SpanRepr::Name("pair".into()),
            NeighborSpan::Offsets(offsets) => SpanRepr::Offsets(offsets),
        }
    }
}

impl TryFrom<SpanRepr> for NeighborSpan {
    type Error = String;

    fn try_from(repr: SpanRepr) -> std::result::Result<Self, String> {
        match repr {
            SpanRepr::Name(name) if name == "pair" => Ok(NeighborSpan::Pair),
            SpanRepr::Name(name) => Err(format!("unknown neighbor span {name:?}")),
            SpanRepr::Offsets(offsets) => Ok(NeighborSpan::Offsets(offsets)),
        }
    }
}

impl NeighborSpan {
    /// Symmetric offsets out to the given distance: `up_to(2)` = {-2,-1,1,2}.
    pub fn up_to(distance: i32) -> Self {
        let mut offsets = Vec::new();
        for d in 1..=distance {
            offsets.push(-d);
            offsets.push(d);
        }
        offsets.sort_unstable();
        NeighborSpan::Offsets(offsets)
    }

    /// Rows a detection of `row` refreshes, clipped to the bank.
    pub fn victims(&self, row: usize, rows_per_bank: usize) -> Vec<usize> {
        match self {
            NeighborSpan::Pair => vec![row ^ 1].into_iter().filter(|&v| v < rows_per_bank).collect(),
            NeighborSpan::Offsets(offsets) => offsets
                .iter()
                .filter_map(|&off| {
                    let v = row as i64 + off as i64;
                    (v >= 0 && (v as usize) < rows_per_bank).then_some(v as usize)
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NeighborSpan::Offsets(offsets) = self {
            if offsets.is_empty() {
                return Err(Error::invalid("trr.neighbor_span", "offset set must be nonempty"));
            }
            if offsets.contains(&0) {
                return Err(Error::invalid("trr.neighbor_span", "offsets must be nonzero"));
            }
        }
        Ok(())
    }
}

/// Counter-table tracker: per-bank (or shared) tables of row activation
/// counters with bounded capacity. TRR-capable REFs alternate between a
/// max-counter detection and a table-pointer walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterBasedConfig {
    pub table_size: usize,
    pub per_bank: bool,
    pub evict_policy: EvictPolicy,
    pub reset_on_detect: bool,
    pub trefb_enabled: bool,
}

impl Default for CounterBasedConfig {
    fn default() -> Self {
        CounterBasedConfig {
            table_size: 16,
            per_bank: true,
            evict_policy: EvictPolicy::MinCounter,
            reset_on_detect: true,
            trefb_enabled: true,
        }
    }
}

/// Replacement policy when a counter table is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictPolicy {
    /// Evict the entry with the smallest counter (ties: oldest entry).
    MinCounter,
}

/// Single-slot sampling tracker: every g-th activation of the (global or
/// per-bank) ACT stream overwrites the slot, so any run of
/// `sample_guarantee_window` consecutive ACTs to one row is sampled at least
/// once. The sampled row's neighbors are refreshed on TRR-capable REFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingBasedConfig {
    pub capacity: usize,
    pub shared_across_banks: bool,
    pub sample_guarantee_window: usize,
    pub clear_on_trr: bool,
}

impl Default for SamplingBasedConfig {
    fn default() -> Self {
        SamplingBasedConfig {
            capacity: 1,
            shared_across_banks: true,
            sample_guarantee_window: 2048,
            clear_on_trr: false,
        }
    }
}

/// Per-bank activation-window tracker: records the first `window_size` ACT
/// row addresses since its last TRR-induced refresh, then picks one recorded
/// row per TRR-capable REF (deferring when nothing was recorded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBasedConfig {
    pub window_size: usize,
    pub defer_when_empty: bool,
    pub pick_policy: WindowPickPolicy,
}

impl Default for WindowBasedConfig {
    fn default() -> Self {
        WindowBasedConfig {
            window_size: 2048,
            defer_when_empty: true,
            pick_policy: WindowPickPolicy::RoundRobinWalk,
        }
    }
}

/// How a window tracker chooses among recorded activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPickPolicy {
    /// Deterministic walk over recorded entries, continuing across windows.
    RoundRobinWalk,
    /// Seeded random draw with weight window_size - index (earlier entries
    /// more likely).
    LinearDecay,
}

/// Tracker family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum TrrVariant {
    None,
    CounterBased(CounterBasedConfig),
    SamplingBased(SamplingBasedConfig),
    WindowBased(WindowBasedConfig),
}

/// Complete TRR mechanism description embedded in a device config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrrMechanismConfig {
    /// Every k-th REF command is TRR-capable.
    pub trr_ref_period: usize,
    pub neighbor_span: NeighborSpan,
    #[serde(flatten)]
    pub variant: TrrVariant,
}

impl TrrMechanismConfig {
    /// A device with no TRR at all.
    pub fn none() -> Self {
        TrrMechanismConfig {
            trr_ref_period: 1,
            neighbor_span: NeighborSpan::up_to(1),
            variant: TrrVariant::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trr_ref_period == 0 {
            return Err(Error::invalid("trr.trr_ref_period", "must be >= 1"));
        }
        self.neighbor_span.validate()?;
        match &self.variant {
            TrrVariant::None => {}
            TrrVariant::CounterBased(c) => {
                if c.table_size == 0 {
                    return Err(Error::invalid("trr.table_size", "must be >= 1"));
                }
            }
            TrrVariant::SamplingBased(s) => {
                if s.capacity != 1 {
                    return Err(Error::invalid("trr.capacity", "only capacity 1 is supported"));
                }
                if s.sample_guarantee_window == 0 {
                    return Err(Error::invalid("trr.sample_guarantee_window", "must be > 0"));
                }
            }
            TrrVariant::WindowBased(w) => {
                if w.window_size == 0 {
                    return Err(Error::invalid("trr.window_size", "must be > 0"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_victims_clip_to_bank_edges() {
        let span = NeighborSpan::up_to(2);
        assert_eq!(span.victims(0, 100), vec![1, 2]);
        assert_eq!(span.victims(50, 100), vec![48, 49, 51, 52]);
        assert_eq!(span.victims(99, 100), vec![97, 98]);
    }

    #[test]
    fn pair_span_targets_partner_only() {
        assert_eq!(NeighborSpan::Pair.victims(6, 100), vec![7]);
        assert_eq!(NeighborSpan::Pair.victims(7, 100), vec![6]);
    }

    #[test]
    fn span_round_trips_through_serde() {
        let pair: NeighborSpan = serde_json::from_str("\"pair\"").unwrap();
        assert_eq!(pair, NeighborSpan::Pair);
        let offsets: NeighborSpan = serde_json::from_str("[-1, 1]").unwrap();
        assert_eq!(offsets, NeighborSpan::Offsets(vec![-1, 1]));
        let json = serde_json::to_string(&NeighborSpan::Pair).unwrap();
        assert_eq!(json, "\"pair\"");
    }

    #[test]
    fn zero_offset_rejected() {
        let span = NeighborSpan::Offsets(vec![0, 1]);
        assert!(span.validate().is_err());
    }
}
