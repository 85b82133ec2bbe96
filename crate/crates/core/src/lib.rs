//! Command-level DRAM simulator with configurable in-device Target Row
//! Refresh, plus the analysis stack built on top of it: retention-based row
//! profiling, REF-synchronized TRR experiments, blind mechanism reverse
//! engineering, bypass pattern synthesis, and ECC impact analysis.
//!
//! The simulator exposes only a command interface (ACT/PRE/RD/WR/REF/WAIT)
//! plus address mapping; everything upstack treats retention failures as its
//! only side channel, exactly as on real hardware.

pub mod analyzer;
pub mod blind;
pub mod dram;
pub mod error;
pub mod presets;
pub mod reveng;
pub mod scout;
pub mod trr;

pub use dram::cells::{BankCells, RowCells, RowKind, VulnCell, WeakCell};
pub use dram::command::{CommandResult, DataPattern, DramCommand};
pub use dram::config::{
    DeviceConfig, DisturbanceModelConfig, RegularRefreshConfig, RetentionModelConfig,
    TimingParams, NS_PER_MS,
};
pub use dram::mapping::{MappingScheme, RowMap, RowMappingConfig};
pub use dram::{DramDevice, RefreshCause, RefreshEvent, TrrEvent, TrrProfileGroundTruth};
pub use analyzer::{
    infer_refresh_schedule, infer_regular_refresh_period, reset_trr_state, run_experiment,
    verify_adjacency, ExperimentAggressor, ExperimentConfig, ExperimentResult, HammerMode,
    ProbeOutcome, RefreshAttribution, RegularSchedule, RoundTrace,
};
pub use blind::BlindDevice;
pub use error::{Error, Result};
pub use presets::{catalog, catalog_device, catalog_entry, desk_preset, CatalogEntry, DESK_PRESET_NAMES};
pub use reveng::{
    EvictionVerdict, EvidenceRecord, InferredKind, InferredTrrProfile, PersistenceLabel,
    ProfileSession, RefRatio, ResetVerdict, RevengConfig, SpanResult,
};
pub use scout::{find_row_groups, scan_failing_rows, GroupLayout, RowGroup, RowScoutConfig};
pub use trr::{
    CounterBasedConfig, DetectionKind, EvictPolicy, NeighborSpan, SamplingBasedConfig,
    TrrMechanismConfig, TrrRefKind, TrrVariant, WindowBasedConfig, WindowPickPolicy,
};
