//! Ready-made device configurations.
//!
//! Two tiers are provided. Desk presets are small geometries (a few thousand
//! rows per bank) that keep full experiment pipelines fast enough for tests
//! while exercising every tracker family. The catalog models commodity DDR4
//! modules at realistic scale, grouped into three vendor families that share
//! tracker templates but differ in geometry and disturbance sensitivity.

use std::sync::OnceLock;

use serde::Deserialize;

use crate::dram::config::{
    DeviceConfig, DisturbanceModelConfig, RegularRefreshConfig, RetentionModelConfig, TimingParams,
};
use crate::dram::mapping::RowMappingConfig;
use crate::error::{Error, Result};
use crate::trr::{
    CounterBasedConfig, EvictPolicy, NeighborSpan, SamplingBasedConfig, TrrMechanismConfig,
    TrrVariant, WindowBasedConfig, WindowPickPolicy,
};

/// Names accepted by [`desk_preset`], in canonical order.
pub const DESK_PRESET_NAMES: [&str; 9] = [
    "baseline", "A_TRR1", "A_TRR2", "B_TRR1", "B_TRR2", "B_TRR3", "C_TRR1", "C_TRR2", "C_TRR3",
];

/// Builds the tracker template registered under `name`.
///
/// The template fixes the TRR-capable REF cadence and the tracker family
/// plus its parameters; the refresh span around a detected aggressor varies
/// per device, so the caller supplies it.
pub fn mechanism_config(name: &str, span: NeighborSpan) -> Result<TrrMechanismConfig> {
    let (trr_ref_period, variant) = match name {
        "none" => (1, TrrVariant::None),
        "A_TRR1" | "A_TRR2" => (
            9,
            TrrVariant::CounterBased(CounterBasedConfig {
                table_size: 16,
                per_bank: true,
                evict_policy: EvictPolicy::MinCounter,
                reset_on_detect: true,
                trefb_enabled: true,
            }),
        ),
        "B_TRR1" => (
            4,
            TrrVariant::SamplingBased(SamplingBasedConfig {
                capacity: 1,
                shared_across_banks: true,
                sample_guarantee_window: 2048,
                clear_on_trr: false,
            }),
        ),
        "B_TRR2" => (
            9,
            TrrVariant::SamplingBased(SamplingBasedConfig {
                capacity: 1,
                shared_across_banks: true,
                sample_guarantee_window: 2048,
                clear_on_trr: false,
            }),
        ),
        "B_TRR3" => (
            2,
            TrrVariant::SamplingBased(SamplingBasedConfig {
                capacity: 1,
                shared_across_banks: false,
                sample_guarantee_window: 2048,
                clear_on_trr: false,
            }),
        ),
        "C_TRR1" | "C_TRR2" => (
            if name == "C_TRR1" { 17 } else { 9 },
            TrrVariant::WindowBased(WindowBasedConfig {
                window_size: 2048,
                defer_when_empty: true,
                pick_policy: WindowPickPolicy::RoundRobinWalk,
            }),
        ),
        "C_TRR3" => (
            8,
            TrrVariant::WindowBased(WindowBasedConfig {
                window_size: 1024,
                defer_when_empty: true,
                pick_policy: WindowPickPolicy::RoundRobinWalk,
            }),
        ),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    let config = TrrMechanismConfig { trr_ref_period, neighbor_span: span, variant };
    config.validate()?;
    Ok(config)
}

struct DeskShape {
    rows_per_bank: usize,
    mechanism: &'static str,
    span: NeighborSpan,
    hc_first: u64,
    weak_retention_min_ms: u64,
    weak_retention_max_ms: u64,
    paired_rows: bool,
}

fn desk_shape(name: &str) -> Result<DeskShape> {
    let shape = match name {
        "baseline" => DeskShape {
            rows_per_bank: 8192,
            mechanism: "none",
            span: NeighborSpan::up_to(1),
            hc_first: 2000,
            weak_retention_min_ms: 100,
            weak_retention_max_ms: 150,
            paired_rows: false,
        },
        "A_TRR1" | "A_TRR2" => DeskShape {
            rows_per_bank: 3758,
            mechanism: name_static(name),
            span: NeighborSpan::up_to(2),
            hc_first: if name == "A_TRR1" { 29_000 } else { 27_500 },
            weak_retention_min_ms: 100,
            weak_retention_max_ms: 150,
            paired_rows: false,
        },
        "B_TRR1" | "B_TRR2" | "B_TRR3" => DeskShape {
            rows_per_bank: 4096,
            mechanism: name_static(name),
            span: NeighborSpan::up_to(1),
            hc_first: 1100,
            weak_retention_min_ms: 100,
            weak_retention_max_ms: 150,
            paired_rows: false,
        },
        "C_TRR1" | "C_TRR2" => DeskShape {
            rows_per_bank: 8192,
            mechanism: name_static(name),
            span: NeighborSpan::Pair,
            hc_first: if name == "C_TRR1" { 4000 } else { 1500 },
            weak_retention_min_ms: 300,
            weak_retention_max_ms: 350,
            paired_rows: true,
        },
        "C_TRR3" => DeskShape {
            rows_per_bank: 8192,
            mechanism: "C_TRR3",
            span: NeighborSpan::up_to(1),
            hc_first: 1500,
            weak_retention_min_ms: 300,
            weak_retention_max_ms: 350,
            paired_rows: false,
        },
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(shape)
}

fn name_static(name: &str) -> &'static str {
    DESK_PRESET_NAMES
        .iter()
        .copied()
        .find(|n| *n == name)
        .expect("desk_shape only forwards known names")
}

/// Builds a small-geometry device configuration by preset name.
///
/// All desk presets use 4 banks of 1 Kbit rows with identity row mapping and
/// a one-row-per-REF refresh walk, so a full refresh pass takes exactly
/// `rows_per_bank` REF commands. They differ in tracker family, refresh span,
/// disturbance sensitivity, and the retention grid of their weak rows.
pub fn desk_preset(name: &str, seed: u64) -> Result<DeviceConfig> {
    let shape = desk_shape(name)?;
    let config = DeviceConfig {
        banks: 4,
        rows_per_bank: shape.rows_per_bank,
        row_bits: 1024,
        timing: TimingParams::default(),
        retention: RetentionModelConfig {
            weak_retention_min_ms: shape.weak_retention_min_ms,
            weak_retention_max_ms: shape.weak_retention_max_ms,
            ..RetentionModelConfig::default()
        },
        disturbance: DisturbanceModelConfig {
            hc_first: shape.hc_first,
            paired_rows: shape.paired_rows,
            ..DisturbanceModelConfig::default()
        },
        mapping: RowMappingConfig::default(),
        regular_refresh: RegularRefreshConfig::default(),
        trr: mechanism_config(shape.mechanism, shape.span)?,
        seed,
    };
    config.validate()?;
    Ok(config)
}

/// One modeled module from the bundled device catalog.
#[derive(Debug, Clone, Deserialize)]
pub struct CatalogEntry {
    /// Catalog identifier, e.g. `"A0"`.
    pub name: String,
    /// Nominal die density in gigabits.
    pub density_gbit: u32,
    /// Rank count on the module. The simulator models a single rank; multi-
    /// rank modules are profiled one rank at a time.
    pub ranks: u32,
    /// Banks per rank.
    pub banks: usize,
    /// Data pin width (x8 or x16). Determines row width and, downstream, how
    /// codewords stripe across chips for error-correction analysis.
    pub data_pins: u32,
    /// Rows per bank, including any spare tail the refresh walk covers.
    pub rows_per_bank: usize,
    /// Rows refreshed per bank by one REF command.
    pub rows_per_ref: usize,
    /// Double-sided per-aggressor activation count at the first observed
    /// bit flip.
    pub hc_first: u64,
    /// Tracker template name, resolved via [`mechanism_config`].
    pub mechanism: String,
    /// Refresh span around a detected aggressor.
    pub span: NeighborSpan,
}

impl CatalogEntry {
    /// Bits per row: 1 Kbit per data pin.
    pub fn row_bits(&self) -> usize {
        self.data_pins as usize * 1024
    }

    /// REF commands needed to refresh every row once.
    pub fn refresh_period_refs(&self) -> usize {
        self.rows_per_bank.div_ceil(self.rows_per_ref)
    }

    /// Instantiates the full device configuration for this module.
    pub fn device_config(&self, seed: u64) -> Result<DeviceConfig> {
        let config = DeviceConfig {
            banks: self.banks,
            rows_per_bank: self.rows_per_bank,
            row_bits: self.row_bits(),
            timing: TimingParams::default(),
            retention: RetentionModelConfig::default(),
            disturbance: DisturbanceModelConfig {
                hc_first: self.hc_first,
                paired_rows: matches!(self.span, NeighborSpan::Pair),
                ..DisturbanceModelConfig::default()
            },
            mapping: RowMappingConfig::default(),
            regular_refresh: RegularRefreshConfig {
                rows_per_ref: self.rows_per_ref,
                full_pass_period_refs: self.refresh_period_refs(),
            },
            trr: mechanism_config(&self.mechanism, self.span.clone())?,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Deserialize)]
struct CatalogFile {
    device: Vec<CatalogEntry>,
}

/// All catalog entries, in file order.
pub fn catalog() -> &'static [CatalogEntry] {
    static CATALOG: OnceLock<Vec<CatalogEntry>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let raw = include_str!("presets/catalog.toml");
        let file: CatalogFile =
            toml::from_str(raw).expect("bundled catalog must stay parseable");
        file.device
    })
}

/// Looks up one catalog entry by name.
pub fn catalog_entry(name: &str) -> Result<&'static CatalogEntry> {
    catalog()
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// Instantiates a catalog module as a device configuration.
pub fn catalog_device(name: &str, seed: u64) -> Result<DeviceConfig> {
    catalog_entry(name)?.device_config(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dram::DramDevice;
    use crate::trr::DetectionKind;

    #[test]
    fn every_desk_preset_builds_a_device() {
        for name in DESK_PRESET_NAMES {
            let config = desk_preset(name, 7).unwrap();
            let device = DramDevice::new(config).unwrap();
            assert_eq!(device.config().banks, 4, "{name}");
        }
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(matches!(desk_preset("A_TRR9", 0), Err(Error::UnknownPreset(_))));
        assert!(matches!(catalog_entry("Z3"), Err(Error::UnknownPreset(_))));
        assert!(matches!(
            mechanism_config("D_TRR1", NeighborSpan::up_to(1)),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn desk_ground_truth_matches_tracker_table() {
        let expect: [(&str, DetectionKind, usize, Option<usize>, Option<bool>); 8] = [
            ("A_TRR1", DetectionKind::Counter, 9, Some(16), Some(true)),
            ("A_TRR2", DetectionKind::Counter, 9, Some(16), Some(true)),
            ("B_TRR1", DetectionKind::Sampling, 4, Some(1), Some(false)),
            ("B_TRR2", DetectionKind::Sampling, 9, Some(1), Some(false)),
            ("B_TRR3", DetectionKind::Sampling, 2, Some(1), Some(true)),
            ("C_TRR1", DetectionKind::Window, 17, None, Some(true)),
            ("C_TRR2", DetectionKind::Window, 9, None, Some(true)),
            ("C_TRR3", DetectionKind::Window, 8, None, Some(true)),
        ];
        for (name, kind, ratio, capacity, per_bank) in expect {
            let device = DramDevice::new(desk_preset(name, 1).unwrap()).unwrap();
            let truth = device.ground_truth();
            assert_eq!(truth.kind, kind, "{name}");
            assert_eq!(truth.trr_ref_ratio, Some(ratio), "{name}");
            assert_eq!(truth.capacity, capacity, "{name}");
            assert_eq!(truth.per_bank, per_bank, "{name}");
        }
    }

    #[test]
    fn desk_spans_follow_family_defaults() {
        for name in ["A_TRR1", "A_TRR2"] {
            let config = desk_preset(name, 0).unwrap();
            assert_eq!(config.trr.neighbor_span, NeighborSpan::up_to(2), "{name}");
        }
        for name in ["B_TRR1", "B_TRR2", "B_TRR3", "C_TRR3"] {
            let config = desk_preset(name, 0).unwrap();
            assert_eq!(config.trr.neighbor_span, NeighborSpan::up_to(1), "{name}");
        }
        for name in ["C_TRR1", "C_TRR2"] {
            let config = desk_preset(name, 0).unwrap();
            assert_eq!(config.trr.neighbor_span, NeighborSpan::Pair, "{name}");
            assert!(config.disturbance.paired_rows, "{name}");
        }
    }

    #[test]
    fn catalog_parses_with_unique_names() {
        let entries = catalog();
        assert_eq!(entries.len(), 45);
        let mut names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 45, "duplicate catalog names");
    }

    #[test]
    fn every_catalog_entry_validates() {
        for entry in catalog() {
            let config = entry.device_config(3).unwrap();
            assert_eq!(config.rows_per_bank, entry.rows_per_bank, "{}", entry.name);
            assert_eq!(
                config.regular_refresh.full_pass_period_refs,
                entry.refresh_period_refs(),
                "{}",
                entry.name
            );
        }
    }

    #[test]
    fn vendor_a_refresh_walk_divides_evenly() {
        let entry = catalog_entry("A0").unwrap();
        assert_eq!(entry.refresh_period_refs(), 3758);
        assert_eq!(entry.rows_per_bank % entry.rows_per_ref, 0);
    }

    #[test]
    fn catalog_ground_truth_examples() {
        let a0 = DramDevice::new(catalog_device("A0", 5).unwrap()).unwrap();
        let truth = a0.ground_truth();
        assert_eq!(truth.kind, DetectionKind::Counter);
        assert_eq!(truth.trr_ref_ratio, Some(9));
        assert_eq!(truth.capacity, Some(16));
        assert_eq!(truth.per_bank, Some(true));
        assert_eq!(truth.neighbors, Some(NeighborSpan::up_to(2)));
        assert_eq!(truth.regular_refresh_period_refs, 3758);

        let b0 = DramDevice::new(catalog_device("B0", 5).unwrap()).unwrap();
        let truth = b0.ground_truth();
        assert_eq!(truth.kind, DetectionKind::Sampling);
        assert_eq!(truth.trr_ref_ratio, Some(4));
        assert_eq!(truth.capacity, Some(1));
        assert_eq!(truth.per_bank, Some(false));
        assert_eq!(truth.sampling_guarantee, Some(2048));

        let c7 = DramDevice::new(catalog_device("C7", 5).unwrap()).unwrap();
        let truth = c7.ground_truth();
        assert_eq!(truth.kind, DetectionKind::Window);
        assert_eq!(truth.trr_ref_ratio, Some(17));
        assert_eq!(truth.neighbors, Some(NeighborSpan::Pair));
        assert_eq!(truth.window_size, Some(2048));
    }

    #[test]
    fn catalog_geometry_is_self_consistent() {
        for entry in catalog() {
            let walked = entry.refresh_period_refs() * entry.rows_per_ref;
            assert!(walked >= entry.rows_per_bank, "{}", entry.name);
            assert_eq!(entry.row_bits() % 1024, 0, "{}", entry.name);
            let family = entry.name.chars().next().unwrap();
            let mech_family = entry.mechanism.chars().next().unwrap();
            assert_eq!(family, mech_family, "{}", entry.name);
        }
    }
}
