//! Logical-to-physical row address mapping. Real modules scramble row
//! addresses and remap faulty rows to spares, so physically adjacent rows are
//! not necessarily adjacent in the logical address space. All adjacency
//! reasoning in the crate happens on physical addresses; commands take
//! logical addresses and are translated on issue.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Address translation scheme applied uniformly to every bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum MappingScheme {
    /// physical = logical.
    Identity,
    /// physical = logical XOR mask; requires a power-of-two row count.
    XorScramble { mask: usize },
    /// Reverse row order within fixed-size blocks.
    BlockReverse { block_size: usize },
}

/// Mapping scheme plus post-manufacturing repair remaps. Each remap routes a
/// logical row to a spare physical row; the displaced image is swapped back
/// so the mapping stays a bijection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMappingConfig {
    #[serde(flatten)]
    pub scheme: MappingScheme,
    #[serde(default)]
    pub remapped_rows: Vec<(usize, usize)>,
}

impl Default for RowMappingConfig {
    fn default() -> Self {
        RowMappingConfig {
            scheme: MappingScheme::Identity,
            remapped_rows: Vec::new(),
        }
    }
}

impl RowMappingConfig {
    pub fn validate(&self, rows_per_bank: usize) -> Result<()> {
        match self.scheme {
            MappingScheme::Identity => {}
            MappingScheme::XorScramble { mask } => {
                if !rows_per_bank.is_power_of_two() {
                    return Err(Error::invalid(
                        "mapping.scheme",
                        "xor_scramble requires a power-of-two rows_per_bank",
                    ));
                }
                if mask >= rows_per_bank {
                    return Err(Error::invalid("mapping.mask", "mask must be < rows_per_bank"));
                }
            }
            MappingScheme::BlockReverse { block_size } => {
                if block_size == 0 || rows_per_bank % block_size != 0 {
                    return Err(Error::invalid(
                        "mapping.block_size",
                        "block_size must divide rows_per_bank",
                    ));
                }
            }
        }
        let mut seen_logical = std::collections::HashSet::new();
        let mut seen_spare = std::collections::HashSet::new();
        for &(logical, spare) in &self.remapped_rows {
            if logical >= rows_per_bank || spare >= rows_per_bank {
                return Err(Error::invalid(
                    "mapping.remapped_rows",
                    format!("remap ({logical} -> {spare}) outside the bank"),
                ));
            }
            if !seen_logical.insert(logical) || !seen_spare.insert(spare) {
                return Err(Error::invalid(
                    "mapping.remapped_rows",
                    "duplicate logical row or spare target",
                ));
            }
        }
        Ok(())
    }
}

/// Materialized bijection with O(1) translation both ways.
#[derive(Debug, Clone)]
pub struct RowMap {
    forward: Vec<u32>,
    inverse: Vec<u32>,
}

impl RowMap {
    /// Build the forward/inverse tables. The config must already validate.
    pub fn build(config: &RowMappingConfig, rows_per_bank: usize) -> Self {
        let mut forward: Vec<u32> = (0..rows_per_bank as u32).collect();
        match config.scheme {
            MappingScheme::Identity => {}
            MappingScheme::XorScramble { mask } => {
                for (logical, slot) in forward.iter_mut().enumerate() {
                    *slot = (logical ^ mask) as u32;
                }
            }
            MappingScheme::BlockReverse { block_size } => {
                for (logical, slot) in forward.iter_mut().enumerate() {
                    let base = logical - logical % block_size;
                    let offset = logical - base;
                    *slot = (base + block_size - 1 - offset) as u32;
                }
            }
        }
        let mut inverse = vec![0u32; rows_per_bank];
        for (logical, &physical) in forward.iter().enumerate() {
            inverse[physical as usize] = logical as u32;
        }
        // Route each remapped logical row to its spare by swapping images,
        // which preserves the bijection without touching other rows.
        for &(logical, spare) in &config.remapped_rows {
            let old = forward[logical] as usize;
            let displaced = inverse[spare] as usize;
            forward[logical] = spare as u32;
            forward[displaced] = old as u32;
            inverse[spare] = logical as u32;
            inverse[old] = displaced as u32;
        }
        RowMap { forward, inverse }
    }

    pub fn rows(&self) -> usize {
        self.forward.len()
    }

    pub fn to_physical(&self, logical: usize) -> Result<usize> {
        self.forward
            .get(logical)
            .map(|&p| p as usize)
            .ok_or(Error::OutOfRange {
                row: logical,
                rows_per_bank: self.forward.len(),
            })
    }

    pub fn to_logical(&self, physical: usize) -> Result<usize> {
        self.inverse
            .get(physical)
            .map(|&l| l as usize)
            .ok_or(Error::OutOfRange {
                row: physical,
                rows_per_bank: self.inverse.len(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(config: RowMappingConfig, rows: usize) -> RowMap {
        config.validate(rows).unwrap();
        RowMap::build(&config, rows)
    }

    #[test]
    fn identity_maps_row_to_itself() {
        let m = map(RowMappingConfig::default(), 128);
        assert_eq!(m.to_physical(7).unwrap(), 7);
    }

    #[test]
    fn xor_scramble_mask_one_maps_6_to_7() {
        let m = map(
            RowMappingConfig {
                scheme: MappingScheme::XorScramble { mask: 1 },
                remapped_rows: Vec::new(),
            },
            128,
        );
        assert_eq!(m.to_physical(6).unwrap(), 7);
        assert_eq!(m.to_physical(7).unwrap(), 6);
    }

    #[test]
    fn block_reverse_reverses_within_blocks() {
        let m = map(
            RowMappingConfig {
                scheme: MappingScheme::BlockReverse { block_size: 4 },
                remapped_rows: Vec::new(),
            },
            128,
        );
        assert_eq!(m.to_physical(0).unwrap(), 3);
        assert_eq!(m.to_physical(3).unwrap(), 0);
        assert_eq!(m.to_physical(5).unwrap(), 6);
    }

    #[test]
    fn every_scheme_is_a_bijection_over_a_4k_bank() {
        let rows = 4096;
        let configs = [
            RowMappingConfig::default(),
            RowMappingConfig {
                scheme: MappingScheme::XorScramble { mask: 0x2a5 },
                remapped_rows: vec![(17, 4090), (1000, 4095)],
            },
            RowMappingConfig {
                scheme: MappingScheme::BlockReverse { block_size: 64 },
                remapped_rows: vec![(0, 4000)],
            },
        ];
        for config in configs {
            let m = map(config, rows);
            for logical in 0..rows {
                let physical = m.to_physical(logical).unwrap();
                assert_eq!(m.to_logical(physical).unwrap(), logical);
            }
            let mut targets: Vec<usize> =
                (0..rows).map(|l| m.to_physical(l).unwrap()).collect();
            targets.sort_unstable();
            targets.dedup();
            assert_eq!(targets.len(), rows);
        }
    }

    #[test]
    fn remap_routes_logical_row_to_spare() {
        let m = map(
            RowMappingConfig {
                scheme: MappingScheme::Identity,
                remapped_rows: vec![(10, 120)],
            },
            128,
        );
        assert_eq!(m.to_physical(10).unwrap(), 120);
        assert_eq!(m.to_physical(120).unwrap(), 10);
        assert_eq!(m.to_logical(120).unwrap(), 10);
    }

    #[test]
    fn out_of_range_row_is_an_error() {
        let m = map(RowMappingConfig::default(), 128);
        assert!(matches!(m.to_physical(128), Err(Error::OutOfRange { .. })));
    }
}
