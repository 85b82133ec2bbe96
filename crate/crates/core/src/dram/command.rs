//! The command-level interface to a device. Rows in commands are logical
//! addresses; the device applies its address mapping internally.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Data written to a row. The compact variants cover the patterns the
/// analysis pipeline uses; `Words` carries arbitrary row images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataPattern {
    AllOnes,
    AllZeros,
    Words(Arc<Vec<u64>>),
}

impl DataPattern {
    /// Materialize the row image for a row of `row_bits` bits.
    pub fn to_words(&self, row_bits: usize) -> Vec<u64> {
        let n = row_bits / 64;
        match self {
            DataPattern::AllOnes => vec![u64::MAX; n],
            DataPattern::AllZeros => vec![0; n],
            DataPattern::Words(words) => {
                let mut out = words.as_ref().clone();
                out.resize(n, 0);
                out
            }
        }
    }
}

/// One DRAM command. `Wait` advances the virtual clock; everything else
/// models the corresponding bus command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DramCommand {
    /// Open `row` (logical) in `bank`.
    Act { bank: usize, row: usize },
    /// Close the open row in `bank`; no-op when already precharged.
    Pre { bank: usize },
    /// Read the open row of `bank`; `row` must match the open row.
    Rd { bank: usize, row: usize },
    /// Write the open row of `bank`; `row` must match the open row.
    Wr { bank: usize, row: usize, pattern: DataPattern },
    /// One refresh command: regular refresh plus any TRR action.
    Ref,
    /// Let `ns` nanoseconds of virtual time pass.
    Wait { ns: u64 },
}

/// What a successfully issued command produced.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandResult {
    Done,
    /// Row image returned by `Rd`.
    Data(Vec<u64>),
}

impl CommandResult {
    /// The read data, when this result came from `Rd`.
    pub fn data(&self) -> Option<&[u64]> {
        match self {
            CommandResult::Data(words) => Some(words),
            CommandResult::Done => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_materialize_to_row_width() {
        assert_eq!(DataPattern::AllOnes.to_words(128), vec![u64::MAX, u64::MAX]);
        assert_eq!(DataPattern::AllZeros.to_words(128), vec![0, 0]);
        let short = DataPattern::Words(Arc::new(vec![0xabcd]));
        assert_eq!(short.to_words(128), vec![0xabcd, 0]);
    }
}
