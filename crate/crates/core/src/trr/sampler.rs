//! Sampling tracker. A single sticky slot is overwritten by every g-th
//! activation of its ACT stream (device-wide or per bank), where the phase
//! within the stride is drawn at device construction. Any row activated
//! `sample_guarantee_window` times in a row is sampled at least once.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::trr::config::SamplingBasedConfig;
use crate::trr::{Detection, TrrRefKind};

/// Sampler over one ACT stream.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SamplerStream {
    slot: Option<(u32, u32)>,
    acts_seen: u64,
    next_sample_at: u64,
}

impl SamplerStream {
    /// The sample phase is secret per-device state, drawn uniformly from
    /// [1, g] so the first sample lands within the first full stride.
    pub(crate) fn new(rng: &mut ChaCha8Rng, config: &SamplingBasedConfig) -> Self {
        let g = config.sample_guarantee_window as u64;
        SamplerStream {
            slot: None,
            acts_seen: 0,
            next_sample_at: rng.gen_range(1..=g),
        }
    }

    pub(crate) fn on_activate(&mut self, bank: u32, row: u32, config: &SamplingBasedConfig) {
        self.acts_seen += 1;
        if self.acts_seen == self.next_sample_at {
            self.slot = Some((bank, row));
            self.next_sample_at += config.sample_guarantee_window as u64;
        }
    }

    pub(crate) fn on_capable_ref(&mut self, config: &SamplingBasedConfig) -> Option<Detection> {
        let (bank, row) = self.slot?;
        if config.clear_on_trr {
            self.slot = None;
        }
        Some(Detection { bank: bank as usize, row: row as usize, kind: TrrRefKind::Sample })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn config() -> SamplingBasedConfig {
        SamplingBasedConfig::default()
    }

    #[test]
    fn a_full_guarantee_window_always_lands_in_the_slot() {
        // Whatever the drawn phase, 2048 consecutive ACTs to row 7 cover a
        // full stride, so the slot must hold row 7 afterwards.
        for seed in 0..32 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = config();
            let mut s = SamplerStream::new(&mut rng, &cfg);
            for _ in 0..2048 {
                s.on_activate(0, 7, &cfg);
            }
            assert_eq!(s.slot, Some((0, 7)), "seed {seed}");
        }
    }

    #[test]
    fn later_sample_overwrites_earlier() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = config();
        let mut s = SamplerStream::new(&mut rng, &cfg);
        for _ in 0..2048 {
            s.on_activate(0, 7, &cfg);
        }
        for _ in 0..2048 {
            s.on_activate(1, 9, &cfg);
        }
        assert_eq!(s.slot, Some((1, 9)));
    }

    #[test]
    fn sticky_slot_survives_capable_refs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = config();
        let mut s = SamplerStream::new(&mut rng, &cfg);
        for _ in 0..2048 {
            s.on_activate(0, 7, &cfg);
        }
        for _ in 0..5 {
            let hit = s.on_capable_ref(&cfg).unwrap();
            assert_eq!((hit.bank, hit.row), (0, 7));
        }
    }

    #[test]
    fn clear_on_trr_empties_the_slot() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SamplingBasedConfig { clear_on_trr: true, ..config() };
        let mut s = SamplerStream::new(&mut rng, &cfg);
        for _ in 0..2048 {
            s.on_activate(0, 7, &cfg);
        }
        assert!(s.on_capable_ref(&cfg).is_some());
        assert!(s.on_capable_ref(&cfg).is_none());
    }

    #[test]
    fn empty_slot_detects_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = config();
        let mut s = SamplerStream::new(&mut rng, &cfg);
        s.on_activate(0, 7, &cfg);
        // At most one activation: only sampled if the phase happened to be 1.
        if s.slot.is_none() {
            assert!(s.on_capable_ref(&cfg).is_none());
        }
    }
}
