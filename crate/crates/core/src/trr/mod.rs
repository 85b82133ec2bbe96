//! In-device Target Row Refresh: tracker configuration and the tracker state
//! machine the simulator drives on every ACT and REF.

mod config;
mod counter;
mod sampler;
mod window;

pub use config::{
    CounterBasedConfig, EvictPolicy, NeighborSpan, SamplingBasedConfig, TrrMechanismConfig,
    TrrVariant, WindowBasedConfig, WindowPickPolicy,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use counter::CounterTable;
use sampler::SamplerStream;
use window::BankWindow;

/// Tracker family, as reported by ground truth and by reverse engineering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionKind {
    Counter,
    Sampling,
    Window,
    None,
    Unknown,
}

/// Which tracker operation produced a TRR-induced refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrrRefKind {
    MaxCounter,
    TableWalk,
    Sample,
    WindowPick,
}

/// One tracker decision on a TRR-capable REF: the aggressor it identified.
/// The device turns this into neighbor refreshes via the configured span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub bank: usize,
    pub row: usize,
    pub kind: TrrRefKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tracker {
    None,
    Counter {
        /// One table per bank, or a single shared table.
        tables: Vec<CounterTable>,
    },
    Sampler {
        /// One stream per bank, or a single shared stream.
        streams: Vec<SamplerStream>,
    },
    Window {
        /// Always one window per bank.
        windows: Vec<BankWindow>,
    },
}

/// Runtime tracker state. Owned by the device; all mutation goes through
/// `on_activate` and `on_ref`.
#[derive(Debug, Clone)]
pub struct TrrState {
    config: TrrMechanismConfig,
    banks: usize,
    tracker: Tracker,
    /// Counts TRR-capable REFs, driving the max-counter/table-walk toggle.
    capable_refs_seen: u64,
    rng: ChaCha8Rng,
    rng_seed: u64,
}

impl TrrState {
    /// Build tracker state for a device with `banks` banks. `rng_seed`
    /// derives the secret sampler phase and any randomized pick draws.
    pub fn new(config: &TrrMechanismConfig, banks: usize, rng_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let tracker = match &config.variant {
            TrrVariant::None => Tracker::None,
            TrrVariant::CounterBased(c) => {
                let n = if c.per_bank { banks } else { 1 };
                Tracker::Counter { tables: (0..n).map(|_| CounterTable::new()).collect() }
            }
            TrrVariant::SamplingBased(s) => {
                let n = if s.shared_across_banks { 1 } else { banks };
                Tracker::Sampler {
                    streams: (0..n).map(|_| SamplerStream::new(&mut rng, s)).collect(),
                }
            }
            TrrVariant::WindowBased(_) => {
                Tracker::Window { windows: (0..banks).map(|_| BankWindow::new()).collect() }
            }
        };
        TrrState {
            config: config.clone(),
            banks,
            tracker,
            capable_refs_seen: 0,
            rng,
            rng_seed,
        }
    }

    /// Forget everything observed so far, as a quiet period long enough to
    /// drain the tracker would. Secret parameters (sampler phase) are
    /// re-derived from the same seed, so behavior after reset is identical
    /// to behavior after construction.
    pub fn reset(&mut self) {
        *self = TrrState::new(&self.config.clone(), self.banks, self.rng_seed);
    }

    /// Observe one row activation.
    pub fn on_activate(&mut self, bank: usize, row: usize) {
        match (&mut self.tracker, &self.config.variant) {
            (Tracker::None, _) => {}
            (Tracker::Counter { tables }, TrrVariant::CounterBased(c)) => {
                let idx = if c.per_bank { bank } else { 0 };
                tables[idx].on_activate(bank as u32, row as u32, c);
            }
            (Tracker::Sampler { streams }, TrrVariant::SamplingBased(s)) => {
                let idx = if s.shared_across_banks { 0 } else { bank };
                streams[idx].on_activate(bank as u32, row as u32, s);
            }
            (Tracker::Window { windows }, TrrVariant::WindowBased(w)) => {
                windows[bank].on_activate(row as u32, w);
            }
            _ => unreachable!("tracker/config variant mismatch"),
        }
    }

    /// Observe one REF. `ref_index` is the 1-based count of REF commands;
    /// every trr_ref_period-th REF is TRR-capable. Returns the aggressors
    /// detected on this REF (empty on most REFs).
    pub fn on_ref(&mut self, ref_index: u64) -> Vec<Detection> {
        let capable = ref_index % self.config.trr_ref_period as u64 == 0;
        let mut detections = Vec::new();
        match (&mut self.tracker, &self.config.variant) {
            (Tracker::None, _) => {}
            (Tracker::Counter { tables }, TrrVariant::CounterBased(c)) => {
                if capable {
                    let tref_b = self.capable_refs_seen % 2 == 1;
                    for table in tables.iter_mut() {
                        detections.extend(table.on_capable_ref(tref_b, c));
                    }
                    self.capable_refs_seen += 1;
                }
            }
            (Tracker::Sampler { streams }, TrrVariant::SamplingBased(s)) => {
                if capable {
                    for stream in streams.iter_mut() {
                        detections.extend(stream.on_capable_ref(s));
                    }
                    self.capable_refs_seen += 1;
                }
            }
            (Tracker::Window { windows }, TrrVariant::WindowBased(w)) => {
                for (bank, win) in windows.iter_mut().enumerate() {
                    detections.extend(win.on_ref(bank as u32, capable, w, &mut self.rng));
                }
                if capable {
                    self.capable_refs_seen += 1;
                }
            }
            _ => unreachable!("tracker/config variant mismatch"),
        }
        detections
    }

    /// Rows a detection refreshes, in the detection's bank.
    pub fn victims(&self, detection: &Detection, rows_per_bank: usize) -> Vec<usize> {
        self.config.neighbor_span.victims(detection.row, rows_per_bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counter_config() -> TrrMechanismConfig {
        TrrMechanismConfig {
            trr_ref_period: 9,
            neighbor_span: NeighborSpan::up_to(2),
            variant: TrrVariant::CounterBased(CounterBasedConfig::default()),
        }
    }

    #[test]
    fn only_every_kth_ref_is_capable() {
        let mut state = TrrState::new(&counter_config(), 4, 7);
        for _ in 0..500 {
            state.on_activate(0, 100);
        }
        let firing: Vec<u64> =
            (1..=27).filter(|&i| !state.on_ref(i).is_empty()).collect();
        assert_eq!(firing, vec![9, 18, 27]);
    }

    #[test]
    fn capable_refs_alternate_detection_flavors() {
        let mut state = TrrState::new(&counter_config(), 4, 7);
        for _ in 0..500 {
            state.on_activate(0, 100);
        }
        let mut kinds = Vec::new();
        for i in 1..=36 {
            for d in state.on_ref(i) {
                kinds.push(d.kind);
            }
        }
        assert_eq!(
            kinds,
            vec![
                TrrRefKind::MaxCounter,
                TrrRefKind::TableWalk,
                TrrRefKind::MaxCounter,
                TrrRefKind::TableWalk
            ]
        );
    }

    #[test]
    fn per_bank_tables_detect_independently() {
        let mut state = TrrState::new(&counter_config(), 4, 7);
        state.on_activate(0, 100);
        state.on_activate(3, 222);
        let detections = state.on_ref(9);
        let mut hits: Vec<(usize, usize)> =
            detections.iter().map(|d| (d.bank, d.row)).collect();
        hits.sort_unstable();
        assert_eq!(hits, vec![(0, 100), (3, 222)]);
    }

    #[test]
    fn shared_sampler_fires_in_the_sampled_bank() {
        let config = TrrMechanismConfig {
            trr_ref_period: 4,
            neighbor_span: NeighborSpan::up_to(1),
            variant: TrrVariant::SamplingBased(SamplingBasedConfig::default()),
        };
        let mut state = TrrState::new(&config, 4, 7);
        for _ in 0..2048 {
            state.on_activate(2, 50);
        }
        let detections = state.on_ref(4);
        assert_eq!(detections.len(), 1);
        assert_eq!((detections[0].bank, detections[0].row), (2, 50));
    }

    #[test]
    fn reset_restores_post_construction_behavior() {
        let config = TrrMechanismConfig {
            trr_ref_period: 4,
            neighbor_span: NeighborSpan::up_to(1),
            variant: TrrVariant::SamplingBased(SamplingBasedConfig::default()),
        };
        let mut fresh = TrrState::new(&config, 4, 7);
        let mut used = TrrState::new(&config, 4, 7);
        for i in 0..300 {
            used.on_activate(i % 4, 10 + i);
        }
        used.on_ref(4);
        used.reset();
        // Drive both identically; the sample phase must line up again.
        for step in 0..100 {
            fresh.on_activate(0, step);
            used.on_activate(0, step);
        }
        assert_eq!(fresh.on_ref(4), used.on_ref(4));
    }

    #[test]
    fn pair_span_resolves_through_victims() {
        let config = TrrMechanismConfig {
            trr_ref_period: 17,
            neighbor_span: NeighborSpan::Pair,
            variant: TrrVariant::WindowBased(WindowBasedConfig::default()),
        };
        let state = TrrState::new(&config, 4, 7);
        let detection =
            Detection { bank: 0, row: 6, kind: TrrRefKind::WindowPick };
        assert_eq!(state.victims(&detection, 8192), vec![7]);
    }
}
