//! Full blind profile of one desk device, printed next to the ground
//! truth the simulator kept to itself. Every line of the inferred
//! column comes from retention-failure probes alone.
//!
//! Run with: cargo run --example profile

use trrlab::{desk_preset, BlindDevice, DramDevice, ProfileSession, RevengConfig};

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "unknown".into(), T::to_string)
}

fn main() {
    let device = DramDevice::new(desk_preset("A_TRR1", 7).unwrap()).unwrap();
    let truth = device.ground_truth();
    let mut session = ProfileSession::new(BlindDevice::new(device), RevengConfig::desk());
    let profile = session.full_profile().unwrap();

    println!("inferred profile:");
    println!("  refresh walk period:  {} REFs", opt(&profile.regular_refresh_period_refs));
    println!("  mitigation cadence:   {}", opt(&profile.trr_to_ref_ratio));
    println!("  neighbor span:        {}", opt(&profile.neighbor_span));
    println!("  detection kind:       {}", profile.detection_kind);
    println!("  tracker capacity:     {}", opt(&profile.tracker_capacity));
    println!("  per-bank scope:       {}", opt(&profile.per_bank_scope));
    println!("  eviction policy:      {}", profile.evict_policy);
    println!("  reset on detect:      {}", profile.reset_on_detect);
    println!("  entry persistence:    {}", profile.entry_persistence);
    println!();
    println!("evidence log:");
    for e in session.evidence() {
        println!("  {:<20} {:<24} {}", e.op, e.outcome, e.detail);
    }
    println!();
    println!(
        "ground truth for comparison: kind={:?} capable-REF ratio={:?} capacity={:?} \
         per_bank={:?} walk period={}",
        truth.kind, truth.trr_ref_ratio, truth.capacity, truth.per_bank,
        truth.regular_refresh_period_refs
    );
}
