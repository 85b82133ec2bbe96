//! End-to-end tour of the analysis pipeline on one desk device: profile
//! probe rows, infer the regular refresh schedule, neutralize tracker
//! state, then watch a tracker defend against a double-sided hammer.
//!
//! Run with: cargo run --example pipeline

use trrlab::{
    desk_preset, find_row_groups, infer_refresh_schedule, reset_trr_state, run_experiment,
    BlindDevice, DramDevice, ExperimentAggressor, ExperimentConfig, GroupLayout, RowScoutConfig,
};

fn main() {
    let device = DramDevice::new(desk_preset("A_TRR1", 99).unwrap()).unwrap();
    let truth = device.ground_truth();
    let mut dev = BlindDevice::new(device);

    let groups = find_row_groups(
        &mut dev,
        0,
        2200..3400,
        GroupLayout::flanking_pair(1).unwrap(),
        2,
        &RowScoutConfig::desk(),
    )
    .unwrap();
    println!(
        "scout: {} groups with {}ms retention, probes {:?} and {:?}",
        groups.len(),
        groups[0].retention_ms,
        groups[0].physical_rows,
        groups[1].physical_rows
    );

    let schedule = infer_refresh_schedule(&mut dev, &groups[0]).unwrap();
    println!(
        "schedule: period {} REFs, {} rows/REF, anchor {} (slack {})",
        schedule.period_refs, schedule.rows_per_ref, schedule.anchor, schedule.anchor_slack
    );

    let protect: Vec<(usize, usize)> = groups
        .iter()
        .flat_map(|g| g.logical_rows.iter().map(|&r| (0usize, r)))
        .collect();
    reset_trr_state(&mut dev, &protect).unwrap();

    let aggressor = dev.to_logical(groups[1].enclosed_physical_rows()[0]).unwrap();
    let mut config = ExperimentConfig::new(
        groups[1..].to_vec(),
        vec![ExperimentAggressor { bank: 0, row: aggressor, acts_per_round: 80 }],
    );
    config.rounds = 18;
    let result = run_experiment(&mut dev, &config, Some(&schedule)).unwrap();
    for o in &result.outcomes {
        println!(
            "probe at physical row {}: survived={} attribution={:?}",
            o.physical_row, o.survived, o.attribution
        );
    }
    println!(
        "middle phase: {} REFs starting at global REF {}",
        result.middle_refs, result.first_middle_ref
    );
    println!(
        "device ground truth for comparison: kind={:?} capable-REF ratio={:?} walk period={}",
        truth.kind, truth.trr_ref_ratio, truth.regular_refresh_period_refs
    );
}
