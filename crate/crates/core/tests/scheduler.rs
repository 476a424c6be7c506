mod common;

use adl::oracle::{compare_traces, delayed_replay, delayed_replay_with_history, sync_ga_sgd};
use adl::partition::Partition;
use adl::scheduler::{run_clocked, run_parallel, ExecutionMode, TrainConfig};
use adl::staleness::{effective_version, steady_state_delay, StalenessQuery};
use adl::trace::EventKind;
use adl::optimizer::{LrSchedule, SgdConfig};
use adl::Error;
use common::*;

#[test]
fn clocked_matches_delayed_replay_exactly() {
    let data = spirals(256, 3);
    for splits in 1..=6 {
        for accumulation in 1..=4 {
            for seed in 0..3 {
                let config = spiral_config(splits, accumulation, seed, 12);
                let adl = run_clocked(&config, &data).unwrap();
                let replay = delayed_replay(&config, &data).unwrap();
                assert_eq!(adl.records.len(), 12);
                assert_eq!(adl, replay, "K={splits} M={accumulation} seed={seed}");
            }
        }
    }
}

#[test]
fn parallel_is_bit_identical_to_clocked() {
    let data = spirals(256, 5);
    for splits in [1, 2, 3, 6] {
        for accumulation in [1, 3] {
            let mut config = spiral_config(splits, accumulation, 11, 15);
            config.record_events = true;
            config.sgd = SgdConfig {
                momentum: 0.9,
                weight_decay: 1e-4,
            };
            let clocked = run_clocked(&config, &data).unwrap();
            config.mode = ExecutionMode::Parallel;
            let parallel = run_parallel(&config, &data).unwrap();
            assert_eq!(clocked, parallel);
            assert_eq!(clocked.to_csv_string(), parallel.to_csv_string());
            let report = compare_traces(&clocked, &parallel, 0.0).unwrap();
            assert!(report.pass);
            assert_eq!(report.max_diff(), 0.0);
        }
    }
}

#[test]
fn single_module_reduces_to_sync_accumulation() {
    let data = spirals(128, 1);
    for accumulation in 1..=4 {
        let config = spiral_config(1, accumulation, 2, 20);
        let adl = run_clocked(&config, &data).unwrap();
        let sync = sync_ga_sgd(&config, &data).unwrap();
        assert_eq!(adl.to_csv_string(), sync.to_csv_string());
        assert_eq!(adl.final_params, sync.final_params);
    }
}

#[test]
fn sync_ignores_partition() {
    let data = spirals(128, 1);
    let one = spiral_config(1, 2, 4, 10);
    let many = spiral_config(4, 2, 4, 10);
    let a = sync_ga_sgd(&one, &data).unwrap();
    let b = sync_ga_sgd(&many, &data).unwrap();
    assert_eq!(a, b);
}

#[test]
fn recorded_versions_match_staleness_arithmetic() {
    let data = spirals(128, 8);
    for splits in 1..=5u64 {
        for accumulation in 1..=4u64 {
            let config = spiral_config(splits as usize, accumulation as usize, 0, 10);
            let trace = run_clocked(&config, &data).unwrap();
            for record in &trace.records {
                for module in &record.modules {
                    for slot in &module.slots {
                        let q = StalenessQuery::new(
                            splits,
                            module.module as u64,
                            accumulation,
                            record.s,
                            slot.j,
                        );
                        assert_eq!(slot.version_used, effective_version(&q).unwrap());
                        let expected_batch =
                            (accumulation * record.s + slot.j) as i64 - 2 * (splits as i64 - module.module as i64);
                        assert_eq!(slot.batch_index, expected_batch);
                        if !slot.skipped() {
                            let d = steady_state_delay(splits, module.module as u64, accumulation, slot.j).unwrap();
                            assert_eq!(slot.d_kj, d);
                        }
                    }
                    assert_eq!(
                        module.tick,
                        accumulation * (record.s + 1) - 1 + (module.module as u64 - 1)
                    );
                }
            }
        }
    }
}

#[test]
fn replay_reads_the_expected_snapshots() {
    // M = 1, K = 2: module 1 at update s + 1 uses snapshot s - 2
    let data = spirals(64, 2);
    let config = spiral_config(2, 1, 1, 8);
    let (trace, history) = delayed_replay_with_history(&config, &data).unwrap();
    assert_eq!(history.len(), 9);
    for record in trace.records.iter().filter(|r| r.s >= 2) {
        let slot = &record.modules[0].slots[0];
        assert_eq!(slot.version_used, record.s - 2);
        assert_eq!(slot.batch_index, record.s as i64 - 2);
        assert_eq!(record.modules[1].slots[0].version_used, record.s);
    }
}

#[test]
fn pipeline_fill_skips_negative_batches() {
    let data = spirals(64, 2);
    let config = spiral_config(3, 2, 1, 4);
    let trace = run_clocked(&config, &data).unwrap();
    let first = &trace.records[0];
    // module 1 lags 4 batches: the whole first two groups are empty
    assert!(first.modules[0].slots.iter().all(|s| s.skipped()));
    assert!(trace.records[1].modules[0].slots.iter().all(|s| s.skipped()));
    assert!(trace.records[2].modules[0].slots.iter().all(|s| !s.skipped()));
    assert!(first.modules[2].slots.iter().all(|s| !s.skipped()));
}

#[test]
fn tick_events_follow_the_schedule() {
    let data = spirals(64, 2);
    let mut config = spiral_config(3, 1, 1, 6);
    config.record_events = true;
    let trace = run_clocked(&config, &data).unwrap();
    let at = |tick: u64, module: usize| -> Vec<(EventKind, u64)> {
        trace
            .events
            .iter()
            .filter(|e| e.tick == tick && e.module == module)
            .map(|e| (e.kind, e.index))
            .collect()
    };
    // module 2 at tick 1 forwards batch 0, nothing to back-propagate yet
    assert_eq!(at(1, 2), vec![(EventKind::Forward, 0), (EventKind::Update, 0)]);
    // module 1 back-propagates batch 0 at tick 4
    assert_eq!(
        at(4, 1),
        vec![(EventKind::Forward, 4), (EventKind::Backward, 0), (EventKind::Update, 4)]
    );
    assert_eq!(at(2, 3), vec![(EventKind::Forward, 0), (EventKind::Backward, 0), (EventKind::Update, 0)]);
}

#[test]
fn divergence_stops_identically_in_both_modes() {
    let data = spirals(128, 3);
    let mut config = spiral_config(3, 2, 0, 200);
    config.lr = LrSchedule::Constant { lr: 1e6 };
    config.divergence_threshold = 1e3;
    let clocked = run_clocked(&config, &data).unwrap();
    assert!(clocked.diverged);
    assert!(clocked.records.len() < 200);
    let parallel = run_parallel(&config, &data).unwrap();
    assert_eq!(clocked, parallel);
}

#[test]
fn rejects_mismatched_partition() {
    let data = spirals(64, 0);
    let mut config: TrainConfig<f64> = spiral_config(2, 1, 0, 4);
    config.partition = Partition::from_sizes(&[1, 1]).unwrap();
    assert!(matches!(run_clocked(&config, &data), Err(Error::Config(_))));
    config = spiral_config(2, 0, 0, 4);
    assert!(matches!(run_parallel(&config, &data), Err(Error::Config(_))));
}

#[test]
fn single_precision_runs_are_reproducible() {
    let data64 = spirals(128, 3);
    let data: adl::data::Dataset<f32> = adl::data::gen_two_spirals(128, 0.0, 3).unwrap();
    assert_eq!(data.len(), data64.len());
    let c64 = spiral_config(3, 2, 1, 10);
    let config = TrainConfig::<f32> {
        layers: c64.layers.clone(),
        partition: c64.partition.clone(),
        loss: c64.loss,
        accumulation: 2,
        batch_size: 16,
        updates: 10,
        lr: c64.lr.clone(),
        sgd: SgdConfig::plain(),
        init_seed: 1,
        sampler_seed: c64.sampler_seed,
        mode: ExecutionMode::Clocked,
        record_events: false,
        divergence_threshold: c64.divergence_threshold,
        deadlock_timeout: c64.deadlock_timeout,
    };
    let a = run_clocked(&config, &data).unwrap();
    let b = run_parallel(&config, &data).unwrap();
    let c = delayed_replay(&config, &data).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(a.records.last().unwrap().loss < a.records[0].loss + 1.0);
}
