//! Statistical check that a few batches of fine-tuning on a shifted layout
//! do not hurt relative to zero-shot evaluation of the same checkpoint.
//! The comparison is on the mean across transfer seeds, not per run: at
//! this training budget single runs wobble in both directions.

use uesr::agent::Scheme;
use uesr::env::LayoutVariant;
use uesr::harness::{train, transfer, ExperimentConfig};

#[test]
fn fine_tuning_does_not_hurt_on_average() {
    let dir = std::env::temp_dir().join("uesr_transfer_trend");
    std::fs::create_dir_all(&dir).unwrap();
    let ckpt = dir.join("base.ckpt");

    let mut cfg = ExperimentConfig::defaults_for(Scheme::UesR);
    cfg.total_env_steps = 50_000;
    cfg.seed = 1;
    cfg.checkpoint_path = Some(ckpt.clone());
    train(&cfg).unwrap();

    let mut fine_tuned = Vec::new();
    let mut zero_shot = Vec::new();
    for seed in 1..=5u64 {
        let ft = transfer(&ckpt, LayoutVariant::GoalShift, 10, seed, 100).unwrap();
        assert_eq!(ft.updates_performed, 10);
        assert_eq!(ft.episodes, 100);
        let zs = transfer(&ckpt, LayoutVariant::GoalShift, 0, seed, 100).unwrap();
        assert_eq!(zs.updates_performed, 0);
        fine_tuned.push(ft.deliveries_per_episode);
        zero_shot.push(zs.deliveries_per_episode);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&fine_tuned) >= mean(&zero_shot),
        "fine-tuned mean {:.4} fell below zero-shot mean {:.4}",
        mean(&fine_tuned),
        mean(&zero_shot)
    );
}
