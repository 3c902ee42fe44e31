//! Scratch experiment driver. Not part of the library surface.

use refrec::data::{build_split, DatasetSplit, Orientation, RatingRecord, SplitConfig};
use refrec::eval::{evaluate_split_with_inputs, EvalTask};
use refrec::kernel::TrainInstance;
use refrec::model::{DecayKind, HyperParams, ReflectionMode};
use refrec::synth::{generate, SynthConfig};
use refrec::training::{fit, map_held_out, matrix_instances, FitOptions};

struct Outcome {
    test_rmse: f64,
    ndcg3: f64,
}

fn run_on(
    split: &DatasetSplit<f64>,
    instances: &[TrainInstance<f64>],
    mode: ReflectionMode,
    hyper: &HyperParams<f64>,
    task: EvalTask,
) -> Outcome {
    let (held_out, _) = map_held_out(split, &split.validation, hyper.orientation);
    let clip = if hyper.clip_predictions && task == EvalTask::Rating {
        Some(split.train.rating_range())
    } else {
        None
    };
    let report = fit(mode, instances, &held_out, clip, hyper, &FitOptions::default()).unwrap();
    let metrics =
        evaluate_split_with_inputs(&report.params, hyper, split, None, task, &[3]).unwrap();
    Outcome {
        test_rmse: metrics.rmse.unwrap_or(f64::NAN),
        ndcg3: metrics.ndcg.get(&3).copied().unwrap_or(f64::NAN),
    }
}

fn base_hyper() -> HyperParams<f64> {
    HyperParams {
        d_p: 32,
        decay: DecayKind::Phi1,
        alpha: 2.0,
        lambda1: 0.01,
        lambda2: 0.01,
        lambda3: 0.1,
        lambda4: 0.01,
        learning_rate: 1e-3,
        batch_size: 64,
        max_epochs: 300,
        patience: 10,
        residual: false,
        orientation: Orientation::ItemBased,
        seed: 11,
        ..HyperParams::default()
    }
}

fn main() {
    println!("-- ablate proxy robustness (rating)");
    for (skew, sharp) in [(1.0, 3.0), (0.8, 1.5), (0.8, 3.0)] {
        for gen_seed in [42u64, 43, 44] {
            let cfg = SynthConfig {
                popularity_skew: skew,
                preference_sharpness: sharp,
                density: 0.06,
                seed: gen_seed,
                ..SynthConfig::default()
            };
            let records = generate(&cfg);
            for split_seed in [7u64, 8, 9] {
                let sc = SplitConfig {
                    train_fraction: 0.9,
                    val_fraction: 0.1,
                    seed: split_seed,
                };
                let split = build_split::<f64>(&records, Orientation::ItemBased, &sc).unwrap();
                let instances = matrix_instances(&split, Orientation::ItemBased).unwrap();
                let hyper = base_hyper();
                let a = run_on(&split, &instances, ReflectionMode::ImplicitT, &hyper, EvalTask::Rating);
                let p = run_on(&split, &instances, ReflectionMode::Plain, &hyper, EvalTask::Rating);
                println!(
                    "  skew={skew} sharp={sharp} gen={gen_seed} split={split_seed}: impl={:.4} plain={:.4} margin={:+.4}",
                    a.test_rmse,
                    p.test_rmse,
                    p.test_rmse - a.test_rmse
                );
            }
        }
    }

    println!("-- ranking proxy robustness (binarized, skew=0.8 sharp=3)");
    for gen_seed in [42u64, 43, 44] {
        let cfg = SynthConfig {
            popularity_skew: 0.8,
            preference_sharpness: 3.0,
            density: 0.06,
            seed: gen_seed,
            ..SynthConfig::default()
        };
        let records: Vec<RatingRecord> = generate(&cfg)
            .into_iter()
            .map(|r| RatingRecord { value: 1.0, ..r })
            .collect();
        for split_seed in [7u64, 8, 9] {
            let sc = SplitConfig {
                train_fraction: 0.9,
                val_fraction: 0.1,
                seed: split_seed,
            };
            let split = build_split::<f64>(&records, Orientation::ItemBased, &sc).unwrap();
            let instances = matrix_instances(&split, Orientation::ItemBased).unwrap();
            let hyper = HyperParams { clip_predictions: false, ..base_hyper() };
            let a = run_on(&split, &instances, ReflectionMode::ImplicitT, &hyper, EvalTask::Ranking);
            let p = run_on(&split, &instances, ReflectionMode::Plain, &hyper, EvalTask::Ranking);
            println!(
                "  gen={gen_seed} split={split_seed}: impl={:.4} plain={:.4} margin={:+.4}",
                a.ndcg3,
                p.ndcg3,
                a.ndcg3 - p.ndcg3
            );
        }
    }
}
