//! The subcommands. Each one resolves to a run directory holding the echoed
//! config plus its own artifacts, and prints a short summary to stdout.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as FmtWrite;

use anyhow::{anyhow, ensure, Result};

use refrec::checkpoint;
use refrec::data::{is_cold, sparsity_partition, DatasetSplit, Orientation, RatingRecord};
use refrec::diagnostics::{
    alignment_check, equivalence_check, finite_diff_check, masking_check, metric_oracle_check,
    AlignmentReflector, TransformFamily, TrialReport,
};
use refrec::eval::{evaluate_split, evaluate_split_with_inputs, EvalTask};
use refrec::model::{neighbor_impute, DecayKind, ReflectionMode};
use refrec::training::{fit, map_held_out, matrix_instances, FitOptions, HeldOut};
use refrec::{HyperParams64, SparseVector64};

use crate::config::{self, RunConfig, UsageError};
use crate::pipeline::{
    clip_range, headline, ingest_summary, load_records, make_split, metric_cols, metric_row,
    normalized_ks, opt_f64, prepare_out, train_model, write_file,
};

pub fn train(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    let ing = load_records(cfg)?;
    let split = make_split(cfg, &ing.records, cfg.hyper.orientation)?;
    let fitted = train_model(cfg.mode, &cfg.hyper, &split, None, cfg.deterministic, true)?;
    let count = split.train.vector_count(cfg.hyper.orientation);

    checkpoint::save(
        &out.join("model.ckpt"),
        &fitted.report.params,
        &cfg.hyper,
        count as u64,
    )?;
    write_file(
        &out,
        "epochs.csv",
        &refrec::training::render_epoch_csv(&fitted.report.epochs),
    )?;

    let mut summary = ingest_summary(&ing, &split);
    let _ = writeln!(summary, "mode: {}", cfg.mode.as_str());
    let _ = writeln!(summary, "epochs_run: {}", fitted.report.epochs.len());
    let _ = writeln!(summary, "best_epoch: {}", fitted.report.best_epoch);
    if let Some(v) = fitted.report.best_val_rmse {
        let _ = writeln!(summary, "best_val_rmse: {v}");
    }
    let _ = writeln!(summary, "stopped_early: {}", fitted.report.stopped_early);
    let _ = writeln!(summary, "val_records_dropped_cold: {}", fitted.val_dropped);
    write_file(&out, "summary.txt", &summary)?;

    println!(
        "trained {} on {} vectors, {} epochs",
        cfg.mode.as_str(),
        count,
        fitted.report.epochs.len()
    );
    if let Some(v) = fitted.report.best_val_rmse {
        println!(
            "best validation rmse {v:.6} at epoch {}",
            fitted.report.best_epoch
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let ck_path = cfg.checkpoint.as_deref().ok_or_else(|| {
        UsageError("a model is required: pass --checkpoint or set checkpoint= in the config".into())
    })?;
    let ck = checkpoint::load(ck_path)?;
    let out = prepare_out(cfg)?;
    let ing = load_records(cfg)?;
    let split = make_split(cfg, &ing.records, ck.hyper.orientation)?;
    let count = split.train.vector_count(ck.hyper.orientation);
    ensure!(
        ck.num_vectors == count as u64,
        "checkpoint was trained on {} vectors but this split has {count}; check data, fractions, and seed",
        ck.num_vectors
    );

    let ks = normalized_ks(&cfg.k_list);
    let report = evaluate_split(&ck.params, &ck.hyper, &split, cfg.task, &ks)?;
    write_file(&out, "metrics.json", &format!("{}\n", report.to_json_line()))?;
    let mut human = report.render_human();
    let _ = writeln!(
        human,
        "model: {} {} dp={} decay={} alpha={}",
        ck.params.mode().as_str(),
        ck.hyper.orientation.as_str(),
        ck.hyper.d_p,
        ck.hyper.decay.as_str(),
        ck.hyper.alpha
    );
    write_file(&out, "metrics.txt", &human)?;
    print!("{}", report.render_human());
    Ok(())
}

/// Reflection arm vs plain autoencoder vs neighbor-imputed autoencoder, on
/// one shared split.
pub fn ablate(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    let ing = load_records(cfg)?;
    let split = make_split(cfg, &ing.records, cfg.hyper.orientation)?;
    let ks = normalized_ks(&cfg.k_list);
    let cols = metric_cols(cfg.task, &ks);

    let imputed = neighbor_impute(
        &split.train,
        cfg.k_neighbors,
        Some((cfg.hyper.decay, cfg.hyper.alpha)),
    )?;
    let arms: [(&str, ReflectionMode, Option<Vec<SparseVector64>>); 3] = [
        ("reflect", cfg.mode, None),
        ("plain", ReflectionMode::Plain, None),
        ("neighbor", ReflectionMode::Plain, Some(imputed)),
    ];

    let mut csv = format!("arm,mode,epochs,best_epoch,val_rmse,{}\n", cols.join(","));
    let mut txt = String::new();
    for (name, mode, inputs) in &arms {
        let fitted = train_model(
            *mode,
            &cfg.hyper,
            &split,
            inputs.as_deref(),
            cfg.deterministic,
            false,
        )?;
        let report = evaluate_split_with_inputs(
            &fitted.report.params,
            &cfg.hyper,
            &split,
            inputs.as_deref(),
            cfg.task,
            &ks,
        )?;
        let _ = writeln!(
            csv,
            "{name},{},{},{},{},{}",
            mode.as_str(),
            fitted.report.epochs.len(),
            fitted.report.best_epoch,
            opt_f64(fitted.report.best_val_rmse),
            metric_row(&report).join(",")
        );
        let _ = writeln!(txt, "arm: {name} (mode {})", mode.as_str());
        txt.push_str(&report.render_human());
        txt.push('\n');
        println!("{name}: {}", headline(&report));
    }
    write_file(&out, "ablate.csv", &csv)?;
    write_file(&out, "ablate.txt", &txt)?;
    Ok(())
}

/// Validation sweep of every decay family over the alpha grid; each
/// family's champion is then scored on test.
pub fn decay_study(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    let ing = load_records(cfg)?;
    let split = make_split(cfg, &ing.records, cfg.hyper.orientation)?;
    let ks = normalized_ks(&cfg.k_list);
    let cols = metric_cols(cfg.task, &ks);

    let kinds = [
        DecayKind::Phi1,
        DecayKind::Phi2,
        DecayKind::Phi3,
        DecayKind::Phi4,
    ];
    let mut rows: Vec<(DecayKind, f64, f64)> = Vec::new();
    // Per family: champion row index, its test metrics, its headline.
    let mut champions: Vec<(usize, Vec<String>, String, Option<f64>)> = Vec::new();

    for kind in kinds {
        let mut best: Option<(f64, usize, HyperParams64, crate::pipeline::Fitted)> = None;
        for &alpha in &cfg.alpha_grid {
            let mut hyper = cfg.hyper.clone();
            hyper.decay = kind;
            hyper.alpha = alpha;
            let fitted = train_model(cfg.mode, &hyper, &split, None, cfg.deterministic, false)?;
            let val = fitted.report.best_val_rmse.ok_or_else(|| {
                anyhow!("the decay study needs validation records to select alpha")
            })?;
            rows.push((kind, alpha, val));
            if best.as_ref().is_none_or(|(b, ..)| val < *b) {
                best = Some((val, rows.len() - 1, hyper, fitted));
            }
        }
        let (_, row_idx, hyper, fitted) = best.expect("alpha grid is non-empty");
        let report = evaluate_split(&fitted.report.params, &hyper, &split, cfg.task, &ks)?;
        champions.push((
            row_idx,
            metric_row(&report),
            headline(&report),
            report.rmse,
        ));
    }

    let mut csv = format!("decay,alpha,val_rmse,champion,{}\n", cols.join(","));
    for (i, (kind, alpha, val)) in rows.iter().enumerate() {
        let champ = champions.iter().find(|(idx, ..)| *idx == i);
        let _ = writeln!(
            csv,
            "{},{alpha},{val},{},{}",
            kind.as_str(),
            if champ.is_some() { "yes" } else { "" },
            match champ {
                Some((_, row, ..)) => row.join(","),
                None => vec![String::new(); cols.len()].join(","),
            }
        );
    }
    write_file(&out, "decay.csv", &csv)?;

    let mut txt = String::new();
    for (kind, (row_idx, _, line, _)) in kinds.iter().zip(&champions) {
        let (_, alpha, val) = rows[*row_idx];
        let _ = writeln!(
            txt,
            "{}: best alpha {alpha}, validation rmse {val:.6}, {line}",
            kind.as_str()
        );
    }
    if let (Some(r1), Some(r4)) = (champions[0].3, champions[3].3) {
        let _ = writeln!(
            txt,
            "phi1 minus phi4 test rmse: {:+.6} (negative favors phi1)",
            r1 - r4
        );
    }
    write_file(&out, "decay.txt", &txt)?;
    print!("{txt}");
    Ok(())
}

/// Trains the reflection and plain arms separately inside each sparsity
/// quintile of the training matrix, scoring each group's own test records.
pub fn sparsity_study(cfg: &RunConfig) -> Result<()> {
    if cfg.task != EvalTask::Rating {
        return Err(UsageError("sparsity-study scores the rating task only".into()).into());
    }
    let out = prepare_out(cfg)?;
    let ing = load_records(cfg)?;
    let split = make_split(cfg, &ing.records, cfg.hyper.orientation)?;
    let orientation = cfg.hyper.orientation;
    let profile = sparsity_partition(&split.train, 5)?;
    let instances_all = matrix_instances(&split, orientation)?;
    let (held_all, _) = map_held_out(&split, &split.validation, orientation);
    let clip = clip_range(&split, &cfg.hyper);
    let opts = FitOptions {
        deterministic: cfg.deterministic,
        verbose: false,
    };

    let mut csv = String::from("group,observed_min,observed_max,vectors,arm,val_rmse,test_rmse,scored\n");
    let mut txt = String::new();
    for (g, members) in profile.groups.iter().enumerate() {
        let index_of: HashMap<usize, usize> =
            members.iter().enumerate().map(|(pos, &m)| (m, pos)).collect();
        let instances: Vec<_> = members.iter().map(|&m| instances_all[m].clone()).collect();
        let held: Vec<HeldOut<f64>> = held_all
            .iter()
            .filter_map(|h| {
                index_of.get(&h.vector).map(|&vector| HeldOut {
                    vector,
                    position: h.position,
                    value: h.value,
                })
            })
            .collect();
        let test_g: Vec<RatingRecord> = split
            .test
            .iter()
            .filter(|rec| {
                if is_cold(&split.train, rec) {
                    return false;
                }
                let vec_idx = match orientation {
                    Orientation::ItemBased => split.train.item_index(rec.item),
                    Orientation::UserBased => split.train.user_index(rec.user),
                }
                .expect("warm record");
                profile.assignment[vec_idx] == g
            })
            .cloned()
            .collect();
        let (lo, hi) = profile.count_ranges[g];

        let _ = writeln!(
            txt,
            "group {g}: observed {lo}..={hi}, {} vectors, {} test records",
            members.len(),
            test_g.len()
        );
        for (arm, mode) in [("reflect", cfg.mode), ("plain", ReflectionMode::Plain)] {
            let report = fit(mode, &instances, &held, clip, &cfg.hyper, &opts)?;
            let (rmse_cell, scored) = if test_g.is_empty() {
                (String::new(), 0)
            } else {
                let sub = DatasetSplit {
                    train: split.train.clone(),
                    validation: split.validation.clone(),
                    test: test_g.clone(),
                    seed: split.seed,
                    report: split.report,
                };
                let m = evaluate_split(&report.params, &cfg.hyper, &sub, EvalTask::Rating, &[])?;
                (opt_f64(m.rmse), m.scored)
            };
            let _ = writeln!(
                csv,
                "{g},{lo},{hi},{},{arm},{},{rmse_cell},{scored}",
                members.len(),
                opt_f64(report.best_val_rmse)
            );
            let _ = writeln!(
                txt,
                "  {arm}: test rmse {}",
                if rmse_cell.is_empty() { "n/a" } else { rmse_cell.as_str() }
            );
        }
    }
    write_file(&out, "sparsity.csv", &csv)?;
    write_file(&out, "sparsity.txt", &txt)?;
    print!("{txt}");
    Ok(())
}

/// Item-based vs user-based on the same record partition.
pub fn orientation_study(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    let ing = load_records(cfg)?;
    let ks = normalized_ks(&cfg.k_list);
    let cols = metric_cols(cfg.task, &ks);

    let mut csv = format!("orientation,epochs,best_epoch,val_rmse,{}\n", cols.join(","));
    let mut txt = String::new();
    let mut rmses: Vec<Option<f64>> = Vec::new();
    for orientation in [Orientation::ItemBased, Orientation::UserBased] {
        let mut hyper = cfg.hyper.clone();
        hyper.orientation = orientation;
        let split = make_split(cfg, &ing.records, orientation)?;
        let fitted = train_model(cfg.mode, &hyper, &split, None, cfg.deterministic, false)?;
        let report = evaluate_split(&fitted.report.params, &hyper, &split, cfg.task, &ks)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            orientation.as_str(),
            fitted.report.epochs.len(),
            fitted.report.best_epoch,
            opt_f64(fitted.report.best_val_rmse),
            metric_row(&report).join(",")
        );
        let _ = writeln!(txt, "{}: {}", orientation.as_str(), headline(&report));
        rmses.push(report.rmse);
    }
    if let (Some(item), Some(user)) = (rmses[0], rmses[1]) {
        let _ = writeln!(
            txt,
            "item minus user test rmse: {:+.6} (negative favors item-based)",
            item - user
        );
    }
    write_file(&out, "orientation.csv", &csv)?;
    write_file(&out, "orientation.txt", &txt)?;
    print!("{txt}");
    Ok(())
}

/// Validation grid over the shared encoder/decoder weight, the mode's own
/// regularizer, and alpha. Test data is never consulted; the champion
/// configuration is written out ready for `train`.
pub fn grid(cfg: &RunConfig) -> Result<()> {
    if cfg.lambda_grid.is_empty() || cfg.alpha_grid.is_empty() {
        return Err(UsageError("the grid needs non-empty lambda_grid and alpha_grid".into()).into());
    }
    let out = prepare_out(cfg)?;
    let ing = load_records(cfg)?;
    let split = make_split(cfg, &ing.records, cfg.hyper.orientation)?;

    let reg_axis: Vec<Option<f64>> = match cfg.mode {
        ReflectionMode::ImplicitT | ReflectionMode::IndependentU => {
            cfg.lambda_grid.iter().map(|&x| Some(x)).collect()
        }
        _ => vec![None],
    };

    let mut best: Option<(f64, HyperParams64)> = None;
    let mut csv = String::from("lambda1_2,lambda_reg,alpha,val_rmse\n");
    for &l12 in &cfg.lambda_grid {
        for &reg in &reg_axis {
            for &alpha in &cfg.alpha_grid {
                let mut hyper = cfg.hyper.clone();
                hyper.lambda1 = l12;
                hyper.lambda2 = l12;
                hyper.alpha = alpha;
                match (cfg.mode, reg) {
                    (ReflectionMode::ImplicitT, Some(r)) => hyper.lambda3 = r,
                    (ReflectionMode::IndependentU, Some(r)) => hyper.lambda4 = r,
                    _ => {}
                }
                let fitted =
                    train_model(cfg.mode, &hyper, &split, None, cfg.deterministic, false)?;
                let val = fitted.report.best_val_rmse.ok_or_else(|| {
                    anyhow!("the grid needs validation records to score configurations")
                })?;
                let _ = writeln!(
                    csv,
                    "{l12},{},{alpha},{val}",
                    reg.map(|r| r.to_string()).unwrap_or_default()
                );
                if best.as_ref().is_none_or(|(b, _)| val < *b) {
                    best = Some((val, hyper));
                }
            }
        }
    }
    write_file(&out, "grid.csv", &csv)?;

    let (val, hyper) = best.expect("grids are non-empty");
    let mut champion = cfg.clone();
    champion.hyper = hyper;
    write_file(&out, "best.config", &config::render(&champion))?;
    println!(
        "best: lambda1_2={} lambda_reg={} alpha={} validation rmse {val:.6}",
        champion.hyper.lambda1,
        match cfg.mode {
            ReflectionMode::ImplicitT => champion.hyper.lambda3.to_string(),
            ReflectionMode::IndependentU => champion.hyper.lambda4.to_string(),
            _ => String::new(),
        },
        champion.hyper.alpha
    );
    println!("wrote {}", out.join("best.config").display());
    Ok(())
}

/// Raised when a verification expectation is violated. Exit code 4.
#[derive(Debug)]
pub struct VerifyFailed {
    pub violations: usize,
    pub checks: usize,
}

impl fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} of {} verification expectations violated",
            self.violations, self.checks
        )
    }
}

impl std::error::Error for VerifyFailed {}

/// Randomized numerical audit of the model's claimed properties, plus
/// negative controls demonstrating each check can actually fail.
pub fn verify(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    let s = cfg.hyper.seed;

    let mut items: Vec<(TrialReport, bool, &str)> = vec![
        (
            alignment_check(40, 8, 10_000, s, AlignmentReflector::Tied)?,
            true,
            "tied reflection aligns with the projection",
        ),
        (
            alignment_check(40, 8, 10_000, s ^ 0xA1, AlignmentReflector::RandomU)?,
            true,
            "random reflector, informational",
        ),
        (
            alignment_check(40, 8, 1_000, s ^ 0xA2, AlignmentReflector::NegatedTied)?,
            false,
            "negated tie must break the bound",
        ),
        (
            equivalence_check(25, 6, 100, s ^ 0xE1, TransformFamily::Orthogonal)?,
            true,
            "orthogonal reparameterization leaves scores unchanged",
        ),
        (
            equivalence_check(25, 6, 100, s ^ 0xE2, TransformFamily::Invertible)?,
            true,
            "invertible reparameterization leaves scores unchanged",
        ),
        (
            equivalence_check(25, 6, 100, s ^ 0xE3, TransformFamily::ScalingControl)?,
            false,
            "diagonal scaling must break the invariance",
        ),
    ];
    for (i, mode) in [
        ReflectionMode::TiedTranspose,
        ReflectionMode::IndependentU,
        ReflectionMode::ImplicitT,
        ReflectionMode::Plain,
    ]
    .into_iter()
    .enumerate()
    {
        items.push((
            finite_diff_check(mode, 8, 4, 100, s ^ (0xD0 + i as u64))?,
            true,
            "gradients match central differences",
        ));
    }
    items.push((
        metric_oracle_check(1_000, s ^ 0x31)?,
        true,
        "ranking metrics match brute force",
    ));
    items.push((
        masking_check(100, s ^ 0x32)?,
        true,
        "unobserved entries cannot reach loss or gradients",
    ));

    let mut violations = 0usize;
    let mut txt = String::new();
    let mut jsonl = String::new();
    for (report, expect, note) in &items {
        let ok = report.pass == *expect;
        if !ok {
            violations += 1;
        }
        let mut line = format!(
            "{} {}",
            if ok { "ok       " } else { "VIOLATION" },
            report.render_line()
        );
        if !expect {
            line.push_str(" (control, failure expected)");
        }
        let _ = write!(line, "  [{note}]");
        println!("{line}");
        txt.push_str(&line);
        txt.push('\n');
        let mut v = serde_json::to_value(report)?;
        v["expected_pass"] = (*expect).into();
        v["ok"] = ok.into();
        jsonl.push_str(&serde_json::to_string(&v)?);
        jsonl.push('\n');
    }
    let summary = format!("verification: {} checks, {violations} violations", items.len());
    println!("{summary}");
    txt.push_str(&summary);
    txt.push('\n');
    write_file(&out, "verify.txt", &txt)?;
    write_file(&out, "verify.jsonl", &jsonl)?;

    if violations > 0 {
        return Err(VerifyFailed {
            violations,
            checks: items.len(),
        }
        .into());
    }
    Ok(())
}

/// Writes latent activations of training vectors from a saved model.
pub fn export_latent(cfg: &RunConfig, vectors: Option<Vec<usize>>) -> Result<()> {
    let ck_path = cfg.checkpoint.as_deref().ok_or_else(|| {
        UsageError("a model is required: pass --checkpoint or set checkpoint= in the config".into())
    })?;
    let ck = checkpoint::load(ck_path)?;
    let out = prepare_out(cfg)?;
    let ing = load_records(cfg)?;
    let split = make_split(cfg, &ing.records, ck.hyper.orientation)?;
    let count = split.train.vector_count(ck.hyper.orientation);
    ensure!(
        ck.num_vectors == count as u64,
        "checkpoint was trained on {} vectors but this split has {count}; check data, fractions, and seed",
        ck.num_vectors
    );
    let indices: Vec<usize> = vectors.unwrap_or_else(|| (0..count).collect());
    let path = out.join("latent.csv");
    refrec::diagnostics::export_latent(&ck.params, &ck.hyper, &split.train, &indices, &path)?;
    println!("wrote {} latent vectors to {}", indices.len(), path.display());
    Ok(())
}
