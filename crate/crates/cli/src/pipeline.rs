//! Shared plumbing between subcommands: run-directory setup, ingestion,
//! splitting, one fit wrapper, and metric column helpers for the CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use refrec::data::{
    apply_min_count_filter, build_split, dedup_last, parse_ratings, DatasetSplit, FilterReport,
    IngestReport, Orientation, ParseOptions, RatingRecord, SplitConfig,
};
use refrec::eval::{EvalTask, MetricReport};
use refrec::kernel::TrainInstance;
use refrec::model::ReflectionMode;
use refrec::training::{fit, map_held_out, matrix_instances, FitOptions, FitReport};
use refrec::{HyperParams64, SparseVector64};

use crate::config::{self, RunConfig, UsageError};

/// Creates the run directory and echoes the resolved config into it.
pub fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating run directory {}", cfg.out.display()))?;
    write_file(&cfg.out, "config.resolved", &config::render(cfg))?;
    Ok(cfg.out.clone())
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub struct Ingest {
    pub records: Vec<RatingRecord>,
    pub read: usize,
    pub duplicates: usize,
    pub filter: FilterReport,
}

pub fn load_records(cfg: &RunConfig) -> Result<Ingest> {
    let path = cfg.data.as_deref().ok_or_else(|| {
        UsageError("a dataset is required: pass --data or set data= in the config".into())
    })?;
    let opts = ParseOptions {
        format: cfg.format,
        delimiter: cfg.delimiter,
        has_header: cfg.has_header,
        implicit: cfg.implicit,
    };
    let records = parse_ratings(path, &opts)?;
    let read = records.len();
    let (records, duplicates) = dedup_last(records);
    let (records, filter) = apply_min_count_filter(records, cfg.min_count, cfg.min_count);
    Ok(Ingest {
        records,
        read,
        duplicates,
        filter,
    })
}

pub fn make_split(
    cfg: &RunConfig,
    records: &[RatingRecord],
    orientation: Orientation,
) -> Result<DatasetSplit<f64>> {
    Ok(build_split::<f64>(
        records,
        orientation,
        &SplitConfig {
            train_fraction: cfg.train_fraction,
            val_fraction: cfg.val_fraction,
            seed: cfg.hyper.seed,
        },
    )?)
}

pub fn ingest_summary(ing: &Ingest, split: &DatasetSplit<f64>) -> String {
    IngestReport {
        records_read: ing.read,
        duplicates: ing.duplicates,
        filter: ing.filter,
        n_users: split.train.n_users(),
        n_items: split.train.n_items(),
        split: split.report,
    }
    .render()
}

pub struct Fitted {
    pub report: FitReport<f64>,
    /// Validation records dropped because their user or item is cold.
    pub val_dropped: usize,
}

/// Fits one model on the split's train matrix. With `inputs` the model
/// consumes the replacement vectors and reconstructs the original observed
/// entries (the neighbor-imputation baseline).
pub fn train_model(
    mode: ReflectionMode,
    hyper: &HyperParams64,
    split: &DatasetSplit<f64>,
    inputs: Option<&[SparseVector64]>,
    deterministic: bool,
    verbose: bool,
) -> Result<Fitted> {
    let orientation = hyper.orientation;
    let instances: Vec<TrainInstance<f64>> = match inputs {
        None => matrix_instances(split, orientation)?,
        Some(vs) => {
            let count = split.train.vector_count(orientation);
            anyhow::ensure!(
                vs.len() == count,
                "{} replacement inputs for {count} matrix vectors",
                vs.len()
            );
            let mut out = Vec::with_capacity(count);
            for (j, v) in vs.iter().enumerate() {
                out.push(TrainInstance::with_target(
                    v.clone(),
                    split.train.interaction_vector(j, orientation)?,
                ));
            }
            out
        }
    };
    let (held, val_dropped) = map_held_out(split, &split.validation, orientation);
    let clip = clip_range(split, hyper);
    let report = fit(
        mode,
        &instances,
        &held,
        clip,
        hyper,
        &FitOptions {
            deterministic,
            verbose,
        },
    )?;
    Ok(Fitted {
        report,
        val_dropped,
    })
}

/// Clamp bounds for validation predictions; degenerate ranges (all equal,
/// as in binarized data) disable clamping rather than pinning predictions.
pub fn clip_range(split: &DatasetSplit<f64>, hyper: &HyperParams64) -> Option<(f64, f64)> {
    if !hyper.clip_predictions {
        return None;
    }
    let (lo, hi) = split.train.rating_range();
    (lo < hi).then_some((lo, hi))
}

/// CSV column names for the task's test metrics.
pub fn metric_cols(task: EvalTask, ks: &[usize]) -> Vec<String> {
    match task {
        EvalTask::Rating => vec!["test_rmse".to_string()],
        EvalTask::Ranking => ks
            .iter()
            .flat_map(|k| [format!("precision@{k}"), format!("ndcg@{k}")])
            .collect(),
    }
}

/// Values matching [`metric_cols`] order.
pub fn metric_row(report: &MetricReport) -> Vec<String> {
    match report.task {
        EvalTask::Rating => vec![report.rmse.map(|r| r.to_string()).unwrap_or_default()],
        EvalTask::Ranking => report
            .precision
            .iter()
            .flat_map(|(k, p)| [p.to_string(), report.ndcg[k].to_string()])
            .collect(),
    }
}

/// Ascending unique cutoffs, so headers and report maps line up.
pub fn normalized_ks(ks: &[usize]) -> Vec<usize> {
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// One-line result for stdout: the RMSE, or the largest-cutoff NDCG.
pub fn headline(report: &MetricReport) -> String {
    match report.task {
        EvalTask::Rating => match report.rmse {
            Some(r) => format!("test rmse {r:.6}"),
            None => "no scorable test records".to_string(),
        },
        EvalTask::Ranking => match report.ndcg.iter().next_back() {
            Some((k, v)) => format!("test ndcg@{k} {v:.6}"),
            None => "no ranked users".to_string(),
        },
    }
}

/// CSV cell for an optional statistic; empty when absent.
pub fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
