//! Rating-prediction RMSE and ranking metrics with top-K generation.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::{is_cold, DatasetSplit, InteractionMatrix, Orientation};
use crate::kernel::{column_forward, decode_at, KernelState};
use crate::model::{HyperParams, ModelError, ModelParams};
use crate::numerics::{dot, DenseVector, SparseVector};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("nothing to score: {0}")]
    Empty(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type EvalResult<T> = Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Rating,
    Ranking,
}

impl EvalTask {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalTask::Rating => "rating",
            EvalTask::Ranking => "ranking",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rating" => Some(EvalTask::Rating),
            "ranking" => Some(EvalTask::Ranking),
            _ => None,
        }
    }
}

/// Pooled root-mean-squared error over (actual, predicted) pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> EvalResult<f64> {
    if pairs.is_empty() {
        return Err(EvalError::Empty("rmse over zero pairs".into()));
    }
    let sq: f64 = pairs.iter().map(|(a, p)| (p - a) * (p - a)).sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

/// Ordered recommendations for one user. Scores are non-increasing and no
/// item from the user's training interactions appears.
#[derive(Debug, Clone)]
pub struct RankingList {
    pub user: u64,
    pub items: Vec<u64>,
    pub scores: Vec<f64>,
}

/// |top-K ∩ relevant| / K.
pub fn precision_at_k(recommended: &RankingList, relevant: &HashSet<u64>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let hits = recommended
        .items
        .iter()
        .take(k)
        .filter(|id| relevant.contains(id))
        .count();
    hits as f64 / k as f64
}

/// DCG over 1-based hit ranks with the 1/log2(r+1) discount, normalized by
/// the best achievable DCG for min(K, |relevant|) hits.
pub fn ndcg_at_k(recommended: &RankingList, relevant: &HashSet<u64>, k: usize) -> f64 {
    if k == 0 || relevant.is_empty() {
        return 0.0;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = recommended
        .items
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(*id))
        .map(|(pos, _)| discount(pos + 1))
        .sum();
    let ideal: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    dcg / ideal
}

/// Precomputed per-vector latents, so scoring a user is one pass over the
/// decoder rows instead of a fresh forward per candidate.
pub struct Recommender<'a, F> {
    params: &'a ModelParams<F>,
    train: &'a InteractionMatrix<F>,
    orientation: Orientation,
    /// Latent z for every interaction vector, in vector-index order.
    latents: Vec<DenseVector<F>>,
}

impl<'a, F: Scalar> Recommender<'a, F> {
    pub fn new(
        params: &'a ModelParams<F>,
        hyper: &'a HyperParams<F>,
        train: &'a InteractionMatrix<F>,
    ) -> EvalResult<Self> {
        Self::build(params, hyper, train, None)
    }

    /// Like [`Recommender::new`], but encodes the given vectors instead of
    /// the train matrix's raw ones. For models trained on transformed
    /// inputs (the neighbor-imputed baseline), inference must consume the
    /// same transformation; `inputs[j]` replaces matrix vector `j`.
    pub fn with_inputs(
        params: &'a ModelParams<F>,
        hyper: &'a HyperParams<F>,
        train: &'a InteractionMatrix<F>,
        inputs: &[SparseVector<F>],
    ) -> EvalResult<Self> {
        Self::build(params, hyper, train, Some(inputs))
    }

    fn build(
        params: &'a ModelParams<F>,
        hyper: &'a HyperParams<F>,
        train: &'a InteractionMatrix<F>,
        inputs: Option<&[SparseVector<F>]>,
    ) -> EvalResult<Self> {
        let orientation = hyper.orientation;
        if train.input_dim(orientation) != params.input_dim() {
            return Err(EvalError::InvalidArgument(format!(
                "matrix dimension {} does not match model dimension {}",
                train.input_dim(orientation),
                params.input_dim()
            )));
        }
        let count = train.vector_count(orientation);
        if let Some(vs) = inputs {
            if vs.len() != count {
                return Err(EvalError::InvalidArgument(format!(
                    "{} input vectors for {count} matrix vectors",
                    vs.len()
                )));
            }
            if let Some(v) = vs.iter().find(|v| v.dim() != params.input_dim()) {
                return Err(EvalError::InvalidArgument(format!(
                    "input vector dimension {} does not match model dimension {}",
                    v.dim(),
                    params.input_dim()
                )));
            }
        }
        let state = KernelState::prepare(params)?;
        let latents = (0..count)
            .into_par_iter()
            .map(|j| {
                let z = match inputs {
                    Some(vs) => column_forward(params, hyper, &state, &vs[j])?.z,
                    None => {
                        let x = train.interaction_vector(j, orientation)?;
                        column_forward(params, hyper, &state, &x)?.z
                    }
                };
                Ok(z)
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok(Recommender {
            params,
            train,
            orientation,
            latents,
        })
    }

    /// Predicted score for one (user, item) index pair, before clipping.
    /// The residual path only matters at observed positions, which the
    /// top-K generator excludes anyway.
    pub fn score(&self, user: usize, item: usize) -> F {
        let (vector, position) = match self.orientation {
            Orientation::ItemBased => (item, user),
            Orientation::UserBased => (user, item),
        };
        dot(self.params.w.row(position), self.latents[vector].as_slice())
            + self.params.b[position]
    }

    /// Top-K items for a user by external id, training items excluded,
    /// ties broken by ascending item id. Shorter than K when fewer items
    /// are eligible; empty when the user trained on everything.
    pub fn topk(&self, user: u64, k: usize) -> EvalResult<RankingList> {
        if k == 0 {
            return Err(EvalError::InvalidArgument("K must be at least 1".into()));
        }
        let user_idx = self
            .train
            .user_index(user)
            .ok_or_else(|| EvalError::InvalidArgument(format!("unknown user id {user}")))?;
        let trained: HashSet<usize> = match self.orientation {
            Orientation::ItemBased => {
                self.train.row_entries(user_idx).iter().map(|&(i, _)| i).collect()
            }
            Orientation::UserBased => self
                .train
                .interaction_vector(user_idx, self.orientation)?
                .entries()
                .iter()
                .map(|&(i, _)| i)
                .collect(),
        };
        let mut scored: Vec<(usize, f64)> = (0..self.train.n_items())
            .filter(|i| !trained.contains(i))
            .map(|i| (i, self.score(user_idx, i).to_double()))
            .collect();
        // Item indexes ascend with item ids, so the index tie-break below
        // is the id tie-break.
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(RankingList {
            user,
            items: scored.iter().map(|&(i, _)| self.train.item_ids()[i]).collect(),
            scores: scored.iter().map(|&(_, s)| s).collect(),
        })
    }
}

/// One-shot top-K; builds the latent table for a single query.
pub fn recommend_topk<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    train: &InteractionMatrix<F>,
    user: u64,
    k: usize,
) -> EvalResult<RankingList> {
    Recommender::new(params, hyper, train)?.topk(user, k)
}

/// Evaluation results with stable key names; `to_json_line` emits the
/// machine-readable single-line form.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub task: EvalTask,
    /// Rating task only.
    pub rmse: Option<f64>,
    /// Per-K macro averages, ranking task only.
    pub precision: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    /// Held-out records actually scored (rating) or usable as relevance
    /// labels (ranking).
    pub scored: usize,
    /// Held-out records dropped because their user or item has no training
    /// interactions.
    pub dropped: usize,
    /// Users in the ranking macro average.
    pub ranked_users: usize,
    pub split_seed: u64,
}

impl MetricReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn render_human(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("task: {}\n", self.task.as_str()));
        if let Some(r) = self.rmse {
            out.push_str(&format!("rmse: {r:.6}\n"));
        }
        for (k, v) in &self.precision {
            out.push_str(&format!("precision@{k}: {v:.6}\n"));
        }
        for (k, v) in &self.ndcg {
            out.push_str(&format!("ndcg@{k}: {v:.6}\n"));
        }
        out.push_str(&format!(
            "scored: {}\ndropped: {}\n",
            self.scored, self.dropped
        ));
        if self.task == EvalTask::Ranking {
            out.push_str(&format!("ranked_users: {}\n", self.ranked_users));
        }
        out.push_str(&format!("split_seed: {}\n", self.split_seed));
        out
    }
}

/// Scores a split's test records. Rating task: predictions at held-out
/// positions, optionally clipped to the training rating range, pooled into
/// one RMSE. Ranking task: per-user top-K lists with the user's test items
/// as the relevant set, macro-averaged over users that still have test
/// records after cold ones are dropped.
pub fn evaluate_split<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    split: &DatasetSplit<F>,
    task: EvalTask,
    ks: &[usize],
) -> EvalResult<MetricReport> {
    evaluate_split_with_inputs(params, hyper, split, None, task, ks)
}

/// [`evaluate_split`] with the model fed `inputs[j]` in place of matrix
/// vector `j`; see [`Recommender::with_inputs`] for when that matters.
pub fn evaluate_split_with_inputs<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    split: &DatasetSplit<F>,
    inputs: Option<&[SparseVector<F>]>,
    task: EvalTask,
    ks: &[usize],
) -> EvalResult<MetricReport> {
    let train = &split.train;
    let orientation = hyper.orientation;
    if let Some(vs) = inputs {
        if vs.len() != train.vector_count(orientation) {
            return Err(EvalError::InvalidArgument(format!(
                "{} input vectors for {} matrix vectors",
                vs.len(),
                train.vector_count(orientation)
            )));
        }
    }
    let mut dropped = 0usize;
    let mut report = MetricReport {
        task,
        rmse: None,
        precision: BTreeMap::new(),
        ndcg: BTreeMap::new(),
        scored: 0,
        dropped: 0,
        ranked_users: 0,
        split_seed: split.seed,
    };

    match task {
        EvalTask::Rating => {
            // Group records by interaction vector: one forward each.
            let mut by_vector: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
            for r in &split.test {
                if is_cold(train, r) {
                    dropped += 1;
                    continue;
                }
                let u = train.user_index(r.user);
                let i = train.item_index(r.item);
                let (Some(u), Some(i)) = (u, i) else {
                    dropped += 1;
                    continue;
                };
                let (vector, position) = match orientation {
                    Orientation::ItemBased => (i, u),
                    Orientation::UserBased => (u, i),
                };
                by_vector.entry(vector).or_default().push((position, r.value));
            }
            let state = KernelState::prepare(params)?;
            let clip = if hyper.clip_predictions {
                let (lo, hi) = train.rating_range();
                Some((lo.to_double(), hi.to_double()))
            } else {
                None
            };
            let mut pairs = Vec::new();
            for (vector, targets) in &by_vector {
                let stored;
                let x = match inputs {
                    Some(vs) => &vs[*vector],
                    None => {
                        stored = train.interaction_vector(*vector, orientation)?;
                        &stored
                    }
                };
                let fwd = column_forward(params, hyper, &state, x)?;
                for &(position, actual) in targets {
                    let mut h = decode_at(params, hyper, x, &fwd.z, position).to_double();
                    if let Some((lo, hi)) = clip {
                        h = h.clamp(lo, hi);
                    }
                    pairs.push((actual, h));
                }
            }
            report.rmse = Some(rmse(&pairs)?);
            report.scored = pairs.len();
        }
        EvalTask::Ranking => {
            if ks.is_empty() || ks.contains(&0) {
                return Err(EvalError::InvalidArgument(
                    "K list must be non-empty and positive".into(),
                ));
            }
            let mut relevant: BTreeMap<u64, HashSet<u64>> = BTreeMap::new();
            for r in &split.test {
                if is_cold(train, r) {
                    dropped += 1;
                    continue;
                }
                relevant.entry(r.user).or_default().insert(r.item);
            }
            if relevant.is_empty() {
                return Err(EvalError::Empty(
                    "no test user has training interactions".into(),
                ));
            }
            let rec = match inputs {
                Some(vs) => Recommender::with_inputs(params, hyper, train, vs)?,
                None => Recommender::new(params, hyper, train)?,
            };
            let k_max = *ks.iter().max().expect("non-empty");
            let mut sums: BTreeMap<usize, (f64, f64)> = ks.iter().map(|&k| (k, (0.0, 0.0))).collect();
            for (user, rel) in &relevant {
                let list = rec.topk(*user, k_max)?;
                for &k in ks {
                    let entry = sums.get_mut(&k).expect("prefilled");
                    entry.0 += precision_at_k(&list, rel, k);
                    entry.1 += ndcg_at_k(&list, rel, k);
                }
                report.scored += rel.len();
            }
            report.ranked_users = relevant.len();
            for (k, (p, n)) in sums {
                report.precision.insert(k, p / report.ranked_users as f64);
                report.ndcg.insert(k, n / report.ranked_users as f64);
            }
        }
    }
    report.dropped = dropped;
    Ok(report)
}
