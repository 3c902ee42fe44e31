//! Gradient-descent training loop.
//!
//! The loss for one batch is the masked squared reconstruction error summed
//! over the batch's columns plus one set of regularization terms. Gradients
//! come from the batched kernels in [`crate::kernel`]; the accumulation
//! order inside a batch is fixed (ascending column index, fixed-size
//! chunks merged in chunk order), so results do not depend on how many
//! worker threads rayon happens to use. The `deterministic` option forces
//! fully sequential accumulation on top of that and zeroes the wall-clock
//! column of the epoch log.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{DataError, DatasetSplit, Orientation, RatingRecord};
use crate::kernel::{
    column_backward, column_forward, decode_at, finalize_gradients, regularization_loss,
    GradAccum, KernelState, LossBreakdown, TrainInstance,
};
use crate::model::{HyperParams, ModelError, ModelParams, Optimizer, ReflectionMode};
use crate::model::init_params;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("invalid training setup: {0}")]
    InvalidSetup(String),
}

pub type TrainResult<T> = Result<T, TrainError>;

/// Columns per accumulation chunk. Fixed so that the parallel reduction has
/// the same floating-point order for any worker count.
const CHUNK: usize = 32;
/// Chunks processed concurrently before an ordered merge; bounds the number
/// of live gradient buffers.
const WAVE: usize = 16;

/// A held-out observation: `instances[vector]` is fed forward and the
/// prediction at `position` is compared against `value`.
#[derive(Debug, Clone, Copy)]
pub struct HeldOut<F> {
    pub vector: usize,
    pub position: usize,
    pub value: F,
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Sequential accumulation and a zeroed seconds column.
    pub deterministic: bool,
    /// Per-epoch progress lines on stderr.
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub recon: f64,
    pub l2_v: f64,
    pub l2_w: f64,
    pub reg: f64,
    pub total: f64,
    pub val_rmse: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct FitReport<F> {
    /// Parameters at the best validation epoch (final epoch when no
    /// held-out data was supplied).
    pub params: ModelParams<F>,
    pub epochs: Vec<EpochReport>,
    /// 1-based epoch the returned parameters come from.
    pub best_epoch: usize,
    pub best_val_rmse: Option<f64>,
    pub stopped_early: bool,
}

/// One training instance per matrix vector, in index order, so held-out
/// vector indices line up with matrix indices.
pub fn matrix_instances<F: Scalar>(
    split: &DatasetSplit<F>,
    orientation: Orientation,
) -> TrainResult<Vec<TrainInstance<F>>> {
    let count = split.train.vector_count(orientation);
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        out.push(TrainInstance::plain(
            split.train.interaction_vector(j, orientation)?,
        ));
    }
    Ok(out)
}

/// Maps held-out rating records onto matrix coordinates. Cold records,
/// whose user or item has no observation in the train matrix, carry no
/// signal worth steering early stopping by and are dropped; the second
/// element counts them. Matches the test-time drop policy in
/// [`crate::eval`].
pub fn map_held_out<F: Scalar>(
    split: &DatasetSplit<F>,
    records: &[RatingRecord],
    orientation: Orientation,
) -> (Vec<HeldOut<F>>, usize) {
    let mut kept = Vec::with_capacity(records.len());
    let mut dropped = 0usize;
    for rec in records {
        if crate::data::is_cold(&split.train, rec) {
            dropped += 1;
            continue;
        }
        let u = split.train.user_index(rec.user).expect("warm record");
        let i = split.train.item_index(rec.item).expect("warm record");
        let (vector, position) = match orientation {
            Orientation::ItemBased => (i, u),
            Orientation::UserBased => (u, i),
        };
        kept.push(HeldOut {
            vector,
            position,
            value: F::from_double(rec.value),
        });
    }
    (kept, dropped)
}

/// Loss of one batch at fixed parameters.
pub fn compute_loss<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    batch: &[TrainInstance<F>],
) -> TrainResult<LossBreakdown<F>> {
    let state = KernelState::prepare(params)?;
    let mut recon = F::zero();
    for inst in batch {
        let fwd = column_forward(params, hyper, &state, &inst.input)?;
        for &(i, t_i) in inst.target().entries() {
            let e = decode_at(params, hyper, &inst.input, &fwd.z, i) - t_i;
            recon += e * e;
        }
    }
    let (l2_v, l2_w, reg) = regularization_loss(params, hyper);
    Ok(LossBreakdown::assemble(recon, l2_v, l2_w, reg))
}

/// Gradient of [`compute_loss`] with respect to every parameter, plus the
/// loss itself. Sequential accumulation; the training loop has its own
/// chunked path.
pub fn compute_gradients<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    batch: &[TrainInstance<F>],
) -> TrainResult<(ModelParams<F>, LossBreakdown<F>)> {
    let state = KernelState::prepare(params)?;
    let mut accum = GradAccum::new(params);
    for inst in batch {
        column_backward(params, hyper, &state, inst, &mut accum)?;
    }
    let grads = finalize_gradients(params, hyper, &state, &accum)?;
    let (l2_v, l2_w, reg) = regularization_loss(params, hyper);
    Ok((grads, LossBreakdown::assemble(accum.recon, l2_v, l2_w, reg)))
}

/// Early stopping on a minimized score: stops exactly `patience` epochs
/// after the best one.
#[derive(Debug, Clone)]
pub struct EarlyStop {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        EarlyStop {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_value(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.since_best = 0;
            StopDecision::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
pub struct AdamState<F> {
    m: ModelParams<F>,
    v: ModelParams<F>,
    t: i32,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>, lr: F) {
        self.t += 1;
        let b1 = F::from_double(0.9);
        let b2 = F::from_double(0.999);
        let eps = F::from_double(1e-8);
        let one = F::one();
        let mc = one / (one - b1.powi(self.t));
        let vc = one / (one - b2.powi(self.t));
        let pt = params.tensors_mut();
        let mt = self.m.tensors_mut();
        let vt = self.v.tensors_mut();
        let gt = grads.tensors();
        for (((p, m), v), g) in pt.into_iter().zip(mt).zip(vt).zip(gt) {
            for (((pj, mj), vj), &gj) in
                p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.iter())
            {
                *mj = b1 * *mj + (one - b1) * gj;
                *vj = b2 * *vj + (one - b2) * gj * gj;
                let mhat = *mj * mc;
                let vhat = *vj * vc;
                *pj -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

enum OptState<F> {
    Adam(AdamState<F>),
    Sgd,
}

impl<F: Scalar> OptState<F> {
    fn new(optimizer: Optimizer, params: &ModelParams<F>) -> Self {
        match optimizer {
            Optimizer::Adam => OptState::Adam(AdamState::new(params)),
            Optimizer::Sgd => OptState::Sgd,
        }
    }

    fn step(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>, lr: F) {
        match self {
            OptState::Adam(a) => a.step(params, grads, lr),
            OptState::Sgd => {
                let pt = params.tensors_mut();
                let gt = grads.tensors();
                for (p, g) in pt.into_iter().zip(gt) {
                    for (pj, &gj) in p.iter_mut().zip(g.iter()) {
                        *pj -= lr * gj;
                    }
                }
            }
        }
    }
}

/// Trains a model on `instances` (one per matrix vector, in vector order).
///
/// When `held_out` is non-empty the validation RMSE drives early stopping
/// and the parameters from the best validation epoch are returned;
/// predictions are clamped to `clip` when given. Without held-out data the
/// loop runs all `max_epochs` and returns the final parameters.
pub fn fit<F: Scalar>(
    mode: ReflectionMode,
    instances: &[TrainInstance<F>],
    held_out: &[HeldOut<F>],
    clip: Option<(F, F)>,
    hyper: &HyperParams<F>,
    options: &FitOptions,
) -> TrainResult<FitReport<F>> {
    let first = instances
        .first()
        .ok_or_else(|| TrainError::InvalidSetup("no training instances".into()))?;
    let n = first.input.dim();
    for inst in instances {
        if inst.input.dim() != n || inst.target().dim() != n {
            return Err(TrainError::InvalidSetup(
                "training vectors have mixed dimensions".into(),
            ));
        }
    }
    for h in held_out {
        if h.vector >= instances.len() || h.position >= n {
            return Err(TrainError::InvalidSetup(format!(
                "held-out record ({}, {}) outside {} x {}",
                h.vector,
                h.position,
                instances.len(),
                n
            )));
        }
    }
    if hyper.batch_size == 0 {
        return Err(TrainError::InvalidSetup("batch size must be positive".into()));
    }

    let mut params = init_params::<F>(mode, n, hyper.d_p, hyper.seed)?;
    let mut opt = OptState::new(hyper.optimizer, &params);
    // Distinct stream from the init draw.
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(0x9E3779B97F4A7C15));

    // Group held-out records by vector so each validation pass runs one
    // forward per distinct column.
    let mut grouped: Vec<(usize, Vec<(usize, F)>)> = Vec::new();
    {
        let mut sorted: Vec<&HeldOut<F>> = held_out.iter().collect();
        sorted.sort_by_key(|h| (h.vector, h.position));
        for h in sorted {
            match grouped.last_mut() {
                Some((v, list)) if *v == h.vector => list.push((h.position, h.value)),
                _ => grouped.push((h.vector, vec![(h.position, h.value)])),
            }
        }
    }

    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut chunk_bufs: Vec<GradAccum<F>> = Vec::new();
    let mut stopper = EarlyStop::new(hyper.patience);
    let mut best_params: Option<ModelParams<F>> = None;
    let mut best_epoch = 0usize;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=hyper.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_recon = 0.0f64;

        for batch in order.chunks(hyper.batch_size) {
            let mut batch_sorted = batch.to_vec();
            batch_sorted.sort_unstable();
            let state = KernelState::prepare(&params)?;
            let mut master = GradAccum::new(&params);

            if options.deterministic || batch_sorted.len() <= CHUNK {
                for &idx in &batch_sorted {
                    column_backward(&params, hyper, &state, &instances[idx], &mut master)?;
                }
            } else {
                while chunk_bufs.len() < WAVE.min(batch_sorted.len().div_ceil(CHUNK)) {
                    chunk_bufs.push(GradAccum::new(&params));
                }
                for wave in batch_sorted.chunks(CHUNK * WAVE) {
                    let chunks: Vec<&[usize]> = wave.chunks(CHUNK).collect();
                    chunk_bufs[..chunks.len()]
                        .par_iter_mut()
                        .zip(chunks.par_iter())
                        .try_for_each(|(buf, chunk)| {
                            buf.reset();
                            for &idx in chunk.iter() {
                                column_backward(&params, hyper, &state, &instances[idx], buf)?;
                            }
                            Ok::<(), ModelError>(())
                        })?;
                    for buf in &chunk_bufs[..chunks.len()] {
                        master.merge(buf);
                    }
                }
            }

            if !master.recon.to_double().is_finite() {
                return Err(TrainError::NonFinite { epoch });
            }
            epoch_recon += master.recon.to_double();
            let grads = finalize_gradients(&params, hyper, &state, &master)?;
            opt.step(&mut params, &grads, hyper.learning_rate);
        }

        let (l2_v, l2_w, reg) = regularization_loss(&params, hyper);
        let (l2_v, l2_w, reg) = (l2_v.to_double(), l2_w.to_double(), reg.to_double());
        let total = epoch_recon + l2_v + l2_w + reg;
        if !total.is_finite() {
            return Err(TrainError::NonFinite { epoch });
        }

        let val_rmse = if grouped.is_empty() {
            None
        } else {
            Some(validation_rmse(&params, hyper, instances, &grouped, clip)?)
        };

        let seconds = if options.deterministic {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        };
        let report = EpochReport {
            epoch,
            recon: epoch_recon,
            l2_v,
            l2_w,
            reg,
            total,
            val_rmse,
            seconds,
        };
        if options.verbose {
            match val_rmse {
                Some(v) => eprintln!(
                    "epoch {epoch}: total {total:.6} val_rmse {v:.6} ({seconds:.1}s)"
                ),
                None => eprintln!("epoch {epoch}: total {total:.6} ({seconds:.1}s)"),
            }
        }
        epochs.push(report);

        if let Some(v) = val_rmse {
            match stopper.observe(epoch, v) {
                StopDecision::Improved => {
                    best_params = Some(params.clone());
                    best_epoch = epoch;
                }
                StopDecision::Continue => {}
                StopDecision::Stop => {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let best_val_rmse = if grouped.is_empty() {
        None
    } else {
        Some(stopper.best_value())
    };
    let (params, best_epoch) = match best_params {
        Some(p) => (p, best_epoch),
        None => {
            let last = epochs.len();
            (params, last)
        }
    };
    Ok(FitReport {
        params,
        epochs,
        best_epoch,
        best_val_rmse,
        stopped_early,
    })
}

fn validation_rmse<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    instances: &[TrainInstance<F>],
    grouped: &[(usize, Vec<(usize, F)>)],
    clip: Option<(F, F)>,
) -> TrainResult<f64> {
    let state = KernelState::prepare(params)?;
    let mut sq = 0.0f64;
    let mut count = 0usize;
    for (vector, targets) in grouped {
        let x = &instances[*vector].input;
        let fwd = column_forward(params, hyper, &state, x)?;
        for &(pos, value) in targets {
            let mut h = decode_at(params, hyper, x, &fwd.z, pos);
            if let Some((lo, hi)) = clip {
                h = h.max(lo).min(hi);
            }
            let e = h.to_double() - value.to_double();
            sq += e * e;
            count += 1;
        }
    }
    Ok((sq / count as f64).sqrt())
}

/// Renders the per-epoch log in its on-disk CSV form.
pub fn render_epoch_csv(epochs: &[EpochReport]) -> String {
    let mut out = String::from("epoch,recon,l2_V,l2_W,reg,total,val_rmse,seconds\n");
    for e in epochs {
        let val = e.val_rmse.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3}\n",
            e.epoch, e.recon, e.l2_v, e.l2_w, e.reg, e.total, val, e.seconds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DecayKind;
    use crate::numerics::SparseVector;
    use rand::Rng;

    fn dense_column(values: &[f64]) -> TrainInstance<f64> {
        let entries = values.iter().cloned().enumerate().collect();
        TrainInstance::plain(SparseVector::new(values.len(), entries).unwrap())
    }

    fn toy_hyper() -> HyperParams<f64> {
        HyperParams {
            d_p: 3,
            decay: DecayKind::Phi1,
            alpha: 1.0,
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            lambda4: 0.0,
            learning_rate: 1e-2,
            batch_size: 8,
            max_epochs: 800,
            patience: 10,
            residual: false,
            ..HyperParams::default()
        }
    }

    #[test]
    fn adam_first_step_is_normalized() {
        let mut params = init_params::<f64>(ReflectionMode::Plain, 2, 1, 7).unwrap();
        let before = params.v[(0, 0)];
        let mut grads = params.zeros_like();
        grads.v[(0, 0)] = 3.0;
        let mut adam = AdamState::new(&params);
        adam.step(&mut params, &grads, 0.1);
        // Bias-corrected first step moves by lr * g / (|g| + eps).
        let delta = params.v[(0, 0)] - before;
        assert!((delta + 0.1).abs() < 1e-8, "delta {delta}");
        // Untouched coordinates stay put.
        assert_eq!(params.b[0], 0.0);
    }

    #[test]
    fn sgd_step_is_exact() {
        let mut params = init_params::<f64>(ReflectionMode::Plain, 2, 1, 7).unwrap();
        let before = params.w[(1, 0)];
        let mut grads = params.zeros_like();
        grads.w[(1, 0)] = 2.0;
        let mut opt = OptState::new(Optimizer::Sgd, &params);
        opt.step(&mut params, &grads, 0.25);
        assert_eq!(params.w[(1, 0)], before - 0.5);
    }

    #[test]
    fn early_stop_waits_exactly_patience_epochs() {
        let mut s = EarlyStop::new(3);
        assert_eq!(s.observe(1, 1.0), StopDecision::Improved);
        assert_eq!(s.observe(2, 0.8), StopDecision::Improved);
        assert_eq!(s.observe(3, 0.9), StopDecision::Continue);
        assert_eq!(s.observe(4, 0.85), StopDecision::Continue);
        assert_eq!(s.observe(5, 0.81), StopDecision::Stop);
        assert_eq!(s.best_epoch(), 2);
        assert_eq!(s.best_value(), 0.8);
    }

    #[test]
    fn early_stop_resets_on_improvement() {
        let mut s = EarlyStop::new(2);
        s.observe(1, 1.0);
        assert_eq!(s.observe(2, 1.5), StopDecision::Continue);
        assert_eq!(s.observe(3, 0.5), StopDecision::Improved);
        assert_eq!(s.observe(4, 0.6), StopDecision::Continue);
        assert_eq!(s.observe(5, 0.6), StopDecision::Stop);
    }

    #[test]
    fn fit_drives_reconstruction_down_on_dense_toy() {
        // Rank-1 structure: column j is roughly profile * weight_j.
        let profile = [1.0f64, 2.0, 3.0, 4.0, 2.5, 1.5];
        let weights = [1.0f64, 0.8, 1.2, 0.9];
        let instances: Vec<TrainInstance<f64>> = weights
            .iter()
            .map(|w| dense_column(&profile.map(|p| (p * w).clamp(1.0, 5.0))))
            .collect();
        let hyper = toy_hyper();
        let report = fit(
            ReflectionMode::Plain,
            &instances,
            &[],
            None,
            &hyper,
            &FitOptions::default(),
        )
        .unwrap();
        let first = report.epochs.first().unwrap().recon;
        let last = report.epochs.last().unwrap().recon;
        assert_eq!(report.epochs.len(), hyper.max_epochs);
        assert!(
            last < 0.02 * first,
            "reconstruction barely moved: {first} -> {last}"
        );
        assert!(last < 0.5, "absolute loss still high: {last}");
    }

    #[test]
    fn fit_is_bitwise_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let instances: Vec<TrainInstance<f64>> = (0..10)
            .map(|_| {
                let entries: Vec<(usize, f64)> = (0..12)
                    .filter_map(|i| rng.gen_bool(0.5).then(|| (i, rng.gen_range(1.0..5.0))))
                    .collect();
                let entries = if entries.is_empty() { vec![(0, 3.0)] } else { entries };
                TrainInstance::plain(SparseVector::new(12, entries).unwrap())
            })
            .collect();
        let held_out = [HeldOut { vector: 0, position: 11, value: 3.0 }];
        let hyper = HyperParams {
            d_p: 4,
            max_epochs: 15,
            batch_size: 4,
            lambda3: 0.01,
            ..toy_hyper()
        };
        let opts = FitOptions { deterministic: true, ..Default::default() };
        let run = |o: &FitOptions| {
            fit(
                ReflectionMode::ImplicitT,
                &instances,
                &held_out,
                Some((1.0, 5.0)),
                &hyper,
                o,
            )
            .unwrap()
        };
        for options in [&opts, &FitOptions::default()] {
            let a = run(options);
            let b = run(options);
            for (ta, tb) in a.params.tensors().iter().zip(b.params.tensors().iter()) {
                for (x, y) in ta.iter().zip(tb.iter()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            // Everything but wall-clock seconds must match exactly.
            let strip_seconds = |csv: String| {
                csv.lines()
                    .map(|l| l.rsplit_once(',').unwrap().0.to_string())
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(
                strip_seconds(render_epoch_csv(&a.epochs)),
                strip_seconds(render_epoch_csv(&b.epochs))
            );
            assert_eq!(a.best_epoch, b.best_epoch);
        }
    }

    #[test]
    fn deterministic_mode_zeroes_seconds() {
        let instances = vec![dense_column(&[1.0, 2.0])];
        let hyper = HyperParams { d_p: 2, max_epochs: 2, ..toy_hyper() };
        let report = fit(
            ReflectionMode::Plain,
            &instances,
            &[],
            None,
            &hyper,
            &FitOptions { deterministic: true, ..Default::default() },
        )
        .unwrap();
        let csv = render_epoch_csv(&report.epochs);
        for line in csv.lines().skip(1) {
            assert!(line.ends_with(",0.000"), "line: {line}");
        }
        assert!(csv.starts_with("epoch,recon,l2_V,l2_W,reg,total,val_rmse,seconds\n"));
    }

    #[test]
    fn divergence_is_reported_not_propagated() {
        let instances = vec![dense_column(&[1.0, 5.0, 3.0]), dense_column(&[2.0, 2.0, 2.0])];
        let hyper = HyperParams {
            d_p: 2,
            learning_rate: 1e200,
            max_epochs: 5,
            batch_size: 1,
            optimizer: Optimizer::Sgd,
            ..toy_hyper()
        };
        let err = fit(
            ReflectionMode::Plain,
            &instances,
            &[],
            None,
            &hyper,
            &FitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::NonFinite { .. }), "{err}");
    }

    #[test]
    fn early_stopping_returns_best_epoch_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let instances: Vec<TrainInstance<f64>> = (0..8)
            .map(|_| {
                let entries: Vec<(usize, f64)> = (0..10)
                    .filter_map(|i| rng.gen_bool(0.7).then(|| (i, rng.gen_range(1.0..5.0))))
                    .collect();
                TrainInstance::plain(SparseVector::new(10, entries).unwrap())
            })
            .collect();
        let held_out = [
            HeldOut { vector: 1, position: 0, value: 2.0 },
            HeldOut { vector: 3, position: 9, value: 4.0 },
        ];
        let hyper = HyperParams {
            d_p: 3,
            max_epochs: 200,
            patience: 5,
            ..toy_hyper()
        };
        let report = fit(
            ReflectionMode::TiedTranspose,
            &instances,
            &held_out,
            Some((1.0, 5.0)),
            &hyper,
            &FitOptions::default(),
        )
        .unwrap();
        let best = report.best_val_rmse.unwrap();
        let min_logged = report
            .epochs
            .iter()
            .filter_map(|e| e.val_rmse)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best, min_logged);
        assert_eq!(
            report.epochs[report.best_epoch - 1].val_rmse.unwrap(),
            best
        );
        if report.stopped_early {
            assert_eq!(report.epochs.len(), report.best_epoch + hyper.patience);
        }
    }

    #[test]
    fn split_inputs_use_matrix_coordinates() {
        use crate::data::{build_split, RatingRecord, SplitConfig};
        let mut records = Vec::new();
        for user in 1..=6u64 {
            for item in 1..=5u64 {
                records.push(RatingRecord {
                    user,
                    item,
                    value: ((user + item) % 5 + 1) as f64,
                    timestamp: Some(0),
                });
            }
        }
        let config = SplitConfig {
            train_fraction: 0.8,
            val_fraction: 0.15,
            seed: 3,
        };
        let split = build_split::<f64>(&records, Orientation::ItemBased, &config).unwrap();
        let instances = matrix_instances(&split, Orientation::ItemBased).unwrap();
        assert_eq!(instances.len(), split.train.n_items());
        for (j, inst) in instances.iter().enumerate() {
            assert_eq!(inst.input.dim(), split.train.n_users());
            assert_eq!(inst.input.nnz(), split.train.col_entries(j).len());
        }
        let (held_out, dropped) = map_held_out(&split, &split.validation, Orientation::ItemBased);
        assert_eq!(held_out.len() + dropped, split.validation.len());
        assert_eq!(dropped, split.report.cold_val);
        for ho in &held_out {
            let rec = split
                .validation
                .iter()
                .find(|r| {
                    split.train.item_index(r.item) == Some(ho.vector)
                        && split.train.user_index(r.user) == Some(ho.position)
                })
                .expect("held-out cell maps back to a validation record");
            assert_eq!(ho.value, rec.value);
            // Held out means held out: the cell is absent from the inputs.
            assert!(!instances[ho.vector].input.is_observed(ho.position));
        }
    }
}
