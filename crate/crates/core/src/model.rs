//! Model parameters, decay factors, and reference forward passes.
//!
//! The network is a three-layer autoencoder over interaction vectors.
//! Before encoding, unobserved positions can be filled by reflecting the
//! encoder projection back through a reflector matrix, scaled by a decay
//! factor that shrinks with the vector's observed count:
//!
//! * tied: the reflector is the encoder transpose V^T,
//! * independent: a separately trained reflector U,
//! * implicit: a latent map T applied to the projection itself (no masking,
//!   regularized toward V V^T),
//! * plain: no reflection at all (ablation baseline).
//!
//! The forward passes here are the readable reference; [`crate::kernel`]
//! holds the batched equivalents used by training and evaluation.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{InteractionMatrix, Orientation};
use crate::numerics::{DenseMatrix, DenseVector, NumericsError, SparseVector};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("numerics: {0}")]
    Numerics(#[from] NumericsError),
    #[error("parameter shape: {0}")]
    Shape(String),
    #[error("{op} not defined for mode {mode:?}")]
    ModeUnsupported { op: &'static str, mode: ReflectionMode },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type ModelResult<T> = Result<T, ModelError>;

/// How unobserved positions are filled before encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReflectionMode {
    /// Reflect through the encoder transpose; no extra parameters.
    TiedTranspose,
    /// Reflect through a separately trained matrix U.
    IndependentU,
    /// Apply a trained latent map T to the projection, unmasked.
    ImplicitT,
    /// No reflection; plain masked autoencoder.
    Plain,
}

impl ReflectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReflectionMode::TiedTranspose => "tied",
            ReflectionMode::IndependentU => "independent",
            ReflectionMode::ImplicitT => "implicit",
            ReflectionMode::Plain => "plain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tied" => Some(ReflectionMode::TiedTranspose),
            "independent" => Some(ReflectionMode::IndependentU),
            "implicit" => Some(ReflectionMode::ImplicitT),
            "plain" => Some(ReflectionMode::Plain),
            _ => None,
        }
    }
}

/// Decay family for the reflection magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayKind {
    /// alpha / nnz
    Phi1,
    /// alpha * ln(nnz + 1) / nnz
    Phi2,
    /// alpha / sqrt(nnz)
    Phi3,
    /// alpha, independent of nnz
    Phi4,
}

impl DecayKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecayKind::Phi1 => "phi1",
            DecayKind::Phi2 => "phi2",
            DecayKind::Phi3 => "phi3",
            DecayKind::Phi4 => "phi4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "phi1" => Some(DecayKind::Phi1),
            "phi2" => Some(DecayKind::Phi2),
            "phi3" => Some(DecayKind::Phi3),
            "phi4" => Some(DecayKind::Phi4),
            _ => None,
        }
    }
}

/// Decay factor for a vector with `nnz` observed entries. An empty vector
/// carries no evidence, so every family returns 0 there (this also guards
/// the divisions).
pub fn decay<F: Scalar>(kind: DecayKind, alpha: F, nnz: usize) -> F {
    if nnz == 0 {
        return F::zero();
    }
    let n = F::from_double(nnz as f64);
    match kind {
        DecayKind::Phi1 => alpha / n,
        DecayKind::Phi2 => alpha * (n + F::one()).ln() / n,
        DecayKind::Phi3 => alpha / n.sqrt(),
        DecayKind::Phi4 => alpha,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adam" => Some(Optimizer::Adam),
            "sgd" => Some(Optimizer::Sgd),
            _ => None,
        }
    }
}

/// Training and model hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams<F> {
    pub d_p: usize,
    pub decay: DecayKind,
    pub alpha: F,
    /// Encoder L2 weight.
    pub lambda1: F,
    /// Decoder L2 weight.
    pub lambda2: F,
    /// Implicit-map anchor weight (pulls T toward V V^T).
    pub lambda3: F,
    /// Independent reflector L2 weight.
    pub lambda4: F,
    pub learning_rate: F,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub residual: bool,
    pub orientation: Orientation,
    pub optimizer: Optimizer,
    pub clip_predictions: bool,
    pub seed: u64,
}

impl<F: Scalar> Default for HyperParams<F> {
    fn default() -> Self {
        HyperParams {
            d_p: 500,
            decay: DecayKind::Phi1,
            alpha: F::from_double(20.0),
            lambda1: F::from_double(0.05),
            lambda2: F::from_double(0.05),
            lambda3: F::from_double(0.1),
            lambda4: F::from_double(0.05),
            learning_rate: F::from_double(1e-3),
            batch_size: 256,
            max_epochs: 500,
            patience: 10,
            residual: true,
            orientation: Orientation::ItemBased,
            optimizer: Optimizer::Adam,
            clip_predictions: true,
            seed: 42,
        }
    }
}

impl<F: Scalar> HyperParams<F> {
    /// Decay factor for a vector with `nnz` observed entries.
    pub fn phi(&self, nnz: usize) -> F {
        decay(self.decay, self.alpha, nnz)
    }
}

/// Mode-specific parameter block.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtraParams<F> {
    /// Tied and plain modes carry nothing extra.
    None,
    /// Implicit latent map T, d_p x d_p.
    MapT(DenseMatrix<F>),
    /// Independent reflector U, n x d_p.
    ReflectorU(DenseMatrix<F>),
}

/// Full parameter set. V encodes (d_p x n), W decodes (n x d_p), c and b are
/// the encoder/decoder biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    mode: ReflectionMode,
    pub v: DenseMatrix<F>,
    pub w: DenseMatrix<F>,
    pub c: DenseVector<F>,
    pub b: DenseVector<F>,
    pub extra: ExtraParams<F>,
}

impl<F: Scalar> ModelParams<F> {
    pub fn new(
        mode: ReflectionMode,
        v: DenseMatrix<F>,
        w: DenseMatrix<F>,
        c: DenseVector<F>,
        b: DenseVector<F>,
        extra: ExtraParams<F>,
    ) -> ModelResult<Self> {
        let d_p = v.rows();
        let n = v.cols();
        if w.rows() != n || w.cols() != d_p {
            return Err(ModelError::Shape(format!(
                "W must be {n}x{d_p}, got {}x{}",
                w.rows(),
                w.cols()
            )));
        }
        if c.dim() != d_p || b.dim() != n {
            return Err(ModelError::Shape(format!(
                "bias dims must be c:{d_p}, b:{n}, got c:{}, b:{}",
                c.dim(),
                b.dim()
            )));
        }
        match (&mode, &extra) {
            (ReflectionMode::TiedTranspose | ReflectionMode::Plain, ExtraParams::None) => {}
            (ReflectionMode::ImplicitT, ExtraParams::MapT(t)) => {
                if t.rows() != d_p || t.cols() != d_p {
                    return Err(ModelError::Shape(format!(
                        "T must be {d_p}x{d_p}, got {}x{}",
                        t.rows(),
                        t.cols()
                    )));
                }
            }
            (ReflectionMode::IndependentU, ExtraParams::ReflectorU(u)) => {
                if u.rows() != n || u.cols() != d_p {
                    return Err(ModelError::Shape(format!(
                        "U must be {n}x{d_p}, got {}x{}",
                        u.rows(),
                        u.cols()
                    )));
                }
            }
            _ => {
                return Err(ModelError::Shape(format!(
                    "extra parameter block does not match mode {mode:?}"
                )))
            }
        }
        Ok(ModelParams { mode, v, w, c, b, extra })
    }

    pub fn mode(&self) -> ReflectionMode {
        self.mode
    }

    /// Input vector dimension (users for item-based training).
    pub fn input_dim(&self) -> usize {
        self.v.cols()
    }

    pub fn d_p(&self) -> usize {
        self.v.rows()
    }

    /// Trainable scalar count, by direct enumeration of the allocations.
    pub fn param_count(&self) -> usize {
        let extra = match &self.extra {
            ExtraParams::None => 0,
            ExtraParams::MapT(t) => t.as_slice().len(),
            ExtraParams::ReflectorU(u) => u.as_slice().len(),
        };
        self.v.as_slice().len() + self.w.as_slice().len() + self.c.dim() + self.b.dim() + extra
    }

    /// Zeroed parameter set with matching shapes; gradient and moment
    /// buffers are built through this.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            mode: self.mode,
            v: DenseMatrix::zeros(self.v.rows(), self.v.cols()),
            w: DenseMatrix::zeros(self.w.rows(), self.w.cols()),
            c: DenseVector::zeros(self.c.dim()),
            b: DenseVector::zeros(self.b.dim()),
            extra: match &self.extra {
                ExtraParams::None => ExtraParams::None,
                ExtraParams::MapT(t) => ExtraParams::MapT(DenseMatrix::zeros(t.rows(), t.cols())),
                ExtraParams::ReflectorU(u) => {
                    ExtraParams::ReflectorU(DenseMatrix::zeros(u.rows(), u.cols()))
                }
            },
        }
    }

    /// Flat views over every trainable buffer, in a fixed order
    /// (V, W, extra, c, b). Optimizers walk parameter sets through this.
    pub fn tensors(&self) -> Vec<&[F]> {
        let mut out = vec![self.v.as_slice(), self.w.as_slice()];
        match &self.extra {
            ExtraParams::None => {}
            ExtraParams::MapT(t) => out.push(t.as_slice()),
            ExtraParams::ReflectorU(u) => out.push(u.as_slice()),
        }
        out.push(self.c.as_slice());
        out.push(self.b.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = vec![self.v.as_mut_slice(), self.w.as_mut_slice()];
        match &mut self.extra {
            ExtraParams::None => {}
            ExtraParams::MapT(t) => out.push(t.as_mut_slice()),
            ExtraParams::ReflectorU(u) => out.push(u.as_mut_slice()),
        }
        out.push(self.c.as_mut_slice());
        out.push(self.b.as_mut_slice());
        out
    }

    pub fn map_t(&self) -> Option<&DenseMatrix<F>> {
        match &self.extra {
            ExtraParams::MapT(t) => Some(t),
            _ => None,
        }
    }

    pub fn reflector_u(&self) -> Option<&DenseMatrix<F>> {
        match &self.extra {
            ExtraParams::ReflectorU(u) => Some(u),
            _ => None,
        }
    }
}

/// Trainable scalar count for a mode at given dimensions, closed form.
pub fn param_count_formula(mode: ReflectionMode, n: usize, d_p: usize) -> usize {
    let base = 2 * n * d_p + n + d_p;
    match mode {
        ReflectionMode::TiedTranspose | ReflectionMode::Plain => base,
        ReflectionMode::ImplicitT => base + d_p * d_p,
        ReflectionMode::IndependentU => base + n * d_p,
    }
}

/// Seeded initialization: V, W (and U) uniform in +/- sqrt(6/(n+d_p)),
/// biases zero, T set exactly to V V^T so the implicit map starts at its
/// regularization anchor.
pub fn init_params<F: Scalar>(
    mode: ReflectionMode,
    n: usize,
    d_p: usize,
    seed: u64,
) -> ModelResult<ModelParams<F>> {
    if n == 0 || d_p == 0 {
        return Err(ModelError::InvalidArgument(format!(
            "init needs n >= 1 and d_p >= 1, got n={n}, d_p={d_p}"
        )));
    }
    let bound = (6.0 / (n + d_p) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample_matrix = |rows: usize, cols: usize| {
        let values: Vec<F> = (0..rows * cols)
            .map(|_| F::from_double(dist.sample(&mut rng)))
            .collect();
        DenseMatrix::from_vec(rows, cols, values).expect("sampled size matches")
    };
    let v = sample_matrix(d_p, n);
    let w = sample_matrix(n, d_p);
    let extra = match mode {
        ReflectionMode::TiedTranspose | ReflectionMode::Plain => ExtraParams::None,
        ReflectionMode::ImplicitT => ExtraParams::MapT(v.gram()),
        ReflectionMode::IndependentU => ExtraParams::ReflectorU(sample_matrix(n, d_p)),
    };
    ModelParams::new(mode, v, w, DenseVector::zeros(d_p), DenseVector::zeros(n), extra)
}

/// Imputed input vector for the explicit modes: observed entries keep their
/// values, unobserved ones receive the decayed reflection of the projection.
/// Plain mode returns the densified input unchanged; the implicit mode does
/// its reflection in latent space and has no imputed vector.
pub fn reflect_impute<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    r: &SparseVector<F>,
) -> ModelResult<DenseVector<F>> {
    let mut out = r.to_dense();
    let reflected = match params.mode {
        ReflectionMode::Plain => return Ok(out),
        ReflectionMode::ImplicitT => {
            return Err(ModelError::ModeUnsupported {
                op: "reflect_impute",
                mode: params.mode,
            })
        }
        ReflectionMode::TiedTranspose => {
            let s = params.v.mul_sparse(r)?;
            params.v.tr_mul_vec(&s)?
        }
        ReflectionMode::IndependentU => {
            let u = params.reflector_u().expect("mode checked");
            let s = params.v.mul_sparse(r)?;
            u.mul_vec(&s)?
        }
    };
    let phi = hyper.phi(r.nnz());
    for i in 0..out.dim() {
        if !r.is_observed(i) {
            out[i] = phi * reflected[i];
        }
    }
    Ok(out)
}

/// Encoder activation z = g(pre-activation) for one input vector.
pub fn latent<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    r: &SparseVector<F>,
) -> ModelResult<DenseVector<F>> {
    let mut a = match params.mode {
        ReflectionMode::Plain => params.v.mul_sparse(r)?,
        ReflectionMode::TiedTranspose | ReflectionMode::IndependentU => {
            let imputed = reflect_impute(params, hyper, r)?;
            params.v.mul_vec(&imputed)?
        }
        ReflectionMode::ImplicitT => {
            let t = params.map_t().expect("mode checked");
            let s = params.v.mul_sparse(r)?;
            let mut a = s.clone();
            a.axpy(hyper.phi(r.nnz()), &t.mul_vec(&s)?)?;
            a
        }
    };
    a.axpy(F::one(), &params.c)?;
    Ok(a.sigmoid_map())
}

/// Full reconstruction H for one input vector. With the residual flag the
/// densified raw input is added after the decoder.
pub fn forward<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    r: &SparseVector<F>,
) -> ModelResult<DenseVector<F>> {
    let z = latent(params, hyper, r)?;
    let mut h = params.w.mul_vec(&z)?;
    h.axpy(F::one(), &params.b)?;
    if hyper.residual {
        for &(i, v) in r.entries() {
            h[i] += v;
        }
    }
    Ok(h)
}

/// Neighbor-imputed input vectors, one per vector of the matrix's
/// orientation: each unobserved position becomes the similarity-weighted
/// mean of that position's values among the vector's top-k positive-cosine
/// neighbors that observe it. With `decay_scale` the imputed (not the
/// original) values are additionally scaled by the decay factor of the
/// original vector.
pub fn neighbor_impute<F: Scalar>(
    m: &InteractionMatrix<F>,
    k: usize,
    decay_scale: Option<(DecayKind, F)>,
) -> ModelResult<Vec<SparseVector<F>>> {
    if k == 0 {
        return Err(ModelError::InvalidArgument("k must be >= 1".to_string()));
    }
    let orientation = m.orientation();
    let count = m.vector_count(orientation);
    let dim = m.input_dim(orientation);

    // Pairwise dot products via the opposite axis: co-observed positions
    // contribute to both orders.
    let mut num = vec![F::zero(); count * count];
    for pos in 0..dim {
        let group = match orientation {
            Orientation::ItemBased => m.row_entries(pos),
            Orientation::UserBased => m.col_entries(pos),
        };
        for &(a, av) in group {
            let base = a * count;
            for &(b, bv) in group {
                num[base + b] += av * bv;
            }
        }
    }
    let norms: Vec<F> = (0..count)
        .map(|j| num[j * count + j].sqrt())
        .collect();

    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let own = match orientation {
            Orientation::ItemBased => m.col_entries(j),
            Orientation::UserBased => m.row_entries(j),
        };
        // Top-k by similarity, ties broken by ascending index.
        let mut sims: Vec<(usize, F)> = (0..count)
            .filter(|&o| o != j && norms[o] > F::zero() && norms[j] > F::zero())
            .map(|o| (o, num[j * count + o] / (norms[j] * norms[o])))
            .filter(|&(_, s)| s > F::zero())
            .collect();
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        sims.truncate(k);

        let mut acc = vec![F::zero(); dim];
        let mut den = vec![F::zero(); dim];
        for &(o, sim) in &sims {
            let oe = match orientation {
                Orientation::ItemBased => m.col_entries(o),
                Orientation::UserBased => m.row_entries(o),
            };
            for &(pos, val) in oe {
                acc[pos] += sim * val;
                den[pos] += sim;
            }
        }
        let scale = decay_scale
            .map(|(kind, alpha)| decay(kind, alpha, own.len()))
            .unwrap_or_else(F::one);
        let mut entries: Vec<(usize, F)> = Vec::with_capacity(own.len());
        let mut oi = 0usize;
        for pos in 0..dim {
            if oi < own.len() && own[oi].0 == pos {
                entries.push((pos, own[oi].1));
                oi += 1;
            } else if den[pos] > F::zero() {
                let imputed = scale * acc[pos] / den[pos];
                if imputed != F::zero() {
                    entries.push((pos, imputed));
                }
            }
        }
        out.push(SparseVector::new(dim, entries).expect("constructed sorted"));
    }
    Ok(out)
}
