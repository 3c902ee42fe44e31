//! Batched forward/backward kernels.
//!
//! The reference forward in [`crate::model`] materializes the imputed input
//! vector, which costs O(n * d_p) per column. Training and evaluation use
//! the algebraically identical factored form instead:
//!
//! ```text
//! V (x + o.(phi A V x)) = s + phi (V A) s - phi V_O (A V x)_O,   s = V x
//! ```
//!
//! where A is the reflector (V^T or U) and O the observed index set. V A is
//! d_p x d_p and depends only on the parameters, so it is computed once per
//! batch; the per-column work is O(nnz * d_p + d_p^2). The implicit mode is
//! already in that form. Gradients follow the same factoring: the reflector
//! path accumulates a d_p x d_p outer-product sum (gamma) that is resolved
//! against V (and U) once per batch in `finalize`.
//!
//! Gradients of V are accumulated in transposed layout (n x d_p) so all
//! per-column updates touch contiguous rows; `finalize` transposes back.

use crate::model::{ExtraParams, HyperParams, ModelError, ModelParams, ModelResult, ReflectionMode};
use crate::numerics::{axpy_slice, dot, sigmoid, DenseMatrix, DenseVector, SparseVector};
use crate::scalar::Scalar;

/// One training example: the vector fed to the network and the vector whose
/// observed entries define the masked reconstruction loss. `target` is only
/// set when they differ (the neighbor-imputation baseline trains on imputed
/// inputs against the original observations).
#[derive(Debug, Clone)]
pub struct TrainInstance<F> {
    pub input: SparseVector<F>,
    pub target: Option<SparseVector<F>>,
}

impl<F: Scalar> TrainInstance<F> {
    pub fn plain(input: SparseVector<F>) -> Self {
        TrainInstance { input, target: None }
    }

    pub fn with_target(input: SparseVector<F>, target: SparseVector<F>) -> Self {
        TrainInstance { input, target: Some(target) }
    }

    pub fn target(&self) -> &SparseVector<F> {
        self.target.as_ref().unwrap_or(&self.input)
    }
}

/// Parameter-dependent matrices shared by every column of a batch.
pub struct KernelState<F> {
    /// V transposed (n x d_p): row i is V's column i.
    pub vt: DenseMatrix<F>,
    /// Tied: V V^T. Independent: V U. Implicit/plain: unused.
    pub reflect: Option<DenseMatrix<F>>,
}

impl<F: Scalar> KernelState<F> {
    pub fn prepare(params: &ModelParams<F>) -> ModelResult<Self> {
        let reflect = match params.mode() {
            ReflectionMode::TiedTranspose => Some(params.v.gram()),
            ReflectionMode::IndependentU => {
                Some(params.v.matmul(params.reflector_u().expect("mode checked"))?)
            }
            ReflectionMode::ImplicitT | ReflectionMode::Plain => None,
        };
        Ok(KernelState { vt: params.v.transpose(), reflect })
    }
}

/// Forward pass intermediates for one column, kept for the backward pass.
pub struct ColumnForward<F> {
    pub phi: F,
    /// s = V x.
    pub s: DenseVector<F>,
    /// Encoder activation z = g(a).
    pub z: DenseVector<F>,
    /// Reflector values at the observed indices, (A V x)_O; empty for
    /// implicit and plain modes.
    pub reflect_obs: Vec<F>,
}

pub fn column_forward<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    state: &KernelState<F>,
    x: &SparseVector<F>,
) -> ModelResult<ColumnForward<F>> {
    let d_p = params.d_p();
    if x.dim() != params.input_dim() {
        return Err(ModelError::Shape(format!(
            "input dim {} does not match model dim {}",
            x.dim(),
            params.input_dim()
        )));
    }
    let phi = hyper.phi(x.nnz());

    let mut s = vec![F::zero(); d_p];
    for &(i, v) in x.entries() {
        axpy_slice(&mut s, v, state.vt.row(i));
    }

    let mut a = s.clone();
    let mut reflect_obs = Vec::new();
    match params.mode() {
        ReflectionMode::Plain => {}
        ReflectionMode::ImplicitT => {
            let t = params.map_t().expect("mode checked");
            for (p, ap) in a.iter_mut().enumerate() {
                *ap += phi * dot(t.row(p), &s);
            }
        }
        ReflectionMode::TiedTranspose | ReflectionMode::IndependentU => {
            let g = state.reflect.as_ref().expect("prepared for mode");
            for (p, ap) in a.iter_mut().enumerate() {
                *ap += phi * dot(g.row(p), &s);
            }
            // Subtract the reflection at observed positions: the imputation
            // only fills unobserved slots.
            reflect_obs.reserve(x.nnz());
            for &(i, _) in x.entries() {
                let row = match params.mode() {
                    ReflectionMode::TiedTranspose => state.vt.row(i),
                    ReflectionMode::IndependentU => {
                        params.reflector_u().expect("mode checked").row(i)
                    }
                    _ => unreachable!(),
                };
                let r = dot(row, &s);
                axpy_slice(&mut a, -(phi * r), state.vt.row(i));
                reflect_obs.push(r);
            }
        }
    }
    for (ap, &cp) in a.iter_mut().zip(params.c.as_slice()) {
        *ap += cp;
    }
    let z = DenseVector::from_vec(a.into_iter().map(sigmoid).collect());
    Ok(ColumnForward {
        phi,
        s: DenseVector::from_vec(s),
        z,
        reflect_obs,
    })
}

/// Decoder output at one index: W[i,:] z + b_i, plus the raw input value
/// when the residual flag is on.
pub fn decode_at<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    x: &SparseVector<F>,
    z: &DenseVector<F>,
    i: usize,
) -> F {
    let mut h = dot(params.w.row(i), z.as_slice()) + params.b[i];
    if hyper.residual {
        h += x.get(i);
    }
    h
}

/// Gradient accumulator. V's gradient lives in transposed layout; the
/// reflector-path outer products live in `gamma` until `finalize`.
pub struct GradAccum<F> {
    mode: ReflectionMode,
    pub vt: DenseMatrix<F>,
    pub w: DenseMatrix<F>,
    pub c: DenseVector<F>,
    pub b: DenseVector<F>,
    /// Sum over columns of phi * delta_a (x) s^T; d_p x d_p.
    pub gamma: Option<DenseMatrix<F>>,
    /// Independent mode: per-row contributions to U's gradient.
    pub u: Option<DenseMatrix<F>>,
    /// Sum of squared masked reconstruction errors.
    pub recon: F,
    /// Columns processed.
    pub count: usize,
}

impl<F: Scalar> GradAccum<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        let n = params.input_dim();
        let d_p = params.d_p();
        let mode = params.mode();
        let gamma = match mode {
            ReflectionMode::Plain => None,
            _ => Some(DenseMatrix::zeros(d_p, d_p)),
        };
        let u = match mode {
            ReflectionMode::IndependentU => Some(DenseMatrix::zeros(n, d_p)),
            _ => None,
        };
        GradAccum {
            mode,
            vt: DenseMatrix::zeros(n, d_p),
            w: DenseMatrix::zeros(n, d_p),
            c: DenseVector::zeros(d_p),
            b: DenseVector::zeros(n),
            gamma,
            u,
            recon: F::zero(),
            count: 0,
        }
    }

    pub fn reset(&mut self) {
        for v in self.vt.as_mut_slice() {
            *v = F::zero();
        }
        for v in self.w.as_mut_slice() {
            *v = F::zero();
        }
        for v in self.c.as_mut_slice() {
            *v = F::zero();
        }
        for v in self.b.as_mut_slice() {
            *v = F::zero();
        }
        if let Some(g) = &mut self.gamma {
            for v in g.as_mut_slice() {
                *v = F::zero();
            }
        }
        if let Some(u) = &mut self.u {
            for v in u.as_mut_slice() {
                *v = F::zero();
            }
        }
        self.recon = F::zero();
        self.count = 0;
    }

    /// Adds `other` into `self`. Merge order is the caller's contract.
    pub fn merge(&mut self, other: &GradAccum<F>) {
        debug_assert_eq!(self.mode, other.mode);
        add_into(self.vt.as_mut_slice(), other.vt.as_slice());
        add_into(self.w.as_mut_slice(), other.w.as_slice());
        add_into(self.c.as_mut_slice(), other.c.as_slice());
        add_into(self.b.as_mut_slice(), other.b.as_slice());
        if let (Some(a), Some(b)) = (&mut self.gamma, &other.gamma) {
            add_into(a.as_mut_slice(), b.as_slice());
        }
        if let (Some(a), Some(b)) = (&mut self.u, &other.u) {
            add_into(a.as_mut_slice(), b.as_slice());
        }
        self.recon += other.recon;
        self.count += other.count;
    }
}

fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Forward + backward for one instance, accumulating gradients of the
/// masked squared error over the target's observed entries.
pub fn column_backward<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    state: &KernelState<F>,
    instance: &TrainInstance<F>,
    accum: &mut GradAccum<F>,
) -> ModelResult<()> {
    let x = &instance.input;
    let target = instance.target();
    let fwd = column_forward(params, hyper, state, x)?;
    let d_p = params.d_p();
    let z = fwd.z.as_slice();

    // Output layer: residuals exist only at the target's observed entries.
    let mut delta_z = vec![F::zero(); d_p];
    for &(i, t_i) in target.entries() {
        let h = decode_at(params, hyper, x, &fwd.z, i);
        let e = h - t_i;
        accum.recon += e * e;
        let dh = e + e;
        accum.b[i] += dh;
        axpy_slice(accum.w.row_mut(i), dh, z);
        axpy_slice(&mut delta_z, dh, params.w.row(i));
    }

    // Through the logistic: g' = z (1 - z).
    let mut delta_a = delta_z;
    for (d, &zp) in delta_a.iter_mut().zip(z) {
        *d *= zp * (F::one() - zp);
    }

    add_into(accum.c.as_mut_slice(), &delta_a);

    let phi = fwd.phi;
    let s = fwd.s.as_slice();
    let mut delta_s = delta_a.clone();
    match params.mode() {
        ReflectionMode::Plain => {}
        ReflectionMode::ImplicitT => {
            let t = params.map_t().expect("mode checked");
            // delta_s += phi T^T delta_a; gamma += phi delta_a (x) s.
            let gamma = accum.gamma.as_mut().expect("allocated for mode");
            for (p, &dap) in delta_a.iter().enumerate() {
                axpy_slice(&mut delta_s, phi * dap, t.row(p));
                axpy_slice(gamma.row_mut(p), phi * dap, s);
            }
        }
        ReflectionMode::TiedTranspose | ReflectionMode::IndependentU => {
            let g = state.reflect.as_ref().expect("prepared for mode");
            let gamma = accum.gamma.as_mut().expect("allocated for mode");
            // Reflector product path: delta_s += phi G^T delta_a (G = V V^T
            // is symmetric; V U is not, so go through rows either way).
            for (p, &dap) in delta_a.iter().enumerate() {
                axpy_slice(gamma.row_mut(p), phi * dap, s);
            }
            match params.mode() {
                ReflectionMode::TiedTranspose => {
                    let da = DenseVector::from_vec(delta_a.clone());
                    // G symmetric: G^T delta_a = G delta_a.
                    for (p, gp) in (0..d_p).map(|p| (p, g.row(p))) {
                        delta_s[p] += phi * dot(gp, da.as_slice());
                    }
                }
                ReflectionMode::IndependentU => {
                    for (p, &dap) in delta_a.iter().enumerate() {
                        axpy_slice(&mut delta_s, phi * dap, g.row(p));
                    }
                }
                _ => unreachable!(),
            }
            // Observed-index corrections, mirroring the forward subtraction.
            let u_mat = params.reflector_u();
            for (e, &(i, _)) in x.entries().iter().enumerate() {
                let r = fwd.reflect_obs[e];
                let dt = -(phi * dot(state.vt.row(i), &delta_a));
                // -phi delta_a (x) r^T lands on V's column i.
                axpy_slice(accum.vt.row_mut(i), -(phi * r), &delta_a);
                match params.mode() {
                    ReflectionMode::TiedTranspose => {
                        // t_v = V_O^T s: both factors are V.
                        axpy_slice(accum.vt.row_mut(i), dt, s);
                        axpy_slice(&mut delta_s, dt, state.vt.row(i));
                    }
                    ReflectionMode::IndependentU => {
                        let u_mat = u_mat.expect("mode checked");
                        let gu = accum.u.as_mut().expect("allocated for mode");
                        axpy_slice(gu.row_mut(i), dt, s);
                        axpy_slice(&mut delta_s, dt, u_mat.row(i));
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    // Projection path: s = V x.
    for &(i, v) in x.entries() {
        axpy_slice(accum.vt.row_mut(i), v, &delta_s);
    }
    accum.count += 1;
    Ok(())
}

/// Per-batch loss decomposition; the `reg` column is the reflector penalty
/// (the T anchor in implicit mode, the U norm in independent mode).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<F> {
    pub recon: F,
    pub l2_v: F,
    pub l2_w: F,
    pub reg: F,
    pub total: F,
}

impl<F: Scalar> LossBreakdown<F> {
    pub fn assemble(recon: F, l2_v: F, l2_w: F, reg: F) -> Self {
        LossBreakdown {
            recon,
            l2_v,
            l2_w,
            reg,
            total: recon + l2_v + l2_w + reg,
        }
    }
}

/// Regularization terms at the current parameters, added once per batch.
pub fn regularization_loss<F: Scalar>(params: &ModelParams<F>, hyper: &HyperParams<F>) -> (F, F, F) {
    let l2_v = hyper.lambda1 * params.v.sum_sq();
    let l2_w = hyper.lambda2 * params.w.sum_sq();
    let reg = match &params.extra {
        ExtraParams::None => F::zero(),
        ExtraParams::MapT(t) => {
            let mut d = params.v.gram();
            d.scale(-F::one());
            d.axpy(F::one(), t).expect("t is d_p x d_p");
            hyper.lambda3 * d.sum_sq()
        }
        ExtraParams::ReflectorU(u) => hyper.lambda4 * u.sum_sq(),
    };
    (l2_v, l2_w, reg)
}

/// Resolves an accumulator into canonical-layout gradients of the total
/// batch loss (masked reconstruction plus one set of regularization terms).
pub fn finalize_gradients<F: Scalar>(
    params: &ModelParams<F>,
    hyper: &HyperParams<F>,
    state: &KernelState<F>,
    accum: &GradAccum<F>,
) -> ModelResult<ModelParams<F>> {
    let mut grads = params.zeros_like();
    grads.v = accum.vt.transpose();
    grads.w = accum.w.clone();
    grads.c = accum.c.clone();
    grads.b = accum.b.clone();

    match params.mode() {
        ReflectionMode::Plain => {}
        ReflectionMode::ImplicitT => {
            let gamma = accum.gamma.as_ref().expect("allocated for mode");
            if let ExtraParams::MapT(gt) = &mut grads.extra {
                gt.axpy(F::one(), gamma).expect("shape");
            }
        }
        ReflectionMode::TiedTranspose => {
            // d/dV of sum phi delta_a^T (V V^T) s = (gamma + gamma^T) V.
            let gamma = accum.gamma.as_ref().expect("allocated for mode");
            let mut sym = gamma.clone();
            sym.axpy(F::one(), &gamma.transpose()).expect("square");
            grads.v.axpy(F::one(), &sym.matmul(&params.v)?).expect("shape");
        }
        ReflectionMode::IndependentU => {
            let gamma = accum.gamma.as_ref().expect("allocated for mode");
            let u = params.reflector_u().expect("mode checked");
            grads.v
                .axpy(F::one(), &gamma.matmul(&u.transpose())?)
                .expect("shape");
            if let ExtraParams::ReflectorU(gu) = &mut grads.extra {
                gu.axpy(F::one(), accum.u.as_ref().expect("allocated"))
                    .expect("shape");
                // Product path: d/dU of delta_a^T (V U) s = V^T gamma.
                gu.axpy(F::one(), &state.vt.matmul(gamma)?).expect("shape");
            }
        }
    }

    // Regularization gradients, once per batch.
    let two = F::one() + F::one();
    grads.v.axpy(two * hyper.lambda1, &params.v).expect("shape");
    grads.w.axpy(two * hyper.lambda2, &params.w).expect("shape");
    match (&params.extra, &mut grads.extra) {
        (ExtraParams::MapT(t), ExtraParams::MapT(gt)) => {
            if hyper.lambda3 != F::zero() {
                // D = T - V V^T: dL/dT = 2 l3 D, dL/dV = -2 l3 (D + D^T) V.
                let mut d = params.v.gram();
                d.scale(-F::one());
                d.axpy(F::one(), t).expect("shape");
                gt.axpy(two * hyper.lambda3, &d).expect("shape");
                let mut dsym = d.transpose();
                dsym.axpy(F::one(), &d).expect("square");
                grads
                    .v
                    .axpy(-(two * hyper.lambda3), &dsym.matmul(&params.v)?)
                    .expect("shape");
            }
        }
        (ExtraParams::ReflectorU(u), ExtraParams::ReflectorU(gu)) => {
            gu.axpy(two * hyper.lambda4, u).expect("shape");
        }
        _ => {}
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, init_params, DecayKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, dim: usize) -> SparseVector<f64> {
        let mut entries = Vec::new();
        for i in 0..dim {
            if rng.gen_bool(0.6) {
                entries.push((i, rng.gen_range(0.5..5.0)));
            }
        }
        SparseVector::new(dim, entries).unwrap()
    }

    #[test]
    fn kernel_forward_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..120u64 {
            let n = rng.gen_range(2..12);
            let d_p = rng.gen_range(1..6);
            let mode = match trial % 4 {
                0 => ReflectionMode::TiedTranspose,
                1 => ReflectionMode::IndependentU,
                2 => ReflectionMode::ImplicitT,
                _ => ReflectionMode::Plain,
            };
            let params = init_params::<f64>(mode, n, d_p, trial).unwrap();
            let hyper = HyperParams {
                alpha: rng.gen_range(0.1..5.0),
                decay: match trial % 3 {
                    0 => DecayKind::Phi1,
                    1 => DecayKind::Phi2,
                    _ => DecayKind::Phi3,
                },
                residual: trial % 2 == 0,
                ..HyperParams::default()
            };
            let x = random_sparse(&mut rng, n);
            let state = KernelState::prepare(&params).unwrap();
            let fwd = column_forward(&params, &hyper, &state, &x).unwrap();
            let reference = forward(&params, &hyper, &x).unwrap();
            for i in 0..n {
                let fast = decode_at(&params, &hyper, &x, &fwd.z, i);
                assert!(
                    (fast - reference[i]).abs() < 1e-10,
                    "mode {mode:?} trial {trial} index {i}: {fast} vs {}",
                    reference[i]
                );
            }
        }
    }

    #[test]
    fn accumulator_merge_is_additive() {
        let params = init_params::<f64>(ReflectionMode::ImplicitT, 6, 3, 1).unwrap();
        let hyper = HyperParams { residual: false, ..HyperParams::default() };
        let state = KernelState::prepare(&params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<TrainInstance<f64>> = (0..4)
            .map(|_| TrainInstance::plain(random_sparse(&mut rng, 6)))
            .collect();

        let mut whole = GradAccum::new(&params);
        for inst in &xs {
            column_backward(&params, &hyper, &state, inst, &mut whole).unwrap();
        }
        let mut first = GradAccum::new(&params);
        let mut second = GradAccum::new(&params);
        for inst in &xs[..2] {
            column_backward(&params, &hyper, &state, inst, &mut first).unwrap();
        }
        for inst in &xs[2..] {
            column_backward(&params, &hyper, &state, inst, &mut second).unwrap();
        }
        first.merge(&second);
        assert_eq!(first.count, whole.count);
        for (a, b) in first.vt.as_slice().iter().zip(whole.vt.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((first.recon - whole.recon).abs() < 1e-12);
    }

    #[test]
    fn masked_loss_ignores_unobserved_positions() {
        // Zero decoder, biases forced: H = b everywhere. Only the observed
        // entry contributes to the loss.
        let params = crate::model::ModelParams::new(
            ReflectionMode::Plain,
            DenseMatrix::zeros(1, 2),
            DenseMatrix::zeros(2, 1),
            DenseVector::zeros(1),
            DenseVector::from_vec(vec![3.0, 7.0]),
            ExtraParams::None,
        )
        .unwrap();
        let hyper = HyperParams { residual: false, ..HyperParams::default() };
        let state = KernelState::prepare(&params).unwrap();
        let x = SparseVector::new(2, vec![(0, 4.0)]).unwrap();
        let mut accum = GradAccum::new(&params);
        column_backward(&params, &hyper, &state, &TrainInstance::plain(x), &mut accum).unwrap();
        assert_eq!(accum.recon, 1.0); // (3 - 4)^2
        assert_eq!(accum.b[1], 0.0); // position 1 is unobserved: no gradient
        assert_eq!(accum.b[0], -2.0);
    }
}
