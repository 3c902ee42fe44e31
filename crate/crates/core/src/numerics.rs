//! Dense/sparse linear algebra kernels.
//!
//! Everything here is deliberately plain: row-major dense matrices, sorted
//! coordinate sparse vectors, and loops whose accumulation order is part of
//! the contract (ascending index), so results are reproducible bit for bit
//! across runs and across the sparse/dense code paths.

use std::ops::{Index, IndexMut};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("{op}: dimension mismatch, expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
}

pub type NumericsResult<T> = Result<T, NumericsError>;

fn check_dim(op: &'static str, expected: usize, got: usize) -> NumericsResult<()> {
    if expected != got {
        return Err(NumericsError::DimensionMismatch { op, expected, got });
    }
    Ok(())
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<F> {
    rows: usize,
    cols: usize,
    values: Vec<F>,
}

impl<F: Scalar> DenseMatrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<F>) -> NumericsResult<Self> {
        check_dim("DenseMatrix::from_vec", rows * cols, values.len())?;
        Ok(DenseMatrix { rows, cols, values })
    }

    /// Test/helper constructor from row slices.
    pub fn from_rows(rows: &[&[F]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut values = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            values.extend_from_slice(row);
        }
        DenseMatrix { rows: r, cols: c, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.values
    }

    /// y = A x, accumulated over ascending column index.
    pub fn mul_vec(&self, x: &DenseVector<F>) -> NumericsResult<DenseVector<F>> {
        check_dim("mat_vec", self.cols, x.dim())?;
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            out.push(dot(self.row(i), x.as_slice()));
        }
        Ok(DenseVector::from_vec(out))
    }

    /// y = A x for sparse x. Skipped entries of x are exact zeros, so this
    /// agrees with `mul_vec` on the densified vector.
    pub fn mul_sparse(&self, x: &SparseVector<F>) -> NumericsResult<DenseVector<F>> {
        check_dim("mat_vec", self.cols, x.dim())?;
        let mut out = vec![F::zero(); self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = F::zero();
            for &(k, v) in x.entries() {
                acc += row[k] * v;
            }
            out[i] = acc;
        }
        Ok(DenseVector::from_vec(out))
    }

    /// y = A^T x, each output accumulated over ascending row index. Matches
    /// `self.transpose().mul_vec(x)` exactly, without materializing A^T.
    pub fn tr_mul_vec(&self, x: &DenseVector<F>) -> NumericsResult<DenseVector<F>> {
        check_dim("transposed_mat_vec", self.rows, x.dim())?;
        let mut out = vec![F::zero(); self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            let row = self.row(i);
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * xi;
            }
        }
        Ok(DenseVector::from_vec(out))
    }

    /// y = A^T x for sparse x.
    pub fn tr_mul_sparse(&self, x: &SparseVector<F>) -> NumericsResult<DenseVector<F>> {
        check_dim("transposed_mat_vec", self.rows, x.dim())?;
        let mut out = vec![F::zero(); self.cols];
        for &(i, xi) in x.entries() {
            let row = self.row(i);
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * xi;
            }
        }
        Ok(DenseVector::from_vec(out))
    }

    /// C = A B.
    pub fn matmul(&self, other: &DenseMatrix<F>) -> NumericsResult<DenseMatrix<F>> {
        check_dim("matmul", self.cols, other.rows)?;
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = out.row_mut(i);
            for (k, &aik) in arow.iter().enumerate() {
                let brow = other.row(k);
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aik * b;
                }
            }
        }
        Ok(out)
    }

    /// G = A A^T, symmetric by construction.
    pub fn gram(&self) -> DenseMatrix<F> {
        let n = self.rows;
        let mut out = DenseMatrix::zeros(n, n);
        for p in 0..n {
            for q in 0..=p {
                let d = dot(self.row(p), self.row(q));
                out[(p, q)] = d;
                out[(q, p)] = d;
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix<F> {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            for (j, &v) in row.iter().enumerate() {
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> F {
        self.sum_sq().sqrt()
    }

    /// Sum of squared entries, ascending storage order.
    pub fn sum_sq(&self) -> F {
        let mut acc = F::zero();
        for &v in &self.values {
            acc += v * v;
        }
        acc
    }

    pub fn scale(&mut self, a: F) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    /// self += a * other.
    pub fn axpy(&mut self, a: F, other: &DenseMatrix<F>) -> NumericsResult<()> {
        check_dim("DenseMatrix::axpy", self.values.len(), other.values.len())?;
        for (s, &o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
        Ok(())
    }
}

impl<F: Scalar> Index<(usize, usize)> for DenseMatrix<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.values[i * self.cols + j]
    }
}

impl<F: Scalar> IndexMut<(usize, usize)> for DenseMatrix<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.values[i * self.cols + j]
    }
}

/// Dense column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector<F> {
    values: Vec<F>,
}

impl<F: Scalar> DenseVector<F> {
    pub fn zeros(dim: usize) -> Self {
        DenseVector {
            values: vec![F::zero(); dim],
        }
    }

    pub fn from_vec(values: Vec<F>) -> Self {
        DenseVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.values
    }

    pub fn dot(&self, other: &DenseVector<F>) -> NumericsResult<F> {
        check_dim("dot", self.dim(), other.dim())?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn norm2(&self) -> F {
        self.sum_sq().sqrt()
    }

    pub fn sum_sq(&self) -> F {
        let mut acc = F::zero();
        for &v in &self.values {
            acc += v * v;
        }
        acc
    }

    /// self += a * other.
    pub fn axpy(&mut self, a: F, other: &DenseVector<F>) -> NumericsResult<()> {
        check_dim("DenseVector::axpy", self.dim(), other.dim())?;
        for (s, &o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: F) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    /// Elementwise logistic map.
    pub fn sigmoid_map(&self) -> DenseVector<F> {
        DenseVector::from_vec(self.values.iter().map(|&v| sigmoid(v)).collect())
    }
}

impl<F: Scalar> Index<usize> for DenseVector<F> {
    type Output = F;
    fn index(&self, i: usize) -> &F {
        &self.values[i]
    }
}

impl<F: Scalar> IndexMut<usize> for DenseVector<F> {
    fn index_mut(&mut self, i: usize) -> &mut F {
        &mut self.values[i]
    }
}

/// Sparse vector in sorted coordinate form. Indices strictly ascending,
/// stored values non-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<F> {
    dim: usize,
    entries: Vec<(usize, F)>,
}

impl<F: Scalar> SparseVector<F> {
    pub fn new(dim: usize, entries: Vec<(usize, F)>) -> NumericsResult<Self> {
        let mut prev: Option<usize> = None;
        for &(i, v) in &entries {
            if i >= dim {
                return Err(NumericsError::InvalidArgument {
                    op: "SparseVector::new",
                    msg: format!("index {i} out of range for dim {dim}"),
                });
            }
            if let Some(p) = prev {
                if i <= p {
                    return Err(NumericsError::InvalidArgument {
                        op: "SparseVector::new",
                        msg: format!("indices not strictly ascending at {i}"),
                    });
                }
            }
            if v == F::zero() {
                return Err(NumericsError::InvalidArgument {
                    op: "SparseVector::new",
                    msg: format!("stored zero at index {i}"),
                });
            }
            prev = Some(i);
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector { dim, entries: Vec::new() }
    }

    pub fn from_dense(x: &DenseVector<F>) -> Self {
        let entries = x
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != F::zero())
            .map(|(i, &v)| (i, v))
            .collect();
        SparseVector { dim: x.dim(), entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Observed-entry count (the L0 norm the decay factors consume).
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, F)] {
        &self.entries
    }

    pub fn to_dense(&self) -> DenseVector<F> {
        let mut out = DenseVector::zeros(self.dim);
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// Value at index (zero when unobserved). Binary search over entries.
    pub fn get(&self, i: usize) -> F {
        match self.entries.binary_search_by_key(&i, |e| e.0) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => F::zero(),
        }
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.entries.binary_search_by_key(&i, |e| e.0).is_ok()
    }
}

/// In-order dot product of equal-length slices.
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// y += a * x over equal-length slices.
pub fn axpy_slice<F: Scalar>(y: &mut [F], a: F, x: &[F]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// u v^T.
pub fn outer_product<F: Scalar>(u: &DenseVector<F>, v: &DenseVector<F>) -> DenseMatrix<F> {
    let mut out = DenseMatrix::zeros(u.dim(), v.dim());
    for i in 0..u.dim() {
        let ui = u[i];
        let row = out.row_mut(i);
        for (o, &vj) in row.iter_mut().zip(v.as_slice()) {
            *o = ui * vj;
        }
    }
    out
}

/// Seeded random orthogonal matrix: modified Gram-Schmidt over a standard
/// normal matrix, with a second orthogonalization pass. The triangular
/// factor's diagonal is a column norm, hence non-negative, which makes the
/// output unique for a given seed.
pub fn random_orthogonal<F: Scalar>(d: usize, seed: u64) -> NumericsResult<DenseMatrix<F>> {
    if d == 0 {
        return Err(NumericsError::InvalidArgument {
            op: "random_orthogonal",
            msg: "dimension must be positive".to_string(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Rejection loop: a rank-deficient normal sample has probability zero,
    // but the guard keeps the routine total.
    'attempt: loop {
        let mut cols: Vec<Vec<F>> = (0..d)
            .map(|_| {
                (0..d)
                    .map(|_| F::from_double(rng.sample::<f64, _>(StandardNormal)))
                    .collect()
            })
            .collect();
        for j in 0..d {
            for _pass in 0..2 {
                for i in 0..j {
                    let (head, tail) = cols.split_at_mut(j);
                    let proj = dot(&head[i], &tail[0]);
                    axpy_slice(&mut tail[0], -proj, &head[i]);
                }
            }
            let norm = dot(&cols[j], &cols[j]).sqrt();
            if norm.to_double() < 1e-12 {
                continue 'attempt;
            }
            let inv = F::one() / norm;
            for v in &mut cols[j] {
                *v *= inv;
            }
        }
        let mut out = DenseMatrix::zeros(d, d);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        return Ok(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2() -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]])
    }

    #[test]
    fn mat_vec_example() {
        let y = m2().mul_vec(&DenseVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn transposed_mat_vec_example() {
        let y = m2().tr_mul_vec(&DenseVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn transposed_mat_vec_matches_materialized_transpose() {
        let a = DenseMatrix::from_rows(&[&[1.0, -2.0, 0.5], &[0.25, 4.0, -1.0]]);
        let x = DenseVector::from_vec(vec![0.3, -0.7]);
        let fast = a.tr_mul_vec(&x).unwrap();
        let slow = a.transpose().mul_vec(&x).unwrap();
        assert_eq!(fast.as_slice(), slow.as_slice());
    }

    #[test]
    fn outer_example() {
        let m = outer_product(
            &DenseVector::from_vec(vec![1.0, 2.0]),
            &DenseVector::from_vec(vec![3.0, 4.0]),
        );
        assert_eq!(m.row(0), &[3.0, 4.0]);
        assert_eq!(m.row(1), &[6.0, 8.0]);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        let g4: f64 = sigmoid(4.0);
        assert!((g4 - 0.9820137900379085).abs() < 1e-15);
        assert!((sigmoid(-4.0) - (1.0 - g4)).abs() < 1e-15);
        assert!((sigmoid(30.0_f64) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frobenius_examples() {
        let a = DenseMatrix::<f64>::from_rows(&[&[1.0, 1.0]]);
        assert!((a.frobenius_norm() - 2.0f64.sqrt()).abs() < 1e-15);
        let b = DenseMatrix::<f64>::from_rows(&[&[3.0, 4.0]]);
        assert_eq!(b.frobenius_norm(), 5.0);
    }

    #[test]
    fn sparse_dense_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let rows = rng.gen_range(1..6);
            let cols = rng.gen_range(1..8);
            let a: DenseMatrix<f64> = DenseMatrix::from_vec(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let mut dense = DenseVector::zeros(cols);
            let mut entries = Vec::new();
            for k in 0..cols {
                if rng.gen_bool(0.5) {
                    let v = rng.gen_range(0.5..3.0);
                    dense[k] = v;
                    entries.push((k, v));
                }
            }
            let sp = SparseVector::new(cols, entries).unwrap();
            let ys = a.mul_sparse(&sp).unwrap();
            let yd = a.mul_vec(&dense).unwrap();
            assert_eq!(ys.as_slice(), yd.as_slice());
            let ts = a.tr_mul_sparse(&SparseVector::from_dense(&a.mul_vec(&dense).unwrap())).unwrap();
            let td = a.tr_mul_vec(&a.mul_vec(&dense).unwrap()).unwrap();
            for (x, y) in ts.as_slice().iter().zip(td.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparse_validation() {
        assert!(SparseVector::new(3, vec![(0, 1.0), (2, 2.0)]).is_ok());
        assert!(SparseVector::new(3, vec![(2, 1.0), (0, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(1, 0.0)]).is_err());
    }

    #[test]
    fn dim_mismatch_reported() {
        let err = m2().mul_vec(&DenseVector::from_vec(vec![1.0])).unwrap_err();
        assert_eq!(
            err,
            NumericsError::DimensionMismatch { op: "mat_vec", expected: 2, got: 1 }
        );
    }

    #[test]
    fn matmul_and_gram() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.row(0), &[2.0, 1.0]);
        assert_eq!(c.row(1), &[4.0, 3.0]);
        let g = a.gram();
        assert_eq!(g[(0, 0)], 5.0);
        assert_eq!(g[(0, 1)], 11.0);
        assert_eq!(g[(1, 0)], 11.0);
        assert_eq!(g[(1, 1)], 25.0);
    }

    #[test]
    fn random_orthogonal_is_orthogonal_and_seeded() {
        for d in [1usize, 2, 3, 8, 40] {
            let q: DenseMatrix<f64> = random_orthogonal(d, 42).unwrap();
            let qtq = q.transpose().matmul(&q).unwrap();
            let mut dev = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let target = if i == j { 1.0 } else { 0.0 };
                    dev += (qtq[(i, j)] - target).powi(2);
                }
            }
            assert!(dev.sqrt() <= 1e-12, "d={d} dev={}", dev.sqrt());
        }
        let a: DenseMatrix<f64> = random_orthogonal(5, 9).unwrap();
        let b: DenseMatrix<f64> = random_orthogonal(5, 9).unwrap();
        let c: DenseMatrix<f64> = random_orthogonal(5, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn random_orthogonal_scalar_case() {
        let q: DenseMatrix<f64> = random_orthogonal(1, 3).unwrap();
        assert!(q[(0, 0)] == 1.0 || q[(0, 0)] == -1.0);
    }
}
