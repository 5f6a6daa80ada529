//! The separable quadratic testbed and the two-batch toy problem.
//!
//! Each of the `N` functions acts on a single coordinate `j_i` of `x`:
//!
//! ```text
//! f_i(x) = a_i (x[j_i] - b_i)^2 + c_i,      F(x) = sum_i f_i(x)
//! ```
//!
//! Minibatch losses and gradients use the mean over the batch; [`QuadraticProblem::full_loss`]
//! uses the sum.

use alloc::vec::Vec;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::invalid;
use crate::{Error, Result};

/// Sampling range of the curvature `a` and the offset `c`.
pub const CURVATURE_RANGE: (f64, f64) = (0.5, 1.0);
/// Sampling range of the centers `b`.
pub const CENTER_RANGE: (f64, f64) = (-1.0, 1.0);
/// Initial value of every coordinate in the reference experiments.
pub const REFERENCE_INIT: f64 = 3.0;

/// One quadratic term `a (x - b)^2 + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coeffs {
    /// Curvature, strictly positive.
    pub a: f64,
    /// Center.
    pub b: f64,
    /// Constant offset.
    pub c: f64,
}

/// A set of sample indices processed together.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Batch {
    /// Function indices in `0..N`. Repeats only occur under sampling with
    /// replacement.
    pub indices: Vec<usize>,
}

impl Batch {
    /// Batch over the given indices.
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    /// Number of members.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    /// True when the batch has no members.
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

impl From<Vec<usize>> for Batch {
    fn from(indices: Vec<usize>) -> Self {
        Self { indices }
    }
}

/// A gradient with at most one nonzero per batch member, sorted by coordinate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseGrad {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseGrad {
    /// Dense length.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(coordinate, value)` pairs with distinct coordinates, ascending.
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Number of stored coordinates.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.entries.iter().map(|(_, g)| g * g).sum())
    }

    /// Inner product with a dense vector.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, g)| g * dense[j]).sum()
    }

    /// Inner product with another sparse gradient.
    pub fn dot(&self, other: &SparseGrad) -> f64 {
        let (mut i, mut k, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && k < other.entries.len() {
            let (ja, ga) = self.entries[i];
            let (jb, gb) = other.entries[k];
            match ja.cmp(&jb) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => k += 1,
                core::cmp::Ordering::Equal => {
                    acc += ga * gb;
                    i += 1;
                    k += 1;
                }
            }
        }
        acc
    }

    /// Write the stored entries into a zeroed dense buffer.
    pub fn scatter_into(&self, dense: &mut [f64]) {
        for &(j, g) in &self.entries {
            dense[j] = g;
        }
    }

    /// Reset the coordinates written by [`SparseGrad::scatter_into`].
    pub fn clear_from(&self, dense: &mut [f64]) {
        for &(j, _) in &self.entries {
            dense[j] = 0.0;
        }
    }

    /// Dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim];
        self.scatter_into(&mut out);
        out
    }
}

/// The separable quadratic family.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    coeffs: Vec<Coeffs>,
    dim_index: Vec<usize>,
    dim: usize,
    seed: u64,
}

impl QuadraticProblem {
    /// Draw a problem from `seed`.
    ///
    /// Draw order from one ChaCha8 stream: the `N x 3` table row-major from
    /// `U(0.5, 1)`, then every center redrawn from `U(-1, 1)`, then every
    /// coordinate assignment from `{0, .., dim - 1}`.
    pub fn generate(seed: u64, num_functions: usize, dim: usize) -> Result<Self> {
        if num_functions == 0 {
            return Err(invalid("num_functions", "must be at least 1"));
        }
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = Uniform::new(CURVATURE_RANGE.0, CURVATURE_RANGE.1);
        let mut coeffs: Vec<Coeffs> = (0..num_functions)
            .map(|_| Coeffs {
                a: table.sample(&mut rng),
                b: table.sample(&mut rng),
                c: table.sample(&mut rng),
            })
            .collect();
        let centers = Uniform::new(CENTER_RANGE.0, CENTER_RANGE.1);
        for c in &mut coeffs {
            c.b = centers.sample(&mut rng);
        }
        let coord = Uniform::new(0, dim);
        let dim_index = (0..num_functions).map(|_| coord.sample(&mut rng)).collect();
        Ok(Self {
            coeffs,
            dim_index,
            dim,
            seed,
        })
    }

    /// Build a problem from explicit tables (used by tests and file import).
    pub fn from_parts(coeffs: Vec<Coeffs>, dim_index: Vec<usize>, dim: usize, seed: u64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("num_functions", "must be at least 1"));
        }
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if coeffs.len() != dim_index.len() {
            return Err(Error::DimensionMismatch {
                expected: coeffs.len(),
                got: dim_index.len(),
            });
        }
        if coeffs
            .iter()
            .any(|c| !(c.a > 0.0) || !c.a.is_finite() || !c.b.is_finite() || !c.c.is_finite())
        {
            return Err(invalid("coeffs", "curvature must be positive and all entries finite"));
        }
        if let Some(&j) = dim_index.iter().find(|&&j| j >= dim) {
            return Err(Error::IndexOutOfRange { index: j, len: dim });
        }
        Ok(Self {
            coeffs,
            dim_index,
            dim,
            seed,
        })
    }

    /// Number of functions `N`.
    pub fn num_functions(&self) -> usize {
        self.coeffs.len()
    }

    /// Length of `x`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Seed the problem was generated from (0 for hand-built problems unless given).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Coefficient table.
    pub fn coeffs(&self) -> &[Coeffs] {
        &self.coeffs
    }

    /// Coordinate each function acts on.
    pub fn dim_index(&self) -> &[usize] {
        &self.dim_index
    }

    /// The reference starting point `3 * ones(dim)`.
    pub fn reference_init(&self) -> Vec<f64> {
        alloc::vec![REFERENCE_INIT; self.dim]
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = self.num_functions();
        if let Some(&i) = batch.indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        Ok(())
    }

    /// `f_i(x)`.
    #[inline]
    pub fn value(&self, i: usize, x: &[f64]) -> f64 {
        let c = self.coeffs[i];
        let d = x[self.dim_index[i]] - c.b;
        c.a * d * d + c.c
    }

    /// Mean of `f_i(x)` over the batch.
    pub fn batch_loss(&self, batch: &Batch, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        self.check_batch(batch)?;
        let sum: f64 = batch.indices.iter().map(|&i| self.value(i, x)).sum();
        Ok(sum / batch.len() as f64)
    }

    /// Mean of `grad f_i(x)` over the batch. Functions on a shared coordinate
    /// accumulate into one entry.
    pub fn batch_grad(&self, batch: &Batch, x: &[f64]) -> Result<SparseGrad> {
        self.check_x(x)?;
        self.check_batch(batch)?;
        let scale = 1.0 / batch.len() as f64;
        let mut entries: Vec<(usize, f64)> = batch
            .indices
            .iter()
            .map(|&i| {
                let c = self.coeffs[i];
                let j = self.dim_index[i];
                (j, 2.0 * c.a * (x[j] - c.b))
            })
            .collect();
        entries.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (j, g) in entries {
            match merged.last_mut() {
                Some((last, acc)) if *last == j => *acc += g,
                _ => merged.push((j, g)),
            }
        }
        for e in &mut merged {
            e.1 *= scale;
        }
        Ok(SparseGrad {
            dim: self.dim,
            entries: merged,
        })
    }

    /// `F(x)`, the sum over all functions.
    pub fn full_loss(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        Ok((0..self.num_functions()).map(|i| self.value(i, x)).sum())
    }

    /// Closed-form minimizer and minimum of `F`.
    ///
    /// Per coordinate, the minimizer is the curvature-weighted mean of the
    /// centers assigned to it; unused coordinates are left at 0.
    pub fn minimum(&self) -> (Vec<f64>, f64) {
        let mut wsum = alloc::vec![0.0; self.dim];
        let mut wb = alloc::vec![0.0; self.dim];
        for (c, &j) in self.coeffs.iter().zip(&self.dim_index) {
            wsum[j] += c.a;
            wb[j] += c.a * c.b;
        }
        let x: Vec<f64> = wsum
            .iter()
            .zip(&wb)
            .map(|(&w, &s)| if w > 0.0 { s / w } else { 0.0 })
            .collect();
        let value = (0..self.num_functions()).map(|i| self.value(i, &x)).sum();
        (x, value)
    }
}

/// Loss of the two toy batches, `g(theta) = theta` and `h(theta) = 1 - theta`.
pub fn toy_losses(theta: f64) -> (f64, f64) {
    (theta, 1.0 - theta)
}

/// The two-batch toy problem whose total loss is constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ToyProblem;

impl ToyProblem {
    /// Loss of batch 0 (`g`) or batch 1 (`h`).
    pub fn batch_loss(&self, batch: usize, theta: f64) -> f64 {
        let (g, h) = toy_losses(theta);
        if batch == 0 {
            g
        } else {
            h
        }
    }

    /// Gradient of batch 0 (`+1`) or batch 1 (`-1`).
    pub fn batch_grad(&self, batch: usize) -> f64 {
        if batch == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn single(a: f64, b: f64, c: f64) -> QuadraticProblem {
        QuadraticProblem::from_parts(vec![Coeffs { a, b, c }], vec![0], 1, 0).unwrap()
    }

    #[test]
    fn unit_parabola() {
        let p = single(1.0, 0.0, 0.0);
        let b = Batch::new(vec![0]);
        assert_eq!(p.batch_loss(&b, &[2.0]).unwrap(), 4.0);
        assert_eq!(p.batch_grad(&b, &[2.0]).unwrap().entries(), &[(0, 4.0)]);
    }

    #[test]
    fn hand_evaluated_term() {
        let p = single(0.5, 1.0, 0.2);
        let b = Batch::new(vec![0]);
        assert!((p.batch_loss(&b, &[3.0]).unwrap() - 2.2).abs() < 1e-15);
        assert_eq!(p.batch_grad(&b, &[3.0]).unwrap().entries(), &[(0, 2.0)]);
        assert_eq!(p.batch_grad(&b, &[1.0]).unwrap().entries(), &[(0, 0.0)]);
    }

    #[test]
    fn duplicate_members_average_to_singleton() {
        let p = QuadraticProblem::from_parts(
            vec![Coeffs { a: 0.7, b: 0.3, c: 0.1 }; 2],
            vec![0, 0],
            1,
            0,
        )
        .unwrap();
        let x = [1.7];
        let one = p.batch_loss(&Batch::new(vec![0]), &x).unwrap();
        let two = p.batch_loss(&Batch::new(vec![0, 1]), &x).unwrap();
        assert!((one - two).abs() < 1e-15);
        let g1 = p.batch_grad(&Batch::new(vec![0]), &x).unwrap();
        let g2 = p.batch_grad(&Batch::new(vec![0, 1]), &x).unwrap();
        assert_eq!(g2.nnz(), 1);
        assert!((g1.entries()[0].1 - g2.entries()[0].1).abs() < 1e-15);
    }

    #[test]
    fn closed_form_minimum() {
        let p = QuadraticProblem::from_parts(
            vec![Coeffs { a: 1.0, b: 0.0, c: 0.0 }, Coeffs { a: 1.0, b: 2.0, c: 0.0 }],
            vec![0, 0],
            1,
            0,
        )
        .unwrap();
        let (x, f) = p.minimum();
        assert_eq!(x, vec![1.0]);
        assert_eq!(f, 2.0);
        assert_eq!(single(1.0, 0.0, 0.0).full_loss(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn one_function_minimum_is_its_center() {
        let p = QuadraticProblem::generate(11, 1, 1).unwrap();
        let (x, f) = p.minimum();
        assert!((x[0] - p.coeffs()[0].b).abs() < 1e-15);
        assert!((f - p.coeffs()[0].c).abs() < 1e-15);
    }

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let p = QuadraticProblem::generate(42, 500, 300).unwrap();
        assert_eq!(p, QuadraticProblem::generate(42, 500, 300).unwrap());
        assert_ne!(p, QuadraticProblem::generate(43, 500, 300).unwrap());
        for (c, &j) in p.coeffs().iter().zip(p.dim_index()) {
            assert!((0.5..1.0).contains(&c.a));
            assert!((0.5..1.0).contains(&c.c));
            assert!((-1.0..1.0).contains(&c.b));
            assert!(j < 300);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = single(1.0, 0.0, 0.0);
        assert_eq!(p.batch_loss(&Batch::default(), &[0.0]), Err(Error::EmptyBatch));
        assert_eq!(p.batch_grad(&Batch::default(), &[0.0]), Err(Error::EmptyBatch));
        assert!(matches!(
            p.batch_loss(&Batch::new(vec![1]), &[0.0]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(p.full_loss(&[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(QuadraticProblem::generate(0, 0, 1).is_err());
        assert!(QuadraticProblem::from_parts(vec![Coeffs { a: 0.0, b: 0.0, c: 0.0 }], vec![0], 1, 0).is_err());
        assert!(QuadraticProblem::from_parts(vec![Coeffs { a: 1.0, b: 0.0, c: 0.0 }], vec![3], 1, 0).is_err());
    }

    #[test]
    fn toy_examples() {
        assert_eq!(toy_losses(0.0), (0.0, 1.0));
        assert_eq!(toy_losses(0.5), (0.5, 0.5));
        assert_eq!(toy_losses(1.0), (1.0, 0.0));
        assert_eq!(ToyProblem.batch_grad(0) + ToyProblem.batch_grad(1), 0.0);
    }

    #[test]
    fn sparse_dot_matches_dense() {
        let p = QuadraticProblem::generate(5, 40, 10).unwrap();
        let x: Vec<f64> = (0..10).map(|k| k as f64 * 0.3 - 1.0).collect();
        let a = p.batch_grad(&Batch::new(vec![0, 3, 7, 9]), &x).unwrap();
        let b = p.batch_grad(&Batch::new(vec![3, 5, 11, 30]), &x).unwrap();
        let dense: f64 = a.to_dense().iter().zip(b.to_dense()).map(|(u, v)| u * v).sum();
        assert!((a.dot(&b) - dense).abs() < 1e-12);
        assert!((a.dot_dense(&b.to_dense()) - dense).abs() < 1e-12);
    }

    fn problem_batch_x() -> impl Strategy<Value = (u64, Vec<usize>, Vec<f64>)> {
        (any::<u64>(), prop::collection::vec(0usize..30, 1..8), prop::collection::vec(-4.0f64..4.0, 6))
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences((seed, idx, x) in problem_batch_x()) {
            let p = QuadraticProblem::generate(seed, 30, 6).unwrap();
            let batch = Batch::new(idx);
            let g = p.batch_grad(&batch, &x).unwrap().to_dense();
            let h = 1e-5;
            for k in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (p.batch_loss(&batch, &xp).unwrap() - p.batch_loss(&batch, &xm).unwrap()) / (2.0 * h);
                let scale = g[k].abs().max(1.0);
                prop_assert!((fd - g[k]).abs() <= 1e-6 * scale, "coord {}: fd {} vs {}", k, fd, g[k]);
            }
        }

        #[test]
        fn gradient_is_sparse((seed, idx, x) in problem_batch_x()) {
            let p = QuadraticProblem::generate(seed, 30, 6).unwrap();
            let n = idx.len();
            prop_assert!(p.batch_grad(&Batch::new(idx), &x).unwrap().nnz() <= n);
        }

        #[test]
        fn batch_loss_is_convex((seed, idx, x) in problem_batch_x(), y in prop::collection::vec(-4.0f64..4.0, 6), lam in 0.0f64..=1.0) {
            let p = QuadraticProblem::generate(seed, 30, 6).unwrap();
            let batch = Batch::new(idx);
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
            let lhs = p.batch_loss(&batch, &mix).unwrap();
            let rhs = lam * p.batch_loss(&batch, &x).unwrap() + (1.0 - lam) * p.batch_loss(&batch, &y).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn toy_losses_sum_to_one(theta in 0.0f64..=1.0, wide in -1e3f64..1e3) {
            let (g, h) = toy_losses(theta);
            prop_assert_eq!(g + h, 1.0);
            // Outside [0, 1] the subtraction rounds.
            let (g, h) = toy_losses(wide);
            prop_assert!((g + h - 1.0).abs() <= f64::EPSILON * wide.abs().max(1.0));
        }
    }
}
