//! Drift fields, their scaled versions `h_c(x) = h(cx)/c`, martingale
//! difference noise, and the stochastic quadratic objective used by the
//! delayed SGD experiments.
//!
//! State vectors are split into `D` blocks of sizes `d_1..d_D`; block `i`
//! belongs to agent `i`. All norms are Euclidean.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{param, Error, Result};

pub type Vector = DVector<f64>;

/// Offsets of each block inside the full state vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocks {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl Blocks {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
            return Err(param(format!("block sizes must be positive and nonempty: {sizes:?}")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// One block per coordinate.
    pub fn scalar(d: usize) -> Self {
        Self::new(vec![1; d.max(1)]).expect("positive sizes")
    }

    pub fn single(d: usize) -> Self {
        Self::new(vec![d.max(1)]).expect("positive size")
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Coordinate range of block `i` (0-based).
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

type DriftFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

#[derive(Clone)]
pub enum DriftKind {
    /// `h(x) = M x`.
    Linear(DMatrix<f64>),
    /// `h(x) = M x + c`.
    Affine(DMatrix<f64>, Vector),
    /// `h(x) = g(x) - 2 kappa x`.
    Regularized(Box<DriftField>, f64),
    /// 1-d piecewise-linear table, extended linearly past both ends.
    Table { grid: Vec<f64>, values: Vec<f64> },
    Custom(DriftFn),
}

impl fmt::Debug for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftKind::Linear(m) => write!(f, "Linear({}x{})", m.nrows(), m.ncols()),
            DriftKind::Affine(m, _) => write!(f, "Affine({}x{})", m.nrows(), m.ncols()),
            DriftKind::Regularized(g, k) => write!(f, "Regularized({:?}, kappa={k})", g.kind),
            DriftKind::Table { grid, .. } => write!(f, "Table({} knots)", grid.len()),
            DriftKind::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// A drift `h: R^d -> R^d` with block structure and declared constants.
#[derive(Debug, Clone)]
pub struct DriftField {
    kind: DriftKind,
    blocks: Blocks,
    /// Declared Lipschitz constant `L`.
    pub lipschitz: Option<f64>,
    /// Declared linear-growth constant `K` in `|h(x)| <= K (1 + |x|)`.
    pub growth: Option<f64>,
    limit: Option<Box<DriftField>>,
}

impl DriftField {
    pub fn linear(matrix: DMatrix<f64>, blocks: Blocks) -> Result<Self> {
        check_square(&matrix, blocks.dim())?;
        let l = matrix.norm();
        Ok(Self { kind: DriftKind::Linear(matrix), blocks, lipschitz: Some(l), growth: Some(l), limit: None })
    }

    /// `h(x) = -x` on `R^d`, one block per coordinate.
    pub fn negative_identity(d: usize) -> Self {
        Self::linear(-DMatrix::identity(d, d), Blocks::scalar(d)).expect("square")
    }

    pub fn affine(matrix: DMatrix<f64>, offset: Vector, blocks: Blocks) -> Result<Self> {
        check_square(&matrix, blocks.dim())?;
        check_dim(&offset, blocks.dim())?;
        let l = matrix.norm();
        let growth = l.max(offset.norm());
        Ok(Self {
            kind: DriftKind::Affine(matrix, offset),
            blocks,
            lipschitz: Some(l),
            growth: Some(growth),
            limit: None,
        })
    }

    /// `h(x) = g(x) - 2 kappa x`, the drift of `F(x) = G(x) + kappa |x|^2`.
    pub fn regularized(inner: DriftField, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(param(format!("regularisation kappa={kappa} must be non-negative")));
        }
        let blocks = inner.blocks.clone();
        let lipschitz = inner.lipschitz.map(|l| l + 2.0 * kappa);
        let growth = inner.growth.map(|k| k + 2.0 * kappa);
        Ok(Self { kind: DriftKind::Regularized(Box::new(inner), kappa), blocks, lipschitz, growth, limit: None })
    }

    /// 1-d field interpolated from `(grid, values)`; grid strictly increasing.
    pub fn table(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(param("table needs at least two knots and matching value count"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(param("table grid must be strictly increasing"));
        }
        let lipschitz = grid
            .windows(2)
            .zip(values.windows(2))
            .map(|(g, v)| ((v[1] - v[0]) / (g[1] - g[0])).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            kind: DriftKind::Table { grid, values },
            blocks: Blocks::single(1),
            lipschitz: Some(lipschitz),
            growth: None,
            limit: None,
        })
    }

    pub fn custom(f: impl Fn(&Vector) -> Vector + Send + Sync + 'static, blocks: Blocks) -> Self {
        Self { kind: DriftKind::Custom(Arc::new(f)), blocks, lipschitz: None, growth: None, limit: None }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_growth(mut self, k: f64) -> Self {
        self.growth = Some(k);
        self
    }

    /// Attaches the analytic limit `h_inf` of the scaled drifts.
    pub fn with_limit(mut self, limit: DriftField) -> Result<Self> {
        if limit.dim() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), found: limit.dim() });
        }
        self.limit = Some(Box::new(limit));
        Ok(self)
    }

    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    pub fn blocks(&self) -> &Blocks {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.dim()
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        check_dim(x, self.dim())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &Vector) -> Vector {
        match &self.kind {
            DriftKind::Linear(m) => m * x,
            DriftKind::Affine(m, c) => m * x + c,
            DriftKind::Regularized(g, kappa) => g.eval_unchecked(x) - x * (2.0 * kappa),
            DriftKind::Table { grid, values } => Vector::from_element(1, interpolate(grid, values, x[0])),
            DriftKind::Custom(f) => f(x),
        }
    }

    /// `h^i(x)` for 0-based block `i`.
    pub fn eval_block(&self, i: usize, x: &Vector) -> Result<Vector> {
        check_dim(x, self.dim())?;
        if i >= self.blocks.count() {
            return Err(param(format!("block {i} out of range ({} blocks)", self.blocks.count())));
        }
        Ok(self.eval_block_unchecked(i, x))
    }

    pub(crate) fn eval_block_unchecked(&self, i: usize, x: &Vector) -> Vector {
        let r = self.blocks.range(i);
        match &self.kind {
            DriftKind::Linear(m) => m.rows(r.start, r.len()) * x,
            DriftKind::Affine(m, c) => m.rows(r.start, r.len()) * x + c.rows(r.start, r.len()),
            _ => self.eval_unchecked(x).rows(r.start, r.len()).into_owned(),
        }
    }

    /// `h_c(x) = h(c x) / c` for `c >= 1`.
    pub fn scaled(&self, c: f64, x: &Vector) -> Result<Vector> {
        if !(c >= 1.0) {
            return Err(param(format!("scaling factor c={c} must be >= 1")));
        }
        check_dim(x, self.dim())?;
        Ok(self.scaled_unchecked(c, x))
    }

    pub(crate) fn scaled_unchecked(&self, c: f64, x: &Vector) -> Vector {
        if c == 1.0 {
            return self.eval_unchecked(x);
        }
        match &self.kind {
            // exact: linear maps commute with scaling
            DriftKind::Linear(m) => m * x,
            _ => self.eval_unchecked(&(x * c)) / c,
        }
    }

    /// The scaled field `x -> h_c(x)` as a field in its own right.
    pub fn scaled_field(&self, c: f64) -> Result<DriftField> {
        if !(c >= 1.0) {
            return Err(param(format!("scaling factor c={c} must be >= 1")));
        }
        let inner = self.clone();
        let mut out = DriftField::custom(move |x| inner.scaled_unchecked(c, x), self.blocks.clone());
        out.lipschitz = self.lipschitz;
        Ok(out)
    }

    /// Analytic `h_inf`, when known: explicitly attached, or derived for the
    /// linear, affine and regularised kinds.
    pub fn limit(&self) -> Option<DriftField> {
        if let Some(l) = &self.limit {
            return Some((**l).clone());
        }
        match &self.kind {
            DriftKind::Linear(_) => Some(self.clone()),
            DriftKind::Affine(m, _) => DriftField::linear(m.clone(), self.blocks.clone()).ok(),
            DriftKind::Regularized(g, kappa) => {
                g.limit().and_then(|gl| DriftField::regularized(gl, *kappa).ok())
            }
            _ => None,
        }
    }

    /// Evaluates `h_{c_k}(x)` along an increasing scaling sequence and applies
    /// a Cauchy test to the last two values. Diagnostic only.
    pub fn limit_probe(&self, x: &Vector, scales: &[f64], tol: f64) -> Result<LimitProbe> {
        check_dim(x, self.dim())?;
        if scales.is_empty() || scales[0] < 1.0 || scales.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(param("scaling sequence must be strictly increasing and start at >= 1"));
        }
        let values: Vec<Vector> = scales.iter().map(|&c| self.scaled_unchecked(c, x)).collect();
        let last_step = values
            .windows(2)
            .last()
            .map(|w| (&w[1] - &w[0]).norm())
            .unwrap_or(f64::INFINITY);
        Ok(LimitProbe { scales: scales.to_vec(), converged: last_step < tol, last_step, values })
    }

    /// Largest ratio `|h(x) - h(y)| / (L |x - y|)` over random pairs in a ball.
    /// `None` if no Lipschitz constant is declared.
    pub fn lipschitz_spot_check<R: Rng>(&self, rng: &mut R, pairs: usize, radius: f64) -> Option<f64> {
        let l = self.lipschitz?;
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let x = Vector::from_fn(d, |_, _| rng.random_range(-radius..radius));
            let y = Vector::from_fn(d, |_, _| rng.random_range(-radius..radius));
            let dx = (&x - &y).norm();
            if dx == 0.0 {
                continue;
            }
            let dh = (self.eval_unchecked(&x) - self.eval_unchecked(&y)).norm();
            worst = worst.max(dh / (l * dx));
        }
        Some(worst)
    }

    /// Largest ratio `|h(x)| / (K (1 + |x|))` over random points in a ball.
    pub fn growth_spot_check<R: Rng>(&self, rng: &mut R, points: usize, radius: f64) -> Option<f64> {
        let k = self.growth?;
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            let x = Vector::from_fn(d, |_, _| rng.random_range(-radius..radius));
            worst = worst.max(self.eval_unchecked(&x).norm() / (k * (1.0 + x.norm())));
        }
        Some(worst)
    }
}

#[derive(Debug, Clone)]
pub struct LimitProbe {
    pub scales: Vec<f64>,
    pub values: Vec<Vector>,
    pub last_step: f64,
    pub converged: bool,
}

fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let k = grid.partition_point(|&g| g <= x).clamp(1, grid.len() - 1);
    let (g0, g1, v0, v1) = (grid[k - 1], grid[k], values[k - 1], values[k]);
    v0 + (v1 - v0) * (x - g0) / (g1 - g0)
}

fn check_dim(x: &Vector, d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::Dimension { expected: d, found: x.len() });
    }
    Ok(())
}

fn check_square(m: &DMatrix<f64>, d: usize) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Dimension { expected: d, found: m.nrows().max(m.ncols()) });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Zero,
    /// Coordinates `N(0, K^2 (1 + |arg|^2))`.
    GaussianScaled,
    /// Coordinates uniform on `[-K s, K s]`, `s = sqrt(1 + |arg|^2)`.
    BoundedUniform,
}

/// Sign-symmetric martingale difference noise whose conditional variance is
/// scaled by the norm of the (delayed) argument the drift was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub scale: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, scale: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(param(format!("noise scale {scale} must be non-negative")));
        }
        Ok(Self { kind, scale })
    }

    pub fn zero() -> Self {
        Self { kind: NoiseKind::Zero, scale: 0.0 }
    }

    pub fn gaussian(scale: f64) -> Result<Self> {
        Self::new(NoiseKind::GaussianScaled, scale)
    }

    pub fn uniform(scale: f64) -> Result<Self> {
        Self::new(NoiseKind::BoundedUniform, scale)
    }

    pub fn is_zero(&self) -> bool {
        self.kind == NoiseKind::Zero || self.scale == 0.0
    }

    /// Draws a `dim`-vector given the argument the drift block was read at.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, arg: &Vector, dim: usize) -> Vector {
        let s = self.scale * (1.0 + arg.norm_squared()).sqrt();
        match self.kind {
            NoiseKind::Zero => Vector::zeros(dim),
            NoiseKind::GaussianScaled => Vector::from_fn(dim, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                s * z
            }),
            NoiseKind::BoundedUniform => {
                Vector::from_fn(dim, |_, _| s * (2.0 * rng.random::<f64>() - 1.0))
            }
        }
    }

    /// Upper bound on `E|M|^2` for a `dim`-block read at `arg`.
    pub fn second_moment_bound(&self, arg: &Vector, dim: usize) -> f64 {
        match self.kind {
            NoiseKind::Zero => 0.0,
            _ => self.scale * self.scale * (1.0 + arg.norm_squared()) * dim as f64,
        }
    }
}

/// `f(x; xi) = x^T A(xi) x + b(xi)^T x` with
/// `A(xi) = A_bar + sigma_A R`, `b(xi) = b_bar + sigma_b r`, and `R`, `r`
/// independent Rademacher (entrywise +/-1) draws.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    pub mean_a: DMatrix<f64>,
    pub a_spread: f64,
    pub mean_b: Vector,
    pub b_spread: f64,
    blocks: Blocks,
}

/// One realisation `(A(xi), b(xi))`.
#[derive(Debug, Clone)]
pub struct QuadraticSample {
    pub a: DMatrix<f64>,
    pub b: Vector,
}

impl QuadraticObjective {
    pub fn new(
        mean_a: DMatrix<f64>,
        a_spread: f64,
        mean_b: Vector,
        b_spread: f64,
        blocks: Blocks,
    ) -> Result<Self> {
        check_square(&mean_a, blocks.dim())?;
        check_dim(&mean_b, blocks.dim())?;
        if !(a_spread >= 0.0 && b_spread >= 0.0) {
            return Err(param("objective spreads must be non-negative"));
        }
        Ok(Self { mean_a, a_spread, mean_b, b_spread, blocks })
    }

    pub fn dim(&self) -> usize {
        self.blocks.dim()
    }

    pub fn blocks(&self) -> &Blocks {
        &self.blocks
    }

    /// `S = E[A] + E[A]^T`, the mean Hessian of `F`.
    pub fn hessian(&self) -> DMatrix<f64> {
        &self.mean_a + self.mean_a.transpose()
    }

    /// `F(x) = x^T E[A] x + E[b]^T x`.
    pub fn value(&self, x: &Vector) -> f64 {
        (x.transpose() * &self.mean_a * x)[(0, 0)] + self.mean_b.dot(x)
    }

    /// `h(x) = -grad F(x) = -(S x + E[b])`, with `h_inf(x) = -S x` attached.
    pub fn mean_drift(&self) -> DriftField {
        let s = self.hessian();
        let limit = DriftField::linear(-s.clone(), self.blocks.clone()).expect("square");
        DriftField::affine(-s, -self.mean_b.clone(), self.blocks.clone())
            .expect("square")
            .with_limit(limit)
            .expect("same dimension")
    }

    /// Smallest eigenvalue of `S`; positive iff the objective is strongly convex.
    pub fn min_eigenvalue(&self) -> f64 {
        self.hessian().symmetric_eigen().eigenvalues.min()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > 0.0
    }

    /// Solves `S x* = -E[b]`.
    pub fn minimizer(&self) -> Result<Vector> {
        self.hessian()
            .lu()
            .solve(&-&self.mean_b)
            .ok_or_else(|| param("mean Hessian is singular; no unique minimiser"))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> QuadraticSample {
        let d = self.dim();
        let mut a = self.mean_a.clone();
        let mut b = self.mean_b.clone();
        if self.a_spread > 0.0 {
            for v in a.iter_mut() {
                *v += self.a_spread * rademacher(rng);
            }
        }
        if self.b_spread > 0.0 {
            for k in 0..d {
                b[k] += self.b_spread * rademacher(rng);
            }
        }
        QuadraticSample { a, b }
    }

    /// `-grad_{x_i} f(x; xi)` for block `i`, i.e. `-((A + A^T) x + b)` restricted to block `i`.
    pub fn sample_drift_block(&self, i: usize, x: &Vector, sample: &QuadraticSample) -> Vector {
        let r = self.blocks.range(i);
        let a = &sample.a;
        let sym_rows = a.rows(r.start, r.len()) + a.columns(r.start, r.len()).transpose();
        -(sym_rows * x + sample.b.rows(r.start, r.len()))
    }

    /// Draws `xi^i_n` and returns agent `i`'s sample drift at its delayed view `x`.
    pub fn sgd_sample_drift<R: Rng + ?Sized>(&self, i: usize, x: &Vector, rng: &mut R) -> Vector {
        let sample = self.sample(rng);
        self.sample_drift_block(i, x, &sample)
    }
}

fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn linear_field_eval() {
        let h = DriftField::negative_identity(2);
        assert_eq!(h.eval(&v(&[1.0, 2.0])).unwrap(), v(&[-1.0, -2.0]));
        assert!(matches!(h.eval(&v(&[1.0])), Err(Error::Dimension { expected: 2, found: 1 })));
    }

    #[test]
    fn quadratic_mean_drift_at_origin() {
        let obj = QuadraticObjective::new(DMatrix::identity(1, 1), 0.0, v(&[2.0]), 0.0, Blocks::single(1)).unwrap();
        assert_eq!(obj.mean_drift().eval(&v(&[0.0])).unwrap(), v(&[-2.0]));
    }

    #[test]
    fn block_consistency() {
        let m = DMatrix::from_diagonal(&v(&[-1.0, -2.0]));
        let h = DriftField::linear(m, Blocks::scalar(2)).unwrap();
        let x = v(&[3.0, 5.0]);
        assert_eq!(h.eval_block(1, &x).unwrap(), v(&[-10.0]));
        let full = h.eval(&x).unwrap();
        let glued: Vec<f64> = (0..2).flat_map(|i| h.eval_block(i, &x).unwrap().iter().copied().collect::<Vec<_>>()).collect();
        assert_eq!(full.as_slice(), glued.as_slice());
        assert!(h.eval_block(2, &x).is_err());
    }

    #[test]
    fn scaled_drift_examples() {
        let h = DriftField::negative_identity(1);
        assert_eq!(h.scaled(1000.0, &v(&[2.0])).unwrap(), v(&[-2.0]));
        assert!(h.scaled(0.5, &v(&[2.0])).is_err());

        let affine = DriftField::affine(-DMatrix::identity(1, 1), v(&[1.0]), Blocks::single(1)).unwrap();
        let hc = affine.scaled(10.0, &v(&[1.0])).unwrap()[0];
        assert!((hc + 0.9).abs() < 1e-15);

        let wiggle = DriftField::custom(|x| x.map(|t| -t + t.sin()), Blocks::single(1));
        let c = 1e6;
        let direct = -1.0 + (1e6f64).sin() / 1e6;
        let got = wiggle.scaled(c, &v(&[1.0])).unwrap()[0];
        assert!((got - direct).abs() < 1e-12);
        assert!((got + 1.0).abs() < 1e-6);
    }

    #[test]
    fn limit_probes() {
        let scales: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
        let x = v(&[0.7]);
        let lin = DriftField::negative_identity(1).limit_probe(&x, &scales, 1e-9).unwrap();
        assert!(lin.converged);
        assert!(lin.values.iter().all(|y| y[0] == -0.7));

        let affine = DriftField::affine(-DMatrix::identity(1, 1), v(&[1.0]), Blocks::single(1)).unwrap();
        let p = affine.limit_probe(&x, &scales, 1e-4).unwrap();
        assert!(p.converged);
        assert!((p.values.last().unwrap()[0] + 0.7).abs() < 2e-6);

        assert!(affine.limit_probe(&x, &[10.0, 5.0], 1e-4).is_err());
        assert!(affine.limit_probe(&x, &[0.5, 5.0], 1e-4).is_err());
    }

    #[test]
    fn quadratic_limit_by_large_scales() {
        let obj = QuadraticObjective::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.8]),
            0.1,
            v(&[1.0, -2.0]),
            0.5,
            Blocks::scalar(2),
        )
        .unwrap();
        let h = obj.mean_drift();
        let x = v(&[0.3, -1.1]);
        let analytic = -obj.hessian() * &x;
        for k in 1..=6 {
            let c = 10f64.powi(k);
            let err = (h.scaled(c, &x).unwrap() - &analytic).norm();
            // offset |E[b]| / c
            assert!(err <= obj.mean_b.norm() / c * (1.0 + 1e-9), "k={k} err={err}");
        }
        let lim = h.limit().unwrap();
        assert!((lim.eval(&x).unwrap() - analytic).norm() < 1e-15);
    }

    #[test]
    fn scripted_table_interpolates() {
        let h = DriftField::table(vec![-1.0, 0.0, 2.0], vec![1.0, 0.0, -4.0]).unwrap();
        assert_eq!(h.eval(&v(&[1.0])).unwrap()[0], -2.0);
        assert_eq!(h.eval(&v(&[3.0])).unwrap()[0], -6.0);
        assert_eq!(h.eval(&v(&[-2.0])).unwrap()[0], 2.0);
        assert_eq!(h.lipschitz, Some(2.0));
        assert!(DriftField::table(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn regularized_adds_weight_decay() {
        let h = DriftField::regularized(DriftField::custom(|x| x.map(f64::sin), Blocks::single(1)), 0.5).unwrap();
        let x = v(&[2.0]);
        assert!((h.eval(&x).unwrap()[0] - (2f64.sin() - 2.0)).abs() < 1e-15);
        assert!(DriftField::regularized(DriftField::negative_identity(1), -1.0).is_err());
    }

    #[test]
    fn zero_noise_is_zero() {
        let mut rng = stream_rng(1, 0);
        let n = NoiseModel::zero();
        assert_eq!(n.sample(&mut rng, &v(&[5.0, 1.0]), 2), Vector::zeros(2));
    }

    #[test]
    fn gaussian_noise_mean_and_second_moment() {
        let mut rng = stream_rng(5, 0);
        let n = NoiseModel::gaussian(1.0).unwrap();
        let arg = v(&[0.0]);
        let draws: Vec<f64> = (0..100_000).map(|_| n.sample(&mut rng, &arg, 1)[0]).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!(mean.abs() < 3.0 * var.sqrt() / (draws.len() as f64).sqrt(), "mean {mean}");

        let n2 = NoiseModel::gaussian(2.0).unwrap();
        let arg = v(&[3.0, 0.0]);
        let d = 2;
        let m2 = (0..100_000).map(|_| n2.sample(&mut rng, &arg, d).norm_squared()).sum::<f64>() / 1e5;
        assert!(m2 <= 4.0 * 10.0 * d as f64 * 1.05, "second moment {m2}");
        assert!(m2 <= n2.second_moment_bound(&arg, d) * 1.05);
    }

    #[test]
    fn uniform_noise_is_bounded() {
        let mut rng = stream_rng(5, 1);
        let n = NoiseModel::uniform(0.5).unwrap();
        let arg = v(&[1.0]);
        let bound = 0.5 * 2f64.sqrt();
        assert!((0..1000).all(|_| n.sample(&mut rng, &arg, 1)[0].abs() <= bound));
    }

    #[test]
    fn sgd_sample_drift_examples() {
        let mut rng = stream_rng(3, 0);
        let det = QuadraticObjective::new(DMatrix::identity(1, 1), 0.0, v(&[0.0]), 0.0, Blocks::single(1)).unwrap();
        assert_eq!(det.sgd_sample_drift(0, &v(&[3.0]), &mut rng), v(&[-6.0]));

        let two_point = QuadraticObjective::new(DMatrix::identity(1, 1), 0.5, v(&[0.0]), 0.0, Blocks::single(1)).unwrap();
        let mut sum = 0.0;
        for _ in 0..1000 {
            let s = two_point.sgd_sample_drift(0, &v(&[1.0]), &mut rng)[0];
            assert!(s == -1.0 || s == -3.0, "{s}");
            sum += s;
        }
        assert!((sum / 1000.0 + 2.0).abs() < 0.15);
    }

    #[test]
    fn minimizer_zeroes_drift() {
        let obj = QuadraticObjective::new(
            DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.1, 0.9, 0.2, 0.0, 0.0, 1.2]),
            0.2,
            v(&[1.0, -2.0, 0.5]),
            1.0,
            Blocks::scalar(3),
        )
        .unwrap();
        assert!(obj.is_positive_definite());
        let xs = obj.minimizer().unwrap();
        assert!(obj.mean_drift().eval(&xs).unwrap().norm() < 1e-10);
    }
}
