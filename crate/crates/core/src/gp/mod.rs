//! Gaussian-process regression with a constant mean, plus a probit-style
//! classifier built on the regressor for unknown-feasibility constraints.
//!
//! Two equivalent solvers back a fitted model. The general one factors the
//! `n x n` matrix `K_XX + (τ² + jitter) I`. When the kernel is purely linear
//! and there are more observations than features, the model is solved in
//! weight space instead: with `K = s X Xᵀ + ε I` and `A = XᵀX + (ε/s) I`,
//! the posterior mean is `c + xᵀ A⁻¹ Xᵀ r` and the variance is
//! `ε xᵀ A⁻¹ x`, which is the same posterior at `O(n d²)` cost.

mod fit;
mod kernel;
pub(crate) mod linalg;

use statrs::function::erf::erfc;

use crate::design_space::{FeatureVector, Schema};
use crate::error::{Error, Result};
use linalg::{dot, Cholesky, Matrix};

pub use fit::{fit, fit_with_report, FitOptions, FitReport, KernelFamily};
pub use kernel::{kernel_eval, Kernel, KernelSpec};

/// Added to the Gram diagonal before factorization.
pub const JITTER: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Per-feature z-scoring from training statistics. Constant features keep
/// unit scale.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone)]
enum Solver {
    Prior,
    Dense { chol: Cholesky, weights: Vec<f64> },
    Weight { chol: Cholesky, weights: Vec<f64>, eps: f64 },
}

/// A fitted (immutable) GP surrogate.
#[derive(Debug, Clone)]
pub struct GpModel {
    spec: KernelSpec,
    mean: f64,
    schema: Option<Schema>,
    standardizer: Option<Standardizer>,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    solver: Solver,
    lml: f64,
}

/// Pairwise quantities shared by every hyperparameter setting.
pub(crate) struct PairStats {
    sqdist: Matrix,
    inner: Matrix,
}

impl PairStats {
    pub fn new(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut sqdist = Matrix::zeros(n);
        let mut inner = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let (a, b) = (&rows[i], &rows[j]);
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                let ip = dot(a, b);
                sqdist.set(i, j, d2);
                sqdist.set(j, i, d2);
                inner.set(i, j, ip);
                inner.set(j, i, ip);
            }
        }
        PairStats { sqdist, inner }
    }

    fn kernel_matrix(&self, kernel: &Kernel) -> Matrix {
        let n = self.sqdist.dim();
        match kernel {
            Kernel::SquaredExponential { amplitude, lengthscale } => {
                let (a2, l2) = (amplitude * amplitude, lengthscale * lengthscale);
                Matrix::from_fn(n, |i, j| a2 * (-self.sqdist.get(i, j) / l2).exp())
            }
            Kernel::Linear { amplitude } => {
                let a2 = amplitude * amplitude;
                Matrix::from_fn(n, |i, j| a2 * self.inner.get(i, j))
            }
            Kernel::Sum(parts) => {
                let mut acc = Matrix::zeros(n);
                for p in parts {
                    let m = self.kernel_matrix(p);
                    for i in 0..n {
                        for j in 0..n {
                            acc.set(i, j, acc.get(i, j) + m.get(i, j));
                        }
                    }
                }
                acc
            }
        }
    }
}

/// `XᵀX` and `Xᵀr` for the weight-space solver.
pub(crate) struct WeightStats {
    gram: Matrix,
    xtr: Vec<f64>,
}

impl WeightStats {
    pub fn new(rows: &[Vec<f64>], residuals: &[f64]) -> Self {
        let d = rows[0].len();
        let mut gram = Matrix::zeros(d);
        let mut xtr = vec![0.0; d];
        for (row, r) in rows.iter().zip(residuals) {
            for a in 0..d {
                let va = row[a];
                xtr[a] += va * r;
                for (b, vb) in row[..=a].iter().enumerate() {
                    gram.set(a, b, gram.get(a, b) + va * vb);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram.set(b, a, gram.get(a, b));
            }
        }
        WeightStats { gram, xtr }
    }
}

/// Which solver a dataset of `n` rows with `d` features uses under `kernel`.
pub(crate) fn uses_weight_space(kernel: &Kernel, n: usize, d: usize) -> bool {
    kernel.linear_scale().is_some() && n > d
}

pub(crate) struct Solved {
    solver: Solver,
    lml: f64,
}

pub(crate) fn solve_dense(stats: &PairStats, spec: &KernelSpec, residuals: &[f64]) -> Option<Solved> {
    let n = residuals.len();
    let mut k = stats.kernel_matrix(&spec.kernel);
    k.add_diagonal(spec.noise + JITTER);
    let chol = Cholesky::factor(k)?;
    let weights = chol.solve(residuals);
    let lml = -0.5 * dot(residuals, &weights) - 0.5 * chol.log_det() - 0.5 * n as f64 * LN_2PI;
    lml.is_finite().then_some(Solved { solver: Solver::Dense { chol, weights }, lml })
}

pub(crate) fn solve_weight_space(
    stats: &WeightStats,
    rows: &[Vec<f64>],
    spec: &KernelSpec,
    residuals: &[f64],
) -> Option<Solved> {
    let scale = spec.kernel.linear_scale()?;
    let n = residuals.len();
    let d = stats.xtr.len();
    let eps = spec.noise + JITTER;
    let ridge = eps / scale;
    let mut a = stats.gram.clone();
    a.add_diagonal(ridge);
    let chol = Cholesky::factor(a)?;
    let weights = chol.solve(&stats.xtr);
    let fit_err: f64 = rows
        .iter()
        .zip(residuals)
        .map(|(row, r)| {
            let e = r - dot(row, &weights);
            e * e
        })
        .sum();
    let quad = (fit_err + ridge * dot(&weights, &weights)) / eps;
    let log_det = (n - d) as f64 * eps.ln() + d as f64 * scale.ln() + chol.log_det();
    let lml = -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
    lml.is_finite().then_some(Solved { solver: Solver::Weight { chol, weights, eps }, lml })
}

fn check_schema(inputs: &[FeatureVector]) -> Result<Option<Schema>> {
    let Some(first) = inputs.first() else {
        return Ok(None);
    };
    let schema = first.schema().clone();
    if inputs.iter().any(|x| !x.same_schema(&schema)) {
        return Err(Error::param("training inputs have mixed feature schemas"));
    }
    Ok(Some(schema))
}

impl GpModel {
    /// Conditions the GP on `(inputs, targets)` with fixed hyperparameters.
    /// Inputs are used as given.
    pub fn new(inputs: &[FeatureVector], targets: &[f64], spec: KernelSpec, mean: f64) -> Result<Self> {
        Self::build(inputs, targets, spec, mean, false)
    }

    /// Like [`GpModel::new`] but z-scores features with training statistics.
    pub fn new_standardized(
        inputs: &[FeatureVector],
        targets: &[f64],
        spec: KernelSpec,
        mean: f64,
    ) -> Result<Self> {
        Self::build(inputs, targets, spec, mean, true)
    }

    fn build(
        inputs: &[FeatureVector],
        targets: &[f64],
        spec: KernelSpec,
        mean: f64,
        standardize: bool,
    ) -> Result<Self> {
        let prepared = Prepared::new(inputs, targets, standardize)?;
        prepared.condition(spec, mean)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Largest observed target, if any.
    pub fn best_target(&self) -> Option<f64> {
        self.targets.iter().copied().reduce(f64::max)
    }

    pub fn is_weight_space(&self) -> bool {
        matches!(self.solver, Solver::Weight { .. })
    }

    fn transform(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        if let Some(schema) = &self.schema {
            if !x.same_schema(schema) {
                return Err(Error::param("query schema differs from training schema"));
            }
        }
        Ok(match &self.standardizer {
            Some(s) => s.apply(x.values()),
            None => x.values().to_vec(),
        })
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn posterior(&self, x: &FeatureVector) -> Result<(f64, f64)> {
        let z = self.transform(x)?;
        let prior = self.spec.kernel.eval_raw(&z, &z);
        let (mu, var) = match &self.solver {
            Solver::Prior => (self.mean, prior),
            Solver::Dense { chol, weights } => {
                let kx: Vec<f64> = self.inputs.iter().map(|row| self.spec.kernel.eval_raw(&z, row)).collect();
                let v = chol.solve_lower(&kx);
                (self.mean + dot(&kx, weights), prior - dot(&v, &v))
            }
            Solver::Weight { chol, weights, eps } => {
                let v = chol.solve_lower(&z);
                (self.mean + dot(&z, weights), eps * dot(&v, &v))
            }
        };
        if !mu.is_finite() || var.is_nan() {
            return Err(Error::Numerical("non-finite posterior".into()));
        }
        Ok((mu, var.max(0.0)))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }
}

/// Training data after schema checks and optional standardization.
pub(crate) struct Prepared {
    schema: Option<Schema>,
    standardizer: Option<Standardizer>,
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl Prepared {
    pub fn new(inputs: &[FeatureVector], targets: &[f64], standardize: bool) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::param(format!("{} inputs but {} targets", inputs.len(), targets.len())));
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::param("targets must be finite"));
        }
        let schema = check_schema(inputs)?;
        let standardizer = (standardize && !inputs.is_empty()).then(|| {
            let raw: Vec<&[f64]> = inputs.iter().map(|x| x.values()).collect();
            Standardizer::from_rows(&raw)
        });
        let rows = inputs
            .iter()
            .map(|x| match &standardizer {
                Some(s) => s.apply(x.values()),
                None => x.values().to_vec(),
            })
            .collect();
        Ok(Prepared { schema, standardizer, rows, targets: targets.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn residuals(&self, mean: f64) -> Vec<f64> {
        self.targets.iter().map(|y| y - mean).collect()
    }

    pub fn mean_target(&self) -> f64 {
        self.targets.iter().sum::<f64>() / self.targets.len() as f64
    }

    pub fn condition(self, spec: KernelSpec, mean: f64) -> Result<GpModel> {
        spec.check()?;
        let solved = if self.rows.is_empty() {
            Solved { solver: Solver::Prior, lml: 0.0 }
        } else {
            let r = self.residuals(mean);
            let solved = if uses_weight_space(&spec.kernel, self.len(), self.dim()) {
                solve_weight_space(&WeightStats::new(&self.rows, &r), &self.rows, &spec, &r)
            } else {
                solve_dense(&PairStats::new(&self.rows), &spec, &r)
            };
            solved.ok_or_else(|| Error::Numerical("covariance matrix is not positive definite".into()))?
        };
        self.into_model(spec, mean, solved)
    }

    pub(crate) fn into_model(self, spec: KernelSpec, mean: f64, solved: Solved) -> Result<GpModel> {
        Ok(GpModel {
            spec,
            mean,
            schema: self.schema,
            standardizer: self.standardizer,
            inputs: self.rows,
            targets: self.targets,
            solver: solved.solver,
            lml: solved.lml,
        })
    }
}

pub fn posterior(model: &GpModel, x: &FeatureVector) -> Result<(f64, f64)> {
    model.posterior(x)
}

pub fn log_marginal_likelihood(model: &GpModel) -> f64 {
    model.log_marginal_likelihood()
}

/// Probability that a constraint holds, from a GP trained on ±1 labels:
/// `Φ(μ / √(1 + σ²))`.
pub fn classify(model: &GpModel, x: &FeatureVector) -> Result<f64> {
    let (mu, var) = model.posterior(x)?;
    Ok(std_normal_cdf(mu / (1.0 + var).sqrt()))
}
