use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{
    solve_dense, solve_weight_space, uses_weight_space, GpModel, Kernel, KernelSpec, PairStats, Prepared,
    Solved, WeightStats,
};
use crate::design_space::FeatureVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    SquaredExponential,
    Linear,
    LinearPlusSquaredExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub family: KernelFamily,
    /// Fit a noise kernel `τ² I`; otherwise `τ² = 0`.
    pub noise: bool,
    pub standardize: bool,
    pub sweeps: usize,
}

impl FitOptions {
    pub fn new(family: KernelFamily) -> Self {
        FitOptions { family, noise: false, standardize: true, sweeps: 3 }
    }

    pub fn with_noise(mut self) -> Self {
        self.noise = true;
        self
    }
}

/// 13 log-spaced points over `[1e-2, 1e4]`, shared by amplitudes and
/// lengthscales.
pub fn scale_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-2.0 + 0.5 * i as f64)).collect()
}

/// One point per decade over `[1e-8, 1e2]`.
pub fn noise_grid() -> Vec<f64> {
    (0..11).map(|i| 10f64.powf(-8.0 + i as f64)).collect()
}

struct Axis {
    name: &'static str,
    grid: Vec<f64>,
    start: usize,
}

fn axes(opts: &FitOptions) -> Vec<Axis> {
    let scale = |name| Axis { name, grid: scale_grid(), start: 4 };
    let mut out = match opts.family {
        KernelFamily::SquaredExponential => vec![scale("amplitude"), scale("lengthscale")],
        KernelFamily::Linear => vec![scale("amplitude")],
        KernelFamily::LinearPlusSquaredExponential => {
            vec![scale("linear_amplitude"), scale("se_amplitude"), scale("lengthscale")]
        }
    };
    if opts.noise {
        out.push(Axis { name: "noise", grid: noise_grid(), start: 6 });
    }
    out
}

fn spec_from(opts: &FitOptions, values: &[f64]) -> KernelSpec {
    let kernel = match opts.family {
        KernelFamily::SquaredExponential => {
            Kernel::SquaredExponential { amplitude: values[0], lengthscale: values[1] }
        }
        KernelFamily::Linear => Kernel::Linear { amplitude: values[0] },
        KernelFamily::LinearPlusSquaredExponential => Kernel::Sum(vec![
            Kernel::Linear { amplitude: values[0] },
            Kernel::SquaredExponential { amplitude: values[1], lengthscale: values[2] },
        ]),
    };
    let noise = if opts.noise { values[values.len() - 1] } else { 0.0 };
    KernelSpec { kernel, noise }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub parameter_names: Vec<&'static str>,
    /// Every distinct grid point evaluated, in evaluation order.
    pub visited: Vec<(Vec<f64>, f64)>,
    pub best: Vec<f64>,
    pub best_log_likelihood: f64,
}

pub fn fit(inputs: &[FeatureVector], targets: &[f64], opts: &FitOptions) -> Result<GpModel> {
    fit_with_report(inputs, targets, opts).map(|(m, _)| m)
}

/// Sets the constant mean to the sample mean of `targets`, then picks the
/// remaining hyperparameters by coordinate ascent on the log marginal
/// likelihood over fixed grids. Ties go to the smaller value.
pub fn fit_with_report(
    inputs: &[FeatureVector],
    targets: &[f64],
    opts: &FitOptions,
) -> Result<(GpModel, FitReport)> {
    if inputs.is_empty() {
        return Err(Error::param("cannot fit a GP to an empty dataset"));
    }
    let prepared = Prepared::new(inputs, targets, opts.standardize)?;
    let mean = prepared.mean_target();
    let residuals = prepared.residuals(mean);
    let axes = axes(opts);

    enum Stats {
        Weight(WeightStats),
        Dense(PairStats),
    }
    let weight_space = opts.family == KernelFamily::Linear
        && uses_weight_space(&Kernel::Linear { amplitude: 1.0 }, prepared.len(), prepared.dim());
    let stats = if weight_space {
        Stats::Weight(WeightStats::new(prepared.rows(), &residuals))
    } else {
        Stats::Dense(PairStats::new(prepared.rows()))
    };
    let solve = |values: &[f64]| -> Option<Solved> {
        let spec = spec_from(opts, values);
        match &stats {
            Stats::Weight(w) => solve_weight_space(w, prepared.rows(), &spec, &residuals),
            Stats::Dense(p) => solve_dense(p, &spec, &residuals),
        }
    };

    let values_of = |idx: &[usize]| -> Vec<f64> { idx.iter().zip(&axes).map(|(&i, a)| a.grid[i]).collect() };
    let mut memo: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut visited = Vec::new();
    let mut score = |idx: &[usize]| -> f64 {
        if let Some(&v) = memo.get(idx) {
            return v;
        }
        let values = values_of(idx);
        let lml = solve(&values).map_or(f64::NEG_INFINITY, |s| s.lml);
        memo.insert(idx.to_vec(), lml);
        visited.push((values, lml));
        lml
    };

    let mut current: Vec<usize> = axes.iter().map(|a| a.start).collect();
    let mut current_score = score(&current);
    for _ in 0..opts.sweeps {
        for (k, axis) in axes.iter().enumerate() {
            let mut best_i = current[k];
            let mut best_s = f64::NEG_INFINITY;
            for i in 0..axis.grid.len() {
                let mut trial = current.clone();
                trial[k] = i;
                let s = score(&trial);
                if s > best_s {
                    best_s = s;
                    best_i = i;
                }
            }
            current[k] = best_i;
            current_score = best_s;
        }
    }
    if !current_score.is_finite() {
        return Err(Error::Numerical("no hyperparameter setting gave a positive-definite covariance".into()));
    }

    let best = values_of(&current);
    let solved = solve(&best).expect("best setting was solvable during the search");
    let model = prepared.into_model(spec_from(opts, &best), mean, solved)?;
    let report = FitReport {
        parameter_names: axes.iter().map(|a| a.name).collect(),
        visited,
        best,
        best_log_likelihood: current_score,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::unnamed(v.to_vec()).unwrap()
    }

    fn dataset() -> (Vec<FeatureVector>, Vec<f64>) {
        let xs: Vec<_> = (0..15).map(|i| fv(&[i as f64 * 0.3, (i as f64).sqrt()])).collect();
        let ys = (0..15).map(|i| (i as f64 * 0.3).sin() + 0.1 * i as f64).collect();
        (xs, ys)
    }

    #[test]
    fn grids() {
        let g = scale_grid();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[4], 1.0);
        assert_eq!(g[12], 10_000.0);
        let n = noise_grid();
        assert_eq!((n[0], n[10], n.len()), (1e-8, 100.0, 11));
    }

    #[test]
    fn constant_targets_set_mean() {
        let xs = vec![fv(&[0.0]), fv(&[1.0]), fv(&[2.0])];
        let m = fit(&xs, &[4.5, 4.5, 4.5], &FitOptions::new(KernelFamily::SquaredExponential)).unwrap();
        assert_eq!(m.mean(), 4.5);
    }

    #[test]
    fn refit_is_deterministic() {
        let (xs, ys) = dataset();
        for opts in [
            FitOptions::new(KernelFamily::SquaredExponential),
            FitOptions::new(KernelFamily::Linear).with_noise(),
            FitOptions::new(KernelFamily::LinearPlusSquaredExponential),
        ] {
            let (_, a) = fit_with_report(&xs, &ys, &opts).unwrap();
            let (_, b) = fit_with_report(&xs, &ys, &opts).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn chosen_point_dominates_visited() {
        let (xs, ys) = dataset();
        for opts in [
            FitOptions::new(KernelFamily::SquaredExponential).with_noise(),
            FitOptions::new(KernelFamily::Linear),
        ] {
            let (model, report) = fit_with_report(&xs, &ys, &opts).unwrap();
            assert!(report.visited.iter().all(|(_, l)| *l <= report.best_log_likelihood));
            // independent re-evaluation of every visited grid point
            let prepared_mean = ys.iter().sum::<f64>() / ys.len() as f64;
            for (values, _) in &report.visited {
                let spec = spec_from(&opts, values);
                if let Ok(m) = GpModel::new_standardized(&xs, &ys, spec, prepared_mean) {
                    assert!(m.log_marginal_likelihood() <= model.log_marginal_likelihood() + 1e-9);
                }
            }
            assert_eq!(model.log_marginal_likelihood(), report.best_log_likelihood);
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(fit(&[], &[], &FitOptions::new(KernelFamily::Linear)).is_err());
    }
}
