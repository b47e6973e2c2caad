use serde::{Deserialize, Serialize};

use crate::design_space::FeatureVector;
use crate::error::{Error, Result};

/// Covariance functions over feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// `α² exp(-‖a - b‖² / ℓ²)` with one shared lengthscale.
    SquaredExponential {
        amplitude: f64,
        lengthscale: f64,
    },
    /// `α² aᵀb` over the explicit features.
    Linear {
        amplitude: f64,
    },
    Sum(Vec<Kernel>),
}

impl Kernel {
    pub fn check(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{what} must be positive, got {v}")))
            }
        };
        match self {
            Kernel::SquaredExponential { amplitude, lengthscale } => {
                positive(*amplitude, "amplitude")?;
                positive(*lengthscale, "lengthscale")
            }
            Kernel::Linear { amplitude } => positive(*amplitude, "amplitude"),
            Kernel::Sum(parts) => parts.iter().try_for_each(Kernel::check),
        }
    }

    pub(crate) fn eval_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::SquaredExponential { amplitude, lengthscale } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                amplitude * amplitude * (-d2 / (lengthscale * lengthscale)).exp()
            }
            Kernel::Linear { amplitude } => amplitude * amplitude * super::linalg::dot(a, b),
            Kernel::Sum(parts) => parts.iter().map(|k| k.eval_raw(a, b)).sum(),
        }
    }

    /// For kernels made only of linear parts, the total `Σ α²` scale.
    pub(crate) fn linear_scale(&self) -> Option<f64> {
        match self {
            Kernel::Linear { amplitude } => Some(amplitude * amplitude),
            Kernel::Sum(parts) if !parts.is_empty() => {
                parts.iter().map(Kernel::linear_scale).sum::<Option<f64>>()
            }
            _ => None,
        }
    }
}

/// A kernel plus the variance `τ²` of the additive noise kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kernel: Kernel,
    pub noise: f64,
}

impl KernelSpec {
    pub fn noise_free(kernel: Kernel) -> Self {
        KernelSpec { kernel, noise: 0.0 }
    }

    pub fn check(&self) -> Result<()> {
        self.kernel.check()?;
        if self.noise >= 0.0 && self.noise.is_finite() {
            Ok(())
        } else {
            Err(Error::param(format!("noise variance must be nonnegative, got {}", self.noise)))
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if !a.same_schema(b.schema()) {
        return Err(Error::param("feature schemas differ"));
    }
    Ok(spec.kernel.eval_raw(a.values(), b.values()))
}
