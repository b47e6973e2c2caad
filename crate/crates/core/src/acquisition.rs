//! Acquisition functions and the rejection-sampling acquisition maximizer.
//!
//! Scores follow a maximization convention: the optimizer maximizes
//! `-log(EDP)`, so EI measures expected gain above the best observed value
//! and LCB is the optimistic `μ + λσ`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design_space::FeatureVector;
use crate::error::{Error, Result};
use crate::gp::{classify, std_normal_cdf, std_normal_pdf, GpModel};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Acquisition {
    Ei,
    Lcb { lambda: f64 },
}

impl Default for Acquisition {
    fn default() -> Self {
        Acquisition::Lcb { lambda: 1.0 }
    }
}

impl Acquisition {
    pub fn check(&self) -> Result<()> {
        match self {
            Acquisition::Lcb { lambda } if !(*lambda >= 0.0 && lambda.is_finite()) => {
                Err(Error::param(format!("lambda must be nonnegative, got {lambda}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposerConfig {
    pub pool_size: usize,
    pub attempt_cap: u64,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        ProposerConfig { pool_size: 150, attempt_cap: 1_000_000 }
    }
}

impl ProposerConfig {
    pub fn check(&self) -> Result<()> {
        if self.pool_size == 0 || self.attempt_cap < self.pool_size as u64 {
            return Err(Error::param("need pool_size >= 1 and attempt_cap >= pool_size"));
        }
        Ok(())
    }
}

pub fn expected_improvement(mu: f64, sigma: f64, y_star: f64) -> f64 {
    let gain = mu - y_star;
    if sigma <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    (gain * std_normal_cdf(z) + sigma * std_normal_pdf(z)).max(0.0)
}

pub fn lcb(mu: f64, sigma: f64, lambda: f64) -> f64 {
    mu + lambda * sigma
}

pub fn feasibility_weight(a: f64, probs: &[f64]) -> f64 {
    probs.iter().fold(a, |acc, p| acc * p)
}

/// Models consulted when scoring candidates.
#[derive(Debug, Clone, Copy)]
pub struct Surrogates<'a> {
    /// `None` (or an empty model) scores every candidate 1 before weighting.
    pub objective: Option<&'a GpModel>,
    pub constraints: &'a [GpModel],
}

/// Acquisition value of each pool member, feasibility-weighted when
/// constraint models are present. LCB values are shifted so the pool
/// minimum is zero before weighting.
pub fn score_pool(
    pool: &[FeatureVector],
    surrogates: Surrogates<'_>,
    spec: Acquisition,
    exec: Execution,
) -> Result<Vec<f64>> {
    let objective = surrogates.objective.filter(|m| !m.is_empty());
    let y_star = objective.and_then(GpModel::best_target);
    let raw: Vec<Result<(f64, f64)>> = par::map(exec, pool, |x| {
        let base = match objective {
            None => 1.0,
            Some(model) => {
                let (mu, var) = model.posterior(x)?;
                let sigma = var.sqrt();
                match spec {
                    Acquisition::Ei => expected_improvement(mu, sigma, y_star.unwrap_or(f64::NEG_INFINITY)),
                    Acquisition::Lcb { lambda } => lcb(mu, sigma, lambda),
                }
            }
        };
        let probs = surrogates.constraints.iter().map(|c| classify(c, x)).collect::<Result<Vec<f64>>>()?;
        Ok((base, probs.iter().product()))
    });
    let raw: Vec<(f64, f64)> = raw.into_iter().collect::<Result<_>>()?;
    let shift = match (spec, objective) {
        (Acquisition::Lcb { .. }, Some(_)) => raw.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        _ => 0.0,
    };
    Ok(raw.into_iter().map(|(a, p)| (a - shift) * p).collect())
}

#[derive(Debug, Clone)]
pub struct Proposal<P> {
    pub point: P,
    pub score: f64,
    /// Feasible candidates drawn, in draw order.
    pub pool: Vec<P>,
    pub scores: Vec<f64>,
    /// Sampler attempts spent assembling the pool.
    pub attempts: u64,
}

/// Draws up to `cfg.pool_size` candidates from `sampler` (one attempt per
/// call, `None` for a rejected draw) within `cfg.attempt_cap` attempts and
/// returns the highest-scoring one. Ties go to the earliest draw.
pub fn propose<P, R, S, F>(
    surrogates: Surrogates<'_>,
    features: F,
    mut sampler: S,
    spec: Acquisition,
    cfg: &ProposerConfig,
    rng: &mut R,
    exec: Execution,
) -> Result<Proposal<P>>
where
    P: Clone + Sync,
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> Option<P>,
    F: Fn(&P) -> FeatureVector + Sync + Send,
{
    cfg.check()?;
    spec.check()?;
    let mut pool = Vec::with_capacity(cfg.pool_size);
    let mut attempts = 0u64;
    while pool.len() < cfg.pool_size && attempts < cfg.attempt_cap {
        attempts += 1;
        if let Some(p) = sampler(rng) {
            pool.push(p);
        }
    }
    if pool.is_empty() {
        return Err(Error::Exhausted { attempts });
    }
    let feats = par::map(exec, &pool, &features);
    let scores = score_pool(&feats, surrogates, spec, exec)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(Proposal { point: pool[best].clone(), score: scores[best], pool, scores, attempts })
}
