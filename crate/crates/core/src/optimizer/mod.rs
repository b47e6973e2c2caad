//! Nested hardware/software search.
//!
//! The outer loop proposes hardware designs; for each design an inner search
//! looks for a good mapping of every layer, and the per-layer EDPs are summed
//! into the hardware objective. Both levels maximize `-ln(EDP)` with a GP
//! surrogate. The first trial of each level is a constrained random sample.
//!
//! Seeds: a hardware trial `t` runs its software searches with
//! `derive_seed(run_seed, [1, t])`, and each layer searches with
//! `derive_seed(that, layer bounds)`, so identical layers get identical
//! searches. The hardware sampler uses `derive_seed(run_seed, [0])`.

mod hardware;
mod software;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{Acquisition, ProposerConfig};
use crate::error::{Error, Result};
use crate::par::Execution;

pub use hardware::{
    codesign, hardware_objective, random_hardware_objective, random_search_hw, BestDesign, CodesignConfig,
    CodesignResult, HardwareEvaluation, LayerChoice, SoftwareTraceRecord,
};
pub use software::{random_search_sw, software_search, SoftwareOutcome};

/// Settings shared by both search levels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub acquisition: Acquisition,
    pub proposer: ProposerConfig,
    pub exec: Execution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Strategy {
    Bayesian,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation<P> {
    pub trial_index: usize,
    pub point: P,
    pub feasible: bool,
    pub edp: Option<f64>,
    /// `-ln(edp)` for feasible observations.
    pub objective: Option<f64>,
    /// Sampler attempts spent producing this point, rejected draws included.
    pub attempts: u64,
}

impl<P> Observation<P> {
    pub fn feasible(trial_index: usize, point: P, edp: f64, attempts: u64) -> Self {
        Observation {
            trial_index,
            point,
            feasible: true,
            edp: Some(edp),
            objective: Some(objective_of(edp)),
            attempts,
        }
    }

    pub fn infeasible(trial_index: usize, point: P, attempts: u64) -> Self {
        Observation { trial_index, point, feasible: false, edp: None, objective: None, attempts }
    }
}

/// Internal objective for an EDP value; zero EDP maps to a large finite value.
pub fn objective_of(edp: f64) -> f64 {
    -edp.max(f64::MIN_POSITIVE).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace<P> {
    pub observations: Vec<Observation<P>>,
    /// Running minimum EDP after each trial; `None` until something feasible.
    pub best_so_far: Vec<Option<f64>>,
}

impl<P> Default for OptimizationTrace<P> {
    fn default() -> Self {
        OptimizationTrace { observations: Vec::new(), best_so_far: Vec::new() }
    }
}

impl<P> OptimizationTrace<P> {
    pub fn push(&mut self, obs: Observation<P>) {
        let prev = self.best_so_far.last().copied().flatten();
        let next = match (prev, obs.edp) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.best_so_far.push(next);
        self.observations.push(obs);
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Earliest observation achieving the minimum EDP.
    pub fn best(&self) -> Option<&Observation<P>> {
        let mut best: Option<&Observation<P>> = None;
        for o in &self.observations {
            if let Some(e) = o.edp {
                if best.and_then(|b| b.edp).is_none_or(|b| e < b) {
                    best = Some(o);
                }
            }
        }
        best
    }

    pub fn best_edp(&self) -> Option<f64> {
        self.best_so_far.last().copied().flatten()
    }

    pub fn total_attempts(&self) -> u64 {
        self.observations.iter().map(|o| o.attempts).sum()
    }
}

/// Per-trial `best EDP / best-so-far EDP`: nondecreasing, ending at exactly
/// 1. Trials before the first feasible observation score 0.
pub fn normalize_trace<P>(trace: &OptimizationTrace<P>) -> Result<Vec<f64>> {
    let best = trace.best_edp().ok_or_else(|| Error::param("trace has no feasible observation"))?;
    Ok(trace
        .best_so_far
        .iter()
        .map(|b| match b {
            Some(b) if *b == best => 1.0,
            Some(b) => best / b,
            None => 0.0,
        })
        .collect())
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed splitting: mixes `tags` into `base` one at a time.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(base), |h, &t| splitmix64(h ^ splitmix64(t)))
}

/// First accepted draw within `cap` attempts.
pub(crate) fn first_feasible<P, R, S>(mut sampler: S, rng: &mut R, cap: u64) -> Result<(P, u64)>
where
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> Option<P>,
{
    for attempt in 1..=cap {
        if let Some(p) = sampler(rng) {
            return Ok((p, attempt));
        }
    }
    Err(Error::Exhausted { attempts: cap })
}
