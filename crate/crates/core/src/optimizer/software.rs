use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{first_feasible, Observation, OptimizationTrace, SearchConfig, Strategy};
use crate::acquisition::{propose, Surrogates};
use crate::cost_model::{evaluate_edp, EdpResult};
use crate::design_space::{sw_features, HardwareConfig, LayerShape, Mapping, MappingSampler};
use crate::error::{Error, Result};
use crate::gp::{fit, FitOptions, KernelFamily};

#[derive(Debug, Clone, PartialEq)]
pub struct SoftwareOutcome {
    /// `None` when no feasible mapping could be sampled.
    pub best: Option<(Mapping, EdpResult)>,
    pub trace: OptimizationTrace<Mapping>,
}

/// Bayesian search for the lowest-EDP mapping of `layer` on `hw`.
///
/// Mappings the cost model cannot tell apart from an already evaluated one
/// are rejected at sampling time, so every trial evaluates a new point. The
/// search stops early once the sampler cannot find a new feasible mapping.
pub fn software_search(
    hw: &HardwareConfig,
    layer: &LayerShape,
    budget: usize,
    seed: u64,
    cfg: &SearchConfig,
) -> Result<SoftwareOutcome> {
    run(hw, layer, budget, seed, cfg, Strategy::Bayesian)
}

/// Same protocol as [`software_search`], taking the first feasible draw each
/// trial.
pub fn random_search_sw(
    hw: &HardwareConfig,
    layer: &LayerShape,
    budget: usize,
    seed: u64,
    cfg: &SearchConfig,
) -> Result<SoftwareOutcome> {
    run(hw, layer, budget, seed, cfg, Strategy::Random)
}

pub(crate) fn run(
    hw: &HardwareConfig,
    layer: &LayerShape,
    budget: usize,
    seed: u64,
    cfg: &SearchConfig,
    strategy: Strategy,
) -> Result<SoftwareOutcome> {
    if budget == 0 {
        return Err(Error::param("software budget must be at least 1"));
    }
    hw.check()?;
    cfg.proposer.check()?;
    let sampler = MappingSampler::new(layer, hw);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = cfg.proposer.attempt_cap;
    let fit_opts = FitOptions::new(KernelFamily::Linear);

    let mut seen = HashSet::new();
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut trace = OptimizationTrace::default();
    let mut best: Option<(Mapping, EdpResult)> = None;

    for trial in 0..budget {
        let fresh = |rng: &mut ChaCha8Rng| sampler.try_sample(rng).filter(|m| !seen.contains(&m.cost_key()));
        let model = match strategy {
            Strategy::Bayesian if trial > 0 => fit(&features, &targets, &fit_opts).ok(),
            _ => None,
        };
        let step = match &model {
            Some(model) => propose(
                Surrogates { objective: Some(model), constraints: &[] },
                |m: &Mapping| sw_features(m, hw, layer),
                fresh,
                cfg.acquisition,
                &cfg.proposer,
                &mut rng,
                cfg.exec,
            )
            .map(|p| (p.point, p.attempts)),
            None => first_feasible(fresh, &mut rng, cap),
        };
        let (mapping, attempts) = match step {
            Ok(s) => s,
            Err(Error::Exhausted { .. }) => break,
            Err(e) => return Err(e),
        };
        let result = evaluate_edp(&mapping, hw, layer)?;
        seen.insert(mapping.cost_key());
        let obs = Observation::feasible(trial, mapping.clone(), result.edp, attempts);
        features.push(sw_features(&mapping, hw, layer));
        targets.push(obs.objective.expect("feasible observation"));
        trace.push(obs);
        if best.as_ref().is_none_or(|(_, b)| result.edp < b.edp) {
            best = Some((mapping, result));
        }
    }
    Ok(SoftwareOutcome { best, trace })
}
