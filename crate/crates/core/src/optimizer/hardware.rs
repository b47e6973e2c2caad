use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::software::{self, SoftwareOutcome};
use super::{
    derive_seed, first_feasible, objective_of, Observation, OptimizationTrace, SearchConfig, Strategy,
};
use crate::acquisition::{propose, Surrogates};
use crate::cost_model::EdpResult;
use crate::design_space::{
    hw_features, try_sample_hardware, HardwareBudget, HardwareConfig, LayerShape, Mapping,
};
use crate::error::{Error, Result};
use crate::gp::{fit, FitOptions, KernelFamily};
use crate::par;
use crate::workloads::Workload;

const HW_STREAM: u64 = 0;
const SW_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodesignConfig {
    pub hw_trials: usize,
    pub sw_budget: usize,
    pub search: SearchConfig,
    pub seed: u64,
}

impl Default for CodesignConfig {
    fn default() -> Self {
        CodesignConfig { hw_trials: 50, sw_budget: 250, search: SearchConfig::default(), seed: 0 }
    }
}

/// Result of running the inner search for every layer on one design.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareEvaluation {
    pub feasible: bool,
    /// Sum of the per-layer best EDPs, in layer order.
    pub total_edp: Option<f64>,
    pub layers: Vec<SoftwareOutcome>,
}

impl HardwareEvaluation {
    pub fn observation(
        &self,
        trial: usize,
        hw: HardwareConfig,
        attempts: u64,
    ) -> Observation<HardwareConfig> {
        match self.total_edp {
            Some(edp) => Observation::feasible(trial, hw, edp, attempts),
            None => Observation::infeasible(trial, hw, attempts),
        }
    }
}

fn layer_seed(seed: u64, layer: &LayerShape) -> u64 {
    derive_seed(seed, &layer.bounds())
}

fn evaluate_hardware(
    hw: &HardwareConfig,
    layers: &[LayerShape],
    sw_budget: usize,
    seed: u64,
    cfg: &SearchConfig,
    strategy: Strategy,
) -> Result<HardwareEvaluation> {
    if layers.is_empty() {
        return Err(Error::param("workload has no layers"));
    }
    // identical shapes share a seed, so each distinct shape is searched once
    let mut unique: Vec<LayerShape> = Vec::new();
    let slot: Vec<usize> = layers
        .iter()
        .map(|l| match unique.iter().position(|u| u == l) {
            Some(i) => i,
            None => {
                unique.push(*l);
                unique.len() - 1
            }
        })
        .collect();
    let outcomes = par::map(cfg.exec, &unique, |layer| {
        software::run(hw, layer, sw_budget, layer_seed(seed, layer), cfg, strategy)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let layers: Vec<SoftwareOutcome> = slot.iter().map(|&i| outcomes[i].clone()).collect();
    let total =
        layers.iter().map(|o| o.best.as_ref().map(|(_, r)| r.edp)).try_fold(0.0, |acc, e| e.map(|e| acc + e));
    Ok(HardwareEvaluation { feasible: total.is_some(), total_edp: total, layers })
}

/// Best summed EDP of `layers` on `hw`, each layer mapped by
/// [`software::software_search`](super::software_search). Any layer without a
/// feasible mapping makes the whole design infeasible.
pub fn hardware_objective(
    hw: &HardwareConfig,
    layers: &[LayerShape],
    sw_budget: usize,
    seed: u64,
    cfg: &SearchConfig,
) -> Result<HardwareEvaluation> {
    evaluate_hardware(hw, layers, sw_budget, seed, cfg, Strategy::Bayesian)
}

/// [`hardware_objective`] with random inner searches.
pub fn random_hardware_objective(
    hw: &HardwareConfig,
    layers: &[LayerShape],
    sw_budget: usize,
    seed: u64,
    cfg: &SearchConfig,
) -> Result<HardwareEvaluation> {
    evaluate_hardware(hw, layers, sw_budget, seed, cfg, Strategy::Random)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerChoice {
    pub label: String,
    pub mapping: Mapping,
    pub result: EdpResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestDesign {
    pub trial_index: usize,
    pub hardware: HardwareConfig,
    pub layers: Vec<LayerChoice>,
    pub total_edp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftwareTraceRecord {
    pub hw_trial: usize,
    pub layer: String,
    pub trace: OptimizationTrace<Mapping>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodesignResult {
    /// `None` when every hardware trial was infeasible.
    pub best: Option<BestDesign>,
    pub hw_trace: OptimizationTrace<HardwareConfig>,
    pub sw_traces: Vec<SoftwareTraceRecord>,
}

/// Joint search: BO over hardware, with a BO mapping search per layer
/// inside every hardware trial.
pub fn codesign(
    workload: &Workload,
    budget: &HardwareBudget,
    cfg: &CodesignConfig,
) -> Result<CodesignResult> {
    run(workload, budget, cfg, Strategy::Bayesian)
}

/// Constrained random search at both levels.
pub fn random_search_hw(
    workload: &Workload,
    budget: &HardwareBudget,
    cfg: &CodesignConfig,
) -> Result<CodesignResult> {
    run(workload, budget, cfg, Strategy::Random)
}

fn run(
    workload: &Workload,
    budget: &HardwareBudget,
    cfg: &CodesignConfig,
    strategy: Strategy,
) -> Result<CodesignResult> {
    if cfg.hw_trials == 0 {
        return Err(Error::param("hw_trials must be at least 1"));
    }
    budget.check()?;
    cfg.search.proposer.check()?;
    let shapes = workload.shapes();
    let search = &cfg.search;
    let cap = search.proposer.attempt_cap;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[HW_STREAM]));
    let objective_opts = FitOptions::new(KernelFamily::Linear).with_noise();
    let feasibility_opts = FitOptions::new(KernelFamily::SquaredExponential);

    let mut all_features = Vec::new();
    let mut labels = Vec::new();
    let mut feasible_features = Vec::new();
    let mut targets = Vec::new();
    let mut hw_trace = OptimizationTrace::default();
    let mut sw_traces = Vec::new();
    let mut best: Option<BestDesign> = None;

    for trial in 0..cfg.hw_trials {
        let sampler = |rng: &mut ChaCha8Rng| try_sample_hardware(budget, rng);
        let (hw, attempts) = if trial == 0 || strategy == Strategy::Random {
            first_feasible(sampler, &mut rng, cap)?
        } else {
            let objective = if feasible_features.is_empty() {
                None
            } else {
                fit(&feasible_features, &targets, &objective_opts).ok()
            };
            let constraints: Vec<_> =
                fit(&all_features, &labels, &feasibility_opts).ok().into_iter().collect();
            let p = propose(
                Surrogates { objective: objective.as_ref(), constraints: &constraints },
                hw_features,
                sampler,
                search.acquisition,
                &search.proposer,
                &mut rng,
                search.exec,
            )?;
            (p.point, p.attempts)
        };

        let sw_seed = derive_seed(cfg.seed, &[SW_STREAM, trial as u64]);
        let eval = evaluate_hardware(&hw, &shapes, cfg.sw_budget, sw_seed, search, strategy)?;
        let obs = eval.observation(trial, hw, attempts);

        let feats = hw_features(&hw);
        all_features.push(feats.clone());
        labels.push(if eval.feasible { 1.0 } else { -1.0 });
        if let Some(edp) = eval.total_edp {
            feasible_features.push(feats);
            targets.push(objective_of(edp));
            if best.as_ref().is_none_or(|b| edp < b.total_edp) {
                let layers = workload
                    .layers
                    .iter()
                    .zip(&eval.layers)
                    .map(|((label, _), o)| {
                        let (mapping, result) = o.best.clone().expect("feasible design maps every layer");
                        LayerChoice { label: label.clone(), mapping, result }
                    })
                    .collect();
                best = Some(BestDesign { trial_index: trial, hardware: hw, layers, total_edp: edp });
            }
        }
        for ((label, _), outcome) in workload.layers.iter().zip(eval.layers) {
            sw_traces.push(SoftwareTraceRecord {
                hw_trial: trial,
                layer: label.clone(),
                trace: outcome.trace,
            });
        }
        hw_trace.push(obs);
    }
    Ok(CodesignResult { best, hw_trace, sw_traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::ProposerConfig;
    use crate::cost_model::evaluate_edp;
    use crate::design_space::validate_hardware;
    use crate::workloads::builtin;

    fn quick() -> SearchConfig {
        SearchConfig {
            proposer: ProposerConfig { pool_size: 20, attempt_cap: 100_000 },
            ..Default::default()
        }
    }

    #[test]
    fn unit_layer_objective() {
        let layer = LayerShape::new(1, 1, 1, 1, 1, 1, 1).unwrap();
        let hw = HardwareConfig::default();
        let eval = hardware_objective(&hw, &[layer], 10, 3, &quick()).unwrap();
        let expected = evaluate_edp(&Mapping::all_ones(), &hw, &layer).unwrap().edp;
        assert_eq!(eval.total_edp, Some(expected));
    }

    #[test]
    fn identical_layers_add_up() {
        let layer = LayerShape::new(1, 4, 4, 3, 1, 4, 1).unwrap();
        let hw = HardwareConfig::default();
        let one = hardware_objective(&hw, &[layer], 15, 9, &quick()).unwrap();
        let two = hardware_objective(&hw, &[layer, layer], 15, 9, &quick()).unwrap();
        assert_eq!(two.total_edp, Some(2.0 * one.total_edp.unwrap()));
    }

    #[test]
    fn tiny_register_file_is_infeasible() {
        let layer = LayerShape::new(1, 2, 2, 3, 3, 2, 2).unwrap();
        let hw = HardwareConfig { rf_words: 2, ..Default::default() };
        let cfg = SearchConfig {
            proposer: ProposerConfig { pool_size: 5, attempt_cap: 2000 },
            ..Default::default()
        };
        let eval = hardware_objective(&hw, &[layer], 5, 0, &cfg).unwrap();
        assert!(!eval.feasible);
        assert_eq!(eval.observation(0, hw, 1).edp, None);
    }

    fn singleton_budget() -> HardwareBudget {
        HardwareBudget {
            pe_x_range: vec![12],
            pe_y_range: vec![14],
            rf_choices: vec![128],
            gb_choices: vec![65536],
            ..Default::default()
        }
    }

    #[test]
    fn singleton_hardware_space() {
        let w = builtin("toy1d").unwrap();
        let cfg = CodesignConfig { hw_trials: 3, sw_budget: 10, search: quick(), seed: 4 };
        let bo = codesign(&w, &singleton_budget(), &cfg).unwrap();
        let best = bo.best.clone().unwrap();
        assert_eq!(best.hardware, HardwareConfig::default());
        let eval = hardware_objective(
            &best.hardware,
            &w.shapes(),
            10,
            derive_seed(4, &[SW_STREAM, best.trial_index as u64]),
            &quick(),
        )
        .unwrap();
        assert_eq!(eval.total_edp, Some(best.total_edp));
    }

    #[test]
    fn codesign_is_seeded_and_consistent() {
        let w = builtin("toy1d").unwrap();
        let budget = HardwareBudget {
            pe_x_range: vec![1, 2, 4],
            pe_y_range: vec![1, 2, 4],
            rf_choices: vec![16, 64],
            gb_choices: vec![4096],
            ..Default::default()
        };
        let cfg = CodesignConfig { hw_trials: 6, sw_budget: 12, search: quick(), seed: 21 };
        for f in [codesign, random_search_hw] {
            let a = f(&w, &budget, &cfg).unwrap();
            assert_eq!(a, f(&w, &budget, &cfg).unwrap());
            assert_eq!(a.hw_trace.len(), 6);
            assert_eq!(a.sw_traces.len(), 6);
            let best = a.best.unwrap();
            let sum: f64 = best
                .layers
                .iter()
                .map(|l| evaluate_edp(&l.mapping, &best.hardware, &w.layers[0].1).unwrap().edp)
                .sum();
            assert_eq!(sum, best.total_edp);
            for o in &a.hw_trace.observations {
                assert!(validate_hardware(&o.point, &budget).feasible);
                if let Some(e) = o.edp {
                    assert!(best.total_edp <= e);
                }
            }
        }
    }
}
