use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hwsw_codesign::acquisition::{score_pool, Acquisition, ProposerConfig, Surrogates};
use hwsw_codesign::cost_model::evaluate_edp;
use hwsw_codesign::design_space::{sw_features, HardwareConfig, LayerShape, MappingSampler};
use hwsw_codesign::gp::{fit, FitOptions, KernelFamily};
use hwsw_codesign::optimizer::{hardware_objective, objective_of, SearchConfig};
use hwsw_codesign::par::{self, Execution};
use hwsw_codesign::workloads::builtin;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] =
    [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn conv2_x() -> LayerShape {
    *builtin("resnet18-mini").unwrap().layer("conv2_x").unwrap()
}

fn pool_scoring(c: &mut Criterion) {
    let hw = HardwareConfig::default();
    let layer = conv2_x();
    let sampler = MappingSampler::new(&layer, &hw);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let train: Vec<_> = (0..200).map(|_| sampler.sample(&mut rng, 1_000_000).unwrap()).collect();
    let x: Vec<_> = train.iter().map(|m| sw_features(m, &hw, &layer)).collect();
    let y: Vec<_> = train.iter().map(|m| objective_of(evaluate_edp(m, &hw, &layer).unwrap().edp)).collect();
    let model = fit(&x, &y, &FitOptions::new(KernelFamily::Linear)).unwrap();
    // a classifier on the first 60 points stands in for a feasibility model
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let labels: Vec<_> = y[..60].iter().map(|v| if *v > sorted[100] { 1.0 } else { -1.0 }).collect();
    let classifier = fit(&x[..60], &labels, &FitOptions::new(KernelFamily::SquaredExponential)).unwrap();
    let constraints = [classifier];
    let pool: Vec<_> =
        (0..150).map(|_| sw_features(&sampler.sample(&mut rng, 1_000_000).unwrap(), &hw, &layer)).collect();

    let mut g = c.benchmark_group("score_pool");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let s = Surrogates { objective: Some(&model), constraints: &constraints };
                score_pool(black_box(&pool), s, Acquisition::default(), exec).unwrap()
            })
        });
    }
    g.finish();
}

fn batch_edp(c: &mut Criterion) {
    let hw = HardwareConfig::default();
    let layer = conv2_x();
    let sampler = MappingSampler::new(&layer, &hw);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mappings: Vec<_> = (0..4096).map(|_| sampler.sample(&mut rng, 1_000_000).unwrap()).collect();

    let mut g = c.benchmark_group("evaluate_edp_batch");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::map(exec, black_box(&mappings), |m| evaluate_edp(m, &hw, &layer).unwrap().edp))
        });
    }
    g.finish();
}

fn layer_fanout(c: &mut Criterion) {
    let hw = HardwareConfig::default();
    let shapes = builtin("dqn").unwrap().shapes();
    let mut g = c.benchmark_group("hardware_objective");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SearchConfig {
            exec,
            proposer: ProposerConfig { pool_size: 150, attempt_cap: 1_000_000 },
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| hardware_objective(&hw, black_box(&shapes), 20, 0, &cfg).unwrap().total_edp)
        });
    }
    g.finish();
}

criterion_group!(benches, pool_scoring, batch_edp, layer_fanout);
criterion_main!(benches);
