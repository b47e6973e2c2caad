//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage or parse errors, 2 when the problem
//! is infeasible (the mapping violates a constraint, or no feasible point was
//! found).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::acquisition::{Acquisition, ProposerConfig};
use crate::cost_model::evaluate_edp;
use crate::design_space::{validate_mapping, EnergyTable, HardwareBudget, HardwareConfig, LayerShape};
use crate::error::{Error, Result};
use crate::optimizer::{
    codesign, random_search_hw, random_search_sw, software_search, CodesignConfig, CodesignResult,
    SearchConfig, SoftwareOutcome,
};
use crate::par::Execution;
use crate::report;
use crate::workloads::{builtin, load_workload, Workload, BUILTIN_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "codesign", version, about = "Bayesian hardware/mapping co-design for DNN accelerators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score one mapping with the cost model.
    Eval(EvalArgs),
    /// Search mappings of one layer on fixed hardware, BO against random.
    OptimizeSw(RunArgs),
    /// Nested hardware and mapping search over a workload.
    Codesign(RunArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Mapping JSON file.
    #[arg(long)]
    pub mapping: PathBuf,
    /// Hardware JSON file; the default 12x14 design when omitted.
    #[arg(long)]
    pub hardware: Option<PathBuf>,
    /// Built-in workload name or workload JSON file.
    #[arg(long)]
    pub workload: String,
    /// Layer label; may be omitted for single-layer workloads.
    #[arg(long)]
    pub layer: Option<String>,
    /// Energy per access as e_rf,e_gb,e_dram,e_mac.
    #[arg(long, value_parser = parse_energy)]
    pub energy: Option<EnergyTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AcqKind {
    Ei,
    Lcb,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Built-in workload name or workload JSON file.
    #[arg(long)]
    pub workload: String,
    /// Restrict to one layer (required by optimize-sw on multi-layer workloads).
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub hw_trials: u64,
    #[arg(long, default_value_t = 250, value_parser = clap::value_parser!(u64).range(1..))]
    pub sw_budget: u64,
    #[arg(long, value_enum, default_value_t = AcqKind::Lcb)]
    pub acq: AcqKind,
    /// LCB exploration weight.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 150, value_parser = clap::value_parser!(u64).range(1..))]
    pub pool_size: u64,
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub attempt_cap: u64,
    /// Also run the random-search baseline (codesign only; optimize-sw always does).
    #[arg(long)]
    pub baseline: bool,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Energy per access as e_rf,e_gb,e_dram,e_mac.
    #[arg(long, value_parser = parse_energy)]
    pub energy: Option<EnergyTable>,
    /// Hardware JSON file for optimize-sw.
    #[arg(long)]
    pub hardware: Option<PathBuf>,
    /// Hardware budget JSON file for codesign.
    #[arg(long)]
    pub budget: Option<PathBuf>,
    #[arg(long)]
    pub max_pes: Option<u64>,
    #[arg(long)]
    pub max_storage_words: Option<u64>,
    /// Score candidate pools and layers on one thread.
    #[arg(long)]
    pub sequential: bool,
}

fn parse_energy(s: &str) -> std::result::Result<EnergyTable, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [rf, gb, dram, mac] => EnergyTable::new(rf, gb, dram, mac).map_err(|e| e.to_string()),
        _ => Err(format!("expected 4 comma-separated values, got {}", parts.len())),
    }
}

/// Everything needed to rerun a search exactly.
#[derive(Debug, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub workload: String,
    pub layers: Vec<String>,
    pub seed: u64,
    pub hw_trials: Option<u64>,
    pub sw_budget: u64,
    pub acquisition: AcqKind,
    pub lambda: f64,
    pub pool_size: u64,
    pub attempt_cap: u64,
    pub baseline: bool,
    pub energy: EnergyTable,
    pub hardware: Option<HardwareConfig>,
    pub budget: Option<HardwareBudget>,
}

fn resolve_workload(source: &str) -> Result<Workload> {
    if BUILTIN_NAMES.contains(&source) {
        builtin(source)
    } else if Path::new(source).exists() {
        load_workload(source)
    } else {
        Err(Error::Parse(format!(
            "'{source}' is neither a built-in workload ({}) nor a file",
            BUILTIN_NAMES.join(", ")
        )))
    }
}

fn pick_layer(w: &Workload, label: Option<&str>) -> Result<(String, LayerShape)> {
    match (label, w.layers.as_slice()) {
        (Some(l), _) => w.select(l).map(|s| s.layers[0].clone()),
        (None, [only]) => Ok(only.clone()),
        (None, _) => Err(Error::param(format!("workload '{}' has several layers; pass --layer", w.name))),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) | Error::Exhausted { .. } => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::OptimizeSw(a) => cmd_optimize_sw(a),
        Command::Codesign(a) => cmd_codesign(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<i32> {
    let mapping = report::load_mapping(&a.mapping)?;
    let mut hw = match &a.hardware {
        Some(p) => report::load_hardware(p)?,
        None => HardwareConfig::default(),
    };
    if let Some(e) = a.energy {
        hw.energy = e;
    }
    let workload = resolve_workload(&a.workload)?;
    let (_, layer) = pick_layer(&workload, a.layer.as_deref())?;
    let check = validate_mapping(&mapping, &hw, &layer);
    if !check.feasible {
        report::print_json(&serde_json::to_value(&check).expect("report serializes"))?;
        return Ok(EXIT_INFEASIBLE);
    }
    report::print_json(&report::edp_to_value(&evaluate_edp(&mapping, &hw, &layer)?))?;
    Ok(EXIT_OK)
}

fn search_config(a: &RunArgs) -> Result<SearchConfig> {
    let acquisition = match a.acq {
        AcqKind::Ei => Acquisition::Ei,
        AcqKind::Lcb => Acquisition::Lcb { lambda: a.lambda },
    };
    acquisition.check()?;
    Ok(SearchConfig {
        acquisition,
        proposer: ProposerConfig { pool_size: a.pool_size as usize, attempt_cap: a.attempt_cap },
        exec: if a.sequential { Execution::Sequential } else { Execution::default() },
    })
}

fn run_config(a: &RunArgs, command: &'static str, workload: &Workload, energy: EnergyTable) -> RunConfig {
    RunConfig {
        command,
        workload: a.workload.clone(),
        layers: workload.layers.iter().map(|(l, _)| l.clone()).collect(),
        seed: a.seed,
        hw_trials: None,
        sw_budget: a.sw_budget,
        acquisition: a.acq,
        lambda: a.lambda,
        pool_size: a.pool_size,
        attempt_cap: a.attempt_cap,
        baseline: a.baseline,
        energy,
        hardware: None,
        budget: None,
    }
}

fn outcome_summary(o: &SoftwareOutcome, budget: u64) -> Value {
    let best = o
        .best
        .as_ref()
        .map(|(m, r)| json!({"mapping": report::mapping_to_value(m), "result": report::edp_to_value(r)}));
    json!({
        "best_edp": o.trace.best_edp(),
        "best": best,
        "trials": o.trace.len(),
        "sampler_attempts": o.trace.total_attempts(),
        // the sampler ran dry before the budget was spent
        "exhausted": (o.trace.len() as u64) < budget,
    })
}

pub fn cmd_optimize_sw(a: &RunArgs) -> Result<i32> {
    let cfg = search_config(a)?;
    let mut hw = match &a.hardware {
        Some(p) => report::load_hardware(p)?,
        None => HardwareConfig::default(),
    };
    if let Some(e) = a.energy {
        hw.energy = e;
    }
    let workload = resolve_workload(&a.workload)?;
    let (label, layer) = pick_layer(&workload, a.layer.as_deref())?;
    let budget = a.sw_budget as usize;
    let bo = software_search(&hw, &layer, budget, a.seed, &cfg)?;
    let random = random_search_sw(&hw, &layer, budget, a.seed, &cfg)?;

    let mut config = run_config(a, "optimize-sw", &workload, hw.energy);
    config.layers = vec![label.clone()];
    config.hardware = Some(hw);
    std::fs::create_dir_all(&a.out)?;
    report::write_trace_csv(&a.out.join("bo.csv"), &bo.trace)?;
    report::write_trace_csv(&a.out.join("random.csv"), &random.trace)?;
    report::write_json(&a.out.join("config.json"), &config)?;
    let summary = json!({
        "layer": label,
        "seed": a.seed,
        "bo": outcome_summary(&bo, a.sw_budget),
        "random": outcome_summary(&random, a.sw_budget),
        "config": config,
    });
    report::write_json(&a.out.join("summary.json"), &summary)?;
    if bo.best.is_none() || random.best.is_none() {
        eprintln!("error: no feasible mapping of layer '{label}' on this hardware");
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(EXIT_OK)
}

fn resolve_budget(a: &RunArgs) -> Result<HardwareBudget> {
    let mut budget = match &a.budget {
        Some(p) => report::load_budget(p)?,
        None => HardwareBudget::default(),
    };
    if let Some(v) = a.max_pes {
        budget.max_pes = v;
    }
    if let Some(v) = a.max_storage_words {
        budget.max_storage_words = v;
    }
    if let Some(e) = a.energy {
        budget.energy = e;
    }
    budget.check()?;
    Ok(budget)
}

fn write_codesign(dir: &Path, prefix: &str, r: &CodesignResult) -> Result<Value> {
    report::write_hw_trace_csv(&dir.join(format!("{prefix}hw_trace.csv")), &r.hw_trace)?;
    report::write_sw_traces_csv(
        &dir.join(format!("{prefix}sw_traces.csv")),
        r.sw_traces.iter().map(|t| (t.hw_trial, t.layer.as_str(), &t.trace)),
    )?;
    let best = r.best.as_ref().map(|b| {
        json!({
            "hw_trial": b.trial_index + 1,
            "hardware": b.hardware,
            "total_edp": b.total_edp,
            "layers": b.layers.iter().map(|l| json!({
                "label": l.label,
                "mapping": report::mapping_to_value(&l.mapping),
                "result": report::edp_to_value(&l.result),
            })).collect::<Vec<_>>(),
        })
    });
    report::write_json(&dir.join(format!("{prefix}best.json")), &best)?;
    let feasible = r.hw_trace.observations.iter().filter(|o| o.feasible).count();
    Ok(json!({
        "best_edp": r.hw_trace.best_edp(),
        "hw_trials": r.hw_trace.len(),
        "feasible_hw_trials": feasible,
        "sampler_attempts": r.hw_trace.total_attempts(),
    }))
}

pub fn cmd_codesign(a: &RunArgs) -> Result<i32> {
    let search = search_config(a)?;
    let budget = resolve_budget(a)?;
    let mut workload = resolve_workload(&a.workload)?;
    if let Some(l) = &a.layer {
        workload = workload.select(l)?;
    }
    let cfg = CodesignConfig {
        hw_trials: a.hw_trials as usize,
        sw_budget: a.sw_budget as usize,
        search,
        seed: a.seed,
    };
    let bo = codesign(&workload, &budget, &cfg)?;
    let random = if a.baseline { Some(random_search_hw(&workload, &budget, &cfg)?) } else { None };

    let mut config = run_config(a, "codesign", &workload, budget.energy);
    config.hw_trials = Some(a.hw_trials);
    config.budget = Some(budget);
    std::fs::create_dir_all(&a.out)?;
    report::write_json(&a.out.join("config.json"), &config)?;
    let mut summary =
        json!({"workload": workload.name, "seed": a.seed, "bo": write_codesign(&a.out, "", &bo)?});
    if let Some(r) = &random {
        summary["random"] = write_codesign(&a.out, "random_", r)?;
    }
    summary["config"] = serde_json::to_value(&config).expect("config serializes");
    report::write_json(&a.out.join("summary.json"), &summary)?;
    if bo.best.is_none() {
        eprintln!("error: every hardware trial was infeasible");
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(EXIT_OK)
}
