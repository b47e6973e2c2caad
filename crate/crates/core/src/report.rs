//! File formats: mapping and hardware JSON, trace CSVs.
//!
//! Mapping files key temporal factors by dim letter and then level name,
//! spatial factors by dim letter, and loop orders by level name (outermost
//! loop first):
//!
//! ```json
//! {"temporal": {"C": {"L0": 1, "L1": 4, "L2": 1}, "R": {"L0": 3}},
//!  "spatial": {"P": 4},
//!  "perm": {"L1": ["N", "K", "C", "R", "S", "P", "Q"]}}
//! ```
//!
//! Omitted factors are 1 and omitted orders are `N K C R S P Q`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::cost_model::EdpResult;
use crate::design_space::{Dim, HardwareBudget, HardwareConfig, Level, Mapping, Permutation};
use crate::error::{Error, Result};
use crate::optimizer::{normalize_trace, OptimizationTrace};

pub const TRACE_COLUMNS: [&str; 6] = ["trial", "feasible", "edp", "best_edp", "normalized_curve", "attempts"];

fn dim_of(letter: &str) -> Result<Dim> {
    Dim::ALL
        .into_iter()
        .find(|d| d.letter() == letter)
        .ok_or_else(|| Error::Parse(format!("unknown dim '{letter}'")))
}

fn level_of(name: &str) -> Result<Level> {
    Level::ALL
        .into_iter()
        .find(|l| l.to_string() == name)
        .ok_or_else(|| Error::Parse(format!("unknown level '{name}'")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingFile {
    #[serde(default)]
    temporal: BTreeMap<String, BTreeMap<String, u64>>,
    #[serde(default)]
    spatial: BTreeMap<String, u64>,
    #[serde(default)]
    perm: BTreeMap<String, Vec<String>>,
}

pub fn parse_mapping(text: &str) -> Result<Mapping> {
    let file: MappingFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut m = Mapping::all_ones();
    for (d, levels) in &file.temporal {
        let d = dim_of(d)?;
        for (l, &f) in levels {
            m.temporal[d.index()][level_of(l)?.index()] = f;
        }
    }
    for (d, &f) in &file.spatial {
        m.spatial[dim_of(d)?.index()] = f;
    }
    for (l, order) in &file.perm {
        let level = level_of(l)?;
        let dims = order.iter().map(|s| dim_of(s)).collect::<Result<Vec<_>>>()?;
        let dims: [Dim; 7] = dims
            .try_into()
            .map_err(|_| Error::Parse(format!("loop order for {level} must list all 7 dims")))?;
        m.perm[level.index()] =
            Permutation::new(dims).map_err(|e| Error::Parse(format!("loop order for {level}: {e}")))?;
    }
    if m.temporal.iter().flatten().chain(&m.spatial).any(|&f| f == 0) {
        return Err(Error::Parse("mapping factors must be at least 1".into()));
    }
    Ok(m)
}

/// JSON value with every factor and order written out.
pub fn mapping_to_value(m: &Mapping) -> Value {
    let mut temporal = Map::new();
    let mut spatial = Map::new();
    for d in Dim::ALL {
        let mut levels = Map::new();
        for l in Level::ALL {
            levels.insert(l.to_string(), json!(m.factor(d, l)));
        }
        temporal.insert(d.letter().into(), Value::Object(levels));
        spatial.insert(d.letter().into(), json!(m.spatial[d.index()]));
    }
    let mut perm = Map::new();
    for l in Level::ALL {
        let order: Vec<_> = m.perm[l.index()].order().iter().map(|d| d.letter()).collect();
        perm.insert(l.to_string(), json!(order));
    }
    json!({"temporal": temporal, "spatial": spatial, "perm": perm})
}

pub fn mapping_to_json(m: &Mapping) -> String {
    serde_json::to_string_pretty(&mapping_to_value(m)).expect("mapping serializes")
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn load_mapping(path: &Path) -> Result<Mapping> {
    with_path(path, parse_mapping(&read(path)?))
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_hardware(text: &str) -> Result<HardwareConfig> {
    let hw: HardwareConfig = parse_json(text)?;
    hw.check().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(hw)
}

pub fn load_hardware(path: &Path) -> Result<HardwareConfig> {
    with_path(path, parse_hardware(&read(path)?))
}

pub fn load_budget(path: &Path) -> Result<HardwareBudget> {
    let budget: HardwareBudget = with_path(path, parse_json(&read(path)?))?;
    budget.check().map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(budget)
}

pub fn edp_to_value(r: &EdpResult) -> Value {
    let names = ["weights", "inputs", "outputs"];
    let mut levels = Map::new();
    for l in Level::ALL {
        let mut row = Map::new();
        for (t, name) in names.iter().enumerate() {
            row.insert((*name).into(), json!(r.per_level_accesses.words[l.index()][t]));
        }
        levels.insert(l.to_string(), Value::Object(row));
    }
    json!({"energy": r.energy, "cycles": r.cycles, "edp": r.edp, "per_level_accesses": levels})
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Trace rows in [`TRACE_COLUMNS`] order, trials numbered from 1. The
/// normalized column is empty when no trial was feasible.
pub fn trace_rows<P>(trace: &OptimizationTrace<P>) -> Vec<[String; 6]> {
    let curve = normalize_trace(trace).ok();
    trace
        .observations
        .iter()
        .zip(&trace.best_so_far)
        .enumerate()
        .map(|(i, (o, best))| {
            [
                (i + 1).to_string(),
                o.feasible.to_string(),
                opt(o.edp),
                opt(*best),
                opt(curve.as_ref().map(|c| c[i])),
                o.attempts.to_string(),
            ]
        })
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.into())
}

pub fn write_trace_csv<P>(path: &Path, trace: &OptimizationTrace<P>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    for row in trace_rows(trace) {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Hardware trace: the trace columns followed by the four design parameters.
pub fn write_hw_trace_csv(path: &Path, trace: &OptimizationTrace<HardwareConfig>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let header = TRACE_COLUMNS.iter().copied().chain(["pe_x", "pe_y", "rf_words", "gb_words"]);
    w.write_record(header).map_err(csv_err)?;
    for (row, o) in trace_rows(trace).into_iter().zip(&trace.observations) {
        let hw = &o.point;
        let extra = [hw.pe_x, hw.pe_y, hw.rf_words, hw.gb_words].map(|v| v.to_string());
        w.write_record(row.iter().chain(&extra)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// All inner searches of a run, keyed by hardware trial (from 1) and layer.
pub fn write_sw_traces_csv<'a, P: 'a>(
    path: &Path,
    traces: impl IntoIterator<Item = (usize, &'a str, &'a OptimizationTrace<P>)>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let header = ["hw_trial", "layer"].into_iter().chain(TRACE_COLUMNS);
    w.write_record(header).map_err(csv_err)?;
    for (hw_trial, layer, trace) in traces {
        for row in trace_rows(trace) {
            let lead = [(hw_trial + 1).to_string(), layer.to_string()];
            w.write_record(lead.iter().chain(&row)).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Pretty-prints `value` on standard output.
pub fn print_json(value: &Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value).expect("value serializes"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::Observation;

    #[test]
    fn mapping_round_trip() {
        let mut m = Mapping::all_ones();
        m.temporal[Dim::C.index()] = [2, 2, 1];
        m.spatial[Dim::P.index()] = 4;
        m.perm[1] = Permutation::new([Dim::Q, Dim::P, Dim::S, Dim::R, Dim::C, Dim::K, Dim::N]).unwrap();
        assert_eq!(parse_mapping(&mapping_to_json(&m)).unwrap(), m);
    }

    #[test]
    fn sparse_mapping_defaults() {
        let m = parse_mapping(r#"{"temporal": {"C": {"L1": 4}}, "spatial": {"P": 4}}"#).unwrap();
        assert_eq!(m.factor(Dim::C, Level::L1), 4);
        assert_eq!(m.factor(Dim::C, Level::L0), 1);
        assert_eq!(m.spatial_product(), 4);
        assert_eq!(m.perm, [Permutation::identity(); 3]);
    }

    #[test]
    fn mapping_errors() {
        for bad in [
            r#"{"temporal": {"X": {"L0": 1}}}"#,
            r#"{"temporal": {"C": {"L3": 1}}}"#,
            r#"{"spatial": {"C": 0}}"#,
            r#"{"perm": {"L0": ["N", "K"]}}"#,
            r#"{"perm": {"L0": ["N", "N", "C", "R", "S", "P", "Q"]}}"#,
            r#"{"tiles": {}}"#,
            "{",
        ] {
            assert!(matches!(parse_mapping(bad), Err(Error::Parse(_))), "{bad}");
        }
    }

    #[test]
    fn hardware_fields() {
        let hw = parse_hardware(r#"{"pe_x": 12, "pe_y": 14, "rf_words": 128, "gb_words": 65536}"#).unwrap();
        assert_eq!(hw, HardwareConfig::default());
        assert!(parse_hardware(r#"{"pe_x": 0, "pe_y": 1, "rf_words": 1, "gb_words": 1}"#).is_err());
        assert!(parse_hardware(r#"{"pe_x": 1}"#).is_err());
    }

    #[test]
    fn csv_rows() {
        let mut t = OptimizationTrace::default();
        t.push(Observation::<()>::infeasible(0, (), 3));
        t.push(Observation::feasible(1, (), 8.0, 1));
        t.push(Observation::feasible(2, (), 4.0, 2));
        let rows = trace_rows(&t);
        assert_eq!(rows[0], ["1", "false", "", "", "0", "3"].map(String::from));
        assert_eq!(rows[1], ["2", "true", "8", "8", "0.5", "1"].map(String::from));
        assert_eq!(rows[2][4], "1");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trace_csv(&path, &t).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "trial,feasible,edp,best_edp,normalized_curve,attempts");
        assert_eq!(text.lines().count(), 4);
    }
}
