//! Built-in layer tables and workload files.
//!
//! Layer tables are representative reconstructions from the public model
//! definitions, not transcriptions of any published layer list. Dense layers
//! use the 7-loop form with the reduction on `C` and rows on `P`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design_space::LayerShape;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub name: String,
    /// `(label, shape)` pairs, labels unique.
    pub layers: Vec<(String, LayerShape)>,
}

impl Workload {
    pub fn new(name: impl Into<String>, layers: Vec<(String, LayerShape)>) -> Result<Self> {
        let w = Workload { name: name.into(), layers };
        w.check()?;
        Ok(w)
    }

    fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation(format!("workload '{}' has no layers", self.name)));
        }
        let mut seen = HashSet::new();
        for (label, _) in &self.layers {
            if !seen.insert(label.as_str()) {
                return Err(Error::Validation(format!("duplicate layer label '{label}'")));
            }
        }
        Ok(())
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.layers.iter().map(|(_, l)| *l).collect()
    }

    pub fn layer(&self, label: &str) -> Option<&LayerShape> {
        self.layers.iter().find(|(l, _)| l == label).map(|(_, s)| s)
    }

    /// Workload restricted to one labeled layer.
    pub fn select(&self, label: &str) -> Result<Workload> {
        let shape = self
            .layer(label)
            .ok_or_else(|| Error::param(format!("workload '{}' has no layer '{label}'", self.name)))?;
        Ok(Workload { name: self.name.clone(), layers: vec![(label.to_string(), *shape)] })
    }
}

/// A dense `m x k_in` by `k_in x n_out` product as a 7-loop layer.
pub fn matmul_layer(m: u64, n_out: u64, k_in: u64) -> Result<LayerShape> {
    if m == 0 || n_out == 0 || k_in == 0 {
        return Err(Error::param("matmul dimensions must be at least 1"));
    }
    LayerShape::new(1, n_out, k_in, 1, 1, m, 1)
}

pub const BUILTIN_NAMES: [&str; 5] = ["resnet18-mini", "dqn", "mlp", "transformer-mini", "toy1d"];

fn conv(label: &str, b: [u64; 7]) -> (String, LayerShape) {
    (label.to_string(), LayerShape::from_bounds(b).expect("builtin shape"))
}

fn dense(label: &str, m: u64, n_out: u64, k_in: u64) -> (String, LayerShape) {
    (label.to_string(), matmul_layer(m, n_out, k_in).expect("builtin shape"))
}

pub fn builtin(name: &str) -> Result<Workload> {
    let layers = match name {
        // one 3x3 layer per ResNet-18 stage
        "resnet18-mini" => vec![
            conv("conv2_x", [1, 64, 64, 3, 3, 56, 56]),
            conv("conv3_x", [1, 128, 128, 3, 3, 28, 28]),
            conv("conv4_x", [1, 256, 256, 3, 3, 14, 14]),
            conv("conv5_x", [1, 512, 512, 3, 3, 7, 7]),
        ],
        // Atari DQN on 84x84x4 frames
        "dqn" => vec![
            conv("conv1", [1, 32, 4, 8, 8, 20, 20]),
            conv("conv2", [1, 64, 32, 4, 4, 9, 9]),
            conv("conv3", [1, 64, 64, 3, 3, 7, 7]),
            dense("fc1", 1, 512, 3136),
        ],
        "mlp" => vec![dense("fc1", 64, 512, 784), dense("fc2", 64, 512, 512), dense("fc3", 64, 10, 512)],
        // one encoder block, 128 tokens, d_model 512
        "transformer-mini" => vec![
            dense("qkv", 128, 1536, 512),
            dense("out", 128, 512, 512),
            dense("ffn1", 128, 2048, 512),
            dense("ffn2", 128, 512, 2048),
        ],
        "toy1d" => vec![conv("toy", [1, 1, 4, 3, 1, 4, 1])],
        _ => {
            return Err(Error::param(format!(
                "unknown workload '{name}' (expected one of {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    Ok(Workload { name: name.to_string(), layers })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    label: String,
    n: u64,
    k: u64,
    c: u64,
    r: u64,
    s: u64,
    p: u64,
    q: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFile {
    name: String,
    layers: Vec<LayerRecord>,
}

pub fn parse_workload(text: &str) -> Result<Workload> {
    let file: WorkloadFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let layers = file
        .layers
        .into_iter()
        .map(|r| {
            LayerShape::new(r.n, r.k, r.c, r.r, r.s, r.p, r.q)
                .map(|shape| (r.label.clone(), shape))
                .map_err(|e| Error::Validation(format!("layer '{}': {e}", r.label)))
        })
        .collect::<Result<Vec<_>>>()?;
    Workload::new(file.name, layers)
}

pub fn load_workload(path: impl AsRef<Path>) -> Result<Workload> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_workload(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn workload_to_json(w: &Workload) -> String {
    let file = WorkloadFile {
        name: w.name.clone(),
        layers: w
            .layers
            .iter()
            .map(|(label, s)| {
                let [n, k, c, r, s_, p, q] = s.bounds();
                LayerRecord { label: label.clone(), n, k, c, r, s: s_, p, q }
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("workload serializes")
}

pub fn save_workload(w: &Workload, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, workload_to_json(w))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matmul_embedding() {
        let l = matmul_layer(64, 512, 784).unwrap();
        assert_eq!(l.bounds(), [1, 512, 784, 1, 1, 64, 1]);
        assert_eq!(l.macs(), 64 * 512 * 784);
        assert!(matmul_layer(0, 1, 1).is_err());
    }

    #[test]
    fn builtins() {
        for name in BUILTIN_NAMES {
            let w = builtin(name).unwrap();
            assert!(w.check().is_ok());
        }
        let r = builtin("resnet18-mini").unwrap();
        assert_eq!(r.layer("conv2_x").unwrap().bounds(), [1, 64, 64, 3, 3, 56, 56]);
        assert_eq!(builtin("toy1d").unwrap().layers[0].1.bounds(), [1, 1, 4, 3, 1, 4, 1]);
        assert!(matches!(builtin("vgg"), Err(Error::Parameter(_))));
    }

    #[test]
    fn file_examples() {
        let w = parse_workload(
            r#"{"name":"unit","layers":[{"label":"a","n":1,"k":1,"c":1,"r":1,"s":1,"p":1,"q":1}]}"#,
        )
        .unwrap();
        assert_eq!(w.layers.len(), 1);

        let dup = r#"{"name":"d","layers":[
            {"label":"a","n":1,"k":1,"c":1,"r":1,"s":1,"p":1,"q":1},
            {"label":"a","n":1,"k":2,"c":1,"r":1,"s":1,"p":1,"q":1}]}"#;
        assert!(matches!(parse_workload(dup), Err(Error::Validation(m)) if m.contains("'a'")));

        let zero = r#"{"name":"z","layers":[{"label":"bad","n":1,"k":0,"c":1,"r":1,"s":1,"p":1,"q":1}]}"#;
        assert!(matches!(parse_workload(zero), Err(Error::Validation(m)) if m.contains("bad")));

        assert!(matches!(parse_workload(r#"{"name":"e","layers":[]}"#), Err(Error::Validation(_))));

        let err = parse_workload("{\"name\": \"x\",\n \"layers\": [{\"label\": 3}]}").unwrap_err();
        assert!(matches!(&err, Error::Parse(m) if m.contains("line 2")), "{err}");
    }

    #[test]
    fn file_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let w = builtin("dqn").unwrap();
        save_workload(&w, &path).unwrap();
        assert_eq!(load_workload(&path).unwrap(), w);
    }

    proptest! {
        #[test]
        fn json_round_trip(
            name in "[a-z0-9_-]{0,12}",
            bounds in prop::collection::vec(prop::array::uniform7(1u64..100), 1..6),
        ) {
            let layers = bounds
                .iter()
                .enumerate()
                .map(|(i, b)| (format!("layer{i}"), LayerShape::from_bounds(*b).unwrap()))
                .collect();
            let w = Workload::new(name, layers).unwrap();
            prop_assert_eq!(parse_workload(&workload_to_json(&w)).unwrap(), w);
        }
    }
}
