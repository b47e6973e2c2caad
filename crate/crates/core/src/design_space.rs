//! Hardware and software parameter spaces.
//!
//! A layer is the seven-deep convolution loop nest over `N K C R S P Q`. A
//! [`Mapping`] splits every loop bound into one spatial factor (unrolled over
//! the PE array) and three temporal factors, one per memory level
//! (`L0` register file, `L1` global buffer, `L2` DRAM), and fixes a loop
//! order inside each level. Known constraints are checked here and random
//! feasible points are produced by rejection.

use std::fmt;
use std::sync::{Arc, LazyLock};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost_model;
use crate::error::{Error, Result};

/// Loop dimensions of the convolution nest, in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dim {
    N,
    K,
    C,
    R,
    S,
    P,
    Q,
}

impl Dim {
    pub const ALL: [Dim; 7] = [Dim::N, Dim::K, Dim::C, Dim::R, Dim::S, Dim::P, Dim::Q];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> &'static str {
        match self {
            Dim::N => "N",
            Dim::K => "K",
            Dim::C => "C",
            Dim::R => "R",
            Dim::S => "S",
            Dim::P => "P",
            Dim::Q => "Q",
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

/// Memory levels, innermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    L0,
    L1,
    L2,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::L0, Level::L1, Level::L2];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct LayerShapeRaw {
    n: u64,
    k: u64,
    c: u64,
    r: u64,
    s: u64,
    p: u64,
    q: u64,
}

/// Loop bounds of one convolution (or matmul embedded as a convolution).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "LayerShapeRaw", into = "LayerShapeRaw")]
pub struct LayerShape {
    bounds: [u64; 7],
}

impl TryFrom<LayerShapeRaw> for LayerShape {
    type Error = Error;

    fn try_from(r: LayerShapeRaw) -> Result<Self> {
        LayerShape::new(r.n, r.k, r.c, r.r, r.s, r.p, r.q)
    }
}

impl From<LayerShape> for LayerShapeRaw {
    fn from(l: LayerShape) -> Self {
        let [n, k, c, r, s, p, q] = l.bounds;
        LayerShapeRaw { n, k, c, r, s, p, q }
    }
}

impl LayerShape {
    /// Arguments follow the dimension order `N K C R S P Q`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(n: u64, k: u64, c: u64, r: u64, s: u64, p: u64, q: u64) -> Result<Self> {
        Self::from_bounds([n, k, c, r, s, p, q])
    }

    pub fn from_bounds(bounds: [u64; 7]) -> Result<Self> {
        if let Some(d) = Dim::ALL.iter().find(|d| bounds[d.index()] == 0) {
            return Err(Error::param(format!("loop bound {d} must be at least 1")));
        }
        bounds
            .iter()
            .try_fold(1u64, |acc, &b| acc.checked_mul(b))
            .ok_or_else(|| Error::param("total MAC count overflows 64 bits"))?;
        Ok(LayerShape { bounds })
    }

    pub fn bound(&self, d: Dim) -> u64 {
        self.bounds[d.index()]
    }

    pub fn bounds(&self) -> [u64; 7] {
        self.bounds
    }

    pub fn macs(&self) -> u64 {
        // overflow is ruled out at construction
        self.bounds.iter().product()
    }
}

/// Energy per word access at each level and per MAC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTable {
    pub e_rf: f64,
    pub e_gb: f64,
    pub e_dram: f64,
    pub e_mac: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        EnergyTable { e_rf: 1.0, e_gb: 6.0, e_dram: 200.0, e_mac: 1.0 }
    }
}

impl EnergyTable {
    pub fn new(e_rf: f64, e_gb: f64, e_dram: f64, e_mac: f64) -> Result<Self> {
        let t = EnergyTable { e_rf, e_gb, e_dram, e_mac };
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<()> {
        let all = [self.e_rf, self.e_gb, self.e_dram, self.e_mac];
        if all.iter().all(|e| e.is_finite() && *e >= 0.0) {
            Ok(())
        } else {
            Err(Error::param("energy coefficients must be finite and nonnegative"))
        }
    }

    pub fn per_level(&self, level: Level) -> f64 {
        match level {
            Level::L0 => self.e_rf,
            Level::L1 => self.e_gb,
            Level::L2 => self.e_dram,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub pe_x: u64,
    pub pe_y: u64,
    pub rf_words: u64,
    pub gb_words: u64,
    #[serde(default)]
    pub energy: EnergyTable,
}

impl Default for HardwareConfig {
    /// A 12x14 array with 128-word register files and a 64K-word buffer.
    fn default() -> Self {
        HardwareConfig { pe_x: 12, pe_y: 14, rf_words: 128, gb_words: 65536, energy: EnergyTable::default() }
    }
}

impl HardwareConfig {
    pub fn check(&self) -> Result<()> {
        if self.pe_x == 0 || self.pe_y == 0 || self.rf_words == 0 || self.gb_words == 0 {
            return Err(Error::param("hardware parameters must be at least 1"));
        }
        self.energy.check()
    }

    pub fn num_pes(&self) -> u64 {
        self.pe_x.saturating_mul(self.pe_y)
    }
}

/// Compute/storage budget plus the discrete candidate values for each
/// hardware parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareBudget {
    pub max_pes: u64,
    pub max_storage_words: u64,
    pub pe_x_range: Vec<u64>,
    pub pe_y_range: Vec<u64>,
    pub rf_choices: Vec<u64>,
    pub gb_choices: Vec<u64>,
    /// Energy table attached to every sampled configuration.
    #[serde(default)]
    pub energy: EnergyTable,
}

pub const DEFAULT_MAX_PES: u64 = 168;
pub const DEFAULT_MAX_STORAGE_WORDS: u64 = 168 * 128 + 65536;

impl Default for HardwareBudget {
    fn default() -> Self {
        HardwareBudget {
            max_pes: DEFAULT_MAX_PES,
            max_storage_words: DEFAULT_MAX_STORAGE_WORDS,
            pe_x_range: (1..=32).collect(),
            pe_y_range: (1..=32).collect(),
            rf_choices: (4..=10).map(|e| 1u64 << e).collect(),
            gb_choices: (12..=20).map(|e| 1u64 << e).collect(),
            energy: EnergyTable::default(),
        }
    }
}

impl HardwareBudget {
    pub fn check(&self) -> Result<()> {
        if self.max_pes == 0 || self.max_storage_words == 0 {
            return Err(Error::param("budget limits must be at least 1"));
        }
        let sets = [
            ("pe_x_range", &self.pe_x_range),
            ("pe_y_range", &self.pe_y_range),
            ("rf_choices", &self.rf_choices),
            ("gb_choices", &self.gb_choices),
        ];
        for (name, set) in sets {
            if set.is_empty() || set.contains(&0) {
                return Err(Error::param(format!("{name} must be nonempty and positive")));
            }
        }
        self.energy.check()
    }
}

/// A total order over the seven dims, outermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Permutation([Dim; 7]);

impl Permutation {
    pub fn new(order: [Dim; 7]) -> Result<Self> {
        let mut seen = [false; 7];
        for d in order {
            if std::mem::replace(&mut seen[d.index()], true) {
                return Err(Error::param(format!("dim {d} repeated in loop order")));
            }
        }
        Ok(Permutation(order))
    }

    pub fn identity() -> Self {
        Permutation(Dim::ALL)
    }

    pub fn order(&self) -> &[Dim; 7] {
        &self.0
    }

    /// Position of `d`, 0 for the outermost loop.
    pub fn depth(&self, d: Dim) -> usize {
        self.0.iter().position(|&x| x == d).expect("permutation covers every dim")
    }
}

impl Default for Permutation {
    fn default() -> Self {
        Self::identity()
    }
}

/// One layer's schedule: tiling factors, spatial factors and loop orders.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mapping {
    /// `temporal[d][level]`
    pub temporal: [[u64; 3]; 7],
    pub spatial: [u64; 7],
    /// One loop order per level, indexed by [`Level::index`].
    pub perm: [Permutation; 3],
}

impl Mapping {
    /// The single-tile mapping: every factor 1.
    pub fn all_ones() -> Self {
        Mapping { temporal: [[1; 3]; 7], spatial: [1; 7], perm: [Permutation::identity(); 3] }
    }

    /// Whole layer resident at `L0` of a single PE.
    pub fn single_pe(layer: &LayerShape) -> Self {
        let mut m = Self::all_ones();
        for d in Dim::ALL {
            m.temporal[d.index()][0] = layer.bound(d);
        }
        m
    }

    pub fn factor(&self, d: Dim, level: Level) -> u64 {
        self.temporal[d.index()][level.index()]
    }

    pub fn spatial_product(&self) -> u64 {
        self.spatial.iter().fold(1u64, |a, &s| a.saturating_mul(s))
    }

    /// Product of spatial and temporal factors along `d`, saturating.
    pub fn dim_product(&self, d: Dim) -> u64 {
        self.temporal[d.index()].iter().fold(self.spatial[d.index()], |a, &t| a.saturating_mul(t))
    }

    /// Identity of the mapping as seen by the cost model: factors plus the
    /// relative order of non-unit loops at `L1` and `L2`. The `L0` order and
    /// the placement of factor-1 loops do not affect any access count.
    pub fn cost_key(&self) -> CostKey {
        let order = |level: Level| -> Vec<Dim> {
            self.perm[level.index()].order().iter().copied().filter(|&d| self.factor(d, level) > 1).collect()
        };
        CostKey {
            temporal: self.temporal,
            spatial: self.spatial,
            l1_order: order(Level::L1),
            l2_order: order(Level::L2),
        }
    }
}

/// See [`Mapping::cost_key`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CostKey {
    temporal: [[u64; 3]; 7],
    spatial: [u64; 7],
    l1_order: Vec<Dim>,
    l2_order: Vec<Dim>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Dimension,
    Capacity,
    Parallelism,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Dim letter, level name, or hardware parameter name.
    pub target: String,
    pub measured: u64,
    pub limit: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        ConstraintReport { feasible: violations.is_empty(), violations }
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// Every ordered `slots`-tuple of positive integers whose product is
/// `value`, in lexicographic order.
pub fn factorizations(value: u64, slots: usize) -> Result<Vec<Vec<u64>>> {
    if value == 0 {
        return Err(Error::param("value must be at least 1"));
    }
    if !(1..=4).contains(&slots) {
        return Err(Error::param(format!("slots must be in 1..=4, got {slots}")));
    }
    let divisors = divisors(value);
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(slots);
    extend_factorizations(value, slots, &divisors, &mut prefix, &mut out);
    Ok(out)
}

fn divisors(v: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut i = 1u64;
    while i.saturating_mul(i) <= v {
        if v.is_multiple_of(i) {
            small.push(i);
            if i != v / i {
                large.push(v / i);
            }
        }
        i += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

fn extend_factorizations(
    rest: u64,
    slots: usize,
    divisors: &[u64],
    prefix: &mut Vec<u64>,
    out: &mut Vec<Vec<u64>>,
) {
    if slots == 1 {
        prefix.push(rest);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    // divisors of `rest` are exactly the divisors of the original value that divide it
    for &d in divisors.iter().take_while(|&&d| d <= rest) {
        if rest.is_multiple_of(d) {
            prefix.push(d);
            extend_factorizations(rest / d, slots - 1, divisors, prefix, out);
            prefix.pop();
        }
    }
}

/// Checks the dimension, parallelism and capacity constraints of a mapping.
pub fn validate_mapping(m: &Mapping, hw: &HardwareConfig, layer: &LayerShape) -> ConstraintReport {
    let mut violations = Vec::new();
    for d in Dim::ALL {
        let product = m.dim_product(d);
        if product != layer.bound(d) {
            violations.push(Violation {
                kind: ViolationKind::Dimension,
                target: d.letter().to_string(),
                measured: product,
                limit: layer.bound(d),
            });
        }
    }
    let parallel = m.spatial_product();
    if parallel > hw.num_pes() {
        violations.push(Violation {
            kind: ViolationKind::Parallelism,
            target: "array".into(),
            measured: parallel,
            limit: hw.num_pes(),
        });
    }
    let fp = cost_model::footprints_unchecked(m);
    for (level, limit) in [(Level::L0, hw.rf_words), (Level::L1, hw.gb_words)] {
        let used = fp.level_total(level);
        if used > limit {
            violations.push(Violation {
                kind: ViolationKind::Capacity,
                target: level.to_string(),
                measured: used,
                limit,
            });
        }
    }
    ConstraintReport::from_violations(violations)
}

/// Checks a hardware configuration against the budget and candidate sets.
pub fn validate_hardware(hw: &HardwareConfig, budget: &HardwareBudget) -> ConstraintReport {
    let mut violations = Vec::new();
    let budget_violation = |target: &str, measured: u64, limit: u64| Violation {
        kind: ViolationKind::Budget,
        target: target.to_string(),
        measured,
        limit,
    };
    let pes = hw.num_pes();
    if pes > budget.max_pes {
        violations.push(budget_violation("pes", pes, budget.max_pes));
    }
    let storage = pes.saturating_mul(hw.rf_words).saturating_add(hw.gb_words);
    if storage > budget.max_storage_words {
        violations.push(budget_violation("storage", storage, budget.max_storage_words));
    }
    let sets = [
        ("pe_x", hw.pe_x, &budget.pe_x_range),
        ("pe_y", hw.pe_y, &budget.pe_y_range),
        ("rf_words", hw.rf_words, &budget.rf_choices),
        ("gb_words", hw.gb_words, &budget.gb_choices),
    ];
    for (name, value, set) in sets {
        if !set.contains(&value) {
            // limit reports the closest candidate
            let nearest = set.iter().copied().min_by_key(|c| c.abs_diff(value)).unwrap_or(0);
            violations.push(budget_violation(name, value, nearest));
        }
    }
    ConstraintReport::from_violations(violations)
}

/// Rejection sampler over mappings of one layer on one hardware design.
///
/// Each draw picks, per dim, a uniformly random 4-slot factorization
/// `(spatial, L0, L1, L2)` of the loop bound, so the dimension constraint
/// always holds, and a uniformly random loop order per level. Draws that
/// break capacity or parallelism are rejected.
#[derive(Debug, Clone)]
pub struct MappingSampler {
    layer: LayerShape,
    hw: HardwareConfig,
    tables: Vec<Vec<[u64; 4]>>,
}

impl MappingSampler {
    pub fn new(layer: &LayerShape, hw: &HardwareConfig) -> Self {
        let tables = Dim::ALL
            .iter()
            .map(|&d| {
                factorizations(layer.bound(d), 4)
                    .expect("layer bounds are positive")
                    .into_iter()
                    .map(|t| [t[0], t[1], t[2], t[3]])
                    .collect()
            })
            .collect();
        MappingSampler { layer: *layer, hw: *hw, tables }
    }

    pub fn layer(&self) -> &LayerShape {
        &self.layer
    }

    pub fn hardware(&self) -> &HardwareConfig {
        &self.hw
    }

    /// Number of factor combinations, ignoring loop order and feasibility.
    pub fn factor_space_size(&self) -> u128 {
        self.tables.iter().map(|t| t.len() as u128).product()
    }

    /// One unfiltered draw. Satisfies the dimension constraint only.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Mapping {
        let mut m = Mapping::all_ones();
        for d in Dim::ALL {
            let t = self.tables[d.index()].choose(rng).expect("nonempty table");
            m.spatial[d.index()] = t[0];
            m.temporal[d.index()] = [t[1], t[2], t[3]];
        }
        for p in m.perm.iter_mut() {
            let mut order = Dim::ALL;
            order.shuffle(rng);
            *p = Permutation(order);
        }
        m
    }

    /// One attempt: a draw, kept only if it passes every constraint.
    pub fn try_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Mapping> {
        let m = self.draw(rng);
        validate_mapping(&m, &self.hw, &self.layer).feasible.then_some(m)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_attempts: u64) -> Result<Mapping> {
        check_attempts(max_attempts)?;
        (0..max_attempts)
            .find_map(|_| self.try_sample(rng))
            .ok_or(Error::Exhausted { attempts: max_attempts })
    }
}

fn check_attempts(max_attempts: u64) -> Result<()> {
    if max_attempts == 0 {
        Err(Error::param("max_attempts must be at least 1"))
    } else {
        Ok(())
    }
}

/// Draws a feasible mapping by rejection; see [`MappingSampler`].
pub fn sample_mapping<R: Rng + ?Sized>(
    layer: &LayerShape,
    hw: &HardwareConfig,
    rng: &mut R,
    max_attempts: u64,
) -> Result<Mapping> {
    MappingSampler::new(layer, hw).sample(rng, max_attempts)
}

/// One unfiltered hardware draw: each parameter uniform over its candidates.
pub fn draw_hardware<R: Rng + ?Sized>(budget: &HardwareBudget, rng: &mut R) -> HardwareConfig {
    let pick = |set: &[u64], rng: &mut R| *set.choose(rng).expect("candidate sets are nonempty");
    HardwareConfig {
        pe_x: pick(&budget.pe_x_range, rng),
        pe_y: pick(&budget.pe_y_range, rng),
        rf_words: pick(&budget.rf_choices, rng),
        gb_words: pick(&budget.gb_choices, rng),
        energy: budget.energy,
    }
}

pub fn try_sample_hardware<R: Rng + ?Sized>(budget: &HardwareBudget, rng: &mut R) -> Option<HardwareConfig> {
    let hw = draw_hardware(budget, rng);
    validate_hardware(&hw, budget).feasible.then_some(hw)
}

pub fn sample_hardware<R: Rng + ?Sized>(
    budget: &HardwareBudget,
    rng: &mut R,
    max_attempts: u64,
) -> Result<HardwareConfig> {
    check_attempts(max_attempts)?;
    budget.check()?;
    (0..max_attempts)
        .find_map(|_| try_sample_hardware(budget, rng))
        .ok_or(Error::Exhausted { attempts: max_attempts })
}

/// Feature names shared by every vector from one feature map.
pub type Schema = Arc<[String]>;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    schema: Schema,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, schema: Schema) -> Result<Self> {
        if values.len() != schema.len() {
            return Err(Error::param(format!(
                "feature length {} does not match schema length {}",
                values.len(),
                schema.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("feature values must be finite"));
        }
        Ok(FeatureVector { values, schema })
    }

    /// Features named `x0, x1, ...`.
    pub fn unnamed(values: Vec<f64>) -> Result<Self> {
        let schema = anonymous_schema(values.len());
        Self::new(values, schema)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_schema(&self, other: &Schema) -> bool {
        Arc::ptr_eq(&self.schema, other) || *self.schema == **other
    }
}

pub fn anonymous_schema(len: usize) -> Schema {
    (0..len).map(|i| format!("x{i}")).collect()
}

static HW_SCHEMA: LazyLock<Schema> = LazyLock::new(|| {
    ["log2_pe_x", "log2_pe_y", "log2_rf_words", "log2_gb_words", "pe_aspect", "gb_to_rf_ratio", "log2_pes"]
        .iter()
        .map(|s| s.to_string())
        .collect()
});

static SW_SCHEMA: LazyLock<Schema> = LazyLock::new(|| {
    let mut names = Vec::with_capacity(52);
    for d in Dim::ALL {
        names.push(format!("log2_s_{d}"));
        for level in Level::ALL {
            names.push(format!("log2_t_{d}_{level}"));
        }
    }
    names.push("util_L0".into());
    names.push("util_L1".into());
    names.push("util_spatial".into());
    for level in Level::ALL {
        for d in Dim::ALL {
            names.push(format!("depth_{level}_{d}"));
        }
    }
    names.into()
});

pub fn hw_schema() -> Schema {
    HW_SCHEMA.clone()
}

pub fn sw_schema() -> Schema {
    SW_SCHEMA.clone()
}

pub fn hw_features(hw: &HardwareConfig) -> FeatureVector {
    let (x, y) = (hw.pe_x as f64, hw.pe_y as f64);
    let (rf, gb) = (hw.rf_words as f64, hw.gb_words as f64);
    let values = vec![x.log2(), y.log2(), rf.log2(), gb.log2(), x / y, gb / (x * y * rf), (x * y).log2()];
    FeatureVector { values, schema: hw_schema() }
}

pub fn sw_features(m: &Mapping, hw: &HardwareConfig, _layer: &LayerShape) -> FeatureVector {
    let mut values = Vec::with_capacity(52);
    for d in Dim::ALL {
        values.push((m.spatial[d.index()] as f64).log2());
        for level in Level::ALL {
            values.push((m.factor(d, level) as f64).log2());
        }
    }
    let fp = cost_model::footprints_unchecked(m);
    values.push(fp.level_total(Level::L0) as f64 / hw.rf_words as f64);
    values.push(fp.level_total(Level::L1) as f64 / hw.gb_words as f64);
    values.push(m.spatial_product() as f64 / hw.num_pes() as f64);
    for level in Level::ALL {
        let perm = &m.perm[level.index()];
        for d in Dim::ALL {
            values.push(perm.depth(d) as f64 / 6.0);
        }
    }
    FeatureVector { values, schema: sw_schema() }
}
