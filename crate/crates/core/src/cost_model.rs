//! Analytical energy/latency model for a mapped layer.
//!
//! Each level keeps one tile per tensor. A tile is refetched from the parent
//! level whenever a loop relevant to that tensor advances; innermost loops
//! that are irrelevant to a tensor reuse the resident tile. Spatial loops sit
//! innermost at `L1`, and partial sums reduced across PEs are merged for free
//! before reaching the global buffer.
//!
//! [`trace_oracle`] walks the loop nest literally and must agree exactly with
//! [`access_counts`].

use serde::{Deserialize, Serialize};

use crate::design_space::{validate_mapping, Dim, HardwareConfig, LayerShape, Level, Mapping};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tensor {
    Weights,
    Inputs,
    Outputs,
}

impl Tensor {
    pub const ALL: [Tensor; 3] = [Tensor::Weights, Tensor::Inputs, Tensor::Outputs];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether a loop over `d` indexes into this tensor.
    pub fn is_relevant(self, d: Dim) -> bool {
        use Dim::*;
        match self {
            Tensor::Weights => matches!(d, K | C | R | S),
            Tensor::Inputs => matches!(d, N | C | P | Q | R | S),
            Tensor::Outputs => matches!(d, N | K | P | Q),
        }
    }

    /// Reads plus writes per fetched word. Outputs are read-modify-write.
    fn access_multiplier(self) -> u64 {
        match self {
            Tensor::Outputs => 2,
            _ => 1,
        }
    }
}

/// Word counts indexed by level, then tensor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorCounts {
    pub words: [[u64; 3]; 3],
}

impl TensorCounts {
    pub fn get(&self, level: Level, tensor: Tensor) -> u64 {
        self.words[level.index()][tensor.index()]
    }

    pub fn level_total(&self, level: Level) -> u64 {
        self.words[level.index()].iter().fold(0u64, |a, &w| a.saturating_add(w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdpResult {
    pub energy: f64,
    pub cycles: u64,
    pub edp: f64,
    pub per_level_accesses: TensorCounts,
}

/// Per-dim tile extents at each level; `L0` is per PE, `L1` and `L2`
/// include the spatial factor.
fn cumulative_extents(m: &Mapping) -> [[u64; 3]; 7] {
    let mut cum = [[1u64; 3]; 7];
    for d in Dim::ALL {
        let i = d.index();
        let t = m.temporal[i];
        cum[i][0] = t[0];
        cum[i][1] = t[0].saturating_mul(m.spatial[i]).saturating_mul(t[1]);
        cum[i][2] = cum[i][1].saturating_mul(t[2]);
    }
    cum
}

fn tensor_footprint(tensor: Tensor, e: impl Fn(Dim) -> u64) -> u64 {
    use Dim::*;
    let prod = |ds: &[u64]| ds.iter().fold(1u64, |a, &x| a.saturating_mul(x));
    match tensor {
        Tensor::Weights => prod(&[e(K), e(C), e(R), e(S)]),
        Tensor::Outputs => prod(&[e(N), e(K), e(P), e(Q)]),
        Tensor::Inputs => {
            let w = (e(P) + e(R)).saturating_sub(1);
            let h = (e(Q) + e(S)).saturating_sub(1);
            prod(&[e(N), e(C), w, h])
        }
    }
}

/// Footprints without checking the dimension constraint. Saturates instead
/// of overflowing so malformed mappings still produce a comparable value.
pub(crate) fn footprints_unchecked(m: &Mapping) -> TensorCounts {
    let cum = cumulative_extents(m);
    let mut out = TensorCounts::default();
    for level in Level::ALL {
        for tensor in Tensor::ALL {
            out.words[level.index()][tensor.index()] =
                tensor_footprint(tensor, |d| cum[d.index()][level.index()]);
        }
    }
    out
}

/// Tile size in words of each tensor at each level. Inputs include the halo.
pub fn tile_footprints(m: &Mapping, layer: &LayerShape) -> Result<TensorCounts> {
    if let Some(d) = Dim::ALL.iter().find(|&&d| m.dim_product(d) != layer.bound(d)) {
        return Err(Error::param(format!(
            "factors of {d} multiply to {} instead of {}",
            m.dim_product(*d),
            layer.bound(*d)
        )));
    }
    Ok(footprints_unchecked(m))
}

fn ensure_feasible(m: &Mapping, hw: &HardwareConfig, layer: &LayerShape) -> Result<()> {
    let report = validate_mapping(m, hw, layer);
    if report.feasible {
        Ok(())
    } else {
        Err(Error::Infeasible(report))
    }
}

/// Spatial loops in nest order, outermost first.
const SPATIAL_ORDER: [Dim; 7] = Dim::ALL;

/// Non-unit loops at `level` and above, innermost first. `L1` lists its
/// spatial loops before its temporal ones.
fn loops_from(m: &Mapping, level: Level) -> Vec<(Dim, u64)> {
    let mut loops = Vec::with_capacity(21);
    if level == Level::L1 {
        for &d in SPATIAL_ORDER.iter().rev() {
            loops.push((d, m.spatial[d.index()]));
        }
    }
    for upper in Level::ALL.iter().filter(|l| **l >= level) {
        for &d in m.perm[upper.index()].order().iter().rev() {
            loops.push((d, m.factor(d, *upper)));
        }
    }
    loops.retain(|&(_, f)| f > 1);
    loops
}

fn refetch_factor(loops: &[(Dim, u64)], tensor: Tensor) -> Result<u64> {
    match loops.iter().position(|&(d, _)| tensor.is_relevant(d)) {
        None => Ok(1),
        Some(j) => loops[j..]
            .iter()
            .try_fold(1u64, |a, &(_, f)| a.checked_mul(f))
            .ok_or_else(|| Error::Numerical("access count overflow".into())),
    }
}

/// Words moved into each level, per tensor.
pub fn access_counts(m: &Mapping, hw: &HardwareConfig, layer: &LayerShape) -> Result<TensorCounts> {
    ensure_feasible(m, hw, layer)?;
    let fp = footprints_unchecked(m);
    let macs = layer.macs();
    let mut out = TensorCounts::default();
    for tensor in Tensor::ALL {
        out.words[0][tensor.index()] = macs
            .checked_mul(tensor.access_multiplier())
            .ok_or_else(|| Error::Numerical("access count overflow".into()))?;
    }
    for (level, child) in [(Level::L1, Level::L0), (Level::L2, Level::L1)] {
        let loops = loops_from(m, level);
        for tensor in Tensor::ALL {
            let refetch = refetch_factor(&loops, tensor)?;
            out.words[level.index()][tensor.index()] = fp
                .get(child, tensor)
                .checked_mul(refetch)
                .and_then(|w| w.checked_mul(tensor.access_multiplier()))
                .ok_or_else(|| Error::Numerical("access count overflow".into()))?;
        }
    }
    Ok(out)
}

pub fn evaluate_edp(m: &Mapping, hw: &HardwareConfig, layer: &LayerShape) -> Result<EdpResult> {
    let accesses = access_counts(m, hw, layer)?;
    let macs = layer.macs();
    let cycles = macs / m.spatial_product();
    let mut energy = macs as f64 * hw.energy.e_mac;
    for level in Level::ALL {
        let e = hw.energy.per_level(level);
        for tensor in Tensor::ALL {
            energy += accesses.get(level, tensor) as f64 * e;
        }
    }
    Ok(EdpResult { energy, cycles, edp: energy * cycles as f64, per_level_accesses: accesses })
}

pub const TRACE_ORACLE_MAX_MACS: u64 = 10_000_000;

/// Counts accesses by iterating the mapped loop nest above `L0`.
///
/// Every level caches a single tile id per tensor (the indices of the loops
/// relevant to the tensor); each id change costs one fetch of the child tile.
/// `L0` accesses are one per MAC operand.
pub fn trace_oracle(m: &Mapping, hw: &HardwareConfig, layer: &LayerShape) -> Result<TensorCounts> {
    ensure_feasible(m, hw, layer)?;
    let macs = layer.macs();
    if macs > TRACE_ORACLE_MAX_MACS {
        return Err(Error::Size { macs, limit: TRACE_ORACLE_MAX_MACS });
    }
    let fp = footprints_unchecked(m);

    // Outermost first: L2 loops, L1 loops, then the spatial loops.
    struct Loop {
        dim: Dim,
        extent: u64,
        at_l2: bool,
    }
    let mut nest = Vec::with_capacity(21);
    for (level, at_l2) in [(Level::L2, true), (Level::L1, false)] {
        for &d in m.perm[level.index()].order() {
            nest.push(Loop { dim: d, extent: m.factor(d, level), at_l2 });
        }
    }
    for &d in SPATIAL_ORDER.iter() {
        nest.push(Loop { dim: d, extent: m.spatial[d.index()], at_l2: false });
    }

    let mut counts = TensorCounts::default();
    for tensor in Tensor::ALL {
        counts.words[0][tensor.index()] = macs * tensor.access_multiplier();
    }

    let mut index = vec![0u64; nest.len()];
    let mut cached: [[Option<Vec<u64>>; 3]; 2] = Default::default();
    loop {
        for tensor in Tensor::ALL {
            // slot 0 caches the L1 tile (ids from L2 loops), slot 1 the L0 tile
            for (slot, level, child) in [(0, Level::L2, Level::L1), (1, Level::L1, Level::L0)] {
                let id: Vec<u64> = nest
                    .iter()
                    .zip(&index)
                    .filter(|(lp, _)| tensor.is_relevant(lp.dim) && (slot == 1 || lp.at_l2))
                    .map(|(_, &i)| i)
                    .collect();
                let entry = &mut cached[slot][tensor.index()];
                if entry.as_ref() != Some(&id) {
                    *entry = Some(id);
                    counts.words[level.index()][tensor.index()] +=
                        fp.get(child, tensor) * tensor.access_multiplier();
                }
            }
        }
        // odometer, innermost loop fastest
        let mut pos = nest.len();
        loop {
            if pos == 0 {
                return Ok(counts);
            }
            pos -= 1;
            index[pos] += 1;
            if index[pos] < nest[pos].extent {
                break;
            }
            index[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::{MappingSampler, Permutation};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_layer() -> LayerShape {
        LayerShape::new(1, 1, 4, 3, 1, 4, 1).unwrap()
    }

    fn toy_mapping() -> Mapping {
        let mut m = Mapping::all_ones();
        m.spatial[Dim::C.index()] = 4;
        m.temporal[Dim::R.index()][0] = 3;
        m.temporal[Dim::P.index()][0] = 4;
        m
    }

    #[test]
    fn footprints_identity() {
        let layer = LayerShape::new(1, 1, 1, 1, 1, 1, 1).unwrap();
        let fp = tile_footprints(&Mapping::all_ones(), &layer).unwrap();
        assert_eq!(fp.words, [[1; 3]; 3]);
    }

    #[test]
    fn footprints_l0_arithmetic() {
        let layer = LayerShape::new(1, 1, 1, 3, 1, 4, 1).unwrap();
        let m = Mapping::single_pe(&layer);
        let fp = tile_footprints(&m, &layer).unwrap();
        assert_eq!(fp.words[0], [3, 6, 4]);
    }

    #[test]
    fn footprints_at_l2_cover_full_tensors() {
        let layer = LayerShape::new(2, 6, 4, 3, 2, 5, 7).unwrap();
        let sampler = MappingSampler::new(
            &layer,
            &HardwareConfig { rf_words: 1 << 20, gb_words: 1 << 30, ..Default::default() },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sampler.draw(&mut rng);
        let fp = tile_footprints(&m, &layer).unwrap();
        let [n, k, c, r, s, p, q] = layer.bounds();
        assert_eq!(fp.get(Level::L2, Tensor::Weights), k * c * r * s);
        assert_eq!(fp.get(Level::L2, Tensor::Outputs), n * k * p * q);
        assert_eq!(fp.get(Level::L2, Tensor::Inputs), n * c * (p + r - 1) * (q + s - 1));
    }

    #[test]
    fn footprints_require_dimension_constraint() {
        let layer = toy_layer();
        assert!(tile_footprints(&Mapping::all_ones(), &layer).is_err());
    }

    #[test]
    fn toy_access_counts() {
        let hw = HardwareConfig::default();
        let counts = access_counts(&toy_mapping(), &hw, &toy_layer()).unwrap();
        assert_eq!(counts.words[0], [48, 48, 96]);
        assert_eq!(counts.words[1], [12, 24, 8]);
        assert_eq!(counts.words[2], [12, 24, 8]);
        assert_eq!(trace_oracle(&toy_mapping(), &hw, &toy_layer()).unwrap(), counts);
    }

    #[test]
    fn toy_edp() {
        let hw = HardwareConfig::default();
        let r = evaluate_edp(&toy_mapping(), &hw, &toy_layer()).unwrap();
        assert_eq!(r.cycles, 12);
        assert_eq!(r.energy, 9304.0);
        assert_eq!(r.edp, 111_648.0);
    }

    #[test]
    fn zero_energy_table_gives_zero_edp() {
        let energy = crate::design_space::EnergyTable::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let hw = HardwareConfig { energy, ..Default::default() };
        let r = evaluate_edp(&toy_mapping(), &hw, &toy_layer()).unwrap();
        assert_eq!((r.energy, r.edp), (0.0, 0.0));
    }

    #[test]
    fn energy_is_linear_in_table() {
        let hw = HardwareConfig::default();
        let mut doubled = hw;
        doubled.energy.e_rf *= 2.0;
        doubled.energy.e_gb *= 2.0;
        doubled.energy.e_dram *= 2.0;
        doubled.energy.e_mac *= 2.0;
        let a = evaluate_edp(&toy_mapping(), &hw, &toy_layer()).unwrap();
        let b = evaluate_edp(&toy_mapping(), &doubled, &toy_layer()).unwrap();
        assert_eq!(b.energy, 2.0 * a.energy);
        assert_eq!(b.edp, 2.0 * a.edp);
    }

    #[test]
    fn single_tile_l2_reads_whole_tensors() {
        let layer = LayerShape::new(1, 2, 3, 3, 1, 5, 1).unwrap();
        let m = Mapping::single_pe(&layer);
        let counts = access_counts(&m, &HardwareConfig::default(), &layer).unwrap();
        assert_eq!(counts.words[2], [2 * 3 * 3, 3 * 7, 2 * 2 * 5]);
        assert_eq!(trace_oracle(&m, &HardwareConfig::default(), &layer).unwrap(), counts);
    }

    #[test]
    fn all_ones_mapping_fetches_once() {
        let layer = LayerShape::new(1, 1, 1, 1, 1, 1, 1).unwrap();
        let counts = trace_oracle(&Mapping::all_ones(), &HardwareConfig::default(), &layer).unwrap();
        assert_eq!(counts.words, [[1, 1, 2], [1, 1, 2], [1, 1, 2]]);
    }

    #[test]
    fn factor_one_loops_do_not_change_counts() {
        let hw = HardwareConfig::default();
        let layer = LayerShape::new(1, 4, 2, 1, 1, 6, 1).unwrap();
        let mut m = Mapping::all_ones();
        m.temporal[Dim::K.index()] = [1, 2, 2];
        m.temporal[Dim::P.index()] = [3, 2, 1];
        m.temporal[Dim::C.index()] = [2, 1, 1];
        let base = access_counts(&m, &hw, &layer).unwrap();
        // shuffle only the unit loops (N, R, S, Q) at L1
        let mut shuffled = m.clone();
        shuffled.perm[1] =
            Permutation::new([Dim::Q, Dim::K, Dim::S, Dim::C, Dim::R, Dim::P, Dim::N]).unwrap();
        assert_eq!(access_counts(&shuffled, &hw, &layer).unwrap(), base);
    }

    #[test]
    fn trace_oracle_guard() {
        let layer = LayerShape::new(1, 64, 64, 3, 3, 56, 56).unwrap();
        let m = Mapping::single_pe(&layer);
        let hw = HardwareConfig { rf_words: u64::MAX / 4, gb_words: u64::MAX / 4, ..Default::default() };
        assert!(matches!(trace_oracle(&m, &hw, &layer), Err(Error::Size { .. })));
    }

    #[test]
    fn infeasible_mapping_is_an_error() {
        let hw = HardwareConfig::default();
        assert!(matches!(evaluate_edp(&Mapping::all_ones(), &hw, &toy_layer()), Err(Error::Infeasible(_))));
    }

    fn small_layer() -> impl Strategy<Value = LayerShape> {
        (1u64..=3, 1u64..=8, 1u64..=8, 1u64..=3, 1u64..=3, 1u64..=8, 1u64..=6)
            .prop_map(|(n, k, c, r, s, p, q)| LayerShape::new(n, k, c, r, s, p, q).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn analytical_matches_trace(layer in small_layer(), seed in any::<u64>()) {
            let hw = HardwareConfig { rf_words: 1 << 16, gb_words: 1 << 24, ..Default::default() };
            let m = MappingSampler::new(&layer, &hw).sample(&mut ChaCha8Rng::seed_from_u64(seed), 10_000).unwrap();
            let r = evaluate_edp(&m, &hw, &layer).unwrap();
            prop_assert_eq!(access_counts(&m, &hw, &layer).unwrap(), trace_oracle(&m, &hw, &layer).unwrap());
            prop_assert_eq!(r.cycles * m.spatial_product(), layer.macs());
            prop_assert_eq!(r.edp, r.energy * r.cycles as f64);
        }

        // Pulling a relevant L2 loop down into L1 never increases L2 traffic for that tensor.
        #[test]
        fn residency_monotone(layer in small_layer(), seed in any::<u64>(), d_pick in 0usize..7) {
            let hw = HardwareConfig { rf_words: 1 << 16, gb_words: 1 << 24, ..Default::default() };
            let m = MappingSampler::new(&layer, &hw).sample(&mut ChaCha8Rng::seed_from_u64(seed), 10_000).unwrap();
            let d = Dim::ALL[d_pick];
            let mut moved = m.clone();
            let t = &mut moved.temporal[d.index()];
            t[1] *= t[2];
            t[2] = 1;
            prop_assume!(validate_mapping(&moved, &hw, &layer).feasible);
            let before = access_counts(&m, &hw, &layer).unwrap();
            let after = access_counts(&moved, &hw, &layer).unwrap();
            for tensor in Tensor::ALL.into_iter().filter(|t| t.is_relevant(d)) {
                prop_assert!(after.get(Level::L2, tensor) <= before.get(Level::L2, tensor));
            }
        }
    }
}
