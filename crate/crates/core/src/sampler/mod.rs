//! Percolation environments on finite boxes.
//!
//! Long edges are sampled per displacement class `w` (one representative of
//! `±w`): the number of open edges among the `Π_i (n_i − |w_i|)` pairs with
//! that displacement is drawn from a binomial law, and the open pairs are then
//! placed uniformly without replacement. Each class reads its own keyed
//! stream, so the output is a pure function of `(spec, shape, seed)` whatever
//! the thread count.

mod environment;
mod format;
mod shape;

pub use environment::Environment;
pub use format::{deserialize, parse_header, serialize, Header};
pub use shape::{displacement_pair_count, BoxShape, MAX_DIM};

use rand::seq::index;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{canonicalize, KernelSpec, KernelTable};
use crate::streams::{self, displacement_key, keyed_uniform, tag};

type EdgeList = Vec<(u32, u32)>;

/// Two environments built from one uniform variate per edge.
#[derive(Clone, Debug)]
pub struct CouplingPair {
    pub low: Environment,
    pub high: Environment,
    pub seed: u64,
}

/// Displacement classes of a box: one of `±w` for every `w` with
/// `‖w‖_∞ ≥ 2` and `|w_i| < n_i`, chosen so its first nonzero coordinate is
/// positive.
pub fn displacement_classes(shape: &BoxShape) -> Vec<Vec<i64>> {
    let d = shape.dimension();
    let bounds: Vec<i64> = shape.sides().iter().map(|&s| s as i64 - 1).collect();
    let mut out = Vec::new();
    let mut w: Vec<i64> = bounds.iter().map(|b| -b).collect();
    loop {
        let leading = w.iter().find(|&&c| c != 0).copied().unwrap_or(0);
        if leading > 0 && w.iter().any(|c| c.abs() >= 2) {
            out.push(w.clone());
        }
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if w[i] < bounds[i] {
                w[i] += 1;
                break;
            }
            w[i] = -bounds[i];
        }
    }
}

pub fn sample_box(spec: &KernelSpec, shape: &BoxShape, seed: u64) -> Result<Environment> {
    let table = KernelTable::for_shape(*spec, shape)?;
    sample_box_with_table(&table, shape, seed)
}

/// [`sample_box`] with a prebuilt table, for callers drawing many replicas.
pub fn sample_box_with_table(table: &KernelTable, shape: &BoxShape, seed: u64) -> Result<Environment> {
    let spec = *table.spec();
    check_dimension(&spec, shape)?;
    let classes = displacement_classes(shape);
    let per_class: Result<Vec<Vec<(u32, u32)>>> = classes
        .par_iter()
        .map(|w| {
            let p = table.canonical_entry(&canonicalize(w))?.p;
            Ok(draw_class(shape, w, p, seed))
        })
        .collect();
    let edges = concat(per_class?)?;
    Environment::from_edges_unchecked(shape.clone(), spec, seed, &edges)
}

pub fn sample_coupled(spec_low: &KernelSpec, spec_high: &KernelSpec, shape: &BoxShape, seed: u64) -> Result<CouplingPair> {
    if spec_low.dimension != spec_high.dimension {
        return Err(Error::DimensionMismatch {
            expected: spec_low.dimension,
            got: spec_high.dimension,
        });
    }
    let low = KernelTable::for_shape(*spec_low, shape)?;
    let high = KernelTable::for_shape(*spec_high, shape)?;
    sample_coupled_with_tables(&low, &high, shape, seed)
}

/// Harris coupling on a box.
///
/// Per class the superset of edges open under `max(p_low, p_high)` is sampled
/// exactly as [`sample_box`] would; each selected edge then receives
/// `U_e = p_max · V_e`, with `V_e` a uniform keyed by the edge itself, and is
/// open under a kernel iff `U_e < p`. Conditionally on selection `U_e` is
/// uniform on `[0, p_max)`, so each side has the right product law and the
/// side with pointwise smaller probabilities is a subgraph of the other.
pub fn sample_coupled_with_tables(
    low: &KernelTable,
    high: &KernelTable,
    shape: &BoxShape,
    seed: u64,
) -> Result<CouplingPair> {
    let spec_low = *low.spec();
    let spec_high = *high.spec();
    if spec_low.dimension != spec_high.dimension {
        return Err(Error::DimensionMismatch {
            expected: spec_low.dimension,
            got: spec_high.dimension,
        });
    }
    check_dimension(&spec_low, shape)?;
    let classes = displacement_classes(shape);
    let per_class: Result<Vec<(EdgeList, EdgeList)>> = classes
        .par_iter()
        .map(|w| {
            let c = canonicalize(w);
            let p_low = low.canonical_entry(&c)?.p;
            let p_high = high.canonical_entry(&c)?.p;
            let p_max = p_low.max(p_high);
            let superset = draw_class(shape, w, p_max, seed);
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for (a, b) in superset {
                let u = p_max * keyed_uniform(seed, &[tag::EDGE_UNIFORM, a as u64, b as u64]);
                if u < p_low {
                    lo.push((a, b));
                }
                if u < p_high {
                    hi.push((a, b));
                }
            }
            Ok((lo, hi))
        })
        .collect();
    let (lo, hi): (Vec<_>, Vec<_>) = per_class?.into_iter().unzip();
    Ok(CouplingPair {
        low: Environment::from_edges_unchecked(shape.clone(), spec_low, seed, &concat(lo)?)?,
        high: Environment::from_edges_unchecked(shape.clone(), spec_high, seed, &concat(hi)?)?,
        seed,
    })
}

fn check_dimension(spec: &KernelSpec, shape: &BoxShape) -> Result<()> {
    if spec.dimension != shape.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension,
            got: shape.dimension(),
        });
    }
    Ok(())
}

fn concat(parts: Vec<Vec<(u32, u32)>>) -> Result<Vec<(u32, u32)>> {
    let total: usize = parts.iter().map(Vec::len).sum();
    let mut edges = Vec::new();
    edges
        .try_reserve_exact(total)
        .map_err(|_| Error::Resource { edges: total as u64 })?;
    for part in parts {
        edges.extend(part);
    }
    Ok(edges)
}

/// Open edges of one displacement class, as `(i, j)` with `i < j`.
fn draw_class(shape: &BoxShape, w: &[i64], p: f64, seed: u64) -> Vec<(u32, u32)> {
    let pairs = displacement_pair_count(shape, w);
    if pairs == 0 || p <= 0.0 {
        return Vec::new();
    }
    let key = displacement_key(w);
    let mut count_rng = streams::stream(seed, &[tag::CLASS_COUNT, key]);
    let count = Binomial::new(pairs, p.min(1.0))
        .expect("probability in [0, 1]")
        .sample(&mut count_rng);
    if count == 0 {
        return Vec::new();
    }
    let mut place_rng = streams::stream(seed, &[tag::CLASS_PLACE, key, 0]);
    // Floyd's algorithm when sparse, a partial shuffle when dense.
    let chosen = index::sample(&mut place_rng, pairs as usize, count as usize);

    let d = shape.dimension();
    let sides = shape.sides();
    let lows: Vec<usize> = w.iter().map(|&c| (-c).max(0) as usize).collect();
    let lens: Vec<usize> = sides.iter().zip(w).map(|(&s, &c)| s - c.unsigned_abs() as usize).collect();
    let mut x = vec![0usize; d];
    let mut out: Vec<(u32, u32)> = chosen
        .into_iter()
        .map(|pos| {
            let mut rem = pos;
            for i in (0..d).rev() {
                x[i] = lows[i] + rem % lens[i];
                rem /= lens[i];
            }
            let mut a = 0usize;
            let mut b = 0usize;
            for i in 0..d {
                a = a * sides[i] + x[i];
                b = b * sides[i] + (x[i] as i64 + w[i]) as usize;
            }
            (a.min(b) as u32, a.max(b) as u32)
        })
        .collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn classes_cover_each_unordered_displacement_once() {
        let shape = BoxShape::new(vec![4, 3]).unwrap();
        let classes = displacement_classes(&shape);
        let set: HashSet<Vec<i64>> = classes.iter().cloned().collect();
        assert_eq!(set.len(), classes.len());
        for w in &classes {
            let neg: Vec<i64> = w.iter().map(|c| -c).collect();
            assert!(!set.contains(&neg));
            assert!(w.iter().any(|c| c.abs() >= 2));
        }
        // 7 * 5 displacements, minus 0 and the 8 sup-norm-1 ones, halved
        assert_eq!(classes.len(), (35 - 9) / 2);
        assert_eq!(displacement_classes(&BoxShape::cube(1, 5).unwrap()), vec![vec![2], vec![3], vec![4]]);
    }

    #[test]
    fn beta_zero_has_no_long_edges() {
        let spec = KernelSpec::self_similar(2, 0.0).unwrap();
        let env = sample_box(&spec, &BoxShape::cube(2, 16).unwrap(), 9).unwrap();
        assert_eq!(env.long_edge_count(), 0);
    }

    #[test]
    fn deterministic_given_inputs() {
        let spec = KernelSpec::self_similar(1, 1.0).unwrap();
        let shape = BoxShape::cube(1, 300).unwrap();
        let a = sample_box(&spec, &shape, 42).unwrap();
        let b = sample_box(&spec, &shape, 42).unwrap();
        let c = sample_box(&spec, &shape, 43).unwrap();
        assert_eq!(a, b);
        assert_eq!(serialize(&a), serialize(&b));
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let spec = KernelSpec::self_similar(2, 1.5).unwrap();
        let shape = BoxShape::cube(2, 24).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| sample_box(&spec, &shape, 5).unwrap());
        let b = four.install(|| sample_box(&spec, &shape, 5).unwrap());
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn sampled_edges_are_long_and_in_box() {
        let spec = KernelSpec::self_similar(2, 2.0).unwrap();
        let shape = BoxShape::new(vec![12, 7]).unwrap();
        let env = sample_box(&spec, &shape, 1).unwrap();
        assert!(env.long_edge_count() > 0);
        let rebuilt = Environment::from_edges(shape, spec, 1, &env.long_edges().collect::<Vec<_>>()).unwrap();
        assert_eq!(rebuilt, env);
    }

    #[test]
    fn coupling_with_equal_kernels_is_identical_and_matches_sample_box() {
        let spec = KernelSpec::self_similar(1, 1.0).unwrap();
        let shape = BoxShape::cube(1, 400).unwrap();
        let pair = sample_coupled(&spec, &spec, &shape, 11).unwrap();
        assert_eq!(pair.low, pair.high);
        assert_eq!(pair.high, sample_box(&spec, &shape, 11).unwrap());
    }

    #[test]
    fn coupling_is_monotone() {
        let lo = KernelSpec::self_similar(1, 0.5).unwrap();
        let hi = KernelSpec::self_similar(1, 2.0).unwrap();
        let shape = BoxShape::cube(1, 512).unwrap();
        for seed in 0..20 {
            let pair = sample_coupled(&lo, &hi, &shape, seed).unwrap();
            assert!(pair.low.is_subgraph_of(&pair.high));
            assert!(pair.low.long_edge_count() < pair.high.long_edge_count());
            assert_eq!(pair.high, sample_box(&hi, &shape, seed).unwrap());
        }
    }

    #[test]
    fn coupling_rejects_dimension_mismatch() {
        let a = KernelSpec::self_similar(1, 0.5).unwrap();
        let b = KernelSpec::self_similar(2, 2.0).unwrap();
        assert!(matches!(
            sample_coupled(&a, &b, &BoxShape::cube(1, 8).unwrap(), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
