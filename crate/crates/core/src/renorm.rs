//! Block tessellations and the renormalized graph.
//!
//! A box whose sides are multiples of `k` is cut into blocks
//! `V_u^k = k·u + {0, …, k−1}^d`. Collapsing each block to one vertex gives
//! the coarse graph `G′`, in which two blocks are adjacent when some open fine
//! edge joins them. For the self-similar kernel the coarse edge probabilities
//! equal the fine ones exactly, which [`block_edge_marginal`] checks.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphdist::{indirect_search, Bfs, UNREACHABLE};
use crate::kernel::{block_kernel_sum, kernel_value, probability_from_kernel, sup_norm, KernelSpec};
use crate::sampler::{BoxShape, Environment};

/// Relative tolerance of the block marginal identity.
pub const MARGINAL_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    fine: BoxShape,
    coarse: BoxShape,
    k: usize,
    block_of: Vec<u32>,
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl BlockGrid {
    pub fn new(fine: &BoxShape, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("block side must be positive".into()));
        }
        if let Some(&n) = fine.sides().iter().find(|&&n| n % k != 0) {
            return Err(Error::Precondition(format!("block side {k} does not divide box side {n}")));
        }
        let coarse_sides: Vec<usize> = fine.sides().iter().map(|&n| n / k).collect();
        let coarse = if coarse_sides.iter().all(|&c| c >= 2) {
            BoxShape::new(coarse_sides)?
        } else {
            return Err(Error::Precondition("need at least two blocks along every axis".into()));
        };
        let n = fine.vertex_count();
        let mut block_of = Vec::with_capacity(n);
        let mut coords = vec![0usize; fine.dimension()];
        let mut block = vec![0usize; fine.dimension()];
        for v in 0..n as u32 {
            fine.write_coords(v, &mut coords);
            for (b, c) in block.iter_mut().zip(&coords) {
                *b = c / k;
            }
            block_of.push(coarse.index_of(&block).expect("block inside coarse box"));
        }
        let blocks = coarse.vertex_count();
        let mut offsets = vec![0usize; blocks + 1];
        for &b in &block_of {
            offsets[b as usize + 1] += 1;
        }
        for i in 0..blocks {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets[..blocks].to_vec();
        let mut members = vec![0u32; n];
        for (v, &b) in block_of.iter().enumerate() {
            members[cursor[b as usize]] = v as u32;
            cursor[b as usize] += 1;
        }
        Ok(BlockGrid {
            fine: fine.clone(),
            coarse,
            k,
            block_of,
            offsets,
            members,
        })
    }

    pub fn block_side(&self) -> usize {
        self.k
    }

    pub fn fine_shape(&self) -> &BoxShape {
        &self.fine
    }

    /// The grid of blocks, one vertex per block.
    pub fn coarse_shape(&self) -> &BoxShape {
        &self.coarse
    }

    pub fn block_count(&self) -> usize {
        self.coarse.vertex_count()
    }

    /// `r(v)`.
    #[inline]
    pub fn block_of(&self, v: u32) -> u32 {
        self.block_of[v as usize]
    }

    /// Vertices of a block, ascending.
    pub fn members(&self, block: u32) -> &[u32] {
        &self.members[self.offsets[block as usize]..self.offsets[block as usize + 1]]
    }

    /// `‖u − w‖_∞` between two blocks.
    pub fn block_distance(&self, a: u32, b: u32) -> u64 {
        sup_norm(&self.coarse.displacement(a, b))
    }

    /// True when the block and its whole `3^d` neighborhood lie strictly
    /// inside the coarse box.
    pub fn is_interior(&self, block: u32) -> bool {
        !self.coarse.on_boundary(block)
    }

    pub fn interior_blocks(&self) -> Vec<u32> {
        (0..self.block_count() as u32).filter(|&b| self.is_interior(b)).collect()
    }

    /// The block holding the fine center vertex.
    pub fn central_block(&self) -> u32 {
        self.coarse.center()
    }
}

/// The coarse graph `G′` of an environment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenormGraph {
    grid: BlockGrid,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    witnesses: Vec<(u32, u32)>,
}

pub fn build_renorm_graph(env: &Environment, k: usize) -> Result<RenormGraph> {
    if k < 2 {
        return Err(Error::Domain("renormalization needs blocks of side at least 2".into()));
    }
    let grid = BlockGrid::new(env.shape(), k)?;
    RenormGraph::new(env, grid)
}

impl RenormGraph {
    pub fn new(env: &Environment, grid: BlockGrid) -> Result<Self> {
        if grid.fine_shape() != env.shape() {
            return Err(Error::Precondition("grid and environment cover different boxes".into()));
        }
        let n = env.vertex_count();
        let per_vertex: Vec<Vec<(u32, u32, u32, u32)>> = (0..n as u32)
            .into_par_iter()
            .map(|v| {
                let bv = grid.block_of(v);
                let mut out = Vec::new();
                env.for_each_neighbor(v, |u| {
                    let bu = grid.block_of(u);
                    if bu != bv {
                        out.push((bv, bu, v.min(u), v.max(u)));
                    }
                });
                out
            })
            .collect();
        let mut pairs: Vec<(u32, u32, u32, u32)> = per_vertex.into_iter().flatten().collect();
        pairs.par_sort_unstable();
        pairs.dedup_by(|next, kept| next.0 == kept.0 && next.1 == kept.1);

        let blocks = grid.block_count();
        let mut offsets = vec![0usize; blocks + 1];
        for &(a, ..) in &pairs {
            offsets[a as usize + 1] += 1;
        }
        for i in 0..blocks {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = pairs.iter().map(|p| p.1).collect();
        let witnesses = pairs.iter().map(|p| (p.2, p.3)).collect();
        Ok(RenormGraph {
            grid,
            offsets,
            neighbors,
            witnesses,
        })
    }

    pub fn grid(&self) -> &BlockGrid {
        &self.grid
    }

    /// Coarse neighbors of a block, ascending.
    pub fn neighbors(&self, block: u32) -> &[u32] {
        &self.neighbors[self.offsets[block as usize]..self.offsets[block as usize + 1]]
    }

    pub fn degree(&self, block: u32) -> usize {
        self.neighbors(block).len()
    }

    pub fn is_adjacent(&self, a: u32, b: u32) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// The smallest fine edge `(x, y)`, `x < y`, joining the two blocks.
    pub fn witness(&self, a: u32, b: u32) -> Option<(u32, u32)> {
        let i = self.neighbors(a).binary_search(&b).ok()?;
        Some(self.witnesses[self.offsets[a as usize] + i])
    }

    /// Coarse edges `(a, b)`, `a < b`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.grid.block_count() as u32)
            .flat_map(move |a| self.neighbors(a).iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// `deg^N(r(u))`: the coarse degrees summed over the `‖u − v‖_∞ ≤ 1`
    /// neighborhood of each block, the block itself included.
    pub fn neighborhood_degrees(&self) -> Vec<u64> {
        let coarse = self.grid.coarse_shape();
        let empty = Environment::from_edges_unchecked(
            coarse.clone(),
            KernelSpec::self_similar(coarse.dimension(), 0.0).expect("valid spec"),
            0,
            &[],
        )
        .expect("coarse lattice fits");
        (0..self.grid.block_count() as u32)
            .map(|b| {
                let mut total = self.degree(b) as u64;
                empty.for_each_nn(b, |c| total += self.degree(c) as u64);
                total
            })
            .collect()
    }
}

/// Coarse edge probability `1 − exp(−β Σ J)` summed over the `k^{2d}` fine
/// pairs of two blocks at coarse displacement `w`, checked against the fine
/// edge probability `p(w)`.
pub fn block_edge_marginal(spec: &KernelSpec, k: u64, w: &[i64]) -> Result<f64> {
    if !spec.is_self_similar() {
        return Err(Error::Precondition(
            "the block marginal identity holds only for the self-similar kernel".into(),
        ));
    }
    if w.len() != spec.dimension {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension,
            got: w.len(),
        });
    }
    if sup_norm(w) < 2 {
        return Err(Error::Precondition(
            "coarse nearest neighbors are always adjacent; need ‖w‖_∞ ≥ 2".into(),
        ));
    }
    let sum = block_kernel_sum(spec, k, w)?;
    let marginal = -(-spec.beta * sum).exp_m1();
    let fine = probability_from_kernel(spec.beta, kernel_value(spec, w)?);
    let scale = fine.abs().max(marginal.abs());
    if (marginal - fine).abs() > MARGINAL_TOLERANCE * scale {
        return Err(Error::IdentityViolation(format!(
            "block marginal {marginal:e} differs from edge probability {fine:e} at k={k}, w={w:?}"
        )));
    }
    Ok(marginal)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GoodFamily {
    /// Far-entry vertex to an exit toward a different block.
    CrossBlock,
    /// Two distinct vertices touching the same far block.
    SameBlock,
    /// Indirect distance across the annulus.
    Annulus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub family: GoodFamily,
    pub x: u32,
    pub y: u32,
    pub distance: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodBlockReport {
    pub block: u32,
    pub delta: f64,
    pub theta_hat: f64,
    /// `δ k^θ̂`.
    pub threshold: f64,
    pub good1: bool,
    pub good2: bool,
    pub good3: bool,
    pub good: bool,
    /// The shortest violating pair, present exactly when the block is bad.
    pub witness: Option<Witness>,
    pub neighborhood_degree: u64,
}

/// Decides whether an interior block is δ-good.
///
/// Within-block conditions quantify over distinct vertices `x ≠ y`, where `x`
/// has an open edge to a block at sup-distance ≥ 2 and `y` has an open edge
/// to any other block.
pub fn classify_good_block(env: &Environment, grid: &BlockGrid, block: u32, delta: f64, theta_hat: f64) -> Result<GoodBlockReport> {
    let mut scratch = ClassifyScratch::new(env.vertex_count());
    classify_with(env, grid, block, delta, theta_hat, &mut scratch)
}

/// Classifies every interior block in parallel.
pub fn classify_interior_blocks(env: &Environment, grid: &BlockGrid, delta: f64, theta_hat: f64) -> Result<Vec<GoodBlockReport>> {
    grid.interior_blocks()
        .par_iter()
        .map_init(
            || ClassifyScratch::new(env.vertex_count()),
            |scratch, &b| classify_with(env, grid, b, delta, theta_hat, scratch),
        )
        .collect()
}

struct ClassifyScratch {
    bfs: Bfs,
    touches: Vec<Vec<u32>>,
}

impl ClassifyScratch {
    fn new(n: usize) -> Self {
        ClassifyScratch {
            bfs: Bfs::new(n),
            touches: Vec::new(),
        }
    }
}

fn classify_with(
    env: &Environment,
    grid: &BlockGrid,
    block: u32,
    delta: f64,
    theta_hat: f64,
    scratch: &mut ClassifyScratch,
) -> Result<GoodBlockReport> {
    if grid.fine_shape() != env.shape() {
        return Err(Error::Precondition("grid and environment cover different boxes".into()));
    }
    if block as usize >= grid.block_count() {
        return Err(Error::Domain(format!("block {block} is outside the grid")));
    }
    if !grid.is_interior(block) {
        return Err(Error::Precondition(format!("block {block} is not an interior block")));
    }
    if !(delta > 0.0 && delta.is_finite()) || !theta_hat.is_finite() {
        return Err(Error::Domain("δ must be positive and θ̂ finite".into()));
    }
    let threshold = delta * (grid.block_side() as f64).powf(theta_hat);
    // Distances are integers: a distance `t` violates iff `t < threshold`.
    let max_bad = if threshold <= 0.0 {
        None
    } else {
        Some((threshold.ceil() as u64).saturating_sub(1).min(u32::MAX as u64 - 1) as u32)
    };

    let members = grid.members(block);
    let touches = &mut scratch.touches;
    touches.resize_with(members.len(), Vec::new);
    for (slot, &x) in touches.iter_mut().zip(members) {
        slot.clear();
        env.for_each_neighbor(x, |u| {
            let b = grid.block_of(u);
            if b != block {
                slot.push(b);
            }
        });
        slot.sort_unstable();
        slot.dedup();
    }
    let is_far = |b: u32| grid.block_distance(b, block) >= 2;

    let mut best: Option<Witness> = None;
    let mut good1 = true;
    let mut good2 = true;
    let mut good3 = true;
    let consider = |best: &mut Option<Witness>, w: Witness| {
        if best.is_none_or(|b| (w.distance, w.x, w.y) < (b.distance, b.x, b.y)) {
            *best = Some(w);
        }
    };

    if let Some(max_bad) = max_bad {
        let index_of = |v: u32| members.binary_search(&v).ok();
        for (ix, &x) in members.iter().enumerate() {
            let far_x: Vec<u32> = touches[ix].iter().copied().filter(|&b| is_far(b)).collect();
            if far_x.is_empty() {
                continue;
            }
            let bfs = &mut scratch.bfs;
            bfs.search(env, &[x], max_bad, |u| grid.block_of(u) == block, |_, _| true, |_| false, |_, _| false);
            for &y in bfs.visited() {
                if y == x {
                    continue;
                }
                let ty = &touches[index_of(y).expect("visited vertices stay in the block")];
                if ty.is_empty() {
                    continue;
                }
                let distance = bfs.dist(y).expect("visited");
                let shared_far = ty.iter().any(|b| far_x.binary_search(b).is_ok());
                let cross = far_x.iter().any(|&u| ty.iter().any(|&v| v != u));
                if shared_far {
                    good2 = false;
                    consider(&mut best, Witness { family: GoodFamily::SameBlock, x, y, distance });
                }
                if cross {
                    good1 = false;
                    consider(&mut best, Witness { family: GoodFamily::CrossBlock, x, y, distance });
                }
            }
        }

        let bfs = &mut scratch.bfs;
        if let Some((distance, x, y)) = indirect_search(
            env,
            bfs,
            members,
            |v| grid.block_of(v) == block,
            |v| is_far(grid.block_of(v)),
            max_bad,
        ) {
            good3 = false;
            consider(&mut best, Witness { family: GoodFamily::Annulus, x, y, distance });
        }
    }

    let coarse_degree = |b: u32| -> u64 {
        let mut seen: Vec<u32> = Vec::new();
        for &x in grid.members(b) {
            env.for_each_neighbor(x, |u| {
                let c = grid.block_of(u);
                if c != b {
                    seen.push(c);
                }
            });
        }
        seen.sort_unstable();
        seen.dedup();
        seen.len() as u64
    };
    let mut neighborhood_degree = coarse_degree(block);
    let coarse = grid.coarse_shape();
    for b in 0..grid.block_count() as u32 {
        if b != block && sup_norm(&coarse.displacement(b, block)) == 1 {
            neighborhood_degree += coarse_degree(b);
        }
    }

    let good = good1 && good2 && good3;
    Ok(GoodBlockReport {
        block,
        delta,
        theta_hat,
        threshold,
        good1,
        good2,
        good3,
        good,
        witness: if good { None } else { best },
        neighborhood_degree,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoxCountResult {
    pub radius: u32,
    /// `X_k = #{u : D(V_u^k, V_0^k) ≤ r}`.
    pub count: usize,
    /// `D(V_u^k, V_0^k)` for every block (`UNREACHABLE` never occurs on a full box).
    pub block_distances: Vec<u32>,
}

/// Fine distance from the center block to every block.
pub fn block_distances(env: &Environment, grid: &BlockGrid, center: u32) -> Result<Vec<u32>> {
    if grid.fine_shape() != env.shape() {
        return Err(Error::Precondition("grid and environment cover different boxes".into()));
    }
    if center as usize >= grid.block_count() {
        return Err(Error::Domain(format!("block {center} is outside the grid")));
    }
    let mut bfs = Bfs::new(env.vertex_count());
    bfs.run(env, grid.members(center), u32::MAX);
    let mut out = vec![UNREACHABLE; grid.block_count()];
    for &v in bfs.visited() {
        let b = grid.block_of(v) as usize;
        out[b] = out[b].min(bfs.dist(v).expect("visited"));
    }
    Ok(out)
}

pub fn box_count(env: &Environment, grid: &BlockGrid, center: u32, r: u32) -> Result<BoxCountResult> {
    let block_distances = block_distances(env, grid, center)?;
    Ok(count_within(block_distances, r))
}

pub(crate) fn count_within(block_distances: Vec<u32>, r: u32) -> BoxCountResult {
    BoxCountResult {
        radius: r,
        count: block_distances.iter().filter(|&&d| d <= r).count(),
        block_distances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::sample_box;

    fn plain(d: usize, n: usize) -> Environment {
        let spec = KernelSpec::self_similar(d, 0.0).unwrap();
        Environment::from_edges(BoxShape::cube(d, n).unwrap(), spec, 0, &[]).unwrap()
    }

    #[test]
    fn grid_partitions_the_box() {
        let shape = BoxShape::new(vec![6, 9]).unwrap();
        let grid = BlockGrid::new(&shape, 3).unwrap();
        assert_eq!(grid.coarse_shape().sides(), &[2, 3]);
        let mut seen = vec![false; shape.vertex_count()];
        for b in 0..grid.block_count() as u32 {
            assert_eq!(grid.members(b).len(), 9);
            for &v in grid.members(b) {
                assert!(!seen[v as usize]);
                seen[v as usize] = true;
                assert_eq!(grid.block_of(v), b);
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert!(BlockGrid::new(&shape, 4).is_err());
    }

    #[test]
    fn beta_zero_coarse_graph_is_the_lattice() {
        let env = plain(2, 12);
        let g = build_renorm_graph(&env, 3).unwrap();
        for a in 0..16u32 {
            for b in 0..16u32 {
                let nn = a != b && g.grid().block_distance(a, b) == 1;
                assert_eq!(g.is_adjacent(a, b), nn, "{a} {b}");
            }
        }
        assert!(build_renorm_graph(&env, 5).is_err());
        assert!(build_renorm_graph(&env, 1).is_err());
    }

    #[test]
    fn one_long_edge_adds_one_coarse_edge() {
        let spec = KernelSpec::self_similar(1, 1.0).unwrap();
        let env = Environment::from_edges(BoxShape::cube(1, 16).unwrap(), spec, 0, &[(1, 13)]).unwrap();
        let g = build_renorm_graph(&env, 4).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert!(g.is_adjacent(0, 3));
        assert_eq!(g.witness(0, 3), Some((1, 13)));
        assert_eq!(g.witness(1, 0), Some((3, 4)));
        assert_eq!(g.neighborhood_degrees(), vec![4, 6, 6, 4]);
    }

    #[test]
    fn marginal_examples() {
        let spec = KernelSpec::self_similar(1, 1.0).unwrap();
        assert!((block_edge_marginal(&spec, 2, &[2]).unwrap() - 0.25).abs() < 1e-14);
        for w in 2..8i64 {
            let p = block_edge_marginal(&spec, 1, &[w]).unwrap();
            assert!((p - 1.0 / (w * w) as f64).abs() < 1e-14);
        }
        assert!(matches!(block_edge_marginal(&spec, 3, &[1]), Err(Error::Precondition(_))));
        let pl = KernelSpec::power_law(1, 1.0, 2.0).unwrap();
        assert!(block_edge_marginal(&pl, 2, &[2]).is_err());
    }

    #[test]
    fn marginal_identity_in_two_dimensions() {
        let spec = KernelSpec::self_similar(2, 0.7).unwrap();
        for w in [[2i64, 0], [2, 1], [3, -2], [0, -4]] {
            for k in [2, 3] {
                block_edge_marginal(&spec, k, &w).unwrap();
            }
        }
    }

    #[test]
    fn box_count_at_beta_zero() {
        let env = plain(1, 110);
        let grid = BlockGrid::new(env.shape(), 10).unwrap();
        let center = 5;
        assert_eq!(box_count(&env, &grid, center, 0).unwrap().count, 1);
        assert_eq!(box_count(&env, &grid, center, 15).unwrap().count, 5);
        for r in 0..60u32 {
            let expected = 1 + (0..=5).filter(|&u| u >= 1 && (u - 1) * 10 < r).count() * 2;
            assert_eq!(box_count(&env, &grid, center, r).unwrap().count, expected, "r={r}");
        }
    }

    #[test]
    fn tiny_threshold_is_always_good() {
        let spec = KernelSpec::self_similar(1, 2.0).unwrap();
        let env = sample_box(&spec, &BoxShape::cube(1, 64).unwrap(), 1).unwrap();
        let grid = BlockGrid::new(env.shape(), 8).unwrap();
        for r in classify_interior_blocks(&env, &grid, 1.0 / 8.0, 1.0).unwrap() {
            assert!(r.good, "{r:?}");
            assert_eq!(r.witness, None);
        }
        assert!(classify_good_block(&env, &grid, 0, 0.1, 1.0).is_err());
    }

    #[test]
    fn same_far_block_neighbors_make_a_block_bad() {
        // Block 2 is {8..11}; 9 and 10 both reach block 5.
        let spec = KernelSpec::self_similar(1, 1.0).unwrap();
        let env = Environment::from_edges(BoxShape::cube(1, 32).unwrap(), spec, 0, &[(9, 21), (10, 22)]).unwrap();
        let grid = BlockGrid::new(env.shape(), 4).unwrap();
        let r = classify_good_block(&env, &grid, 2, 0.5, 1.0).unwrap();
        assert!(!r.good2);
        assert!(!r.good);
        let w = r.witness.unwrap();
        assert_eq!((w.x, w.y, w.distance), (9, 8, 1));
        let relaxed = classify_good_block(&env, &grid, 2, 0.25, 1.0).unwrap();
        assert!(relaxed.good, "{relaxed:?}");
    }

    #[test]
    fn annulus_shortcut_breaks_good3() {
        // A long edge from block 3's neighbor block 4 into block 6 gives
        // D*(V_3, far) = 2 via vertex 16.
        let spec = KernelSpec::self_similar(1, 1.0).unwrap();
        let env = Environment::from_edges(BoxShape::cube(1, 40).unwrap(), spec, 0, &[(16, 26)]).unwrap();
        let grid = BlockGrid::new(env.shape(), 4).unwrap();
        let r = classify_good_block(&env, &grid, 3, 1.0, 1.0).unwrap();
        assert!(!r.good3);
        assert!(r.good1 && r.good2);
        let w = r.witness.unwrap();
        assert_eq!(w.family, GoodFamily::Annulus);
        assert_eq!((w.x, w.y, w.distance), (15, 26, 2));
    }
}
