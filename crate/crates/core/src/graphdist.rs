//! Chemical distances on an [`Environment`].
//!
//! All searches are unit-weight BFS over the implicit sup-norm neighbors plus
//! the stored long edges. [`Bfs`] keeps its arrays between runs (reset by a
//! generation stamp), which matters for the many small searches of block
//! classification and exact diameters.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{sup_norm, KernelSpec, KernelTable};
use crate::renorm::RenormGraph;
use crate::sampler::{BoxShape, Environment};

pub const UNREACHABLE: u32 = u32::MAX;

/// Default vertex limit for exact diameters.
pub const EXACT_DIAMETER_THRESHOLD: usize = 20_000;

/// Largest number of random edges [`exact_distance_distribution`] enumerates.
pub const EXHAUSTIVE_EDGE_LIMIT: usize = 24;

/// A subset of the vertices of a box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexSet {
    members: Vec<u32>,
    mask: Vec<bool>,
}

impl VertexSet {
    pub fn new(vertex_count: usize, members: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut mask = vec![false; vertex_count];
        let mut list = Vec::new();
        for v in members {
            let slot = mask
                .get_mut(v as usize)
                .ok_or_else(|| Error::Domain(format!("vertex {v} is outside a box of {vertex_count} vertices")))?;
            if !*slot {
                *slot = true;
                list.push(v);
            }
        }
        list.sort_unstable();
        Ok(VertexSet { members: list, mask })
    }

    pub fn full(vertex_count: usize) -> Self {
        VertexSet {
            members: (0..vertex_count as u32).collect(),
            mask: vec![true; vertex_count],
        }
    }

    /// The vertices of the sub-box `lo ≤ x < hi` (box-relative coordinates).
    pub fn sub_box(shape: &BoxShape, lo: &[usize], hi: &[usize]) -> Result<Self> {
        let d = shape.dimension();
        if lo.len() != d || hi.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: lo.len().min(hi.len()),
            });
        }
        if (0..d).any(|i| lo[i] >= hi[i] || hi[i] > shape.sides()[i]) {
            return Err(Error::Domain("sub-box must be nonempty and inside the box".into()));
        }
        let members = (0..shape.vertex_count() as u32).filter(|&v| {
            let c = shape.coords_of(v);
            (0..d).all(|i| lo[i] <= c[i] && c[i] < hi[i])
        });
        Self::new(shape.vertex_count(), members)
    }

    #[inline]
    pub fn contains(&self, v: u32) -> bool {
        self.mask.get(v as usize).copied().unwrap_or(false)
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_disjoint(&self, other: &VertexSet) -> bool {
        self.members.iter().all(|&v| !other.contains(v))
    }
}

/// Reusable BFS state.
#[derive(Clone, Debug)]
pub struct Bfs {
    dist: Vec<u32>,
    origin: Vec<u32>,
    stamp: Vec<u32>,
    generation: u32,
    order: Vec<u32>,
}

impl Bfs {
    pub fn new(vertex_count: usize) -> Self {
        Bfs {
            dist: vec![UNREACHABLE; vertex_count],
            origin: vec![0; vertex_count],
            stamp: vec![0; vertex_count],
            generation: 0,
            order: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        self.order.clear();
    }

    /// Distance found by the last run, `None` if the vertex was not reached.
    #[inline]
    pub fn dist(&self, v: u32) -> Option<u32> {
        (self.stamp[v as usize] == self.generation).then(|| self.dist[v as usize])
    }

    /// The source from which `v` was first reached.
    #[inline]
    pub fn origin(&self, v: u32) -> Option<u32> {
        (self.stamp[v as usize] == self.generation).then(|| self.origin[v as usize])
    }

    /// Vertices labelled by the last run, in nondecreasing distance order.
    pub fn visited(&self) -> &[u32] {
        &self.order
    }

    #[inline]
    fn label(&mut self, v: u32, d: u32, origin: u32) {
        let i = v as usize;
        self.stamp[i] = self.generation;
        self.dist[i] = d;
        self.origin[i] = origin;
        self.order.push(v);
    }

    /// Plain multi-source BFS over the whole box, up to `max_depth`.
    pub fn run(&mut self, env: &Environment, sources: &[u32], max_depth: u32) {
        self.search(env, sources, max_depth, |_| true, |_, _| true, |_| false, |_, _| false);
    }

    /// General BFS.
    ///
    /// * `domain(u)`: vertices outside the domain are never entered.
    /// * `edge_ok(v, u)`: edges rejected here are never traversed.
    /// * `terminal(u)`: terminal vertices are labelled but not expanded.
    /// * `stop(u, d)`: called on each newly labelled vertex; `true` ends the run.
    ///
    /// Returns the vertex on which `stop` fired, if any.
    #[allow(clippy::too_many_arguments)]
    pub fn search(
        &mut self,
        env: &Environment,
        sources: &[u32],
        max_depth: u32,
        domain: impl Fn(u32) -> bool,
        edge_ok: impl Fn(u32, u32) -> bool,
        terminal: impl Fn(u32) -> bool,
        mut stop: impl FnMut(u32, u32) -> bool,
    ) -> Option<u32> {
        self.reset();
        for &s in sources {
            if self.dist(s).is_none() {
                self.label(s, 0, s);
                if stop(s, 0) {
                    return Some(s);
                }
            }
        }
        let mut head = 0;
        while head < self.order.len() {
            let v = self.order[head];
            head += 1;
            let dv = self.dist[v as usize];
            if dv >= max_depth || (dv > 0 && terminal(v)) {
                continue;
            }
            let origin = self.origin[v as usize];
            let mut hit = None;
            env.for_each_neighbor(v, |u| {
                if hit.is_some() || self.stamp[u as usize] == self.generation || !domain(u) || !edge_ok(v, u) {
                    return;
                }
                self.label(u, dv + 1, origin);
                if stop(u, dv + 1) {
                    hit = Some(u);
                }
            });
            if hit.is_some() {
                return hit;
            }
        }
        None
    }
}

/// Distances from a source set, optionally restricted to a vertex subset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceField {
    pub sources: Vec<u32>,
    /// `UNREACHABLE` marks vertices outside the restriction or cut off by it.
    pub distances: Vec<u32>,
    pub restricted: bool,
}

impl DistanceField {
    pub fn get(&self, v: u32) -> Option<u32> {
        self.distances.get(v as usize).copied().filter(|&d| d != UNREACHABLE)
    }

    pub fn max_finite(&self) -> u32 {
        self.distances.iter().copied().filter(|&d| d != UNREACHABLE).max().unwrap_or(0)
    }
}

pub fn bfs_distances(env: &Environment, sources: &[u32], restriction: Option<&VertexSet>) -> Result<DistanceField> {
    if sources.is_empty() {
        return Err(Error::Precondition("BFS needs at least one source".into()));
    }
    let n = env.vertex_count();
    if let Some(&s) = sources.iter().find(|&&s| s as usize >= n) {
        return Err(Error::Domain(format!("source {s} is outside the box")));
    }
    if let Some(a) = restriction {
        if a.mask.len() != n {
            return Err(Error::Precondition("restriction set belongs to another box".into()));
        }
        if let Some(&s) = sources.iter().find(|&&s| !a.contains(s)) {
            return Err(Error::Precondition(format!("source {s} lies outside the restriction")));
        }
    }
    let mut bfs = Bfs::new(n);
    match restriction {
        Some(a) => bfs.search(env, sources, u32::MAX, |u| a.contains(u), |_, _| true, |_| false, |_, _| false),
        None => {
            bfs.run(env, sources, u32::MAX);
            None
        }
    };
    let mut distances = vec![UNREACHABLE; n];
    for &v in bfs.visited() {
        distances[v as usize] = bfs.dist[v as usize];
    }
    let mut sources = sources.to_vec();
    sources.sort_unstable();
    sources.dedup();
    Ok(DistanceField {
        sources,
        distances,
        restricted: restriction.is_some(),
    })
}

/// Chemical distance between two vertices of the full box.
pub fn point_distance(env: &Environment, bfs: &mut Bfs, from: u32, to: u32) -> u32 {
    let mut found = 0;
    bfs.search(env, &[from], u32::MAX, |_| true, |_, _| true, |_| false, |u, d| {
        found = d;
        u == to
    });
    found
}

/// `k ↦ |B_k|` around one vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BallCurve {
    /// `sizes[k] = |B_k ∩ box|` for `k = 0..=k_max`.
    pub sizes: Vec<u64>,
    /// `saturated[k]`: the ball of radius `k` touches the box boundary, so
    /// `sizes[k]` is only a lower bound for the infinite-volume ball.
    pub saturated: Vec<bool>,
}

impl BallCurve {
    pub fn first_saturated(&self) -> Option<usize> {
        self.saturated.iter().position(|&s| s)
    }
}

pub fn ball_curve(env: &Environment, center: u32, k_max: u32) -> Result<BallCurve> {
    if center as usize >= env.vertex_count() {
        return Err(Error::Domain(format!("center {center} is outside the box")));
    }
    let mut bfs = Bfs::new(env.vertex_count());
    Ok(ball_curve_with(env, &mut bfs, center, k_max))
}

pub(crate) fn ball_curve_with(env: &Environment, bfs: &mut Bfs, center: u32, k_max: u32) -> BallCurve {
    bfs.run(env, &[center], k_max);
    let k_max = k_max as usize;
    let mut counts = vec![0u64; k_max + 1];
    let mut touch = vec![false; k_max + 1];
    let shape = env.shape();
    for &v in bfs.visited() {
        let d = bfs.dist[v as usize] as usize;
        counts[d] += 1;
        if shape.on_boundary(v) {
            touch[d] = true;
        }
    }
    let mut sizes = Vec::with_capacity(k_max + 1);
    let mut saturated = Vec::with_capacity(k_max + 1);
    let (mut acc, mut sat) = (0u64, false);
    for k in 0..=k_max {
        acc += counts[k];
        sat |= touch[k];
        sizes.push(acc);
        saturated.push(sat);
    }
    BallCurve { sizes, saturated }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiameterMode {
    /// BFS from every vertex; refused above `threshold` vertices.
    Exact { threshold: usize },
    /// Two BFS sweeps; a lower bound.
    DoubleSweep,
}

impl DiameterMode {
    pub fn exact() -> Self {
        DiameterMode::Exact {
            threshold: EXACT_DIAMETER_THRESHOLD,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Diameter {
    pub value: u32,
    pub exact: bool,
}

/// `sup_{x,y ∈ A} D_A(x, y)`.
pub fn diameter(env: &Environment, a: &VertexSet, mode: DiameterMode) -> Result<Diameter> {
    if a.is_empty() {
        return Err(Error::Precondition("diameter of an empty set".into()));
    }
    let n = env.vertex_count();
    let eccentricity = |bfs: &mut Bfs, s: u32| -> Result<(u32, u32)> {
        bfs.search(env, &[s], u32::MAX, |u| a.contains(u), |_, _| true, |_| false, |_, _| false);
        if bfs.visited().len() != a.len() {
            return Err(Error::Precondition("set is not connected within itself".into()));
        }
        let far = *bfs.visited().last().expect("source is visited");
        Ok((bfs.dist[far as usize], far))
    };
    match mode {
        DiameterMode::Exact { threshold } => {
            if a.len() > threshold {
                return Err(Error::ThresholdExceeded {
                    size: a.len(),
                    threshold,
                });
            }
            let eccs: Result<Vec<u32>> = a
                .members()
                .par_iter()
                .map_init(|| Bfs::new(n), |bfs, &s| eccentricity(bfs, s).map(|e| e.0))
                .collect();
            Ok(Diameter {
                value: eccs?.into_iter().max().unwrap_or(0),
                exact: true,
            })
        }
        DiameterMode::DoubleSweep => {
            let mut bfs = Bfs::new(n);
            let (_, far) = eccentricity(&mut bfs, a.members()[0])?;
            let (value, _) = eccentricity(&mut bfs, far)?;
            Ok(Diameter { value, exact: false })
        }
    }
}

/// `D*(A, B)`: the shortest open path from `A` to `B` that does not use an
/// edge joining `A` directly to `B`. `None` if no such path exists in the box.
pub fn indirect_distance(env: &Environment, a: &VertexSet, b: &VertexSet) -> Result<Option<u32>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("indirect distance needs nonempty sets".into()));
    }
    if !a.is_disjoint(b) {
        return Err(Error::Precondition("indirect distance needs disjoint sets".into()));
    }
    let mut bfs = Bfs::new(env.vertex_count());
    Ok(indirect_search(env, &mut bfs, a.members(), |v| a.contains(v), |v| b.contains(v), u32::MAX).map(|w| w.0))
}

/// Bounded indirect search from `sources` (the members of `A`). Returns
/// `(distance, a, b)` for the first `B` vertex reached within `max_depth`.
pub(crate) fn indirect_search(
    env: &Environment,
    bfs: &mut Bfs,
    sources: &[u32],
    in_a: impl Fn(u32) -> bool,
    in_b: impl Fn(u32) -> bool,
    max_depth: u32,
) -> Option<(u32, u32, u32)> {
    let hit = bfs.search(
        env,
        sources,
        max_depth,
        |_| true,
        |v, u| !(in_a(v) && in_b(u)),
        &in_b,
        |u, _| in_b(u),
    )?;
    Some((bfs.dist[hit as usize], bfs.origin[hit as usize], hit))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeStats {
    /// Degree of every vertex of the box, implicit edges included.
    pub degrees: Vec<u32>,
    /// `deg^N(r(u))` per block when a renormalized graph is supplied.
    pub neighborhood_degrees: Option<Vec<u64>>,
    /// `S_1(Z)`: vertices outside `Z` with an open edge into `Z`.
    pub boundary: Vec<u32>,
    /// Mean degree over `Z` (0 for empty `Z`).
    pub average_degree: f64,
}

pub fn degree_stats(env: &Environment, z: &VertexSet, renorm: Option<&RenormGraph>) -> DegreeStats {
    let n = env.vertex_count();
    let degrees: Vec<u32> = (0..n as u32).map(|v| env.degree(v) as u32).collect();
    let mut in_boundary = vec![false; n];
    for &v in z.members() {
        env.for_each_neighbor(v, |u| {
            if !z.contains(u) {
                in_boundary[u as usize] = true;
            }
        });
    }
    let boundary: Vec<u32> = (0..n as u32).filter(|&v| in_boundary[v as usize]).collect();
    let average_degree = if z.is_empty() {
        0.0
    } else {
        z.members().iter().map(|&v| degrees[v as usize] as f64).sum::<f64>() / z.len() as f64
    };
    DegreeStats {
        degrees,
        neighborhood_degrees: renorm.map(RenormGraph::neighborhood_degrees),
        boundary,
        average_degree,
    }
}

/// Exact `P(D(x, y) ≤ k)` for each pair, by summing product-Bernoulli weights
/// over every configuration of the random long edges of a small box.
pub fn exact_distance_distribution(
    spec: &KernelSpec,
    shape: &BoxShape,
    pairs: &[(u32, u32)],
    k: u32,
) -> Result<Vec<f64>> {
    if spec.dimension != shape.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension,
            got: shape.dimension(),
        });
    }
    let n = shape.vertex_count();
    if let Some(&(x, y)) = pairs.iter().find(|&&(x, y)| x as usize >= n || y as usize >= n) {
        return Err(Error::Domain(format!("pair ({x}, {y}) is outside the box")));
    }
    let table = KernelTable::for_shape(*spec, shape)?;
    let mut candidates = Vec::new();
    for a in 0..n as u32 {
        for b in a + 1..n as u32 {
            let w = shape.displacement(b, a);
            if sup_norm(&w) >= 2 {
                let p = table.edge_probability(&w)?;
                if p > 0.0 {
                    candidates.push((a, b, p));
                }
            }
        }
    }
    let m = candidates.len();
    if m > EXHAUSTIVE_EDGE_LIMIT {
        return Err(Error::TooManyEdges {
            edges: m,
            limit: EXHAUSTIVE_EDGE_LIMIT,
        });
    }

    let empty = Environment::from_edges_unchecked(shape.clone(), *spec, 0, &[])?;
    let mut nn: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (v, list) in nn.iter_mut().enumerate() {
        empty.for_each_nn(v as u32, |u| list.push(u));
    }

    const CHUNK: u64 = 1 << 10;
    let total = 1u64 << m;
    let chunks: Vec<Vec<f64>> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; pairs.len()];
            let mut adj = nn.clone();
            let mut dist = vec![UNREACHABLE; n];
            let mut queue = Vec::with_capacity(n);
            for mask in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let mut weight = 1.0;
                for (a, list) in adj.iter_mut().enumerate() {
                    list.truncate(nn[a].len());
                }
                for (i, &(a, b, p)) in candidates.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        weight *= p;
                        adj[a as usize].push(b);
                        adj[b as usize].push(a);
                    } else {
                        weight *= 1.0 - p;
                    }
                }
                if weight == 0.0 {
                    continue;
                }
                for (slot, &(x, y)) in acc.iter_mut().zip(pairs) {
                    if bounded_distance(&adj, x, y, k, &mut dist, &mut queue) {
                        *slot += weight;
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; pairs.len()];
    for chunk in chunks {
        for (o, c) in out.iter_mut().zip(chunk) {
            *o += c;
        }
    }
    Ok(out)
}

fn bounded_distance(adj: &[Vec<u32>], x: u32, y: u32, k: u32, dist: &mut [u32], queue: &mut Vec<u32>) -> bool {
    if x == y {
        return true;
    }
    dist.iter_mut().for_each(|d| *d = UNREACHABLE);
    queue.clear();
    dist[x as usize] = 0;
    queue.push(x);
    let mut head = 0;
    while head < queue.len() {
        let v = queue[head];
        head += 1;
        let dv = dist[v as usize];
        if dv >= k {
            continue;
        }
        for &u in &adj[v as usize] {
            if dist[u as usize] == UNREACHABLE {
                if u == y {
                    return true;
                }
                dist[u as usize] = dv + 1;
                queue.push(u);
            }
        }
    }
    false
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
    fn beta_zero_line_distances() {
        let env = plain(1, 50);
        let f = bfs_distances(&env, &[0], None).unwrap();
        assert_eq!(f.get(0), Some(0));
        for x in 0..50u32 {
            assert_eq!(f.get(x), Some(x));
        }
        assert!(bfs_distances(&env, &[], None).is_err());
    }

    #[test]
    fn restricted_distances_flag_unreachable() {
        let spec = KernelSpec::self_similar(1, 1.0).unwrap();
        let env = Environment::from_edges(BoxShape::cube(1, 10).unwrap(), spec, 0, &[(0, 9)]).unwrap();
        let full = bfs_distances(&env, &[0], None).unwrap();
        assert_eq!(full.get(9), Some(1));
        let a = VertexSet::new(10, [0, 1, 2, 3, 7, 8, 9]).unwrap();
        let r = bfs_distances(&env, &[2], Some(&a)).unwrap();
        assert_eq!(r.get(9), Some(3));
        assert_eq!(r.get(7), Some(5));
        assert_eq!(r.get(5), None);
        let cut = VertexSet::new(10, [1, 2, 3, 8]).unwrap();
        let r = bfs_distances(&env, &[1], Some(&cut)).unwrap();
        assert_eq!(r.get(8), None);
        assert!(bfs_distances(&env, &[5], Some(&cut)).is_err());
    }

    #[test]
    fn ball_curves_at_beta_zero() {
        let env = plain(1, 101);
        let c = ball_curve(&env, 50, 60).unwrap();
        for k in 0..50 {
            assert_eq!(c.sizes[k], 2 * k as u64 + 1);
            assert!(!c.saturated[k]);
        }
        assert!(c.saturated[50]);
        assert_eq!(c.first_saturated(), Some(50));
        assert_eq!(c.sizes[60], 101);

        let env = plain(2, 41);
        let c = ball_curve(&env, env.shape().center(), 25).unwrap();
        for k in 0..20 {
            assert_eq!(c.sizes[k], ((2 * k + 1) * (2 * k + 1)) as u64);
        }
        assert_eq!(c.first_saturated(), Some(20));
    }

    #[test]
    fn diameters_at_beta_zero() {
        let env = plain(1, 30);
        let all = VertexSet::full(30);
        assert_eq!(diameter(&env, &all, DiameterMode::exact()).unwrap(), Diameter { value: 29, exact: true });
        let env = plain(2, 12);
        let all = VertexSet::full(144);
        assert_eq!(diameter(&env, &all, DiameterMode::exact()).unwrap().value, 11);
        let lb = diameter(&env, &all, DiameterMode::DoubleSweep).unwrap();
        assert!(!lb.exact);
        assert_eq!(lb.value, 11);
        assert!(matches!(
            diameter(&env, &all, DiameterMode::Exact { threshold: 100 }),
            Err(Error::ThresholdExceeded { size: 144, threshold: 100 })
        ));
    }

    #[test]
    fn indirect_distance_examples() {
        let env = plain(1, 2);
        let a = VertexSet::new(2, [0]).unwrap();
        let b = VertexSet::new(2, [1]).unwrap();
        assert_eq!(indirect_distance(&env, &a, &b).unwrap(), None);
        let env = plain(1, 3);
        let a = VertexSet::new(3, [0]).unwrap();
        let b = VertexSet::new(3, [2]).unwrap();
        assert_eq!(indirect_distance(&env, &a, &b).unwrap(), Some(2));
        let overlap = VertexSet::new(3, [0, 2]).unwrap();
        assert!(indirect_distance(&env, &a, &overlap).is_err());
    }

    #[test]
    fn degree_examples() {
        let env = plain(1, 20);
        let z = VertexSet::new(20, 5..10).unwrap();
        let s = degree_stats(&env, &z, None);
        assert_eq!(s.degrees[7], 2);
        assert_eq!(s.degrees[0], 1);
        assert_eq!(s.boundary, vec![4, 10]);
        assert_eq!(s.average_degree, 2.0);
        assert!(s.neighborhood_degrees.is_none());
    }

    #[test]
    fn degree_average_by_hand() {
        let spec = KernelSpec::self_similar(1, 1.0).unwrap();
        let env = Environment::from_edges(BoxShape::cube(1, 10).unwrap(), spec, 0, &[(0, 4), (0, 9), (3, 7), (2, 5)]).unwrap();
        let z = VertexSet::full(10);
        let s = degree_stats(&env, &z, None);
        // path degrees 1,2,...,2,1 plus two endpoints per long edge
        let by_hand = (1 + 8 * 2 + 1 + 2 * 4) as f64 / 10.0;
        assert_eq!(s.average_degree, by_hand);
        assert_eq!(s.degrees[0], 3);
        assert!(s.boundary.is_empty());
        let z = VertexSet::new(10, [0]).unwrap();
        assert_eq!(degree_stats(&env, &z, None).boundary, vec![1, 4, 9]);
    }

    #[test]
    fn exact_distribution_small_line() {
        let spec = KernelSpec::self_similar(1, 1.0).unwrap();
        let shape = BoxShape::cube(1, 5).unwrap();
        let p = exact_distance_distribution(&spec, &shape, &[(0, 4)], 2).unwrap();
        assert!((p[0] - 11.0 / 36.0).abs() < 1e-14, "{}", p[0]);
        let zero = KernelSpec::self_similar(1, 0.0).unwrap();
        let p = exact_distance_distribution(&zero, &shape, &[(0, 4), (0, 4)], 2).unwrap();
        assert_eq!(p, vec![0.0, 0.0]);
        assert_eq!(exact_distance_distribution(&zero, &shape, &[(0, 4)], 4).unwrap(), vec![1.0]);
        let two = KernelSpec::self_similar(1, 2.0).unwrap();
        let p2 = exact_distance_distribution(&two, &shape, &[(0, 4)], 2).unwrap();
        assert!(p2[0] >= 11.0 / 36.0);
    }

    #[test]
    fn exact_distribution_refuses_large_boxes() {
        let spec = KernelSpec::self_similar(1, 1.0).unwrap();
        let shape = BoxShape::cube(1, 12).unwrap();
        assert!(matches!(
            exact_distance_distribution(&spec, &shape, &[(0, 11)], 3),
            Err(Error::TooManyEdges { .. })
        ));
    }

    #[test]
    fn point_distance_matches_field() {
        let spec = KernelSpec::self_similar(2, 1.0).unwrap();
        let env = sample_box(&spec, &BoxShape::cube(2, 20).unwrap(), 4).unwrap();
        let f = bfs_distances(&env, &[0], None).unwrap();
        let mut bfs = Bfs::new(env.vertex_count());
        for v in [0u32, 19, 210, 399] {
            assert_eq!(point_distance(&env, &mut bfs, 0, v), f.get(v).unwrap());
        }
    }
}
