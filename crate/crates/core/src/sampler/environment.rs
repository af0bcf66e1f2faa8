use crate::error::{Error, Result};
use crate::kernel::{sup_norm, KernelSpec};
use crate::streams::splitmix64;

use super::shape::{BoxShape, MAX_DIM};

/// One percolation configuration on a closed box.
///
/// Nearest-neighbor edges (sup-norm 1) are open by construction and never
/// stored. Long edges live in a CSR adjacency, sorted per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    shape: BoxShape,
    spec: KernelSpec,
    seed: u64,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    lattice: Lattice,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Lattice {
    dim: usize,
    sides: [usize; MAX_DIM],
    offsets: Vec<([i8; MAX_DIM], isize)>,
}

impl Lattice {
    fn new(shape: &BoxShape) -> Self {
        let dim = shape.dimension();
        let mut sides = [0; MAX_DIM];
        sides[..dim].copy_from_slice(shape.sides());
        let strides = shape.strides();
        let mut offsets = Vec::new();
        let total = 3usize.pow(dim as u32);
        for flat in 0..total {
            let mut rem = flat;
            let mut delta = [0i8; MAX_DIM];
            let mut linear = 0isize;
            for i in 0..dim {
                delta[i] = (rem % 3) as i8 - 1;
                rem /= 3;
                linear += delta[i] as isize * strides[i] as isize;
            }
            if delta.iter().any(|&c| c != 0) {
                offsets.push((delta, linear));
            }
        }
        Lattice { dim, sides, offsets }
    }

    #[inline]
    fn for_each_nn(&self, v: u32, mut f: impl FnMut(u32)) {
        if self.dim == 1 {
            if v > 0 {
                f(v - 1);
            }
            if (v as usize) + 1 < self.sides[0] {
                f(v + 1);
            }
            return;
        }
        let mut coords = [0usize; MAX_DIM];
        let mut rem = v as usize;
        for i in (0..self.dim).rev() {
            coords[i] = rem % self.sides[i];
            rem /= self.sides[i];
        }
        'offsets: for (delta, linear) in &self.offsets {
            for i in 0..self.dim {
                let c = coords[i] as isize + delta[i] as isize;
                if c < 0 || c >= self.sides[i] as isize {
                    continue 'offsets;
                }
            }
            f((v as isize + linear) as u32);
        }
    }
}

impl Environment {
    /// Builds an environment from an explicit list of long edges.
    ///
    /// Rejects self-loops, duplicates, out-of-range indices and edges of
    /// sup-norm below 2.
    pub fn from_edges(shape: BoxShape, spec: KernelSpec, seed: u64, edges: &[(u32, u32)]) -> Result<Self> {
        if shape.dimension() != spec.dimension {
            return Err(Error::DimensionMismatch {
                expected: spec.dimension,
                got: shape.dimension(),
            });
        }
        let n = shape.vertex_count();
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::Domain(format!("edge ({a}, {b}) leaves a box of {n} vertices")));
            }
            if sup_norm(&shape.displacement(a, b)) < 2 {
                return Err(Error::Domain(format!(
                    "edge ({a}, {b}) is a self-loop or a nearest-neighbor edge"
                )));
            }
        }
        let env = Self::from_edges_unchecked(shape, spec, seed, edges)?;
        for v in 0..n as u32 {
            if env.long_neighbors(v).windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Domain(format!("duplicate long edge at vertex {v}")));
            }
        }
        Ok(env)
    }

    pub(crate) fn from_edges_unchecked(
        shape: BoxShape,
        spec: KernelSpec,
        seed: u64,
        edges: &[(u32, u32)],
    ) -> Result<Self> {
        let n = shape.vertex_count();
        let mut offsets = Vec::new();
        offsets
            .try_reserve_exact(n + 1)
            .map_err(|_| Error::Resource { edges: edges.len() as u64 })?;
        offsets.resize(n + 1, 0usize);
        for &(a, b) in edges {
            offsets[a as usize + 1] += 1;
            offsets[b as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut neighbors = Vec::new();
        neighbors
            .try_reserve_exact(2 * edges.len())
            .map_err(|_| Error::Resource { edges: edges.len() as u64 })?;
        neighbors.resize(2 * edges.len(), 0u32);
        let mut cursor = offsets[..n].to_vec();
        for &(a, b) in edges {
            neighbors[cursor[a as usize]] = b;
            cursor[a as usize] += 1;
            neighbors[cursor[b as usize]] = a;
            cursor[b as usize] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        let lattice = Lattice::new(&shape);
        Ok(Environment {
            shape,
            spec,
            seed,
            offsets,
            neighbors,
            lattice,
        })
    }

    pub fn shape(&self) -> &BoxShape {
        &self.shape
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vertex_count(&self) -> usize {
        self.shape.vertex_count()
    }

    pub fn long_edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Long-edge neighbors of `v`, ascending.
    pub fn long_neighbors(&self, v: u32) -> &[u32] {
        &self.neighbors[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }

    /// Long edges as `(i, j)` with `i < j`, in ascending order.
    pub fn long_edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.vertex_count() as u32).flat_map(move |v| {
            self.long_neighbors(v)
                .iter()
                .filter(move |&&u| u > v)
                .map(move |&u| (v, u))
        })
    }

    pub fn has_long_edge(&self, a: u32, b: u32) -> bool {
        self.long_neighbors(a).binary_search(&b).is_ok()
    }

    /// True when `{a, b}` is open, implicit nearest-neighbor edges included.
    pub fn is_open(&self, a: u32, b: u32) -> bool {
        if a == b {
            return false;
        }
        sup_norm(&self.shape.displacement(a, b)) == 1 || self.has_long_edge(a, b)
    }

    /// Calls `f` for the in-box sup-norm neighbors of `v`.
    #[inline]
    pub fn for_each_nn(&self, v: u32, f: impl FnMut(u32)) {
        self.lattice.for_each_nn(v, f)
    }

    /// Calls `f` for every open neighbor of `v`: nearest neighbors first, then
    /// long-edge neighbors.
    #[inline]
    pub fn for_each_neighbor(&self, v: u32, mut f: impl FnMut(u32)) {
        self.lattice.for_each_nn(v, &mut f);
        for &u in self.long_neighbors(v) {
            f(u);
        }
    }

    pub fn degree(&self, v: u32) -> usize {
        let mut nn = 0;
        self.for_each_nn(v, |_| nn += 1);
        nn + self.long_neighbors(v).len()
    }

    /// Digest of the parameters and the (canonically ordered) long-edge set.
    pub fn fingerprint(&self) -> u64 {
        let mut h = splitmix64(self.seed ^ self.spec.beta.to_bits());
        for &s in self.shape.sides() {
            h = splitmix64(h ^ s as u64);
        }
        for (a, b) in self.long_edges() {
            h = splitmix64(h ^ ((a as u64) << 32 | b as u64));
        }
        h
    }

    /// True when every long edge of `self` is also open in `other`.
    pub fn is_subgraph_of(&self, other: &Environment) -> bool {
        self.shape == other.shape && self.long_edges().all(|(a, b)| other.has_long_edge(a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(d: usize) -> KernelSpec {
        KernelSpec::self_similar(d, 1.0).unwrap()
    }

    #[test]
    fn builds_symmetric_sorted_adjacency() {
        let shape = BoxShape::cube(1, 10).unwrap();
        let env = Environment::from_edges(shape, spec(1), 0, &[(0, 5), (2, 9), (0, 3)]).unwrap();
        assert_eq!(env.long_neighbors(0), &[3, 5]);
        assert_eq!(env.long_neighbors(5), &[0]);
        assert_eq!(env.long_edge_count(), 3);
        assert_eq!(env.long_edges().collect::<Vec<_>>(), vec![(0, 3), (0, 5), (2, 9)]);
        assert!(env.is_open(0, 1));
        assert!(env.is_open(9, 2));
        assert!(!env.is_open(0, 2));
        assert_eq!(env.degree(0), 3);
        assert_eq!(env.degree(4), 2);
    }

    #[test]
    fn rejects_invalid_edges() {
        let shape = BoxShape::cube(1, 10).unwrap();
        assert!(Environment::from_edges(shape.clone(), spec(1), 0, &[(0, 1)]).is_err());
        assert!(Environment::from_edges(shape.clone(), spec(1), 0, &[(4, 4)]).is_err());
        assert!(Environment::from_edges(shape.clone(), spec(1), 0, &[(0, 10)]).is_err());
        assert!(Environment::from_edges(shape, spec(1), 0, &[(0, 4), (4, 0)]).is_err());
        let sq = BoxShape::cube(2, 4).unwrap();
        assert!(Environment::from_edges(sq, spec(2), 0, &[(0, 5)]).is_err());
    }

    #[test]
    fn nearest_neighbors_in_two_dimensions() {
        let shape = BoxShape::cube(2, 4).unwrap();
        let env = Environment::from_edges(shape, spec(2), 0, &[]).unwrap();
        let mut corner = vec![];
        env.for_each_nn(0, |u| corner.push(u));
        corner.sort();
        assert_eq!(corner, vec![1, 4, 5]);
        assert_eq!(env.degree(5), 8);
        assert_eq!(env.degree(3), 3);
        assert_eq!(env.degree(1), 5);
    }
}
