use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 8;

/// A box `origin + Π_i {0, …, side_i − 1}`. Vertices are linearized row-major
/// with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxShape {
    sides: Vec<usize>,
    origin: Vec<i64>,
}

impl BoxShape {
    pub fn new(sides: Vec<usize>) -> Result<Self> {
        let d = sides.len();
        Self::with_origin(sides, vec![0; d])
    }

    pub fn cube(d: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; d])
    }

    pub fn with_origin(sides: Vec<usize>, origin: Vec<i64>) -> Result<Self> {
        let d = sides.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Domain(format!("dimension must be in 1..={MAX_DIM}, got {d}")));
        }
        if origin.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: origin.len(),
            });
        }
        if let Some(s) = sides.iter().find(|&&s| s < 2) {
            return Err(Error::Domain(format!("box sides must be at least 2, got {s}")));
        }
        let count = sides
            .iter()
            .try_fold(1u64, |acc, &s| acc.checked_mul(s as u64))
            .filter(|&c| c <= u32::MAX as u64)
            .ok_or_else(|| Error::Domain("vertex count does not fit a 32-bit index".into()))?;
        debug_assert!(count >= 2);
        Ok(BoxShape { sides, origin })
    }

    pub fn dimension(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn origin(&self) -> &[i64] {
        &self.origin
    }

    pub fn is_cube(&self) -> bool {
        self.sides.iter().all(|&s| s == self.sides[0])
    }

    pub fn vertex_count(&self) -> usize {
        self.sides.iter().product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let d = self.dimension();
        let mut strides = vec![1; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.sides[i + 1];
        }
        strides
    }

    /// Linear index of box-relative coordinates.
    pub fn index_of(&self, coords: &[usize]) -> Option<u32> {
        if coords.len() != self.dimension() {
            return None;
        }
        let mut idx = 0usize;
        for (c, s) in coords.iter().zip(&self.sides) {
            if c >= s {
                return None;
            }
            idx = idx * s + c;
        }
        Some(idx as u32)
    }

    pub fn coords_of(&self, v: u32) -> Vec<usize> {
        let mut out = vec![0; self.dimension()];
        self.write_coords(v, &mut out);
        out
    }

    pub fn write_coords(&self, v: u32, out: &mut [usize]) {
        let mut rem = v as usize;
        for i in (0..self.dimension()).rev() {
            out[i] = rem % self.sides[i];
            rem /= self.sides[i];
        }
    }

    /// True when `v` has a coordinate on the outer face of the box.
    pub fn on_boundary(&self, v: u32) -> bool {
        let mut rem = v as usize;
        for i in (0..self.dimension()).rev() {
            let c = rem % self.sides[i];
            if c == 0 || c + 1 == self.sides[i] {
                return true;
            }
            rem /= self.sides[i];
        }
        false
    }

    /// `x − y` in lattice coordinates.
    pub fn displacement(&self, x: u32, y: u32) -> Vec<i64> {
        let a = self.coords_of(x);
        let b = self.coords_of(y);
        a.iter().zip(&b).map(|(&p, &q)| p as i64 - q as i64).collect()
    }

    /// The vertex at the (rounded-down) center of the box.
    pub fn center(&self) -> u32 {
        let c: Vec<usize> = self.sides.iter().map(|s| s / 2).collect();
        self.index_of(&c).expect("center lies in the box")
    }

    pub(crate) fn label(&self) -> String {
        if self.is_cube() {
            self.sides[0].to_string()
        } else {
            self.sides.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("x")
        }
    }
}

/// Number of vertex pairs `{x, x + w}` with both endpoints in the box.
pub fn displacement_pair_count(shape: &BoxShape, w: &[i64]) -> u64 {
    if w.len() != shape.dimension() {
        return 0;
    }
    shape
        .sides()
        .iter()
        .zip(w)
        .map(|(&n, &wi)| (n as u64).saturating_sub(wi.unsigned_abs()))
        .product()
}
