//! The self-similar kernel `J`, edge probabilities and the expected degree.
//!
//! For a displacement `w ∈ Z^d`,
//!
//! ```text
//! J(w) = ∫_{[0,1)^d} ∫_{w+[0,1)^d} ‖x − y‖^{−2d} dy dx
//!      = ∫_{[−1,1]^d} Π_i (1 − |z_i|) ‖w + z‖^{−2d} dz
//! ```
//!
//! (the second form integrates over the difference `z = y − x − w`, whose
//! density is the tent product). The integral diverges exactly when
//! `‖w‖_∞ = 1`. In `d = 1` it has the closed form `ln(k² / (k² − 1))`.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute accuracy requested from the `d ≥ 2` quadrature.
pub const QUADRATURE_TOLERANCE: f64 = 1e-12;

/// An element of `[0, +∞]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }
}

impl std::fmt::Display for ExtReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v:.16e}"),
            ExtReal::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelVariant {
    SelfSimilar,
    /// `J(w) = ‖w‖^{−s}` for long edges. Only a contrast option: it is not
    /// invariant under renormalization.
    PowerLaw { s: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dimension: usize,
    pub beta: f64,
    pub variant: KernelVariant,
}

impl KernelSpec {
    pub fn new(dimension: usize, beta: f64, variant: KernelVariant) -> Result<Self> {
        let spec = KernelSpec {
            dimension,
            beta,
            variant,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn self_similar(dimension: usize, beta: f64) -> Result<Self> {
        Self::new(dimension, beta, KernelVariant::SelfSimilar)
    }

    pub fn power_law(dimension: usize, beta: f64, s: f64) -> Result<Self> {
        Self::new(dimension, beta, KernelVariant::PowerLaw { s })
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if let KernelVariant::PowerLaw { s } = self.variant {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Domain(format!("power-law exponent must be > 0, got {s}")));
            }
        }
        Ok(())
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.dimension, beta, self.variant)
    }

    pub fn is_self_similar(&self) -> bool {
        matches!(self.variant, KernelVariant::SelfSimilar)
    }
}

/// Sorted absolute coordinates, largest first. Shared by every displacement
/// in the orbit of the hyperoctahedral group.
pub fn canonicalize(w: &[i64]) -> Vec<u64> {
    let mut c: Vec<u64> = w.iter().map(|x| x.unsigned_abs()).collect();
    c.sort_unstable_by(|a, b| b.cmp(a));
    c
}

pub fn sup_norm(w: &[i64]) -> u64 {
    w.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0)
}

/// Evaluates `J(w)`.
pub fn kernel_value(spec: &KernelSpec, w: &[i64]) -> Result<ExtReal> {
    if w.len() != spec.dimension {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension,
            got: w.len(),
        });
    }
    let c = canonicalize(w);
    canonical_kernel_value(spec, &c)
}

fn canonical_kernel_value(spec: &KernelSpec, c: &[u64]) -> Result<ExtReal> {
    let m = c.first().copied().unwrap_or(0);
    if m == 0 {
        return Err(Error::Domain("kernel is undefined at displacement 0".into()));
    }
    if m == 1 {
        return Ok(ExtReal::Infinite);
    }
    let value = match spec.variant {
        KernelVariant::SelfSimilar if c.len() == 1 => closed_form_1d(m),
        KernelVariant::SelfSimilar => quadrature_value(c, QUADRATURE_TOLERANCE),
        KernelVariant::PowerLaw { s } => {
            let r2: f64 = c.iter().map(|&x| (x as f64) * (x as f64)).sum();
            r2.powf(-s / 2.0)
        }
    };
    Ok(ExtReal::Finite(value))
}

/// `ln(k² / (k² − 1))`, the one-dimensional kernel, for `k ≥ 2`.
pub fn closed_form_1d(k: u64) -> f64 {
    let k = k as f64;
    -(-1.0 / (k * k)).ln_1p()
}

/// `1 − exp(−β J)` with the conventions `0·∞ = ∞`, `e^{−∞} = 0`.
pub fn probability_from_kernel(beta: f64, j: ExtReal) -> f64 {
    match j {
        ExtReal::Infinite => 1.0,
        ExtReal::Finite(v) => -(-beta * v).exp_m1(),
    }
}

// ---------------------------------------------------------------------------
// Quadrature for d ≥ 2 (also valid for d = 1).

const GL_ORDER: usize = 12;
const MAX_DEPTH: u32 = 24;

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_rule(GL_ORDER))
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn tent_integrand(w: &[f64], z: &[f64]) -> f64 {
    let d = w.len();
    let mut tent = 1.0;
    let mut r2 = 0.0;
    for i in 0..d {
        tent *= 1.0 - z[i].abs();
        let y = w[i] + z[i];
        r2 += y * y;
    }
    tent * r2.powi(-(d as i32))
}

/// Tensor-product Gauss–Legendre over an axis-aligned cell.
fn cell_rule(w: &[f64], lo: &[f64], hi: &[f64], z: &mut [f64]) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let d = w.len();
    let q = nodes.len();
    let half: Vec<f64> = (0..d).map(|i| 0.5 * (hi[i] - lo[i])).collect();
    let mid: Vec<f64> = (0..d).map(|i| 0.5 * (hi[i] + lo[i])).collect();
    let jac: f64 = half.iter().product();
    let total = q.pow(d as u32);
    let mut sum = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut weight = 1.0;
        for i in 0..d {
            let k = rem % q;
            rem /= q;
            z[i] = mid[i] + half[i] * nodes[k];
            weight *= weights[k];
        }
        sum += weight * tent_integrand(w, z);
    }
    sum * jac
}

fn children(lo: &[f64], hi: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = lo.len();
    (0..1usize << d)
        .map(|mask| {
            let mut clo = lo.to_vec();
            let mut chi = hi.to_vec();
            for i in 0..d {
                let m = 0.5 * (lo[i] + hi[i]);
                if mask >> i & 1 == 0 {
                    chi[i] = m;
                } else {
                    clo[i] = m;
                }
            }
            (clo, chi)
        })
        .collect()
}

/// `J` at a canonical displacement by adaptive dyadic Gauss–Legendre
/// quadrature of the tent-weighted form. The tent has kinks on the
/// coordinate hyperplanes, so the domain is first split into orthants on
/// which the integrand is analytic.
pub fn quadrature_value(c: &[u64], tolerance: f64) -> f64 {
    let d = c.len();
    let w: Vec<f64> = c.iter().map(|&x| x as f64).collect();
    let mut z = vec![0.0; d];
    let orthants = 1usize << d;
    let mut total = 0.0;
    for mask in 0..orthants {
        let lo: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 0 { -1.0 } else { 0.0 }).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + 1.0).collect();
        let coarse = cell_rule(&w, &lo, &hi, &mut z);
        total += refine(&w, &lo, &hi, coarse, tolerance / orthants as f64, 0, &mut z);
    }
    total
}

fn refine(w: &[f64], lo: &[f64], hi: &[f64], coarse: f64, tol: f64, depth: u32, z: &mut [f64]) -> f64 {
    let kids = children(lo, hi);
    let vals: Vec<f64> = kids.iter().map(|(l, h)| cell_rule(w, l, h, z)).collect();
    let fine: f64 = vals.iter().sum();
    if (fine - coarse).abs() <= tol || depth >= MAX_DEPTH {
        return fine;
    }
    let child_tol = tol / kids.len() as f64;
    kids.iter()
        .zip(vals)
        .map(|((l, h), v)| refine(w, l, h, v, child_tol, depth + 1, z))
        .sum()
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelEntry {
    pub j: ExtReal,
    pub p: f64,
}

/// Kernel values and edge probabilities for every canonical displacement with
/// `1 ≤ ‖w‖_∞ ≤ radius`. Immutable once built; lookups beyond the radius are
/// evaluated on the fly.
#[derive(Clone, Debug)]
pub struct KernelTable {
    spec: KernelSpec,
    radius: u64,
    entries: HashMap<Vec<u64>, KernelEntry>,
}

impl KernelTable {
    pub fn build(spec: KernelSpec, radius: u64) -> Result<Self> {
        spec.validate()?;
        if radius == 0 {
            return Err(Error::Domain("table radius must be positive".into()));
        }
        let mut table = KernelTable {
            spec,
            radius: 0,
            entries: HashMap::new(),
        };
        table.extend(radius)?;
        Ok(table)
    }

    /// A table holding exactly the classes that occur between two vertices of
    /// `shape`; cheaper than [`KernelTable::build`] for elongated boxes.
    pub fn for_shape(spec: KernelSpec, shape: &crate::sampler::BoxShape) -> Result<Self> {
        spec.validate()?;
        if spec.dimension != shape.dimension() {
            return Err(Error::DimensionMismatch {
                expected: spec.dimension,
                got: shape.dimension(),
            });
        }
        let mut classes: Vec<Vec<u64>> = crate::sampler::displacement_classes(shape)
            .iter()
            .map(|w| canonicalize(w))
            .collect();
        classes.sort_unstable();
        classes.dedup();
        let computed: Result<Vec<(Vec<u64>, KernelEntry)>> = classes
            .into_par_iter()
            .map(|c| {
                let j = canonical_kernel_value(&spec, &c)?;
                Ok((c, KernelEntry { j, p: probability_from_kernel(spec.beta, j) }))
            })
            .collect();
        Ok(KernelTable {
            spec,
            radius: shape.sides().iter().copied().min().unwrap_or(2) as u64 - 1,
            entries: computed?.into_iter().collect(),
        })
    }

    /// Grows the table to cover `‖w‖_∞ ≤ radius`.
    pub fn extend(&mut self, radius: u64) -> Result<()> {
        if radius <= self.radius {
            return Ok(());
        }
        let fresh: Vec<Vec<u64>> = canonical_classes(self.spec.dimension, radius)
            .into_iter()
            .filter(|c| c[0] > self.radius)
            .collect();
        let spec = self.spec;
        let computed: Result<Vec<(Vec<u64>, KernelEntry)>> = fresh
            .into_par_iter()
            .map(|c| {
                let j = canonical_kernel_value(&spec, &c)?;
                let p = probability_from_kernel(spec.beta, j);
                Ok((c, KernelEntry { j, p }))
            })
            .collect();
        self.entries.extend(computed?);
        self.radius = radius;
        Ok(())
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn radius(&self) -> u64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, w: &[i64]) -> Result<KernelEntry> {
        if w.len() != self.spec.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dimension,
                got: w.len(),
            });
        }
        self.canonical_entry(&canonicalize(w))
    }

    pub fn canonical_entry(&self, c: &[u64]) -> Result<KernelEntry> {
        if let Some(e) = self.entries.get(c) {
            return Ok(*e);
        }
        let j = canonical_kernel_value(&self.spec, c)?;
        Ok(KernelEntry {
            j,
            p: probability_from_kernel(self.spec.beta, j),
        })
    }

    pub fn edge_probability(&self, w: &[i64]) -> Result<f64> {
        Ok(self.entry(w)?.p)
    }

    /// Table rows in canonical order: by sup-norm, then lexicographically.
    pub fn rows(&self) -> Vec<(Vec<u64>, KernelEntry)> {
        let mut rows: Vec<_> = self.entries.iter().map(|(k, v)| (k.clone(), *v)).collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        rows
    }
}

pub fn edge_probability(table: &KernelTable, w: &[i64]) -> Result<f64> {
    table.edge_probability(w)
}

/// Nonincreasing tuples of length `d` with entries in `0..=radius`, excluding
/// the zero tuple.
pub fn canonical_classes(d: usize, radius: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(d);
    fn rec(d: usize, max: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == d {
            if cur[0] > 0 {
                out.push(cur.clone());
            }
            return;
        }
        for v in 0..=max {
            cur.push(v);
            rec(d, v, cur, out);
            cur.pop();
        }
    }
    rec(d, radius, &mut cur, &mut out);
    out
}

/// Number of signed coordinate permutations of `w` that give distinct vectors.
pub fn orbit_size(c: &[u64]) -> u64 {
    let d = c.len() as u64;
    let mut count = factorial(d);
    let mut i = 0;
    while i < c.len() {
        let mut j = i;
        while j < c.len() && c[j] == c[i] {
            j += 1;
        }
        count /= factorial((j - i) as u64);
        i = j;
    }
    let nonzero = c.iter().filter(|&&x| x != 0).count() as u32;
    count << nonzero
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

/// Volume of the Euclidean unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::PI.powf(h) / statrs::function::gamma::gamma(h + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedDegree {
    pub mu: f64,
    /// Upper bound on `Σ_{‖w‖_∞ > R} p(w)`.
    pub tail_bound: f64,
}

/// Truncated expected degree `μ_β` of a vertex of `Z^d`.
///
/// The tail bound uses `p ≤ βJ`. For the self-similar kernel the omitted
/// mass is `β ∫_{[0,1)^d} ∫_{y ∉ [−R, R+1)^d} ‖x − y‖^{−2d}`, and every such
/// `y` is at Euclidean distance `≥ R` from `x`, so the tail is at most
/// `β ω_d R^{−d}` with `ω_d` the unit-ball volume.
pub fn expected_degree(table: &KernelTable, radius: u64) -> Result<ExpectedDegree> {
    if radius < 2 {
        return Err(Error::Precondition("truncation radius must be at least 2".into()));
    }
    let spec = *table.spec();
    let d = spec.dimension;
    let mut mu = 3f64.powi(d as i32) - 1.0;
    for c in canonical_classes(d, radius) {
        if c[0] < 2 {
            continue;
        }
        let e = table.canonical_entry(&c)?;
        mu += orbit_size(&c) as f64 * e.p;
    }
    let r = radius as f64;
    let tail_bound = match spec.variant {
        KernelVariant::SelfSimilar => spec.beta * unit_ball_volume(d) * r.powi(-(d as i32)),
        KernelVariant::PowerLaw { s } => {
            let df = d as f64;
            if s <= df {
                f64::INFINITY
            } else {
                // Each lattice term is dominated by the integral over its unit
                // cell, inflated by the worst-case ratio of norms in the cell.
                let slack = (1.0 + df.sqrt() / (2.0 * (r + 1.0))).powf(s);
                let surface = df * unit_ball_volume(d);
                spec.beta * slack * surface * (r + 0.5).powf(df - s) / (s - df)
            }
        }
    };
    Ok(ExpectedDegree { mu, tail_bound })
}

/// `Σ_{x ∈ V_0^n} Σ_{y ∈ V_w^n} J(y − x)`, grouped by fine displacement
/// `n·w + t` with multiplicity `Π_i (n − |t_i|)`.
pub fn block_kernel_sum(spec: &KernelSpec, n: u64, w: &[i64]) -> Result<f64> {
    if w.len() != spec.dimension {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension,
            got: w.len(),
        });
    }
    if n == 0 {
        return Err(Error::Domain("block side must be positive".into()));
    }
    if sup_norm(w) < 2 {
        return Err(Error::Precondition(
            "block kernel sums need a coarse displacement with sup-norm at least 2".into(),
        ));
    }
    let d = spec.dimension;
    let n_i = n as i64;
    let span = (2 * n - 1) as usize;
    let total = span.pow(d as u32);
    let mut cache: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut sum = 0.0;
    let mut fine = vec![0i64; d];
    for flat in 0..total {
        let mut rem = flat;
        let mut mult = 1.0;
        for i in 0..d {
            let t = (rem % span) as i64 - (n_i - 1);
            rem /= span;
            mult *= (n_i - t.abs()) as f64;
            fine[i] = n_i * w[i] + t;
        }
        let c = canonicalize(&fine);
        let j = match cache.get(&c) {
            Some(v) => *v,
            None => {
                let v = canonical_kernel_value(spec, &c)?
                    .finite()
                    .ok_or_else(|| Error::IdentityViolation("infinite fine kernel in a far block pair".into()))?;
                cache.insert(c, v);
                v
            }
        };
        sum += mult * j;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ss(d: usize, beta: f64) -> KernelSpec {
        KernelSpec::self_similar(d, beta).unwrap()
    }

    #[test]
    fn one_dimensional_value_at_two() {
        let j = kernel_value(&ss(1, 1.0), &[2]).unwrap().finite().unwrap();
        assert!((j - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((j - 0.287_682_072_451_780_9).abs() < 1e-15);
    }

    #[test]
    fn nearest_neighbors_are_infinite() {
        assert_eq!(kernel_value(&ss(2, 1.0), &[1, 0]).unwrap(), ExtReal::Infinite);
        assert_eq!(kernel_value(&ss(2, 1.0), &[-1, 1]).unwrap(), ExtReal::Infinite);
        assert_eq!(kernel_value(&ss(3, 0.0), &[0, 0, -1]).unwrap(), ExtReal::Infinite);
        assert!(kernel_value(&ss(2, 1.0), &[2, 1]).unwrap().finite().is_some());
    }

    #[test]
    fn zero_displacement_is_a_domain_error() {
        assert!(matches!(kernel_value(&ss(2, 1.0), &[0, 0]), Err(Error::Domain(_))));
        let t = KernelTable::build(ss(1, 1.0), 4).unwrap();
        assert!(t.edge_probability(&[0]).is_err());
    }

    #[test]
    fn far_value_matches_power_asymptotics() {
        let j = kernel_value(&ss(1, 1.0), &[100]).unwrap().finite().unwrap();
        assert!((1e-4..=1e-4 * 1.01).contains(&j), "{j}");
    }

    #[test]
    fn edge_probability_examples() {
        let t = KernelTable::build(ss(1, 1.0), 8).unwrap();
        assert!((t.edge_probability(&[2]).unwrap() - 0.25).abs() < 1e-15);
        assert!((t.edge_probability(&[-3]).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(t.edge_probability(&[1]).unwrap(), 1.0);
        let t0 = KernelTable::build(ss(1, 0.0), 8).unwrap();
        assert_eq!(t0.edge_probability(&[2]).unwrap(), 0.0);
        assert_eq!(t0.edge_probability(&[-1]).unwrap(), 1.0);
        let t2 = KernelTable::build(ss(2, 0.3), 3).unwrap();
        assert_eq!(t2.edge_probability(&[1, -1]).unwrap(), 1.0);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_rule(12);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // exact up to degree 23
        let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert!((m - 2.0 / 23.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_agrees_with_closed_form_in_one_dimension() {
        for k in 2..=64u64 {
            let q = quadrature_value(&[k], 1e-13);
            assert!((q - closed_form_1d(k)).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn symmetry_under_signed_permutations() {
        let spec = ss(2, 1.0);
        let a = kernel_value(&spec, &[3, -2]).unwrap();
        for w in [[2, 3], [-2, 3], [-3, -2], [3, 2], [-2, -3]] {
            assert_eq!(kernel_value(&spec, &w).unwrap(), a);
        }
    }

    #[test]
    fn strictly_decreasing_along_axis_ray() {
        let spec = ss(2, 1.0);
        let mut prev = f64::INFINITY;
        for k in 2..20 {
            let j = kernel_value(&spec, &[k, 0]).unwrap().finite().unwrap();
            assert!(j < prev);
            prev = j;
        }
    }

    #[test]
    fn orbit_sizes() {
        assert_eq!(orbit_size(&[2]), 2);
        assert_eq!(orbit_size(&[2, 0]), 4);
        assert_eq!(orbit_size(&[2, 2]), 4);
        assert_eq!(orbit_size(&[3, 2]), 8);
        assert_eq!(orbit_size(&[3, 2, 0]), 24);
        // every vector with sup-norm <= 3 in Z^2 minus the origin
        let total: u64 = canonical_classes(2, 3).iter().map(|c| orbit_size(c)).sum();
        assert_eq!(total, 48);
    }

    #[test]
    fn expected_degree_trivial_cases() {
        let e = expected_degree(&KernelTable::build(ss(1, 0.0), 10).unwrap(), 10).unwrap();
        assert_eq!(e.mu, 2.0);
        assert_eq!(e.tail_bound, 0.0);
        let e = expected_degree(&KernelTable::build(ss(2, 0.0), 5).unwrap(), 5).unwrap();
        assert_eq!(e.mu, 8.0);
        assert!(expected_degree(&KernelTable::build(ss(1, 0.0), 5).unwrap(), 1).is_err());
    }

    #[test]
    fn expected_degree_series_limit_in_one_dimension() {
        // p(k) = 1/k^2 at beta = 1, so mu = 2 + 2 (pi^2/6 - 1) in the limit
        let limit = 2.0 + 2.0 * (std::f64::consts::PI.powi(2) / 6.0 - 1.0);
        let t = KernelTable::build(ss(1, 1.0), 4000).unwrap();
        let e = expected_degree(&t, 4000).unwrap();
        assert!(e.mu <= limit);
        assert!(limit - e.mu <= e.tail_bound, "{} {} {}", e.mu, limit, e.tail_bound);
        assert!((e.mu - 3.289_868).abs() < 1e-3);
        let e_small = expected_degree(&t, 100).unwrap();
        assert!(e_small.mu <= e.mu);
        assert!(limit - e_small.mu <= e_small.tail_bound);
    }

    #[test]
    fn block_kernel_sum_one_dimensional_example() {
        // {3,4,4,5}: (9/8)(16/15)^2(25/24) = 4/3
        let s = block_kernel_sum(&ss(1, 1.0), 2, &[2]).unwrap();
        assert!((s - (4.0f64 / 3.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn power_law_variant() {
        let spec = KernelSpec::power_law(2, 1.0, 3.0).unwrap();
        let j = kernel_value(&spec, &[3, 4]).unwrap().finite().unwrap();
        assert!((j - 5f64.powi(-3)).abs() < 1e-15);
        assert_eq!(kernel_value(&spec, &[1, 1]).unwrap(), ExtReal::Infinite);
        assert!(KernelSpec::power_law(1, 1.0, 0.0).is_err());
        assert!(KernelSpec::self_similar(0, 1.0).is_err());
        assert!(KernelSpec::self_similar(1, -1.0).is_err());
    }
}
