//! Monte Carlo estimators for the distance exponent `θ(β, d)` and the laws
//! derived from it.
//!
//! Every replica is sampled from its own seed
//! `derive_seed(master, [REPLICA, experiment, size index, replica index])`,
//! replicas run in parallel, and results are collected in replica order, so
//! every output is a pure function of the configuration.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphdist::{diameter, Bfs, DiameterMode, VertexSet};
use crate::kernel::{KernelSpec, KernelTable};
use crate::renorm::{classify_interior_blocks, BlockGrid};
use crate::sampler::{sample_box_with_table, sample_coupled_with_tables, BoxShape, Environment};
use crate::stats::{self, fit_line, median_in_place, percentile_interval, resample, wilson, Proportion, TrendTest};
use crate::streams::{derive_seed, stream, tag};

/// Experiment discriminators mixed into replica seeds.
pub mod experiment {
    pub const THETA: u64 = 1;
    pub const VOLUME: u64 = 2;
    pub const BALL_TAIL: u64 = 3;
    pub const LOWER_TAIL: u64 = 4;
    pub const MOMENTS: u64 = 5;
    pub const METRIC: u64 = 6;
    pub const COUPLING: u64 = 7;
    pub const GOOD_BLOCKS: u64 = 8;
    pub const THRESHOLD: u64 = 9;
    pub const BOOTSTRAP: u64 = 10;
    pub const RENORM: u64 = 11;
}

pub fn replica_seed(master: u64, experiment: u64, size_index: u64, replica: u64) -> u64 {
    derive_seed(master, &[tag::REPLICA, experiment, size_index, replica])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub spec: KernelSpec,
    /// Box sides, strictly increasing.
    pub sizes: Vec<usize>,
    pub replicas: usize,
    pub seed: u64,
    pub delta: f64,
    pub block_k: usize,
    /// Lower-tail `ε` values, strictly increasing in `(0, ∞)`.
    pub eps_grid: Vec<f64>,
    pub exact_threshold: usize,
    pub bootstrap_rounds: usize,
    /// Transverse side `m` for `n × m^{d−1}` boxes in distance-only
    /// experiments (`d ≥ 2`).
    pub elongation: Option<usize>,
    /// `‖x − y‖` of the lower-tail pair.
    pub tail_distance: usize,
    pub tail_replicas: usize,
    /// Chemical radius of the ball in the ball-tail experiment.
    pub ball_radius: u32,
    /// Radius range of the volume-growth fit.
    pub volume_min_radius: u32,
    pub volume_max_radius: u32,
    /// Box side for ball experiments.
    pub ball_box: usize,
    pub ball_replicas: usize,
    pub k_max: u32,
    pub eta: Option<f64>,
    /// Blocks per side for the metric box count.
    pub blocks_per_side: Vec<usize>,
    pub theta_hat: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            spec: KernelSpec::self_similar(1, 1.0).expect("valid default kernel"),
            sizes: vec![64, 128, 256, 512, 1024],
            replicas: 200,
            seed: 1,
            delta: 0.5,
            block_k: 8,
            eps_grid: (0..12).map(|i| 2f64.powf(-3.0 + 0.25 * i as f64)).collect(),
            exact_threshold: crate::graphdist::EXACT_DIAMETER_THRESHOLD,
            bootstrap_rounds: 1000,
            elongation: None,
            tail_distance: 1024,
            tail_replicas: 40_000,
            ball_radius: 32,
            volume_min_radius: 4,
            volume_max_radius: 64,
            ball_box: 1 << 16,
            ball_replicas: 2000,
            k_max: 16,
            eta: None,
            blocks_per_side: vec![8, 16, 32],
            theta_hat: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let bad = |key: &str, msg: &str| Err(Error::Domain(format!("{key}: {msg}")));
        if self.sizes.is_empty() || self.sizes.iter().any(|&n| n < 2) {
            return bad("sizes", "need at least one size, each at least 2");
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sizes", "not strictly increasing");
        }
        if self.replicas == 0 || self.tail_replicas == 0 || self.ball_replicas == 0 {
            return bad("replicas", "must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta", "must be positive");
        }
        if self.block_k < 2 {
            return bad("block_k", "must be at least 2");
        }
        if self.eps_grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) || self.eps_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("eps_grid", "values must be positive and strictly increasing");
        }
        if self.bootstrap_rounds == 0 {
            return bad("bootstrap_rounds", "must be at least 1");
        }
        if self.elongation.is_some_and(|m| m < 2) {
            return bad("elongation", "transverse side must be at least 2");
        }
        if self.tail_distance < 2 {
            return bad("tail_distance", "must be at least 2");
        }
        if self.ball_box < 3 || self.ball_radius == 0 || self.k_max == 0 {
            return bad("ball_box", "ball experiments need a box of side ≥ 3 and positive radii");
        }
        if self.volume_min_radius == 0 || self.volume_min_radius > self.volume_max_radius {
            return bad("volume_min_radius", "need 1 ≤ volume_min_radius ≤ volume_max_radius");
        }
        if self.blocks_per_side.iter().any(|&m| m < 2) {
            return bad("blocks_per_side", "need at least two blocks per side");
        }
        if let Some(t) = self.theta_hat {
            if !(t > 0.0 && t.is_finite()) {
                return bad("theta_hat", "must be positive");
            }
            check_eps_grid(&self.eps_grid, self.tail_distance, t)?;
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn largest_size(&self) -> usize {
        *self.sizes.last().expect("validated sizes")
    }
}

/// Rejects grids with `ε ‖x‖^θ̂ < 1`.
pub fn check_eps_grid(eps: &[f64], distance: usize, theta_hat: f64) -> Result<()> {
    let scale = (distance as f64).powf(theta_hat);
    if let Some(e) = eps.iter().find(|&&e| e * scale < 1.0) {
        return Err(Error::Precondition(format!(
            "eps_grid: ε = {e} gives ε‖x‖^θ̂ = {} < 1 at ‖x‖ = {distance}",
            e * scale
        )));
    }
    Ok(())
}

/// A `θ̂` with an optional confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaHat {
    pub value: f64,
    pub ci: Option<[f64; 2]>,
}

impl From<f64> for ThetaHat {
    fn from(value: f64) -> Self {
        ThetaHat { value, ci: None }
    }
}

impl From<&ScalingFit> for ThetaHat {
    fn from(fit: &ScalingFit) -> Self {
        ThetaHat {
            value: fit.slope,
            ci: Some(fit.ci),
        }
    }
}

impl ThetaHat {
    fn check(&self) -> Result<f64> {
        if self.value > 0.0 && self.value.is_finite() {
            Ok(self.value)
        } else {
            Err(Error::Domain(format!("θ̂ must be positive, got {}", self.value)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Aggregate {
    Median,
    Mean,
}

impl Aggregate {
    fn apply(self, v: &mut [f64]) -> f64 {
        match self {
            Aggregate::Median => median_in_place(v),
            Aggregate::Mean => stats::mean(v),
        }
    }
}

/// A log-log least-squares fit with a 95% percentile bootstrap interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    /// `ln x`.
    pub abscissas: Vec<f64>,
    /// `ln y`.
    pub ordinates: Vec<f64>,
    /// `y` per point, e.g. the per-size medians.
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Clamped so that it always contains the slope.
    pub ci: [f64; 2],
    pub bootstrap_rounds: usize,
}

impl ScalingFit {
    pub fn ci_width(&self) -> f64 {
        self.ci[1] - self.ci[0]
    }
}

fn log_fit(xs: &[f64], ys: &[f64]) -> Result<(Vec<f64>, Vec<f64>, stats::LineFit)> {
    if xs.len() < 4 || xs.len() != ys.len() {
        return Err(Error::Precondition(format!("a power-law fit needs at least 4 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("power-law fits need positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let fit = fit_line(&lx, &ly).ok_or_else(|| Error::Domain("abscissas must not all coincide".into()))?;
    Ok((lx, ly, fit))
}

fn clamp_ci(ci: Option<(f64, f64)>, slope: f64) -> [f64; 2] {
    match ci {
        Some((lo, hi)) => [lo.min(slope), hi.max(slope)],
        None => [slope, slope],
    }
}

/// Power-law fit of `(x, y)` pairs; the interval resamples the pairs.
pub fn fit_power_law(points: &[(f64, f64)], rounds: usize, seed: u64) -> Result<ScalingFit> {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (lx, ly, fit) = log_fit(&xs, &ys)?;
    let n = lx.len();
    let mut rng = stream(seed, &[tag::BOOTSTRAP, experiment::BOOTSTRAP]);
    let mut slopes = Vec::with_capacity(rounds);
    let (mut bx, mut by) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..rounds {
        bx.clear();
        by.clear();
        for _ in 0..n {
            let i = rand::Rng::random_range(&mut rng, 0..n);
            bx.push(lx[i]);
            by.push(ly[i]);
        }
        if let Some(f) = fit_line(&bx, &by) {
            slopes.push(f.slope);
        }
    }
    Ok(ScalingFit {
        abscissas: lx,
        ordinates: ly,
        values: ys,
        slope: fit.slope,
        intercept: fit.intercept,
        ci: clamp_ci(percentile_interval(slopes), fit.slope),
        bootstrap_rounds: rounds,
    })
}

/// Power-law fit of an aggregate of replicate samples against `xs`; the
/// interval resamples replicates within every point.
pub fn fit_power_law_replicates(
    xs: &[f64],
    samples: &[Vec<f64>],
    aggregate: Aggregate,
    rounds: usize,
    seed: u64,
) -> Result<ScalingFit> {
    if samples.len() != xs.len() || samples.iter().any(Vec::is_empty) {
        return Err(Error::Precondition("every point needs at least one replicate".into()));
    }
    let ys: Vec<f64> = samples.iter().map(|s| aggregate.apply(&mut s.clone())).collect();
    let (lx, ly, fit) = log_fit(xs, &ys)?;
    let slopes: Vec<f64> = (0..rounds as u64)
        .into_par_iter()
        .map(|round| {
            let mut rng = stream(seed, &[tag::BOOTSTRAP, round]);
            let mut buf = Vec::new();
            let by: Vec<f64> = samples
                .iter()
                .map(|s| {
                    resample(&mut rng, s, &mut buf);
                    aggregate.apply(&mut buf).ln()
                })
                .collect();
            fit_line(&lx, &by).map_or(f64::NAN, |f| f.slope)
        })
        .collect();
    Ok(ScalingFit {
        abscissas: lx,
        ordinates: ly,
        values: ys,
        slope: fit.slope,
        intercept: fit.intercept,
        ci: clamp_ci(percentile_interval(slopes), fit.slope),
        bootstrap_rounds: rounds,
    })
}

fn run_replicas<T: Send>(count: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count as u64).into_par_iter().map(f).collect()
}

/// Box used for point-to-point distances: `n × m^{d−1}` when elongated.
fn distance_shape(config: &ExperimentConfig, n: usize) -> Result<(BoxShape, bool)> {
    let d = config.dimension();
    match config.elongation {
        Some(m) if d >= 2 => {
            let mut sides = vec![m; d];
            sides[0] = n;
            Ok((BoxShape::new(sides)?, true))
        }
        _ => Ok((BoxShape::cube(d, n)?, false)),
    }
}

/// Vertex with coordinates `c` along axis 0 and `transverse` elsewhere.
fn axis_vertex(shape: &BoxShape, c: usize, transverse: usize) -> u32 {
    let mut coords = vec![transverse; shape.dimension()];
    coords[0] = c;
    shape.index_of(&coords).expect("axis vertex inside the box")
}

/// `D(from, to)` if it is at most `max_depth`.
pub fn bounded_distance(env: &Environment, bfs: &mut Bfs, from: u32, to: u32, max_depth: u32) -> Option<u32> {
    let mut found = None;
    bfs.search(env, &[from], max_depth, |_| true, |_, _| true, |_| false, |u, d| {
        if u == to {
            found = Some(d);
            true
        } else {
            false
        }
    });
    found
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeSample {
    pub n: usize,
    pub sides: Vec<usize>,
    pub values: Vec<f64>,
    pub median: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaEstimate {
    /// Median-based fit of `ln D(0, (n−1)e_1)` against `ln(n − 1)`.
    pub fit: ScalingFit,
    pub mean_slope: f64,
    /// Set when `n × m^{d−1}` boxes were used.
    pub elongated: bool,
    pub per_size: Vec<SizeSample>,
}

/// Slope of the median corner-to-corner distance `D(0, (n−1)e_1)`.
pub fn estimate_theta(config: &ExperimentConfig) -> Result<ThetaEstimate> {
    config.validate()?;
    if config.sizes.len() < 4 {
        return Err(Error::Precondition("estimate_theta needs at least 4 sizes".into()));
    }
    let mut per_size = Vec::new();
    let mut elongated = false;
    for (si, &n) in config.sizes.iter().enumerate() {
        let (shape, flag) = distance_shape(config, n)?;
        elongated |= flag;
        let table = KernelTable::for_shape(config.spec, &shape)?;
        let target = axis_vertex(&shape, n - 1, 0);
        let values = run_replicas(config.replicas, |r| {
            let env = sample_box_with_table(&table, &shape, replica_seed(config.seed, experiment::THETA, si as u64, r))?;
            let mut bfs = Bfs::new(env.vertex_count());
            Ok(crate::graphdist::point_distance(&env, &mut bfs, 0, target) as f64)
        })?;
        per_size.push(size_sample(n, &shape, values));
    }
    let xs: Vec<f64> = config.sizes.iter().map(|&n| (n - 1) as f64).collect();
    let samples: Vec<Vec<f64>> = per_size.iter().map(|s| s.values.clone()).collect();
    let fit = fit_power_law_replicates(&xs, &samples, Aggregate::Median, config.bootstrap_rounds, config.seed)?;
    let means: Vec<f64> = per_size.iter().map(|s| s.mean).collect();
    let mean_slope = log_fit(&xs, &means)?.2.slope;
    Ok(ThetaEstimate {
        fit,
        mean_slope,
        elongated,
        per_size,
    })
}

fn size_sample(n: usize, shape: &BoxShape, values: Vec<f64>) -> SizeSample {
    SizeSample {
        n,
        sides: shape.sides().to_vec(),
        median: stats::median(&values),
        mean: stats::mean(&values),
        values,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolumeEstimate {
    /// Median `|B_k|` against `k + 1/2`.
    pub fit: ScalingFit,
    pub radii: Vec<u32>,
    pub box_side: usize,
    /// `d / θ̂`.
    pub predicted: f64,
    pub predicted_ci: [f64; 2],
    pub difference: f64,
    pub difference_ci: [f64; 2],
    /// Per replica, the first radius at which the ball touches the boundary
    /// (`volume_max_radius + 1` when it never does).
    pub saturation_radii: Vec<u32>,
    /// Grid radii dropped because more than `MAX_SATURATED_FRACTION` of the
    /// replicas were saturated there.
    pub excluded_radii: Vec<u32>,
    /// Median ball sizes at every radius up to the largest one kept.
    pub median_curve: Vec<f64>,
}

/// Radii `round(2^{j/2})` within `[lo, hi]`.
pub fn radius_grid(lo: u32, hi: u32) -> Vec<u32> {
    let mut out: Vec<u32> = (0..64)
        .map(|j| 2f64.powf(j as f64 / 2.0).round() as u64)
        .take_while(|&k| k <= hi as u64)
        .filter(|&k| k >= lo as u64)
        .map(|k| k as u32)
        .collect();
    out.dedup();
    out
}

/// Largest share of boundary-touching balls tolerated at a fitted radius.
pub const MAX_SATURATED_FRACTION: f64 = 0.1;

/// Slope of `ln |B_k|` against `ln(k + 1/2)` over a half-dyadic radius grid
/// in a `ball_box^d` box, keeping radii below the first one at which more
/// than `MAX_SATURATED_FRACTION` of the balls touch the boundary. The median
/// is insensitive to the few truncated balls that remain.
pub fn estimate_volume_exponent(config: &ExperimentConfig, theta: impl Into<ThetaHat>) -> Result<VolumeEstimate> {
    config.validate()?;
    let theta = theta.into();
    let th = theta.check()?;
    let d = config.dimension();
    let shape = BoxShape::cube(d, config.ball_box)?;
    let center = shape.center();
    let table = KernelTable::for_shape(config.spec, &shape)?;
    let cap = config.volume_max_radius;
    let curves = run_replicas(config.ball_replicas, |r| {
        let env = sample_box_with_table(&table, &shape, replica_seed(config.seed, experiment::VOLUME, 0, r))?;
        let mut bfs = Bfs::new(env.vertex_count());
        Ok(crate::graphdist::ball_curve_with(&env, &mut bfs, center, cap))
    })?;
    let saturation_radii: Vec<u32> = curves
        .iter()
        .map(|c| c.first_saturated().map_or(cap + 1, |k| k as u32))
        .collect();
    let mut sorted = saturation_radii.clone();
    sorted.sort_unstable();
    let tolerated = (MAX_SATURATED_FRACTION * sorted.len() as f64).floor() as usize;
    let limit = sorted[tolerated.min(sorted.len() - 1)];
    let (radii, excluded): (Vec<u32>, Vec<u32>) = radius_grid(config.volume_min_radius, cap)
        .into_iter()
        .partition(|&k| k < limit);
    if radii.len() < 4 {
        return Err(Error::Precondition(format!(
            "ball curves saturate at radius {limit}; fewer than 4 unsaturated radii"
        )));
    }
    let xs: Vec<f64> = radii.iter().map(|&k| k as f64 + 0.5).collect();
    let samples: Vec<Vec<f64>> = radii
        .iter()
        .map(|&k| curves.iter().map(|c| c.sizes[k as usize] as f64).collect())
        .collect();
    let fit = fit_power_law_replicates(&xs, &samples, Aggregate::Median, config.bootstrap_rounds, config.seed)?;
    let kmax = *radii.last().expect("nonempty") as usize;
    let median_curve = (0..=kmax)
        .map(|k| stats::median(&curves.iter().map(|c| c.sizes[k] as f64).collect::<Vec<_>>()))
        .collect();
    let predicted = d as f64 / th;
    let predicted_ci = match theta.ci {
        Some([lo, hi]) if lo > 0.0 => [d as f64 / hi, d as f64 / lo],
        _ => [predicted, predicted],
    };
    Ok(VolumeEstimate {
        difference: fit.slope - predicted,
        difference_ci: [fit.ci[0] - predicted_ci[1], fit.ci[1] - predicted_ci[0]],
        fit,
        radii,
        box_side: config.ball_box,
        predicted,
        predicted_ci,
        saturation_radii,
        excluded_radii: excluded,
        median_curve,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallTailTable {
    pub radius: u32,
    pub box_side: usize,
    /// `C`, the median of `|B_n| n^{−d/θ̂}`.
    pub c: f64,
    pub ball_sizes: Vec<u64>,
    pub saturated_replicas: usize,
    pub k: Vec<u32>,
    pub exceedance: Vec<Proportion>,
    pub nonincreasing: bool,
    /// Least-squares slope of `ln P̂(K)` over the `K` with `P̂ > 0`.
    pub log_slope: Option<f64>,
    pub observable_k: usize,
    /// Nonincreasing and, with two or more observable `K`, a log-slope of at
    /// most `−ln 1.5`.
    pub geometric: bool,
}

/// Exceedance frequencies `P̂(|B_n| ≥ C K n^{d/θ̂})` for `K = 1..=k_max`.
pub fn ball_tail_experiment(config: &ExperimentConfig, theta: impl Into<ThetaHat>) -> Result<BallTailTable> {
    config.validate()?;
    let th = theta.into().check()?;
    let d = config.dimension();
    let shape = BoxShape::cube(d, config.ball_box)?;
    let center = shape.center();
    let table = KernelTable::for_shape(config.spec, &shape)?;
    let radius = config.ball_radius;
    let balls = run_replicas(config.ball_replicas, |r| {
        let env = sample_box_with_table(&table, &shape, replica_seed(config.seed, experiment::BALL_TAIL, 0, r))?;
        let mut bfs = Bfs::new(env.vertex_count());
        let curve = crate::graphdist::ball_curve_with(&env, &mut bfs, center, radius);
        Ok((curve.sizes[radius as usize], curve.saturated[radius as usize]))
    })?;
    let ball_sizes: Vec<u64> = balls.iter().map(|b| b.0).collect();
    let scale = (radius as f64).powf(d as f64 / th);
    let c = stats::median(&ball_sizes.iter().map(|&s| s as f64 / scale).collect::<Vec<_>>());
    let ks: Vec<u32> = (1..=config.k_max).collect();
    let exceedance: Vec<Proportion> = ks
        .iter()
        .map(|&k| {
            let bar = c * k as f64 * scale;
            let hits = ball_sizes.iter().filter(|&&s| s as f64 >= bar).count();
            wilson(hits as u64, ball_sizes.len() as u64)
        })
        .collect::<Result<_>>()?;
    let nonincreasing = exceedance.windows(2).all(|w| w[1].estimate <= w[0].estimate);
    let observed: Vec<(f64, f64)> = ks
        .iter()
        .zip(&exceedance)
        .filter(|(_, p)| p.successes > 0)
        .map(|(&k, p)| (k as f64, p.estimate.ln()))
        .collect();
    let log_slope = fit_line(
        &observed.iter().map(|p| p.0).collect::<Vec<_>>(),
        &observed.iter().map(|p| p.1).collect::<Vec<_>>(),
    )
    .map(|f| f.slope);
    let geometric = nonincreasing && log_slope.is_none_or(|s| s <= -(1.5f64).ln());
    Ok(BallTailTable {
        radius,
        box_side: config.ball_box,
        c,
        saturated_replicas: balls.iter().filter(|b| b.1).count(),
        ball_sizes,
        k: ks,
        exceedance,
        nonincreasing,
        log_slope,
        observable_k: observed.len(),
        geometric,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerTailCurve {
    pub distance: usize,
    pub box_sides: Vec<usize>,
    pub elongated: bool,
    pub theta_hat: f64,
    pub eps: Vec<f64>,
    /// `ε ‖x‖^θ̂`.
    pub thresholds: Vec<f64>,
    pub probabilities: Vec<Proportion>,
    /// Points kept by the rule "Wilson width at most half the estimate".
    pub included: Vec<bool>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// `2d / θ̂`.
    pub predicted: f64,
    pub distances: Vec<Option<u32>>,
}

/// `P̂(D(x, y) ≤ ε ‖x − y‖^θ̂)` over the `ε` grid, for a pair at distance
/// `L = tail_distance` along axis 0, each a quarter of the box from its end
/// (box side `2L`).
pub fn lower_tail_experiment(config: &ExperimentConfig, theta: impl Into<ThetaHat>) -> Result<LowerTailCurve> {
    config.validate()?;
    let th = theta.into().check()?;
    let l = config.tail_distance;
    check_eps_grid(&config.eps_grid, l, th)?;
    if config.eps_grid.is_empty() {
        return Err(Error::Precondition("eps_grid is empty".into()));
    }
    let (shape, elongated) = distance_shape(config, 2 * l)?;
    let transverse = shape.sides().get(1).map_or(0, |&m| m / 2);
    let x = axis_vertex(&shape, l / 2, transverse);
    let y = axis_vertex(&shape, l / 2 + l, transverse);
    let scale = (l as f64).powf(th);
    let thresholds: Vec<f64> = config.eps_grid.iter().map(|e| e * scale).collect();
    let depth = thresholds.last().expect("nonempty").floor() as u32;
    let table = KernelTable::for_shape(config.spec, &shape)?;
    let distances = run_replicas(config.tail_replicas, |r| {
        let env = sample_box_with_table(&table, &shape, replica_seed(config.seed, experiment::LOWER_TAIL, 0, r))?;
        let mut bfs = Bfs::new(env.vertex_count());
        Ok(bounded_distance(&env, &mut bfs, x, y, depth))
    })?;
    let trials = distances.len() as u64;
    let probabilities: Vec<Proportion> = thresholds
        .iter()
        .map(|&t| {
            let hits = distances.iter().filter(|d| d.is_some_and(|d| d as f64 <= t)).count();
            wilson(hits as u64, trials)
        })
        .collect::<Result<_>>()?;
    let included: Vec<bool> = probabilities
        .iter()
        .map(|p| p.successes > 0 && p.width() <= 0.5 * p.estimate)
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = config
        .eps_grid
        .iter()
        .zip(&probabilities)
        .zip(&included)
        .filter(|(_, &keep)| keep)
        .map(|((e, p), _)| (e.ln(), p.estimate.ln()))
        .unzip();
    let fit = fit_line(&lx, &ly);
    Ok(LowerTailCurve {
        distance: l,
        box_sides: shape.sides().to_vec(),
        elongated,
        theta_hat: th,
        eps: config.eps_grid.clone(),
        thresholds,
        probabilities,
        included,
        slope: fit.map(|f| f.slope),
        intercept: fit.map(|f| f.intercept),
        predicted: 2.0 * config.dimension() as f64 / th,
        distances,
    })
}

/// Monte Carlo estimate of `P(D(x, y) ≤ k)` on a fixed box.
pub fn distance_threshold_probability(
    spec: &KernelSpec,
    shape: &BoxShape,
    x: u32,
    y: u32,
    k: u32,
    replicas: usize,
    seed: u64,
) -> Result<Proportion> {
    let n = shape.vertex_count();
    if x as usize >= n || y as usize >= n {
        return Err(Error::Domain("pair outside the box".into()));
    }
    let table = KernelTable::for_shape(*spec, shape)?;
    let hits = run_replicas(replicas, |r| {
        let env = sample_box_with_table(&table, shape, replica_seed(seed, experiment::THRESHOLD, 0, r))?;
        let mut bfs = Bfs::new(n);
        Ok(bounded_distance(&env, &mut bfs, x, y, k).is_some())
    })?;
    wilson(hits.iter().filter(|&&h| h).count() as u64, replicas as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentDiagnostic {
    pub eta: f64,
    pub theta_hat: f64,
    pub sizes: Vec<usize>,
    pub diameters: Vec<Vec<u32>>,
    /// `mean exp((dia / n^θ̂)^η)` per size.
    pub moments: Vec<f64>,
    pub trend: TrendTest,
    pub bounded: bool,
}

/// Empirical `E[exp((dia / n^θ̂)^η)]` per size, with a Mann–Kendall test
/// for a trend across sizes.
pub fn stretched_moment_diagnostic(config: &ExperimentConfig, theta: impl Into<ThetaHat>, eta: f64) -> Result<MomentDiagnostic> {
    config.validate()?;
    let th = theta.into().check()?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("η must be nonnegative, got {eta}")));
    }
    let d = config.dimension();
    if config.sizes.len() < 3 {
        return Err(Error::Precondition("the trend test needs at least 3 sizes".into()));
    }
    if let Some(&n) = config.sizes.iter().find(|&&n| n.pow(d as u32) > config.exact_threshold) {
        return Err(Error::ThresholdExceeded {
            size: n.pow(d as u32),
            threshold: config.exact_threshold,
        });
    }
    let mut diameters = Vec::new();
    let mut moments = Vec::new();
    for (si, &n) in config.sizes.iter().enumerate() {
        let shape = BoxShape::cube(d, n)?;
        let table = KernelTable::for_shape(config.spec, &shape)?;
        let all = VertexSet::full(shape.vertex_count());
        let dias = run_replicas(config.replicas, |r| {
            let env = sample_box_with_table(&table, &shape, replica_seed(config.seed, experiment::MOMENTS, si as u64, r))?;
            Ok(diameter(&env, &all, DiameterMode::Exact { threshold: config.exact_threshold })?.value)
        })?;
        let scale = (n as f64).powf(th);
        moments.push(stats::mean(
            &dias.iter().map(|&v| (v as f64 / scale).powf(eta).exp()).collect::<Vec<_>>(),
        ));
        diameters.push(dias);
    }
    let trend = stats::mann_kendall(&moments)?;
    Ok(MomentDiagnostic {
        eta,
        theta_hat: th,
        sizes: config.sizes.clone(),
        diameters,
        bounded: !trend.trend,
        moments,
        trend,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricScale {
    pub m: usize,
    pub block_side: usize,
    /// Blocks within chemical distance strictly below `δ (n/m)^θ̂` are counted.
    pub radius: f64,
    /// Per replica, per block: `Q`.
    pub counts: Vec<Vec<u32>>,
    pub max_counts: Vec<u32>,
    pub mean_max: f64,
    /// `mean_max / ln m`: the smallest `M` with `max Q ≤ M ln m` on average.
    pub m_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricBoxCount {
    pub n: usize,
    pub theta_hat: f64,
    pub delta: f64,
    pub scales: Vec<MetricScale>,
    /// Least-squares slope of mean `max Q` against `ln m`.
    pub slope_vs_log_m: Option<f64>,
    /// `M_min` is nonincreasing in `m`.
    pub at_most_logarithmic: bool,
}

/// For each block `W` of side `n/m`, the number `Q` of blocks within chemical
/// distance `< δ (n/m)^θ̂` of `W` (itself included), on cubes of the largest
/// configured side. All `m` share the same environments.
pub fn metric_box_count(config: &ExperimentConfig, theta: impl Into<ThetaHat>, ms: &[usize]) -> Result<MetricBoxCount> {
    config.validate()?;
    let th = theta.into().check()?;
    if ms.is_empty() {
        return Err(Error::Precondition("no block counts requested".into()));
    }
    let n = config.largest_size();
    let d = config.dimension();
    let shape = BoxShape::cube(d, n)?;
    let grids: Vec<BlockGrid> = ms
        .iter()
        .map(|&m| {
            if m < 2 || !n.is_multiple_of(m) {
                return Err(Error::Precondition(format!("{m} blocks per side do not divide n = {n}")));
            }
            BlockGrid::new(&shape, n / m)
        })
        .collect::<Result<_>>()?;
    let table = KernelTable::for_shape(config.spec, &shape)?;
    let sample = |r: u64| sample_box_with_table(&table, &shape, replica_seed(config.seed, experiment::METRIC, 0, r));
    let radii: Vec<f64> = ms.iter().map(|&m| config.delta * ((n / m) as f64).powf(th)).collect();
    let per_replica = run_replicas(config.replicas, |r| {
        let env = sample(r)?;
        let mut bfs = Bfs::new(env.vertex_count());
        let mut seen = Vec::new();
        Ok(grids
            .iter()
            .zip(&radii)
            .map(|(grid, &rho)| {
                let depth = (rho.ceil() as u64).saturating_sub(1).min(u32::MAX as u64) as u32;
                (0..grid.block_count() as u32)
                    .map(|b| {
                        bfs.run(&env, grid.members(b), depth);
                        seen.clear();
                        seen.extend(bfs.visited().iter().map(|&v| grid.block_of(v)));
                        seen.sort_unstable();
                        seen.dedup();
                        seen.len() as u32
                    })
                    .collect::<Vec<u32>>()
            })
            .collect::<Vec<_>>())
    })?;
    let scales: Vec<MetricScale> = ms
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let counts: Vec<Vec<u32>> = per_replica.iter().map(|rep| rep[i].clone()).collect();
            let max_counts: Vec<u32> = counts.iter().map(|c| c.iter().copied().max().unwrap_or(0)).collect();
            let mean_max = stats::mean(&max_counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
            MetricScale {
                m,
                block_side: n / m,
                radius: radii[i],
                counts,
                max_counts,
                mean_max,
                m_min: mean_max / (m as f64).ln(),
            }
        })
        .collect();
    let lx: Vec<f64> = ms.iter().map(|&m| (m as f64).ln()).collect();
    let ly: Vec<f64> = scales.iter().map(|s| s.mean_max).collect();
    let mut by_m: Vec<(usize, f64)> = scales.iter().map(|s| (s.m, s.m_min)).collect();
    by_m.sort_by_key(|&(m, _)| m);
    Ok(MetricBoxCount {
        n,
        theta_hat: th,
        delta: config.delta,
        slope_vs_log_m: fit_line(&lx, &ly).map(|f| f.slope),
        at_most_logarithmic: by_m.windows(2).all(|w| w[1].1 <= w[0].1),
        scales,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingReport {
    pub beta_low: f64,
    pub beta_high: f64,
    pub n: usize,
    pub replicas: usize,
    /// Replicas where the lower-β edge set is not contained in the higher one.
    pub edge_violations: usize,
    /// Vertices `x` (summed over replicas) with `D_high(0, x) > D_low(0, x)`.
    pub distance_violations: usize,
    /// `D(0, (n−1)e_1)` per replica.
    pub low_distances: Vec<u32>,
    pub high_distances: Vec<u32>,
}

impl CouplingReport {
    pub fn passed(&self) -> bool {
        self.edge_violations == 0 && self.distance_violations == 0
    }
}

/// Pointwise monotonicity of Harris-coupled environments at two values of β
/// on cubes of the largest configured side.
pub fn coupling_check(config: &ExperimentConfig, beta_low: f64, beta_high: f64) -> Result<CouplingReport> {
    config.validate()?;
    if beta_low > beta_high {
        return Err(Error::Domain("beta_low must not exceed beta_high".into()));
    }
    let low_spec = config.spec.with_beta(beta_low)?;
    let high_spec = config.spec.with_beta(beta_high)?;
    let n = config.largest_size();
    let shape = BoxShape::cube(config.dimension(), n)?;
    let low_table = KernelTable::for_shape(low_spec, &shape)?;
    let high_table = KernelTable::for_shape(high_spec, &shape)?;
    let target = axis_vertex(&shape, n - 1, 0) as usize;
    let outcomes = run_replicas(config.replicas, |r| {
        let pair = sample_coupled_with_tables(
            &low_table,
            &high_table,
            &shape,
            replica_seed(config.seed, experiment::COUPLING, 0, r),
        )?;
        let edge_ok = pair.low.is_subgraph_of(&pair.high);
        let dl = crate::graphdist::bfs_distances(&pair.low, &[0], None)?;
        let dh = crate::graphdist::bfs_distances(&pair.high, &[0], None)?;
        let bad = dl.distances.iter().zip(&dh.distances).filter(|(l, h)| h > l).count();
        Ok((edge_ok, bad, dl.distances[target], dh.distances[target]))
    })?;
    Ok(CouplingReport {
        beta_low,
        beta_high,
        n,
        replicas: config.replicas,
        edge_violations: outcomes.iter().filter(|o| !o.0).count(),
        distance_violations: outcomes.iter().map(|o| o.1).sum(),
        low_distances: outcomes.iter().map(|o| o.2).collect(),
        high_distances: outcomes.iter().map(|o| o.3).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodBlockFraction {
    pub delta: f64,
    pub good: u64,
    pub total: u64,
    pub fraction: f64,
}

/// Fraction of δ-good interior blocks of side `block_k` over replicas, on
/// cubes of the largest configured side, for each δ.
pub fn good_block_fractions(config: &ExperimentConfig, theta: impl Into<ThetaHat>, deltas: &[f64]) -> Result<Vec<GoodBlockFraction>> {
    config.validate()?;
    let th = theta.into().check()?;
    let n = config.largest_size();
    let shape = BoxShape::cube(config.dimension(), n)?;
    let grid = BlockGrid::new(&shape, config.block_k)?;
    if grid.interior_blocks().is_empty() {
        return Err(Error::Precondition("the grid has no interior blocks".into()));
    }
    let table = KernelTable::for_shape(config.spec, &shape)?;
    let per_replica = run_replicas(config.replicas, |r| {
        let env = sample_box_with_table(&table, &shape, replica_seed(config.seed, experiment::GOOD_BLOCKS, 0, r))?;
        deltas
            .iter()
            .map(|&delta| {
                let reports = classify_interior_blocks(&env, &grid, delta, th)?;
                Ok((reports.iter().filter(|r| r.good).count() as u64, reports.len() as u64))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let good = per_replica.iter().map(|r| r[i].0).sum();
            let total = per_replica.iter().map(|r| r[i].1).sum();
            GoodBlockFraction {
                delta,
                good,
                total,
                fraction: good as f64 / total as f64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(d: usize, beta: f64) -> ExperimentConfig {
        ExperimentConfig {
            spec: KernelSpec::self_similar(d, beta).unwrap(),
            sizes: vec![8, 16, 32, 64],
            replicas: 5,
            bootstrap_rounds: 50,
            ball_box: 64,
            ball_replicas: 3,
            tail_distance: 32,
            tail_replicas: 10,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
        let mut c = ExperimentConfig {
            sizes: vec![64, 32],
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        c.sizes = vec![64];
        c.replicas = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn eps_grid_precondition() {
        assert!(check_eps_grid(&[0.5, 1.0], 16, 0.5).is_ok());
        assert!(check_eps_grid(&[0.2, 1.0], 16, 0.5).is_err());
        let mut c = config(1, 1.0);
        c.theta_hat = Some(0.5);
        c.eps_grid = vec![0.01];
        assert!(matches!(c.validate(), Err(Error::Precondition(_))));
    }

    #[test]
    fn power_law_fit_of_exact_square() {
        let pts: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, (i * i) as f64)).collect();
        let f = fit_power_law(&pts, 100, 0).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!(f.ci[0] <= f.slope && f.slope <= f.ci[1]);
        assert!(fit_power_law(&pts[..1], 10, 0).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)], 10, 0).is_err());
    }

    #[test]
    fn power_law_fit_with_multiplicative_noise() {
        use rand::Rng;
        let mut rng = crate::streams::stream(11, &[]);
        let pts: Vec<(f64, f64)> = (4..=10)
            .map(|e| {
                let x = (1u64 << e) as f64;
                (x, 3.0 * x.powf(1.5) * (1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0)))
            })
            .collect();
        let f = fit_power_law(&pts, 200, 1).unwrap();
        assert!((f.slope - 1.5).abs() < 0.05, "{}", f.slope);
        assert!((f.intercept - 3f64.ln()).abs() < 0.05);
    }

    #[test]
    fn beta_zero_theta_is_one() {
        let est = estimate_theta(&config(1, 0.0)).unwrap();
        assert_eq!(est.fit.slope, 1.0);
        assert_eq!(est.fit.ci, [1.0, 1.0]);
        assert!(!est.elongated);
        let mut c2 = config(2, 0.0);
        c2.elongation = Some(3);
        let est = estimate_theta(&c2).unwrap();
        assert_eq!(est.fit.slope, 1.0);
        assert!(est.elongated);
    }

    #[test]
    fn beta_zero_volume_slopes() {
        let v = estimate_volume_exponent(&config(1, 0.0), 1.0).unwrap();
        assert!((v.fit.slope - 1.0).abs() < 1e-12);
        assert_eq!(v.radii, vec![4, 6, 8, 11, 16, 23]);
        assert_eq!(v.excluded_radii, vec![32, 45, 64]);
        let v = estimate_volume_exponent(&config(2, 0.0), 1.0).unwrap();
        assert!((v.fit.slope - 2.0).abs() < 1e-12);
        assert!((v.difference).abs() < 1e-12);
    }

    #[test]
    fn beta_zero_lower_tail_and_moments() {
        let c = config(1, 0.0);
        let mut c1 = c.clone();
        c1.eps_grid = vec![0.5, 1.0, 2.0];
        let lt = lower_tail_experiment(&c1, 1.0).unwrap();
        let est: Vec<f64> = lt.probabilities.iter().map(|p| p.estimate).collect();
        assert_eq!(est, vec![0.0, 1.0, 1.0]);
        assert_eq!(lt.distances, vec![Some(32); 10]);

        let m = stretched_moment_diagnostic(&c, 1.0, 0.0).unwrap();
        assert!(m.moments.iter().all(|&x| x == std::f64::consts::E));
        assert!(m.bounded);
        let m = stretched_moment_diagnostic(&c, 1.0, 2.0).unwrap();
        assert!(m.moments.iter().all(|&x| x <= std::f64::consts::E));
    }

    #[test]
    fn beta_zero_metric_box_count() {
        let r = metric_box_count(&config(1, 0.0), 1.0, &[2, 4, 8]).unwrap();
        for s in &r.scales {
            assert!(s.max_counts.iter().all(|&q| q == 3.min(s.m as u32)), "{s:?}");
            assert!(s.counts.iter().flatten().all(|&q| q >= 1));
        }
        assert!(r.at_most_logarithmic);
        assert!(metric_box_count(&config(1, 0.0), 1.0, &[3]).is_err());
    }

    #[test]
    fn coupling_small_instance() {
        let mut c = config(1, 1.0);
        c.replicas = 10;
        let r = coupling_check(&c, 0.5, 2.0).unwrap();
        assert!(r.passed());
        assert!(r.low_distances.iter().zip(&r.high_distances).all(|(l, h)| h <= l));
    }

    #[test]
    fn runs_are_reproducible() {
        let c = config(1, 1.0);
        let a = estimate_theta(&c).unwrap();
        let b = estimate_theta(&c).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let t = pool.install(|| estimate_theta(&c)).unwrap();
        assert_eq!(a, t);
    }
}
