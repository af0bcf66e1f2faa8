//! One function per subcommand. Each writes its artifacts into the output
//! directory and returns the lines to print plus any invariant violations.

use std::io;

use lrp_core::experiments::{
    self, coupling_check, estimate_theta, estimate_volume_exponent, lower_tail_experiment, metric_box_count,
    stretched_moment_diagnostic, ThetaEstimate, ThetaHat,
};
use lrp_core::graphdist::{ball_curve, bfs_distances, diameter, DiameterMode, VertexSet};
use lrp_core::kernel::{kernel_value, probability_from_kernel, ExtReal};
use lrp_core::renorm::{block_distances, block_edge_marginal, classify_interior_blocks, BlockGrid, RenormGraph};
use lrp_core::sampler::{sample_box, serialize};
use lrp_core::stats::wilson;
use lrp_core::{BoxShape, Environment, KernelTable};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::checks::{exact_checks, Check};
use crate::config::{ConfigError, Settings};
use crate::output::{float, OutputDir};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] lrp_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 1 for a failed exact identity, 2 for everything that prevented a run.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(lrp_core::Error::IdentityViolation(_)) => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Sample,
    Distances,
    Growth,
    LowerTail,
    BallTail,
    RenormCheck,
    GoodBlocks,
    BoxCount,
    CouplingCheck,
    Theta,
    KernelDump,
    Moments,
    QCount,
    Suite,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Sample => "sample",
            Task::Distances => "distances",
            Task::Growth => "growth",
            Task::LowerTail => "lowertail",
            Task::BallTail => "balltail",
            Task::RenormCheck => "renorm-check",
            Task::GoodBlocks => "good-blocks",
            Task::BoxCount => "boxcount",
            Task::CouplingCheck => "coupling-check",
            Task::Theta => "theta",
            Task::KernelDump => "kernel-dump",
            Task::Moments => "moments",
            Task::QCount => "qcount",
            Task::Suite => "suite",
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub violations: Vec<String>,
}

impl Outcome {
    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }
}

pub type CmdResult<T = ()> = Result<T, CliError>;

pub fn execute(task: Task, s: &Settings, out: &mut OutputDir) -> CmdResult<Outcome> {
    let mut o = Outcome::default();
    match task {
        Task::Sample => sample(s, out, &mut o)?,
        Task::Distances => distances(s, out, &mut o)?,
        Task::Growth => {
            let theta = resolve_theta(s, out, &mut o)?;
            growth(s, theta, out, &mut o)?;
        }
        Task::LowerTail => {
            let theta = resolve_theta(s, out, &mut o)?;
            lowertail(s, theta, out, &mut o)?;
        }
        Task::BallTail => {
            let theta = resolve_theta(s, out, &mut o)?;
            balltail(s, theta, out, &mut o)?;
        }
        Task::RenormCheck => {
            renorm_check(s, out, &mut o)?;
        }
        Task::GoodBlocks => {
            let theta = resolve_theta(s, out, &mut o)?;
            good_blocks(s, theta, out, &mut o)?;
        }
        Task::BoxCount => {
            boxcount(s, out, &mut o)?;
        }
        Task::CouplingCheck => {
            coupling(s, out, &mut o)?;
        }
        Task::Theta => {
            theta(s, out, &mut o)?;
        }
        Task::KernelDump => kernel_dump(s, out, &mut o)?,
        Task::Moments => {
            let theta = resolve_theta(s, out, &mut o)?;
            moments(s, theta, out, &mut o)?;
        }
        Task::QCount => {
            let theta = resolve_theta(s, out, &mut o)?;
            qcount(s, theta, out, &mut o)?;
        }
        Task::Suite => suite(s, out, &mut o)?,
    }
    Ok(o)
}

fn cube(s: &Settings) -> CmdResult<BoxShape> {
    Ok(BoxShape::cube(s.d, s.experiment.largest_size())?)
}

/// The environment shared by the single-sample subcommands.
fn sampled(s: &Settings) -> CmdResult<Environment> {
    Ok(sample_box(&s.experiment.spec, &cube(s)?, s.experiment.seed)?)
}

fn sample(s: &Settings, out: &mut OutputDir, o: &mut Outcome) -> CmdResult {
    let env = sampled(s)?;
    out.write("environment.lrp", &serialize(&env))?;
    out.json(
        "sample.json",
        &json!({
            "sides": env.shape().sides(),
            "spec": env.spec(),
            "seed": env.seed(),
            "long_edges": env.long_edge_count(),
        }),
    )?;
    o.say(format!(
        "sampled {} vertices with {} long edges",
        env.vertex_count(),
        env.long_edge_count()
    ));
    Ok(())
}

fn distances(s: &Settings, out: &mut OutputDir, o: &mut Outcome) -> CmdResult {
    let env = sampled(s)?;
    let shape = env.shape().clone();
    let n = s.experiment.largest_size();
    let field = bfs_distances(&env, &[0], None)?;
    let mut corner = vec![0; s.d];
    corner[0] = n - 1;
    let target = shape.index_of(&corner).expect("corner lies in the box");
    let mode = if env.vertex_count() <= s.experiment.exact_threshold {
        DiameterMode::Exact {
            threshold: s.experiment.exact_threshold,
        }
    } else {
        DiameterMode::DoubleSweep
    };
    let dia = diameter(&env, &VertexSet::full(env.vertex_count()), mode)?;
    let curve = ball_curve(&env, shape.center(), s.experiment.k_max)?;
    out.csv(
        "distances.csv",
        "vertex,distance",
        field.distances.iter().enumerate().map(|(v, d)| vec![v.to_string(), d.to_string()]),
    )?;
    out.csv(
        "ball_curve.csv",
        "k,size,saturated",
        curve
            .sizes
            .iter()
            .zip(&curve.saturated)
            .enumerate()
            .map(|(k, (size, sat))| vec![k.to_string(), size.to_string(), sat.to_string()]),
    )?;
    out.json(
        "distances.json",
        &json!({
            "n": n,
            "source": 0,
            "corner_distance": field.distances[target as usize],
            "eccentricity": field.max_finite(),
            "diameter": dia,
            "ball_center": shape.center(),
            "ball_first_saturated": curve.first_saturated(),
        }),
    )?;
    o.say(format!("D(0, (n-1)e_1) = {}", field.distances[target as usize]));
    o.say(format!(
        "diameter = {} ({})",
        dia.value,
        if dia.exact { "exact" } else { "double-sweep lower bound" }
    ));
    Ok(())
}

/// Configured `θ̂`, or a fresh estimate (written as `theta.*`).
fn resolve_theta(s: &Settings, out: &mut OutputDir, o: &mut Outcome) -> CmdResult<ThetaHat> {
    match s.experiment.theta_hat {
        Some(t) => Ok(ThetaHat::from(t)),
        None => {
            let est = theta(s, out, o)?;
            Ok(ThetaHat::from(&est.fit))
        }
    }
}

fn theta(s: &Settings, out: &mut OutputDir, o: &mut Outcome) -> CmdResult<ThetaEstimate> {
    let est = estimate_theta(&s.experiment)?;
    out.json("theta.json", &est)?;
    out.csv(
        "theta.csv",
        "n,median,mean",
        est.per_size
            .iter()
            .map(|p| vec![p.n.to_string(), float(p.median), float(p.mean)]),
    )?;
    out.csv(
        "theta_samples.csv",
        "n,replica,distance",
        est.per_size.iter().flat_map(|p| {
            p.values
                .iter()
                .enumerate()
                .map(move |(r, v)| vec![p.n.to_string(), r.to_string(), float(*v)])
        }),
    )?;
    o.say(format!(
        "theta_hat = {:.3} (95% CI [{:.3}, {:.3}]){}",
        est.fit.slope,
        est.fit.ci[0],
        est.fit.ci[1],
        if est.elongated { ", elongated boxes" } else { "" }
    ));
    Ok(est)
}

fn growth(s: &Settings, theta: ThetaHat, out: &mut OutputDir, o: &mut Outcome) -> CmdResult<experiments::VolumeEstimate> {
    let v = estimate_volume_exponent(&s.experiment, theta)?;
    out.json("growth.json", &json!({ "theta": theta, "volume": v }))?;
    out.csv(
        "growth.csv",
        "k,median_size,fitted",
        v.median_curve.iter().enumerate().map(|(k, m)| {
            let fitted = v.radii.contains(&(k as u32));
            vec![k.to_string(), float(*m), fitted.to_string()]
        }),
    )?;
    o.say(format!(
        "volume slope = {:.3} (95% CI [{:.3}, {:.3}]), d/theta_hat = {:.3}",
        v.fit.slope, v.fit.ci[0], v.fit.ci[1], v.predicted
    ));
    if !v.excluded_radii.is_empty() {
        o.say(format!("excluded saturated radii: {:?}", v.excluded_radii));
    }
    Ok(v)
}

fn lowertail(s: &Settings, theta: ThetaHat, out: &mut OutputDir, o: &mut Outcome) -> CmdResult<experiments::LowerTailCurve> {
    let c = lower_tail_experiment(&s.experiment, theta)?;
    out.json("lowertail.json", &c)?;
    out.csv(
        "lowertail.csv",
        "eps,threshold,successes,trials,estimate,lower,upper,included",
        c.eps.iter().enumerate().map(|(i, e)| {
            let p = &c.probabilities[i];
            vec![
                float(*e),
                float(c.thresholds[i]),
                p.successes.to_string(),
                p.trials.to_string(),
                float(p.estimate),
                float(p.lower),
                float(p.upper),
                c.included[i].to_string(),
            ]
        }),
    )?;
    match c.slope {
        Some(slope) => o.say(format!("lower-tail slope = {slope:.3}, 2d/theta_hat = {:.3}", c.predicted)),
        None => o.say("lower-tail slope unavailable: fewer than two usable points"),
    }
    Ok(c)
}

fn balltail(s: &Settings, theta: ThetaHat, out: &mut OutputDir, o: &mut Outcome) -> CmdResult<experiments::BallTailTable> {
    let t = experiments::ball_tail_experiment(&s.experiment, theta)?;
    out.json("balltail.json", &t)?;
    out.csv(
        "balltail.csv",
        "K,successes,trials,estimate,lower,upper",
        t.k.iter().zip(&t.exceedance).map(|(k, p)| {
            vec![
                k.to_string(),
                p.successes.to_string(),
                p.trials.to_string(),
                float(p.estimate),
                float(p.lower),
                float(p.upper),
            ]
        }),
    )?;
    o.say(format!(
        "ball tail: C = {:.3}, {} observable K, nonincreasing = {}, geometric = {}",
        t.c, t.observable_k, t.nonincreasing, t.geometric
    ));
    Ok(t)
}

#[derive(Serialize)]
struct RenormCheckReport {
    k: usize,
    w: Vec<i64>,
    edge_probability: f64,
    marginal: Option<f64>,
    identity_error: Option<String>,
    empirical: lrp_core::stats::Proportion,
    replicas: usize,
}

fn renorm_check(s: &Settings, out: &mut OutputDir, o: &mut Outcome) -> CmdResult<RenormCheckReport> {
    let spec = s.experiment.spec;
    let k = s.experiment.block_k;
    let w = s.displacement();
    let p = probability_from_kernel(spec.beta, kernel_value(&spec, &w)?);
    let (marginal, identity_error) = match block_edge_marginal(&spec, k as u64, &w) {
        Ok(m) => (Some(m), None),
        Err(lrp_core::Error::IdentityViolation(msg)) => (None, Some(msg)),
        Err(e) => return Err(e.into()),
    };
    // Blocks 0 and |w| of a box exactly covering both.
    let sides: Vec<usize> = w.iter().map(|x| k * (x.unsigned_abs() as usize + 1)).collect();
    let shape = BoxShape::new(sides)?;
    let table = KernelTable::for_shape(spec, &shape)?;
    let coarse_target: Vec<usize> = w.iter().map(|x| x.unsigned_abs() as usize).collect();
    let replicas = s.experiment.replicas;
    let hits: usize = {
        use rayon::prelude::*;
        (0..replicas as u64)
            .into_par_iter()
            .map(|r| -> CmdResult<usize> {
                let seed = experiments::replica_seed(s.experiment.seed, experiments::experiment::RENORM, 0, r);
                let env = lrp_core::sampler::sample_box_with_table(&table, &shape, seed)?;
                let grid = BlockGrid::new(&shape, k)?;
                let target = grid.coarse_shape().index_of(&coarse_target).expect("target block exists");
                Ok(RenormGraph::new(&env, grid)?.is_adjacent(0, target) as usize)
            })
            .collect::<CmdResult<Vec<usize>>>()?
            .into_iter()
            .sum()
    };
    let report = RenormCheckReport {
        k,
        w: w.clone(),
        edge_probability: p,
        marginal,
        identity_error: identity_error.clone(),
        empirical: wilson(hits as u64, replicas as u64)?,
        replicas,
    };
    out.json("renorm_check.json", &report)?;
    match (marginal, identity_error) {
        (Some(m), _) => o.say(format!("block edge marginal {m} (p(w) = {p}) at k = {k}, w = {w:?}: PASS")),
        (None, Some(msg)) => {
            o.say(format!("block edge marginal identity FAILED: {msg}"));
            o.violations.push(msg);
        }
        (None, None) => unreachable!(),
    }
    o.say(format!(
        "empirical coarse adjacency {:.4} (95% CI [{:.4}, {:.4}]) over {replicas} replicas",
        report.empirical.estimate, report.empirical.lower, report.empirical.upper
    ));
    Ok(report)
}

fn good_blocks(s: &Settings, theta: ThetaHat, out: &mut OutputDir, o: &mut Outcome) -> CmdResult {
    let env = sampled(s)?;
    let grid = BlockGrid::new(env.shape(), s.experiment.block_k)?;
    let reports = classify_interior_blocks(&env, &grid, s.experiment.delta, theta.value)?;
    let renorm = RenormGraph::new(&env, grid)?;
    out.csv(
        "good_blocks.csv",
        "block,good,good1,good2,good3,witness_dist,delta,theta_hat",
        reports.iter().map(|r| {
            vec![
                r.block.to_string(),
                r.good.to_string(),
                r.good1.to_string(),
                r.good2.to_string(),
                r.good3.to_string(),
                r.witness.map_or_else(String::new, |w| w.distance.to_string()),
                float(r.delta),
                float(r.theta_hat),
            ]
        }),
    )?;
    let good = reports.iter().filter(|r| r.good).count();
    out.json(
        "good_blocks.json",
        &json!({
            "theta": theta,
            "delta": s.experiment.delta,
            "block_k": s.experiment.block_k,
            "interior_blocks": reports.len(),
            "good": good,
            "coarse_edges": renorm.edge_count(),
            "reports": reports,
        }),
    )?;
    o.say(format!("{good} of {} interior blocks are good", reports.len()));
    Ok(())
}

fn boxcount(s: &Settings, out: &mut OutputDir, o: &mut Outcome) -> CmdResult {
    let env = sampled(s)?;
    let grid = BlockGrid::new(env.shape(), s.experiment.block_k)?;
    let center = grid.central_block();
    let dist = block_distances(&env, &grid, center)?;
    let rows: Vec<(u64, usize)> = (0..=s.radius)
        .map(|r| (r, dist.iter().filter(|&&d| (d as u64) <= r).count()))
        .collect();
    out.csv(
        "boxcount.csv",
        "r,X_k",
        rows.iter().map(|(r, x)| vec![r.to_string(), x.to_string()]),
    )?;
    out.json(
        "boxcount.json",
        &json!({ "block_k": s.experiment.block_k, "center": center, "block_distances": dist }),
    )?;
    let last = rows.last().expect("radius is positive");
    o.say(format!("X_k(B_{}) = {} of {} blocks", last.0, last.1, grid.block_count()));
    Ok(())
}

fn coupling(s: &Settings, out: &mut OutputDir, o: &mut Outcome) -> CmdResult<experiments::CouplingReport> {
    let r = coupling_check(&s.experiment, s.beta_low, s.beta_high)?;
    out.json("coupling.json", &r)?;
    o.say(format!(
        "coupling beta {} / {}: {} edge violations, {} distance violations over {} replicas",
        r.beta_low, r.beta_high, r.edge_violations, r.distance_violations, r.replicas
    ));
    if !r.passed() {
        o.violations.push(format!(
            "coupling monotonicity: {} edge and {} distance violations",
            r.edge_violations, r.distance_violations
        ));
    }
    Ok(r)
}

fn kernel_dump(s: &Settings, out: &mut OutputDir, o: &mut Outcome) -> CmdResult {
    let table = KernelTable::build(s.experiment.spec, s.radius)?;
    let rows = table.rows();
    out.csv(
        "kernel.csv",
        "w_canonical,J,p",
        rows.iter().map(|(c, e)| {
            let w: Vec<String> = c.iter().map(u64::to_string).collect();
            let j = match e.j {
                ExtReal::Infinite => "inf".to_string(),
                ExtReal::Finite(v) => float(v),
            };
            vec![w.join(" "), j, float(e.p)]
        }),
    )?;
    o.say(format!("{} canonical displacements up to radius {}", rows.len(), s.radius));
    Ok(())
}

fn moments(s: &Settings, theta: ThetaHat, out: &mut OutputDir, o: &mut Outcome) -> CmdResult<experiments::MomentDiagnostic> {
    let eta = s
        .experiment
        .eta
        .unwrap_or_else(|| if theta.value < 1.0 { 0.5 / (1.0 - theta.value) } else { 1.0 });
    let m = stretched_moment_diagnostic(&s.experiment, theta, eta)?;
    out.json("moments.json", &m)?;
    out.csv(
        "moments.csv",
        "n,moment",
        m.sizes.iter().zip(&m.moments).map(|(n, v)| vec![n.to_string(), float(*v)]),
    )?;
    o.say(format!(
        "stretched moments (eta = {eta:.3}): bounded = {} (Mann-Kendall p = {:.3})",
        m.bounded, m.trend.p_value
    ));
    Ok(m)
}

fn qcount(s: &Settings, theta: ThetaHat, out: &mut OutputDir, o: &mut Outcome) -> CmdResult<experiments::MetricBoxCount> {
    let q = metric_box_count(&s.experiment, theta, &s.experiment.blocks_per_side)?;
    out.json("qcount.json", &q)?;
    out.csv(
        "qcount.csv",
        "m,block_side,radius,mean_max,m_min",
        q.scales.iter().map(|sc| {
            vec![
                sc.m.to_string(),
                sc.block_side.to_string(),
                float(sc.radius),
                float(sc.mean_max),
                float(sc.m_min),
            ]
        }),
    )?;
    for sc in &q.scales {
        o.say(format!("m = {}: mean max Q = {:.3}, M_min = {:.3}", sc.m, sc.mean_max, sc.m_min));
    }
    o.say(format!("max Q at most logarithmic in m: {}", q.at_most_logarithmic));
    Ok(q)
}

pub const SUITE: &str = "suite.json";

fn suite(s: &Settings, out: &mut OutputDir, o: &mut Outcome) -> CmdResult {
    let mut checks: Vec<Check> = Vec::new();
    if s.experiment.spec.is_self_similar() {
        checks.extend(exact_checks(s.beta));
    }
    let est = theta(s, out, o)?;
    let th = ThetaHat::from(&est.fit);
    checks.push(Check::new(
        "theta CI width <= 0.05",
        est.fit.ci_width() <= 0.05,
        format!("width {:.4}", est.fit.ci_width()),
    ));
    let d = s.d as f64;
    let v = growth(s, th, out, o)?;
    checks.push(Check::new(
        "volume slope within 0.15 of d/theta",
        v.difference.abs() <= 0.15,
        format!("slope {:.4} vs {:.4}", v.fit.slope, v.predicted),
    ));
    let mut tail_config = s.clone();
    if tail_config.experiment.theta_hat.is_none() {
        tail_config.experiment.theta_hat = Some(th.value);
    }
    let lt = lowertail(&tail_config, th, out, o)?;
    checks.push(Check::new(
        "lower-tail slope within 0.3 of 2d/theta",
        lt.slope.is_some_and(|sl| (sl - 2.0 * d / th.value).abs() <= 0.3),
        format!("slope {:?} vs {:.4}", lt.slope, lt.predicted),
    ));
    let bt = balltail(s, th, out, o)?;
    checks.push(Check::new(
        "ball tail nonincreasing and geometric",
        bt.nonincreasing && bt.geometric,
        format!("{} observable K, log slope {:?}", bt.observable_k, bt.log_slope),
    ));
    let m = moments(s, th, out, o)?;
    checks.push(Check::new(
        "stretched moments bounded",
        m.bounded,
        format!("Mann-Kendall p = {:.3}", m.trend.p_value),
    ));
    let q = qcount(s, th, out, o)?;
    checks.push(Check::new(
        "max Q at most logarithmic",
        q.at_most_logarithmic,
        format!("M_min {:?}", q.scales.iter().map(|x| x.m_min).collect::<Vec<_>>()),
    ));
    let c = coupling(s, out, o)?;
    checks.push(Check::new(
        "coupling monotone",
        c.passed(),
        format!("{} edge, {} distance violations", c.edge_violations, c.distance_violations),
    ));
    if s.experiment.spec.is_self_similar() && lrp_core::kernel::sup_norm(&s.displacement()) >= 2 {
        let r = renorm_check(s, out, o)?;
        checks.push(Check::new(
            "renorm-check marginal",
            r.identity_error.is_none(),
            format!("marginal {:?} vs p {}", r.marginal, r.edge_probability),
        ));
    }
    out.json(
        SUITE,
        &json!({
            "d": s.d,
            "beta": s.beta,
            "theta": th,
            "checks": checks,
        }),
    )?;
    for c in &checks {
        o.say(format!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
        if !c.passed {
            o.violations.push(format!("suite check failed: {}", c.name));
        }
    }
    o.violations.dedup();
    Ok(())
}
