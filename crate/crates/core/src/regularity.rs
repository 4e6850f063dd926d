//! Sampled regularity constants and pointwise checks of the inequalities
//! that drive the convergence analysis.
//!
//! Estimates are certificates on the sampled points only: the constant is
//! inflated until the defining bound holds on every retained sample, which
//! makes the sampled `kappa` a lower bound for the true supremum.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixset::{distance_to_fix, FixSetOracle};
use crate::flow::Trajectory;
use crate::operators::Operator;
use crate::point::{self, Point};
use crate::rates::least_squares;
use crate::sampling::{self, Region};
use crate::schedule::LambdaSchedule;
use crate::sets::PrimitiveSet;

/// Samples whose residual falls below this are excluded from ratio fits.
pub const DEGENERACY_FLOOR: f64 = 1e-12;
pub const MIN_SAMPLES: usize = 100;
/// Largest sample spacing accepted by [`check_descent`].
pub const MAX_DESCENT_DT: f64 = 0.1;
/// Default descent tolerance per unit of sample spacing.
pub const DESCENT_TOL_PER_DT: f64 = 1.0;
/// Tolerance of the pointwise sweeps over SQNE families.
pub const SWEEP_TOL: f64 = 1e-10;
/// `x*` must have residual below this to count as a fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularityMode {
    Linear,
    Hoelder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimate {
    pub mode: RegularityMode,
    pub kappa: f64,
    /// 1 in linear mode.
    pub gamma: f64,
    pub region: Region,
    pub n_samples: usize,
    /// `kappa` over the regression constant: how far the worst sample sits
    /// above the fitted bound.
    pub max_violation: f64,
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectionEstimate {
    pub mode: RegularityMode,
    pub tau: f64,
    pub theta: f64,
    pub region: Region,
    pub n_samples: usize,
    pub max_violation: f64,
    pub excluded: usize,
}

/// Outcome of a pointwise inequality check; `slack = rhs - lhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub n_points: usize,
    pub worst_slack: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub excluded: usize,
}

impl InequalityReport {
    /// `passed` iff every slack is at least `-tolerance`. An empty sweep
    /// passes with slack 0.
    pub fn from_slacks<I>(name: impl Into<String>, slacks: I, tolerance: f64, excluded: usize) -> Self
    where
        I: IntoIterator<Item = f64>,
    {
        let mut n = 0;
        let mut worst = f64::INFINITY;
        let mut nan = false;
        for s in slacks {
            n += 1;
            if s.is_nan() {
                nan = true;
            }
            worst = worst.min(s);
        }
        if n == 0 {
            worst = 0.0;
        }
        if nan {
            worst = f64::NAN;
        }
        Self {
            name: name.into(),
            n_points: n,
            worst_slack: worst,
            tolerance,
            passed: !nan && worst >= -tolerance,
            excluded,
        }
    }
}

/// The fit shared by the operator and collection estimators: `ys` bounded
/// by `c * xs^g` on every pair.
struct RatioFit {
    constant: f64,
    exponent: f64,
    max_violation: f64,
}

fn fit_ratio_bound(pairs: &[(f64, f64)], mode: RegularityMode) -> Result<RatioFit> {
    // pairs are (distance, residual) with residual >= floor
    let positive: Vec<(f64, f64)> = pairs.iter().copied().filter(|(d, _)| *d > 0.0).collect();
    let exponent = match mode {
        RegularityMode::Linear => 1.0,
        RegularityMode::Hoelder => {
            let xs: Vec<f64> = positive.iter().map(|(_, r)| r.ln()).collect();
            let ys: Vec<f64> = positive.iter().map(|(d, _)| d.ln()).collect();
            let fit = least_squares(&xs, &ys).ok_or_else(|| {
                Error::Degenerate("too few distinct residuals for a log-log fit".into())
            })?;
            if !(fit.slope > 0.0) {
                return Err(Error::Fit(format!(
                    "log-log slope {} is not positive; no Hoelder bound",
                    fit.slope
                )));
            }
            fit.slope.min(1.0)
        }
    };
    let constant = pairs
        .iter()
        .map(|(d, r)| d / r.powf(exponent))
        .fold(0.0, f64::max);
    if !(constant > 0.0) {
        return Err(Error::Degenerate(
            "every retained sample is already at distance 0".into(),
        ));
    }
    let log_reg = positive
        .iter()
        .map(|(d, r)| d.ln() - exponent * r.ln())
        .sum::<f64>()
        / positive.len() as f64;
    Ok(RatioFit {
        constant,
        exponent,
        max_violation: constant / log_reg.exp(),
    })
}

fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::usage(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    Ok(())
}

fn oracle_err(index: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Oracle {
        index,
        source: Box::new(e),
    }
}

/// Fits `d(x, Fix T) <= kappa |x - T(x)|^gamma` over uniform samples of
/// `region`.
pub fn estimate_operator_regularity(
    op: &Operator,
    oracle: &FixSetOracle,
    region: &Region,
    n_samples: usize,
    mode: RegularityMode,
    seed: u64,
) -> Result<RegularityEstimate> {
    check_samples(n_samples)?;
    region.center.check_dim(op.dim(), "region")?;
    if oracle.dim() != op.dim() {
        return Err(Error::usage("oracle and operator dimensions differ"));
    }
    let points = region.sample(n_samples, seed);
    let evaluated: Vec<(f64, f64)> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let r = op.residual_slice(x.coords());
            let d = distance_to_fix(oracle, x).map_err(oracle_err(i))?.distance;
            Ok((d, r))
        })
        .collect::<Result<_>>()?;
    let retained: Vec<(f64, f64)> = evaluated
        .iter()
        .copied()
        .filter(|(_, r)| *r >= DEGENERACY_FLOOR)
        .collect();
    let excluded = evaluated.len() - retained.len();
    if retained.is_empty() {
        return Err(Error::Degenerate(format!(
            "all {n_samples} samples have residual below {DEGENERACY_FLOOR:e}"
        )));
    }
    let fit = fit_ratio_bound(&retained, mode)?;
    Ok(RegularityEstimate {
        mode,
        kappa: fit.constant,
        gamma: fit.exponent,
        region: region.clone(),
        n_samples,
        max_violation: fit.max_violation,
        excluded,
    })
}

/// Fits `d(x, ∩ C_i) <= tau max_i d(x, C_i)^theta`. Without a supplied
/// oracle the intersection is handled by [`FixSetOracle::intersection`].
pub fn estimate_collection_regularity(
    sets: &[PrimitiveSet],
    region: &Region,
    n_samples: usize,
    mode: RegularityMode,
    seed: u64,
) -> Result<CollectionEstimate> {
    estimate_collection_regularity_with(sets, None, region, n_samples, mode, seed)
}

pub fn estimate_collection_regularity_with(
    sets: &[PrimitiveSet],
    oracle: Option<&FixSetOracle>,
    region: &Region,
    n_samples: usize,
    mode: RegularityMode,
    seed: u64,
) -> Result<CollectionEstimate> {
    check_samples(n_samples)?;
    if sets.is_empty() {
        return Err(Error::usage("empty set collection"));
    }
    for s in sets {
        region.center.check_dim(s.dim(), "region")?;
    }
    let built;
    let oracle = match oracle {
        Some(o) => o,
        None => {
            built = if sets.len() == 1 {
                FixSetOracle::ExactSet(sets[0].clone())
            } else {
                FixSetOracle::intersection(sets.to_vec())?
            };
            &built
        }
    };
    let points = region.sample(n_samples, seed);
    let evaluated: Vec<(f64, f64)> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let m = sets
                .iter()
                .map(|s| point::dist(x.coords(), &s.project_slice(x.coords())))
                .fold(0.0, f64::max);
            let d = distance_to_fix(oracle, x).map_err(oracle_err(i))?.distance;
            Ok((d, m))
        })
        .collect::<Result<_>>()?;
    let retained: Vec<(f64, f64)> = evaluated
        .iter()
        .copied()
        .filter(|(_, m)| *m >= DEGENERACY_FLOOR)
        .collect();
    let excluded = evaluated.len() - retained.len();
    if retained.is_empty() {
        return Err(Error::Degenerate(format!(
            "all {n_samples} samples lie in every set"
        )));
    }
    let fit = fit_ratio_bound(&retained, mode)?;
    Ok(CollectionEstimate {
        mode,
        tau: fit.constant,
        theta: fit.exponent,
        region: region.clone(),
        n_samples,
        max_violation: fit.max_violation,
        excluded,
    })
}

fn require_fixed_point(op: &Operator, x_star: &Point) -> Result<()> {
    x_star.check_dim(op.dim(), "x_star")?;
    let r = op.residual_slice(x_star.coords());
    if !(r < FIXED_POINT_TOL) {
        return Err(Error::usage(format!(
            "x_star has residual {r:e}; it is not a fixed point"
        )));
    }
    Ok(())
}

/// `|x' + x - x*|^2 + (1 - λ)/λ |x'|^2 <= |x - x*|^2` at every sample, with
/// `x' = λ(t) (T(x) - x)` evaluated from the operator. Samples with
/// `λ(t) = 0` are skipped and counted.
pub fn check_avg_inequality(
    traj: &Trajectory,
    op: &Operator,
    x_star: &Point,
    schedule: &LambdaSchedule,
    tol: f64,
) -> Result<InequalityReport> {
    require_fixed_point(op, x_star)?;
    let mut skipped = 0;
    let mut slacks = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        s.x.check_dim(op.dim(), "trajectory")?;
        let lam = schedule.value(s.t);
        if lam == 0.0 {
            skipped += 1;
            continue;
        }
        let x = s.x.coords();
        let tx = op.eval(x);
        let xdot: Vec<f64> = x.iter().zip(&tx).map(|(a, b)| lam * (b - a)).collect();
        let shifted: Vec<f64> = (0..x.len())
            .map(|i| xdot[i] + x[i] - x_star[i])
            .collect();
        let lhs = point::norm_sq(&shifted) + (1.0 - lam) / lam * point::norm_sq(&xdot);
        let rhs = point::dist_sq(x, x_star.coords());
        slacks.push(rhs - lhs);
    }
    Ok(InequalityReport::from_slacks(
        "averaged step inequality",
        slacks,
        tol,
        skipped,
    ))
}

/// Central difference of `f` at interior node `i` on a nonuniform grid.
fn central_difference(t: &[f64], f: &[f64], i: usize) -> f64 {
    let h0 = t[i] - t[i - 1];
    let h1 = t[i + 1] - t[i];
    (h0 * h0 * f[i + 1] - h1 * h1 * f[i - 1] + (h1 * h1 - h0 * h0) * f[i])
        / (h0 * h1 * (h0 + h1))
}

/// Checks, by central differences along the recorded samples,
///
/// * `d/dt d²(x, Fix T) <= -λ |x - T(x)|²` and
/// * `d/dt |x - x*|² <= -λ (1 - λ) |x - T(x)|² - |x'|²`.
///
/// Returns one report per inequality. `tol` defaults to
/// `DESCENT_TOL_PER_DT * Δt`. Difference stencils straddling a
/// discontinuity of λ are skipped.
pub fn check_descent(
    traj: &Trajectory,
    op: &Operator,
    oracle: &FixSetOracle,
    x_star: &Point,
    schedule: &LambdaSchedule,
    tol: Option<f64>,
) -> Result<Vec<InequalityReport>> {
    require_fixed_point(op, x_star)?;
    let samples = &traj.samples;
    if samples.len() < 3 {
        return Err(Error::usage("descent check needs at least 3 samples"));
    }
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let dt = t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if dt > MAX_DESCENT_DT * (1.0 + 1e-12) {
        return Err(Error::usage(format!(
            "sample spacing {dt} exceeds {MAX_DESCENT_DT}; use a denser sampling interval"
        )));
    }
    let tol = tol.unwrap_or(DESCENT_TOL_PER_DT * dt);
    let d2: Vec<f64> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            s.x.check_dim(op.dim(), "trajectory")?;
            let d = distance_to_fix(oracle, &s.x).map_err(oracle_err(i))?.distance;
            Ok(d * d)
        })
        .collect::<Result<_>>()?;
    let e2: Vec<f64> = samples
        .iter()
        .map(|s| point::dist_sq(s.x.coords(), x_star.coords()))
        .collect();
    let mut skipped = 0;
    let mut fix_slacks = Vec::new();
    let mut fejer_slacks = Vec::new();
    for i in 1..samples.len() - 1 {
        if !schedule.breakpoints_in(t[i - 1], t[i + 1]).is_empty() {
            skipped += 1;
            continue;
        }
        let lam = schedule.value(t[i]);
        let x = samples[i].x.coords();
        let r2 = point::dist_sq(x, &op.eval(x));
        let speed2 = lam * lam * r2;
        fix_slacks.push(-lam * r2 - central_difference(&t, &d2, i));
        fejer_slacks.push(-lam * (1.0 - lam) * r2 - speed2 - central_difference(&t, &e2, i));
    }
    Ok(vec![
        InequalityReport::from_slacks("descent of distance to Fix T", fix_slacks, tol, skipped),
        InequalityReport::from_slacks("Fejer descent towards x*", fejer_slacks, tol, skipped),
    ])
}

fn check_rhos(ops: &[Operator], rhos: &[f64]) -> Result<()> {
    if ops.len() != rhos.len() {
        return Err(Error::usage(format!(
            "{} operators but {} moduli",
            ops.len(),
            rhos.len()
        )));
    }
    for (op, rho) in ops.iter().zip(rhos) {
        let declared = op.meta().rho.ok_or_else(|| {
            Error::usage(format!(
                "operator `{}` carries no SQNE modulus",
                op.meta().label
            ))
        })?;
        if !(*rho >= 0.0 && *rho <= declared * (1.0 + 1e-12)) {
            return Err(Error::usage(format!(
                "modulus {rho} for `{}` exceeds its declared {declared}",
                op.meta().label
            )));
        }
    }
    Ok(())
}

/// `sum_i w_i rho_i |x - T_i(x)|^2 <= 2 d(x, Fix T) |x - T(x)|` for
/// `T = sum_i w_i T_i`, at each point.
pub fn check_combination_bound(
    ops: &[Operator],
    weights: &[f64],
    rhos: &[f64],
    points: &[Point],
    oracle: &FixSetOracle,
) -> Result<InequalityReport> {
    check_rhos(ops, rhos)?;
    let t = Operator::convex_combination(ops.to_vec(), weights.to_vec())?;
    let slacks: Vec<f64> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            x.check_dim(t.dim(), "point")?;
            let xc = x.coords();
            let lhs: f64 = ops
                .iter()
                .zip(weights.iter().zip(rhos))
                .map(|(op, (w, rho))| w * rho * point::dist_sq(xc, &op.eval(xc)))
                .sum();
            let d = distance_to_fix(oracle, x).map_err(oracle_err(i))?.distance;
            Ok(2.0 * d * t.residual_slice(xc) - lhs)
        })
        .collect::<Result<_>>()?;
    Ok(InequalityReport::from_slacks(
        "convex combination SQNE bound",
        slacks,
        SWEEP_TOL,
        0,
    ))
}

/// `sum_i rho_i |Q_{i-1}(x) - Q_i(x)|^2 <= 2 d(x, Fix T) |x - T(x)|` with
/// `Q_0 = Id`, `Q_i = T_i ... T_1` and `T = Q_n`.
pub fn check_composition_bound(
    ops: &[Operator],
    rhos: &[f64],
    points: &[Point],
    oracle: &FixSetOracle,
) -> Result<InequalityReport> {
    check_rhos(ops, rhos)?;
    let t = Operator::compose(ops.to_vec())?;
    let slacks: Vec<f64> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            x.check_dim(t.dim(), "point")?;
            let mut q = x.coords().to_vec();
            let mut lhs = 0.0;
            for (op, rho) in ops.iter().zip(rhos) {
                let next = op.eval(&q);
                lhs += rho * point::dist_sq(&q, &next);
                q = next;
            }
            let d = distance_to_fix(oracle, x).map_err(oracle_err(i))?.distance;
            Ok(2.0 * d * point::dist(x.coords(), &q) - lhs)
        })
        .collect::<Result<_>>()?;
    Ok(InequalityReport::from_slacks(
        "composition SQNE bound",
        slacks,
        SWEEP_TOL,
        0,
    ))
}

pub const IDENTITY_TOL: f64 = 1e-12;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const GRADIENT_STEP: f64 = 1e-5;

/// Two sweeps over random data:
///
/// * `|(1-a)u + a v|² + a(1-a)|u - v|² = (1-a)|u|² + a|v|²`, error relative
///   to the sum of the absolute values of the terms;
/// * the central difference of `d²(., C)` against `2 (x - P_C x)` for
///   random primitive sets, error relative to `max(1, |gradient|_inf)`.
pub fn check_core_identities(n_samples: usize, seed: u64) -> Vec<InequalityReport> {
    let mut rng = sampling::rng(seed);
    let mut identity = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let n = rng.random_range(1..=8);
        let a: f64 = rng.random_range(-2.0..=2.0);
        let su = 10f64.powf(rng.random_range(-3.0..3.0));
        let sv = 10f64.powf(rng.random_range(-3.0..3.0));
        let u: Vec<f64> = (0..n).map(|_| su * gaussian(&mut rng)).collect();
        let v: Vec<f64> = (0..n).map(|_| sv * gaussian(&mut rng)).collect();
        identity.push(-identity_error(a, &u, &v));
    }
    let mut gradient = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let set = random_set(&mut rng);
        let x: Vec<f64> = (0..set.dim()).map(|_| 2.0 * gaussian(&mut rng)).collect();
        gradient.push(-gradient_error(&set, &x, GRADIENT_STEP));
    }
    vec![
        InequalityReport::from_slacks("averaging identity", identity, IDENTITY_TOL, 0),
        InequalityReport::from_slacks("gradient of squared distance", gradient, GRADIENT_TOL, 0),
    ]
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Relative defect of the averaging identity.
pub fn identity_error(a: f64, u: &[f64], v: &[f64]) -> f64 {
    let mix: Vec<f64> = u.iter().zip(v).map(|(ui, vi)| (1.0 - a) * ui + a * vi).collect();
    let t1 = point::norm_sq(&mix);
    let t2 = a * (1.0 - a) * point::dist_sq(u, v);
    let t3 = (1.0 - a) * point::norm_sq(u);
    let t4 = a * point::norm_sq(v);
    let scale = t1.abs() + t2.abs() + t3.abs() + t4.abs();
    if scale == 0.0 {
        return 0.0;
    }
    ((t1 + t2) - (t3 + t4)).abs() / scale
}

/// Relative sup-norm gap between the central-difference gradient of
/// `d²(., C)` and `2 (x - P_C x)`.
pub fn gradient_error(set: &PrimitiveSet, x: &[f64], h: f64) -> f64 {
    let d2 = |y: &[f64]| point::dist_sq(y, &set.project_slice(y));
    let p = set.project_slice(x);
    let g: Vec<f64> = x.iter().zip(&p).map(|(a, b)| 2.0 * (a - b)).collect();
    let mut worst = 0.0_f64;
    let mut y = x.to_vec();
    for j in 0..x.len() {
        y[j] = x[j] + h;
        let fp = d2(&y);
        y[j] = x[j] - h;
        let fm = d2(&y);
        y[j] = x[j];
        worst = worst.max(((fp - fm) / (2.0 * h) - g[j]).abs());
    }
    let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    worst / scale
}

fn random_set<R: Rng>(rng: &mut R) -> PrimitiveSet {
    let n = rng.random_range(1..=5);
    let vec_n = |rng: &mut R| -> Vec<f64> { (0..n).map(|_| gaussian(rng)).collect() };
    loop {
        let kind = rng.random_range(0..5);
        let built = match kind {
            0 => PrimitiveSet::half_space(pt(vec_n(rng)), gaussian(rng)),
            1 => PrimitiveSet::hyperplane(pt(vec_n(rng)), gaussian(rng)),
            2 => {
                let k = rng.random_range(1..=n);
                let dirs = (0..k).map(|_| pt(vec_n(rng))).collect();
                PrimitiveSet::affine(dirs, pt(vec_n(rng)))
            }
            3 => {
                let lower = vec_n(rng);
                let upper = lower
                    .iter()
                    .map(|l| l + 0.1 + gaussian(rng).abs())
                    .collect();
                PrimitiveSet::boxed(pt(lower), pt(upper))
            }
            _ => {
                let r = rng.random_range(0.1..2.0);
                PrimitiveSet::ball(pt(vec_n(rng)), r)
            }
        };
        if let Ok(s) = built {
            return s;
        }
    }
}

fn pt(v: Vec<f64>) -> Point {
    Point::from_vec_unchecked(v)
}

/// `a^theta <= b^(theta - gamma) a^gamma` for `a` on a uniform grid of
/// `[0, b]`, with `0 < gamma <= theta`.
pub fn check_exponent_comparison(gamma: f64, theta: f64, b: f64, n_grid: usize) -> Result<InequalityReport> {
    if !(gamma > 0.0 && gamma <= theta && b > 0.0 && n_grid >= 2) {
        return Err(Error::usage("need 0 < gamma <= theta, b > 0 and a grid of 2+ points"));
    }
    let m = b.powf(theta - gamma);
    let slacks = (0..n_grid).map(|k| {
        let a = b * k as f64 / (n_grid - 1) as f64;
        m * a.powf(gamma) - a.powf(theta)
    });
    Ok(InequalityReport::from_slacks("exponent comparison on [0, b]", slacks, 1e-12, 0))
}
