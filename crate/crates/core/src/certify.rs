//! Sampled certificates for operator metadata. A certificate is an
//! [`InequalityReport`] over random pairs (or points) of a region.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixset::{distance_to_fix, FixSetOracle};
use crate::operators::Operator;
use crate::point::{self, Point};
use crate::regularity::InequalityReport;
use crate::sampling::Region;

pub const DEFAULT_PAIRS: usize = 1000;
pub const DEFAULT_RADIUS: f64 = 10.0;
pub const NONEXPANSIVE_TOL: f64 = 1e-12;
pub const AVERAGED_TOL: f64 = 1e-10;
pub const SQNE_TOL: f64 = 1e-10;
pub const IDEMPOTENCE_TOL: f64 = 1e-12;

fn pairs(region: &Region, n: usize, seed: u64) -> Vec<(Point, Point)> {
    let pts = region.sample(2 * n, seed);
    pts.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect()
}

fn check_region(op: &Operator, region: &Region) -> Result<()> {
    region.center.check_dim(op.dim(), "certificate region")
}

/// `|T x - T y| <= |x - y|`; slack relative to `max(1, |x - y|)`.
pub fn certify_nonexpansive(op: &Operator, region: &Region, n_pairs: usize, seed: u64) -> Result<InequalityReport> {
    check_region(op, region)?;
    let slacks: Vec<f64> = pairs(region, n_pairs, seed)
        .par_iter()
        .map(|(x, y)| {
            let d = x.dist(y);
            let e = point::dist(&op.eval(x.coords()), &op.eval(y.coords()));
            (d - e) / d.max(1.0)
        })
        .collect();
    Ok(InequalityReport::from_slacks(
        format!("nonexpansive[{}]", op.meta().label),
        slacks,
        NONEXPANSIVE_TOL,
        0,
    ))
}

/// `|T x - T y|² + (1-α)/α |(I-T)x - (I-T)y|² <= |x - y|²`, relative to
/// `max(1, |x - y|²)`. `α = 1/2` is firm nonexpansiveness.
pub fn certify_averaged(
    op: &Operator,
    alpha: f64,
    region: &Region,
    n_pairs: usize,
    seed: u64,
) -> Result<InequalityReport> {
    check_region(op, region)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let c = (1.0 - alpha) / alpha;
    let slacks: Vec<f64> = pairs(region, n_pairs, seed)
        .par_iter()
        .map(|(x, y)| {
            let (xc, yc) = (x.coords(), y.coords());
            let (tx, ty) = (op.eval(xc), op.eval(yc));
            let dx: Vec<f64> = (0..xc.len()).map(|i| (xc[i] - tx[i]) - (yc[i] - ty[i])).collect();
            let lhs = point::dist_sq(&tx, &ty) + c * point::norm_sq(&dx);
            let rhs = point::dist_sq(xc, yc);
            (rhs - lhs) / rhs.max(1.0)
        })
        .collect();
    Ok(InequalityReport::from_slacks(
        format!("averaged({alpha})[{}]", op.meta().label),
        slacks,
        AVERAGED_TOL,
        0,
    ))
}

/// `|T x - x*|² + ρ |x - T x|² <= |x - x*|²` with `x*` the nearest fixed
/// point of an independent sample, relative to `max(1, |x - x*|²)`.
pub fn certify_sqne(
    op: &Operator,
    rho: f64,
    oracle: &FixSetOracle,
    region: &Region,
    n_pairs: usize,
    seed: u64,
) -> Result<InequalityReport> {
    check_region(op, region)?;
    let slacks: Vec<f64> = pairs(region, n_pairs, seed)
        .par_iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let star = distance_to_fix(oracle, y)
                .map_err(|e| Error::Oracle {
                    index: i,
                    source: Box::new(e),
                })?
                .witness;
            let xc = x.coords();
            let tx = op.eval(xc);
            let lhs = point::dist_sq(&tx, star.coords()) + rho * point::dist_sq(xc, &tx);
            let rhs = point::dist_sq(xc, star.coords());
            Ok((rhs - lhs) / rhs.max(1.0))
        })
        .collect::<Result<_>>()?;
    Ok(InequalityReport::from_slacks(
        format!("sqne({rho})[{}]", op.meta().label),
        slacks,
        SQNE_TOL,
        0,
    ))
}

/// `T(T x) = T x`, as expected of a projector.
pub fn certify_idempotent(op: &Operator, region: &Region, n_points: usize, seed: u64) -> Result<InequalityReport> {
    check_region(op, region)?;
    let slacks: Vec<f64> = region
        .sample(n_points, seed)
        .par_iter()
        .map(|x| {
            let tx = op.eval(x.coords());
            -point::dist(&tx, &op.eval(&tx)) / point::norm(&tx).max(1.0)
        })
        .collect();
    Ok(InequalityReport::from_slacks(
        format!("idempotent[{}]", op.meta().label),
        slacks,
        IDEMPOTENCE_TOL,
        0,
    ))
}

/// Every certificate implied by the operator's metadata.
pub fn certify_meta(op: &Operator, region: &Region, n_pairs: usize, seed: u64) -> Result<Vec<InequalityReport>> {
    let meta = op.meta();
    let mut out = vec![certify_nonexpansive(op, region, n_pairs, seed)?];
    if let Some(alpha) = meta.alpha {
        out.push(certify_averaged(op, alpha, region, n_pairs, seed)?);
    }
    if let (Some(rho), Some(oracle)) = (meta.rho, op.fix_oracle()) {
        out.push(certify_sqne(op, rho, oracle, region, n_pairs, seed)?);
    }
    Ok(out)
}
