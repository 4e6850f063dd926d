//! The consolidated verification suite behind `regflow verify`.

use serde::Serialize;

use crate::certify;
use crate::error::{Error, Result};
use crate::fixset::{distance_to_fix, DykstraOverrides, FixSetOracle};
use crate::flow::{integrate_flow, km_iterate, IntegratorConfig, Method, Mode, Sampling};
use crate::operators::Operator;
use crate::point::Point;
use crate::rates::verify_comparison_lemmas;
use crate::regularity::{
    check_avg_inequality, check_combination_bound, check_composition_bound, check_core_identities,
    check_descent, InequalityReport,
};
use crate::sampling::Region;
use crate::scenario::{self, Prepared, RunOptions, ScenarioConfig};
use crate::sets::PrimitiveSet;

pub const IDENTITY_SAMPLES: usize = 10_000;
pub const SWEEP_POINTS: usize = 500;
pub const SWEEP_RADIUS: f64 = 10.0;
/// Sample spacing of the trajectory checks.
pub const TRAJECTORY_DT: f64 = 0.01;
/// Horizon of the trajectory checks; the interesting dynamics are over by then.
pub const TRAJECTORY_T_END: f64 = 10.0;
pub const EQUIVALENCE_STEPS: usize = 50;
pub const COMPARISON_ALPHAS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];
pub const COMPARISON_GAMMAS: [f64; 5] = [0.2, 0.35, 0.5, 0.65, 0.8];
pub const COMPARISON_U0S: [f64; 3] = [0.1, 1.0, 10.0];
pub const COMPARISON_T_END: f64 = 100.0;
/// Label of the expansive operator used as a negative control.
pub const NEGATIVE_CONTROL: &str = "expansive_control";

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    pub negative_control: bool,
    pub dykstra: DykstraOverrides,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyCheck {
    pub group: String,
    pub name: String,
    pub passed: bool,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerifyCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, group: &str, r: InequalityReport) {
        self.checks.push(VerifyCheck {
            group: group.to_string(),
            name: r.name,
            passed: r.passed,
            worst_margin: r.worst_slack,
            tolerance: r.tolerance,
            n_points: r.n_points,
        });
    }
}

fn prepared_corpus(dykstra: DykstraOverrides) -> Result<Vec<Prepared>> {
    let opts = RunOptions {
        out_dir: None,
        dykstra,
    };
    scenario::bundled_names()
        .map(|n| scenario::bundled(n).expect("bundled").prepare(&opts))
        .collect()
}

/// Runs every check; `Err` only for failures to set a check up.
pub fn verify_all(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut report = VerifyReport {
        seed: opts.seed,
        checks: Vec::new(),
    };
    for r in check_core_identities(IDENTITY_SAMPLES, opts.seed) {
        report.push("identities", r);
    }
    let corpus = prepared_corpus(opts.dykstra)?;
    let region = Region::origin_ball(2, certify::DEFAULT_RADIUS)?;
    for p in &corpus {
        let region = Region::origin_ball(p.operator.dim(), region.radius)?;
        for r in certify::certify_meta(&p.operator, &region, certify::DEFAULT_PAIRS, opts.seed)? {
            report.push(&format!("certificates/{}", p.config.name), r);
        }
    }
    for p in corpus.iter().filter(|p| p.config.mode == Mode::Continuous) {
        for r in trajectory_checks(p)? {
            report.push(&format!("trajectory/{}", p.config.name), r);
        }
    }
    for r in sqne_sweeps(opts.seed)? {
        report.push("sqne_sweeps", r);
    }
    for r in comparison_grid()? {
        report.push("comparison", r);
    }
    for p in corpus.iter().filter(|p| p.schedule.is_unit_piecewise()) {
        report.push("km_euler", km_euler_equivalence(p, EQUIVALENCE_STEPS)?);
    }
    if opts.negative_control {
        let op = expansive_control();
        let region = Region::origin_ball(op.dim(), certify::DEFAULT_RADIUS)?;
        report.push(
            "negative_control",
            certify::certify_nonexpansive(&op, &region, certify::DEFAULT_PAIRS, opts.seed)?,
        );
    }
    Ok(report)
}

/// `2 x` on the plane, labelled [`NEGATIVE_CONTROL`].
pub fn expansive_control() -> Operator {
    Operator::scale(2, 2.0)
        .expect("valid factor")
        .with_label(NEGATIVE_CONTROL)
}

/// The averaged inequality and both descent inequalities on a dense
/// resampling of a continuous scenario, with tolerance `10 Δt` for the
/// finite-difference checks.
pub fn trajectory_checks(p: &Prepared) -> Result<Vec<InequalityReport>> {
    let oracle = p
        .oracle
        .as_ref()
        .ok_or_else(|| Error::usage(format!("{} has no fix oracle", p.config.name)))?;
    let base = p.config.integrator.as_ref().expect("continuous scenario");
    let method = match base.method {
        Method::Rk45 { .. } => base.method.clone(),
        _ => Method::Rk45 {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
        },
    };
    let config = IntegratorConfig {
        method,
        t_end: TRAJECTORY_T_END.min(base.t_end),
        sampling: Sampling::Interval(TRAJECTORY_DT),
    };
    let traj = integrate_flow(&p.operator, &p.x0, &p.schedule, &config, Some(oracle))?;
    let x_star = distance_to_fix(oracle, &p.x0)?.witness;
    let mut out = vec![check_avg_inequality(
        &traj,
        &p.operator,
        &x_star,
        &p.schedule,
        scenario::DEFAULT_AVG_TOL,
    )?];
    out.extend(check_descent(
        &traj,
        &p.operator,
        oracle,
        &x_star,
        &p.schedule,
        Some(10.0 * TRAJECTORY_DT),
    )?);
    Ok(out)
}

fn pt(c: &[f64]) -> Point {
    Point::new(c.to_vec()).expect("finite literal")
}

/// `x_1 + x_2 <= 1` and `x_1 - x_2 <= 1`.
pub fn dr_halfspaces() -> (PrimitiveSet, PrimitiveSet) {
    (
        PrimitiveSet::half_space(pt(&[1.0, 1.0]), 1.0).expect("valid"),
        PrimitiveSet::half_space(pt(&[1.0, -1.0]), 1.0).expect("valid"),
    )
}

/// The three boxes of the cyclic-projection scenario.
pub fn three_boxes() -> Vec<PrimitiveSet> {
    vec![
        PrimitiveSet::boxed(pt(&[0.0, 0.0, 0.0]), pt(&[2.0, 2.0, 2.0])).expect("valid"),
        PrimitiveSet::boxed(pt(&[1.0, -1.0, 0.0]), pt(&[3.0, 1.0, 2.0])).expect("valid"),
        PrimitiveSet::boxed(pt(&[0.5, 0.5, -1.0]), pt(&[2.5, 1.5, 1.0])).expect("valid"),
    ]
}

/// The x-axis and the line through the origin at 60 degrees to it.
pub fn two_lines() -> (PrimitiveSet, PrimitiveSet) {
    (
        PrimitiveSet::hyperplane(pt(&[0.0, 1.0]), 0.0).expect("valid"),
        PrimitiveSet::hyperplane(pt(&[-0.8660254037844386, 0.5]), 0.0).expect("valid"),
    )
}

/// A family of SQNE operators with a common fixed set.
pub struct SqneFamily {
    pub name: &'static str,
    pub ops: Vec<Operator>,
    pub oracle: FixSetOracle,
}

pub fn sqne_families() -> Result<Vec<SqneFamily>> {
    let (a, b) = two_lines();
    let boxes = three_boxes();
    let (l, j) = dr_halfspaces();
    Ok(vec![
        SqneFamily {
            name: "two_lines",
            ops: vec![Operator::projector(a), Operator::projector(b)],
            oracle: FixSetOracle::SinglePoint(Point::zeros(2)),
        },
        SqneFamily {
            name: "three_boxes",
            ops: boxes.iter().cloned().map(Operator::projector).collect(),
            oracle: FixSetOracle::intersection(boxes)?,
        },
        SqneFamily {
            name: "dr_pair",
            ops: vec![
                Operator::douglas_rachford(l.clone(), j.clone())?,
                Operator::douglas_rachford(j.clone(), l.clone())?,
            ],
            oracle: FixSetOracle::intersection(vec![l, j])?,
        },
    ])
}

/// Combination (uniform and skewed weights) and composition bounds over
/// each family, at points drawn from `B(0, 10)`.
pub fn sqne_sweeps(seed: u64) -> Result<Vec<InequalityReport>> {
    let mut out = Vec::new();
    for fam in sqne_families()? {
        let m = fam.ops.len();
        let rhos: Vec<f64> = fam.ops.iter().map(|o| o.meta().rho.expect("SQNE")).collect();
        let points = Region::origin_ball(fam.ops[0].dim(), SWEEP_RADIUS)?.sample(SWEEP_POINTS, seed);
        let uniform = vec![1.0 / m as f64; m];
        let total: f64 = (1..=m).map(|i| i as f64).sum();
        let skewed: Vec<f64> = (1..=m).map(|i| i as f64 / total).collect();
        for (tag, w) in [("uniform", uniform), ("skewed", skewed)] {
            let mut r = check_combination_bound(&fam.ops, &w, &rhos, &points, &fam.oracle)?;
            r.name = format!("{} [{} {tag}]", r.name, fam.name);
            out.push(r);
        }
        let mut r = check_composition_bound(&fam.ops, &rhos, &points, &fam.oracle)?;
        r.name = format!("{} [{}]", r.name, fam.name);
        out.push(r);
    }
    Ok(out)
}

/// Growth lemmas over the full parameter grid, one report per inequality
/// and grid point.
pub fn comparison_grid() -> Result<Vec<InequalityReport>> {
    let mut out = Vec::new();
    for &alpha in &COMPARISON_ALPHAS {
        for &gamma in &COMPARISON_GAMMAS {
            for &u0 in &COMPARISON_U0S {
                let rep = verify_comparison_lemmas(alpha, gamma, u0, COMPARISON_T_END)?;
                let tag = format!("alpha={alpha} gamma={gamma} u0={u0}");
                let mut g = rep.gronwall;
                g.name = format!("{} [{tag}]", g.name);
                g.passed &= rep.passed;
                let mut b = rep.bihari_lasalle;
                b.name = format!("{} [{tag}]", b.name);
                b.passed &= rep.passed;
                out.push(g);
                out.push(b);
            }
        }
    }
    Ok(out)
}

/// Unit-step Euler on the flow against the KM iteration, compared bit for
/// bit at `t = 0, 1, ..., steps`. The slack is minus the largest
/// coordinate difference, so only exact agreement passes.
pub fn km_euler_equivalence(p: &Prepared, steps: usize) -> Result<InequalityReport> {
    let config = IntegratorConfig {
        method: Method::EulerUnit,
        t_end: steps as f64,
        sampling: Sampling::Stride(1),
    };
    let flow = integrate_flow(&p.operator, &p.x0, &p.schedule, &config, None)?;
    let km = km_iterate(&p.operator, &p.x0, &p.schedule, steps, None)?;
    let mut slacks = Vec::with_capacity(steps + 1);
    let mut mismatch = flow.samples.len() != km.samples.len();
    for (a, b) in flow.samples.iter().zip(&km.samples) {
        let bitwise = a.t == b.t
            && a.x
                .coords()
                .iter()
                .zip(b.x.coords())
                .all(|(u, v)| u.to_bits() == v.to_bits());
        mismatch |= !bitwise;
        slacks.push(0.0 - a.x.dist(&b.x));
    }
    let mut r = InequalityReport::from_slacks(
        format!("KM equals unit-step Euler [{}]", p.config.name),
        slacks,
        0.0,
        0,
    );
    r.passed &= !mismatch;
    Ok(r)
}

/// A bundled scenario prepared with default options.
pub fn prepared(name: &str) -> Result<Prepared> {
    let cfg: ScenarioConfig = scenario::bundled(name)
        .ok_or_else(|| Error::usage(format!("no bundled scenario `{name}`")))?;
    cfg.prepare(&RunOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_control_is_named_and_fails() {
        let op = expansive_control();
        let region = Region::origin_ball(2, 10.0).unwrap();
        let r = certify::certify_nonexpansive(&op, &region, 100, 0).unwrap();
        assert!(!r.passed);
        assert!(r.name.contains(NEGATIVE_CONTROL));
    }

    #[test]
    fn sqne_sweeps_pass() {
        for r in sqne_sweeps(3).unwrap() {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn km_matches_euler_on_two_lines() {
        let p = prepared("two_lines_60deg").unwrap();
        let r = km_euler_equivalence(&p, 50).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.n_points, 51);
    }
}
