//! The relaxed flow `x' = λ(t) (T(x) - x)` and its unit-step discretisation,
//! the Krasnoselskii-Mann iteration.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixset::{distance_to_fix, FixSetOracle};
use crate::ode::{euler_step, rk4_step, AdaptiveStats, Dopri5};
use crate::operators::Operator;
use crate::point::{self, Point};
use crate::schedule::LambdaSchedule;

/// Residual below which the final sample is accepted as the limit point.
pub const LIMIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    /// Explicit Euler with `h = 1`; reproduces the KM iteration.
    EulerUnit,
    EulerFixed { h: f64 },
    Rk4Fixed { h: f64 },
    Rk45 { rel_tol: f64, abs_tol: f64 },
}

/// Which times are recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampling {
    /// Every `n`-th step of a fixed-step method.
    Stride(usize),
    /// Multiples of `dt`.
    Interval(f64),
    /// Explicit increasing times in `(0, t_end]`.
    Times(Vec<f64>),
    /// `count` geometrically spaced times from `first` to `t_end`.
    Geometric { first: f64, count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t_end: f64,
    pub sampling: Sampling,
}

impl IntegratorConfig {
    /// RK45 with `rel_tol = 1e-9`, `abs_tol = 1e-12`.
    pub fn adaptive(t_end: f64, sampling: Sampling) -> Self {
        Self {
            method: Method::Rk45 {
                rel_tol: 1e-9,
                abs_tol: 1e-12,
            },
            t_end,
            sampling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::usage(format!("t_end must be positive, got {}", self.t_end)));
        }
        match &self.method {
            Method::EulerUnit => {
                if self.t_end.fract() != 0.0 {
                    return Err(Error::usage("unit-step Euler needs an integer t_end"));
                }
            }
            Method::EulerFixed { h } | Method::Rk4Fixed { h } => {
                if !(h.is_finite() && *h > 0.0) {
                    return Err(Error::usage(format!("step must be positive, got {h}")));
                }
            }
            Method::Rk45 { rel_tol, abs_tol } => {
                if !(*rel_tol > 0.0 && *abs_tol > 0.0 && rel_tol.is_finite() && abs_tol.is_finite())
                {
                    return Err(Error::usage("adaptive tolerances must be positive"));
                }
            }
        }
        match &self.sampling {
            Sampling::Stride(n) => {
                if *n == 0 {
                    return Err(Error::usage("sample stride must be positive"));
                }
                if matches!(self.method, Method::Rk45 { .. }) {
                    return Err(Error::usage("stride sampling needs a fixed-step method"));
                }
            }
            Sampling::Interval(dt) => {
                if !(dt.is_finite() && *dt > 0.0) {
                    return Err(Error::usage("sample interval must be positive"));
                }
            }
            Sampling::Times(ts) => {
                if ts.is_empty()
                    || ts.iter().any(|t| !(*t > 0.0 && *t <= self.t_end))
                    || ts.windows(2).any(|w| w[0] >= w[1])
                {
                    return Err(Error::usage(
                        "sample times must be strictly increasing and inside (0, t_end]",
                    ));
                }
            }
            Sampling::Geometric { first, count } => {
                if !(*first > 0.0 && *first < self.t_end) || *count < 2 {
                    return Err(Error::usage(
                        "geometric sampling needs 0 < first < t_end and at least 2 times",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Positive sample times, ending at `t_end`.
    fn sample_times(&self, step: Option<f64>) -> Result<Vec<f64>> {
        let t_end = self.t_end;
        let mut ts = match &self.sampling {
            Sampling::Stride(n) => {
                let h = step.expect("stride sampling is validated against fixed steps");
                let n_steps = (t_end / h).ceil() as usize;
                (1..=n_steps)
                    .filter(|k| k % n == 0)
                    .map(|k| (k as f64 * h).min(t_end))
                    .collect()
            }
            Sampling::Interval(dt) => {
                let n = (t_end / dt * (1.0 + 1e-12)).floor() as usize;
                (1..=n).map(|k| (k as f64 * dt).min(t_end)).collect()
            }
            Sampling::Times(ts) => ts.clone(),
            Sampling::Geometric { first, count } => {
                let q = (t_end / first).ln() / (*count - 1) as f64;
                (0..*count - 1)
                    .map(|j| first * (q * j as f64).exp())
                    .collect()
            }
        };
        ts.dedup();
        if ts.last().is_none_or(|t| *t < t_end) {
            ts.push(t_end);
        }
        Ok(ts)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Continuous,
    Discrete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: Point,
    pub residual: f64,
    pub dist_fix: Option<f64>,
    /// `λ(t) * residual`.
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub mode: Mode,
    /// Absent for trajectories read back from CSV.
    pub schedule: Option<LambdaSchedule>,
    pub limit_estimate: Option<Point>,
    /// Step-control summary of adaptive runs.
    pub stats: Option<AdaptiveStats>,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectories are never empty")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Resets `limit_estimate` against a residual tolerance.
    pub fn set_limit_tolerance(&mut self, tol: f64) {
        let last = self.last();
        self.limit_estimate = (last.residual < tol).then(|| last.x.clone());
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.samples.first().map_or(0, |s| s.x.dim());
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        header.extend(["residual", "dist_fix", "speed"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let mut fields = vec![fmt_f64(s.t)];
            fields.extend(s.x.coords().iter().map(|v| fmt_f64(*v)));
            fields.push(fmt_f64(s.residual));
            fields.push(s.dist_fix.map(fmt_f64).unwrap_or_default());
            fields.push(fmt_f64(s.speed));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    /// Reads a trajectory written by [`Trajectory::write_csv`]. The schedule
    /// is not stored in the file; integer-only times are read as discrete.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::usage(format!("csv line {line}: {msg}"));
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let n = cols.len().checked_sub(4).ok_or_else(|| bad(1, "too few columns"))?;
        let expected: Vec<String> = std::iter::once("t".to_string())
            .chain((0..n).map(|i| format!("x_{i}")))
            .chain(["residual", "dist_fix", "speed"].map(String::from))
            .collect();
        if cols != expected {
            return Err(bad(1, "unexpected header"));
        }
        if n == 0 {
            return Err(bad(1, "no coordinate columns"));
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != n + 4 {
                return Err(bad(lineno, "wrong number of fields"));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(lineno, &format!("not a number: `{s}`")))
            };
            let t = num(f[0])?;
            let x = (1..=n).map(|j| num(f[j])).collect::<Result<Vec<_>>>()?;
            let residual = num(f[n + 1])?;
            let dist_fix = if f[n + 2].is_empty() {
                None
            } else {
                Some(num(f[n + 2])?)
            };
            let speed = num(f[n + 3])?;
            samples.push(TrajectorySample {
                t,
                x: Point::new(x).map_err(|e| bad(lineno, &e.to_string()))?,
                residual,
                dist_fix,
                speed,
            });
        }
        if samples.is_empty() {
            return Err(Error::usage("csv has no samples"));
        }
        if samples.windows(2).any(|w| w[0].t >= w[1].t) {
            return Err(Error::usage("csv sample times are not strictly increasing"));
        }
        let discrete = samples
            .iter()
            .enumerate()
            .all(|(k, s)| s.t == k as f64);
        let mut traj = Trajectory {
            samples,
            mode: if discrete { Mode::Discrete } else { Mode::Continuous },
            schedule: None,
            limit_estimate: None,
            stats: None,
        };
        traj.set_limit_tolerance(LIMIT_TOL);
        Ok(traj)
    }
}

/// 17 significant digits; parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn make_sample(
    op: &Operator,
    oracle: Option<&FixSetOracle>,
    lam: f64,
    t: f64,
    x: Vec<f64>,
    index: usize,
) -> Result<TrajectorySample> {
    let residual = op.residual_slice(&x);
    sample_with_residual(oracle, lam, t, x, residual, index)
}

fn sample_with_residual(
    oracle: Option<&FixSetOracle>,
    lam: f64,
    t: f64,
    x: Vec<f64>,
    residual: f64,
    index: usize,
) -> Result<TrajectorySample> {
    if !point::all_finite(&x) || !residual.is_finite() {
        return Err(Error::Numeric(format!("state became non-finite at t = {t}")));
    }
    let x = Point::from_vec_unchecked(x);
    let dist_fix = match oracle {
        Some(o) => Some(
            distance_to_fix(o, &x)
                .map_err(|e| Error::Oracle {
                    index,
                    source: Box::new(e),
                })?
                .distance,
        ),
        None => None,
    };
    Ok(TrajectorySample {
        t,
        x,
        residual,
        dist_fix,
        speed: lam * residual,
    })
}

fn check_inputs(op: &Operator, x0: &Point, oracle: Option<&FixSetOracle>) -> Result<()> {
    x0.check_dim(op.dim(), "initial point")?;
    if let Some(o) = oracle {
        if o.dim() != op.dim() {
            return Err(Error::usage(format!(
                "oracle dimension {} does not match operator dimension {}",
                o.dim(),
                op.dim()
            )));
        }
    }
    Ok(())
}

fn finish(
    samples: Vec<TrajectorySample>,
    mode: Mode,
    schedule: &LambdaSchedule,
    stats: Option<AdaptiveStats>,
) -> Trajectory {
    let mut traj = Trajectory {
        samples,
        mode,
        schedule: Some(schedule.clone()),
        limit_estimate: None,
        stats,
    };
    traj.set_limit_tolerance(LIMIT_TOL);
    traj
}

/// Integrates `x' = λ(t) (T(x) - x)`, `x(0) = x0`, over `[0, t_end]`.
/// Steps never straddle a discontinuity of λ.
pub fn integrate_flow(
    op: &Operator,
    x0: &Point,
    schedule: &LambdaSchedule,
    config: &IntegratorConfig,
    oracle: Option<&FixSetOracle>,
) -> Result<Trajectory> {
    check_inputs(op, x0, oracle)?;
    config.validate()?;
    match &config.method {
        Method::EulerUnit => {
            if !schedule.is_unit_piecewise() {
                return Err(Error::usage(
                    "unit-step Euler needs a schedule constant on each [k, k+1)",
                ));
            }
            let k = config.t_end as usize;
            let mut traj = km_iterate(op, x0, schedule, k, oracle)?;
            traj.mode = Mode::Continuous;
            let keep: Vec<f64> = config.sample_times(Some(1.0))?;
            traj.samples
                .retain(|s| s.t == 0.0 || keep.iter().any(|t| *t == s.t));
            Ok(traj)
        }
        Method::EulerFixed { h } => fixed_step(op, x0, schedule, config, *h, oracle, false),
        Method::Rk4Fixed { h } => fixed_step(op, x0, schedule, config, *h, oracle, true),
        Method::Rk45 { rel_tol, abs_tol } => {
            adaptive(op, x0, schedule, config, *rel_tol, *abs_tol, oracle)
        }
    }
}

/// The vector field with λ frozen to its value on the current piece.
fn field<'a>(
    op: &'a Operator,
    schedule: &'a LambdaSchedule,
    piece_lambda: Option<f64>,
) -> impl FnMut(f64, &[f64]) -> Vec<f64> + 'a {
    move |t: f64, x: &[f64]| {
        let lam = piece_lambda.unwrap_or_else(|| schedule.value(t));
        let tx = op.eval(x);
        x.iter().zip(&tx).map(|(xi, ti)| lam * (ti - xi)).collect()
    }
}

/// Splits `[a, b]` at the breakpoints of λ and reports, for each piece, the
/// λ value to freeze when λ is piecewise constant.
fn pieces(schedule: &LambdaSchedule, a: f64, b: f64) -> Vec<(f64, f64, Option<f64>)> {
    let cuts = schedule.breakpoints_in(a, b);
    let piecewise = schedule.is_piecewise_constant();
    let mut bounds = vec![a];
    bounds.extend(cuts);
    bounds.push(b);
    bounds
        .windows(2)
        .map(|w| (w[0], w[1], piecewise.then(|| schedule.value(w[0]))))
        .collect()
}

fn fixed_step(
    op: &Operator,
    x0: &Point,
    schedule: &LambdaSchedule,
    config: &IntegratorConfig,
    h: f64,
    oracle: Option<&FixSetOracle>,
    rk4: bool,
) -> Result<Trajectory> {
    let t_end = config.t_end;
    let n_steps = (t_end / h * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let wanted = config.sample_times(Some(h))?;
    let mut samples = vec![make_sample(op, oracle, schedule.value(0.0), 0.0, x0.coords().to_vec(), 0)?];
    let mut next_sample = 0;
    let mut x = x0.coords().to_vec();
    let mut t = 0.0;
    for k in 1..=n_steps {
        let t1 = if k == n_steps { t_end } else { k as f64 * h };
        // Advance over [t, t1] and, within it, to each requested sample time.
        let mut stops: Vec<f64> = wanted[next_sample..]
            .iter()
            .copied()
            .take_while(|s| *s < t1)
            .collect();
        stops.push(t1);
        for stop in stops {
            for (a, b, lam) in pieces(schedule, t, stop) {
                let mut f = field(op, schedule, lam);
                x = if rk4 {
                    rk4_step(&mut f, a, &x, b - a)
                } else {
                    euler_step(&mut f, a, &x, b - a)
                };
            }
            t = stop;
            while next_sample < wanted.len() && wanted[next_sample] <= t {
                let idx = samples.len();
                samples.push(make_sample(op, oracle, schedule.value(t), t, x.clone(), idx)?);
                next_sample += 1;
            }
        }
    }
    Ok(finish(samples, Mode::Continuous, schedule, None))
}

fn adaptive(
    op: &Operator,
    x0: &Point,
    schedule: &LambdaSchedule,
    config: &IntegratorConfig,
    rel_tol: f64,
    abs_tol: f64,
    oracle: Option<&FixSetOracle>,
) -> Result<Trajectory> {
    let wanted = config.sample_times(None)?;
    let mut samples = vec![make_sample(op, oracle, schedule.value(0.0), 0.0, x0.coords().to_vec(), 0)?];
    let mut solver = Dopri5::new(rel_tol, abs_tol);
    let mut x = x0.coords().to_vec();
    let mut t = 0.0;
    for t1 in wanted {
        for (a, b, lam) in pieces(schedule, t, t1) {
            let mut f = field(op, schedule, lam);
            if let Err(collapse) = solver.advance(&mut f, a, b, &mut x) {
                let partial = finish(samples, Mode::Continuous, schedule, Some(solver.stats().clone()));
                return Err(Error::Integration {
                    t: collapse.t,
                    message: format!("step size collapsed to {:e}", collapse.h),
                    partial: Box::new(partial),
                });
            }
        }
        t = t1;
        let idx = samples.len();
        samples.push(make_sample(op, oracle, schedule.value(t), t, x.clone(), idx)?);
    }
    Ok(finish(samples, Mode::Continuous, schedule, Some(solver.stats().clone())))
}

/// `x_{k+1} = (1 - λ_k) x_k + λ_k T(x_k)` with `λ_k = λ(k)`, for `k < iterations`.
pub fn km_iterate(
    op: &Operator,
    x0: &Point,
    schedule: &LambdaSchedule,
    iterations: usize,
    oracle: Option<&FixSetOracle>,
) -> Result<Trajectory> {
    check_inputs(op, x0, oracle)?;
    if iterations == 0 {
        return Err(Error::usage("iteration count must be positive"));
    }
    let mut samples = Vec::with_capacity(iterations + 1);
    let mut x = x0.coords().to_vec();
    for k in 0..=iterations {
        let lam = schedule.value(k as f64);
        let tx = op.eval(&x);
        let residual = point::dist(&x, &tx);
        samples.push(sample_with_residual(oracle, lam, k as f64, x.clone(), residual, k)?);
        if k < iterations {
            x = point::lerp(&x, &tx, lam);
        }
    }
    Ok(finish(samples, Mode::Discrete, schedule, None))
}

/// KM iteration driven by an explicit relaxation sequence, one step per entry.
pub fn km_iterate_sequence(
    op: &Operator,
    x0: &Point,
    lambdas: &[f64],
    oracle: Option<&FixSetOracle>,
) -> Result<Trajectory> {
    let schedule = LambdaSchedule::from_sequence(lambdas)?;
    km_iterate(op, x0, &schedule, lambdas.len(), oracle)
}

/// Recomputes residual, speed and (when an oracle is given) the distance to
/// `Fix T` for every sample. Idempotent.
pub fn sample_metrics(
    traj: &Trajectory,
    op: &Operator,
    oracle: Option<&FixSetOracle>,
) -> Result<Trajectory> {
    if traj.samples.is_empty() {
        return Err(Error::usage("trajectory has no samples"));
    }
    let lam_at = |t: f64| traj.schedule.as_ref().map_or(1.0, |s| s.value(t));
    let samples = traj
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.x.check_dim(op.dim(), "sample_metrics")?;
            let mut out = make_sample(op, oracle, lam_at(s.t), s.t, s.x.coords().to_vec(), i)?;
            if oracle.is_none() {
                out.dist_fix = s.dist_fix;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Trajectory {
        samples,
        ..traj.clone()
    };
    out.set_limit_tolerance(LIMIT_TOL);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn rk45(t_end: f64, sampling: Sampling, rel: f64) -> IntegratorConfig {
        IntegratorConfig {
            method: Method::Rk45 {
                rel_tol: rel,
                abs_tol: 1e-14,
            },
            t_end,
            sampling,
        }
    }

    #[test]
    fn zero_map_flow_is_exponential() {
        let op = Operator::zero(1);
        let s = LambdaSchedule::constant(1.0).unwrap();
        let cfg = rk45(1.0, Sampling::Interval(0.25), 1e-10);
        let traj = integrate_flow(&op, &pt(&[1.0]), &s, &cfg, None).unwrap();
        assert_eq!(traj.samples[0].x, pt(&[1.0]));
        assert_eq!(traj.times(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!((traj.last().x[0] - 0.3678794412).abs() < 1e-8);
        assert!(traj.stats.is_some());
    }

    #[test]
    fn identity_and_frozen_flows_stay_put() {
        let x0 = pt(&[0.3, -2.0]);
        let cfg = rk45(5.0, Sampling::Interval(1.0), 1e-9);
        let s = LambdaSchedule::sine(0.5, 0.4, 3.0).unwrap();
        let traj = integrate_flow(&Operator::identity(2), &x0, &s, &cfg, None).unwrap();
        assert!(traj.samples.iter().all(|p| p.x == x0));
        let frozen = LambdaSchedule::constant(0.0).unwrap();
        let traj = integrate_flow(&Operator::zero(2), &x0, &frozen, &cfg, None).unwrap();
        assert!(traj.samples.iter().all(|p| p.x == x0));
    }

    #[test]
    fn km_examples() {
        let z = Operator::zero(1);
        let one = LambdaSchedule::constant(1.0).unwrap();
        let half = LambdaSchedule::constant(0.5).unwrap();
        let t = km_iterate(&z, &pt(&[5.0]), &one, 1, None).unwrap();
        assert_eq!(t.samples[1].x, pt(&[0.0]));
        let t = km_iterate(&z, &pt(&[8.0]), &half, 3, None).unwrap();
        assert_eq!(t.samples[3].x, pt(&[1.0]));
        assert_eq!(t.times(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(t.mode, Mode::Discrete);

        let line45 = crate::sets::PrimitiveSet::line(pt(&[1.0, 1.0])).unwrap();
        let xaxis = crate::sets::PrimitiveSet::hyperplane(pt(&[0.0, 1.0]), 0.0).unwrap();
        let op = Operator::compose(vec![Operator::projector(line45), Operator::projector(xaxis)])
            .unwrap();
        let t = km_iterate(&op, &pt(&[0.0, 2.0]), &one, 2, None).unwrap();
        assert!(t.samples[1].x.dist(&pt(&[1.0, 0.0])) < 1e-15);
        assert!(t.samples[2].x.dist(&pt(&[0.5, 0.0])) < 1e-15);
    }

    #[test]
    fn euler_unit_matches_km_bitwise() {
        let xaxis = crate::sets::PrimitiveSet::hyperplane(pt(&[0.0, 1.0]), 0.0).unwrap();
        let ball = crate::sets::PrimitiveSet::ball(pt(&[0.0, 1.0]), 1.0).unwrap();
        let op = Operator::compose(vec![Operator::projector(ball), Operator::projector(xaxis)])
            .unwrap();
        let s = LambdaSchedule::from_sequence(&[0.3, 0.9, 0.5, 0.7, 1.0]).unwrap();
        let cfg = IntegratorConfig {
            method: Method::EulerUnit,
            t_end: 20.0,
            sampling: Sampling::Stride(1),
        };
        let x0 = pt(&[2.0, 3.0]);
        let a = integrate_flow(&op, &x0, &s, &cfg, None).unwrap();
        let b = km_iterate(&op, &x0, &s, 20, None).unwrap();
        assert_eq!(a.samples.len(), 21);
        for (p, q) in a.samples.iter().zip(&b.samples) {
            assert_eq!(p.x, q.x);
            assert_eq!(p.t, q.t);
        }
    }

    #[test]
    fn fixed_step_orders() {
        let op = Operator::zero(1);
        let s = LambdaSchedule::constant(1.0).unwrap();
        let exact = (-1.0f64).exp();
        let err = |m: Method| {
            let cfg = IntegratorConfig {
                method: m,
                t_end: 1.0,
                sampling: Sampling::Stride(1000),
            };
            (integrate_flow(&op, &pt(&[1.0]), &s, &cfg, None).unwrap().last().x[0] - exact).abs()
        };
        let e1 = err(Method::EulerFixed { h: 0.01 });
        let e2 = err(Method::EulerFixed { h: 0.005 });
        assert!((e1 / e2 - 2.0).abs() < 0.05, "{}", e1 / e2);
        let r1 = err(Method::Rk4Fixed { h: 0.1 });
        let r2 = err(Method::Rk4Fixed { h: 0.05 });
        assert!((r1 / r2 - 16.0).abs() < 1.0, "{}", r1 / r2);
    }

    #[test]
    fn piecewise_schedule_restarts_at_breakpoints() {
        // x' = -λ x with λ = 1 on [0, 0.5), 0 after: x(1) = e^{-1/2}.
        let op = Operator::zero(1);
        let s = LambdaSchedule::piecewise(vec![0.5], vec![1.0, 0.0]).unwrap();
        let cfg = rk45(1.0, Sampling::Interval(0.3), 1e-11);
        let traj = integrate_flow(&op, &pt(&[1.0]), &s, &cfg, None).unwrap();
        assert!((traj.last().x[0] - (-0.5f64).exp()).abs() < 1e-10);
        let cfg = IntegratorConfig {
            method: Method::Rk4Fixed { h: 0.3 },
            t_end: 1.0,
            sampling: Sampling::Stride(1),
        };
        let traj = integrate_flow(&op, &pt(&[1.0]), &s, &cfg, None).unwrap();
        assert!((traj.last().x[0] - (-0.5f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn metrics_and_csv_round_trip() {
        let op = Operator::zero(1);
        let s = LambdaSchedule::constant(1.0).unwrap();
        let oracle = FixSetOracle::SinglePoint(pt(&[0.0]));
        let cfg = rk45(2.0, Sampling::Interval(0.5), 1e-10);
        let traj = integrate_flow(&op, &pt(&[1.0]), &s, &cfg, Some(&oracle)).unwrap();
        for p in &traj.samples {
            assert_eq!(p.residual, p.x[0].abs());
            assert_eq!(p.dist_fix, Some(p.x[0].abs()));
            assert!((p.speed - p.residual).abs() <= 1e-12);
        }
        let again = sample_metrics(&traj, &op, Some(&oracle)).unwrap();
        assert_eq!(again, traj);
        assert_eq!(sample_metrics(&again, &op, Some(&oracle)).unwrap(), again);

        let csv = traj.to_csv_string();
        assert!(csv.starts_with("t,x_0,residual,dist_fix,speed\n"));
        let back = Trajectory::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(back.samples, traj.samples);

        let plain = integrate_flow(&op, &pt(&[1.0]), &s, &cfg, None).unwrap();
        let back = Trajectory::read_csv(plain.to_csv_string().as_bytes()).unwrap();
        assert!(back.samples.iter().all(|p| p.dist_fix.is_none()));
    }

    #[test]
    fn zero_map_backfill_example() {
        let op = Operator::zero(1);
        let oracle = FixSetOracle::SinglePoint(pt(&[0.0]));
        let traj = Trajectory {
            samples: vec![TrajectorySample {
                t: 0.7,
                x: pt(&[0.5]),
                residual: 0.0,
                dist_fix: None,
                speed: 0.0,
            }],
            mode: Mode::Continuous,
            schedule: Some(LambdaSchedule::constant(1.0).unwrap()),
            limit_estimate: None,
            stats: None,
        };
        let t = sample_metrics(&traj, &op, Some(&oracle)).unwrap();
        assert_eq!(t.samples[0].residual, 0.5);
        assert_eq!(t.samples[0].dist_fix, Some(0.5));
    }

    #[test]
    fn geometric_sampling_ends_at_t_end() {
        let cfg = rk45(1000.0, Sampling::Geometric { first: 0.1, count: 5 }, 1e-9);
        let ts = cfg.sample_times(None).unwrap();
        assert_eq!(ts.len(), 5);
        assert_eq!(*ts.last().unwrap(), 1000.0);
        assert!((ts[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs() {
        let op = Operator::zero(1);
        let s = LambdaSchedule::sine(0.5, 0.2, 1.0).unwrap();
        let cfg = IntegratorConfig {
            method: Method::EulerUnit,
            t_end: 3.0,
            sampling: Sampling::Stride(1),
        };
        assert!(integrate_flow(&op, &pt(&[1.0]), &s, &cfg, None).is_err());
        let cfg = rk45(0.0, Sampling::Interval(0.1), 1e-9);
        assert!(integrate_flow(&op, &pt(&[1.0]), &s, &cfg, None).is_err());
        let cfg = rk45(1.0, Sampling::Stride(2), 1e-9);
        assert!(integrate_flow(&op, &pt(&[1.0]), &s, &cfg, None).is_err());
        assert!(km_iterate(&op, &pt(&[1.0, 2.0]), &s, 3, None).is_err());
    }
}
