//! Decay-model fits of trajectory metrics and checks of the explicit rate
//! bounds under linear and Hoelder regularity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::ode::Dopri5;
use crate::point::Point;
use crate::regularity::InequalityReport;
use crate::schedule::LambdaSchedule;

/// Metric values at or below this are treated as converged.
pub const METRIC_FLOOR: f64 = 1e-13;
pub const MIN_FIT_POINTS: usize = 10;
/// Fraction of the early samples dropped by the default window.
pub const TRANSIENT_FRACTION: f64 = 0.2;
/// Absolute tolerance (times `max(1, u0)`) of the scalar comparison checks.
pub const COMPARISON_TOL: f64 = 1e-9;

/// Ordinary least squares `y ≈ slope x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub rss: f64,
}

/// `None` with fewer than two points or no spread in `xs`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    Some(LineFit {
        slope,
        intercept,
        rss,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Residual,
    DistFix,
    /// `|x(t) - x̄|` with `x̄` the trajectory's limit estimate.
    DistToLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `M exp(-r t)`.
    Exponential,
    /// `M t^(-rho)`.
    Powerlaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub model: Model,
    #[serde(rename = "M")]
    pub m: f64,
    pub rate: f64,
    /// Residual sum of squares in log space.
    pub rss: f64,
    pub n_points: usize,
    pub fit_window: [f64; 2],
}

impl RateFit {
    pub fn rss_per_point(&self) -> f64 {
        self.rss / self.n_points as f64
    }

    pub fn predict(&self, t: f64) -> f64 {
        match self.model {
            Model::Exponential => self.m * (-self.rate * t).exp(),
            Model::Powerlaw => self.m * t.powf(-self.rate),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted(RateFit),
    /// The metric is already zero (below the floor) on the whole window.
    Converged,
}

/// Extracts `(t, metric)` from a trajectory.
pub fn metric_series(traj: &Trajectory, metric: Metric) -> Result<Vec<(f64, f64)>> {
    traj.samples
        .iter()
        .map(|s| {
            let v = match metric {
                Metric::Residual => s.residual,
                Metric::DistFix => s.dist_fix.ok_or_else(|| {
                    Error::usage("trajectory has no distance to Fix T; supply an oracle")
                })?,
                Metric::DistToLimit => {
                    let limit = traj.limit_estimate.as_ref().ok_or_else(|| {
                        Error::usage(
                            "trajectory has no limit estimate; run longer or loosen the residual threshold",
                        )
                    })?;
                    s.x.dist(limit)
                }
            };
            Ok((s.t, v))
        })
        .collect()
}

/// Fits a decay model to a trajectory metric.
pub fn fit_decay(
    traj: &Trajectory,
    metric: Metric,
    model: Model,
    window: Option<[f64; 2]>,
) -> Result<FitOutcome> {
    fit_series(&metric_series(traj, metric)?, model, window)
}

/// Fits `(t, y)` data. With an explicit window every strictly positive value
/// inside it is used; otherwise values above [`METRIC_FLOOR`] (and `t >= 1`
/// for power laws) are kept and the earliest [`TRANSIENT_FRACTION`] dropped.
pub fn fit_series(series: &[(f64, f64)], model: Model, window: Option<[f64; 2]>) -> Result<FitOutcome> {
    let selected: Vec<(f64, f64)> = match window {
        Some([lo, hi]) => {
            if !(lo < hi) {
                return Err(Error::usage(format!("empty fit window [{lo}, {hi}]")));
            }
            if model == Model::Powerlaw && !(lo > 0.0) {
                return Err(Error::usage("power-law fits need a window with t_min > 0"));
            }
            let inside: Vec<(f64, f64)> = series
                .iter()
                .copied()
                .filter(|(t, _)| *t >= lo && *t <= hi)
                .collect();
            if !inside.is_empty() && inside.iter().all(|(_, y)| *y == 0.0) {
                return Ok(FitOutcome::Converged);
            }
            inside.into_iter().filter(|(_, y)| *y > 0.0).collect()
        }
        None => {
            let eligible: Vec<(f64, f64)> = series
                .iter()
                .copied()
                .filter(|(t, _)| model == Model::Exponential || *t >= 1.0)
                .collect();
            let positive: Vec<(f64, f64)> = eligible
                .iter()
                .copied()
                .filter(|(_, y)| *y > METRIC_FLOOR)
                .collect();
            if positive.is_empty() && !eligible.is_empty() {
                return Ok(FitOutcome::Converged);
            }
            let keep = ((1.0 - TRANSIENT_FRACTION) * positive.len() as f64).ceil() as usize;
            positive[positive.len() - keep..].to_vec()
        }
    };
    if selected.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} positive samples in the window, need {MIN_FIT_POINTS}",
            selected.len()
        )));
    }
    let xs: Vec<f64> = selected
        .iter()
        .map(|(t, _)| match model {
            Model::Exponential => *t,
            Model::Powerlaw => t.ln(),
        })
        .collect();
    let ys: Vec<f64> = selected.iter().map(|(_, y)| y.ln()).collect();
    let line = least_squares(&xs, &ys)
        .ok_or_else(|| Error::Fit("fit window has no spread in time".into()))?;
    let rate = -line.slope;
    if !(rate > 0.0) || !line.rss.is_finite() {
        return Err(Error::Fit(format!("metric is not decaying (fitted rate {rate})")));
    }
    Ok(FitOutcome::Fitted(RateFit {
        model,
        m: line.intercept.exp(),
        rate,
        rss: line.rss,
        n_points: selected.len(),
        fit_window: [selected[0].0, selected[selected.len() - 1].0],
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub exponential: RateFit,
    pub powerlaw: RateFit,
    pub chosen: Model,
}

impl ModelSelection {
    pub fn chosen_fit(&self) -> &RateFit {
        match self.chosen {
            Model::Exponential => &self.exponential,
            Model::Powerlaw => &self.powerlaw,
        }
    }
}

/// Fits both models and keeps the one with the smaller per-point rss.
pub fn select_model(traj: &Trajectory, metric: Metric, window: Option<[f64; 2]>) -> Result<ModelSelection> {
    select_model_series(&metric_series(traj, metric)?, window)
}

pub fn select_model_series(series: &[(f64, f64)], window: Option<[f64; 2]>) -> Result<ModelSelection> {
    let fitted = |model| match fit_series(series, model, window)? {
        FitOutcome::Fitted(f) => Ok(f),
        FitOutcome::Converged => Err(Error::Degenerate(
            "metric is already zero; nothing to select".into(),
        )),
    };
    let exponential = fitted(Model::Exponential)?;
    let powerlaw = fitted(Model::Powerlaw)?;
    let chosen = if exponential.rss_per_point() <= powerlaw.rss_per_point() {
        Model::Exponential
    } else {
        Model::Powerlaw
    };
    Ok(ModelSelection {
        exponential,
        powerlaw,
        chosen,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound_name: String,
    pub n_points: usize,
    /// Smallest `bound - observed` over the checked samples.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl BoundCheck {
    fn from_margins<I: IntoIterator<Item = f64>>(name: &str, margins: I, tolerance: f64) -> Self {
        let r = InequalityReport::from_slacks(name, margins, tolerance, 0);
        Self {
            bound_name: r.name,
            n_points: r.n_points,
            worst_margin: r.worst_slack,
            tolerance,
            passed: r.passed,
        }
    }
}

struct BoundInputs<'a> {
    limit: &'a Point,
    dists: Vec<f64>,
}

fn bound_inputs(traj: &Trajectory) -> Result<BoundInputs<'_>> {
    let limit = traj.limit_estimate.as_ref().ok_or_else(|| {
        Error::usage("trajectory has no limit estimate; run longer or loosen the residual threshold")
    })?;
    let dists = traj
        .samples
        .iter()
        .map(|s| {
            s.dist_fix
                .ok_or_else(|| Error::usage("trajectory has no distance to Fix T; supply an oracle"))
        })
        .collect::<Result<_>>()?;
    Ok(BoundInputs { limit, dists })
}

/// Checks, at every sample, with `λ* = inf λ`:
///
/// * `d²(x(t), Fix T) <= exp(-λ* t / κ²) d0²`,
/// * `|x(t) - x̄| <= 2 d(x(t), Fix T)`,
/// * `|x(t) - x̄| <= 2 exp(-λ* t / (2κ²)) d0`.
pub fn check_linear_rate_bound(
    traj: &Trajectory,
    kappa: f64,
    schedule: &LambdaSchedule,
    d0: f64,
    tol: f64,
) -> Result<Vec<BoundCheck>> {
    if !(kappa > 0.0 && d0 >= 0.0) {
        return Err(Error::usage("need kappa > 0 and d0 >= 0"));
    }
    let inputs = bound_inputs(traj)?;
    let lam = schedule.inf_value();
    let k2 = kappa * kappa;
    let mut squared = Vec::new();
    let mut twice = Vec::new();
    let mut displayed = Vec::new();
    for (s, d) in traj.samples.iter().zip(&inputs.dists) {
        let to_limit = s.x.dist(inputs.limit);
        squared.push((-lam * s.t / k2).exp() * d0 * d0 - d * d);
        twice.push(2.0 * d - to_limit);
        displayed.push(2.0 * (-lam * s.t / (2.0 * k2)).exp() * d0 - to_limit);
    }
    Ok(vec![
        BoundCheck::from_margins("squared distance decays exponentially", squared, tol),
        BoundCheck::from_margins("limit within twice the distance", twice, tol),
        BoundCheck::from_margins("exponential trajectory bound", displayed, tol),
    ])
}

/// `rho = gamma / (2 (1 - gamma))`.
pub fn hoelder_rate_exponent(gamma: f64) -> f64 {
    gamma / (2.0 * (1.0 - gamma))
}

/// `M0 = sqrt(M)` with `M = (gamma / (a (1 - gamma)))^(gamma / (1 - gamma))`
/// and `a = λ* / kappa^(2/gamma)`, so that `d(x(t), Fix T) <= M0 t^-rho`.
/// Evaluated in log space.
pub fn hoelder_rate_constant(kappa: f64, gamma: f64, lambda_star: f64) -> f64 {
    let log_a = lambda_star.ln() - (2.0 / gamma) * kappa.ln();
    let log_m = gamma / (1.0 - gamma) * (gamma.ln() - log_a - (1.0 - gamma).ln());
    (0.5 * log_m).exp()
}

/// Checks `d(x(t), Fix T) <= M0 t^-rho` and `|x(t) - x̄| <= 2 M0 t^-rho`
/// for samples with `t >= 1`.
pub fn check_hoelder_rate_bound(
    traj: &Trajectory,
    kappa: f64,
    gamma: f64,
    schedule: &LambdaSchedule,
    tol: f64,
) -> Result<Vec<BoundCheck>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::usage(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(kappa > 0.0) {
        return Err(Error::usage("kappa must be positive"));
    }
    let lam = schedule.inf_value();
    if !(lam > 0.0) {
        return Err(Error::usage("the rate bound needs inf λ > 0"));
    }
    let inputs = bound_inputs(traj)?;
    let m0 = hoelder_rate_constant(kappa, gamma, lam);
    let rho = hoelder_rate_exponent(gamma);
    let mut dist = Vec::new();
    let mut traj_bound = Vec::new();
    for (s, d) in traj.samples.iter().zip(&inputs.dists) {
        if s.t < 1.0 {
            continue;
        }
        let b = m0 * s.t.powf(-rho);
        dist.push(b - d);
        traj_bound.push(2.0 * b - s.x.dist(inputs.limit));
    }
    Ok(vec![
        BoundCheck::from_margins("distance power bound", dist, tol),
        BoundCheck::from_margins("trajectory power bound", traj_bound, tol),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub gamma: f64,
    pub u0: f64,
    /// `u(t) <= exp(-alpha t) u0` along `u' = -alpha u`.
    pub gronwall: InequalityReport,
    /// Largest gap to `exp(-alpha t) u0`, which the linear ODE saturates.
    pub gronwall_error: f64,
    /// `u(t) <= M t^(-gamma/(1-gamma))` along `u' = -alpha u^(1/gamma)`.
    pub bihari_lasalle: InequalityReport,
    /// Largest gap to the closed-form solution of the power ODE.
    pub closed_form_error: f64,
    pub passed: bool,
}

/// `M = (gamma / (alpha (1 - gamma)))^(gamma / (1 - gamma))`.
pub fn bihari_lasalle_constant(alpha: f64, gamma: f64) -> f64 {
    (gamma / (alpha * (1.0 - gamma))).powf(gamma / (1.0 - gamma))
}

/// Exact solution of `u' = -alpha u^(1/gamma)`, `u(0) = u0`.
pub fn bihari_lasalle_solution(alpha: f64, gamma: f64, u0: f64, t: f64) -> f64 {
    if u0 == 0.0 {
        return 0.0;
    }
    let q = (1.0 - gamma) / gamma;
    (u0.powf(-q) + q * alpha * t).powf(-1.0 / q)
}

/// Integrates both scalar comparison ODEs tightly and checks their bounds
/// at 200 geometrically spaced times in `[t_end 1e-4, t_end]`.
pub fn verify_comparison_lemmas(alpha: f64, gamma: f64, u0: f64, t_end: f64) -> Result<ComparisonReport> {
    if !(alpha > 0.0 && gamma > 0.0 && gamma < 1.0 && u0 >= 0.0 && t_end > 0.0)
        || !(alpha.is_finite() && u0.is_finite() && t_end.is_finite())
    {
        return Err(Error::usage(
            "need alpha > 0, gamma in (0, 1), u0 >= 0 and t_end > 0",
        ));
    }
    let count = 200;
    let first = t_end * 1e-4;
    let q = (t_end / first).ln() / (count - 1) as f64;
    let mut times: Vec<f64> = (0..count).map(|j| first * (q * j as f64).exp()).collect();
    times[count - 1] = t_end;

    let solve = |power: bool| -> Result<Vec<f64>> {
        let mut f = |_t: f64, u: &[f64]| {
            let v = u[0].max(0.0);
            vec![-alpha * if power { v.powf(1.0 / gamma) } else { v }]
        };
        let mut solver = Dopri5::new(1e-12, 1e-16);
        let mut u = vec![u0];
        let mut t = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t1 in &times {
            solver
                .advance(&mut f, t, t1, &mut u)
                .map_err(|c| Error::Numeric(format!("scalar ODE step collapsed at t = {}", c.t)))?;
            t = t1;
            out.push(u[0]);
        }
        Ok(out)
    };
    let linear = solve(false)?;
    let power = solve(true)?;
    let tol = COMPARISON_TOL * u0.max(1.0);
    let m = bihari_lasalle_constant(alpha, gamma);
    let p = gamma / (1.0 - gamma);

    let gronwall_exact: Vec<f64> = times.iter().map(|t| (-alpha * t).exp() * u0).collect();
    let gronwall = InequalityReport::from_slacks(
        "Gronwall bound",
        gronwall_exact.iter().zip(&linear).map(|(b, u)| b - u),
        tol,
        0,
    );
    let gronwall_error = gronwall_exact
        .iter()
        .zip(&linear)
        .map(|(b, u)| (b - u).abs())
        .fold(0.0, f64::max);
    let bihari_lasalle = InequalityReport::from_slacks(
        "Bihari-LaSalle bound",
        times.iter().zip(&power).map(|(t, u)| m * t.powf(-p) - u),
        tol,
        0,
    );
    let closed_form_error = times
        .iter()
        .zip(&power)
        .map(|(t, u)| (bihari_lasalle_solution(alpha, gamma, u0, *t) - u).abs())
        .fold(0.0, f64::max);
    let passed = gronwall.passed
        && bihari_lasalle.passed
        && gronwall_error <= tol
        && closed_form_error <= tol;
    Ok(ComparisonReport {
        alpha,
        gamma,
        u0,
        gronwall,
        gronwall_error,
        bihari_lasalle,
        closed_form_error,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fitted(o: FitOutcome) -> RateFit {
        match o {
            FitOutcome::Fitted(f) => f,
            FitOutcome::Converged => panic!("converged"),
        }
    }

    #[test]
    fn exact_exponential_recovered() {
        let s: Vec<(f64, f64)> = (0..50)
            .map(|k| {
                let t = k as f64 * 0.1;
                (t, 2.0 * (-3.0 * t).exp())
            })
            .collect();
        let f = fitted(fit_series(&s, Model::Exponential, Some([0.0, 10.0])).unwrap());
        assert!((f.m - 2.0).abs() < 1e-10 && (f.rate - 3.0).abs() < 1e-10);
        assert_eq!(f.n_points, 50);
        assert_eq!(select_model_series(&s, Some([0.1, 10.0])).unwrap().chosen, Model::Exponential);
    }

    #[test]
    fn exact_power_law_recovered() {
        let s: Vec<(f64, f64)> = (0..60)
            .map(|k| {
                let t = 100f64.powf(k as f64 / 59.0);
                (t, 5.0 * t.powf(-1.5))
            })
            .collect();
        let f = fitted(fit_series(&s, Model::Powerlaw, Some([1.0, 100.0])).unwrap());
        assert!((f.m - 5.0).abs() < 1e-10 && (f.rate - 1.5).abs() < 1e-10);
        assert_eq!(select_model_series(&s, None).unwrap().chosen, Model::Powerlaw);
    }

    #[test]
    fn fit_errors_and_convergence() {
        let few: Vec<(f64, f64)> = (1..5).map(|k| (k as f64, 1.0 / k as f64)).collect();
        assert!(matches!(fit_series(&few, Model::Powerlaw, None), Err(Error::Fit(_))));
        let zeros: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 0.0)).collect();
        assert_eq!(fit_series(&zeros, Model::Exponential, None).unwrap(), FitOutcome::Converged);
        let flat: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 1.0)).collect();
        assert!(fit_series(&flat, Model::Exponential, None).is_err());
        assert!(fit_series(&flat, Model::Powerlaw, Some([0.0, 5.0])).is_err());
    }

    #[test]
    fn hoelder_constant_matches_scalar_surrogate() {
        // u' = -u^2: gamma 1/2, alpha 1, M = 1.
        assert!((bihari_lasalle_constant(1.0, 0.5) - 1.0).abs() < 1e-15);
        // kappa = 1, lambda* = 1 gives alpha = 1, M0 = sqrt(M) = 1.
        assert!((hoelder_rate_constant(1.0, 0.5, 1.0) - 1.0).abs() < 1e-15);
        let k: f64 = 2.3;
        let g: f64 = 0.4;
        let l = 0.7;
        let a = l / k.powf(2.0 / g);
        let direct = bihari_lasalle_constant(a, g).sqrt();
        assert!((hoelder_rate_constant(k, g, l) / direct - 1.0).abs() < 1e-12);
        assert_eq!(hoelder_rate_exponent(0.5), 0.5);
    }

    #[test]
    fn comparison_examples() {
        let r = verify_comparison_lemmas(1.0, 0.5, 1.0, 100.0).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.closed_form_error < 1e-9);
        let r = verify_comparison_lemmas(2.0, 0.3, 3.0, 10.0).unwrap();
        assert!(r.gronwall_error < 3e-9, "{r:?}");
        let r = verify_comparison_lemmas(2.0, 0.3, 0.0, 10.0).unwrap();
        assert!(r.passed);
        assert_eq!(r.closed_form_error, 0.0);
        assert!(verify_comparison_lemmas(2.0, 1.0, 1.0, 10.0).is_err());
    }
}
