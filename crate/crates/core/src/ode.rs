//! Explicit one-step integrators for `y' = f(t, y)`.

use serde::{Deserialize, Serialize};

/// Smallest admissible adaptive step, relative to `max(1, |t|)`.
pub const MIN_STEP: f64 = 1e-14;

pub fn euler_step<F>(f: &mut F, t: f64, y: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let k = f(t, y);
    y.iter().zip(&k).map(|(yi, ki)| yi + h * ki).collect()
}

pub fn rk4_step<F>(f: &mut F, t: f64, y: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = f(t + h, &axpy(y, h, &k3));
    (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn axpy(y: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect()
}

fn combine(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        if *c != 0.0 {
            for (o, ki) in out.iter_mut().zip(k.iter()) {
                *o += h * c * ki;
            }
        }
    }
    out
}

/// Step-control counters of an adaptive run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveStats {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub accepted: usize,
    pub rejected: usize,
    /// Largest accepted local error estimate, in units of the tolerance.
    pub max_error_ratio: f64,
    pub min_step: f64,
    pub max_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCollapse {
    pub t: f64,
    pub h: f64,
}

/// Dormand-Prince 5(4) with standard error-per-step control.
#[derive(Clone, Debug)]
pub struct Dopri5 {
    rel_tol: f64,
    abs_tol: f64,
    next_h: Option<f64>,
    stats: AdaptiveStats,
}

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
/// Difference between the 5th- and embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl Dopri5 {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            next_h: None,
            stats: AdaptiveStats {
                rel_tol,
                abs_tol,
                min_step: f64::INFINITY,
                ..Default::default()
            },
        }
    }

    pub fn stats(&self) -> &AdaptiveStats {
        &self.stats
    }

    fn error_norm(&self, y: &[f64], y_new: &[f64], err: &[f64]) -> f64 {
        let n = y.len() as f64;
        let s: f64 = (0..y.len())
            .map(|i| {
                let sc = self.abs_tol + self.rel_tol * y[i].abs().max(y_new[i].abs());
                (err[i] / sc).powi(2)
            })
            .sum();
        (s / n).sqrt()
    }

    fn initial_step<F>(&self, f: &mut F, t: f64, y: &[f64], span: f64) -> f64
    where
        F: FnMut(f64, &[f64]) -> Vec<f64>,
    {
        let f0 = f(t, y);
        let sc: Vec<f64> = y.iter().map(|v| self.abs_tol + self.rel_tol * v.abs()).collect();
        let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / y.len() as f64)
            .sqrt();
        let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>()
            / y.len() as f64)
            .sqrt();
        let h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h.min(span)
    }

    /// Advances `y` from `t0` to exactly `t1`.
    pub fn advance<F>(&mut self, f: &mut F, t0: f64, t1: f64, y: &mut Vec<f64>) -> Result<(), StepCollapse>
    where
        F: FnMut(f64, &[f64]) -> Vec<f64>,
    {
        let mut t = t0;
        let mut h = match self.next_h {
            Some(h) => h,
            None => self.initial_step(f, t0, y, t1 - t0),
        };
        let mut k1 = f(t, y);
        while t < t1 {
            let floor = MIN_STEP * t.abs().max(1.0);
            if h < floor {
                return Err(StepCollapse { t, h });
            }
            let last = t + h >= t1 || (t1 - (t + h)) < floor;
            let step = if last { t1 - t } else { h };

            let k2 = f(t + C[0] * step, &combine(y, step, &[(A2[0], &k1)]));
            let k3 = f(
                t + C[1] * step,
                &combine(y, step, &[(A3[0], &k1), (A3[1], &k2)]),
            );
            let k4 = f(
                t + C[2] * step,
                &combine(y, step, &[(A4[0], &k1), (A4[1], &k2), (A4[2], &k3)]),
            );
            let k5 = f(
                t + C[3] * step,
                &combine(
                    y,
                    step,
                    &[(A5[0], &k1), (A5[1], &k2), (A5[2], &k3), (A5[3], &k4)],
                ),
            );
            let k6 = f(
                t + C[4] * step,
                &combine(
                    y,
                    step,
                    &[
                        (A6[0], &k1),
                        (A6[1], &k2),
                        (A6[2], &k3),
                        (A6[3], &k4),
                        (A6[4], &k5),
                    ],
                ),
            );
            let y_new = combine(
                y,
                step,
                &[
                    (B[0], &k1),
                    (B[2], &k3),
                    (B[3], &k4),
                    (B[4], &k5),
                    (B[5], &k6),
                ],
            );
            let t_new = if last { t1 } else { t + step };
            let k7 = f(t_new, &y_new);
            let err: Vec<f64> = (0..y.len())
                .map(|i| {
                    step * (E[0] * k1[i]
                        + E[2] * k3[i]
                        + E[3] * k4[i]
                        + E[4] * k5[i]
                        + E[5] * k6[i]
                        + E[6] * k7[i])
                })
                .collect();
            let ratio = self.error_norm(y, &y_new, &err);
            if !ratio.is_finite() {
                self.stats.rejected += 1;
                h *= 0.2;
                continue;
            }
            if ratio <= 1.0 {
                t = t_new;
                *y = y_new;
                k1 = k7;
                self.stats.accepted += 1;
                self.stats.max_error_ratio = self.stats.max_error_ratio.max(ratio);
                self.stats.min_step = self.stats.min_step.min(step);
                self.stats.max_step = self.stats.max_step.max(step);
                let factor = if ratio == 0.0 {
                    5.0
                } else {
                    (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
                };
                // A clipped final step says nothing about the natural step size.
                h = if last && step < h { h } else { step * factor };
            } else {
                self.stats.rejected += 1;
                h = step * (0.9 * ratio.powf(-0.2)).clamp(0.2, 1.0);
            }
        }
        self.next_h = Some(h);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dopri_exponential_decay() {
        let mut f = |_t: f64, y: &[f64]| vec![-y[0]];
        let mut d = Dopri5::new(1e-10, 1e-14);
        let mut y = vec![1.0];
        d.advance(&mut f, 0.0, 1.0, &mut y).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-9);
        assert!(d.stats().accepted > 0);
    }

    #[test]
    fn dopri_hits_segment_ends_exactly() {
        let mut f = |_t: f64, y: &[f64]| vec![-2.0 * y[0]];
        let mut d = Dopri5::new(1e-10, 1e-14);
        let mut y = vec![3.0];
        let mut t = 0.0;
        for k in 1..=100 {
            let t1 = k as f64 * 0.05;
            d.advance(&mut f, t, t1, &mut y).unwrap();
            t = t1;
        }
        assert!((y[0] - 3.0 * (-10.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let mut f = |_t: f64, y: &[f64]| vec![-y[0]];
        let run = |h: f64, f: &mut dyn FnMut(f64, &[f64]) -> Vec<f64>| {
            let mut g = |t: f64, y: &[f64]| f(t, y);
            let mut y = vec![1.0];
            let n = (1.0 / h).round() as usize;
            for k in 0..n {
                y = rk4_step(&mut g, k as f64 * h, &y, h);
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let e1 = run(0.1, &mut f);
        let e2 = run(0.05, &mut f);
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }
}
