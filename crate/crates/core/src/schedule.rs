//! Relaxation functions `λ: [0, ∞) → [0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleSpec", into = "ScheduleSpec")]
pub struct LambdaSchedule {
    kind: ScheduleKind,
    inf_value: f64,
    inf_product: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum ScheduleKind {
    Constant(f64),
    /// `values[i]` on `[breakpoints[i-1], breakpoints[i])`, right-continuous.
    Piecewise {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// `clamp(a + b sin(omega t), 0, 1)`.
    Sine { a: f64, b: f64, omega: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { value: f64 },
    Piecewise { breakpoints: Vec<f64>, values: Vec<f64> },
    Sine { a: f64, b: f64, omega: f64 },
}

fn check_unit(v: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::construction(format!("{what} {v} outside [0, 1]")));
    }
    Ok(())
}

/// `inf v(1 - v)` over `v ∈ [lo, hi]`; the map is concave so an endpoint wins.
fn inf_product_on(lo: f64, hi: f64) -> f64 {
    (lo * (1.0 - lo)).min(hi * (1.0 - hi))
}

impl LambdaSchedule {
    pub fn constant(value: f64) -> Result<Self> {
        check_unit(value, "relaxation")?;
        Ok(Self {
            kind: ScheduleKind::Constant(value),
            inf_value: value,
            inf_product: value * (1.0 - value),
        })
    }

    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::construction(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        if breakpoints.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::construction("breakpoints must be positive and finite"));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::construction("breakpoints must be strictly increasing"));
        }
        for v in &values {
            check_unit(*v, "relaxation")?;
        }
        let inf_value = values.iter().copied().fold(f64::INFINITY, f64::min);
        let inf_product = values
            .iter()
            .map(|v| v * (1.0 - v))
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            kind: ScheduleKind::Piecewise {
                breakpoints,
                values,
            },
            inf_value,
            inf_product,
        })
    }

    /// Schedule taking `values[k]` on `[k, k + 1)`; the last value persists.
    pub fn from_sequence(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::construction("empty relaxation sequence"));
        }
        let breakpoints = (1..values.len()).map(|k| k as f64).collect();
        Self::piecewise(breakpoints, values.to_vec())
    }

    pub fn sine(a: f64, b: f64, omega: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && omega.is_finite()) {
            return Err(Error::construction("sine schedule parameters must be finite"));
        }
        let amp = if omega == 0.0 { 0.0 } else { b.abs() };
        let lo = (a - amp).clamp(0.0, 1.0);
        let hi = (a + amp).clamp(0.0, 1.0);
        let (lo, hi) = if omega == 0.0 {
            let v = a.clamp(0.0, 1.0);
            (v, v)
        } else {
            (lo, hi)
        };
        Ok(Self {
            kind: ScheduleKind::Sine { a, b, omega },
            inf_value: lo,
            inf_product: inf_product_on(lo, hi),
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        match &self.kind {
            ScheduleKind::Constant(v) => *v,
            ScheduleKind::Piecewise {
                breakpoints,
                values,
            } => values[breakpoints.partition_point(|b| *b <= t)],
            ScheduleKind::Sine { a, b, omega } => (a + b * (omega * t).sin()).clamp(0.0, 1.0),
        }
    }

    /// `λ* = inf_t λ(t)`.
    pub fn inf_value(&self) -> f64 {
        self.inf_value
    }

    /// `inf_t λ(t)(1 - λ(t))`.
    pub fn inf_product(&self) -> f64 {
        self.inf_product
    }

    /// Discontinuities of λ inside `(t0, t1)`, ascending.
    pub fn breakpoints_in(&self, t0: f64, t1: f64) -> Vec<f64> {
        match &self.kind {
            ScheduleKind::Piecewise { breakpoints, .. } => breakpoints
                .iter()
                .copied()
                .filter(|b| *b > t0 && *b < t1)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// True for constant and piecewise-constant schedules.
    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self.kind, ScheduleKind::Sine { omega, .. } if omega != 0.0)
    }

    /// True when λ is constant on every `[k, k + 1)`.
    pub fn is_unit_piecewise(&self) -> bool {
        match &self.kind {
            ScheduleKind::Constant(_) => true,
            ScheduleKind::Piecewise { breakpoints, .. } => {
                breakpoints.iter().all(|b| b.fract() == 0.0)
            }
            ScheduleKind::Sine { omega, .. } => *omega == 0.0,
        }
    }
}

impl TryFrom<ScheduleSpec> for LambdaSchedule {
    type Error = Error;

    fn try_from(spec: ScheduleSpec) -> Result<Self> {
        match spec {
            ScheduleSpec::Constant { value } => Self::constant(value),
            ScheduleSpec::Piecewise {
                breakpoints,
                values,
            } => Self::piecewise(breakpoints, values),
            ScheduleSpec::Sine { a, b, omega } => Self::sine(a, b, omega),
        }
    }
}

impl From<LambdaSchedule> for ScheduleSpec {
    fn from(s: LambdaSchedule) -> Self {
        match s.kind {
            ScheduleKind::Constant(value) => ScheduleSpec::Constant { value },
            ScheduleKind::Piecewise {
                breakpoints,
                values,
            } => ScheduleSpec::Piecewise {
                breakpoints,
                values,
            },
            ScheduleKind::Sine { a, b, omega } => ScheduleSpec::Sine { a, b, omega },
        }
    }
}
