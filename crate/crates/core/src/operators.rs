//! Self-maps of ℝⁿ: projectors, proximal maps and the combinators
//! (relaxation, convex combination, composition, reflection,
//! Douglas-Rachford, forward-backward) built from them.
//!
//! Operators are immutable trees; evaluation is pure and deterministic, so an
//! `Operator` can be shared freely across threads.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixset::{FixSetOracle, OracleSpec};
use crate::functions::{symmetric_matrix, FunctionSpec, SimpleFunction};
use crate::point::{self, Point};
use crate::sets::{PrimitiveSet, SetSpec};

/// Tolerance on `sum(weights) = 1` for convex combinations.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// What is known about an operator beyond its values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub label: String,
    /// Averagedness constant in (0, 1).
    pub alpha: Option<f64>,
    /// Strong quasi-nonexpansiveness modulus.
    pub rho: Option<f64>,
    /// Nonexpansive by construction.
    pub nonexpansive: bool,
    /// Constituents of a combination or composition, in application order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constituents: Vec<Constituent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constituent {
    pub label: String,
    pub weight: Option<f64>,
    pub rho: Option<f64>,
}

impl OperatorMeta {
    fn plain(label: impl Into<String>, nonexpansive: bool) -> Self {
        Self {
            label: label.into(),
            alpha: None,
            rho: None,
            nonexpansive,
            constituents: Vec::new(),
        }
    }

    /// An α-averaged operator, which is ((1-α)/α)-SQNE.
    fn averaged(label: impl Into<String>, alpha: f64) -> Self {
        debug_assert!(alpha > 0.0 && alpha < 1.0);
        Self {
            label: label.into(),
            alpha: Some(alpha),
            rho: Some((1.0 - alpha) / alpha),
            nonexpansive: true,
            constituents: Vec::new(),
        }
    }
}

type MapFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
enum Node {
    Identity,
    Scale(f64),
    Project(PrimitiveSet),
    Prox {
        f: SimpleFunction,
        step: f64,
    },
    Reflect(PrimitiveSet),
    DouglasRachford {
        first: PrimitiveSet,
        second: PrimitiveSet,
    },
    ForwardBackward {
        g: SimpleFunction,
        q: DMatrix<f64>,
        c: Vec<f64>,
        step: f64,
    },
    Combination {
        ops: Vec<Operator>,
        weights: Vec<f64>,
    },
    Compose(Vec<Operator>),
    Relax {
        op: Box<Operator>,
        lam: f64,
    },
    Custom(Arc<MapFn>),
}

/// An evaluable self-map of ℝⁿ with metadata and an optional description of
/// its fixed-point set.
#[derive(Clone)]
pub struct Operator {
    dim: usize,
    node: Node,
    meta: OperatorMeta,
    fix_oracle: Option<FixSetOracle>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Operator")
            .field("dim", &self.dim)
            .field("meta", &self.meta)
            .finish_non_exhaustive()
    }
}

impl Operator {
    pub fn identity(dim: usize) -> Self {
        Self::new(dim, Node::Identity, OperatorMeta::plain("id", true), None)
    }

    /// `x -> factor * x`. Averaged for `factor` in (-1, 1).
    pub fn scale(dim: usize, factor: f64) -> Result<Self> {
        if dim == 0 || !factor.is_finite() {
            return Err(Error::construction("scale needs positive dimension and finite factor"));
        }
        if factor == 1.0 {
            return Ok(Self::identity(dim));
        }
        let label = format!("scale({factor})");
        let meta = if factor.abs() < 1.0 {
            OperatorMeta::averaged(label, (1.0 - factor) / 2.0)
        } else {
            OperatorMeta::plain(label, factor.abs() <= 1.0)
        };
        let oracle = (factor != 1.0).then(|| FixSetOracle::SinglePoint(Point::zeros(dim)));
        Ok(Self::new(dim, Node::Scale(factor), meta, oracle))
    }

    /// `x -> 0`, the projector onto the origin.
    pub fn zero(dim: usize) -> Self {
        let mut op = Self::scale(dim, 0.0).expect("valid");
        op.meta.label = "zero".into();
        op
    }

    /// Nearest-point projector; firmly nonexpansive with `Fix = set`.
    pub fn projector(set: PrimitiveSet) -> Self {
        let meta = OperatorMeta::averaged(format!("P[{}]", set.label()), 0.5);
        let oracle = FixSetOracle::ExactSet(set.clone());
        Self::new(set.dim(), Node::Project(set), meta, Some(oracle))
    }

    /// Resolvent `prox_{step f}`; firmly nonexpansive.
    pub fn prox(f: SimpleFunction, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::usage(format!("prox step must be positive, got {step}")));
        }
        let oracle = match &f {
            SimpleFunction::Indicator(s) => Some(FixSetOracle::ExactSet(s.clone())),
            _ => None,
        };
        let meta = OperatorMeta::averaged("prox", 0.5);
        Ok(Self::new(f.dim(), Node::Prox { f, step }, meta, oracle))
    }

    /// `2 P_C - Id`. Nonexpansive but not averaged.
    pub fn reflector(set: PrimitiveSet) -> Self {
        let meta = OperatorMeta::plain(format!("R[{}]", set.label()), true);
        let oracle = FixSetOracle::ExactSet(set.clone());
        Self::new(set.dim(), Node::Reflect(set), meta, Some(oracle))
    }

    /// `Id + P_second (2 P_first - Id) - P_first`, i.e.
    /// `(Id + R_second R_first) / 2`.
    pub fn douglas_rachford(first: PrimitiveSet, second: PrimitiveSet) -> Result<Self> {
        if first.dim() != second.dim() {
            return Err(Error::usage(format!(
                "Douglas-Rachford sets differ in dimension ({} vs {})",
                first.dim(),
                second.dim()
            )));
        }
        let meta = OperatorMeta::averaged(
            format!("DR[{},{}]", first.label(), second.label()),
            0.5,
        );
        Ok(Self::new(
            first.dim(),
            Node::DouglasRachford { first, second },
            meta,
            None,
        ))
    }

    /// `x -> prox_{step g}(x - step (Q x - c))` for a smooth part with gradient
    /// `Q x - c`; `lipschitz` must bound the largest eigenvalue of `Q`.
    /// Averaged with `alpha = 2 / (4 - step * lipschitz)`.
    pub fn forward_backward(
        g: SimpleFunction,
        q_rows: Vec<Vec<f64>>,
        c: Point,
        lipschitz: f64,
        step: f64,
    ) -> Result<Self> {
        let n = g.dim();
        c.check_dim(n, "forward-backward offset")?;
        let q = symmetric_matrix(&q_rows, n)?;
        let eig = q.clone().symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if eig.eigenvalues.min() < -1e-12 * scale {
            return Err(Error::construction("gradient matrix is not positive semidefinite"));
        }
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::construction("Lipschitz bound must be positive"));
        }
        let lmax = eig.eigenvalues.max();
        if lipschitz < lmax * (1.0 - 1e-12) {
            return Err(Error::construction(format!(
                "Lipschitz bound {lipschitz} is below the largest eigenvalue {lmax}"
            )));
        }
        if !(step > 0.0 && step * lipschitz < 2.0) {
            return Err(Error::construction(format!(
                "step {step} outside (0, 2/L) = (0, {})",
                2.0 / lipschitz
            )));
        }
        let alpha = 2.0 / (4.0 - step * lipschitz);
        let meta = OperatorMeta::averaged("FB", alpha);
        Ok(Self::new(
            n,
            Node::ForwardBackward {
                g,
                q,
                c: c.into_vec(),
                step,
            },
            meta,
            None,
        ))
    }

    /// `x -> sum_i w_i T_i(x)`. Weights must be positive and already sum to 1.
    pub fn convex_combination(ops: Vec<Operator>, weights: Vec<f64>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::usage("convex combination of an empty list"));
        }
        if ops.len() != weights.len() {
            return Err(Error::usage(format!(
                "{} operators but {} weights",
                ops.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::usage(format!("weights must be strictly positive, got {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::usage(format!("weights sum to {sum}, expected 1")));
        }
        let dim = common_dim(&ops)?;
        let constituents = ops
            .iter()
            .zip(&weights)
            .map(|(op, w)| Constituent {
                label: op.meta.label.clone(),
                weight: Some(*w),
                rho: op.meta.rho,
            })
            .collect();
        let meta = OperatorMeta {
            label: "combination".into(),
            alpha: None,
            rho: None,
            nonexpansive: ops.iter().all(|o| o.meta.nonexpansive),
            constituents,
        };
        Ok(Self::new(dim, Node::Combination { ops, weights }, meta, None))
    }

    /// `T_n ... T_2 T_1`; `ops[0]` is applied first.
    pub fn compose(ops: Vec<Operator>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::usage("composition of an empty list"));
        }
        let dim = common_dim(&ops)?;
        let constituents = ops
            .iter()
            .map(|op| Constituent {
                label: op.meta.label.clone(),
                weight: None,
                rho: op.meta.rho,
            })
            .collect();
        let meta = OperatorMeta {
            label: "composition".into(),
            alpha: None,
            rho: None,
            nonexpansive: ops.iter().all(|o| o.meta.nonexpansive),
            constituents,
        };
        Ok(Self::new(dim, Node::Compose(ops), meta, None))
    }

    /// `x -> (1 - lam) x + lam T(x)`.
    pub fn relax(op: Operator, lam: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lam) {
            return Err(Error::usage(format!("relaxation {lam} outside [0, 1]")));
        }
        let label = format!("relax({lam}, {})", op.meta.label);
        let meta = if lam == 1.0 {
            OperatorMeta {
                label,
                ..op.meta.clone()
            }
        } else if lam > 0.0 && op.meta.nonexpansive {
            OperatorMeta::averaged(label, lam)
        } else {
            OperatorMeta::plain(label, op.meta.nonexpansive || lam == 0.0)
        };
        let oracle = if lam > 0.0 { op.fix_oracle.clone() } else { None };
        let dim = op.dim;
        Ok(Self::new(
            dim,
            Node::Relax {
                op: Box::new(op),
                lam,
            },
            meta,
            oracle,
        ))
    }

    /// Wraps an arbitrary map. The metadata is taken on trust; use the
    /// certificates in [`crate::certify`] to check it.
    pub fn custom<F>(dim: usize, meta: OperatorMeta, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::new(dim, Node::Custom(Arc::new(f)), meta, None)
    }

    fn new(dim: usize, node: Node, meta: OperatorMeta, fix_oracle: Option<FixSetOracle>) -> Self {
        Self {
            dim,
            node,
            meta,
            fix_oracle,
        }
    }

    /// Attaches a description of `Fix T`.
    pub fn with_fix_oracle(mut self, oracle: FixSetOracle) -> Result<Self> {
        if oracle.dim() != self.dim {
            return Err(Error::usage(format!(
                "oracle dimension {} does not match operator dimension {}",
                oracle.dim(),
                self.dim
            )));
        }
        self.fix_oracle = Some(oracle);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.meta.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    pub fn fix_oracle(&self) -> Option<&FixSetOracle> {
        self.fix_oracle.as_ref()
    }

    /// Evaluates `T(x)`.
    pub fn apply(&self, x: &Point) -> Result<Point> {
        x.check_dim(self.dim, "apply")?;
        let y = self.eval(x.coords());
        if !point::all_finite(&y) {
            return Err(Error::Numeric(format!(
                "operator `{}` produced a non-finite value",
                self.meta.label
            )));
        }
        Ok(Point::from_vec_unchecked(y))
    }

    /// Unchecked evaluation on raw coordinates.
    pub(crate) fn eval(&self, x: &[f64]) -> Vec<f64> {
        match &self.node {
            Node::Identity => x.to_vec(),
            Node::Scale(f) => x.iter().map(|v| f * v).collect(),
            Node::Project(s) => s.project_slice(x),
            Node::Prox { f, step } => f.prox_slice(*step, x),
            Node::Reflect(s) => reflect_through(&s.project_slice(x), x),
            Node::DouglasRachford { first, second } => {
                let p1 = first.project_slice(x);
                let p2 = second.project_slice(&reflect_through(&p1, x));
                x.iter()
                    .zip(p2.iter().zip(&p1))
                    .map(|(xi, (a, b))| xi + a - b)
                    .collect()
            }
            Node::ForwardBackward { g, q, c, step } => {
                let qx = q * DVector::from_column_slice(x);
                let y: Vec<f64> = x
                    .iter()
                    .zip(qx.iter().zip(c))
                    .map(|(xi, (qxi, ci))| xi - step * (qxi - ci))
                    .collect();
                g.prox_slice(*step, &y)
            }
            Node::Combination { ops, weights } => {
                let mut out = vec![0.0; x.len()];
                for (op, w) in ops.iter().zip(weights) {
                    for (o, v) in out.iter_mut().zip(op.eval(x)) {
                        *o += w * v;
                    }
                }
                out
            }
            Node::Compose(ops) => {
                let mut y = x.to_vec();
                for op in ops {
                    y = op.eval(&y);
                }
                y
            }
            Node::Relax { op, lam } => point::lerp(x, &op.eval(x), *lam),
            Node::Custom(f) => f(x),
        }
    }

    /// `|x - T(x)|`, unchecked.
    pub(crate) fn residual_slice(&self, x: &[f64]) -> f64 {
        point::dist(x, &self.eval(x))
    }

    /// Constituents of a composition, in application order.
    pub fn composition_factors(&self) -> Option<&[Operator]> {
        match &self.node {
            Node::Compose(ops) => Some(ops),
            _ => None,
        }
    }
}

fn reflect_through(p: &[f64], x: &[f64]) -> Vec<f64> {
    p.iter().zip(x).map(|(pi, xi)| 2.0 * pi - xi).collect()
}

fn common_dim(ops: &[Operator]) -> Result<usize> {
    let dim = ops[0].dim;
    if let Some(op) = ops.iter().find(|o| o.dim != dim) {
        return Err(Error::usage(format!(
            "operator `{}` has dimension {}, expected {dim}",
            op.meta.label, op.dim
        )));
    }
    Ok(dim)
}

// Free-function forms of the constructors.

pub fn project(set: &PrimitiveSet, x: &Point) -> Result<Point> {
    set.project(x)
}

pub fn prox(f: &SimpleFunction, step: f64, x: &Point) -> Result<Point> {
    f.prox(step, x)
}

pub fn reflect(set: PrimitiveSet) -> Operator {
    Operator::reflector(set)
}

pub fn douglas_rachford(first: PrimitiveSet, second: PrimitiveSet) -> Result<Operator> {
    Operator::douglas_rachford(first, second)
}

pub fn forward_backward(
    g: SimpleFunction,
    q_rows: Vec<Vec<f64>>,
    c: Point,
    lipschitz: f64,
    step: f64,
) -> Result<Operator> {
    Operator::forward_backward(g, q_rows, c, lipschitz, step)
}

pub fn convex_combination(ops: Vec<Operator>, weights: Vec<f64>) -> Result<Operator> {
    Operator::convex_combination(ops, weights)
}

pub fn compose(ops: Vec<Operator>) -> Result<Operator> {
    Operator::compose(ops)
}

pub fn relax(op: Operator, lam: f64) -> Result<Operator> {
    Operator::relax(op, lam)
}

pub fn apply(op: &Operator, x: &Point) -> Result<Point> {
    op.apply(x)
}

/// Serialized operator tree, e.g.
/// `{"kind":"compose","children":[{"kind":"project","set":{...}}, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Identity {
        dim: usize,
    },
    Zero {
        dim: usize,
    },
    Scale {
        dim: usize,
        factor: f64,
    },
    Project {
        set: SetSpec,
    },
    Prox {
        function: FunctionSpec,
        step: f64,
    },
    Reflect {
        set: SetSpec,
    },
    DouglasRachford {
        set_l: SetSpec,
        set_j: SetSpec,
    },
    ForwardBackward {
        g: FunctionSpec,
        q: Vec<Vec<f64>>,
        c: Point,
        lipschitz: f64,
        step: f64,
    },
    ConvexCombination {
        children: Vec<OperatorSpec>,
        weights: Vec<f64>,
    },
    Compose {
        children: Vec<OperatorSpec>,
    },
    Relax {
        child: Box<OperatorSpec>,
        lam: f64,
    },
    /// Attaches a fixed-set oracle to the wrapped operator.
    WithOracle {
        child: Box<OperatorSpec>,
        fix_oracle: OracleSpec,
    },
}

impl OperatorSpec {
    pub fn build(&self) -> Result<Operator> {
        self.build_at("operator")
    }

    /// Builds the tree, reporting failures with the dotted field path of the
    /// offending node.
    pub fn build_at(&self, path: &str) -> Result<Operator> {
        let at = |field: &str| format!("{path}.{field}");
        let cfg = |p: String| move |e: Error| Error::config(p, e.to_string());
        match self {
            OperatorSpec::Identity { dim } => {
                if *dim == 0 {
                    return Err(Error::config(at("dim"), "dimension must be positive"));
                }
                Ok(Operator::identity(*dim))
            }
            OperatorSpec::Zero { dim } => {
                if *dim == 0 {
                    return Err(Error::config(at("dim"), "dimension must be positive"));
                }
                Ok(Operator::zero(*dim))
            }
            OperatorSpec::Scale { dim, factor } => {
                Operator::scale(*dim, *factor).map_err(cfg(path.to_string()))
            }
            OperatorSpec::Project { set } => {
                let s = PrimitiveSet::try_from(set.clone()).map_err(cfg(at("set")))?;
                Ok(Operator::projector(s))
            }
            OperatorSpec::Prox { function, step } => {
                let f = SimpleFunction::try_from(function.clone()).map_err(cfg(at("function")))?;
                Operator::prox(f, *step).map_err(cfg(at("step")))
            }
            OperatorSpec::Reflect { set } => {
                let s = PrimitiveSet::try_from(set.clone()).map_err(cfg(at("set")))?;
                Ok(Operator::reflector(s))
            }
            OperatorSpec::DouglasRachford { set_l, set_j } => {
                let l = PrimitiveSet::try_from(set_l.clone()).map_err(cfg(at("set_l")))?;
                let j = PrimitiveSet::try_from(set_j.clone()).map_err(cfg(at("set_j")))?;
                Operator::douglas_rachford(l, j).map_err(cfg(path.to_string()))
            }
            OperatorSpec::ForwardBackward {
                g,
                q,
                c,
                lipschitz,
                step,
            } => {
                let g = SimpleFunction::try_from(g.clone()).map_err(cfg(at("g")))?;
                Operator::forward_backward(g, q.clone(), c.clone(), *lipschitz, *step)
                    .map_err(cfg(path.to_string()))
            }
            OperatorSpec::ConvexCombination { children, weights } => {
                let ops = build_children(children, path)?;
                Operator::convex_combination(ops, weights.clone())
                    .map_err(cfg(at("children.weights")))
            }
            OperatorSpec::Compose { children } => {
                let ops = build_children(children, path)?;
                Operator::compose(ops).map_err(cfg(at("children")))
            }
            OperatorSpec::Relax { child, lam } => {
                let op = child.build_at(&at("child"))?;
                Operator::relax(op, *lam).map_err(cfg(at("lam")))
            }
            OperatorSpec::WithOracle { child, fix_oracle } => {
                let op = child.build_at(&at("child"))?;
                let oracle = fix_oracle.build_at(&at("fix_oracle"), None)?;
                op.with_fix_oracle(oracle).map_err(cfg(at("fix_oracle")))
            }
        }
    }
}

fn build_children(children: &[OperatorSpec], path: &str) -> Result<Vec<Operator>> {
    children
        .iter()
        .enumerate()
        .map(|(i, c)| c.build_at(&format!("{path}.children[{i}]")))
        .collect()
}
