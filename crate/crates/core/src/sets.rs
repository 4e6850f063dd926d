//! Closed convex sets with exact nearest-point projections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{self, Point};

/// Rank tolerance used when orthonormalising affine direction vectors.
pub const RANK_TOL: f64 = 1e-12;

/// A closed convex set from a small family that admits a closed-form
/// projection. Built only through the validating constructors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetSpec", into = "SetSpec")]
pub struct PrimitiveSet {
    kind: SetKind,
}

#[derive(Clone, Debug, PartialEq)]
enum SetKind {
    HalfSpace {
        a: Vec<f64>,
        b: f64,
        a_norm_sq: f64,
    },
    Hyperplane {
        a: Vec<f64>,
        b: f64,
        a_norm_sq: f64,
    },
    Affine {
        directions: Vec<Vec<f64>>,
        offset: Vec<f64>,
        /// Orthonormal basis of span(directions).
        basis: Vec<Vec<f64>>,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

/// Serialized description of a [`PrimitiveSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Halfspace { a: Point, b: f64 },
    Hyperplane { a: Point, b: f64 },
    Affine { directions: Vec<Point>, offset: Point },
    Box { lower: Point, upper: Point },
    Ball { center: Point, radius: f64 },
}

impl TryFrom<SetSpec> for PrimitiveSet {
    type Error = Error;

    fn try_from(spec: SetSpec) -> Result<Self> {
        match spec {
            SetSpec::Halfspace { a, b } => PrimitiveSet::half_space(a, b),
            SetSpec::Hyperplane { a, b } => PrimitiveSet::hyperplane(a, b),
            SetSpec::Affine { directions, offset } => PrimitiveSet::affine(directions, offset),
            SetSpec::Box { lower, upper } => PrimitiveSet::boxed(lower, upper),
            SetSpec::Ball { center, radius } => PrimitiveSet::ball(center, radius),
        }
    }
}

impl From<PrimitiveSet> for SetSpec {
    fn from(set: PrimitiveSet) -> Self {
        let p = Point::from_vec_unchecked;
        match set.kind {
            SetKind::HalfSpace { a, b, .. } => SetSpec::Halfspace { a: p(a), b },
            SetKind::Hyperplane { a, b, .. } => SetSpec::Hyperplane { a: p(a), b },
            SetKind::Affine {
                directions, offset, ..
            } => SetSpec::Affine {
                directions: directions.into_iter().map(p).collect(),
                offset: p(offset),
            },
            SetKind::Box { lower, upper } => SetSpec::Box {
                lower: p(lower),
                upper: p(upper),
            },
            SetKind::Ball { center, radius } => SetSpec::Ball {
                center: p(center),
                radius,
            },
        }
    }
}

impl PrimitiveSet {
    /// `{x : <a, x> <= b}`.
    pub fn half_space(a: Point, b: f64) -> Result<Self> {
        let a_norm_sq = nonzero_normal(&a, b)?;
        Ok(Self {
            kind: SetKind::HalfSpace {
                a: a.into_vec(),
                b,
                a_norm_sq,
            },
        })
    }

    /// `{x : <a, x> = b}`.
    pub fn hyperplane(a: Point, b: f64) -> Result<Self> {
        let a_norm_sq = nonzero_normal(&a, b)?;
        Ok(Self {
            kind: SetKind::Hyperplane {
                a: a.into_vec(),
                b,
                a_norm_sq,
            },
        })
    }

    /// `offset + span(directions)`. An empty direction list gives the single
    /// point `offset`.
    pub fn affine(directions: Vec<Point>, offset: Point) -> Result<Self> {
        let n = offset.dim();
        for (i, d) in directions.iter().enumerate() {
            if d.dim() != n {
                return Err(Error::construction(format!(
                    "affine direction {i} has dimension {}, offset has {n}",
                    d.dim()
                )));
            }
        }
        let directions: Vec<Vec<f64>> = directions.into_iter().map(Point::into_vec).collect();
        let basis = orthonormalize(&directions, RANK_TOL);
        Ok(Self {
            kind: SetKind::Affine {
                directions,
                offset: offset.into_vec(),
                basis,
            },
        })
    }

    /// The single point `p`, as a zero-dimensional affine subspace.
    pub fn singleton(p: Point) -> Self {
        Self::affine(Vec::new(), p).expect("no directions to mismatch")
    }

    /// Line through the origin spanned by `direction`.
    pub fn line(direction: Point) -> Result<Self> {
        let n = direction.dim();
        let set = Self::affine(vec![direction], Point::zeros(n))?;
        if set.affine_rank() == Some(0) {
            return Err(Error::construction("line direction is zero"));
        }
        Ok(set)
    }

    /// Axis-aligned box `[lower, upper]`.
    pub fn boxed(lower: Point, upper: Point) -> Result<Self> {
        if lower.dim() != upper.dim() {
            return Err(Error::construction("box bounds differ in dimension"));
        }
        if let Some(i) = (0..lower.dim()).find(|&i| lower[i] > upper[i]) {
            return Err(Error::construction(format!(
                "box lower bound exceeds upper bound in coordinate {i}"
            )));
        }
        Ok(Self {
            kind: SetKind::Box {
                lower: lower.into_vec(),
                upper: upper.into_vec(),
            },
        })
    }

    /// Closed ball with positive radius.
    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::construction(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            kind: SetKind::Ball {
                center: center.into_vec(),
                radius,
            },
        })
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SetKind::HalfSpace { a, .. } | SetKind::Hyperplane { a, .. } => a.len(),
            SetKind::Affine { offset, .. } => offset.len(),
            SetKind::Box { lower, .. } => lower.len(),
            SetKind::Ball { center, .. } => center.len(),
        }
    }

    pub fn spec(&self) -> SetSpec {
        self.clone().into()
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            SetKind::HalfSpace { .. } => "halfspace",
            SetKind::Hyperplane { .. } => "hyperplane",
            SetKind::Affine { .. } => "affine",
            SetKind::Box { .. } => "box",
            SetKind::Ball { .. } => "ball",
        }
    }

    fn affine_rank(&self) -> Option<usize> {
        match &self.kind {
            SetKind::Affine { basis, .. } => Some(basis.len()),
            _ => None,
        }
    }

    /// Nearest point of the set to `x`.
    pub fn project(&self, x: &Point) -> Result<Point> {
        x.check_dim(self.dim(), "project")?;
        Ok(Point::from_vec_unchecked(self.project_slice(x.coords())))
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: &Point) -> Result<f64> {
        x.check_dim(self.dim(), "distance")?;
        Ok(point::dist(x.coords(), &self.project_slice(x.coords())))
    }

    pub(crate) fn project_slice(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            SetKind::HalfSpace { a, b, a_norm_sq } => {
                let excess = point::dot(a, x) - b;
                if excess <= 0.0 {
                    x.to_vec()
                } else {
                    let s = excess / a_norm_sq;
                    x.iter().zip(a).map(|(xi, ai)| xi - s * ai).collect()
                }
            }
            SetKind::Hyperplane { a, b, a_norm_sq } => {
                let s = (point::dot(a, x) - b) / a_norm_sq;
                x.iter().zip(a).map(|(xi, ai)| xi - s * ai).collect()
            }
            SetKind::Affine { offset, basis, .. } => {
                let shifted = point::sub(x, offset);
                let mut out = offset.clone();
                for q in basis {
                    let c = point::dot(q, &shifted);
                    for (o, qi) in out.iter_mut().zip(q) {
                        *o += c * qi;
                    }
                }
                out
            }
            SetKind::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(xi, (lo, hi))| xi.clamp(*lo, *hi))
                .collect(),
            SetKind::Ball { center, radius } => {
                let d = point::dist(x, center);
                if d <= *radius {
                    x.to_vec()
                } else {
                    let s = radius / d;
                    x.iter()
                        .zip(center)
                        .map(|(xi, ci)| ci + s * (xi - ci))
                        .collect()
                }
            }
        }
    }

    /// Equality-constraint form `{x : <w, x> = beta}` for affine sets
    /// (hyperplanes and affine subspaces); `None` for the other variants.
    pub(crate) fn affine_constraints(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        match &self.kind {
            SetKind::Hyperplane { a, b, .. } => Some(vec![(a.clone(), *b)]),
            SetKind::Affine { offset, basis, .. } => {
                let n = offset.len();
                let mut spanning = basis.clone();
                let mut rows = Vec::new();
                for i in 0..n {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    if let Some(w) = orthogonal_remainder(&e, &spanning, RANK_TOL) {
                        let beta = point::dot(&w, offset);
                        spanning.push(w.clone());
                        rows.push((w, beta));
                    }
                }
                Some(rows)
            }
            _ => None,
        }
    }
}

fn nonzero_normal(a: &Point, b: f64) -> Result<f64> {
    if !b.is_finite() {
        return Err(Error::construction("offset b is not finite"));
    }
    let a_norm_sq = point::norm_sq(a.coords());
    if a_norm_sq == 0.0 {
        return Err(Error::construction("normal vector is zero"));
    }
    Ok(a_norm_sq)
}

/// Component of `v` orthogonal to the orthonormal family `basis`, normalised;
/// `None` if it is below `tol` relative to `|v|`. Two Gram-Schmidt passes.
pub(crate) fn orthogonal_remainder(v: &[f64], basis: &[Vec<f64>], tol: f64) -> Option<Vec<f64>> {
    let scale = point::norm(v);
    if scale == 0.0 {
        return None;
    }
    let mut r = v.to_vec();
    for _ in 0..2 {
        for q in basis {
            let c = point::dot(q, &r);
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= c * qi;
            }
        }
    }
    let rn = point::norm(&r);
    if rn <= tol * scale {
        return None;
    }
    r.iter_mut().for_each(|ri| *ri /= rn);
    Some(r)
}

fn orthonormalize(vectors: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        if let Some(q) = orthogonal_remainder(v, &basis, tol) {
            basis.push(q);
        }
    }
    basis
}
