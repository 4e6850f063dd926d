//! Descriptions of fixed-point sets and distance queries `d(x, Fix T)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::Operator;
use crate::point::{self, Point};
use crate::sets::{orthogonal_remainder, PrimitiveSet, SetSpec, RANK_TOL};

pub const DEFAULT_DYKSTRA_TOL: f64 = 1e-12;
pub const DEFAULT_DYKSTRA_MAX_ITER: usize = 100_000;

/// Nearest point found for a distance query.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceResult {
    pub distance: f64,
    pub witness: Point,
    /// The witness lies in the target set up to this tolerance.
    pub certified_tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FixSetOracle {
    ExactSet(PrimitiveSet),
    Intersection(Intersection),
    SinglePoint(Point),
}

/// A nonempty intersection of primitive sets. When every member is affine
/// the nearest point is found by an exact linear solve; otherwise Dykstra's
/// algorithm is used.
#[derive(Clone, Debug, PartialEq)]
pub struct Intersection {
    sets: Vec<PrimitiveSet>,
    tol: f64,
    max_iter: usize,
    affine: Option<AffineConstraints>,
}

/// `{x : W x = beta}` with orthonormal rows `W`.
#[derive(Clone, Debug, PartialEq)]
struct AffineConstraints {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl AffineConstraints {
    fn from_sets(sets: &[PrimitiveSet]) -> Result<Option<Self>> {
        let mut raw = Vec::new();
        for s in sets {
            match s.affine_constraints() {
                Some(c) => raw.extend(c),
                None => return Ok(None),
            }
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for (a, b) in raw {
            let a_norm = point::norm(&a);
            let (a, b): (Vec<f64>, f64) = (a.iter().map(|v| v / a_norm).collect(), b / a_norm);
            // Reduce (a, b) against the rows collected so far.
            let mut r = a.clone();
            let mut beta = b;
            for _ in 0..2 {
                for (w, wb) in rows.iter().zip(&rhs) {
                    let c = point::dot(w, &r);
                    for (ri, wi) in r.iter_mut().zip(w) {
                        *ri -= c * wi;
                    }
                    beta -= c * wb;
                }
            }
            match orthogonal_remainder(&a, &rows, RANK_TOL) {
                Some(_) => {
                    let rn = point::norm(&r);
                    rows.push(r.iter().map(|v| v / rn).collect());
                    rhs.push(beta / rn);
                }
                None => {
                    if beta.abs() > 1e-10 * (1.0 + b.abs()) {
                        return Err(Error::construction(
                            "affine constraints are inconsistent: intersection is empty",
                        ));
                    }
                }
            }
        }
        Ok(Some(Self { rows, rhs }))
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for (w, b) in self.rows.iter().zip(&self.rhs) {
            let c = point::dot(w, &y) - b;
            for (yi, wi) in y.iter_mut().zip(w) {
                *yi -= c * wi;
            }
        }
        y
    }
}

impl Intersection {
    /// Builds the oracle and checks feasibility by running it from the origin.
    pub fn new(sets: Vec<PrimitiveSet>, tol: f64, max_iter: usize) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::construction("intersection of an empty family"));
        }
        if !(tol.is_finite() && tol > 0.0) || max_iter == 0 {
            return Err(Error::construction("Dykstra tolerance and iteration cap must be positive"));
        }
        let n = sets[0].dim();
        if sets.iter().any(|s| s.dim() != n) {
            return Err(Error::construction("intersection members differ in dimension"));
        }
        let affine = AffineConstraints::from_sets(&sets)?;
        let oracle = Self {
            sets,
            tol,
            max_iter,
            affine,
        };
        match oracle.nearest(&Point::zeros(n)) {
            Ok(r) if r.certified_tol < tol => Ok(oracle),
            Ok(r) => Err(Error::construction(format!(
                "intersection appears empty: violation {:e} from the origin",
                r.certified_tol
            ))),
            Err(e) => Err(Error::construction(format!("intersection appears empty: {e}"))),
        }
    }

    pub fn sets(&self) -> &[PrimitiveSet] {
        &self.sets
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter
    }

    fn nearest(&self, x: &Point) -> Result<DistanceResult> {
        match &self.affine {
            Some(a) => {
                let w = a.project(x.coords());
                let violation = self
                    .sets
                    .iter()
                    .map(|s| point::dist(&w, &s.project_slice(&w)))
                    .fold(0.0, f64::max);
                Ok(DistanceResult {
                    distance: point::dist(x.coords(), &w),
                    witness: Point::from_vec_unchecked(w),
                    certified_tol: violation,
                })
            }
            None => dykstra_project(&self.sets, x, self.tol, self.max_iter),
        }
    }
}

/// Projection onto `∩ sets` by Dykstra's algorithm. Stops once the witness
/// moves less than `tol` over a full cycle and every set is violated by less
/// than `tol`.
pub fn dykstra_project(
    sets: &[PrimitiveSet],
    x: &Point,
    tol: f64,
    max_iter: usize,
) -> Result<DistanceResult> {
    if sets.is_empty() {
        return Err(Error::usage("Dykstra needs at least one set"));
    }
    if !(tol > 0.0) {
        return Err(Error::usage("Dykstra tolerance must be positive"));
    }
    for s in sets {
        x.check_dim(s.dim(), "dykstra_project")?;
    }
    let n = x.dim();
    let mut y = x.coords().to_vec();
    let mut increments = vec![vec![0.0; n]; sets.len()];
    let mut violation = f64::INFINITY;
    for _ in 0..max_iter {
        let start = y.clone();
        for (set, p) in sets.iter().zip(increments.iter_mut()) {
            let shifted: Vec<f64> = y.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
            let next = set.project_slice(&shifted);
            for ((pi, si), ni) in p.iter_mut().zip(&shifted).zip(&next) {
                *pi = si - ni;
            }
            y = next;
        }
        let movement = point::dist(&start, &y);
        violation = sets
            .iter()
            .map(|s| point::dist(&y, &s.project_slice(&y)))
            .fold(0.0, f64::max);
        if movement < tol && violation < tol {
            return Ok(DistanceResult {
                distance: point::dist(x.coords(), &y),
                witness: Point::from_vec_unchecked(y),
                certified_tol: violation,
            });
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        best: Point::from_vec_unchecked(y),
        certified_tol: violation,
    })
}

impl FixSetOracle {
    pub fn intersection(sets: Vec<PrimitiveSet>) -> Result<Self> {
        Ok(FixSetOracle::Intersection(Intersection::new(
            sets,
            DEFAULT_DYKSTRA_TOL,
            DEFAULT_DYKSTRA_MAX_ITER,
        )?))
    }

    pub fn dim(&self) -> usize {
        match self {
            FixSetOracle::ExactSet(s) => s.dim(),
            FixSetOracle::Intersection(i) => i.sets[0].dim(),
            FixSetOracle::SinglePoint(p) => p.dim(),
        }
    }

    pub fn distance(&self, x: &Point) -> Result<DistanceResult> {
        distance_to_fix(self, x)
    }

    pub fn spec(&self) -> OracleSpec {
        match self {
            FixSetOracle::ExactSet(s) => OracleSpec::Exact { set: s.spec() },
            FixSetOracle::Intersection(i) => OracleSpec::Intersection {
                sets: i.sets.iter().map(PrimitiveSet::spec).collect(),
                tol: Some(i.tol),
                max_iter: Some(i.max_iter),
            },
            FixSetOracle::SinglePoint(p) => OracleSpec::Point { p: p.clone() },
        }
    }
}

/// `|x - T(x)|`.
pub fn residual(op: &Operator, x: &Point) -> Result<f64> {
    x.check_dim(op.dim(), "residual")?;
    Ok(op.residual_slice(x.coords()))
}

/// `d(x, Fix T)` together with the nearest point found.
pub fn distance_to_fix(oracle: &FixSetOracle, x: &Point) -> Result<DistanceResult> {
    x.check_dim(oracle.dim(), "distance_to_fix")?;
    match oracle {
        FixSetOracle::ExactSet(s) => {
            let w = s.project_slice(x.coords());
            Ok(DistanceResult {
                distance: point::dist(x.coords(), &w),
                witness: Point::from_vec_unchecked(w),
                certified_tol: 0.0,
            })
        }
        FixSetOracle::SinglePoint(p) => Ok(DistanceResult {
            distance: x.dist(p),
            witness: p.clone(),
            certified_tol: 0.0,
        }),
        FixSetOracle::Intersection(i) => i.nearest(x),
    }
}

/// Dykstra parameters supplied on the command line.
#[derive(Clone, Copy, Debug, Default)]
pub struct DykstraOverrides {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    Exact {
        set: SetSpec,
    },
    Intersection {
        sets: Vec<SetSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_iter: Option<usize>,
    },
    Point {
        p: Point,
    },
}

impl OracleSpec {
    pub fn build(&self) -> Result<FixSetOracle> {
        self.build_at("fix_oracle", None)
    }

    pub fn build_at(&self, path: &str, overrides: Option<DykstraOverrides>) -> Result<FixSetOracle> {
        let ov = overrides.unwrap_or_default();
        match self {
            OracleSpec::Exact { set } => Ok(FixSetOracle::ExactSet(
                set.clone()
                    .try_into()
                    .map_err(|e: Error| Error::config(format!("{path}.set"), e.to_string()))?,
            )),
            OracleSpec::Point { p } => Ok(FixSetOracle::SinglePoint(p.clone())),
            OracleSpec::Intersection {
                sets,
                tol,
                max_iter,
            } => {
                let built = sets
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        PrimitiveSet::try_from(s.clone()).map_err(|e| {
                            Error::config(format!("{path}.sets[{i}]"), e.to_string())
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let tol = ov.tol.or(*tol).unwrap_or(DEFAULT_DYKSTRA_TOL);
                let max_iter = ov.max_iter.or(*max_iter).unwrap_or(DEFAULT_DYKSTRA_MAX_ITER);
                Intersection::new(built, tol, max_iter)
                    .map(FixSetOracle::Intersection)
                    .map_err(|e| Error::config(format!("{path}.sets"), e.to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn orthant() -> Vec<PrimitiveSet> {
        vec![
            PrimitiveSet::half_space(pt(&[1.0, 0.0]), 0.0).unwrap(),
            PrimitiveSet::half_space(pt(&[0.0, 1.0]), 0.0).unwrap(),
        ]
    }

    fn axes() -> Vec<PrimitiveSet> {
        vec![
            PrimitiveSet::hyperplane(pt(&[0.0, 1.0]), 0.0).unwrap(),
            PrimitiveSet::hyperplane(pt(&[1.0, 0.0]), 0.0).unwrap(),
        ]
    }

    #[test]
    fn residual_examples() {
        let x = pt(&[3.0, 4.0]);
        assert_eq!(residual(&Operator::identity(2), &x).unwrap(), 0.0);
        assert_eq!(residual(&Operator::zero(2), &x).unwrap(), 5.0);
        let p = Operator::projector(axes()[0].clone());
        assert_eq!(residual(&p, &pt(&[1.0, 2.0])).unwrap(), 2.0);
    }

    #[test]
    fn dykstra_orthant() {
        let r = dykstra_project(&orthant(), &pt(&[1.0, 1.0]), 1e-12, 1000).unwrap();
        assert!(r.witness.norm() < 1e-10);
        assert!((r.distance - 2f64.sqrt()).abs() < 1e-10);
        let r = dykstra_project(&orthant(), &pt(&[-1.0, -1.0]), 1e-12, 1000).unwrap();
        assert_eq!(r.witness, pt(&[-1.0, -1.0]));
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn dykstra_axes_meet_at_origin() {
        let r = dykstra_project(&axes(), &pt(&[3.0, 4.0]), 1e-12, 1000).unwrap();
        assert!(r.witness.norm() < 1e-12);
        assert!((r.distance - 5.0).abs() < 1e-12);
    }

    #[test]
    fn dykstra_reports_best_iterate_on_exhaustion() {
        // Tangent ball and line: sublinear, cannot reach 1e-12 in 5 cycles.
        let sets = vec![
            PrimitiveSet::ball(pt(&[0.0, 1.0]), 1.0).unwrap(),
            PrimitiveSet::hyperplane(pt(&[0.0, 1.0]), 0.0).unwrap(),
        ];
        match dykstra_project(&sets, &pt(&[1.0, -1.0]), 1e-12, 5) {
            Err(Error::Convergence {
                best, certified_tol, ..
            }) => {
                assert_eq!(best.dim(), 2);
                assert!(certified_tol > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn distance_examples() {
        let ball = FixSetOracle::ExactSet(PrimitiveSet::ball(pt(&[0.0, 0.0]), 1.0).unwrap());
        assert_eq!(ball.distance(&pt(&[2.0, 0.0])).unwrap().distance, 1.0);
        let single = FixSetOracle::SinglePoint(pt(&[1.0, 1.0]));
        assert_eq!(single.distance(&pt(&[1.0, 1.0])).unwrap().distance, 0.0);
        let inter = FixSetOracle::intersection(orthant()).unwrap();
        let d = inter.distance(&pt(&[1.0, 1.0])).unwrap().distance;
        assert!((d - 1.41421356).abs() < 1e-8);
    }

    #[test]
    fn affine_intersections_are_solved_exactly() {
        let oracle = FixSetOracle::intersection(axes()).unwrap();
        let r = oracle.distance(&pt(&[3.0, 4.0])).unwrap();
        assert_eq!(r.witness, pt(&[0.0, 0.0]));
        assert_eq!(r.distance, 5.0);

        let parallel = vec![
            PrimitiveSet::hyperplane(pt(&[1.0, 0.0]), 0.0).unwrap(),
            PrimitiveSet::hyperplane(pt(&[2.0, 0.0]), 2.0).unwrap(),
        ];
        assert!(FixSetOracle::intersection(parallel).is_err());
    }

    #[test]
    fn infeasible_family_rejected() {
        let sets = vec![
            PrimitiveSet::ball(pt(&[0.0, 0.0]), 1.0).unwrap(),
            PrimitiveSet::ball(pt(&[5.0, 0.0]), 1.0).unwrap(),
        ];
        assert!(Intersection::new(sets, 1e-12, 200).is_err());
    }
}
