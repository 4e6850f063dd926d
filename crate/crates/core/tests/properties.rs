use proptest::prelude::*;

use regflow::fixset::{distance_to_fix, FixSetOracle};
use regflow::flow::km_iterate;
use regflow::rates::{fit_series, select_model_series, verify_comparison_lemmas, FitOutcome, Model};
use regflow::regularity::{
    check_exponent_comparison, estimate_operator_regularity, identity_error, RegularityMode,
};
use regflow::{LambdaSchedule, Operator, Point, PrimitiveSet, Region};

fn pt(c: &[f64]) -> Point {
    Point::new(c.to_vec()).unwrap()
}

fn coords(dim: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, dim)
}

/// Unit vector from an angle.
fn dir(theta: f64) -> Point {
    pt(&[theta.cos(), theta.sin()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// KM iterates never move away from a common fixed point.
    #[test]
    fn km_is_fejer_monotone(
        c in coords(2, 1.0),
        extra in 0.1f64..2.0,
        theta in 0.0f64..std::f64::consts::TAU,
        lam in 0.05f64..=1.0,
        x0 in coords(2, 20.0),
    ) {
        // both sets contain the origin
        let centre = pt(&c);
        let ball = PrimitiveSet::ball(centre.clone(), centre.norm() + extra).unwrap();
        let half = PrimitiveSet::half_space(dir(theta), 0.0).unwrap();
        let op = Operator::compose(vec![Operator::projector(ball), Operator::projector(half)]).unwrap();
        let sched = LambdaSchedule::constant(lam).unwrap();
        let traj = km_iterate(&op, &pt(&x0), &sched, 40, None).unwrap();
        for w in traj.samples.windows(2) {
            prop_assert!(w[1].x.norm() <= w[0].x.norm() * (1.0 + 1e-12) + 1e-12);
        }
    }

    /// A linear operator's regularity constant does not depend on the radius
    /// of the ball around its fixed point.
    #[test]
    fn linear_kappa_is_scale_invariant(
        theta in 0.2f64..1.4,
        r in 0.01f64..100.0,
        seed in 0u64..1000,
    ) {
        let a = PrimitiveSet::line(pt(&[1.0, 0.0])).unwrap();
        let b = PrimitiveSet::line(dir(theta)).unwrap();
        let op = Operator::compose(vec![Operator::projector(a), Operator::projector(b)]).unwrap();
        let oracle = FixSetOracle::SinglePoint(Point::zeros(2));
        let k1 = estimate_operator_regularity(&op, &oracle, &Region::origin_ball(2, 1.0).unwrap(), 200, RegularityMode::Linear, seed).unwrap().kappa;
        let kr = estimate_operator_regularity(&op, &oracle, &Region::origin_ball(2, r).unwrap(), 200, RegularityMode::Linear, seed).unwrap().kappa;
        prop_assert!((k1 - kr).abs() <= 1e-9 * k1, "{} vs {}", k1, kr);
    }

    /// `b^(theta - gamma) a^gamma >= a^theta` on `[0, b]` when `gamma <= theta`.
    #[test]
    fn exponent_comparison_holds(
        gamma in 0.05f64..=1.0,
        frac in 0.0f64..=1.0,
        b in 0.01f64..100.0,
    ) {
        let theta = gamma + frac * (1.0 - gamma);
        let r = check_exponent_comparison(gamma, theta, b, 200).unwrap();
        prop_assert!(r.passed, "{:?}", r);
    }

    /// Exact exponential data with small multiplicative noise is recovered.
    #[test]
    fn exponential_fit_recovers_rate(
        m in 0.1f64..10.0,
        rate in 0.05f64..2.0,
        noise in prop::collection::vec(-1e-3f64..1e-3, 200),
    ) {
        let series: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, m * (-rate * t).exp() * (1.0 + noise[i]))
            })
            .collect();
        match fit_series(&series, Model::Exponential, None).unwrap() {
            FitOutcome::Fitted(f) => {
                prop_assert!((f.rate - rate).abs() < 1e-3 * (1.0 + rate) + 2e-4, "{} vs {}", f.rate, rate);
            }
            FitOutcome::Converged => prop_assert!(false, "unexpected convergence"),
        }
    }

    /// Noise-free power laws are recovered and preferred over exponentials.
    #[test]
    fn powerlaw_fit_recovers_exponent_and_wins(
        m in 0.1f64..10.0,
        rho in 0.1f64..2.0,
    ) {
        let series: Vec<(f64, f64)> = (0..300)
            .map(|i| {
                let t = 1.0 + i as f64;
                (t, m * t.powf(-rho))
            })
            .collect();
        let sel = select_model_series(&series, None).unwrap();
        prop_assert_eq!(sel.chosen, Model::Powerlaw);
        prop_assert!((sel.powerlaw.rate - rho).abs() < 1e-9);
        prop_assert!((sel.powerlaw.m - m).abs() < 1e-8 * m);
    }

    /// Both scalar comparison lemmas hold off the fixed grid.
    #[test]
    fn comparison_lemmas_hold(
        alpha in 0.05f64..10.0,
        gamma in 0.1f64..0.9,
        u0 in 0.01f64..20.0,
    ) {
        let r = verify_comparison_lemmas(alpha, gamma, u0, 50.0).unwrap();
        prop_assert!(r.passed, "{:?}", r);
    }

    /// `|d(x, F) - d(y, F)| <= |x - y|` for a convex intersection.
    #[test]
    fn distance_is_nonexpansive(x in coords(3, 10.0), y in coords(3, 10.0)) {
        let oracle = FixSetOracle::intersection(vec![
            PrimitiveSet::boxed(pt(&[0.0, 0.0, 0.0]), pt(&[2.0, 2.0, 2.0])).unwrap(),
            PrimitiveSet::ball(pt(&[1.0, 1.0, 0.0]), 1.5).unwrap(),
        ]).unwrap();
        let (px, py) = (pt(&x), pt(&y));
        let dx = distance_to_fix(&oracle, &px).unwrap().distance;
        let dy = distance_to_fix(&oracle, &py).unwrap().distance;
        prop_assert!((dx - dy).abs() <= px.dist(&py) + 1e-9);
    }

    /// The averaging identity holds for any real weight.
    #[test]
    fn averaging_identity(a in -3.0f64..3.0, u in coords(5, 100.0), v in coords(5, 100.0)) {
        prop_assert!(identity_error(a, &u, &v) <= 1e-12);
    }
}
