//! Seeded uniform sampling in balls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;

/// The closed ball `B(center, radius)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Point,
    pub radius: f64,
}

impl Region {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::usage(format!("region radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// `B(0, radius)` in `dim` dimensions.
    pub fn origin_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(Point::zeros(dim), radius)
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// `n` points drawn uniformly from the ball; same seed, same points.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    /// One uniform point: Gaussian direction, radius `R u^{1/n}`.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Point {
        let n = self.dim();
        let mut dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut norm = crate::point::norm(&dir);
        while norm == 0.0 {
            dir = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            norm = crate::point::norm(&dir);
        }
        let u: f64 = rng.random();
        let r = self.radius * u.powf(1.0 / n as f64);
        let coords = dir
            .iter()
            .zip(self.center.coords())
            .map(|(d, c)| c + r * d / norm)
            .collect();
        Point::from_vec_unchecked(coords)
    }
}

/// A generator seeded the same way as [`Region::sample`].
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_in_the_ball_and_are_reproducible() {
        let region = Region::new(Point::new(vec![1.0, -2.0, 0.5]).unwrap(), 3.0).unwrap();
        let a = region.sample(500, 7);
        let b = region.sample(500, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.dist(&region.center) <= 3.0));
        assert_ne!(a, region.sample(500, 8));
    }

    #[test]
    fn radial_distribution_is_uniform_in_volume() {
        // P(|x| <= R/2) = 2^{-n}
        let region = Region::origin_ball(2, 1.0).unwrap();
        let pts = region.sample(20_000, 1);
        let inner = pts.iter().filter(|p| p.norm() <= 0.5).count() as f64 / 20_000.0;
        assert!((inner - 0.25).abs() < 0.015, "{inner}");
    }
}
