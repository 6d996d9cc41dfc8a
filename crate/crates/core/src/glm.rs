//! Generalized linear preference models `P(i ≻ j) = Φ(x_i - x_j)`, label
//! simulation and synthetic ground truth.
//!
//! | link                  | `Φ(t)`                 | domain         |
//! |-----------------------|------------------------|----------------|
//! | `uniform`             | `(t + 1) / 2`          | `[-1, 1]`      |
//! | `bradley-terry`       | `e^t / (1 + e^t)`      | ℝ              |
//! | `thurstone-mosteller` | standard normal CDF    | ℝ              |
//! | `angular`             | `(sin t + 1) / 2`      | `[-π/2, π/2]`  |
//!
//! Arguments outside a bounded link's domain are clamped to its boundary.
//!
//! Randomness comes from [`ChaCha8Rng`], which is portable and bit-stable
//! across platforms. [`replication_rng`] derives independent streams from one
//! experiment seed.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkFunction {
    #[default]
    Uniform,
    BradleyTerry,
    ThurstoneMosteller,
    Angular,
}

impl LinkFunction {
    pub const ALL: [LinkFunction; 4] = [
        LinkFunction::Uniform,
        LinkFunction::BradleyTerry,
        LinkFunction::ThurstoneMosteller,
        LinkFunction::Angular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::BradleyTerry => "bradley-terry",
            Self::ThurstoneMosteller => "thurstone-mosteller",
            Self::Angular => "angular",
        }
    }

    /// `(lo, hi)` of the argument domain.
    pub fn domain(self) -> (f64, f64) {
        match self {
            Self::Uniform => (-1.0, 1.0),
            Self::Angular => (-FRAC_PI_2, FRAC_PI_2),
            Self::BradleyTerry | Self::ThurstoneMosteller => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn is_bounded(self) -> bool {
        matches!(self, Self::Uniform | Self::Angular)
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::UnknownLink(s.to_string()))
    }
}

/// `Φ(delta)`, the probability that the first item is preferred.
pub fn preference_prob(link: LinkFunction, delta: f64) -> f64 {
    let (lo, hi) = link.domain();
    let t = delta.clamp(lo, hi);
    match link {
        LinkFunction::Uniform => (t + 1.0) / 2.0,
        LinkFunction::BradleyTerry => {
            // numerically stable logistic
            if t >= 0.0 {
                1.0 / (1.0 + (-t).exp())
            } else {
                let e = t.exp();
                e / (1.0 + e)
            }
        }
        LinkFunction::ThurstoneMosteller => normal_cdf(t),
        LinkFunction::Angular => (t.sin() + 1.0) / 2.0,
    }
}

/// `Φ^{-1}(pi_hat)`. Unbounded links reject 0 and 1 with [`Error::Saturated`];
/// see [`clip_empirical`].
pub fn inverse_link(link: LinkFunction, pi_hat: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi_hat) {
        return Err(Error::InvalidParameter {
            name: "pi_hat",
            reason: format!("probability must lie in [0, 1], got {pi_hat}"),
        });
    }
    match link {
        LinkFunction::Uniform => Ok(2.0 * pi_hat - 1.0),
        LinkFunction::Angular => Ok((2.0 * pi_hat - 1.0).asin()),
        LinkFunction::BradleyTerry | LinkFunction::ThurstoneMosteller
            if pi_hat == 0.0 || pi_hat == 1.0 =>
        {
            Err(Error::Saturated(pi_hat))
        }
        LinkFunction::BradleyTerry => Ok((pi_hat / (1.0 - pi_hat)).ln()),
        LinkFunction::ThurstoneMosteller => Ok(normal_quantile(pi_hat)),
    }
}

fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / SQRT_2)
}

fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// Inverse normal CDF, polished by one Newton step on [`normal_cdf`].
fn normal_quantile(p: f64) -> f64 {
    let t = -SQRT_2 * erfc_inv(2.0 * p);
    let density = normal_pdf(t);
    if density > 0.0 {
        t - (normal_cdf(t) - p) / density
    } else {
        t
    }
}

/// Continuity correction: clips an empirical probability from `samples`
/// observations into `[1/(2m), 1 - 1/(2m)]`.
pub fn clip_empirical(pi_hat: f64, samples: usize) -> f64 {
    let eps = 0.5 / samples.max(1) as f64;
    pi_hat.clamp(eps, 1.0 - eps)
}

/// Draws `+1` (i preferred) with probability `Φ(x_i - x_j)`, else `-1`.
pub fn sample_label<R: Rng + ?Sized>(
    link: LinkFunction,
    x_star: &GroundTruth,
    i: usize,
    j: usize,
    rng: &mut R,
) -> f64 {
    let p = preference_prob(link, x_star.scores[i] - x_star.scores[j]);
    if rng.random::<f64>() < p {
        1.0
    } else {
        -1.0
    }
}

/// Latent item scores, i.i.d. uniform on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub scores: DVector<f64>,
}

impl GroundTruth {
    pub fn new(scores: DVector<f64>) -> Result<Self> {
        if let Some(v) = scores.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter {
                name: "x_star",
                reason: format!("entries must lie in [0, 1], got {v}"),
            });
        }
        Ok(Self { scores })
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    /// `1 - |x_i - x_j|`; close to 1 for hard pairs.
    pub fn ambiguity(&self, i: usize, j: usize) -> f64 {
        1.0 - (self.scores[i] - self.scores[j]).abs()
    }
}

pub fn generate_ground_truth<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<GroundTruth> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("need at least 2 items, got {n}"),
        });
    }
    Ok(GroundTruth {
        scores: DVector::from_iterator(n, (0..n).map(|_| rng.random::<f64>())),
    })
}

/// Stream `stream` of the generator seeded by `seed`.
///
/// Replication `r` uses stream `4r` for its ground truth and `4r + 1 + s`
/// for the labels and choices of scheme `s` (random, unsupervised,
/// supervised), so schemes within one replication share the ground truth
/// but never a random stream.
pub fn replication_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn ground_truth_stream(rep: u64) -> u64 {
    4 * rep
}

pub fn scheme_stream(rep: u64, scheme_index: u64) -> u64 {
    4 * rep + 1 + scheme_index
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn half_at_zero() {
        for link in LinkFunction::ALL {
            assert_eq!(preference_prob(link, 0.0), 0.5, "{link}");
            assert_eq!(inverse_link(link, 0.5).unwrap(), 0.0, "{link}");
        }
    }

    #[test]
    fn bradley_terry_at_one() {
        let p = preference_prob(LinkFunction::BradleyTerry, 1.0);
        assert!((p - E / (1.0 + E)).abs() < 1e-15);
        assert!((p - 0.73106).abs() < 1e-5);
        assert!((inverse_link(LinkFunction::BradleyTerry, E / (1.0 + E)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_is_linear() {
        let (xi, xj) = (0.9, 0.2);
        let p = preference_prob(LinkFunction::Uniform, xi - xj);
        assert!((p - (xi - xj + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn bounded_links_clamp() {
        assert_eq!(preference_prob(LinkFunction::Uniform, 3.0), 1.0);
        assert_eq!(preference_prob(LinkFunction::Uniform, -3.0), 0.0);
        assert_eq!(preference_prob(LinkFunction::Angular, 10.0), 1.0);
    }

    #[test]
    fn angular_boundary_inverse() {
        assert!((inverse_link(LinkFunction::Angular, 1.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn thurstone_matches_known_normal_cdf() {
        // Φ(1) and Φ(-1.96) for the standard normal
        let p = preference_prob(LinkFunction::ThurstoneMosteller, 1.0);
        assert!((p - 0.841_344_746_068_542_9).abs() < 1e-12);
        let p = preference_prob(LinkFunction::ThurstoneMosteller, -1.96);
        assert!((p - 0.024_997_895_148_220_435).abs() < 1e-12);
    }

    #[test]
    fn thurstone_inverse_round_trips() {
        for &p in &[1e-6, 0.025, 0.3, 0.5, 0.8413447460685429, 0.999] {
            let t = inverse_link(LinkFunction::ThurstoneMosteller, p).unwrap();
            let back = preference_prob(LinkFunction::ThurstoneMosteller, t);
            assert!((back - p).abs() < 1e-14 * p.max(1e-3), "{p} -> {t} -> {back}");
        }
    }

    #[test]
    fn saturation_is_an_error() {
        for link in [LinkFunction::BradleyTerry, LinkFunction::ThurstoneMosteller] {
            assert!(matches!(inverse_link(link, 0.0), Err(Error::Saturated(_))));
            assert!(matches!(inverse_link(link, 1.0), Err(Error::Saturated(_))));
        }
        assert!(inverse_link(LinkFunction::Uniform, 1.5).is_err());
    }

    #[test]
    fn clipping_keeps_inverse_finite() {
        let p = clip_empirical(1.0, 5);
        assert_eq!(p, 0.9);
        assert!(inverse_link(LinkFunction::BradleyTerry, p).unwrap().is_finite());
        assert_eq!(clip_empirical(0.0, 5), 0.1);
    }

    #[test]
    fn names_round_trip() {
        for link in LinkFunction::ALL {
            assert_eq!(link.name().parse::<LinkFunction>().unwrap(), link);
        }
        assert!(matches!("logit".parse::<LinkFunction>(), Err(Error::UnknownLink(_))));
    }

    #[test]
    fn equal_scores_give_fair_coin() {
        let truth = GroundTruth::new(DVector::from_vec(vec![0.4, 0.4])).unwrap();
        let mut rng = replication_rng(11, 0);
        let draws = 10_000;
        let wins = (0..draws)
            .filter(|_| sample_label(LinkFunction::Uniform, &truth, 0, 1, &mut rng) > 0.0)
            .count() as f64;
        let sigma = (draws as f64 * 0.25).sqrt();
        assert!((wins - 5_000.0).abs() < 3.0 * sigma, "wins {wins}");
    }

    #[test]
    fn ground_truth_is_deterministic_and_in_range() {
        let a = generate_ground_truth(16, &mut replication_rng(3, 0)).unwrap();
        let b = generate_ground_truth(16, &mut replication_rng(3, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 16);
        assert!(a.scores.iter().all(|v| (0.0..=1.0).contains(v)));
        let big = generate_ground_truth(10_000, &mut replication_rng(5, 0)).unwrap();
        assert!((big.scores.mean() - 0.5).abs() < 0.015);
        assert!(generate_ground_truth(1, &mut replication_rng(5, 0)).is_err());
    }

    #[test]
    fn ground_truth_rejects_out_of_range() {
        assert!(GroundTruth::new(DVector::from_vec(vec![0.1, 1.2])).is_err());
    }

    #[test]
    fn streams_differ() {
        let a: u64 = replication_rng(1, 0).random();
        let b: u64 = replication_rng(1, 1).random();
        assert_ne!(a, b);
    }
}
