//! Standard normal helpers shared by the probit code, the samplers and the
//! interval constructions.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `log Φ(x)`, accurate in the far lower tail.
pub fn log_cdf(x: f64) -> f64 {
    if x > -30.0 {
        cdf(x).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// `φ(x) / Φ(x)` (inverse Mills ratio), stable for very negative `x`.
pub fn mills(x: f64) -> f64 {
    if x > -30.0 {
        pdf(x) / cdf(x)
    } else {
        let x2 = x * x;
        -x / (1.0 - 1.0 / x2 + 3.0 / (x2 * x2))
    }
}

pub fn quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw `e ~ N(0, 1)` conditioned on `e > lower`.
fn draw_upper_tail<R: Rng + ?Sized>(lower: f64, rng: &mut R) -> f64 {
    if lower <= 0.0 {
        loop {
            let e = draw(rng);
            if e > lower {
                return e;
            }
        }
    } else if lower < 5.0 {
        // Inverse CDF on the upper tail: e = -Φ⁻¹(u Φ(-lower)).
        let tail = cdf(-lower);
        loop {
            let u: f64 = rng.random();
            let e = -quantile(u * tail);
            if e.is_finite() && e > lower {
                return e;
            }
        }
    } else {
        // Robert (1995) translated-exponential proposal.
        let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
        let exp = Exp::new(rate).expect("positive rate");
        loop {
            let e = lower + exp.sample(rng);
            let u: f64 = rng.random();
            if u <= (-0.5 * (e - rate) * (e - rate)).exp() {
                return e;
            }
        }
    }
}

/// Draw `z ~ N(mean, 1)` restricted to `z > 0` when `positive`, else `z < 0`.
pub fn draw_truncated<R: Rng + ?Sized>(mean: f64, positive: bool, rng: &mut R) -> f64 {
    if positive {
        mean + draw_upper_tail(-mean, rng)
    } else {
        mean - draw_upper_tail(mean, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn tails_agree_with_direct_formulas() {
        for &x in &[-5.0, -1.0, 0.0, 2.0] {
            assert!((log_cdf(x) - cdf(x).ln()).abs() < 1e-12);
            assert!((mills(x) - pdf(x) / cdf(x)).abs() < 1e-10);
        }
        // asymptotic branch continues the exact one
        let below = mills(-30.0001);
        let above = mills(-29.9999);
        assert!((below - above).abs() < 1e-3);
        assert!((log_cdf(-30.0001) - log_cdf(-29.9999)).abs() < 1e-2);
    }

    #[test]
    fn truncated_moments_match_analytic() {
        let mut rng = rng::stream(3, &[0]);
        for &mean in &[-6.0, -1.0, 0.5, 3.0] {
            let n = 100_000;
            let draws: Vec<f64> = (0..n).map(|_| draw_truncated(mean, true, &mut rng)).collect();
            assert!(draws.iter().all(|&z| z > 0.0));
            let m = draws.iter().sum::<f64>() / n as f64;
            let v = draws.iter().map(|z| (z - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            // E[z | z > 0] = mean + λ(mean), λ = φ(mean)/Φ(mean)
            let lam = mills(mean);
            let exact_mean = mean + lam;
            let exact_var = 1.0 - lam * (lam + mean);
            let se = (exact_var / n as f64).sqrt();
            assert!((m - exact_mean).abs() < 4.0 * se, "mean {mean}: {m} vs {exact_mean}");
            assert!((v / exact_var - 1.0).abs() < 0.03, "var {mean}: {v} vs {exact_var}");
        }
        let neg: Vec<f64> = (0..1000).map(|_| draw_truncated(2.0, false, &mut rng)).collect();
        assert!(neg.iter().all(|&z| z < 0.0));
    }
}
