use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution};

use crate::error::Result;
use crate::{linalg, normal};

/// Draw `W ~ Wishart(df, S)` by the Bartlett decomposition.
pub fn draw_wishart<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    let l = linalg::cholesky(scale, "Wishart scale")?.l();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).expect("degrees of freedom exceed p - 1");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = normal::draw(rng);
        }
    }
    let la = l * a;
    Ok(linalg::symmetrize(&(&la * la.transpose())))
}

/// Draw `Σ ~ inverse-Wishart(df, Ψ)`, i.e. `Σ⁻¹ ~ Wishart(df, Ψ⁻¹)`.
pub fn draw_inverse_wishart<R: Rng + ?Sized>(df: f64, psi: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let psi_inv = linalg::spd_inverse(psi, "inverse-Wishart scale")?;
    let w = draw_wishart(df, &psi_inv, rng)?;
    linalg::spd_inverse(&w, "Wishart draw")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn inverse_wishart_mean() {
        let mut r = rng::stream(11, &[]);
        let psi = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let df = 9.0;
        let reps = 40_000;
        let mut mean = DMatrix::zeros(2, 2);
        let mut sq = DMatrix::zeros(2, 2);
        for _ in 0..reps {
            let s = draw_inverse_wishart(df, &psi, &mut r).unwrap();
            sq += s.component_mul(&s);
            mean += s;
        }
        mean /= reps as f64;
        sq /= reps as f64;
        // E Σ = Ψ / (df - p - 1)
        let exact = &psi / (df - 3.0);
        for k in 0..4 {
            let se = ((sq[k] - mean[k] * mean[k]) / reps as f64).sqrt();
            assert!((mean[k] - exact[k]).abs() < 4.0 * se, "entry {k}: {} vs {}", mean[k], exact[k]);
        }
    }
}
