//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factor of an SPD matrix, or a `NotPositiveDefinite` error.
pub fn cholesky(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        context: context.to_string(),
        iteration: None,
    })
}

pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, context)?.inverse()))
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Solve the normal equations `(XᵀX) b = Xᵀy`, reporting rank deficiency.
pub fn least_squares(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<DVector<f64>> {
    let gram = design.transpose() * design;
    check_gram(&gram)?;
    let rhs = design.transpose() * response;
    let chol = Cholesky::new(gram).ok_or_else(|| Error::SingularDesign("normal equations not positive-definite".into()))?;
    Ok(chol.solve(&rhs))
}

pub(crate) fn check_gram(gram: &DMatrix<f64>) -> Result<()> {
    let ev = eigenvalues(gram);
    let max = ev.last().copied().unwrap_or(0.0);
    let min = ev.first().copied().unwrap_or(0.0);
    if max.is_nan() || max <= 0.0 || min <= max * 1e-12 {
        return Err(Error::SingularDesign(format!(
            "gram matrix eigenvalue range [{min:e}, {max:e}]"
        )));
    }
    Ok(())
}

/// Draw from `N(mean, precision⁻¹)` given the Cholesky factor of the precision.
pub fn draw_from_precision<R: rand::Rng + ?Sized>(
    mean: &DVector<f64>,
    precision_chol: &Cholesky<f64, Dyn>,
    rng: &mut R,
) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| crate::normal::draw(rng));
    // P = L Lᵀ, so x = mean + L⁻ᵀ z has covariance P⁻¹.
    let lt = precision_chol.l().transpose();
    let offset = lt.solve_upper_triangular(&z).expect("triangular factor is nonsingular");
    mean + offset
}
