use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::spec::JointModelSpec;
use crate::data::ThetaParams;

/// Flattened parameter vector used for scores, information matrices and
/// chain summaries.
///
/// Order: `β₀`, `β₁` (each `p+1`), `σ₀²`, `σ₁²`, `α` (`p+1`), `μ_X` (`p`),
/// `vech Σ_X` (lower triangle by columns), then one `γ` per active
/// covariate missingness model and finally `γ_Y` when present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaLayout {
    p: usize,
    gamma_x: Vec<usize>,
    gamma_y: Option<usize>,
}

impl ThetaLayout {
    pub fn new(spec: &JointModelSpec) -> Self {
        ThetaLayout {
            p: spec.p,
            gamma_x: spec.active_covariate_models().iter().map(|(_, m)| m.len()).collect(),
            gamma_y: spec.active_outcome_model().map(|m| m.len()),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    fn k(&self) -> usize {
        self.p + 1
    }

    pub fn beta(&self, arm: u8) -> Range<usize> {
        let start = arm as usize * self.k();
        start..start + self.k()
    }

    pub fn variance(&self, arm: u8) -> usize {
        2 * self.k() + arm as usize
    }

    pub fn alpha(&self) -> Range<usize> {
        let start = 2 * self.k() + 2;
        start..start + self.k()
    }

    pub fn mu(&self) -> Range<usize> {
        let start = self.alpha().end;
        start..start + self.p
    }

    pub fn vech(&self) -> Range<usize> {
        let start = self.mu().end;
        start..start + self.p * (self.p + 1) / 2
    }

    pub fn gamma_x(&self, model: usize) -> Range<usize> {
        let start = self.vech().end + self.gamma_x[..model].iter().sum::<usize>();
        start..start + self.gamma_x[model]
    }

    pub fn gamma_y(&self) -> Option<Range<usize>> {
        let start = self.vech().end + self.gamma_x.iter().sum::<usize>();
        self.gamma_y.map(|len| start..start + len)
    }

    pub fn dim(&self) -> usize {
        self.vech().end + self.gamma_x.iter().sum::<usize>() + self.gamma_y.unwrap_or(0)
    }

    /// `(row, column)` of each vech entry.
    pub fn vech_pairs(&self) -> Vec<(usize, usize)> {
        let p = self.p;
        (0..p).flat_map(|c| (c..p).map(move |r| (r, c))).collect()
    }

    pub fn flatten(&self, theta: &ThetaParams) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        for arm in [0u8, 1] {
            v.rows_mut(self.beta(arm).start, self.k()).copy_from(theta.beta(arm));
            v[self.variance(arm)] = theta.sigma(arm).powi(2);
        }
        v.rows_mut(self.alpha().start, self.k()).copy_from(&theta.alpha);
        v.rows_mut(self.mu().start, self.p).copy_from(&theta.mu_x);
        for (idx, (r, c)) in self.vech().zip(self.vech_pairs()) {
            v[idx] = theta.sigma_x[(r, c)];
        }
        for (model, g) in theta.gamma_x.iter().enumerate().take(self.gamma_x.len()) {
            v.rows_mut(self.gamma_x(model).start, g.len()).copy_from(g);
        }
        if let (Some(range), Some(g)) = (self.gamma_y(), &theta.gamma_y) {
            v.rows_mut(range.start, g.len()).copy_from(g);
        }
        v
    }

    pub fn unflatten(&self, v: &[f64]) -> ThetaParams {
        assert_eq!(v.len(), self.dim());
        let slice = |r: Range<usize>| DVector::from_column_slice(&v[r]);
        let mut sigma_x = DMatrix::zeros(self.p, self.p);
        for (idx, (r, c)) in self.vech().zip(self.vech_pairs()) {
            sigma_x[(r, c)] = v[idx];
            sigma_x[(c, r)] = v[idx];
        }
        ThetaParams {
            beta0: slice(self.beta(0)),
            beta1: slice(self.beta(1)),
            sigma0: v[self.variance(0)].max(0.0).sqrt(),
            sigma1: v[self.variance(1)].max(0.0).sqrt(),
            alpha: slice(self.alpha()),
            mu_x: slice(self.mu()),
            sigma_x,
            gamma_x: (0..self.gamma_x.len()).map(|m| slice(self.gamma_x(m))).collect(),
            gamma_y: self.gamma_y().map(slice),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for arm in 0..2 {
            names.extend((0..self.k()).map(|c| format!("beta{arm}[{c}]")));
        }
        names.push("sigma0^2".into());
        names.push("sigma1^2".into());
        names.extend((0..self.k()).map(|c| format!("alpha[{c}]")));
        names.extend((0..self.p).map(|c| format!("mu[{c}]")));
        names.extend(self.vech_pairs().into_iter().map(|(r, c)| format!("Sigma[{r},{c}]")));
        for (model, &len) in self.gamma_x.iter().enumerate() {
            names.extend((0..len).map(|c| format!("gamma_x{model}[{c}]")));
        }
        if let Some(len) = self.gamma_y {
            names.extend((0..len).map(|c| format!("gamma_y[{c}]")));
        }
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imputer::spec::{Mechanism, MissingnessModel};

    #[test]
    fn flatten_round_trips() {
        let spec = JointModelSpec {
            p: 2,
            mechanism: Mechanism::MnarOutcomeIndependent,
            covariate_models: vec![(1, MissingnessModel::treatment_and_covariates(2))],
            outcome_model: Some(MissingnessModel::treatment_and_covariates(2)),
        };
        let layout = ThetaLayout::new(&spec);
        assert_eq!(layout.dim(), 3 + 3 + 2 + 3 + 2 + 3 + 4 + 4);
        let v: Vec<f64> = (0..layout.dim()).map(|i| 0.1 * i as f64 + 1.0).collect();
        let theta = layout.unflatten(&v);
        let back = layout.flatten(&theta);
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(layout.names().len(), layout.dim());
    }

    #[test]
    fn mar_layout_has_no_missingness_block() {
        let mut spec = JointModelSpec::mar(2);
        spec.covariate_models.push((0, MissingnessModel::treatment_and_covariates(2)));
        let layout = ThetaLayout::new(&spec);
        assert_eq!(layout.dim(), 16);
        assert!(layout.gamma_y().is_none());
    }
}
