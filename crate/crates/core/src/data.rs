//! Dataset and parameter types shared across the crate.
//!
//! Missing values are carried as `Option<f64>` next to an explicit
//! observedness mask. The two are stored separately so that [`validate`]
//! can report inconsistent input instead of silently trusting one of them.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Per-unit observed data: treatment, possibly-missing outcome and
/// covariates, plus the observedness masks.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDataset {
    n: usize,
    p: usize,
    treatment: Vec<u8>,
    outcome: Vec<Option<f64>>,
    outcome_observed: Vec<bool>,
    covariates: Vec<Option<f64>>,
    observed: Vec<bool>,
    covariate_names: Vec<String>,
}

impl ObservedDataset {
    /// Build a dataset whose masks are derived from the `Option`s.
    /// `covariates` is a list of rows, each of length `p`.
    pub fn new(treatment: Vec<u8>, outcome: Vec<Option<f64>>, covariates: Vec<Vec<Option<f64>>>) -> Self {
        let n = treatment.len();
        assert_eq!(outcome.len(), n, "outcome length");
        assert_eq!(covariates.len(), n, "covariate row count");
        let p = covariates.first().map_or(0, Vec::len);
        assert!(covariates.iter().all(|r| r.len() == p), "ragged covariate rows");
        let flat: Vec<Option<f64>> = covariates.into_iter().flatten().collect();
        let observed = flat.iter().map(Option::is_some).collect();
        let outcome_observed = outcome.iter().map(Option::is_some).collect();
        ObservedDataset {
            n,
            p,
            treatment,
            outcome,
            outcome_observed,
            covariates: flat,
            observed,
            covariate_names: (1..=p).map(|j| format!("x{j}")).collect(),
        }
    }

    /// Build from raw parts with independently supplied masks. Nothing is
    /// checked here; run [`validate`] on the result.
    pub fn from_parts(
        treatment: Vec<u8>,
        outcome: Vec<Option<f64>>,
        outcome_observed: Vec<bool>,
        covariates: Vec<Option<f64>>,
        observed: Vec<bool>,
        p: usize,
    ) -> Self {
        let n = treatment.len();
        assert_eq!(covariates.len(), n * p);
        assert_eq!(observed.len(), n * p);
        assert_eq!(outcome.len(), n);
        assert_eq!(outcome_observed.len(), n);
        ObservedDataset {
            n,
            p,
            treatment,
            outcome,
            outcome_observed,
            covariates,
            observed,
            covariate_names: (1..=p).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn with_covariate_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.p);
        self.covariate_names = names;
        self
    }

    /// A fully observed dataset from complete data.
    pub fn from_complete(data: &CompleteData) -> Self {
        let rows = (0..data.n())
            .map(|i| data.row(i).iter().map(|&v| Some(v)).collect())
            .collect();
        ObservedDataset::new(
            data.treatment().iter().map(|&a| a as u8).collect(),
            data.outcome().iter().map(|&y| Some(y)).collect(),
            rows,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }
    pub fn treatment(&self, i: usize) -> u8 {
        self.treatment[i]
    }
    pub fn treatments(&self) -> &[u8] {
        &self.treatment
    }
    pub fn outcome(&self, i: usize) -> Option<f64> {
        self.outcome[i]
    }
    pub fn outcome_observed(&self, i: usize) -> bool {
        self.outcome_observed[i]
    }
    pub fn covariate(&self, i: usize, j: usize) -> Option<f64> {
        self.covariates[i * self.p + j]
    }
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.p + j]
    }
    pub fn covariate_row(&self, i: usize) -> &[Option<f64>] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }
    pub fn mask_row(&self, i: usize) -> &[bool] {
        &self.observed[i * self.p..(i + 1) * self.p]
    }

    /// True when unit `i` has every covariate and its outcome observed.
    pub fn unit_complete(&self, i: usize) -> bool {
        self.outcome_observed[i] && self.mask_row(i).iter().all(|&r| r)
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&r| !r).count() + self.outcome_observed.iter().filter(|&&r| !r).count()
    }

    pub fn column_missing_count(&self, j: usize) -> usize {
        (0..self.n).filter(|&i| !self.is_observed(i, j)).count()
    }

    /// The complete data when nothing is missing.
    pub fn to_complete(&self) -> Option<CompleteData> {
        if self.missing_count() > 0 {
            return None;
        }
        let x = self.covariates.iter().map(|v| v.expect("mask says observed")).collect();
        let y = self.outcome.iter().map(|v| v.expect("mask says observed")).collect();
        Some(CompleteData::new(self.treatment.iter().map(|&a| a as f64).collect(), x, y, self.p))
    }
}

/// A fully observed dataset (original or completed by imputation).
/// Covariates are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteData {
    p: usize,
    treatment: Vec<f64>,
    covariates: Vec<f64>,
    outcome: Vec<f64>,
}

impl CompleteData {
    pub fn new(treatment: Vec<f64>, covariates: Vec<f64>, outcome: Vec<f64>, p: usize) -> Self {
        assert_eq!(covariates.len(), treatment.len() * p);
        assert_eq!(outcome.len(), treatment.len());
        CompleteData {
            p,
            treatment,
            covariates,
            outcome,
        }
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn treatment(&self) -> &[f64] {
        &self.treatment
    }
    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }
    pub fn outcome_mut(&mut self) -> &mut [f64] {
        &mut self.outcome
    }
    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.covariates[i * self.p..(i + 1) * self.p]
    }
    pub fn treated(&self, i: usize) -> bool {
        self.treatment[i] > 0.5
    }
    pub fn arm_size(&self, arm: u8) -> usize {
        self.treatment.iter().filter(|&&a| (a > 0.5) == (arm == 1)).count()
    }

    /// `[1, X]` restricted to `columns` (all covariates when `None`).
    pub fn design(&self, columns: Option<&[usize]>) -> DMatrix<f64> {
        let cols: Vec<usize> = columns.map_or_else(|| (0..self.p).collect(), <[usize]>::to_vec);
        DMatrix::from_fn(self.n(), cols.len() + 1, |i, c| if c == 0 { 1.0 } else { self.row(i)[cols[c - 1]] })
    }

    /// Multiply every outcome by `c`.
    pub fn scale_outcome(&mut self, c: f64) {
        self.outcome.iter_mut().for_each(|y| *y *= c);
    }

    /// Reorder units by `perm` (unit `k` of the result is unit `perm[k]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut x = Vec::with_capacity(self.covariates.len());
        for &i in perm {
            x.extend_from_slice(self.row(i));
        }
        CompleteData::new(
            perm.iter().map(|&i| self.treatment[i]).collect(),
            x,
            perm.iter().map(|&i| self.outcome[i]).collect(),
            self.p,
        )
    }
}

/// One multiply-imputed copy of an [`ObservedDataset`].
#[derive(Debug, Clone)]
pub struct ImputedDataset {
    pub base: Arc<ObservedDataset>,
    /// Imputation index, 1-based.
    pub index: usize,
    pub data: CompleteData,
    pub theta: ThetaParams,
}

impl ImputedDataset {
    /// True when every observed entry of the base is copied bit-for-bit.
    pub fn preserves_observed(&self) -> bool {
        let base = &self.base;
        (0..base.n()).all(|i| {
            let y_ok = match base.outcome(i) {
                Some(y) if base.outcome_observed(i) => y.to_bits() == self.data.outcome()[i].to_bits(),
                _ => true,
            };
            y_ok && (0..base.p()).all(|j| match base.covariate(i, j) {
                Some(v) if base.is_observed(i, j) => v.to_bits() == self.data.row(i)[j].to_bits(),
                _ => true,
            })
        })
    }
}

/// Joint-model parameters: outcome regressions, treatment probit,
/// covariate distribution and missingness probits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub beta0: DVector<f64>,
    pub beta1: DVector<f64>,
    pub sigma0: f64,
    pub sigma1: f64,
    pub alpha: DVector<f64>,
    pub mu_x: DVector<f64>,
    pub sigma_x: DMatrix<f64>,
    /// One coefficient vector per covariate missingness model.
    pub gamma_x: Vec<DVector<f64>>,
    /// Outcome missingness model, when one is part of the joint model.
    pub gamma_y: Option<DVector<f64>>,
}

impl ThetaParams {
    pub fn beta(&self, arm: u8) -> &DVector<f64> {
        if arm == 1 {
            &self.beta1
        } else {
            &self.beta0
        }
    }
    pub fn sigma(&self, arm: u8) -> f64 {
        if arm == 1 {
            self.sigma1
        } else {
            self.sigma0
        }
    }

    pub fn is_valid(&self) -> bool {
        self.sigma0 > 0.0
            && self.sigma1 > 0.0
            && self.sigma_x.is_square()
            && (&self.sigma_x - self.sigma_x.transpose()).abs().max() <= 1e-10 * self.sigma_x.abs().max().max(1.0)
            && crate::linalg::eigenvalues(&self.sigma_x).first().is_some_and(|&e| e > 0.0)
    }
}

/// Which variable nearest-neighbour matching measures distance on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchOn {
    Covariates,
    PropensityScore,
}

/// The full-sample ACE estimator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    Regression,
    Ipw,
    Aipw,
    Matching { matches: usize, on: MatchOn },
}

impl EstimatorKind {
    pub fn matching(matches: usize) -> Self {
        EstimatorKind::Matching {
            matches,
            on: MatchOn::Covariates,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Regression => "Regression",
            EstimatorKind::Ipw => "IPW",
            EstimatorKind::Aipw => "AIPW",
            EstimatorKind::Matching { .. } => "Matching",
        }
    }

    /// The four estimators with `matches` neighbours for matching.
    pub fn all(matches: usize) -> [EstimatorKind; 4] {
        [
            EstimatorKind::Regression,
            EstimatorKind::Ipw,
            EstimatorKind::Aipw,
            EstimatorKind::matching(matches),
        ]
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single invariant breach found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooFewUnits(usize),
    NonBinaryTreatment { unit: usize, value: u8 },
    MaskMismatch { unit: usize, column: usize },
    OutcomeMaskMismatch { unit: usize },
    EmptyArm(u8),
    NoCompleteUnitInArm(u8),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewUnits(n) => write!(f, "need at least 2 units, found {n}"),
            Violation::NonBinaryTreatment { unit, value } => {
                write!(f, "non-binary treatment {value} at unit {unit}")
            }
            Violation::MaskMismatch { unit, column } => write!(f, "mask/value mismatch at ({unit},{column})"),
            Violation::OutcomeMaskMismatch { unit } => write!(f, "outcome mask/value mismatch at unit {unit}"),
            Violation::EmptyArm(0) => f.write_str("empty control arm"),
            Violation::EmptyArm(_) => f.write_str("empty treated arm"),
            Violation::NoCompleteUnitInArm(0) => f.write_str("no fully observed control unit"),
            Violation::NoCompleteUnitInArm(_) => f.write_str("no fully observed treated unit"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

/// Report every invariant violation in `data`.
pub fn validate(data: &ObservedDataset) -> ValidationReport {
    let mut violations = Vec::new();
    if data.n() < 2 {
        violations.push(Violation::TooFewUnits(data.n()));
    }
    for i in 0..data.n() {
        let a = data.treatment(i);
        if a > 1 {
            violations.push(Violation::NonBinaryTreatment { unit: i, value: a });
        }
        for j in 0..data.p() {
            if data.covariate(i, j).is_some() != data.is_observed(i, j) {
                violations.push(Violation::MaskMismatch { unit: i, column: j });
            }
        }
        if data.outcome(i).is_some() != data.outcome_observed(i) {
            violations.push(Violation::OutcomeMaskMismatch { unit: i });
        }
    }
    for arm in [0u8, 1] {
        let units: Vec<usize> = (0..data.n()).filter(|&i| data.treatment(i) == arm).collect();
        if units.is_empty() {
            violations.push(Violation::EmptyArm(arm));
        } else if !units.iter().any(|&i| data.unit_complete(i)) {
            violations.push(Violation::NoCompleteUnitInArm(arm));
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_units() -> ObservedDataset {
        ObservedDataset::new(
            vec![0, 1],
            vec![Some(1.0), Some(3.0)],
            vec![vec![Some(0.1), Some(0.2)], vec![Some(0.3), Some(0.4)]],
        )
    }

    #[test]
    fn smallest_valid_dataset_is_ok() {
        assert!(validate(&two_units()).is_ok());
    }

    #[test]
    fn value_without_mask_is_reported() {
        let d = two_units();
        let mut observed = vec![true; 4];
        observed[1] = false;
        let cov = (0..2).flat_map(|i| d.covariate_row(i).to_vec()).collect();
        let bad = ObservedDataset::from_parts(vec![0, 1], vec![Some(1.0), Some(3.0)], vec![true, true], cov, observed, 2);
        let report = validate(&bad);
        assert_eq!(report.messages()[0], "mask/value mismatch at (0,1)");
    }

    #[test]
    fn all_treated_reports_empty_control_arm() {
        let d = ObservedDataset::new(vec![1, 1], vec![Some(1.0), Some(2.0)], vec![vec![Some(0.0)], vec![Some(1.0)]]);
        let report = validate(&d);
        assert!(report.messages().contains(&"empty control arm".to_string()));
    }

    #[test]
    fn validate_is_idempotent() {
        let d = ObservedDataset::new(vec![1, 2], vec![None, Some(2.0)], vec![vec![None], vec![Some(1.0)]]);
        let first = validate(&d);
        let second = validate(&d);
        assert_eq!(first, second);
        assert!(!first.is_ok());
    }
}
