use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{CompleteData, ObservedDataset};
use crate::error::{Error, Result};

/// Which CSV columns play which role. Categorical confounders must already
/// be expanded to numeric dummy columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub treatment: String,
    pub outcome: String,
    pub confounders: Vec<String>,
    /// Cell text meaning "missing". The empty string and `NA` are always
    /// accepted as well.
    pub missing_token: String,
}

impl ColumnRoles {
    pub fn new(treatment: &str, outcome: &str, confounders: &[&str]) -> Self {
        ColumnRoles {
            treatment: treatment.into(),
            outcome: outcome.into(),
            confounders: confounders.iter().map(|s| s.to_string()).collect(),
            missing_token: String::new(),
        }
    }

    fn names(&self) -> impl Iterator<Item = &String> {
        std::iter::once(&self.treatment)
            .chain(std::iter::once(&self.outcome))
            .chain(&self.confounders)
    }

    pub fn check(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in self.names() {
            if name.is_empty() {
                return Err(Error::Config("empty column name".into()));
            }
            if !seen.insert(name) {
                return Err(Error::Config(format!("column '{name}' given more than one role")));
            }
        }
        if self.confounders.is_empty() {
            return Err(Error::Config("no confounders listed".into()));
        }
        Ok(())
    }

    fn is_missing(&self, cell: &str) -> bool {
        let t = cell.trim();
        t.is_empty() || t == "NA" || (!self.missing_token.is_empty() && t == self.missing_token)
    }
}

fn parse_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_error(row, column, format!("cannot parse '{cell}' as a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_error(row, column, format!("non-finite value '{cell}'")))
    }
}

/// Read a dataset. Rows are numbered from 1 after the header.
pub fn read_csv<R: Read>(reader: R, roles: &ColumnRoles) -> Result<ObservedDataset> {
    roles.check()?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_error(0, name, "column not found in header"))
    };
    let t_col = find(&roles.treatment)?;
    let y_col = find(&roles.outcome)?;
    let x_cols: Vec<usize> = roles.confounders.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    let mut rows = Vec::new();
    for (k, record) in r.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| parse_error(row, "", e.to_string()))?;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let t = cell(t_col);
        if roles.is_missing(t) {
            return Err(parse_error(row, &roles.treatment, "missing treatment is not supported"));
        }
        let a = number(t, row, &roles.treatment)?;
        if a != 0.0 && a != 1.0 {
            return Err(parse_error(row, &roles.treatment, format!("treatment must be 0 or 1, got '{t}'")));
        }
        treatment.push(a as u8);
        let y = cell(y_col);
        outcome.push(if roles.is_missing(y) { None } else { Some(number(y, row, &roles.outcome)?) });
        let mut xs = Vec::with_capacity(x_cols.len());
        for (&c, name) in x_cols.iter().zip(&roles.confounders) {
            let v = cell(c);
            xs.push(if roles.is_missing(v) { None } else { Some(number(v, row, name)?) });
        }
        rows.push(xs);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData("no data rows".into()));
    }
    Ok(ObservedDataset::new(treatment, outcome, rows).with_covariate_names(roles.confounders.clone()))
}

pub fn load_csv(path: &Path, roles: &ColumnRoles) -> Result<ObservedDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, roles)
}

fn fmt(v: f64) -> String {
    // Shortest representation that parses back to the same bits.
    format!("{v:?}")
}

pub fn write_csv<W: Write>(writer: W, data: &ObservedDataset, roles: &ColumnRoles) -> Result<()> {
    if roles.confounders.len() != data.p() {
        return Err(Error::Config(format!(
            "{} confounder names for {} covariates",
            roles.confounders.len(),
            data.p()
        )));
    }
    let missing = if roles.missing_token.is_empty() { "NA" } else { roles.missing_token.as_str() };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(roles.names())?;
    for i in 0..data.n() {
        let mut rec = vec![data.treatment(i).to_string()];
        rec.push(data.outcome(i).map_or_else(|| missing.to_string(), fmt));
        rec.extend(data.covariate_row(i).iter().map(|v| v.map_or_else(|| missing.to_string(), fmt)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: &Path, data: &ObservedDataset, roles: &ColumnRoles) -> Result<()> {
    write_csv(std::fs::File::create(path)?, data, roles)
}

/// Write a completed dataset with the column names of `roles`.
pub fn write_complete_csv<W: Write>(writer: W, data: &CompleteData, roles: &ColumnRoles) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(roles.names())?;
    for i in 0..data.n() {
        let mut rec = vec![(data.treatment()[i] as u8).to_string(), fmt(data.outcome()[i])];
        rec.extend(data.row(i).iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles() -> ColumnRoles {
        ColumnRoles::new("a", "y", &["x1", "x2"])
    }

    #[test]
    fn one_na_gives_one_mask_zero() {
        let text = "a,y,x1,x2\n1,2.5,0.1,NA\n0,1.0,0.2,0.3\n1,3.0,-0.4,1e-3\n";
        let d = read_csv(text.as_bytes(), &roles()).unwrap();
        let zeros: usize = (0..3).map(|i| d.mask_row(i).iter().filter(|&&o| !o).count()).sum();
        assert_eq!(zeros, 1);
        assert!(!d.is_observed(0, 1));
        assert_eq!(d.covariate(2, 1), Some(0.001));
    }

    #[test]
    fn empty_cell_and_custom_token_are_missing() {
        let mut r = roles();
        r.missing_token = ".".into();
        let text = "x2,y,a,x1\n,.,1,0.5\n0.2,1,0,0.1\n";
        let d = read_csv(text.as_bytes(), &r).unwrap();
        assert_eq!(d.outcome(0), None);
        assert_eq!(d.covariate(0, 1), None);
        assert_eq!(d.covariate(0, 0), Some(0.5));
    }

    #[test]
    fn errors_carry_position() {
        let bad = "a,y,x1,x2\n1,2,0.1,0.2\n0,1,abc,0.3\n";
        match read_csv(bad.as_bytes(), &roles()) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "x1")),
            other => panic!("unexpected {other:?}"),
        }
        let bad = "a,y,x1,x2\n2,2,0.1,0.2\n";
        assert!(matches!(read_csv(bad.as_bytes(), &roles()), Err(Error::Parse { row: 1, .. })));
        let bad = "a,y,x1,x2\nNA,2,0.1,0.2\n";
        assert!(matches!(read_csv(bad.as_bytes(), &roles()), Err(Error::Parse { row: 1, .. })));
        let bad = "a,y,x1\n1,2,0.1\n";
        assert!(matches!(read_csv(bad.as_bytes(), &roles()), Err(Error::Parse { row: 0, .. })));
    }

    #[test]
    fn duplicate_roles_rejected() {
        let r = ColumnRoles::new("a", "a", &["x"]);
        assert!(matches!(r.check(), Err(Error::Config(_))));
    }

    #[test]
    fn round_trip() {
        let d = ObservedDataset::new(
            vec![1, 0, 1],
            vec![Some(0.1 + 0.2), None, Some(-3.0)],
            vec![vec![Some(1.0 / 3.0), None], vec![Some(2.0), Some(1e-300)], vec![None, Some(-0.0)]],
        )
        .with_covariate_names(vec!["x1".into(), "x2".into()]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &d, &roles()).unwrap();
        assert_eq!(read_csv(buf.as_slice(), &roles()).unwrap(), d);
    }
}
