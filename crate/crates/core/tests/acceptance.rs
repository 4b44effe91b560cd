//! Desk-scale acceptance suite: n = 1000, 500 replications, m = 5, B = 300,
//! L = 200, Gibbs 1500 iterations with 500 burn-in.

mod common;

use std::io::Write;

use causal_mi::sim::{ks_two_sample, run_study, CellSummary, Scenario, ScenarioSpec, StudyConfig, StudyReport};
use common::{ensure, Check};

const N: usize = 1000;
const ALL: [&str; 4] = ["Regression", "IPW", "AIPW", "Matching"];

fn study(scenario: Scenario, seed: u64, keep_replicates: bool) -> StudyReport {
    let mut config = StudyConfig::desk(ScenarioSpec::new(scenario, N), seed);
    config.keep_replicates = keep_replicates;
    let report = run_study(&config).unwrap();
    let mut out = std::io::stdout();
    writeln!(out, "scenario {scenario}: {} of {} replications failed", report.failed, report.reps).unwrap();
    report
}

fn cell<'a>(report: &'a StudyReport, name: &str) -> &'a CellSummary {
    report.cell(name, 5).unwrap()
}

/// Run `check` on every estimator and join the results.
fn each(report: &StudyReport, names: &[&str], check: impl Fn(&CellSummary) -> Result<String, String>) -> Check {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for name in names {
        match check(cell(report, name)) {
            Ok(s) => ok.push(format!("{name} {s}")),
            Err(s) => bad.push(format!("{name} {s}")),
        }
    }
    if bad.is_empty() {
        Ok(ok.join(", "))
    } else {
        Err(bad.into_iter().chain(ok).collect::<Vec<_>>().join(", "))
    }
}

fn bias_check(report: &StudyReport) -> Check {
    let truth = report.true_tau;
    each(report, &ALL, |c| {
        let bias = c.mean_tau - truth;
        ensure(bias.abs() < 0.03, || format!("bias {bias:+.4}"))?;
        Ok(format!("bias {bias:+.4}"))
    })
}

fn rubin_check(report: &StudyReport) -> Check {
    let inflated = each(report, &["IPW", "Matching"], |c| {
        let rb = c.rubin.relative_bias;
        ensure(rb > 10.0, || format!("RB {rb:+.1}%"))?;
        Ok(format!("RB {rb:+.1}%"))
    });
    let valid = each(report, &["Regression", "AIPW"], |c| {
        let rb = c.rubin.relative_bias;
        ensure(rb.abs() <= 10.0, || format!("RB {rb:+.1}%"))?;
        Ok(format!("RB {rb:+.1}%"))
    });
    merge(inflated, valid)
}

fn bootstrap_check(report: &StudyReport) -> Check {
    each(report, &ALL, |c| {
        let (rb, cov) = (c.bs_wald.relative_bias, c.bs_wald.coverage);
        let s = format!("RB {rb:+.1}% CP {cov:.1}");
        ensure(rb.abs() <= 10.0 && (92.0..=97.0).contains(&cov), || s.clone())?;
        Ok(s)
    })
}

fn covariance_check(report: &StudyReport) -> Check {
    let negative = each(report, &["IPW", "Matching"], |c| {
        let z = c.cov_diff_n / c.cov_diff_n_se;
        ensure(z < -2.0, || format!("z {z:+.2}"))?;
        Ok(format!("z {z:+.2}"))
    });
    let zero = each(report, &["Regression", "AIPW"], |c| {
        let z = c.cov_diff_n / c.cov_diff_n_se;
        ensure(z.abs() <= 2.0, || format!("z {z:+.2}"))?;
        Ok(format!("z {z:+.2}"))
    });
    merge(negative, zero)
}

fn misspecified_check(report: &StudyReport) -> Check {
    let c = cell(report, "Regression");
    let bias = c.mean_tau - report.true_tau;
    let cov = c.rubin.coverage;
    let s = format!("Regression bias {bias:+.4}, Rubin CP {cov:.1}");
    ensure(bias.abs() > 0.1 && cov < 50.0, || s.clone())?;
    Ok(s)
}

fn ks_check(report: &StudyReport) -> Check {
    let c = cell(report, "Regression");
    let pooled = c.replicates.as_ref().unwrap();
    let centred: Vec<f64> = c.estimates.iter().map(|t| t - report.true_tau).collect();
    let d = ks_two_sample(pooled, &centred);
    ensure(d < 0.08, || format!("KS {d:.4}"))?;
    Ok(format!("KS {d:.4}"))
}

fn merge(a: Check, b: Check) -> Check {
    match (a, b) {
        (Ok(a), Ok(b)) => Ok(format!("{a}, {b}")),
        (a, b) => Err(format!("{}, {}", a.unwrap_or_else(|e| e), b.unwrap_or_else(|e| e))),
    }
}

fn all_of(parts: Vec<(&str, Check)>) -> Check {
    let failed = parts.iter().any(|(_, r)| r.is_err());
    let text = parts
        .into_iter()
        .map(|(label, r)| match r {
            Ok(s) => format!("[{label}] {s}"),
            Err(s) => format!("[{label} FAIL] {s}"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    if failed {
        Err(text)
    } else {
        Ok(text)
    }
}

fn repeat_core(report: &StudyReport) -> Check {
    all_of(vec![("1", bias_check(report)), ("2", rubin_check(report)), ("3", bootstrap_check(report))])
}

#[test]
fn acceptance() {
    let a = study(Scenario::A, 1001, true);
    let mut results: Vec<(usize, &str, Check)> = vec![
        (1, "unbiased estimators, scenario a", bias_check(&a)),
        (2, "Rubin variance bias, scenario a", rubin_check(&a)),
        (3, "bootstrap variance and Wald coverage, scenario a", bootstrap_check(&a)),
        (4, "cov(tau_MI - tau_n, tau_n), scenario a", covariance_check(&a)),
    ];
    let ks = ks_check(&a);
    drop(a);

    let b = study(Scenario::B, 1002, false);
    results.push((5, "criteria 1-3 under MNAR, scenario b", repeat_core(&b)));
    drop(b);

    let c = study(Scenario::C, 1003, false);
    results.push((6, "MAR analysis of MNAR data, scenario c", misspecified_check(&c)));
    drop(c);

    let d = study(Scenario::D, 1004, false);
    results.push((7, "criteria 1-3 with missing outcomes, scenario d", repeat_core(&d)));
    drop(d);

    let props = all_of(vec![
        ("no-missing collapse", common::no_missing_collapse()),
        ("E(T*) = 0", common::bootstrap_mean_zero()),
        ("weight moments", common::weight_moments()),
        ("K_M identity", common::km_identity()),
        ("probit derivatives", common::probit_derivatives()),
        ("Gibbs conditionals", common::gibbs_conditional_moments()),
        ("conjugate posterior", common::conjugate_posterior()),
        ("martingale mean zero", common::martingale_mean_zero()),
    ]);
    results.push((8, "property suite", props));
    results.push((9, "KS(T*, tau_MI - tau), scenario a Regression", ks));

    let mut out = std::io::stdout();
    let mut failed = Vec::new();
    for (id, label, r) in &results {
        let (tag, detail) = match r {
            Ok(s) => ("PASS", s),
            Err(s) => {
                failed.push(*id);
                ("FAIL", s)
            }
        };
        writeln!(out, "{tag} criterion {id}: {label}: {detail}").unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
