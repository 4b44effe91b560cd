//! Checks shared by the integration tests and the acceptance suite. Each
//! returns a short summary on success and a diagnostic on failure.

#![allow(dead_code)]

use std::sync::Arc;

use causal_mi::estimators::matching::nearest_neighbors;
use causal_mi::estimators::{influence, NuisanceOptions};
use causal_mi::imputer::{
    gibbs_run, impute_from_chain, predictive_conditional, wishart, ConditionalSampler, GibbsChain, GibbsConfig,
    JointModelSpec, PriorSpec, Selection,
};
use causal_mi::mi::{estimate_kinds, mi_estimate_kinds, MIResult};
use causal_mi::sim::{generate, Scenario, ScenarioSpec};
use causal_mi::wild_bootstrap::{
    arrays_from_summary, bootstrap, conditional_summary, draw_weights, obs_information_chain, ConditionalSummary,
    MartingaleArrays, WeightScheme,
};
use causal_mi::{linalg, normal, probit, rng, CompleteData, EstimatorKind, ImputedDataset, ObservedDataset, ThetaParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub type Check = Result<String, String>;

pub fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn smooth_kinds() -> [EstimatorKind; 3] {
    [EstimatorKind::Regression, EstimatorKind::Ipw, EstimatorKind::Aipw]
}

/// One pass of the imputation and bootstrap pipeline on a scenario draw.
pub struct Fitted {
    pub observed: Arc<ObservedDataset>,
    pub shadow: CompleteData,
    pub spec: JointModelSpec,
    pub chain: GibbsChain,
    pub imputed: Vec<ImputedDataset>,
    pub theta_hat: ThetaParams,
    pub i_obs_inv: DMatrix<f64>,
    pub kinds: Vec<EstimatorKind>,
    pub rubin: Vec<MIResult>,
    pub summary: ConditionalSummary,
    pub arrays: Vec<MartingaleArrays>,
}

pub struct FitOptions {
    pub m: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub cond_draws: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            m: 5,
            iterations: 600,
            burn_in: 200,
            cond_draws: 50,
        }
    }
}

pub fn fit(scenario: &ScenarioSpec, kinds: &[EstimatorKind], seed: u64, opts: &FitOptions) -> Fitted {
    let (observed, shadow) = generate(scenario, &mut rng::stream(seed, &[0]));
    let observed = Arc::new(observed);
    let spec = JointModelSpec::for_mechanism(scenario.analysis, &observed);
    let gibbs = GibbsConfig {
        iterations: opts.iterations,
        burn_in: opts.burn_in,
        m: opts.m,
        selection: Selection::Random,
        seed: rng::derive_seed(seed, &[1]),
    };
    let chain = gibbs_run(&observed, &spec, &PriorSpec::new(observed.p()), &gibbs).expect("chain");
    let theta_hat = chain.posterior_mean();
    let i_obs_inv = obs_information_chain(&chain, observed.n()).expect("information");
    let imputed = impute_from_chain(&observed, &chain, opts.m, Selection::Random, rng::derive_seed(seed, &[2])).unwrap();
    let options = NuisanceOptions::default();
    let rubin = mi_estimate_kinds(&imputed, kinds, &options).unwrap();
    let summary = conditional_summary(
        &observed,
        &imputed,
        &theta_hat,
        &spec,
        kinds,
        opts.cond_draws,
        &options,
        rng::derive_seed(seed, &[3]),
    )
    .unwrap();
    let arrays = (0..kinds.len())
        .map(|k| arrays_from_summary(&observed, &imputed, &summary, k, &i_obs_inv).unwrap())
        .collect();
    Fitted {
        observed,
        shadow,
        spec,
        chain,
        imputed,
        theta_hat,
        i_obs_inv,
        kinds: kinds.to_vec(),
        rubin,
        summary,
        arrays,
    }
}

/// With nothing missing, MI and its bootstrap reduce to the full-sample
/// estimator and its influence variance.
pub fn no_missing_collapse() -> Check {
    let scenario = ScenarioSpec::new(Scenario::A, 800).with_observation_intercepts(10.0);
    let kinds = EstimatorKind::all(1);
    let f = fit(&scenario, &kinds, 31, &FitOptions::default());
    ensure(f.observed.missing_count() == 0, || "generator left missing values".into())?;
    let full = estimate_kinds(&f.shadow, &kinds, &NuisanceOptions::default()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (k, kind) in kinds.iter().enumerate() {
        let r = &f.rubin[k];
        let a = &f.arrays[k];
        ensure(r.tau_mi == full[k].0, || format!("{}: tau_mi {} != tau_n {}", kind.name(), r.tau_mi, full[k].0))?;
        ensure(r.b_m == 0.0, || format!("{}: B_m = {}", kind.name(), r.b_m))?;
        ensure(a.gamma_hat.iter().all(|&g| g == 0.0), || format!("{}: gamma_hat nonzero", kind.name()))?;
        ensure(a.xi_imp.iter().all(|&x| x == 0.0), || format!("{}: xi_imp nonzero", kind.name()))?;
        let fit = causal_mi::estimators::fit_nuisance(&f.shadow).map_err(|e| e.to_string())?;
        let iv = influence(&f.shadow, &fit, *kind).map_err(|e| e.to_string())?;
        let v_if = causal_mi::estimators::full_sample_variance(&iv);
        let bs = bootstrap(a, WeightScheme::Mammen, 10_000, 77 + k as u64);
        let rel = bs.v_bs / v_if - 1.0;
        ensure(rel.abs() < 0.05, || format!("{}: V_BS {} vs influence {}", kind.name(), bs.v_bs, v_if))?;
        worst = worst.max(rel.abs());
    }
    Ok(format!("tau_MI = tau_n, B_m = 0, Gamma = 0, xi_imp = 0; max |V_BS/V_IF - 1| = {worst:.3}"))
}

/// `E(T* | data) = 0`: the replicate mean sits within 4 bootstrap SEs of 0.
pub fn bootstrap_mean_zero() -> Check {
    let f = fit(&ScenarioSpec::new(Scenario::A, 500), &smooth_kinds(), 32, &FitOptions::default());
    let b = 10_000;
    let mut worst: f64 = 0.0;
    for scheme in [WeightScheme::Mammen, WeightScheme::Rademacher, WeightScheme::Normal, WeightScheme::Multinomial] {
        for a in &f.arrays {
            let bs = bootstrap(a, scheme, b, 5);
            let mean = bs.replicates.iter().sum::<f64>() / b as f64;
            let z = mean / (bs.v_bs / b as f64).sqrt();
            ensure(z.abs() < 4.0, || format!("{} / {}: z = {z:.2}", scheme.name(), a.kind.name()))?;
            worst = worst.max(z.abs());
        }
    }
    Ok(format!("max |mean T*| / SE = {worst:.2} over 4 schemes x 3 estimators"))
}

fn moment_z(values: &[f64], power: i32, target: f64) -> f64 {
    let n = values.len() as f64;
    let powered: Vec<f64> = values.iter().map(|v| v.powi(power)).collect();
    let mean = powered.iter().sum::<f64>() / n;
    let var = powered.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return if (mean - target).abs() < 1e-12 { 0.0 } else { f64::INFINITY };
    }
    (mean - target) / (var / n).sqrt()
}

/// Weight moments over 10⁶ draws per scheme.
pub fn weight_moments() -> Check {
    let count = 1_000_000;
    let mut worst: f64 = 0.0;
    for scheme in [WeightScheme::Mammen, WeightScheme::Rademacher, WeightScheme::Normal, WeightScheme::Multinomial] {
        let u = draw_weights(scheme, count, &mut rng::stream(40, &[scheme as u64]));
        let z1 = moment_z(&u, 1, 0.0);
        let z2 = moment_z(&u, 2, 1.0);
        let mut zs = vec![z1, z2];
        if scheme == WeightScheme::Mammen {
            zs.push(moment_z(&u, 3, 1.0));
        }
        if scheme == WeightScheme::Multinomial {
            let sum: f64 = u.iter().sum();
            ensure(sum.abs() < 1e-6, || format!("multinomial weights sum to {sum}"))?;
        } else {
            ensure(z1.abs() < 4.0, || format!("{}: mean z = {z1:.2}", scheme.name()))?;
        }
        for z in &zs[1..] {
            ensure(z.abs() < 4.0, || format!("{}: moment z = {z:.2}", scheme.name()))?;
        }
        worst = zs.iter().fold(worst, |w, z| w.max(z.abs()));
    }
    Ok(format!("max moment z = {worst:.2}; multinomial weights sum to 0"))
}

/// Every unit contributes exactly M matches from the opposite arm.
pub fn km_identity() -> Check {
    let mut r = rng::stream(41, &[]);
    for d in 0..100 {
        let n = r.random_range(8..60);
        let dim = r.random_range(1..4);
        let mut treated: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.5).collect();
        treated[0] = true;
        treated[1] = false;
        let n1 = treated.iter().filter(|&&t| t).count();
        let n0 = n - n1;
        let m = r.random_range(1..=n1.min(n0).min(4));
        let points: Vec<f64> = (0..n * dim).map(|_| normal::draw(&mut r)).collect();
        let matches = nearest_neighbors(&points, dim, &treated, m).map_err(|e| e.to_string())?;
        let k0: usize = (0..n).filter(|&i| !treated[i]).map(|i| matches.counts[i]).sum();
        let k1: usize = (0..n).filter(|&i| treated[i]).map(|i| matches.counts[i]).sum();
        ensure(k0 == m * n1 && k1 == m * n0, || format!("dataset {d}: {k0} != {m}*{n1} or {k1} != {m}*{n0}"))?;
    }
    Ok("100 datasets".into())
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Analytic probit score and Hessian against central differences.
pub fn probit_derivatives() -> Check {
    let mut r = rng::stream(42, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = 200;
        let k = 3;
        let x = DMatrix::from_fn(n, k, |_, c| if c == 0 { 1.0 } else { normal::draw(&mut r) });
        let coef = DVector::from_fn(k, |_, _| 0.5 * normal::draw(&mut r));
        let y: Vec<f64> = (0..n)
            .map(|i| ((x.row(i) * &coef)[0] + normal::draw(&mut r) > 0.0) as u8 as f64)
            .collect();
        let score = probit::score(&x, &y, &coef);
        let hess = probit::hessian(&x, &y, &coef);
        for j in 0..k {
            let h = 1e-5 * (1.0 + coef[j].abs());
            let mut up = coef.clone();
            let mut down = coef.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (probit::log_likelihood(&x, &y, &up) - probit::log_likelihood(&x, &y, &down)) / (2.0 * h);
            worst = worst.max(relative_error(score[j], fd));
            let col = (probit::score(&x, &y, &up) - probit::score(&x, &y, &down)) / (2.0 * h);
            for i in 0..k {
                worst = worst.max(relative_error(hess[(i, j)], col[i]));
            }
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.1e}"))
}

/// Mean and variance of `f(x) ∝ N(x; m, v)·Φ(a + b x)` by quadrature.
pub fn tilted_normal_moments(m: f64, v: f64, a: f64, b: f64) -> (f64, f64) {
    let sd = v.sqrt();
    let steps = 20_000;
    let (lo, hi) = (m - 12.0 * sd, m + 12.0 * sd);
    let h = (hi - lo) / steps as f64;
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..=steps {
        let x = lo + h * i as f64;
        let w = (-(x - m).powi(2) / (2.0 * v)).exp() * normal::cdf(a + b * x);
        z += w;
        s1 += w * x;
        s2 += w * x * x;
    }
    let mean = s1 / z;
    (mean, s2 / z - mean * mean)
}

fn sample_moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

fn within(sample: (f64, f64), exact: (f64, f64), n: usize, kurtosis: f64) -> bool {
    let se_mean = (exact.1 / n as f64).sqrt();
    let se_var = exact.1 * ((kurtosis - 1.0) / n as f64).sqrt();
    (sample.0 - exact.0).abs() < 4.0 * se_mean && (sample.1 - exact.1).abs() < 4.0 * se_var
}

/// Full-conditional samplers with fixed conditioning values against their
/// analytic moments over 10⁵ draws.
pub fn gibbs_conditional_moments() -> Check {
    let n = 100_000;
    let mut r = rng::stream(43, &[]);

    // Coefficient draw from a precision matrix.
    let prec = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
    let cov = prec.clone().try_inverse().unwrap();
    let mean = DVector::from_vec(vec![0.5, -1.0]);
    let chol = linalg::cholesky(&prec, "test").unwrap();
    let draws: Vec<DVector<f64>> = (0..n).map(|_| linalg::draw_from_precision(&mean, &chol, &mut r)).collect();
    for c in 0..2 {
        let col: Vec<f64> = draws.iter().map(|d| d[c]).collect();
        ensure(within(sample_moments(&col), (mean[c], cov[(c, c)]), n, 3.0), || {
            format!("coefficient draw, component {c}: {:?}", sample_moments(&col))
        })?;
    }

    // Latent probit utility.
    for (mu, positive) in [(0.3, true), (-1.2, true), (0.8, false)] {
        let z: Vec<f64> = (0..n).map(|_| normal::draw_truncated(mu, positive, &mut r)).collect();
        let (m, v) = if positive {
            let l = normal::mills(mu);
            (mu + l, 1.0 - l * (l + mu))
        } else {
            let l = normal::mills(-mu);
            (mu - l, 1.0 - l * (l - mu))
        };
        ensure(within(sample_moments(&z), (m, v), n, 6.0), || format!("truncated normal at {mu}"))?;
    }

    // Covariance update: inverse-Wishart mean Ψ/(ν − p − 1).
    let psi = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let nu = 12.0;
    let reps = 20_000;
    let mut acc = DMatrix::zeros(2, 2);
    let mut sq = 0.0;
    for _ in 0..reps {
        let s = wishart::draw_inverse_wishart(nu, &psi, &mut r).map_err(|e| e.to_string())?;
        sq += s[(0, 0)].powi(2);
        acc += s;
    }
    let avg = acc / reps as f64;
    let expected = &psi / (nu - 3.0);
    let sd00 = (sq / reps as f64 - avg[(0, 0)].powi(2)).sqrt();
    ensure((avg[(0, 0)] - expected[(0, 0)]).abs() < 4.0 * sd00 / (reps as f64).sqrt(), || {
        format!("inverse-Wishart mean {avg} vs {expected}")
    })?;

    // Missing covariate with a probit treatment factor.
    let theta = ThetaParams {
        beta0: DVector::from_vec(vec![2.0, 3.0, 2.0]),
        beta1: DVector::from_vec(vec![1.0, 2.0, 1.0]),
        sigma0: 1.0,
        sigma1: 1.0,
        alpha: DVector::from_vec(vec![-0.2, 0.3, 0.4]),
        mu_x: DVector::zeros(2),
        sigma_x: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]),
        gamma_x: Vec::new(),
        gamma_y: None,
    };
    let spec = JointModelSpec::mar(2);
    // A = 1, X₁ = 0.5, Y = 1.7: Gaussian part as in the closed form, tilted by Φ(α₀ + α₁X₁ + α₂X₂).
    let row = ObservedDataset::new(vec![1], vec![Some(1.7)], vec![vec![Some(0.5), None]]);
    let (m0, v0) = (0.1, 0.96);
    let precision = 1.0 / v0 + 1.0;
    let gauss_mean = (m0 / v0 + (1.7 - 2.0)) / precision;
    let exact = tilted_normal_moments(gauss_mean, 1.0 / precision, -0.2 + 0.3 * 0.5, 0.4);
    let xs: Vec<f64> = predictive_conditional(&row, 0, &theta, &spec, n, &mut r)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(x, _)| x[1])
        .collect();
    ensure(within(sample_moments(&xs), exact, n, 3.5), || {
        format!("tilted conditional {:?} vs {exact:?}", sample_moments(&xs))
    })?;

    // Missing covariate and outcome in the control arm: Y | X is the arm-0 regression.
    let row = ObservedDataset::new(vec![0], vec![None], vec![vec![Some(0.5), None]]);
    let sampler = ConditionalSampler::new(&spec, &theta, &row).map_err(|e| e.to_string())?;
    let mut x = vec![0.0; 2];
    let mut x2s = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        ys.push(sampler.draw_row(&row, 0, &mut r, &mut x));
        x2s.push(x[1]);
    }
    let x2 = tilted_normal_moments(m0, v0, -(-0.2 + 0.3 * 0.5), -0.4);
    let y_exact = (2.0 + 3.0 * 0.5 + 2.0 * x2.0, 4.0 * x2.1 + 1.0);
    ensure(within(sample_moments(&x2s), x2, n, 3.5), || format!("control-arm X2 {:?} vs {x2:?}", sample_moments(&x2s)))?;
    ensure(within(sample_moments(&ys), y_exact, n, 3.5), || format!("control-arm Y {:?} vs {y_exact:?}", sample_moments(&ys)))?;
    Ok("coefficient, latent utility, inverse-Wishart and missing-data conditionals within 4 SE".into())
}

/// Posterior of one arm's regression under the semi-conjugate prior, by
/// quadrature over the precision. Returns means and SDs of
/// `(β₀, β₁, σ²)`.
pub fn semi_conjugate_posterior(x: &[f64], y: &[f64], prior: &PriorSpec) -> ([f64; 3], [f64; 3]) {
    let n = x.len();
    let design = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { x[i] });
    let yv = DVector::from_column_slice(y);
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * &yv;
    let yty = yv.dot(&yv);
    let v0_inv = DMatrix::identity(2, 2) / prior.coef_variance;
    let ols = xtx.clone().lu().solve(&xty).unwrap();
    let s2 = (&yv - &design * &ols).norm_squared() / (n - 2) as f64;
    let grid = 4000;
    let (lo, hi) = ((0.02 / s2).ln(), (20.0 / s2).ln());
    let mut logs = Vec::with_capacity(grid);
    let mut parts = Vec::with_capacity(grid);
    for g in 0..grid {
        let tau = (lo + (hi - lo) * g as f64 / (grid - 1) as f64).exp();
        let q = &v0_inv + &xtx * tau;
        let q_inv = q.clone().try_inverse().unwrap();
        let m = &q_inv * &xty * tau;
        let log_det = q.determinant().ln();
        let quad = tau * yty - (m.transpose() * &q * &m)[0];
        // log-spaced grid: include the Jacobian τ.
        let lp = (prior.precision_shape - 1.0) * tau.ln() - prior.precision_rate * tau + 0.5 * n as f64 * tau.ln()
            - 0.5 * log_det
            - 0.5 * quad
            + tau.ln();
        logs.push(lp);
        parts.push((tau, m, q_inv));
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut mean = [0.0; 3];
    let mut second = [0.0; 3];
    for (wi, (tau, m, q_inv)) in w.iter().zip(&parts) {
        let wi = wi / total;
        for c in 0..2 {
            mean[c] += wi * m[c];
            second[c] += wi * (q_inv[(c, c)] + m[c] * m[c]);
        }
        mean[2] += wi / tau;
        second[2] += wi / (tau * tau);
    }
    let sd = [0, 1, 2].map(|c| (second[c] - mean[c] * mean[c]).sqrt());
    (mean, sd)
}

/// Scalar covariate, outcome missing completely at random for half the
/// units: the chain's outcome-regression posterior matches the exact
/// posterior computed on the observed cases.
pub fn conjugate_posterior() -> Check {
    let n = 120;
    let mut r = rng::stream(44, &[]);
    let mut a = Vec::new();
    let mut y = Vec::new();
    let mut xs = Vec::new();
    let mut observed: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    for i in 0..n {
        let x = normal::draw(&mut r);
        let t = (i % 2) as u8;
        let yy = if t == 1 { -0.5 + 1.5 * x } else { 1.0 + 0.5 * x } + 0.8 * normal::draw(&mut r);
        let seen = (i / 2) % 2 == 0;
        if seen {
            observed[t as usize].0.push(x);
            observed[t as usize].1.push(yy);
        }
        a.push(t);
        y.push(seen.then_some(yy));
        xs.push(vec![Some(x)]);
    }
    let data = ObservedDataset::new(a, y, xs);
    let prior = PriorSpec::new(1);
    let cfg = GibbsConfig {
        iterations: 11_000,
        burn_in: 1000,
        m: 2,
        selection: Selection::Random,
        seed: 45,
    };
    let chain = gibbs_run(&data, &JointModelSpec::mar(1), &prior, &cfg).map_err(|e| e.to_string())?;
    let draws = chain.retained_matrix();
    let retained = draws.nrows() as f64;
    let mut worst: f64 = 0.0;
    for arm in 0..2u8 {
        let (mean, sd) = semi_conjugate_posterior(&observed[arm as usize].0, &observed[arm as usize].1, &prior);
        let beta = chain.layout.beta(arm);
        let cols = [beta.start, beta.start + 1, chain.layout.variance(arm)];
        for (c, &col) in cols.iter().enumerate() {
            let v: Vec<f64> = draws.column(col).iter().copied().collect();
            let (cm, cv) = sample_moments(&v);
            // Allow for autocorrelation with an effective size of a quarter of the draws.
            let z = (cm - mean[c]) / (sd[c] / (retained / 4.0).sqrt());
            ensure(z.abs() < 4.0, || format!("arm {arm} component {c}: chain {cm} vs exact {}", mean[c]))?;
            ensure((cv.sqrt() / sd[c] - 1.0).abs() < 0.1, || {
                format!("arm {arm} component {c}: chain sd {} vs exact {}", cv.sqrt(), sd[c])
            })?;
            worst = worst.max(z.abs());
        }
    }
    Ok(format!("max |z| = {worst:.2} for (beta, sigma^2) in both arms"))
}

/// Fresh imputations of a unit have `ψ` centered at its conditional mean.
pub fn martingale_mean_zero() -> Check {
    let opts = FitOptions {
        cond_draws: 2000,
        ..FitOptions::default()
    };
    let f = fit(&ScenarioSpec::new(Scenario::A, 400), &smooth_kinds(), 46, &opts);
    let incomplete: Vec<usize> = (0..f.observed.n()).filter(|&i| !f.observed.unit_complete(i)).take(5).collect();
    let reps = 200;
    let m = f.imputed.len();
    let mut r = rng::stream(47, &[]);
    let samplers: Vec<ConditionalSampler> = f
        .chain
        .retained
        .iter()
        .step_by(10)
        .map(|theta| ConditionalSampler::new(&f.spec, theta, &f.observed).unwrap())
        .collect();
    let mut worst: f64 = 0.0;
    for &i in &incomplete {
        let a = f.observed.treatment(i) as f64;
        for (k, functional) in f.summary.functionals.iter().enumerate() {
            let cond = f.summary.cond_psi[k][i];
            let mut means = Vec::with_capacity(reps);
            let mut x = vec![0.0; f.observed.p()];
            for _ in 0..reps {
                let mut s = 0.0;
                for _ in 0..m {
                    let sampler = &samplers[r.random_range(0..samplers.len())];
                    let y = sampler.draw_row(&f.observed, i, &mut r, &mut x);
                    s += functional.evaluate_unit(a, &x, y) - cond;
                }
                means.push(s / m as f64);
            }
            let (mean, var) = sample_moments(&means);
            // cond_psi itself carries Monte Carlo error from its L draws.
            let unit_var = var * m as f64;
            let se = (var / reps as f64 + unit_var / opts.cond_draws as f64).sqrt();
            let z = mean / se;
            ensure(z.abs() < 4.0, || format!("unit {i}, {}: z = {z:.2}", f.kinds[k].name()))?;
            worst = worst.max(z.abs());
        }
    }
    Ok(format!("max |z| = {worst:.2} over {} units x 3 estimators", incomplete.len()))
}
