use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::normal;

/// Multiplier distribution with mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    Mammen,
    Rademacher,
    Normal,
    Multinomial,
}

impl WeightScheme {
    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::Mammen => "mammen",
            WeightScheme::Rademacher => "rademacher",
            WeightScheme::Normal => "normal",
            WeightScheme::Multinomial => "multinomial",
        }
    }
}

impl std::str::FromStr for WeightScheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mammen" => Ok(WeightScheme::Mammen),
            "rademacher" => Ok(WeightScheme::Rademacher),
            "normal" => Ok(WeightScheme::Normal),
            "multinomial" => Ok(WeightScheme::Multinomial),
            other => Err(crate::Error::Config(format!("unknown weight scheme '{other}'"))),
        }
    }
}

pub(crate) const MAMMEN_LOW: f64 = -0.618_033_988_749_894_9;
pub(crate) const MAMMEN_HIGH: f64 = 1.618_033_988_749_895;
/// `P(u = (1 − √5)/2) = (1 + 5^{-1/2})/2`.
pub(crate) const MAMMEN_P_LOW: f64 = 0.723_606_797_749_979;

/// `count` i.i.d. weights. Multinomial weights are `W − W̄` rescaled to
/// unit variance, with `W ~ Multinomial(count; 1/count, …)`; they sum to
/// zero.
pub fn draw_weights<R: Rng + ?Sized>(scheme: WeightScheme, count: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; count];
    fill_weights(scheme, rng, &mut out);
    out
}

pub(crate) fn fill_weights<R: Rng + ?Sized>(scheme: WeightScheme, rng: &mut R, out: &mut [f64]) {
    match scheme {
        WeightScheme::Mammen => out.iter_mut().for_each(|u| {
            *u = if rng.random::<f64>() < MAMMEN_P_LOW {
                MAMMEN_LOW
            } else {
                MAMMEN_HIGH
            }
        }),
        WeightScheme::Rademacher => out.iter_mut().for_each(|u| *u = if rng.random::<bool>() { 1.0 } else { -1.0 }),
        WeightScheme::Normal => out.iter_mut().for_each(|u| *u = normal::draw(rng)),
        WeightScheme::Multinomial => {
            let n = out.len();
            out.fill(0.0);
            for _ in 0..n {
                out[rng.random_range(0..n)] += 1.0;
            }
            if n > 1 {
                // W̄ = 1 exactly; Var(W_k) = 1 − 1/n.
                let scale = (n as f64 / (n as f64 - 1.0)).sqrt();
                out.iter_mut().for_each(|u| *u = (*u - 1.0) * scale);
            } else {
                out.fill(0.0);
            }
        }
    }
}
