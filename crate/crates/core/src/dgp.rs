//! Six-covariate benchmark data-generating process with a Monte Carlo
//! truth oracle.
//!
//! ```text
//! W1, W2 ~ Bernoulli(0.5)
//! W3 | W1, W2 ~ Bernoulli(0.3 + 0.35 (W1 + W2) / 2)
//! W4, W5 ~ N(0, 1),  W6 = 0.5 W4 + 0.5 W5 + e,  e ~ N(0, 1)
//! P(A = 1 | W) = expit(-30 + 16 W1 - 24 W2 + 12 W3 + 6 W4 - 10 W5 + 16 W6)
//! tau(W) = 2 + 0.5 sin W1 + 0.3 ln(|W2| + 1) - 0.2 W3^2 + 0.1 exp W4
//!          - 0.3 tanh W5 + 0.2 cos W6
//! P(Y = 1 | A, W) = expit(-0.5 + tau(W) A + 0.5 W1 + W2 - W3 + 0.2 W4
//!                         - 0.3 W5 + 0.1 W6)
//! ```
//!
//! The randomized regime replaces the treatment rule by `A ~ Bernoulli(0.5)`.
//! Each row consumes, in order: three uniforms (W1..W3), three normals
//! (W4, W5, e; two uniforms each), one uniform for A and one for Y.

use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset, Kind, Matrix, Schema};
use crate::error::{Error, Result};
use crate::nuisance::{expit, OutcomeFn, PropensityFn};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{self, StreamRng};

pub const COVARIATES: usize = 6;

/// Monte Carlo chunk size for truth computations; fixed so that results do
/// not depend on the execution policy.
const MC_CHUNK: usize = 1 << 16;

pub const DEFAULT_TRUTH_MC_SIZE: usize = 1_000_000;
pub const DEFAULT_TRUTH_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Randomized,
    Observational,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "randomized" => Ok(Regime::Randomized),
            "observational" => Ok(Regime::Observational),
            other => Err(Error::InvalidArgument(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub regime: Regime,
    pub n: usize,
    pub seed: u64,
}

pub fn schema() -> Schema {
    Schema::new(vec![
        Column::covariate("W1", Kind::Binary),
        Column::covariate("W2", Kind::Binary),
        Column::covariate("W3", Kind::Binary),
        Column::covariate("W4", Kind::Continuous),
        Column::covariate("W5", Kind::Continuous),
        Column::covariate("W6", Kind::Continuous),
        Column::treatment("A"),
        Column::outcome("Y", Kind::Binary),
    ])
    .expect("static schema is valid")
}

/// P(W3 = 1 | W1, W2).
pub fn w3_probability(w1: f64, w2: f64) -> f64 {
    0.3 + 0.35 * (w1 + w2) / 2.0
}

pub fn sample_covariates(rng: &mut StreamRng) -> [f64; COVARIATES] {
    let w1 = rng::bernoulli(rng, 0.5);
    let w2 = rng::bernoulli(rng, 0.5);
    let w3 = rng::bernoulli(rng, w3_probability(w1, w2));
    let w4 = rng::standard_normal(rng);
    let w5 = rng::standard_normal(rng);
    let w6 = 0.5 * w4 + 0.5 * w5 + rng::standard_normal(rng);
    [w1, w2, w3, w4, w5, w6]
}

/// Observational propensity P(A = 1 | W).
pub fn propensity(w: &[f64]) -> f64 {
    expit(-30.0 + 16.0 * w[0] - 24.0 * w[1] + 12.0 * w[2] + 6.0 * w[3] - 10.0 * w[4] + 16.0 * w[5])
}

/// Treatment effect on the log-odds scale.
pub fn log_odds_effect(w: &[f64]) -> f64 {
    2.0 + 0.5 * w[0].sin() + 0.3 * (w[1].abs() + 1.0).ln() - 0.2 * w[2] * w[2] + 0.1 * w[3].exp()
        - 0.3 * w[4].tanh()
        + 0.2 * w[5].cos()
}

fn outcome_probability_with(a: f64, w: &[f64], effect: f64) -> f64 {
    expit(-0.5 + effect * a + 0.5 * w[0] + w[1] - w[2] + 0.2 * w[3] - 0.3 * w[4] + 0.1 * w[5])
}

/// P(Y = 1 | A = a, W = w).
pub fn outcome_probability(a: f64, w: &[f64]) -> f64 {
    outcome_probability_with(a, w, log_odds_effect(w))
}

/// Conditional contrast Q0(1, w) - Q0(0, w).
pub fn contrast(w: &[f64]) -> f64 {
    outcome_probability(1.0, w) - outcome_probability(0.0, w)
}

pub fn sample_covariate_matrix(n: usize, seed: u64) -> Matrix {
    let mut r = rng::stream(seed);
    let mut m = Matrix::empty(COVARIATES);
    for _ in 0..n {
        m.push_row(&sample_covariates(&mut r));
    }
    m
}

pub fn sample_dataset(cfg: &BenchmarkConfig) -> Result<Dataset> {
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut r = rng::stream(cfg.seed);
    let mut w = Matrix::empty(COVARIATES);
    let mut a = Vec::with_capacity(cfg.n);
    let mut y = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let row = sample_covariates(&mut r);
        let p = match cfg.regime {
            Regime::Randomized => 0.5,
            Regime::Observational => propensity(&row),
        };
        let ai = rng::bernoulli(&mut r, p);
        let yi = rng::bernoulli(&mut r, outcome_probability(ai, &row));
        w.push_row(&row);
        a.push(ai);
        y.push(yi);
    }
    Dataset::new(schema(), w, a, y)
}

/// Monte Carlo mean of `f(W)` over `mc_size` covariate draws.
pub fn covariate_mean<F>(mc_size: usize, seed: u64, exec: Execution, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let chunks = mc_size.div_ceil(MC_CHUNK);
    let sums = map_indexed(exec, chunks, |c| {
        let len = MC_CHUNK.min(mc_size - c * MC_CHUNK);
        let mut r = rng::stream(rng::derive_seed(seed, c as u64));
        let mut s = 0.0;
        for _ in 0..len {
            s += f(&sample_covariates(&mut r));
        }
        s
    });
    sums.iter().sum::<f64>() / mc_size as f64
}

/// Monte Carlo ATE with a substitute log-odds effect function.
pub fn monte_carlo_ate_with<F>(mc_size: usize, seed: u64, exec: Execution, effect: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    covariate_mean(mc_size, seed, exec, |w| {
        let t = effect(w);
        outcome_probability_with(1.0, w, t) - outcome_probability_with(0.0, w, t)
    })
}

/// True ATE: mean of Q0(1, W) - Q0(0, W) over `mc_size` covariate draws.
pub fn true_ate(mc_size: usize, seed: u64) -> Result<f64> {
    true_ate_with(mc_size, seed, Execution::default())
}

pub fn true_ate_with(mc_size: usize, seed: u64, exec: Execution) -> Result<f64> {
    if mc_size == 0 {
        return Err(Error::InvalidArgument("mc_size must be at least 1".into()));
    }
    Ok(monte_carlo_ate_with(mc_size, seed, exec, log_odds_effect))
}

/// The DGP's true nuisance functions and ATE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthOracle {
    pub regime: Regime,
    pub mc_size: usize,
    pub seed: u64,
    pub psi: f64,
}

impl TruthOracle {
    pub fn new(regime: Regime, mc_size: usize, seed: u64, exec: Execution) -> Result<Self> {
        Ok(TruthOracle {
            regime,
            mc_size,
            seed,
            psi: true_ate_with(mc_size, seed, exec)?,
        })
    }

    pub fn default_for(regime: Regime) -> Result<Self> {
        Self::new(regime, DEFAULT_TRUTH_MC_SIZE, DEFAULT_TRUTH_SEED, Execution::default())
    }

    pub fn log_odds_effect(&self, w: &[f64]) -> f64 {
        log_odds_effect(w)
    }
}

impl PropensityFn for TruthOracle {
    fn propensity(&self, w: &[f64]) -> f64 {
        match self.regime {
            Regime::Randomized => 0.5,
            Regime::Observational => propensity(w),
        }
    }
}

impl OutcomeFn for TruthOracle {
    fn mean(&self, a: f64, w: &[f64]) -> f64 {
        outcome_probability(a, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w3_formula() {
        assert!((w3_probability(1.0, 1.0) - 0.65).abs() < 1e-15);
        assert!((w3_probability(0.0, 0.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn propensity_at_origin() {
        // expit(-30) = 1 / (1 + e^30)
        let expected = 1.0 / (1.0 + 30f64.exp());
        let g = propensity(&[0.0; 6]);
        assert!((g - expected).abs() < 1e-25);
        assert!((g - 9.357_622_968_839e-14).abs() < 1e-24);
    }

    #[test]
    fn effect_by_hand() {
        assert!((log_odds_effect(&[0.0; 6]) - 2.3).abs() < 1e-15);
        let w = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!((log_odds_effect(&w) - (2.3 + 0.5 * 1f64.sin())).abs() < 1e-15);
        assert!((log_odds_effect(&w) - 2.7207).abs() < 1e-4);
    }

    #[test]
    fn null_effect_gives_zero_ate() {
        let psi = monte_carlo_ate_with(10_000, 3, Execution::Serial, |_| 0.0);
        assert_eq!(psi, 0.0);
    }

    #[test]
    fn truth_is_deterministic_across_execution() {
        let a = true_ate_with(200_000, 11, Execution::Serial).unwrap();
        let b = true_ate_with(200_000, 11, Execution::Parallel).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(true_ate(0, 1).is_err());
    }

    #[test]
    fn randomized_treatment_fraction() {
        let ds = sample_dataset(&BenchmarkConfig {
            regime: Regime::Randomized,
            n: 100_000,
            seed: 5,
        })
        .unwrap();
        let frac = ds.treatment().iter().sum::<f64>() / ds.n() as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn observational_regime_has_practical_positivity_problem() {
        let w = sample_covariate_matrix(10_000, 8);
        let low = w.rows().filter(|r| propensity(r) < 0.013).count();
        assert!(low > 0);
    }

    #[test]
    fn dataset_is_seed_deterministic() {
        let cfg = BenchmarkConfig {
            regime: Regime::Observational,
            n: 50,
            seed: 42,
        };
        assert_eq!(sample_dataset(&cfg).unwrap(), sample_dataset(&cfg).unwrap());
        assert!(sample_dataset(&BenchmarkConfig { n: 0, ..cfg }).is_err());
    }
}
