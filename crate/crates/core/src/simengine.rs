//! Finite-sample simulation engine.
//!
//! A large reference dataset stands in for the population. Each replication
//! subsamples it, refits the nuisances and runs every estimator; bias,
//! variance, RMSE and MSE are taken against a reference ATE.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::dgp::{self, BenchmarkConfig, Regime, TruthOracle};
use crate::error::{Error, Result};
use crate::estimators::{estimate_many, estimate_tmle, Estimator, EstimatorConfig};
use crate::generate::{fit_generator, hybrid_generate, GeneratorKind, GeneratorOptions, HybridConfig, OutcomeMode};
use crate::nuisance::{NuisanceOptions, NuisancePair, OutcomeFn, PropensityFn};
use crate::parallel::{map_indexed, Execution};
use crate::rng;

pub const DEFAULT_REFERENCE_SIZE: usize = 50_000;
pub const DEFAULT_REP_SIZE: usize = 1_000;
pub const DEFAULT_REPS: usize = 500;

/// Offset separating per-size replication streams from reference streams.
const SIZE_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SeedData {
    Dgp { regime: Regime, n: usize, seed: u64 },
    File { path: PathBuf },
}

impl SeedData {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            SeedData::Dgp { regime, n, seed } => dgp::sample_dataset(&BenchmarkConfig {
                regime: *regime,
                n: *n,
                seed: *seed,
            }),
            SeedData::File { path } => data::load_table_inferred(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HybridNuisances {
    /// GLMs fitted on the seed data.
    #[default]
    Fitted,
    /// The DGP's true propensity and outcome functions (DGP seeds only).
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Environment {
    /// Reference drawn directly from the benchmark DGP.
    DgpTruth { regime: Regime },
    /// Reference produced by hybrid generation from a seed dataset.
    Hybrid {
        seed_data: SeedData,
        generator: GeneratorKind,
        #[serde(default)]
        generator_options: GeneratorOptions,
        #[serde(default)]
        nuisances: HybridNuisances,
        #[serde(default)]
        outcome_mode: OutcomeMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    TruthOracle,
    LargeSampleTmle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub environment: Environment,
    pub reference_size: usize,
    pub rep_sizes: Vec<usize>,
    pub reps: usize,
    /// `None` picks the truth oracle for `dgp-truth` and large-sample TMLE
    /// for `hybrid`.
    pub reference: Option<ReferenceKind>,
    pub estimators: Vec<Estimator>,
    pub estimator: EstimatorConfig,
    pub nuisance: NuisanceOptions,
    pub seed: u64,
    pub truth_mc_size: usize,
    pub truth_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            environment: Environment::DgpTruth {
                regime: Regime::Randomized,
            },
            reference_size: DEFAULT_REFERENCE_SIZE,
            rep_sizes: vec![DEFAULT_REP_SIZE],
            reps: DEFAULT_REPS,
            reference: None,
            estimators: Estimator::ALL.to_vec(),
            estimator: EstimatorConfig::default(),
            nuisance: NuisanceOptions::default(),
            seed: 1,
            truth_mc_size: dgp::DEFAULT_TRUTH_MC_SIZE,
            truth_seed: dgp::DEFAULT_TRUTH_SEED,
        }
    }
}

impl SimConfig {
    pub fn reference_kind(&self) -> ReferenceKind {
        self.reference.unwrap_or(match self.environment {
            Environment::DgpTruth { .. } => ReferenceKind::TruthOracle,
            Environment::Hybrid { .. } => ReferenceKind::LargeSampleTmle,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::InvalidArgument("reps must be at least 2".into()));
        }
        if self.rep_sizes.is_empty() || self.rep_sizes.contains(&0) {
            return Err(Error::InvalidArgument("replication sizes must be nonempty and positive".into()));
        }
        if self.rep_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("replication sizes must be strictly ascending".into()));
        }
        let max = *self.rep_sizes.last().expect("nonempty");
        if self.reference_size < max {
            return Err(Error::InvalidArgument(format!(
                "reference size {} is smaller than replication size {max}",
                self.reference_size
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("no estimators selected".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub data: Dataset,
    pub psi: f64,
    pub kind: ReferenceKind,
}

fn oracle(regime: Regime, cfg: &SimConfig) -> TruthOracle {
    TruthOracle {
        regime,
        mc_size: cfg.truth_mc_size,
        seed: cfg.truth_seed,
        psi: f64::NAN,
    }
}

pub fn build_reference(cfg: &SimConfig, exec: Execution) -> Result<Reference> {
    if cfg.reference_size == 0 {
        return Err(Error::InvalidArgument("reference size must be at least 1".into()));
    }
    let data = match &cfg.environment {
        Environment::DgpTruth { regime } => dgp::sample_dataset(&BenchmarkConfig {
            regime: *regime,
            n: cfg.reference_size,
            seed: rng::derive_seed(cfg.seed, 0),
        })?,
        Environment::Hybrid {
            seed_data,
            generator,
            generator_options,
            nuisances,
            outcome_mode,
        } => {
            let seed_ds = seed_data.load()?;
            let g = fit_generator(*generator, seed_ds.covariates(), seed_ds.schema().covariates(), generator_options)?;
            let fitted;
            let truth;
            let (prop, out): (&dyn PropensityFn, &dyn OutcomeFn) = match nuisances {
                HybridNuisances::Fitted => {
                    fitted = NuisancePair::fit(&seed_ds, &cfg.nuisance)?;
                    (&fitted.propensity, &fitted.outcome)
                }
                HybridNuisances::Oracle => {
                    let regime = match seed_data {
                        SeedData::Dgp { regime, .. } => *regime,
                        SeedData::File { .. } => {
                            return Err(Error::InvalidArgument("oracle nuisances need a DGP seed".into()))
                        }
                    };
                    truth = oracle(regime, cfg);
                    (&truth, &truth)
                }
            };
            hybrid_generate(&HybridConfig {
                outcome_mode: *outcome_mode,
                generator: &g,
                propensity: prop,
                outcome: out,
                truncation: cfg.nuisance.truncation,
                schema: seed_ds.schema().clone(),
                n: cfg.reference_size,
                seed: rng::derive_seed(cfg.seed, 0),
            })?
        }
    };
    let kind = cfg.reference_kind();
    let psi = match kind {
        ReferenceKind::TruthOracle => dgp::true_ate_with(cfg.truth_mc_size, cfg.truth_seed, exec)?,
        ReferenceKind::LargeSampleTmle => {
            let np = NuisancePair::fit(&data, &cfg.nuisance)?;
            estimate_tmle(&data, &np.outcome, &np.propensity, &cfg.estimator)?.psi
        }
    };
    Ok(Reference { data, psi, kind })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub estimator: Estimator,
    pub bias: f64,
    /// Population variance (denominator = successful replications).
    pub variance: f64,
    pub rmse: f64,
    pub mse: f64,
    pub successes: usize,
    pub failures: usize,
}

impl MetricRow {
    /// Metrics of successful estimates against `psi_ref`.
    pub fn from_estimates(estimator: Estimator, estimates: &[f64], failures: usize, psi_ref: f64) -> Self {
        let m = estimates.len() as f64;
        let errors: Vec<f64> = estimates.iter().map(|x| x - psi_ref).collect();
        let bias = errors.iter().sum::<f64>() / m;
        let variance = errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / m;
        let mse = errors.iter().map(|e| e * e).sum::<f64>() / m;
        MetricRow {
            estimator,
            bias,
            variance,
            rmse: mse.sqrt(),
            mse,
            successes: estimates.len(),
            failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rep_size: usize,
    pub reps: usize,
    pub psi_ref: f64,
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn row(&self, e: Estimator) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.estimator == e)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rep_size,estimator,bias,variance,rmse,mse,successes,failures\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.rep_size,
                r.estimator,
                data::format_value(r.bias),
                data::format_value(r.variance),
                data::format_value(r.rmse),
                data::format_value(r.mse),
                r.successes,
                r.failures
            ));
        }
        s
    }
}

/// Seed for replication `rep` at subsample size `size`.
pub fn replication_seed(seed: u64, size: usize, rep: usize) -> u64 {
    rng::derive_seed(rng::derive_seed(seed, SIZE_STREAM + size as u64), rep as u64)
}

/// Replications at one subsample size. Each replication refits the
/// nuisances on its subsample; failures are counted and excluded.
pub fn run_replications_at(cfg: &SimConfig, reference: &Reference, size: usize, exec: Execution) -> Result<MetricTable> {
    if size == 0 || size > reference.data.n() {
        return Err(Error::InvalidArgument(format!(
            "replication size {size} must be in 1..={}",
            reference.data.n()
        )));
    }
    let per_rep: Vec<Vec<Option<f64>>> = map_indexed(exec, cfg.reps, |r| {
        let Ok(sub) = data::subsample(&reference.data, size, replication_seed(cfg.seed, size, r)) else {
            return vec![None; cfg.estimators.len()];
        };
        match NuisancePair::fit(&sub, &cfg.nuisance) {
            Ok(np) => estimate_many(&sub, &np.outcome, &np.propensity, &cfg.estimators, &cfg.estimator)
                .into_iter()
                .map(|(_, res)| res.ok().map(|e| e.psi).filter(|v| v.is_finite()))
                .collect(),
            Err(_) => vec![None; cfg.estimators.len()],
        }
    });
    let rows = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let ok: Vec<f64> = per_rep.iter().filter_map(|v| v[j]).collect();
            let failures = cfg.reps - ok.len();
            if failures > 0 {
                log::warn!("{e}: {failures} of {} replications failed at n = {size}", cfg.reps);
            }
            MetricRow::from_estimates(e, &ok, failures, reference.psi)
        })
        .collect();
    Ok(MetricTable {
        rep_size: size,
        reps: cfg.reps,
        psi_ref: reference.psi,
        rows,
    })
}

/// Replications at the first configured size.
pub fn run_replications(cfg: &SimConfig, reference: &Reference, exec: Execution) -> Result<MetricTable> {
    cfg.validate()?;
    run_replications_at(cfg, reference, cfg.rep_sizes[0], exec)
}

/// One metric table per configured size, in ascending order.
pub fn sweep(cfg: &SimConfig, reference: &Reference, exec: Execution) -> Result<Vec<MetricTable>> {
    cfg.validate()?;
    cfg.rep_sizes
        .iter()
        .map(|&n| run_replications_at(cfg, reference, n, exec))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub reference_kind: ReferenceKind,
    pub psi_ref: f64,
    pub tables: Vec<MetricTable>,
}

pub fn simulate(cfg: &SimConfig, exec: Execution) -> Result<SimReport> {
    cfg.validate()?;
    let reference = build_reference(cfg, exec)?;
    let tables = sweep(cfg, &reference, exec)?;
    Ok(SimReport {
        config: cfg.clone(),
        reference_kind: reference.kind,
        psi_ref: reference.psi,
        tables,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub estimator: Estimator,
    pub sign_correct: bool,
    pub real_bias: f64,
    pub syn_bias: f64,
    pub real_variance: f64,
    pub syn_variance: f64,
    pub real_rmse: f64,
    pub syn_rmse: f64,
    pub real_mse: f64,
    pub syn_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub rows: Vec<FidelityRow>,
}

impl FidelityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "estimator,sign_correct,real_bias,syn_bias,real_var,syn_var,real_rmse,syn_rmse,real_mse,syn_mse\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.4},{:.4},{:.6},{:.6},{:.4},{:.4},{:.6},{:.6}\n",
                r.estimator,
                if r.sign_correct { "Yes" } else { "No" },
                r.real_bias,
                r.syn_bias,
                r.real_variance,
                r.syn_variance,
                r.real_rmse,
                r.syn_rmse,
                r.real_mse,
                r.syn_mse
            ));
        }
        s
    }
}

/// Bias signs agree, with zero matching either sign.
pub fn same_sign(a: f64, b: f64) -> bool {
    a == 0.0 || b == 0.0 || (a > 0.0) == (b > 0.0)
}

pub fn fidelity_compare(real: &MetricTable, syn: &MetricTable) -> Result<FidelityReport> {
    let mut a: Vec<Estimator> = real.rows.iter().map(|r| r.estimator).collect();
    let mut b: Vec<Estimator> = syn.rows.iter().map(|r| r.estimator).collect();
    a.sort();
    b.sort();
    if a != b {
        return Err(Error::InvalidArgument("real and synthetic tables cover different estimators".into()));
    }
    let rows = real
        .rows
        .iter()
        .map(|r| {
            let s = syn.row(r.estimator).expect("estimator sets match");
            FidelityRow {
                estimator: r.estimator,
                sign_correct: same_sign(r.bias, s.bias),
                real_bias: r.bias,
                syn_bias: s.bias,
                real_variance: r.variance,
                syn_variance: s.variance,
                real_rmse: r.rmse,
                syn_rmse: s.rmse,
                real_mse: r.mse,
                syn_mse: s.mse,
            }
        })
        .collect();
    Ok(FidelityReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(biases: &[(Estimator, f64)]) -> MetricTable {
        MetricTable {
            rep_size: 1000,
            reps: 500,
            psi_ref: 0.4,
            rows: biases
                .iter()
                .map(|&(e, b)| MetricRow {
                    estimator: e,
                    bias: b,
                    variance: 1e-4,
                    rmse: (b * b + 1e-4f64).sqrt(),
                    mse: b * b + 1e-4,
                    successes: 500,
                    failures: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_estimator_has_zero_error() {
        let r = MetricRow::from_estimates(Estimator::Or, &[0.4183; 50], 0, 0.4183);
        assert_eq!((r.bias, r.variance, r.mse), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mse_decomposition() {
        let xs = [0.41, 0.43, 0.39, 0.47, 0.40, 0.44];
        let r = MetricRow::from_estimates(Estimator::Ipw, &xs, 0, 0.4183);
        assert!((r.mse - (r.bias * r.bias + r.variance)).abs() < 1e-12);
        assert_eq!(r.rmse, r.mse.sqrt());
    }

    #[test]
    fn fidelity_signs() {
        let real = table(&[(Estimator::Tmle, 0.0243)]);
        let good = table(&[(Estimator::Tmle, 0.0202)]);
        let bad = table(&[(Estimator::Tmle, -0.0808)]);
        assert!(fidelity_compare(&real, &good).unwrap().rows[0].sign_correct);
        assert!(!fidelity_compare(&real, &bad).unwrap().rows[0].sign_correct);
        let me = fidelity_compare(&real, &real).unwrap();
        assert!(me.rows.iter().all(|r| r.sign_correct && r.real_mse == r.syn_mse));
        let other = table(&[(Estimator::Or, 0.01)]);
        assert!(fidelity_compare(&real, &other).is_err());
        assert!(same_sign(0.0, -1.0));
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::default();
        assert!(c.validate().is_ok());
        c.reps = 1;
        assert!(c.validate().is_err());
        c.reps = 10;
        c.rep_sizes = vec![500, 250];
        assert!(c.validate().is_err());
        c.rep_sizes = vec![100_000];
        assert!(c.validate().is_err());
    }

    #[test]
    fn reference_defaults() {
        let c = SimConfig::default();
        assert_eq!(c.reference_kind(), ReferenceKind::TruthOracle);
    }

    #[test]
    fn small_run_is_execution_invariant() {
        let cfg = SimConfig {
            reference_size: 2_000,
            rep_sizes: vec![200, 400],
            reps: 8,
            truth_mc_size: 50_000,
            ..Default::default()
        };
        let a = simulate(&cfg, Execution::Serial).unwrap();
        let b = simulate(&cfg, Execution::Parallel).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let single = SimConfig {
            rep_sizes: vec![200],
            ..cfg.clone()
        };
        let reference = build_reference(&single, Execution::Serial).unwrap();
        assert_eq!(run_replications(&single, &reference, Execution::Serial).unwrap(), a.tables[0]);
    }
}
