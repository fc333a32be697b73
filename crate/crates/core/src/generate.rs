//! Covariate generators, hybrid generation and a fully joint baseline.
//!
//! Hybrid generation samples covariates from a fitted generator, then draws
//! the treatment from a (truncated) propensity model and the outcome from an
//! outcome model. The fully joint baseline instead treats `(W, A, Y)` as
//! plain columns of a single generator.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{self, Column, Dataset, Kind, Matrix, Schema, Standardizer};
use crate::error::{Error, Result};
use crate::nuisance::{NuisancePair, OutcomeFn, PropensityFn, Truncation};
use crate::rng::{self, StreamRng};

pub const DEFAULT_JITTER_SIGMA: f64 = 0.1;

/// Smallest eigenvalue kept when repairing a copula correlation matrix.
const PD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    BootstrapJitter,
    #[default]
    GaussianCopula,
    IndependentMarginals,
    ExternalFile,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap-jitter" => Ok(GeneratorKind::BootstrapJitter),
            "gaussian-copula" => Ok(GeneratorKind::GaussianCopula),
            "independent-marginals" => Ok(GeneratorKind::IndependentMarginals),
            "external-file" => Ok(GeneratorKind::ExternalFile),
            other => Err(Error::InvalidArgument(format!("unknown generator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorOptions {
    /// Jitter standard deviation in units of each continuous column's sd.
    pub jitter_sigma: f64,
    /// Covariate table read by the external-file generator.
    pub external_path: Option<PathBuf>,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        GeneratorOptions {
            jitter_sigma: DEFAULT_JITTER_SIGMA,
            external_path: None,
        }
    }
}

/// Gaussian copula with empirical marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCopula {
    /// Sorted values per column.
    marginals: Vec<Vec<f64>>,
    kinds: Vec<Kind>,
    correlation: DMatrix<f64>,
    cholesky: DMatrix<f64>,
    repaired: bool,
}

impl GaussianCopula {
    pub fn fit(x: &Matrix, kinds: &[Kind]) -> Result<Self> {
        let n = x.nrows();
        let k = x.ncols();
        if n == 0 {
            return Err(Error::InvalidArgument("cannot fit a copula on zero rows".into()));
        }
        let normal = std_normal();
        let mut scores = DMatrix::<f64>::zeros(n, k);
        let mut marginals = Vec::with_capacity(k);
        for j in 0..k {
            let col: Vec<f64> = x.column(j).collect();
            for (i, r) in midranks(&col).into_iter().enumerate() {
                scores[(i, j)] = normal.inverse_cdf(r / (n as f64 + 1.0));
            }
            let mut sorted = col;
            sorted.sort_by(f64::total_cmp);
            marginals.push(sorted);
        }
        let correlation = normal_score_correlation(&scores);
        let (cholesky, repaired) = match correlation.clone().cholesky() {
            Some(ch) => (ch.l(), false),
            None => {
                let fixed = nearest_correlation(&correlation);
                let ch = fixed.clone().cholesky().ok_or_else(|| {
                    Error::InvalidArgument("copula correlation could not be repaired".into())
                })?;
                log::warn!("copula correlation matrix was not positive definite; eigenvalues clipped at {PD_FLOOR}");
                (ch.l(), true)
            }
        };
        Ok(GaussianCopula {
            marginals,
            kinds: kinds.to_vec(),
            correlation,
            cholesky,
            repaired,
        })
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    /// Whether the normal-score correlation needed a positive-definite repair.
    pub fn repaired(&self) -> bool {
        self.repaired
    }

    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> Matrix {
        let k = self.marginals.len();
        let normal = std_normal();
        let mut out = Matrix::empty(k);
        let mut z = vec![0.0; k];
        let mut row = vec![0.0; k];
        for _ in 0..n {
            for v in z.iter_mut() {
                *v = rng::standard_normal(rng);
            }
            for j in 0..k {
                let x: f64 = (0..=j).map(|l| self.cholesky[(j, l)] * z[l]).sum();
                let u = normal.cdf(x);
                row[j] = match self.kinds[j] {
                    Kind::Binary => step_quantile(&self.marginals[j], u),
                    Kind::Continuous => interpolated_quantile(&self.marginals[j], u),
                };
            }
            out.push_row(&row);
        }
        out
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

/// Ranks 1..=n with ties given their average rank.
fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of the score columns; a constant column is treated
/// as uncorrelated with everything.
fn normal_score_correlation(s: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = s.shape();
    let means: Vec<f64> = (0..k).map(|j| s.column(j).sum() / n as f64).collect();
    let mut c = DMatrix::<f64>::identity(k, k);
    let sd: Vec<f64> = (0..k)
        .map(|j| s.column(j).iter().map(|x| (x - means[j]).powi(2)).sum::<f64>().sqrt())
        .collect();
    for a in 0..k {
        for b in (a + 1)..k {
            if sd[a] == 0.0 || sd[b] == 0.0 {
                continue;
            }
            let cov: f64 = (0..n).map(|i| (s[(i, a)] - means[a]) * (s[(i, b)] - means[b])).sum();
            let r = (cov / (sd[a] * sd[b])).clamp(-1.0, 1.0);
            c[(a, b)] = r;
            c[(b, a)] = r;
        }
    }
    c
}

/// Eigenvalue clipping followed by rescaling to unit diagonal.
pub fn nearest_correlation(c: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(c.clone());
    let clipped = eig.eigenvalues.map(|l| l.max(PD_FLOOR));
    let m = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let k = m.nrows();
    DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            m[(i, j)] / (m[(i, i)] * m[(j, j)]).sqrt()
        }
    })
}

/// Inverse empirical CDF (left-continuous step function).
fn step_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let i = ((u * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[i]
}

/// Linear interpolation between order statistics.
fn interpolated_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = u.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fitted covariate generator. Immutable; sampling is a pure function of
/// `(n, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateGenerator {
    BootstrapJitter {
        columns: Vec<Column>,
        pool: Matrix,
        sigma: f64,
        scales: Vec<f64>,
    },
    GaussianCopula {
        columns: Vec<Column>,
        copula: GaussianCopula,
    },
    IndependentMarginals {
        columns: Vec<Column>,
        pool: Matrix,
    },
    ExternalFile {
        columns: Vec<Column>,
        path: PathBuf,
        rows: Matrix,
    },
}

pub fn fit_generator(
    kind: GeneratorKind,
    seed_covariates: &Matrix,
    columns: &[Column],
    opts: &GeneratorOptions,
) -> Result<CovariateGenerator> {
    if seed_covariates.ncols() != columns.len() {
        return Err(Error::Schema(format!(
            "{} covariate columns but {} column descriptors",
            seed_covariates.ncols(),
            columns.len()
        )));
    }
    if kind != GeneratorKind::ExternalFile && seed_covariates.nrows() == 0 {
        return Err(Error::InvalidArgument("seed covariates are empty".into()));
    }
    let kinds: Vec<Kind> = columns.iter().map(|c| c.kind).collect();
    let columns = columns.to_vec();
    Ok(match kind {
        GeneratorKind::BootstrapJitter => {
            if !(opts.jitter_sigma >= 0.0) || !opts.jitter_sigma.is_finite() {
                return Err(Error::InvalidArgument("jitter sigma must be finite and nonnegative".into()));
            }
            CovariateGenerator::BootstrapJitter {
                scales: Standardizer::fit_matrix(seed_covariates, &kinds).scales,
                columns,
                pool: seed_covariates.clone(),
                sigma: opts.jitter_sigma,
            }
        }
        GeneratorKind::GaussianCopula => CovariateGenerator::GaussianCopula {
            copula: GaussianCopula::fit(seed_covariates, &kinds)?,
            columns,
        },
        GeneratorKind::IndependentMarginals => CovariateGenerator::IndependentMarginals {
            columns,
            pool: seed_covariates.clone(),
        },
        GeneratorKind::ExternalFile => {
            let path = opts
                .external_path
                .clone()
                .ok_or_else(|| Error::InvalidArgument("external-file generator needs a path".into()))?;
            external_generator(&path, &columns)?
        }
    })
}

fn external_generator(path: &Path, columns: &[Column]) -> Result<CovariateGenerator> {
    let rows = data::load_covariates(path, columns)?;
    Ok(CovariateGenerator::ExternalFile {
        columns: columns.to_vec(),
        path: path.to_path_buf(),
        rows,
    })
}

impl CovariateGenerator {
    pub fn kind(&self) -> GeneratorKind {
        match self {
            CovariateGenerator::BootstrapJitter { .. } => GeneratorKind::BootstrapJitter,
            CovariateGenerator::GaussianCopula { .. } => GeneratorKind::GaussianCopula,
            CovariateGenerator::IndependentMarginals { .. } => GeneratorKind::IndependentMarginals,
            CovariateGenerator::ExternalFile { .. } => GeneratorKind::ExternalFile,
        }
    }

    pub fn columns(&self) -> &[Column] {
        match self {
            CovariateGenerator::BootstrapJitter { columns, .. }
            | CovariateGenerator::GaussianCopula { columns, .. }
            | CovariateGenerator::IndependentMarginals { columns, .. }
            | CovariateGenerator::ExternalFile { columns, .. } => columns,
        }
    }

    /// Draws `n` covariate rows. The external-file generator returns the
    /// first `n` rows of its table.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Matrix> {
        let mut r = rng::stream(seed);
        Ok(match self {
            CovariateGenerator::BootstrapJitter {
                columns,
                pool,
                sigma,
                scales,
            } => {
                let mut out = Matrix::empty(columns.len());
                let mut row = vec![0.0; columns.len()];
                for _ in 0..n {
                    let i = r.random_range(0..pool.nrows());
                    row.copy_from_slice(pool.row(i));
                    if *sigma > 0.0 {
                        for (j, c) in columns.iter().enumerate() {
                            if c.kind == Kind::Continuous {
                                row[j] += sigma * scales[j] * rng::standard_normal(&mut r);
                            }
                        }
                    }
                    out.push_row(&row);
                }
                out
            }
            CovariateGenerator::GaussianCopula { copula, .. } => copula.sample(n, &mut r),
            CovariateGenerator::IndependentMarginals { columns, pool } => {
                let mut out = Matrix::empty(columns.len());
                let mut row = vec![0.0; columns.len()];
                for _ in 0..n {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = pool.row(r.random_range(0..pool.nrows()))[j];
                    }
                    out.push_row(&row);
                }
                out
            }
            CovariateGenerator::ExternalFile { rows, .. } => {
                if rows.nrows() < n {
                    return Err(Error::MissingRows {
                        available: rows.nrows(),
                        required: n,
                    });
                }
                rows.select_rows(&(0..n).collect::<Vec<_>>())
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeMode {
    /// Draw `Y ~ Bernoulli(Q)` (binary) or `Q + N(0, sd^2)` (continuous).
    #[default]
    Sample,
    /// Store `Q(A, W)` itself; the outcome column becomes continuous.
    Expected,
}

pub struct HybridConfig<'a> {
    pub outcome_mode: OutcomeMode,
    pub generator: &'a CovariateGenerator,
    pub propensity: &'a dyn PropensityFn,
    pub outcome: &'a dyn OutcomeFn,
    pub truncation: Truncation,
    /// Schema of the seed data the nuisances were fitted on.
    pub schema: Schema,
    pub n: usize,
    pub seed: u64,
}

impl<'a> HybridConfig<'a> {
    pub fn from_pair(
        generator: &'a CovariateGenerator,
        pair: &'a NuisancePair,
        schema: Schema,
        n: usize,
        seed: u64,
    ) -> Self {
        HybridConfig {
            outcome_mode: OutcomeMode::Sample,
            generator,
            propensity: &pair.propensity,
            outcome: &pair.outcome,
            truncation: pair.truncation,
            schema,
            n,
            seed,
        }
    }
}

/// Hybrid synthetic data: `W ~ generator`, `A ~ Bernoulli(trunc g(W))`,
/// `Y` from `Q(A, W)` per the outcome mode.
///
/// Covariates use the stream `derive_seed(seed, 0)`; treatment and outcome
/// draws use `derive_seed(seed, 1)`, one uniform (or normal) each per row.
pub fn hybrid_generate(cfg: &HybridConfig) -> Result<Dataset> {
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if cfg.generator.columns() != cfg.schema.covariates() {
        return Err(Error::Schema("generator columns do not match the nuisance schema".into()));
    }
    let w = cfg.generator.sample(cfg.n, rng::derive_seed(cfg.seed, 0))?;
    let mut r = rng::stream(rng::derive_seed(cfg.seed, 1));
    let binary = cfg.schema.outcome().kind == Kind::Binary;
    let mut a = Vec::with_capacity(cfg.n);
    let mut y = Vec::with_capacity(cfg.n);
    for row in w.rows() {
        let ai = rng::bernoulli(&mut r, cfg.truncation.apply(cfg.propensity.propensity(row)));
        let q = cfg.outcome.mean(ai, row);
        let yi = match (cfg.outcome_mode, binary) {
            (OutcomeMode::Expected, _) => q,
            (OutcomeMode::Sample, true) => rng::bernoulli(&mut r, q),
            (OutcomeMode::Sample, false) => q + cfg.outcome.residual_sd() * rng::standard_normal(&mut r),
        };
        a.push(ai);
        y.push(yi);
    }
    let schema = match cfg.outcome_mode {
        OutcomeMode::Expected => cfg.schema.with_outcome_kind(Kind::Continuous),
        OutcomeMode::Sample => cfg.schema.clone(),
    };
    Dataset::new(schema, w, a, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointKind {
    IndependentMarginalsJoint,
    GaussianCopulaJoint,
}

impl std::str::FromStr for JointKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent-marginals-joint" | "independent-marginals" => Ok(JointKind::IndependentMarginalsJoint),
            "gaussian-copula-joint" | "gaussian-copula" => Ok(JointKind::GaussianCopulaJoint),
            other => Err(Error::InvalidArgument(format!("unknown joint generator `{other}`"))),
        }
    }
}

/// Fully joint baseline: all `d + 2` columns come from one generator.
/// Binary treatment and outcome columns are thresholded at 0.5.
pub fn full_generate(kind: JointKind, seed_ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let schema = seed_ds.schema().clone();
    let joint = seed_ds.to_joint_matrix();
    let columns: Vec<Column> = schema
        .columns()
        .iter()
        .map(|c| Column::covariate(c.name.clone(), c.kind))
        .collect();
    let gk = match kind {
        JointKind::IndependentMarginalsJoint => GeneratorKind::IndependentMarginals,
        JointKind::GaussianCopulaJoint => GeneratorKind::GaussianCopula,
    };
    let g = fit_generator(gk, &joint, &columns, &GeneratorOptions::default())?;
    let mut m = g.sample(n, seed)?;
    let d = schema.d();
    let binary_y = schema.outcome().kind == Kind::Binary;
    let mut rows: Vec<Vec<f64>> = m.rows().map(|r| r.to_vec()).collect();
    for r in rows.iter_mut() {
        r[d] = if r[d] >= 0.5 { 1.0 } else { 0.0 };
        if binary_y {
            r[d + 1] = if r[d + 1] >= 0.5 { 1.0 } else { 0.0 };
        }
    }
    m = Matrix::from_rows(&rows, d + 2)?;
    Dataset::from_joint_matrix(schema, &m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{self, BenchmarkConfig, Regime};

    fn corr(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    }

    fn seed_ds(n: usize, seed: u64) -> Dataset {
        dgp::sample_dataset(&BenchmarkConfig {
            regime: Regime::Randomized,
            n,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn zero_jitter_returns_pool_rows() {
        let ds = seed_ds(50, 1);
        let opts = GeneratorOptions {
            jitter_sigma: 0.0,
            ..Default::default()
        };
        let g = fit_generator(GeneratorKind::BootstrapJitter, ds.covariates(), ds.schema().covariates(), &opts).unwrap();
        let s = g.sample(200, 3).unwrap();
        for r in s.rows() {
            assert!(ds.covariates().rows().any(|p| p == r));
        }
    }

    #[test]
    fn independent_marginals_break_dependence() {
        let cols = vec![Column::covariate("X", Kind::Binary), Column::covariate("Z", Kind::Binary)];
        let rows: Vec<[f64; 2]> = (0..100).map(|i| [(i % 2) as f64, (i % 2) as f64]).collect();
        let m = Matrix::from_rows(&rows, 2).unwrap();
        let g = fit_generator(GeneratorKind::IndependentMarginals, &m, &cols, &GeneratorOptions::default()).unwrap();
        let s = g.sample(10_000, 9).unwrap();
        let x: Vec<f64> = s.column(0).collect();
        let z: Vec<f64> = s.column(1).collect();
        assert!(corr(&x, &z).abs() < 0.03);
    }

    #[test]
    fn copula_preserves_correlation() {
        let ds = seed_ds(10_000, 4);
        let g = fit_generator(GeneratorKind::GaussianCopula, ds.covariates(), ds.schema().covariates(), &GeneratorOptions::default())
            .unwrap();
        let s = g.sample(10_000, 5).unwrap();
        let seed_r = corr(&ds.covariates().column(3).collect::<Vec<_>>(), &ds.covariates().column(5).collect::<Vec<_>>());
        let syn_r = corr(&s.column(3).collect::<Vec<_>>(), &s.column(5).collect::<Vec<_>>());
        assert!((seed_r - syn_r).abs() < 0.05, "{seed_r} vs {syn_r}");
        assert!(s.column(0).all(|v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn repairs_non_pd_correlation() {
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        assert!(c.clone().cholesky().is_none());
        let f = nearest_correlation(&c);
        assert!(f.clone().cholesky().is_some());
        for i in 0..3 {
            assert!((f[(i, i)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_helpers() {
        let s = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(step_quantile(&s, 0.0), 0.0);
        assert_eq!(step_quantile(&s, 0.5), 0.0);
        assert_eq!(step_quantile(&s, 0.51), 1.0);
        assert_eq!(interpolated_quantile(&[1.0, 3.0], 0.5), 2.0);
        assert_eq!(midranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn oracle_hybrid_reproduces_estimand() {
        let seed = seed_ds(2_000, 6);
        let opts = GeneratorOptions {
            jitter_sigma: 0.0,
            ..Default::default()
        };
        let g = fit_generator(GeneratorKind::BootstrapJitter, seed.covariates(), seed.schema().covariates(), &opts).unwrap();
        let oracle = dgp::TruthOracle {
            regime: Regime::Randomized,
            mc_size: 0,
            seed: 0,
            psi: f64::NAN,
        };
        let cfg = HybridConfig {
            outcome_mode: OutcomeMode::Expected,
            generator: &g,
            propensity: &oracle,
            outcome: &oracle,
            truncation: Truncation::default(),
            schema: seed.schema().clone(),
            n: 500,
            seed: 1,
        };
        let ds = hybrid_generate(&cfg).unwrap();
        assert!(!ds.outcome_is_binary());
        assert!(ds.outcome().iter().all(|&q| q > 0.0 && q < 1.0));
        assert!(hybrid_generate(&HybridConfig { n: 0, ..cfg }).is_err());
    }

    #[test]
    fn full_generate_is_deterministic_and_binary() {
        let ds = seed_ds(300, 2);
        let a = full_generate(JointKind::GaussianCopulaJoint, &ds, 400, 8).unwrap();
        let b = full_generate(JointKind::GaussianCopulaJoint, &ds, 400, 8).unwrap();
        assert_eq!(a, b);
        assert!(a.treatment().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}
