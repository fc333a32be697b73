//! Targeted synthetic pairing for practical positivity problems.
//!
//! Units whose fitted propensity falls below `t = 1 / (sqrt(n) ln n)` (or,
//! in `both` mode, above `1 - t`) are paired with their nearest synthetic
//! covariate rows. Each pair gets the under-represented treatment and an
//! outcome drawn from a chosen source, optionally flipped with probability
//! `rho`. The augmented table is then passed to the usual estimators.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, Standardizer};
use crate::dgp::{self, BenchmarkConfig, Regime, TruthOracle};
use crate::error::{Error, Result};
use crate::estimators::{estimate_many, Estimator, EstimatorConfig, IpwFlavor};
use crate::generate::{fit_generator, GeneratorKind, GeneratorOptions};
use crate::nuisance::{NuisanceOptions, NuisancePair, OutcomeFeatures, OutcomeFn, OutcomeModel, PropensityFn, PropensityModel};
use crate::parallel::{map_indexed, Execution};
use crate::rng;

/// Extreme-propensity threshold `1 / (sqrt(n) ln n)` (natural log).
pub fn extreme_threshold(n: usize) -> Result<f64> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!("threshold needs n >= 8, got {n}")));
    }
    let n = n as f64;
    Ok(1.0 / (n.sqrt() * n.ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TailMode {
    Lower,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// `g < t`: treatment is rare here.
    Lower,
    /// `1 - g < t`: control is rare here.
    Upper,
}

impl Tail {
    /// Treatment assigned to synthetic partners of a unit in this tail.
    pub fn assigned_treatment(self) -> f64 {
        match self {
            Tail::Lower => 1.0,
            Tail::Upper => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeSet {
    pub threshold: f64,
    pub mode: TailMode,
    /// Flagged row indices with the tail each fell into.
    pub flagged: Vec<(usize, Tail)>,
}

impl ExtremeSet {
    pub fn is_empty(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn len(&self) -> usize {
        self.flagged.len()
    }
}

/// Flags extreme-propensity units using untruncated predictions and the
/// threshold for the dataset's size.
pub fn detect_extreme(ds: &Dataset, g: &dyn PropensityFn, mode: TailMode) -> Result<ExtremeSet> {
    Ok(detect_extreme_at(ds, g, mode, extreme_threshold(ds.n())?))
}

pub fn detect_extreme_at(ds: &Dataset, g: &dyn PropensityFn, mode: TailMode, threshold: f64) -> ExtremeSet {
    let flagged = (0..ds.n())
        .filter_map(|i| {
            let p = g.propensity(ds.covariate_row(i));
            if p < threshold {
                Some((i, Tail::Lower))
            } else if mode == TailMode::Both && 1.0 - p < threshold {
                Some((i, Tail::Upper))
            } else {
                None
            }
        })
        .collect();
    ExtremeSet {
        threshold,
        mode,
        flagged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub real_index: usize,
    pub pool_index: usize,
    pub covariates: Vec<f64>,
    pub treatment: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingPlan {
    pub pairs: Vec<Pair>,
    pub k: usize,
    /// Set when the pool ran out before every flagged unit got `k` partners.
    pub exhausted: bool,
}

/// Greedy nearest-neighbour pairing without replacement, in flagged order,
/// on standardized Euclidean distance. Ties go to the lower pool index.
pub fn pair_synthetic(extreme: &ExtremeSet, real: &Dataset, syn_w: &Matrix, k: usize, std: &Standardizer) -> Result<PairingPlan> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if syn_w.ncols() != real.d() {
        return Err(Error::Schema("synthetic pool width does not match the covariate schema".into()));
    }
    let mut plan = PairingPlan {
        pairs: Vec::new(),
        k,
        exhausted: false,
    };
    if extreme.is_empty() {
        return Ok(plan);
    }
    if syn_w.nrows() == 0 {
        return Err(Error::InvalidArgument("synthetic pool is empty".into()));
    }
    let pool = std.apply(syn_w);
    let mut used = vec![false; pool.nrows()];
    let mut x = vec![0.0; real.d()];
    'units: for &(i, tail) in &extreme.flagged {
        std.apply_row(real.covariate_row(i), &mut x);
        let mut d2: Vec<(f64, usize)> = pool
            .rows()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, r)| (x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j))
            .collect();
        d2.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for m in 0..k {
            let Some(&(dist2, j)) = d2.get(m) else {
                plan.exhausted = true;
                break 'units;
            };
            used[j] = true;
            plan.pairs.push(Pair {
                real_index: i,
                pool_index: j,
                covariates: syn_w.row(j).to_vec(),
                treatment: tail.assigned_treatment(),
                distance: dist2.sqrt(),
            });
        }
    }
    if plan.exhausted {
        log::warn!(
            "synthetic pool exhausted: {} pairs for {} flagged units (k = {k})",
            plan.pairs.len(),
            extreme.len()
        );
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeSourceKind {
    Oracle,
    SeedFit,
    ExternalFile,
}

/// Where augmented outcomes come from.
pub enum OutcomeSource<'a> {
    /// A known outcome-probability function, such as the DGP truth.
    Oracle(&'a dyn OutcomeFn),
    /// `Q` fitted on the current seed data only.
    SeedFit(&'a dyn OutcomeFn),
    /// Outcome probabilities (or binary outcomes) listed in pair order.
    External(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRows {
    pub covariates: Matrix,
    pub treatment: Vec<f64>,
    pub outcome: Vec<f64>,
    pub flipped: Vec<bool>,
}

/// Draws `Y ~ Bernoulli(source)` for every pair, then flips each outcome
/// with probability `rho`. Two uniforms are consumed per pair regardless of
/// `rho`, so scenarios sharing a seed share their draws.
pub fn assign_outcomes(plan: &PairingPlan, source: &OutcomeSource, rho: f64, seed: u64) -> Result<AugmentedRows> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("flip rate must lie in [0, 1], got {rho}")));
    }
    if let OutcomeSource::External(v) = source {
        if v.len() < plan.pairs.len() {
            return Err(Error::MissingRows {
                available: v.len(),
                required: plan.pairs.len(),
            });
        }
    }
    let d = plan.pairs.first().map_or(0, |p| p.covariates.len());
    let mut r = rng::stream(seed);
    let mut out = AugmentedRows {
        covariates: Matrix::empty(d),
        treatment: Vec::with_capacity(plan.pairs.len()),
        outcome: Vec::with_capacity(plan.pairs.len()),
        flipped: Vec::with_capacity(plan.pairs.len()),
    };
    for (m, p) in plan.pairs.iter().enumerate() {
        let prob = match source {
            OutcomeSource::Oracle(q) | OutcomeSource::SeedFit(q) => q.mean(p.treatment, &p.covariates),
            OutcomeSource::External(v) => v[m],
        };
        let y = rng::bernoulli(&mut r, prob);
        let flip = rng::uniform(&mut r) < rho;
        out.covariates.push_row(&p.covariates);
        out.treatment.push(p.treatment);
        out.outcome.push(if flip { 1.0 - y } else { y });
        out.flipped.push(flip);
    }
    Ok(out)
}

/// Appends augmented rows; with no rows the original dataset is returned
/// unchanged.
pub fn augment(ds: &Dataset, rows: &AugmentedRows) -> Result<Dataset> {
    ds.append(&rows.covariates, &rows.treatment, &rows.outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioKind {
    Original,
    Pair { source: OutcomeSourceKind, flip: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(flatten)]
    pub kind: ScenarioKind,
}

impl Scenario {
    pub fn original() -> Self {
        Scenario {
            name: "Original".into(),
            kind: ScenarioKind::Original,
        }
    }

    pub fn pair(name: &str, source: OutcomeSourceKind, flip: f64) -> Self {
        Scenario {
            name: name.into(),
            kind: ScenarioKind::Pair { source, flip },
        }
    }

    /// Original, oracle-outcome pairing with 0/5/10/20% flips, and
    /// seed-fit ("self-supervised") pairing.
    pub fn default_grid() -> Vec<Scenario> {
        vec![
            Scenario::original(),
            Scenario::pair("Pair Hybrid", OutcomeSourceKind::Oracle, 0.0),
            Scenario::pair("Pair Hybrid Flip 5%", OutcomeSourceKind::Oracle, 0.05),
            Scenario::pair("Pair Hybrid Flip 10%", OutcomeSourceKind::Oracle, 0.10),
            Scenario::pair("Pair Hybrid Flip 20%", OutcomeSourceKind::Oracle, 0.20),
            Scenario::pair("Pair Self-Supervised", OutcomeSourceKind::SeedFit, 0.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PositivityConfig {
    pub scenarios: Vec<Scenario>,
    pub reps: usize,
    pub seed: u64,
    /// Observational sample size per replication.
    pub n: usize,
    pub k: usize,
    pub tail: TailMode,
    pub pool_generator: GeneratorKind,
    pub pool_size: usize,
    pub generator: GeneratorOptions,
    pub nuisance: NuisanceOptions,
    pub estimator: EstimatorConfig,
    pub estimators: Vec<Estimator>,
    pub truth_mc_size: usize,
    pub truth_seed: u64,
}

impl Default for PositivityConfig {
    fn default() -> Self {
        PositivityConfig {
            scenarios: Scenario::default_grid(),
            reps: 100,
            seed: 2024,
            n: 200,
            k: 1,
            tail: TailMode::Both,
            pool_generator: GeneratorKind::GaussianCopula,
            pool_size: 2000,
            generator: GeneratorOptions::default(),
            nuisance: NuisanceOptions::default(),
            estimator: EstimatorConfig {
                ipw_flavor: IpwFlavor::Hajek,
                ..Default::default()
            },
            estimators: vec![Estimator::Ipw, Estimator::Aipw, Estimator::Or, Estimator::Tmle],
            truth_mc_size: dgp::DEFAULT_TRUTH_MC_SIZE,
            truth_seed: dgp::DEFAULT_TRUTH_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub estimator: Estimator,
    pub mse: f64,
    pub bias: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub cells: Vec<CellSummary>,
    pub mean_flagged: f64,
    pub mean_pairs: f64,
    pub exhausted_reps: usize,
}

impl ScenarioResult {
    pub fn mse(&self, e: Estimator) -> Option<f64> {
        self.cells.iter().find(|c| c.estimator == e).map(|c| c.mse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseTable {
    pub truth: f64,
    pub estimators: Vec<Estimator>,
    pub scenarios: Vec<ScenarioResult>,
}

impl MseTable {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioResult> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    /// `scenario,<estimator>...` with one MSE per cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario");
        for e in &self.estimators {
            s.push(',');
            s.push_str(e.label());
        }
        s.push('\n');
        for row in &self.scenarios {
            s.push_str(&row.name);
            for e in &self.estimators {
                s.push(',');
                match row.mse(*e) {
                    Some(v) if v.is_finite() => s.push_str(&format!("{v:.6}")),
                    _ => s.push_str("NA"),
                }
            }
            s.push('\n');
        }
        s
    }
}

struct RepOutcome {
    /// `[scenario][estimator]` estimate or `None` on failure.
    psi: Vec<Vec<Option<f64>>>,
    flagged: usize,
    pairs: Vec<usize>,
    exhausted: Vec<bool>,
}

fn run_replication(cfg: &PositivityConfig, rep: usize) -> Result<RepOutcome> {
    let base = rng::derive_seed(cfg.seed, rep as u64);
    let ds = dgp::sample_dataset(&BenchmarkConfig {
        regime: Regime::Observational,
        n: cfg.n,
        seed: rng::derive_seed(base, 0),
    })?;
    let oracle = TruthOracle {
        regime: Regime::Observational,
        mc_size: cfg.truth_mc_size,
        seed: cfg.truth_seed,
        psi: f64::NAN,
    };

    let needs_pairs = cfg.scenarios.iter().any(|s| matches!(s.kind, ScenarioKind::Pair { .. }));
    let mut plan = None;
    let mut flagged = 0;
    let mut seed_q = None;
    if needs_pairs {
        let g = PropensityModel::fit(&ds, &cfg.nuisance.glm)?;
        let extreme = detect_extreme(&ds, &g, cfg.tail)?;
        flagged = extreme.len();
        let generator = fit_generator(cfg.pool_generator, ds.covariates(), ds.schema().covariates(), &cfg.generator)?;
        let pool = generator.sample(cfg.pool_size, rng::derive_seed(base, 1))?;
        let std = Standardizer::fit(&ds);
        plan = Some(pair_synthetic(&extreme, &ds, &pool, cfg.k, &std)?);
        if cfg.scenarios.iter().any(|s| matches!(s.kind, ScenarioKind::Pair { source: OutcomeSourceKind::SeedFit, .. })) {
            seed_q = Some(OutcomeModel::fit(&ds, OutcomeFeatures::MainEffects, &cfg.nuisance.glm)?);
        }
    }

    let mut out = RepOutcome {
        psi: Vec::with_capacity(cfg.scenarios.len()),
        flagged,
        pairs: Vec::new(),
        exhausted: Vec::new(),
    };
    for sc in &cfg.scenarios {
        let data = match &sc.kind {
            ScenarioKind::Original => {
                out.pairs.push(0);
                out.exhausted.push(false);
                ds.clone()
            }
            ScenarioKind::Pair { source, flip } => {
                let plan = plan.as_ref().expect("plan built when pair scenarios exist");
                let src = match source {
                    OutcomeSourceKind::Oracle => OutcomeSource::Oracle(&oracle),
                    OutcomeSourceKind::SeedFit => OutcomeSource::SeedFit(seed_q.as_ref().expect("seed fit built")),
                    OutcomeSourceKind::ExternalFile => {
                        return Err(Error::InvalidArgument(format!(
                            "scenario `{}`: external-file outcomes are not available inside the replication grid",
                            sc.name
                        )))
                    }
                };
                // common random numbers across pairing scenarios
                let rows = assign_outcomes(plan, &src, *flip, rng::derive_seed(base, 2))?;
                out.pairs.push(plan.pairs.len());
                out.exhausted.push(plan.exhausted);
                augment(&ds, &rows)?
            }
        };
        let psi = match NuisancePair::fit(&data, &cfg.nuisance) {
            Ok(np) => estimate_many(&data, &np.outcome, &np.propensity, &cfg.estimators, &cfg.estimator)
                .into_iter()
                .map(|(_, r)| r.ok().map(|e| e.psi).filter(|v| v.is_finite()))
                .collect(),
            Err(_) => vec![None; cfg.estimators.len()],
        };
        out.psi.push(psi);
    }
    Ok(out)
}

/// Runs every scenario on `reps` independent observational datasets and
/// reports the MSE of each estimator against the true ATE.
pub fn run_positivity_experiment(cfg: &PositivityConfig, exec: Execution) -> Result<MseTable> {
    if cfg.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if cfg.scenarios.is_empty() || cfg.estimators.is_empty() {
        return Err(Error::InvalidArgument("need at least one scenario and one estimator".into()));
    }
    extreme_threshold(cfg.n)?;
    let truth = dgp::true_ate_with(cfg.truth_mc_size, cfg.truth_seed, exec)?;
    let reps = map_indexed(exec, cfg.reps, |r| run_replication(cfg, r));
    let reps: Vec<RepOutcome> = reps.into_iter().collect::<Result<_>>()?;

    let scenarios = cfg
        .scenarios
        .iter()
        .enumerate()
        .map(|(s, sc)| {
            let cells = cfg
                .estimators
                .iter()
                .enumerate()
                .map(|(e, &est)| {
                    let errs: Vec<f64> = reps.iter().filter_map(|r| r.psi[s][e]).map(|p| p - truth).collect();
                    let m = errs.len() as f64;
                    CellSummary {
                        estimator: est,
                        mse: errs.iter().map(|x| x * x).sum::<f64>() / m,
                        bias: errs.iter().sum::<f64>() / m,
                        successes: errs.len(),
                        failures: cfg.reps - errs.len(),
                    }
                })
                .collect();
            ScenarioResult {
                name: sc.name.clone(),
                cells,
                mean_flagged: reps.iter().map(|r| r.flagged as f64).sum::<f64>() / cfg.reps as f64,
                mean_pairs: reps.iter().map(|r| r.pairs[s] as f64).sum::<f64>() / cfg.reps as f64,
                exhausted_reps: reps.iter().filter(|r| r.exhausted[s]).count(),
            }
        })
        .collect();
    Ok(MseTable {
        truth,
        estimators: cfg.estimators.clone(),
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Kind, Schema};
    use crate::nuisance::{OutcomeClosure, PropensityClosure};

    fn line(xs: &[f64]) -> Dataset {
        let s = Schema::new(vec![
            Column::covariate("X", Kind::Continuous),
            Column::treatment("A"),
            Column::outcome("Y", Kind::Binary),
        ])
        .unwrap();
        let n = xs.len();
        Dataset::new(s, Matrix::from_rows(&xs.iter().map(|&x| [x]).collect::<Vec<_>>(), 1).unwrap(), vec![0.0; n], vec![0.0; n]).unwrap()
    }

    #[test]
    fn threshold_values() {
        assert!((extreme_threshold(200).unwrap() - 0.013346).abs() < 1e-6);
        assert!((extreme_threshold(1000).unwrap() - 0.004578).abs() < 1e-6);
        assert!(extreme_threshold(7).is_err());
        let mut prev = extreme_threshold(8).unwrap();
        assert!(prev < 0.5);
        for n in (9..1_000_000).step_by(997) {
            let t = extreme_threshold(n).unwrap();
            assert!(t < prev);
            prev = t;
        }
    }

    #[test]
    fn interior_propensities_flag_nothing() {
        let ds = line(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let g = PropensityClosure(|_: &[f64]| 0.5);
        assert!(detect_extreme(&ds, &g, TailMode::Both).unwrap().is_empty());
    }

    #[test]
    fn upper_tail_only_in_both_mode() {
        let ds = line(&[0.0, 1.0]);
        let g = PropensityClosure(|w: &[f64]| if w[0] == 0.0 { 0.999 } else { 0.5 });
        let both = detect_extreme_at(&ds, &g, TailMode::Both, 0.0133);
        assert_eq!(both.flagged, vec![(0, Tail::Upper)]);
        assert!(detect_extreme_at(&ds, &g, TailMode::Lower, 0.0133).is_empty());
    }

    fn flagged(ix: &[(usize, Tail)]) -> ExtremeSet {
        ExtremeSet {
            threshold: 0.01,
            mode: TailMode::Both,
            flagged: ix.to_vec(),
        }
    }

    #[test]
    fn exact_copy_is_nearest() {
        let ds = line(&[0.0, 5.0]);
        let pool = Matrix::from_rows(&[[3.0], [5.0], [9.0]], 1).unwrap();
        let std = Standardizer::fit(&ds);
        let plan = pair_synthetic(&flagged(&[(1, Tail::Lower)]), &ds, &pool, 1, &std).unwrap();
        assert_eq!(plan.pairs[0].pool_index, 1);
        assert_eq!(plan.pairs[0].distance, 0.0);
        assert_eq!(plan.pairs[0].treatment, 1.0);
    }

    #[test]
    fn empty_flag_set_is_noop() {
        let ds = line(&[0.0, 5.0]);
        let pool = Matrix::from_rows(&[[3.0]], 1).unwrap();
        let plan = pair_synthetic(&flagged(&[]), &ds, &pool, 1, &Standardizer::fit(&ds)).unwrap();
        assert!(plan.pairs.is_empty());
        let q = OutcomeClosure(|_: f64, _: &[f64]| 0.5);
        let rows = assign_outcomes(&plan, &OutcomeSource::Oracle(&q), 0.0, 1).unwrap();
        assert_eq!(augment(&ds, &rows).unwrap(), ds);
    }

    #[test]
    fn pool_exhaustion() {
        let ds = line(&[0.0, 5.0]);
        let pool = Matrix::from_rows(&[[3.0]], 1).unwrap();
        let plan = pair_synthetic(&flagged(&[(0, Tail::Upper)]), &ds, &pool, 2, &Standardizer::fit(&ds)).unwrap();
        assert_eq!(plan.pairs.len(), 1);
        assert!(plan.exhausted);
        assert_eq!(plan.pairs[0].treatment, 0.0);
    }

    fn plan_of(m: usize) -> PairingPlan {
        PairingPlan {
            pairs: (0..m)
                .map(|i| Pair {
                    real_index: 0,
                    pool_index: i,
                    covariates: vec![i as f64],
                    treatment: 1.0,
                    distance: 0.0,
                })
                .collect(),
            k: 1,
            exhausted: false,
        }
    }

    #[test]
    fn flips() {
        let plan = plan_of(10_000);
        let q = OutcomeClosure(|_: f64, w: &[f64]| if w[0] as usize % 3 == 0 { 1.0 } else { 0.0 });
        let base = assign_outcomes(&plan, &OutcomeSource::Oracle(&q), 0.0, 4).unwrap();
        assert!(base.outcome.iter().enumerate().all(|(i, &y)| y == if i % 3 == 0 { 1.0 } else { 0.0 }));
        let all = assign_outcomes(&plan, &OutcomeSource::Oracle(&q), 1.0, 4).unwrap();
        assert!(all.outcome.iter().zip(&base.outcome).all(|(a, b)| a + b == 1.0));
        let some = assign_outcomes(&plan, &OutcomeSource::Oracle(&q), 0.10, 4).unwrap();
        let frac = some.flipped.iter().filter(|&&f| f).count() as f64 / 10_000.0;
        assert!((frac - 0.10).abs() < 0.01, "{frac}");
    }

    #[test]
    fn external_source_needs_enough_rows() {
        let plan = plan_of(3);
        let err = assign_outcomes(&plan, &OutcomeSource::External(&[1.0, 0.0]), 0.0, 1).unwrap_err();
        assert!(matches!(err, Error::MissingRows { available: 2, required: 3 }));
        let ok = assign_outcomes(&plan, &OutcomeSource::External(&[1.0, 0.0, 1.0]), 0.0, 1).unwrap();
        assert_eq!(ok.outcome, vec![1.0, 0.0, 1.0]);
    }
}
