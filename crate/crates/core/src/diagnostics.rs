//! Data-quality diagnostics (DCR, TSTR) and executable checks of the
//! sensitivity bound, the joint-loss tradeoff and the overlap decomposition.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, Standardizer};
use crate::error::{Error, Result};
use crate::nuisance::{auc, GlmOptions, OutcomeClosure, OutcomeFeatures, OutcomeFn, OutcomeModel};
use crate::rng;
use crate::parallel::{map_indexed, Execution};

/// Probabilities entering a KL divergence are clamped to `[KL_CLAMP, 1 - KL_CLAMP]`.
pub const KL_CLAMP: f64 = 1e-9;

/// Tolerance on densities summing to one.
pub const DENSITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcrReport {
    pub distances: Vec<f64>,
    pub mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub metric: String,
    pub standardizer: Standardizer,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Distance from every synthetic row to its nearest real row, on
/// standardized covariates (exact brute-force scan).
pub fn dcr(real: &Dataset, synthetic: &Dataset, std: &Standardizer, exec: Execution) -> Result<DcrReport> {
    if !real.schema().same_covariates(synthetic.schema()) {
        return Err(Error::Schema("real and synthetic covariate schemas differ".into()));
    }
    dcr_matrix(real.covariates(), synthetic.covariates(), std, exec)
}

pub fn dcr_matrix(real: &Matrix, synthetic: &Matrix, std: &Standardizer, exec: Execution) -> Result<DcrReport> {
    if real.nrows() == 0 || synthetic.nrows() == 0 {
        return Err(Error::InvalidArgument("DCR needs nonempty real and synthetic tables".into()));
    }
    if real.ncols() != synthetic.ncols() || std.kinds.len() != real.ncols() {
        return Err(Error::Schema("DCR inputs have mismatched widths".into()));
    }
    let r = std.apply(real);
    let s = std.apply(synthetic);
    let distances = map_indexed(exec, s.nrows(), |i| {
        let x = s.row(i);
        r.rows()
            .map(|y| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    });
    let mut sorted = distances.clone();
    sorted.sort_by(f64::total_cmp);
    // summing in sorted order keeps the mean independent of row order
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(DcrReport {
        q05: quantile_sorted(&sorted, 0.05),
        q50: quantile_sorted(&sorted, 0.50),
        q95: quantile_sorted(&sorted, 0.95),
        mean,
        distances,
        metric: "standardized-euclidean".into(),
        standardizer: std.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TstrOptions {
    pub glm: GlmOptions,
    pub features: OutcomeFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstrReport {
    pub auc: f64,
    pub classifier: String,
    pub n_train: usize,
    pub n_test: usize,
}

/// Train-on-synthetic, test-on-real: a logistic GLM on `(A, W)` fitted to
/// the synthetic rows, scored by AUC on the real test rows.
pub fn tstr(synthetic: &Dataset, real_test: &Dataset, opts: &TstrOptions) -> Result<TstrReport> {
    if !synthetic.outcome_is_binary() || !real_test.outcome_is_binary() {
        return Err(Error::InvalidArgument("TSTR needs a binary outcome in both datasets".into()));
    }
    if !synthetic.schema().same_covariates(real_test.schema()) {
        return Err(Error::Schema("synthetic and test covariate schemas differ".into()));
    }
    let y = synthetic.outcome();
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::SingleClass);
    }
    let model = OutcomeModel::fit(synthetic, opts.features, &opts.glm)?;
    let scores: Vec<f64> = (0..real_test.n())
        .map(|i| model.mean(real_test.treatment()[i], real_test.covariate_row(i)))
        .collect();
    Ok(TstrReport {
        auc: auc(&scores, real_test.outcome())?,
        classifier: format!("logistic glm ({:?} features, lambda {})", opts.features, opts.glm.lambda),
        n_train: synthetic.n(),
        n_test: real_test.n(),
    })
}

/// Both sides of the ATE sensitivity bound on a finite support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub covariate_term: f64,
    pub contrast_term: f64,
}

impl BoundReport {
    pub fn rhs(&self) -> f64 {
        self.covariate_term + self.contrast_term
    }
}

fn check_density(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > DENSITY_TOLERANCE {
        return Err(Error::InvalidArgument(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// `|sum p delta - sum p* delta*| <= ||p - p*||_2 + ||delta - delta*||_{L2(p*)}`
/// on a `k`-point support.
///
/// Densities are taken with respect to the uniform probability measure on
/// the support (mass `1/k` per point), so the density of `p` at point `i`
/// is `k p_i` and `||p - p*||_2 = sqrt(k sum (p_i - p*_i)^2)`. Contrasts must
/// lie in `[-1, 1]`.
pub fn ate_sensitivity_check(p: &[f64], p_star: &[f64], delta: &[f64], delta_star: &[f64]) -> Result<BoundReport> {
    let k = p.len();
    if k == 0 || p_star.len() != k || delta.len() != k || delta_star.len() != k {
        return Err(Error::InvalidArgument("support arrays must be nonempty and equally long".into()));
    }
    check_density(p, "p")?;
    check_density(p_star, "p_star")?;
    if delta.iter().chain(delta_star).any(|d| !(d.abs() <= 1.0)) {
        return Err(Error::InvalidArgument("contrasts must lie in [-1, 1]".into()));
    }
    let psi: f64 = p.iter().zip(delta).map(|(a, b)| a * b).sum();
    let psi_star: f64 = p_star.iter().zip(delta_star).map(|(a, b)| a * b).sum();
    let covariate_term = (k as f64 * p.iter().zip(p_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sqrt();
    let contrast_term = p_star
        .iter()
        .zip(delta.iter().zip(delta_star))
        .map(|(w, (a, b))| w * (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let report = BoundReport {
        lhs: (psi - psi_star).abs(),
        covariate_term,
        contrast_term,
    };
    if report.lhs > report.rhs() + 1e-12 {
        return Err(Error::BoundViolated(format!(
            "lhs {} exceeds rhs {}",
            report.lhs,
            report.rhs()
        )));
    }
    Ok(report)
}

/// Joint loss split into its covariate and outcome parts over `d + 1`
/// conditionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossDecomposition {
    pub l_joint: f64,
    pub l_w: f64,
    pub l_y: f64,
    pub d: usize,
}

impl LossDecomposition {
    pub fn new(l_w: f64, l_y: f64, d: usize) -> Result<Self> {
        if !(l_w >= 0.0) || !(l_y >= 0.0) {
            return Err(Error::InvalidArgument("losses must be nonnegative".into()));
        }
        Ok(LossDecomposition {
            l_joint: l_w + l_y / (d as f64 + 1.0),
            l_w,
            l_y,
            d,
        })
    }
}

/// `L_Y(f) - L_Y(g) = (d + 1) [L_joint(f) - L_joint(g) + L_W(g) - L_W(f)]`.
pub fn joint_loss_identity(l_joint_f: f64, l_joint_g: f64, l_w_f: f64, l_w_g: f64, d: usize) -> f64 {
    (d as f64 + 1.0) * (l_joint_f - l_joint_g + l_w_g - l_w_f)
}

/// `KL(Bernoulli(p) || Bernoulli(q))` with clamping.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let p = p.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
    let q = q.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

/// Balanced Bernoulli KL outcome loss: the average over `w_sample` of
/// `sum_a KL(Q*(a, w) || Q_f(a, w))`.
pub fn balanced_kl_loss(qf: &dyn OutcomeFn, qstar: &dyn OutcomeFn, w_sample: &Matrix) -> f64 {
    let n = w_sample.nrows() as f64;
    w_sample
        .rows()
        .map(|w| bernoulli_kl(qstar.mean(1.0, w), qf.mean(1.0, w)) + bernoulli_kl(qstar.mean(0.0, w), qf.mean(0.0, w)))
        .sum::<f64>()
        / n
}

/// Upper bound `2 sqrt(L_Y)` on the L2 contrast error.
pub fn pinsker_contrast_bound(l_y: f64) -> Result<f64> {
    if !(l_y >= 0.0) {
        return Err(Error::InvalidArgument(format!("L_Y must be nonnegative, got {l_y}")));
    }
    Ok(2.0 * l_y.sqrt())
}

/// Empirical `||Delta_f - Delta*||` in L2 over `w_sample`.
pub fn contrast_l2(qf: &dyn OutcomeFn, qstar: &dyn OutcomeFn, w_sample: &Matrix) -> f64 {
    let n = w_sample.nrows() as f64;
    (w_sample
        .rows()
        .map(|w| {
            let df = qf.mean(1.0, w) - qf.mean(0.0, w);
            let ds = qstar.mean(1.0, w) - qstar.mean(0.0, w);
            (df - ds).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapDecomposition {
    /// `int (tau_orig - tau0) d mu0`
    pub original_error: f64,
    /// `int (tau_aug - tau0) d mu_aug`
    pub conditional_term: f64,
    /// `int tau0 d(mu_aug - mu0)`
    pub shift_term: f64,
    /// `conditional_term + shift_term`
    pub augmented_error: f64,
    pub improves: bool,
    pub se_original: f64,
    pub se_conditional: f64,
    pub se_shift: f64,
    /// Standard error of `augmented_error` as one difference of means.
    pub se_augmented: f64,
}

/// Monte Carlo mean and its standard error.
pub fn mean_se(v: impl ExactSizeIterator<Item = f64>) -> (f64, f64) {
    let n = v.len() as f64;
    let xs: Vec<f64> = v.collect();
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Splits the augmented-estimator error into a conditional-effect term and
/// a covariate-shift term; `improves` is `|augmented| < |original|`.
pub fn overlap_decomposition<T0, T1, T2>(
    tau0: T0,
    tau_orig: T1,
    tau_aug: T2,
    mu0_sample: &Matrix,
    mu_aug_sample: &Matrix,
) -> Result<OverlapDecomposition>
where
    T0: Fn(&[f64]) -> f64,
    T1: Fn(&[f64]) -> f64,
    T2: Fn(&[f64]) -> f64,
{
    if mu0_sample.nrows() == 0 || mu_aug_sample.nrows() == 0 {
        return Err(Error::InvalidArgument("covariate samples must be nonempty".into()));
    }
    let (original_error, se_original) = mean_se(mu0_sample.rows().map(|w| tau_orig(w) - tau0(w)));
    let (conditional_term, se_conditional) = mean_se(mu_aug_sample.rows().map(|w| tau_aug(w) - tau0(w)));
    let (t_aug, se_a) = mean_se(mu_aug_sample.rows().map(&tau0));
    let (t_0, se_0) = mean_se(mu0_sample.rows().map(&tau0));
    let shift_term = t_aug - t_0;
    let (_, se_ta) = mean_se(mu_aug_sample.rows().map(&tau_aug));
    let augmented_error = conditional_term + shift_term;
    Ok(OverlapDecomposition {
        original_error,
        conditional_term,
        shift_term,
        augmented_error,
        improves: augmented_error.abs() < original_error.abs(),
        se_original,
        se_conditional,
        se_shift: (se_a * se_a + se_0 * se_0).sqrt(),
        se_augmented: (se_ta * se_ta + se_0 * se_0).sqrt(),
    })
}

/// Summary of randomized checks of the sensitivity bound, the joint-loss
/// identity and the Pinsker contrast bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub seed: u64,
    pub instances: usize,
    pub bound_violations: usize,
    pub bound_max_ratio: f64,
    pub identity_max_deviation: f64,
    pub pinsker_violations: usize,
    pub pinsker_max_ratio: f64,
}

impl TheoryReport {
    pub fn passed(&self, identity_tol: f64) -> bool {
        self.bound_violations == 0 && self.pinsker_violations == 0 && self.identity_max_deviation <= identity_tol
    }
}

fn random_simplex(r: &mut impl Rng, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k)
        .map(|_| if r.random_bool(0.1) { 0.0 } else { -(1.0 - r.random::<f64>()).ln() })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Runs `instances` random cases of each check. Pinsker pairs use tables of
/// outcome probabilities on a 10-point covariate support.
pub fn check_theory(seed: u64, instances: usize) -> Result<TheoryReport> {
    if instances == 0 {
        return Err(Error::InvalidArgument("instances must be at least 1".into()));
    }
    let mut r = rng::stream(seed);
    let mut report = TheoryReport {
        seed,
        instances,
        bound_violations: 0,
        bound_max_ratio: 0.0,
        identity_max_deviation: 0.0,
        pinsker_violations: 0,
        pinsker_max_ratio: 0.0,
    };
    for _ in 0..instances {
        let k = r.random_range(2..=5);
        let p = random_simplex(&mut r, k);
        let ps = random_simplex(&mut r, k);
        let delta: Vec<f64> = (0..k).map(|_| r.random::<f64>() - r.random::<f64>()).collect();
        let delta_s: Vec<f64> = (0..k).map(|_| r.random::<f64>() - r.random::<f64>()).collect();
        match ate_sensitivity_check(&p, &ps, &delta, &delta_s) {
            Ok(b) if b.rhs() > 0.0 => report.bound_max_ratio = report.bound_max_ratio.max(b.lhs / b.rhs()),
            Ok(_) => {}
            Err(Error::BoundViolated(_)) => report.bound_violations += 1,
            Err(e) => return Err(e),
        }
    }
    for _ in 0..instances {
        let d = r.random_range(1..=20);
        let f = LossDecomposition::new(r.random::<f64>() * 5.0, r.random::<f64>() * 5.0, d)?;
        let g = LossDecomposition::new(r.random::<f64>() * 5.0, r.random::<f64>() * 5.0, d)?;
        let rhs = joint_loss_identity(f.l_joint, g.l_joint, f.l_w, g.l_w, d);
        report.identity_max_deviation = report.identity_max_deviation.max((rhs - (f.l_y - g.l_y)).abs());
    }
    let support = Matrix::from_rows(&(0..10).map(|i| [i as f64]).collect::<Vec<_>>(), 1)?;
    for _ in 0..instances {
        let tf: Vec<[f64; 2]> = (0..10).map(|_| [r.random::<f64>(), r.random::<f64>()]).collect();
        let ts: Vec<[f64; 2]> = (0..10).map(|_| [r.random::<f64>(), r.random::<f64>()]).collect();
        let qf = OutcomeClosure(|a: f64, w: &[f64]| tf[w[0] as usize][a as usize]);
        let qs = OutcomeClosure(|a: f64, w: &[f64]| ts[w[0] as usize][a as usize]);
        let bound = pinsker_contrast_bound(balanced_kl_loss(&qf, &qs, &support))?;
        let err = contrast_l2(&qf, &qs, &support);
        if err > bound {
            report.pinsker_violations += 1;
        }
        if bound > 0.0 {
            report.pinsker_max_ratio = report.pinsker_max_ratio.max(err / bound);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Kind, Schema};
    use crate::nuisance::OutcomeClosure;

    fn two_col(rows: &[[f64; 2]]) -> Dataset {
        let s = Schema::new(vec![
            Column::covariate("X1", Kind::Continuous),
            Column::covariate("X2", Kind::Continuous),
            Column::treatment("A"),
            Column::outcome("Y", Kind::Binary),
        ])
        .unwrap();
        let n = rows.len();
        Dataset::new(
            s,
            Matrix::from_rows(rows, 2).unwrap(),
            (0..n).map(|i| (i % 2) as f64).collect(),
            (0..n).map(|i| ((i / 2) % 2) as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn dcr_pythagorean() {
        let real = two_col(&[[0.0, 0.0]]);
        let syn = two_col(&[[3.0, 4.0]]);
        let std = Standardizer::identity(&[Kind::Continuous, Kind::Continuous]);
        let r = dcr(&real, &syn, &std, Execution::Serial).unwrap();
        assert_eq!(r.distances, vec![5.0]);
        assert_eq!(r.mean, 5.0);
    }

    #[test]
    fn dcr_of_copy_is_zero() {
        let real = two_col(&[[0.0, 1.0], [2.0, 3.0], [5.0, -1.0]]);
        let std = Standardizer::fit(&real);
        let r = dcr(&real, &real, &std, Execution::Parallel).unwrap();
        assert!(r.distances.iter().all(|&d| d == 0.0));
        assert_eq!(r.mean, 0.0);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert!((quantile_sorted(&s, 0.95) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_two_point() {
        let r = ate_sensitivity_check(&[0.5, 0.5], &[0.5, 0.5], &[0.2, 0.4], &[0.1, 0.4]).unwrap();
        assert!((r.lhs - 0.05).abs() < 1e-15);
        assert_eq!(r.covariate_term, 0.0);
        assert!((r.rhs() - 0.005f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sensitivity_identical_worlds() {
        let r = ate_sensitivity_check(&[0.2, 0.8], &[0.2, 0.8], &[0.3, -0.1], &[0.3, -0.1]).unwrap();
        assert_eq!((r.lhs, r.rhs()), (0.0, 0.0));
    }

    #[test]
    fn sensitivity_far_apart_supports() {
        // point masses at opposite ends of the support
        let r = ate_sensitivity_check(&[1.0, 0.0], &[0.0, 1.0], &[1.0, -1.0], &[1.0, -1.0]).unwrap();
        assert_eq!(r.lhs, 2.0);
        assert!(r.rhs() >= 2.0);
    }

    #[test]
    fn sensitivity_rejects_bad_density() {
        assert!(ate_sensitivity_check(&[0.5, 0.6], &[0.5, 0.5], &[0.0, 0.0], &[0.0, 0.0]).is_err());
        assert!(ate_sensitivity_check(&[0.5, 0.5], &[0.5, 0.5], &[2.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn loss_identity_worked_example() {
        let v = joint_loss_identity(1.0, 0.8, 0.9, 0.75, 6);
        assert!((v - 0.35).abs() < 1e-12);
        let f = LossDecomposition::new(0.9, 0.7, 6).unwrap();
        assert!((f.l_joint - 1.0).abs() < 1e-12);
        assert_eq!(joint_loss_identity(0.4, 0.4, 0.3, 0.3, 3), 0.0);
    }

    #[test]
    fn bernoulli_kl_closed_form() {
        assert!((bernoulli_kl(0.5, 0.9) - 0.5 * (25.0f64 / 9.0).ln()).abs() < 1e-12);
        assert!((bernoulli_kl(0.5, 0.9) - 0.5108).abs() < 1e-4);
        assert_eq!(bernoulli_kl(0.3, 0.3), 0.0);
        assert!(bernoulli_kl(1.0, 0.0).is_finite());
    }

    #[test]
    fn perfect_model_has_zero_loss() {
        let q = OutcomeClosure(|a: f64, w: &[f64]| 0.2 + 0.3 * a + 0.1 * w[0]);
        let w = Matrix::from_rows(&[[0.0], [1.0], [2.0]], 1).unwrap();
        assert_eq!(balanced_kl_loss(&q, &q, &w), 0.0);
        assert_eq!(contrast_l2(&q, &q, &w), 0.0);
        assert_eq!(pinsker_contrast_bound(0.0).unwrap(), 0.0);
    }

    #[test]
    fn overlap_noop_and_perfect() {
        let w = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]], 1).unwrap();
        let tau0 = |w: &[f64]| 0.1 * w[0];
        let tau_orig = |w: &[f64]| 0.1 * w[0] + 0.05;
        let r = overlap_decomposition(tau0, tau_orig, tau_orig, &w, &w).unwrap();
        assert_eq!(r.shift_term, 0.0);
        assert!((r.augmented_error - r.original_error).abs() < 1e-15);

        let w2 = Matrix::from_rows(&[[1.0], [2.0]], 1).unwrap();
        let r = overlap_decomposition(tau0, tau_orig, tau0, &w, &w2).unwrap();
        assert_eq!(r.conditional_term, 0.0);
        assert_eq!(r.augmented_error, r.shift_term);
    }

    #[test]
    fn theory_checks_pass_and_are_seeded() {
        let a = check_theory(5, 300).unwrap();
        assert!(a.passed(1e-12));
        assert_eq!(a, check_theory(5, 300).unwrap());
        assert!(check_theory(5, 0).is_err());
    }
}
