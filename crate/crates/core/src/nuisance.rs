//! Nuisance models: propensity `g(a | w)` and outcome regression `Q(a, w)`.
//!
//! Both are generalized linear models with a ridge penalty on the
//! non-intercept coefficients. Logistic fits use iteratively reweighted
//! least squares (Newton) with step halving, so the penalized objective never
//! increases; linear fits solve the penalized normal equations directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Kind, Matrix};
use crate::error::{Error, Result};

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// A fitted propensity function `w -> P(A = 1 | W = w)`.
pub trait PropensityFn: Sync {
    fn propensity(&self, w: &[f64]) -> f64;
}

/// A fitted outcome regression `(a, w) -> E[Y | A = a, W = w]`.
pub trait OutcomeFn: Sync {
    fn mean(&self, a: f64, w: &[f64]) -> f64;

    /// Whether the mean is a probability of a binary outcome.
    fn binary(&self) -> bool {
        true
    }

    /// Residual standard deviation for continuous outcomes.
    fn residual_sd(&self) -> f64 {
        0.0
    }
}

/// Propensity given by a closure.
pub struct PropensityClosure<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> PropensityFn for PropensityClosure<F> {
    fn propensity(&self, w: &[f64]) -> f64 {
        (self.0)(w)
    }
}

/// Binary-outcome regression given by a closure.
pub struct OutcomeClosure<F>(pub F);

impl<F: Fn(f64, &[f64]) -> f64 + Sync> OutcomeFn for OutcomeClosure<F> {
    fn mean(&self, a: f64, w: &[f64]) -> f64 {
        (self.0)(a, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logistic,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlmOptions {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            lambda: 1e-4,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Glm {
    pub family: Family,
    pub lambda: f64,
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub feature_names: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    /// Residual sd for the linear family (n - p denominator), 0 otherwise.
    pub residual_sd: f64,
    /// Penalized objective after each iteration, starting at the initial point.
    #[serde(skip)]
    pub objective_path: Vec<f64>,
}

impl Glm {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.family {
            Family::Logistic => expit(self.linear_predictor(x)),
            Family::Linear => self.linear_predictor(x),
        }
    }

    /// Penalized negative log-likelihood (logistic) or half penalized RSS
    /// (linear) at the current coefficients.
    pub fn objective(&self, x: &Matrix, y: &[f64]) -> f64 {
        objective(self.family, &self.coefficients, self.lambda, x, y)
    }

    /// Gradient of the penalized log-likelihood; zero at the optimum.
    pub fn penalized_score(&self, x: &Matrix, y: &[f64]) -> Vec<f64> {
        let p = self.coefficients.len();
        let mut s = vec![0.0; p];
        for (row, &yi) in x.rows().zip(y) {
            let r = yi - self.predict(row);
            s[0] += r;
            for j in 0..row.len() {
                s[j + 1] += r * row[j];
            }
        }
        for j in 1..p {
            s[j] -= self.lambda * self.coefficients[j];
        }
        s
    }
}

fn objective(family: Family, beta: &[f64], lambda: f64, x: &Matrix, y: &[f64]) -> f64 {
    let lin = |row: &[f64]| beta[0] + beta[1..].iter().zip(row).map(|(b, v)| b * v).sum::<f64>();
    let data: f64 = match family {
        Family::Logistic => x
            .rows()
            .zip(y)
            .map(|(r, &yi)| {
                let eta = lin(r);
                softplus(eta) - yi * eta
            })
            .sum(),
        Family::Linear => x.rows().zip(y).map(|(r, &yi)| 0.5 * (yi - lin(r)).powi(2)).sum(),
    };
    data + 0.5 * lambda * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

fn design(x: &Matrix) -> DMatrix<f64> {
    let n = x.nrows();
    let p = x.ncols() + 1;
    DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x.row(i)[j - 1] })
}

fn ridge(p: usize, lambda: f64) -> DMatrix<f64> {
    let mut m = DMatrix::identity(p, p) * lambda;
    m[(0, 0)] = 0.0;
    m
}

fn solve_spd(h: DMatrix<f64>, rhs: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        // Cholesky can succeed on a numerically singular matrix; a tiny
        // pivot relative to the diagonal scale means collinear columns.
        let l = ch.l_dirty();
        let min_pivot = (0..h.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        let scale = (0..h.nrows()).map(|i| h[(i, i)]).fold(0.0, f64::max);
        if lambda > 0.0 || min_pivot > 1e-10 * scale {
            return Ok(ch.solve(rhs));
        }
        return Err(Error::RankDeficient);
    }
    if lambda == 0.0 {
        return Err(Error::RankDeficient);
    }
    // Saturated IRLS weights can make a penalized Hessian numerically
    // singular; a trace-scaled jitter restores definiteness.
    let p = h.nrows();
    let jitter = 1e-10 * (h.trace() / p as f64).max(1e-300);
    (h + DMatrix::identity(p, p) * jitter)
        .cholesky()
        .map(|ch| ch.solve(rhs))
        .ok_or(Error::RankDeficient)
}

/// Fits a GLM with ridge penalty `lambda` on non-intercept coefficients.
pub fn fit_glm(x: &Matrix, y: &[f64], family: Family, opts: &GlmOptions, feature_names: Vec<String>) -> Result<Glm> {
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::InvalidArgument(format!("{n} feature rows but {} responses", y.len())));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("cannot fit a model on zero rows".into()));
    }
    if opts.lambda < 0.0 || !opts.lambda.is_finite() {
        return Err(Error::InvalidArgument("ridge penalty must be finite and nonnegative".into()));
    }
    let names = if feature_names.len() == x.ncols() {
        feature_names
    } else {
        (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect()
    };
    match family {
        Family::Logistic => {
            if let Some(&bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::NonBinaryResponse(bad));
            }
            fit_logistic(x, y, opts, names)
        }
        Family::Linear => fit_linear(x, y, opts, names),
    }
}

fn fit_linear(x: &Matrix, y: &[f64], opts: &GlmOptions, names: Vec<String>) -> Result<Glm> {
    let xd = design(x);
    let p = xd.ncols();
    let yv = DVector::from_column_slice(y);
    let h = xd.transpose() * &xd + ridge(p, opts.lambda);
    let beta = solve_spd(h, &(xd.transpose() * &yv), opts.lambda)?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let resid = &yv - &xd * &beta;
    let rss = resid.norm_squared();
    let n = y.len();
    let dof = if n > p { n - p } else { n };
    let obj = objective(Family::Linear, &coefficients, opts.lambda, x, y);
    Ok(Glm {
        family: Family::Linear,
        lambda: opts.lambda,
        coefficients,
        feature_names: names,
        converged: true,
        iterations: 1,
        residual_sd: (rss / dof as f64).sqrt(),
        objective_path: vec![obj],
    })
}

fn fit_logistic(x: &Matrix, y: &[f64], opts: &GlmOptions, names: Vec<String>) -> Result<Glm> {
    let xd = design(x);
    let p = xd.ncols();
    let pen = ridge(p, opts.lambda);
    let mut beta = DVector::<f64>::zeros(p);
    let mut obj = objective(Family::Logistic, beta.as_slice(), opts.lambda, x, y);
    let mut path = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let eta = &xd * &beta;
        let mu: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let resid = DVector::from_iterator(y.len(), y.iter().zip(&mu).map(|(yi, m)| yi - m));
        let grad = xd.transpose() * resid - &pen * &beta;
        let mut xw = xd.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let hess = xd.transpose() * xw + &pen;
        let step = solve_spd(hess, &grad, opts.lambda)?;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &beta + &step * t;
            let cobj = objective(Family::Logistic, cand.as_slice(), opts.lambda, x, y);
            if cobj.is_finite() && cobj <= obj {
                accepted = Some((cand, cobj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cobj)) = accepted else {
            // No descent along the Newton direction: at the optimum to
            // machine precision.
            converged = step.amax() < opts.tol.sqrt();
            break;
        };
        let change = (&cand - &beta).amax();
        beta = cand;
        obj = cobj;
        path.push(obj);
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(Glm {
        family: Family::Logistic,
        lambda: opts.lambda,
        coefficients: beta.iter().copied().collect(),
        feature_names: names,
        converged,
        iterations,
        residual_sd: 0.0,
        objective_path: path,
    })
}

pub fn predict_prob(model: &Glm, x: &Matrix) -> Vec<f64> {
    x.rows().map(|r| model.predict(r)).collect()
}

/// Propensity truncation bounds `0 < lo < hi < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Truncation {
    lo: f64,
    hi: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { lo: 0.01, hi: 0.99 }
    }
}

impl TryFrom<(f64, f64)> for Truncation {
    type Error = Error;

    fn try_from((lo, hi): (f64, f64)) -> Result<Self> {
        Truncation::new(lo, hi)
    }
}

impl From<Truncation> for (f64, f64) {
    fn from(t: Truncation) -> Self {
        (t.lo, t.hi)
    }
}

impl Truncation {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "truncation bounds must satisfy 0 < lo < hi < 1, got ({lo}, {hi})"
            )));
        }
        Ok(Truncation { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn apply(&self, p: f64) -> f64 {
        p.clamp(self.lo, self.hi)
    }
}

pub fn truncate(p: &[f64], bounds: Truncation) -> Vec<f64> {
    p.iter().map(|&v| bounds.apply(v)).collect()
}

/// Area under the ROC curve (Mann-Whitney), ties counted one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(Error::NonBinaryResponse(bad));
    }
    let n1 = labels.iter().filter(|&&l| l == 1.0).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // midranks (1-based) over tie groups
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        let pos = order[start..end].iter().filter(|&&i| labels[i] == 1.0).count();
        rank_sum_pos += midrank * pos as f64;
        start = end;
    }
    let u = rank_sum_pos - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeFeatures {
    /// `(A, W)`
    #[default]
    MainEffects,
    /// `(A, W, A * W)`
    Interactions,
}

impl OutcomeFeatures {
    pub fn width(&self, d: usize) -> usize {
        match self {
            OutcomeFeatures::MainEffects => 1 + d,
            OutcomeFeatures::Interactions => 1 + 2 * d,
        }
    }

    pub fn write(&self, a: f64, w: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(a);
        out.extend_from_slice(w);
        if *self == OutcomeFeatures::Interactions {
            out.extend(w.iter().map(|v| a * v));
        }
    }

    pub fn names(&self, treatment: &str, covariates: &[String]) -> Vec<String> {
        let mut names = vec![treatment.to_string()];
        names.extend(covariates.iter().cloned());
        if *self == OutcomeFeatures::Interactions {
            names.extend(covariates.iter().map(|c| format!("{treatment}:{c}")));
        }
        names
    }

    pub fn matrix(&self, a: &[f64], w: &Matrix) -> Matrix {
        let mut data = Vec::with_capacity(a.len() * self.width(w.ncols()));
        let mut buf = Vec::new();
        for (ai, row) in a.iter().zip(w.rows()) {
            self.write(*ai, row, &mut buf);
            data.extend_from_slice(&buf);
        }
        Matrix::from_row_major(data, self.width(w.ncols())).expect("width is consistent")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct NuisanceOptions {
    pub glm: GlmOptions,
    pub outcome_features: OutcomeFeatures,
    pub truncation: Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub glm: Glm,
}

impl PropensityModel {
    pub fn fit(ds: &Dataset, opts: &GlmOptions) -> Result<Self> {
        let names = ds.schema().covariates().iter().map(|c| c.name.clone()).collect();
        let glm = fit_glm(ds.covariates(), ds.treatment(), Family::Logistic, opts, names)?;
        Ok(PropensityModel { glm })
    }

    /// Untruncated fitted propensities for each row of `w`.
    pub fn predict(&self, w: &Matrix) -> Vec<f64> {
        predict_prob(&self.glm, w)
    }
}

impl PropensityFn for PropensityModel {
    fn propensity(&self, w: &[f64]) -> f64 {
        self.glm.predict(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub glm: Glm,
    pub features: OutcomeFeatures,
}

impl OutcomeModel {
    /// Logistic for binary outcomes, linear for continuous ones.
    pub fn fit(ds: &Dataset, features: OutcomeFeatures, opts: &GlmOptions) -> Result<Self> {
        let family = match ds.schema().outcome().kind {
            Kind::Binary => Family::Logistic,
            Kind::Continuous => Family::Linear,
        };
        let covs: Vec<String> = ds.schema().covariates().iter().map(|c| c.name.clone()).collect();
        let names = features.names(&ds.schema().treatment().name, &covs);
        let x = features.matrix(ds.treatment(), ds.covariates());
        let glm = fit_glm(&x, ds.outcome(), family, opts, names)?;
        Ok(OutcomeModel { glm, features })
    }
}

impl OutcomeFn for OutcomeModel {
    fn mean(&self, a: f64, w: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.features.width(w.len()));
        self.features.write(a, w, &mut buf);
        self.glm.predict(&buf)
    }

    fn binary(&self) -> bool {
        self.glm.family == Family::Logistic
    }

    fn residual_sd(&self) -> f64 {
        self.glm.residual_sd
    }
}

/// Propensity and outcome models fitted on the same data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisancePair {
    pub propensity: PropensityModel,
    pub outcome: OutcomeModel,
    pub truncation: Truncation,
}

impl NuisancePair {
    pub fn fit(ds: &Dataset, opts: &NuisanceOptions) -> Result<Self> {
        Ok(NuisancePair {
            propensity: PropensityModel::fit(ds, &opts.glm)?,
            outcome: OutcomeModel::fit(ds, opts.outcome_features, &opts.glm)?,
            truncation: opts.truncation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_row_major(v.to_vec(), 1).unwrap()
    }

    #[test]
    fn symmetric_design_has_zero_intercept() {
        let x = col(&[-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]);
        let y = [0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let m = fit_glm(&x, &y, Family::Logistic, &GlmOptions::default(), vec![]).unwrap();
        assert!(m.converged);
        assert!(m.coefficients[0].abs() < 1e-8, "{:?}", m.coefficients);
    }

    #[test]
    fn linear_interpolates_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.5, -1.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let opts = GlmOptions {
            lambda: 0.0,
            ..Default::default()
        };
        let m = fit_glm(&col(&xs), &y, Family::Linear, &opts, vec![]).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((m.coefficients[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_without_ridge() {
        let x = Matrix::from_row_major(vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0], 2).unwrap();
        let opts = GlmOptions {
            lambda: 0.0,
            ..Default::default()
        };
        let err = fit_glm(&x, &[1.0, 2.0, 3.0], Family::Linear, &opts, vec![]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient));
        // the ridge makes it solvable
        assert!(fit_glm(&x, &[1.0, 2.0, 3.0], Family::Linear, &GlmOptions::default(), vec![]).is_ok());
    }

    #[test]
    fn logistic_rejects_non_binary() {
        let err = fit_glm(&col(&[0.0, 1.0]), &[0.0, 0.5], Family::Logistic, &GlmOptions::default(), vec![]).unwrap_err();
        assert!(matches!(err, Error::NonBinaryResponse(_)));
    }

    #[test]
    fn separable_data_is_tamed_by_ridge() {
        let xs = [-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0];
        let y = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let x = col(&xs);
        let m = fit_glm(&x, &y, Family::Logistic, &GlmOptions::default(), vec![]).unwrap();
        assert!(m.converged, "iterations {}", m.iterations);
        assert!(m.coefficients.iter().all(|b| b.is_finite()));
        let p = predict_prob(&m, &x);
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                if y[i] > y[j] {
                    assert!(p[i] > p[j]);
                }
            }
        }
    }

    #[test]
    fn zero_coefficients_predict_half() {
        let m = Glm {
            family: Family::Logistic,
            lambda: 0.0,
            coefficients: vec![0.0, 0.0],
            feature_names: vec!["x".into()],
            converged: true,
            iterations: 0,
            residual_sd: 0.0,
            objective_path: vec![],
        };
        assert_eq!(predict_prob(&m, &col(&[-3.0, 0.0, 7.0])), vec![0.5; 3]);
    }

    #[test]
    fn truncation_clamps() {
        let t = Truncation::new(0.01, 0.99).unwrap();
        assert_eq!(truncate(&[0.001, 0.5, 0.9999], t), vec![0.01, 0.5, 0.99]);
        assert!(Truncation::new(0.5, 0.5).is_err());
        assert!(Truncation::new(0.0, 0.9).is_err());
        assert!(Truncation::new(0.1, 1.0).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.3, 0.2], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4; 4], &[1.0, 0.0, 1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.2, 0.8, 0.3], &[1.0, 0.0, 0.0, 1.0]).unwrap(), 0.75);
        assert!(matches!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(Error::SingleClass)));
    }

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(-800.0) >= 0.0 && expit(-800.0) < 1e-300);
        assert_eq!(expit(800.0), 1.0);
        assert!((logit(expit(1.3)) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn model_json_round_trip() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let m = fit_glm(&col(&xs), &[0.0, 0.0, 1.0, 1.0], Family::Logistic, &GlmOptions::default(), vec!["dose".into()]).unwrap();
        let js = serde_json::to_string(&m).unwrap();
        let back: Glm = serde_json::from_str(&js).unwrap();
        assert_eq!(back.coefficients, m.coefficients);
        assert_eq!(back.feature_names, vec!["dose".to_string()]);
        assert!(js.contains("\"family\":\"logistic\""));
    }
}
