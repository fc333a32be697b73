//! ATE estimators: outcome regression (G-computation), inverse probability
//! weighting, augmented IPW and targeted maximum likelihood.
//!
//! All four take fitted nuisance functions and a dataset. Fitted
//! propensities are truncated to the configured bounds before use.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::{expit, logit, OutcomeFn, PropensityFn, Truncation};

/// Initial outcome predictions are clamped to this interval before the
/// logistic fluctuation.
pub const TMLE_Q_CLAMP: (f64, f64) = (0.005, 0.995);

/// Required bound on the mean efficient influence function after targeting.
pub const TMLE_EIF_TOLERANCE: f64 = 1e-8;

const FLUCTUATION_MAX_ITER: usize = 200;
const FLUCTUATION_SCORE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "OR")]
    Or,
    #[serde(rename = "IPW")]
    Ipw,
    #[serde(rename = "AIPW")]
    Aipw,
    #[serde(rename = "TMLE")]
    Tmle,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Or, Estimator::Ipw, Estimator::Aipw, Estimator::Tmle];

    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Or => "OR",
            Estimator::Ipw => "IPW",
            Estimator::Aipw => "AIPW",
            Estimator::Tmle => "TMLE",
        }
    }

    /// Parses a comma-separated list such as `or,ipw,aipw,tmle`.
    pub fn parse_list(s: &str) -> Result<Vec<Estimator>> {
        s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse()).collect()
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "or" => Ok(Estimator::Or),
            "ipw" => Ok(Estimator::Ipw),
            "aipw" => Ok(Estimator::Aipw),
            "tmle" => Ok(Estimator::Tmle),
            other => Err(Error::InvalidArgument(format!("unknown estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IpwFlavor {
    #[default]
    HorvitzThompson,
    Hajek,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EstimatorConfig {
    pub ipw_flavor: IpwFlavor,
    pub truncation: Truncation,
    /// Scaling bounds `(a, b)` for a continuous outcome. `None` uses the
    /// observed range widened by 1% on each side.
    pub outcome_bounds: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub estimator: Estimator,
    pub psi: f64,
    pub n: usize,
    /// Mean of the estimator's influence function at the fitted nuisances;
    /// for AIPW and TMLE this is the efficient influence function.
    pub mean_eif: f64,
    /// TMLE fluctuation parameter (0 for the other estimators).
    pub epsilon: f64,
    pub ipw_flavor: IpwFlavor,
    pub truncation: Truncation,
    pub outcome_bounds: Option<(f64, f64)>,
}

impl AteEstimate {
    fn new(estimator: Estimator, psi: f64, n: usize, mean_eif: f64, cfg: &EstimatorConfig) -> Self {
        AteEstimate {
            estimator,
            psi,
            n,
            mean_eif,
            epsilon: 0.0,
            ipw_flavor: cfg.ipw_flavor,
            truncation: cfg.truncation,
            outcome_bounds: None,
        }
    }
}

/// Nuisance predictions evaluated on every row of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub q1: Vec<f64>,
    pub q0: Vec<f64>,
    /// Truncated propensities.
    pub g: Vec<f64>,
}

impl Predictions {
    pub fn new(ds: &Dataset, q: &dyn OutcomeFn, g: &dyn PropensityFn, truncation: Truncation) -> Self {
        let n = ds.n();
        let mut q1 = Vec::with_capacity(n);
        let mut q0 = Vec::with_capacity(n);
        let mut gs = Vec::with_capacity(n);
        for i in 0..n {
            let w = ds.covariate_row(i);
            q1.push(q.mean(1.0, w));
            q0.push(q.mean(0.0, w));
            gs.push(truncation.apply(g.propensity(w)));
        }
        Predictions { q1, q0, g: gs }
    }

    fn qa(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .enumerate()
            .map(|(i, &ai)| if ai == 1.0 { self.q1[i] } else { self.q0[i] })
            .collect()
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = 0.0;
    for x in v {
        s += x;
        n += 1;
    }
    s / n as f64
}

/// Clever covariate `A / g - (1 - A) / (1 - g)`.
pub fn clever_covariate(a: f64, g: f64) -> f64 {
    a / g - (1.0 - a) / (1.0 - g)
}

pub fn estimate_or(ds: &Dataset, q: &dyn OutcomeFn) -> Result<AteEstimate> {
    let (q1, q0): (Vec<f64>, Vec<f64>) = (0..ds.n())
        .map(|i| {
            let w = ds.covariate_row(i);
            (q.mean(1.0, w), q.mean(0.0, w))
        })
        .unzip();
    Ok(or_from(&q1, &q0, &EstimatorConfig::default()))
}

fn or_from(q1: &[f64], q0: &[f64], cfg: &EstimatorConfig) -> AteEstimate {
    let psi = mean(q1.iter().zip(q0).map(|(a, b)| a - b));
    let mean_if = mean(q1.iter().zip(q0).map(|(a, b)| a - b - psi));
    AteEstimate::new(Estimator::Or, psi, q1.len(), mean_if, cfg)
}

/// IPW from explicit arm weights (`w1 = 1/g` for treated rows, `w0 = 1/(1-g)`
/// for controls).
pub fn ipw_from_weights(a: &[f64], y: &[f64], w1: &[f64], w0: &[f64], flavor: IpwFlavor) -> Result<(f64, f64)> {
    let n = a.len() as f64;
    match flavor {
        IpwFlavor::HorvitzThompson => {
            let terms: Vec<f64> = (0..a.len())
                .map(|i| a[i] * y[i] * w1[i] - (1.0 - a[i]) * y[i] * w0[i])
                .collect();
            let psi = terms.iter().sum::<f64>() / n;
            let mean_if = mean(terms.iter().map(|t| t - psi));
            Ok((psi, mean_if))
        }
        IpwFlavor::Hajek => {
            let (mut s1, mut d1, mut s0, mut d0) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..a.len() {
                s1 += a[i] * y[i] * w1[i];
                d1 += a[i] * w1[i];
                s0 += (1.0 - a[i]) * y[i] * w0[i];
                d0 += (1.0 - a[i]) * w0[i];
            }
            if d1 <= 0.0 {
                return Err(Error::EmptyArm("treated"));
            }
            if d0 <= 0.0 {
                return Err(Error::EmptyArm("control"));
            }
            let (m1, m0) = (s1 / d1, s0 / d0);
            let mean_if = mean((0..a.len()).map(|i| {
                a[i] * (y[i] - m1) * w1[i] * n / d1 - (1.0 - a[i]) * (y[i] - m0) * w0[i] * n / d0
            }));
            Ok((m1 - m0, mean_if))
        }
    }
}

pub fn estimate_ipw(ds: &Dataset, g: &dyn PropensityFn, cfg: &EstimatorConfig) -> Result<AteEstimate> {
    let gs: Vec<f64> = (0..ds.n())
        .map(|i| cfg.truncation.apply(g.propensity(ds.covariate_row(i))))
        .collect();
    ipw_from(ds, &gs, cfg)
}

fn ipw_from(ds: &Dataset, g: &[f64], cfg: &EstimatorConfig) -> Result<AteEstimate> {
    let w1: Vec<f64> = g.iter().map(|g| 1.0 / g).collect();
    let w0: Vec<f64> = g.iter().map(|g| 1.0 / (1.0 - g)).collect();
    let (psi, mean_if) = ipw_from_weights(ds.treatment(), ds.outcome(), &w1, &w0, cfg.ipw_flavor)?;
    Ok(AteEstimate::new(Estimator::Ipw, psi, ds.n(), mean_if, cfg))
}

pub fn estimate_aipw(ds: &Dataset, q: &dyn OutcomeFn, g: &dyn PropensityFn, cfg: &EstimatorConfig) -> Result<AteEstimate> {
    let p = Predictions::new(ds, q, g, cfg.truncation);
    Ok(aipw_from(ds, &p, cfg))
}

fn aipw_from(ds: &Dataset, p: &Predictions, cfg: &EstimatorConfig) -> AteEstimate {
    let a = ds.treatment();
    let y = ds.outcome();
    let psi = mean((0..ds.n()).map(|i| {
        p.q1[i] - p.q0[i] + a[i] * (y[i] - p.q1[i]) / p.g[i] - (1.0 - a[i]) * (y[i] - p.q0[i]) / (1.0 - p.g[i])
    }));
    let d = eif_from(a, y, &p.q1, &p.q0, &p.g, psi);
    AteEstimate::new(Estimator::Aipw, psi, ds.n(), mean(d.into_iter()), cfg)
}

/// Per-row efficient influence function
/// `D = Q(1,W) - Q(0,W) + H(A,W) (Y - Q(A,W)) - psi`.
pub fn eif(ds: &Dataset, q: &dyn OutcomeFn, g: &dyn PropensityFn, truncation: Truncation, psi: f64) -> Vec<f64> {
    let p = Predictions::new(ds, q, g, truncation);
    eif_from(ds.treatment(), ds.outcome(), &p.q1, &p.q0, &p.g, psi)
}

fn eif_from(a: &[f64], y: &[f64], q1: &[f64], q0: &[f64], g: &[f64], psi: f64) -> Vec<f64> {
    (0..a.len())
        .map(|i| {
            let qa = if a[i] == 1.0 { q1[i] } else { q0[i] };
            q1[i] - q0[i] + clever_covariate(a[i], g[i]) * (y[i] - qa) - psi
        })
        .collect()
}

/// Scaling bounds for a continuous outcome: explicit, or the observed range
/// widened by 1% of its width on each side.
pub fn outcome_scaling_bounds(y: &[f64], explicit: Option<(f64, f64)>) -> Result<(f64, f64)> {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match explicit {
        Some((a, b)) => {
            if !(a < b) {
                return Err(Error::InvalidArgument(format!("outcome bounds need a < b, got ({a}, {b})")));
            }
            if lo < a || hi > b {
                return Err(Error::InvalidArgument(format!(
                    "outcome bounds ({a}, {b}) do not cover the observed range [{lo}, {hi}]"
                )));
            }
            Ok((a, b))
        }
        None => {
            let pad = if hi > lo { 0.01 * (hi - lo) } else { 0.5 };
            Ok((lo - pad, hi + pad))
        }
    }
}

pub fn estimate_tmle(ds: &Dataset, q: &dyn OutcomeFn, g: &dyn PropensityFn, cfg: &EstimatorConfig) -> Result<AteEstimate> {
    let p = Predictions::new(ds, q, g, cfg.truncation);
    tmle_from(ds, &p, cfg)
}

/// Logistic fluctuation of `offset` along `h`; returns the fitted epsilon.
///
/// The score `sum h (y - expit(offset + eps h))` is decreasing in `eps`, so
/// its root is found by Newton steps safeguarded by bisection once a sign
/// change has been bracketed.
fn fit_fluctuation(y: &[f64], offset: &[f64], h: &[f64]) -> Result<f64> {
    let n = y.len() as f64;
    let score_hess = |eps: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut hsum = 0.0;
        for ((&yi, &o), &hi) in y.iter().zip(offset).zip(h) {
            let p = expit(o + eps * hi);
            s += hi * (yi - p);
            hsum += hi * hi * p * (1.0 - p);
        }
        (s, hsum)
    };

    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut eps = 0.0;
    for _ in 0..FLUCTUATION_MAX_ITER {
        let (s, hs) = score_hess(eps);
        if !s.is_finite() {
            break;
        }
        if (s / n).abs() <= FLUCTUATION_SCORE_TOL {
            return Ok(eps);
        }
        if s > 0.0 {
            lo = eps;
        } else {
            hi = eps;
        }
        let newton = if hs > 0.0 { eps + s / hs } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            // unbracketed and no usable curvature: expand geometrically
            let dir = if s > 0.0 { 1.0 } else { -1.0 };
            eps + dir * (1.0 + eps.abs())
        };
        if next == eps || (lo.is_finite() && hi.is_finite() && hi - lo <= 1e-15 * (1.0 + eps.abs())) {
            break;
        }
        eps = next;
    }
    let (s, _) = score_hess(eps);
    if eps.is_finite() && (s / n).abs() <= TMLE_EIF_TOLERANCE * 1e-2 {
        Ok(eps)
    } else {
        Err(Error::FluctuationDiverged { epsilon: eps })
    }
}

fn tmle_from(ds: &Dataset, p: &Predictions, cfg: &EstimatorConfig) -> Result<AteEstimate> {
    let a = ds.treatment();
    let y = ds.outcome();
    let binary = ds.outcome_is_binary();
    let (lo, hi) = if binary {
        (0.0, 1.0)
    } else {
        outcome_scaling_bounds(y, cfg.outcome_bounds)?
    };
    let scale = hi - lo;
    let unit = |v: f64| ((v - lo) / scale).clamp(TMLE_Q_CLAMP.0, TMLE_Q_CLAMP.1);
    let ys: Vec<f64> = y.iter().map(|v| (v - lo) / scale).collect();
    let q1: Vec<f64> = p.q1.iter().map(|&v| unit(v)).collect();
    let q0: Vec<f64> = p.q0.iter().map(|&v| unit(v)).collect();
    let qa = Predictions {
        q1: q1.clone(),
        q0: q0.clone(),
        g: p.g.clone(),
    }
    .qa(a);
    let h: Vec<f64> = a.iter().zip(&p.g).map(|(&ai, &gi)| clever_covariate(ai, gi)).collect();
    let offset: Vec<f64> = qa.iter().map(|&v| logit(v)).collect();

    let eps = fit_fluctuation(&ys, &offset, &h)?;

    let q1s: Vec<f64> = q1.iter().zip(&p.g).map(|(&v, &gi)| expit(logit(v) + eps / gi)).collect();
    let q0s: Vec<f64> = q0.iter().zip(&p.g).map(|(&v, &gi)| expit(logit(v) - eps / (1.0 - gi))).collect();
    let psi_unit = mean(q1s.iter().zip(&q0s).map(|(a, b)| a - b));
    let d = eif_from(a, &ys, &q1s, &q0s, &p.g, psi_unit);
    let mean_eif = mean(d.into_iter());
    if !(mean_eif.abs() <= TMLE_EIF_TOLERANCE) {
        return Err(Error::FluctuationDiverged { epsilon: eps });
    }
    let mut est = AteEstimate::new(Estimator::Tmle, psi_unit * scale, ds.n(), mean_eif, cfg);
    est.epsilon = eps;
    if !binary {
        est.outcome_bounds = Some((lo, hi));
    }
    Ok(est)
}

/// Runs several estimators against one set of nuisance predictions.
///
/// Each entry is computed independently; a failure in one does not affect
/// the others.
pub fn estimate_many(
    ds: &Dataset,
    q: &dyn OutcomeFn,
    g: &dyn PropensityFn,
    which: &[Estimator],
    cfg: &EstimatorConfig,
) -> Vec<(Estimator, Result<AteEstimate>)> {
    let p = Predictions::new(ds, q, g, cfg.truncation);
    which
        .iter()
        .map(|&e| {
            let r = match e {
                Estimator::Or => Ok(or_from(&p.q1, &p.q0, cfg)),
                Estimator::Ipw => ipw_from(ds, &p.g, cfg),
                Estimator::Aipw => Ok(aipw_from(ds, &p, cfg)),
                Estimator::Tmle => tmle_from(ds, &p, cfg),
            };
            (e, r)
        })
        .collect()
}
