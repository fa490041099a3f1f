//! Random-intercept models with a single grouping factor.
//!
//! Gaussian fits maximize the likelihood profiled over the intercept and the
//! residual variance, leaving a one-dimensional search over the variance
//! ratio `lambda = tau2 / sigma2`. Binomial fits use the Laplace
//! approximation to the marginal likelihood with an inner penalized Newton
//! solve for the intercept and the per-level modes.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{minimize_bracketed, SearchOptions};
use crate::table::{Column, ColumnValues};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

/// Fitted random-intercept model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomInterceptFit {
    pub beta0: f64,
    /// Residual variance; `None` for binomial fits.
    pub sigma2: Option<f64>,
    pub tau2: f64,
    pub levels: Vec<String>,
    /// Conditional mode of each level's random intercept, aligned with `levels`.
    pub modes: Vec<f64>,
    pub family: Family,
    pub deviance: f64,
    pub converged: bool,
    pub n_iter: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl RandomInterceptFit {
    #[allow(clippy::too_many_arguments)]
    fn new(
        beta0: f64,
        sigma2: Option<f64>,
        tau2: f64,
        levels: Vec<String>,
        modes: Vec<f64>,
        family: Family,
        deviance: f64,
        converged: bool,
        n_iter: usize,
    ) -> Self {
        let index = levels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        RandomInterceptFit {
            beta0,
            sigma2,
            tau2,
            levels,
            modes,
            family,
            deviance,
            converged,
            n_iter,
            index,
        }
    }

    /// Conditional mode of a training level.
    pub fn mode(&self, level: &str) -> Option<f64> {
        match self.index.get(level) {
            Some(&i) => Some(self.modes[i]),
            // Deserialized fits carry no index.
            None if self.index.is_empty() => {
                self.levels.iter().position(|l| l == level).map(|i| self.modes[i])
            }
            None => None,
        }
    }

    /// Linear-predictor value of a level: `beta0 + u`, or `beta0` for a level
    /// not seen in training. With `spherical` the mode is divided by the
    /// random-intercept standard deviation.
    pub fn encode(&self, level: &str, spherical: bool) -> f64 {
        match self.mode(level) {
            None => self.beta0,
            Some(u) if spherical => {
                if self.tau2 > 0.0 {
                    self.beta0 + u / self.tau2.sqrt()
                } else {
                    self.beta0
                }
            }
            Some(u) => self.beta0 + u,
        }
    }
}

/// Tolerances of the outer and inner optimizers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmmOptions {
    /// Bracket width in log variance parameter.
    pub outer_tolerance: f64,
    pub outer_max_iter: usize,
    /// Objective change that stops the inner Newton iteration.
    pub inner_tolerance: f64,
    pub inner_max_iter: usize,
}

impl Default for GlmmOptions {
    fn default() -> Self {
        GlmmOptions {
            outer_tolerance: 1e-9,
            outer_max_iter: 200,
            inner_tolerance: 1e-10,
            inner_max_iter: 100,
        }
    }
}

const LAMBDA_BOUNDS: (f64, f64) = (1e-10, 1e10);
const TAU2_BOUNDS: (f64, f64) = (1e-8, 1e6);

// ---------------------------------------------------------------------------
// Gaussian

/// Per-level sufficient statistics of a Gaussian response.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianGroups {
    pub levels: Vec<String>,
    pub counts: Vec<f64>,
    pub means: Vec<f64>,
    /// Within-level sum of squared deviations.
    pub ss_within: Vec<f64>,
}

impl GaussianGroups {
    pub fn from_rows<S: AsRef<str>>(levels: &[S], codes: &[usize], y: &[f64]) -> Result<Self> {
        if codes.len() != y.len() {
            return Err(Error::InvalidArgument("codes and response differ in length".into()));
        }
        if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite response value {bad}")));
        }
        let l = levels.len();
        let mut counts = vec![0.0; l];
        let mut sums = vec![0.0; l];
        for (&c, &v) in codes.iter().zip(y) {
            counts[c] += 1.0;
            sums[c] += v;
        }
        let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, n)| if *n > 0.0 { s / n } else { 0.0 }).collect();
        let mut ss_within = vec![0.0; l];
        for (&c, &v) in codes.iter().zip(y) {
            ss_within[c] += (v - means[c]).powi(2);
        }
        // Drop levels without rows.
        let keep: Vec<usize> = (0..l).filter(|&i| counts[i] > 0.0).collect();
        Ok(GaussianGroups {
            levels: keep.iter().map(|&i| levels[i].as_ref().to_owned()).collect(),
            counts: keep.iter().map(|&i| counts[i]).collect(),
            means: keep.iter().map(|&i| means[i]).collect(),
            ss_within: keep.iter().map(|&i| ss_within[i]).collect(),
        })
    }

    pub fn n_rows(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Deviance profiled over the intercept and residual variance at a fixed
/// variance ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfiledDeviance {
    pub deviance: f64,
    pub beta0: f64,
    pub sigma2: f64,
}

/// `-2 log L` of the Gaussian random-intercept model at `lambda = tau2/sigma2`,
/// profiled over `beta0` and `sigma2`. Includes the `N log 2 pi` constant.
pub fn profile_deviance_gaussian(data: &GaussianGroups, lambda: f64) -> Result<ProfiledDeviance> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("variance ratio must be >= 0, got {lambda}")));
    }
    let n = data.n_rows();
    if n < 2.0 {
        return Err(Error::Data("at least 2 rows are required".into()));
    }
    let weights: Vec<f64> = data.counts.iter().map(|&nl| nl / (1.0 + lambda * nl)).collect();
    let wsum: f64 = weights.iter().sum();
    let beta0 = weights.iter().zip(&data.means).map(|(w, m)| w * m).sum::<f64>() / wsum;
    let quad: f64 = data.ss_within.iter().sum::<f64>()
        + weights
            .iter()
            .zip(&data.means)
            .map(|(w, m)| w * (m - beta0).powi(2))
            .sum::<f64>();
    if !(quad > 0.0) {
        return Err(Error::Data(
            "residual variance is zero at this variance ratio (degenerate response)".into(),
        ));
    }
    let sigma2 = quad / n;
    let logdet: f64 = data.counts.iter().map(|&nl| (lambda * nl).ln_1p()).sum();
    let deviance = n * (2.0 * PI * sigma2).ln() + logdet + n;
    Ok(ProfiledDeviance {
        deviance,
        beta0,
        sigma2,
    })
}

/// Derivative of the profiled deviance with respect to `ln lambda`.
pub fn profile_deviance_slope(data: &GaussianGroups, lambda: f64) -> Result<f64> {
    let prof = profile_deviance_gaussian(data, lambda)?;
    let n = data.n_rows();
    let quad = prof.sigma2 * n;
    let mut wsum = 0.0;
    let mut wsq = 0.0;
    for (&nl, &m) in data.counts.iter().zip(&data.means) {
        let w = nl / (1.0 + lambda * nl);
        wsum += w;
        wsq += w * w * (m - prof.beta0).powi(2);
    }
    Ok(lambda * (wsum - n * wsq / quad))
}

/// Bisection on the sign of the slope around an interior optimum found by
/// golden-section search.
fn polish_log_lambda(data: &GaussianGroups, t0: f64, lo: f64, hi: f64) -> Result<f64> {
    let slope = |t: f64| profile_deviance_slope(data, t.exp());
    let mut step = 1e-7;
    let (mut a, mut b) = (t0, t0);
    while slope(a)? > 0.0 {
        a = (a - step).max(lo);
        step *= 2.0;
        if a <= lo {
            return Ok(t0);
        }
    }
    step = 1e-7;
    while slope(b)? < 0.0 {
        b = (b + step).min(hi);
        step *= 2.0;
        if b >= hi {
            return Ok(t0);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if slope(mid)? < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Maximum-likelihood Gaussian random-intercept fit of `target` on the
/// levels of `column`.
pub fn fit_gaussian_ranint(column: &Column, target: &Column) -> Result<RandomInterceptFit> {
    let (levels, codes) = level_codes(column)?;
    let y = numeric_target(target)?;
    if codes.len() != y.len() {
        return Err(Error::InvalidArgument("feature and target differ in length".into()));
    }
    let groups = GaussianGroups::from_rows(&levels, &codes, &y)?;
    fit_gaussian_groups(&groups, &GlmmOptions::default())
}

/// Gaussian fit from sufficient statistics.
pub fn fit_gaussian_groups(groups: &GaussianGroups, opts: &GlmmOptions) -> Result<RandomInterceptFit> {
    let n = groups.n_rows();
    if n < 2.0 {
        return Err(Error::Data("at least 2 rows are required".into()));
    }
    let grand = groups.counts.iter().zip(&groups.means).map(|(c, m)| c * m).sum::<f64>() / n;
    let spread = groups.ss_within.iter().sum::<f64>()
        + groups.counts.iter().zip(&groups.means).map(|(c, m)| c * (m - grand).powi(2)).sum::<f64>();
    if spread <= f64::EPSILON * grand.abs().max(1.0) * n {
        // Constant response: no variance to partition.
        return Ok(RandomInterceptFit::new(
            grand,
            Some(0.0),
            0.0,
            groups.levels.clone(),
            vec![0.0; groups.levels.len()],
            Family::Gaussian,
            f64::NEG_INFINITY,
            true,
            0,
        ));
    }

    let (lo, hi) = (LAMBDA_BOUNDS.0.ln(), LAMBDA_BOUNDS.1.ln());
    let search = SearchOptions {
        grid_points: 81,
        tolerance: opts.outer_tolerance,
        max_iter: opts.outer_max_iter,
    };
    let best = minimize_bracketed(|t| Ok(profile_deviance_gaussian(groups, t.exp())?.deviance), lo, hi, search)?;
    let at_zero = profile_deviance_gaussian(groups, 0.0)?;
    let lambda = if best.x - lo < 1e-6 || at_zero.deviance <= best.value {
        0.0
    } else if hi - best.x < 1e-6 {
        best.x.exp()
    } else {
        polish_log_lambda(groups, best.x, lo, hi)?.exp()
    };
    let prof = profile_deviance_gaussian(groups, lambda)?;
    let modes = groups
        .counts
        .iter()
        .zip(&groups.means)
        .map(|(&nl, &m)| nl * lambda / (1.0 + nl * lambda) * (m - prof.beta0))
        .collect();
    Ok(RandomInterceptFit::new(
        prof.beta0,
        Some(prof.sigma2),
        lambda * prof.sigma2,
        groups.levels.clone(),
        modes,
        Family::Gaussian,
        prof.deviance,
        best.converged,
        best.iterations,
    ))
}

// ---------------------------------------------------------------------------
// Binomial

/// Per-level trial and success counts of a binary response.
#[derive(Clone, Debug, PartialEq)]
pub struct BinomialGroups {
    pub levels: Vec<String>,
    pub trials: Vec<f64>,
    pub successes: Vec<f64>,
}

impl BinomialGroups {
    pub fn from_rows<S: AsRef<str>>(levels: &[S], codes: &[usize], y: &[bool]) -> Result<Self> {
        if codes.len() != y.len() {
            return Err(Error::InvalidArgument("codes and response differ in length".into()));
        }
        let l = levels.len();
        let mut trials = vec![0.0; l];
        let mut successes = vec![0.0; l];
        for (&c, &v) in codes.iter().zip(y) {
            trials[c] += 1.0;
            if v {
                successes[c] += 1.0;
            }
        }
        let keep: Vec<usize> = (0..l).filter(|&i| trials[i] > 0.0).collect();
        let groups = BinomialGroups {
            levels: keep.iter().map(|&i| levels[i].as_ref().to_owned()).collect(),
            trials: keep.iter().map(|&i| trials[i]).collect(),
            successes: keep.iter().map(|&i| successes[i]).collect(),
        };
        let s: f64 = groups.successes.iter().sum();
        let n: f64 = groups.trials.iter().sum();
        if s == 0.0 || s == n {
            return Err(Error::Data("binary response needs both classes".into()));
        }
        Ok(groups)
    }

    fn totals(&self) -> (f64, f64) {
        (self.successes.iter().sum(), self.trials.iter().sum())
    }
}

/// Laplace-approximate deviance and the penalized modes at one `tau2`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceEvaluation {
    pub deviance: f64,
    pub beta0: f64,
    pub modes: Vec<f64>,
    /// Negative penalized log-likelihood at the modes.
    pub objective: f64,
    /// Objective after each accepted Newton step, starting at the initial point.
    pub trace: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn loglik(data: &BinomialGroups, beta0: f64, modes: &[f64]) -> f64 {
    data.trials
        .iter()
        .zip(&data.successes)
        .zip(modes)
        .map(|((&n, &s), &u)| {
            let eta = beta0 + u;
            s * eta - n * softplus(eta)
        })
        .sum()
}

fn penalized_objective(data: &BinomialGroups, tau2: f64, beta0: f64, modes: &[f64]) -> f64 {
    -loglik(data, beta0, modes) + modes.iter().map(|u| u * u).sum::<f64>() / (2.0 * tau2)
}

/// Laplace-approximate `-2 log` marginal likelihood at `tau2`.
///
/// The inner problem maximizes the penalized log-likelihood over the
/// intercept and all modes with damped Newton steps; the Hessian is a
/// diagonal block bordered by the intercept row, solved through its Schur
/// complement. `start` warm-starts the iteration.
pub fn laplace_deviance_binomial(
    data: &BinomialGroups,
    tau2: f64,
    start: Option<(f64, &[f64])>,
    opts: &GlmmOptions,
) -> Result<LaplaceEvaluation> {
    if !(tau2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau2 must be >= 0, got {tau2}")));
    }
    let l = data.trials.len();
    let (s_tot, n_tot) = data.totals();
    if s_tot == 0.0 || s_tot == n_tot {
        return Err(Error::Data("binary response needs both classes".into()));
    }
    if tau2 == 0.0 {
        let beta0 = logit(s_tot / n_tot);
        let modes = vec![0.0; l];
        let ll = loglik(data, beta0, &modes);
        return Ok(LaplaceEvaluation {
            deviance: -2.0 * ll,
            beta0,
            modes,
            objective: -ll,
            trace: vec![-ll],
        });
    }

    let (mut beta0, mut modes) = match start {
        Some((b, u)) if u.len() == l => (b, u.to_vec()),
        _ => (logit(s_tot / n_tot), vec![0.0; l]),
    };
    let mut obj = penalized_objective(data, tau2, beta0, &modes);
    let mut trace = vec![obj];
    let inv_tau2 = 1.0 / tau2;
    let mut iterations = 0;
    loop {
        // Gradient of the penalized log-likelihood and per-level curvature.
        let mut g_beta = 0.0;
        let mut g_u = vec![0.0; l];
        let mut h = vec![0.0; l];
        for i in 0..l {
            let p = sigmoid(beta0 + modes[i]);
            let r = data.successes[i] - data.trials[i] * p;
            g_beta += r;
            g_u[i] = r - modes[i] * inv_tau2;
            h[i] = data.trials[i] * p * (1.0 - p);
        }
        let grad_norm = g_u.iter().fold(g_beta.abs(), |m, g| m.max(g.abs()));
        if grad_norm < 1e-10 {
            break;
        }
        if iterations >= opts.inner_max_iter {
            return Err(Error::NonConvergence {
                iterations,
                intercept: beta0,
                modes,
                objective: obj,
            });
        }
        iterations += 1;

        let d: Vec<f64> = h.iter().map(|hi| hi + inv_tau2).collect();
        let schur: f64 = (0..l).map(|i| h[i] * inv_tau2 / d[i]).sum();
        let rhs: f64 = g_beta - (0..l).map(|i| h[i] * g_u[i] / d[i]).sum::<f64>();
        let step_beta = if schur > 0.0 { rhs / schur } else { 0.0 };
        let step_u: Vec<f64> = (0..l).map(|i| (g_u[i] - h[i] * step_beta) / d[i]).collect();

        let mut scale = 1.0;
        let mut change = None;
        for _ in 0..60 {
            let cand_b = beta0 + scale * step_beta;
            let cand_u: Vec<f64> = modes.iter().zip(&step_u).map(|(u, s)| u + scale * s).collect();
            let cand = penalized_objective(data, tau2, cand_b, &cand_u);
            if cand <= obj {
                change = Some(obj - cand);
                beta0 = cand_b;
                modes = cand_u;
                obj = cand;
                trace.push(obj);
                break;
            }
            scale *= 0.5;
        }
        match change {
            Some(c) if c < opts.inner_tolerance => break,
            Some(_) => {}
            // No descent left in floating point; only acceptable at a
            // stationary point.
            None if grad_norm < 1e-6 * (1.0 + n_tot) => break,
            None => {
                return Err(Error::NonConvergence {
                    iterations,
                    intercept: beta0,
                    modes,
                    objective: obj,
                })
            }
        }
    }

    let ll = loglik(data, beta0, &modes);
    let curvature: f64 = (0..l)
        .map(|i| {
            let p = sigmoid(beta0 + modes[i]);
            (tau2 * data.trials[i] * p * (1.0 - p)).ln_1p()
        })
        .sum();
    let penalty: f64 = modes.iter().map(|u| u * u).sum::<f64>() / (2.0 * tau2);
    Ok(LaplaceEvaluation {
        deviance: -2.0 * (ll - penalty) + curvature,
        beta0,
        modes,
        objective: obj,
        trace,
    })
}

/// Laplace-approximate ML fit of a logistic random-intercept model for
/// `target == positive_class`.
pub fn fit_binomial_ranint(column: &Column, target: &Column, positive_class: &str) -> Result<RandomInterceptFit> {
    let (levels, codes) = level_codes(column)?;
    let y = binary_target(target, positive_class)?;
    if codes.len() != y.len() {
        return Err(Error::InvalidArgument("feature and target differ in length".into()));
    }
    let groups = BinomialGroups::from_rows(&levels, &codes, &y)?;
    fit_binomial_groups(&groups, &GlmmOptions::default())
}

pub fn fit_binomial_groups(groups: &BinomialGroups, opts: &GlmmOptions) -> Result<RandomInterceptFit> {
    let (lo, hi) = (TAU2_BOUNDS.0.ln(), TAU2_BOUNDS.1.ln());
    let search = SearchOptions {
        grid_points: 41,
        tolerance: opts.outer_tolerance,
        max_iter: opts.outer_max_iter,
    };
    let mut warm: Option<(f64, Vec<f64>)> = None;
    let best = minimize_bracketed(
        |t| {
            let start = warm.as_ref().map(|(b, u)| (*b, u.as_slice()));
            let eval = laplace_deviance_binomial(groups, t.exp(), start, opts)?;
            warm = Some((eval.beta0, eval.modes.clone()));
            Ok(eval.deviance)
        },
        lo,
        hi,
        search,
    )?;
    let at_zero = laplace_deviance_binomial(groups, 0.0, None, opts)?;
    let tau2 = if best.x - lo < 1e-6 || at_zero.deviance <= best.value {
        0.0
    } else {
        best.x.exp()
    };
    let eval = if tau2 == 0.0 {
        at_zero
    } else {
        laplace_deviance_binomial(groups, tau2, None, opts)?
    };
    Ok(RandomInterceptFit::new(
        eval.beta0,
        None,
        tau2,
        groups.levels.clone(),
        eval.modes,
        Family::Binomial,
        eval.deviance,
        best.converged,
        best.iterations,
    ))
}

// ---------------------------------------------------------------------------
// Column adapters

/// Level labels of the observed levels and a dense code per row.
pub(crate) fn level_codes(column: &Column) -> Result<(Vec<String>, Vec<usize>)> {
    let ColumnValues::Categorical { codes, levels } = column.values() else {
        return Err(Error::InvalidArgument(format!("`{}` is not categorical", column.name())));
    };
    let codes = codes
        .iter()
        .map(|c| {
            c.map(|c| c as usize)
                .ok_or_else(|| Error::Data(format!("`{}` has missing values", column.name())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((levels.labels().to_vec(), codes))
}

fn numeric_target(target: &Column) -> Result<Vec<f64>> {
    let v = target
        .numeric_values()
        .ok_or_else(|| Error::InvalidArgument(format!("target `{}` is not numeric", target.name())))?;
    v.iter()
        .map(|x| match x {
            Some(x) if x.is_finite() => Ok(*x),
            _ => Err(Error::Data(format!("target `{}` has missing or non-finite values", target.name()))),
        })
        .collect()
}

fn binary_target(target: &Column, positive: &str) -> Result<Vec<bool>> {
    if !target.is_categorical() {
        return Err(Error::InvalidArgument(format!("target `{}` is not categorical", target.name())));
    }
    (0..target.len())
        .map(|i| {
            target
                .label_at(i)
                .map(|l| l == positive)
                .ok_or_else(|| Error::Data(format!("target `{}` has missing values", target.name())))
        })
        .collect()
}
