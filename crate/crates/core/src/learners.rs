//! Learners fit on the encoded design matrix: a featureless baseline,
//! k-nearest neighbours with an information-gain filter, and ridge
//! (least squares or logistic) with a cross-validated penalty.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{assign_folds, TargetValues};

/// Model output: one value per row for regression, or an `n x C` matrix of
/// class scores whose rows sum to one.
#[derive(Clone, Debug, PartialEq)]
pub enum Predictions {
    Regression(Vec<f64>),
    Scores(DMatrix<f64>),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Regression(v) => v.len(),
            Predictions::Scores(m) => m.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A trainable model.
pub trait Learner: Send + Sync {
    fn name(&self) -> String;
    fn fit(&self, x: &DMatrix<f64>, y: &TargetValues, seed: u64) -> Result<Box<dyn Model>>;
}

/// A trained model.
pub trait Model: Send + Sync {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Predictions>;
}

fn default_k() -> usize {
    15
}

fn default_filter() -> Option<usize> {
    Some(25)
}

fn default_grid() -> usize {
    20
}

fn default_cv() -> usize {
    5
}

/// Built-in learner configurations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Featureless,
    Knn {
        #[serde(default = "default_k")]
        k: usize,
        /// Features kept by the information-gain filter.
        #[serde(default = "default_filter")]
        filter_top: Option<usize>,
    },
    Ridge {
        #[serde(default = "default_grid")]
        grid_points: usize,
        #[serde(default = "default_cv")]
        cv_folds: usize,
    },
}

impl LearnerSpec {
    pub fn knn() -> Self {
        LearnerSpec::Knn {
            k: default_k(),
            filter_top: default_filter(),
        }
    }

    pub fn ridge() -> Self {
        LearnerSpec::Ridge {
            grid_points: default_grid(),
            cv_folds: default_cv(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Knn { k: 0, .. } => Err(Error::InvalidArgument("knn needs k >= 1".into())),
            LearnerSpec::Knn {
                filter_top: Some(0), ..
            } => Err(Error::InvalidArgument("filter_top must be at least 1".into())),
            LearnerSpec::Ridge { grid_points: 0, .. } => {
                Err(Error::InvalidArgument("ridge needs at least one grid point".into()))
            }
            LearnerSpec::Ridge { cv_folds, .. } if *cv_folds < 2 => {
                Err(Error::InvalidArgument("ridge needs at least 2 internal folds".into()))
            }
            _ => Ok(()),
        }
    }
}

impl Learner for LearnerSpec {
    fn name(&self) -> String {
        match self {
            LearnerSpec::Featureless => "featureless".into(),
            LearnerSpec::Knn { .. } => "knn".into(),
            LearnerSpec::Ridge { .. } => "ridge".into(),
        }
    }

    fn fit(&self, x: &DMatrix<f64>, y: &TargetValues, seed: u64) -> Result<Box<dyn Model>> {
        self.validate()?;
        if x.nrows() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "design has {} rows, target {}",
                x.nrows(),
                y.len()
            )));
        }
        Ok(match self {
            LearnerSpec::Featureless => Box::new(Featureless::fit(y)?),
            LearnerSpec::Knn { k, filter_top } => Box::new(Knn::fit(x, y, *k, *filter_top)?),
            LearnerSpec::Ridge { grid_points, cv_folds } => {
                Box::new(Ridge::fit(x, y, *grid_points, *cv_folds, seed)?)
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Featureless

/// Predicts the training mean or the training class frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct Featureless {
    pub values: Vec<f64>,
    pub regression: bool,
}

impl Featureless {
    pub fn fit(y: &TargetValues) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Data("cannot fit on zero rows".into()));
        }
        Ok(match y {
            TargetValues::Numeric(v) => Featureless {
                values: vec![v.iter().sum::<f64>() / v.len() as f64],
                regression: true,
            },
            TargetValues::Classes { .. } => Featureless {
                values: y.class_counts().iter().map(|&c| c as f64 / y.len() as f64).collect(),
                regression: false,
            },
        })
    }
}

impl Model for Featureless {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Predictions> {
        let n = x.nrows();
        Ok(if self.regression {
            Predictions::Regression(vec![self.values[0]; n])
        } else {
            Predictions::Scores(DMatrix::from_fn(n, self.values.len(), |_, c| self.values[c]))
        })
    }
}

// ---------------------------------------------------------------------------
// Information gain

/// Equal-frequency bin of each value: `floor(r * bins / n)` where `r` is the
/// number of values strictly smaller, so ties share a bin.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values
        .iter()
        .map(|v| {
            let rank = sorted.partition_point(|s| s.total_cmp(v).is_lt());
            (rank * bins / n.max(1)).min(bins - 1)
        })
        .collect()
}

/// Mutual information (nats) between two discrete codings.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0.0; ka * kb];
    let mut pa = vec![0.0; ka];
    let mut pb = vec![0.0; kb];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * kb + j] += 1.0;
        pa[i] += 1.0;
        pb[j] += 1.0;
    }
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = joint[i * kb + j];
            if c > 0.0 {
                mi += c / n * (c * n / (pa[i] * pb[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

const MI_BINS: usize = 10;

/// Mutual information of every column with the target.
pub fn information_gain(x: &DMatrix<f64>, y: &TargetValues) -> Vec<f64> {
    let target: Vec<usize> = match y {
        TargetValues::Numeric(v) => equal_frequency_bins(v, MI_BINS),
        TargetValues::Classes { codes, .. } => codes.iter().map(|&c| c as usize).collect(),
    };
    (0..x.ncols())
        .map(|j| {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            mutual_information(&equal_frequency_bins(&col, MI_BINS), &target)
        })
        .collect()
}

/// Indices of the `top` most informative columns, in column order. Ties
/// favour earlier columns.
pub fn info_gain_filter(x: &DMatrix<f64>, y: &TargetValues, top: usize) -> Vec<usize> {
    if top >= x.ncols() {
        return (0..x.ncols()).collect();
    }
    let gain = information_gain(x, y);
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    order.sort_by(|&a, &b| gain[b].total_cmp(&gain[a]));
    let mut keep: Vec<usize> = order[..top].to_vec();
    keep.sort_unstable();
    keep
}

// ---------------------------------------------------------------------------
// k nearest neighbours

#[derive(Clone, Debug, PartialEq)]
pub struct Knn {
    pub k: usize,
    pub selected: Vec<usize>,
    pub center: Vec<f64>,
    /// Standard deviation per selected column; 0 marks a constant column.
    pub scale: Vec<f64>,
    train: DMatrix<f64>,
    target: TargetValues,
}

impl Knn {
    pub fn fit(x: &DMatrix<f64>, y: &TargetValues, k: usize, filter_top: Option<usize>) -> Result<Self> {
        let n = x.nrows();
        if k > n {
            return Err(Error::InvalidArgument(format!("k = {k} exceeds {n} training rows")));
        }
        let selected = match filter_top {
            Some(top) => info_gain_filter(x, y, top),
            None => (0..x.ncols()).collect(),
        };
        let mut center = Vec::with_capacity(selected.len());
        let mut scale = Vec::with_capacity(selected.len());
        for &j in &selected {
            let col = x.column(j);
            let mean = col.mean();
            let var = if n > 1 {
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            center.push(mean);
            scale.push(if var > 0.0 { var.sqrt() } else { 0.0 });
        }
        let mut knn = Knn {
            k,
            selected,
            center,
            scale,
            train: DMatrix::zeros(0, 0),
            target: y.clone(),
        };
        knn.train = knn.standardize(x);
        Ok(knn)
    }

    fn standardize(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.selected.len(), |i, j| {
            if self.scale[j] > 0.0 {
                (x[(i, self.selected[j])] - self.center[j]) / self.scale[j]
            } else {
                0.0
            }
        })
    }

    /// Indices of the `k` nearest training rows; distance ties go to the
    /// earlier training row.
    pub fn neighbours(&self, query: &DMatrix<f64>) -> Vec<Vec<usize>> {
        let q = self.standardize(query);
        let n = self.train.nrows();
        let p = self.train.ncols();
        (0..q.nrows())
            .map(|i| {
                let mut dist: Vec<(f64, usize)> = (0..n)
                    .map(|r| {
                        let mut d = 0.0;
                        for j in 0..p {
                            let diff = self.train[(r, j)] - q[(i, j)];
                            d += diff * diff;
                        }
                        (d, r)
                    })
                    .collect();
                let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if self.k < n {
                    dist.select_nth_unstable_by(self.k - 1, cmp);
                    dist.truncate(self.k);
                }
                dist.sort_by(cmp);
                dist.into_iter().map(|(_, r)| r).collect()
            })
            .collect()
    }
}

impl Model for Knn {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Predictions> {
        if x.ncols() < self.selected.iter().max().map_or(0, |m| m + 1) {
            return Err(Error::SchemaMismatch("query has fewer columns than the training design".into()));
        }
        let nbrs = self.neighbours(x);
        Ok(match &self.target {
            TargetValues::Numeric(y) => Predictions::Regression(
                nbrs.iter()
                    .map(|nb| nb.iter().map(|&r| y[r]).sum::<f64>() / nb.len() as f64)
                    .collect(),
            ),
            TargetValues::Classes { codes, n_classes } => {
                let mut m = DMatrix::zeros(nbrs.len(), *n_classes);
                for (i, nb) in nbrs.iter().enumerate() {
                    for &r in nb {
                        m[(i, codes[r] as usize)] += 1.0 / nb.len() as f64;
                    }
                }
                Predictions::Scores(m)
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Ridge

/// Linear coefficients with an unpenalized intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeCoef {
    pub intercept: f64,
    pub beta: DVector<f64>,
}

impl RidgeCoef {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut eta = x * &self.beta;
        eta.add_scalar_mut(self.intercept);
        eta
    }
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.lu().solve(b).ok_or_else(|| Error::Data("singular penalized system".into()))
}

/// Penalized least squares `min |y - b0 - X b|^2 + lambda |b|^2`.
pub fn ridge_fixed(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<RidgeCoef> {
    let n = x.nrows();
    let p = x.ncols();
    if n == 0 {
        return Err(Error::Data("ridge needs at least one row".into()));
    }
    let means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - means[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
    let mut a = xc.tr_mul(&xc);
    for j in 0..p {
        a[(j, j)] += lambda;
    }
    let beta = solve_spd(a, &xc.tr_mul(&yc))?;
    let intercept = ybar - means.iter().zip(beta.iter()).map(|(m, b)| m * b).sum::<f64>();
    Ok(RidgeCoef { intercept, beta })
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// L2-penalized logistic regression by damped Newton (IRLS):
/// `min -loglik + lambda / 2 |b|^2`, intercept unpenalized.
pub fn logistic_fixed(x: &DMatrix<f64>, y: &[f64], lambda: f64, start: Option<&RidgeCoef>) -> Result<RidgeCoef> {
    let n = x.nrows();
    let p = x.ncols();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut coef = start.cloned().unwrap_or_else(|| RidgeCoef {
        intercept: (ybar.clamp(1e-6, 1.0 - 1e-6) / (1.0 - ybar.clamp(1e-6, 1.0 - 1e-6))).ln(),
        beta: DVector::zeros(p),
    });
    let objective = |c: &RidgeCoef| -> f64 {
        let eta = c.linear_predictor(x);
        eta.iter().zip(y).map(|(e, yy)| log_loss(sigmoid(*e), *yy)).sum::<f64>()
            + 0.5 * lambda * c.beta.norm_squared()
    };
    let mut f = objective(&coef);
    for _ in 0..100 {
        let eta = coef.linear_predictor(x);
        let prob: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let w: Vec<f64> = prob.iter().map(|q| (q * (1.0 - q)).max(1e-12)).collect();
        let resid: Vec<f64> = prob.iter().zip(y).map(|(q, yy)| q - yy).collect();
        // Augmented design [1, X].
        let mut grad = DVector::zeros(p + 1);
        grad[0] = resid.iter().sum();
        let gx = x.tr_mul(&DVector::from_column_slice(&resid));
        for j in 0..p {
            grad[j + 1] = gx[j] + lambda * coef.beta[j];
        }
        let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * sw[i]);
        let xtwx = xw.tr_mul(&xw);
        let xtw1 = x.tr_mul(&DVector::from_column_slice(&w));
        let mut h = DMatrix::zeros(p + 1, p + 1);
        h[(0, 0)] = w.iter().sum();
        for j in 0..p {
            h[(0, j + 1)] = xtw1[j];
            h[(j + 1, 0)] = xtw1[j];
            for k in 0..p {
                h[(j + 1, k + 1)] = xtwx[(j, k)];
            }
            h[(j + 1, j + 1)] += lambda;
        }
        let step = solve_spd(h, &grad)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = RidgeCoef {
                intercept: coef.intercept - t * step[0],
                beta: &coef.beta - step.rows(1, p) * t,
            };
            let ft = objective(&trial);
            if ft <= f {
                let done = (f - ft).abs() <= 1e-10 * (1.0 + f.abs());
                coef = trial;
                f = ft;
                accepted = !done;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(coef)
}

/// Geometric penalty grid from `1e-6` to `1e3` times the mean diagonal of
/// the centered Gram matrix.
pub fn lambda_grid(x: &DMatrix<f64>, points: usize) -> Vec<f64> {
    let p = x.ncols();
    let mut trace = 0.0;
    for j in 0..p {
        let col = x.column(j);
        let m = col.mean();
        trace += col.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let scale = if p > 0 && trace > 0.0 { trace / p as f64 } else { 1.0 };
    let (lo, hi) = ((1e-6f64).ln(), (1e3f64).ln());
    (0..points)
        .map(|k| {
            let t = if points == 1 { 0.5 } else { k as f64 / (points - 1) as f64 };
            scale * (lo + t * (hi - lo)).exp()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ridge {
    /// One coefficient set for regression or binary targets, one per class
    /// for multiclass (one-vs-rest).
    pub coefs: Vec<RidgeCoef>,
    pub lambdas: Vec<f64>,
    pub n_classes: Option<usize>,
}

fn cv_folds_for(y: &TargetValues, folds: usize, seed: u64) -> Result<Option<crate::table::FoldAssignment>> {
    let n = y.len();
    let j = folds.min(n);
    if j < 2 {
        return Ok(None);
    }
    let stratify = matches!(y, TargetValues::Classes { .. }) && y.class_counts().iter().all(|&c| c >= j);
    let plain = TargetValues::Numeric(vec![0.0; n]);
    assign_folds(if stratify { y } else { &plain }, j, seed).map(Some)
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows.iter())
}

/// Picks the grid penalty with the smallest pooled held-out loss; ties go
/// to the smaller penalty.
fn cv_select<F>(grid: &[f64], folds: Option<&crate::table::FoldAssignment>, mut loss: F) -> Result<f64>
where
    F: FnMut(&[usize], &[usize], f64) -> Result<f64>,
{
    let Some(folds) = folds else {
        return Ok(grid[grid.len() / 2]);
    };
    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in grid {
        let mut total = 0.0;
        for f in 0..folds.n_folds {
            total += loss(&folds.train_rows(f), &folds.test_rows(f), lambda)?;
        }
        if total < best.0 {
            best = (total, lambda);
        }
    }
    Ok(best.1)
}

impl Ridge {
    pub fn fit(x: &DMatrix<f64>, y: &TargetValues, grid_points: usize, cv_folds: usize, seed: u64) -> Result<Self> {
        let grid = lambda_grid(x, grid_points);
        let folds = cv_folds_for(y, cv_folds, seed)?;
        match y {
            TargetValues::Numeric(v) => {
                let lambda = cv_select(&grid, folds.as_ref(), |train, test, lambda| {
                    let yt: Vec<f64> = train.iter().map(|&r| v[r]).collect();
                    let c = ridge_fixed(&select_rows(x, train), &yt, lambda)?;
                    let pred = c.linear_predictor(&select_rows(x, test));
                    Ok(test.iter().zip(pred.iter()).map(|(&r, p)| (v[r] - p).powi(2)).sum())
                })?;
                Ok(Ridge {
                    coefs: vec![ridge_fixed(x, v, lambda)?],
                    lambdas: vec![lambda],
                    n_classes: None,
                })
            }
            TargetValues::Classes { codes, n_classes } => {
                let classes: Vec<usize> = if *n_classes == 2 { vec![1] } else { (0..*n_classes).collect() };
                let mut coefs = Vec::new();
                let mut lambdas = Vec::new();
                for c in classes {
                    let yc: Vec<f64> = codes.iter().map(|&k| if k as usize == c { 1.0 } else { 0.0 }).collect();
                    let lambda = cv_select(&grid, folds.as_ref(), |train, test, lambda| {
                        let yt: Vec<f64> = train.iter().map(|&r| yc[r]).collect();
                        let coef = logistic_fixed(&select_rows(x, train), &yt, lambda, None)?;
                        let eta = coef.linear_predictor(&select_rows(x, test));
                        Ok(test.iter().zip(eta.iter()).map(|(&r, e)| log_loss(sigmoid(*e), yc[r])).sum())
                    })?;
                    coefs.push(logistic_fixed(x, &yc, lambda, None)?);
                    lambdas.push(lambda);
                }
                Ok(Ridge {
                    coefs,
                    lambdas,
                    n_classes: Some(*n_classes),
                })
            }
        }
    }
}

impl Model for Ridge {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Predictions> {
        let n = x.nrows();
        Ok(match self.n_classes {
            None => Predictions::Regression(self.coefs[0].linear_predictor(x).iter().copied().collect()),
            Some(2) => {
                let eta = self.coefs[0].linear_predictor(x);
                Predictions::Scores(DMatrix::from_fn(n, 2, |i, c| {
                    let p = sigmoid(eta[i]);
                    if c == 1 {
                        p
                    } else {
                        1.0 - p
                    }
                }))
            }
            Some(k) => {
                let mut m = DMatrix::zeros(n, k);
                for (c, coef) in self.coefs.iter().enumerate() {
                    let eta = coef.linear_predictor(x);
                    for i in 0..n {
                        m[(i, c)] = sigmoid(eta[i]).max(1e-300);
                    }
                }
                for i in 0..n {
                    let s: f64 = m.row(i).sum();
                    for c in 0..k {
                        m[(i, c)] /= s;
                    }
                }
                Predictions::Scores(m)
            }
        })
    }
}
