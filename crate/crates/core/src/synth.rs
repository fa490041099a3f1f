//! Synthetic tables with a known generative model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::table::{Column, DataTable, TaskKind};

/// One categorical feature whose levels shift a latent score, plus optional
/// numeric noise features.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalSpec {
    pub n_rows: usize,
    pub n_levels: usize,
    pub effect_sd: f64,
    pub noise_sd: f64,
    pub n_noise_features: usize,
    pub task: TaskKind,
    pub seed: u64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            n_rows: 3000,
            n_levels: 200,
            effect_sd: 1.0,
            noise_sd: 2.0,
            n_noise_features: 0,
            task: TaskKind::Binary,
            seed: 0,
        }
    }
}

fn normal(sd: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(format!("bad standard deviation {sd}: {e}")))
}

/// Level `l` has effect `u_l ~ N(0, effect_sd²)`; the latent score of a row
/// is `u_l + e` with `e ~ N(0, noise_sd²)`. Regression targets are the score,
/// binary targets its sign, multiclass targets its tercile.
pub fn categorical_signal(spec: &SignalSpec) -> Result<DataTable> {
    if spec.n_rows == 0 || spec.n_levels == 0 {
        return Err(Error::InvalidArgument("need at least one row and one level".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let effect = normal(spec.effect_sd)?;
    let noise = normal(spec.noise_sd)?;
    let width = spec.n_levels.to_string().len();
    let labels: Vec<String> = (0..spec.n_levels).map(|l| format!("L{l:0width$}")).collect();
    let effects: Vec<f64> = (0..spec.n_levels).map(|_| effect.sample(&mut rng)).collect();
    let levels: Vec<usize> = (0..spec.n_rows).map(|_| rng.random_range(0..spec.n_levels)).collect();
    let score: Vec<f64> = levels.iter().map(|&l| effects[l] + noise.sample(&mut rng)).collect();

    let mut columns = vec![Column::categorical_dense(
        "x",
        &levels.iter().map(|&l| labels[l].as_str()).collect::<Vec<_>>(),
    )];
    let unit = normal(1.0)?;
    for k in 0..spec.n_noise_features {
        let v: Vec<f64> = (0..spec.n_rows).map(|_| unit.sample(&mut rng)).collect();
        columns.push(Column::numeric_dense(format!("z{k}"), &v));
    }
    let target = match spec.task {
        TaskKind::Regression => Column::numeric_dense("y", &score),
        TaskKind::Binary => Column::categorical_dense(
            "y",
            &score.iter().map(|&s| if s > 0.0 { "pos" } else { "neg" }).collect::<Vec<_>>(),
        ),
        TaskKind::Multiclass(_) => {
            let sd = (spec.effect_sd.powi(2) + spec.noise_sd.powi(2)).sqrt();
            let cut = 0.4307 * sd;
            Column::categorical_dense(
                "y",
                &score
                    .iter()
                    .map(|&s| if s < -cut { "low" } else if s > cut { "high" } else { "mid" })
                    .collect::<Vec<_>>(),
            )
        }
    };
    columns.push(target);
    DataTable::new(columns, "y")
}

/// Regression table whose only feature is a unique row identifier and
/// whose target is independent standard normal noise.
pub fn unique_id_noise(n_rows: usize, seed: u64) -> Result<DataTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = normal(1.0)?;
    let ids: Vec<String> = (0..n_rows).map(|i| format!("id{i}")).collect();
    let y: Vec<f64> = (0..n_rows).map(|_| unit.sample(&mut rng)).collect();
    DataTable::new(
        vec![Column::categorical_dense("id", &ids), Column::numeric_dense("y", &y)],
        "y",
    )
}
