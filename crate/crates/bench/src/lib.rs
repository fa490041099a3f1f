//! Fixtures shared by the criterion benches.

use catenc_core::evaluation::Relation;
use catenc_core::synth::{categorical_signal, SignalSpec};
use catenc_core::{DataTable, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Table with one categorical signal feature and two numeric noise
/// features.
pub fn signal_table(n_rows: usize, n_levels: usize, task: TaskKind, seed: u64) -> DataTable {
    categorical_signal(&SignalSpec {
        n_rows,
        n_levels,
        n_noise_features: 2,
        task,
        seed,
        ..SignalSpec::default()
    })
    .expect("valid synthetic spec")
}

/// `count` random antisymmetric relations on `m` items.
pub fn random_relations(m: usize, count: usize, seed: u64) -> Vec<Relation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<String> = (0..m).map(|i| format!("c{i}")).collect();
    (0..count)
        .map(|_| {
            let mut r = Relation::empty(labels.clone());
            for i in 0..m {
                for j in i + 1..m {
                    match rng.random_range(0..3) {
                        0 => r.beats[i][j] = true,
                        1 => r.beats[j][i] = true,
                        _ => {}
                    }
                }
            }
            r
        })
        .collect()
}

/// Scores and binary labels with about half positives.
pub fn scored_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let label = rng.random_bool(0.5);
            let score = rng.random::<f64>() + if label { 0.3 } else { 0.0 };
            (score, label)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_well_formed() {
        assert!(random_relations(5, 10, 1).iter().all(Relation::is_antisymmetric));
        let (s, l) = scored_labels(100, 2);
        assert_eq!((s.len(), l.len()), (100, 100));
        assert_eq!(signal_table(100, 10, TaskKind::Binary, 3).n_rows(), 100);
    }
}
