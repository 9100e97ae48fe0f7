#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut impl Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Least-squares `θ` minimizing `‖Φ θ − Y‖` via the normal equations,
/// with samples as rows of `phi` and `y`.
pub fn normal_equations(phi: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = phi.transpose() * phi;
    let rhs = phi.transpose() * y;
    gram.cholesky().expect("full-rank design").solve(&rhs)
}

pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Small but genuinely trained models, built once per test binary.
pub fn quick_models() -> &'static motion_bench::predictor::TrainedModels {
    use motion_bench::human::{dataset_pairs, default_patterns, generate_dataset};
    use motion_bench::linear::{train_linear, TrainingConfig};
    use motion_bench::network::train_network;
    static MODELS: std::sync::OnceLock<motion_bench::predictor::TrainedModels> = std::sync::OnceLock::new();
    MODELS.get_or_init(|| {
        let pairs = dataset_pairs(&generate_dataset(&default_patterns(), 5, 77).unwrap()).unwrap();
        let config = TrainingConfig {
            epochs: 20,
            ..TrainingConfig::default()
        };
        motion_bench::predictor::TrainedModels {
            linear: train_linear(&pairs, &config).unwrap().params,
            network: train_network(&pairs, 40, &config).unwrap().params,
        }
    })
}
