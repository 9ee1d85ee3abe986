//! Fixtures shared by the benchmarks.

use mixsdr::estim::{fit_mle, FitOptions, MleFit};
use mixsdr::model::{FyBasis, FySpec};
use mixsdr::simbench::{Scenario, ScenarioName};
use mixsdr::Dataset;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn dataset(name: ScenarioName, n: usize) -> Dataset {
    Scenario::new(name)
        .generate(n, &mut ChaCha8Rng::seed_from_u64(7))
        .expect("scenario data")
}

pub fn fitted(data: &Dataset) -> (FyBasis, MleFit) {
    let fy = FyBasis::build(&data.y, FySpec::Categorical).expect("basis");
    let fit = fit_mle(data, &fy, FitOptions::default()).expect("fit");
    (fy, fit)
}

/// `(b, B)` with `B = K1 R1ᵀ` from the rank-`d` singular value decomposition of `b`.
pub fn factorized(b: &DMatrix<f64>, d: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let svd = b.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let bb = DMatrix::from_fn(d, b.ncols(), |k, j| {
        svd.singular_values[order[k]] * v_t[(order[k], j)]
    });
    (b.clone(), bb)
}
