#![allow(dead_code)]

use ndarray::{Array1, Array2};
use pe_dbn::{ModelParams, StateGrids};
use pe_dbn_oracle::Dbn;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Converts a model into the oracle's plain representation.
pub fn to_oracle(params: &ModelParams, grids: &StateGrids) -> Dbn {
    let m = grids.z_len();
    Dbn {
        z: grids.z_values().to_vec(),
        pe: grids.pe_values().to_vec(),
        w: (0..m)
            .map(|i| (0..m).map(|k| params.transition[(i, k)]).collect())
            .collect(),
        u: params.initial_z.to_vec(),
        v: params.initial_pe.to_vec(),
        sigma: params.sigma,
    }
}

pub fn simplex<R: Rng>(k: usize, rng: &mut R) -> Array1<f64> {
    let g = Gamma::new(1.0, 1.0).unwrap();
    let x: Array1<f64> = (0..k).map(|_| g.sample(rng) + 1e-3).collect();
    let s = x.sum();
    x / s
}

pub fn random_params<R: Rng>(m: usize, n: usize, sigma: f64, rng: &mut R) -> ModelParams {
    let mut transition = Array2::zeros((m, m));
    for mut col in transition.columns_mut() {
        col.assign(&simplex(m, rng));
    }
    ModelParams::new(transition, simplex(m, rng), simplex(n, rng), sigma)
}

/// Strictly increasing values spread over `[lo, hi]` with jitter.
pub fn sorted_levels<R: Rng>(k: usize, lo: f64, hi: f64, rng: &mut R) -> Vec<f64> {
    let step = (hi - lo) / k as f64;
    (0..k)
        .map(|i| lo + step * (i as f64 + rng.random_range(0.1..0.9)))
        .collect()
}

pub fn random_grids<R: Rng>(m: usize, n: usize, rng: &mut R) -> StateGrids {
    StateGrids::new(
        sorted_levels(m, -0.3, 0.3, rng),
        sorted_levels(n, 6.0, 30.0, rng),
    )
    .unwrap()
}

/// Observations scattered around randomly chosen latent means.
pub fn random_y<R: Rng>(grids: &StateGrids, sigma: f64, t: usize, rng: &mut R) -> Vec<f64> {
    (0..t)
        .map(|_| {
            let m = rng.random_range(0..grids.z_len());
            let n = rng.random_range(0..grids.pe_len());
            grids.log_mean(m, n) + sigma * rng.random_range(-2.0..2.0)
        })
        .collect()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for ((i, j), &x) in a.indexed_iter() {
        worst = worst.max((x - b[i][j]).abs());
    }
    worst
}
