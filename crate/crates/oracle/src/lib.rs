//! Brute-force reference computations for the three-layer price model.
//!
//! Everything here enumerates latent configurations explicitly and works from
//! the model's definition (Gaussian emission around `ln(b_n (1 + a_m))`,
//! Markov chain on the mispricing level, static fundamental multiple). Nothing
//! in this crate shares code with the recursive implementation it checks.

use std::f64::consts::PI;

/// A fully specified model in plain nested vectors.
///
/// `w[i][m]` is the probability of moving to level `i` from level `m`.
#[derive(Debug, Clone)]
pub struct Dbn {
    pub z: Vec<f64>,
    pub pe: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma: f64,
}

pub fn gaussian(y: f64, mean: f64, sigma: f64) -> f64 {
    let d = (y - mean) / sigma;
    (-0.5 * d * d).exp() / (sigma * (2.0 * PI).sqrt())
}

impl Dbn {
    pub fn m(&self) -> usize {
        self.z.len()
    }

    pub fn n(&self) -> usize {
        self.pe.len()
    }

    pub fn emission(&self, y: f64, m: usize, n: usize) -> f64 {
        gaussian(y, (self.pe[n] * (1.0 + self.z[m])).ln(), self.sigma)
    }

    /// p(y_1..y_T, z_1..z_T, PE* = b_n).
    pub fn joint(&self, y: &[f64], path: &[usize], n: usize) -> f64 {
        let mut p = self.v[n] * self.u[path[0]];
        for t in 0..y.len() {
            if t > 0 {
                p *= self.w[path[t]][path[t - 1]];
            }
            p *= self.emission(y[t], path[t], n);
        }
        p
    }

    /// ln p(y, z, PE*) evaluated term by term. Terms with zero probability give -inf.
    pub fn log_joint(&self, y: &[f64], path: &[usize], n: usize) -> f64 {
        let mut lp = self.v[n].ln() + self.u[path[0]].ln();
        for t in 0..y.len() {
            if t > 0 {
                lp += self.w[path[t]][path[t - 1]].ln();
            }
            lp += self.emission(y[t], path[t], n).ln();
        }
        lp
    }
}

/// Every latent path of length `t` over `m` levels, in lexicographic order.
pub fn all_paths(m: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..t {
        let mut next = Vec::with_capacity(out.len() * m);
        for p in &out {
            for s in 0..m {
                let mut q = p.clone();
                q.push(s);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// p(y_1..y_T), summed over all M^T * N configurations.
pub fn likelihood(model: &Dbn, y: &[f64]) -> f64 {
    let mut total = 0.0;
    for path in all_paths(model.m(), y.len()) {
        for n in 0..model.n() {
            total += model.joint(y, &path, n);
        }
    }
    total
}

/// p(z_t, PE* | y_1..y_t) for the last index of `y`, as `[m][n]`.
pub fn filtered_last(model: &Dbn, y: &[f64]) -> Vec<Vec<f64>> {
    let t = y.len();
    let mut out = vec![vec![0.0; model.n()]; model.m()];
    let mut total = 0.0;
    for path in all_paths(model.m(), t) {
        for n in 0..model.n() {
            let p = model.joint(y, &path, n);
            out[path[t - 1]][n] += p;
            total += p;
        }
    }
    normalize2(&mut out, total);
    out
}

/// p(z_t, PE* | y_1..y_t) for every t.
pub fn filtered(model: &Dbn, y: &[f64]) -> Vec<Vec<Vec<f64>>> {
    (1..=y.len())
        .map(|t| filtered_last(model, &y[..t]))
        .collect()
}

/// p(z_t, PE* | y_1..y_T) for every t.
pub fn smoothed(model: &Dbn, y: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let t_len = y.len();
    let mut out = vec![vec![vec![0.0; model.n()]; model.m()]; t_len];
    let mut total = 0.0;
    for path in all_paths(model.m(), t_len) {
        for n in 0..model.n() {
            let p = model.joint(y, &path, n);
            total += p;
            for t in 0..t_len {
                out[t][path[t]][n] += p;
            }
        }
    }
    for g in &mut out {
        normalize2(g, total);
    }
    out
}

/// p(z_{t+1} = i, z_t = m, PE* = n | y_1..y_T) for t = 1..T-1, as `[t][i][m][n]`.
pub fn pairwise(model: &Dbn, y: &[f64]) -> Vec<Vec<Vec<Vec<f64>>>> {
    let (mm, nn, t_len) = (model.m(), model.n(), y.len());
    let mut out = vec![vec![vec![vec![0.0; nn]; mm]; mm]; t_len.saturating_sub(1)];
    let mut total = 0.0;
    for path in all_paths(mm, t_len) {
        for n in 0..nn {
            let p = model.joint(y, &path, n);
            total += p;
            for t in 0..t_len - 1 {
                out[t][path[t + 1]][path[t]][n] += p;
            }
        }
    }
    for xi in &mut out {
        for slab in xi.iter_mut() {
            normalize2(slab, total);
        }
    }
    out
}

/// Expected complete-data log-likelihood E[ln p(y, z, PE* | eval)] under the
/// posterior of `posterior_at`.
pub fn expected_complete_log_likelihood(posterior_at: &Dbn, eval: &Dbn, y: &[f64]) -> f64 {
    let norm = likelihood(posterior_at, y);
    let mut q = 0.0;
    for path in all_paths(posterior_at.m(), y.len()) {
        for n in 0..posterior_at.n() {
            let weight = posterior_at.joint(y, &path, n) / norm;
            if weight > 0.0 {
                q += weight * eval.log_joint(y, &path, n);
            }
        }
    }
    q
}

/// Unnormalized Dirichlet log-density sum (k_i - 1) ln x_i.
pub fn dirichlet_kernel(x: &[f64], k: &[f64]) -> f64 {
    x.iter()
        .zip(k)
        .map(|(&xi, &ki)| if ki == 1.0 { 0.0 } else { (ki - 1.0) * xi.ln() })
        .sum()
}

/// Golden-section search for the maximizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

/// Exact mean and probability of a non-negative portfolio mean over all
/// `k`-subsets of `pool`.
pub fn exact_portfolio_stats(pool: &[f64], k: usize) -> (f64, f64, usize) {
    let mut sum = 0.0;
    let mut nonneg = 0usize;
    let mut count = 0usize;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mean = idx.iter().map(|&i| pool[i]).sum::<f64>() / k as f64;
        sum += mean;
        if mean >= 0.0 {
            nonneg += 1;
        }
        count += 1;
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return (sum / count as f64, nonneg as f64 / count as f64, count);
            }
            i -= 1;
            if idx[i] != i + pool.len() - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn normalize2(x: &mut [Vec<f64>], total: f64) {
    for row in x.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}
