//! Exact filtering and smoothing for the static-PE* / Markov-z network.
//!
//! The forward recursion works on `M x N` matrices indexed by `(z level, PE*
//! level)`:
//!
//! ```text
//! A_1 = (1/c_1) Phi_1 o (u v^T)
//! A_t = (1/c_t) Phi_t o (W A_{t-1})
//! ```
//!
//! and the backward recursion on matrices of the same shape:
//!
//! ```text
//! B_{T-1} = (1/c_T) W^T Phi_T
//! B_t     = (1/c_{t+1}) W^T (Phi_{t+1} o B_{t+1})
//! ```
//!
//! Emission densities are evaluated in log space and shifted by their per-step
//! maximum before exponentiation. The shift cancels in every normalized
//! quantity and is added back into `ln c_t`, so long series with small sigma do
//! not underflow.

use ndarray::{Array2, Array3, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::model::{log_emission_density, validate_params, ModelParams, StateGrids};

/// Emission matrices shifted by their per-step log maximum.
#[derive(Debug, Clone)]
pub(crate) struct ScaledEmissions {
    pub(crate) phi: Vec<Array2<f64>>,
    pub(crate) log_shift: Vec<f64>,
}

impl ScaledEmissions {
    pub(crate) fn new(y: &[f64], grids: &StateGrids, sigma: f64) -> Self {
        let (m, n) = (grids.z_len(), grids.pe_len());
        let mut phi = Vec::with_capacity(y.len());
        let mut log_shift = Vec::with_capacity(y.len());
        for &obs in y {
            let (mat, shift) = scaled_emission(obs, grids, sigma, m, n);
            phi.push(mat);
            log_shift.push(shift);
        }
        ScaledEmissions { phi, log_shift }
    }
}

fn scaled_emission(
    y: f64,
    grids: &StateGrids,
    sigma: f64,
    m: usize,
    n: usize,
) -> (Array2<f64>, f64) {
    let mut mat =
        Array2::from_shape_fn((m, n), |(i, j)| log_emission_density(y, i, j, grids, sigma));
    let shift = mat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mat.mapv_inplace(|v| (v - shift).exp());
    (mat, shift)
}

/// `(W A)(m, n) = sum_i W[m, i] A[i, n]`.
fn propagate(transition: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    transition.dot(a)
}

/// Online forward filter. Each [`step`](ForwardFilter::step) consumes one
/// observation and yields `p(z_t, PE* | y_1..y_t)`.
///
/// Continuing a filter past the end of a training window gives causal
/// estimates for later dates.
#[derive(Debug, Clone)]
pub struct ForwardFilter<'a> {
    params: &'a ModelParams,
    grids: &'a StateGrids,
    current: Option<Array2<f64>>,
    log_likelihood: f64,
    steps: usize,
}

impl<'a> ForwardFilter<'a> {
    pub fn new(params: &'a ModelParams, grids: &'a StateGrids) -> Result<Self> {
        validate_params(params, grids)?;
        Ok(ForwardFilter {
            params,
            grids,
            current: None,
            log_likelihood: 0.0,
            steps: 0,
        })
    }

    pub fn step(&mut self, y: f64) -> Result<&Array2<f64>> {
        let (phi, shift) = scaled_emission(
            y,
            self.grids,
            self.params.sigma,
            self.grids.z_len(),
            self.grids.pe_len(),
        );
        let (a, c) = forward_step(self.params, self.current.as_ref(), &phi, self.steps)?;
        self.log_likelihood += c.ln() + shift;
        self.steps += 1;
        Ok(self.current.insert(a))
    }

    /// Filtered posterior after the latest step, if any.
    pub fn posterior(&self) -> Option<&Array2<f64>> {
        self.current.as_ref()
    }

    /// `ln p(y_1..y_t)` over the steps taken so far.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// One forward step on pre-scaled emissions; returns `(A_t, scaled c_t)`.
fn forward_step(
    params: &ModelParams,
    prev: Option<&Array2<f64>>,
    phi: &Array2<f64>,
    step: usize,
) -> Result<(Array2<f64>, f64)> {
    let predicted = match prev {
        None => {
            let u = params.initial_z.view().insert_axis(ndarray::Axis(1));
            let v = params.initial_pe.view().insert_axis(ndarray::Axis(0));
            u.dot(&v)
        }
        Some(a) => propagate(&params.transition, a),
    };
    let mut a = phi * &predicted;
    let c = a.sum();
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::NumericalUnderflow { step: step + 1 });
    }
    a /= c;
    Ok((a, c))
}

/// Output of [`filter`].
#[derive(Debug, Clone)]
pub struct Filtered {
    /// `A_t(m, n) = p(z_t = a_m, PE* = b_n | y_1..y_t)`, one per step.
    pub posteriors: Vec<Array2<f64>>,
    /// `ln c_t`. The constants themselves can underflow for long, sharp
    /// series, so only their logarithms are kept.
    pub log_c: Vec<f64>,
}

impl Filtered {
    /// `c_t = exp(ln c_t)`.
    pub fn c(&self) -> Vec<f64> {
        self.log_c.iter().map(|l| l.exp()).collect()
    }

    pub fn log_likelihood(&self) -> f64 {
        log_likelihood(&self.log_c)
    }
}

struct ForwardPass {
    posteriors: Vec<Array2<f64>>,
    scaled_c: Vec<f64>,
}

fn forward_pass(params: &ModelParams, em: &ScaledEmissions) -> Result<ForwardPass> {
    let mut posteriors: Vec<Array2<f64>> = Vec::with_capacity(em.phi.len());
    let mut scaled_c = Vec::with_capacity(em.phi.len());
    for (t, phi) in em.phi.iter().enumerate() {
        let (a, c) = forward_step(params, posteriors.last(), phi, t)?;
        posteriors.push(a);
        scaled_c.push(c);
    }
    Ok(ForwardPass {
        posteriors,
        scaled_c,
    })
}

fn check_len(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InvalidObservations(
            "inference needs at least one observation".into(),
        ));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidObservations(format!(
            "non-finite observation {bad}"
        )));
    }
    Ok(())
}

/// Forward filtering over the log observed PE series `y`.
pub fn filter(y: &[f64], params: &ModelParams, grids: &StateGrids) -> Result<Filtered> {
    check_len(y)?;
    validate_params(params, grids)?;
    let em = ScaledEmissions::new(y, grids, params.sigma);
    let pass = forward_pass(params, &em)?;
    let log_c = pass
        .scaled_c
        .iter()
        .zip(&em.log_shift)
        .map(|(c, s)| c.ln() + s)
        .collect();
    Ok(Filtered {
        posteriors: pass.posteriors,
        log_c,
    })
}

/// `ln p(y_1..y_T) = sum_t ln c_t`.
pub fn log_likelihood(log_c: &[f64]) -> f64 {
    log_c.iter().sum()
}

/// Filtered, backward and smoothed matrices for one observation window.
#[derive(Debug, Clone)]
pub struct PosteriorBundle {
    /// `A_t`, one per observation.
    pub filtered: Vec<Array2<f64>>,
    /// `B_t` for `t < T` (length `T - 1`).
    pub backward: Vec<Array2<f64>>,
    /// `ln c_t`.
    pub log_c: Vec<f64>,
    /// `gamma_t(m, n) = p(z_t = a_m, PE* = b_n | y_1..y_T)`.
    pub smoothed: Vec<Array2<f64>>,
}

impl PosteriorBundle {
    pub fn len(&self) -> usize {
        self.filtered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }

    pub fn log_likelihood(&self) -> f64 {
        log_likelihood(&self.log_c)
    }

    /// `p(PE* = b_n | y_1..y_T)`.
    pub fn pe_marginal(&self) -> Vec<f64> {
        let last = self.smoothed.last().expect("bundle is never empty");
        last.sum_axis(ndarray::Axis(0)).to_vec()
    }
}

/// Everything the E-step needs, computed in one forward-backward sweep.
pub(crate) struct Sweep {
    pub(crate) bundle: PosteriorBundle,
    pub(crate) emissions: ScaledEmissions,
    pub(crate) scaled_c: Vec<f64>,
}

pub(crate) fn sweep(y: &[f64], params: &ModelParams, grids: &StateGrids) -> Result<Sweep> {
    check_len(y)?;
    validate_params(params, grids)?;
    let em = ScaledEmissions::new(y, grids, params.sigma);
    let ForwardPass {
        posteriors,
        scaled_c,
    } = forward_pass(params, &em)?;
    let t_len = y.len();
    let (m, n) = (grids.z_len(), grids.pe_len());

    // Backward pass: B_{T-1} uses an implicit all-ones B_T.
    let wt = params.transition.t();
    let mut backward = vec![Array2::<f64>::zeros((m, n)); t_len.saturating_sub(1)];
    let mut next = Array2::<f64>::ones((m, n));
    for t in (0..t_len.saturating_sub(1)).rev() {
        let weighted = &em.phi[t + 1] * &next;
        let mut b = wt.dot(&weighted);
        b /= scaled_c[t + 1];
        backward[t] = b.clone();
        next = b;
    }

    let smoothed = posteriors
        .iter()
        .enumerate()
        .map(|(t, a)| match backward.get(t) {
            Some(b) => a * b,
            None => a.clone(),
        })
        .collect();

    let log_c = scaled_c
        .iter()
        .zip(&em.log_shift)
        .map(|(c, s)| c.ln() + s)
        .collect();

    Ok(Sweep {
        bundle: PosteriorBundle {
            filtered: posteriors,
            backward,
            log_c,
            smoothed,
        },
        emissions: em,
        scaled_c,
    })
}

/// Forward-backward smoothing.
pub fn smooth(y: &[f64], params: &ModelParams, grids: &StateGrids) -> Result<PosteriorBundle> {
    Ok(sweep(y, params, grids)?.bundle)
}

/// Pairwise factor `A_t(m,n) w_im phi_in(y_{t+1}) B~_{t+1}(i,n) / c_{t+1}` for
/// one step, written through `f(i, m, n, value)`.
fn for_each_pair(
    s: &Sweep,
    params: &ModelParams,
    t: usize,
    mut f: impl FnMut(usize, usize, usize, f64),
) {
    let a = &s.bundle.filtered[t];
    let phi = &s.emissions.phi[t + 1];
    let c = s.scaled_c[t + 1];
    let ones;
    let b_next: ArrayView2<f64> = match s.bundle.backward.get(t + 1) {
        Some(b) => b.view(),
        None => {
            ones = Array2::<f64>::ones(a.dim());
            ones.view()
        }
    };
    let lookahead = phi * &b_next;
    let (m_len, n_len) = a.dim();
    for i in 0..m_len {
        for m in 0..m_len {
            let w = params.transition[(i, m)];
            if w == 0.0 {
                continue;
            }
            for n in 0..n_len {
                f(i, m, n, a[(m, n)] * w * lookahead[(i, n)] / c);
            }
        }
    }
}

/// `xi_t(i, m, n) = p(z_{t+1} = a_i, z_t = a_m, PE* = b_n | y_1..y_T)` for
/// `t = 1..T-1`, each as an `M x M x N` array indexed `[i, m, n]`.
pub fn pairwise_smooth(
    y: &[f64],
    params: &ModelParams,
    grids: &StateGrids,
) -> Result<Vec<Array3<f64>>> {
    let s = sweep(y, params, grids)?;
    let (m, n) = (grids.z_len(), grids.pe_len());
    Ok((0..y.len() - 1)
        .map(|t| {
            let mut xi = Array3::<f64>::zeros((m, m, n));
            for_each_pair(&s, params, t, |i, k, j, v| xi[(i, k, j)] = v);
            xi
        })
        .collect())
}

/// `sum_t sum_n xi_t(i, m, n)`, the expected number of `m -> i` moves.
pub(crate) fn expected_transitions(s: &Sweep, params: &ModelParams) -> Array2<f64> {
    let m = params.z_len();
    let mut counts = Array2::<f64>::zeros((m, m));
    for t in 0..s.bundle.len().saturating_sub(1) {
        for_each_pair(s, params, t, |i, k, _, v| counts[(i, k)] += v);
    }
    counts
}

/// Posterior mode of PE*.
#[derive(Debug, Clone, PartialEq)]
pub struct PeEstimate {
    pub index: usize,
    pub value: f64,
    pub marginal: Vec<f64>,
}

/// Most probable PE* level from a smoothed bundle, ties to the lower index.
pub fn map_pe(bundle: &PosteriorBundle, grids: &StateGrids) -> PeEstimate {
    let marginal = bundle.pe_marginal();
    let index = argmax(&marginal);
    PeEstimate {
        index,
        value: grids.pe_values()[index],
        marginal,
    }
}

/// Point estimates of the current mispricing level from a filtered matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZEstimate {
    /// Mode of the z marginal (lowest index on ties).
    pub index: usize,
    pub value: f64,
    /// Posterior mean of z, for diagnostics.
    pub mean: f64,
}

pub fn filtered_z_estimate(a_t: &Array2<f64>, grids: &StateGrids) -> ZEstimate {
    let marginal = a_t.sum_axis(ndarray::Axis(1)).to_vec();
    let index = argmax(&marginal);
    let mean = Zip::from(&a_t.sum_axis(ndarray::Axis(1)))
        .and(grids.z_values())
        .fold(0.0, |acc, &p, &z| acc + p * z);
    ZEstimate {
        index,
        value: grids.z_values()[index],
        mean,
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = k;
        }
    }
    best
}
