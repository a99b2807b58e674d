//! Generative model: latent-state grids, parameters, Gaussian emissions and a
//! seeded sampler.
//!
//! Transition matrices follow the column convention: `transition[(i, m)]` is
//! `p(z_{t+1} = a_i | z_t = a_m)`, so every column is a distribution over the
//! next level.

use std::f64::consts::PI;
use std::fmt;

use chrono::NaiveDate;
use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on probability-vector sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Upper bound (exclusive) on the number of mispricing levels.
pub const MAX_Z_LEVELS: usize = 10;

/// Discrete supports of the mispricing level `z_t` and of `PE*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridsRepr", into = "GridsRepr")]
pub struct StateGrids {
    z_values: Vec<f64>,
    pe_values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridsRepr {
    z_values: Vec<f64>,
    pe_values: Vec<f64>,
}

impl TryFrom<GridsRepr> for StateGrids {
    type Error = Error;

    fn try_from(r: GridsRepr) -> Result<Self> {
        StateGrids::new(r.z_values, r.pe_values)
    }
}

impl From<StateGrids> for GridsRepr {
    fn from(g: StateGrids) -> Self {
        GridsRepr {
            z_values: g.z_values,
            pe_values: g.pe_values,
        }
    }
}

impl StateGrids {
    pub fn new(z_values: Vec<f64>, pe_values: Vec<f64>) -> Result<Self> {
        let m = z_values.len();
        if m == 0 || m >= MAX_Z_LEVELS {
            return Err(Error::InvalidGrids(format!(
                "need 1 <= M < {MAX_Z_LEVELS} mispricing levels, got {m}"
            )));
        }
        if pe_values.is_empty() {
            return Err(Error::InvalidGrids("need at least one PE* level".into()));
        }
        if z_values.iter().chain(&pe_values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrids("grid values must be finite".into()));
        }
        if !strictly_increasing(&z_values) {
            return Err(Error::InvalidGrids(
                "z levels must be strictly increasing".into(),
            ));
        }
        if !strictly_increasing(&pe_values) {
            return Err(Error::InvalidGrids(
                "PE* levels must be strictly increasing".into(),
            ));
        }
        if pe_values[0] <= 0.0 {
            return Err(Error::InvalidGrids("PE* levels must be positive".into()));
        }
        if z_values[0] <= -1.0 {
            return Err(Error::InvalidGrids("z levels must exceed -1".into()));
        }
        Ok(StateGrids {
            z_values,
            pe_values,
        })
    }

    /// `m` equally spaced mispricing levels on `[-half_width, half_width]`
    /// (a single level sits at zero).
    pub fn symmetric_z(m: usize, half_width: f64) -> Vec<f64> {
        if m == 1 {
            return vec![0.0];
        }
        linspace(-half_width, half_width, m)
    }

    /// Default grids for an automated pipeline: 7 levels on `[-0.3, 0.3]` and
    /// 15 PE* levels spanning the 5th..95th percentile of the observed PE.
    pub fn auto(observed_pe: &[f64]) -> Result<Self> {
        Self::auto_with(observed_pe, 7, 0.30, 15)
    }

    pub fn auto_with(observed_pe: &[f64], m: usize, half_width: f64, n: usize) -> Result<Self> {
        if observed_pe.is_empty() {
            return Err(Error::InvalidGrids(
                "no observed PE values to size the grid".into(),
            ));
        }
        let mut sorted = observed_pe.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut lo = percentile(&sorted, 0.05);
        let mut hi = percentile(&sorted, 0.95);
        if n > 1 && hi - lo <= 1e-9 * hi.abs().max(1.0) {
            // flat history: open a +-10% band around it
            lo *= 0.9;
            hi *= 1.1;
        }
        let pe = if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            linspace(lo, hi, n)
        };
        StateGrids::new(Self::symmetric_z(m, half_width), pe)
    }

    pub fn z_values(&self) -> &[f64] {
        &self.z_values
    }

    pub fn pe_values(&self) -> &[f64] {
        &self.pe_values
    }

    /// Number of mispricing levels `M`.
    pub fn z_len(&self) -> usize {
        self.z_values.len()
    }

    /// Number of PE* levels `N`.
    pub fn pe_len(&self) -> usize {
        self.pe_values.len()
    }

    /// Mean of the log observed PE in latent cell `(m, n)`: `ln(b_n (1 + a_m))`.
    pub fn log_mean(&self, m: usize, n: usize) -> f64 {
        (self.pe_values[n] * (1.0 + self.z_values[m])).ln()
    }

    pub fn log_means(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.z_len(), self.pe_len()), |(m, n)| self.log_mean(m, n))
    }
}

/// Model parameters `{W, u, v, sigma}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ParamsRepr", into = "ParamsRepr")]
pub struct ModelParams {
    /// `transition[(i, m)] = p(z_{t+1} = a_i | z_t = a_m)`.
    pub transition: Array2<f64>,
    /// `initial_z[m] = p(z_1 = a_m)`.
    pub initial_z: Array1<f64>,
    /// `initial_pe[n] = p(PE* = b_n)`.
    pub initial_pe: Array1<f64>,
    /// Standard deviation of the short-term noise.
    pub sigma: f64,
}

/// Row-major nested form used on disk: `transition[i][m]`.
#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    transition: Vec<Vec<f64>>,
    initial_z: Vec<f64>,
    initial_pe: Vec<f64>,
    sigma: f64,
}

impl From<ParamsRepr> for ModelParams {
    fn from(r: ParamsRepr) -> Self {
        let rows = r.transition.len();
        let cols = r.transition.first().map_or(0, Vec::len);
        // Ragged input becomes an empty matrix and fails validation later.
        let transition = if r.transition.iter().all(|row| row.len() == cols) {
            Array2::from_shape_fn((rows, cols), |(i, m)| r.transition[i][m])
        } else {
            Array2::zeros((0, 0))
        };
        ModelParams {
            transition,
            initial_z: Array1::from(r.initial_z),
            initial_pe: Array1::from(r.initial_pe),
            sigma: r.sigma,
        }
    }
}

impl From<ModelParams> for ParamsRepr {
    fn from(p: ModelParams) -> Self {
        ParamsRepr {
            transition: p.transition.outer_iter().map(|row| row.to_vec()).collect(),
            initial_z: p.initial_z.to_vec(),
            initial_pe: p.initial_pe.to_vec(),
            sigma: p.sigma,
        }
    }
}

impl ModelParams {
    pub fn new(
        transition: Array2<f64>,
        initial_z: Array1<f64>,
        initial_pe: Array1<f64>,
        sigma: f64,
    ) -> Self {
        ModelParams {
            transition,
            initial_z,
            initial_pe,
            sigma,
        }
    }

    /// Uniform initial vectors and a transition matrix that stays put with
    /// probability `stay` and otherwise moves uniformly.
    pub fn persistent(m: usize, n: usize, stay: f64, sigma: f64) -> Self {
        let transition = if m == 1 {
            Array2::ones((1, 1))
        } else {
            let off = (1.0 - stay) / (m - 1) as f64;
            Array2::from_shape_fn((m, m), |(i, k)| if i == k { stay } else { off })
        };
        ModelParams {
            transition,
            initial_z: Array1::from_elem(m, 1.0 / m as f64),
            initial_pe: Array1::from_elem(n, 1.0 / n as f64),
            sigma,
        }
    }

    pub fn z_len(&self) -> usize {
        self.initial_z.len()
    }

    pub fn pe_len(&self) -> usize {
        self.initial_pe.len()
    }
}

/// A single constraint violation found by [`validate_params`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
    NonStochasticColumn {
        column: usize,
        sum: f64,
    },
    OutOfRangeEntry {
        what: &'static str,
        index: String,
        value: f64,
    },
    NonStochasticVector {
        what: &'static str,
        sum: f64,
    },
    NonPositiveSigma(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch: {what} expected {expected}, found {found}"
            ),
            Violation::NonStochasticColumn { column, sum } => {
                write!(
                    f,
                    "non-stochastic column {column} of transition (sum {sum})"
                )
            }
            Violation::OutOfRangeEntry { what, index, value } => {
                write!(f, "{what}{index} = {value} is outside [0, 1]")
            }
            Violation::NonStochasticVector { what, sum } => {
                write!(f, "non-stochastic vector {what} (sum {sum})")
            }
            Violation::NonPositiveSigma(s) => write!(f, "sigma must be positive, got {s}"),
        }
    }
}

/// Every violation found in a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<Violation>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

/// Checks `params` against the parameter space for `grids`, collecting every
/// violation.
pub fn validate_params(
    params: &ModelParams,
    grids: &StateGrids,
) -> std::result::Result<(), ValidationErrors> {
    let (m, n) = (grids.z_len(), grids.pe_len());
    let mut found = Vec::new();

    let w_dim = params.transition.dim();
    if w_dim != (m, m) {
        found.push(Violation::DimensionMismatch {
            what: "transition",
            expected: format!("{m}x{m}"),
            found: format!("{}x{}", w_dim.0, w_dim.1),
        });
    } else {
        for (col, column) in params.transition.columns().into_iter().enumerate() {
            for (row, &w) in column.iter().enumerate() {
                if !(0.0..=1.0).contains(&w) {
                    found.push(Violation::OutOfRangeEntry {
                        what: "transition",
                        index: format!("[{row},{col}]"),
                        value: w,
                    });
                }
            }
            let sum = column.sum();
            if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                found.push(Violation::NonStochasticColumn { column: col, sum });
            }
        }
    }

    check_vector(&mut found, "initial_z", &params.initial_z, m);
    check_vector(&mut found, "initial_pe", &params.initial_pe, n);

    if !(params.sigma > 0.0 && params.sigma.is_finite()) {
        found.push(Violation::NonPositiveSigma(params.sigma));
    }

    if found.is_empty() {
        Ok(())
    } else {
        Err(ValidationErrors(found))
    }
}

fn check_vector(found: &mut Vec<Violation>, what: &'static str, v: &Array1<f64>, len: usize) {
    if v.len() != len {
        found.push(Violation::DimensionMismatch {
            what,
            expected: len.to_string(),
            found: v.len().to_string(),
        });
        return;
    }
    for (k, &x) in v.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            found.push(Violation::OutOfRangeEntry {
                what,
                index: format!("[{k}]"),
                value: x,
            });
        }
    }
    let sum = v.sum();
    if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
        found.push(Violation::NonStochasticVector { what, sum });
    }
}

/// Natural log of the Gaussian emission density of `y` in cell `(m, n)`.
pub fn log_emission_density(y: f64, m: usize, n: usize, grids: &StateGrids, sigma: f64) -> f64 {
    let d = (y - grids.log_mean(m, n)) / sigma;
    -0.5 * d * d - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

/// Gaussian density `N(y; ln(b_n (1 + a_m)), sigma^2)`.
pub fn emission_density(y: f64, m: usize, n: usize, grids: &StateGrids, sigma: f64) -> f64 {
    log_emission_density(y, m, n, grids, sigma).exp()
}

/// The `M x N` emission matrix for one observation.
pub fn emission_matrix(y: f64, grids: &StateGrids, sigma: f64) -> Array2<f64> {
    Array2::from_shape_fn((grids.z_len(), grids.pe_len()), |(m, n)| {
        emission_density(y, m, n, grids, sigma)
    })
}

/// Dated prices, trailing earnings and the log observed PE `y_t = ln(P_t/E_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
    earnings: Vec<f64>,
    y: Vec<f64>,
}

impl ObservationSeries {
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>, earnings: Vec<f64>) -> Result<Self> {
        if dates.len() != prices.len() || dates.len() != earnings.len() {
            return Err(Error::InvalidObservations(format!(
                "length mismatch: {} dates, {} prices, {} earnings",
                dates.len(),
                prices.len(),
                earnings.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidObservations(
                "dates must be strictly increasing".into(),
            ));
        }
        if let Some(k) = prices.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidObservations(format!(
                "non-positive price {} on {}",
                prices[k], dates[k]
            )));
        }
        if let Some(k) = earnings.iter().position(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidObservations(format!(
                "non-positive earnings {} on {}",
                earnings[k], dates[k]
            )));
        }
        let y = prices
            .iter()
            .zip(&earnings)
            .map(|(p, e)| (p / e).ln())
            .collect();
        Ok(ObservationSeries {
            dates,
            prices,
            earnings,
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn earnings(&self) -> &[f64] {
        &self.earnings
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn observed_pe(&self) -> Vec<f64> {
        self.prices
            .iter()
            .zip(&self.earnings)
            .map(|(p, e)| p / e)
            .collect()
    }

    /// Splits into `(date <= last, date > last)`.
    pub fn split_after(&self, last: NaiveDate) -> (ObservationSeries, ObservationSeries) {
        let k = self.dates.partition_point(|d| *d <= last);
        let head = ObservationSeries {
            dates: self.dates[..k].to_vec(),
            prices: self.prices[..k].to_vec(),
            earnings: self.earnings[..k].to_vec(),
            y: self.y[..k].to_vec(),
        };
        let tail = ObservationSeries {
            dates: self.dates[k..].to_vec(),
            prices: self.prices[k..].to_vec(),
            earnings: self.earnings[k..].to_vec(),
            y: self.y[k..].to_vec(),
        };
        (head, tail)
    }
}

/// Latent values drawn by [`generate_series`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenTruth {
    pub z_indices: Vec<usize>,
    pub pe_index: usize,
}

/// Samples a series from the model on the given calendar and earnings path.
///
/// Noise enters additively in log space, `y_t = ln(PE* (1 + z_t)) + eps_t`,
/// and prices are reconstructed as `P_t = E_t exp(y_t)`.
pub fn generate_series(
    params: &ModelParams,
    grids: &StateGrids,
    dates: &[NaiveDate],
    earnings: &[f64],
    seed: u64,
) -> Result<(ObservationSeries, HiddenTruth)> {
    validate_params(params, grids)?;
    if dates.is_empty() || dates.len() != earnings.len() {
        return Err(Error::InvalidObservations(format!(
            "generator needs T >= 1 dates and matching earnings, got {} and {}",
            dates.len(),
            earnings.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pe_dist = WeightedIndex::new(params.initial_pe.iter().copied())
        .map_err(|e| Error::InvalidObservations(e.to_string()))?;
    let z_dist = WeightedIndex::new(params.initial_z.iter().copied())
        .map_err(|e| Error::InvalidObservations(e.to_string()))?;
    let step_dists = params
        .transition
        .columns()
        .into_iter()
        .map(|col| WeightedIndex::new(col.iter().copied()))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidObservations(e.to_string()))?;
    let noise =
        Normal::new(0.0, params.sigma).map_err(|e| Error::InvalidObservations(e.to_string()))?;

    let pe_index = pe_dist.sample(&mut rng);
    let mut z_indices = Vec::with_capacity(dates.len());
    let mut prices = Vec::with_capacity(dates.len());
    let mut z = z_dist.sample(&mut rng);
    for (t, &e) in earnings.iter().enumerate() {
        if t > 0 {
            z = step_dists[z].sample(&mut rng);
        }
        z_indices.push(z);
        let y = grids.log_mean(z, pe_index) + noise.sample(&mut rng);
        prices.push(e * y.exp());
    }
    let series = ObservationSeries::new(dates.to_vec(), prices, earnings.to_vec())?;
    Ok((
        series,
        HiddenTruth {
            z_indices,
            pe_index,
        },
    ))
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let step = (hi - lo) / (k - 1) as f64;
    (0..k)
        .map(|i| if i + 1 == k { hi } else { lo + step * i as f64 })
        .collect()
}

/// Linear-interpolation percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn days(t: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2012, 1, 2).unwrap();
        (0..t as u64)
            .map(|k| start + chrono::Days::new(k))
            .collect()
    }

    #[test]
    fn single_state_model_is_valid() {
        let grids = StateGrids::new(vec![0.0], vec![15.0]).unwrap();
        let p = ModelParams::new(array![[1.0]], array![1.0], array![1.0], 0.1);
        assert!(validate_params(&p, &grids).is_ok());
    }

    #[test]
    fn rejects_non_stochastic_column() {
        let grids = StateGrids::new(vec![-0.1, 0.1], vec![15.0]).unwrap();
        let p = ModelParams::new(
            array![[0.5, 0.5], [0.4, 0.5]],
            array![0.5, 0.5],
            array![1.0],
            0.1,
        );
        let err = validate_params(&p, &grids).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(matches!(
            err.0[0],
            Violation::NonStochasticColumn { column: 0, .. }
        ));
        assert!(err.to_string().contains("non-stochastic column"));
    }

    #[test]
    fn rejects_zero_sigma() {
        let grids = StateGrids::new(vec![0.0], vec![15.0]).unwrap();
        let p = ModelParams::new(array![[1.0]], array![1.0], array![1.0], 0.0);
        let err = validate_params(&p, &grids).unwrap_err();
        assert_eq!(err.0, vec![Violation::NonPositiveSigma(0.0)]);
    }

    #[test]
    fn reports_every_violation() {
        let grids = StateGrids::new(vec![-0.1, 0.1], vec![10.0, 20.0]).unwrap();
        let p = ModelParams::new(array![[1.0]], array![0.2, 0.2], array![1.0], -1.0);
        let err = validate_params(&p, &grids).unwrap_err();
        // transition dims, initial_z sum, initial_pe dims, sigma
        assert_eq!(err.0.len(), 4, "{err}");
    }

    #[test]
    fn grid_invariants() {
        assert!(StateGrids::new(vec![], vec![1.0]).is_err());
        assert!(StateGrids::new(vec![0.0; 10], vec![1.0]).is_err());
        assert!(StateGrids::new((0..10).map(|k| k as f64 * 0.01).collect(), vec![1.0]).is_err());
        assert!(StateGrids::new((0..9).map(|k| k as f64 * 0.01).collect(), vec![1.0]).is_ok());
        assert!(StateGrids::new(vec![0.1, 0.0], vec![1.0]).is_err());
        assert!(StateGrids::new(vec![0.0], vec![0.0, 1.0]).is_err());
        assert!(StateGrids::new(vec![-1.0, 0.0], vec![1.0]).is_err());
        assert!(StateGrids::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn auto_grid_spans_percentiles() {
        let pe: Vec<f64> = (0..=100).map(|k| 10.0 + k as f64 * 0.1).collect();
        let g = StateGrids::auto(&pe).unwrap();
        assert_eq!(g.z_len(), 7);
        assert_eq!(g.pe_len(), 15);
        assert_relative_eq!(g.z_values()[0], -0.3);
        assert_relative_eq!(g.z_values()[6], 0.3);
        assert_relative_eq!(g.pe_values()[0], 10.5, epsilon = 1e-12);
        assert_relative_eq!(g.pe_values()[14], 19.5, epsilon = 1e-12);
        // constant history still yields a usable grid
        assert!(StateGrids::auto(&[12.0; 50]).is_ok());
    }

    #[test]
    fn emission_peak_and_one_sigma() {
        let grids = StateGrids::new(vec![-0.1, 0.05], vec![12.0, 20.0]).unwrap();
        let mu = grids.log_mean(1, 0);
        assert_relative_eq!(
            emission_density(mu, 1, 0, &grids, 0.1),
            3.989422804014327,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            emission_density(mu + 0.1, 1, 0, &grids, 0.1),
            2.419707245191434,
            epsilon = 1e-12
        );
        let g = StateGrids::new(vec![0.0], vec![20.0]).unwrap();
        assert_relative_eq!(
            emission_density(20f64.ln(), 0, 0, &g, 0.05),
            7.978845608028654,
            epsilon = 1e-12
        );
    }

    #[test]
    fn emission_matrix_symmetric_means() {
        // b_1 (1 + a_2) = 10 * 1.2 = 12 = 12 * 1.0 = b_2 (1 + a_1)
        let grids = StateGrids::new(vec![0.0, 0.2], vec![10.0, 12.0]).unwrap();
        let phi = emission_matrix(2.4, &grids, 0.2);
        assert_relative_eq!(phi[(0, 1)], phi[(1, 0)], epsilon = 1e-15);
        let one = emission_matrix(1.0, &StateGrids::new(vec![0.0], vec![3.0]).unwrap(), 0.3);
        assert_eq!(one.dim(), (1, 1));
        assert_eq!(
            one[(0, 0)],
            emission_density(
                1.0,
                0,
                0,
                &StateGrids::new(vec![0.0], vec![3.0]).unwrap(),
                0.3
            )
        );
    }

    #[test]
    fn emission_matrix_matches_cells() {
        let grids = StateGrids::new(vec![-0.2, 0.1], vec![8.0, 11.0, 17.0]).unwrap();
        let y = 2.31;
        let phi = emission_matrix(y, &grids, 0.07);
        for m in 0..2 {
            for n in 0..3 {
                let mu = (grids.pe_values()[n] * (1.0 + grids.z_values()[m])).ln();
                let direct =
                    (-(y - mu).powi(2) / (2.0 * 0.07 * 0.07)).exp() / (0.07 * (2.0 * PI).sqrt());
                assert_relative_eq!(phi[(m, n)], direct, max_relative = 1e-12);
                assert!(phi[(m, n)] > 0.0);
            }
        }
    }

    #[test]
    fn noiseless_single_state_series() {
        let grids = StateGrids::new(vec![0.0], vec![15.0]).unwrap();
        let p = ModelParams::persistent(1, 1, 1.0, 1e-9);
        let e: Vec<f64> = (0..20).map(|k| 1.0 + 0.1 * k as f64).collect();
        let (s, truth) = generate_series(&p, &grids, &days(20), &e, 3).unwrap();
        for t in 0..20 {
            assert!((s.y()[t] - 15f64.ln()).abs() < 1e-7);
            assert_relative_eq!(s.prices()[t], 15.0 * e[t], max_relative = 1e-7);
        }
        assert_eq!(truth.pe_index, 0);
    }

    #[test]
    fn identity_transition_freezes_chain() {
        let grids = StateGrids::new(vec![-0.1, 0.0, 0.1], vec![10.0, 20.0]).unwrap();
        let mut p = ModelParams::persistent(3, 2, 1.0, 0.05);
        p.transition = Array2::eye(3);
        for seed in 0..10 {
            let (_, truth) = generate_series(&p, &grids, &days(50), &[1.0; 50], seed).unwrap();
            assert!(truth.z_indices.iter().all(|&z| z == truth.z_indices[0]));
        }
    }

    #[test]
    fn generator_is_reproducible() {
        let grids = StateGrids::new(vec![-0.1, 0.1], vec![10.0, 20.0]).unwrap();
        let p = ModelParams::persistent(2, 2, 0.9, 0.05);
        let a = generate_series(&p, &grids, &days(40), &[2.0; 40], 11).unwrap();
        let b = generate_series(&p, &grids, &days(40), &[2.0; 40], 11).unwrap();
        let c = generate_series(&p, &grids, &days(40), &[2.0; 40], 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
        for t in 0..40 {
            let rebuilt = a.0.y()[t].exp() * a.0.earnings()[t];
            assert!((rebuilt - a.0.prices()[t]).abs() <= 1e-9 * a.0.prices()[t]);
        }
    }

    #[test]
    fn transition_frequencies_match_matrix() {
        let grids = StateGrids::new(vec![-0.1, 0.1], vec![10.0]).unwrap();
        let mut p = ModelParams::persistent(2, 1, 0.9, 0.05);
        p.transition = array![[0.9, 0.3], [0.1, 0.7]];
        let t = 100_000;
        let (_, truth) = generate_series(&p, &grids, &days(t), &vec![1.0; t], 5).unwrap();
        let mut counts = [[0.0f64; 2]; 2];
        for w in truth.z_indices.windows(2) {
            counts[w[1]][w[0]] += 1.0;
        }
        for m in 0..2 {
            let col = counts[0][m] + counts[1][m];
            for i in 0..2 {
                assert!((counts[i][m] / col - p.transition[(i, m)]).abs() < 0.01);
            }
        }
    }

    #[test]
    fn pe_marginal_matches_initial_vector() {
        let grids = StateGrids::new(vec![0.0], vec![8.0, 12.0, 16.0]).unwrap();
        let mut p = ModelParams::persistent(1, 3, 1.0, 0.05);
        p.initial_pe = array![0.2, 0.5, 0.3];
        let draws = 100_000;
        let mut counts = [0usize; 3];
        let date = days(1);
        for seed in 0..draws {
            let (_, truth) = generate_series(&p, &grids, &date, &[1.0], seed).unwrap();
            counts[truth.pe_index] += 1;
        }
        for n in 0..3 {
            assert!((counts[n] as f64 / draws as f64 - p.initial_pe[n]).abs() < 0.01);
        }
    }

    #[test]
    fn params_serde_uses_nested_rows() {
        let p = ModelParams::new(
            array![[0.9, 0.2], [0.1, 0.8]],
            array![0.5, 0.5],
            array![1.0],
            0.1,
        );
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("[[0.9,0.2],[0.1,0.8]]"), "{json}");
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let bad: std::result::Result<StateGrids, _> =
            serde_json::from_str(r#"{"z_values":[0.1,0.0],"pe_values":[1.0]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn split_partitions_dates() {
        let d = days(10);
        let s = ObservationSeries::new(d.clone(), vec![20.0; 10], vec![1.0; 10]).unwrap();
        let (a, b) = s.split_after(d[3]);
        assert_eq!(a.len(), 4);
        assert_eq!(b.len(), 6);
        assert_relative_eq!(a.y()[0], 20f64.ln());
        assert!(ObservationSeries::new(d.clone(), vec![1.0; 10], {
            let mut e = vec![1.0; 10];
            e[4] = 0.0;
            e
        })
        .is_err());
    }
}
