//! Observation matrix, series catalog, and hyperparameters.
//!
//! All types here are immutable after construction and safe to share across
//! threads. Missing cells are represented by mask absence, never by sentinel
//! values, so downstream losses sum over observed cells only.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};

/// A `T x n` grid of values together with an observation mask.
///
/// Row `t` is a time step, column `i` a series. Cells not covered by the mask
/// are unobserved; their value slot holds `0.0` and must never be read as
/// data. `first_period` remembers where the time axis started in the source
/// records so emitted periods match the input axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    values: Array2<f64>,
    mask: Array2<bool>,
    first_period: u64,
}

impl ObservationMatrix {
    /// Builds a matrix from explicit values and mask.
    ///
    /// Every observed cell must hold a finite value; `T >= 1` and `n >= 1`.
    pub fn new(values: Array2<f64>, mask: Array2<bool>, first_period: u64) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::dims(
                format!("{:?} mask", values.dim()),
                format!("{:?}", mask.dim()),
            ));
        }
        let (t_len, n) = values.dim();
        if t_len == 0 || n == 0 {
            return Err(Error::EmptyInput("observation matrix must be T>=1, n>=1".into()));
        }
        for ((t, i), &observed) in mask.indexed_iter() {
            if observed && !values[[t, i]].is_finite() {
                return Err(Error::NonFiniteValue {
                    series_id: format!("column {i}"),
                    period: first_period + t as u64,
                });
            }
        }
        Ok(Self {
            values,
            mask,
            first_period,
        })
    }

    /// Number of time steps `T`.
    pub fn t_len(&self) -> usize {
        self.values.nrows()
    }

    /// Number of series `n`.
    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }

    /// First period of the time axis in the source record numbering.
    pub fn first_period(&self) -> u64 {
        self.first_period
    }

    /// Period label of row `t` in the source numbering.
    pub fn period_of_row(&self, t: usize) -> u64 {
        self.first_period + t as u64
    }

    /// Whether cell `(t, i)` is observed.
    pub fn is_observed(&self, t: usize, i: usize) -> bool {
        self.mask[[t, i]]
    }

    /// Value at cell `(t, i)`; meaningful only when observed.
    pub fn value(&self, t: usize, i: usize) -> f64 {
        self.values[[t, i]]
    }

    /// The raw value grid (unobserved slots hold zero).
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// The observation mask.
    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    /// Number of observed cells.
    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Observed `(t, value)` pairs of column `i`, in time order.
    pub fn observed_in_column(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.t_len()).filter_map(move |t| self.mask[[t, i]].then(|| (t, self.values[[t, i]])))
    }

    /// Restricts the matrix to its first `t_end` periods, keeping all columns.
    pub fn truncate_periods(&self, t_end: usize) -> Result<Self> {
        if t_end == 0 || t_end > self.t_len() {
            return Err(Error::dims(
                format!("1..={} periods", self.t_len()),
                format!("{t_end}"),
            ));
        }
        Ok(Self {
            values: self.values.slice(ndarray::s![..t_end, ..]).to_owned(),
            mask: self.mask.slice(ndarray::s![..t_end, ..]).to_owned(),
            first_period: self.first_period,
        })
    }

    /// Emits one `(series_id, period, value)` record per observed cell,
    /// ordered by column then period. Reassembling the records reproduces
    /// the matrix and catalog exactly.
    pub fn to_records(&self, catalog: &SeriesCatalog) -> Vec<(String, u64, f64)> {
        let mut out = Vec::with_capacity(self.observed_count());
        for i in 0..self.n_series() {
            for (t, v) in self.observed_in_column(i) {
                out.push((catalog.id(i).to_string(), self.period_of_row(t), v));
            }
        }
        out
    }
}

/// Bijective mapping between external series identifiers and column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCatalog {
    ids: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl SeriesCatalog {
    /// Builds a catalog from unique identifiers in column order.
    pub fn new(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateRecord {
                    series_id: id.clone(),
                    period: 0,
                });
            }
        }
        Ok(Self { ids, index })
    }

    /// Rebuilds the id -> column lookup after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
    }

    /// Number of series.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// True when the catalog holds no series.
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Identifier of column `i`.
    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// Column index of `id`, if present.
    pub fn column(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// All identifiers in column order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Builds an observation matrix and catalog from long-format records.
///
/// The time axis spans `min period ..= max period`; columns are ordered by
/// first appearance so the same file always produces the same layout. Pairs
/// absent from the input stay unobserved.
pub fn assemble_observations(
    records: &[(String, u64, f64)],
) -> Result<(ObservationMatrix, SeriesCatalog)> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records".into()));
    }
    let mut ids: Vec<String> = Vec::new();
    let mut col_of: HashMap<&str, usize> = HashMap::new();
    let mut min_p = u64::MAX;
    let mut max_p = 0u64;
    for (id, period, value) in records {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue {
                series_id: id.clone(),
                period: *period,
            });
        }
        if !col_of.contains_key(id.as_str()) {
            col_of.insert(id.as_str(), ids.len());
            ids.push(id.clone());
        }
        min_p = min_p.min(*period);
        max_p = max_p.max(*period);
    }
    let t_len = (max_p - min_p + 1) as usize;
    let n = ids.len();
    let mut values = Array2::<f64>::zeros((t_len, n));
    let mut mask = Array2::<bool>::from_elem((t_len, n), false);
    for (id, period, value) in records {
        let i = col_of[id.as_str()];
        let t = (period - min_p) as usize;
        if mask[[t, i]] {
            return Err(Error::DuplicateRecord {
                series_id: id.clone(),
                period: *period,
            });
        }
        mask[[t, i]] = true;
        values[[t, i]] = *value;
    }
    let catalog = SeriesCatalog::new(ids)?;
    Ok((ObservationMatrix::new(values, mask, min_p)?, catalog))
}

/// Hyperparameters of the factorization and its solver.
///
/// `lambda_*` weigh the penalties, `eta_x` and `eta_f` trade the ridge part
/// against the autoregressive / graph part of the respective penalty, and
/// `max_sweeps` / `tol` control the coordinate-descent stopping rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Number of latent factors `d`.
    pub d: usize,
    /// Autoregression order `p`.
    pub p: usize,
    /// Loadings penalty weight.
    pub lambda_f: f64,
    /// Factor penalty weight.
    pub lambda_x: f64,
    /// Autoregression-coefficient penalty weight.
    pub lambda_theta: f64,
    /// Share of the factor penalty assigned to the autoregressive term.
    pub eta_x: f64,
    /// Share of the loadings penalty assigned to the graph term.
    pub eta_f: f64,
    /// Sweep cap for the solver.
    pub max_sweeps: usize,
    /// Relative objective-decrease threshold for convergence.
    pub tol: f64,
    /// Seed for the factor and loadings initialization.
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            d: 10,
            p: 3,
            lambda_f: 1.0,
            lambda_x: 1.0,
            lambda_theta: 1.0,
            eta_x: 0.5,
            eta_f: 0.5,
            max_sweeps: 500,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Validates the parameter domain against a training length `t_len`.
    pub fn validate(&self, t_len: usize) -> Result<()> {
        if self.d < 1 {
            return Err(Error::InvalidHyper("d must be >= 1".into()));
        }
        if self.p < 1 || self.p >= t_len {
            return Err(Error::InvalidHyper(format!(
                "p must satisfy 1 <= p < T (p = {}, T = {t_len})",
                self.p
            )));
        }
        for (name, v) in [
            ("lambda_f", self.lambda_f),
            ("lambda_x", self.lambda_x),
            ("lambda_theta", self.lambda_theta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidHyper(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [("eta_x", self.eta_x), ("eta_f", self.eta_f)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidHyper(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.max_sweeps < 1 {
            return Err(Error::InvalidHyper("max_sweeps must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidHyper("tol must be > 0".into()));
        }
        Ok(())
    }
}
