//! Forecast scoring: SMAPE, min-max-median aggregation, the per-series
//! autoregressive baseline, rolling-origin backtests, and grid search.
//!
//! Scoring convention: a SMAPE term with forecast and actual both zero
//! contributes zero, so perfect forecasts of zero demand score perfectly.
//! Min-max scaling happens across methods within each (series, period) cell;
//! the per-method median is then taken over series for each period. The raw
//! unscaled SMAPE table is always kept alongside so other aggregations can
//! be recomputed from it.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::data::{Hyperparams, ObservationMatrix, SeriesCatalog};
use crate::error::{Error, Result};
use crate::forecast::forecast_values;
use crate::hierarchy::Hierarchy;
use crate::linalg::solve_spd;
use crate::solver::fit;

/// Symmetric mean absolute percent error, in percent.
///
/// `(100/n) * sum |F_t - A_t| / (|A_t| + |F_t|)`, where a term with both
/// values zero contributes zero. Always lies in `[0, 100]`.
pub fn smape(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    if forecast.len() != actual.len() {
        return Err(Error::LengthMismatch {
            forecast: forecast.len(),
            actual: actual.len(),
        });
    }
    if forecast.is_empty() {
        return Err(Error::EmptyInput("smape needs at least one period".into()));
    }
    let mut acc = 0.0;
    for (&f, &a) in forecast.iter().zip(actual) {
        let denom = a.abs() + f.abs();
        if denom > 0.0 {
            acc += (f - a).abs() / denom;
        }
    }
    Ok(100.0 * acc / forecast.len() as f64)
}

/// One scored forecast cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    /// Series identifier.
    pub series_id: String,
    /// Forecast period, in the source numbering.
    pub period: u64,
    /// Method name.
    pub method: String,
    /// SMAPE in percent.
    pub smape: f64,
}

/// Per-series, per-period, per-method SMAPE records in canonical order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    methods: Vec<String >,
    rows: Vec<ScoreRow>,
}

impl ScoreTable {
    /// Builds a table, sorting rows canonically by (series, period, method)
    /// and rejecting duplicates and out-of-range scores.
    pub fn from_rows(methods: Vec<String>, mut rows: Vec<ScoreRow>) -> Result<Self> {
        rows.sort_by(|a, b| {
            (&a.series_id, a.period, &a.method).cmp(&(&b.series_id, b.period, &b.method))
        });
        for w in rows.windows(2) {
            if w[0].series_id == w[1].series_id
                && w[0].period == w[1].period
                && w[0].method == w[1].method
            {
                return Err(Error::DuplicateRecord {
                    series_id: format!("{}/{}", w[0].series_id, w[0].method),
                    period: w[0].period,
                });
            }
        }
        for r in &rows {
            if !(r.smape.is_finite() && (0.0..=100.0).contains(&r.smape)) {
                return Err(Error::NonFiniteValue {
                    series_id: r.series_id.clone(),
                    period: r.period,
                });
            }
        }
        Ok(Self { methods, rows })
    }

    /// Method names.
    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    /// Rows in canonical order.
    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    /// Merges tables that share no (series, period, method) cells.
    pub fn merge(tables: Vec<ScoreTable>) -> Result<Self> {
        let mut methods = Vec::new();
        let mut rows = Vec::new();
        for t in tables {
            for m in t.methods {
                if !methods.contains(&m) {
                    methods.push(m);
                }
            }
            rows.extend(t.rows);
        }
        Self::from_rows(methods, rows)
    }
}

/// Per-method, per-period medians of min-max scaled SMAPE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinMaxMedianReport {
    /// Method names, column order of `scores`.
    pub methods: Vec<String>,
    /// Forecast periods, row order of `scores`.
    pub periods: Vec<u64>,
    /// `periods x methods` median scores in `[0, 1]`.
    pub scores: Vec<Vec<f64>>,
}

impl MinMaxMedianReport {
    /// Score of `method` at `period`.
    pub fn score(&self, method: &str, period: u64) -> Option<f64> {
        let m = self.methods.iter().position(|x| x == method)?;
        let p = self.periods.iter().position(|&x| x == period)?;
        Some(self.scores[p][m])
    }

    /// Mean over periods of a method's per-period medians.
    pub fn mean_over_periods(&self, method: &str) -> Option<f64> {
        let m = self.methods.iter().position(|x| x == method)?;
        if self.periods.is_empty() {
            return None;
        }
        Some(self.scores.iter().map(|row| row[m]).sum::<f64>() / self.periods.len() as f64)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Scales SMAPE to `[0, 1]` across methods within each (series, period)
/// cell — a cell where all methods tie scales to zero — then takes the
/// per-method median over series for each period.
pub fn minmax_median(table: &ScoreTable) -> Result<MinMaxMedianReport> {
    if table.rows.is_empty() {
        return Err(Error::EmptyInput("empty score table".into()));
    }
    let method_pos: BTreeMap<&str, usize> = table
        .methods
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_str(), i))
        .collect();
    let mut cells: BTreeMap<(&str, u64), Vec<(usize, f64)>> = BTreeMap::new();
    for r in &table.rows {
        cells
            .entry((r.series_id.as_str(), r.period))
            .or_default()
            .push((method_pos[r.method.as_str()], r.smape));
    }
    let periods: Vec<u64> = cells.keys().map(|&(_, p)| p).collect::<BTreeSet<_>>().into_iter().collect();
    let period_pos: BTreeMap<u64, usize> = periods.iter().enumerate().map(|(i, &p)| (p, i)).collect();

    let mut collected: Vec<Vec<Vec<f64>>> =
        vec![vec![Vec::new(); table.methods.len()]; periods.len()];
    for ((_, period), entries) in &cells {
        let lo = entries.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
        let hi = entries.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for &(m, v) in entries {
            let scaled = if span > 0.0 { (v - lo) / span } else { 0.0 };
            collected[period_pos[period]][m].push(scaled);
        }
    }
    let scores = collected
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|mut vs| if vs.is_empty() { f64::NAN } else { median(&mut vs) })
                .collect()
        })
        .collect();
    Ok(MinMaxMedianReport {
        methods: table.methods.clone(),
        periods,
        scores,
    })
}

/// Per-series autoregressions of a fixed order with intercept, fitted by
/// least squares over contiguous observed windows.
#[derive(Debug, Clone)]
pub struct ArBaselineModel {
    order: usize,
    /// Per series: `(intercept, lag coefficients)`, most recent lag first;
    /// `None` marks an unmodelable series.
    coefficients: Vec<Option<(f64, Vec<f64>)>>,
    /// Series whose normal equations needed the tiny ridge.
    ridged: Vec<usize>,
    /// Last `order` values per series, oldest first, gaps carried forward.
    tails: Vec<Vec<f64>>,
    /// Last observed value per series (0.0 when never observed).
    fallbacks: Vec<f64>,
}

impl ArBaselineModel {
    /// Autoregression order `p`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Whether series `i` got a fitted autoregression.
    pub fn is_modelable(&self, i: usize) -> bool {
        self.coefficients[i].is_some()
    }

    /// Intercept and lag coefficients of series `i`, when modelable.
    pub fn coefficients(&self, i: usize) -> Option<&(f64, Vec<f64>)> {
        self.coefficients[i].as_ref()
    }

    /// Series whose lag matrix was rank-deficient and got the tiny ridge.
    pub fn ridged(&self) -> &[usize] {
        &self.ridged
    }
}

/// Fits the per-series baseline. Series without a contiguous observed run of
/// more than `order + 1` points are flagged unmodelable, not rejected; a
/// rank-deficient lag matrix gets a `1e-8` ridge and is flagged.
pub fn fit_ar_baseline(y: &ObservationMatrix, order: usize) -> Result<ArBaselineModel> {
    if order == 0 {
        return Err(Error::InvalidHyper("baseline order must be >= 1".into()));
    }
    let (t_len, n) = (y.t_len(), y.n_series());
    let mut coefficients = Vec::with_capacity(n);
    let mut ridged = Vec::new();
    let mut tails = Vec::with_capacity(n);
    let mut fallbacks = Vec::with_capacity(n);

    for i in 0..n {
        let observed: Vec<Option<f64>> = (0..t_len)
            .map(|t| y.is_observed(t, i).then(|| y.value(t, i)))
            .collect();
        fallbacks.push(
            observed
                .iter()
                .rev()
                .find_map(|v| *v)
                .unwrap_or(0.0),
        );

        // Carry-forward tail for the forecast recursion, oldest first.
        let mut tail = vec![0.0; order];
        let mut carry = observed.iter().find_map(|v| *v).unwrap_or(0.0);
        let mut carried: Vec<f64> = Vec::with_capacity(t_len);
        for v in &observed {
            if let Some(x) = v {
                carry = *x;
            }
            carried.push(carry);
        }
        for (k, slot) in tail.iter_mut().enumerate() {
            let t = t_len + k - order; // periods T-order .. T-1
            *slot = carried[t];
        }
        tails.push(tail);

        // Regression rows from every contiguous observed run longer than the
        // order; modelable only when some run exceeds order + 1 points.
        let mut longest_run = 0usize;
        let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut run_start = None;
        for t in 0..=t_len {
            match (t < t_len && observed[t].is_some(), run_start) {
                (true, None) => run_start = Some(t),
                (false, Some(s)) => {
                    let run_len = t - s;
                    longest_run = longest_run.max(run_len);
                    for target in (s + order)..t {
                        let lags: Vec<f64> = (1..=order)
                            .map(|k| observed[target - k].unwrap())
                            .collect();
                        rows.push((observed[target].unwrap(), lags));
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
        if longest_run <= order + 1 {
            coefficients.push(None);
            continue;
        }

        // Normal equations over [intercept, lag_1 .. lag_order].
        let dim = order + 1;
        let mut normal = Array2::<f64>::zeros((dim, dim));
        let mut rhs = ndarray::Array1::<f64>::zeros(dim);
        for (target, lags) in &rows {
            let mut design = Vec::with_capacity(dim);
            design.push(1.0);
            design.extend_from_slice(lags);
            for a in 0..dim {
                rhs[a] += target * design[a];
                for b in 0..=a {
                    normal[[a, b]] += design[a] * design[b];
                }
            }
        }
        for a in 0..dim {
            for b in (a + 1)..dim {
                normal[[a, b]] = normal[[b, a]];
            }
        }
        let solution = match solve_spd(&normal, &rhs) {
            Some(sol) => sol,
            None => {
                for a in 0..dim {
                    normal[[a, a]] += 1e-8;
                }
                ridged.push(i);
                match solve_spd(&normal, &rhs) {
                    Some(sol) => sol,
                    None => {
                        coefficients.push(None);
                        continue;
                    }
                }
            }
        };
        let intercept = solution[0];
        let coeffs: Vec<f64> = solution.iter().skip(1).copied().collect();
        coefficients.push(Some((intercept, coeffs)));
    }

    Ok(ArBaselineModel {
        order,
        coefficients,
        ridged,
        tails,
        fallbacks,
    })
}

/// Dynamic recursion forecasts from the baseline: fitted series extend their
/// autoregression, unmodelable series repeat their last observed value.
pub fn forecast_ar_baseline(model: &ArBaselineModel, horizon: usize) -> Result<Array2<f64>> {
    if horizon < 1 {
        return Err(Error::EmptyInput("horizon must be >= 1".into()));
    }
    let n = model.coefficients.len();
    let mut out = Array2::<f64>::zeros((n, horizon));
    for i in 0..n {
        match &model.coefficients[i] {
            Some((intercept, coeffs)) => {
                let mut path = model.tails[i].clone();
                for k in 0..horizon {
                    let len = path.len();
                    let mut v = *intercept;
                    for (lag, c) in coeffs.iter().enumerate() {
                        v += c * path[len - 1 - lag];
                    }
                    path.push(v);
                    out[[i, k]] = v;
                }
            }
            None => {
                for k in 0..horizon {
                    out[[i, k]] = model.fallbacks[i];
                }
            }
        }
    }
    Ok(out)
}

/// A forecasting procedure the backtest can train and score.
pub trait ForecastMethod: Sync {
    /// Display name; must be unique within one backtest.
    fn name(&self) -> String;
    /// Autoregression order, used by the history precondition.
    fn order(&self) -> usize;
    /// Trains on `train` and forecasts `horizon` steps for every series,
    /// returning an `n x horizon` matrix.
    fn forecast(&self, train: &ObservationMatrix, horizon: usize) -> Result<Array2<f64>>;
}

/// The factorization model as a backtest method.
pub struct TrmfMethod {
    name: String,
    /// Hyperparameters used for every fold's fit.
    pub hyper: Hyperparams,
    /// Optional loadings-regularization graph.
    pub hierarchy: Option<Hierarchy>,
}

impl TrmfMethod {
    /// Method with the default name `trmf`.
    pub fn new(hyper: Hyperparams) -> Self {
        Self {
            name: "trmf".into(),
            hyper,
            hierarchy: None,
        }
    }

    /// Overrides the display name (grid-search cells use `d=..,p=..`).
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Attaches a loadings-regularization graph.
    pub fn with_hierarchy(mut self, hierarchy: Hierarchy) -> Self {
        self.hierarchy = Some(hierarchy);
        self
    }
}

impl ForecastMethod for TrmfMethod {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn order(&self) -> usize {
        self.hyper.p
    }

    fn forecast(&self, train: &ObservationMatrix, horizon: usize) -> Result<Array2<f64>> {
        let (model, _) = fit(train, &self.hyper, self.hierarchy.as_ref())?;
        forecast_values(&model, horizon)
    }
}

/// The per-series autoregressive baseline as a backtest method.
pub struct ArBaselineMethod {
    /// Autoregression order.
    pub order: usize,
}

impl ForecastMethod for ArBaselineMethod {
    fn name(&self) -> String {
        format!("ar({})", self.order)
    }

    fn order(&self) -> usize {
        self.order
    }

    fn forecast(&self, train: &ObservationMatrix, horizon: usize) -> Result<Array2<f64>> {
        let model = fit_ar_baseline(train, self.order)?;
        forecast_ar_baseline(&model, horizon)
    }
}

/// Rolling-origin backtest: fold `f` of `k` trains every method on periods
/// up to `T - h * (k - f + 1)` and scores an `h`-step forecast per series
/// and period against the observed cells.
pub fn rolling_backtest(
    y: &ObservationMatrix,
    catalog: &SeriesCatalog,
    methods: &[&dyn ForecastMethod],
    horizon: usize,
    folds: usize,
) -> Result<ScoreTable> {
    if methods.is_empty() {
        return Err(Error::EmptyInput("no methods".into()));
    }
    if horizon < 1 || folds < 1 {
        return Err(Error::InvalidHyper("horizon and folds must be >= 1".into()));
    }
    let names: Vec<String> = methods.iter().map(|m| m.name()).collect();
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(Error::InvalidHyper(format!("duplicate method name '{name}'")));
        }
    }
    let max_order = methods.iter().map(|m| m.order()).max().unwrap_or(1);
    let needed = horizon * folds + max_order + 1;
    if y.t_len() <= needed {
        return Err(Error::InsufficientHistory {
            needed,
            have: y.t_len(),
        });
    }

    let tasks: Vec<(usize, usize)> = (1..=folds)
        .flat_map(|f| (0..methods.len()).map(move |m| (f, m)))
        .collect();
    let row_groups: Vec<Vec<ScoreRow>> = tasks
        .par_iter()
        .map(|&(fold, m)| {
            let train_end = y.t_len() - horizon * (folds - fold + 1);
            let train = y.truncate_periods(train_end)?;
            let forecasts = methods[m].forecast(&train, horizon)?;
            if forecasts.dim() != (y.n_series(), horizon) {
                return Err(Error::dims(
                    format!("{}x{horizon} forecasts", y.n_series()),
                    format!("{:?}", forecasts.dim()),
                ));
            }
            let mut rows = Vec::new();
            for i in 0..y.n_series() {
                for k in 0..horizon {
                    let t = train_end + k;
                    if y.is_observed(t, i) {
                        let score = smape(&[forecasts[[i, k]]], &[y.value(t, i)])?;
                        rows.push(ScoreRow {
                            series_id: catalog.id(i).to_string(),
                            period: y.period_of_row(t),
                            method: names[m].clone(),
                            smape: score,
                        });
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    ScoreTable::from_rows(names, row_groups.into_iter().flatten().collect())
}

/// Grid-search outcome: one min-max-median score per `(p, d)` cell.
#[derive(Debug, Clone)]
pub struct GridReport {
    /// Factor counts, column order of `scores`.
    pub d_values: Vec<usize>,
    /// Autoregression orders, row order of `scores`.
    pub p_values: Vec<usize>,
    /// `p x d` cell scores: mean over forecast periods of the per-period
    /// min-max medians, scaled jointly across all cells.
    pub scores: Array2<f64>,
    /// Indices `(p_index, d_index)` of the best cell.
    pub best: (usize, usize),
    /// Pooled raw SMAPE rows of every cell.
    pub table: ScoreTable,
}

impl GridReport {
    /// The `(d, p)` values of the best cell.
    pub fn best_values(&self) -> (usize, usize) {
        (self.d_values[self.best.1], self.p_values[self.best.0])
    }
}

/// Backtests one factorization per `(d, p)` cell and scores the cells
/// jointly: the pooled per-cell SMAPE rows are min-max scaled against each
/// other within every (series, period) cell, medianed per period, and
/// averaged over periods.
pub fn grid_search(
    y: &ObservationMatrix,
    catalog: &SeriesCatalog,
    d_values: &[usize],
    p_values: &[usize],
    base: &Hyperparams,
    horizon: usize,
    folds: usize,
    graph: Option<&Hierarchy>,
) -> Result<GridReport> {
    if d_values.is_empty() || p_values.is_empty() {
        return Err(Error::EmptyInput("empty grid".into()));
    }
    let cells: Vec<(usize, usize)> = p_values
        .iter()
        .flat_map(|&p| d_values.iter().map(move |&d| (p, d)))
        .collect();
    let tables: Vec<ScoreTable> = cells
        .par_iter()
        .map(|&(p, d)| {
            let hyper = Hyperparams {
                d,
                p,
                ..base.clone()
            };
            hyper.validate(y.t_len())?;
            let mut method = TrmfMethod::new(hyper).with_name(format!("d={d},p={p}"));
            if let Some(g) = graph {
                method.hierarchy = Some(g.clone());
            }
            rolling_backtest(y, catalog, &[&method], horizon, folds)
        })
        .collect::<Result<_>>()?;

    let table = ScoreTable::merge(tables)?;
    let report = minmax_median(&table)?;
    let mut scores = Array2::<f64>::zeros((p_values.len(), d_values.len()));
    let mut best = (0, 0);
    let mut best_score = f64::INFINITY;
    for (pi, &p) in p_values.iter().enumerate() {
        for (di, &d) in d_values.iter().enumerate() {
            let cell = report
                .mean_over_periods(&format!("d={d},p={p}"))
                .expect("every cell scored");
            scores[[pi, di]] = cell;
            if cell < best_score {
                best_score = cell;
                best = (pi, di);
            }
        }
    }
    Ok(GridReport {
        d_values: d_values.to_vec(),
        p_values: p_values.to_vec(),
        scores,
        best,
        table,
    })
}
