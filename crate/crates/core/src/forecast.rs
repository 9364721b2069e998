//! Point forecasts of latent factors and observed series.
//!
//! Factor paths are extended by the dynamic autoregressive recursion: a lag
//! that still lies inside the training window consumes the fitted factor
//! value, later lags consume already-forecast values. Series forecasts are
//! the loadings combination of the factor paths.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::solver::FactorModel;

/// Forecast paths produced from a fitted model.
#[derive(Debug, Clone)]
pub struct ForecastBlock {
    /// Forecast horizon `h`.
    pub horizon: usize,
    /// Factor forecasts, `d x h`; column `k` is step `T + k + 1`.
    pub factor_paths: Array2<f64>,
    /// Series forecasts, `n x h`.
    pub value_paths: Array2<f64>,
    /// Last training period index `T` (number of training rows).
    pub origin: usize,
}

impl ForecastBlock {
    /// Computes factor and value paths for the given horizon.
    pub fn compute(model: &FactorModel, horizon: usize) -> Result<Self> {
        let factor_paths = forecast_factors(model, horizon)?;
        let value_paths = model.f.t().dot(&factor_paths);
        Ok(Self {
            horizon,
            factor_paths,
            value_paths,
            origin: model.t_len(),
        })
    }
}

/// Extends each factor series `h` steps by its autoregressive recursion.
pub fn forecast_factors(model: &FactorModel, horizon: usize) -> Result<Array2<f64>> {
    if horizon < 1 {
        return Err(Error::EmptyInput("horizon must be >= 1".into()));
    }
    let (t_len, d, p) = (model.t_len(), model.n_factors(), model.hyper.p);
    let mut out = Array2::<f64>::zeros((d, horizon));
    for j in 0..d {
        // History followed by forecasts; index t_len + k holds step T + k + 1.
        let mut path: Vec<f64> = model.x.column(j).to_vec();
        for k in 0..horizon {
            let t = t_len + k;
            let mut value = 0.0;
            for i in 1..=p.min(t) {
                value += model.theta[[j, i - 1]] * path[t - i];
            }
            path.push(value);
            out[[j, k]] = value;
        }
    }
    Ok(out)
}

/// Loadings combination of the factor forecasts: an `n x h` matrix whose
/// entry `(i, k)` is the step-`k+1` forecast of series `i`.
pub fn forecast_values(model: &FactorModel, horizon: usize) -> Result<Array2<f64>> {
    let factors = forecast_factors(model, horizon)?;
    Ok(model.f.t().dot(&factors))
}

/// In-sample reconstruction `X F`, including values at unobserved cells.
pub fn fitted_values(model: &FactorModel) -> Array2<f64> {
    model.x.dot(&model.f)
}
