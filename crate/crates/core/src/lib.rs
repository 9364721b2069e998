//! Temporal-regularized matrix factorization for multivariate time series.
//!
//! The crate factorizes a partially observed `T x n` value matrix into latent
//! factor series and loadings, penalizing the factors toward autoregressive
//! dynamics so the factorization extrapolates beyond the training window.
//! Around that core sit the pieces needed to run forecasting experiments end
//! to end: hierarchy reconciliation over a summing matrix, group seasonal
//! indices, SMAPE scoring with min-max-median aggregation, rolling-origin
//! backtests against a per-series autoregressive baseline, hyperparameter
//! grid search, and a seeded synthetic data generator.
//!
//! ```
//! use trmf_core::{fit, forecast_values, generate_synthetic, Hyperparams, SyntheticSpec};
//!
//! let spec = SyntheticSpec {
//!     t_len: 60, n: 8, d_true: 2, p_true: 2,
//!     noise_sigma: 0.05, mask_density: 1.0, seed: 7, tree: None,
//! };
//! let data = generate_synthetic(&spec).unwrap();
//! let hyper = Hyperparams { d: 2, p: 2, ..Hyperparams::default() };
//! let (model, report) = fit(&data.observations, &hyper, None).unwrap();
//! assert!(report.final_objective.is_finite());
//! let paths = forecast_values(&model, 4).unwrap();
//! assert_eq!(paths.dim(), (8, 4));
//! ```

pub mod data;
pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod hierarchy;
pub mod linalg;
pub mod solver;
pub mod synth;

pub use data::{assemble_observations, Hyperparams, ObservationMatrix, SeriesCatalog};
pub use error::{Error, Result};
pub use evaluation::{
    fit_ar_baseline, forecast_ar_baseline, grid_search, minmax_median, rolling_backtest, smape,
    ArBaselineMethod, ArBaselineModel, ForecastMethod, GridReport, MinMaxMedianReport, ScoreRow,
    ScoreTable, TrmfMethod,
};
pub use forecast::{fitted_values, forecast_factors, forecast_values, ForecastBlock};
pub use hierarchy::{
    aggregate_bottom_up, build_summing_matrix, compute_dgsi, compute_isi, compute_wgsi,
    disaggregate_top_down, estimate_proration, reconcile_middle_out, validate_hierarchy,
    Hierarchy, HierarchyGraph, SeasonalIndex, SummingMatrix,
};
pub use solver::{
    evaluate_objective, fit, update_ar_coeffs, update_factors, update_loadings, FactorModel,
    FitReport,
};
pub use synth::{
    ar_stable_within, generate_synthetic, SyntheticDataset, SyntheticSpec, SyntheticTruth,
};
