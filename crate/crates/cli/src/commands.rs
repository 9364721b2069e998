//! One function per subcommand. Each loads its inputs, runs the core
//! operations, and writes an output bundle into the configured directory.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use trmf_core::{
    aggregate_bottom_up, build_summing_matrix, compute_dgsi, compute_isi, compute_wgsi, fit,
    forecast_values, generate_synthetic, grid_search, minmax_median, reconcile_middle_out,
    rolling_backtest, ArBaselineMethod, ForecastMethod, Hierarchy, ObservationMatrix,
    SeriesCatalog, SyntheticSpec, TrmfMethod,
};

use crate::config::{MethodSpec, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{
    load_hierarchy_csv, load_long_csv, load_model_json, write_data_csv, write_hierarchy_csv,
    write_model_json, write_outputs, GridSummary, ModelFile, OutputBundle, Summary,
};

fn load_inputs(cfg: &RunConfig) -> CliResult<(ObservationMatrix, SeriesCatalog, Option<Hierarchy>)> {
    let (y, catalog) = load_long_csv(cfg.require_input()?)?;
    let hierarchy = match &cfg.hierarchy {
        Some(path) => Some(load_hierarchy_csv(path, &catalog)?),
        None => None,
    };
    Ok((y, catalog, hierarchy))
}

/// `synth`: generate a dataset and write it as CSV files.
pub fn run_synth(cfg: &RunConfig, spec: &SyntheticSpec) -> CliResult<()> {
    let data = generate_synthetic(spec)?;
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::io(format!("cannot create '{}': {e}", cfg.out.display())))?;
    write_data_csv(&cfg.out.join("data.csv"), &data.observations, &data.catalog)?;
    if let Some(h) = &data.hierarchy {
        write_hierarchy_csv(&cfg.out.join("hierarchy.csv"), h)?;
    }
    let mut config = cfg.echo();
    config.insert("synth_t".into(), serde_json::json!(spec.t_len));
    config.insert("synth_n".into(), serde_json::json!(spec.n));
    config.insert("synth_d_true".into(), serde_json::json!(spec.d_true));
    config.insert("synth_p_true".into(), serde_json::json!(spec.p_true));
    config.insert("synth_noise_sigma".into(), serde_json::json!(spec.noise_sigma));
    config.insert("synth_mask_density".into(), serde_json::json!(spec.mask_density));
    config.insert("synth_seed".into(), serde_json::json!(spec.seed));
    config.insert("synth_tree".into(), serde_json::json!(spec.tree));
    let bundle = OutputBundle {
        summary: Some(Summary::new("synth", config)),
        ..OutputBundle::default()
    };
    write_outputs(&cfg.out, &bundle)
}

/// `fit`: train the factorization and write the model plus its trace.
pub fn run_fit(cfg: &RunConfig) -> CliResult<()> {
    let (y, catalog, hierarchy) = load_inputs(cfg)?;
    let (model, report) = fit(&y, &cfg.hyper, hierarchy.as_ref())?;
    eprintln!(
        "fit: {} sweeps, objective {:.6e}, converged = {}, {:.2}s",
        report.sweeps_run, report.final_objective, report.converged, report.wallclock
    );
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::io(format!("cannot create '{}': {e}", cfg.out.display())))?;
    let trace = model.objective_trace.clone();
    write_model_json(
        &cfg.out.join("model.json"),
        &ModelFile {
            series_ids: catalog.ids().to_vec(),
            first_period: y.first_period(),
            model,
        },
    )?;
    let mut summary = Summary::new("fit", cfg.echo());
    summary.fit_reports.push(report);
    summary.objective_traces.push(trace);
    let bundle = OutputBundle {
        summary: Some(summary),
        ..OutputBundle::default()
    };
    write_outputs(&cfg.out, &bundle)
}

/// Hierarchy reconciliation strategy for `forecast`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconcileMode {
    /// Sum leaf forecasts up the tree.
    BottomUp,
    /// Prorate the root forecast down the tree.
    TopDown,
    /// Combine both from an intermediate level.
    MiddleOut,
}

impl ReconcileMode {
    /// Parses `bottom-up`, `top-down`, or `middle-out`.
    pub fn parse(text: &str) -> CliResult<Self> {
        match text {
            "bottom-up" => Ok(Self::BottomUp),
            "top-down" => Ok(Self::TopDown),
            "middle-out" => Ok(Self::MiddleOut),
            other => Err(CliError::validation(format!(
                "unknown reconciliation mode '{other}' (expected bottom-up, top-down, or middle-out)"
            ))),
        }
    }
}

/// `forecast`: extend a fitted model, optionally reconciled over a hierarchy.
pub fn run_forecast(
    cfg: &RunConfig,
    model_path: &Path,
    reconcile: Option<ReconcileMode>,
    level: Option<usize>,
) -> CliResult<()> {
    let file = load_model_json(model_path)?;
    let catalog = file.catalog()?;
    let horizon = cfg.horizon;
    let values = forecast_values(&file.model, horizon)?;
    let origin = file.first_period + file.model.t_len() as u64;
    let period_of = |k: usize| origin + k as u64;
    let clamp = |v: f64| if cfg.clamp_nonnegative { v.max(0.0) } else { v };

    let rows: Vec<(String, u64, f64)> = match reconcile {
        None => {
            let mut rows = Vec::new();
            for i in 0..catalog.len() {
                for k in 0..horizon {
                    rows.push((catalog.id(i).to_string(), period_of(k), clamp(values[[i, k]])));
                }
            }
            rows
        }
        Some(mode) => {
            let hierarchy_path = cfg.hierarchy.as_deref().ok_or_else(|| {
                CliError::validation("reconciliation needs --hierarchy <csv>")
            })?;
            let hierarchy = load_hierarchy_csv(hierarchy_path, &catalog)?;
            let depth = hierarchy.depth().ok_or_else(|| {
                CliError::validation("reconciliation needs a tree-shaped hierarchy")
            })?;
            let reconciled: Vec<(String, Vec<f64>)> = match mode {
                ReconcileMode::BottomUp => {
                    let s = build_summing_matrix(&hierarchy)?;
                    let mut leaf_fc = Array2::<f64>::zeros((s.m_leaves(), horizon));
                    for (r, leaf) in s.leaf_order().iter().enumerate() {
                        let col = catalog.column(leaf).expect("validated node");
                        for k in 0..horizon {
                            leaf_fc[[r, k]] = values[[col, k]];
                        }
                    }
                    let full = aggregate_bottom_up(&leaf_fc, &s)?;
                    s.node_order()
                        .iter()
                        .enumerate()
                        .map(|(r, id)| (id.clone(), full.row(r).to_vec()))
                        .collect()
                }
                ReconcileMode::TopDown | ReconcileMode::MiddleOut => {
                    let level = match mode {
                        ReconcileMode::TopDown | ReconcileMode::BottomUp => 0,
                        ReconcileMode::MiddleOut => {
                            let l = level.ok_or_else(|| {
                                CliError::validation("middle-out needs --level <l>")
                            })?;
                            if l == 0 || l >= depth {
                                return Err(CliError::validation(format!(
                                    "middle-out level must satisfy 0 < level < {depth}"
                                )));
                            }
                            l
                        }
                    };
                    let input = cfg.input.as_deref().ok_or_else(|| {
                        CliError::validation(
                            "top-down and middle-out need --input <csv> for the proration shares",
                        )
                    })?;
                    let (y, y_catalog) = load_long_csv(input)?;
                    let hierarchy_for_y = load_hierarchy_csv(hierarchy_path, &y_catalog)?;
                    let mut level_fc = BTreeMap::new();
                    for &node in hierarchy.level_nodes(level) {
                        let id = hierarchy.node_id(node).to_string();
                        let col = catalog.column(&id).expect("validated node");
                        level_fc.insert(id, (0..horizon).map(|k| values[[col, k]]).collect());
                    }
                    let full = reconcile_middle_out(&y, &hierarchy_for_y, level, &level_fc)?;
                    hierarchy_for_y
                        .node_order()
                        .iter()
                        .enumerate()
                        .map(|(r, &node)| {
                            (hierarchy_for_y.node_id(node).to_string(), full.row(r).to_vec())
                        })
                        .collect()
                }
            };
            let mut rows = Vec::new();
            for (id, path) in reconciled {
                for (k, v) in path.into_iter().enumerate() {
                    rows.push((id.clone(), period_of(k), clamp(v)));
                }
            }
            rows
        }
    };

    let bundle = OutputBundle {
        forecasts: Some(rows),
        summary: Some(Summary::new("forecast", cfg.echo())),
        ..OutputBundle::default()
    };
    write_outputs(&cfg.out, &bundle)
}

fn build_methods(
    cfg: &RunConfig,
    hierarchy: Option<&Hierarchy>,
) -> Vec<Box<dyn ForecastMethod>> {
    cfg.methods
        .iter()
        .map(|spec| -> Box<dyn ForecastMethod> {
            match spec {
                MethodSpec::Trmf => {
                    let mut m = TrmfMethod::new(cfg.hyper.clone());
                    if let Some(h) = hierarchy {
                        m = m.with_hierarchy(h.clone());
                    }
                    Box::new(m)
                }
                MethodSpec::ArBaseline { order } => Box::new(ArBaselineMethod { order: *order }),
            }
        })
        .collect()
}

/// `backtest`: rolling-origin scores for the configured methods.
pub fn run_backtest(cfg: &RunConfig) -> CliResult<()> {
    let (y, catalog, hierarchy) = load_inputs(cfg)?;
    let methods = build_methods(cfg, hierarchy.as_ref());
    let refs: Vec<&dyn ForecastMethod> = methods.iter().map(|m| m.as_ref()).collect();
    let table = rolling_backtest(&y, &catalog, &refs, cfg.horizon, cfg.folds)?;
    let report = minmax_median(&table)?;
    let mut summary = Summary::new("backtest", cfg.echo());
    summary.minmax_median = Some(report);
    let bundle = OutputBundle {
        scores: Some(table),
        summary: Some(summary),
        ..OutputBundle::default()
    };
    write_outputs(&cfg.out, &bundle)
}

/// `gridsearch`: one backtested factorization per `(d, p)` cell.
pub fn run_gridsearch(cfg: &RunConfig, d_values: &[usize], p_values: &[usize]) -> CliResult<()> {
    let (y, catalog, hierarchy) = load_inputs(cfg)?;
    let report = grid_search(
        &y,
        &catalog,
        d_values,
        p_values,
        &cfg.hyper,
        cfg.horizon,
        cfg.folds,
        hierarchy.as_ref(),
    )?;
    let (best_d, best_p) = report.best_values();
    eprintln!("gridsearch: best cell d = {best_d}, p = {best_p}");
    let mut summary = Summary::new("gridsearch", cfg.echo());
    summary.minmax_median = Some(minmax_median(&report.table)?);
    summary.grid = Some(GridSummary {
        d_values: report.d_values.clone(),
        p_values: report.p_values.clone(),
        scores: report
            .scores
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        best_d,
        best_p,
    });
    let bundle = OutputBundle {
        scores: Some(report.table),
        summary: Some(summary),
        ..OutputBundle::default()
    };
    write_outputs(&cfg.out, &bundle)
}

/// `seasonal`: per-series and group seasonal indices over complete cycles.
pub fn run_seasonal(cfg: &RunConfig) -> CliResult<()> {
    let (y, catalog, _) = load_inputs(cfg)?;
    let season = cfg.season_length.ok_or_else(|| {
        CliError::validation("missing season length: pass --season-length or set 'season_length'")
    })?;
    if season == 0 {
        return Err(CliError::validation("season length must be >= 1"));
    }
    let cycles = y.t_len() / season;
    if cycles < 2 {
        eprintln!(
            "warning: only {cycles} complete cycle(s) of length {season}; seasonal indices \
             are usually estimated from at least two"
        );
    }

    let mut group: Vec<Vec<f64>> = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    for i in 0..catalog.len() {
        let full: Option<Vec<f64>> = (0..y.t_len())
            .map(|t| y.is_observed(t, i).then(|| y.value(t, i)))
            .collect();
        match full {
            Some(series) => {
                group.push(series);
                members.push(i);
            }
            None => eprintln!(
                "warning: series '{}' has unobserved periods and is skipped",
                catalog.id(i)
            ),
        }
    }
    if group.is_empty() {
        return Err(CliError::validation(
            "no fully observed series; seasonal indices need complete cycles",
        ));
    }

    let mut rows: Vec<(String, String, usize, f64)> = Vec::new();
    for (series, &col) in group.iter().zip(&members) {
        let isi = compute_isi(series, season)?;
        for (pos, &v) in isi.indices().iter().enumerate() {
            rows.push(("isi".into(), catalog.id(col).to_string(), pos + 1, v));
        }
    }
    let wgsi = compute_wgsi(&group, season)?;
    for (pos, &v) in wgsi.indices().iter().enumerate() {
        rows.push(("wgsi".into(), String::new(), pos + 1, v));
    }
    let dgsi = compute_dgsi(&group, season)?;
    for (pos, &v) in dgsi.indices().iter().enumerate() {
        rows.push(("dgsi".into(), String::new(), pos + 1, v));
    }

    let bundle = OutputBundle {
        seasonal: Some(rows),
        summary: Some(Summary::new("seasonal", cfg.echo())),
        ..OutputBundle::default()
    };
    write_outputs(&cfg.out, &bundle)
}
