//! File formats: long-format observation CSVs, hierarchy edge lists, score
//! and forecast tables, the model file, and the run summary.
//!
//! Values are emitted with the shortest decimal encoding that round-trips,
//! so loading an emitted file reproduces the original bits, and reruns with
//! identical inputs produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use trmf_core::{
    assemble_observations, validate_hierarchy, FactorModel, FitReport, Hierarchy, HierarchyGraph,
    MinMaxMedianReport, ObservationMatrix, ScoreTable, SeriesCatalog,
};

use crate::error::{CliError, CliResult};

fn open_reader(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::io(format!("cannot open '{}': {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Loads a `series_id,period,value` file into an observation matrix.
pub fn load_long_csv(path: &Path) -> CliResult<(ObservationMatrix, SeriesCatalog)> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .clone();
    let expected = ["series_id", "period", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(CliError::validation(format!(
            "{}: expected header 'series_id,period,value', got '{}'",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    for result in reader.records() {
        let record =
            result.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        if record.len() != 3 {
            return Err(CliError::validation(format!(
                "{}:{line}: expected 3 fields, got {}",
                path.display(),
                record.len()
            )));
        }
        let series_id = record[0].to_string();
        let period: u64 = record[1].parse().map_err(|_| {
            CliError::validation(format!(
                "{}:{line}: period '{}' is not a non-negative integer",
                path.display(),
                &record[1]
            ))
        })?;
        let value: f64 = record[2].parse().map_err(|_| {
            CliError::validation(format!(
                "{}:{line}: value '{}' is not a number",
                path.display(),
                &record[2]
            ))
        })?;
        records.push((series_id, period, value));
    }
    Ok(assemble_observations(&records)?)
}

/// Loads a `src_id,dst_id[,weight]` edge list and validates it against the
/// catalog. A missing weight column defaults every edge to 1.
pub fn load_hierarchy_csv(path: &Path, catalog: &SeriesCatalog) -> CliResult<Hierarchy> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let with_weight = match cols.as_slice() {
        ["src_id", "dst_id"] => false,
        ["src_id", "dst_id", "weight"] => true,
        other => {
            return Err(CliError::validation(format!(
                "{}: expected header 'src_id,dst_id[,weight]', got '{}'",
                path.display(),
                other.join(",")
            )))
        }
    };
    let mut graph = HierarchyGraph::new();
    for result in reader.records() {
        let record =
            result.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        let expected_len = if with_weight { 3 } else { 2 };
        if record.len() != expected_len {
            return Err(CliError::validation(format!(
                "{}:{line}: expected {expected_len} fields, got {}",
                path.display(),
                record.len()
            )));
        }
        let weight = if with_weight {
            record[2].parse().map_err(|_| {
                CliError::validation(format!(
                    "{}:{line}: weight '{}' is not a number",
                    path.display(),
                    &record[2]
                ))
            })?
        } else {
            1.0
        };
        graph.add_edge(record[0].to_string(), record[1].to_string(), weight);
    }
    Ok(validate_hierarchy(&graph, catalog)?)
}

fn create_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    let file = fs::File::create(path)
        .map_err(|e| CliError::io(format!("cannot write '{}': {e}", path.display())))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_failed(path: &Path, e: csv::Error) -> CliError {
    CliError::io(format!("cannot write '{}': {e}", path.display()))
}

/// Writes observed cells as `series_id,period,value` records.
pub fn write_data_csv(
    path: &Path,
    y: &ObservationMatrix,
    catalog: &SeriesCatalog,
) -> CliResult<()> {
    let mut w = create_writer(path)?;
    w.write_record(["series_id", "period", "value"])
        .map_err(|e| write_failed(path, e))?;
    for (id, period, value) in y.to_records(catalog) {
        w.write_record([id.as_str(), &period.to_string(), &value.to_string()])
            .map_err(|e| write_failed(path, e))?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("cannot write '{}': {e}", path.display())))
}

/// Writes hierarchy edges as `src_id,dst_id,weight` records, parent-major.
pub fn write_hierarchy_csv(path: &Path, h: &Hierarchy) -> CliResult<()> {
    let mut w = create_writer(path)?;
    w.write_record(["src_id", "dst_id", "weight"])
        .map_err(|e| write_failed(path, e))?;
    for node in h.node_order() {
        for &(child, weight) in h.children(node) {
            w.write_record([
                h.node_id(node),
                h.node_id(child),
                &weight.to_string(),
            ])
            .map_err(|e| write_failed(path, e))?;
        }
    }
    w.flush()
        .map_err(|e| CliError::io(format!("cannot write '{}': {e}", path.display())))
}

/// Writes forecast rows as `series_id,period,value`.
pub fn write_forecasts_csv(path: &Path, rows: &[(String, u64, f64)]) -> CliResult<()> {
    let mut w = create_writer(path)?;
    w.write_record(["series_id", "period", "value"])
        .map_err(|e| write_failed(path, e))?;
    for (id, period, value) in rows {
        w.write_record([id.as_str(), &period.to_string(), &value.to_string()])
            .map_err(|e| write_failed(path, e))?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("cannot write '{}': {e}", path.display())))
}

/// Writes the raw SMAPE table as `series_id,period,method,smape`.
pub fn write_scores_csv(path: &Path, table: &ScoreTable) -> CliResult<()> {
    let mut w = create_writer(path)?;
    w.write_record(["series_id", "period", "method", "smape"])
        .map_err(|e| write_failed(path, e))?;
    for row in table.rows() {
        w.write_record([
            row.series_id.as_str(),
            &row.period.to_string(),
            row.method.as_str(),
            &row.smape.to_string(),
        ])
        .map_err(|e| write_failed(path, e))?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("cannot write '{}': {e}", path.display())))
}

/// Writes seasonal indices as `kind,series_id,position,index`; group rows
/// (`wgsi`, `dgsi`) carry an empty series id.
pub fn write_seasonal_csv(path: &Path, rows: &[(String, String, usize, f64)]) -> CliResult<()> {
    let mut w = create_writer(path)?;
    w.write_record(["kind", "series_id", "position", "index"])
        .map_err(|e| write_failed(path, e))?;
    for (kind, id, position, index) in rows {
        w.write_record([
            kind.as_str(),
            id.as_str(),
            &position.to_string(),
            &index.to_string(),
        ])
        .map_err(|e| write_failed(path, e))?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("cannot write '{}': {e}", path.display())))
}

/// A fitted model with the series labels needed to emit forecasts.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    /// Series identifiers in column order.
    pub series_ids: Vec<String>,
    /// First period of the training axis.
    pub first_period: u64,
    /// The fitted model.
    pub model: FactorModel,
}

impl ModelFile {
    /// Rebuilds the catalog stored in the file.
    pub fn catalog(&self) -> CliResult<SeriesCatalog> {
        Ok(SeriesCatalog::new(self.series_ids.clone())?)
    }
}

/// Serializes the model file.
pub fn write_model_json(path: &Path, model: &ModelFile) -> CliResult<()> {
    let text = serde_json::to_string(model)
        .map_err(|e| CliError::validation(format!("cannot encode model: {e}")))?;
    fs::write(path, text)
        .map_err(|e| CliError::io(format!("cannot write '{}': {e}", path.display())))
}

/// Loads a model file.
pub fn load_model_json(path: &Path) -> CliResult<ModelFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read '{}': {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: invalid model file: {e}", path.display())))
}

/// Grid-search block of the summary.
#[derive(Debug, Serialize, Deserialize)]
pub struct GridSummary {
    /// Factor counts, column order.
    pub d_values: Vec<usize>,
    /// Autoregression orders, row order.
    pub p_values: Vec<usize>,
    /// `p x d` min-max-median scores.
    pub scores: Vec<Vec<f64>>,
    /// Best cell as `(d, p)`.
    pub best_d: usize,
    /// Best autoregression order.
    pub best_p: usize,
}

/// The `summary.json` payload: config echo plus whatever the command
/// produced. Field order is fixed and maps are sorted, so reruns are
/// byte-identical.
#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    /// Subcommand that produced this summary.
    pub command: String,
    /// Every setting the run actually used.
    pub config: BTreeMap<String, Value>,
    /// One report per fitted factorization.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fit_reports: Vec<FitReport>,
    /// One objective trace per fitted factorization.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_traces: Vec<Vec<f64>>,
    /// Min-max-median table, when the command scored methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minmax_median: Option<MinMaxMedianReport>,
    /// Grid-search table, when the command searched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSummary>,
}

impl Summary {
    /// Bare summary with just the config echo.
    pub fn new(command: &str, config: BTreeMap<String, Value>) -> Self {
        Self {
            command: command.into(),
            config,
            fit_reports: Vec::new(),
            objective_traces: Vec::new(),
            minmax_median: None,
            grid: None,
        }
    }
}

/// Everything a command wants on disk; `write_outputs` writes whatever is
/// present into the output directory.
#[derive(Debug, Default)]
pub struct OutputBundle {
    /// `forecasts.csv` rows.
    pub forecasts: Option<Vec<(String, u64, f64)>>,
    /// `scores.csv` table.
    pub scores: Option<ScoreTable>,
    /// `seasonal.csv` rows.
    pub seasonal: Option<Vec<(String, String, usize, f64)>>,
    /// `summary.json` payload.
    pub summary: Option<Summary>,
}

/// Writes an output bundle into `outdir`, creating the directory first.
/// Rerunning with identical inputs reproduces every file byte for byte.
pub fn write_outputs(outdir: &Path, bundle: &OutputBundle) -> CliResult<()> {
    fs::create_dir_all(outdir)
        .map_err(|e| CliError::io(format!("cannot create '{}': {e}", outdir.display())))?;
    if let Some(rows) = &bundle.forecasts {
        write_forecasts_csv(&outdir.join("forecasts.csv"), rows)?;
    }
    if let Some(table) = &bundle.scores {
        write_scores_csv(&outdir.join("scores.csv"), table)?;
    }
    if let Some(rows) = &bundle.seasonal {
        write_seasonal_csv(&outdir.join("seasonal.csv"), rows)?;
    }
    if let Some(summary) = &bundle.summary {
        let path = outdir.join("summary.json");
        let text = serde_json::to_string_pretty(summary)
            .map_err(|e| CliError::validation(format!("cannot encode summary: {e}")))?;
        fs::write(&path, text)
            .map_err(|e| CliError::io(format!("cannot write '{}': {e}", path.display())))?;
    }
    Ok(())
}
