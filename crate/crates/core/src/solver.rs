//! Block coordinate descent for the temporally regularized factorization.
//!
//! The objective combines a masked reconstruction loss with three penalties:
//! a ridge (or graph-deviation) penalty on the loadings, a ridge penalty on
//! the autoregression coefficients, and a factor penalty that trades a ridge
//! term against an autoregressive smoothness term. Every block update below
//! minimizes its subproblem exactly, so the objective never increases.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::data::{Hyperparams, ObservationMatrix};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::linalg::{solve_spd, BandedSpd};

/// A fitted factorization: latent factor series, loadings, and the
/// autoregression coefficients driving the factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    /// Latent factors, `T x d`; column `j` is the series of factor `j`.
    pub x: Array2<f64>,
    /// Loadings, `d x n`; column `i` maps the factors onto series `i`.
    pub f: Array2<f64>,
    /// Autoregression coefficients, `d x p`; row `j` holds the lag weights
    /// of factor `j`, most recent lag first.
    pub theta: Array2<f64>,
    /// Hyperparameters the model was fitted with.
    pub hyper: Hyperparams,
    /// Objective value after each sweep.
    pub objective_trace: Vec<f64>,
}

impl FactorModel {
    /// Number of training periods `T`.
    pub fn t_len(&self) -> usize {
        self.x.nrows()
    }

    /// Number of factors `d`.
    pub fn n_factors(&self) -> usize {
        self.x.ncols()
    }

    /// Number of series `n`.
    pub fn n_series(&self) -> usize {
        self.f.ncols()
    }
}

/// Outcome summary of a `fit` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    /// Sweeps actually executed.
    pub sweeps_run: usize,
    /// Objective after the last sweep.
    pub final_objective: f64,
    /// Whether the relative decrease fell below `tol` before the sweep cap.
    pub converged: bool,
    /// Wall-clock seconds spent in `fit`. Not serialized: emitted files must
    /// be byte-identical across reruns.
    #[serde(skip)]
    pub wallclock: f64,
}

fn check_shapes(y: &ObservationMatrix, model: &FactorModel) -> Result<()> {
    let (t_len, n) = (y.t_len(), y.n_series());
    let (d, p) = (model.hyper.d, model.hyper.p);
    if model.x.dim() != (t_len, d) {
        return Err(Error::dims(format!("X {t_len}x{d}"), format!("{:?}", model.x.dim())));
    }
    if model.f.dim() != (d, n) {
        return Err(Error::dims(format!("F {d}x{n}"), format!("{:?}", model.f.dim())));
    }
    if model.theta.dim() != (d, p) {
        return Err(Error::dims(
            format!("theta {d}x{p}"),
            format!("{:?}", model.theta.dim()),
        ));
    }
    Ok(())
}

fn ar_coef(hyper: &Hyperparams, t_len: usize) -> f64 {
    if hyper.lambda_x * hyper.eta_x == 0.0 {
        0.0
    } else {
        hyper.lambda_x * hyper.eta_x / ((t_len - hyper.p) as f64 * hyper.d as f64)
    }
}

/// Evaluates the full objective at the model's current parameters.
///
/// Terms with a zero weight are skipped, so degenerate normalizers (for
/// instance the autoregressive term when `lambda_x * eta_x = 0`) never
/// produce NaN. The autoregressive term requires `p < T` when active.
pub fn evaluate_objective(
    y: &ObservationMatrix,
    model: &FactorModel,
    graph: Option<&Hierarchy>,
) -> Result<f64> {
    check_shapes(y, model)?;
    let t_len = y.t_len();
    let h = &model.hyper;
    let (d, p) = (h.d, h.p);

    let mut total = reconstruction_term(y, &model.x, &model.f);
    total += loadings_penalty(y, &model.f, h, graph)?;

    if h.lambda_theta > 0.0 {
        let theta_sq: f64 = model.theta.iter().map(|v| v * v).sum();
        total += h.lambda_theta / 2.0 / (d * p) as f64 * theta_sq;
    }

    if h.lambda_x > 0.0 {
        let mut x_pen = 0.0;
        if h.eta_x < 1.0 {
            let x_sq: f64 = model.x.iter().map(|v| v * v).sum();
            x_pen += (1.0 - h.eta_x) / (t_len * d) as f64 * x_sq;
        }
        if h.eta_x > 0.0 {
            if p >= t_len {
                return Err(Error::InvalidHyper(format!(
                    "p must satisfy p < T (p = {p}, T = {t_len})"
                )));
            }
            let mut ar_sq = 0.0;
            for j in 0..d {
                for t in p..t_len {
                    let mut pred = 0.0;
                    for i in 1..=p {
                        pred += model.theta[[j, i - 1]] * model.x[[t - i, j]];
                    }
                    let r = model.x[[t, j]] - pred;
                    ar_sq += r * r;
                }
            }
            x_pen += h.eta_x / ((t_len - p) * d) as f64 * ar_sq;
        }
        total += h.lambda_x / 2.0 * x_pen;
    }
    Ok(total)
}

fn reconstruction_term(y: &ObservationMatrix, x: &Array2<f64>, f: &Array2<f64>) -> f64 {
    let (t_len, n) = (y.t_len(), y.n_series());
    let recon = x.dot(f);
    let mut sq = 0.0;
    for t in 0..t_len {
        for i in 0..n {
            if y.is_observed(t, i) {
                let r = y.value(t, i) - recon[[t, i]];
                sq += r * r;
            }
        }
    }
    sq / (2.0 * (t_len * n) as f64)
}

/// Loadings penalty: plain ridge without a graph, ridge plus neighbor
/// deviation with one. Columns with empty neighborhoods contribute only the
/// ridge part, since the neighbor average is undefined for them.
fn loadings_penalty(
    y: &ObservationMatrix,
    f: &Array2<f64>,
    h: &Hyperparams,
    graph: Option<&Hierarchy>,
) -> Result<f64> {
    if h.lambda_f == 0.0 {
        return Ok(0.0);
    }
    let (d, n) = f.dim();
    let norm = 1.0 / (d * n) as f64;
    let f_sq: f64 = f.iter().map(|v| v * v).sum();
    let Some(graph) = graph else {
        return Ok(h.lambda_f / 2.0 * norm * f_sq);
    };
    let adj = graph.column_adjacency(y.n_series())?;
    let mut dev_sq = 0.0;
    for (i, neighbors) in adj.iter().enumerate() {
        if neighbors.is_empty() {
            continue;
        }
        let inv = 1.0 / neighbors.len() as f64;
        for r in 0..d {
            let avg: f64 = neighbors.iter().map(|&(j, w)| w * f[[r, j]]).sum::<f64>() * inv;
            let diff = f[[r, i]] - avg;
            dev_sq += diff * diff;
        }
    }
    Ok(h.lambda_f / 2.0 * norm * ((1.0 - h.eta_f) * f_sq + h.eta_f * dev_sq))
}

/// Per-column Gram matrix and data vector of the reconstruction term,
/// restricted to the rows observed in that column.
fn column_normal_parts(
    y: &ObservationMatrix,
    x: &Array2<f64>,
    col: usize,
) -> (Array2<f64>, Array1<f64>) {
    let d = x.ncols();
    let rcoef = 1.0 / (y.t_len() * y.n_series()) as f64;
    let mut gram = Array2::<f64>::zeros((d, d));
    let mut data = Array1::<f64>::zeros(d);
    for (t, value) in y.observed_in_column(col) {
        for a in 0..d {
            let xa = x[[t, a]];
            data[a] += rcoef * value * xa;
            for b in 0..=a {
                gram[[a, b]] += rcoef * xa * x[[t, b]];
            }
        }
    }
    for a in 0..d {
        for b in (a + 1)..d {
            gram[[a, b]] = gram[[b, a]];
        }
    }
    (gram, data)
}

/// Minimizes the objective over the loadings with factors and coefficients
/// held fixed, returning the new `d x n` loadings matrix.
///
/// Without graph coupling each column is an independent ridge system. With a
/// graph the columns couple through the deviation term; the update cycles
/// exact coordinate solves over the columns, treating the neighbor averages
/// as fixed within each solve, until the loadings-block objective decreases
/// by less than `tol` per cycle.
pub fn update_loadings(
    y: &ObservationMatrix,
    model: &FactorModel,
    graph: Option<&Hierarchy>,
) -> Result<Array2<f64>> {
    check_shapes(y, model)?;
    let h = &model.hyper;
    let (d, n) = (h.d, y.n_series());
    let dn = (d * n) as f64;
    let coupling = h.lambda_f * h.eta_f / dn;
    let graph_coupled = graph.is_some() && coupling > 0.0;
    let ridge = if graph_coupled {
        h.lambda_f * (1.0 - h.eta_f) / dn
    } else {
        h.lambda_f / dn
    };

    if !graph_coupled {
        let columns: Vec<Array1<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (mut gram, data) = column_normal_parts(y, &model.x, i);
                for a in 0..d {
                    gram[[a, a]] += ridge;
                }
                solve_spd(&gram, &data).ok_or(Error::UnderdeterminedColumn(i))
            })
            .collect::<Result<_>>()?;
        let mut f_new = Array2::<f64>::zeros((d, n));
        for (i, col) in columns.iter().enumerate() {
            f_new.column_mut(i).assign(col);
        }
        return Ok(f_new);
    }

    let graph = graph.unwrap();
    let adj = graph.column_adjacency(n)?;
    // Reverse adjacency: for column i, the columns whose neighbor average
    // includes i, with the averaged weight they apply to it.
    let mut rev: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (src, neighbors) in adj.iter().enumerate() {
        let inv = 1.0 / neighbors.len().max(1) as f64;
        for &(dst, w) in neighbors {
            rev[dst].push((src, w * inv));
        }
    }
    let parts: Vec<(Array2<f64>, Array1<f64>)> =
        (0..n).map(|i| column_normal_parts(y, &model.x, i)).collect();

    let mut f_work = model.f.clone();
    let block = |f: &Array2<f64>| -> Result<f64> {
        Ok(reconstruction_term(y, &model.x, f) + loadings_penalty(y, f, h, Some(graph))?)
    };
    let mut prev = block(&f_work)?;
    const MAX_CYCLES: usize = 200;
    for _ in 0..MAX_CYCLES {
        for i in 0..n {
            let (gram, data) = &parts[i];
            let mut a = gram.clone();
            let mut b = data.clone();
            let mut diag = ridge;
            if !adj[i].is_empty() {
                diag += coupling;
                let inv = 1.0 / adj[i].len() as f64;
                for &(j, w) in &adj[i] {
                    for r in 0..d {
                        b[r] += coupling * inv * w * f_work[[r, j]];
                    }
                }
            }
            for &(src, alpha) in &rev[i] {
                diag += coupling * alpha * alpha;
                let inv = 1.0 / adj[src].len() as f64;
                for r in 0..d {
                    let mut residual = f_work[[r, src]];
                    for &(j, w) in &adj[src] {
                        if j != i {
                            residual -= inv * w * f_work[[r, j]];
                        }
                    }
                    b[r] += coupling * alpha * residual;
                }
            }
            for r in 0..d {
                a[[r, r]] += diag;
            }
            let col = solve_spd(&a, &b).ok_or(Error::UnderdeterminedColumn(i))?;
            f_work.column_mut(i).assign(&col);
        }
        let cur = block(&f_work)?;
        let rel = (prev - cur) / prev.max(1e-30);
        prev = cur;
        if rel < h.tol {
            break;
        }
    }
    Ok(f_work)
}

/// Minimizes the objective over the factors with loadings and coefficients
/// held fixed: one exact Gauss-Seidel cycle over the factor dimensions, each
/// solved by a banded Cholesky factorization of its `T x T` Hessian.
pub fn update_factors(y: &ObservationMatrix, model: &FactorModel) -> Result<Array2<f64>> {
    check_shapes(y, model)?;
    let h = &model.hyper;
    let (t_len, n) = (y.t_len(), y.n_series());
    let (d, p) = (h.d, h.p);
    let rcoef = 1.0 / (t_len * n) as f64;
    let ridge = h.lambda_x * (1.0 - h.eta_x) / (t_len * d) as f64;
    let ar = ar_coef(h, t_len);
    if ar > 0.0 && p >= t_len {
        return Err(Error::InvalidHyper(format!(
            "p must satisfy p < T (p = {p}, T = {t_len})"
        )));
    }

    let observed_cols: Vec<Vec<usize>> = (0..t_len)
        .map(|t| (0..n).filter(|&i| y.is_observed(t, i)).collect())
        .collect();

    let mut x_work = model.x.clone();
    // Residual on observed cells: E = Y - X F. Unobserved entries are never read.
    let mut residual = y.values() - &x_work.dot(&model.f);

    for j in 0..d {
        // Fold factor j back in: R = Y - sum_{k != j} X_k F_k.
        for t in 0..t_len {
            let xt = x_work[[t, j]];
            for &i in &observed_cols[t] {
                residual[[t, i]] += xt * model.f[[j, i]];
            }
        }

        let mut system = BandedSpd::zeros(t_len, p);
        let mut rhs = Array1::<f64>::zeros(t_len);
        let mut diag = vec![ridge; t_len];
        for t in 0..t_len {
            for &i in &observed_cols[t] {
                let fji = model.f[[j, i]];
                diag[t] += rcoef * fji * fji;
                rhs[t] += rcoef * residual[[t, i]] * fji;
            }
        }
        if ar > 0.0 {
            // Smoothness quadratic: coefficients (1, -theta_1, .., -theta_p)
            // applied at offsets 0..p from each anchored time step.
            let mut coef = vec![1.0];
            coef.extend((0..p).map(|i| -model.theta[[j, i]]));
            for anchor in p..t_len {
                for k1 in 0..=p {
                    for k2 in k1..=p {
                        system.add(anchor - k1, anchor - k2, ar * coef[k1] * coef[k2]);
                    }
                }
            }
        }
        for (t, &v) in diag.iter().enumerate() {
            system.add(t, t, v);
        }

        let solution = system.solve(&rhs).ok_or_else(|| {
            match (0..t_len).find(|&t| observed_cols[t].is_empty() && ridge == 0.0) {
                Some(t) => Error::UnconstrainedFactorRow(t),
                None => Error::dims(
                    "positive-definite factor system",
                    format!("singular system for factor {j}"),
                ),
            }
        })?;

        for t in 0..t_len {
            let xt = solution[t];
            for &i in &observed_cols[t] {
                residual[[t, i]] -= xt * model.f[[j, i]];
            }
            x_work[[t, j]] = xt;
        }
    }
    Ok(x_work)
}

/// Minimizes the objective over the autoregression coefficients with the
/// factors fixed: one regularized `p x p` normal-equation solve per factor.
pub fn update_ar_coeffs(model: &FactorModel) -> Result<Array2<f64>> {
    let h = &model.hyper;
    let (t_len, d, p) = (model.t_len(), h.d, h.p);
    if p >= t_len {
        return Err(Error::InvalidHyper(format!(
            "p must satisfy p < T (p = {p}, T = {t_len})"
        )));
    }
    let a = ar_coef(h, t_len);
    let b_reg = if h.lambda_theta == 0.0 {
        0.0
    } else {
        h.lambda_theta / (d * p) as f64
    };

    let rows: Vec<Array1<f64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let mut normal = Array2::<f64>::zeros((p, p));
            let mut rhs = Array1::<f64>::zeros(p);
            if a > 0.0 {
                for t in p..t_len {
                    let target = model.x[[t, j]];
                    for i in 1..=p {
                        let lag_i = model.x[[t - i, j]];
                        rhs[i - 1] += a * target * lag_i;
                        for k in 1..=i {
                            normal[[i - 1, k - 1]] += a * lag_i * model.x[[t - k, j]];
                        }
                    }
                }
                for i in 0..p {
                    for k in (i + 1)..p {
                        normal[[i, k]] = normal[[k, i]];
                    }
                }
            }
            for i in 0..p {
                normal[[i, i]] += b_reg;
            }
            solve_spd(&normal, &rhs).ok_or(Error::DegenerateLagMatrix(j))
        })
        .collect::<Result<_>>()?;

    let mut theta = Array2::<f64>::zeros((d, p));
    for (j, row) in rows.iter().enumerate() {
        theta.row_mut(j).assign(row);
    }
    Ok(theta)
}

/// Fits a factor model to the observations by block coordinate descent.
///
/// Factors and loadings start from a seeded uniform draw on `[-0.5, 0.5]`
/// scaled by `1/sqrt(d)`; coefficients start at zero. Each sweep runs the
/// factor, loadings, and coefficient updates in that order and records the
/// objective; the loop stops when the relative decrease falls below
/// `hyper.tol` or after `hyper.max_sweeps` sweeps.
pub fn fit(
    y: &ObservationMatrix,
    hyper: &Hyperparams,
    graph: Option<&Hierarchy>,
) -> Result<(FactorModel, FitReport)> {
    let started = Instant::now();
    hyper.validate(y.t_len())?;
    let (t_len, n) = (y.t_len(), y.n_series());
    let d = hyper.d;
    if d >= n || d >= t_len {
        log::warn!(
            "factorization with d = {d} on a {t_len} x {n} matrix is underdetermined; \
             relying on the ridge terms"
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let scale = 1.0 / (d as f64).sqrt();
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len).map(|_| (rng.random::<f64>() - 0.5) * scale).collect()
    };
    let x = Array2::from_shape_vec((t_len, d), draw(t_len * d)).expect("shape fits");
    let f = Array2::from_shape_vec((d, n), draw(d * n)).expect("shape fits");
    let mut model = FactorModel {
        x,
        f,
        theta: Array2::zeros((d, hyper.p)),
        hyper: hyper.clone(),
        objective_trace: Vec::new(),
    };

    let mut prev = evaluate_objective(y, &model, graph)?;
    let mut converged = false;
    while model.objective_trace.len() < hyper.max_sweeps {
        model.x = update_factors(y, &model)?;
        model.f = update_loadings(y, &model, graph)?;
        model.theta = update_ar_coeffs(&model)?;
        let obj = evaluate_objective(y, &model, graph)?;
        model.objective_trace.push(obj);
        let rel = (prev - obj) / prev.max(1e-30);
        prev = obj;
        if rel < hyper.tol {
            converged = true;
            break;
        }
    }

    let report = FitReport {
        sweeps_run: model.objective_trace.len(),
        final_objective: prev,
        converged,
        wallclock: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
