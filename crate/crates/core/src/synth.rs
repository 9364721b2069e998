//! Seeded synthetic data with known low-rank autoregressive structure.
//!
//! Factors follow stationary AR(p) paths (coefficients rescaled so the
//! characteristic roots stay inside radius 0.95), series are random loadings
//! combinations of the factors plus Gaussian noise, and the mask is sampled
//! completely at random. An optional tree spec adds aggregate series that
//! are exact sums of their children.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ObservationMatrix, SeriesCatalog};
use crate::error::{Error, Result};
use crate::hierarchy::{validate_hierarchy, Hierarchy, HierarchyGraph};

/// Stability bound for the generated autoregressions.
const STABILITY_RADIUS: f64 = 0.95;
/// Warm-up steps dropped from each simulated factor path.
const BURN_IN: usize = 200;

/// Shape of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Number of time steps.
    pub t_len: usize,
    /// Number of series (ignored when `tree` is set; the tree determines it).
    pub n: usize,
    /// True factor count.
    pub d_true: usize,
    /// True autoregression order.
    pub p_true: usize,
    /// Standard deviation of the additive observation noise.
    pub noise_sigma: f64,
    /// Probability that a cell is observed, in `(0, 1]`.
    pub mask_density: f64,
    /// Generator seed.
    pub seed: u64,
    /// Optional branching factors per level; leaves are generated from the
    /// factor model and every other node is the exact sum of its children.
    pub tree: Option<Vec<usize>>,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.t_len < 1 {
            return Err(Error::InvalidHyper("t_len must be >= 1".into()));
        }
        if self.tree.is_none() && self.n < 1 {
            return Err(Error::InvalidHyper("n must be >= 1".into()));
        }
        if self.d_true < 1 {
            return Err(Error::InvalidHyper("d_true must be >= 1".into()));
        }
        if self.p_true < 1 || self.p_true >= self.t_len {
            return Err(Error::InvalidHyper("p_true must satisfy 1 <= p_true < t_len".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidHyper("noise_sigma must be >= 0".into()));
        }
        if !(self.mask_density > 0.0 && self.mask_density <= 1.0) {
            return Err(Error::InvalidHyper("mask_density must lie in (0, 1]".into()));
        }
        if let Some(tree) = &self.tree {
            if tree.is_empty() || tree.iter().any(|&b| b < 1) {
                return Err(Error::InvalidHyper(
                    "tree branching factors must be >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Ground-truth parameters behind a synthetic dataset. With a tree, the
/// loadings cover the leaf series only; aggregates are derived sums.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    /// True factor paths, `T x d_true`.
    pub x: Array2<f64>,
    /// True loadings, `d_true x n_leaves`.
    pub f: Array2<f64>,
    /// True autoregression coefficients, `d_true x p_true`.
    pub theta: Array2<f64>,
}

/// A generated dataset with its catalog, optional hierarchy, and truth.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    /// Observations, masked at `mask_density`.
    pub observations: ObservationMatrix,
    /// Catalog of the generated series ids.
    pub catalog: SeriesCatalog,
    /// Validated hierarchy, present when the spec carried a tree.
    pub hierarchy: Option<Hierarchy>,
    /// Ground-truth factors, loadings, and coefficients.
    pub truth: SyntheticTruth,
}

/// Tests whether every characteristic root of the autoregression
/// `x_t = sum_i coeffs[i] * x_{t-i}` lies strictly inside `radius`.
pub fn ar_stable_within(coeffs: &[f64], radius: f64) -> bool {
    // Scale so the question becomes stability on the unit disk, then run the
    // step-down recursion on the partial autocorrelations.
    let mut a: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(i, &v)| v / radius.powi(i as i32 + 1))
        .collect();
    while let Some(&kappa) = a.last() {
        if !(kappa.abs() < 1.0) {
            return false;
        }
        let m = a.len();
        if m == 1 {
            break;
        }
        let denom = 1.0 - kappa * kappa;
        let prev: Vec<f64> = (0..m - 1)
            .map(|i| (a[i] + kappa * a[m - 2 - i]) / denom)
            .collect();
        a = prev;
    }
    true
}

/// Shrinks the coefficients onto [`STABILITY_RADIUS`] when needed. Scaling
/// lag `i` by `c^i` scales every characteristic root by `c`, so a bisection
/// on `c` lands exactly on the boundary.
fn stabilize(coeffs: &mut [f64]) {
    if ar_stable_within(coeffs, STABILITY_RADIUS) {
        return;
    }
    let scaled = |c: f64, coeffs: &[f64]| -> Vec<f64> {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, &v)| v * c.powi(i as i32 + 1))
            .collect()
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ar_stable_within(&scaled(mid, coeffs), STABILITY_RADIUS) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let stable = scaled(lo, coeffs);
    coeffs.copy_from_slice(&stable);
}

/// Generates a dataset from the spec. Identical specs produce identical
/// datasets.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (t_len, d, p) = (spec.t_len, spec.d_true, spec.p_true);

    // Autoregression coefficients, stabilized row by row.
    let mut theta = Array2::<f64>::zeros((d, p));
    for j in 0..d {
        let mut row: Vec<f64> = (0..p)
            .map(|_| rng.sample::<f64, _>(StandardNormal) / (p as f64).sqrt())
            .collect();
        stabilize(&mut row);
        for (i, v) in row.into_iter().enumerate() {
            theta[[j, i]] = v;
        }
    }

    // Factor paths with a burn-in prefix.
    let mut x = Array2::<f64>::zeros((t_len, d));
    for j in 0..d {
        let mut path: Vec<f64> = Vec::with_capacity(BURN_IN + t_len);
        for t in 0..BURN_IN + t_len {
            let mut v = 0.0;
            for i in 1..=p.min(t) {
                v += theta[[j, i - 1]] * path[t - i];
            }
            v += rng.sample::<f64, _>(StandardNormal);
            path.push(v);
        }
        for t in 0..t_len {
            x[[t, j]] = path[BURN_IN + t];
        }
    }

    // Tree layout (when present): nodes in level-major order, leaves last.
    let (ids, edges, n_leaves) = match &spec.tree {
        Some(branching) => {
            let mut ids = vec!["total".to_string()];
            let mut edges: Vec<(String, String, f64)> = Vec::new();
            let mut previous = vec!["total".to_string()];
            for (level, &b) in branching.iter().enumerate() {
                let last = level + 1 == branching.len();
                let mut current = Vec::new();
                for parent in &previous {
                    for _ in 0..b {
                        let child = if last {
                            format!("s{}", current.len())
                        } else {
                            format!("g{}_{}", level + 1, current.len())
                        };
                        edges.push((parent.clone(), child.clone(), 1.0));
                        current.push(child);
                    }
                }
                ids.extend(current.iter().cloned());
                previous = current;
            }
            let n_leaves = previous.len();
            (ids, edges, n_leaves)
        }
        None => {
            let ids: Vec<String> = (0..spec.n).map(|i| format!("s{i}")).collect();
            (ids, Vec::new(), spec.n)
        }
    };

    // Loadings and leaf values.
    let mut f = Array2::<f64>::zeros((d, n_leaves));
    for j in 0..d {
        for i in 0..n_leaves {
            f[[j, i]] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut leaves = x.dot(&f);
    if spec.noise_sigma > 0.0 {
        for v in leaves.iter_mut() {
            *v += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }

    // Full value grid: aggregates (when any) summed bottom-up so a parent is
    // exactly the sum of its children.
    let m_total = ids.len();
    let mut values = Array2::<f64>::zeros((t_len, m_total));
    let leaf_offset = m_total - n_leaves;
    for t in 0..t_len {
        for i in 0..n_leaves {
            values[[t, leaf_offset + i]] = leaves[[t, i]];
        }
    }
    let catalog = SeriesCatalog::new(ids)?;
    let hierarchy = if spec.tree.is_some() {
        let graph = HierarchyGraph::from_edges(edges);
        let h = validate_hierarchy(&graph, &catalog)?;
        let depth = h.depth().expect("generated tree is leveled");
        for level in (0..depth).rev() {
            for &node in h.level_nodes(level) {
                let col = h.column_of(node);
                for t in 0..t_len {
                    let mut acc = 0.0;
                    for &(child, _) in h.children(node) {
                        acc += values[[t, h.column_of(child)]];
                    }
                    values[[t, col]] = acc;
                }
            }
        }
        Some(h)
    } else {
        None
    };

    // Missing-completely-at-random mask; unobserved slots are zeroed.
    let mut mask = Array2::<bool>::from_elem((t_len, m_total), true);
    if spec.mask_density < 1.0 {
        for t in 0..t_len {
            for i in 0..m_total {
                if rng.random::<f64>() >= spec.mask_density {
                    mask[[t, i]] = false;
                    values[[t, i]] = 0.0;
                }
            }
        }
    }

    Ok(SyntheticDataset {
        observations: ObservationMatrix::new(values, mask, 0)?,
        catalog,
        hierarchy,
        truth: SyntheticTruth { x, f, theta },
    })
}
