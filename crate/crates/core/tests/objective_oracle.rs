//! Checks the objective evaluation against a literal term-by-term oracle and
//! verifies that converged fits are stationary points under central finite
//! differences.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trmf_core::{
    evaluate_objective, fit, validate_hierarchy, FactorModel, Hierarchy, HierarchyGraph,
    Hyperparams, ObservationMatrix, SeriesCatalog,
};

/// Direct summation of every objective term, written independently of the
/// solver: plain loops over the definition, no shared helpers.
#[allow(clippy::too_many_arguments)]
fn naive_objective(
    values: &Array2<f64>,
    mask: &Array2<bool>,
    x: &Array2<f64>,
    f: &Array2<f64>,
    theta: &Array2<f64>,
    hyper: &Hyperparams,
    edges: Option<&[(usize, usize, f64)]>,
) -> f64 {
    let (t_len, n) = values.dim();
    let (d, p) = (hyper.d, hyper.p);

    let mut recon = 0.0;
    for t in 0..t_len {
        for i in 0..n {
            if mask[[t, i]] {
                let mut pred = 0.0;
                for j in 0..d {
                    pred += x[[t, j]] * f[[j, i]];
                }
                let r = values[[t, i]] - pred;
                recon += r * r;
            }
        }
    }
    recon /= 2.0 * t_len as f64 * n as f64;

    let mut f_sq = 0.0;
    for j in 0..d {
        for i in 0..n {
            f_sq += f[[j, i]] * f[[j, i]];
        }
    }
    let f_pen = match edges {
        None => hyper.lambda_f / 2.0 / (d * n) as f64 * f_sq,
        Some(edges) => {
            let mut neighborhoods: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
            for &(src, dst, w) in edges {
                neighborhoods[src].push((dst, w));
            }
            let mut dev = 0.0;
            for i in 0..n {
                if neighborhoods[i].is_empty() {
                    continue;
                }
                let card = neighborhoods[i].len() as f64;
                for r in 0..d {
                    let mut avg = 0.0;
                    for &(j, w) in &neighborhoods[i] {
                        avg += f[[r, j]] * w;
                    }
                    avg /= card;
                    let diff = f[[r, i]] - avg;
                    dev += diff * diff;
                }
            }
            hyper.lambda_f / 2.0 / (d * n) as f64
                * ((1.0 - hyper.eta_f) * f_sq + hyper.eta_f * dev)
        }
    };

    let mut theta_sq = 0.0;
    for j in 0..d {
        for i in 0..p {
            theta_sq += theta[[j, i]] * theta[[j, i]];
        }
    }
    let theta_pen = hyper.lambda_theta / 2.0 / (d * p) as f64 * theta_sq;

    let mut x_sq = 0.0;
    for t in 0..t_len {
        for j in 0..d {
            x_sq += x[[t, j]] * x[[t, j]];
        }
    }
    let mut ar_sq = 0.0;
    for j in 0..d {
        for t in p..t_len {
            let mut pred = 0.0;
            for i in 1..=p {
                pred += theta[[j, i - 1]] * x[[t - i, j]];
            }
            let r = x[[t, j]] - pred;
            ar_sq += r * r;
        }
    }
    let x_pen = hyper.lambda_x / 2.0
        * ((1.0 - hyper.eta_x) / (t_len * d) as f64 * x_sq
            + hyper.eta_x / ((t_len - p) * d) as f64 * ar_sq);

    recon + f_pen + theta_pen + x_pen
}

struct Instance {
    y: ObservationMatrix,
    model: FactorModel,
    hierarchy: Option<Hierarchy>,
    edges: Option<Vec<(usize, usize, f64)>>,
}

fn random_instance(
    seed: u64,
    t_len: usize,
    n: usize,
    d: usize,
    p: usize,
    density: f64,
    with_graph: bool,
) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_fn((t_len, n), |_| rng.random::<f64>() * 6.0 - 3.0);
    let mask = Array2::from_shape_fn((t_len, n), |_| rng.random::<f64>() < density);
    let y = ObservationMatrix::new(values, mask, 0).unwrap();
    let hyper = Hyperparams {
        d,
        p,
        lambda_f: 1.0,
        lambda_x: 1.0,
        lambda_theta: 1.0,
        eta_x: 0.5,
        eta_f: 0.5,
        seed,
        ..Hyperparams::default()
    };
    let model = FactorModel {
        x: Array2::from_shape_fn((t_len, d), |_| rng.random::<f64>() - 0.5),
        f: Array2::from_shape_fn((d, n), |_| rng.random::<f64>() - 0.5),
        theta: Array2::from_shape_fn((d, p), |_| rng.random::<f64>() * 0.8 - 0.4),
        hyper,
        objective_trace: vec![],
    };
    let (hierarchy, edges) = if with_graph {
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let catalog = SeriesCatalog::new(ids.clone()).unwrap();
        let mut graph = HierarchyGraph::new();
        let mut edge_cols = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < 0.4 {
                    let w = rng.random::<f64>() + 0.5;
                    graph.add_edge(ids[i].clone(), ids[j].clone(), w);
                    edge_cols.push((i, j, w));
                }
            }
        }
        if edge_cols.is_empty() {
            graph.add_edge(ids[0].clone(), ids[1].clone(), 1.0);
            edge_cols.push((0, 1, 1.0));
        }
        (
            Some(validate_hierarchy(&graph, &catalog).unwrap()),
            Some(edge_cols),
        )
    } else {
        (None, None)
    };
    Instance {
        y,
        model,
        hierarchy,
        edges,
    }
}

fn assert_matches_oracle(inst: &Instance, rtol: f64) {
    let got = evaluate_objective(&inst.y, &inst.model, inst.hierarchy.as_ref()).unwrap();
    let want = naive_objective(
        inst.y.values(),
        inst.y.mask(),
        &inst.model.x,
        &inst.model.f,
        &inst.model.theta,
        &inst.model.hyper,
        inst.edges.as_deref(),
    );
    assert!(
        (got - want).abs() <= rtol * want.abs().max(1e-300),
        "objective {got} vs oracle {want}"
    );
}

#[test]
fn objective_matches_oracle_on_spec_instance() {
    // 4x3, d = 2, p = 1, all lambdas 1, etas 0.5, full mask.
    let inst = random_instance(42, 4, 3, 2, 1, 1.0, false);
    assert_matches_oracle(&inst, 1e-12);
}

#[test]
fn objective_matches_oracle_on_random_instances() {
    for seed in 0..12 {
        let with_graph = seed % 2 == 1;
        let density = if seed % 3 == 0 { 1.0 } else { 0.6 };
        let inst = random_instance(seed, 7, 5, 2, 2, density, with_graph);
        assert_matches_oracle(&inst, 1e-12);
    }
}

#[test]
fn full_mask_reconstruction_term_is_plain_frobenius() {
    let inst = random_instance(5, 6, 4, 2, 1, 1.0, false);
    let mut hyper = inst.model.hyper.clone();
    hyper.lambda_f = 0.0;
    hyper.lambda_x = 0.0;
    hyper.lambda_theta = 0.0;
    let model = FactorModel {
        hyper,
        ..inst.model.clone()
    };
    let got = evaluate_objective(&inst.y, &model, None).unwrap();
    let resid = inst.y.values() - &model.x.dot(&model.f);
    let direct = resid.iter().map(|v| v * v).sum::<f64>()
        / (2.0 * (inst.y.t_len() * inst.y.n_series()) as f64);
    assert_eq!(got, direct);
}

/// Central finite differences of the objective with respect to every entry
/// of X, F, and theta; returns the largest magnitude relative to the
/// objective scale.
fn max_relative_gradient(
    y: &ObservationMatrix,
    model: &FactorModel,
    hierarchy: Option<&Hierarchy>,
) -> f64 {
    let step = 1e-6;
    let scale = evaluate_objective(y, model, hierarchy).unwrap().abs().max(1.0);
    let mut worst: f64 = 0.0;
    let mut probe = |perturb: &dyn Fn(&mut FactorModel, f64)| {
        let mut plus = model.clone();
        perturb(&mut plus, step);
        let mut minus = model.clone();
        perturb(&mut minus, -step);
        let g = (evaluate_objective(y, &plus, hierarchy).unwrap()
            - evaluate_objective(y, &minus, hierarchy).unwrap())
            / (2.0 * step);
        worst = worst.max(g.abs() / scale);
    };
    for t in 0..model.x.nrows() {
        for j in 0..model.x.ncols() {
            probe(&|m: &mut FactorModel, s: f64| m.x[[t, j]] += s);
        }
    }
    for j in 0..model.f.nrows() {
        for i in 0..model.f.ncols() {
            probe(&|m: &mut FactorModel, s: f64| m.f[[j, i]] += s);
        }
    }
    for j in 0..model.theta.nrows() {
        for i in 0..model.theta.ncols() {
            probe(&|m: &mut FactorModel, s: f64| m.theta[[j, i]] += s);
        }
    }
    worst
}

#[test]
fn converged_fit_is_a_stationary_point() {
    for (seed, with_graph) in [(1u64, false), (2, true), (3, false)] {
        let inst = random_instance(seed, 10, 5, 2, 2, if seed == 3 { 0.5 } else { 1.0 }, with_graph);
        let hyper = Hyperparams {
            tol: 1e-12,
            max_sweeps: 4000,
            ..inst.model.hyper.clone()
        };
        let (model, report) = fit(&inst.y, &hyper, inst.hierarchy.as_ref()).unwrap();
        assert!(report.converged, "seed {seed} did not converge");
        let g = max_relative_gradient(&inst.y, &model, inst.hierarchy.as_ref());
        assert!(g < 1e-5, "seed {seed}: max relative gradient {g}");
    }
}
