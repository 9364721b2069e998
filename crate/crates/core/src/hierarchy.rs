//! Hierarchy graph, summing matrix, reconciliation, and seasonal indices.
//!
//! A hierarchy enters as a directed weighted edge list. Validation resolves
//! every node against the series catalog and, when the edges form a
//! single-root tree, assigns each node its depth as a level; level 0 is the
//! fully aggregated root and the deepest level holds the most disaggregated
//! series. Graphs that are not trees stay level-free and are still accepted
//! by the solver's loadings regularizer.

use ndarray::{Array1, Array2};
use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::data::{ObservationMatrix, SeriesCatalog};
use crate::error::{Error, Result};

/// Raw directed weighted graph over series identifiers.
#[derive(Debug, Clone, Default)]
pub struct HierarchyGraph {
    nodes: Vec<String>,
    edges: Vec<(usize, usize, f64)>,
    node_index: HashMap<String, usize>,
}

impl HierarchyGraph {
    /// Empty graph.
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from `(src, dst, weight)` edges; nodes are registered
    /// in order of first appearance.
    pub fn from_edges<I, S>(edges: I) -> Self
    where
        I: IntoIterator<Item = (S, S, f64)>,
        S: Into<String>,
    {
        let mut g = Self::new();
        for (src, dst, w) in edges {
            g.add_edge(src.into(), dst.into(), w);
        }
        g
    }

    /// Appends a directed edge, registering unseen endpoints.
    pub fn add_edge(&mut self, src: String, dst: String, weight: f64) {
        let s = self.intern(src);
        let d = self.intern(dst);
        self.edges.push((s, d, weight));
    }

    fn intern(&mut self, id: String) -> usize {
        if let Some(&i) = self.node_index.get(&id) {
            return i;
        }
        let i = self.nodes.len();
        self.node_index.insert(id.clone(), i);
        self.nodes.push(id);
        i
    }

    /// Node identifiers in first-appearance order.
    pub fn node_ids(&self) -> &[String] {
        &self.nodes
    }
}

/// Validated hierarchy: nodes resolved to catalog columns, adjacency checked,
/// levels assigned when the edge set forms a single-root tree.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    node_ids: Vec<String>,
    node_col: Vec<usize>,
    node_index: HashMap<String, usize>,
    children: Vec<Vec<(usize, f64)>>,
    levels: Option<LevelInfo>,
}

#[derive(Debug, Clone)]
struct LevelInfo {
    level_of: Vec<usize>,
    by_level: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
}

impl Hierarchy {
    /// Total node count `m`.
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    /// Identifier of node `idx`.
    pub fn node_id(&self, idx: usize) -> &str {
        &self.node_ids[idx]
    }

    /// Node index of `id`, if present.
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    /// Catalog column backing node `idx`.
    pub fn column_of(&self, idx: usize) -> usize {
        self.node_col[idx]
    }

    /// Out-neighbors of node `idx` with edge weights.
    pub fn children(&self, idx: usize) -> &[(usize, f64)] {
        &self.children[idx]
    }

    /// Whether levels were assigned (the edge set is a single-root tree).
    pub fn is_leveled(&self) -> bool {
        self.levels.is_some()
    }

    /// Deepest level `K`, when leveled.
    pub fn depth(&self) -> Option<usize> {
        self.levels.as_ref().map(|l| l.by_level.len() - 1)
    }

    /// Level of node `idx`, when leveled.
    pub fn level_of(&self, idx: usize) -> Option<usize> {
        self.levels.as_ref().map(|l| l.level_of[idx])
    }

    /// Node indices at `level`, in node registration order.
    pub fn level_nodes(&self, level: usize) -> &[usize] {
        match &self.levels {
            Some(l) if level < l.by_level.len() => &l.by_level[level],
            _ => &[],
        }
    }

    /// Parent of node `idx`, when leveled.
    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.levels.as_ref().and_then(|l| l.parent[idx])
    }

    /// Nodes without children, in level-major order.
    pub fn leaves(&self) -> Vec<usize> {
        self.node_order()
            .into_iter()
            .filter(|&v| self.children[v].is_empty())
            .collect()
    }

    /// All nodes in level-major order (level 0 first). Falls back to
    /// registration order for level-free graphs.
    pub fn node_order(&self) -> Vec<usize> {
        match &self.levels {
            Some(l) => l.by_level.iter().flatten().copied().collect(),
            None => (0..self.node_count()).collect(),
        }
    }

    /// Per-column out-neighbor lists for the loadings regularizer:
    /// entry `i` holds `(column j, weight)` pairs for every graph edge whose
    /// source node maps to column `i`.
    pub fn column_adjacency(&self, n_series: usize) -> Result<Vec<Vec<(usize, f64)>>> {
        let mut adj = vec![Vec::new(); n_series];
        for (idx, kids) in self.children.iter().enumerate() {
            let col = self.node_col[idx];
            if col >= n_series {
                return Err(Error::dims(
                    format!("column < {n_series}"),
                    format!("column {col} for node '{}'", self.node_ids[idx]),
                ));
            }
            for &(child, w) in kids {
                let jcol = self.node_col[child];
                if jcol >= n_series {
                    return Err(Error::dims(
                        format!("column < {n_series}"),
                        format!("column {jcol} for node '{}'", self.node_ids[child]),
                    ));
                }
                adj[col].push((jcol, w));
            }
        }
        Ok(adj)
    }

    fn require_leveled(&self) -> Result<&LevelInfo> {
        self.levels
            .as_ref()
            .ok_or_else(|| Error::NonTreeHierarchy("levels could not be assigned".into()))
    }
}

/// Resolves every graph node against the catalog, checks weights and loops,
/// and assigns levels when the edge set forms a single-root tree.
pub fn validate_hierarchy(graph: &HierarchyGraph, catalog: &SeriesCatalog) -> Result<Hierarchy> {
    let m = graph.nodes.len();
    if m == 0 {
        return Err(Error::EmptyInput("hierarchy has no nodes".into()));
    }
    let mut node_col = Vec::with_capacity(m);
    for id in &graph.nodes {
        match catalog.column(id) {
            Some(c) => node_col.push(c),
            None => return Err(Error::UnknownNode(id.clone())),
        }
    }

    let mut children: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut in_degree = vec![0usize; m];
    let mut seen: HashMap<(usize, usize), ()> = HashMap::new();
    for &(src, dst, w) in &graph.edges {
        if src == dst {
            return Err(Error::SelfLoop(graph.nodes[src].clone()));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::NonPositiveWeight {
                src: graph.nodes[src].clone(),
                dst: graph.nodes[dst].clone(),
                weight: w,
            });
        }
        if seen.insert((src, dst), ()).is_some() {
            return Err(Error::DuplicateEdge {
                src: graph.nodes[src].clone(),
                dst: graph.nodes[dst].clone(),
            });
        }
        children[src].push((dst, w));
        in_degree[dst] += 1;
    }

    // Tree detection: one root, unique parents, everything reachable.
    let roots: Vec<usize> = (0..m).filter(|&v| in_degree[v] == 0).collect();
    let tree_like = roots.len() == 1 && in_degree.iter().all(|&d| d <= 1);
    let levels = if tree_like {
        let root = roots[0];
        let mut level_of = vec![usize::MAX; m];
        let mut parent = vec![None; m];
        let mut queue = VecDeque::from([root]);
        level_of[root] = 0;
        while let Some(v) = queue.pop_front() {
            for &(c, _) in &children[v] {
                if level_of[c] == usize::MAX {
                    level_of[c] = level_of[v] + 1;
                    parent[c] = Some(v);
                    queue.push_back(c);
                }
            }
        }
        if let Some(stranded) = (0..m).find(|&v| level_of[v] == usize::MAX) {
            return Err(Error::CyclicLevels(graph.nodes[stranded].clone()));
        }
        let depth = *level_of.iter().max().unwrap();
        let mut by_level = vec![Vec::new(); depth + 1];
        for v in 0..m {
            by_level[level_of[v]].push(v);
        }
        Some(LevelInfo {
            level_of,
            by_level,
            parent,
        })
    } else {
        None
    };

    Ok(Hierarchy {
        node_ids: graph.nodes.clone(),
        node_col,
        node_index: graph.node_index.clone(),
        children,
        levels,
    })
}

/// The 0/1 matrix mapping bottom-level series to every hierarchy node.
///
/// Rows follow `node_order` (level-major), columns follow `leaf_order`; the
/// row of a node carries ones exactly at its descendant leaves, so the top
/// row is all ones and each leaf row is a distinct unit row.
#[derive(Debug, Clone)]
pub struct SummingMatrix {
    s: Array2<f64>,
    node_order: Vec<String>,
    leaf_order: Vec<String>,
}

impl SummingMatrix {
    /// The matrix itself, `m x m_K`.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.s
    }

    /// Total node count `m`.
    pub fn m(&self) -> usize {
        self.s.nrows()
    }

    /// Leaf count `m_K`.
    pub fn m_leaves(&self) -> usize {
        self.s.ncols()
    }

    /// Node ids in row order (level-major).
    pub fn node_order(&self) -> &[String] {
        &self.node_order
    }

    /// Leaf ids in column order.
    pub fn leaf_order(&self) -> &[String] {
        &self.leaf_order
    }
}

/// Builds the summing matrix of a leveled tree hierarchy.
pub fn build_summing_matrix(h: &Hierarchy) -> Result<SummingMatrix> {
    h.require_leveled()?;
    let order = h.node_order();
    let leaves = h.leaves();
    let leaf_pos: HashMap<usize, usize> =
        leaves.iter().enumerate().map(|(c, &v)| (v, c)).collect();
    let mut s = Array2::<f64>::zeros((order.len(), leaves.len()));
    for (r, &v) in order.iter().enumerate() {
        // All descendant leaves of v.
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if h.children(u).is_empty() {
                s[[r, leaf_pos[&u]]] = 1.0;
            } else {
                stack.extend(h.children(u).iter().map(|&(c, _)| c));
            }
        }
    }
    Ok(SummingMatrix {
        s,
        node_order: order.iter().map(|&v| h.node_id(v).to_string()).collect(),
        leaf_order: leaves.iter().map(|&v| h.node_id(v).to_string()).collect(),
    })
}

/// Sums leaf forecasts up the hierarchy: returns `S * leaf_forecasts`.
pub fn aggregate_bottom_up(leaf_forecasts: &Array2<f64>, s: &SummingMatrix) -> Result<Array2<f64>> {
    if leaf_forecasts.nrows() != s.m_leaves() {
        return Err(Error::dims(
            format!("{} leaf rows", s.m_leaves()),
            format!("{}", leaf_forecasts.nrows()),
        ));
    }
    Ok(s.s.dot(leaf_forecasts))
}

/// Historical-share proration weights for the children of `node`.
///
/// Each child's weight is the sum of its observed history divided by the sum
/// over all children; the weights sum to one.
pub fn estimate_proration(y: &ObservationMatrix, h: &Hierarchy, node: &str) -> Result<Vec<f64>> {
    let idx = h
        .node_index(node)
        .ok_or_else(|| Error::UnknownNode(node.to_string()))?;
    let kids = h.children(idx);
    if kids.is_empty() {
        return Err(Error::EmptyInput(format!("node '{node}' has no children")));
    }
    let mut sums = Vec::with_capacity(kids.len());
    for &(c, _) in kids {
        let col = h.column_of(c);
        let mut any = false;
        let mut s = 0.0;
        for (_, v) in y.observed_in_column(col) {
            any = true;
            s += v;
        }
        if !any {
            return Err(Error::EmptyInput(format!(
                "child '{}' has no observed periods",
                h.node_id(c)
            )));
        }
        sums.push(s);
    }
    let total: f64 = sums.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoProrationBasis(node.to_string()));
    }
    Ok(sums.into_iter().map(|s| s / total).collect())
}

/// Splits an aggregate forecast across children by fixed shares.
///
/// Row `c` of the result is `weights[c] * aggregate_forecast`.
pub fn disaggregate_top_down(
    aggregate_forecast: &Array1<f64>,
    weights: &[f64],
) -> Result<Array2<f64>> {
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::WeightSumViolation(sum));
    }
    let h = aggregate_forecast.len();
    let mut out = Array2::<f64>::zeros((weights.len(), h));
    for (c, &w) in weights.iter().enumerate() {
        for k in 0..h {
            out[[c, k]] = w * aggregate_forecast[k];
        }
    }
    Ok(out)
}

/// Fills a whole hierarchy from forecasts given at one level: levels above
/// are summed bottom-up, levels below are prorated top-down using observed
/// history shares. Returns an `m x h` matrix in summing-matrix node order.
///
/// Every leaf must sit at depth >= `level`, so each leaf is covered by
/// exactly one level-`level` ancestor.
pub fn reconcile_middle_out(
    y: &ObservationMatrix,
    h: &Hierarchy,
    level: usize,
    forecasts: &BTreeMap<String, Vec<f64>>,
) -> Result<Array2<f64>> {
    let info = h.require_leveled()?;
    let depth = h.depth().unwrap();
    if level > depth {
        return Err(Error::dims(
            format!("level <= {depth}"),
            format!("{level}"),
        ));
    }
    for &v in &h.leaves() {
        if info.level_of[v] < level {
            return Err(Error::NonTreeHierarchy(format!(
                "leaf '{}' sits above level {level}; middle-out needs full coverage",
                h.node_id(v)
            )));
        }
    }

    // Seed the chosen level.
    let mut horizon = None;
    let mut values: Vec<Option<Array1<f64>>> = vec![None; h.node_count()];
    for &v in h.level_nodes(level) {
        let id = h.node_id(v);
        let f = forecasts.get(id).ok_or_else(|| Error::MissingLevelForecast {
            level,
            node: id.to_string(),
        })?;
        match horizon {
            None => horizon = Some(f.len()),
            Some(len) if len != f.len() => {
                return Err(Error::dims(format!("horizon {len}"), format!("{}", f.len())))
            }
            _ => {}
        }
        values[v] = Some(Array1::from_vec(f.clone()));
    }
    let horizon = horizon.ok_or_else(|| Error::EmptyInput("no forecasts supplied".into()))?;

    // Upward: each node above the level is the sum of its children.
    for lv in (0..level).rev() {
        for &v in h.level_nodes(lv) {
            let mut acc = Array1::<f64>::zeros(horizon);
            for &(c, _) in h.children(v) {
                acc += values[c].as_ref().expect("children filled level by level");
            }
            values[v] = Some(acc);
        }
    }

    // Downward: prorate each node's value over its children.
    for lv in level..depth {
        for &v in h.level_nodes(lv) {
            if h.children(v).is_empty() {
                continue;
            }
            let Some(parent_value) = values[v].clone() else {
                continue;
            };
            let weights = estimate_proration(y, h, h.node_id(v))?;
            let shares = disaggregate_top_down(&parent_value, &weights)?;
            for (c_pos, &(c, _)) in h.children(v).iter().enumerate() {
                values[c] = Some(shares.row(c_pos).to_owned());
            }
        }
    }

    let order = h.node_order();
    let mut out = Array2::<f64>::zeros((order.len(), horizon));
    for (r, &v) in order.iter().enumerate() {
        let row = values[v]
            .as_ref()
            .ok_or_else(|| Error::MissingLevelForecast {
                level: info.level_of[v],
                node: h.node_id(v).to_string(),
            })?;
        out.row_mut(r).assign(row);
    }
    Ok(out)
}

/// A cycle of multiplicative seasonal indices with mean one.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalIndex {
    length: usize,
    indices: Vec<f64>,
}

impl SeasonalIndex {
    fn new(indices: Vec<f64>) -> Result<Self> {
        for (pos, &v) in indices.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonPositiveIndex {
                    value: v,
                    position: pos + 1,
                });
            }
        }
        Ok(Self {
            length: indices.len(),
            indices,
        })
    }

    /// Season cycle length `L`.
    pub fn len(&self) -> usize {
        self.length
    }

    /// True for the (invalid, unreachable) empty cycle.
    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    /// Index values for positions `1..=L`.
    pub fn indices(&self) -> &[f64] {
        &self.indices
    }
}

/// Individual seasonal index: per-position mean divided by the overall mean,
/// computed over complete cycles.
pub fn compute_isi(series: &[f64], season_len: usize) -> Result<SeasonalIndex> {
    if season_len == 0 || series.is_empty() || series.len() % season_len != 0 {
        return Err(Error::IncompleteCycles {
            len: series.len(),
            season: season_len,
        });
    }
    let overall = series.iter().sum::<f64>() / series.len() as f64;
    if !(overall > 0.0) {
        return Err(Error::NonPositiveMean(overall));
    }
    let cycles = series.len() / season_len;
    let mut indices = Vec::with_capacity(season_len);
    for s in 0..season_len {
        let pos_mean = (0..cycles).map(|c| series[c * season_len + s]).sum::<f64>()
            / cycles as f64;
        indices.push(pos_mean / overall);
    }
    SeasonalIndex::new(indices)
}

/// Group seasonal index from the summed series (Withycombe).
pub fn compute_wgsi(group: &[Vec<f64>], season_len: usize) -> Result<SeasonalIndex> {
    let first_len = group
        .first()
        .ok_or_else(|| Error::EmptyInput("empty group".into()))?
        .len();
    let mut total = vec![0.0; first_len];
    for member in group {
        if member.len() != first_len {
            return Err(Error::dims(
                format!("series length {first_len}"),
                format!("{}", member.len()),
            ));
        }
        for (acc, v) in total.iter_mut().zip(member) {
            *acc += v;
        }
    }
    compute_isi(&total, season_len)
}

/// Group seasonal index from averaged member indices (Dalhart).
pub fn compute_dgsi(group: &[Vec<f64>], season_len: usize) -> Result<SeasonalIndex> {
    if group.is_empty() {
        return Err(Error::EmptyInput("empty group".into()));
    }
    let mut acc = vec![0.0; season_len];
    for member in group {
        let isi = compute_isi(member, season_len)?;
        for (a, v) in acc.iter_mut().zip(isi.indices()) {
            *a += v;
        }
    }
    let k = group.len() as f64;
    SeasonalIndex::new(acc.into_iter().map(|v| v / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::assemble_observations;
    use ndarray::array;

    fn catalog(ids: &[&str]) -> SeriesCatalog {
        SeriesCatalog::new(ids.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn two_leaf() -> (HierarchyGraph, SeriesCatalog) {
        let g = HierarchyGraph::from_edges([("root", "a", 1.0), ("root", "b", 1.0)]);
        (g, catalog(&["root", "a", "b"]))
    }

    #[test]
    fn validates_two_leaf_tree() {
        let (g, cat) = two_leaf();
        let h = validate_hierarchy(&g, &cat).unwrap();
        assert!(h.is_leveled());
        assert_eq!(h.depth(), Some(1));
        let leaves: Vec<_> = h.leaves().iter().map(|&v| h.node_id(v).to_string()).collect();
        assert_eq!(leaves, vec!["a", "b"]);
    }

    #[test]
    fn rejects_self_loop() {
        let g = HierarchyGraph::from_edges([("a", "a", 1.0)]);
        let err = validate_hierarchy(&g, &catalog(&["a"])).unwrap_err();
        assert!(err.to_string().contains("self-loop"));
    }

    #[test]
    fn rejects_non_positive_weight() {
        let g = HierarchyGraph::from_edges([("root", "a", -1.0)]);
        let err = validate_hierarchy(&g, &catalog(&["root", "a"])).unwrap_err();
        assert!(err.to_string().contains("non-positive weight"));
    }

    #[test]
    fn rejects_unknown_node() {
        let (g, _) = two_leaf();
        let err = validate_hierarchy(&g, &catalog(&["root", "a"])).unwrap_err();
        assert!(err.to_string().contains("unknown node id 'b'"));
    }

    #[test]
    fn mutual_links_stay_level_free() {
        let g = HierarchyGraph::from_edges([("a", "b", 1.0), ("b", "a", 1.0)]);
        let h = validate_hierarchy(&g, &catalog(&["a", "b"])).unwrap();
        assert!(!h.is_leveled());
        assert!(build_summing_matrix(&h).is_err());
    }

    #[test]
    fn detects_cycle_behind_root() {
        let g = HierarchyGraph::from_edges([
            ("root", "a", 1.0),
            ("b", "c", 1.0),
            ("c", "d", 1.0),
            ("d", "b", 1.0),
        ]);
        // in-degrees: root 0, a 1, b 1, c 1, d 1 -> tree-like but b,c,d unreachable
        let err = validate_hierarchy(&g, &catalog(&["root", "a", "b", "c", "d"])).unwrap_err();
        assert!(err.to_string().contains("cyclic"), "{err}");
    }

    #[test]
    fn level_counts_sum_to_node_count() {
        let g = HierarchyGraph::from_edges([
            ("root", "A", 1.0),
            ("root", "B", 1.0),
            ("A", "a1", 1.0),
            ("A", "a2", 1.0),
            ("B", "b1", 1.0),
        ]);
        let h = validate_hierarchy(&g, &catalog(&["root", "A", "B", "a1", "a2", "b1"])).unwrap();
        let total: usize = (0..=h.depth().unwrap()).map(|l| h.level_nodes(l).len()).sum();
        assert_eq!(total, h.node_count());
    }

    #[test]
    fn summing_matrix_two_leaf() {
        let (g, cat) = two_leaf();
        let h = validate_hierarchy(&g, &cat).unwrap();
        let s = build_summing_matrix(&h).unwrap();
        assert_eq!(s.node_order(), &["root", "a", "b"]);
        assert_eq!(s.leaf_order(), &["a", "b"]);
        assert_eq!(s.matrix(), &array![[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn summing_matrix_three_leaf_two_level() {
        let g = HierarchyGraph::from_edges([
            ("root", "A", 1.0),
            ("root", "B", 1.0),
            ("A", "a1", 1.0),
            ("A", "a2", 1.0),
            ("B", "b1", 1.0),
        ]);
        let cat = catalog(&["root", "A", "B", "a1", "a2", "b1"]);
        let h = validate_hierarchy(&g, &cat).unwrap();
        let s = build_summing_matrix(&h).unwrap();
        assert_eq!(s.node_order(), &["root", "A", "B", "a1", "a2", "b1"]);
        assert_eq!(
            s.matrix(),
            &array![
                [1.0, 1.0, 1.0],
                [1.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0]
            ]
        );
    }

    #[test]
    fn bottom_up_two_leaf() {
        let (g, cat) = two_leaf();
        let h = validate_hierarchy(&g, &cat).unwrap();
        let s = build_summing_matrix(&h).unwrap();
        let up = aggregate_bottom_up(&array![[70.0], [30.0]], &s).unwrap();
        assert_eq!(up, array![[100.0], [70.0], [30.0]]);
        let zeros = aggregate_bottom_up(&Array2::zeros((2, 3)), &s).unwrap();
        assert!(zeros.iter().all(|&v| v == 0.0));
    }

    fn proration_setup() -> (ObservationMatrix, Hierarchy) {
        let records: Vec<(String, u64, f64)> = vec![
            ("root".into(), 0, 10.0),
            ("root".into(), 1, 10.0),
            ("a".into(), 0, 7.0),
            ("a".into(), 1, 7.0),
            ("b".into(), 0, 3.0),
            ("b".into(), 1, 3.0),
        ];
        let (y, cat) = assemble_observations(&records).unwrap();
        let g = HierarchyGraph::from_edges([("root", "a", 1.0), ("root", "b", 1.0)]);
        let h = validate_hierarchy(&g, &cat).unwrap();
        (y, h)
    }

    #[test]
    fn proration_from_history_shares() {
        let (y, h) = proration_setup();
        let w = estimate_proration(&y, &h, "root").unwrap();
        assert!((w[0] - 0.7).abs() < 1e-12);
        assert!((w[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn proration_single_child() {
        let records: Vec<(String, u64, f64)> =
            vec![("root".into(), 0, 5.0), ("a".into(), 0, 5.0)];
        let (y, cat) = assemble_observations(&records).unwrap();
        let g = HierarchyGraph::from_edges([("root", "a", 1.0)]);
        let h = validate_hierarchy(&g, &cat).unwrap();
        assert_eq!(estimate_proration(&y, &h, "root").unwrap(), vec![1.0]);
    }

    #[test]
    fn proration_three_children() {
        let records: Vec<(String, u64, f64)> = vec![
            ("root".into(), 0, 100.0),
            ("a".into(), 0, 4.0),
            ("a".into(), 1, 6.0),
            ("b".into(), 0, 30.0),
            ("c".into(), 0, 60.0),
        ];
        let (y, cat) = assemble_observations(&records).unwrap();
        let g =
            HierarchyGraph::from_edges([("root", "a", 1.0), ("root", "b", 1.0), ("root", "c", 1.0)]);
        let h = validate_hierarchy(&g, &cat).unwrap();
        let w = estimate_proration(&y, &h, "root").unwrap();
        assert!((w[0] - 0.1).abs() < 1e-12);
        assert!((w[1] - 0.3).abs() < 1e-12);
        assert!((w[2] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn proration_rejects_zero_history() {
        let records: Vec<(String, u64, f64)> = vec![
            ("root".into(), 0, 0.0),
            ("a".into(), 0, 0.0),
            ("b".into(), 0, 0.0),
        ];
        let (y, cat) = assemble_observations(&records).unwrap();
        let g = HierarchyGraph::from_edges([("root", "a", 1.0), ("root", "b", 1.0)]);
        let h = validate_hierarchy(&g, &cat).unwrap();
        let err = estimate_proration(&y, &h, "root").unwrap_err();
        assert!(err.to_string().contains("no basis for proration"));
    }

    #[test]
    fn top_down_splits_by_weight() {
        let out = disaggregate_top_down(&array![100.0], &[0.7, 0.3]).unwrap();
        assert_eq!(out, array![[70.0], [30.0]]);
        let ident = disaggregate_top_down(&array![4.0, 5.0], &[1.0]).unwrap();
        assert_eq!(ident, array![[4.0, 5.0]]);
        let zeros = disaggregate_top_down(&array![0.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!(zeros.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn top_down_rejects_bad_weights() {
        let err = disaggregate_top_down(&array![1.0], &[0.5, 0.6]).unwrap_err();
        assert!(err.to_string().contains("weights sum"));
    }

    #[test]
    fn middle_out_boundaries_reduce_to_primitives() {
        let (y, h) = proration_setup();
        let s = build_summing_matrix(&h).unwrap();

        // level K: equivalent to bottom-up over the leaf forecasts
        let mut leaf_fc = BTreeMap::new();
        leaf_fc.insert("a".to_string(), vec![7.0, 7.7]);
        leaf_fc.insert("b".to_string(), vec![3.0, 3.3]);
        let full = reconcile_middle_out(&y, &h, 1, &leaf_fc).unwrap();
        let up = aggregate_bottom_up(&array![[7.0, 7.7], [3.0, 3.3]], &s).unwrap();
        assert_eq!(full, up);

        // level 0: equivalent to top-down proration of the root forecast
        let mut root_fc = BTreeMap::new();
        root_fc.insert("root".to_string(), vec![100.0]);
        let full = reconcile_middle_out(&y, &h, 0, &root_fc).unwrap();
        assert_eq!(full.row(0), array![100.0].view());
        assert!((full[[1, 0]] - 70.0).abs() < 1e-12);
        assert!((full[[2, 0]] - 30.0).abs() < 1e-12);
    }

    #[test]
    fn middle_out_requires_every_level_node() {
        let (y, h) = proration_setup();
        let mut partial = BTreeMap::new();
        partial.insert("a".to_string(), vec![7.0]);
        let err = reconcile_middle_out(&y, &h, 1, &partial).unwrap_err();
        assert!(err.to_string().contains("missing forecast"), "{err}");
    }

    #[test]
    fn isi_two_season_alternation() {
        let idx = compute_isi(&[1.0, 3.0, 1.0, 3.0], 2).unwrap();
        assert_eq!(idx.indices(), &[0.5, 1.5]);
        let idx = compute_isi(&[2.0, 6.0, 2.0, 6.0], 2).unwrap();
        assert_eq!(idx.indices(), &[0.5, 1.5]);
    }

    #[test]
    fn isi_constant_series_is_flat() {
        let idx = compute_isi(&[4.0; 6], 3).unwrap();
        assert!(idx.indices().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn isi_rejects_incomplete_cycles_and_zero_mean() {
        assert!(compute_isi(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(compute_isi(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn wgsi_sums_then_indexes() {
        let group = vec![vec![1.0, 3.0, 1.0, 3.0], vec![2.0, 6.0, 2.0, 6.0]];
        let idx = compute_wgsi(&group, 2).unwrap();
        assert_eq!(idx.indices(), &[0.5, 1.5]);
        // singleton group equals its ISI
        let single = vec![vec![1.0, 3.0, 1.0, 3.0]];
        assert_eq!(
            compute_wgsi(&single, 2).unwrap(),
            compute_isi(&single[0], 2).unwrap()
        );
        // constants stay flat
        let flat = vec![vec![5.0; 4], vec![2.0; 4]];
        assert!(compute_wgsi(&flat, 2)
            .unwrap()
            .indices()
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn dgsi_averages_member_indices() {
        let group = vec![vec![1.0, 3.0, 1.0, 3.0], vec![2.0, 6.0, 2.0, 6.0]];
        let idx = compute_dgsi(&group, 2).unwrap();
        assert_eq!(idx.indices(), &[0.5, 1.5]);
        // opposite members cancel to a flat index
        let opposed = vec![vec![1.0, 3.0, 1.0, 3.0], vec![3.0, 1.0, 3.0, 1.0]];
        let idx = compute_dgsi(&opposed, 2).unwrap();
        assert!(idx.indices().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        // singleton group equals its ISI
        let single = vec![vec![2.0, 6.0, 2.0, 6.0]];
        assert_eq!(
            compute_dgsi(&single, 2).unwrap(),
            compute_isi(&single[0], 2).unwrap()
        );
    }

    #[test]
    fn wgsi_equals_dgsi_for_proportional_members() {
        let base = vec![1.0, 3.0, 2.0, 1.0, 3.0, 2.0];
        let group = vec![
            base.clone(),
            base.iter().map(|v| v * 4.0).collect::<Vec<_>>(),
        ];
        let w = compute_wgsi(&group, 3).unwrap();
        let d = compute_dgsi(&group, 3).unwrap();
        for (a, b) in w.indices().iter().zip(d.indices()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
