//! Weighted digraphs, their Laplacians and the block decomposition into
//! basic and non-basic bicomponents.
//!
//! Convention: `a_ij > 0` is an edge from node `j` to node `i`, i.e. agent
//! `i` receives information from agent `j`. All indices are 0-based in the
//! API; the edge-list text format is 1-based.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct DirectedWeightedGraph {
    weights: Mat,
}

impl DirectedWeightedGraph {
    /// Builds a graph from its weighted adjacency matrix.
    pub fn new(weights: Mat) -> Result<Self> {
        let (r, c) = weights.shape();
        if r == 0 || r != c {
            return Err(Error::InvalidGraph(format!(
                "adjacency matrix must be square and non-empty, got {r}x{c}"
            )));
        }
        for i in 0..r {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", i + 1)));
            }
            for j in 0..c {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidGraph(format!(
                        "weight a[{}][{}] = {w} is not a nonnegative finite number",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph from 0-based `(src, dst, weight)` triples.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut w = Mat::zeros(node_count, node_count);
        for &(src, dst, weight) in edges {
            if src >= node_count || dst >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge {} -> {} references a node outside 1..={node_count}",
                    src + 1,
                    dst + 1
                )));
            }
            if w[(dst, src)] != 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge {} -> {}",
                    src + 1,
                    dst + 1
                )));
            }
            w[(dst, src)] = weight;
        }
        Self::new(w)
    }

    /// Parses the edge-list text format:
    ///
    /// ```text
    /// # comment
    /// nodes 3
    /// 1 3 1.0     # src dst weight, 1-based
    /// ```
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut node_count = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            match node_count {
                None => {
                    if fields.len() != 2 || fields[0] != "nodes" {
                        return Err(parse_err(format!("expected `nodes N` before any edge, found `{line}`")));
                    }
                    let n: usize = fields[1]
                        .parse()
                        .map_err(|_| parse_err(format!("invalid node count `{}`", fields[1])))?;
                    if n == 0 {
                        return Err(parse_err("node count must be positive".into()));
                    }
                    node_count = Some(n);
                }
                Some(n) => {
                    if fields.len() != 3 {
                        return Err(parse_err(format!("expected `src dst weight`, found `{line}`")));
                    }
                    let node = |s: &str| -> Result<usize> {
                        let v: usize = s.parse().map_err(|_| parse_err(format!("invalid node index `{s}`")))?;
                        if v == 0 || v > n {
                            return Err(parse_err(format!("node index {v} outside 1..={n}")));
                        }
                        Ok(v - 1)
                    };
                    let src = node(fields[0])?;
                    let dst = node(fields[1])?;
                    let weight: f64 = fields[2]
                        .parse()
                        .map_err(|_| parse_err(format!("invalid weight `{}`", fields[2])))?;
                    if !weight.is_finite() || weight <= 0.0 {
                        return Err(parse_err(format!("weight {weight} must be positive")));
                    }
                    if src == dst {
                        return Err(parse_err(format!("self-loop at node {}", src + 1)));
                    }
                    if edges.iter().any(|&(s, d, _)| s == src && d == dst) {
                        return Err(parse_err(format!("duplicate edge {} -> {}", src + 1, dst + 1)));
                    }
                    edges.push((src, dst, weight));
                }
            }
        }
        let n = node_count.ok_or(Error::Parse {
            line: text.lines().count().max(1),
            message: "missing `nodes N` header".into(),
        })?;
        Self::from_edges(n, &edges)
    }

    /// Renders the graph in the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("nodes {}\n", self.node_count());
        for (src, dst, w) in self.edges() {
            out.push_str(&format!("{} {} {}\n", src + 1, dst + 1, w));
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    /// Weight of the edge `src -> dst`.
    pub fn weight(&self, src: usize, dst: usize) -> f64 {
        self.weights[(dst, src)]
    }

    /// All edges as 0-based `(src, dst, weight)`, ordered by source then destination.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.node_count();
        let mut out = Vec::new();
        for src in 0..n {
            for dst in 0..n {
                let w = self.weights[(dst, src)];
                if w > 0.0 {
                    out.push((src, dst, w));
                }
            }
        }
        out
    }

    /// Out-neighbours of every node (`successors[j]` are the nodes `i` with `a_ij > 0`).
    fn successors(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        (0..n)
            .map(|j| (0..n).filter(|&i| self.weights[(i, j)] > 0.0).collect())
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    nodes: usize,
    /// 1-based `[src, dst, weight]`
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<GraphRepr> for DirectedWeightedGraph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        let mut edges = Vec::with_capacity(r.edges.len());
        for (s, d, w) in r.edges {
            if s == 0 || d == 0 {
                return Err(Error::InvalidGraph("edge indices are 1-based".into()));
            }
            edges.push((s - 1, d - 1, w));
        }
        Self::from_edges(r.nodes, &edges)
    }
}

impl From<DirectedWeightedGraph> for GraphRepr {
    fn from(g: DirectedWeightedGraph) -> Self {
        GraphRepr {
            nodes: g.node_count(),
            edges: g.edges().into_iter().map(|(s, d, w)| (s + 1, d + 1, w)).collect(),
        }
    }
}

/// `ℓ_ii = Σ_k a_ik`, `ℓ_ij = -a_ij`.
pub fn laplacian(graph: &DirectedWeightedGraph) -> Mat {
    let a = graph.weights();
    let n = a.nrows();
    let mut l = -a.clone();
    for i in 0..n {
        l[(i, i)] = a.row(i).sum();
    }
    l
}

/// A strongly connected component without in-edges from the rest of the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub nodes: Vec<usize>,
    pub laplacian: Mat,
}

/// All nodes outside the basic bicomponents, with the grounded Laplacian
/// `L_0` and the coupling blocks `L_0i` towards each basic block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonBasicBlock {
    pub nodes: Vec<usize>,
    pub grounded: Mat,
    pub couplings: Vec<Mat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianDecomposition {
    node_count: usize,
    /// `permutation[k]` is the original node placed at position `k`.
    pub permutation: Vec<usize>,
    pub basic_blocks: Vec<BasicBlock>,
    pub nonbasic: NonBasicBlock,
    pub has_spanning_tree: bool,
}

impl LaplacianDecomposition {
    /// Number of basic bicomponents.
    pub fn k(&self) -> usize {
        self.basic_blocks.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// `P L Pᵀ`: the Laplacian in the block-triangular ordering (non-basic
    /// block first, then the basic blocks).
    pub fn permuted_laplacian(&self, l: &Mat) -> Mat {
        let n = self.node_count;
        Mat::from_fn(n, n, |r, c| l[(self.permutation[r], self.permutation[c])])
    }

    /// Index of the basic block containing `node`, if any.
    pub fn basic_block_of(&self, node: usize) -> Option<usize> {
        self.basic_blocks.iter().position(|b| b.nodes.contains(&node))
    }
}

/// Iterative Tarjan. Components are returned in the order they complete,
/// which is a reverse topological order of the condensation.
pub fn strongly_connected_components(successors: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = successors.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;
    // (node, next successor position)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < successors[v].len() {
                let w = successors[v][*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// Splits the graph into basic bicomponents and the non-basic remainder.
///
/// Basic blocks are ordered by decreasing size (ties by smallest node);
/// non-basic nodes are ordered topologically by component, upstream first.
pub fn condense(graph: &DirectedWeightedGraph) -> LaplacianDecomposition {
    let n = graph.node_count();
    let a = graph.weights();
    let l = laplacian(graph);
    let comps = strongly_connected_components(&graph.successors());

    let mut comp_of = vec![0; n];
    for (c, nodes) in comps.iter().enumerate() {
        for &v in nodes {
            comp_of[v] = c;
        }
    }
    let is_basic: Vec<bool> = comps
        .iter()
        .enumerate()
        .map(|(c, nodes)| {
            nodes
                .iter()
                .all(|&i| (0..n).all(|j| a[(i, j)] == 0.0 || comp_of[j] == c))
        })
        .collect();

    let mut basic: Vec<Vec<usize>> = comps
        .iter()
        .zip(&is_basic)
        .filter(|(_, &b)| b)
        .map(|(c, _)| c.clone())
        .collect();
    basic.sort_by(|x, y| y.len().cmp(&x.len()).then(x[0].cmp(&y[0])));

    let nonbasic_nodes: Vec<usize> = comps
        .iter()
        .zip(&is_basic)
        .rev()
        .filter(|(_, &b)| !b)
        .flat_map(|(c, _)| c.iter().copied())
        .collect();

    let sub = |rows: &[usize], cols: &[usize]| Mat::from_fn(rows.len(), cols.len(), |r, c| l[(rows[r], cols[c])]);

    let basic_blocks: Vec<BasicBlock> = basic
        .iter()
        .map(|nodes| BasicBlock {
            nodes: nodes.clone(),
            laplacian: sub(nodes, nodes),
        })
        .collect();
    let nonbasic = NonBasicBlock {
        grounded: sub(&nonbasic_nodes, &nonbasic_nodes),
        couplings: basic.iter().map(|b| sub(&nonbasic_nodes, b)).collect(),
        nodes: nonbasic_nodes.clone(),
    };

    let mut permutation = nonbasic_nodes;
    for b in &basic {
        permutation.extend_from_slice(b);
    }

    LaplacianDecomposition {
        node_count: n,
        permutation,
        has_spanning_tree: basic_blocks.len() == 1,
        basic_blocks,
        nonbasic,
    }
}

/// Convex-combination weights `β_{j,i}` of the non-basic agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaMatrix {
    /// Row labels: the non-basic nodes, in decomposition order.
    pub nodes: Vec<usize>,
    /// `values[(r, i)]` is the weight of basic block `i` for `nodes[r]`.
    pub values: Mat,
}

impl BetaMatrix {
    pub fn row_of(&self, node: usize) -> Option<usize> {
        self.nodes.iter().position(|&v| v == node)
    }
}

/// Column `i` is `-L_0⁻¹ L_0i 1`. An empty non-basic block yields an empty
/// matrix.
pub fn beta_coefficients(decomp: &LaplacianDecomposition) -> Result<BetaMatrix> {
    let k = decomp.k();
    let nb = &decomp.nonbasic;
    let rows = nb.nodes.len();
    if rows == 0 {
        return Ok(BetaMatrix {
            nodes: Vec::new(),
            values: Mat::zeros(0, k),
        });
    }
    let mut rhs = Mat::zeros(rows, k);
    for (i, coupling) in nb.couplings.iter().enumerate() {
        let col: DVector<f64> = -coupling * DVector::from_element(coupling.ncols(), 1.0);
        rhs.set_column(i, &col);
    }
    let values = nb
        .grounded
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidGraph("grounded Laplacian is singular".into()))?;
    Ok(BetaMatrix {
        nodes: nb.nodes.clone(),
        values,
    })
}

/// Returns `true` when 0 is a simple eigenvalue of `l`, decided by the
/// singular-value threshold `1e-8 σ_max`.
pub fn has_simple_zero_eigenvalue(l: &Mat) -> bool {
    let n = l.nrows();
    if n == 1 {
        return true;
    }
    linalg::rank(l) == n - 1
}

/// Positive diagonal scaling `h` and margin `γ` with
/// `H L + Lᵀ H ⪰ 2γ LᵀL` for a strongly connected Laplacian.
///
/// `h` is the positive left null vector of `L`, scaled to unit maximum;
/// `γ` is the largest value passing the PSD test (found by bisection).
pub fn h_scaling(l: &Mat) -> Result<(DVector<f64>, f64)> {
    let n = l.nrows();
    if n == 0 || l.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "h_scaling",
            expected: n,
            got: l.ncols(),
        });
    }
    if n == 1 {
        return Ok((DVector::from_element(1, 1.0), 1.0));
    }
    if !has_simple_zero_eigenvalue(l) {
        return Err(Error::NotStronglyConnected);
    }
    let ns = linalg::null_space(&l.transpose(), 0.0);
    if ns.ncols() != 1 {
        return Err(Error::NotStronglyConnected);
    }
    let mut h: DVector<f64> = ns.column(0).into_owned();
    if h.sum() < 0.0 {
        h = -h;
    }
    let hmax = h.max();
    h /= hmax;
    if h.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotStronglyConnected);
    }

    let norm = l.clone().singular_values().max();
    let gamma = largest_psd_gamma(l, &h, norm);
    Ok((h, gamma))
}

fn psd_margin_ok(l: &Mat, h: &DVector<f64>, gamma: f64, norm: f64) -> bool {
    let m = scaled_lyapunov_matrix(l, h, gamma);
    let min_eig = m.symmetric_eigenvalues().min();
    min_eig >= -1e-10 * norm * norm
}

/// `H L + Lᵀ H − 2γ LᵀL`.
pub fn scaled_lyapunov_matrix(l: &Mat, h: &DVector<f64>, gamma: f64) -> Mat {
    let hm = Mat::from_diagonal(h);
    let m = &hm * l + l.transpose() * &hm - l.transpose() * l * (2.0 * gamma);
    (&m + m.transpose()) * 0.5
}

fn largest_psd_gamma(l: &Mat, h: &DVector<f64>, norm: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = norm;
    // the admissible γ scales like 1/‖L‖, so the initial bracket may be too small
    let mut grow = 0;
    while psd_margin_ok(l, h, hi, norm) && grow < 60 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if psd_margin_ok(l, h, mid, norm) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `Q_ρ = ρ⁻¹ (H ρ − μ h hᵀ) ρ⁻¹` with `μ = 1 / Σ h_i / ρ_i`.
pub fn q_rho(h: &DVector<f64>, rho: &DVector<f64>) -> Result<Mat> {
    if h.len() != rho.len() {
        return Err(Error::DimensionMismatch {
            context: "q_rho",
            expected: h.len(),
            got: rho.len(),
        });
    }
    if h.iter().any(|&v| v.is_nan() || v <= 0.0) || rho.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::NonPositiveInput("q_rho"));
    }
    // with w_i = h_i / ρ_i: Q = diag(w) − μ w wᵀ
    let w = h.component_div(rho);
    let mu = 1.0 / w.sum();
    let mut q = Mat::from_diagonal(&w) - &w * w.transpose() * mu;
    q = (&q + q.transpose()) * 0.5;
    Ok(q)
}

/// Bundled representative topologies.
pub mod bundled {
    use super::DirectedWeightedGraph;

    pub const FIG3_EDGES: &str = include_str!("../data/fig3.edges");
    pub const FIG4_EDGES: &str = include_str!("../data/fig4.edges");

    /// 8 nodes: two 3-node basic clusters and a 2-node non-basic cluster.
    pub fn fig3() -> DirectedWeightedGraph {
        DirectedWeightedGraph::parse_edge_list(FIG3_EDGES).expect("bundled fig3 parses")
    }

    /// 60 nodes: basic clusters of 30, 8 and 1 nodes; non-basic clusters of 10, 10 and 1.
    pub fn fig4() -> DirectedWeightedGraph {
        DirectedWeightedGraph::parse_edge_list(FIG4_EDGES).expect("bundled fig4 parses")
    }
}
