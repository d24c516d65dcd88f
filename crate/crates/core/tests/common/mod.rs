//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{dmatrix, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use synchrony::graph::laplacian;
use synchrony::protocol1::NcProtocolDesign;
use synchrony::{ColProtocolDesign, DirectedWeightedGraph, LinearAgent, Trajectory};

pub type Mat = DMatrix<f64>;

/// Neutrally stable agent with two outputs and one input.
pub fn neutral_agent() -> LinearAgent {
    LinearAgent::new(
        dmatrix![0.0, 1.0, 1.0; -1.0, 0.0, 1.0; 0.0, 0.0, 0.0],
        dmatrix![0.0; 0.0; 1.0],
        dmatrix![1.0, 0.0, 0.0; 0.0, 0.0, 1.0],
    )
    .unwrap()
}

/// Triple integrator with position output.
pub fn triple_integrator() -> LinearAgent {
    LinearAgent::new(
        dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; 0.0, 0.0, 0.0],
        dmatrix![0.0; 0.0; 1.0],
        dmatrix![1.0, 0.0, 0.0],
    )
    .unwrap()
}

/// Reference Riccati solution for [`neutral_agent`] (4 decimals).
pub fn reference_p() -> Mat {
    dmatrix![
        2.5958, 0.2321, 0.7321;
        0.2321, 1.7100, 1.2100;
        0.7321, 1.2100, 2.2100
    ]
}

/// Reference observer gain for [`neutral_agent`].
pub fn reference_h1() -> Mat {
    dmatrix![-3.0; -1.0]
}

/// Reference dual Riccati solution for [`triple_integrator`] (4 decimals).
pub fn reference_q() -> Mat {
    dmatrix![
        2.4142, 2.4142, 1.0000;
        2.4142, 4.8284, 2.4142;
        1.0000, 2.4142, 2.4142
    ]
}

pub fn reference_f() -> Mat {
    dmatrix![-6.0, -11.0, -6.0]
}

/// Random digraph on `n` nodes containing a directed spanning tree rooted
/// at node 0, plus about `2n` extra edges. Weights in `[0.5, 1.5]`.
pub fn random_spanning_tree_graph(rng: &mut ChaCha8Rng, n: usize) -> DirectedWeightedGraph {
    let mut w = Mat::zeros(n, n);
    for child in 1..n {
        let parent = rng.random_range(0..child);
        w[(child, parent)] = rng.random_range(0.5..1.5);
    }
    for _ in 0..2 * n {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i != j && w[(i, j)] == 0.0 {
            w[(i, j)] = rng.random_range(0.5..1.5);
        }
    }
    DirectedWeightedGraph::new(w).unwrap()
}

/// Random strongly connected digraph: a directed ring plus random chords.
pub fn random_strongly_connected(rng: &mut ChaCha8Rng, n: usize) -> DirectedWeightedGraph {
    let mut w = Mat::zeros(n, n);
    for i in 0..n {
        if n > 1 {
            w[((i + 1) % n, i)] = rng.random_range(0.2..2.0);
        }
    }
    for _ in 0..n {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i != j {
            w[(i, j)] = rng.random_range(0.2..2.0);
        }
    }
    DirectedWeightedGraph::new(w).unwrap()
}

/// Random digraph with two or three basic bicomponents (rings of one to
/// three nodes) and two to four non-basic nodes listening to them.
pub fn random_without_spanning_tree(rng: &mut ChaCha8Rng) -> DirectedWeightedGraph {
    let k = rng.random_range(2..=3);
    let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..=3)).collect();
    let basic: usize = sizes.iter().sum();
    let extra = rng.random_range(2..=4);
    let n = basic + extra;
    let mut w = Mat::zeros(n, n);
    let mut start = 0;
    let mut blocks = Vec::new();
    for &s in &sizes {
        for i in 0..s {
            if s > 1 {
                w[(start + (i + 1) % s, start + i)] = rng.random_range(0.5..1.5);
            }
        }
        blocks.push(start..start + s);
        start += s;
    }
    for j in basic..n {
        // every block feeds at least one non-basic node so k stays fixed
        let feeds = if j - basic < k {
            vec![j - basic]
        } else {
            vec![rng.random_range(0..k)]
        };
        for b in feeds {
            let src = rng.random_range(blocks[b].clone());
            w[(j, src)] = rng.random_range(0.5..1.5);
        }
        if rng.random_bool(0.7) {
            let src = rng.random_range(0..j);
            w[(j, src)] += rng.random_range(0.5..1.5);
        }
    }
    DirectedWeightedGraph::new(w).unwrap()
}

/// Classic RK4 on `ẋ = f(x)`, returning the state after every step.
pub fn rk4(f: impl Fn(&DVector<f64>) -> DVector<f64>, x0: DVector<f64>, h: f64, steps: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0;
    out.push(x.clone());
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (0.5 * h)));
        let k3 = f(&(&x + &k2 * (0.5 * h)));
        let k4 = f(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(x.clone());
    }
    out
}

/// Stacked non-collaborative closed loop in the estimate / observer-error
/// coordinates `(ξ̂, e1, ρ)`:
///
/// ```text
/// ξ̂' = (I⊗Ã) ξ̂ − (L diag(ρ) ⊗ B̃B̃ᵀP) ξ̂ + (I⊗E) e1,  E = [H1 C1; −A21]
/// e1' = (I⊗(A11 + H1 C1)) e1
/// ρ_i' = ‖B̃ᵀP ξ̂_i‖²
/// ```
pub struct StackedNc {
    pub n: usize,
    pub n1: usize,
    pub nodes: usize,
    pub linear_xi: Mat,
    pub coupling: Mat,
    pub l: Mat,
    pub e_in: Mat,
    pub observer: Mat,
    pub feedback: Mat,
}

impl StackedNc {
    pub fn new(design: &NcProtocolDesign, graph: &DirectedWeightedGraph) -> Self {
        let f = &design.form;
        let n = design.a_tilde.nrows();
        let n1 = f.n1;
        let mut e = Mat::zeros(n, n1);
        e.view_mut((0, 0), (n1, n1)).copy_from(&(&design.h1 * &f.c1));
        e.view_mut((n1, 0), (n - n1, n1)).copy_from(&(-&f.a21));
        let nodes = graph.node_count();
        let eye = Mat::identity(nodes, nodes);
        StackedNc {
            n,
            n1,
            nodes,
            linear_xi: eye.kronecker(&design.a_tilde),
            coupling: &design.b_tilde * design.b_tilde.transpose() * &design.p,
            l: laplacian(graph),
            e_in: eye.kronecker(&e),
            observer: eye.kronecker(&(&f.a11 + &design.h1 * &f.c1)),
            feedback: design.b_tilde.transpose() * &design.p,
        }
    }

    pub fn rhs(&self, s: &DVector<f64>) -> DVector<f64> {
        let (n, n1, nodes) = (self.n, self.n1, self.nodes);
        let xi = s.rows(0, nodes * n).into_owned();
        let e1 = s.rows(nodes * n, nodes * n1).into_owned();
        let rho = s.rows(nodes * (n + n1), nodes);
        let l_rho = &self.l * Mat::from_diagonal(&rho.into_owned());
        let mut xi_dot = &self.linear_xi * &xi - l_rho.kronecker(&self.coupling) * &xi;
        if n1 > 0 {
            xi_dot += &self.e_in * &e1;
        }
        let e1_dot = &self.observer * &e1;
        let rho_dot = DVector::from_fn(nodes, |i, _| (&self.feedback * xi.rows(i * n, n)).norm_squared());
        let mut out = DVector::zeros(s.len());
        out.rows_mut(0, nodes * n).copy_from(&xi_dot);
        out.rows_mut(nodes * n, nodes * n1).copy_from(&e1_dot);
        out.rows_mut(nodes * (n + n1), nodes).copy_from(&rho_dot);
        out
    }
}

/// `(ξ̂_i, e1_i)` of agent `i` at sample `k`, reconstructed from a per-agent
/// run through the coordinate change.
pub fn nc_stacked_coordinates(
    traj: &Trajectory,
    design: &NcProtocolDesign,
    graph: &DirectedWeightedGraph,
    k: usize,
    i: usize,
) -> (DVector<f64>, DVector<f64>) {
    let f = &design.form;
    let (n, n1, m) = (traj.n, f.n1, traj.m);
    let l = laplacian(graph);
    let mut xbar = DVector::zeros(n);
    for j in 0..traj.node_count {
        xbar += &f.s * DVector::from_column_slice(traj.x(k, j)) * l[(i, j)];
    }
    let xi1 = DVector::from_column_slice(traj.protocol_state(k, i));
    let mut xi = DVector::zeros(n);
    xi.rows_mut(0, n1).copy_from(&xi1);
    xi.rows_mut(n1, m).copy_from(&xbar.rows(n1, m));
    let e1 = xi1 - xbar.rows(0, n1);
    (xi, e1)
}

/// Stacked collaborative error dynamics in `e = x̂ − x`:
///
/// ```text
/// e'   = (I⊗A) e − (diag(ρ) L ⊗ Q CᵀC) e
/// ρ_i' = ‖C Σ_j ℓ_ij e_j‖²
/// ```
pub struct StackedCol {
    pub n: usize,
    pub nodes: usize,
    pub linear: Mat,
    pub gain: Mat,
    pub l: Mat,
    pub c_net: Mat,
}

impl StackedCol {
    pub fn new(design: &ColProtocolDesign, graph: &DirectedWeightedGraph) -> Self {
        let nodes = graph.node_count();
        let l = laplacian(graph);
        StackedCol {
            n: design.a.nrows(),
            nodes,
            linear: Mat::identity(nodes, nodes).kronecker(&design.a),
            gain: &design.q * design.c.transpose() * &design.c,
            c_net: l.kronecker(&design.c),
            l,
        }
    }

    pub fn rhs(&self, s: &DVector<f64>) -> DVector<f64> {
        let (n, nodes) = (self.n, self.nodes);
        let e = s.rows(0, nodes * n).into_owned();
        let rho = s.rows(nodes * n, nodes).into_owned();
        let rho_l = Mat::from_diagonal(&rho) * &self.l;
        let e_dot = &self.linear * &e - rho_l.kronecker(&self.gain) * &e;
        let innov = &self.c_net * &e;
        let p = innov.len() / nodes;
        let rho_dot = DVector::from_fn(nodes, |i, _| innov.rows(i * p, p).norm_squared());
        let mut out = DVector::zeros(s.len());
        out.rows_mut(0, nodes * n).copy_from(&e_dot);
        out.rows_mut(nodes * n, nodes).copy_from(&rho_dot);
        out
    }
}

/// `ẽ_i = C ζ̃_i − ζ_i` from a collaborative run.
pub fn col_innovation(traj: &Trajectory, c: &Mat, k: usize, i: usize) -> DVector<f64> {
    let zt = DVector::from_column_slice(traj.zeta_tilde(k, i).expect("collaborative run"));
    c * zt - DVector::from_column_slice(traj.zeta(k, i))
}
