//! Closed-loop network assembly and fixed-step RK4 integration.
//!
//! The coupled state is stored flat, agent by agent, as `[x_i, w_i, ρ_i]`
//! where `w_i` is the protocol state (`ξ̂1` or `x̂`). Network signals are
//! recomputed from the full state at every Runge–Kutta stage.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctrl::LinearAgent;
use crate::error::{Error, Result};
use crate::graph::{laplacian, DirectedWeightedGraph};
use crate::linalg::Mat;
use crate::protocol1::{self, NcProtocolDesign, NcProtocolState};
use crate::protocol2::{self, ColProtocolDesign, ColProtocolState};

/// Magnitude beyond which a run is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    NonCollaborative,
    Collaborative,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProtocolKind::NonCollaborative => "non_collaborative",
            ProtocolKind::Collaborative => "collaborative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Design {
    NonCollaborative(NcProtocolDesign),
    Collaborative(ColProtocolDesign),
}

impl Design {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            Design::NonCollaborative(_) => ProtocolKind::NonCollaborative,
            Design::Collaborative(_) => ProtocolKind::Collaborative,
        }
    }

    /// Per-agent protocol state dimension (excluding `ρ`).
    pub fn protocol_dim(&self) -> usize {
        match self {
            Design::NonCollaborative(d) => d.observer_dim(),
            Design::Collaborative(d) => d.n(),
        }
    }

    /// Non-fatal assumption gaps recorded during synthesis.
    pub fn warnings(&self) -> &[String] {
        match self {
            Design::NonCollaborative(_) => &[],
            Design::Collaborative(d) => &d.warnings,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        match self {
            Design::NonCollaborative(d) => (d.n(), d.m(), d.p()),
            Design::Collaborative(d) => (d.n(), d.m(), d.p()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentInit {
    /// Each component uniform in `range`, drawn agent by agent.
    Random {
        range: (f64, f64),
        seed: u64,
    },
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProtocolInit {
    /// Shared initial adaptive gain.
    pub rho0: f64,
    /// Per-agent protocol states; zero when absent.
    pub observer: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub agent: LinearAgent,
    pub graph: DirectedWeightedGraph,
    pub protocol_kind: ProtocolKind,
    pub horizon: f64,
    pub step: f64,
    pub record_stride: usize,
    pub agent_init: AgentInit,
    pub protocol_init: ProtocolInit,
}

impl ScenarioConfig {
    /// Defaults: 50 s horizon, 1 ms step, every 10th step recorded, states
    /// uniform in `[−2, 2]`.
    pub fn new(agent: LinearAgent, graph: DirectedWeightedGraph, protocol_kind: ProtocolKind) -> Self {
        ScenarioConfig {
            agent,
            graph,
            protocol_kind,
            horizon: 50.0,
            step: 1e-3,
            record_stride: 10,
            agent_init: AgentInit::Random {
                range: (-2.0, 2.0),
                seed: 1,
            },
            protocol_init: ProtocolInit::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidScenario("step must be positive".into()));
        }
        if !(self.horizon >= self.step && self.horizon.is_finite()) {
            return Err(Error::InvalidScenario("horizon must be at least one step".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidScenario("record_stride must be at least 1".into()));
        }
        if !self.protocol_init.rho0.is_finite() || self.protocol_init.rho0 < 0.0 {
            return Err(Error::InvalidScenario("rho0 must be finite and nonnegative".into()));
        }
        if let AgentInit::Random { range: (lo, hi), .. } = self.agent_init {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidScenario("random init range must satisfy lo <= hi".into()));
            }
        }
        Ok(())
    }

    /// Number of RK4 steps; the horizon is rounded to a whole number of steps.
    pub fn step_count(&self) -> usize {
        (self.horizon / self.step).round().max(1.0) as usize
    }

    /// Initial agent states, one `n`-vector per node.
    pub fn initial_states(&self) -> Result<Vec<DVector<f64>>> {
        let (nodes, n) = (self.graph.node_count(), self.agent.n());
        match &self.agent_init {
            AgentInit::Random { range: (lo, hi), seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..nodes)
                    .map(|_| DVector::from_fn(n, |_, _| if lo < hi { rng.random_range(*lo..*hi) } else { *lo }))
                    .collect())
            }
            AgentInit::Explicit(states) => {
                explicit_vectors(states, nodes, n, "initial agent states").map_err(Error::InvalidScenario)
            }
        }
    }
}

fn explicit_vectors(
    rows: &[Vec<f64>],
    nodes: usize,
    dim: usize,
    what: &str,
) -> std::result::Result<Vec<DVector<f64>>, String> {
    if rows.len() != nodes {
        return Err(format!("{what}: expected {nodes} vectors, got {}", rows.len()));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() != dim {
                Err(format!(
                    "{what}: agent {} has length {}, expected {dim}",
                    i + 1,
                    r.len()
                ))
            } else {
                Ok(DVector::from_column_slice(r))
            }
        })
        .collect()
}

/// Sparse rows of a Laplacian, diagonal included.
#[derive(Debug, Clone)]
struct SparseRows(Vec<Vec<(usize, f64)>>);

impl SparseRows {
    fn new(l: &Mat) -> Self {
        SparseRows(
            (0..l.nrows())
                .map(|i| {
                    (0..l.ncols())
                        .filter(|&j| l[(i, j)] != 0.0)
                        .map(|j| (j, l[(i, j)]))
                        .collect()
                })
                .collect(),
        )
    }

    fn combine(&self, values: &[DVector<f64>], dim: usize) -> Vec<DVector<f64>> {
        self.0
            .iter()
            .map(|row| {
                let mut acc = DVector::zeros(dim);
                for &(j, w) in row {
                    acc.axpy(w, &values[j], 1.0);
                }
                acc
            })
            .collect()
    }
}

/// `out_i = Σ_j ℓ_ij v_j` for `N` stacked vectors of length `dim`.
pub fn network_signals(l: &Mat, values: &[DVector<f64>], dim: usize) -> Result<Vec<DVector<f64>>> {
    if l.nrows() != l.ncols() || values.len() != l.nrows() {
        return Err(Error::DimensionMismatch {
            context: "network_signals (node count)",
            expected: l.nrows(),
            got: values.len(),
        });
    }
    if let Some(v) = values.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            context: "network_signals (vector length)",
            expected: dim,
            got: v.len(),
        });
    }
    Ok(SparseRows::new(l).combine(values, dim))
}

/// Recorded closed-loop run. Per-agent quantities are stored flat in
/// sample-major, agent-minor order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: ProtocolKind,
    pub node_count: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Protocol state dimension per agent.
    pub protocol_dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub protocol_states: Vec<f64>,
    pub rhos: Vec<f64>,
    pub outputs: Vec<f64>,
    pub zetas: Vec<f64>,
    /// `ζ̃_i = Σ_j ℓ_ij x̂_j`; empty for the non-collaborative protocol.
    pub zeta_tildes: Vec<f64>,
    pub inputs: Vec<f64>,
}

impl Trajectory {
    fn slice(data: &[f64], dim: usize, nodes: usize, k: usize, i: usize) -> &[f64] {
        let start = (k * nodes + i) * dim;
        &data[start..start + dim]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn x(&self, k: usize, i: usize) -> &[f64] {
        Self::slice(&self.states, self.n, self.node_count, k, i)
    }
    pub fn protocol_state(&self, k: usize, i: usize) -> &[f64] {
        Self::slice(&self.protocol_states, self.protocol_dim, self.node_count, k, i)
    }
    pub fn rho(&self, k: usize, i: usize) -> f64 {
        self.rhos[k * self.node_count + i]
    }
    pub fn y(&self, k: usize, i: usize) -> &[f64] {
        Self::slice(&self.outputs, self.p, self.node_count, k, i)
    }
    pub fn zeta(&self, k: usize, i: usize) -> &[f64] {
        Self::slice(&self.zetas, self.p, self.node_count, k, i)
    }
    /// `None` for non-collaborative runs.
    pub fn zeta_tilde(&self, k: usize, i: usize) -> Option<&[f64]> {
        (self.kind == ProtocolKind::Collaborative)
            .then(|| Self::slice(&self.zeta_tildes, self.n, self.node_count, k, i))
    }
    pub fn u(&self, k: usize, i: usize) -> &[f64] {
        Self::slice(&self.inputs, self.m, self.node_count, k, i)
    }

    /// Index of the first sample in the trailing `fraction` of the time span.
    pub fn window_start(&self, fraction: f64) -> usize {
        let (Some(&t0), Some(&t1)) = (self.times.first(), self.times.last()) else {
            return 0;
        };
        let cut = t1 - fraction * (t1 - t0);
        let k = self.times.partition_point(|&t| t < cut - 1e-12);
        k.min(self.len() - 1)
    }
}

/// Signals derived from a full coupled state.
struct Signals {
    y: Vec<DVector<f64>>,
    zeta: Vec<DVector<f64>>,
    zeta_tilde: Vec<DVector<f64>>,
    u: Vec<DVector<f64>>,
    /// `(ẇ_i, ρ̇_i)`
    protocol_rates: Vec<(DVector<f64>, f64)>,
}

struct Network<'a> {
    agent: &'a LinearAgent,
    design: &'a Design,
    rows: SparseRows,
    nodes: usize,
    n: usize,
    d: usize,
}

impl Network<'_> {
    fn block(&self) -> usize {
        self.n + self.d + 1
    }

    fn split<'s>(&self, s: &'s [f64], i: usize) -> (&'s [f64], &'s [f64], f64) {
        let b = i * self.block();
        (
            &s[b..b + self.n],
            &s[b + self.n..b + self.n + self.d],
            s[b + self.n + self.d],
        )
    }

    fn signals(&self, s: &[f64]) -> Result<Signals> {
        let c = self.agent.c();
        let p = self.agent.p();
        let mut xs = Vec::with_capacity(self.nodes);
        let mut ws = Vec::with_capacity(self.nodes);
        let mut rhos = Vec::with_capacity(self.nodes);
        for i in 0..self.nodes {
            let (x, w, rho) = self.split(s, i);
            xs.push(DVector::from_column_slice(x));
            ws.push(DVector::from_column_slice(w));
            rhos.push(rho);
        }
        let y: Vec<_> = xs.iter().map(|x| c * x).collect();
        let zeta = self.rows.combine(&y, p);
        let mut u = Vec::with_capacity(self.nodes);
        let mut protocol_rates = Vec::with_capacity(self.nodes);
        let zeta_tilde = match self.design {
            Design::NonCollaborative(d) => {
                for i in 0..self.nodes {
                    let state = NcProtocolState {
                        xi1_hat: ws[i].clone(),
                        rho: rhos[i],
                    };
                    let (der, ui) = protocol1::nc_step(&state, &zeta[i], d)?;
                    u.push(ui);
                    protocol_rates.push((der.xi1_hat, der.rho));
                }
                Vec::new()
            }
            Design::Collaborative(d) => {
                let zeta_tilde = self.rows.combine(&ws, self.n);
                for i in 0..self.nodes {
                    let state = ColProtocolState {
                        x_hat: ws[i].clone(),
                        rho: rhos[i],
                    };
                    let ui = protocol2::col_control(&state, d);
                    let rate = protocol2::col_step(&state, &zeta[i], &zeta_tilde[i], &ui, d)?;
                    u.push(ui);
                    protocol_rates.push(rate);
                }
                zeta_tilde
            }
        };
        Ok(Signals {
            y,
            zeta,
            zeta_tilde,
            u,
            protocol_rates,
        })
    }

    fn derivative(&self, s: &[f64], out: &mut [f64]) -> Result<()> {
        let sig = self.signals(s)?;
        let (a, b) = (self.agent.a(), self.agent.b());
        for i in 0..self.nodes {
            let (x, _, _) = self.split(s, i);
            let x = DVector::from_column_slice(x);
            let x_dot = a * x + b * &sig.u[i];
            let base = i * self.block();
            out[base..base + self.n].copy_from_slice(x_dot.as_slice());
            let (w_dot, rho_dot) = &sig.protocol_rates[i];
            out[base + self.n..base + self.n + self.d].copy_from_slice(w_dot.as_slice());
            out[base + self.n + self.d] = *rho_dot;
        }
        Ok(())
    }

    fn check_finite(&self, s: &[f64], time: f64) -> Result<()> {
        match s.iter().position(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            Some(idx) => Err(Error::NonFiniteState {
                time,
                agent: idx / self.block(),
            }),
            None => Ok(()),
        }
    }
}

fn check_design(config: &ScenarioConfig, design: &Design) -> Result<()> {
    if design.kind() != config.protocol_kind {
        return Err(Error::Mismatch(format!(
            "design is {} but the scenario asks for {}",
            design.kind(),
            config.protocol_kind
        )));
    }
    let agent = &config.agent;
    let (n, m, p) = design.dims();
    for (context, expected, got) in [
        ("design state dimension", agent.n(), n),
        ("design input dimension", agent.m(), m),
        ("design output dimension", agent.p(), p),
    ] {
        if expected != got {
            return Err(Error::DimensionMismatch { context, expected, got });
        }
    }
    if let Design::Collaborative(d) = design {
        if &d.a != agent.a() || &d.b != agent.b() || &d.c != agent.c() {
            return Err(Error::Mismatch(
                "collaborative design was built for a different agent".into(),
            ));
        }
    }
    Ok(())
}

/// Integrates the closed loop with classic RK4 and records every
/// `record_stride`-th step plus the final one.
pub fn integrate(config: &ScenarioConfig, design: &Design) -> Result<Trajectory> {
    config.validate()?;
    check_design(config, design)?;
    let agent = &config.agent;
    let nodes = config.graph.node_count();
    let (n, m, p) = (agent.n(), agent.m(), agent.p());
    let d = design.protocol_dim();
    let net = Network {
        agent,
        design,
        rows: SparseRows::new(&laplacian(&config.graph)),
        nodes,
        n,
        d,
    };
    let block = net.block();

    let x0 = config.initial_states()?;
    let w0 = match &config.protocol_init.observer {
        None => vec![DVector::zeros(d); nodes],
        Some(rows) => explicit_vectors(rows, nodes, d, "initial protocol states").map_err(Error::InvalidScenario)?,
    };
    let mut s = vec![0.0; nodes * block];
    for i in 0..nodes {
        let base = i * block;
        s[base..base + n].copy_from_slice(x0[i].as_slice());
        s[base + n..base + n + d].copy_from_slice(w0[i].as_slice());
        s[base + n + d] = config.protocol_init.rho0;
    }
    net.check_finite(&s, 0.0)?;

    let steps = config.step_count();
    let h = config.step;
    let samples = steps / config.record_stride + 2;
    let mut traj = Trajectory {
        kind: design.kind(),
        node_count: nodes,
        n,
        m,
        p,
        protocol_dim: d,
        times: Vec::with_capacity(samples),
        states: Vec::with_capacity(samples * nodes * n),
        protocol_states: Vec::with_capacity(samples * nodes * d),
        rhos: Vec::with_capacity(samples * nodes),
        outputs: Vec::with_capacity(samples * nodes * p),
        zetas: Vec::with_capacity(samples * nodes * p),
        zeta_tildes: Vec::new(),
        inputs: Vec::with_capacity(samples * nodes * m),
    };
    record(&net, &s, 0.0, &mut traj)?;

    let len = s.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut tmp = vec![0.0; len];
    for step in 1..=steps {
        net.derivative(&s, &mut k1)?;
        for j in 0..len {
            tmp[j] = s[j] + 0.5 * h * k1[j];
        }
        net.derivative(&tmp, &mut k2)?;
        for j in 0..len {
            tmp[j] = s[j] + 0.5 * h * k2[j];
        }
        net.derivative(&tmp, &mut k3)?;
        for j in 0..len {
            tmp[j] = s[j] + h * k3[j];
        }
        net.derivative(&tmp, &mut k4)?;
        for j in 0..len {
            s[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t = step as f64 * h;
        net.check_finite(&s, t)?;
        if step % config.record_stride == 0 || step == steps {
            record(&net, &s, t, &mut traj)?;
        }
    }
    Ok(traj)
}

fn record(net: &Network<'_>, s: &[f64], t: f64, traj: &mut Trajectory) -> Result<()> {
    let sig = net.signals(s)?;
    traj.times.push(t);
    for i in 0..net.nodes {
        let (x, w, rho) = net.split(s, i);
        traj.states.extend_from_slice(x);
        traj.protocol_states.extend_from_slice(w);
        traj.rhos.push(rho);
        traj.outputs.extend_from_slice(sig.y[i].as_slice());
        traj.zetas.extend_from_slice(sig.zeta[i].as_slice());
        traj.inputs.extend_from_slice(sig.u[i].as_slice());
        if let Some(zt) = sig.zeta_tilde.get(i) {
            traj.zeta_tildes.extend_from_slice(zt.as_slice());
        }
    }
    Ok(())
}
