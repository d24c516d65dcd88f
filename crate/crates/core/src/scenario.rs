//! Scenario files, design dumps and trajectory export.
//!
//! A scenario is a single JSON document with the sections `agent`, `graph`,
//! `protocol`, `sim` and `thresholds`. Matrices are row-major nested arrays.
//! The graph is either inline (`{"nodes": N, "edges": [[src, dst, w], ...]}`,
//! 1-based) or a reference to an edge-list file (`{"file": "fig3.edges"}`)
//! resolved relative to the scenario file.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ctrl::{self, LinearAgent, StructuralReport};
use crate::error::{Error, Result};
use crate::graph::DirectedWeightedGraph;
use crate::linalg::{Mat, C64};
use crate::protocol1::{self, NcOptions};
use crate::protocol2::{self, FeedbackChoice};
use crate::sim::{AgentInit, Design, ProtocolInit, ProtocolKind, ScenarioConfig, Trajectory};
use crate::verify::Thresholds;

/// Serde adapter writing matrices as row-major nested arrays of numbers with
/// 17 significant digits (bit-exact round trip).
pub mod mat17 {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};
    use serde_json::value::RawValue;

    pub(crate) fn number(x: f64) -> Box<RawValue> {
        let text = if x.is_finite() {
            format!("{x:.16e}")
        } else {
            // JSON has no representation for these; they never appear in valid designs
            "null".to_string()
        };
        RawValue::from_string(text).expect("formatted float is valid JSON")
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut rows = s.serialize_seq(Some(m.nrows()))?;
        for r in 0..m.nrows() {
            let row: Vec<Box<RawValue>> = (0..m.ncols()).map(|c| number(m[(r, c)])).collect();
            rows.serialize_element(&row)?;
        }
        rows.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub(crate) fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
    }

    /// Same encoding for `Option<DMatrix<f64>>`.
    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
            match m {
                Some(m) => super::serialize(m, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
            let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
            rows.map(|r| from_rows(&r).map_err(D::Error::custom)).transpose()
        }
    }

    /// Vectors of numbers with the same digit count.
    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for &x in v {
                seq.serialize_element(&number(x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::deserialize(d)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    File { file: PathBuf },
    Inline(DirectedWeightedGraph),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSpec {
    /// `F = −BᵀX` from the control Riccati equation.
    Riccati,
    /// Single-input pole placement; poles as `[re, im]` pairs.
    Poles(Vec<(f64, f64)>),
    #[serde(with = "mat17")]
    Gain(Mat),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolKind,
    /// Initial adaptive gain, shared by all agents.
    #[serde(default)]
    pub rho0: f64,
    /// Per-agent initial protocol states; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer_init: Option<Vec<Vec<f64>>>,
    /// Non-collaborative only: explicit observer gain `H1`.
    #[serde(default, with = "mat17::option", skip_serializing_if = "Option::is_none")]
    pub observer_gain: Option<Mat>,
    /// Non-collaborative only: explicit `(S, T)` pair.
    #[serde(default, with = "mat17::option", skip_serializing_if = "Option::is_none")]
    pub transform_s: Option<Mat>,
    #[serde(default, with = "mat17::option", skip_serializing_if = "Option::is_none")]
    pub transform_t: Option<Mat>,
    /// Collaborative only: how `F` is chosen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    Random { range: (f64, f64), seed: u64 },
    States(Vec<Vec<f64>>),
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Random {
            range: (-2.0, 2.0),
            seed: 1,
        }
    }
}

fn default_horizon() -> f64 {
    50.0
}
fn default_step() -> f64 {
    1e-3
}
fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub init: InitSpec,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            horizon: default_horizon(),
            step: default_step(),
            record_stride: default_stride(),
            init: InitSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub agent: LinearAgent,
    pub graph: GraphSpec,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub thresholds: Thresholds,
}

/// A scenario with its graph resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub graph: DirectedWeightedGraph,
}

impl Scenario {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let graph = match &file.graph {
            GraphSpec::Inline(g) => g.clone(),
            GraphSpec::File { file: path } => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| Error::InvalidScenario(format!("cannot read graph file {}: {e}", full.display())))?;
                DirectedWeightedGraph::parse_edge_list(&text)?
            }
        };
        Ok(Scenario { file, graph })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Replaces the seed of a random initial condition.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let InitSpec::Random { seed: s, .. } = &mut self.file.sim.init {
            *s = seed;
        }
        self
    }

    /// Self-contained copy with the graph inlined, suitable for re-running.
    pub fn echo(&self) -> ScenarioFile {
        let mut f = self.file.clone();
        f.graph = GraphSpec::Inline(self.graph.clone());
        f
    }

    pub fn echo_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.echo())?)
    }

    pub fn kind(&self) -> ProtocolKind {
        self.file.protocol.kind
    }

    /// Synthesizes the protocol selected by the scenario.
    pub fn design(&self) -> Result<Design> {
        let agent = &self.file.agent;
        let proto = &self.file.protocol;
        match proto.kind {
            ProtocolKind::NonCollaborative => {
                let transform = match (&proto.transform_s, &proto.transform_t) {
                    (Some(s), Some(t)) => Some((s.clone(), t.clone())),
                    (None, None) => None,
                    _ => {
                        return Err(Error::InvalidScenario(
                            "transform_s and transform_t must be given together".into(),
                        ))
                    }
                };
                let opts = NcOptions {
                    observer_gain: proto.observer_gain.clone(),
                    transform,
                };
                Ok(Design::NonCollaborative(protocol1::design_nc_with(agent, &opts)?))
            }
            ProtocolKind::Collaborative => {
                let choice = match &proto.feedback {
                    None | Some(FeedbackSpec::Riccati) => FeedbackChoice::Riccati,
                    Some(FeedbackSpec::Poles(p)) => {
                        FeedbackChoice::Poles(p.iter().map(|&(re, im)| C64::new(re, im)).collect())
                    }
                    Some(FeedbackSpec::Gain(f)) => FeedbackChoice::Gain(f.clone()),
                };
                Ok(Design::Collaborative(protocol2::design_col_with(agent, &choice)?))
            }
        }
    }

    pub fn config(&self) -> ScenarioConfig {
        let f = &self.file;
        ScenarioConfig {
            agent: f.agent.clone(),
            graph: self.graph.clone(),
            protocol_kind: f.protocol.kind,
            horizon: f.sim.horizon,
            step: f.sim.step,
            record_stride: f.sim.record_stride,
            agent_init: match &f.sim.init {
                InitSpec::Random { range, seed } => AgentInit::Random {
                    range: *range,
                    seed: *seed,
                },
                InitSpec::States(s) => AgentInit::Explicit(s.clone()),
            },
            protocol_init: ProtocolInit {
                rho0: f.protocol.rho0,
                observer: f.protocol.observer_init.clone(),
            },
        }
    }
}

/// Design dump written next to a run: structural report plus the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDump {
    pub structure: StructuralReport,
    pub design: Design,
}

impl DesignDump {
    pub fn new(agent: &LinearAgent, design: Design) -> Self {
        DesignDump {
            structure: ctrl::analyze_structure(agent),
            design,
        }
    }
}

/// CSV header for the trajectory export.
pub fn csv_header(n: usize, p: usize, m: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "agent".to_string()];
    h.extend((1..=n).map(|k| format!("x{k}")));
    h.extend((1..=p).map(|k| format!("y{k}")));
    h.push("rho".into());
    h.push("zeta_norm".into());
    h.extend((1..=m).map(|k| format!("u{k}")));
    h
}

/// One row per agent per recorded time; agents are 1-based.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    let (n, p, m) = (traj.n, traj.p, traj.m);
    writeln!(w, "{}", csv_header(n, p, m).join(","))?;
    let mut line = String::new();
    for (k, &t) in traj.times.iter().enumerate() {
        for i in 0..traj.node_count {
            line.clear();
            line.push_str(&format!("{t},{}", i + 1));
            for v in traj.x(k, i).iter().chain(traj.y(k, i)) {
                line.push_str(&format!(",{v}"));
            }
            let zeta_norm = traj.zeta(k, i).iter().map(|v| v * v).sum::<f64>().sqrt();
            line.push_str(&format!(",{},{}", traj.rho(k, i), zeta_norm));
            for v in traj.u(k, i) {
                line.push_str(&format!(",{v}"));
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}
