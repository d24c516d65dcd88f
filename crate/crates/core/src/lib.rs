//! Scale-free adaptive synchronization protocols for networks of identical
//! linear agents.
//!
//! The crate synthesizes two adaptive protocols from the agent model alone
//! (no knowledge of the communication graph), simulates the closed-loop
//! network over an arbitrary weighted digraph and turns the recorded
//! trajectories into verdicts on network stability and weak output
//! synchronization.
//!
//! * [`graph`]: Laplacians, condensation into basic / non-basic
//!   bicomponents, convex-combination coefficients and the scaling
//!   diagnostics used in the stability analysis.
//! * [`ctrl`]: structural analysis of `(A, B, C)` and the Riccati / gain
//!   synthesis primitives.
//! * [`protocol1`] / [`protocol2`]: non-collaborative and collaborative
//!   protocol design plus per-agent right-hand sides.
//! * [`sim`]: fixed-step RK4 integration of the coupled network.
//! * [`verify`]: synchronization reports.
//! * [`scenario`]: the JSON scenario format, design dumps and CSV export.

pub mod ctrl;
mod error;
pub mod graph;
pub(crate) mod linalg;
pub mod protocol1;
pub mod protocol2;
pub mod scenario;
pub mod sim;
pub mod verify;

pub use ctrl::{LinearAgent, StructuralReport};
pub use error::{AssumptionItem, Error, Result};
pub use graph::{BetaMatrix, DirectedWeightedGraph, LaplacianDecomposition};
pub use protocol1::NcProtocolDesign;
pub use protocol2::ColProtocolDesign;
pub use sim::{Design, ProtocolKind, ScenarioConfig, Trajectory};
pub use verify::{SyncReport, Thresholds, Verdict};

pub use nalgebra::{DMatrix, DVector};
