//! Synchronization verdicts computed from recorded trajectories.
//!
//! Every reported quantity is averaged over the trailing 10% of the recorded
//! time span.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BetaMatrix, LaplacianDecomposition};
use crate::linalg::Mat;
use crate::sim::Trajectory;

/// Fraction of the horizon used for terminal averages.
pub const TERMINAL_WINDOW: f64 = 0.1;

/// Slack allowed per recorded sample when checking that `ρ` never decreases.
pub const RHO_MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub disagreement: f64,
    pub beta_residual: f64,
    pub zeta: f64,
    pub rho_slope: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            disagreement: 1e-2,
            beta_residual: 5e-2,
            zeta: 1e-2,
            rho_slope: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ClassicalSync,
    WeakSync,
    NotStabilized,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::ClassicalSync => "classical_sync",
            Verdict::WeakSync => "weak_sync",
            Verdict::NotStabilized => "not_stabilized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaResidual {
    /// 0-based node index.
    pub node: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    /// `max_i ‖ζ_i‖`
    pub terminal_zeta_norm: f64,
    /// `max_i ‖Σ_j ℓ_ij x̂_j‖`, collaborative runs only.
    pub terminal_zeta_hat_norm: Option<f64>,
    /// One entry per basic bicomponent: largest pairwise output distance.
    pub per_bicomponent_disagreement: Vec<f64>,
    /// Largest pairwise output distance over the whole network.
    pub global_disagreement: f64,
    pub beta_residuals: Vec<BetaResidual>,
    pub rho_final: Vec<f64>,
    /// Mean of `ρ̇_i` over the terminal window.
    pub rho_terminal_slope: Vec<f64>,
    pub rho_monotone: bool,
    pub has_spanning_tree: bool,
    pub verdict: Verdict,
}

impl SyncReport {
    pub fn max_bicomponent_disagreement(&self) -> f64 {
        self.per_bicomponent_disagreement.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_beta_residual(&self) -> f64 {
        self.beta_residuals.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn max_rho_slope(&self) -> f64 {
        self.rho_terminal_slope.iter().copied().fold(0.0, f64::max)
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        out.push_str(&format!("verdict: {}\n", self.verdict));
        out.push_str(&format!("has_spanning_tree: {}\n", self.has_spanning_tree));
        out.push_str(&format!("terminal_zeta_norm: {:.6e}\n", self.terminal_zeta_norm));
        if let Some(z) = self.terminal_zeta_hat_norm {
            out.push_str(&format!("terminal_zeta_hat_norm: {z:.6e}\n"));
        }
        out.push_str(&format!("global_disagreement: {:.6e}\n", self.global_disagreement));
        out.push_str(&format!(
            "per_bicomponent_disagreement: {}\n",
            list(&self.per_bicomponent_disagreement)
        ));
        let betas: Vec<_> = self
            .beta_residuals
            .iter()
            .map(|r| format!("{}={:.6e}", r.node + 1, r.residual))
            .collect();
        out.push_str(&format!("beta_residuals: {}\n", betas.join(" ")));
        out.push_str(&format!("rho_final: {}\n", list(&self.rho_final)));
        out.push_str(&format!("rho_terminal_slope: {}\n", list(&self.rho_terminal_slope)));
        out.push_str(&format!("rho_monotone: {}\n", self.rho_monotone));
        out
    }
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    norm(a.iter().zip(b).map(|(x, y)| x - y))
}

fn max_pairwise(traj: &Trajectory, k: usize, nodes: &[usize]) -> f64 {
    let mut worst = 0.0f64;
    for (idx, &a) in nodes.iter().enumerate() {
        for &b in &nodes[idx + 1..] {
            worst = worst.max(distance(traj.y(k, a), traj.y(k, b)));
        }
    }
    worst
}

/// Mean output of `nodes` at sample `k`.
fn mean_output(traj: &Trajectory, k: usize, nodes: &[usize]) -> Vec<f64> {
    let mut mean = vec![0.0; traj.p];
    for &i in nodes {
        for (acc, v) in mean.iter_mut().zip(traj.y(k, i)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= nodes.len() as f64);
    mean
}

fn window_mean(range: std::ops::Range<usize>, f: impl Fn(usize) -> f64) -> f64 {
    let count = range.len() as f64;
    range.map(f).sum::<f64>() / count
}

fn check_sizes(traj: &Trajectory, decomp: &LaplacianDecomposition) -> Result<()> {
    if traj.node_count != decomp.node_count() {
        return Err(Error::Mismatch(format!(
            "trajectory has {} agents but the decomposition has {} nodes",
            traj.node_count,
            decomp.node_count()
        )));
    }
    if traj.is_empty() {
        return Err(Error::Mismatch("trajectory has no samples".into()));
    }
    Ok(())
}

pub fn analyze(
    traj: &Trajectory,
    decomp: &LaplacianDecomposition,
    beta: &BetaMatrix,
    thresholds: &Thresholds,
) -> Result<SyncReport> {
    check_sizes(traj, decomp)?;
    if beta.values.ncols() != decomp.k() || beta.nodes.len() != beta.values.nrows() {
        return Err(Error::Mismatch("β matrix does not match the decomposition".into()));
    }
    let nodes = traj.node_count;
    let last = traj.len() - 1;
    let start = traj.window_start(TERMINAL_WINDOW);
    let window = start..last + 1;

    let terminal_zeta_norm = window_mean(window.clone(), |k| {
        (0..nodes)
            .map(|i| norm(traj.zeta(k, i).iter().copied()))
            .fold(0.0, f64::max)
    });
    let terminal_zeta_hat_norm = traj.zeta_tilde(0, 0).map(|_| {
        window_mean(window.clone(), |k| {
            (0..nodes)
                .map(|i| norm(traj.zeta_tilde(k, i).unwrap_or(&[]).iter().copied()))
                .fold(0.0, f64::max)
        })
    });

    let per_bicomponent_disagreement: Vec<f64> = decomp
        .basic_blocks
        .iter()
        .map(|b| window_mean(window.clone(), |k| max_pairwise(traj, k, &b.nodes)))
        .collect();
    let all: Vec<usize> = (0..nodes).collect();
    let global_disagreement = window_mean(window.clone(), |k| max_pairwise(traj, k, &all));

    let beta_residuals = beta
        .nodes
        .iter()
        .enumerate()
        .map(|(row, &node)| {
            let residual = window_mean(window.clone(), |k| {
                let mut target = vec![0.0; traj.p];
                for (col, block) in decomp.basic_blocks.iter().enumerate() {
                    let w = beta.values[(row, col)];
                    for (acc, v) in target.iter_mut().zip(mean_output(traj, k, &block.nodes)) {
                        *acc += w * v;
                    }
                }
                distance(traj.y(k, node), &target)
            });
            BetaResidual { node, residual }
        })
        .collect::<Vec<_>>();

    let rho_final: Vec<f64> = (0..nodes).map(|i| traj.rho(last, i)).collect();
    let span = traj.times[last] - traj.times[start];
    let rho_terminal_slope: Vec<f64> = (0..nodes)
        .map(|i| {
            if span > 0.0 {
                (traj.rho(last, i) - traj.rho(start, i)) / span
            } else {
                0.0
            }
        })
        .collect();
    let rho_monotone =
        (1..traj.len()).all(|k| (0..nodes).all(|i| traj.rho(k, i) >= traj.rho(k - 1, i) - RHO_MONOTONE_SLACK));

    let stable = terminal_zeta_norm <= thresholds.zeta && terminal_zeta_hat_norm.is_none_or(|z| z <= thresholds.zeta);
    let bicomponents_ok = per_bicomponent_disagreement
        .iter()
        .all(|&d| d <= thresholds.disagreement);
    let betas_ok = beta_residuals.iter().all(|r| r.residual <= thresholds.beta_residual);
    let verdict = if !stable {
        Verdict::NotStabilized
    } else if decomp.has_spanning_tree && global_disagreement <= thresholds.disagreement {
        Verdict::ClassicalSync
    } else if bicomponents_ok && betas_ok {
        Verdict::WeakSync
    } else {
        Verdict::NotStabilized
    };

    Ok(SyncReport {
        terminal_zeta_norm,
        terminal_zeta_hat_norm,
        per_bicomponent_disagreement,
        global_disagreement,
        beta_residuals,
        rho_final,
        rho_terminal_slope,
        rho_monotone,
        has_spanning_tree: decomp.has_spanning_tree,
        verdict,
    })
}

/// Least-squares estimate of the β matrix from the terminal window: each
/// non-basic output is regressed on the bicomponent mean outputs.
pub fn fit_beta(traj: &Trajectory, decomp: &LaplacianDecomposition) -> Result<BetaMatrix> {
    check_sizes(traj, decomp)?;
    let nonbasic = decomp.nonbasic.nodes.clone();
    let k = decomp.k();
    let start = traj.window_start(TERMINAL_WINDOW);
    let samples = traj.len() - start;
    let rows = samples * traj.p;
    let mut design = Mat::zeros(rows, k);
    for (s, kk) in (start..traj.len()).enumerate() {
        for (col, block) in decomp.basic_blocks.iter().enumerate() {
            for (c, v) in mean_output(traj, kk, &block.nodes).into_iter().enumerate() {
                design[(s * traj.p + c, col)] = v;
            }
        }
    }
    let svd = design.svd(true, true);
    let mut values = Mat::zeros(nonbasic.len(), k);
    for (row, &node) in nonbasic.iter().enumerate() {
        let target = Mat::from_fn(rows, 1, |r, _| traj.y(start + r / traj.p, node)[r % traj.p]);
        let coef = svd
            .solve(&target, 1e-12 * svd.singular_values.max())
            .map_err(|e| Error::Mismatch(format!("β regression failed: {e}")))?;
        for col in 0..k {
            values[(row, col)] = coef[(col, 0)];
        }
    }
    Ok(BetaMatrix {
        nodes: nonbasic,
        values,
    })
}
