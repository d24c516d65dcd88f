//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use synchrony::graph::{beta_coefficients, condense};
use synchrony::scenario::{write_trajectory_csv, DesignDump, Scenario};
use synchrony::sim::integrate;
use synchrony::verify::analyze;
use synchrony::{BetaMatrix, DirectedWeightedGraph, Error, LaplacianDecomposition, Result, SyncReport};

use crate::plot::{render, Figure, Series};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const DESIGN_FILE: &str = "design.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";

/// Files written by a run, all inside `dir`.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub report: SyncReport,
}

fn label(nodes: &[usize]) -> String {
    nodes.iter().map(|v| (v + 1).to_string()).collect::<Vec<_>>().join(" ")
}

/// Human-readable decomposition summary with the β rows.
pub fn describe_graph(graph: &DirectedWeightedGraph) -> Result<String> {
    let decomp = condense(graph);
    let beta = beta_coefficients(&decomp)?;
    let mut out = String::new();
    let _ = writeln!(out, "nodes: {}", graph.node_count());
    let _ = writeln!(
        out,
        "k={}, non-basic nodes: {}",
        decomp.k(),
        decomp.nonbasic.nodes.len()
    );
    for (b, block) in decomp.basic_blocks.iter().enumerate() {
        let size = block.nodes.len();
        let unit = if size == 1 { "node" } else { "nodes" };
        let _ = writeln!(out, "basic block {} ({size} {unit}): {}", b + 1, label(&block.nodes));
    }
    if !decomp.nonbasic.nodes.is_empty() {
        let _ = writeln!(out, "non-basic: {}", label(&decomp.nonbasic.nodes));
    }
    let _ = writeln!(
        out,
        "spanning tree: {}",
        if decomp.has_spanning_tree { "yes" } else { "no" }
    );
    if !beta.nodes.is_empty() {
        let _ = writeln!(out, "beta (row: non-basic node, column: basic block):");
        for (r, node) in beta.nodes.iter().enumerate() {
            let row: Vec<String> = (0..beta.values.ncols())
                .map(|c| format!("{:.6}", beta.values[(r, c)]))
                .collect();
            let _ = writeln!(out, "  {}: {}", node + 1, row.join(" "));
        }
    }
    Ok(out)
}

pub fn cmd_analyze(graph_file: Option<&Path>, scenario: Option<&Path>) -> Result<String> {
    let graph = match (graph_file, scenario) {
        (Some(path), None) => DirectedWeightedGraph::parse_edge_list(&fs::read_to_string(path)?)?,
        (None, Some(path)) => Scenario::load(path)?.graph,
        _ => return Err(Error::InvalidScenario("give either a graph file or --scenario".into())),
    };
    describe_graph(&graph)
}

/// Synthesizes the scenario's protocol. On an assumption violation the
/// structural report is still returned alongside the error.
pub fn cmd_design(scenario: &Path) -> std::result::Result<DesignDump, (Error, Option<String>)> {
    let scenario = Scenario::load(scenario).map_err(|e| (e, None))?;
    match scenario.design() {
        Ok(design) => Ok(DesignDump::new(&scenario.file.agent, design)),
        Err(e) => {
            let structure = synchrony::ctrl::analyze_structure(&scenario.file.agent);
            let text = serde_json::to_string_pretty(&structure).ok();
            Err((e, text))
        }
    }
}

pub fn cmd_run(scenario: &Path, out_dir: &Path, seed: Option<u64>) -> Result<RunArtifacts> {
    let mut scenario = Scenario::load(scenario)?;
    if let Some(seed) = seed {
        scenario = scenario.with_seed(seed);
    }
    let design = scenario.design()?;
    let config = scenario.config();
    config.validate()?;
    let traj = integrate(&config, &design)?;
    let decomp = condense(&scenario.graph);
    let beta = beta_coefficients(&decomp)?;
    let report = analyze(&traj, &decomp, &beta, &scenario.file.thresholds)?;

    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, body)?;
        files.push(path);
        Ok(())
    };
    put(SCENARIO_FILE, &scenario.echo_json()?)?;
    put(
        DESIGN_FILE,
        &serde_json::to_string_pretty(&DesignDump::new(&scenario.file.agent, design))?,
    )?;
    put(REPORT_TEXT_FILE, &report.to_text())?;
    put(REPORT_JSON_FILE, &serde_json::to_string_pretty(&report)?)?;
    let csv_path = out_dir.join(TRAJECTORY_FILE);
    write_trajectory_csv(&traj, BufWriter::new(fs::File::create(&csv_path)?))?;
    files.push(csv_path);
    files.extend(cmd_plot(out_dir)?);
    Ok(RunArtifacts {
        dir: out_dir.to_path_buf(),
        files,
        report,
    })
}

/// Per-agent columns read back from `trajectory.csv`.
#[derive(Debug, Default)]
struct RunData {
    times: Vec<f64>,
    /// `[agent][sample][component]`
    outputs: Vec<Vec<Vec<f64>>>,
    rho: Vec<Vec<f64>>,
    zeta_norm: Vec<Vec<f64>>,
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

fn read_trajectory(path: &Path, nodes: usize) -> Result<RunData> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_error(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| parse_error(1, e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(t_col), Some(agent_col), Some(rho_col), Some(zeta_col)) =
        (col("t"), col("agent"), col("rho"), col("zeta_norm"))
    else {
        return Err(parse_error(1, "trajectory header lacks t, agent, rho or zeta_norm"));
    };
    let y_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('y') && h[1..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();

    let mut data = RunData {
        outputs: vec![Vec::new(); nodes],
        rho: vec![Vec::new(); nodes],
        zeta_norm: vec![Vec::new(); nodes],
        ..Default::default()
    };
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record.map_err(|e| parse_error(line, e.to_string()))?;
        let num = |c: usize| -> Result<f64> {
            record
                .get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| parse_error(line, format!("column {} is not a number", c + 1)))
        };
        let agent = num(agent_col)? as usize;
        if agent == 0 || agent > nodes {
            return Err(parse_error(line, format!("agent {agent} outside 1..={nodes}")));
        }
        let i = agent - 1;
        if i == 0 {
            data.times.push(num(t_col)?);
        }
        data.outputs[i].push(y_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?);
        data.rho[i].push(num(rho_col)?);
        data.zeta_norm[i].push(num(zeta_col)?);
    }
    if data.rho.iter().any(|r| r.len() != data.times.len()) {
        return Err(parse_error(0, "agents have different sample counts"));
    }
    Ok(data)
}

fn mean_output(data: &RunData, nodes: &[usize], k: usize) -> Vec<f64> {
    let p = data.outputs[nodes[0]][k].len();
    let mut acc = vec![0.0; p];
    for &v in nodes {
        for (a, y) in acc.iter_mut().zip(&data.outputs[v][k]) {
            *a += y / nodes.len() as f64;
        }
    }
    acc
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `‖y_i − target_i‖`, where the target is the block mean for basic nodes
/// and the β-weighted combination of block means for non-basic nodes.
fn sync_errors(data: &RunData, decomp: &LaplacianDecomposition, beta: &BetaMatrix) -> Vec<Series> {
    let nodes = data.rho.len();
    let mut errors = vec![Vec::with_capacity(data.times.len()); nodes];
    for (k, &t) in data.times.iter().enumerate() {
        let means: Vec<Vec<f64>> = decomp
            .basic_blocks
            .iter()
            .map(|b| mean_output(data, &b.nodes, k))
            .collect();
        for (b, block) in decomp.basic_blocks.iter().enumerate() {
            for &v in &block.nodes {
                errors[v].push((t, distance(&data.outputs[v][k], &means[b])));
            }
        }
        for (r, &v) in beta.nodes.iter().enumerate() {
            let mut target = vec![0.0; means.first().map_or(0, Vec::len)];
            for (b, mean) in means.iter().enumerate() {
                for (acc, y) in target.iter_mut().zip(mean) {
                    *acc += beta.values[(r, b)] * y;
                }
            }
            errors[v].push((t, distance(&data.outputs[v][k], &target)));
        }
    }
    errors
        .into_iter()
        .enumerate()
        .map(|(i, points)| Series {
            label: format!("agent {}", i + 1),
            points,
        })
        .collect()
}

fn per_agent(data: &RunData, values: &[Vec<f64>]) -> Vec<Series> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| Series {
            label: format!("agent {}", i + 1),
            points: data.times.iter().copied().zip(v.iter().copied()).collect(),
        })
        .collect()
}

fn output_series(data: &RunData, nodes: &[usize]) -> Vec<Series> {
    let mut out = Vec::new();
    for &v in nodes {
        let p = data.outputs[v].first().map_or(0, Vec::len);
        for c in 0..p {
            out.push(Series {
                label: if p == 1 {
                    format!("agent {}", v + 1)
                } else {
                    format!("agent {} y{}", v + 1, c + 1)
                },
                points: data
                    .times
                    .iter()
                    .copied()
                    .zip(data.outputs[v].iter().map(|y| y[c]))
                    .collect(),
            });
        }
    }
    out
}

/// Renders the SVG plots of a run directory; returns the files written.
pub fn cmd_plot(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let scenario = Scenario::load(&run_dir.join(SCENARIO_FILE))?;
    let decomp = condense(&scenario.graph);
    let beta = beta_coefficients(&decomp)?;
    let data = read_trajectory(&run_dir.join(TRAJECTORY_FILE), scenario.graph.node_count())?;

    let figure = |title: &str, y_label: &str, series: Vec<Series>| Figure {
        title: title.into(),
        x_label: "t".into(),
        y_label: y_label.into(),
        series,
    };
    let mut figures = vec![
        (
            "zeta_norm.svg".to_string(),
            figure("Network information", "|zeta_i|", per_agent(&data, &data.zeta_norm)),
        ),
        (
            "rho.svg".to_string(),
            figure("Adaptive parameters", "rho_i", per_agent(&data, &data.rho)),
        ),
        (
            "sync_errors.svg".to_string(),
            figure(
                "Synchronization errors",
                "|y_i - target_i|",
                sync_errors(&data, &decomp, &beta),
            ),
        ),
    ];
    for (b, block) in decomp.basic_blocks.iter().enumerate() {
        figures.push((
            format!("outputs_block_{}.svg", b + 1),
            figure(
                &format!("Outputs of basic bicomponent {}", b + 1),
                "y_i",
                output_series(&data, &block.nodes),
            ),
        ));
    }
    if !decomp.nonbasic.nodes.is_empty() {
        figures.push((
            "outputs_nonbasic.svg".to_string(),
            figure(
                "Outputs of non-basic agents",
                "y_i",
                output_series(&data, &decomp.nonbasic.nodes),
            ),
        ));
    }

    let mut written = Vec::new();
    for (name, fig) in figures {
        let path = run_dir.join(name);
        fs::write(&path, render(&fig))?;
        written.push(path);
    }
    Ok(written)
}
