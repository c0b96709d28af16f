//! Artifact persistence. Every file carries the schema version, resolved
//! config hash, and master seed; CSV files hold them in a leading `#`
//! comment, JSON files as top-level fields. Writes are atomic
//! (write-temp-then-rename) and timestamp-free so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::epi::{self, Observation};
use crate::grid::TimeGrid;
use crate::inference::{quantile_sorted, Chain, ChainSummary, ThetaSpec};
use crate::io::config::{FileConfig, SCHEMA_VERSION};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment_line(&self) -> String {
        format!("# deltacu schema={SCHEMA_VERSION} config={} seed={}", self.config_hash, self.seed)
    }
}

/// Write-temp-then-rename in the destination directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Data(format!("cannot parse {}: {e}", path.display())))
}

/// Top-level record of what produced an output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub workflow: String,
    pub config: FileConfig,
}

pub fn write_run_meta(dir: &Path, meta: &RunMeta) -> Result<()> {
    write_json(&dir.join("run_meta.json"), meta)
}

pub fn load_run_meta(dir: &Path) -> Result<RunMeta> {
    read_json(&dir.join("run_meta.json"))
}

/// Provenance-wrapped JSON payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Wrapped<T> {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub payload: T,
}

pub fn write_wrapped_json<T: Serialize>(
    path: &Path,
    prov: &Provenance,
    payload: T,
) -> Result<()> {
    write_json(
        path,
        &Wrapped {
            schema: SCHEMA_VERSION,
            config_hash: prov.config_hash.clone(),
            seed: prov.seed,
            payload,
        },
    )
}

pub fn write_chain_csv(dir: &Path, chain: &Chain, prov: &Provenance) -> Result<()> {
    let mut text = prov.comment_line();
    text.push('\n');
    text.push_str("iteration,log_lik,accepted");
    for name in &chain.names {
        let _ = write!(text, ",{name}");
    }
    text.push_str(",delta_cu\n");
    for i in 0..chain.n_draws() {
        let _ = write!(text, "{i},{},{}", chain.log_liks[i], chain.accepted[i]);
        for v in chain.draw(i) {
            let _ = write!(text, ",{v}");
        }
        let _ = writeln!(text, ",{}", chain.delta_cus[i]);
    }
    atomic_write(&dir.join("chain.csv"), text.as_bytes())
}

pub fn write_cu_paths_csv(dir: &Path, chain: &Chain, prov: &Provenance) -> Result<()> {
    let mut text = prov.comment_line();
    text.push('\n');
    text.push_str("iteration");
    for j in 0..chain.grid.n_nodes() {
        let _ = write!(text, ",node_{j}");
    }
    text.push('\n');
    for (iter, path) in &chain.paths {
        let _ = write!(text, "{iter}");
        for v in path {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    atomic_write(&dir.join("cu_paths.csv"), text.as_bytes())
}

pub fn write_cu_summary_csv(dir: &Path, summary: &ChainSummary, prov: &Provenance) -> Result<()> {
    let mut text = prov.comment_line();
    text.push('\n');
    text.push_str("node,time,mean,median,q025,q975\n");
    for band in &summary.cu_bands {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            band.node, band.time, band.mean, band.median, band.q025, band.q975
        );
    }
    atomic_write(&dir.join("cu_summary.csv"), text.as_bytes())
}

pub fn write_chain_summary_json(
    dir: &Path,
    summary: &ChainSummary,
    prov: &Provenance,
) -> Result<()> {
    #[derive(Serialize)]
    struct Payload<'a> {
        summary: &'a ChainSummary,
    }
    write_wrapped_json(&dir.join("delta_cu_summary.json"), prov, Payload { summary })
}

pub fn write_observed_csv(dir: &Path, obs: &[Observation], prov: &Provenance) -> Result<()> {
    let text = crate::io::observations_to_csv(obs, &prov.comment_line());
    atomic_write(&dir.join("observed.csv"), text.as_bytes())
}

/// Posterior prevalence bands: each retained path is re-integrated under its
/// own iteration's parameter draw. Returns the CSV body rows and the number
/// of paths skipped for numerical failure.
pub fn prevalence_fit_rows(chain: &Chain, burn_in: usize) -> Result<(String, usize)> {
    let spec = ThetaSpec::for_model(chain.kind);
    let n_nodes = chain.grid.n_nodes();
    let mut fsw: Vec<Vec<f64>> = Vec::new();
    let mut client: Vec<Vec<f64>> = Vec::new();
    let mut skipped = 0usize;
    for (iter, path) in &chain.paths {
        if *iter < burn_in {
            continue;
        }
        let theta = crate::inference::ThetaVector(chain.draw(*iter).to_vec());
        let params = spec.epi_params(&theta);
        match epi::integrate(&params, path, &chain.grid) {
            Ok(states) => {
                fsw.push(
                    states
                        .iter()
                        .map(|s| epi::observe_prevalence(s, epi::Stratum::Fsw))
                        .collect(),
                );
                client.push(
                    states
                        .iter()
                        .map(|s| epi::observe_prevalence(s, epi::Stratum::Client))
                        .collect(),
                );
            }
            Err(Error::Numerical(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if fsw.is_empty() {
        return Err(Error::Numerical(
            "no retained path could be integrated for the prevalence fit".into(),
        ));
    }
    let mut text = String::new();
    let mut column = Vec::with_capacity(fsw.len());
    for node in 0..n_nodes {
        let _ = write!(text, "{node},{}", chain.grid.node_year(node));
        for series in [&fsw, &client] {
            column.clear();
            column.extend(series.iter().map(|p| p[node]));
            let mean = column.iter().sum::<f64>() / column.len() as f64;
            column.sort_by(f64::total_cmp);
            let _ = write!(
                text,
                ",{mean},{},{},{}",
                quantile_sorted(&column, 0.5),
                quantile_sorted(&column, 0.025),
                quantile_sorted(&column, 0.975)
            );
        }
        text.push('\n');
    }
    Ok((text, skipped))
}

pub fn write_prevalence_fit_csv(
    dir: &Path,
    chain: &Chain,
    burn_in: usize,
    prov: &Provenance,
) -> Result<()> {
    let (rows, _skipped) = prevalence_fit_rows(chain, burn_in)?;
    let mut text = prov.comment_line();
    text.push('\n');
    text.push_str(
        "node,time,fsw_mean,fsw_median,fsw_q025,fsw_q975,\
         client_mean,client_median,client_q025,client_q975\n",
    );
    text.push_str(&rows);
    atomic_write(&dir.join("prevalence_fit.csv"), text.as_bytes())
}

/// In-memory image of a persisted chain table.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTable {
    pub names: Vec<String>,
    pub iterations: Vec<usize>,
    pub log_liks: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Row-major draws, `iterations x names.len()`.
    pub draws: Vec<f64>,
    pub delta_cus: Vec<f64>,
}

/// Parse a persisted chain CSV (fuzz-hardened entry point).
pub fn parse_chain_bytes(bytes: &[u8]) -> Result<ChainTable> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(bytes);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("chain header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < 5
        || headers[0] != "iteration"
        || headers[1] != "log_lik"
        || headers[2] != "accepted"
        || headers.last().map(String::as_str) != Some("delta_cu")
    {
        return Err(Error::Data(
            "chain header must be iteration,log_lik,accepted,<coords...>,delta_cu".into(),
        ));
    }
    let names: Vec<String> = headers[3..headers.len() - 1].to_vec();
    let dim = names.len();
    let mut table = ChainTable {
        names,
        iterations: Vec::new(),
        log_liks: Vec::new(),
        accepted: Vec::new(),
        draws: Vec::new(),
        delta_cus: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("chain parse: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 4 {
            return Err(Error::Data(format!(
                "line {line}: expected {} fields, got {}",
                dim + 4,
                record.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Data(format!("line {line}: bad {what}: {e}")))
        };
        table.iterations.push(
            record[0]
                .parse::<usize>()
                .map_err(|e| Error::Data(format!("line {line}: bad iteration: {e}")))?,
        );
        table.log_liks.push(parse_f(&record[1], "log_lik")?);
        table.accepted.push(match &record[2] {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Data(format!("line {line}: bad accepted flag {other:?}")))
            }
        });
        for i in 0..dim {
            table.draws.push(parse_f(&record[3 + i], "draw")?);
        }
        table.delta_cus.push(parse_f(&record[3 + dim], "delta_cu")?);
    }
    Ok(table)
}

pub fn load_chain_table(path: &Path) -> Result<ChainTable> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_chain_bytes(&bytes)
}

/// Parse the companion path table: `iteration,node_0..node_{n-1}`.
pub fn parse_cu_paths_bytes(bytes: &[u8]) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let n_nodes = {
        let headers = reader
            .headers()
            .map_err(|e| Error::Data(format!("cu_paths header: {e}")))?;
        if headers.get(0) != Some("iteration") || headers.len() < 2 {
            return Err(Error::Data("cu_paths header must be iteration,node_0,...".into()));
        }
        headers.len() - 1
    };
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("cu_paths parse: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n_nodes + 1 {
            return Err(Error::Data(format!(
                "line {line}: expected {} fields, got {}",
                n_nodes + 1,
                record.len()
            )));
        }
        let iter = record[0]
            .parse::<usize>()
            .map_err(|e| Error::Data(format!("line {line}: bad iteration: {e}")))?;
        let mut path = Vec::with_capacity(n_nodes);
        for v in record.iter().skip(1) {
            path.push(
                v.parse::<f64>()
                    .map_err(|e| Error::Data(format!("line {line}: bad value: {e}")))?,
            );
        }
        out.push((iter, path));
    }
    Ok(out)
}

pub fn load_cu_paths(path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_cu_paths_bytes(&bytes)
}

/// Rebuild a `Chain` from persisted artifacts plus the run metadata.
pub fn chain_from_artifacts(
    table: ChainTable,
    paths: Vec<(usize, Vec<f64>)>,
    meta: &RunMeta,
) -> Result<Chain> {
    let grid: TimeGrid = meta.config.grid.clone();
    let dim = table.names.len();
    let n = table.log_liks.len();
    if table.draws.len() != n * dim {
        return Err(Error::Data("chain table draws/len mismatch".into()));
    }
    for (_, p) in &paths {
        if p.len() != grid.n_nodes() {
            return Err(Error::Data(format!(
                "stored path has {} nodes, grid has {}",
                p.len(),
                grid.n_nodes()
            )));
        }
    }
    Ok(Chain {
        kind: meta.config.model,
        names: table.names,
        grid,
        seed: meta.seed,
        dim,
        draws: table.draws,
        log_liks: table.log_liks,
        accepted: table.accepted,
        delta_cus: table.delta_cus,
        paths,
        cov_snapshots: Vec::new(),
        t_a: meta.config.inference.delta_t_a,
        t_b: meta.config.inference.delta_t_b,
        burn_in_frac: meta.config.inference.burn_in_frac,
    })
}
