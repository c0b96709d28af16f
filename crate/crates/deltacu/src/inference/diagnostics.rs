//! Posterior summaries and convergence diagnostics for PMMH chains.

use serde::{Deserialize, Serialize};

use crate::inference::pmmh::Chain;
use crate::{Error, Result};

/// Linear-interpolation quantile (type 7, the numpy default) on an already
/// sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "quantile level outside [0,1]");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Effective sample size by Geyer's initial positive sequence: the
/// asymptotic variance sums adjacent autocovariance pairs until the first
/// non-positive pair. Constant chains report 1. The result is clamped to
/// `[1, n]`.
pub fn ess_ips(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return n.min(1) as f64;
    }
    let first = x[0];
    if x.iter().all(|&v| v == first) {
        return 1.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let gamma = |k: usize| -> f64 {
        let mut s = 0.0;
        for t in 0..n - k {
            s += (x[t] - mean) * (x[t + k] - mean);
        }
        s / n as f64
    };
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return 1.0;
    }
    let mut var = -g0;
    let mut m = 0usize;
    while 2 * m + 1 < n {
        let pair = gamma(2 * m) + gamma(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        var += 2.0 * pair;
        m += 1;
    }
    if var <= 0.0 {
        return n as f64;
    }
    (n as f64 * g0 / var).clamp(1.0, n as f64)
}

/// Location/spread summary of one scalar marginal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    pub ess: f64,
}

impl ScalarSummary {
    fn from_series(name: &str, xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        ScalarSummary {
            name: name.to_string(),
            mean,
            sd,
            median: quantile_sorted(&sorted, 0.5),
            q025: quantile_sorted(&sorted, 0.025),
            q975: quantile_sorted(&sorted, 0.975),
            ess: ess_ips(xs),
        }
    }
}

/// Pointwise posterior band of the condom-use path at one grid node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeBand {
    pub node: usize,
    pub time: f64,
    pub mean: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub model: String,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_kept: usize,
    pub acceptance_rate: f64,
    /// True when every retained draw is identical (the sampler never moved).
    pub degenerate: bool,
    pub coords: Vec<ScalarSummary>,
    pub delta_cu: ScalarSummary,
    pub n_paths_used: usize,
    pub cu_bands: Vec<NodeBand>,
}

/// Summarize a chain after discarding `burn_in` draws and thinning by
/// `thin`. Credible bands use the stored (already thinned) paths from the
/// retained portion; the condom-use change summary uses every retained
/// per-draw value.
pub fn chain_diagnostics(chain: &Chain, burn_in: usize, thin: usize) -> Result<ChainSummary> {
    let n = chain.n_draws();
    if burn_in >= n {
        return Err(Error::Config(format!("burn-in {burn_in} >= chain length {n}")));
    }
    if thin == 0 {
        return Err(Error::Config("thin must be >= 1".into()));
    }
    let kept: Vec<usize> = (burn_in..n).step_by(thin).collect();

    let mut degenerate = true;
    let mut coords = Vec::with_capacity(chain.dim);
    for c in 0..chain.dim {
        let xs: Vec<f64> = kept.iter().map(|&i| chain.draws[i * chain.dim + c]).collect();
        if xs.iter().any(|&v| v != xs[0]) {
            degenerate = false;
        }
        coords.push(ScalarSummary::from_series(&chain.names[c], &xs));
    }
    if degenerate {
        for c in coords.iter_mut() {
            c.ess = 1.0;
        }
    }

    let dcu: Vec<f64> = kept.iter().map(|&i| chain.delta_cus[i]).collect();
    let delta_cu = ScalarSummary::from_series("delta_cu", &dcu);

    let used: Vec<&Vec<f64>> = chain
        .paths
        .iter()
        .filter(|(iter, _)| *iter >= burn_in)
        .map(|(_, p)| p)
        .collect();
    let mut cu_bands = Vec::new();
    if !used.is_empty() {
        let n_nodes = chain.grid.n_nodes();
        let mut column = Vec::with_capacity(used.len());
        for node in 0..n_nodes {
            column.clear();
            column.extend(used.iter().map(|p| p[node]));
            let mean = column.iter().sum::<f64>() / column.len() as f64;
            column.sort_by(f64::total_cmp);
            cu_bands.push(NodeBand {
                node,
                time: chain.grid.node_year(node),
                mean,
                median: quantile_sorted(&column, 0.5),
                q025: quantile_sorted(&column, 0.025),
                q975: quantile_sorted(&column, 0.975),
            });
        }
    }

    Ok(ChainSummary {
        model: chain.kind.name().to_string(),
        n_iterations: n,
        burn_in,
        thin,
        n_kept: kept.len(),
        acceptance_rate: chain.acceptance_rate(),
        degenerate,
        coords,
        delta_cu,
        n_paths_used: used.len(),
        cu_bands,
    })
}
