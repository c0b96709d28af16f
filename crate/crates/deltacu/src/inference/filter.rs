//! Bootstrap particle filter over the condom-use trajectory.
//!
//! Particles propagate between observation epochs by sampling the trajectory
//! prior forward, integrating the transmission ODE alongside; they are
//! weighted by the binomial observation likelihood and resampled
//! systematically at every epoch. The log-likelihood accumulates
//! `log((1/N) * sum of unnormalized weights)` per epoch; the epoch
//! contribution is written as `max + (ln sum_rel - ln N)` so that with
//! identical weights (deterministic priors) the two logs cancel exactly and
//! the estimate equals the direct evaluation bit-for-bit, for every N.
//!
//! Every random decision draws from a counter-based substream keyed by
//! `(seed, role, epoch, particle)`, so results are independent of execution
//! order and bit-reproducible.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::epi::{self, EpiParams, EpiState, Kernel, Observation, Stratum};
use crate::grid::TimeGrid;
use crate::rng::{stream, substream};
use crate::traj::{self, TrajectoryModel};
use crate::{Error, Result};

/// Result of one filter pass. `cu_path` is a single path drawn proportional
/// to the final particle weights, traced through its ancestry and extended
/// past the last observation by the prior; `states` is its induced epidemic
/// state path. Both are `None` when the weights degenerate (`log_lik` is
/// then -inf and the caller must treat the parameter value as rejected).
#[derive(Debug, Clone)]
pub struct PfOutput {
    pub log_lik: f64,
    pub cu_path: Option<Vec<f64>>,
    pub states: Option<Vec<EpiState>>,
}

struct EpochObs {
    node: usize,
    items: Vec<(f64, f64, f64, Stratum)>, // (positives, size, ln C(n,k), stratum)
}

fn build_epochs(observations: &[Observation], grid: &TimeGrid) -> Result<Vec<EpochObs>> {
    let mut by_node = std::collections::BTreeMap::<usize, Vec<(f64, f64, f64, Stratum)>>::new();
    for obs in observations {
        obs.validate()?;
        let node = grid.nearest_node(obs.time)?;
        let k = obs.positives as f64;
        let n = obs.sample_size as f64;
        by_node
            .entry(node)
            .or_default()
            .push((k, n, epi::ln_choose(n, k), obs.stratum));
    }
    Ok(by_node.into_iter().map(|(node, items)| EpochObs { node, items }).collect())
}

#[inline]
fn obs_loglik(k: f64, n: f64, lnc: f64, h: f64) -> f64 {
    if !(0.0..=1.0).contains(&h) {
        return f64::NEG_INFINITY;
    }
    if h == 0.0 {
        return if k == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if h == 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    lnc + k * h.ln() + (n - k) * (-h).ln_1p()
}

#[inline]
fn epoch_weight(items: &[(f64, f64, f64, Stratum)], state: &[f64; 3]) -> f64 {
    let mut lw = 0.0;
    for &(k, n, lnc, stratum) in items {
        lw += obs_loglik(k, n, lnc, Kernel::prevalence(state, stratum));
        if lw == f64::NEG_INFINITY {
            break;
        }
    }
    lw
}

/// Log-sum-exp epoch update: returns (contribution to log L, normalized
/// weights in place of `logw`), or `None` when all weights vanish.
fn normalize_weights(logw: &mut [f64]) -> Option<f64> {
    let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return None;
    }
    let mut sum = 0.0;
    for w in logw.iter_mut() {
        *w = (*w - mx).exp();
        sum += *w;
    }
    for w in logw.iter_mut() {
        *w /= sum;
    }
    Some(mx + (sum.ln() - (logw.len() as f64).ln()))
}

fn systematic_indices(weights: &[f64], u: f64, out: &mut Vec<u32>) {
    let n = weights.len();
    out.clear();
    let mut cum = weights[0];
    let mut i = 0usize;
    for k in 0..n {
        let p = (u + k as f64) / n as f64;
        while p > cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        out.push(i as u32);
    }
}

fn categorical_index(weights: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return i;
        }
    }
    weights.len() - 1
}

enum Dynamics {
    /// Logit Brownian motion: per-particle latent `x`, per-step noise sd.
    Bm { sd: f64 },
    /// Deterministic trajectory shared by all particles.
    Det(Vec<f64>),
}

/// Run the bootstrap filter. Returns the unbiased log-likelihood estimate
/// and one trajectory drawn proportional to the final weights. Zero
/// observations yield `log_lik = 0` and a pure prior draw.
pub fn particle_filter(
    model: &TrajectoryModel,
    params: &EpiParams,
    observations: &[Observation],
    grid: &TimeGrid,
    n_particles: usize,
    seed: u64,
) -> Result<PfOutput> {
    if n_particles == 0 {
        return Err(Error::Config("particle count must be >= 1".into()));
    }
    model.validate()?;
    params.validate()?;
    if matches!(model, TrajectoryModel::StochGrowth { .. }) {
        return Err(Error::Config(
            "stoch_growth is a forward simulator only and cannot be filtered".into(),
        ));
    }

    let kernel = Kernel::new(params);
    let epochs = build_epochs(observations, grid)?;
    let delta = grid.delta_months();
    let n = n_particles;

    let dynamics = match model {
        TrajectoryModel::Bm { sigma, .. } => {
            Dynamics::Bm { sd: sigma * (delta / 12.0).sqrt() }
        }
        det => Dynamics::Det(traj::sample_path(det, grid, &mut substream(seed, &[stream::TAIL]))?),
    };

    if epochs.is_empty() {
        let cu_path = match &dynamics {
            Dynamics::Bm { .. } => {
                traj::sample_path(model, grid, &mut substream(seed, &[stream::TAIL]))?
            }
            Dynamics::Det(path) => path.clone(),
        };
        let states = epi::integrate(params, &cu_path, grid)?;
        return Ok(PfOutput { log_lik: 0.0, cu_path: Some(cu_path), states: Some(states) });
    }

    let cu0 = match model {
        TrajectoryModel::Bm { cu0, .. } => *cu0,
        _ => match &dynamics {
            Dynamics::Det(path) => path[0],
            _ => unreachable!(),
        },
    };
    let x0 = traj::logit(cu0);

    let mut states = vec![kernel.initial_infected(); n];
    let mut xs = vec![x0; n];
    let mut cus = vec![cu0; n];
    let mut logw = vec![0.0f64; n];
    let mut scratch_states = vec![[0.0f64; 3]; n];
    let mut scratch_xs = vec![0.0f64; n];
    let mut scratch_cus = vec![0.0f64; n];
    let mut ancestry: Vec<Vec<u32>> = Vec::with_capacity(epochs.len());
    let mut segments: Vec<Vec<f64>> = Vec::with_capacity(epochs.len());
    let mut anc_buf: Vec<u32> = Vec::with_capacity(n);
    let mut log_lik = 0.0;
    let mut prev_node = 0usize;

    for (e, epoch) in epochs.iter().enumerate() {
        let seg_len = epoch.node - prev_node;
        let mut seg = vec![0.0f64; n * seg_len];
        for j in 0..n {
            let mut i = states[j];
            let mut x = xs[j];
            let mut cu = cus[j];
            let mut failed = false;
            match &dynamics {
                Dynamics::Bm { sd } => {
                    let mut rng = substream(seed, &[stream::PARTICLE, e as u64, j as u64]);
                    for s in 0..seg_len {
                        match kernel.step(i, cu, delta) {
                            Some(next) => i = next,
                            None => {
                                failed = true;
                                break;
                            }
                        }
                        let eps: f64 = rng.sample(StandardNormal);
                        x += sd * eps;
                        cu = traj::logistic(x);
                        seg[j * seg_len + s] = cu;
                    }
                }
                Dynamics::Det(path) => {
                    for s in 0..seg_len {
                        match kernel.step(i, cu, delta) {
                            Some(next) => i = next,
                            None => {
                                failed = true;
                                break;
                            }
                        }
                        cu = path[prev_node + s + 1];
                        seg[j * seg_len + s] = cu;
                    }
                }
            }
            if failed {
                logw[j] = f64::NEG_INFINITY;
            } else {
                states[j] = i;
                xs[j] = x;
                cus[j] = cu;
                logw[j] = epoch_weight(&epoch.items, &i);
            }
        }
        segments.push(seg);

        match normalize_weights(&mut logw) {
            Some(contrib) => log_lik += contrib,
            None => {
                return Ok(PfOutput { log_lik: f64::NEG_INFINITY, cu_path: None, states: None })
            }
        }

        if e + 1 < epochs.len() {
            let u: f64 = substream(seed, &[stream::RESAMPLE, e as u64]).random();
            systematic_indices(&logw, u, &mut anc_buf);
            for (slot, &src) in anc_buf.iter().enumerate() {
                scratch_states[slot] = states[src as usize];
                scratch_xs[slot] = xs[src as usize];
                scratch_cus[slot] = cus[src as usize];
            }
            std::mem::swap(&mut states, &mut scratch_states);
            std::mem::swap(&mut xs, &mut scratch_xs);
            std::mem::swap(&mut cus, &mut scratch_cus);
            ancestry.push(anc_buf.clone());
        }
        prev_node = epoch.node;
    }

    // One path proportional to the final weights, traced back through its
    // ancestry, then extended beyond the last observation by the prior.
    let u_draw: f64 = substream(seed, &[stream::PATH_DRAW]).random();
    let mut j = categorical_index(&logw, u_draw);
    let last_obs_node = prev_node;
    let mut cu_path = vec![0.0f64; grid.n_nodes()];
    cu_path[0] = cu0;
    let mut tail_x = xs[j];
    for e in (0..epochs.len()).rev() {
        let from = if e == 0 { 0 } else { epochs[e - 1].node };
        let seg_len = epochs[e].node - from;
        let seg = &segments[e];
        cu_path[from + 1..epochs[e].node + 1].copy_from_slice(&seg[j * seg_len..(j + 1) * seg_len]);
        if e > 0 {
            j = ancestry[e - 1][j] as usize;
        }
    }
    if last_obs_node < grid.n_steps() {
        match &dynamics {
            Dynamics::Bm { sd } => {
                let mut rng = substream(seed, &[stream::TAIL]);
                for node in last_obs_node + 1..grid.n_nodes() {
                    let eps: f64 = rng.sample(StandardNormal);
                    tail_x += sd * eps;
                    cu_path[node] = traj::logistic(tail_x);
                }
            }
            Dynamics::Det(path) => {
                cu_path[last_obs_node + 1..].copy_from_slice(&path[last_obs_node + 1..]);
            }
        }
    }

    let state_path = epi::integrate(params, &cu_path, grid)?;
    Ok(PfOutput { log_lik, cu_path: Some(cu_path), states: Some(state_path) })
}

/// Exact likelihood along a deterministic trajectory: evaluates the curve on
/// the grid, integrates once, and sums the per-epoch observation
/// log-likelihoods in the same order as the filter.
pub fn direct_log_likelihood(
    model: &TrajectoryModel,
    params: &EpiParams,
    observations: &[Observation],
    grid: &TimeGrid,
) -> Result<PfOutput> {
    model.validate()?;
    params.validate()?;
    if !model.is_deterministic() {
        return Err(Error::Config(format!(
            "direct evaluation requires a deterministic trajectory, got {}",
            model.kind_name()
        )));
    }
    let kernel = Kernel::new(params);
    let epochs = build_epochs(observations, grid)?;
    let mut noop = substream(0, &[]);
    let cu_path = traj::sample_path(model, grid, &mut noop)?;
    let delta = grid.delta_months();

    let mut log_lik = 0.0;
    let mut i = kernel.initial_infected();
    let mut prev_node = 0usize;
    let mut stable = true;
    'epochs: for epoch in &epochs {
        for node in prev_node..epoch.node {
            match kernel.step(i, cu_path[node], delta) {
                Some(next) => i = next,
                None => {
                    stable = false;
                    break 'epochs;
                }
            }
        }
        log_lik += epoch_weight(&epoch.items, &i);
        prev_node = epoch.node;
    }
    if !stable || log_lik == f64::NEG_INFINITY {
        return Ok(PfOutput {
            log_lik: f64::NEG_INFINITY,
            cu_path: Some(cu_path),
            states: None,
        });
    }
    let states = epi::integrate(params, &cu_path, grid)?;
    Ok(PfOutput { log_lik, cu_path: Some(cu_path), states: Some(states) })
}
