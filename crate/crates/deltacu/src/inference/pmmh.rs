//! Particle-marginal Metropolis-Hastings over the joint parameter vector.
//!
//! The random walk lives in the unconstrained space produced by the
//! coordinate transforms, so the target there is
//! `log L(theta) + log prior(theta) + log |d theta / d z|`. The chain starts
//! at the highest-posterior-density point among `init_attempts` prior draws
//! (a cheap pre-exploration that replaces lengthy cold-start transients).
//! The proposal covariance adapts from the running sample covariance of the
//! visited states scaled by 2.38^2/d times a global factor tuned toward the
//! 0.234 acceptance target; both are frozen partway through burn-in so the
//! retained chain is a plain Metropolis sampler. The likelihood estimate of
//! the current state is carried, never recomputed, which keeps the
//! pseudo-marginal target exact.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::epi::Observation;
use crate::grid::TimeGrid;
use crate::inference::filter::{direct_log_likelihood, particle_filter, PfOutput};
use crate::inference::theta::{ModelKind, ThetaSpec, ThetaVector};
use crate::rng::{derive_seed, stream, substream};
use crate::traj::{self, delta_cu};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmmhConfig {
    /// Number of MCMC iterations (post-initialization draws recorded).
    pub iterations: usize,
    /// Particle count for the likelihood estimate (stochastic priors only;
    /// deterministic priors always use one direct evaluation).
    pub particles: usize,
    /// Pre-adaptation proposal standard deviation in transformed space.
    pub base_scale: f64,
    /// Fraction of the chain discarded as burn-in by downstream summaries.
    pub burn_in_frac: f64,
    /// Adaptation stops after this fraction of the burn-in phase.
    pub adapt_freeze_frac: f64,
    /// Store the full condom-use path every `path_thin` iterations.
    pub path_thin: usize,
    /// Record the proposal covariance every this many iterations (0 = never).
    pub cov_snapshot_every: usize,
    /// Maximum prior draws attempted when searching for a finite-likelihood
    /// starting point.
    pub init_attempts: usize,
    /// Window endpoints (years) for the reported condom-use change.
    pub delta_t_a: f64,
    pub delta_t_b: f64,
    pub seed: u64,
}

impl Default for PmmhConfig {
    fn default() -> Self {
        PmmhConfig {
            iterations: 50_000,
            particles: 1000,
            base_scale: 0.05,
            burn_in_frac: 0.2,
            adapt_freeze_frac: 0.5,
            path_thin: 10,
            cov_snapshot_every: 5000,
            init_attempts: 1000,
            delta_t_a: traj::DELTA_CU_T_A,
            delta_t_b: traj::DELTA_CU_T_B,
            seed: 1,
        }
    }
}

impl PmmhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.particles == 0 {
            return Err(Error::Config("particles must be >= 1".into()));
        }
        if !(self.base_scale > 0.0) {
            return Err(Error::Config("base_scale must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_frac) {
            return Err(Error::Config("burn_in_frac must lie in [0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.adapt_freeze_frac) {
            return Err(Error::Config("adapt_freeze_frac must lie in [0,1]".into()));
        }
        if self.init_attempts == 0 {
            return Err(Error::Config("init_attempts must be >= 1".into()));
        }
        if !(self.delta_t_b > self.delta_t_a) {
            return Err(Error::Config("delta window must have t_b > t_a".into()));
        }
        Ok(())
    }
}

/// Complete record of one PMMH run.
#[derive(Debug, Clone)]
pub struct Chain {
    pub kind: ModelKind,
    pub names: Vec<String>,
    pub grid: TimeGrid,
    pub seed: u64,
    pub dim: usize,
    /// Row-major draws on the natural (constrained) scale, iterations x dim.
    pub draws: Vec<f64>,
    pub log_liks: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Condom-use change over `[t_a, t_b]` of the path carried at each draw.
    pub delta_cus: Vec<f64>,
    /// Thinned full condom-use paths as (iteration, path-over-grid).
    pub paths: Vec<(usize, Vec<f64>)>,
    /// Flattened d x d proposal covariances as (iteration, matrix).
    pub cov_snapshots: Vec<(usize, Vec<f64>)>,
    pub t_a: f64,
    pub t_b: f64,
    pub burn_in_frac: f64,
}

impl Chain {
    pub fn n_draws(&self) -> usize {
        self.log_liks.len()
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coord_column(&self, c: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|i| self.draws[i * self.dim + c]).collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    pub fn burn_in_len(&self) -> usize {
        (self.n_draws() as f64 * self.burn_in_frac).floor() as usize
    }
}

/// Scaled empirical covariance `(2.38^2/d) * (cov + 1e-8 I)` from a history
/// of states in transformed space. With fewer than two states it falls back
/// to the isotropic base proposal `(base_scale^2) * I`.
pub fn adapt_proposal(history: &[Vec<f64>], base_scale: f64) -> DMatrix<f64> {
    let d = history.first().map_or(0, Vec::len);
    assert!(d > 0, "adapt_proposal needs at least one state");
    let n = history.len();
    if n < 2 {
        return DMatrix::identity(d, d) * (base_scale * base_scale);
    }
    let scale = 2.38 * 2.38 / d as f64;
    let mut mean = DVector::zeros(d);
    for h in history {
        mean += DVector::from_column_slice(h);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for h in history {
        let delta = DVector::from_column_slice(h) - &mean;
        cov += &delta * delta.transpose();
    }
    cov /= (n - 1) as f64;
    (cov + DMatrix::identity(d, d) * 1e-8) * scale
}

/// Standard Metropolis accept decision on log densities. Non-finite
/// proposals are always rejected; `-inf` current states always accept a
/// finite proposal.
pub fn mh_accept<R: Rng + ?Sized>(rng: &mut R, log_current: f64, log_proposal: f64) -> bool {
    if log_proposal == f64::NEG_INFINITY || log_proposal.is_nan() {
        return false;
    }
    let log_alpha = log_proposal - log_current;
    if log_alpha >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_alpha
}

/// Welford running mean/covariance of the visited chain states.
struct RunningMoments {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl RunningMoments {
    fn new(d: usize) -> Self {
        RunningMoments { n: 0, mean: DVector::zeros(d), m2: DMatrix::zeros(d, d) }
    }

    fn update(&mut self, z: &DVector<f64>) {
        self.n += 1;
        let delta = z - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = z - &self.mean;
        self.m2 += delta * delta2.transpose();
    }

    fn cov(&self) -> DMatrix<f64> {
        self.m2.clone() / (self.n - 1) as f64
    }
}

struct Eval {
    log_lik: f64,
    log_target: f64,
    path: Vec<f64>,
}

fn evaluate(
    spec: &ThetaSpec,
    theta: &ThetaVector,
    observations: &[Observation],
    grid: &TimeGrid,
    particles: usize,
    filter_seed: u64,
) -> Result<Option<Eval>> {
    let lp = spec.log_prior(theta);
    if lp == f64::NEG_INFINITY {
        return Ok(None);
    }
    let params = spec.epi_params(theta);
    let model = spec.trajectory(theta);
    let result = if model.is_deterministic() {
        direct_log_likelihood(&model, &params, observations, grid)
    } else {
        particle_filter(&model, &params, observations, grid, particles, filter_seed)
    };
    let out: PfOutput = match result {
        Ok(o) => o,
        // Numerical failure (e.g. the retained path cannot be integrated)
        // rejects the parameter value rather than aborting the chain.
        Err(Error::Numerical(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    if out.log_lik == f64::NEG_INFINITY {
        return Ok(None);
    }
    let path = match out.cu_path {
        Some(p) => p,
        None => return Ok(None),
    };
    let log_target = out.log_lik + lp + spec.log_jacobian(theta);
    Ok(Some(Eval { log_lik: out.log_lik, log_target, path }))
}

/// Run one PMMH chain. Observations may be empty, in which case the chain
/// samples the prior (every likelihood estimate is exactly zero).
pub fn pmmh(
    kind: ModelKind,
    observations: &[Observation],
    grid: &TimeGrid,
    cfg: &PmmhConfig,
) -> Result<Chain> {
    cfg.validate()?;
    for obs in observations {
        obs.validate()?;
        grid.nearest_node(obs.time)?;
    }
    let spec = ThetaSpec::for_model(kind);
    let d = spec.dim();
    let seed = cfg.seed;

    // Starting point: the best of `init_attempts` prior draws by posterior
    // density, so short chains spend their budget in the relevant region
    // instead of on a cold-start transient.
    let mut start: Option<(ThetaVector, Eval)> = None;
    for attempt in 0..cfg.init_attempts as u64 {
        let mut rng = substream(seed, &[stream::INIT, attempt]);
        let theta = spec.sample_prior(&mut rng);
        let fseed = derive_seed(seed, &[stream::INIT, attempt, stream::FILTER]);
        if let Some(eval) =
            evaluate(&spec, &theta, observations, grid, cfg.particles, fseed)?
        {
            if start.as_ref().is_none_or(|(_, best)| eval.log_target > best.log_target) {
                start = Some((theta, eval));
            }
        }
    }
    let (mut theta, mut current) = start.ok_or_else(|| {
        Error::Numerical(format!(
            "no finite-likelihood starting point in {} prior draws",
            cfg.init_attempts
        ))
    })?;
    let mut z = DVector::from_vec(spec.transform(&theta));
    let mut current_delta = delta_cu(&current.path, grid, cfg.delta_t_a, cfg.delta_t_b)?;

    let m = cfg.iterations;
    let burn = (m as f64 * cfg.burn_in_frac).floor() as usize;
    let freeze_at = (burn as f64 * cfg.adapt_freeze_frac).floor() as usize;
    let scale = 2.38 * 2.38 / d as f64;
    let base_chol = DMatrix::identity(d, d) * cfg.base_scale;
    let mut chol_l = base_chol.clone();
    let mut cov_unit = DMatrix::identity(d, d) * (cfg.base_scale * cfg.base_scale);
    let mut moments = RunningMoments::new(d);
    moments.update(&z);
    // Global proposal scale, tuned toward the 0.234 acceptance target by a
    // stochastic-approximation update while adaptation is live.
    const TARGET_ACCEPT: f64 = 0.234;
    let mut log_lambda = 0.0f64;

    let mut chain = Chain {
        kind,
        names: spec.names().iter().map(|s| s.to_string()).collect(),
        grid: grid.clone(),
        seed,
        dim: d,
        draws: Vec::with_capacity(m * d),
        log_liks: Vec::with_capacity(m),
        accepted: Vec::with_capacity(m),
        delta_cus: Vec::with_capacity(m),
        paths: Vec::new(),
        cov_snapshots: Vec::new(),
        t_a: cfg.delta_t_a,
        t_b: cfg.delta_t_b,
        burn_in_frac: cfg.burn_in_frac,
    };

    let mut xi = DVector::zeros(d);
    for iter in 0..m {
        if iter < freeze_at && moments.n >= 2 {
            let cand = (moments.cov() + DMatrix::identity(d, d) * 1e-8) * scale;
            if let Some(chol) = Cholesky::new(cand.clone()) {
                chol_l = chol.unpack();
                cov_unit = cand;
            }
        }

        let mut prop_rng = substream(seed, &[stream::MH_PROPOSAL, iter as u64]);
        for v in xi.iter_mut() {
            *v = prop_rng.sample(StandardNormal);
        }
        let z_star = &z + (&chol_l * &xi) * (log_lambda / 2.0).exp();
        let theta_star = spec.untransform(z_star.as_slice());
        let fseed = derive_seed(seed, &[stream::FILTER, iter as u64]);
        let proposal = evaluate(&spec, &theta_star, observations, grid, cfg.particles, fseed)?;

        let mut accept_rng = substream(seed, &[stream::MH_ACCEPT, iter as u64]);
        let mut alpha = 0.0f64;
        let accepted = match proposal {
            Some(eval) => {
                let a = (eval.log_target - current.log_target).min(0.0).exp();
                if a.is_finite() {
                    alpha = a;
                }
                if mh_accept(&mut accept_rng, current.log_target, eval.log_target) {
                    theta = theta_star;
                    z = z_star;
                    current_delta = delta_cu(&eval.path, grid, cfg.delta_t_a, cfg.delta_t_b)?;
                    current = eval;
                    true
                } else {
                    false
                }
            }
            None => false,
        };
        if iter < freeze_at {
            log_lambda += (alpha - TARGET_ACCEPT) / (1.0 + iter as f64).powf(0.6);
        }

        chain.draws.extend_from_slice(&theta.0);
        chain.log_liks.push(current.log_lik);
        chain.accepted.push(accepted);
        chain.delta_cus.push(current_delta);
        if cfg.path_thin > 0 && iter % cfg.path_thin == 0 {
            chain.paths.push((iter, current.path.clone()));
        }
        if cfg.cov_snapshot_every > 0 && (iter + 1) % cfg.cov_snapshot_every == 0 {
            let effective = &cov_unit * log_lambda.exp();
            chain.cov_snapshots.push((iter + 1, effective.as_slice().to_vec()));
        }
        if iter < freeze_at {
            moments.update(&z);
        }
    }
    Ok(chain)
}
