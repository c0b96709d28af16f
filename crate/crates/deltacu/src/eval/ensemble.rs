//! Replicate ensemble: simulate truths, fit every trajectory prior by
//! PMMH, and score the posterior-median change estimators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epi::Observation;
use crate::eval::metrics::{error_metrics, roc_auc, sensitivity_specificity};
use crate::eval::truth::{
    generate_truth, simulate_observations, SchedulePoint, Truth, TruthFilters, TruthKind,
};
use crate::grid::TimeGrid;
use crate::inference::{pmmh, quantile_sorted, ModelKind, PmmhConfig};
use crate::rng::{derive_seed, stream, substream};
use crate::traj::TrajectoryModel;
use crate::{epi, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub replicates: usize,
    pub truth: TruthKind,
    pub methods: Vec<ModelKind>,
    pub schedule: Vec<SchedulePoint>,
    pub filters: TruthFilters,
    /// Bins of true change: `n_bins` consecutive intervals of `bin_width`
    /// starting at 0; replicate `r` targets bin `r % n_bins`.
    pub n_bins: usize,
    pub bin_width: f64,
    /// Maximum truth candidates per replicate.
    pub rejection_budget: u64,
    /// Classification thresholds `T` reported on.
    pub thresholds: Vec<f64>,
    /// Cap on posterior change draws stored per fitted method.
    pub stored_draws: usize,
    /// PMMH settings template; per-replicate chain seeds are derived from
    /// the ensemble seed, overriding the template's own.
    pub inference: PmmhConfig,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            replicates: 50,
            truth: TruthKind::DSigm,
            methods: vec![ModelKind::Bm, ModelKind::Dbr, ModelKind::DSigm],
            schedule: default_schedule(),
            filters: TruthFilters::default(),
            n_bins: 18,
            bin_width: 0.05,
            rejection_budget: 200_000,
            thresholds: vec![0.2, 0.3, 0.4],
            stored_draws: 1000,
            inference: PmmhConfig::default(),
            seed: 1,
        }
    }
}

/// Survey cadence mirroring the sparse mid-2000s data the method targets:
/// three FSW rounds and one client round, all n=425.
pub fn default_schedule() -> Vec<SchedulePoint> {
    use crate::epi::Stratum::{Client, Fsw};
    vec![
        SchedulePoint { time: 2005.0, stratum: Fsw, sample_size: 425 },
        SchedulePoint { time: 2007.0, stratum: Fsw, sample_size: 425 },
        SchedulePoint { time: 2008.75, stratum: Fsw, sample_size: 425 },
        SchedulePoint { time: 2009.0, stratum: Client, sample_size: 425 },
    ]
}

impl EnsembleConfig {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one inference method required".into()));
        }
        if self.schedule.is_empty() {
            return Err(Error::Config("observation schedule must be non-empty".into()));
        }
        if self.n_bins == 0 || !(self.bin_width > 0.0) {
            return Err(Error::Config("bins must have positive count and width".into()));
        }
        if self.rejection_budget == 0 {
            return Err(Error::Config("rejection_budget must be >= 1".into()));
        }
        if self.stored_draws == 0 {
            return Err(Error::Config("stored_draws must be >= 1".into()));
        }
        self.inference.validate()?;
        for point in &self.schedule {
            grid.nearest_node(point.time)?;
        }
        grid.nearest_node(2010.0)?;
        Ok(())
    }
}

/// Posterior summary of one fitted method on one replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodEstimate {
    pub method: ModelKind,
    pub median: f64,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    pub acceptance_rate: f64,
    pub n_kept: usize,
    /// Thinned post-burn-in posterior draws of the change.
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub bin: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub truth_model: TrajectoryModel,
    pub truth_params: epi::EpiParams,
    pub true_delta_cu: f64,
    pub true_cu_path: Vec<f64>,
    pub truth_attempts: u64,
    pub observations: Vec<Observation>,
    /// One slot per configured method; `None` where the fit failed, with the
    /// reason in the matching `fit_errors` slot.
    pub estimates: Vec<Option<MethodEstimate>>,
    pub fit_errors: Vec<Option<String>>,
}

/// Outcome wrapper: exactly one of `result`/`error` is set, so failed
/// replicates stay in the record instead of vanishing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub bin: usize,
    pub result: Option<ReplicateResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub t_threshold: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: ModelKind,
    pub n_used: usize,
    pub n_failed_fits: usize,
    pub bias: Option<f64>,
    pub mse: Option<f64>,
    pub std: Option<f64>,
    pub thresholds: Vec<ThresholdReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub truth: TruthKind,
    pub replicates: usize,
    pub n_truth_failures: usize,
    pub methods: Vec<MethodReport>,
}

fn fit_method(
    method: ModelKind,
    observations: &[Observation],
    grid: &TimeGrid,
    template: &PmmhConfig,
    chain_seed: u64,
    stored_draws: usize,
) -> Result<MethodEstimate> {
    let mut cfg = template.clone();
    cfg.seed = chain_seed;
    let chain = pmmh(method, observations, grid, &cfg)?;
    let burn = chain.burn_in_len();
    let kept: Vec<f64> = chain.delta_cus[burn..].to_vec();
    if kept.is_empty() {
        return Err(Error::Numerical("no post-burn-in draws".into()));
    }
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let mut sorted = kept.clone();
    sorted.sort_by(f64::total_cmp);
    let step = kept.len().div_ceil(stored_draws).max(1);
    let draws: Vec<f64> = kept.iter().copied().step_by(step).collect();
    Ok(MethodEstimate {
        method,
        median: quantile_sorted(&sorted, 0.5),
        mean,
        q025: quantile_sorted(&sorted, 0.025),
        q975: quantile_sorted(&sorted, 0.975),
        acceptance_rate: chain.acceptance_rate(),
        n_kept: kept.len(),
        draws,
    })
}

fn run_replicate(cfg: &EnsembleConfig, grid: &TimeGrid, replicate: usize) -> ReplicateOutcome {
    let bin = replicate % cfg.n_bins;
    let bin_lo = bin as f64 * cfg.bin_width;
    let bin_hi = bin_lo + cfg.bin_width;
    let truth: Truth = match generate_truth(
        cfg.truth,
        bin_lo,
        bin_hi,
        &cfg.filters,
        grid,
        cfg.inference.delta_t_a,
        cfg.inference.delta_t_b,
        cfg.seed,
        replicate as u64,
        cfg.rejection_budget,
    ) {
        Ok(t) => t,
        Err(e) => {
            return ReplicateOutcome {
                replicate,
                bin,
                result: None,
                error: Some(e.to_string()),
            }
        }
    };
    let mut obs_rng = substream(cfg.seed, &[stream::OBS, replicate as u64]);
    let observations =
        match simulate_observations(&truth.states, &cfg.schedule, grid, &mut obs_rng) {
            Ok(o) => o,
            Err(e) => {
                return ReplicateOutcome {
                    replicate,
                    bin,
                    result: None,
                    error: Some(e.to_string()),
                }
            }
        };

    let mut estimates = Vec::with_capacity(cfg.methods.len());
    let mut fit_errors = Vec::with_capacity(cfg.methods.len());
    for (mi, &method) in cfg.methods.iter().enumerate() {
        let chain_seed = derive_seed(cfg.seed, &[stream::CHAIN, replicate as u64, mi as u64]);
        match fit_method(method, &observations, grid, &cfg.inference, chain_seed, cfg.stored_draws)
        {
            Ok(est) => {
                estimates.push(Some(est));
                fit_errors.push(None);
            }
            Err(e) => {
                estimates.push(None);
                fit_errors.push(Some(e.to_string()));
            }
        }
    }

    ReplicateOutcome {
        replicate,
        bin,
        result: Some(ReplicateResult {
            replicate,
            bin,
            bin_lo,
            bin_hi,
            truth_model: truth.model,
            truth_params: truth.params,
            true_delta_cu: truth.delta_cu,
            true_cu_path: truth.cu_path,
            truth_attempts: truth.attempts,
            observations,
            estimates,
            fit_errors,
        }),
        error: None,
    }
}

/// Score one method across outcomes at the configured thresholds. Failed
/// replicates and failed fits are excluded from every denominator.
fn method_report(
    cfg: &EnsembleConfig,
    outcomes: &[ReplicateOutcome],
    mi: usize,
) -> MethodReport {
    let mut estimates = Vec::new();
    let mut truths = Vec::new();
    let mut n_failed = 0usize;
    for outcome in outcomes {
        if let Some(res) = &outcome.result {
            match &res.estimates[mi] {
                Some(est) => {
                    estimates.push(est.median);
                    truths.push(res.true_delta_cu);
                }
                None => n_failed += 1,
            }
        }
    }
    let err = error_metrics(&estimates, &truths).ok();
    let thresholds = cfg
        .thresholds
        .iter()
        .map(|&t| {
            let n_positive = truths.iter().filter(|&&v| v > t).count();
            let n_negative = truths.len() - n_positive;
            let ss = sensitivity_specificity(&estimates, &truths, t, t).ok();
            let auc = roc_auc(&estimates, &truths, t).ok().map(|(_, a)| a);
            ThresholdReport {
                t_threshold: t,
                n_positive,
                n_negative,
                sensitivity: ss.map(|v| v.0),
                specificity: ss.map(|v| v.1),
                auc,
            }
        })
        .collect();
    MethodReport {
        method: cfg.methods[mi],
        n_used: estimates.len(),
        n_failed_fits: n_failed,
        bias: err.as_ref().map(|m| m.bias),
        mse: err.as_ref().map(|m| m.mse),
        std: err.as_ref().map(|m| m.std),
        thresholds,
    }
}

/// Run the full ensemble. Replicates are independent and execute in
/// parallel; every random stream is derived from the ensemble seed and the
/// replicate index, so the result is identical at any thread count.
pub fn run_ensemble(
    cfg: &EnsembleConfig,
    grid: &TimeGrid,
) -> Result<(Vec<ReplicateOutcome>, EnsembleReport)> {
    cfg.validate(grid)?;
    let outcomes: Vec<ReplicateOutcome> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, grid, r))
        .collect();
    let n_truth_failures = outcomes.iter().filter(|o| o.result.is_none()).count();
    let methods =
        (0..cfg.methods.len()).map(|mi| method_report(cfg, &outcomes, mi)).collect();
    let report = EnsembleReport {
        truth: cfg.truth,
        replicates: cfg.replicates,
        n_truth_failures,
        methods,
    };
    Ok((outcomes, report))
}
