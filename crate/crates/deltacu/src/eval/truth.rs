//! Simulated-truth generation for the estimator ensemble.
//!
//! Each replicate owns a stratification bin for its true condom-use change
//! and redraws candidate truths until the bin, the 2010 prevalence window,
//! and the post-1995 shift-time filter are all satisfied. Epidemic
//! parameters always come from their survey priors; the trajectory comes
//! from the configured generator (step or sigmoid).

use rand::Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use crate::epi::{self, EpiParams, EpiState, Observation, Stratum};
use crate::grid::TimeGrid;
use crate::inference::{ModelKind, Prior, ThetaSpec, ThetaVector};
use crate::rng::{stream, substream};
use crate::traj::{self, TrajectoryModel};
use crate::{Error, Result};

/// Which family generates the true trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    Step,
    DSigm,
}

impl TruthKind {
    pub fn name(&self) -> &'static str {
        match self {
            TruthKind::Step => "step",
            TruthKind::DSigm => "dsigm",
        }
    }
}

impl std::str::FromStr for TruthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(TruthKind::Step),
            "dsigm" => Ok(TruthKind::DSigm),
            other => Err(Error::Config(format!(
                "unknown truth generator {other:?} (expected step|dsigm)"
            ))),
        }
    }
}

/// One scheduled synthetic survey.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    pub time: f64,
    pub stratum: Stratum,
    pub sample_size: u32,
}

/// Plausibility filters applied to candidate truths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthFilters {
    /// FSW prevalence window at 2010.
    pub prev_min: f64,
    pub prev_max: f64,
    /// Trajectory shift times at or before this year are rejected.
    pub t_in_min: f64,
}

impl Default for TruthFilters {
    fn default() -> Self {
        TruthFilters { prev_min: 0.02, prev_max: 0.40, t_in_min: 1995.0 }
    }
}

/// An accepted simulated truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truth {
    pub params: EpiParams,
    pub model: TrajectoryModel,
    pub cu_path: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<EpiState>,
    pub delta_cu: f64,
    /// Prior draws consumed before acceptance.
    pub attempts: u64,
}

fn sample_epi(rng: &mut impl Rng) -> EpiParams {
    // The epidemic block is shared by every family; pad the trajectory slots
    // so the usual assembly helper can be reused.
    let spec = ThetaSpec::for_model(ModelKind::Bm);
    let mut v: Vec<f64> = spec
        .coords
        .iter()
        .take(crate::inference::N_EPI_COORDS)
        .map(|c| c.prior.sample(rng))
        .collect();
    v.push(0.5);
    v.push(1.0);
    spec.epi_params(&ThetaVector(v))
}

fn sample_model(
    kind: TruthKind,
    bin_lo: f64,
    bin_hi: f64,
    t_a: f64,
    t_b: f64,
    rng: &mut impl Rng,
) -> TrajectoryModel {
    match kind {
        TruthKind::Step => {
            // Force the change into the bin: the step height is the change
            // whenever the switch lands strictly inside the window.
            let delta = bin_lo + (bin_hi - bin_lo) * rng.random::<f64>();
            let cu0 = (1.0 - delta) * rng.random::<f64>();
            let t_in = t_a + (t_b - t_a) * rng.random::<f64>();
            TrajectoryModel::Step { cu0, cu1: cu0 + delta, t_in }
        }
        TruthKind::DSigm => {
            let cu0 = rng.random::<f64>();
            let eta = rng.random::<f64>();
            let k = Prior::HalfNormal { shift: 0.0, sigma: 1000.0 }.sample(rng);
            let t_in = 1985.0 + 24.0 * rng.random::<f64>();
            TrajectoryModel::DSigm { cu0, eta, k, t_in }
        }
    }
}

/// Draw one truth for the given bin, rejecting candidates until every
/// filter passes or the budget is exhausted.
#[allow(clippy::too_many_arguments)]
pub fn generate_truth(
    kind: TruthKind,
    bin_lo: f64,
    bin_hi: f64,
    filters: &TruthFilters,
    grid: &TimeGrid,
    t_a: f64,
    t_b: f64,
    seed: u64,
    replicate: u64,
    budget: u64,
) -> Result<Truth> {
    let node_2010 = grid.nearest_node(2010.0)?;
    grid.nearest_node(t_a)?;
    grid.nearest_node(t_b)?;
    for attempt in 0..budget {
        let mut rng = substream(seed, &[stream::TRUTH, replicate, attempt]);
        let params = sample_epi(&mut rng);
        let model = sample_model(kind, bin_lo, bin_hi, t_a, t_b, &mut rng);
        let t_in = match &model {
            TrajectoryModel::Step { t_in, .. } | TrajectoryModel::DSigm { t_in, .. } => *t_in,
            _ => unreachable!(),
        };
        if t_in <= filters.t_in_min {
            continue;
        }
        if model.validate().is_err() {
            continue;
        }
        let cu_path = traj::sample_path(&model, grid, &mut rng)?;
        let delta = traj::delta_cu(&cu_path, grid, t_a, t_b)?;
        if !(delta >= bin_lo && delta < bin_hi) {
            continue;
        }
        let states = match epi::integrate(&params, &cu_path, grid) {
            Ok(s) => s,
            Err(Error::Numerical(_)) => continue,
            Err(e) => return Err(e),
        };
        let prev_2010 = epi::observe_prevalence(&states[node_2010], Stratum::Fsw);
        if !(filters.prev_min..=filters.prev_max).contains(&prev_2010) {
            continue;
        }
        return Ok(Truth {
            params,
            model,
            cu_path,
            states,
            delta_cu: delta,
            attempts: attempt + 1,
        });
    }
    Err(Error::Numerical(format!(
        "no acceptable {} truth for bin [{bin_lo}, {bin_hi}) within {budget} draws",
        kind.name()
    )))
}

/// Draw binomial survey counts along the schedule from a truth's state path.
pub fn simulate_observations(
    states: &[EpiState],
    schedule: &[SchedulePoint],
    grid: &TimeGrid,
    rng: &mut impl Rng,
) -> Result<Vec<Observation>> {
    let mut out = Vec::with_capacity(schedule.len());
    for point in schedule {
        if point.sample_size == 0 {
            return Err(Error::Config("schedule sample_size must be >= 1".into()));
        }
        let node = grid.nearest_node(point.time)?;
        let h = epi::observe_prevalence(&states[node], point.stratum);
        let dist = Binomial::new(point.sample_size as u64, h)
            .map_err(|e| Error::Numerical(format!("binomial sampling failed: {e}")))?;
        let positives: u64 = rng.sample(dist);
        let obs = Observation {
            time: point.time,
            stratum: point.stratum,
            positives: positives as u32,
            sample_size: point.sample_size,
        };
        obs.validate()?;
        out.push(obs);
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(out)
}
