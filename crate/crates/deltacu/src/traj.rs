//! Condom-use trajectory priors: logit Brownian motion, deterministic
//! Bertalanffy-Richards (dBR) and empirical sigmoid (dSigm) growth curves,
//! a stochastic growth-curve forward simulator, and a step function for
//! simulation truths.
//!
//! Latent dynamics run in months since 1985.0. Growth rates `k` are per
//! month. The Brownian volatility follows the prior's implied time scale:
//! one unit of `sigma` squared is the logit variance accumulated per year
//! (`x_{j+1} = x_j + sigma*sqrt(delta_months/12)*eps`).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grid::TimeGrid;
use crate::rng::{self, substream};
use crate::{Error, Result};

/// Calendar origin of the latent time axis.
pub const T_ORIGIN: f64 = 1985.0;
/// Default endpoints of the headline estimand `delta_cu` (April 2009).
pub const DELTA_CU_T_A: f64 = 2003.0;
pub const DELTA_CU_T_B: f64 = 2009.25;

/// Upper guard on the dBR shape parameter; the prior mass above is negligible.
pub const M_CAP: f64 = 1e6;

const HALF_NORMAL_SIGMA: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrajectoryModel {
    Bm {
        cu0: f64,
        sigma: f64,
    },
    Dbr {
        cu0: f64,
        eta: f64,
        m: f64,
        t_in: f64,
    },
    #[serde(rename = "dsigm")]
    DSigm {
        cu0: f64,
        eta: f64,
        k: f64,
        t_in: f64,
    },
    /// Geometric-diffusion perturbation of a deterministic growth curve;
    /// forward simulation only, never an inference prior.
    StochGrowth {
        base: Box<TrajectoryModel>,
        sigma: f64,
    },
    /// Constant `cu0` before `t_in`, constant `cu1` after; simulation
    /// harness only.
    Step {
        cu0: f64,
        cu1: f64,
        t_in: f64,
    },
}

impl TrajectoryModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            TrajectoryModel::Bm { cu0, sigma } => {
                check_unit("cu0", *cu0)?;
                if !sigma.is_finite() || *sigma < 0.0 {
                    return Err(Error::Config(format!("sigma={sigma} must be >= 0")));
                }
                Ok(())
            }
            TrajectoryModel::Dbr { cu0, eta, m, t_in } => {
                check_unit("cu0", *cu0)?;
                check_unit("eta", *eta)?;
                check_t_in(*t_in)?;
                if !(*m >= 1.0 + 1e-9) {
                    return Err(Error::Config(format!("m={m} must exceed 1")));
                }
                dbr_coefficients(*cu0, *eta, *m, *t_in).map(|_| ())
            }
            TrajectoryModel::DSigm { cu0, eta, k, t_in } => {
                check_unit("cu0", *cu0)?;
                check_unit("eta", *eta)?;
                check_t_in(*t_in)?;
                if eta < cu0 {
                    return Err(Error::Config(format!("eta={eta} below cu0={cu0}")));
                }
                if !(*k > 0.0) {
                    return Err(Error::Config(format!("k={k} must be positive")));
                }
                Ok(())
            }
            TrajectoryModel::StochGrowth { base, sigma } => {
                if !sigma.is_finite() || *sigma < 0.0 {
                    return Err(Error::Config(format!("sigma={sigma} must be >= 0")));
                }
                match base.as_ref() {
                    TrajectoryModel::Dbr { .. } | TrajectoryModel::DSigm { .. } => base.validate(),
                    other => Err(Error::Config(format!(
                        "stoch_growth base must be dbr or dsigm, got {}",
                        other.kind_name()
                    ))),
                }
            }
            TrajectoryModel::Step { cu0, cu1, .. } => {
                check_unit("cu0", *cu0)?;
                check_unit("cu1", *cu1)
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TrajectoryModel::Bm { .. } => "bm",
            TrajectoryModel::Dbr { .. } => "dbr",
            TrajectoryModel::DSigm { .. } => "dsigm",
            TrajectoryModel::StochGrowth { .. } => "stoch_growth",
            TrajectoryModel::Step { .. } => "step",
        }
    }

    /// True when the path is a function of the parameters alone.
    pub fn is_deterministic(&self) -> bool {
        match self {
            TrajectoryModel::Bm { .. } => false,
            TrajectoryModel::StochGrowth { sigma, .. } => *sigma == 0.0,
            _ => true,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name}={v} outside [0,1]")))
    }
}

fn check_t_in(t_in: f64) -> Result<()> {
    if (T_ORIGIN..=2009.0).contains(&t_in) {
        Ok(())
    } else {
        Err(Error::Config(format!("t_in={t_in} outside [1985, 2009]")))
    }
}

#[inline]
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn months_since_origin(t_year: f64) -> f64 {
    (t_year - T_ORIGIN) * 12.0
}

// ---------------------------------------------------------------------------
// Brownian motion on the logit scale
// ---------------------------------------------------------------------------

/// Forward-sample a logit-BM path on the grid: `x0 = logit(cu0)`,
/// independent normal increments of sd `sigma*sqrt(delta/12)`.
pub fn bm_sample_path<R: Rng + ?Sized>(
    cu0: f64,
    sigma: f64,
    grid: &TimeGrid,
    rng: &mut R,
) -> Vec<f64> {
    let sd = sigma * (grid.delta_months() / 12.0).sqrt();
    let mut x = logit(cu0);
    let mut path = Vec::with_capacity(grid.n_nodes());
    path.push(cu0);
    for _ in 0..grid.n_steps() {
        let eps: f64 = rng.sample(StandardNormal);
        x += sd * eps;
        path.push(logistic(x));
    }
    path
}

// ---------------------------------------------------------------------------
// Deterministic Bertalanffy-Richards
// ---------------------------------------------------------------------------

/// Reduced dBR coefficients. With `R = (eta/cu0)^(m-1)` the curve is
/// `CU(t) = eta * exp(-softplus(ln(R-1) - k*t_m) / (m-1))`, `t_m` months
/// since 1985, which anchors `CU(1985) = cu0` and the inflection at `t_in`.
#[derive(Debug, Clone, Copy)]
pub struct DbrCoef {
    pub eta: f64,
    pub m_minus_1: f64,
    pub ln_r1: f64,
    pub k: f64,
}

impl DbrCoef {
    /// Evaluate from the log of the latent decay variable (`ln x`, with
    /// `x(0)=1` and deterministically `ln x = -k*t_m`). Shared by the
    /// closed-form curve and the stochastic-growth map so that the
    /// zero-volatility simulator reduces to the curve bit-for-bit.
    #[inline]
    pub fn eval_lnx(&self, lnx: f64) -> f64 {
        self.eta * (-softplus(self.ln_r1 + lnx) / self.m_minus_1).exp()
    }

    /// Evaluate at months since 1985.
    #[inline]
    pub fn eval_months(&self, t_m: f64) -> f64 {
        self.eval_lnx(-self.k * t_m)
    }
}

/// Recover `(B, k)` from `(cu0, eta, m, t_in)`: the boundary condition
/// `CU(1985)=cu0` gives `B = 1-(eta/cu0)^(m-1)` explicitly, and the
/// inflection relation `k*t_in = ln(B/(1-m))` then gives `k` in closed form
/// (the unique root of the one-dimensional system). Everything is kept in
/// logs so the large-`m` regime stays finite.
pub fn dbr_coefficients(cu0: f64, eta: f64, m: f64, t_in: f64) -> Result<DbrCoef> {
    let support_err = || {
        Error::Config(format!(
            "dbr support violated: need cu0 < m^(1/(1-m))*eta (cu0={cu0}, eta={eta}, m={m}, t_in={t_in})"
        ))
    };
    if !(m > 1.0) || !(cu0 > 0.0) || !(eta > 0.0) || eta > 1.0 || cu0 >= 1.0 {
        return Err(support_err());
    }
    if eta <= cu0 {
        return Err(support_err());
    }
    let t_in_m = months_since_origin(t_in);
    if !(t_in_m > 0.0) {
        return Err(Error::Config(format!("t_in={t_in} must lie strictly after 1985")));
    }
    let a = (m - 1.0) * (eta / cu0).ln(); // ln R > 0
    let ln_r1 = a + (-(-a).exp()).ln_1p(); // ln(R - 1)
    let k = (ln_r1 - (m - 1.0).ln()) / t_in_m;
    if !(k > 0.0) {
        return Err(support_err());
    }
    Ok(DbrCoef { eta, m_minus_1: m - 1.0, ln_r1, k })
}

/// Closed-form dBR curve at calendar time `t`.
pub fn dbr_curve(cu0: f64, eta: f64, m: f64, t_in: f64, t: f64) -> Result<f64> {
    let coef = dbr_coefficients(cu0, eta, m, t_in)?;
    Ok(coef.eval_months(months_since_origin(t)))
}

// ---------------------------------------------------------------------------
// Deterministic empirical sigmoid
// ---------------------------------------------------------------------------

/// Coefficients of `CU(t) = a + b/(1 + c*x(t))` with `x(t) = e^(-k*t_m)`,
/// `x(0) = 1`, `c = e^(k*t_in_m)`: `b = (1 + 1/c)(eta - cu0)`, `a = eta - b`.
/// Evaluated as `a + b*logistic(k*t_m - k*t_in_m)` for stability at large `k`.
#[derive(Debug, Clone, Copy)]
pub struct DSigmCoef {
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub k_t_in_m: f64,
}

impl DSigmCoef {
    pub fn new(cu0: f64, eta: f64, k: f64, t_in: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Config(format!("dsigm k={k} must be positive and finite")));
        }
        if eta < cu0 {
            return Err(Error::Config(format!("dsigm eta={eta} below cu0={cu0}")));
        }
        check_unit("cu0", cu0)?;
        check_unit("eta", eta)?;
        check_t_in(t_in)?;
        let k_t_in_m = k * months_since_origin(t_in);
        let b = (1.0 + (-k_t_in_m).exp()) * (eta - cu0);
        Ok(DSigmCoef { a: eta - b, b, k, k_t_in_m })
    }

    /// See [`DbrCoef::eval_lnx`]; same sharing contract.
    #[inline]
    pub fn eval_lnx(&self, lnx: f64) -> f64 {
        self.a + self.b * logistic(-(self.k_t_in_m + lnx))
    }

    #[inline]
    pub fn eval_months(&self, t_m: f64) -> f64 {
        self.eval_lnx(-self.k * t_m)
    }
}

/// Closed-form dSigm curve at calendar time `t`.
pub fn dsigm_curve(cu0: f64, eta: f64, k: f64, t_in: f64, t: f64) -> Result<f64> {
    let coef = DSigmCoef::new(cu0, eta, k, t_in)?;
    Ok(coef.eval_months(months_since_origin(t)))
}

// ---------------------------------------------------------------------------
// Stochastic growth curve
// ---------------------------------------------------------------------------

enum GrowthMap {
    Dbr(DbrCoef),
    DSigm(DSigmCoef),
}

impl GrowthMap {
    fn from_base(base: &TrajectoryModel) -> Result<(Self, f64)> {
        match base {
            TrajectoryModel::Dbr { cu0, eta, m, t_in } => {
                let c = dbr_coefficients(*cu0, *eta, *m, *t_in)?;
                Ok((GrowthMap::Dbr(c), c.k))
            }
            TrajectoryModel::DSigm { cu0, eta, k, t_in } => {
                let c = DSigmCoef::new(*cu0, *eta, *k, *t_in)?;
                Ok((GrowthMap::DSigm(c), c.k))
            }
            other => Err(Error::Config(format!(
                "stoch_growth base must be dbr or dsigm, got {}",
                other.kind_name()
            ))),
        }
    }

    #[inline]
    fn eval_lnx(&self, lnx: f64) -> f64 {
        match self {
            GrowthMap::Dbr(c) => c.eval_lnx(lnx),
            GrowthMap::DSigm(c) => c.eval_lnx(lnx),
        }
    }
}

/// Forward-simulate the geometric diffusion `dx = -k x dt + sigma x dB`
/// (Euler-Maruyama on `ln x`, which is exact for this equation) and map
/// through the base curve's `x -> CU` form. Values stay strictly below
/// `eta`; with `sigma = 0` the output equals the base curve at every node.
pub fn stoch_growth_sample_path<R: Rng + ?Sized>(
    base: &TrajectoryModel,
    sigma: f64,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::Config(format!("sigma={sigma} must be >= 0")));
    }
    let (map, k) = GrowthMap::from_base(base)?;
    let delta = grid.delta_months();
    let drift = -k - 0.5 * sigma * sigma; // per month, on ln x
    let noise_sd = sigma * delta.sqrt();
    let mut walk = 0.0;
    let mut path = Vec::with_capacity(grid.n_nodes());
    path.push(map.eval_lnx(0.0));
    for j in 1..grid.n_nodes() {
        let eps: f64 = rng.sample(StandardNormal);
        walk += noise_sd * eps;
        let lnx = drift * grid.node_month(j) + walk;
        path.push(map.eval_lnx(lnx));
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Step function
// ---------------------------------------------------------------------------

/// `cu0` on nodes strictly before `t_in`, `cu1` from the first node at or
/// after `t_in`.
pub fn step_path(cu0: f64, cu1: f64, t_in: f64, grid: &TimeGrid) -> Vec<f64> {
    let switch = if t_in <= grid.t0() {
        0
    } else {
        let steps = (t_in - grid.t0()) * 12.0 / grid.delta_months();
        steps.ceil() as usize // first node with node_year >= t_in
    };
    (0..grid.n_nodes()).map(|j| if j >= switch { cu1 } else { cu0 }).collect()
}

// ---------------------------------------------------------------------------
// Unified sampling, prior density, estimand
// ---------------------------------------------------------------------------

/// Draw (or evaluate) a trajectory on the grid. Deterministic models ignore
/// the stream.
pub fn sample_path<R: Rng + ?Sized>(
    model: &TrajectoryModel,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Vec<f64>> {
    model.validate()?;
    match model {
        TrajectoryModel::Bm { cu0, sigma } => Ok(bm_sample_path(*cu0, *sigma, grid, rng)),
        TrajectoryModel::Dbr { cu0, eta, m, t_in } => {
            let coef = dbr_coefficients(*cu0, *eta, *m, *t_in)?;
            Ok((0..grid.n_nodes()).map(|j| coef.eval_months(grid.node_month(j))).collect())
        }
        TrajectoryModel::DSigm { cu0, eta, k, t_in } => {
            let coef = DSigmCoef::new(*cu0, *eta, *k, *t_in)?;
            Ok((0..grid.n_nodes()).map(|j| coef.eval_months(grid.node_month(j))).collect())
        }
        TrajectoryModel::StochGrowth { base, sigma } => {
            stoch_growth_sample_path(base, *sigma, grid, rng)
        }
        TrajectoryModel::Step { cu0, cu1, t_in } => Ok(step_path(*cu0, *cu1, *t_in, grid)),
    }
}

fn half_normal_ln_pdf(v: f64, sigma: f64) -> f64 {
    if v <= 0.0 {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2
        - sigma.ln()
        - 0.5 * (2.0 * std::f64::consts::PI).ln()
        - v * v / (2.0 * sigma * sigma)
}

/// Joint log prior density of the model's trajectory parameters:
/// `cu0, eta ~ U(0,1)`, `sigma ~ U(0,2)`, `t_in ~ U(1985, 2009)`,
/// `m - 1` and `k` half-normal with scale 1000, and -inf off-support
/// (including the joint dBR constraint `cu0 < m^(1/(1-m))*eta` and
/// `eta >= cu0` for dSigm). Step and stochastic-growth trajectories are not
/// inference priors and always return -inf.
pub fn trajectory_log_prior(model: &TrajectoryModel) -> f64 {
    match model {
        TrajectoryModel::Bm { cu0, sigma } => {
            if !(*cu0 > 0.0 && *cu0 < 1.0) || !(*sigma > 0.0 && *sigma < 2.0) {
                return f64::NEG_INFINITY;
            }
            -std::f64::consts::LN_2
        }
        TrajectoryModel::Dbr { cu0, eta, m, t_in } => {
            if !(*cu0 > 0.0 && *cu0 < 1.0)
                || !(*eta > 0.0 && *eta < 1.0)
                || !(*t_in > T_ORIGIN && *t_in < 2009.0)
                || !(*m > 1.0)
                || *m > M_CAP
                || dbr_coefficients(*cu0, *eta, *m, *t_in).is_err()
            {
                return f64::NEG_INFINITY;
            }
            half_normal_ln_pdf(m - 1.0, HALF_NORMAL_SIGMA) - 24.0f64.ln()
        }
        TrajectoryModel::DSigm { cu0, eta, k, t_in } => {
            if !(*cu0 > 0.0 && *cu0 < 1.0)
                || !(*eta > 0.0 && *eta < 1.0)
                || !(*t_in > T_ORIGIN && *t_in < 2009.0)
                || eta < cu0
            {
                return f64::NEG_INFINITY;
            }
            half_normal_ln_pdf(*k, HALF_NORMAL_SIGMA) - 24.0f64.ln()
        }
        TrajectoryModel::StochGrowth { .. } | TrajectoryModel::Step { .. } => f64::NEG_INFINITY,
    }
}

/// `CU` at the node nearest `t_b` minus `CU` at the node nearest `t_a`.
pub fn delta_cu(cu_path: &[f64], grid: &TimeGrid, t_a: f64, t_b: f64) -> Result<f64> {
    if cu_path.len() != grid.n_nodes() {
        return Err(Error::Config(format!(
            "cu_path has {} values for a grid of {} nodes",
            cu_path.len(),
            grid.n_nodes()
        )));
    }
    let a = grid.nearest_node(t_a)?;
    let b = grid.nearest_node(t_b)?;
    Ok(cu_path[b] - cu_path[a])
}

/// Monte-Carlo quantiles of the prior-implied `delta_cu` for a model family,
/// drawing trajectory parameters from their priors. Returns the draws.
pub fn prior_delta_cu_draws(
    kind: &str,
    grid: &TimeGrid,
    t_a: f64,
    t_b: f64,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n_draws);
    for i in 0..n_draws {
        let mut rng = substream(seed, &[rng::stream::PRIOR, i as u64]);
        let model = sample_trajectory_prior(kind, &mut rng)?;
        let path = sample_path(&model, grid, &mut rng)?;
        out.push(delta_cu(&path, grid, t_a, t_b)?);
    }
    Ok(out)
}

/// Draw trajectory parameters from their joint prior (rejection sampling on
/// the support constraints).
pub fn sample_trajectory_prior<R: Rng + ?Sized>(
    kind: &str,
    rng: &mut R,
) -> Result<TrajectoryModel> {
    match kind {
        "bm" => Ok(TrajectoryModel::Bm {
            cu0: rng.random::<f64>(),
            sigma: 2.0 * rng.random::<f64>(),
        }),
        "dbr" => loop {
            let cu0 = rng.random::<f64>();
            let eta = rng.random::<f64>();
            let z: f64 = rng.sample(StandardNormal);
            let m = 1.0 + z.abs() * HALF_NORMAL_SIGMA;
            let t_in = T_ORIGIN + 24.0 * rng.random::<f64>();
            if m > M_CAP {
                continue;
            }
            if dbr_coefficients(cu0, eta, m, t_in).is_ok() {
                return Ok(TrajectoryModel::Dbr { cu0, eta, m, t_in });
            }
        },
        "dsigm" => loop {
            let cu0 = rng.random::<f64>();
            let eta = rng.random::<f64>();
            let z: f64 = rng.sample(StandardNormal);
            let k = z.abs() * HALF_NORMAL_SIGMA;
            let t_in = T_ORIGIN + 24.0 * rng.random::<f64>();
            if eta >= cu0 && k > 0.0 && t_in > T_ORIGIN {
                return Ok(TrajectoryModel::DSigm { cu0, eta, k, t_in });
            }
        },
        other => Err(Error::Config(format!("unknown trajectory model {other:?}"))),
    }
}
