//! Heterosexual HIV transmission dynamics between female sex workers (FSW)
//! and their clients.
//!
//! Six compartments (susceptible/infected for high-risk FSW, low-risk FSW,
//! clients), stored as within-group proportions with equal subgroup sizes
//! N_H = N_L = N_F/2. Condom use `cu` enters the per-act transmission
//! probability as `p*(1 - e*cu)` and is held piecewise-constant over each
//! integration step.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::grid::TimeGrid;
use crate::{Error, Result};

/// Proportions are clamped when within this distance of [0,1]; larger
/// excursions raise a numerical-instability error (too-coarse step).
pub const CLAMP_TOL: f64 = 1e-6;

/// Static biological/behavioural parameters plus 1985 initial conditions.
/// Rates are per month; `e` is condom efficacy; `n` mean acts per encounter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiParams {
    pub p_s: f64,
    pub p_c: f64,
    pub e: f64,
    pub n: f64,
    pub c_h: f64,
    pub c_l: f64,
    pub n_f: f64,
    pub ratio_cf: f64,
    pub mu_s: f64,
    pub mu_c: f64,
    pub alpha: f64,
    pub init_prev_f: f64,
    pub init_prev_c: f64,
}

impl EpiParams {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_s", self.p_s),
            ("p_c", self.p_c),
            ("e", self.e),
            ("init_prev_f", self.init_prev_f),
            ("init_prev_c", self.init_prev_c),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name}={v} outside [0,1]")));
            }
        }
        let positives = [
            ("c_h", self.c_h),
            ("c_l", self.c_l),
            ("n_f", self.n_f),
            ("ratio_cf", self.ratio_cf),
            ("mu_s", self.mu_s),
            ("mu_c", self.mu_c),
            ("alpha", self.alpha),
        ];
        for (name, v) in positives {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name}={v} must be positive")));
            }
        }
        if !self.n.is_finite() || self.n < 1.0 {
            return Err(Error::Config(format!("n={} must be >= 1", self.n)));
        }
        Ok(())
    }

    /// State at 1985: both FSW subgroups start at `init_prev_f`.
    pub fn initial_state(&self) -> EpiState {
        EpiState::from_infected(self.init_prev_f, self.init_prev_f, self.init_prev_c)
    }

    /// Client mixing weight of the high-risk subgroup, C_H/(C_H+C_L)
    /// (equal subgroup sizes).
    pub fn weight_h(&self) -> f64 {
        self.c_h / (self.c_h + self.c_l)
    }
}

/// Within-group susceptible/infected proportions at one time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiState {
    pub s_h: f64,
    pub i_h: f64,
    pub s_l: f64,
    pub i_l: f64,
    pub s_c: f64,
    pub i_c: f64,
}

impl EpiState {
    pub fn from_infected(i_h: f64, i_l: f64, i_c: f64) -> Self {
        EpiState { s_h: 1.0 - i_h, i_h, s_l: 1.0 - i_l, i_l, s_c: 1.0 - i_c, i_c }
    }

    pub fn validate(&self) -> Result<()> {
        let comps = [self.s_h, self.i_h, self.s_l, self.i_l, self.s_c, self.i_c];
        for v in comps {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Numerical(format!("state component {v} outside [0,1]")));
            }
        }
        for (s, i) in [(self.s_h, self.i_h), (self.s_l, self.i_l), (self.s_c, self.i_c)] {
            if (s + i - 1.0).abs() > 1e-9 {
                return Err(Error::Numerical(format!("group proportions sum to {}", s + i)));
            }
        }
        Ok(())
    }
}

/// Population stratum of a prevalence observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Fsw,
    Client,
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stratum::Fsw => "fsw",
            Stratum::Client => "client",
        })
    }
}

impl std::str::FromStr for Stratum {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fsw" => Ok(Stratum::Fsw),
            "client" => Ok(Stratum::Client),
            other => Err(Error::Data(format!("unknown stratum {other:?} (expected fsw|client)"))),
        }
    }
}

/// One prevalence survey: `positives` HIV-positive out of `sample_size`
/// tested at calendar `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub stratum: Stratum,
    pub positives: u32,
    pub sample_size: u32,
}

impl Observation {
    pub fn validate(&self) -> Result<()> {
        if self.sample_size == 0 {
            return Err(Error::Data("sample_size must be positive".into()));
        }
        if self.positives > self.sample_size {
            return Err(Error::Data(format!(
                "positives {} exceed sample_size {}",
                self.positives, self.sample_size
            )));
        }
        if !(1985.0..=2010.0).contains(&self.time) {
            return Err(Error::Data(format!(
                "observation time {} outside modelled horizon [1985, 2010]",
                self.time
            )));
        }
        Ok(())
    }
}

/// Per-month forces of infection `(beta_H, beta_L, beta_C)` at condom-use
/// level `cu`. The client force includes the mean-volume over
/// clients-per-FSW factor ((C_H+C_L)/2)/ratio_CF.
pub fn force_of_infection(params: &EpiParams, cu: f64) -> Result<(f64, f64, f64)> {
    params.validate()?;
    if !(0.0..=1.0).contains(&cu) {
        return Err(Error::Numerical(format!("cu={cu} outside [0,1]")));
    }
    let q_f = 1.0 - (1.0 - params.p_s * (1.0 - params.e * cu)).powf(params.n);
    let q_c = 1.0 - (1.0 - params.p_c * (1.0 - params.e * cu)).powf(params.n);
    Ok((
        params.c_h * q_f,
        params.c_l * q_f,
        q_c * (0.5 * (params.c_h + params.c_l)) / params.ratio_cf,
    ))
}

/// Time-derivatives `(ds_H, di_H, ds_L, di_L, ds_C, di_C)` of the proportion
/// state. Each susceptible/infected pair sums to exactly zero: retired and
/// deceased individuals are replaced by susceptibles.
pub fn ode_rhs(state: &EpiState, params: &EpiParams, cu: f64) -> Result<[f64; 6]> {
    state.validate()?;
    let (beta_h, beta_l, beta_c) = force_of_infection(params, cu)?;
    let out_f = params.mu_s + params.alpha;
    let out_c = params.mu_c + params.alpha;
    let w_h = params.weight_h();
    let pool = w_h * state.i_h + (1.0 - w_h) * state.i_l;
    let di_h = beta_h * state.s_h * state.i_c - out_f * state.i_h;
    let di_l = beta_l * state.s_l * state.i_c - out_f * state.i_l;
    let di_c = beta_c * state.s_c * pool - out_c * state.i_c;
    Ok([-di_h, di_h, -di_l, di_l, -di_c, di_c])
}

/// Clamp an infected proportion per the tolerance policy. `None` signals a
/// numerical-instability excursion.
#[inline]
fn clamp_prop(v: f64) -> Option<f64> {
    if (0.0..=1.0).contains(&v) {
        Some(v)
    } else if v > -CLAMP_TOL && v < 0.0 {
        Some(0.0)
    } else if v > 1.0 && v < 1.0 + CLAMP_TOL {
        Some(1.0)
    } else {
        None
    }
}

/// Integrate the transmission ODE over the grid with a fixed-step RK4,
/// condom use held piecewise-constant on each step (left node value).
/// `cu_path` supplies one value per grid node.
pub fn integrate(params: &EpiParams, cu_path: &[f64], grid: &TimeGrid) -> Result<Vec<EpiState>> {
    params.validate()?;
    if cu_path.len() != grid.n_nodes() {
        return Err(Error::Config(format!(
            "cu_path has {} values for a grid of {} nodes",
            cu_path.len(),
            grid.n_nodes()
        )));
    }
    let kernel = Kernel::new(params);
    let mut i = kernel.initial_infected();
    let mut out = Vec::with_capacity(grid.n_nodes());
    out.push(EpiState::from_infected(i[0], i[1], i[2]));
    let h = grid.delta_months();
    for (j, &cu) in cu_path[..grid.n_steps()].iter().enumerate() {
        if !(0.0..=1.0).contains(&cu) {
            return Err(Error::Numerical(format!("cu_path[{j}]={cu} outside [0,1]")));
        }
        i = kernel.step_exact(i, cu, h).ok_or_else(|| {
            Error::Numerical(format!(
                "integration unstable after node {j} (step {h} months too coarse)"
            ))
        })?;
        out.push(EpiState::from_infected(i[0], i[1], i[2]));
    }
    Ok(out)
}

/// Model prevalence seen by a survey of the given stratum: FSW surveys see
/// the unweighted subgroup average, client surveys see client prevalence.
pub fn observe_prevalence(state: &EpiState, stratum: Stratum) -> f64 {
    match stratum {
        Stratum::Fsw => 0.5 * (state.i_h + state.i_l),
        Stratum::Client => state.i_c,
    }
}

/// Binomial log-likelihood of one observation at model prevalence `h`.
/// Boundary prevalences are handled exactly: log 1 when the data agree,
/// -inf otherwise.
pub fn log_obs_likelihood(obs: &Observation, h: f64) -> f64 {
    let k = obs.positives as f64;
    let n = obs.sample_size as f64;
    if !(0.0..=1.0).contains(&h) {
        return f64::NEG_INFINITY;
    }
    if h == 0.0 {
        return if obs.positives == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if h == 1.0 {
        return if obs.positives == obs.sample_size { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_choose(n, k) + k * h.ln() + (n - k) * (-h).ln_1p()
}

pub(crate) fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

// ---------------------------------------------------------------------------
// Fast inference kernel
// ---------------------------------------------------------------------------

const BETA_TABLE_LEN: usize = 1024;

/// Reduced integration kernel over infected proportions `[i_H, i_L, i_C]`
/// (susceptibles are complements). Forces of infection are tabulated over
/// cu in [0,1] and linearly interpolated; the table error is ~1e-10, far
/// below the observation-noise scale. Used by the particle filter and the
/// direct likelihood so both share bit-identical arithmetic.
#[derive(Debug, Clone)]
pub struct Kernel {
    table: Vec<[f64; 3]>,
    out_f: f64,
    out_c: f64,
    w_h: f64,
    params: EpiParams,
}

impl Kernel {
    pub fn new(params: &EpiParams) -> Self {
        let mut table = Vec::with_capacity(BETA_TABLE_LEN + 1);
        for idx in 0..=BETA_TABLE_LEN {
            let cu = idx as f64 / BETA_TABLE_LEN as f64;
            let q_f = 1.0 - (1.0 - params.p_s * (1.0 - params.e * cu)).powf(params.n);
            let q_c = 1.0 - (1.0 - params.p_c * (1.0 - params.e * cu)).powf(params.n);
            table.push([
                params.c_h * q_f,
                params.c_l * q_f,
                q_c * (0.5 * (params.c_h + params.c_l)) / params.ratio_cf,
            ]);
        }
        Kernel {
            table,
            out_f: params.mu_s + params.alpha,
            out_c: params.mu_c + params.alpha,
            w_h: params.weight_h(),
            params: *params,
        }
    }

    pub fn params(&self) -> &EpiParams {
        &self.params
    }

    pub fn initial_infected(&self) -> [f64; 3] {
        [self.params.init_prev_f, self.params.init_prev_f, self.params.init_prev_c]
    }

    #[inline]
    fn betas(&self, cu: f64) -> [f64; 3] {
        let pos = cu * BETA_TABLE_LEN as f64;
        let idx = (pos as usize).min(BETA_TABLE_LEN - 1);
        let frac = pos - idx as f64;
        let lo = self.table[idx];
        let hi = self.table[idx + 1];
        [
            lo[0] + frac * (hi[0] - lo[0]),
            lo[1] + frac * (hi[1] - lo[1]),
            lo[2] + frac * (hi[2] - lo[2]),
        ]
    }

    #[inline]
    fn rhs(&self, i: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        let pool = self.w_h * i[0] + (1.0 - self.w_h) * i[1];
        [
            b[0] * (1.0 - i[0]) * i[2] - self.out_f * i[0],
            b[1] * (1.0 - i[1]) * i[2] - self.out_f * i[1],
            b[2] * (1.0 - i[2]) * pool - self.out_c * i[2],
        ]
    }

    #[inline]
    fn rk4(&self, i: [f64; 3], b: [f64; 3], h: f64) -> [f64; 3] {
        let k1 = self.rhs(i, b);
        let k2 = self.rhs(
            [i[0] + 0.5 * h * k1[0], i[1] + 0.5 * h * k1[1], i[2] + 0.5 * h * k1[2]],
            b,
        );
        let k3 = self.rhs(
            [i[0] + 0.5 * h * k2[0], i[1] + 0.5 * h * k2[1], i[2] + 0.5 * h * k2[2]],
            b,
        );
        let k4 = self.rhs([i[0] + h * k3[0], i[1] + h * k3[1], i[2] + h * k3[2]], b);
        [
            i[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            i[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            i[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        ]
    }

    /// One RK4 step with tabulated forces; `None` on instability.
    #[inline]
    pub fn step(&self, i: [f64; 3], cu: f64, h: f64) -> Option<[f64; 3]> {
        let next = self.rk4(i, self.betas(cu), h);
        Some([clamp_prop(next[0])?, clamp_prop(next[1])?, clamp_prop(next[2])?])
    }

    /// One RK4 step with exactly evaluated forces (public `integrate` path).
    fn step_exact(&self, i: [f64; 3], cu: f64, h: f64) -> Option<[f64; 3]> {
        let p = &self.params;
        let q_f = 1.0 - (1.0 - p.p_s * (1.0 - p.e * cu)).powf(p.n);
        let q_c = 1.0 - (1.0 - p.p_c * (1.0 - p.e * cu)).powf(p.n);
        let b = [
            p.c_h * q_f,
            p.c_l * q_f,
            q_c * (0.5 * (p.c_h + p.c_l)) / p.ratio_cf,
        ];
        let next = self.rk4(i, b, h);
        let clamped = [clamp_prop(next[0])?, clamp_prop(next[1])?, clamp_prop(next[2])?];
        Some(clamped)
    }

    /// Prevalence seen by a stratum, reduced-state version.
    #[inline]
    pub fn prevalence(i: &[f64; 3], stratum: Stratum) -> f64 {
        match stratum {
            Stratum::Fsw => 0.5 * (i[0] + i[1]),
            Stratum::Client => i[2],
        }
    }
}
