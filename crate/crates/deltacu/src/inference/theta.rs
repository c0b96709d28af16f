//! The global static-parameter vector: epidemic parameters and initial
//! conditions shared by all models, plus the trajectory parameters of the
//! chosen prior family. Random-walk proposals act on a transformed space
//! (logit for bounded coordinates, shifted log for the unbounded shapes).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::epi::EpiParams;
use crate::traj::{trajectory_log_prior, TrajectoryModel, M_CAP, T_ORIGIN};
use crate::{Error, Result};

/// Fixed FSW population size (not inferred).
pub const N_F: f64 = 1943.0;

/// Trajectory families the sampler can fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bm,
    Dbr,
    DSigm,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Bm => "bm",
            ModelKind::Dbr => "dbr",
            ModelKind::DSigm => "dsigm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm" => Ok(ModelKind::Bm),
            "dbr" => Ok(ModelKind::Dbr),
            "dsigm" => Ok(ModelKind::DSigm),
            other => Err(Error::Config(format!(
                "unknown model {other:?} (expected bm|dbr|dsigm)"
            ))),
        }
    }
}

/// Per-coordinate bijection between the constrained value and the
/// unconstrained proposal space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// `z = logit((v - lo)/(hi - lo))`.
    Logit { lo: f64, hi: f64 },
    /// `z = ln(v - shift)`.
    LogShifted { shift: f64 },
}

impl Transform {
    pub fn to_unconstrained(&self, v: f64) -> f64 {
        match *self {
            Transform::Logit { lo, hi } => {
                let u = (v - lo) / (hi - lo);
                (u / (1.0 - u)).ln()
            }
            Transform::LogShifted { shift } => (v - shift).ln(),
        }
    }

    pub fn to_constrained(&self, z: f64) -> f64 {
        match *self {
            Transform::Logit { lo, hi } => lo + (hi - lo) * crate::traj::logistic(z),
            Transform::LogShifted { shift } => shift + z.exp(),
        }
    }

    /// `ln |dv/dz|` evaluated at the constrained value `v`.
    pub fn log_jacobian(&self, v: f64) -> f64 {
        match *self {
            Transform::Logit { lo, hi } => (v - lo).ln() + (hi - v).ln() - (hi - lo).ln(),
            Transform::LogShifted { shift } => (v - shift).ln(),
        }
    }
}

/// Marginal prior of one coordinate (the joint support constraints live in
/// ThetaSpec::log_prior).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Uniform { lo: f64, hi: f64 },
    /// Half-normal on `v - shift` with the given scale.
    HalfNormal { shift: f64, sigma: f64 },
}

impl Prior {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Prior::HalfNormal { shift, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                shift + z.abs() * sigma
            }
        }
    }

    pub fn log_density(&self, v: f64) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => {
                if v > lo && v < hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::HalfNormal { shift, sigma } => {
                let u = v - shift;
                if u <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    std::f64::consts::LN_2
                        - sigma.ln()
                        - 0.5 * (2.0 * std::f64::consts::PI).ln()
                        - u * u / (2.0 * sigma * sigma)
                }
            }
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            Prior::HalfNormal { shift, sigma } => {
                if v <= shift {
                    0.0
                } else {
                    let std = Normal::new(0.0, 1.0).unwrap();
                    2.0 * std.cdf((v - shift) / sigma) - 1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoordSpec {
    pub name: &'static str,
    pub transform: Transform,
    pub prior: Prior,
}

fn unit_coord(name: &'static str) -> CoordSpec {
    CoordSpec {
        name,
        transform: Transform::Logit { lo: 0.0, hi: 1.0 },
        prior: Prior::Uniform { lo: 0.0, hi: 1.0 },
    }
}

fn ranged(name: &'static str, lo: f64, hi: f64) -> CoordSpec {
    CoordSpec { name, transform: Transform::Logit { lo, hi }, prior: Prior::Uniform { lo, hi } }
}

/// Number of shared epidemic coordinates (the trajectory block follows).
pub const N_EPI_COORDS: usize = 12;

/// A point in constrained parameter space, ordered per the owning spec.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector(pub Vec<f64>);

/// Coordinate layout, transforms and priors for one model family.
#[derive(Debug, Clone)]
pub struct ThetaSpec {
    pub kind: ModelKind,
    pub coords: Vec<CoordSpec>,
}

impl ThetaSpec {
    pub fn for_model(kind: ModelKind) -> Self {
        // Uniform survey-informed ranges; careers and life expectancy are in
        // months and converted to rates when assembling EpiParams.
        let mut coords = vec![
            ranged("init_prev_f", 0.0, 0.05),
            ranged("init_prev_c", 0.0, 0.05),
            ranged("p_s", 0.0006, 0.0055),
            ranged("p_c", 0.0001, 0.007),
            ranged("cond_eff", 0.80, 0.95),
            ranged("acts", 1.0, 2.0),
            ranged("c_h", 46.6, 54.0),
            ranged("c_l", 20.0, 23.7),
            ranged("ratio_cf", 7.0, 19.0),
            ranged("career_s", 45.0, 54.0),
            ranged("career_c", 154.0, 191.0),
            ranged("life_hiv", 87.0, 138.5),
        ];
        debug_assert_eq!(coords.len(), N_EPI_COORDS);
        match kind {
            ModelKind::Bm => {
                coords.push(unit_coord("cu0"));
                coords.push(ranged("sigma", 0.0, 2.0));
            }
            ModelKind::Dbr => {
                coords.push(unit_coord("cu0"));
                coords.push(unit_coord("eta"));
                coords.push(CoordSpec {
                    name: "m",
                    transform: Transform::LogShifted { shift: 1.0 },
                    prior: Prior::HalfNormal { shift: 1.0, sigma: 1000.0 },
                });
                coords.push(ranged("t_in", T_ORIGIN, 2009.0));
            }
            ModelKind::DSigm => {
                coords.push(unit_coord("cu0"));
                coords.push(unit_coord("eta"));
                coords.push(CoordSpec {
                    name: "k",
                    transform: Transform::LogShifted { shift: 0.0 },
                    prior: Prior::HalfNormal { shift: 0.0, sigma: 1000.0 },
                });
                coords.push(ranged("t_in", T_ORIGIN, 2009.0));
            }
        }
        ThetaSpec { kind, coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.coords.iter().map(|c| c.name).collect()
    }

    pub fn transform(&self, theta: &ThetaVector) -> Vec<f64> {
        self.coords
            .iter()
            .zip(&theta.0)
            .map(|(c, &v)| c.transform.to_unconstrained(v))
            .collect()
    }

    pub fn untransform(&self, z: &[f64]) -> ThetaVector {
        ThetaVector(
            self.coords
                .iter()
                .zip(z)
                .map(|(c, &zi)| c.transform.to_constrained(zi))
                .collect(),
        )
    }

    /// Joint log prior: independent epidemic coordinates plus the trajectory
    /// block with its joint support constraints.
    pub fn log_prior(&self, theta: &ThetaVector) -> f64 {
        let mut total = 0.0;
        for (c, &v) in self.coords.iter().take(N_EPI_COORDS).zip(&theta.0) {
            total += c.prior.log_density(v);
            if total == f64::NEG_INFINITY {
                return total;
            }
        }
        total + trajectory_log_prior(&self.trajectory(theta))
    }

    /// `sum_i ln |dv_i/dz_i|`, the proposal-space volume correction.
    pub fn log_jacobian(&self, theta: &ThetaVector) -> f64 {
        self.coords
            .iter()
            .zip(&theta.0)
            .map(|(c, &v)| c.transform.log_jacobian(v))
            .sum()
    }

    /// Draw from the joint prior (rejection on the trajectory support).
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> ThetaVector {
        loop {
            let theta = ThetaVector(self.coords.iter().map(|c| c.prior.sample(rng)).collect());
            if let Some(m) = self.coord_value(&theta, "m") {
                if m > M_CAP {
                    continue;
                }
            }
            if trajectory_log_prior(&self.trajectory(&theta)).is_finite() {
                return theta;
            }
        }
    }

    pub fn coord_value(&self, theta: &ThetaVector, name: &str) -> Option<f64> {
        self.coords.iter().position(|c| c.name == name).map(|i| theta.0[i])
    }

    pub fn epi_params(&self, theta: &ThetaVector) -> EpiParams {
        let v = &theta.0;
        EpiParams {
            init_prev_f: v[0],
            init_prev_c: v[1],
            p_s: v[2],
            p_c: v[3],
            e: v[4],
            n: v[5],
            c_h: v[6],
            c_l: v[7],
            ratio_cf: v[8],
            mu_s: 1.0 / v[9],
            mu_c: 1.0 / v[10],
            alpha: 1.0 / v[11],
            n_f: N_F,
        }
    }

    pub fn trajectory(&self, theta: &ThetaVector) -> TrajectoryModel {
        let v = &theta.0;
        match self.kind {
            ModelKind::Bm => TrajectoryModel::Bm { cu0: v[12], sigma: v[13] },
            ModelKind::Dbr => {
                TrajectoryModel::Dbr { cu0: v[12], eta: v[13], m: v[14], t_in: v[15] }
            }
            ModelKind::DSigm => {
                TrajectoryModel::DSigm { cu0: v[12], eta: v[13], k: v[14], t_in: v[15] }
            }
        }
    }
}
