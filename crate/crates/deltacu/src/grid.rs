//! Uniform time discretization.
//!
//! All internal dynamics run on a months-since-origin axis; calendar years
//! appear only at the API boundary. Node `j` sits at `t0 + j*delta` months.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct TimeGrid {
    t0: f64,    // decimal years
    t_end: f64, // decimal years
    delta: f64, // months
    n_steps: usize,
}

/// Serialized form: the three user-facing fields only.
#[derive(Serialize, Deserialize)]
struct GridRepr {
    t0: f64,
    t_end: f64,
    delta_months: f64,
}

impl TryFrom<GridRepr> for TimeGrid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        TimeGrid::new(r.t0, r.t_end, r.delta_months)
    }
}

impl From<TimeGrid> for GridRepr {
    fn from(g: TimeGrid) -> Self {
        GridRepr { t0: g.t0, t_end: g.t_end, delta_months: g.delta }
    }
}

impl TimeGrid {
    /// `t0`, `t_end` in decimal years; `delta_months` is the step size.
    /// The horizon must be an integer multiple of the step.
    pub fn new(t0: f64, t_end: f64, delta_months: f64) -> Result<Self> {
        if !delta_months.is_finite() || delta_months <= 0.0 {
            return Err(Error::Config(format!("grid delta must be positive, got {delta_months}")));
        }
        if !t0.is_finite() || !t_end.is_finite() || t_end <= t0 {
            return Err(Error::Config(format!("grid horizon [{t0}, {t_end}] is empty")));
        }
        let steps = (t_end - t0) * 12.0 / delta_months;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Config(format!(
                "horizon {t0}..{t_end} is not an integer multiple of delta={delta_months} months"
            )));
        }
        Ok(TimeGrid { t0, t_end, delta: delta_months, n_steps: rounded as usize })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn delta_months(&self) -> f64 {
        self.delta
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    /// Months since `t0` of node `j`.
    pub fn node_month(&self, j: usize) -> f64 {
        j as f64 * self.delta
    }

    /// Calendar year of node `j`.
    pub fn node_year(&self, j: usize) -> f64 {
        self.t0 + self.node_month(j) / 12.0
    }

    /// Nearest grid node to a calendar time. Errors when the time lies
    /// outside the grid by more than half a step.
    pub fn nearest_node(&self, t_year: f64) -> Result<usize> {
        if !t_year.is_finite() {
            return Err(Error::Data(format!("non-finite time {t_year}")));
        }
        let steps = (t_year - self.t0) * 12.0 / self.delta;
        let j = steps.round();
        if j < 0.0 || j > self.n_steps as f64 {
            return Err(Error::Data(format!(
                "time {t_year} outside grid [{}, {}]",
                self.t0, self.t_end
            )));
        }
        Ok(j as usize)
    }

    /// First node at or after a calendar time, clamped to the grid.
    pub fn first_node_at_or_after(&self, t_year: f64) -> usize {
        let steps = (t_year - self.t0) * 12.0 / self.delta;
        if steps <= 0.0 {
            0
        } else {
            (steps.ceil() as usize).min(self.n_steps)
        }
    }
}
