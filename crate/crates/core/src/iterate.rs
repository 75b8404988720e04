//! Iteration and flow configuration shared by the model-based oracle and
//! both data-driven parameterizations, plus the histories they record.

use crate::linalg::{Matrix, SymMatrix};

/// Termination rule for policy iteration. Gains are compared rather than
/// the underlying parameterization because only the gain is unique.
#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub gain_tol: f64,
    pub max_iter: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            gain_tol: 1e-10,
            max_iter: 50,
        }
    }
}

/// Fixed-step RK4 configuration for every matrix flow in the crate.
#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub horizon: f64,
    pub step: f64,
    /// Record a checkpoint every this many steps (the endpoint is always
    /// recorded).
    pub record_every: usize,
}

impl FlowOptions {
    pub fn new(horizon: f64, step: f64) -> Self {
        FlowOptions {
            horizon,
            step,
            record_every: 10,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round().max(1.0) as usize
    }
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions::new(1.0, 1e-3)
    }
}

/// Value-iteration schedule: diminishing steps `c/(k+1)^p` and growing
/// bounding sets of Frobenius radius `slope·(q+1)`.
#[derive(Debug, Clone, Copy)]
pub struct ViOptions {
    pub step_scale: f64,
    pub step_power: f64,
    pub radius_slope: f64,
    pub max_iter: usize,
    /// Converged once the update residual norm falls below this times
    /// `max(1, ||P||)`.
    pub residual_tol: f64,
    pub record_every: usize,
}

impl ViOptions {
    pub fn step(&self, k: usize) -> f64 {
        self.step_scale / (k as f64 + 1.0).powf(self.step_power)
    }

    pub fn radius(&self, q: usize) -> f64 {
        self.radius_slope * (q as f64 + 1.0)
    }

    /// Membership in the bounding set: positive semidefinite within
    /// rounding and Frobenius norm at most the current radius.
    pub fn in_bounding_set(&self, p: &SymMatrix, q: usize) -> bool {
        p.norm() <= self.radius(q) && p.is_psd(1e-10 * p.norm().max(1.0))
    }
}

impl Default for ViOptions {
    fn default() -> Self {
        ViOptions {
            step_scale: 40.0,
            step_power: 0.8,
            radius_slope: 5.0,
            max_iter: 5000,
            residual_tol: 1e-8,
            record_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViStatus {
    Converged,
    NotConverged,
}

/// Value-matrix iterate history (policy iteration and value iteration).
#[derive(Debug, Clone)]
pub struct ValueHistory {
    /// Iteration indices of the recorded iterates.
    pub steps: Vec<usize>,
    pub values: Vec<SymMatrix>,
    pub status: ViStatus,
    /// Number of bounding-set resets performed.
    pub resets: usize,
}

/// Sampled trajectory of a matrix flow.
#[derive(Debug, Clone)]
pub struct FlowHistory<T> {
    pub times: Vec<f64>,
    pub states: Vec<T>,
}

impl<T> FlowHistory<T> {
    pub fn last(&self) -> &T {
        self.states.last().expect("flow history is never empty")
    }
}

/// One classical RK4 step of `x' = f(x)`.
pub fn rk4_step<F>(f: &mut F, x: &Matrix, h: f64) -> crate::Result<Matrix>
where
    F: FnMut(&Matrix) -> crate::Result<Matrix>,
{
    let k1 = f(x)?;
    let k2 = f(&(x + &k1 * (h / 2.0)))?;
    let k3 = f(&(x + &k2 * (h / 2.0)))?;
    let k4 = f(&(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}
