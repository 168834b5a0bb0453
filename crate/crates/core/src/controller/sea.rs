//! One-dimensional series elastic actuator force loop.
//!
//! The actuator mass sits at `x_t` above a wall. A spring of stiffness `k`
//! between the actuator and the wall is compressed by
//! `x_c = max(0, x_contact - x_t)` and pushes the actuator up with `k x_c`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeaError {
    #[error("invalid SEA parameters: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sea1dState {
    /// Spring stiffness, N/m.
    pub k: f64,
    pub k_p: f64,
    pub k_d: f64,
    /// Actuator position `ᵂx^T`, m.
    pub x_t: f64,
    /// Actuator velocity, m/s.
    pub v_t: f64,
    /// Spring deformation `ᵀx^C`, m.
    pub x_c: f64,
}

impl Sea1dState {
    pub fn validate(&self) -> Result<(), SeaError> {
        if !(self.k > 0.0) {
            return Err(SeaError::Invalid("k must be > 0"));
        }
        if !(self.k_p > 0.0) {
            return Err(SeaError::Invalid("k_p must be > 0"));
        }
        if !(self.k_d >= 0.0) {
            return Err(SeaError::Invalid("k_d must be >= 0"));
        }
        Ok(())
    }
}

/// Desired spring deformation `f_d / k`.
pub fn desired_deformation(state: &Sea1dState, f_d: f64) -> f64 {
    f_d / state.k
}

/// PD control effort driving the actuator to `x_t + x_c - f_d / k`.
pub fn sea_1d_force_step(state: &Sea1dState, f_d: f64) -> f64 {
    let x_c_d = desired_deformation(state, f_d);
    let x_t_d = state.x_t + state.x_c - x_c_d;
    -state.k_p * (state.x_t - x_t_d) - state.k_d * state.v_t
}

/// Mass-spring-wall plant driven by [`sea_1d_force_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sea1dSim {
    pub mass: f64,
    /// Actuator position at which the spring starts to compress.
    pub x_contact: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sea1dSample {
    pub time: f64,
    pub spring_force: f64,
    pub x_t: f64,
}

impl Sea1dSim {
    /// Forward-Euler integration for `duration` seconds.
    pub fn run(&self, mut state: Sea1dState, f_d: f64, duration: f64) -> Result<Vec<Sea1dSample>, SeaError> {
        state.validate()?;
        if !(self.mass > 0.0 && self.dt > 0.0) {
            return Err(SeaError::Invalid("mass and dt must be > 0"));
        }
        let steps = (duration / self.dt).round() as usize;
        let mut out = Vec::with_capacity(steps);
        for i in 0..steps {
            state.x_c = (self.x_contact - state.x_t).max(0.0);
            let u = sea_1d_force_step(&state, f_d);
            let spring = state.k * state.x_c;
            let accel = (u + spring) / self.mass;
            state.v_t += accel * self.dt;
            state.x_t += state.v_t * self.dt;
            out.push(Sea1dSample { time: (i + 1) as f64 * self.dt, spring_force: spring, x_t: state.x_t });
        }
        Ok(out)
    }
}

/// Critically damped derivative gain for a unit mass with effective stiffness `k_p + k`.
pub fn critical_damping(mass: f64, k_p: f64, k: f64) -> f64 {
    2.0 * (mass * (k_p + k)).sqrt()
}
