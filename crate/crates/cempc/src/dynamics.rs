//! Quadrotor rigid-body dynamics with rate control and a wind disturbance model.
//!
//! The state is position, world-frame velocity and ZYX Euler attitude; the
//! input is collective thrust plus body rates. Wind enters the translational
//! dynamics through a linear drag force `K_drag * (v_wind - v)`, which is the
//! disturbance channel the learning components estimate. A nominal model with
//! the drag term removed (and an optional learned correction) is provided for
//! prediction rollouts.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Margin around |pitch| = pi/2 inside which the Euler-rate map is singular.
const GIMBAL_GUARD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    /// The ZYX Euler kinematics lose rank near pitch = +-pi/2.
    #[error("gimbal lock: pitch {pitch} is within {GIMBAL_GUARD} of +-pi/2")]
    GimbalLock { pitch: f64 },
}

/// Quadrotor state: position p, world velocity v, ZYX Euler attitude (roll, pitch, yaw).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Vector3<f64>,
}

impl State {
    pub fn zero() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.attitude.iter().all(|x| x.is_finite())
    }
}

/// Control input: collective thrust (N) and body rates (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub thrust: f64,
    pub rates: Vector3<f64>,
}

impl ControlInput {
    pub fn from_array(u: [f64; 4]) -> Self {
        Self {
            thrust: u[0],
            rates: Vector3::new(u[1], u[2], u[3]),
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.thrust, self.rates.x, self.rates.y, self.rates.z]
    }
}

/// Physical parameters and input box bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadParams {
    /// Mass (kg).
    pub mass: f64,
    /// Gravitational acceleration (m/s^2), acting along -z.
    pub gravity: f64,
    /// Diagonal drag gain (N per m/s of relative airspeed), isotropic.
    pub drag_gain: f64,
    /// Thrust bounds (N).
    pub thrust_min: f64,
    pub thrust_max: f64,
    /// Symmetric body-rate bounds (rad/s), per axis.
    pub rate_max: [f64; 3],
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            mass: 0.08,
            gravity: 9.81,
            drag_gain: 0.03,
            thrust_min: 0.0,
            thrust_max: 1.3,
            rate_max: [3.49, 3.49, 5.24],
        }
    }
}

impl QuadParams {
    /// Input box as (lower, upper) in the order [thrust, wx, wy, wz].
    pub fn control_bounds(&self) -> ([f64; 4], [f64; 4]) {
        (
            [
                self.thrust_min,
                -self.rate_max[0],
                -self.rate_max[1],
                -self.rate_max[2],
            ],
            [
                self.thrust_max,
                self.rate_max[0],
                self.rate_max[1],
                self.rate_max[2],
            ],
        )
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn clamp_control(&self, u: ControlInput) -> ControlInput {
        let (lo, hi) = self.control_bounds();
        let a = u.to_array();
        ControlInput::from_array([
            a[0].clamp(lo[0], hi[0]),
            a[1].clamp(lo[1], hi[1]),
            a[2].clamp(lo[2], hi[2]),
            a[3].clamp(lo[3], hi[3]),
        ])
    }
}

/// Time derivative of [`State`].
#[derive(Debug, Clone, Copy)]
pub struct Derivative {
    pub dp: Vector3<f64>,
    pub dv: Vector3<f64>,
    pub datt: Vector3<f64>,
}

fn advance(s: &State, d: &Derivative, dt: f64) -> State {
    State {
        position: s.position + d.dp * dt,
        velocity: s.velocity + d.dv * dt,
        attitude: s.attitude + d.datt * dt,
    }
}

/// World-from-body rotation for ZYX Euler angles (roll, pitch, yaw).
pub fn rotation_matrix(attitude: &Vector3<f64>) -> Matrix3<f64> {
    let (sp, cp) = attitude.x.sin_cos();
    let (st, ct) = attitude.y.sin_cos();
    let (sy, cy) = attitude.z.sin_cos();
    Matrix3::new(
        ct * cy,
        sp * st * cy - cp * sy,
        cp * st * cy + sp * sy,
        ct * sy,
        sp * st * sy + cp * cy,
        cp * st * sy - sp * cy,
        -st,
        sp * ct,
        cp * ct,
    )
}

/// Thrust direction in world frame: third column of the rotation matrix.
pub fn thrust_axis(attitude: &Vector3<f64>) -> Vector3<f64> {
    let (sp, cp) = attitude.x.sin_cos();
    let (st, ct) = attitude.y.sin_cos();
    let (sy, cy) = attitude.z.sin_cos();
    Vector3::new(cp * st * cy + sp * sy, cp * st * sy - sp * cy, cp * ct)
}

/// Euler-angle rates from body rates. Singular at |pitch| = pi/2.
pub fn euler_rates(
    attitude: &Vector3<f64>,
    rates: &Vector3<f64>,
) -> Result<Vector3<f64>, DynamicsError> {
    let pitch = attitude.y;
    if (pitch.abs() - std::f64::consts::FRAC_PI_2).abs() < GIMBAL_GUARD {
        return Err(DynamicsError::GimbalLock { pitch });
    }
    let (sp, cp) = attitude.x.sin_cos();
    let (st, ct) = attitude.y.sin_cos();
    let tt = st / ct;
    Ok(Vector3::new(
        rates.x + sp * tt * rates.y + cp * tt * rates.z,
        cp * rates.y - sp * rates.z,
        (sp * rates.y + cp * rates.z) / ct,
    ))
}

/// Acceleration of the nominal (drag-free) model: gravity plus thrust.
pub fn nominal_acceleration(
    state: &State,
    input: &ControlInput,
    params: &QuadParams,
) -> Vector3<f64> {
    let e3 = Vector3::new(0.0, 0.0, 1.0);
    -params.gravity * e3 + thrust_axis(&state.attitude) * (input.thrust / params.mass)
}

/// Per-unit-mass drag disturbance `K_drag (v_wind - v) / m`.
pub fn drag_acceleration(
    velocity: &Vector3<f64>,
    wind_velocity: &Vector3<f64>,
    params: &QuadParams,
) -> Vector3<f64> {
    (wind_velocity - velocity) * (params.drag_gain / params.mass)
}

/// Full plant derivative under a given constant wind velocity.
pub fn derivative(
    state: &State,
    input: &ControlInput,
    wind_velocity: &Vector3<f64>,
    params: &QuadParams,
) -> Result<Derivative, DynamicsError> {
    Ok(Derivative {
        dp: state.velocity,
        dv: nominal_acceleration(state, input, params)
            + drag_acceleration(&state.velocity, wind_velocity, params),
        datt: euler_rates(&state.attitude, &input.rates)?,
    })
}

/// Nominal-model derivative with a learned disturbance acceleration `d_hat`
/// held constant over the step.
pub fn nominal_derivative(
    state: &State,
    input: &ControlInput,
    d_hat: &Vector3<f64>,
    params: &QuadParams,
) -> Result<Derivative, DynamicsError> {
    Ok(Derivative {
        dp: state.velocity,
        dv: nominal_acceleration(state, input, params) + d_hat,
        datt: euler_rates(&state.attitude, &input.rates)?,
    })
}

fn rk4<F>(state: &State, dt: f64, f: F) -> Result<State, DynamicsError>
where
    F: Fn(&State) -> Result<Derivative, DynamicsError>,
{
    let k1 = f(state)?;
    let k2 = f(&advance(state, &k1, 0.5 * dt))?;
    let k3 = f(&advance(state, &k2, 0.5 * dt))?;
    let k4 = f(&advance(state, &k3, dt))?;
    let sixth = dt / 6.0;
    Ok(State {
        position: state.position + (k1.dp + 2.0 * (k2.dp + k3.dp) + k4.dp) * sixth,
        velocity: state.velocity + (k1.dv + 2.0 * (k2.dv + k3.dv) + k4.dv) * sixth,
        attitude: state.attitude + (k1.datt + 2.0 * (k2.datt + k3.datt) + k4.datt) * sixth,
    })
}

/// One RK4 step of the plant with wind held constant over the step.
pub fn step(
    state: &State,
    input: &ControlInput,
    wind_velocity: &Vector3<f64>,
    dt: f64,
    params: &QuadParams,
) -> Result<State, DynamicsError> {
    rk4(state, dt, |s| derivative(s, input, wind_velocity, params))
}

/// Plant step split into `n` RK4 substeps for higher integration fidelity.
pub fn step_substeps(
    state: &State,
    input: &ControlInput,
    wind_velocity: &Vector3<f64>,
    dt: f64,
    n: usize,
    params: &QuadParams,
) -> Result<State, DynamicsError> {
    let n = n.max(1);
    let h = dt / n as f64;
    let mut s = *state;
    for _ in 0..n {
        s = step(&s, input, wind_velocity, h, params)?;
    }
    Ok(s)
}

/// One RK4 step of the nominal model with `d_hat` held constant.
pub fn step_nominal(
    state: &State,
    input: &ControlInput,
    d_hat: &Vector3<f64>,
    dt: f64,
    params: &QuadParams,
) -> Result<State, DynamicsError> {
    rk4(state, dt, |s| nominal_derivative(s, input, d_hat, params))
}

/// Wind field: constant mean plus per-axis Ornstein-Uhlenbeck turbulence.
///
/// The turbulence update `v+ = v e^(-dt/tau) + sigma sqrt(1 - e^(-2 dt/tau)) xi`
/// is the exact OU discretization, so `sigma` is the stationary standard
/// deviation per axis. Draws come from a seeded generator; a given seed always
/// reproduces the same wind sequence.
#[derive(Debug, Clone)]
pub struct WindModel {
    pub mean: Vector3<f64>,
    pub sigma: Vector3<f64>,
    pub tau: f64,
    turbulence: Vector3<f64>,
    rng: ChaCha8Rng,
}

impl WindModel {
    pub fn new(mean: Vector3<f64>, sigma: Vector3<f64>, tau: f64, seed: u64) -> Self {
        Self {
            mean,
            sigma,
            tau,
            turbulence: Vector3::zeros(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Steady wind without turbulence.
    pub fn constant(mean: Vector3<f64>) -> Self {
        Self::new(mean, Vector3::zeros(), 1.0, 0)
    }

    /// Current total wind velocity.
    pub fn current(&self) -> Vector3<f64> {
        self.mean + self.turbulence
    }

    /// Advance the turbulence by `dt` and return the new total wind velocity.
    /// Three standard-normal draws are consumed per call, in axis order.
    pub fn step(&mut self, dt: f64) -> Vector3<f64> {
        let decay = (-dt / self.tau).exp();
        let diffusion = (1.0 - (-2.0 * dt / self.tau).exp()).sqrt();
        for i in 0..3 {
            let xi: f64 = StandardNormal.sample(&mut self.rng);
            self.turbulence[i] = self.turbulence[i] * decay + self.sigma[i] * diffusion * xi;
        }
        self.current()
    }
}
