//! Closed-loop tracking experiments: reference trajectory, obstacle field,
//! wind condition and controller variant in one config, plus the metrics
//! used to compare variants.

use crate::cem::{
    mpc_step, CemConfig, CemError, CostContext, CostSpec, DesiredState, SamplingDistribution,
    ZeroDisturbance,
};
use crate::dynamics::{
    drag_acceleration, step, step_substeps, ControlInput, DynamicsError, QuadParams, State,
    WindModel,
};
use crate::igp::{DisturbanceLearner, GpError, KernelParams, Prediction};
use crate::safety::{
    cbf_constraint, clf_constraint, clf_value, extended_barrier, mi_filter, safe_ellipsoid,
    Ellipsoid, FilterOutcome, QpError, SafetySpec,
};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

/// Tracking deviation that counts as giving way to an obstacle (m).
pub const AVOID_DEVIATION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("dynamics failure at t = {t:.3}: {source}")]
    Dynamics { t: f64, source: DynamicsError },
    #[error("disturbance learner failure at t = {t:.3}: {source}")]
    Learner { t: f64, source: GpError },
    #[error("trajectory optimizer failure at t = {t:.3}: {source}")]
    Optimizer { t: f64, source: CemError },
    #[error("safety filter failure at t = {t:.3}: {source}")]
    Filter { t: f64, source: QpError },
    #[error("state became non-finite at t = {t:.3}")]
    NonFinite { t: f64 },
}

impl ScenarioError {
    /// True when the run died inside the safety filter rather than from a
    /// numerical problem elsewhere.
    pub fn is_safety_abort(&self) -> bool {
        matches!(self, ScenarioError::Filter { .. })
    }
}

fn zero_vector() -> Vector3<f64> {
    Vector3::zeros()
}

/// Spherical obstacle drifting at constant velocity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vector3<f64>,
    #[serde(default = "zero_vector")]
    pub velocity: Vector3<f64>,
    pub radius: f64,
}

impl Obstacle {
    pub fn center_at(&self, elapsed: f64) -> Vector3<f64> {
        self.center + elapsed * self.velocity
    }

    /// Signed distance from `p` to the obstacle surface at `elapsed` seconds
    /// past the obstacle's reference time; negative inside.
    pub fn surface_distance_at(&self, p: &Vector3<f64>, elapsed: f64) -> f64 {
        (p - self.center_at(elapsed)).norm() - self.radius
    }

    /// The same obstacle re-anchored so its reference time moves forward by
    /// `elapsed` seconds.
    pub fn advanced(&self, elapsed: f64) -> Obstacle {
        Obstacle {
            center: self.center_at(elapsed),
            ..*self
        }
    }
}

/// Ascending-spiral reference: a circle of the given radius in the
/// horizontal plane plus a constant climb.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Trajectory {
    pub radius: f64,
    pub angular_rate: f64,
    pub climb_rate: f64,
}

impl Default for Trajectory {
    fn default() -> Self {
        Self {
            radius: 2.0,
            angular_rate: 0.5,
            climb_rate: 0.2,
        }
    }
}

impl Trajectory {
    pub fn desired(&self, t: f64) -> DesiredState {
        let (s, c) = (self.angular_rate * t).sin_cos();
        let w = self.angular_rate;
        DesiredState {
            position: Vector3::new(
                self.radius * s,
                self.radius * (1.0 - c),
                self.climb_rate * t,
            ),
            velocity: Vector3::new(self.radius * w * c, self.radius * w * s, self.climb_rate),
        }
    }
}

/// Controller variants, ordered by how much of the stack they enable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Sampling MPC on the nominal model only.
    #[serde(rename = "cempc")]
    Cempc,
    /// MPC rollouts corrected by the learned disturbance mean.
    #[serde(rename = "lb-cempc")]
    LbCempc,
    /// Learning MPC plus the robustified barrier filter.
    #[serde(rename = "lb-cempc-cbf")]
    LbCempcCbf,
    /// Learning MPC plus barrier and Lyapunov constraints in the filter.
    #[serde(rename = "lb-cempc-mi")]
    LbCempcMi,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Cempc,
        Variant::LbCempc,
        Variant::LbCempcCbf,
        Variant::LbCempcMi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cempc => "cempc",
            Variant::LbCempc => "lb-cempc",
            Variant::LbCempcCbf => "lb-cempc-cbf",
            Variant::LbCempcMi => "lb-cempc-mi",
        }
    }

    pub fn uses_gp(self) -> bool {
        self != Variant::Cempc
    }

    pub fn uses_filter(self) -> bool {
        matches!(self, Variant::LbCempcCbf | Variant::LbCempcMi)
    }

    pub fn uses_clf(self) -> bool {
        self == Variant::LbCempcMi
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cempc" => Ok(Variant::Cempc),
            "lb-cempc" => Ok(Variant::LbCempc),
            "lb-cempc-cbf" => Ok(Variant::LbCempcCbf),
            "lb-cempc-mi" => Ok(Variant::LbCempcMi),
            other => Err(format!(
                "unknown variant '{other}' (expected cempc, lb-cempc, lb-cempc-cbf or lb-cempc-mi)"
            )),
        }
    }
}

/// Complete description of one run. Every field has a default, so a TOML
/// config only needs to name what it changes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub variant: Variant,
    /// Simulated time (s).
    pub duration: f64,
    /// Control period (s); the plant, wind and learner all tick at this rate.
    pub control_dt: f64,
    /// RK4 substeps per control period for the plant only.
    pub plant_substeps: usize,
    /// Master seed: the wind uses it directly, the optimizer uses seed + 1.
    pub seed: u64,
    /// Mean wind speed (m/s), blowing along -x.
    pub wind_speed: f64,
    /// Turbulence standard deviation per axis as a fraction of `wind_speed`.
    pub turbulence_ratio: f64,
    /// Turbulence correlation time (s).
    pub wind_tau: f64,
    pub start_position: [f64; 3],
    pub start_velocity: [f64; 3],
    /// Stored transitions per disturbance-model axis.
    pub gp_capacity: usize,
    pub trajectory: Trajectory,
    pub obstacles: Vec<Obstacle>,
    pub quad: QuadParams,
    pub cem: CemConfig,
    pub cost: CostSpec,
    pub gp: KernelParams,
    pub safety: SafetySpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            variant: Variant::LbCempcMi,
            duration: 20.0,
            control_dt: 0.02,
            plant_substeps: 1,
            seed: 0,
            wind_speed: 5.0,
            turbulence_ratio: 0.1,
            wind_tau: 1.0,
            start_position: [0.0; 3],
            start_velocity: [0.0; 3],
            gp_capacity: 20,
            trajectory: Trajectory::default(),
            obstacles: Vec::new(),
            quad: QuadParams::default(),
            cem: CemConfig::default(),
            cost: CostSpec::default(),
            gp: KernelParams::default(),
            safety: SafetySpec::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.control_dt).round() as usize
    }

    pub fn wind_model(&self) -> WindModel {
        let sigma = self.turbulence_ratio * self.wind_speed;
        WindModel::new(
            Vector3::new(-self.wind_speed, 0.0, 0.0),
            Vector3::new(sigma, sigma, sigma),
            self.wind_tau,
            self.seed,
        )
    }

    pub fn cem_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(1))
    }

    pub fn initial_state(&self) -> State {
        State {
            position: Vector3::from(self.start_position),
            velocity: Vector3::from(self.start_velocity),
            attitude: Vector3::zeros(),
        }
    }
}

/// Everything observed at one control step, before the plant advances.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: f64,
    pub state: State,
    pub u_mpc: ControlInput,
    pub u_applied: ControlInput,
    pub desired: DesiredState,
    /// Barrier of the previous step's free ball at the current position;
    /// exactly 1 on the first step. Staying nonnegative certifies that each
    /// certified ball contained the state one step later.
    pub barrier: f64,
    /// Extended barrier the filter constrained this step.
    pub extended_barrier: f64,
    pub lyapunov: f64,
    pub intervened: bool,
    pub slack_barrier: f64,
    pub slack_clf: f64,
    pub qp_iterations: usize,
    pub gp_mean: [f64; 3],
    pub gp_sigma: [f64; 3],
    pub wind: Vector3<f64>,
    /// True drag acceleration at the step start, the signal the learner
    /// estimates.
    pub disturbance: Vector3<f64>,
    pub cem_iterations: usize,
    pub cem_cost: f64,
    pub cem_max_variance: f64,
    /// Distance to the nearest obstacle surface, infinite with no obstacles.
    pub min_clearance: f64,
    /// Radius of the free ball certified at this step.
    pub safe_radius: f64,
}

/// Controller compute time for one step, kept out of the step log so step
/// files stay reproducible.
#[derive(Debug, Clone, Copy)]
pub struct TimingRecord {
    pub t: f64,
    pub cem_us: u128,
    pub filter_us: u128,
}

/// Aggregates over a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub rms_error: f64,
    pub max_error: f64,
    /// Minimum over steps of the lagged-ball barrier.
    pub min_barrier: f64,
    /// Minimum obstacle surface distance over the run; absent without
    /// obstacles.
    pub min_clearance: Option<f64>,
    /// Steps spent strictly inside an obstacle.
    pub penetration_steps: usize,
    /// Per obstacle: first time the vehicle deviated from the reference by
    /// more than the avoidance threshold while that obstacle was in sensing
    /// range.
    pub avoid_times: Vec<Option<f64>>,
    /// Steps on which the filter replaced the requested input.
    pub interventions: usize,
    pub gp_updates: usize,
    pub mean_cem_iterations: f64,
}

/// Full output of one run.
#[derive(Debug)]
pub struct RunResult {
    pub records: Vec<StepRecord>,
    pub timings: Vec<TimingRecord>,
    pub metrics: Metrics,
}

/// One-line description of a run for tables and sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: String,
    pub seed: u64,
    pub wind_speed: f64,
    pub duration: f64,
    pub horizon: usize,
    pub obstacle_weight: f64,
    pub metrics: Metrics,
}

impl RunSummary {
    pub fn new(config: &ScenarioConfig, metrics: Metrics) -> Self {
        Self {
            variant: config.variant.name().to_string(),
            seed: config.seed,
            wind_speed: config.wind_speed,
            duration: config.duration,
            horizon: config.cem.horizon,
            obstacle_weight: config.cost.obstacle_weight,
            metrics,
        }
    }
}

/// Simulate the configured variant in closed loop.
///
/// Step order: sense obstacles, certify a free ball around the current
/// position, plan with the optimizer, filter the first input against the
/// previous step's ball, apply it to the plant with the current wind, then
/// feed the observed transition to the learner. The previous ball is used
/// because the ball certified at the current position is centered on the
/// vehicle, where the barrier gradient vanishes and the filter would have no
/// authority; the lagged ball yields a nonvacuous constraint and its barrier
/// at the next state is the forward-invariance evidence the log keeps.
pub fn run(config: &ScenarioConfig) -> Result<RunResult, ScenarioError> {
    let params = &config.quad;
    let (lower, upper) = params.control_bounds();
    let dt = config.control_dt;
    let steps = config.steps();
    let horizon = config.cem.horizon;

    let mut wind = config.wind_model();
    let mut rng = config.cem_rng();
    let mut learner = DisturbanceLearner::new(config.gp.clone(), config.gp_capacity);
    let zero_predictor = ZeroDisturbance;
    let mut warm = SamplingDistribution::cold_start(horizon, &lower, &upper);
    let mut state = config.initial_state();
    let mut prev_ball: Option<Ellipsoid> = None;

    let mut records = Vec::with_capacity(steps);
    let mut timings = Vec::with_capacity(steps);
    let mut refs: Vec<DesiredState> = Vec::with_capacity(horizon + 1);

    for k in 0..steps {
        let t = k as f64 * dt;
        if !state.is_finite() {
            return Err(ScenarioError::NonFinite { t });
        }

        let detected: Vec<Obstacle> = config
            .obstacles
            .iter()
            .filter(|o| o.surface_distance_at(&state.position, t) <= config.safety.sensing_range)
            .map(|o| o.advanced(t))
            .collect();

        let (ball_now, _inside) = safe_ellipsoid(&state.position, &detected, &config.safety);
        let barrier = prev_ball
            .as_ref()
            .map(|b| b.barrier(&state.position))
            .unwrap_or(1.0);
        let ball = prev_ball.take().unwrap_or_else(|| ball_now.clone());

        refs.clear();
        refs.extend((0..=horizon).map(|j| config.trajectory.desired(t + j as f64 * dt)));
        let desired = refs[0];

        let predictions: [Prediction; 3] = if config.variant.uses_gp() {
            learner.predict(&state.velocity)
        } else {
            [Prediction {
                mean: 0.0,
                variance: 0.0,
            }; 3]
        };

        let cem_start = Instant::now();
        let (u_mpc, warm_next, diag) = if config.variant.uses_gp() {
            let ctx = CostContext {
                refs: &refs,
                obstacles: &detected,
                predictor: &learner,
                cost: &config.cost,
                params,
                dt,
            };
            mpc_step(&state, warm, &config.cem, &mut rng, &ctx)
        } else {
            let ctx = CostContext {
                refs: &refs,
                obstacles: &detected,
                predictor: &zero_predictor,
                cost: &config.cost,
                params,
                dt,
            };
            mpc_step(&state, warm, &config.cem, &mut rng, &ctx)
        }
        .map_err(|source| ScenarioError::Optimizer { t, source })?;
        warm = warm_next;
        let cem_us = cem_start.elapsed().as_micros();

        let extended = extended_barrier(&ball, &state, config.safety.gamma);
        let lyapunov = clf_value(&state, &desired, &config.safety);

        let filter_start = Instant::now();
        let outcome = if config.variant.uses_filter() {
            let mut constraints = vec![cbf_constraint(
                &state,
                &ball,
                &predictions,
                &config.safety,
                params,
            )];
            if config.variant.uses_clf() {
                constraints.push(clf_constraint(
                    &state,
                    &desired,
                    &predictions,
                    &config.safety,
                    params,
                ));
            }
            mi_filter(&u_mpc, constraints, &config.safety, params)
                .map_err(|source| ScenarioError::Filter { t, source })?
        } else {
            FilterOutcome {
                u: u_mpc,
                intervened: false,
                slacks: Vec::new(),
                qp_iterations: 0,
            }
        };
        let filter_us = filter_start.elapsed().as_micros();
        let u_applied = outcome.u;

        let wind_now = wind.current();
        let disturbance = drag_acceleration(&state.velocity, &wind_now, params);
        let next = if config.plant_substeps > 1 {
            step_substeps(
                &state,
                &u_applied,
                &wind_now,
                dt,
                config.plant_substeps,
                params,
            )
        } else {
            step(&state, &u_applied, &wind_now, dt, params)
        }
        .map_err(|source| ScenarioError::Dynamics { t, source })?;

        if config.variant.uses_gp() {
            learner
                .observe(t, &state, &u_applied, &next.velocity, dt, params)
                .map_err(|source| ScenarioError::Learner { t, source })?;
        }

        let min_clearance = config
            .obstacles
            .iter()
            .map(|o| o.surface_distance_at(&state.position, t))
            .fold(f64::INFINITY, f64::min);

        records.push(StepRecord {
            t,
            state,
            u_mpc,
            u_applied,
            desired,
            barrier,
            extended_barrier: extended,
            lyapunov,
            intervened: outcome.intervened,
            slack_barrier: outcome.slacks.first().copied().unwrap_or(0.0),
            slack_clf: outcome.slacks.get(1).copied().unwrap_or(0.0),
            qp_iterations: outcome.qp_iterations,
            gp_mean: [
                predictions[0].mean,
                predictions[1].mean,
                predictions[2].mean,
            ],
            gp_sigma: [
                predictions[0].variance.max(0.0).sqrt(),
                predictions[1].variance.max(0.0).sqrt(),
                predictions[2].variance.max(0.0).sqrt(),
            ],
            wind: wind_now,
            disturbance,
            cem_iterations: diag.iterations,
            cem_cost: diag.best_cost,
            cem_max_variance: diag.final_max_variance,
            min_clearance,
            safe_radius: ball_now.radius(),
        });
        timings.push(TimingRecord { t, cem_us, filter_us });

        prev_ball = Some(ball_now);
        state = next;
        wind.step(dt);
    }

    let metrics = compute_metrics(&records, config, learner.updates());
    Ok(RunResult {
        records,
        timings,
        metrics,
    })
}

/// Aggregate a step log. `gp_updates` comes from the learner because the
/// records do not carry it.
pub fn compute_metrics(
    records: &[StepRecord],
    config: &ScenarioConfig,
    gp_updates: usize,
) -> Metrics {
    let n = records.len();
    let mut sum_sq = 0.0;
    let mut max_error: f64 = 0.0;
    let mut min_barrier = f64::INFINITY;
    let mut min_clearance = f64::INFINITY;
    let mut penetration_steps = 0;
    let mut interventions = 0;
    let mut iter_sum = 0.0;
    for r in records {
        let e = (r.state.position - r.desired.position).norm();
        sum_sq += e * e;
        max_error = max_error.max(e);
        min_barrier = min_barrier.min(r.barrier);
        min_clearance = min_clearance.min(r.min_clearance);
        if r.min_clearance < 0.0 {
            penetration_steps += 1;
        }
        interventions += r.intervened as usize;
        iter_sum += r.cem_iterations as f64;
    }
    let avoid_times = config
        .obstacles
        .iter()
        .map(|obs| {
            records
                .iter()
                .find(|r| {
                    obs.surface_distance_at(&r.state.position, r.t) <= config.safety.sensing_range
                        && (r.state.position - r.desired.position).norm() > AVOID_DEVIATION
                })
                .map(|r| r.t)
        })
        .collect();
    Metrics {
        rms_error: if n == 0 { 0.0 } else { (sum_sq / n as f64).sqrt() },
        max_error,
        min_barrier: if n == 0 { 1.0 } else { min_barrier },
        min_clearance: min_clearance.is_finite().then_some(min_clearance),
        penetration_steps,
        avoid_times,
        interventions,
        gp_updates,
        mean_cem_iterations: if n == 0 { 0.0 } else { iter_sum / n as f64 },
    }
}

pub const STEP_CSV_HEADER: &str = "t,px,py,pz,vx,vy,vz,roll,pitch,yaw,\
thrust_cmd,wx_cmd,wy_cmd,wz_cmd,thrust,wx,wy,wz,\
pd_x,pd_y,pd_z,vd_x,vd_y,vd_z,\
barrier,extended_barrier,lyapunov,intervened,slack_barrier,slack_clf,qp_iterations,\
gp_mean_x,gp_mean_y,gp_mean_z,gp_sigma_x,gp_sigma_y,gp_sigma_z,\
wind_x,wind_y,wind_z,disturbance_x,disturbance_y,disturbance_z,\
cem_iterations,cem_cost,cem_max_variance,min_clearance,safe_radius";

/// Step log as CSV. Values are written with the shortest round-trip float
/// formatting, so identical runs produce byte-identical files.
pub fn write_step_csv<W: Write>(records: &[StepRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", STEP_CSV_HEADER)?;
    for r in records {
        let s = &r.state;
        let um = r.u_mpc.to_array();
        let ua = r.u_applied.to_array();
        write!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            s.position.x,
            s.position.y,
            s.position.z,
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            s.attitude.x,
            s.attitude.y,
            s.attitude.z
        )?;
        write!(
            w,
            ",{},{},{},{},{},{},{},{}",
            um[0], um[1], um[2], um[3], ua[0], ua[1], ua[2], ua[3]
        )?;
        write!(
            w,
            ",{},{},{},{},{},{}",
            r.desired.position.x,
            r.desired.position.y,
            r.desired.position.z,
            r.desired.velocity.x,
            r.desired.velocity.y,
            r.desired.velocity.z
        )?;
        write!(
            w,
            ",{},{},{},{},{},{},{}",
            r.barrier,
            r.extended_barrier,
            r.lyapunov,
            r.intervened as u8,
            r.slack_barrier,
            r.slack_clf,
            r.qp_iterations
        )?;
        write!(
            w,
            ",{},{},{},{},{},{}",
            r.gp_mean[0], r.gp_mean[1], r.gp_mean[2], r.gp_sigma[0], r.gp_sigma[1], r.gp_sigma[2]
        )?;
        write!(
            w,
            ",{},{},{},{},{},{}",
            r.wind.x, r.wind.y, r.wind.z, r.disturbance.x, r.disturbance.y, r.disturbance.z
        )?;
        writeln!(
            w,
            ",{},{},{},{},{}",
            r.cem_iterations, r.cem_cost, r.cem_max_variance, r.min_clearance, r.safe_radius
        )?;
    }
    Ok(())
}

/// Controller timing log as CSV; kept in its own file because wall times
/// differ between runs.
pub fn write_timing_csv<W: Write>(timings: &[TimingRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "t,cem_us,filter_us")?;
    for rec in timings {
        writeln!(w, "{},{},{}", rec.t, rec.cem_us, rec.filter_us)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trajectory_anchor_points() {
        let traj = Trajectory::default();
        let d0 = traj.desired(0.0);
        assert_relative_eq!(d0.position, Vector3::zeros(), epsilon = 1e-15);
        assert_relative_eq!(
            d0.velocity,
            Vector3::new(1.0, 0.0, 0.2),
            epsilon = 1e-15
        );

        let d4 = traj.desired(4.0);
        assert_relative_eq!(
            d4.position,
            Vector3::new(1.8185948536513634, 2.8322936730942847, 0.8),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            d4.velocity,
            Vector3::new(-0.4161468365471424, 0.9092974268256817, 0.2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn obstacle_motion_and_distance() {
        let obs = Obstacle {
            center: Vector3::new(1.0, 0.0, 0.0),
            velocity: Vector3::new(0.5, 0.0, 0.0),
            radius: 0.3,
        };
        assert_relative_eq!(
            obs.center_at(2.0),
            Vector3::new(2.0, 0.0, 0.0),
            epsilon = 1e-15
        );
        let p = Vector3::zeros();
        assert_relative_eq!(obs.surface_distance_at(&p, 0.0), 0.7, epsilon = 1e-15);
        assert_relative_eq!(obs.surface_distance_at(&p, 2.0), 1.7, epsilon = 1e-15);
        let shifted = obs.advanced(2.0);
        assert_relative_eq!(
            shifted.surface_distance_at(&p, 0.0),
            1.7,
            epsilon = 1e-15
        );
        // Inside reads negative.
        assert!(obs.surface_distance_at(&Vector3::new(1.1, 0.0, 0.0), 0.0) < 0.0);
    }

    #[test]
    fn variant_gates_and_names() {
        assert!(!Variant::Cempc.uses_gp());
        assert!(Variant::LbCempc.uses_gp());
        assert!(!Variant::LbCempc.uses_filter());
        assert!(Variant::LbCempcCbf.uses_filter());
        assert!(!Variant::LbCempcCbf.uses_clf());
        assert!(Variant::LbCempcMi.uses_clf());
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("LB-CEMPC-MI".parse::<Variant>().unwrap(), Variant::LbCempcMi);
        assert!("cem".parse::<Variant>().is_err());
    }

    #[test]
    fn config_toml_roundtrip_and_partial_parse() {
        let cfg = ScenarioConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.variant, cfg.variant);
        assert_eq!(back.steps(), cfg.steps());
        assert_eq!(back.cem.horizon, cfg.cem.horizon);

        let partial = ScenarioConfig::from_toml_str(
            "variant = \"lb-cempc-cbf\"\nwind_speed = 8.0\n\n[[obstacles]]\ncenter = [1.0, 2.0, 3.0]\nradius = 0.3\n",
        )
        .unwrap();
        assert_eq!(partial.variant, Variant::LbCempcCbf);
        assert_relative_eq!(partial.wind_speed, 8.0);
        assert_eq!(partial.obstacles.len(), 1);
        assert_relative_eq!(partial.obstacles[0].velocity, Vector3::zeros());
        assert_eq!(partial.cem.samples, CemConfig::default().samples);
    }

    fn mini_config() -> ScenarioConfig {
        ScenarioConfig {
            duration: 0.6,
            wind_speed: 8.0,
            obstacles: vec![Obstacle {
                center: Vector3::new(0.6, 0.4, 0.1),
                velocity: Vector3::zeros(),
                radius: 0.2,
            }],
            cem: CemConfig {
                samples: 40,
                elites: 5,
                max_iters: 3,
                horizon: 12,
                ..CemConfig::default()
            },
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn closed_loop_is_deterministic_and_learns() {
        let cfg = mini_config();
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.records.len(), cfg.steps());
        assert_eq!(a.metrics.gp_updates, cfg.steps());

        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_step_csv(&a.records, &mut csv_a).unwrap();
        write_step_csv(&b.records, &mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);

        assert!(a.metrics.rms_error.is_finite());
        assert!(a.metrics.min_barrier.is_finite());
        // First-step conventions.
        assert_eq!(a.records[0].barrier, 1.0);
        assert_eq!(a.records[0].gp_sigma[0], 1.0);
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = mini_config();
        let mut other = mini_config();
        other.seed = 99;
        let a = run(&cfg).unwrap();
        let b = run(&other).unwrap();
        let pa = a.records.last().unwrap().state.position;
        let pb = b.records.last().unwrap().state.position;
        assert!((pa - pb).norm() > 0.0);
    }

    #[test]
    fn baseline_variant_never_touches_learner_or_filter() {
        let mut cfg = mini_config();
        cfg.variant = Variant::Cempc;
        let out = run(&cfg).unwrap();
        assert_eq!(out.metrics.gp_updates, 0);
        assert_eq!(out.metrics.interventions, 0);
        for r in &out.records {
            assert_eq!(r.gp_mean, [0.0; 3]);
            assert_eq!(r.u_mpc.to_array(), r.u_applied.to_array());
        }
    }

    #[test]
    fn csv_column_count_matches_header() {
        let cfg = ScenarioConfig {
            duration: 0.04,
            cem: CemConfig {
                samples: 10,
                elites: 2,
                max_iters: 1,
                horizon: 3,
                ..CemConfig::default()
            },
            ..ScenarioConfig::default()
        };
        let out = run(&cfg).unwrap();
        let mut buf = Vec::new();
        write_step_csv(&out.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header_cols = lines.next().unwrap().split(',').count();
        for line in lines {
            assert_eq!(line.split(',').count(), header_cols);
        }
        assert_eq!(header_cols, 48);
    }

    #[test]
    fn metrics_on_empty_and_unseen_obstacles() {
        let mut cfg = mini_config();
        cfg.obstacles = vec![Obstacle {
            center: Vector3::new(100.0, 100.0, 100.0),
            velocity: Vector3::zeros(),
            radius: 0.5,
        }];
        let out = run(&cfg).unwrap();
        assert_eq!(out.metrics.avoid_times, vec![None]);
        assert_eq!(out.metrics.penetration_steps, 0);

        let empty = compute_metrics(&[], &cfg, 0);
        assert_eq!(empty.rms_error, 0.0);
        assert_eq!(empty.min_barrier, 1.0);
        assert_eq!(empty.min_clearance, None);
    }

    #[test]
    fn summary_serializes_with_stable_fields() {
        let cfg = ScenarioConfig::default();
        let metrics = compute_metrics(&[], &cfg, 0);
        let summary = RunSummary::new(&cfg, metrics);
        let json = serde_json::to_string(&summary).unwrap();
        assert!(json.starts_with("{\"variant\":\"lb-cempc-mi\""));
        assert!(json.contains("\"rms_error\":0"));
    }
}
