//! Cross-entropy-method trajectory optimization over control sequences.
//!
//! Candidate sequences are drawn from an independent Gaussian per step and
//! channel, clipped to the input box, scored by rolling out the nominal model
//! plus a learned disturbance mean, and the distribution is refit to the
//! elite fraction with exponential smoothing. The receding-horizon wrapper
//! returns the first control of the best elite sequence and the shifted
//! distribution for warm-starting the next solve.

use crate::dynamics::{step_nominal, ControlInput, QuadParams, State};
use crate::scenario::Obstacle;
use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CemError {
    #[error("elite count {elites} must be in 1..={samples}")]
    EliteCount { elites: usize, samples: usize },
    #[error("distribution holds {got} steps but the configured horizon is {expected}")]
    HorizonMismatch { expected: usize, got: usize },
    #[error("every sampled sequence diverged during rollout")]
    Diverged,
}

/// Predicted per-unit-mass disturbance acceleration as a function of world
/// velocity. Implemented by the GP learner and by [`ZeroDisturbance`].
pub trait DisturbanceModel: Sync {
    fn disturbance_mean(&self, velocity: &Vector3<f64>) -> Vector3<f64>;
}

/// No learned model: the rollout uses the bare nominal dynamics.
pub struct ZeroDisturbance;

impl DisturbanceModel for ZeroDisturbance {
    fn disturbance_mean(&self, _velocity: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
}

/// Reference point for tracking: desired position and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl DesiredState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self { position, velocity }
    }
}

/// Optimizer parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    /// Prediction horizon in steps.
    pub horizon: usize,
    /// Sampled sequences per iteration (M).
    pub samples: usize,
    /// Elite count per iteration (K).
    pub elites: usize,
    /// Iteration cap per solve (N).
    pub max_iters: usize,
    /// Variance floor: iteration stops once every channel variance is below.
    pub sigma_min: f64,
    /// Smoothing factor: new = (1 - beta) * elite statistic + beta * old.
    pub beta: f64,
    /// Step length of the prediction model (s).
    pub dt: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            samples: 100,
            elites: 10,
            max_iters: 5,
            sigma_min: 0.001,
            beta: 0.25,
            dt: 0.02,
        }
    }
}

/// Diagonal Gaussian over control sequences: one mean and variance per step
/// and channel, in the order [thrust, wx, wy, wz].
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    pub means: Vec<[f64; 4]>,
    pub variances: Vec<[f64; 4]>,
}

/// Reset variance per channel: ((upper - lower) / 2)^2.
pub fn init_variance(lower: &[f64; 4], upper: &[f64; 4]) -> [f64; 4] {
    let mut v = [0.0; 4];
    for c in 0..4 {
        let half = 0.5 * (upper[c] - lower[c]);
        v[c] = half * half;
    }
    v
}

impl SamplingDistribution {
    /// Zero means and reset variances over `horizon` steps.
    pub fn cold_start(horizon: usize, lower: &[f64; 4], upper: &[f64; 4]) -> Self {
        Self {
            means: vec![[0.0; 4]; horizon],
            variances: vec![init_variance(lower, upper); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.means.len()
    }

    pub fn max_variance(&self) -> f64 {
        self.variances
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |a, &b| a.max(b))
    }

    /// Receding-horizon warm start: drop the executed first step and append a
    /// fresh (zero-mean, reset-variance) final step.
    pub fn shift(&mut self, lower: &[f64; 4], upper: &[f64; 4]) {
        if self.means.is_empty() {
            return;
        }
        self.means.rotate_left(1);
        self.variances.rotate_left(1);
        let h = self.means.len();
        self.means[h - 1] = [0.0; 4];
        self.variances[h - 1] = init_variance(lower, upper);
    }
}

/// Stage and terminal cost weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CostSpec {
    /// Diagonal tracking weights over [position error; velocity error].
    pub q_weights: [f64; 6],
    /// Diagonal input weights over [thrust, wx, wy, wz].
    pub input_weights: [f64; 4],
    /// Obstacle penalty weight w applied as w / distance inside the
    /// activation shell.
    pub obstacle_weight: f64,
    /// Surface distance below which the obstacle penalty activates (m).
    pub activation_radius: f64,
    /// Distance floor for the penalty, so states on or inside the surface
    /// pay the finite cap w / min_distance.
    pub min_distance: f64,
    /// Multiplier on the tracking quadratic at the final rollout state.
    pub terminal_weight: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self {
            q_weights: [8.5, 8.5, 8.5, 1.5, 1.5, 1.5],
            input_weights: [0.0; 4],
            obstacle_weight: 10.0,
            activation_radius: 0.8,
            min_distance: 0.01,
            terminal_weight: 1.0,
        }
    }
}

fn tracking_quadratic(state: &State, desired: &DesiredState, q: &[f64; 6]) -> f64 {
    let ep = state.position - desired.position;
    let ev = state.velocity - desired.velocity;
    q[0] * ep.x * ep.x
        + q[1] * ep.y * ep.y
        + q[2] * ep.z * ep.z
        + q[3] * ev.x * ev.x
        + q[4] * ev.y * ev.y
        + q[5] * ev.z * ev.z
}

/// Stage cost: tracking quadratic, obstacle proximity penalty over detected
/// obstacles propagated to `elapsed` seconds past detection, and input cost.
pub fn running_cost(
    state: &State,
    input: &ControlInput,
    desired: &DesiredState,
    obstacles: &[Obstacle],
    elapsed: f64,
    spec: &CostSpec,
) -> f64 {
    let mut cost = tracking_quadratic(state, desired, &spec.q_weights);
    for obs in obstacles {
        let r = obs.surface_distance_at(&state.position, elapsed);
        if r < spec.activation_radius {
            cost += spec.obstacle_weight / r.max(spec.min_distance);
        }
    }
    let u = input.to_array();
    for c in 0..4 {
        cost += spec.input_weights[c] * u[c] * u[c];
    }
    cost
}

/// Terminal cost at the end of the horizon.
pub fn terminal_cost(state: &State, desired: &DesiredState, spec: &CostSpec) -> f64 {
    spec.terminal_weight * tracking_quadratic(state, desired, &spec.q_weights)
}

/// Everything a rollout needs besides the controls themselves. `refs` must
/// hold horizon + 1 entries (stage references plus the terminal one).
pub struct CostContext<'a, P: DisturbanceModel> {
    pub refs: &'a [DesiredState],
    pub obstacles: &'a [Obstacle],
    pub predictor: &'a P,
    pub cost: &'a CostSpec,
    pub params: &'a QuadParams,
    pub dt: f64,
}

/// A scored rollout. `cost` is infinite when the model blew up or hit a
/// kinematic singularity before the horizon.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub states: Vec<State>,
    pub cost: f64,
}

/// Roll the nominal-plus-learned model forward under a control sequence and
/// accumulate the cost. The learned disturbance mean is evaluated at each
/// step's starting velocity and held constant across the RK4 stages.
pub fn evaluate_sequence<P: DisturbanceModel>(
    x0: &State,
    controls: &[[f64; 4]],
    ctx: &CostContext<'_, P>,
) -> Rollout {
    debug_assert_eq!(ctx.refs.len(), controls.len() + 1);
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut x = *x0;
    states.push(x);
    let mut cost = 0.0;
    for (k, u_arr) in controls.iter().enumerate() {
        let u = ControlInput::from_array(*u_arr);
        cost += running_cost(&x, &u, &ctx.refs[k], ctx.obstacles, k as f64 * ctx.dt, ctx.cost);
        let d = ctx.predictor.disturbance_mean(&x.velocity);
        match step_nominal(&x, &u, &d, ctx.dt, ctx.params) {
            Ok(next) if next.is_finite() => x = next,
            _ => {
                return Rollout {
                    states,
                    cost: f64::INFINITY,
                }
            }
        }
        states.push(x);
    }
    cost += terminal_cost(&x, &ctx.refs[controls.len()], ctx.cost);
    if !cost.is_finite() {
        cost = f64::INFINITY;
    }
    Rollout { states, cost }
}

/// Result of one full CEM solve.
#[derive(Debug, Clone)]
pub struct CemSolution {
    /// Elite-best sequence of the final iteration (the warm mean sequence if
    /// the variance floor was already met at entry).
    pub best: Vec<[f64; 4]>,
    pub best_cost: f64,
    /// Distribution after the final refit, before any shift.
    pub dist: SamplingDistribution,
    pub iterations: usize,
    /// Best cost seen up to and including each iteration; non-increasing.
    pub best_so_far: Vec<f64>,
}

fn clamp_sequence(seq: &mut [[f64; 4]], lower: &[f64; 4], upper: &[f64; 4]) {
    for step in seq.iter_mut() {
        for c in 0..4 {
            step[c] = step[c].clamp(lower[c], upper[c]);
        }
    }
}

/// Minimize `score` over control sequences by iterated elite refitting.
///
/// Per iteration, all `M * H * 4` standard-normal draws are taken serially
/// from `rng` before the (possibly parallel) scoring pass, so results do not
/// depend on the thread schedule.
pub fn cem_solve<F>(
    dist: SamplingDistribution,
    cfg: &CemConfig,
    lower: &[f64; 4],
    upper: &[f64; 4],
    rng: &mut ChaCha8Rng,
    score: F,
) -> Result<CemSolution, CemError>
where
    F: Fn(&[[f64; 4]]) -> f64 + Sync,
{
    if cfg.elites == 0 || cfg.elites > cfg.samples {
        return Err(CemError::EliteCount {
            elites: cfg.elites,
            samples: cfg.samples,
        });
    }
    if dist.horizon() != cfg.horizon {
        return Err(CemError::HorizonMismatch {
            expected: cfg.horizon,
            got: dist.horizon(),
        });
    }
    let h = cfg.horizon;
    let m = cfg.samples;
    let mut dist = dist;
    let mut iterations = 0;
    let mut best: Option<(Vec<[f64; 4]>, f64)> = None;
    let mut best_so_far = Vec::new();

    while iterations < cfg.max_iters && dist.max_variance() > cfg.sigma_min {
        // Serial draw pass.
        let mut samples = vec![vec![[0.0f64; 4]; h]; m];
        for sample in samples.iter_mut() {
            for (k, step) in sample.iter_mut().enumerate() {
                for c in 0..4 {
                    let z: f64 = StandardNormal.sample(rng);
                    let v = dist.means[k][c] + dist.variances[k][c].sqrt() * z;
                    step[c] = v.clamp(lower[c], upper[c]);
                }
            }
        }
        // Scoring pass; order-stable regardless of parallelism.
        let costs: Vec<f64> = samples
            .par_iter()
            .map(|s| {
                let c = score(s);
                if c.is_nan() {
                    f64::INFINITY
                } else {
                    c
                }
            })
            .collect();

        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| costs[a].partial_cmp(&costs[b]).unwrap().then(a.cmp(&b)));
        if costs[order[0]].is_infinite() {
            return Err(CemError::Diverged);
        }
        let elite = &order[..cfg.elites];

        for k in 0..h {
            for c in 0..4 {
                let mut mean = 0.0;
                for &i in elite {
                    mean += samples[i][k][c];
                }
                mean /= cfg.elites as f64;
                let mut var = 0.0;
                for &i in elite {
                    let d = samples[i][k][c] - mean;
                    var += d * d;
                }
                var /= cfg.elites as f64;
                dist.means[k][c] = (1.0 - cfg.beta) * mean + cfg.beta * dist.means[k][c];
                dist.variances[k][c] = (1.0 - cfg.beta) * var + cfg.beta * dist.variances[k][c];
            }
        }

        let iter_best_cost = costs[order[0]];
        let iter_best = samples[order[0]].clone();
        best = Some((iter_best, iter_best_cost));
        let running = best_so_far
            .last()
            .copied()
            .unwrap_or(f64::INFINITY)
            .min(iter_best_cost);
        best_so_far.push(running);
        iterations += 1;
    }

    let (best, best_cost) = match best {
        Some(b) => b,
        None => {
            // Variance floor already met: fall back to the warm mean sequence.
            let mut seq = dist.means.clone();
            clamp_sequence(&mut seq, lower, upper);
            let c = score(&seq);
            (seq, c)
        }
    };
    Ok(CemSolution {
        best,
        best_cost,
        dist,
        iterations,
        best_so_far,
    })
}

/// Per-step optimizer diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct CemDiagnostics {
    pub iterations: usize,
    pub best_cost: f64,
    pub final_max_variance: f64,
}

/// One receding-horizon step: solve from the warm distribution, emit the
/// first control of the best sequence, and shift the distribution.
pub fn mpc_step<P: DisturbanceModel>(
    x0: &State,
    warm: SamplingDistribution,
    cfg: &CemConfig,
    rng: &mut ChaCha8Rng,
    ctx: &CostContext<'_, P>,
) -> Result<(ControlInput, SamplingDistribution, CemDiagnostics), CemError> {
    let (lower, upper) = ctx.params.control_bounds();
    let sol = cem_solve(warm, cfg, &lower, &upper, rng, |controls| {
        evaluate_sequence(x0, controls, ctx).cost
    })?;
    let u = ctx.params.clamp_control(ControlInput::from_array(sol.best[0]));
    let mut next = sol.dist;
    next.shift(&lower, &upper);
    let diag = CemDiagnostics {
        iterations: sol.iterations,
        best_cost: sol.best_cost,
        final_max_variance: next.max_variance(),
    };
    Ok((u, next, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn bounds() -> ([f64; 4], [f64; 4]) {
        QuadParams::default().control_bounds()
    }

    #[test]
    fn init_variance_values() {
        let (lo, hi) = bounds();
        let v = init_variance(&lo, &hi);
        assert_relative_eq!(v[0], 0.4225, epsilon = 1e-12);
        assert_relative_eq!(v[1], 12.1801, epsilon = 1e-12);
        assert_relative_eq!(v[2], 12.1801, epsilon = 1e-12);
        assert_relative_eq!(v[3], 27.4576, epsilon = 1e-12);
    }

    #[test]
    fn shift_drops_first_and_resets_last() {
        let (lo, hi) = bounds();
        let mut d = SamplingDistribution::cold_start(3, &lo, &hi);
        d.means = vec![[1.0; 4], [2.0; 4], [3.0; 4]];
        d.variances = vec![[0.1; 4], [0.2; 4], [0.3; 4]];
        d.shift(&lo, &hi);
        assert_eq!(d.means[0], [2.0; 4]);
        assert_eq!(d.means[1], [3.0; 4]);
        assert_eq!(d.means[2], [0.0; 4]);
        assert_eq!(d.variances[0], [0.2; 4]);
        assert_eq!(d.variances[2], init_variance(&lo, &hi));
    }

    #[test]
    fn running_cost_cases() {
        let spec = CostSpec::default();
        let desired = DesiredState::new(Vector3::zeros(), Vector3::zeros());
        let hover = ControlInput {
            thrust: 0.7848,
            rates: Vector3::zeros(),
        };
        // Unit position error along x.
        let state = State {
            position: Vector3::new(1.0, 0.0, 0.0),
            velocity: Vector3::zeros(),
            attitude: Vector3::zeros(),
        };
        assert_relative_eq!(
            running_cost(&state, &hover, &desired, &[], 0.0, &spec),
            8.5,
            epsilon = 1e-12
        );
        // Obstacle half a meter away adds w / r = 20.
        let obs = Obstacle {
            center: Vector3::new(1.8, 0.0, 0.0),
            velocity: Vector3::zeros(),
            radius: 0.3,
        };
        assert_relative_eq!(
            running_cost(&state, &hover, &desired, &[obs.clone()], 0.0, &spec),
            8.5 + 20.0,
            epsilon = 1e-12
        );
        // Inside the obstacle the penalty caps at w / min_distance.
        let inside = State {
            position: Vector3::new(1.75, 0.0, 0.0),
            velocity: Vector3::zeros(),
            attitude: Vector3::zeros(),
        };
        let got = running_cost(&inside, &hover, &desired, &[obs], 0.0, &spec);
        assert_relative_eq!(got, 8.5 * 1.75 * 1.75 + 1000.0, epsilon = 1e-9);
        // Input weights add a quadratic term.
        let mut weighted = CostSpec::default();
        weighted.input_weights = [1.0, 1.0, 1.0, 1.0];
        let u = ControlInput::from_array([1.0, 2.0, 3.0, -2.0]);
        let with_u = running_cost(&state, &u, &desired, &[], 0.0, &weighted);
        let with_hover = running_cost(&state, &hover, &desired, &[], 0.0, &weighted);
        assert_relative_eq!(
            with_u - with_hover,
            (1.0 + 4.0 + 9.0 + 4.0) - 0.7848 * 0.7848,
            epsilon = 1e-9
        );
    }

    #[test]
    fn rollout_matches_plant_without_disturbance() {
        // With the drag channel disabled the prediction model and the plant
        // are the same system, so the rollout must reproduce the simulated
        // trajectory exactly.
        let mut params = QuadParams::default();
        params.drag_gain = 0.0;
        let spec = CostSpec::default();
        let refs = vec![
            DesiredState::new(Vector3::zeros(), Vector3::zeros());
            6
        ];
        let controls = vec![
            [0.9, 0.2, -0.1, 0.05],
            [0.8, -0.2, 0.1, 0.0],
            [1.0, 0.0, 0.3, -0.2],
            [0.7848, 0.1, 0.0, 0.1],
            [0.85, -0.1, -0.2, 0.0],
        ];
        let ctx = CostContext {
            refs: &refs,
            obstacles: &[],
            predictor: &ZeroDisturbance,
            cost: &spec,
            params: &params,
            dt: 0.02,
        };
        let x0 = State::zero();
        let rollout = evaluate_sequence(&x0, &controls, &ctx);
        let mut x = x0;
        for (k, u) in controls.iter().enumerate() {
            x = step(
                &x,
                &ControlInput::from_array(*u),
                &Vector3::zeros(),
                0.02,
                &params,
            )
            .unwrap();
            assert_eq!(rollout.states[k + 1], x);
        }
        assert!(rollout.cost.is_finite());
    }

    fn quadratic_score(target: [f64; 4]) -> impl Fn(&[[f64; 4]]) -> f64 + Sync {
        move |controls: &[[f64; 4]]| {
            controls
                .iter()
                .map(|u| {
                    (0..4)
                        .map(|c| {
                            let d = u[c] - target[c];
                            d * d
                        })
                        .sum::<f64>()
                })
                .sum()
        }
    }

    #[test]
    fn converges_on_separable_quadratic() {
        let (lo, hi) = bounds();
        let target = [0.9, 0.5, -1.0, 2.0];
        let cfg = CemConfig {
            horizon: 2,
            samples: 100,
            elites: 10,
            max_iters: 15,
            sigma_min: 1e-9,
            beta: 0.1,
            dt: 0.02,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = SamplingDistribution::cold_start(2, &lo, &hi);
        let sol = cem_solve(d, &cfg, &lo, &hi, &mut rng, quadratic_score(target)).unwrap();
        for step in &sol.best {
            for c in 0..4 {
                assert!(
                    (step[c] - target[c]).abs() < 1e-2,
                    "channel {c}: {} vs {}",
                    step[c],
                    target[c]
                );
            }
        }
    }

    #[test]
    fn beta_one_freezes_distribution() {
        let (lo, hi) = bounds();
        let cfg = CemConfig {
            horizon: 2,
            samples: 50,
            elites: 5,
            max_iters: 3,
            beta: 1.0,
            ..CemConfig::default()
        };
        let init = SamplingDistribution::cold_start(2, &lo, &hi);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sol = cem_solve(init.clone(), &cfg, &lo, &hi, &mut rng, quadratic_score([0.5; 4])).unwrap();
        assert_eq!(sol.dist, init);
        assert_eq!(sol.iterations, 3);
    }

    #[test]
    fn variance_floor_returns_warm_mean_without_iterating() {
        let (lo, hi) = bounds();
        let cfg = CemConfig {
            horizon: 2,
            sigma_min: 0.001,
            ..CemConfig::default()
        };
        let mut d = SamplingDistribution::cold_start(2, &lo, &hi);
        d.means = vec![[0.6, 0.1, -0.2, 0.3]; 2];
        d.variances = vec![[1e-6; 4]; 2];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sol = cem_solve(d.clone(), &cfg, &lo, &hi, &mut rng, quadratic_score([0.0; 4])).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.best, d.means);
    }

    #[test]
    fn all_divergent_samples_error() {
        let (lo, hi) = bounds();
        let cfg = CemConfig {
            horizon: 1,
            samples: 20,
            elites: 2,
            ..CemConfig::default()
        };
        let d = SamplingDistribution::cold_start(1, &lo, &hi);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = cem_solve(d, &cfg, &lo, &hi, &mut rng, |_: &[[f64; 4]]| f64::INFINITY);
        assert!(matches!(r, Err(CemError::Diverged)));
    }

    #[test]
    fn seeded_determinism() {
        let (lo, hi) = bounds();
        let cfg = CemConfig {
            horizon: 3,
            ..CemConfig::default()
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let d = SamplingDistribution::cold_start(3, &lo, &hi);
            cem_solve(d, &cfg, &lo, &hi, &mut rng, quadratic_score([0.4, 0.0, 0.0, 0.0])).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.best, b.best);
        assert_eq!(a.dist, b.dist);
        assert_eq!(a.best_cost.to_bits(), b.best_cost.to_bits());
    }

    #[test]
    fn elite_count_validation() {
        let (lo, hi) = bounds();
        let cfg = CemConfig {
            horizon: 1,
            samples: 10,
            elites: 11,
            ..CemConfig::default()
        };
        let d = SamplingDistribution::cold_start(1, &lo, &hi);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            cem_solve(d, &cfg, &lo, &hi, &mut rng, quadratic_score([0.0; 4])),
            Err(CemError::EliteCount { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn best_sequence_respects_bounds(seed in 0u64..500) {
            let (lo, hi) = bounds();
            let cfg = CemConfig { horizon: 4, samples: 30, elites: 5, max_iters: 3, ..CemConfig::default() };
            let d = SamplingDistribution::cold_start(4, &lo, &hi);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sol = cem_solve(d, &cfg, &lo, &hi, &mut rng, quadratic_score([2.0, 5.0, -5.0, 9.0])).unwrap();
            for step in &sol.best {
                for c in 0..4 {
                    prop_assert!(step[c] >= lo[c] - 1e-12 && step[c] <= hi[c] + 1e-12);
                }
            }
            // The per-iteration best-so-far never increases.
            for w in sol.best_so_far.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
            }
        }
    }
}
