//! Minimal-intervention safety filtering with barrier and Lyapunov
//! constraints that account for learned-model uncertainty.
//!
//! A ball inside sensed free space defines a position barrier h. Because h
//! has relative degree two in the thrust channel, the filter constrains the
//! extended barrier h_e = dh/dt + gamma h, which thrust enters directly. Both
//! the barrier and the tracking-Lyapunov constraint are affine in the input;
//! the worst case of the learned disturbance over its confidence box tightens
//! their offsets. A small dense active-set QP finds the input closest to the
//! requested one that satisfies the (slack-softened) constraints and the
//! input box.

use crate::cem::DesiredState;
use crate::dynamics::{thrust_axis, ControlInput, QuadParams, State};
use crate::igp::Prediction;
use crate::scenario::Obstacle;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("active-set iteration cap {cap} reached without convergence")]
    IterationLimit { cap: usize },
    #[error("equality-constrained subproblem is singular")]
    SingularKkt,
}

/// Filter gains, uncertainty scaling and free-space geometry parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetySpec {
    /// Class-K gain: kappa(h) = kappa_gain * h.
    pub kappa_gain: f64,
    /// Required Lyapunov decrease rate alpha in dV/dt <= -alpha V.
    pub clf_rate: f64,
    /// Extended-barrier mixing gain in h_e = dh/dt + gamma h.
    pub gamma: f64,
    /// Confidence scaling on the learned-disturbance standard deviation.
    pub c_delta: f64,
    /// Isotropic Lyapunov weights on position and velocity error.
    pub q_pos: f64,
    pub q_vel: f64,
    /// Quadratic penalties on the barrier and Lyapunov slack variables.
    pub slack_barrier: f64,
    pub slack_clf: f64,
    /// Clearance subtracted from the free-space ball radius (m).
    pub margin: f64,
    /// Smallest ball radius emitted even when inside an obstacle (m).
    pub min_radius: f64,
    /// Obstacle sensing range, which also caps the ball radius (m).
    pub sensing_range: f64,
    /// Active-set iteration cap.
    pub qp_max_iters: usize,
}

impl Default for SafetySpec {
    fn default() -> Self {
        Self {
            kappa_gain: 10.0,
            clf_rate: 0.1,
            gamma: 1.0,
            c_delta: 3.0,
            q_pos: 0.8,
            q_vel: 0.2,
            slack_barrier: 1e6,
            slack_clf: 1e4,
            margin: 0.05,
            min_radius: 0.01,
            sensing_range: 2.0,
            qp_max_iters: 100,
        }
    }
}

/// Safe region { p : (p - center)^T M (p - center) <= 1 } with M symmetric
/// positive definite. Balls use M = I / r^2.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: Vector3<f64>,
    pub inv_shape: Matrix3<f64>,
}

impl Ellipsoid {
    pub fn ball(center: Vector3<f64>, radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        Self {
            center,
            inv_shape: Matrix3::identity() / (radius * radius),
        }
    }

    /// Radius along the first axis; the actual radius for balls.
    pub fn radius(&self) -> f64 {
        (1.0 / self.inv_shape[(0, 0)]).sqrt()
    }

    /// Barrier value h(p) = 1 - (p - center)^T M (p - center); positive
    /// inside, zero on the boundary.
    pub fn barrier(&self, p: &Vector3<f64>) -> f64 {
        let e = p - self.center;
        1.0 - (self.inv_shape * e).dot(&e)
    }

    /// dh/dp = -2 M (p - center).
    pub fn barrier_gradient(&self, p: &Vector3<f64>) -> Vector3<f64> {
        -2.0 * (self.inv_shape * (p - self.center))
    }
}

/// Largest ball around `p` certified free: radius is the smaller of the
/// sensing range and the nearest detected obstacle surface, minus a margin,
/// floored at `min_radius`. The flag reports whether `p` itself is inside an
/// obstacle.
pub fn safe_ellipsoid(
    p: &Vector3<f64>,
    detected: &[Obstacle],
    spec: &SafetySpec,
) -> (Ellipsoid, bool) {
    let mut nearest = f64::INFINITY;
    for obs in detected {
        nearest = nearest.min(obs.surface_distance_at(p, 0.0));
    }
    let raw = nearest.min(spec.sensing_range) - spec.margin;
    let violated = nearest < 0.0;
    (Ellipsoid::ball(*p, raw.max(spec.min_radius)), violated)
}

/// Extended barrier h_e = dh_pos/dt + gamma h_pos, which has relative degree
/// one in the thrust channel.
pub fn extended_barrier(ell: &Ellipsoid, state: &State, gamma: f64) -> f64 {
    let e = state.position - ell.center;
    let me = ell.inv_shape * e;
    -2.0 * me.dot(&state.velocity) + gamma * (1.0 - me.dot(&e))
}

/// Gradients of h_e with respect to position and velocity. The attitude
/// gradient is identically zero.
pub fn extended_barrier_gradient(
    ell: &Ellipsoid,
    state: &State,
    gamma: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let e = state.position - ell.center;
    let me = ell.inv_shape * e;
    let mv = ell.inv_shape * state.velocity;
    (-2.0 * (mv + gamma * me), -2.0 * me)
}

/// Tracking Lyapunov function V = q_pos |p - p_d|^2 + q_vel |v - v_d|^2.
pub fn clf_value(state: &State, desired: &DesiredState, spec: &SafetySpec) -> f64 {
    let ep = state.position - desired.position;
    let ev = state.velocity - desired.velocity;
    spec.q_pos * ep.norm_squared() + spec.q_vel * ev.norm_squared()
}

/// Gradients of V with respect to position and velocity.
pub fn clf_gradient(
    state: &State,
    desired: &DesiredState,
    spec: &SafetySpec,
) -> (Vector3<f64>, Vector3<f64>) {
    (
        2.0 * spec.q_pos * (state.position - desired.position),
        2.0 * spec.q_vel * (state.velocity - desired.velocity),
    )
}

/// Constraint kind, which selects the slack variable and its penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Barrier,
    Lyapunov,
}

/// Input-affine constraint row: `row . u + offset <= slack`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub row: [f64; 4],
    pub offset: f64,
    pub kind: ConstraintKind,
}

impl AffineConstraint {
    /// Left-hand side `row . u + offset` at a given input.
    pub fn evaluate(&self, u: &ControlInput) -> f64 {
        let ua = u.to_array();
        self.row.iter().zip(ua.iter()).map(|(a, b)| a * b).sum::<f64>() + self.offset
    }

    pub fn satisfied(&self, u: &ControlInput) -> bool {
        self.evaluate(u) <= 0.0
    }
}

/// Drift, input, mean-disturbance and worst-case-uncertainty terms of the
/// time derivative of a function with gradients (grad_p, grad_v) along the
/// control-affine quadrotor model. Only thrust appears in the input row
/// because neither h_e nor V depends on attitude.
fn directional_terms(
    grad_p: &Vector3<f64>,
    grad_v: &Vector3<f64>,
    state: &State,
    gp: &[Prediction; 3],
    c_delta: f64,
    params: &QuadParams,
) -> (f64, f64, f64, f64) {
    let drift = grad_p.dot(&state.velocity) - params.gravity * grad_v.z;
    let thrust_coeff = grad_v.dot(&thrust_axis(&state.attitude)) / params.mass;
    let mut mean = 0.0;
    let mut worst = 0.0;
    for axis in 0..3 {
        mean += grad_v[axis] * gp[axis].mean;
        worst += grad_v[axis] * gp[axis].variance.max(0.0).sqrt();
    }
    (drift, thrust_coeff, mean, c_delta * worst.abs())
}

/// Robustified barrier condition as `row . u + offset <= 0`:
/// the worst-case derivative of h_e must not fall below -kappa(h_e).
pub fn cbf_constraint(
    state: &State,
    ell: &Ellipsoid,
    gp: &[Prediction; 3],
    spec: &SafetySpec,
    params: &QuadParams,
) -> AffineConstraint {
    let h_e = extended_barrier(ell, state, spec.gamma);
    let (grad_p, grad_v) = extended_barrier_gradient(ell, state, spec.gamma);
    let (drift, thrust_coeff, mean, worst) =
        directional_terms(&grad_p, &grad_v, state, gp, spec.c_delta, params);
    AffineConstraint {
        row: [-thrust_coeff, 0.0, 0.0, 0.0],
        offset: -drift - mean + worst - spec.kappa_gain * h_e,
        kind: ConstraintKind::Barrier,
    }
}

/// Robustified Lyapunov growth limit as `row . u + offset <= 0`: the
/// worst-case derivative of V may not exceed clf_rate * V. Rather than
/// forcing decay, this caps how fast tracking is allowed to deteriorate, so
/// it only binds while the error is actively diverging. The reference in V
/// is held fixed when differentiating, so the rate is the Lie derivative of
/// V along the vehicle dynamics alone.
pub fn clf_constraint(
    state: &State,
    desired: &DesiredState,
    gp: &[Prediction; 3],
    spec: &SafetySpec,
    params: &QuadParams,
) -> AffineConstraint {
    let v = clf_value(state, desired, spec);
    let (grad_p, grad_v) = clf_gradient(state, desired, spec);
    let (flow, thrust_coeff, mean, worst) =
        directional_terms(&grad_p, &grad_v, state, gp, spec.c_delta, params);
    AffineConstraint {
        row: [thrust_coeff, 0.0, 0.0, 0.0],
        offset: flow + mean + worst - spec.clf_rate * v,
        kind: ConstraintKind::Lyapunov,
    }
}

/// Slack-softened projection QP:
/// minimize sum_i (weights_i (u_i - u_ref_i))^2 + sum_j slack_penalty_j s_j^2
/// subject to row_j . u + offset_j <= s_j and the input box.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub u_ref: [f64; 4],
    pub lower: [f64; 4],
    pub upper: [f64; 4],
    /// Per-channel objective scaling; the filter uses 1 / (upper - lower) so
    /// thrust and rate deviations are commensurable.
    pub weights: [f64; 4],
    pub constraints: Vec<AffineConstraint>,
    pub slack_penalties: Vec<f64>,
    pub max_iters: usize,
}

impl QpProblem {
    /// Standard filter problem: box-width channel scaling, slack penalties
    /// chosen by constraint kind.
    pub fn filter(
        u_ref: [f64; 4],
        constraints: Vec<AffineConstraint>,
        spec: &SafetySpec,
        params: &QuadParams,
    ) -> Self {
        let (lower, upper) = params.control_bounds();
        let mut weights = [0.0; 4];
        for c in 0..4 {
            weights[c] = 1.0 / (upper[c] - lower[c]);
        }
        let slack_penalties = constraints
            .iter()
            .map(|c| match c.kind {
                ConstraintKind::Barrier => spec.slack_barrier,
                ConstraintKind::Lyapunov => spec.slack_clf,
            })
            .collect();
        Self {
            u_ref,
            lower,
            upper,
            weights,
            constraints,
            slack_penalties,
            max_iters: spec.qp_max_iters,
        }
    }
}

/// QP solution with the active-set certificate: `multipliers` covers all
/// inequality rows in the order [constraints.., upper bounds u0..u3, lower
/// bounds u0..u3], nonzero only on the final active set.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u: [f64; 4],
    pub slacks: Vec<f64>,
    pub iterations: usize,
    pub multipliers: Vec<f64>,
}

struct Inequality {
    /// Coefficients over z = (u, slacks).
    coeffs: Vec<(usize, f64)>,
    bound: f64,
}

impl Inequality {
    fn value(&self, z: &DVector<f64>) -> f64 {
        self.coeffs.iter().map(|&(i, a)| a * z[i]).sum()
    }

    fn dot_dir(&self, p: &DVector<f64>) -> f64 {
        self.coeffs.iter().map(|&(i, a)| a * p[i]).sum()
    }
}

/// Dense primal active-set solve. The problem is strictly convex (diagonal
/// positive Hessian) and every reachable active set is linearly independent:
/// box rows touch distinct coordinates and each general row carries its own
/// slack column.
pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, QpError> {
    let k = problem.constraints.len();
    let n = 4 + k;

    let mut hess = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for c in 0..4 {
        let w2 = problem.weights[c] * problem.weights[c];
        hess[c] = 2.0 * w2;
        grad[c] = -2.0 * w2 * problem.u_ref[c];
    }
    for j in 0..k {
        hess[4 + j] = 2.0 * problem.slack_penalties[j];
    }

    // Inequality list: general rows first, then upper and lower box rows.
    let mut ineqs = Vec::with_capacity(k + 8);
    for (j, con) in problem.constraints.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = (0..4)
            .filter(|&c| con.row[c] != 0.0)
            .map(|c| (c, con.row[c]))
            .collect();
        coeffs.push((4 + j, -1.0));
        ineqs.push(Inequality {
            coeffs,
            bound: -con.offset,
        });
    }
    for c in 0..4 {
        ineqs.push(Inequality {
            coeffs: vec![(c, 1.0)],
            bound: problem.upper[c],
        });
    }
    for c in 0..4 {
        ineqs.push(Inequality {
            coeffs: vec![(c, -1.0)],
            bound: -problem.lower[c],
        });
    }

    // Feasible start: clamp the reference, open each slack just enough.
    let mut z = DVector::zeros(n);
    for c in 0..4 {
        z[c] = problem.u_ref[c].clamp(problem.lower[c], problem.upper[c]);
    }
    for j in 0..k {
        let mut row_u = problem.constraints[j].offset;
        for &(i, a) in &ineqs[j].coeffs {
            if i < 4 {
                row_u += a * z[i];
            }
        }
        z[4 + j] = row_u.max(0.0);
    }

    let mut active: Vec<usize> = Vec::new();
    for iter in 1..=problem.max_iters {
        let (z_eq, nu) = solve_eqp(&hess, &grad, &ineqs, &active)?;
        let p = &z_eq - &z;
        if p.norm() <= 1e-11 {
            let (worst_idx, worst) = nu
                .iter()
                .enumerate()
                .fold((usize::MAX, 0.0f64), |acc, (i, &v)| {
                    if v < acc.1 {
                        (i, v)
                    } else {
                        acc
                    }
                });
            if worst >= -1e-9 {
                let mut multipliers = vec![0.0; ineqs.len()];
                for (slot, &ci) in active.iter().enumerate() {
                    multipliers[ci] = nu[slot];
                }
                let mut u = [0.0; 4];
                for c in 0..4 {
                    u[c] = z[c];
                }
                let slacks = (0..k).map(|j| z[4 + j]).collect();
                return Ok(QpSolution {
                    u,
                    slacks,
                    iterations: iter,
                    multipliers,
                });
            }
            active.remove(worst_idx);
            continue;
        }
        let mut alpha = 1.0;
        let mut blocker = None;
        for (ci, ineq) in ineqs.iter().enumerate() {
            if active.contains(&ci) {
                continue;
            }
            let d = ineq.dot_dir(&p);
            if d > 1e-12 {
                let room = (ineq.bound - ineq.value(&z)) / d;
                if room < alpha {
                    alpha = room.max(0.0);
                    blocker = Some(ci);
                }
            }
        }
        z += alpha * &p;
        if let Some(ci) = blocker {
            if alpha < 1.0 {
                active.push(ci);
            }
        }
    }
    Err(QpError::IterationLimit {
        cap: problem.max_iters,
    })
}

/// Equality-constrained subproblem via the dense KKT system.
fn solve_eqp(
    hess: &[f64],
    grad: &[f64],
    ineqs: &[Inequality],
    active: &[usize],
) -> Result<(DVector<f64>, Vec<f64>), QpError> {
    let n = hess.len();
    let m = active.len();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    let mut rhs = DVector::zeros(n + m);
    for i in 0..n {
        kkt[(i, i)] = hess[i];
        rhs[i] = -grad[i];
    }
    for (slot, &ci) in active.iter().enumerate() {
        for &(i, a) in &ineqs[ci].coeffs {
            kkt[(i, n + slot)] = a;
            kkt[(n + slot, i)] = a;
        }
        rhs[n + slot] = ineqs[ci].bound;
    }
    let sol = kkt.lu().solve(&rhs).ok_or(QpError::SingularKkt)?;
    let z = DVector::from_iterator(n, (0..n).map(|i| sol[i]));
    let nu = (0..m).map(|s| sol[n + s]).collect();
    Ok((z, nu))
}

/// Outcome of the minimal-intervention filter for one control step.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub u: ControlInput,
    pub intervened: bool,
    /// Slack per constraint, in input order; zeros on passthrough.
    pub slacks: Vec<f64>,
    pub qp_iterations: usize,
}

/// Pass the requested input through untouched whenever it already satisfies
/// every constraint and the box; otherwise solve the projection QP.
pub fn mi_filter(
    u_mpc: &ControlInput,
    constraints: Vec<AffineConstraint>,
    spec: &SafetySpec,
    params: &QuadParams,
) -> Result<FilterOutcome, QpError> {
    let (lower, upper) = params.control_bounds();
    let ua = u_mpc.to_array();
    let in_box = (0..4).all(|c| ua[c] >= lower[c] && ua[c] <= upper[c]);
    if in_box && constraints.iter().all(|c| c.satisfied(u_mpc)) {
        let k = constraints.len();
        return Ok(FilterOutcome {
            u: *u_mpc,
            intervened: false,
            slacks: vec![0.0; k],
            qp_iterations: 0,
        });
    }
    let problem = QpProblem::filter(ua, constraints, spec, params);
    let sol = solve_qp(&problem)?;
    Ok(FilterOutcome {
        u: ControlInput::from_array(sol.u),
        intervened: true,
        slacks: sol.slacks,
        qp_iterations: sol.iterations,
    })
}
