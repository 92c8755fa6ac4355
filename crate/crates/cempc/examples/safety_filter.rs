//! Builds the barrier and Lyapunov constraints around a vehicle approaching
//! an obstacle and shows the minimal-intervention projection. The safe ball
//! comes from a slightly earlier position, the same one-step lag the closed
//! loop uses: a ball centered exactly on the vehicle has no thrust leverage.

use cempc::cem::DesiredState;
use cempc::dynamics::{ControlInput, QuadParams, State};
use cempc::igp::Prediction;
use cempc::safety::{
    cbf_constraint, clf_constraint, extended_barrier, mi_filter, safe_ellipsoid, SafetySpec,
};
use cempc::scenario::Obstacle;
use nalgebra::Vector3;

fn main() {
    let params = QuadParams::default();
    let spec = SafetySpec::default();
    let gp: [Prediction; 3] = [Prediction { mean: 0.0, variance: 0.01 }; 3];
    let hover = ControlInput {
        thrust: params.hover_thrust(),
        rates: Vector3::zeros(),
    };

    // Case 1: drifting slowly toward a wall of obstacle 1.6 m away, upright.
    let mut cruise = State::zero();
    cruise.velocity = Vector3::new(0.5, 0.0, 0.0);
    let obstacles = [Obstacle {
        center: Vector3::new(2.0, 0.0, 0.0),
        velocity: Vector3::zeros(),
        radius: 0.4,
    }];
    let lag = 0.1;
    let earlier = cruise.position - cruise.velocity * lag;
    let (ball, _) = safe_ellipsoid(&earlier, &obstacles, &spec);
    let desired = DesiredState::new(cruise.position, cruise.velocity);
    let constraints = vec![
        cbf_constraint(&cruise, &ball, &gp, &spec, &params),
        clf_constraint(&cruise, &desired, &gp, &spec, &params),
    ];
    println!(
        "cruise: ball r={:.2} m, h_e={:+.3}, barrier row/offset = {:+.3}/{:+.3}",
        ball.radius(),
        extended_barrier(&ball, &cruise, spec.gamma),
        constraints[0].row[0],
        constraints[0].offset
    );
    let out = mi_filter(&hover, constraints, &spec, &params).expect("qp solves");
    println!(
        "  hover request passes through: intervened={} thrust {:.3} -> {:.3}\n",
        out.intervened, hover.thrust, out.u.thrust
    );

    // Case 2: closing fast on the same wall, pitched 30 degrees into it, full
    // throttle requested. The barrier condition caps the thrust.
    let mut hot = State::zero();
    hot.position = Vector3::new(0.9, 0.0, 0.0);
    hot.velocity = Vector3::new(1.05, 0.0, 0.0);
    hot.attitude = Vector3::new(0.0, 0.52, 0.0);
    let earlier = hot.position - hot.velocity * lag;
    let (ball2, _) = safe_ellipsoid(&earlier, &obstacles, &spec);
    let desired2 = DesiredState::new(hot.position, hot.velocity);
    let full = ControlInput {
        thrust: params.thrust_max,
        rates: Vector3::zeros(),
    };
    let constraints2 = vec![
        cbf_constraint(&hot, &ball2, &gp, &spec, &params),
        clf_constraint(&hot, &desired2, &gp, &spec, &params),
    ];
    let before = constraints2[0].evaluate(&full);
    let out2 = mi_filter(&full, constraints2.clone(), &spec, &params).expect("qp solves");
    let after = constraints2[0].evaluate(&out2.u);
    println!(
        "hot approach: ball r={:.2} m, h_e={:+.3}, barrier row/offset = {:+.3}/{:+.3}",
        ball2.radius(),
        extended_barrier(&ball2, &hot, spec.gamma),
        constraints2[0].row[0],
        constraints2[0].offset
    );
    println!(
        "  full throttle intervened={}: thrust {:.3} -> {:.3}, rates untouched {:?}",
        out2.intervened,
        full.thrust,
        out2.u.thrust,
        [out2.u.rates.x, out2.u.rates.y, out2.u.rates.z]
    );
    println!(
        "  barrier residual {:+.3} -> {:+.3e} (the 1/lambda sliver the penalty leaves)",
        before, after
    );
}
