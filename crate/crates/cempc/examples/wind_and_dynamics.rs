//! Integrates the quadrotor plant under increasing wind and shows how far an
//! uncorrected hover drifts in two seconds, plus the thrust and tilt that a
//! static trim against each mean wind would need.

use cempc::dynamics::{step, ControlInput, QuadParams, State, WindModel};
use nalgebra::Vector3;

fn main() {
    let params = QuadParams::default();
    let dt = 0.02;
    let hover = ControlInput {
        thrust: params.hover_thrust(),
        rates: Vector3::zeros(),
    };

    println!("hover thrust {:.3} N, thrust ceiling {:.2} N\n", params.hover_thrust(), params.thrust_max);

    for speed in [5.0f64, 8.0, 10.0, 12.0] {
        let mean = Vector3::new(-speed, 0.0, 0.0);
        let mut wind = WindModel::new(mean, Vector3::repeat(0.1 * speed), 1.0, 42);
        let mut state = State::zero();
        for _ in 0..100 {
            let w = wind.step(dt);
            state = step(&state, &hover, &w, dt, &params).expect("finite dynamics");
        }

        // Trim math: lean into the wind so the lateral thrust component
        // cancels mean drag, then scale thrust to keep altitude.
        let drag = params.drag_gain * speed / params.mass;
        let tilt = (drag / params.gravity).atan();
        let trim_thrust = params.mass * (params.gravity.powi(2) + drag.powi(2)).sqrt();

        println!(
            "wind {:4.1} m/s: hover drifts {:6.2} m in 2 s | trim tilt {:4.1} deg, trim thrust {:.3} N",
            speed,
            state.position.norm(),
            tilt.to_degrees(),
            trim_thrust
        );
    }

    println!("\nturbulence sample path (12 m/s mean, axis x):");
    let mut wind = WindModel::new(Vector3::new(-12.0, 0.0, 0.0), Vector3::repeat(1.2), 1.0, 3);
    for k in 0..5 {
        let w = wind.current();
        println!("  t={:3.1}s wind=({:6.2}, {:5.2}, {:5.2}) m/s", k as f64 * 0.5, w.x, w.y, w.z);
        for _ in 0..25 {
            wind.step(dt);
        }
    }
}
