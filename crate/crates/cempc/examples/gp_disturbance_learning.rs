//! Streams noisy drag observations into the per-axis disturbance learner and
//! prints how the posterior tightens around the true velocity-dependent drag,
//! including what happens once the fixed-size dataset starts replacing points.

use cempc::dynamics::{drag_acceleration, step, ControlInput, QuadParams, State, WindModel};
use cempc::igp::{DisturbanceLearner, KernelParams};
use nalgebra::Vector3;

fn main() {
    let params = QuadParams::default();
    let kernel = KernelParams::default();
    let mut learner = DisturbanceLearner::new(kernel, 20);

    // Light turbulence keeps the mean-field drag identifiable; the kernel's
    // noise floor absorbs what remains.
    let mut wind = WindModel::new(Vector3::new(-10.0, 0.0, 0.0), Vector3::repeat(0.2), 1.0, 7);
    let dt = 0.02;
    let hover = ControlInput {
        thrust: params.hover_thrust(),
        rates: Vector3::zeros(),
    };

    // Release the vehicle from rest over and over; each one-second burst
    // sweeps velocities from 0 to about -3 m/s downwind, and every transition
    // becomes a training pair.
    let mut state = State::zero();
    let mut t = 0.0;
    for k in 0..600 {
        if k % 50 == 0 {
            state = State::zero();
        }
        let w = wind.current();
        let next = step(&state, &hover, &w, dt, &params).expect("finite dynamics");
        learner
            .observe(t, &state, &hover, &next.velocity, dt, &params)
            .expect("observation stays well conditioned");
        wind.step(dt);
        state = next;
        t += dt;

        if k % 150 == 49 {
            let probe = state.velocity;
            let pred = learner.predict(&probe);
            let truth = drag_acceleration(&probe, &Vector3::new(-10.0, 0.0, 0.0), &params);
            println!(
                "t={:5.2}s points={:2} | at vx={:+.2}: mean={:+.3} sigma={:.3} true={:+.3}",
                t,
                learner.len(),
                probe.x,
                pred[0].mean,
                pred[0].variance.sqrt(),
                truth.x
            );
        }
    }

    println!(
        "\n{} observations went in; the dataset holds the {} most informative and",
        learner.updates(),
        learner.len()
    );
    println!("replaces its stalest point on every new observation instead of growing.");

    // The sliding window keeps only the newest points, which cluster near the
    // burst's terminal speed; probes outside that band extrapolate and the
    // interval widens (and can still miss far from any data).
    println!("\nprobe sweep (x axis):");
    for vx in [-3.0f64, -2.0, -1.0, 0.0] {
        let probe = Vector3::new(vx, 0.0, 0.0);
        let pred = learner.predict(&probe);
        let truth = drag_acceleration(&probe, &Vector3::new(-10.0, 0.0, 0.0), &params);
        let (lo, hi) = pred[0].confidence_interval(3.0).expect("finite variance");
        let inside = lo <= truth.x && truth.x <= hi;
        println!(
            "  vx={:+.1}  mean={:+.3}  3-sigma=[{:+.3}, {:+.3}]  true={:+.3}  covered={}",
            vx, pred[0].mean, lo, hi, truth.x, inside
        );
    }
}
