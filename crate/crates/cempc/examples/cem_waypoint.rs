//! Runs the sampling optimizer on a single receding-horizon step toward a
//! fixed waypoint and prints how the elite refits drive the plan cost down
//! and the sampling variance toward its floor.

use cempc::cem::{
    mpc_step, CemConfig, CostContext, CostSpec, DesiredState, SamplingDistribution,
    ZeroDisturbance,
};
use cempc::dynamics::{QuadParams, State};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let params = QuadParams::default();
    let cfg = CemConfig {
        horizon: 25,
        samples: 200,
        elites: 20,
        max_iters: 8,
        ..CemConfig::default()
    };
    let cost = CostSpec::default();

    // Hold one waypoint across the horizon: a pure go-there problem.
    let target = DesiredState::new(Vector3::new(1.0, 0.5, 0.8), Vector3::zeros());
    let refs = vec![target; cfg.horizon + 1];
    let ctx = CostContext {
        refs: &refs,
        obstacles: &[],
        predictor: &ZeroDisturbance,
        cost: &cost,
        params: &params,
        dt: cfg.dt,
    };

    let x0 = State::zero();
    let (lower, upper) = params.control_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut warm = SamplingDistribution::cold_start(cfg.horizon, &lower, &upper);

    println!("replanning toward ({}, {}, {}) from rest:", target.position.x, target.position.y, target.position.z);
    let mut state = x0;
    for step_idx in 0..60 {
        let (u, next_warm, diag) =
            mpc_step(&state, warm, &cfg, &mut rng, &ctx).expect("finite rollouts");
        warm = next_warm;

        // Apply the first control through the nominal model, no wind.
        let next = cempc::dynamics::step(&state, &u, &Vector3::zeros(), cfg.dt, &params)
            .expect("finite dynamics");
        if step_idx % 10 == 0 {
            println!(
                "step {:2}: iters={} best_cost={:9.2} thrust={:.3} pos=({:+.3}, {:+.3}, {:+.3})",
                step_idx,
                diag.iterations,
                diag.best_cost,
                u.thrust,
                next.position.x,
                next.position.y,
                next.position.z
            );
        }
        state = next;
    }
    println!(
        "\ndistance to waypoint after 60 steps (1.2 s): {:.3} m",
        (state.position - target.position).norm()
    );
}
