//! Runs the four controller variants on the same short windy segment and
//! tabulates tracking error against learner and filter activity, which shows
//! what each layer buys.

use cempc::scenario::{run, ScenarioConfig, Variant};

fn main() {
    println!("variant        rms (m)   max (m)  interventions  gp_updates");
    for variant in Variant::ALL {
        let mut config = ScenarioConfig::default();
        config.variant = variant;
        config.duration = 6.0;
        config.wind_speed = 10.0;
        config.seed = 2;

        let result = run(&config).expect("run completes");
        let m = &result.metrics;
        println!(
            "{:<13} {:8.4}  {:8.4}  {:>13}  {:>10}",
            variant.name(),
            m.rms_error,
            m.max_error,
            m.interventions,
            m.gp_updates
        );
    }
}
