//! Closed-loop spiral tracking in strong wind with online disturbance
//! learning and the full safety filter; prints a coarse timeline and the run
//! metrics that the CLI would write to the summary file.

use cempc::scenario::{run, ScenarioConfig, Variant};

fn main() {
    let mut config = ScenarioConfig::default();
    config.variant = Variant::LbCempcMi;
    config.duration = 8.0;
    config.wind_speed = 12.0;
    config.seed = 1;

    let result = run(&config).expect("run completes");

    println!("  t     |e_p|    V      h_e    sigma_x  intervened");
    for rec in result.records.iter().step_by(50) {
        let e = (rec.state.position - rec.desired.position).norm();
        println!(
            "{:5.2}  {:6.3}  {:6.3}  {:+.3}  {:7.4}  {}",
            rec.t, e, rec.lyapunov, rec.extended_barrier, rec.gp_sigma[0], rec.intervened
        );
    }

    let m = &result.metrics;
    println!(
        "\nrms={:.4} m  max={:.4} m  min_barrier={:.4}  interventions={}  gp_updates={}",
        m.rms_error, m.max_error, m.min_barrier, m.interventions, m.gp_updates
    );
}
