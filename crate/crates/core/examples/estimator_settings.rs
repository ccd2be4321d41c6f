//! The four estimator settings on the same local run.

use tensegrity_state::harness::{run_scenario, ScenarioConfig, Setting};

fn main() {
    println!("{:<18} {:>9} {:>11} {:>12} {:>13}", "setting", "rms (m)", "max (m)", "mean trace", "initial face");
    for setting in Setting::ALL {
        let mut config = ScenarioConfig::local();
        config.duration = 30.0;
        config.setting = setting;
        let m = run_scenario(config).unwrap().metrics;
        println!(
            "{:<18} {:>9.4} {:>11.4} {:>12.3} {:>13}",
            setting.name(),
            m.rms,
            m.max_endcap_rms,
            m.mean_cov_trace,
            if m.initial_face_correct { "correct" } else { "wrong" }
        );
    }
}
