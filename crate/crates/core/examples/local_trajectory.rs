//! Local deformation tracking: two cables follow phase-shifted sinusoids
//! while the robot stays on its base triangle. Pass an output directory to
//! export the run.

use std::path::PathBuf;

use tensegrity_state::harness::{export_run, run_local_scenario, ScenarioConfig};

fn main() {
    let run = run_local_scenario(ScenarioConfig::local()).unwrap();
    let m = &run.metrics;
    println!("calibration converged: {}", run.calibration.as_ref().is_some_and(|c| c.diagnostics.converged));
    println!("post-settle rms {:.4} m over {} samples", m.rms, m.samples);
    for t in &m.tracked {
        println!("end cap {:>2}: rms {:.4} m, estimate lag {:+.3} s", t.node, t.rms, t.lag.unwrap_or(f64::NAN));
    }
    println!("mean covariance trace {:.3}, {:.0} % of packets accepted", m.mean_cov_trace, 100.0 * m.packet_acceptance_rate.unwrap_or(0.0));
    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        let paths = export_run(&run, &dir).unwrap();
        println!("wrote {}", paths.trajectory_csv.display());
    }
}
