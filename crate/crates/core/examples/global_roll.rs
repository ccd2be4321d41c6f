//! Global tracking through two scripted rolls and a corrupted IMU sample.

use tensegrity_state::harness::{run_global_scenario, ScenarioConfig};

fn main() {
    let run = run_global_scenario(ScenarioConfig::global()).unwrap();
    let m = &run.metrics;
    println!("true face transitions:");
    for (t, found) in m.true_transitions.iter().zip(&m.transitions_detected) {
        println!("  {:>6.2} s  {:?} -> {:?}  detected {found}", t.time, t.from, t.to);
    }
    println!("estimated transitions: {}", m.estimated_transitions.len());
    println!("post-roll ground triangle centroid error {:.3} m", m.post_roll_centroid_error.unwrap_or(f64::NAN));
    println!("post-roll centre of mass error {:.3} m", m.post_roll_com_error.unwrap_or(f64::NAN));
    match m.spurious_recovery {
        Some(r) => println!("recovered from the spurious IMU sample after {r:.1} s"),
        None => println!("no recovery from the spurious IMU sample"),
    }
}
