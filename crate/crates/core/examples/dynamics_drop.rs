//! Drops the six-strut robot onto the ground and lets it settle.

use nalgebra::Vector3;
use tensegrity_state::dynamics::{Dynamics, DynamicsParams, StateVector};
use tensegrity_state::structure::{build_superball, NodeSet, SuperballParams};

fn main() {
    let model = build_superball(&SuperballParams::default()).unwrap();
    let nodes = model.reference_nodes();
    let lowest = nodes.positions.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let lifted: Vec<Vector3<f64>> = nodes.positions.iter().map(|p| p + Vector3::z() * (0.5 - lowest)).collect();
    let dynamics = Dynamics::new(model, DynamicsParams::default()).unwrap();
    let commands = dynamics.nominal_commands();
    let rest = dynamics.rest_lengths(&commands).unwrap();

    let mut state = StateVector::from_nodes(&NodeSet::new(lifted));
    println!("{:>5} {:>9} {:>9} {:>10}", "t (s)", "min z", "max |v|", "energy (J)");
    for k in 0..=40 {
        if k > 0 {
            state = dynamics.propagate(&state, &commands, &commands, 0.25).unwrap();
        }
        let min_z = state.positions().iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let speed = state.velocities().iter().map(|v| v.norm()).fold(0.0, f64::max);
        println!("{:>5.2} {:>9.4} {:>9.4} {:>10.3}", k as f64 * 0.25, min_z, speed, dynamics.energy(&state, &rest).total());
    }
    let mut z: Vec<(usize, f64)> = state.positions().iter().map(|p| p.z).enumerate().collect();
    z.sort_by(|a, b| a.1.total_cmp(&b.1));
    println!("resting on end caps {:?}", z[..3].iter().map(|(i, _)| i).collect::<Vec<_>>());
}
