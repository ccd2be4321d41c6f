//! One broadcast ranging round among anchors and robot modules, with
//! reflected paths rejected by the signal-power gate.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tensegrity_state::calibration::desk_anchors;
use tensegrity_state::ranging::{
    broadcast_round, packets_per_round, Channel, ClockModel, Module, ModuleRole, NlosModel, OffsetTable, RoundConfig,
};

fn main() {
    for n in [2, 5, 10, 20, 25] {
        println!("{n:>2} modules: {:>2} packets per round", packets_per_round(n));
    }

    let anchors = desk_anchors();
    let robot: Vec<Vector3<f64>> = (0..12)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 12.0;
            Vector3::new(5.5 + 0.6 * a.cos(), 4.0 + 0.6 * a.sin(), 0.3 + 0.05 * k as f64)
        })
        .collect();
    let mut modules = Vec::new();
    for k in 0..anchors.len() + robot.len() {
        let role = if k < anchors.len() { ModuleRole::Anchor } else { ModuleRole::Robot };
        let clock = ClockModel { offset: 0.01 * k as f64, skew: (k as f64 - 10.0) * 2e-6, quantum: ClockModel::DEFAULT_QUANTUM };
        modules.push(Module { id: k as u32, clock, role });
    }
    let positions: Vec<Vector3<f64>> = anchors.iter().chain(&robot).copied().collect();
    let config = RoundConfig {
        slot_spacing: 1e-3,
        channel: Channel { timestamp_sigma: 2e-10, loss_probability: 0.02 },
        nlos: NlosModel { probability: 0.3, ..NlosModel::default() },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let round = broadcast_round(
        &modules,
        0.0,
        |_| positions.clone(),
        &OffsetTable::default(),
        &OffsetTable::default(),
        &config,
        &mut rng,
    )
    .unwrap();
    let accepted = round.measurements.iter().filter(|m| m.accepted).count();
    println!(
        "round of {} modules: {} packets in {:.1} ms, {} distances, {} accepted",
        modules.len(),
        round.packets,
        round.duration * 1e3,
        round.measurements.len(),
        accepted
    );
    let errors: Vec<f64> = round
        .measurements
        .iter()
        .filter(|m| m.accepted)
        .map(|m| m.raw - (positions[m.initiator as usize] - positions[m.responder as usize]).norm())
        .collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    println!("accepted range error: mean {:.3} m over {} ranges", mean, errors.len());
}
