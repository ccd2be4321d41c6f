//! Recovers anchor positions and ranging offsets from a synthetic session of
//! 400 static robot poses.

use std::time::Instant;

use tensegrity_state::calibration::{calibrate, internal_offsets, synthetic_dataset, CalibrationConfig, SyntheticCalibration};

fn main() {
    let setup = SyntheticCalibration {
        samples: 400,
        noise_sigma: 0.03,
        internal_offset: Some(0.2),
        ..SyntheticCalibration::default()
    };
    let (dataset, truth) = synthetic_dataset(&setup, 3);
    println!(
        "{} anchors, {} floats, {} samples, {} unknowns",
        dataset.anchor_ids.len(),
        dataset.float_ids.len(),
        setup.samples,
        dataset.parameter_count()
    );
    let t0 = Instant::now();
    let result = calibrate(&dataset, &setup.priors(), Some(&setup.hemisphere()), &CalibrationConfig::default()).unwrap();
    println!(
        "solved in {:.1} s: loss {:.4}, {} iterations, converged {}",
        t0.elapsed().as_secs_f64(),
        result.loss,
        result.report.iterations,
        result.converged()
    );
    for (k, (est, tru)) in result.params.anchors.iter().zip(&truth.anchors).enumerate() {
        println!("anchor {k}: error {:.3} m", (est - tru).norm());
    }
    let table = result.offset_table();
    let errors: Vec<f64> = table.iter().map(|(i, j, o)| o - truth.offsets.get(i, j).unwrap()).collect();
    let rms = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    println!("anchor/robot offsets: rms error {rms:.4} m over {} pairs", errors.len());
    let internal = internal_offsets(&result, &dataset, 5).unwrap();
    let mean = internal.iter().map(|(_, _, o)| o).sum::<f64>() / internal.len() as f64;
    println!("robot/robot offsets: {} pairs, mean {mean:.3} m (true 0.2)", internal.len());
}
