use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::RunMetrics;
use super::scenario::ScenarioRun;
use super::HarnessError;
use crate::ranging::{write_log, LogRecord};

/// One end cap at one filter step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub endcap_id: usize,
    pub estimate: [f64; 3],
    pub truth: [f64; 3],
    /// Square root of the trace of the end cap's position covariance (m).
    pub sigma: f64,
    pub cov_trace: f64,
    pub innovation_norm: f64,
    pub nis: f64,
    pub measurements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportPaths {
    pub trajectory_jsonl: PathBuf,
    pub trajectory_csv: PathBuf,
    pub metrics_json: PathBuf,
    pub metrics_csv: PathBuf,
    pub config: PathBuf,
    pub ranging: PathBuf,
    pub calibration: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

fn records(run: &ScenarioRun) -> Vec<TrajectoryRecord> {
    let mut out = Vec::new();
    for (k, step) in run.steps.iter().enumerate() {
        let est = &run.estimate.trajectory.nodes[k];
        let truth = run.truth.at(step.time).unwrap_or_else(|| est.clone());
        for (i, (e, t)) in est.iter().zip(&truth).enumerate() {
            out.push(TrajectoryRecord {
                t: step.time,
                endcap_id: i,
                estimate: [e.x, e.y, e.z],
                truth: [t.x, t.y, t.z],
                sigma: step.position_sigma[i],
                cov_trace: step.cov_trace,
                innovation_norm: step.innovation_norm,
                nis: step.nis,
                measurements: step.measurements,
            });
        }
    }
    out
}

fn fmt_face(f: Option<[usize; 3]>) -> String {
    f.map_or_else(String::new, |f| format!("{}-{}-{}", f[0], f[1], f[2]))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// `metric,value` rows.
pub fn metrics_rows(m: &RunMetrics) -> Vec<(String, String)> {
    let mut rows = vec![
        ("samples".to_string(), m.samples.to_string()),
        ("settle_time".into(), m.settle_time.to_string()),
        ("rms".into(), m.rms.to_string()),
        ("max_endcap_rms".into(), m.max_endcap_rms.to_string()),
    ];
    for (i, r) in m.endcap_rms.iter().enumerate() {
        rows.push((format!("endcap_rms_{i}"), r.to_string()));
    }
    for t in &m.tracked {
        rows.push((format!("tracked_{}_rms", t.node), t.rms.to_string()));
        rows.push((format!("tracked_{}_lag", t.node), fmt_opt(t.lag)));
    }
    rows.extend([
        ("initial_face_true".into(), fmt_face(m.initial_face_true)),
        ("initial_face_estimated".into(), fmt_face(m.initial_face_estimated)),
        ("initial_face_correct".into(), m.initial_face_correct.to_string()),
        ("true_transitions".into(), m.true_transitions.len().to_string()),
        ("estimated_transitions".into(), m.estimated_transitions.len().to_string()),
        ("all_transitions_detected".into(), m.all_transitions_detected.to_string()),
        ("post_roll_centroid_error".into(), fmt_opt(m.post_roll_centroid_error)),
        ("post_roll_com_error".into(), fmt_opt(m.post_roll_com_error)),
        ("mean_cov_trace".into(), m.mean_cov_trace.to_string()),
        ("max_cov_trace".into(), m.max_cov_trace.to_string()),
        ("final_cov_trace".into(), m.final_cov_trace.to_string()),
        ("spurious_recovery".into(), fmt_opt(m.spurious_recovery)),
        ("packets".into(), m.packets.to_string()),
        ("packet_acceptance_rate".into(), fmt_opt(m.packet_acceptance_rate)),
        ("filter_warnings".into(), m.filter_warnings.to_string()),
    ]);
    rows
}

/// Writes every output of `run` into `dir`, which is created if needed.
pub fn export_run(run: &ScenarioRun, dir: &Path) -> Result<ExportPaths, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let paths = ExportPaths {
        trajectory_jsonl: dir.join("trajectory.jsonl"),
        trajectory_csv: dir.join("trajectory.csv"),
        metrics_json: dir.join("metrics.json"),
        metrics_csv: dir.join("metrics.csv"),
        config: dir.join("config.toml"),
        ranging: dir.join("ranging.jsonl"),
        calibration: run.calibration.as_ref().map(|_| dir.join("calibration.json")),
    };
    let recs = records(run);

    let p = &paths.trajectory_jsonl;
    let mut w = create(p)?;
    for r in &recs {
        serde_json::to_writer(&mut w, r).map_err(|e| HarnessError::io(p, e.into()))?;
        w.write_all(b"\n").map_err(|e| HarnessError::io(p, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(p, e))?;

    let p = &paths.trajectory_csv;
    let mut w = create(p)?;
    let mut text = String::from("t,endcap_id,x_true,y_true,z_true,x_est,y_est,z_est\n");
    for r in &recs {
        let [xt, yt, zt] = r.truth;
        let [xe, ye, ze] = r.estimate;
        text.push_str(&format!("{},{},{xt},{yt},{zt},{xe},{ye},{ze}\n", r.t, r.endcap_id));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| HarnessError::io(p, e))?;

    let p = &paths.metrics_json;
    let json = serde_json::to_string_pretty(&run.metrics).map_err(|e| HarnessError::io(p, e.into()))?;
    std::fs::write(p, json + "\n").map_err(|e| HarnessError::io(p, e))?;

    let p = &paths.metrics_csv;
    let mut text = String::from("metric,value\n");
    for (k, v) in metrics_rows(&run.metrics) {
        text.push_str(&format!("{k},{v}\n"));
    }
    std::fs::write(p, text).map_err(|e| HarnessError::io(p, e))?;

    run.config.save(&paths.config)?;
    write_log(&paths.ranging, &run.ranging)?;
    if let (Some(file), Some(p)) = (&run.calibration, &paths.calibration) {
        file.save(p)?;
    }
    Ok(paths)
}

pub fn write_calibration_log(path: &Path, records: &[LogRecord]) -> Result<(), HarnessError> {
    Ok(write_log(path, records)?)
}
