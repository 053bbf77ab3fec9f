//! Rotation sweep harness: run the estimator over labelled cases and report
//! accuracy at several angular tolerances.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{circular_distance, Angle, DepthMap};
use crate::pipeline::{estimate_orientation, EstimateInput};
use crate::refine::RefineConfig;
use crate::synth::{ground_scene, render_depth};
use crate::defocus::DefocusConfig;

/// Slack for comparing float angles against integer tolerances.
const DELTA_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GroundTruthCase {
    pub id: String,
    pub map: DepthMap,
    pub label: Angle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub case_id: String,
    pub true_deg: Angle,
    pub predicted_coarse: Option<Angle>,
    pub predicted_fine: Option<Angle>,
    /// One entry per tolerance in [`EvalReport::deltas`].
    pub correct: Vec<bool>,
    pub runtime_ms: f64,
    /// Set when the case could not be estimated.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSummary {
    pub true_deg: Angle,
    pub cases: usize,
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub deltas: Vec<f64>,
    pub rows: Vec<EvalRow>,
    /// Accuracy over all rows, per tolerance.
    pub accuracy: Vec<f64>,
    /// Sorted by angle.
    pub per_angle: Vec<AngleSummary>,
}

/// Tolerance check on the circular distance between prediction and label.
pub fn correct_within(truth: Angle, predicted: Angle, delta: f64) -> bool {
    circular_distance(truth, predicted) <= delta + DELTA_SLACK
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::invalid("at least one tolerance is required"));
    }
    if let Some(d) = deltas.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::invalid(format!("tolerance must be non-negative, got {d}")));
    }
    Ok(())
}

/// Runs the depth pipeline on every case.
pub fn run_eval_sweep(cases: &[GroundTruthCase], refine_cfg: &RefineConfig, deltas: &[f64]) -> Result<EvalReport> {
    refine_cfg.validate()?;
    let defocus = DefocusConfig::default();
    run_eval_sweep_with(cases, deltas, |map| {
        let r = estimate_orientation(&EstimateInput::from_depth(map.clone()), refine_cfg, &defocus)?;
        if r.degenerate {
            return Err(Error::degenerate("no usable depth structure"));
        }
        Ok((r.coarse_deg, r.fine_deg))
    })
}

/// Same as [`run_eval_sweep`] with a caller-supplied estimator returning
/// `(coarse, fine)`. Estimator errors become failed rows.
pub fn run_eval_sweep_with<F>(cases: &[GroundTruthCase], deltas: &[f64], estimate: F) -> Result<EvalReport>
where
    F: Fn(&DepthMap) -> Result<(Angle, Option<Angle>)> + Sync,
{
    check_deltas(deltas)?;
    let mut rows: Vec<EvalRow> = cases
        .par_iter()
        .map(|case| {
            let start = Instant::now();
            let outcome = estimate(&case.map);
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            let (coarse, fine, error) = match outcome {
                Ok((c, f)) => (Some(c), f, None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            let correct = deltas
                .iter()
                .map(|d| fine.is_some_and(|f| correct_within(case.label, f, *d)))
                .collect();
            EvalRow {
                case_id: case.id.clone(),
                true_deg: case.label,
                predicted_coarse: coarse,
                predicted_fine: fine,
                correct,
                runtime_ms,
                error,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(summarize(deltas, rows))
}

fn summarize(deltas: &[f64], rows: Vec<EvalRow>) -> EvalReport {
    let share = |subset: &[&EvalRow], k: usize| {
        if subset.is_empty() {
            0.0
        } else {
            subset.iter().filter(|r| r.correct[k]).count() as f64 / subset.len() as f64
        }
    };
    let all: Vec<&EvalRow> = rows.iter().collect();
    let accuracy = (0..deltas.len()).map(|k| share(&all, k)).collect();

    let mut angles: Vec<Angle> = rows.iter().map(|r| r.true_deg).collect();
    angles.sort_by(|a, b| a.degrees().total_cmp(&b.degrees()));
    angles.dedup();
    let per_angle = angles
        .into_iter()
        .map(|a| {
            let subset: Vec<&EvalRow> = rows.iter().filter(|r| r.true_deg == a).collect();
            AngleSummary {
                true_deg: a,
                cases: subset.len(),
                accuracy: (0..deltas.len()).map(|k| share(&subset, k)).collect(),
            }
        })
        .collect();
    EvalReport {
        deltas: deltas.to_vec(),
        rows,
        accuracy,
        per_angle,
    }
}

/// Renders `scenes` ground-plane scenes and rotates each through the 36
/// angles of the 10° grid.
pub fn ground_sweep_cases(scenes: usize, width: usize, height: usize) -> Result<Vec<GroundTruthCase>> {
    if scenes == 0 {
        return Err(Error::invalid("sweep needs at least one scene"));
    }
    let bases: Vec<DepthMap> = (0..scenes)
        .into_par_iter()
        .map(|s| {
            let (scene, cam) = ground_scene(s, width, height);
            render_depth(&scene, &cam)
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..scenes).flat_map(|s| (0..36).map(move |k| (s, k))).collect();
    jobs.into_par_iter()
        .map(|(s, k)| {
            let rotation = Angle::new(10.0 * k as f64)?;
            let map = crate::grid::rotate_arbitrary(&bases[s], rotation);
            Ok(GroundTruthCase {
                id: format!("scene{s:03}-rot{:03}", 10 * k),
                map,
                label: rotation,
            })
        })
        .collect()
}

fn fmt_angle(a: Option<Angle>) -> String {
    a.map(|a| format!("{}", a.degrees())).unwrap_or_default()
}

fn fmt_delta(d: f64) -> String {
    format!("{d}")
}

/// Row table with the columns `case_id, true_deg, predicted_coarse_deg,
/// predicted_fine_deg, correct@<delta>..., runtime_ms`, then a blank line and
/// a summary block of accuracies (overall, then per true angle).
pub fn write_report_csv<W: Write>(report: &EvalReport, mut out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    let mut header = vec![
        "case_id".to_string(),
        "true_deg".into(),
        "predicted_coarse_deg".into(),
        "predicted_fine_deg".into(),
    ];
    header.extend(report.deltas.iter().map(|d| format!("correct@{}", fmt_delta(*d))));
    header.push("runtime_ms".into());
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec = vec![
            row.case_id.clone(),
            format!("{}", row.true_deg.degrees()),
            fmt_angle(row.predicted_coarse),
            fmt_angle(row.predicted_fine),
        ];
        rec.extend(row.correct.iter().map(|c| c.to_string()));
        rec.push(format!("{:.3}", row.runtime_ms));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    drop(w);
    out.write_all(b"\n").map_err(|e| Error::io("<csv>", e))?;
    let mut w = csv::Writer::from_writer(&mut out);
    let mut summary = vec!["summary".to_string(), "cases".into()];
    summary.extend(report.deltas.iter().map(|d| format!("accuracy@{}", fmt_delta(*d))));
    w.write_record(&summary)?;
    let mut overall = vec!["all".to_string(), report.rows.len().to_string()];
    overall.extend(report.accuracy.iter().map(|a| format!("{a:.6}")));
    w.write_record(&overall)?;
    for s in &report.per_angle {
        let mut rec = vec![format!("{}", s.true_deg.degrees()), s.cases.to_string()];
        rec.extend(s.accuracy.iter().map(|a| format!("{a:.6}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
