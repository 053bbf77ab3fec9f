//! JSON shapes written by the CLI. Field order is the output key order, and
//! every float goes through [`sig6`] so repeated runs are byte-identical.

use depth_orient::OrientationResult;
use serde::Serialize;

/// Rounds to 6 significant digits.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("scientific notation round-trips")
}

#[derive(Serialize)]
pub struct CandidateJson {
    pub angle: f64,
    pub dgc: f64,
    pub hsa: f64,
    /// `null` when the candidate could not be scored.
    pub cost: Option<f64>,
}

#[derive(Serialize)]
pub struct EstimateJson {
    pub coarse_deg: i64,
    pub fine_deg: Option<f64>,
    pub confident: bool,
    pub mode: &'static str,
    pub candidates: Vec<CandidateJson>,
    pub runtime_ms: f64,
}

impl EstimateJson {
    pub fn new(r: &OrientationResult, timing: bool) -> Self {
        let candidates = r
            .cost_profile
            .iter()
            .flat_map(|p| &p.candidates)
            .map(|c| CandidateJson {
                angle: sig6(c.angle.degrees()),
                dgc: sig6(c.dgc_raw),
                hsa: sig6(c.hsa_raw),
                cost: (!c.degenerate).then(|| sig6(c.combined)),
            })
            .collect();
        EstimateJson {
            coarse_deg: r.coarse_deg.degrees().round() as i64,
            fine_deg: r.fine_deg.map(|a| sig6(a.degrees())),
            confident: r.confident,
            mode: r.mode.name(),
            candidates,
            runtime_ms: if timing { sig6(r.timing_ms) } else { 0.0 },
        }
    }
}

#[derive(Serialize)]
pub struct FrameJson {
    pub file: String,
    #[serde(flatten)]
    pub estimate: EstimateJson,
}

#[derive(Serialize)]
pub struct VideoJson {
    pub frames: Vec<FrameJson>,
    pub aggregate_deg: f64,
    pub agreement: f64,
}
