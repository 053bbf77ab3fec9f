//! Fine orientation: depth-gradient and horizontal-symmetry scoring of
//! candidate corrections, combined into a weighted cost and minimized.
//!
//! Candidate `θ` means "the map was rotated by θ". It is scored on the map
//! rotated back by `-θ`, so the best candidate is the one whose correction
//! looks most upright.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::{CoarseEstimate, SEARCH_HALF_WIDTH_DEG};
use crate::error::{Error, Result};
use crate::grid::{min_max_normalize, rotate_arbitrary, Angle, DepthMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Weight of the gradient term.
    pub alpha: f64,
    /// Weight of the symmetry term.
    pub beta: f64,
    pub step_deg: f64,
    pub box_size: usize,
    /// Min-max normalize each score across the candidates before weighting.
    pub normalize_scores: bool,
    /// Minimum fraction of valid pixels for a box to take part.
    pub box_valid_fraction: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            alpha: 0.8,
            beta: 0.2,
            step_deg: 10.0,
            box_size: 10,
            normalize_scores: false,
            box_valid_fraction: 1.0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_weights = self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0;
        if !ok_weights || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::invalid(format!(
                "weights must be non-negative with a positive sum, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if !(self.step_deg > 0.0 && self.step_deg.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {}", self.step_deg)));
        }
        if self.box_size < 2 {
            return Err(Error::invalid(format!("box size must be >= 2, got {}", self.box_size)));
        }
        if !(self.box_valid_fraction > 0.0 && self.box_valid_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "box valid fraction must be in (0, 1], got {}",
                self.box_valid_fraction
            )));
        }
        Ok(())
    }
}

/// A score together with a flag set when nothing could be measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

impl Score {
    fn mean(sum: f64, n: usize) -> Score {
        if n == 0 {
            Score {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Score {
                value: sum / n as f64,
                degenerate: false,
            }
        }
    }
}

/// Depth gradient consistency: mean over participating boxes of the absolute
/// per-box mean vertical forward difference.
///
/// Boxes tile the map from the top-left without overlap; partial boxes at
/// the right and bottom edges are dropped.
pub fn dgc_score(map: &DepthMap, box_size: usize, box_valid_fraction: f64) -> Score {
    let (w, h) = (map.width(), map.height());
    let need = box_valid_fraction * (box_size * box_size) as f64;
    let mut total = 0.0;
    let mut boxes = 0usize;
    for by in (0..h.saturating_sub(box_size - 1)).step_by(box_size) {
        for bx in (0..w.saturating_sub(box_size - 1)).step_by(box_size) {
            let mut valid = 0usize;
            for r in by..by + box_size {
                for c in bx..bx + box_size {
                    valid += usize::from(map.is_valid(r, c));
                }
            }
            if (valid as f64) < need {
                continue;
            }
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for r in by..by + box_size - 1 {
                for c in bx..bx + box_size {
                    if let (Some(a), Some(b)) = (map.get(r, c), map.get(r + 1, c)) {
                        sum += b - a;
                        pairs += 1;
                    }
                }
            }
            if pairs == 0 {
                continue;
            }
            total += (sum / pairs as f64).abs();
            boxes += 1;
        }
    }
    Score::mean(total, boxes)
}

/// Horizontal symmetry: mean absolute difference between each pixel in the
/// left half and its mirror `(r, w-1-c)`. The center column of odd-width maps
/// has no partner.
pub fn hsa_score(map: &DepthMap) -> Score {
    let (w, h) = (map.width(), map.height());
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for r in 0..h {
        for c in 0..w / 2 {
            if let (Some(a), Some(b)) = (map.get(r, c), map.get(r, w - 1 - c)) {
                sum += (a - b).abs();
                pairs += 1;
            }
        }
    }
    Score::mean(sum, pairs)
}

/// Weighted cost `alpha * dgc + beta * hsa` per candidate, optionally on
/// min-max normalized inputs.
pub fn combined_cost(dgc: &[f64], hsa: &[f64], cfg: &RefineConfig) -> Result<Vec<f64>> {
    if dgc.len() != hsa.len() {
        return Err(Error::invalid(format!(
            "score lists differ in length: {} vs {}",
            dgc.len(),
            hsa.len()
        )));
    }
    if dgc.is_empty() {
        return Err(Error::invalid("no candidate scores"));
    }
    let (d, s) = if cfg.normalize_scores {
        (min_max_normalize(dgc)?, min_max_normalize(hsa)?)
    } else {
        (dgc.to_vec(), hsa.to_vec())
    };
    Ok(d.iter()
        .zip(&s)
        .map(|(d, s)| cfg.alpha * d + cfg.beta * s)
        .collect())
}

/// Candidate angles `theta_c + k * step` covering the ±45° interval.
///
/// The grid is anchored on the coarse angle so that it contains it and every
/// step multiple around it. Endpoints are included when they fall on the
/// grid (e.g. step 5 or 15).
pub fn candidate_angles(coarse: &CoarseEstimate, step_deg: f64) -> Vec<Angle> {
    let k = (SEARCH_HALF_WIDTH_DEG / step_deg + 1e-9).floor() as i64;
    (-k..=k)
        .map(|i| coarse.theta_c.offset(i as f64 * step_deg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub angle: Angle,
    pub dgc_raw: f64,
    pub hsa_raw: f64,
    pub dgc_norm: f64,
    pub hsa_norm: f64,
    pub combined: f64,
    /// Either score could not be measured; excluded from the argmin.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub candidates: Vec<CandidateScore>,
    pub best: Angle,
}

impl CostProfile {
    pub fn best_candidate(&self) -> &CandidateScore {
        self.candidates
            .iter()
            .find(|c| c.angle == self.best)
            .expect("best angle is always one of the candidates")
    }
}

/// Scores every candidate correction and returns the cost minimizer.
pub fn fine_search(map: &DepthMap, coarse: &CoarseEstimate, cfg: &RefineConfig) -> Result<CostProfile> {
    cfg.validate()?;
    let angles = candidate_angles(coarse, cfg.step_deg);
    let scores: Vec<(Score, Score)> = angles
        .par_iter()
        .map(|a| {
            let corrected = rotate_arbitrary(map, Angle::wrap(-a.degrees()));
            (
                dgc_score(&corrected, cfg.box_size, cfg.box_valid_fraction),
                hsa_score(&corrected),
            )
        })
        .collect();
    profile_from_scores(&angles, &scores, cfg)
}

fn profile_from_scores(angles: &[Angle], scores: &[(Score, Score)], cfg: &RefineConfig) -> Result<CostProfile> {
    let usable: Vec<usize> = (0..angles.len())
        .filter(|&i| !scores[i].0.degenerate && !scores[i].1.degenerate)
        .collect();
    if usable.is_empty() {
        return Err(Error::degenerate("no candidate angle produced a measurable score"));
    }
    let dgc: Vec<f64> = usable.iter().map(|&i| scores[i].0.value).collect();
    let hsa: Vec<f64> = usable.iter().map(|&i| scores[i].1.value).collect();
    let dgc_norm = min_max_normalize(&dgc)?;
    let hsa_norm = min_max_normalize(&hsa)?;
    let combined = combined_cost(&dgc, &hsa, cfg)?;

    let mut candidates: Vec<CandidateScore> = angles
        .iter()
        .zip(scores)
        .map(|(a, (d, s))| CandidateScore {
            angle: *a,
            dgc_raw: d.value,
            hsa_raw: s.value,
            dgc_norm: 0.0,
            hsa_norm: 0.0,
            combined: 0.0,
            degenerate: d.degenerate || s.degenerate,
        })
        .collect();
    for (j, &i) in usable.iter().enumerate() {
        candidates[i].dgc_norm = dgc_norm[j];
        candidates[i].hsa_norm = hsa_norm[j];
        candidates[i].combined = combined[j];
    }

    let best = usable
        .iter()
        .map(|&i| &candidates[i])
        .min_by(|a, b| {
            a.combined
                .total_cmp(&b.combined)
                .then(a.angle.degrees().total_cmp(&b.angle.degrees()))
        })
        .map(|c| c.angle)
        .expect("usable is non-empty");
    Ok(CostProfile { candidates, best })
}
