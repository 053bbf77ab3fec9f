//! End-to-end orientation estimation for single frames and frame sequences.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::{estimate_coarse, CoarseEstimate, Region, RegionMagnitudes};
use crate::defocus::{defocus_coarse_orientation, quadrant_blur_profile, BlurProfile, DefocusConfig, GrayImage};
use crate::error::{Error, Result};
use crate::grid::{circular_distance, Angle, DepthMap};
use crate::refine::{fine_search, CostProfile, RefineConfig};

/// Guard added to disparities before taking the reciprocal.
pub const DISPARITY_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Depth when a map is present, otherwise defocus.
    #[default]
    Auto,
    Depth,
    Defocus,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Auto => "auto",
            Mode::Depth => "depth",
            Mode::Defocus => "defocus",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Mode::Auto),
            "depth" => Ok(Mode::Depth),
            "defocus" => Ok(Mode::Defocus),
            _ => Err(Error::invalid(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EstimateInput {
    pub depth: Option<DepthMap>,
    pub image: Option<GrayImage>,
    pub mode: Mode,
    /// The depth channel holds disparity and must be inverted first.
    pub invert_depth: bool,
}

impl EstimateInput {
    pub fn from_depth(depth: DepthMap) -> Self {
        EstimateInput {
            depth: Some(depth),
            mode: Mode::Depth,
            ..Default::default()
        }
    }

    pub fn from_image(image: GrayImage) -> Self {
        EstimateInput {
            image: Some(image),
            mode: Mode::Defocus,
            ..Default::default()
        }
    }

    /// The concrete path this input will take.
    pub fn resolve_mode(&self) -> Result<Mode> {
        match (self.mode, self.depth.is_some(), self.image.is_some()) {
            (Mode::Auto, true, _) | (Mode::Depth, true, _) => Ok(Mode::Depth),
            (Mode::Auto, false, true) | (Mode::Defocus, _, true) => Ok(Mode::Defocus),
            (Mode::Auto, false, false) => Err(Error::invalid("neither a depth map nor an image was given")),
            (Mode::Depth, false, _) => Err(Error::invalid("depth mode requires a depth map")),
            (Mode::Defocus, _, false) => Err(Error::invalid("defocus mode requires an image")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationResult {
    pub coarse_deg: Angle,
    /// Absent on defocus runs and when no candidate could be scored.
    pub fine_deg: Option<Angle>,
    pub coarse: CoarseEstimate,
    pub cost_profile: Option<CostProfile>,
    pub blur_profile: Option<BlurProfile>,
    pub confident: bool,
    /// Some stage had nothing to measure; the angles are placeholders.
    pub degenerate: bool,
    pub mode: Mode,
    pub timing_ms: f64,
}

impl OrientationResult {
    /// The fine angle when available, otherwise the coarse one.
    pub fn final_deg(&self) -> Angle {
        self.fine_deg.unwrap_or(self.coarse_deg)
    }
}

/// Converts disparity to depth via `1 / (d + 1e-9)`, then shifts the result
/// so its minimum is non-negative.
pub fn invert_disparity(map: &DepthMap) -> Result<DepthMap> {
    let inv = map.map_valid(|d| 1.0 / (d + DISPARITY_GUARD))?;
    let lo = inv
        .values()
        .iter()
        .zip(inv.mask())
        .filter(|(_, ok)| **ok)
        .map(|(v, _)| *v)
        .fold(f64::INFINITY, f64::min);
    if lo < 0.0 {
        inv.map_valid(|v| v - lo)
    } else {
        Ok(inv)
    }
}

fn placeholder_coarse() -> CoarseEstimate {
    CoarseEstimate::from_region(Region::Top, RegionMagnitudes::from_parts([0.0; 4], [0; 4]), false)
}

/// Coarse quadrant estimate followed by the fine search (depth), or the
/// defocus quadrant estimate alone (image only).
pub fn estimate_orientation(
    input: &EstimateInput,
    refine_cfg: &RefineConfig,
    defocus_cfg: &DefocusConfig,
) -> Result<OrientationResult> {
    let start = Instant::now();
    let mode = input.resolve_mode()?;
    refine_cfg.validate()?;
    defocus_cfg.validate()?;

    let mut result = match mode {
        Mode::Depth => {
            let raw = input.depth.as_ref().expect("resolved depth mode has a map");
            let owned;
            let map = if input.invert_depth {
                owned = invert_disparity(raw)?;
                &owned
            } else {
                raw
            };
            depth_path(map, refine_cfg)?
        }
        _ => {
            let img = input.image.as_ref().expect("resolved defocus mode has an image");
            let blur = quadrant_blur_profile(img, defocus_cfg)?;
            let coarse = defocus_coarse_orientation(&blur);
            OrientationResult {
                coarse_deg: coarse.theta_c,
                fine_deg: None,
                confident: coarse.confident,
                degenerate: blur.degenerate_regions.iter().all(|d| *d),
                coarse,
                cost_profile: None,
                blur_profile: Some(blur),
                mode: Mode::Defocus,
                timing_ms: 0.0,
            }
        }
    };
    result.timing_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

fn depth_path(map: &DepthMap, cfg: &RefineConfig) -> Result<OrientationResult> {
    let coarse = match estimate_coarse(map) {
        Ok(c) => c,
        Err(Error::Degenerate(_)) => {
            let coarse = placeholder_coarse();
            return Ok(OrientationResult {
                coarse_deg: coarse.theta_c,
                fine_deg: None,
                coarse,
                cost_profile: None,
                blur_profile: None,
                confident: false,
                degenerate: true,
                mode: Mode::Depth,
                timing_ms: 0.0,
            });
        }
        Err(e) => return Err(e),
    };
    let (profile, degenerate) = match fine_search(map, &coarse, cfg) {
        Ok(p) => (Some(p), false),
        Err(Error::Degenerate(_)) => (None, true),
        Err(e) => return Err(e),
    };
    Ok(OrientationResult {
        coarse_deg: coarse.theta_c,
        fine_deg: profile.as_ref().map(|p| p.best),
        confident: coarse.confident && !degenerate,
        coarse,
        cost_profile: profile,
        blur_profile: None,
        degenerate,
        mode: Mode::Depth,
        timing_ms: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    pub per_frame: Vec<OrientationResult>,
    pub aggregate_deg: Angle,
    /// Fraction of frames whose angle equals the aggregate.
    pub agreement: f64,
}

/// Most frequent angle, ties to the smallest; returns it with its share.
pub fn majority_vote(angles: &[Angle]) -> Result<(Angle, f64)> {
    if angles.is_empty() {
        return Err(Error::invalid("cannot vote over zero angles"));
    }
    let mut tally: Vec<(Angle, usize)> = Vec::new();
    for a in angles {
        match tally.iter_mut().find(|(b, _)| circular_distance(*a, *b) == 0.0) {
            Some((_, n)) => *n += 1,
            None => tally.push((*a, 1)),
        }
    }
    let (best, n) = tally
        .into_iter()
        .max_by(|(a, n), (b, m)| n.cmp(m).then(b.degrees().total_cmp(&a.degrees())))
        .expect("tally is non-empty");
    Ok((best, n as f64 / angles.len() as f64))
}

/// Estimates every frame independently and aggregates by majority vote over
/// the fine angles (or the coarse ones if any frame lacks a fine angle).
pub fn estimate_video(
    frames: &[EstimateInput],
    refine_cfg: &RefineConfig,
    defocus_cfg: &DefocusConfig,
) -> Result<VideoResult> {
    if frames.is_empty() {
        return Err(Error::invalid("video has no frames"));
    }
    let per_frame: Vec<OrientationResult> = frames
        .par_iter()
        .map(|f| estimate_orientation(f, refine_cfg, defocus_cfg))
        .collect::<Result<_>>()?;
    let votes: Vec<Angle> = if per_frame.iter().all(|r| r.fine_deg.is_some()) {
        per_frame.iter().filter_map(|r| r.fine_deg).collect()
    } else {
        per_frame.iter().map(|r| r.coarse_deg).collect()
    };
    let (aggregate_deg, agreement) = majority_vote(&votes)?;
    Ok(VideoResult {
        per_frame,
        aggregate_deg,
        agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::quadrant_label;
    use crate::defocus::box_blur;
    use crate::grid::rotate90;
    use crate::synth::{render_depth, ScenePreset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn deg(v: f64) -> Angle {
        Angle::new(v).unwrap()
    }

    fn ground(n: usize) -> DepthMap {
        let (scene, cam) = ScenePreset::Ground.build(n, n);
        render_depth(&scene, &cam).unwrap()
    }

    #[test]
    fn upright_scene() {
        let r = estimate_orientation(
            &EstimateInput::from_depth(ground(64)),
            &RefineConfig::default(),
            &DefocusConfig::default(),
        )
        .unwrap();
        assert_eq!(r.coarse_deg, deg(0.0));
        assert_eq!(r.fine_deg, Some(deg(0.0)));
        assert!(r.confident);
        assert_eq!(r.mode, Mode::Depth);
    }

    #[test]
    fn quarter_turned_scene() {
        let r = estimate_orientation(
            &EstimateInput::from_depth(rotate90(&ground(64), 1)),
            &RefineConfig::default(),
            &DefocusConfig::default(),
        )
        .unwrap();
        assert_eq!(r.coarse_deg, deg(90.0));
        assert_eq!(r.fine_deg, Some(deg(90.0)));
    }

    #[test]
    fn defocus_only_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tex = GrayImage::from_fn(64, 64, |_, _| rng.gen_range(0.1..0.9)).unwrap();
        let soft = box_blur(&tex, 3);
        // far (top) content out of focus, the rest sharp
        let img = GrayImage::from_fn(64, 64, |r, c| {
            if quadrant_label(r, c, 64, 64) == Some(Region::Top) {
                soft.get(r, c)
            } else {
                tex.get(r, c)
            }
        })
        .unwrap();
        let input = EstimateInput {
            image: Some(img),
            ..Default::default()
        };
        let r = estimate_orientation(&input, &RefineConfig::default(), &DefocusConfig::default()).unwrap();
        assert_eq!(r.mode, Mode::Defocus);
        assert_eq!(r.coarse_deg, deg(0.0));
        assert_eq!(r.fine_deg, None);
        assert!(r.blur_profile.is_some());
    }

    #[test]
    fn mode_resolution() {
        let img = GrayImage::from_fn(64, 64, |_, _| 0.5).unwrap();
        let mut input = EstimateInput {
            depth: Some(ground(32)),
            image: Some(img),
            ..Default::default()
        };
        assert_eq!(input.resolve_mode().unwrap(), Mode::Depth);
        input.mode = Mode::Defocus;
        assert_eq!(input.resolve_mode().unwrap(), Mode::Defocus);
        input.image = None;
        assert!(input.resolve_mode().is_err());
        input.mode = Mode::Depth;
        input.depth = None;
        assert!(input.resolve_mode().is_err());
        input.mode = Mode::Auto;
        assert!(matches!(
            estimate_orientation(&input, &RefineConfig::default(), &DefocusConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn fully_invalid_map_is_flagged_not_thrown() {
        let m = DepthMap::from_fn(20, 20, |_, _| None).unwrap();
        let r = estimate_orientation(
            &EstimateInput::from_depth(m),
            &RefineConfig::default(),
            &DefocusConfig::default(),
        )
        .unwrap();
        assert!(r.degenerate);
        assert!(!r.confident);
        assert_eq!(r.fine_deg, None);
    }

    #[test]
    fn disparity_inversion_keeps_the_quadrant() {
        let depth = rotate90(&ground(48), 3);
        let disparity = depth.map_valid(|d| 1.0 / d).unwrap();
        let a = estimate_coarse(&depth).unwrap();
        let input = EstimateInput {
            depth: Some(disparity),
            invert_depth: true,
            ..Default::default()
        };
        let b = estimate_orientation(&input, &RefineConfig::default(), &DefocusConfig::default()).unwrap();
        assert_eq!(a.theta_c, deg(270.0));
        assert_eq!(b.coarse_deg, a.theta_c);
    }

    #[test]
    fn votes() {
        let v = |xs: &[f64]| majority_vote(&xs.iter().map(|x| deg(*x)).collect::<Vec<_>>()).unwrap();
        assert_eq!(v(&[0.0, 0.0, 10.0, 0.0]), (deg(0.0), 0.75));
        assert_eq!(v(&[270.0; 5]), (deg(270.0), 1.0));
        assert_eq!(v(&[0.0, 0.0, 90.0, 90.0]), (deg(0.0), 0.5));
        assert_eq!(v(&[90.0, 90.0, 350.0, 350.0, 20.0]).0, deg(90.0));
        assert!(majority_vote(&[]).is_err());
        assert!(estimate_video(&[], &RefineConfig::default(), &DefocusConfig::default()).is_err());
    }

    #[test]
    fn video_aggregates_fine_angles() {
        let frames: Vec<EstimateInput> = (0..4)
            .map(|_| EstimateInput::from_depth(rotate90(&ground(48), 2)))
            .collect();
        let v = estimate_video(&frames, &RefineConfig::default(), &DefocusConfig::default()).unwrap();
        assert_eq!(v.aggregate_deg, deg(180.0));
        assert_eq!(v.agreement, 1.0);
        assert_eq!(v.per_frame.len(), 4);
    }
}
