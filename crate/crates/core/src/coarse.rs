//! Quadrant depth magnitudes and the coarse (quarter-turn) orientation.
//!
//! The frame is split by its two diagonals into four triangles. Coordinates
//! are normalized to the unit square first, so a wide image partitions along
//! its stretched diagonals and all four regions cover equal area.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grid_center, Angle, DepthMap};

/// Half-width of the fine-search interval around the coarse angle.
pub const SEARCH_HALF_WIDTH_DEG: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Top,
    Bottom,
    Left,
    Right,
}

impl Region {
    /// Storage order used by [`RegionMagnitudes`].
    pub const ALL: [Region; 4] = [Region::Top, Region::Bottom, Region::Left, Region::Right];

    /// Argmax tie-break order.
    pub const PRIORITY: [Region; 4] = [Region::Top, Region::Left, Region::Bottom, Region::Right];

    pub fn slot(self) -> usize {
        match self {
            Region::Top => 0,
            Region::Bottom => 1,
            Region::Left => 2,
            Region::Right => 3,
        }
    }

    /// Counter-clockwise rotation the image has undergone when this region
    /// holds the farthest content.
    pub fn orientation(self) -> Angle {
        Angle::wrap(match self {
            Region::Top => 0.0,
            Region::Left => 90.0,
            Region::Bottom => 180.0,
            Region::Right => 270.0,
        })
    }
}

/// Normalized offset `(dx, dy)` of a pixel from the frame center, in units of
/// the half-width and half-height. `dy < 0` is up.
#[inline]
pub(crate) fn normalized_offset(row: usize, col: usize, width: usize, height: usize) -> (f64, f64) {
    let (cx, cy) = grid_center(width, height);
    (
        (col as f64 - cx) / (width as f64 / 2.0),
        (row as f64 - cy) / (height as f64 / 2.0),
    )
}

/// Region label of a pixel, `None` on the diagonals (including the center).
#[inline]
pub fn quadrant_label(row: usize, col: usize, width: usize, height: usize) -> Option<Region> {
    let (dx, dy) = normalized_offset(row, col, width, height);
    let (ax, ay) = (dx.abs(), dy.abs());
    if ay > ax {
        Some(if dy < 0.0 { Region::Top } else { Region::Bottom })
    } else if ax > ay {
        Some(if dx < 0.0 { Region::Left } else { Region::Right })
    } else {
        None
    }
}

/// Per-pixel region labels for a `width x height` frame, row-major.
pub fn partition_labels(width: usize, height: usize) -> Vec<Option<Region>> {
    (0..height)
        .flat_map(|r| (0..width).map(move |c| quadrant_label(r, c, width, height)))
        .collect()
}

pub fn partition_quadrants(map: &DepthMap) -> Vec<Option<Region>> {
    partition_labels(map.width(), map.height())
}

/// Mean valid depth and valid-pixel count per region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMagnitudes {
    pub top: f64,
    pub bottom: f64,
    pub left: f64,
    pub right: f64,
    /// Valid-pixel counts in `Region::ALL` order.
    pub counts: [usize; 4],
}

impl RegionMagnitudes {
    /// Builds from per-region values and counts in `Region::ALL` order.
    pub fn from_parts(values: [f64; 4], counts: [usize; 4]) -> Self {
        RegionMagnitudes {
            top: values[0],
            bottom: values[1],
            left: values[2],
            right: values[3],
            counts,
        }
    }

    pub fn get(&self, region: Region) -> f64 {
        match region {
            Region::Top => self.top,
            Region::Bottom => self.bottom,
            Region::Left => self.left,
            Region::Right => self.right,
        }
    }

    pub fn count(&self, region: Region) -> usize {
        self.counts[region.slot()]
    }

    /// Argmax over regions with at least one valid pixel, ties broken by
    /// [`Region::PRIORITY`]. The flag reports whether the maximum is unique.
    pub fn argmax(&self) -> Option<(Region, bool)> {
        let mut best: Option<(Region, f64)> = None;
        let mut strict = true;
        for region in Region::PRIORITY {
            if self.count(region) == 0 {
                continue;
            }
            let v = self.get(region);
            match best {
                None => best = Some((region, v)),
                Some((_, b)) if v > b => {
                    best = Some((region, v));
                    strict = true;
                }
                Some((_, b)) if v == b => strict = false,
                _ => {}
            }
        }
        best.map(|(r, _)| (r, strict))
    }
}

/// Coarse orientation plus the fine-search interval centered on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseEstimate {
    pub theta_c: Angle,
    pub magnitudes: RegionMagnitudes,
    pub search_lo: Angle,
    pub search_hi: Angle,
    pub sector_magnitudes: Option<[f64; 8]>,
    /// False when the winning region was tied or the evidence was otherwise
    /// too weak to separate the regions.
    pub confident: bool,
}

impl CoarseEstimate {
    /// Estimate whose farthest region is `region`.
    pub fn from_region(region: Region, magnitudes: RegionMagnitudes, confident: bool) -> Self {
        let theta_c = region.orientation();
        CoarseEstimate {
            theta_c,
            magnitudes,
            search_lo: theta_c.offset(-SEARCH_HALF_WIDTH_DEG),
            search_hi: theta_c.offset(SEARCH_HALF_WIDTH_DEG),
            sector_magnitudes: None,
            confident,
        }
    }
}

/// Mean valid depth per diagonal region.
pub fn quadrant_magnitudes(map: &DepthMap) -> Result<RegionMagnitudes> {
    let (w, h) = (map.width(), map.height());
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for r in 0..h {
        for c in 0..w {
            let Some(d) = map.get(r, c) else { continue };
            if let Some(region) = quadrant_label(r, c, w, h) {
                sums[region.slot()] += d;
                counts[region.slot()] += 1;
            }
        }
    }
    if counts.iter().all(|n| *n == 0) {
        return Err(Error::degenerate("no valid pixels in any quadrant"));
    }
    let mut means = [0.0; 4];
    for i in 0..4 {
        if counts[i] > 0 {
            means[i] = sums[i] / counts[i] as f64;
        }
    }
    Ok(RegionMagnitudes::from_parts(means, counts))
}

/// Picks the region with the largest magnitude and maps it to a quarter turn.
pub fn coarse_orientation(m: &RegionMagnitudes) -> Result<CoarseEstimate> {
    let (region, strict) = m
        .argmax()
        .ok_or_else(|| Error::degenerate("all regions are empty"))?;
    Ok(CoarseEstimate::from_region(region, m.clone(), strict))
}

/// 45-degree sector index of a pixel, counted counter-clockwise from
/// straight up. Sector `k` spans `[45k, 45(k+1))`. The exact center has no
/// direction and yields `None`.
pub fn sector_index(row: usize, col: usize, width: usize, height: usize) -> Option<usize> {
    let (dx, dy) = normalized_offset(row, col, width, height);
    // (up, left) components; a quarter turn maps (up, left) -> (left, -up)
    let (mut up, mut left) = (-dy, -dx);
    if up == 0.0 && left == 0.0 {
        return None;
    }
    let mut quadrant = 0;
    while !(up > 0.0 && left >= 0.0) {
        (up, left) = (left, -up);
        quadrant += 1;
    }
    Some(2 * quadrant + usize::from(left >= up))
}

/// Mean valid depth in each of eight 45-degree sectors. Empty sectors are 0.
pub fn sector_magnitudes(map: &DepthMap) -> [f64; 8] {
    let (w, h) = (map.width(), map.height());
    let mut sums = [0.0; 8];
    let mut counts = [0usize; 8];
    for r in 0..h {
        for c in 0..w {
            let Some(d) = map.get(r, c) else { continue };
            if let Some(s) = sector_index(r, c, w, h) {
                sums[s] += d;
                counts[s] += 1;
            }
        }
    }
    let mut out = [0.0; 8];
    for i in 0..8 {
        if counts[i] > 0 {
            out[i] = sums[i] / counts[i] as f64;
        }
    }
    out
}

/// Convenience: magnitudes, argmax and sectors in one pass over the API.
pub fn estimate_coarse(map: &DepthMap) -> Result<CoarseEstimate> {
    let m = quadrant_magnitudes(map)?;
    let mut est = coarse_orientation(&m)?;
    est.sector_magnitudes = Some(sector_magnitudes(map));
    Ok(est)
}
