//! Depth-map storage, angle arithmetic and rotation with validity masking.
//!
//! Rotations are counter-clockwise positive as seen on screen (row index
//! grows downwards) and pivot on the grid center `((w-1)/2, (h-1)/2)`.
//! Arbitrary-angle rotation keeps the input dimensions; pixels whose source
//! falls outside the frame or touches an invalid pixel become invalid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An angle in degrees, always kept in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Canonicalizes `deg` modulo 360.
    pub fn new(deg: f64) -> Result<Angle> {
        if !deg.is_finite() {
            return Err(Error::invalid(format!("angle must be finite, got {deg}")));
        }
        let mut d = deg.rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        if d >= 360.0 {
            d = 0.0;
        }
        Ok(Angle(d))
    }

    /// Infallible constructor for angles produced by internal arithmetic.
    pub(crate) fn wrap(deg: f64) -> Angle {
        Angle::new(deg).expect("internal angle arithmetic produced a non-finite value")
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn offset(self, deg: f64) -> Angle {
        Angle::wrap(self.0 + deg)
    }

    /// Number of quarter turns if this angle is an exact multiple of 90.
    pub fn quarter_turns(self) -> Option<i32> {
        let q = self.0 / 90.0;
        (q.fract() == 0.0).then_some(q as i32)
    }
}

impl std::fmt::Display for Angle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}°", self.0)
    }
}

/// Free-function form of [`Angle::new`].
pub fn canonicalize_angle(deg: f64) -> Result<Angle> {
    Angle::new(deg)
}

/// Shortest arc between two angles, in `[0, 180]`.
pub fn circular_distance(a: Angle, b: Angle) -> f64 {
    let d = (a.0 - b.0).abs() % 360.0;
    d.min(360.0 - d)
}

/// Row-major grid of depths (larger = farther) with a per-pixel validity mask.
///
/// Invalid pixels always store `0.0`, so two maps compare equal exactly when
/// their valid content and masks match.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a fully valid map. Every value must be finite and non-negative.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::with_mask(width, height, values, valid)
    }

    /// Builds a map with an explicit mask. Values under invalid entries are
    /// ignored; valid entries must be finite and non-negative.
    pub fn with_mask(
        width: usize,
        height: usize,
        mut values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "depth map must be non-empty, got {width}x{height}"
            )));
        }
        let n = width * height;
        if values.len() != n || valid.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} entries for {width}x{height}, got {} values and {} mask entries",
                values.len(),
                valid.len()
            )));
        }
        for (i, (v, ok)) in values.iter_mut().zip(&valid).enumerate() {
            if *ok {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::invalid(format!(
                        "valid pixel {i} has depth {v}; depths must be finite and non-negative"
                    )));
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(DepthMap {
            width,
            height,
            values,
            valid,
        })
    }

    /// Builds a map from a closure evaluated at every `(row, col)`; `None`
    /// marks the pixel invalid.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                match f(r, c) {
                    Some(v) => {
                        values.push(v);
                        valid.push(true);
                    }
                    None => {
                        values.push(0.0);
                        valid.push(false);
                    }
                }
            }
        }
        Self::with_mask(width, height, values, valid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Depth at `(row, col)` if the pixel is valid.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = self.index(row, col);
        self.valid[i].then(|| self.values[i])
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[self.index(row, col)]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Applies `f` to every valid depth. The result must stay finite and
    /// non-negative.
    pub fn map_valid(&self, f: impl Fn(f64) -> f64) -> Result<DepthMap> {
        let values = self
            .values
            .iter()
            .zip(&self.valid)
            .map(|(v, ok)| if *ok { f(*v) } else { 0.0 })
            .collect();
        DepthMap::with_mask(self.width, self.height, values, self.valid.clone())
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> DepthMap {
        let mut values = Vec::with_capacity(self.values.len());
        let mut valid = Vec::with_capacity(self.valid.len());
        for r in 0..self.height {
            for c in (0..self.width).rev() {
                let i = self.index(r, c);
                values.push(self.values[i]);
                valid.push(self.valid[i]);
            }
        }
        DepthMap {
            width: self.width,
            height: self.height,
            values,
            valid,
        }
    }

    /// Grid center in pixel-index coordinates `(col, row)`.
    pub fn center(&self) -> (f64, f64) {
        grid_center(self.width, self.height)
    }
}

pub(crate) fn grid_center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Exact counter-clockwise quarter-turn permutation of a row-major buffer.
/// Returns the permuted data with its new `(width, height)`.
pub fn rotate90_buffer<T: Copy>(
    data: &[T],
    width: usize,
    height: usize,
    quarter_turns: i32,
) -> (Vec<T>, usize, usize) {
    debug_assert_eq!(data.len(), width * height);
    let turns = quarter_turns.rem_euclid(4);
    let (w, h) = if turns % 2 == 0 {
        (width, height)
    } else {
        (height, width)
    };
    let mut out = Vec::with_capacity(data.len());
    for r in 0..h {
        for c in 0..w {
            // source (row, col) for output (r, c)
            let (sr, sc) = match turns {
                0 => (r, c),
                1 => (c, width - 1 - r),
                2 => (height - 1 - r, width - 1 - c),
                _ => (height - 1 - c, r),
            };
            out.push(data[sr * width + sc]);
        }
    }
    (out, w, h)
}

/// Lossless counter-clockwise rotation by `quarter_turns * 90` degrees.
pub fn rotate90(map: &DepthMap, quarter_turns: i32) -> DepthMap {
    let (values, w, h) = rotate90_buffer(&map.values, map.width, map.height, quarter_turns);
    let (valid, _, _) = rotate90_buffer(&map.valid, map.width, map.height, quarter_turns);
    DepthMap {
        width: w,
        height: h,
        values,
        valid,
    }
}

/// Exact `(cos, sin)` for multiples of 90 degrees, so quarter-turn sampling
/// lands on integer (or half-integer) source coordinates.
fn trig(angle: Angle) -> (f64, f64) {
    match angle.quarter_turns() {
        Some(0) => (1.0, 0.0),
        Some(1) => (0.0, 1.0),
        Some(2) => (-1.0, 0.0),
        Some(3) => (0.0, -1.0),
        _ => {
            let t = angle.degrees().to_radians();
            (t.cos(), t.sin())
        }
    }
}

/// Rotates `map` counter-clockwise by `angle` about the grid center, keeping
/// the original dimensions.
///
/// Each output pixel is sampled bilinearly from the inverse-rotated position.
/// It is valid only if every neighbour with non-zero interpolation weight is
/// inside the frame and valid. Half and full turns (and quarter turns of
/// square maps) are delegated to [`rotate90`].
pub fn rotate_arbitrary(map: &DepthMap, angle: Angle) -> DepthMap {
    if let Some(q) = angle.quarter_turns() {
        if q % 2 == 0 || map.width == map.height {
            return rotate90(map, q);
        }
    }
    let (w, h) = (map.width, map.height);
    let (cx, cy) = map.center();
    let (cos, sin) = trig(angle);
    let mut values = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    for r in 0..h {
        let dy = r as f64 - cy;
        for c in 0..w {
            let dx = c as f64 - cx;
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            if let Some(v) = sample_bilinear(map, sx, sy) {
                let i = r * w + c;
                values[i] = v;
                valid[i] = true;
            }
        }
    }
    DepthMap {
        width: w,
        height: h,
        values,
        valid,
    }
}

fn sample_bilinear(map: &DepthMap, sx: f64, sy: f64) -> Option<f64> {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let fetch = |ox: f64, oy: f64| {
        let (x, y) = (x0 + ox, y0 + oy);
        if x < 0.0 || y < 0.0 || x >= map.width as f64 || y >= map.height as f64 {
            return None;
        }
        map.get(y as usize, x as usize)
    };
    // Zero-weight taps are never read; lerp form keeps constant patches exact.
    let v00 = fetch(0.0, 0.0)?;
    let v10 = if fx > 0.0 { fetch(1.0, 0.0)? } else { v00 };
    let (v01, v11) = if fy > 0.0 {
        let v01 = fetch(0.0, 1.0)?;
        (v01, if fx > 0.0 { fetch(1.0, 1.0)? } else { v01 })
    } else {
        (v00, v10)
    };
    let top = v00 + fx * (v10 - v00);
    let bottom = v01 + fx * (v11 - v01);
    Some(top + fy * (bottom - top))
}

/// Affine rescale sending the minimum to 0 and the maximum to 1. A constant
/// list maps to all zeros.
pub fn min_max_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot normalize an empty list"));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("cannot normalize non-finite value {bad}")));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span == 0.0 {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|v| (v - lo) / span).collect())
}
