//! Farthest-quadrant inference from defocus when no depth map is available.
//!
//! Each quadrant gets a scalar blur intensity (larger = more blurred =
//! farther). Responses below a threshold `tau` are suppressed; when the four
//! intensities are too close together the threshold is shrunk by `gamma`
//! and the quadrants are measured again, until they separate by at least
//! `epsilon` or the iteration budget runs out.
//!
//! The per-quadrant measurement sits behind [`BlurEstimator`]. The bundled
//! [`GradientBlurProxy`] uses the inverse median patch gradient energy.

use serde::{Deserialize, Serialize};

use crate::coarse::{partition_labels, CoarseEstimate, Region, RegionMagnitudes};
use crate::error::{Error, Result};
use crate::grid::rotate90_buffer;

/// Guard added to the median gradient before inversion.
pub const BLUR_GUARD: f64 = 1e-6;

/// Luminance image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::invalid(format!(
                "gray image {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::invalid(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let data = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Exact counter-clockwise quarter turns.
    pub fn rotate90(&self, quarter_turns: i32) -> GrayImage {
        let (data, width, height) = rotate90_buffer(&self.data, self.width, self.height, quarter_turns);
        GrayImage { width, height, data }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefocusConfig {
    /// Initial response threshold.
    pub tau: f64,
    /// Threshold shrink factor per retry, in (0, 1).
    pub gamma: f64,
    /// Minimum spread between the most and least blurred quadrants.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub patch_size: usize,
    /// Patches with a smaller intensity range carry no usable blur cue.
    pub contrast_floor: f64,
}

impl Default for DefocusConfig {
    fn default() -> Self {
        DefocusConfig {
            tau: 0.05,
            gamma: 0.9,
            epsilon: 0.02,
            max_iterations: 20,
            patch_size: 16,
            contrast_floor: 0.01,
        }
    }
}

impl DefocusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must be in (0, 1), got {}", self.gamma)));
        }
        if !(self.tau > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::invalid("tau and epsilon must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if self.patch_size < 2 {
            return Err(Error::invalid("patch size must be at least 2"));
        }
        Ok(())
    }
}

/// Blur intensity of one region, flagged when nothing usable was measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurMeasure {
    pub intensity: f64,
    pub degenerate: bool,
}

/// Per-region blur measurement. `region` is a row-major membership mask.
pub trait BlurEstimator: Sync {
    fn blur_intensity(&self, img: &GrayImage, region: &[bool], tau: f64, cfg: &DefocusConfig) -> BlurMeasure;
}

/// Inverse median patch gradient energy with thresholded responses.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradientBlurProxy;

impl BlurEstimator for GradientBlurProxy {
    fn blur_intensity(&self, img: &GrayImage, region: &[bool], tau: f64, cfg: &DefocusConfig) -> BlurMeasure {
        blur_intensity_proxy(img, region, tau, cfg)
    }
}

/// Grid cells (anchored at the top-left) holding at least half a patch of
/// region pixels. Yields `(row0, col0)` of each cell.
fn region_patches(img: &GrayImage, region: &[bool], patch: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r0 in (0..img.height).step_by(patch) {
        for c0 in (0..img.width).step_by(patch) {
            let mut n = 0;
            for r in r0..(r0 + patch).min(img.height) {
                for c in c0..(c0 + patch).min(img.width) {
                    n += usize::from(region[r * img.width + c]);
                }
            }
            if 2 * n >= patch * patch {
                out.push((r0, c0));
            }
        }
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Gradient-energy blur proxy for the pixels of `region`.
///
/// Per patch: mean over horizontal and vertical forward differences (both
/// ends inside the patch and the region) of `|d|`, with responses below `tau`
/// counted as zero. Patches whose intensity range is under the contrast
/// floor are skipped. The result is `1 / (median + 1e-6)`; with no surviving
/// patch it is `1e6` and flagged degenerate.
pub fn blur_intensity_proxy(img: &GrayImage, region: &[bool], tau: f64, cfg: &DefocusConfig) -> BlurMeasure {
    let p = cfg.patch_size;
    let inside = |r: usize, c: usize, r0: usize, c0: usize| {
        r < (r0 + p).min(img.height) && c < (c0 + p).min(img.width) && region[r * img.width + c]
    };
    let mut energies = Vec::new();
    for (r0, c0) in region_patches(img, region, p) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in r0..(r0 + p).min(img.height) {
            for c in c0..(c0 + p).min(img.width) {
                if !inside(r, c, r0, c0) {
                    continue;
                }
                let v = img.get(r, c);
                lo = lo.min(v);
                hi = hi.max(v);
                for (nr, nc) in [(r, c + 1), (r + 1, c)] {
                    if inside(nr, nc, r0, c0) {
                        let d = (img.get(nr, nc) - v).abs();
                        if d >= tau {
                            sum += d;
                        }
                        n += 1;
                    }
                }
            }
        }
        if n == 0 || hi - lo < cfg.contrast_floor {
            continue;
        }
        energies.push(sum / n as f64);
    }
    if energies.is_empty() {
        return BlurMeasure {
            intensity: 1.0 / BLUR_GUARD,
            degenerate: true,
        };
    }
    BlurMeasure {
        intensity: 1.0 / (median(&mut energies) + BLUR_GUARD),
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlurProfile {
    /// Blur intensities in `Region::ALL` order (top, bottom, left, right).
    pub intensities: [f64; 4],
    pub spread: f64,
    pub confident: bool,
    pub tau_final: f64,
    /// Number of threshold reductions performed.
    pub iterations: usize,
    pub farthest: Region,
    /// The iteration budget ran out before the quadrants separated.
    pub exhausted: bool,
    /// Quadrants where no patch could be measured at the final threshold.
    pub degenerate_regions: [bool; 4],
}

impl BlurProfile {
    pub fn intensity(&self, region: Region) -> f64 {
        self.intensities[region.slot()]
    }
}

fn quadrant_masks(width: usize, height: usize) -> [Vec<bool>; 4] {
    let labels = partition_labels(width, height);
    Region::ALL.map(|region| labels.iter().map(|l| *l == Some(region)).collect())
}

/// Blur profile using the bundled gradient proxy.
pub fn quadrant_blur_profile(img: &GrayImage, cfg: &DefocusConfig) -> Result<BlurProfile> {
    quadrant_blur_profile_with(img, cfg, &GradientBlurProxy)
}

/// Blur profile with the dynamic threshold loop, using any estimator.
pub fn quadrant_blur_profile_with(
    img: &GrayImage,
    cfg: &DefocusConfig,
    estimator: &dyn BlurEstimator,
) -> Result<BlurProfile> {
    cfg.validate()?;
    let masks = quadrant_masks(img.width, img.height);
    for (region, mask) in Region::ALL.iter().zip(&masks) {
        if region_patches(img, mask, cfg.patch_size).is_empty() {
            return Err(Error::invalid(format!(
                "{}x{} image is too small for a {}px patch in the {region:?} quadrant",
                img.width, img.height, cfg.patch_size
            )));
        }
    }

    let measure = |tau: f64| -> [BlurMeasure; 4] {
        let m: Vec<BlurMeasure> = masks
            .iter()
            .map(|mask| estimator.blur_intensity(img, mask, tau, cfg))
            .collect();
        [m[0], m[1], m[2], m[3]]
    };
    let spread_of = |b: &[BlurMeasure; 4]| {
        let hi = b.iter().map(|m| m.intensity).fold(f64::NEG_INFINITY, f64::max);
        let lo = b.iter().map(|m| m.intensity).fold(f64::INFINITY, f64::min);
        hi - lo
    };

    // Regions with no response above tau all saturate at the same ceiling, so
    // a large spread can coexist with a shared maximum. Keep lowering tau
    // until the most blurred region stands alone.
    let separated = |b: &[BlurMeasure; 4]| {
        let hi = b.iter().map(|m| m.intensity).fold(f64::NEG_INFINITY, f64::max);
        spread_of(b) >= cfg.epsilon && b.iter().filter(|m| m.intensity == hi).count() == 1
    };
    let mut tau = cfg.tau;
    let mut iterations = 0;
    let mut current = measure(tau);
    while !separated(&current) && iterations < cfg.max_iterations {
        tau *= cfg.gamma;
        iterations += 1;
        current = measure(tau);
    }

    let intensities = current.map(|m| m.intensity);
    let spread = spread_of(&current);
    let confident = separated(&current);
    let (farthest, _) = RegionMagnitudes::from_parts(intensities, [1; 4])
        .argmax()
        .expect("all four regions are populated");
    Ok(BlurProfile {
        intensities,
        spread,
        confident,
        tau_final: tau,
        iterations,
        farthest,
        exhausted: !confident,
        degenerate_regions: current.map(|m| m.degenerate),
    })
}

/// Coarse orientation with the most blurred quadrant playing the farthest
/// region.
pub fn defocus_coarse_orientation(profile: &BlurProfile) -> CoarseEstimate {
    let magnitudes = RegionMagnitudes::from_parts(profile.intensities, [1; 4]);
    CoarseEstimate::from_region(profile.farthest, magnitudes, profile.confident)
}

/// Separable box blur with clamped borders, `radius` pixels each way.
pub fn box_blur(img: &GrayImage, radius: usize) -> GrayImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = (img.width, img.height);
    let r = radius as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for k in -r..=r {
                    let (sx, sy) = if horizontal {
                        ((x as isize + k).clamp(0, w as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + k).clamp(0, h as isize - 1) as usize)
                    };
                    acc += src[sy * w + sx];
                }
                out[y * w + x] = acc / (2 * radius + 1) as f64;
            }
        }
        out
    };
    let data = pass(&pass(&img.data, true), false);
    GrayImage { width: w, height: h, data }
}
