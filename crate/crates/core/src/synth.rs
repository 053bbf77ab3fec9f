//! Pinhole projection with camera tilt, and an analytic ray-cast depth
//! renderer for simple scenes with known ground-truth orientation.
//!
//! Conventions: world `y` points up and `z` along the untilted optical
//! axis. The vertical image coordinate `v` is measured upwards from the
//! bottom edge, so pixel `(row, col)` has its center at
//! `u = col + 0.5`, `v = height - row - 0.5`. A camera point is posed as
//!
//! ```text
//! x_c = x
//! y_c = cos(t) y - sin(t) z + elevation
//! z_c = sin(t) y + cos(t) z
//! ```
//!
//! with `t` the tilt. Positive tilt pushes the horizon down the frame,
//! negative tilt pushes it up. Far ground recedes towards the horizon, so an
//! upright render always has its deepest content in the upper part.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{rotate_arbitrary, Angle, DepthMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Positive tilts the view so the horizon drops; negative raises it.
    pub tilt_deg: f64,
    /// Vertical offset added to the posed `y` coordinate.
    pub elevation: f64,
    pub image_width: usize,
    pub image_height: usize,
}

impl CameraModel {
    /// Untilted camera with the principal point at the frame center.
    pub fn centered(width: usize, height: usize, focal: f64) -> Self {
        CameraModel {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            tilt_deg: 0.0,
            elevation: 0.0,
            image_width: width,
            image_height: height,
        }
    }

    pub fn with_pose(mut self, tilt_deg: f64, elevation: f64) -> Self {
        self.tilt_deg = tilt_deg;
        self.elevation = elevation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.image_width as f64, self.image_height as f64);
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::invalid("camera image size must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(0.0..=w).contains(&self.cx) || !(0.0..=h).contains(&self.cy) {
            return Err(Error::invalid(format!(
                "principal point ({}, {}) outside the {w}x{h} frame",
                self.cx, self.cy
            )));
        }
        if !self.tilt_deg.is_finite() || !self.elevation.is_finite() || self.tilt_deg.abs() >= 90.0 {
            return Err(Error::invalid("tilt must be within (-90, 90) and pose finite"));
        }
        Ok(())
    }

    fn trig(&self) -> (f64, f64) {
        let t = self.tilt_deg.to_radians();
        (t.cos(), t.sin())
    }

    /// Image row (possibly fractional) of a vertical coordinate `v`.
    pub fn row_of(&self, v: f64) -> f64 {
        self.image_height as f64 - v - 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        WorldPoint { x, y, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    /// Posed depth `z_c`, the projective denominator.
    pub depth: f64,
}

/// Projects a world point through the tilted pinhole.
pub fn project_point(cam: &CameraModel, p: WorldPoint) -> Result<ImagePoint> {
    let (cos, sin) = cam.trig();
    let depth = sin * p.y + cos * p.z;
    if !(depth > 0.0) {
        return Err(Error::BehindCamera { depth });
    }
    Ok(ImagePoint {
        u: cam.fx * p.x / depth + cam.cx,
        v: cam.fy * (cos * p.y - sin * p.z + cam.elevation) / depth + cam.cy,
        depth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// Horizontal plane at world height `height`, visible for
    /// `z_near <= z <= z_far`.
    GroundPlane { height: f64, z_near: f64, z_far: f64 },
    /// Plane `z = distance` facing the camera, limited to a rectangle.
    Wall {
        distance: f64,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
}

impl Primitive {
    /// Wall with unbounded extent.
    pub fn backdrop(distance: f64) -> Self {
        Primitive::Wall {
            distance,
            x_min: f64::NEG_INFINITY,
            x_max: f64::INFINITY,
            y_min: f64::NEG_INFINITY,
            y_max: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// Expected `(min, max)` rendered depth, checked when present.
    pub depth_range: Option<(f64, f64)>,
}

impl SceneSpec {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        SceneSpec {
            primitives,
            depth_range: None,
        }
    }

    /// Ground plane at `height` (negative: below the camera) running out to
    /// a backdrop at `distance`.
    pub fn ground_with_backdrop(height: f64, distance: f64) -> Self {
        SceneSpec::new(vec![
            Primitive::GroundPlane {
                height,
                z_near: 0.0,
                z_far: distance,
            },
            Primitive::backdrop(distance),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::invalid("scene has no primitives"));
        }
        for p in &self.primitives {
            match *p {
                Primitive::GroundPlane { height, z_near, z_far } => {
                    if !height.is_finite() || !(z_near < z_far) || z_far <= 0.0 {
                        return Err(Error::invalid(format!("bad ground plane {p:?}")));
                    }
                }
                Primitive::Wall {
                    distance,
                    x_min,
                    x_max,
                    y_min,
                    y_max,
                } => {
                    if !(distance > 0.0 && distance.is_finite()) || !(x_min < x_max) || !(y_min < y_max) {
                        return Err(Error::invalid(format!("bad wall {p:?}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Posed depth where the viewing ray `(dx, dy, 1)` (in camera units) first
/// meets `prim`, if it does so in front of the camera.
fn intersect(prim: &Primitive, cam: &CameraModel, dx: f64, dy: f64) -> Option<f64> {
    let (cos, sin) = cam.trig();
    let e = cam.elevation;
    // world coordinates of the ray point at posed depth s
    let world_y = |s: f64| cos * (s * dy - e) + sin * s;
    let world_z = |s: f64| -sin * (s * dy - e) + cos * s;
    let s = match *prim {
        Primitive::GroundPlane { height, z_near, z_far } => {
            let den = cos * dy + sin;
            if den == 0.0 {
                return None;
            }
            let s = (height + cos * e) / den;
            let z = world_z(s);
            (s > 0.0 && z >= z_near && z <= z_far).then_some(s)?
        }
        Primitive::Wall {
            distance,
            x_min,
            x_max,
            y_min,
            y_max,
        } => {
            let den = cos - sin * dy;
            if den == 0.0 {
                return None;
            }
            let s = (distance - sin * e) / den;
            let (x, y) = (s * dx, world_y(s));
            (s > 0.0 && x >= x_min && x <= x_max && y >= y_min && y <= y_max).then_some(s)?
        }
    };
    s.is_finite().then_some(s)
}

/// Ray-casts every pixel center and keeps the nearest hit. Pixels that see
/// nothing are invalid.
pub fn render_depth(scene: &SceneSpec, cam: &CameraModel) -> Result<DepthMap> {
    scene.validate()?;
    cam.validate()?;
    let (w, h) = (cam.image_width, cam.image_height);
    let rows: Vec<Vec<Option<f64>>> = (0..h)
        .into_par_iter()
        .map(|r| {
            let v = h as f64 - r as f64 - 0.5;
            let dy = (v - cam.cy) / cam.fy;
            (0..w)
                .map(|c| {
                    let dx = (c as f64 + 0.5 - cam.cx) / cam.fx;
                    scene
                        .primitives
                        .iter()
                        .filter_map(|p| intersect(p, cam, dx, dy))
                        .min_by(f64::total_cmp)
                })
                .collect()
        })
        .collect();
    let map = DepthMap::from_fn(w, h, |r, c| rows[r][c])?;
    if map.valid_count() == 0 {
        return Err(Error::DegenerateScene);
    }
    if let Some((lo, hi)) = scene.depth_range {
        let out = map
            .values()
            .iter()
            .zip(map.mask())
            .find(|(v, ok)| **ok && (**v < lo || **v > hi));
        if let Some((v, _)) = out {
            return Err(Error::invalid(format!(
                "rendered depth {v} outside the expected range [{lo}, {hi}]"
            )));
        }
    }
    Ok(map)
}

/// Renders the upright scene and rotates it counter-clockwise by `rotation`.
/// Returns the rotated map and its label.
pub fn make_ground_truth_case(
    scene: &SceneSpec,
    cam: &CameraModel,
    rotation: Angle,
) -> Result<(DepthMap, Angle)> {
    let upright = render_depth(scene, cam)?;
    Ok((rotate_arbitrary(&upright, rotation), rotation))
}

/// Named scenes used by the CLI and the evaluation suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenePreset {
    Ground,
    Wall,
    TiltedLow,
    TiltedHigh,
}

impl ScenePreset {
    pub const ALL: [ScenePreset; 4] = [
        ScenePreset::Ground,
        ScenePreset::Wall,
        ScenePreset::TiltedLow,
        ScenePreset::TiltedHigh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenePreset::Ground => "ground",
            ScenePreset::Wall => "wall",
            ScenePreset::TiltedLow => "tilted-low",
            ScenePreset::TiltedHigh => "tilted-high",
        }
    }

    /// Scene and camera for a `width x height` render.
    pub fn build(self, width: usize, height: usize) -> (SceneSpec, CameraModel) {
        let cam = CameraModel::centered(width, height, 0.8 * width.max(height) as f64);
        match self {
            ScenePreset::Ground => (SceneSpec::ground_with_backdrop(-1.5, 30.0), cam),
            ScenePreset::Wall => (SceneSpec::new(vec![Primitive::backdrop(5.0)]), cam),
            ScenePreset::TiltedLow => (SceneSpec::ground_with_backdrop(-1.5, 30.0), cam.with_pose(-5.0, -0.2)),
            ScenePreset::TiltedHigh => (SceneSpec::ground_with_backdrop(-1.5, 30.0), cam.with_pose(5.0, 0.2)),
        }
    }
}

impl std::str::FromStr for ScenePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenePreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scene preset {s:?}")))
    }
}

/// Ground-plus-backdrop scene family used by the sweeps: index `i` varies
/// camera height, backdrop distance, focal length and tilt deterministically.
pub fn ground_scene(index: usize, width: usize, height: usize) -> (SceneSpec, CameraModel) {
    const HEIGHTS: [f64; 5] = [-1.5, -1.0, -2.0, -1.2, -1.8];
    const DISTANCES: [f64; 5] = [30.0, 15.0, 50.0, 20.0, 40.0];
    const FOCALS: [f64; 5] = [0.8, 0.7, 0.9, 0.6, 1.0];
    const TILTS: [f64; 5] = [0.0, 4.0, -4.0, 2.0, -2.0];
    let i = index % 5;
    let round = (index / 5) as f64;
    let cam = CameraModel::centered(width, height, FOCALS[i] * width.max(height) as f64)
        .with_pose(TILTS[i] + round * 0.5, 0.0);
    (
        SceneSpec::ground_with_backdrop(HEIGHTS[i] - 0.1 * round, DISTANCES[i] + 2.0 * round),
        cam,
    )
}
