//! Homogeneous-coordinate primitives, the one-parameter division model for
//! radial lens distortion, conjugate translations, and pixel/normalized
//! coordinate conversion.
//!
//! All solver math runs in center-subtracted coordinates scaled by
//! `1/(width + height)`, so a division-model parameter like λ = -4 means the
//! same thing for every image size. The division model only touches the
//! homogeneous coordinate:
//!
//!   f((x, y), λ) = (x, y, 1 + λ(x² + y²))
//!
//! so undistortion is linear-in-λ and composes cleanly with homographies.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Points whose homogeneous coordinate falls below this are treated as lying
/// on the line at infinity and flagged invalid for downstream solvers.
pub const W_AT_INFINITY: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    /// Inverting the division model has no real root (only possible for λ > 0).
    #[error("no real distorted radius for undistorted radius {radius} at lambda {lambda}")]
    NoRealRoot { radius: f64, lambda: f64 },
    /// The operation required a finite (dehomogenizable) point.
    #[error("point at infinity (|w| < {W_AT_INFINITY})")]
    PointAtInfinity,
    /// Index past the stored relative scales of a conjugate translation.
    #[error("correspondence index {index} out of range ({len} scales)")]
    IndexOutOfRange { index: usize, len: usize },
    /// Construction ran into a numerically zero/rank-deficient configuration.
    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),
}

/// A point of the projective image plane in normalized image units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2H {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl Point2H {
    pub fn new(x: f64, y: f64, w: f64) -> Self {
        Self { x, y, w }
    }

    /// Finite point (x, y) with w = 1.
    pub fn from_xy(x: f64, y: f64) -> Self {
        Self { x, y, w: 1.0 }
    }

    pub fn to_vec3(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.w)
    }

    pub fn from_vec3(v: Vec3) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    /// Euclidean coordinates, or `None` for points at (or numerically near)
    /// the line at infinity.
    pub fn dehomogenize(self) -> Option<(f64, f64)> {
        if self.w.abs() < W_AT_INFINITY {
            None
        } else {
            Some((self.x / self.w, self.y / self.w))
        }
    }

    pub fn is_near_infinity(self) -> bool {
        self.w.abs() < W_AT_INFINITY
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite()
    }
}

/// One-parameter division model of radial lens distortion.
///
/// `lambda` is dimensionless and refers to normalized, center-subtracted
/// coordinates. `center` is the distortion center in pixels; the solvers
/// themselves never see it because they work on already-centered points.
/// Negative lambda is barrel distortion (GoPro-type imagery sits near -4).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DivisionModel {
    pub lambda: f64,
    /// Distortion center in pixels.
    pub center: (f64, f64),
}

impl DivisionModel {
    pub fn new(lambda: f64, center: (f64, f64)) -> Self {
        Self { lambda, center }
    }

    /// Zero-distortion model centered on an image of the given size.
    pub fn identity(width: f64, height: f64) -> Self {
        Self::new(0.0, (width / 2.0, height / 2.0))
    }
}

/// Maps a distorted measurement to its pinhole (undistorted) pre-image.
///
/// Input must be center-subtracted and normalized with w = 1. The output may
/// legitimately have w ≤ 0: points beyond the λ-circle map past the line at
/// infinity, and callers must check [`Point2H::is_near_infinity`].
pub fn undistort(p: Point2H, m: &DivisionModel) -> Point2H {
    let r2 = p.x * p.x + p.y * p.y;
    Point2H::new(p.x, p.y, p.w + m.lambda * r2)
}

/// Maps an undistorted point to the distorted measurement, inverting
/// [`undistort`] projectively.
///
/// The distorted radius solves λ·r_u·r_d² − r_d + r_u = 0. Of the two roots
/// we pick the branch continuous with λ → 0 (r_d → r_u) when it reproduces
/// the input projectively, otherwise the conjugate root (needed for inputs
/// with w < 0, which sit past the λ-circle).
pub fn distort(p: Point2H, m: &DivisionModel) -> Result<Point2H, GeometryError> {
    let (x, y) = p.dehomogenize().ok_or(GeometryError::PointAtInfinity)?;
    let r_u = (x * x + y * y).sqrt();
    if m.lambda.abs() < 1e-15 || r_u < 1e-15 {
        return Ok(Point2H::from_xy(x, y));
    }
    let disc = 1.0 - 4.0 * m.lambda * r_u * r_u;
    if disc < 0.0 {
        return Err(GeometryError::NoRealRoot {
            radius: r_u,
            lambda: m.lambda,
        });
    }
    let sq = disc.sqrt();
    // Writing the small root as 2r_u/(1+sq) avoids cancellation for λ → 0.
    let r_small = 2.0 * r_u / (1.0 + sq);
    // For λ < 0 the model folds the plane: points with w < 0 sit past the
    // λ-circle and invert through the conjugate (negative) root, which keeps
    // undistort(distort(p)) = c·p with c > 0.
    let r_d = if m.lambda < 0.0 && p.w < 0.0 {
        (1.0 + sq) / (2.0 * m.lambda * r_u)
    } else {
        r_small
    };
    let s = r_d / r_u;
    Ok(Point2H::from_xy(x * s, y * s))
}

/// Which coordinate of the vanishing line is pinned to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Gauge {
    L3Eq1,
    L2Eq1,
}

/// The imaged scene plane's vanishing line with an explicit scale gauge.
///
/// The default gauge fixes l3 = 1; the l2 = 1 variant covers lines through
/// the origin where the first gauge degenerates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanishingLine {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub gauge: Gauge,
}

impl VanishingLine {
    /// Line (l1, l2, 1) in the l3 = 1 gauge.
    pub fn new_l3(l1: f64, l2: f64) -> Self {
        Self {
            l1,
            l2,
            l3: 1.0,
            gauge: Gauge::L3Eq1,
        }
    }

    /// Line (l1, 1, l3) in the l2 = 1 gauge.
    pub fn new_l2(l1: f64, l3: f64) -> Self {
        Self {
            l1,
            l2: 1.0,
            l3,
            gauge: Gauge::L2Eq1,
        }
    }

    /// Rescale an arbitrary homogeneous line into the requested gauge.
    pub fn from_homogeneous(l: Vec3, gauge: Gauge) -> Result<Self, GeometryError> {
        let div = match gauge {
            Gauge::L3Eq1 => l.z,
            Gauge::L2Eq1 => l.y,
        };
        if div.abs() < 1e-15 {
            return Err(GeometryError::Degenerate("gauge coordinate is zero"));
        }
        let l = l / div;
        Ok(Self {
            l1: l.x,
            l2: l.y,
            l3: l.z,
            gauge,
        })
    }

    pub fn as_vec3(&self) -> Vec3 {
        Vec3::new(self.l1, self.l2, self.l3)
    }
}

/// A planar translation as seen in the image: H = I + s̄_i·u·lᵀ.
///
/// `direction` carries the absolute scale convention ‖u‖ = s_1, so the first
/// relative scale is 1 by definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateTranslation {
    pub line: VanishingLine,
    pub direction: Vec3,
    pub rel_scales: Vec<f64>,
}

impl ConjugateTranslation {
    pub fn new(line: VanishingLine, direction: Vec3, rel_scales: Vec<f64>) -> Self {
        debug_assert!(!rel_scales.is_empty());
        Self {
            line,
            direction,
            rel_scales,
        }
    }

    /// The 3×3 homography translating correspondence `i`.
    pub fn homography(&self, i: usize) -> Result<Mat3, GeometryError> {
        let s = *self
            .rel_scales
            .get(i)
            .ok_or(GeometryError::IndexOutOfRange {
                index: i,
                len: self.rel_scales.len(),
            })?;
        Ok(Mat3::identity() + s * self.direction * self.line.as_vec3().transpose())
    }

    /// Incidence defect lᵀu; zero for a valid conjugate translation.
    pub fn incidence(&self) -> f64 {
        self.line.as_vec3().dot(&self.direction)
    }
}

/// Applies the conjugate translation of correspondence `i` to an undistorted
/// point. The output is collinear with the input and the direction u.
pub fn apply_conjugate_translation(
    ct: &ConjugateTranslation,
    i: usize,
    p: Point2H,
) -> Result<Point2H, GeometryError> {
    let h = ct.homography(i)?;
    Ok(Point2H::from_vec3(h * p.to_vec3()))
}

/// Builds the rectifying homography H∞ whose third row is the vanishing
/// line, so that H∞⁻ᵀ·l lands exactly on (0, 0, 1).
///
/// The first two rows are the two identity rows most orthogonal to l, which
/// keeps the matrix well-conditioned for any line gauge.
pub fn rectifying_homography(l: &VanishingLine) -> Result<Mat3, GeometryError> {
    let lv = l.as_vec3();
    let n = lv.norm();
    if !n.is_finite() || n < 1e-15 {
        return Err(GeometryError::Degenerate("vanishing line is zero"));
    }
    // drop the identity row with the largest |l·e_i| (the least orthogonal one)
    let mut drop = 0;
    for i in 1..3 {
        if lv[i].abs() > lv[drop].abs() {
            drop = i;
        }
    }
    let keep: Vec<usize> = (0..3).filter(|&i| i != drop).collect();
    let mut h = Mat3::zeros();
    h[(0, keep[0])] = 1.0;
    h[(1, keep[1])] = 1.0;
    h.set_row(2, &lv.transpose());
    Ok(h)
}

/// Conversion between pixel coordinates and center-subtracted coordinates
/// scaled by 1/(width + height).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationFrame {
    pub image_width: f64,
    pub image_height: f64,
    pub scale: f64,
    pub center: (f64, f64),
}

impl NormalizationFrame {
    pub fn new(image_width: f64, image_height: f64, center: (f64, f64)) -> Self {
        Self {
            image_width,
            image_height,
            scale: 1.0 / (image_width + image_height),
            center,
        }
    }

    /// Frame centered on the image.
    pub fn centered(image_width: f64, image_height: f64) -> Self {
        Self::new(
            image_width,
            image_height,
            (image_width / 2.0, image_height / 2.0),
        )
    }

    pub fn normalize(&self, (px, py): (f64, f64)) -> Point2H {
        Point2H::from_xy(
            (px - self.center.0) * self.scale,
            (py - self.center.1) * self.scale,
        )
    }

    pub fn denormalize(&self, p: Point2H) -> Option<(f64, f64)> {
        let (x, y) = p.dehomogenize()?;
        Some((x / self.scale + self.center.0, y / self.scale + self.center.1))
    }

    /// 3×3 pixel → normalized homography (useful for conjugating cameras).
    pub fn matrix(&self) -> Mat3 {
        Mat3::new(
            self.scale,
            0.0,
            -self.center.0 * self.scale,
            0.0,
            self.scale,
            -self.center.1 * self.scale,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn inverse_matrix(&self) -> Mat3 {
        Mat3::new(
            1.0 / self.scale,
            0.0,
            self.center.0,
            0.0,
            1.0 / self.scale,
            self.center.1,
            0.0,
            0.0,
            1.0,
        )
    }
}

pub fn normalize_points(frame: &NormalizationFrame, points: &[(f64, f64)]) -> Vec<Point2H> {
    points.iter().map(|&p| frame.normalize(p)).collect()
}

pub fn denormalize_points(frame: &NormalizationFrame, points: &[Point2H]) -> Vec<Option<(f64, f64)>> {
    points.iter().map(|&p| frame.denormalize(p)).collect()
}
