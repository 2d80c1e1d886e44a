//! Joint estimation of affine rectification (scene-plane vanishing line) and
//! one-parameter radial lens distortion from conjugately translated coplanar
//! point correspondences.
//!
//! The crate provides:
//!
//! - minimal polynomial solvers (2-, 2.5-, 3-, 3.5- and 4-point) that map a
//!   handful of point correspondences from repeated coplanar features to
//!   model hypotheses (vanishing line, division-model λ, translation
//!   directions and scales),
//! - a hidden-variable constraint builder and a polynomial-system backend
//!   with ideal saturation,
//! - a LO-RANSAC robust estimator over appearance-clustered affine frames,
//! - transfer-/warp-error metrics and a seeded synthetic benchmark harness,
//! - JSON/CSV/PPM interchange used by the `rdct` CLI.

pub mod constraints;
pub mod estimator;
pub mod formats;
pub mod geometry;
pub mod instances;
pub mod jet;
pub mod metrics;
pub mod poly;
pub mod polysys;
pub mod solvers;
pub mod synth;

pub use geometry::{
    apply_conjugate_translation, distort, normalize_points, rectifying_homography, undistort,
    ConjugateTranslation, DivisionModel, Gauge, GeometryError, Mat3, NormalizationFrame, Point2H,
    Vec3, VanishingLine,
};
pub use poly::{MultiPoly, Var};
pub use solvers::{ModelHypothesis, SolverKind};
