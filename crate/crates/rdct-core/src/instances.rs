//! Random noiseless conjugate-translation instances with exact ground truth.
//!
//! The generator draws a vanishing line, incident translation direction(s)
//! and division-model λ, maps undistorted points through the conjugate
//! translation, and distorts everything. Because the construction is exact,
//! the instances double as the ground-truth oracle for the constraint
//! builders, the polynomial backend and the minimal solvers.

use rand::Rng;

use crate::constraints::PointCorrespondence;
use crate::geometry::{distort, DivisionModel, Gauge, Point2H, Vec3, VanishingLine};
use crate::poly::{Var, NVARS};

/// A noiseless synthetic problem instance in normalized coordinates.
#[derive(Debug, Clone)]
pub struct CtInstance {
    pub lambda: f64,
    pub line: VanishingLine,
    /// First direction, scaled so ‖u‖ is the absolute scale of the first
    /// correspondence (s̄1 = 1).
    pub direction_u: Vec3,
    pub direction_v: Option<Vec3>,
    /// Direction-0 correspondences first, then direction-1.
    pub corrs: Vec<PointCorrespondence>,
    pub rel_scales_u: Vec<f64>,
    pub rel_scales_v: Vec<f64>,
}

/// What to generate: correspondence counts and relative scales per direction.
#[derive(Debug, Clone)]
pub struct InstanceSpec {
    pub scales_u: Vec<f64>,
    pub scales_v: Vec<f64>,
    pub lambda: Option<f64>,
}

impl InstanceSpec {
    /// n same-scale correspondences in a single direction.
    pub fn one_direction(n: usize) -> Self {
        Self {
            scales_u: vec![1.0; n],
            scales_v: vec![],
            lambda: None,
        }
    }

    /// Three correspondences, the third with relative scale `s3`.
    pub fn h3(s3: f64) -> Self {
        Self {
            scales_u: vec![1.0, 1.0, s3],
            scales_v: vec![],
            lambda: None,
        }
    }

    /// Two correspondences per direction, the fourth with relative scale `s4`.
    pub fn two_direction(s4: f64) -> Self {
        Self {
            scales_u: vec![1.0, 1.0],
            scales_v: vec![1.0, s4],
            lambda: None,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }
}

fn translate(p: Point2H, line: &VanishingLine, dir: Vec3, s: f64) -> Point2H {
    let v = p.to_vec3() + s * dir * (line.as_vec3().dot(&p.to_vec3()));
    Point2H::from_vec3(v)
}

/// Draw one valid instance; resamples internally until the mapped points are
/// well inside the working disc and away from degeneracies.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, spec: &InstanceSpec) -> CtInstance {
    'retry: loop {
        let lambda = spec
            .lambda
            .unwrap_or_else(|| rng.gen_range(-6.0..=0.0_f64));
        let model = DivisionModel::new(lambda, (0.0, 0.0));
        let l1 = rng.gen_range(-1.5..1.5);
        let l2: f64 = rng.gen_range(-1.5..1.5);
        if l2.abs() < 0.15 {
            continue 'retry; // keep the l2 = 1 gauge usable for fallback tests
        }
        let line = VanishingLine::new_l3(l1, l2);

        let draw_direction = |rng: &mut R| -> Option<Vec3> {
            let ux = rng.gen_range(-1.0..1.0);
            let uy: f64 = rng.gen_range(-1.0..1.0);
            if (ux * ux + uy * uy).sqrt() < 0.2 {
                return None;
            }
            let u = Vec3::new(ux, uy, -(l1 * ux + l2 * uy));
            let scale = rng.gen_range(0.08..0.35);
            Some(u / u.norm() * scale)
        };
        let Some(u) = draw_direction(rng) else {
            continue 'retry;
        };
        let v = if spec.scales_v.is_empty() {
            None
        } else {
            match draw_direction(rng) {
                Some(v)
                    if v.normalize().cross(&u.normalize()).norm() > 0.25 =>
                {
                    Some(v)
                }
                _ => continue 'retry,
            }
        };

        let mut corrs = Vec::new();
        for (dir_id, (dir, scales)) in [(u, &spec.scales_u), (v.unwrap_or(u), &spec.scales_v)]
            .iter()
            .enumerate()
            .take(if v.is_some() { 2 } else { 1 })
        {
            for &s in scales.iter() {
                let y = Point2H::from_xy(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
                let yt = translate(y, &line, *dir, s);
                let Some((tx, ty)) = yt.dehomogenize() else {
                    continue 'retry;
                };
                if yt.w.abs() < 0.2 {
                    continue 'retry;
                }
                let disp = ((tx - y.x).powi(2) + (ty - y.y).powi(2)).sqrt();
                if !(0.01..=0.5).contains(&disp) || (tx * tx + ty * ty).sqrt() > 0.45 {
                    continue 'retry;
                }
                let (Ok(src), Ok(dst)) = (distort(y, &model), distort(yt, &model)) else {
                    continue 'retry;
                };
                corrs.push(PointCorrespondence::new(src, dst, dir_id as u8, s == 1.0));
            }
        }

        return CtInstance {
            lambda,
            line,
            direction_u: u,
            direction_v: v,
            corrs,
            rel_scales_u: spec.scales_u.clone(),
            rel_scales_v: spec.scales_v.clone(),
        };
    }
}

/// Ground-truth parameter vector over the full variable layout for the
/// requested gauge. Unused slots stay zero.
pub fn ground_truth_point(inst: &CtInstance, gauge: Gauge) -> [f64; NVARS] {
    let mut pt = [0.0; NVARS];
    match gauge {
        Gauge::L3Eq1 => {
            pt[Var::L1.index()] = inst.line.l1;
            pt[Var::L2.index()] = inst.line.l2;
        }
        Gauge::L2Eq1 => {
            pt[Var::L1.index()] = inst.line.l1 / inst.line.l2;
            pt[Var::L3.index()] = 1.0 / inst.line.l2;
        }
    }
    pt[Var::Lambda.index()] = inst.lambda;
    if inst.rel_scales_u.len() > 2 {
        pt[Var::S3.index()] = inst.rel_scales_u[2];
    }
    if inst.rel_scales_v.len() > 1 {
        pt[Var::S4.index()] = inst.rel_scales_v[1];
    }
    pt
}

/// Direction ground truth matching the gauge of a system built from this
/// instance: the l2 = 1 gauge rescales the line by 1/l2, so the paired
/// direction rescales by l2.
pub fn ground_truth_direction(inst: &CtInstance, which: usize, gauge: Gauge) -> Vec3 {
    let d = if which == 0 {
        inst.direction_u
    } else {
        inst.direction_v.expect("instance has no second direction")
    };
    match gauge {
        Gauge::L3Eq1 => d,
        Gauge::L2Eq1 => d * inst.line.l2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::undistort;
    use rand::prelude::*;

    #[test]
    fn instances_satisfy_the_distorted_model_exactly() {
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, &InstanceSpec::two_direction(0.7));
            let model = DivisionModel::new(inst.lambda, (0.0, 0.0));
            for (i, c) in inst.corrs.iter().enumerate() {
                let (dir, s) = if i < 2 {
                    (inst.direction_u, inst.rel_scales_u[i])
                } else {
                    (inst.direction_v.unwrap(), inst.rel_scales_v[i - 2])
                };
                let lhs = undistort(c.dst, &model).to_vec3();
                let rhs = translate(undistort(c.src, &model), &inst.line, dir, s).to_vec3();
                let defect = lhs.cross(&rhs).norm() / (lhs.norm() * rhs.norm());
                assert!(defect < 1e-12, "model defect {defect}");
            }
        }
    }

    #[test]
    fn direction_is_incident_with_line() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(3));
            assert!(inst.line.as_vec3().dot(&inst.direction_u).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_override_respected() {
        let mut rng = StdRng::seed_from_u64(3);
        let inst = random_instance(&mut rng, &InstanceSpec::one_direction(3).with_lambda(-4.0));
        assert_eq!(inst.lambda, -4.0);
    }
}
