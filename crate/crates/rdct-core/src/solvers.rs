//! The minimal solvers: from a handful of point correspondences to full
//! model hypotheses (vanishing line, division-model λ, translation
//! direction(s) and relative scales).
//!
//! The four distortion-aware solvers build their hidden-variable system,
//! hand it to the polynomial backend, and back-substitute each root: the
//! direction is the null vector of the evaluated matrix block normalized to
//! unit last component. The l3 = 1 gauge is tried first; rank deficiency or
//! a conditioning diagnostic past the threshold activates the l2 = 1
//! rebuild. The distortion-free 2-point baseline recovers the direction as
//! the meet of the two correspondence joins and the line linearly.

use thiserror::Error;

use crate::constraints::{
    build_m_h25, build_m_h3, build_m_h35, build_m_h4, ConstraintError, HiddenVariableSystem,
    PointCorrespondence,
};
use crate::geometry::{
    undistort, ConjugateTranslation, DivisionModel, Gauge, Point2H, Vec3, VanishingLine,
};
use crate::poly::{Var, NVARS};
use crate::polysys::{self, PolySystem, SolveError};

/// Hypotheses with λ outside this box are discarded as implausible.
pub const LAMBDA_BOX: (f64, f64) = (-20.0, 2.0);

/// Conditioning diagnostic beyond which the l2 = 1 gauge is tried.
pub const GAUGE_FALLBACK_CONDITION: f64 = 1e12;

/// Largest admissible normalized constraint residual of a hypothesis on its
/// minimal sample.
pub const HYPOTHESIS_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    H2Lu,
    H25,
    H3,
    H35,
    H4,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::H2Lu => "h2lu",
            SolverKind::H25 => "h25",
            SolverKind::H3 => "h3",
            SolverKind::H35 => "h35",
            SolverKind::H4 => "h4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "h2lu" => Some(SolverKind::H2Lu),
            "h25" => Some(SolverKind::H25),
            "h3" => Some(SolverKind::H3),
            "h35" => Some(SolverKind::H35),
            "h4" => Some(SolverKind::H4),
            _ => None,
        }
    }

    /// Point correspondences consumed per solver call.
    pub fn sample_size(self) -> usize {
        match self {
            SolverKind::H2Lu => 2,
            SolverKind::H25 | SolverKind::H3 => 3,
            SolverKind::H35 | SolverKind::H4 => 4,
        }
    }

    pub fn is_two_direction(self) -> bool {
        matches!(self, SolverKind::H35 | SolverKind::H4)
    }

    /// Cap on returned real solutions.
    pub fn max_solutions(self) -> usize {
        match self {
            SolverKind::H2Lu => 1,
            SolverKind::H25 => 4,
            SolverKind::H3 => 2,
            SolverKind::H35 => 6,
            SolverKind::H4 => 4,
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("degenerate minimal sample: {0}")]
    Degenerate(&'static str),
    #[error("polynomial backend failed: {0}")]
    SolverFailed(#[from] SolveError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("wrong sample size: expected {expected}, got {got}")]
    WrongSampleSize { expected: usize, got: usize },
}

/// One translation direction with its per-correspondence relative scales
/// (first scale is 1 by the ‖u‖ = s1 convention).
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionEstimate {
    pub direction: Vec3,
    pub rel_scales: Vec<f64>,
}

/// A full model hypothesis from one minimal sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHypothesis {
    pub line: VanishingLine,
    pub lambda: f64,
    pub directions: Vec<DirectionEstimate>,
    pub source_solver: SolverKind,
    /// Largest normalized constraint residual on the minimal sample.
    pub residual: f64,
}

impl ModelHypothesis {
    pub fn division_model(&self, center: (f64, f64)) -> DivisionModel {
        DivisionModel::new(self.lambda, center)
    }

    pub fn conjugate_translation(&self, dir: usize) -> ConjugateTranslation {
        let d = &self.directions[dir];
        ConjugateTranslation::new(self.line, d.direction, d.rel_scales.clone())
    }

    /// Incidence defect max |lᵀu|/‖u‖ over the directions.
    pub fn incidence_defect(&self) -> f64 {
        let l = self.line.as_vec3();
        self.directions
            .iter()
            .map(|d| (l.dot(&d.direction) / d.direction.norm()).abs())
            .fold(0.0, f64::max)
    }
}

/// Normalized cross-product residual of the distorted constraint for one
/// correspondence under a hypothesis.
fn corr_residual(
    line: &VanishingLine,
    lambda: f64,
    direction: Vec3,
    rel_scale: f64,
    c: &PointCorrespondence,
) -> f64 {
    let m = DivisionModel::new(lambda, (0.0, 0.0));
    let a = undistort(c.src, &m).to_vec3();
    let b = undistort(c.dst, &m).to_vec3();
    let pred = a + rel_scale * direction * line.as_vec3().dot(&a);
    let denom = b.norm() * pred.norm();
    if denom < 1e-300 {
        return f64::INFINITY;
    }
    b.cross(&pred).norm() / denom
}

/// Max constraint residual of a hypothesis over its minimal sample.
pub fn sample_residual(h: &ModelHypothesis, corrs: &[PointCorrespondence]) -> f64 {
    let mut per_dir_count = [0usize; 2];
    let mut worst = 0.0f64;
    for c in corrs {
        let d = c.direction_id as usize;
        let idx = per_dir_count[d];
        per_dir_count[d] += 1;
        let Some(dir) = h.directions.get(d) else {
            return f64::INFINITY;
        };
        let s = dir.rel_scales.get(idx).copied().unwrap_or(1.0);
        worst = worst.max(corr_residual(&h.line, h.lambda, dir.direction, s, c));
    }
    worst
}

fn line_from_point(gauge: Gauge, full: &[f64; NVARS]) -> VanishingLine {
    match gauge {
        Gauge::L3Eq1 => VanishingLine::new_l3(full[Var::L1.index()], full[Var::L2.index()]),
        Gauge::L2Eq1 => VanishingLine::new_l2(full[Var::L1.index()], full[Var::L3.index()]),
    }
}

/// Direction from the null vector of an evaluated matrix block, normalized
/// to unit last component.
fn null_direction(hv: &HiddenVariableSystem, block: usize, full: &[f64; NVARS]) -> Option<Vec3> {
    let m = hv.eval_matrix(block, full);
    let svd = m.svd(false, true);
    let vt = svd.v_t?;
    let null = vt.row(3);
    if null[3].abs() < 1e-12 {
        return None;
    }
    Some(Vec3::new(null[0], null[1], null[2]) / null[3])
}

/// Shared driver: build in a gauge, solve, back-substitute directions,
/// filter and rank hypotheses.
fn hv_hypotheses(
    kind: SolverKind,
    corrs: &[PointCorrespondence],
    gauge: Gauge,
) -> Result<Vec<ModelHypothesis>, SolverError> {
    let hv = match kind {
        SolverKind::H25 => build_m_h25(corrs.try_into().expect("3 correspondences"), gauge)?,
        SolverKind::H3 => build_m_h3(corrs.try_into().expect("3 correspondences"), gauge)?,
        SolverKind::H35 => build_m_h35(corrs.try_into().expect("4 correspondences"), gauge)?,
        SolverKind::H4 => build_m_h4(corrs.try_into().expect("4 correspondences"), gauge)?,
        SolverKind::H2Lu => unreachable!("h2lu is closed-form"),
    };
    let sys = PolySystem::from_hidden_variable(&hv);
    let set = polysys::solve(&sys, HYPOTHESIS_RESIDUAL_TOL)?;
    if set.condition > GAUGE_FALLBACK_CONDITION {
        return Err(SolverError::SolverFailed(SolveError::RankDeficient {
            condition: set.condition,
        }));
    }

    let mut out = Vec::new();
    for point in &set.points {
        let mut full = [0.0; NVARS];
        for (v, &x) in sys.unknowns.iter().zip(point) {
            full[v.index()] = x;
        }
        let lambda = full[Var::Lambda.index()];
        if !(LAMBDA_BOX.0..=LAMBDA_BOX.1).contains(&lambda) {
            continue;
        }
        let line = line_from_point(gauge, &full);

        let mut directions = Vec::new();
        let mut ok = true;
        for b in 0..hv.matrices.len() {
            match null_direction(&hv, b, &full) {
                Some(dir) => {
                    let rel_scales = match (kind, b) {
                        (SolverKind::H25, _) => vec![1.0, 1.0, 1.0],
                        (SolverKind::H3, _) => vec![1.0, 1.0, full[Var::S3.index()]],
                        (SolverKind::H35, _) => vec![1.0, 1.0],
                        (SolverKind::H4, 0) => vec![1.0, 1.0],
                        (SolverKind::H4, _) => vec![1.0, full[Var::S4.index()]],
                        (SolverKind::H2Lu, _) => unreachable!(),
                    };
                    directions.push(DirectionEstimate {
                        direction: dir,
                        rel_scales,
                    });
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }

        let mut h = ModelHypothesis {
            line,
            lambda,
            directions,
            source_solver: kind,
            residual: 0.0,
        };
        h.residual = sample_residual(&h, corrs);
        if h.residual < HYPOTHESIS_RESIDUAL_TOL && h.incidence_defect() < 1e-8 {
            out.push(h);
        }
    }
    out.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    out.truncate(kind.max_solutions());
    Ok(out)
}

/// Run a hidden-variable solver with the gauge fallback policy.
fn hv_solve(
    kind: SolverKind,
    corrs: &[PointCorrespondence],
) -> Result<Vec<ModelHypothesis>, SolverError> {
    let expected = kind.sample_size();
    if corrs.len() != expected {
        return Err(SolverError::WrongSampleSize {
            expected,
            got: corrs.len(),
        });
    }
    match hv_hypotheses(kind, corrs, Gauge::L3Eq1) {
        Ok(hyps) => Ok(hyps),
        Err(SolverError::SolverFailed(SolveError::RankDeficient { .. })) => {
            hv_hypotheses(kind, corrs, Gauge::L2Eq1)
        }
        Err(e) => Err(e),
    }
}

/// 2.5-point one-direction solver (≤ 4 hypotheses).
pub fn solve_h25(corrs: &[PointCorrespondence; 3]) -> Result<Vec<ModelHypothesis>, SolverError> {
    hv_solve(SolverKind::H25, corrs)
}

/// 3-point one-direction solver with a free third scale (≤ 2 hypotheses).
pub fn solve_h3(corrs: &[PointCorrespondence; 3]) -> Result<Vec<ModelHypothesis>, SolverError> {
    hv_solve(SolverKind::H3, corrs)
}

/// 3.5-point two-direction solver (≤ 6 hypotheses).
pub fn solve_h35(corrs: &[PointCorrespondence; 4]) -> Result<Vec<ModelHypothesis>, SolverError> {
    check_direction_pattern(corrs)?;
    reject_coincident_directions(hv_solve(SolverKind::H35, corrs)?)
}

/// 4-point two-direction solver with a free fourth scale (≤ 4 hypotheses).
pub fn solve_h4(corrs: &[PointCorrespondence; 4]) -> Result<Vec<ModelHypothesis>, SolverError> {
    check_direction_pattern(corrs)?;
    reject_coincident_directions(hv_solve(SolverKind::H4, corrs)?)
}

fn check_direction_pattern(corrs: &[PointCorrespondence; 4]) -> Result<(), SolverError> {
    if corrs[0].direction_id != 0
        || corrs[1].direction_id != 0
        || corrs[2].direction_id != 1
        || corrs[3].direction_id != 1
    {
        return Err(SolverError::Degenerate(
            "two-direction solvers need correspondences grouped 0,0,1,1",
        ));
    }
    Ok(())
}

/// Coinciding recovered directions collapse the two-direction problem into a
/// single-direction one; such samples are flagged rather than returned.
fn reject_coincident_directions(
    hyps: Vec<ModelHypothesis>,
) -> Result<Vec<ModelHypothesis>, SolverError> {
    let parallel = |h: &ModelHypothesis| -> bool {
        let u = h.directions[0].direction;
        let v = h.directions[1].direction;
        u.cross(&v).norm() < 1e-6 * u.norm() * v.norm()
    };
    let had_any = !hyps.is_empty();
    let kept: Vec<ModelHypothesis> = hyps.into_iter().filter(|h| !parallel(h)).collect();
    if kept.is_empty() && had_any {
        return Err(SolverError::Degenerate(
            "translation directions coincide; use a one-direction solver",
        ));
    }
    Ok(kept)
}

/// Distortion-free 2-point baseline: the direction is the meet of the two
/// correspondence joins, the line follows linearly; λ is fixed to 0.
/// Returns zero or one hypothesis.
pub fn solve_h2lu(corrs: &[PointCorrespondence; 2]) -> Result<Vec<ModelHypothesis>, SolverError> {
    let x1 = corrs[0].src.to_vec3();
    let x1p = corrs[0].dst.to_vec3();
    let x2 = corrs[1].src.to_vec3();
    let x2p = corrs[1].dst.to_vec3();
    let j1 = x1.cross(&x1p);
    let j2 = x2.cross(&x2p);
    if j1.norm() < 1e-14 || j2.norm() < 1e-14 {
        return Err(SolverError::Degenerate("coincident correspondence points"));
    }
    let meet = j1.cross(&j2);
    if meet.norm() / (j1.norm() * j2.norm()) < 1e-10 {
        return Err(SolverError::Degenerate("correspondence joins are parallel"));
    }
    let u_unit = meet / meet.norm();

    // per-correspondence magnitude t_i = σ·lᵀx_i from the cross equation
    // (x'×u)·t = x×x'
    let t = |x: &Vec3, xp: &Vec3| -> Option<f64> {
        let v = xp.cross(&u_unit);
        let w = x.cross(xp);
        let vv = v.dot(&v);
        if vv < 1e-20 {
            return None;
        }
        Some(v.dot(&w) / vv)
    };
    let (Some(t1), Some(t2)) = (t(&x1, &x1p), t(&x2, &x2p)) else {
        return Err(SolverError::Degenerate("direction coincides with a point"));
    };

    // (p, q, σ) = σ(l1, l2, 1): two magnitude rows plus incidence
    let a = nalgebra::Matrix3::new(
        x1.x, x1.y, x1.z, x2.x, x2.y, x2.z, u_unit.x, u_unit.y, u_unit.z,
    );
    let rhs = Vec3::new(t1, t2, 0.0);
    let Some(sol) = a.lu().solve(&rhs) else {
        return Ok(vec![]);
    };
    let sigma = sol.z;
    if sigma.abs() < 1e-14 || !sol.iter().all(|x| x.is_finite()) {
        return Ok(vec![]);
    }
    let line = VanishingLine::new_l3(sol.x / sigma, sol.y / sigma);
    let direction = sigma * u_unit;

    let mut h = ModelHypothesis {
        line,
        lambda: 0.0,
        directions: vec![DirectionEstimate {
            direction,
            rel_scales: vec![1.0, 1.0],
        }],
        source_solver: SolverKind::H2Lu,
        residual: 0.0,
    };
    h.residual = sample_residual(&h, corrs);
    if h.residual > HYPOTHESIS_RESIDUAL_TOL {
        return Ok(vec![]);
    }
    Ok(vec![h])
}

/// Dispatch by solver kind; the slice length must match the sample size.
pub fn solve_with(
    kind: SolverKind,
    corrs: &[PointCorrespondence],
) -> Result<Vec<ModelHypothesis>, SolverError> {
    let expected = kind.sample_size();
    if corrs.len() != expected {
        return Err(SolverError::WrongSampleSize {
            expected,
            got: corrs.len(),
        });
    }
    match kind {
        SolverKind::H2Lu => solve_h2lu(corrs.try_into().unwrap()),
        SolverKind::H25 => solve_h25(corrs.try_into().unwrap()),
        SolverKind::H3 => solve_h3(corrs.try_into().unwrap()),
        SolverKind::H35 => solve_h35(corrs.try_into().unwrap()),
        SolverKind::H4 => solve_h4(corrs.try_into().unwrap()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_instance, CtInstance, InstanceSpec};
    use rand::prelude::*;

    fn line_distance(a: &VanishingLine, b: &VanishingLine) -> f64 {
        let (av, bv) = (a.as_vec3(), b.as_vec3());
        av.cross(&bv).norm() / (av.norm() * bv.norm())
    }

    fn best_match<'h>(
        hyps: &'h [ModelHypothesis],
        inst: &CtInstance,
    ) -> Option<&'h ModelHypothesis> {
        hyps.iter().min_by(|a, b| {
            let da = (a.lambda - inst.lambda).abs() + line_distance(&a.line, &inst.line);
            let db = (b.lambda - inst.lambda).abs() + line_distance(&b.line, &inst.line);
            da.total_cmp(&db)
        })
    }

    #[test]
    fn h2lu_recovers_pinhole_ground_truth() {
        let mut rng = StdRng::seed_from_u64(200);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(2).with_lambda(0.0));
            let hyps = solve_h2lu(&[inst.corrs[0], inst.corrs[1]]).unwrap();
            assert_eq!(hyps.len(), 1);
            let h = &hyps[0];
            assert!(line_distance(&h.line, &inst.line) < 1e-9);
            assert!((h.directions[0].direction - inst.direction_u).norm() < 1e-9);
        }
    }

    #[test]
    fn h2lu_identical_correspondences_degenerate() {
        let c = PointCorrespondence::new(
            Point2H::from_xy(0.1, 0.2),
            Point2H::from_xy(0.2, 0.3),
            0,
            true,
        );
        let err = solve_h2lu(&[c, c]).unwrap_err();
        assert!(matches!(err, SolverError::Degenerate(_)));
    }

    #[test]
    fn h2lu_returns_biased_fit_on_distorted_data() {
        let mut rng = StdRng::seed_from_u64(201);
        let mut produced = 0;
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(2).with_lambda(-4.0));
            if let Ok(hyps) = solve_h2lu(&[inst.corrs[0], inst.corrs[1]]) {
                if let Some(h) = hyps.first() {
                    produced += 1;
                    assert_eq!(h.lambda, 0.0);
                }
            }
        }
        assert!(produced > 30, "baseline should still fit most samples");
    }

    #[test]
    fn h25_recovers_lambda_minus_four() {
        let mut rng = StdRng::seed_from_u64(202);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(3).with_lambda(-4.0));
            let hyps = solve_h25(&[inst.corrs[0], inst.corrs[1], inst.corrs[2]]).unwrap();
            assert!(hyps.len() <= 4);
            let h = best_match(&hyps, &inst).expect("no hypothesis");
            assert!(
                (h.lambda - inst.lambda).abs() / inst.lambda.abs() < 1e-6,
                "lambda error {}",
                (h.lambda - inst.lambda).abs()
            );
            assert!(line_distance(&h.line, &inst.line) < 1e-7);
            assert!((h.directions[0].direction - inst.direction_u).norm() < 1e-6);
        }
    }

    #[test]
    fn h25_on_pinhole_data_matches_h2lu() {
        let mut rng = StdRng::seed_from_u64(203);
        for _ in 0..30 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(3).with_lambda(0.0));
            let h25 = solve_h25(&[inst.corrs[0], inst.corrs[1], inst.corrs[2]]).unwrap();
            let h2 = solve_h2lu(&[inst.corrs[0], inst.corrs[1]]).unwrap();
            let near_pinhole = h25.iter().find(|h| h.lambda.abs() < 1e-6).expect(
                "h25 should return a near-pinhole hypothesis on pinhole data",
            );
            let base = &h2[0];
            assert!(line_distance(&near_pinhole.line, &base.line) < 1e-6);
            assert!(
                (near_pinhole.directions[0].direction - base.directions[0].direction).norm()
                    < 1e-6 * (1.0 + base.directions[0].direction.norm())
            );
        }
    }

    #[test]
    fn h3_recovers_free_scale() {
        let mut rng = StdRng::seed_from_u64(204);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::h3(1.7));
            let hyps = solve_h3(&[inst.corrs[0], inst.corrs[1], inst.corrs[2]]).unwrap();
            assert!(hyps.len() <= 2);
            let h = best_match(&hyps, &inst).expect("no hypothesis");
            assert!((h.lambda - inst.lambda).abs() < 1e-6 * (1.0 + inst.lambda.abs()));
            let s3 = h.directions[0].rel_scales[2];
            assert!((s3 - 1.7).abs() < 1e-6, "s3 = {s3}");
        }
    }

    #[test]
    fn h3_on_equal_scale_data_agrees_with_h25() {
        let mut rng = StdRng::seed_from_u64(205);
        for _ in 0..30 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(3));
            let c = [inst.corrs[0], inst.corrs[1], inst.corrs[2]];
            let a = solve_h3(&c).unwrap();
            let b = solve_h25(&c).unwrap();
            let (Some(ha), Some(hb)) = (best_match(&a, &inst), best_match(&b, &inst)) else {
                panic!("missing hypotheses");
            };
            assert!((ha.lambda - hb.lambda).abs() < 1e-6 * (1.0 + hb.lambda.abs()));
            assert!(line_distance(&ha.line, &hb.line) < 1e-6);
            assert!((ha.directions[0].rel_scales[2] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn h35_recovers_two_directions() {
        let mut rng = StdRng::seed_from_u64(206);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::two_direction(1.0));
            let c = [inst.corrs[0], inst.corrs[1], inst.corrs[2], inst.corrs[3]];
            let hyps = solve_h35(&c).unwrap();
            assert!(hyps.len() <= 6);
            let h = best_match(&hyps, &inst).expect("no hypothesis");
            assert!((h.lambda - inst.lambda).abs() < 1e-6 * (1.0 + inst.lambda.abs()));
            assert!((h.directions[0].direction - inst.direction_u).norm() < 1e-5);
            assert!((h.directions[1].direction - inst.direction_v.unwrap()).norm() < 1e-5);
        }
    }

    #[test]
    fn h4_recovers_fourth_scale() {
        let mut rng = StdRng::seed_from_u64(207);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::two_direction(0.6));
            let c = [inst.corrs[0], inst.corrs[1], inst.corrs[2], inst.corrs[3]];
            let hyps = solve_h4(&c).unwrap();
            assert!(hyps.len() <= 4);
            let h = best_match(&hyps, &inst).expect("no hypothesis");
            assert!((h.lambda - inst.lambda).abs() < 1e-6 * (1.0 + inst.lambda.abs()));
            let s4 = h.directions[1].rel_scales[1];
            assert!((s4 - 0.6).abs() < 1e-6, "s4 = {s4}");
        }
    }

    #[test]
    fn h4_on_unit_scale_data_agrees_with_h35() {
        let mut rng = StdRng::seed_from_u64(208);
        for _ in 0..30 {
            let inst = random_instance(&mut rng, &InstanceSpec::two_direction(1.0));
            let c = [inst.corrs[0], inst.corrs[1], inst.corrs[2], inst.corrs[3]];
            let a = solve_h4(&c).unwrap();
            let b = solve_h35(&c).unwrap();
            let (Some(ha), Some(hb)) = (best_match(&a, &inst), best_match(&b, &inst)) else {
                panic!("missing hypotheses");
            };
            assert!((ha.lambda - hb.lambda).abs() < 1e-6 * (1.0 + hb.lambda.abs()));
            assert!(line_distance(&ha.line, &hb.line) < 1e-6);
            assert!((ha.directions[1].rel_scales[1] - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn coincident_directions_are_degenerate() {
        let mut rng = StdRng::seed_from_u64(209);
        let inst = random_instance(&mut rng, &InstanceSpec::one_direction(4));
        let mut c = [inst.corrs[0], inst.corrs[1], inst.corrs[2], inst.corrs[3]];
        c[2].direction_id = 1;
        c[3].direction_id = 1;
        let err = solve_h35(&c).unwrap_err();
        assert!(matches!(err, SolverError::Degenerate(_)));
    }

    #[test]
    fn returned_hypotheses_satisfy_invariants() {
        let mut rng = StdRng::seed_from_u64(210);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(3));
            let c = [inst.corrs[0], inst.corrs[1], inst.corrs[2]];
            for h in solve_h25(&c).unwrap() {
                assert!(h.residual < HYPOTHESIS_RESIDUAL_TOL);
                assert!(h.incidence_defect() < 1e-8);
                assert!((LAMBDA_BOX.0..=LAMBDA_BOX.1).contains(&h.lambda));
                for d in &h.directions {
                    assert_eq!(d.rel_scales[0], 1.0);
                }
            }
        }
    }

    #[test]
    fn gauge_variants_agree_on_well_conditioned_instances() {
        let mut rng = StdRng::seed_from_u64(211);
        let mut compared = 0;
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(3));
            let c = [inst.corrs[0], inst.corrs[1], inst.corrs[2]];
            let a = hv_hypotheses(SolverKind::H25, &c, Gauge::L3Eq1);
            let b = hv_hypotheses(SolverKind::H25, &c, Gauge::L2Eq1);
            let (Ok(a), Ok(b)) = (a, b) else { continue };
            let (Some(ha), Some(hb)) = (best_match(&a, &inst), best_match(&b, &inst)) else {
                continue;
            };
            compared += 1;
            assert!(
                line_distance(&ha.line, &hb.line) < 1e-6,
                "gauge disagreement {}",
                line_distance(&ha.line, &hb.line)
            );
            assert!((ha.lambda - hb.lambda).abs() < 1e-6 * (1.0 + ha.lambda.abs()));
        }
        assert!(compared > 20, "only {compared} instances compared");
    }

    #[test]
    fn diag_h35() {
        let mut rng = StdRng::seed_from_u64(206);
        for i in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::two_direction(1.0));
            if i != 47 && i != 49 { continue; }
            let c = [inst.corrs[0], inst.corrs[1], inst.corrs[2], inst.corrs[3]];
            let hv = crate::constraints::build_m_h35(&c, Gauge::L3Eq1).unwrap();
            let sys = crate::polysys::PolySystem::from_hidden_variable(&hv);
            let lam = inst.lambda;
            eprintln!("inst {i}: lambda* = {lam}, line = ({}, {})", inst.line.l1, inst.line.l2);
            crate::polysys::diag_structured(&sys, lam);
        }
    }
}
