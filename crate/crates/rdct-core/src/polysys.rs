//! Backend for the small overdetermined polynomial systems of the minimal
//! solvers: all isolated real solutions, with the saturated false-solution
//! family removed.
//!
//! Two routes share one contract:
//!
//! - systems carrying their hidden-variable block structure are reduced to a
//!   single univariate polynomial in λ by eliminating the line unknowns
//!   through the blocks (per-correspondence ratio combinations pin the
//!   direction up to scale, a 3×3 Cramer system recovers the line, and the
//!   remaining constraint closes the loop); the companion matrix of that
//!   univariate delivers every candidate root at once;
//! - plain systems go through a dense Macaulay-style expansion with
//!   rank-revealing column-pivoted reduction and a multiplication (action)
//!   matrix whose eigen-decomposition reads off the solutions.
//!
//! Either way, candidates are refined by a few Gauss-Newton steps on the
//! normalized equations, filtered by residual and by the saturation floor,
//! deduplicated, capped and returned in lexicographic order. The
//! [`oracle_solve`] cross-check discovers roots by multi-start damped Newton
//! instead and shares only the final filtering.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraints::{CrossRow, HiddenVariableSystem, HvBlock, HvRow, ScaleSym};
use crate::poly::{
    uni_det3, unival_cross, unival_dot, unival_dot_vec, unival_eval, Mono, MultiPoly, UniPoly,
    UniVec3, Var, NVARS,
};

/// Solutions with normalized saturation value below this floor lie on the
/// removed false-solution family and are rejected.
pub const SATURATION_FLOOR: f64 = 1e-8;

/// Imaginary parts below this (relative) threshold are projected to real.
const IMAG_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    /// The system is not zero-dimensional at working precision (the
    /// elimination collapsed or the quotient basis could not be formed).
    #[error("rank-deficient system at working precision (condition {condition:.3e})")]
    RankDeficient { condition: f64 },
    #[error("unsupported system structure: {0}")]
    Unsupported(&'static str),
}

/// A polynomial system with saturation constraints and a solution-count cap.
#[derive(Debug, Clone)]
pub struct PolySystem {
    pub equations: Vec<MultiPoly>,
    pub saturations: Vec<MultiPoly>,
    pub unknowns: Vec<Var>,
    pub max_solutions: usize,
    /// Hidden-variable blocks when the system came from the constraint
    /// builder; empty for plain systems.
    pub blocks: Vec<HvBlock>,
}

impl PolySystem {
    /// Plain system without block structure; equations are normalized here.
    pub fn new(
        equations: Vec<MultiPoly>,
        saturations: Vec<MultiPoly>,
        unknowns: Vec<Var>,
        max_solutions: usize,
    ) -> Self {
        Self {
            equations: equations.iter().map(MultiPoly::normalized).collect(),
            saturations: saturations.iter().map(MultiPoly::normalized).collect(),
            unknowns,
            max_solutions,
        blocks: vec![],
        }
    }

    pub fn from_hidden_variable(sys: &HiddenVariableSystem) -> Self {
        Self {
            equations: sys.equations.clone(),
            saturations: sys.saturations.clone(),
            unknowns: sys.unknowns.clone(),
            max_solutions: sys.expected_solution_count,
            blocks: sys.blocks.clone(),
        }
    }

    fn expand_point(&self, p: &[f64]) -> [f64; NVARS] {
        let mut full = [0.0; NVARS];
        for (v, &x) in self.unknowns.iter().zip(p) {
            full[v.index()] = x;
        }
        full
    }

    /// Largest normalized-equation residual at a point.
    pub fn residual(&self, p: &[f64]) -> f64 {
        let full = self.expand_point(p);
        self.equations
            .iter()
            .map(|e| e.eval(&full).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest normalized saturation magnitude at a point.
    pub fn saturation_margin(&self, p: &[f64]) -> f64 {
        let full = self.expand_point(p);
        self.saturations
            .iter()
            .map(|s| s.eval(&full).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Real isolated solutions in lexicographic order.
#[derive(Debug, Clone, Default)]
pub struct SolutionSet {
    /// One entry per solution, coordinates in `unknowns` order.
    pub points: Vec<Vec<f64>>,
    /// Largest normalized-equation residual per solution.
    pub residuals: Vec<f64>,
    /// Conditioning diagnostic of the back-substitution (σ_max/σ_min).
    pub condition: f64,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// All real isolated solutions of the system off the saturated variety.
pub fn solve(sys: &PolySystem, tol: f64) -> Result<SolutionSet, SolveError> {
    if sys.blocks.is_empty() {
        solve_generic(sys, tol)
    } else {
        solve_structured(sys, tol)
    }
}

// ---------------------------------------------------------------------------
// structured elimination through the hidden-variable blocks
// ---------------------------------------------------------------------------

struct Group<'a> {
    scale: ScaleSym,
    rows: Vec<&'a HvRow>,
}

fn block_groups(b: &HvBlock) -> Vec<Group<'_>> {
    let mut out: Vec<(usize, Group)> = Vec::new();
    for r in &b.rows {
        if let Some((_, g)) = out.iter_mut().find(|(c, _)| *c == r.corr) {
            g.rows.push(r);
        } else {
            out.push((
                r.corr,
                Group {
                    scale: r.scale,
                    rows: vec![r],
                },
            ));
        }
    }
    out.into_iter().map(|(_, g)| g).collect()
}

/// Rescale a polynomial 3-vector so its largest coefficient is one; all the
/// elimination vectors are only defined up to scale.
fn normalize_vec(v: UniVec3) -> UniVec3 {
    let m = v
        .iter()
        .map(UniPoly::max_abs_coeff)
        .fold(0.0f64, f64::max);
    if m > 0.0 {
        [v[0].scale(1.0 / m), v[1].scale(1.0 / m), v[2].scale(1.0 / m)]
    } else {
        v
    }
}

/// Ratio combination of a two-row group: the direction is orthogonal to
/// h = d_B·c_A − d_A·c_B, with the shared scale factor cancelled.
fn ratio_vector(g: &Group) -> UniVec3 {
    let (a, b) = (g.rows[0], g.rows[1]);
    normalize_vec([
        b.d.mul(&a.cvec[0]).sub(&a.d.mul(&b.cvec[0])),
        b.d.mul(&a.cvec[1]).sub(&a.d.mul(&b.cvec[1])),
        b.d.mul(&a.cvec[2]).sub(&a.d.mul(&b.cvec[2])),
    ])
}

/// The row of a group used in the line-recovery system; prefers the Y row,
/// whose coefficients carry the well-scaled w' factor.
fn scale_row<'a>(g: &Group<'a>) -> &'a HvRow {
    g.rows
        .iter()
        .find(|r| r.kind == CrossRow::Y)
        .copied()
        .unwrap_or(g.rows[0])
}

/// Cramer determinants of the 3×3 system in (γ1, γ2, β) = β·(la, lb, 1)
/// built from the scale rows of the two unit groups and the incidence row.
struct LineCramer {
    d: UniPoly,
    d1: UniPoly,
    d2: UniPoly,
    d3: UniPoly,
}

fn line_cramer(b: &HvBlock, g0: &Group, g1: &Group, n: &UniVec3) -> LineCramer {
    let mk_row = |r: &HvRow| -> ([UniPoly; 3], UniPoly) {
        let e = unival_dot(&r.cvec, n);
        ([r.a.mul(&e), r.b.mul(&e), r.c.mul(&e)], r.d.scale(-1.0))
    };
    let (r0, rhs0) = mk_row(scale_row(g0));
    let (r1, rhs1) = mk_row(scale_row(g1));
    let r2 = [
        unival_dot_vec(&b.orth_a, n),
        unival_dot_vec(&b.orth_b, n),
        unival_dot_vec(&b.orth_c, n),
    ];
    let rhs2 = UniPoly::zero();
    let det = |c0: &[UniPoly; 3], c1: &[UniPoly; 3], c2: &[UniPoly; 3]| {
        uni_det3(&[c0.clone(), c1.clone(), c2.clone()])
    };
    let col = |i: usize| -> [UniPoly; 3] { [r0[i].clone(), r1[i].clone(), r2[i].clone()] };
    let rhs = [rhs0, rhs1, rhs2];
    // assemble by columns: det of [colA colB colC] transposed row-major
    let m = |a: &[UniPoly; 3], b: &[UniPoly; 3], c: &[UniPoly; 3]| -> [[UniPoly; 3]; 3] {
        [
            [a[0].clone(), b[0].clone(), c[0].clone()],
            [a[1].clone(), b[1].clone(), c[1].clone()],
            [a[2].clone(), b[2].clone(), c[2].clone()],
        ]
    };
    let (c0, c1, c2) = (col(0), col(1), col(2));
    let full = m(&c0, &c1, &c2);
    let d = det(&full[0], &full[1], &full[2]);
    let m1 = m(&rhs, &c1, &c2);
    let m2 = m(&c0, &rhs, &c2);
    let m3 = m(&c0, &c1, &rhs);
    let d1 = det(&m1[0], &m1[1], &m1[2]);
    let d2 = det(&m2[0], &m2[1], &m2[2]);
    let d3 = det(&m3[0], &m3[1], &m3[2]);
    // common rescaling keeps the Cramer ratios intact while restoring O(1)
    // coefficients
    let scale = [&d, &d1, &d2, &d3]
        .iter()
        .map(|p| p.max_abs_coeff())
        .fold(0.0f64, f64::max);
    let s = if scale > 0.0 { 1.0 / scale } else { 1.0 };
    LineCramer {
        d: d.scale(s),
        d1: d1.scale(s),
        d2: d2.scale(s),
        d3: d3.scale(s),
    }
}

/// K_r = a_r·D1 + b_r·D2 + c_r·D3, the row's line factor cleared of the
/// Cramer denominator.
fn cleared_line_factor(r: &HvRow, cr: &LineCramer) -> UniPoly {
    r.a.mul(&cr.d1).add(&r.b.mul(&cr.d2)).add(&r.c.mul(&cr.d3))
}

/// Root λ̂ with its recovered parameters and diagnostics.
struct Candidate {
    lambda: f64,
    la: f64,
    lb: f64,
    scale_value: Option<(Var, f64)>,
    condition: f64,
}

fn solve_structured(sys: &PolySystem, tol: f64) -> Result<SolutionSet, SolveError> {
    let b0 = &sys.blocks[0];
    let groups0 = block_groups(b0);
    if groups0.len() < 2 || groups0[0].rows.len() != 2 || groups0[1].rows.len() != 2 {
        return Err(SolveError::Unsupported(
            "first block must start with two paired correspondences",
        ));
    }
    let h0 = ratio_vector(&groups0[0]);
    let h1 = ratio_vector(&groups0[1]);
    let n = normalize_vec(unival_cross(&h0, &h1));
    if n.iter().all(|p| p.is_zero(1e-12)) {
        return Err(SolveError::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let cr = line_cramer(b0, &groups0[0], &groups0[1], &n);
    if cr.d.max_abs_coeff() < 1e-12 {
        return Err(SolveError::RankDeficient {
            condition: f64::INFINITY,
        });
    }

    // the closing univariate in λ
    let rho = if sys.blocks.len() == 1 {
        let g2 = groups0
            .get(2)
            .ok_or(SolveError::Unsupported("single-block system needs a third correspondence"))?;
        if g2.rows.len() == 2 {
            // third correspondence ratio must also annihilate the direction
            unival_dot(&ratio_vector(g2), &n)
        } else {
            // single remaining half-equation closes through the line factor
            let r = g2.rows[0];
            let k = cleared_line_factor(r, &cr);
            let e = unival_dot(&r.cvec, &n);
            k.mul(&e).add(&r.d.mul(&cr.d))
        }
    } else {
        let b1 = &sys.blocks[1];
        let groups1 = block_groups(b1);
        match (groups1.first(), groups1.get(1)) {
            (Some(ga), Some(gb)) if ga.rows.len() == 2 && gb.rows.len() == 2 => {
                // both second-direction correspondences paired: the second
                // direction comes from their ratios and must meet the line
                let n2 = normalize_vec(unival_cross(&ratio_vector(ga), &ratio_vector(gb)));
                unival_dot_vec(&b1.orth_a, &n2)
                    .mul(&cr.d1)
                    .add(&unival_dot_vec(&b1.orth_b, &n2).mul(&cr.d2))
                    .add(&unival_dot_vec(&b1.orth_c, &n2).mul(&cr.d3))
            }
            (Some(ga), Some(gb)) if ga.rows.len() == 2 && gb.rows.len() == 1 => {
                // second direction pinned by one ratio and incidence; the
                // spare half-equation closes the loop
                let line_vec: UniVec3 = normalize_vec([
                    cr.d1
                        .scale(b1.orth_a.x)
                        .add(&cr.d2.scale(b1.orth_b.x))
                        .add(&cr.d3.scale(b1.orth_c.x)),
                    cr.d1
                        .scale(b1.orth_a.y)
                        .add(&cr.d2.scale(b1.orth_b.y))
                        .add(&cr.d3.scale(b1.orth_c.y)),
                    cr.d1
                        .scale(b1.orth_a.z)
                        .add(&cr.d2.scale(b1.orth_b.z))
                        .add(&cr.d3.scale(b1.orth_c.z)),
                ]);
                let n2 = normalize_vec(unival_cross(&ratio_vector(ga), &line_vec));
                let ra = scale_row(ga);
                let rb = gb.rows[0];
                let ka = cleared_line_factor(ra, &cr);
                let kb = cleared_line_factor(rb, &cr);
                let ea = unival_dot(&ra.cvec, &n2);
                let eb = unival_dot(&rb.cvec, &n2);
                rb.d.mul(&ka).mul(&ea).sub(&ra.d.mul(&kb).mul(&eb))
            }
            _ => {
                return Err(SolveError::Unsupported(
                    "second block must pair its first correspondence",
                ))
            }
        }
    };

    // all inputs are normalized to O(1) coefficients, so a closing
    // polynomial this small is structural cancellation, not information
    if rho.max_abs_coeff() < 1e-12 {
        return Err(SolveError::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let rho = rho.normalized();

    // every root of the closing polynomial is a candidate; spurious ones
    // (from the cleared denominators) die in the residual filter
    let mut candidates = Vec::new();
    let mut worst_condition: f64 = 0.0;
    for root in rho.roots(1e-12) {
        if root.im.abs() > IMAG_TOL * root.re.abs().max(1.0) || !root.re.is_finite() {
            continue;
        }
        let lambda = root.re;
        if let Some(c) = back_substitute(sys, lambda) {
            worst_condition = worst_condition.max(c.condition);
            candidates.push(c);
        }
    }

    let mut points = Vec::new();
    for c in candidates {
        let mut p = Vec::with_capacity(sys.unknowns.len());
        for v in &sys.unknowns {
            let x = match v {
                Var::L1 => c.la,
                Var::L2 | Var::L3 => c.lb,
                Var::Lambda => c.lambda,
                other => match c.scale_value {
                    Some((sv, val)) if sv == *other => val,
                    _ => 0.0,
                },
            };
            p.push(x);
        }
        points.push(p);
    }

    Ok(finalize(sys, points, tol, worst_condition))
}

/// Recover (la, lb) and any free relative scale at a fixed λ by numeric
/// least squares over the unit-scale rows of the first block.
fn back_substitute(sys: &PolySystem, lambda: f64) -> Option<Candidate> {
    let b0 = &sys.blocks[0];
    let groups0 = block_groups(b0);
    let h0 = unival_eval(&ratio_vector(&groups0[0]), lambda);
    let h1 = unival_eval(&ratio_vector(&groups0[1]), lambda);
    let mut n = h0.cross(&h1);
    let norm = n.norm();
    if !norm.is_finite() || norm < 1e-14 {
        return None;
    }
    n /= norm;

    // stack every unit-scale row: (γ1·a + γ2·b + β·c)·(cᵀn) = −d
    let mut rows: Vec<[f64; 3]> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for g in &groups0 {
        if g.scale != ScaleSym::One {
            continue;
        }
        for r in &g.rows {
            let e = unival_eval(&r.cvec, lambda).dot(&n);
            rows.push([
                r.a.eval(lambda) * e,
                r.b.eval(lambda) * e,
                r.c.eval(lambda) * e,
            ]);
            rhs.push(-r.d.eval(lambda));
        }
    }
    rows.push([b0.orth_a.dot(&n), b0.orth_b.dot(&n), b0.orth_c.dot(&n)]);
    rhs.push(0.0);

    let a = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
    let bvec = DVector::from_vec(rhs);
    let svd = a.svd(true, true);
    let smax = svd.singular_values[0];
    let smin = svd.singular_values[2];
    if !(smin > 1e-13 * smax) {
        return None;
    }
    let condition = smax / smin;
    let gamma = svd.solve(&bvec, 1e-13 * smax).ok()?;
    let beta = gamma[2];
    if beta.abs() < 1e-13 {
        return None;
    }
    let (la, lb) = (gamma[0] / beta, gamma[1] / beta);
    let u = beta * n;

    // free relative scale, if the system has one
    let mut scale_value = None;
    let scale_var = sys
        .unknowns
        .iter()
        .copied()
        .find(|v| matches!(v, Var::S3 | Var::S4));
    if let Some(sv) = scale_var {
        let mut best: Option<(f64, f64)> = None; // (|denom|, value)
        for (bi, b) in sys.blocks.iter().enumerate() {
            // the direction of this block
            let dir = if bi == 0 {
                u
            } else {
                match block_direction(sys, b, lambda, la, lb) {
                    Some(d) => d,
                    None => continue,
                }
            };
            for g in block_groups(b) {
                if g.scale != ScaleSym::Sym(sv) {
                    continue;
                }
                for r in &g.rows {
                    let k = r.a.eval(lambda) * la + r.b.eval(lambda) * lb + r.c.eval(lambda);
                    let e = unival_eval(&r.cvec, lambda).dot(&dir);
                    let denom = k * e;
                    if denom.abs() > best.map_or(0.0, |(d, _)| d) {
                        best = Some((denom.abs(), -r.d.eval(lambda) / denom));
                    }
                }
            }
        }
        scale_value = best.map(|(_, v)| (sv, v));
        if scale_value.is_none() {
            return None;
        }
    }

    Some(Candidate {
        lambda,
        la,
        lb,
        scale_value,
        condition,
    })
}

/// Direction of a secondary block at fixed (λ, la, lb): intersect the ratio
/// constraints with the incidence condition and scale by a unit-scale row.
fn block_direction(
    sys: &PolySystem,
    b: &HvBlock,
    lambda: f64,
    la: f64,
    lb: f64,
) -> Option<Vector3<f64>> {
    let _ = sys;
    let groups = block_groups(b);
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    for g in &groups {
        if g.rows.len() == 2 {
            normals.push(unival_eval(&ratio_vector(g), lambda));
        }
    }
    let line = la * b.orth_a + lb * b.orth_b + b.orth_c;
    let dir = match normals.len() {
        0 => return None,
        1 => normals[0].cross(&line),
        _ => normals[0].cross(&normals[1]),
    };
    let norm = dir.norm();
    if norm < 1e-14 {
        return None;
    }
    let dir = dir / norm;
    // absolute scale from the best-conditioned unit row
    let mut best: Option<(f64, f64)> = None;
    for g in &groups {
        if g.scale != ScaleSym::One {
            continue;
        }
        for r in &g.rows {
            let k = r.a.eval(lambda) * la + r.b.eval(lambda) * lb + r.c.eval(lambda);
            let e = unival_eval(&r.cvec, lambda).dot(&dir);
            let denom = k * e;
            if denom.abs() > best.map_or(0.0, |(d, _)| d) {
                best = Some((denom.abs(), -r.d.eval(lambda) / denom));
            }
        }
    }
    best.map(|(_, beta)| dir * beta)
}


/// Temporary scratch diagnostics for the structured path.
pub fn diag_structured(sys: &PolySystem, lam_truth: f64) {
    let b0 = &sys.blocks[0];
    let groups0 = block_groups(b0);
    let h0 = ratio_vector(&groups0[0]);
    let h1 = ratio_vector(&groups0[1]);
    let n = normalize_vec(unival_cross(&h0, &h1));
    let cr = line_cramer(b0, &groups0[0], &groups0[1], &n);
    eprintln!("  D(gt) = {:.3e}, D3(gt) = {:.3e} la {} lb {}", cr.d.eval(lam_truth), cr.d3.eval(lam_truth),
        cr.d1.eval(lam_truth)/cr.d3.eval(lam_truth), cr.d2.eval(lam_truth)/cr.d3.eval(lam_truth));
    let b1 = &sys.blocks[1];
    let groups1 = block_groups(b1);
    eprintln!("  block2 groups: {:?}", groups1.iter().map(|g| g.rows.len()).collect::<Vec<_>>());
    let ga = &groups1[0];
    let gb = &groups1[1];
    let line_vec: UniVec3 = normalize_vec([
        cr.d1.scale(b1.orth_a.x).add(&cr.d2.scale(b1.orth_b.x)).add(&cr.d3.scale(b1.orth_c.x)),
        cr.d1.scale(b1.orth_a.y).add(&cr.d2.scale(b1.orth_b.y)).add(&cr.d3.scale(b1.orth_c.y)),
        cr.d1.scale(b1.orth_a.z).add(&cr.d2.scale(b1.orth_b.z)).add(&cr.d3.scale(b1.orth_c.z)),
    ]);
    let hh = ratio_vector(ga);
    let n2 = normalize_vec(unival_cross(&hh, &line_vec));
    eprintln!("  |h3(gt)| = {:.3e}, |L(gt)| = {:.3e}, |n2(gt)| = {:.3e}",
        unival_eval(&hh, lam_truth).norm(), unival_eval(&line_vec, lam_truth).norm(), unival_eval(&n2, lam_truth).norm());
    let ra = scale_row(ga);
    let rb = gb.rows[0];
    let ka = cleared_line_factor(ra, &cr);
    let kb = cleared_line_factor(rb, &cr);
    let ea = unival_dot(&ra.cvec, &n2);
    let eb = unival_dot(&rb.cvec, &n2);
    let rho = rb.d.mul(&ka).mul(&ea).sub(&ra.d.mul(&kb).mul(&eb)).normalized();
    eprintln!("  deg rho {}, rho(gt) = {:.3e}", rho.degree(), rho.eval(lam_truth));
    let mut roots: Vec<f64> = rho.roots(1e-12).iter().filter(|r| r.im.abs() < 1e-6).map(|r| r.re).collect();
    roots.sort_by(f64::total_cmp);
    eprintln!("  near-real roots: {:?}", roots.iter().map(|r| format!("{:.6}", r)).collect::<Vec<_>>());
}

// ---------------------------------------------------------------------------
// shared refinement and filtering
// ---------------------------------------------------------------------------

/// Gauss-Newton refinement on the normalized equations; keeps the input if
/// no step improves the residual.
fn polish(sys: &PolySystem, point: &mut [f64]) {
    let k = sys.unknowns.len();
    let partials: Vec<Vec<MultiPoly>> = sys
        .equations
        .iter()
        .map(|e| sys.unknowns.iter().map(|v| e.partial(*v)).collect())
        .collect();
    for _ in 0..4 {
        let full = sys.expand_point(point);
        let r = DVector::from_iterator(
            sys.equations.len(),
            sys.equations.iter().map(|e| e.eval(&full)),
        );
        let rn = r.norm();
        if rn < 1e-14 {
            return;
        }
        let j = DMatrix::from_fn(sys.equations.len(), k, |i, c| partials[i][c].eval(&full));
        let svd = j.svd(true, true);
        let Ok(delta) = svd.solve(&r, 1e-12 * svd.singular_values[0]) else {
            return;
        };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..5 {
            let cand: Vec<f64> = point
                .iter()
                .zip(delta.iter())
                .map(|(x, d)| x - step * d)
                .collect();
            if sys.residual(&cand) < rn {
                point.copy_from_slice(&cand);
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            return;
        }
    }
}

/// Residual/saturation filtering, deduplication, cap and ordering shared by
/// both solve routes and the oracle.
fn finalize(sys: &PolySystem, mut points: Vec<Vec<f64>>, tol: f64, condition: f64) -> SolutionSet {
    for p in &mut points {
        polish(sys, p);
    }
    let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
    'next: for p in points {
        if !p.iter().all(|x| x.is_finite()) {
            continue;
        }
        let res = sys.residual(&p);
        if res > tol {
            continue;
        }
        if sys.saturation_margin(&p) < SATURATION_FLOOR {
            continue;
        }
        for (q, qres) in kept.iter_mut() {
            let same = p
                .iter()
                .zip(q.iter())
                .all(|(a, b)| (a - b).abs() < 1e-7 * (1.0 + a.abs().max(b.abs())));
            if same {
                if res < *qres {
                    *q = p;
                    *qres = res;
                }
                continue 'next;
            }
        }
        kept.push((p, res));
    }
    kept.sort_by(|a, b| a.1.total_cmp(&b.1));
    kept.truncate(sys.max_solutions);
    kept.sort_by(|a, b| {
        for (x, y) in a.0.iter().zip(b.0.iter()) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });
    SolutionSet {
        points: kept.iter().map(|(p, _)| p.clone()).collect(),
        residuals: kept.iter().map(|(_, r)| *r).collect(),
        condition,
    }
}

// ---------------------------------------------------------------------------
// generic dense action-matrix route
// ---------------------------------------------------------------------------

fn monomials_up_to(unknowns: &[Var], degree: u32) -> Vec<Mono> {
    let mut out = vec![Mono::ONE];
    for v in unknowns {
        let mut next = Vec::new();
        for m in &out {
            let mut e = *m;
            loop {
                next.push(e);
                if e.total_degree() >= degree {
                    break;
                }
                e.0[v.index()] += 1;
            }
        }
        out = next;
    }
    out.retain(|m| m.total_degree() <= degree);
    // descending grevlex: pivots eat large monomials, standard monomials
    // collect at the small end
    out.sort_by(|a, b| b.cmp(a));
    out
}

fn mono_mul_var(m: &Mono, v: Var) -> Mono {
    let mut e = *m;
    e.0[v.index()] += 1;
    e
}

fn solve_generic(sys: &PolySystem, tol: f64) -> Result<SolutionSet, SolveError> {
    if sys.unknowns.is_empty() || sys.unknowns.len() > 4 {
        return Err(SolveError::Unsupported("need 1..=4 unknowns"));
    }
    let base_degree = sys
        .equations
        .iter()
        .map(|e| e.total_degree())
        .max()
        .unwrap_or(0)
        + 2;
    let mut last_cond = f64::INFINITY;
    for escalation in 0..=3 {
        match try_action_matrix(sys, base_degree + escalation, tol) {
            Ok(set) => return Ok(set),
            Err(SolveError::RankDeficient { condition }) => last_cond = condition,
            Err(e) => return Err(e),
        }
    }
    Err(SolveError::RankDeficient {
        condition: last_cond,
    })
}

fn try_action_matrix(sys: &PolySystem, degree: u32, tol: f64) -> Result<SolutionSet, SolveError> {
    let basis = monomials_up_to(&sys.unknowns, degree);
    let index: HashMap<Mono, usize> = basis.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let ncols = basis.len();

    // monomial multiples of every equation up to the target degree
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for eq in &sys.equations {
        if eq.is_zero() {
            continue;
        }
        let df = eq.total_degree();
        for mult in monomials_up_to(&sys.unknowns, degree.saturating_sub(df)) {
            let prod = eq.mul_mono(&mult, 1.0);
            let mut row = vec![0.0; ncols];
            for (m, c) in prod.terms() {
                row[index[m]] = *c;
            }
            let scale = row.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if scale > 0.0 {
                row.iter_mut().for_each(|x| *x /= scale);
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Err(SolveError::Unsupported("empty system"));
    }

    // column-pivoted reduction to reduced row echelon form
    let nrows = rows.len();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; ncols];
    let mut used_row = vec![false; nrows];
    for col in 0..ncols {
        let mut best: Option<(usize, f64)> = None;
        for (ri, row) in rows.iter().enumerate() {
            if used_row[ri] {
                continue;
            }
            let v = row[col].abs();
            if v > best.map_or(1e-10, |(_, b)| b) {
                best = Some((ri, v));
            }
        }
        let Some((pr, _)) = best else { continue };
        used_row[pr] = true;
        pivot_of_col[col] = Some(pr);
        let inv = 1.0 / rows[pr][col];
        for x in rows[pr].iter_mut() {
            *x *= inv;
        }
        let pivot_row = rows[pr].clone();
        for (ri, row) in rows.iter_mut().enumerate() {
            if ri == pr || row[col] == 0.0 {
                continue;
            }
            let f = row[col];
            for (x, p) in row.iter_mut().zip(pivot_row.iter()) {
                *x -= f * p;
            }
            row[col] = 0.0;
        }
    }

    let standard: Vec<usize> = (0..ncols).filter(|&c| pivot_of_col[c].is_none()).collect();
    if standard.is_empty() {
        return Ok(finalize(sys, vec![], tol, 1.0));
    }
    if standard.len() > 4 * sys.max_solutions.max(1) + 8 {
        return Err(SolveError::RankDeficient {
            condition: standard.len() as f64,
        });
    }
    // the constant monomial must be standard for a consistent system
    let one_col = index[&Mono::ONE];
    if pivot_of_col[one_col].is_some() {
        return Ok(finalize(sys, vec![], tol, 1.0));
    }

    // normal form of any basis monomial over the standard set
    let normal_form = |m: &Mono| -> Option<Vec<f64>> {
        let col = *index.get(m)?;
        let mut nf = vec![0.0; standard.len()];
        match pivot_of_col[col] {
            None => {
                let pos = standard.iter().position(|&c| c == col).unwrap();
                nf[pos] = 1.0;
            }
            Some(ri) => {
                for (si, &sc) in standard.iter().enumerate() {
                    nf[si] = -rows[ri][sc];
                }
            }
        }
        Some(nf)
    };

    // multiplication matrix for the last unknown (λ for the solver systems)
    let action_var = *sys.unknowns.last().unwrap();
    let mut t = DMatrix::<f64>::zeros(standard.len(), standard.len());
    for (bi, &bc) in standard.iter().enumerate() {
        let shifted = mono_mul_var(&basis[bc], action_var);
        let Some(nf) = normal_form(&shifted) else {
            return Err(SolveError::RankDeficient {
                condition: f64::INFINITY,
            });
        };
        for (si, v) in nf.iter().enumerate() {
            t[(si, bi)] = *v;
        }
    }

    let one_pos = standard.iter().position(|&c| c == one_col).unwrap();
    let eigen = nalgebra::linalg::Schur::try_new(t.clone(), 1e-14, 500)
        .ok_or(SolveError::RankDeficient {
            condition: f64::INFINITY,
        })?
        .complex_eigenvalues();

    let mut points = Vec::new();
    for ev in eigen.iter() {
        if ev.im.abs() > IMAG_TOL * ev.re.abs().max(1.0) || !ev.re.is_finite() {
            continue;
        }
        // eigenvector = basis-monomial values at the solution
        let shifted = &t - DMatrix::identity(standard.len(), standard.len()) * ev.re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.as_ref().unwrap();
        let w = vt.row(standard.len() - 1);
        if w[one_pos].abs() < 1e-12 {
            continue;
        }
        let mut p = Vec::with_capacity(sys.unknowns.len());
        let mut ok = true;
        for v in &sys.unknowns {
            let mut e = [0u8; NVARS];
            e[v.index()] = 1;
            match normal_form(&Mono(e)) {
                Some(nf) => {
                    let val: f64 = nf.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                    p.push(val / w[one_pos]);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            points.push(p);
        }
    }
    Ok(finalize(sys, points, tol, 1.0))
}

// ---------------------------------------------------------------------------
// independent multi-start Newton oracle
// ---------------------------------------------------------------------------

/// Reference solver: damped Newton on the normalized least-squares residual
/// from `n_starts` seeded random points, clustered and filtered like
/// [`solve`]. Deterministic for identical inputs.
/// Search box of the oracle per unknown; solutions outside it are only
/// reachable by [`solve`], so set comparisons should restrict to this box.
pub fn oracle_search_box(v: Var) -> (f64, f64) {
    match v {
        Var::Lambda => (-8.0, 1.0),
        Var::S3 | Var::S4 => (-4.0, 4.0),
        _ => (-3.0, 3.0),
    }
}

/// Flattened terms for the oracle's inner loop; BTreeMap iteration is too
/// slow for hundreds of thousands of evaluations.
struct FlatPoly {
    terms: Vec<([u8; NVARS], f64)>,
}

impl FlatPoly {
    fn new(p: &MultiPoly) -> Self {
        Self {
            terms: p.terms().map(|(m, c)| (m.0, *c)).collect(),
        }
    }

    fn eval(&self, pows: &[[f64; 9]; NVARS]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut t = *c;
            for i in 0..NVARS {
                t *= pows[i][e[i] as usize];
            }
            acc += t;
        }
        acc
    }
}

fn power_table(full: &[f64; NVARS]) -> [[f64; 9]; NVARS] {
    let mut pows = [[1.0; 9]; NVARS];
    for i in 0..NVARS {
        for d in 1..9 {
            pows[i][d] = pows[i][d - 1] * full[i];
        }
    }
    pows
}

pub fn oracle_solve(sys: &PolySystem, tol: f64, n_starts: usize) -> SolutionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5bd1_e995 ^ (n_starts as u64));
    let k = sys.unknowns.len();
    let flat_eqs: Vec<FlatPoly> = sys.equations.iter().map(FlatPoly::new).collect();
    let flat_parts: Vec<Vec<FlatPoly>> = sys
        .equations
        .iter()
        .map(|e| {
            sys.unknowns
                .iter()
                .map(|v| FlatPoly::new(&e.partial(*v)))
                .collect()
        })
        .collect();

    let range = oracle_search_box;

    let mut found: Vec<Vec<f64>> = Vec::new();
    for _ in 0..n_starts {
        let mut x: Vec<f64> = sys
            .unknowns
            .iter()
            .map(|v| {
                let (lo, hi) = range(*v);
                rng.gen_range(lo..hi)
            })
            .collect();
        let mut mu = 1e-3;
        let mut converged = false;
        for _ in 0..60 {
            let pows = power_table(&sys.expand_point(&x));
            let r = DVector::from_iterator(
                flat_eqs.len(),
                flat_eqs.iter().map(|e| e.eval(&pows)),
            );
            let rn = r.norm();
            if rn < 1e-13 {
                converged = true;
                break;
            }
            let j = DMatrix::from_fn(flat_eqs.len(), k, |i, c| flat_parts[i][c].eval(&pows));
            let jt = j.transpose();
            let mut h = &jt * &j;
            for i in 0..k {
                h[(i, i)] += mu;
            }
            let g = &jt * &r;
            let Some(delta) = h.lu().solve(&g) else { break };
            let cand: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a - d).collect();
            let cand_rn = {
                let cp = power_table(&sys.expand_point(&cand));
                flat_eqs
                    .iter()
                    .map(|e| e.eval(&cp).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            if cand_rn < rn {
                let step = delta.norm();
                x = cand;
                mu = (mu * 0.3).max(1e-12);
                if step < 1e-13 {
                    converged = true;
                    break;
                }
            } else {
                mu *= 10.0;
                if mu > 1e8 {
                    break;
                }
            }
        }
        if converged || sys.residual(&x) < tol {
            // cluster against previous finds early to keep the list short
            let dup = found.iter().any(|q| {
                q.iter()
                    .zip(x.iter())
                    .all(|(a, b)| (a - b).abs() < 1e-6 * (1.0 + a.abs().max(b.abs())))
            });
            if !dup {
                found.push(x);
            }
        }
    }
    finalize(sys, found, tol, 1.0)
}
