//! Per-correspondence polynomial constraints and the hidden-variable
//! matrices for the minimal solvers.
//!
//! A distorted correspondence x̃ ↔ x̃' under a conjugate translation gives
//! the matrix equation [f(x̃',λ)]ₓ (I + s̄·u·lᵀ) f(x̃,λ) = 0. Each of its
//! three rows is affine in the direction u:
//!
//!   s̄·(lᵀf(x̃,λ)) · cᵀu + d = 0
//!
//! where both the 3-vector c and the scalar d depend only on λ, and the
//! whole vanishing-line dependence sits in the scalar factor. Stacking the
//! two independent rows of each correspondence plus the incidence row
//! (l1, l2, 1, 0) yields a matrix M with null vector (u1, u2, u3, 1), so all
//! its 4×4 sub-determinants vanish. Those sub-determinants (in 3–4 unknowns)
//! are the solver equations; the top-left 2×2 sub-determinant is the
//! saturation polynomial that removes the rank-deficient false-solution
//! family introduced by the reformulation.

use thiserror::Error;

use crate::geometry::{Gauge, Point2H, Vec3};
use crate::poly::{poly_det, MultiPoly, UniPoly, UniVec3, Var, NVARS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("degenerate correspondence: points coincide")]
    DegenerateCorrespondence,
    #[error("invalid correspondence input: {0}")]
    InvalidInput(&'static str),
}

/// A single distorted point correspondence in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCorrespondence {
    pub src: Point2H,
    pub dst: Point2H,
    /// 0 for the first translation direction, 1 for the second.
    pub direction_id: u8,
    /// Whether the relative translation scale of this correspondence is
    /// fixed to 1 (true) or left as a solver unknown (false).
    pub scale_known: bool,
}

impl PointCorrespondence {
    pub fn new(src: Point2H, dst: Point2H, direction_id: u8, scale_known: bool) -> Self {
        Self {
            src,
            dst,
            direction_id,
            scale_known,
        }
    }

    fn validate(&self) -> Result<(), ConstraintError> {
        if !self.src.is_finite() || !self.dst.is_finite() {
            return Err(ConstraintError::InvalidInput("non-finite point"));
        }
        if (self.src.x - self.dst.x).abs() < 1e-12
            && (self.src.y - self.dst.y).abs() < 1e-12
            && (self.src.w - self.dst.w).abs() < 1e-12
        {
            return Err(ConstraintError::DegenerateCorrespondence);
        }
        Ok(())
    }
}

/// Which component of the cross-product matrix equation a row comes from.
/// The W row has a zero u3 coefficient, the Y row a zero u2 coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossRow {
    X,
    Y,
    W,
}

impl CrossRow {
    fn index(self) -> usize {
        match self {
            CrossRow::X => 0,
            CrossRow::Y => 1,
            CrossRow::W => 2,
        }
    }
}

/// Relative-scale symbol attached to a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleSym {
    One,
    Sym(Var),
}

/// λ-only polynomial data of one constraint row, exposing the structure
/// scale·(a·la + b·lb + c)·(cvecᵀu) + d = 0 used by the elimination backend.
/// (la, lb) are the two free vanishing-line coordinates of the gauge.
#[derive(Debug, Clone)]
pub struct HvRow {
    pub corr: usize,
    pub kind: CrossRow,
    pub scale: ScaleSym,
    pub a: UniPoly,
    pub b: UniPoly,
    pub c: UniPoly,
    pub cvec: UniVec3,
    pub d: UniPoly,
}

/// One hidden-variable matrix block (constraint rows + incidence row) with a
/// dedicated direction unknown.
#[derive(Debug, Clone)]
pub struct HvBlock {
    pub rows: Vec<HvRow>,
    /// Unit vectors pairing with (la, lb, 1) in the incidence row lᵀu = 0.
    pub orth_a: Vec3,
    pub orth_b: Vec3,
    pub orth_c: Vec3,
}

impl HvBlock {
    fn new(rows: Vec<HvRow>, gauge: Gauge) -> Self {
        let (orth_a, orth_b, orth_c) = match gauge {
            Gauge::L3Eq1 => (Vec3::x(), Vec3::y(), Vec3::z()),
            Gauge::L2Eq1 => (Vec3::x(), Vec3::z(), Vec3::y()),
        };
        Self {
            rows,
            orth_a,
            orth_b,
            orth_c,
        }
    }
}

/// The hidden-variable formulation of one minimal problem: the matrix (or
/// two matrix blocks) of polynomials, the sub-determinant equation set, and
/// the saturation polynomials.
#[derive(Debug, Clone)]
pub struct HiddenVariableSystem {
    /// One 7×4/6×4 matrix, or two 5×4 (or 5×4 and 4×4) blocks.
    pub matrices: Vec<Vec<[MultiPoly; 4]>>,
    /// Normalized sub-determinant equations.
    pub equations: Vec<MultiPoly>,
    /// Normalized saturation polynomials (nonzero on true solutions).
    pub saturations: Vec<MultiPoly>,
    pub unknowns: Vec<Var>,
    pub expected_solution_count: usize,
    pub blocks: Vec<HvBlock>,
    pub gauge: Gauge,
}

impl HiddenVariableSystem {
    /// Evaluate matrix block `i` at a parameter point (full 6-slot layout).
    pub fn eval_matrix(&self, i: usize, point: &[f64; NVARS]) -> nalgebra::DMatrix<f64> {
        let m = &self.matrices[i];
        let mut out = nalgebra::DMatrix::zeros(m.len(), 4);
        for (r, row) in m.iter().enumerate() {
            for (c, p) in row.iter().enumerate() {
                out[(r, c)] = p.eval(point);
            }
        }
        out
    }
}

/// λ-only pieces of one correspondence: w-polys, the three cross-row
/// coefficient vectors and constants.
struct CorrPolys {
    x: f64,
    y: f64,
    w: UniPoly,
    cvec: [UniVec3; 3],
    d: [UniPoly; 3],
}

fn corr_polys(c: &PointCorrespondence) -> Result<CorrPolys, ConstraintError> {
    c.validate()?;
    let (x, y) = c
        .src
        .dehomogenize()
        .ok_or(ConstraintError::InvalidInput("source at infinity"))?;
    let (xp, yp) = c
        .dst
        .dehomogenize()
        .ok_or(ConstraintError::InvalidInput("destination at infinity"))?;
    let r2 = x * x + y * y;
    let rp2 = xp * xp + yp * yp;
    let w = UniPoly::linear(1.0, r2);
    let wp = UniPoly::linear(1.0, rp2);
    let cx = UniPoly::constant(xp);
    let cy = UniPoly::constant(yp);
    // rows of [f(x̃',λ)]ₓ applied to u and to f(x̃,λ)
    let cvec = [
        [UniPoly::zero(), wp.scale(-1.0), cy.clone()],
        [wp.clone(), UniPoly::zero(), cx.scale(-1.0)],
        [cy.scale(-1.0), cx.clone(), UniPoly::zero()],
    ];
    let d = [
        // y'·w − w'·y, w'·x − x'·w, x'·y − y'·x
        UniPoly::linear(yp - y, yp * r2 - rp2 * y),
        UniPoly::linear(x - xp, rp2 * x - xp * r2),
        UniPoly::constant(xp * y - yp * x),
    ];
    Ok(CorrPolys {
        x,
        y,
        w,
        cvec,
        d,
    })
}

/// (a, b, c) of the scalar factor lᵀf(x̃,λ) = a·la + b·lb + c for the gauge.
fn line_factor(cp: &CorrPolys, gauge: Gauge) -> (UniPoly, UniPoly, UniPoly) {
    match gauge {
        Gauge::L3Eq1 => (
            UniPoly::constant(cp.x),
            UniPoly::constant(cp.y),
            cp.w.clone(),
        ),
        Gauge::L2Eq1 => (
            UniPoly::constant(cp.x),
            cp.w.clone(),
            UniPoly::constant(cp.y),
        ),
    }
}

fn uni_to_lambda_poly(p: &UniPoly) -> MultiPoly {
    let mut out = MultiPoly::zero();
    for (k, &c) in p.coeffs.iter().enumerate() {
        if c != 0.0 {
            out = out.add(&MultiPoly::term(c, &[(Var::Lambda, k as u8)]));
        }
    }
    out
}

fn scale_poly(s: ScaleSym) -> MultiPoly {
    match s {
        ScaleSym::One => MultiPoly::constant(1.0),
        ScaleSym::Sym(v) => MultiPoly::var(v),
    }
}

/// Gauge-dependent free line coordinates.
pub fn gauge_vars(gauge: Gauge) -> (Var, Var) {
    match gauge {
        Gauge::L3Eq1 => (Var::L1, Var::L2),
        Gauge::L2Eq1 => (Var::L1, Var::L3),
    }
}

/// Build a full 4-entry matrix row as polynomials over (u1, u2, u3, 1).
fn row_multipoly(cp: &CorrPolys, kind: CrossRow, scale: ScaleSym, gauge: Gauge) -> [MultiPoly; 4] {
    let (la, lb) = gauge_vars(gauge);
    let (a, b, c) = line_factor(cp, gauge);
    let k = scale_poly(scale).mul(
        &MultiPoly::var(la)
            .mul(&uni_to_lambda_poly(&a))
            .add(&MultiPoly::var(lb).mul(&uni_to_lambda_poly(&b)))
            .add(&uni_to_lambda_poly(&c)),
    );
    let r = kind.index();
    [
        k.mul(&uni_to_lambda_poly(&cp.cvec[r][0])),
        k.mul(&uni_to_lambda_poly(&cp.cvec[r][1])),
        k.mul(&uni_to_lambda_poly(&cp.cvec[r][2])),
        uni_to_lambda_poly(&cp.d[r]),
    ]
}

fn orth_row_multipoly(gauge: Gauge) -> [MultiPoly; 4] {
    let (la, lb) = gauge_vars(gauge);
    match gauge {
        Gauge::L3Eq1 => [
            MultiPoly::var(la),
            MultiPoly::var(lb),
            MultiPoly::constant(1.0),
            MultiPoly::zero(),
        ],
        Gauge::L2Eq1 => [
            MultiPoly::var(la),
            MultiPoly::constant(1.0),
            MultiPoly::var(lb),
            MultiPoly::zero(),
        ],
    }
}

fn hv_row(
    cp: &CorrPolys,
    corr: usize,
    kind: CrossRow,
    scale: ScaleSym,
    gauge: Gauge,
) -> HvRow {
    let (a, b, c) = line_factor(cp, gauge);
    let r = kind.index();
    HvRow {
        corr,
        kind,
        scale,
        a,
        b,
        c,
        cvec: cp.cvec[r].clone(),
        d: cp.d[r].clone(),
    }
}

/// Norm of a row's coefficient 4-vector at the nominal parameter point
/// (la = lb = 0, λ = 0, s̄ = 1), used to pick which redundant row to drop.
fn nominal_row_magnitude(cp: &CorrPolys, kind: CrossRow) -> f64 {
    let r = kind.index();
    let c0 = cp.cvec[r][0].eval(0.0);
    let c1 = cp.cvec[r][1].eval(0.0);
    let c2 = cp.cvec[r][2].eval(0.0);
    let d = cp.d[r].eval(0.0);
    // at the nominal point the line factor is w(0) = 1
    (c0 * c0 + c1 * c1 + c2 * c2 + d * d).sqrt()
}

/// The two linearly independent constraint rows of one correspondence,
/// expressed as linear forms in (u1, u2, u3, 1) with polynomial
/// coefficients. Drops the cross-product row with the smallest magnitude at
/// the nominal evaluation point.
pub fn eq6_rows(
    c: &PointCorrespondence,
    scale: ScaleSym,
    gauge: Gauge,
) -> Result<[[MultiPoly; 4]; 2], ConstraintError> {
    let cp = corr_polys(c)?;
    let mut kinds = [CrossRow::X, CrossRow::Y, CrossRow::W];
    kinds.sort_by(|a, b| {
        nominal_row_magnitude(&cp, *a).total_cmp(&nominal_row_magnitude(&cp, *b))
    });
    // keep the two largest
    Ok([
        row_multipoly(&cp, kinds[2], scale, gauge),
        row_multipoly(&cp, kinds[1], scale, gauge),
    ])
}

/// All three raw rows (rank two for generic input); test and diagnostic use.
pub fn eq6_all_rows(
    c: &PointCorrespondence,
    scale: ScaleSym,
    gauge: Gauge,
) -> Result<[[MultiPoly; 4]; 3], ConstraintError> {
    let cp = corr_polys(c)?;
    Ok([
        row_multipoly(&cp, CrossRow::X, scale, gauge),
        row_multipoly(&cp, CrossRow::Y, scale, gauge),
        row_multipoly(&cp, CrossRow::W, scale, gauge),
    ])
}

fn combinations_4(n: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                for d in (c + 1)..n {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

fn subdeterminants(matrix: &[[MultiPoly; 4]]) -> Vec<MultiPoly> {
    combinations_4(matrix.len())
        .into_iter()
        .map(|rows| {
            let m: Vec<Vec<MultiPoly>> = rows
                .iter()
                .map(|&r| matrix[r].to_vec())
                .collect();
            poly_det(&m).normalized()
        })
        .collect()
}

/// Top-left 2×2 sub-determinant m11·m22 − m12·m21 of a matrix block; the
/// saturation polynomial of the hidden-variable trick.
fn top_left_2x2(matrix: &[[MultiPoly; 4]]) -> MultiPoly {
    matrix[0][0]
        .mul(&matrix[1][1])
        .sub(&matrix[0][1].mul(&matrix[1][0]))
        .normalized()
}

/// Matrix block of one direction in the row order of the solver derivation:
/// W rows of the first two correspondences, then their Y rows, then any
/// extra correspondence rows, then the incidence row.
struct BlockBuild {
    matrix: Vec<[MultiPoly; 4]>,
    rows: Vec<HvRow>,
}

fn build_block(
    corrs: &[(usize, &PointCorrespondence, ScaleSym)],
    drop_half_of_last: bool,
    gauge: Gauge,
) -> Result<BlockBuild, ConstraintError> {
    let cps: Vec<CorrPolys> = corrs
        .iter()
        .map(|(_, c, _)| corr_polys(c))
        .collect::<Result<_, _>>()?;
    let n = corrs.len();
    // paired W rows then paired Y rows for the first two correspondences,
    // then any extra correspondences
    let mut order: Vec<(usize, CrossRow)> = Vec::new();
    for i in 0..n.min(2) {
        order.push((i, CrossRow::W));
    }
    for i in 0..n.min(2) {
        order.push((i, CrossRow::Y));
    }
    for i in 2..n {
        order.push((i, CrossRow::W));
        order.push((i, CrossRow::Y));
    }
    if drop_half_of_last {
        // drop the worse-conditioned half-equation of the final correspondence
        let last = n - 1;
        let dropped = if nominal_row_magnitude(&cps[last], CrossRow::W)
            >= nominal_row_magnitude(&cps[last], CrossRow::Y)
        {
            CrossRow::Y
        } else {
            CrossRow::W
        };
        order.retain(|&(i, k)| !(i == last && k == dropped));
    }
    let mut matrix = Vec::with_capacity(order.len() + 1);
    let mut rows = Vec::with_capacity(order.len());
    for (ci, kind) in order {
        let (gi, _, scale) = corrs[ci];
        matrix.push(row_multipoly(&cps[ci], kind, scale, gauge));
        rows.push(hv_row(&cps[ci], gi, kind, scale, gauge));
    }
    matrix.push(orth_row_multipoly(gauge));
    Ok(BlockBuild { matrix, rows })
}

fn assemble(
    blocks_build: Vec<BlockBuild>,
    unknowns: Vec<Var>,
    expected: usize,
    gauge: Gauge,
    m2_saturate_first_element: bool,
) -> HiddenVariableSystem {
    let mut matrices = Vec::new();
    let mut equations = Vec::new();
    let mut saturations = Vec::new();
    let mut blocks = Vec::new();
    for (i, bb) in blocks_build.into_iter().enumerate() {
        equations.extend(subdeterminants(&bb.matrix));
        if i == 1 && m2_saturate_first_element {
            saturations.push(bb.matrix[0][0].normalized());
        } else {
            saturations.push(top_left_2x2(&bb.matrix));
        }
        blocks.push(HvBlock::new(bb.rows, gauge));
        matrices.push(bb.matrix);
    }
    HiddenVariableSystem {
        matrices,
        equations,
        saturations,
        unknowns,
        expected_solution_count: expected,
        blocks,
        gauge,
    }
}

/// 2.5-point system: three same-scale correspondences in one direction, one
/// half-equation dropped; 15 equations in (l1, l2, λ), 4 solutions.
pub fn build_m_h25(
    corrs: &[PointCorrespondence; 3],
    gauge: Gauge,
) -> Result<HiddenVariableSystem, ConstraintError> {
    let (la, lb) = gauge_vars(gauge);
    let refs: Vec<(usize, &PointCorrespondence, ScaleSym)> = corrs
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c, ScaleSym::One))
        .collect();
    let block = build_block(&refs, true, gauge)?;
    Ok(assemble(
        vec![block],
        vec![la, lb, Var::Lambda],
        4,
        gauge,
        false,
    ))
}

/// 3-point system: third correspondence with unknown relative scale;
/// 35 equations in (l1, l2, s̄3, λ), 2 solutions.
pub fn build_m_h3(
    corrs: &[PointCorrespondence; 3],
    gauge: Gauge,
) -> Result<HiddenVariableSystem, ConstraintError> {
    let (la, lb) = gauge_vars(gauge);
    let refs: Vec<(usize, &PointCorrespondence, ScaleSym)> = corrs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let s = if i == 2 {
                ScaleSym::Sym(Var::S3)
            } else {
                ScaleSym::One
            };
            (i, c, s)
        })
        .collect();
    let block = build_block(&refs, false, gauge)?;
    Ok(assemble(
        vec![block],
        vec![la, lb, Var::S3, Var::Lambda],
        2,
        gauge,
        false,
    ))
}

/// 4-point two-direction system: correspondences 1, 2 translate along u with
/// unit scales, 3, 4 along v with s̄3 = 1 and s̄4 unknown; 10 equations in
/// (l1, l2, s̄4, λ), 4 solutions.
pub fn build_m_h4(
    corrs: &[PointCorrespondence; 4],
    gauge: Gauge,
) -> Result<HiddenVariableSystem, ConstraintError> {
    let (la, lb) = gauge_vars(gauge);
    let b1 = build_block(
        &[(0, &corrs[0], ScaleSym::One), (1, &corrs[1], ScaleSym::One)],
        false,
        gauge,
    )?;
    let b2 = build_block(
        &[
            (2, &corrs[2], ScaleSym::One),
            (3, &corrs[3], ScaleSym::Sym(Var::S4)),
        ],
        false,
        gauge,
    )?;
    Ok(assemble(
        vec![b1, b2],
        vec![la, lb, Var::S4, Var::Lambda],
        4,
        gauge,
        false,
    ))
}

/// 3.5-point two-direction system: all unit scales, one half-equation of the
/// fourth correspondence dropped; 6 equations in (l1, l2, λ), 6 solutions.
/// Saturates the top-left 2×2 of the first block and the top-left element of
/// the second.
pub fn build_m_h35(
    corrs: &[PointCorrespondence; 4],
    gauge: Gauge,
) -> Result<HiddenVariableSystem, ConstraintError> {
    let (la, lb) = gauge_vars(gauge);
    let b1 = build_block(
        &[(0, &corrs[0], ScaleSym::One), (1, &corrs[1], ScaleSym::One)],
        false,
        gauge,
    )?;
    let b2 = build_block(
        &[(2, &corrs[2], ScaleSym::One), (3, &corrs[3], ScaleSym::One)],
        true,
        gauge,
    )?;
    Ok(assemble(
        vec![b1, b2],
        vec![la, lb, Var::Lambda],
        6,
        gauge,
        true,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_instance, ground_truth_point, InstanceSpec};
    use crate::poly::unival_eval;
    use nalgebra::{DMatrix, Vector4};
    use rand::prelude::*;

    fn hv_point(inst: &crate::instances::CtInstance, sys: &HiddenVariableSystem) -> [f64; NVARS] {
        ground_truth_point(inst, sys.gauge)
    }

    #[test]
    fn noiseless_rows_vanish_at_ground_truth() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(3));
            let pt = ground_truth_point(&inst, Gauge::L3Eq1);
            let u = inst.direction_u;
            for c in &inst.corrs {
                let rows = eq6_rows(c, ScaleSym::One, Gauge::L3Eq1).unwrap();
                for row in &rows {
                    let v = row[0].eval(&pt) * u.x
                        + row[1].eval(&pt) * u.y
                        + row[2].eval(&pt) * u.z
                        + row[3].eval(&pt);
                    assert!(v.abs() < 1e-12, "row residual {v}");
                }
            }
        }
    }

    #[test]
    fn raw_rows_have_rank_two() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(3));
            let rows = eq6_all_rows(&inst.corrs[0], ScaleSym::One, Gauge::L3Eq1).unwrap();
            // evaluate the coefficient matrix at a random parameter point
            let mut pt = [0.0; NVARS];
            pt[Var::L1.index()] = rng.gen_range(-1.0..1.0);
            pt[Var::L2.index()] = rng.gen_range(-1.0..1.0);
            pt[Var::Lambda.index()] = rng.gen_range(-5.0..0.0);
            let m = DMatrix::from_fn(3, 4, |r, c| rows[r][c].eval(&pt));
            let svd = m.svd(false, false);
            let s = &svd.singular_values;
            assert!(s[1] > 1e-8 * s[0], "rank below two");
            assert!(s[2] < 1e-10 * s[0], "rank above two: {}", s[2] / s[0]);
        }
    }

    /// Independent naive symbolic expansion of the constraint over the nine
    /// symbols (l1, l2, λ, s̄, u1, u2, u3); coefficients must match the
    /// builder's polynomials term by term.
    mod naive {
        use std::collections::HashMap;

        pub const N: usize = 7; // l1 l2 lambda s u1 u2 u3
        #[derive(Clone, Default)]
        pub struct Poly(pub HashMap<[u8; N], f64>);

        impl Poly {
            pub fn constant(c: f64) -> Self {
                let mut p = Poly::default();
                if c != 0.0 {
                    p.0.insert([0; N], c);
                }
                p
            }
            pub fn var(i: usize) -> Self {
                let mut e = [0; N];
                e[i] = 1;
                let mut p = Poly::default();
                p.0.insert(e, 1.0);
                p
            }
            pub fn add(&self, o: &Self) -> Self {
                let mut out = self.clone();
                for (m, c) in &o.0 {
                    *out.0.entry(*m).or_insert(0.0) += c;
                }
                out.0.retain(|_, c| *c != 0.0);
                out
            }
            pub fn mul(&self, o: &Self) -> Self {
                let mut out = Poly::default();
                for (ma, ca) in &self.0 {
                    for (mb, cb) in &o.0 {
                        let mut m = *ma;
                        for i in 0..N {
                            m[i] += mb[i];
                        }
                        *out.0.entry(m).or_insert(0.0) += ca * cb;
                    }
                }
                out.0.retain(|_, c| *c != 0.0);
                out
            }
            pub fn scale(&self, s: f64) -> Self {
                let mut out = self.clone();
                for c in out.0.values_mut() {
                    *c *= s;
                }
                out
            }
        }
    }

    #[test]
    fn coefficients_match_naive_symbolic_expansion() {
        use naive::Poly as NP;
        let (il1, il2, ilam, is, iu1, iu2, iu3) = (0, 1, 2, 3, 4, 5, 6);
        let mut rng = StdRng::seed_from_u64(100);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, &InstanceSpec::one_direction(3));
            let c = &inst.corrs[1];
            let (x, y) = c.src.dehomogenize().unwrap();
            let (xp, yp) = c.dst.dehomogenize().unwrap();

            // symbolic f(x̃,λ), f(x̃',λ)
            let w = NP::constant(1.0).add(&NP::var(ilam).scale(x * x + y * y));
            let wp = NP::constant(1.0).add(&NP::var(ilam).scale(xp * xp + yp * yp));
            let a = [NP::constant(x), NP::constant(y), w];
            // skew(b) rows with b = (x', y', w')
            let skew: [[NP; 3]; 3] = [
                [NP::constant(0.0), wp.scale(-1.0), NP::constant(yp)],
                [wp.clone(), NP::constant(0.0), NP::constant(-xp)],
                [NP::constant(-yp), NP::constant(xp), NP::constant(0.0)],
            ];
            // H = I + s̄·u·lᵀ with l = (l1, l2, 1)
            let u = [NP::var(iu1), NP::var(iu2), NP::var(iu3)];
            let l = [NP::var(il1), NP::var(il2), NP::constant(1.0)];
            let mut h = [
                [NP::constant(1.0), NP::constant(0.0), NP::constant(0.0)],
                [NP::constant(0.0), NP::constant(1.0), NP::constant(0.0)],
                [NP::constant(0.0), NP::constant(0.0), NP::constant(1.0)],
            ];
            for r in 0..3 {
                for cc in 0..3 {
                    h[r][cc] = h[r][cc].add(&NP::var(is).mul(&u[r]).mul(&l[cc]));
                }
            }
            // rows of skew(b)·H·a
            let mut expanded: [NP; 3] = [NP::default(), NP::default(), NP::default()];
            for r in 0..3 {
                let mut acc = NP::default();
                for k in 0..3 {
                    for j in 0..3 {
                        acc = acc.add(&skew[r][k].mul(&h[k][j]).mul(&a[j]));
                    }
                }
                expanded[r] = acc;
            }

            // the builder's rows, with coefficient slots re-expanded over u
            let rows = eq6_all_rows(c, ScaleSym::Sym(Var::S3), Gauge::L3Eq1).unwrap();
            for (r, row) in rows.iter().enumerate() {
                let mut builder: NP = NP::default();
                for (slot, uvar) in [(0, Some(iu1)), (1, Some(iu2)), (2, Some(iu3)), (3, None)] {
                    for (mono, coeff) in row[slot].terms() {
                        let mut e = [0u8; naive::N];
                        e[il1] = mono.0[Var::L1.index()];
                        e[il2] = mono.0[Var::L2.index()];
                        e[ilam] = mono.0[Var::Lambda.index()];
                        e[is] = mono.0[Var::S3.index()];
                        if let Some(uv) = uvar {
                            e[uv] = 1;
                        }
                        let mut t = NP::default();
                        t.0.insert(e, *coeff);
                        builder = builder.add(&t);
                    }
                }
                // term-by-term agreement
                let keys: std::collections::HashSet<_> = expanded[r]
                    .0
                    .keys()
                    .chain(builder.0.keys())
                    .copied()
                    .collect();
                for k in keys {
                    let want = expanded[r].0.get(&k).copied().unwrap_or(0.0);
                    let got = builder.0.get(&k).copied().unwrap_or(0.0);
                    assert!(
                        (want - got).abs() < 1e-12 * (1.0 + want.abs()),
                        "row {} mono {:?}: naive {} vs builder {}",
                        r,
                        k,
                        want,
                        got
                    );
                }
            }
        }
    }

    #[test]
    fn h3_matrix_matches_expected_sparsity() {
        let mut rng = StdRng::seed_from_u64(5);
        let inst = random_instance(&mut rng, &InstanceSpec::h3(1.4));
        let sys = build_m_h3(&[inst.corrs[0], inst.corrs[1], inst.corrs[2]], Gauge::L3Eq1).unwrap();
        let m = &sys.matrices[0];
        assert_eq!(m.len(), 7);
        for (r, c) in [(0, 2), (1, 2), (2, 1), (3, 1), (4, 2), (5, 1)] {
            assert!(m[r][c].is_zero(), "expected zero at ({r},{c})");
        }
        // incidence row
        assert_eq!(m[6][0], MultiPoly::var(Var::L1));
        assert_eq!(m[6][1], MultiPoly::var(Var::L2));
        assert_eq!(m[6][2], MultiPoly::constant(1.0));
        assert!(m[6][3].is_zero());
        assert_eq!(sys.equations.len(), 35);
        assert_eq!(sys.expected_solution_count, 2);
    }

    #[test]
    fn builders_report_expected_solution_counts_and_equation_counts() {
        let mut rng = StdRng::seed_from_u64(17);
        let one = random_instance(&mut rng, &InstanceSpec::one_direction(3));
        let two = random_instance(&mut rng, &InstanceSpec::two_direction(1.0));
        let c3: [PointCorrespondence; 3] = [one.corrs[0], one.corrs[1], one.corrs[2]];
        let c4: [PointCorrespondence; 4] = [two.corrs[0], two.corrs[1], two.corrs[2], two.corrs[3]];

        let h25 = build_m_h25(&c3, Gauge::L3Eq1).unwrap();
        assert_eq!((h25.equations.len(), h25.expected_solution_count), (15, 4));
        assert_eq!(h25.matrices[0].len(), 6);

        let h3 = build_m_h3(&c3, Gauge::L3Eq1).unwrap();
        assert_eq!((h3.equations.len(), h3.expected_solution_count), (35, 2));

        let h4 = build_m_h4(&c4, Gauge::L3Eq1).unwrap();
        assert_eq!((h4.equations.len(), h4.expected_solution_count), (10, 4));
        assert_eq!(h4.matrices.len(), 2);
        assert_eq!(h4.matrices[0].len(), 5);
        assert_eq!(h4.matrices[1].len(), 5);

        let h35 = build_m_h35(&c4, Gauge::L3Eq1).unwrap();
        assert_eq!((h35.equations.len(), h35.expected_solution_count), (6, 6));
        assert_eq!(h35.matrices[0].len(), 5);
        assert_eq!(h35.matrices[1].len(), 4);
        assert_eq!(h35.saturations.len(), 2);
    }

    fn build_for(
        inst: &crate::instances::CtInstance,
    ) -> Vec<(&'static str, HiddenVariableSystem)> {
        let c = &inst.corrs;
        let mut out = Vec::new();
        if inst.direction_v.is_none() {
            let c3 = [c[0], c[1], c[2]];
            out.push(("h25", build_m_h25(&c3, Gauge::L3Eq1).unwrap()));
            out.push(("h3", build_m_h3(&c3, Gauge::L3Eq1).unwrap()));
        } else {
            let c4 = [c[0], c[1], c[2], c[3]];
            out.push(("h4", build_m_h4(&c4, Gauge::L3Eq1).unwrap()));
            out.push(("h35", build_m_h35(&c4, Gauge::L3Eq1).unwrap()));
        }
        out
    }

    #[test]
    fn all_equations_vanish_at_ground_truth() {
        let mut rng = StdRng::seed_from_u64(23);
        for trial in 0..1000 {
            let inst = if trial % 2 == 0 {
                random_instance(&mut rng, &InstanceSpec::one_direction(3))
            } else {
                random_instance(&mut rng, &InstanceSpec::two_direction(1.0))
            };
            for (name, sys) in build_for(&inst) {
                let pt = hv_point(&inst, &sys);
                for (i, eq) in sys.equations.iter().enumerate() {
                    let v = eq.eval(&pt);
                    assert!(
                        v.abs() < 1e-8,
                        "{name} trial {trial} equation {i} residual {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn saturation_nonzero_at_ground_truth() {
        let mut rng = StdRng::seed_from_u64(31);
        for trial in 0..100 {
            let inst = if trial % 2 == 0 {
                random_instance(&mut rng, &InstanceSpec::one_direction(3))
            } else {
                random_instance(&mut rng, &InstanceSpec::two_direction(1.0))
            };
            for (name, sys) in build_for(&inst) {
                let pt = hv_point(&inst, &sys);
                for (i, sat) in sys.saturations.iter().enumerate() {
                    let v = sat.eval(&pt).abs();
                    assert!(v > 1e-10, "{name} trial {trial} saturation {i} = {v}");
                }
            }
        }
    }

    #[test]
    fn null_vector_recovers_direction() {
        let mut rng = StdRng::seed_from_u64(57);
        for trial in 0..200 {
            let inst = if trial % 2 == 0 {
                random_instance(&mut rng, &InstanceSpec::one_direction(3))
            } else {
                random_instance(&mut rng, &InstanceSpec::two_direction(1.0))
            };
            for (_name, sys) in build_for(&inst) {
                let pt = hv_point(&inst, &sys);
                for (bi, truth) in [Some(inst.direction_u), inst.direction_v]
                    .iter()
                    .enumerate()
                    .filter_map(|(i, d)| {
                        if i < sys.matrices.len() {
                            d.map(|d| (i, d))
                        } else {
                            None
                        }
                    })
                {
                    let m = sys.eval_matrix(bi, &pt);
                    let svd = m.svd(false, true);
                    let vt = svd.v_t.unwrap();
                    let null: Vector4<f64> = vt.row(3).transpose().into_owned().fixed_rows::<4>(0).into_owned();
                    assert!(null[3].abs() > 1e-10, "null vector last component zero");
                    let u = Vec3::new(null[0], null[1], null[2]) / null[3];
                    assert!(
                        (u - truth).norm() < 1e-8 * (1.0 + truth.norm()),
                        "direction error {}",
                        (u - truth).norm()
                    );
                }
            }
        }
    }

    #[test]
    fn hv_rows_agree_with_matrix_polys() {
        // the block data must describe exactly the same rows as the matrix
        let mut rng = StdRng::seed_from_u64(71);
        let inst = random_instance(&mut rng, &InstanceSpec::h3(0.6));
        let sys = build_m_h3(&[inst.corrs[0], inst.corrs[1], inst.corrs[2]], Gauge::L3Eq1).unwrap();
        let pt = hv_point(&inst, &sys);
        let lam = pt[Var::Lambda.index()];
        let (la, lb) = (pt[Var::L1.index()], pt[Var::L2.index()]);
        for (r, row) in sys.blocks[0].rows.iter().enumerate() {
            let s = match row.scale {
                ScaleSym::One => 1.0,
                ScaleSym::Sym(v) => pt[v.index()],
            };
            let k = s * (row.a.eval(lam) * la + row.b.eval(lam) * lb + row.c.eval(lam));
            let cv = unival_eval(&row.cvec, lam);
            for col in 0..3 {
                let want = sys.matrices[0][r][col].eval(&pt);
                assert!((k * cv[col] - want).abs() < 1e-10);
            }
            let want = sys.matrices[0][r][3].eval(&pt);
            assert!((row.d.eval(lam) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_correspondence_rejected() {
        let p = Point2H::from_xy(0.1, 0.2);
        let c = PointCorrespondence::new(p, p, 0, true);
        assert_eq!(
            eq6_rows(&c, ScaleSym::One, Gauge::L3Eq1).unwrap_err(),
            ConstraintError::DegenerateCorrespondence
        );
    }
}
