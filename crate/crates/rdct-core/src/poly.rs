//! Small dense polynomials for the constraint systems.
//!
//! [`MultiPoly`] is a multivariate polynomial over the fixed variable universe
//! (l1, l2, l3, s̄3, s̄4, λ) with graded reverse lexicographic term order and
//! at most total degree 8, which is all the sub-determinant equations ever
//! need. [`UniPoly`] is a univariate companion for the elimination backend.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Complex, DMatrix};

/// Indices into the monomial exponent tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    L1,
    L2,
    L3,
    S3,
    S4,
    Lambda,
}

pub const NVARS: usize = 6;

impl Var {
    pub fn index(self) -> usize {
        match self {
            Var::L1 => 0,
            Var::L2 => 1,
            Var::L3 => 2,
            Var::S3 => 3,
            Var::S4 => 4,
            Var::Lambda => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::L1 => "l1",
            Var::L2 => "l2",
            Var::L3 => "l3",
            Var::S3 => "s3",
            Var::S4 => "s4",
            Var::Lambda => "lambda",
        }
    }
}

/// Monomial exponent tuple with grevlex ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mono(pub [u8; NVARS]);

impl Mono {
    pub const ONE: Mono = Mono([0; NVARS]);

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    fn mul(&self, other: &Mono) -> Mono {
        let mut out = [0u8; NVARS];
        for i in 0..NVARS {
            out[i] = self.0[i] + other.0[i];
        }
        Mono(out)
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> Ordering {
        let (da, db) = (self.total_degree(), other.total_degree());
        if da != db {
            return da.cmp(&db);
        }
        // grevlex tie-break: larger monomial has the smaller exponent in the
        // last position where they differ
        for i in (0..NVARS).rev() {
            if self.0[i] != other.0[i] {
                return other.0[i].cmp(&self.0[i]);
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multivariate polynomial; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiPoly {
    terms: BTreeMap<Mono, f64>,
}

impl MultiPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        if c != 0.0 {
            p.terms.insert(Mono::ONE, c);
        }
        p
    }

    pub fn var(v: Var) -> Self {
        let mut e = [0u8; NVARS];
        e[v.index()] = 1;
        let mut p = Self::zero();
        p.terms.insert(Mono(e), 1.0);
        p
    }

    pub fn term(c: f64, exps: &[(Var, u8)]) -> Self {
        let mut e = [0u8; NVARS];
        for &(v, k) in exps {
            e[v.index()] += k;
        }
        let mut p = Self::zero();
        if c != 0.0 {
            p.terms.insert(Mono(e), c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &f64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Mono) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Mono::total_degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, v: Var) -> u32 {
        self.terms
            .keys()
            .map(|m| m.0[v.index()] as u32)
            .max()
            .unwrap_or(0)
    }

    /// Variables that actually occur.
    pub fn support(&self) -> Vec<Var> {
        const ALL: [Var; NVARS] = [Var::L1, Var::L2, Var::L3, Var::S3, Var::S4, Var::Lambda];
        ALL.iter()
            .copied()
            .filter(|v| self.degree_in(*v) > 0)
            .collect()
    }

    fn insert(&mut self, m: Mono, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert(*m, *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert(*m, -c);
        }
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -*c;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero();
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= s;
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.insert(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    /// Multiply by a bare monomial (used by the Macaulay expansion).
    pub fn mul_mono(&self, m: &Mono, c: f64) -> Self {
        let mut out = Self::zero();
        for (ma, ca) in &self.terms {
            out.insert(ma.mul(m), ca * c);
        }
        out
    }

    pub fn eval(&self, point: &[f64; NVARS]) -> f64 {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut t = *c;
            for i in 0..NVARS {
                for _ in 0..m.0[i] {
                    t *= point[i];
                }
            }
            acc += t;
        }
        acc
    }

    pub fn partial(&self, v: Var) -> Self {
        let i = v.index();
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            let e = m.0[i];
            if e > 0 {
                let mut exps = m.0;
                exps[i] -= 1;
                out.insert(Mono(exps), c * e as f64);
            }
        }
        out
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Scaled so the largest coefficient magnitude is one. Zero stays zero.
    pub fn normalized(&self) -> Self {
        let m = self.max_abs_coeff();
        if m > 0.0 {
            self.scale(1.0 / m)
        } else {
            self.clone()
        }
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        const NAMES: [&str; NVARS] = ["l1", "l2", "l3", "s3", "s4", "lambda"];
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            if first {
                write!(f, "{c}")?;
                first = false;
            } else if *c >= 0.0 {
                write!(f, " + {c}")?;
            } else {
                write!(f, " - {}", -c)?;
            }
            for i in 0..NVARS {
                match m.0[i] {
                    0 => {}
                    1 => write!(f, "*{}", NAMES[i])?,
                    e => write!(f, "*{}^{}", NAMES[i], e)?,
                }
            }
        }
        Ok(())
    }
}

/// Determinant of a square matrix of polynomials by cofactor expansion.
/// Sizes here are at most 4×4.
pub fn poly_det(m: &[Vec<MultiPoly>]) -> MultiPoly {
    let n = m.len();
    debug_assert!(m.iter().all(|row| row.len() == n));
    match n {
        0 => MultiPoly::constant(1.0),
        1 => m[0][0].clone(),
        2 => m[0][0].mul(&m[1][1]).sub(&m[0][1].mul(&m[1][0])),
        _ => {
            let mut acc = MultiPoly::zero();
            for j in 0..n {
                if m[0][j].is_zero() {
                    continue;
                }
                let minor: Vec<Vec<MultiPoly>> = (1..n)
                    .map(|r| {
                        (0..n)
                            .filter(|&c| c != j)
                            .map(|c| m[r][c].clone())
                            .collect()
                    })
                    .collect();
                let term = m[0][j].mul(&poly_det(&minor));
                acc = if j % 2 == 0 {
                    acc.add(&term)
                } else {
                    acc.sub(&term)
                };
            }
            acc
        }
    }
}

/// Univariate polynomial, coefficients in ascending power order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UniPoly {
    pub coeffs: Vec<f64>,
}

impl UniPoly {
    pub fn zero() -> Self {
        Self { coeffs: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// c0 + c1·x.
    pub fn linear(c0: f64, c1: f64) -> Self {
        Self {
            coeffs: vec![c0, c1],
        }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.trimmed_len().saturating_sub(1)
    }

    fn trimmed_len(&self) -> usize {
        let mut n = self.coeffs.len();
        while n > 0 && self.coeffs[n - 1] == 0.0 {
            n -= 1;
        }
        n
    }

    pub fn is_zero(&self, eps: f64) -> bool {
        self.coeffs.iter().all(|c| c.abs() <= eps)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn deriv(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::zero();
        }
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0.0; n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        Self { coeffs: out }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Self::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self { coeffs: out }
    }

    /// Scaled so the largest coefficient magnitude is one; zero stays zero.
    pub fn normalized(&self) -> Self {
        let m = self.max_abs_coeff();
        if m > 0.0 {
            self.scale(1.0 / m)
        } else {
            self.clone()
        }
    }

    /// All complex roots via the balanced companion matrix. Leading
    /// coefficients below `rel_eps`·max are trimmed first.
    pub fn roots(&self, rel_eps: f64) -> Vec<Complex<f64>> {
        let max = self.max_abs_coeff();
        if max == 0.0 {
            return vec![];
        }
        let tol = rel_eps * max;
        let mut n = self.coeffs.len();
        while n > 0 && self.coeffs[n - 1].abs() <= tol {
            n -= 1;
        }
        if n <= 1 {
            return vec![];
        }
        let deg = n - 1;
        let lead = self.coeffs[deg];
        let mut comp = DMatrix::<f64>::zeros(deg, deg);
        for i in 1..deg {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..deg {
            comp[(i, deg - 1)] = -self.coeffs[i] / lead;
        }
        balance_in_place(&mut comp);
        match nalgebra::linalg::Schur::try_new(comp, 1e-14, 200) {
            Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
            None => vec![],
        }
    }
}

/// Parlett–Reinsch balancing; brings companion matrices of poorly scaled
/// polynomials into a range where the QR iteration is accurate.
fn balance_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    for _ in 0..30 {
        let mut converged = true;
        for i in 0..n {
            let mut row_norm = 0.0;
            let mut col_norm = 0.0;
            for j in 0..n {
                if j != i {
                    row_norm += m[(i, j)].abs();
                    col_norm += m[(j, i)].abs();
                }
            }
            if row_norm == 0.0 || col_norm == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let mut c = col_norm;
            let s = col_norm + row_norm;
            while c < row_norm / radix {
                c *= radix * radix;
                f *= radix;
            }
            while c > row_norm * radix {
                c /= radix * radix;
                f /= radix;
            }
            if (c + row_norm / f) < 0.95 * s && f != 1.0 {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
}

/// 3-vector of univariate polynomials.
pub type UniVec3 = [UniPoly; 3];

pub fn unival_cross(a: &UniVec3, b: &UniVec3) -> UniVec3 {
    [
        a[1].mul(&b[2]).sub(&a[2].mul(&b[1])),
        a[2].mul(&b[0]).sub(&a[0].mul(&b[2])),
        a[0].mul(&b[1]).sub(&a[1].mul(&b[0])),
    ]
}

pub fn unival_dot(a: &UniVec3, b: &UniVec3) -> UniPoly {
    a[0].mul(&b[0]).add(&a[1].mul(&b[1])).add(&a[2].mul(&b[2]))
}

pub fn unival_eval(a: &UniVec3, x: f64) -> nalgebra::Vector3<f64> {
    nalgebra::Vector3::new(a[0].eval(x), a[1].eval(x), a[2].eval(x))
}

/// Dot product of a constant vector with a polynomial vector.
pub fn unival_dot_vec(v: &nalgebra::Vector3<f64>, a: &UniVec3) -> UniPoly {
    a[0].scale(v.x).add(&a[1].scale(v.y)).add(&a[2].scale(v.z))
}

/// Determinant of a 3×3 matrix of univariate polynomials.
pub fn uni_det3(m: &[[UniPoly; 3]; 3]) -> UniPoly {
    let c0 = m[1][1].mul(&m[2][2]).sub(&m[1][2].mul(&m[2][1]));
    let c1 = m[1][0].mul(&m[2][2]).sub(&m[1][2].mul(&m[2][0]));
    let c2 = m[1][0].mul(&m[2][1]).sub(&m[1][1].mul(&m[2][0]));
    m[0][0].mul(&c0).sub(&m[0][1].mul(&c1)).add(&m[0][2].mul(&c2))
}
