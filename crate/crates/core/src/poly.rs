//! Polynomials on the reference tetrahedron.
//!
//! [`BaryPoly`] keeps terms as barycentric monomials `x1^a x2^b x3^c x4^d`;
//! this is the natural form for symmetric generators since a symmetry of the
//! tetrahedron only permutes exponents. [`Poly`] is the canonical Cartesian
//! form in `(x1, x2, x3)` used for linear algebra (rank tests, nodal bases,
//! derivatives). Both integrate exactly through [`integrate_monomial`].

use std::collections::{BTreeMap, HashMap};
use std::ops::{Add, Mul, Sub};

use crate::refgeom::{integrate_monomial, permute4, MonomialExponent};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaryTerm {
    pub coef: f64,
    pub exps: [u32; 4],
}

/// Polynomial written in barycentric monomials (not a unique representation).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaryPoly {
    pub terms: Vec<BaryTerm>,
}

impl BaryPoly {
    pub fn monomial(exps: [u32; 4]) -> Self {
        BaryPoly {
            terms: vec![BaryTerm { coef: 1.0, exps }],
        }
    }

    pub fn constant(c: f64) -> Self {
        BaryPoly {
            terms: vec![BaryTerm {
                coef: c,
                exps: [0; 4],
            }],
        }
    }

    /// Face bubble `x1 x2 x3`.
    pub fn face_bubble() -> Self {
        Self::monomial([1, 1, 1, 0])
    }

    /// Interior bubble `x1 x2 x3 x4`.
    pub fn interior_bubble() -> Self {
        Self::monomial([1, 1, 1, 1])
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exps.iter().sum()).max().unwrap_or(0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        BaryPoly {
            terms: self
                .terms
                .iter()
                .map(|t| BaryTerm {
                    coef: t.coef * s,
                    exps: t.exps,
                })
                .collect(),
        }
    }

    /// Merges equal exponents and drops zero coefficients.
    pub fn simplified(&self) -> Self {
        let mut map: BTreeMap<[u32; 4], f64> = BTreeMap::new();
        for t in &self.terms {
            *map.entry(t.exps).or_insert(0.0) += t.coef;
        }
        BaryPoly {
            terms: map
                .into_iter()
                .filter(|(_, c)| *c != 0.0)
                .map(|(exps, coef)| BaryTerm { coef, exps })
                .collect(),
        }
    }

    /// `f o s` for the symmetry `s` that permutes barycentric coordinates.
    pub fn permuted(&self, perm: &[usize; 4]) -> Self {
        BaryPoly {
            terms: self
                .terms
                .iter()
                .map(|t| BaryTerm {
                    coef: t.coef,
                    exps: permute4(&t.exps, perm),
                })
                .collect(),
        }
    }

    pub fn eval(&self, x: &[f64; 4]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * mono_eval4(x, &t.exps))
            .sum()
    }

    /// Gradient with respect to the four barycentric coordinates, treated
    /// as independent variables.
    pub fn grad_bary(&self, x: &[f64; 4]) -> [f64; 4] {
        let mut g = [0.0; 4];
        for t in &self.terms {
            for (k, gk) in g.iter_mut().enumerate() {
                let e = t.exps[k];
                if e == 0 {
                    continue;
                }
                let mut v = t.coef * e as f64;
                for (j, xj) in x.iter().enumerate() {
                    let p = if j == k { e - 1 } else { t.exps[j] };
                    v *= powu(*xj, p);
                }
                *gk += v;
            }
        }
        g
    }

    pub fn integrate(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * integrate_monomial(MonomialExponent(t.exps)))
            .sum()
    }

    /// Sum of `|coef| * integral(monomial)`; a positive scale for residuals.
    pub fn integral_scale(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef.abs() * integrate_monomial(MonomialExponent(t.exps)))
            .sum()
    }

    pub fn to_cartesian(&self) -> Poly {
        let mut out = Poly::zero();
        for t in &self.terms {
            out.add_scaled(&Poly::from_bary_monomial(t.exps), t.coef);
        }
        out
    }
}

impl Mul for &BaryPoly {
    type Output = BaryPoly;
    fn mul(self, rhs: &BaryPoly) -> BaryPoly {
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for a in &self.terms {
            for b in &rhs.terms {
                terms.push(BaryTerm {
                    coef: a.coef * b.coef,
                    exps: [
                        a.exps[0] + b.exps[0],
                        a.exps[1] + b.exps[1],
                        a.exps[2] + b.exps[2],
                        a.exps[3] + b.exps[3],
                    ],
                });
            }
        }
        BaryPoly { terms }.simplified()
    }
}

impl Add for &BaryPoly {
    type Output = BaryPoly;
    fn add(self, rhs: &BaryPoly) -> BaryPoly {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&rhs.terms);
        BaryPoly { terms }.simplified()
    }
}

#[inline]
pub(crate) fn powu(x: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(e as i32),
    }
}

#[inline]
fn mono_eval4(x: &[f64; 4], e: &[u32; 4]) -> f64 {
    powu(x[0], e[0]) * powu(x[1], e[1]) * powu(x[2], e[2]) * powu(x[3], e[3])
}

/// Polynomial in Cartesian reference coordinates `(x1, x2, x3)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    pub coeffs: BTreeMap<[u8; 3], f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Poly::zero();
        if c != 0.0 {
            p.coeffs.insert([0, 0, 0], c);
        }
        p
    }

    pub fn monomial(e: [u8; 3]) -> Self {
        let mut p = Poly::zero();
        p.coeffs.insert(e, 1.0);
        p
    }

    /// Cartesian coordinate `x_i` (0-based).
    pub fn coord(i: usize) -> Self {
        let mut e = [0u8; 3];
        e[i] = 1;
        Poly::monomial(e)
    }

    /// Expands `x1^a x2^b x3^c (1 - x1 - x2 - x3)^d`.
    pub fn from_bary_monomial(exps: [u32; 4]) -> Self {
        let d = exps[3];
        let mut out = Poly::zero();
        // multinomial expansion of (1 - x - y - z)^d
        for j in 0..=d {
            for k in 0..=(d - j) {
                for l in 0..=(d - j - k) {
                    let i = d - j - k - l;
                    let coef = multinomial(d, &[i, j, k, l])
                        * if (j + k + l) % 2 == 0 { 1.0 } else { -1.0 };
                    let e = [
                        (exps[0] + j) as u8,
                        (exps[1] + k) as u8,
                        (exps[2] + l) as u8,
                    ];
                    *out.coeffs.entry(e).or_insert(0.0) += coef;
                }
            }
        }
        out.coeffs.retain(|_, c| *c != 0.0);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|c| *c == 0.0)
    }

    pub fn degree(&self) -> u32 {
        self.coeffs
            .iter()
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, _)| e.iter().map(|&x| x as u32).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn add_scaled(&mut self, other: &Poly, s: f64) {
        for (e, c) in &other.coeffs {
            *self.coeffs.entry(*e).or_insert(0.0) += s * c;
        }
    }

    pub fn scaled(&self, s: f64) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|(e, c)| (*e, c * s)).collect(),
        }
    }

    /// Partial derivative with respect to `x_{i+1}`.
    pub fn derivative(&self, i: usize) -> Poly {
        let mut out = Poly::zero();
        for (e, c) in &self.coeffs {
            if e[i] == 0 || *c == 0.0 {
                continue;
            }
            let mut f = *e;
            f[i] -= 1;
            *out.coeffs.entry(f).or_insert(0.0) += c * e[i] as f64;
        }
        out
    }

    pub fn gradient(&self) -> [Poly; 3] {
        [self.derivative(0), self.derivative(1), self.derivative(2)]
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        self.coeffs
            .iter()
            .map(|(e, c)| {
                c * powu(x[0], e[0] as u32) * powu(x[1], e[1] as u32) * powu(x[2], e[2] as u32)
            })
            .sum()
    }

    /// Evaluates at a barycentric point (uses the first three coordinates).
    pub fn eval_bary(&self, x: &[f64; 4]) -> f64 {
        self.eval(&[x[0], x[1], x[2]])
    }

    pub fn integrate(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(e, c)| {
                c * integrate_monomial(MonomialExponent([e[0] as u32, e[1] as u32, e[2] as u32, 0]))
            })
            .sum()
    }

    /// Sum of `|coef| * integral(monomial)`.
    pub fn integral_scale(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(e, c)| {
                c.abs() * integrate_monomial(MonomialExponent([e[0] as u32, e[1] as u32, e[2] as u32, 0]))
            })
            .sum()
    }

    /// Same polynomial written in barycentric monomials (`x_i = lambda_i`).
    pub fn to_bary(&self) -> BaryPoly {
        BaryPoly {
            terms: self
                .coeffs
                .iter()
                .filter(|(_, c)| **c != 0.0)
                .map(|(e, c)| BaryTerm {
                    coef: *c,
                    exps: [e[0] as u32, e[1] as u32, e[2] as u32, 0],
                })
                .collect(),
        }
    }

    /// Coefficient vector with respect to `index`; monomials outside the
    /// index are ignored (callers size the index by degree).
    pub fn coefficient_vector(&self, index: &MonomialIndex) -> Vec<f64> {
        let mut v = vec![0.0; index.len()];
        for (e, c) in &self.coeffs {
            if let Some(&k) = index.lookup.get(e) {
                v[k] += c;
            }
        }
        v
    }

    pub fn from_coefficients(index: &MonomialIndex, v: &[f64]) -> Poly {
        let mut p = Poly::zero();
        for (k, &c) in v.iter().enumerate() {
            if c != 0.0 {
                p.coeffs.insert(index.monomials[k], c);
            }
        }
        p
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (a, ca) in &self.coeffs {
            for (b, cb) in &rhs.coeffs {
                let e = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
                *out.coeffs.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        out
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }
}

fn multinomial(n: u32, parts: &[u32]) -> f64 {
    let mut r = 1.0;
    let mut t = 0u32;
    for &p in parts {
        for j in 1..=p {
            t += 1;
            r *= t as f64 / j as f64;
        }
    }
    debug_assert_eq!(t, n);
    r
}

/// Graded enumeration of the Cartesian monomials of total degree `<= degree`.
#[derive(Debug, Clone)]
pub struct MonomialIndex {
    pub degree: u32,
    pub monomials: Vec<[u8; 3]>,
    lookup: HashMap<[u8; 3], usize>,
}

impl MonomialIndex {
    pub fn new(degree: u32) -> Self {
        let mut monomials = Vec::new();
        for total in 0..=degree {
            for a in (0..=total).rev() {
                for b in (0..=(total - a)).rev() {
                    let c = total - a - b;
                    monomials.push([a as u8, b as u8, c as u8]);
                }
            }
        }
        let lookup = monomials.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        MonomialIndex {
            degree,
            monomials,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn index_of(&self, e: &[u8; 3]) -> Option<usize> {
        self.lookup.get(e).copied()
    }

    /// Values of every monomial at `x`.
    pub fn eval_all(&self, x: &[f64; 3]) -> Vec<f64> {
        self.monomials
            .iter()
            .map(|e| powu(x[0], e[0] as u32) * powu(x[1], e[1] as u32) * powu(x[2], e[2] as u32))
            .collect()
    }
}
