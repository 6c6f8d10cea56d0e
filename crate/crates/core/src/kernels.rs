//! On-the-fly element stiffness matrix-vector products.
//!
//! The `exact` family contracts a constant material with the precomputed
//! integrals `B`; the `quad` family evaluates gradients at the stiffness rule
//! points through `D` and supports materials that vary inside the element.
//! Elastic vectors are stored component-blocked: `u = [u^(1); u^(2); u^(3)]`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::refelement::{KernelTables, SYM_PAIRS};
use crate::refgeom::BarycentricPoint;

/// Affine map `x = v0 + J x_ref` of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub origin: Vector3<f64>,
    /// `J[(i, j)] = d x_i / d xref_j`; columns are the edges from `v0`.
    pub j: Matrix3<f64>,
    /// `J^{-1}`; physical derivatives are `d_p = sum_a jinv[(a, p)] dref_a`.
    pub jinv: Matrix3<f64>,
    /// `det J = |e| / |e_ref|`.
    pub det: f64,
}

impl ElementGeometry {
    /// Geometry of the tetrahedron whose vertices map to the reference
    /// vertices `(0,0,0), (1,0,0), (0,1,0), (0,0,1)` in that order.
    pub fn from_vertices(v: &[[f64; 3]; 4]) -> Result<Self> {
        let o = Vector3::from(v[0]);
        let j = Matrix3::from_columns(&[
            Vector3::from(v[1]) - o,
            Vector3::from(v[2]) - o,
            Vector3::from(v[3]) - o,
        ]);
        Self::from_jacobian(o, j)
    }

    pub fn from_jacobian(origin: Vector3<f64>, j: Matrix3<f64>) -> Result<Self> {
        let det = j.determinant();
        let scale = j.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        if !(det > 1e-14 * scale.powi(3)) {
            return Err(Error::InvertedElement { det });
        }
        let jinv = j.try_inverse().ok_or(Error::InvertedElement { det })?;
        Ok(ElementGeometry {
            origin,
            j,
            jinv,
            det,
        })
    }

    pub fn identity() -> Self {
        ElementGeometry {
            origin: Vector3::zeros(),
            j: Matrix3::identity(),
            jinv: Matrix3::identity(),
            det: 1.0,
        }
    }

    pub fn volume(&self) -> f64 {
        self.det / 6.0
    }

    pub fn map(&self, xref: &[f64; 3]) -> [f64; 3] {
        let x = self.origin + self.j * Vector3::from(*xref);
        [x[0], x[1], x[2]]
    }

    pub fn map_bary(&self, b: &BarycentricPoint) -> [f64; 3] {
        self.map(&b.cartesian())
    }

    /// `det * J^{-1} J^{-T}`: the reference-frame tensor for a unit coefficient.
    pub fn metric(&self) -> Matrix3<f64> {
        self.jinv * self.jinv.transpose() * self.det
    }
}

/// Symmetric 3x3 tensor stored in [`SYM_PAIRS`] order.
pub type Sym3 = [f64; 6];

fn sym_from_matrix(m: &Matrix3<f64>) -> Sym3 {
    SYM_PAIRS.map(|(i, j)| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Material tensor per stiffness-rule point, weights included.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSamples {
    pub c: Vec<Sym3>,
}

/// Constant-coefficient tensor `c det J^{-1} J^{-T}`.
pub fn transform_scalar_constant(c: f64, geom: &ElementGeometry) -> Sym3 {
    sym_from_matrix(&(geom.metric() * c))
}

/// `omega'_k c(x'_k) det J^{-1} J^{-T}` for every rule point.
pub fn transform_scalar(c_at_points: &[f64], weights: &[f64], geom: &ElementGeometry) -> ScalarSamples {
    let m = sym_from_matrix(&geom.metric());
    ScalarSamples {
        c: c_at_points
            .iter()
            .zip(weights)
            .map(|(c, w)| m.map(|x| x * c * w))
            .collect(),
    }
}

/// Count of the dominant matrix-vector products, for cost audits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    /// Products with `n x n` matrices.
    pub nn: usize,
    /// Products with `n' x n` matrices (or their transposes).
    pub qn: usize,
}

/// `y += a * M x` for column-major `M` (`rows x cols`).
#[inline]
fn gemv_acc(m: &[f64], rows: usize, x: &[f64], a: f64, y: &mut [f64]) {
    for (j, &xj) in x.iter().enumerate() {
        let s = a * xj;
        if s == 0.0 {
            continue;
        }
        let col = &m[j * rows..(j + 1) * rows];
        for (yi, mi) in y.iter_mut().zip(col) {
            *yi += s * mi;
        }
    }
}

/// `y += M^T x` for column-major `M` (`rows x cols`).
#[inline]
fn gemv_t_acc(m: &[f64], rows: usize, x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        let col = &m[i * rows..(i + 1) * rows];
        *yi += col.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Algorithm A1-A2: `out = A u` for a constant symmetric tensor.
pub fn matvec_exact_scalar(t: &KernelTables, c: &Sym3, u: &[f64], out: &mut [f64], ops: &mut OpCount) {
    let n = t.n();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (p, bhat) in t.bhat.iter().enumerate() {
        gemv_acc(bhat.as_slice(), n, u, c[p], out);
        ops.nn += 1;
    }
}

/// Algorithm B1-B3: `out = A u` with per-point tensors.
pub fn matvec_quad_scalar(
    t: &KernelTables,
    s: &ScalarSamples,
    u: &[f64],
    out: &mut [f64],
    ops: &mut OpCount,
) {
    let nq = t.n_quad();
    let mut eps = [vec![0.0; nq], vec![0.0; nq], vec![0.0; nq]];
    for (d, e) in eps.iter_mut().enumerate() {
        gemv_acc(t.d[d].as_slice(), nq, u, 1.0, e);
        ops.qn += 1;
    }
    let mut sig = [vec![0.0; nq], vec![0.0; nq], vec![0.0; nq]];
    for k in 0..nq {
        let c = &s.c[k];
        let (e0, e1, e2) = (eps[0][k], eps[1][k], eps[2][k]);
        sig[0][k] = c[0] * e0 + c[3] * e1 + c[4] * e2;
        sig[1][k] = c[3] * e0 + c[1] * e1 + c[5] * e2;
        sig[2][k] = c[4] * e0 + c[5] * e1 + c[2] * e2;
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    for (d, sg) in sig.iter().enumerate() {
        gemv_t_acc(t.d[d].as_slice(), nq, sg, out);
        ops.qn += 1;
    }
}

/// Fourth-order elasticity tensor `C[i][j][k][l]` with
/// `[C : grad u]_ij = sum_kl C_ijkl d_l u_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticTensor(pub [[[[f64; 3]; 3]; 3]; 3]);

impl ElasticTensor {
    pub fn isotropic(lambda: f64, mu: f64) -> Self {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut c = [[[[0.0; 3]; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        c[i][j][k][l] = lambda * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
                    }
                }
            }
        }
        ElasticTensor(c)
    }

    /// Builds the tensor from a symmetric 6x6 Voigt matrix
    /// (order 11, 22, 33, 23, 13, 12).
    pub fn from_voigt(v: &[[f64; 6]; 6]) -> Self {
        let mut c = [[[[0.0; 3]; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        c[i][j][k][l] = v[voigt(i, j)][voigt(k, l)];
                    }
                }
            }
        }
        ElasticTensor(c)
    }

    pub fn to_voigt(&self) -> [[f64; 6]; 6] {
        let mut v = [[0.0; 6]; 6];
        for (i, j) in VOIGT {
            for (k, l) in VOIGT {
                v[voigt(i, j)][voigt(k, l)] = self.0[i][j][k][l];
            }
        }
        v
    }

    /// Largest violation of the minor and major symmetries.
    pub fn symmetry_defect(&self) -> f64 {
        let c = &self.0;
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        d = d
                            .max((c[i][j][k][l] - c[j][i][k][l]).abs())
                            .max((c[i][j][k][l] - c[i][j][l][k]).abs())
                            .max((c[i][j][k][l] - c[k][l][i][j]).abs());
                    }
                }
            }
        }
        d
    }
}

const VOIGT: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

fn voigt(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) => 3,
        (0, 2) => 4,
        _ => 5,
    }
}

/// Reference-frame tensor `C~[iD][iV][jV][jD]` (flattened, 81 entries).
pub type RefElastic = [f64; 81];

#[inline]
fn idx4(a: usize, b: usize, c: usize, d: usize) -> usize {
    ((a * 3 + b) * 3 + c) * 3 + d
}

/// `scale * det * sum_pq G[a,p] C[p,iV,jV,q] G[b,q]` with `G = J^{-1}`.
pub fn transform_elastic(c: &ElasticTensor, geom: &ElementGeometry, scale: f64) -> RefElastic {
    let g = &geom.jinv;
    let mut out = [0.0; 81];
    for a in 0..3 {
        for iv in 0..3 {
            for jv in 0..3 {
                for b in 0..3 {
                    let mut s = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            s += g[(a, p)] * c.0[p][iv][jv][q] * g[(b, q)];
                        }
                    }
                    out[idx4(a, iv, jv, b)] = scale * geom.det * s;
                }
            }
        }
    }
    out
}

/// Per-point elastic material for the quadrature family.
#[derive(Debug, Clone, PartialEq)]
pub enum ElasticSamples {
    /// Transformed tensor per point (weights included).
    Full(Vec<RefElastic>),
    /// Physical Voigt matrices per point; `detw[k] = det J * omega'_k`.
    Voigt {
        jinv: Matrix3<f64>,
        detw: Vec<f64>,
        c: Vec<[[f64; 6]; 6]>,
    },
    /// Isotropic Lame parameters per point.
    Isotropic {
        jinv: Matrix3<f64>,
        detw: Vec<f64>,
        lambda: Vec<f64>,
        mu: Vec<f64>,
    },
}

impl ElasticSamples {
    pub fn full(c: &[ElasticTensor], weights: &[f64], geom: &ElementGeometry) -> Self {
        ElasticSamples::Full(
            c.iter()
                .zip(weights)
                .map(|(c, w)| transform_elastic(c, geom, *w))
                .collect(),
        )
    }

    pub fn voigt(c: &[ElasticTensor], weights: &[f64], geom: &ElementGeometry) -> Self {
        ElasticSamples::Voigt {
            jinv: geom.jinv,
            detw: weights.iter().map(|w| w * geom.det).collect(),
            c: c.iter().map(|c| c.to_voigt()).collect(),
        }
    }

    pub fn isotropic(lambda: &[f64], mu: &[f64], weights: &[f64], geom: &ElementGeometry) -> Self {
        ElasticSamples::Isotropic {
            jinv: geom.jinv,
            detw: weights.iter().map(|w| w * geom.det).collect(),
            lambda: lambda.to_vec(),
            mu: mu.to_vec(),
        }
    }
}

/// Algorithm A1*-A2*: `out = A u` for a constant transformed tensor.
pub fn matvec_exact_elastic(
    t: &KernelTables,
    c: &RefElastic,
    u: &[f64],
    out: &mut [f64],
    ops: &mut OpCount,
) {
    let n = t.n();
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut eps = vec![0.0; n];
    for id in 0..3 {
        for jd in 0..3 {
            let b = t.b[id][jd].as_slice();
            for jv in 0..3 {
                eps.iter_mut().for_each(|v| *v = 0.0);
                gemv_acc(b, n, &u[jv * n..(jv + 1) * n], 1.0, &mut eps);
                ops.nn += 1;
                for iv in 0..3 {
                    let coef = c[idx4(id, iv, jv, jd)];
                    if coef != 0.0 {
                        for (o, e) in out[iv * n..(iv + 1) * n].iter_mut().zip(&eps) {
                            *o += coef * e;
                        }
                    }
                }
            }
        }
    }
}

/// Algorithm B1*-B3*: `out = A u` with per-point tensors.
pub fn matvec_quad_elastic(
    t: &KernelTables,
    s: &ElasticSamples,
    u: &[f64],
    out: &mut [f64],
    ops: &mut OpCount,
) {
    let n = t.n();
    let nq = t.n_quad();
    // eps[jd][jv][k]
    let mut eps = vec![0.0; 9 * nq];
    for jd in 0..3 {
        for jv in 0..3 {
            let e = &mut eps[(jd * 3 + jv) * nq..(jd * 3 + jv + 1) * nq];
            gemv_acc(t.d[jd].as_slice(), nq, &u[jv * n..(jv + 1) * n], 1.0, e);
            ops.qn += 1;
        }
    }
    let mut sig = vec![0.0; 9 * nq];
    match s {
        ElasticSamples::Full(c) => {
            for k in 0..nq {
                let ck = &c[k];
                for id in 0..3 {
                    for iv in 0..3 {
                        let mut acc = 0.0;
                        for jd in 0..3 {
                            for jv in 0..3 {
                                acc += ck[idx4(id, iv, jv, jd)] * eps[(jd * 3 + jv) * nq + k];
                            }
                        }
                        sig[(id * 3 + iv) * nq + k] = acc;
                    }
                }
            }
        }
        ElasticSamples::Voigt { jinv, detw, c } => {
            for k in 0..nq {
                let h = physical_gradient(jinv, &eps, nq, k);
                let strain = [
                    h[(0, 0)],
                    h[(1, 1)],
                    h[(2, 2)],
                    h[(1, 2)] + h[(2, 1)],
                    h[(0, 2)] + h[(2, 0)],
                    h[(0, 1)] + h[(1, 0)],
                ];
                let mut sv = [0.0; 6];
                for (a, sa) in sv.iter_mut().enumerate() {
                    *sa = (0..6).map(|b| c[k][a][b] * strain[b]).sum();
                }
                let stress = Matrix3::new(
                    sv[0], sv[5], sv[4], //
                    sv[5], sv[1], sv[3], //
                    sv[4], sv[3], sv[2],
                );
                scatter_stress(jinv, &stress, detw[k], &mut sig, nq, k);
            }
        }
        ElasticSamples::Isotropic {
            jinv,
            detw,
            lambda,
            mu,
        } => {
            for k in 0..nq {
                let h = physical_gradient(jinv, &eps, nq, k);
                let mut stress = (h + h.transpose()) * mu[k];
                let tr = lambda[k] * h.trace();
                for i in 0..3 {
                    stress[(i, i)] += tr;
                }
                scatter_stress(jinv, &stress, detw[k], &mut sig, nq, k);
            }
        }
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    for id in 0..3 {
        for iv in 0..3 {
            gemv_t_acc(
                t.d[id].as_slice(),
                nq,
                &sig[(id * 3 + iv) * nq..(id * 3 + iv + 1) * nq],
                &mut out[iv * n..(iv + 1) * n],
            );
            ops.qn += 1;
        }
    }
}

/// `H[(v, q)] = d_q u_v` at point `k` from reference derivatives.
#[inline]
fn physical_gradient(jinv: &Matrix3<f64>, eps: &[f64], nq: usize, k: usize) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for v in 0..3 {
        for q in 0..3 {
            h[(v, q)] = (0..3).map(|b| jinv[(b, q)] * eps[(b * 3 + v) * nq + k]).sum();
        }
    }
    h
}

/// `sig[a][v][k] = detw * sum_p G[a,p] S[p,v]`.
#[inline]
fn scatter_stress(jinv: &Matrix3<f64>, s: &Matrix3<f64>, detw: f64, sig: &mut [f64], nq: usize, k: usize) {
    for a in 0..3 {
        for v in 0..3 {
            sig[(a * 3 + v) * nq + k] = detw * (0..3).map(|p| jinv[(a, p)] * s[(p, v)]).sum::<f64>();
        }
    }
}

/// Lumped mass diagonal `det J * omega_i * rho(x_i)`.
pub fn mass_diagonal(t: &KernelTables, geom: &ElementGeometry, rho_at_nodes: &[f64]) -> Result<Vec<f64>> {
    t.mass_weights
        .iter()
        .zip(rho_at_nodes)
        .map(|(w, &r)| {
            if !(r > 0.0) {
                Err(Error::NonpositiveDensity(r))
            } else {
                Ok(geom.det * w * r)
            }
        })
        .collect()
}
