//! Enriched element spaces, nodal bases, mass-lumping nodes and weights, and
//! the precomputed reference kernel tables.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::element_id::ElementId;
use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::{BaryPoly, MonomialIndex, Poly};
use crate::quadrature::{
    builtin_stiffness_rule, GeneratorSet, QuadratureRule, RuleEntry, RuleFile, RuleRole,
    SymmetricGenerator,
};
use crate::refgeom::{
    integrate_monomial, permutations, BarycentricPoint, MonomialExponent, OrbitType,
    SymmetricOrbit,
};

/// Relative singular-value threshold for rank decisions on spanning sets.
const SPAN_TOL: f64 = 1e-10;
/// Relative threshold used by the spurious-mode screen.
pub const SPURIOUS_TOL: f64 = 1e-8;

/// Bary monomials of total degree `k`; they span `P_k` on the element.
fn homogeneous(k: u32) -> Vec<BaryPoly> {
    let mut out = Vec::new();
    for a in 0..=k {
        for b in 0..=(k - a) {
            for c in 0..=(k - a - b) {
                out.push(BaryPoly::monomial([a, b, c, k - a - b - c]));
            }
        }
    }
    out
}

fn face_bubbles() -> Vec<BaryPoly> {
    (0..4)
        .map(|skip| {
            let mut e = [1u32; 4];
            e[skip] = 0;
            BaryPoly::monomial(e)
        })
        .collect()
}

fn products(a: &[BaryPoly], b: &[BaryPoly]) -> Vec<BaryPoly> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// A finite-dimensional polynomial space on the reference element.
#[derive(Debug, Clone)]
pub struct ElementSpace {
    pub label: String,
    pub id: Option<ElementId>,
    /// Largest `p` with `P_p` contained in the space.
    pub degree: u32,
    pub index: MonomialIndex,
    /// Linearly independent polynomials spanning the space.
    pub basis: Vec<Poly>,
}

impl ElementSpace {
    /// Span of `spanning`, de-duplicated by rank.
    pub fn from_spanning(label: impl Into<String>, degree: u32, spanning: &[BaryPoly]) -> Self {
        let max_deg = spanning.iter().map(|p| p.degree()).max().unwrap_or(0);
        let index = MonomialIndex::new(max_deg);
        let polys: Vec<Poly> = spanning.iter().map(|p| p.to_cartesian()).collect();
        let rows: Vec<Vec<f64>> = polys.iter().map(|p| p.coefficient_vector(&index)).collect();
        let keep = linalg::independent_rows(&rows, SPAN_TOL);
        ElementSpace {
            label: label.into(),
            id: None,
            degree,
            index,
            basis: keep.into_iter().map(|i| polys[i].clone()).collect(),
        }
    }

    /// Full polynomial space `P_k`.
    pub fn polynomial(k: u32) -> Self {
        Self::from_spanning(format!("P{k}"), k, &homogeneous(k))
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn max_degree(&self) -> u32 {
        self.basis.iter().map(|p| p.degree()).max().unwrap_or(0)
    }

    /// Coefficient matrix, one row per basis polynomial.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = self
            .basis
            .iter()
            .map(|p| p.coefficient_vector(&self.index))
            .collect();
        linalg::rows_to_matrix(&rows, self.index.len())
    }

    /// Largest relative distance of `polys` from the space.
    pub fn span_residual(&self, polys: &[Poly]) -> f64 {
        let deg = polys
            .iter()
            .map(|p| p.degree())
            .chain(std::iter::once(self.max_degree()))
            .max()
            .unwrap_or(0);
        let index = MonomialIndex::new(deg);
        let own: Vec<Vec<f64>> = self.basis.iter().map(|p| p.coefficient_vector(&index)).collect();
        let q = linalg::row_space_basis(&linalg::rows_to_matrix(&own, index.len()), SPAN_TOL);
        let other: Vec<Vec<f64>> = polys.iter().map(|p| p.coefficient_vector(&index)).collect();
        linalg::max_relative_residual(&q, &linalg::rows_to_matrix(&other, index.len()))
    }

    pub fn contains_polynomials(&self, k: u32) -> bool {
        let pk: Vec<Poly> = homogeneous(k).iter().map(|p| p.to_cartesian()).collect();
        self.span_residual(&pk) < 1e-9
    }

    /// Whether every permuted copy of every basis function lies in the space.
    pub fn is_symmetric(&self) -> bool {
        let images: Vec<Poly> = self
            .basis
            .iter()
            .flat_map(|p| {
                let b = p.to_bary();
                permutations().iter().map(move |s| b.permuted(s).to_cartesian())
            })
            .collect();
        self.span_residual(&images) < 1e-9
    }
}

/// The space `U` of one of the five elements.
pub fn element_space(id: ElementId) -> ElementSpace {
    let bf = face_bubbles();
    let be = vec![BaryPoly::interior_bubble()];
    let mut span = homogeneous(id.degree());
    let label = match id {
        ElementId::P2n15 => {
            span.extend(bf);
            span.extend(be);
            "P2 + Bf + Be"
        }
        ElementId::P3n32 => {
            span.extend(products(&bf, &homogeneous(1)));
            span.extend(products(&be, &homogeneous(1)));
            "P3 + Bf P1 + Be P1"
        }
        ElementId::P4n60 | ElementId::P4n61 => {
            span.extend(products(&bf, &homogeneous(2)));
            span.extend(products(&be, &homogeneous(2)));
            span.extend(products(&be, &bf));
            if id == ElementId::P4n61 {
                span.extend(products(&be, &be));
                "P4 + Bf P2 + Be(P2 + Bf + Be)"
            } else {
                "P4 + Bf P2 + Be(P2 + Bf)"
            }
        }
        ElementId::P4n65 => {
            span.extend(products(&bf, &homogeneous(2)));
            span.extend(products(&bf, &bf));
            span.extend(products(&be, &homogeneous(2)));
            span.extend(products(&be, &bf));
            span.extend(products(&be, &be));
            "P4 + Bf(P2 + Bf) + Be(P2 + Bf + Be)"
        }
    };
    let mut s = ElementSpace::from_spanning(label, id.degree(), &span);
    s.id = Some(id);
    s
}

/// Symmetric generator set spanning all first partial derivatives of the space.
pub fn derivative_space(space: &ElementSpace) -> GeneratorSet {
    let derivs: Vec<Poly> = space
        .basis
        .iter()
        .flat_map(|p| p.gradient())
        .filter(|p| !p.is_zero())
        .collect();
    let index = MonomialIndex::new(space.max_degree().saturating_sub(1));
    let rows: Vec<Vec<f64>> = derivs.iter().map(|p| p.coefficient_vector(&index)).collect();
    let keep = linalg::independent_rows(&rows, SPAN_TOL);
    GeneratorSet {
        label: format!("D({})", space.label),
        generators: keep
            .into_iter()
            .enumerate()
            .map(|(k, i)| SymmetricGenerator::new(format!("d{k}"), derivs[i].to_bary()))
            .collect(),
    }
}

/// Largest relative distance of `P_{p-1} x D(U)` from the symmetric span of
/// `gens`; small values mean the stiffness integrands are covered.
pub fn stiffness_containment_residual(space: &ElementSpace, gens: &GeneratorSet) -> f64 {
    let dspace = derivative_space(space);
    let lower: Vec<Poly> = homogeneous(space.degree.saturating_sub(1))
        .iter()
        .map(|p| p.to_cartesian())
        .collect();
    let products: Vec<Poly> = lower
        .iter()
        .flat_map(|a| dspace.generators.iter().map(move |g| a * &g.poly.to_cartesian()))
        .collect();
    let images: Vec<Poly> = gens
        .generators
        .iter()
        .flat_map(|g| g.images())
        .map(|p| p.to_cartesian())
        .collect();
    let deg = products
        .iter()
        .chain(&images)
        .map(|p| p.degree())
        .max()
        .unwrap_or(0);
    let index = MonomialIndex::new(deg);
    let v: Vec<Vec<f64>> = images.iter().map(|p| p.coefficient_vector(&index)).collect();
    let q = linalg::row_space_basis(&linalg::rows_to_matrix(&v, index.len()), 1e-9);
    let w: Vec<Vec<f64>> = products.iter().map(|p| p.coefficient_vector(&index)).collect();
    linalg::max_relative_residual(&q, &linalg::rows_to_matrix(&w, index.len()))
}

/// Symmetric set of interpolation (and mass quadrature) nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    pub orbits: Vec<SymmetricOrbit>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.orbits.iter().map(|o| o.size()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }

    /// Expanded nodes, orbit by orbit.
    pub fn points(&self) -> Vec<BarycentricPoint> {
        self.orbits.iter().flat_map(|o| o.points()).collect()
    }

    /// Index of the orbit each expanded node belongs to.
    pub fn orbit_of_node(&self) -> Vec<usize> {
        self.orbits
            .iter()
            .enumerate()
            .flat_map(|(i, o)| std::iter::repeat(i).take(o.size()))
            .collect()
    }
}

/// Vertices, edge midpoints, face centroids and the centroid.
pub fn p2n15_nodes() -> NodeSet {
    NodeSet {
        orbits: vec![
            SymmetricOrbit { kind: OrbitType::S31, params: vec![0.0] },
            SymmetricOrbit { kind: OrbitType::S22, params: vec![0.0] },
            SymmetricOrbit { kind: OrbitType::S31, params: vec![1.0 / 3.0] },
            SymmetricOrbit::centroid(),
        ],
    }
}

/// Four vertices, for the linear toy element.
pub fn vertex_nodes() -> NodeSet {
    NodeSet {
        orbits: vec![SymmetricOrbit { kind: OrbitType::S31, params: vec![0.0] }],
    }
}

/// Directory searched for element data files (`MLTET_DATA_DIR`, then `data/`).
pub fn data_dir() -> PathBuf {
    std::env::var_os("MLTET_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

pub fn mass_data_path(dir: &Path, id: ElementId) -> PathBuf {
    dir.join(format!("{}_mass.json", id.name()))
}

/// Mass-lumping nodes of `id`; degree 3 and 4 need a data file.
pub fn mass_node_set(id: ElementId) -> Result<NodeSet> {
    mass_node_set_in(id, &data_dir())
}

pub fn mass_node_set_in(id: ElementId, dir: &Path) -> Result<NodeSet> {
    if id == ElementId::P2n15 {
        return Ok(p2n15_nodes());
    }
    let path = mass_data_path(dir, id);
    if !path.exists() {
        return Err(Error::MissingElementData(id.name().to_string()));
    }
    Ok(load_element_data(id, &path)?.nodes)
}

/// Lagrange basis of a space on a node set, stored as monomial coefficients.
#[derive(Debug, Clone)]
pub struct NodalBasis {
    pub index: MonomialIndex,
    pub nodes: Vec<BarycentricPoint>,
    /// Row `i` holds the coefficients of `w_i`.
    pub coeffs: DMatrix<f64>,
    /// Coefficients of the three partial derivatives of each `w_i`.
    pub grad_coeffs: [DMatrix<f64>; 3],
    /// 2-norm condition number of the generalized Vandermonde matrix.
    pub condition: f64,
}

pub fn build_nodal_basis(space: &ElementSpace, nodes: &[BarycentricPoint]) -> Result<NodalBasis> {
    let n = space.dimension();
    if nodes.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} nodes for a space of dimension {n}",
            nodes.len()
        )));
    }
    let c = space.coefficient_matrix();
    let index = space.index.clone();
    // vt[(k, j)] = basis_k(x_j)
    let mut vt = DMatrix::zeros(n, n);
    for (j, x) in nodes.iter().enumerate() {
        let m = DVector::from_vec(index.eval_all(&x.cartesian()));
        let col = &c * m;
        vt.set_column(j, &col);
    }
    let sv = linalg::singular_values(&vt);
    let smin = *sv.last().unwrap_or(&0.0);
    let smax = sv.first().copied().unwrap_or(0.0);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(smin > 1e-10 * smax) {
        return Err(Error::NotUnisolvent { condition });
    }
    // Coefficients A in terms of the space basis satisfy A * vt = I.
    let lu = vt.transpose().full_piv_lu();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut at = lu
        .solve(&eye)
        .ok_or(Error::NotUnisolvent { condition })?;
    let r = &eye - vt.transpose() * &at;
    if let Some(corr) = lu.solve(&r) {
        at += corr;
    }
    let coeffs = at.transpose() * c;
    let grad_coeffs = [0, 1, 2].map(|d| {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                Poly::from_coefficients(&index, coeffs.row(i).transpose().as_slice())
                    .derivative(d)
                    .coefficient_vector(&index)
            })
            .collect();
        linalg::rows_to_matrix(&rows, index.len())
    });
    Ok(NodalBasis {
        index,
        nodes: nodes.to_vec(),
        coeffs,
        grad_coeffs,
        condition,
    })
}

impl NodalBasis {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of all basis functions at a reference point.
    pub fn eval(&self, x: &[f64; 3]) -> DVector<f64> {
        &self.coeffs * DVector::from_vec(self.index.eval_all(x))
    }

    /// Partial derivative `d` of all basis functions at a reference point.
    pub fn eval_derivative(&self, d: usize, x: &[f64; 3]) -> DVector<f64> {
        &self.grad_coeffs[d] * DVector::from_vec(self.index.eval_all(x))
    }

    pub fn function(&self, i: usize) -> Poly {
        Poly::from_coefficients(&self.index, self.coeffs.row(i).transpose().as_slice())
    }

    /// `max |w_i(x_j) - delta_ij|`.
    pub fn delta_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, x) in self.nodes.iter().enumerate() {
            let v = self.eval(&x.cartesian());
            for i in 0..v.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v[i] - target).abs());
            }
        }
        worst
    }

    /// Interpolant coefficients (nodal values) of `f`.
    pub fn interpolate(&self, f: &Poly) -> Vec<f64> {
        self.nodes.iter().map(|x| f.eval_bary(&x.0)).collect()
    }
}

fn poly_products(a: &[Poly], b: &[Poly]) -> Vec<Poly> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// Integrands that the mass rule must integrate exactly: `P_{p-2} x U`
/// (constants alone when `p < 2`).
fn mass_exactness_set(space: &ElementSpace) -> Vec<Poly> {
    if space.degree < 2 {
        return vec![Poly::constant(1.0)];
    }
    let lower: Vec<Poly> = homogeneous(space.degree - 2)
        .iter()
        .map(|p| p.to_cartesian())
        .collect();
    poly_products(&lower, &space.basis)
}

/// Solves for one weight per node orbit from exactness on `P_{p-2} x U`.
pub fn derive_mass_weights(space: &ElementSpace, nodes: &NodeSet) -> Result<Vec<f64>> {
    let funcs = mass_exactness_set(space);
    let k = nodes.orbits.len();
    let mut a = DMatrix::zeros(funcs.len(), k);
    let mut b = DVector::zeros(funcs.len());
    for (i, f) in funcs.iter().enumerate() {
        let s = f.integral_scale().max(1e-300);
        for (o, orbit) in nodes.orbits.iter().enumerate() {
            a[(i, o)] = orbit.points().iter().map(|p| f.eval_bary(&p.0)).sum::<f64>() / s;
        }
        b[i] = f.integrate() / s;
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12 * smax).count();
    let w = svd
        .solve(&b, 1e-12 * smax)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let residual = (&a * &w - &b).amax();
    if residual > 1e-11 {
        return Err(Error::SystemInconsistent { residual });
    }
    if rank < k {
        return Err(Error::InvalidElementData(
            "mass weights are not uniquely determined by the nodes".into(),
        ));
    }
    let min = w.min();
    if min <= 0.0 {
        return Err(Error::NoPositiveSolution { min });
    }
    Ok(w.iter().copied().collect())
}

/// Largest exactness error of a nodal quadrature on `P_{p-2} x U`.
pub fn mass_exactness_defect(space: &ElementSpace, nodes: &NodeSet, orbit_weights: &[f64]) -> f64 {
    mass_exactness_set(space)
        .iter()
        .map(|f| {
            let q: f64 = nodes
                .orbits
                .iter()
                .zip(orbit_weights)
                .map(|(o, w)| w * o.points().iter().map(|p| f.eval_bary(&p.0)).sum::<f64>())
                .sum();
            (q - f.integrate()).abs() / f.integral_scale().max(1e-300)
        })
        .fold(0.0, f64::max)
}

/// Expands orbit weights to one weight per node.
pub fn node_weights(nodes: &NodeSet, orbit_weights: &[f64]) -> Vec<f64> {
    nodes
        .orbit_of_node()
        .into_iter()
        .map(|o| orbit_weights[o])
        .collect()
}

/// Condition C3: basis functions of nodes off a face vanish on that face.
pub fn check_face_conforming(basis: &NodalBasis) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for face in 0..4 {
        let off: Vec<usize> = (0..basis.len())
            .filter(|&i| basis.nodes[i].0[face] > 1e-12)
            .collect();
        for _ in 0..100 {
            // uniform point on the face opposite vertex `face`
            let mut l = [0.0; 4];
            let e: Vec<f64> = (0..3).map(|_| -rng.random_range(1e-12f64..1.0).ln()).collect();
            let s: f64 = e.iter().sum();
            let mut k = 0;
            for (j, lj) in l.iter_mut().enumerate() {
                if j != face {
                    *lj = e[k] / s;
                    k += 1;
                }
            }
            let v = basis.eval(&[l[0], l[1], l[2]]);
            if off.iter().any(|&i| v[i].abs() > 1e-9) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldMode {
    Scalar,
    Elastic,
}

/// Null-space dimension of the gradient (scalar) or symmetric-strain
/// (elastic) evaluation map at the rule's points.
fn spurious_nullity(grads: &[[DVector<f64>; 3]], n: usize, mode: FieldMode) -> usize {
    match mode {
        FieldMode::Scalar => {
            let mut m = DMatrix::zeros(3 * grads.len(), n);
            for (q, g) in grads.iter().enumerate() {
                for d in 0..3 {
                    m.set_row(3 * q + d, &g[d].transpose());
                }
            }
            linalg::nullspace_dim(&m, SPURIOUS_TOL)
        }
        FieldMode::Elastic => {
            let pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
            let mut m = DMatrix::zeros(6 * grads.len(), 3 * n);
            for (q, g) in grads.iter().enumerate() {
                for (r, &(a, b)) in pairs.iter().enumerate() {
                    let row = 6 * q + r;
                    for j in 0..n {
                        // strain_ab = (d_a u_b + d_b u_a) / 2
                        m[(row, 3 * j + b)] += 0.5 * g[a][j];
                        m[(row, 3 * j + a)] += 0.5 * g[b][j];
                    }
                }
            }
            linalg::nullspace_dim(&m, SPURIOUS_TOL)
        }
    }
}

fn expected_nullity(mode: FieldMode) -> usize {
    match mode {
        FieldMode::Scalar => 1,
        FieldMode::Elastic => 6,
    }
}

/// Condition C7 on a nodal basis.
pub fn check_spurious_free(
    basis: &NodalBasis,
    rule: &QuadratureRule,
    mode: FieldMode,
) -> (bool, usize) {
    let grads: Vec<[DVector<f64>; 3]> = rule
        .points()
        .iter()
        .map(|p| {
            let x = p.cartesian();
            [0, 1, 2].map(|d| basis.eval_derivative(d, &x))
        })
        .collect();
    let k = spurious_nullity(&grads, basis.len(), mode);
    (k == expected_nullity(mode), k)
}

/// Condition C7 evaluated on any basis of the space; the null-space
/// dimension does not depend on the basis, so no nodes are needed.
pub fn check_spurious_free_space(
    space: &ElementSpace,
    rule: &QuadratureRule,
    mode: FieldMode,
) -> (bool, usize) {
    let grads: Vec<[Poly; 3]> = space.basis.iter().map(|p| p.gradient()).collect();
    let pts: Vec<[DVector<f64>; 3]> = rule
        .points()
        .iter()
        .map(|p| {
            let x = p.cartesian();
            [0, 1, 2].map(|d| DVector::from_iterator(grads.len(), grads.iter().map(|g| g[d].eval(&x))))
        })
        .collect();
    let k = spurious_nullity(&pts, space.dimension(), mode);
    (k == expected_nullity(mode), k)
}

/// Index pairs `(iD, jD)` with `iD <= jD`, in the order used by `bhat`.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Precomputed reference matrices for the stiffness kernels.
#[derive(Debug, Clone)]
pub struct KernelTables {
    /// `b[iD][jD]_ij = integral of (d_iD w_i)(d_jD w_j)`.
    pub b: [[DMatrix<f64>; 3]; 3],
    /// Entries in [`SYM_PAIRS`] order: `B^(i,i)` on the diagonal pairs and
    /// `B^(i,j) + B^(j,i)` off the diagonal, so that a symmetric coefficient
    /// tensor contracts with six matrices.
    pub bhat: [DMatrix<f64>; 6],
    /// `d[iD]_ki = (d_iD w_i)(x'_k)` at the stiffness rule points.
    pub d: [DMatrix<f64>; 3],
    /// Mass quadrature weight of each node.
    pub mass_weights: Vec<f64>,
    /// Expanded stiffness rule weights, aligned with the rows of `d`.
    pub quad_weights: Vec<f64>,
    pub quad_points: Vec<BarycentricPoint>,
    pub stiffness_rule: QuadratureRule,
}

/// Gram matrix of the monomials of `index`.
fn monomial_gram(index: &MonomialIndex) -> DMatrix<f64> {
    let m = index.len();
    DMatrix::from_fn(m, m, |k, l| {
        let a = index.monomials[k];
        let b = index.monomials[l];
        integrate_monomial(MonomialExponent([
            (a[0] + b[0]) as u32,
            (a[1] + b[1]) as u32,
            (a[2] + b[2]) as u32,
            0,
        ]))
    })
}

pub fn precompute_b(basis: &NodalBasis) -> [[DMatrix<f64>; 3]; 3] {
    let g = monomial_gram(&basis.index);
    let dg: [DMatrix<f64>; 3] = [0, 1, 2].map(|a| &basis.grad_coeffs[a] * &g);
    let mut b = [0, 1, 2].map(|a| [0, 1, 2].map(|c| &dg[a] * basis.grad_coeffs[c].transpose()));
    // symmetrize the transposed pairs exactly
    for i in 0..3 {
        for j in i..3 {
            let avg = (&b[i][j] + b[j][i].transpose()) * 0.5;
            b[j][i] = avg.transpose();
            b[i][j] = avg;
        }
    }
    b
}

pub fn precompute_bhat(b: &[[DMatrix<f64>; 3]; 3]) -> [DMatrix<f64>; 6] {
    SYM_PAIRS.map(|(i, j)| {
        if i == j {
            b[i][i].clone()
        } else {
            &b[i][j] + &b[j][i]
        }
    })
}

pub fn precompute_d(basis: &NodalBasis, rule: &QuadratureRule) -> [DMatrix<f64>; 3] {
    let pts = rule.points();
    [0, 1, 2].map(|a| {
        let mut d = DMatrix::zeros(pts.len(), basis.len());
        for (k, p) in pts.iter().enumerate() {
            d.set_row(k, &basis.eval_derivative(a, &p.cartesian()).transpose());
        }
        d
    })
}

impl KernelTables {
    pub fn new(basis: &NodalBasis, mass_weights: Vec<f64>, rule: &QuadratureRule) -> Self {
        let b = precompute_b(basis);
        let bhat = precompute_bhat(&b);
        KernelTables {
            d: precompute_d(basis, rule),
            b,
            bhat,
            mass_weights,
            quad_weights: rule.weights(),
            quad_points: rule.points(),
            stiffness_rule: rule.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.mass_weights.len()
    }

    pub fn n_quad(&self) -> usize {
        self.quad_weights.len()
    }
}

/// Mass-lumping data read from disk.
#[derive(Debug, Clone)]
pub struct ElementData {
    pub id: ElementId,
    pub nodes: NodeSet,
    pub orbit_weights: Vec<f64>,
}

/// Reads a mass-role rule file and validates conditions C1 to C5.
pub fn load_element_data(id: ElementId, path: &Path) -> Result<ElementData> {
    let file = RuleFile::load(path)?;
    element_data_from_file(id, &file)
}

pub fn element_data_from_file(id: ElementId, file: &RuleFile) -> Result<ElementData> {
    if let Some(fid) = file.element_id {
        if fid != id {
            return Err(Error::InvalidElementData(format!("file is for {fid}, not {id}")));
        }
    }
    if file.role == Some(RuleRole::Stiffness) {
        return Err(Error::InvalidElementData("file holds a stiffness rule".into()));
    }
    let rule = file.to_rule()?;
    let data = ElementData {
        id,
        nodes: NodeSet {
            orbits: rule.entries.iter().map(|e| e.orbit.clone()).collect(),
        },
        orbit_weights: rule.entries.iter().map(|e| e.weight).collect(),
    };
    validate_element_data(&data)?;
    Ok(data)
}

/// Checks C1 (unisolvence), C2 (orbit structure), C3, C4 and C5.
pub fn validate_element_data(data: &ElementData) -> Result<()> {
    let space = element_space(data.id);
    if data.nodes.len() != space.dimension() {
        return Err(Error::InvalidElementData(format!(
            "{} nodes, expected {}",
            data.nodes.len(),
            space.dimension()
        )));
    }
    for o in &data.nodes.orbits {
        if o.is_degenerate() || !o.is_inside(1e-12) {
            return Err(Error::InvalidElementData(format!("bad node orbit {o:?}")));
        }
    }
    let basis = build_nodal_basis(&space, &data.nodes.points())?;
    if basis.delta_residual() > 1e-10 {
        return Err(Error::InvalidElementData("nodal basis inaccurate".into()));
    }
    if !check_face_conforming(&basis) {
        return Err(Error::InvalidElementData("nodes are not face conforming".into()));
    }
    if let Some(&min) = data
        .orbit_weights
        .iter()
        .min_by(|a, b| a.partial_cmp(b).unwrap())
    {
        if min <= 0.0 {
            return Err(Error::NoPositiveSolution { min });
        }
    }
    let defect = mass_exactness_defect(&space, &data.nodes, &data.orbit_weights);
    if defect > 1e-12 {
        return Err(Error::InvalidElementData(format!(
            "mass rule not exact on P(p-2) x U (defect {defect:.2e})"
        )));
    }
    Ok(())
}

/// Writes mass data in the rule file format.
pub fn element_data_file(data: &ElementData) -> RuleFile {
    let rule = QuadratureRule::new(
        format!("{}-mass", data.id),
        data.nodes
            .orbits
            .iter()
            .zip(&data.orbit_weights)
            .map(|(o, &w)| RuleEntry { orbit: o.clone(), weight: w })
            .collect(),
    );
    let mut f = RuleFile::from_rule(&rule);
    f.element_id = Some(data.id);
    f.role = Some(RuleRole::Mass);
    f
}

/// Everything needed to assemble a mass-lumped element of one type.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub id: ElementId,
    pub space: ElementSpace,
    pub nodes: NodeSet,
    pub basis: NodalBasis,
    pub orbit_weights: Vec<f64>,
    pub tables: KernelTables,
}

impl ReferenceElement {
    /// Builds the element with its paired stiffness rule; degree 3 and 4
    /// read their mass data from the data directory.
    pub fn new(id: ElementId) -> Result<Self> {
        Self::with_rule(id, &builtin_stiffness_rule(id))
    }

    pub fn with_rule(id: ElementId, rule: &QuadratureRule) -> Result<Self> {
        let space = element_space(id);
        let (nodes, orbit_weights) = if id == ElementId::P2n15 {
            let nodes = p2n15_nodes();
            let w = derive_mass_weights(&space, &nodes)?;
            (nodes, w)
        } else {
            let path = mass_data_path(&data_dir(), id);
            if !path.exists() {
                return Err(Error::MissingElementData(id.name().to_string()));
            }
            let data = load_element_data(id, &path)?;
            (data.nodes, data.orbit_weights)
        };
        Self::from_parts(id, space, nodes, orbit_weights, rule)
    }

    pub fn from_data(data: &ElementData, rule: &QuadratureRule) -> Result<Self> {
        validate_element_data(data)?;
        Self::from_parts(
            data.id,
            element_space(data.id),
            data.nodes.clone(),
            data.orbit_weights.clone(),
            rule,
        )
    }

    fn from_parts(
        id: ElementId,
        space: ElementSpace,
        nodes: NodeSet,
        orbit_weights: Vec<f64>,
        rule: &QuadratureRule,
    ) -> Result<Self> {
        let basis = build_nodal_basis(&space, &nodes.points())?;
        let tables = KernelTables::new(&basis, node_weights(&nodes, &orbit_weights), rule);
        Ok(ReferenceElement {
            id,
            space,
            nodes,
            basis,
            orbit_weights,
            tables,
        })
    }

    pub fn n(&self) -> usize {
        self.basis.len()
    }

    /// Lumped mass weights sum to the reference volume.
    pub fn mass_weight_sum(&self) -> f64 {
        self.tables.mass_weights.iter().sum()
    }

    /// The lumped mass nodes and weights read as a quadrature rule.
    pub fn mass_rule(&self) -> QuadratureRule {
        let entries = self
            .nodes
            .orbits
            .iter()
            .zip(&self.orbit_weights)
            .map(|(o, &w)| RuleEntry {
                orbit: o.clone(),
                weight: w,
            })
            .collect();
        QuadratureRule::new(format!("{}-mass", self.id.name()), entries)
    }
}
