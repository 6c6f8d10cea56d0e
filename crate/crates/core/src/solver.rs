//! Global operators, Dablain time stepping and the manufactured acoustic problem.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{c_k, StiffnessMode};
use crate::error::{Error, Result};
use crate::kernels::{
    matvec_exact_elastic, matvec_exact_scalar, matvec_quad_elastic, matvec_quad_scalar,
    transform_elastic, transform_scalar, transform_scalar_constant, ElasticSamples, ElasticTensor,
    OpCount, RefElastic, ScalarSamples, Sym3,
};
use crate::mesh::{build_block_mesh, enumerate_global_dofs, BoxDomain, DofMap, TetMesh};
use crate::refelement::ReferenceElement;
use crate::ElementId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// Where material coefficients are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Density at the mass nodes, stiffness coefficients at the rule points.
    Pointwise,
    /// One value per element, taken at the centroid.
    Centroid,
}

pub type Field = Box<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>;

/// Coefficients of `rho u_tt = div(c grad u)` or of isotropic elasticity.
pub enum Material {
    Scalar { rho: Field, c: Field },
    Elastic { rho: Field, lambda: Field, mu: Field },
}

impl Material {
    pub fn constant_scalar(rho: f64, c: f64) -> Self {
        Material::Scalar {
            rho: Box::new(move |_| rho),
            c: Box::new(move |_| c),
        }
    }

    /// Isotropic solid from wave speeds and density.
    pub fn isotropic_speeds(vp: f64, vs: f64, rho: f64) -> Self {
        let mu = rho * vs * vs;
        let lambda = rho * vp * vp - 2.0 * mu;
        Material::Elastic {
            rho: Box::new(move |_| rho),
            lambda: Box::new(move |_| lambda),
            mu: Box::new(move |_| mu),
        }
    }

    pub fn components(&self) -> usize {
        match self {
            Material::Scalar { .. } => 1,
            Material::Elastic { .. } => 3,
        }
    }
}

/// Per-element stiffness data.
#[derive(Debug, Clone)]
enum ElementMaterial {
    ScalarExact(Sym3),
    ScalarRule(ScalarSamples),
    ElasticExact(Box<RefElastic>),
    ElasticRule(ElasticSamples),
}

/// Linear operator `L = M^{-1} A` on real vectors.
pub trait Operator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Diagonal mass weights used for norms.
    fn mass(&self) -> &[f64];
}

/// Semi-discrete wave problem on a tetrahedral mesh.
pub struct WaveProblem {
    pub element: ReferenceElement,
    pub mesh: TetMesh,
    pub dofs: DofMap,
    pub mode: StiffnessMode,
    pub boundary: Boundary,
    pub sampling: Sampling,
    components: usize,
    materials: Vec<ElementMaterial>,
    /// Lumped mass per global unknown (node-major, component-minor).
    mass: Vec<f64>,
    free: Vec<bool>,
    /// For each node, its `(element, local)` incidences in element order.
    inc_offsets: Vec<usize>,
    inc: Vec<(u32, u32)>,
}

impl WaveProblem {
    pub fn new(
        element: ReferenceElement,
        mesh: TetMesh,
        mode: StiffnessMode,
        boundary: Boundary,
        sampling: Sampling,
        material: &Material,
    ) -> Result<Self> {
        let dofs = enumerate_global_dofs(&mesh, &element.nodes)?;
        let t = &element.tables;
        let n = t.n();
        let nc = material.components();
        let centroid_bary = crate::refgeom::BarycentricPoint([0.25; 4]);

        let mut mass = vec![0.0; dofs.len() * nc];
        let mut materials = Vec::with_capacity(mesh.len());
        for (e, g) in mesh.geometry.iter().enumerate() {
            let xc = g.map_bary(&centroid_bary);
            let node_x: Vec<[f64; 3]> = dofs.local[e].iter().map(|&i| dofs.coords[i]).collect();
            let quad_x: Vec<[f64; 3]> = t.quad_points.iter().map(|b| g.map_bary(b)).collect();
            let (rho, em) = match material {
                Material::Scalar { rho, c } => {
                    let rho_n: Vec<f64> = match sampling {
                        Sampling::Pointwise => node_x.iter().map(rho).collect(),
                        Sampling::Centroid => vec![rho(&xc); n],
                    };
                    let em = match (mode, sampling) {
                        (StiffnessMode::Exact, Sampling::Centroid) => {
                            ElementMaterial::ScalarExact(transform_scalar_constant(c(&xc), g))
                        }
                        (StiffnessMode::Exact, Sampling::Pointwise) => {
                            return Err(Error::InvalidInput(
                                "exact stiffness requires centroid sampling".into(),
                            ))
                        }
                        (StiffnessMode::Rule, s) => {
                            let cq: Vec<f64> = match s {
                                Sampling::Pointwise => quad_x.iter().map(c).collect(),
                                Sampling::Centroid => vec![c(&xc); quad_x.len()],
                            };
                            check_positive(&cq)?;
                            ElementMaterial::ScalarRule(transform_scalar(&cq, &t.quad_weights, g))
                        }
                    };
                    (rho_n, em)
                }
                Material::Elastic { rho, lambda, mu } => {
                    let rho_n: Vec<f64> = match sampling {
                        Sampling::Pointwise => node_x.iter().map(rho).collect(),
                        Sampling::Centroid => vec![rho(&xc); n],
                    };
                    let em = match (mode, sampling) {
                        (StiffnessMode::Exact, Sampling::Centroid) => {
                            let c = ElasticTensor::isotropic(lambda(&xc), mu(&xc));
                            ElementMaterial::ElasticExact(Box::new(transform_elastic(&c, g, 1.0)))
                        }
                        (StiffnessMode::Exact, Sampling::Pointwise) => {
                            return Err(Error::InvalidInput(
                                "exact stiffness requires centroid sampling".into(),
                            ))
                        }
                        (StiffnessMode::Rule, s) => {
                            let pts: Vec<[f64; 3]> = match s {
                                Sampling::Pointwise => quad_x.clone(),
                                Sampling::Centroid => vec![xc; quad_x.len()],
                            };
                            let l: Vec<f64> = pts.iter().map(lambda).collect();
                            let m: Vec<f64> = pts.iter().map(mu).collect();
                            check_positive(&m)?;
                            ElementMaterial::ElasticRule(ElasticSamples::isotropic(
                                &l,
                                &m,
                                &t.quad_weights,
                                g,
                            ))
                        }
                    };
                    (rho_n, em)
                }
            };
            let md = crate::kernels::mass_diagonal(t, g, &rho)?;
            for (i, &gi) in dofs.local[e].iter().enumerate() {
                for comp in 0..nc {
                    mass[gi * nc + comp] += md[i];
                }
            }
            materials.push(em);
        }

        let mut counts = vec![0usize; dofs.len() + 1];
        for l in &dofs.local {
            for &gi in l {
                counts[gi + 1] += 1;
            }
        }
        for i in 0..dofs.len() {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut inc = vec![(0u32, 0u32); counts[dofs.len()]];
        for (e, l) in dofs.local.iter().enumerate() {
            for (i, &gi) in l.iter().enumerate() {
                inc[fill[gi]] = (e as u32, i as u32);
                fill[gi] += 1;
            }
        }
        let free = match boundary {
            Boundary::Neumann => vec![true; dofs.len()],
            Boundary::Dirichlet => dofs.boundary.iter().map(|b| !b).collect(),
        };
        Ok(WaveProblem {
            element,
            mesh,
            dofs,
            mode,
            boundary,
            sampling,
            components: nc,
            materials,
            mass,
            free,
            inc_offsets: counts,
            inc,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn is_free(&self, node: usize) -> bool {
        self.free[node]
    }

    /// Number of unknowns not fixed by Dirichlet conditions.
    pub fn free_unknowns(&self) -> usize {
        self.free.iter().filter(|f| **f).count() * self.components
    }

    /// `out = A u`; fixed rows and columns are masked.
    pub fn stiffness_apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.element.tables.n();
        let nc = self.components;
        let t = &self.element.tables;
        let mut local_out = vec![0.0; self.mesh.len() * n * nc];
        local_out
            .par_chunks_mut(n * nc)
            .zip(self.materials.par_iter())
            .zip(self.dofs.local.par_iter())
            .for_each(|((lo, mat), l)| {
                let mut ul = vec![0.0; n * nc];
                for (i, &gi) in l.iter().enumerate() {
                    if self.free[gi] {
                        for comp in 0..nc {
                            ul[comp * n + i] = u[gi * nc + comp];
                        }
                    }
                }
                let mut ops = OpCount::default();
                match mat {
                    ElementMaterial::ScalarExact(c) => matvec_exact_scalar(t, c, &ul, lo, &mut ops),
                    ElementMaterial::ScalarRule(s) => matvec_quad_scalar(t, s, &ul, lo, &mut ops),
                    ElementMaterial::ElasticExact(c) => matvec_exact_elastic(t, c, &ul, lo, &mut ops),
                    ElementMaterial::ElasticRule(s) => matvec_quad_elastic(t, s, &ul, lo, &mut ops),
                }
            });
        out.par_chunks_mut(nc).enumerate().for_each(|(gi, o)| {
            o.iter_mut().for_each(|v| *v = 0.0);
            if !self.free[gi] {
                return;
            }
            for &(e, i) in &self.inc[self.inc_offsets[gi]..self.inc_offsets[gi + 1]] {
                let base = e as usize * n * nc;
                for (comp, oc) in o.iter_mut().enumerate() {
                    *oc += local_out[base + comp * n + i as usize];
                }
            }
        });
    }

    /// Nodal interpolant of a scalar or vector field.
    pub fn interpolate(&self, f: impl Fn(&[f64; 3]) -> Vec<f64> + Sync) -> Vec<f64> {
        let nc = self.components;
        let mut u = vec![0.0; self.len()];
        u.par_chunks_mut(nc).enumerate().for_each(|(gi, o)| {
            if self.free[gi] {
                o.copy_from_slice(&f(&self.dofs.coords[gi])[..nc]);
            }
        });
        u
    }

    /// Dense `A` (small meshes only).
    pub fn dense_stiffness(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut a = DMatrix::zeros(m, m);
        let mut e = vec![0.0; m];
        let mut col = vec![0.0; m];
        for j in 0..m {
            e[j] = 1.0;
            self.stiffness_apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..m {
                a[(i, j)] = col[i];
            }
        }
        a
    }
}

fn check_positive(v: &[f64]) -> Result<()> {
    match v.iter().find(|x| !(**x > 0.0)) {
        Some(&x) => Err(Error::NonpositiveDensity(x)),
        None => Ok(()),
    }
}

impl Operator for WaveProblem {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.stiffness_apply(x, y);
        y.par_iter_mut().zip(&self.mass).for_each(|(v, m)| *v /= m);
    }

    fn mass(&self) -> &[f64] {
        &self.mass
    }
}

/// `L = M^{-1} A` from dense matrices.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub a: DMatrix<f64>,
    pub mass: Vec<f64>,
}

impl DenseOperator {
    /// Real symmetric form of a Hermitian matrix `H`, acting on `[Re; Im]`
    /// with unit mass.
    pub fn from_hermitian(h: &DMatrix<num_complex::Complex64>) -> Self {
        let n = h.nrows();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = h[(i, j)];
                a[(i, j)] = z.re;
                a[(i + n, j + n)] = z.re;
                a[(i, j + n)] = -z.im;
                a[(i + n, j)] = z.im;
            }
        }
        DenseOperator {
            a,
            mass: vec![1.0; 2 * n],
        }
    }
}

impl Operator for DenseOperator {
    fn dim(&self) -> usize {
        self.mass.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let v = &self.a * nalgebra::DVector::from_column_slice(x);
        for ((yi, vi), m) in y.iter_mut().zip(v.iter()).zip(&self.mass) {
            *yi = vi / m;
        }
    }

    fn mass(&self) -> &[f64] {
        &self.mass
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sqrt(u^T M u)`.
pub fn mass_norm(op: &dyn Operator, u: &[f64]) -> f64 {
    u.iter()
        .zip(op.mass())
        .map(|(x, m)| m * x * x)
        .sum::<f64>()
        .sqrt()
}

/// Two-level state of the Dablain recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub u_prev: Vec<f64>,
    pub u_curr: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub k: u32,
}

/// `sum_{j=0}^{k} coef_j (-dt^2 L)^j u`.
fn polynomial_apply(op: &dyn Operator, u: &[f64], dt: f64, coef: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = u.iter().map(|x| coef[0] * x).collect();
    let mut p = u.to_vec();
    let mut q = vec![0.0; u.len()];
    for c in &coef[1..] {
        op.apply(&p, &mut q);
        for (pi, qi) in p.iter_mut().zip(&q) {
            *pi = -dt * dt * qi;
        }
        for (o, pi) in out.iter_mut().zip(&p) {
            *o += c * pi;
        }
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Starts the recursion from `u(0) = u0`, `u_t(0) = v0`, so that the first
/// step reproduces the exact propagator truncated to order `2K`.
pub fn start(op: &dyn Operator, u0: &[f64], v0: Option<&[f64]>, dt: f64, k: u32) -> Result<SimulationState> {
    c_k(k)?;
    let cos_c: Vec<f64> = (0..=k).map(|j| 1.0 / factorial(2 * j)).collect();
    let mut u1 = polynomial_apply(op, u0, dt, &cos_c);
    if let Some(v0) = v0 {
        let sin_c: Vec<f64> = (0..k).map(|j| dt / factorial(2 * j + 1)).collect();
        let s = polynomial_apply(op, v0, dt, &sin_c);
        u1.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
    }
    Ok(SimulationState {
        u_prev: u0.to_vec(),
        u_curr: u1,
        t: dt,
        dt,
        k,
    })
}

/// `u_next = 2u - u_prev + sum_{k=1}^K 2 dt^{2k}/(2k)! (-L)^k u`.
pub fn dablain_step(op: &dyn Operator, s: &mut SimulationState) {
    let mut coef: Vec<f64> = (0..=s.k).map(|j| 2.0 / factorial(2 * j)).collect();
    coef[0] = 2.0;
    let mut next = polynomial_apply(op, &s.u_curr, s.dt, &coef);
    next.iter_mut().zip(&s.u_prev).for_each(|(a, b)| *a -= b);
    s.u_prev = std::mem::replace(&mut s.u_curr, next);
    s.t += s.dt;
}

/// Largest eigenvalue of `M^{-1} A` by power iteration on the symmetric
/// form `M^{-1/2} A M^{-1/2}`, stopped when the Rayleigh quotient changes by
/// less than `tol` relatively.
pub fn estimate_sigma_max(op: &dyn Operator, tol: f64, max_iter: usize) -> Result<f64> {
    let n = op.dim();
    let sq: Vec<f64> = op.mass().iter().map(|m| m.sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x51_6d_61);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut tmp = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut last = f64::NAN;
    for _ in 0..max_iter {
        let nx = dot(&x, &x).sqrt();
        if nx == 0.0 {
            return Ok(0.0);
        }
        x.iter_mut().for_each(|v| *v /= nx);
        // y = M^{1/2} L M^{-1/2} x
        for i in 0..n {
            tmp[i] = x[i] / sq[i];
        }
        op.apply(&tmp, &mut y);
        for i in 0..n {
            y[i] *= sq[i];
        }
        let rq = dot(&x, &y);
        if (rq - last).abs() <= tol * rq.abs() {
            return Ok(rq);
        }
        last = rq;
        std::mem::swap(&mut x, &mut y);
    }
    Err(Error::NoConvergence(max_iter))
}

/// `sqrt(c_K / sigma_max)`.
pub fn stable_dt(sigma_max: f64, k: u32) -> Result<f64> {
    Ok((c_k(k)? / sigma_max).sqrt())
}

/// Discrete energy between `u_prev` and `u_curr`, exactly conserved by the
/// leapfrog scheme.
pub fn leapfrog_energy(problem: &WaveProblem, s: &SimulationState) -> f64 {
    let v: Vec<f64> = s
        .u_curr
        .iter()
        .zip(&s.u_prev)
        .map(|(a, b)| (a - b) / s.dt)
        .collect();
    let mut au = vec![0.0; s.u_curr.len()];
    problem.stiffness_apply(&s.u_prev, &mut au);
    let kin: f64 = v.iter().zip(problem.mass()).map(|(v, m)| m * v * v).sum();
    0.5 * (kin + dot(&s.u_curr, &au))
}

/// Standing wave in a smoothly heterogeneous medium on `(-L, L)^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticManufactured {
    pub l: [f64; 3],
    pub a: [f64; 3],
    pub rho0: f64,
    pub c0: f64,
    pub k: [f64; 3],
}

impl Default for AcousticManufactured {
    fn default() -> Self {
        let m = PI / 2.0;
        AcousticManufactured {
            l: [1.0; 3],
            a: [0.2; 3],
            rho0: 2.0,
            c0: 2.0,
            k: [3.0 * m; 3],
        }
    }
}

impl AcousticManufactured {
    pub fn homogeneous() -> Self {
        AcousticManufactured {
            a: [0.0; 3],
            ..Default::default()
        }
    }

    pub fn m(&self) -> [f64; 3] {
        self.l.map(|l| PI / (2.0 * l))
    }

    pub fn omega(&self) -> f64 {
        self.c0 * self.k.iter().map(|k| k * k).sum::<f64>().sqrt()
    }

    /// Two periods.
    pub fn final_time(&self) -> f64 {
        4.0 * PI / self.omega()
    }

    pub fn domain(&self) -> BoxDomain {
        BoxDomain::symmetric(self.l)
    }

    fn warp(&self, x: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
        let m = self.m();
        let mut big = [0.0; 3];
        let mut g = [0.0; 3];
        for i in 0..3 {
            big[i] = x[i] + self.a[i] / m[i] * (m[i] * x[i]).cos();
            g[i] = 1.0 - self.a[i] * (m[i] * x[i]).sin();
        }
        (big, g)
    }

    pub fn rho(&self, x: &[f64; 3]) -> f64 {
        let (_, g) = self.warp(x);
        self.rho0 * g[0] * g[1] * g[2]
    }

    pub fn c(&self, x: &[f64; 3]) -> f64 {
        let (_, g) = self.warp(x);
        let k2: f64 = self.k.iter().map(|k| k * k).sum();
        let kg: f64 = (0..3).map(|i| (self.k[i] * g[i]).powi(2)).sum();
        self.c0 * (k2 / kg).sqrt()
    }

    pub fn pressure(&self, x: &[f64; 3], t: f64) -> f64 {
        let (big, _) = self.warp(x);
        (self.omega() * t).cos() * (0..3).map(|i| (self.k[i] * big[i]).sin()).product::<f64>()
    }

    /// Time derivative of the pressure.
    pub fn pressure_rate(&self, x: &[f64; 3], t: f64) -> f64 {
        let (big, _) = self.warp(x);
        -self.omega()
            * (self.omega() * t).sin()
            * (0..3).map(|i| (self.k[i] * big[i]).sin()).product::<f64>()
    }

    /// Coefficients of `rho u_tt = div(c grad u)`: `1/(rho c^2)` and `1/rho`.
    pub fn material(&self) -> Material {
        let m1 = *self;
        let m2 = *self;
        Material::Scalar {
            rho: Box::new(move |x| 1.0 / (m1.rho(x) * m1.c(x).powi(2))),
            c: Box::new(move |x| 1.0 / m2.rho(x)),
        }
    }
}

/// Settings of one convergence run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub k: u32,
    pub cfl: f64,
    pub distortion: f64,
    pub power_tol: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            k: 2,
            cfl: 0.99,
            distortion: 0.15,
            power_tol: 1e-5,
        }
    }
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub dofs: usize,
    pub h: f64,
    pub rms: f64,
    pub steps: usize,
    pub dt: f64,
    pub seconds: f64,
}

/// Runs the manufactured problem to `T = 4 pi / omega` on one block mesh.
pub fn run_manufactured(
    element: &ReferenceElement,
    mode: StiffnessMode,
    sampling: Sampling,
    cells: usize,
    problem: &AcousticManufactured,
    settings: &RunSettings,
) -> Result<ConvergenceRow> {
    let start_time = Instant::now();
    let mesh = build_block_mesh([cells; 3], problem.domain(), settings.distortion)?;
    let wp = WaveProblem::new(
        element.clone(),
        mesh,
        mode,
        Boundary::Neumann,
        sampling,
        &problem.material(),
    )?;
    let sigma = estimate_sigma_max(&wp, settings.power_tol, 100_000)?;
    let dt_cap = settings.cfl * stable_dt(sigma, settings.k)?;
    let t_end = problem.final_time();
    let steps = (t_end / dt_cap).ceil() as usize;
    let dt = t_end / steps as f64;
    let u0 = wp.interpolate(|x| vec![problem.pressure(x, 0.0)]);
    let mut state = start(&wp, &u0, None, dt, settings.k)?;
    for _ in 1..steps {
        dablain_step(&wp, &mut state);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (gi, x) in wp.dofs.coords.iter().enumerate() {
        if wp.is_free(gi) {
            sum += (state.u_curr[gi] - problem.pressure(x, t_end)).powi(2);
            count += 1;
        }
    }
    let rms = (sum / count as f64).sqrt();
    if !rms.is_finite() {
        return Err(Error::InvalidInput("simulation became unstable".into()));
    }
    let l = problem.domain();
    Ok(ConvergenceRow {
        cells,
        dofs: wp.free_unknowns(),
        h: (l.hi[0] - l.lo[0]) / cells as f64,
        rms,
        steps,
        dt,
        seconds: start_time.elapsed().as_secs_f64(),
    })
}

pub fn run_convergence_study(
    element: &ReferenceElement,
    mode: StiffnessMode,
    sampling: Sampling,
    sizes: &[usize],
    problem: &AcousticManufactured,
    settings: &RunSettings,
) -> Result<Vec<ConvergenceRow>> {
    sizes
        .iter()
        .map(|&c| run_manufactured(element, mode, sampling, c, problem, settings))
        .collect()
}

/// Observed order `q` of `rms ~ N^(-q/3)` by least squares in log-log.
pub fn observed_order(rows: &[ConvergenceRow]) -> Result<f64> {
    if rows.len() < 2 {
        return Err(Error::DegenerateFit {
            needed: 2,
            got: rows.len(),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.dofs as f64).cbrt().ln(), r.rms.ln()))
        .collect();
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    Ok(-(m * sxy - sx * sy) / (m * sxx - sx * sx))
}

/// Element used by the convergence study for a given stiffness mode.
pub fn default_element(id: ElementId) -> Result<ReferenceElement> {
    ReferenceElement::new(id)
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"MLTSNAP1";

/// Writes `MLTSNAP1`, the value count as `u64`, then little-endian `f64`s.
pub fn write_snapshot(path: &Path, u: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * u.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(u.len() as u64).to_le_bytes());
    for v in u {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Vec<f64>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 16 || &buf[..8] != SNAPSHOT_MAGIC {
        return Err(Error::InvalidInput("not a snapshot file".into()));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    if buf.len() != 16 + 8 * n {
        return Err(Error::InvalidInput("truncated snapshot".into()));
    }
    Ok(buf[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
