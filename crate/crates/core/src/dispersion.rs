//! Plane-wave dispersion analysis on a periodic cell.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    matvec_exact_scalar, matvec_quad_scalar, transform_scalar, transform_scalar_constant,
    ElementGeometry, OpCount,
};
use crate::linalg;
use crate::mesh::PeriodicCell;
use crate::refelement::{KernelTables, ReferenceElement};

/// How element stiffness matrices are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StiffnessMode {
    Exact,
    Rule,
}

/// Stability constants `c_K` of the order-`2K` Dablain scheme, `K = 1..=4`.
pub const C_K: [f64; 4] = [4.0, 12.0, 7.57, 21.48];

pub fn c_k(k: u32) -> Result<f64> {
    C_K.get((k as usize).wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::InvalidInput(format!("time order K = {k} not in 1..=4")))
}

/// Average element volume of the honeycomb.
pub fn honeycomb_volume() -> f64 {
    2.0 * 3f64.sqrt() / 27.0
}

/// Elements per wavelength `(lambda^3 / |e|_av)^(1/3)`.
pub fn elements_per_wavelength(lambda: f64, avg_volume: f64) -> f64 {
    (lambda.powi(3) / avg_volume).cbrt()
}

pub fn wavelength_for(n_e: f64, avg_volume: f64) -> f64 {
    n_e * avg_volume.cbrt()
}

/// Dense element stiffness matrix with unit coefficient.
pub fn element_stiffness(t: &KernelTables, g: &ElementGeometry, mode: StiffnessMode) -> DMatrix<f64> {
    let n = t.n();
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut ops = OpCount::default();
    let cs = transform_scalar_constant(1.0, g);
    let ss = transform_scalar(&vec![1.0; t.n_quad()], &t.quad_weights, g);
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        match mode {
            StiffnessMode::Exact => matvec_exact_scalar(t, &cs, &e, &mut col, &mut ops),
            StiffnessMode::Rule => matvec_quad_scalar(t, &ss, &e, &mut col, &mut ops),
        }
        a.set_column(j, &nalgebra::DVector::from_column_slice(&col));
    }
    a
}

/// Mass diagonal and translated stiffness blocks of a periodic cell.
#[derive(Debug, Clone)]
pub struct BlochOperator {
    pub mass: Vec<f64>,
    pub blocks: BTreeMap<[i32; 3], DMatrix<f64>>,
    pub transform: Matrix3<f64>,
    pub avg_volume: f64,
}

impl BlochOperator {
    pub fn n0(&self) -> usize {
        self.mass.len()
    }

    /// `sum_k exp(i kappa . T k) A_k`.
    pub fn phased_stiffness(&self, kappa: &Vector3<f64>) -> DMatrix<Complex64> {
        let n = self.n0();
        let mut h = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (k, a) in &self.blocks {
            let shift = self.transform * Vector3::new(k[0] as f64, k[1] as f64, k[2] as f64);
            let phase = Complex64::from_polar(1.0, kappa.dot(&shift));
            h.zip_apply(a, |z, x| *z += phase * x);
        }
        h
    }
}

/// Assembles `M` and the blocks `A^(0,k)` for `rho = c = 1`.
pub fn assemble_bloch_operator(
    cell: &PeriodicCell,
    element: &ReferenceElement,
    mode: StiffnessMode,
) -> BlochOperator {
    let n0 = cell.n0();
    let t = &element.tables;
    let mut mass = vec![0.0; n0];
    let mut blocks: BTreeMap<[i32; 3], DMatrix<f64>> = BTreeMap::new();
    for (g, nodes) in cell.geometry.iter().zip(&cell.nodes) {
        let a = element_stiffness(t, g, mode);
        for (i, &(oi, ki)) in nodes.iter().enumerate() {
            mass[oi] += g.det * t.mass_weights[i];
            for (j, &(oj, kj)) in nodes.iter().enumerate() {
                let k = [kj[0] - ki[0], kj[1] - ki[1], kj[2] - ki[2]];
                let b = blocks.entry(k).or_insert_with(|| DMatrix::zeros(n0, n0));
                b[(oi, oj)] += a[(i, j)];
            }
        }
    }
    BlochOperator {
        mass,
        blocks,
        transform: cell.transform,
        avg_volume: cell.average_volume(),
    }
}

/// Hermitian form `M^{-1/2} (sum_k e^{i kappa.Tk} A_k) M^{-1/2}` of `S(kappa)`.
pub fn bloch_matrix(op: &BlochOperator, kappa: &Vector3<f64>) -> DMatrix<Complex64> {
    let mut h = op.phased_stiffness(kappa);
    let s: Vec<f64> = op.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let n = op.n0();
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] *= s[i] * s[j];
        }
    }
    // remove rounding asymmetry
    let ht = h.adjoint();
    (h + ht) * Complex64::new(0.5, 0.0)
}

pub fn bloch_eigenvalues(op: &BlochOperator, kappa: &Vector3<f64>) -> Result<Vec<f64>> {
    linalg::hermitian_eigenvalues(&bloch_matrix(op, kappa))
}

/// Amplification polynomial `sum_{k=0}^K (-dt^2 s)^k / (2k)!`.
pub fn stability_polynomial(s: f64, dt: f64, k: u32) -> f64 {
    let z = -dt * dt * s;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..=k {
        term *= z / ((2 * j - 1) as f64 * (2 * j) as f64);
        sum += term;
    }
    sum
}

/// Numerical angular frequency; `None` when the scheme is unstable for `s`.
/// `dt = 0` gives the semi-discrete value `sqrt(s)`.
pub fn numerical_omega(s: f64, dt: f64, k: u32) -> Option<f64> {
    if dt == 0.0 {
        return Some(s.max(0.0).sqrt());
    }
    let arg = stability_polynomial(s.max(0.0), dt, k);
    if !(-1.0..=1.0).contains(&arg) {
        return None;
    }
    Some(arg.acos() / dt)
}

/// Deterministic near-uniform unit vectors (spherical Fibonacci lattice).
pub fn fibonacci_directions(n: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Time discretization used when converting eigenvalues to speeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeScheme {
    pub k: u32,
    /// `0` for the semi-discrete limit.
    pub dt: f64,
}

/// Relative phase-speed error for one wave vector: the smallest error over
/// branches whose frequency lies within a factor 3 of the exact one.
pub fn direction_error(op: &BlochOperator, kappa: &Vector3<f64>, scheme: TimeScheme) -> Result<f64> {
    let omega = kappa.norm();
    let s = bloch_eigenvalues(op, kappa)?;
    let mut best = f64::INFINITY;
    let mut best_any = f64::INFINITY;
    for si in s {
        let Some(wh) = numerical_omega(si, scheme.dt, scheme.k) else {
            continue;
        };
        let err = (1.0 - wh / omega).abs();
        best_any = best_any.min(err);
        if wh >= omega / 3.0 && wh <= omega * 3.0 {
            best = best.min(err);
        }
    }
    Ok(if best.is_finite() { best } else { best_any })
}

/// `sup` over sampled directions of the branch-matched speed error.
pub fn dispersion_error(
    op: &BlochOperator,
    lambda: f64,
    scheme: TimeScheme,
    directions: &[Vector3<f64>],
) -> Result<f64> {
    let kn = 2.0 * PI / lambda;
    let errs: Vec<f64> = directions
        .par_iter()
        .map(|d| direction_error(op, &(d * kn), scheme))
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Largest eigenvalue over `kappa = 2 pi T^{-T} y`, `y` on an `m^3` grid in
/// `[0,1)^3`, followed by `levels` rounds of local refinement at half the
/// previous spacing around the current maximizer.
pub fn max_spatial_eigenvalue(op: &BlochOperator, m: usize, levels: usize) -> Result<f64> {
    Ok(max_spatial_mode(op, m, levels)?.0)
}

/// As [`max_spatial_eigenvalue`], also returning the maximizing wave vector.
pub fn max_spatial_mode(op: &BlochOperator, m: usize, levels: usize) -> Result<(f64, Vector3<f64>)> {
    let tinv_t = op
        .transform
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular lattice transform".into()))?
        .transpose();
    let top = |y: &Vector3<f64>| -> Result<f64> {
        let kappa = tinv_t * (y * 2.0 * PI);
        Ok(*bloch_eigenvalues(op, &kappa)?.last().unwrap())
    };
    let grid: Vec<Vector3<f64>> = (0..m * m * m)
        .map(|i| {
            Vector3::new(
                (i % m) as f64 / m as f64,
                ((i / m) % m) as f64 / m as f64,
                (i / (m * m)) as f64 / m as f64,
            )
        })
        .collect();
    let vals: Vec<f64> = grid.par_iter().map(top).collect::<Result<_>>()?;
    let (mut best_y, mut best) = (grid[0], vals[0]);
    for (y, v) in grid.iter().zip(&vals) {
        if *v > best {
            best = *v;
            best_y = *y;
        }
    }
    let mut h = 1.0 / m as f64;
    for _ in 0..levels {
        h *= 0.5;
        let cands: Vec<Vector3<f64>> = (0..27)
            .filter(|&i| i != 13)
            .map(|i| {
                best_y
                    + Vector3::new(
                        (i % 3) as f64 - 1.0,
                        ((i / 3) % 3) as f64 - 1.0,
                        (i / 9) as f64 - 1.0,
                    ) * h
            })
            .collect();
        let vals: Vec<f64> = cands.par_iter().map(top).collect::<Result<_>>()?;
        for (y, v) in cands.iter().zip(&vals) {
            if *v > best {
                best = *v;
                best_y = *y;
            }
        }
    }
    Ok((best, tinv_t * (best_y * 2.0 * PI)))
}

pub fn dt_max(s_max: f64, k: u32) -> Result<f64> {
    Ok((c_k(k)? / s_max).sqrt())
}

/// Least-squares fit `e = coef * N^(-exponent)` over points with `e < 0.1`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, e)| *n > 0.0 && *e > 0.0 && *e < 0.1)
        .map(|(n, e)| (n.ln(), e.ln()))
        .collect();
    if used.len() < 3 {
        return Err(Error::DegenerateFit {
            needed: 3,
            got: used.len(),
        });
    }
    let m = used.len() as f64;
    let sx: f64 = used.iter().map(|p| p.0).sum();
    let sy: f64 = used.iter().map(|p| p.1).sum();
    let sxx: f64 = used.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = used.iter().map(|p| p.0 * p.1).sum();
    let den = m * sxx - sx * sx;
    if den.abs() < 1e-300 {
        return Err(Error::DegenerateFit {
            needed: 3,
            got: used.len(),
        });
    }
    let slope = (m * sxy - sx * sy) / den;
    let icept = (sy - slope * sx) / m;
    Ok((icept.exp(), -slope))
}

/// Coefficient `C` of `e = C N^(-exponent)` with the exponent held fixed
/// (geometric mean over the resolved points).
pub fn fit_coefficient(points: &[(f64, f64)], exponent: f64) -> Result<f64> {
    let used: Vec<f64> = points
        .iter()
        .filter(|(n, e)| *n > 0.0 && *e > 0.0 && *e < 0.1)
        .map(|(n, e)| e.ln() + exponent * n.ln())
        .collect();
    if used.is_empty() {
        return Err(Error::DegenerateFit { needed: 1, got: 0 });
    }
    Ok((used.iter().sum::<f64>() / used.len() as f64).exp())
}

/// One row of a dispersion sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub n_e: f64,
    pub e_disp: f64,
}

/// Dispersion errors at the given numbers of elements per wavelength.
pub fn dispersion_sweep(
    op: &BlochOperator,
    n_es: &[f64],
    scheme: TimeScheme,
    n_directions: usize,
) -> Result<Vec<SweepPoint>> {
    let dirs = fibonacci_directions(n_directions);
    n_es.iter()
        .map(|&n_e| {
            let lambda = wavelength_for(n_e, op.avg_volume);
            Ok(SweepPoint {
                lambda,
                n_e,
                e_disp: dispersion_error(op, lambda, scheme, &dirs)?,
            })
        })
        .collect()
}

/// Default sweep: `N_E = 8 * 2^(j/2)`, `j = 0..=4`.
pub fn default_sweep() -> Vec<f64> {
    (0..=4).map(|j| 8.0 * 2f64.powf(j as f64 / 2.0)).collect()
}

pub const DEFAULT_DIRECTIONS: usize = 64;

/// Sweep, stability limit and fits for one method.
#[derive(Debug, Clone, Serialize)]
pub struct DispersionResult {
    pub method: String,
    pub k: u32,
    pub s_max: f64,
    pub dt_max: f64,
    pub points: Vec<SweepPoint>,
    /// Free two-parameter fit.
    pub fit_coefficient: f64,
    pub fit_exponent: f64,
    /// Coefficient with the exponent fixed to `2p`.
    pub coefficient: f64,
    pub order: f64,
}

/// Runs the full analysis on the honeycomb with `dt = dt_max`.
pub fn analyze(
    method: &str,
    element: &ReferenceElement,
    mode: StiffnessMode,
    k: u32,
    n_es: &[f64],
    n_directions: usize,
) -> Result<DispersionResult> {
    let cell = PeriodicCell::honeycomb(&element.nodes)?;
    let op = assemble_bloch_operator(&cell, element, mode);
    let s_max = max_spatial_eigenvalue(&op, 16, 6)?;
    let dt = dt_max(s_max, k)?;
    let points = dispersion_sweep(&op, n_es, TimeScheme { k, dt }, n_directions)?;
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.n_e, p.e_disp)).collect();
    let (free_coef, free_exp) = fit_power_law(&pairs)?;
    let order = 2.0 * element.id.degree() as f64;
    let coefficient = fit_coefficient(&pairs, order)?;
    Ok(DispersionResult {
        method: method.to_string(),
        k,
        s_max,
        dt_max: dt,
        points,
        fit_coefficient: free_coef,
        fit_exponent: free_exp,
        coefficient,
        order,
    })
}
