//! Symmetric quadrature rules for the element stiffness matrices.
//!
//! Builtin rules and their generator sets, the exactness and positivity
//! checks, the rule file format, and a Newton-based finder for the moment
//! equations of a given orbit configuration.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::element_id::ElementId;
use crate::error::{Error, Result};
use crate::poly::BaryPoly;
use crate::refgeom::{permutations, BarycentricPoint, OrbitType, SymmetricOrbit, REF_VOLUME};

/// One orbit of a rule together with the weight of each of its points.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleEntry {
    pub orbit: SymmetricOrbit,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub label: String,
    pub entries: Vec<RuleEntry>,
}

impl QuadratureRule {
    pub fn new(label: impl Into<String>, entries: Vec<RuleEntry>) -> Self {
        QuadratureRule {
            label: label.into(),
            entries,
        }
    }

    /// One-point rule at the centroid with weight `1/6`.
    pub fn centroid() -> Self {
        QuadratureRule::new(
            "centroid",
            vec![RuleEntry {
                orbit: SymmetricOrbit::centroid(),
                weight: REF_VOLUME,
            }],
        )
    }

    pub fn point_count(&self) -> usize {
        self.entries.iter().map(|e| e.orbit.size()).sum()
    }

    /// `sum(orbit_size * weight)`; equals the reference volume for a rule
    /// that integrates constants exactly.
    pub fn weight_sum(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.orbit.size() as f64 * e.weight)
            .sum()
    }

    /// Expanded points in entry order.
    pub fn points(&self) -> Vec<BarycentricPoint> {
        self.entries.iter().flat_map(|e| e.orbit.points()).collect()
    }

    /// Expanded per-point weights, aligned with [`QuadratureRule::points`].
    pub fn weights(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat(e.weight).take(e.orbit.size()))
            .collect()
    }

    pub fn min_weight(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.weight)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn count_by_type(&self, kind: OrbitType) -> usize {
        self.entries.iter().filter(|e| e.orbit.kind == kind).count()
    }

    pub fn configuration(&self) -> Configuration {
        Configuration {
            k4: self.count_by_type(OrbitType::S4),
            k31: self.count_by_type(OrbitType::S31),
            k22: self.count_by_type(OrbitType::S22),
            k211: self.count_by_type(OrbitType::S211),
            k1111: self.count_by_type(OrbitType::S1111),
        }
    }

    /// Quadrature sum of `f`.
    pub fn apply(&self, f: &BaryPoly) -> f64 {
        self.entries
            .iter()
            .map(|e| e.weight * e.orbit.points().iter().map(|p| f.eval(&p.0)).sum::<f64>())
            .sum()
    }

    /// Canonical parametrization with orbits sorted by (type, first parameter).
    pub fn canonical(&self) -> QuadratureRule {
        let mut entries: Vec<RuleEntry> = self
            .entries
            .iter()
            .map(|e| RuleEntry {
                orbit: e.orbit.canonical(),
                weight: e.weight,
            })
            .collect();
        entries.sort_by(|a, b| {
            a.orbit.kind.cmp(&b.orbit.kind).then_with(|| {
                let pa = a.orbit.params.first().copied().unwrap_or(0.0);
                let pb = b.orbit.params.first().copied().unwrap_or(0.0);
                pa.partial_cmp(&pb).unwrap()
            })
        });
        QuadratureRule {
            label: self.label.clone(),
            entries,
        }
    }

    pub fn all_inside(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.orbit.is_inside(tol))
    }

    pub fn has_degenerate_orbit(&self) -> bool {
        self.entries.iter().any(|e| e.orbit.is_degenerate())
    }

    /// Whether two orbits share a point.
    pub fn has_coincident_orbits(&self) -> bool {
        for i in 0..self.entries.len() {
            let bi = self.entries[i].orbit.base_point();
            for j in 0..i {
                if self.entries[j].orbit.kind == self.entries[i].orbit.kind
                    && self.entries[j].orbit.contains(&bi, 1e-10)
                {
                    return true;
                }
            }
        }
        false
    }
}

/// Largest parameter/weight difference between two rules after
/// canonicalization; infinite if their configurations differ.
pub fn rule_distance(a: &QuadratureRule, b: &QuadratureRule) -> f64 {
    let a = a.canonical();
    let b = b.canonical();
    if a.entries.len() != b.entries.len() {
        return f64::INFINITY;
    }
    let mut d: f64 = 0.0;
    for (x, y) in a.entries.iter().zip(&b.entries) {
        if x.orbit.kind != y.orbit.kind {
            return f64::INFINITY;
        }
        d = d.max((x.weight - y.weight).abs());
        for (p, q) in x.orbit.params.iter().zip(&y.orbit.params) {
            d = d.max((p - q).abs());
        }
    }
    d
}

/// Number of distinct orbits per point type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub k4: usize,
    pub k31: usize,
    pub k22: usize,
    pub k211: usize,
    pub k1111: usize,
}

impl Configuration {
    pub fn param_count(&self) -> usize {
        self.k4 + 2 * self.k31 + 2 * self.k22 + 3 * self.k211 + 4 * self.k1111
    }

    pub fn point_count(&self) -> usize {
        self.k4 + 4 * self.k31 + 6 * self.k22 + 12 * self.k211 + 24 * self.k1111
    }

    /// Orbit types in the fixed order `[4], [3,1], [2,2], [2,1,1], [1,1,1,1]`.
    pub fn orbit_kinds(&self) -> Vec<OrbitType> {
        let mut v = Vec::new();
        v.extend(std::iter::repeat(OrbitType::S4).take(self.k4));
        v.extend(std::iter::repeat(OrbitType::S31).take(self.k31));
        v.extend(std::iter::repeat(OrbitType::S22).take(self.k22));
        v.extend(std::iter::repeat(OrbitType::S211).take(self.k211));
        v.extend(std::iter::repeat(OrbitType::S1111).take(self.k1111));
        v
    }
}

/// A polynomial whose symmetric images span one class of integrands.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricGenerator {
    pub name: String,
    pub poly: BaryPoly,
}

impl SymmetricGenerator {
    pub fn new(name: impl Into<String>, poly: BaryPoly) -> Self {
        SymmetricGenerator {
            name: name.into(),
            poly,
        }
    }

    /// The 24 permuted copies `f o s` (with repetitions).
    pub fn images(&self) -> Vec<BaryPoly> {
        permutations().iter().map(|p| self.poly.permuted(p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSet {
    pub label: String,
    pub generators: Vec<SymmetricGenerator>,
}

impl GeneratorSet {
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn max_degree(&self) -> u32 {
        self.generators.iter().map(|g| g.poly.degree()).max().unwrap_or(0)
    }
}

const C31_1: f64 = 0.09273525031089123;

/// The stiffness quadrature rule paired with `id`.
pub fn builtin_stiffness_rule(id: ElementId) -> QuadratureRule {
    let s31 = |c: f64| SymmetricOrbit {
        kind: OrbitType::S31,
        params: vec![c],
    };
    let s22 = |d: f64| SymmetricOrbit {
        kind: OrbitType::S22,
        params: vec![d],
    };
    let s211 = |f1: f64, f2: f64| SymmetricOrbit {
        kind: OrbitType::S211,
        params: vec![f1, f2],
    };
    let e = |orbit: SymmetricOrbit, weight: f64| RuleEntry { orbit, weight };
    match id {
        ElementId::P2n15 => QuadratureRule::new(
            "q14",
            vec![
                e(s31(C31_1), 0.01224884051939366),
                e(s31(0.3108859192633006), 0.01878132095300264),
                e(s22(0.04550370412564965), 0.007091003462846911),
            ],
        ),
        ElementId::P3n32 => QuadratureRule::new(
            "q21",
            vec![
                e(s31(0.08360982293995379), 0.008382813462606309),
                e(s31(0.3195556046935656), 0.01062803097330636),
                e(s211(0.06366100187501753, 0.3362519222398494), 0.005973459577178217),
                e(SymmetricOrbit::centroid(), 0.01894177399687740),
            ],
        ),
        ElementId::P4n60 => QuadratureRule::new(
            "q51",
            vec![
                e(s31(0.04010756377220036), 0.001076330088382485),
                e(s31(0.1881144601918900), 0.006422430307819483),
                e(s22(0.1124010568611476), 0.003859721113202450),
                e(s211(0.04781990270450464, 0.2053222493389064), 0.003162722714222902),
                e(s211(0.2347999378738287, 0.03405863749492695), 0.004715130256124021),
                e(s211(0.4614535776221135, 0.06693547308143162), 0.001320748780834370),
                e(SymmetricOrbit::centroid(), 0.003130077388468573),
            ],
        ),
        ElementId::P4n61 | ElementId::P4n65 => QuadratureRule::new(
            "q60",
            vec![
                e(s31(0.04091036488546224), 0.001137453809249273),
                e(s31(0.1942594527940223), 0.006907244220995018),
                e(s31(0.3166409312612929), 0.004458749819772567),
                e(s22(0.02776256108257648), 0.001389883779363477),
                e(s22(0.1022199785693040), 0.004236295194116969),
                e(s211(0.03511432271187172, 0.2097218125202450), 0.001788418107829456),
                e(s211(0.1790174868402900, 0.03980830656880513), 0.003642034272731381),
                e(s211(0.4192720711456938, 0.008950317872961031), 0.001477531071582210),
            ],
        ),
    }
}

fn mono(a: u32, b: u32, c: u32, d: u32) -> BaryPoly {
    BaryPoly::monomial([a, b, c, d])
}

/// Builds a generator from a product of named factors.
fn gen(name: &str, factors: &[&BaryPoly]) -> SymmetricGenerator {
    let mut p = BaryPoly::constant(1.0);
    for f in factors {
        p = &p * f;
    }
    SymmetricGenerator::new(name, p)
}

/// The generator set whose symmetric span contains the integrands that the
/// paired stiffness rule must integrate exactly.
pub fn builtin_generator_set(id: ElementId) -> GeneratorSet {
    let bf = BaryPoly::face_bubble();
    let be = BaryPoly::interior_bubble();
    let x1 = mono(1, 0, 0, 0);
    let x1x2 = mono(1, 1, 0, 0);
    let x1s_x2 = mono(2, 1, 0, 0);
    let x1c_x2s = mono(3, 2, 0, 0);
    let x1q_x2c = mono(4, 3, 0, 0);
    let x1q_x2q = mono(4, 4, 0, 0);

    let polys = || {
        vec![
            gen("x1", &[&x1]),
            gen("x1^2 x2", &[&x1s_x2]),
            gen("x1^3 x2^2", &[&x1c_x2s]),
        ]
    };

    match id {
        ElementId::P2n15 => {
            let mut g = polys();
            g.push(gen("bf x1", &[&bf, &x1]));
            g.push(gen("bf x1 x2", &[&bf, &x1x2]));
            g.push(gen("be x1", &[&be, &x1]));
            GeneratorSet {
                label: "V = P5".into(),
                generators: g,
            }
        }
        ElementId::P3n32 => {
            let mut g = polys();
            g.push(gen("bf x1", &[&bf, &x1]));
            g.push(gen("bf x1^2 x2", &[&bf, &x1s_x2]));
            g.push(gen("bf^2", &[&bf, &bf]));
            g.push(gen("be x1", &[&be, &x1]));
            g.push(gen("be x1 x2", &[&be, &x1x2]));
            GeneratorSet {
                label: "V = P5 + Bf P3".into(),
                generators: g,
            }
        }
        ElementId::P4n60 => {
            let mut g = polys();
            g.push(gen("x1^4 x2^3", &[&x1q_x2c]));
            g.push(gen("bf x1", &[&bf, &x1]));
            g.push(gen("bf x1^2 x2", &[&bf, &x1s_x2]));
            g.push(gen("bf x1^3 x2^2", &[&bf, &x1c_x2s]));
            g.push(gen("bf^2 x1", &[&bf, &bf, &x1]));
            g.push(gen("bf^2 x1^2 x2", &[&bf, &bf, &x1s_x2]));
            g.push(gen("bf^3", &[&bf, &bf, &bf]));
            g.push(gen("be x1", &[&be, &x1]));
            g.push(gen("be x1^2 x2", &[&be, &x1s_x2]));
            g.push(gen("be x1^3 x2^2", &[&be, &x1c_x2s]));
            g.push(gen("be bf x1", &[&be, &bf, &x1]));
            g.push(gen("be bf x1 x2", &[&be, &bf, &x1x2]));
            g.push(gen("be^2 x1", &[&be, &be, &x1]));
            GeneratorSet {
                label: "V = P7 + Bf(P5 + Bf P3) + Be P5".into(),
                generators: g,
            }
        }
        ElementId::P4n61 | ElementId::P4n65 => {
            let mut g = polys();
            g.push(gen("x1^4 x2^3", &[&x1q_x2c]));
            g.push(gen("x1^4 x2^4", &[&x1q_x2q]));
            g.push(gen("bf x1", &[&bf, &x1]));
            g.push(gen("bf x1^2 x2", &[&bf, &x1s_x2]));
            g.push(gen("bf x1^3 x2^2", &[&bf, &x1c_x2s]));
            g.push(gen("bf^2 x1", &[&bf, &bf, &x1]));
            g.push(gen("bf^2 x1^2 x2", &[&bf, &bf, &x1s_x2]));
            g.push(gen("bf^3", &[&bf, &bf, &bf]));
            g.push(gen("be x1", &[&be, &x1]));
            g.push(gen("be x1^2 x2", &[&be, &x1s_x2]));
            g.push(gen("be x1^3 x2^2", &[&be, &x1c_x2s]));
            g.push(gen("be bf x1", &[&be, &bf, &x1]));
            g.push(gen("be bf x1^2 x2", &[&be, &bf, &x1s_x2]));
            g.push(gen("be bf^2", &[&be, &bf, &bf]));
            g.push(gen("be^2 x1", &[&be, &be, &x1]));
            g.push(gen("be^2 x1 x2", &[&be, &be, &x1x2]));
            GeneratorSet {
                label: "V = P8 + Bf^2 P3 + Be(P5 + Bf P3)".into(),
                generators: g,
            }
        }
    }
}

/// Largest `|exact - quadrature|` over every generator and each of its 24
/// permuted copies.
pub fn exactness_defect(rule: &QuadratureRule, gens: &GeneratorSet) -> f64 {
    let points = rule.points();
    let weights = rule.weights();
    let mut worst: f64 = 0.0;
    for g in &gens.generators {
        for f in g.images() {
            let q: f64 = points
                .iter()
                .zip(&weights)
                .map(|(p, w)| w * f.eval(&p.0))
                .sum();
            worst = worst.max((f.integrate() - q).abs());
        }
    }
    worst
}

/// Condition C6: every weight strictly positive.
pub fn check_positivity(rule: &QuadratureRule) -> bool {
    rule.entries.iter().all(|e| e.weight > 0.0)
}

// ---------------------------------------------------------------------------
// Moment-equation finder
// ---------------------------------------------------------------------------

/// An orbit slot of the moment system; parameters may be pinned to a value.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSlot {
    pub kind: OrbitType,
    pub fixed: Vec<Option<f64>>,
}

impl OrbitSlot {
    pub fn free(kind: OrbitType) -> Self {
        OrbitSlot {
            kind,
            fixed: vec![None; kind.param_count()],
        }
    }

    pub fn pinned(kind: OrbitType, fixed: Vec<Option<f64>>) -> Self {
        assert_eq!(fixed.len(), kind.param_count());
        OrbitSlot { kind, fixed }
    }

    fn free_count(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_none()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinderOptions {
    pub max_trials: usize,
    pub max_newton_iters: usize,
    /// Convergence threshold on the scaled residual.
    pub tol: f64,
    pub seed: u64,
}

impl Default for FinderOptions {
    fn default() -> Self {
        FinderOptions {
            max_trials: 1000,
            max_newton_iters: 200,
            tol: 1e-13,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TrialStats {
    pub trials: usize,
    pub converged_inadmissible: usize,
    pub diverged: usize,
}

#[derive(Debug, Clone)]
pub struct FoundRule {
    pub rule: QuadratureRule,
    pub trial: usize,
    pub residual: f64,
    /// Scaled residual norm at every Newton iterate.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FinderOutcome {
    pub found: Option<FoundRule>,
    pub stats: TrialStats,
}

/// Admissibility screen applied to converged candidates (e.g. condition C7).
pub type Admissibility<'a> = &'a (dyn Fn(&QuadratureRule) -> bool + Sync);

/// Nonlinear moment system: one equation per generator, unknowns are the
/// orbit weights followed by the free orbit parameters.
pub struct MomentSystem {
    slots: Vec<OrbitSlot>,
    gens: Vec<BaryPoly>,
    exact: Vec<f64>,
    scale: Vec<f64>,
    label: String,
}

impl MomentSystem {
    pub fn new(slots: Vec<OrbitSlot>, gens: &GeneratorSet, label: impl Into<String>) -> Self {
        let polys: Vec<BaryPoly> = gens.generators.iter().map(|g| g.poly.clone()).collect();
        Self::from_polys(slots, polys, label)
    }

    pub fn from_polys(slots: Vec<OrbitSlot>, gens: Vec<BaryPoly>, label: impl Into<String>) -> Self {
        let exact = gens.iter().map(|g| g.integrate()).collect();
        let scale = gens.iter().map(|g| g.integral_scale().max(1e-300)).collect();
        MomentSystem {
            slots,
            gens,
            exact,
            scale,
            label: label.into(),
        }
    }

    pub fn unknown_count(&self) -> usize {
        self.slots.len() + self.slots.iter().map(|s| s.free_count()).sum::<usize>()
    }

    pub fn equation_count(&self) -> usize {
        self.gens.len()
    }

    fn orbits(&self, x: &[f64]) -> Vec<SymmetricOrbit> {
        let mut k = self.slots.len();
        self.slots
            .iter()
            .map(|s| {
                let params = s
                    .fixed
                    .iter()
                    .map(|f| match f {
                        Some(v) => *v,
                        None => {
                            k += 1;
                            x[k - 1]
                        }
                    })
                    .collect();
                SymmetricOrbit {
                    kind: s.kind,
                    params,
                }
            })
            .collect()
    }

    pub fn rule(&self, x: &[f64]) -> QuadratureRule {
        let entries = self
            .orbits(x)
            .into_iter()
            .enumerate()
            .map(|(i, orbit)| RuleEntry {
                orbit,
                weight: x[i],
            })
            .collect();
        QuadratureRule::new(self.label.clone(), entries)
    }

    /// Scaled residual and its analytic Jacobian.
    pub fn evaluate(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.gens.len();
        let n = self.unknown_count();
        let mut r = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, n);
        let orbits = self.orbits(x);
        let mut col = self.slots.len();
        for (o, (slot, orbit)) in self.slots.iter().zip(&orbits).enumerate() {
            let w = x[o];
            let pts = orbit.points();
            let dpts = orbit.point_param_jacobians();
            let free: Vec<usize> = (0..slot.fixed.len())
                .filter(|&j| slot.fixed[j].is_none())
                .collect();
            for (i, g) in self.gens.iter().enumerate() {
                let mut sum = 0.0;
                let mut dsum = vec![0.0; free.len()];
                for (p, dp) in pts.iter().zip(&dpts) {
                    sum += g.eval(&p.0);
                    if !free.is_empty() {
                        let gb = g.grad_bary(&p.0);
                        for (fj, &j) in free.iter().enumerate() {
                            dsum[fj] += (0..4).map(|c| gb[c] * dp[c][j]).sum::<f64>();
                        }
                    }
                }
                r[i] += w * sum;
                jac[(i, o)] = sum / self.scale[i];
                for (fj, d) in dsum.iter().enumerate() {
                    jac[(i, col + fj)] = w * d / self.scale[i];
                }
            }
            col += free.len();
        }
        for i in 0..m {
            r[i] = (r[i] - self.exact[i]) / self.scale[i];
        }
        (r, jac)
    }

    /// Newton (Gauss-Newton for non-square systems) from `x0`.
    pub fn newton(&self, x0: &[f64], max_iters: usize, tol: f64) -> NewtonResult {
        let mut x = DVector::from_column_slice(x0);
        let mut history = Vec::new();
        let square = self.equation_count() == self.unknown_count();
        for _ in 0..max_iters {
            let (r, jac) = self.evaluate(x.as_slice());
            let rn = r.amax();
            history.push(rn);
            if !rn.is_finite() {
                return NewtonResult::diverged(x, history);
            }
            if rn < tol {
                return NewtonResult {
                    x: x.as_slice().to_vec(),
                    converged: true,
                    residual: rn,
                    history,
                };
            }
            let step = if square {
                match jac.clone().lu().solve(&(-&r)) {
                    Some(s) => s,
                    None => return NewtonResult::diverged(x, history),
                }
            } else {
                match jac.clone().svd(true, true).solve(&(-&r), 1e-14) {
                    Ok(s) => s,
                    Err(_) => return NewtonResult::diverged(x, history),
                }
            };
            x += step;
            if x.iter().any(|v| !v.is_finite() || v.abs() > 10.0) {
                return NewtonResult::diverged(x, history);
            }
        }
        let (r, _) = self.evaluate(x.as_slice());
        let rn = r.amax();
        history.push(rn);
        NewtonResult {
            converged: rn < tol,
            x: x.as_slice().to_vec(),
            residual: rn,
            history,
        }
    }

    /// Random starting point: weights uniform in `(0, 2/(6N))` per point,
    /// locations drawn inside the element.
    pub fn random_start(&self, rng: &mut impl Rng) -> Vec<f64> {
        let npts: usize = self.slots.iter().map(|s| s.kind.orbit_size()).sum();
        let wmax = 2.0 * REF_VOLUME / npts as f64;
        let mut x: Vec<f64> = self
            .slots
            .iter()
            .map(|_| rng.random_range(0.0..1.0) * wmax)
            .collect();
        for s in &self.slots {
            let draw: Vec<f64> = match s.kind {
                OrbitType::S4 => vec![],
                OrbitType::S31 => vec![rng.random_range(0.0..1.0 / 3.0)],
                OrbitType::S22 => vec![rng.random_range(0.0..0.5)],
                OrbitType::S211 => {
                    let f1 = rng.random_range(0.0..0.5);
                    let f2 = rng.random_range(0.0..1.0) * (1.0 - 2.0 * f1);
                    vec![f1, f2]
                }
                OrbitType::S1111 => {
                    let e: Vec<f64> = (0..4).map(|_| -rng.random_range(1e-12f64..1.0).ln()).collect();
                    let s: f64 = e.iter().sum();
                    vec![e[0] / s, e[1] / s, e[2] / s]
                }
            };
            for (j, f) in s.fixed.iter().enumerate() {
                if f.is_none() {
                    x.push(draw[j]);
                }
            }
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub converged: bool,
    pub residual: f64,
    pub history: Vec<f64>,
}

impl NewtonResult {
    fn diverged(x: DVector<f64>, history: Vec<f64>) -> Self {
        NewtonResult {
            x: x.as_slice().to_vec(),
            converged: false,
            residual: f64::INFINITY,
            history,
        }
    }
}

enum TrialResult {
    Admissible(FoundRule),
    Inadmissible,
    Diverged,
}

fn geometric_screen(rule: &QuadratureRule) -> bool {
    check_positivity(rule)
        && rule.all_inside(1e-12)
        && !rule.has_degenerate_orbit()
        && !rule.has_coincident_orbits()
}

/// One Newton solve from the start drawn for trial `t`.
fn run_trial(
    system: &MomentSystem,
    opts: &FinderOptions,
    admissibility: Option<Admissibility<'_>>,
    t: usize,
) -> TrialResult {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(t as u64);
    let x0 = system.random_start(&mut rng);
    let res = system.newton(&x0, opts.max_newton_iters, opts.tol);
    if !res.converged {
        return TrialResult::Diverged;
    }
    // polish: a couple of extra iterations past the threshold
    let res = {
        let polished = system.newton(&res.x, 3, 0.0);
        if polished.residual <= res.residual {
            let mut h = res.history.clone();
            h.extend_from_slice(&polished.history[1..]);
            NewtonResult {
                history: h,
                ..polished
            }
        } else {
            res
        }
    };
    let rule = system.rule(&res.x);
    if !geometric_screen(&rule) {
        return TrialResult::Inadmissible;
    }
    if let Some(check) = admissibility {
        if !check(&rule) {
            return TrialResult::Inadmissible;
        }
    }
    TrialResult::Admissible(FoundRule {
        rule,
        trial: t,
        residual: res.residual,
        residual_history: res.history,
    })
}

/// Runs trials in parallel batches, handing results to `visit` in trial
/// order until it returns `false`.
fn run_trials(
    system: &MomentSystem,
    opts: &FinderOptions,
    admissibility: Option<Admissibility<'_>>,
    mut visit: impl FnMut(TrialResult) -> bool,
) {
    let chunk = rayon::current_num_threads().max(1) * 4;
    let mut start = 0;
    while start < opts.max_trials {
        let end = (start + chunk).min(opts.max_trials);
        let results: Vec<TrialResult> = (start..end)
            .into_par_iter()
            .map(|t| run_trial(system, opts, admissibility, t))
            .collect();
        for r in results {
            if !visit(r) {
                return;
            }
        }
        start = end;
    }
}

/// Runs independently seeded Newton trials on a moment system and returns
/// the admissible solution with the smallest trial index.
pub fn search(
    system: &MomentSystem,
    opts: &FinderOptions,
    admissibility: Option<Admissibility<'_>>,
) -> FinderOutcome {
    let mut stats = TrialStats::default();
    let mut found = None;
    run_trials(system, opts, admissibility, |r| {
        stats.trials += 1;
        match r {
            TrialResult::Admissible(f) => {
                found = Some(f);
                return false;
            }
            TrialResult::Inadmissible => stats.converged_inadmissible += 1,
            TrialResult::Diverged => stats.diverged += 1,
        }
        true
    });
    FinderOutcome { found, stats }
}

/// Distinct admissible solutions over the whole trial budget, in order of
/// first discovery.
pub fn search_all(
    system: &MomentSystem,
    opts: &FinderOptions,
    admissibility: Option<Admissibility<'_>>,
) -> (Vec<FoundRule>, TrialStats) {
    let mut stats = TrialStats::default();
    let mut found: Vec<FoundRule> = Vec::new();
    run_trials(system, opts, admissibility, |r| {
        stats.trials += 1;
        match r {
            TrialResult::Admissible(f) => {
                if !found.iter().any(|g| rule_distance(&g.rule, &f.rule) < DISTINCT_TOL) {
                    found.push(f);
                }
            }
            TrialResult::Inadmissible => stats.converged_inadmissible += 1,
            TrialResult::Diverged => stats.diverged += 1,
        }
        true
    });
    (found, stats)
}

/// Rules closer than this are the same solution.
pub const DISTINCT_TOL: f64 = 1e-8;

/// Searches for a symmetric rule of the given configuration that integrates
/// the generator set exactly.
pub fn find_rule(
    config: &Configuration,
    gens: &GeneratorSet,
    opts: &FinderOptions,
    admissibility: Option<Admissibility<'_>>,
) -> Result<FinderOutcome> {
    if config.param_count() != gens.len() {
        return Err(Error::ConfigMismatch {
            params: config.param_count(),
            generators: gens.len(),
        });
    }
    let slots = config.orbit_kinds().into_iter().map(OrbitSlot::free).collect();
    let system = MomentSystem::new(slots, gens, format!("found-{}", gens.label));
    Ok(search(&system, opts, admissibility))
}

/// As [`find_rule`], but keeps every distinct admissible solution.
pub fn find_all_rules(
    config: &Configuration,
    gens: &GeneratorSet,
    opts: &FinderOptions,
    admissibility: Option<Admissibility<'_>>,
) -> Result<(Vec<FoundRule>, TrialStats)> {
    if config.param_count() != gens.len() {
        return Err(Error::ConfigMismatch {
            params: config.param_count(),
            generators: gens.len(),
        });
    }
    let slots = config.orbit_kinds().into_iter().map(OrbitSlot::free).collect();
    let system = MomentSystem::new(slots, gens, format!("found-{}", gens.label));
    Ok(search_all(&system, opts, admissibility))
}

// ---------------------------------------------------------------------------
// Rule files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleRole {
    Mass,
    Stiffness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    #[serde(rename = "type")]
    pub kind: OrbitType,
    pub params: Vec<f64>,
    pub weight: f64,
}

/// On-disk form of a rule (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFile {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_id: Option<ElementId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<RuleRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_label: Option<String>,
    pub orbits: Vec<OrbitRecord>,
}

impl RuleFile {
    pub fn from_rule(rule: &QuadratureRule) -> Self {
        RuleFile {
            label: rule.label.clone(),
            element_id: None,
            role: None,
            generator_label: None,
            orbits: rule
                .entries
                .iter()
                .map(|e| OrbitRecord {
                    kind: e.orbit.kind,
                    params: e.orbit.params.clone(),
                    weight: e.weight,
                })
                .collect(),
        }
    }

    pub fn to_rule(&self) -> Result<QuadratureRule> {
        let entries = self
            .orbits
            .iter()
            .map(|o| {
                Ok(RuleEntry {
                    orbit: SymmetricOrbit::new(o.kind, o.params.clone())?,
                    weight: o.weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QuadratureRule::new(self.label.clone(), entries))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule file serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_point_counts() {
        let counts: Vec<usize> = ElementId::ALL
            .iter()
            .map(|&id| builtin_stiffness_rule(id).point_count())
            .collect();
        assert_eq!(counts, vec![14, 21, 51, 60, 60]);
        assert_eq!(builtin_stiffness_rule(ElementId::P4n60).count_by_type(OrbitType::S211), 3);
    }

    #[test]
    fn builtin_generator_counts_match_configurations() {
        for id in ElementId::ALL {
            let rule = builtin_stiffness_rule(id);
            let gens = builtin_generator_set(id);
            assert_eq!(rule.configuration().param_count(), gens.len(), "{id}");
        }
        assert_eq!(builtin_generator_set(ElementId::P2n15).len(), 6);
        assert_eq!(builtin_generator_set(ElementId::P3n32).len(), 8);
        assert_eq!(builtin_generator_set(ElementId::P4n60).len(), 16);
        assert_eq!(builtin_generator_set(ElementId::P4n65).len(), 19);
    }

    #[test]
    fn builtin_rules_integrate_constants() {
        for id in ElementId::ALL {
            let r = builtin_stiffness_rule(id);
            assert!((r.weight_sum() - REF_VOLUME).abs() < 1e-13, "{id}");
        }
    }

    #[test]
    fn centroid_rule_defects() {
        let r = QuadratureRule::centroid();
        let lin = GeneratorSet {
            label: "x1".into(),
            generators: vec![SymmetricGenerator::new("x1", mono(1, 0, 0, 0))],
        };
        assert!(exactness_defect(&r, &lin) < 1e-17);
        let cubic = GeneratorSet {
            label: "x1^2 x2".into(),
            generators: vec![SymmetricGenerator::new("x1^2 x2", mono(2, 1, 0, 0))],
        };
        // 2!1!/6! = 1/360 exact vs (1/6)(1/64) from the centroid
        assert!((exactness_defect(&r, &cubic) - 1.0 / 5760.0).abs() < 1e-16);
    }

    #[test]
    fn positivity_is_strict() {
        let mut r = builtin_stiffness_rule(ElementId::P3n32);
        assert!(check_positivity(&r));
        r.entries[0].weight = 0.0;
        assert!(!check_positivity(&r));
        r.entries[0].weight = -1e-20;
        assert!(!check_positivity(&r));
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let config = Configuration {
            k31: 1,
            ..Default::default()
        };
        let gens = builtin_generator_set(ElementId::P2n15);
        let err = find_rule(&config, &gens, &FinderOptions::default(), None).unwrap_err();
        assert!(matches!(err, Error::ConfigMismatch { params: 2, generators: 6 }));
    }

    #[test]
    fn finder_recovers_centroid_rule() {
        let config = Configuration {
            k4: 1,
            ..Default::default()
        };
        let gens = GeneratorSet {
            label: "P1".into(),
            generators: vec![SymmetricGenerator::new("x1", mono(1, 0, 0, 0))],
        };
        let out = find_rule(&config, &gens, &FinderOptions::default(), None).unwrap();
        let found = out.found.unwrap();
        assert!((found.rule.entries[0].weight - REF_VOLUME).abs() < 1e-15);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let gens = builtin_generator_set(ElementId::P3n32);
        let config = builtin_stiffness_rule(ElementId::P3n32).configuration();
        let slots = config.orbit_kinds().into_iter().map(OrbitSlot::free).collect();
        let sys = MomentSystem::new(slots, &gens, "t");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = sys.random_start(&mut rng);
        let (_, jac) = sys.evaluate(&x);
        let h = 1e-6;
        for j in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (rp, _) = sys.evaluate(&xp);
            let (rm, _) = sys.evaluate(&xm);
            for i in 0..rp.len() {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                assert!((fd - jac[(i, j)]).abs() < 1e-6 * (1.0 + fd.abs()), "({i},{j}) {fd} vs {}", jac[(i, j)]);
            }
        }
    }

    #[test]
    fn rule_file_round_trip_is_lossless() {
        let rule = builtin_stiffness_rule(ElementId::P4n65);
        let text = RuleFile::from_rule(&rule).to_json();
        let back = RuleFile::from_json(&text).unwrap().to_rule().unwrap();
        assert_eq!(back, rule);
    }

    #[test]
    fn malformed_rule_file_reports_line() {
        let err = RuleFile::from_json("{\n \"label\": \"x\",\n \"orbits\": [ {\"type\": \"[9]\"} ]\n}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }
}
