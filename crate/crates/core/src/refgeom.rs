//! Barycentric geometry on the reference tetrahedron with vertices
//! (0,0,0), (1,0,0), (0,1,0), (0,0,1).
//!
//! The 24 affine self-maps of the reference tetrahedron act as permutations
//! of the four barycentric coordinates. Quadrature points and node sets are
//! stored as orbits under this group; [`SymmetricOrbit::expand`] produces the
//! individual points and [`classify_point`] goes the other way.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volume of the reference tetrahedron.
pub const REF_VOLUME: f64 = 1.0 / 6.0;

/// Coincidence tolerance used when checking whether an orbit collapses.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// A point given by its four barycentric coordinates `(x1, x2, x3, x4)`
/// where `x4 = 1 - x1 - x2 - x3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricPoint(pub [f64; 4]);

impl BarycentricPoint {
    pub fn from_cartesian(x: [f64; 3]) -> Self {
        BarycentricPoint([x[0], x[1], x[2], 1.0 - x[0] - x[1] - x[2]])
    }

    pub fn cartesian(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn coords(&self) -> [f64; 4] {
        self.0
    }

    /// True when all coordinates are `>= -tol`.
    pub fn is_inside(&self, tol: f64) -> bool {
        self.0.iter().all(|&c| c >= -tol)
    }

    pub fn sum_defect(&self) -> f64 {
        (self.0.iter().sum::<f64>() - 1.0).abs()
    }

    pub fn permuted(&self, perm: &[usize; 4]) -> Self {
        BarycentricPoint(permute4(&self.0, perm))
    }

    pub fn distance_inf(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Applies a permutation: `out[i] = v[perm[i]]`.
pub fn permute4<T: Copy>(v: &[T; 4], perm: &[usize; 4]) -> [T; 4] {
    [v[perm[0]], v[perm[1]], v[perm[2]], v[perm[3]]]
}

/// All 24 permutations of `{0,1,2,3}` in lexicographic order, identity first.
pub fn permutations() -> &'static [[usize; 4]; 24] {
    static PERMS: OnceLock<[[usize; 4]; 24]> = OnceLock::new();
    PERMS.get_or_init(|| {
        let mut out = [[0usize; 4]; 24];
        let mut k = 0;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        if a != b && a != c && a != d && b != c && b != d && c != d {
                            out[k] = [a, b, c, d];
                            k += 1;
                        }
                    }
                }
            }
        }
        out
    })
}

/// The five point types of a fully symmetric rule on the tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OrbitType {
    #[serde(rename = "[4]")]
    S4,
    #[serde(rename = "[3,1]")]
    S31,
    #[serde(rename = "[2,2]")]
    S22,
    #[serde(rename = "[2,1,1]")]
    S211,
    #[serde(rename = "[1,1,1,1]")]
    S1111,
}

impl OrbitType {
    pub const ALL: [OrbitType; 5] = [
        OrbitType::S4,
        OrbitType::S31,
        OrbitType::S22,
        OrbitType::S211,
        OrbitType::S1111,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            OrbitType::S4 => "[4]",
            OrbitType::S31 => "[3,1]",
            OrbitType::S22 => "[2,2]",
            OrbitType::S211 => "[2,1,1]",
            OrbitType::S1111 => "[1,1,1,1]",
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            OrbitType::S4 => 0,
            OrbitType::S31 | OrbitType::S22 => 1,
            OrbitType::S211 => 2,
            OrbitType::S1111 => 3,
        }
    }

    pub fn orbit_size(self) -> usize {
        match self {
            OrbitType::S4 => 1,
            OrbitType::S31 => 4,
            OrbitType::S22 => 6,
            OrbitType::S211 => 12,
            OrbitType::S1111 => 24,
        }
    }

    /// Slot labels of the base point; equal labels carry equal coordinates.
    fn labels(self) -> [u8; 4] {
        match self {
            OrbitType::S4 => [0, 0, 0, 0],
            OrbitType::S31 => [0, 0, 0, 1],
            OrbitType::S22 => [0, 0, 1, 1],
            OrbitType::S211 => [0, 0, 1, 2],
            OrbitType::S1111 => [0, 1, 2, 3],
        }
    }

    /// Each label value as an affine function `const + grad . params`.
    fn label_values(self) -> Vec<(f64, Vec<f64>)> {
        match self {
            OrbitType::S4 => vec![(0.25, vec![])],
            OrbitType::S31 => vec![(0.0, vec![1.0]), (1.0, vec![-3.0])],
            OrbitType::S22 => vec![(0.0, vec![1.0]), (0.5, vec![-1.0])],
            OrbitType::S211 => vec![
                (0.0, vec![1.0, 0.0]),
                (0.0, vec![0.0, 1.0]),
                (1.0, vec![-2.0, -1.0]),
            ],
            OrbitType::S1111 => vec![
                (0.0, vec![1.0, 0.0, 0.0]),
                (0.0, vec![0.0, 1.0, 0.0]),
                (0.0, vec![0.0, 0.0, 1.0]),
                (1.0, vec![-1.0, -1.0, -1.0]),
            ],
        }
    }

    /// Distinct arrangements of the base labels under the 24 permutations,
    /// in order of first appearance.
    pub fn arrangements(self) -> &'static [[u8; 4]] {
        static CACHE: OnceLock<Vec<Vec<[u8; 4]>>> = OnceLock::new();
        let all = CACHE.get_or_init(|| {
            OrbitType::ALL
                .iter()
                .map(|kind| {
                    let base = kind.labels();
                    let mut seen: Vec<[u8; 4]> = Vec::new();
                    for p in permutations() {
                        let a = permute4(&base, p);
                        if !seen.contains(&a) {
                            seen.push(a);
                        }
                    }
                    seen
                })
                .collect()
        });
        &all[self as usize]
    }
}

impl fmt::Display for OrbitType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for OrbitType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        match t.as_str() {
            "[4]" | "4" => Ok(OrbitType::S4),
            "[3,1]" | "31" => Ok(OrbitType::S31),
            "[2,2]" | "22" => Ok(OrbitType::S22),
            "[2,1,1]" | "211" => Ok(OrbitType::S211),
            "[1,1,1,1]" | "1111" => Ok(OrbitType::S1111),
            _ => Err(Error::Parse {
                line: 0,
                message: format!("unknown orbit type '{s}'"),
            }),
        }
    }
}

/// One equivalence class of points: an orbit type plus its free parameters.
///
/// Parameter conventions (barycentric base point):
/// `[3,1]`: `(c, c, c, 1-3c)`; `[2,2]`: `(d, d, 1/2-d, 1/2-d)`;
/// `[2,1,1]`: `(f1, f1, f2, 1-2f1-f2)`; `[1,1,1,1]`: `(g1, g2, g3, 1-g1-g2-g3)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricOrbit {
    #[serde(rename = "type")]
    pub kind: OrbitType,
    pub params: Vec<f64>,
}

impl SymmetricOrbit {
    pub fn new(kind: OrbitType, params: Vec<f64>) -> Result<Self> {
        if params.len() != kind.param_count() {
            return Err(Error::InvalidInput(format!(
                "orbit {} takes {} parameters, got {}",
                kind,
                kind.param_count(),
                params.len()
            )));
        }
        Ok(SymmetricOrbit { kind, params })
    }

    pub fn centroid() -> Self {
        SymmetricOrbit {
            kind: OrbitType::S4,
            params: vec![],
        }
    }

    pub fn size(&self) -> usize {
        self.kind.orbit_size()
    }

    fn label_coords(&self) -> Vec<f64> {
        self.kind
            .label_values()
            .iter()
            .map(|(c, g)| c + g.iter().zip(&self.params).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// The first point of the orbit.
    pub fn base_point(&self) -> BarycentricPoint {
        let vals = self.label_coords();
        let l = self.kind.labels();
        BarycentricPoint([
            vals[l[0] as usize],
            vals[l[1] as usize],
            vals[l[2] as usize],
            vals[l[3] as usize],
        ])
    }

    /// All `orbit_size` points without the degeneracy check.
    pub fn points(&self) -> Vec<BarycentricPoint> {
        let vals = self.label_coords();
        self.kind
            .arrangements()
            .iter()
            .map(|a| {
                BarycentricPoint([
                    vals[a[0] as usize],
                    vals[a[1] as usize],
                    vals[a[2] as usize],
                    vals[a[3] as usize],
                ])
            })
            .collect()
    }

    /// Derivatives of each expanded point's barycentric coordinates with
    /// respect to the orbit parameters: `out[point][coord][param]`.
    pub fn point_param_jacobians(&self) -> Vec<[Vec<f64>; 4]> {
        let lv = self.kind.label_values();
        self.kind
            .arrangements()
            .iter()
            .map(|a| {
                [
                    lv[a[0] as usize].1.clone(),
                    lv[a[1] as usize].1.clone(),
                    lv[a[2] as usize].1.clone(),
                    lv[a[3] as usize].1.clone(),
                ]
            })
            .collect()
    }

    /// Expands the orbit, failing if two of its points coincide.
    pub fn expand(&self) -> Result<Vec<BarycentricPoint>> {
        let pts = self.points();
        if self.is_degenerate_points(&pts) {
            return Err(Error::DegenerateOrbit(format!(
                "{} with parameters {:?}",
                self.kind, self.params
            )));
        }
        Ok(pts)
    }

    fn is_degenerate_points(&self, pts: &[BarycentricPoint]) -> bool {
        for i in 0..pts.len() {
            for j in 0..i {
                if pts[i].distance_inf(&pts[j]) < DEGENERACY_TOL {
                    return true;
                }
            }
        }
        false
    }

    pub fn is_degenerate(&self) -> bool {
        self.is_degenerate_points(&self.points())
    }

    pub fn is_inside(&self, tol: f64) -> bool {
        self.base_point().is_inside(tol)
    }

    /// Rewrites the parameters in canonical form: `[2,2]` takes the smaller
    /// of `d`, `1/2-d`; `[2,1,1]` takes the smaller single coordinate as `f2`;
    /// `[1,1,1,1]` sorts the coordinates and keeps the three smallest.
    pub fn canonical(&self) -> SymmetricOrbit {
        let b = self.base_point().0;
        let params = match self.kind {
            OrbitType::S4 => vec![],
            OrbitType::S31 => vec![self.params[0]],
            OrbitType::S22 => vec![self.params[0].min(0.5 - self.params[0])],
            OrbitType::S211 => vec![b[0], b[2].min(b[3])],
            OrbitType::S1111 => {
                let mut s = b;
                s.sort_by(|x, y| x.partial_cmp(y).unwrap());
                vec![s[0], s[1], s[2]]
            }
        };
        SymmetricOrbit {
            kind: self.kind,
            params,
        }
    }

    /// Whether `p` is one of this orbit's points.
    pub fn contains(&self, p: &BarycentricPoint, tol: f64) -> bool {
        self.points().iter().any(|q| q.distance_inf(p) <= tol)
    }
}

/// Exponents `(a, b, c, d)` of the barycentric monomial `x1^a x2^b x3^c x4^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MonomialExponent(pub [u32; 4]);

impl MonomialExponent {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// Exact integral of `x1^a x2^b x3^c x4^d` over the reference tetrahedron,
/// `a! b! c! d! / (a+b+c+d+3)!`.
///
/// Evaluated as a running product of ratios so that no factorial is ever
/// formed explicitly.
pub fn integrate_monomial(m: MonomialExponent) -> f64 {
    let mut r = 1.0f64;
    let mut t = 0u32;
    for &e in &m.0 {
        for j in 1..=e {
            t += 1;
            r *= j as f64 / t as f64;
        }
    }
    let n = t as f64;
    r / ((n + 1.0) * (n + 2.0) * (n + 3.0))
}

/// Finds the orbit type and canonical parameters of `p`.
///
/// Coordinates closer than `tol` are treated as equal; the coarsest type
/// consistent with the resulting multiplicities is returned.
pub fn classify_point(p: &BarycentricPoint, tol: f64) -> (OrbitType, Vec<f64>) {
    let mut v = p.0;
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // group sorted coordinates into clusters of (near) equal values
    let mut groups: Vec<Vec<f64>> = vec![vec![v[0]]];
    for &x in &v[1..] {
        let last = groups.last_mut().unwrap();
        if (x - last[0]).abs() <= tol {
            last.push(x);
        } else {
            groups.push(vec![x]);
        }
    }
    let mean = |g: &Vec<f64>| g.iter().sum::<f64>() / g.len() as f64;
    let mut sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    match sizes.as_slice() {
        [4] => (OrbitType::S4, vec![]),
        [3, 1] => {
            let g = groups.iter().find(|g| g.len() == 3).unwrap();
            (OrbitType::S31, vec![mean(g)])
        }
        [2, 2] => (OrbitType::S22, vec![mean(&groups[0])]),
        [2, 1, 1] => {
            let pair = groups.iter().find(|g| g.len() == 2).unwrap();
            let single = groups
                .iter()
                .filter(|g| g.len() == 1)
                .map(|g| g[0])
                .fold(f64::INFINITY, f64::min);
            (OrbitType::S211, vec![mean(pair), single])
        }
        _ => (OrbitType::S1111, vec![v[0], v[1], v[2]]),
    }
}
