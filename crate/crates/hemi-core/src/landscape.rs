//! Critical points of `K` on the closed hemisphere and of its restriction
//! `K_1` to the equator, the structural assumptions, and the sets feeding
//! the census.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geometry::{complement_basis, geodesic_distance, ScalarField, SpherePoint};

/// Default dead-band for the sign of the normal derivative.
pub const ZERO_TOL: f64 = 1e-9;
/// Hessian eigenvalues below this magnitude are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Gradient norm a polished root must reach.
pub const POLISH_TOL: f64 = 1e-11;
const DEDUP_TOL: f64 = 1e-6;
const INTERIOR_HEIGHT: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    InteriorOfK,
    BoundaryOfK1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    KInMinus,
    KBPlus,
    KB0Minus,
    Other,
}

/// A polished critical point with its second-order data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointRecord {
    pub location: SpherePoint,
    pub kind: CriticalKind,
    /// Morse index of `K` on `S^n` (interior) or of `K_1` on the equator (boundary).
    pub morse_index: usize,
    pub value: f64,
    pub laplacian: f64,
    pub normal_derivative: Option<f64>,
    pub hessian_eigenvalues: Vec<f64>,
    pub nondegenerate: bool,
    pub classification: Classification,
}

impl CriticalPointRecord {
    pub fn is_boundary(&self) -> bool {
        self.kind == CriticalKind::BoundaryOfK1
    }

    /// Local maximum of `K_1` (Morse index `n - 1`).
    pub fn is_boundary_max(&self) -> bool {
        self.is_boundary() && self.morse_index + 1 == self.location.dim()
    }

    /// Gradient norm of `K` or `K_1` at the stored location.
    pub fn gradient_norm(&self, field: &ScalarField) -> f64 {
        let x = self.location.coords();
        match self.kind {
            CriticalKind::InteriorOfK => field.tangent_gradient_at(x).norm(),
            CriticalKind::BoundaryOfK1 => field.boundary_gradient_at(x).norm(),
        }
    }

    /// Eigenpairs of the Hessian matching this record's kind.
    pub fn hessian_eigen(&self, field: &ScalarField) -> Vec<(f64, DVector<f64>)> {
        match self.kind {
            CriticalKind::InteriorOfK => field.hessian_eigen(self.location.coords()),
            CriticalKind::BoundaryOfK1 => field.boundary_hessian_eigen(self.location.coords()),
        }
    }

    /// Admissible for the census: an interior point of `K_in^-`, a local maximum
    /// of `K_1` in `K_b^+`, or a point of `K_b^{0,-}`.
    pub fn census_admissible(&self) -> bool {
        match self.classification {
            Classification::KInMinus | Classification::KB0Minus => true,
            Classification::KBPlus => self.is_boundary_max(),
            Classification::Other => false,
        }
    }
}

fn classify_values(kind: CriticalKind, laplacian: f64, nu: Option<f64>, zero_tol: f64) -> Result<Classification> {
    match kind {
        CriticalKind::InteriorOfK => Ok(if laplacian < 0.0 {
            Classification::KInMinus
        } else {
            Classification::Other
        }),
        CriticalKind::BoundaryOfK1 => {
            let nu = nu.unwrap_or(0.0);
            if nu.abs() < zero_tol {
                Ok(if laplacian < 0.0 {
                    Classification::KB0Minus
                } else {
                    Classification::Other
                })
            } else if nu.abs() < 10.0 * zero_tol {
                Err(Error::AmbiguousSign {
                    location: Vec::new(),
                    value: nu,
                })
            } else if nu > 0.0 {
                Ok(Classification::KBPlus)
            } else {
                Ok(Classification::Other)
            }
        }
    }
}

/// Kronecker sequence with the generalized golden ratio, mapped to the
/// sphere through the normal quantile and folded to the upper half.
fn seed_points(dim: usize, count: usize) -> Vec<DVector<f64>> {
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=dim).map(|k| phi.powi(-(k as i32)).fract()).collect();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (1..=count)
        .map(|i| {
            let v = DVector::from_iterator(
                dim,
                alphas.iter().map(|a| {
                    let u = (0.5 + a * i as f64).fract().clamp(1e-9, 1.0 - 1e-9);
                    normal.inverse_cdf(u)
                }),
            );
            let norm = v.norm();
            let mut v = v / norm;
            let last = dim - 1;
            v[last] = v[last].abs();
            v
        })
        .collect()
}

/// Newton iteration on the tangent gradient of `K` (`boundary = false`) or `K_1`.
fn newton(field: &ScalarField, start: &DVector<f64>, boundary: bool) -> Option<DVector<f64>> {
    let n = field.dim();
    let mut en = DVector::zeros(n + 1);
    en[n] = 1.0;
    let mut x = start.clone();
    if boundary {
        x[n] = 0.0;
    }
    let norm = x.norm();
    if norm < 1e-12 {
        return None;
    }
    x /= norm;
    let grad = |x: &DVector<f64>| {
        if boundary {
            field.boundary_gradient_at(x)
        } else {
            field.tangent_gradient_at(x)
        }
    };
    for _ in 0..200 {
        let g = grad(&x);
        if g.norm() < 1e-14 {
            break;
        }
        let (h, basis) = if boundary {
            (field.boundary_hessian_at(&x), complement_basis(n + 1, &[&x, &en]))
        } else {
            (field.tangent_hessian_at(&x), complement_basis(n + 1, &[&x]))
        };
        let m = basis.len();
        let mut hs = DMatrix::zeros(m, m);
        let mut gs = DVector::zeros(m);
        for i in 0..m {
            gs[i] = basis[i].dot(&g);
            let hb = &h * &basis[i];
            for j in 0..m {
                hs[(j, i)] = basis[j].dot(&hb);
            }
        }
        let step = match hs.clone().lu().solve(&(-&gs)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => -gs,
        };
        let mut v = DVector::zeros(n + 1);
        for i in 0..m {
            v += &basis[i] * step[i];
        }
        let vn = v.norm();
        if vn > 0.3 {
            v *= 0.3 / vn;
        }
        x += v;
        if boundary {
            x[n] = 0.0;
        }
        x /= x.norm();
    }
    (grad(&x).norm() <= POLISH_TOL).then_some(x)
}

fn build_record(
    field: &ScalarField,
    x: DVector<f64>,
    kind: CriticalKind,
    zero_tol: f64,
) -> Result<CriticalPointRecord> {
    let eig = match kind {
        CriticalKind::InteriorOfK => field.hessian_eigen(&x),
        CriticalKind::BoundaryOfK1 => field.boundary_hessian_eigen(&x),
    };
    let eigenvalues: Vec<f64> = eig.iter().map(|e| e.0).collect();
    let nondegenerate = eigenvalues.iter().all(|e| e.abs() >= DEGENERACY_TOL);
    let laplacian = field.laplace_beltrami_at(&x);
    let nu = (kind == CriticalKind::BoundaryOfK1).then(|| field.normal_derivative_at(&x));
    let classification = classify_values(kind, laplacian, nu, zero_tol).map_err(|e| match e {
        Error::AmbiguousSign { value, .. } => Error::AmbiguousSign {
            location: x.iter().copied().collect(),
            value,
        },
        other => other,
    })?;
    Ok(CriticalPointRecord {
        location: SpherePoint::from_vector(x)?,
        kind,
        morse_index: eigenvalues.iter().filter(|e| **e < 0.0).count(),
        value: 0.0,
        laplacian,
        normal_derivative: nu,
        hessian_eigenvalues: eigenvalues,
        nondegenerate,
        classification,
    })
    .map(|mut r| {
        r.value = field.value(&r.location);
        r
    })
}

fn push_unique(found: &mut Vec<DVector<f64>>, x: DVector<f64>) {
    let dup = found.iter().any(|y| crate::geometry::chord_to_angle(y, &x) < DEDUP_TOL);
    if !dup {
        found.push(x);
    }
}

/// Newton search from a quasi-uniform seed set of `seeds_per_dim^3` points,
/// augmented with coordinate axes and Hessian eigenvectors.
pub fn find_critical_points(field: &ScalarField, seeds_per_dim: usize) -> Result<Vec<CriticalPointRecord>> {
    find_critical_points_with(field, seeds_per_dim, ZERO_TOL)
}

pub fn find_critical_points_with(
    field: &ScalarField,
    seeds_per_dim: usize,
    zero_tol: f64,
) -> Result<Vec<CriticalPointRecord>> {
    if seeds_per_dim < 8 {
        return Err(Error::InvalidConfiguration("seeds_per_dim must be at least 8".into()));
    }
    let n = field.dim();
    let count = seeds_per_dim.pow(3);
    let mut seeds = seed_points(n + 1, count);
    for k in 0..=n {
        for s in [1.0, -1.0] {
            let mut v = DVector::zeros(n + 1);
            v[k] = s;
            seeds.push(v);
        }
    }
    let sym = field.quadratic_part();
    let eig = nalgebra::SymmetricEigen::new(sym.clone());
    for k in 0..=n {
        let v: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        seeds.push(v.clone());
        seeds.push(-v);
    }
    if field.linear_part().norm() > 0.0 {
        let b = field.linear_part().normalize();
        seeds.push(b.clone());
        seeds.push(-b);
    }

    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for s in &seeds {
        if let Some(x) = newton(field, s, false) {
            if x[n] > INTERIOR_HEIGHT {
                push_unique(&mut interior, x);
            }
        }
        let mut folded = s.clone();
        folded[n] = 0.0;
        if folded.norm() > 1e-6 {
            if let Some(x) = newton(field, &folded, true) {
                push_unique(&mut boundary, x);
            }
        }
    }

    let mut records = Vec::new();
    for x in interior {
        records.push(build_record(field, x, CriticalKind::InteriorOfK, zero_tol)?);
    }
    for x in boundary {
        records.push(build_record(field, x, CriticalKind::BoundaryOfK1, zero_tol)?);
    }
    if let Some(bad) = records.iter().find(|r| !r.nondegenerate) {
        let eigenvalue = bad
            .hessian_eigenvalues
            .iter()
            .copied()
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        return Err(Error::DegenerateCriticalPoint {
            location: bad.location.coords().iter().copied().collect(),
            eigenvalue,
        });
    }
    records.sort_by(|a, b| {
        a.location
            .coords()
            .iter()
            .zip(b.location.coords().iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(records)
}

/// Which alternative of the boundary-flatness assumption holds at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum H3Branch {
    SignCondition,
    RatioLimit,
    Both,
    Neither,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H3Point {
    pub location: SpherePoint,
    pub branch: H3Branch,
    /// Sup of `|dK/dnu(a)| / d(a, z)` on the sampled radii `r / 2^k`.
    pub ratios: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionsReport {
    pub h1: bool,
    pub h2: bool,
    pub h3: bool,
    pub h3_points: Vec<H3Point>,
    pub violations: Vec<String>,
}

impl AssumptionsReport {
    pub fn all(&self) -> bool {
        self.h1 && self.h2 && self.h3
    }
}

/// Sampling parameters for the flatness assumption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H3Sampling {
    pub radius: f64,
    pub halvings: usize,
    pub decay: f64,
}

impl Default for H3Sampling {
    fn default() -> Self {
        Self {
            radius: 0.05,
            halvings: 8,
            decay: 0.01,
        }
    }
}

fn equator_directions(n: usize, z: &DVector<f64>) -> Vec<DVector<f64>> {
    let mut en = DVector::zeros(n + 1);
    en[n] = 1.0;
    let basis = complement_basis(n + 1, &[z, &en]);
    let mut dirs = Vec::new();
    for (i, e) in basis.iter().enumerate() {
        dirs.push(e.clone());
        dirs.push(-e);
        if let Some(f) = basis.get(i + 1) {
            dirs.push((e + f).normalize());
            dirs.push((e - f).normalize());
        }
    }
    dirs
}

fn h3_at(field: &ScalarField, z: &CriticalPointRecord, sampling: &H3Sampling) -> H3Point {
    let n = field.dim();
    let zc = z.location.coords();
    let dirs = equator_directions(n, zc);
    let at = |dir: &DVector<f64>, r: f64| zc * r.cos() + dir * r.sin();
    let lap = z.laplacian;
    let mut sign_ok = true;
    for dir in &dirs {
        for k in 1..=8 {
            let r = sampling.radius * k as f64 / 8.0;
            if field.normal_derivative_at(&at(dir, r)) * lap > 0.0 {
                sign_ok = false;
            }
        }
    }
    let ratios: Vec<f64> = (0..sampling.halvings)
        .map(|k| {
            let r = sampling.radius / 2f64.powi(k as i32);
            dirs.iter()
                .map(|d| field.normal_derivative_at(&at(d, r)).abs() / r)
                .fold(0.0, f64::max)
        })
        .collect();
    let first = ratios[0];
    let last = *ratios.last().unwrap_or(&0.0);
    let ratio_ok = first < 1e-12 || last < sampling.decay * first;
    let branch = match (sign_ok, ratio_ok) {
        (true, true) => H3Branch::Both,
        (true, false) => H3Branch::SignCondition,
        (false, true) => H3Branch::RatioLimit,
        (false, false) => H3Branch::Neither,
    };
    H3Point {
        location: z.location.clone(),
        branch,
        ratios,
    }
}

/// Evaluates the three structural assumptions; violations are collected, not thrown.
pub fn check_assumptions(records: &[CriticalPointRecord], field: &ScalarField) -> AssumptionsReport {
    check_assumptions_with(records, field, ZERO_TOL, &H3Sampling::default())
}

pub fn check_assumptions_with(
    records: &[CriticalPointRecord],
    field: &ScalarField,
    zero_tol: f64,
    sampling: &H3Sampling,
) -> AssumptionsReport {
    let mut violations = Vec::new();
    let mut h1 = true;
    let mut h2 = true;
    let mut h3 = true;
    let mut h3_points = Vec::new();
    let fmt = |p: &SpherePoint| {
        format!(
            "{:?}",
            p.coords().iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>()
        )
    };
    for r in records {
        match r.kind {
            CriticalKind::InteriorOfK => {
                if !r.nondegenerate || r.laplacian == 0.0 {
                    h1 = false;
                    violations.push(format!(
                        "H1: degenerate or harmonic critical point at {}",
                        fmt(&r.location)
                    ));
                }
            }
            CriticalKind::BoundaryOfK1 => {
                if !r.nondegenerate {
                    h2 = false;
                    violations.push(format!("H2: degenerate critical point of K_1 at {}", fmt(&r.location)));
                }
                let nu = r.normal_derivative.unwrap_or(0.0);
                if !r.is_boundary_max() && nu > zero_tol {
                    h2 = false;
                    violations.push(format!(
                        "H2: non-maximum critical point of K_1 at {} has dK/dnu = {nu:.3e} > 0",
                        fmt(&r.location)
                    ));
                }
                if nu.abs() < zero_tol {
                    // Also a critical point of K itself.
                    let eig = field.hessian_eigen(r.location.coords());
                    if eig.iter().any(|e| e.0.abs() < DEGENERACY_TOL) || r.laplacian == 0.0 {
                        h1 = false;
                        violations.push(format!(
                            "H1: degenerate boundary critical point of K at {}",
                            fmt(&r.location)
                        ));
                    }
                    let pt = h3_at(field, r, sampling);
                    if r.laplacian == 0.0 || pt.branch == H3Branch::Neither {
                        h3 = false;
                        violations.push(format!("H3: neither alternative holds at {}", fmt(&r.location)));
                    }
                    h3_points.push(pt);
                }
            }
        }
    }
    AssumptionsReport {
        h1,
        h2,
        h3,
        h3_points,
        violations,
    }
}

/// Partition of the critical points into the sets of the existence theory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedSets {
    pub k_in_minus: Vec<CriticalPointRecord>,
    pub k_b_plus: Vec<CriticalPointRecord>,
    pub k_b_0_minus: Vec<CriticalPointRecord>,
    pub k_infinity: Vec<CriticalPointRecord>,
}

impl ClassifiedSets {
    /// Points admissible for the census (non-maximum `K_b^+` points excluded).
    pub fn census_boundary(&self) -> Vec<CriticalPointRecord> {
        self.k_b_plus
            .iter()
            .chain(self.k_b_0_minus.iter())
            .filter(|r| r.census_admissible())
            .cloned()
            .collect()
    }

    /// `K_b^+ ∪ K_b^{0,-}`, the set the existence hypotheses count over.
    pub fn boundary_union(&self) -> Vec<CriticalPointRecord> {
        self.k_b_plus.iter().chain(self.k_b_0_minus.iter()).cloned().collect()
    }
}

pub fn classify(records: &[CriticalPointRecord]) -> Result<ClassifiedSets> {
    classify_with(records, ZERO_TOL)
}

pub fn classify_with(records: &[CriticalPointRecord], zero_tol: f64) -> Result<ClassifiedSets> {
    let mut sets = ClassifiedSets {
        k_in_minus: Vec::new(),
        k_b_plus: Vec::new(),
        k_b_0_minus: Vec::new(),
        k_infinity: Vec::new(),
    };
    for r in records {
        let c = classify_values(r.kind, r.laplacian, r.normal_derivative, zero_tol).map_err(|e| match e {
            Error::AmbiguousSign { value, .. } => Error::AmbiguousSign {
                location: r.location.coords().iter().copied().collect(),
                value,
            },
            other => other,
        })?;
        let mut r = r.clone();
        r.classification = c;
        match c {
            Classification::KInMinus => sets.k_in_minus.push(r.clone()),
            Classification::KBPlus => sets.k_b_plus.push(r.clone()),
            Classification::KB0Minus => sets.k_b_0_minus.push(r.clone()),
            Classification::Other => continue,
        }
        sets.k_infinity.push(r);
    }
    Ok(sets)
}

/// Alternating Morse count of `K_1` on the equator and the expected
/// Euler characteristic `1 + (-1)^{n-1}` of `S^{n-1}`.
pub fn equator_euler_check(records: &[CriticalPointRecord], n: usize) -> (i64, i64) {
    let sum = records
        .iter()
        .filter(|r| r.is_boundary())
        .map(|r| if r.morse_index % 2 == 0 { 1 } else { -1 })
        .sum();
    let chi = if (n - 1).is_multiple_of(2) { 2 } else { 0 };
    (sum, chi)
}

/// Alternating count over the interior critical points (reported only).
pub fn hemisphere_tally(records: &[CriticalPointRecord]) -> i64 {
    records
        .iter()
        .filter(|r| !r.is_boundary())
        .map(|r| if r.morse_index % 2 == 0 { 1 } else { -1 })
        .sum()
}

/// Full landscape of a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub n: usize,
    pub records: Vec<CriticalPointRecord>,
    pub assumptions: AssumptionsReport,
    pub sets: ClassifiedSets,
    pub k_min: f64,
    pub k_max: f64,
}

impl Landscape {
    pub fn analyze(field: &ScalarField, seeds_per_dim: usize) -> Result<Self> {
        Self::from_records(field, find_critical_points(field, seeds_per_dim)?)
    }

    /// Landscape from known records; an empty list suits fields without
    /// isolated critical points.
    pub fn from_records(field: &ScalarField, records: Vec<CriticalPointRecord>) -> Result<Self> {
        let assumptions = check_assumptions(&records, field);
        let sets = classify(&records)?;
        let (k_min, k_max) = crate::geometry::field_min_max(field, 12)?;
        Ok(Self {
            n: field.dim(),
            records,
            assumptions,
            sets,
            k_min,
            k_max,
        })
    }

    /// Nearest record of the given kind within `eta` of `p`.
    pub fn nearest(&self, p: &SpherePoint, kind: CriticalKind, eta: f64) -> Option<&CriticalPointRecord> {
        self.records
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| (geodesic_distance(&r.location, p), r))
            .filter(|(d, _)| *d < eta)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, r)| r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FieldSpec;

    fn field(spec: FieldSpec) -> ScalarField {
        ScalarField::from_spec(spec).unwrap()
    }

    #[test]
    fn linear_field_has_two_boundary_points() {
        let k = field(FieldSpec::constant(5, 1.0).with("x1", 0.05));
        let recs = find_critical_points(&k, 8).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert!(r.is_boundary());
            let s = r.location.coords()[0];
            assert!((s.abs() - 1.0).abs() < 1e-12);
            assert!((r.laplacian + s * 0.05 * 5.0).abs() < 1e-12);
            assert!(r.gradient_norm(&k) <= 1e-9);
        }
        let sets = classify(&recs).unwrap();
        assert_eq!(sets.k_infinity.len(), 1);
        assert_eq!(sets.k_b_0_minus.len(), 1);
        assert!(sets.k_b_plus.is_empty());
        assert!(sets.k_b_0_minus[0].location.coords()[0] > 0.0);
        let rep = check_assumptions(&recs, &k);
        assert!(rep.all(), "{:?}", rep.violations);
        assert_eq!(rep.h3_points.len(), 2);
        assert!(rep.h3_points.iter().all(|p| p.ratios.iter().all(|r| *r == 0.0)));
    }

    #[test]
    fn constant_field_is_degenerate() {
        let k = field(FieldSpec::constant(5, 1.0));
        assert!(matches!(
            find_critical_points(&k, 8),
            Err(Error::DegenerateCriticalPoint { .. })
        ));
    }

    #[test]
    fn seeds_lie_on_upper_half() {
        let s = seed_points(6, 100);
        assert!(s.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12 && v[5] >= 0.0));
    }

    #[test]
    fn saddle_with_outward_slope_violates_h2() {
        // dK/dnu = 0.03 on the whole equator; -e_1 is a minimum of K_1.
        let k = field(
            FieldSpec::constant(5, 1.0)
                .with("x1", 0.05)
                .with("x2*x2", 0.02)
                .with("x6", -0.03),
        );
        let recs = find_critical_points(&k, 8).unwrap();
        let rep = check_assumptions(&recs, &k);
        assert!(!rep.h2);
        assert!(rep.violations.iter().any(|v| v.starts_with("H2")));
    }

    #[test]
    fn ambiguous_band() {
        let c = classify_values(CriticalKind::BoundaryOfK1, -1.0, Some(5e-9), ZERO_TOL);
        assert!(matches!(c, Err(Error::AmbiguousSign { .. })));
    }

    #[test]
    fn interior_maximum_in_k_in_minus() {
        let k = field(
            FieldSpec::constant(5, 1.0)
                .with("x1", 0.05 * 0.75f64.sqrt())
                .with("x6", 0.05 * 0.5),
        );
        let recs = find_critical_points(&k, 8).unwrap();
        let sets = classify(&recs).unwrap();
        assert_eq!(sets.k_in_minus.len(), 1);
        assert!((sets.k_in_minus[0].location.height() - 0.5).abs() < 1e-10);
        let (sum, chi) = equator_euler_check(&recs, 5);
        assert_eq!(sum, chi);
    }
}
