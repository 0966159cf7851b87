//! Critical points at infinity, their levels and indices, energy bands,
//! the alternating counting sums and the existence decision procedures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{AssumptionsReport, ClassifiedSets, CriticalPointRecord, Landscape};

/// Energy band of mass `ell`: `[(ell S_n)^{2/n} / K_max^{(n-2)/n}, (ell S_n)^{2/n} / K_min^{(n-2)/n}]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub ell: usize,
    pub min: f64,
    pub max: f64,
}

impl Band {
    pub fn contains(&self, level: f64) -> bool {
        self.min <= level && level <= self.max
    }
}

pub fn level_bands(n: usize, s_n: f64, k_min: f64, k_max: f64, ell_max: usize) -> Vec<Band> {
    let nf = n as f64;
    (1..=ell_max)
        .map(|ell| {
            let base = (ell as f64 * s_n).powf(2.0 / nf);
            Band {
                ell,
                min: base / k_max.powf((nf - 2.0) / nf),
                max: base / k_min.powf((nf - 2.0) / nf),
            }
        })
        .collect()
}

/// Separation of band `ell` from band `ell + 1` after a full pinch:
/// `C^ell_max (K_max/K_min)^{(n-2)/n} < C^{ell+1}_min`.
pub fn gap_above(bands: &[Band], ell: usize, n: usize, k_min: f64, k_max: f64) -> bool {
    let nf = n as f64;
    match (bands.get(ell - 1), bands.get(ell)) {
        (Some(lo), Some(hi)) => lo.max * (k_max / k_min).powf((nf - 2.0) / nf) < hi.min,
        _ => false,
    }
}

/// Pinch threshold `((k+1)/k)^{1/(n-2)}` of the theorem gates.
pub fn pinch_threshold(k: usize, n: usize) -> f64 {
    ((k as f64 + 1.0) / k as f64).powf(1.0 / (n as f64 - 2.0))
}

/// One critical point at infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusEntry {
    pub boundary_points: Vec<CriticalPointRecord>,
    pub interior_points: Vec<CriticalPointRecord>,
    pub level: f64,
    pub index: usize,
    pub mass: usize,
}

/// `S_n^{2/n} (sum K(z)^{-(n-2)/2} + 2 sum K(y)^{-(n-2)/2})^{2/n}`.
pub fn census_level(n: usize, s_n: f64, boundary: &[&CriticalPointRecord], interior: &[&CriticalPointRecord]) -> f64 {
    let nf = n as f64;
    let e = -(nf - 2.0) / 2.0;
    let sum: f64 = boundary.iter().map(|r| r.value.powf(e)).sum::<f64>()
        + 2.0 * interior.iter().map(|r| r.value.powf(e)).sum::<f64>();
    s_n.powf(2.0 / nf) * sum.powf(2.0 / nf)
}

/// `q + p - 1 + sum (n - 1 - morse(K_1, z)) + sum (n - morse(K, y))`.
pub fn census_index(n: usize, boundary: &[&CriticalPointRecord], interior: &[&CriticalPointRecord]) -> usize {
    boundary.len() + interior.len() - 1
        + boundary.iter().map(|r| n - 1 - r.morse_index).sum::<usize>()
        + interior.iter().map(|r| n - r.morse_index).sum::<usize>()
}

fn subsets<T>(items: &[T], size: usize) -> Vec<Vec<&T>> {
    fn rec<'a, T>(items: &'a [T], size: usize, start: usize, cur: &mut Vec<&'a T>, out: &mut Vec<Vec<&'a T>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(&items[i]);
            rec(items, size, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, size, 0, &mut Vec::new(), &mut out);
    out
}

/// All admissible collections with `1 <= q + 2p <= mass_max`, sorted by level.
pub fn enumerate_census(sets: &ClassifiedSets, n: usize, s_n: f64, mass_max: usize) -> Vec<CensusEntry> {
    let boundary = sets.census_boundary();
    let interior: Vec<CriticalPointRecord> = sets.k_in_minus.clone();
    let mut out = Vec::new();
    for p in 0..=interior.len().min(mass_max / 2) {
        for q in 0..=boundary.len().min(mass_max - 2 * p) {
            if p + q == 0 {
                continue;
            }
            for bs in subsets(&boundary, q) {
                for is in subsets(&interior, p) {
                    out.push(CensusEntry {
                        level: census_level(n, s_n, &bs, &is),
                        index: census_index(n, &bs, &is),
                        mass: q + 2 * p,
                        boundary_points: bs.iter().map(|r| (*r).clone()).collect(),
                        interior_points: is.iter().map(|r| (*r).clone()).collect(),
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| a.level.total_cmp(&b.level).then(a.mass.cmp(&b.mass)));
    out
}

/// Degree at which the entry carries rank-one relative homology.
pub fn homology_contribution(entry: &CensusEntry) -> usize {
    entry.index
}

fn sign(i: i64) -> i64 {
    if i.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// Pair, triple and quadruple alternating sums by direct enumeration.
pub fn counting_a(indices: &[i64]) -> (i64, i64, i64, i64) {
    let s: Vec<i64> = indices.iter().map(|&i| sign(i)).collect();
    let m = s.len();
    let a1 = s.iter().sum();
    let mut a2 = 0;
    let mut a3 = 0;
    let mut a4 = 0;
    for i in 0..m {
        for j in i + 1..m {
            a2 += s[i] * s[j];
            for k in j + 1..m {
                a3 += s[i] * s[j] * s[k];
                for l in k + 1..m {
                    a4 += s[i] * s[j] * s[k] * s[l];
                }
            }
        }
    }
    (a1, a2, a3, a4)
}

/// Elementary symmetric sums `e_1..e_order` of `even` copies of `+1` and `odd`
/// copies of `-1`, read off `(1 + x)^even (1 - x)^odd`.
pub fn alternating_sums_closed(even: usize, odd: usize, order: usize) -> Vec<i64> {
    let mut poly = vec![0i64; order + 1];
    poly[0] = 1;
    for step in 0..even + odd {
        let s = if step < even { 1 } else { -1 };
        for d in (1..=order).rev() {
            poly[d] += s * poly[d - 1];
        }
    }
    poly[1..].to_vec()
}

pub fn counting_b(indices: &[i64]) -> (i64, i64) {
    let (b1, b2, _, _) = counting_a(indices);
    (b1, b2)
}

/// `sum_{entry.level < level} (-1)^{entry.index}`, refused inside a band.
pub fn chi_below(census: &[CensusEntry], bands: &[Band], level: f64) -> Result<i64> {
    if bands.iter().any(|b| b.contains(level)) {
        return Err(Error::LevelInsideBand { level });
    }
    Ok(census
        .iter()
        .filter(|e| e.level < level)
        .map(|e| sign(e.index as i64))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Theorem {
    #[serde(rename = "T1_1")]
    T11,
    #[serde(rename = "T1_2")]
    T12,
    #[serde(rename = "T1_3")]
    T13,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    SolutionExists,
    Inconclusive,
}

/// A named hypothesis with the value it was decided from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub holds: bool,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExistenceVerdict {
    pub theorem: Theorem,
    pub hypotheses: BTreeMap<String, Condition>,
    pub conclusion: Conclusion,
}

impl ExistenceVerdict {
    fn new(theorem: Theorem, hypotheses: BTreeMap<String, Condition>) -> Self {
        let conclusion = if hypotheses.values().all(|c| c.holds) {
            Conclusion::SolutionExists
        } else {
            Conclusion::Inconclusive
        };
        Self {
            theorem,
            hypotheses,
            conclusion,
        }
    }
}

/// Counting quantities entering the existence hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingSummary {
    pub boundary_indices: Vec<i64>,
    pub interior_indices: Vec<i64>,
    pub a1: i64,
    pub b1: i64,
    /// `#(K_b^+ ∪ K_b^{0,-}) = 2k + 1` when odd.
    pub k: Option<i64>,
    pub k_infinity: usize,
    /// Non-maximum `K_b^+` points, counted in `A_1` but excluded from the census.
    pub excluded_from_census: usize,
}

pub fn counting_summary(landscape: &Landscape) -> CountingSummary {
    let n = landscape.n as i64;
    let union = landscape.sets.boundary_union();
    let boundary_indices: Vec<i64> = union.iter().map(|r| n - 1 - r.morse_index as i64).collect();
    let interior_indices: Vec<i64> = landscape
        .sets
        .k_in_minus
        .iter()
        .map(|r| n - r.morse_index as i64)
        .collect();
    let m = union.len() as i64;
    CountingSummary {
        a1: counting_a(&boundary_indices).0,
        b1: counting_b(&interior_indices).0,
        k: (m % 2 == 1).then_some((m - 1) / 2),
        k_infinity: landscape.sets.k_infinity.len(),
        excluded_from_census: union.iter().filter(|r| !r.census_admissible()).count(),
        boundary_indices,
        interior_indices,
    }
}

fn cond(holds: bool, value: f64) -> Condition {
    Condition { holds, value }
}

fn theorem_verdict(theorem: Theorem, landscape: &Landscape, report: &AssumptionsReport) -> ExistenceVerdict {
    let n = landscape.n;
    let ratio = landscape.k_max / landscape.k_min;
    let c = counting_summary(landscape);
    let h = |b: bool| cond(b, if b { 1.0 } else { 0.0 });
    let mut hyp = BTreeMap::new();
    match theorem {
        Theorem::T11 => {
            hyp.insert("H1".to_string(), h(report.h1));
            hyp.insert("H2".to_string(), h(report.h2));
            hyp.insert("H3".to_string(), h(report.h3));
            hyp.insert("pinch".to_string(), cond(ratio < pinch_threshold(4, n), ratio));
            hyp.insert("pinch_threshold".to_string(), cond(true, pinch_threshold(4, n)));
            hyp.insert(
                "k_infinity_count".to_string(),
                cond(c.k_infinity >= 2, c.k_infinity as f64),
            );
        }
        Theorem::T12 => {
            let nondeg = landscape
                .records
                .iter()
                .filter(|r| r.is_boundary())
                .all(|r| r.nondegenerate);
            hyp.insert("K1_nondegenerate".to_string(), h(nondeg));
            hyp.insert("H3".to_string(), h(report.h3));
            hyp.insert("pinch".to_string(), cond(ratio < pinch_threshold(1, n), ratio));
            hyp.insert("pinch_threshold".to_string(), cond(true, pinch_threshold(1, n)));
            hyp.insert("A1".to_string(), cond(c.a1 != 1, c.a1 as f64));
        }
        Theorem::T13 => {
            hyp.insert("H1".to_string(), h(report.h1));
            hyp.insert("H2".to_string(), h(report.h2));
            hyp.insert("H3".to_string(), h(report.h3));
            hyp.insert("pinch".to_string(), cond(ratio < pinch_threshold(2, n), ratio));
            hyp.insert("pinch_threshold".to_string(), cond(true, pinch_threshold(2, n)));
            hyp.insert("A1".to_string(), cond(c.a1 == 1, c.a1 as f64));
            let k = c.k.unwrap_or(-1);
            hyp.insert("k".to_string(), cond(c.k.is_some(), k as f64));
            hyp.insert("B1".to_string(), cond(c.k.is_some() && c.b1 != -k, c.b1 as f64));
        }
    }
    ExistenceVerdict::new(theorem, hyp)
}

/// Theorem selector; `Auto` tries T1.2, then T1.3, then T1.1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremChoice {
    Auto,
    Only(Theorem),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub verdicts: Vec<ExistenceVerdict>,
    pub conclusion: Conclusion,
    /// First theorem (in precedence order) that concludes, if any.
    pub decisive: Option<Theorem>,
    pub counting: CountingSummary,
    pub assumptions: AssumptionsReport,
    pub k_min: f64,
    pub k_max: f64,
}

/// Evaluates the existence theorems. A single selected theorem whose
/// structural assumptions fail raises `AssumptionViolation`.
pub fn existence_check(landscape: &Landscape, which: TheoremChoice) -> Result<ExistenceReport> {
    let report = &landscape.assumptions;
    let order = match which {
        TheoremChoice::Auto => vec![Theorem::T12, Theorem::T13, Theorem::T11],
        TheoremChoice::Only(t) => {
            let ok = match t {
                Theorem::T12 => {
                    report.h3
                        && landscape
                            .records
                            .iter()
                            .filter(|r| r.is_boundary())
                            .all(|r| r.nondegenerate)
                }
                _ => report.all(),
            };
            if !ok {
                return Err(Error::AssumptionViolation(report.violations.join("; ")));
            }
            vec![t]
        }
    };
    let verdicts: Vec<ExistenceVerdict> = order.iter().map(|t| theorem_verdict(*t, landscape, report)).collect();
    let decisive = verdicts
        .iter()
        .find(|v| v.conclusion == Conclusion::SolutionExists)
        .map(|v| v.theorem);
    Ok(ExistenceReport {
        conclusion: if decisive.is_some() {
            Conclusion::SolutionExists
        } else {
            Conclusion::Inconclusive
        },
        decisive,
        verdicts,
        counting: counting_summary(landscape),
        assumptions: report.clone(),
        k_min: landscape.k_min,
        k_max: landscape.k_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FieldSpec, ScalarField};
    use crate::quadrature::ConstantsTable;

    #[test]
    fn counting_examples() {
        // k = 1: two even, one odd.
        assert_eq!(counting_a(&[4, 2, 3]), (1, -1, -1, 0));
        // k = 2: three even, two odd.
        assert_eq!(counting_a(&[0, 2, 4, 1, 3]).3, 1);
        assert_eq!(counting_b(&[]), (0, 0));
        assert_eq!(counting_b(&[2, 1]), (0, -1));
    }

    #[test]
    fn band_algebra() {
        let s = ConstantsTable::closed_form(5).s_n;
        let flat = level_bands(5, s, 1.0, 1.0, 4);
        for b in &flat {
            assert_eq!(b.min, b.max);
            assert!((b.min - (b.ell as f64 * s).powf(0.4)).abs() < 1e-12 * b.min);
        }
        let bands = level_bands(5, s, 1.0, 1.05, 5);
        for w in bands.windows(2) {
            let r = w[1].min / w[0].min;
            let want = ((w[0].ell as f64 + 1.0) / w[0].ell as f64).powf(0.4);
            assert!((r - want).abs() < 1e-12);
        }
        assert!(1.05 < pinch_threshold(4, 5));
        for ell in 1..=4 {
            assert!(gap_above(&bands, ell, 5, 1.0, 1.05));
        }
    }

    #[test]
    fn index_arithmetic() {
        let rec = |morse: usize| CriticalPointRecord {
            location: crate::geometry::SpherePoint::axis(5, 0),
            kind: crate::landscape::CriticalKind::BoundaryOfK1,
            morse_index: morse,
            value: 1.0,
            laplacian: -1.0,
            normal_derivative: Some(0.0),
            hessian_eigenvalues: vec![],
            nondegenerate: true,
            classification: crate::landscape::Classification::KB0Minus,
        };
        let (z1, z2) = (rec(4), rec(3));
        let mut y = rec(5);
        y.kind = crate::landscape::CriticalKind::InteriorOfK;
        assert_eq!(census_index(5, &[&z1, &z2], &[&y]), 3);
    }

    #[test]
    fn linear_field_pipeline() {
        let field = ScalarField::from_spec(FieldSpec::constant(5, 1.0).with("x1", 0.05)).unwrap();
        let l = Landscape::analyze(&field, 8).unwrap();
        let s = ConstantsTable::closed_form(5).s_n;
        let census = enumerate_census(&l.sets, 5, s, 4);
        assert_eq!(census.len(), 1);
        assert_eq!(census[0].index, 0);
        assert_eq!(homology_contribution(&census[0]), 0);
        let rep = existence_check(&l, TheoremChoice::Auto).unwrap();
        assert_eq!(rep.conclusion, Conclusion::Inconclusive);
        let t11 = rep.verdicts.iter().find(|v| v.theorem == Theorem::T11).unwrap();
        assert!(!t11.hypotheses["k_infinity_count"].holds);
        assert_eq!(t11.hypotheses["k_infinity_count"].value, 1.0);
    }

    #[test]
    fn chi_refuses_band_levels() {
        let s = ConstantsTable::closed_form(5).s_n;
        let bands = level_bands(5, s, 1.0, 1.05, 3);
        let mid = 0.5 * (bands[0].min + bands[0].max);
        assert_eq!(chi_below(&[], &bands, mid), Err(Error::LevelInsideBand { level: mid }));
        assert_eq!(chi_below(&[], &bands, 0.5 * bands[0].min), Ok(0));
    }
}
