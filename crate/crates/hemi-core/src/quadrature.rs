//! Adaptive Gauss-Kronrod quadrature and the universal constants of the
//! reduced-energy expansions.
//!
//! Every constant is an integral over `R^n` or `R^n_+` of a radial profile,
//! optionally weighted by `x_n` or `x_n^2`. The angular part is integrated in
//! closed form and the radial part adaptively on `[0, inf)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::bubbles::c0;
use crate::error::{Error, Result};

/// Identifier embedded in every report that consumes a constants table.
pub const CONSTANTS_VERSION: &str = "hemi-constants/1";

/// Default relative tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

const MAX_INTERVALS: usize = 4000;

// 15-point Kronrod nodes on [-1, 1] (non-negative half) with the embedded
// 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Value and absolute error estimate of a quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kronrod * half;
    let raw = ((kronrod - gauss) * half).abs();
    // QUADPACK-style rescaling of the Gauss/Kronrod difference.
    let error = if raw > 0.0 {
        let scaled = (200.0 * raw / value.abs().max(f64::MIN_POSITIVE)).powf(1.5) * value.abs();
        scaled.min(raw).max(50.0 * f64::EPSILON * value.abs())
    } else {
        50.0 * f64::EPSILON * value.abs()
    };
    Segment { a, b, value, error }
}

/// Adaptive G7/K15 quadrature of `f` over `[a, b]`, refined by bisecting the
/// worst segment until `error <= max(abs_tol, rel_tol |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let first = kronrod15(&f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    let mut evaluations = 15;
    heap.push(first);
    while error > abs_tol.max(rel_tol * value.abs()) {
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::ToleranceNotMet {
                what: "adaptive quadrature".into(),
                err: error,
                tol: abs_tol.max(rel_tol * value.abs()),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::ToleranceNotMet {
                what: "adaptive quadrature (interval underflow)".into(),
                err: error,
                tol: abs_tol.max(rel_tol * value.abs()),
            });
        }
        let left = kronrod15(&f, worst.a, mid);
        let right = kronrod15(&f, mid, worst.b);
        evaluations += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the running totals.
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

/// Quadrature over `[0, inf)` through the substitution `r = t / (1 - t)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    integrate(
        |t| {
            let s = 1.0 - t;
            let r = t / s;
            let v = f(r) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Surface area of the unit sphere `S^d` in `R^{d+1}`.
pub fn sphere_area(d: usize) -> f64 {
    let h = (d as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / ln_gamma(h).exp()
}

/// Closed form of `int_0^inf r^k (1 + r^2)^{-m} dr = B((k+1)/2, m-(k+1)/2) / 2`.
pub fn radial_moment_closed(k: f64, m: f64) -> f64 {
    let a = (k + 1.0) / 2.0;
    0.5 * ln_beta(a, m - a).exp()
}

/// Adaptive quadrature of the radial moment.
pub fn radial_moment(k: f64, m: f64, tol: f64) -> Result<QuadResult> {
    integrate_half_line(|r| r.powf(k) * (1.0 + r * r).powf(-m), 0.0, tol).map_err(|e| match e {
        Error::ToleranceNotMet { err, tol, .. } => Error::ToleranceNotMet {
            what: format!("radial moment r^{k} (1+r^2)^-{m}"),
            err,
            tol,
        },
        other => other,
    })
}

/// Exact angular factors over the unit sphere `S^{n-1}` of `R^n`.
#[derive(Clone, Copy, Debug)]
pub struct Angular {
    /// `int_{S^{n-1}} 1`.
    pub full: f64,
    /// `int_{S^{n-1}_+} 1`.
    pub half: f64,
    /// `int_{S^{n-1}_+} omega_n`.
    pub half_first: f64,
    /// `int_{S^{n-1}} omega_n^2`.
    pub full_second: f64,
    /// `int_{S^{n-1}_+} omega_n^2`.
    pub half_second: f64,
}

impl Angular {
    pub fn new(n: usize) -> Self {
        let full = sphere_area(n - 1);
        Self {
            full,
            half: full / 2.0,
            half_first: sphere_area(n - 2) / (n as f64 - 1.0),
            full_second: full / n as f64,
            half_second: full / (2.0 * n as f64),
        }
    }
}

/// Universal constants with absolute error estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsTable {
    pub version: String,
    pub n: usize,
    pub tol: f64,
    pub c0: f64,
    pub s_n: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c9: f64,
    /// Absolute error estimate per entry, in `entries()` order.
    pub errors: Vec<f64>,
}

/// Radial recipe of one constant: `prefactor * angular * int r^k (1+r^2)^{-m}`,
/// with a second moment subtracted for `c3`.
struct Recipe {
    name: &'static str,
    prefactor: f64,
    angular: f64,
    k: f64,
    m: f64,
    minus: Option<(f64, f64)>,
}

fn recipes(n: usize) -> Vec<Recipe> {
    let nf = n as f64;
    let cp = c0(n).powf(2.0 * nf / (nf - 2.0));
    let ang = Angular::new(n);
    vec![
        Recipe {
            name: "S_n",
            prefactor: cp,
            angular: ang.half,
            k: nf - 1.0,
            m: nf,
            minus: None,
        },
        Recipe {
            name: "c2",
            prefactor: cp,
            angular: ang.full,
            k: nf - 1.0,
            m: (nf + 2.0) / 2.0,
            minus: None,
        },
        Recipe {
            name: "c3",
            prefactor: (nf - 2.0) / 2.0 * cp,
            angular: ang.half_first,
            k: nf + 2.0,
            m: nf + 1.0,
            minus: Some((nf, nf + 1.0)),
        },
        Recipe {
            name: "c4",
            prefactor: (nf - 2.0) * cp,
            angular: ang.half_first,
            k: nf,
            m: nf + 1.0,
            minus: None,
        },
        Recipe {
            name: "c5",
            prefactor: (nf - 2.0) / (2.0 * nf) * cp,
            angular: ang.full_second,
            k: nf + 1.0,
            m: nf + 1.0,
            minus: None,
        },
        Recipe {
            name: "c6",
            prefactor: (nf - 2.0) / (nf * nf) * cp,
            angular: ang.half,
            k: nf + 1.0,
            m: nf,
            minus: None,
        },
        Recipe {
            name: "c7",
            prefactor: 2.0 * (nf - 2.0) / nf * cp,
            angular: ang.half_first,
            k: nf,
            m: nf,
            minus: None,
        },
        // Coefficient of the Laplacian term in the rate derivative; equals c6.
        Recipe {
            name: "c9",
            prefactor: 2.0 / nf * cp,
            angular: ang.half,
            k: nf + 1.0,
            m: nf + 1.0,
            minus: None,
        },
    ]
}

impl ConstantsTable {
    /// `(name, value)` pairs in report order (c0 first).
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("c0", self.c0),
            ("S_n", self.s_n),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("c5", self.c5),
            ("c6", self.c6),
            ("c7", self.c7),
            ("c9", self.c9),
        ]
    }

    fn from_values(n: usize, tol: f64, values: &[f64], errors: Vec<f64>) -> Self {
        Self {
            version: CONSTANTS_VERSION.to_string(),
            n,
            tol,
            c0: c0(n),
            s_n: values[0],
            c2: values[1],
            c3: values[2],
            c4: values[3],
            c5: values[4],
            c6: values[5],
            c7: values[6],
            c9: values[7],
            errors,
        }
    }

    /// Same table evaluated from Beta-function closed forms (zero error).
    pub fn closed_form(n: usize) -> Self {
        let values: Vec<f64> = recipes(n)
            .iter()
            .map(|r| {
                let mut v = radial_moment_closed(r.k, r.m);
                if let Some((k, m)) = r.minus {
                    v -= radial_moment_closed(k, m);
                }
                r.prefactor * r.angular * v
            })
            .collect();
        Self::from_values(n, 0.0, &values, vec![0.0; 9])
    }

    /// `2n/(n-2)`.
    pub fn critical_exponent(&self) -> f64 {
        2.0 * self.n as f64 / (self.n as f64 - 2.0)
    }
}

/// Computes every constant by adaptive quadrature with relative tolerance `tol`.
pub fn compute_constants(n: usize, tol: f64) -> Result<ConstantsTable> {
    if n < 5 {
        return Err(Error::InvalidConfiguration(format!("dimension {n} < 5")));
    }
    if !(1e-12..=1e-4).contains(&tol) {
        return Err(Error::InvalidConfiguration(format!(
            "tolerance {tol} outside [1e-12, 1e-4]"
        )));
    }
    let mut values = Vec::new();
    let mut errors = vec![0.0];
    for r in recipes(n) {
        // Radial moments are computed a decade tighter than requested so the
        // combined entry stays within tol.
        let main = radial_moment(r.k, r.m, tol * 0.1)?;
        let (v, e) = match r.minus {
            Some((k, m)) => {
                let sub = radial_moment(k, m, tol * 0.1)?;
                (main.value - sub.value, main.error + sub.error)
            }
            None => (main.value, main.error),
        };
        let scale = (r.prefactor * r.angular).abs();
        let value = scale * v;
        let error = scale * e;
        if error > tol * value.abs() {
            return Err(Error::ToleranceNotMet {
                what: r.name.to_string(),
                err: error,
                tol: tol * value.abs(),
            });
        }
        values.push(value);
        errors.push(error);
    }
    Ok(ConstantsTable::from_values(n, tol, &values, errors))
}

/// Interaction constant `c0^{2n/(n-2)} int_{R^n} (1+|x|^2)^{-(n+2)/2} dx`.
pub fn c2_interaction_constant(n: usize, tol: f64) -> Result<f64> {
    Ok(compute_constants(n, tol)?.c2)
}
