//! Oracle suites. Each suite returns one `Check` per verified property.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bubbles::{c0, epsilon, epsilon_dlambda, BubbleParam};
use crate::census::{
    alternating_sums_closed, counting_a, counting_b, enumerate_census, existence_check, level_bands, pinch_threshold,
    Theorem, TheoremChoice,
};
use crate::error::{Error, Result};
use crate::flow::{Flow, FlowParams, RegionTag, Trajectory};
use crate::geometry::{geodesic_distance, FieldSpec, ScalarField, SpherePoint};
use crate::landscape::{CriticalKind, Landscape};
use crate::quadrature::{compute_constants, integrate, sphere_area, ConstantsTable};
use crate::reduced::{BubbleState, Configuration, ModelParams, ReducedModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Wall-clock time of a runtime check; kept out of serialized reports
    /// so that they stay reproducible.
    #[serde(skip)]
    pub seconds: Option<f64>,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
            seconds: None,
        }
    }

    /// Runtime check against a wall-clock budget in seconds.
    fn timed(name: &str, start: Instant, budget: f64, detail: String) -> Self {
        let secs = start.elapsed().as_secs_f64();
        Self {
            name: name.to_string(),
            passed: secs < budget,
            detail,
            seconds: Some(secs),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Counting,
    Constants,
    Expansion,
    Gradients,
    Flow,
    Census,
    Interaction,
    Convexity,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Counting,
        Suite::Constants,
        Suite::Expansion,
        Suite::Gradients,
        Suite::Flow,
        Suite::Census,
        Suite::Interaction,
        Suite::Convexity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Counting => "counting",
            Suite::Constants => "constants",
            Suite::Expansion => "expansion",
            Suite::Gradients => "gradients",
            Suite::Flow => "flow",
            Suite::Census => "census",
            Suite::Interaction => "interaction",
            Suite::Convexity => "convexity",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.iter().copied().find(|x| x.name() == s)
    }
}

/// Options shared by the suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Initial states per region in the flow suite.
    pub flow_states: usize,
    pub flow_horizon: f64,
    pub flow: FlowParams,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 20240601,
            flow_states: 50,
            flow_horizon: 1.0,
            flow: FlowParams::default(),
        }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Vec<Check>> {
    match suite {
        Suite::Counting => counting_suite(opts.seed),
        Suite::Constants => constants_suite(opts.seed),
        Suite::Expansion => expansion_suite(),
        Suite::Gradients => gradients_suite(opts.seed),
        Suite::Flow => flow_suite(opts),
        Suite::Census => census_suite(),
        Suite::Interaction => interaction_suite(opts.seed),
        Suite::Convexity => convexity_suite(opts.seed),
    }
}

// ---------------------------------------------------------------- counting

/// Elementary symmetric sums of `s` up to order 4 by subset enumeration.
fn subset_sums(s: &[i64]) -> [i64; 4] {
    let mut out = [0i64; 4];
    for mask in 1u32..(1 << s.len()) {
        let size = mask.count_ones() as usize;
        if size <= 4 {
            let prod: i64 = (0..s.len()).filter(|b| mask >> b & 1 == 1).map(|b| s[b]).product();
            out[size - 1] += prod;
        }
    }
    out
}

pub fn counting_suite(seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lists, mut direct_bad, mut closed_bad) = (0usize, 0usize, 0usize);
    let (mut a_cases, mut a_bad, mut b_cases, mut b_bad) = (0usize, 0usize, 0usize, 0usize);
    for len in 0..=12usize {
        for mask in 0u32..(1 << len) {
            // Random index values with the parity pattern of the mask.
            let idx: Vec<i64> = (0..len)
                .map(|b| 2 * rng.gen_range(0..3) + (mask >> b & 1) as i64)
                .collect();
            let s: Vec<i64> = idx.iter().map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
            let brute = subset_sums(&s);
            let direct = counting_a(&idx);
            lists += 1;
            if [direct.0, direct.1, direct.2, direct.3] != brute {
                direct_bad += 1;
            }
            let odd = mask.count_ones() as usize;
            let even = len - odd;
            if alternating_sums_closed(even, odd, 4) != brute.to_vec() {
                closed_bad += 1;
            }
            if brute[0] == 1 {
                a_cases += 1;
                let k = odd as i64;
                let census_ok = even == odd + 1 && len == 2 * odd + 1;
                if !(census_ok && brute[1] == -k && brute[2] == -k && brute[3] == k * (k - 1) / 2) {
                    a_bad += 1;
                }
            }
            let (b1, b2) = counting_b(&idx);
            if b1 <= 0 {
                b_cases += 1;
                let k = -b1;
                let r = even as i64;
                if !(len as i64 == 2 * r + k && b2 == -r + k * (k - 1) / 2) {
                    b_bad += 1;
                }
            }
        }
    }
    Ok(vec![
        Check::new(
            "counting.direct_vs_subsets",
            direct_bad == 0,
            format!("{lists} lists, {direct_bad} mismatches"),
        ),
        Check::new(
            "counting.closed_vs_subsets",
            closed_bad == 0,
            format!("{lists} lists, {closed_bad} mismatches"),
        ),
        Check::new(
            "counting.a_formulas",
            a_bad == 0 && a_cases > 0,
            format!("{a_cases} lists with A1 = 1, {a_bad} violations"),
        ),
        Check::new(
            "counting.b_formula",
            b_bad == 0 && b_cases > 0,
            format!("{b_cases} lists with B1 <= 0, {b_bad} violations"),
        ),
        Check::timed("counting.runtime", start, 5.0, "budget 5s".to_string()),
    ])
}

// --------------------------------------------------------------- constants

/// `|Delta u + u^{(n+2)/(n-2)}| / u^{(n+2)/(n-2)}` for the flat bubble, from
/// the radial derivatives.
fn flat_bubble_residual(n: usize, mu: f64, r: f64) -> f64 {
    let nf = n as f64;
    let e = (nf - 2.0) / 2.0;
    let c = c0(n) * mu.powf(e);
    let s = 1.0 + mu * mu * r * r;
    let u = c * s.powf(-e);
    let du = -2.0 * e * c * mu * mu * r * s.powf(-e - 1.0);
    let d2u =
        -2.0 * e * c * mu * mu * s.powf(-e - 1.0) + 4.0 * e * (e + 1.0) * c * mu.powi(4) * r * r * s.powf(-e - 2.0);
    let lap = d2u + (nf - 1.0) / r * du;
    let rhs = u.powf((nf + 2.0) / (nf - 2.0));
    (lap + rhs).abs() / rhs
}

pub fn constants_suite(seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut out = Vec::new();
    for n in 5..=7 {
        let q = compute_constants(n, 1e-10)?;
        let c = ConstantsTable::closed_form(n);
        let mut worst = (0.0f64, "");
        for ((name, a), (_, b)) in q.entries().into_iter().zip(c.entries()) {
            let rel = (a - b).abs() / b.abs();
            if rel > worst.0 {
                worst = (rel, name);
            }
        }
        out.push(Check::new(
            &format!("constants.closed_form.n{n}"),
            worst.0 <= 1e-6,
            format!("worst relative error {:.2e} ({})", worst.0, worst.1),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(5..=7);
        let mu = 10f64.powf(rng.gen_range(-1.0..2.0));
        let r = 10f64.powf(rng.gen_range(-3.0..1.0)) / mu;
        worst = worst.max(flat_bubble_residual(n, mu, r));
    }
    out.push(Check::new(
        "constants.c0_pde_residual",
        worst <= 1e-8,
        format!("max relative residual {worst:.2e}"),
    ));
    out.push(Check::timed("constants.runtime", start, 10.0, "budget 10s".to_string()));
    Ok(out)
}

// --------------------------------------------------------------- expansion

/// `J(delta_{e1,lambda})` on the half-sphere for `K = 1 + b1 x1 + b6 x_{n+1}`,
/// by radial quadrature around `e1`.
pub fn boundary_bubble_energy(n: usize, b1: f64, b6: f64, lambda: f64) -> Result<f64> {
    let nf = n as f64;
    let pc = 2.0 * nf / (nf - 2.0);
    let amp = c0(n).powf(pc) * lambda.powf(nf);
    let dens = |t: f64| amp * (2.0 + (lambda * lambda - 1.0) * (1.0 - t.cos())).powf(-nf) * t.sin().powf(nf - 1.0);
    let half_sphere = sphere_area(n - 1) / 2.0;
    // Volume of the unit ball in R^{n-1}: integral of the last coordinate over a half of S^{n-1}.
    let ball = sphere_area(n - 2) / (nf - 1.0);
    let split = (20.0 / lambda).min(std::f64::consts::PI);
    let quad = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
        let a = integrate(f, 0.0, split, 0.0, 1e-13)?.value;
        let b = integrate(f, split, std::f64::consts::PI, 0.0, 1e-13)?.value;
        Ok(a + b)
    };
    let num = quad(&|t| dens(t) * half_sphere)?;
    let den = quad(&|t| dens(t) * ((1.0 + b1 * t.cos()) * half_sphere + b6 * t.sin() * ball))?;
    Ok(num / den.powf((nf - 2.0) / nf))
}

fn single_boundary(model: &ReducedModel, lambda: f64) -> Configuration {
    let cfg = Configuration {
        q: 1,
        p: 0,
        bubbles: vec![BubbleState {
            alpha: 1.0,
            point: SpherePoint::axis(5, 0),
            lambda,
        }],
        eps: 0.2,
    };
    model.normalize_alphas(&cfg)
}

pub fn expansion_suite() -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut out = Vec::new();
    for (label, b6) in [("flat_normal", 0.0), ("normal_slope", 0.05)] {
        let spec = FieldSpec::constant(5, 1.0).with("x1", 0.05).with("x6", b6);
        let model = ReducedModel::new(
            ScalarField::from_spec(spec)?,
            ConstantsTable::closed_form(5),
            ModelParams::default(),
        )?;
        for lambda in [10.0, 20.0, 40.0] {
            let cfg = single_boundary(&model, lambda);
            let j = model.reduced_j_unchecked(&cfg);
            let quad = boundary_bubble_energy(5, 0.05, b6, lambda)?;
            out.push(Check::new(
                &format!("expansion.{label}.value.l{lambda}"),
                j.contains(quad),
                format!(
                    "quadrature {quad:.10}, model {:.10} +- {:.3e}, gap {:.3e}",
                    j.center,
                    j.halfwidth,
                    (quad - j.center).abs()
                ),
            ));
        }
        let lambda = 20.0;
        let h: f64 = 1e-3;
        let fd = (boundary_bubble_energy(5, 0.05, b6, lambda * h.exp())?
            - boundary_bubble_energy(5, 0.05, b6, lambda * (-h).exp())?)
            / (2.0 * h);
        let cfg = single_boundary(&model, lambda);
        let g = model.grad_lambda_boundary(&cfg, 0)?;
        let model_d = g.center * cfg.bubbles[0].alpha;
        let rel = (fd - model_d).abs() / fd.abs();
        out.push(Check::new(
            &format!("expansion.{label}.rate_derivative"),
            rel <= 0.15,
            format!("finite difference {fd:.4e}, model {model_d:.4e}, relative gap {rel:.3}"),
        ));
    }
    out.push(Check::timed(
        "expansion.runtime",
        start,
        120.0,
        "budget 120s".to_string(),
    ));
    Ok(out)
}

// --------------------------------------------------------------- gradients

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let nrm = v.norm();
        if nrm > 0.1 && nrm <= 1.0 {
            return v / nrm;
        }
    }
}

/// Point at geodesic distance `r` from `base` along a random equator-tangent direction.
pub fn boundary_point_near(rng: &mut ChaCha8Rng, base: &DVector<f64>, r: f64) -> SpherePoint {
    let n = base.len() - 1;
    let mut t = random_unit(rng, n + 1);
    t[n] = 0.0;
    t -= base * base.dot(&t);
    let t = t.normalize();
    SpherePoint::normalized(base * r.cos() + t * r.sin()).expect("nonzero")
}

fn random_valid_configuration(rng: &mut ChaCha8Rng, n: usize) -> Configuration {
    loop {
        let m = rng.gen_range(1..=3);
        let q = rng.gen_range(0..=m);
        let mut bubbles = Vec::new();
        for i in 0..m {
            let mut x = random_unit(rng, n + 1);
            let (point, lambda) = if i < q {
                x[n] = 0.0;
                (
                    SpherePoint::normalized(x).expect("nonzero"),
                    10f64.powf(rng.gen_range(1.7..3.0)),
                )
            } else {
                x[n] = rng.gen_range(0.3..1.0);
                let p = SpherePoint::normalized(x).expect("nonzero");
                let d = p.boundary_distance();
                (p, (15.0 / d).max(10f64.powf(rng.gen_range(2.0..3.0))))
            };
            bubbles.push(BubbleState {
                alpha: rng.gen_range(0.5..1.5),
                point,
                lambda,
            });
        }
        let cfg = Configuration {
            q,
            p: m - q,
            bubbles,
            eps: 0.1,
        };
        if cfg.check_neighborhood().is_ok() {
            return cfg;
        }
    }
}

/// Central difference with a step-halving error estimate.
fn central(f: impl Fn(f64) -> f64, h: f64) -> (f64, f64) {
    let d1 = (f(h) - f(-h)) / (2.0 * h);
    let d2 = (f(h / 2.0) - f(-h / 2.0)) / h;
    (d2, (d2 - d1).abs())
}

pub fn gradients_suite(seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = FieldSpec::constant(5, 1.0)
        .with("x1", 0.05)
        .with("x2^2", 0.03)
        .with("x6", -0.02)
        .with("x3*x6", 0.01);
    let model = ReducedModel::new(
        ScalarField::from_spec(spec)?,
        ConstantsTable::closed_form(5),
        ModelParams::default(),
    )?;
    let (mut comps, mut bad) = (0usize, Vec::new());
    for case in 0..100 {
        let cfg = random_valid_configuration(&mut rng, 5);
        let g = model.gradient_components(&cfg)?;
        for k in 0..cfg.len() {
            let b = cfg.bubbles[k].clone();
            let (fd, err) = central(
                |t| {
                    let mut c = cfg.clone();
                    c.bubbles[k].alpha = b.alpha + t;
                    model.value(&c)
                },
                1e-4,
            );
            comps += 1;
            if (fd - g.alpha[k].center).abs() > g.alpha[k].halfwidth + 10.0 * err + 1e-10 {
                bad.push(format!("case {case} alpha {k}"));
            }
            let (fd, err) = central(
                |t| {
                    let mut c = cfg.clone();
                    c.bubbles[k].lambda = b.lambda * t.exp();
                    model.value(&c)
                },
                1e-4,
            );
            comps += 1;
            if (fd / b.alpha - g.lambda[k].center).abs() > g.lambda[k].halfwidth + (10.0 * err + 1e-10) / b.alpha {
                bad.push(format!("case {case} lambda {k}"));
            }
            for _ in 0..2 {
                let v = cfg.project_tangent(k, &random_unit(&mut rng, 6));
                if v.norm() < 1e-3 {
                    continue;
                }
                let v = v.normalize();
                let a = b.point.coords().clone();
                let (fd, err) = central(
                    |t| {
                        let mut c = cfg.clone();
                        c.bubbles[k].point = SpherePoint::normalized(&a * t.cos() + &v * t.sin()).expect("unit");
                        model.value(&c)
                    },
                    1e-4 / b.lambda,
                );
                let scale = b.alpha * b.lambda;
                comps += 1;
                if (fd / scale - g.a[k].vector.dot(&v)).abs() > g.a[k].halfwidth + (10.0 * err + 1e-10) / scale {
                    bad.push(format!("case {case} point {k}"));
                }
            }
        }
    }
    Ok(vec![
        Check::new(
            "gradients.finite_differences",
            bad.is_empty(),
            format!(
                "{comps} pairings on 100 configurations, {} outside error bars {:?}",
                bad.len(),
                bad.iter().take(5).collect::<Vec<_>>()
            ),
        ),
        Check::timed("gradients.runtime", start, 60.0, "budget 60s".to_string()),
    ])
}

// -------------------------------------------------------------------- flow

/// A field with its landscape and model.
pub struct FlowFixture {
    pub model: ReducedModel,
    pub landscape: Landscape,
}

impl FlowFixture {
    pub fn new(spec: FieldSpec) -> Result<Self> {
        let field = ScalarField::from_spec(spec)?;
        let landscape = Landscape::analyze(&field, 8)?;
        let model = ReducedModel::new(field, ConstantsTable::closed_form(5), ModelParams::default())?;
        Ok(Self { model, landscape })
    }
}

/// Fields and samplers producing random states inside each pure region.
pub struct RegionFixtures {
    /// `1 + 0.05 x1 - 0.05 x6`: positive normal derivative on the equator.
    pub positive: FlowFixture,
    /// `1 + 0.05 x1 + 0.05 x6`: negative normal derivative.
    pub negative: FlowFixture,
    /// Diagonal quadratic: zero normal derivative, nondegenerate maxima at `+-e1` and `e6`.
    pub quadratic: FlowFixture,
}

pub const REGIONS: [RegionTag; 7] = [
    RegionTag::V1,
    RegionTag::V2,
    RegionTag::V31,
    RegionTag::V32,
    RegionTag::V33,
    RegionTag::W,
    RegionTag::V4,
];

pub fn quadratic_spec() -> FieldSpec {
    FieldSpec::constant(5, 1.0)
        .with("x1^2", 0.05)
        .with("x2^2", 0.01)
        .with("x3^2", 0.008)
        .with("x4^2", 0.006)
        .with("x5^2", 0.004)
        .with("x6^2", 0.06)
}

impl RegionFixtures {
    pub fn new() -> Result<Self> {
        Ok(Self {
            positive: FlowFixture::new(FieldSpec::constant(5, 1.0).with("x1", 0.05).with("x6", -0.05))?,
            negative: FlowFixture::new(FieldSpec::constant(5, 1.0).with("x1", 0.05).with("x6", 0.05))?,
            quadratic: FlowFixture::new(quadratic_spec())?,
        })
    }

    pub fn fixture(&self, tag: RegionTag) -> &FlowFixture {
        match tag {
            RegionTag::V32 => &self.negative,
            RegionTag::V31 | RegionTag::V4 => &self.quadratic,
            _ => &self.positive,
        }
    }

    /// Random state of the given region, with balanced weights.
    pub fn sample(&self, tag: RegionTag, rng: &mut ChaCha8Rng) -> Configuration {
        let e1 = SpherePoint::axis(5, 0).coords().clone();
        let loglam = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| 10f64.powf(rng.gen_range(lo..hi));
        let st = |point: SpherePoint, lambda: f64| BubbleState {
            alpha: 1.0,
            point,
            lambda,
        };
        let pair_around = |rng: &mut ChaCha8Rng, half: f64| {
            let a = boundary_point_near(rng, &e1, half);
            let mirrored = SpherePoint::normalized(&e1 * (2.0 * a.coords().dot(&e1)) - a.coords()).expect("unit");
            (a, mirrored)
        };
        let (q, p, bubbles) = match tag {
            RegionTag::V1 => loop {
                let mut x = random_unit(rng, 6);
                x[5] = rng.gen_range(0.4..0.9);
                let pt = SpherePoint::normalized(x).expect("nonzero");
                let y = self
                    .positive
                    .landscape
                    .records
                    .iter()
                    .find(|r| r.kind == CriticalKind::InteriorOfK);
                if y.is_none_or(|y| geodesic_distance(&y.location, &pt) > 0.4) {
                    break (0, 1, vec![st(pt, loglam(rng, 4.0, 4.5))]);
                }
            },
            RegionTag::V2 => loop {
                let mut x = random_unit(rng, 6);
                x[5] = 0.0;
                let pt = SpherePoint::normalized(x).expect("nonzero");
                if pt.coords()[0].abs() < 0.9 {
                    break (1, 0, vec![st(pt, loglam(rng, 3.0, 4.0))]);
                }
            },
            RegionTag::V31 => {
                let half = rng.gen_range(0.04..0.06);
                let (a, b) = pair_around(rng, half);
                (2, 0, vec![st(a, loglam(rng, 3.7, 4.3)), st(b, loglam(rng, 3.7, 4.3))])
            }
            RegionTag::V32 => {
                let r = rng.gen_range(0.0..0.05);
                (1, 0, vec![st(boundary_point_near(rng, &e1, r), loglam(rng, 3.0, 4.0))])
            }
            RegionTag::V33 => {
                let half = rng.gen_range(0.04..0.06);
                let (a, b) = pair_around(rng, half);
                (
                    2,
                    0,
                    vec![st(a, rng.gen_range(80.0..150.0)), st(b, rng.gen_range(80.0..150.0))],
                )
            }
            RegionTag::W => {
                let r = rng.gen_range(0.0..0.01);
                let first = st(boundary_point_near(rng, &e1, r), loglam(rng, 4.0, 5.0));
                if rng.gen_bool(0.5) {
                    (1, 0, vec![first])
                } else {
                    let r = rng.gen_range(0.0..0.01);
                    let second = st(boundary_point_near(rng, &(-&e1), r), loglam(rng, 4.0, 5.0));
                    (2, 0, vec![first, second])
                }
            }
            _ => {
                let (r_slow, l_slow) = (rng.gen_range(0.06..0.09), rng.gen_range(80.0..150.0));
                let slow = st(boundary_point_near(rng, &e1, r_slow), l_slow);
                let (r_fast, l_fast) = (rng.gen_range(0.0..0.001), loglam(rng, 4.8, 5.3));
                let fast = st(boundary_point_near(rng, &e1, r_fast), l_fast);
                (2, 0, vec![slow, fast])
            }
        };
        let cfg = Configuration {
            q,
            p,
            bubbles,
            eps: 0.1,
        };
        self.fixture(tag).model.normalize_alphas(&cfg)
    }
}

/// Monitor results of one region.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionMonitor {
    pub states: usize,
    pub labelled: usize,
    pub step_failures: usize,
    pub j_violations: usize,
    pub sign_violations: usize,
    pub mu_violations: usize,
    /// V3_3 only: seeds with at least 10% barycentric contraction at `t = 1`.
    pub contracted: usize,
    pub steps: usize,
}

pub fn cluster_spread(cfg: &Configuration, members: &[usize]) -> f64 {
    let sum = members.iter().fold(DVector::zeros(cfg.dim() + 1), |acc, &j| {
        acc + cfg.bubbles[j].point.coords()
    });
    let bar = sum.normalize();
    members
        .iter()
        .map(|&j| (cfg.bubbles[j].point.coords() - &bar).norm_squared())
        .sum()
}

fn audit_trajectory(traj: &Trajectory, params: &FlowParams, mon: &mut RegionMonitor) {
    mon.steps += traj.states.len();
    for s in &traj.states {
        if s.label.weight(RegionTag::W) == 0.0 && s.velocity.lambda.iter().any(|l| *l > 0.0) {
            mon.sign_violations += 1;
        }
    }
    for w in traj.states.windows(2) {
        let dt = w[1].time - w[0].time;
        if w[1].j.center > w[0].j.center + params.j_tol * dt {
            mon.j_violations += 1;
        }
        if w[0].label.tag == RegionTag::V4 && w[1].label.tag == RegionTag::V4 {
            let m0 = w[0].mu.iter().copied().fold(0.0, f64::max);
            let m1 = w[1].mu.iter().copied().fold(0.0, f64::max);
            if m1 > m0 * (1.0 + 1e-12) {
                mon.mu_violations += 1;
            }
        }
    }
}

/// Integrates `states` random initial states of one region and audits them.
pub fn monitor_region(fx: &RegionFixtures, tag: RegionTag, opts: &VerifyOptions) -> Result<RegionMonitor> {
    let fixture = fx.fixture(tag);
    let flow = Flow::new(&fixture.model, &fixture.landscape, opts.flow.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (tag as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut mon = RegionMonitor::default();
    for _ in 0..opts.flow_states {
        let cfg = fx.sample(tag, &mut rng);
        mon.states += 1;
        if flow.classify_region(&cfg)?.tag == tag {
            mon.labelled += 1;
        }
        match flow.integrate(&cfg, opts.flow_horizon) {
            Ok(traj) => {
                audit_trajectory(&traj, &opts.flow, &mut mon);
                if tag == RegionTag::V33 {
                    let last = traj.states.last().expect("nonempty");
                    let members: Vec<usize> = (0..cfg.len()).collect();
                    if last.time >= opts.flow_horizon - 1e-12
                        && cluster_spread(&last.config, &members) <= 0.9 * cluster_spread(&cfg, &members)
                    {
                        mon.contracted += 1;
                    }
                }
            }
            Err(Error::StepFailure { .. }) => mon.step_failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(mon)
}

/// `lambda`-velocity sign audit on random states of one region.
pub fn sign_audit(fx: &RegionFixtures, tag: RegionTag, count: usize, seed: u64) -> Result<(usize, usize)> {
    let fixture = fx.fixture(tag);
    let flow = Flow::new(&fixture.model, &fixture.landscape, FlowParams::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5151 ^ tag as u64);
    let mut bad = 0;
    for _ in 0..count {
        let cfg = fx.sample(tag, &mut rng);
        let (v, label) = flow.pseudogradient(&cfg)?;
        if label.weight(RegionTag::W) == 0.0 && v.lambda.iter().any(|l| *l > 0.0) {
            bad += 1;
        }
    }
    Ok((count, bad))
}

pub fn flow_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let start = Instant::now();
    let fx = RegionFixtures::new()?;
    let mut out = Vec::new();
    let mut total = RegionMonitor::default();
    for tag in REGIONS {
        let mon = monitor_region(&fx, tag, opts)?;
        out.push(Check::new(
            &format!("flow.{tag}.labels"),
            mon.labelled == mon.states,
            format!("{}/{} initial states carry the label", mon.labelled, mon.states),
        ));
        out.push(Check::new(
            &format!("flow.{tag}.monotone"),
            mon.j_violations == 0 && mon.step_failures == 0,
            format!(
                "{} steps, {} increases, {} step failures",
                mon.steps, mon.j_violations, mon.step_failures
            ),
        ));
        out.push(Check::new(
            &format!("flow.{tag}.rate_signs"),
            mon.sign_violations == 0,
            format!("{} states with a positive rate velocity outside W", mon.sign_violations),
        ));
        if tag == RegionTag::V4 {
            out.push(Check::new(
                "flow.V4.mu_max",
                mon.mu_violations == 0,
                format!("{} increases of mu_max", mon.mu_violations),
            ));
        }
        if tag == RegionTag::V33 {
            out.push(Check::new(
                "flow.V3_3.contraction",
                mon.contracted * 10 >= mon.states * 9,
                format!(
                    "{}/{} seeds contract by 10% within one time unit",
                    mon.contracted, mon.states
                ),
            ));
        }
        total.steps += mon.steps;
    }
    out.push(Check::timed(
        "flow.runtime",
        start,
        300.0,
        format!("{} steps, budget 300s", total.steps),
    ));
    Ok(out)
}

// ------------------------------------------------------------------ census

/// Crafted fields with hand-enumerable landscapes and their expected entry counts (mass <= 4).
pub fn census_fields() -> Vec<(&'static str, FieldSpec, usize)> {
    vec![
        ("quadratic", quadratic_spec(), 7),
        ("linear", FieldSpec::constant(5, 1.0).with("x1", 0.05), 1),
        (
            "tilted",
            FieldSpec::constant(5, 1.0).with("x1", 0.05).with("x6", -0.03),
            1,
        ),
    ]
}

pub fn census_suite() -> Result<Vec<Check>> {
    let start = Instant::now();
    let n = 5;
    let s = ConstantsTable::closed_form(n).s_n;
    let nf = n as f64;
    let mut out = Vec::new();
    for (name, spec, expected) in census_fields() {
        let field = ScalarField::from_spec(spec)?;
        let l = Landscape::analyze(&field, 8)?;
        let census = enumerate_census(&l.sets, n, s, 4);
        let adm: Vec<_> = l.records.iter().filter(|r| r.census_admissible()).collect();
        let mut oracle = Vec::new();
        for mask in 1u32..(1 << adm.len()) {
            let chosen: Vec<_> = (0..adm.len()).filter(|b| mask >> b & 1 == 1).map(|b| adm[b]).collect();
            let mass: usize = chosen.iter().map(|r| if r.is_boundary() { 1 } else { 2 }).sum();
            if mass > 4 {
                continue;
            }
            let sum: f64 = chosen
                .iter()
                .map(|r| (if r.is_boundary() { 1.0 } else { 2.0 }) * r.value.powf(-(nf - 2.0) / 2.0))
                .sum();
            let level = s.powf(2.0 / nf) * sum.powf(2.0 / nf);
            let index = chosen.len() - 1
                + chosen
                    .iter()
                    .map(|r| {
                        if r.is_boundary() {
                            n - 1 - r.morse_index
                        } else {
                            n - r.morse_index
                        }
                    })
                    .sum::<usize>();
            oracle.push((level, index, mass));
        }
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let got: Vec<_> = census.iter().map(|e| (e.level, e.index, e.mass)).collect();
        let same = got.len() == oracle.len()
            && got
                .iter()
                .zip(&oracle)
                .all(|(a, b)| (a.0 - b.0).abs() <= 1e-12 * b.0 && a.1 == b.1 && a.2 == b.2);
        out.push(Check::new(
            &format!("census.{name}.entries"),
            same && got.len() == expected,
            format!("{} entries (hand count {expected}, oracle {})", got.len(), oracle.len()),
        ));
        let bands = level_bands(n, s, l.k_min, l.k_max, 4);
        let inside = census.iter().all(|e| {
            let b = &bands[e.mass - 1];
            b.min <= e.level * (1.0 + 1e-12) && e.level <= b.max * (1.0 + 1e-12)
        });
        out.push(Check::new(
            &format!("census.{name}.bands"),
            inside,
            format!("k_min {:.6}, k_max {:.6}", l.k_min, l.k_max),
        ));
        let report = existence_check(&l, TheoremChoice::Auto)?;
        let gates = report.verdicts.iter().all(|v| {
            let k = match v.theorem {
                Theorem::T11 => 4.0f64,
                Theorem::T12 => 1.0,
                Theorem::T13 => 2.0,
            };
            let want = ((k + 1.0) / k).powf(1.0 / (nf - 2.0));
            v.hypotheses["pinch_threshold"].value.to_bits() == want.to_bits()
        });
        out.push(Check::new(
            &format!("census.{name}.pinch_gates"),
            gates,
            format!("conclusion {:?}", report.conclusion),
        ));
    }
    let exact = pinch_threshold(4, 5) == 1.25f64.powf(1.0 / 3.0)
        && pinch_threshold(1, 5) == 2f64.powf(1.0 / 3.0)
        && pinch_threshold(2, 5) == 1.5f64.powf(1.0 / 3.0);
    out.push(Check::new(
        "census.pinch_thresholds",
        exact,
        format!("{:.12}", pinch_threshold(4, 5)),
    ));
    out.push(Check::timed("census.runtime", start, 10.0, "budget 10s".to_string()));
    Ok(out)
}

// ----------------------------------------------------------------- interaction

fn random_hemisphere_param(rng: &mut ChaCha8Rng) -> BubbleParam {
    let mut x = random_unit(rng, 6);
    x[5] = if rng.gen_bool(0.5) { 0.0 } else { x[5].abs() };
    let a = SpherePoint::normalized(x).expect("nonzero");
    BubbleParam {
        a,
        lambda: 10f64.powf(rng.gen_range(0.0..6.0)),
    }
}

pub fn interaction_suite(seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum_bad, mut single_bad, mut single_cases) = (0usize, 0usize, 0usize);
    for _ in 0..10_000 {
        let bi = random_hemisphere_param(&mut rng);
        let mut bj = random_hemisphere_param(&mut rng);
        if rng.gen_bool(0.3) {
            // Nearby points exercise the small-distance branch.
            bj.a = boundary_or_interior_near(&mut rng, &bi.a);
        }
        let e = epsilon(&bi, &bj);
        let (di, dj) = epsilon_dlambda(&bi, &bj);
        if -di - dj < -1e-15 * e {
            sum_bad += 1;
        }
        if bi.lambda * geodesic_distance(&bi.a, &bj.a) >= 2.0 {
            single_cases += 1;
            if -di < 0.1 * e {
                single_bad += 1;
            }
        }
    }
    Ok(vec![
        Check::new(
            "interaction.sum_nonnegative",
            sum_bad == 0,
            format!("10000 samples, {sum_bad} violations"),
        ),
        Check::new(
            "interaction.separated_lower_bound",
            single_bad == 0 && single_cases > 0,
            format!("{single_cases} separated samples, {single_bad} violations"),
        ),
        Check::timed("interaction.runtime", start, 5.0, "budget 5s".to_string()),
    ])
}

fn boundary_or_interior_near(rng: &mut ChaCha8Rng, a: &SpherePoint) -> SpherePoint {
    loop {
        let step = random_unit(rng, 6) * 10f64.powf(rng.gen_range(-4.0..-1.0));
        let mut x = a.coords() + step;
        if a.height() == 0.0 {
            x[5] = 0.0;
        }
        if x[5] >= 0.0 {
            return SpherePoint::normalized(x).expect("nonzero");
        }
    }
}

// --------------------------------------------------------------- convexity

pub fn convexity_suite(seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let field = ScalarField::from_spec(quadratic_spec())?;
    let l = Landscape::analyze(&field, 8)?;
    let z = l
        .records
        .iter()
        .filter(|r| r.is_boundary() && r.is_boundary_max())
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::InvalidField("no boundary maximum".into()))?;
    let min_eig = z
        .hessian_eigenvalues
        .iter()
        .map(|e| e.abs())
        .fold(f64::INFINITY, f64::min);
    let c = 0.5 * min_eig;
    let n = field.dim() as f64;
    let g = |x: &DVector<f64>| field.boundary_gradient_at(x) / field.value_at(x).powf(n / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let (ra, rh) = (rng.gen_range(0.0..0.05), rng.gen_range(0.0..0.05));
        let a = boundary_point_near(&mut rng, z.location.coords(), ra);
        let h = boundary_point_near(&mut rng, z.location.coords(), rh);
        let (a, h) = (a.coords(), h.coords());
        let ah = a.dot(h);
        let lhs = g(a).dot(&(h - a * ah));
        let rhs = -g(h).dot(&(a - h * ah)) + c * (a - h).norm_squared();
        if (a - h).norm() > 0.0 {
            worst = worst.min((lhs - rhs) / (a - h).norm_squared());
        }
        if lhs < rhs {
            bad += 1;
        }
    }
    Ok(vec![
        Check::new(
            "convexity.boundary_max",
            bad == 0,
            format!("1000 pairs, c = {c:.4}, {bad} violations, worst margin {worst:.4} per |a-h|^2"),
        ),
        Check::timed("convexity.runtime", start, 5.0, "budget 5s".to_string()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_sums_small() {
        assert_eq!(alternating_sums_closed(2, 1, 4), vec![1, -1, -1, 0]);
        assert_eq!(subset_sums(&[1, 1, -1]), [1, -1, -1, 0]);
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()), Some(s));
        }
    }

    #[test]
    fn energy_oracle_constant_field() {
        let s = ConstantsTable::closed_form(5).s_n;
        let j = boundary_bubble_energy(5, 0.0, 0.0, 30.0).unwrap();
        assert!((j - s.powf(0.4)).abs() < 1e-9 * j);
    }
}
