//! Region-classified pseudogradient on configuration space, its explicit
//! integration and the decrease certificate.
//!
//! Field directions map to parameter velocities as
//! `lambda d/dlambda -> lambda' = lambda`, `(1/lambda) d/da . e -> a' = e / lambda`
//! and `delta -> alpha' = 1`.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bubbles::{h_sphere_at, InteractionMatrix};
use crate::error::{Error, Result};
use crate::geometry::{geodesic_distance, SpherePoint};
use crate::landscape::{CriticalKind, Landscape, ZERO_TOL};
use crate::reduced::{Configuration, Interval, ReducedModel};

/// Constants of the pseudogradient construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub m0: f64,
    pub m2: f64,
    pub m4: f64,
    /// Radius of the critical-point neighbourhoods.
    pub eta: f64,
    /// Gate constant `M` of the boundary drift.
    pub m_gate: f64,
    /// Largest `q + p` the smallness conditions are checked for.
    pub max_bubbles: usize,
    /// Imbalance beyond which a trajectory is considered to have left the neighbourhood.
    pub alpha_exit: f64,
    pub dt_initial: f64,
    pub dt_max: f64,
    /// Local error tolerance of the embedded Euler/Heun pair.
    pub step_tol: f64,
    /// Admissible increase of the energy per unit time.
    pub j_tol: f64,
    pub max_rejections: usize,
    pub stagnation: f64,
    /// Constant of the decrease certificate.
    pub certificate_c: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            m0: 1e4,
            m2: 10.0,
            m4: 1e3,
            eta: 0.1,
            m_gate: 10.0,
            max_bubbles: 2,
            alpha_exit: 0.5,
            dt_initial: 1e-2,
            dt_max: 0.25,
            step_tol: 1e-3,
            j_tol: 1e-8,
            max_rejections: 10,
            stagnation: 1e-10,
            certificate_c: 0.1,
        }
    }
}

impl FlowParams {
    /// Smallness of `M0 / M4^2` and of the two `M2`-versus-`M0` ratios (limit 0.01).
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfiguration(format!("flow constants: {what}")));
        if !(self.m0 > 1.0 && self.m2 > 1.0 && self.m4 > 1.0 && self.eta > 0.0) {
            return bad("M0, M2, M4 must exceed 1 and eta be positive");
        }
        if self.m0 / (self.m4 * self.m4) > 0.01 + 1e-12 {
            return bad("M0 / M4^2 above 0.01");
        }
        if self.max_bubbles >= 2 {
            let k = (self.max_bubbles - 1) as f64;
            let nf = n as f64;
            let r1 = self.m2 / self.m0.powf(1.0 / k);
            let r2 = self.m2.powf((nf - 1.0) / (nf - 2.0)) / self.m0.powf((0.5 + 1.0 / (nf - 2.0)) / k);
            if r1.max(r2) > 0.01 + 1e-12 {
                return bad(&format!("M2 / M0 ratios {r1:.3e}, {r2:.3e} above 0.01"));
            }
        }
        if !(self.step_tol > 0.0 && self.j_tol >= 0.0 && self.dt_initial > 0.0 && self.dt_max >= self.dt_initial) {
            return bad("integrator tolerances must be positive");
        }
        Ok(())
    }
}

/// Quintic smoothstep: 0 below 1, 1 above 2.
pub fn psi1(t: f64) -> f64 {
    let s = (t - 1.0).clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

fn ramp(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionTag {
    V1,
    V2,
    #[serde(rename = "V3_1")]
    V31,
    #[serde(rename = "V3_2")]
    V32,
    #[serde(rename = "V3_3")]
    V33,
    W,
    V4,
    #[serde(rename = "mixed")]
    Mixed,
}

impl std::fmt::Display for RegionTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RegionTag::V1 => "V1",
            RegionTag::V2 => "V2",
            RegionTag::V31 => "V3_1",
            RegionTag::V32 => "V3_2",
            RegionTag::V33 => "V3_3",
            RegionTag::W => "W",
            RegionTag::V4 => "V4",
            RegionTag::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

/// The four ratios steering the field; entries not defined for the index kind are `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaQuantities {
    pub alpha: Option<f64>,
    pub a: f64,
    pub h: Option<f64>,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub tag: RegionTag,
    /// Partition-of-unity weights of the pure regions.
    pub weights: BTreeMap<RegionTag, f64>,
    pub mu: Vec<f64>,
    pub gamma: Vec<GammaQuantities>,
    /// Bubble clusters by nearest critical point (V3 part).
    pub clusters: Vec<Vec<usize>>,
    /// Comparable-rate prefix `I` (V4 part), in increasing `mu` order.
    pub index_set: Vec<usize>,
}

impl RegionLabel {
    pub fn weight(&self, tag: RegionTag) -> f64 {
        self.weights.get(&tag).copied().unwrap_or(0.0)
    }
}

/// Parameter velocity `(alpha', a', lambda')`.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity {
    pub alpha: Vec<f64>,
    pub a: Vec<DVector<f64>>,
    pub lambda: Vec<f64>,
}

impl Velocity {
    pub fn zeros(cfg: &Configuration) -> Self {
        let m = cfg.len();
        Self {
            alpha: vec![0.0; m],
            a: vec![DVector::zeros(cfg.dim() + 1); m],
            lambda: vec![0.0; m],
        }
    }

    fn axpy(&mut self, w: f64, other: &Velocity) {
        for i in 0..self.alpha.len() {
            self.alpha[i] += w * other.alpha[i];
            self.a[i] += &other.a[i] * w;
            self.lambda[i] += w * other.lambda[i];
        }
    }

    pub fn scaled(&self, w: f64) -> Velocity {
        let mut out = self.clone();
        for i in 0..out.alpha.len() {
            out.alpha[i] *= w;
            out.a[i] *= w;
            out.lambda[i] *= w;
        }
        out
    }

    /// Norm in the natural units (`alpha' / alpha`, `lambda' / lambda`, `lambda a'`).
    pub fn norm(&self, cfg: &Configuration) -> f64 {
        let mut s = 0.0;
        for (i, b) in cfg.bubbles.iter().enumerate() {
            s += (self.alpha[i] / b.alpha).powi(2)
                + (self.lambda[i] / b.lambda).powi(2)
                + (self.a[i].norm() * b.lambda).powi(2);
        }
        s.sqrt()
    }
}

/// Per-index quantities shared by all region predicates.
struct Local {
    mu: Vec<f64>,
    gamma: Vec<GammaQuantities>,
    beta: Vec<f64>,
    grad_k: Vec<DVector<f64>>,
    grad_k1: Vec<DVector<f64>>,
}

/// Velocity, region weights and V3_3 clusters of one field evaluation.
type RegionField = (Velocity, BTreeMap<RegionTag, f64>, Vec<Vec<usize>>);

/// Bubble-to-critical-point assignment of the V3 analysis.
struct Assignment {
    /// `(record index, members)` per occupied critical point.
    clusters: Vec<(usize, Vec<usize>)>,
    tag: RegionTag,
}

/// Outcome of an integration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TimeLimit,
    NeighborhoodExit,
    Stagnation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState {
    pub time: f64,
    pub config: Configuration,
    pub label: RegionLabel,
    pub j: Interval,
    pub lambda_sign: Vec<i8>,
    pub mu: Vec<f64>,
    pub velocity: Velocity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<TrajectoryState>,
    pub termination: Termination,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreaseCertificate {
    /// `<-grad J, W>` with its error bar.
    pub lhs: Interval,
    /// Aggregate `sum mu^{-(2-1/(n-2))} + ...` of the lower bound.
    pub aggregate: f64,
    pub c: f64,
    pub rhs_lower_bound: f64,
    pub satisfied: bool,
}

/// Pseudogradient machinery bound to a model and its landscape.
pub struct Flow<'a> {
    pub model: &'a ReducedModel,
    pub landscape: &'a Landscape,
    pub params: FlowParams,
}

impl<'a> Flow<'a> {
    pub fn new(model: &'a ReducedModel, landscape: &'a Landscape, params: FlowParams) -> Result<Self> {
        params.validate(model.field().dim())?;
        Ok(Self {
            model,
            landscape,
            params,
        })
    }

    /// `1 / (|grad K(a)| / lambda + 1 / lambda^2)` on the boundary, `lambda^2` inside.
    pub fn mu(&self, cfg: &Configuration, i: usize) -> f64 {
        let b = &cfg.bubbles[i];
        if cfg.is_boundary(i) {
            let g = self.model.field().tangent_gradient(&b.point).norm();
            1.0 / (g / b.lambda + 1.0 / (b.lambda * b.lambda))
        } else {
            b.lambda * b.lambda
        }
    }

    pub fn gamma_quantities(&self, cfg: &Configuration, i: usize) -> GammaQuantities {
        let eps = InteractionMatrix::from_bubbles(&cfg.params());
        self.gamma_with(cfg, i, &eps, self.mu(cfg, i))
    }

    fn gamma_with(&self, cfg: &Configuration, i: usize, eps: &InteractionMatrix, mu: f64) -> GammaQuantities {
        let m2 = self.params.m2;
        let n = cfg.dim() as f64;
        let b = &cfg.bubbles[i];
        let lam = b.lambda;
        let x = b.point.coords();
        let field = self.model.field();
        let row = eps.row_sum(i);
        let g_lambda = mu * row / m2;
        if cfg.is_boundary(i) {
            let beta = self.model.imbalance(cfg, i);
            let g1 = field.boundary_gradient_at(x).norm();
            GammaQuantities {
                alpha: Some(beta.abs() / (m2 * (row + 1.0 / mu))),
                a: (g1 / lam) / (m2 / (lam * lam) + row / (m2 * m2)),
                h: None,
                lambda: g_lambda,
            }
        } else {
            let g = field.tangent_gradient_at(x).norm();
            let ld = lam * b.point.boundary_distance();
            GammaQuantities {
                alpha: None,
                a: (g / lam) / (m2 * (row + ld.powf(2.0 - n) + 1.0 / (lam * lam))),
                h: Some(h_sphere_at(x, x) / (m2 * lam.powf(n - 4.0))),
                lambda: g_lambda,
            }
        }
    }

    fn local(&self, cfg: &Configuration) -> Local {
        let eps = InteractionMatrix::from_bubbles(&cfg.params());
        let field = self.model.field();
        let mu: Vec<f64> = (0..cfg.len()).map(|i| self.mu(cfg, i)).collect();
        let gamma = (0..cfg.len()).map(|i| self.gamma_with(cfg, i, &eps, mu[i])).collect();
        Local {
            beta: (0..cfg.len()).map(|i| self.model.imbalance(cfg, i)).collect(),
            grad_k: cfg.bubbles.iter().map(|b| field.tangent_gradient(&b.point)).collect(),
            grad_k1: cfg
                .bubbles
                .iter()
                .map(|b| field.boundary_gradient_at(b.point.coords()))
                .collect(),
            mu,
            gamma,
        }
    }

    fn interior_sum(g: &GammaQuantities) -> f64 {
        g.h.unwrap_or(0.0) + g.a + g.lambda
    }

    fn boundary_sum(g: &GammaQuantities) -> f64 {
        g.alpha.unwrap_or(0.0) + g.lambda
    }

    fn distance_to_boundary_critical(&self, p: &SpherePoint) -> f64 {
        self.landscape
            .records
            .iter()
            .filter(|r| r.kind == CriticalKind::BoundaryOfK1)
            .map(|r| geodesic_distance(&r.location, p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Weights `(w4, s1, s2)`: V4 share, V1 share of the rest, V2 share of the remainder.
    fn shares(&self, cfg: &Configuration, loc: &Local) -> (f64, f64, f64) {
        let mu_max = loc.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mu_min = loc.mu.iter().copied().fold(f64::INFINITY, f64::min);
        let m0 = self.params.m0;
        let w4 = ramp((mu_max / mu_min - m0) / m0);
        let s_in = (cfg.q..cfg.len())
            .map(|i| Self::interior_sum(&loc.gamma[i]))
            .fold(f64::NEG_INFINITY, f64::max);
        let s1 = if cfg.p > 0 { ramp((s_in - 6.0) / 2.0) } else { 0.0 };
        let g_b = (0..cfg.q)
            .map(|i| Self::boundary_sum(&loc.gamma[i]))
            .fold(f64::NEG_INFINITY, f64::max);
        let d_b = (0..cfg.q)
            .map(|i| self.distance_to_boundary_critical(&cfg.bubbles[i].point))
            .fold(f64::NEG_INFINITY, f64::max);
        let eta = self.params.eta;
        let s2 = if cfg.q > 0 {
            ramp((g_b - 4.0) / 2.0).max(ramp((d_b - eta) / eta))
        } else {
            0.0
        };
        (w4, s1, s2)
    }

    fn assign(&self, cfg: &Configuration) -> Result<Assignment> {
        let recs = &self.landscape.records;
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, b) in cfg.bubbles.iter().enumerate() {
            let kind = if cfg.is_boundary(i) {
                CriticalKind::BoundaryOfK1
            } else {
                CriticalKind::InteriorOfK
            };
            let nearest = recs
                .iter()
                .enumerate()
                .filter(|(_, r)| r.kind == kind)
                .map(|(k, r)| (geodesic_distance(&r.location, &b.point), k))
                .min_by(|x, y| x.0.total_cmp(&y.0))
                .ok_or_else(|| {
                    Error::UnclassifiableState(format!("no critical point of the right kind for bubble {i}"))
                })?;
            map.entry(nearest.1).or_default().push(i);
        }
        let clusters: Vec<(usize, Vec<usize>)> = map.into_iter().collect();
        let nu = |k: usize| recs[k].normal_derivative.unwrap_or(0.0);
        let zero = |k: usize| nu(k).abs() < ZERO_TOL;
        let is_b = |k: usize| recs[k].kind == CriticalKind::BoundaryOfK1;
        let tag = if clusters.iter().any(|(k, m)| is_b(*k) && zero(*k) && m.len() >= 2) {
            RegionTag::V31
        } else if clusters.iter().any(|(k, _)| {
            let r = &recs[*k];
            if is_b(*k) {
                nu(*k) < -ZERO_TOL || (zero(*k) && r.laplacian > 0.0)
            } else {
                r.laplacian > 0.0
            }
        }) {
            RegionTag::V32
        } else if clusters
            .iter()
            .any(|(k, m)| is_b(*k) && nu(*k) > ZERO_TOL && m.len() >= 2)
        {
            RegionTag::V33
        } else if clusters.iter().all(|(_, m)| m.len() == 1) {
            RegionTag::W
        } else {
            return Err(Error::UnclassifiableState(
                "two interior bubbles share a critical point".into(),
            ));
        };
        Ok(Assignment { clusters, tag })
    }

    fn unit_over_lambda(g: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let n = g.norm();
        if n > 0.0 {
            g / (n * lambda)
        } else {
            DVector::zeros(g.len())
        }
    }

    fn w_alpha(&self, cfg: &Configuration, loc: &Local, v: &mut Velocity) {
        for k in 0..cfg.q {
            let s = loc.beta[k].signum();
            v.alpha[k] -= psi1(loc.gamma[k].alpha.unwrap_or(0.0)) * s;
        }
    }

    fn w_a_in(&self, cfg: &Configuration, loc: &Local, v: &mut Velocity) {
        for i in cfg.q..cfg.len() {
            v.a[i] += Self::unit_over_lambda(&loc.grad_k[i], cfg.bubbles[i].lambda) * psi1(loc.gamma[i].a);
        }
    }

    fn field_v1(&self, cfg: &Configuration, loc: &Local) -> Velocity {
        let mut v = Velocity::zeros(cfg);
        for i in cfg.q..cfg.len() {
            let g = &loc.gamma[i];
            v.lambda[i] -= (psi1(g.lambda) + psi1(g.h.unwrap_or(0.0))) * cfg.bubbles[i].lambda;
        }
        self.w_a_in(cfg, loc, &mut v);
        self.w_alpha(cfg, loc, &mut v);
        for i in 0..cfg.q {
            v.lambda[i] -= psi1(loc.gamma[i].lambda) * cfg.bubbles[i].lambda / self.params.m2;
        }
        // A lone interior bubble also contracts its rate along the drift.
        if cfg.q == 0 && cfg.p == 1 {
            v.lambda[0] -= psi1(loc.gamma[0].a) * cfg.bubbles[0].lambda;
        }
        v
    }

    fn field_v2(&self, cfg: &Configuration, loc: &Local) -> Velocity {
        let mut v = Velocity::zeros(cfg);
        self.w_alpha(cfg, loc, &mut v);
        for i in 0..cfg.q {
            v.lambda[i] -= psi1(loc.gamma[i].lambda) * cfg.bubbles[i].lambda;
            if self.distance_to_boundary_critical(&cfg.bubbles[i].point) >= self.params.eta {
                v.a[i] += Self::unit_over_lambda(&loc.grad_k1[i], cfg.bubbles[i].lambda);
            }
        }
        v
    }

    /// Barycentric field of one boundary cluster.
    fn cluster_field(&self, cfg: &Configuration, members: &[usize], v: &mut Velocity) {
        let d = |i: usize, j: usize| geodesic_distance(&cfg.bubbles[i].point, &cfg.bubbles[j].point);
        let mut best = (f64::INFINITY, members[0], members[1]);
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                let dij = d(i, j);
                if dij < best.0 {
                    best = (dij, i, j);
                }
            }
        }
        let (d0, i, i1) = best;
        let m4 = self.params.m4;
        let mut set = vec![i, i1];
        let mut scale = d0;
        loop {
            let next: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&j| set.contains(&j) || set.iter().any(|&l| d(j, l) <= m4 * scale))
                .collect();
            if next.len() == set.len() {
                break;
            }
            set = next;
            scale = set
                .iter()
                .flat_map(|&r| set.iter().map(move |&t| (r, t)))
                .map(|(r, t)| d(r, t))
                .fold(0.0, f64::max);
        }
        let sum = set.iter().fold(DVector::zeros(cfg.dim() + 1), |acc, &j| {
            acc + cfg.bubbles[j].point.coords()
        });
        let bar = sum.normalize();
        let gamma = set.iter().map(|&j| d(i, j)).fold(0.0, f64::max);
        let lam = cfg.bubbles[i].lambda;
        for &j in &set {
            let a = cfg.bubbles[j].point.coords();
            let dir = &bar - a * a.dot(&bar);
            v.a[j] += dir / (lam * gamma);
        }
    }

    fn field_v3(&self, cfg: &Configuration, loc: &Local, asg: &Assignment) -> Velocity {
        let recs = &self.landscape.records;
        let mut v = Velocity::zeros(cfg);
        let m2 = self.params.m2;
        let nu = |k: usize| recs[k].normal_derivative.unwrap_or(0.0);
        match asg.tag {
            RegionTag::V31 => {
                let eps = InteractionMatrix::from_bubbles(&cfg.params());
                for (k, members) in &asg.clusters {
                    if recs[*k].kind != CriticalKind::BoundaryOfK1 || nu(*k).abs() >= ZERO_TOL || members.len() < 2 {
                        continue;
                    }
                    for &i in members {
                        let lam = cfg.bubbles[i].lambda;
                        let lhs = loc.grad_k1[i].norm() / lam;
                        if lhs >= m2 / (lam * lam) + eps.row_sum(i) / (m2 * m2) {
                            v.a[i] += Self::unit_over_lambda(&loc.grad_k1[i], lam);
                        }
                    }
                }
            }
            RegionTag::V32 => {
                let mut d12: Vec<usize> = Vec::new();
                let mut d3: Vec<usize> = Vec::new();
                for (k, members) in &asg.clusters {
                    let r = &recs[*k];
                    if r.kind == CriticalKind::InteriorOfK {
                        if r.laplacian > 0.0 {
                            d12.extend(members);
                        }
                    } else if nu(*k) < -ZERO_TOL {
                        d12.extend(members);
                    } else if nu(*k).abs() < ZERO_TOL && r.laplacian > 0.0 {
                        d3.extend(members);
                    }
                }
                if !d12.is_empty() {
                    for &i in &d12 {
                        v.lambda[i] -= cfg.bubbles[i].lambda;
                    }
                } else {
                    for &i in &d3 {
                        let lam = cfg.bubbles[i].lambda;
                        let gate = psi1(lam * loc.grad_k1[i].norm() / self.params.m_gate);
                        v.a[i] += Self::unit_over_lambda(&loc.grad_k1[i], lam) * gate;
                        v.lambda[i] -= lam;
                    }
                }
            }
            RegionTag::V33 => {
                for (k, members) in &asg.clusters {
                    if recs[*k].kind == CriticalKind::BoundaryOfK1 && nu(*k) > ZERO_TOL && members.len() >= 2 {
                        self.cluster_field(cfg, members, &mut v);
                    }
                }
            }
            _ => {
                self.w_alpha(cfg, loc, &mut v);
                self.w_a_in(cfg, loc, &mut v);
                for i in 0..cfg.q {
                    let lam = cfg.bubbles[i].lambda;
                    let gate = psi1(lam * loc.grad_k1[i].norm() / m2);
                    v.a[i] += Self::unit_over_lambda(&loc.grad_k1[i], lam) * gate;
                }
                for i in 0..cfg.len() {
                    v.lambda[i] += cfg.bubbles[i].lambda;
                }
            }
        }
        v
    }

    /// Field of the comparable-rate regions; `clip` removes rate increases.
    fn field_v123(&self, cfg: &Configuration, loc: &Local, clip: bool) -> Result<RegionField> {
        let (_, s1, s2) = self.shares(cfg, loc);
        let mut v = Velocity::zeros(cfg);
        let mut weights = BTreeMap::new();
        let mut clusters = Vec::new();
        if s1 > 0.0 {
            v.axpy(s1, &self.field_v1(cfg, loc));
            weights.insert(RegionTag::V1, s1);
        }
        let rest = 1.0 - s1;
        if rest > 0.0 && s2 > 0.0 {
            v.axpy(rest * s2, &self.field_v2(cfg, loc));
            weights.insert(RegionTag::V2, rest * s2);
        }
        let w3 = rest * (1.0 - s2);
        if w3 > 0.0 {
            let asg = self.assign(cfg)?;
            v.axpy(w3, &self.field_v3(cfg, loc, &asg));
            weights.insert(asg.tag, w3);
            clusters = asg.clusters.iter().map(|(_, m)| m.clone()).collect();
        }
        if clip {
            for l in v.lambda.iter_mut() {
                *l = l.min(0.0);
            }
        }
        Ok((v, weights, clusters))
    }

    fn field_v4(&self, cfg: &Configuration, loc: &Local) -> Result<(Velocity, Vec<usize>)> {
        let m = cfg.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| loc.mu[x].total_cmp(&loc.mu[y]).then(x.cmp(&y)));
        let thr = self.params.m0.powf(1.0 / (m as f64 - 1.0).max(1.0));
        let mut index_set = vec![order[0]];
        for k in 1..m {
            if loc.mu[order[k]] <= thr * loc.mu[order[k - 1]] {
                index_set.push(order[k]);
            } else {
                break;
            }
        }
        let pos: Vec<usize> = {
            let mut p = vec![0; m];
            for (k, &i) in order.iter().enumerate() {
                p[i] = k + 1;
            }
            p
        };
        let i0 = (cfg.q..m)
            .filter(|&i| Self::interior_sum(&loc.gamma[i]) >= 6.0)
            .map(|i| pos[i])
            .min();
        let j0 = (0..cfg.q)
            .filter(|&i| Self::boundary_sum(&loc.gamma[i]) >= 4.0)
            .map(|i| pos[i])
            .min();
        let mut v = Velocity::zeros(cfg);
        for (i, &rank) in pos.iter().enumerate() {
            let weight = 2f64.powi(rank as i32) * cfg.bubbles[i].lambda;
            if cfg.is_boundary(i) {
                if j0.is_some_and(|j| rank >= j) {
                    v.lambda[i] -= weight / self.params.m2;
                }
            } else if i0.is_some_and(|j| rank >= j) {
                v.lambda[i] -= weight;
            }
        }
        self.w_alpha(cfg, loc, &mut v);
        self.w_a_in(cfg, loc, &mut v);

        // Field of the comparable sub-configuration, without rate increases.
        let mut idx: Vec<usize> = index_set.clone();
        idx.sort_by_key(|&i| (!cfg.is_boundary(i), i));
        let q1 = idx.iter().filter(|&&i| cfg.is_boundary(i)).count();
        let sub = Configuration {
            q: q1,
            p: idx.len() - q1,
            bubbles: idx.iter().map(|&i| cfg.bubbles[i].clone()).collect(),
            eps: cfg.eps,
        };
        let sub_loc = self.local(&sub);
        let (sv, _, _) = self.field_v123(&sub, &sub_loc, true)?;
        let w = 1.0 / (self.params.m2 * self.params.m2);
        for (k, &i) in idx.iter().enumerate() {
            v.alpha[i] += w * sv.alpha[k];
            v.a[i] += &sv.a[k] * w;
            v.lambda[i] += w * sv.lambda[k];
        }
        Ok((v, index_set))
    }

    fn check_membership(&self, cfg: &Configuration) -> Result<()> {
        cfg.check_neighborhood()
            .map_err(|e| Error::OutsideNeighborhood(e.to_string()))?;
        if cfg.len() > self.params.max_bubbles {
            return Err(Error::OutsideNeighborhood(format!(
                "{} bubbles exceed the configured maximum {}",
                cfg.len(),
                self.params.max_bubbles
            )));
        }
        Ok(())
    }

    /// Region label and assembled field.
    pub fn pseudogradient(&self, cfg: &Configuration) -> Result<(Velocity, RegionLabel)> {
        self.check_membership(cfg)?;
        let loc = self.local(cfg);
        let (w4, _, _) = self.shares(cfg, &loc);
        let mut v = Velocity::zeros(cfg);
        let mut weights = BTreeMap::new();
        let mut clusters = Vec::new();
        let mut index_set = Vec::new();
        if w4 > 0.0 {
            let (f4, set) = self.field_v4(cfg, &loc)?;
            v.axpy(w4, &f4);
            weights.insert(RegionTag::V4, w4);
            index_set = set;
        }
        if w4 < 1.0 {
            let (f, ws, cl) = self.field_v123(cfg, &loc, false)?;
            v.axpy(1.0 - w4, &f);
            for (t, w) in ws {
                weights.insert(t, w * (1.0 - w4));
            }
            clusters = cl;
        }
        weights.retain(|_, w| *w > 0.0);
        let tag = match weights.iter().find(|(_, w)| **w >= 1.0) {
            Some((t, _)) => *t,
            None => RegionTag::Mixed,
        };
        Ok((
            v,
            RegionLabel {
                tag,
                weights,
                mu: loc.mu,
                gamma: loc.gamma,
                clusters,
                index_set,
            },
        ))
    }

    pub fn classify_region(&self, cfg: &Configuration) -> Result<RegionLabel> {
        Ok(self.pseudogradient(cfg)?.1)
    }

    /// `dJ/dt` along a parameter velocity.
    pub fn energy_rate(&self, cfg: &Configuration, v: &Velocity) -> f64 {
        let mut rate = 0.0;
        for i in 0..cfg.len() {
            rate += self.model.dj_dalpha(cfg, i) * v.alpha[i];
            rate += self.model.dj_dloglambda(cfg, i) * v.lambda[i] / cfg.bubbles[i].lambda;
            rate += self.model.dj_dpoint(cfg, i).dot(&v.a[i]);
        }
        rate
    }

    /// Lower-bound aggregate of the decrease estimate.
    pub fn aggregate(&self, cfg: &Configuration) -> f64 {
        let n = cfg.dim() as f64;
        let e = 2.0 - 1.0 / (n - 2.0);
        let loc = self.local(cfg);
        let eps = InteractionMatrix::from_bubbles(&cfg.params());
        let mut total = 0.0;
        for i in 0..cfg.len() {
            total += loc.mu[i].powf(-e);
            if cfg.is_boundary(i) {
                total += loc.beta[i].abs().powf(e);
            } else {
                let b = &cfg.bubbles[i];
                total += (b.lambda * b.point.boundary_distance()).powf(1.0 - n);
                total += (loc.grad_k[i].norm() / b.lambda).powf(e);
            }
            for j in 0..cfg.len() {
                if j != i {
                    total += eps.eps[i][j].powf((n - 1.0) / (n - 2.0));
                }
            }
        }
        total
    }

    /// Certificate for an arbitrary velocity.
    pub fn certificate_for(&self, cfg: &Configuration, v: &Velocity) -> Result<DecreaseCertificate> {
        let comps = self.model.gradient_components(cfg)?;
        let mut half = 0.0;
        for (i, b) in cfg.bubbles.iter().enumerate() {
            half += v.alpha[i].abs() * comps.alpha[i].halfwidth;
            half += (v.lambda[i] / b.lambda).abs() * b.alpha * comps.lambda[i].halfwidth;
            half += v.a[i].norm() * b.lambda * b.alpha * comps.a[i].halfwidth;
        }
        let lhs = Interval::new(-self.energy_rate(cfg, v), half);
        let aggregate = self.aggregate(cfg);
        let c = self.params.certificate_c;
        let rhs = c * aggregate;
        Ok(DecreaseCertificate {
            satisfied: lhs.lower() >= rhs,
            lhs,
            aggregate,
            c,
            rhs_lower_bound: rhs,
        })
    }

    pub fn decrease_certificate(&self, cfg: &Configuration) -> Result<DecreaseCertificate> {
        let (v, _) = self.pseudogradient(cfg)?;
        self.certificate_for(cfg, &v)
    }

    fn advance(cfg: &Configuration, v: &Velocity, dt: f64) -> Option<Configuration> {
        let mut out = cfg.clone();
        let n = cfg.dim();
        for (i, b) in out.bubbles.iter_mut().enumerate() {
            b.alpha += dt * v.alpha[i];
            if b.alpha <= 0.0 {
                return None;
            }
            b.lambda *= (dt * v.lambda[i] / b.lambda).exp();
            if b.lambda.is_nan() || b.lambda < 1.0 {
                return None;
            }
            let mut a = b.point.coords() + &v.a[i] * dt;
            if i < cfg.q {
                a[n] = 0.0;
            }
            b.point = SpherePoint::normalized(a).ok()?;
        }
        Some(out)
    }

    fn state(&self, time: f64, cfg: Configuration, v: Velocity, label: RegionLabel) -> TrajectoryState {
        TrajectoryState {
            time,
            j: self.model.reduced_j_unchecked(&cfg),
            lambda_sign: v
                .lambda
                .iter()
                .map(|l| {
                    if *l > 0.0 {
                        1
                    } else if *l < 0.0 {
                        -1
                    } else {
                        0
                    }
                })
                .collect(),
            mu: label.mu.clone(),
            label,
            config: cfg,
            velocity: v,
        }
    }

    fn exited(&self, cfg: &Configuration) -> bool {
        self.check_membership(cfg).is_err()
            || (0..cfg.q).any(|i| self.model.imbalance(cfg, i).abs() > self.params.alpha_exit)
    }

    /// Heun integration with an embedded Euler error estimate; steps raising
    /// the energy by more than `j_tol` per unit time are rejected.
    pub fn integrate(&self, cfg0: &Configuration, t_max: f64) -> Result<Trajectory> {
        let (v0, l0) = self.pseudogradient(cfg0)?;
        let mut states = vec![self.state(0.0, cfg0.clone(), v0, l0)];
        let mut dt = self.params.dt_initial;
        let mut rejections = 0;
        loop {
            let cur = states.last().expect("nonempty");
            let t = cur.time;
            if t >= t_max - 1e-15 {
                return Ok(Trajectory {
                    states,
                    termination: Termination::TimeLimit,
                });
            }
            if cur.velocity.norm(&cur.config) < self.params.stagnation {
                return Ok(Trajectory {
                    states,
                    termination: Termination::Stagnation,
                });
            }
            let h = dt.min(t_max - t);
            let attempt = (|| -> Result<Option<(Configuration, f64)>> {
                let Some(pred) = Self::advance(&cur.config, &cur.velocity, h) else {
                    return Ok(None);
                };
                if self.exited(&pred) {
                    return Ok(Some((pred, 0.0)));
                }
                let (k2, _) = self.pseudogradient(&pred)?;
                let mut avg = cur.velocity.clone();
                avg.axpy(1.0, &k2);
                let avg = avg.scaled(0.5);
                let Some(next) = Self::advance(&cur.config, &avg, h) else {
                    return Ok(None);
                };
                let mut diff = k2.clone();
                diff.axpy(-1.0, &cur.velocity);
                Ok(Some((next, 0.5 * h * diff.norm(&cur.config))))
            })()?;
            let accepted = match attempt {
                Some((next, err)) => {
                    let j_next = self.model.value(&next);
                    if err <= self.params.step_tol && j_next <= cur.j.center + self.params.j_tol * h {
                        Some((next, err))
                    } else {
                        None
                    }
                }
                None => None,
            };
            match accepted {
                Some((next, err)) => {
                    rejections = 0;
                    let grow = if err > 0.0 {
                        (0.9 * (self.params.step_tol / err).sqrt()).min(2.0)
                    } else {
                        2.0
                    };
                    dt = (h * grow).min(self.params.dt_max);
                    if self.exited(&next) {
                        return Ok(Trajectory {
                            states,
                            termination: Termination::NeighborhoodExit,
                        });
                    }
                    let (v, l) = self.pseudogradient(&next)?;
                    states.push(self.state(t + h, next, v, l));
                }
                None => {
                    rejections += 1;
                    if rejections >= self.params.max_rejections {
                        return Err(Error::StepFailure {
                            t,
                            reason: format!("{rejections} consecutive rejections at dt = {h:.3e}"),
                        });
                    }
                    dt = h * 0.5;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FieldSpec, ScalarField};
    use crate::quadrature::ConstantsTable;
    use crate::reduced::{BubbleState, ModelParams};

    fn setup(spec: FieldSpec) -> (ReducedModel, Landscape) {
        let field = ScalarField::from_spec(spec).unwrap();
        let l = Landscape::analyze(&field, 8).unwrap();
        (
            ReducedModel::new(field, ConstantsTable::closed_form(5), ModelParams::default()).unwrap(),
            l,
        )
    }

    fn bubble(coords: Vec<f64>, lambda: f64) -> BubbleState {
        BubbleState {
            alpha: 1.0,
            point: SpherePoint::normalized(DVector::from_vec(coords)).unwrap(),
            lambda,
        }
    }

    #[test]
    fn smoothstep_gates() {
        assert_eq!(psi1(0.5), 0.0);
        assert_eq!(psi1(1.0), 0.0);
        assert_eq!(psi1(2.0), 1.0);
        assert_eq!(psi1(7.0), 1.0);
        assert!((psi1(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn default_constants_valid() {
        FlowParams::default().validate(5).unwrap();
        let p = FlowParams {
            max_bubbles: 3,
            ..FlowParams::default()
        };
        assert!(p.validate(5).is_err());
    }

    #[test]
    fn mu_examples() {
        let (m, l) = setup(FieldSpec::constant(5, 1.0).with("x1", 0.05));
        let flow = Flow::new(&m, &l, FlowParams::default()).unwrap();
        let cfg = Configuration::new(0, 1, vec![bubble(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0], 10.0)], 0.1).unwrap();
        assert_eq!(flow.mu(&cfg, 0), 100.0);
        let cfg = Configuration::new(1, 0, vec![bubble(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 100.0)], 0.1).unwrap();
        assert!((flow.mu(&cfg, 0) - 1e4).abs() < 1e-6);
        // |grad K| = 0.05 at e_2: mu^{-1} = 0.05/100 + 1e-4.
        let cfg = Configuration::new(1, 0, vec![bubble(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 100.0)], 0.1).unwrap();
        assert!((1.0 / flow.mu(&cfg, 0) - 6e-4).abs() < 1e-15);
        let g = flow.gamma_quantities(&cfg, 0);
        assert_eq!(g.lambda, 0.0);
    }

    #[test]
    fn single_boundary_bubble_in_w_grows() {
        let (m, l) = setup(FieldSpec::constant(5, 1.0).with("x1", 0.05));
        let flow = Flow::new(&m, &l, FlowParams::default()).unwrap();
        let cfg = Configuration::new(1, 0, vec![bubble(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e4)], 0.1).unwrap();
        let cfg = m.normalize_alphas(&cfg);
        let (v, label) = flow.pseudogradient(&cfg).unwrap();
        assert_eq!(label.tag, RegionTag::W);
        assert_eq!(v.lambda[0], 1e4);
        let cert = flow.decrease_certificate(&cfg).unwrap();
        assert!(cert.lhs.center > 0.0);
    }

    #[test]
    fn rate_tower_is_v4() {
        let (m, l) = setup(FieldSpec::constant(5, 1.0).with("x1", 0.05));
        // Predicate check only: M0 = 100 is below the smallness requirement.
        let params = FlowParams {
            m0: 100.0,
            m4: 100.0,
            ..FlowParams::default()
        };
        let flow = Flow {
            model: &m,
            landscape: &l,
            params,
        };
        let cfg = Configuration::new(
            2,
            0,
            vec![
                bubble(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e3),
                bubble(vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e6),
            ],
            0.1,
        )
        .unwrap();
        let label = flow.classify_region(&cfg).unwrap();
        assert_eq!(label.tag, RegionTag::V4);
        assert_eq!(label.index_set, vec![0]);
    }

    #[test]
    fn gamma_scaling_and_critical_points() {
        let (m, l) = setup(FieldSpec::constant(5, 1.0).with("x1", 0.05).with("x6", 0.05));
        let y = l.records.iter().find(|r| r.kind == CriticalKind::InteriorOfK).unwrap();
        let cfg = Configuration::new(
            0,
            1,
            vec![BubbleState {
                alpha: 1.0,
                point: y.location.clone(),
                lambda: 100.0,
            }],
            0.1,
        )
        .unwrap();
        let flow = Flow::new(&m, &l, FlowParams::default()).unwrap();
        let g = flow.gamma_quantities(&cfg, 0);
        assert!(g.a < 1e-9);
        let p10 = FlowParams {
            m2: 100.0,
            m0: 1e8,
            ..FlowParams::default()
        };
        let g10 = Flow {
            model: &m,
            landscape: &l,
            params: p10,
        }
        .gamma_quantities(&cfg, 0);
        assert!((g10.h.unwrap() * 10.0 - g.h.unwrap()).abs() < 1e-12 * g.h.unwrap());
    }

    #[test]
    fn lone_interior_bubble_drifts_and_contracts() {
        let (m, l) = setup(FieldSpec::constant(5, 1.0).with("x1", 0.05));
        let flow = Flow::new(&m, &l, FlowParams::default()).unwrap();
        let cfg = m.normalize_alphas(
            &Configuration::new(0, 1, vec![bubble(vec![0.0, 0.6, 0.0, 0.0, 0.0, 0.8], 2e4)], 0.1).unwrap(),
        );
        let (v, label) = flow.pseudogradient(&cfg).unwrap();
        assert_eq!(label.tag, RegionTag::V1);
        let g = m.field().tangent_gradient(&cfg.bubbles[0].point);
        let want = &g / (g.norm() * 2e4);
        assert!((&v.a[0] - want).norm() < 1e-15);
        assert_eq!(v.lambda[0], -2e4);
        let traj = flow.integrate(&cfg, 1.0).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1].config.bubbles[0].lambda <= w[0].config.bubbles[0].lambda);
        }
    }

    #[test]
    fn constant_field_certificate() {
        let field = ScalarField::constant(5, 1.0).unwrap();
        let l = Landscape::from_records(&field, vec![]).unwrap();
        let m = ReducedModel::new(field, ConstantsTable::closed_form(5), ModelParams::default()).unwrap();
        let flow = Flow::new(&m, &l, FlowParams::default()).unwrap();
        let h: f64 = 0.015;
        let cfg = m.normalize_alphas(
            &Configuration::new(
                0,
                1,
                vec![bubble(vec![(1.0 - h * h).sqrt(), 0.0, 0.0, 0.0, 0.0, h], 1e3)],
                0.1,
            )
            .unwrap(),
        );
        let label = flow.classify_region(&cfg).unwrap();
        assert_eq!(label.tag, RegionTag::V1);
        let cert = flow.decrease_certificate(&cfg).unwrap();
        assert!(cert.satisfied, "{cert:?}");
    }

    #[test]
    fn boundary_cluster_contracts() {
        let (m, l) = setup(FieldSpec::constant(5, 1.0).with("x1", 0.05).with("x6", -0.05));
        let flow = Flow::new(&m, &l, FlowParams::default()).unwrap();
        let (c, s) = (0.05f64.cos(), 0.05f64.sin());
        let cfg = m.normalize_alphas(
            &Configuration::new(
                2,
                0,
                vec![
                    bubble(vec![c, s, 0.0, 0.0, 0.0, 0.0], 100.0),
                    bubble(vec![c, -s, 0.0, 0.0, 0.0, 0.0], 100.0),
                ],
                0.1,
            )
            .unwrap(),
        );
        let (v, label) = flow.pseudogradient(&cfg).unwrap();
        assert_eq!(label.tag, RegionTag::V33);
        assert_eq!(label.clusters, vec![vec![0, 1]]);
        assert_eq!(v.lambda, vec![0.0, 0.0]);
        // Both points move toward e1 along the equator, at speed |bar - <a,bar>a| / (lambda gamma).
        let speed = (s * c) / (100.0 * 0.1);
        assert!((v.a[0][1] + speed).abs() < 1e-12 && (v.a[1][1] - speed).abs() < 1e-12);
        assert!((v.a[0][0] - s * s / 10.0).abs() < 1e-12);
    }

    #[test]
    fn w_trajectory_descends_toward_level() {
        let (m, l) = setup(FieldSpec::constant(5, 1.0).with("x1", 0.05).with("x6", -0.05));
        let flow = Flow::new(&m, &l, FlowParams::default()).unwrap();
        let cfg = m.normalize_alphas(
            &Configuration::new(1, 0, vec![bubble(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e4)], 0.1).unwrap(),
        );
        let level = m.balanced_level(&cfg);
        let traj = flow.integrate(&cfg, 2.0).unwrap();
        assert_eq!(traj.termination, Termination::TimeLimit);
        for w in traj.states.windows(2) {
            assert!(w[1].config.bubbles[0].lambda > w[0].config.bubbles[0].lambda);
            assert!(w[1].j.center < w[0].j.center);
            assert!((w[1].j.center - level).abs() < (w[0].j.center - level).abs());
        }
    }

    #[test]
    fn tower_mu_max_never_grows() {
        let (m, l) = setup(
            FieldSpec::constant(5, 1.0)
                .with("x1^2", 0.05)
                .with("x2^2", 0.01)
                .with("x3^2", 0.008)
                .with("x4^2", 0.006)
                .with("x5^2", 0.004)
                .with("x6^2", 0.06),
        );
        let flow = Flow::new(&m, &l, FlowParams::default()).unwrap();
        let (c, s) = (0.07f64.cos(), 0.07f64.sin());
        let cfg = m.normalize_alphas(
            &Configuration::new(
                2,
                0,
                vec![
                    bubble(vec![c, s, 0.0, 0.0, 0.0, 0.0], 100.0),
                    bubble(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e5),
                ],
                0.1,
            )
            .unwrap(),
        );
        let traj = flow.integrate(&cfg, 1.0).unwrap();
        assert_eq!(traj.states[0].label.tag, RegionTag::V4);
        let mu_max = |st: &TrajectoryState| st.mu.iter().copied().fold(0.0, f64::max);
        for w in traj.states.windows(2) {
            assert!(mu_max(&w[1]) <= mu_max(&w[0]));
        }
        assert!(mu_max(traj.states.last().unwrap()) < mu_max(&traj.states[0]));
    }

    #[test]
    fn misassembled_field_is_flagged() {
        let (m, l) = setup(FieldSpec::constant(5, 1.0).with("x1", 0.05));
        let flow = Flow::new(&m, &l, FlowParams::default()).unwrap();
        let cfg = m.normalize_alphas(
            &Configuration::new(1, 0, vec![bubble(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e4)], 0.1).unwrap(),
        );
        let (v, _) = flow.pseudogradient(&cfg).unwrap();
        let cert = flow.certificate_for(&cfg, &v.scaled(-1.0)).unwrap();
        assert!(!cert.satisfied);
        assert!(cert.lhs.center < 0.0);
    }
}
