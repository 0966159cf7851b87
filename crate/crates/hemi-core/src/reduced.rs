//! Reduced energy on the finite-dimensional configuration space of `q`
//! boundary and `p` interior bubbles, with its gradient components and
//! remainder budgets.
//!
//! The model is homogeneous of degree zero in the weights `alpha`:
//!
//! ```text
//! J = N' / D'^{(n-2)/n} * F
//! N' = S_n sum w a^2 + 2 c2 sum_{i<j} w_ij a_i a_j eps_ij
//! D' = S_n sum w a^p K + p c2 sum_{i<j} w_ij eps_ij (a_i^{p-1} a_j K_i + a_i a_j^{p-1} K_j)
//! F  = 1 + sum X_i g_i - c2 sum_{i,j>q} ah_i ah_j H(a_i, a_j) / (l_i l_j)^{(n-2)/2}
//! ```
//!
//! with `w = 1` (boundary) or `2` (interior), `w_ij = 1/2` for two boundary
//! bubbles and `1` otherwise, `X_i = a_i^p / (S_n sum w a^p K)`,
//! `ah = a / sqrt(S_n sum w a^2)`, and `g_i = c7 dK/dnu / l - 2 c6 Lap K / l^2`
//! on the boundary, `-4 c6 Lap K / l^2` in the interior.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bubbles::{epsilon, epsilon_da, epsilon_dlambda, h_sphere_at, BubbleParam};
use crate::error::{Error, Result};
use crate::geometry::{geodesic_distance, ScalarField, SpherePoint};
use crate::landscape::{CriticalKind, CriticalPointRecord, Landscape};
use crate::quadrature::ConstantsTable;

/// Weight, point and rate of one bubble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleState {
    pub alpha: f64,
    pub point: SpherePoint,
    pub lambda: f64,
}

/// `q` boundary bubbles followed by `p` interior bubbles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub q: usize,
    pub p: usize,
    pub bubbles: Vec<BubbleState>,
    pub eps: f64,
}

impl Configuration {
    /// Checks structural consistency (counts, dimensions, positivity).
    pub fn new(q: usize, p: usize, bubbles: Vec<BubbleState>, eps: f64) -> Result<Self> {
        let cfg = Self { q, p, bubbles, eps };
        cfg.check_structure()?;
        Ok(cfg)
    }

    pub fn check_structure(&self) -> Result<()> {
        if self.q + self.p == 0 {
            return Err(Error::InvalidConfiguration("no bubbles".into()));
        }
        if self.bubbles.len() != self.q + self.p {
            return Err(Error::InvalidConfiguration(format!(
                "{} bubbles listed, q + p = {}",
                self.bubbles.len(),
                self.q + self.p
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfiguration("eps must be positive".into()));
        }
        let n = self.bubbles[0].point.dim();
        for (i, b) in self.bubbles.iter().enumerate() {
            if b.point.dim() != n {
                return Err(Error::InvalidConfiguration(format!(
                    "bubble {i} has mismatched dimension"
                )));
            }
            if !(b.alpha > 0.0 && b.alpha.is_finite()) {
                return Err(Error::InvalidConfiguration(format!("alpha_{i} must be positive")));
            }
            if !(b.lambda >= 1.0 && b.lambda.is_finite()) {
                return Err(Error::InvalidConfiguration(format!("lambda_{i} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Membership in the neighbourhood at infinity (rates, heights, interactions).
    pub fn check_neighborhood(&self) -> Result<()> {
        self.check_structure()?;
        let e = self.eps;
        for (i, b) in self.bubbles.iter().enumerate() {
            if b.lambda <= 1.0 / e {
                return Err(Error::InvalidConfiguration(format!(
                    "lambda_{i} = {} not above 1/eps = {}",
                    b.lambda,
                    1.0 / e
                )));
            }
            let ld = b.lambda * b.point.boundary_distance();
            if i < self.q && ld >= e {
                return Err(Error::InvalidConfiguration(format!(
                    "boundary bubble {i}: lambda d = {ld} not below eps"
                )));
            }
            if i >= self.q && ld <= 1.0 / e {
                return Err(Error::InvalidConfiguration(format!(
                    "interior bubble {i}: lambda d = {ld} not above 1/eps"
                )));
            }
        }
        let params = self.params();
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let eij = epsilon(&params[i], &params[j]);
                if eij >= e {
                    return Err(Error::InvalidConfiguration(format!("eps_{i}{j} = {eij} not below eps")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bubbles[0].point.dim()
    }

    pub fn len(&self) -> usize {
        self.bubbles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bubbles.is_empty()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        i < self.q
    }

    /// Total mass `q + 2p`.
    pub fn mass(&self) -> usize {
        self.q + 2 * self.p
    }

    pub fn param(&self, i: usize) -> BubbleParam {
        BubbleParam {
            a: self.bubbles[i].point.clone(),
            lambda: self.bubbles[i].lambda,
        }
    }

    pub fn params(&self) -> Vec<BubbleParam> {
        (0..self.len()).map(|i| self.param(i)).collect()
    }

    /// Projection onto the tangent space at `a_i`; boundary bubbles are
    /// confined to the equator.
    pub fn project_tangent(&self, i: usize, v: &DVector<f64>) -> DVector<f64> {
        let a = self.bubbles[i].point.coords();
        let mut v = v.clone();
        if self.is_boundary(i) {
            let n = self.dim();
            v[n] = 0.0;
        }
        let d = v.dot(a);
        v - a * d
    }
}

/// Centre and half-width of an expansion value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub center: f64,
    pub halfwidth: f64,
}

impl Interval {
    pub fn new(center: f64, halfwidth: f64) -> Self {
        Self { center, halfwidth }
    }

    pub fn lower(&self) -> f64 {
        self.center - self.halfwidth
    }

    pub fn upper(&self) -> f64 {
        self.center + self.halfwidth
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.center).abs() <= self.halfwidth
    }
}

/// Tunable constants of the model's error budgets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Minimal pairwise separation below which pair budgets widen.
    pub separation: f64,
    /// Constant multiplying every O(.) remainder.
    pub remainder_c: f64,
    /// Constant of the v-bar budget.
    pub vbar_c: f64,
    /// Admissible post-normalization imbalance.
    pub alpha_slack: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            separation: 0.1,
            remainder_c: 1.0,
            vbar_c: 1.0,
            alpha_slack: 0.05,
        }
    }
}

/// Tangent-vector pairing with an error bar.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentPairing {
    pub vector: DVector<f64>,
    pub halfwidth: f64,
    /// Pairing with the inward normal direction at a boundary point.
    pub normal: Option<f64>,
}

/// Per-pair interaction data.
#[derive(Clone, Debug, PartialEq)]
pub struct PairData {
    pub i: usize,
    pub j: usize,
    pub eps: f64,
    pub lambda_deps: (f64, f64),
    pub deps_da_i: DVector<f64>,
}

/// All gradient pairings of a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientComponents {
    pub lambda: Vec<Interval>,
    pub a: Vec<TangentPairing>,
    pub alpha: Vec<Interval>,
    pub pairs: Vec<PairData>,
    pub r1: f64,
    pub r1_boundary: f64,
}

#[derive(Clone, Debug)]
struct Site {
    w: f64,
    alpha: f64,
    lambda: f64,
    k: f64,
    grad_k: DVector<f64>,
    grad_norm: f64,
    g: f64,
    g_log: f64,
    grad_g: DVector<f64>,
}

#[derive(Clone, Debug)]
struct Pair {
    i: usize,
    j: usize,
    omega: f64,
    eps: f64,
    e_i: f64,
    e_j: f64,
    da_i: DVector<f64>,
    da_j: DVector<f64>,
}

#[derive(Clone, Debug)]
struct Eval {
    sites: Vec<Site>,
    pairs: Vec<Pair>,
    n_sum: f64,
    d_sum: f64,
    np: f64,
    dp: f64,
    y: f64,
    qh: f64,
    /// `G_ij = H(a_i, a_j) / (l_i l_j)^{(n-2)/2}` over all indices (zero unless both interior).
    gmat: Vec<Vec<f64>>,
    j0: f64,
    j: f64,
}

/// Reduced functional for a fixed curvature candidate.
#[derive(Clone, Debug)]
pub struct ReducedModel {
    field: ScalarField,
    consts: ConstantsTable,
    params: ModelParams,
}

impl ReducedModel {
    pub fn new(field: ScalarField, consts: ConstantsTable, params: ModelParams) -> Result<Self> {
        if consts.n != field.dim() {
            return Err(Error::InvalidConfiguration(format!(
                "constants for n = {} used with a field in n = {}",
                consts.n,
                field.dim()
            )));
        }
        Ok(Self { field, consts, params })
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn constants(&self) -> &ConstantsTable {
        &self.consts
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn nf(&self) -> f64 {
        self.consts.n as f64
    }

    fn pexp(&self) -> f64 {
        self.consts.critical_exponent()
    }

    fn check_dim(&self, cfg: &Configuration) -> Result<()> {
        cfg.check_structure()?;
        if cfg.dim() != self.field.dim() {
            return Err(Error::InvalidConfiguration("configuration dimension mismatch".into()));
        }
        Ok(())
    }

    fn evaluate(&self, cfg: &Configuration) -> Eval {
        let n = self.nf();
        let pe = self.pexp();
        let c = &self.consts;
        let m = cfg.len();
        let mut sites = Vec::with_capacity(m);
        for i in 0..m {
            let b = &cfg.bubbles[i];
            let x = b.point.coords();
            let lam = b.lambda;
            let k = self.field.value_at(x);
            let full_grad = self.field.tangent_gradient_at(x);
            let grad_k = cfg.project_tangent(i, &full_grad);
            let lap = self.field.laplace_beltrami_at(x);
            let grad_lap = self.field.laplacian_gradient_at(x);
            let (w, g, g_log, grad_g) = if cfg.is_boundary(i) {
                let nu = self.field.normal_derivative_at(x);
                let grad_nu = self.field.normal_derivative_gradient_at(x);
                let g = c.c7 * nu / lam - 2.0 * c.c6 * lap / (lam * lam);
                let g_log = -c.c7 * nu / lam + 4.0 * c.c6 * lap / (lam * lam);
                let grad_g = &grad_nu * (c.c7 / lam) - &grad_lap * (2.0 * c.c6 / (lam * lam));
                (1.0, g, g_log, cfg.project_tangent(i, &grad_g))
            } else {
                let g = -4.0 * c.c6 * lap / (lam * lam);
                let g_log = 8.0 * c.c6 * lap / (lam * lam);
                let grad_g = &grad_lap * (-4.0 * c.c6 / (lam * lam));
                (2.0, g, g_log, cfg.project_tangent(i, &grad_g))
            };
            sites.push(Site {
                w,
                alpha: b.alpha,
                lambda: lam,
                k,
                grad_norm: full_grad.norm(),
                grad_k,
                g,
                g_log,
                grad_g,
            });
        }
        let params = cfg.params();
        let mut pairs = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                let omega = if cfg.is_boundary(i) && cfg.is_boundary(j) {
                    0.5
                } else {
                    1.0
                };
                let (e_i, e_j) = epsilon_dlambda(&params[i], &params[j]);
                pairs.push(Pair {
                    i,
                    j,
                    omega,
                    eps: epsilon(&params[i], &params[j]),
                    e_i,
                    e_j,
                    da_i: cfg.project_tangent(i, &epsilon_da(&params[i], &params[j])),
                    da_j: cfg.project_tangent(j, &epsilon_da(&params[j], &params[i])),
                });
            }
        }
        let n_sum: f64 = sites.iter().map(|s| s.w * s.alpha * s.alpha).sum();
        let d_sum: f64 = sites.iter().map(|s| s.w * s.alpha.powf(pe) * s.k).sum();
        let mut np = c.s_n * n_sum;
        let mut dp = c.s_n * d_sum;
        for pr in &pairs {
            let (si, sj) = (&sites[pr.i], &sites[pr.j]);
            np += 2.0 * c.c2 * pr.omega * si.alpha * sj.alpha * pr.eps;
            dp += pe
                * c.c2
                * pr.omega
                * pr.eps
                * (si.alpha.powf(pe - 1.0) * sj.alpha * si.k + si.alpha * sj.alpha.powf(pe - 1.0) * sj.k);
        }
        let y: f64 = sites.iter().map(|s| s.alpha.powf(pe) * s.g).sum();
        let mut gmat = vec![vec![0.0; m]; m];
        let mut qh = 0.0;
        for i in cfg.q..m {
            for j in cfg.q..m {
                let h = h_sphere_at(cfg.bubbles[i].point.coords(), cfg.bubbles[j].point.coords());
                let g = h / (sites[i].lambda * sites[j].lambda).powf((n - 2.0) / 2.0);
                gmat[i][j] = g;
                qh += sites[i].alpha * sites[j].alpha * g;
            }
        }
        let j0 = np / dp.powf((n - 2.0) / n);
        let f = 1.0 + y / (c.s_n * d_sum) - c.c2 * qh / (n_sum * c.s_n);
        Eval {
            sites,
            pairs,
            n_sum,
            d_sum,
            np,
            dp,
            y,
            qh,
            gmat,
            j0,
            j: j0 * f,
        }
    }

    /// Combines partial derivatives of the building blocks into `dJ`.
    #[allow(clippy::too_many_arguments)]
    fn combine(&self, ev: &Eval, dn: f64, dd: f64, dnp: f64, ddp: f64, dy: f64, dq: f64) -> f64 {
        let n = self.nf();
        let s = self.consts.s_n;
        let c2 = self.consts.c2;
        let df = dy / (s * ev.d_sum)
            - ev.y * dd / (s * ev.d_sum * ev.d_sum)
            - c2 / s * (dq / ev.n_sum - ev.qh * dn / (ev.n_sum * ev.n_sum));
        ev.j * (dnp / ev.np - (n - 2.0) / n * ddp / ev.dp) + ev.j0 * df
    }

    #[allow(clippy::too_many_arguments)]
    fn combine_vec(
        &self,
        ev: &Eval,
        dd: &DVector<f64>,
        dnp: &DVector<f64>,
        ddp: &DVector<f64>,
        dy: &DVector<f64>,
        dq: &DVector<f64>,
    ) -> DVector<f64> {
        let n = self.nf();
        let s = self.consts.s_n;
        let c2 = self.consts.c2;
        let df = dy / (s * ev.d_sum) - dd * (ev.y / (s * ev.d_sum * ev.d_sum)) - dq * (c2 / (s * ev.n_sum));
        (dnp / ev.np - ddp * ((n - 2.0) / n / ev.dp)) * ev.j + df * ev.j0
    }

    fn d_alpha(&self, ev: &Eval, k: usize) -> f64 {
        let pe = self.pexp();
        let c2 = self.consts.c2;
        let s = &ev.sites[k];
        let dn = 2.0 * s.w * s.alpha;
        let dd = pe * s.w * s.alpha.powf(pe - 1.0) * s.k;
        let mut dnp = self.consts.s_n * dn;
        let mut ddp = self.consts.s_n * dd;
        for pr in ev.pairs.iter().filter(|pr| pr.i == k || pr.j == k) {
            let j = if pr.i == k { pr.j } else { pr.i };
            let o = &ev.sites[j];
            dnp += 2.0 * c2 * pr.omega * o.alpha * pr.eps;
            ddp += pe
                * c2
                * pr.omega
                * pr.eps
                * ((pe - 1.0) * s.alpha.powf(pe - 2.0) * o.alpha * s.k + o.alpha.powf(pe - 1.0) * o.k);
        }
        let dy = pe * s.alpha.powf(pe - 1.0) * s.g;
        let dq: f64 = 2.0
            * (0..ev.sites.len())
                .map(|j| ev.sites[j].alpha * ev.gmat[k][j])
                .sum::<f64>();
        self.combine(ev, dn, dd, dnp, ddp, dy, dq)
    }

    fn d_loglambda(&self, ev: &Eval, k: usize) -> f64 {
        let n = self.nf();
        let pe = self.pexp();
        let c2 = self.consts.c2;
        let s = &ev.sites[k];
        let mut dnp = 0.0;
        let mut ddp = 0.0;
        for pr in ev.pairs.iter().filter(|pr| pr.i == k || pr.j == k) {
            let (j, e) = if pr.i == k { (pr.j, pr.e_i) } else { (pr.i, pr.e_j) };
            let o = &ev.sites[j];
            dnp += 2.0 * c2 * pr.omega * s.alpha * o.alpha * e;
            ddp += pe
                * c2
                * pr.omega
                * e
                * (s.alpha.powf(pe - 1.0) * o.alpha * s.k + s.alpha * o.alpha.powf(pe - 1.0) * o.k);
        }
        let dy = s.alpha.powf(pe) * s.g_log;
        let dq = -(n - 2.0)
            * s.alpha
            * (0..ev.sites.len())
                .map(|j| ev.sites[j].alpha * ev.gmat[k][j])
                .sum::<f64>();
        self.combine(ev, 0.0, 0.0, dnp, ddp, dy, dq)
    }

    fn d_point(&self, cfg: &Configuration, ev: &Eval, k: usize) -> DVector<f64> {
        let n = self.nf();
        let pe = self.pexp();
        let c2 = self.consts.c2;
        let s = &ev.sites[k];
        let dd = &s.grad_k * (s.w * s.alpha.powf(pe));
        let mut dnp = DVector::zeros(cfg.dim() + 1);
        let mut ddp = &dd * self.consts.s_n;
        for pr in ev.pairs.iter().filter(|pr| pr.i == k || pr.j == k) {
            let (j, da) = if pr.i == k { (pr.j, &pr.da_i) } else { (pr.i, &pr.da_j) };
            let o = &ev.sites[j];
            dnp += da * (2.0 * c2 * pr.omega * s.alpha * o.alpha);
            ddp += da
                * (pe
                    * c2
                    * pr.omega
                    * (s.alpha.powf(pe - 1.0) * o.alpha * s.k + s.alpha * o.alpha.powf(pe - 1.0) * o.k));
            ddp += &s.grad_k * (pe * c2 * pr.omega * pr.eps * s.alpha.powf(pe - 1.0) * o.alpha);
        }
        let dy = &s.grad_g * s.alpha.powf(pe);
        let mut dq = DVector::zeros(cfg.dim() + 1);
        if !cfg.is_boundary(k) {
            let ak = cfg.bubbles[k].point.coords();
            for j in cfg.q..cfg.len() {
                let aj = cfg.bubbles[j].point.coords();
                let mut ajbar = aj.clone();
                let last = ajbar.len() - 1;
                ajbar[last] = -ajbar[last];
                let diff = ak - ajbar;
                let r2 = diff.norm_squared();
                let grad = &diff * ((2.0 - n) * ev.gmat[k][j] / r2);
                // The diagonal term depends on a_k through both arguments.
                let factor = if j == k {
                    s.alpha * s.alpha * 2.0
                } else {
                    2.0 * s.alpha * ev.sites[j].alpha
                };
                dq += grad * factor;
            }
            dq = cfg.project_tangent(k, &dq);
        }
        self.combine_vec(ev, &dd, &dnp, &ddp, &dy, &dq)
    }

    /// Centre value of the expansion, without neighbourhood checks.
    pub fn value(&self, cfg: &Configuration) -> f64 {
        self.evaluate(cfg).j
    }

    /// Leading level `N' / D'^{(n-2)/n}` without the correction factor.
    pub fn leading_value(&self, cfg: &Configuration) -> f64 {
        self.evaluate(cfg).j0
    }

    /// `dJ/d alpha_k`.
    pub fn dj_dalpha(&self, cfg: &Configuration, k: usize) -> f64 {
        self.d_alpha(&self.evaluate(cfg), k)
    }

    /// `lambda_k dJ/d lambda_k`.
    pub fn dj_dloglambda(&self, cfg: &Configuration, k: usize) -> f64 {
        self.d_loglambda(&self.evaluate(cfg), k)
    }

    /// Tangent gradient of `J` in `a_k` (equator-tangent for boundary bubbles).
    pub fn dj_dpoint(&self, cfg: &Configuration, k: usize) -> DVector<f64> {
        let ev = self.evaluate(cfg);
        self.d_point(cfg, &ev, k)
    }

    /// Homogenized imbalance `1 - N a_i^{p-2} K(a_i) / D`; equals
    /// `1 - J^{n/(n-2)} a_i^{4/(n-2)} K(a_i)` when `S_n N = 1`.
    pub fn imbalance(&self, cfg: &Configuration, i: usize) -> f64 {
        let pe = self.pexp();
        let mut n_sum = 0.0;
        let mut d_sum = 0.0;
        for (k, b) in cfg.bubbles.iter().enumerate() {
            let w = if cfg.is_boundary(k) { 1.0 } else { 2.0 };
            n_sum += w * b.alpha * b.alpha;
            d_sum += w * b.alpha.powf(pe) * self.field.value(&b.point);
        }
        let b = &cfg.bubbles[i];
        1.0 - n_sum * b.alpha.powf(pe - 2.0) * self.field.value(&b.point) / d_sum
    }

    /// Leading level of the balanced configuration,
    /// `S_n^{2/n} (sum w K(a_i)^{-(n-2)/2})^{2/n}`.
    pub fn balanced_level(&self, cfg: &Configuration) -> f64 {
        let n = self.nf();
        let sum: f64 = cfg
            .bubbles
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let w = if cfg.is_boundary(i) { 1.0 } else { 2.0 };
                w * self.field.value(&b.point).powf(-(n - 2.0) / 2.0)
            })
            .sum();
        self.consts.s_n.powf(2.0 / n) * sum.powf(2.0 / n)
    }

    /// Sets `alpha_i = (Jh^{n/(n-2)} K(a_i))^{-(n-2)/4}` with `Jh` the
    /// balanced level, which also gives `S_n sum w alpha^2 = 1`.
    pub fn normalize_alphas(&self, cfg: &Configuration) -> Configuration {
        let n = self.nf();
        let jh = self.balanced_level(cfg);
        let mut out = cfg.clone();
        for b in out.bubbles.iter_mut() {
            let k = self.field.value(&b.point);
            b.alpha = (jh.powf(n / (n - 2.0)) * k).powf(-(n - 2.0) / 4.0);
        }
        out
    }

    /// Remainder budget of the v-bar part.
    pub fn vbar_budget(&self, cfg: &Configuration) -> f64 {
        let n = self.field.dim();
        let params = cfg.params();
        let mut total = 0.0;
        for (i, b) in cfg.bubbles.iter().enumerate() {
            let g = self.field.tangent_gradient(&b.point).norm();
            total += g / b.lambda + 1.0 / (b.lambda * b.lambda);
            if !cfg.is_boundary(i) {
                let ld = b.lambda * b.point.boundary_distance();
                total += if n == 5 {
                    ld.powi(-3)
                } else {
                    ld.ln() / ld.powf((n as f64 + 2.0) / 2.0)
                };
            }
        }
        for i in 0..cfg.len() {
            for j in i + 1..cfg.len() {
                let e = epsilon(&params[i], &params[j]);
                let l = (1.0 / e).ln();
                total += if n == 5 {
                    e * l.powf(0.6)
                } else {
                    let nf = n as f64;
                    e.powf((nf + 2.0) / (2.0 * (nf - 2.0))) * l.powf((nf + 2.0) / (2.0 * nf))
                };
            }
        }
        self.params.vbar_c * total
    }

    fn pair_log_term(&self, e: f64) -> f64 {
        let n = self.nf();
        e.powf(n / (n - 2.0)) * (1.0 / e).ln()
    }

    /// Remainder `R_1` of the interior expansions.
    pub fn r1(&self, cfg: &Configuration) -> f64 {
        let n = self.nf();
        let ev = self.evaluate(cfg);
        let mut total = 0.0;
        for (i, s) in ev.sites.iter().enumerate() {
            total += (s.grad_norm / s.lambda).powf(n / 2.0) + s.lambda.powf(-2.0 * (n + 1.0) / 3.0);
            if !cfg.is_boundary(i) {
                total += (s.lambda * cfg.bubbles[i].point.boundary_distance()).powf(-n);
            }
        }
        for pr in &ev.pairs {
            total += 2.0 * self.pair_log_term(pr.eps);
        }
        total
    }

    /// Remainder `R_1^b` of the boundary expansions.
    pub fn r1_boundary(&self, cfg: &Configuration) -> f64 {
        let n = self.nf();
        let ev = self.evaluate(cfg);
        let mut total = 0.0;
        for s in ev.sites.iter().take(cfg.q) {
            total += (s.grad_norm / s.lambda).powf(n / 2.0) + s.lambda.powf(-2.0 * (n + 1.0) / 3.0);
        }
        for pr in ev.pairs.iter().filter(|pr| pr.j < cfg.q) {
            total += 2.0 * self.pair_log_term(pr.eps);
        }
        total
    }

    /// Expansion value with its error bar.
    pub fn reduced_j(&self, cfg: &Configuration) -> Result<Interval> {
        self.check_dim(cfg)?;
        cfg.check_neighborhood()?;
        Ok(self.reduced_j_unchecked(cfg))
    }

    /// Expansion value with its error bar, skipping the neighbourhood test.
    pub fn reduced_j_unchecked(&self, cfg: &Configuration) -> Interval {
        let n = self.nf();
        let ev = self.evaluate(cfg);
        let mut rem = 0.0;
        for (i, s) in ev.sites.iter().enumerate() {
            rem += s.lambda.powi(-3) + (s.grad_norm / s.lambda).powi(2);
            if !cfg.is_boundary(i) {
                rem += (s.lambda * cfg.bubbles[i].point.boundary_distance()).powf(1.0 - n);
            }
        }
        for pr in &ev.pairs {
            rem += self.pair_log_term(pr.eps);
            let d = geodesic_distance(&cfg.bubbles[pr.i].point, &cfg.bubbles[pr.j].point);
            if d < self.params.separation {
                rem += pr.eps;
            }
        }
        let vbar = self.vbar_budget(cfg);
        Interval::new(ev.j, ev.j * (self.params.remainder_c * rem + vbar * vbar))
    }

    fn pair_sum(&self, ev: &Eval, i: usize, pred: impl Fn(usize) -> bool) -> f64 {
        ev.pairs
            .iter()
            .filter(|pr| (pr.i == i && pred(pr.j)) || (pr.j == i && pred(pr.i)))
            .map(|pr| pr.eps)
            .sum()
    }

    /// `<grad J, lambda_i d delta_i / d lambda_i>` for a boundary bubble.
    pub fn grad_lambda_boundary(&self, cfg: &Configuration, i: usize) -> Result<Interval> {
        self.check_dim(cfg)?;
        if !cfg.is_boundary(i) || i >= cfg.len() {
            return Err(Error::IndexNotBoundary(i));
        }
        let ev = self.evaluate(cfg);
        let s = &ev.sites[i];
        let center = self.d_loglambda(&ev, i) / s.alpha;
        let terms = s.lambda.powi(-3) + self.pair_sum(&ev, i, |j| j >= cfg.q) + self.r1_boundary(cfg);
        Ok(Interval::new(center, self.params.remainder_c * ev.j / s.alpha * terms))
    }

    /// `<grad J, lambda_i d phi_i / d lambda_i>` for an interior bubble.
    pub fn grad_lambda_interior(&self, cfg: &Configuration, i: usize) -> Result<Interval> {
        self.check_dim(cfg)?;
        if cfg.is_boundary(i) || i >= cfg.len() {
            return Err(Error::IndexNotInterior(i));
        }
        let ev = self.evaluate(cfg);
        let s = &ev.sites[i];
        let center = self.d_loglambda(&ev, i) / s.alpha;
        let terms = s.lambda.powi(-3) + self.r1(cfg);
        Ok(Interval::new(center, self.params.remainder_c * ev.j / s.alpha * terms))
    }

    /// Rate pairing for either kind of bubble.
    pub fn grad_lambda(&self, cfg: &Configuration, i: usize) -> Result<Interval> {
        if cfg.is_boundary(i) {
            self.grad_lambda_boundary(cfg, i)
        } else {
            self.grad_lambda_interior(cfg, i)
        }
    }

    /// `<grad J, (1/lambda_i) d phi_i / d a_i>` as a tangent vector.
    pub fn grad_a(&self, cfg: &Configuration, i: usize) -> Result<TangentPairing> {
        self.check_dim(cfg)?;
        if i >= cfg.len() {
            return Err(Error::InvalidConfiguration(format!("index {i} out of range")));
        }
        let ev = self.evaluate(cfg);
        let s = &ev.sites[i];
        let vector = self.d_point(cfg, &ev, i) / (s.alpha * s.lambda);
        let scale = self.params.remainder_c * ev.j / s.alpha;
        if cfg.is_boundary(i) {
            let mut terms = s.lambda.powi(-2) + self.r1_boundary(cfg) + self.pair_sum(&ev, i, |j| j >= cfg.q);
            let n = self.nf();
            for pr in ev.pairs.iter().filter(|pr| pr.j < cfg.q && (pr.i == i || pr.j == i)) {
                let k = if pr.i == i { pr.j } else { pr.i };
                let d = geodesic_distance(&cfg.bubbles[i].point, &cfg.bubbles[k].point);
                terms += pr.eps.powf((n + 1.0) / (n - 2.0)) * ev.sites[k].lambda * d;
            }
            let c = &self.consts;
            let beta = self.imbalance(cfg, i);
            let nu = self.field.normal_derivative_at(cfg.bubbles[i].point.coords());
            let normal = 2.0 * ev.j * s.alpha * (c.c4 * beta + (1.0 - beta) * c.c5 * nu / (s.lambda * s.k));
            Ok(TangentPairing {
                vector,
                halfwidth: scale * terms,
                normal: Some(normal),
            })
        } else {
            let ld = s.lambda * cfg.bubbles[i].point.boundary_distance();
            let terms = s.lambda.powi(-2) + ld.powf(2.0 - self.nf()) + self.pair_sum(&ev, i, |_| true);
            Ok(TangentPairing {
                vector,
                halfwidth: scale * terms,
                normal: None,
            })
        }
    }

    /// `<grad J, phi_i>`, the derivative in `alpha_i`.
    pub fn grad_alpha(&self, cfg: &Configuration, i: usize) -> Result<Interval> {
        self.check_dim(cfg)?;
        if i >= cfg.len() {
            return Err(Error::InvalidConfiguration(format!("index {i} out of range")));
        }
        let ev = self.evaluate(cfg);
        let s = &ev.sites[i];
        let mut terms = s.grad_norm / s.lambda + s.lambda.powi(-2) + self.pair_sum(&ev, i, |_| true);
        if !cfg.is_boundary(i) {
            terms += (s.lambda * cfg.bubbles[i].point.boundary_distance()).powf(2.0 - self.nf());
        }
        Ok(Interval::new(
            self.d_alpha(&ev, i),
            self.params.remainder_c * ev.j / s.alpha * terms,
        ))
    }

    /// Every pairing at once.
    pub fn gradient_components(&self, cfg: &Configuration) -> Result<GradientComponents> {
        let mut lambda = Vec::new();
        let mut a = Vec::new();
        let mut alpha = Vec::new();
        for i in 0..cfg.len() {
            lambda.push(self.grad_lambda(cfg, i)?);
            a.push(self.grad_a(cfg, i)?);
            alpha.push(self.grad_alpha(cfg, i)?);
        }
        let ev = self.evaluate(cfg);
        let pairs = ev
            .pairs
            .iter()
            .map(|pr| PairData {
                i: pr.i,
                j: pr.j,
                eps: pr.eps,
                lambda_deps: (pr.e_i, pr.e_j),
                deps_da_i: pr.da_i.clone(),
            })
            .collect();
        Ok(GradientComponents {
            lambda,
            a,
            alpha,
            pairs,
            r1: self.r1(cfg),
            r1_boundary: self.r1_boundary(cfg),
        })
    }
}

/// Decomposition of the value near a critical point at infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalForm {
    pub value: Interval,
    /// Level of the matched critical point at infinity.
    pub level: f64,
    /// Squared norm of the weight deviation transverse to the scaling direction.
    pub alpha_norm2: f64,
    pub a_minus_norm2: f64,
    pub a_plus_norm2: f64,
    /// Sum of the rate-dependent corrections.
    pub rate_terms: f64,
    /// Number of decreasing directions `q + p - 1 + dim A^+`.
    pub index: usize,
    pub matched: Vec<CriticalPointRecord>,
}

/// Logarithm map on the sphere: tangent vector at `z` pointing to `a`.
fn sphere_log(z: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
    let c = z.dot(a).clamp(-1.0, 1.0);
    let perp = a - z * c;
    let s = perp.norm();
    if s < 1e-300 {
        return DVector::zeros(z.len());
    }
    perp * (s.atan2(c) / s)
}

impl ReducedModel {
    /// Matches each bubble to a distinct admissible critical point within `eta`.
    pub fn match_w_set(
        &self,
        cfg: &Configuration,
        landscape: &Landscape,
        eta: f64,
    ) -> Result<Vec<CriticalPointRecord>> {
        self.check_dim(cfg)?;
        let mut matched: Vec<CriticalPointRecord> = Vec::new();
        for (i, b) in cfg.bubbles.iter().enumerate() {
            let kind = if cfg.is_boundary(i) {
                CriticalKind::BoundaryOfK1
            } else {
                CriticalKind::InteriorOfK
            };
            let candidate = landscape
                .records
                .iter()
                .filter(|r| r.kind == kind && r.census_admissible())
                .map(|r| (geodesic_distance(&r.location, &b.point), r))
                .filter(|(d, _)| *d < eta)
                .min_by(|x, y| x.0.total_cmp(&y.0))
                .map(|(_, r)| r.clone())
                .ok_or_else(|| Error::NotInWSet(format!("bubble {i} is not within {eta} of an admissible point")))?;
            if matched.iter().any(|m| m.location == candidate.location) {
                return Err(Error::NotInWSet(format!(
                    "bubble {i} shares its critical point with another bubble"
                )));
            }
            matched.push(candidate);
        }
        Ok(matched)
    }

    /// Quadratic normal form around the matched critical point at infinity.
    ///
    /// With `W = sum w K(z_i)^{-(n-2)/2}` and balanced unit weights `ah`,
    /// the weight part is `(p-2)(|d|_w^2 - <ah, d>_w^2)` for `d = alpha/|alpha|_w - ah`,
    /// and each Hessian eigen-direction `e` at `z_i` contributes
    /// `-(n-2)/(2n) w K(z_i)^{-n/2} e <h, v>^2 / W` for the log-map deviation `h`.
    pub fn normal_form(&self, cfg: &Configuration, landscape: &Landscape, eta: f64) -> Result<NormalForm> {
        let matched = self.match_w_set(cfg, landscape, eta)?;
        let n = self.nf();
        let pe = self.pexp();
        let s = self.consts.s_n;
        let weights: Vec<f64> = (0..cfg.len())
            .map(|i| if cfg.is_boundary(i) { 1.0 } else { 2.0 })
            .collect();
        let kz: Vec<f64> = matched.iter().map(|r| r.value).collect();
        let wsum: f64 = weights.iter().zip(&kz).map(|(w, k)| w * k.powf(-(n - 2.0) / 2.0)).sum();
        let level = s.powf(2.0 / n) * wsum.powf(2.0 / n);

        // Balanced unit weights at the critical points: alpha_i proportional to K(z_i)^{-(n-2)/4}.
        let raw: Vec<f64> = kz.iter().map(|k| k.powf(-(n - 2.0) / 4.0)).collect();
        let norm = |v: &[f64]| v.iter().zip(&weights).map(|(a, w)| w * a * a).sum::<f64>().sqrt();
        let rn = norm(&raw);
        let ah: Vec<f64> = raw.iter().map(|a| a / rn).collect();
        let alphas: Vec<f64> = cfg.bubbles.iter().map(|b| b.alpha).collect();
        let an = norm(&alphas);
        let d: Vec<f64> = alphas.iter().zip(&ah).map(|(a, h)| a / an - h).collect();
        let dd: f64 = d.iter().zip(&weights).map(|(x, w)| w * x * x).sum();
        let da: f64 = d.iter().zip(&ah).zip(&weights).map(|((x, h), w)| w * x * h).sum();
        let alpha_norm2 = (pe - 2.0) * (dd - da * da);

        let mut a_minus = 0.0;
        let mut a_plus = 0.0;
        let mut plus_dims = 0;
        let mut cubic = 0.0;
        let field_scale = self.field.linear_part().norm() + 4.0 * self.field.quadratic_part().norm();
        for (i, r) in matched.iter().enumerate() {
            let z = r.location.coords();
            let h = sphere_log(z, cfg.bubbles[i].point.coords());
            let scale = (n - 2.0) / (2.0 * n) * weights[i] * kz[i].powf(-n / 2.0) / wsum;
            for (e, v) in r.hessian_eigen(&self.field) {
                let c = h.dot(&v);
                if e < 0.0 {
                    a_minus += scale * (-e) * c * c;
                } else {
                    a_plus += scale * e * c * c;
                    plus_dims += 1;
                }
            }
            let t = h.norm();
            cubic += scale * field_scale * t * t * t + (n - 2.0) / n * (field_scale * t * t / kz[i]).powi(2);
        }
        for x in &d {
            cubic += 4.0 * (pe - 2.0) * x.abs().powi(3);
        }

        // Rate corrections at the balanced weights (S_n N = 1).
        let ev = self.evaluate(cfg);
        let mut rate_terms = 0.0;
        for (i, site) in ev.sites.iter().enumerate() {
            rate_terms += ah[i] * ah[i] / (s * kz[i]) * site.g;
            for j in cfg.q..cfg.len() {
                rate_terms -= self.consts.c2 / s * ah[i] * ah[j] * ev.gmat[i][j];
            }
        }
        let mut rem = 0.0;
        for site in &ev.sites {
            rem += site.lambda.powi(-3) + (site.grad_norm / site.lambda).powi(2);
        }
        for pr in &ev.pairs {
            rem += 2.0 * pe * self.consts.c2 / s * pr.eps * 4.0;
        }
        let center = level * (1.0 - alpha_norm2 + a_minus - a_plus + rate_terms);
        let halfwidth = level * (cubic + self.params.remainder_c * rem);
        Ok(NormalForm {
            value: Interval::new(center, halfwidth),
            level,
            alpha_norm2,
            a_minus_norm2: a_minus,
            a_plus_norm2: a_plus,
            rate_terms,
            index: cfg.len() - 1 + plus_dims,
            matched,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FieldSpec;
    use crate::landscape::Landscape;
    use crate::quadrature::ConstantsTable;

    fn model(spec: FieldSpec) -> ReducedModel {
        let field = ScalarField::from_spec(spec).unwrap();
        ReducedModel::new(field, ConstantsTable::closed_form(5), ModelParams::default()).unwrap()
    }

    fn state(coords: Vec<f64>, lambda: f64) -> BubbleState {
        BubbleState {
            alpha: 1.0,
            point: SpherePoint::normalized(DVector::from_vec(coords)).unwrap(),
            lambda,
        }
    }

    #[test]
    fn constant_field_levels() {
        let m = model(FieldSpec::constant(5, 1.0));
        let s = m.constants().s_n;
        let cfg = Configuration::new(1, 0, vec![state(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e6)], 0.1).unwrap();
        let j = m.reduced_j(&cfg).unwrap();
        assert!((j.center - s.powf(0.4)).abs() < 1e-12 * j.center);
        let cfg = Configuration::new(0, 1, vec![state(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0], 1e3)], 0.1).unwrap();
        let j = m.reduced_j(&cfg).unwrap();
        assert!((j.center - (2.0 * s).powf(0.4)).abs() < 1e-6 * j.center);
    }

    #[test]
    fn normalization_balances() {
        let m = model(FieldSpec::constant(5, 1.0).with("x1", 0.05));
        let cfg = Configuration::new(
            2,
            0,
            vec![
                state(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 100.0),
                state(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 100.0),
            ],
            0.1,
        )
        .unwrap();
        let norm = m.normalize_alphas(&cfg);
        let again = m.normalize_alphas(&norm);
        assert_eq!(norm, again);
        let (k1, k2) = (1.05f64, 1.0f64);
        let ratio = norm.bubbles[0].alpha / norm.bubbles[1].alpha;
        assert!((ratio - (k2 / k1).powf(0.75)).abs() < 1e-12);
        for i in 0..2 {
            assert!(m.imbalance(&norm, i).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_invariance() {
        let m = model(FieldSpec::constant(5, 1.0).with("x1", 0.05).with("x6", 0.02));
        let cfg = Configuration::new(
            1,
            1,
            vec![
                state(vec![1.0, 0.2, 0.0, 0.0, 0.0, 0.0], 50.0),
                state(vec![0.2, 0.0, 0.3, 0.0, 0.0, 0.9], 80.0),
            ],
            0.1,
        )
        .unwrap();
        let mut scaled = cfg.clone();
        for b in scaled.bubbles.iter_mut() {
            b.alpha *= 3.7;
        }
        let (a, b) = (m.value(&cfg), m.value(&scaled));
        assert!((a - b).abs() < 1e-13 * a);
    }

    #[test]
    fn wrong_index_kind() {
        let m = model(FieldSpec::constant(5, 1.0));
        let cfg = Configuration::new(1, 0, vec![state(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 100.0)], 0.1).unwrap();
        assert_eq!(m.grad_lambda_interior(&cfg, 0), Err(Error::IndexNotInterior(0)));
        let cfg = Configuration::new(0, 1, vec![state(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0], 100.0)], 0.1).unwrap();
        assert_eq!(m.grad_lambda_boundary(&cfg, 0), Err(Error::IndexNotBoundary(0)));
    }

    #[test]
    fn vbar_constant_single() {
        let m = model(FieldSpec::constant(5, 1.0));
        let cfg = Configuration::new(1, 0, vec![state(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 40.0)], 0.1).unwrap();
        assert!((m.vbar_budget(&cfg) - 1.0 / 1600.0).abs() < 1e-18);
    }

    fn fd_config() -> Configuration {
        Configuration::new(
            2,
            1,
            vec![
                state(vec![1.0, 0.1, 0.0, 0.0, 0.0, 0.0], 30.0),
                state(vec![0.8, 0.6, 0.1, 0.0, 0.0, 0.0], 25.0),
                state(vec![0.3, 0.0, 0.4, 0.2, 0.0, 0.8], 40.0),
            ],
            0.2,
        )
        .unwrap()
    }

    fn fd_model() -> ReducedModel {
        model(
            FieldSpec::constant(5, 1.0)
                .with("x1", 0.05)
                .with("x6", -0.04)
                .with("x2*x3", 0.03)
                .with("x3*x3", 0.02)
                .with("x1*x6", 0.02),
        )
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = fd_model();
        let mut cfg = fd_config();
        cfg.bubbles[0].alpha = 1.1;
        cfg.bubbles[2].alpha = 0.7;
        let h = 1e-5;
        for k in 0..cfg.len() {
            let mut up = cfg.clone();
            let mut dn = cfg.clone();
            up.bubbles[k].alpha += h;
            dn.bubbles[k].alpha -= h;
            let fd = (m.value(&up) - m.value(&dn)) / (2.0 * h);
            let an = m.dj_dalpha(&cfg, k);
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "alpha {k}: {fd} vs {an}");

            let mut up = cfg.clone();
            let mut dn = cfg.clone();
            up.bubbles[k].lambda *= h.exp();
            dn.bubbles[k].lambda *= (-h).exp();
            let fd = (m.value(&up) - m.value(&dn)) / (2.0 * h);
            let an = m.dj_dloglambda(&cfg, k);
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "lambda {k}: {fd} vs {an}");

            let grad = m.dj_dpoint(&cfg, k);
            for dir in 0..6 {
                let mut v = DVector::zeros(6);
                v[dir] = 1.0;
                let v = cfg.project_tangent(k, &v);
                if v.norm() < 1e-3 {
                    continue;
                }
                let v = v.normalize();
                let a = cfg.bubbles[k].point.coords().clone();
                let moved = |t: f64| {
                    let mut c = cfg.clone();
                    c.bubbles[k].point = SpherePoint::normalized(&a * t.cos() + &v * t.sin()).unwrap();
                    m.value(&c)
                };
                let fd = (moved(h) - moved(-h)) / (2.0 * h);
                let an = grad.dot(&v);
                assert!(
                    (fd - an).abs() < 1e-6 * (1.0 + grad.norm()),
                    "point {k} dir {dir}: {fd} vs {an}"
                );
            }
        }
    }

    fn w_case(spec: FieldSpec, q: usize, p: usize) -> (ReducedModel, Landscape) {
        let m = model(spec);
        let l = Landscape::analyze(m.field(), 8).unwrap();
        let admissible = l.records.iter().filter(|r| r.census_admissible()).count();
        assert!(admissible >= q + p);
        (m, l)
    }

    fn perturbed(m: &ReducedModel, l: &Landscape, q: usize, p: usize, seed: u64, size: f64) -> Configuration {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let bdry: Vec<_> = l
            .records
            .iter()
            .filter(|r| r.census_admissible() && r.is_boundary())
            .collect();
        let inner: Vec<_> = l
            .records
            .iter()
            .filter(|r| r.census_admissible() && !r.is_boundary())
            .collect();
        let mut bubbles = Vec::new();
        for (k, r) in bdry.iter().take(q).chain(inner.iter().take(p)).enumerate() {
            let mut v = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            if k < q {
                v[5] = 0.0;
            }
            let z = r.location.coords();
            let v = &v - z * v.dot(z);
            let t = rng.gen_range(0.0..size);
            let a = z * t.cos() + v.normalize() * t.sin();
            bubbles.push(BubbleState {
                alpha: 1.0 + rng.gen_range(-size..size),
                point: SpherePoint::normalized(a).unwrap(),
                lambda: rng.gen_range(1e3..1e4),
            });
        }
        let cfg = Configuration::new(q, p, bubbles, 0.1).unwrap();
        let norm = m.normalize_alphas(&cfg);
        let mut out = cfg.clone();
        for (b, nb) in out.bubbles.iter_mut().zip(&norm.bubbles) {
            b.alpha *= nb.alpha;
        }
        out
    }

    #[test]
    fn normal_form_agrees_with_expansion() {
        let cases = [
            (FieldSpec::constant(5, 1.0).with("x1", 0.05), 1, 0),
            (
                FieldSpec::constant(5, 1.0)
                    .with("x1^2", 0.05)
                    .with("x2^2", 0.03)
                    .with("x3^2", 0.02)
                    .with("x4^2", 0.01)
                    .with("x5^2", 0.005),
                2,
                0,
            ),
            (
                FieldSpec::constant(5, 1.0)
                    .with("x1", 0.05 * 0.75f64.sqrt())
                    .with("x6", 0.025),
                0,
                1,
            ),
        ];
        for (spec, q, p) in cases {
            let (m, l) = w_case(spec, q, p);
            for seed in 0..30 {
                let cfg = perturbed(&m, &l, q, p, seed, 0.05);
                let nf = m.normal_form(&cfg, &l, 0.1).unwrap();
                let rj = m.reduced_j_unchecked(&cfg);
                let diff = (nf.value.center - rj.center).abs();
                assert!(
                    diff <= nf.value.halfwidth + rj.halfwidth,
                    "q={q} p={p} seed={seed}: {diff:e} vs {:e}",
                    nf.value.halfwidth + rj.halfwidth
                );
            }
        }
    }

    #[test]
    fn normal_form_sign_structure() {
        let (m, l) = w_case(FieldSpec::constant(5, 1.0).with("x1", 0.05), 1, 0);
        let z = SpherePoint::axis(5, 0);
        let at = |t: f64| {
            let cfg = Configuration::new(
                1,
                0,
                vec![BubbleState {
                    alpha: 1.0,
                    point: SpherePoint::normalized(DVector::from_vec(vec![t.cos(), t.sin(), 0.0, 0.0, 0.0, 0.0]))
                        .unwrap(),
                    lambda: 1e6,
                }],
                0.1,
            )
            .unwrap();
            m.normal_form(&cfg, &l, 0.1).unwrap()
        };
        let base = at(0.0);
        assert!((base.value.center - base.level).abs() < 1e-6 * base.level);
        assert_eq!(base.index, 0);
        assert!(geodesic_distance(&base.matched[0].location, &z) < 1e-12);
        // Moving off a maximum of K_1 lowers K, hence raises the value.
        let mut prev = base.value.center;
        for k in 1..5 {
            let v = at(0.01 * k as f64);
            assert!(v.a_minus_norm2 > 0.0 && v.a_plus_norm2 == 0.0);
            assert!(v.value.center > prev);
            prev = v.value.center;
        }
    }
}
