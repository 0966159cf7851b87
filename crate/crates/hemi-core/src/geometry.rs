//! Hemisphere geometry and the curvature candidate field.
//!
//! Points live in ambient coordinates of R^{n+1}; the closed upper
//! hemisphere is `x_{n+1} >= 0` and its boundary is the equator
//! `x_{n+1} = 0`. Indices in code are 0-based, so `x_{n+1}` is `coords[n]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-norm and hemisphere invariants.
pub const POINT_TOL: f64 = 1e-12;
/// Distance to `-e_1` below which the stereographic chart is refused.
pub const POLE_TOL: f64 = 1e-10;

/// A point of the closed upper hemisphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpherePoint {
    coords: DVector<f64>,
}

impl SpherePoint {
    /// Validates `|coords| = 1` and `coords[n] >= -1e-12`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(coords))
    }

    pub fn from_vector(coords: DVector<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidPoint("need at least two coordinates".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        let norm = coords.norm();
        if (norm - 1.0).abs() > POINT_TOL {
            return Err(Error::InvalidPoint(format!("norm {norm} is not 1")));
        }
        let h = coords[coords.len() - 1];
        if h < -POINT_TOL {
            return Err(Error::InvalidPoint(format!("height {h} below the equator")));
        }
        Ok(Self { coords })
    }

    /// Normalizes `v` and clamps tiny negative heights onto the equator.
    pub fn normalized(mut v: DVector<f64>) -> Result<Self> {
        let last = v.len() - 1;
        if v[last] < 0.0 && v[last] > -1e-9 {
            v[last] = 0.0;
        }
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidPoint("cannot normalize zero vector".into()));
        }
        Self::from_vector(v / norm)
    }

    /// The ambient unit vector `e_{k+1}` (0-based `k`) in dimension `n`.
    pub fn axis(n: usize, k: usize) -> Self {
        let mut v = DVector::zeros(n + 1);
        v[k] = 1.0;
        Self { coords: v }
    }

    /// Sphere dimension `n`.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Height `x_{n+1}` above the equator.
    pub fn height(&self) -> f64 {
        self.coords[self.coords.len() - 1]
    }

    /// Geodesic distance to the equator.
    pub fn boundary_distance(&self) -> f64 {
        self.height().clamp(-1.0, 1.0).asin().max(0.0)
    }

    /// Mirror image across the equator (leaves the hemisphere unless on it).
    pub fn reflected_coords(&self) -> DVector<f64> {
        let mut v = self.coords.clone();
        let last = v.len() - 1;
        v[last] = -v[last];
        v
    }

    /// Nearest point of the equator; `None` at the north pole.
    pub fn boundary_foot(&self) -> Option<BoundarySpherePoint> {
        let mut v = self.coords.clone();
        let last = v.len() - 1;
        v[last] = 0.0;
        let norm = v.norm();
        if norm < 1e-14 {
            return None;
        }
        BoundarySpherePoint::new((v / norm).iter().copied().collect()).ok()
    }
}

impl TryFrom<Vec<f64>> for SpherePoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpherePoint::new(v)
    }
}

impl From<SpherePoint> for Vec<f64> {
    fn from(p: SpherePoint) -> Self {
        p.coords.iter().copied().collect()
    }
}

/// A point of the equator `x_{n+1} = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BoundarySpherePoint {
    point: SpherePoint,
}

impl BoundarySpherePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let point = SpherePoint::new(coords)?;
        if point.height().abs() > POINT_TOL {
            return Err(Error::InvalidPoint(format!(
                "height {} is not on the equator",
                point.height()
            )));
        }
        Ok(Self { point })
    }

    /// Normalizes after zeroing the last coordinate.
    pub fn normalized(mut v: DVector<f64>) -> Result<Self> {
        let last = v.len() - 1;
        v[last] = 0.0;
        let point = SpherePoint::normalized(v)?;
        Ok(Self { point })
    }

    pub fn point(&self) -> &SpherePoint {
        &self.point
    }

    pub fn coords(&self) -> &DVector<f64> {
        self.point.coords()
    }
}

impl TryFrom<Vec<f64>> for BoundarySpherePoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        BoundarySpherePoint::new(v)
    }
}

impl From<BoundarySpherePoint> for Vec<f64> {
    fn from(p: BoundarySpherePoint) -> Self {
        p.point.into()
    }
}

/// A point of the closed half-space `x_n >= 0` in R^n.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpacePoint {
    coords: DVector<f64>,
}

impl HalfSpacePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let v = DVector::from_vec(coords);
        if v.is_empty() || v[v.len() - 1] < -POINT_TOL {
            return Err(Error::InvalidPoint("half-space point below x_n = 0".into()));
        }
        Ok(Self { coords: v })
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Reflection across `x_n = 0`.
    pub fn mirror(&self) -> DVector<f64> {
        let mut v = self.coords.clone();
        let last = v.len() - 1;
        v[last] = -v[last];
        v
    }
}

/// Geodesic distance in radians, `arccos <p,q>` evaluated stably.
pub fn geodesic_distance(p: &SpherePoint, q: &SpherePoint) -> f64 {
    chord_to_angle(p.coords(), q.coords())
}

/// Angle between two unit vectors via `2 atan2(|p-q|, |p+q|)`.
pub fn chord_to_angle(p: &DVector<f64>, q: &DVector<f64>) -> f64 {
    let diff = (p - q).norm();
    let sum = (p + q).norm();
    (2.0 * diff.atan2(sum)).clamp(0.0, std::f64::consts::PI)
}

/// Stereographic chart from the pole `-e_1`, sending the equator to `x_n = 0`.
pub fn stereographic_to_halfspace(p: &SpherePoint) -> Result<HalfSpacePoint> {
    let c = p.coords();
    let n = p.dim();
    let mut pole_gap = DVector::zeros(n + 1);
    pole_gap.copy_from(c);
    pole_gap[0] += 1.0;
    if pole_gap.norm() < POLE_TOL {
        return Err(Error::PoleSingularity);
    }
    let denom = 1.0 + c[0];
    let x: Vec<f64> = (1..=n).map(|j| c[j] / denom).collect();
    Ok(HalfSpacePoint {
        coords: DVector::from_vec(x),
    })
}

/// Inverse chart: `x -> ((1-|x|^2), 2x) / (1+|x|^2)`.
pub fn halfspace_to_sphere(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let r2 = x.norm_squared();
    let mut v = DVector::zeros(n + 1);
    v[0] = (1.0 - r2) / (1.0 + r2);
    for j in 0..n {
        v[j + 1] = 2.0 * x[j] / (1.0 + r2);
    }
    v
}

/// Metric conformal factor `2/(1+|x|^2)` of the inverse chart.
pub fn conformal_factor(x: &DVector<f64>) -> f64 {
    2.0 / (1.0 + x.norm_squared())
}

/// Householder reflection sending `e_1` to the boundary point `b`; it fixes
/// `e_{n+1}` and hence preserves the hemisphere.
pub fn boundary_frame(b: &BoundarySpherePoint) -> DMatrix<f64> {
    let dim = b.coords().len();
    let mut e1 = DVector::zeros(dim);
    e1[0] = 1.0;
    let w = &e1 - b.coords();
    let wn = w.norm_squared();
    let mut r = DMatrix::identity(dim, dim);
    if wn > 1e-300 {
        r -= (&w * w.transpose()) * (2.0 / wn);
    }
    r
}

/// Orthonormal basis of the complement of `span(constraints)` in R^{dim}.
/// Constraints must be orthonormal.
pub fn complement_basis(dim: usize, constraints: &[&DVector<f64>]) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(dim);
    let mut all: Vec<DVector<f64>> = constraints.iter().map(|c| (*c).clone()).collect();
    let target = dim - constraints.len();
    for k in 0..dim {
        if basis.len() == target {
            break;
        }
        let mut v = DVector::zeros(dim);
        v[k] = 1.0;
        for u in all.iter() {
            let d = u.dot(&v);
            v -= u * d;
        }
        for u in all.iter() {
            let d = u.dot(&v);
            v -= u * d;
        }
        let nv = v.norm();
        if nv > 1e-6 {
            v /= nv;
            all.push(v.clone());
            basis.push(v);
        }
    }
    basis
}

/// One monomial term of a field specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldTerm {
    /// Product over `x1..x(n+1)` of total degree 1 or 2, e.g. `x1`, `x1*x2`, `x3^2`.
    pub monomial: String,
    pub coeff: f64,
}

/// Serializable description of a polynomial curvature candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub dimension: usize,
    pub kappa0: f64,
    #[serde(default)]
    pub terms: Vec<FieldTerm>,
}

impl FieldSpec {
    pub fn constant(dimension: usize, kappa0: f64) -> Self {
        Self {
            dimension,
            kappa0,
            terms: Vec::new(),
        }
    }

    /// Builder-style term addition.
    pub fn with(mut self, monomial: &str, coeff: f64) -> Self {
        self.terms.push(FieldTerm {
            monomial: monomial.to_string(),
            coeff,
        });
        self
    }
}

fn parse_variable(tok: &str, n: usize) -> Result<(usize, u32)> {
    let (var, pow) = match tok.split_once('^') {
        Some((v, p)) => {
            let p: u32 = p
                .trim()
                .parse()
                .map_err(|_| Error::InvalidField(format!("bad exponent in '{tok}'")))?;
            (v.trim(), p)
        }
        None => (tok.trim(), 1),
    };
    let idx = var
        .strip_prefix('x')
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| Error::InvalidField(format!("bad variable '{var}'")))?;
    if idx == 0 || idx > n + 1 {
        return Err(Error::InvalidField(format!("variable '{var}' outside x1..x{}", n + 1)));
    }
    Ok((idx - 1, pow))
}

/// Variable indices (0-based) of a monomial string, with multiplicity.
pub fn parse_monomial(s: &str, n: usize) -> Result<Vec<usize>> {
    let mut vars = Vec::new();
    for tok in s.split('*') {
        if tok.trim().is_empty() {
            return Err(Error::InvalidField(format!("empty factor in '{s}'")));
        }
        let (idx, pow) = parse_variable(tok, n)?;
        for _ in 0..pow {
            vars.push(idx);
        }
    }
    if vars.is_empty() || vars.len() > 2 {
        return Err(Error::InvalidField(format!("monomial '{s}' must have degree 1 or 2")));
    }
    Ok(vars)
}

/// Curvature candidate `K(X) = kappa0 + <b, X> + X^T Q X` restricted to the
/// sphere. All derivatives are exact.
#[derive(Clone, Debug)]
pub struct ScalarField {
    n: usize,
    kappa0: f64,
    b: DVector<f64>,
    q: DMatrix<f64>,
    spec: FieldSpec,
}

impl ScalarField {
    /// Parses the spec and checks positivity on the closed hemisphere.
    pub fn from_spec(spec: FieldSpec) -> Result<Self> {
        let field = Self::from_spec_unchecked(spec)?;
        if field.coefficient_bound() <= 0.0 {
            let (min, _) = field_min_max(&field, 10)?;
            if min <= 0.0 {
                return Err(Error::NonPositiveField { min });
            }
        }
        Ok(field)
    }

    /// Parses the spec without the positivity scan.
    pub fn from_spec_unchecked(spec: FieldSpec) -> Result<Self> {
        let n = spec.dimension;
        if n < 5 {
            return Err(Error::InvalidField(format!("dimension {n} < 5")));
        }
        if !spec.kappa0.is_finite() || spec.kappa0 <= 0.0 {
            return Err(Error::InvalidField("kappa0 must be positive".into()));
        }
        let mut b = DVector::zeros(n + 1);
        let mut q = DMatrix::zeros(n + 1, n + 1);
        for t in &spec.terms {
            if !t.coeff.is_finite() {
                return Err(Error::InvalidField(format!(
                    "non-finite coefficient for {}",
                    t.monomial
                )));
            }
            let vars = parse_monomial(&t.monomial, n)?;
            match vars.as_slice() {
                [i] => b[*i] += t.coeff,
                [i, j] if i == j => q[(*i, *i)] += t.coeff,
                [i, j] => {
                    q[(*i, *j)] += 0.5 * t.coeff;
                    q[(*j, *i)] += 0.5 * t.coeff;
                }
                _ => unreachable!(),
            }
        }
        Ok(Self {
            n,
            kappa0: spec.kappa0,
            b,
            q,
            spec,
        })
    }

    pub fn constant(n: usize, kappa0: f64) -> Result<Self> {
        Self::from_spec(FieldSpec::constant(n, kappa0))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn linear_part(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn quadratic_part(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Conservative lower bound `kappa0 - sum |coeff|` (monomials are at most 1 on the sphere).
    pub fn coefficient_bound(&self) -> f64 {
        self.kappa0 - self.spec.terms.iter().map(|t| t.coeff.abs()).sum::<f64>()
    }

    /// Field rescaled by `t > 0`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.kappa0 *= t;
        for term in spec.terms.iter_mut() {
            term.coeff *= t;
        }
        Self::from_spec_unchecked(spec)
    }

    /// Value at an arbitrary ambient vector.
    pub fn value_at(&self, x: &DVector<f64>) -> f64 {
        self.kappa0 + self.b.dot(x) + x.dot(&(&self.q * x))
    }

    pub fn value(&self, p: &SpherePoint) -> f64 {
        self.value_at(p.coords())
    }

    /// Ambient gradient `b + 2 Q x`.
    pub fn ambient_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b + (&self.q * x) * 2.0
    }

    /// Tangent gradient on S^n at a unit vector.
    pub fn tangent_gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        let g = self.ambient_gradient(x);
        let gp = g.dot(x);
        g - x * gp
    }

    pub fn tangent_gradient(&self, p: &SpherePoint) -> DVector<f64> {
        self.tangent_gradient_at(p.coords())
    }

    /// Riemannian Hessian on S^n as an ambient matrix `P (2Q - <g,p> I) P`.
    pub fn tangent_hessian_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let dim = self.n + 1;
        let g = self.ambient_gradient(x);
        let gp = g.dot(x);
        let proj = DMatrix::identity(dim, dim) - x * x.transpose();
        let inner = &self.q * 2.0 - DMatrix::identity(dim, dim) * gp;
        &proj * inner * &proj
    }

    pub fn tangent_hessian(&self, p: &SpherePoint) -> DMatrix<f64> {
        self.tangent_hessian_at(p.coords())
    }

    /// Laplace-Beltrami value `tr(2Q) - p^T 2Q p - n <g, p>`.
    pub fn laplace_beltrami_at(&self, x: &DVector<f64>) -> f64 {
        let g = self.ambient_gradient(x);
        2.0 * self.q.trace() - 2.0 * x.dot(&(&self.q * x)) - self.n as f64 * g.dot(x)
    }

    pub fn laplace_beltrami(&self, p: &SpherePoint) -> f64 {
        self.laplace_beltrami_at(p.coords())
    }

    /// Tangent gradient of the Laplace-Beltrami value.
    pub fn laplacian_gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n as f64;
        let g = -&self.b * n - (&self.q * x) * (4.0 + 4.0 * n);
        let gp = g.dot(x);
        g - x * gp
    }

    /// Outward normal derivative `-d K / d x_{n+1}` at an equator point.
    pub fn normal_derivative(&self, z: &BoundarySpherePoint) -> f64 {
        self.normal_derivative_at(z.coords())
    }

    pub fn normal_derivative_at(&self, x: &DVector<f64>) -> f64 {
        -self.ambient_gradient(x)[self.n]
    }

    /// Tangent gradient (along the equator) of the normal derivative.
    pub fn normal_derivative_gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g: DVector<f64> = self.q.column(self.n).into_owned() * -2.0;
        g[self.n] = 0.0;
        let gp = g.dot(x);
        g - x * gp
    }

    /// Gradient of `K_1` on the equator sphere `S^{n-1}`.
    pub fn boundary_gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.ambient_gradient(x);
        g[self.n] = 0.0;
        let gp = g.dot(x);
        g - x * gp
    }

    pub fn boundary_gradient(&self, z: &BoundarySpherePoint) -> DVector<f64> {
        self.boundary_gradient_at(z.coords())
    }

    /// Riemannian Hessian of `K_1` on `S^{n-1}` as an ambient matrix.
    pub fn boundary_hessian_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let dim = self.n + 1;
        let mut g = self.ambient_gradient(x);
        g[self.n] = 0.0;
        let gp = g.dot(x);
        let mut proj = DMatrix::identity(dim, dim) - x * x.transpose();
        for k in 0..dim {
            proj[(self.n, k)] = 0.0;
            proj[(k, self.n)] = 0.0;
        }
        let inner = &self.q * 2.0 - DMatrix::identity(dim, dim) * gp;
        &proj * inner * &proj
    }

    pub fn boundary_hessian(&self, z: &BoundarySpherePoint) -> DMatrix<f64> {
        self.boundary_hessian_at(z.coords())
    }

    /// Eigenpairs of the Hessian of `K` on `S^n` in an orthonormal tangent basis,
    /// eigenvectors returned as ambient vectors, sorted ascending.
    pub fn hessian_eigen(&self, x: &DVector<f64>) -> Vec<(f64, DVector<f64>)> {
        let basis = complement_basis(self.n + 1, &[x]);
        eigen_in_basis(&self.tangent_hessian_at(x), &basis)
    }

    /// Eigenpairs of the Hessian of `K_1` on `S^{n-1}`.
    pub fn boundary_hessian_eigen(&self, x: &DVector<f64>) -> Vec<(f64, DVector<f64>)> {
        let mut en = DVector::zeros(self.n + 1);
        en[self.n] = 1.0;
        let basis = complement_basis(self.n + 1, &[x, &en]);
        eigen_in_basis(&self.boundary_hessian_at(x), &basis)
    }
}

/// Symmetric eigen-decomposition of `h` restricted to `basis`, ascending.
pub fn eigen_in_basis(h: &DMatrix<f64>, basis: &[DVector<f64>]) -> Vec<(f64, DVector<f64>)> {
    let m = basis.len();
    let mut small = DMatrix::zeros(m, m);
    for i in 0..m {
        let hi = h * &basis[i];
        for j in 0..m {
            small[(i, j)] = basis[j].dot(&hi);
        }
    }
    let small = (&small + small.transpose()) * 0.5;
    let eig = SymmetricEigen::new(small);
    let mut pairs: Vec<(f64, DVector<f64>)> = (0..m)
        .map(|k| {
            let coeffs = eig.eigenvectors.column(k);
            let mut v = DVector::zeros(h.nrows());
            for i in 0..m {
                v += &basis[i] * coeffs[i];
            }
            (eig.eigenvalues[k], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

fn hemisphere_grid(n: usize, g: usize) -> Vec<DVector<f64>> {
    // x_{n+1} = sin(psi), remaining coordinates cos(psi) * omega with omega
    // on S^{n-1} in hyperspherical angles.
    let mut out = Vec::new();
    let dims = n;
    let mut idx = vec![0usize; dims];
    loop {
        let psi = std::f64::consts::FRAC_PI_2 * idx[0] as f64 / (g - 1) as f64;
        let mut omega = vec![0.0; n];
        let mut s = 1.0;
        for k in 0..n - 1 {
            let ang = if k + 1 == n - 1 {
                2.0 * std::f64::consts::PI * idx[k + 1] as f64 / g as f64
            } else {
                std::f64::consts::PI * idx[k + 1] as f64 / (g - 1) as f64
            };
            omega[k] = s * ang.cos();
            s *= ang.sin();
        }
        omega[n - 1] = s;
        let mut v = DVector::zeros(n + 1);
        for k in 0..n {
            v[k] = psi.cos() * omega[k];
        }
        v[n] = psi.sin();
        out.push(v);
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < g {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == dims {
                return out;
            }
        }
    }
}

/// Projected ascent (`sign = 1`) or descent (`sign = -1`) on the closed hemisphere.
pub fn hemisphere_polish(field: &ScalarField, start: &DVector<f64>, sign: f64) -> DVector<f64> {
    let n = field.dim();
    let project = |mut v: DVector<f64>| {
        if v[n] < 0.0 {
            v[n] = 0.0;
        }
        let nv = v.norm();
        v / nv
    };
    let mut p = project(start.clone());
    let mut val = sign * field.value_at(&p);
    let mut step = 0.5;
    for _ in 0..10_000 {
        let mut g = field.tangent_gradient_at(&p) * sign;
        if p[n] <= 1e-15 && g[n] < 0.0 {
            g[n] = 0.0;
            let gp = g.dot(&p);
            g -= &p * gp;
        }
        let gn = g.norm_squared();
        if gn < 1e-30 {
            break;
        }
        let mut accepted = false;
        while step > 1e-16 {
            let cand = project(&p + &g * step);
            let cv = sign * field.value_at(&cand);
            if cv > val + 1e-4 * step * gn {
                p = cand;
                val = cv;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    p
}

/// Grid scan over the closed hemisphere refined by projected ascent/descent.
pub fn field_min_max(field: &ScalarField, grid_density: usize) -> Result<(f64, f64)> {
    if grid_density < 10 {
        return Err(Error::InvalidField("grid_density must be at least 10".into()));
    }
    let grid = hemisphere_grid(field.dim(), grid_density);
    let mut vals: Vec<(f64, usize)> = grid.iter().enumerate().map(|(i, p)| (field.value_at(p), i)).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let picks = 8.min(vals.len());
    let mut kmin = f64::INFINITY;
    let mut kmax = f64::NEG_INFINITY;
    for &(_, i) in vals.iter().take(picks) {
        let p = hemisphere_polish(field, &grid[i], -1.0);
        kmin = kmin.min(field.value_at(&p));
    }
    for &(_, i) in vals.iter().rev().take(picks) {
        let p = hemisphere_polish(field, &grid[i], 1.0);
        kmax = kmax.max(field.value_at(&p));
    }
    if kmin <= 0.0 {
        return Err(Error::NonPositiveField { min: kmin });
    }
    Ok((kmin, kmax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn e(n: usize, k: usize) -> SpherePoint {
        SpherePoint::axis(n, k)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(geodesic_distance(&e(5, 0), &e(5, 0)), 0.0);
        assert!((geodesic_distance(&e(5, 0), &e(5, 1)) - PI / 2.0).abs() < 1e-15);
        let anti = BoundarySpherePoint::new(vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((geodesic_distance(&e(5, 0), anti.point()) - PI).abs() < 1e-15);
    }

    #[test]
    fn chart_examples() {
        let x = stereographic_to_halfspace(&e(5, 0)).unwrap();
        assert!(x.coords().norm() < 1e-15);
        let x = stereographic_to_halfspace(&e(5, 5)).unwrap();
        assert!((x.coords()[4] - 1.0).abs() < 1e-15 && x.coords().rows(0, 4).norm() < 1e-15);
        let x = stereographic_to_halfspace(&e(5, 1)).unwrap();
        assert_eq!(x.coords().as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        let pole = BoundarySpherePoint::new(vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(stereographic_to_halfspace(pole.point()), Err(Error::PoleSingularity));
    }

    #[test]
    fn chart_round_trip() {
        let p = SpherePoint::normalized(DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, 0.4, 0.6])).unwrap();
        let x = stereographic_to_halfspace(&p).unwrap();
        let back = halfspace_to_sphere(x.coords());
        assert!((back - p.coords()).norm() < 1e-14);
    }

    #[test]
    fn invariants_rejected() {
        assert!(SpherePoint::new(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.1]).is_err());
        assert!(SpherePoint::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, -1.0]).is_err());
        assert!(BoundarySpherePoint::new(vec![0.0, 0.0, 0.0, 0.0, 0.6, 0.8]).is_err());
    }

    #[test]
    fn monomial_parsing() {
        assert_eq!(parse_monomial("x1", 5).unwrap(), vec![0]);
        assert_eq!(parse_monomial("x1*x2", 5).unwrap(), vec![0, 1]);
        assert_eq!(parse_monomial("x6^2", 5).unwrap(), vec![5, 5]);
        assert!(parse_monomial("x7", 5).is_err());
        assert!(parse_monomial("x1*x2*x3", 5).is_err());
        assert!(parse_monomial("y1", 5).is_err());
    }

    #[test]
    fn linear_field_derivatives() {
        let k = ScalarField::from_spec(FieldSpec::constant(5, 1.0).with("x1", 0.05)).unwrap();
        let p = e(5, 0);
        assert!((k.value(&p) - 1.05).abs() < 1e-15);
        assert!(k.tangent_gradient(&p).norm() < 1e-15);
        assert!((k.laplace_beltrami(&p) + 0.25).abs() < 1e-15);
        let z = BoundarySpherePoint::new(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(k.normal_derivative(&z), 0.0);
    }

    #[test]
    fn laplacian_gradient_matches_difference() {
        let k = ScalarField::from_spec(
            FieldSpec::constant(5, 2.0)
                .with("x1", 0.1)
                .with("x2*x3", 0.2)
                .with("x6^2", -0.1)
                .with("x4", 0.05),
        )
        .unwrap();
        let p = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, 0.4, 0.6]).normalize();
        let g = k.laplacian_gradient_at(&p);
        let basis = complement_basis(6, &[&p]);
        for v in basis {
            let h = 1e-6;
            let plus = (&p + &v * h).normalize();
            let minus = (&p - &v * h).normalize();
            let fd = (k.laplace_beltrami_at(&plus) - k.laplace_beltrami_at(&minus)) / (2.0 * h);
            assert!((fd - g.dot(&v)).abs() < 1e-7);
        }
    }

    #[test]
    fn min_max_examples() {
        let k = ScalarField::constant(5, 1.0).unwrap();
        assert_eq!(field_min_max(&k, 10).unwrap(), (1.0, 1.0));
        let k = ScalarField::from_spec(FieldSpec::constant(5, 1.0).with("x1", 0.05)).unwrap();
        let (lo, hi) = field_min_max(&k, 10).unwrap();
        assert!((lo - 0.95).abs() < 1e-12 && (hi - 1.05).abs() < 1e-12);
    }

    #[test]
    fn non_positive_field_rejected() {
        let spec = FieldSpec::constant(5, 0.5).with("x1", 1.0);
        assert!(matches!(
            ScalarField::from_spec(spec),
            Err(Error::NonPositiveField { .. })
        ));
    }
}
