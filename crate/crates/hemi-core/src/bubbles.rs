//! Standard bubbles, their Neumann-projected approximation, and the
//! interaction coefficient between two bubbles.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{boundary_frame, geodesic_distance, stereographic_to_halfspace, HalfSpacePoint, SpherePoint};

/// Height below which a concentration point is treated as lying on the equator.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Bubble normalization `c0 = (n(n-2))^{(n-2)/4}`.
pub fn c0(n: usize) -> f64 {
    let nf = n as f64;
    (nf * (nf - 2.0)).powf((nf - 2.0) / 4.0)
}

/// Concentration point and rate of one bubble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleParam {
    pub a: SpherePoint,
    pub lambda: f64,
}

impl BubbleParam {
    pub fn new(a: SpherePoint, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 1.0 {
            return Err(Error::InvalidConfiguration(format!(
                "concentration rate {lambda} must be >= 1"
            )));
        }
        Ok(Self { a, lambda })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn on_boundary(&self) -> bool {
        self.a.height() <= BOUNDARY_TOL
    }
}

/// `lambda^2 + 1 + (1 - lambda^2) cos d`, written through the chord so that
/// it stays accurate when `x` is close to `a`.
fn bubble_denominator(lambda: f64, a: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let chord2 = (a - x).norm_squared();
    2.0 + (lambda * lambda - 1.0) * 0.5 * chord2
}

/// Standard bubble `delta_{a,lambda}(x)` on the sphere.
pub fn delta(b: &BubbleParam, x: &SpherePoint) -> f64 {
    let n = b.dim() as f64;
    let e = (n - 2.0) / 2.0;
    c0(b.dim()) * b.lambda.powf(e) * bubble_denominator(b.lambda, b.a.coords(), x.coords()).powf(-e)
}

/// Flat bubble `c0 mu^{(n-2)/2} (1 + mu^2 |x - c|^2)^{-(n-2)/2}` on R^n.
pub fn flat_bubble(n: usize, center: &DVector<f64>, mu: f64, x: &DVector<f64>) -> f64 {
    let e = (n as f64 - 2.0) / 2.0;
    c0(n) * mu.powf(e) * (1.0 + mu * mu * (x - center).norm_squared()).powf(-e)
}

/// Regular part `H(a, x) = |x - abar|^{2-n}` of the Neumann Green's function
/// on the half-space, `abar` the mirror image of `a`.
pub fn h_regular(a: &HalfSpacePoint, x: &HalfSpacePoint) -> f64 {
    let n = a.coords().len() as f64;
    (x.coords() - a.mirror()).norm().powf(2.0 - n)
}

/// Sphere regular part `(|a - bbar| / 2)^{2-n}`, `bbar` the reflection of `b`
/// across the equator. Half the ambient chord is the half-space distance
/// rescaled by the chart's conformal factors, so `H / (lambda_a lambda_b)^{(n-2)/2}`
/// agrees with its half-space counterpart in any boundary-centred chart.
pub fn h_sphere(a: &SpherePoint, b: &SpherePoint) -> f64 {
    h_sphere_at(a.coords(), b.coords())
}

/// `h_sphere` on raw ambient vectors.
pub fn h_sphere_at(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = (a.len() - 1) as f64;
    let mut bbar = b.clone();
    let last = bbar.len() - 1;
    bbar[last] = -bbar[last];
    (0.5 * (a - bbar).norm()).powf(2.0 - n)
}

/// Two-term approximation of the projected bubble of an interior point,
/// expressed in the half-space chart centred at the foot of `a`.
#[derive(Clone, Debug)]
pub struct PhiApprox {
    n: usize,
    frame: nalgebra::DMatrix<f64>,
    center: HalfSpacePoint,
    mu: f64,
    budget: f64,
}

impl PhiApprox {
    /// Centre of the pulled-back flat bubble.
    pub fn center(&self) -> &HalfSpacePoint {
        &self.center
    }

    /// Concentration rate of the pulled-back flat bubble.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Sup-norm budget `C / (mu^{(n+2)/2} d^n)` for the remainder `f`.
    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Chart coordinates of a sphere point.
    pub fn chart(&self, x: &SpherePoint) -> Result<HalfSpacePoint> {
        let y = SpherePoint::from_vector(&self.frame * x.coords())?;
        stereographic_to_halfspace(&y)
    }

    /// Pulled-back bubble in the chart.
    pub fn delta_chart(&self, x: &HalfSpacePoint) -> f64 {
        flat_bubble(self.n, self.center.coords(), self.mu, x.coords())
    }

    /// `delta + c0 H(a, .) / mu^{(n-2)/2}` in the chart.
    pub fn value_chart(&self, x: &HalfSpacePoint) -> f64 {
        let e = (self.n as f64 - 2.0) / 2.0;
        self.delta_chart(x) + c0(self.n) * h_regular(&self.center, x) / self.mu.powf(e)
    }
}

/// Projected-bubble approximation with remainder constant `budget_c`.
///
/// Boundary points return `BoundaryPoint`: there the projected bubble is the
/// bubble itself.
pub fn phi_approx(b: &BubbleParam, budget_c: f64) -> Result<PhiApprox> {
    if b.on_boundary() {
        return Err(Error::BoundaryPoint);
    }
    let n = b.dim();
    let foot =
        b.a.boundary_foot()
            .ok_or_else(|| Error::InvalidPoint("north pole has no unique boundary foot".into()))?;
    let frame = boundary_frame(&foot);
    let local = SpherePoint::from_vector(&frame * b.a.coords())?;
    let a_chart = stereographic_to_halfspace(&local)?;
    // Pullback of the sphere bubble is a flat bubble with shifted centre.
    let t2 = a_chart.coords().norm_squared();
    let lam2 = b.lambda * b.lambda;
    let c = (lam2 - 1.0) / (1.0 + t2);
    let k0 = lam2 / (1.0 + c);
    let mu = b.lambda / k0;
    let center = HalfSpacePoint::new((a_chart.coords() * (c / (1.0 + c))).iter().copied().collect())?;
    let height = center.coords()[n - 1];
    let budget = budget_c / (mu.powf((n as f64 + 2.0) / 2.0) * height.powi(n as i32));
    Ok(PhiApprox {
        n,
        frame,
        center,
        mu,
        budget,
    })
}

/// Interaction coefficient `eps_ij`.
pub fn epsilon(bi: &BubbleParam, bj: &BubbleParam) -> f64 {
    let n = bi.dim() as f64;
    interaction_base(bi, bj).powf(-(n - 2.0) / 2.0)
}

/// `lambda_i/lambda_j + lambda_j/lambda_i + lambda_i lambda_j |a_i - a_j|^2`.
fn interaction_base(bi: &BubbleParam, bj: &BubbleParam) -> f64 {
    let (li, lj) = (bi.lambda, bj.lambda);
    let chord2 = (bi.a.coords() - bj.a.coords()).norm_squared();
    li / lj + lj / li + li * lj * chord2
}

/// `(lambda_i d eps/d lambda_i, lambda_j d eps/d lambda_j)`.
pub fn epsilon_dlambda(bi: &BubbleParam, bj: &BubbleParam) -> (f64, f64) {
    let n = bi.dim() as f64;
    let (li, lj) = (bi.lambda, bj.lambda);
    let cross = li * lj * (bi.a.coords() - bj.a.coords()).norm_squared();
    let base = li / lj + lj / li + cross;
    let scale = -(n - 2.0) / 2.0 * base.powf(-n / 2.0);
    (scale * (li / lj - lj / li + cross), scale * (lj / li - li / lj + cross))
}

/// Ambient gradient of `eps_ij` in `a_i`: `(n-2) lambda_i lambda_j (a_j - a_i) eps^{n/(n-2)}`.
/// Its pairing with tangent vectors at `a_i` is the tangent derivative.
pub fn epsilon_da(bi: &BubbleParam, bj: &BubbleParam) -> DVector<f64> {
    let n = bi.dim() as f64;
    let pow = interaction_base(bi, bj).powf(-n / 2.0);
    (bj.a.coords() - bi.a.coords()) * ((n - 2.0) * bi.lambda * bj.lambda * pow)
}

/// Symmetric matrix of pairwise interactions with zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub eps: Vec<Vec<f64>>,
}

impl InteractionMatrix {
    pub fn from_bubbles(bubbles: &[BubbleParam]) -> Self {
        let m = bubbles.len();
        let mut eps = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i + 1..m {
                let e = epsilon(&bubbles[i], &bubbles[j]);
                eps[i][j] = e;
                eps[j][i] = e;
            }
        }
        Self { eps }
    }

    pub fn max(&self) -> f64 {
        self.eps.iter().flat_map(|row| row.iter().copied()).fold(0.0, f64::max)
    }

    /// Sum over `j != i` of `eps_ij`.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.eps[i].iter().sum()
    }
}

/// Geodesic distance between two concentration points.
pub fn bubble_distance(bi: &BubbleParam, bj: &BubbleParam) -> f64 {
    geodesic_distance(&bi.a, &bj.a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bubble(coords: Vec<f64>, lambda: f64) -> BubbleParam {
        BubbleParam::new(SpherePoint::normalized(DVector::from_vec(coords)).unwrap(), lambda).unwrap()
    }

    fn e1() -> Vec<f64> {
        vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    }

    #[test]
    fn delta_examples() {
        let c = c0(5);
        assert!((c - 15f64.powf(0.75)).abs() < 1e-12);
        let b = bubble(e1(), 1.0);
        let x = SpherePoint::axis(5, 3);
        assert!((delta(&b, &x) - c * 2f64.powf(-1.5)).abs() < 1e-12);
        let b = bubble(e1(), 7.0);
        let at_a = delta(&b, &b.a);
        assert!((at_a - c * 7f64.powf(1.5) * 2f64.powf(-1.5)).abs() < 1e-10);
    }

    #[test]
    fn epsilon_examples() {
        let b = bubble(e1(), 3.0);
        assert!((epsilon(&b, &b) - 2f64.powf(-1.5)).abs() < 1e-15);
        let bi = bubble(e1(), 1.0);
        let bj = bubble(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 1.0);
        assert!((epsilon(&bi, &bj) - 0.125).abs() < 1e-15);
        assert_eq!(epsilon_dlambda(&b, &b), (0.0, 0.0));
        assert!(epsilon_da(&b, &b).norm() == 0.0);
    }

    #[test]
    fn h_example() {
        let a = HalfSpacePoint::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let x = HalfSpacePoint::new(vec![0.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        assert!((h_regular(&a, &x) - 3f64.powi(-3)).abs() < 1e-15);
    }

    #[test]
    fn boundary_phi_is_delta() {
        let b = bubble(e1(), 5.0);
        assert_eq!(phi_approx(&b, 1.0).unwrap_err(), Error::BoundaryPoint);
    }

    #[test]
    fn phi_chart_centre_tracks_point() {
        let b = bubble(vec![0.6, 0.0, 0.0, 0.0, 0.0, 0.8], 1e4);
        let phi = phi_approx(&b, 1.0).unwrap();
        let t = (0.8f64.asin() / 2.0).tan();
        assert!((phi.center().coords()[4] - t).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn epsilon_symmetric(
            u in prop::collection::vec(-1.0f64..1.0, 6),
            v in prop::collection::vec(-1.0f64..1.0, 6),
            li in 1.0f64..1e3, lj in 1.0f64..1e3,
        ) {
            let mut u = u; u[5] = u[5].abs() + 1e-3;
            let mut v = v; v[5] = v[5].abs() + 1e-3;
            let bi = bubble(u, li);
            let bj = bubble(v, lj);
            let e = epsilon(&bi, &bj);
            prop_assert_eq!(e, epsilon(&bj, &bi));
            prop_assert!(e > 0.0 && e <= 2f64.powf(-1.5) + 1e-15);
            let (di, dj) = epsilon_dlambda(&bi, &bj);
            prop_assert!(-di - dj >= -1e-15 * e);
        }
    }
}
