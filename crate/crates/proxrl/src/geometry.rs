//! Proximal operators, projections, distance-generating functions, Legendre
//! transforms, and Bregman divergences.
//!
//! A distance-generating function `psi` is a continuously differentiable
//! strongly convex function. Its gradient maps primal points to the dual
//! space ([`BregmanGeometry::link_forward`]) and the gradient of the Legendre
//! transform `psi*` maps back ([`BregmanGeometry::link_inverse`]); the two are
//! mutual inverses. The induced Bregman divergence is
//! `D_psi(x, y) = psi(x) - psi(y) - <grad psi(y), x - y>`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const HALFSPACE_MAX_ITER: usize = 10_000;
const HALFSPACE_TOL: f64 = 1e-10;

/// Entrywise soft-thresholding, the proximal operator of `rho * ||x||_1`.
///
/// Component i maps to `sign(x_i) * max(|x_i| - rho, 0)`.
pub fn prox_l1(x: &DVector<f64>, rho: f64) -> Result<DVector<f64>> {
    if rho < 0.0 || !rho.is_finite() {
        return Err(Error::NegativeRho(rho));
    }
    Ok(x.map(|v| soft_threshold(v, rho)))
}

#[inline]
pub(crate) fn soft_threshold(v: f64, rho: f64) -> f64 {
    v.signum() * (v.abs() - rho).max(0.0)
}

/// Scale `y` onto the l2 ball of the given radius: `min(1, radius/||y||) * y`.
pub fn project_l2_ball(y: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = y.norm();
    if norm <= radius {
        y.clone()
    } else {
        y * (radius / norm)
    }
}

/// Clamp each component of `y` to `[-radius, radius]`.
pub fn project_linf_ball(y: &DVector<f64>, radius: f64) -> DVector<f64> {
    y.map(|v| v.clamp(-radius, radius))
}

/// Projection onto the unit l_n ball by the scaling rule
/// `min(1, 1/||y||_n) y`; for `n = inf` the operator is entrywise.
pub fn project_unit_ball_n(y: &DVector<f64>, n: f64) -> DVector<f64> {
    if n.is_infinite() {
        return project_linf_ball(y, 1.0);
    }
    let norm = y.iter().map(|v| v.abs().powf(n)).sum::<f64>().powf(1.0 / n);
    if norm <= 1.0 {
        y.clone()
    } else {
        y / norm
    }
}

/// Convex feasible sets with closed-form or small iterative projections.
#[derive(Debug, Clone)]
pub enum FeasibleSet {
    WholeSpace,
    Box { lo: DVector<f64>, hi: DVector<f64> },
    L2Ball { radius: f64 },
    LinfBall { radius: f64 },
    L1Ball { radius: f64 },
    Simplex { dim: usize },
    /// The polyhedron { x : A x <= b }.
    Halfspaces { a: DMatrix<f64>, b: DVector<f64> },
}

impl FeasibleSet {
    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(format!(
                "box bounds of length {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::InfeasibleSet);
        }
        Ok(FeasibleSet::Box { lo, hi })
    }

    pub fn l2_ball(radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::InfeasibleSet);
        }
        Ok(FeasibleSet::L2Ball { radius })
    }

    pub fn linf_ball(radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::InfeasibleSet);
        }
        Ok(FeasibleSet::LinfBall { radius })
    }

    pub fn l1_ball(radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::InfeasibleSet);
        }
        Ok(FeasibleSet::L1Ball { radius })
    }

    /// Builds { x : A x <= b }, probing feasibility by projecting the origin
    /// and checking that the result satisfies the system.
    pub fn halfspaces(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} constraint rows vs {} offsets",
                a.nrows(),
                b.len()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::InfeasibleSet);
        }
        let set = FeasibleSet::Halfspaces { a, b };
        let origin = DVector::zeros(set.halfspace_dim().unwrap());
        match set.project(&origin) {
            Ok(probe) if set.contains(&probe, 1e-6) => Ok(set),
            _ => Err(Error::InfeasibleSet),
        }
    }

    fn halfspace_dim(&self) -> Option<usize> {
        match self {
            FeasibleSet::Halfspaces { a, .. } => Some(a.ncols()),
            _ => None,
        }
    }

    /// Membership test up to an absolute tolerance on each constraint.
    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        match self {
            FeasibleSet::WholeSpace => true,
            FeasibleSet::Box { lo, hi } => y
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            FeasibleSet::L2Ball { radius } => y.norm() <= radius + tol,
            FeasibleSet::LinfBall { radius } => y.amax() <= radius + tol,
            FeasibleSet::L1Ball { radius } => y.iter().map(|v| v.abs()).sum::<f64>() <= radius + tol,
            FeasibleSet::Simplex { .. } => {
                y.iter().all(|v| *v >= -tol) && (y.sum() - 1.0).abs() <= tol
            }
            FeasibleSet::Halfspaces { a, b } => {
                let r = a * y - b;
                r.iter().all(|v| *v <= tol)
            }
        }
    }

    /// Euclidean projection onto the set.
    ///
    /// Boxes and norm balls are closed-form, the simplex and l1 ball use the
    /// sorting-based algorithm, and halfspace systems run projected gradient
    /// on the dual to a 1e-10 residual.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            FeasibleSet::WholeSpace => Ok(y.clone()),
            FeasibleSet::Box { lo, hi } => {
                if y.len() != lo.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "point of length {} vs box of length {}",
                        y.len(),
                        lo.len()
                    )));
                }
                Ok(DVector::from_fn(y.len(), |i, _| y[i].clamp(lo[i], hi[i])))
            }
            FeasibleSet::L2Ball { radius } => Ok(project_l2_ball(y, *radius)),
            FeasibleSet::LinfBall { radius } => Ok(project_linf_ball(y, *radius)),
            FeasibleSet::L1Ball { radius } => Ok(project_l1_ball(y, *radius)),
            FeasibleSet::Simplex { dim } => {
                if y.len() != *dim {
                    return Err(Error::DimensionMismatch(format!(
                        "point of length {} vs simplex of dimension {}",
                        y.len(),
                        dim
                    )));
                }
                Ok(project_simplex(y))
            }
            FeasibleSet::Halfspaces { a, b } => project_halfspaces(a, b, y),
        }
    }
}

/// Projection onto { x >= 0, sum x = 1 } by sorting (Held et al.).
fn project_simplex(y: &DVector<f64>) -> DVector<f64> {
    let n = y.len();
    let mut u: Vec<f64> = y.iter().copied().collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (k, &v) in u.iter().enumerate() {
        css += v;
        let t = (css - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            rho = k + 1;
            theta = t;
        }
    }
    debug_assert!(rho > 0);
    DVector::from_fn(n, |i, _| (y[i] - theta).max(0.0))
}

/// Projection onto the l1 ball of the given radius by reduction to a simplex
/// projection of the absolute values.
fn project_l1_ball(y: &DVector<f64>, radius: f64) -> DVector<f64> {
    let l1: f64 = y.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return y.clone();
    }
    let abs = DVector::from_fn(y.len(), |i, _| y[i].abs() / radius);
    let p = project_simplex(&abs);
    DVector::from_fn(y.len(), |i, _| y[i].signum() * p[i] * radius)
}

/// Euclidean projection onto { x : A x <= b } via projected gradient ascent on
/// the dual: x = y - A^T lambda with lambda >= 0.
fn project_halfspaces(a: &DMatrix<f64>, b: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if a.ncols() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "point of length {} vs constraints over {} variables",
            y.len(),
            a.ncols()
        )));
    }
    let slack = a * y - b;
    if slack.iter().all(|v| *v <= 0.0) {
        return Ok(y.clone());
    }
    let gram = a * a.transpose();
    // 1/||A A^T|| is a safe stepsize for the dual gradient iteration.
    let step = 1.0 / spectral_norm_symmetric(&gram).max(1e-300);
    let m = a.nrows();
    let mut lambda = DVector::zeros(m);
    for k in 0..HALFSPACE_MAX_ITER {
        let grad = &gram * &lambda - &slack;
        let next = DVector::from_fn(m, |i, _| (lambda[i] - step * grad[i]).max(0.0));
        let delta = (&next - &lambda).amax();
        lambda = next;
        if delta <= HALFSPACE_TOL * step.max(1.0) {
            let x = y - a.transpose() * &lambda;
            let worst = (a * &x - b).max();
            if worst <= 1e-8 {
                return Ok(x);
            }
        }
        if k == HALFSPACE_MAX_ITER - 1 {
            return Err(Error::NonConvergence(HALFSPACE_MAX_ITER));
        }
    }
    unreachable!()
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration. The
/// start vector is pseudo-random so it does not sit in a null space of
/// structured matrices.
pub(crate) fn spectral_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| (0.7 + (i as f64 + 1.0).sin()).abs() + 0.1);
    v /= v.norm();
    let mut lam = 0.0;
    for _ in 0..200 {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        lam = norm;
    }
    lam
}

/// Distance-generating functions and the primal/dual link maps they induce.
#[derive(Debug, Clone)]
pub enum BregmanGeometry {
    /// psi(w) = 1/2 ||w||_2^2; the link maps are the identity.
    Euclidean,
    /// psi(w) = 1/2 ||w||_q^2 with 1/p + 1/q = 1. The forward link is the
    /// p-norm link function; large p interpolates towards multiplicative
    /// updates.
    PNorm { p: f64, q: f64 },
    /// psi(w) = sum w_i log w_i on the strictly positive orthant.
    NegEntropy,
    /// psi(w) = 1/2 w^T G w for symmetric positive-definite G.
    Quadratic {
        g: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
    /// psi(w) = 1/2 sum h_i w_i^2 for a positive vector h.
    DiagMahalanobis { h: DVector<f64> },
}

/// Relative eigenvalue tolerance for the positive-definiteness check.
pub const PD_EIGEN_TOL: f64 = 1e-10;

impl BregmanGeometry {
    pub fn euclidean() -> Self {
        BregmanGeometry::Euclidean
    }

    pub fn p_norm(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::DomainViolation(format!(
                "p-norm geometry requires finite p > 1, got {p}"
            )));
        }
        Ok(BregmanGeometry::PNorm { p, q: p / (p - 1.0) })
    }

    pub fn neg_entropy() -> Self {
        BregmanGeometry::NegEntropy
    }

    /// Requires `g` symmetric with smallest eigenvalue > 1e-10 times the largest.
    pub fn quadratic(g: DMatrix<f64>) -> Result<Self> {
        check_spd(&g)?;
        let chol = Cholesky::new(g.clone()).ok_or(Error::NonPositiveDefinite)?;
        Ok(BregmanGeometry::Quadratic { g, chol })
    }

    pub fn diag_mahalanobis(h: DVector<f64>) -> Result<Self> {
        if h.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(Error::NonPositiveDefinite);
        }
        Ok(BregmanGeometry::DiagMahalanobis { h })
    }

    /// Strong-convexity modulus of psi.
    pub fn mu(&self) -> f64 {
        match self {
            BregmanGeometry::Euclidean => 1.0,
            // 1/2 ||.||_q^2 is (q-1)-strongly convex w.r.t. ||.||_q for q in (1, 2].
            BregmanGeometry::PNorm { q, .. } => (q - 1.0).min(1.0),
            BregmanGeometry::NegEntropy => 1.0,
            BregmanGeometry::Quadratic { g, .. } => {
                g.clone().symmetric_eigen().eigenvalues.min()
            }
            BregmanGeometry::DiagMahalanobis { h } => h.min(),
        }
    }

    /// Value of the distance-generating function psi.
    pub fn psi(&self, w: &DVector<f64>) -> Result<f64> {
        match self {
            BregmanGeometry::Euclidean => Ok(0.5 * w.norm_squared()),
            BregmanGeometry::PNorm { q, .. } => Ok(0.5 * norm_p(w, *q).powi(2)),
            BregmanGeometry::NegEntropy => {
                check_positive(w)?;
                Ok(w.iter().map(|v| v * v.ln()).sum())
            }
            BregmanGeometry::Quadratic { g, .. } => Ok(0.5 * (w.transpose() * g * w)[0]),
            BregmanGeometry::DiagMahalanobis { h } => {
                Ok(0.5 * w.iter().zip(h.iter()).map(|(v, hi)| hi * v * v).sum::<f64>())
            }
        }
    }

    /// Value of the Legendre transform psi*.
    pub fn psi_star(&self, theta: &DVector<f64>) -> Result<f64> {
        match self {
            BregmanGeometry::Euclidean => Ok(0.5 * theta.norm_squared()),
            BregmanGeometry::PNorm { p, .. } => Ok(0.5 * norm_p(theta, *p).powi(2)),
            BregmanGeometry::NegEntropy => Ok(theta.iter().map(|v| (v - 1.0).exp()).sum()),
            BregmanGeometry::Quadratic { chol, .. } => {
                Ok(0.5 * theta.dot(&chol.solve(theta)))
            }
            BregmanGeometry::DiagMahalanobis { h } => Ok(0.5
                * theta
                    .iter()
                    .zip(h.iter())
                    .map(|(v, hi)| v * v / hi)
                    .sum::<f64>()),
        }
    }

    /// The link function grad psi, mapping primal weights to the dual space.
    ///
    /// For the p-norm geometry the gradient at the origin is taken to be zero
    /// (the continuous extension of the formula), so the zero vector maps to
    /// itself under every geometry that contains it.
    pub fn link_forward(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            BregmanGeometry::Euclidean => Ok(w.clone()),
            BregmanGeometry::PNorm { q, .. } => Ok(pnorm_link(w, *q)),
            BregmanGeometry::NegEntropy => {
                check_positive(w)?;
                Ok(w.map(|v| 1.0 + v.ln()))
            }
            BregmanGeometry::Quadratic { g, .. } => Ok(g * w),
            BregmanGeometry::DiagMahalanobis { h } => {
                Ok(DVector::from_fn(w.len(), |i, _| h[i] * w[i]))
            }
        }
    }

    /// The inverse link grad psi* = (grad psi)^{-1}, mapping dual weights back.
    pub fn link_inverse(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            BregmanGeometry::Euclidean => Ok(theta.clone()),
            BregmanGeometry::PNorm { p, .. } => Ok(pnorm_link(theta, *p)),
            BregmanGeometry::NegEntropy => Ok(theta.map(|v| (v - 1.0).exp())),
            BregmanGeometry::Quadratic { chol, .. } => Ok(chol.solve(theta)),
            BregmanGeometry::DiagMahalanobis { h } => {
                Ok(DVector::from_fn(theta.len(), |i, _| theta[i] / h[i]))
            }
        }
    }

    /// Bregman divergence D_psi(x, y) = psi(x) - psi(y) - <grad psi(y), x - y>.
    pub fn bregman_div(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "bregman_div over lengths {} and {}",
                x.len(),
                y.len()
            )));
        }
        let grad_y = self.link_forward(y)?;
        Ok(self.psi(x)? - self.psi(y)? - grad_y.dot(&(x - y)))
    }

    /// Divergence of the conjugate, D_{psi*}(a, b); satisfies the duality
    /// identity D_psi(u, v) = D_{psi*}(grad psi(v), grad psi(u)) -- note the
    /// swapped arguments, which matters for asymmetric divergences.
    pub fn bregman_div_dual(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "bregman_div_dual over lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        let grad_b = self.link_inverse(b)?;
        Ok(self.psi_star(a)? - self.psi_star(b)? - grad_b.dot(&(a - b)))
    }
}

fn check_positive(w: &DVector<f64>) -> Result<()> {
    if w.iter().any(|v| *v <= 0.0) {
        return Err(Error::DomainViolation(
            "negative-entropy geometry requires strictly positive entries".into(),
        ));
    }
    Ok(())
}

pub(crate) fn check_spd(g: &DMatrix<f64>) -> Result<()> {
    if g.nrows() != g.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix is not square",
            g.nrows(),
            g.ncols()
        )));
    }
    let asym = (g - g.transpose()).amax();
    if asym > 1e-12 * g.amax().max(1.0) {
        return Err(Error::NonPositiveDefinite);
    }
    let eig = g.clone().symmetric_eigen().eigenvalues;
    let max = eig.max();
    if eig.min() <= PD_EIGEN_TOL * max || max <= 0.0 {
        return Err(Error::NonPositiveDefinite);
    }
    Ok(())
}

fn norm_p(v: &DVector<f64>, p: f64) -> f64 {
    v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Component j of the p-norm link: sign(v_j) |v_j|^{e-1} / ||v||_e^{e-2}.
fn pnorm_link(v: &DVector<f64>, e: f64) -> DVector<f64> {
    if e == 2.0 {
        return v.clone();
    }
    let n = norm_p(v, e);
    if n == 0.0 {
        return DVector::zeros(v.len());
    }
    let scale = n.powf(e - 2.0);
    v.map(|x| x.signum() * x.abs().powf(e - 1.0) / scale)
}

/// Functions with cheap proximal operators: zero, scaled l1 norms, and
/// indicators of feasible sets.
#[derive(Debug, Clone)]
pub enum ProxFriendlyFunction {
    Zero,
    L1 { rho: f64 },
    Indicator { set: FeasibleSet },
}

impl ProxFriendlyFunction {
    pub fn l1(rho: f64) -> Result<Self> {
        if rho < 0.0 || !rho.is_finite() {
            return Err(Error::NegativeRho(rho));
        }
        Ok(ProxFriendlyFunction::L1 { rho })
    }

    /// prox_{scale * h}(v). The prox of zero is the identity, the prox of an
    /// indicator is the projection (independent of the scale).
    pub fn prox(&self, v: &DVector<f64>, scale: f64) -> Result<DVector<f64>> {
        match self {
            ProxFriendlyFunction::Zero => Ok(v.clone()),
            ProxFriendlyFunction::L1 { rho } => prox_l1(v, rho * scale),
            ProxFriendlyFunction::Indicator { set } => set.project(v),
        }
    }

    /// Function value (infinite outside an indicator's set).
    pub fn eval(&self, v: &DVector<f64>) -> f64 {
        match self {
            ProxFriendlyFunction::Zero => 0.0,
            ProxFriendlyFunction::L1 { rho } => rho * v.iter().map(|x| x.abs()).sum::<f64>(),
            ProxFriendlyFunction::Indicator { set } => {
                if set.contains(v, 1e-9) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn prox_l1_shrinks() {
        assert_abs_diff_eq!(prox_l1(&dv(&[1.2]), 0.5).unwrap()[0], 0.7, epsilon = 1e-15);
        let z = prox_l1(&dv(&[0.3, -0.3]), 0.5).unwrap();
        assert_eq!(z, dv(&[0.0, 0.0]));
        assert_abs_diff_eq!(prox_l1(&dv(&[-1.2]), 0.5).unwrap()[0], -0.7, epsilon = 1e-15);
    }

    #[test]
    fn prox_l1_rejects_negative_rho() {
        assert!(matches!(
            prox_l1(&dv(&[1.0]), -0.1),
            Err(Error::NegativeRho(_))
        ));
    }

    /// 1-D grid oracle: prox_h(x) minimizes rho|u| + 1/2 (u - x)^2 per coordinate.
    #[test]
    fn prox_l1_matches_grid_minimization() {
        let x = dv(&[0.9, -2.0, 0.05]);
        let rho = 0.1;
        let p = prox_l1(&x, rho).unwrap();
        for i in 0..x.len() {
            let mut best_u = -3.0;
            let mut best_val = f64::INFINITY;
            let mut u: f64 = -3.0;
            while u <= 3.0 {
                let val = rho * u.abs() + 0.5 * (u - x[i]).powi(2);
                if val < best_val {
                    best_val = val;
                    best_u = u;
                }
                u += 1e-4;
            }
            assert!(
                (p[i] - best_u).abs() <= 1e-4,
                "coordinate {i}: prox {} vs grid {}",
                p[i],
                best_u
            );
        }
    }

    #[test]
    fn euclidean_link_is_identity() {
        let g = BregmanGeometry::euclidean();
        let w = dv(&[3.0, -1.0]);
        assert_eq!(g.link_forward(&w).unwrap(), w);
        assert_eq!(g.link_inverse(&w).unwrap(), w);
    }

    #[test]
    fn zero_maps_to_zero() {
        let w = DVector::zeros(3);
        for geom in [
            BregmanGeometry::euclidean(),
            BregmanGeometry::p_norm(4.0).unwrap(),
            BregmanGeometry::p_norm(1.5).unwrap(),
        ] {
            assert_eq!(geom.link_forward(&w).unwrap(), w);
        }
    }

    /// Direct evaluation of the p-norm link formula at q = 3 (i.e. p = 1.5).
    #[test]
    fn pnorm_link_hand_evaluated() {
        let geom = BregmanGeometry::p_norm(1.5).unwrap();
        let w = dv(&[1.0, 1.0]);
        // component j: sign(1) * 1^{q-1} / ||w||_q^{q-2} with ||w||_3 = 2^{1/3}.
        let expected = 1.0 / 2f64.powf(1.0 / 3.0);
        let out = geom.link_forward(&w).unwrap();
        assert_abs_diff_eq!(out[0], expected, epsilon = 1e-14);
        assert_abs_diff_eq!(out[1], expected, epsilon = 1e-14);
    }

    #[test]
    fn pnorm_round_trip() {
        let geom = BregmanGeometry::p_norm(4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let w = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
            let back = geom.link_inverse(&geom.link_forward(&w).unwrap()).unwrap();
            assert!((&back - &w).norm() <= 1e-8 * (1.0 + w.norm()));
        }
    }

    #[test]
    fn quadratic_link_inverse_solves() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let geom = BregmanGeometry::quadratic(g.clone()).unwrap();
        let w = dv(&[1.0, -2.0]);
        let theta = &g * &w;
        let back = geom.link_inverse(&theta).unwrap();
        assert!((back - w).norm() < 1e-12);
    }

    #[test]
    fn quadratic_rejects_indefinite() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(BregmanGeometry::quadratic(g).is_err());
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.2, 1.0]);
        assert!(BregmanGeometry::quadratic(g).is_err());
    }

    #[test]
    fn bregman_euclidean_is_half_squared_distance() {
        let geom = BregmanGeometry::euclidean();
        let x = dv(&[1.0, 2.0]);
        let y = dv(&[-0.5, 0.5]);
        let d = geom.bregman_div(&x, &y).unwrap();
        assert_abs_diff_eq!(d, 0.5 * (&x - &y).norm_squared(), epsilon = 1e-14);
        assert_abs_diff_eq!(geom.bregman_div(&x, &x).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn bregman_neg_entropy_is_kl_on_simplex() {
        let geom = BregmanGeometry::neg_entropy();
        let x = dv(&[0.2, 0.3, 0.5]);
        let y = dv(&[0.4, 0.4, 0.2]);
        let kl: f64 = x
            .iter()
            .zip(y.iter())
            .map(|(xi, yi)| xi * (xi / yi).ln())
            .sum();
        assert_abs_diff_eq!(geom.bregman_div(&x, &y).unwrap(), kl, epsilon = 1e-12);
    }

    #[test]
    fn neg_entropy_rejects_nonpositive() {
        let geom = BregmanGeometry::neg_entropy();
        assert!(matches!(
            geom.link_forward(&dv(&[0.5, -0.1])),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn l2_ball_projection() {
        let p = project_l2_ball(&dv(&[3.0, 4.0]), 1.0);
        assert_abs_diff_eq!(p[0], 0.6, epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], 0.8, epsilon = 1e-14);
        let inside = dv(&[0.1, 0.2]);
        assert_eq!(project_l2_ball(&inside, 1.0), inside);
    }

    /// Scaling oracle: the projection is the closest point among radial
    /// scalings t * y/||y|| with t in [0, r], found by grid search.
    #[test]
    fn l2_ball_projection_matches_scaling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let y = DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0));
            let r = rng.gen_range(0.5..2.0);
            let p = project_l2_ball(&y, r);
            assert!(p.norm() <= r + 1e-12);
            let dir = &y / y.norm();
            let mut best = f64::INFINITY;
            let mut t = 0.0;
            while t <= r {
                best = best.min((&dir * t - &y).norm());
                t += 1e-4;
            }
            assert!(
                (&p - &y).norm() <= best + 1e-3,
                "projection distance {} vs oracle {best}",
                (&p - &y).norm()
            );
        }
    }

    #[test]
    fn linf_ball_projection_clamps() {
        let p = project_linf_ball(&dv(&[2.0, -0.5]), 1.0);
        assert_eq!(p, dv(&[1.0, -0.5]));
        let inside = dv(&[0.3, -0.9]);
        assert_eq!(project_linf_ball(&inside, 1.0), inside);
    }

    #[test]
    fn whole_space_projection_is_identity() {
        let y = dv(&[5.0, -7.0]);
        assert_eq!(FeasibleSet::WholeSpace.project(&y).unwrap(), y);
    }

    #[test]
    fn simplex_projection_keeps_feasible_points() {
        let set = FeasibleSet::Simplex { dim: 2 };
        let y = dv(&[0.5, 0.5]);
        let p = set.project(&y).unwrap();
        assert!((p - y).norm() < 1e-14);
    }

    /// KKT hand-solve: projecting (1, 1) onto {x1 + x2 <= 1, x >= 0} lands on
    /// the face at (0.5, 0.5).
    #[test]
    fn halfspace_projection_hand_solved() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let b = dv(&[1.0, 0.0, 0.0]);
        let set = FeasibleSet::halfspaces(a, b).unwrap();
        let p = set.project(&dv(&[1.0, 1.0])).unwrap();
        assert!((p - dv(&[0.5, 0.5])).norm() < 1e-8);
    }

    #[test]
    fn halfspace_infeasible_system_rejected() {
        // x <= -1 and x >= 1 simultaneously.
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = dv(&[-1.0, -1.0]);
        assert!(matches!(
            FeasibleSet::halfspaces(a, b),
            Err(Error::InfeasibleSet)
        ));
    }

    /// The simplex sorting algorithm agrees with the halfspace dual solver,
    /// which is an independent route to the same projection.
    #[test]
    fn simplex_projection_matches_halfspace_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_row_slice(
            5,
            3,
            &[
                -1.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, //
                0.0, 0.0, -1.0, //
                1.0, 1.0, 1.0, //
                -1.0, -1.0, -1.0,
            ],
        );
        let b = dv(&[0.0, 0.0, 0.0, 1.0, -1.0]);
        let poly = FeasibleSet::halfspaces(a, b).unwrap();
        let simplex = FeasibleSet::Simplex { dim: 3 };
        for _ in 0..10 {
            let y = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let p1 = simplex.project(&y).unwrap();
            let p2 = poly.project(&y).unwrap();
            assert!(
                (&p1 - &p2).norm() < 1e-7,
                "simplex {p1:?} vs halfspace {p2:?}"
            );
        }
    }

    #[test]
    fn box_constructor_validates_bounds() {
        assert!(FeasibleSet::boxed(dv(&[1.0]), dv(&[0.0])).is_err());
    }

    fn random_geometry(seed: u64) -> (BregmanGeometry, bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match rng.gen_range(0..4) {
            0 => (BregmanGeometry::euclidean(), false),
            1 => (
                BregmanGeometry::p_norm([1.5, 2.0, 4.0, 10.0][rng.gen_range(0..4)]).unwrap(),
                false,
            ),
            2 => {
                let b = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
                let g = &b * b.transpose() + DMatrix::identity(3, 3) * 0.5;
                (BregmanGeometry::quadratic(g).unwrap(), false)
            }
            _ => (BregmanGeometry::neg_entropy(), true),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_link_maps(seed in 0u64..500) {
            let (geom, positive) = random_geometry(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let w = DVector::from_fn(3, |_, _| {
                if positive { rng.gen_range(0.05..3.0) } else { rng.gen_range(-3.0..3.0) }
            });
            let back = geom.link_inverse(&geom.link_forward(&w).unwrap()).unwrap();
            prop_assert!((&back - &w).norm() <= 1e-8 * (1.0 + w.norm()));
        }

        #[test]
        fn bregman_nonnegative_and_dual_identity(seed in 0u64..500) {
            let (geom, positive) = random_geometry(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1234);
            let sample = |rng: &mut ChaCha8Rng| DVector::from_fn(3, |_, _| {
                if positive { rng.gen_range(0.05..3.0) } else { rng.gen_range(-3.0..3.0) }
            });
            let u = sample(&mut rng);
            let v = sample(&mut rng);
            let d = geom.bregman_div(&u, &v).unwrap();
            prop_assert!(d >= -1e-12, "negative divergence {d}");
            prop_assert!(geom.bregman_div(&u, &u).unwrap() <= 1e-12);
            let dual = geom
                .bregman_div_dual(&geom.link_forward(&v).unwrap(), &geom.link_forward(&u).unwrap())
                .unwrap();
            prop_assert!((d - dual).abs() <= 1e-8 * (1.0 + d.abs()), "primal {d} vs dual {dual}");
        }

        #[test]
        fn projections_idempotent_and_nonexpansive(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = match rng.gen_range(0..5) {
                0 => FeasibleSet::boxed(dv(&[-1.0, -0.5]), dv(&[1.0, 2.0])).unwrap(),
                1 => FeasibleSet::l2_ball(1.5).unwrap(),
                2 => FeasibleSet::linf_ball(0.8).unwrap(),
                3 => FeasibleSet::l1_ball(1.2).unwrap(),
                _ => FeasibleSet::Simplex { dim: 2 },
            };
            let y1 = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let y2 = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let p1 = set.project(&y1).unwrap();
            let p2 = set.project(&y2).unwrap();
            prop_assert!((&set.project(&p1).unwrap() - &p1).norm() <= 1e-10);
            prop_assert!((&p1 - &p2).norm() <= (&y1 - &y2).norm() + 1e-12);
        }
    }

    /// Central-difference check of grad_u D(u, v) = grad psi(u) - grad psi(v).
    #[test]
    fn bregman_gradient_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..12u64 {
            let (geom, positive) = random_geometry(seed);
            let sample = |rng: &mut ChaCha8Rng| {
                DVector::from_fn(3, |_, _| {
                    if positive {
                        rng.gen_range(0.3..2.0)
                    } else {
                        let mag = rng.gen_range(0.2..2.0);
                        if rng.gen::<bool>() {
                            mag
                        } else {
                            -mag
                        }
                    }
                })
            };
            let u = sample(&mut rng);
            let v = sample(&mut rng);
            let analytic = geom.link_forward(&u).unwrap() - geom.link_forward(&v).unwrap();
            let h = 1e-5;
            for i in 0..3 {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                let fd =
                    (geom.bregman_div(&up, &v).unwrap() - geom.bregman_div(&dn, &v).unwrap())
                        / (2.0 * h);
                let denom = analytic[i].abs().max(1e-3);
                assert!(
                    (fd - analytic[i]).abs() / denom <= 1e-5,
                    "component {i}: fd {fd} vs analytic {}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn prox_friendly_variants() {
        let v = dv(&[2.0, -0.4]);
        assert_eq!(ProxFriendlyFunction::Zero.prox(&v, 0.7).unwrap(), v);
        let l1 = ProxFriendlyFunction::l1(0.5).unwrap();
        assert_eq!(l1.prox(&v, 2.0).unwrap(), dv(&[1.0, 0.0]));
        let ind = ProxFriendlyFunction::Indicator {
            set: FeasibleSet::linf_ball(1.0).unwrap(),
        };
        assert_eq!(ind.prox(&v, 123.0).unwrap(), dv(&[1.0, -0.4]));
    }
}
