//! The off-policy gradient-TD family as primal-dual stochastic gradient
//! methods: GTD, GTD2, TDC, the residual-gradient baseline, the mirror-prox
//! accelerated GTD2-MP and TDC-MP, and RO-TD with primal averaging.
//!
//! Every sampled update here is a true stochastic gradient of the primal-dual
//! objective: its expectation over one transition equals the deterministic
//! update built from `E[A_t]`, `E[b_t]`. The `expected` submodule applies the
//! same recursions with those exact expectations, which is how the
//! convergence experiments are run without sampling noise.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{project_unit_ball_n, prox_l1, ProxFriendlyFunction};
use crate::mdp::TransitionSample;
use crate::schedule::StepSize;

/// Primal/dual state of a GTD-family run. The dual vector is `y` for the
/// NEU-based GTD and `w` for the MSPBE-based GTD2/TDC. The dual stepsize is
/// `beta = eta * alpha`, recomputed each step.
#[derive(Debug, Clone)]
pub struct SaddleIterate {
    pub theta: DVector<f64>,
    pub dual: DVector<f64>,
    pub t: usize,
    pub alpha: StepSize,
    pub eta: f64,
    pub reg: ProxFriendlyFunction,
}

impl SaddleIterate {
    pub fn new(dim: usize, alpha: StepSize, eta: f64) -> Result<Self> {
        if eta <= 0.0 {
            return Err(Error::StepSizeOutOfRange(format!(
                "eta must be positive, got {eta}"
            )));
        }
        Ok(SaddleIterate {
            theta: DVector::zeros(dim),
            dual: DVector::zeros(dim),
            t: 0,
            alpha,
            eta,
            reg: ProxFriendlyFunction::Zero,
        })
    }

    pub fn with_regularizer(mut self, reg: ProxFriendlyFunction) -> Self {
        self.reg = reg;
        self
    }

    fn stepsizes(&self) -> (f64, f64) {
        let a = self.alpha.at(self.t);
        (a, self.eta * a)
    }

    fn check_dims(&self, sample: &TransitionSample) -> Result<()> {
        if sample.phi.len() != self.theta.len() || sample.phi_next.len() != self.theta.len() {
            return Err(Error::DimensionMismatch(format!(
                "sample features of length {} for iterate of dimension {}",
                sample.phi.len(),
                self.theta.len()
            )));
        }
        Ok(())
    }
}

fn delta(sample: &TransitionSample, theta: &DVector<f64>, gamma: f64) -> f64 {
    sample.r + gamma * sample.phi_next.dot(theta) - sample.phi.dot(theta)
}

/// GTD (NEU objective): y tracks E[delta phi], theta follows the correlation
/// with the dual. Both legs share the primal stepsize.
///
/// ```text
/// y     <- y + alpha (delta phi - y)
/// theta <- prox_{alpha h}(theta + alpha (phi - gamma phi') (y^T phi))
/// ```
pub fn gtd_step(iter: &SaddleIterate, sample: &TransitionSample, gamma: f64) -> Result<SaddleIterate> {
    iter.check_dims(sample)?;
    let (alpha, _) = iter.stepsizes();
    let d = delta(sample, &iter.theta, gamma);
    let mut next = iter.clone();
    next.dual = &iter.dual + (&sample.phi * d - &iter.dual) * alpha;
    let dir = (&sample.phi - &sample.phi_next * gamma) * iter.dual.dot(&sample.phi);
    next.theta = iter.reg.prox(&(&iter.theta + dir * alpha), alpha)?;
    next.t += 1;
    Ok(next)
}

/// GTD2 (MSPBE objective):
///
/// ```text
/// w     <- w + beta (delta - phi^T w) phi
/// theta <- prox_{alpha h}(theta + alpha (phi - gamma phi') (w^T phi))
/// ```
pub fn gtd2_step(
    iter: &SaddleIterate,
    sample: &TransitionSample,
    gamma: f64,
) -> Result<SaddleIterate> {
    iter.check_dims(sample)?;
    let (alpha, beta) = iter.stepsizes();
    let d = delta(sample, &iter.theta, gamma);
    let mut next = iter.clone();
    next.dual = &iter.dual + &sample.phi * (beta * (d - sample.phi.dot(&iter.dual)));
    let dir = (&sample.phi - &sample.phi_next * gamma) * iter.dual.dot(&sample.phi);
    next.theta = iter.reg.prox(&(&iter.theta + dir * alpha), alpha)?;
    next.t += 1;
    Ok(next)
}

/// TDC (gradient-corrected TD):
///
/// ```text
/// theta <- prox_{alpha h}(theta + alpha delta phi - alpha gamma phi' (phi^T w))
/// w     <- w + beta (delta - phi^T w) phi
/// ```
pub fn tdc_step(
    iter: &SaddleIterate,
    sample: &TransitionSample,
    gamma: f64,
) -> Result<SaddleIterate> {
    iter.check_dims(sample)?;
    let (alpha, beta) = iter.stepsizes();
    let d = delta(sample, &iter.theta, gamma);
    let mut next = iter.clone();
    let correction = &sample.phi_next * (gamma * sample.phi.dot(&iter.dual));
    let moved = &iter.theta + (&sample.phi * d - correction) * alpha;
    next.theta = iter.reg.prox(&moved, alpha)?;
    next.dual = &iter.dual + &sample.phi * (beta * (d - sample.phi.dot(&iter.dual)));
    next.t += 1;
    Ok(next)
}

/// Residual gradient: theta <- prox_{alpha h}(theta + alpha delta (phi - gamma phi')).
/// Converges to the MSTDE minimizer rather than the NEU/MSPBE fixed point.
pub fn residual_gradient_step(
    iter: &SaddleIterate,
    sample: &TransitionSample,
    gamma: f64,
) -> Result<SaddleIterate> {
    iter.check_dims(sample)?;
    let (alpha, _) = iter.stepsizes();
    let d = delta(sample, &iter.theta, gamma);
    let mut next = iter.clone();
    let dir = (&sample.phi - &sample.phi_next * gamma) * d;
    next.theta = iter.reg.prox(&(&iter.theta + dir * alpha), alpha)?;
    next.t += 1;
    Ok(next)
}

/// GTD2-MP: the mirror-prox acceleration of GTD2. Extrapolates both legs,
/// recomputes the TD error at the midpoint with the same transition, then
/// updates from the original point using the midpoint quantities.
pub fn gtd2_mp_step(
    iter: &SaddleIterate,
    sample: &TransitionSample,
    gamma: f64,
) -> Result<SaddleIterate> {
    iter.check_dims(sample)?;
    let (alpha, beta) = iter.stepsizes();
    let d = delta(sample, &iter.theta, gamma);
    let w_half = &iter.dual + &sample.phi * (beta * (d - sample.phi.dot(&iter.dual)));
    let dir = (&sample.phi - &sample.phi_next * gamma) * iter.dual.dot(&sample.phi);
    let theta_half = iter.reg.prox(&(&iter.theta + dir * alpha), alpha)?;

    let d_half = delta(sample, &theta_half, gamma);
    let mut next = iter.clone();
    next.dual = &iter.dual + &sample.phi * (beta * (d_half - sample.phi.dot(&w_half)));
    let dir = (&sample.phi - &sample.phi_next * gamma) * w_half.dot(&sample.phi);
    next.theta = iter.reg.prox(&(&iter.theta + dir * alpha), alpha)?;
    next.t += 1;
    Ok(next)
}

/// TDC-MP: the mirror-prox acceleration of TDC.
pub fn tdc_mp_step(
    iter: &SaddleIterate,
    sample: &TransitionSample,
    gamma: f64,
) -> Result<SaddleIterate> {
    iter.check_dims(sample)?;
    let (alpha, beta) = iter.stepsizes();
    let d = delta(sample, &iter.theta, gamma);
    let w_half = &iter.dual + &sample.phi * (beta * (d - sample.phi.dot(&iter.dual)));
    let correction = &sample.phi_next * (gamma * sample.phi.dot(&iter.dual));
    let theta_half = iter
        .reg
        .prox(&(&iter.theta + (&sample.phi * d - correction) * alpha), alpha)?;

    let d_half = delta(sample, &theta_half, gamma);
    let mut next = iter.clone();
    next.dual = &iter.dual + &sample.phi * (beta * (d_half - sample.phi.dot(&w_half)));
    let correction = &sample.phi_next * (gamma * sample.phi.dot(&w_half));
    next.theta = iter
        .reg
        .prox(&(&iter.theta + (&sample.phi * d_half - correction) * alpha), alpha)?;
    next.t += 1;
    Ok(next)
}

/// RO-TD state: the stacked primal `x = [w; theta]`, the dual `y` of the
/// norm-based loss, separate l1 thresholds for the two primal blocks, the
/// conjugate norm pair (m, n), and stepsize-weighted averaging accumulators.
#[derive(Debug, Clone)]
pub struct RotdIterate {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub t: usize,
    pub alpha: StepSize,
    pub eta: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub norm_pair: (f64, f64),
    sum_ax: DVector<f64>,
    sum_ay: DVector<f64>,
    sum_a: f64,
}

impl RotdIterate {
    pub fn new(dim: usize, alpha: StepSize, eta: f64, rho1: f64, rho2: f64) -> Result<Self> {
        if eta <= 0.0 {
            return Err(Error::StepSizeOutOfRange(format!(
                "eta must be positive, got {eta}"
            )));
        }
        if rho1 < 0.0 {
            return Err(Error::NegativeRho(rho1));
        }
        if rho2 < 0.0 {
            return Err(Error::NegativeRho(rho2));
        }
        Ok(RotdIterate {
            x: DVector::zeros(2 * dim),
            y: DVector::zeros(2 * dim),
            t: 0,
            alpha,
            eta,
            rho1,
            rho2,
            norm_pair: (2.0, 2.0),
            sum_ax: DVector::zeros(2 * dim),
            sum_ay: DVector::zeros(2 * dim),
            sum_a: 0.0,
        })
    }

    /// Conjugate exponents (m, n) with 1/m + 1/n = 1.
    pub fn with_norm_pair(mut self, m: f64, n: f64) -> Result<Self> {
        let conj = if m.is_infinite() {
            1.0
        } else if n.is_infinite() {
            f64::INFINITY // marks (1, inf); the check below handles it
        } else {
            m / (m - 1.0)
        };
        let ok = if m.is_infinite() {
            n == 1.0
        } else if n.is_infinite() {
            m == 1.0
        } else {
            m > 1.0 && (n - conj).abs() <= 1e-12
        };
        if !ok {
            return Err(Error::StepSizeOutOfRange(format!(
                "(m, n) = ({m}, {n}) are not conjugate exponents"
            )));
        }
        self.norm_pair = (m, n);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.x.len() / 2
    }

    pub fn w(&self) -> DVector<f64> {
        self.x.rows(0, self.dim()).into()
    }

    pub fn theta(&self) -> DVector<f64> {
        self.x.rows(self.dim(), self.dim()).into()
    }
}

/// One RO-TD step. The products `y^T A_t` and `A_t x - b_t` are assembled
/// from inner products in O(d) without forming `A_t`:
///
/// ```text
/// x_{t+1/2} = x - alpha (y^T A_t)^T        y_{t+1/2} = y + alpha (A_t x - b_t)
/// theta     = S_{alpha rho1}(theta_{t+1/2})   w = S_{alpha rho2}(w_{t+1/2})
/// y_{t+1}   = Pi_n(y_{t+1/2})
/// ```
///
/// followed by the stepsize-weighted averaging update.
pub fn rotd_step(iter: &RotdIterate, sample: &TransitionSample, gamma: f64) -> Result<RotdIterate> {
    let d = iter.dim();
    if sample.phi.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "sample features of length {} for RO-TD over dimension {d}",
            sample.phi.len()
        )));
    }
    let alpha = iter.alpha.at(iter.t);
    let mut next = iter.clone();
    // Record the pre-update iterate in the running averages.
    next.sum_ax += &iter.x * alpha;
    next.sum_ay += &iter.y * alpha;
    next.sum_a += alpha;

    let w = iter.x.rows(0, d);
    let theta = iter.x.rows(d, d);
    let y1 = iter.y.rows(0, d);
    let y2 = iter.y.rows(d, d);
    let dlt = sample.r + gamma * sample.phi_next.dot(&theta) - sample.phi.dot(&theta);
    let diff = &sample.phi - &sample.phi_next * gamma;

    // y^T A_t = [ (eta y1.phi + gamma y2.phi') phi^T , ((eta y1 + y2).phi) (phi - gamma phi')^T ]
    let ya_w = &sample.phi * (iter.eta * y1.dot(&sample.phi) + gamma * y2.dot(&sample.phi_next));
    let ya_theta = &diff * (iter.eta * y1.dot(&sample.phi) + y2.dot(&sample.phi));
    // A_t x - b_t = [ -eta (delta - phi^T w) phi ; gamma (phi^T w) phi' - delta phi ]
    let phi_w = sample.phi.dot(&w);
    let ax_b_top = &sample.phi * (-iter.eta * (dlt - phi_w));
    let ax_b_bot = &sample.phi_next * (gamma * phi_w) - &sample.phi * dlt;

    let w_half = DVector::from(w) - ya_w * alpha;
    let theta_half = DVector::from(theta) - ya_theta * alpha;
    let w_next = prox_l1(&w_half, alpha * iter.rho2)?;
    let theta_next = prox_l1(&theta_half, alpha * iter.rho1)?;
    next.x.rows_mut(0, d).copy_from(&w_next);
    next.x.rows_mut(d, d).copy_from(&theta_next);

    let mut y_half = iter.y.clone();
    {
        let mut top = y_half.rows_mut(0, d);
        top += ax_b_top * alpha;
    }
    {
        let mut bot = y_half.rows_mut(d, d);
        bot += ax_b_bot * alpha;
    }
    next.y = project_unit_ball_n(&y_half, iter.norm_pair.1);
    next.t += 1;
    Ok(next)
}

/// Stepsize-weighted averages of the iterates seen so far.
pub fn primal_average(iter: &RotdIterate) -> Result<(DVector<f64>, DVector<f64>)> {
    if iter.sum_a <= 0.0 {
        return Err(Error::EmptyHistory);
    }
    Ok((&iter.sum_ax / iter.sum_a, &iter.sum_ay / iter.sum_a))
}

/// The same recursions driven by exact expectations instead of samples.
pub mod expected {
    use super::*;
    use crate::mdp::{ExpectedDynamics, GtdLinearSystem};

    /// Expected TD(0): theta <- theta + alpha E[delta phi].
    pub fn td0_step(dynamics: &ExpectedDynamics, theta: &DVector<f64>, alpha: f64) -> DVector<f64> {
        theta + dynamics.e_delta_phi(theta) * alpha
    }

    pub fn gtd_step(dynamics: &ExpectedDynamics, iter: &SaddleIterate) -> Result<SaddleIterate> {
        let (alpha, _) = iter.stepsizes();
        let g = dynamics.e_delta_phi(&iter.theta);
        let mut next = iter.clone();
        next.dual = &iter.dual + (&g - &iter.dual) * alpha;
        let dir = &dynamics.a_bar * &iter.dual;
        next.theta = iter.reg.prox(&(&iter.theta + dir * alpha), alpha)?;
        next.t += 1;
        Ok(next)
    }

    pub fn gtd2_step(dynamics: &ExpectedDynamics, iter: &SaddleIterate) -> Result<SaddleIterate> {
        let (alpha, beta) = iter.stepsizes();
        let g = dynamics.e_delta_phi(&iter.theta);
        let mut next = iter.clone();
        next.dual = &iter.dual + (&g - &dynamics.m * &iter.dual) * beta;
        let dir = &dynamics.a_bar * &iter.dual;
        next.theta = iter.reg.prox(&(&iter.theta + dir * alpha), alpha)?;
        next.t += 1;
        Ok(next)
    }

    pub fn tdc_step(dynamics: &ExpectedDynamics, iter: &SaddleIterate) -> Result<SaddleIterate> {
        let (alpha, beta) = iter.stepsizes();
        let g = dynamics.e_delta_phi(&iter.theta);
        let mut next = iter.clone();
        let correction = &dynamics.fp * &iter.dual * dynamics.gamma;
        next.theta = iter.reg.prox(&(&iter.theta + (&g - correction) * alpha), alpha)?;
        next.dual = &iter.dual + (&g - &dynamics.m * &iter.dual) * beta;
        next.t += 1;
        Ok(next)
    }

    /// Expected residual gradient. E[delta (phi - gamma phi')] couples delta
    /// and phi' within one transition, so it is assembled from per-state
    /// conditional expectations rather than the product of expectations.
    pub fn residual_gradient_direction(
        mrp: &crate::mdp::MarkovRewardProcess,
        basis: &crate::mdp::FeatureBasis,
        theta: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let phi = basis.matrix()?;
        let gamma = mrp.gamma();
        let n = mrp.n_states();
        let d = phi.ncols();
        let mut dir = DVector::zeros(d);
        for s in 0..n {
            let phi_s = phi.row(s).transpose();
            for s2 in 0..n {
                let p = mrp.transitions()[(s, s2)];
                if p == 0.0 {
                    continue;
                }
                let phi_n = phi.row(s2).transpose();
                let dlt = mrp.rewards()[s] + gamma * phi_n.dot(theta) - phi_s.dot(theta);
                dir += (&phi_s - &phi_n * gamma) * (mrp.xi()[s] * p * dlt);
            }
        }
        Ok(dir)
    }

    pub fn gtd2_mp_step(dynamics: &ExpectedDynamics, iter: &SaddleIterate) -> Result<SaddleIterate> {
        let (alpha, beta) = iter.stepsizes();
        let g = dynamics.e_delta_phi(&iter.theta);
        let w_half = &iter.dual + (&g - &dynamics.m * &iter.dual) * beta;
        let theta_half = iter
            .reg
            .prox(&(&iter.theta + &dynamics.a_bar * &iter.dual * alpha), alpha)?;
        let g_half = dynamics.e_delta_phi(&theta_half);
        let mut next = iter.clone();
        next.dual = &iter.dual + (&g_half - &dynamics.m * &w_half) * beta;
        next.theta = iter
            .reg
            .prox(&(&iter.theta + &dynamics.a_bar * &w_half * alpha), alpha)?;
        next.t += 1;
        Ok(next)
    }

    pub fn tdc_mp_step(dynamics: &ExpectedDynamics, iter: &SaddleIterate) -> Result<SaddleIterate> {
        let (alpha, beta) = iter.stepsizes();
        let g = dynamics.e_delta_phi(&iter.theta);
        let w_half = &iter.dual + (&g - &dynamics.m * &iter.dual) * beta;
        let correction = &dynamics.fp * &iter.dual * dynamics.gamma;
        let theta_half = iter
            .reg
            .prox(&(&iter.theta + (&g - correction) * alpha), alpha)?;
        let g_half = dynamics.e_delta_phi(&theta_half);
        let mut next = iter.clone();
        next.dual = &iter.dual + (&g_half - &dynamics.m * &w_half) * beta;
        let correction = &dynamics.fp * &w_half * dynamics.gamma;
        next.theta = iter
            .reg
            .prox(&(&iter.theta + (&g_half - correction) * alpha), alpha)?;
        next.t += 1;
        Ok(next)
    }

    /// Expected RO-TD over the dense saddle system.
    pub fn rotd_step(sys: &GtdLinearSystem, iter: &RotdIterate) -> Result<RotdIterate> {
        let d = iter.dim();
        if sys.m.nrows() != d {
            return Err(Error::DimensionMismatch(format!(
                "system over dimension {} for RO-TD iterate over {d}",
                sys.m.nrows()
            )));
        }
        let alpha = iter.alpha.at(iter.t);
        let mut next = iter.clone();
        next.sum_ax += &iter.x * alpha;
        next.sum_ay += &iter.y * alpha;
        next.sum_a += alpha;

        let x_half = &iter.x - sys.a.transpose() * &iter.y * alpha;
        let y_half = &iter.y + (&sys.a * &iter.x - &sys.b) * alpha;
        let w_next = prox_l1(&x_half.rows(0, d).into(), alpha * iter.rho2)?;
        let theta_next = prox_l1(&x_half.rows(d, d).into(), alpha * iter.rho1)?;
        next.x.rows_mut(0, d).copy_from(&w_next);
        next.x.rows_mut(d, d).copy_from(&theta_next);
        next.y = project_unit_ball_n(&y_half, iter.norm_pair.1);
        next.t += 1;
        Ok(next)
    }
}
