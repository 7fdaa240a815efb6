//! On-policy TD in primal-dual form: TD(0), mirror-descent TD(lambda), its
//! sparse and composite variants, and mirror-descent Q-learning.
//!
//! Mirror steps update the dual weights `theta = grad psi(w)` with the TD
//! error along the eligibility trace and map back through the inverse link,
//! so the Euclidean geometry reproduces plain TD(lambda) exactly.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{soft_threshold, BregmanGeometry};
use crate::mdp::TransitionSample;
use crate::schedule::StepSize;

/// Guard on the composite variant's diagonal scaling before a feature has
/// fired.
const DIAG_EPS: f64 = 1e-8;

/// Joint state of a mirror-TD run: primal weights, their dual image, the
/// eligibility trace, and the diagonal covariance accumulator used by the
/// composite variant.
#[derive(Debug, Clone)]
pub struct TdIterate {
    pub w: DVector<f64>,
    pub theta_dual: DVector<f64>,
    pub trace: DVector<f64>,
    pub t: usize,
    pub alpha: StepSize,
    pub lambda: f64,
    pub beta_sparsity: f64,
    pub geom: BregmanGeometry,
    pub g_diag: DVector<f64>,
}

impl TdIterate {
    pub fn new(dim: usize, alpha: StepSize, lambda: f64, geom: BregmanGeometry) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::StepSizeOutOfRange(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        let w = DVector::zeros(dim);
        let theta_dual = geom.link_forward(&w)?;
        Ok(TdIterate {
            w,
            theta_dual,
            trace: DVector::zeros(dim),
            t: 0,
            alpha,
            lambda,
            beta_sparsity: 0.0,
            geom,
            g_diag: DVector::zeros(dim),
        })
    }

    pub fn with_sparsity(mut self, beta: f64) -> Result<Self> {
        if beta < 0.0 {
            return Err(Error::NegativeRho(beta));
        }
        self.beta_sparsity = beta;
        Ok(self)
    }

    /// Reset the eligibility trace, as at episode boundaries.
    pub fn reset_trace(&mut self) {
        self.trace.fill(0.0);
    }

    fn check_dims(&self, phi: &DVector<f64>) -> Result<()> {
        if phi.len() != self.w.len() {
            return Err(Error::DimensionMismatch(format!(
                "features of length {} for iterate of dimension {}",
                phi.len(),
                self.w.len()
            )));
        }
        Ok(())
    }
}

pub fn td_error(sample: &TransitionSample, w: &DVector<f64>, gamma: f64) -> f64 {
    sample.r + gamma * sample.phi_next.dot(w) - sample.phi.dot(w)
}

/// Plain TD(0): theta <- theta + alpha delta phi.
pub fn td0_step(
    iter: &TdIterate,
    sample: &TransitionSample,
    gamma: f64,
    alpha: f64,
) -> Result<TdIterate> {
    iter.check_dims(&sample.phi)?;
    let delta = td_error(sample, &iter.w, gamma);
    let mut next = iter.clone();
    next.w += &sample.phi * (alpha * delta);
    next.theta_dual = next.w.clone();
    next.t += 1;
    Ok(next)
}

/// Mirror-descent TD(lambda): accumulate the trace, move the dual weights
/// along delta * e, and map back through the inverse link.
pub fn mirror_td_step(iter: &TdIterate, sample: &TransitionSample, gamma: f64) -> Result<TdIterate> {
    mirror_step_impl(iter, sample, gamma, Truncation::None)
}

/// Sparse mirror-descent TD(lambda): soft-threshold the dual weights by
/// alpha * beta before mapping back.
pub fn sparse_mirror_td_step(
    iter: &TdIterate,
    sample: &TransitionSample,
    gamma: f64,
) -> Result<TdIterate> {
    mirror_step_impl(iter, sample, gamma, Truncation::Dual)
}

enum Truncation {
    None,
    Dual,
}

fn mirror_step_impl(
    iter: &TdIterate,
    sample: &TransitionSample,
    gamma: f64,
    truncation: Truncation,
) -> Result<TdIterate> {
    iter.check_dims(&sample.phi)?;
    let alpha = iter.alpha.at(iter.t);
    let mut next = iter.clone();
    next.trace = &iter.trace * (gamma * iter.lambda) + &sample.phi;
    let delta = td_error(sample, &iter.w, gamma);
    let mut dual = iter.geom.link_forward(&iter.w)? + &next.trace * (alpha * delta);
    if let Truncation::Dual = truncation {
        let cut = alpha * iter.beta_sparsity;
        dual = dual.map(|v| soft_threshold(v, cut));
    }
    next.w = iter.geom.link_inverse(&dual)?;
    next.theta_dual = dual;
    next.t += 1;
    Ok(next)
}

/// Composite mirror-descent TD(lambda) with the adaptive diagonal Mahalanobis
/// scaling H = sqrt(diag(G)), G accumulated from feature outer products:
///
/// ```text
/// w_i <- sign(w_i + alpha xi_i / H_ii) max(|w_i + alpha xi_i / H_ii| - alpha beta / H_ii, 0)
/// ```
///
/// with xi = delta * e the TD update (the negative of the implied
/// subgradient, so the step descends and beta = 0 with H = I reproduces the
/// plain TD(lambda) step). Entries whose features have never fired keep H_ii
/// floored at a small epsilon.
pub fn composite_mirror_td_step(
    iter: &TdIterate,
    sample: &TransitionSample,
    gamma: f64,
) -> Result<TdIterate> {
    iter.check_dims(&sample.phi)?;
    let alpha = iter.alpha.at(iter.t);
    let mut next = iter.clone();
    let delta = td_error(sample, &iter.w, gamma);
    next.trace = &iter.trace * (gamma * iter.lambda) + &sample.phi;
    let update = &next.trace * delta;
    for i in 0..iter.w.len() {
        next.g_diag[i] += sample.phi[i] * sample.phi[i];
        let h = next.g_diag[i].sqrt().max(DIAG_EPS);
        let shifted = iter.w[i] + alpha * update[i] / h;
        next.w[i] = soft_threshold(shifted, alpha * iter.beta_sparsity / h);
    }
    next.theta_dual = next.w.clone();
    next.t += 1;
    Ok(next)
}

/// One action-value transition: features of the taken (state, action) pair,
/// the reward, and the features of every action available at the next state
/// (empty when terminal).
#[derive(Debug, Clone)]
pub struct ActionSample {
    pub phi_sa: DVector<f64>,
    pub r: f64,
    pub next_action_features: Vec<DVector<f64>>,
}

/// Mirror-descent Q-learning step: greedy TD error over the next state's
/// actions, then the standard mirror (or sparse mirror) update.
pub fn mirror_q_step(iter: &TdIterate, sample: &ActionSample, gamma: f64) -> Result<TdIterate> {
    iter.check_dims(&sample.phi_sa)?;
    let alpha = iter.alpha.at(iter.t);
    let best_next = sample
        .next_action_features
        .iter()
        .map(|phi| phi.dot(&iter.w))
        .fold(f64::NEG_INFINITY, f64::max);
    let next_value = if sample.next_action_features.is_empty() {
        0.0
    } else {
        best_next
    };
    let delta = sample.r + gamma * next_value - sample.phi_sa.dot(&iter.w);
    let mut next = iter.clone();
    next.trace = &iter.trace * (gamma * iter.lambda) + &sample.phi_sa;
    let mut dual = iter.geom.link_forward(&iter.w)? + &next.trace * (alpha * delta);
    if iter.beta_sparsity > 0.0 {
        let cut = alpha * iter.beta_sparsity;
        dual = dual.map(|v| soft_threshold(v, cut));
    }
    next.w = iter.geom.link_inverse(&dual)?;
    next.theta_dual = dual;
    next.t += 1;
    Ok(next)
}

/// Epsilon-greedy action selection over action values.
pub fn epsilon_greedy<R: Rng>(rng: &mut R, q_values: &[f64], epsilon: f64) -> usize {
    debug_assert!(!q_values.is_empty());
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q_values.len())
    } else {
        let mut best = 0;
        for (i, v) in q_values.iter().enumerate() {
            if *v > q_values[best] {
                best = i;
            }
        }
        best
    }
}
