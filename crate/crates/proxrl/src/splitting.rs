//! Operator-splitting solvers for composite objectives with prox-friendly
//! parts: forward-backward (FOBOS), Douglas-Rachford, and ADMM.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::ProxFriendlyFunction;

/// A composite objective f + h where f is smooth with an L-Lipschitz
/// gradient and h is prox-friendly. The optional second prox-friendly part
/// covers two-function splitting (Douglas-Rachford, ADMM).
pub struct CompositeProblem {
    pub smooth_grad: Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub lipschitz: f64,
    pub nonsmooth: ProxFriendlyFunction,
    pub second: Option<ProxFriendlyFunction>,
}

impl CompositeProblem {
    pub fn new<G>(smooth_grad: G, lipschitz: f64, nonsmooth: ProxFriendlyFunction) -> Self
    where
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        CompositeProblem {
            smooth_grad: Box::new(smooth_grad),
            lipschitz,
            nonsmooth,
            second: None,
        }
    }
}

/// One forward-backward step: `prox_{alpha h}(theta - alpha grad f(theta))`.
/// Requires `0 < alpha <= 1/L`.
pub fn fobos_step(
    prob: &CompositeProblem,
    theta: &DVector<f64>,
    alpha: f64,
) -> Result<DVector<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0 / prob.lipschitz) {
        return Err(Error::StepSizeOutOfRange(format!(
            "forward-backward needs 0 < alpha <= 1/L = {}, got {alpha}",
            1.0 / prob.lipschitz
        )));
    }
    let forward = theta - (prob.smooth_grad)(theta) * alpha;
    prob.nonsmooth.prox(&forward, alpha)
}

/// Result of an operator-splitting solve.
#[derive(Debug, Clone)]
pub struct SplitSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
}

/// Douglas-Rachford iteration for 0 in A(x) + B(x) given the resolvents of A
/// and B as prox maps `(v, lambda) -> prox_{lambda f}(v)`:
///
/// ```text
/// x_{k+1/2} <- R_B(z_k)
/// z_{k+1/2} <- 2 x_{k+1/2} - z_k
/// x_{k+1}   <- R_A(z_{k+1/2})
/// z_{k+1}   <- z_k + x_{k+1} - x_{k+1/2}
/// ```
///
/// Stops on the fixed-point residual ||x_{k+1} - x_{k+1/2}|| < tol.
pub fn douglas_rachford<PA, PB>(
    prox_a: PA,
    prox_b: PB,
    lambda: f64,
    z0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SplitSolution>
where
    PA: Fn(&DVector<f64>, f64) -> Result<DVector<f64>>,
    PB: Fn(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    if lambda <= 0.0 {
        return Err(Error::StepSizeOutOfRange(format!(
            "splitting parameter must be positive, got {lambda}"
        )));
    }
    let mut z = z0.clone();
    for k in 0..max_iter {
        let x_half = prox_b(&z, lambda)?;
        let z_half = &x_half * 2.0 - &z;
        let x_next = prox_a(&z_half, lambda)?;
        let residual = (&x_next - &x_half).norm();
        z += &x_next - &x_half;
        if residual < tol {
            return Ok(SplitSolution {
                x: x_next,
                iterations: k + 1,
            });
        }
    }
    Err(Error::NonConvergence(max_iter))
}

/// ADMM for min f(x) + g(x) given both proximal maps: the Douglas-Rachford
/// skeleton with the resolvents replaced by the proximal minimizations of f
/// (applied to z_k) and g (applied to the reflected point).
pub fn admm<PF, PG>(
    prox_f: PF,
    prox_g: PG,
    lambda: f64,
    z0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SplitSolution>
where
    PF: Fn(&DVector<f64>, f64) -> Result<DVector<f64>>,
    PG: Fn(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    douglas_rachford(prox_g, prox_f, lambda, z0, tol, max_iter)
}
