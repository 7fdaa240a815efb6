//! Variational-inequality solvers: the basic projection method, the
//! extragradient method, and the sampled projected affine equation.
//!
//! VI(F, K) asks for x* in K with `<F(x*), x - x*> >= 0` for all x in K;
//! equivalently x* is a fixed point of `x -> Pi_K(x - gamma F(x))` for any
//! gamma > 0. The basic projection method needs strong monotonicity; the
//! extragradient method only needs monotone Lipschitz fields.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::FeasibleSet;
use crate::png::{project_weighted, MetricTensor};

/// The vector field of a VI: affine `F(x) = M x + q` or an arbitrary
/// callable.
pub enum VectorField {
    Affine { m: DMatrix<f64>, q: DVector<f64> },
    Callable(Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>),
}

impl VectorField {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            VectorField::Affine { m, q } => m * x + q,
            VectorField::Callable(f) => f(x),
        }
    }
}

/// A variational-inequality problem over a feasible set, with an optional
/// caller-supplied Lipschitz constant and strong-monotonicity modulus.
pub struct VIProblem {
    pub field: VectorField,
    pub set: FeasibleSet,
    pub lipschitz: Option<f64>,
    pub mu_mono: f64,
}

impl VIProblem {
    pub fn new(field: VectorField, set: FeasibleSet) -> Self {
        VIProblem {
            field,
            set,
            lipschitz: None,
            mu_mono: 0.0,
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    /// Supplied constant, or a power-iteration estimate of ||M|| for affine
    /// fields.
    pub fn lipschitz_constant(&self) -> Result<f64> {
        if let Some(l) = self.lipschitz {
            return Ok(l);
        }
        match &self.field {
            VectorField::Affine { m, .. } => {
                let gram = m.transpose() * m;
                Ok(crate::geometry::spectral_norm_symmetric(&gram).sqrt())
            }
            VectorField::Callable(_) => Err(Error::InvalidModel(
                "a Lipschitz constant must be supplied for callable fields".into(),
            )),
        }
    }
}

/// Scaling of the basic projection method: D = alpha I or a full SPD matrix.
pub enum ProjectionScaling {
    Alpha(f64),
    Matrix(MetricTensor),
}

/// Outcome of a VI solve. `converged = false` with the final iterate is the
/// expected outcome of the basic projection method on merely monotone
/// fields; it is reported rather than raised.
#[derive(Debug, Clone)]
pub struct VISolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub stepsize_warning: bool,
}

/// Natural residual `||x - Pi_K(x - gamma F(x))||`.
pub fn fixed_point_residual(problem: &VIProblem, x: &DVector<f64>, gamma: f64) -> Result<f64> {
    let moved = x - problem.field.eval(x) * gamma;
    Ok((x - problem.set.project(&moved)?).norm())
}

fn residuals_below(problem: &VIProblem, x: &DVector<f64>, tol: f64) -> Result<(f64, bool)> {
    let r1 = fixed_point_residual(problem, x, 1.0)?;
    let r01 = fixed_point_residual(problem, x, 0.1)?;
    Ok((r1.max(r01), r1 <= tol && r01 <= tol))
}

/// The basic projection method `x <- Pi_{K,D}(x - D^{-1} F(x))`, stopping on
/// the iterate residual. Convergence is guaranteed for strongly monotone
/// Lipschitz fields with D = alpha I, alpha > L^2 / (2 mu).
pub fn basic_projection_solve(
    problem: &VIProblem,
    scaling: &ProjectionScaling,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<VISolution> {
    let mut x = problem.set.project(x0)?;
    let mut residual = f64::INFINITY;
    for k in 0..max_iter {
        let f = problem.field.eval(&x);
        let next = match scaling {
            ProjectionScaling::Alpha(alpha) => {
                if *alpha <= 0.0 {
                    return Err(Error::StepSizeOutOfRange(format!(
                        "projection scaling must be positive, got {alpha}"
                    )));
                }
                problem.set.project(&(&x - &f / *alpha))?
            }
            ProjectionScaling::Matrix(d) => {
                project_weighted(&problem.set, d, &(&x - d.solve(&f)))?
            }
        };
        residual = (&next - &x).norm();
        x = next;
        if residual <= tol {
            return Ok(VISolution {
                x,
                iterations: k + 1,
                converged: true,
                residual,
                stepsize_warning: false,
            });
        }
    }
    Ok(VISolution {
        x,
        iterations: max_iter,
        converged: false,
        residual,
        stepsize_warning: false,
    })
}

/// The extragradient method:
///
/// ```text
/// y <- Pi_K(x - alpha F(x))
/// x <- Pi_K(x - alpha F(y))
/// ```
///
/// Steps outside `0 < alpha < 1/(sqrt(2) L)` are flagged (warning, not
/// fatal); alpha <= 0 is an error. Stops when the natural residual is below
/// tol at both gamma = 1 and gamma = 0.1.
pub fn extragradient_solve(
    problem: &VIProblem,
    alpha: f64,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<VISolution> {
    if alpha <= 0.0 {
        return Err(Error::StepSizeOutOfRange(format!(
            "extragradient stepsize must be positive, got {alpha}"
        )));
    }
    let stepsize_warning = match problem.lipschitz_constant() {
        Ok(l) => alpha >= 1.0 / (2f64.sqrt() * l),
        Err(_) => false,
    };
    let mut x = problem.set.project(x0)?;
    for k in 0..max_iter {
        let y = problem.set.project(&(&x - problem.field.eval(&x) * alpha))?;
        x = problem.set.project(&(&x - problem.field.eval(&y) * alpha))?;
        if k % 8 == 7 || k + 1 == max_iter {
            let (residual, ok) = residuals_below(problem, &x, tol)?;
            if ok {
                return Ok(VISolution {
                    x,
                    iterations: k + 1,
                    converged: true,
                    residual,
                    stepsize_warning,
                });
            }
        }
    }
    let (residual, converged) = residuals_below(problem, &x, tol)?;
    Ok(VISolution {
        x,
        iterations: max_iter,
        converged,
        residual,
        stepsize_warning,
    })
}

/// The projected affine equation `Phi r = Pi T(Phi r)` for an affine map
/// `T(x) = A x + b`, projected onto the span of Phi under the weighting Xi:
/// the reduced system is `C r = d` with `C = Phi^T Xi (I - A) Phi`,
/// `d = Phi^T Xi b`.
pub struct ProjectedAffineEquation {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub xi: DVector<f64>,
}

impl ProjectedAffineEquation {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, phi: DMatrix<f64>, xi: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || phi.nrows() != n || xi.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, |b| = {}, Phi has {} rows, |xi| = {}",
                a.nrows(),
                a.ncols(),
                b.len(),
                phi.nrows(),
                xi.len()
            )));
        }
        if xi.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidModel("xi entries must be positive".into()));
        }
        Ok(Self { a, b, phi, xi })
    }

    /// Dense `C = Phi^T Xi (I - A) Phi` and `d = Phi^T Xi b`.
    pub fn exact_c_d(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.a.nrows();
        let xi = DMatrix::from_diagonal(&self.xi);
        let c = self.phi.transpose() * &xi * (DMatrix::identity(n, n) - &self.a) * &self.phi;
        let d = self.phi.transpose() * &xi * &self.b;
        (c, d)
    }

    /// Solves the reduced system with exact C, d.
    pub fn solve(&self) -> Result<DVector<f64>> {
        let (c, d) = self.exact_c_d();
        c.lu().solve(&d).ok_or(Error::SingularBasis)
    }
}

/// Monte-Carlo estimate of (C, d) by row and column sampling:
/// rows i_t ~ xi, columns j_t ~ p(i_t, .) with p_ij proportional to |a_ij|
/// (importance weights keep the estimate unbiased):
///
/// ```text
/// C_k = 1/(k+1) sum_t phi(i_t) (phi(i_t) - a_{i_t j_t}/p_{i_t j_t} phi(j_t))^T
/// d_k = 1/(k+1) sum_t phi(i_t) b_{i_t}
/// ```
pub fn projected_equation_estimate(
    pe: &ProjectedAffineEquation,
    k_samples: usize,
    seed: u64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = pe.a.nrows();
    let s = pe.phi.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let cdf = |w: &[f64]| -> Vec<f64> {
        let mut acc = 0.0;
        w.iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect()
    };
    let xi_cdf = cdf(pe.xi.as_slice());
    // Column distributions proportional to |a_ij| per row.
    let row_weights: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| pe.a[(i, j)].abs()).collect())
        .collect();
    let row_cdfs: Vec<Vec<f64>> = row_weights.iter().map(|w| cdf(w)).collect();
    let row_mass: Vec<f64> = row_weights.iter().map(|w| w.iter().sum()).collect();

    let draw = |rng: &mut ChaCha8Rng, cdf: &[f64]| -> usize {
        let u: f64 = rng.gen::<f64>() * cdf[cdf.len() - 1];
        cdf.iter().position(|c| u < *c).unwrap_or(cdf.len() - 1)
    };

    let mut c_acc = DMatrix::zeros(s, s);
    let mut d_acc = DVector::zeros(s);
    for _ in 0..k_samples {
        let i = draw(&mut rng, &xi_cdf);
        let phi_i = pe.phi.row(i).transpose();
        let mut inner = phi_i.clone();
        if row_mass[i] > 0.0 {
            let j = draw(&mut rng, &row_cdfs[i]);
            let p_ij = row_weights[i][j] / row_mass[i];
            let phi_j = pe.phi.row(j).transpose();
            inner -= phi_j * (pe.a[(i, j)] / p_ij);
        }
        c_acc += &phi_i * inner.transpose();
        d_acc += &phi_i * pe.b[i];
    }
    (c_acc / k_samples as f64, d_acc / k_samples as f64)
}
