//! Natural gradient descent, its mirror-descent equivalence, projected
//! natural gradient with the compatible metric-weighted projection, the
//! Euclidean-projection and plain projected-subgradient baselines, Fisher
//! matrix estimation, and the constrained quadratic case study.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::geometry::{check_spd, BregmanGeometry, FeasibleSet};

/// A symmetric positive-definite metric tensor with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct MetricTensor {
    g: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl MetricTensor {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        check_spd(&g)?;
        let chol = Cholesky::new(g.clone()).ok_or(Error::NonPositiveDefinite)?;
        Ok(MetricTensor { g, chol })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

/// Natural gradient descent step: x - alpha G^{-1} grad.
pub fn natural_gradient_step(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    metric: &MetricTensor,
    alpha: f64,
) -> DVector<f64> {
    x - metric.solve(grad) * alpha
}

/// The same step computed through the mirror-descent route with the
/// quadratic distance generator psi(x) = 1/2 x^T G x:
/// `grad psi*(grad psi(x) - alpha grad)`. Agrees with
/// [`natural_gradient_step`] to numerical precision.
pub fn mirror_step_quadratic(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    metric: &MetricTensor,
    alpha: f64,
) -> Result<DVector<f64>> {
    let geom = BregmanGeometry::quadratic(metric.matrix().clone())?;
    let dual = geom.link_forward(x)? - grad * alpha;
    geom.link_inverse(&dual)
}

/// Weighted projection onto a feasible set: argmin over the set of
/// 1/2 (y - x)^T G (y - x).
///
/// Boxes under a diagonal metric are separable and clamp in closed form;
/// polyhedral sets go through exact active-set enumeration (small systems)
/// or projected dual ascent, to a 1e-10 KKT residual.
pub fn project_weighted(
    set: &FeasibleSet,
    metric: &MetricTensor,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    if is_identity(metric) {
        return set.project(y);
    }
    match set {
        FeasibleSet::WholeSpace => Ok(y.clone()),
        FeasibleSet::Box { lo, hi } if is_diagonal(metric.matrix()) => {
            Ok(DVector::from_fn(y.len(), |i, _| y[i].clamp(lo[i], hi[i])))
        }
        FeasibleSet::LinfBall { radius } if is_diagonal(metric.matrix()) => {
            Ok(y.map(|v| v.clamp(-radius, *radius)))
        }
        FeasibleSet::Box { lo, hi } => {
            let (a, b) = box_as_halfspaces(lo, hi);
            project_weighted_polyhedron(&a, &b, metric, y)
        }
        FeasibleSet::LinfBall { radius } => {
            let n = y.len();
            let lo = DVector::from_element(n, -radius);
            let hi = DVector::from_element(n, *radius);
            let (a, b) = box_as_halfspaces(&lo, &hi);
            project_weighted_polyhedron(&a, &b, metric, y)
        }
        FeasibleSet::Halfspaces { a, b } => project_weighted_polyhedron(a, b, metric, y),
        FeasibleSet::Simplex { dim } => {
            let (a, b) = simplex_as_halfspaces(*dim);
            project_weighted_polyhedron(&a, &b, metric, y)
        }
        FeasibleSet::L1Ball { radius } => {
            let n = y.len();
            if n > 12 {
                return Err(Error::InvalidDimensions(
                    "weighted l1-ball projection is only supported up to 12 dimensions".into(),
                ));
            }
            // All sign patterns of the l1 ball's facets.
            let rows = 1usize << n;
            let mut a = DMatrix::zeros(rows, n);
            for r in 0..rows {
                for j in 0..n {
                    a[(r, j)] = if r >> j & 1 == 1 { 1.0 } else { -1.0 };
                }
            }
            let b = DVector::from_element(rows, *radius);
            project_weighted_polyhedron(&a, &b, metric, y)
        }
        FeasibleSet::L2Ball { .. } => Err(Error::InvalidDimensions(
            "the weighted projection onto an l2 ball is not supported; use polyhedral sets".into(),
        )),
    }
}

fn is_identity(metric: &MetricTensor) -> bool {
    let g = metric.matrix();
    let n = g.nrows();
    (g - DMatrix::identity(n, n)).amax() == 0.0
}

fn is_diagonal(g: &DMatrix<f64>) -> bool {
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if i != j && g[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

fn box_as_halfspaces(lo: &DVector<f64>, hi: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = lo.len();
    let mut a = DMatrix::zeros(2 * n, n);
    let mut b = DVector::zeros(2 * n);
    for i in 0..n {
        a[(i, i)] = 1.0;
        b[i] = hi[i];
        a[(n + i, i)] = -1.0;
        b[n + i] = -lo[i];
    }
    (a, b)
}

fn simplex_as_halfspaces(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = DMatrix::zeros(n + 2, n);
    let mut b = DVector::zeros(n + 2);
    for i in 0..n {
        a[(i, i)] = -1.0;
    }
    for j in 0..n {
        a[(n, j)] = 1.0;
        a[(n + 1, j)] = -1.0;
    }
    b[n] = 1.0;
    b[n + 1] = -1.0;
    (a, b)
}

const ENUMERATION_LIMIT: usize = 16;
const DUAL_ASCENT_ITERS: usize = 200_000;
const KKT_TOL: f64 = 1e-10;

/// G-weighted projection onto { x : A x <= b }.
fn project_weighted_polyhedron(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    metric: &MetricTensor,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
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
    if a.nrows() <= ENUMERATION_LIMIT {
        if let Some(x) = active_set_enumeration(a, b, metric, y) {
            return Ok(x);
        }
    }
    dual_ascent(a, b, metric, y)
}

/// Exact enumeration over subsets of active constraints. For each subset S,
/// x = y - G^{-1} A_S^T lambda with A_S x = b_S; keep the KKT-feasible
/// candidate with the smallest objective.
fn active_set_enumeration(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    metric: &MetricTensor,
    y: &DVector<f64>,
) -> Option<DVector<f64>> {
    let m = a.nrows();
    let n = a.ncols();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        if active.len() > n {
            continue;
        }
        let x = if active.is_empty() {
            y.clone()
        } else {
            let k = active.len();
            let mut a_s = DMatrix::zeros(k, n);
            let mut b_s = DVector::zeros(k);
            for (row, &i) in active.iter().enumerate() {
                a_s.row_mut(row).copy_from(&a.row(i));
                b_s[row] = b[i];
            }
            // A_S G^{-1} A_S^T lambda = A_S y - b_S
            let ginv_at = {
                let mut cols = DMatrix::zeros(n, k);
                for (col, _) in active.iter().enumerate() {
                    let rhs: DVector<f64> = a_s.row(col).transpose();
                    cols.set_column(col, &metric.solve(&rhs));
                }
                cols
            };
            let kkt = &a_s * &ginv_at;
            let rhs = &a_s * y - &b_s;
            let lambda = kkt.lu().solve(&rhs)?;
            if lambda.iter().any(|l| *l < -1e-12) {
                continue;
            }
            y - ginv_at * lambda
        };
        let viol = (a * &x - b).max();
        if viol > KKT_TOL.max(1e-9 * b.amax().max(1.0)) {
            continue;
        }
        let diff = &x - y;
        let obj = 0.5 * diff.dot(&(metric.matrix() * &diff));
        if best.as_ref().map_or(true, |(v, _)| obj < *v) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Projected gradient ascent on the dual of the weighted projection.
fn dual_ascent(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    metric: &MetricTensor,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = a.nrows();
    let mut ginv_at = DMatrix::zeros(a.ncols(), m);
    for i in 0..m {
        let rhs: DVector<f64> = a.row(i).transpose();
        ginv_at.set_column(i, &metric.solve(&rhs));
    }
    let gram = a * &ginv_at;
    let step = 1.0 / crate::geometry::spectral_norm_symmetric(&gram).max(1e-300);
    let slack = a * y - b;
    let mut lambda = DVector::zeros(m);
    for _ in 0..DUAL_ASCENT_ITERS {
        let grad = &gram * &lambda - &slack;
        let next = DVector::from_fn(m, |i, _| (lambda[i] - step * grad[i]).max(0.0));
        let delta = (&next - &lambda).amax();
        lambda = next;
        if delta <= KKT_TOL * step.max(1.0) {
            let x = y - &ginv_at * &lambda;
            if (a * &x - b).max() <= 1e-8 {
                return Ok(x);
            }
        }
    }
    Err(Error::NonConvergence(DUAL_ASCENT_ITERS))
}

/// Projected natural gradient: the natural step followed by the compatible
/// G-weighted projection.
pub fn png_step(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    metric: &MetricTensor,
    alpha: f64,
    set: &FeasibleSet,
) -> Result<DVector<f64>> {
    project_weighted(set, metric, &natural_gradient_step(x, grad, metric, alpha))
}

/// Projected subgradient descent: Euclidean step, Euclidean projection.
pub fn psg_step(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    alpha: f64,
    set: &FeasibleSet,
) -> Result<DVector<f64>> {
    set.project(&(x - grad * alpha))
}

/// Natural step with the (incompatible) Euclidean projection.
pub fn png_euclid_step(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    metric: &MetricTensor,
    alpha: f64,
    set: &FeasibleSet,
) -> Result<DVector<f64>> {
    set.project(&natural_gradient_step(x, grad, metric, alpha))
}

/// Additive regularization applied before inverting Fisher estimates, since
/// early estimates are rank deficient.
pub const FISHER_PD_FLOOR: f64 = 1e-8;

/// Running estimate of a Fisher information matrix from score vectors,
/// starting at beta0 * I.
#[derive(Debug, Clone)]
pub struct FisherEstimator {
    g: DMatrix<f64>,
    pub beta0: f64,
}

impl FisherEstimator {
    pub fn new(dim: usize, beta0: f64) -> Result<Self> {
        if beta0 <= 0.0 {
            return Err(Error::NonPositiveDefinite);
        }
        Ok(FisherEstimator {
            g: DMatrix::identity(dim, dim) * beta0,
            beta0,
        })
    }

    pub fn estimate(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// The current estimate floored to positive definiteness, ready to invert.
    pub fn metric(&self) -> Result<MetricTensor> {
        let n = self.g.nrows();
        MetricTensor::new(&self.g + DMatrix::identity(n, n) * FISHER_PD_FLOOR)
    }
}

/// G <- (1 - mu) G + mu score score^T.
pub fn fisher_update(est: &FisherEstimator, score: &DVector<f64>, mu: f64) -> FisherEstimator {
    let g = &est.g * (1.0 - mu) + score * score.transpose() * mu;
    FisherEstimator { g, beta0: est.beta0 }
}

/// The constrained quadratic case study: minimize x^T A x + b^T x with
/// A = diag(1, 0.01), b = (-0.2, -0.1) over { ||x||_1 <= 1, x >= 0 }, metric
/// tensor G = A.
pub mod case_study {
    use super::*;

    pub fn objective_matrix() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.01])
    }

    pub fn objective_offset() -> DVector<f64> {
        DVector::from_row_slice(&[-0.2, -0.1])
    }

    pub fn gradient(x: &DVector<f64>) -> DVector<f64> {
        objective_matrix() * x * 2.0 + objective_offset()
    }

    pub fn feasible_set() -> FeasibleSet {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let b = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        FeasibleSet::halfspaces(a, b).expect("case-study polytope is feasible")
    }

    pub fn metric() -> MetricTensor {
        MetricTensor::new(objective_matrix()).expect("diag(1, 0.01) is SPD")
    }

    /// KKT point on the active face x1 + x2 = 1: the face objective derivative
    /// is 2.02 t - 0.12, so t* = 12/202.
    pub fn kkt_point() -> DVector<f64> {
        let t = 12.0 / 202.0;
        DVector::from_row_slice(&[t, 1.0 - t])
    }
}

/// Which iteration the case study runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseStudyAlgorithm {
    Psg,
    Png,
    PngEuclid,
}

/// Runs the case study from the origin and returns the full trajectory
/// (iters + 1 points including the start).
pub fn quadratic_case_study(
    algorithm: CaseStudyAlgorithm,
    iters: usize,
    alpha: f64,
) -> Result<Vec<DVector<f64>>> {
    let set = case_study::feasible_set();
    let metric = case_study::metric();
    let mut x = DVector::zeros(2);
    let mut traj = Vec::with_capacity(iters + 1);
    traj.push(x.clone());
    for _ in 0..iters {
        let grad = case_study::gradient(&x);
        x = match algorithm {
            CaseStudyAlgorithm::Psg => psg_step(&x, &grad, alpha, &set)?,
            CaseStudyAlgorithm::Png => png_step(&x, &grad, &metric, alpha, &set)?,
            CaseStudyAlgorithm::PngEuclid => png_euclid_step(&x, &grad, &metric, alpha, &set)?,
        };
        traj.push(x.clone());
    }
    Ok(traj)
}

/// Renders a trajectory as CSV with header `iteration,x0,x1,...` for external
/// plotting.
pub fn trajectory_to_csv(trajectory: &[DVector<f64>]) -> String {
    let mut out = String::new();
    let dim = trajectory.first().map_or(0, |x| x.len());
    out.push_str("iteration");
    for j in 0..dim {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for (i, x) in trajectory.iter().enumerate() {
        out.push_str(&format!("{i}"));
        for v in x.iter() {
            out.push_str(&format!(",{}", crate::experiment::format_e12(*v)));
        }
        out.push('\n');
    }
    out
}
