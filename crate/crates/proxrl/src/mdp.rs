//! Finite Markov reward processes, linear value-function approximation, the
//! NEU and MSPBE objectives with exact gradients, the GTD linear system, and
//! seeded sample generation.
//!
//! Expectation-mode quantities (`M`, `E[delta phi]`, objective values and
//! gradients) are computed by dense linear algebra from the model, so
//! objective reporting carries no sampling error.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative singular-value tolerance for the full-column-rank check.
pub const RANK_TOL: f64 = 1e-10;

/// A finite-state policy-evaluation model: row-stochastic transitions `P`,
/// expected rewards `R`, discount `gamma`, and a positive state-weighting
/// distribution `xi` (the diagonal of the weighting matrix).
#[derive(Debug, Clone)]
pub struct MarkovRewardProcess {
    p: DMatrix<f64>,
    r: DVector<f64>,
    gamma: f64,
    xi: DVector<f64>,
}

impl MarkovRewardProcess {
    pub fn new(p: DMatrix<f64>, r: DVector<f64>, gamma: f64, xi: DVector<f64>) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "transition matrix is {}x{}, expected square",
                p.nrows(),
                p.ncols()
            )));
        }
        if r.len() != n || xi.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "P is {n}x{n} but |R| = {}, |xi| = {}",
                r.len(),
                xi.len()
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidModel(format!(
                "discount factor must lie in [0, 1), got {gamma}"
            )));
        }
        for i in 0..n {
            let row = p.row(i);
            if row.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidModel(format!("negative entry in P row {i}")));
            }
            if (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidModel(format!(
                    "P row {i} sums to {}, expected 1",
                    row.sum()
                )));
            }
        }
        if xi.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidModel("xi entries must be positive".into()));
        }
        if (xi.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "xi sums to {}, expected 1",
                xi.sum()
            )));
        }
        Ok(Self { p, r, gamma, xi })
    }

    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn transitions(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn rewards(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }

    /// Exact value function (I - gamma P)^{-1} R.
    pub fn true_values(&self) -> DVector<f64> {
        let n = self.n_states();
        let sys = DMatrix::identity(n, n) - &self.p * self.gamma;
        sys.lu()
            .solve(&self.r)
            .expect("I - gamma P is invertible for gamma < 1")
    }

    /// Plain-text serialization: a `mrp <n>` header, `gamma`, then the `P`,
    /// `R`, and `XI` blocks with row-major whitespace-separated values.
    pub fn to_plain_text(&self) -> String {
        let n = self.n_states();
        let mut out = String::new();
        out.push_str(&format!("mrp {n}\n"));
        out.push_str(&format!("gamma {:.17e}\n", self.gamma));
        out.push_str("P\n");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.17e}", self.p[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push_str("R\n");
        let row: Vec<String> = self.r.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
        out.push_str("XI\n");
        let row: Vec<String> = self.xi.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
        out
    }

    pub fn from_plain_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::ConfigParse("empty mrp text".into()))?;
        let n: usize = header
            .strip_prefix("mrp ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::ConfigParse(format!("bad mrp header `{header}`")))?;
        let gline = lines
            .next()
            .ok_or_else(|| Error::ConfigParse("missing gamma".into()))?;
        let gamma: f64 = gline
            .strip_prefix("gamma ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::ConfigParse(format!("bad gamma line `{gline}`")))?;
        let expect = |lines: &mut dyn Iterator<Item = &str>, tag: &str| -> Result<()> {
            match lines.next() {
                Some(l) if l.trim() == tag => Ok(()),
                other => Err(Error::ConfigParse(format!(
                    "expected `{tag}`, found {other:?}"
                ))),
            }
        };
        let parse_row = |line: &str, want: usize| -> Result<Vec<f64>> {
            let vals: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(|t| t.parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::ConfigParse(format!("bad number: {e}")))?;
            if vals.len() != want {
                return Err(Error::ConfigParse(format!(
                    "expected {want} values, found {}",
                    vals.len()
                )));
            }
            Ok(vals)
        };
        expect(&mut lines, "P")?;
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::ConfigParse(format!("missing P row {i}")))?;
            for (j, v) in parse_row(line, n)?.into_iter().enumerate() {
                p[(i, j)] = v;
            }
        }
        expect(&mut lines, "R")?;
        let r = DVector::from_vec(parse_row(
            lines
                .next()
                .ok_or_else(|| Error::ConfigParse("missing R".into()))?,
            n,
        )?);
        expect(&mut lines, "XI")?;
        let xi = DVector::from_vec(parse_row(
            lines
                .next()
                .ok_or_else(|| Error::ConfigParse("missing XI".into()))?,
            n,
        )?);
        Self::new(p, r, gamma, xi)
    }
}

/// Stationary distribution of a row-stochastic matrix, by solving the
/// balance equations with the normalization constraint.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut sys = p.transpose() - DMatrix::identity(n, n);
    let mut rhs = DVector::zeros(n);
    for j in 0..n {
        sys[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    sys.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidModel("no unique stationary distribution".into()))
}

/// The Bellman operator T(V) = R + gamma P V.
pub fn bellman_apply(mrp: &MarkovRewardProcess, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != mrp.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "value vector of length {} for {}-state process",
            v.len(),
            mrp.n_states()
        )));
    }
    Ok(&mrp.r + &mrp.p * v * mrp.gamma)
}

/// Fourier cosine features over scaled box-bounded states.
#[derive(Debug, Clone)]
pub struct FourierBasis {
    pub order: usize,
    pub ranges: Vec<(f64, f64)>,
    coefficients: Vec<Vec<f64>>,
}

impl FourierBasis {
    pub fn new(order: usize, ranges: Vec<(f64, f64)>) -> Self {
        let dims = ranges.len();
        let mut coefficients = Vec::new();
        let mut c = vec![0usize; dims];
        'outer: loop {
            coefficients.push(c.iter().map(|v| *v as f64).collect());
            let mut i = 0;
            loop {
                c[i] += 1;
                if c[i] <= order {
                    break;
                }
                c[i] = 0;
                i += 1;
                if i == dims {
                    break 'outer;
                }
            }
        }
        Self {
            order,
            ranges,
            coefficients,
        }
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    /// phi_c(x) = cos(pi * <c, x_scaled>) with x scaled into [0, 1]^dims.
    pub fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.ranges.len() {
            return Err(Error::DimensionMismatch(format!(
                "state of dimension {} for {}-dimensional basis",
                x.len(),
                self.ranges.len()
            )));
        }
        let scaled: Vec<f64> = x
            .iter()
            .zip(self.ranges.iter())
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect();
        Ok(DVector::from_fn(self.coefficients.len(), |k, _| {
            let dot: f64 = self.coefficients[k]
                .iter()
                .zip(scaled.iter())
                .map(|(c, s)| c * s)
                .sum();
            (std::f64::consts::PI * dot).cos()
        }))
    }
}

/// Gaussian radial-basis features on a stack of square grids.
#[derive(Debug, Clone)]
pub struct RbfGridBasis {
    pub ranges: Vec<(f64, f64)>,
    centers: Vec<Vec<f64>>,
    widths: Vec<f64>,
    with_constant: bool,
}

impl RbfGridBasis {
    /// One grid per entry of `grid_sizes` (k^dims centers each), widths equal
    /// to the grid spacing in scaled coordinates, plus an optional constant.
    pub fn new(grid_sizes: &[usize], ranges: Vec<(f64, f64)>, with_constant: bool) -> Self {
        let dims = ranges.len();
        let mut centers = Vec::new();
        let mut widths = Vec::new();
        for &k in grid_sizes {
            let spacing = 1.0 / k as f64;
            let mut idx = vec![0usize; dims];
            'grid: loop {
                let c: Vec<f64> = idx.iter().map(|i| (*i as f64 + 0.5) * spacing).collect();
                centers.push(c);
                widths.push(spacing);
                let mut i = 0;
                loop {
                    idx[i] += 1;
                    if idx[i] < k {
                        break;
                    }
                    idx[i] = 0;
                    i += 1;
                    if i == dims {
                        break 'grid;
                    }
                }
            }
        }
        Self {
            ranges,
            centers,
            widths,
            with_constant,
        }
    }

    pub fn dim(&self) -> usize {
        self.centers.len() + usize::from(self.with_constant)
    }

    pub fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.ranges.len() {
            return Err(Error::DimensionMismatch(format!(
                "state of dimension {} for {}-dimensional basis",
                x.len(),
                self.ranges.len()
            )));
        }
        let scaled: Vec<f64> = x
            .iter()
            .zip(self.ranges.iter())
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect();
        let m = self.centers.len();
        Ok(DVector::from_fn(self.dim(), |k, _| {
            if k == m {
                1.0
            } else {
                let d2: f64 = self.centers[k]
                    .iter()
                    .zip(scaled.iter())
                    .map(|(c, s)| (c - s) * (c - s))
                    .sum();
                (-d2 / (2.0 * self.widths[k] * self.widths[k])).exp()
            }
        }))
    }
}

/// Feature maps for tabular and continuous states.
#[derive(Debug, Clone)]
pub enum FeatureBasis {
    /// An explicit n x d feature matrix, full column rank by construction.
    Explicit(DMatrix<f64>),
    Tabular(usize),
    Fourier(FourierBasis),
    RbfGrid(RbfGridBasis),
    /// A finite-state base augmented with pre-drawn noise columns. The rank
    /// guarantee does not apply: with more columns than states the combined
    /// matrix is rank deficient by construction.
    NoiseAugmented {
        base: Box<FeatureBasis>,
        noise: DMatrix<f64>,
    },
}

impl FeatureBasis {
    /// Builds an explicit basis, enforcing the full-column-rank assumption
    /// (smallest singular value > 1e-10 times the largest).
    pub fn explicit(phi: DMatrix<f64>) -> Result<Self> {
        let sv = phi.clone().svd(false, false).singular_values;
        if sv.min() <= RANK_TOL * sv.max() {
            return Err(Error::SingularBasis);
        }
        Ok(FeatureBasis::Explicit(phi))
    }

    /// Gaussian mean-zero noise columns appended to a finite base, drawn
    /// deterministically from the seed.
    pub fn noise_augmented(base: FeatureBasis, k_noise: usize, seed: u64) -> Result<Self> {
        let n = base.n_states().ok_or_else(|| {
            Error::InvalidDimensions("noise augmentation needs a finite base".into())
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = DMatrix::from_fn(n, k_noise, |_, _| standard_normal(&mut rng));
        Ok(FeatureBasis::NoiseAugmented {
            base: Box::new(base),
            noise,
        })
    }

    /// Feature count d.
    pub fn dim(&self) -> usize {
        match self {
            FeatureBasis::Explicit(phi) => phi.ncols(),
            FeatureBasis::Tabular(n) => *n,
            FeatureBasis::Fourier(f) => f.dim(),
            FeatureBasis::RbfGrid(r) => r.dim(),
            FeatureBasis::NoiseAugmented { base, noise } => base.dim() + noise.ncols(),
        }
    }

    /// Number of states for finite kinds, `None` for continuous maps.
    pub fn n_states(&self) -> Option<usize> {
        match self {
            FeatureBasis::Explicit(phi) => Some(phi.nrows()),
            FeatureBasis::Tabular(n) => Some(*n),
            FeatureBasis::NoiseAugmented { base, .. } => base.n_states(),
            FeatureBasis::Fourier(_) | FeatureBasis::RbfGrid(_) => None,
        }
    }

    /// The full n x d feature matrix for finite kinds.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            FeatureBasis::Explicit(phi) => Ok(phi.clone()),
            FeatureBasis::Tabular(n) => Ok(DMatrix::identity(*n, *n)),
            FeatureBasis::NoiseAugmented { base, noise } => {
                let left = base.matrix()?;
                let mut out = DMatrix::zeros(left.nrows(), left.ncols() + noise.ncols());
                out.view_mut((0, 0), (left.nrows(), left.ncols()))
                    .copy_from(&left);
                out.view_mut((0, left.ncols()), (noise.nrows(), noise.ncols()))
                    .copy_from(noise);
                Ok(out)
            }
            FeatureBasis::Fourier(_) | FeatureBasis::RbfGrid(_) => Err(Error::InvalidDimensions(
                "continuous basis has no finite feature matrix".into(),
            )),
        }
    }

    /// Feature vector of a finite state.
    pub fn state_features(&self, s: usize) -> Result<DVector<f64>> {
        match self {
            FeatureBasis::Explicit(phi) => {
                if s >= phi.nrows() {
                    return Err(Error::InvalidDimensions(format!(
                        "state {s} out of range for {} states",
                        phi.nrows()
                    )));
                }
                Ok(phi.row(s).transpose())
            }
            FeatureBasis::Tabular(n) => {
                if s >= *n {
                    return Err(Error::InvalidDimensions(format!(
                        "state {s} out of range for {n} states"
                    )));
                }
                let mut v = DVector::zeros(*n);
                v[s] = 1.0;
                Ok(v)
            }
            FeatureBasis::NoiseAugmented { base, noise } => {
                let mut v = base.state_features(s)?;
                let d0 = v.len();
                v = v.insert_rows(d0, noise.ncols(), 0.0);
                for j in 0..noise.ncols() {
                    v[d0 + j] = noise[(s, j)];
                }
                Ok(v)
            }
            FeatureBasis::Fourier(_) | FeatureBasis::RbfGrid(_) => Err(Error::InvalidDimensions(
                "continuous basis has no per-state features".into(),
            )),
        }
    }

    /// Feature vector of a continuous state.
    pub fn continuous_features(&self, x: &[f64]) -> Result<DVector<f64>> {
        match self {
            FeatureBasis::Fourier(f) => f.features(x),
            FeatureBasis::RbfGrid(r) => r.features(x),
            _ => Err(Error::InvalidDimensions(
                "finite basis has no continuous feature map".into(),
            )),
        }
    }
}

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per normal keeps the stream layout simple.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// One sampled transition with its feature vectors.
#[derive(Debug, Clone)]
pub struct TransitionSample {
    pub s: usize,
    pub r: f64,
    pub s_next: usize,
    pub phi: DVector<f64>,
    pub phi_next: DVector<f64>,
}

/// Inverse of `M = E[phi phi^T]`: Cholesky when the basis has full column
/// rank, otherwise the Moore-Penrose pseudo-inverse. `E[delta phi]` always
/// lies in the range of M, so the MSPBE quadratic form stays well-defined
/// for overparameterized bases such as the star counterexample's.
#[derive(Debug, Clone)]
enum MSolver {
    Chol(Cholesky<f64, Dyn>),
    Pinv(DMatrix<f64>),
}

/// Exact expectation-mode quantities of an (MRP, basis) pair under xi:
/// `M = E[phi phi^T]`, `E[delta(theta) phi] = b0 + C theta`,
/// `a_bar = E[(phi - gamma phi') phi^T]`, and `fp = E[phi' phi^T]`.
#[derive(Debug, Clone)]
pub struct ExpectedDynamics {
    pub m: DMatrix<f64>,
    pub b0: DVector<f64>,
    pub c: DMatrix<f64>,
    pub a_bar: DMatrix<f64>,
    pub fp: DMatrix<f64>,
    pub gamma: f64,
    m_solver: MSolver,
}

impl ExpectedDynamics {
    pub fn new(mrp: &MarkovRewardProcess, basis: &FeatureBasis) -> Result<Self> {
        let phi = basis.matrix()?;
        if phi.nrows() != mrp.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "basis over {} states for {}-state process",
                phi.nrows(),
                mrp.n_states()
            )));
        }
        let xi_phi = scale_rows(&phi, mrp.xi());
        let phi_next = mrp.transitions() * &phi;
        let m = phi.transpose() * &xi_phi;
        let b0 = xi_phi.transpose() * mrp.rewards();
        let c = xi_phi.transpose() * (&phi_next * mrp.gamma() - &phi);
        let a_bar = (&phi - &phi_next * mrp.gamma()).transpose() * &xi_phi;
        let fp = phi_next.transpose() * &xi_phi;
        let m_solver = match Cholesky::new(m.clone()) {
            Some(chol) => MSolver::Chol(chol),
            None => {
                let pinv = m
                    .clone()
                    .svd(true, true)
                    .pseudo_inverse(RANK_TOL * m.amax().max(1.0))
                    .map_err(|_| Error::SingularBasis)?;
                MSolver::Pinv(pinv)
            }
        };
        Ok(Self {
            m,
            b0,
            c,
            a_bar,
            fp,
            gamma: mrp.gamma(),
            m_solver,
        })
    }

    /// E[delta(theta) phi].
    pub fn e_delta_phi(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.b0 + &self.c * theta
    }

    pub fn solve_m(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.m_solver {
            MSolver::Chol(chol) => chol.solve(v),
            MSolver::Pinv(pinv) => pinv * v,
        }
    }

    pub fn neu(&self, theta: &DVector<f64>) -> f64 {
        let g = self.e_delta_phi(theta);
        g.dot(&g)
    }

    pub fn neu_grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let g = self.e_delta_phi(theta);
        -2.0 * (&self.a_bar * g)
    }

    pub fn mspbe(&self, theta: &DVector<f64>) -> f64 {
        let g = self.e_delta_phi(theta);
        g.dot(&self.solve_m(&g))
    }

    pub fn mspbe_grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let g = self.solve_m(&self.e_delta_phi(theta));
        -2.0 * (&self.a_bar * g)
    }
}

fn scale_rows(m: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        out.row_mut(i).scale_mut(w[i]);
    }
    out
}

/// Norm of the expected TD update, `E[delta phi]^T E[delta phi]`.
pub fn neu(mrp: &MarkovRewardProcess, basis: &FeatureBasis, theta: &DVector<f64>) -> Result<f64> {
    Ok(ExpectedDynamics::new(mrp, basis)?.neu(theta))
}

/// Gradient of NEU: `-2 E[(phi - gamma phi') phi^T] E[delta phi]`.
pub fn neu_grad(
    mrp: &MarkovRewardProcess,
    basis: &FeatureBasis,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(ExpectedDynamics::new(mrp, basis)?.neu_grad(theta))
}

/// Mean-square projected Bellman error `E[delta phi]^T M^{-1} E[delta phi]`,
/// computed from exact expectations.
pub fn mspbe(mrp: &MarkovRewardProcess, basis: &FeatureBasis, theta: &DVector<f64>) -> Result<f64> {
    Ok(ExpectedDynamics::new(mrp, basis)?.mspbe(theta))
}

/// Gradient of MSPBE: `-2 E[(phi - gamma phi') phi^T] M^{-1} E[delta phi]`.
pub fn mspbe_grad(
    mrp: &MarkovRewardProcess,
    basis: &FeatureBasis,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(ExpectedDynamics::new(mrp, basis)?.mspbe_grad(theta))
}

/// The 2d x 2d linear system A [w; theta] = b whose theta block solves the
/// MSPBE fixed point, together with `M = E[phi phi^T]` and the dual-stepsize
/// ratio eta.
#[derive(Debug, Clone)]
pub struct GtdLinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub m: DMatrix<f64>,
    pub eta: f64,
}

impl GtdLinearSystem {
    /// Solves A [w; theta] = b and returns (w, theta). Singular systems
    /// (overparameterized bases) get the minimum-norm least-squares solution,
    /// rejected if it does not actually satisfy the system.
    pub fn solve(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let d = self.m.nrows();
        let svd = self.a.clone().svd(true, true);
        let x = svd
            .solve(&self.b, RANK_TOL * self.a.amax().max(1.0))
            .map_err(|_| Error::SingularBasis)?;
        let residual = (&self.a * &x - &self.b).norm();
        if residual > 1e-8 * (1.0 + self.b.norm()) {
            return Err(Error::SingularBasis);
        }
        Ok((x.rows(0, d).into(), x.rows(d, d).into()))
    }
}

/// Builds A = E[A_t], b = E[b_t] for the saddle-point system
/// `A_t = [[eta phi phi^T, eta phi (phi - gamma phi')^T],
///         [gamma phi' phi^T, phi (phi - gamma phi')^T]]`,
/// `b_t = [eta r phi; r phi]`.
pub fn build_gtd_system(
    mrp: &MarkovRewardProcess,
    basis: &FeatureBasis,
    eta: f64,
) -> Result<GtdLinearSystem> {
    if eta <= 0.0 {
        return Err(Error::StepSizeOutOfRange(format!(
            "eta must be positive, got {eta}"
        )));
    }
    let dynamics = ExpectedDynamics::new(mrp, basis)?;
    let d = dynamics.m.nrows();
    // E[phi (phi - gamma phi')^T] is the transpose of a_bar.
    let cross = dynamics.a_bar.transpose();
    let mut a = DMatrix::zeros(2 * d, 2 * d);
    a.view_mut((0, 0), (d, d)).copy_from(&(&dynamics.m * eta));
    a.view_mut((0, d), (d, d)).copy_from(&(&cross * eta));
    a.view_mut((d, 0), (d, d))
        .copy_from(&(&dynamics.fp * mrp.gamma()));
    a.view_mut((d, d), (d, d)).copy_from(&cross);
    let mut b = DVector::zeros(2 * d);
    b.rows_mut(0, d).copy_from(&(&dynamics.b0 * eta));
    b.rows_mut(d, d).copy_from(&dynamics.b0);
    Ok(GtdLinearSystem {
        a,
        b,
        m: dynamics.m.clone(),
        eta,
    })
}

/// Norm used by [`value_error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    Linf,
    XiWeighted,
}

/// Prediction error `||(I - gamma P)^{-1} R - Phi theta||` in the chosen norm.
pub fn value_error(
    mrp: &MarkovRewardProcess,
    basis: &FeatureBasis,
    theta: &DVector<f64>,
    norm: ErrorNorm,
) -> Result<f64> {
    let v = mrp.true_values();
    let approx = basis.matrix()? * theta;
    let err = v - approx;
    Ok(match norm {
        ErrorNorm::Linf => err.amax(),
        ErrorNorm::XiWeighted => err
            .iter()
            .zip(mrp.xi().iter())
            .map(|(e, xi)| xi * e * e)
            .sum::<f64>()
            .sqrt(),
    })
}

/// Draws i.i.d. transitions: `s ~ xi`, `s' ~ P(s, .)`, `r = R(s)`.
/// Deterministic under the seed; owns its RNG state.
pub struct IidSampler {
    rewards: DVector<f64>,
    features: Vec<DVector<f64>>,
    xi_cdf: Vec<f64>,
    row_cdfs: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl IidSampler {
    pub fn new(mrp: &MarkovRewardProcess, basis: &FeatureBasis, seed: u64) -> Result<Self> {
        let n = mrp.n_states();
        let features: Result<Vec<_>> = (0..n).map(|s| basis.state_features(s)).collect();
        let cdf = |w: &[f64]| {
            let mut acc = 0.0;
            w.iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect::<Vec<f64>>()
        };
        Ok(Self {
            rewards: mrp.rewards().clone(),
            features: features?,
            xi_cdf: cdf(mrp.xi().as_slice()),
            row_cdfs: (0..n)
                .map(|i| cdf(&mrp.transitions().row(i).iter().copied().collect::<Vec<_>>()))
                .collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn draw(&mut self, which_row: Option<usize>) -> usize {
        let cdf = match which_row {
            None => &self.xi_cdf,
            Some(i) => &self.row_cdfs[i],
        };
        let u: f64 = self.rng.gen::<f64>() * cdf[cdf.len() - 1];
        cdf.iter().position(|c| u < *c).unwrap_or(cdf.len() - 1)
    }

    pub fn sample(&mut self) -> TransitionSample {
        let s = self.draw(None);
        let s_next = self.draw(Some(s));
        TransitionSample {
            s,
            r: self.rewards[s],
            s_next,
            phi: self.features[s].clone(),
            phi_next: self.features[s_next].clone(),
        }
    }
}

impl Iterator for IidSampler {
    type Item = TransitionSample;

    fn next(&mut self) -> Option<TransitionSample> {
        Some(self.sample())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use approx::assert_abs_diff_eq;

    fn small_mrp() -> MarkovRewardProcess {
        let p = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.2, 0.3, 0.5, 0.0, 0.4, 0.6]);
        let r = DVector::from_row_slice(&[1.0, 0.0, -1.0]);
        let xi = DVector::from_row_slice(&[0.3, 0.3, 0.4]);
        MarkovRewardProcess::new(p, r, 0.9, xi).unwrap()
    }

    #[test]
    fn constructor_validates() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.0, 1.0]);
        let r = DVector::zeros(2);
        let xi = DVector::from_row_slice(&[0.5, 0.5]);
        assert!(MarkovRewardProcess::new(p, r.clone(), 0.9, xi.clone()).is_err());
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 1.0]);
        assert!(MarkovRewardProcess::new(p.clone(), r.clone(), 1.0, xi.clone()).is_err());
        let bad_xi = DVector::from_row_slice(&[1.0, 0.0]);
        assert!(MarkovRewardProcess::new(p, r, 0.9, bad_xi).is_err());
    }

    #[test]
    fn bellman_gamma_zero_returns_rewards() {
        let m = small_mrp();
        let zero_gamma = MarkovRewardProcess::new(
            m.transitions().clone(),
            m.rewards().clone(),
            0.0,
            m.xi().clone(),
        )
        .unwrap();
        let v = DVector::from_row_slice(&[3.0, -2.0, 1.0]);
        assert_eq!(bellman_apply(&zero_gamma, &v).unwrap(), *m.rewards());
    }

    #[test]
    fn bellman_fixed_point() {
        let m = small_mrp();
        let v = m.true_values();
        let tv = bellman_apply(&m, &v).unwrap();
        assert!((tv - v).amax() < 1e-10);
    }

    #[test]
    fn bellman_two_state_from_zero() {
        let (m, _) = envs::two_state();
        let v = DVector::zeros(2);
        let tv = bellman_apply(&m, &v).unwrap();
        assert_eq!(tv, DVector::from_row_slice(&[0.0, -1.0]));
    }

    #[test]
    fn bellman_rejects_dimension_mismatch() {
        let m = small_mrp();
        assert!(bellman_apply(&m, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn tabular_system_recovers_true_values() {
        let m = small_mrp();
        let basis = FeatureBasis::Tabular(3);
        let sys = build_gtd_system(&m, &basis, 1.0).unwrap();
        let (_, theta) = sys.solve().unwrap();
        assert!((theta - m.true_values()).amax() < 1e-10);
        assert!(mspbe(&m, &basis, &m.true_values()).unwrap() < 1e-12);
    }

    #[test]
    fn mspbe_zero_at_system_solution() {
        let m = small_mrp();
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.3, 1.0, -0.2, 0.5]);
        let basis = FeatureBasis::explicit(phi).unwrap();
        let sys = build_gtd_system(&m, &basis, 4.0).unwrap();
        let (w, theta) = sys.solve().unwrap();
        assert!(mspbe(&m, &basis, &theta).unwrap() < 1e-10);
        // At the fixed point the dual block solves M w = E[delta phi] = 0.
        assert!(w.amax() < 1e-8);
    }

    #[test]
    fn neu_examples() {
        let (m, basis) = envs::two_state();
        let theta_star = DVector::from_row_slice(&[-5.0]);
        assert!(neu(&m, &basis, &theta_star).unwrap() < 1e-10);
        // Direct expectation at theta = 0: E[delta phi] = sum_s xi(s) phi(s) R(s).
        let theta0 = DVector::zeros(1);
        let phi = basis.matrix().unwrap();
        let mut hand = 0.0;
        for s in 0..2 {
            hand += m.xi()[s] * phi[(s, 0)] * m.rewards()[s];
        }
        assert_abs_diff_eq!(
            neu(&m, &basis, &theta0).unwrap(),
            hand * hand,
            epsilon = 1e-12
        );
        // Zero rewards give zero NEU at theta = 0.
        let zero_r = MarkovRewardProcess::new(
            m.transitions().clone(),
            DVector::zeros(2),
            m.gamma(),
            m.xi().clone(),
        )
        .unwrap();
        assert_eq!(neu(&zero_r, &basis, &theta0).unwrap(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let n = 5;
            let d = 3;
            let mut p = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.01..1.0));
            for i in 0..n {
                let s = p.row(i).sum();
                p.row_mut(i).scale_mut(1.0 / s);
            }
            let r = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let mut xi = DVector::from_fn(n, |_, _| rng.gen_range(0.1..1.0));
            xi /= xi.sum();
            let mrp = MarkovRewardProcess::new(p, r, 0.9, xi).unwrap();
            let phi = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
            let basis = FeatureBasis::explicit(phi).unwrap();
            let theta = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let h = 1e-5;
            for grad_kind in 0..2 {
                let analytic = if grad_kind == 0 {
                    neu_grad(&mrp, &basis, &theta).unwrap()
                } else {
                    mspbe_grad(&mrp, &basis, &theta).unwrap()
                };
                let f = |t: &DVector<f64>| -> f64 {
                    if grad_kind == 0 {
                        neu(&mrp, &basis, t).unwrap()
                    } else {
                        mspbe(&mrp, &basis, t).unwrap()
                    }
                };
                let mut fd = DVector::zeros(d);
                for i in 0..d {
                    let mut up = theta.clone();
                    let mut dn = theta.clone();
                    up[i] += h;
                    dn[i] -= h;
                    fd[i] = (f(&up) - f(&dn)) / (2.0 * h);
                }
                let rel = (&analytic - &fd).norm() / fd.norm().max(1e-10);
                assert!(rel <= 1e-5, "trial {trial} kind {grad_kind}: rel err {rel}");
            }
        }
    }

    #[test]
    fn gradients_vanish_at_fixed_point() {
        let m = small_mrp();
        let basis = FeatureBasis::Tabular(3);
        let theta = m.true_values();
        assert!(neu_grad(&m, &basis, &theta).unwrap().amax() < 1e-10);
        assert!(mspbe_grad(&m, &basis, &theta).unwrap().amax() < 1e-10);
    }

    /// gamma = 0 with tabular features reduces NEU to weighted regression of R,
    /// whose gradient is computable directly.
    #[test]
    fn gamma_zero_tabular_reduces_to_regression() {
        let m = small_mrp();
        let zero_gamma = MarkovRewardProcess::new(
            m.transitions().clone(),
            m.rewards().clone(),
            0.0,
            m.xi().clone(),
        )
        .unwrap();
        let basis = FeatureBasis::Tabular(3);
        let theta = DVector::from_row_slice(&[0.3, -0.2, 0.4]);
        // E[delta phi]_i = xi_i (R_i - theta_i); NEU = sum_i xi_i^2 (R_i - theta_i)^2.
        let g_neu = neu_grad(&zero_gamma, &basis, &theta).unwrap();
        let g_mspbe = mspbe_grad(&zero_gamma, &basis, &theta).unwrap();
        for i in 0..3 {
            let xi = m.xi()[i];
            let res = m.rewards()[i] - theta[i];
            assert_abs_diff_eq!(g_neu[i], -2.0 * xi * xi * res, epsilon = 1e-12);
            // M = diag(xi): the MSPBE gradient is -2 xi (R - theta).
            assert_abs_diff_eq!(g_mspbe[i], -2.0 * xi * res, epsilon = 1e-12);
        }
    }

    /// With features orthonormalized under xi (M = I), MSPBE and NEU coincide.
    #[test]
    fn mspbe_equals_neu_when_m_identity() {
        let m = small_mrp();
        let raw = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 0.5, 1.0, -0.3, 0.4]);
        // Gram-Schmidt in the xi-weighted inner product.
        let dot = |a: &DVector<f64>, b: &DVector<f64>| {
            a.iter()
                .zip(b.iter())
                .zip(m.xi().iter())
                .map(|((x, y), w)| w * x * y)
                .sum::<f64>()
        };
        let c0: DVector<f64> = raw.column(0).into();
        let q0 = &c0 / dot(&c0, &c0).sqrt();
        let c1: DVector<f64> = raw.column(1).into();
        let c1 = &c1 - &q0 * dot(&c1, &q0);
        let q1 = &c1 / dot(&c1, &c1).sqrt();
        let mut phi = DMatrix::zeros(3, 2);
        phi.set_column(0, &q0);
        phi.set_column(1, &q1);
        let basis = FeatureBasis::explicit(phi).unwrap();
        let dynamics = ExpectedDynamics::new(&m, &basis).unwrap();
        assert!((&dynamics.m - DMatrix::identity(2, 2)).amax() < 1e-12);
        let theta = DVector::from_row_slice(&[0.7, -0.4]);
        assert_abs_diff_eq!(
            mspbe(&m, &basis, &theta).unwrap(),
            neu(&m, &basis, &theta).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn value_error_examples() {
        let m = small_mrp();
        let basis = FeatureBasis::Tabular(3);
        let theta = m.true_values();
        assert!(value_error(&m, &basis, &theta, ErrorNorm::Linf).unwrap() < 1e-12);

        let (two, tb) = envs::two_state();
        let theta = DVector::from_row_slice(&[-5.0]);
        assert_abs_diff_eq!(
            value_error(&two, &tb, &theta, ErrorNorm::Linf).unwrap(),
            4.0,
            epsilon = 1e-9
        );

        // gamma = 0 with theta fitting R exactly.
        let zero_gamma = MarkovRewardProcess::new(
            m.transitions().clone(),
            m.rewards().clone(),
            0.0,
            m.xi().clone(),
        )
        .unwrap();
        assert!(
            value_error(&zero_gamma, &basis, m.rewards(), ErrorNorm::XiWeighted).unwrap() < 1e-12
        );
    }

    #[test]
    fn sampler_is_deterministic_under_seed() {
        let m = small_mrp();
        let basis = FeatureBasis::Tabular(3);
        let a: Vec<_> = IidSampler::new(&m, &basis, 9).unwrap().take(50).collect();
        let b: Vec<_> = IidSampler::new(&m, &basis, 9).unwrap().take(50).collect();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.s, y.s);
            assert_eq!(x.s_next, y.s_next);
            assert_eq!(x.r, y.r);
        }
    }

    #[test]
    fn sampler_state_frequencies_match_xi() {
        let m = small_mrp();
        let basis = FeatureBasis::Tabular(3);
        let n = 100_000;
        let mut counts = vec![0usize; 3];
        let mut sampler = IidSampler::new(&m, &basis, 1234).unwrap();
        for _ in 0..n {
            counts[sampler.sample().s] += 1;
        }
        for s in 0..3 {
            let xi = m.xi()[s];
            let sigma = (xi * (1.0 - xi) / n as f64).sqrt();
            let freq = counts[s] as f64 / n as f64;
            assert!(
                (freq - xi).abs() <= 3.0 * sigma,
                "state {s}: freq {freq} vs xi {xi}"
            );
        }
    }

    #[test]
    fn sampler_second_moment_matches_m() {
        let m = small_mrp();
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.3, 1.0, -0.2, 0.5]);
        let basis = FeatureBasis::explicit(phi).unwrap();
        let dynamics = ExpectedDynamics::new(&m, &basis).unwrap();
        let mut acc = DMatrix::zeros(2, 2);
        let n = 100_000;
        let mut sampler = IidSampler::new(&m, &basis, 77).unwrap();
        for _ in 0..n {
            let s = sampler.sample();
            acc += &s.phi * s.phi.transpose();
        }
        acc /= n as f64;
        let rel = (&acc - &dynamics.m).norm() / dynamics.m.norm();
        assert!(rel <= 5e-2, "relative error {rel}");
    }

    /// Empirical means of A_t, b_t match the dense system matrices.
    #[test]
    fn sampler_system_means_unbiased() {
        let m = small_mrp();
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.3, 1.0, -0.2, 0.5]);
        let basis = FeatureBasis::explicit(phi).unwrap();
        let eta = 3.0;
        let sys = build_gtd_system(&m, &basis, eta).unwrap();
        let d = 2;
        let mut a_acc = DMatrix::zeros(2 * d, 2 * d);
        let mut b_acc = DVector::zeros(2 * d);
        let n = 100_000;
        let mut sampler = IidSampler::new(&m, &basis, 555).unwrap();
        let gamma = m.gamma();
        for _ in 0..n {
            let s = sampler.sample();
            let diff = &s.phi - &s.phi_next * gamma;
            let mut at = DMatrix::zeros(2 * d, 2 * d);
            at.view_mut((0, 0), (d, d))
                .copy_from(&(&s.phi * s.phi.transpose() * eta));
            at.view_mut((0, d), (d, d))
                .copy_from(&(&s.phi * diff.transpose() * eta));
            at.view_mut((d, 0), (d, d))
                .copy_from(&(&s.phi_next * s.phi.transpose() * gamma));
            at.view_mut((d, d), (d, d))
                .copy_from(&(&s.phi * diff.transpose()));
            a_acc += at;
            let mut bt = DVector::zeros(2 * d);
            bt.rows_mut(0, d).copy_from(&(&s.phi * (eta * s.r)));
            bt.rows_mut(d, d).copy_from(&(&s.phi * s.r));
            b_acc += bt;
        }
        a_acc /= n as f64;
        b_acc /= n as f64;
        assert!((&a_acc - &sys.a).norm() / sys.a.norm() <= 5e-2);
        assert!((&b_acc - &sys.b).norm() / sys.b.norm() <= 5e-2);
    }

    #[test]
    fn plain_text_round_trip() {
        let m = small_mrp();
        let text = m.to_plain_text();
        let back = MarkovRewardProcess::from_plain_text(&text).unwrap();
        assert_eq!(back.transitions(), m.transitions());
        assert_eq!(back.rewards(), m.rewards());
        assert_eq!(back.xi(), m.xi());
        assert_eq!(back.gamma(), m.gamma());
    }

    #[test]
    fn plain_text_golden_format() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let r = DVector::from_row_slice(&[0.0, -1.0]);
        let xi = DVector::from_row_slice(&[0.5, 0.5]);
        let m = MarkovRewardProcess::new(p, r, 0.5, xi).unwrap();
        let text = m.to_plain_text();
        let golden = "mrp 2\n\
                      gamma 5.00000000000000000e-1\n\
                      P\n\
                      0.00000000000000000e0 1.00000000000000000e0\n\
                      0.00000000000000000e0 1.00000000000000000e0\n\
                      R\n\
                      0.00000000000000000e0 -1.00000000000000000e0\n\
                      XI\n\
                      5.00000000000000000e-1 5.00000000000000000e-1\n";
        assert_eq!(text, golden);
        assert!(MarkovRewardProcess::from_plain_text(golden).is_ok());
    }

    #[test]
    fn explicit_basis_rank_check() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(
            FeatureBasis::explicit(phi),
            Err(Error::SingularBasis)
        ));
    }

    #[test]
    fn fourier_dim_and_bounds() {
        let f = FourierBasis::new(4, vec![(-1.2, 0.6), (-0.07, 0.07)]);
        assert_eq!(f.dim(), 25);
        let phi = f.features(&[0.3, -0.02]).unwrap();
        assert!(phi.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn stationary_distribution_solves_balance() {
        let m = small_mrp();
        let pi = stationary_distribution(m.transitions()).unwrap();
        let back = m.transitions().transpose() * &pi;
        assert!((back - &pi).amax() < 1e-12);
        assert_abs_diff_eq!(pi.sum(), 1.0, epsilon = 1e-12);
    }
}
