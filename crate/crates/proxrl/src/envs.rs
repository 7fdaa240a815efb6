//! Benchmark problems at desk scale: the star counterexample, the five-state
//! random walk, the two-state chain, random MDPs, mountain car, and a noisy
//! gridworld.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{stationary_distribution, FeatureBasis, FourierBasis, MarkovRewardProcess,
                 RbfGridBasis};

/// Floor placed on otherwise-zero weighting entries so xi stays a valid
/// positive distribution.
const XI_FLOOR: f64 = 1e-6;

/// The 7-state star MDP on which off-policy TD(0) diverges monotonically
/// while the gradient-TD family converges.
///
/// All rewards are zero, xi is uniform, gamma = 0.99, and the canonical
/// 8-feature basis puts 2 on a state's own feature plus 1 on feature 8 for
/// the outer states, and 1 on its own feature plus 2 on feature 8 for the
/// center. The basis is deliberately overparameterized (8 features, 7
/// states), so expectation-mode quantities fall back to the pseudo-inverse.
pub fn baird_star() -> (MarkovRewardProcess, FeatureBasis) {
    let n = 7;
    // Under the target policy every state transitions to the center state.
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        p[(i, 6)] = 1.0;
    }
    let r = DVector::zeros(n);
    let xi = DVector::from_element(n, 1.0 / n as f64);
    let mrp = MarkovRewardProcess::new(p, r, 0.99, xi).expect("valid star MDP");
    let mut phi = DMatrix::zeros(n, 8);
    for i in 0..6 {
        phi[(i, i)] = 2.0;
        phi[(i, 7)] = 1.0;
    }
    phi[(6, 6)] = 1.0;
    phi[(6, 7)] = 2.0;
    (mrp, FeatureBasis::Explicit(phi))
}

/// The canonical starting weights for the star MDP: all ones except 10 on
/// the center state's own feature.
pub fn baird_initial_theta() -> DVector<f64> {
    let mut theta = DVector::from_element(8, 1.0);
    theta[6] = 10.0;
    theta
}

/// Feature families for the five-state random walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomWalkBasis {
    /// One indicator per interior state.
    Tabular,
    /// State i carries 1/2 on every feature except zero on its own.
    Inverted,
    /// A three-dimensional spanning basis of unit-norm vectors.
    Dependent,
}

/// Five-state symmetric random walk with absorbing ends (states 0 and 6),
/// terminal rewards -1 on the left and +1 on the right, gamma = 0.99.
///
/// Rewards are stored in expected-immediate form r = R(s), so the two edge
/// interior states carry -1/2 and +1/2. Terminal states have zero features.
/// xi is the episodic state-visitation distribution of walks started at the
/// center, with a small floor on the terminals to keep xi positive.
pub fn random_walk_5(basis_kind: RandomWalkBasis) -> (MarkovRewardProcess, FeatureBasis) {
    let n = 7;
    let mut p = DMatrix::zeros(n, n);
    p[(0, 0)] = 1.0;
    p[(6, 6)] = 1.0;
    for i in 1..6 {
        p[(i, i - 1)] = 0.5;
        p[(i, i + 1)] = 0.5;
    }
    let mut r = DVector::zeros(n);
    r[1] = -0.5;
    r[5] = 0.5;

    // Expected visits per episode from the center: n = (I - Q^T)^{-1} e_c
    // over the interior block Q.
    let q = p.view((1, 1), (5, 5)).clone_owned();
    let mut e_c = DVector::zeros(5);
    e_c[2] = 1.0;
    let visits = (DMatrix::identity(5, 5) - q.transpose())
        .lu()
        .solve(&e_c)
        .expect("interior block is substochastic");
    let total: f64 = visits.sum();
    let mut xi = DVector::from_element(n, XI_FLOOR);
    for i in 0..5 {
        xi[i + 1] = (1.0 - 2.0 * XI_FLOOR) * visits[i] / total;
    }
    let mrp = MarkovRewardProcess::new(p, r, 0.99, xi).expect("valid random walk");

    let interior = match basis_kind {
        RandomWalkBasis::Tabular => DMatrix::identity(5, 5),
        RandomWalkBasis::Inverted => DMatrix::from_fn(5, 5, |i, j| if i == j { 0.0 } else { 0.5 }),
        RandomWalkBasis::Dependent => {
            let s2 = 1.0 / 2f64.sqrt();
            let s3 = 1.0 / 3f64.sqrt();
            DMatrix::from_row_slice(
                5,
                3,
                &[
                    1.0, 0.0, 0.0, //
                    s2, s2, 0.0, //
                    s3, s3, s3, //
                    0.0, s2, s2, //
                    0.0, 0.0, 1.0,
                ],
            )
        }
    };
    let mut phi = DMatrix::zeros(n, interior.ncols());
    phi.view_mut((1, 0), (5, interior.ncols()))
        .copy_from(&interior);
    let basis = FeatureBasis::explicit(phi).expect("random-walk bases have full column rank");
    (mrp, basis)
}

/// Small regularization applied to the two-state chain's stationary
/// weighting so xi stays strictly positive. Chosen small enough that the
/// projected fixed point stays at theta = -5 to well below 1e-12 in MSPBE.
pub const TWO_STATE_XI_EPS: f64 = 1e-9;

/// Two-state chain with P = [[0,1],[0,1]], R = [0,-1], gamma = 0.9, and the
/// one-dimensional basis Phi = [1; 2]. The weighting is the stationary
/// distribution of P regularized by [`TWO_STATE_XI_EPS`]; the projected
/// fixed point sits at theta = -5.
pub fn two_state() -> (MarkovRewardProcess, FeatureBasis) {
    let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
    let r = DVector::from_row_slice(&[0.0, -1.0]);
    let xi = DVector::from_row_slice(&[TWO_STATE_XI_EPS, 1.0 - TWO_STATE_XI_EPS]);
    let mrp = MarkovRewardProcess::new(p, r, 0.9, xi).expect("valid two-state chain");
    let phi = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
    let basis = FeatureBasis::explicit(phi).expect("rank-one basis");
    (mrp, basis)
}

/// Randomly generated MDP under a fixed random policy: per-action random
/// row-stochastic transitions mixed by a random policy, uniform[0,1) rewards,
/// and uniform[0,1) features with an appended constant column. The weighting
/// is the stationary distribution of the induced chain. Deterministic under
/// the seed.
pub fn random_mdp(
    n_states: usize,
    n_actions: usize,
    n_features: usize,
    seed: u64,
) -> Result<(MarkovRewardProcess, FeatureBasis)> {
    if n_states < 2 || n_actions == 0 || n_features < 2 || n_features > n_states {
        return Err(Error::InvalidDimensions(format!(
            "random_mdp({n_states}, {n_actions}, {n_features}) needs 2 <= features <= states and actions >= 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = DMatrix::zeros(n_states, n_states);
    for s in 0..n_states {
        // Random policy over actions, then mix per-action random rows.
        let mut pol: Vec<f64> = (0..n_actions).map(|_| rng.gen_range(0.01..1.0)).collect();
        let pol_sum: f64 = pol.iter().sum();
        for w in pol.iter_mut() {
            *w /= pol_sum;
        }
        for &weight in pol.iter() {
            let row: Vec<f64> = (0..n_states).map(|_| rng.gen_range(0.01..1.0)).collect();
            let row_sum: f64 = row.iter().sum();
            for (j, v) in row.iter().enumerate() {
                p[(s, j)] += weight * v / row_sum;
            }
        }
        // Renormalize away accumulated rounding.
        let s_sum = p.row(s).sum();
        p.row_mut(s).scale_mut(1.0 / s_sum);
    }
    let r = DVector::from_fn(n_states, |_, _| rng.gen::<f64>());
    let xi = stationary_distribution(&p)?;
    let mrp = MarkovRewardProcess::new(p, r, 0.95, xi)?;
    let phi = DMatrix::from_fn(n_states, n_features, |_, j| {
        if j == n_features - 1 {
            1.0
        } else {
            rng.gen::<f64>()
        }
    });
    let basis = FeatureBasis::explicit(phi)?;
    Ok((mrp, basis))
}

/// Mountain-car state, clamped to the standard position and velocity ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

pub const MC_POSITION_RANGE: (f64, f64) = (-1.2, 0.6);
pub const MC_VELOCITY_RANGE: (f64, f64) = (-0.07, 0.07);
pub const MC_GOAL_POSITION: f64 = 0.5;

impl MountainCarState {
    pub fn start() -> Self {
        // Rest at the bottom of the valley.
        MountainCarState {
            position: -0.5,
            velocity: 0.0,
        }
    }

    pub fn as_slice(&self) -> [f64; 2] {
        [self.position, self.velocity]
    }
}

/// Throttle actions {-1, 0, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarAction {
    Reverse,
    Neutral,
    Forward,
}

pub const CAR_ACTIONS: [CarAction; 3] = [CarAction::Reverse, CarAction::Neutral, CarAction::Forward];

impl CarAction {
    pub fn force(self) -> f64 {
        match self {
            CarAction::Reverse => -1.0,
            CarAction::Neutral => 0.0,
            CarAction::Forward => 1.0,
        }
    }
}

/// One step of the standard mountain-car dynamics; reward is -1 per step and
/// the episode ends at position >= 0.5.
pub fn mountain_car_step(state: MountainCarState, action: CarAction) -> (MountainCarState, f64) {
    let mut v = state.velocity + 0.001 * action.force() - 0.0025 * (3.0 * state.position).cos();
    v = v.clamp(MC_VELOCITY_RANGE.0, MC_VELOCITY_RANGE.1);
    let mut p = state.position + v;
    p = p.clamp(MC_POSITION_RANGE.0, MC_POSITION_RANGE.1);
    if p <= MC_POSITION_RANGE.0 {
        v = 0.0;
    }
    (
        MountainCarState {
            position: p,
            velocity: v,
        },
        -1.0,
    )
}

pub fn mountain_car_is_terminal(state: &MountainCarState) -> bool {
    state.position >= MC_GOAL_POSITION
}

/// Fourier cosine basis over the mountain-car state box; order 4 gives the
/// 25-feature basis used for value-function plots.
pub fn fourier_basis(order: usize) -> FeatureBasis {
    FeatureBasis::Fourier(FourierBasis::new(
        order,
        vec![MC_POSITION_RANGE, MC_VELOCITY_RANGE],
    ))
}

/// Stacked RBF grids of 2, 4, 8, 16, and 32 cells per side plus a constant:
/// 1365 features over the mountain-car box, widths equal to the grid spacing.
pub fn mountain_car_rbf_grids() -> FeatureBasis {
    FeatureBasis::RbfGrid(RbfGridBasis::new(
        &[2, 4, 8, 16, 32],
        vec![MC_POSITION_RANGE, MC_VELOCITY_RANGE],
        true,
    ))
}

/// Per-action feature stacking for action-value learning: the state features
/// are placed in the block of the chosen action.
pub fn stacked_action_features(
    phi_state: &DVector<f64>,
    action: usize,
    n_actions: usize,
) -> DVector<f64> {
    let d = phi_state.len();
    let mut out = DVector::zeros(d * n_actions);
    out.rows_mut(action * d, d).copy_from(phi_state);
    out
}

/// Deterministic gridworld walked toward the corner goal (0, 0) by a fixed
/// policy, tabular features augmented with seeded Gaussian noise columns.
/// Reward is -1 per step and 0 at the absorbing goal; gamma = 0.95 and xi is
/// uniform.
pub fn gridworld_noisy(
    size: usize,
    n_noise: usize,
    seed: u64,
) -> Result<(MarkovRewardProcess, FeatureBasis)> {
    if size < 2 {
        return Err(Error::InvalidDimensions(
            "gridworld needs at least a 2x2 grid".into(),
        ));
    }
    let n = size * size;
    let idx = |i: usize, j: usize| i * size + j;
    let mut p = DMatrix::zeros(n, n);
    let mut r = DVector::from_element(n, -1.0);
    for i in 0..size {
        for j in 0..size {
            let s = idx(i, j);
            if i == 0 && j == 0 {
                p[(s, s)] = 1.0;
                r[s] = 0.0;
            } else if i > 0 {
                p[(s, idx(i - 1, j))] = 1.0;
            } else {
                p[(s, idx(i, j - 1))] = 1.0;
            }
        }
    }
    let xi = DVector::from_element(n, 1.0 / n as f64);
    let mrp = MarkovRewardProcess::new(p, r, 0.95, xi)?;
    let base = FeatureBasis::Tabular(n);
    let basis = if n_noise == 0 {
        base
    } else {
        FeatureBasis::noise_augmented(base, n_noise, seed)?
    };
    Ok((mrp, basis))
}

/// Linear schedule for a decaying p-norm link: starts at max(2, ln d) and
/// decays to 2 over the horizon.
pub fn pnorm_decay(d: usize, t: usize, horizon: usize) -> f64 {
    let p0 = (d as f64).ln().max(2.0);
    if horizon == 0 || t >= horizon {
        return 2.0;
    }
    p0 + (2.0 - p0) * (t as f64 / horizon as f64)
}
