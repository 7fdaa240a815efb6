//! Proximal and primal-dual algorithms for temporal-difference learning.
//!
//! The crate is organized around a shared geometric substrate and a family of
//! first-order solvers built on top of it:
//!
//! - [`geometry`]: proximal operators, Euclidean and Bregman projections,
//!   distance-generating functions and their Legendre transforms.
//! - [`splitting`]: operator-splitting solvers (forward-backward, Douglas-Rachford,
//!   ADMM) for composite objectives with prox-friendly parts.
//! - [`mdp`]: finite Markov reward processes, linear value-function approximation,
//!   the NEU/MSPBE objectives with exact gradients, and seeded sample generation.
//! - [`envs`]: benchmark problems (Baird star, random walk, two-state chain,
//!   random MDPs, mountain car, noisy gridworld).
//! - [`td_mirror`]: on-policy TD in primal-dual form, including mirror-descent
//!   TD(lambda), its sparse and composite variants, and mirror-descent Q-learning.
//! - [`gtd`]: the off-policy gradient-TD family (GTD, GTD2, TDC, residual
//!   gradient) as true primal-dual stochastic gradient methods, the mirror-prox
//!   accelerated GTD2-MP/TDC-MP, and RO-TD with primal averaging.
//! - [`png`]: natural gradient descent, its mirror-descent equivalence, and
//!   projected natural gradient with the compatible metric-weighted projection.
//! - [`vi`]: variational-inequality solvers (basic projection, extragradient)
//!   and the sampled projected affine equation.
//! - [`experiment`]: a reproducible experiment runner with a plain-text config
//!   format and CSV output, exposed through the `proxrl` binary.
//!
//! Iterates are plain values and step functions are pure: advancing an
//! algorithm returns a new iterate, so independent runs can be dispatched
//! across threads without shared mutation. Samplers own their RNG state and
//! are deterministic under a fixed seed.

pub mod envs;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod gtd;
pub mod mdp;
pub mod png;
pub mod schedule;
pub mod splitting;
pub mod td_mirror;
pub mod vi;

pub use error::{Error, Result};
pub use geometry::{BregmanGeometry, FeasibleSet, ProxFriendlyFunction};
pub use mdp::{FeatureBasis, MarkovRewardProcess, TransitionSample};
pub use schedule::StepSize;
