//! Mean-field optimal stopping games with relative-performance payoffs.
//!
//! The crate solves the decentralized threshold equilibria of two
//! large-population stopping games on geometric Brownian motion — a
//! best-time-to-sell game and a resource-extraction game — via their
//! Nash-certainty-equivalence consistency conditions, provides exact
//! first-passage-time analytics and samplers for the resulting inverse
//! Gaussian stopping laws, measures finite-population ε-Nash behavior by
//! Monte Carlo, and solves the inverse problem of designing the
//! transaction fee so the population's stopping-time distribution meets
//! prescribed statistical targets.

pub mod design;
pub mod error;
pub mod fpt;
pub mod market;
pub mod nce1;
pub mod nce2;
pub mod quad;
pub mod rng;
pub mod root;
pub mod sim;

pub use error::{Error, Result};
pub use fpt::{Direction, HittingLaw, IgParams};
pub use market::{lambda_roots, CharacteristicRoots, MarketParams};
pub use nce1::{solve_theta_bar, value_function1, NceSolution1, ThresholdRule};
pub use nce2::{solve_system2, NceSolution2, ProfitFunction};
pub use sim::{SimConfig, SimReport};
