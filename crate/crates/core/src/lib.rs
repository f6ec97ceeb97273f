//! Adaptive social learning: belief recursions over agent networks, network
//! descriptors, steady-state and transient analysis, Monte Carlo estimation
//! and nonstationary environments.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod graph;
pub mod models;
pub mod montecarlo;
pub mod nonstationary;
pub mod numerics;
pub mod presets;
pub mod rng;

pub use engine::{BeliefState, LogBeliefState, StrategyKind, TrajectoryRecord};
pub use error::{Error, Result};
pub use graph::{Adjacency, CombinationMatrix, NetworkAnalysis};
pub use models::{Family, GaussianFamily, LaplaceFamily, LikelihoodModel};
