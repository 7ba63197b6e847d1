//! Finite-horizon Markov games with coupling constraints: occupancy measures,
//! modification classes, auxiliary MDPs, and constrained correlated equilibria.

pub mod aux_mdps;
pub mod dynamics;
pub mod equilibrium;
pub mod equivalence;
pub mod error;
pub mod examples;
pub mod format;
pub mod game;
pub mod lp;
pub mod modifications;
pub mod random;
pub mod reproduce;
pub mod table;

pub use dynamics::{compute_occupancy, OccupancyMeasure};
pub use equilibrium::{find_cce, verify_cce, EquilibriumCertificate, Verdict};
pub use error::{Error, Result};
pub use game::{ConstrainedMarkovGame, ConstraintMode, GameBuilder, GameReport, MarkovPolicy};
pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus};
pub use modifications::MarkovModification;
pub use table::{ActionSpace, StageArray};
