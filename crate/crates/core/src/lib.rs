//! Conjecture-based incentive design for smooth N-player games.

pub mod catalog;
pub mod centralized;
pub mod conjecture;
pub mod consistency;
pub mod convexity;
pub mod decentralized;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod io;
pub mod numdiff;
pub mod objective;
pub mod optim;
pub mod polynomial;
pub mod profile;

pub use catalog::{make_coordination, make_olsder, make_saddle, make_tragedy, CatalogEntry, CatalogParams};
pub use conjecture::{
    conjectured_gradient, conjectured_objective, ConjectureEntry, ConjectureFamily, ConjectureSet, FamilyKind,
};
pub use centralized::{
    construct_feasible_point, construct_player_conjectures, induce_equilibrium, solve_centralized, uniform_families, verify_design, DesignMode,
    DesignProblem, DesignSolution, FamilyMap, InducedEquilibrium, SolveStatus, SolverOptions, VerificationReport,
};
pub use consistency::{check_consistency, ConsistencyReport, PairResidual};
pub use convexity::{check_pseudo_convexity, PseudoConvexityReport};
pub use decentralized::{
    assemble_decentralized, compute_targets, coordinator_select_target, player_multistart, player_solve,
    DecentralizedOutcome, PlayerInit, PlayerSolution, PlayerStatus, TargetAssignment,
};
pub use dynamics::{distance_curve, run_dynamics, Algorithm, DynamicsConfig, Trajectory};
pub use error::{Error, Result};
pub use game::{GameDefinition, NashPoint, PlayerObjective, PlayerSpec, PlayerView};
pub use objective::{CoordinatorObjective, ObjectiveKind};
pub use profile::{BoxDomain, PlayerId, Sense, StrategyProfile};
