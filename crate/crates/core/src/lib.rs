//! Active learning of Mealy reward machines in partially observable
//! environments, with explicit-state MDP analysis.

pub mod driver;
pub mod env;
pub mod error;
pub mod lstar;
pub mod machine;
pub mod mdp;
pub mod product;
pub mod query;
pub mod solver;

pub use driver::{run_active_learning, DriverConfig, RunLog};
pub use error::{Error, Result};
pub use machine::{check_equivalence, Equivalence, MealyRewardMachine, NodeId};
pub use mdp::{Alphabet, LabelingFunction, Nrmdp, Observation};
