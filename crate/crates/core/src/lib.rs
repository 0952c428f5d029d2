//! Collaborative hierarchical sparse coding (C-HiLasso) over grouped
//! dictionaries, with the pieces needed to identify and separate sources in
//! mixed audio and texture images.

pub mod audio;
pub mod dictlearn;
pub mod error;
pub mod gdict;
pub mod identify;
pub mod model;
pub mod prox;
pub mod solver;
pub mod synth;
pub mod texture;

pub use error::{Error, Result};
pub use model::{
    group_energies, objective_chilasso, objective_lasso, ActiveGroupSet, CoefficientMatrix,
    GroupPartition, GroupedDictionary, Lambda2Scaling, SampleId, SampleMatrix, SolverConfig,
};
pub use solver::{
    solve, solve_cglasso, solve_chilasso, solve_collab_lasso, solve_group_lasso, solve_lasso,
    Penalty, SolveResult,
};
