//! Spectral Faedo-Galerkin discretization of the sliced problem.
//!
//! The unknown is the three-component velocity on a rectangular slice,
//! expanded in a tensor sine basis. Incompressibility is imposed weakly by
//! a mass-orthogonal projection applied at every Runge-Kutta stage.

pub mod assembly;
pub mod basis;
pub mod integrate;
pub mod manufactured;
pub mod quadrature;

pub use assembly::{assemble, assemble_with_coupling, minimum_quadrature_order, OperatorTensors, SparseTrilinear};
pub use basis::SpectralBasis;
pub use integrate::{
    coercivity_check, integrate, project_divfree, project_field, project_function, sample_state, solve, stable_dt, step,
    ConstantForcing, FnForcing, Forcing, FrameForcing, GalerkinState, SolveOutput, TimeGrid, ZeroForcing,
};
pub use manufactured::{run_mms, ManufacturedForcing, ManufacturedSolution, MmsRun};
