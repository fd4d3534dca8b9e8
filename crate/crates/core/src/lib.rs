//! Spectral machinery for thin-film micromagnetics treated as a
//! constant-rank PDE constraint.
//!
//! - [`symbol`]: operator symbols, kernel projectors, limit operators.
//! - [`spectral`]: periodic fields, unitary DFTs, Fourier multipliers,
//!   A-free projections and the Helmholtz split.
//! - [`energy`]: the rescaled free energy, its magnetostatic solve and the
//!   thin-film limit functionals.
//! - [`minimize`]: sphere-constrained projected gradient descent.
//! - [`gamma`]: ε-sweeps, limit-space diagnostics and recovery sequences.

pub mod energy;
pub mod gamma;
pub mod minimize;
pub mod spectral;
pub mod symbol;

pub use energy::{AnisotropyModel, EnergyError, EnergyReport, MaterialParams, SampleGeometry};
pub use gamma::{GammaError, RecoveryInput, SweepRecord};
pub use minimize::{InitialState, MinimizeConfig, MinimizeError, MinimizeResult};
pub use spectral::{SpectralError, SpectralGrid, VectorField};
pub use symbol::{OperatorSpec, ProjectorMatrix, QMatrix, RankReport, SymbolError, SymbolMatrix};
