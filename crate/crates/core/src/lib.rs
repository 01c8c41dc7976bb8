//! World-line quantum Monte Carlo for bosons and spinless fermions in a
//! harmonic trap on a one-dimensional optical lattice, with an exact
//! diagonalization oracle for small systems.

pub mod checkpoint;
pub mod ed_oracle;
pub mod model;
pub mod observables;
pub mod sampler;
pub mod worldline;

pub use model::{ModelParams, Species};
pub use observables::{ObservableAccumulator, Plateau, PlateauCriteria, Profile};
pub use sampler::{ChainOutput, RunPlan};
pub use worldline::{WeightModel, WorldlineConfig};
